//! Batch evaluation: every method on every entry, per-record metrics and a
//! summary table with paired significance tests against the baseline.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use simsam_core::pipeline::{self, Aggregation, ClickSource, PipelineConfig};
use simsam_core::{
    bbox_from_mask, dsc, mean_std, nsd, wilcoxon_signed_rank, Clock, MeanStd, NsdConfig, PairedSample, SegmenterPrompt,
};

use crate::backend::{Backend, BackendConfig};
use crate::clock::SystemClock;
use crate::dataset::{self, DatasetManifest, Entry, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::io;

/// p-values below this get a `‡` in the text report.
pub const SIGNIFICANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Simsam,
    RandomQ,
    PixelAgg,
    K1,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Baseline, Method::Simsam, Method::RandomQ, Method::PixelAgg, Method::K1];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Simsam => "simsam",
            Method::RandomQ => "random_q",
            Method::PixelAgg => "pixel_agg",
            Method::K1 => "k1",
        }
    }

    /// Pipeline settings for this method on the `index`-th evaluated entry.
    pub fn pipeline_config(self, p: &PipelineSection, index: usize) -> PipelineConfig {
        let base = PipelineConfig {
            k: p.k,
            click_source: ClickSource::TopK,
            aggregation: Aggregation::Medoid,
            threshold: p.threshold,
        };
        match self {
            Method::Baseline => PipelineConfig { aggregation: Aggregation::None, ..base },
            Method::Simsam => base,
            Method::RandomQ => {
                PipelineConfig { click_source: ClickSource::Random { seed: p.seed.wrapping_add(index as u64) }, ..base }
            }
            Method::PixelAgg => PipelineConfig { aggregation: Aggregation::PixelMean, ..base },
            // A single candidate is its own medoid.
            Method::K1 => PipelineConfig { k: 1, ..base },
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    #[serde(alias = "validation")]
    Val,
    #[default]
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub manifest: PathBuf,
    #[serde(default)]
    pub split: SplitChoice,
    #[serde(default)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub k: usize,
    pub threshold: f64,
    /// Base seed of the random-click ablation.
    pub seed: u64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self { k: pipeline::DEFAULT_K, threshold: pipeline::DEFAULT_THRESHOLD, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub nsd_tolerance: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { nsd_tolerance: NsdConfig::default().tolerance() }
    }
}

/// Contents of an evaluation TOML file. Relative paths are resolved against
/// the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    /// Worker threads; 0 picks one per core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

impl EvalConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: EvalConfig =
            toml::from_str(&text).map_err(|e| Error::Toml { path: path.to_path_buf(), source: e })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset.manifest = base.join(&cfg.dataset.manifest);
        cfg.out_dir = base.join(&cfg.out_dir);
        cfg.backend.resolve_paths(base);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods listed".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::Config(format!("method `{m}` listed twice")));
            }
        }
        for m in &self.methods {
            m.pipeline_config(&self.pipeline, 0).validate()?;
        }
        NsdConfig::new(self.metrics.nsd_tolerance)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub entry_id: String,
    pub method: Method,
    pub dsc: f64,
    pub nsd: f64,
    pub latency_ms: f64,
    pub encodes: u64,
    pub decodes: u64,
    /// Metric conventions that applied, such as `empty_prediction`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Picks the entries to evaluate: the manifest's own split tags when every
/// entry has one, otherwise a seeded split.
pub fn select_entries(manifest: &DatasetManifest, section: &DatasetSection) -> Result<Vec<Entry>> {
    let which = match section.split {
        SplitChoice::All => return Ok(manifest.entries.clone()),
        SplitChoice::Train => Split::Train,
        SplitChoice::Val => Split::Val,
        SplitChoice::Test => Split::Test,
    };
    let splits = if !manifest.is_empty() && manifest.entries.iter().all(|e| e.split.is_some()) {
        dataset::split_by_tags(manifest)?
    } else {
        dataset::split(manifest, &SplitSpec::new(section.split_seed))?
    };
    Ok(splits.get(which).entries.clone())
}

fn eval_entry(backend: &Backend, cfg: &EvalConfig, index: usize, entry: &Entry) -> Result<Vec<EvalRecord>> {
    let image = io::load_image(&entry.image)?;
    let gt = entry.load_mask()?;
    let prompt = SegmenterPrompt::from_box(bbox_from_mask(&gt)?);
    let segmenter = backend.for_scene(entry.scene.as_deref())?;
    let nsd_cfg = NsdConfig::new(cfg.metrics.nsd_tolerance)?;
    cfg.methods
        .iter()
        .map(|&method| {
            let pcfg = method.pipeline_config(&cfg.pipeline, index);
            let clock = SystemClock::new();
            let out = pipeline::run(segmenter.as_ref(), &image, &prompt, &pcfg, &clock)?;
            let latency_ms = clock.now_ms();
            let mut flags = Vec::new();
            if out.final_mask.is_empty() {
                flags.push("empty_prediction".to_string());
            }
            Ok(EvalRecord {
                entry_id: entry.id.clone(),
                method,
                dsc: dsc(&out.final_mask, &gt)?,
                nsd: nsd(&out.final_mask, &gt, nsd_cfg)?,
                latency_ms,
                encodes: out.call_counts.0,
                decodes: out.call_counts.1,
                flags,
            })
        })
        .collect()
}

/// Runs every configured method on the selected entries. Records come back
/// in entry order, then method order, regardless of scheduling.
pub fn run_records(cfg: &EvalConfig, entries: &[Entry]) -> Result<Vec<EvalRecord>> {
    cfg.validate()?;
    let backend = Backend::load(&cfg.backend)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let per_entry: Vec<Vec<EvalRecord>> = pool.install(|| {
        entries.par_iter().enumerate().map(|(i, e)| eval_entry(&backend, cfg, i, e)).collect::<Result<_>>()
    })?;
    Ok(per_entry.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub n: usize,
    pub dsc: MeanStd,
    pub nsd: MeanStd,
    /// Two-sided Wilcoxon p against the baseline; `None` for the baseline
    /// itself or when it was not run.
    pub dsc_p: Option<f64>,
    pub nsd_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

fn metric(records: &[EvalRecord], method: Method, f: fn(&EvalRecord) -> f64) -> Vec<f64> {
    records.iter().filter(|r| r.method == method).map(f).collect()
}

impl ReportTable {
    /// `records` must hold one record per (entry, method) in a fixed entry
    /// order, as [`run_records`] returns them.
    pub fn build(methods: &[Method], records: &[EvalRecord]) -> Result<Self> {
        let has_baseline = methods.contains(&Method::Baseline);
        let base_dsc = metric(records, Method::Baseline, |r| r.dsc);
        let base_nsd = metric(records, Method::Baseline, |r| r.nsd);
        let p_vs_base = |method: Method, values: &[f64], base: &[f64]| -> Result<Option<f64>> {
            if !has_baseline || method == Method::Baseline {
                return Ok(None);
            }
            let s = PairedSample::new(values.to_vec(), base.to_vec())?;
            Ok(Some(wilcoxon_signed_rank(&s).p_value))
        };
        let rows = methods
            .iter()
            .map(|&m| {
                let d = metric(records, m, |r| r.dsc);
                let n = metric(records, m, |r| r.nsd);
                Ok(ReportRow {
                    method: m,
                    n: d.len(),
                    dsc: mean_std(&d)?,
                    nsd: mean_std(&n)?,
                    dsc_p: p_vs_base(m, &d, &base_dsc)?,
                    nsd_p: p_vs_base(m, &n, &base_nsd)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn row(&self, method: Method) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "n",
            "dsc_mean",
            "dsc_std",
            "nsd_mean",
            "nsd_std",
            "dsc_p_vs_baseline",
            "nsd_p_vs_baseline",
        ])?;
        let p = |v: Option<f64>| v.map(|p| format!("{p:.6e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.method.name().to_string(),
                r.n.to_string(),
                format!("{:.6}", r.dsc.mean),
                format!("{:.6}", r.dsc.std),
                format!("{:.6}", r.nsd.mean),
                format!("{:.6}", r.nsd.std),
                p(r.dsc_p),
                p(r.nsd_p),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV built from UTF-8 strings"))
    }

    /// Aligned table in percent; `‡` marks p < 0.01 against the baseline.
    pub fn to_text(&self) -> String {
        let cell = |m: &MeanStd, p: Option<f64>| {
            let mark = if p.is_some_and(|p| p < SIGNIFICANCE) { "‡" } else { "" };
            format!("{:.1} ± {:.1}{mark}", 100.0 * m.mean, 100.0 * m.std)
        };
        let pcell = |p: Option<f64>| p.map(|p| format!("{p:.2e}")).unwrap_or_else(|| "-".into());
        let header = ["method", "n", "DSC", "NSD", "p(DSC)", "p(NSD)"].map(String::from);
        let body: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.name().to_string(),
                    r.n.to_string(),
                    cell(&r.dsc, r.dsc_p),
                    cell(&r.nsd, r.nsd_p),
                    pcell(r.dsc_p),
                    pcell(r.nsd_p),
                ]
            })
            .collect();
        let mut widths = header.clone().map(|h| h.chars().count());
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&body) {
            let line: Vec<String> =
                row.iter().zip(widths).map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
            writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodTiming {
    pub method: Method,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub encodes_per_image: f64,
    pub decodes_per_image: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub methods: Vec<MethodTiming>,
    /// SimSAM over baseline, by median and by mean, when both ran.
    pub simsam_over_baseline_median: Option<f64>,
    pub simsam_over_baseline_mean: Option<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

impl TimingReport {
    pub fn build(methods: &[Method], records: &[EvalRecord]) -> Self {
        let timings: Vec<MethodTiming> = methods
            .iter()
            .filter_map(|&m| {
                let rs: Vec<&EvalRecord> = records.iter().filter(|r| r.method == m).collect();
                if rs.is_empty() {
                    return None;
                }
                let n = rs.len() as f64;
                let mut lat: Vec<f64> = rs.iter().map(|r| r.latency_ms).collect();
                Some(MethodTiming {
                    method: m,
                    mean_ms: lat.iter().sum::<f64>() / n,
                    median_ms: median(&mut lat),
                    encodes_per_image: rs.iter().map(|r| r.encodes as f64).sum::<f64>() / n,
                    decodes_per_image: rs.iter().map(|r| r.decodes as f64).sum::<f64>() / n,
                })
            })
            .collect();
        let get = |m: Method| timings.iter().find(|t| t.method == m);
        let ratio = |f: fn(&MethodTiming) -> f64| match (get(Method::Simsam), get(Method::Baseline)) {
            (Some(s), Some(b)) if f(b) > 0.0 => Some(f(s) / f(b)),
            _ => None,
        };
        let simsam_over_baseline_median = ratio(|t| t.median_ms);
        let simsam_over_baseline_mean = ratio(|t| t.mean_ms);
        Self { methods: timings, simsam_over_baseline_median, simsam_over_baseline_mean }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub table: ReportTable,
    pub records: Vec<EvalRecord>,
    pub timing: TimingReport,
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const CSV_FILE: &str = "report.csv";
pub const TEXT_FILE: &str = "report.txt";
pub const TIMING_FILE: &str = "timing.json";

/// Loads the manifest, evaluates and summarizes, without writing anything.
pub fn evaluate(cfg: &EvalConfig) -> Result<EvalOutcome> {
    cfg.validate()?;
    let manifest = dataset::load_manifest(&cfg.dataset.manifest)?;
    let entries = select_entries(&manifest, &cfg.dataset)?;
    if entries.is_empty() {
        return Err(Error::Dataset("the selected split is empty".into()));
    }
    log::info!("evaluating {} entries of `{}` with {} method(s)", entries.len(), manifest.name, cfg.methods.len());
    let records = run_records(cfg, &entries)?;
    Ok(EvalOutcome {
        table: ReportTable::build(&cfg.methods, &records)?,
        timing: TimingReport::build(&cfg.methods, &records),
        records,
    })
}

/// Writes the records, both report formats and the timing summary to `dir`.
/// Only the CSV and text reports are free of wall-clock values.
pub fn write_outcome(outcome: &EvalOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    let mut jsonl = String::new();
    for r in &outcome.records {
        jsonl.push_str(&serde_json::to_string(r).map_err(|e| Error::json("record", e))?);
        jsonl.push('\n');
    }
    write(RECORDS_FILE, jsonl)?;
    write(CSV_FILE, outcome.table.to_csv()?)?;
    write(TEXT_FILE, outcome.table.to_text())?;
    write(TIMING_FILE, serde_json::to_string_pretty(&outcome.timing).map_err(|e| Error::json("timing", e))? + "\n")
}

/// `eval --config <file>`.
pub fn cmd_eval(config: &Path) -> Result<EvalOutcome> {
    let cfg = EvalConfig::load(config)?;
    let outcome = evaluate(&cfg)?;
    write_outcome(&outcome, &cfg.out_dir)?;
    Ok(outcome)
}
