use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use simsam::dataset::{self, CorpusSpec};
use simsam::harness;
use simsam::scene::OracleSettings;
use simsam::segment::{self, BoxSource, SegmentArgs};
use simsam::service::{self, ServiceConfig};
use simsam::{Backend, BackendConfig};
use simsam_core::pipeline::PipelineConfig;
use simsam_core::ImageShape;

#[derive(Parser)]
#[command(version, about = "Click-simulation mask refinement for promptable segmenters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Synthetic,
    Neural,
}

#[derive(clap::Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "synthetic")]
    backend: BackendKind,
    /// Directory holding encoder.onnx and decoder.onnx.
    #[arg(long, required_if_eq("backend", "neural"))]
    model_dir: Option<PathBuf>,
}

impl BackendArgs {
    fn config(&self) -> BackendConfig {
        match self.backend {
            BackendKind::Synthetic => BackendConfig::Synthetic { oracle: OracleSettings::default() },
            BackendKind::Neural => {
                BackendConfig::Neural { model_dir: self.model_dir.clone().expect("clap enforces --model-dir") }
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate methods on a dataset as described by a TOML config.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Segment one image.
    Segment {
        #[arg(long)]
        image: PathBuf,
        /// Inclusive box `r0,c0,r1,c1`.
        #[arg(long = "box", conflicts_with = "auto_box_from", required_unless_present = "auto_box_from")]
        bbox: Option<String>,
        /// Use the tight box around this mask's foreground.
        #[arg(long)]
        auto_box_from: Option<PathBuf>,
        /// Synthetic scene descriptor to segment instead of the image's luminance.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = simsam_core::pipeline::DEFAULT_K)]
        k: usize,
        /// medoid, mean or none.
        #[arg(long, default_value = "medoid")]
        agg: String,
        /// topk or random.
        #[arg(long, default_value = "topk")]
        clicks: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = simsam_core::pipeline::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Skip writing one PNG per candidate.
        #[arg(long)]
        no_candidates: bool,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = service::DEFAULT_CAPACITY)]
        sessions: usize,
        #[arg(long, default_value_t = service::DEFAULT_MAX_SIDE)]
        max_side: u32,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Write a seeded synthetic corpus.
    Synth {
        #[arg(long)]
        count: usize,
        /// `HxW`, e.g. 64x64.
        #[arg(long, default_value = "64x64")]
        size: String,
        #[arg(long, default_value_t = 0.8)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_size(s: &str) -> anyhow::Result<ImageShape> {
    let (h, w) = s.split_once(['x', 'X']).with_context(|| format!("size `{s}` is not HxW"))?;
    Ok(ImageShape::new(h.trim().parse()?, w.trim().parse()?)?)
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIMSAM_LOG", "info")).init();
    match Cli::parse().command {
        Command::Eval { config } => {
            let outcome = harness::cmd_eval(&config)?;
            print!("{}", outcome.table.to_text());
            if let Some(r) = outcome.timing.simsam_over_baseline_median {
                println!("median latency, simsam / baseline: {r:.2}x");
            }
        }
        Command::Segment {
            image,
            bbox,
            auto_box_from,
            scene,
            k,
            agg,
            clicks,
            seed,
            threshold,
            out,
            no_candidates,
            backend,
        } => {
            let bbox = match (bbox, auto_box_from) {
                (Some(b), _) => BoxSource::Explicit(segment::parse_box(&b)?),
                (None, Some(m)) => BoxSource::FromMask(m),
                (None, None) => bail!("pass --box or --auto-box-from"),
            };
            let args = SegmentArgs {
                image,
                bbox,
                scene,
                backend: backend.config(),
                pipeline: PipelineConfig {
                    k,
                    click_source: segment::parse_click_source(&clicks, seed)?,
                    aggregation: segment::parse_aggregation(&agg)?,
                    threshold,
                },
                out: out.clone(),
                write_candidates: !no_candidates,
            };
            let s = segment::cmd_segment(&args)?;
            println!(
                "{} foreground pixels, {} candidates, {:.1} ms; wrote {}",
                s.foreground,
                s.candidates.len(),
                s.timing_ms.total,
                out.display()
            );
        }
        Command::Serve { port, host, sessions, max_side, backend } => {
            let backend = Backend::load(&backend.config())?;
            let config = ServiceConfig { capacity: sessions.max(1), max_side, ..ServiceConfig::default() };
            tokio::runtime::Runtime::new()?.block_on(service::cmd_serve(
                SocketAddr::new(host, port),
                backend,
                config,
            ))?;
        }
        Command::Synth { count, size, noise, seed, out } => {
            let spec = CorpusSpec { count, shape: parse_size(&size)?, noise_amplitude: noise, seed };
            let m = dataset::synth_corpus(&spec, &out)?;
            println!("wrote {} scenes to {}", m.len(), out.display());
        }
    }
    Ok(())
}
