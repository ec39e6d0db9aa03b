mod support;

use std::fmt::Write;
use std::path::PathBuf;

use simsam_core::*;
use support::{check_golden, shape};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn noisy_disc() -> SyntheticScene {
    let truth = BinaryMask::from_fn(shape(32, 32), |r, c| {
        let (dr, dc) = (r as f64 - 15.5, c as f64 - 15.5);
        dr * dr + dc * dc <= 100.0
    });
    let params = SceneParams { noise_amplitude: 0.8, noise_seed: 7, ..SceneParams::default() };
    SyntheticScene::new(truth, params).unwrap()
}

#[test]
fn noisy_disc_box_only_dsc() {
    let sc = noisy_disc();
    let seg = SyntheticSegmenter::for_scene(sc.clone());
    let emb = seg.encode(&sc.render()).unwrap();
    let p = seg.decode(&emb, &SegmenterPrompt::from_box(bbox_from_mask(&sc.true_mask).unwrap())).unwrap();
    let d = dsc(&threshold(&p, 0.5).unwrap(), &sc.true_mask).unwrap();
    assert!(d < 1.0);
    check_golden(&golden("noisy_disc_dsc.txt"), &format!("{d:.12}\n"));
}

#[test]
fn noisy_disc_candidate_set() {
    let sc = noisy_disc();
    let seg = SyntheticSegmenter::for_scene(sc.clone());
    let cfg = PipelineConfig { k: 8, ..PipelineConfig::default() };
    let prompt = SegmenterPrompt::from_box(bbox_from_mask(&sc.true_mask).unwrap());
    let out = run(&seg, &sc.render(), &prompt, &cfg, &NoClock).unwrap();

    let mut text = String::new();
    for (i, (click, (p, m))) in out
        .candidates
        .clicks()
        .iter()
        .zip(out.candidates.prob_masks().iter().zip(out.candidates.bin_masks()))
        .enumerate()
    {
        let sum: f64 = p.values().iter().sum();
        let runs: Vec<String> = rle::encode(m).iter().map(u32::to_string).collect();
        writeln!(text, "{i} {} {} {:?} {sum:.9} {}", click.row, click.col, click.label, runs.join(",")).unwrap();
    }
    let sel = out.medoid.as_ref().unwrap();
    writeln!(text, "medoid {}", sel.index).unwrap();
    check_golden(&golden("noisy_disc_k8.txt"), &text);
}
