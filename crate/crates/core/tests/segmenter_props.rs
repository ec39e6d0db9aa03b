mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simsam_core::*;
use support::{blob_mask, shape};

fn scene(seed: u64, h: usize, w: usize, noise: f64) -> SyntheticScene {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let truth = loop {
        let m = blob_mask(&mut r, shape(h, w));
        if !m.is_empty() {
            break m;
        }
    };
    let params = SceneParams { noise_amplitude: noise, noise_seed: seed, ..SceneParams::default() };
    SyntheticScene::new(truth, params).unwrap()
}

fn click_strategy() -> impl Strategy<Value = (usize, usize, bool)> {
    (0usize..24, 0usize..24, any::<bool>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_clicks_are_monotone(
        seed in 0u64..1000,
        prior in prop::collection::vec(click_strategy(), 0..3),
        (row, col, positive) in click_strategy(),
        gated in any::<bool>(),
    ) {
        let mut sc = scene(seed, 24, 24, 0.0);
        sc.params.region_gated = gated;
        let seg = SyntheticSegmenter::for_scene(sc.clone());
        let emb = seg.encode(&sc.render()).unwrap();
        let mut prompt = SegmenterPrompt::from_box(BoundingBox::full(sc.shape()));
        for (r, c, pos) in prior {
            let label = if pos { ClickLabel::Positive } else { ClickLabel::Negative };
            prompt = prompt.with_click(ClickPrompt::new(r, c, label));
        }
        let label = if positive { ClickLabel::Positive } else { ClickLabel::Negative };
        let before = seg.decode(&emb, &prompt).unwrap();
        let after = seg.decode(&emb, &prompt.with_click(ClickPrompt::new(row, col, label))).unwrap();
        for (a, b) in after.values().iter().zip(before.values()) {
            if positive {
                prop_assert!(a >= b);
            } else {
                prop_assert!(a <= b);
            }
        }
    }

    #[test]
    fn nothing_outside_the_box(
        seed in 0u64..1000,
        (r0, r1) in (0usize..24, 0usize..24),
        (c0, c1) in (0usize..24, 0usize..24),
        clicks in prop::collection::vec(click_strategy(), 0..4),
    ) {
        let sc = scene(seed, 24, 24, 0.8);
        let seg = SyntheticSegmenter::for_scene(sc.clone());
        let emb = seg.encode(&sc.render()).unwrap();
        let bbox = BoundingBox::new(r0.min(r1), c0.min(c1), r0.max(r1), c0.max(c1)).unwrap();
        let mut prompt = SegmenterPrompt::from_box(bbox);
        for (r, c, pos) in clicks {
            let label = if pos { ClickLabel::Positive } else { ClickLabel::Negative };
            prompt = prompt.with_click(ClickPrompt::new(r, c, label));
        }
        let fg = threshold(&seg.decode(&emb, &prompt).unwrap(), 0.5).unwrap();
        for i in fg.iter_ones() {
            let (r, c) = fg.shape().coords(i);
            prop_assert!(bbox.contains(r, c));
        }
    }

    #[test]
    fn decoding_is_deterministic(seed in 0u64..1000, (row, col) in (0usize..24, 0usize..24)) {
        let sc = scene(seed, 24, 24, 0.8);
        let prompt = SegmenterPrompt::from_box(BoundingBox::full(sc.shape()))
            .with_click(ClickPrompt::new(row, col, ClickLabel::Negative));
        let a = SyntheticSegmenter::for_scene(sc.clone());
        let b = SyntheticSegmenter::for_scene(sc.clone());
        let ea = a.encode(&sc.render()).unwrap();
        let eb = b.encode(&sc.render()).unwrap();
        let pa = a.decode(&ea, &prompt).unwrap();
        let pb = b.decode(&eb, &prompt).unwrap();
        prop_assert!(pa.values().iter().zip(pb.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn full_run_encodes_once(seed in 0u64..200, k in 1usize..20, pixel in any::<bool>()) {
        let sc = scene(seed, 20, 20, 0.8);
        let seg = SyntheticSegmenter::for_scene(sc.clone());
        let cfg = PipelineConfig {
            k,
            aggregation: if pixel { Aggregation::PixelMean } else { Aggregation::Medoid },
            ..PipelineConfig::default()
        };
        let prompt = SegmenterPrompt::from_box(bbox_from_mask(&sc.true_mask).unwrap());
        let out = run(&seg, &sc.render(), &prompt, &cfg, &NoClock).unwrap();
        prop_assert_eq!(out.call_counts, (1, k as u64 + 1));
        prop_assert_eq!(out.candidates.len(), k);
    }
}

/// Spearman correlation between the error indicator and the error transform,
/// pooled over noisy scenes.
#[test]
fn errors_concentrate_where_uncertainty_is_high() {
    let mut e_all = Vec::new();
    let mut err_all = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..40 {
        let sc = scene(rng.random(), 40, 40, 0.8 + 0.01 * i as f64);
        let seg = SyntheticSegmenter::for_scene(sc.clone());
        let emb = seg.encode(&sc.render()).unwrap();
        let p = seg.decode(&emb, &SegmenterPrompt::from_box(bbox_from_mask(&sc.true_mask).unwrap())).unwrap();
        let err = error_mask(&threshold(&p, 0.5).unwrap(), &sc.true_mask).unwrap();
        e_all.extend_from_slice(error_transform(&p).values());
        err_all.extend(err.to_bools().into_iter().map(|b| if b { 1.0 } else { 0.0 }));
    }
    let rho = spearman(&e_all, &err_all);
    println!("spearman(e, error) = {rho:.4}");
    assert!(rho > 0.0, "rank correlation {rho}");
}

fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (midranks(a), midranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
