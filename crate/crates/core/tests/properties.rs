mod support;

use proptest::prelude::*;
use simsam_core::*;
use support::shape;

/// Probabilities on the `2^-53` grid, where `1 - p` is exact.
fn prob() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u64..=1 << 53).prop_map(|k| k as f64 / (1u64 << 53) as f64),
        Just(0.0),
        Just(0.5),
        Just(1.0),
        (0u32..=16).prop_map(|k| k as f64 / 16.0),
    ]
}

fn mask(max: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max, 1..=max)
        .prop_flat_map(|(h, w)| (Just(shape(h, w)), prop::collection::vec(any::<bool>(), h * w)))
        .prop_map(|(s, v)| BinaryMask::from_bools(s, &v).unwrap())
}

fn mask_pair(max: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        let v = || prop::collection::vec(any::<bool>(), h * w);
        (v(), v()).prop_map(move |(a, b)| {
            (BinaryMask::from_bools(shape(h, w), &a).unwrap(), BinaryMask::from_bools(shape(h, w), &b).unwrap())
        })
    })
}

fn prob_map(max: usize) -> impl Strategy<Value = ProbabilityMask> {
    (1..=max, 1..=max)
        .prop_flat_map(|(h, w)| (Just(shape(h, w)), prop::collection::vec(prob(), h * w)))
        .prop_map(|(s, v)| ProbabilityMask::new(s, v).unwrap())
}

fn one(p: f64) -> f64 {
    error_transform(&ProbabilityMask::new(shape(1, 1), vec![p]).unwrap()).values()[0]
}

proptest! {
    #[test]
    fn error_transform_laws(p in prob()) {
        let e = one(p);
        prop_assert_eq!(e, one(1.0 - p));
        prop_assert!((0.0..=0.5).contains(&e));
        prop_assert_eq!(e == 0.5, p == 0.5);
        prop_assert_eq!(e == 0.0, p == 0.0 || p == 1.0);
    }

    #[test]
    fn top_k_full_covers_every_pixel(p in prob_map(8)) {
        let e = error_transform(&p);
        let n = p.shape().len();
        let clicks = top_k_clicks(&e, &p, n).unwrap();
        let mut seen = vec![false; n];
        let mut last = f64::INFINITY;
        for c in &clicks {
            let i = p.shape().index(c.row, c.col);
            prop_assert!(!seen[i]);
            seen[i] = true;
            prop_assert!(e.values()[i] <= last);
            last = e.values()[i];
        }
        prop_assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn click_labels_correct_the_prediction(p in prob_map(8), k in 1usize..10) {
        let k = k.min(p.shape().len());
        let fg = threshold(&p, 0.5).unwrap();
        for c in top_k_clicks(&error_transform(&p), &p, k).unwrap()
            .into_iter()
            .chain(random_clicks(p.shape(), &p, k, 3).unwrap())
        {
            prop_assert_eq!(c.label == ClickLabel::Positive, !fg.get(c.row, c.col));
        }
    }

    #[test]
    fn bbox_is_tight(m in mask(12)) {
        prop_assume!(!m.is_empty());
        let b = bbox_from_mask(&m).unwrap();
        let s = m.shape();
        for i in m.iter_ones() {
            let (r, c) = s.coords(i);
            prop_assert!(b.contains(r, c));
        }
        let any = |f: &dyn Fn(usize, usize) -> bool| m.iter_ones().any(|i| { let (r, c) = s.coords(i); f(r, c) });
        prop_assert!(any(&|r, _| r == b.row_min));
        prop_assert!(any(&|r, _| r == b.row_max));
        prop_assert!(any(&|_, c| c == b.col_min));
        prop_assert!(any(&|_, c| c == b.col_max));
    }

    #[test]
    fn overlap_symmetry_and_order((a, b) in mask_pair(10)) {
        let (i, d) = (iou(&a, &b).unwrap(), dsc(&a, &b).unwrap());
        prop_assert_eq!(i, iou(&b, &a).unwrap());
        prop_assert_eq!(d, dsc(&b, &a).unwrap());
        prop_assert!(d >= i);
        prop_assert_eq!(d == i, i == 0.0 || i == 1.0);
        let cfg = NsdConfig::default();
        prop_assert_eq!(nsd(&a, &b, cfg).unwrap(), nsd(&b, &a, cfg).unwrap());
    }

    #[test]
    fn nsd_grows_with_tolerance((a, b) in mask_pair(12), t in 0.0f64..6.0, dt in 0.0f64..3.0) {
        let lo = nsd(&a, &b, NsdConfig::new(t).unwrap()).unwrap();
        let hi = nsd(&a, &b, NsdConfig::new(t + dt).unwrap()).unwrap();
        prop_assert!(lo <= hi);
        prop_assert!((0.0..=1.0).contains(&lo));
    }

    #[test]
    fn rle_round_trip(m in mask(20)) {
        let runs = rle::encode(&m);
        prop_assert_eq!(runs.iter().map(|&r| r as usize).sum::<usize>(), m.shape().len());
        prop_assert_eq!(rle::decode(m.shape(), &runs).unwrap(), m);
    }

    #[test]
    fn wilcoxon_swap_and_shift(
        pairs in prop::collection::vec((-20i32..20, -20i32..20), 1..30),
        shift in -50i32..50,
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let s = PairedSample::new(a.clone(), b.clone()).unwrap();
        let r = wilcoxon_signed_rank(&s);
        let w = wilcoxon_signed_rank(&s.swapped());
        prop_assert_eq!(r.p_value, w.p_value);
        prop_assert_eq!((r.w_plus, r.w_minus), (w.w_minus, w.w_plus));
        let shifted = PairedSample::new(
            a.iter().map(|x| x + shift as f64).collect(),
            b.iter().map(|x| x + shift as f64).collect(),
        ).unwrap();
        prop_assert_eq!(wilcoxon_signed_rank(&shifted), r);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn medoid_membership_and_idempotence(
        masks in (1usize..8, 1usize..8).prop_flat_map(|(h, w)| {
            prop::collection::vec(prop::collection::vec(any::<bool>(), h * w), 1..12)
                .prop_map(move |v| v.into_iter().map(|b| BinaryMask::from_bools(shape(h, w), &b).unwrap()).collect::<Vec<_>>())
        }),
        rotate in 0usize..12,
    ) {
        let set = |ms: &[BinaryMask]| {
            let probs = ms.iter().map(|m| {
                ProbabilityMask::new(m.shape(), m.to_bools().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).unwrap()
            }).collect();
            CandidateSet::new(vec![ClickPrompt::new(0, 0, ClickLabel::Positive); ms.len()], probs, 0.5).unwrap()
        };
        let sel = select_medoid(&set(&masks)).unwrap();
        let chosen = aggregate_medoid(&set(&masks)).unwrap();
        prop_assert!(masks.contains(&chosen));

        // Copies of one mask give that mask back.
        let copies = vec![masks[0].clone(); masks.len()];
        prop_assert_eq!(aggregate_medoid(&set(&copies)).unwrap(), masks[0].clone());

        // The winning score survives a reordering of the pool.
        let mut rotated = masks.clone();
        rotated.rotate_left(rotate % masks.len());
        let sel2 = select_medoid(&set(&rotated)).unwrap();
        prop_assert!((sel.scores[sel.index] - sel2.scores[sel2.index]).abs() < 1e-12);
    }
}
