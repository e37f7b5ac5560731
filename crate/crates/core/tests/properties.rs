use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use scenecut::data::{
    generate_synthetic_movie, manifest::manifest_to_string, manifest::parse_manifest, validate_manifest, Modality,
    SyntheticConfig,
};
use scenecut::grouping::{
    brute_force_oracle, dp_optimal_partition, initial_super_shots, run_grouping, scene_score, weight_gradient_check,
    GroupingConfig, InitCount, PartitionSearch, PrecedingSet, SceneCountRange, SuperShotSet,
};
use scenecut::metrics::{average_precision, boundary_recall, miou};
use scenecut::sequence::{binarize, window_spans};
use proptest::prelude::*;

fn reps(max_k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (3..=max_k, prop_oneof![Just(2usize), Just(8usize)]).prop_flat_map(|(k, d)| {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), k)
    })
}

fn search() -> impl Strategy<Value = (usize, usize, f64, PrecedingSet)> {
    (
        1usize..5,
        0usize..6,
        prop_oneof![Just(f64::INFINITY), Just(10.0), Just(1.5)],
        prop_oneof![Just(PrecedingSet::Preceding), Just(PrecedingSet::Symmetric)],
    )
        .prop_map(|(lo, span, beta, mode)| (lo, lo + span, beta, mode))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dp_equals_exhaustive_search(r in reps(10), (lo, hi, beta, mode) in search()) {
        let set = SuperShotSet::from_representations(r);
        let s = PartitionSearch { j_min: lo, j_max: hi, beta, preceding: mode };
        match (dp_optimal_partition(&set, &s), brute_force_oracle(&set, &s)) {
            (Ok(dp), Ok(bf)) => {
                prop_assert!((dp.score - bf.score).abs() <= 1e-9, "{} vs {}", dp.score, bf.score);
                prop_assert_eq!(&dp.scenes, &bf.scenes);
                prop_assert!(dp.j() >= lo && dp.j() <= hi && dp.j() < set.len());
            }
            (Err(_), Err(_)) => prop_assert!(set.len() <= lo),
            (a, b) => prop_assert!(false, "dp {:?} vs oracle {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn optimum_is_scale_invariant(r in reps(9), lambda in 0.01f64..100.0, (lo, hi, beta, mode) in search()) {
        prop_assume!(r.len() > lo);
        let s = PartitionSearch { j_min: lo, j_max: hi, beta, preceding: mode };
        let scaled: Vec<Vec<f64>> = r.iter().map(|v| v.iter().map(|x| x * lambda).collect()).collect();
        let a = dp_optimal_partition(&SuperShotSet::from_representations(r), &s).unwrap();
        let b = dp_optimal_partition(&SuperShotSet::from_representations(scaled), &s).unwrap();
        prop_assert!((a.score - b.score).abs() <= 1e-9 * (1.0 + a.score.abs()));
        prop_assert_eq!(a.scenes, b.scenes);
    }

    #[test]
    fn singleton_and_pair_scores_ignore_decay(v in prop::collection::vec(-1.0f64..1.0, 4), u in prop::collection::vec(-1.0f64..1.0, 4), beta in 0.1f64..50.0) {
        prop_assert_eq!(scene_score(&[&v], beta, PrecedingSet::Preceding), 0.0);
        let a = scene_score(&[&v, &u], beta, PrecedingSet::Preceding);
        let b = scene_score(&[&v, &u], f64::INFINITY, PrecedingSet::Preceding);
        // exp(-1/beta) scales the second member's term
        prop_assert!((a - (-1.0 / beta).exp() * b).abs() < 1e-12);
    }

    #[test]
    fn grouping_output_is_consistent(seed in 0u64..500, j_lo in 2usize..4, extra in 0usize..4) {
        let cfg = SyntheticConfig {
            n_scenes_range: (3, 6),
            shots_per_scene_range: (2, 6),
            modality_dims: [(Modality::Place, 3), (Modality::Cast, 2)].into_iter().collect(),
            noise_sigma: [(Modality::Place, 0.4), (Modality::Cast, 0.4)].into_iter().collect(),
            seed,
            ..Default::default()
        };
        let m = generate_synthetic_movie(&cfg).unwrap();
        let n = m.n_shots();
        let feats = Arc::new(scenecut::grouping::grouping_features(&m));
        let p: Vec<f64> = (0..n - 1).map(|i| ((i as f64 * 12.9898 + seed as f64).sin() * 43758.5453).fract().abs()).collect();
        let init = n.min(j_lo + extra + 3);
        let g = GroupingConfig {
            init_count: InitCount::Fixed(init),
            scene_count: SceneCountRange::Fixed { min: j_lo, max: j_lo + extra },
            k_set: 5,
            k_para: 3,
            ..GroupingConfig::default()
        };
        prop_assume!(g.validate().is_ok());
        let initial = initial_super_shots(feats.clone(), &p, init).unwrap();
        let mut rounds = Vec::new();
        let out = run_grouping(feats, &p, &g, |_, set| rounds.push(set.ranges())).unwrap();
        for ranges in &rounds {
            prop_assert_eq!(ranges[0].0, 0);
            prop_assert_eq!(ranges.last().unwrap().1, n - 1);
            prop_assert!(ranges.windows(2).all(|w| w[0].1 + 1 == w[1].0));
        }
        let cuts: BTreeSet<usize> = (0..n - 1).filter(|&i| out.bits[i] == 1).map(|i| i + 1).collect();
        prop_assert_eq!(cuts.len() + 1, out.final_set.len());
        let init_cuts: BTreeSet<usize> = initial.cuts().into_iter().collect();
        prop_assert!(cuts.is_subset(&init_cuts));
        if initial.len() > j_lo {
            prop_assert!(out.final_set.len() >= j_lo && out.final_set.len() <= j_lo + extra);
        }
        prop_assert!(out.converged);
    }

    #[test]
    fn weight_gradient_matches_finite_differences(
        feats in prop::collection::vec(prop::collection::vec(0.1f64..1.0, 3), 7),
        w in prop::collection::vec(0.2f64..1.0, 7),
        beta in prop_oneof![Just(f64::INFINITY), Just(3.0)],
    ) {
        let set = SuperShotSet::new(Arc::new(feats), &[(0, 1), (2, 4), (5, 6)]).unwrap();
        let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
        let set = set.with_weights(vec![norm(&w[0..2]), norm(&w[2..5]), norm(&w[5..7])]).unwrap();
        // keep away from thread-term argmax ties
        let c = set.cosine_matrix();
        prop_assume!((c[2][0] - c[2][1]).abs() > 1e-3);
        let part = scenecut::grouping::ScenePartition { scenes: vec![(0, 2)], score: 0.0 };
        let err = weight_gradient_check(&set, &part, beta, PrecedingSet::Preceding, 1e-6, None).unwrap();
        prop_assert!(err < 1e-4, "{}", err);
    }

    #[test]
    fn manifests_round_trip_bit_exactly(seed in any::<u64>(), sigma in 0.0f64..1.0) {
        let cfg = SyntheticConfig { seed, n_scenes_range: (1, 4), shots_per_scene_range: (2, 5), ..Default::default() }.with_noise(sigma);
        let m = generate_synthetic_movie(&cfg).unwrap();
        prop_assert!(validate_manifest(&m).is_empty());
        let text = manifest_to_string(&m).unwrap();
        let back = parse_manifest(&text, Path::new("mem")).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(manifest_to_string(&back).unwrap(), text);
    }

    #[test]
    fn generated_movies_match_their_plan(seed in any::<u64>()) {
        let cfg = SyntheticConfig { seed, ..Default::default() }.with_noise(0.0);
        let m = generate_synthetic_movie(&cfg).unwrap();
        let ids = m.gt_scene_ids().unwrap();
        let n_scenes = ids.last().unwrap() + 1;
        prop_assert_eq!(m.gt_boundaries.as_ref().unwrap().len(), n_scenes - 1);
        for w in m.shots.windows(2) {
            prop_assert!((w[0].end_s - w[1].start_s).abs() < 1e-9);
        }
        for s in &m.shots {
            for v in s.features.values() {
                let n: f64 = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn metrics_stay_in_range_and_behave(
        gt in prop::collection::vec(0u8..2, 1..40),
        pred_seed in prop::collection::vec(0u8..2, 40),
        scores in prop::collection::vec(0.0f64..1.0, 40),
        w1 in 0.0f64..5.0,
        w2 in 0.0f64..5.0,
    ) {
        let n = gt.len();
        let pred = &pred_seed[..n];
        let scores = &scores[..n];
        let times: Vec<f64> = (1..=n).map(|i| 1.7 * i as f64).collect();
        let m = miou(pred, &gt, n + 1).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert_eq!(m, miou(&gt, pred, n + 1).unwrap());
        prop_assert_eq!(miou(&gt, &gt, n + 1).unwrap(), 1.0);
        let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
        if let (Some(a), Some(b)) = (
            boundary_recall(pred, &gt, &times, lo).unwrap(),
            boundary_recall(pred, &gt, &times, hi).unwrap(),
        ) {
            prop_assert!(a <= b && (0.0..=1.0).contains(&a) && b <= 1.0);
            prop_assert_eq!(boundary_recall(&gt, &gt, &times, lo).unwrap(), Some(1.0));
        }
        let ap = average_precision(scores, &gt).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|&s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(ap, average_precision(&squashed, &gt).unwrap());
        if let Some(ap) = ap {
            prop_assert!(ap > 0.0 && ap <= 1.0);
            let perfect: Vec<f64> = gt.iter().map(|&g| g as f64).collect();
            prop_assert_eq!(average_precision(&perfect, &gt).unwrap(), Some(1.0));
        }
    }

    #[test]
    fn raising_tau_never_adds_positives(p in prop::collection::vec(0.0f64..1.0, 0..50), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let x = binarize(&p, lo);
        let y = binarize(&p, hi);
        prop_assert!(x.iter().zip(&y).all(|(&u, &v)| v <= u));
    }

    #[test]
    fn windows_cover_every_boundary(len in 1usize..200, half in 1usize..8) {
        let w_t = 2 * half;
        let spans = window_spans(len, w_t);
        let mut seen = vec![false; len];
        for &(s, e) in &spans {
            prop_assert!(e <= len && s < e && e - s <= w_t);
            seen[s..e].iter_mut().for_each(|x| *x = true);
        }
        prop_assert!(seen.iter().all(|&x| x));
        prop_assert_eq!(spans.last().unwrap().1, len);
    }
}
