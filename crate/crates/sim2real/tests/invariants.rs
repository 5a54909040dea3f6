//! Property-based checks of the library's invariants.

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::sample::subsequence;

use sim2real::properties::{local_infidelity, local_stability, sparsity, InfidelityConfig, StabilityConfig};
use sim2real::proxy_human::{build_human_input, fit_tree, DecisionTree};
use sim2real::tasks::{
    categorize_test_points, label_forbidden, near_boundary, sample_training_points, BoundaryMargins,
};
use sim2real::{
    dot_with_intercept, mean_ci95, round_sig, Attribution, ExplainerKind, Explainers, FunctionId, GroundTruth,
    LocalFitConfig, MemoryKind, MemoryModel, RngStream, TaskKind, TestCategory,
};

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, dim)
}

fn attribution(dim: usize) -> impl Strategy<Value = Attribution> {
    (prop::collection::vec(-5.0..5.0f64, dim), -5.0..5.0f64).prop_map(|(w, b)| Attribution::new(w, b).unwrap())
}

fn function() -> impl Strategy<Value = GroundTruth> {
    prop_oneof![Just(FunctionId::Box), Just(FunctionId::Piece)].prop_map(GroundTruth::builtin)
}

fn fast_fit() -> LocalFitConfig {
    LocalFitConfig {
        n_samples: 200,
        global_samples: 2000,
        ..LocalFitConfig::default()
    }
}

fn explainers(id: FunctionId) -> Explainers {
    Explainers::new(GroundTruth::builtin(id), fast_fit(), &RngStream::new(3, "invariants")).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rounding_is_idempotent_and_keeps_sign(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL, k in 1u32..6) {
        // Values just below the largest float may round past it.
        prop_assume!(v.abs() < 1e307);
        let r = round_sig(v, k).unwrap();
        prop_assert_eq!(round_sig(r, k).unwrap(), r);
        prop_assert_eq!(r.is_sign_negative(), v.is_sign_negative());
        prop_assert_eq!(round_sig(0.0, k).unwrap(), 0.0);
    }

    #[test]
    fn inner_product_is_linear(
        x in point(4), y in point(4), e in attribution(4), g in attribution(4), a in -3.0..3.0f64
    ) {
        let tol = 1e-9;
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + a * q).collect();
        // Linear in the weights, with the intercept entering once.
        let lhs = dot_with_intercept(&xy, &e).unwrap();
        let rhs = dot_with_intercept(&x, &e).unwrap() + a * (dot_with_intercept(&y, &e).unwrap() - e.intercept);
        prop_assert!((lhs - rhs).abs() < tol);
        let eg = Attribution::from_entries(
            &e.entries().iter().zip(g.entries()).map(|(p, q)| p + a * q).collect::<Vec<_>>(),
        ).unwrap();
        let lhs = dot_with_intercept(&x, &eg).unwrap();
        let rhs = dot_with_intercept(&x, &e).unwrap() + a * dot_with_intercept(&x, &g).unwrap();
        prop_assert!((lhs - rhs).abs() < tol);
    }

    #[test]
    fn summary_of_copies_is_exact(c in -1e6..1e6f64, n in 1usize..50) {
        let s = mean_ci95(&vec![c; n]).unwrap();
        prop_assert_eq!((s.mean, s.ci95_halfwidth, s.n), (c, 0.0, n));
    }

    #[test]
    fn streams_replay_bitwise(seed: u64, label in "[a-z/]{0,12}") {
        use rand::Rng;
        let draws = |s: &RngStream| -> Vec<u64> {
            let mut rng = s.rng();
            (0..8).map(|_| rng.random()).collect()
        };
        let s = RngStream::new(seed, label.clone());
        prop_assert_eq!(draws(&s), draws(&RngStream::new(seed, label)));
    }

    #[test]
    fn predictions_are_binary_and_regions_partition(f in function(), x in point(10)) {
        let x = &x[..f.dim()];
        prop_assert!(f.predict(x).unwrap() <= 1);
        let region = f.region_of(x).unwrap().region;
        let s = f.switch_feature();
        let cuts = f.cuts();
        let hits = (0..=cuts.len())
            .filter(|i| {
                let lo = if *i == 0 { f64::NEG_INFINITY } else { cuts[i - 1] };
                let hi = cuts.get(*i).copied().unwrap_or(f64::INFINITY);
                lo < x[s] && x[s] <= hi
            })
            .collect::<Vec<_>>();
        prop_assert_eq!(hits, vec![region - 1]);
    }

    #[test]
    fn piece_agrees_with_its_active_row(x in point(10)) {
        let f = GroundTruth::builtin(FunctionId::Piece);
        let row = f.region_of(&x).unwrap().active_weights.unwrap();
        let expected = u8::from(dot_with_intercept(&x, &row).unwrap() > 0.0);
        prop_assert_eq!(f.predict(&x).unwrap(), expected);
        prop_assert!(!f.uses_feature(&x, 0).unwrap());
    }

    #[test]
    fn box_forbidden_label_is_constant(x in point(3)) {
        let f = GroundTruth::builtin(FunctionId::Box);
        prop_assert_eq!(label_forbidden(&f, &x, 2).unwrap(), 1);
    }

    #[test]
    fn sparsity_ignores_order_and_scale(
        e in attribution(6), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(), c in 0.1..10.0f64
    ) {
        let permuted = Attribution::new(perm.iter().map(|i| e.weights[*i]).collect(), e.intercept).unwrap();
        let scaled = Attribution::from_entries(&e.entries().iter().map(|v| v * c).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(sparsity(&permuted), sparsity(&e));
        prop_assert_eq!(sparsity(&scaled), sparsity(&e));
    }

    #[test]
    fn infidelity_is_a_fraction(f in function(), x in point(10), e in attribution(10), seed: u64) {
        let x = &x[..f.dim()];
        let e = Attribution::new(e.weights[..f.dim()].to_vec(), e.intercept).unwrap();
        let cfg = InfidelityConfig { radius: 0.2, n_samples: 50 };
        let v = local_infidelity(&e, &f, x, &cfg, &mut RngStream::new(seed, "inf").rng()).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn greedy_tree_stays_within_depth_and_ignores_row_order(
        rows in prop::collection::vec(prop::collection::vec(0u8..4, 3), 1..12),
        labels in prop::collection::vec(0u8..2, 12),
        seed: u64,
    ) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
        let labels = labels[..rows.len()].to_vec();
        let tree = fit_tree(&rows, &labels, 2).unwrap();
        prop_assert!(tree.depth() <= 2);
        prop_assert!(tree.internal_nodes() <= 3 && tree.leaves() <= 4);

        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut RngStream::new(seed, "order").rng());
        let rows2: Vec<Vec<f64>> = order.iter().map(|i| rows[*i].clone()).collect();
        let labels2: Vec<u8> = order.iter().map(|i| labels[*i]).collect();
        prop_assert_eq!(fit_tree(&rows2, &labels2, 2).unwrap(), tree.clone());

        // Greedy depth 2 never does worse than the best single split.
        let correct = |t: &DecisionTree| rows.iter().zip(&labels).filter(|(r, y)| t.predict(r) == **y).count();
        let best_stump = (0..3)
            .flat_map(|f| (0..4).map(move |t| (f, f64::from(t) + 0.5)))
            .map(|(f, t)| {
                let mut c = [[0usize; 2]; 2];
                for (r, y) in rows.iter().zip(&labels) {
                    c[usize::from(r[f] > t)][*y as usize] += 1;
                }
                c[0][0].max(c[0][1]) + c[1][0].max(c[1][1])
            })
            .max()
            .unwrap();
        prop_assert!(correct(&tree) >= best_stump);
    }

    #[test]
    fn categories_partition_candidates(
        verdicts in prop::collection::vec(prop::collection::vec(any::<bool>(), 20), 2..5),
        kinds in subsequence(ExplainerKind::ALL.to_vec(), 4),
    ) {
        let kinds = &kinds[..verdicts.len().min(kinds.len())];
        prop_assume!(kinds.len() >= 2);
        let correct: BTreeMap<ExplainerKind, Vec<bool>> =
            kinds.iter().copied().zip(verdicts.iter().cloned()).collect();
        let best = kinds[0];
        let cats = categorize_test_points(&correct, best).unwrap();
        prop_assert_eq!(cats.len(), 20);
        for (i, c) in cats.iter().enumerate() {
            let b = correct[&best][i];
            let agree = correct.values().all(|v| v[i] == b);
            let expected = if agree {
                TestCategory::Same
            } else if b {
                TestCategory::BestBetter
            } else {
                TestCategory::BestWorse
            };
            prop_assert_eq!(*c, expected);
        }
    }
}

proptest! {
    // These cases fit local surrogates, so keep the count modest.
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constant_kinds_are_constant_and_sparse_kinds_are_sparse(x in point(10), y in point(10)) {
        for id in FunctionId::ALL {
            let ex = explainers(id);
            let d = ex.function().dim();
            let (x, y) = (&x[..d], &y[..d]);
            for kind in [ExplainerKind::Robust, ExplainerKind::SparseRobust] {
                prop_assert_eq!(ex.explain(kind, x).unwrap(), ex.explain(kind, y).unwrap());
            }
            for kind in [ExplainerKind::Sparse, ExplainerKind::SparseRobust] {
                let e = ex.explain(kind, x).unwrap();
                prop_assert!(sparsity(&e) <= 2);
                prop_assert!(e.weights.iter().filter(|w| **w != 0.0).count() <= 1);
            }
        }
    }

    #[test]
    fn faithful_piece_rows_are_exact(x in point(10)) {
        let ex = explainers(FunctionId::Piece);
        let row = ex.function().region_of(&x).unwrap().active_weights.unwrap();
        prop_assert_eq!(ex.faithful(&x).unwrap(), row);
    }

    #[test]
    fn stability_scales_with_the_explanation(x in point(10), seed: u64, c in prop_oneof![Just(0.0), Just(0.5), Just(4.0), 0.1..10.0f64]) {
        let ex = explainers(FunctionId::Piece);
        let cfg = StabilityConfig { radius: 2.0, n_perturbations: 40 };
        let scale = |e: Attribution| Attribution::from_entries(&e.entries().iter().map(|v| v * c).collect::<Vec<_>>()).unwrap();
        let base = local_stability(|p: &[f64]| ex.faithful(p).unwrap(), &x, &cfg, &mut RngStream::new(seed, "s").rng()).unwrap();
        let scaled = local_stability(|p: &[f64]| scale(ex.faithful(p).unwrap()), &x, &cfg, &mut RngStream::new(seed, "s").rng()).unwrap();
        prop_assert!((scaled - c * base).abs() <= 1e-12 * base.max(1.0) * c.max(1.0));
        let robust = local_stability(|_: &[f64]| ex.robust().clone(), &x, &cfg, &mut RngStream::new(seed, "s").rng()).unwrap();
        prop_assert_eq!(robust, 0.0);
    }

    #[test]
    fn human_input_is_rounding_stable_and_memory_touches_only_the_inner_product(
        f in function(), x in point(10), e in attribution(10), forbidden in 0usize..3
    ) {
        let d = f.dim();
        let x = &x[..d];
        let e = Attribution::new(e.weights[..d].to_vec(), e.intercept).unwrap();
        for task in [TaskKind::ForwardPrediction, TaskKind::ForbiddenFeatures { feature: forbidden }] {
            let lim = build_human_input(&task, x, &e, &f, MemoryModel::new(MemoryKind::Limited)).unwrap();
            let unl = build_human_input(&task, x, &e, &f, MemoryModel::new(MemoryKind::Unlimited)).unwrap();
            for h in [&lim, &unl] {
                prop_assert!(h.values.iter().all(|v| round_sig(*v, 1).unwrap() == *v));
            }
            prop_assert_eq!(&lim.values[1..], &unl.values[1..]);
        }
    }

    #[test]
    fn training_points_sit_near_the_boundary(f in function(), seed: u64, forbidden in prop::bool::ANY) {
        let task = if forbidden {
            TaskKind::ForbiddenFeatures { feature: 2 }
        } else {
            TaskKind::ForwardPrediction
        };
        let margins = BoundaryMargins { delta: 0.05, score: 0.1 };
        let pts = sample_training_points(&f, &task, 10, &margins, &mut RngStream::new(seed, "t").rng()).unwrap();
        prop_assert_eq!(pts.len(), 10);
        prop_assert!(pts.iter().all(|x| near_boundary(&f, x, &margins)));
    }
}

#[test]
fn piece_forbidden_label_takes_both_values() {
    let f = GroundTruth::builtin(FunctionId::Piece);
    let mut rng = RngStream::new(9, "both").rng();
    let mut seen = [false; 2];
    for _ in 0..1000 {
        let x = sim2real::sampling::uniform_cube(&mut rng, 10);
        seen[label_forbidden(&f, &x, 3).unwrap() as usize] = true;
    }
    assert_eq!(seen, [true, true]);
}

#[test]
fn each_constant_kind_wins_stability_and_each_sparse_kind_wins_sparsity() {
    let ex = explainers(FunctionId::Box);
    let mut rng = RngStream::new(4, "wins").rng();
    let cfg = StabilityConfig {
        radius: 0.1,
        n_perturbations: 30,
    };
    let mut stab: BTreeMap<ExplainerKind, f64> = BTreeMap::new();
    let mut sparse: BTreeMap<ExplainerKind, usize> = BTreeMap::new();
    for _ in 0..10 {
        let x = sim2real::sampling::uniform_cube(&mut rng, 3);
        for kind in ExplainerKind::ALL {
            let s = local_stability(|p: &[f64]| ex.explain(kind, p).unwrap(), &x, &cfg, &mut rng).unwrap();
            *stab.entry(kind).or_default() += s;
            *sparse.entry(kind).or_default() += sparsity(&ex.explain(kind, &x).unwrap());
        }
    }
    assert!(ExplainerKind::ALL
        .iter()
        .all(|k| stab[&ExplainerKind::Robust] <= stab[k]));
    assert!(ExplainerKind::ALL
        .iter()
        .all(|k| sparse[&ExplainerKind::Sparse] <= sparse[k]));
}
