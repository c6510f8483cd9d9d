use proptest::prelude::*;

use dmadmm::comm::CommGraph;
use dmadmm::disutility::{prox_step, Disutility, LoadBounds};
use dmadmm::harness::{
    run_offline_instance, AlgorithmKind, DisutilityKind, OfflineConfig, OfflineOptions, ScenarioConfig,
};
use dmadmm::oracle::{balance_mismatch, best_response, ProblemInstance};

fn disutility() -> impl Strategy<Value = Disutility> {
    prop_oneof![
        (0.1..5.0f64).prop_map(|q| Disutility::Quadratic { q }),
        (0.1..5.0f64, 0.0..3.0f64).prop_map(|(q, eta)| Disutility::KinkedQuadratic { q, eta }),
        (0.1..5.0f64, 0.1..5.0f64).prop_map(|(q_minus, q_plus)| Disutility::AsymmetricQuadratic { q_minus, q_plus }),
    ]
}

fn bounds() -> impl Strategy<Value = LoadBounds> {
    (-10.0..1.0f64, 0.0..12.0f64).prop_map(|(lo, w)| LoadBounds::new(lo, lo + w).unwrap())
}

proptest! {
    #[test]
    fn prox_stays_in_box(f in disutility(), b in bounds(), y in -20.0..20.0f64, rho in 1e-4..10.0f64, c in -20.0..20.0f64) {
        let x = prox_step(&f, &b, y, rho, c).unwrap();
        prop_assert!(b.contains(x));
    }

    #[test]
    fn prox_is_firmly_nonexpansive_in_center(
        f in disutility(), b in bounds(), y in -10.0..10.0f64, rho in 1e-3..10.0f64,
        c1 in -15.0..15.0f64, c2 in -15.0..15.0f64,
    ) {
        let x1 = prox_step(&f, &b, y, rho, c1).unwrap();
        let x2 = prox_step(&f, &b, y, rho, c2).unwrap();
        let scale = 1e-9 * (1.0 + c1.abs() + c2.abs());
        prop_assert!((x1 - x2) * (c1 - c2) >= (x1 - x2).powi(2) - scale);
    }

    #[test]
    fn subgradients_are_monotone(f in disutility(), a in -10.0..10.0f64, d in 0.0..5.0f64) {
        let (_, hi_a) = f.subgradient_interval(a);
        let (lo_b, _) = f.subgradient_interval(a + d);
        prop_assert!(hi_a <= lo_b + 1e-12);
        let (lo, hi) = f.subgradient_interval(a);
        prop_assert!(lo <= hi);
    }

    #[test]
    fn best_response_non_increasing(f in disutility(), b in bounds(), y in -20.0..20.0f64, dy in 0.0..5.0f64) {
        let lo = best_response(&f, &b, y + dy).unwrap();
        let hi = best_response(&f, &b, y).unwrap();
        prop_assert!(lo <= hi);
    }

    #[test]
    fn balance_mismatch_non_increasing(
        fs in prop::collection::vec(disutility(), 1..8), y in -20.0..20.0f64, dy in 0.0..5.0f64,
    ) {
        let n = fs.len();
        let p = ProblemInstance::new(fs, vec![LoadBounds::new(-5.0, 5.0).unwrap(); n], 0.0).unwrap();
        prop_assert!(balance_mismatch(&p, y + dy).unwrap() <= balance_mismatch(&p, y).unwrap());
    }

    #[test]
    fn neighborhoods_are_symmetric(
        (n, i, j) in (1usize..40).prop_flat_map(|n| (Just(n), 0..n, 0..n)), n0 in 0usize..10,
    ) {
        let g = CommGraph::Grid1d { n0 };
        let i_sees_j = g.neighbors(n, i).unwrap().contains(&j);
        let j_sees_i = g.neighbors(n, j).unwrap().contains(&i);
        prop_assert_eq!(i_sees_j, j_sees_i);
    }

    #[test]
    fn config_round_trips(
        n in 1usize..500, seed in any::<u64>(), rho in 1e-5..1.0f64, noise in any::<bool>(),
        n0 in prop::option::of(0usize..10), model in 0usize..4, algo in 0usize..4, horizon in 0.0..500.0f64,
    ) {
        let mut cfg = ScenarioConfig { n_loads: n, seed, noise, horizon_s: horizon, ..Default::default() };
        cfg.algorithm.rho = rho;
        cfg.comm = n0.map_or(CommGraph::None, |n0| CommGraph::Grid1d { n0 });
        cfg.disutility.model = [
            DisutilityKind::Quadratic,
            DisutilityKind::KinkedQuadratic,
            DisutilityKind::AsymmetricQuadratic,
            DisutilityKind::Mixed,
        ][model];
        cfg.algorithm.kind = [AlgorithmKind::Dmadmm, AlgorithmKind::Pjadmm, AlgorithmKind::Dual, AlgorithmKind::None][algo];
        let parsed = ScenarioConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(parsed, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn offline_certificate_holds_on_random_instances(
        fs in prop::collection::vec(disutility(), 2..6),
        widths in prop::collection::vec(0.5..5.0f64, 6),
        fraction in 0.05..0.95f64,
    ) {
        let n = fs.len();
        let bs: Vec<LoadBounds> = widths[..n].iter().map(|&w| LoadBounds::new(0.0, w).unwrap()).collect();
        let c = fraction * bs.iter().map(|b| b.upper).sum::<f64>();
        let p = ProblemInstance::new(fs, bs, c).unwrap();
        let xi = dmadmm::algorithms::strong_convexity_xi(&p).unwrap();
        let rho = dmadmm::algorithms::step_size_bound(xi, n);
        let mut opts = OfflineOptions::new(rho, &OfflineConfig::default());
        opts.max_iterations = 20_000;
        let report = run_offline_instance(&p, &opts).unwrap();
        prop_assert!(report.lyapunov_ok, "margin {}", report.min_lyapunov_margin);
        prop_assert!(report.objective_bound_ok, "slack {}", report.min_objective_bound_slack);
        prop_assert!(report.dual_consensus_ok);
    }
}
