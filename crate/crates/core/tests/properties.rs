//! Property tests over randomly generated inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;

use dlimim::cli::io::{read_draws, write_draws, write_matrix, RawTable};
use dlimim::design::{build_cross_basis, modifier_index, time_contraction, CrossBasis};
use dlimim::metrics::{cumulative_metrics, pointwise_metrics};
use dlimim::posterior::{pointwise_effect_draws, summarize_effects};
use dlimim::priors::normalize_weights;
use dlimim::sampler::PosteriorDraws;
use dlimim::simulation::{simulate_cohort, true_effect, Scenario, ScenarioSpec};
use dlimim::spline::{evaluate_basis, make_spec, KnotPlacement};

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spline_is_deterministic_and_location_consistent(
        df in 1usize..8,
        a in prop::collection::vec(0.0f64..1.0, 1..20),
        b in prop::collection::vec(-0.5f64..1.5, 1..20),
    ) {
        let spec = make_spec(df, (0.0, 1.0), KnotPlacement::EquallySpaced).unwrap();
        let joined: Vec<f64> = a.iter().chain(&b).copied().collect();
        let whole = evaluate_basis(&spec, &joined).unwrap().values;
        prop_assert_eq!(&whole, &evaluate_basis(&spec, &joined).unwrap().values);
        let top = evaluate_basis(&spec, &a).unwrap().values;
        let bottom = evaluate_basis(&spec, &b).unwrap().values;
        prop_assert_eq!(whole.rows(0, a.len()).clone_owned(), top);
        prop_assert_eq!(whole.rows(a.len(), b.len()).clone_owned(), bottom);
        prop_assert!(whole.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn spline_span_contains_constants(df in 1usize..8, pts in prop::collection::vec(0.0f64..1.0, 12..30)) {
        let b = evaluate_basis(&make_spec(df, (0.0, 1.0), KnotPlacement::EquallySpaced).unwrap(), &pts).unwrap().values;
        let ones = nalgebra::DVector::from_element(pts.len(), 1.0);
        let coef = b.clone().svd(true, true).solve(&ones, 1e-12).unwrap();
        prop_assert!((&b * coef - ones).norm() < 1e-10);
    }

    #[test]
    fn normalization_is_scale_invariant(
        a in prop::collection::vec(0.01f64..10.0, 1..8),
        c in 1e-3f64..1e3,
    ) {
        let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
        let (r1, r2) = (normalize_weights(&a).unwrap(), normalize_weights(&scaled).unwrap());
        for (x, y) in r1.iter().zip(&r2) {
            prop_assert!((x - y).abs() <= 1e-15);
        }
        prop_assert!((r1.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn contraction_matches_triple_sum(
        x in matrix(6, 8, 0.0, 5.0),
        m in matrix(6, 3, 0.0, 1.0),
        a in prop::collection::vec(0.01f64..5.0, 3),
    ) {
        let basis = CrossBasis::new(4, 3, 8).unwrap();
        let rho = normalize_weights(&a).unwrap();
        let m_star = modifier_index(&m, &rho).unwrap();
        let b = basis.modifier.evaluate(m_star.as_slice()).unwrap().values;
        let w = build_cross_basis(&time_contraction(&x, &basis.c).unwrap(), &b).unwrap().w;
        for i in 0..6 {
            for k in 0..4 {
                for j in 0..3 {
                    let s: f64 = (0..8).map(|t| x[(i, t)] * basis.c[(t, j)] * b[(i, k)]).sum();
                    prop_assert!((w[(i, k * 3 + j)] - s).abs() <= 1e-10 * s.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn pointwise_transformation_is_linear(
        t1 in matrix(5, 12, -2.0, 2.0),
        t2 in matrix(5, 12, -2.0, 2.0),
        m in 0.0f64..1.0,
    ) {
        let basis = CrossBasis::new(3, 4, 10).unwrap();
        let f = |t: &DMatrix<f64>| pointwise_effect_draws(t, m, &basis.modifier, &basis.c).unwrap();
        let sum = f(&(&t1 + &t2));
        let parts = f(&t1) + f(&t2);
        for (x, y) in sum.iter().zip(parts.iter()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn grid_refinement_keeps_existing_points(theta in matrix(20, 9, -1.0, 1.0), extra in 0.0f64..1.0) {
        let basis = CrossBasis::new(3, 3, 12).unwrap();
        let coarse = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let mut fine = coarse.clone();
        fine.push(extra);
        let a = summarize_effects(&theta, &basis, &coarse, 0.05).unwrap();
        let b = summarize_effects(&theta, &basis, &fine, 0.05).unwrap();
        prop_assert_eq!(a.pointwise_mean, b.pointwise_mean.rows(0, 5).clone_owned());
        prop_assert_eq!(a.pointwise_lower, b.pointwise_lower.rows(0, 5).clone_owned());
        prop_assert_eq!(&a.cumulative_upper[..], &b.cumulative_upper[..5]);
        for g in 0..b.m_grid.len() {
            prop_assert!(b.cumulative_lower[g] <= b.cumulative_mean[g] && b.cumulative_mean[g] <= b.cumulative_upper[g]);
        }
    }

    #[test]
    fn metrics_ignore_draw_order(
        truth in prop::collection::vec(-1.0f64..1.0, 4),
        draws in matrix(9, 4, -2.0, 2.0),
        perm in Just((0..9usize).collect::<Vec<_>>()).prop_shuffle(),
        alpha in 0.01f64..0.5,
    ) {
        let shuffled = DMatrix::from_fn(9, 4, |s, j| draws[(perm[s], j)]);
        let a = cumulative_metrics(&truth, &draws, alpha).unwrap();
        let b = cumulative_metrics(&truth, &shuffled, alpha).unwrap();
        prop_assert!((a.rmse - b.rmse).abs() < 1e-12 && a.coverage == b.coverage && (a.width - b.width).abs() < 1e-12);
        let beta_true = DMatrix::from_row_slice(1, 4, &truth);
        let p1 = pointwise_metrics(&beta_true, &[draws], alpha).unwrap();
        let p2 = pointwise_metrics(&beta_true, &[shuffled], alpha).unwrap();
        prop_assert!(p1.coverage == p2.coverage && (p1.width - p2.width).abs() < 1e-12);
    }

    #[test]
    fn coverage_is_monotone_in_alpha(
        truth in prop::collection::vec(-1.0f64..1.0, 6),
        draws in matrix(15, 6, -1.5, 1.5),
        a1 in 0.01f64..0.99,
        a2 in 0.01f64..0.99,
    ) {
        let (small, large) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let wide = cumulative_metrics(&truth, &draws, small).unwrap();
        let narrow = cumulative_metrics(&truth, &draws, large).unwrap();
        prop_assert!(wide.coverage >= narrow.coverage);
        prop_assert!(wide.width >= narrow.width - 1e-12);
        prop_assert!((0.0..=1.0).contains(&wide.coverage) && wide.width >= 0.0 && wide.rmse >= 0.0);
    }

    #[test]
    fn matrix_csv_round_trip(m in matrix(4, 3, -1e6, 1e6), tiny in -1e-300f64..1e-300) {
        let mut m = m;
        m[(0, 0)] = tiny;
        m[(1, 1)] = std::f64::consts::PI;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let header: Vec<String> = (1..=3).map(|j| format!("c{j}")).collect();
        write_matrix(&path, &header, &m).unwrap();
        let back = RawTable::read(&path).unwrap().all_numeric().unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn draws_csv_round_trip(
        theta in matrix(3, 4, -10.0, 10.0),
        gamma in matrix(3, 2, -10.0, 10.0),
        sigma2 in prop::collection::vec(1e-6f64..5.0, 3),
        a in matrix(3, 2, 0.0, 3.0),
    ) {
        let eta = a.map(|v| u8::from(v != 0.0));
        let draws = PosteriorDraws {
            chain_id: 0,
            seed: 0,
            iterations: vec![1, 2, 3],
            theta,
            gamma,
            sigma2: Some(sigma2),
            a,
            eta,
            accept_count: vec![0; 2],
            attempt_count: vec![0; 2],
            blocked_deaths: 0,
            final_zeta: vec![0.0; 2],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.csv");
        write_draws(&path, &draws).unwrap();
        let (_, back) = read_draws(&path, 0).unwrap();
        prop_assert_eq!(back.theta, draws.theta);
        prop_assert_eq!(back.gamma, draws.gamma);
        prop_assert_eq!(back.sigma2, draws.sigma2);
        prop_assert_eq!(back.a, draws.a);
        prop_assert_eq!(back.eta, draws.eta);
        prop_assert_eq!(back.iterations, draws.iterations);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulation_is_reproducible_and_consistent(seed in 0u64..1_000, scenario in 0usize..3) {
        let id = [Scenario::Equal, Scenario::Different, Scenario::Sparse][scenario];
        let l = if id == Scenario::Sparse { 10 } else { 3 };
        let spec = ScenarioSpec::new(id, l, 1.0, 40, 2, seed).unwrap();
        let a = simulate_cohort(&spec, 1).unwrap();
        prop_assert_eq!(&a, &simulate_cohort(&spec, 1).unwrap());
        for i in 0..40 {
            for t in 1..=spec.times {
                prop_assert_eq!(a.beta_true[(i, t - 1)], true_effect(t, a.m_star_true[i]));
            }
        }
        for l in 0..a.data.modifiers() {
            let col = a.data.m.column(l);
            prop_assert_eq!(col.min(), 0.0);
            prop_assert_eq!(col.max(), 1.0);
        }
        prop_assert!((a.rho_true.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
