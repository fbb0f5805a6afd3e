use std::sync::Arc;

use proptest::prelude::*;

use risra_core::baselines::solve_threshold;
use risra_core::engine::{read_csv, run_frames, run_simulation, sweep, write_csv, FrameEnd, DEFAULT_SKIP_CAP};
use risra_core::strategy::{FixedPointProblem, McParams};
use risra_core::{
    ActionSet, Error, OfflineSolution, Settings, SolverParams, Strategy, StrategyKind, System, SystemConfig,
    ThetaEstimator,
};

fn small_settings() -> Settings {
    Settings::from_parts(
        &SystemConfig::desk(),
        &McParams {
            n_cascade_samples: 150,
            n_outer_samples: 30,
            seed: 9,
        },
        &SolverParams::default(),
    )
}

#[test]
fn toml_to_solution_round_trip() {
    let text = small_settings().to_toml();
    let settings = Settings::from_toml_str(&text).unwrap();
    let estimator = ThetaEstimator::new(Arc::new(settings.system().unwrap()), &settings.mc());
    let sol = solve_threshold(StrategyKind::Proposed, &estimator, &settings.mc(), &settings.solver())
        .unwrap()
        .unwrap();
    assert!(sol.lambda_star > 0.0);
    assert_eq!(sol.trace.last().unwrap().lambda, sol.lambda_star);
    let json = serde_json::to_string(&sol).unwrap();
    let back: OfflineSolution = serde_json::from_str(&json).unwrap();
    assert_eq!(back, sol);
}

#[test]
fn restricted_thresholds_never_exceed_full() {
    let settings = small_settings();
    let estimator = ThetaEstimator::new(Arc::new(settings.system().unwrap()), &settings.mc());
    let full = solve_threshold(StrategyKind::Proposed, &estimator, &settings.mc(), &settings.solver())
        .unwrap()
        .unwrap();
    for kind in [StrategyKind::OptstopElementwise, StrategyKind::OptstopFullarray] {
        let sol = solve_threshold(kind, &estimator, &settings.mc(), &settings.solver())
            .unwrap()
            .unwrap();
        assert!(matches!(sol.action_set, ActionSet::ProbeOnly { .. }));
        assert!(
            sol.lambda_star <= full.lambda_star + 1e-3,
            "{kind}: {} > {}",
            sol.lambda_star,
            full.lambda_star
        );
    }
    for kind in [StrategyKind::DirectOnly, StrategyKind::DirectRisFull] {
        assert!(solve_threshold(kind, &estimator, &settings.mc(), &settings.solver())
            .unwrap()
            .is_none());
    }
}

#[test]
fn proposed_outperforms_direct_only() {
    let settings = small_settings();
    let estimator = ThetaEstimator::new(Arc::new(settings.system().unwrap()), &settings.mc());
    let lambda = solve_threshold(StrategyKind::Proposed, &estimator, &settings.mc(), &settings.solver())
        .unwrap()
        .unwrap()
        .lambda_star;
    let proposed = Strategy::new(StrategyKind::Proposed, Some(lambda), estimator.clone()).unwrap();
    let direct = Strategy::new(StrategyKind::DirectOnly, None, estimator).unwrap();
    let p = run_simulation(&proposed, 3000, 4, DEFAULT_SKIP_CAP).unwrap();
    let d = run_simulation(&direct, 3000, 4, DEFAULT_SKIP_CAP).unwrap();
    assert!(p.throughput > d.throughput, "{} vs {}", p.throughput, d.throughput);
    assert!(p.probes_per_frame > 0.0);
    assert_eq!(d.probes_per_frame, 0.0);
}

#[test]
fn sweep_rows_follow_grid_and_strategy_order() {
    let mut settings = small_settings();
    settings.sweep_tx_power_dbm = vec![20.0, 32.0];
    let kinds = [StrategyKind::DirectOnly, StrategyKind::Proposed];
    let rows = sweep(&settings, &settings.grid(), &kinds, 200, 3).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].strategy, StrategyKind::DirectOnly);
    assert_eq!(rows[1].strategy, StrategyKind::Proposed);
    assert_eq!(rows[0].lambda_star_used, None);
    assert!(rows[1].lambda_star_used.is_some());
    assert_eq!(rows[2].tx_power_dbm, 32.0);
    assert_ne!(rows[0].config_hash, rows[2].config_hash);
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows, true).unwrap();
    assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
}

#[test]
fn residual_changes_sign_around_solution() {
    let settings = small_settings();
    let estimator = ThetaEstimator::new(Arc::new(settings.system().unwrap()), &settings.mc());
    let problem = FixedPointProblem::new(estimator, &settings.mc(), ActionSet::Full).unwrap();
    let sol = problem.solve(&settings.solver()).unwrap();
    assert!(problem.residual(0.9 * sol.lambda_star) > 0.0);
    assert!(problem.residual(1.1 * sol.lambda_star) < 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frames_end_once_and_account_exactly(
        k in 1usize..8,
        s in 1usize..6,
        c in 1usize..4,
        level in 2u32..6,
        lambda in 0.0f64..4.0,
        kind_index in 0usize..5,
        seed in 0u64..1000,
    ) {
        let cfg = SystemConfig {
            n_users: k,
            n_preambles: s.max(k.min(2)),
            n_subchannels: c,
            ..SystemConfig::desk().with_elements(1 << level)
        };
        let system = Arc::new(System::new(cfg).unwrap());
        let estimator = ThetaEstimator::new(system.clone(), &McParams { n_cascade_samples: 40, n_outer_samples: 5, seed });
        let kind = StrategyKind::ALL[kind_index];
        let strategy = Strategy::new(kind, Some(lambda), estimator).unwrap();
        // a threshold above every reachable rate legitimately never stops
        let traces = match run_frames(&strategy, seed, 0, 20, 20_000) {
            Err(Error::SkipCapExceeded(_)) => return Ok(()),
            other => other.unwrap(),
        };
        for t in traces {
            prop_assert!(t.n_rr_phases >= 1);
            prop_assert!(t.traffic >= 0.0);
            prop_assert!(t.duration >= system.config.coherence_time_s + system.config.rr_duration_s);
            prop_assert!(t.probes.windows(2).all(|w| w[0].0 < w[1].0));
            prop_assert!(t.probes.iter().all(|p| p.0 <= t.n_rr_phases));
            if let FrameEnd::Ris { level } = t.end {
                prop_assert_eq!(t.probes.last().copied(), Some((t.n_rr_phases, level)));
            }
            if kind == StrategyKind::DirectOnly {
                prop_assert!(t.probes.is_empty());
            }
        }
    }
}
