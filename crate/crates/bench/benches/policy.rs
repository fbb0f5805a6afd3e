use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use risra_core::channel::sample_direct;
use risra_core::engine::{run_frame, DEFAULT_SKIP_CAP};
use risra_core::phy::greedy_schedule;
use risra_core::rng::{substream, Domain};
use risra_core::strategy::{decide_layer1, McParams};
use risra_core::{Strategy, StrategyKind, System, SystemConfig, ThetaEstimator};

fn desk_estimator(n_cascade_samples: usize) -> ThetaEstimator {
    let system = Arc::new(System::new(SystemConfig::desk()).expect("valid desk config"));
    ThetaEstimator::new(
        system,
        &McParams {
            n_cascade_samples,
            n_outer_samples: 50,
            seed: 1,
        },
    )
}

fn bench_policy(c: &mut Criterion) {
    let estimator = desk_estimator(1000);
    let system = estimator.system().clone();
    let direct = sample_direct(&system, &mut substream(1, Domain::Bench, 0), 4);
    let schedule = greedy_schedule(&direct).expect("nonempty");

    c.bench_function("greedy_schedule_4x4", |b| {
        b.iter(|| greedy_schedule(black_box(&direct)))
    });
    c.bench_function("theta_one_level_1000", |b| {
        b.iter(|| estimator.theta(black_box(&schedule), 6, 5.0, &direct))
    });
    c.bench_function("decide_layer1_all_levels_1000", |b| {
        b.iter(|| decide_layer1(&estimator, black_box(5.0), &direct))
    });

    let strategy = Strategy::new(StrategyKind::Proposed, Some(15.0), desk_estimator(300)).expect("threshold given");
    let mut frame = 0u64;
    c.bench_function("run_frame_proposed_desk", |b| {
        b.iter(|| {
            frame += 1;
            run_frame(&strategy, &mut substream(2, Domain::Bench, frame), DEFAULT_SKIP_CAP)
        })
    });
}

criterion_group!(benches, bench_policy);
criterion_main!(benches);
