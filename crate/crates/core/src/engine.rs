//! Frame-based simulation.
//!
//! A frame is a sequence of RR phases, each optionally followed by a probing
//! phase, and ends with exactly one data transmission. Contention and all
//! channel gains are redrawn in every RR phase, so frames are i.i.d. and the
//! long-run throughput is `Σ Y / Σ T` over frames.
//!
//! Frame `f` draws all its randomness from stream `(Frame, f)` of the run
//! seed, so results do not depend on the number of worker threads.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{solve_threshold, Strategy, StrategyKind};
use crate::channel::{group_link, sample_direct, sample_link_products};
use crate::contention::simulate_rr;
use crate::error::{Error, Result};
use crate::model::System;
use crate::phy::{aligned_magnitude, link_rate};
use crate::rng::{substream, Domain};
use crate::settings::Settings;
use crate::strategy::{Layer1, Layer2, ThetaEstimator};

pub const DEFAULT_SKIP_CAP: u64 = 1_000_000;

/// How a frame's data transmission was carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameEnd {
    Direct,
    Ris { level: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    /// `N`
    pub n_rr_phases: u64,
    /// `(RR phase index, level)` of every probe, 1-based; includes the final
    /// phase when the frame ends with RIS-aided transmission.
    pub probes: Vec<(u64, u32)>,
    /// `Y_N`, bit/Hz
    pub traffic: f64,
    /// `T_N`, seconds
    pub duration: f64,
    pub end: FrameEnd,
    /// Sum rate used in the final transmission, bit/s/Hz.
    pub final_rate: f64,
}

/// `T_N = N·τ_RA + Σ_{probed l<N} τ_CE(J_l) + T_c`.
pub fn frame_duration(system: &System, n_rr_phases: u64, probes: &[(u64, u32)]) -> f64 {
    let mut t = n_rr_phases as f64 * system.config.rr_duration_s;
    for &(phase, level) in probes {
        if phase < n_rr_phases {
            t += system.probe_cost(level);
        }
    }
    t + system.config.coherence_time_s
}

pub fn run_frame<R: Rng + ?Sized>(strategy: &Strategy, rng: &mut R, skip_cap: u64) -> Result<FrameTrace> {
    let system = strategy.system();
    let cfg = &system.config;
    let t_c = cfg.coherence_time_s;
    let mut probes = Vec::new();
    let mut link = Vec::with_capacity(cfg.n_elements);
    let mut n = 0u64;
    loop {
        n += 1;
        if n > skip_cap {
            return Err(Error::SkipCapExceeded(n - 1));
        }
        let grant = simulate_rr(rng, cfg.n_users, cfg.n_preambles);
        if grant.is_empty() {
            continue;
        }
        let direct = sample_direct(system, rng, grant.n_granted());
        let outcome = strategy.first_layer(&direct)?;
        let (end, rate, traffic) = match outcome.decision {
            Layer1::TransmitDirect => (FrameEnd::Direct, outcome.rd_star, outcome.rd_star * t_c),
            Layer1::Skip => continue,
            Layer1::Probe { level, schedule } => {
                probes.push((n, level));
                let b = system.derived.subarray_size(level)?;
                let mut rate = 0.0;
                for (c, u) in schedule.pairs() {
                    sample_link_products(system, rng, &mut link);
                    let grouped = group_link(&link, b);
                    rate += link_rate(system.mean_snr(), aligned_magnitude(direct.get(u, c), &grouped));
                }
                match strategy.second_layer(rate) {
                    Layer2::TransmitRis => (FrameEnd::Ris { level }, rate, (t_c - system.probe_cost(level)) * rate),
                    Layer2::Skip => continue,
                }
            }
        };
        return Ok(FrameTrace {
            n_rr_phases: n,
            duration: frame_duration(system, n, &probes),
            probes,
            traffic,
            end,
            final_rate: rate,
        });
    }
}

/// Frames `first..first + count` of a run, in order.
pub fn run_frames(strategy: &Strategy, seed: u64, first: u64, count: u64, skip_cap: u64) -> Result<Vec<FrameTrace>> {
    (first..first + count)
        .into_par_iter()
        .map(|f| run_frame(strategy, &mut substream(seed, Domain::Frame, f), skip_cap))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub strategy: StrategyKind,
    pub n_frames: u64,
    pub total_traffic: f64,
    pub total_time: f64,
    /// `total_traffic / total_time`, bit/s/Hz.
    pub throughput: f64,
    /// 95% half-width of the ratio estimator (delta method).
    pub ci_half_width: f64,
    pub seed: u64,
    pub lambda_used: Option<f64>,
    pub mean_rr_phases: f64,
    pub probes_per_frame: f64,
    pub ris_frame_fraction: f64,
}

impl SimulationReport {
    pub fn from_traces(strategy: &Strategy, seed: u64, traces: &[FrameTrace]) -> Self {
        let n = traces.len() as f64;
        let total_traffic: f64 = traces.iter().map(|t| t.traffic).sum();
        let total_time: f64 = traces.iter().map(|t| t.duration).sum();
        let throughput = if total_time > 0.0 {
            total_traffic / total_time
        } else {
            0.0
        };
        let ci_half_width = if traces.len() > 1 {
            let mean_t = total_time / n;
            let ss: f64 = traces
                .iter()
                .map(|t| {
                    let e = t.traffic - throughput * t.duration;
                    e * e
                })
                .sum();
            1.96 * (ss / (n * (n - 1.0))).sqrt() / mean_t
        } else {
            f64::INFINITY
        };
        Self {
            strategy: strategy.kind(),
            n_frames: traces.len() as u64,
            total_traffic,
            total_time,
            throughput,
            ci_half_width,
            seed,
            lambda_used: strategy.lambda(),
            mean_rr_phases: traces.iter().map(|t| t.n_rr_phases as f64).sum::<f64>() / n,
            probes_per_frame: traces.iter().map(|t| t.probes.len() as f64).sum::<f64>() / n,
            ris_frame_fraction: traces.iter().filter(|t| matches!(t.end, FrameEnd::Ris { .. })).count() as f64 / n,
        }
    }
}

pub fn run_simulation(strategy: &Strategy, n_frames: u64, seed: u64, skip_cap: u64) -> Result<SimulationReport> {
    assert!(n_frames >= 1);
    let traces = run_frames(strategy, seed, 0, n_frames, skip_cap)?;
    Ok(SimulationReport::from_traces(strategy, seed, &traces))
}

/// One CSV row: a (grid point, strategy) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: StrategyKind,
    #[serde(rename = "P_t_dbm")]
    pub tx_power_dbm: f64,
    #[serde(rename = "T_c_s")]
    pub coherence_time_s: f64,
    #[serde(rename = "M")]
    pub n_elements: usize,
    pub n_frames: u64,
    pub throughput: f64,
    pub ci_half_width: f64,
    pub seed: u64,
    pub lambda_star_used: Option<f64>,
    pub config_hash: String,
}

impl ReportRow {
    pub fn new(system: &System, report: &SimulationReport, config_hash: String) -> Self {
        Self {
            strategy: report.strategy,
            tx_power_dbm: system.config.tx_power_dbm,
            coherence_time_s: system.config.coherence_time_s,
            n_elements: system.config.n_elements,
            n_frames: report.n_frames,
            throughput: report.throughput,
            ci_half_width: report.ci_half_width,
            seed: report.seed,
            lambda_star_used: report.lambda_used,
            config_hash,
        }
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[ReportRow], header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Grid coordinates; `None` keeps the base value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GridPoint {
    pub tx_power_dbm: Option<f64>,
    pub coherence_time_s: Option<f64>,
    pub n_elements: Option<usize>,
}

impl GridPoint {
    pub fn apply(&self, base: &Settings) -> Settings {
        let mut s = base.clone();
        if let Some(p) = self.tx_power_dbm {
            s.tx_power_dbm = p;
        }
        if let Some(t) = self.coherence_time_s {
            s.coherence_time_s = t;
        }
        if let Some(m) = self.n_elements {
            s.n_elements = m;
            s.max_grouping_level = None;
        }
        s
    }
}

/// Cartesian product of the three axes; an empty axis keeps the base value.
pub fn cartesian_grid(tx_power_dbm: &[f64], coherence_time_s: &[f64], n_elements: &[usize]) -> Vec<GridPoint> {
    fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
        if v.is_empty() {
            vec![None]
        } else {
            v.iter().copied().map(Some).collect()
        }
    }
    let mut points = Vec::new();
    for &p in &axis(tx_power_dbm) {
        for &t in &axis(coherence_time_s) {
            for &m in &axis(n_elements) {
                points.push(GridPoint {
                    tx_power_dbm: p,
                    coherence_time_s: t,
                    n_elements: m,
                });
            }
        }
    }
    points
}

/// Solves each strategy's threshold at every point and simulates it.
///
/// Rows come out point by point, strategies in the given order. All
/// strategies at a point share the `Θ` pool and the frame seed.
pub fn sweep(
    base: &Settings,
    points: &[GridPoint],
    strategies: &[StrategyKind],
    n_frames: u64,
    seed: u64,
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for point in points {
        let settings = point.apply(base);
        let system = std::sync::Arc::new(settings.system()?);
        let mc = settings.mc();
        let estimator = ThetaEstimator::new(system.clone(), &mc);
        let hash = settings.hash();
        for &kind in strategies {
            let lambda = solve_threshold(kind, &estimator, &mc, &settings.solver())?.map(|s| s.lambda_star);
            let strategy = Strategy::new(kind, lambda, estimator.clone())?;
            let report = run_simulation(&strategy, n_frames, seed, settings.skip_cap)?;
            rows.push(ReportRow::new(&system, &report, hash.clone()));
        }
    }
    Ok(rows)
}
