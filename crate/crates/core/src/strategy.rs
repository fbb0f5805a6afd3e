//! Threshold policy and the offline throughput solver.
//!
//! After an RR phase the BS knows the granted users' direct gains. With the
//! target throughput `λ` it compares three expected rewards (all in bit/Hz):
//!
//! * transmit now on the direct links: `(R_d* - λ)·T_c`,
//! * skip to the next RR phase: `0`,
//! * probe the RIS at level `J` with the greedy schedule and decide again:
//!   `Θ_J(λ) = E[max{(T_c - τ_CE(J))·R_r - λ·T_c, -λ·τ_CE(J)} | h_d]`.
//!
//! `Θ` is a conditional expectation over the cascaded gains only. Those are
//! independent of the direct gains and identically distributed across links,
//! so one pool of per-link grouped magnitude sums `Σ_u |h_u^J|` serves every
//! evaluation: it gives common random numbers across levels, across decisions
//! and between the offline solver and the online policy.
//!
//! The maximal throughput `λ*` is the root of
//! `G(λ) = Σ_I p_I·Λ_I(λ) - λ·τ_RA`, found by the damped iteration
//! `λ ← λ + α·G(λ)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{magnitude_sums_by_level, sample_direct, sample_link_products, DirectGains};
use crate::contention::granted_pmf_closed_form;
use crate::error::{Error, Result};
use crate::model::System;
use crate::phy::{direct_sum_rate, greedy_schedule, ScheduleVector};
use crate::rng::{substream, Domain};

/// Monte-Carlo sizes and the seed of the shared sample pools.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    /// Cascaded-gain samples per `Θ` evaluation.
    pub n_cascade_samples: usize,
    /// Direct-gain samples per granted count in the solver.
    pub n_outer_samples: usize,
    pub seed: u64,
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            n_cascade_samples: 2000,
            n_outer_samples: 500,
            seed: 0x5eed,
        }
    }
}

/// Grouped magnitude sums of `n_samples × C` independent links at every
/// grouping level.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadePool {
    n_samples: usize,
    n_subchannels: usize,
    /// `sums[J-1][s·C + c]`
    sums: Vec<Vec<f64>>,
}

impl CascadePool {
    /// Sample `s` draws its `C` links from stream `(CascadePool, s)`.
    pub fn sample(system: &System, n_samples: usize, seed: u64) -> Self {
        let c = system.n_subchannels();
        let levels = system.max_level();
        let rows: Vec<Vec<f64>> = (0..n_samples)
            .into_par_iter()
            .map(|s| {
                let mut rng = substream(seed, Domain::CascadePool, s as u64);
                let mut link = Vec::with_capacity(system.config.n_elements);
                let mut row = vec![0.0; c * levels as usize];
                for ch in 0..c {
                    sample_link_products(system, &mut rng, &mut link);
                    magnitude_sums_by_level(
                        &link,
                        levels,
                        &mut row[ch * levels as usize..(ch + 1) * levels as usize],
                    );
                }
                row
            })
            .collect();
        let mut sums = vec![vec![0.0; n_samples * c]; levels as usize];
        for (s, row) in rows.iter().enumerate() {
            for ch in 0..c {
                for j in 0..levels as usize {
                    sums[j][s * c + ch] = row[ch * levels as usize + j];
                }
            }
        }
        Self {
            n_samples,
            n_subchannels: c,
            sums,
        }
    }

    /// Builds a pool from explicit sums, `sums[J-1][s·C + c]`.
    pub fn from_sums(n_subchannels: usize, sums: Vec<Vec<f64>>) -> Self {
        let n_samples = sums.first().map_or(0, |v| v.len() / n_subchannels.max(1));
        assert!(sums.iter().all(|v| v.len() == n_samples * n_subchannels));
        Self {
            n_samples,
            n_subchannels,
            sums,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn magnitude_sum(&self, level: u32, sample: usize, subchannel: usize) -> f64 {
        self.sums[level as usize - 1][sample * self.n_subchannels + subchannel]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// One pool sample inside a `Θ` evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSample {
    pub rate: f64,
    pub value: f64,
    /// The transmit branch `T_r·R_r - λ·T_c` attained the max.
    pub transmit_branch: bool,
}

/// `Θ` evaluator over a frozen [`CascadePool`].
#[derive(Debug, Clone)]
pub struct ThetaEstimator {
    system: Arc<System>,
    pool: Arc<CascadePool>,
}

impl ThetaEstimator {
    pub fn new(system: Arc<System>, mc: &McParams) -> Self {
        let pool = CascadePool::sample(&system, mc.n_cascade_samples.max(1), mc.seed);
        Self::with_pool(system, pool)
    }

    pub fn with_pool(system: Arc<System>, pool: CascadePool) -> Self {
        assert_eq!(pool.n_subchannels, system.n_subchannels());
        assert_eq!(pool.sums.len(), system.max_level() as usize);
        Self {
            system,
            pool: Arc::new(pool),
        }
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    pub fn pool(&self) -> &CascadePool {
        &self.pool
    }

    /// Whether the probing branch exists at all.
    pub fn probing_available(&self) -> bool {
        self.system.config.ris_enabled
    }

    fn scheduled_magnitudes(schedule: &ScheduleVector, direct: &DirectGains) -> Vec<(usize, f64)> {
        schedule.pairs().map(|(c, u)| (c, direct.get(u, c).norm())).collect()
    }

    /// RIS-aided sum rate of pool sample `s` under optimal phases.
    #[inline]
    fn pool_rate(&self, level: u32, s: usize, links: &[(usize, f64)]) -> f64 {
        let snr = self.system.mean_snr();
        let sums = &self.pool.sums[level as usize - 1][s * self.pool.n_subchannels..];
        let mut product = 1.0f64;
        let mut rate = 0.0;
        for &(c, hd) in links {
            let m = hd + sums[c];
            product *= 1.0 + snr * m * m;
            if product > 1e150 {
                rate += product.log2();
                product = 1.0;
            }
        }
        rate + product.log2()
    }

    /// Sum of the `Θ` integrand over the pool, and the sum and sum of squares
    /// of its deviations from the integrand's value at the probe-cost floor.
    fn theta_moments(&self, level: u32, links: &[(usize, f64)], lambda: f64) -> (f64, f64, f64) {
        let t_c = self.system.config.coherence_time_s;
        let tau = self.system.probe_cost(level);
        let t_r = t_c - tau;
        let skip = -lambda * tau;
        let mut dev = 0.0;
        let mut dev_sq = 0.0;
        for s in 0..self.pool.n_samples {
            let d = (t_r * self.pool_rate(level, s, links) - lambda * t_c).max(skip) - skip;
            dev += d;
            dev_sq += d * d;
        }
        (skip * self.pool.n_samples as f64 + dev, dev, dev_sq)
    }

    fn estimate(&self, level: u32, links: &[(usize, f64)], lambda: f64) -> ThetaEstimate {
        let n = self.pool.n_samples as f64;
        let (sum, dev, dev_sq) = self.theta_moments(level, links, lambda);
        let var = if n > 1.0 {
            ((dev_sq - dev * dev / n) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        ThetaEstimate {
            mean: sum / n,
            std_err: (var / n).sqrt(),
        }
    }

    pub fn theta(
        &self,
        schedule: &ScheduleVector,
        level: u32,
        lambda: f64,
        direct: &DirectGains,
    ) -> Result<ThetaEstimate> {
        self.system.derived.check_level(level)?;
        schedule.check(direct.n_users(), direct.n_subchannels())?;
        Ok(self.estimate(level, &Self::scheduled_magnitudes(schedule, direct), lambda))
    }

    /// Per-sample view of [`Self::theta`].
    pub fn theta_samples(
        &self,
        schedule: &ScheduleVector,
        level: u32,
        lambda: f64,
        direct: &DirectGains,
    ) -> Result<Vec<ThetaSample>> {
        self.system.derived.check_level(level)?;
        schedule.check(direct.n_users(), direct.n_subchannels())?;
        let links = Self::scheduled_magnitudes(schedule, direct);
        let t_c = self.system.config.coherence_time_s;
        let tau = self.system.probe_cost(level);
        Ok((0..self.pool.n_samples)
            .map(|s| {
                let rate = self.pool_rate(level, s, &links);
                let transmit = (t_c - tau) * rate - lambda * t_c;
                let skip = -lambda * tau;
                ThetaSample {
                    rate,
                    value: transmit.max(skip),
                    transmit_branch: transmit >= skip,
                }
            })
            .collect())
    }

    /// `Θ` at every level `1..=J̄` for one schedule, index `J-1`.
    pub fn theta_all_levels(
        &self,
        schedule: &ScheduleVector,
        lambda: f64,
        direct: &DirectGains,
    ) -> Result<Vec<ThetaEstimate>> {
        schedule.check(direct.n_users(), direct.n_subchannels())?;
        let links = Self::scheduled_magnitudes(schedule, direct);
        Ok(self
            .system
            .derived
            .levels()
            .map(|j| self.estimate(j, &links, lambda))
            .collect())
    }

    /// Best grouping level for probing with `a_star`.
    ///
    /// Returns `None` when probing is unavailable. Ties go to the coarser level.
    pub fn best_probe(
        &self,
        lambda: f64,
        direct: &DirectGains,
        a_star: &ScheduleVector,
    ) -> Result<Option<ProbeChoice>> {
        if !self.probing_available() {
            return Ok(None);
        }
        let all = self.theta_all_levels(a_star, lambda, direct)?;
        Ok(Some(argmax_level(&all)))
    }

    /// `max_J Θ_J` without the validity checks or standard errors.
    fn best_theta_mean(&self, links: &[(usize, f64)], lambda: f64) -> f64 {
        let n = self.pool.n_samples as f64;
        self.system
            .derived
            .levels()
            .map(|j| self.theta_moments(j, links, lambda).0 / n)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeChoice {
    pub level: u32,
    pub theta: ThetaEstimate,
}

fn argmax_level(all: &[ThetaEstimate]) -> ProbeChoice {
    let mut best = ProbeChoice {
        level: 1,
        theta: all[0],
    };
    for (i, t) in all.iter().enumerate().skip(1) {
        if t.mean > best.theta.mean {
            best = ProbeChoice {
                level: i as u32 + 1,
                theta: *t,
            };
        }
    }
    best
}

/// First-layer action after an RR phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer1 {
    /// `ψ = 0`
    TransmitDirect,
    /// `ψ = J̄ + 1`
    Skip,
    /// `1 ≤ ψ ≤ J̄`
    Probe { level: u32, schedule: ScheduleVector },
}

/// Second-layer action after a probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer2 {
    TransmitRis,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub layer1: Layer1,
    pub layer2: Option<Layer2>,
}

/// Everything the first-layer decision computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer1Outcome {
    pub decision: Layer1,
    pub a_star: ScheduleVector,
    pub rd_star: f64,
    /// `None` when probing is unavailable.
    pub probe: Option<ProbeChoice>,
}

/// The first-layer comparison on already computed rewards.
///
/// Transmit when `direct ≥ max(Θ̄, 0)`, skip when `max(direct, Θ̄) < 0`,
/// probe otherwise.
pub fn first_layer_branch(direct_reward: f64, theta_bar: Option<f64>) -> FirstLayerBranch {
    let theta = theta_bar.unwrap_or(f64::NEG_INFINITY);
    if direct_reward >= theta.max(0.0) {
        FirstLayerBranch::Transmit
    } else if direct_reward.max(theta) < 0.0 {
        FirstLayerBranch::Skip
    } else {
        FirstLayerBranch::Probe
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstLayerBranch {
    Transmit,
    Skip,
    Probe,
}

pub fn decide_layer1(estimator: &ThetaEstimator, lambda: f64, direct: &DirectGains) -> Result<Layer1Outcome> {
    let a_star = greedy_schedule(direct)?;
    let system = estimator.system();
    let rd_star = direct_sum_rate(&a_star, direct, system.mean_snr())?;
    let probe = estimator.best_probe(lambda, direct, &a_star)?;
    let direct_reward = (rd_star - lambda) * system.config.coherence_time_s;
    let decision = match first_layer_branch(direct_reward, probe.map(|p| p.theta.mean)) {
        FirstLayerBranch::Transmit => Layer1::TransmitDirect,
        FirstLayerBranch::Skip => Layer1::Skip,
        FirstLayerBranch::Probe => Layer1::Probe {
            level: probe.expect("probe branch requires a probe choice").level,
            schedule: a_star.clone(),
        },
    };
    Ok(Layer1Outcome {
        decision,
        a_star,
        rd_star,
        probe,
    })
}

pub fn decide_layer2(lambda: f64, ris_rate: f64) -> Layer2 {
    if ris_rate >= lambda {
        Layer2::TransmitRis
    } else {
        Layer2::Skip
    }
}

/// Actions available to the optimised policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSet {
    /// Direct transmission, skipping, or probing at any level.
    Full,
    /// Every nonempty RR phase is followed by probing at `level`; the only
    /// choice is whether to transmit afterwards.
    ProbeOnly { level: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// `ε`, in bit/s/Hz.
    pub accuracy: f64,
    /// `α`; defaults to `1/(τ_RA + T_c)`.
    pub step_size: Option<f64>,
    pub initial_lambda: f64,
    pub max_iterations: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            accuracy: 1e-4,
            step_size: None,
            initial_lambda: 1.0,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub lambda: f64,
    /// `G(λ)` in bit/Hz.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSolution {
    pub lambda_star: f64,
    pub iterations: usize,
    /// `|G(λ*)|`
    pub residual: f64,
    pub step_size: f64,
    pub accuracy: f64,
    pub initial_lambda: f64,
    pub action_set: ActionSet,
    pub mc: McParams,
    /// `Σ_I p_I` over the granted counts actually used.
    pub pmf_mass_used: f64,
    /// Closed-form mass on counts above `K`, left out of the sum.
    pub pmf_mass_dropped: f64,
    pub trace: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Legal step sizes `[ε, (2-ε)/(τ_RA + T_c)]`.
pub fn step_size_bounds(system: &System, accuracy: f64) -> (f64, f64) {
    let span = system.config.rr_duration_s + system.config.coherence_time_s;
    (accuracy, (2.0 - accuracy) / span)
}

#[derive(Debug, Clone)]
struct DirectSample {
    rd_star: f64,
    links: Vec<(usize, f64)>,
}

/// `G(λ)` over frozen pools of direct and cascaded gains.
#[derive(Debug, Clone)]
pub struct FixedPointProblem {
    estimator: ThetaEstimator,
    actions: ActionSet,
    /// `(I, p_I)` for `I = 1..=min(S, K)`
    weights: Vec<(usize, f64)>,
    pools: Vec<Vec<DirectSample>>,
    pmf_mass_dropped: f64,
    mc: McParams,
}

impl FixedPointProblem {
    pub fn new(estimator: ThetaEstimator, mc: &McParams, actions: ActionSet) -> Result<Self> {
        let system = estimator.system().clone();
        if let ActionSet::ProbeOnly { level } = actions {
            system.derived.check_level(level)?;
        }
        let k = system.config.n_users;
        let s = system.config.n_preambles;
        let pmf = granted_pmf_closed_form(k, s);
        let top = s.min(k);
        let weights: Vec<(usize, f64)> = (1..=top).map(|i| (i, pmf.probs[i])).collect();
        let n_outer = mc.n_outer_samples.max(1);
        let pools = weights
            .iter()
            .map(|&(i, _)| {
                (0..n_outer)
                    .into_par_iter()
                    .map(|j| {
                        let mut rng = substream(mc.seed, Domain::DirectPool, ((i as u64) << 32) | j as u64);
                        let direct = sample_direct(&system, &mut rng, i);
                        let a_star = greedy_schedule(&direct)?;
                        let rd_star = direct_sum_rate(&a_star, &direct, system.mean_snr())?;
                        Ok(DirectSample {
                            rd_star,
                            links: a_star.pairs().map(|(c, u)| (c, direct.get(u, c).norm())).collect(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            estimator,
            actions,
            weights,
            pools,
            pmf_mass_dropped: pmf.mass_above(k),
            mc: *mc,
        })
    }

    pub fn estimator(&self) -> &ThetaEstimator {
        &self.estimator
    }

    pub fn pmf_mass_used(&self) -> f64 {
        self.weights.iter().map(|w| w.1).sum()
    }

    fn sample_value(&self, sample: &DirectSample, lambda: f64) -> f64 {
        let t_c = self.estimator.system().config.coherence_time_s;
        match self.actions {
            ActionSet::Full => {
                let direct = (t_c * (sample.rd_star - lambda)).max(0.0);
                if self.estimator.probing_available() {
                    direct.max(self.estimator.best_theta_mean(&sample.links, lambda))
                } else {
                    direct
                }
            }
            ActionSet::ProbeOnly { level } => {
                let n = self.estimator.pool().n_samples() as f64;
                self.estimator.theta_moments(level, &sample.links, lambda).0 / n
            }
        }
    }

    /// `Λ_I(λ)` for every granted count in use, in ascending `I`.
    pub fn lambda_terms(&self, lambda: f64) -> Vec<f64> {
        self.pools
            .iter()
            .map(|pool| {
                let values: Vec<f64> = pool.par_iter().map(|s| self.sample_value(s, lambda)).collect();
                values.iter().sum::<f64>() / values.len() as f64
            })
            .collect()
    }

    /// `G(λ) = Σ_I p_I·Λ_I(λ) - λ·τ_RA`.
    pub fn residual(&self, lambda: f64) -> f64 {
        let terms = self.lambda_terms(lambda);
        let reward: f64 = self.weights.iter().zip(&terms).map(|((_, p), t)| p * t).sum();
        reward - lambda * self.estimator.system().config.rr_duration_s
    }

    pub fn solve(&self, params: &SolverParams) -> Result<OfflineSolution> {
        let system = self.estimator.system();
        if params.accuracy.is_nan() || params.accuracy <= 0.0 {
            return Err(Error::NonPositiveAccuracy(params.accuracy));
        }
        let span = system.config.rr_duration_s + system.config.coherence_time_s;
        let step = params.step_size.unwrap_or(1.0 / span);
        let (lo, hi) = step_size_bounds(system, params.accuracy);
        if !(step >= lo && step <= hi) {
            return Err(Error::StepSizeOutOfRange { given: step, lo, hi });
        }

        let mut lambda = params.initial_lambda;
        let mut trace = Vec::new();
        let solution = |lambda: f64, trace: &Vec<IterationRecord>| OfflineSolution {
            lambda_star: lambda,
            iterations: trace.len(),
            residual: trace.last().map_or(f64::NAN, |r: &IterationRecord| r.residual.abs()),
            step_size: step,
            accuracy: params.accuracy,
            initial_lambda: params.initial_lambda,
            action_set: self.actions,
            mc: self.mc,
            pmf_mass_used: self.pmf_mass_used(),
            pmf_mass_dropped: self.pmf_mass_dropped,
            trace: trace.clone(),
            config_hash: None,
        };
        for _ in 0..params.max_iterations {
            let g = self.residual(lambda);
            trace.push(IterationRecord { lambda, residual: g });
            // Δ in throughput units, so that |G(λ*)| < ε·(τ_RA + T_c) for any α.
            if g.abs() / span < params.accuracy {
                return Ok(solution(lambda, &trace));
            }
            lambda += step * g;
        }
        Err(Error::MaxIterationsExceeded(Box::new(solution(lambda, &trace))))
    }
}

/// Builds the pools and runs the fixed-point iteration.
pub fn solve_lambda(
    system: Arc<System>,
    mc: &McParams,
    params: &SolverParams,
    actions: ActionSet,
) -> Result<OfflineSolution> {
    let estimator = ThetaEstimator::new(system, mc);
    FixedPointProblem::new(estimator, mc, actions)?.solve(params)
}
