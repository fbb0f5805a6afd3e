//! The proposed policy and the four comparison strategies behind one type.
//!
//! All strategies see the same contention, channels, scheduling and rate
//! code; only the decision after each RR phase differs.
//!
//! * `direct_only`: transmit on the direct links after the first nonempty RR.
//! * `direct_ris_full`: probe at level 1 after the first nonempty RR, then
//!   always transmit with the RIS.
//! * `optstop_elementwise` / `optstop_fullarray`: probe after every nonempty
//!   RR at level `J̄` / level 1, then transmit iff the RIS-aided rate reaches
//!   the restricted threshold `λ_b`. The probe cost is paid on every phase.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::DirectGains;
use crate::error::{Error, Result};
use crate::model::System;
use crate::phy::{direct_sum_rate, greedy_schedule};
use crate::strategy::{
    decide_layer1, decide_layer2, solve_lambda, ActionSet, Layer1, Layer1Outcome, Layer2, McParams, OfflineSolution,
    SolverParams, ThetaEstimator,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Proposed,
    DirectOnly,
    DirectRisFull,
    OptstopElementwise,
    OptstopFullarray,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Proposed,
        StrategyKind::DirectOnly,
        StrategyKind::DirectRisFull,
        StrategyKind::OptstopElementwise,
        StrategyKind::OptstopFullarray,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            StrategyKind::Proposed => "proposed",
            StrategyKind::DirectOnly => "direct_only",
            StrategyKind::DirectRisFull => "direct_ris_full",
            StrategyKind::OptstopElementwise => "optstop_elementwise",
            StrategyKind::OptstopFullarray => "optstop_fullarray",
        }
    }

    /// Grouping level a baseline is pinned to.
    pub fn fixed_level(self, system: &System) -> Option<u32> {
        match self {
            StrategyKind::Proposed | StrategyKind::DirectOnly => None,
            StrategyKind::DirectRisFull | StrategyKind::OptstopFullarray => Some(1),
            StrategyKind::OptstopElementwise => Some(system.max_level()),
        }
    }

    /// Action set of the threshold solve, for strategies that use one.
    pub fn action_set(self, system: &System) -> Option<ActionSet> {
        match self {
            StrategyKind::Proposed => Some(ActionSet::Full),
            StrategyKind::OptstopElementwise | StrategyKind::OptstopFullarray => Some(ActionSet::ProbeOnly {
                level: self.fixed_level(system).expect("pinned level"),
            }),
            StrategyKind::DirectOnly | StrategyKind::DirectRisFull => None,
        }
    }

    pub fn needs_lambda(self) -> bool {
        matches!(
            self,
            StrategyKind::Proposed | StrategyKind::OptstopElementwise | StrategyKind::OptstopFullarray
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// Solves the threshold a strategy needs; `None` for threshold-free ones.
pub fn solve_threshold(
    kind: StrategyKind,
    estimator: &ThetaEstimator,
    mc: &McParams,
    params: &SolverParams,
) -> Result<Option<OfflineSolution>> {
    match kind.action_set(estimator.system()) {
        None => Ok(None),
        Some(actions) => crate::strategy::FixedPointProblem::new(estimator.clone(), mc, actions)?
            .solve(params)
            .map(Some),
    }
}

/// Convenience wrapper that samples a fresh estimator.
pub fn solve_threshold_for(
    kind: StrategyKind,
    system: Arc<System>,
    mc: &McParams,
    params: &SolverParams,
) -> Result<Option<OfflineSolution>> {
    match kind.action_set(&system) {
        None => Ok(None),
        Some(actions) => solve_lambda(system, mc, params, actions).map(Some),
    }
}

pub fn run_direct_only(system: &System, direct: &DirectGains) -> Result<Layer1Outcome> {
    let a_star = greedy_schedule(direct)?;
    let rd_star = direct_sum_rate(&a_star, direct, system.mean_snr())?;
    Ok(Layer1Outcome {
        decision: Layer1::TransmitDirect,
        a_star,
        rd_star,
        probe: None,
    })
}

fn probe_at(system: &System, direct: &DirectGains, level: u32) -> Result<Layer1Outcome> {
    system.derived.check_level(level)?;
    let a_star = greedy_schedule(direct)?;
    let rd_star = direct_sum_rate(&a_star, direct, system.mean_snr())?;
    Ok(Layer1Outcome {
        decision: Layer1::Probe {
            level,
            schedule: a_star.clone(),
        },
        a_star,
        rd_star,
        probe: None,
    })
}

pub fn run_direct_ris_full(system: &System, direct: &DirectGains) -> Result<Layer1Outcome> {
    probe_at(system, direct, 1)
}

pub fn run_optstop_fixed_grouping(system: &System, direct: &DirectGains, level: u32) -> Result<Layer1Outcome> {
    probe_at(system, direct, level)
}

/// A strategy ready to run: its kind, threshold and `Θ` estimator.
#[derive(Debug, Clone)]
pub struct Strategy {
    kind: StrategyKind,
    lambda: Option<f64>,
    estimator: ThetaEstimator,
}

impl Strategy {
    pub fn new(kind: StrategyKind, lambda: Option<f64>, estimator: ThetaEstimator) -> Result<Self> {
        if kind.needs_lambda() && lambda.is_none() {
            return Err(Error::MissingLambdaStar(kind.tag().into()));
        }
        Ok(Self {
            kind,
            lambda: if kind.needs_lambda() { lambda } else { None },
            estimator,
        })
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn system(&self) -> &System {
        self.estimator.system()
    }

    pub fn estimator(&self) -> &ThetaEstimator {
        &self.estimator
    }

    pub fn first_layer(&self, direct: &DirectGains) -> Result<Layer1Outcome> {
        let system = self.estimator.system();
        match self.kind {
            StrategyKind::Proposed => decide_layer1(&self.estimator, self.threshold(), direct),
            StrategyKind::DirectOnly => run_direct_only(system, direct),
            StrategyKind::DirectRisFull => run_direct_ris_full(system, direct),
            StrategyKind::OptstopElementwise | StrategyKind::OptstopFullarray => {
                run_optstop_fixed_grouping(system, direct, self.kind.fixed_level(system).expect("pinned level"))
            }
        }
    }

    pub fn second_layer(&self, ris_rate: f64) -> Layer2 {
        match self.kind {
            StrategyKind::DirectRisFull | StrategyKind::DirectOnly => Layer2::TransmitRis,
            _ => decide_layer2(self.threshold(), ris_rate),
        }
    }

    fn threshold(&self) -> f64 {
        self.lambda.expect("checked at construction")
    }
}
