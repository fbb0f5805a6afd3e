//! Throughput-optimal random access with RIS subarray grouping.
//!
//! Users contend for access with random preambles, the BS observes the
//! granted users' direct channels and decides, frame by frame, whether to
//! transmit now, wait for the next request round, or first probe the RIS at
//! a chosen subarray grouping level. The decision is a two-layer threshold
//! rule driven by the maximal average throughput `λ*`, which is computed
//! offline by a fixed-point iteration.
//!
//! * [`model`]: configuration, geometry and derived constants
//! * [`channel`]: fading draws and subarray grouping
//! * [`contention`]: the preamble contention phase
//! * [`phy`]: scheduling, beamforming and sum rates
//! * [`strategy`]: the threshold policy and the `λ*` solver
//! * [`baselines`]: comparison strategies
//! * [`engine`]: the frame simulator, sweeps and CSV reports
//! * [`settings`]: the flat configuration file

pub mod baselines;
pub mod channel;
pub mod contention;
pub mod engine;
pub mod error;
pub mod model;
pub mod phy;
pub mod rng;
pub mod settings;
pub mod strategy;

pub use baselines::{Strategy, StrategyKind};
pub use channel::{ChannelRealization, DirectGains, GroupedGains};
pub use contention::GrantOutcome;
pub use engine::{FrameTrace, SimulationReport};
pub use error::{Error, Result};
pub use model::{DerivedParams, Fading, System, SystemConfig};
pub use phy::{BeamformingVector, ScheduleVector};
pub use settings::Settings;
pub use strategy::{ActionSet, Decision, Layer1, Layer2, McParams, OfflineSolution, SolverParams, ThetaEstimator};
