//! Flat TOML run configuration.
//!
//! One table of keys covers the system, the Monte-Carlo sizes, the solver,
//! the simulation and the sweep axes. Unknown keys are rejected. Any key can
//! be overridden with `key=value`, where `value` is parsed as a TOML value
//! and falls back to a bare string.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{cartesian_grid, GridPoint, DEFAULT_SKIP_CAP};
use crate::error::{Error, Result};
use crate::model::{Fading, System, SystemConfig};
use crate::strategy::{McParams, SolverParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub n_users: usize,
    pub n_preambles: usize,
    pub n_subchannels: usize,
    /// Defaults to `log2(n_elements)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_grouping_level: Option<u32>,
    pub n_elements: usize,
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub user_position: [f64; 3],
    pub pathloss_exp_direct: f64,
    pub pathloss_exp_ris: f64,
    pub ref_pathloss_db: f64,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub coherence_time_s: f64,
    pub rr_duration_s: f64,
    pub pilot_duration_s: f64,
    pub carrier_freq_hz: f64,
    /// `"rayleigh"` or `"fixed"`.
    pub fading: String,
    /// Squared magnitude of every direct gain under fixed fading.
    pub fixed_direct_gain: f64,
    /// Squared magnitude of every per-element cascaded product under fixed fading.
    pub fixed_cascade_gain: f64,
    pub ris_enabled: bool,

    pub n_cascade_samples: usize,
    pub n_outer_samples: usize,
    pub mc_seed: u64,

    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    pub initial_lambda: f64,
    pub max_iterations: usize,

    pub n_frames: u64,
    pub seed: u64,
    /// Consecutive non-terminal RR phases tolerated in one frame.
    pub skip_cap: u64,

    pub sweep_tx_power_dbm: Vec<f64>,
    pub sweep_coherence_time_s: Vec<f64>,
    pub sweep_n_elements: Vec<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Self::from_parts(&SystemConfig::default(), &McParams::default(), &SolverParams::default())
    }
}

impl Settings {
    pub fn from_parts(cfg: &SystemConfig, mc: &McParams, solver: &SolverParams) -> Self {
        let (fading, fixed_direct_gain, fixed_cascade_gain) = match cfg.fading {
            Fading::Rayleigh => ("rayleigh", 0.0, 0.0),
            Fading::Fixed {
                direct_gain,
                cascade_gain,
            } => ("fixed", direct_gain, cascade_gain),
        };
        let derived_level =
            cfg.n_elements.is_power_of_two() && cfg.n_elements.trailing_zeros() == cfg.max_grouping_level;
        Self {
            n_users: cfg.n_users,
            n_preambles: cfg.n_preambles,
            n_subchannels: cfg.n_subchannels,
            max_grouping_level: (!derived_level).then_some(cfg.max_grouping_level),
            n_elements: cfg.n_elements,
            bs_position: cfg.bs_position,
            ris_position: cfg.ris_position,
            user_position: cfg.user_position,
            pathloss_exp_direct: cfg.pathloss_exp_direct,
            pathloss_exp_ris: cfg.pathloss_exp_ris,
            ref_pathloss_db: cfg.ref_pathloss_db,
            tx_power_dbm: cfg.tx_power_dbm,
            noise_power_dbm: cfg.noise_power_dbm,
            coherence_time_s: cfg.coherence_time_s,
            rr_duration_s: cfg.rr_duration_s,
            pilot_duration_s: cfg.pilot_duration_s,
            carrier_freq_hz: cfg.carrier_freq_hz,
            fading: fading.into(),
            fixed_direct_gain,
            fixed_cascade_gain,
            ris_enabled: cfg.ris_enabled,
            n_cascade_samples: mc.n_cascade_samples,
            n_outer_samples: mc.n_outer_samples,
            mc_seed: mc.seed,
            accuracy: solver.accuracy,
            step_size: solver.step_size,
            initial_lambda: solver.initial_lambda,
            max_iterations: solver.max_iterations,
            n_frames: 100_000,
            seed: 1,
            skip_cap: DEFAULT_SKIP_CAP,
            sweep_tx_power_dbm: Vec::new(),
            sweep_coherence_time_s: Vec::new(),
            sweep_n_elements: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    /// Reads `path` (or starts from the defaults) and applies `key=value`
    /// overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                parse_table(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = parse_override(item)?;
            table.insert(key, value);
        }
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialise to TOML")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn system_config(&self) -> Result<SystemConfig> {
        let fading = match self.fading.as_str() {
            "rayleigh" => Fading::Rayleigh,
            "fixed" => Fading::Fixed {
                direct_gain: self.fixed_direct_gain,
                cascade_gain: self.fixed_cascade_gain,
            },
            other => return Err(Error::Config(format!("unknown fading model `{other}`"))),
        };
        Ok(SystemConfig {
            n_users: self.n_users,
            n_preambles: self.n_preambles,
            n_subchannels: self.n_subchannels,
            max_grouping_level: self
                .max_grouping_level
                .unwrap_or_else(|| self.n_elements.max(1).trailing_zeros()),
            n_elements: self.n_elements,
            bs_position: self.bs_position,
            ris_position: self.ris_position,
            user_position: self.user_position,
            pathloss_exp_direct: self.pathloss_exp_direct,
            pathloss_exp_ris: self.pathloss_exp_ris,
            ref_pathloss_db: self.ref_pathloss_db,
            tx_power_dbm: self.tx_power_dbm,
            noise_power_dbm: self.noise_power_dbm,
            coherence_time_s: self.coherence_time_s,
            rr_duration_s: self.rr_duration_s,
            pilot_duration_s: self.pilot_duration_s,
            carrier_freq_hz: self.carrier_freq_hz,
            fading,
            ris_enabled: self.ris_enabled,
        })
    }

    pub fn system(&self) -> Result<System> {
        System::new(self.system_config()?)
    }

    pub fn mc(&self) -> McParams {
        McParams {
            n_cascade_samples: self.n_cascade_samples,
            n_outer_samples: self.n_outer_samples,
            seed: self.mc_seed,
        }
    }

    pub fn solver(&self) -> SolverParams {
        SolverParams {
            accuracy: self.accuracy,
            step_size: self.step_size,
            initial_lambda: self.initial_lambda,
            max_iterations: self.max_iterations,
        }
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        cartesian_grid(
            &self.sweep_tx_power_dbm,
            &self.sweep_coherence_time_s,
            &self.sweep_n_elements,
        )
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(e.message().to_string()))
}

fn parse_override(item: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{item}` has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}
