//! Static system configuration and the quantities derived from it.
//!
//! The RIS has `M = 2^J̄` reflecting elements. At grouping level `J` it is split
//! into `2^J` contiguous subarrays of `B(J) = 2^(J̄-J)` elements, so level `J̄`
//! is element-wise and level 1 is two half-arrays. Probing at level `J` costs
//! `τ_CE(J) = 2^(J+1)·τ_s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Small-scale fading model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fading {
    /// CSCG gains with distance-based variances.
    Rayleigh,
    /// Zero-variance channel: every direct gain is `sqrt(direct_gain)` and
    /// every per-element cascaded product is `sqrt(cascade_gain)` (both real).
    Fixed { direct_gain: f64, cascade_gain: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_users: usize,
    pub n_preambles: usize,
    pub n_subchannels: usize,
    pub max_grouping_level: u32,
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
    /// Documentation only; the carrier enters through `ref_pathloss_db`.
    pub carrier_freq_hz: f64,
    pub fading: Fading,
    /// With the RIS disabled the probing branch is never available and all
    /// cascaded products are zero.
    pub ris_enabled: bool,
}

impl Default for SystemConfig {
    /// The large-scale reference deployment: 50 users, 30 preambles,
    /// 8 sub-channels and a 1024-element RIS.
    fn default() -> Self {
        Self {
            n_users: 50,
            n_preambles: 30,
            n_subchannels: 8,
            max_grouping_level: 10,
            n_elements: 1 << 10,
            bs_position: [0.0, 100.0, 0.0],
            ris_position: [200.0, 0.0, 20.0],
            user_position: [1000.0, 100.0, 0.0],
            pathloss_exp_direct: 3.5,
            pathloss_exp_ris: 2.2,
            ref_pathloss_db: -30.0,
            tx_power_dbm: 26.0,
            noise_power_dbm: -100.0,
            coherence_time_s: 24e-3,
            rr_duration_s: 0.3e-3,
            pilot_duration_s: 10e-6,
            carrier_freq_hz: 2e9,
            fading: Fading::Rayleigh,
            ris_enabled: true,
        }
    }
}

impl SystemConfig {
    /// A laptop-sized deployment: 10 users, 8 preambles, 4 sub-channels and
    /// a 64-element RIS. Geometry, powers and durations as in [`Default`].
    pub fn desk() -> Self {
        Self {
            n_users: 10,
            n_preambles: 8,
            n_subchannels: 4,
            max_grouping_level: 6,
            n_elements: 1 << 6,
            ..Self::default()
        }
    }

    /// Sets `n_elements` and the matching `max_grouping_level`.
    pub fn with_elements(mut self, n_elements: usize) -> Self {
        self.n_elements = n_elements;
        self.max_grouping_level = n_elements.max(1).trailing_zeros();
        self
    }

    pub fn validate(&self) -> Result<DerivedParams> {
        for (name, value) in [
            ("n_users", self.n_users),
            ("n_preambles", self.n_preambles),
            ("n_subchannels", self.n_subchannels),
            ("n_elements", self.n_elements),
        ] {
            if value == 0 {
                return Err(Error::NonPositiveParameter(name));
            }
        }
        if self.max_grouping_level == 0 {
            return Err(Error::NonPositiveParameter("max_grouping_level"));
        }
        if !self.n_elements.is_power_of_two() {
            return Err(Error::NonPowerOfTwoElements(self.n_elements));
        }
        let expected = 1usize
            .checked_shl(self.max_grouping_level)
            .filter(|_| self.max_grouping_level < usize::BITS)
            .unwrap_or(0);
        if self.n_elements != expected {
            return Err(Error::ElementLevelMismatch {
                n_elements: self.n_elements,
                expected,
            });
        }
        for (name, value) in [
            ("pathloss_exp_direct", self.pathloss_exp_direct),
            ("pathloss_exp_ris", self.pathloss_exp_ris),
            ("coherence_time_s", self.coherence_time_s),
            ("rr_duration_s", self.rr_duration_s),
            ("pilot_duration_s", self.pilot_duration_s),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveParameter(name));
            }
        }
        for (name, value) in [
            ("ref_pathloss_db", self.ref_pathloss_db),
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_power_dbm", self.noise_power_dbm),
        ] {
            // Every finite dB value maps to a strictly positive linear one.
            if !value.is_finite() {
                return Err(Error::NonPositiveParameter(name));
            }
        }
        if let Fading::Fixed {
            direct_gain,
            cascade_gain,
        } = self.fading
        {
            if !(direct_gain >= 0.0 && direct_gain.is_finite()) {
                return Err(Error::NonPositiveParameter("fixed_direct_gain"));
            }
            if !(cascade_gain >= 0.0 && cascade_gain.is_finite()) {
                return Err(Error::NonPositiveParameter("fixed_cascade_gain"));
            }
        }

        let d_direct = distance(&self.user_position, &self.bs_position);
        let d_user_ris = distance(&self.user_position, &self.ris_position);
        let d_ris_bs = distance(&self.ris_position, &self.bs_position);
        for (name, d) in [
            ("d_direct", d_direct),
            ("d_user_ris", d_user_ris),
            ("d_ris_bs", d_ris_bs),
        ] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NonPositiveParameter(name));
            }
        }

        let levels = self.max_grouping_level;
        let subarray_size = (1..=levels).map(|j| self.n_elements >> j).collect();
        let probe_time: Vec<f64> = (1..=levels).map(|j| probe_time(j, self.pilot_duration_s)).collect();
        if let Some((j, &t)) = probe_time.iter().enumerate().find(|(_, &t)| t >= self.coherence_time_s) {
            return Err(Error::ProbeExceedsCoherence {
                level: j as u32 + 1,
                probe_time_s: t,
                coherence_time_s: self.coherence_time_s,
            });
        }

        Ok(DerivedParams {
            mean_snr: db_to_linear(self.tx_power_dbm + self.ref_pathloss_db - self.noise_power_dbm),
            d_direct,
            d_user_ris,
            d_ris_bs,
            direct_variance: d_direct.powf(-self.pathloss_exp_direct),
            user_ris_variance: d_user_ris.powf(-self.pathloss_exp_ris),
            ris_bs_variance: d_ris_bs.powf(-self.pathloss_exp_ris),
            max_level: levels,
            subarray_size,
            probe_time,
        })
    }
}

/// Validated, read-only quantities computed once from a [`SystemConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// `γ̄ = P_t·β0/N0`, linear.
    pub mean_snr: f64,
    pub d_direct: f64,
    pub d_user_ris: f64,
    pub d_ris_bs: f64,
    /// `d_s^-α1`
    pub direct_variance: f64,
    /// `d_{r,1}^-α2`
    pub user_ris_variance: f64,
    /// `d_{r,2}^-α2`
    pub ris_bs_variance: f64,
    max_level: u32,
    subarray_size: Vec<usize>,
    probe_time: Vec<f64>,
}

impl DerivedParams {
    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn check_level(&self, level: u32) -> Result<()> {
        if level == 0 || level > self.max_level {
            return Err(Error::LevelOutOfRange {
                level,
                max: self.max_level,
            });
        }
        Ok(())
    }

    /// Elements per subarray at `level`.
    pub fn subarray_size(&self, level: u32) -> Result<usize> {
        self.check_level(level)?;
        Ok(self.subarray_size[level as usize - 1])
    }

    /// `τ_CE(level)` in seconds.
    pub fn tau_ce(&self, level: u32) -> Result<f64> {
        self.check_level(level)?;
        Ok(self.probe_time[level as usize - 1])
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> {
        1..=self.max_level
    }
}

/// A validated configuration with its derived parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub config: SystemConfig,
    pub derived: DerivedParams,
}

impl System {
    pub fn new(config: SystemConfig) -> Result<Self> {
        let derived = config.validate()?;
        Ok(Self { config, derived })
    }

    pub fn tau_ce(&self, level: u32) -> Result<f64> {
        self.derived.tau_ce(level)
    }

    /// Probe time for a level already known to be in range.
    pub(crate) fn probe_cost(&self, level: u32) -> f64 {
        self.derived.probe_time[level as usize - 1]
    }

    pub fn max_level(&self) -> u32 {
        self.config.max_grouping_level
    }

    pub fn n_subchannels(&self) -> usize {
        self.config.n_subchannels
    }

    pub fn mean_snr(&self) -> f64 {
        self.derived.mean_snr
    }
}

/// `τ_CE(level) = 2^(level+1)·τ_s`.
pub fn probe_time(level: u32, pilot_duration_s: f64) -> f64 {
    (2.0f64).powi(level as i32 + 1) * pilot_duration_s
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_geometry_distances() {
        let d = SystemConfig::default().validate().unwrap();
        // Euclidean norms of the coordinate differences, evaluated by hand:
        // sqrt(1000²), sqrt(800²+100²+20²), sqrt(200²+100²+20²).
        assert_relative_eq!(d.d_direct, 1000.0, max_relative = 1e-12);
        assert_relative_eq!(d.d_user_ris, 650_400f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(d.d_ris_bs, 50_400f64.sqrt(), max_relative = 1e-12);
        assert!((d.d_user_ris - 806.47).abs() < 0.01);
        assert!((d.d_ris_bs - 224.50).abs() < 0.01);
    }

    #[test]
    fn probe_time_examples() {
        let d = SystemConfig::default().validate().unwrap();
        assert_relative_eq!(d.tau_ce(1).unwrap(), 40e-6, max_relative = 1e-12);
        assert_relative_eq!(d.tau_ce(10).unwrap(), 20.48e-3, max_relative = 1e-12);
        assert!(matches!(d.tau_ce(0), Err(Error::LevelOutOfRange { level: 0, max: 10 })));
        assert!(d.tau_ce(11).is_err());
        for j in 1..10 {
            assert_eq!(d.tau_ce(j + 1).unwrap(), 2.0 * d.tau_ce(j).unwrap());
            assert_eq!(d.subarray_size(j).unwrap() << j, 1024);
        }
        assert_eq!(d.subarray_size(10).unwrap(), 1);
    }

    #[test]
    fn unit_snr_identity() {
        let cfg = SystemConfig {
            tx_power_dbm: -70.0,
            ref_pathloss_db: -30.0,
            noise_power_dbm: -100.0,
            ..SystemConfig::desk()
        };
        assert_relative_eq!(cfg.validate().unwrap().mean_snr, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = SystemConfig {
            n_elements: 48,
            ..SystemConfig::desk()
        };
        assert!(matches!(cfg.validate(), Err(Error::NonPowerOfTwoElements(48))));

        let cfg = SystemConfig {
            n_elements: 128,
            ..SystemConfig::desk()
        };
        assert!(matches!(cfg.validate(), Err(Error::ElementLevelMismatch { .. })));

        let cfg = SystemConfig {
            coherence_time_s: 1e-3,
            ..SystemConfig::desk()
        };
        // τ_CE = 40µs·2^(J-1): 640µs at J=5, 1.28ms at J=6.
        assert!(matches!(
            cfg.validate(),
            Err(Error::ProbeExceedsCoherence { level: 6, .. })
        ));

        let cfg = SystemConfig {
            rr_duration_s: 0.0,
            ..SystemConfig::desk()
        };
        assert!(matches!(
            cfg.validate(),
            Err(Error::NonPositiveParameter("rr_duration_s"))
        ));

        let cfg = SystemConfig {
            user_position: [0.0, 100.0, 0.0],
            ..SystemConfig::desk()
        };
        assert!(matches!(cfg.validate(), Err(Error::NonPositiveParameter("d_direct"))));
    }

    #[test]
    fn with_elements_tracks_level() {
        let cfg = SystemConfig::desk().with_elements(256);
        assert_eq!(cfg.max_grouping_level, 8);
        assert!(cfg.validate().is_ok());
    }

    proptest::proptest! {
        #[test]
        fn distance_is_symmetric(a in proptest::array::uniform3(-1e4f64..1e4), b in proptest::array::uniform3(-1e4f64..1e4)) {
            proptest::prop_assert_eq!(distance(&a, &b), distance(&b, &a));
        }
    }
}
