//! Sum rates of the two transmission schemes, greedy OFDMA scheduling and
//! closed-form subarray beamforming.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::channel::{DirectGains, GroupedGains};
use crate::error::{Error, Result};

/// Which granted user (row of [`DirectGains`]) occupies each sub-channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleVector {
    pub assignment: Vec<Option<usize>>,
}

impl ScheduleVector {
    pub fn empty(n_subchannels: usize) -> Self {
        Self {
            assignment: vec![None; n_subchannels],
        }
    }

    pub fn n_assigned(&self) -> usize {
        self.assignment.iter().flatten().count()
    }

    /// `(sub-channel, user)` pairs in sub-channel order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(c, u)| u.map(|u| (c, u)))
    }

    pub fn check(&self, n_users: usize, n_subchannels: usize) -> Result<()> {
        if self.assignment.len() != n_subchannels {
            return Err(Error::InvalidSchedule(format!(
                "length {} for {} sub-channels",
                self.assignment.len(),
                n_subchannels
            )));
        }
        let mut seen = vec![false; n_users];
        for (c, u) in self.pairs() {
            if u >= n_users {
                return Err(Error::InvalidSchedule(format!(
                    "sub-channel {c} assigned to user {u} outside the {n_users} granted"
                )));
            }
            if std::mem::replace(&mut seen[u], true) {
                return Err(Error::InvalidSchedule(format!(
                    "user {u} appears on more than one sub-channel"
                )));
            }
        }
        Ok(())
    }
}

/// Per-sub-channel subarray phases at one grouping level; amplitudes are 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingVector {
    pub level: u32,
    /// `phases[c]` is empty for unprobed sub-channels.
    pub phases: Vec<Vec<f64>>,
}

pub fn link_rate(snr: f64, magnitude: f64) -> f64 {
    (1.0 + snr * magnitude * magnitude).log2()
}

/// `Σ_c 1[a_c≠0]·log2(1 + γ̄|h_{d,a_c}^c|²)`.
pub fn direct_sum_rate(schedule: &ScheduleVector, direct: &DirectGains, snr: f64) -> Result<f64> {
    schedule.check(direct.n_users(), direct.n_subchannels())?;
    Ok(schedule
        .pairs()
        .map(|(c, u)| link_rate(snr, direct.get(u, c).norm()))
        .sum())
}

/// Greedy user-to-sub-channel assignment.
///
/// All (user, sub-channel) gains are visited in descending magnitude and a
/// pair is taken when both its user and its sub-channel are still free, until
/// `min(K_n, C)` pairs are taken. Ties go to the lower sub-channel, then the
/// lower user.
pub fn greedy_schedule(direct: &DirectGains) -> Result<ScheduleVector> {
    if direct.is_empty() {
        return Err(Error::EmptyGrantSet);
    }
    let n_users = direct.n_users();
    let n_sub = direct.n_subchannels();
    let mut order: Vec<(f64, usize, usize)> = (0..n_users)
        .flat_map(|k| (0..n_sub).map(move |c| (k, c)))
        .map(|(k, c)| (direct.get(k, c).norm(), c, k))
        .collect();
    order.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let target = n_users.min(n_sub);
    let mut schedule = ScheduleVector::empty(n_sub);
    let mut user_used = vec![false; n_users];
    let mut taken = 0;
    for (_, c, k) in order {
        if taken == target {
            break;
        }
        if schedule.assignment[c].is_none() && !user_used[k] {
            schedule.assignment[c] = Some(k);
            user_used[k] = true;
            taken += 1;
        }
    }
    Ok(schedule)
}

/// `θ_u = mod(arg h_d - arg h_u, 2π)`; `arg 0 = 0`.
pub fn optimal_phases(h_direct: Complex64, grouped: &[Complex64]) -> Vec<f64> {
    let base = h_direct.arg();
    grouped
        .iter()
        .map(|h| {
            let t = (base - h.arg()).rem_euclid(TAU);
            if t >= TAU {
                0.0
            } else {
                t
            }
        })
        .collect()
}

/// `h_d + Σ_u h_u·e^{jθ_u}`.
pub fn combined_gain(h_direct: Complex64, grouped: &[Complex64], phases: &[f64]) -> Complex64 {
    grouped
        .iter()
        .zip(phases)
        .fold(h_direct, |acc, (h, &t)| acc + h * Complex64::from_polar(1.0, t))
}

/// Magnitude reached by the optimal phases, `|h_d| + Σ_u |h_u|`.
pub fn aligned_magnitude(h_direct: Complex64, grouped: &[Complex64]) -> f64 {
    h_direct.norm() + grouped.iter().map(|h| h.norm()).sum::<f64>()
}

pub fn beamforming(schedule: &ScheduleVector, direct: &DirectGains, grouped: &GroupedGains) -> BeamformingVector {
    let mut phases = vec![Vec::new(); schedule.assignment.len()];
    for (c, u) in schedule.pairs() {
        phases[c] = optimal_phases(direct.get(u, c), grouped.link(u, c));
    }
    BeamformingVector {
        level: grouped.level,
        phases,
    }
}

/// `Σ_c 1[b_c≠0]·log2(1 + γ̄(|h_d| + Σ_u |h_u|)²)`, i.e. the RIS-aided rate
/// under the optimal phases.
pub fn ris_sum_rate(schedule: &ScheduleVector, direct: &DirectGains, grouped: &GroupedGains, snr: f64) -> Result<f64> {
    schedule.check(direct.n_users(), direct.n_subchannels())?;
    if grouped.n_users() != direct.n_users() || grouped.n_subchannels() != direct.n_subchannels() {
        return Err(Error::InvalidSchedule(
            "grouped gains do not match the direct gains".into(),
        ));
    }
    Ok(schedule
        .pairs()
        .map(|(c, u)| link_rate(snr, aligned_magnitude(direct.get(u, c), grouped.link(u, c))))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{group, sample_realization, ChannelRealization};
    use crate::model::{System, SystemConfig};
    use crate::rng::{substream, Domain};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn mags(rows: &[&[f64]]) -> DirectGains {
        DirectGains::from_magnitudes(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn direct_rate_examples() {
        let d = mags(&[&[1.0]]);
        assert_eq!(direct_sum_rate(&ScheduleVector::empty(1), &d, 1.0).unwrap(), 0.0);
        let one = ScheduleVector {
            assignment: vec![Some(0)],
        };
        assert_relative_eq!(direct_sum_rate(&one, &d, 1.0).unwrap(), 1.0);

        let d = mags(&[&[1.0, 0.0], &[0.0, (1.0f64 / 3.0).sqrt()]]);
        let s = ScheduleVector {
            assignment: vec![Some(0), Some(1)],
        };
        assert_relative_eq!(direct_sum_rate(&s, &d, 3.0).unwrap(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn invalid_schedules_rejected() {
        let d = mags(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let dup = ScheduleVector {
            assignment: vec![Some(0), Some(0)],
        };
        assert!(matches!(direct_sum_rate(&dup, &d, 1.0), Err(Error::InvalidSchedule(_))));
        let out = ScheduleVector {
            assignment: vec![Some(2), None],
        };
        assert!(direct_sum_rate(&out, &d, 1.0).is_err());
        let short = ScheduleVector {
            assignment: vec![Some(0)],
        };
        assert!(direct_sum_rate(&short, &d, 1.0).is_err());
    }

    #[test]
    fn greedy_examples() {
        let s = greedy_schedule(&mags(&[&[3.0, 1.0, 2.0]])).unwrap();
        assert_eq!(s.assignment, vec![Some(0), None, None]);

        let s = greedy_schedule(&mags(&[&[5.0, 4.0], &[3.0, 1.0]])).unwrap();
        assert_eq!(s.assignment, vec![Some(0), Some(1)]);

        assert!(matches!(
            greedy_schedule(&DirectGains::new(0, 3, vec![])),
            Err(Error::EmptyGrantSet)
        ));
    }

    #[test]
    fn greedy_tie_break_is_channel_then_user() {
        let s = greedy_schedule(&mags(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(s.assignment, vec![Some(0), Some(1)]);
    }

    #[test]
    fn more_users_than_channels() {
        let s = greedy_schedule(&mags(&[&[1.0, 2.0], &[3.0, 0.5], &[2.5, 2.6]])).unwrap();
        // 3.0 (u1,c0), then 2.6 (u2,c1)
        assert_eq!(s.assignment, vec![Some(1), Some(2)]);
    }

    #[test]
    fn phase_alignment_examples() {
        let hd = Complex64::new(1.0, 0.0);
        let h = [Complex64::new(0.0, 1.0)];
        let th = optimal_phases(hd, &h);
        assert_relative_eq!(th[0], 3.0 * PI / 2.0, max_relative = 1e-12);
        assert_relative_eq!(combined_gain(hd, &h, &th).norm(), 2.0, max_relative = 1e-12);

        let zeros = [Complex64::new(0.0, 0.0); 4];
        let th = optimal_phases(Complex64::new(0.3, -0.4), &zeros);
        assert_relative_eq!(
            combined_gain(Complex64::new(0.3, -0.4), &zeros, &th).norm(),
            0.5,
            max_relative = 1e-12
        );
        assert!(th.iter().all(|t| (0.0..TAU).contains(t)));
    }

    #[test]
    fn phase_grid_never_beats_closed_form() {
        let mut rng = substream(21, Domain::Validation, 0);
        let step = TAU / 16.0;
        for _ in 0..20 {
            let hd = crate::channel::cscg(&mut rng, 1.0);
            let h: Vec<Complex64> = (0..4).map(|_| crate::channel::cscg(&mut rng, 1.0)).collect();
            let closed = combined_gain(hd, &h, &optimal_phases(hd, &h)).norm();
            let mut best = 0.0f64;
            for code in 0..16usize.pow(4) {
                let th: Vec<f64> = (0..4).map(|i| ((code >> (4 * i)) & 15) as f64 * step).collect();
                best = best.max(combined_gain(hd, &h, &th).norm());
            }
            assert!(closed >= best - 1e-12);
            // grid worst case misaligns each term by at most step/2
            let slack: f64 = h.iter().map(|z| z.norm()).sum::<f64>() * (1.0 - (step / 2.0).cos());
            assert!(closed - best <= slack + 1e-12);
            assert_relative_eq!(closed, aligned_magnitude(hd, &h), max_relative = 1e-10);
        }
    }

    #[test]
    fn ris_rate_examples() {
        let sys = System::new(SystemConfig::desk()).unwrap();
        let r = sample_realization(&sys, &mut substream(22, Domain::Validation, 0), 3);
        let sched = greedy_schedule(&r.direct).unwrap();
        let zero = ChannelRealization::new(r.direct.clone(), 64, vec![Complex64::new(0.0, 0.0); 3 * 4 * 64]);
        let g0 = group(&sys, &zero, 3).unwrap();
        let snr = sys.mean_snr();
        assert_relative_eq!(
            ris_sum_rate(&sched, &r.direct, &g0, snr).unwrap(),
            direct_sum_rate(&sched, &r.direct, snr).unwrap(),
            max_relative = 1e-12
        );
        for j in 1..=6 {
            let g = group(&sys, &r, j).unwrap();
            assert!(
                ris_sum_rate(&sched, &r.direct, &g, snr).unwrap() >= direct_sum_rate(&sched, &r.direct, snr).unwrap()
            );
            let bf = beamforming(&sched, &r.direct, &g);
            for (c, u) in sched.pairs() {
                let z = combined_gain(r.direct.get(u, c), g.link(u, c), &bf.phases[c]);
                assert_relative_eq!(
                    z.norm(),
                    aligned_magnitude(r.direct.get(u, c), g.link(u, c)),
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn ris_rate_hand_value() {
        assert_relative_eq!(link_rate(1.0, 1.0 + 1.0), 5f64.log2(), max_relative = 1e-12);
        assert_relative_eq!(5f64.log2(), 2.3219, max_relative = 1e-4);
    }

    #[test]
    fn finer_grouping_never_lowers_rate() {
        let sys = System::new(SystemConfig::desk()).unwrap();
        let snr = sys.mean_snr();
        for i in 0..50 {
            let r = sample_realization(&sys, &mut substream(23, Domain::Validation, i), 4);
            let sched = greedy_schedule(&r.direct).unwrap();
            let rates: Vec<f64> = (1..=6)
                .map(|j| ris_sum_rate(&sched, &r.direct, &group(&sys, &r, j).unwrap(), snr).unwrap())
                .collect();
            for w in rates.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn greedy_output_is_valid(
            n_users in 1usize..9,
            n_sub in 1usize..9,
            seed in 0u64..10_000,
        ) {
            let mut rng = substream(seed, Domain::Validation, 24);
            let d = DirectGains::new(
                n_users,
                n_sub,
                (0..n_users * n_sub).map(|_| crate::channel::cscg(&mut rng, 1.0)).collect(),
            );
            let s = greedy_schedule(&d).unwrap();
            proptest::prop_assert!(s.check(n_users, n_sub).is_ok());
            proptest::prop_assert_eq!(s.n_assigned(), n_users.min(n_sub));
        }

        #[test]
        fn ris_rate_monotone_in_magnitudes(
            hd in 0.0f64..2.0,
            h1 in 0.0f64..2.0,
            h2 in 0.0f64..2.0,
            bump in 0.0f64..1.0,
        ) {
            let base = link_rate(10.0, hd + h1 + h2);
            proptest::prop_assert!(link_rate(10.0, hd + bump + h1 + h2) >= base);
            proptest::prop_assert!(link_rate(10.0, hd + h1 + bump + h2) >= base);
        }
    }
}
