//! Random channel gains and subarray grouping.
//!
//! Direct gains `h_d ~ CN(0, d_s^-α1)`. The RIS path of a (user, sub-channel)
//! link is kept only as the per-element products `f·g` with
//! `f ~ CN(0, d_{r,1}^-α2)` and `g ~ CN(0, d_{r,2}^-α2)`. The reference
//! path loss β0 is carried by the mean SNR, not by the gains.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::model::{Fading, System};

/// Draws one `CN(0, variance)` sample.
pub fn cscg<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * (0.5 * variance).sqrt()
}

/// Direct user-BS gains for the granted users, row-major `[user][sub-channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectGains {
    n_users: usize,
    n_subchannels: usize,
    gains: Vec<Complex64>,
}

impl DirectGains {
    pub fn new(n_users: usize, n_subchannels: usize, gains: Vec<Complex64>) -> Self {
        assert_eq!(gains.len(), n_users * n_subchannels);
        Self {
            n_users,
            n_subchannels,
            gains,
        }
    }

    /// Builds real, nonnegative gains from a magnitude matrix.
    pub fn from_magnitudes(rows: &[Vec<f64>]) -> Self {
        let n_subchannels = rows.first().map_or(0, Vec::len);
        let gains = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), n_subchannels);
                r.iter().map(|&m| Complex64::new(m, 0.0))
            })
            .collect();
        Self::new(rows.len(), n_subchannels, gains)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    pub fn is_empty(&self) -> bool {
        self.n_users == 0
    }

    pub fn get(&self, user: usize, subchannel: usize) -> Complex64 {
        self.gains[user * self.n_subchannels + subchannel]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.gains
    }
}

/// All gains seen during one RR round by its granted users.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub direct: DirectGains,
    n_elements: usize,
    /// `[user][sub-channel][element]`
    cascaded: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn new(direct: DirectGains, n_elements: usize, cascaded: Vec<Complex64>) -> Self {
        assert_eq!(cascaded.len(), direct.n_users() * direct.n_subchannels() * n_elements);
        Self {
            direct,
            n_elements,
            cascaded,
        }
    }

    pub fn n_users(&self) -> usize {
        self.direct.n_users()
    }

    pub fn n_subchannels(&self) -> usize {
        self.direct.n_subchannels()
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    /// Per-element cascaded products of one link.
    pub fn products(&self, user: usize, subchannel: usize) -> &[Complex64] {
        let start = (user * self.n_subchannels() + subchannel) * self.n_elements;
        &self.cascaded[start..start + self.n_elements]
    }

    /// Writes `user channel element re im` rows. Element 0 is the direct link;
    /// elements `1..=M` are the cascaded products.
    pub fn write_columns<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "user channel element re im")?;
        for k in 0..self.n_users() {
            for c in 0..self.n_subchannels() {
                let h = self.direct.get(k, c);
                writeln!(out, "{k} {c} 0 {:e} {:e}", h.re, h.im)?;
                for (m, z) in self.products(k, c).iter().enumerate() {
                    writeln!(out, "{k} {c} {} {:e} {:e}", m + 1, z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Effective cascaded gains at one grouping level, `[user][sub-channel][subarray]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedGains {
    pub level: u32,
    n_users: usize,
    n_subchannels: usize,
    n_subarrays: usize,
    gains: Vec<Complex64>,
}

impl GroupedGains {
    pub fn n_subarrays(&self) -> usize {
        self.n_subarrays
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    pub fn link(&self, user: usize, subchannel: usize) -> &[Complex64] {
        let start = (user * self.n_subchannels + subchannel) * self.n_subarrays;
        &self.gains[start..start + self.n_subarrays]
    }
}

/// Draws the direct gains of `n_granted` users.
pub fn sample_direct<R: Rng + ?Sized>(system: &System, rng: &mut R, n_granted: usize) -> DirectGains {
    let c = system.n_subchannels();
    let gains = match system.config.fading {
        Fading::Rayleigh => {
            let v = system.derived.direct_variance;
            (0..n_granted * c).map(|_| cscg(rng, v)).collect()
        }
        Fading::Fixed { direct_gain, .. } => {
            vec![Complex64::new(direct_gain.sqrt(), 0.0); n_granted * c]
        }
    };
    DirectGains::new(n_granted, c, gains)
}

/// Draws the `M` per-element products `f·g` of one link into `out`.
pub fn sample_link_products<R: Rng + ?Sized>(system: &System, rng: &mut R, out: &mut Vec<Complex64>) {
    out.clear();
    let m = system.config.n_elements;
    if !system.config.ris_enabled {
        out.resize(m, Complex64::new(0.0, 0.0));
        return;
    }
    match system.config.fading {
        Fading::Rayleigh => {
            let v1 = system.derived.user_ris_variance;
            let v2 = system.derived.ris_bs_variance;
            out.extend((0..m).map(|_| {
                let f = cscg(rng, v1);
                let g = cscg(rng, v2);
                f * g
            }));
        }
        Fading::Fixed { cascade_gain, .. } => {
            out.resize(m, Complex64::new(cascade_gain.sqrt(), 0.0));
        }
    }
}

/// Fresh, independent gains for `n_granted` users: all direct gains first,
/// then the cascaded products link by link.
pub fn sample_realization<R: Rng + ?Sized>(system: &System, rng: &mut R, n_granted: usize) -> ChannelRealization {
    let direct = sample_direct(system, rng, n_granted);
    let m = system.config.n_elements;
    let mut cascaded = Vec::with_capacity(n_granted * system.n_subchannels() * m);
    let mut link = Vec::with_capacity(m);
    for _ in 0..n_granted * system.n_subchannels() {
        sample_link_products(system, rng, &mut link);
        cascaded.extend_from_slice(&link);
    }
    ChannelRealization::new(direct, m, cascaded)
}

/// Block sums of consecutive elements: subarray `u` sums elements
/// `u·B .. (u+1)·B`.
pub fn group_link(products: &[Complex64], subarray_size: usize) -> Vec<Complex64> {
    products
        .chunks_exact(subarray_size)
        .map(|block| block.iter().sum())
        .collect()
}

pub fn group(system: &System, realization: &ChannelRealization, level: u32) -> Result<GroupedGains> {
    let b = system.derived.subarray_size(level)?;
    let n_subarrays = realization.n_elements() / b;
    let mut gains = Vec::with_capacity(realization.n_users() * realization.n_subchannels() * n_subarrays);
    for k in 0..realization.n_users() {
        for c in 0..realization.n_subchannels() {
            gains.extend(group_link(realization.products(k, c), b));
        }
    }
    Ok(GroupedGains {
        level,
        n_users: realization.n_users(),
        n_subchannels: realization.n_subchannels(),
        n_subarrays,
        gains,
    })
}

/// `Σ_u |h_u|` at every level `1..=J̄` for one link, index `J-1`.
///
/// Levels are built bottom-up by summing adjacent pairs, which equals the
/// block sum of the definition up to rounding.
pub fn magnitude_sums_by_level(products: &[Complex64], max_level: u32, out: &mut [f64]) {
    debug_assert_eq!(products.len(), 1 << max_level);
    debug_assert_eq!(out.len(), max_level as usize);
    let mut current: Vec<Complex64> = products.to_vec();
    for level in (1..=max_level).rev() {
        out[level as usize - 1] = current.iter().map(|z| z.norm()).sum();
        if level > 1 {
            let next: Vec<Complex64> = current.chunks_exact(2).map(|p| p[0] + p[1]).collect();
            current = next;
        }
    }
}
