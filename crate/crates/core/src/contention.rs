//! The Random Request phase.
//!
//! Each of `K` users picks one of `S` preambles uniformly at random; a user is
//! granted iff nobody else picked its preamble.

use rand::Rng;

/// Users granted in one RR phase, in ascending index order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GrantOutcome {
    pub granted: Vec<usize>,
}

impl GrantOutcome {
    pub fn n_granted(&self) -> usize {
        self.granted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.granted.is_empty()
    }
}

/// Preamble choices of every user, for callers that need them.
pub fn draw_preambles<R: Rng + ?Sized>(rng: &mut R, n_users: usize, n_preambles: usize) -> Vec<usize> {
    (0..n_users).map(|_| rng.random_range(0..n_preambles)).collect()
}

pub fn resolve_collisions(choices: &[usize], n_preambles: usize) -> GrantOutcome {
    let mut counts = vec![0u32; n_preambles];
    for &p in choices {
        counts[p] += 1;
    }
    GrantOutcome {
        granted: choices
            .iter()
            .enumerate()
            .filter(|(_, &p)| counts[p] == 1)
            .map(|(k, _)| k)
            .collect(),
    }
}

pub fn simulate_rr<R: Rng + ?Sized>(rng: &mut R, n_users: usize, n_preambles: usize) -> GrantOutcome {
    assert!(n_users >= 1 && n_preambles >= 1);
    let choices = draw_preambles(rng, n_users, n_preambles);
    resolve_collisions(&choices, n_preambles)
}

/// `E[K_n] = K·((S-1)/S)^(K-1)`.
pub fn expected_granted(n_users: usize, n_preambles: usize) -> f64 {
    let k = n_users as f64;
    let s = n_preambles as f64;
    k * ((s - 1.0) / s).powi(n_users as i32 - 1)
}

/// Closed-form granted-count distribution that treats the "exactly one
/// user" events of the `S` preambles as independent.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormPmf {
    /// `p[I]` for `I = 0..=S`, clamped to `[0, 1]`.
    pub probs: Vec<f64>,
    pub sum: f64,
}

impl ClosedFormPmf {
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
    }

    /// Mass placed on `I > K`, which no real RR phase can produce.
    pub fn mass_above(&self, n_users: usize) -> f64 {
        self.probs.iter().skip(n_users + 1).fold(0.0, |acc, p| acc + p)
    }
}

/// `p_I = C(S,I)·K^I·(S-1)^(I(K-1))·(S^K - K(S-1)^(K-1))^(S-I) / S^(KS)`.
///
/// Evaluated in log space; `S^(KS)` overflows `f64` for realistic sizes.
pub fn granted_pmf_closed_form(n_users: usize, n_preambles: usize) -> ClosedFormPmf {
    assert!(n_users >= 1 && n_preambles >= 1);
    let k = n_users as f64;
    let s = n_preambles as f64;
    // ln(K(S-1)^(K-1)) and ln(S^K); 0^0 = 1 when K = 1.
    let ln_single = if n_users == 1 {
        0.0
    } else if n_preambles == 1 {
        f64::NEG_INFINITY
    } else {
        k.ln() + (k - 1.0) * (s - 1.0).ln()
    };
    let ln_total = k * s.ln();
    // ln(S^K - K(S-1)^(K-1)) = ln S^K + ln(1 - ratio)
    let ratio = (ln_single - ln_total).exp();
    let ln_rest = if ratio >= 1.0 {
        f64::NEG_INFINITY
    } else {
        ln_total + (-ratio).ln_1p()
    };

    let probs = (0..=n_preambles)
        .map(|i| {
            let i_f = i as f64;
            let free = (n_preambles - i) as f64;
            let term = |count: f64, ln_v: f64| if count == 0.0 { 0.0 } else { count * ln_v };
            let ln_p = ln_binomial(n_preambles, i) + term(i_f, ln_single) + term(free, ln_rest) - s * ln_total;
            ln_p.exp().clamp(0.0, 1.0)
        })
        .collect::<Vec<_>>();
    let sum = probs.iter().sum();
    ClosedFormPmf { probs, sum }
}

/// Empirical distribution of the granted count over `n_mc` RR phases,
/// indexed `0..=S`.
pub fn granted_pmf_exact<R: Rng + ?Sized>(n_users: usize, n_preambles: usize, n_mc: usize, rng: &mut R) -> Vec<f64> {
    assert!(n_mc >= 1);
    let mut hist = vec![0usize; n_preambles + 1];
    for _ in 0..n_mc {
        hist[simulate_rr(rng, n_users, n_preambles).n_granted()] += 1;
    }
    hist.into_iter().map(|h| h as f64 / n_mc as f64).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}
