//! Explicit minorization constants and convergence certificates.
//!
//! The renewal floor over a window of length t* gives a minorization mass
//! alpha = a_-^N ∫_0^{t*} s^{N−1}/(N−1)! e^{−s a_+} ds, hence geometric L¹
//! contraction with rate lambda = −ln(1−alpha)/t* and prefactor
//! c = 1/(1−alpha). This module computes those constants, the recommended
//! window t* = N/a_+ with its rate lower bound, and the uniform-in-time
//! truncation bounds built from them.
//!
//! Quadrature runs in log space (f64 internally) so that alpha values far
//! below underflow are still resolvable through `log_alpha`.

use std::sync::OnceLock;

use thiserror::Error;

use crate::model::{ModelError, RateSpec, Times};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DoeblinError {
    #[error("argument out of range: {0}")]
    Argument(String),
    #[error("internal inconsistency: {0}")]
    Internal(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Minorization mass and the contraction constants it induces.
#[derive(Clone, Copy, Debug)]
pub struct DoeblinConstants<T: Scalar> {
    pub n: usize,
    pub t_star: T,
    pub alpha: T,
    /// ln(alpha), reliable even when alpha underflows.
    pub log_alpha: T,
    pub lambda: T,
    pub c: T,
}

/// Compute the constants for an N-times window [0, t_star].
pub fn constants<T: Scalar>(
    a_minus: T,
    a_plus: T,
    n: usize,
    t_star: T,
) -> Result<DoeblinConstants<T>, DoeblinError> {
    if n == 0 {
        return Err(DoeblinError::Argument("need n >= 1".into()));
    }
    let (am, ap, ts) = (
        a_minus.to_f64_lossy(),
        a_plus.to_f64_lossy(),
        t_star.to_f64_lossy(),
    );
    if !(am > 0.0) || !(ap > 0.0) || !(ts > 0.0) || !am.is_finite() || !ap.is_finite() || !ts.is_finite()
    {
        return Err(DoeblinError::Argument(
            "a_minus, a_plus, t_star must be positive and finite".into(),
        ));
    }
    if am > ap {
        return Err(DoeblinError::Argument("a_minus must not exceed a_plus".into()));
    }
    let log_alpha = quadrature_log_alpha(am, ap, n, ts);
    if n <= 30 {
        let closed = (n as f64) * (am / ap).ln() + ln_reg_lower_gamma(n, ap * ts);
        if (closed - log_alpha).abs() > 1e-8 * log_alpha.abs().max(1.0) {
            return Err(DoeblinError::Internal(format!(
                "quadrature log-alpha {log_alpha} disagrees with closed form {closed}"
            )));
        }
    }
    // alpha may underflow to 0 here; log_alpha stays informative.
    let alpha = log_alpha.exp();
    if alpha >= 1.0 || alpha.is_nan() {
        return Err(DoeblinError::Internal(format!(
            "minorization mass computed as {alpha}"
        )));
    }
    let lambda = -(-alpha).ln_1p() / ts;
    let c = 1.0 / (1.0 - alpha);
    Ok(DoeblinConstants {
        n,
        t_star,
        alpha: T::from_f64_lossy(alpha),
        log_alpha: T::from_f64_lossy(log_alpha),
        lambda: T::from_f64_lossy(lambda),
        c: T::from_f64_lossy(c),
    })
}

/// The window choice t* = N/a_+ with its guaranteed rate.
#[derive(Clone, Copy, Debug)]
pub struct RecommendedTstar<T: Scalar> {
    pub t_star: T,
    /// Lower bound on alpha/t*: (a_-/2N)·(a_-/a_+)^{N−1}.
    pub rate_bound: T,
    /// The verified incomplete-gamma mass ∫_0^N s^{N−1}e^{−s}/(N−1)! ds.
    pub gamma_check: T,
}

pub fn recommended_tstar<T: Scalar>(
    n: usize,
    a_minus: T,
    a_plus: T,
) -> Result<RecommendedTstar<T>, DoeblinError> {
    if n == 0 {
        return Err(DoeblinError::Argument("need n >= 1".into()));
    }
    let (am, ap) = (a_minus.to_f64_lossy(), a_plus.to_f64_lossy());
    if !(am > 0.0) || !(ap >= am) || !ap.is_finite() {
        return Err(DoeblinError::Argument(
            "need 0 < a_minus <= a_plus < inf".into(),
        ));
    }
    let nf = n as f64;
    let t_star = nf / ap;
    let rate_bound = am / (2.0 * nf) * (am / ap).powi(n as i32 - 1);
    let gamma_check = ln_reg_lower_gamma(n, nf).exp();
    if gamma_check < 0.5 - 1e-12 {
        return Err(DoeblinError::Internal(format!(
            "incomplete-gamma mass at the median came out {gamma_check} < 1/2"
        )));
    }
    Ok(RecommendedTstar {
        t_star: T::from_f64_lossy(t_star),
        rate_bound: T::from_f64_lossy(rate_bound),
        gamma_check: T::from_f64_lossy(gamma_check),
    })
}

/// Verdict on a measured distance series against the geometric envelope.
#[derive(Clone, Debug)]
pub struct ConvergenceReport<T: Scalar> {
    pub holds: bool,
    /// Max of d(t) / (c·e^{−lambda t}·d0 + tol_disc) over the series.
    pub worst_ratio: T,
    pub worst_t: T,
    /// Least-squares decay rate of ln d(t), when enough positive samples.
    pub fitted_rate: Option<T>,
    pub samples: usize,
}

/// Check d(t) ≤ c·e^{−lambda·t}·d0 + tol_disc at every sample.
///
/// A violation is reported, not raised: the certificate is the outcome.
pub fn certify_convergence<T: Scalar>(
    series: &[(T, T)],
    consts: &DoeblinConstants<T>,
    d0: T,
    tol_disc: T,
) -> Result<ConvergenceReport<T>, DoeblinError> {
    if !(d0 >= T::zero()) || !(tol_disc >= T::zero()) {
        return Err(DoeblinError::Argument(
            "d0 and tol_disc must be nonnegative".into(),
        ));
    }
    let c = consts.c.to_f64_lossy();
    let lambda = consts.lambda.to_f64_lossy();
    let d0 = d0.to_f64_lossy();
    let tol = tol_disc.to_f64_lossy();
    let mut worst_ratio = 0.0f64;
    let mut worst_t = 0.0f64;
    let mut fit: Vec<(f64, f64)> = Vec::new();
    for &(t, d) in series {
        let (t, d) = (t.to_f64_lossy(), d.to_f64_lossy());
        if !(d >= 0.0) || !(t >= 0.0) {
            return Err(DoeblinError::Argument(
                "series entries must be nonnegative".into(),
            ));
        }
        let bound = c * (-lambda * t).exp() * d0 + tol;
        let ratio = if bound > 0.0 { d / bound } else { f64::INFINITY };
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_t = t;
        }
        if d > 0.0 {
            fit.push((t, d.ln()));
        }
    }
    let fitted_rate = least_squares_slope(&fit).map(|s| T::from_f64_lossy(-s));
    Ok(ConvergenceReport {
        holds: worst_ratio <= 1.0 + 1e-12,
        worst_ratio: T::from_f64_lossy(worst_ratio),
        worst_t: T::from_f64_lossy(worst_t),
        fitted_rate,
        samples: series.len(),
    })
}

/// Per-cycle contraction over windows of length t*.
#[derive(Clone, Debug)]
pub struct CycleReport<T: Scalar> {
    pub holds: bool,
    /// Max of d((k+1)t*)/d(k·t*) over consecutive available cycles.
    pub worst_ratio: T,
    pub cycles: usize,
}

/// Check max_k d((k+1)t*)/d(k·t*) ≤ 1 − alpha + tol on a distance series.
pub fn cycle_contraction<T: Scalar>(
    series: &[(T, T)],
    consts: &DoeblinConstants<T>,
    tol: T,
) -> Result<CycleReport<T>, DoeblinError> {
    let ts = consts.t_star.to_f64_lossy();
    let mut at_cycles: Vec<(usize, f64)> = Vec::new();
    for &(t, d) in series {
        let (t, d) = (t.to_f64_lossy(), d.to_f64_lossy());
        let k = (t / ts).round();
        if (t - k * ts).abs() <= 1e-9 * ts.max(1.0) {
            at_cycles.push((k as usize, d));
        }
    }
    at_cycles.sort_by_key(|&(k, _)| k);
    at_cycles.dedup_by_key(|&mut (k, _)| k);
    let mut worst = 0.0f64;
    let mut cycles = 0usize;
    for w in at_cycles.windows(2) {
        let ((k0, d0), (k1, d1)) = (w[0], w[1]);
        if k1 != k0 + 1 || d0 <= 1e-290 {
            continue;
        }
        let ratio = d1 / d0;
        if ratio > worst {
            worst = ratio;
        }
        cycles += 1;
    }
    let limit = 1.0 - consts.alpha.to_f64_lossy() + tol.to_f64_lossy();
    Ok(CycleReport {
        holds: cycles == 0 || worst <= limit,
        worst_ratio: T::from_f64_lossy(worst),
        cycles,
    })
}

/// Uniform-in-time truncation bounds from a Doeblin window.
#[derive(Clone, Copy, Debug)]
pub struct UniformBounds<T: Scalar> {
    pub eps: T,
    pub t_star: T,
    pub alpha: T,
    /// Distance between the K-truncated and N-system steady marginals.
    pub steady_bound: T,
    /// Limsup of the running marginal gap: twice the steady bound.
    pub limsup_bound: T,
}

impl<T: Scalar> UniformBounds<T> {
    /// Running envelope after k windows: (1−alpha)^k·d0 + limsup_bound.
    pub fn running_bound(&self, d0: T, k: usize) -> T {
        (T::one() - self.alpha).powi(k as i32) * d0 + self.limsup_bound
    }
}

/// Bounds for approximating the N-horizon system by its K-truncation:
/// steady gap ≤ 2·t*·eps/alpha and limsup gap ≤ 4·t*·eps/alpha with
/// eps = tail_norm(K, N).
pub fn uniform_in_time_bounds<T: Scalar>(
    k: usize,
    horizon: Times,
    spec: &RateSpec<T>,
    t_star_k: T,
    alpha_k: T,
) -> Result<UniformBounds<T>, DoeblinError> {
    if !(t_star_k > T::zero()) || !(alpha_k > T::zero()) || !(alpha_k < T::one()) {
        return Err(DoeblinError::Argument(
            "need t_star > 0 and alpha in (0,1)".into(),
        ));
    }
    let eps = spec.tail_norm(k, horizon)?;
    let two = T::from_f64_lossy(2.0);
    let steady_bound = two * t_star_k * eps / alpha_k;
    Ok(UniformBounds {
        eps,
        t_star: t_star_k,
        alpha: alpha_k,
        steady_bound,
        limsup_bound: two * steady_bound,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (mut st, mut sy) = (0.0, 0.0);
    for &(t, y) in points {
        st += t;
        sy += y;
    }
    let (tbar, ybar) = (st / n, sy / n);
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, y) in points {
        num += (t - tbar) * (y - ybar);
        den += (t - tbar) * (t - tbar);
    }
    if den <= 0.0 {
        return None;
    }
    Some(num / den)
}

/// 16-point Gauss-Legendre nodes and weights on [−1, 1].
fn gl16() -> &'static [(f64, f64); 16] {
    static NODES: OnceLock<[(f64, f64); 16]> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = 16usize;
        let mut out = [(0.0f64, 0.0f64); 16];
        for i in 0..n {
            // Newton iteration from the Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..64 {
                let (p, dp) = legendre_pair(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_pair(n, x);
            out[i] = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        out
    })
}

/// Legendre polynomial P_n and its derivative at x, by the recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0f64, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// ln of a_-^n ∫_0^{t*} s^{n−1} e^{−a_+ s}/(n−1)! ds by panel-doubled
/// Gauss-Legendre in log space, to relative accuracy 1e-10.
fn quadrature_log_alpha(a_minus: f64, a_plus: f64, n: usize, t_star: f64) -> f64 {
    let lg = ln_factorial(n - 1);
    let prefix = (n as f64) * a_minus.ln();
    let log_f = |s: f64| (n as f64 - 1.0) * s.ln() - a_plus * s - lg;
    let mut prev = f64::NAN;
    let mut panels = 1usize;
    loop {
        let mut terms: Vec<f64> = Vec::with_capacity(panels * 16);
        let width = t_star / panels as f64;
        let half = width / 2.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * width;
            for &(x, w) in gl16().iter() {
                let s = mid + half * x;
                terms.push(w.ln() + half.ln() + log_f(s));
            }
        }
        let cur = logsumexp(&terms);
        if !prev.is_nan() && (cur - prev).abs() <= 1e-10 * cur.abs().max(1.0) {
            return prefix + cur;
        }
        prev = cur;
        if panels >= 1 << 16 {
            return prefix + cur;
        }
        panels *= 2;
    }
}

fn logsumexp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
    m + s.ln()
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|j| (j as f64).ln()).sum()
}

/// ln P(n, x): log of the regularized lower incomplete gamma at integer n.
fn ln_reg_lower_gamma(n: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    if x < nf + 1.0 {
        // Ascending series: P = x^n e^{−x}/n! · Σ_j x^j / Π_{i<=j}(n+i).
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        for j in 1..10_000 {
            term *= x / (nf + j as f64);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        nf * x.ln() - x - ln_factorial(n) + sum.ln()
    } else {
        // Complement: 1 − e^{−x} Σ_{k<n} x^k/k!, via logsumexp and expm1.
        let terms: Vec<f64> = (0..n)
            .map(|k| (k as f64) * x.ln() - x - ln_factorial(k))
            .collect();
        let log_s = logsumexp(&terms);
        (-(log_s.exp_m1())).ln()
    }
}
