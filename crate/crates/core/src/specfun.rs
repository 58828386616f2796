//! Special functions for rotationally invariant bodies: modified Bessel
//! functions in the log domain, support-function values of Euclidean
//! balls, the ball's polarity integral, and a small catalog of exact
//! Bessel-moment integrals used as quadrature oracles.
//!
//! `I_ν` is computed from its ascending series (entire, all terms
//! positive — no cancellation) with a log-domain term recurrence, and
//! switches to the uniform asymptotic expansion for large arguments.
//! `K_ν` uses the integral representation
//! `K_ν(x) = ∫_0^∞ e^{-x cosh t} cosh(νt) dt`,
//! whose integrand is entire and single-peaked, on composite
//! Gauss-Legendre panels that track the peak.

use crate::integrate::gauss_legendre;
use crate::{Error, Result};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Cutovers for the modified Bessel evaluation strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselPolicy {
    /// Ascending series is used for `x <= series_cutoff`.
    pub series_cutoff: f64,
    /// Uniform asymptotic expansion is used for `x >= asymptotic_cutoff`.
    pub asymptotic_cutoff: f64,
    /// Hard cap on series terms.
    pub max_terms: usize,
}

impl Default for BesselPolicy {
    fn default() -> Self {
        BesselPolicy {
            series_cutoff: 1800.0,
            asymptotic_cutoff: 1800.0,
            max_terms: 40_000,
        }
    }
}

/// `log Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "log_gamma needs x > 0, got {x}"
        )));
    }
    Ok(ln_gamma(x))
}

fn check_nu_x(nu: f64, x: f64) -> Result<()> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Bessel order must be finite and >= 0, got {nu}"
        )));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Bessel argument must be finite and >= 0, got {x}"
        )));
    }
    Ok(())
}

fn log_bessel_i_series(nu: f64, x: f64, policy: &BesselPolicy) -> Result<f64> {
    // I_ν(x) = Σ_m (x/2)^{2m+ν} / (m! Γ(m+ν+1)); log-domain recurrence
    // t_m = t_{m-1} + 2 log(x/2) - log m - log(m+ν).
    let log_half_x = (0.5 * x).ln();
    let mut t = nu * log_half_x - ln_gamma(nu + 1.0);
    let mut max = t;
    let mut sum = 1.0; // Σ e^{t_i - max}
    let mut m = 0usize;
    loop {
        m += 1;
        if m > policy.max_terms {
            return Err(Error::NoConvergence {
                iterations: m,
                residual: (t - max).exp(),
            });
        }
        t += 2.0 * log_half_x - (m as f64).ln() - (m as f64 + nu).ln();
        if t > max {
            sum = sum * (max - t).exp() + 1.0;
            max = t;
        } else {
            sum += (t - max).exp();
            // terms decrease once m(m+ν) > (x/2)²
            if (m as f64) * (m as f64 + nu) > 0.25 * x * x && t < max - 45.0 {
                break;
            }
        }
    }
    Ok(max + sum.ln())
}

fn log_bessel_i_asymptotic(nu: f64, x: f64) -> f64 {
    // I_ν(x) ~ e^x/√(2πx) Σ_k (-1)^k a_k(ν)/x^k,
    // a_k = Π_{j=1..k} (4ν² - (2j-1)²) / (k! 8^k); truncate at the
    // smallest term (the sum stays near 1, plain arithmetic is safe).
    let four_nu2 = 4.0 * nu * nu;
    let mut term = 1.0_f64;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        term *= -(four_nu2 - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * x);
        if term.abs() >= prev {
            break;
        }
        prev = term.abs();
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    x - 0.5 * (2.0 * PI * x).ln() + sum.ln()
}

/// `log I_ν(x)` with an explicit policy.
pub fn bessel_i_log_with_policy(nu: f64, x: f64, policy: &BesselPolicy) -> Result<f64> {
    check_nu_x(nu, x)?;
    if x == 0.0 {
        return Ok(if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if x >= policy.asymptotic_cutoff && x > 10.0 * (nu * nu + 1.0) {
        Ok(log_bessel_i_asymptotic(nu, x))
    } else {
        log_bessel_i_series(nu, x, policy)
    }
}

/// `log I_ν(x)` (defined for all `x >= 0`; finite scale even when
/// `I_ν(x)` itself would overflow).
pub fn bessel_i_log(nu: f64, x: f64) -> Result<f64> {
    bessel_i_log_with_policy(nu, x, &BesselPolicy::default())
}

/// `I_ν(x)`; overflows to `+∞` for `x` beyond ~700 nats.
pub fn bessel_i(nu: f64, x: f64) -> Result<f64> {
    Ok(bessel_i_log(nu, x)?.exp())
}

/// `log K_ν(x)` via `∫_0^∞ e^{-x cosh t} cosh(νt) dt` on peak-tracking
/// composite Gauss-Legendre panels.
pub fn bessel_k_log(nu: f64, x: f64) -> Result<f64> {
    check_nu_x(nu, x)?;
    if x == 0.0 {
        return Err(Error::InvalidParameter("K_ν diverges at x = 0".into()));
    }
    // log integrand (stable cosh log for large arguments)
    let log_h = |t: f64| -> f64 {
        let log_cosh_nu_t = if nu * t > 30.0 {
            nu * t - std::f64::consts::LN_2
        } else {
            (nu * t).cosh().ln()
        };
        -x * t.cosh() + log_cosh_nu_t
    };
    // integrand peak: d/dt = -x sinh t + ν tanh(νt) ≈ 0 at sinh t = ν/x
    let t_peak = if nu > 0.0 { (nu / x).asinh() } else { 0.0 };
    // extend until the integrand is ~50 nats below the peak
    let peak_val = log_h(t_peak);
    let mut t_end = t_peak + 1.0;
    for _ in 0..400 {
        if log_h(t_end) < peak_val - 50.0 - 2.0 * (1.0 + t_end).ln() {
            break;
        }
        t_end += 0.5;
    }
    // panel edges: resolve the peak (width ~ 1/√x for x large)
    let w0 = (6.0 / x.sqrt()).min(0.5).max(1e-3);
    let mut edges = vec![0.0];
    if t_peak > 1e-8 {
        for frac in [0.25, 0.5, 0.75, 1.0] {
            edges.push(t_peak * frac);
        }
    }
    let mut t = *edges.last().unwrap();
    let mut w = w0;
    while t < t_end {
        t = (t + w).min(t_end);
        edges.push(t);
        w = (w * 2.0).min(0.5);
    }
    let (u, gw) = gauss_legendre(32);
    let mut acc = crate::extreal::LogSumExp::new();
    for pair in edges.windows(2) {
        let mid = 0.5 * (pair[0] + pair[1]);
        let half = 0.5 * (pair[1] - pair[0]);
        if half <= 0.0 {
            continue;
        }
        for k in 0..32 {
            let tk = mid + half * u[k];
            acc.add(log_h(tk) + (gw[k] * half).ln());
        }
    }
    Ok(acc.value())
}

/// `K_ν(x)`.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    Ok(bessel_k_log(nu, x)?.exp())
}

/// `r · K_{ν+1}(r) · I_ν(r)`, computed as a sum of logs; lies in
/// `(1/2, 1]` for every `ν >= 0, r > 0`.
pub fn gaunt_product(nu: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("gaunt_product needs r > 0".into()));
    }
    let log_val = r.ln() + bessel_k_log(nu + 1.0, r)? + bessel_i_log(nu, r)?;
    Ok(log_val.exp())
}

/// Soft support function of the unit Euclidean ball in direction of
/// norm `rho`:
/// `(1/p) log[ Γ(1+n/2) (2/(p ρ))^{n/2} I_{n/2}(p ρ) ]`,
/// with the limit value `0` at `ρ = 0`.
pub fn ball_support(n: usize, p: f64, rho: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if !(p > 0.0) {
        return Err(Error::InvalidParameter("p must be > 0".into()));
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter("rho must be >= 0".into()));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let half_n = n as f64 / 2.0;
    let z = p * rho;
    let log_val = ln_gamma(1.0 + half_n) + half_n * (2.0 / z).ln() + bessel_i_log(half_n, z)?;
    Ok(log_val / p)
}

/// `log ∫_0^∞ r^{n + n/(2p) - 1} / I_{n/2}(r)^{1/p} dr`, the radial
/// integral behind the ball's polarity volume. Truncated where the
/// integrand has fallen ~50 nats below scale (the integrand decays like
/// `e^{-r/p}` once `I` turns exponential), on dyadic panels.
pub fn log_ball_mahler_integral(n: usize, p: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if !(p > 0.0) {
        return Err(Error::InvalidParameter("p must be > 0".into()));
    }
    let half_n = n as f64 / 2.0;
    let alpha = n as f64 + half_n / p; // power + 1
    // integrand exponent: (α-1) ln r - (1/p) log I_{n/2}(r)
    let policy = BesselPolicy::default();
    let log_h = |r: f64| -> Result<f64> {
        Ok((alpha - 1.0) * r.ln() - bessel_i_log_with_policy(half_n, r, &policy)? / p)
    };
    // truncation: r/p dominates once r >> n; fixed-point for the 50-nat drop
    let mut r_max: f64 = p * 50.0 + 10.0 * n as f64;
    for _ in 0..8 {
        r_max = p * (50.0 + alpha * r_max.max(std::f64::consts::E).ln()) + 10.0 * n as f64;
    }
    let mut edges = vec![0.0, 0.25, 0.5, 1.0];
    let mut t = 1.0;
    while t < r_max {
        t *= 2.0;
        edges.push(t.min(r_max));
    }
    let (u, gw) = gauss_legendre(48);
    let mut acc = crate::extreal::LogSumExp::new();
    for pair in edges.windows(2) {
        let mid = 0.5 * (pair[0] + pair[1]);
        let half = 0.5 * (pair[1] - pair[0]);
        if half <= 0.0 {
            continue;
        }
        for k in 0..48 {
            let rk = mid + half * u[k];
            acc.add(log_h(rk)? + (gw[k] * half).ln());
        }
    }
    Ok(acc.value())
}

/// `log M_p(B_2^n)` for the unit Euclidean ball:
/// `[n π^n / (2^{n/2p} p^n Γ(1+n/2)^{2+1/p})] · (radial integral)`.
pub fn log_mahler_ball(n: usize, p: f64) -> Result<f64> {
    let half_n = n as f64 / 2.0;
    let nf = n as f64;
    let log_const = nf.ln() + nf * PI.ln()
        - (half_n / p) * std::f64::consts::LN_2
        - nf * p.ln()
        - (2.0 + 1.0 / p) * ln_gamma(1.0 + half_n);
    Ok(log_const + log_ball_mahler_integral(n, p)?)
}

/// `M_p(B_2^n)`.
pub fn mahler_ball(n: usize, p: f64) -> Result<f64> {
    Ok(log_mahler_ball(n, p)?.exp())
}

/// Exact value of `∫_0^∞ t^{2m + n/2 + 1} K_{n/2+1}(t) dt` for odd `n`:
/// `2^{2m + n/2} Γ(m + 1/2) Γ(m + (n+3)/2)` (the Mellin transform of
/// `K_ν` evaluated at a half-integer point).
pub fn kint_exact(n: usize, m: usize) -> Result<f64> {
    if n % 2 == 0 {
        return Err(Error::InvalidParameter("kint_exact needs odd n >= 1".into()));
    }
    let nf = n as f64;
    let mf = m as f64;
    let log_val = (2.0 * mf + 0.5 * nf) * std::f64::consts::LN_2
        + ln_gamma(mf + 0.5)
        + ln_gamma(mf + 0.5 * (nf + 3.0));
    Ok(log_val.exp())
}

/// The same Bessel moment by brute quadrature (dyadic panels down to the
/// origin, out to exponential decay); the oracle for [`kint_exact`].
pub fn kint_quadrature(n: usize, m: usize) -> Result<f64> {
    let nu = n as f64 / 2.0 + 1.0;
    let power = 2.0 * m as f64 + 0.5 * n as f64 + 1.0;
    let mut edges = vec![0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0];
    let mut t = 1.0;
    let r_max = 80.0 + 4.0 * power;
    while t < r_max {
        t = (2.0 * t).min(r_max);
        edges.push(t);
    }
    let (u, gw) = gauss_legendre(48);
    let mut acc = crate::extreal::LogSumExp::new();
    for pair in edges.windows(2) {
        let mid = 0.5 * (pair[0] + pair[1]);
        let half = 0.5 * (pair[1] - pair[0]);
        for k in 0..48 {
            let rk = mid + half * u[k];
            if rk <= 0.0 {
                continue;
            }
            acc.add(power * rk.ln() + bessel_k_log(nu, rk)? + (gw[k] * half).ln());
        }
    }
    Ok(acc.value().exp())
}

/// `log` of the Bessel-moment integral at the order that governs the
/// ball's polarity integral asymptotics: [`kint_exact`]`(n, (n-1)/2)`
/// in log form, for odd `n`.
pub fn log_p1_asymptotic(n: usize) -> Result<f64> {
    if n % 2 == 0 || n == 0 {
        return Err(Error::InvalidParameter(
            "log_p1_asymptotic needs odd n >= 1".into(),
        ));
    }
    let nf = n as f64;
    Ok((1.5 * nf - 1.0) * std::f64::consts::LN_2 + ln_gamma(0.5 * nf) + ln_gamma(nf + 1.0))
}

/// Both sides of
/// `∫_{-1}^{1} (1-x²)^{(n-1)/2} e^{ax} dx = √π Γ((n+1)/2) (2/a)^{n/2} I_{n/2}(a)`;
/// the left side by quadrature (substituting `x = sin θ` keeps the
/// integrand smooth for every parity of `n`), the right in closed form.
pub fn beta_bessel_identity(n: usize, a: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidParameter("a must be > 0".into()));
    }
    let nf = n as f64;
    // lhs = ∫_{-π/2}^{π/2} cos^n θ e^{a sin θ} dθ
    let (u, w) = gauss_legendre(196);
    let half = 0.5 * PI;
    let mut lhs = 0.0;
    for k in 0..u.len() {
        let th = half * u[k];
        lhs += w[k] * half * th.cos().powi(n as i32) * (a * th.sin()).exp();
    }
    let rhs = (0.5 * PI.ln() + ln_gamma((nf + 1.0) / 2.0)
        + (nf / 2.0) * (2.0 / a).ln()
        + bessel_i_log(nf / 2.0, a)?)
    .exp();
    Ok((lhs, rhs))
}
