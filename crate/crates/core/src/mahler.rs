//! `L^p`-Mahler integrals of functions and convex bodies.
//!
//! For a function `f` with `V(f) = ∫ e^{-f} ∈ (0, ∞)` and `p > 0`,
//!
//! ```text
//! M_p(f) = V(f) · V(f^{*,p})
//! ```
//!
//! and for a convex body `K` (as the `+∞`-valued indicator),
//! `M_p(K) = |K| ∫ e^{-h_{p,K}(y)} dy` with `h_{p,K}` the soft support
//! function. This module computes both by log-domain quadrature over
//! the transform handle, provides the closed forms for the three model
//! families (`ℓ¹` norm, quadratic, linear-on-an-orthant), and checks
//! the quotient identity connecting `M_p` to a ratio of Lebesgue norms
//! of a density and its Laplace transform.

use crate::extreal::ExtReal::{self, Finite, PosInf};
use crate::functions::{CustomFn, FunctionHandle};
use crate::integrate::{self, QuadratureSpec};
use crate::transform::{self, EvalPath, TransformHandle};
use crate::{Error, Result};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;
use std::sync::Arc;

/// How the transform values feeding the dual volume were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Quadrature,
}

/// Families with a fully closed `M_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedFamily {
    L1Norm,
    Quadratic,
    FunctionalSimplex,
}

/// Result of a Mahler-integral computation. `value` is `+∞` exactly
/// when the dual-volume integral diverges (the origin outside the
/// interior of the effective domain).
#[derive(Debug, Clone)]
pub struct MahlerReport {
    pub value: f64,
    pub method: Method,
    /// `(V(f), V(f^{*,p}))`.
    pub components: (f64, f64),
    /// Crude absolute accuracy estimate for `value`.
    pub tolerance: f64,
}

impl MahlerReport {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// `M_p(f) = V(f) · V(f^{*,p})` with the dual volume by quadrature
/// over the transform handle (closed-form evaluations where the base
/// admits them).
pub fn mahler(f: &FunctionHandle, p: f64, spec: &QuadratureSpec) -> Result<MahlerReport> {
    let t = transform::lp_transform(f, p, spec)?;
    mahler_of_transform(&t, spec)
}

/// [`mahler`] on a prebuilt transform handle; lets callers force the
/// quadrature route for dual-path agreement checks.
pub fn mahler_of_transform(t: &TransformHandle, spec: &QuadratureSpec) -> Result<MahlerReport> {
    let log_vf = t.log_volume_base();
    let dual = t.as_function()?;
    let method = match t.path() {
        EvalPath::ClosedForm => Method::ClosedForm,
        EvalPath::Quadrature => Method::Quadrature,
    };
    match integrate::log_volume(&dual, spec) {
        Ok(log_vd) => {
            if log_vd < -690.0 {
                return Err(Error::ZeroVolume);
            }
            let value = (log_vf + log_vd).exp();
            let rel = match method {
                Method::ClosedForm => 1e-9,
                Method::Quadrature => 1e-5,
            };
            Ok(MahlerReport {
                value,
                method,
                components: (log_vf.exp(), log_vd.exp()),
                tolerance: rel * value,
            })
        }
        Err(Error::Divergent) => Ok(MahlerReport {
            value: f64::INFINITY,
            method,
            components: (log_vf.exp(), f64::INFINITY),
            tolerance: f64::INFINITY,
        }),
        Err(e) => Err(e),
    }
}

/// `M_p(K) = |K| ∫ e^{-h_{p,K}}` for an indicator handle; identical to
/// [`mahler`] of the `+∞`-valued indicator.
pub fn mahler_body(k: &FunctionHandle, p: f64, spec: &QuadratureSpec) -> Result<MahlerReport> {
    if !k.is_indicator() {
        return Err(Error::InvalidParameter(format!(
            "mahler_body needs an indicator handle, got {}",
            k.describe()
        )));
    }
    mahler(k, p, spec)
}

/// Closed-form `M_p` for the three model families in dimension `n`.
pub fn mahler_closed(kind: ClosedFamily, n: usize, p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "closed Mahler forms need finite p > 0, got {p}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let q = 1.0 / p;
    let per_dim = match kind {
        ClosedFamily::L1Norm => {
            (1.0 + q) * (p + 1.0).ln() - p.ln()
                + (2.0 * PI.sqrt()).ln()
                + ln_gamma(1.0 + q)
                - ln_gamma(1.5 + q)
        }
        ClosedFamily::Quadratic => {
            (2.0 * PI).ln() + 0.5 * ((1.0 + p) * q * (1.0 + p).ln() - p.ln())
        }
        ClosedFamily::FunctionalSimplex => 1.0 + q + q * p.ln() + ln_gamma(1.0 + q),
    };
    Ok((n as f64 * per_dim).exp())
}

/// Exponent of the Laplace transform raised to a negative power:
/// `y ↦ (1/p) log (LF)(y)` where `LF(y) = ∫ e^{⟨x,y⟩} F(x) dx` and
/// `F = e^{-φ/a}`, so that `e^{-·}` integrates to `∫ (LF)^{-1/p}`.
struct NegPowerLaplace {
    phi: FunctionHandle,
    p: f64,
    spec: QuadratureSpec,
}

impl CustomFn for NegPowerLaplace {
    fn dim(&self) -> usize {
        self.phi.dim()
    }

    fn eval(&self, y: &[f64]) -> ExtReal {
        let scaled: Vec<f64> = y.iter().map(|v| v / self.p).collect();
        let tilted = match transform::tilted_exponent(&self.phi, self.p, &scaled) {
            Ok(t) => t,
            Err(_) => return PosInf,
        };
        match integrate::log_volume(&tilted, &self.spec) {
            Ok(log_lf) => Finite(log_lf / self.p),
            // LF = +∞ makes the negative power vanish: zero mass here.
            Err(_) => PosInf,
        }
    }

    fn describe(&self) -> String {
        format!("neg-power-laplace(p={}; {})", self.p, self.phi.describe())
    }
}

/// Both sides of the norm-quotient identity
///
/// ```text
/// ‖F‖_{L^a} / ‖LF‖_{L^{a/(a-1)}} = p^{np} M_p(φ)^p,   F = e^{-φ/a},
/// ```
///
/// with `p = (1-a)/a` and `LF` the Laplace transform of `F`. The left
/// side is computed from the two norm integrals by nested quadrature
/// (the negative-exponent norm as `(∫ (LF)^{-1/p})^{-p}`, entirely in
/// log domain); the right side goes through [`mahler`]. Returns
/// `(lhs, rhs)`.
pub fn nakamura_tsuji_quotient(
    phi: &FunctionHandle,
    a: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "norm exponent a must lie in (0,1), got {a}"
        )));
    }
    let p = (1.0 - a) / a;
    let n = phi.dim() as f64;

    // ‖F‖_a: ∫ F^a = ∫ e^{-φ} = V(φ).
    let log_norm_f = integrate::log_volume(phi, spec)? / a;

    // ∫ (LF)^{-1/p} dy by the outer quadrature.
    let neg_power = FunctionHandle::custom(Arc::new(NegPowerLaplace {
        phi: phi.clone(),
        p,
        spec: spec.clone(),
    }))?;
    let log_neg = integrate::log_volume(&neg_power, spec)?;
    let log_lhs = log_norm_f + p * log_neg;

    let m = mahler(phi, p, spec)?;
    if !m.is_finite() {
        return Err(Error::Divergent);
    }
    let log_rhs = n * p * p.ln() + p * m.value.ln();
    Ok((log_lhs.exp(), log_rhs.exp()))
}

/// One family member's scan outcome: its Mahler integral, the
/// translation infimum, and signed margins to the conjectured
/// orthant-family lower bound and the proved Gaussian upper bound.
#[derive(Debug, Clone)]
pub struct ScanRecord {
    pub description: String,
    pub mahler: f64,
    pub mahler_inf: f64,
    /// Orthant-family closed value at the same `(n, p)`.
    pub lower_bound: f64,
    /// `mahler - lower_bound` (conjectured `>= 0`).
    pub lower_margin: f64,
    /// Quadratic closed value at the same `(n, p)`.
    pub upper_bound: f64,
    /// `upper_bound - mahler_inf` (proved `>= 0`).
    pub upper_margin: f64,
    /// Set when either margin is decisively negative — a numerical bug
    /// or a counterexample; never silently dropped.
    pub flagged: bool,
}

/// Evaluate every family member against the bracketing bounds.
/// Members are processed in parallel; the report preserves input order.
pub fn conjecture_scan(
    family: &[FunctionHandle],
    p: f64,
    spec: &QuadratureSpec,
) -> Result<Vec<ScanRecord>> {
    use rayon::prelude::*;
    if family.is_empty() {
        return Err(Error::InvalidParameter("empty function family".into()));
    }
    family
        .par_iter()
        .map(|f| {
            let n = f.dim();
            let m = mahler(f, p, spec)?;
            let inf = crate::santalo::mahler_inf(f, p, spec)?;
            let lower = mahler_closed(ClosedFamily::FunctionalSimplex, n, p)?;
            let upper = mahler_closed(ClosedFamily::Quadratic, n, p)?;
            let lower_margin = m.value - lower;
            let upper_margin = upper - inf;
            let slack = 1e-6;
            let flagged =
                lower_margin < -slack * lower.abs() || upper_margin < -slack * upper.abs();
            Ok(ScanRecord {
                description: f.describe(),
                mahler: m.value,
                mahler_inf: inf,
                lower_bound: lower,
                lower_margin,
                upper_bound: upper,
                upper_margin,
                flagged,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{pullback, tensor, translate};
    use crate::transform::lp_transform_quadrature;
    use nalgebra::DMatrix;
    use std::f64::consts::E;

    fn spec_for(n: usize) -> QuadratureSpec {
        QuadratureSpec::default_for_dim(n)
    }

    fn assert_rel(got: f64, want: f64, tol: f64, what: &str) {
        let err = (got - want).abs() / want.abs().max(1e-300);
        assert!(err < tol, "{what}: got {got}, want {want} (rel {err:.3e})");
    }

    #[test]
    fn closed_forms_match_published_constants() {
        assert_rel(
            mahler_closed(ClosedFamily::L1Norm, 1, 1.0).unwrap(),
            32.0 / 3.0,
            1e-12,
            "l1 n=1 p=1",
        );
        assert_rel(
            mahler_closed(ClosedFamily::L1Norm, 2, 1.0).unwrap(),
            (32.0 / 3.0) * (32.0 / 3.0),
            1e-12,
            "l1 n=2 p=1",
        );
        assert_rel(
            mahler_closed(ClosedFamily::Quadratic, 1, 1.0).unwrap(),
            4.0 * PI,
            1e-12,
            "quadratic n=1 p=1",
        );
        assert_rel(
            mahler_closed(ClosedFamily::Quadratic, 3, 1.0).unwrap(),
            (4.0 * PI).powi(3),
            1e-12,
            "quadratic n=3 p=1",
        );
        assert_rel(
            mahler_closed(ClosedFamily::FunctionalSimplex, 1, 1.0).unwrap(),
            E * E,
            1e-12,
            "functional simplex n=1 p=1",
        );
        // large-p limits: 4 for ℓ¹, 2π for the quadratic, e for the orthant family
        assert_rel(
            mahler_closed(ClosedFamily::L1Norm, 1, 1e3).unwrap(),
            4.0,
            1e-2,
            "l1 large p",
        );
        assert_rel(
            mahler_closed(ClosedFamily::Quadratic, 1, 1e3).unwrap(),
            2.0 * PI,
            1e-2,
            "quadratic large p",
        );
        assert_rel(
            mahler_closed(ClosedFamily::FunctionalSimplex, 1, 1e3).unwrap(),
            E,
            1e-2,
            "functional simplex large p",
        );
    }

    #[test]
    fn quadrature_reproduces_closed_values_1d() {
        let spec = spec_for(1);
        let cases = [
            (FunctionHandle::l1(1).unwrap(), ClosedFamily::L1Norm),
            (FunctionHandle::quadratic(1).unwrap(), ClosedFamily::Quadratic),
            (
                FunctionHandle::functional_simplex(1).unwrap(),
                ClosedFamily::FunctionalSimplex,
            ),
        ];
        for (f, fam) in &cases {
            let want = mahler_closed(*fam, 1, 1.0).unwrap();
            // route 1: closed transform evaluations, numeric dual volume
            let m = mahler(f, 1.0, &spec).unwrap();
            assert_eq!(m.method, Method::ClosedForm);
            assert_rel(m.value, want, 1e-8, &format!("{fam:?} closed route"));
            assert_rel(
                m.components.0 * m.components.1,
                m.value,
                1e-12,
                "components consistency",
            );
            // route 2: everything by quadrature
            let t = lp_transform_quadrature(f, 1.0, &spec).unwrap();
            let m = mahler_of_transform(&t, &spec).unwrap();
            assert_eq!(m.method, Method::Quadrature);
            assert_rel(m.value, want, 1e-6, &format!("{fam:?} quadrature route"));
        }
    }

    #[test]
    fn closed_transform_dual_route_2d() {
        let spec = spec_for(2);
        for p in [1.0, 2.0] {
            for (f, fam) in [
                (FunctionHandle::l1(2).unwrap(), ClosedFamily::L1Norm),
                (FunctionHandle::quadratic(2).unwrap(), ClosedFamily::Quadratic),
                (
                    FunctionHandle::functional_simplex(2).unwrap(),
                    ClosedFamily::FunctionalSimplex,
                ),
            ] {
                let want = mahler_closed(fam, 2, p).unwrap();
                let m = mahler(&f, p, &spec).unwrap();
                // p > 1 duals have algebraic cusps at their domain
                // walls, which caps fixed-rule accuracy near 1e-6
                assert_rel(m.value, want, 1e-5, &format!("{fam:?} n=2 p={p}"));
            }
        }
    }

    #[test]
    fn tensoriality() {
        let spec = spec_for(2);
        let l1 = FunctionHandle::l1(1).unwrap();
        let quad = FunctionHandle::quadratic(1).unwrap();
        let fg = tensor(&l1, &quad).unwrap();
        let m = mahler(&fg, 1.0, &spec).unwrap();
        let want = mahler_closed(ClosedFamily::L1Norm, 1, 1.0).unwrap()
            * mahler_closed(ClosedFamily::Quadratic, 1, 1.0).unwrap();
        assert_rel(m.value, want, 3e-6, "M(f⊗g) = M(f)M(g)");

        // shifted factor: product structure survives translation
        let shifted = translate(&quad, &[0.4]).unwrap();
        let fg = tensor(&l1, &shifted).unwrap();
        let m2 = mahler(&fg, 1.0, &spec).unwrap();
        let m_l1 = mahler(&l1, 1.0, &spec_for(1)).unwrap();
        let m_sh = mahler(&shifted, 1.0, &spec_for(1)).unwrap();
        assert_rel(m2.value, m_l1.value * m_sh.value, 3e-6, "tensor with shift");
    }

    #[test]
    fn monotone_in_p() {
        // M_q ≤ M_p for p ≤ q
        for fam in [
            ClosedFamily::L1Norm,
            ClosedFamily::Quadratic,
            ClosedFamily::FunctionalSimplex,
        ] {
            let mut prev = f64::INFINITY;
            for p in [0.5, 1.0, 2.0, 4.0, 10.0] {
                let v = mahler_closed(fam, 1, p).unwrap();
                assert!(v <= prev * (1.0 + 1e-12), "{fam:?} not decreasing at p={p}");
                prev = v;
            }
        }
        // numeric route agrees on a sample pair
        let spec = spec_for(1);
        let fs = FunctionHandle::functional_simplex(1).unwrap();
        let m1 = mahler(&fs, 1.0, &spec).unwrap().value;
        let m4 = mahler(&fs, 4.0, &spec).unwrap().value;
        assert!(m4 < m1);
    }

    #[test]
    fn reverse_bound_for_centered_functions() {
        // M_q(φ) ≥ (p/(1+p)^{1+1/p})^n M_p(φ) for centered φ and q ≥ p
        let c = |p: f64, n: f64| (p / (1.0 + p).powf(1.0 + 1.0 / p)).powf(n);
        for fam in [ClosedFamily::L1Norm, ClosedFamily::Quadratic] {
            let p = 1.0;
            let mp = mahler_closed(fam, 1, p).unwrap();
            for q in [2.0, 4.0, 10.0, 1e3] {
                let mq = mahler_closed(fam, 1, q).unwrap();
                assert!(
                    mq >= c(p, 1.0) * mp - 1e-12,
                    "{fam:?} reverse bound failed at q={q}: {mq} vs {}",
                    c(p, 1.0) * mp
                );
            }
        }
        // numeric sample: centered ℓ¹ in 2-D
        let spec = spec_for(2);
        let l1 = FunctionHandle::l1(2).unwrap();
        let mp = mahler(&l1, 1.0, &spec).unwrap().value;
        let mq = mahler(&l1, 3.0, &spec).unwrap().value;
        assert!(mq >= c(1.0, 2.0) * mp * (1.0 - 1e-6));
    }

    #[test]
    fn ball_two_routes() {
        // body route: |K| ∫ e^{-h_{p,K}} with support values from the
        // radial special function and a full n-D dual quadrature;
        // reference route: 1-D radial integral against Bessel functions
        for n in 1..=3usize {
            let ball = FunctionHandle::ball(n, 1.0).unwrap();
            let m = mahler_body(&ball, 1.0, &spec_for(n)).unwrap();
            let want = crate::specfun::mahler_ball(n, 1.0).unwrap();
            assert_rel(m.value, want, 1e-5, &format!("ball n={n}"));
        }
    }

    #[test]
    fn cube_vs_simpson_oracle() {
        // M_1([-1,1]) by the production path...
        let cube = FunctionHandle::cube(1, 1.0).unwrap();
        let m = mahler_body(&cube, 1.0, &spec_for(1)).unwrap();
        // ...against a self-contained composite-Simpson double integral:
        // h(y) = log( ∫_{-1}^{1} e^{xy} dx / 2 ), M = 2 ∫ e^{-h(y)} dy.
        let simpson = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, m: usize| -> f64 {
            let h = (hi - lo) / m as f64;
            let mut s = f(lo) + f(hi);
            for i in 1..m {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(lo + i as f64 * h);
            }
            s * h / 3.0
        };
        let support = |y: f64| -> f64 {
            (simpson(&|x| (x * y).exp(), -1.0, 1.0, 2000) / 2.0).ln()
        };
        let oracle = 2.0 * simpson(&|y| (-support(y)).exp(), -60.0, 60.0, 6000);
        assert_rel(m.value, oracle, 1e-6, "cube vs Simpson oracle");
        // the 1-D cube is the 1-D ball: closed target π²
        assert_rel(m.value, PI * PI, 1e-7, "cube n=1 closed value");
    }

    #[test]
    fn affine_invariance_of_bodies() {
        let spec = spec_for(2);
        let cube = FunctionHandle::cube(2, 1.0).unwrap();
        let base = mahler_body(&cube, 1.0, &spec).unwrap().value;
        // volume-preserving shear
        let shear = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.0, 1.0]);
        let sheared = pullback(&cube, &shear).unwrap();
        let m = mahler(&sheared, 1.0, &spec).unwrap();
        assert_rel(m.value, base, 1e-6, "shear invariance");
        // volume-changing dilation
        let dil = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let dilated = pullback(&cube, &dil).unwrap();
        let m = mahler(&dilated, 1.0, &spec).unwrap();
        assert_rel(m.value, base, 1e-6, "dilation invariance");
    }

    #[test]
    fn norm_quotient_identity() {
        let spec = spec_for(1);
        let quad = FunctionHandle::quadratic(1).unwrap();
        // a = 1/2 is p = 1: both sides are the p=1 Mahler constants
        let (lhs, rhs) = nakamura_tsuji_quotient(&quad, 0.5, &spec).unwrap();
        assert_rel(rhs, 4.0 * PI, 1e-7, "rhs anchor (quadratic)");
        assert_rel(lhs, rhs, 1e-5, "quotient identity (quadratic, a=1/2)");

        let l1 = FunctionHandle::l1(1).unwrap();
        let (lhs, rhs) = nakamura_tsuji_quotient(&l1, 0.5, &spec).unwrap();
        assert_rel(rhs, 32.0 / 3.0, 1e-7, "rhs anchor (l1)");
        assert_rel(lhs, rhs, 1e-5, "quotient identity (l1, a=1/2)");

        // asymmetric exponents
        for a in [1.0 / 3.0, 2.0 / 3.0] {
            let (lhs, rhs) = nakamura_tsuji_quotient(&quad, a, &spec).unwrap();
            assert_rel(lhs, rhs, 1e-5, &format!("quotient identity a={a}"));
        }
    }

    #[test]
    fn scan_brackets_the_model_families() {
        let spec = spec_for(1);
        let family = vec![
            FunctionHandle::quadratic(1).unwrap(),
            FunctionHandle::functional_simplex(1).unwrap(),
            FunctionHandle::l1(1).unwrap(),
        ];
        let records = conjecture_scan(&family, 1.0, &spec).unwrap();
        assert_eq!(records.len(), 3);
        // the Gaussian sits exactly on the upper bound
        assert!(records[0].upper_margin.abs() < 1e-6 * records[0].upper_bound);
        assert_rel(records[0].mahler_inf, 4.0 * PI, 1e-6, "gaussian inf");
        // the orthant family sits exactly on the lower bound
        assert!(records[1].lower_margin.abs() < 1e-6 * records[1].lower_bound);
        assert_rel(records[1].mahler, E * E, 1e-7, "orthant family value");
        // ℓ¹ strictly between the two
        assert!(records[2].lower_margin > 1.0 && records[2].upper_margin > 1.0);
        assert!(records.iter().all(|r| !r.flagged));
    }

    #[test]
    fn divergent_dual_reports_infinite_value() {
        // body shifted so the origin leaves the interior of the domain:
        // the dual volume diverges and the report says +∞
        let spec = spec_for(1);
        let cube = FunctionHandle::cube(1, 1.0).unwrap();
        let shifted = translate(&cube, &[3.0]).unwrap();
        let m = mahler(&shifted, 1.0, &spec).unwrap();
        assert!(m.value.is_infinite() && m.value > 0.0);
        assert!(m.components.1.is_infinite());
        assert!(m.components.0.is_finite());
        // a mild shift keeps the origin inside and the value finite
        let mild = translate(&cube, &[0.5]).unwrap();
        let m = mahler(&mild, 1.0, &spec).unwrap();
        assert!(m.value.is_finite());
        // it must exceed the centered value (center minimizes)
        let center = mahler(&cube, 1.0, &spec).unwrap();
        assert!(m.value > center.value);
    }
}
