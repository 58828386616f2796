//! Minimizing the `L^p`-Mahler integral over translations.
//!
//! For fixed `f` and `p`, the map `x ↦ M_p(T_x f)` (with
//! `T_x f(·) = f(· + x)`) is smooth and log-convex, and
//!
//! ```text
//! D_x M_p(T_x f)      = M_p(T_x f) · b((T_x f)^{*,p})
//! D²_x M_p(T_x f)[ij] = V(f) ∫ y_i y_j e^{-(T_x f)^{*,p}(y)} dy
//! ```
//!
//! where `b(g)` is the barycenter of the probability density
//! `e^{-g}/∫e^{-g}`. The minimizer (the `L^p`-Santaló point) is the
//! unique zero of the dual barycenter. This module finds it by damped
//! Newton iteration, exploiting `(T_x f)^{*,p}(y) = f^{*,p}(y) - ⟨x,y⟩`:
//! the transform is tabulated once on a fixed node set and every
//! iterate merely reweights the table by `e^{⟨x,y⟩}`.

use crate::extreal::ExtReal::Finite;
use crate::functions::FunctionHandle;
use crate::integrate::{self, QuadratureSpec};
use crate::transform;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// One accepted iterate of the minimization.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub x: Vec<f64>,
    pub mahler: f64,
    /// `|D_x M_p(T_x f)| = M_p(T_x f) · |b|`.
    pub gradient_norm: f64,
}

/// Outcome of the translation minimization.
#[derive(Debug, Clone)]
pub struct SantaloResult {
    pub point: DVector<f64>,
    pub mahler_at_point: f64,
    /// `|b((T_s f)^{*,p})|` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceStep>,
}

/// Transform values frozen on a fixed quadrature node set; reweighting
/// by `e^{⟨x,y⟩}` evaluates every translated dual integral without new
/// transform evaluations.
pub struct DualTable {
    dim: usize,
    pts: Vec<f64>,
    /// `log w_i - f^{*,p}(y_i)` for nodes with finite transform value.
    base_log: Vec<f64>,
    log_v_base: f64,
}

/// Dual-volume statistics of one translate.
pub struct TableStats {
    /// `log ∫ e^{-f^{*,p}(y) + ⟨x,y⟩} dy`.
    pub log_dual_volume: f64,
    /// Barycenter of the reweighted dual density.
    pub mean: DVector<f64>,
    /// Second moments `E[y yᵀ]` of the reweighted dual density.
    pub second: DMatrix<f64>,
}

impl DualTable {
    /// Evaluate the transform once per node of the dual's node set.
    pub fn build(
        f: &FunctionHandle,
        p: f64,
        spec: &QuadratureSpec,
    ) -> Result<DualTable> {
        let t = transform::lp_transform(f, p, spec)?;
        let dual = t.as_function()?;
        let nodes = integrate::build_nodes(&dual, spec)?;
        let n = f.dim();
        let vals: Vec<Option<(Vec<f64>, f64)>> = (0..nodes.len())
            .into_par_iter()
            .map(|i| {
                let y = nodes.point(i);
                match dual.eval(y) {
                    Finite(v) => Some((y.to_vec(), nodes.log_w[i] - v)),
                    _ => None,
                }
            })
            .collect();
        let mut pts = Vec::new();
        let mut base_log = Vec::new();
        for item in vals.into_iter().flatten() {
            pts.extend_from_slice(&item.0);
            base_log.push(item.1);
        }
        if base_log.is_empty() {
            return Err(Error::ZeroVolume);
        }
        Ok(DualTable {
            dim: n,
            pts,
            base_log,
            log_v_base: t.log_volume_base(),
        })
    }

    /// Assemble a table from already-evaluated dual values: `pts` holds
    /// `len` nodes of dimension `dim` in row-major order and `base_log`
    /// the matching `log w_i - f^{*,p}(y_i)`.
    pub fn from_parts(
        dim: usize,
        pts: Vec<f64>,
        base_log: Vec<f64>,
        log_v_base: f64,
    ) -> Result<DualTable> {
        if dim == 0 || pts.len() != base_log.len() * dim {
            return Err(Error::InvalidParameter(format!(
                "table shape mismatch: {} coordinates for {} nodes of dim {dim}",
                pts.len(),
                base_log.len()
            )));
        }
        if base_log.is_empty() {
            return Err(Error::ZeroVolume);
        }
        Ok(DualTable {
            dim,
            pts,
            base_log,
            log_v_base,
        })
    }

    pub fn len(&self) -> usize {
        self.base_log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_log.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `log ∫ e^{-f}` of the primal function backing the table.
    pub fn log_v_base(&self) -> f64 {
        self.log_v_base
    }

    /// `log M_p(T_x f)`.
    pub fn log_mahler(&self, x: &[f64]) -> f64 {
        self.log_v_base + self.stats(x, false).log_dual_volume
    }

    /// Dual volume and moments of the translate by `x`.
    pub fn stats_at(&self, x: &[f64]) -> TableStats {
        self.stats(x, true)
    }

    fn stats(&self, x: &[f64], with_moments: bool) -> TableStats {
        let n = self.dim;
        let count = self.base_log.len();
        let mut peak = f64::NEG_INFINITY;
        let mut exps = vec![0.0_f64; count];
        for i in 0..count {
            let y = &self.pts[i * n..(i + 1) * n];
            let dot: f64 = y.iter().zip(x).map(|(a, b)| a * b).sum();
            let e = self.base_log[i] + dot;
            exps[i] = e;
            peak = peak.max(e);
        }
        let mut mass = 0.0;
        let mut mean = DVector::zeros(n);
        let mut second = DMatrix::zeros(n, n);
        for i in 0..count {
            let w = (exps[i] - peak).exp();
            if w == 0.0 {
                continue;
            }
            mass += w;
            if with_moments {
                let y = &self.pts[i * n..(i + 1) * n];
                for a in 0..n {
                    mean[a] += w * y[a];
                    for b in a..n {
                        second[(a, b)] += w * y[a] * y[b];
                    }
                }
            }
        }
        if with_moments && mass > 0.0 {
            mean /= mass;
            second /= mass;
            for a in 0..n {
                for b in 0..a {
                    second[(a, b)] = second[(b, a)];
                }
            }
        }
        TableStats {
            log_dual_volume: peak + mass.ln(),
            mean,
            second,
        }
    }
}

/// Translation minimizer of `M_p`, starting from the barycenter of
/// `e^{-f}` and iterating damped Newton until the dual barycenter
/// norm drops below `tol`.
pub fn santalo_point(
    f: &FunctionHandle,
    p: f64,
    spec: &QuadratureSpec,
    tol: f64,
    max_iter: usize,
) -> Result<SantaloResult> {
    let x0 = integrate::moments(f, spec)?.barycenter;
    santalo_point_from(f, p, spec, tol, max_iter, x0.as_slice())
}

/// [`santalo_point`] with an explicit starting point (warm starts).
pub fn santalo_point_from(
    f: &FunctionHandle,
    p: f64,
    spec: &QuadratureSpec,
    tol: f64,
    max_iter: usize,
    x0: &[f64],
) -> Result<SantaloResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    let table = DualTable::build(f, p, spec)?;
    minimize_over_table(&table, tol, max_iter, x0)
}

/// The damped-Newton loop of [`santalo_point_from`], run on a table the
/// caller has already assembled.
pub fn minimize_over_table(
    table: &DualTable,
    tol: f64,
    max_iter: usize,
    x0: &[f64],
) -> Result<SantaloResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    let n = table.dim;
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let mut x = DVector::from_row_slice(x0);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut stats = table.stats(x.as_slice(), true);
    loop {
        let log_m = table.log_v_base + stats.log_dual_volume;
        let b_norm = stats.mean.norm();
        trace.push(TraceStep {
            x: x.as_slice().to_vec(),
            mahler: log_m.exp(),
            gradient_norm: log_m.exp() * b_norm,
        });
        if b_norm < tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        // Newton direction from the second-moment matrix, with a tiny
        // trace-scaled ridge; steepest descent when the solve fails.
        let mut h = stats.second.clone();
        let ridge = 1e-10 * h.trace() / n as f64;
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        let delta = match h.clone().cholesky() {
            Some(ch) => -ch.solve(&stats.mean),
            None => -&stats.mean * (n as f64 / h.trace().max(1e-300)),
        };

        // Backtracking on the objective; infinite or non-improving
        // probes halve the step.
        let current = stats.log_dual_volume;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &x + &delta * step;
            let s = table.stats(cand.as_slice(), true);
            if s.log_dual_volume.is_finite() && s.log_dual_volume < current + 1e-14 {
                accepted = Some((cand, s));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, s)) => {
                x = cand;
                stats = s;
            }
            None => break, // stalled: flat to machine precision
        }
    }
    let log_m = table.log_v_base + stats.log_dual_volume;
    Ok(SantaloResult {
        point: x,
        mahler_at_point: log_m.exp(),
        residual: stats.mean.norm(),
        iterations,
        converged,
        trace,
    })
}

/// `inf_x M_p(T_x f)`: the Mahler integral at the Santaló point.
pub fn mahler_inf(f: &FunctionHandle, p: f64, spec: &QuadratureSpec) -> Result<f64> {
    let r = santalo_point(f, p, spec, 1e-9, 80)?;
    if !r.converged {
        return Err(Error::NoConvergence {
            iterations: r.iterations,
            residual: r.residual,
        });
    }
    Ok(r.mahler_at_point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::translate;
    use crate::mahler::{self, mahler_closed, ClosedFamily};
    use std::f64::consts::PI;

    fn spec_for(n: usize) -> QuadratureSpec {
        QuadratureSpec::default_for_dim(n)
    }

    #[test]
    fn even_functions_center_at_origin() {
        for (f, closed) in [
            (
                FunctionHandle::quadratic(1).unwrap(),
                mahler_closed(ClosedFamily::Quadratic, 1, 1.0).unwrap(),
            ),
            (
                FunctionHandle::l1(1).unwrap(),
                mahler_closed(ClosedFamily::L1Norm, 1, 1.0).unwrap(),
            ),
            (FunctionHandle::cube(1, 1.0).unwrap(), PI * PI),
        ] {
            let r = santalo_point(&f, 1.0, &spec_for(1), 1e-9, 50).unwrap();
            assert!(r.converged);
            assert!(r.point.norm() < 1e-8, "|s| = {}", r.point.norm());
            assert!(r.residual < 1e-9);
            let rel = (r.mahler_at_point - closed).abs() / closed;
            assert!(rel < 1e-6, "M at point: {} vs {closed}", r.mahler_at_point);
        }
        // 2-D even case
        let q2 = FunctionHandle::quadratic(2).unwrap();
        let r = santalo_point(&q2, 2.0, &spec_for(2), 1e-9, 50).unwrap();
        assert!(r.converged && r.point.norm() < 1e-8);
    }

    #[test]
    fn translated_quadratic_recovers_shift() {
        for p in [1.0, 2.0] {
            let f = translate(&FunctionHandle::quadratic(1).unwrap(), &[0.7]).unwrap();
            let r = santalo_point(&f, p, &spec_for(1), 1e-10, 50).unwrap();
            assert!(r.converged);
            assert!(
                (r.point[0] + 0.7).abs() < 1e-8,
                "p={p}: point {}",
                r.point[0]
            );
            let closed = mahler_closed(ClosedFamily::Quadratic, 1, p).unwrap();
            let rel = (r.mahler_at_point - closed).abs() / closed;
            assert!(rel < 1e-6, "recentered value off: rel {rel:.2e}");
        }
    }

    #[test]
    fn golden_section_oracle_orthant_family() {
        // independent 1-D oracle: minimize s ↦ M_1(T_s f) by golden
        // section over a bracket, each value through the production
        // Mahler report on a freshly translated handle
        let spec = spec_for(1);
        let f = FunctionHandle::functional_simplex(1).unwrap();
        let m_of = |s: f64| -> f64 {
            let g = translate(&f, &[s]).unwrap();
            mahler::mahler(&g, 1.0, &spec).unwrap().value
        };
        let (mut lo, mut hi) = (-0.9, 3.0);
        let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
        let (mut c, mut d) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
        let (mut fc, mut fd) = (m_of(c), m_of(d));
        while hi - lo > 1e-5 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - phi * (hi - lo);
                fc = m_of(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + phi * (hi - lo);
                fd = m_of(d);
            }
        }
        let oracle = 0.5 * (lo + hi);
        let r = santalo_point(&f, 1.0, &spec, 1e-9, 50).unwrap();
        assert!(r.converged);
        assert!(
            (r.point[0] - oracle).abs() < 1e-4,
            "newton {} vs golden section {oracle}",
            r.point[0]
        );
        // the production Mahler report at the found point agrees with
        // the tabulated objective value
        let fresh = m_of(r.point[0]);
        let rel = (fresh - r.mahler_at_point).abs() / fresh;
        assert!(rel < 1e-6, "tabulated vs fresh: rel {rel:.2e}");
    }

    #[test]
    fn trace_is_decreasing_and_bounds_hold() {
        let spec = spec_for(1);
        for f in [
            translate(&FunctionHandle::quadratic(1).unwrap(), &[1.2]).unwrap(),
            FunctionHandle::functional_simplex(1).unwrap(),
            translate(&FunctionHandle::l1(1).unwrap(), &[0.5]).unwrap(),
        ] {
            let r = santalo_point(&f, 1.0, &spec, 1e-9, 50).unwrap();
            assert!(r.converged, "{}", f.describe());
            for w in r.trace.windows(2) {
                assert!(
                    w[1].mahler <= w[0].mahler * (1.0 + 1e-12),
                    "objective increased along accepted iterates"
                );
            }
            // inf over translates cannot exceed the value at any translate
            let anywhere = mahler::mahler(&f, 1.0, &spec).unwrap().value;
            assert!(r.mahler_at_point <= anywhere * (1.0 + 1e-9));
            // translation-invariant upper bound: the centered Gaussian
            let gauss = mahler_closed(ClosedFamily::Quadratic, 1, 1.0).unwrap();
            assert!(r.mahler_at_point <= gauss * (1.0 + 1e-6));
        }
    }

    #[test]
    fn equivariance_under_translation() {
        let spec = spec_for(1);
        let f = FunctionHandle::functional_simplex(1).unwrap();
        let tol = 1e-9;
        let base = santalo_point(&f, 1.0, &spec, tol, 50).unwrap();
        let shifted = translate(&f, &[0.8]).unwrap();
        let moved = santalo_point(&shifted, 1.0, &spec, tol, 50).unwrap();
        assert!(base.converged && moved.converged);
        assert!(
            (moved.point[0] - (base.point[0] - 0.8)).abs() < 2.0 * tol.max(1e-8),
            "equivariance: {} vs {}",
            moved.point[0],
            base.point[0] - 0.8
        );
        let rel = (moved.mahler_at_point - base.mahler_at_point).abs() / base.mahler_at_point;
        assert!(rel < 1e-8, "inf value moved under translation: {rel:.2e}");
    }

    #[test]
    fn centered_l1_recovery_from_shift() {
        // translate of an even function: the minimizer undoes the shift
        // and recovers the centered closed-form value
        let spec = spec_for(1);
        let f = translate(&FunctionHandle::l1(1).unwrap(), &[0.5]).unwrap();
        let r = santalo_point(&f, 1.0, &spec, 1e-10, 60).unwrap();
        assert!(r.converged);
        assert!((r.point[0] + 0.5).abs() < 1e-8, "point {}", r.point[0]);
        let closed = mahler_closed(ClosedFamily::L1Norm, 1, 1.0).unwrap();
        let rel = (r.mahler_at_point - closed).abs() / closed;
        assert!(rel < 1e-7, "rel {rel:.2e}");
        let inf = mahler_inf(&f, 1.0, &spec).unwrap();
        let rel = (inf - closed).abs() / closed;
        assert!(rel < 1e-7, "mahler_inf rel {rel:.2e}");
    }
}
