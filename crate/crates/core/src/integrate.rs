//! Quadrature for log-concave-style integrals `∫ g(x) e^{-f(x)} dx`.
//!
//! All accumulation happens in a scaled domain (running max exponent +
//! rescaled mantissas), so integrands whose natural scale is `e^{±1000}`
//! are handled without overflow. Node sets come from four schemes:
//!
//! * tensor Gauss-Legendre on a truncation box, with per-axis panels
//!   split at the integrand's known kink locations;
//! * tensor Gauss-Hermite (a Gaussian-tailored global rule);
//! * adaptive 1-D composite Gauss-Legendre with error-driven bisection;
//! * quasi-Monte Carlo (Halton points pushed through a normal proposal).
//!
//! Indicator-supported integrands are integrated over their body via
//! reference-domain maps (box, polar ball, Duffy simplex), which keeps
//! boundaries out of the quadrature panels entirely.
//!
//! Truncation radii are chosen automatically from a certified affine
//! lower bound `f >= a|x| + b`, giving an analytic tail estimate; when
//! no such bound exists the integral is probed at doubling radii and
//! declared divergent if it keeps growing.

use crate::extreal::{Finite, PosInf};
use crate::functions::{affine_lower_bound, FunctionHandle, Kind, MAX_DIM};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Mutex;
use std::sync::OnceLock;

/// Node-count ceiling across all schemes (memory and time guard).
const MAX_TOTAL_NODES: usize = 1 << 24;
/// Chunk size for deterministic parallel reduction: partial sums are
/// formed per fixed-size chunk and merged in chunk order, so results do
/// not depend on the number of worker threads.
const REDUCE_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    TensorGaussLegendre { nodes_per_axis: usize },
    GaussHermite { nodes_per_axis: usize },
    Adaptive1D { max_subdivisions: usize },
    QuasiMonteCarlo { sample_count: usize, proposal_scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    /// Integration is confined to the box `[-R, R]^n`; `None` derives R
    /// from an affine lower bound on the integrand exponent.
    pub truncation_radius: Option<f64>,
    pub target_rel_tol: f64,
    pub seed: u64,
    /// Skip the body-mapped fast path for indicator integrands (used by
    /// dual-route agreement tests).
    pub force_generic_nodes: bool,
}

impl QuadratureSpec {
    pub fn new(scheme: Scheme) -> QuadratureSpec {
        QuadratureSpec {
            scheme,
            truncation_radius: None,
            target_rel_tol: 1e-9,
            seed: 0,
            force_generic_nodes: false,
        }
    }

    /// Scheme suited to the dimension: adaptive in 1-D, tensor
    /// Gauss-Legendre for 2-3 dimensions, quasi-Monte Carlo beyond.
    pub fn default_for_dim(dim: usize) -> QuadratureSpec {
        let scheme = match dim {
            1 => Scheme::Adaptive1D { max_subdivisions: 512 },
            2 | 3 => Scheme::TensorGaussLegendre { nodes_per_axis: 128 },
            _ => Scheme::QuasiMonteCarlo {
                sample_count: 1 << 18,
                proposal_scale: 1.0,
            },
        };
        QuadratureSpec::new(scheme)
    }

    pub fn with_radius(mut self, r: f64) -> QuadratureSpec {
        self.truncation_radius = Some(r);
        self
    }

    pub fn with_rel_tol(mut self, tol: f64) -> QuadratureSpec {
        self.target_rel_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            Scheme::TensorGaussLegendre { nodes_per_axis }
            | Scheme::GaussHermite { nodes_per_axis } => {
                if nodes_per_axis < 4 {
                    return Err(Error::InvalidParameter(
                        "nodes_per_axis must be >= 4".into(),
                    ));
                }
            }
            Scheme::Adaptive1D { max_subdivisions } => {
                if max_subdivisions < 4 {
                    return Err(Error::InvalidParameter(
                        "max_subdivisions must be >= 4".into(),
                    ));
                }
            }
            Scheme::QuasiMonteCarlo { sample_count, proposal_scale } => {
                if sample_count < 16 {
                    return Err(Error::InvalidParameter(
                        "sample_count must be >= 16".into(),
                    ));
                }
                if !(proposal_scale > 0.0) {
                    return Err(Error::InvalidParameter(
                        "proposal_scale must be > 0".into(),
                    ));
                }
            }
        }
        if let Some(r) = self.truncation_radius {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(
                    "truncation_radius must be > 0".into(),
                ));
            }
        }
        if !(self.target_rel_tol > 0.0 && self.target_rel_tol <= 1e-2) {
            return Err(Error::InvalidParameter(
                "target_rel_tol must lie in (0, 1e-2]".into(),
            ));
        }
        Ok(())
    }
}

/// Moments of the probability measure `e^{-f}/V` plus the
/// normalization itself.
#[derive(Debug, Clone)]
pub struct MomentSummary {
    pub volume: f64,
    pub log_volume: f64,
    pub barycenter: DVector<f64>,
    /// `E[x x^T]`.
    pub second_moments: DMatrix<f64>,
    /// `E[x x^T] - b b^T`.
    pub covariance: DMatrix<f64>,
}

/// Sign-and-log representation of a possibly huge or tiny real.
#[derive(Debug, Clone, Copy)]
pub struct SignedLog {
    pub log_abs: f64,
    pub sign: f64,
}

impl SignedLog {
    pub fn zero() -> SignedLog {
        SignedLog { log_abs: f64::NEG_INFINITY, sign: 1.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.sign * self.log_abs.exp()
    }

    pub fn is_zero(self) -> bool {
        self.log_abs == f64::NEG_INFINITY
    }
}

/// Streaming accumulator for `Σ m_i e^{t_i}` with signed mantissas,
/// stable under arbitrary exponent ranges.
#[derive(Debug, Clone, Copy)]
struct SignedAcc {
    max: f64,
    sum: f64,
}

impl SignedAcc {
    fn new() -> SignedAcc {
        SignedAcc { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    fn add(&mut self, log_t: f64, mantissa: f64) {
        if mantissa == 0.0 || log_t == f64::NEG_INFINITY {
            return;
        }
        if log_t <= self.max {
            self.sum += mantissa * (log_t - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - log_t).exp() + mantissa;
            self.max = log_t;
        }
    }

    fn merge(&mut self, other: SignedAcc) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        }
    }

    fn value(self) -> SignedLog {
        if self.sum == 0.0 || self.max == f64::NEG_INFINITY {
            SignedLog::zero()
        } else {
            SignedLog {
                log_abs: self.max + self.sum.abs().ln(),
                sign: self.sum.signum(),
            }
        }
    }
}

/// A concrete node set: flattened points and log-weights.
#[derive(Debug, Clone)]
pub struct Nodes {
    pub dim: usize,
    pub pts: Vec<f64>,
    pub log_w: Vec<f64>,
}

impl Nodes {
    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.pts[i * self.dim..(i + 1) * self.dim]
    }
}

// ---------------------------------------------------------------------------
// Classical rules (cached).

fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let m = diag.len();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = diag[i];
    }
    for i in 0..m - 1 {
        a[(i, i + 1)] = offdiag[i];
        a[(i + 1, i)] = offdiag[i];
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for &k in &order {
        nodes.push(eig.eigenvalues[k]);
        let v0 = eig.eigenvectors[(0, k)];
        weights.push(mu0 * v0 * v0);
    }
    (nodes, weights)
}

static GL_CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
static GH_CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let cache = GL_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(m)
        .or_insert_with(|| {
            let diag = vec![0.0; m];
            let offdiag: Vec<f64> = (1..m)
                .map(|k| {
                    let k = k as f64;
                    k / (4.0 * k * k - 1.0).sqrt()
                })
                .collect();
            golub_welsch(&diag, &offdiag, 2.0)
        })
        .clone()
}

/// Orthonormal Hermite values `p_0(x), ..., p_{count-1}(x)` for the
/// weight `e^{-x^2}` (recurrence `b_{j+1} p_{j+1} = x p_j - b_j p_{j-1}`
/// with `b_j = sqrt(j/2)`).
fn hermite_orthonormal(x: f64, count: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(count);
    p.push(std::f64::consts::PI.powf(-0.25));
    if count > 1 {
        p.push(x * p[0] * std::f64::consts::SQRT_2);
    }
    for j in 1..count.saturating_sub(1) {
        let bj = (j as f64 / 2.0).sqrt();
        let bj1 = ((j + 1) as f64 / 2.0).sqrt();
        let next = (x * p[j] - bj * p[j - 1]) / bj1;
        p.push(next);
    }
    p
}

/// Gauss-Hermite nodes and weights for the weight `e^{-x^2}` on the line.
///
/// Nodes come from the Jacobi-matrix eigenvalues and are polished with
/// Newton steps on the orthonormal recurrence; weights use the
/// Christoffel identity `w = 1 / Σ_j p_j(x)²`. The eigenvector route
/// would lose all relative accuracy in the extreme weights (they reach
/// `~1e-49` at m = 64 while the eigenvector components only carry
/// absolute precision), which matters whenever the integrand grows
/// against the weight.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    let cache = GH_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(m)
        .or_insert_with(|| {
            let diag = vec![0.0; m];
            let offdiag: Vec<f64> = (1..m).map(|k| (k as f64 / 2.0).sqrt()).collect();
            let (mut nodes, _) = golub_welsch(&diag, &offdiag, std::f64::consts::PI.sqrt());
            let deriv_scale = (2.0 * m as f64).sqrt();
            let mut weights = Vec::with_capacity(m);
            for x in nodes.iter_mut() {
                for _ in 0..2 {
                    let p = hermite_orthonormal(*x, m + 1);
                    let step = p[m] / (deriv_scale * p[m - 1]);
                    if step.is_finite() {
                        *x -= step;
                    }
                }
                let p = hermite_orthonormal(*x, m);
                weights.push(1.0 / p.iter().map(|v| v * v).sum::<f64>());
            }
            (nodes, weights)
        })
        .clone()
}

/// First `dim` primes, the Halton bases.
const HALTON_PRIMES: [u64; MAX_DIM] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Standard normal quantile via its inverse error function.
fn normal_quantile(u: f64) -> f64 {
    std::f64::consts::SQRT_2 * statrs::function::erf::erf_inv(2.0 * u - 1.0)
}

// ---------------------------------------------------------------------------
// Node construction.
//
// The truncation box is deliberately generous (its tail certificate comes
// from a linear envelope of a possibly much faster-decaying exponent), so
// nodes must concentrate where the integrand actually lives. A cheap
// coordinate-descent pass locates the exponent's rough minimizer; per-axis
// bisection then finds the radii where the exponent has risen by
// 1/4/16/64 nats. Those radii become Gauss-Legendre panel edges (plus any
// known kinks), far panels with no mass are pruned, and the 1-nat radius
// doubles as the width hint for the Gauss-Hermite and quasi-Monte-Carlo
// proposals.

/// Exponent increments (in nats) whose crossing radii become panel edges.
const PROFILE_LEVELS: [f64; 4] = [1.0, 4.0, 16.0, 64.0];
/// Panels whose sampled exponent exceeds the minimum by this many nats
/// carry no mass (e^{-150} ~ 1e-66 relative) and are dropped.
const PRUNE_NATS: f64 = 150.0;

struct AxisInfo {
    /// center of the 1-nat sublevel interval
    center: f64,
    /// Gaussian-equivalent width from the 4-nat radius
    sigma: f64,
    /// kept panels, in increasing order
    panels: Vec<(f64, f64)>,
}

struct Profiles {
    axes: Vec<AxisInfo>,
}

fn eval_inf(f: &FunctionHandle, x: &[f64]) -> f64 {
    match f.eval(x) {
        Finite(v) => v,
        PosInf => f64::INFINITY,
    }
}

/// Rough minimizer of `f` inside the truncation box, by per-axis ternary
/// search (convexity makes this reliable; mild non-convexity only costs
/// some node efficiency).
fn rough_minimizer(f: &FunctionHandle, radius: f64) -> Vec<f64> {
    let n = f.dim();
    let mut x = vec![0.0; n];
    if !eval_inf(f, &x).is_finite() {
        'scan: for frac in [0.05, 0.1, 0.25, 0.5, 0.9] {
            for i in 0..n {
                for s in [1.0, -1.0] {
                    let mut probe = vec![0.0; n];
                    probe[i] = s * frac * radius;
                    if eval_inf(f, &probe).is_finite() {
                        x = probe;
                        break 'scan;
                    }
                }
                // also walk the diagonal
                let probe = vec![frac * radius / (n as f64).sqrt(); n];
                if eval_inf(f, &probe).is_finite() {
                    x = probe;
                    break 'scan;
                }
            }
        }
    }
    if !eval_inf(f, &x).is_finite() {
        return x; // no mass anywhere we can see; caller copes
    }
    for _sweep in 0..3 {
        for axis in 0..n {
            let mut lo = -radius;
            let mut hi = radius;
            let mut probe = x.clone();
            for _ in 0..48 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                probe[axis] = m1;
                let v1 = eval_inf(f, &probe);
                probe[axis] = m2;
                let v2 = eval_inf(f, &probe);
                if v1 < v2 {
                    hi = m2;
                } else if v2 < v1 {
                    lo = m1;
                } else if v1.is_finite() {
                    // plateau: the minimum set meets [m1, m2]
                    lo = m1;
                    hi = m2;
                } else {
                    // both infinite: shrink toward the current point
                    let c = x[axis].clamp(lo, hi);
                    lo = 0.5 * (lo + c);
                    hi = 0.5 * (hi + c);
                }
                if hi - lo < 1e-9 * radius.max(1.0) {
                    break;
                }
            }
            let cand = 0.5 * (lo + hi);
            probe[axis] = cand;
            if eval_inf(f, &probe) <= eval_inf(f, &x) {
                x[axis] = cand;
            }
        }
    }
    x
}

/// Smallest |t - start| where the axis profile crosses `level`, found by
/// bisection in the given direction; `bound` if it never crosses.
fn crossing_radius(
    f: &FunctionHandle,
    anchor: &[f64],
    axis: usize,
    dir: f64,
    level: f64,
    bound: f64,
) -> f64 {
    let mut probe = anchor.to_vec();
    let g = |t: f64, probe: &mut Vec<f64>| {
        probe[axis] = anchor[axis] + dir * t;
        eval_inf(f, probe)
    };
    let max_t = bound;
    if g(max_t, &mut probe) <= level {
        return max_t;
    }
    let (mut lo, mut hi) = (0.0, max_t);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if g(mid, &mut probe) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn build_profiles(f: &FunctionHandle, radius: f64) -> Profiles {
    let n = f.dim();
    let anchor = rough_minimizer(f, radius);
    let v0 = eval_inf(f, &anchor);
    // The per-axis scan below sees one slice through the anchor. For a
    // body in dimension >= 2 that slice can be strictly narrower than
    // the body's bounding box, and a slab that is dead on the slice can
    // still carry mass elsewhere, so neither sizing nor pruning from
    // the slice is sound; cover the certified bounding box instead.
    let body_box = if n >= 2 && f.is_indicator() { f.finite_extent() } else { None };
    let mut axes = Vec::with_capacity(n);
    for axis in 0..n {
        if let Some(rho) = body_box {
            let lo = (-rho).max(-radius);
            let hi = rho.min(radius);
            let mut edges = vec![lo, hi];
            for b in f.axis_breakpoints(axis) {
                if b > lo && b < hi {
                    edges.push(b);
                }
            }
            edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
            edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * radius.max(1.0));
            let mut panels: Vec<(f64, f64)> =
                edges.windows(2).map(|w| (w[0], w[1])).collect();
            if panels.is_empty() {
                panels.push((lo, hi));
            }
            axes.push(AxisInfo {
                center: 0.5 * (lo + hi),
                sigma: ((hi - lo) / 3.0).max(1e-3),
                panels,
            });
            continue;
        }
        if !v0.is_finite() {
            axes.push(AxisInfo {
                center: 0.0,
                sigma: radius / 3.0,
                panels: vec![(-radius, radius)],
            });
            continue;
        }
        let bound_pos = radius - anchor[axis];
        let bound_neg = radius + anchor[axis];
        let mut edges = vec![-radius, radius];
        let mut hi1 = bound_pos;
        let mut lo1 = -bound_neg;
        let mut hi4 = bound_pos;
        let mut lo4 = -bound_neg;
        for (k, lvl) in PROFILE_LEVELS.iter().enumerate() {
            let tp = crossing_radius(f, &anchor, axis, 1.0, v0 + lvl, bound_pos);
            let tm = crossing_radius(f, &anchor, axis, -1.0, v0 + lvl, bound_neg);
            if k == 0 {
                hi1 = tp;
                lo1 = -tm;
            }
            if k == 1 {
                hi4 = tp;
                lo4 = -tm;
            }
            edges.push(anchor[axis] + tp);
            edges.push(anchor[axis] - tm);
        }
        for b in f.axis_breakpoints(axis) {
            if b > -radius && b < radius {
                edges.push(b);
            }
        }
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * radius.max(1.0));

        // Drop panels that certainly carry no mass.
        let mut probe = anchor.to_vec();
        let sample = |t: f64, probe: &mut Vec<f64>| {
            probe[axis] = t;
            eval_inf(f, probe)
        };
        let mut panels = Vec::new();
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 1e-300 {
                continue;
            }
            let keep = [a, 0.5 * (a + b), b]
                .iter()
                .any(|&t| sample(t, &mut probe) < v0 + PRUNE_NATS);
            if keep {
                panels.push((a, b));
            }
        }
        if panels.is_empty() {
            panels.push((-radius, radius));
        }
        let center = anchor[axis] + 0.5 * (hi1 + lo1);
        let sigma = (hi4.max(-lo4) / (2.0 * PROFILE_LEVELS[1]).sqrt()).max(1e-3);
        axes.push(AxisInfo { center, sigma, panels });
    }
    Profiles { axes }
}

fn axis_nodes_from_panels(panels: &[(f64, f64)], nodes_per_axis: usize) -> (Vec<f64>, Vec<f64>) {
    let per_panel = (nodes_per_axis / panels.len()).clamp(12, nodes_per_axis.max(12));
    let (u, w) = gauss_legendre(per_panel);
    let mut xs = Vec::with_capacity(panels.len() * per_panel);
    let mut lw = Vec::with_capacity(panels.len() * per_panel);
    for &(a, b) in panels {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for k in 0..per_panel {
            xs.push(mid + half * u[k]);
            lw.push(w[k].ln() + half.ln());
        }
    }
    (xs, lw)
}

fn tensor_product(axes: &[(Vec<f64>, Vec<f64>)]) -> Result<Nodes> {
    let dim = axes.len();
    let total: usize = axes.iter().map(|(x, _)| x.len()).product();
    if total > MAX_TOTAL_NODES {
        return Err(Error::InvalidParameter(format!(
            "tensor rule would need {total} nodes (max {MAX_TOTAL_NODES})"
        )));
    }
    let mut pts = Vec::with_capacity(total * dim);
    let mut log_w = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut lw = 0.0;
        for a in 0..dim {
            pts.push(axes[a].0[idx[a]]);
            lw += axes[a].1[idx[a]];
        }
        log_w.push(lw);
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < axes[a].0.len() {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(Nodes { dim, pts, log_w })
}

fn tensor_gauss_legendre_nodes(
    f: &FunctionHandle,
    radius: f64,
    nodes_per_axis: usize,
) -> Result<Nodes> {
    let profiles = build_profiles(f, radius);
    let axes: Vec<(Vec<f64>, Vec<f64>)> = profiles
        .axes
        .iter()
        .map(|info| axis_nodes_from_panels(&info.panels, nodes_per_axis))
        .collect();
    tensor_product(&axes)
}

fn gauss_hermite_nodes(f: &FunctionHandle, radius: f64, nodes_per_axis: usize) -> Result<Nodes> {
    let profiles = build_profiles(f, radius);
    let (u, w) = gauss_hermite(nodes_per_axis);
    let axes: Vec<(Vec<f64>, Vec<f64>)> = profiles
        .axes
        .iter()
        .map(|info| {
            // x = c + √2 σ u turns the rule exact for a Gaussian of
            // width σ centered at c.
            let s = std::f64::consts::SQRT_2 * info.sigma;
            (
                u.iter().map(|&ui| info.center + s * ui).collect(),
                u.iter()
                    .zip(&w)
                    .map(|(&ui, &wi)| wi.ln() + ui * ui + s.ln())
                    .collect(),
            )
        })
        .collect();
    tensor_product(&axes)
}

fn qmc_nodes(
    f: &FunctionHandle,
    radius: f64,
    sample_count: usize,
    proposal_scale: f64,
    seed: u64,
) -> Result<Nodes> {
    if sample_count > MAX_TOTAL_NODES {
        return Err(Error::InvalidParameter("sample_count exceeds node budget".into()));
    }
    let dim = f.dim();
    let profiles = build_profiles(f, radius);
    // Proposal: product normal, twice the profile width for safety.
    let sigmas: Vec<f64> = profiles
        .axes
        .iter()
        .map(|i| (proposal_scale * 2.0 * i.sigma).min(radius))
        .collect();
    let centers: Vec<f64> = profiles.axes.iter().map(|i| i.center).collect();
    let log_norm: f64 = sigmas
        .iter()
        .map(|s| -(0.5 * (2.0 * std::f64::consts::PI).ln() + s.ln()))
        .sum();
    let offset = 64 + seed.wrapping_mul(sample_count as u64);
    let mut pts = Vec::with_capacity(sample_count * dim);
    let mut log_w = Vec::with_capacity(sample_count);
    let ln_n = (sample_count as f64).ln();
    let r2 = radius * radius;
    for i in 0..sample_count {
        let idx = offset + i as u64 + 1;
        let mut norm2 = 0.0;
        let mut log_phi = log_norm;
        let start = pts.len();
        for a in 0..dim {
            let u = radical_inverse(idx, HALTON_PRIMES[a]);
            let z = normal_quantile(u.clamp(1e-15, 1.0 - 1e-15));
            let x = centers[a] + sigmas[a] * z;
            norm2 += x * x;
            log_phi -= 0.5 * z * z;
            pts.push(x);
        }
        if norm2 > r2 {
            pts.truncate(start);
            continue;
        }
        log_w.push(-ln_n - log_phi);
    }
    Ok(Nodes { dim, pts, log_w })
}

// --- Body-mapped nodes for indicator integrands ----------------------------

/// Affine image of a reference body: `x = linear·u + offset`.
pub struct BodyMap {
    pub dim: usize,
    pub ref_kind: RefBody,
    pub linear: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub log_jac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefBody {
    /// `[-1, 1]^n`
    Cube,
    /// `{|u| <= 1}`, polar maps implemented for n <= 3
    Ball,
    /// `{u >= 0, Σ u_i <= 1}`
    Simplex,
}

/// Recognize `f` as the convex indicator of an affine image of a
/// reference body.
pub fn as_body(f: &FunctionHandle) -> Option<BodyMap> {
    let n = f.dim();
    match f.kind() {
        Kind::IndicatorCube { half_width } => Some(BodyMap {
            dim: n,
            ref_kind: RefBody::Cube,
            linear: DMatrix::identity(n, n) * *half_width,
            offset: DVector::zeros(n),
            log_jac: (n as f64) * half_width.ln(),
        }),
        Kind::IndicatorBall { radius } => {
            if n > 3 {
                return None;
            }
            Some(BodyMap {
                dim: n,
                ref_kind: RefBody::Ball,
                linear: DMatrix::identity(n, n) * *radius,
                offset: DVector::zeros(n),
                log_jac: (n as f64) * radius.ln(),
            })
        }
        Kind::IndicatorSimplex { centered } => {
            let c = if *centered { 1.0 / (n as f64 + 1.0) } else { 0.0 };
            Some(BodyMap {
                dim: n,
                ref_kind: RefBody::Simplex,
                linear: DMatrix::identity(n, n),
                offset: DVector::from_element(n, -c),
                log_jac: 0.0,
            })
        }
        Kind::Translated { base, a } => {
            let mut m = as_body(base)?;
            for i in 0..n {
                m.offset[i] -= a[i];
            }
            Some(m)
        }
        Kind::Pulled { base, a_inv, det_abs, .. } => {
            let m = as_body(base)?;
            Some(BodyMap {
                dim: n,
                ref_kind: m.ref_kind,
                linear: a_inv.as_ref() * &m.linear,
                offset: a_inv.as_ref() * &m.offset,
                log_jac: m.log_jac - det_abs.ln(),
            })
        }
        Kind::Scaled { lambda, base } => {
            let m = as_body(base)?;
            Some(BodyMap {
                dim: n,
                ref_kind: m.ref_kind,
                linear: &m.linear * *lambda,
                offset: &m.offset * *lambda,
                log_jac: m.log_jac + (n as f64) * lambda.ln(),
            })
        }
        _ => None,
    }
}

/// Reference-domain node set (unit cube / ball / simplex).
fn reference_nodes(ref_kind: RefBody, dim: usize, m: usize) -> Result<Nodes> {
    match ref_kind {
        RefBody::Cube => {
            let (u, w) = gauss_legendre(m);
            let axis: (Vec<f64>, Vec<f64>) =
                (u.clone(), w.iter().map(|wi| wi.ln()).collect());
            tensor_product(&vec![axis; dim])
        }
        RefBody::Ball => match dim {
            1 => {
                let (u, w) = gauss_legendre(m);
                Ok(Nodes {
                    dim: 1,
                    pts: u,
                    log_w: w.iter().map(|wi| wi.ln()).collect(),
                })
            }
            2 => {
                // polar: dx = r dr dθ, θ on a periodic midpoint rule
                let (ur, wr) = gauss_legendre(m);
                let mth = 2 * m;
                let dth = 2.0 * std::f64::consts::PI / mth as f64;
                let mut pts = Vec::with_capacity(m * mth * 2);
                let mut log_w = Vec::with_capacity(m * mth);
                for k in 0..m {
                    let r = 0.5 * (ur[k] + 1.0);
                    let wrk = 0.5 * wr[k];
                    if r == 0.0 {
                        continue;
                    }
                    for j in 0..mth {
                        let th = (j as f64 + 0.5) * dth;
                        pts.push(r * th.cos());
                        pts.push(r * th.sin());
                        log_w.push((wrk * r * dth).ln());
                    }
                }
                Ok(Nodes { dim: 2, pts, log_w })
            }
            3 => {
                // spherical: dx = r^2 dr dc dθ with c = cos φ
                let (ur, wr) = gauss_legendre(m);
                let (uc, wc) = gauss_legendre(m);
                let mth = 2 * m;
                let dth = 2.0 * std::f64::consts::PI / mth as f64;
                let mut pts = Vec::new();
                let mut log_w = Vec::new();
                for k in 0..m {
                    let r = 0.5 * (ur[k] + 1.0);
                    let wrk = 0.5 * wr[k];
                    if r == 0.0 {
                        continue;
                    }
                    for l in 0..m {
                        let c = uc[l];
                        let s = (1.0 - c * c).max(0.0).sqrt();
                        for j in 0..mth {
                            let th = (j as f64 + 0.5) * dth;
                            pts.push(r * s * th.cos());
                            pts.push(r * s * th.sin());
                            pts.push(r * c);
                            log_w.push((wrk * wc[l] * r * r * dth).ln());
                        }
                    }
                }
                Ok(Nodes { dim: 3, pts, log_w })
            }
            _ => Err(Error::Unsupported("polar ball nodes need dim <= 3".into())),
        },
        RefBody::Simplex => {
            // Duffy map from [0,1]^n: u_i = t_i Π_{j<i}(1-t_j),
            // Jacobian Π_j (1-t_j)^{n-1-j}.
            let (ug, wg) = gauss_legendre(m);
            let t: Vec<f64> = ug.iter().map(|&u| 0.5 * (u + 1.0)).collect();
            let lw: Vec<f64> = wg.iter().map(|w| (0.5 * w).ln()).collect();
            let total = m.checked_pow(dim as u32).filter(|&t| t <= MAX_TOTAL_NODES);
            let total = total.ok_or_else(|| {
                Error::InvalidParameter("simplex rule exceeds node budget".into())
            })?;
            let mut pts = Vec::with_capacity(total * dim);
            let mut log_w = Vec::with_capacity(total);
            let mut idx = vec![0usize; dim];
            for _ in 0..total {
                let mut prod = 1.0;
                let mut lw_acc = 0.0;
                let start = pts.len();
                for a in 0..dim {
                    let ta = t[idx[a]];
                    pts.push(ta * prod);
                    lw_acc += lw[idx[a]]
                        + ((dim - 1 - a) as f64) * (1.0 - ta).max(f64::MIN_POSITIVE).ln();
                    prod *= 1.0 - ta;
                }
                debug_assert_eq!(pts.len() - start, dim);
                log_w.push(lw_acc);
                for a in (0..dim).rev() {
                    idx[a] += 1;
                    if idx[a] < m {
                        break;
                    }
                    idx[a] = 0;
                }
            }
            Ok(Nodes { dim, pts, log_w })
        }
    }
}

fn body_nodes(map: &BodyMap, m: usize) -> Result<Nodes> {
    let refs = reference_nodes(map.ref_kind, map.dim, m)?;
    let n = map.dim;
    let mut pts = Vec::with_capacity(refs.pts.len());
    for i in 0..refs.len() {
        let u = refs.point(i);
        for r in 0..n {
            let mut x = map.offset[r];
            for c in 0..n {
                x += map.linear[(r, c)] * u[c];
            }
            pts.push(x);
        }
    }
    let log_w = refs.log_w.iter().map(|lw| lw + map.log_jac).collect();
    Ok(Nodes { dim: n, pts, log_w })
}

// ---------------------------------------------------------------------------
// Adaptive 1-D panels.

struct Panel {
    a: f64,
    b: f64,
    coarse: f64,
    fine: f64,
}

impl Panel {
    fn err(&self) -> f64 {
        (self.fine - self.coarse).abs()
    }
}

fn panel_integral(f: &FunctionHandle, a: f64, b: f64, m: usize, shift: f64) -> f64 {
    let (u, w) = gauss_legendre(m);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..m {
        let x = mid + half * u[k];
        if let Finite(v) = f.eval(&[x]) {
            s += w[k] * (shift - v).exp();
        }
    }
    s * half
}

fn adaptive_1d_nodes(
    f: &FunctionHandle,
    radius: f64,
    max_subdivisions: usize,
    rel_tol: f64,
) -> Result<Nodes> {
    // Initial panels from the decay profile (kinks are edges already).
    let profiles = build_profiles(f, radius);
    let info = &profiles.axes[0];

    // Common scale so panel sums live near 1.
    let mut shift = f64::INFINITY;
    for &(a, b) in &info.panels {
        for k in 0..=8 {
            let x = a + (b - a) * k as f64 / 8.0;
            if let Finite(v) = f.eval(&[x]) {
                shift = shift.min(v);
            }
        }
    }
    if !shift.is_finite() {
        // Integrand is identically zero on the truncation interval.
        return Ok(Nodes { dim: 1, pts: vec![], log_w: vec![] });
    }

    let mut panels: Vec<Panel> = info
        .panels
        .iter()
        .map(|&(a, b)| Panel {
            a,
            b,
            coarse: panel_integral(f, a, b, 16, shift),
            fine: panel_integral(f, a, b, 32, shift),
        })
        .collect();

    while panels.len() < max_subdivisions {
        let total: f64 = panels.iter().map(|p| p.fine).sum();
        let err: f64 = panels.iter().map(|p| p.err()).sum();
        if err <= 0.25 * rel_tol * total.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|(_, p), (_, q)| p.err().total_cmp(&q.err()))
            .map(|(i, _)| i)
            .unwrap();
        let Panel { a, b, .. } = panels[worst];
        let mid = 0.5 * (a + b);
        panels[worst] = Panel {
            a,
            b: mid,
            coarse: panel_integral(f, a, mid, 16, shift),
            fine: panel_integral(f, a, mid, 32, shift),
        };
        panels.push(Panel {
            a: mid,
            b,
            coarse: panel_integral(f, mid, b, 16, shift),
            fine: panel_integral(f, mid, b, 32, shift),
        });
    }

    let (u, w) = gauss_legendre(32);
    let mut pts = Vec::with_capacity(panels.len() * 32);
    let mut log_w = Vec::with_capacity(panels.len() * 32);
    for p in &panels {
        let mid = 0.5 * (p.a + p.b);
        let half = 0.5 * (p.b - p.a);
        for k in 0..32 {
            pts.push(mid + half * u[k]);
            log_w.push(w[k].ln() + half.ln());
        }
    }
    Ok(Nodes { dim: 1, pts, log_w })
}

// ---------------------------------------------------------------------------
// Truncation radius.

/// Upper bound for `log ∫_{|x|>R} e^{-a|x|-b} dx` (valid once `aR`
/// clears the polynomial factor).
pub fn log_tail_bound(n: usize, a: f64, b: f64, radius: f64) -> f64 {
    let nf = n as f64;
    let z = a * radius;
    // n ω_n = surface measure of the unit sphere
    let log_sphere = (nf / 2.0) * std::f64::consts::PI.ln()
        - statrs::function::gamma::ln_gamma(nf / 2.0 + 1.0)
        + nf.ln();
    // ∫_R^∞ r^{n-1} e^{-ar} dr = a^{-n} Γ(n, aR) <= 2 a^{-n} z^{n-1} e^{-z}
    -b + log_sphere - nf * a.ln() + (nf - 1.0) * z.max(1.0).ln() - z + std::f64::consts::LN_2
}

/// Truncation radius from an affine lower bound: large enough that the
/// analytic tail is ~60 nats below the integrand's peak scale.
pub fn auto_truncation_radius(f: &FunctionHandle) -> Result<f64> {
    let ab = affine_lower_bound(f)?;
    // Peak scale: minimum of f along coordinate probes.
    let n = f.dim();
    let mut m0 = f64::INFINITY;
    for i in 0..=n {
        for s in [-1.0f64, 0.0, 1.0] {
            let mut x = vec![0.0; n];
            if i < n {
                x[i] = s;
            }
            if let Finite(v) = f.eval(&x) {
                m0 = m0.min(v);
            }
        }
    }
    if !m0.is_finite() {
        m0 = 0.0;
    }
    // Solve a·R ≈ margin + polynomial corrections by fixed-point iteration.
    let margin = 60.0 + (m0 - ab.b).max(0.0);
    let mut r: f64 = (margin / ab.a).max(1.0);
    for _ in 0..8 {
        r = (margin + (n as f64) * r.max(2.0).ln()) / ab.a;
    }
    let mut r = r.max(1.0);
    if let Some(ext) = f.finite_extent() {
        r = r.min(ext * (1.0 + 1e-9) + 1e-9);
    }
    Ok(r)
}

fn resolve_radius(f: &FunctionHandle, spec: &QuadratureSpec) -> Result<f64> {
    match spec.truncation_radius {
        Some(r) => Ok(r),
        None => auto_truncation_radius(f),
    }
}

// ---------------------------------------------------------------------------
// Core evaluation.

pub fn build_nodes(f: &FunctionHandle, spec: &QuadratureSpec) -> Result<Nodes> {
    spec.validate()?;
    if !spec.force_generic_nodes {
        if let Some(map) = as_body(f) {
            let m = match spec.scheme {
                Scheme::TensorGaussLegendre { nodes_per_axis }
                | Scheme::GaussHermite { nodes_per_axis } => nodes_per_axis,
                Scheme::Adaptive1D { .. } => 64,
                Scheme::QuasiMonteCarlo { .. } => 64,
            };
            return body_nodes(&map, m);
        }
    }
    let radius = resolve_radius(f, spec)?;
    match spec.scheme {
        Scheme::TensorGaussLegendre { nodes_per_axis } => {
            tensor_gauss_legendre_nodes(f, radius, nodes_per_axis)
        }
        Scheme::GaussHermite { nodes_per_axis } => {
            gauss_hermite_nodes(f, radius, nodes_per_axis)
        }
        Scheme::Adaptive1D { max_subdivisions } => {
            if f.dim() != 1 {
                return Err(Error::Unsupported(
                    "Adaptive1D requires a one-dimensional integrand".into(),
                ));
            }
            adaptive_1d_nodes(f, radius, max_subdivisions, spec.target_rel_tol)
        }
        Scheme::QuasiMonteCarlo { sample_count, proposal_scale } => {
            qmc_nodes(f, radius, sample_count, proposal_scale, spec.seed)
        }
    }
}

/// Evaluate `Σ_i w_i g_j(x_i) e^{-f(x_i)}` for all components `j` at
/// once; `fill` writes `g_j(x)` into its output slice.
pub fn accumulate(
    f: &FunctionHandle,
    nodes: &Nodes,
    k: usize,
    fill: impl Fn(&[f64], &mut [f64]) + Sync,
) -> Vec<SignedLog> {
    let count = nodes.len();
    let fold_chunk = |range: std::ops::Range<usize>| -> Vec<SignedAcc> {
        let mut accs = vec![SignedAcc::new(); k];
        let mut buf = vec![0.0; k];
        for i in range {
            let x = nodes.point(i);
            let e = match f.eval(x) {
                Finite(v) => -v + nodes.log_w[i],
                PosInf => continue,
            };
            fill(x, &mut buf);
            for j in 0..k {
                accs[j].add(e, buf[j]);
            }
        }
        accs
    };

    let chunk_bounds: Vec<std::ops::Range<usize>> = (0..count)
        .step_by(REDUCE_CHUNK)
        .map(|s| s..(s + REDUCE_CHUNK).min(count))
        .collect();
    let partials: Vec<Vec<SignedAcc>> = if count > REDUCE_CHUNK && rayon::current_num_threads() > 1
    {
        chunk_bounds.into_par_iter().map(fold_chunk).collect()
    } else {
        chunk_bounds.into_iter().map(fold_chunk).collect()
    };

    let mut accs = vec![SignedAcc::new(); k];
    for part in partials {
        for j in 0..k {
            accs[j].merge(part[j]);
        }
    }
    accs.into_iter().map(|a| a.value()).collect()
}

/// Exact log-volume for indicator handles (recursively through the
/// affine wrappers); `None` when no closed form applies.
pub fn exact_log_volume(f: &FunctionHandle) -> Option<f64> {
    let n = f.dim() as f64;
    match f.kind() {
        Kind::IndicatorCube { half_width } => Some(n * (2.0 * half_width).ln()),
        Kind::IndicatorBall { radius } => Some(
            (n / 2.0) * std::f64::consts::PI.ln()
                - statrs::function::gamma::ln_gamma(n / 2.0 + 1.0)
                + n * radius.ln(),
        ),
        Kind::IndicatorSimplex { .. } => {
            Some(-statrs::function::gamma::ln_gamma(n + 1.0))
        }
        Kind::Translated { base, .. } => exact_log_volume(base),
        Kind::Pulled { base, det_abs, .. } => Some(exact_log_volume(base)? - det_abs.ln()),
        Kind::Scaled { lambda, base } => Some(exact_log_volume(base)? + n * lambda.ln()),
        Kind::Tensor { left, right } => Some(exact_log_volume(left)? + exact_log_volume(right)?),
        _ => None,
    }
}

/// `log ∫ e^{-f}`, always via quadrature (no indicator shortcut); the
/// divergence probe still applies when no truncation radius is given.
pub fn quadrature_log_volume(f: &FunctionHandle, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if spec.truncation_radius.is_none() && !matches!(as_body(f), Some(_)) {
        // Auto radius needs an affine lower bound; fall back to the
        // doubling probe when none exists.
        if affine_lower_bound(f).is_err() {
            return divergence_probe(f, spec);
        }
    }
    let nodes = build_nodes(f, spec)?;
    let s = accumulate(f, &nodes, 1, |_, out| out[0] = 1.0);
    Ok(s[0].log_abs)
}

/// Growth threshold for the divergence probe: a 1% increase per radius
/// doubling, three times in a row, signals divergence.
const DIVERGENCE_GROWTH: f64 = 1.01;

fn divergence_probe(f: &FunctionHandle, spec: &QuadratureSpec) -> Result<f64> {
    let mut radius = 8.0;
    if let Some(ext) = f.finite_extent() {
        // Bounded effective domain: integral cannot diverge.
        radius = ext + 1e-9;
        let probe = spec.clone().with_radius(radius);
        let nodes = build_nodes(f, &probe)?;
        let s = accumulate(f, &nodes, 1, |_, out| out[0] = 1.0);
        return Ok(s[0].log_abs);
    }
    let mut prev: Option<f64> = None;
    let mut growth_streak = 0usize;
    let mut last = f64::NEG_INFINITY;
    for _ in 0..7 {
        let probe = spec.clone().with_radius(radius);
        let nodes = build_nodes(f, &probe)?;
        let s = accumulate(f, &nodes, 1, |_, out| out[0] = 1.0);
        last = s[0].log_abs;
        if let Some(p) = prev {
            let grew = last > p + DIVERGENCE_GROWTH.ln();
            if grew {
                growth_streak += 1;
                if growth_streak >= 3 {
                    return Err(Error::Divergent);
                }
            } else {
                // Stable under doubling: accept this radius.
                return Ok(last);
            }
        }
        prev = Some(last);
        radius *= 2.0;
    }
    if growth_streak >= 1 {
        return Err(Error::Divergent);
    }
    Ok(last)
}

/// `log ∫ e^{-f} dx`; indicator handles use their exact volume.
pub fn log_volume(f: &FunctionHandle, spec: &QuadratureSpec) -> Result<f64> {
    if let Some(lv) = exact_log_volume(f) {
        return Ok(lv);
    }
    quadrature_log_volume(f, spec)
}

const LOG_ZERO_VOLUME: f64 = -690.0;

/// `∫ e^{-f} dx` with the zero-volume guard.
pub fn volume(f: &FunctionHandle, spec: &QuadratureSpec) -> Result<f64> {
    let lv = log_volume(f, spec)?;
    if lv < LOG_ZERO_VOLUME {
        return Err(Error::ZeroVolume);
    }
    Ok(lv.exp())
}

/// Volume, barycenter, and (co)variance of `e^{-f}/V` in one pass.
pub fn moments(f: &FunctionHandle, spec: &QuadratureSpec) -> Result<MomentSummary> {
    spec.validate()?;
    let nodes = build_nodes(f, spec)?;
    moments_over_nodes(f, &nodes)
}

/// [`moments`] evaluated on a caller-supplied node set (callers that
/// integrate a modified density over the node placement of another
/// function, e.g. exponential tilts of an indicator body).
pub fn moments_over_nodes(f: &FunctionHandle, nodes: &Nodes) -> Result<MomentSummary> {
    let n = f.dim();
    let k = 1 + n + n * (n + 1) / 2;
    let sums = accumulate(f, nodes, k, |x, out| {
        out[0] = 1.0;
        out[1..=n].copy_from_slice(x);
        let mut idx = 1 + n;
        for i in 0..n {
            for j in i..n {
                out[idx] = x[i] * x[j];
                idx += 1;
            }
        }
    });
    let log_v = sums[0].log_abs;
    if log_v < LOG_ZERO_VOLUME || sums[0].sign < 0.0 {
        return Err(Error::ZeroVolume);
    }
    let ratio = |s: SignedLog| s.sign * (s.log_abs - log_v).exp();
    let barycenter = DVector::from_iterator(n, (1..=n).map(|i| ratio(sums[i])));
    let mut second = DMatrix::zeros(n, n);
    let mut idx = 1 + n;
    for i in 0..n {
        for j in i..n {
            let v = ratio(sums[idx]);
            second[(i, j)] = v;
            second[(j, i)] = v;
            idx += 1;
        }
    }
    let covariance = &second - &barycenter * barycenter.transpose();
    Ok(MomentSummary {
        volume: log_v.exp(),
        log_volume: log_v,
        barycenter,
        second_moments: second,
        covariance,
    })
}

pub fn barycenter(f: &FunctionHandle, spec: &QuadratureSpec) -> Result<DVector<f64>> {
    Ok(moments(f, spec)?.barycenter)
}

pub fn covariance(f: &FunctionHandle, spec: &QuadratureSpec) -> Result<DMatrix<f64>> {
    Ok(moments(f, spec)?.covariance)
}

/// Unnormalized radial moment `∫ |x|^t e^{-f} dx`, `t > 0`.
pub fn moment(f: &FunctionHandle, t: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter("moment order must be > 0".into()));
    }
    spec.validate()?;
    let nodes = build_nodes(f, spec)?;
    let s = accumulate(f, &nodes, 1, |x, out| {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        out[0] = norm.powf(t);
    });
    Ok(s[0].to_f64())
}

/// `∫ g(x) e^{-f(x)} dx` for a (possibly signed) weight `g`.
pub fn weighted_integral(
    f: &FunctionHandle,
    g: impl Fn(&[f64]) -> f64 + Sync,
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    let nodes = build_nodes(f, spec)?;
    let s = accumulate(f, &nodes, 1, |x, out| out[0] = g(x));
    Ok(s[0].to_f64())
}

/// Signed log version of [`weighted_integral`] for extreme scales.
pub fn log_weighted_integral(
    f: &FunctionHandle,
    g: impl Fn(&[f64]) -> f64 + Sync,
    spec: &QuadratureSpec,
) -> Result<SignedLog> {
    spec.validate()?;
    let nodes = build_nodes(f, spec)?;
    let s = accumulate(f, &nodes, 1, |x, out| out[0] = g(x));
    Ok(s[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extreal::ExtReal;
    use crate::functions::{translate, FunctionHandle, GridSpec};
    use std::f64::consts::PI;

    fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want.abs().max(1e-300)
    }

    #[test]
    fn gauss_legendre_rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(16);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
        // ∫_{-1}^{1} x^2 = 2/3, x^30 within polynomial exactness (degree 31)
        let m2: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi * xi).sum();
        assert!((m2 - 2.0 / 3.0).abs() < 1e-14);
        let m30: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(30)).sum();
        assert!((m30 - 2.0 / 31.0).abs() < 1e-13);
    }

    #[test]
    fn gauss_hermite_rule_matches_gaussian_moments() {
        let (x, w) = gauss_hermite(32);
        let total: f64 = w.iter().sum();
        assert!((total - PI.sqrt()).abs() < 1e-12);
        let m2: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi * xi).sum();
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn volumes_match_closed_forms() {
        // ∫ e^{-|x|²/2} over R² = 2π
        let q2 = FunctionHandle::quadratic(2).unwrap();
        let spec = QuadratureSpec::default_for_dim(2);
        assert!(rel_err(volume(&q2, &spec).unwrap(), 2.0 * PI) < 1e-10);

        // ∫ e^{-Σ|x_i|} over R³ = 2³
        let l1 = FunctionHandle::l1(3).unwrap();
        let spec = QuadratureSpec::new(Scheme::TensorGaussLegendre { nodes_per_axis: 96 });
        assert!(rel_err(volume(&l1, &spec).unwrap(), 8.0) < 1e-10);

        // ∫ e^{-Σx_i} over [-1,∞)² = e²
        let fs = FunctionHandle::functional_simplex(2).unwrap();
        let spec = QuadratureSpec::default_for_dim(2);
        assert!(rel_err(volume(&fs, &spec).unwrap(), E2) < 1e-10);

        // 1-D adaptive
        let q1 = FunctionHandle::quadratic(1).unwrap();
        let spec = QuadratureSpec::default_for_dim(1);
        assert!(rel_err(volume(&q1, &spec).unwrap(), (2.0 * PI).sqrt()) < 1e-11);
    }

    const E2: f64 = 7.389056098930650;

    #[test]
    fn gauss_hermite_scheme_handles_gaussians() {
        let q1 = FunctionHandle::quadratic(1).unwrap();
        let spec = QuadratureSpec::new(Scheme::GaussHermite { nodes_per_axis: 64 })
            .with_radius(12.0);
        assert!(rel_err(volume(&q1, &spec).unwrap(), (2.0 * PI).sqrt()) < 1e-12);
    }

    #[test]
    fn qmc_handles_dimension_four() {
        let q4 = FunctionHandle::quadratic(4).unwrap();
        let spec = QuadratureSpec::default_for_dim(4).with_radius(10.0);
        let v = volume(&q4, &spec).unwrap();
        assert!(rel_err(v, (2.0 * PI) * (2.0 * PI)) < 2e-3, "v = {v}");
    }

    #[test]
    fn qmc_is_deterministic_in_the_seed() {
        let q4 = FunctionHandle::quadratic(4).unwrap();
        let spec = QuadratureSpec::default_for_dim(4).with_radius(10.0);
        let v1 = volume(&q4, &spec).unwrap();
        let v2 = volume(&q4, &spec).unwrap();
        assert_eq!(v1, v2);
        let mut other = spec.clone();
        other.seed = 7;
        let v3 = volume(&q4, &other).unwrap();
        assert!(v1 != v3 && rel_err(v1, v3) < 1e-2);
    }

    #[test]
    fn barycenters_and_variances() {
        // translate(q, a) has density centered at -a
        let q2 = FunctionHandle::quadratic(2).unwrap();
        let t = translate(&q2, &[0.7, -0.3]).unwrap();
        let spec = QuadratureSpec::default_for_dim(2);
        let b = barycenter(&t, &spec).unwrap();
        assert!((b[0] + 0.7).abs() < 1e-10);
        assert!((b[1] - 0.3).abs() < 1e-10);

        // ∫_{-1}^{∞} x e^{-x} dx = [-(x+1)e^{-x}] = 0
        let fs = FunctionHandle::functional_simplex(1).unwrap();
        let spec1 = QuadratureSpec::default_for_dim(1);
        let b = barycenter(&fs, &spec1).unwrap();
        assert!(b[0].abs() < 1e-10, "b = {}", b[0]);

        // variance of e^{-|x|}/2 is 2
        let l1 = FunctionHandle::l1(1).unwrap();
        let c = covariance(&l1, &spec1).unwrap();
        assert!((c[(0, 0)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn radial_moments() {
        let spec = QuadratureSpec::default_for_dim(1);
        let q1 = FunctionHandle::quadratic(1).unwrap();
        assert!(rel_err(moment(&q1, 2.0, &spec).unwrap(), (2.0 * PI).sqrt()) < 1e-10);

        let cube = FunctionHandle::cube(1, 1.0).unwrap();
        assert!(rel_err(moment(&cube, 2.0, &spec).unwrap(), 2.0 / 3.0) < 1e-10);

        let l1 = FunctionHandle::l1(1).unwrap();
        assert!(rel_err(moment(&l1, 1.0, &spec).unwrap(), 2.0) < 1e-10);

        assert!(moment(&l1, 0.0, &spec).is_err());
    }

    #[test]
    fn weighted_integrals_handle_tilts() {
        // ∫ e^{x} e^{-x²/2} dx = √(2π) e^{1/2}
        let q1 = FunctionHandle::quadratic(1).unwrap();
        let spec = QuadratureSpec::default_for_dim(1).with_radius(30.0);
        let got = weighted_integral(&q1, |x| x[0].exp(), &spec).unwrap();
        let want = (2.0 * PI).sqrt() * 0.5_f64.exp();
        assert!(rel_err(got, want) < 1e-10);

        // signed weight: ∫ x e^{-x²/2} dx = 0
        let odd = weighted_integral(&q1, |x| x[0], &spec).unwrap();
        assert!(odd.abs() < 1e-12);
    }

    /// `x²/2 - 100x + 5000`: a hard tilt folded into the exponent, the
    /// way transform integrands are built.
    struct HardTilt;
    impl crate::functions::CustomFn for HardTilt {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, x: &[f64]) -> ExtReal {
            Finite(0.5 * x[0] * x[0] - 100.0 * x[0] + 5000.0)
        }
        fn describe(&self) -> String {
            "hard-tilt".into()
        }
    }

    #[test]
    fn extreme_tilts_folded_into_the_exponent() {
        // ∫ e^{100x - 5000} e^{-x²/2} dx = √(2π) e^{5000 - 5000}
        let f = FunctionHandle::custom(std::sync::Arc::new(HardTilt)).unwrap();
        let spec = QuadratureSpec::default_for_dim(1);
        let lv = quadrature_log_volume(&f, &spec).unwrap();
        assert!((lv - 0.5 * (2.0 * PI).ln()).abs() < 1e-10, "lv = {lv}");
    }

    #[test]
    fn indicator_bodies_integrate_exactly_both_ways() {
        // ball in 2-D: area πr², body route and generic route agree
        let ball = FunctionHandle::ball(2, 1.5).unwrap();
        let spec = QuadratureSpec::default_for_dim(2);
        let v_exact = volume(&ball, &spec).unwrap();
        assert!(rel_err(v_exact, PI * 2.25) < 1e-12);

        let forced = QuadratureSpec {
            force_generic_nodes: true,
            ..QuadratureSpec::new(Scheme::TensorGaussLegendre { nodes_per_axis: 256 })
        };
        let v_generic = quadrature_log_volume(&ball, &forced).unwrap().exp();
        assert!(rel_err(v_generic, PI * 2.25) < 2e-3, "generic = {v_generic}");

        let body = QuadratureSpec::new(Scheme::TensorGaussLegendre { nodes_per_axis: 64 });
        let v_body = quadrature_log_volume(&ball, &body).unwrap().exp();
        assert!(rel_err(v_body, PI * 2.25) < 1e-10, "body = {v_body}");

        // simplex in 3-D: volume 1/6 via the Duffy map
        let sx = FunctionHandle::simplex(3, true).unwrap();
        let v = quadrature_log_volume(&sx, &body).unwrap().exp();
        assert!(rel_err(v, 1.0 / 6.0) < 1e-10);

        // cube via both routes
        let cube = FunctionHandle::cube(2, 0.75).unwrap();
        let v_body = quadrature_log_volume(&cube, &body).unwrap().exp();
        assert!(rel_err(v_body, 2.25) < 1e-12);
        let v_generic = quadrature_log_volume(&cube, &forced).unwrap().exp();
        assert!(rel_err(v_generic, 2.25) < 1e-10, "panel edges sit on the boundary");
    }

    #[test]
    fn node_doubling_is_stable() {
        let q2 = FunctionHandle::quadratic(2).unwrap();
        for nodes in [32, 64] {
            let a = volume(
                &q2,
                &QuadratureSpec::new(Scheme::TensorGaussLegendre { nodes_per_axis: nodes })
                    .with_rel_tol(1e-9),
            )
            .unwrap();
            let b = volume(
                &q2,
                &QuadratureSpec::new(Scheme::TensorGaussLegendre {
                    nodes_per_axis: nodes * 2,
                })
                .with_rel_tol(1e-9),
            )
            .unwrap();
            assert!(rel_err(a, b) < 10.0 * 1e-9);
        }
    }

    #[test]
    fn auto_radius_satisfies_tail_bound() {
        for f in [
            FunctionHandle::quadratic(2).unwrap(),
            FunctionHandle::l1(2).unwrap(),
            FunctionHandle::functional_simplex(1).unwrap(),
        ] {
            let ab = affine_lower_bound(&f).unwrap();
            let r = auto_truncation_radius(&f).unwrap();
            let spec = QuadratureSpec::default_for_dim(f.dim());
            let v = volume(&f, &spec).unwrap();
            let tail = log_tail_bound(f.dim(), ab.a, ab.b, r);
            assert!(
                tail < spec.target_rel_tol.ln() + v.ln(),
                "tail bound {tail} vs target {}",
                spec.target_rel_tol.ln() + v.ln()
            );
        }
    }

    struct Growing;
    impl crate::functions::CustomFn for Growing {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, x: &[f64]) -> ExtReal {
            Finite(-x[0].abs())
        }
        fn describe(&self) -> String {
            "exp-growing".into()
        }
    }

    #[test]
    fn divergent_integrands_are_detected() {
        let g = FunctionHandle::custom(std::sync::Arc::new(Growing)).unwrap();
        let spec = QuadratureSpec::default_for_dim(1);
        match volume(&g, &spec) {
            Err(Error::Divergent) => {}
            other => panic!("expected Divergent, got {other:?}"),
        }
    }

    #[test]
    fn empty_domain_reports_zero_volume() {
        let grid = GridSpec::uniform_1d(-1.0, 1.0, 5).unwrap();
        let vals = vec![PosInf; 5];
        let g = FunctionHandle::grid_sampled(grid, vals).unwrap();
        let spec = QuadratureSpec::default_for_dim(1);
        match volume(&g, &spec) {
            Err(Error::ZeroVolume) => {}
            other => panic!("expected ZeroVolume, got {other:?}"),
        }
    }

    #[test]
    fn tensor_volume_is_product_of_factors() {
        let q1 = FunctionHandle::quadratic(1).unwrap();
        let l1 = FunctionHandle::l1(1).unwrap();
        let t = crate::functions::tensor(&q1, &l1).unwrap();
        let spec = QuadratureSpec::default_for_dim(2);
        let v = volume(&t, &spec).unwrap();
        assert!(rel_err(v, (2.0 * PI).sqrt() * 2.0) < 1e-9);
    }

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        let mut s = QuadratureSpec::new(Scheme::TensorGaussLegendre { nodes_per_axis: 2 });
        assert!(s.validate().is_err());
        s = QuadratureSpec::new(Scheme::Adaptive1D { max_subdivisions: 64 });
        s.target_rel_tol = 0.5;
        assert!(s.validate().is_err());
        s.target_rel_tol = 1e-9;
        s.truncation_radius = Some(-1.0);
        assert!(s.validate().is_err());
    }
}
