//! Evaluable convex (and super-linear) functions `f : R^n -> R ∪ {+∞}`.
//!
//! A [`FunctionHandle`] is an immutable, thread-safe description of a
//! function: a closed-form catalog entry (L1 norm, convex quadratic
//! `|x|^2/2`, the "functional simplex" `Σ x_i` on `[-1,∞)^n`, convex
//! indicators of cubes/balls/simplices), a grid sample with multilinear
//! interpolation, or an algebraic combination (translate, linear
//! pull-back, tensor sum, positive rescaling, infimum convolution).
//!
//! Handles are cheap to clone (`Arc` inside) and never mutate after
//! construction, so any operation may be invoked concurrently.

mod parse;

pub use parse::{grid_from_csv, grid_to_csv, parse_function};

use crate::extreal::{ExtReal, Finite, PosInf};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

/// Hard cap on dimensions: tensor quadrature is combinatorial and the
/// laboratory targets desk-scale experiments.
pub const MAX_DIM: usize = 8;

const SINGULAR_DET_THRESHOLD: f64 = 1e-12;
const MAX_GRID_NODES: usize = 1 << 22;

/// Regular rectangular grid: per-axis bounds and node counts, values laid
/// out row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    axes: Vec<GridAxis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Result<GridSpec> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "grid dimension must be in 1..={MAX_DIM}"
            )));
        }
        let mut total: usize = 1;
        for ax in &axes {
            if !(ax.lo < ax.hi) {
                return Err(Error::InvalidParameter(format!(
                    "grid axis bounds must satisfy lo < hi, got [{}, {}]",
                    ax.lo, ax.hi
                )));
            }
            if ax.nodes < 2 {
                return Err(Error::InvalidParameter(
                    "grid axes need at least 2 nodes".into(),
                ));
            }
            total = total.saturating_mul(ax.nodes);
        }
        if total > MAX_GRID_NODES {
            return Err(Error::InvalidParameter(format!(
                "grid has {total} nodes, budget is {MAX_GRID_NODES}"
            )));
        }
        Ok(GridSpec { axes })
    }

    pub fn uniform_1d(lo: f64, hi: f64, nodes: usize) -> Result<GridSpec> {
        GridSpec::new(vec![GridAxis { lo, hi, nodes }])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn step(&self, axis: usize) -> f64 {
        let ax = &self.axes[axis];
        (ax.hi - ax.lo) / (ax.nodes - 1) as f64
    }

    /// Coordinates of the node with row-major flat index `idx`.
    pub fn node_coords(&self, mut idx: usize) -> Vec<f64> {
        let mut coords = vec![0.0; self.dim()];
        for axis in (0..self.dim()).rev() {
            let n = self.axes[axis].nodes;
            let i = idx % n;
            idx /= n;
            coords[axis] = self.axes[axis].lo + self.step(axis) * i as f64;
        }
        coords
    }

    /// Sample a function on every node, row-major.
    pub fn sample(&self, f: impl Fn(&[f64]) -> ExtReal) -> Vec<ExtReal> {
        (0..self.node_count())
            .map(|idx| f(&self.node_coords(idx)))
            .collect()
    }
}

/// Certificate `f(x) >= a|x| + b` with `a > 0`; what makes every moment
/// of `e^{-f}` finite and yields analytic tail bounds for truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineLowerBound {
    pub a: f64,
    pub b: f64,
}

impl AffineLowerBound {
    /// Value of the bound at radius `r` from the origin.
    pub fn at(&self, r: f64) -> f64 {
        self.a * r + self.b
    }
}

/// Opaque evaluable function; lets other modules (the flow semigroup)
/// wrap their own evaluation rule in a handle without this module
/// knowing about it.
pub trait CustomFn: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> ExtReal;
    /// Analytic gradient where available.
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// Interior kink locations along `axis` (for quadrature panels).
    fn axis_breakpoints(&self, _axis: usize) -> Vec<f64> {
        vec![]
    }
    /// Radius beyond which the function is certainly `+∞`.
    fn finite_extent(&self) -> Option<f64> {
        None
    }
    fn describe(&self) -> String;
}

#[derive(Clone)]
pub enum Kind {
    /// `Σ |x_i|`.
    L1Norm,
    /// `|x|^2 / 2`.
    Quadratic,
    /// `Σ x_i` on `[-1, ∞)^n`, `+∞` elsewhere.
    FunctionalSimplex,
    /// `0` on `[-hw, hw]^n`, `+∞` elsewhere.
    IndicatorCube { half_width: f64 },
    /// `0` on `{|x| <= r}`, `+∞` elsewhere.
    IndicatorBall { radius: f64 },
    /// `0` on the solid simplex `conv{0, e_1, .., e_n}`, optionally
    /// translated so its vertex barycenter sits at the origin.
    IndicatorSimplex { centered: bool },
    /// Multilinear interpolation of tabulated extended-real values;
    /// `+∞` outside the grid box and on any cell touching an `inf` node.
    GridSampled {
        grid: GridSpec,
        values: Arc<Vec<ExtReal>>,
    },
    /// `(T_a f)(x) = f(x + a)`.
    Translated { base: FunctionHandle, a: Vec<f64> },
    /// `(A^* f)(x) = f(Ax)` for invertible `A`.
    Pulled {
        base: FunctionHandle,
        a: Arc<DMatrix<f64>>,
        a_inv: Arc<DMatrix<f64>>,
        det_abs: f64,
    },
    /// `(f ⊗ g)(x, y) = f(x) + g(y)`.
    Tensor {
        left: FunctionHandle,
        right: FunctionHandle,
    },
    /// `(λ·f)(x) = λ f(x/λ)` for `λ > 0`.
    Scaled { lambda: f64, base: FunctionHandle },
    /// Brute-force infimum convolution over a search grid:
    /// `min_u f(u) + g(x - u)`, exact only up to the grid resolution.
    InfConv {
        left: FunctionHandle,
        right: FunctionHandle,
        search: GridSpec,
    },
    /// Externally defined evaluation rule (e.g. a flow-evolved state).
    Custom(Arc<dyn CustomFn>),
}

#[derive(Clone)]
pub struct FunctionHandle {
    inner: Arc<Inner>,
}

struct Inner {
    dim: usize,
    kind: Kind,
}

impl fmt::Debug for FunctionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FunctionHandle({}, dim={})", self.describe(), self.dim())
    }
}

impl FunctionHandle {
    fn mk(dim: usize, kind: Kind) -> FunctionHandle {
        FunctionHandle {
            inner: Arc::new(Inner { dim, kind }),
        }
    }

    fn check_dim(dim: usize) -> Result<()> {
        if dim == 0 || dim > MAX_DIM {
            Err(Error::InvalidParameter(format!(
                "dimension must be in 1..={MAX_DIM}, got {dim}"
            )))
        } else {
            Ok(())
        }
    }

    pub fn l1(dim: usize) -> Result<FunctionHandle> {
        Self::check_dim(dim)?;
        Ok(Self::mk(dim, Kind::L1Norm))
    }

    pub fn quadratic(dim: usize) -> Result<FunctionHandle> {
        Self::check_dim(dim)?;
        Ok(Self::mk(dim, Kind::Quadratic))
    }

    pub fn functional_simplex(dim: usize) -> Result<FunctionHandle> {
        Self::check_dim(dim)?;
        Ok(Self::mk(dim, Kind::FunctionalSimplex))
    }

    pub fn cube(dim: usize, half_width: f64) -> Result<FunctionHandle> {
        Self::check_dim(dim)?;
        if !(half_width > 0.0) {
            return Err(Error::InvalidParameter("cube half_width must be > 0".into()));
        }
        Ok(Self::mk(dim, Kind::IndicatorCube { half_width }))
    }

    pub fn ball(dim: usize, radius: f64) -> Result<FunctionHandle> {
        Self::check_dim(dim)?;
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter("ball radius must be > 0".into()));
        }
        Ok(Self::mk(dim, Kind::IndicatorBall { radius }))
    }

    pub fn simplex(dim: usize, centered: bool) -> Result<FunctionHandle> {
        Self::check_dim(dim)?;
        Ok(Self::mk(dim, Kind::IndicatorSimplex { centered }))
    }

    pub fn grid_sampled(grid: GridSpec, values: Vec<ExtReal>) -> Result<FunctionHandle> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidParameter(format!(
                "grid expects {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        let dim = grid.dim();
        Ok(Self::mk(
            dim,
            Kind::GridSampled {
                grid,
                values: Arc::new(values),
            },
        ))
    }

    pub fn custom(f: Arc<dyn CustomFn>) -> Result<FunctionHandle> {
        let dim = f.dim();
        Self::check_dim(dim)?;
        Ok(Self::mk(dim, Kind::Custom(f)))
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn kind(&self) -> &Kind {
        &self.inner.kind
    }

    /// Evaluate at `x`. Panics on dimension mismatch (use [`try_eval`]
    /// at API boundaries); never returns −∞ or NaN.
    ///
    /// [`try_eval`]: FunctionHandle::try_eval
    pub fn eval(&self, x: &[f64]) -> ExtReal {
        assert_eq!(x.len(), self.dim(), "dimension mismatch in eval");
        let mut buf = [0.0_f64; MAX_DIM];
        match &self.inner.kind {
            Kind::L1Norm => Finite(x.iter().map(|v| v.abs()).sum()),
            Kind::Quadratic => Finite(0.5 * x.iter().map(|v| v * v).sum::<f64>()),
            Kind::FunctionalSimplex => {
                if x.iter().all(|&v| v >= -1.0) {
                    Finite(x.iter().sum())
                } else {
                    PosInf
                }
            }
            Kind::IndicatorCube { half_width } => {
                if x.iter().all(|v| v.abs() <= *half_width) {
                    Finite(0.0)
                } else {
                    PosInf
                }
            }
            Kind::IndicatorBall { radius } => {
                if x.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
                    Finite(0.0)
                } else {
                    PosInf
                }
            }
            Kind::IndicatorSimplex { centered } => {
                let c = if *centered {
                    1.0 / (self.dim() as f64 + 1.0)
                } else {
                    0.0
                };
                let mut sum = 0.0;
                for &v in x {
                    let u = v + c;
                    if u < 0.0 {
                        return PosInf;
                    }
                    sum += u;
                }
                if sum <= 1.0 {
                    Finite(0.0)
                } else {
                    PosInf
                }
            }
            Kind::GridSampled { grid, values } => grid_interpolate(grid, values, x),
            Kind::Translated { base, a } => {
                for i in 0..x.len() {
                    buf[i] = x[i] + a[i];
                }
                base.eval(&buf[..x.len()])
            }
            Kind::Pulled { base, a, .. } => {
                for (i, row) in a.row_iter().enumerate() {
                    buf[i] = row.iter().zip(x).map(|(m, v)| m * v).sum();
                }
                base.eval(&buf[..x.len()])
            }
            Kind::Tensor { left, right } => {
                let k = left.dim();
                left.eval(&x[..k]) + right.eval(&x[k..])
            }
            Kind::Scaled { lambda, base } => {
                for i in 0..x.len() {
                    buf[i] = x[i] / lambda;
                }
                *lambda * base.eval(&buf[..x.len()])
            }
            Kind::InfConv {
                left,
                right,
                search,
            } => {
                let mut best = PosInf;
                let mut shifted = vec![0.0; x.len()];
                for idx in 0..search.node_count() {
                    let u = search.node_coords(idx);
                    let fu = left.eval(&u);
                    if fu >= best {
                        continue;
                    }
                    for i in 0..x.len() {
                        shifted[i] = x[i] - u[i];
                    }
                    best = best.min(fu + right.eval(&shifted));
                }
                best
            }
            Kind::Custom(f) => f.eval(x),
        }
    }

    /// Checked evaluation for API boundaries.
    pub fn try_eval(&self, x: &[f64]) -> Result<ExtReal> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    /// Analytic gradient where the kind defines one (a.e. for the L1
    /// norm); `None` for grid samples, indicators, and inf-convolutions.
    pub fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(x.len(), self.dim(), "dimension mismatch in gradient");
        match &self.inner.kind {
            Kind::L1Norm => Some(x.iter().map(|v| v.signum() * f64::from(*v != 0.0)).collect()),
            Kind::Quadratic => Some(x.to_vec()),
            Kind::FunctionalSimplex => {
                if x.iter().all(|&v| v >= -1.0) {
                    Some(vec![1.0; x.len()])
                } else {
                    None
                }
            }
            Kind::Translated { base, a } => {
                let shifted: Vec<f64> = x.iter().zip(a).map(|(v, ai)| v + ai).collect();
                base.gradient(&shifted)
            }
            Kind::Pulled { base, a, .. } => {
                let ax: Vec<f64> = a
                    .row_iter()
                    .map(|row| row.iter().zip(x).map(|(m, v)| m * v).sum())
                    .collect();
                let g = base.gradient(&ax)?;
                let gv = DVector::from_vec(g);
                Some((a.transpose() * gv).iter().copied().collect())
            }
            Kind::Tensor { left, right } => {
                let k = left.dim();
                let mut g = left.gradient(&x[..k])?;
                g.extend(right.gradient(&x[k..])?);
                Some(g)
            }
            Kind::Scaled { lambda, base } => {
                let inner: Vec<f64> = x.iter().map(|v| v / lambda).collect();
                base.gradient(&inner)
            }
            Kind::Custom(f) => f.gradient(x),
            _ => None,
        }
    }

    /// True when `e^{-f}` has a smooth density with an evaluable
    /// gradient (what Fischer-information integrals require).
    pub fn has_smooth_gradient(&self) -> bool {
        match &self.inner.kind {
            Kind::L1Norm | Kind::Quadratic | Kind::FunctionalSimplex => true,
            Kind::Translated { base, .. }
            | Kind::Pulled { base, .. }
            | Kind::Scaled { base, .. } => base.has_smooth_gradient(),
            Kind::Tensor { left, right } => {
                left.has_smooth_gradient() && right.has_smooth_gradient()
            }
            Kind::GridSampled { .. } => true, // central differences
            Kind::Custom(_) => true,
            _ => false,
        }
    }

    pub fn is_indicator(&self) -> bool {
        match &self.inner.kind {
            Kind::IndicatorCube { .. } | Kind::IndicatorBall { .. } | Kind::IndicatorSimplex { .. } => {
                true
            }
            Kind::Translated { base, .. }
            | Kind::Pulled { base, .. }
            | Kind::Scaled { base, .. } => base.is_indicator(),
            Kind::Tensor { left, right } => left.is_indicator() && right.is_indicator(),
            _ => false,
        }
    }

    /// Interior points where the function (restricted to `axis`) loses
    /// smoothness; quadrature panels split there.
    pub fn axis_breakpoints(&self, axis: usize) -> Vec<f64> {
        match &self.inner.kind {
            Kind::L1Norm => vec![0.0],
            Kind::FunctionalSimplex => vec![-1.0],
            Kind::IndicatorCube { half_width } => vec![-half_width, *half_width],
            Kind::IndicatorBall { radius } => {
                if self.dim() == 1 {
                    vec![-radius, *radius]
                } else {
                    vec![]
                }
            }
            Kind::IndicatorSimplex { centered } => {
                // per-axis span is [0, 1] before centering; the lower
                // wall is an axis-orthogonal facet, the upper one the
                // bounding-box edge
                let c = if *centered { 1.0 / (self.dim() as f64 + 1.0) } else { 0.0 };
                vec![-c, 1.0 - c]
            }
            Kind::Translated { base, a } => base
                .axis_breakpoints(axis)
                .into_iter()
                .map(|s| s - a[axis])
                .collect(),
            Kind::Scaled { lambda, base } => base
                .axis_breakpoints(axis)
                .into_iter()
                .map(|s| s * lambda)
                .collect(),
            Kind::Tensor { left, right } => {
                let k = left.dim();
                if axis < k {
                    left.axis_breakpoints(axis)
                } else {
                    right.axis_breakpoints(axis - k)
                }
            }
            Kind::Custom(f) => f.axis_breakpoints(axis),
            _ => vec![],
        }
    }

    /// Conservative radius `ρ` with `f(x) = +∞` whenever `|x| > ρ`;
    /// `None` when the effective domain is (possibly) unbounded.
    pub fn finite_extent(&self) -> Option<f64> {
        match &self.inner.kind {
            Kind::IndicatorCube { half_width } => {
                Some(half_width * (self.dim() as f64).sqrt())
            }
            Kind::IndicatorBall { radius } => Some(*radius),
            Kind::IndicatorSimplex { centered } => {
                // norms are maximized at vertices; exact over the hull
                let n = self.dim() as f64;
                if *centered {
                    let c = 1.0 / (n + 1.0);
                    let at_origin = c * n.sqrt();
                    let at_vertex = ((1.0 - c).powi(2) + (n - 1.0) * c * c).sqrt();
                    Some(at_origin.max(at_vertex))
                } else {
                    Some(1.0)
                }
            }
            Kind::GridSampled { grid, .. } => {
                let corner: f64 = grid
                    .axes()
                    .iter()
                    .map(|ax| ax.lo.abs().max(ax.hi.abs()).powi(2))
                    .sum();
                Some(corner.sqrt())
            }
            Kind::Translated { base, a } => {
                let shift = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                Some(base.finite_extent()? + shift)
            }
            Kind::Pulled { base, a_inv, .. } => {
                // {x : Ax ∈ dom} ⊆ A⁻¹·(extent ball); bound ‖A⁻¹‖ by its
                // Frobenius norm.
                let op = a_inv.iter().map(|v| v * v).sum::<f64>().sqrt();
                Some(base.finite_extent()? * op)
            }
            Kind::Scaled { lambda, base } => Some(base.finite_extent()? * lambda),
            Kind::Tensor { left, right } => {
                let (a, b) = (left.finite_extent()?, right.finite_extent()?);
                Some((a * a + b * b).sqrt())
            }
            Kind::InfConv { left, right, .. } => {
                Some(left.finite_extent()? + right.finite_extent()?)
            }
            Kind::Custom(f) => f.finite_extent(),
            _ => None,
        }
    }

    /// Short human-readable tag used by the CLI and reports.
    pub fn describe(&self) -> String {
        match &self.inner.kind {
            Kind::L1Norm => format!("l1:dim={}", self.dim()),
            Kind::Quadratic => format!("quadratic:dim={}", self.dim()),
            Kind::FunctionalSimplex => format!("funcsimplex:dim={}", self.dim()),
            Kind::IndicatorCube { half_width } => {
                format!("cube:dim={},hw={}", self.dim(), half_width)
            }
            Kind::IndicatorBall { radius } => format!("ball:dim={},r={}", self.dim(), radius),
            Kind::IndicatorSimplex { centered } => {
                format!("simplex:dim={},centered={}", self.dim(), centered)
            }
            Kind::GridSampled { grid, .. } => format!("grid:dim={}", grid.dim()),
            Kind::Translated { base, a } => format!(
                "translate(a=[{}];{})",
                a.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                base.describe()
            ),
            Kind::Pulled { base, .. } => format!("pullback({})", base.describe()),
            Kind::Tensor { left, right } => {
                format!("tensor({};{})", left.describe(), right.describe())
            }
            Kind::Scaled { lambda, base } => format!("scale(l={};{})", lambda, base.describe()),
            Kind::InfConv { left, right, .. } => {
                format!("infconv({};{})", left.describe(), right.describe())
            }
            Kind::Custom(f) => f.describe(),
        }
    }
}

/// `(T_a f)(x) = f(x + a)`.
pub fn translate(f: &FunctionHandle, a: &[f64]) -> Result<FunctionHandle> {
    if a.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: a.len(),
        });
    }
    // Collapse stacked translations so translate(translate(f,a),-a)
    // reproduces f exactly, representation and all.
    if let Kind::Translated { base, a: a0 } = f.kind() {
        let sum: Vec<f64> = a0.iter().zip(a).map(|(x, y)| x + y).collect();
        if sum.iter().all(|&v| v == 0.0) {
            return Ok(base.clone());
        }
        return Ok(FunctionHandle::mk(
            base.dim(),
            Kind::Translated {
                base: base.clone(),
                a: sum,
            },
        ));
    }
    if a.iter().all(|&v| v == 0.0) {
        return Ok(f.clone());
    }
    Ok(FunctionHandle::mk(
        f.dim(),
        Kind::Translated {
            base: f.clone(),
            a: a.to_vec(),
        },
    ))
}

/// `(A^* f)(x) = f(Ax)`; `A` must be square, dim-matching, and
/// invertible (`|det A| > 1e-12`).
pub fn pullback(f: &FunctionHandle, a: &DMatrix<f64>) -> Result<FunctionHandle> {
    if a.nrows() != f.dim() || a.ncols() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: a.nrows().max(a.ncols()),
        });
    }
    let det = a.determinant();
    if det.abs() < SINGULAR_DET_THRESHOLD {
        return Err(Error::SingularMatrix(SINGULAR_DET_THRESHOLD));
    }
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix(SINGULAR_DET_THRESHOLD))?;
    Ok(FunctionHandle::mk(
        f.dim(),
        Kind::Pulled {
            base: f.clone(),
            a: Arc::new(a.clone()),
            a_inv: Arc::new(a_inv),
            det_abs: det.abs(),
        },
    ))
}

/// `(f ⊗ g)(x, y) = f(x) + g(y)`; dimensions add.
pub fn tensor(f: &FunctionHandle, g: &FunctionHandle) -> Result<FunctionHandle> {
    let dim = f.dim() + g.dim();
    FunctionHandle::check_dim(dim)?;
    Ok(FunctionHandle::mk(
        dim,
        Kind::Tensor {
            left: f.clone(),
            right: g.clone(),
        },
    ))
}

/// `(λ·f)(x) = λ f(x/λ)` for `λ > 0`.
pub fn scale(lambda: f64, f: &FunctionHandle) -> Result<FunctionHandle> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("scale factor must be > 0".into()));
    }
    if lambda == 1.0 {
        return Ok(f.clone());
    }
    Ok(FunctionHandle::mk(
        f.dim(),
        Kind::Scaled {
            lambda,
            base: f.clone(),
        },
    ))
}

/// Brute-force infimum convolution `(f □ g)(z) = inf_u f(u) + g(z-u)`,
/// with the infimum searched over the nodes of `search_grid`; exact only
/// up to the grid resolution.
pub fn inf_conv(
    f: &FunctionHandle,
    g: &FunctionHandle,
    search_grid: GridSpec,
) -> Result<FunctionHandle> {
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: g.dim(),
        });
    }
    if search_grid.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: search_grid.dim(),
        });
    }
    Ok(FunctionHandle::mk(
        f.dim(),
        Kind::InfConv {
            left: f.clone(),
            right: g.clone(),
            search: search_grid,
        },
    ))
}

fn grid_interpolate(grid: &GridSpec, values: &[ExtReal], x: &[f64]) -> ExtReal {
    let d = grid.dim();
    let mut base_idx = [0usize; MAX_DIM];
    let mut frac = [0.0f64; MAX_DIM];
    for axis in 0..d {
        let ax = &grid.axes[axis];
        if x[axis] < ax.lo || x[axis] > ax.hi {
            return PosInf;
        }
        let u = (x[axis] - ax.lo) / grid.step(axis);
        let mut i = u.floor() as usize;
        if i >= ax.nodes - 1 {
            i = ax.nodes - 2;
        }
        base_idx[axis] = i;
        frac[axis] = u - i as f64;
    }
    // Multilinear blend over the 2^d cell corners. Any +∞ corner makes
    // the whole cell +∞: conservative, so e^{-f} is never overestimated.
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut flat = 0usize;
        let mut w = 1.0;
        for axis in 0..d {
            let up = (corner >> axis) & 1;
            let i = base_idx[axis] + up;
            flat = flat * grid.axes[axis].nodes + i;
            w *= if up == 1 { frac[axis] } else { 1.0 - frac[axis] };
        }
        match values[flat] {
            Finite(v) => acc += w * v,
            PosInf => return PosInf,
        }
    }
    Finite(acc)
}

/// Directions probed when estimating sublevel-set radii: the coordinate
/// axes (both signs) and the two diagonal directions.
fn probe_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(2 * dim + 2);
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut d = vec![0.0; dim];
            d[i] = sign;
            dirs.push(d);
        }
    }
    let diag = 1.0 / (dim as f64).sqrt();
    dirs.push(vec![diag; dim]);
    dirs.push(vec![-diag; dim]);
    dirs
}

/// Largest `t ∈ (0, t_max]` with `f(c + t d) <= level`, by bisection;
/// 0.0 if even tiny steps exceed the level.
fn directional_radius(
    f: &FunctionHandle,
    c: &[f64],
    d: &[f64],
    level: f64,
    t_max: f64,
) -> f64 {
    let value_at = |t: f64| {
        let x: Vec<f64> = c.iter().zip(d).map(|(ci, di)| ci + t * di).collect();
        f.eval(&x)
    };
    let below = |t: f64| value_at(t) <= Finite(level);
    if !below(1e-9) {
        return 0.0;
    }
    // Grow until the level is crossed (or t_max certified inside).
    let mut lo = 1e-9;
    let mut hi = 1e-3;
    while hi < t_max && below(hi) {
        lo = hi;
        hi *= 2.0;
    }
    if hi >= t_max && below(t_max) {
        return t_max;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Constructive affine lower bound `f(x) >= a|x| + b`.
///
/// Recipe: find a center `c` and level `m0` with a non-trivial sublevel
/// set, take `r` = inscribed radius of `{f <= m0}` and `R` = circumscribed
/// radius of `{f <= m0+1}` (both estimated by radial bisection along
/// `2n+2` directions), set `a = 1/(R-r)`. Outside radius `R` convexity
/// forces `f(x) > m0 + (|x-c| - r)/(R - r)`; inside, `f` is at least its
/// probed minimum. `b` is the larger constant consistent with both,
/// shifted to make the bound hold relative to the origin. The result is
/// validated on a dense sample grid and an error is returned on any
/// violation (non-convex or unbounded-sublevel input).
pub fn affine_lower_bound(f: &FunctionHandle) -> Result<AffineLowerBound> {
    let n = f.dim();

    // A finite anchor point: the origin if possible, else a coarse scan.
    let mut center = vec![0.0; n];
    let mut center_val = f.eval(&center);
    if !center_val.is_finite() {
        'scan: for radius in [0.5, 1.0, 2.0, 4.0, 8.0] {
            for d in probe_directions(n) {
                let x: Vec<f64> = d.iter().map(|di| di * radius).collect();
                let v = f.eval(&x);
                if v.is_finite() {
                    center = x;
                    center_val = v;
                    break 'scan;
                }
            }
        }
    }
    let center_val = center_val.finite().ok_or_else(|| {
        Error::InvalidParameter("no finite value found; is the effective domain empty?".into())
    })?;

    let m0 = center_val.floor() + 1.0;
    let t_cap = 1e6;
    let dirs = probe_directions(n);
    let mut r = f64::INFINITY;
    let mut big_r: f64 = 0.0;
    let mut min_probed = center_val;
    for d in &dirs {
        r = r.min(directional_radius(f, &center, d, m0, t_cap));
        let rd = directional_radius(f, &center, d, m0 + 1.0, t_cap);
        if rd >= t_cap {
            return Err(Error::InvalidParameter(
                "sublevel set appears unbounded; no affine lower bound".into(),
            ));
        }
        big_r = big_r.max(rd);
        // Track the smallest value seen along the ray for the inner bound.
        for frac in [0.25, 0.5, 0.75, 1.0] {
            let x: Vec<f64> = center
                .iter()
                .zip(d)
                .map(|(ci, di)| ci + frac * rd * di)
                .collect();
            if let Finite(v) = f.eval(&x) {
                min_probed = min_probed.min(v);
            }
        }
    }
    // Directional sampling can underestimate the circumradius between
    // probe directions; pad it.
    let big_r = (big_r * (n as f64).sqrt()).max(big_r + 1e-6);
    let r = r.min(0.5 * big_r);
    let a = 1.0 / (big_r - r);

    // Outside R (around `center`): f(x) > m0 + (|x-c|-r)/(R-r);
    // inside: f >= min_probed. Re-anchor both to |x| via |x-c| >= |x|-|c|.
    let c_norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
    let b_far = m0 - a * (r + c_norm);
    let b_near = min_probed - a * (big_r + c_norm);
    let b = b_far.min(b_near) - 1e-9;
    let bound = AffineLowerBound { a, b };

    // Validation pass: dense in 1-D/2-D, rays in higher dimension.
    let check = |x: &[f64]| -> Result<()> {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let lower = bound.at(norm);
        match f.eval(x) {
            Finite(v) if v < lower - 1e-9 => Err(Error::BoundViolated {
                at: x.to_vec(),
                value: v,
                bound: lower,
            }),
            _ => Ok(()),
        }
    };
    let span = 2.5 * (big_r + c_norm).max(1.0);
    match n {
        1 => {
            for i in 0..=400 {
                let x = -span + 2.0 * span * i as f64 / 400.0;
                check(&[x])?;
            }
        }
        2 => {
            for i in 0..=40 {
                for j in 0..=40 {
                    let x = -span + 2.0 * span * i as f64 / 40.0;
                    let y = -span + 2.0 * span * j as f64 / 40.0;
                    check(&[x, y])?;
                }
            }
        }
        _ => {
            for d in &dirs {
                for k in 1..=50 {
                    let t = span * k as f64 / 50.0;
                    let x: Vec<f64> = d.iter().map(|di| di * t).collect();
                    check(&x)?;
                }
            }
        }
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_finite_eq(v: ExtReal, expected: f64) {
        match v {
            Finite(x) => assert!(
                (x - expected).abs() <= 1e-12 * (1.0 + expected.abs()),
                "got {x}, expected {expected}"
            ),
            PosInf => panic!("expected finite {expected}, got inf"),
        }
    }

    #[test]
    fn closed_form_evaluations() {
        let q = FunctionHandle::quadratic(2).unwrap();
        assert_finite_eq(q.eval(&[3.0, 4.0]), 12.5);

        let cube = FunctionHandle::cube(2, 1.0).unwrap();
        assert_eq!(cube.eval(&[2.0, 0.0]), PosInf);
        assert_eq!(cube.eval(&[0.5, -1.0]), Finite(0.0));

        let l1 = FunctionHandle::l1(2).unwrap();
        assert_finite_eq(l1.eval(&[1.0, -2.0]), 3.0);

        let fs = FunctionHandle::functional_simplex(2).unwrap();
        assert_finite_eq(fs.eval(&[-0.5, 2.0]), 1.5);
        assert_eq!(fs.eval(&[-1.5, 0.0]), PosInf);

        let ball = FunctionHandle::ball(2, 1.0).unwrap();
        assert_eq!(ball.eval(&[0.8, 0.7]), PosInf);
        assert_eq!(ball.eval(&[0.6, 0.6]), Finite(0.0));

        let sx = FunctionHandle::simplex(2, false).unwrap();
        assert_eq!(sx.eval(&[0.3, 0.3]), Finite(0.0));
        assert_eq!(sx.eval(&[0.7, 0.7]), PosInf);
        assert_eq!(sx.eval(&[-0.1, 0.3]), PosInf);

        let sc = FunctionHandle::simplex(2, true).unwrap();
        // barycenter of {0, e1, e2} is (1/3, 1/3); the centered body
        // contains the origin strictly.
        assert_eq!(sc.eval(&[0.0, 0.0]), Finite(0.0));
        assert_eq!(sc.eval(&[0.67, 0.0]), PosInf);
    }

    #[test]
    fn translate_pullback_scale_tensor() {
        let q1 = FunctionHandle::quadratic(1).unwrap();
        let t = translate(&q1, &[1.0]).unwrap();
        assert_finite_eq(t.eval(&[0.0]), 0.5);

        let back = translate(&t, &[-1.0]).unwrap();
        for x in [-2.0, -0.3, 0.0, 1.7] {
            assert_eq!(back.eval(&[x]), q1.eval(&[x]));
        }

        let a = DMatrix::from_row_slice(1, 1, &[2.0]);
        let p = pullback(&q1, &a).unwrap();
        assert_finite_eq(p.eval(&[1.0]), 2.0);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let q2 = FunctionHandle::quadratic(2).unwrap();
        assert!(pullback(&q2, &singular).is_err());

        let s = scale(2.0, &q1).unwrap();
        assert_finite_eq(s.eval(&[2.0]), 1.0);
        assert!(scale(0.0, &q1).is_err());

        // λ·cube(hw) = cube(λ·hw) pointwise.
        let cube = FunctionHandle::cube(1, 1.0).unwrap();
        let sc = scale(2.0, &cube).unwrap();
        let cube2 = FunctionHandle::cube(1, 2.0).unwrap();
        for x in [-2.5, -2.0, -0.5, 1.9, 2.0, 2.1] {
            assert_eq!(sc.eval(&[x]), cube2.eval(&[x]));
        }

        let l1a = FunctionHandle::l1(1).unwrap();
        let tt = tensor(&l1a, &l1a).unwrap();
        assert_finite_eq(tt.eval(&[1.0, -2.0]), 3.0);
        // quadratic ⊗ quadratic = quadratic in the sum dimension
        let qq = tensor(&q1, &q1).unwrap();
        for (x, y) in [(0.3, -1.2), (2.0, 2.0)] {
            assert_eq!(qq.eval(&[x, y]), q2.eval(&[x, y]));
        }
    }

    #[test]
    fn inf_conv_brute_force() {
        let cube = FunctionHandle::cube(1, 1.0).unwrap();
        let grid = GridSpec::uniform_1d(-1.5, 1.5, 301).unwrap();
        let sum = inf_conv(&cube, &cube, grid).unwrap();
        // cube(hw=1) □ cube(hw=1) = cube(hw=2)
        assert_eq!(sum.eval(&[1.9]), Finite(0.0));
        assert_eq!(sum.eval(&[2.2]), PosInf);

        // (indicator of ~{0}) □ f = f; the search ranges over the first
        // operand's argument, so it only needs to cover ~{0}.
        let q = FunctionHandle::quadratic(1).unwrap();
        let tiny = FunctionHandle::cube(1, 1e-12).unwrap();
        let origin = GridSpec::uniform_1d(-1e-12, 1e-12, 3).unwrap();
        let idd = inf_conv(&tiny, &q, origin).unwrap();
        for x in [-1.0, 0.2, 2.0] {
            assert_finite_eq(idd.eval(&[x]), 0.5 * x * x);
        }

        // quadratic □ quadratic at z=2 is z^2/4 = 1 (1-D calculus:
        // min_x (x^2 + (z-x)^2)/2 at x = z/2).
        let wide = GridSpec::uniform_1d(-4.0, 4.0, 8001).unwrap();
        let qq = inf_conv(&q, &q, wide).unwrap();
        match qq.eval(&[2.0]) {
            Finite(v) => assert!((v - 1.0).abs() < 1e-6),
            PosInf => panic!("finite expected"),
        }
    }

    #[test]
    fn grid_sampling_and_interpolation() {
        let grid = GridSpec::uniform_1d(-1.0, 1.0, 5).unwrap();
        let vals = grid.sample(|x| Finite(x[0].abs()));
        let g = FunctionHandle::grid_sampled(grid, vals).unwrap();
        assert_finite_eq(g.eval(&[0.5]), 0.5);
        assert_finite_eq(g.eval(&[0.25]), 0.25); // linear between 0 and 0.5
        assert_eq!(g.eval(&[1.5]), PosInf);

        // +∞ nodes poison their whole cell (even at its finite corner).
        let grid = GridSpec::uniform_1d(0.0, 1.0, 5).unwrap();
        let vals = vec![Finite(0.0), Finite(0.0), PosInf, Finite(0.0), Finite(0.0)];
        let g = FunctionHandle::grid_sampled(grid, vals).unwrap();
        assert_eq!(g.eval(&[0.3]), PosInf);
        assert_eq!(g.eval(&[0.25]), PosInf);
        assert_eq!(g.eval(&[0.1]), Finite(0.0));

        let grid2 = GridSpec::new(vec![
            GridAxis { lo: 0.0, hi: 1.0, nodes: 3 },
            GridAxis { lo: 0.0, hi: 2.0, nodes: 5 },
        ])
        .unwrap();
        let vals2 = grid2.sample(|x| Finite(x[0] + 10.0 * x[1]));
        let g2 = FunctionHandle::grid_sampled(grid2, vals2).unwrap();
        assert_finite_eq(g2.eval(&[0.25, 1.3]), 0.25 + 13.0);
    }

    #[test]
    fn gradients() {
        let q = FunctionHandle::quadratic(2).unwrap();
        assert_eq!(q.gradient(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
        let l1 = FunctionHandle::l1(2).unwrap();
        assert_eq!(l1.gradient(&[3.0, -0.5]).unwrap(), vec![1.0, -1.0]);
        let t = translate(&q, &[1.0, 0.0]).unwrap();
        assert_eq!(t.gradient(&[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let s = scale(2.0, &q).unwrap();
        // d/dx [2 q(x/2)] = q'(x/2) = x/2
        assert_eq!(s.gradient(&[3.0, 0.0]).unwrap(), vec![1.5, 0.0]);
        assert!(FunctionHandle::cube(1, 1.0).unwrap().gradient(&[0.0]).is_none());
    }

    #[test]
    fn eval_never_minus_infinite_or_nan() {
        let handles = [
            FunctionHandle::l1(2).unwrap(),
            FunctionHandle::quadratic(2).unwrap(),
            FunctionHandle::functional_simplex(2).unwrap(),
            FunctionHandle::cube(2, 1.0).unwrap(),
            FunctionHandle::ball(2, 1.5).unwrap(),
            FunctionHandle::simplex(2, true).unwrap(),
        ];
        for h in &handles {
            for x in [[-3.0, 0.0], [0.0, 0.0], [0.3, -0.7], [10.0, 10.0]] {
                match h.eval(&x) {
                    Finite(v) => assert!(v.is_finite()),
                    PosInf => {}
                }
            }
        }
    }

    #[test]
    fn affine_lower_bound_closed_forms() {
        // |x| >= a|x| + b on samples requires a <= 1 and b <= 0.
        let l1 = FunctionHandle::l1(1).unwrap();
        let ab = affine_lower_bound(&l1).unwrap();
        assert!(ab.a > 0.0 && ab.a <= 1.0 + 1e-9);
        assert!(ab.b <= 1e-12);

        // quadratic in 2-D: validated internally on a dense grid; spot
        // check on a 41^2 grid over [-10,10]^2 here as well.
        let q = FunctionHandle::quadratic(2).unwrap();
        let ab = affine_lower_bound(&q).unwrap();
        for i in 0..=40 {
            for j in 0..=40 {
                let x = -10.0 + 0.5 * i as f64;
                let y = -10.0 + 0.5 * j as f64;
                let norm = (x * x + y * y).sqrt();
                let v = 0.5 * (x * x + y * y);
                assert!(v >= ab.at(norm) - 1e-9);
            }
        }

        // Indicator ball: on the support f = 0 >= a|x| + b forces b <= -a
        // once |x| reaches 1.
        let ball = FunctionHandle::ball(1, 1.0).unwrap();
        let ab = affine_lower_bound(&ball).unwrap();
        assert!(ab.b <= -ab.a + 1e-9);

        let fs = FunctionHandle::functional_simplex(1).unwrap();
        let ab = affine_lower_bound(&fs).unwrap();
        for i in 0..=200 {
            let x = -2.0 + 4.0 * i as f64 / 200.0;
            if let Finite(v) = fs.eval(&[x]) {
                assert!(v >= ab.at(x.abs()) - 1e-9);
            }
        }
    }

    #[test]
    fn composition_is_associative_on_samples() {
        let q = FunctionHandle::quadratic(2).unwrap();
        let a1 = [0.5, -1.0];
        let a2 = [-0.25, 2.0];
        let lhs = translate(&translate(&q, &a1).unwrap(), &a2).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let rhs = translate(&q, &[a1[0] + a2[0], a1[1] + a2[1]]).unwrap();
        for x in [[0.0, 0.0], [1.0, -2.0], [0.3, 0.7]] {
            assert_eq!(lhs.eval(&x), rhs.eval(&x));
        }
        // (A^*(T_a f))(x) = f(Ax + a) = (T_a f)(Ax)
        let ta = translate(&q, &a1).unwrap();
        let pa = pullback(&ta, &m).unwrap();
        for x in [[0.1, 0.2], [-1.0, 0.5]] {
            let ax = [2.0 * x[0] + x[1], x[1]];
            assert_eq!(pa.eval(&x), ta.eval(&ax));
        }
    }
}
