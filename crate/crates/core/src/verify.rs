//! Self-verification registry.
//!
//! Every structural property the library promises — transform rules,
//! Mahler-integral identities, solver contracts, flow conservation laws,
//! special-function identities, serialization determinism — is encoded
//! here as a named check with an explicit tolerance. The command-line
//! `verify` subcommand runs the registry and reports one pass/fail line
//! per check; the whole suite is deterministic and runs in well under a
//! minute at the default budgets.
//!
//! Check names are `module.property` anchors, e.g.
//! `transform.translation_rule` or `flow.volume_conserved`; a filter
//! selects by substring, so `--suite transform` runs one module's
//! checks and `--suite all` runs everything.

use crate::extreal::ExtReal::{Finite, PosInf};
use crate::functions::{
    self, inf_conv, parse_function, pullback, scale, tensor, translate, FunctionHandle, GridSpec,
};
use crate::integrate::{self, QuadratureSpec, Scheme};
use crate::mahler::{self, mahler_closed, ClosedFamily};
use crate::santalo;
use crate::specfun;
use crate::transform::{self, lp_transform};
use crate::{flow, report, Result};
use nalgebra::DMatrix;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

/// One registry entry: a stable name and the closure that checks it.
pub struct Check {
    pub name: &'static str,
    pub run: fn() -> Result<(bool, String)>,
}

/// One executed check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Measured margins, or the error message if the run aborted.
    pub detail: String,
    pub seconds: f64,
}

/// Run every check whose name contains `filter` (`"all"` or an empty
/// string selects everything). A check that returns an error counts as
/// failed with the error text as detail.
pub fn run_suite(filter: &str) -> Vec<CheckOutcome> {
    let pick = |name: &str| filter.is_empty() || filter == "all" || name.contains(filter);
    let mut out = Vec::new();
    for check in all_checks() {
        if !pick(check.name) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match (check.run)() {
            Ok((passed, detail)) => (passed, detail),
            Err(e) => (false, format!("aborted: {e}")),
        };
        out.push(CheckOutcome {
            name: check.name,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    out
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    !outcomes.is_empty() && outcomes.iter().all(|o| o.passed)
}

/// Fixed-width text table, one line per check.
pub fn render_table(outcomes: &[CheckOutcome]) -> String {
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(8);
    let mut s = String::new();
    for o in outcomes {
        let _ = writeln!(
            s,
            "{:<width$}  {}  {:>7.2}s  {}",
            o.name,
            if o.passed { "PASS" } else { "FAIL" },
            o.seconds,
            o.detail,
        );
    }
    let n_pass = outcomes.iter().filter(|o| o.passed).count();
    let _ = writeln!(s, "{n_pass}/{} checks passed", outcomes.len());
    s
}

/// The outcomes as a serializable document.
pub fn to_value(outcomes: &[CheckOutcome]) -> report::Value {
    report::Value::object([
        (
            "checks",
            report::Value::array(outcomes.iter().map(|o| {
                report::Value::object([
                    ("name", report::Value::str(o.name)),
                    ("passed", report::Value::Bool(o.passed)),
                    ("detail", report::Value::str(o.detail.clone())),
                    ("seconds", report::Value::Real(o.seconds)),
                ])
            })),
        ),
        (
            "passed",
            report::Value::Bool(all_passed(outcomes)),
        ),
    ])
}

// ---------------------------------------------------------------------------
// Small shared helpers.

fn spec1() -> QuadratureSpec {
    QuadratureSpec::default_for_dim(1)
}

fn spec2() -> QuadratureSpec {
    QuadratureSpec::default_for_dim(2)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Deterministic sample points (xorshift64*), mapped to `[-range, range]^n`.
struct Samples {
    state: u64,
}

impl Samples {
    fn new(seed: u64) -> Samples {
        Samples { state: seed.max(1) }
    }

    fn unit(&mut self) -> f64 {
        self.state ^= self.state >> 12;
        self.state ^= self.state << 25;
        self.state ^= self.state >> 27;
        (self.state.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn point(&mut self, dim: usize, range: f64) -> Vec<f64> {
        (0..dim).map(|_| (2.0 * self.unit() - 1.0) * range).collect()
    }
}

/// Format the worst observed margin for the detail column.
fn worst(label: &str, value: f64) -> String {
    format!("{label} {value:.2e}")
}

fn closed_family_1d() -> Vec<FunctionHandle> {
    vec![
        FunctionHandle::quadratic(1).unwrap(),
        FunctionHandle::l1(1).unwrap(),
        FunctionHandle::functional_simplex(1).unwrap(),
    ]
}

// ---------------------------------------------------------------------------
// functions.*

fn functions_wrapper_composition() -> Result<(bool, String)> {
    let mut s = Samples::new(11);
    let f = FunctionHandle::quadratic(2)?;
    let a = [0.3, -0.7];
    let b = [-1.1, 0.4];
    let ab = [a[0] + b[0], a[1] + b[1]];
    let lhs = translate(&translate(&f, &a)?, &b)?;
    let rhs = translate(&f, &ab)?;
    let s1 = scale(2.0, &scale(3.0, &f)?)?;
    let s2 = scale(6.0, &f)?;
    let (g, h) = (FunctionHandle::l1(1)?, FunctionHandle::cube(1, 1.0)?);
    let t1 = tensor(&tensor(&f, &g)?, &h)?;
    let t2 = tensor(&f, &tensor(&g, &h)?)?;
    let mut worst_gap = 0.0_f64;
    for _ in 0..25 {
        let x = s.point(2, 2.0);
        if let (Finite(u), Finite(v)) = (lhs.eval(&x), rhs.eval(&x)) {
            worst_gap = worst_gap.max((u - v).abs());
        }
        if let (Finite(u), Finite(v)) = (s1.eval(&x), s2.eval(&x)) {
            worst_gap = worst_gap.max((u - v).abs());
        }
        let x4 = s.point(4, 1.5);
        match (t1.eval(&x4), t2.eval(&x4)) {
            (Finite(u), Finite(v)) => worst_gap = worst_gap.max((u - v).abs()),
            (PosInf, PosInf) => {}
            _ => worst_gap = f64::INFINITY,
        }
    }
    Ok((worst_gap < 1e-12, worst("max assoc gap", worst_gap)))
}

fn functions_eval_total() -> Result<(bool, String)> {
    let grid = GridSpec::uniform_1d(-1.0, 1.0, 5)?;
    let vals = vec![PosInf, Finite(0.5), Finite(0.0), Finite(0.5), PosInf];
    let handles: Vec<FunctionHandle> = vec![
        FunctionHandle::quadratic(3)?,
        FunctionHandle::l1(2)?,
        FunctionHandle::cube(2, 1.0)?,
        FunctionHandle::ball(2, 1.5)?,
        FunctionHandle::simplex(2, false)?,
        FunctionHandle::simplex(2, true)?,
        FunctionHandle::functional_simplex(2)?,
        translate(&FunctionHandle::l1(2)?, &[0.5, -1.0])?,
        scale(2.5, &FunctionHandle::quadratic(2)?)?,
        tensor(&FunctionHandle::l1(1)?, &FunctionHandle::quadratic(1)?)?,
        tensor(&FunctionHandle::grid_sampled(grid, vals)?, &FunctionHandle::l1(1)?)?,
    ];
    let mut tested = 0usize;
    for f in &handles {
        let n = f.dim();
        let probes: Vec<Vec<f64>> = vec![
            vec![0.0; n],
            vec![0.4; n],
            vec![-0.9; n],
            vec![1e3; n],
            vec![-1e3; n],
            vec![1e-300; n],
        ];
        for x in &probes {
            tested += 1;
            match f.eval(x) {
                Finite(v) => {
                    if !v.is_finite() {
                        return Ok((false, format!("{} at {x:?} gave {v}", f.describe())));
                    }
                }
                PosInf => {}
            }
            if let Some(g) = f.gradient(x) {
                if g.iter().any(|v| v.is_nan()) {
                    return Ok((false, format!("{} gradient NaN at {x:?}", f.describe())));
                }
            }
        }
    }
    Ok((true, format!("{tested} evaluations, all finite or +inf")))
}

fn functions_translate_roundtrip() -> Result<(bool, String)> {
    let mut s = Samples::new(7);
    let a = [0.1 + 0.2, -0.3];
    let neg = [-a[0], -a[1]];
    for f in [FunctionHandle::l1(2)?, FunctionHandle::functional_simplex(2)?] {
        let round = translate(&translate(&f, &a)?, &neg)?;
        for _ in 0..20 {
            let x = s.point(2, 3.0);
            if round.eval(&x) != f.eval(&x) {
                return Ok((false, format!("drift at {x:?} for {}", f.describe())));
            }
        }
    }
    Ok((true, "bit-exact on all samples".into()))
}

fn functions_affine_lower_bound() -> Result<(bool, String)> {
    let mut worst_violation = f64::NEG_INFINITY;
    for f in [
        FunctionHandle::quadratic(2)?,
        FunctionHandle::l1(2)?,
        FunctionHandle::functional_simplex(2)?,
        FunctionHandle::cube(2, 1.0)?,
        translate(&FunctionHandle::quadratic(2)?, &[1.0, -0.5])?,
    ] {
        let lb = functions::affine_lower_bound(&f)?;
        for k in 0..64 {
            let th = 2.0 * PI * k as f64 / 64.0;
            for r in [0.3, 1.0, 2.5, 6.0, 15.0] {
                let x = [r * th.cos(), r * th.sin()];
                if let Finite(v) = f.eval(&x) {
                    worst_violation = worst_violation.max(lb.at(r) - v);
                }
            }
        }
    }
    Ok((worst_violation <= 1e-9, worst("max bound excess", worst_violation)))
}

// ---------------------------------------------------------------------------
// integrate.*

fn integrate_node_doubling() -> Result<(bool, String)> {
    let mut worst_shift = 0.0_f64;
    for f in [FunctionHandle::quadratic(2)?, FunctionHandle::l1(2)?] {
        let coarse = QuadratureSpec::new(Scheme::TensorGaussLegendre { nodes_per_axis: 64 });
        let fine = QuadratureSpec::new(Scheme::TensorGaussLegendre { nodes_per_axis: 128 });
        let a = integrate::quadrature_log_volume(&f, &coarse)?;
        let b = integrate::quadrature_log_volume(&f, &fine)?;
        worst_shift = worst_shift.max(rel(a.exp(), b.exp()));
    }
    let tol = 10.0 * spec2().target_rel_tol;
    Ok((worst_shift < tol, worst("max doubling shift", worst_shift)))
}

fn integrate_tensor_volume() -> Result<(bool, String)> {
    let f = FunctionHandle::l1(1)?;
    let g = FunctionHandle::quadratic(1)?;
    let prod = integrate::volume(&f, &spec1())? * integrate::volume(&g, &spec1())?;
    let joint = integrate::volume(&tensor(&f, &g)?, &spec2())?;
    let err = rel(joint, prod);
    Ok((err < 3.0 * 1e-9, worst("tensor volume rel err", err)))
}

fn integrate_auto_radius() -> Result<(bool, String)> {
    let mut worst_ratio = f64::NEG_INFINITY;
    for f in [FunctionHandle::quadratic(2)?, FunctionHandle::l1(2)?] {
        let r = integrate::auto_truncation_radius(&f)?;
        let lb = functions::affine_lower_bound(&f)?;
        let log_tail = integrate::log_tail_bound(2, lb.a, lb.b, r);
        let log_v = integrate::log_volume(&f, &spec2())?;
        // the discarded tail must sit below tol · estimate
        worst_ratio = worst_ratio.max(log_tail - (spec2().target_rel_tol.ln() + log_v));
    }
    Ok((worst_ratio <= 0.0, worst("log tail excess", worst_ratio)))
}

fn integrate_indicator_routes() -> Result<(bool, String)> {
    let forced = QuadratureSpec {
        force_generic_nodes: true,
        ..QuadratureSpec::new(Scheme::TensorGaussLegendre { nodes_per_axis: 256 })
    };
    let body = QuadratureSpec::new(Scheme::TensorGaussLegendre { nodes_per_axis: 64 });
    let mut worst_gap = 0.0_f64;
    for (k, exact, tol) in [
        // axis-aligned walls: the generic panels sit exactly on them
        (FunctionHandle::cube(2, 0.75)?, 2.25, 1e-9),
        // curved wall: limited by the boundary staircase of a fixed grid
        (FunctionHandle::ball(2, 1.5)?, PI * 2.25, 2e-3),
    ] {
        let vb = integrate::quadrature_log_volume(&k, &body)?.exp();
        let vg = integrate::quadrature_log_volume(&k, &forced)?.exp();
        if rel(vb, exact) > 1e-9 {
            return Ok((false, format!("body route off for {}: {vb}", k.describe())));
        }
        worst_gap = worst_gap.max(rel(vg, exact) / tol);
    }
    Ok((worst_gap < 1.0, worst("generic-route err / tol", worst_gap)))
}

fn integrate_offcenter_body_coverage() -> Result<(bool, String)> {
    // bodies whose bounding box is wider than their barycenter slice:
    // generic nodes must still cover the whole body
    let forced = QuadratureSpec {
        force_generic_nodes: true,
        ..QuadratureSpec::new(Scheme::TensorGaussLegendre { nodes_per_axis: 256 })
    };
    let mut worst_err = 0.0_f64;
    for (k, exact) in [
        (FunctionHandle::simplex(2, false)?, 0.5),
        (FunctionHandle::simplex(2, true)?, 0.5),
    ] {
        let nodes = integrate::build_nodes(&k, &forced)?;
        let mut hi = [f64::MIN; 2];
        for i in 0..nodes.len() {
            let p = nodes.point(i);
            hi[0] = hi[0].max(p[0]);
            hi[1] = hi[1].max(p[1]);
        }
        // quadrature nodes are interior points, so allow the outermost
        // node to sit just inside the wall
        let wall = k.axis_breakpoints(0).last().copied().unwrap_or(f64::NAN) - 1e-2;
        if hi[0] < wall || hi[1] < wall {
            return Ok((false, format!("nodes stop at {hi:?}, body reaches {wall}")));
        }
        let vg = integrate::quadrature_log_volume(&k, &forced)?.exp();
        worst_err = worst_err.max(rel(vg, exact));
    }
    Ok((worst_err < 1e-2, worst("diagonal-wall rel err", worst_err)))
}

// ---------------------------------------------------------------------------
// specfun.*

fn specfun_beta_bessel() -> Result<(bool, String)> {
    let mut worst_err = 0.0_f64;
    for n in 1..=9 {
        for a in [0.5, 1.0, 5.0, 20.0] {
            let (lhs, rhs) = specfun::beta_bessel_identity(n, a)?;
            worst_err = worst_err.max(rel(lhs, rhs));
        }
    }
    Ok((worst_err < 1e-9, worst("max identity rel err", worst_err)))
}

fn specfun_gaunt_range() -> Result<(bool, String)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..=20 {
        let nu = k as f64 / 2.0;
        for j in 0..=24 {
            let r = 10f64.powf(-3.0 + 6.0 * j as f64 / 24.0);
            let g = specfun::gaunt_product(nu, r)?;
            lo = lo.min(g);
            hi = hi.max(g);
        }
    }
    Ok((lo > 0.5 && hi <= 1.0, format!("range [{lo:.6}, {hi:.6}]")))
}

fn specfun_gaunt_bracket() -> Result<(bool, String)> {
    let mut detail = String::new();
    for n in (1..=15).step_by(2) {
        let j_i = specfun::log_ball_mahler_integral(n, 1.0)?.exp();
        let j_k = specfun::log_p1_asymptotic(n)?.exp();
        if !(j_k <= j_i && j_i < 2.0 * j_k) {
            return Ok((false, format!("bracket broken at n={n}: {j_i} vs {j_k}")));
        }
        detail = format!("n={n}: ratio {:.4}", j_i / j_k);
    }
    Ok((true, detail))
}

fn specfun_radial_moments() -> Result<(bool, String)> {
    let mut worst_err = 0.0_f64;
    for n in [1, 3, 5, 7] {
        for m in [0, 1, 2] {
            let a = specfun::kint_exact(n, m)?;
            let b = specfun::kint_quadrature(n, m)?;
            worst_err = worst_err.max(rel(a, b));
        }
    }
    Ok((worst_err < 1e-8, worst("max moment rel err", worst_err)))
}

fn specfun_ball_rate_trend() -> Result<(bool, String)> {
    let target = (4.0 * PI).ln();
    let mut prev = f64::INFINITY;
    let mut last = 0.0;
    for n in (3..=15).step_by(2) {
        let gap = (specfun::log_mahler_ball(n, 1.0)? / n as f64 - target).abs();
        if gap >= prev {
            return Ok((false, format!("rate gap rose at n={n}: {gap:.3e} >= {prev:.3e}")));
        }
        prev = gap;
        last = gap;
    }
    Ok((true, format!("gap at n=15: {last:.3e}")))
}

// ---------------------------------------------------------------------------
// transform.*

fn transform_monotone_in_p() -> Result<(bool, String)> {
    let spec = spec1();
    let grid = GridSpec::uniform_1d(-8.0, 8.0, 2001)?;
    let mut worst_violation = f64::NEG_INFINITY;
    for f in closed_family_1d() {
        let ts: Vec<_> = [0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&p| lp_transform(&f, p, &spec))
            .collect::<Result<_>>()?;
        for y in [-0.6, 0.0, 0.3, 0.9] {
            let classical = transform::legendre(&f, &[y], &grid)?;
            let mut prev = f64::NEG_INFINITY;
            for t in &ts {
                let Finite(v) = t.eval(&[y])? else { continue };
                worst_violation = worst_violation.max(prev - v);
                worst_violation = worst_violation.max(v - classical - 1e-3);
                prev = v;
            }
        }
    }
    Ok((worst_violation <= 1e-8, worst("max order violation", worst_violation)))
}

fn transform_translation_rule() -> Result<(bool, String)> {
    let spec = spec1();
    let a = 0.8;
    let mut worst_err = 0.0_f64;
    for f in closed_family_1d() {
        let tf = lp_transform(&f, 1.5, &spec)?;
        let tt = lp_transform(&translate(&f, &[a])?, 1.5, &spec)?;
        for y in [-0.5, 0.0, 0.7] {
            let (Finite(u), Finite(v)) = (tt.eval(&[y])?, tf.eval(&[y])?) else { continue };
            worst_err = worst_err.max((u - (v - a * y)).abs());
        }
    }
    Ok((worst_err < 1e-7, worst("max translation defect", worst_err)))
}

fn transform_linear_rule() -> Result<(bool, String)> {
    let spec = spec2();
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 1.0]);
    let a_inv_t = a.clone().try_inverse().unwrap().transpose();
    let f = FunctionHandle::quadratic(2)?;
    let g = pullback(&f, &a)?;
    let tf = lp_transform(&f, 2.0, &spec)?;
    let tg = lp_transform(&g, 2.0, &spec)?;
    let mut worst_err = 0.0_f64;
    for y in [[0.3, -0.2], [0.0, 0.5], [-0.4, -0.4]] {
        let yv = nalgebra::DVector::from_row_slice(&y);
        let mapped = &a_inv_t * yv;
        let (Finite(u), Finite(v)) =
            (tg.eval(&y)?, tf.eval(mapped.as_slice())?)
        else {
            continue;
        };
        worst_err = worst_err.max((u - v).abs());
    }
    Ok((worst_err < 1e-6, worst("max pullback defect", worst_err)))
}

fn transform_domination_rule() -> Result<(bool, String)> {
    let spec = spec1();
    let p = 1.0;
    // indicator of the larger cube lies below the indicator of the smaller
    let f = FunctionHandle::cube(1, 2.0)?;
    let g = FunctionHandle::cube(1, 1.0)?;
    let shift = (integrate::log_volume(&f, &spec)? - integrate::log_volume(&g, &spec)?) / p;
    let tf = lp_transform(&f, p, &spec)?;
    let tg = lp_transform(&g, p, &spec)?;
    let mut worst_violation = f64::NEG_INFINITY;
    for y in [-0.9, -0.2, 0.0, 0.4, 1.1] {
        let (Finite(u), Finite(v)) = (tg.eval(&[y])?, tf.eval(&[y])?) else { continue };
        worst_violation = worst_violation.max(u - (v + shift));
    }
    Ok((worst_violation <= 1e-8, worst("max domination excess", worst_violation)))
}

fn transform_tensor_rule() -> Result<(bool, String)> {
    let f = FunctionHandle::l1(1)?;
    let g = FunctionHandle::quadratic(1)?;
    let tf = lp_transform(&f, 1.0, &spec1())?;
    let tg = lp_transform(&g, 1.0, &spec1())?;
    let tt = lp_transform(&tensor(&f, &g)?, 1.0, &spec2())?;
    let mut worst_err = 0.0_f64;
    for (x, y) in [(0.2, -0.5), (0.0, 0.0), (-0.7, 0.9)] {
        let (Finite(u), Finite(a), Finite(b)) =
            (tt.eval(&[x, y])?, tf.eval(&[x])?, tg.eval(&[y])?)
        else {
            continue;
        };
        worst_err = worst_err.max((u - (a + b)).abs());
    }
    Ok((worst_err < 1e-6, worst("max tensor split defect", worst_err)))
}

fn transform_midpoint_convexity() -> Result<(bool, String)> {
    let spec = spec1();
    let mut s = Samples::new(23);
    let mut worst_violation = f64::NEG_INFINITY;
    for f in closed_family_1d() {
        let t = lp_transform(&f, 1.0, &spec)?;
        for _ in 0..12 {
            let y1 = s.point(1, 1.2)[0];
            let y2 = s.point(1, 1.2)[0];
            let (Finite(a), Finite(b), Finite(m)) = (
                t.eval(&[y1])?,
                t.eval(&[y2])?,
                t.eval(&[0.5 * (y1 + y2)])?,
            ) else {
                continue;
            };
            worst_violation = worst_violation.max(m - 0.5 * (a + b));
        }
    }
    Ok((worst_violation <= 1e-8, worst("max convexity excess", worst_violation)))
}

fn transform_p_interpolation() -> Result<(bool, String)> {
    let spec = spec1();
    let (p, q, lam) = (1.0, 3.0, 0.5);
    let m = (1.0 - lam) * p + lam * q;
    let mut worst_violation = f64::NEG_INFINITY;
    for f in closed_family_1d() {
        let tp = lp_transform(&f, p, &spec)?;
        let tq = lp_transform(&f, q, &spec)?;
        let tm = lp_transform(&f, m, &spec)?;
        for y in [-0.4, 0.0, 0.3, 0.8] {
            let (Finite(a), Finite(b), Finite(c)) =
                (tp.eval(&[y])?, tq.eval(&[y])?, tm.eval(&[y])?)
            else {
                continue;
            };
            let bound = (1.0 - lam) * p / m * a + lam * q / m * b;
            worst_violation = worst_violation.max(c - bound);
        }
    }
    Ok((worst_violation <= 1e-8, worst("max interpolation excess", worst_violation)))
}

fn transform_infconv_inequality() -> Result<(bool, String)> {
    let spec = spec1();
    let (p, lam) = (1.0, 0.5);
    let f = FunctionHandle::quadratic(1)?;
    let g = FunctionHandle::l1(1)?;
    let search = GridSpec::uniform_1d(-9.0, 9.0, 721)?;
    let conv = inf_conv(&scale(1.0 - lam, &f)?, &scale(lam, &g)?, search)?;
    let t_conv = lp_transform(&conv, p, &spec)?;
    let tf = lp_transform(&f, p, &spec)?;
    let tg = lp_transform(&g, p, &spec)?;
    let defect = (integrate::log_volume(&conv, &spec)?
        - (1.0 - lam) * integrate::log_volume(&f, &spec)?
        - lam * integrate::log_volume(&g, &spec)?)
        / p;
    let mut worst_violation = f64::NEG_INFINITY;
    for y in [0.0, 0.5, 1.2] {
        let (Finite(u), Finite(a), Finite(b)) =
            (t_conv.eval(&[y])?, tf.eval(&[y])?, tg.eval(&[y])?)
        else {
            continue;
        };
        let rhs = (1.0 - lam) * a + lam * b - defect;
        worst_violation = worst_violation.max(rhs - u);
    }
    Ok((worst_violation <= 2e-3, worst("max infconv excess", worst_violation)))
}

fn transform_reverse_inequality() -> Result<(bool, String)> {
    let spec = spec1();
    let (p, q) = (1.0, 3.0);
    let mut worst_violation = f64::NEG_INFINITY;
    // centered family
    for f in [FunctionHandle::quadratic(1)?, FunctionHandle::l1(1)?] {
        let tp = lp_transform(&f, p, &spec)?;
        let tq = lp_transform(&f, q, &spec)?;
        for y in [-0.4, 0.0, 0.25] {
            let Finite(bound) = tp.eval(&[(1.0 + p) * y / p])? else { continue };
            let Finite(lhs) = tq.eval(&[y])? else { continue };
            worst_violation = worst_violation.max(lhs - bound - (1.0 + p).ln() / p);
        }
    }
    // barycenter form for an uncentered function
    let f = translate(&FunctionHandle::quadratic(1)?, &[0.7])?;
    let b = integrate::moments(&f, &spec)?.barycenter[0];
    let tp = lp_transform(&f, p, &spec)?;
    let tq = lp_transform(&f, q, &spec)?;
    for y in [-0.3, 0.0, 0.5] {
        let Finite(v) = tp.eval(&[(1.0 + p) * y / p])? else { continue };
        let Finite(lhs) = tq.eval(&[y])? else { continue };
        let bound = v - b * y / p + (1.0 + p).ln() / p;
        worst_violation = worst_violation.max(lhs - bound);
    }
    Ok((worst_violation <= 1e-7, worst("max reverse-bound excess", worst_violation)))
}

fn transform_large_p_limit() -> Result<(bool, String)> {
    let spec = spec1();
    let grid = GridSpec::uniform_1d(-8.0, 8.0, 3001)?;
    let mut worst_gap = 0.0_f64;
    for f in [FunctionHandle::quadratic(1)?, FunctionHandle::l1(1)?] {
        for y in [0.0, 0.4, -0.8] {
            let classical = transform::legendre(&f, &[y], &grid)?;
            let mut prev = f64::NEG_INFINITY;
            for p in [1.0, 10.0, 100.0, 1000.0] {
                let t = lp_transform(&f, p, &spec)?;
                let Finite(v) = t.eval(&[y])? else { continue };
                if v < prev - 1e-9 {
                    return Ok((false, format!("not increasing in p at y={y}")));
                }
                prev = v;
            }
            worst_gap = worst_gap.max((classical - prev).abs());
        }
    }
    Ok((worst_gap < 2e-2, worst("gap to classical at p=1000", worst_gap)))
}

fn transform_hessian_covariance() -> Result<(bool, String)> {
    let spec = spec1();
    let f = FunctionHandle::functional_simplex(1)?;
    let p = 1.0;
    let mut worst_err = 0.0_f64;
    for y in [0.0, 0.6, -0.5] {
        let h = transform::transform_hessian(&f, p, &[y], &spec)?[(0, 0)];
        let step = 1e-4;
        let gp = transform::transform_gradient(&f, p, &[y + step], &spec)?[0];
        let gm = transform::transform_gradient(&f, p, &[y - step], &spec)?[0];
        let fd = (gp - gm) / (2.0 * step);
        worst_err = worst_err.max(rel(h, fd));
    }
    Ok((worst_err < 1e-4, worst("hessian vs fd rel err", worst_err)))
}

fn transform_partial_fractions() -> Result<(bool, String)> {
    // Σ_i 1/∏_{j≠i}(y_i − y_j) = 0 for distinct reals
    let residue_sum = |y: &[f64]| -> f64 {
        (0..y.len())
            .map(|i| {
                let mut d = 1.0;
                for j in 0..y.len() {
                    if j != i {
                        d *= y[i] - y[j];
                    }
                }
                1.0 / d
            })
            .sum()
    };
    let exact = residue_sum(&[0.0, 1.0, 2.0]);
    if exact != 0.0 {
        return Ok((false, format!("(0,1,2) gave {exact}")));
    }
    let mut s = Samples::new(41);
    let mut worst_err = 0.0_f64;
    for _ in 0..40 {
        let mut y = s.point(3, 5.0);
        y.sort_by(f64::total_cmp);
        if (y[1] - y[0]).abs() < 1e-2 || (y[2] - y[1]).abs() < 1e-2 {
            continue;
        }
        worst_err = worst_err.max(residue_sum(&y).abs());
    }
    Ok((worst_err < 1e-10, worst("max residue sum", worst_err)))
}

// ---------------------------------------------------------------------------
// mahler.*

fn mahler_tensor_product() -> Result<(bool, String)> {
    let f = FunctionHandle::l1(1)?;
    let g = FunctionHandle::quadratic(1)?;
    let mut worst_err = 0.0_f64;
    for p in [1.0, 2.0] {
        let mf = mahler::mahler(&f, p, &spec1())?.value;
        let mg = mahler::mahler(&g, p, &spec1())?.value;
        let mt = mahler::mahler(&tensor(&f, &g)?, p, &spec2())?.value;
        worst_err = worst_err.max(rel(mt, mf * mg));
    }
    Ok((worst_err < 1e-4, worst("tensor split rel err", worst_err)))
}

fn mahler_antitone_in_p() -> Result<(bool, String)> {
    let spec = spec1();
    let mut worst_rise = f64::NEG_INFINITY;
    for f in closed_family_1d() {
        let mut prev = f64::INFINITY;
        for p in [0.5, 1.0, 2.0, 4.0, 10.0] {
            let m = mahler::mahler(&f, p, &spec)?.value;
            worst_rise = worst_rise.max(m - prev * (1.0 + 1e-9));
            prev = m;
        }
    }
    Ok((worst_rise <= 0.0, worst("max rise along p", worst_rise)))
}

fn mahler_reverse_bound() -> Result<(bool, String)> {
    let c = |p: f64, n: f64| (p / (1.0 + p).powf(1.0 + 1.0 / p)).powf(n);
    let p = 1.0;
    let mut worst_violation = f64::NEG_INFINITY;
    for fam in [ClosedFamily::L1Norm, ClosedFamily::Quadratic, ClosedFamily::FunctionalSimplex] {
        let mp = mahler_closed(fam, 1, p)?;
        for q in [2.0, 4.0, 10.0, 1e3] {
            let mq = mahler_closed(fam, 1, q)?;
            worst_violation = worst_violation.max(c(p, 1.0) * mp - mq);
        }
    }
    // quadrature sample in 2-D
    let l1 = FunctionHandle::l1(2)?;
    let mp = mahler::mahler(&l1, 1.0, &spec2())?.value;
    let mq = mahler::mahler(&l1, 3.0, &spec2())?.value;
    worst_violation = worst_violation.max((c(1.0, 2.0) * mp - mq) / mq);
    Ok((worst_violation <= 1e-6, worst("max reverse-bound violation", worst_violation)))
}

fn mahler_large_p_limit() -> Result<(bool, String)> {
    // decreasing toward the classical limit; the gap for the standard
    // Gaussian closes like log(p)/(2p)
    let mut prev = f64::INFINITY;
    for p in [1.0, 10.0, 100.0, 1e4] {
        let m = mahler_closed(ClosedFamily::Quadratic, 1, p)?;
        if m >= prev {
            return Ok((false, format!("not decreasing at p={p}")));
        }
        prev = m;
    }
    let gap = rel(prev, 2.0 * PI);
    Ok((gap < 1e-3, worst("gap to classical at p=1e4", gap)))
}

fn mahler_body_affine_invariance() -> Result<(bool, String)> {
    let spec = spec2();
    let k = FunctionHandle::ball(2, 1.0)?;
    let m0 = mahler::mahler_body(&k, 1.0, &spec)?.value;
    // volume-preserving shear and a general invertible map
    let shear = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.0, 1.0]);
    let gen = DMatrix::from_row_slice(2, 2, &[1.4, 0.3, -0.2, 0.9]);
    let mut worst_err = 0.0_f64;
    for a in [shear, gen] {
        let m = mahler::mahler_body(&pullback(&k, &a)?, 1.0, &spec)?.value;
        worst_err = worst_err.max(rel(m, m0));
    }
    Ok((worst_err < 1e-4, worst("affine drift rel err", worst_err)))
}

// ---------------------------------------------------------------------------
// santalo.*

fn santalo_critical_residual() -> Result<(bool, String)> {
    let spec = spec1();
    let f = translate(&FunctionHandle::functional_simplex(1)?, &[0.9])?;
    let res = santalo::santalo_point(&f, 1.0, &spec, 1e-9, 60)?;
    if !res.converged {
        return Ok((false, "solver did not converge".into()));
    }
    let grad_rel = res.residual; // |b| at the solution
    Ok((grad_rel < 1e-9, worst("dual barycenter norm", grad_rel)))
}

fn santalo_descent_monotone() -> Result<(bool, String)> {
    let spec = spec1();
    // asymmetric start: the barycenter is not the minimizer, so the
    // solver must actually move
    let f = translate(&FunctionHandle::functional_simplex(1)?, &[1.3])?;
    let res = santalo::santalo_point(&f, 1.0, &spec, 1e-9, 60)?;
    if res.trace.len() < 2 {
        return Ok((false, format!("trace has only {} step(s)", res.trace.len())));
    }
    for w in res.trace.windows(2) {
        if !(w[1].mahler < w[0].mahler) {
            return Ok((false, format!("rise: {} -> {}", w[0].mahler, w[1].mahler)));
        }
    }
    Ok((true, format!("{} strictly decreasing steps", res.trace.len())))
}

fn santalo_infimum_below() -> Result<(bool, String)> {
    let spec = spec1();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut even_gap = 0.0_f64;
    for f in closed_family_1d() {
        let m = mahler::mahler(&f, 1.0, &spec)?.value;
        let inf = santalo::mahler_inf(&f, 1.0, &spec)?;
        worst_excess = worst_excess.max((inf - m) / m);
        if f.describe().contains("l1") || f.describe().contains("quadratic") {
            even_gap = even_gap.max(rel(inf, m));
        }
    }
    Ok((
        worst_excess <= 1e-9 && even_gap < 1e-6,
        format!("max excess {worst_excess:.2e}, even gap {even_gap:.2e}"),
    ))
}

fn santalo_equivariance() -> Result<(bool, String)> {
    let spec = spec1();
    let f = FunctionHandle::functional_simplex(1)?;
    let a = 0.8;
    let s0 = santalo::santalo_point(&f, 1.0, &spec, 1e-9, 60)?;
    let s1 = santalo::santalo_point(&translate(&f, &[a])?, 1.0, &spec, 1e-9, 60)?;
    let drift = (s1.point[0] + a - s0.point[0]).abs();
    Ok((drift < 2e-8, worst("equivariance drift", drift)))
}

fn santalo_gaussian_upper_bound() -> Result<(bool, String)> {
    let spec = spec1();
    let cap = mahler_closed(ClosedFamily::Quadratic, 1, 1.0)?;
    let mut worst_ratio = 0.0_f64;
    for f in [
        FunctionHandle::functional_simplex(1)?,
        FunctionHandle::l1(1)?,
        translate(&FunctionHandle::quadratic(1)?, &[1.0])?,
    ] {
        let inf = santalo::mahler_inf(&f, 1.0, &spec)?;
        worst_ratio = worst_ratio.max(inf / cap);
    }
    Ok((worst_ratio <= 1.0 + 1e-6, worst("max inf / gaussian cap", worst_ratio)))
}

// ---------------------------------------------------------------------------
// flow.*

fn flow_volume_conserved() -> Result<(bool, String)> {
    let spec = spec1();
    let mut worst_drift = 0.0_f64;
    for (f, v0) in [
        (FunctionHandle::l1(1)?, 2.0),
        (translate(&FunctionHandle::quadratic(1)?, &[0.6])?, (2.0 * PI).sqrt()),
    ] {
        for t in [0.1, 1.0, 3.0] {
            let phi_t = flow::ou_evolve(&f, t, &spec)?;
            let v = integrate::log_volume(&phi_t, &spec)?.exp();
            worst_drift = worst_drift.max(rel(v, v0));
        }
    }
    Ok((worst_drift < 1e-6, worst("max volume drift", worst_drift)))
}

fn flow_gaussian_fixed_point() -> Result<(bool, String)> {
    let spec = spec1();
    let q = FunctionHandle::quadratic(1)?;
    let mut worst_dev = 0.0_f64;
    for t in [0.5, 2.0] {
        let phi_t = flow::ou_evolve(&q, t, &spec)?;
        for k in 0..=40 {
            let x = -4.0 + 0.2 * k as f64;
            if let Finite(v) = phi_t.eval(&[x]) {
                worst_dev = worst_dev.max((v - 0.5 * x * x).abs());
            }
        }
    }
    Ok((worst_dev < 1e-8, worst("sup deviation", worst_dev)))
}

fn flow_long_time_limit() -> Result<(bool, String)> {
    let spec = spec1();
    let f = FunctionHandle::functional_simplex(1)?;
    let phi_t = flow::ou_evolve(&f, 10.0, &spec)?;
    let shift = (std::f64::consts::E / (2.0 * PI).sqrt()).ln();
    let mut worst_dev = 0.0_f64;
    for k in 0..=40 {
        let x = -2.0 + 0.1 * k as f64;
        if let Finite(v) = phi_t.eval(&[x]) {
            worst_dev = worst_dev.max((v - (0.5 * x * x - shift)).abs());
        }
    }
    Ok((worst_dev < 1e-4, worst("sup gap to limit", worst_dev)))
}

fn flow_recentered_monotone() -> Result<(bool, String)> {
    let spec = spec1();
    let grid: Vec<f64> = (0..=6).map(|k| 0.25 * k as f64).collect();
    let f = FunctionHandle::functional_simplex(1)?;
    let diags = flow::monotonicity_experiment(&f, 1.0, &grid, &spec)?;
    let g0 = diags[0].recentered_mahler.unwrap_or(f64::NAN);
    let ok = flow::recentered_nondecreasing(&diags, 1e-6 * g0);
    let start_err = rel(g0, mahler_closed(ClosedFamily::FunctionalSimplex, 1, 1.0)?);
    Ok((
        ok && start_err < 1e-4,
        format!("g(0) rel err {start_err:.2e}, monotone: {ok}"),
    ))
}

fn flow_evolution_residual() -> Result<(bool, String)> {
    let spec = spec1();
    let mut worst_res = 0.0_f64;
    let shifted = translate(&FunctionHandle::quadratic(1)?, &[1.0])?;
    worst_res = worst_res.max(flow::legendre_evolution_residual(&shifted, 1.0, 0.2, &[0.3], &spec)?);
    let fs = FunctionHandle::functional_simplex(1)?;
    worst_res = worst_res.max(flow::legendre_evolution_residual(&fs, 1.0, 0.5, &[0.5], &spec)?);
    Ok((worst_res < 1e-3, worst("max residual", worst_res)))
}

fn flow_inequality_slacks() -> Result<(bool, String)> {
    let spec = spec1();
    let mut s = Samples::new(97);
    // equality case: every slack vanishes for the Gaussian
    let q = FunctionHandle::quadratic(1)?;
    let probes: Vec<Vec<f64>> = vec![vec![0.0], vec![0.5], vec![-0.8]];
    let eq = flow::inequality_suite(&q, 2.0, 0.7, &probes, &spec)?;
    let mut worst_eq = eq.brascamp_lieb_slack.abs();
    for pr in &eq.probes {
        worst_eq = worst_eq.max(pr.cramer_rao_slack.abs());
    }
    // strict case stays nonnegative
    let f = translate(&FunctionHandle::functional_simplex(1)?, &[0.4])?;
    let probes: Vec<Vec<f64>> = (0..6).map(|_| vec![0.6 * (2.0 * s.unit() - 1.0)]).collect();
    let rep = flow::inequality_suite(&f, 1.0, 0.3, &probes, &spec)?;
    let mut worst_neg = rep.brascamp_lieb_slack;
    for pr in &rep.probes {
        worst_neg = worst_neg.min(pr.cramer_rao_slack);
    }
    Ok((
        worst_eq < 1e-8 && worst_neg > -1e-6,
        format!("gaussian |slack| {worst_eq:.1e}, min slack {worst_neg:.1e}"),
    ))
}

fn flow_nonconvex_monotone() -> Result<(bool, String)> {
    let spec = spec1();
    let grid = GridSpec::uniform_1d(-12.0, 12.0, 481)?;
    let n = 481;
    let values: Vec<_> = (0..n)
        .map(|k| {
            let x = -12.0 + 24.0 * k as f64 / (n - 1) as f64;
            Finite(x.abs() + 0.3 * x.sin())
        })
        .collect();
    let f = FunctionHandle::grid_sampled(grid, values)?;
    let ts = vec![0.0, 0.5, 1.0, 2.0];
    let diags = flow::monotonicity_experiment(&f, 1.0, &ts, &spec)?;
    let g0 = diags[0].recentered_mahler.unwrap_or(f64::NAN);
    let ok = flow::recentered_nondecreasing(&diags, 1e-6 * g0);
    Ok((ok, format!("g spans [{g0:.6}, {:.6}]", diags.last().unwrap().recentered_mahler.unwrap_or(f64::NAN))))
}

// ---------------------------------------------------------------------------
// report.* / cli.*

fn report_deterministic() -> Result<(bool, String)> {
    let doc = || {
        report::Value::object([
            ("value", report::Value::Real(0.1 + 0.2)),
            ("points", report::Value::reals([1.0, f64::INFINITY])),
            ("name", report::Value::str("probe")),
        ])
    };
    let a = report::to_json(&doc());
    let b = report::to_json(&doc());
    let mut t = report::Table::new(["t", "V"]);
    t.push_row(vec![0.0, 1.0])?;
    let c1 = t.to_csv();
    let c2 = t.to_csv();
    let ok = a == b && c1 == c2 && c1.starts_with("t,V\n");
    Ok((ok, format!("{} json bytes, {} csv bytes", a.len(), c1.len())))
}

fn cli_grammar_round_trip() -> Result<(bool, String)> {
    // every family name and wrapper parses and evaluates
    let specs = [
        "quadratic:dim=2",
        "l1:dim=1",
        "cube:dim=2,hw=0.5",
        "ball:dim=2,r=1.5",
        "simplex:dim=2,centered=true",
        "funcsimplex:dim=1",
        "translate(a=1,-2;quadratic:dim=2)",
        "scale(l=2;l1:dim=1)",
        "tensor(l1:dim=1;quadratic:dim=1)",
    ];
    for s in specs {
        let f = parse_function(s)?;
        let x = vec![0.25; f.dim()];
        if let Finite(v) = f.eval(&x) {
            if !v.is_finite() {
                return Ok((false, format!("'{s}' evaluated to {v}")));
            }
        }
    }
    let bad = ["banana:dim=1", "quadratic:bogus=1", "translate(a=1)"];
    for s in bad {
        if parse_function(s).is_ok() {
            return Ok((false, format!("'{s}' should not parse")));
        }
    }
    Ok((true, format!("{} specs parsed, {} rejected", specs.len(), bad.len())))
}

/// The full registry, in reporting order.
pub fn all_checks() -> Vec<Check> {
    vec![
        Check { name: "functions.wrapper_composition_associative", run: functions_wrapper_composition },
        Check { name: "functions.eval_total_never_nan", run: functions_eval_total },
        Check { name: "functions.translate_roundtrip_exact", run: functions_translate_roundtrip },
        Check { name: "functions.affine_lower_bound_valid", run: functions_affine_lower_bound },
        Check { name: "integrate.node_doubling_stable", run: integrate_node_doubling },
        Check { name: "integrate.tensor_volume_product", run: integrate_tensor_volume },
        Check { name: "integrate.auto_radius_tail_bound", run: integrate_auto_radius },
        Check { name: "integrate.indicator_two_routes_agree", run: integrate_indicator_routes },
        Check { name: "integrate.offcenter_body_coverage", run: integrate_offcenter_body_coverage },
        Check { name: "specfun.bessel_beta_identity", run: specfun_beta_bessel },
        Check { name: "specfun.gaunt_ratio_in_half_one", run: specfun_gaunt_range },
        Check { name: "specfun.gaunt_bracket_ball_integrals", run: specfun_gaunt_bracket },
        Check { name: "specfun.radial_moments_match_quadrature", run: specfun_radial_moments },
        Check { name: "specfun.ball_mahler_rate_decreasing", run: specfun_ball_rate_trend },
        Check { name: "transform.monotone_in_p", run: transform_monotone_in_p },
        Check { name: "transform.translation_rule", run: transform_translation_rule },
        Check { name: "transform.linear_map_rule", run: transform_linear_rule },
        Check { name: "transform.domination_rule", run: transform_domination_rule },
        Check { name: "transform.tensor_splits", run: transform_tensor_rule },
        Check { name: "transform.midpoint_convexity", run: transform_midpoint_convexity },
        Check { name: "transform.p_interpolation_bound", run: transform_p_interpolation },
        Check { name: "transform.infconv_inequality", run: transform_infconv_inequality },
        Check { name: "transform.reverse_inequality", run: transform_reverse_inequality },
        Check { name: "transform.large_p_limit", run: transform_large_p_limit },
        Check { name: "transform.hessian_covariance_identity", run: transform_hessian_covariance },
        Check { name: "transform.partial_fraction_identity", run: transform_partial_fractions },
        Check { name: "mahler.tensor_product", run: mahler_tensor_product },
        Check { name: "mahler.antitone_in_p", run: mahler_antitone_in_p },
        Check { name: "mahler.reverse_bound_centered", run: mahler_reverse_bound },
        Check { name: "mahler.large_p_limit", run: mahler_large_p_limit },
        Check { name: "mahler.body_affine_invariance", run: mahler_body_affine_invariance },
        Check { name: "santalo.critical_point_residual", run: santalo_critical_residual },
        Check { name: "santalo.descent_strictly_monotone", run: santalo_descent_monotone },
        Check { name: "santalo.infimum_below_value", run: santalo_infimum_below },
        Check { name: "santalo.translation_equivariance", run: santalo_equivariance },
        Check { name: "santalo.gaussian_upper_bound", run: santalo_gaussian_upper_bound },
        Check { name: "flow.volume_conserved", run: flow_volume_conserved },
        Check { name: "flow.gaussian_fixed_point", run: flow_gaussian_fixed_point },
        Check { name: "flow.long_time_limit", run: flow_long_time_limit },
        Check { name: "flow.recentered_mahler_monotone", run: flow_recentered_monotone },
        Check { name: "flow.evolution_identity_residual", run: flow_evolution_residual },
        Check { name: "flow.inequality_slacks_nonnegative", run: flow_inequality_slacks },
        Check { name: "flow.nonconvex_start_monotone", run: flow_nonconvex_monotone },
        Check { name: "report.deterministic_bytes", run: report_deterministic },
        Check { name: "cli.function_grammar_round_trip", run: cli_grammar_round_trip },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn registry_names_are_unique_and_grouped() {
        let checks = all_checks();
        let names: HashSet<_> = checks.iter().map(|c| c.name).collect();
        assert_eq!(names.len(), checks.len(), "duplicate check names");
        for prefix in [
            "functions.", "integrate.", "specfun.", "transform.", "mahler.", "santalo.",
            "flow.", "report.", "cli.",
        ] {
            assert!(
                checks.iter().any(|c| c.name.starts_with(prefix)),
                "no checks for {prefix}"
            );
        }
    }

    #[test]
    fn filtered_run_executes_and_passes() {
        let outcomes = run_suite("report.");
        assert_eq!(outcomes.len(), 1);
        assert!(all_passed(&outcomes), "{}", render_table(&outcomes));
        let doc = to_value(&outcomes);
        let json = report::to_json(&doc);
        assert!(json.contains("report.deterministic_bytes"));
    }

    #[test]
    fn fast_structural_checks_pass() {
        for filter in [
            "functions.",
            "specfun.radial_moments",
            "transform.partial_fraction",
            "cli.function_grammar",
        ] {
            let outcomes = run_suite(filter);
            assert!(!outcomes.is_empty(), "{filter} matched nothing");
            assert!(all_passed(&outcomes), "{}", render_table(&outcomes));
        }
    }
}
