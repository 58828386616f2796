//! Command-line interface.
//!
//! Subcommands map one-to-one onto the library modules:
//!
//! ```text
//! transform         evaluate f^{*,p} at points, optionally dump a grid table
//! volume            ∫ e^{-f}
//! mahler            M_p(f) = V(f) · V(f^{*,p})
//! santalo           translation minimizer of M_p with descent trace
//! flow              heat-flow diagnostics along a time grid
//! ball-asymptotics  Mahler integrals of Euclidean balls across dimensions
//! scan              bound checks over a family file of function specs
//! verify            run the self-verification registry
//! ```
//!
//! Configuration precedence is command line > `LPS_*` environment
//! variables > `--config` key=value file > built-in defaults. Output
//! goes to `--output` (default stdout) as deterministic JSON or CSV
//! selected by `--out`.

use crate::extreal::ExtReal;
use crate::functions::{grid_to_csv, parse_function, FunctionHandle, GridSpec};
use crate::integrate::{self, QuadratureSpec, Scheme};
use crate::report::{self, Table, Value};
use crate::{flow, mahler, santalo, specfun, transform, verify, Error, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "lps",
    version,
    about = "Numerical laboratory for L^p polarity: Legendre-type transforms, \
             Mahler integrals, Santaló points, and heat-flow diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// Key=value file supplying defaults for any long flag
    #[arg(long, global = true, env = "LPS_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker thread count (default: all logical cores)
    #[arg(long, global = true, env = "LPS_THREADS")]
    threads: Option<usize>,

    /// Output destination; "-" writes to stdout
    #[arg(long, global = true, env = "LPS_OUTPUT", default_value = "-")]
    output: PathBuf,

    /// Serialization format (verify defaults to a plain text table)
    #[arg(long = "out", global = true, env = "LPS_OUT", value_enum)]
    out: Option<Format>,

    /// Truncation radius override for quadrature
    #[arg(long, global = true, env = "LPS_RADIUS")]
    radius: Option<f64>,

    /// Target relative tolerance for quadrature
    #[arg(long = "rel-tol", global = true, env = "LPS_REL_TOL")]
    rel_tol: Option<f64>,

    /// Nodes per axis (tensor rules) or total budget (sampling rules)
    #[arg(long, global = true, env = "LPS_NODES")]
    nodes: Option<usize>,

    /// Quadrature scheme; "auto" picks by dimension
    #[arg(long, global = true, env = "LPS_SCHEME", value_enum)]
    scheme: Option<SchemeArg>,

    /// Seed for the declared-seed sampling rules
    #[arg(long, global = true, env = "LPS_SEED")]
    seed: Option<u64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SchemeArg {
    Auto,
    Tgl,
    Hermite,
    Adaptive,
    Qmc,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the L^p transform of a function at chosen points
    Transform {
        /// Function spec, e.g. "quadratic:dim=2" or "translate(a=1;l1:dim=1)"
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Evaluation point "y1,y2,..."; repeat for several points
        #[arg(long, value_name = "Y1,Y2,...")]
        at: Vec<String>,
        /// Also write the transform sampled on a grid, as a grid CSV
        /// loadable back through "grid@path"
        #[arg(long = "grid-out", value_name = "PATH")]
        grid_out: Option<PathBuf>,
    },
    /// Integrate e^{-f}
    Volume {
        #[arg(long)]
        function: String,
    },
    /// Mahler integral M_p(f) = V(f) · V(f^{*,p})
    Mahler {
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
    },
    /// Translation minimizer of M_p and its descent trace
    Santalo {
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long = "max-iter", default_value_t = 60)]
        max_iter: usize,
    },
    /// Heat-flow diagnostics along a time grid (one-dimensional inputs)
    Flow {
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Inclusive time grid "start:step:end"
        #[arg(long = "t-grid", default_value = "0:0.1:3")]
        t_grid: String,
        /// Dual points "y1,y2,..." probed for the transform evolution
        /// identity; adds one residual column per probe
        #[arg(long)]
        probes: Option<String>,
    },
    /// Mahler integrals of Euclidean balls across dimensions
    BallAsymptotics {
        #[arg(long = "n-max", default_value_t = 15)]
        n_max: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
    },
    /// Check conjectured bounds over a family file (one spec per line)
    Scan {
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
    },
    /// Run the self-verification registry
    Verify {
        /// "all" or a name filter such as "transform."
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

/// Parse the command line and run it; returns the process exit code
/// (0 success, 1 domain error, 2 usage error).
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match apply_config_defaults(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.global.threads {
        // a second init in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration file support.

/// Inject `--key value` tokens for config entries whose flag is absent
/// from both the command line and the `LPS_*` environment.
fn apply_config_defaults(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let path = match config_path(&argv) {
        Some(p) => p,
        None => return Ok(argv),
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!(
                "config {}:{}: expected key=value, got '{line}'",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            continue;
        }
        let flag = format!("--{key}");
        let on_cli = argv.iter().any(|a| {
            a.to_string_lossy() == flag || a.to_string_lossy().starts_with(&format!("{flag}="))
        });
        let env_name = format!("LPS_{}", key.replace('-', "_").to_uppercase());
        if !on_cli && std::env::var_os(env_name).is_none() {
            argv.push(flag.into());
            argv.push(value.into());
        }
    }
    Ok(argv)
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    for (i, a) in argv.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return argv.get(i + 1).map(PathBuf::from);
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(rest));
        }
    }
    std::env::var_os("LPS_CONFIG").map(PathBuf::from)
}

// ---------------------------------------------------------------------------
// Dispatch.

fn quadrature_spec(g: &GlobalArgs, dim: usize) -> Result<QuadratureSpec> {
    let mut spec = QuadratureSpec::default_for_dim(dim);
    if let Some(s) = g.scheme {
        spec.scheme = match s {
            SchemeArg::Auto => spec.scheme,
            SchemeArg::Tgl => Scheme::TensorGaussLegendre { nodes_per_axis: 128 },
            SchemeArg::Hermite => Scheme::GaussHermite { nodes_per_axis: 64 },
            SchemeArg::Adaptive => Scheme::Adaptive1D { max_subdivisions: 512 },
            SchemeArg::Qmc => {
                Scheme::QuasiMonteCarlo { sample_count: 1 << 18, proposal_scale: 1.0 }
            }
        };
    }
    if let Some(m) = g.nodes {
        spec.scheme = match spec.scheme {
            Scheme::TensorGaussLegendre { .. } => {
                Scheme::TensorGaussLegendre { nodes_per_axis: m }
            }
            Scheme::GaussHermite { .. } => Scheme::GaussHermite { nodes_per_axis: m },
            Scheme::Adaptive1D { .. } => Scheme::Adaptive1D { max_subdivisions: m },
            Scheme::QuasiMonteCarlo { proposal_scale, .. } => {
                Scheme::QuasiMonteCarlo { sample_count: m, proposal_scale }
            }
        };
    }
    if let Some(r) = g.radius {
        spec = spec.with_radius(r);
    }
    if let Some(t) = g.rel_tol {
        spec = spec.with_rel_tol(t);
    }
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

fn format_for(cli: &Cli) -> Format {
    cli.global.out.unwrap_or(match cli.command {
        Command::Verify { .. } => Format::Text,
        _ => Format::Json,
    })
}

fn emit(path: &Path, fmt: Format, doc: Value, table: Table) -> Result<()> {
    let rendered = match fmt {
        Format::Json => report::to_json(&doc),
        Format::Csv => table.to_csv(),
        Format::Text => {
            return Err(Error::InvalidParameter(
                "text output is only available for the verify subcommand".into(),
            ))
        }
    };
    report::write_output(path, &rendered)
}

fn parse_point(s: &str, dim: usize) -> Result<Vec<f64>> {
    let y: Vec<f64> = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad coordinate '{v}' in point '{s}'")))
        })
        .collect::<Result<_>>()?;
    if y.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: y.len() });
    }
    Ok(y)
}

fn parse_time_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, step, end] = parts.as_slice() else {
        return Err(Error::Parse(format!("time grid must be start:step:end, got '{s}'")));
    };
    let (a, h, b) = (
        start.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad start '{start}'")))?,
        step.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad step '{step}'")))?,
        end.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad end '{end}'")))?,
    );
    if !(h > 0.0) || !(b >= a) || a < 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!("degenerate time grid '{s}'")));
    }
    let count = ((b - a) / h + 1e-9).floor() as usize + 1;
    if count > 10_000 {
        return Err(Error::InvalidParameter(format!("time grid has {count} points (max 10000)")));
    }
    Ok((0..count).map(|k| a + h * k as f64).collect())
}

fn ext_to_f64(v: ExtReal) -> f64 {
    match v {
        ExtReal::Finite(x) => x,
        ExtReal::PosInf => f64::INFINITY,
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let fmt = format_for(cli);
    let out = cli.global.output.as_path();
    match &cli.command {
        Command::Transform { function, p, at, grid_out } => {
            let f = parse_function(function)?;
            let spec = quadrature_spec(&cli.global, f.dim())?;
            let t = transform::lp_transform(&f, *p, &spec)?;
            if at.is_empty() && grid_out.is_none() {
                return Err(Error::InvalidParameter(
                    "transform needs --at points and/or --grid-out".into(),
                ));
            }
            let mut points = Vec::new();
            let mut table = Table::new(
                (1..=f.dim())
                    .map(|i| format!("y_{i}"))
                    .chain(["value".to_string()]),
            );
            for s in at {
                let y = parse_point(s, f.dim())?;
                let value = ext_to_f64(t.eval(&y)?);
                let mut fields = vec![
                    ("y", Value::reals(y.iter().copied())),
                    ("value", Value::Real(value)),
                ];
                if f.has_smooth_gradient() && value.is_finite() {
                    let g = transform::transform_gradient(&f, *p, &y, &spec)?;
                    fields.push(("gradient", Value::reals(g.iter().copied())));
                }
                points.push(Value::object(fields));
                let mut row = y;
                row.push(value);
                table.push_row(row)?;
            }
            if let Some(path) = grid_out {
                write_transform_grid(&t, path)?;
            }
            let doc = Value::object([
                ("function", Value::str(f.describe())),
                ("p", Value::Real(*p)),
                ("points", Value::Array(points)),
            ]);
            emit(out, fmt, doc, table)?;
        }
        Command::Volume { function } => {
            let f = parse_function(function)?;
            let spec = quadrature_spec(&cli.global, f.dim())?;
            let log_v = integrate::log_volume(&f, &spec)?;
            let doc = Value::object([
                ("function", Value::str(f.describe())),
                ("value", Value::Real(log_v.exp())),
                ("log_value", Value::Real(log_v)),
            ]);
            let mut table = Table::new(["value", "log_value"]);
            table.push_row(vec![log_v.exp(), log_v])?;
            emit(out, fmt, doc, table)?;
        }
        Command::Mahler { function, p } => {
            let f = parse_function(function)?;
            let spec = quadrature_spec(&cli.global, f.dim())?;
            let rep = mahler::mahler(&f, *p, &spec)?;
            let method = match rep.method {
                mahler::Method::ClosedForm => "closed-form",
                mahler::Method::Quadrature => "quadrature",
            };
            let doc = Value::object([
                ("function", Value::str(f.describe())),
                ("p", Value::Real(*p)),
                ("value", Value::Real(rep.value)),
                ("volume_primal", Value::Real(rep.components.0)),
                ("volume_dual", Value::Real(rep.components.1)),
                ("method", Value::str(method)),
                ("tolerance", Value::Real(rep.tolerance)),
            ]);
            let mut table = Table::new(["p", "value", "volume_primal", "volume_dual"]);
            table.push_row(vec![*p, rep.value, rep.components.0, rep.components.1])?;
            emit(out, fmt, doc, table)?;
        }
        Command::Santalo { function, p, tol, max_iter } => {
            let f = parse_function(function)?;
            let spec = quadrature_spec(&cli.global, f.dim())?;
            let res = santalo::santalo_point(&f, *p, &spec, *tol, *max_iter)?;
            let trace = Value::array(res.trace.iter().map(|s| {
                Value::object([
                    ("x", Value::reals(s.x.iter().copied())),
                    ("mahler", Value::Real(s.mahler)),
                    ("gradient_norm", Value::Real(s.gradient_norm)),
                ])
            }));
            let doc = Value::object([
                ("function", Value::str(f.describe())),
                ("p", Value::Real(*p)),
                ("point", Value::reals(res.point.iter().copied())),
                ("value", Value::Real(res.mahler_at_point)),
                ("residual", Value::Real(res.residual)),
                ("iterations", Value::Int(res.iterations as i64)),
                ("converged", Value::Bool(res.converged)),
                ("trace", trace),
            ]);
            let mut table = Table::new(
                ["step".to_string()]
                    .into_iter()
                    .chain((1..=f.dim()).map(|i| format!("x_{i}")))
                    .chain(["mahler".to_string(), "gradient_norm".to_string()]),
            );
            for (k, s) in res.trace.iter().enumerate() {
                let mut row = vec![k as f64];
                row.extend(s.x.iter().copied());
                row.push(s.mahler);
                row.push(s.gradient_norm);
                table.push_row(row)?;
            }
            emit(out, fmt, doc, table)?;
        }
        Command::Flow { function, p, t_grid, probes } => {
            let f = parse_function(function)?;
            let spec = quadrature_spec(&cli.global, f.dim())?;
            let ts = parse_time_grid(t_grid)?;
            let probe_ys: Vec<f64> = match probes {
                Some(s) => s
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Parse(format!("bad probe '{v}'")))
                    })
                    .collect::<Result<_>>()?,
                None => Vec::new(),
            };
            let diags = flow::monotonicity_experiment(&f, *p, &ts, &spec)?;
            let mut columns = vec![
                "t".to_string(),
                "V".to_string(),
                "Mp".to_string(),
                "sp".to_string(),
                "b_norm".to_string(),
                "dMdt_fd".to_string(),
                "dMdt_rhs".to_string(),
                "mpbound_slack".to_string(),
                "g".to_string(),
            ];
            for k in 1..=probe_ys.len() {
                columns.push(format!("residual_{k}"));
            }
            let mut table = Table::new(columns);
            for d in &diags {
                let sp = d
                    .santalo_point
                    .as_ref()
                    .map(|x| x[0])
                    .unwrap_or(f64::NAN);
                let b_norm = d.dual_barycenter.iter().map(|v| v * v).sum::<f64>().sqrt();
                let g = d.recentered_mahler.unwrap_or(f64::NAN);
                let mut row = vec![
                    d.t, d.volume, d.mahler, sp, b_norm, d.dmdt_fd, d.dmdt_rhs,
                    d.mpbound_slack, g,
                ];
                for &y in &probe_ys {
                    let r = if d.t >= 5e-3 {
                        flow::legendre_evolution_residual(&f, *p, d.t, &[y], &spec)?
                    } else {
                        f64::NAN
                    };
                    row.push(r);
                }
                table.push_row(row)?;
            }
            let mut fields = vec![
                ("function", Value::str(f.describe())),
                ("p", Value::Real(*p)),
            ];
            if !probe_ys.is_empty() {
                fields.push(("probes", Value::reals(probe_ys.iter().copied())));
            }
            fields.push(("table", table.to_value()));
            emit(out, fmt, Value::object(fields), table)?;
        }
        Command::BallAsymptotics { n_max, p } => {
            if *n_max == 0 {
                return Err(Error::InvalidParameter("--n-max must be >= 1".into()));
            }
            let target = (4.0 * std::f64::consts::PI).ln();
            let mut rows = Vec::new();
            let mut table = Table::new(["n", "log_mahler", "rate", "rate_gap"]);
            for n in 1..=*n_max {
                let log_m = specfun::log_mahler_ball(n, *p)?;
                let rate = log_m / n as f64;
                let gap = (rate - target).abs();
                rows.push(Value::object([
                    ("n", Value::Int(n as i64)),
                    ("log_mahler", Value::Real(log_m)),
                    ("rate", Value::Real(rate)),
                    ("rate_gap", Value::Real(gap)),
                ]));
                table.push_row(vec![n as f64, log_m, rate, gap])?;
            }
            let doc = Value::object([
                ("p", Value::Real(*p)),
                ("rows", Value::Array(rows)),
            ]);
            emit(out, fmt, doc, table)?;
        }
        Command::Scan { family, p } => {
            let text = std::fs::read_to_string(family).map_err(|e| {
                Error::Parse(format!("cannot read family file {}: {e}", family.display()))
            })?;
            let mut members = Vec::new();
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                members.push(parse_function(line)?);
            }
            if members.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "family file {} lists no functions",
                    family.display()
                )));
            }
            let dims: Vec<usize> = members.iter().map(FunctionHandle::dim).collect();
            let spec = quadrature_spec(&cli.global, dims[0])?;
            let records = mahler::conjecture_scan(&members, *p, &spec)?;
            let rows = Value::array(records.iter().map(|r| {
                Value::object([
                    ("description", Value::str(r.description.clone())),
                    ("mahler", Value::Real(r.mahler)),
                    ("mahler_inf", Value::Real(r.mahler_inf)),
                    ("lower_bound", Value::Real(r.lower_bound)),
                    ("lower_margin", Value::Real(r.lower_margin)),
                    ("upper_bound", Value::Real(r.upper_bound)),
                    ("upper_margin", Value::Real(r.upper_margin)),
                    ("flagged", Value::Bool(r.flagged)),
                ])
            }));
            let mut table = Table::new([
                "index",
                "mahler",
                "mahler_inf",
                "lower_bound",
                "lower_margin",
                "upper_bound",
                "upper_margin",
                "flagged",
            ]);
            for (k, r) in records.iter().enumerate() {
                table.push_row(vec![
                    k as f64,
                    r.mahler,
                    r.mahler_inf,
                    r.lower_bound,
                    r.lower_margin,
                    r.upper_bound,
                    r.upper_margin,
                    if r.flagged { 1.0 } else { 0.0 },
                ])?;
            }
            let doc = Value::object([("p", Value::Real(*p)), ("records", rows)]);
            emit(out, fmt, doc, table)?;
        }
        Command::Verify { suite } => {
            let outcomes = verify::run_suite(suite);
            let rendered = match fmt {
                Format::Json => report::to_json(&verify::to_value(&outcomes)),
                Format::Text => verify::render_table(&outcomes),
                Format::Csv => {
                    return Err(Error::InvalidParameter(
                        "verify reports names and details; use --out json or text".into(),
                    ))
                }
            };
            report::write_output(out, &rendered)?;
            return Ok(if verify::all_passed(&outcomes) { 0 } else { 1 });
        }
    }
    Ok(0)
}

/// Sample the transform on a centered uniform grid and write it in the
/// grid CSV format accepted by `grid@path` function specs.
fn write_transform_grid(t: &transform::TransformHandle, path: &Path) -> Result<()> {
    let n = t.dim();
    let radius = t.finite_radius_hint().map(|r| r.min(12.0)).unwrap_or(8.0);
    let nodes = match n {
        1 => 201,
        2 => 61,
        3 => 21,
        _ => {
            return Err(Error::Unsupported(
                "grid output supports dimensions 1-3".into(),
            ))
        }
    };
    let mut axes = GridSpec::uniform_1d(-radius, radius, nodes)?;
    for _ in 1..n {
        let extra = GridSpec::uniform_1d(-radius, radius, nodes)?;
        let mut all = axes.axes().to_vec();
        all.extend(extra.axes().iter().cloned());
        axes = GridSpec::new(all)?;
    }
    let mut values = Vec::with_capacity(axes.node_count());
    for i in 0..axes.node_count() {
        let y = axes.node_coords(i);
        values.push(t.eval(&y)?);
    }
    let mut buf = Vec::new();
    grid_to_csv(&mut buf, &axes, &values)?;
    let text = String::from_utf8(buf)
        .map_err(|_| Error::Parse("grid serialization produced invalid UTF-8".into()))?;
    report::write_output(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> i32 {
        parse_and_dispatch(args.iter().copied())
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(&["lps", "no-such-command"]), 2);
        assert_eq!(run(&["lps", "mahler", "--function"]), 2);
        assert_eq!(run(&["lps"]), 2);
    }

    #[test]
    fn domain_errors_exit_one() {
        let tmp = std::env::temp_dir().join("lps-cli-domain.json");
        let out = tmp.to_string_lossy().into_owned();
        assert_eq!(
            run(&["lps", "mahler", "--function", "banana:dim=1", "--output", &out]),
            1
        );
        assert_eq!(
            run(&["lps", "transform", "--function", "quadratic:dim=1", "--output", &out]),
            1
        );
    }

    #[test]
    fn mahler_subcommand_reports_value() {
        let tmp = std::env::temp_dir().join("lps-cli-mahler.json");
        let out = tmp.to_string_lossy().into_owned();
        assert_eq!(
            run(&["lps", "mahler", "--function", "quadratic:dim=1", "--p", "1", "--output", &out]),
            0
        );
        let text = std::fs::read_to_string(&tmp).unwrap();
        assert!(text.contains("\"value\""));
        // reals are rendered in 17-significant-digit scientific notation
        assert!(text.contains("1.2566370614"), "{text}");
    }

    #[test]
    fn config_file_supplies_defaults_but_cli_wins() {
        let dir = std::env::temp_dir();
        let cfg = dir.join("lps-cli-test-config.txt");
        std::fs::write(&cfg, "p=2\nnodes=96\n# comment\n").unwrap();
        let cfg_s = cfg.to_string_lossy().into_owned();

        let out1 = dir.join("lps-cli-cfg1.json");
        let out1_s = out1.to_string_lossy().into_owned();
        assert_eq!(
            run(&[
                "lps", "mahler", "--function", "quadratic:dim=1", "--config", &cfg_s,
                "--output", &out1_s,
            ]),
            0
        );
        let text = std::fs::read_to_string(&out1).unwrap();
        assert!(text.contains("\"p\": 2.0"), "config default not applied: {text}");

        let out2 = dir.join("lps-cli-cfg2.json");
        let out2_s = out2.to_string_lossy().into_owned();
        assert_eq!(
            run(&[
                "lps", "mahler", "--function", "quadratic:dim=1", "--config", &cfg_s, "--p",
                "1", "--output", &out2_s,
            ]),
            0
        );
        let text = std::fs::read_to_string(&out2).unwrap();
        assert!(text.contains("\"p\": 1.0"), "cli flag should beat config: {text}");
    }

    #[test]
    fn time_grid_parses_inclusively() {
        let ts = parse_time_grid("0:0.1:3").unwrap();
        assert_eq!(ts.len(), 31);
        assert!((ts[30] - 3.0).abs() < 1e-12);
        assert!(parse_time_grid("1:0:2").is_err());
        assert!(parse_time_grid("0:0.1").is_err());
    }
}
