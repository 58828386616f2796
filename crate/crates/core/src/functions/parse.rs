//! Mini-grammar for function specifications and grid CSV round-tripping.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr     := base | wrapper
//! base     := name [":" key "=" val ["," key "=" val]*]  |  "grid@" path
//! wrapper  := "translate(" args ")" | "scale(" args ")" | "tensor(" args ")"
//! args     := item [";" item]*          (items split at top-level ';')
//! item     := key "=" val ["," val]*    (vector values comma-separated)
//!           | expr                      (operand functions)
//! ```
//!
//! Examples: `quadratic:dim=2`, `cube:dim=1,hw=0.5`,
//! `translate(a=1,-2;quadratic:dim=2)`, `scale(l=2;l1:dim=1)`,
//! `tensor(l1:dim=1;quadratic:dim=1)`, `grid@phi.csv`.
//!
//! Grid CSV: a header row `dim,lo_1,hi_1,n_1,...` followed by the node
//! values in row-major order (last axis fastest), with `inf` denoting
//! +∞. Value separators may be commas, whitespace, or newlines.

use super::{
    scale, tensor, translate, FunctionHandle, GridAxis, GridSpec,
};
use crate::extreal::{ExtReal, Finite, PosInf};
use crate::{Error, Result};
use std::io::{BufRead, Write};
use std::path::Path;

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

/// Split `s` at top-level occurrences of `sep` (parentheses nest).
fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn parse_f64(tok: &str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(format!("expected a number, got '{tok}'")))
}

fn parse_vector(tok: &str) -> Result<Vec<f64>> {
    tok.split(',').map(parse_f64).collect()
}

fn parse_usize(tok: &str) -> Result<usize> {
    tok.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(format!("expected an integer, got '{tok}'")))
}

fn parse_bool(tok: &str) -> Result<bool> {
    match tok.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(parse_err(format!("expected a boolean, got '{other}'"))),
    }
}

struct KeyVals<'a> {
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> KeyVals<'a> {
    fn parse(s: &'a str) -> Result<KeyVals<'a>> {
        let mut pairs = Vec::new();
        if !s.trim().is_empty() {
            for piece in split_top_level(s, ',') {
                let (k, v) = piece
                    .split_once('=')
                    .ok_or_else(|| parse_err(format!("expected key=value, got '{piece}'")))?;
                pairs.push((k.trim(), v.trim()));
            }
        }
        Ok(KeyVals { pairs })
    }

    fn get(&self, keys: &[&str]) -> Option<&'a str> {
        self.pairs
            .iter()
            .find(|(k, _)| keys.contains(k))
            .map(|(_, v)| *v)
    }

    fn ensure_known(&self, known: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !known.contains(k) {
                return Err(parse_err(format!("unknown key '{k}'")));
            }
        }
        Ok(())
    }
}

/// Parse a function specification string into a handle.
pub fn parse_function(spec: &str) -> Result<FunctionHandle> {
    let s = spec.trim();
    if s.is_empty() {
        return Err(parse_err("empty function specification"));
    }

    for wrapper in ["translate", "scale", "tensor"] {
        if let Some(rest) = s.strip_prefix(wrapper) {
            let rest = rest.trim_start();
            if let Some(body) = rest.strip_prefix('(') {
                let body = body
                    .strip_suffix(')')
                    .ok_or_else(|| parse_err(format!("unbalanced parentheses in '{s}'")))?;
                return parse_wrapper(wrapper, body);
            }
        }
    }

    if let Some(path) = s.strip_prefix("grid@") {
        let (grid, values) = grid_from_csv_path(Path::new(path.trim()))?;
        return FunctionHandle::grid_sampled(grid, values);
    }

    let (name, args) = match s.split_once(':') {
        Some((n, a)) => (n.trim(), a),
        None => (s, ""),
    };
    let kv = KeyVals::parse(args)?;
    let dim = match kv.get(&["dim", "n"]) {
        Some(v) => parse_usize(v)?,
        None => 1,
    };
    match name {
        "quadratic" => {
            kv.ensure_known(&["dim", "n"])?;
            FunctionHandle::quadratic(dim)
        }
        "l1" => {
            kv.ensure_known(&["dim", "n"])?;
            FunctionHandle::l1(dim)
        }
        "funcsimplex" => {
            kv.ensure_known(&["dim", "n"])?;
            FunctionHandle::functional_simplex(dim)
        }
        "cube" => {
            kv.ensure_known(&["dim", "n", "hw", "half_width"])?;
            let hw = match kv.get(&["hw", "half_width"]) {
                Some(v) => parse_f64(v)?,
                None => 1.0,
            };
            FunctionHandle::cube(dim, hw)
        }
        "ball" => {
            kv.ensure_known(&["dim", "n", "r", "radius"])?;
            let r = match kv.get(&["r", "radius"]) {
                Some(v) => parse_f64(v)?,
                None => 1.0,
            };
            FunctionHandle::ball(dim, r)
        }
        "simplex" => {
            kv.ensure_known(&["dim", "n", "centered"])?;
            let centered = match kv.get(&["centered"]) {
                Some(v) => parse_bool(v)?,
                None => false,
            };
            FunctionHandle::simplex(dim, centered)
        }
        other => Err(parse_err(format!(
            "unknown function '{other}'; expected one of quadratic, l1, cube, \
             ball, simplex, funcsimplex, grid@<path>, translate(..), scale(..), tensor(..)"
        ))),
    }
}

fn parse_wrapper(name: &str, body: &str) -> Result<FunctionHandle> {
    let items = split_top_level(body, ';');
    let mut params: Vec<(&str, &str)> = Vec::new();
    let mut operands: Vec<FunctionHandle> = Vec::new();
    for item in items {
        let t = item.trim();
        if t.is_empty() {
            continue;
        }
        // `key=value` with no '(' or ':' before '=' is a parameter;
        // everything else is an operand expression.
        let is_param = t
            .split_once('=')
            .map(|(k, _)| !k.contains('(') && !k.contains(':'))
            .unwrap_or(false);
        if is_param {
            let (k, v) = t.split_once('=').unwrap();
            params.push((k.trim(), v.trim()));
        } else {
            operands.push(parse_function(t)?);
        }
    }
    let get = |keys: &[&str]| {
        params
            .iter()
            .find(|(k, _)| keys.contains(k))
            .map(|(_, v)| *v)
    };
    match name {
        "translate" => {
            let a = parse_vector(
                get(&["a", "by"]).ok_or_else(|| parse_err("translate needs a=..."))?,
            )?;
            let [f] = operands.as_slice() else {
                return Err(parse_err("translate takes exactly one operand function"));
            };
            translate(f, &a)
        }
        "scale" => {
            let l = parse_f64(
                get(&["l", "lambda"]).ok_or_else(|| parse_err("scale needs l=..."))?,
            )?;
            let [f] = operands.as_slice() else {
                return Err(parse_err("scale takes exactly one operand function"));
            };
            scale(l, f)
        }
        "tensor" => {
            if operands.len() < 2 {
                return Err(parse_err("tensor takes at least two operand functions"));
            }
            let mut acc = operands[0].clone();
            for g in &operands[1..] {
                acc = tensor(&acc, g)?;
            }
            Ok(acc)
        }
        _ => unreachable!(),
    }
}

/// Read a grid CSV from a path.
pub fn grid_from_csv_path(path: &Path) -> Result<(GridSpec, Vec<ExtReal>)> {
    let file = std::fs::File::open(path)?;
    grid_from_csv(std::io::BufReader::new(file))
}

/// Read a grid CSV (`dim,lo_1,hi_1,n_1,...` header, then row-major
/// values with `inf` for +∞).
pub fn grid_from_csv(reader: impl BufRead) -> Result<(GridSpec, Vec<ExtReal>)> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                let t = line.trim();
                if !t.is_empty() && !t.starts_with('#') {
                    break t.to_string();
                }
            }
            None => return Err(parse_err("grid CSV is empty")),
        }
    };
    let toks: Vec<&str> = header
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    if toks.is_empty() {
        return Err(parse_err("grid CSV header is empty"));
    }
    let dim = parse_usize(toks[0])?;
    if toks.len() != 1 + 3 * dim {
        return Err(parse_err(format!(
            "grid CSV header for dim={dim} needs {} fields, got {}",
            1 + 3 * dim,
            toks.len()
        )));
    }
    let mut axes = Vec::with_capacity(dim);
    for k in 0..dim {
        axes.push(GridAxis {
            lo: parse_f64(toks[1 + 3 * k])?,
            hi: parse_f64(toks[2 + 3 * k])?,
            nodes: parse_usize(toks[3 + 3 * k])?,
        });
    }
    let grid = GridSpec::new(axes)?;
    let mut values = Vec::with_capacity(grid.node_count());
    for line in lines {
        let line = line?;
        for tok in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            if tok.starts_with('#') {
                break;
            }
            if tok.eq_ignore_ascii_case("inf") {
                values.push(PosInf);
            } else {
                values.push(Finite(parse_f64(tok)?));
            }
        }
    }
    if values.len() != grid.node_count() {
        return Err(parse_err(format!(
            "grid CSV has {} values but the header promises {}",
            values.len(),
            grid.node_count()
        )));
    }
    Ok((grid, values))
}

/// Write a grid CSV in the format `grid_from_csv` reads.
pub fn grid_to_csv(
    mut w: impl Write,
    grid: &GridSpec,
    values: &[ExtReal],
) -> Result<()> {
    let mut header = format!("{}", grid.dim());
    for ax in grid.axes() {
        header.push_str(&format!(",{:.17e},{:.17e},{}", ax.lo, ax.hi, ax.nodes));
    }
    writeln!(w, "{header}")?;
    // One line per run of the last axis for readability.
    let row_len = grid.axes().last().map(|a| a.nodes).unwrap_or(1);
    for chunk in values.chunks(row_len) {
        let row: Vec<String> = chunk
            .iter()
            .map(|v| match v {
                Finite(x) => format!("{x:.17e}"),
                PosInf => "inf".to_string(),
            })
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_base_functions() {
        let q = parse_function("quadratic:dim=2").unwrap();
        assert_eq!(q.dim(), 2);
        assert_eq!(q.eval(&[1.0, 1.0]), Finite(1.0));

        let c = parse_function("cube:dim=1,hw=0.5").unwrap();
        assert_eq!(c.eval(&[0.6]), PosInf);

        let b = parse_function("ball:dim=2,r=2").unwrap();
        assert_eq!(b.eval(&[1.0, 1.0]), Finite(0.0));

        let s = parse_function("simplex:dim=2,centered=true").unwrap();
        assert_eq!(s.eval(&[0.0, 0.0]), Finite(0.0));

        assert!(parse_function("banana:dim=1").is_err());
        assert!(parse_function("quadratic:bogus=1").is_err());
    }

    #[test]
    fn parse_wrappers() {
        let t = parse_function("translate(a=1;quadratic:dim=1)").unwrap();
        assert_eq!(t.eval(&[0.0]), Finite(0.5));

        let t2 = parse_function("translate(a=1,-2;quadratic:dim=2)").unwrap();
        assert_eq!(t2.eval(&[-1.0, 2.0]), Finite(0.0));

        let s = parse_function("scale(l=2;l1:dim=1)").unwrap();
        assert_eq!(s.eval(&[2.0]), Finite(2.0));

        let tt = parse_function("tensor(l1:dim=1;quadratic:dim=1)").unwrap();
        assert_eq!(tt.dim(), 2);
        assert_eq!(tt.eval(&[1.0, 2.0]), Finite(3.0));

        let nested = parse_function("translate(a=1;scale(l=2;quadratic:dim=1))").unwrap();
        // 2·q((x+1)/2) at x=1: 2·(1/2)·1 = 1? q(u)=u^2/2, u=1 → 1/2·2 = 1.
        assert_eq!(nested.eval(&[1.0]), Finite(1.0));

        assert!(parse_function("translate(a=1)").is_err());
        assert!(parse_function("translate(quadratic:dim=1)").is_err());
    }

    #[test]
    fn grid_csv_round_trip() {
        let grid = GridSpec::new(vec![
            GridAxis { lo: -1.0, hi: 1.0, nodes: 3 },
            GridAxis { lo: 0.0, hi: 2.0, nodes: 2 },
        ])
        .unwrap();
        let values = vec![
            Finite(0.25),
            PosInf,
            Finite(-1.5),
            Finite(3.0),
            Finite(1e-7),
            Finite(2.0),
        ];
        let mut buf = Vec::new();
        grid_to_csv(&mut buf, &grid, &values).unwrap();
        let (g2, v2) = grid_from_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(g2, grid);
        assert_eq!(v2, values);
    }

    #[test]
    fn grid_csv_errors() {
        assert!(grid_from_csv(std::io::Cursor::new(b"".to_vec())).is_err());
        // wrong value count
        let text = "1,0,1,3\n0.0,1.0";
        assert!(grid_from_csv(std::io::Cursor::new(text.as_bytes().to_vec())).is_err());
    }
}
