//! Plain-text dump/load of solver results.
//!
//! Floats are written with `{:.17e}` so a dump/load cycle reproduces every
//! f64 bit-exactly.

use nalgebra::DMatrix;

use super::{SdpError, SdpSolution, SdpStatus};
use crate::C64;

fn status_name(s: SdpStatus) -> &'static str {
    match s {
        SdpStatus::Optimal => "optimal",
        SdpStatus::MaxIterations => "max-iterations",
        SdpStatus::Infeasible => "infeasible",
    }
}

fn write_matrix(out: &mut String, label: &str, m: &DMatrix<C64>) {
    out.push_str(&format!("{} {} {}\n", label, m.nrows(), m.ncols()));
    for i in 0..m.nrows() {
        let mut row = String::new();
        for j in 0..m.ncols() {
            if j > 0 {
                row.push(' ');
            }
            row.push_str(&format!("{:.17e} {:.17e}", m[(i, j)].re, m[(i, j)].im));
        }
        row.push('\n');
        out.push_str(&row);
    }
}

pub fn dump_solution(sol: &SdpSolution) -> String {
    let mut out = String::new();
    out.push_str("riss-sdp v1\n");
    out.push_str(&format!("status {}\n", status_name(sol.status)));
    out.push_str(&format!("objective {:.17e}\n", sol.objective));
    out.push_str(&format!("dual {:.17e}\n", sol.dual_objective));
    out.push_str(&format!("accuracy {:.17e}\n", sol.accuracy));
    out.push_str(&format!("iterations {}\n", sol.iterations));
    match sol.r {
        Some(r) => out.push_str(&format!("r {:.17e}\n", r)),
        None => out.push_str("r none\n"),
    }
    write_matrix(&mut out, "x", &sol.x);
    match &sol.rank_dual {
        Some(m) => write_matrix(&mut out, "rank_dual", m),
        None => out.push_str("rank_dual none\n"),
    }
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), SdpError> {
        self.iter
            .next()
            .map(|(i, s)| (i + 1, s))
            .ok_or(SdpError::Parse { line: 0, message: "unexpected end of input".into() })
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, SdpError> {
    tok.parse::<f64>()
        .map_err(|e| SdpError::Parse { line, message: format!("bad float {tok:?}: {e}") })
}

fn expect_key<'a>(
    text: (usize, &'a str),
    key: &str,
) -> Result<(usize, &'a str), SdpError> {
    let (line, s) = text;
    let rest = s
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| SdpError::Parse { line, message: format!("expected key {key:?}") })?;
    Ok((line, rest))
}

fn read_matrix(lines: &mut Lines, label: &str) -> Result<Option<DMatrix<C64>>, SdpError> {
    let (line, rest) = expect_key(lines.next()?, label)?;
    if rest == "none" {
        return Ok(None);
    }
    let dims: Vec<&str> = rest.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(SdpError::Parse { line, message: "expected rows cols".into() });
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| SdpError::Parse { line, message: "bad row count".into() })?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| SdpError::Parse { line, message: "bad column count".into() })?;
    let mut m = DMatrix::<C64>::zeros(rows, cols);
    for i in 0..rows {
        let (rline, row) = lines.next()?;
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() != 2 * cols {
            return Err(SdpError::Parse {
                line: rline,
                message: format!("expected {} floats, got {}", 2 * cols, toks.len()),
            });
        }
        for j in 0..cols {
            let re = parse_f64(toks[2 * j], rline)?;
            let im = parse_f64(toks[2 * j + 1], rline)?;
            m[(i, j)] = C64::new(re, im);
        }
    }
    Ok(Some(m))
}

pub fn load_solution(text: &str) -> Result<SdpSolution, SdpError> {
    let mut lines = Lines { iter: text.lines().enumerate() };
    let (line, header) = lines.next()?;
    if header != "riss-sdp v1" {
        return Err(SdpError::Parse { line, message: "unknown header".into() });
    }
    let (line, status) = expect_key(lines.next()?, "status")?;
    let status = match status {
        "optimal" => SdpStatus::Optimal,
        "max-iterations" => SdpStatus::MaxIterations,
        "infeasible" => SdpStatus::Infeasible,
        other => {
            return Err(SdpError::Parse { line, message: format!("unknown status {other:?}") })
        }
    };
    let (line, tok) = expect_key(lines.next()?, "objective")?;
    let objective = parse_f64(tok, line)?;
    let (line, tok) = expect_key(lines.next()?, "dual")?;
    let dual_objective = parse_f64(tok, line)?;
    let (line, tok) = expect_key(lines.next()?, "accuracy")?;
    let accuracy = parse_f64(tok, line)?;
    let (line, tok) = expect_key(lines.next()?, "iterations")?;
    let iterations: usize = tok
        .parse()
        .map_err(|_| SdpError::Parse { line, message: "bad iteration count".into() })?;
    let (line, tok) = expect_key(lines.next()?, "r")?;
    let r = if tok == "none" { None } else { Some(parse_f64(tok, line)?) };
    let x = read_matrix(&mut lines, "x")?
        .ok_or(SdpError::Parse { line: 0, message: "missing x".into() })?;
    let rank_dual = read_matrix(&mut lines, "rank_dual")?;
    Ok(SdpSolution { x, r, objective, dual_objective, status, accuracy, iterations, rank_dual })
}
