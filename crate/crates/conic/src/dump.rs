//! Plain-text problem listing for debugging.
//!
//! ```text
//! CONIC-DUMP v1
//! vars <n>
//! var <index> <name> <lower> <upper> <cost>
//! offset <c0>
//! eqs <m>
//! eq <rhs> | <index>:<coef> ...
//! rows <r>
//! row <lower> <upper> | <index>:<coef> ...
//! cones <k>
//! cone <dim>
//! entry <constant> | <index>:<coef> ...      (dim lines, head first)
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting; infinities are `inf`/`-inf`.
//! Whitespace in names is replaced by `_`.

use std::fmt::Write as _;

use crate::problem::{ConicProblem, EqRow, LinExpr, RangeRow, SocConstraint};
use crate::ConicError;

pub const DUMP_HEADER: &str = "CONIC-DUMP v1";

fn terms_str(out: &mut String, terms: &[(usize, f64)]) {
    out.push_str(" |");
    for &(i, a) in terms {
        let _ = write!(out, " {i}:{a:?}");
    }
    out.push('\n');
}

pub fn dump(p: &ConicProblem) -> String {
    let mut out = String::new();
    out.push_str(DUMP_HEADER);
    out.push('\n');
    let _ = writeln!(out, "vars {}", p.num_vars());
    for i in 0..p.num_vars() {
        let name: String = p.names[i]
            .chars()
            .map(|c| if c.is_whitespace() { '_' } else { c })
            .collect();
        let name = if name.is_empty() { "_".to_string() } else { name };
        let _ = writeln!(out, "var {i} {name} {:?} {:?} {:?}", p.lower[i], p.upper[i], p.c[i]);
    }
    let _ = writeln!(out, "offset {:?}", p.c0);
    let _ = writeln!(out, "eqs {}", p.eqs.len());
    for r in &p.eqs {
        let _ = write!(out, "eq {:?}", r.rhs);
        terms_str(&mut out, &r.terms);
    }
    let _ = writeln!(out, "rows {}", p.rows.len());
    for r in &p.rows {
        let _ = write!(out, "row {:?} {:?}", r.lo, r.hi);
        terms_str(&mut out, &r.terms);
    }
    let _ = writeln!(out, "cones {}", p.cones.len());
    for c in &p.cones {
        let _ = writeln!(out, "cone {}", c.dim());
        for e in std::iter::once(&c.t).chain(&c.u) {
            let _ = write!(out, "entry {:?}", e.constant);
            terms_str(&mut out, &e.terms);
        }
    }
    out
}

fn bad(line: usize, msg: &str) -> ConicError {
    ConicError::Parse(format!("line {line}: {msg}"))
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), ConicError> {
        match self.it.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(bad(self.last + 1, "unexpected end of dump")),
        }
    }

    /// Reads `<key> <count>`.
    fn count(&mut self, key: &str) -> Result<usize, ConicError> {
        let (ln, l) = self.next()?;
        let mut f = l.split_whitespace();
        if f.next() != Some(key) {
            return Err(bad(ln, &format!("expected `{key}`")));
        }
        f.next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(ln, "bad count"))
    }
}

fn num(ln: usize, s: Option<&str>) -> Result<f64, ConicError> {
    s.and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| bad(ln, "bad number"))
}

/// Splits `<key> <numbers…> | <terms…>`.
fn split_terms(ln: usize, l: &str, key: &str, nums: usize) -> Result<(Vec<f64>, Vec<(usize, f64)>), ConicError> {
    let (head, tail) = l.split_once('|').ok_or_else(|| bad(ln, "missing `|`"))?;
    let mut f = head.split_whitespace();
    if f.next() != Some(key) {
        return Err(bad(ln, &format!("expected `{key}`")));
    }
    let vals = (0..nums).map(|_| num(ln, f.next())).collect::<Result<Vec<_>, _>>()?;
    let mut terms = Vec::new();
    for t in tail.split_whitespace() {
        let (i, a) = t.split_once(':').ok_or_else(|| bad(ln, "bad term"))?;
        let i = i.parse().map_err(|_| bad(ln, "bad index"))?;
        terms.push((i, num(ln, Some(a))?));
    }
    Ok((vals, terms))
}

pub fn parse_dump(text: &str) -> Result<ConicProblem, ConicError> {
    let mut lines = Lines {
        it: text.lines().enumerate(),
        last: 0,
    };
    let (ln, header) = lines.next()?;
    if header.trim() != DUMP_HEADER {
        return Err(bad(ln, "missing CONIC-DUMP v1 header"));
    }
    let mut p = ConicProblem::new();
    let nv = lines.count("vars")?;
    for _ in 0..nv {
        let (ln, l) = lines.next()?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 6 || f[0] != "var" {
            return Err(bad(ln, "expected `var`"));
        }
        p.add_var(f[2], num(ln, Some(f[3]))?, num(ln, Some(f[4]))?, num(ln, Some(f[5]))?);
    }
    let (ln, l) = lines.next()?;
    p.c0 = match l.split_once(' ') {
        Some(("offset", v)) => num(ln, Some(v.trim()))?,
        _ => return Err(bad(ln, "expected `offset`")),
    };
    for _ in 0..lines.count("eqs")? {
        let (ln, l) = lines.next()?;
        let (v, terms) = split_terms(ln, l, "eq", 1)?;
        p.eqs.push(EqRow { terms, rhs: v[0] });
    }
    for _ in 0..lines.count("rows")? {
        let (ln, l) = lines.next()?;
        let (v, terms) = split_terms(ln, l, "row", 2)?;
        p.rows.push(RangeRow {
            terms,
            lo: v[0],
            hi: v[1],
        });
    }
    for _ in 0..lines.count("cones")? {
        let dim = lines.count("cone")?;
        let mut entries = Vec::with_capacity(dim);
        for _ in 0..dim {
            let (ln, l) = lines.next()?;
            let (v, terms) = split_terms(ln, l, "entry", 1)?;
            entries.push(LinExpr::new(terms, v[0]));
        }
        if entries.len() < 2 {
            return Err(bad(lines.last, "cone needs at least two entries"));
        }
        let t = entries.remove(0);
        p.cones.push(SocConstraint { t, u: entries });
    }
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut p = ConicProblem::new();
        let x = p.add_var("x pos", 0.0, f64::INFINITY, 1.5);
        let y = p.add_free_var("y", -0.1);
        let t = p.add_var("t", f64::NEG_INFINITY, 3.0, 0.0);
        p.c0 = 0.25;
        p.add_eq(vec![(x, 1.0), (y, 2.0)], 1.0 / 3.0);
        p.add_range(&LinExpr::new(vec![(y.0, -1.0)], 0.0), -2.0, f64::INFINITY);
        p.add_soc(LinExpr::var(t), vec![LinExpr::new(vec![(x.0, 0.1)], 2.0), LinExpr::var(y)]);
        let text = dump(&p);
        assert!(text.starts_with("CONIC-DUMP v1\n"));
        let mut back = parse_dump(&text).unwrap();
        assert_eq!(back.names[0], "x_pos");
        back.names[0] = "x pos".into();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_dump("CONIC-DUMP v2\nvars 0\n").is_err());
    }
}
