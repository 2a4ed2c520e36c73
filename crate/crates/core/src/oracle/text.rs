//! Plain-text CMDP tables.
//!
//! ```text
//! # comments and blank lines are ignored
//! S A K gamma
//! S*A rows of S numbers     P(. | s, a), s-major
//! S rows of A numbers       R(s, .)
//! K blocks of S rows of A   C_k(s, .)
//! 1 row of K numbers        thresholds (omitted when K = 0)
//! 1 row of S numbers        initial distribution (optional; default: state 0)
//! ```

use std::fmt::Write;

use super::model::TabularCMDP;
use crate::error::{Error, Result};

struct Rows<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Rows<'a> {
    fn next_row(&mut self, want: usize, what: &str) -> Result<Vec<f64>> {
        let (line, text) = *self.lines.get(self.pos).ok_or(Error::Parse {
            line: self.lines.last().map_or(0, |l| l.0),
            msg: format!("unexpected end of input, expected {what}"),
        })?;
        self.pos += 1;
        let vals = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("bad number {t:?} in {what}") }))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != want {
            return Err(Error::Parse { line, msg: format!("{what}: expected {want} values, found {}", vals.len()) });
        }
        Ok(vals)
    }
}

pub fn parse_cmdp(text: &str) -> Result<TabularCMDP> {
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut rows = Rows { lines, pos: 0 };
    let header_line = rows.lines.first().map_or(1, |l| l.0);
    let header = rows.next_row(4, "header S A K gamma")?;
    let as_count = |v: f64, name: &str| {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Parse { line: header_line, msg: format!("{name} must be a non-negative integer") })
        }
    };
    let (s, a, k) = (as_count(header[0], "S")?, as_count(header[1], "A")?, as_count(header[2], "K")?);
    let gamma = header[3];
    let mut p = Vec::with_capacity(s * a * s);
    for i in 0..s * a {
        p.extend(rows.next_row(s, &format!("P row {i}"))?);
    }
    let mut r = Vec::with_capacity(s * a);
    for i in 0..s {
        r.extend(rows.next_row(a, &format!("R row {i}"))?);
    }
    let mut c = Vec::with_capacity(k);
    for j in 0..k {
        let mut table = Vec::with_capacity(s * a);
        for i in 0..s {
            table.extend(rows.next_row(a, &format!("C{j} row {i}"))?);
        }
        c.push(table);
    }
    let d = if k > 0 { rows.next_row(k, "thresholds")? } else { vec![] };
    let p0 = if rows.pos < rows.lines.len() {
        rows.next_row(s, "initial distribution")?
    } else {
        let mut v = vec![0.0; s];
        if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
        v
    };
    if let Some(&(line, _)) = rows.lines.get(rows.pos) {
        return Err(Error::Parse { line, msg: "trailing content".into() });
    }
    TabularCMDP::new(s, a, p, r, c, d, gamma, p0)
}

pub fn write_cmdp(m: &TabularCMDP) -> String {
    let (s, a, k) = (m.states(), m.actions(), m.num_constraints());
    let row = |vals: &[f64]| vals.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
    let mut out = String::new();
    let _ = writeln!(out, "{s} {a} {k} {:?}", m.gamma());
    out.push_str("# transitions\n");
    for chunk in m.transitions().chunks(s) {
        let _ = writeln!(out, "{}", row(chunk));
    }
    out.push_str("# reward\n");
    for chunk in m.reward().chunks(a) {
        let _ = writeln!(out, "{}", row(chunk));
    }
    for j in 0..k {
        let _ = writeln!(out, "# cost {j}");
        for chunk in m.cost(j).chunks(a) {
            let _ = writeln!(out, "{}", row(chunk));
        }
    }
    if k > 0 {
        let _ = writeln!(out, "# thresholds\n{}", row(m.thresholds()));
    }
    let _ = writeln!(out, "# initial\n{}", row(m.initial()));
    out
}
