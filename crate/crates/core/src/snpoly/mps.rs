//! MPS reading and writing.
//!
//! The writer emits fixed-format MPS (names at columns 5 and 15, values at
//! column 25) with a `QMATRIX` section. As in the usual QPS convention, the
//! file encodes `cᵀx + ½ xᵀHx`, so an objective `xᵀQx` is written with
//! `H = Q + Qᵀ`. Naming is deterministic:
//!
//! | prefix | meaning                         |
//! |--------|---------------------------------|
//! | `X`    | variable                        |
//! | `C`    | comparator sum equality         |
//! | `P`    | output pin equality             |
//! | `I`    | comparator inequality           |
//! | `S`    | side constraint `x_i − x_j ≤ −gap` |
//!
//! The reader accepts free-format files as well (tokens split on whitespace).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{QuadraticObjective, SnPolytope};
use crate::error::{Error, Result};
use crate::model::SideConstraints;

const MAX_INDEX: usize = 10_000_000;

pub(crate) fn write(poly: &SnPolytope, objective: &QuadraticObjective, side: &SideConstraints) -> Result<String> {
    let nv = poly.num_vars();
    if nv > MAX_INDEX || poly.eq_rows().len() > MAX_INDEX || poly.ineq_rows().len() > MAX_INDEX {
        return Err(Error::InvalidArgument("problem too large for 8-character MPS names".into()));
    }
    let is_input: Vec<bool> = {
        let mut v = vec![false; nv];
        poly.input_idx().iter().for_each(|&i| v[i] = true);
        v
    };
    let mut hessian: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(i, j, q) in &objective.quad {
        if i >= nv || j >= nv {
            return Err(Error::UnsupportedObjective(format!("quadratic term ({i}, {j}) outside {nv} variables")));
        }
        if !is_input[i] || !is_input[j] {
            return Err(Error::UnsupportedObjective(format!("quadratic term ({i}, {j}) touches a non-input variable")));
        }
        if !q.is_finite() {
            return Err(Error::NonFinite("quadratic objective"));
        }
        *hessian.entry((i, j)).or_default() += q;
        *hessian.entry((j, i)).or_default() += q;
    }
    hessian.retain(|_, v| *v != 0.0);
    let mut linear = vec![0.0; nv];
    for &(i, c) in &objective.linear {
        if i >= nv {
            return Err(Error::UnsupportedObjective(format!("linear term on variable {i} outside {nv}")));
        }
        linear[i] += c;
    }
    for c in side.iter() {
        for idx in [c.i, c.j] {
            if idx >= poly.n() {
                return Err(Error::IndexOutOfRange { index: idx, n: poly.n() });
            }
        }
    }

    // Row names in file order, with per-column entries collected alongside.
    let m = poly.num_comparators();
    let mut rows: Vec<(char, String, f64)> = Vec::new();
    let mut col_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for (r, row) in poly.eq_rows().iter().enumerate() {
        let name = if r < m { format!("C{r:07}") } else { format!("P{:07}", r - m) };
        for (&c, &v) in row.idx.iter().zip(&row.coef) {
            col_entries[c].push((rows.len(), v));
        }
        rows.push(('E', name, row.rhs));
    }
    for (r, row) in poly.ineq_rows().iter().enumerate() {
        for (&c, &v) in row.idx.iter().zip(&row.coef) {
            col_entries[c].push((rows.len(), v));
        }
        rows.push(('L', format!("I{r:07}"), row.rhs));
    }
    for (k, c) in side.iter().enumerate() {
        let r = rows.len();
        col_entries[poly.input_idx()[c.i]].push((r, 1.0));
        col_entries[poly.input_idx()[c.j]].push((r, -1.0));
        rows.push(('L', format!("S{k:07}"), -c.gap));
    }

    let mut s = String::new();
    let _ = writeln!(s, "NAME          SNPERM");
    let _ = writeln!(s, "ROWS");
    let _ = writeln!(s, " N  OBJ");
    for (t, name, _) in &rows {
        let _ = writeln!(s, " {t}  {name}");
    }
    let _ = writeln!(s, "COLUMNS");
    for (c, entries) in col_entries.iter().enumerate() {
        let cname = format!("X{c:07}");
        if linear[c] != 0.0 {
            let _ = writeln!(s, "    {cname:<8}  {:<8}  {:>12}", "OBJ", fmt_num(linear[c]));
        }
        for &(r, v) in entries {
            let _ = writeln!(s, "    {cname:<8}  {:<8}  {:>12}", rows[r].1, fmt_num(v));
        }
        if entries.is_empty() && linear[c] == 0.0 {
            let _ = writeln!(s, "    {cname:<8}  {:<8}  {:>12}", "OBJ", "0");
        }
    }
    let _ = writeln!(s, "RHS");
    for (_, name, rhs) in &rows {
        if *rhs != 0.0 {
            let _ = writeln!(s, "    {:<8}  {name:<8}  {:>12}", "RHS", fmt_num(*rhs));
        }
    }
    let _ = writeln!(s, "BOUNDS");
    for c in 0..nv {
        let _ = writeln!(s, " FR {:<8}  X{c:07}", "BND");
    }
    if !hessian.is_empty() {
        let _ = writeln!(s, "QMATRIX");
        for (&(i, j), &v) in &hessian {
            let _ = writeln!(s, "    X{i:07}  X{j:07}  {:>12}", fmt_num(v));
        }
    }
    let _ = writeln!(s, "ENDATA");
    Ok(s)
}

/// Shortest round-trip representation, positional or scientific.
fn fmt_num(v: f64) -> String {
    let a = format!("{v}");
    let b = format!("{v:e}");
    if b.len() < a.len() {
        b
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Eq,
    Le,
    Ge,
}

/// A parsed MPS file: `min cᵀx + ½ xᵀHx + const` subject to row constraints and bounds.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MpsModel {
    pub name: String,
    pub row_names: Vec<String>,
    pub row_kinds: Vec<RowKind>,
    pub rhs: Vec<f64>,
    pub column_names: Vec<String>,
    /// Constraint coefficients as `(row, column, value)`.
    pub entries: Vec<(usize, usize, f64)>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Full symmetric `H` as `(i, j, value)` triplets.
    pub hessian: Vec<(usize, usize, f64)>,
}

impl MpsModel {
    pub fn num_rows(&self) -> usize {
        self.row_names.len()
    }

    pub fn num_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Evaluates `cᵀx + ½ xᵀHx + const`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.objective.iter().zip(x).map(|(c, v)| c * v).sum();
        let quad: f64 = self.hessian.iter().map(|&(i, j, h)| h * x[i] * x[j]).sum();
        lin + 0.5 * quad + self.objective_constant
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    QMatrix,
    QuadObj,
}

pub fn parse(text: &str) -> Result<MpsModel> {
    let mut model = MpsModel::default();
    let mut section = Section::None;
    let mut obj_row: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut ended = false;

    let num = |tok: &str, ln: usize| tok.parse::<f64>().map_err(|e| Error::parse(ln, format!("{tok}: {e}")));

    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match toks[0] {
                "NAME" => {
                    model.name = toks.get(1).unwrap_or(&"").to_string();
                    Section::None
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "QMATRIX" => Section::QMatrix,
                "QUADOBJ" => Section::QuadObj,
                "OBJSENSE" => return Err(Error::parse(ln, "OBJSENSE is not supported")),
                "ENDATA" => {
                    ended = true;
                    break;
                }
                other => return Err(Error::parse(ln, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            Section::Rows => {
                let [kind, name] = toks[..] else { return Err(Error::parse(ln, "ROWS line needs type and name")) };
                let kind = match kind {
                    "N" => {
                        if obj_row.is_none() {
                            obj_row = Some(name.to_string());
                        }
                        continue;
                    }
                    "E" => RowKind::Eq,
                    "L" => RowKind::Le,
                    "G" => RowKind::Ge,
                    k => return Err(Error::parse(ln, format!("unknown row type {k}"))),
                };
                row_index.insert(name.to_string(), model.row_names.len());
                model.row_names.push(name.to_string());
                model.row_kinds.push(kind);
                model.rhs.push(0.0);
            }
            Section::Columns => {
                if toks.contains(&"'MARKER'") {
                    return Err(Error::parse(ln, "integer markers are not supported"));
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(Error::parse(ln, "COLUMNS line needs 3 or 5 fields"));
                }
                let col = *col_index.entry(toks[0].to_string()).or_insert_with(|| {
                    model.column_names.push(toks[0].to_string());
                    model.objective.push(0.0);
                    model.column_names.len() - 1
                });
                for pair in toks[1..].chunks(2) {
                    let v = num(pair[1], ln)?;
                    if obj_row.as_deref() == Some(pair[0]) {
                        model.objective[col] += v;
                    } else {
                        let r = *row_index.get(pair[0]).ok_or_else(|| Error::parse(ln, format!("unknown row {}", pair[0])))?;
                        model.entries.push((r, col, v));
                    }
                }
            }
            Section::Rhs => {
                let body = if toks.len() % 2 == 1 { &toks[1..] } else { &toks[..] };
                for pair in body.chunks(2) {
                    let [name, val] = pair else { return Err(Error::parse(ln, "RHS needs name/value pairs")) };
                    let v = num(val, ln)?;
                    if obj_row.as_deref() == Some(*name) {
                        model.objective_constant = -v;
                    } else {
                        let r = *row_index.get(*name).ok_or_else(|| Error::parse(ln, format!("unknown row {name}")))?;
                        model.rhs[r] = v;
                    }
                }
            }
            Section::Ranges => return Err(Error::parse(ln, "RANGES are not supported")),
            Section::Bounds => {
                if model.lower.len() < model.column_names.len() {
                    model.lower.resize(model.column_names.len(), 0.0);
                    model.upper.resize(model.column_names.len(), f64::INFINITY);
                }
                if toks.len() < 3 {
                    return Err(Error::parse(ln, "BOUNDS line too short"));
                }
                let c = *col_index.get(toks[2]).ok_or_else(|| Error::parse(ln, format!("unknown column {}", toks[2])))?;
                let val = || toks.get(3).ok_or_else(|| Error::parse(ln, "bound value missing")).and_then(|t| num(t, ln));
                match toks[0] {
                    "UP" => model.upper[c] = val()?,
                    "LO" => model.lower[c] = val()?,
                    "FX" => {
                        let v = val()?;
                        model.lower[c] = v;
                        model.upper[c] = v;
                    }
                    "FR" => {
                        model.lower[c] = f64::NEG_INFINITY;
                        model.upper[c] = f64::INFINITY;
                    }
                    "MI" => model.lower[c] = f64::NEG_INFINITY,
                    "PL" => model.upper[c] = f64::INFINITY,
                    b => return Err(Error::parse(ln, format!("unsupported bound type {b}"))),
                }
            }
            Section::QMatrix | Section::QuadObj => {
                let [a, b, v] = toks[..] else { return Err(Error::parse(ln, "quadratic line needs 3 fields")) };
                let i = *col_index.get(a).ok_or_else(|| Error::parse(ln, format!("unknown column {a}")))?;
                let j = *col_index.get(b).ok_or_else(|| Error::parse(ln, format!("unknown column {b}")))?;
                let v = num(v, ln)?;
                model.hessian.push((i, j, v));
                if section == Section::QuadObj && i != j {
                    model.hessian.push((j, i, v));
                }
            }
            Section::None => return Err(Error::parse(ln, "data line outside a section")),
        }
    }
    if !ended {
        return Err(Error::parse(text.lines().count(), "missing ENDATA"));
    }
    model.lower.resize(model.column_names.len(), 0.0);
    model.upper.resize(model.column_names.len(), f64::INFINITY);
    Ok(model)
}
