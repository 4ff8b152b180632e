//! Matrix and permutation file formats: MatrixMarket (coordinate and array),
//! dense CSV, and whitespace-separated binary 0/1 text.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::model::SimilarityMatrix;
use crate::perm::PermutationVec;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `M Mᵀ`, the row-overlap similarity.
    pub fn gram(&self) -> Result<SimilarityMatrix> {
        let n = self.rows;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let ri = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in i..n {
                let rj = &self.data[j * self.cols..(j + 1) * self.cols];
                let v: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        SimilarityMatrix::new(n, out)
    }

    pub fn into_similarity(self) -> Result<SimilarityMatrix> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch { expected: self.rows, got: self.cols });
        }
        SimilarityMatrix::new(self.rows, self.data)
    }

    /// Reorders rows: row `i` of the result is row `order[i]`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        check_len(self.rows, order.len())?;
        let mut data = Vec::with_capacity(self.data.len());
        for &r in order {
            data.extend_from_slice(&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    MatrixMarket,
    Csv,
    /// Rows of `0`/`1` tokens; interpreted as an incidence matrix `M`.
    Binary01,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("mtx") | Some("mm") => Self::MatrixMarket,
            Some("csv") => Self::Csv,
            _ => Self::Binary01,
        }
    }
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mtx" | "matrix-market" | "matrixmarket" => Ok(Self::MatrixMarket),
            "csv" => Ok(Self::Csv),
            "binary" | "binary01" | "01" => Ok(Self::Binary01),
            other => Err(Error::InvalidArgument(format!("unknown matrix format {other}"))),
        }
    }
}

pub fn parse_matrix(text: &str, format: MatrixFormat) -> Result<DenseMatrix> {
    match format {
        MatrixFormat::MatrixMarket => parse_matrix_market(text),
        MatrixFormat::Csv => parse_csv(text),
        MatrixFormat::Binary01 => parse_binary01(text),
    }
}

pub fn read_matrix(path: &Path, format: Option<MatrixFormat>) -> Result<DenseMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix(&text, format.unwrap_or_else(|| MatrixFormat::from_path(path)))
}

/// Loads a similarity matrix. Binary files are incidence matrices and are
/// turned into `M Mᵀ`; the other formats must already be square and symmetric.
pub fn read_similarity(path: &Path, format: Option<MatrixFormat>) -> Result<SimilarityMatrix> {
    let format = format.unwrap_or_else(|| MatrixFormat::from_path(path));
    let m = read_matrix(path, Some(format))?;
    match format {
        MatrixFormat::Binary01 => m.gram(),
        _ => m.into_similarity(),
    }
}

pub fn parse_matrix_market(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let h: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(Error::parse(1, "missing %%MatrixMarket matrix header"));
    }
    let coordinate = match h[2].as_str() {
        "coordinate" => true,
        "array" => false,
        f => return Err(Error::parse(1, format!("unsupported layout {f}"))),
    };
    let pattern = match h[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        f => return Err(Error::parse(1, format!("unsupported field {f}"))),
    };
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        f => return Err(Error::parse(1, format!("unsupported symmetry {f}"))),
    };
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'));
    let (sln, size) = body.next().ok_or_else(|| Error::parse(2, "missing size line"))?;
    let dims = parse_usizes(size, sln + 1)?;
    let (rows, cols) = match (coordinate, dims.as_slice()) {
        (true, [r, c, _]) | (false, [r, c]) => (*r, *c),
        _ => return Err(Error::parse(sln + 1, "malformed size line")),
    };
    let mut m = DenseMatrix::zeros(rows, cols);
    if coordinate {
        let nnz = dims[2];
        let mut seen = 0;
        for (ln, line) in body {
            let t: Vec<&str> = line.split_whitespace().collect();
            let want = if pattern { 2 } else { 3 };
            if t.len() != want {
                return Err(Error::parse(ln + 1, format!("expected {want} fields")));
            }
            let r = parse_index(t[0], rows, ln + 1)?;
            let c = parse_index(t[1], cols, ln + 1)?;
            let v = if pattern { 1.0 } else { parse_f64(t[2], ln + 1)? };
            m.set(r, c, v);
            if symmetric {
                m.set(c, r, v);
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(Error::parse(0, format!("expected {nnz} entries, found {seen}")));
        }
    } else {
        // column-major; symmetric arrays list the lower triangle only
        let mut cells = Vec::new();
        for c in 0..cols {
            let start = if symmetric { c } else { 0 };
            for r in start..rows {
                cells.push((r, c));
            }
        }
        let mut k = 0;
        for (ln, line) in body {
            for tok in line.split_whitespace() {
                let &(r, c) = cells.get(k).ok_or_else(|| Error::parse(ln + 1, "too many values"))?;
                let v = parse_f64(tok, ln + 1)?;
                m.set(r, c, v);
                if symmetric {
                    m.set(c, r, v);
                }
                k += 1;
            }
        }
        if k != cells.len() {
            return Err(Error::parse(0, format!("expected {} values, found {k}", cells.len())));
        }
    }
    check_finite(&m.data, "matrix")?;
    Ok(m)
}

/// Column-major MatrixMarket array.
pub fn write_matrix_market_array(rows: usize, cols: usize, data: &[f64]) -> String {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{rows} {cols}");
    for c in 0..cols {
        for r in 0..rows {
            let _ = writeln!(s, "{}", data[r * cols + c]);
        }
    }
    s
}

/// Coordinate dump of the nonzeros; with `symmetric` only the lower triangle is written.
pub fn write_matrix_market_coordinate(m: &DenseMatrix, symmetric: bool) -> String {
    let mut entries = Vec::new();
    for r in 0..m.rows {
        for c in 0..m.cols {
            let v = m.get(r, c);
            if v != 0.0 && (!symmetric || c <= r) {
                entries.push((r, c, v));
            }
        }
    }
    let sym = if symmetric { "symmetric" } else { "general" };
    let mut s = format!("%%MatrixMarket matrix coordinate real {sym}\n");
    let _ = writeln!(s, "{} {} {}", m.rows, m.cols, entries.len());
    for (r, c, v) in entries {
        let _ = writeln!(s, "{} {} {}", r + 1, c + 1, v);
    }
    s
}

pub fn write_similarity_matrix_market(a: &SimilarityMatrix) -> String {
    let m = DenseMatrix { rows: a.n(), cols: a.n(), data: a.data().to_vec() };
    write_matrix_market_coordinate(&m, true)
}

/// Headerless numeric CSV; every record must have the same width.
pub fn parse_csv(text: &str) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(k + 1, e.to_string()))?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => return Err(Error::parse(k + 1, format!("expected {c} fields"))),
            _ => {}
        }
        for f in rec.iter() {
            data.push(parse_f64(f, k + 1)?);
        }
        rows += 1;
    }
    check_finite(&data, "matrix")?;
    Ok(DenseMatrix { rows, cols: cols.unwrap_or(0), data })
}

pub fn write_csv(m: &DenseMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in 0..m.rows {
        let rec: Vec<String> = (0..m.cols).map(|c| m.get(r, c).to_string()).collect();
        w.write_record(&rec).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

pub fn parse_binary01(text: &str) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = if line.contains(char::is_whitespace) || line.contains(',') {
            line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect()
        } else {
            // packed form: "0110"
            line.split("").filter(|t| !t.is_empty()).collect()
        };
        match cols {
            None => cols = Some(toks.len()),
            Some(c) if c != toks.len() => return Err(Error::parse(ln + 1, format!("expected {c} entries"))),
            _ => {}
        }
        for t in toks {
            data.push(match t {
                "0" => 0.0,
                "1" => 1.0,
                other => return Err(Error::parse(ln + 1, format!("{other} is not 0 or 1"))),
            });
        }
        rows += 1;
    }
    Ok(DenseMatrix { rows, cols: cols.unwrap_or(0), data })
}

pub fn write_binary01(m: &DenseMatrix) -> String {
    let mut s = String::new();
    for r in 0..m.rows {
        let row: Vec<&str> = (0..m.cols).map(|c| if m.get(r, c) != 0.0 { "1" } else { "0" }).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// One permutation per file: whitespace-separated 1-based entries.
pub fn parse_permutation(text: &str) -> Result<PermutationVec> {
    let mut entries = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            entries.push(tok.parse::<usize>().map_err(|e| Error::parse(ln + 1, format!("{tok}: {e}")))?);
        }
    }
    PermutationVec::new(entries)
}

pub fn write_permutation(p: &PermutationVec) -> String {
    let toks: Vec<String> = p.entries().iter().map(usize::to_string).collect();
    format!("{}\n", toks.join(" "))
}

fn parse_usizes(line: &str, ln: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::parse(ln, format!("{t}: {e}"))))
        .collect()
}

fn parse_index(tok: &str, bound: usize, ln: usize) -> Result<usize> {
    let i: usize = tok.parse().map_err(|e| Error::parse(ln, format!("{tok}: {e}")))?;
    if i == 0 || i > bound {
        return Err(Error::parse(ln, format!("index {i} outside 1..={bound}")));
    }
    Ok(i - 1)
}

fn parse_f64(tok: &str, ln: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|e| Error::parse(ln, format!("{tok}: {e}")))
}
