//! Text formats for dense tensors, tree-based tensors, sum-of-products
//! operators and trajectories.
//!
//! Scalars are written with 17 significant digits so that a write/read round
//! trip is exact. Blank lines and lines starting with `#` are ignored on input.

use std::fmt::Write as _;

use crate::dense::DenseTensor;
use crate::dynamics::{ProductTerm, SumOfProductsOperator};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tbf::TbfTensor;
use crate::tree::{parse_tree_lines, ModeSet, TreeLines};

/// Scalar formatting used by every writer.
pub fn fmt_scalar(x: f64) -> String {
    // `+ 0.0` folds -0 into 0 so empty sums print unsigned.
    format!("{:.16e}", x + 0.0)
}

fn push_row(out: &mut String, row: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for x in row {
        if !first {
            out.push(' ');
        }
        first = false;
        out.push_str(&fmt_scalar(x));
    }
    out.push('\n');
}

// Row-major values, `width` per line.
fn push_values(out: &mut String, data: &[f64], width: usize) {
    for chunk in data.chunks(width.max(1)) {
        push_row(out, chunk.iter().copied());
    }
}

fn push_matrix(out: &mut String, m: &Matrix) {
    for i in 0..m.nrows() {
        push_row(out, m.row(i).iter().copied());
    }
}

/// Tokenizing reader over content lines, keeping line numbers for errors.
struct Reader<'a, I: Iterator<Item = (usize, &'a str)>> {
    lines: TreeLines<'a, I>,
    pending: Vec<&'a str>,
    line: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Reader<'a, I> {
    fn new(lines: TreeLines<'a, I>) -> Self {
        Reader {
            lines,
            pending: Vec::new(),
            line: 0,
        }
    }

    /// Next content line as whitespace-separated tokens (any unread tokens
    /// of the current line are an error).
    fn header(&mut self, what: &str) -> Result<Vec<&'a str>> {
        if !self.pending.is_empty() {
            return Err(Error::parse(self.line, format!("unexpected extra values before {what}")));
        }
        let (n, text) = self
            .lines
            .next_content()
            .ok_or_else(|| Error::parse(self.lines.last_line + 1, format!("expected {what}, found end of input")))?;
        self.line = n;
        Ok(text.split_whitespace().collect())
    }

    fn scalars(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.pending.is_empty() {
                let (n, text) = self.lines.next_content().ok_or_else(|| {
                    Error::parse(
                        self.lines.last_line + 1,
                        format!("{what}: expected {count} values, found {}", out.len()),
                    )
                })?;
                self.line = n;
                self.pending = text.split_whitespace().rev().collect();
            }
            let tok = self.pending.pop().unwrap();
            out.push(parse_scalar(self.line, tok)?);
        }
        Ok(out)
    }

    fn finish(&mut self) -> Result<()> {
        if !self.pending.is_empty() {
            return Err(Error::parse(self.line, "unexpected trailing values"));
        }
        if let Some((n, text)) = self.lines.next_content() {
            return Err(Error::parse(n, format!("unexpected trailing content '{}'", text.trim())));
        }
        Ok(())
    }
}

fn numbered(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l))
}

fn parse_scalar(line: usize, tok: &str) -> Result<f64> {
    let x: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("bad number '{tok}'")))?;
    if !x.is_finite() {
        return Err(Error::parse(line, format!("non-finite value '{tok}'")));
    }
    Ok(x)
}

fn parse_count(line: usize, tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("bad count '{tok}'")))
}

fn expect_keyword(line: usize, toks: &[&str], kw: &str) -> Result<()> {
    if toks.first() != Some(&kw) {
        return Err(Error::parse(
            line,
            format!("expected '{kw}', found '{}'", toks.first().copied().unwrap_or("")),
        ));
    }
    Ok(())
}

/// `DENSE d n_1 … n_d`, then the values in row-major order, `n_d` per line.
pub fn write_dense(v: &DenseTensor) -> String {
    let mut out = format!("DENSE {}", v.order());
    for n in v.dims() {
        let _ = write!(out, " {n}");
    }
    out.push('\n');
    push_values(&mut out, v.data(), v.dims().last().copied().unwrap_or(1));
    out
}

pub fn parse_dense(text: &str) -> Result<DenseTensor> {
    let mut r = Reader::new(TreeLines::new(numbered(text)));
    let v = read_dense(&mut r)?;
    r.finish()?;
    Ok(v)
}

fn read_dense<'a, I: Iterator<Item = (usize, &'a str)>>(r: &mut Reader<'a, I>) -> Result<DenseTensor> {
    let h = r.header("DENSE header")?;
    let line = r.line;
    expect_keyword(line, &h, "DENSE")?;
    let d = parse_count(line, h.get(1).ok_or_else(|| Error::parse(line, "missing mode count"))?)?;
    if h.len() != d + 2 {
        return Err(Error::parse(line, format!("expected {d} mode sizes, found {}", h.len().saturating_sub(2))));
    }
    let dims = h[2..].iter().map(|t| parse_count(line, t)).collect::<Result<Vec<_>>>()?;
    if d == 0 || dims.contains(&0) {
        return Err(Error::parse(line, "mode count and sizes must be positive"));
    }
    let data = r.scalars(dims.iter().product(), "DENSE values")?;
    DenseTensor::new(dims, data)
}

/// `TBF`, the tree, one `FRAME j n r` block per leaf (`n` rows of `r`
/// values), then one `TRANSFER <indices> r_parent r_child…` block per
/// internal node in pre-order (values row-major, last child axis per line).
pub fn write_tbf(x: &TbfTensor) -> String {
    let tree = x.tree();
    let mut out = String::from("TBF\n");
    out.push_str(&tree.serialize());
    for j in 0..tree.d() {
        let f = x.frame(j);
        let _ = writeln!(out, "FRAME {} {} {}", j + 1, f.nrows(), f.ncols());
        push_matrix(&mut out, f);
    }
    for (id, c) in tree.internal_nodes().zip(x.transfers()) {
        let idx: Vec<String> = tree.modes(id).indices().iter().map(|m| (m + 1).to_string()).collect();
        let _ = write!(out, "TRANSFER {}", idx.join(","));
        for n in c.dims() {
            let _ = write!(out, " {n}");
        }
        out.push('\n');
        push_values(&mut out, c.data(), c.dims().last().copied().unwrap_or(1));
    }
    out
}

pub fn parse_tbf(text: &str) -> Result<TbfTensor> {
    let mut lines = TreeLines::new(numbered(text));
    match lines.next_content() {
        Some((_, t)) if t.trim() == "TBF" => {}
        Some((n, t)) => return Err(Error::parse(n, format!("expected 'TBF', found '{}'", t.trim()))),
        None => return Err(Error::parse(1, "empty input")),
    }
    let tree = parse_tree_lines(&mut lines)?;
    let mut r = Reader::new(lines);
    let mut frames = vec![None; tree.d()];
    for _ in 0..tree.d() {
        let h = r.header("FRAME header")?;
        let line = r.line;
        expect_keyword(line, &h, "FRAME")?;
        if h.len() != 4 {
            return Err(Error::parse(line, "expected 'FRAME j n r'"));
        }
        let j = parse_count(line, h[1])?;
        let (n, rank) = (parse_count(line, h[2])?, parse_count(line, h[3])?);
        if j == 0 || j > tree.d() || frames[j - 1].is_some() {
            return Err(Error::parse(line, format!("bad or repeated leaf index {j}")));
        }
        let vals = r.scalars(n * rank, "FRAME values")?;
        frames[j - 1] = Some(Matrix::from_row_slice(n, rank, &vals));
    }
    let mut transfers = Vec::new();
    for id in tree.internal_nodes() {
        let h = r.header("TRANSFER header")?;
        let line = r.line;
        expect_keyword(line, &h, "TRANSFER")?;
        let node: ModeSet = h
            .get(1)
            .ok_or_else(|| Error::parse(line, "missing node indices"))?
            .parse()
            .map_err(|e: Error| Error::parse(line, e.to_string()))?;
        if &node != tree.modes(id) {
            return Err(Error::parse(
                line,
                format!("expected TRANSFER for {} (pre-order), found {node}", tree.modes(id)),
            ));
        }
        let dims = h[2..].iter().map(|t| parse_count(line, t)).collect::<Result<Vec<_>>>()?;
        if dims.len() != 1 + tree.children(id).len() {
            return Err(Error::parse(line, format!("expected {} axis sizes", 1 + tree.children(id).len())));
        }
        let vals = r.scalars(dims.iter().product(), "TRANSFER values")?;
        transfers.push(DenseTensor::new(dims, vals)?);
    }
    r.finish()?;
    TbfTensor::new(tree, frames.into_iter().map(Option::unwrap).collect(), transfers)
}

/// `SOP d T`, then per term a weight line and `d` blocks `MAT n` + `n` rows.
pub fn write_sop(a: &SumOfProductsOperator) -> String {
    let mut out = format!("SOP {} {}\n", a.dims().len(), a.terms().len());
    for term in a.terms() {
        out.push_str(&fmt_scalar(term.weight));
        out.push('\n');
        for m in &term.factors {
            let _ = writeln!(out, "MAT {}", m.nrows());
            push_matrix(&mut out, m);
        }
    }
    out
}

pub fn parse_sop(text: &str) -> Result<SumOfProductsOperator> {
    let mut r = Reader::new(TreeLines::new(numbered(text)));
    let h = r.header("SOP header")?;
    let line = r.line;
    expect_keyword(line, &h, "SOP")?;
    if h.len() != 3 {
        return Err(Error::parse(line, "expected 'SOP d T'"));
    }
    let (d, count) = (parse_count(line, h[1])?, parse_count(line, h[2])?);
    let mut dims: Option<Vec<usize>> = None;
    let mut terms = Vec::with_capacity(count);
    for t in 0..count {
        let weight = r.scalars(1, "term weight")?[0];
        let mut factors = Vec::with_capacity(d);
        for _ in 0..d {
            let h = r.header("MAT header")?;
            let line = r.line;
            expect_keyword(line, &h, "MAT")?;
            if h.len() != 2 {
                return Err(Error::parse(line, "expected 'MAT n'"));
            }
            let n = parse_count(line, h[1])?;
            let vals = r.scalars(n * n, "MAT values")?;
            factors.push(Matrix::from_row_slice(n, n, &vals));
        }
        let these: Vec<usize> = factors.iter().map(|m| m.nrows()).collect();
        match &dims {
            Some(ds) if ds != &these => {
                return Err(Error::parse(r.line, format!("term {} has mode sizes {these:?}, expected {ds:?}", t + 1)));
            }
            _ => dims = Some(these),
        }
        terms.push(ProductTerm { weight, factors });
    }
    r.finish()?;
    let dims = dims.ok_or_else(|| Error::parse(line, "operator has no terms; mode sizes unknown"))?;
    SumOfProductsOperator::new(dims, terms)
}

/// One trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub lambda: f64,
    pub norm: f64,
    pub residual: f64,
}

/// One `t λ ‖v‖ residual` line per sample, after a `#` header line.
pub fn write_trajectory(points: &[TrajectoryPoint]) -> String {
    let mut out = String::from("# t lambda norm residual\n");
    for p in points {
        push_row(&mut out, [p.t, p.lambda, p.norm, p.residual]);
    }
    out
}

pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryPoint>> {
    let mut out = Vec::new();
    for (n, l) in numbered(text) {
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v = t.split_whitespace().map(|x| parse_scalar(n, x)).collect::<Result<Vec<_>>>()?;
        if v.len() != 4 {
            return Err(Error::parse(n, format!("expected 4 columns, found {}", v.len())));
        }
        out.push(TrajectoryPoint {
            t: v[0],
            lambda: v[1],
            norm: v[2],
            residual: v[3],
        });
    }
    Ok(out)
}
