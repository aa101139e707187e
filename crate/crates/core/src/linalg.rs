//! Dense matrix helpers on top of `nalgebra`: a sorted, sign-normalized SVD,
//! orthonormal frames, principal angles and conditioned solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative rank tolerance (`σ_i > tol · σ_max`).
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Thin SVD `m = u · diag(s) · vtᵀ`, singular values in decreasing order.
///
/// Each left singular vector is flipped so its first entry with magnitude
/// above `1e-14` is positive (the matching right vector flips with it).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub fn svd(m: &Matrix) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: Matrix::zeros(rows, 0),
            s: Vec::new(),
            v: Matrix::zeros(cols, 0),
        };
    }
    let (u, s, v) = if rows >= cols {
        jacobi_svd(m)
    } else {
        let (v, s, u) = jacobi_svd(&m.transpose());
        (u, s, v)
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut uo = Matrix::zeros(rows, k);
    let mut vo = Matrix::zeros(cols, k);
    let mut so = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut uc = u.column(src).into_owned();
        let mut vc = v.column(src).into_owned();
        if let Some(first) = uc.iter().find(|x| x.abs() > 1e-14) {
            if *first < 0.0 {
                uc.neg_mut();
                vc.neg_mut();
            }
        }
        uo.set_column(dst, &uc);
        vo.set_column(dst, &vc);
        so.push(s[src]);
    }
    Svd { u: uo, s: so, v: vo }
}

/// One-sided Jacobi SVD of a matrix with `rows >= cols`: columns are rotated
/// pairwise until mutually orthogonal, so every singular value carries full
/// relative accuracy. Left vectors of zero singular values are completed to
/// an orthonormal set.
fn jacobi_svd(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    const MAX_SWEEPS: usize = 80;
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = Matrix::identity(cols, cols);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (cp, cq) = (a.column(p), a.column(q));
                let alpha = cp.norm_squared();
                let beta = cq.norm_squared();
                let gamma = cp.dot(&cq);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s = Vec::with_capacity(cols);
    let mut u = Matrix::zeros(rows, cols);
    let mut missing = Vec::new();
    for j in 0..cols {
        let norm = a.column(j).norm();
        s.push(norm);
        if norm > 0.0 {
            u.set_column(j, &(a.column(j) / norm));
        } else {
            missing.push(j);
        }
    }
    // complete with canonical vectors orthogonalized against the others
    let mut e = 0;
    for j in missing {
        while e < rows {
            let mut x = Vector::zeros(rows);
            x[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for k in 0..cols {
                    if k != j {
                        let proj = u.column(k).dot(&x);
                        x -= u.column(k) * proj;
                    }
                }
            }
            let norm = x.norm();
            if norm > 0.5 {
                u.set_column(j, &(x / norm));
                break;
            }
        }
    }
    (u, s, v)
}

fn rotate_columns(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (xp, xq) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * xp - s * xq;
        m[(i, q)] = s * xp + c * xq;
    }
}

/// Number of singular values strictly above `tol · σ_max` (0 when `σ_max = 0`).
pub fn numerical_rank(s: &[f64], tol: f64) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    s.iter().take_while(|&&x| x > tol * smax).count()
}

/// Basis of a subspace, stored column-wise (`ambient_dim × rank`).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    basis: Matrix,
    orthonormal: bool,
}

impl Frame {
    /// Wraps a basis; the orthonormal flag is computed (Gram deviation ≤ 1e-12).
    pub fn new(basis: Matrix) -> Self {
        let orthonormal = is_orthonormal(&basis, 1e-12);
        Frame { basis, orthonormal }
    }

    pub(crate) fn new_unchecked(basis: Matrix, orthonormal: bool) -> Self {
        Frame { basis, orthonormal }
    }

    pub fn empty(ambient: usize) -> Self {
        Frame {
            basis: Matrix::zeros(ambient, 0),
            orthonormal: true,
        }
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn into_basis(self) -> Matrix {
        self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Orthonormal basis of the orthogonal complement of the span.
    pub fn orthogonal_complement(&self) -> Frame {
        let n = self.ambient_dim();
        let q = if self.orthonormal { self.basis.clone() } else { orthonormalize(&self.basis) };
        let r = q.ncols();
        if r == 0 {
            return Frame::new_unchecked(Matrix::identity(n, n), true);
        }
        // projector complement, then its dominant left singular vectors
        let p = Matrix::identity(n, n) - &q * q.transpose();
        let d = svd(&p);
        let w = d.u.columns(0, n - r).into_owned();
        Frame::new_unchecked(w, true)
    }
}

pub fn is_orthonormal(m: &Matrix, tol: f64) -> bool {
    let g = m.transpose() * m;
    let k = g.nrows();
    (g - Matrix::identity(k, k)).amax() <= tol
}

/// Smallest relative tolerance that can separate rank from rounding noise
/// for a matrix of this shape.
pub fn rank_floor(m: &Matrix) -> f64 {
    m.nrows().max(m.ncols()) as f64 * f64::EPSILON
}

/// Orthonormal frame spanning the columns of `m`; rank counts singular values
/// above `max(tol, rank_floor(m)) · σ_max`.
pub fn column_space(m: &Matrix, tol: f64) -> Frame {
    let d = svd(m);
    let r = numerical_rank(&d.s, tol.max(rank_floor(m)));
    Frame::new_unchecked(d.u.columns(0, r).into_owned(), true)
}

/// Column space truncated to at most `cap` vectors, with the singular values
/// of `m` returned alongside.
pub(crate) fn column_space_capped(m: &Matrix, tol: f64, cap: Option<usize>) -> (Frame, Vec<f64>) {
    let d = svd(m);
    let mut r = numerical_rank(&d.s, tol.max(rank_floor(m)));
    if let Some(c) = cap {
        r = r.min(c);
    }
    (Frame::new_unchecked(d.u.columns(0, r).into_owned(), true), d.s)
}

/// Orthonormal basis for the span of the columns (full column rank assumed).
pub fn orthonormalize(m: &Matrix) -> Matrix {
    if m.ncols() == 0 {
        return m.clone();
    }
    let qr = m.clone().qr();
    let q = qr.q();
    q.columns(0, m.ncols().min(m.nrows())).into_owned()
}

/// Cosines of the principal angles between the spans of two orthonormal
/// frames, in decreasing order.
pub fn principal_cosines(a: &Matrix, b: &Matrix) -> Vec<f64> {
    if a.ncols() == 0 || b.ncols() == 0 {
        return Vec::new();
    }
    svd(&(a.transpose() * b)).s.into_iter().map(|c| c.min(1.0)).collect()
}

/// Principal angles (radians, increasing) between two orthonormal frames.
///
/// Angles below `π/4` come from the sines `σ((I − AAᵀ)B)`, which keeps them
/// accurate near zero where `acos` loses half the digits.
pub fn principal_angles(a: &Matrix, b: &Matrix) -> Vec<f64> {
    // sines are only paired with cosines when B is the smaller frame
    let (a, b) = if a.ncols() < b.ncols() { (b, a) } else { (a, b) };
    let cos = principal_cosines(a, b);
    let mut sin = svd(&(b - a * (a.transpose() * b))).s;
    sin.reverse();
    cos.iter()
        .zip(&sin)
        .map(|(&c, &s)| if c * c > 0.5 { s.min(1.0).asin() } else { c.acos() })
        .collect()
}

/// Largest principal angle measured as `‖(I − BBᵀ)A‖₂`, which stays accurate
/// for tiny angles. Returns `π/2`-like value 1.0 when dimensions differ.
pub fn subspace_distance(a: &Matrix, b: &Matrix) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let resid = a - b * (b.transpose() * a);
    spectral_norm(&resid)
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    svd(m).s[0]
}

/// 2-norm condition number `σ_max / σ_min` of a square matrix.
pub fn condition_number(m: &Matrix) -> f64 {
    let s = svd(m).s;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Solves `a x = b` for square `a`, refusing when the condition number
/// exceeds `limit`.
pub fn solve_conditioned(a: &Matrix, b: &Matrix, limit: f64, context: &str) -> Result<Matrix> {
    let cond = condition_number(a);
    if !(cond <= limit) {
        return Err(Error::IllConditioned {
            condition: cond,
            limit,
            context: context.to_string(),
        });
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::IllConditioned {
        condition: f64::INFINITY,
        limit,
        context: context.to_string(),
    })
}

/// Moore–Penrose pseudo-inverse with relative cutoff `tol`.
pub fn pseudo_inverse(m: &Matrix, tol: f64) -> Matrix {
    let d = svd(m);
    let r = numerical_rank(&d.s, tol);
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for i in 0..r {
        out += d.v.column(i) * d.u.column(i).transpose() / d.s[i];
    }
    out
}
