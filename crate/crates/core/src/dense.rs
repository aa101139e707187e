//! Dense order-d tensors in row-major layout (last mode fastest).
//!
//! This is the ground-truth layer: every tree-format operation can be checked
//! against an explicit dense computation built from the routines here.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{column_space, svd, Frame, Matrix, Vector};
use crate::tree::ModeSet;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} values for dims {:?} (expected {n})",
                data.len(),
                dims
            )));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite entry at flat index {bad}")));
        }
        Ok(DenseTensor { dims, data })
    }

    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        DenseTensor { dims, data }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        DenseTensor {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        let mut idx = vec![0; dims.len()];
        for flat in 0..t.data.len() {
            t.data[flat] = f(&idx);
            for k in (0..dims.len()).rev() {
                idx[k] += 1;
                if idx[k] < dims[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        t
    }

    /// Entries drawn i.i.d. from the standard normal distribution.
    pub fn random(dims: &[usize], rng: &mut impl Rng) -> Self {
        let n = dims.iter().product();
        DenseTensor {
            dims: dims.to_vec(),
            data: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }

    /// Outer product `v_1 ⊗ … ⊗ v_d`.
    pub fn elementary(factors: &[Vector]) -> Self {
        let dims: Vec<usize> = factors.iter().map(|f| f.len()).collect();
        Self::from_fn(&dims, |idx| idx.iter().zip(factors).map(|(&i, f)| f[i]).product())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let s = strides(&self.dims);
        self.data[idx.iter().zip(&s).map(|(i, s)| i * s).sum::<usize>()]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    fn check_same_dims(&self, other: &DenseTensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> DenseTensor {
        DenseTensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: f64, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_dims(other)?;
        Ok(DenseTensor {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(x, y)| x + a * y).collect(),
        })
    }

    pub(crate) fn add_assign_scaled(&mut self, a: f64, other: &DenseTensor) {
        debug_assert_eq!(self.dims, other.dims);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.axpy(-1.0, other)
    }

    /// Same data with new dimensions (same total size).
    pub fn reshape(&self, dims: Vec<usize>) -> Result<DenseTensor> {
        if dims.iter().product::<usize>() != self.data.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        Ok(DenseTensor {
            dims,
            data: self.data.clone(),
        })
    }

    /// Axis permutation: axis `k` of the result is axis `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> DenseTensor {
        assert_eq!(perm.len(), self.order());
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return self.clone();
        }
        let src_strides = strides(&self.dims);
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let walk: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; new_dims.len()];
        let mut off = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[off]);
            for k in (0..new_dims.len()).rev() {
                idx[k] += 1;
                off += walk[k];
                if idx[k] < new_dims[k] {
                    break;
                }
                off -= walk[k] * new_dims[k];
                idx[k] = 0;
            }
        }
        DenseTensor {
            dims: new_dims,
            data: out,
        }
    }

    /// Unfolding with rows indexed by `row_axes` (in the given order, row-major)
    /// and columns by the remaining axes in increasing order.
    pub fn unfold(&self, row_axes: &[usize]) -> Matrix {
        let mut perm = row_axes.to_vec();
        perm.extend((0..self.order()).filter(|a| !row_axes.contains(a)));
        let rows: usize = row_axes.iter().map(|&a| self.dims[a]).product();
        let cols = if rows == 0 { 0 } else { self.data.len() / rows.max(1) };
        let cols = if self.data.is_empty() {
            (0..self.order()).filter(|a| !row_axes.contains(a)).map(|a| self.dims[a]).product()
        } else {
            cols
        };
        let p = self.permute(&perm);
        Matrix::from_row_slice(rows, cols, &p.data)
    }

    /// Inverse of [`unfold`](Self::unfold): `dims` are the dimensions of the
    /// tensor to rebuild.
    pub fn fold(m: &Matrix, dims: &[usize], row_axes: &[usize]) -> DenseTensor {
        let mut perm = row_axes.to_vec();
        perm.extend((0..dims.len()).filter(|a| !row_axes.contains(a)));
        let permuted_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        let t = DenseTensor {
            dims: permuted_dims,
            data,
        };
        let mut inv = vec![0; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        t.permute(&inv)
    }

    /// Mode product along `axis`: replaces that axis (size `n`) by `mat · (·)`
    /// with `mat` of shape `m × n`.
    pub fn mode_product(&self, axis: usize, mat: &Matrix) -> DenseTensor {
        assert_eq!(mat.ncols(), self.dims[axis], "mode product size mismatch");
        let m = self.unfold(&[axis]);
        let prod = mat * m;
        let mut dims = self.dims.clone();
        dims[axis] = mat.nrows();
        Self::fold(&prod, &dims, &[axis])
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.data)
    }

    /// Maximum absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `M_β` for a tensor whose axes carry the modes of `alpha` (increasing):
/// rows over `beta`, columns over `alpha ∖ beta`.
pub fn matricize(v: &DenseTensor, beta: &ModeSet, alpha: &ModeSet) -> Result<Matrix> {
    if v.order() != alpha.len() {
        return Err(Error::DimensionMismatch(format!(
            "tensor of order {} does not carry the {} modes of {alpha}",
            v.order(),
            alpha.len()
        )));
    }
    let rows = beta
        .positions_in(alpha)
        .ok_or_else(|| Error::InvalidArgument(format!("{beta} is not a subset of {alpha}")))?;
    Ok(v.unfold(&rows))
}

/// Row-space unfolding of a full tensor at `alpha` (columns over `D ∖ alpha`).
pub fn unfold_modes(v: &DenseTensor, alpha: &ModeSet) -> Result<Matrix> {
    matricize(v, alpha, &ModeSet::full(v.order()))
}

/// `(id_keep ⊗ φ)(v)`: contracts every mode outside `keep` against `phi`,
/// whose axes are the complementary modes in increasing order.
pub fn contract_functional(v: &DenseTensor, keep: &ModeSet, phi: &DenseTensor) -> Result<DenseTensor> {
    let full = ModeSet::full(v.order());
    let rest = keep.complement_in(&full);
    if keep.indices().iter().any(|&j| j >= v.order()) {
        return Err(Error::InvalidArgument(format!("{keep} exceeds tensor order {}", v.order())));
    }
    let expect: Vec<usize> = rest.iter().map(|&j| v.dims()[j]).collect();
    if phi.dims() != expect.as_slice() {
        return Err(Error::DimensionMismatch(format!(
            "functional dims {:?}, complementary modes need {:?}",
            phi.dims(),
            expect
        )));
    }
    let m = unfold_modes(v, keep)?;
    let out = m * phi.to_vector();
    let dims: Vec<usize> = keep.indices().iter().map(|&j| v.dims()[j]).collect();
    Ok(DenseTensor::from_parts(dims, out.as_slice().to_vec()))
}

/// Orthonormal basis of the minimal subspace `U_α^min(v)`: the column space
/// of the α-unfolding.
pub fn minimal_subspace(v: &DenseTensor, alpha: &ModeSet, tol: f64) -> Result<Frame> {
    Ok(column_space(&unfold_modes(v, alpha)?, tol))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectiveNorm {
    pub value: f64,
    /// `true` for order ≤ 2 (largest singular value); otherwise `value` is a
    /// lower bound found by alternating rank-one maximization.
    pub exact: bool,
}

/// Injective norm `sup |⟨v, x_1 ⊗ … ⊗ x_d⟩|` over unit vectors.
pub fn injective_norm(v: &DenseTensor, max_iters: usize, seed: u64) -> InjectiveNorm {
    match v.order() {
        0 => InjectiveNorm {
            value: v.data.first().map_or(0.0, |x| x.abs()),
            exact: true,
        },
        1 => InjectiveNorm {
            value: v.frobenius_norm(),
            exact: true,
        },
        2 => InjectiveNorm {
            value: svd(&v.unfold(&[0])).s.first().copied().unwrap_or(0.0),
            exact: true,
        },
        d => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut best = 0.0f64;
            // start 0: leading left singular vectors of each unfolding
            let mut starts: Vec<Vec<Vector>> = vec![(0..d)
                .map(|k| {
                    let u = svd(&v.unfold(&[k])).u;
                    if u.ncols() == 0 {
                        Vector::zeros(v.dims[k])
                    } else {
                        u.column(0).into_owned()
                    }
                })
                .collect()];
            for _ in 0..8 {
                starts.push(
                    (0..d)
                        .map(|k| {
                            let x = Vector::from_fn(v.dims[k], |_, _| rng.sample(StandardNormal));
                            let n = x.norm();
                            x / n
                        })
                        .collect(),
                );
            }
            for mut xs in starts {
                let mut prev = 0.0;
                for _ in 0..max_iters.max(1) {
                    let mut val = 0.0;
                    for k in 0..d {
                        let g = partial_contraction(v, &xs, k);
                        val = g.norm();
                        if val == 0.0 {
                            break;
                        }
                        xs[k] = g / val;
                    }
                    if (val - prev).abs() <= 1e-15 * val.max(1.0) {
                        prev = val;
                        break;
                    }
                    prev = val;
                }
                best = best.max(prev);
            }
            InjectiveNorm {
                value: best,
                exact: false,
            }
        }
    }
}

// Contracts every mode except `keep` against the matching vector.
fn partial_contraction(v: &DenseTensor, xs: &[Vector], keep: usize) -> Vector {
    let mut t = v.clone();
    for k in (0..v.order()).rev() {
        if k == keep {
            continue;
        }
        t = t.mode_product(k, &Matrix::from_row_slice(1, xs[k].len(), xs[k].as_slice()));
    }
    Vector::from_column_slice(&t.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn ms(v: &[usize]) -> ModeSet {
        ModeSet::from_one_based(v.iter().copied()).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(DenseTensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(DenseTensor::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn delta_tensor_matricization() {
        let v = DenseTensor::from_fn(&[2, 2, 2], |i| if i == [0, 0, 0] { 1.0 } else { 0.0 });
        let m = matricize(&v, &ms(&[1]), &ms(&[1, 2, 3])).unwrap();
        assert_eq!(m.shape(), (2, 4));
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn full_matricization_is_vectorization() {
        let v = DenseTensor::random(&[2, 3, 2], &mut rng());
        let m = matricize(&v, &ms(&[1, 2, 3]), &ms(&[1, 2, 3])).unwrap();
        assert_eq!(m.shape(), (12, 1));
        assert_eq!(m.as_slice(), v.data());
    }

    #[test]
    fn matricization_matches_index_enumeration() {
        let v = DenseTensor::random(&[2, 3, 2], &mut rng());
        for beta in [vec![1], vec![2], vec![3], vec![1, 3], vec![2, 3]] {
            let b = ms(&beta);
            let m = matricize(&v, &b, &ms(&[1, 2, 3])).unwrap();
            let rest = b.complement_in(&ModeSet::full(3));
            // walk all multi-indices and place them by the row-major bijection
            let dims = v.dims();
            for i0 in 0..dims[0] {
                for i1 in 0..dims[1] {
                    for i2 in 0..dims[2] {
                        let idx = [i0, i1, i2];
                        let mut r = 0;
                        for &j in b.indices() {
                            r = r * dims[j] + idx[j];
                        }
                        let mut c = 0;
                        for &j in &rest {
                            c = c * dims[j] + idx[j];
                        }
                        assert_eq!(m[(r, c)], v.get(&idx));
                    }
                }
            }
            let back = DenseTensor::fold(&m, dims, b.indices());
            assert_eq!(back, v);
        }
        assert!(matricize(&v, &ms(&[4]), &ms(&[1, 2, 3])).is_err());
    }

    #[test]
    fn contraction_of_elementary_tensor() {
        let a = Vector::from_vec(vec![1.0, 2.0]);
        let b = Vector::from_vec(vec![3.0, -1.0, 0.5]);
        let c = Vector::from_vec(vec![0.5, 2.0, 4.0]);
        let v = DenseTensor::elementary(&[a.clone(), b.clone()]);
        let phi = DenseTensor::elementary(std::slice::from_ref(&c));
        let r = contract_functional(&v, &ms(&[1]), &phi).unwrap();
        let expect = a * b.dot(&c);
        assert!((r.to_vector() - expect).amax() < 1e-15);

        let zero = DenseTensor::zeros(&[3]);
        assert_eq!(contract_functional(&v, &ms(&[1]), &zero).unwrap().frobenius_norm(), 0.0);
        assert!(contract_functional(&v, &ms(&[1]), &DenseTensor::zeros(&[2])).is_err());
    }

    #[test]
    fn contraction_matches_matricization() {
        let mut r = rng();
        let v = DenseTensor::random(&[2, 3, 4], &mut r);
        let phi = DenseTensor::random(&[2, 4], &mut r);
        let got = contract_functional(&v, &ms(&[2]), &phi).unwrap();
        let m = matricize(&v, &ms(&[2]), &ms(&[1, 2, 3])).unwrap();
        let expect = m * phi.to_vector();
        assert!((got.to_vector() - expect).amax() < 1e-13);
    }

    #[test]
    fn inner_products() {
        let e1 = Vector::from_vec(vec![1.0, 0.0]);
        let t = DenseTensor::elementary(&[e1.clone(), e1.clone()]);
        assert_eq!(t.inner(&t).unwrap(), 1.0);
        assert_eq!(DenseTensor::zeros(&[3, 2]).frobenius_norm(), 0.0);

        let mut r = rng();
        let vs: Vec<Vector> = (0..4).map(|_| Vector::from_fn(3, |_, _| r.sample(StandardNormal))).collect();
        let x = DenseTensor::elementary(&[vs[0].clone(), vs[1].clone()]);
        let y = DenseTensor::elementary(&[vs[2].clone(), vs[3].clone()]);
        let mut direct = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                direct += x.get(&[i, j]) * y.get(&[i, j]);
            }
        }
        let ip = x.inner(&y).unwrap();
        assert!((ip - direct).abs() < 1e-13);
        assert!((ip - vs[0].dot(&vs[2]) * vs[1].dot(&vs[3])).abs() < 1e-13);
        assert!(x.inner(&DenseTensor::zeros(&[3])).is_err());
    }

    #[test]
    fn minimal_subspace_examples() {
        let e = |i: usize| Vector::from_fn(2, |k, _| if k == i { 1.0 } else { 0.0 });
        let v = DenseTensor::elementary(&[e(0), e(0), e(0)])
            .axpy(1.0, &DenseTensor::elementary(&[e(1), e(1), e(1)]))
            .unwrap();
        let f = minimal_subspace(&v, &ms(&[2, 3]), 1e-10).unwrap();
        assert_eq!(f.rank(), 2);
        // span{e1⊗e1, e2⊗e2} in the row-major (i2, i3) layout
        let expect = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(crate::linalg::subspace_distance(f.basis(), &expect) < 1e-12);

        let a = Vector::from_vec(vec![1.0, 2.0]);
        let b = Vector::from_vec(vec![0.0, 1.0, -1.0]);
        let c = Vector::from_vec(vec![2.0, 1.0]);
        let el = DenseTensor::elementary(&[a, b, c]);
        for alpha in [ms(&[1]), ms(&[2, 3]), ms(&[1, 3])] {
            assert_eq!(minimal_subspace(&el, &alpha, 1e-10).unwrap().rank(), 1);
        }
        let z = DenseTensor::zeros(&[2, 3]);
        assert_eq!(minimal_subspace(&z, &ms(&[1]), 1e-10).unwrap().rank(), 0);
    }

    #[test]
    fn injective_norm_examples() {
        let v = DenseTensor::new(vec![2, 2], vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let n = injective_norm(&v, 50, 0);
        assert!(n.exact);
        assert!((n.value - 3.0).abs() < 1e-14);

        let f = [
            Vector::from_vec(vec![1.0, 2.0]),
            Vector::from_vec(vec![0.5, 0.5, 1.0]),
            Vector::from_vec(vec![3.0, 0.0]),
        ];
        let el = DenseTensor::elementary(&f);
        let n = injective_norm(&el, 100, 0);
        assert!(!n.exact);
        let expect: f64 = f.iter().map(|x| x.norm()).product();
        assert!((n.value - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn permute_and_mode_product() {
        let v = DenseTensor::random(&[2, 3, 4], &mut rng());
        let p = v.permute(&[2, 0, 1]);
        assert_eq!(p.dims(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]), v.get(&[1, 2, 3]));
        let m = Matrix::from_fn(5, 3, |i, j| (i + 2 * j) as f64);
        let w = v.mode_product(1, &m);
        assert_eq!(w.dims(), &[2, 5, 4]);
        let mut e = 0.0;
        for k in 0..3 {
            e += m[(4, k)] * v.get(&[1, k, 2]);
        }
        assert!((w.get(&[1, 4, 2]) - e).abs() < 1e-13);
    }
}
