//! Dirac–Frenkel integration: the time-dependent Hartree method on rank-one
//! tensors and a tangent-projected integrator for any fixed TB rank.

use std::str::FromStr;

use crate::dense::DenseTensor;
use crate::error::{Error, Result};
use crate::geometry::{chart_decode, project_tangent_at, ChartParams, TangentParams};
use crate::linalg::{Matrix, Vector};
use crate::tbf::{check_full_rank, TbfTensor};
use crate::tree::DimensionTree;

/// Relative singular value below which a transfer matricization counts as
/// degenerate during tangent-projected integration.
pub const RANK_DEGENERACY_THRESHOLD: f64 = 1e-8;

/// One elementary term `weight · A_1 ⊗ … ⊗ A_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTerm {
    pub weight: f64,
    pub factors: Vec<Matrix>,
}

/// Linear operator `Σ_t w_t A_1^(t) ⊗ … ⊗ A_d^(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumOfProductsOperator {
    dims: Vec<usize>,
    terms: Vec<ProductTerm>,
}

impl SumOfProductsOperator {
    pub fn new(dims: Vec<usize>, terms: Vec<ProductTerm>) -> Result<Self> {
        for (t, term) in terms.iter().enumerate() {
            if term.factors.len() != dims.len() {
                return Err(Error::DimensionMismatch(format!(
                    "term {} has {} factors for {} modes",
                    t + 1,
                    term.factors.len(),
                    dims.len()
                )));
            }
            for (j, a) in term.factors.iter().enumerate() {
                if a.shape() != (dims[j], dims[j]) {
                    return Err(Error::DimensionMismatch(format!(
                        "term {} factor {} is {}x{}, mode size is {}",
                        t + 1,
                        j + 1,
                        a.nrows(),
                        a.ncols(),
                        dims[j]
                    )));
                }
            }
            if !term.weight.is_finite() || term.factors.iter().any(|a| a.iter().any(|x| !x.is_finite())) {
                return Err(Error::InvalidArgument(format!("term {} has non-finite entries", t + 1)));
            }
        }
        Ok(SumOfProductsOperator { dims, terms })
    }

    /// `I ⊗ … ⊗ I`.
    pub fn identity(dims: &[usize]) -> Self {
        let factors = dims.iter().map(|&n| Matrix::identity(n, n)).collect();
        SumOfProductsOperator {
            dims: dims.to_vec(),
            terms: vec![ProductTerm { weight: 1.0, factors }],
        }
    }

    /// `Σ_j I ⊗ … ⊗ A_j ⊗ … ⊗ I`.
    pub fn separable(site: Vec<Matrix>) -> Result<Self> {
        let dims: Vec<usize> = site.iter().map(|a| a.nrows()).collect();
        let terms = site
            .into_iter()
            .enumerate()
            .map(|(j, a)| {
                let mut factors: Vec<Matrix> = dims.iter().map(|&n| Matrix::identity(n, n)).collect();
                factors[j] = a;
                ProductTerm { weight: 1.0, factors }
            })
            .collect();
        Self::new(dims, terms)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }

    pub fn apply(&self, v: &DenseTensor) -> Result<DenseTensor> {
        if v.dims() != self.dims.as_slice() {
            return Err(Error::DimensionMismatch(format!("operator on {:?} applied to {:?}", self.dims, v.dims())));
        }
        let mut out = DenseTensor::zeros(&self.dims);
        for term in &self.terms {
            let mut t = v.clone();
            for (j, a) in term.factors.iter().enumerate() {
                t = t.mode_product(j, a);
            }
            out.add_assign_scaled(term.weight, &t);
        }
        Ok(out)
    }

    /// `⟨A(⊗v_j), ⊗v_j⟩` without forming the dense tensor.
    pub fn expectation(&self, factors: &[Vector]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * t.factors.iter().zip(factors).map(|(a, v)| (a * v).dot(v)).product::<f64>())
            .sum()
    }

    /// Upper bound on the operator 2-norm: `Σ_t |w_t| ∏_j ‖A_j^(t)‖_F`.
    pub fn norm_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight.abs() * t.factors.iter().map(|a| a.norm()).product::<f64>())
            .sum()
    }
}

/// `apply_operator(A, v) = A v`.
pub fn apply_operator(a: &SumOfProductsOperator, v: &DenseTensor) -> Result<DenseTensor> {
    a.apply(v)
}

/// Rank-one state `λ · v_1 ⊗ … ⊗ v_d` with unit factors.
#[derive(Debug, Clone, PartialEq)]
pub struct HartreeState {
    pub t: f64,
    pub lambda: f64,
    pub factors: Vec<Vector>,
}

impl HartreeState {
    /// Normalizes the factors, moving their norms into `λ`.
    pub fn new(t: f64, lambda: f64, factors: Vec<Vector>) -> Result<Self> {
        let mut lambda = lambda;
        let mut out = Vec::with_capacity(factors.len());
        for (j, v) in factors.into_iter().enumerate() {
            let n = v.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidArgument(format!("factor {} has norm {n}", j + 1)));
            }
            lambda *= n;
            out.push(v / n);
        }
        Ok(HartreeState {
            t,
            lambda,
            factors: out,
        })
    }

    /// Reads a rank-one tensor in tree-based format.
    pub fn from_tbf(x: &TbfTensor, t: f64) -> Result<Self> {
        if x.ranks().as_slice().iter().any(|&r| r != 1) {
            return Err(Error::RankMismatch(format!(
                "Hartree states are rank one, got {}",
                x.ranks().display(x.tree())
            )));
        }
        let lambda: f64 = x.transfers().iter().map(|c| c.data()[0]).product();
        let factors = x.frames().iter().map(|f| f.column(0).into_owned()).collect();
        Self::new(t, lambda, factors)
    }

    pub fn to_tbf(&self, tree: &DimensionTree) -> Result<TbfTensor> {
        let frames = self.factors.iter().map(|v| Matrix::from_column_slice(v.len(), 1, v.as_slice())).collect();
        let transfers = tree
            .internal_nodes()
            .map(|id| {
                let val = if id == tree.root() { self.lambda } else { 1.0 };
                DenseTensor::from_parts(vec![1; 1 + tree.children(id).len()], vec![val])
            })
            .collect();
        TbfTensor::new(tree.clone(), frames, transfers)
    }

    pub fn to_dense(&self) -> DenseTensor {
        DenseTensor::elementary(&self.factors).scaled(self.lambda)
    }
}

/// Mean-field matrix `Ā_j = Σ_t w_t (∏_{k≠j} ⟨A_k v_k, v_k⟩) A_j`.
pub fn mean_field(a: &SumOfProductsOperator, factors: &[Vector], j: usize) -> Matrix {
    let n = a.dims()[j];
    let mut out = Matrix::zeros(n, n);
    for term in a.terms() {
        let coef: f64 = term
            .factors
            .iter()
            .zip(factors)
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, (ak, vk))| (ak * vk).dot(vk))
            .product();
        out += &term.factors[j] * (term.weight * coef);
    }
    out
}

/// Time derivatives of a Hartree state.
#[derive(Debug, Clone, PartialEq)]
pub struct HartreeRhs {
    pub lambda_dot: f64,
    pub factor_dots: Vec<Vector>,
}

/// `v̇_j = (I − v_j v_jᵀ) Ā_j v_j` and `λ̇ = ⟨A(⊗v), ⊗v⟩ λ`.
pub fn hartree_rhs(a: &SumOfProductsOperator, state: &HartreeState) -> HartreeRhs {
    let factor_dots = (0..state.factors.len())
        .map(|j| {
            let v = &state.factors[j];
            let g = mean_field(a, &state.factors, j) * v;
            let along = g.dot(v);
            g - v * along
        })
        .collect();
    HartreeRhs {
        lambda_dot: a.expectation(&state.factors) * state.lambda,
        factor_dots,
    }
}

/// Dense tangent vector `λ̇ ⊗v + λ Σ_j v_1 ⊗ … v̇_j … ⊗ v_d`.
pub fn hartree_velocity(state: &HartreeState, rhs: &HartreeRhs) -> DenseTensor {
    let mut out = DenseTensor::elementary(&state.factors).scaled(rhs.lambda_dot);
    for j in 0..state.factors.len() {
        let mut f = state.factors.clone();
        f[j] = rhs.factor_dots[j].clone();
        out.add_assign_scaled(state.lambda, &DenseTensor::elementary(&f));
    }
    out
}

/// Explicit time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(Scheme::Rk4),
            "euler" => Ok(Scheme::Euler),
            other => Err(Error::InvalidArgument(format!("unknown scheme '{other}' (rk4 or euler)"))),
        }
    }
}

/// Step times `0 = t_0 < … < t_n = t_end` with spacing `dt` (last one shorter).
fn step_times(t0: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if !(t_end >= t0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!("end time {t_end} precedes start {t0}")));
    }
    let n = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times: Vec<f64> = (0..n).map(|k| t0 + k as f64 * dt).collect();
    times.push(t_end);
    Ok(times)
}

fn advance(state: &HartreeState, h: f64, k: &HartreeRhs) -> HartreeState {
    HartreeState {
        t: state.t + h,
        lambda: state.lambda + h * k.lambda_dot,
        factors: state.factors.iter().zip(&k.factor_dots).map(|(v, d)| v + d * h).collect(),
    }
}

fn combine(ks: &[(&HartreeRhs, f64)]) -> HartreeRhs {
    let mut out = HartreeRhs {
        lambda_dot: 0.0,
        factor_dots: ks[0].0.factor_dots.iter().map(|v| Vector::zeros(v.len())).collect(),
    };
    for (k, w) in ks {
        out.lambda_dot += w * k.lambda_dot;
        for (o, d) in out.factor_dots.iter_mut().zip(&k.factor_dots) {
            *o += d * *w;
        }
    }
    out
}

/// One explicit step of size `h` followed by renormalization of the factors
/// (`λ` is left as integrated).
pub fn hartree_step(a: &SumOfProductsOperator, state: &HartreeState, h: f64, scheme: Scheme) -> HartreeState {
    let k1 = hartree_rhs(a, state);
    let mut next = match scheme {
        Scheme::Euler => advance(state, h, &k1),
        Scheme::Rk4 => {
            let k2 = hartree_rhs(a, &advance(state, h / 2.0, &k1));
            let k3 = hartree_rhs(a, &advance(state, h / 2.0, &k2));
            let k4 = hartree_rhs(a, &advance(state, h, &k3));
            let k = combine(&[(&k1, 1.0 / 6.0), (&k2, 1.0 / 3.0), (&k3, 1.0 / 3.0), (&k4, 1.0 / 6.0)]);
            advance(state, h, &k)
        }
    };
    for v in &mut next.factors {
        let n = v.norm();
        *v /= n;
    }
    next
}

/// Hartree trajectory from `state0.t` to `t_end`, including both endpoints.
pub fn integrate_hartree(
    a: &SumOfProductsOperator,
    state0: &HartreeState,
    t_end: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<Vec<HartreeState>> {
    if state0.factors.iter().map(|v| v.len()).ne(a.dims().iter().copied()) {
        return Err(Error::DimensionMismatch(format!("state does not match operator dims {:?}", a.dims())));
    }
    let times = step_times(state0.t, t_end, dt)?;
    let mut out = Vec::with_capacity(times.len());
    out.push(state0.clone());
    for w in times.windows(2) {
        let mut next = hartree_step(a, out.last().unwrap(), w[1] - w[0], scheme);
        next.t = w[1];
        out.push(next);
    }
    Ok(out)
}

/// Right-hand side `F(t, x)` of a tensor ODE, evaluated densely.
pub trait VectorField {
    fn eval(&self, t: f64, x: &DenseTensor) -> Result<DenseTensor>;
}

impl VectorField for SumOfProductsOperator {
    fn eval(&self, _t: f64, x: &DenseTensor) -> Result<DenseTensor> {
        self.apply(x)
    }
}

/// Adapter for closures `F(t, x)`.
pub struct FnField<F>(pub F);

impl<F: Fn(f64, &DenseTensor) -> DenseTensor> VectorField for FnField<F> {
    fn eval(&self, t: f64, x: &DenseTensor) -> Result<DenseTensor> {
        Ok((self.0)(t, x))
    }
}

/// One accepted state of the tangent-projected integrator.
#[derive(Debug, Clone)]
pub struct TangentSample {
    pub t: f64,
    pub state: TbfTensor,
    /// `‖F(t, x) − ẋ‖` with `ẋ` the tangent projection of `F` at `x`.
    pub residual: f64,
}

/// Projected velocity in chart coordinates at `p`, with the dense vector
/// field and its projection.
fn chart_velocity(
    f: &impl VectorField,
    base: &TbfTensor,
    p: &ChartParams,
    t: f64,
) -> Result<(TangentParams, f64)> {
    let x = chart_decode(base, p)?.evaluate();
    let fx = f.eval(t, &x)?;
    let (proj, coords) = project_tangent_at(base, p, &fx)?;
    Ok((coords, fx.sub(&proj)?.frobenius_norm()))
}

fn check_rank(x: &TbfTensor) -> Result<()> {
    let report = check_full_rank(x, 0.0);
    if let Some(w) = report.weakest() {
        if w.relative_sigma_min < RANK_DEGENERACY_THRESHOLD {
            return Err(Error::RankDegeneracy {
                node: format!("{} (axis {})", x.tree().modes(w.node), w.axis),
                sigma: w.relative_sigma_min,
                threshold: RANK_DEGENERACY_THRESHOLD,
            });
        }
    }
    Ok(())
}

/// Dirac–Frenkel integration on the manifold of fixed TB rank: each step
/// re-centres the chart at the current point, integrates the least-squares
/// chart velocity with the chosen scheme, decodes and re-orthonormalizes.
pub fn integrate_tangent_projected(
    f: &impl VectorField,
    x0: &TbfTensor,
    t0: f64,
    t_end: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<Vec<TangentSample>> {
    let times = step_times(t0, t_end, dt)?;
    let mut x = x0.orthonormalize()?;
    if x.is_zero() {
        return Err(Error::InvalidArgument("the zero tensor is not a manifold point".into()));
    }
    check_rank(&x)?;
    let mut out = Vec::with_capacity(times.len());
    for w in times.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let p0 = ChartParams::origin(&x);
        let (k1, residual) = chart_velocity(f, &x, &p0, t)?;
        out.push(TangentSample {
            t,
            state: x.clone(),
            residual,
        });
        let p1 = match scheme {
            Scheme::Euler => p0.axpy(h, &k1),
            Scheme::Rk4 => {
                let (k2, _) = chart_velocity(f, &x, &p0.axpy(h / 2.0, &k1), t + h / 2.0)?;
                let (k3, _) = chart_velocity(f, &x, &p0.axpy(h / 2.0, &k2), t + h / 2.0)?;
                let (k4, _) = chart_velocity(f, &x, &p0.axpy(h, &k3), t + h)?;
                p0.axpy(h / 6.0, &k1)
                    .axpy(h / 3.0, &k2)
                    .axpy(h / 3.0, &k3)
                    .axpy(h / 6.0, &k4)
            }
        };
        x = chart_decode(&x, &p1)?.orthonormalize()?;
        check_rank(&x)?;
    }
    let t = *times.last().unwrap();
    let (_, residual) = chart_velocity(f, &x, &ChartParams::origin(&x), t)?;
    out.push(TangentSample { t, state: x, residual });
    Ok(out)
}

/// `exp(t A) x` by scaling and a truncated Taylor series on the dense tensor.
pub fn expm_action(a: &SumOfProductsOperator, x: &DenseTensor, t: f64) -> Result<DenseTensor> {
    let bound = a.norm_bound() * t.abs();
    let steps = (bound / 0.5).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut y = x.clone();
    for _ in 0..steps {
        let mut term = y.clone();
        let mut acc = y.clone();
        for k in 1..60 {
            term = a.apply(&term)?.scaled(h / k as f64);
            acc.add_assign_scaled(1.0, &term);
            if term.frobenius_norm() <= 1e-18 * acc.frobenius_norm() {
                break;
            }
        }
        y = acc;
    }
    Ok(y)
}
