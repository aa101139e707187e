//! Grassmann charts, local charts of the fixed-rank manifold and its tangent
//! spaces.
//!
//! Around an orthonormal base point with leaf frames `U_k`, each leaf gets the
//! orthogonal complement `W_k`. Chart parameters are a matrix `L_k` per leaf
//! (in `W_k` coordinates, so the new frame is `U_k + W_k L_k`) and a full set
//! of transfer tensors. Tangent parameters have the same shape.
//!
//! The transfer tensors over-parametrize the manifold at interior non-root
//! nodes: `C^(γ) ↦ G·C^(γ)` on the parent axis with the inverse absorbed by the
//! parent leaves the tensor unchanged. Tangent coordinates therefore fix the
//! gauge `M_0(Ċ^(γ)) · M_0(C^(γ))ᵀ = 0` at those nodes.

use crate::dense::{minimal_subspace, unfold_modes, DenseTensor};
use crate::error::{Error, Result};
use crate::linalg::{column_space, solve_conditioned, spectral_norm, svd, Frame, Matrix, DEFAULT_RANK_TOL};
use crate::tbf::{assemble_node, split_node, tb_rank, TbfTensor};
use crate::tree::NodeId;

/// Condition-number limit for the linear solves behind charts and projections.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Complementary subspaces `U ⊕ W` of a common ambient space.
#[derive(Debug, Clone)]
pub struct SubspacePair {
    u: Matrix,
    w: Matrix,
}

impl SubspacePair {
    /// Checks `dim U + dim W = n` and that the stacked basis `[U W]` is
    /// invertible with condition number at most [`CONDITION_LIMIT`].
    pub fn new(u: Matrix, w: Matrix) -> Result<Self> {
        let n = u.nrows();
        if w.nrows() != n || u.ncols() + w.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "subspaces of dims {} and {} in ambient dims {} and {}",
                u.ncols(),
                w.ncols(),
                n,
                w.nrows()
            )));
        }
        let stacked = stack(&u, &w);
        let cond = crate::linalg::condition_number(&stacked);
        if !(cond <= CONDITION_LIMIT) {
            return Err(Error::IllConditioned {
                condition: cond,
                limit: CONDITION_LIMIT,
                context: "stacked basis of a subspace pair".into(),
            });
        }
        Ok(SubspacePair { u, w })
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    /// Coordinates `(a, b)` with `x = U a + W b` for every column of `x`.
    fn split(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let c = solve_conditioned(&stack(&self.u, &self.w), x, CONDITION_LIMIT, "stacked basis of a subspace pair")?;
        let r = self.u.ncols();
        Ok((c.rows(0, r).into_owned(), c.rows(r, c.nrows() - r).into_owned()))
    }
}

fn stack(u: &Matrix, w: &Matrix) -> Matrix {
    let mut m = Matrix::zeros(u.nrows(), u.ncols() + w.ncols());
    m.columns_mut(0, u.ncols()).copy_from(u);
    m.columns_mut(u.ncols(), w.ncols()).copy_from(w);
    m
}

/// Projection onto `U` along `W`, applied to every column of `x`.
pub fn project_onto_along(x: &Matrix, u: &Matrix, w: &Matrix) -> Result<Matrix> {
    let pair = SubspacePair::new(u.clone(), w.clone())?;
    let (a, _) = pair.split(x)?;
    Ok(u * a)
}

/// Chart of the Grassmannian at `U ⊕ W`: the map `L : U → W` (as a matrix in
/// the coordinates of the two bases) whose graph `{u + L u}` is `span(U')`.
pub fn grassmann_chart(u: &Matrix, w: &Matrix, u_prime: &Matrix) -> Result<Matrix> {
    if u_prime.ncols() != u.ncols() || u_prime.nrows() != u.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "subspace of dim {} in R^{} charted at a subspace of dim {} in R^{}",
            u_prime.ncols(),
            u_prime.nrows(),
            u.ncols(),
            u.nrows()
        )));
    }
    let pair = SubspacePair::new(u.clone(), w.clone())?;
    let (a, b) = pair.split(u_prime)?;
    // L = B A^{-1}, solved as Aᵀ Lᵀ = Bᵀ
    let lt = solve_conditioned(&a.transpose(), &b.transpose(), CONDITION_LIMIT, "projection of U' onto U")
        .map_err(|e| Error::CommonComplementFails(e.to_string()))?;
    Ok(lt.transpose())
}

/// Basis `U + W L` of the graph of `L`.
pub fn grassmann_graph(u: &Matrix, w: &Matrix, l: &Matrix) -> Matrix {
    u + w * l
}

macro_rules! param_block {
    ($name:ident) => {
        impl $name {
            /// Matching all-zero leaf maps with the given transfer tensors.
            fn with_zero_maps(base: &TbfTensor, transfers: Vec<DenseTensor>) -> Self {
                let leaf_maps = (0..base.tree().d())
                    .map(|k| {
                        let f = base.frame(k);
                        Matrix::zeros(f.nrows() - f.ncols(), f.ncols())
                    })
                    .collect();
                $name { leaf_maps, transfers }
            }

            /// `self + a · other`.
            pub fn axpy(&self, a: f64, other: &TangentParams) -> Self {
                $name {
                    leaf_maps: self
                        .leaf_maps
                        .iter()
                        .zip(&other.leaf_maps)
                        .map(|(x, y)| x + y * a)
                        .collect(),
                    transfers: self
                        .transfers
                        .iter()
                        .zip(&other.transfers)
                        .map(|(x, y)| x.axpy(a, y).expect("matching transfer shapes"))
                        .collect(),
                }
            }

            /// Product norm: `Σ_α ‖C^(α)‖_F + Σ_k ‖L_k‖₂`.
            pub fn norm(&self) -> f64 {
                param_norm(&self.leaf_maps, &self.transfers)
            }
        }
    };
}

/// Chart coordinates of a point near the base.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartParams {
    /// `L_k`, `(n_k − r_k) × r_k`, indexed by mode.
    pub leaf_maps: Vec<Matrix>,
    /// Transfer tensors of the internal nodes in pre-order.
    pub transfers: Vec<DenseTensor>,
}

/// Tangent coordinates `(L̇, Ċ)`, shaped like [`ChartParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct TangentParams {
    pub leaf_maps: Vec<Matrix>,
    pub transfers: Vec<DenseTensor>,
}

param_block!(ChartParams);
param_block!(TangentParams);

impl ChartParams {
    /// Coordinates of the base point itself: `(0, C(base))`.
    pub fn origin(base: &TbfTensor) -> Self {
        Self::with_zero_maps(base, base.transfers().into_iter().cloned().collect())
    }
}

impl TangentParams {
    pub fn zeros(base: &TbfTensor) -> Self {
        Self::with_zero_maps(
            base,
            base.transfers().into_iter().map(|c| DenseTensor::zeros(c.dims())).collect(),
        )
    }

    pub fn scaled(&self, a: f64) -> Self {
        TangentParams {
            leaf_maps: self.leaf_maps.iter().map(|x| x * a).collect(),
            transfers: self.transfers.iter().map(|x| x.scaled(a)).collect(),
        }
    }
}

/// `Σ_α ‖C^(α)‖_F + Σ_k ‖L_k‖₂` (spectral norm on the leaf maps).
pub fn param_norm(leaf_maps: &[Matrix], transfers: &[DenseTensor]) -> f64 {
    transfers.iter().map(DenseTensor::frobenius_norm).sum::<f64>() + leaf_maps.iter().map(spectral_norm).sum::<f64>()
}

fn require_orthonormal(base: &TbfTensor) -> Result<()> {
    if !base.is_orthonormal() {
        return Err(Error::InvalidArgument("base point must be orthonormalized".into()));
    }
    if base.is_zero() {
        return Err(Error::InvalidArgument("the zero tensor is not a manifold point".into()));
    }
    Ok(())
}

fn leaf_complements(base: &TbfTensor) -> Vec<Matrix> {
    base.frames()
        .iter()
        .map(|f| Frame::new_unchecked(f.clone(), true).orthogonal_complement().into_basis())
        .collect()
}

fn check_shapes(base: &TbfTensor, leaf_maps: &[Matrix], transfers: &[DenseTensor]) -> Result<()> {
    let ok_maps = leaf_maps.len() == base.tree().d()
        && leaf_maps.iter().enumerate().all(|(k, l)| {
            let f = base.frame(k);
            l.shape() == (f.nrows() - f.ncols(), f.ncols())
        });
    let bt = base.transfers();
    let ok_transfers = transfers.len() == bt.len() && transfers.iter().zip(&bt).all(|(a, b)| a.dims() == b.dims());
    if ok_maps && ok_transfers {
        Ok(())
    } else {
        Err(Error::DimensionMismatch("parameters do not match the base point's ranks".into()))
    }
}

/// Tensor with leaf frames `U_k + W_k L_k` and the given transfer tensors.
pub fn chart_decode(base: &TbfTensor, p: &ChartParams) -> Result<TbfTensor> {
    check_shapes(base, &p.leaf_maps, &p.transfers)?;
    let w = leaf_complements(base);
    let frames = (0..base.tree().d())
        .map(|k| grassmann_graph(base.frame(k), &w[k], &p.leaf_maps[k]))
        .collect();
    TbfTensor::new(base.tree().clone(), frames, p.transfers.clone())
}

/// Chart coordinates of `w` around `base`. Leaf maps come from the Grassmann
/// chart of each leaf's minimal subspace; at an interior node `γ` the basis
/// `U'_γ (U_γᵀ U'_γ)^{-1}` of `U_γ^min(w)` is used, whose orthogonal
/// projection onto the base subspace is the base basis.
pub fn chart_encode(base: &TbfTensor, w: &DenseTensor, tol: f64) -> Result<ChartParams> {
    require_orthonormal(base)?;
    let tree = base.tree();
    if w.dims() != base.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs base {:?}", w.dims(), base.dims())));
    }
    let target = base.ranks();
    let got = tb_rank(w, tree, tol)?;
    if got != target {
        return Err(Error::RankMismatch(format!(
            "{} vs base {}",
            got.display(tree),
            target.display(tree)
        )));
    }
    if w == &base.evaluate() {
        return Ok(ChartParams::origin(base));
    }
    let base_bases = base.node_bases();
    let comps = leaf_complements(base);
    let mut new_bases: Vec<Matrix> = vec![Matrix::zeros(0, 0); tree.len()];
    let mut leaf_maps = vec![Matrix::zeros(0, 0); tree.d()];
    for j in 0..tree.d() {
        let id = tree.leaf(j);
        let u_prime = minimal_subspace(w, tree.modes(id), tol)?;
        let l = grassmann_chart(base.frame(j), &comps[j], u_prime.basis())
            .map_err(|e| Error::NotInNeighborhood(format!("leaf {}: {e}", tree.modes(id))))?;
        new_bases[id] = grassmann_graph(base.frame(j), &comps[j], &l);
        leaf_maps[j] = l;
    }
    let mut transfers: Vec<(NodeId, DenseTensor)> = Vec::new();
    for id in tree.postorder() {
        if tree.is_leaf(id) {
            continue;
        }
        let node_mat = if id == tree.root() {
            Matrix::from_column_slice(w.len(), 1, w.data())
        } else {
            let u_prime = column_space(&unfold_modes(w, tree.modes(id))?, tol);
            let u = &base_bases[id];
            let a = u.transpose() * u_prime.basis();
            let inv_t = solve_conditioned(
                &a.transpose(),
                &u_prime.basis().transpose(),
                CONDITION_LIMIT,
                "interior subspace projection",
            )
            .map_err(|e| Error::NotInNeighborhood(format!("node {}: {e}", tree.modes(id))))?;
            inv_t.transpose()
        };
        let mut lefts = Vec::new();
        for &c in tree.children(id) {
            lefts.push(left_inverse(&new_bases[c], &tree.modes(c).to_string())?);
        }
        let refs: Vec<&Matrix> = lefts.iter().collect();
        let coeffs = split_node(tree, id, &node_mat, &refs, w.dims());
        new_bases[id] = node_mat;
        transfers.push((id, coeffs));
    }
    transfers.sort_by_key(|(id, _)| *id);
    Ok(ChartParams {
        leaf_maps,
        transfers: transfers.into_iter().map(|(_, c)| c).collect(),
    })
}

// (BᵀB)^{-1} Bᵀ for a basis with full column rank.
fn left_inverse(b: &Matrix, node: &str) -> Result<Matrix> {
    solve_conditioned(&(b.transpose() * b), &b.transpose(), CONDITION_LIMIT, node)
        .map_err(|e| Error::NotInNeighborhood(format!("node {node}: {e}")))
}

/// Evaluates `decode(p)` and its directional derivative along `t`, both as
/// dense tensors, by forward differentiation over the tree.
pub fn decode_with_derivative(base: &TbfTensor, p: &ChartParams, t: &TangentParams) -> Result<(DenseTensor, DenseTensor)> {
    check_shapes(base, &p.leaf_maps, &p.transfers)?;
    check_shapes(base, &t.leaf_maps, &t.transfers)?;
    let comps = leaf_complements(base);
    let (val, dot) = forward(base, &comps, p, t);
    let dims = base.dims().to_vec();
    Ok((
        DenseTensor::from_parts(dims.clone(), val.as_slice().to_vec()),
        DenseTensor::from_parts(dims, dot.as_slice().to_vec()),
    ))
}

fn forward(base: &TbfTensor, comps: &[Matrix], p: &ChartParams, t: &TangentParams) -> (Matrix, Matrix) {
    let tree = base.tree();
    let dims = base.dims();
    let slot = transfer_slots(base);
    let mut vals: Vec<Matrix> = vec![Matrix::zeros(0, 0); tree.len()];
    let mut dots: Vec<Matrix> = vec![Matrix::zeros(0, 0); tree.len()];
    for id in tree.postorder() {
        if tree.is_leaf(id) {
            let k = tree.modes(id).smallest();
            vals[id] = grassmann_graph(base.frame(k), &comps[k], &p.leaf_maps[k]);
            dots[id] = &comps[k] * &t.leaf_maps[k];
            continue;
        }
        let kids = tree.children(id);
        let c = &p.transfers[slot[id]];
        let cdot = &t.transfers[slot[id]];
        let kid_vals: Vec<&Matrix> = kids.iter().map(|&k| &vals[k]).collect();
        let mut dot = assemble_node(tree, id, cdot, &kid_vals, dims);
        for i in 0..kids.len() {
            if dots[kids[i]].iter().all(|&x| x == 0.0) {
                continue;
            }
            let mut mixed = kid_vals.clone();
            mixed[i] = &dots[kids[i]];
            dot += assemble_node(tree, id, c, &mixed, dims);
        }
        vals[id] = assemble_node(tree, id, c, &kid_vals, dims);
        dots[id] = dot;
    }
    let root = tree.root();
    (vals.swap_remove(root), dots.swap_remove(root))
}

// Position of each internal node's transfer tensor in pre-order lists.
fn transfer_slots(base: &TbfTensor) -> Vec<usize> {
    let mut slot = vec![usize::MAX; base.tree().len()];
    for (i, id) in base.tree().internal_nodes().enumerate() {
        slot[id] = i;
    }
    slot
}

/// Tangent vector `ẇ` at the base point for tangent coordinates `t`.
pub fn tangent_assemble(base: &TbfTensor, t: &TangentParams) -> Result<DenseTensor> {
    require_orthonormal(base)?;
    Ok(decode_with_derivative(base, &ChartParams::origin(base), t)?.1)
}

/// `Σ_α r_α ∏_{β∈S(α)} r_β + Σ_k r_k (n_k − r_k)`: the number of chart
/// parameters, which the injectivity claim equates with the tangent dimension.
pub fn parameter_dimension(x: &TbfTensor) -> usize {
    let tree = x.tree();
    let coeffs: usize = tree
        .internal_nodes()
        .map(|id| x.rank(id) * tree.children(id).iter().map(|&c| x.rank(c)).product::<usize>())
        .sum();
    let leaves: usize = (0..tree.d()).map(|k| x.frame(k).ncols() * (x.dims()[k] - x.frame(k).ncols())).sum();
    coeffs + leaves
}

/// Dimension of the tangent space: [`parameter_dimension`] minus the gauge
/// freedom `r_γ²` of every interior non-root node.
pub fn tangent_dimension(x: &TbfTensor) -> usize {
    let tree = x.tree();
    let gauge: usize = tree
        .internal_nodes()
        .filter(|&id| id != tree.root())
        .map(|id| x.rank(id).pow(2))
        .sum();
    parameter_dimension(x) - gauge
}

/// Which coordinates generate the tangent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    /// Every chart parameter direction (spanning, not independent).
    Full,
    /// Interior transfer variations restricted by the gauge condition.
    Fixed,
}

enum Block {
    Full { slot: usize, dims: Vec<usize> },
    // rows of M_0(Ċ) confined to the columns of `z`
    Gauged { slot: usize, dims: Vec<usize>, z: Matrix },
    Leaf { mode: usize, rows: usize, cols: usize },
}

impl Block {
    fn len(&self) -> usize {
        match self {
            Block::Full { dims, .. } => dims.iter().product(),
            Block::Gauged { dims, z, .. } => dims[0] * z.ncols(),
            Block::Leaf { rows, cols, .. } => rows * cols,
        }
    }
}

/// Coordinate system of tangent parameters at a chart point.
struct Layout {
    blocks: Vec<Block>,
}

impl Layout {
    fn new(base: &TbfTensor, p: &ChartParams, gauge: Gauge) -> Result<Self> {
        let tree = base.tree();
        let mut blocks = Vec::new();
        for (slot, id) in tree.internal_nodes().enumerate() {
            let c = &p.transfers[slot];
            let dims = c.dims().to_vec();
            if gauge == Gauge::Full || id == tree.root() {
                blocks.push(Block::Full { slot, dims });
                continue;
            }
            let rows = c.unfold(&[0]).transpose();
            let span = column_space(&rows, DEFAULT_RANK_TOL);
            if span.rank() < dims[0] {
                return Err(Error::RankDegeneracy {
                    node: tree.modes(id).to_string(),
                    sigma: 0.0,
                    threshold: DEFAULT_RANK_TOL,
                });
            }
            let z = span.orthogonal_complement().into_basis();
            blocks.push(Block::Gauged { slot, dims, z });
        }
        for k in 0..tree.d() {
            let f = base.frame(k);
            blocks.push(Block::Leaf {
                mode: k,
                rows: f.nrows() - f.ncols(),
                cols: f.ncols(),
            });
        }
        Ok(Layout { blocks })
    }

    fn dim(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    /// Tangent parameters with coordinates `c`.
    fn params(&self, base: &TbfTensor, c: &[f64]) -> TangentParams {
        let mut t = TangentParams::zeros(base);
        let mut off = 0;
        for b in &self.blocks {
            let n = b.len();
            let x = &c[off..off + n];
            match b {
                Block::Full { slot, dims } => {
                    t.transfers[*slot] = DenseTensor::from_parts(dims.clone(), x.to_vec());
                }
                Block::Gauged { slot, dims, z } => {
                    let coords = Matrix::from_row_slice(dims[0], z.ncols(), x);
                    let m0 = coords * z.transpose();
                    t.transfers[*slot] = DenseTensor::fold(&m0, dims, &[0]);
                }
                Block::Leaf { mode, rows, cols } => {
                    t.leaf_maps[*mode] = Matrix::from_row_slice(*rows, *cols, x);
                }
            }
            off += n;
        }
        t
    }

    /// Matrix whose columns are the tangent vectors of the unit coordinates
    /// at chart point `p`.
    fn jacobian(&self, base: &TbfTensor, comps: &[Matrix], p: &ChartParams) -> Matrix {
        let n: usize = base.dims().iter().product();
        let m = self.dim();
        let mut j = Matrix::zeros(n, m);
        let mut e = vec![0.0; m];
        for col in 0..m {
            e[col] = 1.0;
            let t = self.params(base, &e);
            e[col] = 0.0;
            let (_, dot) = forward(base, comps, p, &t);
            j.set_column(col, &dot.column(0));
        }
        j
    }
}

/// Tangent vectors generated by unit chart-parameter directions at the
/// base point, as the columns of an `(∏ n_j) × m` matrix.
pub fn tangent_generators(base: &TbfTensor, gauge: Gauge) -> Result<Matrix> {
    require_orthonormal(base)?;
    let p = ChartParams::origin(base);
    let layout = Layout::new(base, &p, gauge)?;
    Ok(layout.jacobian(base, &leaf_complements(base), &p))
}

/// Orthonormal basis of the tangent space at `base`.
pub fn tangent_basis(base: &TbfTensor) -> Result<Vec<DenseTensor>> {
    let j = tangent_generators(base, Gauge::Fixed)?;
    let q = column_space(&j, 1e-10);
    if q.rank() < j.ncols() {
        return Err(Error::RankDegeneracy {
            node: "tangent generators".into(),
            sigma: svd(&j).s.last().copied().unwrap_or(0.0),
            threshold: 1e-10,
        });
    }
    Ok(q.basis()
        .column_iter()
        .map(|c| DenseTensor::from_parts(base.dims().to_vec(), c.as_slice().to_vec()))
        .collect())
}

/// Orthogonal projection of `x` onto the tangent space at `base`, with its
/// gauge-fixed tangent coordinates.
pub fn project_tangent(base: &TbfTensor, x: &DenseTensor) -> Result<(DenseTensor, TangentParams)> {
    require_orthonormal(base)?;
    project_tangent_at(base, &ChartParams::origin(base), x)
}

/// Least-squares tangent coordinates of `x` at the chart point `p`, and the
/// resulting tangent vector.
pub fn project_tangent_at(base: &TbfTensor, p: &ChartParams, x: &DenseTensor) -> Result<(DenseTensor, TangentParams)> {
    if x.dims() != base.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs base {:?}", x.dims(), base.dims())));
    }
    check_shapes(base, &p.leaf_maps, &p.transfers)?;
    let layout = Layout::new(base, p, Gauge::Fixed)?;
    let j = layout.jacobian(base, &leaf_complements(base), p);
    let d = svd(&j);
    let (hi, lo) = (d.s.first().copied().unwrap_or(1.0), d.s.last().copied().unwrap_or(1.0));
    let gram_condition = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    if !(gram_condition <= CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            condition: gram_condition,
            limit: CONDITION_LIMIT,
            context: "tangent Gram system".into(),
        });
    }
    let xv = x.to_vector();
    let ut_x = d.u.transpose() * &xv;
    let proj = &d.u * &ut_x;
    let scaled = ut_x.component_div(&crate::linalg::Vector::from_vec(d.s.clone()));
    let coords = &d.v * scaled;
    Ok((
        DenseTensor::from_parts(x.dims().to_vec(), proj.as_slice().to_vec()),
        layout.params(base, coords.as_slice()),
    ))
}
