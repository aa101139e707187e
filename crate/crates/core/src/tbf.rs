//! The tree-based format: a frame per leaf plus a transfer tensor per
//! internal node.
//!
//! A transfer tensor of node `α` with children `β_1, …, β_k` (canonical order)
//! is a [`DenseTensor`] with dims `(r_α, r_β1, …, r_βk)`. The implied basis of
//! `α` is `u^(α)_i = Σ C[i, j_1, …, j_k] u^(β_1)_{j_1} ⊗ … ⊗ u^(β_k)_{j_k}`, and
//! the represented tensor is the single root basis vector (`r_D = 1`).
//!
//! Node bases are materialized as matrices whose rows run over the node's
//! modes in increasing order (row-major) and whose columns are the basis
//! vectors, the same layout as [`unfold_modes`](crate::dense::unfold_modes).

use std::fmt;

use crate::dense::{unfold_modes, DenseTensor};
use crate::error::{Error, Result};
use crate::linalg::{
    column_space_capped, is_orthonormal, numerical_rank, rank_floor, subspace_distance, svd,
    Matrix,
};
use crate::tree::{DimensionTree, ModeSet, NodeId};

/// Gram deviation below which frames and transfer rows count as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

/// Tree-based rank: one entry per node, indexed by node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TbRank(Vec<usize>);

impl TbRank {
    pub fn new(ranks: Vec<usize>) -> Self {
        TbRank(ranks)
    }

    /// Every node at rank `r`, root at 1.
    pub fn uniform(tree: &DimensionTree, r: usize) -> Self {
        let mut v = vec![r; tree.len()];
        v[tree.root()] = 1;
        TbRank(v)
    }

    pub fn get(&self, id: NodeId) -> usize {
        self.0[id]
    }

    pub fn set(&mut self, id: NodeId, r: usize) {
        self.0[id] = r;
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&r| r == 0)
    }

    /// `node:r` pairs in node order, e.g. `{1,2,3}:1 {1}:2 …`.
    pub fn display<'a>(&'a self, tree: &'a DimensionTree) -> impl fmt::Display + 'a {
        struct D<'a>(&'a TbRank, &'a DimensionTree);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                for (id, r) in self.0 .0.iter().enumerate() {
                    if id > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{}:{}", self.1.modes(id), r)?;
                }
                Ok(())
            }
        }
        D(self, tree)
    }
}

/// A tensor in tree-based format.
#[derive(Debug, Clone, PartialEq)]
pub struct TbfTensor {
    tree: DimensionTree,
    dims: Vec<usize>,
    frames: Vec<Matrix>,
    coeffs: Vec<Option<DenseTensor>>,
    orthonormal: bool,
}

impl TbfTensor {
    /// Builds a tensor from leaf frames (indexed by mode, `n_j × r_j`) and
    /// transfer tensors listed for the internal nodes in pre-order.
    pub fn new(tree: DimensionTree, frames: Vec<Matrix>, transfers: Vec<DenseTensor>) -> Result<Self> {
        if frames.len() != tree.d() {
            return Err(Error::DimensionMismatch(format!(
                "{} leaf frames for {} modes",
                frames.len(),
                tree.d()
            )));
        }
        let internal: Vec<NodeId> = tree.internal_nodes().collect();
        if transfers.len() != internal.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} transfer tensors for {} internal nodes",
                transfers.len(),
                internal.len()
            )));
        }
        if let Some(j) = frames.iter().position(|f| f.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidArgument(format!("non-finite entry in frame {}", j + 1)));
        }
        let mut coeffs = vec![None; tree.len()];
        for (id, c) in internal.into_iter().zip(transfers) {
            coeffs[id] = Some(c);
        }
        let dims = frames.iter().map(|f| f.nrows()).collect();
        let mut x = TbfTensor {
            tree,
            dims,
            frames,
            coeffs,
            orthonormal: false,
        };
        x.check_shapes()?;
        x.orthonormal = x.detect_orthonormal();
        Ok(x)
    }

    /// The reserved representation of the zero tensor: every rank is 0.
    pub fn zero(tree: DimensionTree, dims: &[usize]) -> Result<Self> {
        if dims.len() != tree.d() {
            return Err(Error::DimensionMismatch(format!(
                "{} dims for a tree over {} modes",
                dims.len(),
                tree.d()
            )));
        }
        let frames = dims.iter().map(|&n| Matrix::zeros(n, 0)).collect();
        let transfers = tree
            .internal_nodes()
            .map(|id| DenseTensor::zeros(&vec![0; 1 + tree.children(id).len()]))
            .collect();
        Self::new(tree, frames, transfers)
    }

    fn check_shapes(&self) -> Result<()> {
        let t = &self.tree;
        for id in t.internal_nodes() {
            let c = self.transfer(id);
            let kids = t.children(id);
            if c.order() != kids.len() + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "transfer tensor at {} has order {}, expected {}",
                    t.modes(id),
                    c.order(),
                    kids.len() + 1
                )));
            }
            for (i, &k) in kids.iter().enumerate() {
                if c.dims()[i + 1] != self.rank(k) {
                    return Err(Error::DimensionMismatch(format!(
                        "transfer tensor at {} has size {} on the axis of child {}, whose rank is {}",
                        t.modes(id),
                        c.dims()[i + 1],
                        t.modes(k),
                        self.rank(k)
                    )));
                }
            }
        }
        let r_root = self.rank(t.root());
        if r_root > 1 {
            return Err(Error::Inadmissible(format!("root rank {r_root} (must be 1)")));
        }
        Ok(())
    }

    fn detect_orthonormal(&self) -> bool {
        self.frames.iter().all(|f| is_orthonormal(f, ORTHONORMAL_TOL))
            && self
                .tree
                .internal_nodes()
                .filter(|&id| id != self.tree.root())
                .all(|id| is_orthonormal(&self.transfer(id).unfold(&[0]).transpose(), ORTHONORMAL_TOL))
    }

    pub fn tree(&self) -> &DimensionTree {
        &self.tree
    }

    /// Mode sizes `n_1, …, n_d`.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Frame of leaf `{j}` (0-based mode).
    pub fn frame(&self, j: usize) -> &Matrix {
        &self.frames[j]
    }

    pub fn frames(&self) -> &[Matrix] {
        &self.frames
    }

    /// Transfer tensor of an internal node. Panics on a leaf.
    pub fn transfer(&self, id: NodeId) -> &DenseTensor {
        self.coeffs[id].as_ref().expect("leaves carry no transfer tensor")
    }

    /// Transfer tensors of the internal nodes in pre-order.
    pub fn transfers(&self) -> Vec<&DenseTensor> {
        self.coeffs.iter().flatten().collect()
    }

    pub fn rank(&self, id: NodeId) -> usize {
        match &self.coeffs[id] {
            Some(c) => c.dims()[0],
            None => self.frames[self.tree.modes(id).smallest()].ncols(),
        }
    }

    /// Representation ranks (which equal the TB rank when the transfer
    /// tensors are full rank).
    pub fn ranks(&self) -> TbRank {
        TbRank((0..self.tree.len()).map(|id| self.rank(id)).collect())
    }

    /// True when every leaf frame and every non-root `M_0(C)ᵀ` has orthonormal
    /// columns, so that all implied node bases are orthonormal.
    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn is_zero(&self) -> bool {
        self.rank(self.tree.root()) == 0
    }

    /// Basis matrix of every node, computed leaves to root.
    pub fn node_bases(&self) -> Vec<Matrix> {
        let t = &self.tree;
        let mut bases: Vec<Matrix> = vec![Matrix::zeros(0, 0); t.len()];
        for id in t.postorder() {
            bases[id] = if t.is_leaf(id) {
                self.frames[t.modes(id).smallest()].clone()
            } else {
                let kids: Vec<&Matrix> = t.children(id).iter().map(|&c| &bases[c]).collect();
                assemble_node(t, id, self.transfer(id), &kids, &self.dims)
            };
        }
        bases
    }

    /// The represented dense tensor.
    pub fn evaluate(&self) -> DenseTensor {
        if self.is_zero() {
            return DenseTensor::zeros(&self.dims);
        }
        let root = self.node_bases().swap_remove(self.tree.root());
        DenseTensor::from_parts(self.dims.clone(), root.as_slice().to_vec())
    }

    /// Same tensor with orthonormal node bases, by QR from the leaves up;
    /// each `R` factor is absorbed into the parent transfer tensor.
    pub fn orthonormalize(&self) -> Result<TbfTensor> {
        if self.is_zero() {
            let mut z = TbfTensor::zero(self.tree.clone(), &self.dims)?;
            z.orthonormal = true;
            return Ok(z);
        }
        let t = &self.tree;
        let mut frames = self.frames.clone();
        let mut coeffs = self.coeffs.clone();
        for id in t.postorder() {
            let Some(parent) = t.parent(id) else { continue };
            let axis = 1 + t.children(parent).iter().position(|&c| c == id).unwrap();
            let r = if t.is_leaf(id) {
                let j = t.modes(id).smallest();
                let (q, r) = positive_qr(&frames[j], t.modes(id))?;
                frames[j] = q;
                r
            } else {
                let c = coeffs[id].as_ref().unwrap();
                let m = c.unfold(&[0]).transpose();
                let (q, r) = positive_qr(&m, t.modes(id))?;
                coeffs[id] = Some(DenseTensor::fold(&q.transpose(), c.dims(), &[0]));
                r
            };
            let pc = coeffs[parent].as_ref().unwrap();
            coeffs[parent] = Some(pc.mode_product(axis, &r));
        }
        Ok(TbfTensor {
            tree: self.tree.clone(),
            dims: self.dims.clone(),
            frames,
            coeffs,
            orthonormal: true,
        })
    }
}

// Thin QR with a non-negative diagonal in R.
fn positive_qr(m: &Matrix, node: &ModeSet) -> Result<(Matrix, Matrix)> {
    let (rows, cols) = m.shape();
    if cols > rows {
        return Err(Error::Inadmissible(format!(
            "rank {cols} at node {node} exceeds the dimension {rows} it spans"
        )));
    }
    let qr = m.clone().qr();
    let mut q = qr.q().columns(0, cols).into_owned();
    let mut r = qr.r().rows(0, cols).into_owned();
    for k in 0..cols {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
            r.row_mut(k).neg_mut();
        }
    }
    Ok((q, r))
}

// Mode order obtained by concatenating the children of `id`.
fn grouped_modes(tree: &DimensionTree, id: NodeId) -> Vec<usize> {
    tree.children(id)
        .iter()
        .flat_map(|&c| tree.modes(c).indices().iter().copied())
        .collect()
}

/// Basis of node `id` given its transfer tensor and a matrix per child whose
/// columns stand in for the child basis (`N_β × r_β`).
pub(crate) fn assemble_node(
    tree: &DimensionTree,
    id: NodeId,
    coeffs: &DenseTensor,
    child_mats: &[&Matrix],
    dims: &[usize],
) -> Matrix {
    let r = coeffs.dims()[0];
    let mut t = coeffs.clone();
    for (i, m) in child_mats.iter().enumerate() {
        t = t.mode_product(1 + i, m);
    }
    let order = grouped_modes(tree, id);
    let mut gdims = vec![r];
    gdims.extend(order.iter().map(|&m| dims[m]));
    let t = DenseTensor::from_parts(gdims, t.into_data());
    let alpha = tree.modes(id).indices();
    let mut perm: Vec<usize> = alpha
        .iter()
        .map(|m| 1 + order.iter().position(|x| x == m).unwrap())
        .collect();
    perm.push(0);
    let p = t.permute(&perm);
    let rows: usize = alpha.iter().map(|&m| dims[m]).product();
    Matrix::from_row_slice(rows, r, p.data())
}

/// Inverse direction of [`assemble_node`]: maps the columns of a node basis
/// through `child_maps[i]` (`r_β × N_β`) on each child block, giving a tensor
/// with dims `(cols, r_β1, …)`.
pub(crate) fn split_node(
    tree: &DimensionTree,
    id: NodeId,
    node_mat: &Matrix,
    child_maps: &[&Matrix],
    dims: &[usize],
) -> DenseTensor {
    let alpha = tree.modes(id).indices();
    let r = node_mat.ncols();
    let mut adims: Vec<usize> = alpha.iter().map(|&m| dims[m]).collect();
    adims.push(r);
    let row_major = node_mat.transpose();
    let t = DenseTensor::from_parts(adims, row_major.as_slice().to_vec());
    let order = grouped_modes(tree, id);
    let mut perm = vec![alpha.len()];
    perm.extend(order.iter().map(|m| alpha.iter().position(|x| x == m).unwrap()));
    let mut sdims = vec![r];
    sdims.extend(
        tree.children(id)
            .iter()
            .map(|&c| tree.modes(c).indices().iter().map(|&m| dims[m]).product::<usize>()),
    );
    let mut t = DenseTensor::from_parts(sdims, t.permute(&perm).into_data());
    for (i, m) in child_maps.iter().enumerate() {
        t = t.mode_product(1 + i, m);
    }
    t
}

fn check_dims(v: &DenseTensor, tree: &DimensionTree) -> Result<()> {
    if v.order() != tree.d() {
        return Err(Error::DimensionMismatch(format!(
            "tensor of order {} for a tree over {} modes",
            v.order(),
            tree.d()
        )));
    }
    Ok(())
}

/// Result of compressing a dense tensor.
#[derive(Debug, Clone)]
pub struct Compression {
    pub tensor: TbfTensor,
    /// Singular values of each node's unfolding (root: `[‖v‖]`).
    pub singular_values: Vec<Vec<f64>>,
    /// `sqrt(Σ_α Σ_{i > r_α} σ_{α,i}²)`.
    pub error_bound: f64,
}

impl Compression {
    /// Discarded singular mass `sqrt(Σ_{i > r_α} σ_{α,i}²)` at a node.
    pub fn discarded(&self, id: NodeId) -> f64 {
        let r = self.tensor.rank(id);
        self.singular_values[id].iter().skip(r).map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Compresses `v` into tree-based format. Each node's frame is the leading
/// left singular subspace of its own unfolding, keeping the singular values
/// above `tol · σ_max` and at most `caps[α]` of them. Transfer tensors
/// project the parent basis (at the root, `v`) onto the children's frames.
pub fn from_dense(v: &DenseTensor, tree: &DimensionTree, tol: f64, caps: Option<&TbRank>) -> Result<Compression> {
    check_dims(v, tree)?;
    if tol < 0.0 || !tol.is_finite() {
        return Err(Error::InvalidArgument(format!("tolerance must be finite and non-negative, got {tol}")));
    }
    if let Some(c) = caps {
        if c.len() != tree.len() {
            return Err(Error::DimensionMismatch(format!(
                "rank caps for {} nodes, tree has {}",
                c.len(),
                tree.len()
            )));
        }
    }
    let root = tree.root();
    let norm = v.frobenius_norm();
    let mut frames: Vec<Matrix> = vec![Matrix::zeros(0, 0); tree.len()];
    let mut sv: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    sv[root] = vec![norm];
    let mut degenerate = norm == 0.0 || caps.is_some_and(|c| c.get(root) == 0);
    for id in 0..tree.len() {
        if id == root {
            continue;
        }
        let (f, s) = column_space_capped(&unfold_modes(v, tree.modes(id))?, tol, caps.map(|c| c.get(id)));
        degenerate |= f.rank() == 0;
        frames[id] = f.into_basis();
        sv[id] = s;
    }
    if degenerate {
        return Ok(Compression {
            tensor: TbfTensor::zero(tree.clone(), v.dims())?,
            error_bound: norm,
            singular_values: sv,
        });
    }
    frames[root] = Matrix::from_column_slice(v.len(), 1, v.data());

    let leaf_frames: Vec<Matrix> = (0..tree.d()).map(|j| frames[tree.leaf(j)].clone()).collect();
    let transfers: Vec<DenseTensor> = tree
        .internal_nodes()
        .map(|id| {
            let maps: Vec<Matrix> = tree.children(id).iter().map(|&c| frames[c].transpose()).collect();
            let refs: Vec<&Matrix> = maps.iter().collect();
            split_node(tree, id, &frames[id], &refs, v.dims())
        })
        .collect();
    let tensor = TbfTensor::new(tree.clone(), leaf_frames, transfers)?;
    let mut out = Compression {
        tensor,
        singular_values: sv,
        error_bound: 0.0,
    };
    out.error_bound = (0..tree.len()).map(|id| out.discarded(id).powi(2)).sum::<f64>().sqrt();
    Ok(out)
}

/// Ranks of the node unfoldings (`r_D = 1` for non-zero `v`).
pub fn tb_rank(v: &DenseTensor, tree: &DimensionTree, tol: f64) -> Result<TbRank> {
    check_dims(v, tree)?;
    if v.frobenius_norm() == 0.0 {
        return Ok(TbRank(vec![0; tree.len()]));
    }
    let mut out = Vec::with_capacity(tree.len());
    for id in 0..tree.len() {
        if id == tree.root() {
            out.push(1);
            continue;
        }
        let m = unfold_modes(v, tree.modes(id))?;
        out.push(numerical_rank(&svd(&m).s, tol.max(rank_floor(&m))));
    }
    Ok(TbRank(out))
}

/// One violated necessary condition for a realizable rank tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdmissibilityViolation {
    /// `r_D = 1` fails.
    RootRank { rank: usize },
    /// `r_{j} ≤ n_j` fails.
    LeafExceedsDim { leaf: ModeSet, rank: usize, dim: usize },
    /// `r_α ≤ ∏_{β∈S(α)} r_β` fails.
    ExceedsChildProduct { node: ModeSet, rank: usize, bound: usize },
    /// `r_δ ≤ r_α · ∏_{β∈S(α)∖{δ}} r_β` fails.
    ChildExceedsComplement {
        node: ModeSet,
        child: ModeSet,
        rank: usize,
        bound: usize,
    },
}

impl AdmissibilityViolation {
    /// Index (1–4) of the violated condition in the list above.
    pub fn condition(&self) -> u8 {
        match self {
            AdmissibilityViolation::RootRank { .. } => 1,
            AdmissibilityViolation::LeafExceedsDim { .. } => 2,
            AdmissibilityViolation::ExceedsChildProduct { .. } => 3,
            AdmissibilityViolation::ChildExceedsComplement { .. } => 4,
        }
    }
}

impl fmt::Display for AdmissibilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdmissibilityViolation::RootRank { rank } => write!(f, "condition 1: root rank is {rank}, must be 1"),
            AdmissibilityViolation::LeafExceedsDim { leaf, rank, dim } => {
                write!(f, "condition 2: rank {rank} at leaf {leaf} exceeds its dimension {dim}")
            }
            AdmissibilityViolation::ExceedsChildProduct { node, rank, bound } => write!(
                f,
                "condition 3: rank {rank} at {node} exceeds the product {bound} of its children's ranks"
            ),
            AdmissibilityViolation::ChildExceedsComplement {
                node,
                child,
                rank,
                bound,
            } => write!(
                f,
                "condition 4: rank {rank} at child {child} of {node} exceeds the parent-times-siblings bound {bound}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AdmissibilityReport {
    pub violations: Vec<AdmissibilityViolation>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    /// Whether the given condition (1–4) holds.
    pub fn holds(&self, condition: u8) -> bool {
        self.violations.iter().all(|v| v.condition() != condition)
    }
}

/// Checks the four necessary conditions on a rank tuple. The all-zero tuple
/// (the zero tensor) is admissible.
pub fn check_admissible(r: &TbRank, tree: &DimensionTree, dims: &[usize]) -> Result<AdmissibilityReport> {
    if r.len() != tree.len() || dims.len() != tree.d() {
        return Err(Error::DimensionMismatch(format!(
            "rank tuple of length {} and {} dims for a tree with {} nodes over {} modes",
            r.len(),
            dims.len(),
            tree.len(),
            tree.d()
        )));
    }
    let mut report = AdmissibilityReport::default();
    if r.is_zero() {
        return Ok(report);
    }
    if r.get(tree.root()) != 1 {
        report.violations.push(AdmissibilityViolation::RootRank { rank: r.get(tree.root()) });
    }
    for (j, &dim) in dims.iter().enumerate() {
        let id = tree.leaf(j);
        if r.get(id) > dim {
            report.violations.push(AdmissibilityViolation::LeafExceedsDim {
                leaf: tree.modes(id).clone(),
                rank: r.get(id),
                dim,
            });
        }
    }
    for id in tree.internal_nodes() {
        let kids = tree.children(id);
        let prod: usize = kids.iter().map(|&c| r.get(c)).product();
        if r.get(id) > prod {
            report.violations.push(AdmissibilityViolation::ExceedsChildProduct {
                node: tree.modes(id).clone(),
                rank: r.get(id),
                bound: prod,
            });
        }
    }
    for id in tree.internal_nodes() {
        let kids = tree.children(id);
        for &delta in kids {
            let bound = r.get(id) * kids.iter().filter(|&&c| c != delta).map(|&c| r.get(c)).product::<usize>();
            if r.get(delta) > bound {
                report.violations.push(AdmissibilityViolation::ChildExceedsComplement {
                    node: tree.modes(id).clone(),
                    child: tree.modes(delta).clone(),
                    rank: r.get(delta),
                    bound,
                });
            }
        }
    }
    Ok(report)
}

/// Rank of one single-axis matricization `M_μ(C^(α))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisRank {
    pub node: NodeId,
    pub axis: usize,
    pub rank: usize,
    /// `min(rows, cols)` of the matricization.
    pub maximal: usize,
    /// `σ_maximal / σ_1` (0 when the matricization has fewer singular values).
    pub relative_sigma_min: f64,
}

impl AxisRank {
    pub fn passes(&self) -> bool {
        self.rank == self.maximal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullRankReport {
    pub tol: f64,
    pub axes: Vec<AxisRank>,
}

impl FullRankReport {
    pub fn passes(&self) -> bool {
        self.axes.iter().all(AxisRank::passes)
    }

    /// Axis with the smallest relative singular value.
    pub fn weakest(&self) -> Option<&AxisRank> {
        self.axes
            .iter()
            .min_by(|a, b| a.relative_sigma_min.total_cmp(&b.relative_sigma_min))
    }
}

/// Whether every transfer tensor lies in the full-rank set: each single-axis
/// matricization has maximal rank at relative tolerance `tol`.
pub fn check_full_rank(x: &TbfTensor, tol: f64) -> FullRankReport {
    let mut axes = Vec::new();
    for id in x.tree().internal_nodes() {
        let c = x.transfer(id);
        for axis in 0..c.order() {
            let m = c.unfold(&[axis]);
            let maximal = m.nrows().min(m.ncols());
            let s = svd(&m).s;
            let rank = numerical_rank(&s, tol.max(rank_floor(&m)));
            let relative_sigma_min = match (s.first(), maximal) {
                (_, 0) => 1.0,
                (Some(&s0), k) if s0 > 0.0 => s[k - 1] / s0,
                _ => 0.0,
            };
            axes.push(AxisRank {
                node: id,
                axis,
                rank,
                maximal,
                relative_sigma_min,
            });
        }
    }
    FullRankReport { tol, axes }
}

/// Best approximation of bounded TB rank, computed by capped compression of
/// the dense tensor followed by orthonormalization.
pub fn truncate(v: &DenseTensor, tree: &DimensionTree, target: &TbRank, tol: f64) -> Result<Compression> {
    check_dims(v, tree)?;
    let report = check_admissible(target, tree, v.dims())?;
    if let Some(first) = report.violations.first() {
        return Err(Error::Inadmissible(first.to_string()));
    }
    let mut c = from_dense(v, tree, tol, Some(target))?;
    c.tensor = c.tensor.orthonormalize()?;
    Ok(c)
}

/// [`truncate`] for a tensor already in tree-based format (evaluated densely).
pub fn truncate_tbf(x: &TbfTensor, target: &TbRank, tol: f64) -> Result<Compression> {
    truncate(&x.evaluate(), x.tree(), target, tol)
}

/// Per-node outcome of [`nestedness_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeNesting {
    pub node: NodeId,
    pub rank: usize,
    /// `∏_{β∈S(α)} dim U_β^min`.
    pub children_product: usize,
    /// `‖(I − P) U_α‖₂` with `P` the orthogonal projector onto `⊗_β U_β^min`.
    pub inclusion_defect: f64,
    /// Per child: distance between `U_δ^min` and the span of the parent basis
    /// contracted against the sibling bases.
    pub child_span_defects: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestednessReport {
    pub tol: f64,
    pub nodes: Vec<NodeNesting>,
}

impl NestednessReport {
    pub fn holds(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.inclusion_defect <= self.tol && n.child_span_defects.iter().all(|&d| d <= self.tol))
    }

    pub fn max_defect(&self) -> f64 {
        self.nodes
            .iter()
            .flat_map(|n| std::iter::once(n.inclusion_defect).chain(n.child_span_defects.iter().copied()))
            .fold(0.0, f64::max)
    }
}

/// Verifies `U_α^min ⊆ ⊗_β U_β^min` at every internal node, and that
/// contracting the parent basis against sibling bases recovers each child's
/// minimal subspace. Subspaces are extracted at `rank_tol`; defects are
/// compared against `tol`.
pub fn nestedness_check(v: &DenseTensor, tree: &DimensionTree, rank_tol: f64, tol: f64) -> Result<NestednessReport> {
    check_dims(v, tree)?;
    let root = tree.root();
    let mut frames = Vec::with_capacity(tree.len());
    for id in 0..tree.len() {
        let m = if id == root {
            Matrix::from_column_slice(v.len(), 1, v.data())
        } else {
            unfold_modes(v, tree.modes(id))?
        };
        frames.push(column_space_capped(&m, rank_tol, None).0.into_basis());
    }
    let mut nodes = Vec::new();
    for id in tree.internal_nodes() {
        let kids = tree.children(id);
        let u = &frames[id];
        let maps: Vec<Matrix> = kids.iter().map(|&c| frames[c].transpose()).collect();
        let refs: Vec<&Matrix> = maps.iter().collect();
        let coeffs = split_node(tree, id, u, &refs, v.dims());
        let kid_frames: Vec<&Matrix> = kids.iter().map(|&c| &frames[c]).collect();
        let projected = assemble_node(tree, id, &coeffs, &kid_frames, v.dims());
        let inclusion_defect = crate::linalg::spectral_norm(&(u - projected));

        let mut child_span_defects = Vec::with_capacity(kids.len());
        for (i, &delta) in kids.iter().enumerate() {
            // contract siblings only; keep the child's full mode block
            let n_delta = frames[delta].nrows();
            let eye = Matrix::identity(n_delta, n_delta);
            let mut maps: Vec<&Matrix> = refs.clone();
            maps[i] = &eye;
            let t = split_node(tree, id, u, &maps, v.dims());
            let span = column_space_capped(&t.unfold(&[1 + i]), rank_tol, None).0;
            child_span_defects.push(subspace_distance(span.basis(), &frames[delta]));
        }
        nodes.push(NodeNesting {
            node: id,
            rank: u.ncols(),
            children_product: kids.iter().map(|&c| frames[c].ncols()).product(),
            inclusion_defect,
            child_span_defects,
        });
    }
    Ok(NestednessReport { tol, nodes })
}
