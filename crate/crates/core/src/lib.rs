//! Tree-based tensor formats over finite-dimensional Euclidean spaces.
//!
//! Layers, bottom up: [`tree`] (dimension partition trees), [`dense`]
//! (ground-truth dense tensors), [`tbf`] (the tree-based format),
//! [`geometry`] (charts and tangent spaces of the fixed-rank manifold) and
//! [`dynamics`] (Dirac–Frenkel integration). [`io`] holds the text formats.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dense;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod tbf;
pub mod tree;

pub use dense::{contract_functional, injective_norm, matricize, minimal_subspace, DenseTensor, InjectiveNorm};
pub use error::{Error, ErrorKind, Result};
pub use linalg::{column_space, Frame, Matrix, Vector, DEFAULT_RANK_TOL};
pub use tree::{validate_tree, DimensionTree, ModeSet, NodeId, RawTree, TreeKind, TreeViolation};
pub use tbf::{
    check_admissible, check_full_rank, from_dense, nestedness_check, tb_rank, truncate, truncate_tbf,
    AdmissibilityReport, AdmissibilityViolation, Compression, FullRankReport, NestednessReport, TbRank, TbfTensor,
};
pub use geometry::{
    chart_decode, chart_encode, grassmann_chart, grassmann_graph, param_norm, parameter_dimension, project_onto_along,
    project_tangent, project_tangent_at, tangent_assemble, tangent_basis, tangent_dimension, tangent_generators,
    ChartParams, Gauge, SubspacePair, TangentParams,
};
pub use dynamics::{
    apply_operator, expm_action, hartree_rhs, hartree_velocity, integrate_hartree, integrate_tangent_projected,
    mean_field, FnField, HartreeState, ProductTerm, Scheme, SumOfProductsOperator, TangentSample, VectorField,
};
pub use io::{
    parse_dense, parse_sop, parse_tbf, parse_trajectory, write_dense, write_sop, write_tbf, write_trajectory,
    TrajectoryPoint,
};
