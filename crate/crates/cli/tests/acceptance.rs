//! Acceptance gate. Prints one `PASS`/`FAIL` line per criterion with the
//! measured figures, then exits non-zero if an unexpected criterion failed.
//!
//! Oracles here are computed independently of the library path they check:
//! closed-form ranks of sums of generic elementary tensors, spans of random
//! contractions, direct SVDs, HOOI with restarts, central differences and a
//! dense scaling-and-squaring matrix exponential.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tbf_core::dense::{contract_functional, minimal_subspace};
use tbf_core::linalg::{column_space, numerical_rank, principal_angles, svd};
use tbf_core::tbf::TbRank;
use tbf_core::{
    chart_decode, chart_encode, check_admissible, from_dense, hartree_rhs, integrate_hartree,
    integrate_tangent_projected, nestedness_check, parameter_dimension, project_tangent, tangent_assemble,
    tangent_basis, tangent_dimension, tangent_generators, tb_rank, truncate, validate_tree, write_dense, write_sop,
    ChartParams, DenseTensor, DimensionTree, Error, Gauge, HartreeState, Matrix, ModeSet, ProductTerm, RawTree,
    Scheme, SumOfProductsOperator, TangentParams, TbfTensor, TreeKind, Vector,
};

/// Criteria expected to fail, with the reason printed next to the verdict.
///
/// 8: the predicted count treats every transfer tensor entry as independent.
/// At each interior non-root node `γ`, replacing `C^(γ)` by `G C^(γ)` on its
/// first axis and the parent's `γ` axis by `G^{-T}` leaves the tensor
/// unchanged, so `r_γ²` generator directions per such node are in the kernel.
/// Tucker trees have no such node and match the count exactly.
const KNOWN_FAILING: &[(u8, &str)] = &[(
    8,
    "count exceeds the observed rank by the interior gauge directions (sum of r_g^2 over interior non-root nodes)",
)];

struct Outcome {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn(r: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

fn randv(r: &mut impl Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| r.sample(StandardNormal))
}

fn sym(r: &mut impl Rng, n: usize) -> Matrix {
    let m = randn(r, n, n);
    (&m + m.transpose()) / (2.0 * (n as f64).sqrt())
}

/// `Σ_{s<terms} ⊗_j x_j^s` with Gaussian factors.
fn sum_of_elementary(r: &mut impl Rng, dims: &[usize], terms: usize) -> DenseTensor {
    let mut v = DenseTensor::zeros(dims);
    for _ in 0..terms {
        let f: Vec<Vector> = dims.iter().map(|&n| randv(r, n)).collect();
        v = v.axpy(1.0, &DenseTensor::elementary(&f)).unwrap();
    }
    v
}

fn ms(one_based: &[usize]) -> ModeSet {
    ModeSet::from_one_based(one_based.iter().copied()).unwrap()
}

/// Star tree on six modes.
fn fixture_star() -> DimensionTree {
    let full = ms(&[1, 2, 3, 4, 5, 6]);
    validate_tree(&RawTree::new(6, full.clone()).with_children(full, (1..=6).map(|j| ms(&[j])).collect())).unwrap()
}

/// Non-binary tree on six modes: {1,2,3} {4,5} {6} under the root.
fn fixture_mixed() -> DimensionTree {
    let full = ms(&[1, 2, 3, 4, 5, 6]);
    let raw = RawTree::new(6, full.clone())
        .with_children(full, vec![ms(&[1, 2, 3]), ms(&[4, 5]), ms(&[6])])
        .with_children(ms(&[1, 2, 3]), vec![ms(&[1]), ms(&[2]), ms(&[3])])
        .with_children(ms(&[4, 5]), vec![ms(&[4]), ms(&[5])]);
    validate_tree(&raw).unwrap()
}

fn std_tree(kind: TreeKind, d: usize) -> DimensionTree {
    DimensionTree::standard(kind, d).unwrap()
}

/// Generic rank of the node unfolding of a sum of `terms` elementary tensors
/// (`None`: fully random).
fn generic_rank(tree: &DimensionTree, id: usize, dims: &[usize], terms: Option<usize>) -> usize {
    if id == tree.root() {
        return 1;
    }
    let modes = tree.modes(id);
    let inside: usize = modes.indices().iter().map(|&j| dims[j]).product();
    let outside: usize = dims.iter().product::<usize>() / inside;
    inside.min(outside).min(terms.unwrap_or(usize::MAX))
}

fn rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}

struct Instance {
    v: DenseTensor,
    tree: DimensionTree,
}

fn random_instances() -> Vec<(Instance, Option<usize>)> {
    let mut r = rng(1);
    let mut out = Vec::new();
    for i in 0..50 {
        let d = 3 + (i / 5) % 4;
        let tree = match i % 5 {
            0 => fixture_star(),
            1 => std_tree(TreeKind::TensorTrain, d),
            2 => std_tree(TreeKind::Balanced, d),
            3 => std_tree(TreeKind::Tucker, d),
            _ => fixture_mixed(),
        };
        let d = tree.d();
        let max = if d <= 4 { 5 } else { 4 };
        let dims: Vec<usize> = (0..d).map(|_| r.random_range(2..=max)).collect();
        let terms = [Some(1), Some(2), Some(3), None][i % 4];
        let v = match terms {
            Some(t) => sum_of_elementary(&mut r, &dims, t),
            None => DenseTensor::random(&dims, &mut r),
        };
        out.push((Instance { v, tree }, terms));
    }
    out
}

fn criterion_1(instances: &[(Instance, Option<usize>)]) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rank_mismatches = 0;
    for (inst, terms) in instances {
        let c = from_dense(&inst.v, &inst.tree, 0.0, None).unwrap();
        worst = worst.max(rel(&c.tensor.evaluate(), &inst.v));
        let expected: Vec<usize> = (0..inst.tree.len())
            .map(|id| generic_rank(&inst.tree, id, inst.v.dims(), *terms))
            .collect();
        let measured = tb_rank(&inst.v, &inst.tree, 0.0).unwrap();
        if measured.as_slice() != expected || c.tensor.ranks().as_slice() != expected {
            rank_mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        name: "exact-rank round trip",
        pass: worst <= 1e-12 && rank_mismatches == 0 && secs < 10.0,
        detail: format!(
            "{} tensors, max rel error {worst:.2e} (<= 1e-12), rank mismatches {rank_mismatches}, {secs:.2}s (< 10s)",
            instances.len()
        ),
    }
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    let mut rank_failures = 0;
    for i in 0..20 {
        let d = 3 + i % 2;
        let dims: Vec<usize> = (0..d).map(|_| r.random_range(3..=4)).collect();
        let v = sum_of_elementary(&mut r, &dims, 2 + i % 2);
        // random proper subset of modes
        let alpha = loop {
            let pick: Vec<usize> = (0..d).filter(|_| r.random_bool(0.5)).collect();
            if !pick.is_empty() && pick.len() < d {
                break ModeSet::new(pick).unwrap();
            }
        };
        let u = minimal_subspace(&v, &alpha, 0.0).unwrap();
        let rank = u.rank();
        let rest = alpha.complement_in(&ModeSet::full(d));
        let phi_dims: Vec<usize> = rest.iter().map(|&j| dims[j]).collect();
        let rows: usize = alpha.indices().iter().map(|&j| dims[j]).product();
        let mut k = Matrix::zeros(rows, 3 * rank);
        for c in 0..3 * rank {
            let phi = DenseTensor::random(&phi_dims, &mut r);
            let w = contract_functional(&v, &alpha, &phi).unwrap();
            k.set_column(c, &w.to_vector());
        }
        let span = column_space(&k, 1e-12);
        if span.rank() != rank {
            rank_failures += 1;
            continue;
        }
        let angle = principal_angles(u.basis(), span.basis()).into_iter().fold(0.0, f64::max);
        worst = worst.max(angle);
    }
    Outcome {
        id: 2,
        name: "minimal subspace equals span of contractions",
        pass: worst <= 1e-10 && rank_failures == 0,
        detail: format!("20 tensors, max principal angle {worst:.2e} (<= 1e-10), span rank mismatches {rank_failures}"),
    }
}

fn criterion_3(instances: &[(Instance, Option<usize>)]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failing = 0;
    for (inst, _) in instances {
        let rep = nestedness_check(&inst.v, &inst.tree, 0.0, 1e-10).unwrap();
        worst = worst.max(rep.max_defect());
        if !rep.holds() {
            failing += 1;
        }
    }
    Outcome {
        id: 3,
        name: "nestedness of minimal subspaces",
        pass: failing == 0,
        detail: format!("{} instances, max projection defect {worst:.2e} (<= 1e-10)", instances.len()),
    }
}

fn rank_tuple(tree: &DimensionTree, entries: &[(&[usize], usize)]) -> TbRank {
    let mut r = TbRank::new(vec![0; tree.len()]);
    for (modes, rank) in entries {
        r.set(tree.find(&ms(modes)).unwrap(), *rank);
    }
    assert!(r.as_slice().iter().all(|&x| x > 0), "every node needs a rank");
    r
}

fn criterion_4(instances: &[(Instance, Option<usize>)]) -> Outcome {
    let mut inadmissible_outputs = 0;
    for (inst, _) in instances {
        let c = from_dense(&inst.v, &inst.tree, 0.0, None).unwrap();
        if !check_admissible(&c.tensor.ranks(), &inst.tree, inst.v.dims()).unwrap().is_admissible() {
            inadmissible_outputs += 1;
        }
    }
    let tucker = std_tree(TreeKind::Tucker, 3);
    let tt = std_tree(TreeKind::TensorTrain, 3);
    // each tuple breaks exactly one condition
    let cases: Vec<(u8, DimensionTree, Vec<usize>, TbRank)> = vec![
        (
            1,
            tt.clone(),
            vec![3, 3, 3],
            rank_tuple(&tt, &[(&[1, 2, 3], 2), (&[1], 3), (&[2, 3], 3), (&[2], 3), (&[3], 3)]),
        ),
        (
            2,
            tucker.clone(),
            vec![2, 4, 4],
            rank_tuple(&tucker, &[(&[1, 2, 3], 1), (&[1], 3), (&[2], 4), (&[3], 4)]),
        ),
        (
            3,
            tt.clone(),
            vec![2, 2, 2],
            rank_tuple(&tt, &[(&[1, 2, 3], 1), (&[1], 2), (&[2, 3], 2), (&[2], 1), (&[3], 1)]),
        ),
        (
            4,
            tucker.clone(),
            vec![4, 4, 4],
            rank_tuple(&tucker, &[(&[1, 2, 3], 1), (&[1], 4), (&[2], 1), (&[3], 1)]),
        ),
    ];
    let mut wrong = Vec::new();
    for (cond, tree, dims, ranks) in &cases {
        let rep = check_admissible(ranks, tree, dims).unwrap();
        let exact = (1..=4).all(|c| rep.holds(c) == (c != *cond));
        let v = DenseTensor::random(dims, &mut rng(40 + *cond as u64));
        let rejected = matches!(truncate(&v, tree, ranks, 0.0), Err(Error::Inadmissible(_)));
        if !exact || !rejected {
            wrong.push(*cond);
        }
    }
    Outcome {
        id: 4,
        name: "admissibility conditions",
        pass: inadmissible_outputs == 0 && wrong.is_empty(),
        detail: format!(
            "{} compressions admissible except {inadmissible_outputs}; adversarial tuples misdiagnosed: {wrong:?}",
            instances.len()
        ),
    }
}

/// Leading `r` left singular vectors.
fn leading(m: &Matrix, r: usize) -> Matrix {
    svd(m).u.columns(0, r).into_owned()
}

/// Best Tucker approximation error of multilinear rank `ranks` found by HOOI
/// from the HOSVD start and `restarts` random orthonormal starts.
fn hooi_best(v: &DenseTensor, ranks: &[usize], restarts: usize, seed: u64) -> f64 {
    let d = v.order();
    let norm2 = v.frobenius_norm().powi(2);
    let mut r = rng(seed);
    let mut best = f64::INFINITY;
    for start in 0..=restarts {
        let mut us: Vec<Matrix> = (0..d)
            .map(|k| {
                if start == 0 {
                    leading(&v.unfold(&[k]), ranks[k])
                } else {
                    tbf_core::linalg::orthonormalize(&randn(&mut r, v.dims()[k], ranks[k]))
                }
            })
            .collect();
        let mut prev = f64::INFINITY;
        for _ in 0..500 {
            for k in 0..d {
                let mut y = v.clone();
                for (j, u) in us.iter().enumerate() {
                    if j != k {
                        y = y.mode_product(j, &u.transpose());
                    }
                }
                us[k] = leading(&y.unfold(&[k]), ranks[k]);
            }
            let mut core = v.clone();
            for (j, u) in us.iter().enumerate() {
                core = core.mode_product(j, &u.transpose());
            }
            let err = (norm2 - core.frobenius_norm().powi(2)).max(0.0).sqrt();
            if (prev - err).abs() <= 1e-14 * norm2.sqrt() {
                prev = err;
                break;
            }
            prev = err;
        }
        best = best.min(prev);
    }
    best
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let tree2 = std_tree(TreeKind::Tucker, 2);
    let mut ey_worst: f64 = 0.0;
    for _ in 0..10 {
        let (m, n) = (r.random_range(3..=7), r.random_range(3..=7));
        let a = randn(&mut r, m, n);
        let a = &a / a.norm();
        let k = r.random_range(1..m.min(n));
        let v = DenseTensor::new(vec![m, n], a.transpose().as_slice().to_vec()).unwrap();
        let target = rank_tuple(&tree2, &[(&[1, 2], 1), (&[1], k), (&[2], k)]);
        let c = truncate(&v, &tree2, &target, 0.0).unwrap();
        let err = c.tensor.evaluate().sub(&v).unwrap().frobenius_norm();
        let s = a.singular_values();
        let mut s: Vec<f64> = s.iter().copied().collect();
        s.sort_by(|x, y| y.total_cmp(x));
        let ey = s[k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        ey_worst = ey_worst.max((err - ey).abs());
    }

    let tt = std_tree(TreeKind::TensorTrain, 3);
    let mut ratio_worst: f64 = 0.0;
    let mut bound_violations = 0;
    for i in 0..6 {
        let signal = sum_of_elementary(&mut r, &[4, 4, 4], 3);
        let noise = DenseTensor::random(&[4, 4, 4], &mut r);
        let v = signal.axpy(0.3 * (i as f64), &noise).unwrap();
        for (r1, r2, r3) in [(2, 2, 2), (3, 2, 2), (2, 3, 2)] {
            let target = rank_tuple(&tt, &[(&[1, 2, 3], 1), (&[1], r1), (&[2, 3], r1), (&[2], r2), (&[3], r3)]);
            let c = truncate(&v, &tt, &target, 0.0).unwrap();
            let err = c.tensor.evaluate().sub(&v).unwrap().frobenius_norm();
            if err > c.error_bound * (1.0 + 1e-12) {
                bound_violations += 1;
            }
            let best = hooi_best(&v, &[r1, r2, r3], 8, 50 + i);
            ratio_worst = ratio_worst.max(err / best);
        }
    }
    Outcome {
        id: 5,
        name: "truncation quality",
        pass: ey_worst <= 1e-12 && bound_violations == 0 && ratio_worst <= 2.0,
        detail: format!(
            "d=2 max |err - EY| {ey_worst:.2e} (<= 1e-12); d=3 bound violations {bound_violations}, max err/best {ratio_worst:.4} (<= 2)"
        ),
    }
}

fn base_point(kind: TreeKind, dims: &[usize], rank: usize, seed: u64) -> TbfTensor {
    let tree = std_tree(kind, dims.len());
    let v = DenseTensor::random(dims, &mut rng(seed));
    truncate(&v, &tree, &TbRank::uniform(&tree, rank), 0.0).unwrap().tensor
}

fn random_direction(base: &TbfTensor, r: &mut impl Rng) -> TangentParams {
    let mut t = TangentParams::zeros(base);
    for l in &mut t.leaf_maps {
        *l = randn(r, l.nrows(), l.ncols());
    }
    for c in &mut t.transfers {
        *c = DenseTensor::random(c.dims(), r);
    }
    let n = t.norm();
    t.scaled(1.0 / n)
}

const KINDS: [TreeKind; 3] = [TreeKind::Tucker, TreeKind::TensorTrain, TreeKind::Balanced];

fn criterion_6() -> Outcome {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    let mut origin_exact = true;
    let mut failures = 0;
    for (k, kind) in KINDS.iter().enumerate() {
        for b in 0..2 {
            let base = base_point(*kind, &[3, 3, 3, 3], 2, 60 + 10 * k as u64 + b);
            let at_base = chart_encode(&base, &base.evaluate(), 1e-10).unwrap();
            origin_exact &= at_base.leaf_maps.iter().all(|l| l.iter().all(|&x| x == 0.0));
            for _ in 0..20 {
                let p = ChartParams::origin(&base).axpy(0.05, &random_direction(&base, &mut r));
                let w = chart_decode(&base, &p).unwrap().evaluate();
                match chart_encode(&base, &w, 1e-10).and_then(|q| chart_decode(&base, &q)) {
                    Ok(back) => worst = worst.max(rel(&back.evaluate(), &w)),
                    Err(_) => failures += 1,
                }
            }
        }
    }
    Outcome {
        id: 6,
        name: "chart round trip",
        pass: worst <= 1e-10 && failures == 0 && origin_exact,
        detail: format!(
            "120 neighbours, max rel decode(encode(w)) - w {worst:.2e} (<= 1e-10), encode failures {failures}, base encodes to zero leaf maps: {origin_exact}"
        ),
    }
}

fn criterion_7() -> Outcome {
    let mut r = rng(7);
    let hs = [1e-2, 1e-3, 1e-4];
    let mut orders = Vec::new();
    for (k, kind) in KINDS.iter().enumerate() {
        for b in 0..2 {
            let base = base_point(*kind, &[3, 4, 3], 2, 70 + 10 * k as u64 + b);
            let t = random_direction(&base, &mut r);
            let exact = tangent_assemble(&base, &t).unwrap();
            let origin = ChartParams::origin(&base);
            let errs: Vec<f64> = hs
                .iter()
                .map(|&h| {
                    let plus = chart_decode(&base, &origin.axpy(h, &t)).unwrap().evaluate();
                    let minus = chart_decode(&base, &origin.axpy(-h, &t)).unwrap().evaluate();
                    let fd = plus.sub(&minus).unwrap().scaled(0.5 / h);
                    fd.sub(&exact).unwrap().frobenius_norm()
                })
                .collect();
            for w in errs.windows(2) {
                orders.push((w[0] / w[1]).log10());
            }
        }
    }
    let (lo, hi) = orders.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &o| (a.min(o), b.max(o)));
    Outcome {
        id: 7,
        name: "tangent map matches central differences",
        pass: orders.iter().all(|o| (o - 2.0).abs() <= 0.2),
        detail: format!("observed orders in [{lo:.3}, {hi:.3}] (2.0 +/- 0.2) over {} pairs", orders.len()),
    }
}

fn criterion_8() -> Outcome {
    let mut lines = Vec::new();
    let mut all = true;
    for (k, kind) in KINDS.iter().enumerate() {
        let mut matched = 0;
        let mut sample = (0, 0, 0);
        for b in 0..10 {
            let base = base_point(*kind, &[3, 3, 3, 3], 2, 80 + 20 * k as u64 + b);
            let j = tangent_generators(&base, Gauge::Full).unwrap();
            let observed = numerical_rank(&svd(&j).s, 1e-10);
            let predicted = parameter_dimension(&base);
            sample = (observed, predicted, tangent_dimension(&base));
            if observed == predicted {
                matched += 1;
            }
        }
        all &= matched == 10;
        lines.push(format!(
            "{kind:?} {matched}/10 (rank {} vs count {}, gauge-reduced {})",
            sample.0, sample.1, sample.2
        ));
    }
    Outcome {
        id: 8,
        name: "tangent space dimension",
        pass: all,
        detail: lines.join("; "),
    }
}

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    let (mut orth, mut idem, mut fixed): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (k, kind) in KINDS.iter().enumerate() {
        for b in 0..3 {
            let base = base_point(*kind, &[3, 3, 3, 3], 2, 90 + 10 * k as u64 + b);
            let basis = tangent_basis(&base).unwrap();
            let x = DenseTensor::random(base.dims(), &mut r);
            let x = x.scaled(1.0 / x.frobenius_norm());
            let (px, _) = project_tangent(&base, &x).unwrap();
            let res = x.sub(&px).unwrap();
            for z in &basis {
                orth = orth.max(res.inner(z).unwrap().abs());
            }
            let (ppx, _) = project_tangent(&base, &px).unwrap();
            idem = idem.max(ppx.sub(&px).unwrap().frobenius_norm());
            let v = base.evaluate();
            let (pv, _) = project_tangent(&base, &v).unwrap();
            fixed = fixed.max(rel(&pv, &v));
        }
    }
    Outcome {
        id: 9,
        name: "metric projection",
        pass: orth <= 1e-10 && idem <= 1e-12 && fixed <= 1e-12,
        detail: format!(
            "max residual inner {orth:.2e} (<= 1e-10), idempotence {idem:.2e} (<= 1e-12), P(base) - base {fixed:.2e} (<= 1e-12)"
        ),
    }
}

/// `exp(m)` by scaling and squaring with a degree-18 Taylor polynomial.
fn expm(m: &Matrix) -> Matrix {
    let norm = m.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = m / 2f64.powi(squarings);
    let n = m.nrows();
    let mut out = Matrix::identity(n, n);
    for k in (1..=18).rev() {
        out = Matrix::identity(n, n) + (&a * out) / k as f64;
    }
    for _ in 0..squarings {
        out = &out * &out;
    }
    out
}

/// Dense matrix of `Σ_j I ⊗ … A_j … ⊗ I` in row-major index order.
fn kron_sum(site: &[Matrix]) -> Matrix {
    let dims: Vec<usize> = site.iter().map(|m| m.nrows()).collect();
    let total: usize = dims.iter().product();
    let mut h = Matrix::zeros(total, total);
    for (j, a) in site.iter().enumerate() {
        let before: usize = dims[..j].iter().product();
        let after: usize = dims[j + 1..].iter().product();
        h += Matrix::identity(before, before).kronecker(a).kronecker(&Matrix::identity(after, after));
    }
    h
}

fn criterion_10() -> Outcome {
    let mut r = rng(10);
    let site: Vec<Matrix> = (0..3).map(|_| sym(&mut r, 8)).collect();
    let op = SumOfProductsOperator::separable(site.clone()).unwrap();
    let s0 = HartreeState::new(0.0, 1.0, (0..3).map(|_| randv(&mut r, 8)).collect()).unwrap();
    let start = Instant::now();
    let traj = integrate_hartree(&op, &s0, 1.0, 1e-3, Scheme::Rk4).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let exact = expm(&kron_sum(&site)) * s0.to_dense().to_vector();
    let got = traj.last().unwrap().to_dense().to_vector();
    let err = (&got - &exact).norm() / exact.norm();
    Outcome {
        id: 10,
        name: "Hartree flow is exact for separable operators",
        pass: err <= 1e-6 && secs < 30.0,
        detail: format!("dims 8x8x8, rel error vs dense exponential {err:.2e} (<= 1e-6), integration {secs:.2}s (< 30s)"),
    }
}

fn criterion_11() -> Outcome {
    let mut r = rng(11);
    let mut mu = 0.0;
    let mut factors = Vec::new();
    let mut site = Vec::new();
    for _ in 0..3 {
        let a = sym(&mut r, 8);
        let eig = a.clone().symmetric_eigen();
        let pick = r.random_range(0..8);
        mu += eig.eigenvalues[pick];
        factors.push(eig.eigenvectors.column(pick).into_owned());
        site.push(a);
    }
    let op = SumOfProductsOperator::separable(site).unwrap();
    let lambda0 = 1.7;
    let s0 = HartreeState::new(0.0, lambda0, factors).unwrap();
    let traj = integrate_hartree(&op, &s0, 1.0, 1e-3, Scheme::Rk4).unwrap();
    let expected = lambda0 * f64::exp(mu);
    let err = (traj.last().unwrap().lambda - expected).abs() / expected.abs();
    Outcome {
        id: 11,
        name: "amplitude follows its closed form",
        pass: err <= 1e-8,
        detail: format!("mu {mu:.4}, rel error of lambda(1) {err:.2e} (<= 1e-8)"),
    }
}

fn random_operator(r: &mut impl Rng, dims: &[usize], terms: usize) -> SumOfProductsOperator {
    let terms = (0..terms)
        .map(|_| ProductTerm {
            weight: r.random_range(-1.0..1.0),
            factors: dims.iter().map(|&n| randn(r, n, n) / (n as f64).sqrt()).collect(),
        })
        .collect();
    SumOfProductsOperator::new(dims.to_vec(), terms).unwrap()
}

fn criterion_12() -> Outcome {
    let mut r = rng(12);
    let mut gauge: f64 = 0.0;
    let mut steps = 0;
    let ops = [
        SumOfProductsOperator::separable((0..3).map(|_| sym(&mut r, 8)).collect()).unwrap(),
        random_operator(&mut r, &[4, 3, 5], 3),
    ];
    for op in &ops {
        let s0 = HartreeState::new(0.0, 1.0, op.dims().iter().map(|&n| randv(&mut r, n)).collect()).unwrap();
        for s in integrate_hartree(op, &s0, 1.0, 1e-3, Scheme::Rk4).unwrap() {
            let rhs = hartree_rhs(op, &s);
            for (d, v) in rhs.factor_dots.iter().zip(&s.factors) {
                gauge = gauge.max(d.dot(v).abs());
            }
            steps += 1;
        }
    }

    let op = random_operator(&mut r, &[3, 4, 3], 3);
    let s0 = HartreeState::new(0.0, 1.0, vec![randv(&mut r, 3), randv(&mut r, 4), randv(&mut r, 3)]).unwrap();
    let tree = std_tree(TreeKind::Tucker, 3);
    let h = integrate_hartree(&op, &s0, 0.5, 1e-2, Scheme::Rk4).unwrap();
    let tp = integrate_tangent_projected(&op, &s0.to_tbf(&tree).unwrap(), 0.0, 0.5, 1e-2, Scheme::Rk4).unwrap();
    let mut track: f64 = if h.len() == tp.len() { 0.0 } else { f64::INFINITY };
    for (a, b) in h.iter().zip(&tp) {
        track = track.max(rel(&b.state.evaluate(), &a.to_dense()));
    }
    Outcome {
        id: 12,
        name: "gauge and tangent-projected integrator",
        pass: gauge <= 1e-10 && track <= 1e-8,
        detail: format!(
            "max |<v_j', v_j>| {gauge:.2e} over {steps} states (<= 1e-10); rank-1 tangent vs Hartree {track:.2e} (<= 1e-8)"
        ),
    }
}

fn cli_run(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tbf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("the tbf binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Every command, in order; returns the reports and all output files.
fn cli_session(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut r = rng(13);
    let v = sum_of_elementary(&mut r, &[3, 3, 3, 3], 3)
        .axpy(1e-3, &DenseTensor::random(&[3, 3, 3, 3], &mut r))
        .unwrap();
    fs::write(dir.join("v.dense"), write_dense(&v)).unwrap();
    fs::write(dir.join("tree.txt"), std_tree(TreeKind::Balanced, 4).serialize()).unwrap();
    let op = random_operator(&mut r, &[3, 3, 3, 3], 2);
    fs::write(dir.join("a.sop"), write_sop(&op)).unwrap();

    let commands: Vec<Vec<&str>> = vec![
        vec!["compress", "--input", "v.dense", "--tree", "tree.txt", "--output", "c.tbf"],
        vec!["compress", "--input", "v.dense", "--tree", "tt", "--tol", "1e-2", "--output", "c_tt.tbf"],
        vec!["ranks", "--input", "v.dense", "--tree", "tree.txt", "--tol", "1e-6", "--seed", "7"],
        vec!["truncate", "--input", "c.tbf", "--ranks", "*=2", "--output", "t2.tbf"],
        vec!["truncate", "--input", "v.dense", "--tree", "tucker", "--ranks", "*=1", "--output", "t1.tbf"],
        vec!["project", "--input", "t2.tbf", "--vector", "v.dense", "--output", "p.dense"],
        vec!["project", "--input", "t2.tbf", "--output", "p_self.dense"],
        vec![
            "evolve", "--input", "t2.tbf", "--operator", "a.sop", "--dt", "0.01", "--t-end", "0.03", "--output",
            "traj2.txt", "--final", "f2.tbf",
        ],
        vec![
            "evolve", "--input", "t1.tbf", "--operator", "a.sop", "--dt", "0.01", "--t-end", "0.2", "--output",
            "traj1.txt", "--final", "f1.tbf",
        ],
    ];
    let mut out = Vec::new();
    for args in &commands {
        let (code, report) = cli_run(dir, args);
        out.push((format!("{} -> exit {code}", args.join(" ")), report.into_bytes()));
    }
    let mut files: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    for f in files {
        out.push((f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&f).unwrap()));
    }
    out
}

fn criterion_13() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = cli_session(a.path());
    let second = cli_session(b.path());
    let failed_cmds = first.iter().filter(|(k, _)| k.contains("-> exit") && !k.ends_with("exit 0")).count();
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    Outcome {
        id: 13,
        name: "CLI determinism",
        pass: first.len() == second.len() && differing.is_empty() && failed_cmds == 0,
        detail: format!(
            "{} reports and files compared, differing {:?}, non-zero exits {failed_cmds}",
            first.len(),
            differing
        ),
    }
}

fn main() {
    // libtest-style listing
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let start = Instant::now();
    let instances = random_instances();
    let outcomes = vec![
        criterion_1(&instances),
        criterion_2(),
        criterion_3(&instances),
        criterion_4(&instances),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
        criterion_11(),
        criterion_12(),
        criterion_13(),
    ];
    let mut unexpected = Vec::new();
    for o in &outcomes {
        let known = KNOWN_FAILING.iter().find(|(id, _)| *id == o.id);
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {:>2} {}: {}", o.id, o.name, o.detail);
        match (o.pass, known) {
            (false, Some((_, why))) => println!("       known failure: {why}"),
            (false, None) => unexpected.push(o.id),
            (true, Some(_)) => println!("       listed as a known failure but passed"),
            (true, None) => {}
        }
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!(
        "acceptance: {passed}/{} criteria pass, {:.1}s",
        outcomes.len(),
        start.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
