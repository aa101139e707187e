//! Batch front end for `tbf-core`: every subcommand reads text files, writes
//! its result file and prints a plain-text report on stdout.
//!
//! Reports and output files depend only on the inputs and flags, so two runs
//! with the same arguments produce identical bytes.

pub mod ranks;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use tbf_core::dense::injective_norm;
use tbf_core::io::fmt_scalar;
use tbf_core::{
    check_admissible, expm_action, from_dense, hartree_rhs, hartree_velocity, integrate_hartree,
    integrate_tangent_projected, nestedness_check, parse_dense, parse_sop, parse_tbf, project_tangent, tangent_basis,
    tb_rank, truncate, write_dense, write_tbf, write_trajectory, DenseTensor, DimensionTree, ErrorKind, HartreeState,
    Scheme, TbfTensor, TrajectoryPoint, TreeKind,
};

pub use ranks::RankSpec;

/// Defect tolerance for the nestedness verdict in `ranks`.
pub const NESTEDNESS_TOL: f64 = 1e-10;
/// Iteration cap of the injective-norm estimate in `ranks`.
pub const INJECTIVE_ITERS: usize = 200;

#[derive(Debug, Parser)]
#[command(name = "tbf", version, about = "Tree-based tensor formats: compress, diagnose, truncate, project, evolve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a dense tensor into tree-based format.
    Compress(CompressArgs),
    /// Report TB ranks, admissibility and nestedness of a dense tensor.
    Ranks(RanksArgs),
    /// Truncate a dense or tree-based tensor to bounded TB rank.
    Truncate(TruncateArgs),
    /// Project a tensor onto the tangent space at a base point.
    Project(ProjectArgs),
    /// Integrate a sum-of-products flow on the fixed-rank manifold.
    Evolve(EvolveArgs),
}

#[derive(Debug, Args)]
pub struct TreeArg {
    /// Tree file, or one of `tucker`, `tt`, `balanced`.
    #[arg(long)]
    pub tree: String,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    /// Dense tensor file.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub tree: TreeArg,
    /// Relative singular value cutoff.
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    /// Output TBF file.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RanksArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub tree: TreeArg,
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    /// Seed of the injective-norm estimate.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TruncateArgs {
    /// Dense or TBF file (detected from the header).
    #[arg(long)]
    pub input: PathBuf,
    /// Required for dense input; TBF input carries its own tree.
    #[arg(long)]
    pub tree: Option<String>,
    /// Target ranks, e.g. `1=2,{2,3}=2` or `*=3`; unlisted nodes keep their rank.
    #[arg(long)]
    pub ranks: Option<RankSpec>,
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Base point (TBF file); orthonormalized before use.
    #[arg(long)]
    pub input: PathBuf,
    /// Dense tensor to project; defaults to the base point itself.
    #[arg(long)]
    pub vector: Option<PathBuf>,
    /// Output dense file with the projection.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Hartree for rank-one inputs, tangent projection otherwise.
    Auto,
    Hartree,
    Tangent,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    /// Initial state (TBF file).
    #[arg(long)]
    pub input: PathBuf,
    /// Sum-of-products operator file.
    #[arg(long)]
    pub operator: PathBuf,
    #[arg(long)]
    pub dt: f64,
    #[arg(long = "t-end")]
    pub t_end: f64,
    #[arg(long, default_value = "rk4", value_parser = parse_scheme)]
    pub scheme: Scheme,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
    /// Trajectory file (`t λ ‖v‖ residual` per step).
    #[arg(long)]
    pub output: PathBuf,
    /// Optional TBF file for the final state.
    #[arg(long = "final")]
    pub final_state: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    s.parse().map_err(|e: tbf_core::Error| e.to_string())
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: tbf_core::Error,
    },
    #[error(transparent)]
    Core(#[from] tbf_core::Error),
}

impl CliError {
    /// 2 validation, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        let kind = match self {
            CliError::File { source, .. } | CliError::Core(source) => source.kind(),
        };
        match kind {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::File {
        path: path.to_owned(),
        source: e.into(),
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::File {
        path: path.to_owned(),
        source: e.into(),
    })
}

fn in_file<T>(path: &Path, r: tbf_core::Result<T>) -> Result<T> {
    r.map_err(|source| CliError::File {
        path: path.to_owned(),
        source,
    })
}

fn load_dense(path: &Path) -> Result<DenseTensor> {
    in_file(path, parse_dense(&read(path)?))
}

fn load_tbf(path: &Path) -> Result<TbfTensor> {
    in_file(path, parse_tbf(&read(path)?))
}

/// A standard tree name, else a tree file.
fn resolve_tree(arg: &str, d: usize) -> Result<DimensionTree> {
    if let Ok(kind) = arg.parse::<TreeKind>() {
        if !Path::new(arg).exists() {
            return Ok(DimensionTree::standard(kind, d)?);
        }
    }
    let path = Path::new(arg);
    let tree = in_file(path, DimensionTree::parse(&read(path)?))?;
    if tree.d() != d {
        return Err(CliError::File {
            path: path.to_owned(),
            source: tbf_core::Error::DimensionMismatch(format!("tree over {} modes, tensor has {d}", tree.d())),
        });
    }
    Ok(tree)
}

fn first_token(text: &str) -> Option<&str> {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .and_then(|l| l.split_whitespace().next())
}

fn relative_error(approx: &DenseTensor, exact: &DenseTensor) -> f64 {
    let diff = approx.sub(exact).map(|d| d.frobenius_norm()).unwrap_or(f64::NAN);
    let norm = exact.frobenius_norm();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

fn dims_line(out: &mut String, dims: &[usize]) {
    out.push_str("dims");
    for n in dims {
        let _ = write!(out, " {n}");
    }
    out.push('\n');
}

/// Runs one subcommand and returns its report.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Compress(a) => compress(a),
        Command::Ranks(a) => ranks(a),
        Command::Truncate(a) => truncate_cmd(a),
        Command::Project(a) => project(a),
        Command::Evolve(a) => evolve(a),
    }
}

fn compress(a: &CompressArgs) -> Result<String> {
    let v = load_dense(&a.input)?;
    let tree = resolve_tree(&a.tree.tree, v.order())?;
    let c = from_dense(&v, &tree, a.tol, None)?;
    write(&a.output, &write_tbf(&c.tensor))?;

    let mut out = String::from("compress\n");
    dims_line(&mut out, v.dims());
    for id in 0..tree.len() {
        let _ = writeln!(
            out,
            "node {} rank {} discarded {}",
            tree.modes(id),
            c.tensor.rank(id),
            fmt_scalar(c.discarded(id))
        );
    }
    let _ = writeln!(out, "error_bound {}", fmt_scalar(c.error_bound));
    let _ = writeln!(out, "relative_error {}", fmt_scalar(relative_error(&c.tensor.evaluate(), &v)));
    Ok(out)
}

fn ranks(a: &RanksArgs) -> Result<String> {
    let v = load_dense(&a.input)?;
    let tree = resolve_tree(&a.tree.tree, v.order())?;
    let r = tb_rank(&v, &tree, a.tol)?;
    let adm = check_admissible(&r, &tree, v.dims())?;
    let nest = nestedness_check(&v, &tree, a.tol, NESTEDNESS_TOL)?;
    let inj = injective_norm(&v, INJECTIVE_ITERS, a.seed);

    let mut out = String::from("ranks\n");
    dims_line(&mut out, v.dims());
    for id in 0..tree.len() {
        let kind = if tree.is_leaf(id) { "leaf" } else { "node" };
        let _ = writeln!(out, "{kind} {} rank {}", tree.modes(id), r.get(id));
    }
    let names = [
        "root rank equals one",
        "leaf rank at most mode size",
        "node rank at most product of child ranks",
        "child rank at most parent rank times sibling ranks",
    ];
    for (k, name) in names.iter().enumerate() {
        let cond = k as u8 + 1;
        let verdict = if adm.holds(cond) { "holds" } else { "violated" };
        let _ = writeln!(out, "condition {cond} ({name}): {verdict}");
        for v in adm.violations.iter().filter(|v| v.condition() == cond) {
            let _ = writeln!(out, "  {v}");
        }
    }
    let _ = writeln!(
        out,
        "nestedness {} max_defect {}",
        if nest.holds() { "holds" } else { "fails" },
        fmt_scalar(nest.max_defect())
    );
    let _ = writeln!(out, "frobenius_norm {}", fmt_scalar(v.frobenius_norm()));
    let _ = writeln!(
        out,
        "injective_norm {} ({})",
        fmt_scalar(inj.value),
        if inj.exact { "exact" } else { "lower bound" }
    );
    Ok(out)
}

fn truncate_cmd(a: &TruncateArgs) -> Result<String> {
    let text = read(&a.input)?;
    let (v, tree) = match first_token(&text) {
        Some("TBF") => {
            let x = in_file(&a.input, parse_tbf(&text))?;
            (x.evaluate(), x.tree().clone())
        }
        _ => {
            let v = in_file(&a.input, parse_dense(&text))?;
            let arg = a.tree.as_deref().ok_or_else(|| {
                tbf_core::Error::InvalidArgument("--tree is required for dense input".into())
            })?;
            let tree = resolve_tree(arg, v.order())?;
            (v, tree)
        }
    };
    let current = tb_rank(&v, &tree, a.tol)?;
    let target = match &a.ranks {
        Some(spec) => spec.resolve(&tree, &current)?,
        None => current,
    };
    let c = truncate(&v, &tree, &target, a.tol)?;
    write(&a.output, &write_tbf(&c.tensor))?;

    let mut out = String::from("truncate\n");
    dims_line(&mut out, v.dims());
    for id in 0..tree.len() {
        let _ = writeln!(
            out,
            "node {} target {} rank {} discarded {}",
            tree.modes(id),
            target.get(id),
            c.tensor.rank(id),
            fmt_scalar(c.discarded(id))
        );
    }
    let _ = writeln!(out, "error_bound {}", fmt_scalar(c.error_bound));
    let _ = writeln!(out, "relative_error {}", fmt_scalar(relative_error(&c.tensor.evaluate(), &v)));
    Ok(out)
}

fn project(a: &ProjectArgs) -> Result<String> {
    let base = load_tbf(&a.input)?.orthonormalize()?;
    let x = match &a.vector {
        Some(p) => load_dense(p)?,
        None => base.evaluate(),
    };
    let (px, _) = project_tangent(&base, &x)?;
    let basis = tangent_basis(&base)?;
    let resid = x.sub(&px)?;
    let mut max_inner: f64 = 0.0;
    for z in &basis {
        max_inner = max_inner.max(resid.inner(z)?.abs());
    }
    write(&a.output, &write_dense(&px))?;

    let mut out = String::from("project\n");
    dims_line(&mut out, x.dims());
    let _ = writeln!(out, "ranks {}", base.ranks().display(base.tree()));
    let _ = writeln!(out, "tangent_dimension {}", basis.len());
    let _ = writeln!(out, "norm_input {}", fmt_scalar(x.frobenius_norm()));
    let _ = writeln!(out, "norm_projection {}", fmt_scalar(px.frobenius_norm()));
    let _ = writeln!(out, "residual_norm {}", fmt_scalar(resid.frobenius_norm()));
    let _ = writeln!(out, "max_residual_inner {}", fmt_scalar(max_inner));
    let _ = writeln!(out, "relative_change {}", fmt_scalar(relative_error(&px, &x)));
    Ok(out)
}

fn evolve(a: &EvolveArgs) -> Result<String> {
    let x0 = load_tbf(&a.input)?;
    let op = in_file(&a.operator, parse_sop(&read(&a.operator)?))?;
    if op.dims() != x0.dims() {
        return Err(tbf_core::Error::DimensionMismatch(format!(
            "operator acts on {:?}, state has dims {:?}",
            op.dims(),
            x0.dims()
        ))
        .into());
    }
    let rank_one = x0.ranks().as_slice().iter().all(|&r| r == 1);
    let method = match a.method {
        Method::Auto if rank_one => Method::Hartree,
        Method::Auto => Method::Tangent,
        m => m,
    };
    let (points, last) = match method {
        Method::Hartree => {
            let s0 = HartreeState::from_tbf(&x0, 0.0)?;
            let traj = integrate_hartree(&op, &s0, a.t_end, a.dt, a.scheme)?;
            let mut points = Vec::with_capacity(traj.len());
            for s in &traj {
                let v = s.to_dense();
                let vdot = hartree_velocity(s, &hartree_rhs(&op, s));
                points.push(TrajectoryPoint {
                    t: s.t,
                    lambda: s.lambda,
                    norm: v.frobenius_norm(),
                    residual: op.apply(&v)?.sub(&vdot)?.frobenius_norm(),
                });
            }
            let last = traj.last().expect("trajectory includes both endpoints").to_tbf(x0.tree())?;
            (points, last)
        }
        _ => {
            let traj = integrate_tangent_projected(&op, &x0, 0.0, a.t_end, a.dt, a.scheme)?;
            let points = traj
                .iter()
                .map(|s| TrajectoryPoint {
                    t: s.t,
                    lambda: s.state.transfer(s.state.tree().root()).frobenius_norm(),
                    norm: s.state.evaluate().frobenius_norm(),
                    residual: s.residual,
                })
                .collect();
            (points, traj.last().expect("trajectory includes both endpoints").state.clone())
        }
    };
    write(&a.output, &write_trajectory(&points))?;
    if let Some(p) = &a.final_state {
        write(p, &write_tbf(&last))?;
    }
    let reference = expm_action(&op, &x0.evaluate(), a.t_end)?;
    let fin = points.last().unwrap();

    let mut out = String::from("evolve\n");
    dims_line(&mut out, x0.dims());
    let _ = writeln!(
        out,
        "method {}",
        if method == Method::Hartree { "hartree" } else { "tangent" }
    );
    let _ = writeln!(out, "scheme {}", if a.scheme == Scheme::Rk4 { "rk4" } else { "euler" });
    let _ = writeln!(out, "samples {}", points.len());
    let _ = writeln!(out, "t_end {}", fmt_scalar(fin.t));
    let _ = writeln!(out, "final_norm {}", fmt_scalar(fin.norm));
    let _ = writeln!(
        out,
        "max_residual {}",
        fmt_scalar(points.iter().map(|p| p.residual).fold(0.0, f64::max))
    );
    let _ = writeln!(out, "error_vs_exponential {}", fmt_scalar(relative_error(&last.evaluate(), &reference)));
    Ok(out)
}
