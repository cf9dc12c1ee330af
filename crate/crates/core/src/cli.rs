//! Subcommands behind the `bouss` binary. Each returns a process exit code:
//! 0 success, 1 configuration or validation error, 2 solver nonconvergence,
//! 3 gradient-check failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::control::{
    adjoint_gradient, fd_gradient, project_to_admissible, projected_gradient_descent, relative_discrepancy,
    uniform_bound_report, Control, CostModel, OptStatus,
};
use crate::error::{Error, Result};
use crate::num::Num;
use crate::forms::{check_form_identities, ConstantsReport};
use crate::spaces::BoundaryTrace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_GRADIENT: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    MeshInfo,
    CheckForms,
    Solve,
    Optimize,
    GradCheck,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::PicardDiverged { .. } | Error::LinearSolveFailed { .. } | Error::SingularMatrix(_) | Error::EigenNotConverged(_) => {
            EXIT_SOLVER
        }
        _ => EXIT_CONFIG,
    }
}

/// Loads the config (defaults if none is given), applies the command-line
/// overrides and dispatches.
pub fn run(inv: &Invocation) -> i32 {
    let cfg = match load(inv) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out = cfg.output.directory.clone();
    let result = match inv.command {
        Command::MeshInfo => cmd_mesh_info(&cfg, &out),
        Command::CheckForms => cmd_check_forms(&cfg, &out),
        Command::Solve => cmd_solve(&cfg, &out),
        Command::Optimize => cmd_optimize(&cfg, &out),
        Command::GradCheck => cmd_grad_check(&cfg, &out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load(inv: &Invocation) -> Result<RunConfig> {
    let mut cfg = match &inv.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = inv.seed {
        cfg.seed = s;
    }
    if let Some(o) = &inv.out {
        cfg.output.directory = o.clone();
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

#[derive(Serialize)]
struct MeshInfo {
    nx: usize,
    ny: usize,
    h: f64,
    n_nodes: usize,
    n_elements: usize,
    n_boundary_edges: usize,
    gamma1_measure: f64,
    gamma2_measure: f64,
    velocity_dofs: usize,
    head_dofs: usize,
    temperature_dofs: usize,
    gamma1_trace_nodes: usize,
    gamma2_trace_nodes: usize,
}

/// Writes `nodes.csv`, `elements.csv`, `boundary.csv` and `mesh_info.json`.
pub fn cmd_mesh_info(cfg: &RunConfig, out: &Path) -> Result<i32> {
    use crate::mesh::BoundaryTag;
    use crate::spaces::{FunctionSpace, SpaceKind};
    let mesh = cfg.build_mesh()?;
    mesh.write_csv(out)?;
    let dofs = |k| FunctionSpace::new(mesh.clone(), k).n_dofs();
    let info = MeshInfo {
        nx: mesh.nx,
        ny: mesh.ny,
        h: mesh.h,
        n_nodes: mesh.n_nodes(),
        n_elements: mesh.n_elements(),
        n_boundary_edges: mesh.boundary_edges.len(),
        gamma1_measure: mesh.boundary_measure(BoundaryTag::Gamma1),
        gamma2_measure: mesh.boundary_measure(BoundaryTag::Gamma2),
        velocity_dofs: dofs(SpaceKind::Velocity),
        head_dofs: dofs(SpaceKind::Head),
        temperature_dofs: dofs(SpaceKind::Temperature),
        gamma1_trace_nodes: BoundaryTrace::new(&mesh, BoundaryTag::Gamma1).len(),
        gamma2_trace_nodes: BoundaryTrace::new(&mesh, BoundaryTag::Gamma2).len(),
    };
    write_json(&out.join("mesh_info.json"), &info)?;
    println!(
        "mesh {}x{}: {} nodes, {} elements; dofs z/P/w = {}/{}/{}",
        info.nx, info.ny, info.n_nodes, info.n_elements, info.velocity_dofs, info.head_dofs, info.temperature_dofs
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct FormCheck {
    tol_b: f64,
    tol_c: f64,
    identities: crate::forms::IdentityReport,
    constants_positive: bool,
    passed: bool,
}

/// Samples the skew identities of `b` and `c` and estimates the constants;
/// writes `constants.json` and `form_checks.json`.
pub fn cmd_check_forms(cfg: &RunConfig, out: &Path) -> Result<i32> {
    std::fs::create_dir_all(out)?;
    let mesh = cfg.build_mesh()?;
    let seed = cfg.forms_seed();
    let identities = check_form_identities(&mesh, cfg.forms.n_samples, seed)?;
    let constants = ConstantsReport::estimate(&mesh, cfg.forms.n_samples.min(50), seed)?;
    write_json(&out.join("constants.json"), &constants)?;
    let passed = identities.passes(cfg.forms.tol_b, cfg.forms.tol_c) && constants.all_positive();
    let report =
        FormCheck { tol_b: cfg.forms.tol_b, tol_c: cfg.forms.tol_c, identities, constants_positive: constants.all_positive(), passed };
    write_json(&out.join("form_checks.json"), &report)?;
    println!(
        "b(u,v,v) {:.2e}, b antisym {:.2e}, c(z,w,w) {:.2e}, c antisym {:.2e}; c1 {:.3e}, c1' {:.3e}: {}",
        identities.b_vv,
        identities.b_antisymmetry,
        identities.c_ww,
        identities.c_antisymmetry,
        constants.c1_hat,
        constants.c1p_hat,
        if passed { "pass" } else { "FAIL" }
    );
    Ok(if passed { EXIT_OK } else { EXIT_CONFIG })
}

#[derive(Serialize)]
struct SolveSummary {
    n_steps: usize,
    steps_completed: usize,
    failure: Option<String>,
    max_relative_residual_z: f64,
    max_relative_residual_w: f64,
    bound_ratio_z: f64,
    bound_ratio_w: f64,
}

/// Runs the forward problem; writes `trajectory.csv`, `summary.json` and
/// snapshots under `snapshots/`. Partial output is kept on failure.
pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<i32> {
    std::fs::create_dir_all(out)?;
    let problem = cfg.build_problem()?;
    let (z0, w0) = cfg.initial_state(&problem);
    let control = cfg.initial_control(&problem)?;
    let traj = problem.solve_transient(&z0, &w0, &control)?;
    traj.log.write_csv(&out.join("trajectory.csv"))?;
    traj.write_snapshots(&out.join("snapshots"), cfg.output.stride)?;
    let rel = |r: f64, s: f64| if s > 0.0 { r.abs() / s } else { r.abs() };
    let done = traj.states.len() - 1;
    let mut truncated = control.clone();
    truncated.v1.truncate(done);
    truncated.v2.truncate(done);
    let (bz, bw) = uniform_bound_report(&problem, &traj, &truncated)?;
    let summary = SolveSummary {
        n_steps: problem.n_steps(),
        steps_completed: done,
        failure: traj.failure.as_ref().map(|e| e.to_string()),
        max_relative_residual_z: traj.log.rows.iter().map(|r| rel(r.residual_z, r.scale_z)).fold(0.0, f64::max),
        max_relative_residual_w: traj.log.rows.iter().map(|r| rel(r.residual_w, r.scale_w)).fold(0.0, f64::max),
        bound_ratio_z: bz,
        bound_ratio_w: bw,
    };
    write_json(&out.join("summary.json"), &summary)?;
    match traj.failure {
        Some(e) => {
            eprintln!("error: step {} of {}: {e}", done + 1, problem.n_steps());
            Ok(exit_code(&e))
        }
        None => {
            println!(
                "{} steps, final kinetic {:.6e}, thermal {:.6e}, max relative energy residual {:.2e}",
                done,
                traj.log.rows.last().map_or(0.0, |r| r.kinetic),
                traj.log.rows.last().map_or(0.0, |r| r.thermal),
                summary.max_relative_residual_z.max(summary.max_relative_residual_w)
            );
            Ok(EXIT_OK)
        }
    }
}

#[derive(Serialize)]
struct OptimizeSummary {
    status: OptStatus,
    iterations: usize,
    j_initial: f64,
    j_final: f64,
    pg_norm_final: f64,
    bound_ratio_z: Vec<f64>,
    bound_ratio_w: Vec<f64>,
}

/// Projected-gradient descent from the configured control (projected onto
/// the box first); writes `optimization.csv`, `optimization.json` and the
/// final `control_v1.csv`, `control_v2.csv`.
pub fn cmd_optimize(cfg: &RunConfig, out: &Path) -> Result<i32> {
    std::fs::create_dir_all(out)?;
    let problem = cfg.build_problem()?;
    let bounds = cfg.admissible_box(&problem)?;
    let (z0, w0) = cfg.initial_state(&problem);
    let v0 = cfg.initial_control(&problem)?;
    let cost = CostModel::new(&problem, cfg.cost);
    let (v, hist) = projected_gradient_descent(&problem, &z0, &w0, &v0, &bounds, &cost, &cfg.optimizer)?;
    hist.write_csv(&out.join("optimization.csv"))?;
    v.write_csv(out)?;
    let first = hist.records.first().expect("initial record");
    let last = hist.records.last().expect("initial record");
    let summary = OptimizeSummary {
        status: hist.status,
        iterations: last.iter,
        j_initial: first.j,
        j_final: last.j,
        pg_norm_final: last.pg_norm,
        bound_ratio_z: hist.records.iter().map(|r| r.bound_ratio_z).collect(),
        bound_ratio_w: hist.records.iter().map(|r| r.bound_ratio_w).collect(),
    };
    write_json(&out.join("optimization.json"), &summary)?;
    println!(
        "{:?} after {} iterations: J {:.6e} -> {:.6e}, projected gradient {:.2e}",
        hist.status, last.iter, first.j, last.j, last.pg_norm
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct GradCheckSummary {
    n_entries: usize,
    h_fd: f64,
    tol: f64,
    j: f64,
    adjoint_norm: f64,
    fd_norm: f64,
    relative_discrepancy: f64,
    passed: bool,
}

/// Compares the adjoint gradient with central differences at the configured
/// control (projected onto the box); writes `grad_check.json` and
/// `grad_check.csv`. Exit 3 if the discrepancy exceeds the tolerance.
pub fn cmd_grad_check(cfg: &RunConfig, out: &Path) -> Result<i32> {
    std::fs::create_dir_all(out)?;
    let problem = cfg.build_problem()?;
    let bounds = cfg.admissible_box(&problem)?;
    let (z0, w0) = cfg.initial_state(&problem);
    let v = project_to_admissible(&cfg.initial_control(&problem)?, &bounds)?;
    let cost = CostModel::new(&problem, cfg.cost);
    let (j, adj, _) = adjoint_gradient(&problem, &z0, &w0, &v, &cost)?;
    let fd = fd_gradient(&problem, &z0, &w0, &v, &cost, cfg.grad_check.h_fd)?;
    let rel = relative_discrepancy(&adj, &fd)?;
    write_gradient_csv(&out.join("grad_check.csv"), &adj, &fd)?;
    let passed = rel <= cfg.grad_check.tol;
    let summary = GradCheckSummary {
        n_entries: v.len(),
        h_fd: cfg.grad_check.h_fd,
        tol: cfg.grad_check.tol,
        j,
        adjoint_norm: adj.norm(),
        fd_norm: fd.norm(),
        relative_discrepancy: rel,
        passed,
    };
    write_json(&out.join("grad_check.json"), &summary)?;
    println!("relative discrepancy {rel:.3e} over {} entries: {}", v.len(), if passed { "pass" } else { "FAIL" });
    Ok(if passed { EXIT_OK } else { EXIT_GRADIENT })
}

fn write_gradient_csv(path: &Path, adj: &Control, fd: &Control) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "control,step,boundary_dof,component,adjoint,fd")?;
    for (n, (a, b)) in adj.v1.iter().zip(&fd.v1).enumerate() {
        for (i, (a, b)) in a.iter().zip(b).enumerate() {
            for c in 0..2 {
                writeln!(f, "v1,{},{i},{c},{},{}", n + 1, Num(a[c]), Num(b[c]))?;
            }
        }
    }
    for (n, (a, b)) in adj.v2.iter().zip(&fd.v2).enumerate() {
        for (i, (a, b)) in a.iter().zip(b).enumerate() {
            writeln!(f, "v2,{},{i},0,{},{}", n + 1, Num(*a), Num(*b))?;
        }
    }
    f.flush()?;
    Ok(())
}
