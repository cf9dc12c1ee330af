//! Boundary controls, the cost functional, gradients (discrete adjoint and
//! central differences) and box-constrained projected-gradient descent.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Num;
use crate::forms::{assemble_b_first_slot, assemble_b_linearized, assemble_c_skew, assemble_c_skew_velocity, DualNorm};
use crate::spaces::DiscreteField;
use crate::sparse::{BlockSystem, CsrMatrix};
use crate::stepper::{Problem, State, Trajectory};

/// Space–time control arrays. `v1[n][i]` and `v2[n][i]` are the values at
/// trace node `i` at time level `n + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub v1: Vec<Vec<[f64; 2]>>,
    pub v2: Vec<Vec<f64>>,
}

impl Control {
    pub fn constant(n_steps: usize, n1: usize, n2: usize, v1: [f64; 2], v2: f64) -> Self {
        Control { v1: vec![vec![v1; n1]; n_steps], v2: vec![vec![v2; n2]; n_steps] }
    }

    pub fn zeros(n_steps: usize, n1: usize, n2: usize) -> Self {
        Self::constant(n_steps, n1, n2, [0.0; 2], 0.0)
    }

    /// Zero control shaped for `problem`.
    pub fn zeros_for(problem: &Problem) -> Self {
        Self::zeros(problem.n_steps(), problem.gamma1.len(), problem.gamma2.len())
    }

    pub fn n_steps(&self) -> usize {
        self.v1.len()
    }

    pub fn check_shape(&self, n_steps: usize, n1: usize, n2: usize) -> Result<()> {
        let ok = self.v1.len() == n_steps
            && self.v2.len() == n_steps
            && self.v1.iter().all(|r| r.len() == n1)
            && self.v2.iter().all(|r| r.len() == n2);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "control of shape ({} steps, {:?} / {:?}) for {n_steps} steps, {n1} Gamma1 and {n2} Gamma2 nodes",
                self.v1.len(),
                self.v1.first().map(Vec::len),
                self.v2.first().map(Vec::len)
            )))
        }
    }

    fn same_shape(&self, other: &Control) -> Result<()> {
        other.check_shape(self.n_steps(), self.v1.first().map_or(0, Vec::len), self.v2.first().map_or(0, Vec::len))
    }

    /// All entries, `v1` (step, node, component) first, then `v2`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.v1.iter().flatten().flatten().chain(self.v2.iter().flatten()).copied().collect()
    }

    /// Inverse of [`Control::to_flat`] using `self` as the shape template.
    pub fn with_flat(&self, x: &[f64]) -> Self {
        let mut out = self.clone();
        let mut it = x.iter().copied();
        for v in out.v1.iter_mut().flatten().flatten().chain(out.v2.iter_mut().flatten()) {
            *v = it.next().expect("flat vector too short");
        }
        assert!(it.next().is_none(), "flat vector too long");
        out
    }

    pub fn len(&self) -> usize {
        self.v1.iter().map(|r| 2 * r.len()).sum::<usize>() + self.v2.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn map2(&self, other: &Control, f: impl Fn(f64, f64) -> f64) -> Result<Control> {
        self.same_shape(other)?;
        let a = self.to_flat();
        let b = other.to_flat();
        Ok(self.with_flat(&a.iter().zip(&b).map(|(x, y)| f(*x, *y)).collect::<Vec<_>>()))
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Writes `control_v1.csv` (boundary_dof,step,v1x,v1y) and
    /// `control_v2.csv` (boundary_dof,step,value); `step` is the time level.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("control_v1.csv"))?);
        writeln!(f, "boundary_dof,step,v1x,v1y")?;
        for (n, row) in self.v1.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                writeln!(f, "{i},{},{},{}", n + 1, Num(v[0]), Num(v[1]))?;
            }
        }
        f.flush()?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("control_v2.csv"))?);
        writeln!(f, "boundary_dof,step,value")?;
        for (n, row) in self.v2.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                writeln!(f, "{i},{},{}", n + 1, Num(*v))?;
            }
        }
        f.flush()?;
        Ok(())
    }

    /// Reads the two files written by [`Control::write_csv`].
    pub fn read_csv(v1_path: &Path, v2_path: &Path, n_steps: usize, n1: usize, n2: usize) -> Result<Self> {
        Ok(Control { v1: read_v1_csv(v1_path, n_steps, n1)?, v2: read_v2_csv(v2_path, n_steps, n2)? })
    }
}

/// Rows `(node, step index, values)` of a control CSV with `ncols` values.
fn read_rows(path: &Path, ncols: usize, n_steps: usize, n_nodes: usize) -> Result<Vec<(usize, usize, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (cols.len() == ncols + 2)
            .then(|| {
                let node = cols[0].parse::<usize>().ok()?;
                let step = cols[1].parse::<usize>().ok()?;
                let vals = cols[2..].iter().map(|s| s.parse::<f64>().ok()).collect::<Option<Vec<f64>>>()?;
                (node < n_nodes && (1..=n_steps).contains(&step)).then_some((node, step - 1, vals))
            })
            .flatten();
        match parsed {
            Some(r) => rows.push(r),
            None => errors.push(format!("{}:{}: malformed or out-of-range control row", path.display(), ln + 1)),
        }
    }
    let mut seen = vec![false; n_steps * n_nodes];
    for (node, step, _) in &rows {
        if std::mem::replace(&mut seen[step * n_nodes + node], true) {
            errors.push(format!("{}: node {node} step {} listed twice", path.display(), step + 1));
        }
    }
    let missing = seen.iter().filter(|s| !**s).count();
    if missing > 0 {
        errors.push(format!("{}: {missing} of {} (node, step) entries missing", path.display(), seen.len()));
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(Error::Config(errors))
    }
}

/// `v1` from a `control_v1.csv` listing every node and step once.
pub fn read_v1_csv(path: &Path, n_steps: usize, n1: usize) -> Result<Vec<Vec<[f64; 2]>>> {
    let mut v1 = vec![vec![[0.0; 2]; n1]; n_steps];
    for (i, n, v) in read_rows(path, 2, n_steps, n1)? {
        v1[n][i] = [v[0], v[1]];
    }
    Ok(v1)
}

/// `v2` from a `control_v2.csv` listing every node and step once.
pub fn read_v2_csv(path: &Path, n_steps: usize, n2: usize) -> Result<Vec<Vec<f64>>> {
    let mut v2 = vec![vec![0.0; n2]; n_steps];
    for (i, n, v) in read_rows(path, 1, n_steps, n2)? {
        v2[n][i] = v[0];
    }
    Ok(v2)
}

/// Pointwise bounds `lower ≤ v ≤ upper` shaped like the controls.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleBox {
    pub lower: Control,
    pub upper: Control,
}

impl AdmissibleBox {
    /// Constant bounds `α₁ ≤ v₁ ≤ β₁` (each component), `α₂ ≤ v₂ ≤ β₂`.
    pub fn uniform(n_steps: usize, n1: usize, n2: usize, alpha1: f64, beta1: f64, alpha2: f64, beta2: f64) -> Result<Self> {
        Self::new(
            Control::constant(n_steps, n1, n2, [alpha1; 2], alpha2),
            Control::constant(n_steps, n1, n2, [beta1; 2], beta2),
        )
    }

    /// Validates `0 < lower ≤ upper` everywhere.
    pub fn new(lower: Control, upper: Control) -> Result<Self> {
        lower.same_shape(&upper)?;
        let (lo, hi) = (lower.to_flat(), upper.to_flat());
        let bad: Vec<String> = lo
            .iter()
            .zip(&hi)
            .enumerate()
            .filter(|(_, (a, b))| !(**a > 0.0 && a <= b && b.is_finite()))
            .take(5)
            .map(|(i, (a, b))| format!("entry {i}: alpha = {a}, beta = {b}"))
            .collect();
        if !bad.is_empty() {
            return Err(Error::InfeasibleBox(format!("need 0 < alpha <= beta; {}", bad.join("; "))));
        }
        Ok(AdmissibleBox { lower, upper })
    }

    pub fn contains(&self, v: &Control) -> bool {
        let (lo, hi) = (self.lower.to_flat(), self.upper.to_flat());
        let x = v.to_flat();
        x.len() == lo.len() && x.iter().zip(lo.iter().zip(&hi)).all(|(v, (a, b))| a <= v && v <= b)
    }
}

/// Componentwise clamp onto the box.
pub fn project_to_admissible(v: &Control, bounds: &AdmissibleBox) -> Result<Control> {
    let lo = bounds.lower.to_flat();
    let hi = bounds.upper.to_flat();
    bounds.lower.same_shape(v)?;
    let x: Vec<f64> = v.to_flat().iter().zip(lo.iter().zip(&hi)).map(|(v, (a, b))| v.clamp(*a, *b)).collect();
    Ok(v.with_flat(&x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub n1: f64,
    pub n2: f64,
    /// Weight vector on Γ₁, constant in space and time.
    pub r1: [f64; 2],
    /// Weight on Γ₂, constant in space and time.
    pub r2: f64,
    /// Integrate the Γ₂ term over time (otherwise only the final level counts).
    #[serde(default = "default_true")]
    pub gamma2_time_integral: bool,
}

fn default_true() -> bool {
    true
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig { n1: 1.0, n2: 1.0, r1: [1.0, 0.0], r2: 1.0, gamma2_time_integral: true }
    }
}

impl CostConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [("n1", self.n1), ("n2", self.n2)] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("cost.{name} must be nonnegative and finite (got {x})"));
            }
        }
        if !(self.r2.is_finite() && self.r1.iter().all(|c| c.is_finite())) {
            v.push("cost weights r1, r2 must be finite".into());
        }
        v
    }
}

/// Precomputed linear pieces of the cost on a given problem.
pub struct CostModel<'a> {
    pub problem: &'a Problem,
    pub cfg: CostConfig,
    /// `q₁ = E₁ r₁`: `z ↦ ∫_{Γ₁} (r₁·n)(z·n)` as a vector over velocity DOFs.
    pub q1: Vec<f64>,
    /// `q₂ = M_{Γ₂} r₂`: `v₂ ↦ ∫_{Γ₂} r₂ v₂`.
    pub q2: Vec<f64>,
}

impl<'a> CostModel<'a> {
    pub fn new(problem: &'a Problem, cfg: CostConfig) -> Self {
        let r1: Vec<f64> = (0..problem.gamma1.len()).flat_map(|_| cfg.r1).collect();
        let q1 = problem.e1.matvec(&r1);
        let q2 = problem.trace_mass2.matvec(&vec![cfg.r2; problem.gamma2.len()]);
        CostModel { problem, cfg, q1, q2 }
    }

    /// Weight of the explicit Γ₂ term at time level `n + 1`.
    fn gamma2_weight(&self, n: usize, n_steps: usize) -> f64 {
        let base = -self.cfg.n2 / self.problem.cfg.k;
        if self.cfg.gamma2_time_integral {
            base * self.problem.cfg.dt
        } else if n + 1 == n_steps {
            base
        } else {
            0.0
        }
    }

    /// `J = N₁ Σₙ dt ∫_{Γ₁} r₁·(zⁿ)_n + N₂ Σₙ dt ∫_{Γ₂} r₂ (−v₂ⁿ/k)`.
    pub fn eval(&self, states: &[State], control: &Control) -> Result<f64> {
        let n = control.n_steps();
        if states.len() != n + 1 {
            return Err(Error::ShapeMismatch(format!("{} states for a {n}-step control", states.len())));
        }
        let dt = self.problem.cfg.dt;
        let mut j = 0.0;
        for s in &states[1..] {
            j += self.cfg.n1 * dt * crate::sparse::dot(&self.q1, &s.z.coeffs);
        }
        for (k, v2) in control.v2.iter().enumerate() {
            j += self.gamma2_weight(k, n) * crate::sparse::dot(&self.q2, v2);
        }
        Ok(j)
    }

    fn explicit_v2_gradient(&self, n_steps: usize) -> Vec<Vec<f64>> {
        (0..n_steps).map(|k| self.q2.iter().map(|q| self.gamma2_weight(k, n_steps) * q).collect()).collect()
    }
}

/// `J` at `control`, with the trajectory it came from.
pub fn evaluate(problem: &Problem, z0: &DiscreteField, w0: &DiscreteField, control: &Control, cost: &CostModel) -> Result<(f64, Trajectory)> {
    let traj = problem.solve_transient(z0, w0, control)?.into_result()?;
    let j = cost.eval(&traj.states, control)?;
    Ok((j, traj))
}

fn step_loads(problem: &Problem, control: &Control, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((problem.load_l1(&control.v1[k])?, problem.load_l2(&control.v2[k])?))
}

/// Continues `base[..=start]` to the full horizon under `control`.
fn rerun_from(problem: &Problem, base: &[State], start: usize, control: &Control) -> Result<Vec<State>> {
    let mut states: Vec<State> = base[..=start].to_vec();
    for k in start..control.n_steps() {
        let (l1, l2) = step_loads(problem, control, k)?;
        let (next, _, _) = problem.step_with_loads(states.last().expect("nonempty"), &l1, &l2, k + 1)?;
        states.push(next);
    }
    Ok(states)
}

/// Central finite differences `(J(v + h e) − J(v − h e)) / 2h` over every
/// control entry. A perturbation at time level `n` leaves earlier states
/// unchanged, so each run restarts from the stored state `n − 1`; when the
/// perturbed loads are bitwise equal to the unperturbed ones the state is
/// reused as is.
pub fn fd_gradient(
    problem: &Problem,
    z0: &DiscreteField,
    w0: &DiscreteField,
    control: &Control,
    cost: &CostModel,
    h_fd: f64,
) -> Result<Control> {
    let (_, base) = evaluate(problem, z0, w0, control, cost)?;
    let x = control.to_flat();
    let n1 = control.v1.first().map_or(0, Vec::len);
    let v1_len = 2 * n1 * control.n_steps();
    let n2 = control.v2.first().map_or(0, Vec::len);
    let mut grad = vec![0.0; x.len()];
    for (i, g) in grad.iter_mut().enumerate() {
        let step = if i < v1_len { i / (2 * n1) } else { (i - v1_len) / n2 };
        let base_loads = step_loads(problem, control, step)?;
        let mut values = [0.0; 2];
        for (slot, sign) in [(0, 1.0), (1, -1.0)] {
            let mut xp = x.clone();
            xp[i] += sign * h_fd;
            let cp = control.with_flat(&xp);
            let states = if step_loads(problem, &cp, step)? == base_loads {
                base.states.clone()
            } else {
                rerun_from(problem, &base.states, step, &cp)?
            };
            values[slot] = cost.eval(&states, &cp)?;
        }
        *g = (values[0] - values[1]) / (2.0 * h_fd);
    }
    Ok(control.with_flat(&grad))
}

/// Gradient of the discrete cost by a reverse sweep: at each level the
/// transposed Jacobian of the converged step is solved.
pub fn adjoint_gradient(
    problem: &Problem,
    z0: &DiscreteField,
    w0: &DiscreteField,
    control: &Control,
    cost: &CostModel,
) -> Result<(f64, Control, Trajectory)> {
    let (j, traj) = evaluate(problem, z0, w0, control, cost)?;
    let grad = adjoint_sweep(problem, &traj, control, cost)?;
    Ok((j, grad, traj))
}

/// Reverse sweep over a stored trajectory.
pub fn adjoint_sweep(problem: &Problem, traj: &Trajectory, control: &Control, cost: &CostModel) -> Result<Control> {
    let cfg = &problem.cfg;
    let n = control.n_steps();
    let dt = cfg.dt;
    let nz = problem.velocity.n_dofs();
    let nw = problem.temperature.n_dofs();
    let np = problem.head.n_dofs();
    let mut grad = Control::zeros(n, problem.gamma1.len(), problem.gamma2.len());
    let explicit = cost.explicit_v2_gradient(n);
    let mut lz_next = vec![0.0; nz];
    let mut lw_next = vec![0.0; nw];

    let base_k = CsrMatrix::combine(&[(1.0 / dt, &problem.mass_z), (cfg.nu, &problem.viscous)]);
    let base_t = if cfg.temperature_enabled {
        CsrMatrix::combine(&[(1.0 / dt, &problem.mass_w), (cfg.k, &problem.a2)])
    } else {
        problem.mass_w.scaled(1.0 / dt)
    };
    let buoy_t = problem.buoyancy.transpose();
    for level in (1..=n).rev() {
        let s = &traj.states[level];
        let bl = assemble_b_linearized(&s.z)?;
        let bf = assemble_b_first_slot(&s.z)?;
        let k_t = CsrMatrix::combine(&[(1.0, &base_k), (1.0, &bl.matrix), (1.0, &bf.matrix)]).transpose();
        let (t_t, cv_t) = if cfg.temperature_enabled {
            let cs = assemble_c_skew(&s.z, &problem.temperature)?;
            let cv = assemble_c_skew_velocity(&s.w, &problem.velocity)?;
            (CsrMatrix::combine(&[(1.0, &base_t), (1.0, &cs.matrix)]).transpose(), cv.matrix.transpose())
        } else {
            (base_t.clone(), CsrMatrix::zeros(nz, nw))
        };
        let sys = BlockSystem::new(&problem.coupled_layout)
            .with(0, 0, &k_t)
            .with(0, 1, &problem.div_t)
            .with(1, 0, &problem.div)
            .with(0, 2, &cv_t)
            .with(2, 0, &buoy_t)
            .with(2, 2, &t_t);
        let mut rz = problem.mass_z.matvec(&lz_next);
        rz.iter_mut().zip(&cost.q1).for_each(|(r, q)| *r = *r / dt + cost.cfg.n1 * dt * q);
        let mut rw = problem.mass_w.matvec(&lw_next);
        rw.iter_mut().for_each(|r| *r /= dt);
        let lu = sys.factor()?;
        let mut sol = sys.solve_checked(&lu, &[rz, vec![0.0; np], rw], cfg.lin_tol.max(1e-12))?;
        let lw = sol.pop().expect("temperature block");
        sol.pop();
        let lz = sol.pop().expect("velocity block");

        let k = level - 1;
        let g1 = problem.e1.matvec_transpose(&lz);
        for (i, v) in grad.v1[k].iter_mut().enumerate() {
            *v = [g1[2 * i], g1[2 * i + 1]];
        }
        let g2 = if cfg.temperature_enabled { problem.e2.matvec_transpose(&lw) } else { vec![0.0; problem.gamma2.len()] };
        for (i, v) in grad.v2[k].iter_mut().enumerate() {
            *v = g2[i] + explicit[k][i];
        }
        lz_next = lz;
        lw_next = lw;
    }
    Ok(grad)
}

/// Relative L² discrepancy `‖a − b‖ / ‖b‖` (absolute if `b = 0`).
pub fn relative_discrepancy(a: &Control, b: &Control) -> Result<f64> {
    let d = a.map2(b, |x, y| x - y)?.norm();
    let nb = b.norm();
    Ok(if nb > 0.0 { d / nb } else { d })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub armijo_sigma: f64,
    pub armijo_tau: f64,
    pub max_backtracks: usize,
    pub tol: f64,
    /// Upper limit on the trial step length.
    pub max_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { max_iters: 10, armijo_sigma: 1e-4, armijo_tau: 0.5, max_backtracks: 30, tol: 1e-8, max_step: 1e4 }
    }
}

impl OptimizerConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.armijo_sigma > 0.0 && self.armijo_sigma < 1.0) {
            v.push(format!("optimizer.armijo_sigma must lie in (0, 1) (got {})", self.armijo_sigma));
        }
        if !(self.armijo_tau > 0.0 && self.armijo_tau < 1.0) {
            v.push(format!("optimizer.armijo_tau must lie in (0, 1) (got {})", self.armijo_tau));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            v.push(format!("optimizer.tol must be nonnegative (got {})", self.tol));
        }
        if self.max_step.is_nan() || self.max_step <= 0.0 {
            v.push(format!("optimizer.max_step must be positive (got {})", self.max_step));
        }
        if self.max_backtracks == 0 {
            v.push("optimizer.max_backtracks must be at least 1".into());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptStatus {
    Converged,
    MaxIters,
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub j: f64,
    pub pg_norm: f64,
    pub step: f64,
    pub feasible: bool,
    pub bound_ratio_z: f64,
    pub bound_ratio_w: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationHistory {
    pub records: Vec<IterRecord>,
    pub status: OptStatus,
}

impl OptimizationHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "iter,J,pg_norm,step,feasible")?;
        for r in &self.records {
            writeln!(f, "{},{},{},{},{}", r.iter, Num(r.j), Num(r.pg_norm), Num(r.step), r.feasible)?;
        }
        f.flush()?;
        Ok(())
    }
}

/// `‖P(v − g) − v‖₂`
pub fn projected_gradient_norm(v: &Control, g: &Control, bounds: &AdmissibleBox) -> Result<f64> {
    let trial = project_to_admissible(&v.map2(g, |a, b| a - b)?, bounds)?;
    Ok(trial.map2(v, |a, b| a - b)?.norm())
}

/// Largest step at which some component of `v − s g` reaches its bound.
fn largest_breakpoint(v: &Control, g: &Control, bounds: &AdmissibleBox) -> f64 {
    let (x, gf, lo, hi) = (v.to_flat(), g.to_flat(), bounds.lower.to_flat(), bounds.upper.to_flat());
    let mut s: f64 = 0.0;
    for i in 0..x.len() {
        let dist = if gf[i] > 0.0 {
            x[i] - lo[i]
        } else if gf[i] < 0.0 {
            hi[i] - x[i]
        } else {
            continue;
        };
        s = s.max(dist / gf[i].abs());
    }
    s
}

/// Projected-gradient descent `v ← P(v − s ∇J)` with Armijo backtracking
/// `J(v⁺) ≤ J(v) − (σ/s) ‖v⁺ − v‖²`. The first trial step is the largest
/// breakpoint of the projection arc (capped by `max_step`).
pub fn projected_gradient_descent(
    problem: &Problem,
    z0: &DiscreteField,
    w0: &DiscreteField,
    v_init: &Control,
    bounds: &AdmissibleBox,
    cost: &CostModel,
    opt: &OptimizerConfig,
) -> Result<(Control, OptimizationHistory)> {
    let reporter = BoundReporter::new(problem)?;
    let mut v = project_to_admissible(v_init, bounds)?;
    let (mut j, mut g, traj) = adjoint_gradient(problem, z0, w0, &v, cost)?;
    let mut pg = projected_gradient_norm(&v, &g, bounds)?;
    let ratios = reporter.ratios(&traj.states, &v)?;
    let mut records =
        vec![IterRecord { iter: 0, j, pg_norm: pg, step: 0.0, feasible: bounds.contains(&v), bound_ratio_z: ratios.0, bound_ratio_w: ratios.1 }];
    let mut status = OptStatus::MaxIters;
    for m in 1..=opt.max_iters {
        if pg <= opt.tol {
            status = OptStatus::Converged;
            break;
        }
        let mut s = largest_breakpoint(&v, &g, bounds).min(opt.max_step);
        if s == 0.0 {
            s = opt.max_step;
        }
        let mut accepted = None;
        for _ in 0..opt.max_backtracks {
            let trial = project_to_admissible(&v.map2(&g, |a, b| a - s * b)?, bounds)?;
            let moved = trial.map2(&v, |a, b| a - b)?.norm();
            let (jt, traj) = evaluate(problem, z0, w0, &trial, cost)?;
            if jt <= j - opt.armijo_sigma / s * moved * moved {
                accepted = Some((trial, jt, traj));
                break;
            }
            s *= opt.armijo_tau;
        }
        let Some((trial, jt, traj)) = accepted else {
            status = OptStatus::LineSearchFailed;
            break;
        };
        v = trial;
        j = jt;
        g = adjoint_sweep(problem, &traj, &v, cost)?;
        pg = projected_gradient_norm(&v, &g, bounds)?;
        let ratios = reporter.ratios(&traj.states, &v)?;
        records.push(IterRecord {
            iter: m,
            j,
            pg_norm: pg,
            step: s,
            feasible: bounds.contains(&v),
            bound_ratio_z: ratios.0,
            bound_ratio_w: ratios.1,
        });
        if m == opt.max_iters && pg <= opt.tol {
            status = OptStatus::Converged;
        }
    }
    Ok((v, OptimizationHistory { records, status }))
}

/// Energy-to-data ratios of the a-priori bounds:
/// `(max|zⁿ|² + Σ dt‖zⁿ‖²_{H¹} + (Σ dt‖M(zⁿ − zⁿ⁻¹)/dt‖_{V*})²) / (|z⁰|² + Σ dt‖v₁ⁿ‖²_{L²(Γ₁)})`
/// and the analogous temperature ratio with `v₂` on Γ₂.
pub struct BoundReporter<'a> {
    problem: &'a Problem,
    gram_z: CsrMatrix,
    gram_w: CsrMatrix,
    dual_z: DualNorm,
    dual_w: DualNorm,
}

impl<'a> BoundReporter<'a> {
    pub fn new(problem: &'a Problem) -> Result<Self> {
        Ok(BoundReporter {
            problem,
            gram_z: crate::forms::assemble_gram_h1(&problem.velocity).matrix,
            gram_w: crate::forms::assemble_gram_h1(&problem.temperature).matrix,
            dual_z: DualNorm::new(&problem.velocity)?,
            dual_w: DualNorm::new(&problem.temperature)?,
        })
    }

    pub fn ratios(&self, states: &[State], control: &Control) -> Result<(f64, f64)> {
        let p = self.problem;
        let dt = p.cfg.dt;
        let side = |mass: &CsrMatrix, gram: &CsrMatrix, dual: &DualNorm, get: &dyn Fn(&State) -> &[f64]| {
            let mut max_l2: f64 = 0.0;
            let mut h1 = 0.0;
            let mut deriv = 0.0;
            for n in 1..states.len() {
                let (a, b) = (get(&states[n]), get(&states[n - 1]));
                max_l2 = max_l2.max(mass.bilinear(a, a));
                h1 += dt * gram.bilinear(a, a);
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) / dt).collect();
                deriv += dt * dual.norm(&mass.matvec(&d));
            }
            let first = get(&states[0]);
            (max_l2 + h1 + deriv * deriv, mass.bilinear(first, first))
        };
        let (lhs_z, z0) = side(&p.mass_z, &self.gram_z, &self.dual_z, &|s: &State| &s.z.coeffs);
        let (lhs_w, w0) = side(&p.mass_w, &self.gram_w, &self.dual_w, &|s: &State| &s.w.coeffs);
        let mut data1 = 0.0;
        let mut data2 = 0.0;
        for k in 0..control.n_steps() {
            for c in 0..2 {
                let comp: Vec<f64> = control.v1[k].iter().map(|v| v[c]).collect();
                data1 += dt * p.trace_mass1.bilinear(&comp, &comp);
            }
            data2 += dt * p.trace_mass2.bilinear(&control.v2[k], &control.v2[k]);
        }
        let ratio = |lhs: f64, rhs: f64| if lhs == 0.0 { 0.0 } else { lhs / rhs };
        Ok((ratio(lhs_z, z0 + data1), ratio(lhs_w, w0 + data2)))
    }
}

/// Bound ratios of one run.
pub fn uniform_bound_report(problem: &Problem, traj: &Trajectory, control: &Control) -> Result<(f64, f64)> {
    BoundReporter::new(problem)?.ratios(&traj.states, control)
}
