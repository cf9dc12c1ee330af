//! Backward-Euler time stepping of the coupled velocity/head/temperature
//! system with Picard linearization and a per-step energy monitor.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::error::{Error, Result};
use crate::num::Num;
use crate::forms::{
    assemble_a1_stabilized, assemble_a2, assemble_b_linearized, assemble_buoyancy, assemble_c_skew,
    assemble_divergence, assemble_l1_operator, assemble_l2_operator, assemble_mass, assemble_trace_mass,
};
use crate::mesh::{BoundaryTag, Mesh};
use crate::spaces::{ordering_keys, BoundaryTrace, DiscreteField, FunctionSpace, SpaceKind};
use crate::sparse::{dot, norm2, BlockLayout, BlockSystem, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    pub nu: f64,
    pub k: f64,
    pub beta: f64,
    pub g: [f64; 2],
    pub picard_tol: f64,
    pub picard_max: usize,
    pub lin_tol: f64,
    /// Weight of the `(div, div)` term added to `a₁`.
    #[serde(default = "default_grad_div")]
    pub grad_div: f64,
    /// Switch off the temperature block (the temperature stays at its
    /// initial value).
    #[serde(default = "default_true")]
    pub temperature_enabled: bool,
}

fn default_grad_div() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 0.025,
            t_final: 0.8,
            nu: 0.1,
            k: 0.1,
            beta: 1.0,
            g: [0.0, -1.0],
            picard_tol: 1e-10,
            picard_max: 50,
            lin_tol: 1e-10,
            grad_div: 1.0,
            temperature_enabled: true,
        }
    }
}

impl SolverConfig {
    /// Every violated invariant, as readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut positive = |name: &str, x: f64| {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{name} must be positive and finite (got {x})"));
            }
        };
        positive("dt", self.dt);
        positive("t_final", self.t_final);
        positive("nu", self.nu);
        positive("k", self.k);
        positive("picard_tol", self.picard_tol);
        positive("lin_tol", self.lin_tol);
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            v.push(format!("beta must be nonnegative (got {})", self.beta));
        }
        if !(self.grad_div >= 0.0 && self.grad_div.is_finite()) {
            v.push(format!("grad_div must be nonnegative (got {})", self.grad_div));
        }
        if self.g.iter().any(|c| !c.is_finite()) {
            v.push("g must be finite".into());
        }
        if self.picard_max == 0 {
            v.push("picard_max must be at least 1".into());
        }
        if self.dt > 0.0 && self.t_final > 0.0 {
            let n = (self.t_final / self.dt).round();
            if n < 1.0 || (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
                v.push(format!("t_final = {} is not an integer multiple of dt = {}", self.t_final, self.dt));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// One time level.
#[derive(Debug, Clone)]
pub struct State {
    pub z: DiscreteField,
    pub w: DiscreteField,
    /// Total head, the multiplier of the divergence constraint.
    pub p: DiscreteField,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyRow {
    pub step: usize,
    pub t: f64,
    pub kinetic: f64,
    pub thermal: f64,
    pub dissipation_z: f64,
    pub dissipation_w: f64,
    pub buoyancy: f64,
    pub boundary_work_z: f64,
    pub boundary_work_w: f64,
    pub residual_z: f64,
    pub residual_w: f64,
    /// Sum of the absolute values of the terms entering each identity.
    pub scale_z: f64,
    pub scale_w: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EnergyLog {
    pub rows: Vec<EnergyRow>,
}

impl EnergyLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "step,t,kinetic,thermal,dissipation_z,dissipation_w,boundary_work_z,boundary_work_w,residual_z,residual_w"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{}",
                r.step,
                Num(r.t),
                Num(r.kinetic),
                Num(r.thermal),
                Num(r.dissipation_z),
                Num(r.dissipation_w),
                Num(r.boundary_work_z),
                Num(r.boundary_work_w),
                Num(r.residual_z),
                Num(r.residual_w)
            )?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Volume source loads (constant in time), used by manufactured solutions.
#[derive(Debug, Clone)]
pub struct Sources {
    pub velocity: Vec<f64>,
    pub temperature: Vec<f64>,
}

/// States `0..=n` of a run; `failure` is set if a step could not be solved,
/// in which case `states` holds the accepted prefix.
#[derive(Debug)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub log: EnergyLog,
    pub picard_iterations: Vec<usize>,
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn into_result(self) -> Result<Trajectory> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }

    /// Writes velocity, temperature and head snapshots every `stride` steps
    /// (and at the last stored step).
    pub fn write_snapshots(&self, dir: &Path, stride: usize) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let stride = stride.max(1);
        let last = self.states.len() - 1;
        for (n, s) in self.states.iter().enumerate() {
            if n % stride != 0 && n != last {
                continue;
            }
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("z_{n:05}.csv")))?);
            writeln!(f, "node_id,zx,zy")?;
            for (i, v) in s.z.nodal_values().iter().enumerate() {
                writeln!(f, "{i},{},{}", Num(v[0]), Num(v[1]))?;
            }
            f.flush()?;
            for (name, field) in [("w", &s.w), ("p", &s.p)] {
                let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}_{n:05}.csv")))?);
                writeln!(f, "node_id,value")?;
                for (i, v) in field.nodal_values().iter().enumerate() {
                    writeln!(f, "{i},{}", Num(v[0]))?;
                }
                f.flush()?;
            }
        }
        Ok(())
    }
}

/// Everything that stays fixed over a run: spaces, traces and the
/// state-independent operators.
pub struct Problem {
    pub cfg: SolverConfig,
    pub mesh: Arc<Mesh>,
    pub velocity: Arc<FunctionSpace>,
    pub temperature: Arc<FunctionSpace>,
    pub head: Arc<FunctionSpace>,
    pub gamma1: BoundaryTrace,
    pub gamma2: BoundaryTrace,
    pub mass_z: CsrMatrix,
    pub mass_w: CsrMatrix,
    /// `a₁ + γ (div, div)`
    pub viscous: CsrMatrix,
    pub a2: CsrMatrix,
    pub div: CsrMatrix,
    pub div_t: CsrMatrix,
    /// `β g` coupling, rows over velocity, columns over temperature.
    pub buoyancy: CsrMatrix,
    /// Γ₁ load operator acting on `[node][component]` trace data.
    pub e1: CsrMatrix,
    /// Γ₂ load operator acting on nodal trace data.
    pub e2: CsrMatrix,
    pub trace_mass1: CsrMatrix,
    pub trace_mass2: CsrMatrix,
    flow_base: CsrMatrix,
    heat_base: CsrMatrix,
    pub flow_layout: BlockLayout,
    pub heat_layout: BlockLayout,
    /// Velocity, head and temperature together (linearized coupled system).
    pub coupled_layout: BlockLayout,
}

impl Problem {
    pub fn new(mesh: Arc<Mesh>, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let velocity = Arc::new(FunctionSpace::new(Arc::clone(&mesh), SpaceKind::Velocity));
        let temperature = Arc::new(FunctionSpace::new(Arc::clone(&mesh), SpaceKind::Temperature));
        let head = Arc::new(FunctionSpace::new(Arc::clone(&mesh), SpaceKind::Head));
        let gamma1 = BoundaryTrace::new(&mesh, BoundaryTag::Gamma1);
        let gamma2 = BoundaryTrace::new(&mesh, BoundaryTag::Gamma2);
        let mass_z = assemble_mass(&velocity).matrix;
        let mass_w = assemble_mass(&temperature).matrix;
        let viscous = assemble_a1_stabilized(&velocity, cfg.grad_div)?;
        let a2 = assemble_a2(&temperature)?.matrix;
        let div = assemble_divergence(&velocity, &head)?.matrix;
        let div_t = div.transpose();
        let buoyancy = assemble_buoyancy(&velocity, &temperature, cfg.g, cfg.beta)?.matrix;
        let e1 = if gamma1.is_empty() {
            CsrMatrix::zeros(velocity.n_dofs(), 0)
        } else {
            assemble_l1_operator(&velocity, &gamma1)?
        };
        let e2 = assemble_l2_operator(&temperature, &gamma2)?;
        let trace_mass1 = assemble_trace_mass(&gamma1);
        let trace_mass2 = assemble_trace_mass(&gamma2);
        let flow_base = CsrMatrix::combine(&[(1.0 / cfg.dt, &mass_z), (cfg.nu, &viscous)]);
        let heat_base = CsrMatrix::combine(&[(1.0 / cfg.dt, &mass_w), (cfg.k, &a2)]);
        let flow_layout = BlockLayout::new(&[ordering_keys(&velocity, 0), ordering_keys(&head, 2)]);
        let heat_layout = BlockLayout::new(&[ordering_keys(&temperature, 3)]);
        let coupled_layout =
            BlockLayout::new(&[ordering_keys(&velocity, 0), ordering_keys(&head, 2), ordering_keys(&temperature, 3)]);
        Ok(Problem {
            cfg,
            mesh,
            velocity,
            temperature,
            head,
            gamma1,
            gamma2,
            mass_z,
            mass_w,
            viscous,
            a2,
            div,
            div_t,
            buoyancy,
            e1,
            e2,
            trace_mass1,
            trace_mass2,
            flow_base,
            heat_base,
            flow_layout,
            heat_layout,
            coupled_layout,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.cfg.n_steps()
    }

    pub fn state(&self, z: DiscreteField, w: DiscreteField, t: f64) -> Result<State> {
        if !z.space.same_layout(&self.velocity) || !w.space.same_layout(&self.temperature) {
            return Err(Error::SpaceMismatch("initial data do not live on this problem's spaces".into()));
        }
        Ok(State { z, w, p: self.head.zero(), t })
    }

    pub fn zero_state(&self) -> State {
        State { z: self.velocity.zero(), w: self.temperature.zero(), p: self.head.zero(), t: 0.0 }
    }

    /// L² norm from a mass matrix.
    pub fn mass_norm(m: &CsrMatrix, x: &[f64]) -> f64 {
        m.bilinear(x, x).max(0.0).sqrt()
    }

    pub fn load_l1(&self, v1: &[[f64; 2]]) -> Result<Vec<f64>> {
        if v1.len() != self.gamma1.len() {
            return Err(Error::ShapeMismatch(format!("{} v1 values for {} Gamma1 nodes", v1.len(), self.gamma1.len())));
        }
        let flat: Vec<f64> = v1.iter().flatten().copied().collect();
        Ok(self.e1.matvec(&flat))
    }

    pub fn load_l2(&self, v2: &[f64]) -> Result<Vec<f64>> {
        if v2.len() != self.gamma2.len() {
            return Err(Error::ShapeMismatch(format!("{} v2 values for {} Gamma2 nodes", v2.len(), self.gamma2.len())));
        }
        Ok(self.e2.matvec(v2))
    }

    /// One backward-Euler step with control data at the new time level.
    pub fn solve_step(&self, state: &State, v1_next: &[[f64; 2]], v2_next: &[f64]) -> Result<(State, EnergyRow, usize)> {
        let l1 = self.load_l1(v1_next)?;
        let l2 = self.load_l2(v2_next)?;
        self.step_with_loads(state, &l1, &l2, 0)
    }

    /// Step with assembled right-hand sides; returns the new state, its
    /// energy row and the number of Picard iterations.
    pub fn step_with_loads(&self, state: &State, l1: &[f64], l2: &[f64], step: usize) -> Result<(State, EnergyRow, usize)> {
        let cfg = &self.cfg;
        let inv_dt = 1.0 / cfg.dt;
        let mut rhs_z = self.mass_z.matvec(&state.z.coeffs);
        rhs_z.iter_mut().zip(l1).for_each(|(r, l)| *r = *r * inv_dt + l);
        let mut rhs_w = self.mass_w.matvec(&state.w.coeffs);
        rhs_w.iter_mut().zip(l2).for_each(|(r, l)| *r = *r * inv_dt + l);
        let zeros_p = vec![0.0; self.head.n_dofs()];

        let mut zk = state.z.clone();
        let mut wk = state.w.clone();
        let mut pk = state.p.clone();
        let mut last_change = f64::INFINITY;
        for it in 1..=cfg.picard_max {
            let w_new = if cfg.temperature_enabled {
                let cs = assemble_c_skew(&zk, &self.temperature)?;
                let mat = CsrMatrix::combine(&[(1.0, &self.heat_base), (1.0, &cs.matrix)]);
                let sys = BlockSystem::new(&self.heat_layout).with(0, 0, &mat);
                let lu = sys.factor()?;
                sys.solve_checked(&lu, &[rhs_w.clone()], cfg.lin_tol)?.swap_remove(0)
            } else {
                state.w.coeffs.clone()
            };
            let bl = assemble_b_linearized(&zk)?;
            let k = CsrMatrix::combine(&[(1.0, &self.flow_base), (1.0, &bl.matrix)]);
            let sys = BlockSystem::new(&self.flow_layout).with(0, 0, &k).with(0, 1, &self.div_t).with(1, 0, &self.div);
            let lu = sys.factor()?;
            let mut rz = rhs_z.clone();
            self.buoyancy.matvec_add(-1.0, &w_new, &mut rz);
            let mut sol = sys.solve_checked(&lu, &[rz, zeros_p.clone()], cfg.lin_tol)?;
            let p_new = sol.pop().expect("head block");
            let z_new = sol.pop().expect("velocity block");

            let dz: Vec<f64> = z_new.iter().zip(&zk.coeffs).map(|(a, b)| a - b).collect();
            let dw: Vec<f64> = w_new.iter().zip(&wk.coeffs).map(|(a, b)| a - b).collect();
            let change = Self::mass_norm(&self.mass_z, &dz).max(Self::mass_norm(&self.mass_w, &dw));
            zk.coeffs = z_new;
            wk.coeffs = w_new;
            pk.coeffs = p_new;
            last_change = change;
            if change <= cfg.picard_tol {
                let next = State { z: zk, w: wk, p: pk, t: state.t + cfg.dt };
                let row = self.energy_row(state, &next, l1, l2, step);
                return Ok((next, row, it));
            }
        }
        Err(Error::PicardDiverged { iterations: cfg.picard_max, change: last_change })
    }

    fn energy_row(&self, prev: &State, next: &State, l1: &[f64], l2: &[f64], step: usize) -> EnergyRow {
        let cfg = &self.cfg;
        let dt = cfg.dt;
        let (z0, z1) = (&prev.z.coeffs, &next.z.coeffs);
        let (w0, w1) = (&prev.w.coeffs, &next.w.coeffs);
        let half_sq = |m: &CsrMatrix, x: &[f64]| 0.5 * m.bilinear(x, x);
        let jump = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>();

        let kin1 = half_sq(&self.mass_z, z1);
        let kin0 = half_sq(&self.mass_z, z0);
        let kin_jump = half_sq(&self.mass_z, &jump(z1, z0));
        let diss_z = cfg.nu * self.viscous.bilinear(z1, z1);
        let buoy = self.buoyancy.bilinear(z1, w1);
        let work_z = dot(l1, z1);
        let terms_z = [kin1, -kin0, kin_jump, dt * diss_z, dt * buoy, -dt * work_z];

        let th1 = half_sq(&self.mass_w, w1);
        let th0 = half_sq(&self.mass_w, w0);
        let th_jump = half_sq(&self.mass_w, &jump(w1, w0));
        let diss_w = cfg.k * self.a2.bilinear(w1, w1);
        let work_w = dot(l2, w1);
        let terms_w = if cfg.temperature_enabled {
            [th1, -th0, th_jump, dt * diss_w, -dt * work_w]
        } else {
            [0.0; 5]
        };

        EnergyRow {
            step,
            t: next.t,
            kinetic: kin1,
            thermal: th1,
            dissipation_z: diss_z,
            dissipation_w: diss_w,
            buoyancy: buoy,
            boundary_work_z: work_z,
            boundary_work_w: work_w,
            residual_z: terms_z.iter().sum(),
            residual_w: terms_w.iter().sum(),
            scale_z: terms_z.iter().map(|t| t.abs()).sum(),
            scale_w: terms_w.iter().map(|t| t.abs()).sum(),
        }
    }

    /// Runs the full horizon. Shape problems are returned as errors; solver
    /// failures end the run early and are recorded in the trajectory.
    pub fn solve_transient(&self, z0: &DiscreteField, w0: &DiscreteField, control: &Control) -> Result<Trajectory> {
        self.solve_transient_with_sources(z0, w0, control, None)
    }

    pub fn solve_transient_with_sources(
        &self,
        z0: &DiscreteField,
        w0: &DiscreteField,
        control: &Control,
        sources: Option<&Sources>,
    ) -> Result<Trajectory> {
        let n = self.n_steps();
        control.check_shape(n, self.gamma1.len(), self.gamma2.len())?;
        if let Some(s) = sources {
            if s.velocity.len() != self.velocity.n_dofs() || s.temperature.len() != self.temperature.n_dofs() {
                return Err(Error::ShapeMismatch("source vectors do not match the spaces".into()));
            }
        }
        let first = self.state(z0.clone(), w0.clone(), 0.0)?;
        let mut traj = Trajectory { states: vec![first], log: EnergyLog::default(), picard_iterations: Vec::new(), failure: None };
        for step in 1..=n {
            let (mut l1, mut l2) = (self.load_l1(&control.v1[step - 1])?, self.load_l2(&control.v2[step - 1])?);
            if let Some(s) = sources {
                l1.iter_mut().zip(&s.velocity).for_each(|(a, b)| *a += b);
                l2.iter_mut().zip(&s.temperature).for_each(|(a, b)| *a += b);
            }
            let prev = traj.states.last().expect("nonempty");
            match self.step_with_loads(prev, &l1, &l2, step) {
                Ok((next, row, iters)) => {
                    traj.states.push(next);
                    traj.log.rows.push(row);
                    traj.picard_iterations.push(iters);
                }
                Err(e) => {
                    traj.failure = Some(e);
                    break;
                }
            }
        }
        Ok(traj)
    }

    /// `‖D z‖ / ‖z‖` (0 for z = 0).
    pub fn divergence_residual(&self, z: &DiscreteField) -> f64 {
        let nz = norm2(&z.coeffs);
        if nz == 0.0 {
            0.0
        } else {
            norm2(&self.div.matvec(&z.coeffs)) / nz
        }
    }
}

/// Static pressure `π = P − ½|z|²` at the head nodes (mesh vertices).
pub fn recover_static_pressure(state: &State) -> Result<DiscreteField> {
    let head = &state.p.space;
    if head.kind != SpaceKind::Head {
        return Err(Error::SpaceMismatch("state head is not on a head space".into()));
    }
    let mut pi = state.p.clone();
    for (i, c) in pi.coeffs.iter_mut().enumerate() {
        let (v, _) = head.dof_location(i);
        let node = head.node_lattice[v];
        let (zx, zy) = (state.z.raw(node, 0), state.z.raw(node, 1));
        *c -= 0.5 * (zx * zx + zy * zy);
    }
    Ok(pi)
}
