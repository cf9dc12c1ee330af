//! Python bindings: run configurations, the forward solver, the adjoint
//! gradient and the projected-gradient optimizer.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use bouss_core::cli::{self, Command, Invocation};
use bouss_core::config::RunConfig;
use bouss_core::control::{
    adjoint_gradient, evaluate, fd_gradient, project_to_admissible, projected_gradient_descent, relative_discrepancy,
    uniform_bound_report, AdmissibleBox, Control, CostModel,
};
use bouss_core::forms::{check_form_identities, ConstantsReport};
use bouss_core::spaces::DiscreteField;
use bouss_core::stepper::{EnergyRow, Problem};
use bouss_core::Error;

create_exception!(bouss, ConfigError, PyValueError, "Invalid configuration or input data.");
create_exception!(bouss, SolverError, PyRuntimeError, "The nonlinear or linear solver failed.");

fn to_py(e: Error) -> PyErr {
    if cli::exit_code(&e) == cli::EXIT_SOLVER {
        SolverError::new_err(e.to_string())
    } else {
        ConfigError::new_err(e.to_string())
    }
}

type V1 = Vec<Vec<[f64; 2]>>;
type V2 = Vec<Vec<f64>>;

/// A validated run configuration.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    /// Parses a JSON document; defaults are used when `json` is omitted.
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => RunConfig::from_json(text).map_err(to_py)?,
            None => RunConfig::default(),
        };
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig { inner: RunConfig::from_file(&path).map_err(to_py)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    /// Every semantic problem with the current values (empty when valid).
    fn violations(&self) -> Vec<String> {
        self.inner.violations()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(mesh={}x{}, dt={}, T={}, seed={})",
            self.inner.mesh.nx, self.inner.mesh.ny, self.inner.time.dt, self.inner.time.t_final, self.inner.seed
        )
    }
}

fn energy_dict<'py>(py: Python<'py>, r: &EnergyRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", r.step)?;
    d.set_item("t", r.t)?;
    d.set_item("kinetic", r.kinetic)?;
    d.set_item("thermal", r.thermal)?;
    d.set_item("dissipation_z", r.dissipation_z)?;
    d.set_item("dissipation_w", r.dissipation_w)?;
    d.set_item("buoyancy", r.buoyancy)?;
    d.set_item("boundary_work_z", r.boundary_work_z)?;
    d.set_item("boundary_work_w", r.boundary_work_w)?;
    d.set_item("residual_z", r.residual_z)?;
    d.set_item("residual_w", r.residual_w)?;
    Ok(d)
}

/// The discretized problem of a configuration together with its initial
/// state, admissible box and cost.
#[pyclass(name = "Problem", unsendable)]
struct PyProblem {
    cfg: RunConfig,
    problem: Problem,
    z0: DiscreteField,
    w0: DiscreteField,
    bounds: AdmissibleBox,
}

impl PyProblem {
    fn control(&self, v1: Option<V1>, v2: Option<V2>) -> PyResult<Control> {
        let init = || self.cfg.initial_control(&self.problem).map_err(to_py);
        let c = match (v1, v2) {
            (Some(v1), Some(v2)) => Control { v1, v2 },
            (Some(v1), None) => Control { v1, v2: init()?.v2 },
            (None, Some(v2)) => Control { v1: init()?.v1, v2 },
            (None, None) => init()?,
        };
        c.check_shape(self.problem.n_steps(), self.problem.gamma1.len(), self.problem.gamma2.len()).map_err(to_py)?;
        Ok(c)
    }

    fn cost(&self) -> CostModel<'_> {
        CostModel::new(&self.problem, self.cfg.cost)
    }
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let problem = cfg.build_problem().map_err(to_py)?;
        let (z0, w0) = cfg.initial_state(&problem);
        let bounds = cfg.admissible_box(&problem).map_err(to_py)?;
        Ok(PyProblem { cfg, problem, z0, w0, bounds })
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.problem.n_steps()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.problem.cfg.dt
    }

    #[getter]
    fn velocity_dofs(&self) -> usize {
        self.problem.velocity.n_dofs()
    }

    #[getter]
    fn temperature_dofs(&self) -> usize {
        self.problem.temperature.n_dofs()
    }

    #[getter]
    fn head_dofs(&self) -> usize {
        self.problem.head.n_dofs()
    }

    /// Coordinates of the control nodes on the head boundary.
    #[getter]
    fn gamma1_nodes(&self) -> Vec<[f64; 2]> {
        self.problem.gamma1.coords.clone()
    }

    /// Coordinates of the control nodes on the heat-flux boundary.
    #[getter]
    fn gamma2_nodes(&self) -> Vec<[f64; 2]> {
        self.problem.gamma2.coords.clone()
    }

    /// The configured starting control as `(v1, v2)`, indexed `[step][node]`.
    fn initial_control(&self) -> PyResult<(V1, V2)> {
        let c = self.control(None, None)?;
        Ok((c.v1, c.v2))
    }

    /// Runs the forward problem. Missing controls come from the config.
    #[pyo3(signature = (v1 = None, v2 = None))]
    fn solve<'py>(&self, py: Python<'py>, v1: Option<V1>, v2: Option<V2>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.control(v1, v2)?;
        let traj = self.problem.solve_transient(&self.z0, &self.w0, &c).map_err(to_py)?;
        let (rz, rw) = uniform_bound_report(&self.problem, &traj, &c).map_err(to_py)?;
        let traj = traj.into_result().map_err(to_py)?;
        let out = PyDict::new(py);
        let rows = traj.log.rows.iter().map(|r| energy_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
        out.set_item("energy", rows)?;
        out.set_item("picard_iterations", traj.picard_iterations.clone())?;
        out.set_item("bound_ratio_z", rz)?;
        out.set_item("bound_ratio_w", rw)?;
        let last = traj.final_state();
        out.set_item("z", last.z.coeffs.clone())?;
        out.set_item("w", last.w.coeffs.clone())?;
        out.set_item("p", last.p.coeffs.clone())?;
        Ok(out)
    }

    /// Cost of a control.
    fn cost_value(&self, v1: V1, v2: V2) -> PyResult<f64> {
        let c = self.control(Some(v1), Some(v2))?;
        Ok(evaluate(&self.problem, &self.z0, &self.w0, &c, &self.cost()).map_err(to_py)?.0)
    }

    /// `(J, grad_v1, grad_v2)` from the discrete adjoint.
    fn gradient(&self, v1: V1, v2: V2) -> PyResult<(f64, V1, V2)> {
        let c = self.control(Some(v1), Some(v2))?;
        let (j, g, _) = adjoint_gradient(&self.problem, &self.z0, &self.w0, &c, &self.cost()).map_err(to_py)?;
        Ok((j, g.v1, g.v2))
    }

    /// Central-difference gradient with step `h`.
    #[pyo3(signature = (v1, v2, h = 1e-5))]
    fn fd_gradient(&self, v1: V1, v2: V2, h: f64) -> PyResult<(V1, V2)> {
        let c = self.control(Some(v1), Some(v2))?;
        let g = fd_gradient(&self.problem, &self.z0, &self.w0, &c, &self.cost(), h).map_err(to_py)?;
        Ok((g.v1, g.v2))
    }

    /// Relative discrepancy between the adjoint and finite-difference gradients.
    #[pyo3(signature = (v1 = None, v2 = None, h = None))]
    fn grad_check(&self, v1: Option<V1>, v2: Option<V2>, h: Option<f64>) -> PyResult<f64> {
        let c = self.control(v1, v2)?;
        let cost = self.cost();
        let (_, adj, _) = adjoint_gradient(&self.problem, &self.z0, &self.w0, &c, &cost).map_err(to_py)?;
        let h = h.unwrap_or(self.cfg.grad_check.h_fd);
        let fd = fd_gradient(&self.problem, &self.z0, &self.w0, &c, &cost, h).map_err(to_py)?;
        relative_discrepancy(&adj, &fd).map_err(to_py)
    }

    /// Pointwise projection onto the admissible box.
    fn project(&self, v1: V1, v2: V2) -> PyResult<(V1, V2)> {
        let c = project_to_admissible(&self.control(Some(v1), Some(v2))?, &self.bounds).map_err(to_py)?;
        Ok((c.v1, c.v2))
    }

    /// Projected-gradient descent from the given (or configured) control.
    #[pyo3(signature = (v1 = None, v2 = None))]
    fn optimize<'py>(&self, py: Python<'py>, v1: Option<V1>, v2: Option<V2>) -> PyResult<Bound<'py, PyDict>> {
        let start = self.control(v1, v2)?;
        let (c, hist) =
            projected_gradient_descent(&self.problem, &self.z0, &self.w0, &start, &self.bounds, &self.cost(), &self.cfg.optimizer)
                .map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("status", format!("{:?}", hist.status))?;
        let records = hist
            .records
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("iter", r.iter)?;
                d.set_item("J", r.j)?;
                d.set_item("pg_norm", r.pg_norm)?;
                d.set_item("step", r.step)?;
                d.set_item("feasible", r.feasible)?;
                Ok(d)
            })
            .collect::<PyResult<Vec<_>>>()?;
        out.set_item("history", records)?;
        out.set_item("v1", c.v1)?;
        out.set_item("v2", c.v2)?;
        Ok(out)
    }
}

/// Trilinear-form identity defects and the estimated constants of a config's mesh.
#[pyfunction]
fn check_forms<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = &config.inner;
    let mesh = cfg.build_mesh().map_err(to_py)?;
    let seed = cfg.forms_seed();
    let r = check_form_identities(&mesh, cfg.forms.n_samples, seed).map_err(to_py)?;
    let k = ConstantsReport::estimate(&mesh, cfg.forms.n_samples.min(50), seed).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("b_vv", r.b_vv)?;
    out.set_item("b_antisymmetry", r.b_antisymmetry)?;
    out.set_item("c_ww", r.c_ww)?;
    out.set_item("c_antisymmetry", r.c_antisymmetry)?;
    out.set_item("c1_hat", k.c1_hat)?;
    out.set_item("c1p_hat", k.c1p_hat)?;
    out.set_item("c2_hat", k.c2_hat)?;
    out.set_item("c3_hat", k.c3_hat)?;
    out.set_item("cB_hat", k.cb_hat)?;
    out.set_item("passed", r.passes(cfg.forms.tol_b, cfg.forms.tol_c) && k.all_positive())?;
    Ok(out)
}

/// Runs a command-line subcommand and returns its exit code.
#[pyfunction]
#[pyo3(signature = (command, config = None, out = None, seed = None))]
fn run(command: &str, config: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) -> PyResult<i32> {
    let command = match command {
        "mesh-info" => Command::MeshInfo,
        "check-forms" => Command::CheckForms,
        "solve" => Command::Solve,
        "optimize" => Command::Optimize,
        "grad-check" => Command::GradCheck,
        other => return Err(ConfigError::new_err(format!("unknown command `{other}`"))),
    };
    Ok(cli::run(&Invocation { command, config, out, seed }))
}

#[pymodule]
fn bouss(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(check_forms, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    Ok(())
}
