//! Run configuration: a versioned JSON document describing the mesh, physics,
//! initial data, controls, cost, solver tolerances and outputs.
//!
//! All random choices (random initial temperature, random controls, form
//! sampling) are drawn from ChaCha8 generators seeded with `seed`; each use
//! gets its own stream number so adding one random input does not shift the
//! others.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::control::{read_v1_csv, read_v2_csv, AdmissibleBox, Control, CostConfig, OptimizerConfig};
use crate::error::{Error, Result};
use crate::mesh::{build_unit_square_mesh, BoundaryTag, Mesh, SideTagging};
use crate::spaces::{interpolate_scalar, interpolate_vector, random_smooth_scalar, DiscreteField};
use crate::stepper::{Problem, SolverConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Stream numbers of the seeded generators.
pub mod streams {
    pub const INITIAL_TEMPERATURE: u64 = 1;
    pub const CONTROL_V1: u64 = 2;
    pub const CONTROL_V2: u64 = 3;
    pub const FORMS: u64 = 4;
}

/// Generator for one purpose.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub tagging: SideTagging,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { nx: 8, ny: 8, tagging: SideTagging::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub nu: f64,
    pub k: f64,
    pub beta: f64,
    pub g: [f64; 2],
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        let s = SolverConfig::default();
        PhysicsConfig { nu: s.nu, k: s.k, beta: s.beta, g: s.g }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { dt: 0.025, t_final: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityInit {
    Zero,
    /// `a·rot (x(1−x)y(1−y))²`
    Vortex { amplitude: f64 },
    /// `(a·y(1−y), 0)`
    Poiseuille { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemperatureInit {
    Zero,
    /// `a·sin(πx)(1+y)`
    Bump { amplitude: f64 },
    /// Seeded smooth random field vanishing on ∂Ω, scaled by `a`.
    Random { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub z0: VelocityInit,
    pub w0: TemperatureInit,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { z0: VelocityInit::Zero, w0: TemperatureInit::Bump { amplitude: 1.0 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum V1Spec {
    Constant { value: [f64; 2] },
    /// Uniform in the box, independently per entry.
    Random,
    /// A `control_v1.csv` written by an earlier run.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum V2Spec {
    Constant { value: f64 },
    Random,
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxConfig {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
}

impl Default for BoxConfig {
    fn default() -> Self {
        BoxConfig { alpha1: 0.1, beta1: 1.0, alpha2: 0.1, beta2: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub v1: V1Spec,
    pub v2: V2Spec,
    #[serde(rename = "box", default)]
    pub bounds: BoxConfig,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig { v1: V1Spec::Constant { value: [0.5, 0.5] }, v2: V2Spec::Constant { value: 0.5 }, bounds: BoxConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverTolerances {
    pub picard_tol: f64,
    pub picard_max: usize,
    pub lin_tol: f64,
    #[serde(default = "one")]
    pub grad_div: f64,
    #[serde(default = "yes")]
    pub temperature_enabled: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl Default for SolverTolerances {
    fn default() -> Self {
        let s = SolverConfig::default();
        SolverTolerances {
            picard_tol: s.picard_tol,
            picard_max: s.picard_max,
            lin_tol: s.lin_tol,
            grad_div: s.grad_div,
            temperature_enabled: s.temperature_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormsConfig {
    pub tol_b: f64,
    pub tol_c: f64,
    pub n_samples: usize,
}

impl Default for FormsConfig {
    fn default() -> Self {
        FormsConfig { tol_b: 1e-13, tol_c: 1e-11, n_samples: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub h_fd: f64,
    pub tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { h_fd: 1e-5, tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Snapshot every `stride` steps.
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: PathBuf::from("out"), stride: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub mesh: MeshConfig,
    pub physics: PhysicsConfig,
    pub time: TimeConfig,
    pub initial: InitialConfig,
    pub control: ControlConfig,
    pub cost: CostConfig,
    pub solver: SolverTolerances,
    pub forms: FormsConfig,
    pub optimizer: OptimizerConfig,
    pub grad_check: GradCheckConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            mesh: MeshConfig::default(),
            physics: PhysicsConfig::default(),
            time: TimeConfig::default(),
            initial: InitialConfig::default(),
            control: ControlConfig::default(),
            cost: CostConfig::default(),
            solver: SolverTolerances::default(),
            forms: FormsConfig::default(),
            optimizer: OptimizerConfig::default(),
            grad_check: GradCheckConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

const SECTIONS: [&str; 13] = [
    "schema_version",
    "seed",
    "mesh",
    "physics",
    "time",
    "initial",
    "control",
    "cost",
    "solver",
    "forms",
    "optimizer",
    "grad_check",
    "output",
];

fn section<T: DeserializeOwned>(obj: &serde_json::Map<String, serde_json::Value>, key: &str, errors: &mut Vec<String>) -> Option<T> {
    let value = obj.get(key)?;
    match serde_json::from_value(value.clone()) {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{key}: {e}"));
            None
        }
    }
}

impl RunConfig {
    /// Parses a config document. Sections left out take their defaults;
    /// every structural and semantic problem is collected before failing.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::parse(text, Path::new(""))
    }

    /// Relative control file paths are taken relative to `base`.
    fn parse(text: &str, base: &Path) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("not valid JSON: {e}")]))?;
        let Some(obj) = value.as_object() else {
            return Err(Error::Config(vec!["top level must be a JSON object".into()]));
        };
        let mut errors = Vec::new();
        for key in obj.keys() {
            if !SECTIONS.contains(&key.as_str()) {
                errors.push(format!("unknown section `{key}`"));
            }
        }
        let mut cfg = RunConfig::default();
        match obj.get("schema_version") {
            None => errors.push("missing schema_version".into()),
            Some(v) => match v.as_u64() {
                Some(n) if n == SCHEMA_VERSION as u64 => {}
                _ => errors.push(format!("unsupported schema_version {v} (expected {SCHEMA_VERSION})")),
            },
        }
        if let Some(v) = section(obj, "seed", &mut errors) {
            cfg.seed = v;
        }
        if let Some(v) = section(obj, "mesh", &mut errors) {
            cfg.mesh = v;
        }
        if let Some(v) = section(obj, "physics", &mut errors) {
            cfg.physics = v;
        }
        if let Some(v) = section(obj, "time", &mut errors) {
            cfg.time = v;
        }
        if let Some(v) = section(obj, "initial", &mut errors) {
            cfg.initial = v;
        }
        if let Some(v) = section(obj, "control", &mut errors) {
            cfg.control = v;
        }
        if let Some(v) = section(obj, "cost", &mut errors) {
            cfg.cost = v;
        }
        if let Some(v) = section(obj, "solver", &mut errors) {
            cfg.solver = v;
        }
        if let Some(v) = section(obj, "forms", &mut errors) {
            cfg.forms = v;
        }
        if let Some(v) = section(obj, "optimizer", &mut errors) {
            cfg.optimizer = v;
        }
        if let Some(v) = section(obj, "grad_check", &mut errors) {
            cfg.grad_check = v;
        }
        if let Some(v) = section(obj, "output", &mut errors) {
            cfg.output = v;
        }
        if let V1Spec::File { path } = &mut cfg.control.v1 {
            *path = base.join(&*path);
        }
        if let V2Spec::File { path } = &mut cfg.control.v2 {
            *path = base.join(&*path);
        }
        errors.extend(cfg.violations());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.time.dt,
            t_final: self.time.t_final,
            nu: self.physics.nu,
            k: self.physics.k,
            beta: self.physics.beta,
            g: self.physics.g,
            picard_tol: self.solver.picard_tol,
            picard_max: self.solver.picard_max,
            lin_tol: self.solver.lin_tol,
            grad_div: self.solver.grad_div,
            temperature_enabled: self.solver.temperature_enabled,
        }
    }

    /// Every semantic violation.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            v.push(format!("mesh: nx and ny must be positive (got {} x {})", self.mesh.nx, self.mesh.ny));
        }
        if !self.mesh.tagging.has(BoundaryTag::Gamma2) {
            v.push("mesh.tagging: Gamma2 must not be empty".into());
        }
        v.extend(self.solver_config().violations().into_iter().map(|m| format!("solver/physics/time: {m}")));
        let b = &self.control.bounds;
        if !(b.alpha1 > 0.0 && b.alpha1 <= b.beta1 && b.beta1.is_finite()) {
            v.push(format!("control.box: need 0 < alpha1 <= beta1 (got {} and {})", b.alpha1, b.beta1));
        }
        if !(b.alpha2 > 0.0 && b.alpha2 <= b.beta2 && b.beta2.is_finite()) {
            v.push(format!("control.box: need 0 < alpha2 <= beta2 (got {} and {})", b.alpha2, b.beta2));
        }
        if let V1Spec::Constant { value } = self.control.v1 {
            if value.iter().any(|c| !c.is_finite()) {
                v.push("control.v1: value must be finite".into());
            }
        }
        if let V2Spec::Constant { value } = self.control.v2 {
            if !value.is_finite() {
                v.push("control.v2: value must be finite".into());
            }
        }
        for (name, spec) in [("v1", file_of_v1(&self.control.v1)), ("v2", file_of_v2(&self.control.v2))] {
            if let Some(p) = spec {
                if !p.is_file() {
                    v.push(format!("control.{name}: file {} does not exist", p.display()));
                }
            }
        }
        let amp = match self.initial.z0 {
            VelocityInit::Zero => 0.0,
            VelocityInit::Vortex { amplitude } | VelocityInit::Poiseuille { amplitude } => amplitude,
        };
        let amp_w = match self.initial.w0 {
            TemperatureInit::Zero => 0.0,
            TemperatureInit::Bump { amplitude } | TemperatureInit::Random { amplitude } => amplitude,
        };
        if !amp.is_finite() || !amp_w.is_finite() {
            v.push("initial: amplitudes must be finite".into());
        }
        v.extend(self.cost.violations());
        v.extend(self.optimizer.violations());
        if !(self.forms.tol_b >= 0.0 && self.forms.tol_c >= 0.0) {
            v.push("forms: tolerances must be nonnegative".into());
        }
        if self.forms.n_samples == 0 {
            v.push("forms.n_samples must be at least 1".into());
        }
        if !(self.grad_check.h_fd > 0.0 && self.grad_check.h_fd.is_finite()) {
            v.push(format!("grad_check.h_fd must be positive (got {})", self.grad_check.h_fd));
        }
        if self.grad_check.tol.is_nan() || self.grad_check.tol < 0.0 {
            v.push(format!("grad_check.tol must be nonnegative (got {})", self.grad_check.tol));
        }
        if self.output.stride == 0 {
            v.push("output.stride must be at least 1".into());
        }
        v
    }

    /// Seed for the random fields of the form checks.
    pub fn forms_seed(&self) -> u64 {
        rand::Rng::gen(&mut rng_for(self.seed, streams::FORMS))
    }

    pub fn build_mesh(&self) -> Result<Arc<Mesh>> {
        Ok(Arc::new(build_unit_square_mesh(self.mesh.nx, self.mesh.ny, self.mesh.tagging)?))
    }

    pub fn build_problem(&self) -> Result<Problem> {
        Problem::new(self.build_mesh()?, self.solver_config())
    }

    pub fn initial_state(&self, problem: &Problem) -> (DiscreteField, DiscreteField) {
        let z0 = match self.initial.z0 {
            VelocityInit::Zero => problem.velocity.zero(),
            VelocityInit::Vortex { amplitude } => interpolate_vector(&problem.velocity, |x, y| {
                let (a, b) = (x * (1.0 - x), y * (1.0 - y));
                [2.0 * a * a * b * (1.0 - 2.0 * y), -2.0 * b * b * a * (1.0 - 2.0 * x)].map(|v| amplitude * v)
            }),
            VelocityInit::Poiseuille { amplitude } => interpolate_vector(&problem.velocity, |_, y| [amplitude * y * (1.0 - y), 0.0]),
        };
        let w0 = match self.initial.w0 {
            TemperatureInit::Zero => problem.temperature.zero(),
            TemperatureInit::Bump { amplitude } => {
                interpolate_scalar(&problem.temperature, |x, y| amplitude * (std::f64::consts::PI * x).sin() * (1.0 + y))
            }
            TemperatureInit::Random { amplitude } => {
                let mut rng = rng_for(self.seed, streams::INITIAL_TEMPERATURE);
                let mut f = random_smooth_scalar(&problem.temperature, &mut rng);
                f.coeffs.iter_mut().for_each(|c| *c *= amplitude);
                f
            }
        };
        (z0, w0)
    }

    pub fn admissible_box(&self, problem: &Problem) -> Result<AdmissibleBox> {
        let b = &self.control.bounds;
        AdmissibleBox::uniform(problem.n_steps(), problem.gamma1.len(), problem.gamma2.len(), b.alpha1, b.beta1, b.alpha2, b.beta2)
    }

    /// The control described by the config (not projected).
    pub fn initial_control(&self, problem: &Problem) -> Result<Control> {
        let (n, n1, n2) = (problem.n_steps(), problem.gamma1.len(), problem.gamma2.len());
        let b = &self.control.bounds;
        let mut c = Control::zeros(n, n1, n2);
        match &self.control.v1 {
            V1Spec::Constant { value } => c.v1 = vec![vec![*value; n1]; n],
            V1Spec::Random => {
                let mut rng = rng_for(self.seed, streams::CONTROL_V1);
                for v in c.v1.iter_mut().flatten().flatten() {
                    *v = rng.gen_range(b.alpha1..=b.beta1);
                }
            }
            V1Spec::File { path } => c.v1 = read_v1_csv(path, n, n1)?,
        }
        match &self.control.v2 {
            V2Spec::Constant { value } => c.v2 = vec![vec![*value; n2]; n],
            V2Spec::Random => {
                let mut rng = rng_for(self.seed, streams::CONTROL_V2);
                for v in c.v2.iter_mut().flatten() {
                    *v = rng.gen_range(b.alpha2..=b.beta2);
                }
            }
            V2Spec::File { path } => c.v2 = read_v2_csv(path, n, n2)?,
        }
        Ok(c)
    }
}

fn file_of_v1(s: &V1Spec) -> Option<&Path> {
    match s {
        V1Spec::File { path } => Some(path),
        _ => None,
    }
}

fn file_of_v2(s: &V2Spec) -> Option<&Path> {
    match s {
        V2Spec::File { path } => Some(path),
        _ => None,
    }
}
