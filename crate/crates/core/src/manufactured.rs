//! Manufactured solutions: volume sources and boundary data that make a
//! chosen steady `(z*, w*, P*)` solve the system, plus the error studies
//! built on them.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::control::Control;
use crate::error::Result;
use crate::mesh::{build_unit_square_mesh, Mesh, SideTagging};
use crate::quadrature::triangle_quadrature;
use crate::spaces::{interpolate_scalar, interpolate_vector, DiscreteField, ElementGeometry, FunctionSpace, ScalarField, VectorField};
use crate::stepper::{Problem, SolverConfig, Sources, State};

const LOAD_DEGREE: usize = 14;

/// Value and first/second derivatives of the exact fields at a point.
struct Exact {
    z: [f64; 2],
    grad_z: [[f64; 2]; 2],
    lap_z: [f64; 2],
    w: f64,
    grad_w: [f64; 2],
    lap_w: f64,
    p: f64,
    grad_p: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ManufacturedCase {
    /// `z = (y(1−y), 0)`, `w = x(1−x)`, `P = 1 + x/2`: contained in the
    /// discrete spaces.
    Polynomial,
    /// `z = rot(sin²(πy) cos(πx))`, `w = sin(πx) eʸ`, `P = cos(πx)(1+y)/2`.
    Trigonometric,
}

impl ManufacturedCase {
    fn exact(self, x: f64, y: f64) -> Exact {
        match self {
            ManufacturedCase::Polynomial => Exact {
                z: [y * (1.0 - y), 0.0],
                grad_z: [[0.0, 1.0 - 2.0 * y], [0.0, 0.0]],
                lap_z: [-2.0, 0.0],
                w: x * (1.0 - x),
                grad_w: [1.0 - 2.0 * x, 0.0],
                lap_w: -2.0,
                p: 1.0 + 0.5 * x,
                grad_p: [0.5, 0.0],
            },
            ManufacturedCase::Trigonometric => {
                let (sx, cx) = (PI * x).sin_cos();
                let sy = (PI * y).sin();
                let (s2y, c2y) = (2.0 * PI * y).sin_cos();
                let ey = y.exp();
                let pi2 = PI * PI;
                let pi3 = pi2 * PI;
                Exact {
                    z: [PI * s2y * cx, PI * sx * sy * sy],
                    grad_z: [[-pi2 * s2y * sx, 2.0 * pi2 * c2y * cx], [pi2 * cx * sy * sy, pi2 * sx * s2y]],
                    lap_z: [-5.0 * pi3 * s2y * cx, pi3 * sx * (2.0 * c2y - sy * sy)],
                    w: sx * ey,
                    grad_w: [PI * cx * ey, sx * ey],
                    lap_w: (1.0 - pi2) * sx * ey,
                    p: 0.5 * cx * (1.0 + y),
                    grad_p: [-0.5 * PI * sx * (1.0 + y), 0.5 * cx],
                }
            }
        }
    }

    pub fn velocity(self, x: f64, y: f64) -> [f64; 2] {
        self.exact(x, y).z
    }

    pub fn temperature(self, x: f64, y: f64) -> f64 {
        self.exact(x, y).w
    }

    pub fn head(self, x: f64, y: f64) -> f64 {
        self.exact(x, y).p
    }

    /// Momentum source `−νΔz + rot z (−z₂, z₁) + βg w − ∇P`.
    pub fn velocity_source(self, cfg: &SolverConfig, x: f64, y: f64) -> [f64; 2] {
        let e = self.exact(x, y);
        let rot = e.grad_z[1][0] - e.grad_z[0][1];
        let conv = [-rot * e.z[1], rot * e.z[0]];
        std::array::from_fn(|c| -cfg.nu * e.lap_z[c] + conv[c] + cfg.beta * cfg.g[c] * e.w - e.grad_p[c])
    }

    /// Heat source `−kΔw + z·∇w`.
    pub fn temperature_source(self, cfg: &SolverConfig, x: f64, y: f64) -> f64 {
        let e = self.exact(x, y);
        let adv = e.z[0] * e.grad_w[0] + e.z[1] * e.grad_w[1];
        -cfg.k * e.lap_w + adv
    }
}

/// `∫ f·ψ` for every velocity basis function.
pub fn vector_load(space: &FunctionSpace, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
    let mut out = vec![0.0; space.n_dofs()];
    let q = triangle_quadrature(LOAD_DEGREE).expect("supported degree");
    let nc = space.n_components();
    for e in 0..space.mesh.n_elements() {
        let geo = ElementGeometry::new(&space.mesh, e);
        let dofs = space.local_dofs(e);
        for (l, w) in q.iter() {
            let [x, y] = geo.point(l);
            let fv = f(x, y);
            let b = space.basis(l, &geo);
            for a in 0..b.n {
                for c in 0..nc {
                    if let Some(i) = dofs[a * nc + c] {
                        out[i] += w * geo.det * b.phi[a] * fv[c];
                    }
                }
            }
        }
    }
    out
}

/// `∫ f φ` for every scalar basis function.
pub fn scalar_load(space: &FunctionSpace, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    vector_load(space, |x, y| [f(x, y), 0.0])
}

/// `‖u_h − u‖_{L²}`; scalar fields use the first component of `exact`.
pub fn l2_error(field: &DiscreteField, exact: impl Fn(f64, f64) -> [f64; 2]) -> f64 {
    let space = &field.space;
    let q = triangle_quadrature(LOAD_DEGREE).expect("supported degree");
    let mut total = 0.0;
    for e in 0..space.mesh.n_elements() {
        let geo = ElementGeometry::new(&space.mesh, e);
        for (l, w) in q.iter() {
            let [x, y] = geo.point(l);
            let ex = exact(x, y);
            let d2 = if space.n_components() == 2 {
                let v = VectorField::eval(field, e, l, &geo).value;
                (v[0] - ex[0]).powi(2) + (v[1] - ex[1]).powi(2)
            } else {
                (ScalarField::eval(field, e, l, &geo).value - ex[0]).powi(2)
            };
            total += w * geo.det * d2;
        }
    }
    total.sqrt()
}

/// Sources, boundary controls and interpolated initial data for `case`.
pub struct ManufacturedData {
    pub sources: Sources,
    pub control: Control,
    pub z0: DiscreteField,
    pub w0: DiscreteField,
}

pub fn manufactured_data(problem: &Problem, case: ManufacturedCase) -> ManufacturedData {
    let cfg = &problem.cfg;
    let velocity = vector_load(&problem.velocity, |x, y| case.velocity_source(cfg, x, y));
    let temperature = if cfg.temperature_enabled {
        scalar_load(&problem.temperature, |x, y| case.temperature_source(cfg, x, y))
    } else {
        vec![0.0; problem.temperature.n_dofs()]
    };
    let v1: Vec<[f64; 2]> = trace_normals(&problem.gamma1)
        .iter()
        .zip(&problem.gamma1.coords)
        .map(|(n, p)| {
            let head = case.head(p[0], p[1]);
            [head * n[0], head * n[1]]
        })
        .collect();
    let v2: Vec<f64> = trace_normals(&problem.gamma2)
        .iter()
        .zip(&problem.gamma2.coords)
        .map(|(n, p)| {
            let g = case.exact(p[0], p[1]).grad_w;
            cfg.k * (g[0] * n[0] + g[1] * n[1])
        })
        .collect();
    let steps = problem.n_steps();
    ManufacturedData {
        sources: Sources { velocity, temperature },
        control: Control { v1: vec![v1; steps], v2: vec![v2; steps] },
        z0: interpolate_vector(&problem.velocity, |x, y| case.velocity(x, y)),
        w0: interpolate_scalar(&problem.temperature, |x, y| case.temperature(x, y)),
    }
}

/// Outward normal at each trace node, taken from the first edge touching it.
fn trace_normals(trace: &crate::spaces::BoundaryTrace) -> Vec<[f64; 2]> {
    let mut n = vec![None; trace.len()];
    for edge in &trace.edges {
        for &k in &edge.local {
            n[k].get_or_insert(edge.side.outward_normal());
        }
    }
    n.into_iter().map(|v| v.unwrap_or([0.0; 2])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub nx: usize,
    pub h: f64,
    pub error_z: f64,
    pub error_w: f64,
}

/// Runs the manufactured steady state on `nx × nx` meshes for each level and
/// reports final-time L² errors.
pub fn manufactured_convergence(cfg: &SolverConfig, levels: &[usize], case: ManufacturedCase) -> Result<Vec<ErrorRow>> {
    levels
        .iter()
        .map(|&nx| {
            let mesh = Arc::new(build_unit_square_mesh(nx, nx, SideTagging::default())?);
            let problem = Problem::new(Arc::clone(&mesh), *cfg)?;
            let data = manufactured_data(&problem, case);
            let traj =
                problem.solve_transient_with_sources(&data.z0, &data.w0, &data.control, Some(&data.sources))?.into_result()?;
            let last = traj.final_state();
            Ok(ErrorRow {
                nx,
                h: mesh.h,
                error_z: l2_error(&last.z, |x, y| case.velocity(x, y)),
                error_w: l2_error(&last.w, |x, y| [case.temperature(x, y), 0.0]),
            })
        })
        .collect()
}

/// `‖u_{dt} − u_{dt/2}‖ / ‖u_{dt/2} − u_{dt/4}‖` for the final state, with the
/// norm `(|z|² + |w|²)^{1/2}`. Controls are held constant in time at `control.v*[0]`.
pub fn temporal_richardson_ratio(
    mesh: &Arc<Mesh>,
    cfg: &SolverConfig,
    z0: &DiscreteField,
    w0: &DiscreteField,
    v1: &[[f64; 2]],
    v2: &[f64],
) -> Result<f64> {
    let mut finals: Vec<(Problem, State)> = Vec::new();
    for refine in [1.0, 2.0, 4.0] {
        let c = SolverConfig { dt: cfg.dt / refine, ..*cfg };
        let p = Problem::new(Arc::clone(mesh), c)?;
        let control = Control { v1: vec![v1.to_vec(); p.n_steps()], v2: vec![v2.to_vec(); p.n_steps()] };
        let traj = p.solve_transient(z0, w0, &control)?.into_result()?;
        let last = traj.final_state().clone();
        finals.push((p, last));
    }
    let dist = |a: &State, b: &State, p: &Problem| {
        let dz: Vec<f64> = a.z.coeffs.iter().zip(&b.z.coeffs).map(|(x, y)| x - y).collect();
        let dw: Vec<f64> = a.w.coeffs.iter().zip(&b.w.coeffs).map(|(x, y)| x - y).collect();
        (p.mass_z.bilinear(&dz, &dz) + p.mass_w.bilinear(&dw, &dw)).sqrt()
    };
    let p = &finals[0].0;
    Ok(dist(&finals[0].1, &finals[1].1, p) / dist(&finals[1].1, &finals[2].1, p))
}
