mod common;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use bouss_core::control::Control;
use bouss_core::forms::{assemble_a2, assemble_mass};
use bouss_core::manufactured::{manufactured_convergence, manufactured_data, temporal_richardson_ratio, ManufacturedCase};
use bouss_core::spaces::{interpolate_scalar, interpolate_vector, DiscreteField};
use bouss_core::stepper::{recover_static_pressure, Problem, SolverConfig};
use bouss_core::Error;
use common::*;

fn vortex(problem: &Problem) -> DiscreteField {
    // rot of (x(1-x)y(1-y))^2, vanishing with its gradient on the boundary
    interpolate_vector(&problem.velocity, |x, y| {
        let (a, b) = (x * (1.0 - x), y * (1.0 - y));
        [2.0 * a * a * b * (1.0 - 2.0 * y), -2.0 * b * b * a * (1.0 - 2.0 * x)].map(|v| 40.0 * v)
    })
}

fn bump(problem: &Problem) -> DiscreteField {
    interpolate_scalar(&problem.temperature, |x, y| (std::f64::consts::PI * x).sin() * (1.0 + y))
}

fn problem(n: usize, cfg: SolverConfig) -> Problem {
    Problem::new(mesh(n), cfg).unwrap()
}

#[test]
fn zero_data_is_a_fixed_point() {
    let cfg = SolverConfig { t_final: 0.25, ..SolverConfig::default() };
    let p = problem(4, cfg);
    assert_eq!(p.n_steps(), 10);
    let traj = p.solve_transient(&p.velocity.zero(), &p.temperature.zero(), &Control::zeros_for(&p)).unwrap();
    assert!(traj.is_complete());
    assert_eq!(traj.states.len(), 11);
    for s in &traj.states {
        let m = s.z.coeffs.iter().chain(&s.w.coeffs).chain(&s.p.coeffs).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(m <= 1e-12, "{m}");
    }
}

#[test]
fn zero_buoyancy_decouples_velocity() {
    let cfg = SolverConfig { beta: 0.0, t_final: 0.25, ..SolverConfig::default() };
    let coupled = problem(6, cfg);
    let alone = problem(6, SolverConfig { temperature_enabled: false, ..cfg });
    let control = Control::constant(coupled.n_steps(), coupled.gamma1.len(), coupled.gamma2.len(), [0.3, -0.2], 0.0);
    let z0 = vortex(&coupled);
    let w0 = coupled.temperature.zero();
    let a = coupled.solve_transient(&z0, &w0, &control).unwrap().into_result().unwrap();
    let b = alone.solve_transient(&z0, &w0, &control).unwrap().into_result().unwrap();
    for (sa, sb) in a.states.iter().zip(&b.states) {
        assert!(sa.w.coeffs.iter().all(|v| *v == 0.0));
        let d = sa.z.coeffs.iter().zip(&sb.z.coeffs).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(d <= 1e-12, "{d}");
    }
}

#[test]
fn single_heat_step_matches_dense_solve() {
    let cfg = SolverConfig { beta: 0.0, dt: 0.1, t_final: 0.1, ..SolverConfig::default() };
    let p = problem(2, cfg);
    let v2 = vec![1.0; p.gamma2.len()];
    let (next, _, _) = p.solve_step(&p.zero_state(), &vec![[0.0; 2]; p.gamma1.len()], &v2).unwrap();

    let n = p.temperature.n_dofs();
    let mass = assemble_mass(&p.temperature).matrix.to_dense();
    let stiff = assemble_a2(&p.temperature).unwrap().matrix.to_dense();
    let a = DMatrix::from_fn(n, n, |i, j| mass[i][j] / cfg.dt + cfg.k * stiff[i][j]);
    // ∫_{Γ₂} φ ds for quadratic Lagrange functions: h/6 per edge end, 2h/3 per midpoint
    let h = 0.5;
    let mut rhs = DVector::zeros(n);
    let lw = 5;
    for row in [0, 4] {
        for i in 0..lw {
            let weight = if i % 2 == 1 { 2.0 * h / 3.0 } else if i == 0 || i == lw - 1 { h / 6.0 } else { h / 3.0 };
            if let Some(dof) = p.temperature.free_index(row * lw + i, 0) {
                rhs[dof] += weight;
            }
        }
    }
    let w = a.lu().solve(&rhs).unwrap();
    let err = (0..n).fold(0.0f64, |m, i| m.max((w[i] - next.w.coeffs[i]).abs()));
    assert!(err <= 1e-12 * w.amax(), "{err}");
    assert!(next.z.coeffs.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn energy_identities_hold_per_step() {
    let cfg = SolverConfig::default();
    let p = problem(8, cfg);
    assert_eq!(p.n_steps(), 32);
    let control = Control::constant(p.n_steps(), p.gamma1.len(), p.gamma2.len(), [0.5, 0.5], 0.5);
    let traj = p.solve_transient(&vortex(&p), &bump(&p), &control).unwrap().into_result().unwrap();
    let tol = 10.0 * (cfg.lin_tol + cfg.picard_tol);
    let mut worst = 0.0f64;
    for row in &traj.log.rows {
        assert!(row.residual_z.abs() <= tol * row.scale_z, "step {}: r_z = {:e}", row.step, row.residual_z);
        assert!(row.residual_w.abs() <= tol * row.scale_w, "step {}: r_w = {:e}", row.step, row.residual_w);
        worst = worst.max(row.residual_z.abs() / row.scale_z).max(row.residual_w.abs() / row.scale_w);
    }
    println!("worst relative energy residual {worst:e}");
    for s in &traj.states[1..] {
        assert!(p.divergence_residual(&s.z) <= cfg.lin_tol, "{}", p.divergence_residual(&s.z));
    }
}

#[test]
fn kinetic_energy_decays_without_data() {
    let cfg = SolverConfig { beta: 0.0, ..SolverConfig::default() };
    let p = problem(8, cfg);
    let traj = p.solve_transient(&vortex(&p), &bump(&p), &Control::zeros_for(&p)).unwrap().into_result().unwrap();
    let kin: Vec<f64> = traj.log.rows.iter().map(|r| r.kinetic).collect();
    assert!(kin[0] > 0.0);
    for pair in kin.windows(2) {
        assert!(pair[1] <= pair[0], "{pair:?}");
    }
}

#[test]
fn polynomial_manufactured_state_is_reproduced() {
    let cfg = SolverConfig { t_final: 0.1, ..SolverConfig::default() };
    let p = problem(4, cfg);
    let data = manufactured_data(&p, ManufacturedCase::Polynomial);
    let traj = p.solve_transient_with_sources(&data.z0, &data.w0, &data.control, Some(&data.sources)).unwrap();
    let traj = traj.into_result().unwrap();
    for s in &traj.states[1..] {
        let ez = s.z.coeffs.iter().zip(&data.z0.coeffs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let ew = s.w.coeffs.iter().zip(&data.w0.coeffs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(ez < 1e-11 && ew < 1e-11, "{ez:e} {ew:e}");
        for (i, v) in s.p.coeffs.iter().enumerate() {
            let (node, _) = p.head.dof_location(i);
            let [x, _] = p.mesh.nodes[node];
            assert!((v - (1.0 + 0.5 * x)).abs() < 1e-9, "head {v} at x = {x}");
        }
    }
}

#[test]
fn zero_forcing_manufactured_run_stays_zero() {
    let cfg = SolverConfig { t_final: 0.1, ..SolverConfig::default() };
    let p = problem(4, cfg);
    let data = manufactured_data(&p, ManufacturedCase::Polynomial);
    let sources = bouss_core::stepper::Sources {
        velocity: vec![0.0; data.sources.velocity.len()],
        temperature: vec![0.0; data.sources.temperature.len()],
    };
    let traj = p
        .solve_transient_with_sources(&p.velocity.zero(), &p.temperature.zero(), &Control::zeros_for(&p), Some(&sources))
        .unwrap();
    assert!(traj.final_state().z.coeffs.iter().chain(&traj.final_state().w.coeffs).all(|v| v.abs() <= 1e-12));
}

#[test]
fn spatial_error_drops_under_refinement() {
    let cfg = SolverConfig { dt: 0.05, t_final: 0.2, nu: 1.0, k: 1.0, ..SolverConfig::default() };
    let rows = manufactured_convergence(&cfg, &[8, 16], ManufacturedCase::Trigonometric).unwrap();
    let rz = rows[0].error_z / rows[1].error_z;
    let rw = rows[0].error_w / rows[1].error_w;
    println!("{rows:?} ratios {rz} {rw}");
    assert!(rz >= 2.0 && rw >= 2.0);
}

#[test]
fn time_refinement_is_first_order() {
    let cfg = SolverConfig { dt: 0.05, t_final: 0.4, ..SolverConfig::default() };
    let m = mesh(4);
    let p = Problem::new(Arc::clone(&m), cfg).unwrap();
    let ratio = temporal_richardson_ratio(
        &m,
        &cfg,
        &vortex(&p),
        &bump(&p),
        &vec![[0.5, 0.5]; p.gamma1.len()],
        &vec![0.5; p.gamma2.len()],
    )
    .unwrap();
    println!("richardson ratio {ratio}");
    assert!(ratio > 1.8 && ratio < 2.2, "{ratio}");
}

#[test]
fn static_pressure_subtracts_kinetic_head() {
    let p = problem(2, SolverConfig::default());
    let mut s = p.zero_state();
    s.p.coeffs.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64);
    let pi = recover_static_pressure(&s).unwrap();
    assert_eq!(pi.coeffs, s.p.coeffs);
    s.p.coeffs.iter_mut().for_each(|v| *v = 2.5);
    assert!(recover_static_pressure(&s).unwrap().coeffs.iter().all(|v| *v == 2.5));
    s.z = vortex(&p);
    let pi = recover_static_pressure(&s).unwrap();
    for (i, v) in pi.coeffs.iter().enumerate() {
        let (node, _) = p.head.dof_location(i);
        let [x, y] = p.mesh.nodes[node];
        let a = (x * (1.0 - x), y * (1.0 - y));
        let z = [80.0 * a.0 * a.0 * a.1 * (1.0 - 2.0 * y), -80.0 * a.1 * a.1 * a.0 * (1.0 - 2.0 * x)];
        assert!((v - (2.5 - 0.5 * (z[0] * z[0] + z[1] * z[1]))).abs() < 1e-13);
    }
}

#[test]
fn picard_budget_exhaustion_is_reported() {
    let cfg = SolverConfig { picard_max: 1, ..SolverConfig::default() };
    let p = problem(4, cfg);
    let traj = p.solve_transient(&vortex(&p), &bump(&p), &Control::zeros_for(&p)).unwrap();
    assert!(matches!(traj.failure, Some(Error::PicardDiverged { iterations: 1, .. })));
    assert_eq!(traj.states.len(), 1);
}

#[test]
fn mismatched_control_is_rejected() {
    let p = problem(4, SolverConfig::default());
    let bad = Control::zeros(p.n_steps() - 1, p.gamma1.len(), p.gamma2.len());
    assert!(matches!(p.solve_transient(&p.velocity.zero(), &p.temperature.zero(), &bad), Err(Error::ShapeMismatch(_))));
    assert!(matches!(p.load_l2(&[1.0]), Err(Error::ShapeMismatch(_))));
}

#[test]
fn invalid_solver_config_lists_every_problem() {
    let cfg = SolverConfig { dt: -1.0, nu: 0.0, k: -2.0, ..SolverConfig::default() };
    match Problem::new(mesh(2), cfg) {
        Err(Error::Config(v)) => assert!(v.len() >= 3, "{v:?}"),
        Err(e) => panic!("{e:?}"),
        Ok(_) => panic!("accepted"),
    }
}
