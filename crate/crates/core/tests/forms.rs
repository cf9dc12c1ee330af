mod common;

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bouss_core::forms::*;
use bouss_core::mesh::BoundaryTag;
use bouss_core::poly::Poly2;
use bouss_core::spaces::*;
use bouss_core::sparse::CsrMatrix;
use bouss_core::Error;
use common::*;

fn spaces(n: usize) -> (Arc<FunctionSpace>, Arc<FunctionSpace>, Arc<FunctionSpace>) {
    let m = mesh(n);
    (
        Arc::new(FunctionSpace::new(Arc::clone(&m), SpaceKind::Velocity)),
        Arc::new(FunctionSpace::new(Arc::clone(&m), SpaceKind::Temperature)),
        Arc::new(FunctionSpace::new(m, SpaceKind::Head)),
    )
}

fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows, m.ncols);
    for (r, c, v) in m.triplets() {
        d[(r, c)] += v;
    }
    d
}

#[test]
fn b_identities_on_random_fields() {
    let (vel, _, _) = spaces(8);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let u = random_coefficients(&vel, &mut rng);
        let v = random_coefficients(&vel, &mut rng);
        let w = random_coefficients(&vel, &mut rng);
        let (nu, nv, nw) = (h1_norm(&u), h1_norm(&v), h1_norm(&w));
        let bvv = eval_b(&vel.mesh, &u, &v, &v).unwrap();
        assert!(bvv.abs() <= 1e-13 * nu * nv * nv, "b(u,v,v) = {bvv}");
        let s = eval_b(&vel.mesh, &u, &v, &w).unwrap() + eval_b(&vel.mesh, &u, &w, &v).unwrap();
        assert!(s.abs() <= 1e-13 * nu * nv * nw, "antisymmetry defect {s}");
    }
}

#[test]
fn b_zero_first_argument() {
    let (vel, _, _) = spaces(4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v = random_coefficients(&vel, &mut rng);
    assert_eq!(eval_b(&vel.mesh, &vel.zero(), &v, &v.clone()).unwrap(), 0.0);
}

#[test]
fn b_matches_dense_quadrature_for_vortex() {
    let (vel, _, _) = spaces(8);
    let u = AnalyticDivFreeField::cell_vortex();
    let w = interpolate_vector(&vel, |_, _| [1.0, 0.0]);
    let value = eval_b(&vel.mesh, &u, &u, &w).unwrap();
    let oracle = dense_integral(&vel.mesh, 12, |e, l, g| {
        let p = VectorField::eval(&u, e, l, g);
        let q = VectorField::eval(&w, e, l, g);
        p.rot() * (p.value[0] * q.value[1] - p.value[1] * q.value[0])
    });
    assert!((value - oracle).abs() <= 1e-10 * oracle.abs().max(1e-3), "{value} vs {oracle}");
}

#[test]
fn b_on_polynomials_matches_exact_integral() {
    let m = mesh(4);
    let (x, y) = (Poly2::x(), Poly2::y());
    let u = PolyVectorField::new(&(&x * &y) + &Poly2::constant(0.5), &x.pow(2) - &y);
    let v = PolyVectorField::new(&y.pow(2) - &x, &(&x * &y) * &x);
    let w = PolyVectorField::new(Poly2::constant(1.0), &x + &y.pow(2));
    let rot = &u.components[1].dx() - &u.components[0].dy();
    let cross = &(&v.components[0] * &w.components[1]) - &(&v.components[1] * &w.components[0]);
    let oracle = square_integral(&(&rot * &cross));
    let value = eval_b(&m, &u, &v, &w).unwrap();
    assert!((value - oracle).abs() < 1e-12 * oracle.abs().max(1.0), "{value} vs {oracle}");
}

#[test]
fn c_vanishes_for_divergence_free_transport() {
    let (_, temp, _) = spaces(8);
    let z = AnalyticDivFreeField::clamped_vortex();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let w = random_coefficients(&temp, &mut rng);
        let phi = random_coefficients(&temp, &mut rng);
        let scale = vector_h1_norm(&temp.mesh, &z) * h1_norm(&w) * h1_norm(&phi);
        let cww = eval_c(&temp.mesh, &z, &w, &w.clone()).unwrap();
        assert!(cww.abs() <= 1e-11 * scale, "c(z,w,w) = {cww}");
        let anti = eval_c(&temp.mesh, &z, &w, &phi).unwrap() + eval_c(&temp.mesh, &z, &phi, &w).unwrap();
        assert!(anti.abs() <= 1e-11 * scale, "antisymmetry defect {anti}");
    }
    assert_eq!(eval_c(&temp.mesh, &PolyVectorField::constant([0.0, 0.0]), &temp.zero(), &temp.zero()).unwrap(), 0.0);
}

#[test]
fn c_symmetric_part_matches_divergence_theorem() {
    let m = mesh(4);
    let (x, y) = (Poly2::x(), Poly2::y());
    let one = Poly2::constant(1.0);
    let z = PolyVectorField::new(&(&x * &y) + &one, &(&x.pow(2) * &y) - &x);
    let w = &(&x * &x) + &y;
    let phi = &(&y * &x) - &one;
    let value = eval_c(&m, &z, &PolyScalarField::new(w.clone()), &PolyScalarField::new(phi.clone())).unwrap()
        + eval_c(&m, &z, &PolyScalarField::new(phi.clone()), &PolyScalarField::new(w.clone())).unwrap();
    let wphi = &w * &phi;
    let div = &z.components[0].dx() + &z.components[1].dy();
    let boundary = integral_along_x(&(&z.components[0] * &wphi), 1.0) - integral_along_x(&(&z.components[0] * &wphi), 0.0)
        + integral_along_y(&(&z.components[1] * &wphi), 1.0)
        - integral_along_y(&(&z.components[1] * &wphi), 0.0);
    let oracle = boundary - square_integral(&(&div * &wphi));
    assert!((value - oracle).abs() < 1e-12 * oracle.abs().max(1.0), "{value} vs {oracle}");
}

#[test]
fn eval_rejects_foreign_mesh() {
    let (vel, _, _) = spaces(4);
    let other = Arc::new(FunctionSpace::new(mesh(2), SpaceKind::Velocity));
    let err = eval_b(&vel.mesh, &vel.zero(), &other.zero(), &vel.zero()).unwrap_err();
    assert!(matches!(err, Error::SpaceMismatch(_)));
}

#[test]
fn assembled_trilinear_operators_match_direct_evaluation() {
    let (vel, temp, _) = spaces(4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = random_coefficients(&vel, &mut rng);
    let wf = random_coefficients(&temp, &mut rng);
    let bl = assemble_b_linearized(&z).unwrap();
    let bf = assemble_b_first_slot(&z).unwrap();
    let cl = assemble_c_linearized(&z, &temp).unwrap();
    let cs = assemble_c_skew(&z, &temp).unwrap();
    let csv = assemble_c_skew_velocity(&wf, &vel).unwrap();
    for _ in 0..100 {
        let v = random_coefficients(&vel, &mut rng);
        let w = random_coefficients(&vel, &mut rng);
        let scale = h1_norm(&z) * h1_norm(&v) * h1_norm(&w);
        let direct = eval_b(&vel.mesh, &z, &v, &w).unwrap();
        assert!((bl.apply(&w, &v) - direct).abs() <= 1e-12 * scale);
        let direct = eval_b(&vel.mesh, &v, &z, &w).unwrap();
        assert!((bf.apply(&w, &v) - direct).abs() <= 1e-12 * scale);

        let a = random_coefficients(&temp, &mut rng);
        let p = random_coefficients(&temp, &mut rng);
        let scale = h1_norm(&z) * h1_norm(&a) * h1_norm(&p);
        let cap = eval_c(&temp.mesh, &z, &a, &p).unwrap();
        let cpa = eval_c(&temp.mesh, &z, &p, &a).unwrap();
        assert!((cl.apply(&p, &a) - cap).abs() <= 1e-12 * scale);
        assert!((cs.apply(&p, &a) - 0.5 * (cap - cpa)).abs() <= 1e-12 * scale);

        // with the advecting field varying and w frozen
        let scale = h1_norm(&v) * h1_norm(&wf) * h1_norm(&p);
        let skew = 0.5 * (eval_c(&temp.mesh, &v, &wf, &p).unwrap() - eval_c(&temp.mesh, &v, &p, &wf).unwrap());
        assert!((csv.matrix.bilinear(&p.coeffs, &v.coeffs) - skew).abs() <= 1e-12 * scale);
    }
    assert_eq!(assemble_b_linearized(&vel.zero()).unwrap().matrix.max_abs(), 0.0);
    assert_eq!(assemble_c_linearized(&vel.zero(), &temp).unwrap().matrix.max_abs(), 0.0);
}

fn poiseuille() -> AnalyticDivFreeField {
    let y = Poly2::y();
    AnalyticDivFreeField::new(&y.pow(2).scale(0.5) - &y.pow(3).scale(1.0 / 3.0))
}

#[test]
fn c_linearized_is_skew_for_divergence_free_advection() {
    // Poiseuille flow lies in the velocity space and is exactly div-free
    let (vel, temp, _) = spaces(8);
    let stream = poiseuille();
    let z = interpolate_vector(&vel, |x, y| stream.at(x, y).value);
    assert!(z.coeffs.iter().any(|c| *c != 0.0));
    let c = dense(&assemble_c_linearized(&z, &temp).unwrap().matrix);
    let sym = &c + c.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let x = nalgebra::DVector::from_fn(temp.n_dofs(), |_, _| rng.gen_range(-1.0..1.0));
        let q = (x.transpose() * &sym * &x)[(0, 0)];
        assert!(q.abs() <= 1e-11 * x.norm_squared() * c.norm(), "{q}");
    }
}

#[test]
fn linear_operators_are_symmetric_and_mass_is_spd() {
    let (vel, temp, _) = spaces(4);
    for m in [assemble_a1(&vel).unwrap().matrix, assemble_a2(&temp).unwrap().matrix] {
        let d = dense(&m);
        let scale = d.amax();
        assert!((&d - d.transpose()).amax() <= 1e-12 * scale);
    }
    for s in [&vel, &temp] {
        let d = dense(&assemble_mass(s).matrix);
        assert!((&d - d.transpose()).amax() <= 1e-14 * d.amax());
        assert!(d.clone().cholesky().is_some());
    }
    let zero = vel.zero();
    assert_eq!(assemble_a1(&vel).unwrap().apply(&zero, &zero), 0.0);
    assert!(matches!(assemble_a1(&temp), Err(Error::SpaceMismatch(_))));
}

#[test]
fn grad_div_completes_rot_to_full_gradient() {
    // with z·t = 0 on straight sides: ‖∇z‖² = ‖rot z‖² + ‖div z‖²
    let (vel, _, _) = spaces(4);
    let a = assemble_a1_stabilized(&vel, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let z = random_coefficients(&vel, &mut rng);
        let grad2 = h1_norm(&z).powi(2) - l2_norm(&z).powi(2);
        assert!((a.bilinear(&z.coeffs, &z.coeffs) - grad2).abs() < 1e-10 * grad2);
    }
}

#[test]
fn rigid_rotation_has_rot_norm_four() {
    let m = mesh(8);
    let vel = Arc::new(FunctionSpace::unconstrained(m, SpaceKind::Velocity));
    let z = interpolate_vector(&vel, |x, y| [-y, x]);
    let a = assemble_a1(&vel).unwrap();
    assert!((a.apply(&z, &z) - 4.0).abs() < 1e-12);
}

#[test]
fn a2_of_sine_converges_to_half_pi_squared() {
    let exact = std::f64::consts::PI.powi(2) / 2.0;
    let mut errs = Vec::new();
    for n in [4, 8, 16] {
        let (_, temp, _) = spaces(n);
        let w = interpolate_scalar(&temp, |x, _| (std::f64::consts::PI * x).sin());
        let a = assemble_a2(&temp).unwrap();
        errs.push((a.apply(&w, &w) - exact).abs());
    }
    assert!(errs[2] < 1e-3);
    assert!(errs[0] / errs[1] > 3.0 && errs[1] / errs[2] > 3.0, "{errs:?}");
}

#[test]
fn buoyancy_values() {
    let m = mesh(4);
    let vel = Arc::new(FunctionSpace::unconstrained(Arc::clone(&m), SpaceKind::Velocity));
    let temp = Arc::new(FunctionSpace::unconstrained(Arc::clone(&m), SpaceKind::Temperature));
    let g = assemble_buoyancy(&vel, &temp, [0.0, -1.0], 1.0).unwrap();
    let w = interpolate_scalar(&temp, |_, _| 1.0);
    let psi = interpolate_vector(&vel, |_, _| [0.0, 1.0]);
    assert!((g.matrix.bilinear(&psi.coeffs, &w.coeffs) + 1.0).abs() < 1e-13);
    assert_eq!(assemble_buoyancy(&vel, &temp, [0.0, -1.0], 0.0).unwrap().matrix.max_abs(), 0.0);

    let (vel, temp, _) = spaces(4);
    let g = assemble_buoyancy(&vel, &temp, [0.3, -0.8], 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let w = random_coefficients(&temp, &mut rng);
        let psi = random_coefficients(&vel, &mut rng);
        let oracle = dense_integral(&vel.mesh, 8, |e, l, geo| {
            let wv = ScalarField::eval(&w, e, l, geo).value;
            let pv = VectorField::eval(&psi, e, l, geo).value;
            2.0 * wv * (0.3 * pv[0] - 0.8 * pv[1])
        });
        let value = g.matrix.bilinear(&psi.coeffs, &w.coeffs);
        assert!((value - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
    }
}

#[test]
fn divergence_of_interpolated_vortex_is_small() {
    let (vel, _, head) = spaces(8);
    let d = assemble_divergence(&vel, &head).unwrap();
    let stream = poiseuille();
    let z = interpolate_vector(&vel, |x, y| stream.at(x, y).value);
    let dz = d.matrix.matvec(&z.coeffs);
    assert!(dz.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn l1_loads_normal_components() {
    let (vel, _, _) = spaces(4);
    let g1 = BoundaryTrace::new(&vel.mesh, BoundaryTag::Gamma1);
    let zero = assemble_l1(&vel, &g1, &vec![[0.0; 2]; g1.len()]).unwrap();
    assert!(zero.iter().all(|v| *v == 0.0));

    // v1 = (1, 0) everywhere on Γ₁: v1·n = −1 on x = 0 and +1 on x = 1
    let load = assemble_l1(&vel, &g1, &vec![[1.0, 0.0]; g1.len()]).unwrap();
    let (x, y) = (Poly2::x(), Poly2::y());
    let p = &(&y * &(&Poly2::constant(1.0) - &y)) * &(&Poly2::constant(1.0) + &x);
    let psi = interpolate_vector(&vel, |a, b| [p.eval(a, b), 0.0]);
    let value: f64 = load.iter().zip(&psi.coeffs).map(|(a, b)| a * b).sum();
    // left: (−1)(ψ·n) = (−1)(−p(0,y)); right: (+1)(p(1,y))
    let oracle = integral_along_x(&p, 0.0) + integral_along_x(&p, 1.0);
    assert!((value - oracle).abs() < 1e-13, "{value} vs {oracle}");

    // v1 = n: tangential data never loads
    let normal: Vec<[f64; 2]> = g1.coords.iter().map(|c| if c[0] < 0.5 { [-1.0, 0.0] } else { [1.0, 0.0] }).collect();
    let l = assemble_l1(&vel, &g1, &normal).unwrap();
    let tang = assemble_l1(&vel, &g1, &vec![[0.0, 1.0]; g1.len()]).unwrap();
    assert!(tang.iter().all(|v| *v == 0.0));
    let psi = interpolate_vector(&vel, |_, b| [b * (1.0 - b), 0.0]);
    let value: f64 = l.iter().zip(&psi.coeffs).map(|(a, b)| a * b).sum();
    // ∫_{Γ₁} ψ·n = −1/6 + 1/6
    assert!(value.abs() < 1e-14);

    let g2 = BoundaryTrace::new(&vel.mesh, BoundaryTag::Gamma2);
    assert!(matches!(assemble_l1(&vel, &g2, &vec![[0.0; 2]; g2.len()]), Err(Error::WrongBoundary(_))));
}

#[test]
fn l2_partition_of_unity_and_oracle() {
    let m = mesh(4);
    let free = Arc::new(FunctionSpace::unconstrained(Arc::clone(&m), SpaceKind::Temperature));
    let g2 = BoundaryTrace::new(&m, BoundaryTag::Gamma2);
    let load = assemble_l2(&free, &g2, &vec![1.0; g2.len()]).unwrap();
    assert!((load.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    assert!(assemble_l2(&free, &g2, &vec![0.0; g2.len()]).unwrap().iter().all(|v| *v == 0.0));

    // random trace data against a high-order edge rule of the traces
    let (_, temp, _) = spaces(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let v2: Vec<f64> = (0..g2.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let phi = random_coefficients(&temp, &mut rng);
    let load = assemble_l2(&temp, &g2, &v2).unwrap();
    let value: f64 = load.iter().zip(&phi.coeffs).map(|(a, b)| a * b).sum();
    let gl = gauss_legendre_01(10);
    let mut oracle = 0.0;
    for edge in &g2.edges {
        for &(s, w) in &gl {
            let t = edge_basis(s);
            let vd: f64 = (0..3).map(|k| t[k] * v2[edge.local[k]]).sum();
            let pd: f64 = (0..3).map(|k| t[k] * phi.raw(edge.lattice[k], 0)).sum();
            oracle += edge.length * w * vd * pd;
        }
    }
    assert!((value - oracle).abs() < 1e-13);
    let g1 = BoundaryTrace::new(&m, BoundaryTag::Gamma1);
    assert!(matches!(assemble_l2(&temp, &g1, &vec![0.0; g1.len()]), Err(Error::WrongBoundary(_))));
    assert!(matches!(assemble_l2(&temp, &g2, &[1.0]), Err(Error::ShapeMismatch(_))));
}

/// Smallest eigenvalue of `A x = λ G x` over `ker D` (or everything).
fn dense_generalized_min(a: &DMatrix<f64>, g: &DMatrix<f64>, d: Option<&DMatrix<f64>>) -> f64 {
    let n = a.nrows();
    let q = match d {
        Some(d) => {
            let eig = SymmetricEigen::new(d.transpose() * d);
            let scale = eig.eigenvalues.amax();
            let cols: Vec<_> =
                (0..n).filter(|&i| eig.eigenvalues[i] < 1e-10 * scale).map(|i| eig.eigenvectors.column(i).into_owned()).collect();
            DMatrix::from_columns(&cols)
        }
        None => DMatrix::identity(n, n),
    };
    let ar = q.transpose() * a * &q;
    let gr = q.transpose() * g * &q;
    let l = gr.cholesky().unwrap().l();
    let li = l.try_inverse().unwrap();
    let c = &li * ar * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    SymmetricEigen::new(c).eigenvalues.min()
}

#[test]
fn coercivity_matches_dense_eigensolve() {
    let (vel, temp, head) = spaces(8);
    let opts = EigenOptions::default();
    let c1p = estimate_coercivity(&temp, CoercivityForm::A2, opts).unwrap();
    let oracle = dense_generalized_min(
        &dense(&assemble_a2(&temp).unwrap().matrix),
        &dense(&assemble_gram_h1(&temp).matrix),
        None,
    );
    assert!(c1p > 0.0);
    assert!((c1p - oracle).abs() < 1e-6 * oracle, "{c1p} vs {oracle}");

    let c1 = estimate_coercivity(&vel, CoercivityForm::A1, opts).unwrap();
    let oracle = dense_generalized_min(
        &dense(&assemble_a1_stabilized(&vel, 1.0).unwrap()),
        &dense(&assemble_gram_h1(&vel).matrix),
        None,
    );
    assert!(c1 > 0.0);
    assert!((c1 - oracle).abs() < 1e-6 * oracle, "{c1} vs {oracle}");

    // pure rot-rot on the weakly div-free subspace has a kernel at this size
    let kernel_min = dense_generalized_min(
        &dense(&assemble_a1(&vel).unwrap().matrix),
        &dense(&assemble_gram_h1(&vel).matrix),
        Some(&dense(&assemble_divergence(&vel, &head).unwrap().matrix)),
    );
    assert!(kernel_min.abs() < 1e-12);

    let one = estimate_coercivity(&temp, CoercivityForm::MassVsMass, opts).unwrap();
    assert!((one - 1.0).abs() < 1e-10);
}

#[test]
fn continuity_estimates_are_finite() {
    let m = mesh(8);
    for form in [TrilinearForm::B, TrilinearForm::C] {
        let c = estimate_continuity(&m, form, 200, 7).unwrap();
        assert!(c.is_finite() && c > 0.0);
    }
}

#[test]
fn constants_report_json_keys() {
    let r = ConstantsReport::estimate(&mesh(4), 10, 1).unwrap();
    assert!(r.all_positive());
    let v: serde_json::Value = serde_json::to_value(r).unwrap();
    for k in ["c1_hat", "c1p_hat", "c2_hat", "c3_hat", "cB_hat"] {
        assert!(v[k].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn dual_norm_of_mass_action_is_bounded_by_l2() {
    // ‖M x‖_{(H¹)*} ≤ ‖x‖_{L²}
    let (vel, _, _) = spaces(4);
    let dual = DualNorm::new(&vel).unwrap();
    let mass = assemble_mass(&vel);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let x = random_coefficients(&vel, &mut rng);
        let n = dual.norm(&mass.matrix.matvec(&x.coeffs));
        assert!(n <= l2_norm(&x) * (1.0 + 1e-12));
        assert!(n > 0.0);
    }
}
