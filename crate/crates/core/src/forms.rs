//! Bilinear and trilinear forms, their assembled operators, boundary loads
//! and numerical estimates of the coercivity and continuity constants.
//!
//! Convection uses the rotational form `b(u, v, w) = ∫ (rot u × v)·w`,
//! which in 2D reads `∫ rot u (v₁ w₂ − v₂ w₁)`. The integrand vanishes
//! pointwise when `v = w`, so `b(u, v, v) = 0` holds at quadrature level.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::quadrature::{edge_quadrature, triangle_quadrature, MAX_TRIANGLE_DEGREE};
use crate::poly::Poly2;
use crate::spaces::{
    random_coefficients, AnalyticDivFreeField,
    edge_basis, h1_norm, ordering_keys, random_smooth_scalar, random_smooth_vector, BasisAt, BoundaryTrace,
    DiscreteField, ElementGeometry, FunctionSpace, ScalarField, ScalarPoint, SpaceKind, VectorField, VectorPoint,
};
use crate::sparse::{dot, BandLu, BandMatrix, BlockLayout, BlockSystem, CsrMatrix};

/// Volume quadrature degree for assembled operators.
pub const FORM_DEGREE: usize = 6;
/// Edge quadrature degree for boundary loads.
pub const EDGE_DEGREE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    MassZ,
    MassW,
    /// Mass plus full gradient stiffness (H¹ inner product).
    GramH1,
    A1,
    /// `∫ div u div ψ`.
    GradDiv,
    A2,
    Buoyancy,
    Divergence,
    /// `v, w -> b(z, v, w)` with `z` frozen.
    BLinearized,
    /// `u, w -> b(u, z, w)` with `z` frozen (derivative in the first slot).
    BFirstSlot,
    /// `w, φ -> c(z, w, φ)` with `z` frozen.
    CLinearized,
    /// `w, φ -> ½ (c(z, w, φ) − c(z, φ, w))` with `z` frozen.
    CSkew,
    /// `z, φ -> ½ (c(z, w, φ) − c(z, φ, w))` with `w` frozen.
    CSkewVelocity,
}

/// Assembled operator over free DOFs; `matrix[i][j]` pairs test DOF `i`
/// with trial DOF `j`.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub kind: OperatorKind,
    pub matrix: CsrMatrix,
    pub frozen_field: Option<DiscreteField>,
}

impl AssembledOperator {
    fn new(kind: OperatorKind, matrix: CsrMatrix) -> Self {
        AssembledOperator { kind, matrix, frozen_field: None }
    }

    /// `yᵀ A x`
    pub fn apply(&self, y: &DiscreteField, x: &DiscreteField) -> f64 {
        self.matrix.bilinear(&y.coeffs, &x.coeffs)
    }
}

fn local_index(node: usize, comp: usize, ncomp: usize) -> usize {
    node * ncomp + comp
}

/// Element loop with quadrature; `kernel` adds the weighted point
/// contribution to the local `test x trial` matrix.
fn assemble<F>(test: &FunctionSpace, trial: &FunctionSpace, degree: usize, mut kernel: F) -> CsrMatrix
where
    F: FnMut(usize, [f64; 3], &ElementGeometry, f64, &BasisAt, &BasisAt, &mut LocalMatrix),
{
    let mesh = &test.mesh;
    let q = triangle_quadrature(degree).expect("supported degree");
    let nt = test.n_local_nodes() * test.n_components();
    let ns = trial.n_local_nodes() * trial.n_components();
    let mut triplets = Vec::with_capacity(mesh.n_elements() * nt * ns);
    let mut local = LocalMatrix { data: vec![0.0; nt * ns], ns, tc: test.n_components(), sc: trial.n_components() };
    for e in 0..mesh.n_elements() {
        let geo = ElementGeometry::new(mesh, e);
        local.data.iter_mut().for_each(|v| *v = 0.0);
        for (l, w) in q.iter() {
            let tb = test.basis(l, &geo);
            let sb = trial.basis(l, &geo);
            kernel(e, l, &geo, w * geo.det, &tb, &sb, &mut local);
        }
        let td = test.local_dofs(e);
        let sd = trial.local_dofs(e);
        for (i, ti) in td.iter().enumerate() {
            let Some(gi) = ti else { continue };
            for (j, sj) in sd.iter().enumerate() {
                let Some(gj) = sj else { continue };
                triplets.push((*gi, *gj, local.data[i * ns + j]));
            }
        }
    }
    CsrMatrix::from_triplets(test.n_dofs(), trial.n_dofs(), triplets)
}

struct LocalMatrix {
    data: Vec<f64>,
    ns: usize,
    tc: usize,
    sc: usize,
}

impl LocalMatrix {
    #[inline]
    fn add(&mut self, a: usize, c: usize, b: usize, d: usize, v: f64) {
        let i = local_index(a, c, self.tc);
        let j = local_index(b, d, self.sc);
        self.data[i * self.ns + j] += v;
    }
}

/// Curl of the basis vector `φ_b e_d`.
#[inline]
fn basis_rot(b: &BasisAt, node: usize, comp: usize) -> f64 {
    if comp == 0 {
        -b.grad[node][1]
    } else {
        b.grad[node][0]
    }
}

pub fn assemble_mass(space: &FunctionSpace) -> AssembledOperator {
    let nc = space.n_components();
    let m = assemble(space, space, FORM_DEGREE, |_, _, _, w, tb, sb, loc| {
        for a in 0..tb.n {
            for b in 0..sb.n {
                let v = w * tb.phi[a] * sb.phi[b];
                for c in 0..nc {
                    loc.add(a, c, b, c, v);
                }
            }
        }
    });
    let kind = if space.kind == SpaceKind::Velocity { OperatorKind::MassZ } else { OperatorKind::MassW };
    AssembledOperator::new(kind, m)
}

/// H¹ Gram matrix (mass + componentwise gradient stiffness).
pub fn assemble_gram_h1(space: &FunctionSpace) -> AssembledOperator {
    let nc = space.n_components();
    let m = assemble(space, space, FORM_DEGREE, |_, _, _, w, tb, sb, loc| {
        for a in 0..tb.n {
            for b in 0..sb.n {
                let g = tb.grad[a][0] * sb.grad[b][0] + tb.grad[a][1] * sb.grad[b][1];
                let v = w * (tb.phi[a] * sb.phi[b] + g);
                for c in 0..nc {
                    loc.add(a, c, b, c, v);
                }
            }
        }
    });
    AssembledOperator::new(OperatorKind::GramH1, m)
}

/// `a₁(u, ψ) = ∫ rot u · rot ψ`.
pub fn assemble_a1(space: &FunctionSpace) -> Result<AssembledOperator> {
    expect_kind(space, SpaceKind::Velocity)?;
    let m = assemble(space, space, FORM_DEGREE, |_, _, _, w, tb, sb, loc| {
        for a in 0..tb.n {
            for c in 0..2 {
                let ra = basis_rot(tb, a, c);
                for b in 0..sb.n {
                    for d in 0..2 {
                        loc.add(a, c, b, d, w * ra * basis_rot(sb, b, d));
                    }
                }
            }
        }
    });
    Ok(AssembledOperator::new(OperatorKind::A1, m))
}

/// `∫ div u · div ψ`. Added to `a₁` it gives the viscous operator of the
/// scheme; the sum agrees with `a₁` on exactly divergence-free fields.
pub fn assemble_grad_div(space: &FunctionSpace) -> Result<AssembledOperator> {
    expect_kind(space, SpaceKind::Velocity)?;
    let m = assemble(space, space, FORM_DEGREE, |_, _, _, w, tb, sb, loc| {
        for a in 0..tb.n {
            for c in 0..2 {
                for b in 0..sb.n {
                    for d in 0..2 {
                        loc.add(a, c, b, d, w * tb.grad[a][c] * sb.grad[b][d]);
                    }
                }
            }
        }
    });
    Ok(AssembledOperator::new(OperatorKind::GradDiv, m))
}

/// Discrete viscous operator `a₁ + γ (div, div)`.
pub fn assemble_a1_stabilized(space: &FunctionSpace, gamma: f64) -> Result<CsrMatrix> {
    let a1 = assemble_a1(space)?;
    let gd = assemble_grad_div(space)?;
    Ok(CsrMatrix::combine(&[(1.0, &a1.matrix), (gamma, &gd.matrix)]))
}

/// `a₂(w, φ) = ∫ ∇w·∇φ`.
pub fn assemble_a2(space: &FunctionSpace) -> Result<AssembledOperator> {
    expect_scalar(space)?;
    let m = assemble(space, space, FORM_DEGREE, |_, _, _, w, tb, sb, loc| {
        for a in 0..tb.n {
            for b in 0..sb.n {
                loc.add(a, 0, b, 0, w * (tb.grad[a][0] * sb.grad[b][0] + tb.grad[a][1] * sb.grad[b][1]));
            }
        }
    });
    Ok(AssembledOperator::new(OperatorKind::A2, m))
}

/// `(D z)_q = ∫ q div z` with rows over the head space.
pub fn assemble_divergence(velocity: &FunctionSpace, head: &FunctionSpace) -> Result<AssembledOperator> {
    expect_kind(velocity, SpaceKind::Velocity)?;
    expect_scalar(head)?;
    let m = assemble(head, velocity, FORM_DEGREE, |_, _, _, w, tb, sb, loc| {
        for a in 0..tb.n {
            for b in 0..sb.n {
                for d in 0..2 {
                    loc.add(a, 0, b, d, w * tb.phi[a] * sb.grad[b][d]);
                }
            }
        }
    });
    Ok(AssembledOperator::new(OperatorKind::Divergence, m))
}

/// `(β g w, ψ)`: rows over velocity, columns over temperature.
pub fn assemble_buoyancy(
    velocity: &FunctionSpace,
    temperature: &FunctionSpace,
    g: [f64; 2],
    beta: f64,
) -> Result<AssembledOperator> {
    expect_kind(velocity, SpaceKind::Velocity)?;
    expect_scalar(temperature)?;
    let m = assemble(velocity, temperature, FORM_DEGREE, |_, _, _, w, tb, sb, loc| {
        for a in 0..tb.n {
            for b in 0..sb.n {
                let v = w * beta * tb.phi[a] * sb.phi[b];
                for c in 0..2 {
                    loc.add(a, c, b, 0, v * g[c]);
                }
            }
        }
    });
    Ok(AssembledOperator::new(OperatorKind::Buoyancy, m))
}

/// Matrix of `v, w -> b(z, v, w)` (row = `w`, column = `v`).
pub fn assemble_b_linearized(z: &DiscreteField) -> Result<AssembledOperator> {
    let space = &z.space;
    expect_kind(space, SpaceKind::Velocity)?;
    let m = assemble(space, space, FORM_DEGREE, |e, l, geo, w, tb, sb, loc| {
        let om = VectorField::eval(z, e, l, geo).rot();
        if om == 0.0 {
            return;
        }
        // ω (v₁ w₂ − v₂ w₁): trial x-comp with test y-comp, and the mirror
        for a in 0..tb.n {
            for b in 0..sb.n {
                let v = w * om * (tb.phi[a] * sb.phi[b]);
                loc.add(a, 1, b, 0, v);
                loc.add(a, 0, b, 1, -v);
            }
        }
    });
    Ok(AssembledOperator { kind: OperatorKind::BLinearized, matrix: m, frozen_field: Some(z.clone()) })
}

/// Matrix of `u, w -> b(u, z, w)` (row = `w`, column = `u`).
pub fn assemble_b_first_slot(z: &DiscreteField) -> Result<AssembledOperator> {
    let space = &z.space;
    expect_kind(space, SpaceKind::Velocity)?;
    let m = assemble(space, space, FORM_DEGREE, |e, l, geo, w, tb, sb, loc| {
        let zv = VectorField::eval(z, e, l, geo).value;
        for a in 0..tb.n {
            // test ψ = φ_a e_c contributes (z₁ ψ₂ − z₂ ψ₁)
            let cross = [-zv[1] * tb.phi[a], zv[0] * tb.phi[a]];
            for b in 0..sb.n {
                for d in 0..2 {
                    let r = basis_rot(sb, b, d);
                    loc.add(a, 0, b, d, w * r * cross[0]);
                    loc.add(a, 1, b, d, w * r * cross[1]);
                }
            }
        }
    });
    Ok(AssembledOperator { kind: OperatorKind::BFirstSlot, matrix: m, frozen_field: Some(z.clone()) })
}

/// Matrix of `w, φ -> c(z, w, φ)` on `temperature` (row = `φ`).
pub fn assemble_c_linearized(z: &DiscreteField, temperature: &FunctionSpace) -> Result<AssembledOperator> {
    expect_kind(&z.space, SpaceKind::Velocity)?;
    expect_scalar(temperature)?;
    let m = assemble(temperature, temperature, FORM_DEGREE, |e, l, geo, w, tb, sb, loc| {
        let zv = VectorField::eval(z, e, l, geo).value;
        for a in 0..tb.n {
            for b in 0..sb.n {
                let adv = zv[0] * sb.grad[b][0] + zv[1] * sb.grad[b][1];
                loc.add(a, 0, b, 0, w * adv * tb.phi[a]);
            }
        }
    });
    Ok(AssembledOperator { kind: OperatorKind::CLinearized, matrix: m, frozen_field: Some(z.clone()) })
}

/// Skew part `½ (C − Cᵀ)` of [`assemble_c_linearized`], assembled directly.
pub fn assemble_c_skew(z: &DiscreteField, temperature: &FunctionSpace) -> Result<AssembledOperator> {
    expect_kind(&z.space, SpaceKind::Velocity)?;
    expect_scalar(temperature)?;
    let m = assemble(temperature, temperature, FORM_DEGREE, |e, l, geo, w, tb, sb, loc| {
        let zv = VectorField::eval(z, e, l, geo).value;
        for a in 0..tb.n {
            let adv_a = zv[0] * tb.grad[a][0] + zv[1] * tb.grad[a][1];
            for b in 0..sb.n {
                let adv_b = zv[0] * sb.grad[b][0] + zv[1] * sb.grad[b][1];
                loc.add(a, 0, b, 0, 0.5 * w * (adv_b * tb.phi[a] - adv_a * sb.phi[b]));
            }
        }
    });
    Ok(AssembledOperator { kind: OperatorKind::CSkew, matrix: m, frozen_field: Some(z.clone()) })
}

/// Matrix of `z, φ -> ½ (c(z, w, φ) − c(z, φ, w))` with `w` frozen
/// (rows over temperature, columns over velocity).
pub fn assemble_c_skew_velocity(w_field: &DiscreteField, velocity: &FunctionSpace) -> Result<AssembledOperator> {
    expect_scalar(&w_field.space)?;
    expect_kind(velocity, SpaceKind::Velocity)?;
    let m = assemble(&w_field.space, velocity, FORM_DEGREE, |e, l, geo, w, tb, sb, loc| {
        let wp = ScalarField::eval(w_field, e, l, geo);
        for a in 0..tb.n {
            for d in 0..2 {
                let k = 0.5 * (wp.grad[d] * tb.phi[a] - tb.grad[a][d] * wp.value);
                for b in 0..sb.n {
                    loc.add(a, 0, b, d, w * k * sb.phi[b]);
                }
            }
        }
    });
    Ok(AssembledOperator { kind: OperatorKind::CSkewVelocity, matrix: m, frozen_field: Some(w_field.clone()) })
}

fn expect_kind(space: &FunctionSpace, kind: SpaceKind) -> Result<()> {
    if space.kind == kind {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!("expected {kind:?} space, got {:?}", space.kind)))
    }
}

fn expect_scalar(space: &FunctionSpace) -> Result<()> {
    if space.n_components() == 1 {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!("expected a scalar space, got {:?}", space.kind)))
    }
}

fn same_mesh(a: &Mesh, b: &Mesh) -> bool {
    a.nx == b.nx && a.ny == b.ny && a.tagging == b.tagging
}

fn check_meshes(mesh: &Mesh, others: &[Option<&Mesh>]) -> Result<()> {
    if others.iter().flatten().all(|m| same_mesh(mesh, m)) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch("fields live on different meshes".into()))
    }
}

fn integration_degree(d: usize) -> usize {
    d.clamp(1, MAX_TRIANGLE_DEGREE)
}

fn integrate(mesh: &Mesh, degree: usize, mut f: impl FnMut(usize, [f64; 3], &ElementGeometry) -> f64) -> f64 {
    let q = triangle_quadrature(integration_degree(degree)).expect("supported degree");
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let geo = ElementGeometry::new(mesh, e);
        let mut s = 0.0;
        for (l, w) in q.iter() {
            s += w * f(e, l, &geo);
        }
        total += s * geo.det;
    }
    total
}

/// Pointwise integrand of `b`: `rot u (v₁ w₂ − v₂ w₁)`.
#[inline]
pub fn b_integrand(u: &VectorPoint, v: &VectorPoint, w: &VectorPoint) -> f64 {
    u.rot() * (v.value[0] * w.value[1] - v.value[1] * w.value[0])
}

/// `b(u, v, w) = ∫ (rot u × v)·w` by quadrature exact for the given fields.
pub fn eval_b(mesh: &Mesh, u: &dyn VectorField, v: &dyn VectorField, w: &dyn VectorField) -> Result<f64> {
    check_meshes(mesh, &[u.mesh(), v.mesh(), w.mesh()])?;
    let degree = u.degree().saturating_sub(1) + v.degree() + w.degree();
    Ok(integrate(mesh, degree, |e, l, g| b_integrand(&u.eval(e, l, g), &v.eval(e, l, g), &w.eval(e, l, g))))
}

/// `c(z, w, φ) = ∫ (z·∇w) φ`.
pub fn eval_c(mesh: &Mesh, z: &dyn VectorField, w: &dyn ScalarField, phi: &dyn ScalarField) -> Result<f64> {
    check_meshes(mesh, &[z.mesh(), w.mesh(), phi.mesh()])?;
    let degree = z.degree() + w.degree().saturating_sub(1) + phi.degree();
    Ok(integrate(mesh, degree, |e, l, g| {
        let zp = z.eval(e, l, g);
        let wp: ScalarPoint = w.eval(e, l, g);
        (zp.value[0] * wp.grad[0] + zp.value[1] * wp.grad[1]) * phi.eval(e, l, g).value
    }))
}

/// H¹ norm of any vector field, integrated exactly for polynomial data.
pub fn vector_h1_norm(mesh: &Mesh, f: &dyn VectorField) -> f64 {
    integrate(mesh, 2 * f.degree(), |e, l, g| {
        let p = f.eval(e, l, g);
        p.value.iter().map(|v| v * v).sum::<f64>() + p.grad.iter().flatten().map(|v| v * v).sum::<f64>()
    })
    .sqrt()
}

pub fn scalar_h1_norm(mesh: &Mesh, f: &dyn ScalarField) -> f64 {
    integrate(mesh, 2 * f.degree(), |e, l, g| {
        let p = f.eval(e, l, g);
        p.value * p.value + p.grad[0] * p.grad[0] + p.grad[1] * p.grad[1]
    })
    .sqrt()
}

fn expect_trace(trace: &BoundaryTrace, tag: BoundaryTag, len: usize) -> Result<()> {
    if trace.tag != tag {
        return Err(Error::WrongBoundary(format!("expected {tag} data, got a {} trace", trace.tag)));
    }
    if trace.len() != len {
        return Err(Error::ShapeMismatch(format!("{len} values for a trace with {} nodes", trace.len())));
    }
    Ok(())
}

/// `∫_e θ_k θ_l ds` for the quadratic trace basis on an edge of unit length.
fn edge_mass_unit() -> [[f64; 3]; 3] {
    let q = edge_quadrature(EDGE_DEGREE).expect("supported degree");
    let mut m = [[0.0; 3]; 3];
    for (s, w) in q.iter() {
        let t = edge_basis(s);
        for k in 0..3 {
            for l in 0..3 {
                m[k][l] += w * t[k] * t[l];
            }
        }
    }
    m
}

/// Boundary operator `E₁` with `(E₁ v)_ψ = ∫_{Γ₁} (v·n)(ψ·n) ds` for trace
/// data `v` stored as `[node][component]` (column `2 k + d`).
pub fn assemble_l1_operator(velocity: &FunctionSpace, trace: &BoundaryTrace) -> Result<CsrMatrix> {
    expect_kind(velocity, SpaceKind::Velocity)?;
    if trace.tag != BoundaryTag::Gamma1 {
        return Err(Error::WrongBoundary(format!("L1 needs the Gamma1 trace, got {}", trace.tag)));
    }
    let mu = edge_mass_unit();
    let mut t = Vec::new();
    for edge in &trace.edges {
        let n = edge.side.outward_normal();
        for (l, &node) in edge.lattice.iter().enumerate() {
            for c in 0..2 {
                let Some(row) = velocity.free_index(node, c) else { continue };
                for (k, &tk) in edge.local.iter().enumerate() {
                    for d in 0..2 {
                        let v = edge.length * mu[k][l] * n[c] * n[d];
                        if v != 0.0 {
                            t.push((row, 2 * tk + d, v));
                        }
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(velocity.n_dofs(), 2 * trace.len(), t))
}

/// Boundary operator `E₂` with `(E₂ v)_φ = ∫_{Γ₂} v φ ds`.
pub fn assemble_l2_operator(temperature: &FunctionSpace, trace: &BoundaryTrace) -> Result<CsrMatrix> {
    expect_scalar(temperature)?;
    if trace.tag != BoundaryTag::Gamma2 {
        return Err(Error::WrongBoundary(format!("L2 needs the Gamma2 trace, got {}", trace.tag)));
    }
    let mu = edge_mass_unit();
    let mut t = Vec::new();
    for edge in &trace.edges {
        for (l, &node) in edge.lattice.iter().enumerate() {
            let Some(row) = temperature.free_index(node, 0) else { continue };
            for (k, &tk) in edge.local.iter().enumerate() {
                t.push((row, tk, edge.length * mu[k][l]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(temperature.n_dofs(), trace.len(), t))
}

/// Mass matrix of the quadratic trace space on one boundary part.
pub fn assemble_trace_mass(trace: &BoundaryTrace) -> CsrMatrix {
    let mu = edge_mass_unit();
    let mut t = Vec::new();
    for edge in &trace.edges {
        for (k, &tk) in edge.local.iter().enumerate() {
            for (l, &tl) in edge.local.iter().enumerate() {
                t.push((tk, tl, edge.length * mu[k][l]));
            }
        }
    }
    CsrMatrix::from_triplets(trace.len(), trace.len(), t)
}

/// Load `L₁(ψ) = ∫_{Γ₁} (v₁·n)(ψ·n) ds` from nodal trace data.
pub fn assemble_l1(velocity: &FunctionSpace, trace: &BoundaryTrace, v1: &[[f64; 2]]) -> Result<Vec<f64>> {
    expect_trace(trace, BoundaryTag::Gamma1, v1.len())?;
    let e1 = assemble_l1_operator(velocity, trace)?;
    let flat: Vec<f64> = v1.iter().flatten().copied().collect();
    Ok(e1.matvec(&flat))
}

/// Load `L₂(φ) = ∫_{Γ₂} v₂ φ ds` from nodal trace data.
pub fn assemble_l2(temperature: &FunctionSpace, trace: &BoundaryTrace, v2: &[f64]) -> Result<Vec<f64>> {
    expect_trace(trace, BoundaryTag::Gamma2, v2.len())?;
    Ok(assemble_l2_operator(temperature, trace)?.matvec(v2))
}

/// Options for the generalized eigenvalue iteration.
#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-8, max_iter: 20_000, seed: 0 }
    }
}

/// Smallest eigenvalue of `A x = λ G x` by inverse iteration with the
/// Rayleigh quotient; `keys` orders the unknowns for the band solver.
pub fn smallest_generalized_eigenvalue(a: &CsrMatrix, g: &CsrMatrix, keys: &[u64], opts: EigenOptions) -> Result<f64> {
    let layout = BlockLayout::new(&[keys.to_vec()]);
    let lu = BlockSystem::new(&layout).with(0, 0, a).factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..a.nrows).map(|_| 1.0 + rand::Rng::gen_range(&mut rng, -0.5..0.5)).collect();
    let mut lambda_prev = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let gx = g.matvec(&x);
        let y = layout.unpack(&lu.solve(&layout.pack(&[&gx]))).swap_remove(0);
        let gy = g.matvec(&y);
        let ynorm2 = dot(&y, &gy);
        let lambda = a.bilinear(&y, &y) / ynorm2;
        let s = 1.0 / ynorm2.sqrt();
        x = y.iter().map(|v| v * s).collect();
        if (lambda - lambda_prev).abs() <= opts.tol * lambda.abs() {
            return Ok(lambda);
        }
        lambda_prev = lambda;
    }
    Err(Error::EigenNotConverged(opts.max_iter))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoercivityForm {
    /// The discrete viscous form `a₁ + (div, div)` over the velocity space.
    A1,
    /// `a₂` over the temperature space.
    A2,
    /// The L² mass matrix (identity pencil check against itself).
    MassVsMass,
}

/// Estimated coercivity constant `inf a(x,x)/‖x‖²_{H¹}` of `form` on `space`.
pub fn estimate_coercivity(space: &Arc<FunctionSpace>, form: CoercivityForm, opts: EigenOptions) -> Result<f64> {
    let keys = ordering_keys(space, 0);
    match form {
        CoercivityForm::A1 => {
            let a = assemble_a1_stabilized(space, 1.0)?;
            let g = assemble_gram_h1(space);
            smallest_generalized_eigenvalue(&a, &g.matrix, &keys, opts)
        }
        CoercivityForm::A2 => {
            let a = assemble_a2(space)?;
            let g = assemble_gram_h1(space);
            smallest_generalized_eigenvalue(&a.matrix, &g.matrix, &keys, opts)
        }
        CoercivityForm::MassVsMass => {
            let m = assemble_mass(space);
            smallest_generalized_eigenvalue(&m.matrix, &m.matrix, &keys, opts)
        }
    }
}

/// Factored H¹ Gram matrix for dual norms `‖r‖_* = (rᵀ G⁻¹ r)^{1/2}`.
pub struct DualNorm {
    lu: BandLu,
    perm: BlockLayout,
}

impl DualNorm {
    pub fn new(space: &FunctionSpace) -> Result<Self> {
        let g = assemble_gram_h1(space);
        let perm = BlockLayout::new(&[ordering_keys(space, 0)]);
        let entries: Vec<_> = g.matrix.triplets().map(|(r, c, v)| (perm.position(0, r), perm.position(0, c), v)).collect();
        let lu = BandMatrix::from_entries(space.n_dofs(), &entries).factor()?;
        Ok(DualNorm { lu, perm })
    }

    pub fn norm(&self, r: &[f64]) -> f64 {
        let x = self.perm.unpack(&self.lu.solve(&self.perm.pack(&[r]))).swap_remove(0);
        dot(r, &x).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrilinearForm {
    B,
    C,
}

/// Largest sampled `|form(x, y, z)| / (‖x‖‖y‖‖z‖)` over smooth random fields.
pub fn estimate_continuity(mesh: &Arc<Mesh>, form: TrilinearForm, n_samples: usize, seed: u64) -> Result<f64> {
    let vel = Arc::new(FunctionSpace::new(Arc::clone(mesh), SpaceKind::Velocity));
    let temp = Arc::new(FunctionSpace::new(Arc::clone(mesh), SpaceKind::Temperature));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..n_samples {
        let ratio = match form {
            TrilinearForm::B => {
                let (u, v, w) =
                    (random_smooth_vector(&vel, &mut rng), random_smooth_vector(&vel, &mut rng), random_smooth_vector(&vel, &mut rng));
                let den = h1_norm(&u) * h1_norm(&v) * h1_norm(&w);
                eval_b(mesh, &u, &v, &w)?.abs() / den
            }
            TrilinearForm::C => {
                let z = random_smooth_vector(&vel, &mut rng);
                let (w, p) = (random_smooth_scalar(&temp, &mut rng), random_smooth_scalar(&temp, &mut rng));
                let den = h1_norm(&z) * h1_norm(&w) * h1_norm(&p);
                eval_c(mesh, &z, &w, &p)?.abs() / den
            }
        };
        if ratio.is_finite() {
            best = best.max(ratio);
        }
    }
    Ok(best)
}

/// Largest sampled `‖B(z)‖_{V*} / ‖z‖²` with `⟨B(z), ψ⟩ = b(z, z, ψ)`.
pub fn estimate_b_operator_bound(mesh: &Arc<Mesh>, n_samples: usize, seed: u64) -> Result<f64> {
    let vel = Arc::new(FunctionSpace::new(Arc::clone(mesh), SpaceKind::Velocity));
    let dual = DualNorm::new(&vel)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..n_samples {
        let z = random_smooth_vector(&vel, &mut rng);
        let bz = assemble_b_linearized(&z)?.matrix.matvec(&z.coeffs);
        let nz = h1_norm(&z);
        best = best.max(dual.norm(&bz) / (nz * nz));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub c1_hat: f64,
    pub c1p_hat: f64,
    pub c2_hat: f64,
    pub c3_hat: f64,
    #[serde(rename = "cB_hat")]
    pub cb_hat: f64,
}

impl ConstantsReport {
    pub fn estimate(mesh: &Arc<Mesh>, n_samples: usize, seed: u64) -> Result<Self> {
        let vel = Arc::new(FunctionSpace::new(Arc::clone(mesh), SpaceKind::Velocity));
        let temp = Arc::new(FunctionSpace::new(Arc::clone(mesh), SpaceKind::Temperature));
        let opts = EigenOptions { seed, ..Default::default() };
        Ok(ConstantsReport {
            c1_hat: estimate_coercivity(&vel, CoercivityForm::A1, opts)?,
            c1p_hat: estimate_coercivity(&temp, CoercivityForm::A2, opts)?,
            c2_hat: estimate_continuity(mesh, TrilinearForm::B, n_samples, seed)?,
            c3_hat: estimate_continuity(mesh, TrilinearForm::C, n_samples, seed.wrapping_add(1))?,
            cb_hat: estimate_b_operator_bound(mesh, n_samples, seed.wrapping_add(2))?,
        })
    }

    pub fn all_positive(&self) -> bool {
        [self.c1_hat, self.c1p_hat, self.c2_hat, self.c3_hat, self.cb_hat].iter().all(|v| *v > 0.0 && v.is_finite())
    }
}

/// Worst relative defects of the skew identities of `b` and `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub n_samples: usize,
    /// `max |b(u,v,v)| / (‖u‖‖v‖²)` over random discrete fields.
    pub b_vv: f64,
    /// `max |b(u,v,w) + b(u,w,v)| / (‖u‖‖v‖‖w‖)`.
    pub b_antisymmetry: f64,
    /// `max |c(z,w,w)| / (‖z‖‖w‖²)` for analytic divergence-free `z` vanishing on ∂Ω.
    pub c_ww: f64,
    /// `max |c(z,w,φ) + c(z,φ,w)| / (‖z‖‖w‖‖φ‖)`, same `z`.
    pub c_antisymmetry: f64,
}

impl IdentityReport {
    pub fn passes(&self, tol_b: f64, tol_c: f64) -> bool {
        self.b_vv <= tol_b && self.b_antisymmetry <= tol_b && self.c_ww <= tol_c && self.c_antisymmetry <= tol_c
    }
}

/// Samples the identities `b(u,v,v) = 0`, `b(u,v,w) = −b(u,w,v)` on random
/// coefficient vectors and `c(z,w,w) = 0`, `c(z,w,φ) = −c(z,φ,w)` with
/// `z = rot ψ`, `ψ = (x(1−x)y(1−y))² p`, `p` a random cubic.
pub fn check_form_identities(mesh: &Arc<Mesh>, n_samples: usize, seed: u64) -> Result<IdentityReport> {
    use rand::Rng;
    let vel = Arc::new(FunctionSpace::new(Arc::clone(mesh), SpaceKind::Velocity));
    let temp = Arc::new(FunctionSpace::new(Arc::clone(mesh), SpaceKind::Temperature));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bubble = AnalyticDivFreeField::clamped_vortex().stream;
    let mut r = IdentityReport { n_samples, b_vv: 0.0, b_antisymmetry: 0.0, c_ww: 0.0, c_antisymmetry: 0.0 };
    for _ in 0..n_samples {
        let u = random_coefficients(&vel, &mut rng);
        let v = random_coefficients(&vel, &mut rng);
        let w = random_coefficients(&vel, &mut rng);
        let (nu, nv, nw) = (h1_norm(&u), h1_norm(&v), h1_norm(&w));
        r.b_vv = r.b_vv.max(eval_b(mesh, &u, &v, &v)?.abs() / (nu * nv * nv));
        let anti = eval_b(mesh, &u, &v, &w)? + eval_b(mesh, &u, &w, &v)?;
        r.b_antisymmetry = r.b_antisymmetry.max(anti.abs() / (nu * nv * nw));

        let p = Poly2::from_terms((0..4u32).flat_map(|i| (0..4 - i).map(move |j| (i, j))).map(|e| (e, rng.gen_range(-1.0..1.0))));
        let z = AnalyticDivFreeField::new(&bubble * &p);
        let (t, phi) = (random_coefficients(&temp, &mut rng), random_coefficients(&temp, &mut rng));
        let (nz, nt, np) = (vector_h1_norm(mesh, &z), h1_norm(&t), h1_norm(&phi));
        r.c_ww = r.c_ww.max(eval_c(mesh, &z, &t, &t)?.abs() / (nz * nt * nt));
        let anti = eval_c(mesh, &z, &t, &phi)? + eval_c(mesh, &z, &phi, &t)?;
        r.c_antisymmetry = r.c_antisymmetry.max(anti.abs() / (nz * nt * np));
    }
    Ok(r)
}
