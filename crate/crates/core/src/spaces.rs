//! Constrained Lagrange spaces on the structured mesh.
//!
//! Velocity and temperature use continuous piecewise quadratics whose nodes
//! sit on the refined `(2 nx + 1) x (2 ny + 1)` lattice; the total-head
//! multiplier uses piecewise linears on the mesh vertices. Coefficient
//! vectors only store free DOFs, so constrained values are exactly zero.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh, Side};
use crate::poly::{Poly2, Powers};
use crate::quadrature::triangle_quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    Velocity,
    Temperature,
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Every component (or the scalar value) is fixed to zero.
    Full,
    /// Only the component tangential to this Γ₁ side is fixed.
    Tangential(Side),
}

#[derive(Debug, Clone)]
pub struct FunctionSpace {
    pub kind: SpaceKind,
    pub mesh: Arc<Mesh>,
    /// Node coordinates (lattice nodes for P2, mesh vertices for P1).
    pub node_coords: Vec<[f64; 2]>,
    /// Position of each node on the shared quadratic lattice.
    pub node_lattice: Vec<usize>,
    /// Element-to-node map; only the first three entries are used for P1.
    pub element_nodes: Vec<[usize; 6]>,
    /// Raw DOF `node * n_components + component` to free index.
    raw_to_free: Vec<Option<usize>>,
    free_to_raw: Vec<usize>,
    /// Constrained raw DOFs with the reason they are constrained.
    pub constrained_dofs: Vec<(usize, Constraint)>,
}

/// Width of the quadratic node lattice.
pub fn lattice_width(mesh: &Mesh) -> usize {
    2 * mesh.nx + 1
}

/// Lattice indices of the quadratic nodes of element `e` in local order
/// (three vertices, then midpoints of edges 01, 12, 20).
pub fn p2_element_lattice(mesh: &Mesh, e: usize) -> [usize; 6] {
    let lw = lattice_width(mesh);
    let vw = mesh.nx + 1;
    let lat = |v: usize| {
        let (i, j) = (v % vw, v / vw);
        (2 * i, 2 * j)
    };
    let [a, b, c] = mesh.elements[e];
    let (pa, pb, pc) = (lat(a), lat(b), lat(c));
    let mid = |p: (usize, usize), q: (usize, usize)| ((p.0 + q.0) / 2, (p.1 + q.1) / 2);
    let idx = |p: (usize, usize)| p.1 * lw + p.0;
    [idx(pa), idx(pb), idx(pc), idx(mid(pa, pb)), idx(mid(pb, pc)), idx(mid(pc, pa))]
}

/// Lattice indices (start, midpoint, end) of a boundary edge.
pub fn edge_lattice(mesh: &Mesh, nodes: [usize; 2]) -> [usize; 3] {
    let lw = lattice_width(mesh);
    let vw = mesh.nx + 1;
    let lat = |v: usize| (2 * (v % vw), 2 * (v / vw));
    let (p, q) = (lat(nodes[0]), lat(nodes[1]));
    let m = ((p.0 + q.0) / 2, (p.1 + q.1) / 2);
    [p.1 * lw + p.0, m.1 * lw + m.0, q.1 * lw + q.0]
}

pub fn vertex_lattice(mesh: &Mesh, v: usize) -> usize {
    let vw = mesh.nx + 1;
    2 * (v / vw) * lattice_width(mesh) + 2 * (v % vw)
}

fn lattice_coords(mesh: &Mesh) -> Vec<[f64; 2]> {
    let (lw, lh) = (2 * mesh.nx + 1, 2 * mesh.ny + 1);
    let mut out = Vec::with_capacity(lw * lh);
    for j in 0..lh {
        for i in 0..lw {
            out.push([i as f64 / (2 * mesh.nx) as f64, j as f64 / (2 * mesh.ny) as f64]);
        }
    }
    out
}

impl FunctionSpace {
    /// Builds the space with the essential conditions of the state system.
    pub fn new(mesh: Arc<Mesh>, kind: SpaceKind) -> Self {
        Self::build(mesh, kind, true)
    }

    /// Same element and DOF layout with no boundary constraints.
    pub fn unconstrained(mesh: Arc<Mesh>, kind: SpaceKind) -> Self {
        Self::build(mesh, kind, false)
    }

    fn build(mesh: Arc<Mesh>, kind: SpaceKind, constrained: bool) -> Self {
        let n_el = mesh.n_elements();
        let (node_coords, node_lattice, element_nodes): (Vec<[f64; 2]>, Vec<usize>, Vec<[usize; 6]>) = match kind {
            SpaceKind::Velocity | SpaceKind::Temperature => {
                let coords = lattice_coords(&mesh);
                let lattice = (0..coords.len()).collect();
                let en = (0..n_el).map(|e| p2_element_lattice(&mesh, e)).collect();
                (coords, lattice, en)
            }
            SpaceKind::Head => {
                let lattice = (0..mesh.n_nodes()).map(|v| vertex_lattice(&mesh, v)).collect();
                let en = mesh.elements.iter().map(|t| [t[0], t[1], t[2], 0, 0, 0]).collect();
                (mesh.nodes.clone(), lattice, en)
            }
        };
        let ncomp = if kind == SpaceKind::Velocity { 2 } else { 1 };
        let n_raw = node_coords.len() * ncomp;
        let mut reason: Vec<Option<Constraint>> = vec![None; n_raw];
        if constrained {
            match kind {
                SpaceKind::Velocity => {
                    // Γ₁ first so that Γ₂ (full) overrides shared corners.
                    for edge in mesh.edges_with_tag(BoundaryTag::Gamma1) {
                        let c = edge.side.tangential_component();
                        for n in edge_lattice(&mesh, edge.nodes) {
                            let slot = &mut reason[2 * n + c];
                            if slot.is_none() {
                                *slot = Some(Constraint::Tangential(edge.side));
                            }
                        }
                    }
                    for edge in mesh.edges_with_tag(BoundaryTag::Gamma2) {
                        for n in edge_lattice(&mesh, edge.nodes) {
                            reason[2 * n] = Some(Constraint::Full);
                            reason[2 * n + 1] = Some(Constraint::Full);
                        }
                    }
                }
                SpaceKind::Temperature => {
                    for edge in mesh.edges_with_tag(BoundaryTag::Gamma1) {
                        for n in edge_lattice(&mesh, edge.nodes) {
                            reason[n] = Some(Constraint::Full);
                        }
                    }
                }
                SpaceKind::Head => {
                    // Without Γ₁ the head is only determined up to a constant.
                    if !mesh.tagging.has(BoundaryTag::Gamma1) {
                        reason[0] = Some(Constraint::Full);
                    }
                }
            }
        }
        let mut raw_to_free = vec![None; n_raw];
        let mut free_to_raw = Vec::new();
        let mut constrained_dofs = Vec::new();
        for (r, why) in reason.iter().enumerate() {
            match why {
                None => {
                    raw_to_free[r] = Some(free_to_raw.len());
                    free_to_raw.push(r);
                }
                Some(c) => constrained_dofs.push((r, *c)),
            }
        }
        FunctionSpace { kind, mesh, node_coords, node_lattice, element_nodes, raw_to_free, free_to_raw, constrained_dofs }
    }

    pub fn n_components(&self) -> usize {
        if self.kind == SpaceKind::Velocity {
            2
        } else {
            1
        }
    }

    pub fn is_quadratic(&self) -> bool {
        self.kind != SpaceKind::Head
    }

    pub fn n_local_nodes(&self) -> usize {
        if self.is_quadratic() {
            6
        } else {
            3
        }
    }

    /// Number of free (unconstrained) DOFs.
    pub fn n_dofs(&self) -> usize {
        self.free_to_raw.len()
    }

    pub fn n_raw(&self) -> usize {
        self.raw_to_free.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn free_index(&self, node: usize, comp: usize) -> Option<usize> {
        self.raw_to_free[node * self.n_components() + comp]
    }

    /// `(node, component)` of a free DOF.
    pub fn dof_location(&self, free: usize) -> (usize, usize) {
        let r = self.free_to_raw[free];
        (r / self.n_components(), r % self.n_components())
    }

    pub fn is_constrained(&self, node: usize, comp: usize) -> bool {
        self.free_index(node, comp).is_none()
    }

    pub fn local_nodes(&self, e: usize) -> &[usize] {
        &self.element_nodes[e][..self.n_local_nodes()]
    }

    /// Free indices of the element DOFs ordered `(local node, component)`.
    pub fn local_dofs(&self, e: usize) -> Vec<Option<usize>> {
        let nc = self.n_components();
        self.local_nodes(e).iter().flat_map(|&n| (0..nc).map(move |c| (n, c))).map(|(n, c)| self.free_index(n, c)).collect()
    }

    pub fn same_layout(&self, other: &FunctionSpace) -> bool {
        self.kind == other.kind
            && self.mesh.nx == other.mesh.nx
            && self.mesh.ny == other.mesh.ny
            && self.mesh.tagging == other.mesh.tagging
            && self.raw_to_free == other.raw_to_free
    }

    pub fn zero(self: &Arc<Self>) -> DiscreteField {
        DiscreteField { space: Arc::clone(self), coeffs: vec![0.0; self.n_dofs()] }
    }
}

/// Per-element affine geometry.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub vertices: [[f64; 2]; 3],
    pub grad_lambda: [[f64; 2]; 3],
    /// Twice the area.
    pub det: f64,
}

impl ElementGeometry {
    pub fn new(mesh: &Mesh, e: usize) -> Self {
        let v = mesh.vertices(e);
        let det = mesh.jacobian_det(e);
        let gl = [
            [(v[1][1] - v[2][1]) / det, (v[2][0] - v[1][0]) / det],
            [(v[2][1] - v[0][1]) / det, (v[0][0] - v[2][0]) / det],
            [(v[0][1] - v[1][1]) / det, (v[1][0] - v[0][0]) / det],
        ];
        ElementGeometry { vertices: v, grad_lambda: gl, det }
    }

    pub fn point(&self, l: [f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }
}

/// Basis values and physical gradients at one point of an element.
#[derive(Debug, Clone, Copy)]
pub struct BasisAt {
    pub n: usize,
    pub phi: [f64; 6],
    pub grad: [[f64; 2]; 6],
}

pub fn p2_basis(l: [f64; 3], g: &[[f64; 2]; 3]) -> BasisAt {
    let mut phi = [0.0; 6];
    let mut grad = [[0.0; 2]; 6];
    for i in 0..3 {
        phi[i] = l[i] * (2.0 * l[i] - 1.0);
        let s = 4.0 * l[i] - 1.0;
        grad[i] = [s * g[i][0], s * g[i][1]];
    }
    for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
        phi[3 + k] = 4.0 * l[i] * l[j];
        grad[3 + k] = [4.0 * (l[j] * g[i][0] + l[i] * g[j][0]), 4.0 * (l[j] * g[i][1] + l[i] * g[j][1])];
    }
    BasisAt { n: 6, phi, grad }
}

pub fn p1_basis(l: [f64; 3], g: &[[f64; 2]; 3]) -> BasisAt {
    let mut phi = [0.0; 6];
    let mut grad = [[0.0; 2]; 6];
    phi[..3].copy_from_slice(&l);
    grad[..3].copy_from_slice(g);
    BasisAt { n: 3, phi, grad }
}

impl FunctionSpace {
    pub fn basis(&self, l: [f64; 3], geo: &ElementGeometry) -> BasisAt {
        if self.is_quadratic() {
            p2_basis(l, &geo.grad_lambda)
        } else {
            p1_basis(l, &geo.grad_lambda)
        }
    }
}

/// Value and gradient of a vector field at a point; `grad[c][d] = ∂z_c/∂x_d`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VectorPoint {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
}

impl VectorPoint {
    /// Scalar curl ∂z₂/∂x − ∂z₁/∂y.
    pub fn rot(&self) -> f64 {
        self.grad[1][0] - self.grad[0][1]
    }

    pub fn div(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScalarPoint {
    pub value: f64,
    pub grad: [f64; 2],
}

/// Anything that can be sampled inside an element of a given mesh.
pub trait VectorField {
    fn eval(&self, e: usize, l: [f64; 3], geo: &ElementGeometry) -> VectorPoint;
    /// Polynomial degree per element (drives the quadrature degree).
    fn degree(&self) -> usize;
    /// The mesh this field is tied to, if any.
    fn mesh(&self) -> Option<&Mesh> {
        None
    }
}

pub trait ScalarField {
    fn eval(&self, e: usize, l: [f64; 3], geo: &ElementGeometry) -> ScalarPoint;
    fn degree(&self) -> usize;
    fn mesh(&self) -> Option<&Mesh> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub space: Arc<FunctionSpace>,
    pub coeffs: Vec<f64>,
}

impl DiscreteField {
    pub fn new(space: Arc<FunctionSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for a space with {} free DOFs",
                coeffs.len(),
                space.n_dofs()
            )));
        }
        Ok(DiscreteField { space, coeffs })
    }

    pub fn kind(&self) -> SpaceKind {
        self.space.kind
    }

    /// Coefficient of `(node, comp)`, zero if constrained.
    pub fn raw(&self, node: usize, comp: usize) -> f64 {
        self.space.free_index(node, comp).map_or(0.0, |i| self.coeffs[i])
    }

    /// Full coefficient vector including constrained (zero) entries.
    pub fn raw_coeffs(&self) -> Vec<f64> {
        (0..self.space.n_raw())
            .map(|r| {
                let nc = self.space.n_components();
                self.raw(r / nc, r % nc)
            })
            .collect()
    }

    /// Values at the nodes of the space: `[x, y, value...]`.
    pub fn nodal_values(&self) -> Vec<Vec<f64>> {
        let nc = self.space.n_components();
        (0..self.space.n_nodes()).map(|n| (0..nc).map(|c| self.raw(n, c)).collect()).collect()
    }

    fn check_space(&self, other: &DiscreteField) -> Result<()> {
        if Arc::ptr_eq(&self.space, &other.space) || self.space.same_layout(&other.space) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(format!("{:?} vs {:?}", self.kind(), other.kind())))
        }
    }

    pub fn axpy(&mut self, a: f64, x: &DiscreteField) -> Result<()> {
        self.check_space(x)?;
        for (s, v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn sub(&self, other: &DiscreteField) -> Result<DiscreteField> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    fn eval_components(&self, e: usize, l: [f64; 3], geo: &ElementGeometry) -> ([f64; 2], [[f64; 2]; 2]) {
        let b = self.space.basis(l, geo);
        let nc = self.space.n_components();
        let mut value = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for (a, &node) in self.space.local_nodes(e).iter().enumerate() {
            for c in 0..nc {
                let coef = self.raw(node, c);
                if coef != 0.0 {
                    value[c] += coef * b.phi[a];
                    grad[c][0] += coef * b.grad[a][0];
                    grad[c][1] += coef * b.grad[a][1];
                }
            }
        }
        (value, grad)
    }
}

impl VectorField for DiscreteField {
    fn eval(&self, e: usize, l: [f64; 3], geo: &ElementGeometry) -> VectorPoint {
        debug_assert_eq!(self.space.n_components(), 2);
        let (value, grad) = self.eval_components(e, l, geo);
        VectorPoint { value, grad }
    }

    fn degree(&self) -> usize {
        if self.space.is_quadratic() {
            2
        } else {
            1
        }
    }

    fn mesh(&self) -> Option<&Mesh> {
        Some(&self.space.mesh)
    }
}

impl ScalarField for DiscreteField {
    fn eval(&self, e: usize, l: [f64; 3], geo: &ElementGeometry) -> ScalarPoint {
        debug_assert_eq!(self.space.n_components(), 1);
        let (value, grad) = self.eval_components(e, l, geo);
        ScalarPoint { value: value[0], grad: grad[0] }
    }

    fn degree(&self) -> usize {
        VectorField::degree(self)
    }

    fn mesh(&self) -> Option<&Mesh> {
        Some(&self.space.mesh)
    }
}

/// Polynomial vector field evaluated exactly at any point.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyVectorField {
    pub components: [Poly2; 2],
    derivs: [[Poly2; 2]; 2],
}

impl PolyVectorField {
    pub fn new(zx: Poly2, zy: Poly2) -> Self {
        let derivs = [[zx.dx(), zx.dy()], [zy.dx(), zy.dy()]];
        PolyVectorField { components: [zx, zy], derivs }
    }

    pub fn constant(v: [f64; 2]) -> Self {
        Self::new(Poly2::constant(v[0]), Poly2::constant(v[1]))
    }

    pub fn at(&self, x: f64, y: f64) -> VectorPoint {
        let p = Powers::new(x, y);
        let value = [self.components[0].eval_powers(&p), self.components[1].eval_powers(&p)];
        let d = &self.derivs;
        let grad = [[d[0][0].eval_powers(&p), d[0][1].eval_powers(&p)], [d[1][0].eval_powers(&p), d[1][1].eval_powers(&p)]];
        VectorPoint { value, grad }
    }
}

impl VectorField for PolyVectorField {
    fn eval(&self, _e: usize, l: [f64; 3], geo: &ElementGeometry) -> VectorPoint {
        let [x, y] = geo.point(l);
        self.at(x, y)
    }

    fn degree(&self) -> usize {
        self.components[0].degree().max(self.components[1].degree())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyScalarField {
    pub poly: Poly2,
    dx: Poly2,
    dy: Poly2,
}

impl PolyScalarField {
    pub fn new(poly: Poly2) -> Self {
        let (dx, dy) = (poly.dx(), poly.dy());
        PolyScalarField { poly, dx, dy }
    }
}

impl ScalarField for PolyScalarField {
    fn eval(&self, _e: usize, l: [f64; 3], geo: &ElementGeometry) -> ScalarPoint {
        let [x, y] = geo.point(l);
        let p = Powers::new(x, y);
        ScalarPoint { value: self.poly.eval_powers(&p), grad: [self.dx.eval_powers(&p), self.dy.eval_powers(&p)] }
    }

    fn degree(&self) -> usize {
        self.poly.degree()
    }
}

/// Velocity `(∂ψ/∂y, −∂ψ/∂x)` of a polynomial stream function; divergence
/// free by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticDivFreeField {
    pub stream: Poly2,
    field: PolyVectorField,
}

impl AnalyticDivFreeField {
    pub fn new(stream: Poly2) -> Self {
        let field = PolyVectorField::new(stream.dy(), -&stream.dx());
        AnalyticDivFreeField { stream, field }
    }

    /// ψ = xy(1−x)(1−y): normal velocity vanishes on the whole boundary.
    pub fn cell_vortex() -> Self {
        let one = Poly2::constant(1.0);
        let bx = &Poly2::x() * &(&one - &Poly2::x());
        let by = &Poly2::y() * &(&one - &Poly2::y());
        Self::new(&bx * &by)
    }

    /// ψ = x²(1−x)²y²(1−y)²: velocity vanishes on the whole boundary.
    pub fn clamped_vortex() -> Self {
        let one = Poly2::constant(1.0);
        let bx = &Poly2::x() * &(&one - &Poly2::x());
        let by = &Poly2::y() * &(&one - &Poly2::y());
        Self::new((&bx * &by).pow(2))
    }

    pub fn at(&self, x: f64, y: f64) -> VectorPoint {
        self.field.at(x, y)
    }

    pub fn as_poly_field(&self) -> &PolyVectorField {
        &self.field
    }
}

impl VectorField for AnalyticDivFreeField {
    fn eval(&self, e: usize, l: [f64; 3], geo: &ElementGeometry) -> VectorPoint {
        self.field.eval(e, l, geo)
    }

    fn degree(&self) -> usize {
        self.field.degree()
    }
}

/// Nodal interpolant of a scalar function; constrained DOFs are dropped.
pub fn interpolate_scalar(space: &Arc<FunctionSpace>, f: impl Fn(f64, f64) -> f64) -> DiscreteField {
    assert_eq!(space.n_components(), 1, "scalar interpolation into a vector space");
    let coeffs = (0..space.n_dofs())
        .map(|i| {
            let (node, _) = space.dof_location(i);
            let [x, y] = space.node_coords[node];
            f(x, y)
        })
        .collect();
    DiscreteField { space: Arc::clone(space), coeffs }
}

/// Nodal interpolant of a vector function; constrained DOFs are dropped.
pub fn interpolate_vector(space: &Arc<FunctionSpace>, f: impl Fn(f64, f64) -> [f64; 2]) -> DiscreteField {
    assert_eq!(space.n_components(), 2, "vector interpolation into a scalar space");
    let coeffs = (0..space.n_dofs())
        .map(|i| {
            let (node, c) = space.dof_location(i);
            let [x, y] = space.node_coords[node];
            f(x, y)[c]
        })
        .collect();
    DiscreteField { space: Arc::clone(space), coeffs }
}

const NORM_DEGREE: usize = 4;

fn integrate_over(mesh: &Mesh, degree: usize, mut f: impl FnMut(usize, [f64; 3], &ElementGeometry) -> f64) -> f64 {
    let q = triangle_quadrature(degree).expect("supported degree");
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

pub fn l2_norm(field: &DiscreteField) -> f64 {
    let nc = field.space.n_components();
    integrate_over(&field.space.mesh, NORM_DEGREE, |e, l, g| {
        let (v, _) = field.eval_components(e, l, g);
        v[..nc].iter().map(|x| x * x).sum()
    })
    .sqrt()
}

/// Full H¹ norm (L² part plus gradient part).
pub fn h1_norm(field: &DiscreteField) -> f64 {
    let nc = field.space.n_components();
    integrate_over(&field.space.mesh, NORM_DEGREE, |e, l, g| {
        let (v, d) = field.eval_components(e, l, g);
        (0..nc).map(|c| v[c] * v[c] + d[c][0] * d[c][0] + d[c][1] * d[c][1]).sum()
    })
    .sqrt()
}

/// L² norm of the scalar curl of a velocity field.
pub fn rot_seminorm(field: &DiscreteField) -> Result<f64> {
    if field.kind() != SpaceKind::Velocity {
        return Err(Error::SpaceMismatch(format!("rot of a {:?} field", field.kind())));
    }
    Ok(integrate_over(&field.space.mesh, NORM_DEGREE, |e, l, g| {
        let r = VectorField::eval(field, e, l, g).rot();
        r * r
    })
    .sqrt())
}

/// Band-ordering key of each free DOF: lattice position first, then `slot`
/// (`slot + component` for vector spaces) so fields interleave by node.
pub fn ordering_keys(space: &FunctionSpace, slot: u64) -> Vec<u64> {
    (0..space.n_dofs())
        .map(|i| {
            let (node, c) = space.dof_location(i);
            space.node_lattice[node] as u64 * 4 + slot + c as u64
        })
        .collect()
}

/// Smooth random function `16 x(1−x) y(1−y) Σ a_kl cos(kπx) cos(lπy)`,
/// `k, l ≤ 2`, `a_kl ~ U(−1, 1)`; it vanishes on the whole boundary.
#[derive(Debug, Clone)]
pub struct SmoothRandom {
    coeffs: [[f64; 3]; 3],
}

impl SmoothRandom {
    pub fn sample(rng: &mut impl rand::Rng) -> Self {
        let mut coeffs = [[0.0; 3]; 3];
        for row in coeffs.iter_mut() {
            for c in row.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
        }
        SmoothRandom { coeffs }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        let bubble = 16.0 * x * (1.0 - x) * y * (1.0 - y);
        let mut s = 0.0;
        for (k, row) in self.coeffs.iter().enumerate() {
            for (l, a) in row.iter().enumerate() {
                s += a * (k as f64 * PI * x).cos() * (l as f64 * PI * y).cos();
            }
        }
        bubble * s
    }
}

pub fn random_smooth_scalar(space: &Arc<FunctionSpace>, rng: &mut impl rand::Rng) -> DiscreteField {
    let f = SmoothRandom::sample(rng);
    interpolate_scalar(space, |x, y| f.eval(x, y))
}

pub fn random_smooth_vector(space: &Arc<FunctionSpace>, rng: &mut impl rand::Rng) -> DiscreteField {
    let fx = SmoothRandom::sample(rng);
    let fy = SmoothRandom::sample(rng);
    interpolate_vector(space, |x, y| [fx.eval(x, y), fy.eval(x, y)])
}

/// Uniform `U(−1, 1)` coefficients on every free DOF.
pub fn random_coefficients(space: &Arc<FunctionSpace>, rng: &mut impl rand::Rng) -> DiscreteField {
    let coeffs = (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DiscreteField { space: Arc::clone(space), coeffs }
}

/// Quadratic trace nodes of one tagged boundary part.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub tag: BoundaryTag,
    /// Lattice indices of the trace nodes, ascending.
    pub lattice_nodes: Vec<usize>,
    pub coords: Vec<[f64; 2]>,
    pub edges: Vec<TraceEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEdge {
    pub side: Side,
    /// Lattice indices (start, midpoint, end).
    pub lattice: [usize; 3],
    /// Positions of those nodes in the trace node list.
    pub local: [usize; 3],
    pub length: f64,
}

impl BoundaryTrace {
    pub fn new(mesh: &Mesh, tag: BoundaryTag) -> Self {
        let lw = lattice_width(mesh);
        let mut lattice_nodes: Vec<usize> =
            mesh.edges_with_tag(tag).flat_map(|e| edge_lattice(mesh, e.nodes)).collect();
        lattice_nodes.sort_unstable();
        lattice_nodes.dedup();
        let coords = lattice_nodes
            .iter()
            .map(|&n| [(n % lw) as f64 / (2 * mesh.nx) as f64, (n / lw) as f64 / (2 * mesh.ny) as f64])
            .collect();
        let pos = |n: usize| lattice_nodes.binary_search(&n).expect("trace node");
        let edges = mesh
            .edges_with_tag(tag)
            .map(|e| {
                let lattice = edge_lattice(mesh, e.nodes);
                TraceEdge { side: e.side, lattice, local: lattice.map(pos), length: mesh.edge_length(e) }
            })
            .collect();
        BoundaryTrace { tag, lattice_nodes, coords, edges }
    }

    pub fn len(&self) -> usize {
        self.lattice_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice_nodes.is_empty()
    }
}

/// Quadratic trace basis on the unit edge (start, midpoint, end).
pub fn edge_basis(s: f64) -> [f64; 3] {
    [(1.0 - s) * (1.0 - 2.0 * s), 4.0 * s * (1.0 - s), s * (2.0 * s - 1.0)]
}
