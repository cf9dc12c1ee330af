#![allow(dead_code)]

use std::sync::Arc;

use bouss_core::mesh::{build_unit_square_mesh, Mesh, SideTagging};
use bouss_core::poly::Poly2;
use bouss_core::spaces::ElementGeometry;

pub fn mesh(n: usize) -> Arc<Mesh> {
    Arc::new(build_unit_square_mesh(n, n, SideTagging::default()).unwrap())
}

/// Gauss-Legendre nodes and weights on [0, 1] by Newton iteration on P_n.
pub fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

/// Dense Duffy-collapsed rule on every element: `f(e, barycentric, geo)`.
pub fn dense_integral(mesh: &Mesh, n: usize, mut f: impl FnMut(usize, [f64; 3], &ElementGeometry) -> f64) -> f64 {
    let gl = gauss_legendre_01(n);
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let geo = ElementGeometry::new(mesh, e);
        let mut s = 0.0;
        for &(u, wu) in &gl {
            for &(v, wv) in &gl {
                let xi = u;
                let eta = v * (1.0 - u);
                s += wu * wv * (1.0 - u) * f(e, [1.0 - xi - eta, xi, eta], &geo);
            }
        }
        total += s * geo.det;
    }
    total
}

/// Exact integral of a polynomial over the unit square.
pub fn square_integral(p: &Poly2) -> f64 {
    p.terms().map(|((a, b), c)| c / ((a + 1) as f64 * (b + 1) as f64)).sum()
}

/// Exact integral of `p(x0, y)` over `y ∈ (0, 1)`.
pub fn integral_along_x(p: &Poly2, x0: f64) -> f64 {
    p.terms().map(|((a, b), c)| c * x0.powi(a as i32) / (b + 1) as f64).sum()
}

/// Exact integral of `p(x, y0)` over `x ∈ (0, 1)`.
pub fn integral_along_y(p: &Poly2, y0: f64) -> f64 {
    p.terms().map(|((a, b), c)| c * y0.powi(b as i32) / (a + 1) as f64).sum()
}
