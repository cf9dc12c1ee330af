//! Quadrature on the reference triangle and the unit segment.
//!
//! Triangle rules are stored with barycentric points `[l0, l1, l2]` on the
//! reference triangle `(0,0), (1,0), (0,1)`; weights sum to its area 1/2.
//! Edge rules are stored with parameter values in `[0, 1]`; weights sum to 1.

use crate::error::{Error, Result};

/// Highest polynomial degree [`triangle_quadrature`] can integrate exactly.
pub const MAX_TRIANGLE_DEGREE: usize = 30;
/// Highest polynomial degree [`edge_quadrature`] can integrate exactly.
pub const MAX_EDGE_DEGREE: usize = 59;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

pub type TriangleRule = QuadratureRule<[f64; 3]>;
pub type EdgeRule = QuadratureRule<f64>;

impl<P: Copy> QuadratureRule<P> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (P, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

impl TriangleRule {
    /// Integrates `f(xi, eta)` over the reference triangle.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.iter().map(|(l, w)| w * f(l[1], l[2])).sum()
    }
}

impl EdgeRule {
    pub fn integrate_unit(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(s, w)| w * f(s)).sum()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]` with `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess for the i-th root on [-1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map to [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule on the unit segment exact to `degree`.
pub fn edge_quadrature(degree: usize) -> Result<EdgeRule> {
    if degree == 0 || degree > MAX_EDGE_DEGREE {
        return Err(Error::UnsupportedQuadrature { degree, max: MAX_EDGE_DEGREE });
    }
    let n = degree / 2 + 1;
    let (points, weights) = gauss_legendre(n);
    Ok(QuadratureRule { points, weights, degree })
}

/// Symmetric rule on the reference triangle exact to `degree`.
///
/// Degrees up to 6 use the classical positive-weight symmetric rules
/// (1, 3, 6, 7 and 12 points); higher degrees use a collapsed
/// Gauss-Legendre product rule.
pub fn triangle_quadrature(degree: usize) -> Result<TriangleRule> {
    match degree {
        0 => Err(Error::UnsupportedQuadrature { degree, max: MAX_TRIANGLE_DEGREE }),
        1 => Ok(symmetric_rule(1, &[Orbit::Centroid(1.0)])),
        2 => Ok(symmetric_rule(2, &[Orbit::Two(1.0 / 6.0, 1.0 / 3.0)])),
        3 | 4 => Ok(symmetric_rule(
            4,
            &[
                Orbit::Two(0.445948490915965, 0.223381589678011),
                Orbit::Two(0.091576213509771, 0.109951743655322),
            ],
        )),
        5 => {
            let s = 15f64.sqrt();
            Ok(symmetric_rule(
                5,
                &[
                    Orbit::Centroid(9.0 / 40.0),
                    Orbit::Two((6.0 - s) / 21.0, (155.0 - s) / 1200.0),
                    Orbit::Two((6.0 + s) / 21.0, (155.0 + s) / 1200.0),
                ],
            ))
        }
        6 => Ok(symmetric_rule(
            6,
            &[
                Orbit::Two(0.249286745170910, 0.116786275726379),
                Orbit::Two(0.063089014491502, 0.050844906370207),
                Orbit::Three(0.053145049844817, 0.310352451033784, 0.082851075618374),
            ],
        )),
        d if d <= MAX_TRIANGLE_DEGREE => Ok(collapsed_rule(d)),
        _ => Err(Error::UnsupportedQuadrature { degree, max: MAX_TRIANGLE_DEGREE }),
    }
}

enum Orbit {
    /// weight
    Centroid(f64),
    /// (a, weight): permutations of (a, a, 1-2a)
    Two(f64, f64),
    /// (a, b, weight): permutations of (a, b, 1-a-b)
    Three(f64, f64, f64),
}

// Orbit weights are normalized to the unit-area convention; scaled by 1/2 here.
fn symmetric_rule(degree: usize, orbits: &[Orbit]) -> TriangleRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for orbit in orbits {
        match *orbit {
            Orbit::Centroid(w) => {
                points.push([1.0 / 3.0; 3]);
                weights.push(0.5 * w);
            }
            Orbit::Two(a, w) => {
                let b = 1.0 - 2.0 * a;
                for p in [[b, a, a], [a, b, a], [a, a, b]] {
                    points.push(p);
                    weights.push(0.5 * w);
                }
            }
            Orbit::Three(a, b, w) => {
                let c = 1.0 - a - b;
                for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    points.push(p);
                    weights.push(0.5 * w);
                }
            }
        }
    }
    QuadratureRule { points, weights, degree }
}

// Duffy map (u, v) -> (xi, eta) = (u, v (1 - u)) with Jacobian (1 - u).
fn collapsed_rule(degree: usize) -> TriangleRule {
    let (gu, wu) = gauss_legendre(degree.div_ceil(2) + 1);
    let (gv, wv) = gauss_legendre(degree / 2 + 1);
    let mut points = Vec::with_capacity(gu.len() * gv.len());
    let mut weights = Vec::with_capacity(gu.len() * gv.len());
    for (&u, &a) in gu.iter().zip(&wu) {
        for (&v, &b) in gv.iter().zip(&wv) {
            let xi = u;
            let eta = v * (1.0 - u);
            points.push([1.0 - xi - eta, xi, eta]);
            weights.push(a * b * (1.0 - u));
        }
    }
    QuadratureRule { points, weights, degree }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // ∫_T x^a y^b = a! b! / (a + b + 2)!
    fn monomial_exact(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn centroid_rule() {
        let q = triangle_quadrature(1).unwrap();
        assert_eq!(q.len(), 1);
        assert!((q.weights[0] - 0.5).abs() < 1e-15);
        assert!((q.integrate_reference(|x, _| x) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn x2y_needs_degree_three() {
        for d in 4..=8 {
            let q = triangle_quadrature(d).unwrap();
            let v = q.integrate_reference(|x, y| x * x * y);
            assert!((v - 1.0 / 60.0).abs() < 1e-15, "degree {d}: {v}");
        }
    }

    #[test]
    fn triangle_rules_exact_on_monomials() {
        for d in 1..=MAX_TRIANGLE_DEGREE {
            let q = triangle_quadrature(d).unwrap();
            let wsum: f64 = q.weights.iter().sum();
            assert!((wsum - 0.5).abs() < 1e-14);
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let v = q.integrate_reference(|x, y| x.powi(a as i32) * y.powi(b as i32));
                    let e = monomial_exact(a, b);
                    assert!((v - e).abs() < 1e-14 * e.max(1e-3), "d={d} a={a} b={b}: {v} vs {e}");
                }
            }
        }
    }

    #[test]
    fn edge_rules() {
        let q = edge_quadrature(1).unwrap();
        assert_eq!(q.points, vec![0.5]);
        assert_eq!(q.weights, vec![1.0]);
        for d in 1..=MAX_EDGE_DEGREE {
            let q = edge_quadrature(d).unwrap();
            assert!((q.integrate_unit(|s| s) - 0.5).abs() < 1e-15);
            for p in 0..=d as i32 {
                let v = q.integrate_unit(|s| s.powi(p));
                assert!((v - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "d={d} p={p}");
            }
        }
        let q = edge_quadrature(3).unwrap();
        assert!((q.integrate_unit(|s| s * s * s) - 0.25).abs() < 1e-16);
    }

    #[test]
    fn unsupported_degrees() {
        assert!(triangle_quadrature(0).is_err());
        assert!(triangle_quadrature(MAX_TRIANGLE_DEGREE + 1).is_err());
        assert!(edge_quadrature(0).is_err());
    }
}
