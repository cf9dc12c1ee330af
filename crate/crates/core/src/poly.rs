//! Bivariate polynomials in monomial form, used for analytic test fields.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

const POWERS: usize = 32;

/// Tabulated powers of a point, shared between several evaluations.
pub struct Powers {
    x: [f64; POWERS],
    y: [f64; POWERS],
    at: (f64, f64),
}

impl Powers {
    pub fn new(x: f64, y: f64) -> Self {
        let (mut xp, mut yp) = ([1.0; POWERS], [1.0; POWERS]);
        for i in 1..POWERS {
            xp[i] = xp[i - 1] * x;
            yp[i] = yp[i - 1] * y;
        }
        Powers { x: xp, y: yp, at: (x, y) }
    }

    fn x(&self, a: u32) -> f64 {
        self.x.get(a as usize).copied().unwrap_or_else(|| self.at.0.powi(a as i32))
    }

    fn y(&self, b: u32) -> f64 {
        self.y.get(b as usize).copied().unwrap_or_else(|| self.at.1.powi(b as i32))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly2 {
    /// `(px, py) -> coefficient of x^px y^py`
    terms: BTreeMap<(u32, u32), f64>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(c, 0, 0)
    }

    pub fn x() -> Self {
        Self::monomial(1.0, 1, 0)
    }

    pub fn y() -> Self {
        Self::monomial(1.0, 0, 1)
    }

    pub fn monomial(c: f64, px: u32, py: u32) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert((px, py), c);
        }
        Poly2 { terms }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = ((u32, u32), f64)>) -> Self {
        let mut p = Poly2::zero();
        for (k, c) in terms {
            *p.terms.entry(k).or_insert(0.0) += c;
        }
        p.prune();
        p
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| *c != 0.0);
    }

    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.terms.iter().map(|(&k, &c)| (k, c))
    }

    /// Total degree (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|&(a, b)| (a + b) as usize).max().unwrap_or(0)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.eval_powers(&Powers::new(x, y))
    }

    pub fn eval_powers(&self, p: &Powers) -> f64 {
        self.terms.iter().map(|(&(a, b), &c)| c * p.x(a) * p.y(b)).sum()
    }

    pub fn dx(&self) -> Self {
        Poly2::from_terms(
            self.terms.iter().filter(|(&(a, _), _)| a > 0).map(|(&(a, b), &c)| ((a - 1, b), c * a as f64)),
        )
    }

    pub fn dy(&self) -> Self {
        Poly2::from_terms(
            self.terms.iter().filter(|(&(_, b), _)| b > 0).map(|(&(a, b), &c)| ((a, b - 1), c * b as f64)),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Poly2::from_terms(self.terms.iter().map(|(&k, &c)| (k, c * s)))
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Poly2::constant(1.0), |acc, _| &acc * self)
    }
}

impl Add for &Poly2 {
    type Output = Poly2;
    fn add(self, rhs: &Poly2) -> Poly2 {
        Poly2::from_terms(self.terms().chain(rhs.terms()))
    }
}

impl Sub for &Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: &Poly2) -> Poly2 {
        Poly2::from_terms(self.terms().chain(rhs.terms().map(|(k, c)| (k, -c))))
    }
}

impl Neg for &Poly2 {
    type Output = Poly2;
    fn neg(self) -> Poly2 {
        self.scale(-1.0)
    }
}

impl Mul for &Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: &Poly2) -> Poly2 {
        Poly2::from_terms(
            self.terms().flat_map(|((a, b), c)| rhs.terms().map(move |((p, q), d)| ((a + p, b + q), c * d))),
        )
    }
}
