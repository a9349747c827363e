//! Hamiltonians H = p²/2m + V(q) with polynomial V.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePoint {
    pub p: f64,
    pub q: f64,
}

impl PhasePoint {
    pub const fn new(p: f64, q: f64) -> Self {
        Self { p, q }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.q.is_finite()
    }

    /// a∧b = a_q b_p − a_p b_q.
    pub fn wedge(&self, other: &PhasePoint) -> f64 {
        self.q * other.p - self.p * other.q
    }

    pub fn add(&self, o: &PhasePoint) -> PhasePoint {
        PhasePoint::new(self.p + o.p, self.q + o.q)
    }

    pub fn sub(&self, o: &PhasePoint) -> PhasePoint {
        PhasePoint::new(self.p - o.p, self.q - o.q)
    }

    pub fn scale(&self, s: f64) -> PhasePoint {
        PhasePoint::new(self.p * s, self.q * s)
    }

    pub fn norm(&self) -> f64 {
        self.p.hypot(self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialPotential {
    coefficients: Vec<f64>,
    mass: f64,
}

impl PolynomialPotential {
    /// V(q) = Σ c_k q^k.
    pub fn new(coefficients: Vec<f64>, mass: f64) -> Result<Self> {
        if coefficients.is_empty() {
            return invalid("potential needs at least one coefficient");
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return invalid("potential coefficients must be finite");
        }
        if !(mass.is_finite() && mass > 0.0) {
            return invalid(format!("mass must be positive, got {mass}"));
        }
        Ok(Self { coefficients, mass })
    }

    pub fn harmonic() -> Self {
        Self::new(vec![0.0, 0.0, 0.5], 1.0).unwrap()
    }

    /// 0.329 q³ − 0.69 q, unit mass.
    pub fn cubic_well() -> Self {
        Self::new(vec![0.0, -0.69, 0.0, 0.329], 1.0).unwrap()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Highest power with a nonzero coefficient.
    pub fn degree(&self) -> usize {
        self.coefficients.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    /// d^order V / dq^order.
    pub fn eval(&self, q: f64, order: u32) -> Result<f64> {
        if order > 3 {
            return invalid(format!("derivative order {order} outside 0..=3"));
        }
        Ok(self.deriv(q, order))
    }

    pub(crate) fn deriv(&self, q: f64, order: u32) -> f64 {
        let n = order as usize;
        let mut acc = 0.0;
        for k in (n..self.coefficients.len()).rev() {
            let mut f = 1.0;
            for j in 0..n {
                f *= (k - j) as f64;
            }
            acc = acc * q + f * self.coefficients[k];
        }
        acc
    }

    pub fn v(&self, q: f64) -> f64 {
        self.deriv(q, 0)
    }

    pub fn dv(&self, q: f64) -> f64 {
        self.deriv(q, 1)
    }

    pub fn d2v(&self, q: f64) -> f64 {
        self.deriv(q, 2)
    }

    pub fn d3v(&self, q: f64) -> f64 {
        self.deriv(q, 3)
    }

    pub fn hamiltonian(&self, r: &PhasePoint) -> f64 {
        r.p * r.p / (2.0 * self.mass) + self.v(r.q)
    }

    /// Hamilton's equations: (dp/ds, dq/ds).
    pub fn velocity(&self, r: &PhasePoint) -> PhasePoint {
        PhasePoint::new(-self.dv(r.q), r.p / self.mass)
    }

    /// Real roots of V'(q) = 0 for potentials up to cubic degree.
    pub fn stationary_points(&self) -> Vec<f64> {
        let c = |k: usize| self.coefficients.get(k).copied().unwrap_or(0.0);
        match self.degree() {
            0 | 1 => vec![],
            2 => vec![-c(1) / (2.0 * c(2))],
            3 => {
                let (a, b, cc) = (3.0 * c(3), 2.0 * c(2), c(1));
                let disc = b * b - 4.0 * a * cc;
                if disc < 0.0 {
                    return vec![];
                }
                let s = disc.sqrt();
                let mut r = vec![(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)];
                r.sort_by(|x, y| x.partial_cmp(y).unwrap());
                r
            }
            _ => vec![],
        }
    }

    /// Position of the lowest local minimum, if any (degree ≤ 3).
    pub fn well_minimum(&self) -> Option<f64> {
        self.stationary_points()
            .into_iter()
            .filter(|&q| self.d2v(q) > 0.0)
            .min_by(|a, b| self.v(*a).partial_cmp(&self.v(*b)).unwrap())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub potential: PolynomialPotential,
    pub hbar: f64,
}

impl Model {
    pub fn new(potential: PolynomialPotential, hbar: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return invalid(format!("hbar must be positive, got {hbar}"));
        }
        Ok(Self { potential, hbar })
    }
}
