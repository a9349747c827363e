//! Minimal 2×2 real matrices acting on (p, q) or (η, ξ) pairs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Mat2([[a, 0.0], [0.0, d]])
    }

    /// Counter-clockwise rotation [[cos, −sin], [sin, cos]].
    pub fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    /// [[cosh, sinh], [sinh, cosh]].
    pub fn boost(theta: f64) -> Self {
        let (s, c) = (theta.sinh(), theta.cosh());
        Mat2::new(c, s, s, c)
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Mat2::new(m[1][1] / d, -m[0][1] / d, -m[1][0] / d, m[0][0] / d))
    }

    /// Inverse of a unit-determinant matrix without dividing.
    pub fn symplectic_inverse(&self) -> Mat2 {
        let m = &self.0;
        Mat2::new(m[1][1], -m[0][1], -m[1][0], m[0][0])
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &o.0;
        let mut r = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(r)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &o.0;
        Mat2::new(a[0][0] - b[0][0], a[0][1] - b[0][1], a[1][0] - b[1][0], a[1][1] - b[1][1])
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &o.0;
        Mat2::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        let a = &self.0;
        Mat2::new(a[0][0] * s, a[0][1] * s, a[1][0] * s, a[1][1] * s)
    }

    pub fn max_abs_diff(&self, o: &Mat2) -> f64 {
        let d = self.sub(o).0;
        d.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    /// Real eigenpairs, largest |λ| first; None if complex.
    pub fn real_eigen(&self) -> Option<[(f64, [f64; 2]); 2]> {
        let tr = self.trace();
        let det = self.det();
        let disc = tr * tr / 4.0 - det;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        let mut l = [tr / 2.0 + s, tr / 2.0 - s];
        if l[1].abs() > l[0].abs() {
            l.swap(0, 1);
        }
        let m = &self.0;
        let vec_for = |lam: f64| {
            let (a, b, c, d) = (m[0][0] - lam, m[0][1], m[1][0], m[1][1] - lam);
            let v = if a.abs() + b.abs() >= c.abs() + d.abs() { [-b, a] } else { [-d, c] };
            let n = v[0].hypot(v[1]);
            if n == 0.0 {
                [1.0, 0.0]
            } else {
                [v[0] / n, v[1] / n]
            }
        };
        Some([(l[0], vec_for(l[0])), (l[1], vec_for(l[1]))])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_and_det() {
        let m = Mat2::new(2.0, 1.0, 3.0, 2.0);
        assert_eq!(m.det(), 1.0);
        assert!(m.mul(&m.symplectic_inverse()).max_abs_diff(&Mat2::IDENTITY) < 1e-15);
        assert!(m.mul(&m.inverse().unwrap()).max_abs_diff(&Mat2::IDENTITY) < 1e-15);
    }

    #[test]
    fn rotation_and_boost_groups() {
        let r = Mat2::rotation(0.3).mul(&Mat2::rotation(0.5));
        assert!(r.max_abs_diff(&Mat2::rotation(0.8)) < 1e-15);
        let b = Mat2::boost(0.3).mul(&Mat2::boost(0.5));
        assert!(b.max_abs_diff(&Mat2::boost(0.8)) < 1e-14);
    }

    #[test]
    fn eigen_of_boost() {
        let e = Mat2::boost(1.0).real_eigen().unwrap();
        assert!((e[0].0 - 1f64.exp()).abs() < 1e-12);
        let v = e[0].1;
        assert!((v[0].abs() - v[1].abs()).abs() < 1e-12);
        assert!(Mat2::rotation(1.0).real_eigen().is_none());
    }
}
