#![allow(dead_code)]

/// Ai on a uniform grid x_k = x_hi − k·h (k = 0..n), integrated from the
/// large-x asymptotic series down through Ai'' = x·Ai with classical RK4.
pub struct AiryTable {
    pub x_hi: f64,
    pub h: f64,
    pub values: Vec<f64>,
}

fn asymptotic(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let (mut u, mut su, mut sv) = (1.0f64, 1.0f64, 1.0f64);
    for k in 1..40 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        let v = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let (tu, tv) = (sign * u / zeta.powi(k), sign * v / zeta.powi(k));
        if tu.abs() < 1e-18 && tv.abs() < 1e-18 {
            break;
        }
        su += tu;
        sv += tv;
    }
    let pre = (-zeta).exp() / (2.0 * std::f64::consts::PI.sqrt());
    (pre / x.powf(0.25) * su, -pre * x.powf(0.25) * sv)
}

impl AiryTable {
    pub fn new(x_lo: f64, x_hi: f64, h: f64) -> Self {
        let n = ((x_hi - x_lo) / h).round() as usize;
        let (mut y, mut dy) = asymptotic(x_hi);
        let mut values = Vec::with_capacity(n + 1);
        values.push(y);
        let f = |x: f64, y: f64, dy: f64| (dy, x * y);
        for k in 0..n {
            let x = x_hi - k as f64 * h;
            let s = -h;
            let (k1y, k1d) = f(x, y, dy);
            let (k2y, k2d) = f(x + s / 2.0, y + s / 2.0 * k1y, dy + s / 2.0 * k1d);
            let (k3y, k3d) = f(x + s / 2.0, y + s / 2.0 * k2y, dy + s / 2.0 * k2d);
            let (k4y, k4d) = f(x + s, y + s * k3y, dy + s * k3d);
            y += s / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            dy += s / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
            values.push(y);
        }
        AiryTable { x_hi, h, values }
    }

    /// Ai(x) for x on the table grid.
    pub fn at(&self, x: f64) -> f64 {
        let k = (self.x_hi - x) / self.h;
        let kr = k.round();
        assert!((k - kr).abs() < 1e-6, "x = {x} not on the table grid");
        self.values[kr as usize]
    }
}

/// Linear-interpolated crossing positions of successive sign changes.
pub fn zero_crossings(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..y.len() {
        if y[k - 1] == 0.0 || y[k - 1].signum() != y[k].signum() {
            let w = y[k - 1] / (y[k - 1] - y[k]);
            out.push(x[k - 1] + w * (x[k] - x[k - 1]));
        }
    }
    out
}
