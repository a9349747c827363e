//! Classical trajectories with monodromy, stability angle and the cubic-phase
//! coefficients of the uniform propagator.

use crate::error::{invalid, Error, Result};
use crate::mat2::Mat2;
use crate::model::{PhasePoint, PolynomialPotential};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DEFAULT_ESCAPE_BOUND: f64 = 1e3;
pub const DEFAULT_EPS_CURV: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub monodromy: Vec<Mat2>,
    pub energy: f64,
    pub curvature2: Vec<f64>,
    pub curvature3: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> PhasePoint {
        *self.states.last().unwrap()
    }

    pub fn final_monodromy(&self) -> Mat2 {
        *self.monodromy.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Position at time s by linear interpolation between samples.
    pub fn q_at(&self, s: f64) -> Result<f64> {
        let t = self.duration();
        if !(s >= 0.0 && s <= t) {
            return invalid(format!("time {s} outside [0, {t}]"));
        }
        let i = match self.times.binary_search_by(|x| x.partial_cmp(&s).unwrap()) {
            Ok(i) => return Ok(self.states[i].q),
            Err(i) => i,
        };
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (s - t0) / (t1 - t0);
        Ok(self.states[i - 1].q * (1.0 - w) + self.states[i].q * w)
    }

    pub fn max_det_error(&self) -> f64 {
        self.monodromy.iter().fold(0.0f64, |m, x| m.max((x.det() - 1.0).abs()))
    }

    pub fn max_energy_drift(&self, pot: &PolynomialPotential) -> f64 {
        let scale = self.energy.abs().max(1.0);
        self.states
            .iter()
            .fold(0.0f64, |m, r| m.max((pot.hamiltonian(r) - self.energy).abs() / scale))
    }
}

/// Joint vector field for (p, q) and the monodromy: dM/ds = [[0, −V''], [1/m, 0]]·M.
#[derive(Clone, Copy)]
pub(crate) struct JointState {
    pub r: PhasePoint,
    pub m: Mat2,
}

fn joint_rhs(pot: &PolynomialPotential, y: &JointState) -> JointState {
    let a = Mat2::new(0.0, -pot.d2v(y.r.q), 1.0 / pot.mass(), 0.0);
    JointState { r: pot.velocity(&y.r), m: a.mul(&y.m) }
}

fn axpy(y: &JointState, h: f64, k: &JointState) -> JointState {
    JointState { r: y.r.add(&k.r.scale(h)), m: y.m.add(&k.m.scale(h)) }
}

pub(crate) fn rk4_step(pot: &PolynomialPotential, y: &JointState, h: f64) -> JointState {
    let k1 = joint_rhs(pot, y);
    let k2 = joint_rhs(pot, &axpy(y, h / 2.0, &k1));
    let k3 = joint_rhs(pot, &axpy(y, h / 2.0, &k2));
    let k4 = joint_rhs(pot, &axpy(y, h, &k3));
    let r = y.r.add(&k1.r.add(&k2.r.scale(2.0)).add(&k3.r.scale(2.0)).add(&k4.r).scale(h / 6.0));
    let m = y.m.add(&k1.m.add(&k2.m.scale(2.0)).add(&k3.m.scale(2.0)).add(&k4.m).scale(h / 6.0));
    JointState { r, m }
}

/// Uniform steps of size dt, plus a final partial step when t is not a multiple.
pub(crate) fn step_sizes(t: f64, dt: f64) -> Vec<f64> {
    let n_full = (t / dt * (1.0 + 1e-12)).floor() as usize;
    let mut steps = vec![dt; n_full];
    let rest = t - n_full as f64 * dt;
    if rest > 1e-12 * t {
        steps.push(rest);
    }
    steps
}

pub(crate) fn check_step_args(t: f64, dt: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return invalid(format!("propagation time must be positive, got {t}"));
    }
    if !(dt.is_finite() && dt > 0.0 && dt <= t) {
        return invalid(format!("time step must lie in (0, t], got {dt}"));
    }
    if step_sizes(t, dt).len() < 16 {
        return invalid(format!("t/dt = {} gives fewer than 16 steps", t / dt));
    }
    Ok(())
}

pub(crate) fn escaped(r: &PhasePoint, bound: f64) -> bool {
    !r.is_finite() || r.p.abs() > bound || r.q.abs() > bound
}

pub fn integrate(pot: &PolynomialPotential, r0: PhasePoint, t: f64, dt: f64) -> Result<TrajectoryRecord> {
    integrate_with(pot, r0, t, dt, DEFAULT_ESCAPE_BOUND)
}

pub fn integrate_with(
    pot: &PolynomialPotential,
    r0: PhasePoint,
    t: f64,
    dt: f64,
    escape_bound: f64,
) -> Result<TrajectoryRecord> {
    check_step_args(t, dt)?;
    if !r0.is_finite() {
        return invalid("initial point must be finite");
    }
    let steps = step_sizes(t, dt);
    let n = steps.len() + 1;
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        monodromy: Vec::with_capacity(n),
        energy: pot.hamiltonian(&r0),
        curvature2: Vec::with_capacity(n),
        curvature3: Vec::with_capacity(n),
    };
    let mut y = JointState { r: r0, m: Mat2::IDENTITY };
    let mut s = 0.0;
    let push = |rec: &mut TrajectoryRecord, s: f64, y: &JointState| {
        rec.times.push(s);
        rec.states.push(y.r);
        rec.monodromy.push(y.m);
        rec.curvature2.push(pot.d2v(y.r.q));
        rec.curvature3.push(pot.d3v(y.r.q));
    };
    push(&mut rec, s, &y);
    for (i, h) in steps.iter().enumerate() {
        y = rk4_step(pot, &y, *h);
        s = if i + 1 == steps.len() { t } else { s + h };
        if escaped(&y.r, escape_bound) || !y.m.is_finite() {
            return Err(Error::Escape { time: s });
        }
        push(&mut rec, s, &y);
    }
    Ok(rec)
}

/// Integrates several trajectories; results come back in input order.
pub fn integrate_batch(
    pot: &PolynomialPotential,
    starts: &[PhasePoint],
    t: f64,
    dt: f64,
) -> Vec<Result<TrajectoryRecord>> {
    starts.iter().map(|r0| integrate(pot, *r0, t, dt)).collect()
}

fn csqrt_signed(x: f64) -> Complex64 {
    if x >= 0.0 {
        Complex64::new(x.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-x).sqrt())
    }
}

/// φ(s_i) at every sample, trapezoidal in s; √(negative) = i√|·|.
pub fn running_angle(traj: &TrajectoryRecord, pot: &PolynomialPotential) -> Vec<Complex64> {
    let w: Vec<Complex64> = traj.curvature2.iter().map(|v2| csqrt_signed(v2 / pot.mass())).collect();
    let mut phi = Vec::with_capacity(w.len());
    let mut acc = Complex64::new(0.0, 0.0);
    phi.push(acc);
    for i in 1..w.len() {
        acc += (w[i - 1] + w[i]) * (0.5 * (traj.times[i] - traj.times[i - 1]));
        phi.push(acc);
    }
    phi
}

pub fn stability_angle(traj: &TrajectoryRecord, pot: &PolynomialPotential) -> Complex64 {
    *running_angle(traj, pot).last().unwrap()
}

fn mu_from_curvature(pot: &PolynomialPotential, v2: f64, s: f64, q: f64, eps_curv: f64) -> Result<f64> {
    if v2.abs() <= eps_curv {
        return Err(Error::DegenerateCurvature { s, q });
    }
    Ok((1.0 / pot.mass()) / v2.abs())
}

/// μ(s) = T''/|V''| at q_cl(s).
pub fn anisotropy(traj: &TrajectoryRecord, pot: &PolynomialPotential, s: f64) -> Result<f64> {
    let q = traj.q_at(s)?;
    mu_from_curvature(pot, pot.d2v(q), s, q, DEFAULT_EPS_CURV)
}

/// σ(s) = μ^{3/4} ħ² V''' / 8.
pub fn spreading_rate(traj: &TrajectoryRecord, pot: &PolynomialPotential, s: f64, hbar: f64) -> Result<f64> {
    let mu = anisotropy(traj, pot, s)?;
    let q = traj.q_at(s)?;
    Ok(mu.powf(0.75) * hbar * hbar * pot.d3v(q) / 8.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityClass {
    Elliptic,
    Hyperbolic,
    Mixed,
}

/// How the cubic-phase coefficients are obtained from the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientRoute {
    /// ∫σ sin^j φ cos^k φ with the local scaled frame at each s.
    Adiabatic,
    /// Cubic Moyal term transported to the final frame with the exact monodromy.
    Transported,
}

impl std::str::FromStr for CoefficientRoute {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adiabatic" => Ok(Self::Adiabatic),
            "transported" => Ok(Self::Transported),
            _ => invalid(format!("unknown coefficient route '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AiryCoefficients {
    pub a30: f64,
    pub a21: f64,
    pub a12: f64,
    pub a03: f64,
    pub phi: Complex64,
    pub mu: f64,
    pub stability_class: StabilityClass,
    pub route: CoefficientRoute,
    /// Largest imaginary part relative to the largest coefficient (mixed class only).
    pub imag_residue: f64,
    pub skipped_samples: usize,
}

impl AiryCoefficients {
    pub fn zero() -> Self {
        AiryCoefficients {
            a30: 0.0,
            a21: 0.0,
            a12: 0.0,
            a03: 0.0,
            phi: Complex64::new(0.0, 0.0),
            mu: 1.0,
            stability_class: StabilityClass::Elliptic,
            route: CoefficientRoute::Adiabatic,
            imag_residue: 0.0,
            skipped_samples: 0,
        }
    }

    pub fn only_a03(a: f64) -> Self {
        AiryCoefficients { a03: a, ..Self::zero() }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a30, self.a21, self.a12, self.a03]
    }

    pub fn is_zero(&self) -> bool {
        self.as_array().iter().all(|a| *a == 0.0)
    }

    pub fn imag_flagged(&self) -> bool {
        self.imag_residue > 1e-9
    }

    /// Linearized flow in the scaled (η, ξ) frame over the whole trajectory.
    pub fn frame(&self) -> Result<Mat2> {
        match self.stability_class {
            StabilityClass::Elliptic => Ok(Mat2::rotation(self.phi.re)),
            StabilityClass::Hyperbolic => Ok(Mat2::boost(self.phi.im)),
            StabilityClass::Mixed => Err(Error::Unsupported(
                "trajectory changes stability class; no single scaled frame".into(),
            )),
        }
    }
}

pub fn classify(traj: &TrajectoryRecord, eps_curv: f64) -> StabilityClass {
    let pos = traj.curvature2.iter().any(|&v| v > eps_curv);
    let neg = traj.curvature2.iter().any(|&v| v < -eps_curv);
    match (pos, neg) {
        (true, false) => StabilityClass::Elliptic,
        (false, true) => StabilityClass::Hyperbolic,
        (false, false) => StabilityClass::Elliptic,
        (true, true) => StabilityClass::Mixed,
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

fn final_mu(traj: &TrajectoryRecord, pot: &PolynomialPotential) -> Result<f64> {
    let i = traj.len() - 1;
    mu_from_curvature(pot, traj.curvature2[i], traj.times[i], traj.states[i].q, DEFAULT_EPS_CURV)
}

/// a_jk = ∫σ(s) sin^j φ(s) cos^k φ(s) ds, hyperbolic functions of |φ| on
/// hyperbolic trajectories. Degenerate-curvature samples are left out of the
/// quadrature.
pub fn airy_coefficients(traj: &TrajectoryRecord, pot: &PolynomialPotential, hbar: f64) -> Result<AiryCoefficients> {
    let class = classify(traj, DEFAULT_EPS_CURV);
    let phi = running_angle(traj, pot);
    let mu_t = final_mu(traj, pot)?;
    let mut xs = Vec::with_capacity(traj.len());
    let mut vals: Vec<[Complex64; 4]> = Vec::with_capacity(traj.len());
    let mut skipped = 0;
    for i in 0..traj.len() {
        let v2 = traj.curvature2[i];
        if v2.abs() <= DEFAULT_EPS_CURV {
            skipped += 1;
            continue;
        }
        let mu = (1.0 / pot.mass()) / v2.abs();
        let sigma = mu.powf(0.75) * hbar * hbar * traj.curvature3[i] / 8.0;
        let (s, c) = match class {
            StabilityClass::Elliptic => {
                let (s, c) = phi[i].re.sin_cos();
                (Complex64::new(s, 0.0), Complex64::new(c, 0.0))
            }
            StabilityClass::Hyperbolic => {
                let th = phi[i].im;
                (Complex64::new(th.sinh(), 0.0), Complex64::new(th.cosh(), 0.0))
            }
            StabilityClass::Mixed => (phi[i].sin(), phi[i].cos()),
        };
        xs.push(traj.times[i]);
        vals.push([s * s * s * sigma, s * s * c * sigma, s * c * c * sigma, c * c * c * sigma]);
    }
    if skipped > 0 {
        log::warn!("airy coefficients: skipped {skipped} degenerate-curvature samples");
    }
    let mut a = [Complex64::new(0.0, 0.0); 4];
    for (k, ak) in a.iter_mut().enumerate() {
        let re: Vec<f64> = vals.iter().map(|v| v[k].re).collect();
        let im: Vec<f64> = vals.iter().map(|v| v[k].im).collect();
        *ak = Complex64::new(trapezoid(&xs, &re), trapezoid(&xs, &im));
    }
    Ok(pack(a, phi[phi.len() - 1], mu_t, class, CoefficientRoute::Adiabatic, skipped))
}

fn pack(
    a: [Complex64; 4],
    phi: Complex64,
    mu: f64,
    class: StabilityClass,
    route: CoefficientRoute,
    skipped: usize,
) -> AiryCoefficients {
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
    let imag = a.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    let imag_residue = if imag == 0.0 { 0.0 } else { imag / scale.max(f64::MIN_POSITIVE) };
    AiryCoefficients {
        a30: a[0].re,
        a21: a[1].re,
        a12: a[2].re,
        a03: a[3].re,
        phi,
        mu,
        stability_class: class,
        route,
        imag_residue,
        skipped_samples: skipped,
    }
}

/// Scaling to the (η, ξ) frame at the final time: diag(μ^{1/4}, μ^{−1/4}).
pub fn final_scaling(coeffs: &AiryCoefficients) -> Mat2 {
    Mat2::diag(coeffs.mu.powf(0.25), coeffs.mu.powf(-0.25))
}

/// Cubic-phase coefficients from the exact linearized flow: the third-order
/// Moyal term at time s is carried to the final scaled frame through
/// M(t)·M(s)⁻¹. Finite at inflection points; reduces to the adiabatic
/// integral when μ varies slowly.
pub fn transported_coefficients(
    traj: &TrajectoryRecord,
    pot: &PolynomialPotential,
    hbar: f64,
) -> Result<AiryCoefficients> {
    let class = classify(traj, DEFAULT_EPS_CURV);
    let phi = running_angle(traj, pot);
    let phi_t = phi[phi.len() - 1];
    let mu_t = final_mu(traj, pot)?;
    let mut tmp = AiryCoefficients { phi: phi_t, mu: mu_t, stability_class: class, ..AiryCoefficients::zero() };
    let frame_inv = match tmp.frame() {
        Ok(f) => f.inverse().unwrap(),
        Err(_) => Mat2::IDENTITY,
    };
    let m_t = traj.final_monodromy();
    let pre = frame_inv.mul(&final_scaling(&tmp)).mul(&m_t);
    let mut vals: Vec<[f64; 4]> = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let u = pre.mul(&traj.monodromy[i].symplectic_inverse()).apply([1.0, 0.0]);
        let (y, x) = (u[0], -u[1]);
        let w = hbar * hbar * traj.curvature3[i] / 8.0;
        vals.push([w * x * x * x, w * x * x * y, w * x * y * y, w * y * y * y]);
    }
    let mut a = [Complex64::new(0.0, 0.0); 4];
    for (k, ak) in a.iter_mut().enumerate() {
        let y: Vec<f64> = vals.iter().map(|v| v[k]).collect();
        *ak = Complex64::new(trapezoid(&traj.times, &y), 0.0);
    }
    tmp = pack(a, phi_t, mu_t, class, CoefficientRoute::Transported, 0);
    Ok(tmp)
}

pub fn coefficients(
    traj: &TrajectoryRecord,
    pot: &PolynomialPotential,
    hbar: f64,
    route: CoefficientRoute,
) -> Result<AiryCoefficients> {
    match route {
        CoefficientRoute::Adiabatic => airy_coefficients(traj, pot, hbar),
        CoefficientRoute::Transported => transported_coefficients(traj, pot, hbar),
    }
}

/// Writes `s p q M11 M12 M21 M22` rows.
pub fn write_trajectory<W: std::io::Write>(traj: &TrajectoryRecord, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# s p q M11 M12 M21 M22")?;
    for i in 0..traj.len() {
        let r = traj.states[i];
        let m = traj.monodromy[i].0;
        writeln!(
            w,
            "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
            traj.times[i], r.p, r.q, m[0][0], m[0][1], m[1][0], m[1][1]
        )?;
    }
    Ok(())
}
