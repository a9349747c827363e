//! Uniform (cubic-phase) propagator: the Fourier-space kernel exp(−iΦ(α, β)),
//! its numerical inversion in the co-moving scaled frame, and the mapping of
//! the resulting spot back to absolute phase space.

use crate::classical::{
    self, final_scaling, AiryCoefficients, CoefficientRoute, StabilityClass, TrajectoryRecord,
};
use crate::error::{invalid, Error, Result};
use crate::field::{Frame, GridSpec, PhaseSpaceField};
use crate::mat2::Mat2;
use crate::model::{PhasePoint, PolynomialPotential};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Frequencies α ∈ [−alpha_max, alpha_max) (conjugate to ξ) and
/// β ∈ [−beta_max, beta_max) (conjugate to η).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierGridSpec {
    pub alpha_max: f64,
    pub beta_max: f64,
    pub n_alpha: usize,
    pub n_beta: usize,
}

impl FourierGridSpec {
    pub fn validate(&self) -> Result<()> {
        for n in [self.n_alpha, self.n_beta] {
            if n < 64 || !n.is_power_of_two() {
                return invalid(format!("Fourier grid sizes must be powers of two >= 64, got {n}"));
            }
        }
        if !(self.alpha_max > 0.0 && self.beta_max > 0.0) {
            return invalid("Fourier ranges must be positive");
        }
        Ok(())
    }

    pub fn d_alpha(&self) -> f64 {
        2.0 * self.alpha_max / self.n_alpha as f64
    }

    pub fn d_beta(&self) -> f64 {
        2.0 * self.beta_max / self.n_beta as f64
    }

    /// Spatial sample step along ξ and η.
    pub fn step_xi(&self) -> f64 {
        PI / self.alpha_max
    }

    pub fn step_eta(&self) -> f64 {
        PI / self.beta_max
    }

    /// Half-widths of the periodic spatial box, L = π/Δλ.
    pub fn box_xi(&self) -> f64 {
        PI / self.d_alpha()
    }

    pub fn box_eta(&self) -> f64 {
        PI / self.d_beta()
    }
}

/// Smooth taper that removes Fourier components whose stationary point
/// ∇Φ(λ) lies outside the periodic spatial box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardWindow {
    /// Weight is 1 while |∇Φ| stays below this fraction of the box half-width.
    pub taper_start: f64,
    /// Optional low-pass taper in |α|/α_max and |β|/β_max starting at this
    /// fraction; used when the spot is only needed at a coarser resolution.
    pub band_limit: Option<f64>,
}

impl Default for GuardWindow {
    fn default() -> Self {
        GuardWindow { taper_start: 0.5, band_limit: None }
    }
}

pub(crate) fn smooth_step(g: f64, g0: f64) -> f64 {
    if g <= g0 {
        return 1.0;
    }
    if g >= 1.0 {
        return 0.0;
    }
    let x = (g - g0) / (1.0 - g0);
    let f = |y: f64| if y <= 0.0 { 0.0 } else { (-1.0 / y).exp() };
    let (a, b) = (f(1.0 - x), f(x));
    a / (a + b)
}

impl GuardWindow {
    /// C∞ step: 1 for g ≤ taper_start, 0 for g ≥ 1.
    pub fn weight(&self, g: f64) -> f64 {
        smooth_step(g, self.taper_start)
    }

    pub fn band_weight(&self, alpha_frac: f64, beta_frac: f64) -> f64 {
        match self.band_limit {
            None => 1.0,
            Some(b0) => smooth_step(alpha_frac.abs(), b0) * smooth_step(beta_frac.abs(), b0),
        }
    }
}

/// Φ(α, β) = (a30/3)α³ + a21 α²β + a12 αβ² + (a03/3)β³.
pub fn fourier_kernel_phase(c: &AiryCoefficients, alpha: f64, beta: f64) -> f64 {
    c.a30 / 3.0 * alpha.powi(3) + c.a21 * alpha * alpha * beta + c.a12 * alpha * beta * beta + c.a03 / 3.0 * beta.powi(3)
}

/// (∂Φ/∂α, ∂Φ/∂β).
pub fn fourier_kernel_gradient(c: &AiryCoefficients, alpha: f64, beta: f64) -> (f64, f64) {
    (
        c.a30 * alpha * alpha + 2.0 * c.a21 * alpha * beta + c.a12 * beta * beta,
        c.a21 * alpha * alpha + 2.0 * c.a12 * alpha * beta + c.a03 * beta * beta,
    )
}

fn windowed_kernel(c: &AiryCoefficients, fg: &FourierGridSpec, guard: &GuardWindow, alpha: f64, beta: f64) -> Complex64 {
    let (ga, gb) = fourier_kernel_gradient(c, alpha, beta);
    let g = (ga.abs() / fg.box_xi()).max(gb.abs() / fg.box_eta());
    let w = guard.weight(g) * guard.band_weight(alpha / fg.alpha_max, beta / fg.beta_max);
    if w == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar(w, -fourier_kernel_phase(c, alpha, beta))
}

/// Largest mismatch of the windowed kernel across opposite faces of the
/// frequency box, per axis (α faces, β faces).
fn periodicity_defect(c: &AiryCoefficients, fg: &FourierGridSpec, guard: &GuardWindow) -> (f64, f64) {
    let (da, db) = (fg.d_alpha(), fg.d_beta());
    let mut defect_a = 0.0f64;
    for b in 0..fg.n_beta {
        let beta = (b as f64 - (fg.n_beta / 2) as f64) * db;
        let lo = windowed_kernel(c, fg, guard, -fg.alpha_max, beta);
        let hi = windowed_kernel(c, fg, guard, fg.alpha_max, beta);
        defect_a = defect_a.max((lo - hi).norm());
    }
    let mut defect_b = 0.0f64;
    for a in 0..fg.n_alpha {
        let alpha = (a as f64 - (fg.n_alpha / 2) as f64) * da;
        let lo = windowed_kernel(c, fg, guard, alpha, -fg.beta_max);
        let hi = windowed_kernel(c, fg, guard, alpha, fg.beta_max);
        defect_b = defect_b.max((lo - hi).norm());
    }
    (defect_a, defect_b)
}

const PERIODICITY_TOL: f64 = 1e-9;
const MAX_FFT_SIDE: usize = 1 << 15;
const MAX_FFT_POINTS: usize = 1 << 24;

/// Maps each output sample to an FFT node; None if not aligned.
fn node_map(out_min: f64, out_step: f64, n_out: usize, center: f64, step: f64, n: usize) -> Result<Vec<usize>> {
    let ratio = out_step / step;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return invalid(format!(
            "output spacing {out_step} is not an integer multiple of the Fourier grid step {step}"
        ));
    }
    let mut idx = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let x = out_min + (i as f64 + 0.5) * out_step;
        let m = (x - center) / step;
        let mr = m.round();
        if (m - mr).abs() > 1e-6 {
            return invalid("output grid samples are not aligned with the Fourier grid nodes");
        }
        let node = mr as i64 + (n / 2) as i64;
        if node < 0 || node >= n as i64 {
            return invalid("output grid extends beyond the Fourier box; enlarge the Fourier grid");
        }
        idx.push(node as usize);
    }
    Ok(idx)
}

/// Output sample nearest to the origin along one axis.
fn center_sample(min: f64, step: f64, n: usize) -> f64 {
    let i = ((-min) / step - 0.5).round().clamp(0.0, (n - 1) as f64);
    min + (i + 0.5) * step
}

/// Inverse transform of the guarded kernel onto `out_grid`, whose p slot holds
/// η and q slot holds ξ. Output samples must coincide with FFT nodes; the
/// Fourier grid from [`auto_fourier_grid`] guarantees that.
pub fn spot_from_fourier(
    coeffs: &AiryCoefficients,
    fgrid: &FourierGridSpec,
    out_grid: &GridSpec,
    guard: &GuardWindow,
) -> Result<PhaseSpaceField> {
    out_grid.validate()?;
    let frame = Frame::Scaled { center: PhasePoint::default(), mu: coeffs.mu };
    if coeffs.is_zero() {
        let mut f = PhaseSpaceField::zeros(*out_grid).with_frame(frame);
        f.deposit(&PhasePoint::default(), 1.0);
        return Ok(f);
    }
    fgrid.validate()?;
    if coeffs.as_array().iter().any(|a| !a.is_finite()) {
        return invalid("non-finite cubic coefficients");
    }
    let (defect_a, defect_b) = periodicity_defect(coeffs, fgrid, guard);
    if defect_a > PERIODICITY_TOL || defect_b > PERIODICITY_TOL {
        return Err(Error::Aliasing {
            n_alpha: if defect_a > PERIODICITY_TOL { 2 * fgrid.n_alpha } else { fgrid.n_alpha },
            n_beta: if defect_b > PERIODICITY_TOL { 2 * fgrid.n_beta } else { fgrid.n_beta },
        });
    }
    let (na, nb) = (fgrid.n_alpha, fgrid.n_beta);
    let (d_xi, d_eta) = (fgrid.step_xi(), fgrid.step_eta());
    let c_eta = center_sample(out_grid.p_min, out_grid.dp(), out_grid.np);
    let c_xi = center_sample(out_grid.q_min, out_grid.dq(), out_grid.nq);
    let map_eta = node_map(out_grid.p_min, out_grid.dp(), out_grid.np, c_eta, d_eta, nb)?;
    let map_xi = node_map(out_grid.q_min, out_grid.dq(), out_grid.nq, c_xi, d_xi, na)?;

    let (da, db) = (fgrid.d_alpha(), fgrid.d_beta());
    let mut buf = vec![Complex64::new(0.0, 0.0); na * nb];
    for a in 0..na {
        let alpha = (a as f64 - (na / 2) as f64) * da;
        for b in 0..nb {
            let beta = (b as f64 - (nb / 2) as f64) * db;
            let k = windowed_kernel(coeffs, fgrid, guard, alpha, beta);
            if k.re == 0.0 && k.im == 0.0 {
                continue;
            }
            let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
            let shift = Complex64::from_polar(1.0, alpha * c_xi + beta * c_eta);
            buf[a * nb + b] = k * shift * sign;
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft_b = planner.plan_fft_inverse(nb);
    for row in buf.chunks_mut(nb) {
        fft_b.process(row);
    }
    let fft_a = planner.plan_fft_inverse(na);
    let mut col = vec![Complex64::new(0.0, 0.0); na];
    for b in 0..nb {
        for a in 0..na {
            col[a] = buf[a * nb + b];
        }
        fft_a.process(&mut col);
        for a in 0..na {
            buf[a * nb + b] = col[a];
        }
    }
    let norm = da * db / (4.0 * PI * PI);
    let mut out = PhaseSpaceField::zeros(*out_grid).with_frame(frame);
    let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
    for (j, &l) in map_xi.iter().enumerate() {
        for (i, &m) in map_eta.iter().enumerate() {
            let sign = if (l + m) % 2 == 0 { 1.0 } else { -1.0 };
            let z = buf[l * nb + m] * (sign * norm);
            max_re = max_re.max(z.re.abs());
            max_im = max_im.max(z.im.abs());
            out.set(i, j, z.re);
        }
    }
    if max_im > 1e-9 * max_re {
        return Err(Error::Accuracy(format!(
            "imaginary residue {:.3e} relative to the real part",
            max_im / max_re
        )));
    }
    Ok(out)
}

/// Smallest aligned Fourier grid whose box holds `out_grid` inside the flat
/// part of the guard and whose frequency range lets the guard close.
pub fn auto_fourier_grid(coeffs: &AiryCoefficients, out_grid: &GridSpec, guard: &GuardWindow) -> Result<FourierGridSpec> {
    sized_fourier_grid(coeffs, out_grid, guard, None, None)
}

/// [`auto_fourier_grid`] with optional fixed sample counts; a fixed count
/// may pad the box but never shrink it below what the window needs.
pub fn sized_fourier_grid(
    coeffs: &AiryCoefficients,
    out_grid: &GridSpec,
    guard: &GuardWindow,
    n_alpha: Option<usize>,
    n_beta: Option<usize>,
) -> Result<FourierGridSpec> {
    out_grid.validate()?;
    for n in [n_alpha, n_beta].into_iter().flatten() {
        if n < 64 || !n.is_power_of_two() {
            return invalid(format!("Fourier grid sizes must be powers of two >= 64, got {n}"));
        }
    }
    let ext = |min: f64, max: f64, c: f64, step: f64| (max - c).abs().max((min - c).abs()) + step;
    let c_eta = center_sample(out_grid.p_min, out_grid.dp(), out_grid.np);
    let c_xi = center_sample(out_grid.q_min, out_grid.dq(), out_grid.nq);
    let e_eta = ext(out_grid.p_min, out_grid.p_max, c_eta, out_grid.dp());
    let e_xi = ext(out_grid.q_min, out_grid.q_max, c_xi, out_grid.dq());
    let need = |e: f64| e / guard.taper_start;
    let size = |l: f64, d: f64| (2.0 * l / d).ceil().max(64.0) as usize;
    let (mut ka, mut kb) = (1usize, 1usize);
    loop {
        let (d_xi, d_eta) = (out_grid.dq() / ka as f64, out_grid.dp() / kb as f64);
        let na_auto = size(need(e_xi), d_xi).next_power_of_two();
        let nb_auto = size(need(e_eta), d_eta).next_power_of_two();
        let na = n_alpha.unwrap_or(na_auto);
        let nb = n_beta.unwrap_or(nb_auto);
        if na < na_auto || nb < nb_auto {
            return invalid(format!("Fourier grid {na}x{nb} is smaller than the window needs ({na_auto}x{nb_auto})"));
        }
        let fg = FourierGridSpec { alpha_max: PI / d_xi, beta_max: PI / d_eta, n_alpha: na, n_beta: nb };
        if na > MAX_FFT_SIDE || nb > MAX_FFT_SIDE || na * nb > MAX_FFT_POINTS {
            return Err(Error::Aliasing { n_alpha: na, n_beta: nb });
        }
        if coeffs.is_zero() {
            return Ok(fg);
        }
        let (da, db) = periodicity_defect(coeffs, &fg, guard);
        if da <= PERIODICITY_TOL && db <= PERIODICITY_TOL {
            return Ok(fg);
        }
        if da > PERIODICITY_TOL {
            ka *= 2;
        }
        if db > PERIODICITY_TOL {
            kb *= 2;
        }
    }
}

/// Linear map from a lab displacement r − r_cl(t) to the co-moving scaled
/// frame in which the spot is computed: reflect η, undo the linear flow,
/// scale by μ^{±1/4}.
pub fn lab_to_local(coeffs: &AiryCoefficients) -> Result<Mat2> {
    if coeffs.stability_class == StabilityClass::Mixed {
        return Err(Error::Unsupported("mixed stability class has no co-moving scaled frame".into()));
    }
    let f_inv = coeffs.frame()?.inverse().unwrap();
    Ok(Mat2::diag(-1.0, 1.0).mul(&f_inv).mul(&final_scaling(coeffs)))
}

pub fn local_to_lab(coeffs: &AiryCoefficients) -> Result<Mat2> {
    Ok(lab_to_local(coeffs)?.inverse().unwrap())
}

/// Moves a scaled-frame spot into absolute phase space around r_cl(t). Each
/// spot sample carries mass value·cell-area and is spread bilinearly over the
/// four nearest lab cells, so total mass is kept.
pub fn spot_in_lab_frame(
    spot: &PhaseSpaceField,
    traj: &TrajectoryRecord,
    coeffs: &AiryCoefficients,
    out_grid: &GridSpec,
) -> Result<PhaseSpaceField> {
    out_grid.validate()?;
    let to_lab = local_to_lab(coeffs)?;
    let r_cl = traj.final_state();
    let mut out = PhaseSpaceField::zeros(*out_grid);
    let g = &spot.grid;
    let area = g.cell_area();
    for j in 0..g.nq {
        for i in 0..g.np {
            let v = spot.get(i, j);
            if v == 0.0 {
                continue;
            }
            let d = to_lab.apply([g.p(i), g.q(j)]);
            out.deposit(&PhasePoint::new(r_cl.p + d[0], r_cl.q + d[1]), v * area);
        }
    }
    Ok(out)
}

/// Bilinear re-sampling of a field through an affine map: the output value at
/// x is the input sampled at `matrix`·(x − `out_origin`) + `in_origin`.
pub fn resample_affine(
    field: &PhaseSpaceField,
    matrix: &Mat2,
    out_origin: PhasePoint,
    in_origin: PhasePoint,
    out_grid: &GridSpec,
) -> PhaseSpaceField {
    PhaseSpaceField::from_fn(*out_grid, |r| {
        let d = matrix.apply([r.p - out_origin.p, r.q - out_origin.q]);
        field.sample(&PhasePoint::new(in_origin.p + d[0], in_origin.q + d[1]))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathintOptions {
    pub route: CoefficientRoute,
    pub dt: f64,
    pub guard: GuardWindow,
    /// Scaled-frame samples per lab cell along each axis.
    pub oversample: f64,
    /// Fixed Fourier sample counts; `None` sizes automatically.
    pub n_alpha: Option<usize>,
    pub n_beta: Option<usize>,
}

impl Default for PathintOptions {
    fn default() -> Self {
        PathintOptions {
            route: CoefficientRoute::Transported,
            dt: 1e-3,
            guard: GuardWindow { taper_start: 0.5, band_limit: Some(0.5) },
            oversample: 3.0,
            n_alpha: None,
            n_beta: None,
        }
    }
}

/// Scaled-frame grid covering the pre-image of `lab` around r_cl.
pub fn local_grid_for(coeffs: &AiryCoefficients, r_cl: PhasePoint, lab: &GridSpec, oversample: f64) -> Result<GridSpec> {
    let a = lab_to_local(coeffs)?;
    let inv = a.inverse().unwrap();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in [lab.p_min, lab.p_max] {
        for q in [lab.q_min, lab.q_max] {
            let x = a.apply([p - r_cl.p, q - r_cl.q]);
            for k in 0..2 {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
    }
    let cell = lab.dp().min(lab.dq());
    let stretch = |k: usize| {
        let mut e = [0.0; 2];
        e[k] = 1.0;
        let v = inv.apply(e);
        v[0].hypot(v[1])
    };
    let mut n = [0usize; 2];
    let mut step = [0.0; 2];
    for k in 0..2 {
        step[k] = cell / (oversample * stretch(k));
        let half = lo[k].abs().max(hi[k].abs());
        n[k] = 2 * (half / step[k]).ceil() as usize + 1;
    }
    let half = |k: usize| 0.5 * n[k] as f64 * step[k];
    GridSpec::new((-half(0), half(0)), n[0], (-half(1), half(1)), n[1])
}

/// Cubic-phase propagator column G(·, r′, t) on an absolute grid.
pub fn lab_spot(
    pot: &PolynomialPotential,
    r_prime: PhasePoint,
    t: f64,
    hbar: f64,
    lab: &GridSpec,
    opts: &PathintOptions,
) -> Result<(PhaseSpaceField, AiryCoefficients, TrajectoryRecord)> {
    let traj = classical::integrate(pot, r_prime, t, opts.dt)?;
    let coeffs = classical::coefficients(&traj, pot, hbar, opts.route)?;
    let field = spot_for(&traj, &coeffs, lab, opts)?;
    Ok((field, coeffs, traj))
}

pub fn spot_for(
    traj: &TrajectoryRecord,
    coeffs: &AiryCoefficients,
    lab: &GridSpec,
    opts: &PathintOptions,
) -> Result<PhaseSpaceField> {
    lab.validate()?;
    if coeffs.imag_flagged() {
        return Err(Error::Accuracy(format!("cubic coefficients carry imaginary residue {:.3e}", coeffs.imag_residue)));
    }
    let r_cl = traj.final_state();
    if coeffs.is_zero() {
        lab_to_local(coeffs)?;
        let mut f = PhaseSpaceField::zeros(*lab);
        f.deposit(&r_cl, 1.0);
        return Ok(f);
    }
    let local = local_grid_for(coeffs, r_cl, lab, opts.oversample)?;
    let fg = sized_fourier_grid(coeffs, &local, &opts.guard, opts.n_alpha, opts.n_beta)?;
    let spot = spot_from_fourier(coeffs, &fg, &local, &opts.guard)?;
    spot_in_lab_frame(&spot, traj, coeffs, lab)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub pathint: PathintOptions,
    /// Half-width of the square lab window around r_cl(t).
    pub half_width: f64,
    pub cells: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { pathint: PathintOptions::default(), half_width: 0.15, cells: 96 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub phi: f64,
    pub t: f64,
    pub rms_radius: f64,
}

/// Time at which the running angle reaches `target`, by bisection over the
/// sampled φ(s) and linear interpolation inside the final interval.
fn time_for_angle(times: &[f64], phi: &[f64], target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0usize, phi.len() - 1);
    if !(phi[lo] <= target && target <= phi[hi]) {
        return Err(Error::Probe(format!("target angle {target} outside the bracket [{}, {}]", phi[lo], phi[hi])));
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if phi[mid] < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = if phi[hi] > phi[lo] { (target - phi[lo]) / (phi[hi] - phi[lo]) } else { 0.0 };
    Ok(times[lo] + w * (times[hi] - times[lo]))
}

/// RMS radius of the lab-frame spot at the times where φ(t) hits each target.
pub fn recurrence_probe(
    pot: &PolynomialPotential,
    r_prime: PhasePoint,
    hbar: f64,
    phi_targets: &[f64],
    opts: &ProbeOptions,
) -> Result<Vec<ProbeSample>> {
    if phi_targets.is_empty() {
        return Ok(vec![]);
    }
    let want = phi_targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(want > 0.0) {
        return invalid("target angles must be positive");
    }
    let w0 = (pot.d2v(r_prime.q).max(1e-6) / pot.mass()).sqrt();
    let mut t_max = 1.5 * want / w0;
    let dt = opts.pathint.dt;
    let (traj, phi) = loop {
        let traj = classical::integrate(pot, r_prime, t_max, dt)?;
        let phi = classical::running_angle(&traj, pot);
        if phi.iter().any(|z| z.im != 0.0) || classical::classify(&traj, classical::DEFAULT_EPS_CURV) != StabilityClass::Elliptic {
            return Err(Error::Probe("trajectory leaves the elliptic region before reaching the target angle".into()));
        }
        if phi.last().unwrap().re >= want {
            break (traj, phi);
        }
        if t_max > 1e4 {
            return Err(Error::Probe("stability angle does not reach the target".into()));
        }
        t_max *= 2.0;
    };
    let re: Vec<f64> = phi.iter().map(|z| z.re).collect();
    if re.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Probe("stability angle is not monotone over the bracket".into()));
    }
    let mut out = Vec::with_capacity(phi_targets.len());
    for &target in phi_targets {
        let t = time_for_angle(&traj.times, &re, target)?;
        let steps = (t / dt).ceil().max(16.0);
        let tr = classical::integrate(pot, r_prime, t, t / steps)?;
        let coeffs = classical::coefficients(&tr, pot, hbar, opts.pathint.route)?;
        let r_cl = tr.final_state();
        let lab = GridSpec::centered(r_cl, opts.half_width, opts.half_width, opts.cells, opts.cells)?;
        let field = spot_for(&tr, &coeffs, &lab, &opts.pathint)?;
        out.push(ProbeSample { phi: target, t, rms_radius: field.rms_radius(&r_cl) });
    }
    Ok(out)
}
