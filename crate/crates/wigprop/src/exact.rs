//! Exact reference: hard-wall sine-DVR eigenbasis, the spectral evolution
//! kernel, and the Wigner propagator obtained from Weyl-transformed density
//! matrices.

use crate::error::{invalid, Error, Result};
use crate::field::{GridSpec, PhaseSpaceField};
use crate::model::{PhasePoint, PolynomialPotential};
use crate::propagate::PropagatorSource;
use ndarray::{Array2, Axis};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

/// Grid points per shortest de Broglie wavelength required by the solver.
/// The sine-DVR is spectrally accurate, so three points are enough.
pub const POINTS_PER_WAVELENGTH: f64 = 3.0;
/// Distance to the hard walls, in local wavelengths, below which results
/// are treated as contaminated.
pub const WALL_MARGIN_WAVELENGTHS: f64 = 10.0;
/// Fraction of the kept band [E_0, e_cutoff] over which state weights roll
/// smoothly to zero.
pub const DEFAULT_SPECTRAL_TAPER: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisKey {
    pub coefficients: Vec<f64>,
    pub mass: f64,
    pub domain: (f64, f64),
    pub n_grid: usize,
    pub hbar: f64,
    pub e_cutoff: f64,
}

/// Eigenstates of H on [q_min, q_max] with Dirichlet walls.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub q_min: f64,
    pub q_max: f64,
    pub n_grid: usize,
    pub hbar: f64,
    pub mass: f64,
    pub e_cutoff: f64,
    /// Width of the smooth roll-off of state weights, as a fraction of the
    /// kept band. Zero gives a sharp projector, whose Wigner function ripples.
    pub taper: f64,
    /// Ascending eigenvalues below the cutoff.
    pub energies: Vec<f64>,
    /// ψ_n(q_i) on the interior points, n_grid × n_kept.
    pub states: Array2<f64>,
    /// Coefficients on the orthonormal sine modes √(2/L)·sin(kπ(x−q_min)/L).
    coeffs: Array2<f64>,
    v_min: f64,
}

impl SpectralBasis {
    pub fn length(&self) -> f64 {
        self.q_max - self.q_min
    }

    pub fn dq(&self) -> f64 {
        self.length() / (self.n_grid + 1) as f64
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q_min + (i + 1) as f64 * self.dq()
    }

    pub fn n_kept(&self) -> usize {
        self.energies.len()
    }

    /// Minimum of V over the interior grid.
    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn with_taper(mut self, taper: f64) -> Self {
        self.taper = taper.clamp(0.0, 1.0);
        self
    }

    /// Spectral filter weights w_n in [0, 1] applied to the point operators.
    pub fn weights(&self) -> Vec<f64> {
        let e0 = self.energies[0];
        let span = self.e_cutoff - e0;
        if self.taper <= 0.0 || span <= 0.0 {
            return vec![1.0; self.n_kept()];
        }
        self.energies
            .iter()
            .map(|e| crate::pathint::smooth_step((e - e0) / span, 1.0 - self.taper))
            .collect()
    }

    fn filter(&self, a: &mut Array2<Complex64>) {
        let s: Vec<f64> = self.weights().iter().map(|w| w.sqrt()).collect();
        for ((m, n), v) in a.indexed_iter_mut() {
            *v *= s[m] * s[n];
        }
    }

    /// Largest wavenumber carried with appreciable weight by the kept states.
    pub fn k_content(&self) -> f64 {
        let k_dvr = self.n_grid as f64 * PI / self.length();
        let p = (2.0 * self.mass * (self.e_cutoff - self.v_min).max(0.0)).sqrt();
        (1.5 * p / self.hbar).min(k_dvr)
    }

    /// Kept states evaluated at arbitrary positions (zero outside the box),
    /// one row per position.
    pub fn eval_states(&self, x: &[f64]) -> Array2<f64> {
        let n = self.n_grid;
        let l = self.length();
        let norm = (2.0 / l).sqrt();
        let mut s = Array2::<f64>::zeros((x.len(), n));
        for (r, &xr) in x.iter().enumerate() {
            if xr <= self.q_min || xr >= self.q_max {
                continue;
            }
            let th = PI * (xr - self.q_min) / l;
            let mut row = s.row_mut(r);
            for k in 0..n {
                row[k] = norm * ((k + 1) as f64 * th).sin();
            }
        }
        s.dot(&self.coeffs)
    }

    /// Largest |⟨ψ_m|ψ_n⟩ − δ_mn| under the grid inner product.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.states.t().dot(&self.states) * self.dq();
        let mut worst = 0.0f64;
        for ((m, n), v) in g.indexed_iter() {
            let target = if m == n { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
        worst
    }

    /// Number of sign changes of state n along the grid (ignoring tiny tails).
    pub fn node_count(&self, n: usize) -> usize {
        let col = self.states.column(n);
        let tol = 1e-6 * col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut last = 0.0f64;
        let mut nodes = 0;
        for &v in col.iter() {
            if v.abs() <= tol {
                continue;
            }
            if last != 0.0 && v.signum() != last.signum() {
                nodes += 1;
            }
            last = v;
        }
        nodes
    }

    /// ⟨q⟩ in state n.
    pub fn mean_position(&self, n: usize) -> f64 {
        let dq = self.dq();
        self.states.column(n).iter().enumerate().map(|(i, v)| v * v * self.q(i) * dq).sum()
    }

    pub fn key(&self, pot: &PolynomialPotential) -> BasisKey {
        BasisKey {
            coefficients: pot.coefficients().to_vec(),
            mass: pot.mass(),
            domain: (self.q_min, self.q_max),
            n_grid: self.n_grid,
            hbar: self.hbar,
            e_cutoff: self.e_cutoff,
        }
    }

    /// Binary dump: one JSON key line, then little-endian f64 payload.
    pub fn save(&self, pot: &PolynomialPotential, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let key = serde_json::to_string(&self.key(pot)).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(f, "{key}")?;
        f.write_all(&(self.n_kept() as u64).to_le_bytes())?;
        f.write_all(&self.v_min.to_le_bytes())?;
        for v in self.energies.iter().chain(self.coeffs.iter()).chain(self.states.iter()) {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    /// Loads a dump if its key matches `key`; Ok(None) when stale or absent.
    pub fn load(key: &BasisKey, path: &Path) -> Result<Option<SpectralBasis>> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let Some(nl) = bytes.iter().position(|&b| b == b'\n') else { return Ok(None) };
        let stored: BasisKey = match serde_json::from_slice(&bytes[..nl]) {
            Ok(k) => k,
            Err(_) => return Ok(None),
        };
        if &stored != key {
            return Ok(None);
        }
        let mut rd = &bytes[nl + 1..];
        let mut word = [0u8; 8];
        let mut next = |rd: &mut &[u8]| -> Result<[u8; 8]> {
            rd.read_exact(&mut word)?;
            Ok(word)
        };
        let n_kept = u64::from_le_bytes(next(&mut rd)?) as usize;
        let v_min = f64::from_le_bytes(next(&mut rd)?);
        let n = key.n_grid;
        let mut take = |count: usize, rd: &mut &[u8]| -> Result<Vec<f64>> {
            (0..count).map(|_| Ok(f64::from_le_bytes(next(rd)?))).collect()
        };
        let energies = take(n_kept, &mut rd)?;
        let coeffs = take(n * n_kept, &mut rd)?;
        let states = take(n * n_kept, &mut rd)?;
        let shape_err = |_| Error::Config("corrupt basis cache".into());
        Ok(Some(SpectralBasis {
            q_min: key.domain.0,
            q_max: key.domain.1,
            n_grid: n,
            hbar: key.hbar,
            mass: key.mass,
            e_cutoff: key.e_cutoff,
            taper: DEFAULT_SPECTRAL_TAPER,
            energies,
            states: Array2::from_shape_vec((n, n_kept), states).map_err(shape_err)?,
            coeffs: Array2::from_shape_vec((n, n_kept), coeffs).map_err(shape_err)?,
            v_min,
        }))
    }
}

/// Smallest n_grid for which the shortest wavelength below `e_cutoff` gets
/// [`POINTS_PER_WAVELENGTH`] points.
pub fn min_n_grid(length: f64, p_max: f64, hbar: f64) -> usize {
    let n = (length * p_max * POINTS_PER_WAVELENGTH / (2.0 * PI * hbar)).ceil() as usize;
    n.saturating_sub(1).max(8)
}

/// Default cutoff H(r′) + 50ħω with ω from the well curvature (or the local
/// curvature when there is no well).
pub fn default_e_cutoff(pot: &PolynomialPotential, r_prime: PhasePoint, hbar: f64) -> f64 {
    let curv = match pot.well_minimum() {
        Some(q) => pot.d2v(q),
        None => pot.d2v(r_prime.q).abs(),
    };
    let omega = (curv.max(1e-12) / pot.mass()).sqrt();
    pot.hamiltonian(&r_prime) + 50.0 * hbar * omega
}

pub fn solve_eigenbasis(
    pot: &PolynomialPotential,
    domain: (f64, f64),
    n_grid: usize,
    hbar: f64,
    e_cutoff: f64,
) -> Result<SpectralBasis> {
    crate::linalg::require_blas()?;
    let (a, b) = domain;
    if !(a.is_finite() && b.is_finite() && b > a) {
        return invalid(format!("bad spectral domain [{a}, {b}]"));
    }
    if !(hbar > 0.0 && hbar.is_finite()) {
        return invalid("hbar must be positive");
    }
    if !e_cutoff.is_finite() {
        return invalid("energy cutoff must be finite");
    }
    if n_grid < 8 {
        return Err(Error::Resolution { min_n_grid: 8 });
    }
    let n = n_grid;
    let l = b - a;
    let dq = l / (n + 1) as f64;
    let m = pot.mass();
    let vq: Vec<f64> = (1..=n).map(|i| pot.v(a + i as f64 * dq)).collect();
    let v_min = vq.iter().cloned().fold(f64::INFINITY, f64::min);
    if e_cutoff <= v_min {
        return invalid(format!("energy cutoff {e_cutoff} lies below the potential minimum {v_min}"));
    }
    let p_max = (2.0 * m * (e_cutoff - v_min)).sqrt();
    let need = min_n_grid(l, p_max, hbar);
    if n < need {
        return Err(Error::Resolution { min_n_grid: need });
    }

    let c = (2.0 / (n + 1) as f64).sqrt();
    let u = Array2::from_shape_fn((n, n), |(j, k)| c * (((j + 1) * (k + 1)) as f64 * PI / (n + 1) as f64).sin());
    let kin: Vec<f64> = (1..=n).map(|k| hbar * hbar / (2.0 * m) * (k as f64 * PI / l).powi(2)).collect();
    let mut uk = u.clone();
    for (mut col, &kv) in uk.axis_iter_mut(Axis(1)).zip(kin.iter()) {
        col *= kv;
    }
    let mut h = uk.dot(&u.t());
    for i in 0..n {
        h[[i, i]] += vq[i];
    }
    let (e, v) = h.eigh(UPLO::Lower).map_err(|err| Error::Accuracy(format!("eigensolver failed: {err}")))?;
    let kept: Vec<usize> = (0..n).filter(|&i| e[i] <= e_cutoff).collect();
    if kept.is_empty() {
        return invalid("no eigenstates below the energy cutoff");
    }
    let mut vk = v.select(Axis(1), &kept);
    // Fix the arbitrary sign: largest sample positive.
    for mut col in vk.axis_iter_mut(Axis(1)) {
        let big = col.iter().cloned().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if big < 0.0 {
            col *= -1.0;
        }
    }
    let coeffs = u.t().dot(&vk);
    let states = vk / dq.sqrt();
    Ok(SpectralBasis {
        q_min: a,
        q_max: b,
        n_grid: n,
        hbar,
        mass: m,
        e_cutoff,
        taper: DEFAULT_SPECTRAL_TAPER,
        energies: kept.iter().map(|&i| e[i]).collect(),
        states,
        coeffs,
        v_min,
    })
}

/// [`solve_eigenbasis`] behind an optional on-disk cache file.
pub fn solve_eigenbasis_cached(
    pot: &PolynomialPotential,
    domain: (f64, f64),
    n_grid: usize,
    hbar: f64,
    e_cutoff: f64,
    cache: Option<&Path>,
) -> Result<SpectralBasis> {
    let key = BasisKey {
        coefficients: pot.coefficients().to_vec(),
        mass: pot.mass(),
        domain,
        n_grid,
        hbar,
        e_cutoff,
    };
    if let Some(path) = cache {
        if let Some(b) = SpectralBasis::load(&key, path)? {
            log::info!("loaded spectral basis from {}", path.display());
            return Ok(b);
        }
    }
    let b = solve_eigenbasis(pot, domain, n_grid, hbar, e_cutoff)?;
    if let Some(path) = cache {
        b.save(pot, path)?;
    }
    Ok(b)
}

/// Local de Broglie wavelength at the energy of r′, using the deepest point
/// of the box for the typical momentum.
pub fn local_wavelength(basis: &SpectralBasis, pot: &PolynomialPotential, r_prime: PhasePoint) -> f64 {
    let ke = (pot.hamiltonian(&r_prime) - basis.v_min).max(0.0);
    let p_typ = (2.0 * pot.mass() * ke).sqrt().max(r_prime.p.abs()).max((pot.mass() * basis.hbar).sqrt());
    basis.hbar / p_typ
}

/// Checks that the classically accessible interval around q′ at energy
/// H(r′) sits at least the wall margin inside the box.
pub fn check_domain(basis: &SpectralBasis, pot: &PolynomialPotential, r_prime: PhasePoint) -> Result<()> {
    let e = pot.hamiltonian(&r_prime);
    let lam = local_wavelength(basis, pot, r_prime);
    let margin = WALL_MARGIN_WAVELENGTHS * lam;
    let step = lam / 4.0;
    let walk = |dir: f64| -> Option<f64> {
        let mut q = r_prime.q;
        while q > basis.q_min && q < basis.q_max {
            if pot.v(q) > e {
                return Some(q);
            }
            q += dir * step;
        }
        None
    };
    match (walk(-1.0), walk(1.0)) {
        (Some(lo), Some(hi)) if lo - basis.q_min >= margin && basis.q_max - hi >= margin => Ok(()),
        (lo, hi) => Err(Error::BoundaryContamination(format!(
            "accessible interval at E = {e:.6} (turning points {lo:?}, {hi:?}) is not {WALL_MARGIN_WAVELENGTHS} wavelengths ({margin:.4}) inside [{}, {}]",
            basis.q_min, basis.q_max
        ))),
    }
}

fn check_reliable(basis: &SpectralBasis, pot: &PolynomialPotential, r_prime: PhasePoint, grid: &GridSpec) -> Result<()> {
    let margin = WALL_MARGIN_WAVELENGTHS * local_wavelength(basis, pot, r_prime);
    let (lo, hi) = (basis.q_min + margin, basis.q_max - margin);
    if r_prime.q < lo || r_prime.q > hi {
        return Err(Error::BoundaryContamination(format!(
            "q' = {} lies within {margin:.4} of the walls [{}, {}]",
            r_prime.q, basis.q_min, basis.q_max
        )));
    }
    if grid.q_min < lo || grid.q_max > hi {
        return Err(Error::BoundaryContamination(format!(
            "output q-range [{}, {}] reaches within {margin:.4} of the walls [{}, {}]",
            grid.q_min, grid.q_max, basis.q_min, basis.q_max
        )));
    }
    Ok(())
}

/// Evolution operator on grid vectors: Σ_n e^{−iE_n t/ħ} |ψ_n⟩⟨ψ_n|, i.e. the
/// kernel K(q_i, q_j; t) multiplied by the grid weight dq.
pub fn position_kernel(basis: &SpectralBasis, t: f64) -> Array2<Complex64> {
    let dq = basis.dq();
    let v = basis.states.mapv(|x| Complex64::new(x * dq.sqrt(), 0.0));
    let mut vd = v.clone();
    for (mut col, &e) in vd.axis_iter_mut(Axis(1)).zip(basis.energies.iter()) {
        col *= Complex64::from_polar(1.0, -e * t / basis.hbar);
    }
    vd.dot(&v.t())
}

/// Amplitudes ⟨ψ_n|ψ⟩ of a state sampled on the basis grid.
pub fn project(basis: &SpectralBasis, psi: &[Complex64]) -> Result<Vec<Complex64>> {
    if psi.len() != basis.n_grid {
        return invalid(format!("state has {} samples, basis grid has {}", psi.len(), basis.n_grid));
    }
    let dq = basis.dq();
    Ok(basis
        .states
        .axis_iter(Axis(1))
        .map(|col| col.iter().zip(psi).map(|(a, b)| b * (a * dq)).sum())
        .collect())
}

/// Gaussian wavepacket with Wigner function [`wigner_of_coherent_state`].
pub fn coherent_state(center: PhasePoint, hbar: f64, squeeze: f64, x: &[f64]) -> Vec<Complex64> {
    let norm = (squeeze / (PI * hbar)).powf(0.25);
    x.iter()
        .map(|&q| {
            let d = q - center.q;
            Complex64::from_polar(norm * (-squeeze * d * d / (2.0 * hbar)).exp(), center.p * d / hbar)
        })
        .collect()
}

/// Probability that `psi`, evolved for time t, lies within `margin` of a wall.
pub fn wall_leakage(basis: &SpectralBasis, psi: &[Complex64], t: f64, margin: f64) -> Result<f64> {
    let c = project(basis, psi)?;
    let dq = basis.dq();
    let (mut total, mut wall) = (0.0, 0.0);
    for i in 0..basis.n_grid {
        let row = basis.states.row(i);
        let amp: Complex64 = row
            .iter()
            .zip(c.iter().zip(&basis.energies))
            .map(|(s, (cn, e))| cn * Complex64::from_polar(*s, -e * t / basis.hbar))
            .sum();
        let w = amp.norm_sqr() * dq;
        total += w;
        let q = basis.q(i);
        if q - basis.q_min < margin || basis.q_max - q < margin {
            wall += w;
        }
    }
    Ok(if total > 0.0 { wall / total } else { 0.0 })
}

fn to_complex(a: &Array2<f64>) -> Array2<Complex64> {
    a.mapv(|x| Complex64::new(x, 0.0))
}

/// Matrix ⟨ψ_m|Â(r′)|ψ_n⟩ of the operator whose Wigner function is δ(r − r′):
/// 2∫dx ψ_m(x) ψ_n(2q′−x) e^{2ip′(x−q′)/ħ}, times the filter √(w_m w_n).
pub fn point_operator(basis: &SpectralBasis, r_prime: PhasePoint) -> Array2<Complex64> {
    let hbar = basis.hbar;
    let band = 2.0 * basis.k_content() + 2.0 * r_prime.p.abs() / hbar;
    let h = PI / band;
    let reach = (r_prime.q - basis.q_min).max(basis.q_max - r_prime.q);
    let j_max = (reach / h).ceil() as i64;
    let x: Vec<f64> = (-j_max..=j_max).map(|j| r_prime.q + j as f64 * h).collect();
    let p = basis.eval_states(&x);
    let n_x = x.len();
    let mut left = to_complex(&p);
    for (r, mut row) in left.axis_iter_mut(Axis(0)).enumerate() {
        row *= Complex64::from_polar(2.0 * h, 2.0 * r_prime.p * (x[r] - r_prime.q) / hbar);
    }
    let right = Array2::from_shape_fn(p.dim(), |(r, c)| Complex64::new(p[[n_x - 1 - r, c]], 0.0));
    let mut a = left.t().dot(&right);
    basis.filter(&mut a);
    a
}

/// D·A·D† with D = diag(e^{−iE_n t/ħ}).
pub fn evolve_operator(basis: &SpectralBasis, a: &Array2<Complex64>, t: f64) -> Array2<Complex64> {
    let d: Vec<Complex64> = basis.energies.iter().map(|e| Complex64::from_polar(1.0, -e * t / basis.hbar)).collect();
    Array2::from_shape_fn(a.dim(), |(m, n)| d[m] * a[[m, n]] * d[n].conj())
}

/// Wigner function of the operator Σ C_mn |ψ_m⟩⟨ψ_n| on `grid`.
pub fn wigner_of_operator(basis: &SpectralBasis, c: &Array2<Complex64>, grid: &GridSpec) -> Result<PhaseSpaceField> {
    grid.validate()?;
    let n = basis.n_kept();
    if c.dim() != (n, n) {
        return invalid(format!("operator is {:?}, basis keeps {n} states", c.dim()));
    }
    let hbar = basis.hbar;
    let p_abs = grid.p_min.abs().max(grid.p_max.abs());
    let h_max = PI / (2.0 * (basis.k_content() + p_abs / hbar)) / 1.05;
    // Chord points must land on output rows, so the fine step divides dq.
    let dq_out = grid.dq();
    let (msub, h) = if grid.nq == 1 {
        (1, h_max)
    } else {
        let m = (dq_out / h_max).ceil().max(1.0) as i64;
        (m, dq_out / m as f64)
    };
    let q0 = grid.q(0);
    let l_lo = ((basis.q_min - q0) / h).floor() as i64;
    let l_hi = ((basis.q_max - q0) / h).ceil() as i64;
    if l_hi - l_lo > 1 << 20 {
        return invalid(format!("output row spacing {dq_out:.3e} needs an oversized chord grid"));
    }
    let x: Vec<f64> = (l_lo..=l_hi).map(|l| q0 + l as f64 * h).collect();
    let nf = x.len() as i64;
    let pf = basis.eval_states(&x);
    let chi = to_complex(&pf).dot(&c.t());

    let mut out = PhaseSpaceField::zeros(*grid);
    let pref = h / (PI * hbar);
    let mut rho = Vec::new();
    for j in 0..grid.nq {
        let i0 = j as i64 * msub - l_lo;
        if i0 < 0 || i0 >= nf {
            continue;
        }
        let kk = i0.min(nf - 1 - i0);
        rho.clear();
        for k in -kk..=kk {
            let a = pf.row((i0 + k) as usize);
            let b = chi.row((i0 - k) as usize);
            rho.push(a.iter().zip(b.iter()).map(|(x, y)| y * *x).sum::<Complex64>());
        }
        let mid = kk as usize;
        for i in 0..grid.np {
            let theta = 2.0 * grid.p(i) * h / hbar;
            let step = Complex64::from_polar(1.0, -theta);
            let mut ph = Complex64::new(1.0, 0.0);
            let mut acc = rho[mid].re;
            for k in 1..=mid {
                ph *= step;
                let plus = rho[mid + k];
                let minus = rho[mid - k];
                acc += (plus * ph + minus * ph.conj()).re;
            }
            out.set(i, j, pref * acc);
        }
    }
    Ok(out)
}

/// Exact G(·, r′, t) on `out_grid`.
pub fn wigner_propagator_exact(
    basis: &SpectralBasis,
    pot: &PolynomialPotential,
    r_prime: PhasePoint,
    t: f64,
    out_grid: &GridSpec,
) -> Result<PhaseSpaceField> {
    if !r_prime.is_finite() || !t.is_finite() {
        return invalid("r' and t must be finite");
    }
    check_reliable(basis, pot, r_prime, out_grid)?;
    let a = point_operator(basis, r_prime);
    let c = evolve_operator(basis, &a, t);
    wigner_of_operator(basis, &c, out_grid)
}

/// ∫d²r″ G(r″, r′, t) over all of phase space. Independent of t since the
/// evolution preserves the trace.
pub fn propagator_trace(basis: &SpectralBasis, r_prime: PhasePoint) -> f64 {
    point_operator(basis, r_prime).diag().iter().map(|z| z.re).sum()
}

/// ∫d²r′ G(r″, r′, t): the point operators integrate to 2πħ times the
/// filtered projector Σ w_n|ψ_n⟩⟨ψ_n|, which commutes with the evolution,
/// so this is 2πħ times its Wigner function at r″.
pub fn propagator_unitality(basis: &SpectralBasis, r_pp: PhasePoint) -> Result<f64> {
    let n = basis.n_kept();
    let w = basis.weights();
    let id = Array2::from_shape_fn((n, n), |(m, k)| Complex64::new(if m == k { w[m] } else { 0.0 }, 0.0));
    let tiny = 1e-9;
    let g = GridSpec::centered(r_pp, tiny, tiny, 1, 1)?;
    let w = wigner_of_operator(basis, &id, &g)?;
    Ok(2.0 * PI * basis.hbar * w.values[0])
}

/// Normalized Gaussian Wigner function with position variance ħ/(2s).
pub fn wigner_of_coherent_state(center: PhasePoint, hbar: f64, squeeze: f64, grid: &GridSpec) -> Result<PhaseSpaceField> {
    grid.validate()?;
    if !(hbar > 0.0 && squeeze > 0.0) || !center.is_finite() {
        return invalid("coherent state needs hbar > 0, squeeze > 0 and a finite centre");
    }
    let sq = (hbar / (2.0 * squeeze)).sqrt();
    let sp = (hbar * squeeze / 2.0).sqrt();
    let covers = |lo: f64, hi: f64, c: f64, s: f64| lo <= c - 6.0 * s && hi >= c + 6.0 * s;
    if !covers(grid.p_min, grid.p_max, center.p, sp) || !covers(grid.q_min, grid.q_max, center.q, sq) {
        return invalid(format!(
            "grid must cover 6 standard deviations (σ_p = {sp:.4}, σ_q = {sq:.4}) around ({}, {})",
            center.p, center.q
        ));
    }
    Ok(PhaseSpaceField::from_fn(*grid, |r| {
        let dp = r.p - center.p;
        let dq = r.q - center.q;
        (-dp * dp / (hbar * squeeze) - squeeze * dq * dq / hbar).exp() / (PI * hbar)
    }))
}

/// Exact kernel bound to a basis and a time.
pub struct ExactSource<'a> {
    pub basis: &'a SpectralBasis,
    pub potential: &'a PolynomialPotential,
    pub t: f64,
}

impl<'a> ExactSource<'a> {
    /// Weyl quantization Σ_cells W(r′)·dA·Â(r′) of a field on its own grid.
    pub fn quantize(&self, field: &PhaseSpaceField) -> Result<Array2<Complex64>> {
        let basis = self.basis;
        let grid = &field.grid;
        let hbar = basis.hbar;
        let n = basis.n_kept();
        let p_abs = grid.p_min.abs().max(grid.p_max.abs());
        let h_max = PI / (2.0 * basis.k_content() + 2.0 * p_abs / hbar);
        let m = (grid.dq() / h_max).ceil().max(1.0) as i64;
        let h = grid.dq() / m as f64;
        let q0 = grid.q(0);
        let l_lo = ((basis.q_min - q0) / h).floor() as i64;
        let l_hi = ((basis.q_max - q0) / h).ceil() as i64;
        let x: Vec<f64> = (l_lo..=l_hi).map(|l| q0 + l as f64 * h).collect();
        let pf = basis.eval_states(&x);
        let peak = field.max_abs();
        let da = grid.cell_area();
        let mut acc = Array2::<Complex64>::zeros((n, n));
        for j in 0..grid.nq {
            let col: Vec<(f64, f64)> =
                (0..grid.np).map(|i| (grid.p(i), field.get(i, j))).filter(|(_, w)| w.abs() > 1e-14 * peak).collect();
            if col.is_empty() {
                continue;
            }
            let qj = grid.q(j);
            // 2q_j − x_l = q0 + (2jm − l)h keeps reflections on the same grid.
            let rows: Vec<(usize, usize)> = (l_lo..=l_hi)
                .filter_map(|l| {
                    let r = 2 * j as i64 * m - l;
                    (r >= l_lo && r <= l_hi).then(|| ((l - l_lo) as usize, (r - l_lo) as usize))
                })
                .collect();
            if rows.is_empty() {
                continue;
            }
            let mut left = Array2::<Complex64>::zeros((rows.len(), n));
            let mut right = Array2::<Complex64>::zeros((rows.len(), n));
            for (k, &(a, b)) in rows.iter().enumerate() {
                let dx = x[a] - qj;
                let wt: Complex64 = col.iter().map(|&(p, w)| Complex64::from_polar(w * da, 2.0 * p * dx / hbar)).sum();
                let wt = wt * (2.0 * h);
                for s in 0..n {
                    left[[k, s]] = wt * pf[[a, s]];
                    right[[k, s]] = Complex64::new(pf[[b, s]], 0.0);
                }
            }
            acc = acc + left.t().dot(&right);
        }
        self.basis.filter(&mut acc);
        Ok(acc)
    }
}

impl<'a> PropagatorSource for ExactSource<'a> {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn column(&self, r_prime: PhasePoint, grid: &GridSpec) -> Result<PhaseSpaceField> {
        wigner_propagator_exact(self.basis, self.potential, r_prime, self.t, grid)
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        grid.validate()?;
        if grid.q_min < self.basis.q_min || grid.q_max > self.basis.q_max {
            return invalid(format!(
                "grid q-range [{}, {}] exceeds the spectral domain [{}, {}]",
                grid.q_min, grid.q_max, self.basis.q_min, self.basis.q_max
            ));
        }
        Ok(())
    }

    /// Quantizes the whole field once, evolves, and transforms back, which
    /// equals the column quadrature but costs one transform instead of one
    /// per cell.
    fn propagate(&self, field: &PhaseSpaceField) -> Result<PhaseSpaceField> {
        let a = self.quantize(field)?;
        let c = evolve_operator(self.basis, &a, self.t);
        wigner_of_operator(self.basis, &c, &field.grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_n_grid_counts_points_per_wavelength() {
        // L = 2π, p = 1, ħ = 1: one wavelength, three points.
        assert_eq!(min_n_grid(2.0 * PI, 1.0, 1.0), 8);
        assert_eq!(min_n_grid(20.0 * PI, 1.0, 1.0), 29);
    }

    #[test]
    fn resolution_error_names_minimal_grid() {
        let pot = PolynomialPotential::harmonic();
        match solve_eigenbasis(&pot, (-3.0, 3.0), 50, 0.01, 2.0) {
            Err(Error::Resolution { min_n_grid }) => {
                let ok = solve_eigenbasis(&pot, (-3.0, 3.0), min_n_grid, 0.01, 2.0);
                assert!(ok.is_ok());
            }
            other => panic!("expected a resolution error, got {other:?}"),
        }
    }

    #[test]
    fn cache_round_trip_and_invalidation() {
        let pot = PolynomialPotential::harmonic();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.bin");
        let b = solve_eigenbasis_cached(&pot, (-2.0, 2.0), 200, 0.05, 1.0, Some(&path)).unwrap();
        let again = SpectralBasis::load(&b.key(&pot), &path).unwrap().unwrap();
        assert_eq!(again.energies, b.energies);
        assert_eq!(again.states, b.states);
        let mut other = b.key(&pot);
        other.n_grid = 201;
        assert!(SpectralBasis::load(&other, &path).unwrap().is_none());
    }

    #[test]
    fn coherent_state_matches_its_wigner_normalization() {
        let x: Vec<f64> = (0..4001).map(|i| -2.0 + i as f64 * 1e-3).collect();
        let psi = coherent_state(PhasePoint::new(0.3, 0.1), 0.01, 2.0, &x);
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * 1e-3;
        assert!((norm - 1.0).abs() < 1e-10);
    }
}
