//! Trajectory-pair semiclassical propagator: pairs of classical trajectories
//! whose initial midpoint is r′, their actions and stability denominators,
//! and the spot assembled from them on a phase-space grid.

use crate::classical::{self, check_step_args, escaped, rk4_step, step_sizes, JointState, TrajectoryRecord};
use crate::error::{invalid, Result};
use crate::field::{GridSpec, PhaseSpaceField};
use crate::mat2::Mat2;
use crate::model::{PhasePoint, PolynomialPotential};
use crate::propagate::PropagatorSource;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sheet {
    Extremum,
    Saddle,
    Caustic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanVleckOptions {
    pub n_radii: usize,
    pub n_angles: usize,
    pub rho_max: f64,
    /// Shepard radius in units of output cells.
    pub smoothing_radius: f64,
    /// Pairs with |det(M₊ − M₋)| below this are dropped.
    pub eps_caustic: f64,
    /// Caustic band: |J/ρ³| at most this fraction of its maximum.
    pub eps_jacobian: f64,
    pub dt: f64,
}

impl Default for VanVleckOptions {
    fn default() -> Self {
        VanVleckOptions {
            n_radii: 200,
            n_angles: 200,
            rho_max: 0.5,
            smoothing_radius: 2.0,
            eps_caustic: 1e-8,
            eps_jacobian: 0.02,
            dt: 2e-3,
        }
    }
}

impl VanVleckOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_radii < 3 || self.n_angles < 8 {
            return invalid(format!(
                "seed grid {}x{} is too coarse for differencing (need n_radii >= 3, n_angles >= 8)",
                self.n_radii, self.n_angles
            ));
        }
        if !(self.rho_max > 0.0 && self.rho_max.is_finite()) {
            return invalid("rho_max must be positive");
        }
        if !(self.smoothing_radius > 0.0 && self.smoothing_radius.is_finite()) {
            return invalid("smoothing_radius must be positive");
        }
        if !(self.eps_caustic >= 0.0) || !(self.eps_jacobian >= 0.0) {
            return invalid("caustic thresholds must be non-negative");
        }
        Ok(())
    }
}

/// Displacements δ = ρ(cos θ, sin θ) in (p, q), ρ uniform in (0, rho_max],
/// θ uniform in [0, π). Ordered radius-major: index k·n_angles + l.
pub fn seed_pairs(n_radii: usize, n_angles: usize, rho_max: f64) -> Result<Vec<PhasePoint>> {
    if n_radii == 0 || n_angles == 0 || !(rho_max > 0.0 && rho_max.is_finite()) {
        return invalid("seed grid needs n_radii, n_angles >= 1 and rho_max > 0");
    }
    let mut out = Vec::with_capacity(n_radii * n_angles);
    for k in 0..n_radii {
        let rho = rho_max * (k + 1) as f64 / n_radii as f64;
        for l in 0..n_angles {
            let th = PI * l as f64 / n_angles as f64;
            out.push(PhasePoint::new(rho * th.cos(), rho * th.sin()));
        }
    }
    Ok(out)
}

/// Auxiliary initial points r′ ± δ/2.
pub fn pair_starts(r_prime: PhasePoint, delta: PhasePoint) -> (PhasePoint, PhasePoint) {
    let h = delta.scale(0.5);
    (r_prime.add(&h), r_prime.sub(&h))
}

/// Everything downstream needs from one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub delta: PhasePoint,
    pub final_midpoint: PhasePoint,
    pub final_chord: PhasePoint,
    pub action: f64,
    pub amplitude_den: f64,
    pub valid: bool,
    pub sheet: Sheet,
}

#[derive(Debug, Clone)]
pub struct TrajectoryPair {
    pub plus: TrajectoryRecord,
    pub minus: TrajectoryRecord,
    pub midpoint_path: Vec<PhasePoint>,
    pub chord: Vec<PhasePoint>,
    pub action: f64,
    pub final_midpoint: PhasePoint,
    pub amplitude_den: f64,
    pub sheet: Option<Sheet>,
}

/// Integrand of the pair action: (dr̄/ds)∧R − H(r₊) + H(r₋).
fn action_rate(pot: &PolynomialPotential, plus: &PhasePoint, minus: &PhasePoint) -> f64 {
    let v = pot.velocity(plus).add(&pot.velocity(minus)).scale(0.5);
    let chord = plus.sub(minus);
    v.wedge(&chord) - pot.hamiltonian(plus) + pot.hamiltonian(minus)
}

struct PairRun {
    plus: JointState,
    minus: JointState,
    action: f64,
}

/// Steps both members together; `visit` sees every sample. None on escape.
fn run_pair(
    pot: &PolynomialPotential,
    r_prime: PhasePoint,
    delta: PhasePoint,
    t: f64,
    dt: f64,
    mut visit: impl FnMut(f64, &JointState, &JointState),
) -> Option<PairRun> {
    let (a, b) = pair_starts(r_prime, delta);
    let mut plus = JointState { r: a, m: Mat2::IDENTITY };
    let mut minus = JointState { r: b, m: Mat2::IDENTITY };
    let mut rate = action_rate(pot, &plus.r, &minus.r);
    let mut action = 0.0;
    let mut s = 0.0;
    visit(s, &plus, &minus);
    let steps = step_sizes(t, dt);
    for (i, h) in steps.iter().enumerate() {
        plus = rk4_step(pot, &plus, *h);
        minus = rk4_step(pot, &minus, *h);
        let bound = classical::DEFAULT_ESCAPE_BOUND;
        if escaped(&plus.r, bound) || escaped(&minus.r, bound) || !plus.m.is_finite() || !minus.m.is_finite() {
            return None;
        }
        let next = action_rate(pot, &plus.r, &minus.r);
        action += 0.5 * h * (rate + next);
        rate = next;
        s = if i + 1 == steps.len() { t } else { s + h };
        visit(s, &plus, &minus);
    }
    Some(PairRun { plus, minus, action })
}

fn summarize(run: Option<PairRun>, delta: PhasePoint) -> PairSummary {
    match run {
        Some(r) => PairSummary {
            delta,
            final_midpoint: r.plus.r.add(&r.minus.r).scale(0.5),
            final_chord: r.plus.r.sub(&r.minus.r),
            action: r.action,
            amplitude_den: r.plus.m.sub(&r.minus.m).det(),
            valid: true,
            sheet: Sheet::Caustic,
        },
        None => PairSummary {
            delta,
            final_midpoint: PhasePoint::new(f64::NAN, f64::NAN),
            final_chord: PhasePoint::new(f64::NAN, f64::NAN),
            action: f64::NAN,
            amplitude_den: f64::NAN,
            valid: false,
            sheet: Sheet::Caustic,
        },
    }
}

/// Full record of one pair, including midpoint and chord paths.
pub fn propagate_pair(
    pot: &PolynomialPotential,
    r_prime: PhasePoint,
    delta: PhasePoint,
    t: f64,
    dt: f64,
) -> Result<TrajectoryPair> {
    check_step_args(t, dt)?;
    if !r_prime.is_finite() || !delta.is_finite() {
        return invalid("r' and delta must be finite");
    }
    let (a, b) = pair_starts(r_prime, delta);
    let plus = classical::integrate(pot, a, t, dt)?;
    let minus = classical::integrate(pot, b, t, dt)?;
    let mut mids = Vec::with_capacity(plus.len());
    let mut chords = Vec::with_capacity(plus.len());
    let run = run_pair(pot, r_prime, delta, t, dt, |_, p, m| {
        mids.push(p.r.add(&m.r).scale(0.5));
        chords.push(p.r.sub(&m.r));
    })
    .ok_or(crate::Error::Escape { time: t })?;
    Ok(TrajectoryPair {
        final_midpoint: *mids.last().unwrap(),
        amplitude_den: run.plus.m.sub(&run.minus.m).det(),
        action: run.action,
        plus,
        minus,
        midpoint_path: mids,
        chord: chords,
        sheet: None,
    })
}

/// Pairs on a regular (ρ, θ) seed grid around one r′.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSet {
    pub r_prime: PhasePoint,
    pub t: f64,
    pub n_radii: usize,
    pub n_angles: usize,
    pub rho_max: f64,
    pub pairs: Vec<PairSummary>,
}

impl PairSet {
    pub fn rho(&self, k: usize) -> f64 {
        self.rho_max * (k + 1) as f64 / self.n_radii as f64
    }

    pub fn get(&self, k: usize, l: usize) -> &PairSummary {
        &self.pairs[k * self.n_angles + l]
    }

    pub fn valid(&self) -> impl Iterator<Item = &PairSummary> {
        self.pairs.iter().filter(|p| p.valid)
    }

    pub fn count(&self, sheet: Sheet) -> usize {
        self.valid().filter(|p| p.sheet == sheet).count()
    }
}

/// Propagates every seed pair. Work is split over threads; results keep
/// seed order.
pub fn propagate_pairs(
    pot: &PolynomialPotential,
    r_prime: PhasePoint,
    t: f64,
    opts: &VanVleckOptions,
) -> Result<PairSet> {
    check_step_args(t, opts.dt)?;
    if !r_prime.is_finite() {
        return invalid("r' must be finite");
    }
    let seeds = seed_pairs(opts.n_radii, opts.n_angles, opts.rho_max)?;
    let pairs = propagate_seed_list(pot, r_prime, t, opts.dt, &seeds)?;
    let lost = pairs.iter().filter(|p| !p.valid).count();
    if lost > 0 {
        log::warn!("{lost} of {} trajectory pairs escaped and were dropped", pairs.len());
    }
    Ok(PairSet { r_prime, t, n_radii: opts.n_radii, n_angles: opts.n_angles, rho_max: opts.rho_max, pairs })
}

/// Summaries for arbitrary displacements, in input order.
pub fn propagate_seed_list(
    pot: &PolynomialPotential,
    r_prime: PhasePoint,
    t: f64,
    dt: f64,
    seeds: &[PhasePoint],
) -> Result<Vec<PairSummary>> {
    check_step_args(t, dt)?;
    if seeds.is_empty() {
        return Ok(vec![]);
    }
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(seeds.len());
    let chunk = seeds.len().div_ceil(threads);
    Ok(std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter().map(|d| summarize(run_pair(pot, r_prime, *d, t, dt, |_, _, _| {}), *d)).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("pair worker panicked")).collect()
    }))
}

/// J(ρ, θ)/ρ³ with J = det ∂r̄″/∂(ρ, θ); NaN where a neighbour is invalid.
pub fn normalized_jacobian(set: &PairSet) -> Vec<f64> {
    let (nr, na) = (set.n_radii, set.n_angles);
    let dr = set.rho_max / nr as f64;
    let dth = PI / na as f64;
    let mid = |k: usize, l: usize| -> Option<PhasePoint> {
        let p = set.get(k, l);
        p.valid.then_some(p.final_midpoint)
    };
    let mut out = vec![f64::NAN; nr * na];
    for k in 0..nr {
        for l in 0..na {
            // θ + π is the swapped pair with the same midpoint, so θ wraps.
            let (lp, lm) = ((l + 1) % na, (l + na - 1) % na);
            let (kp, km) = (if k + 1 < nr { k + 1 } else { k }, if k > 0 { k - 1 } else { k });
            let (Some(a), Some(b), Some(c), Some(d)) = (mid(kp, l), mid(km, l), mid(k, lp), mid(k, lm)) else {
                continue;
            };
            let d_rho = a.sub(&b).scale(1.0 / ((kp - km) as f64 * dr));
            let d_th = c.sub(&d).scale(1.0 / (2.0 * dth));
            let rho = set.rho(k);
            out[k * na + l] = (d_rho.p * d_th.q - d_rho.q * d_th.p) / rho.powi(3);
        }
    }
    out
}

/// Labels each pair extremum (J > 0), saddle (J < 0) or caustic (|J| small
/// relative to its maximum, |det(M₊ − M₋)| < eps_caustic, or undefined).
pub fn classify_sheets(set: &mut PairSet, opts: &VanVleckOptions) -> Result<()> {
    if set.n_radii < 3 || set.n_angles < 8 {
        return invalid(format!(
            "seed grid {}x{} is too coarse for differencing (need n_radii >= 3, n_angles >= 8)",
            set.n_radii, set.n_angles
        ));
    }
    let jn = normalized_jacobian(set);
    let peak = jn.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = (opts.eps_jacobian * peak).max(1e-8);
    for (p, j) in set.pairs.iter_mut().zip(&jn) {
        p.sheet = if !p.valid || !j.is_finite() || j.abs() <= eps || !(p.amplitude_den.abs() >= opts.eps_caustic) {
            Sheet::Caustic
        } else if *j > 0.0 {
            Sheet::Extremum
        } else {
            Sheet::Saddle
        };
    }
    Ok(())
}

/// Amplitude (4/h)·2/√|det(M₊ − M₋)| with h = 2πħ.
pub fn pair_amplitude(den: f64, hbar: f64) -> f64 {
    4.0 / (2.0 * PI * hbar) * 2.0 / den.abs().sqrt()
}

/// Oscillating factor per sheet. Swapping the members negates S, so the
/// factor is even in S; extremum pairs carry the −π/2 phase.
pub fn pair_phase_factor(sheet: Sheet, action: f64, hbar: f64) -> f64 {
    match sheet {
        Sheet::Extremum => (action.abs() / hbar - PI / 2.0).cos(),
        Sheet::Saddle => (action / hbar).cos(),
        Sheet::Caustic => 0.0,
    }
}

/// Midpoint buckets keyed by integer cell coordinates (may lie off-grid).
struct Buckets {
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Buckets {
    fn new(grid: &GridSpec, points: &[PhasePoint]) -> Buckets {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (n, r) in points.iter().enumerate() {
            let (fi, fj) = grid.frac_index(r);
            cells.entry((fi.round() as i64, fj.round() as i64)).or_default().push(n);
        }
        Buckets { cells }
    }

    /// Indices within `radius` (cell units) of cell (i, j), with squared
    /// distances.
    fn near(&self, grid: &GridSpec, points: &[PhasePoint], i: usize, j: usize, radius: f64) -> Vec<(usize, f64)> {
        let reach = radius.ceil() as i64 + 1;
        let mut out = Vec::new();
        for di in -reach..=reach {
            for dj in -reach..=reach {
                if let Some(list) = self.cells.get(&(i as i64 + di, j as i64 + dj)) {
                    for &n in list {
                        let (fi, fj) = grid.frac_index(&points[n]);
                        let d2 = (fi - i as f64).powi(2) + (fj - j as f64).powi(2);
                        if d2 <= radius * radius {
                            out.push((n, d2));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Rounds every midpoint to a common point when all pairs collapse onto one
/// (quadratic dynamics).
fn collapsed_midpoint(set: &PairSet, grid: &GridSpec) -> Option<PhasePoint> {
    let mids: Vec<PhasePoint> = set.valid().map(|p| p.final_midpoint).collect();
    if mids.is_empty() {
        return None;
    }
    let mean = mids.iter().fold(PhasePoint::new(0.0, 0.0), |a, m| a.add(m)).scale(1.0 / mids.len() as f64);
    let tol = 1e-6 * grid.dp().min(grid.dq());
    mids.iter().all(|m| m.sub(&mean).norm() <= tol).then_some(mean)
}

/// Σ_sheets amplitude·cos(phase) from Shepard-smoothed amplitude and action.
pub fn assemble_spot(set: &PairSet, grid: &GridSpec, hbar: f64, smoothing_radius: f64) -> Result<PhaseSpaceField> {
    grid.validate()?;
    if !(hbar > 0.0) || !(smoothing_radius > 0.0) {
        return invalid("hbar and smoothing_radius must be positive");
    }
    let mut field = PhaseSpaceField::zeros(*grid);
    let lit: Vec<&PairSummary> = set.valid().filter(|p| p.sheet != Sheet::Caustic).collect();
    if lit.is_empty() {
        if let Some(c) = collapsed_midpoint(set, grid) {
            // Liouville limit: the spot degenerates to the classical delta.
            field.deposit(&c, 1.0);
        } else {
            log::warn!("no illuminated pairs: returning an all-zero field");
        }
        return Ok(field);
    }
    for sheet in [Sheet::Extremum, Sheet::Saddle] {
        let members: Vec<&PairSummary> = lit.iter().copied().filter(|p| p.sheet == sheet).collect();
        if members.is_empty() {
            continue;
        }
        let pts: Vec<PhasePoint> = members.iter().map(|p| p.final_midpoint).collect();
        let buckets = Buckets::new(grid, &pts);
        for j in 0..grid.nq {
            for i in 0..grid.np {
                let near = buckets.near(grid, &pts, i, j, smoothing_radius);
                if near.is_empty() {
                    continue;
                }
                let (mut wsum, mut amp, mut act) = (0.0, 0.0, 0.0);
                for (n, d2) in near {
                    let w = 1.0 / d2.max(1e-12);
                    wsum += w;
                    amp += w * pair_amplitude(members[n].amplitude_den, hbar);
                    act += w * members[n].action;
                }
                let v = field.get(i, j) + amp / wsum * pair_phase_factor(sheet, act / wsum, hbar);
                field.set(i, j, v);
            }
        }
    }
    Ok(field)
}

/// 1 on cells within the smoothing radius of a caustic pair's midpoint; the
/// whole grid when no pair is illuminated.
pub fn caustic_mask(set: &PairSet, grid: &GridSpec, smoothing_radius: f64) -> Result<PhaseSpaceField> {
    grid.validate()?;
    let mut mask = PhaseSpaceField::zeros(*grid);
    if set.valid().all(|p| p.sheet == Sheet::Caustic) {
        mask.values.iter_mut().for_each(|v| *v = 1.0);
        return Ok(mask);
    }
    let pts: Vec<PhasePoint> = set.valid().filter(|p| p.sheet == Sheet::Caustic).map(|p| p.final_midpoint).collect();
    let buckets = Buckets::new(grid, &pts);
    for j in 0..grid.nq {
        for i in 0..grid.np {
            if !buckets.near(grid, &pts, i, j, smoothing_radius).is_empty() {
                mask.set(i, j, 1.0);
            }
        }
    }
    Ok(mask)
}

/// Cells that receive any illuminated contribution.
pub fn illuminated_region(set: &PairSet, grid: &GridSpec, smoothing_radius: f64) -> Result<PhaseSpaceField> {
    grid.validate()?;
    let mut out = PhaseSpaceField::zeros(*grid);
    let pts: Vec<PhasePoint> = set.valid().filter(|p| p.sheet != Sheet::Caustic).map(|p| p.final_midpoint).collect();
    let buckets = Buckets::new(grid, &pts);
    for j in 0..grid.nq {
        for i in 0..grid.np {
            if !buckets.near(grid, &pts, i, j, smoothing_radius).is_empty() {
                out.set(i, j, 1.0);
            }
        }
    }
    Ok(out)
}

/// Seed radius whose largest final midpoint offset from r_cl(t) reaches
/// `reach`, assuming the offset grows quadratically in ρ.
pub fn auto_rho_max(pot: &PolynomialPotential, r_prime: PhasePoint, t: f64, dt: f64, reach: f64) -> Result<f64> {
    check_step_args(t, dt)?;
    let r_cl = classical::integrate(pot, r_prime, t, dt)?.final_state();
    let mut rho = 1e-2;
    for _ in 0..6 {
        let mut worst = 0.0f64;
        for d in seed_pairs(1, 32, rho)? {
            if let Some(run) = run_pair(pot, r_prime, d, t, dt, |_, _, _| {}) {
                worst = worst.max(run.plus.r.add(&run.minus.r).scale(0.5).sub(&r_cl).norm());
            }
        }
        if worst <= 0.0 {
            return invalid("midpoints do not move away from the classical image (quadratic dynamics)");
        }
        let next = rho * (reach / worst).sqrt();
        if (next / rho - 1.0).abs() < 0.02 {
            return Ok(next);
        }
        rho = next;
    }
    Ok(rho)
}

/// Full pipeline for one r′: seed, propagate, classify, assemble.
pub fn spot(
    pot: &PolynomialPotential,
    r_prime: PhasePoint,
    t: f64,
    hbar: f64,
    grid: &GridSpec,
    opts: &VanVleckOptions,
) -> Result<(PhaseSpaceField, PairSet)> {
    opts.validate()?;
    let mut set = propagate_pairs(pot, r_prime, t, opts)?;
    classify_sheets(&mut set, opts)?;
    let field = assemble_spot(&set, grid, hbar, opts.smoothing_radius)?;
    Ok((field, set))
}

pub struct VanVleckSource<'a> {
    pub potential: &'a PolynomialPotential,
    pub t: f64,
    pub hbar: f64,
    pub opts: VanVleckOptions,
}

impl PropagatorSource for VanVleckSource<'_> {
    fn name(&self) -> &'static str {
        "vanvleck"
    }

    fn column(&self, r_prime: PhasePoint, grid: &GridSpec) -> Result<PhaseSpaceField> {
        Ok(spot(self.potential, r_prime, self.t, self.hbar, grid, &self.opts)?.0)
    }
}
