//! Scenario configuration, field files, heatmaps and cross-method metrics.

use crate::classical::{self, CoefficientRoute, TrajectoryRecord};
use crate::error::{invalid, Error, Result};
use crate::exact::{self, DEFAULT_SPECTRAL_TAPER};
use crate::field::{Frame, GridSpec, PhaseSpaceField};
use crate::model::{PhasePoint, PolynomialPotential};
use crate::pathint::{self, GuardWindow, PathintOptions};
use crate::vanvleck::{self, VanVleckOptions};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Runs with more of the grid masked than this are flagged in the manifest.
pub const MASKED_FRACTION_FLAG: f64 = 0.4;

pub const PRESETS: &[(&str, &str)] = &[
    ("fig3-elliptic", include_str!("../../../presets/fig3-elliptic.toml")),
    ("fig3-hyperbolic", include_str!("../../../presets/fig3-hyperbolic.toml")),
    ("harmonic-liouville", include_str!("../../../presets/harmonic-liouville.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vanvleck,
    Pathint,
    Exact,
    All,
}

impl Method {
    pub fn expand(self) -> Vec<Method> {
        match self {
            Method::All => vec![Method::Exact, Method::Vanvleck, Method::Pathint],
            m => vec![m],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Vanvleck => "vanvleck",
            Method::Pathint => "pathint",
            Method::Exact => "exact",
            Method::All => "all",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanvleck" => Ok(Method::Vanvleck),
            "pathint" => Ok(Method::Pathint),
            "exact" => Ok(Method::Exact),
            "all" => Ok(Method::All),
            _ => invalid(format!("unknown method '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    /// c_k of V(q) = Σ c_k q^k.
    pub coefficients: Vec<f64>,
    #[serde(default = "one")]
    pub mass: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSection {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridCenter {
    /// Window follows r_cl(t).
    Classical,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub np: usize,
    pub nq: usize,
    pub center: GridCenter,
    #[serde(default)]
    pub half_p: Option<f64>,
    #[serde(default)]
    pub half_q: Option<f64>,
    #[serde(default)]
    pub p_range: Option<[f64; 2]>,
    #[serde(default)]
    pub q_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VanVleckSection {
    pub n_radii: usize,
    pub n_angles: usize,
    /// Absent: sized from the grid so seeds reach 1.5 half-widths past r_cl.
    #[serde(default)]
    pub rho_max: Option<f64>,
    #[serde(default = "d_smoothing")]
    pub smoothing_radius: f64,
    #[serde(default = "d_eps_caustic")]
    pub eps_caustic: f64,
    #[serde(default = "d_eps_jacobian")]
    pub eps_jacobian: f64,
    #[serde(default = "d_vv_dt")]
    pub dt: f64,
}

fn d_smoothing() -> f64 {
    VanVleckOptions::default().smoothing_radius
}
fn d_eps_caustic() -> f64 {
    VanVleckOptions::default().eps_caustic
}
fn d_eps_jacobian() -> f64 {
    VanVleckOptions::default().eps_jacobian
}
fn d_vv_dt() -> f64 {
    VanVleckOptions::default().dt
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathintSection {
    #[serde(default = "d_route")]
    pub route: CoefficientRoute,
    #[serde(default = "d_pi_dt")]
    pub dt: f64,
    #[serde(default = "d_taper_start")]
    pub taper_start: f64,
    /// Zero disables the band limit.
    #[serde(default = "d_band_limit")]
    pub band_limit: f64,
    #[serde(default = "d_oversample")]
    pub oversample: f64,
    #[serde(default)]
    pub n_alpha: Option<usize>,
    #[serde(default)]
    pub n_beta: Option<usize>,
}

fn d_route() -> CoefficientRoute {
    PathintOptions::default().route
}
fn d_pi_dt() -> f64 {
    PathintOptions::default().dt
}
fn d_taper_start() -> f64 {
    PathintOptions::default().guard.taper_start
}
fn d_band_limit() -> f64 {
    PathintOptions::default().guard.band_limit.unwrap_or(0.0)
}
fn d_oversample() -> f64 {
    PathintOptions::default().oversample
}

impl Default for PathintSection {
    fn default() -> Self {
        PathintSection {
            route: d_route(),
            dt: d_pi_dt(),
            taper_start: d_taper_start(),
            band_limit: d_band_limit(),
            oversample: d_oversample(),
            n_alpha: None,
            n_beta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSection {
    pub domain: [f64; 2],
    pub n_grid: usize,
    /// Absent: H(r′) plus fifty quanta.
    #[serde(default)]
    pub e_cutoff: Option<f64>,
    #[serde(default = "d_taper")]
    pub taper: f64,
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

fn d_taper() -> f64 {
    DEFAULT_SPECTRAL_TAPER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "d_dir")]
    pub dir: PathBuf,
    /// Text grid files.
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub heatmap: bool,
    #[serde(default)]
    pub trajectory: bool,
}

fn d_dir() -> PathBuf {
    PathBuf::from("out")
}
fn yes() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: d_dir(), csv: true, heatmap: true, trajectory: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub method: Method,
    pub hbar: f64,
    pub t: f64,
    /// Optional sweep; replaces `t` when present.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    pub potential: PotentialSection,
    pub r_prime: PointSection,
    pub grid: GridSection,
    #[serde(default)]
    pub vanvleck: Option<VanVleckSection>,
    #[serde(default)]
    pub pathint: Option<PathintSection>,
    #[serde(default)]
    pub exact: Option<ExactSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} = {v} is not finite"))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("scenario config: {e}")))
    }

    /// Reads a TOML scenario, or the `config` entry of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
            let cfg = v.get("config").cloned().unwrap_or(v);
            return serde_json::from_value(cfg).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())));
        }
        Self::from_toml(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match PRESETS.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::from_toml(text),
            None => {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                invalid(format!("unknown preset '{name}' (known: {})", names.join(", ")))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn times(&self) -> Vec<f64> {
        self.times.clone().unwrap_or_else(|| vec![self.t])
    }

    pub fn potential(&self) -> Result<PolynomialPotential> {
        PolynomialPotential::new(self.potential.coefficients.clone(), self.potential.mass)
    }

    pub fn r_prime(&self) -> PhasePoint {
        PhasePoint::new(self.r_prime.p, self.r_prime.q)
    }

    pub fn validate(&self) -> Result<()> {
        finite("hbar", self.hbar)?;
        if self.hbar <= 0.0 {
            return invalid(format!("hbar = {} must be positive", self.hbar));
        }
        finite("t", self.t)?;
        if let Some(ts) = &self.times {
            if ts.is_empty() {
                return invalid("times must not be empty");
            }
            for &t in ts {
                finite("times", t)?;
            }
        }
        self.potential()?;
        finite("r_prime.p", self.r_prime.p)?;
        finite("r_prime.q", self.r_prime.q)?;
        let g = &self.grid;
        match g.center {
            GridCenter::Classical => match (g.half_p, g.half_q) {
                (Some(a), Some(b)) if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => {}
                _ => return invalid("grid: center = \"classical\" needs positive half_p and half_q"),
            },
            GridCenter::Absolute => match (g.p_range, g.q_range) {
                (Some(p), Some(q)) => {
                    GridSpec::new((p[0], p[1]), g.np, (q[0], q[1]), g.nq)?;
                }
                _ => return invalid("grid: center = \"absolute\" needs p_range and q_range"),
            },
        }
        if g.np == 0 || g.nq == 0 {
            return invalid("grid: np and nq must be positive");
        }
        for m in self.method.expand() {
            match m {
                Method::Vanvleck => {
                    let s = self.vanvleck.as_ref().ok_or_else(|| missing("vanvleck"))?;
                    if let Some(r) = s.rho_max {
                        finite("vanvleck.rho_max", r)?;
                    }
                    self.vanvleck_options(s, 1.0)?.validate()?;
                }
                Method::Pathint => {
                    let s = self.pathint.as_ref().ok_or_else(|| missing("pathint"))?;
                    for (n, v) in [("dt", s.dt), ("taper_start", s.taper_start), ("band_limit", s.band_limit), ("oversample", s.oversample)] {
                        finite(&format!("pathint.{n}"), v)?;
                    }
                    if s.dt <= 0.0 || s.oversample <= 0.0 {
                        return invalid("pathint: dt and oversample must be positive");
                    }
                }
                Method::Exact => {
                    let s = self.exact.as_ref().ok_or_else(|| missing("exact"))?;
                    finite("exact.domain", s.domain[0])?;
                    finite("exact.domain", s.domain[1])?;
                    if let Some(e) = s.e_cutoff {
                        finite("exact.e_cutoff", e)?;
                    }
                    if !(s.domain[1] > s.domain[0]) || s.n_grid < 3 {
                        return invalid("exact: domain must be increasing and n_grid ≥ 3");
                    }
                    if !(0.0..1.0).contains(&s.taper) {
                        return invalid(format!("exact: taper = {} must lie in [0, 1)", s.taper));
                    }
                }
                Method::All => unreachable!(),
            }
        }
        Ok(())
    }

    /// Output window at time t.
    pub fn grid_at(&self, pot: &PolynomialPotential, t: f64) -> Result<GridSpec> {
        let g = &self.grid;
        match g.center {
            GridCenter::Classical => {
                let dt = self.pathint.as_ref().map_or(d_pi_dt(), |s| s.dt);
                let r_cl = classical::integrate(pot, self.r_prime(), t, dt)?.final_state();
                GridSpec::centered(r_cl, g.half_p.unwrap_or(0.0), g.half_q.unwrap_or(0.0), g.np, g.nq)
            }
            GridCenter::Absolute => {
                let (p, q) = (g.p_range.unwrap_or_default(), g.q_range.unwrap_or_default());
                GridSpec::new((p[0], p[1]), g.np, (q[0], q[1]), g.nq)
            }
        }
    }

    pub fn pathint_options(&self) -> PathintOptions {
        let s = self.pathint.clone().unwrap_or_default();
        PathintOptions {
            route: s.route,
            dt: s.dt,
            guard: GuardWindow { taper_start: s.taper_start, band_limit: (s.band_limit > 0.0).then_some(s.band_limit) },
            oversample: s.oversample,
            n_alpha: s.n_alpha,
            n_beta: s.n_beta,
        }
    }

    fn vanvleck_options(&self, s: &VanVleckSection, rho_max: f64) -> Result<VanVleckOptions> {
        Ok(VanVleckOptions {
            n_radii: s.n_radii,
            n_angles: s.n_angles,
            rho_max,
            smoothing_radius: s.smoothing_radius,
            eps_caustic: s.eps_caustic,
            eps_jacobian: s.eps_jacobian,
            dt: s.dt,
        })
    }
}

fn missing(block: &str) -> Error {
    Error::InvalidArgument(format!("method needs a [{block}] block"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMetrics {
    pub rel_l2: f64,
    pub pearson_corr: f64,
    pub peak_offset_cells: (usize, usize),
    pub masked_fraction: f64,
    pub mass_a: f64,
    pub mass_b: f64,
}

/// Pairwise metrics over the cells where `mask` is zero.
pub fn compare_fields(a: &PhaseSpaceField, b: &PhaseSpaceField, mask: Option<&PhaseSpaceField>) -> Result<ComparisonMetrics> {
    if !a.grid.same_as(&b.grid) || a.values.len() != b.values.len() {
        return invalid("compare_fields: grids differ");
    }
    if let Some(m) = mask {
        if !m.grid.same_as(&a.grid) || m.values.len() != a.values.len() {
            return invalid("compare_fields: mask grid differs");
        }
    }
    let keep: Vec<bool> = match mask {
        Some(m) => m.values.iter().map(|&v| v == 0.0).collect(),
        None => vec![true; a.values.len()],
    };
    let kept = keep.iter().filter(|&&k| k).count();
    let masked_fraction = 1.0 - kept as f64 / a.values.len() as f64;

    let pairs = || a.values.iter().zip(&b.values).zip(&keep).filter(|(_, &k)| k).map(|(v, _)| (*v.0, *v.1));
    let (mut na, mut nb, mut nd) = (0.0, 0.0, 0.0);
    for (x, y) in pairs() {
        na += x * x;
        nb += y * y;
        nd += (x - y) * (x - y);
    }
    let denom = na.max(nb).sqrt();
    let rel_l2 = if denom > 0.0 { nd.sqrt() / denom } else { 0.0 };

    let n = kept.max(1) as f64;
    let (ma, mb) = pairs().fold((0.0, 0.0), |(s, t), (x, y)| (s + x, t + y));
    let (ma, mb) = (ma / n, mb / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in pairs() {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let pearson_corr = if saa > 0.0 && sbb > 0.0 { (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0) } else { f64::NAN };

    let peak = |f: &PhaseSpaceField| {
        let mut best = (0usize, -1.0f64);
        for (k, v) in f.values.iter().enumerate() {
            if keep[k] && v.abs() > best.1 {
                best = (k, v.abs());
            }
        }
        (best.0 % f.grid.np, best.0 / f.grid.np)
    };
    let (pa, pb) = (peak(a), peak(b));
    Ok(ComparisonMetrics {
        rel_l2,
        pearson_corr,
        peak_offset_cells: (pa.0.abs_diff(pb.0), pa.1.abs_diff(pb.1)),
        masked_fraction,
        mass_a: a.mass(),
        mass_b: b.mass(),
    })
}

/// Text grid: three header lines, then one row per q (ascending) holding
/// every p (ascending), 17 significant digits.
pub fn write_field_text<W: Write>(field: &PhaseSpaceField, mut w: W) -> std::io::Result<()> {
    let g = &field.grid;
    writeln!(w, "# {:.17e} {:.17e} {}", g.p_min, g.p_max, g.np)?;
    writeln!(w, "# {:.17e} {:.17e} {}", g.q_min, g.q_max, g.nq)?;
    writeln!(w, "# frame {}", field.frame.describe())?;
    let mut line = String::new();
    for j in 0..g.nq {
        line.clear();
        for i in 0..g.np {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{:.16e}", field.get(i, j)).unwrap();
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_field_text<R: BufRead>(r: R) -> Result<PhaseSpaceField> {
    let mut lines = r.lines();
    let mut header = |what: &str| -> Result<String> {
        match lines.next() {
            Some(l) => {
                let l = l?;
                l.strip_prefix('#').map(|s| s.trim().to_string()).ok_or_else(|| Error::InvalidArgument(format!("field file: expected {what} header, got '{l}'")))
            }
            None => invalid(format!("field file: missing {what} header")),
        }
    };
    let range = |s: String| -> Result<(f64, f64, usize)> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != 3 {
            return invalid(format!("field file: bad range header '{s}'"));
        }
        let bad = || Error::InvalidArgument(format!("field file: bad range header '{s}'"));
        Ok((parts[0].parse().map_err(|_| bad())?, parts[1].parse().map_err(|_| bad())?, parts[2].parse().map_err(|_| bad())?))
    };
    let (p0, p1, np) = range(header("p range")?)?;
    let (q0, q1, nq) = range(header("q range")?)?;
    let frame_line = header("frame")?;
    let frame = Frame::parse(frame_line.strip_prefix("frame").unwrap_or(&frame_line))?;
    let grid = GridSpec::new((p0, p1), np, (q0, q1), nq)?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|x| x.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("field file: bad value '{x}'"))))
            .collect::<Result<_>>()?;
        if row.len() != np {
            return invalid(format!("field file: row with {} values, expected {np}", row.len()));
        }
        values.extend(row);
    }
    if values.len() != grid.len() {
        return invalid(format!("field file: {} rows, expected {nq}", values.len() / np.max(1)));
    }
    Ok(PhaseSpaceField { grid, values, frame })
}

pub fn read_field(path: &Path) -> Result<PhaseSpaceField> {
    let f = std::fs::File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    read_field_text(BufReader::new(f)).map_err(|e| e.context(path.display().to_string()))
}

/// Diverging colour for v ∈ [−1, 1]: red ramp, white, blue ramp.
pub fn diverging_rgb(v: f64) -> [u8; 3] {
    let x = v.clamp(-1.0, 1.0);
    let fade = (255.0 * (1.0 - x.abs())).round() as u8;
    if x > 0.0 {
        [fade, fade, 255]
    } else if x < 0.0 {
        [255, fade, fade]
    } else {
        [255, 255, 255]
    }
}

/// Binary P6 image, p along the width, q increasing upwards.
pub fn write_ppm<W: Write>(field: &PhaseSpaceField, mut w: W) -> std::io::Result<()> {
    let g = &field.grid;
    let scale = field.max_abs();
    write!(w, "P6\n{} {}\n255\n", g.np, g.nq)?;
    let mut buf = Vec::with_capacity(3 * g.len());
    for j in (0..g.nq).rev() {
        for i in 0..g.np {
            let v = if scale > 0.0 { field.get(i, j) / scale } else { 0.0 };
            buf.extend_from_slice(&diverging_rgb(v));
        }
    }
    w.write_all(&buf)
}

/// Writes `<stem>.txt` and optionally `<stem>.ppm`; returns the paths written.
pub fn emit_field(field: &PhaseSpaceField, stem: &Path, text: bool, heatmap: bool) -> Result<Vec<PathBuf>> {
    // Stems such as `pathint_t0.25` already contain a dot.
    let with_ext = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    let mut out = Vec::new();
    if text {
        let p = with_ext("txt");
        let mut w = BufWriter::new(std::fs::File::create(&p)?);
        write_field_text(field, &mut w)?;
        w.flush()?;
        out.push(p);
    }
    if heatmap {
        let p = with_ext("ppm");
        let mut w = BufWriter::new(std::fs::File::create(&p)?);
        write_ppm(field, &mut w)?;
        w.flush()?;
        out.push(p);
    }
    Ok(out)
}

/// Per-field summary recorded in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldEntry {
    pub method: Method,
    pub t: f64,
    pub seconds: f64,
    pub r_cl: PhasePoint,
    pub grid: GridSpec,
    pub mass: f64,
    pub abs_mass: f64,
    pub min_value: f64,
    pub peak_cell: (usize, usize),
    pub r_cl_cell: Option<(usize, usize)>,
    pub rms_radius: f64,
    /// Variance along the unstable eigenvector of M, when M is hyperbolic.
    pub unstable_variance: Option<f64>,
    pub files: Vec<PathBuf>,
    #[serde(default)]
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairMetrics {
    pub a: Method,
    pub b: Method,
    pub t: f64,
    pub metrics: ComparisonMetrics,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub version: String,
    pub config: ScenarioConfig,
    pub fields: Vec<FieldEntry>,
    pub comparisons: Vec<PairMetrics>,
    pub warnings: Vec<String>,
    pub trajectories: Vec<PathBuf>,
    pub total_seconds: f64,
}

/// Everything a run produced, fields included.
pub struct RunOutput {
    pub manifest: RunManifest,
    pub manifest_path: Option<PathBuf>,
    pub fields: Vec<(Method, f64, PhaseSpaceField)>,
    pub masks: Vec<(f64, PhaseSpaceField)>,
    pub pair_sets: Vec<(f64, vanvleck::PairSet)>,
}

impl RunOutput {
    pub fn field(&self, method: Method, t: f64) -> Option<&PhaseSpaceField> {
        self.fields.iter().find(|(m, s, _)| *m == method && *s == t).map(|x| &x.2)
    }
}

fn time_tag(t: f64, many: bool) -> String {
    if many {
        format!("_t{t}")
    } else {
        String::new()
    }
}

struct ExactState {
    basis: exact::SpectralBasis,
}

fn build_exact(cfg: &ScenarioConfig, pot: &PolynomialPotential, warnings: &mut Vec<String>) -> Result<ExactState> {
    let s = cfg.exact.as_ref().ok_or_else(|| missing("exact"))?;
    let r = cfg.r_prime();
    let e_cut = s.e_cutoff.unwrap_or_else(|| exact::default_e_cutoff(pot, r, cfg.hbar));
    let domain = (s.domain[0], s.domain[1]);
    let basis = exact::solve_eigenbasis_cached(pot, domain, s.n_grid, cfg.hbar, e_cut, s.cache.as_deref())
        .map_err(|e| e.context(format!("exact (domain = {domain:?}, n_grid = {}, e_cutoff = {e_cut})", s.n_grid)))?
        .with_taper(s.taper);
    exact::check_domain(&basis, pot, r).map_err(|e| e.context(format!("exact (domain = {domain:?})")))?;
    let x: Vec<f64> = (0..basis.n_grid).map(|i| basis.q(i)).collect();
    let psi = exact::coherent_state(r, cfg.hbar, 1.0, &x);
    let margin = exact::WALL_MARGIN_WAVELENGTHS * exact::local_wavelength(&basis, pot, r);
    for t in cfg.times() {
        let leak = exact::wall_leakage(&basis, &psi, t, margin)?;
        if leak > 1e-4 {
            warnings.push(format!("exact: coherent probe leaks {leak:.2e} of its norm into the wall margin at t = {t}"));
        }
    }
    Ok(ExactState { basis })
}

fn unstable_direction(traj: &TrajectoryRecord) -> Option<[f64; 2]> {
    let m = traj.final_monodromy();
    if m.trace().abs() <= 2.0 {
        return None;
    }
    m.real_eigen().map(|e| {
        let v = e[0].1;
        let n = v[0].hypot(v[1]);
        [v[0] / n, v[1] / n]
    })
}

/// Computes the requested fields for every time, compares them when more
/// than one method ran, and writes files plus `manifest.json` when
/// `write` is set.
pub fn run_scenario(cfg: &ScenarioConfig, write: bool) -> Result<RunOutput> {
    let started = Instant::now();
    cfg.validate().map_err(|e| e.context(format!("scenario '{}'", cfg.name)))?;
    let pot = cfg.potential()?;
    let r = cfg.r_prime();
    let times = cfg.times();
    let many = times.len() > 1;
    let dir = &cfg.output.dir;
    if write {
        std::fs::create_dir_all(dir)?;
    }
    let mut warnings = Vec::new();
    let methods = cfg.method.expand();
    let exact_state = if methods.contains(&Method::Exact) { Some(build_exact(cfg, &pot, &mut warnings)?) } else { None };

    let mut entries = Vec::new();
    let mut fields = Vec::new();
    let mut masks = Vec::new();
    let mut pair_sets = Vec::new();
    let mut comparisons = Vec::new();
    let mut trajectories = Vec::new();
    let pi_opts = cfg.pathint_options();
    for &t in &times {
        let grid = cfg.grid_at(&pot, t)?;
        let traj = classical::integrate(&pot, r, t, pi_opts.dt).map_err(|e| e.context(format!("classical (t = {t})")))?;
        let r_cl = traj.final_state();
        if write && cfg.output.trajectory {
            let p = dir.join(format!("trajectory{}.txt", time_tag(t, many)));
            let mut w = BufWriter::new(std::fs::File::create(&p)?);
            classical::write_trajectory(&traj, &mut w)?;
            w.flush()?;
            trajectories.push(p);
        }
        let unstable = unstable_direction(&traj);
        let mut mask = None;
        let mut at_t: Vec<(Method, PhaseSpaceField)> = Vec::new();
        for &m in &methods {
            let clock = Instant::now();
            let (field, details) = match m {
                Method::Exact => {
                    let b = &exact_state.as_ref().unwrap().basis;
                    let f = exact::wigner_propagator_exact(b, &pot, r, t, &grid).map_err(|e| e.context(format!("exact (t = {t})")))?;
                    let d = serde_json::json!({
                        "n_grid": b.n_grid, "states_kept": b.n_kept(), "e_cutoff": b.e_cutoff, "taper": b.taper,
                        "trace": exact::propagator_trace(b, r),
                    });
                    (f, d)
                }
                Method::Pathint => {
                    let coeffs = classical::coefficients(&traj, &pot, cfg.hbar, pi_opts.route).map_err(|e| e.context(format!("pathint (route = {:?})", pi_opts.route)))?;
                    let f = pathint::spot_for(&traj, &coeffs, &grid, &pi_opts).map_err(|e| e.context(format!("pathint (t = {t})")))?;
                    (f, serde_json::json!({ "coefficients": coeffs.as_array(), "route": pi_opts.route }))
                }
                Method::Vanvleck => {
                    let s = cfg.vanvleck.as_ref().unwrap();
                    let rho = match s.rho_max {
                        Some(v) => v,
                        None => {
                            let reach = 1.5 * cfg.grid_half_extent(&grid);
                            vanvleck::auto_rho_max(&pot, r, t, s.dt, reach).map_err(|e| e.context("vanvleck (rho_max)"))?
                        }
                    };
                    let opts = cfg.vanvleck_options(s, rho)?;
                    let (f, set) = vanvleck::spot(&pot, r, t, cfg.hbar, &grid, &opts)
                        .map_err(|e| e.context(format!("vanvleck (n_radii = {}, n_angles = {}, rho_max = {rho})", opts.n_radii, opts.n_angles)))?;
                    let mk = vanvleck::caustic_mask(&set, &grid, opts.smoothing_radius)?;
                    let d = serde_json::json!({
                        "rho_max": rho, "n_radii": opts.n_radii, "n_angles": opts.n_angles,
                        "extremum": set.count(vanvleck::Sheet::Extremum),
                        "saddle": set.count(vanvleck::Sheet::Saddle),
                        "caustic": set.count(vanvleck::Sheet::Caustic),
                    });
                    mask = Some(mk);
                    pair_sets.push((t, set));
                    (f, d)
                }
                Method::All => unreachable!(),
            };
            let seconds = clock.elapsed().as_secs_f64();
            let files = if write && (cfg.output.csv || cfg.output.heatmap) {
                let stem = dir.join(format!("{}{}", m.name(), time_tag(t, many)));
                emit_field(&field, &stem, cfg.output.csv, cfg.output.heatmap)?
            } else {
                vec![]
            };
            entries.push(FieldEntry {
                method: m,
                t,
                seconds,
                r_cl,
                grid,
                mass: field.mass(),
                abs_mass: field.abs_mass(),
                min_value: field.min_value(),
                peak_cell: field.argmax_abs(),
                r_cl_cell: grid.cell_of(&r_cl),
                rms_radius: field.rms_radius(&r_cl),
                unstable_variance: unstable.map(|d| field.directional_variance(&r_cl, d)),
                files,
                details,
            });
            at_t.push((m, field));
        }
        if at_t.len() > 1 {
            // A mask over the whole grid (Liouville limit) leaves nothing to
            // compare, so the comparison then runs unmasked.
            let usable = mask.as_ref().filter(|m| m.values.iter().any(|&v| v == 0.0));
            if mask.is_some() && usable.is_none() {
                warnings.push(format!("vanvleck caustic mask covers the whole grid at t = {t}; comparing unmasked"));
            }
            for x in 0..at_t.len() {
                for y in x + 1..at_t.len() {
                    let metrics = compare_fields(&at_t[x].1, &at_t[y].1, usable)?;
                    let flagged = metrics.masked_fraction >= MASKED_FRACTION_FLAG;
                    if flagged {
                        warnings.push(format!(
                            "{} vs {} at t = {t}: masked fraction {:.3} ≥ {MASKED_FRACTION_FLAG}",
                            at_t[x].0.name(),
                            at_t[y].0.name(),
                            metrics.masked_fraction
                        ));
                    }
                    comparisons.push(PairMetrics { a: at_t[x].0, b: at_t[y].0, t, metrics, flagged });
                }
            }
        }
        if let Some(mk) = mask {
            if write && cfg.output.csv && methods.len() > 1 {
                let stem = dir.join(format!("caustic_mask{}", time_tag(t, many)));
                emit_field(&mk, &stem, true, false)?;
            }
            masks.push((t, mk));
        }
        fields.extend(at_t.into_iter().map(|(m, f)| (m, t, f)));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let manifest = RunManifest {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        fields: entries,
        comparisons,
        warnings,
        trajectories,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    let manifest_path = if write {
        let p = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InvalidArgument(format!("manifest: {e}")))?;
        std::fs::write(&p, text + "\n")?;
        Some(p)
    } else {
        None
    };
    Ok(RunOutput { manifest, manifest_path, fields, masks, pair_sets })
}

impl ScenarioConfig {
    fn grid_half_extent(&self, grid: &GridSpec) -> f64 {
        0.5 * (grid.p_max - grid.p_min).max(grid.q_max - grid.q_min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for (name, _) in PRESETS {
            let cfg = ScenarioConfig::preset(name).unwrap();
            assert_eq!(&cfg.name, name);
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn colour_ends() {
        assert_eq!(diverging_rgb(0.0), [255, 255, 255]);
        assert_eq!(diverging_rgb(1.0), [0, 0, 255]);
        assert_eq!(diverging_rgb(-1.0), [255, 0, 0]);
    }
}
