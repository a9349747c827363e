use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use wigprop::classical::{self, CoefficientRoute};
use wigprop::harness::{self, ExactSection, Method, PathintSection, RunOutput, ScenarioConfig, VanVleckSection};
use wigprop::{Error, Result};

#[derive(Parser)]
#[command(name = "wigprop", version, about = "Wigner propagators for one-dimensional anharmonic systems")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the classical trajectory from r' with its monodromy.
    Trajectory(ScenarioArgs),
    /// Trajectory-pair (van Vleck) propagator column.
    Vanvleck(ScenarioArgs),
    /// Cubic-phase propagator column.
    Pathint(ScenarioArgs),
    /// Exact propagator column from the spectral basis.
    Exact(ScenarioArgs),
    /// Compare two field files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// 0/1 field file; cells with 1 are excluded.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Run a full scenario.
    Run(ScenarioArgs),
    /// List the built-in presets, or print one.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

/// Flags override the scenario loaded with --config or --preset; with
/// neither, the base scenario is the fig3-elliptic preset.
#[derive(Args, Default)]
struct ScenarioArgs {
    /// TOML scenario file or a run manifest (.json).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    name: Option<String>,
    /// vanvleck, pathint, exact or all (run only).
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, allow_hyphen_values = true)]
    hbar: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    /// Comma-separated time sweep.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    times: Option<Vec<f64>>,
    /// Momentum of r'.
    #[arg(long, allow_hyphen_values = true)]
    p: Option<f64>,
    /// Position of r'.
    #[arg(long, allow_hyphen_values = true)]
    q: Option<f64>,
    /// Comma-separated c_k of V(q) = Σ c_k q^k.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    coefficients: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    mass: Option<f64>,
    #[arg(long)]
    np: Option<usize>,
    #[arg(long)]
    nq: Option<usize>,
    /// Window half-widths around r_cl(t).
    #[arg(long, allow_hyphen_values = true)]
    half_p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    half_q: Option<f64>,
    /// Absolute window, comma-separated min,max.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
    p_range: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
    q_range: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_csv: bool,
    #[arg(long)]
    no_heatmap: bool,
    /// Also dump the classical trajectory.
    #[arg(long)]
    dump_trajectory: bool,

    #[arg(long)]
    n_radii: Option<usize>,
    #[arg(long)]
    n_angles: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    rho_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    smoothing_radius: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eps_caustic: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eps_jacobian: Option<f64>,
    /// Integration step for the trajectory pairs.
    #[arg(long, allow_hyphen_values = true)]
    pair_dt: Option<f64>,

    /// adiabatic or transported.
    #[arg(long)]
    route: Option<CoefficientRoute>,
    /// Integration step for the reference trajectory.
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<f64>,
    #[arg(long)]
    n_alpha: Option<usize>,
    #[arg(long)]
    n_beta: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    oversample: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    taper_start: Option<f64>,
    /// Zero disables the band limit.
    #[arg(long, allow_hyphen_values = true)]
    band_limit: Option<f64>,

    /// Spectral box, comma-separated min,max.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
    domain: Option<Vec<f64>>,
    #[arg(long)]
    n_grid: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    e_cutoff: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    taper: Option<f64>,
    /// Spectral basis cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

impl ScenarioArgs {
    fn scenario(&self, forced: Option<Method>) -> Result<ScenarioConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(path), _) => ScenarioConfig::load(path).map_err(|e| e.context(path.display().to_string()))?,
            (None, Some(name)) => ScenarioConfig::preset(name)?,
            (None, None) => ScenarioConfig::preset("fig3-elliptic")?,
        };
        if let Some(v) = &self.name {
            c.name = v.clone();
        }
        if let Some(m) = forced.or(self.method) {
            c.method = m;
        }
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(self.hbar => c.hbar);
        if let Some(t) = self.t {
            c.t = t;
            c.times = None;
        }
        if self.times.is_some() {
            c.times = self.times.clone();
        }
        set!(self.p => c.r_prime.p);
        set!(self.q => c.r_prime.q);
        set!(self.coefficients => c.potential.coefficients);
        set!(self.mass => c.potential.mass);
        set!(self.np => c.grid.np);
        set!(self.nq => c.grid.nq);
        if self.half_p.is_some() || self.half_q.is_some() {
            c.grid.center = harness::GridCenter::Classical;
            c.grid.half_p = self.half_p.or(c.grid.half_p);
            c.grid.half_q = self.half_q.or(c.grid.half_q);
        }
        if self.p_range.is_some() || self.q_range.is_some() {
            c.grid.center = harness::GridCenter::Absolute;
            c.grid.p_range = self.p_range.as_deref().map(pair).or(c.grid.p_range);
            c.grid.q_range = self.q_range.as_deref().map(pair).or(c.grid.q_range);
        }
        set!(self.out => c.output.dir);
        if self.no_csv {
            c.output.csv = false;
        }
        if self.no_heatmap {
            c.output.heatmap = false;
        }
        if self.dump_trajectory {
            c.output.trajectory = true;
        }

        let methods = c.method.expand();
        if methods.contains(&Method::Vanvleck) || self.n_radii.is_some() {
            let vv = c.vanvleck.get_or_insert_with(|| {
                let d = wigprop::vanvleck::VanVleckOptions::default();
                VanVleckSection {
                    n_radii: d.n_radii,
                    n_angles: d.n_angles,
                    rho_max: None,
                    smoothing_radius: d.smoothing_radius,
                    eps_caustic: d.eps_caustic,
                    eps_jacobian: d.eps_jacobian,
                    dt: d.dt,
                }
            });
            set!(self.n_radii => vv.n_radii);
            set!(self.n_angles => vv.n_angles);
            if self.rho_max.is_some() {
                vv.rho_max = self.rho_max;
            }
            set!(self.smoothing_radius => vv.smoothing_radius);
            set!(self.eps_caustic => vv.eps_caustic);
            set!(self.eps_jacobian => vv.eps_jacobian);
            set!(self.pair_dt => vv.dt);
        }
        {
            let pi = c.pathint.get_or_insert_with(PathintSection::default);
            set!(self.route => pi.route);
            set!(self.dt => pi.dt);
            if self.n_alpha.is_some() {
                pi.n_alpha = self.n_alpha;
            }
            if self.n_beta.is_some() {
                pi.n_beta = self.n_beta;
            }
            set!(self.oversample => pi.oversample);
            set!(self.taper_start => pi.taper_start);
            set!(self.band_limit => pi.band_limit);
        }
        if self.domain.is_some() || self.n_grid.is_some() || c.exact.is_some() {
            let ex = c.exact.get_or_insert_with(|| ExactSection {
                domain: [0.0, 0.0],
                n_grid: 0,
                e_cutoff: None,
                taper: wigprop::exact::DEFAULT_SPECTRAL_TAPER,
                cache: None,
            });
            if let Some(d) = &self.domain {
                ex.domain = pair(d);
            }
            set!(self.n_grid => ex.n_grid);
            if self.e_cutoff.is_some() {
                ex.e_cutoff = self.e_cutoff;
            }
            set!(self.taper => ex.taper);
            if self.cache.is_some() {
                ex.cache = self.cache.clone();
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn report(run: &RunOutput) {
    for e in &run.manifest.fields {
        let files: Vec<String> = e.files.iter().map(|p| p.display().to_string()).collect();
        println!(
            "{:<8} t={:<6} mass={:.6} min={:.4e} peak={:?} r_cl_cell={:?} rms={:.4e} {:.2}s {}",
            e.method.name(),
            e.t,
            e.mass,
            e.min_value,
            e.peak_cell,
            e.r_cl_cell,
            e.rms_radius,
            e.seconds,
            files.join(" ")
        );
    }
    for c in &run.manifest.comparisons {
        let m = &c.metrics;
        println!(
            "{} vs {} t={}: rel_l2={:.4} pearson={:.4} peak_offset={:?} masked={:.3}{}",
            c.a.name(),
            c.b.name(),
            c.t,
            m.rel_l2,
            m.pearson_corr,
            m.peak_offset_cells,
            m.masked_fraction,
            if c.flagged { " FLAGGED" } else { "" }
        );
    }
    for w in &run.manifest.warnings {
        println!("warning: {w}");
    }
    if let Some(p) = &run.manifest_path {
        println!("manifest: {}", p.display());
    }
}

fn trajectory(cfg: &ScenarioConfig) -> Result<()> {
    let pot = cfg.potential()?;
    let dt = cfg.pathint_options().dt;
    std::fs::create_dir_all(&cfg.output.dir)?;
    for t in cfg.times() {
        let traj = classical::integrate(&pot, cfg.r_prime(), t, dt).map_err(|e| e.context(format!("classical (t = {t}, dt = {dt})")))?;
        let name = if cfg.times.is_some() { format!("trajectory_t{t}.txt") } else { "trajectory.txt".into() };
        let path = cfg.output.dir.join(name);
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        classical::write_trajectory(&traj, &mut w)?;
        std::io::Write::flush(&mut w)?;
        let r = traj.final_state();
        let phi = classical::stability_angle(&traj, &pot);
        println!(
            "t={t} r_cl=({:.12}, {:.12}) class={:?} phi={:.8}{:+.8}i det_err={:.3e} energy_drift={:.3e} -> {}",
            r.p,
            r.q,
            classical::classify(&traj, classical::DEFAULT_EPS_CURV),
            phi.re,
            phi.im,
            traj.max_det_error(),
            traj.max_energy_drift(&pot),
            path.display()
        );
    }
    Ok(())
}

fn compare(a: &Path, b: &Path, mask: Option<&Path>) -> Result<()> {
    let fa = harness::read_field(a)?;
    let fb = harness::read_field(b)?;
    let fm = mask.map(harness::read_field).transpose()?;
    let m = harness::compare_fields(&fa, &fb, fm.as_ref())?;
    println!("{}", serde_json::to_string_pretty(&m).map_err(|e| Error::InvalidArgument(e.to_string()))?);
    Ok(())
}

fn run(args: &ScenarioArgs, forced: Option<Method>) -> Result<()> {
    report(&harness::run_scenario(&args.scenario(forced)?, true)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Trajectory(a) => trajectory(&a.scenario(None)?),
        Command::Vanvleck(a) => run(&a, Some(Method::Vanvleck)),
        Command::Pathint(a) => run(&a, Some(Method::Pathint)),
        Command::Exact(a) => run(&a, Some(Method::Exact)),
        Command::Run(a) => run(&a, None),
        Command::Compare { a, b, mask } => compare(&a, &b, mask.as_deref()),
        Command::Presets { show } => {
            match show {
                Some(name) => print!("{}", ScenarioConfig::preset(&name)?.to_toml()),
                None => {
                    for (name, _) in harness::PRESETS {
                        let c = ScenarioConfig::preset(name)?;
                        println!("{name:<20} method={} t={} r'=({}, {})", c.method.name(), c.t, c.r_prime.p, c.r_prime.q);
                    }
                }
            }
            Ok(())
        }
    }
}

/// Reruns the binary with a pinned OpenBLAS kernel when the detected one
/// multiplies matrices wrongly.
fn rerun_with_safe_blas() -> Option<ExitCode> {
    if std::env::var_os("OPENBLAS_CORETYPE").is_some() || wigprop::linalg::blas_ok() {
        return None;
    }
    #[cfg(target_arch = "x86_64")]
    let core = if std::arch::is_x86_feature_detected!("avx2") { "Haswell" } else { "Prescott" };
    #[cfg(not(target_arch = "x86_64"))]
    return None;
    #[cfg(target_arch = "x86_64")]
    {
        log::info!("BLAS self-check failed; rerunning with OPENBLAS_CORETYPE={core}");
        let exe = std::env::current_exe().ok()?;
        let status = std::process::Command::new(exe).args(std::env::args_os().skip(1)).env("OPENBLAS_CORETYPE", core).status().ok()?;
        Some(ExitCode::from(status.code().unwrap_or(1).clamp(0, 255) as u8))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(code) = rerun_with_safe_blas() {
        return code;
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
