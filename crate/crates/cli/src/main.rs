use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bornrate::bound::{moment_ratio, BoundConstants, Origin};
use bornrate::density::{DensityModel, Recentered};
use bornrate::harness::{
    emit_report, geometric_grid, ingest_events, replicate_with, sweep_with, write_atomically, Experiment, ExperimentConfig,
    ReportFormat,
};
use bornrate::madelung::{
    advect_trajectories, decompose_polar, ks_distance, simulate, write_polar_csv, write_trajectories_csv, write_wave_csv,
    MadelungConfig, PolarField, Preset, Propagator, ResidualRecord, TrajectoryEnsemble,
};
use bornrate::quadrature::central_moment;
use bornrate::sampler::{save_events, sample_from_table, RngSeed};
use bornrate::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Relative output paths are resolved under this directory when it is set.
const OUT_DIR_ENV: &str = "BORNRATE_OUT_DIR";

#[derive(Parser)]
#[command(name = "bornrate", version, about = "Born-rule frequency bounds and Madelung diagnostics for the double slit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the double-slit intensity over the detector interval
    Density {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Output CSV with columns t_mm,intensity
        #[arg(long, default_value = "density.csv")]
        out: PathBuf,
        /// Number of evenly spaced samples, endpoints included
        #[arg(long, default_value_t = 1001)]
        points: usize,
    },
    /// Mass, second and absolute third moments about the pattern center
    Moments {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Output JSON
        #[arg(long, default_value = "moments.json")]
        out: PathBuf,
    },
    /// Right-hand sides of the bound, optionally divided by sqrt(N)
    Bound {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Detection count for the 1/sqrt(N) form
        #[arg(long)]
        n: Option<u64>,
        /// Output JSON
        #[arg(long, default_value = "bound.json")]
        out: PathBuf,
    },
    /// Draw synthetic detections from the density
    Sample {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Number of detections
        #[arg(long)]
        n: usize,
        /// Seed for the random stream
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV with columns index,t_mm
        #[arg(long, default_value = "events.csv")]
        out: PathBuf,
    },
    /// Check a detection file against the bound (exit 1 if a literal verdict fails)
    Verify {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Input CSV with columns index,t_mm
        #[arg(long)]
        events: PathBuf,
        /// Number of equal-width bins
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// End of the interval bin numbering starts from
        #[arg(long, value_enum, default_value_t = OriginArg::FromA)]
        origin: OriginArg,
        /// Output JSON
        #[arg(long, default_value = "verify.json")]
        out: PathBuf,
    },
    /// Run the replication grid (exit 1 if any literal verdict fails)
    Replicate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Output report; format follows --format, or the extension when omitted
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Report format
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Fit the decay of the median sup-deviation against N
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Smallest detection count
        #[arg(long, default_value_t = 100)]
        n_min: u64,
        /// Largest detection count
        #[arg(long, default_value_t = 100_000)]
        n_max: u64,
        /// Number of grid points between n-min and n-max
        #[arg(long, default_value_t = 10)]
        grid_points: usize,
        /// Number of consecutive seeds per N
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// First seed
        #[arg(long, default_value_t = 0)]
        seed_start: u64,
        /// Output JSON
        #[arg(long, default_value = "sweep.json")]
        out: PathBuf,
    },
    /// Evolve a wave function and record Madelung residuals (exit 3 on instability)
    Madelung {
        #[command(flatten)]
        sim: SimulationArgs,
        /// Number of time steps
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Steps between snapshots; the last step is always written
        #[arg(long, default_value_t = 10)]
        snapshot_every: usize,
        /// Directory for snapshot CSVs and residuals.json
        #[arg(long, default_value = "madelung")]
        out_dir: PathBuf,
    },
    /// Advect a trajectory ensemble along the phase gradient (exit 3 on instability)
    Trajectories {
        #[command(flatten)]
        sim: SimulationArgs,
        /// Number of time steps
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Steps between snapshots; the last step is always written
        #[arg(long, default_value_t = 10)]
        snapshot_every: usize,
        /// Number of trajectories
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        /// Seed for the random stream
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for trajectory CSVs and trajectories.json
        #[arg(long, default_value = "trajectories")]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in experiment config, used when --config is omitted
    #[arg(long, value_enum, default_value_t = ExperimentPreset::Replication, conflicts_with = "config")]
    preset: ExperimentPreset,
}

#[derive(Args)]
struct SimulationArgs {
    /// Madelung config JSON (grid, potential, initial_state)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in simulation, used when --config is omitted
    #[arg(long, value_enum, default_value_t = SimPreset::PlaneWave, conflicts_with = "config")]
    preset: SimPreset,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentPreset {
    Replication,
    FigureBuildup,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimPreset {
    PlaneWave,
    FreeGaussian,
    HarmonicGround,
    DoubleSlitScreen,
}

#[derive(Clone, Copy, ValueEnum)]
enum OriginArg {
    FromA,
    FromB,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnstableStep { .. }
            | Error::TimeStepTooLarge { .. }
            | Error::NonConvergence { .. }
            | Error::NonFiniteIntegrand { .. }
            | Error::RootBracketFailure { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Density { exp, out, points } => density(&exp, &out, points),
        Command::Moments { exp, out } => moments(&exp, &out),
        Command::Bound { exp, n, out } => bound(&exp, n, &out),
        Command::Sample { exp, n, seed, out } => sample(&exp, n, seed, &out),
        Command::Verify {
            exp,
            events,
            bins,
            origin,
            out,
        } => verify(&exp, &events, bins, origin, &out),
        Command::Replicate { exp, out, format } => replicate(&exp, &out, format),
        Command::Sweep {
            exp,
            n_min,
            n_max,
            grid_points,
            seeds,
            seed_start,
            out,
        } => {
            let seeds: Vec<u64> = (seed_start..seed_start + seeds).collect();
            sweep(&exp, geometric_grid(n_min, n_max, grid_points), &seeds, &out)
        }
        Command::Madelung {
            sim,
            steps,
            snapshot_every,
            out_dir,
        } => madelung(&sim, steps, snapshot_every, &out_dir),
        Command::Trajectories {
            sim,
            steps,
            snapshot_every,
            count,
            seed,
            out_dir,
        } => trajectories(&sim, steps, snapshot_every, count, seed, &out_dir),
    }
}

fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn config_failure(path: &Path, e: Error) -> Failure {
    let mut f = Failure::from(e);
    f.message = format!("config {}: {}", path.display(), f.message);
    f
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| config_failure(path, e)),
        None => Ok(match args.preset {
            ExperimentPreset::Replication => ExperimentConfig::default(),
            ExperimentPreset::FigureBuildup => ExperimentConfig::figure_buildup(),
        }),
    }
}

fn simulation_config(args: &SimulationArgs) -> Result<MadelungConfig, Failure> {
    match &args.config {
        Some(path) => MadelungConfig::load(path).map_err(|e| config_failure(path, e)),
        None => Ok(match args.preset {
            SimPreset::PlaneWave => Preset::PlaneWave,
            SimPreset::FreeGaussian => Preset::FreeGaussian,
            SimPreset::HarmonicGround => Preset::HarmonicGround,
            SimPreset::DoubleSlitScreen => Preset::DoubleSlitScreen,
        }
        .config()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let path = out_path(path);
    ensure_parent(&path)?;
    write_atomically(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    Ok(())
}

fn density(args: &ExperimentArgs, out: &Path, points: usize) -> Outcome {
    if points < 2 {
        return Err(Failure {
            code: 2,
            message: "--points must be at least 2".into(),
        });
    }
    let cfg = experiment_config(args)?;
    let d = cfg.density()?;
    let iv = cfg.event_interval()?;
    let path = out_path(out);
    ensure_parent(&path)?;
    write_atomically(&path, |w| {
        writeln!(w, "t_mm,intensity")?;
        for i in 0..points {
            let t = if i + 1 == points {
                iv.hi
            } else {
                iv.lo + iv.width() * i as f64 / (points - 1) as f64
            };
            writeln!(w, "{t:?},{:?}", d.evaluate(t))?;
        }
        Ok(())
    })?;
    Ok(true)
}

#[derive(Serialize)]
struct MomentSummary {
    center_mm: f64,
    a_mm: f64,
    b_mm: f64,
    mass: f64,
    second: f64,
    third_abs: f64,
    sigma: f64,
    rho: f64,
    moment_ratio: f64,
}

fn moments(args: &ExperimentArgs, out: &Path) -> Outcome {
    let cfg = experiment_config(args)?;
    let d = cfg.density()?;
    let center = cfg.geometry.center_mm;
    let centered = Recentered { inner: &d, center };
    let miv = cfg.moment_interval()?;
    let iv = miv.relative_to(center);
    let q = &cfg.quadrature;
    let mass = bornrate::density::total_mass(&centered, iv, q)?;
    let second = central_moment(&centered, 2, false, iv, q)?;
    let third_abs = central_moment(&centered, 3, true, iv, q)?;
    let summary = MomentSummary {
        center_mm: center,
        a_mm: miv.lo,
        b_mm: miv.hi,
        mass,
        second,
        third_abs,
        sigma: (second / mass).sqrt(),
        rho: third_abs / mass,
        moment_ratio: moment_ratio(&centered, iv, q)?,
    };
    write_json(out, &summary)?;
    Ok(true)
}

#[derive(Serialize)]
struct BoundSummary {
    #[serde(flatten)]
    constants: BoundConstants,
    rhs_lower_const: f64,
    rhs_upper_const: f64,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[serde(rename = "rhs_with_sqrtN_lower", skip_serializing_if = "Option::is_none")]
    rhs_with_sqrt_n_lower: Option<f64>,
    #[serde(rename = "rhs_with_sqrtN_upper", skip_serializing_if = "Option::is_none")]
    rhs_with_sqrt_n_upper: Option<f64>,
}

fn bound(args: &ExperimentArgs, n: Option<u64>, out: &Path) -> Outcome {
    if n == Some(0) {
        return Err(Failure {
            code: 2,
            message: "--n must be at least 1".into(),
        });
    }
    let cfg = experiment_config(args)?;
    let d = cfg.density()?;
    let e = Experiment::prepare(&d, cfg.geometry.center_mm, &cfg)?;
    let c = e.constants;
    let lower = c.lower_constant * c.moment_ratio;
    let upper = c.upper_constant * c.moment_ratio;
    let root_n = n.map(|n| (n as f64).sqrt());
    let summary = BoundSummary {
        constants: c,
        rhs_lower_const: lower,
        rhs_upper_const: upper,
        n,
        rhs_with_sqrt_n_lower: root_n.map(|r| lower / r),
        rhs_with_sqrt_n_upper: root_n.map(|r| upper / r),
    };
    write_json(out, &summary)?;
    Ok(true)
}

fn sample(args: &ExperimentArgs, n: usize, seed: u64, out: &Path) -> Outcome {
    let cfg = experiment_config(args)?;
    let d = cfg.density()?;
    let e = Experiment::prepare(&d, cfg.geometry.center_mm, &cfg)?;
    let events = sample_from_table(&e.table, n, RngSeed(seed))?;
    let path = out_path(out);
    ensure_parent(&path)?;
    save_events(&events, &path)?;
    Ok(true)
}

fn verify(args: &ExperimentArgs, events: &Path, bins: usize, origin: OriginArg, out: &Path) -> Outcome {
    let cfg = experiment_config(args)?;
    let d = cfg.density()?;
    let e = Experiment::prepare(&d, cfg.geometry.center_mm, &cfg)?;
    let events = ingest_events(events, cfg.event_interval()?)?;
    let origin = match origin {
        OriginArg::FromA => Origin::FromA,
        OriginArg::FromB => Origin::FromB,
    };
    let report = e.verify_events(&events, bins, origin)?;
    write_json(out, &report)?;
    Ok(report.verdicts.literal_pass())
}

fn replicate(args: &ExperimentArgs, out: &Path, format: Option<FormatArg>) -> Outcome {
    let cfg = experiment_config(args)?;
    let d = cfg.density()?;
    let report = replicate_with(&d, cfg.geometry.center_mm, &cfg)?;
    let format = match format {
        Some(FormatArg::Json) => ReportFormat::Json,
        Some(FormatArg::Csv) => ReportFormat::Csv,
        None if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => ReportFormat::Csv,
        None => ReportFormat::Json,
    };
    let path = out_path(out);
    ensure_parent(&path)?;
    emit_report(&report, format, &path)?;
    Ok(report.all_literal_pass())
}

fn sweep(args: &ExperimentArgs, grid: Vec<u64>, seeds: &[u64], out: &Path) -> Outcome {
    let cfg = experiment_config(args)?;
    let d = cfg.density()?;
    let report = sweep_with(&d, cfg.geometry.center_mm, &cfg, &grid, seeds)?;
    write_json(out, &report.fits)?;
    Ok(true)
}

#[derive(Serialize)]
struct ResidualSummary<'a> {
    config: &'a MadelungConfig,
    steps: usize,
    snapshot_every: usize,
    snapshots: Vec<usize>,
    residuals: Vec<ResidualRecord>,
}

fn write_csv_file<F>(path: &Path, write: F) -> Result<(), Failure>
where
    F: FnOnce(&mut std::io::BufWriter<&mut std::fs::File>) -> bornrate::Result<()>,
{
    write_atomically(path, write)?;
    Ok(())
}

fn madelung(args: &SimulationArgs, steps: usize, snapshot_every: usize, out_dir: &Path) -> Outcome {
    let cfg = simulation_config(args)?;
    let dir = out_path(out_dir);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    let mut snapshots = Vec::new();
    let residuals = simulate(&cfg, steps, snapshot_every, |step, w, p| {
        write_atomically(&dir.join(format!("psi_{step:06}.csv")), |f| write_wave_csv(w, &mut *f))?;
        write_atomically(&dir.join(format!("polar_{step:06}.csv")), |f| write_polar_csv(p, &mut *f))?;
        snapshots.push(step);
        Ok(())
    })?;
    let summary = ResidualSummary {
        config: &cfg,
        steps,
        snapshot_every,
        snapshots,
        residuals,
    };
    write_json(&dir.join("residuals.json"), &summary)?;
    Ok(true)
}

#[derive(Serialize)]
struct TrajectorySnapshot {
    step: usize,
    time: f64,
    ks_distance: f64,
    frozen: usize,
}

#[derive(Serialize)]
struct TrajectorySummary<'a> {
    config: &'a MadelungConfig,
    steps: usize,
    count: usize,
    seed: u64,
    snapshots: Vec<TrajectorySnapshot>,
    /// Trajectories that entered the node mask, with the step they were frozen at.
    collisions: Vec<(usize, usize)>,
}

fn trajectories(args: &SimulationArgs, steps: usize, snapshot_every: usize, count: usize, seed: u64, out_dir: &Path) -> Outcome {
    if snapshot_every == 0 {
        return Err(Failure {
            code: 2,
            message: "--snapshot-every must be at least 1".into(),
        });
    }
    let cfg = simulation_config(args)?;
    let dir = out_path(out_dir);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    let mut prop = Propagator::new(cfg.grid, &cfg.potential)?;
    let mut w = cfg.initial_state.build(cfg.grid)?;
    let mut now = decompose_polar(&w);
    let mut ensemble = TrajectoryEnsemble::sample(&now, count, RngSeed(seed))?;
    let mut snapshots = Vec::new();
    let mut collisions = Vec::new();
    let mut record = |step: usize, e: &TrajectoryEnsemble, p: &PolarField| -> Result<(), Failure> {
        write_csv_file(&dir.join(format!("trajectories_{step:06}.csv")), |f| write_trajectories_csv(e, &mut *f))?;
        snapshots.push(TrajectorySnapshot {
            step,
            time: e.time,
            ks_distance: ks_distance(e, p)?,
            frozen: e.frozen_count(),
        });
        Ok(())
    };
    record(0, &ensemble, &now)?;
    for step in 1..=steps {
        prop.step(&mut w)?;
        let next = decompose_polar(&w);
        let a = advect_trajectories(&ensemble, &now, &next)?;
        collisions.extend(a.collisions.iter().map(|&i| (i, step)));
        ensemble = a.ensemble;
        now = next;
        if step % snapshot_every == 0 || step == steps {
            record(step, &ensemble, &now)?;
        }
    }
    let summary = TrajectorySummary {
        config: &cfg,
        steps,
        count,
        seed,
        snapshots,
        collisions,
    };
    write_json(&dir.join("trajectories.json"), &summary)?;
    Ok(true)
}
