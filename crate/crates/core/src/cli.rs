//! `irtul` command line.
//!
//! Exit codes: 0 success, 1 I/O or parse failure, 2 domain or contract
//! failure. Angles are read and printed in degrees.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::localize::{Irtul, LocalizeError, Measurement, Position};
use crate::raytrace::{RayError, RaySegment};
use crate::sim::{self, ExperimentOptions, Method, ScenarioFile, SimError};
use crate::svp::{profile_rmse, read_numeric_csv, ProfileError, SimplificationControl};
use crate::{Config, Svp};

#[derive(Debug, Parser)]
#[command(
    name = "irtul",
    version,
    about = "Stratified-medium ray tracing and iterative underwater localization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Travel time and horizontal range of one ray.
    Trace {
        #[arg(long)]
        svp: PathBuf,
        /// Launch grazing angle in degrees (90 = vertical).
        #[arg(long)]
        angle: f64,
        /// Source depth (m).
        #[arg(long)]
        from: f64,
        /// Receiver depth (m).
        #[arg(long)]
        to: f64,
    },
    /// Launch angle that produces a given travel time or horizontal range.
    Solve {
        #[arg(long)]
        svp: PathBuf,
        #[arg(long, value_enum)]
        mode: SolveMode,
        /// Target travel time (s) or horizontal range (m).
        #[arg(long)]
        value: f64,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Tolerance on the target value; defaults to 10 us or 0.1 m.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Feature-point simplification of a profile.
    Simplify {
        #[arg(long)]
        svp: PathBuf,
        #[arg(long, conflicts_with = "rmse", required_unless_present = "rmse")]
        points: Option<usize>,
        /// Stop once the speed RMSE (m/s) falls below this.
        #[arg(long)]
        rmse: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize one target from a `ref_x,ref_y,ref_z,one_way_time_s` file.
    Localize {
        #[arg(long)]
        svp: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the losses of every iteration.
        #[arg(long)]
        verbose: bool,
    },
    /// Constant-speed vs original vs simplified profile over a scenario.
    Experiment {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        svp: PathBuf,
        /// Feature points of the simplified profile (default: scenario layers + 1).
        #[arg(long)]
        simplify_points: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the scenario's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write 0 for every wall time so outputs are byte-reproducible.
        #[arg(long)]
        no_timing: bool,
        /// Localize targets one at a time.
        #[arg(long)]
        serial: bool,
    },
    /// Mean localization time with the original vs the simplified profile.
    Benchmark {
        #[arg(long)]
        svp: PathBuf,
        #[arg(long, default_value_t = 8)]
        simplify_points: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Scenario file (default: the built-in parameter table).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Number of targets localized per repeat.
        #[arg(long, default_value_t = 10)]
        targets: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveMode {
    Time,
    Range,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value_t = 2.0)]
    pub initial_step: f64,
    #[arg(long, default_value_t = 0.2)]
    pub step_threshold: f64,
    #[arg(long, default_value_t = 10e-6)]
    pub time_tol: f64,
    #[arg(long, default_value_t = 0.1)]
    pub range_tol: f64,
    #[arg(long, default_value_t = 1500.0)]
    pub mean_speed: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
}

impl ConfigArgs {
    fn config(&self) -> Config {
        Config {
            initial_depth_step: self.initial_step,
            depth_step_threshold: self.step_threshold,
            time_tolerance: self.time_tol,
            range_tolerance: self.range_tol,
            mean_speed: self.mean_speed,
            max_iterations: self.max_iterations,
        }
    }
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Domain(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Domain(m) => m,
        }
    }
}

impl From<ProfileError> for CliError {
    fn from(e: ProfileError) -> Self {
        match e {
            ProfileError::Malformed { .. } | ProfileError::Io(_) | ProfileError::BadDepth => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<RayError> for CliError {
    fn from(e: RayError) -> Self {
        match e {
            RayError::Infeasible { theta, min_feasible } => CliError::Domain(format!(
                "launch angle {:.6} deg turns inside the segment; minimum feasible angle is {:.6} deg",
                theta.to_degrees(),
                min_feasible.to_degrees()
            )),
            RayError::Profile(p) => p.into(),
            e => CliError::Domain(e.to_string()),
        }
    }
}

impl From<LocalizeError> for CliError {
    fn from(e: LocalizeError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Parse(_) => CliError::Io(e.to_string()),
            SimError::Profile(p) => p.into(),
            e => CliError::Domain(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_svp(path: &Path) -> Result<Svp, CliError> {
    Ok(Svp::parse_str(&read(path)?)?)
}

/// Parses `ref_x,ref_y,ref_z,one_way_time_s` rows (header optional).
pub fn parse_measurements(text: &str) -> Result<Vec<Measurement<f64>>, ProfileError> {
    Ok(read_numeric_csv(text.as_bytes(), 4)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| Measurement {
            reference: i,
            one_way_time: r[3],
            reference_position: Position::new(r[0], r[1], r[2]),
        })
        .collect())
}

fn out_io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Parses `args` and runs the command, writing to `out`. Returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Trace {
            svp,
            angle,
            from,
            to,
        } => {
            let svp = load_svp(&svp)?;
            let seg = RaySegment::between(&svp, from, to)?;
            let r = seg.trace(angle.to_radians())?;
            writeln!(out, "t={:.9} h={:.9}", r.travel_time, r.horizontal_range).map_err(out_io)?;
        }
        Command::Solve {
            svp,
            mode,
            value,
            from,
            to,
            tol,
        } => {
            let svp = load_svp(&svp)?;
            let seg = RaySegment::between(&svp, from, to)?;
            let theta = match mode {
                SolveMode::Time => seg.solve_angle_for_time(value, tol.unwrap_or(10e-6))?,
                SolveMode::Range => seg.solve_angle_for_range(value, tol.unwrap_or(0.1))?,
            };
            writeln!(out, "theta0_deg={:.6}", theta.to_degrees()).map_err(out_io)?;
        }
        Command::Simplify {
            svp,
            points,
            rmse,
            out: path,
        } => {
            let original = load_svp(&svp)?;
            let control = match (points, rmse) {
                (Some(n), _) => SimplificationControl::PointCount(n),
                (None, Some(r)) => SimplificationControl::RmseThreshold(r),
                (None, None) => unreachable!("clap requires one of --points/--rmse"),
            };
            let simplified = original.simplify_dm_eicps(control)?;
            write(&path, &simplified.to_csv())?;
            let err = profile_rmse(&original, &simplified)?;
            writeln!(out, "points={} rmse={:.9}", simplified.len(), err).map_err(out_io)?;
        }
        Command::Localize {
            svp,
            measurements,
            config,
            verbose,
        } => {
            let svp = load_svp(&svp)?;
            let meas = parse_measurements(&read(&measurements)?)?;
            if meas.len() < 4 {
                return Err(CliError::Domain(format!(
                    "need at least 4 measurement rows, got {}",
                    meas.len()
                )));
            }
            let mut irtul = Irtul::new(&svp, &meas, config.config())?;
            let rough = irtul.rough_fix();
            if verbose {
                writeln!(
                    out,
                    "rough x={:.6} y={:.6} z={:.6}",
                    rough.x, rough.y, rough.z
                )
                .map_err(out_io)?;
            }
            while let Some(state) = irtul.step()? {
                if verbose {
                    writeln!(
                        out,
                        "iter={} z={:.6} step={} loss_pas={:.9e} loss_cur={:.9e}",
                        state.iteration,
                        state.estimate.z,
                        state.depth_step,
                        state.loss_before,
                        state.loss_after
                    )
                    .map_err(out_io)?;
                }
            }
            let res = irtul.finish();
            let p = res.position;
            writeln!(out, "x={:.6} y={:.6} z={:.6}", p.x, p.y, p.z).map_err(out_io)?;
            writeln!(
                out,
                "iterations={} converged={}",
                res.iterations, res.converged
            )
            .map_err(out_io)?;
        }
        Command::Experiment {
            scenario,
            svp,
            simplify_points,
            out_dir,
            seed,
            no_timing,
            serial,
        } => {
            let file = ScenarioFile::parse(&read(&scenario)?)?;
            let svp = load_svp(&svp)?;
            let points = simplify_points.unwrap_or_else(|| file.simplification_points());
            let simplified = svp.simplify_dm_eicps(SimplificationControl::PointCount(points))?;
            let mut cfg = file.scenario();
            if let Some(seed) = seed {
                cfg.rng_seed = seed;
            }
            let scenario = sim::generate_scenario(&cfg)?;
            let options = ExperimentOptions {
                timing: !no_timing,
                parallel: !serial,
            };
            let report = sim::run_experiment(&scenario, &svp, &simplified, &file.irtul(), options)?;
            fs::create_dir_all(&out_dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
            write(&out_dir.join("per_target.csv"), &report.per_target_csv())?;
            write(&out_dir.join("summary.csv"), &report.summary_csv())?;
            writeln!(
                out,
                "localized={} unlocalizable={} failed={}",
                report.targets.len(),
                report.unlocalizable.len(),
                report.failed.len()
            )
            .map_err(out_io)?;
            for m in Method::ALL {
                let s = report.summary(m);
                writeln!(
                    out,
                    "{} mean_rmse_m={:.3} std_m={:.3}",
                    m.name(),
                    s.mean_rmse,
                    s.std
                )
                .map_err(out_io)?;
            }
            let [x, y, z] = report.correction_original;
            writeln!(out, "correction_original_svp x={x:.3} y={y:.3} z={z:.3}").map_err(out_io)?;
            let [x, y, z] = report.correction_simplified;
            writeln!(out, "correction_simplified_svp x={x:.3} y={y:.3} z={z:.3}")
                .map_err(out_io)?;
        }
        Command::Benchmark {
            svp,
            simplify_points,
            repeats,
            scenario,
            targets,
            seed,
        } => {
            let svp = load_svp(&svp)?;
            let simplified =
                svp.simplify_dm_eicps(SimplificationControl::PointCount(simplify_points))?;
            let file = match scenario {
                Some(path) => ScenarioFile::parse(&read(&path)?)?,
                None => ScenarioFile::default(),
            };
            let mut cfg = file.scenario();
            if let Some(seed) = seed {
                cfg.rng_seed = seed;
            }
            let scenario = sim::generate_scenario(&cfg)?;
            let b = sim::benchmark(
                &scenario,
                &svp,
                &simplified,
                &file.irtul(),
                targets,
                repeats,
            )?;
            writeln!(
                out,
                "localizations={} repeats={}",
                b.localizations, b.repeats
            )
            .map_err(out_io)?;
            writeln!(
                out,
                "original points={} mean_us={:.1} layer_evals={:.1}",
                b.original_points, b.original_mean_us, b.original_layer_evaluations
            )
            .map_err(out_io)?;
            writeln!(
                out,
                "simplified points={} mean_us={:.1} layer_evals={:.1}",
                b.simplified_points, b.simplified_mean_us, b.simplified_layer_evaluations
            )
            .map_err(out_io)?;
            writeln!(out, "speedup={:.3}", b.speedup()).map_err(out_io)?;
            for c in &b.scaling {
                writeln!(
                    out,
                    "layers={} evals_per_trace={}",
                    c.layers, c.layer_evaluations_per_trace
                )
                .map_err(out_io)?;
            }
        }
    }
    Ok(())
}
