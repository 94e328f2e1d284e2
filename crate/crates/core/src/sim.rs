//! Network scenario generation, TOA measurement synthesis and the
//! constant-speed / original-profile / simplified-profile comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::localize::{irtul_localize, rough_fix, IrtulConfig, LocalizeError, Measurement};
use crate::raytrace::{self, RayError, RaySegment};
use crate::svp::{ProfileError, SimplificationControl};
use crate::{Pos, Svp};

/// Deep-water profile shipped with the crate: a shallow surface duct, a
/// negative thermocline down to a sound channel axis near 1100 m, and the
/// positive pressure gradient below it. 30 samples over 0-3000 m.
pub const CANONICAL_SVP_CSV: &str = include_str!("../data/canonical_svp.csv");

/// Forward-model range tolerance (m) used when synthesizing measurements.
pub const SYNTH_RANGE_TOLERANCE: f64 = 1e-6;

pub fn canonical_profile() -> Svp {
    Svp::parse_str(CANONICAL_SVP_CSV).expect("shipped profile is valid")
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("no target with id {0}")]
    UnknownTarget(usize),
    #[error("target {target} has only {in_range} reference nodes in range (need 4)")]
    Unlocalizable { target: usize, in_range: usize },
    #[error("target {target} lies outside the profile depth range")]
    OutsideProfile { target: usize },
    #[error("forward ray trace to target {target} failed: {source}")]
    Forward { target: usize, source: RayError },
    #[error(transparent)]
    Localize(#[from] LocalizeError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("scenario file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Buoy,
    Anchor,
    SensorTarget,
    NoncoopTarget,
}

impl Role {
    pub fn is_reference(self) -> bool {
        matches!(self, Role::Buoy | Role::Anchor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: usize,
    pub role: Role,
    pub position: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub area_x: f64,
    pub area_y: f64,
    pub depth: f64,
    pub buoy_count: usize,
    pub anchor_count: usize,
    pub target_count: usize,
    /// The last this-many targets are non-cooperative (echo-ranged).
    pub noncooperative_targets: usize,
    pub comm_range: f64,
    pub time_noise_mean: f64,
    pub time_noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_x: 10_000.0,
            area_y: 10_000.0,
            depth: 3_000.0,
            buoy_count: 25,
            anchor_count: 25,
            target_count: 200,
            noncooperative_targets: 0,
            comm_range: 4_500.0,
            time_noise_mean: 0.0,
            time_noise_sigma: 0.003,
            rng_seed: 42,
        }
    }
}

fn grid_side(count: usize, what: &str) -> Result<usize, SimError> {
    let side = (count as f64).sqrt().round() as usize;
    if count == 0 || side * side != count {
        return Err(SimError::InvalidConfig(format!(
            "{what} count {count} is not a positive square"
        )));
    }
    Ok(side)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        grid_side(self.buoy_count, "buoy")?;
        grid_side(self.anchor_count, "anchor")?;
        let checks = [
            (
                self.area_x > 0.0 && self.area_y > 0.0,
                "area must be positive",
            ),
            (self.depth > 0.0, "depth must be positive"),
            (self.target_count >= 1, "need at least one target"),
            (
                self.noncooperative_targets <= self.target_count,
                "more non-cooperative targets than targets",
            ),
            (
                self.comm_range > 0.0,
                "communication range must be positive",
            ),
            (
                self.time_noise_sigma >= 0.0 && self.time_noise_sigma.is_finite(),
                "noise sigma must be >= 0",
            ),
            (
                self.time_noise_mean.is_finite(),
                "noise mean must be finite",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(SimError::InvalidConfig((*msg).into())),
            None => Ok(()),
        }
    }
}

/// Scenario file: keys follow the experiment parameter table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub communication_range: f64,
    pub area_square: [f64; 2],
    pub depth: f64,
    pub surface_buoys: usize,
    pub anchor_nodes: usize,
    pub target_nodes_to_be_located: usize,
    pub noncooperative_targets: usize,
    pub mean_error_time: f64,
    pub standard_deviation_error_time: f64,
    pub number_of_simplification_layers: usize,
    pub threshold_of_depth_tuning_step: f64,
    pub threshold_of_signal_propagation_time: f64,
    pub threshold_of_horizontal_propagation_distance: f64,
    pub initial_depth_step: f64,
    pub mean_sound_speed: f64,
    pub max_iterations: usize,
    pub rng_seed: u64,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self::from_parts(&ScenarioConfig::default(), &IrtulConfig::default(), 7)
    }
}

impl ScenarioFile {
    pub fn from_parts(
        s: &ScenarioConfig,
        c: &IrtulConfig<f64>,
        simplification_layers: usize,
    ) -> Self {
        Self {
            communication_range: s.comm_range,
            area_square: [s.area_x, s.area_y],
            depth: s.depth,
            surface_buoys: s.buoy_count,
            anchor_nodes: s.anchor_count,
            target_nodes_to_be_located: s.target_count,
            noncooperative_targets: s.noncooperative_targets,
            mean_error_time: s.time_noise_mean,
            standard_deviation_error_time: s.time_noise_sigma,
            number_of_simplification_layers: simplification_layers,
            threshold_of_depth_tuning_step: c.depth_step_threshold,
            threshold_of_signal_propagation_time: c.time_tolerance,
            threshold_of_horizontal_propagation_distance: c.range_tolerance,
            initial_depth_step: c.initial_depth_step,
            mean_sound_speed: c.mean_speed,
            max_iterations: c.max_iterations,
            rng_seed: s.rng_seed,
        }
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain struct serializes")
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            area_x: self.area_square[0],
            area_y: self.area_square[1],
            depth: self.depth,
            buoy_count: self.surface_buoys,
            anchor_count: self.anchor_nodes,
            target_count: self.target_nodes_to_be_located,
            noncooperative_targets: self.noncooperative_targets,
            comm_range: self.communication_range,
            time_noise_mean: self.mean_error_time,
            time_noise_sigma: self.standard_deviation_error_time,
            rng_seed: self.rng_seed,
        }
    }

    pub fn irtul(&self) -> IrtulConfig<f64> {
        IrtulConfig {
            initial_depth_step: self.initial_depth_step,
            depth_step_threshold: self.threshold_of_depth_tuning_step,
            time_tolerance: self.threshold_of_signal_propagation_time,
            range_tolerance: self.threshold_of_horizontal_propagation_distance,
            mean_speed: self.mean_sound_speed,
            max_iterations: self.max_iterations,
        }
    }

    /// Feature points of the simplified profile (layers + 1).
    pub fn simplification_points(&self) -> usize {
        self.number_of_simplification_layers + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub nodes: Vec<Node>,
    pub truth: BTreeMap<usize, Pos>,
    pub config: ScenarioConfig,
}

impl Scenario {
    pub fn references(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.role.is_reference())
    }

    pub fn targets(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| !n.role.is_reference())
    }

    pub fn target_ids(&self) -> Vec<usize> {
        self.truth.keys().copied().collect()
    }
}

/// Buoys and anchors on centred uniform grids (step `side / sqrt(count)`,
/// first node at half a step), targets uniform in the open volume.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario, SimError> {
    config.validate()?;
    let mut nodes =
        Vec::with_capacity(config.buoy_count + config.anchor_count + config.target_count);
    for (count, role, z) in [
        (config.buoy_count, Role::Buoy, 0.0),
        (config.anchor_count, Role::Anchor, config.depth),
    ] {
        let side = grid_side(count, "grid")?;
        let (sx, sy) = (config.area_x / side as f64, config.area_y / side as f64);
        for j in 0..side {
            for i in 0..side {
                let position = Pos::new(sx * (i as f64 + 0.5), sy * (j as f64 + 0.5), z);
                nodes.push(Node {
                    id: nodes.len(),
                    role,
                    position,
                });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut truth = BTreeMap::new();
    for k in 0..config.target_count {
        let x = rng.random_range(0.0..config.area_x);
        let y = rng.random_range(0.0..config.area_y);
        let z = loop {
            let z = rng.random_range(0.0..config.depth);
            if z > 0.0 {
                break z;
            }
        };
        let role = if k + config.noncooperative_targets >= config.target_count {
            Role::NoncoopTarget
        } else {
            Role::SensorTarget
        };
        let position = Pos::new(x, y, z);
        truth.insert(nodes.len(), position);
        nodes.push(Node {
            id: nodes.len(),
            role,
            position,
        });
    }
    Ok(Scenario {
        nodes,
        truth,
        config: *config,
    })
}

/// Noise stream for one target, independent of processing order.
pub fn measurement_rng(seed: u64, target: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(target as u64 + 1);
    rng
}

/// True one-way travel time along the direct ray between two points.
pub fn forward_time(svp: &Svp, from: &Pos, to: &Pos) -> Result<f64, RayError> {
    let h = from.horizontal_distance(to);
    if from.z == to.z {
        return Ok(h / svp.speed_at(from.z)?);
    }
    let seg = RaySegment::between(svp, from.z, to.z)?;
    let theta = seg.solve_angle_for_range(h, SYNTH_RANGE_TOLERANCE)?;
    seg.propagation_time(theta)
}

/// One-way times from every in-range reference node to `target`, by forward
/// ray tracing plus Gaussian time noise. Round-trip clock offsets cancel and
/// are not simulated; cooperative and echo-ranged targets produce the same
/// one-way equivalent. References with no direct (non-turning) ray to the
/// target are skipped.
pub fn synthesize_measurements<R: Rng + ?Sized>(
    scenario: &Scenario,
    svp: &Svp,
    target: usize,
    rng: &mut R,
) -> Result<Vec<Measurement<f64>>, SimError> {
    let truth = *scenario
        .truth
        .get(&target)
        .ok_or(SimError::UnknownTarget(target))?;
    if !svp.contains(truth.z) {
        return Err(SimError::OutsideProfile { target });
    }
    let cfg = &scenario.config;
    let noise = Normal::new(cfg.time_noise_mean, cfg.time_noise_sigma)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let mut out = Vec::new();
    for node in scenario.references() {
        if node.position.distance(&truth) > cfg.comm_range {
            continue;
        }
        let t = match forward_time(svp, &node.position, &truth) {
            Ok(t) => t,
            Err(RayError::BeyondRange { .. }) => continue,
            Err(source) => return Err(SimError::Forward { target, source }),
        };
        let e = if cfg.time_noise_sigma > 0.0 {
            noise.sample(rng)
        } else {
            cfg.time_noise_mean
        };
        out.push(Measurement {
            reference: node.id,
            one_way_time: t + e,
            reference_position: node.position,
        });
    }
    if out.len() < 4 {
        return Err(SimError::Unlocalizable {
            target,
            in_range: out.len(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    ConstantSpeed,
    OriginalSvp,
    SimplifiedSvp,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::ConstantSpeed,
        Method::OriginalSvp,
        Method::SimplifiedSvp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ConstantSpeed => "constant_speed",
            Method::OriginalSvp => "original_svp",
            Method::SimplifiedSvp => "simplified_svp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutcome {
    pub position: Pos,
    pub iterations: usize,
    pub converged: bool,
    pub wall_us: u64,
}

impl MethodOutcome {
    pub fn error(&self, truth: &Pos) -> [f64; 4] {
        let (dx, dy, dz) = (
            self.position.x - truth.x,
            self.position.y - truth.y,
            self.position.z - truth.z,
        );
        [dx, dy, dz, (dx * dx + dy * dy + dz * dz).sqrt()]
    }
}

/// All three estimates for one target, from one shared measurement set.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetOutcome {
    pub target: usize,
    pub truth: Pos,
    pub references: usize,
    pub outcomes: [MethodOutcome; 3],
}

impl TargetOutcome {
    pub fn get(&self, method: Method) -> &MethodOutcome {
        &self.outcomes[method as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    /// Mean of the per-target 3D errors.
    pub mean_rmse: f64,
    /// Standard deviation of the per-target 3D errors.
    pub std: f64,
    /// Batch RMSE per axis and in 3D: `[x, y, z, 3d]`.
    pub batch_rmse: [f64; 4],
    pub mean_wall_us: f64,
    pub total_wall_us: u64,
    pub mean_iterations: f64,
    pub converged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub targets: Vec<TargetOutcome>,
    /// Targets with fewer than four usable references.
    pub unlocalizable: Vec<usize>,
    /// Targets where some method failed, with the first error.
    pub failed: Vec<(usize, String)>,
    pub summaries: Vec<MethodSummary>,
    /// Mean |IRTUL - constant-speed| per axis `[x, y, z]`, for the original
    /// and the simplified profile.
    pub correction_original: [f64; 3],
    pub correction_simplified: [f64; 3],
}

impl ExperimentReport {
    pub fn summary(&self, method: Method) -> &MethodSummary {
        self.summaries
            .iter()
            .find(|s| s.method == method)
            .expect("all methods summarized")
    }

    /// `target_id,method,err_x_m,err_y_m,err_z_m,err_3d_m,iterations,wall_us`
    pub fn per_target_csv(&self) -> String {
        let mut out =
            String::from("target_id,method,err_x_m,err_y_m,err_z_m,err_3d_m,iterations,wall_us\n");
        for t in &self.targets {
            for m in Method::ALL {
                let o = t.get(m);
                let [ex, ey, ez, e3] = o.error(&t.truth);
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
                    t.target,
                    m.name(),
                    ex,
                    ey,
                    ez,
                    e3,
                    o.iterations,
                    o.wall_us
                );
            }
        }
        out
    }

    /// `method,mean_rmse_m,std_m,mean_wall_us`
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,mean_rmse_m,std_m,mean_wall_us\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.3}",
                s.method.name(),
                s.mean_rmse,
                s.std,
                s.mean_wall_us
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentOptions {
    /// Record wall times; when off every `wall_us` is 0 so reports are
    /// bit-reproducible.
    pub timing: bool,
    /// Localize targets concurrently.
    pub parallel: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            timing: true,
            parallel: true,
        }
    }
}

fn timed<T>(timing: bool, f: impl FnOnce() -> T) -> (T, u64) {
    if timing {
        let start = Instant::now();
        let out = f();
        (out, start.elapsed().as_micros() as u64)
    } else {
        (f(), 0)
    }
}

enum TargetRun {
    Done(TargetOutcome),
    Unlocalizable(usize),
    Failed(usize, String),
}

/// Localizes one target three ways from one measurement set.
pub fn localize_target(
    scenario: &Scenario,
    svp: &Svp,
    simplified: &Svp,
    config: &IrtulConfig<f64>,
    target: usize,
    timing: bool,
) -> Result<TargetOutcome, SimError> {
    let truth = *scenario
        .truth
        .get(&target)
        .ok_or(SimError::UnknownTarget(target))?;
    let mut rng = measurement_rng(scenario.config.rng_seed, target);
    let meas = synthesize_measurements(scenario, svp, target, &mut rng)?;

    let (rough, rough_us) = timed(timing, || rough_fix(&meas, config.mean_speed));
    let constant = MethodOutcome {
        position: rough?,
        iterations: 0,
        converged: true,
        wall_us: rough_us,
    };
    let run = |profile: &Svp| -> Result<MethodOutcome, SimError> {
        let (res, wall_us) = timed(timing, || irtul_localize(profile, &meas, *config));
        let res = res?;
        Ok(MethodOutcome {
            position: res.position,
            iterations: res.iterations,
            converged: res.converged,
            wall_us,
        })
    };
    let original = run(svp)?;
    let simple = run(simplified)?;
    Ok(TargetOutcome {
        target,
        truth,
        references: meas.len(),
        outcomes: [constant, original, simple],
    })
}

fn summarize(method: Method, targets: &[TargetOutcome]) -> MethodSummary {
    let n = targets.len().max(1) as f64;
    let errors: Vec<[f64; 4]> = targets
        .iter()
        .map(|t| t.get(method).error(&t.truth))
        .collect();
    let mean_rmse = errors.iter().map(|e| e[3]).sum::<f64>() / n;
    let var = errors
        .iter()
        .map(|e| (e[3] - mean_rmse).powi(2))
        .sum::<f64>()
        / n;
    let mut batch_rmse = [0.0; 4];
    for (k, b) in batch_rmse.iter_mut().enumerate() {
        *b = (errors.iter().map(|e| e[k] * e[k]).sum::<f64>() / n).sqrt();
    }
    let total_wall_us = targets.iter().map(|t| t.get(method).wall_us).sum::<u64>();
    MethodSummary {
        method,
        mean_rmse,
        std: var.sqrt(),
        batch_rmse,
        mean_wall_us: total_wall_us as f64 / n,
        total_wall_us,
        mean_iterations: targets
            .iter()
            .map(|t| t.get(method).iterations as f64)
            .sum::<f64>()
            / n,
        converged: targets.iter().filter(|t| t.get(method).converged).count(),
    }
}

fn mean_correction(targets: &[TargetOutcome], method: Method) -> [f64; 3] {
    let n = targets.len().max(1) as f64;
    let mut c = [0.0; 3];
    for t in targets {
        let (a, b) = (
            t.get(method).position,
            t.get(Method::ConstantSpeed).position,
        );
        c[0] += (a.x - b.x).abs();
        c[1] += (a.y - b.y).abs();
        c[2] += (a.z - b.z).abs();
    }
    c.map(|v| v / n)
}

/// Runs every target of `scenario` through the three methods. A failing
/// target is recorded and skipped; the summaries cover the targets all three
/// methods localized.
pub fn run_experiment(
    scenario: &Scenario,
    svp: &Svp,
    simplified: &Svp,
    config: &IrtulConfig<f64>,
    options: ExperimentOptions,
) -> Result<ExperimentReport, SimError> {
    config.validate()?;
    let one = |&target: &usize| match localize_target(
        scenario,
        svp,
        simplified,
        config,
        target,
        options.timing,
    ) {
        Ok(o) => TargetRun::Done(o),
        Err(SimError::Unlocalizable { target, .. }) => TargetRun::Unlocalizable(target),
        Err(e) => TargetRun::Failed(target, e.to_string()),
    };
    let ids = scenario.target_ids();
    let runs: Vec<TargetRun> = if options.parallel {
        ids.par_iter().map(one).collect()
    } else {
        ids.iter().map(one).collect()
    };

    let mut report = ExperimentReport {
        targets: Vec::new(),
        unlocalizable: Vec::new(),
        failed: Vec::new(),
        summaries: Vec::new(),
        correction_original: [0.0; 3],
        correction_simplified: [0.0; 3],
    };
    for run in runs {
        match run {
            TargetRun::Done(o) => report.targets.push(o),
            TargetRun::Unlocalizable(t) => report.unlocalizable.push(t),
            TargetRun::Failed(t, e) => report.failed.push((t, e)),
        }
    }
    report.summaries = Method::ALL
        .iter()
        .map(|&m| summarize(m, &report.targets))
        .collect();
    report.correction_original = mean_correction(&report.targets, Method::OriginalSvp);
    report.correction_simplified = mean_correction(&report.targets, Method::SimplifiedSvp);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCost {
    pub layers: usize,
    /// Closed-form layer evaluations of one full-span trace.
    pub layer_evaluations_per_trace: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub original_points: usize,
    pub simplified_points: usize,
    pub localizations: usize,
    pub repeats: usize,
    pub original_mean_us: f64,
    pub simplified_mean_us: f64,
    /// Layer evaluations per localization.
    pub original_layer_evaluations: f64,
    pub simplified_layer_evaluations: f64,
    /// Cost of a full-span trace for every simplification level 2..=n points.
    pub scaling: Vec<ProfileCost>,
}

impl BenchmarkReport {
    pub fn speedup(&self) -> f64 {
        self.original_mean_us / self.simplified_mean_us
    }
}

/// Single-threaded timing of IRTUL with the original and the simplified
/// profile over the same measurement sets, `repeats` times each.
pub fn benchmark(
    scenario: &Scenario,
    svp: &Svp,
    simplified: &Svp,
    config: &IrtulConfig<f64>,
    max_targets: usize,
    repeats: usize,
) -> Result<BenchmarkReport, SimError> {
    config.validate()?;
    if repeats == 0 {
        return Err(SimError::InvalidConfig("repeats must be at least 1".into()));
    }
    let mut sets = Vec::new();
    for id in scenario.target_ids() {
        if sets.len() == max_targets {
            break;
        }
        let mut rng = measurement_rng(scenario.config.rng_seed, id);
        match synthesize_measurements(scenario, svp, id, &mut rng) {
            Ok(m) => {
                // keep only sets both profiles can localize
                if irtul_localize(svp, &m, *config).is_ok()
                    && irtul_localize(simplified, &m, *config).is_ok()
                {
                    sets.push(m);
                }
            }
            Err(SimError::Unlocalizable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if sets.is_empty() {
        return Err(SimError::InvalidConfig(
            "no localizable targets to benchmark".into(),
        ));
    }

    let time_profile = |profile: &Svp| -> (f64, f64) {
        let mut total = 0u128;
        raytrace::reset_layer_evaluations();
        for _ in 0..repeats {
            for m in &sets {
                let start = Instant::now();
                let res = irtul_localize(profile, m, *config);
                total += start.elapsed().as_nanos();
                std::hint::black_box(res.ok());
            }
        }
        let runs = (repeats * sets.len()) as f64;
        (
            total as f64 / 1e3 / runs,
            raytrace::layer_evaluations() as f64 / runs,
        )
    };
    let (original_mean_us, original_layer_evaluations) = time_profile(svp);
    let (simplified_mean_us, simplified_layer_evaluations) = time_profile(simplified);

    let mut scaling = Vec::new();
    let theta = std::f64::consts::FRAC_PI_3;
    for k in 2..=svp.len() {
        let p = svp.simplify_dm_eicps(SimplificationControl::PointCount(k))?;
        raytrace::reset_layer_evaluations();
        // a steep ray is feasible through any of these profiles
        raytrace::propagation_time(&p, theta)
            .map_err(|source| SimError::Forward { target: 0, source })?;
        scaling.push(ProfileCost {
            layers: p.layer_count(),
            layer_evaluations_per_trace: raytrace::layer_evaluations(),
        });
    }

    Ok(BenchmarkReport {
        original_points: svp.len(),
        simplified_points: simplified.len(),
        localizations: sets.len(),
        repeats,
        original_mean_us,
        simplified_mean_us,
        original_layer_evaluations,
        simplified_layer_evaluations,
        scaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grid() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        let buoys: Vec<_> = s.nodes.iter().filter(|n| n.role == Role::Buoy).collect();
        assert_eq!(buoys.len(), 25);
        let grid = [1000.0, 3000.0, 5000.0, 7000.0, 9000.0];
        for b in &buoys {
            assert!(grid.contains(&b.position.x) && grid.contains(&b.position.y));
            assert_eq!(b.position.z, 0.0);
        }
        let anchors: Vec<_> = s.nodes.iter().filter(|n| n.role == Role::Anchor).collect();
        assert_eq!(anchors.len(), 25);
        assert!(anchors.iter().all(|a| a.position.z == 3000.0));
        assert_eq!(s.truth.len(), 200);
        assert!(s.truth.values().all(|p| p.z > 0.0 && p.z < 3000.0));
    }

    #[test]
    fn scenario_is_deterministic() {
        let cfg = ScenarioConfig {
            target_count: 1,
            rng_seed: 7,
            ..ScenarioConfig::default()
        };
        assert_eq!(
            generate_scenario(&cfg).unwrap(),
            generate_scenario(&cfg).unwrap()
        );
        let other = ScenarioConfig { rng_seed: 8, ..cfg };
        assert_ne!(
            generate_scenario(&cfg).unwrap().truth,
            generate_scenario(&other).unwrap().truth
        );
    }

    #[test]
    fn non_square_grid_rejected() {
        let cfg = ScenarioConfig {
            buoy_count: 24,
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            generate_scenario(&cfg),
            Err(SimError::InvalidConfig(_))
        ));
    }

    #[test]
    fn noncooperative_roles() {
        let cfg = ScenarioConfig {
            target_count: 10,
            noncooperative_targets: 3,
            ..ScenarioConfig::default()
        };
        let s = generate_scenario(&cfg).unwrap();
        assert_eq!(
            s.nodes
                .iter()
                .filter(|n| n.role == Role::NoncoopTarget)
                .count(),
            3
        );
        assert_eq!(
            s.nodes
                .iter()
                .filter(|n| n.role == Role::SensorTarget)
                .count(),
            7
        );
    }

    #[test]
    fn scenario_file_roundtrip_and_defaults() {
        let file = ScenarioFile::default();
        let back = ScenarioFile::parse(&file.to_toml()).unwrap();
        assert_eq!(back.scenario(), ScenarioConfig::default());
        assert_eq!(back.irtul(), IrtulConfig::default());
        assert_eq!(back.simplification_points(), 8);
        let partial =
            ScenarioFile::parse("target_nodes_to_be_located = 5\nrng_seed = 3\n").unwrap();
        assert_eq!(partial.scenario().target_count, 5);
        assert_eq!(partial.scenario().comm_range, 4500.0);
        assert!(ScenarioFile::parse("bogus_key = 1\n").is_err());
    }

    #[test]
    fn vertical_reference_gets_vertical_time() {
        let svp = canonical_profile();
        let cfg = ScenarioConfig {
            time_noise_sigma: 0.0,
            target_count: 1,
            ..ScenarioConfig::default()
        };
        let mut s = generate_scenario(&cfg).unwrap();
        let id = s.target_ids()[0];
        let target = Pos::new(1000.0, 1000.0, 800.0);
        s.truth.insert(id, target);
        let m = synthesize_measurements(&s, &svp, id, &mut measurement_rng(1, id)).unwrap();
        let above = m
            .iter()
            .find(|m| m.reference_position == Pos::new(1000.0, 1000.0, 0.0))
            .unwrap();
        let seg = svp.segment(0.0, 800.0).unwrap();
        let vertical = raytrace::propagation_time(&seg, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((above.one_way_time - vertical).abs() < 1e-12);
    }

    #[test]
    fn measurements_are_reproducible() {
        let svp = canonical_profile();
        let s = generate_scenario(&ScenarioConfig {
            target_count: 3,
            ..ScenarioConfig::default()
        })
        .unwrap();
        for id in s.target_ids() {
            let a = synthesize_measurements(&s, &svp, id, &mut measurement_rng(9, id));
            let b = synthesize_measurements(&s, &svp, id, &mut measurement_rng(9, id));
            match (a, b) {
                (Ok(a), Ok(b)) => assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => panic!("nondeterministic synthesis"),
            }
        }
    }

    #[test]
    fn unknown_target() {
        let s = generate_scenario(&ScenarioConfig {
            target_count: 1,
            ..ScenarioConfig::default()
        })
        .unwrap();
        let err = synthesize_measurements(&s, &canonical_profile(), 0, &mut measurement_rng(1, 0));
        assert!(matches!(err, Err(SimError::UnknownTarget(0))));
    }
}
