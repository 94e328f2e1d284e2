//! Iterative ray-tracing localization (IRTUL).
//!
//! A target of unknown depth is first fixed with straight rays at a constant
//! mean speed. From that depth on, every iteration
//!
//! 1. finds, per reference node, the launch angle whose travel time to the
//!    current depth equals the measured one-way time, and the horizontal range
//!    of that ray;
//! 2. solves the horizontal position by differenced least squares;
//! 3. re-traces each reference to the new horizontal distance and scores the
//!    depth by the squared time mismatch;
//! 4. scores the depth one step further in the current direction and either
//!    moves there, or halves the step and reverses direction.
//!
//! The search stops once the depth step drops below its threshold.

use thiserror::Error;

use crate::linalg::{least_squares, LinalgError};
use crate::raytrace::{RayError, RaySegment};
use crate::svp::SoundVelocityProfile;
use crate::Real;

/// Point in the water column; `z` is depth, positive downward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Position<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Self) -> T {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn horizontal_distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One reference node's round-trip ranging, reduced to a one-way time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement<T> {
    pub reference: usize,
    /// Half the round-trip time of arrival, in seconds.
    pub one_way_time: T,
    pub reference_position: Position<T>,
}

/// Thresholds and step sizes of the depth search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrtulConfig<T> {
    /// Initial depth tuning step (m).
    pub initial_depth_step: T,
    /// The search ends when the depth step falls below this (m).
    pub depth_step_threshold: T,
    /// Travel time tolerance of the angle search (s).
    pub time_tolerance: T,
    /// Horizontal range tolerance of the angle search (m).
    pub range_tolerance: T,
    /// Speed of the straight-ray rough fix (m/s).
    pub mean_speed: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for IrtulConfig<T> {
    fn default() -> Self {
        Self {
            initial_depth_step: T::lit(2.0),
            depth_step_threshold: T::lit(0.2),
            time_tolerance: T::lit(10e-6),
            range_tolerance: T::lit(0.1),
            mean_speed: T::lit(1500.0),
            max_iterations: 100,
        }
    }
}

impl<T: Real> IrtulConfig<T> {
    pub fn validate(&self) -> Result<(), LocalizeError> {
        let positive = [
            ("initial_depth_step", self.initial_depth_step),
            ("depth_step_threshold", self.depth_step_threshold),
            ("time_tolerance", self.time_tolerance),
            ("range_tolerance", self.range_tolerance),
            ("mean_speed", self.mean_speed),
        ];
        if let Some((name, v)) = positive
            .iter()
            .find(|(_, v)| !(*v > T::zero() && v.is_finite()))
        {
            return Err(LocalizeError::InvalidConfig(format!(
                "{name} must be positive, got {v}"
            )));
        }
        if self.depth_step_threshold >= self.initial_depth_step {
            return Err(LocalizeError::InvalidConfig(
                "depth_step_threshold must be below initial_depth_step".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(LocalizeError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Depth tuning direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Deeper,
    Shallower,
}

impl Direction {
    fn flip(self) -> Self {
        match self {
            Direction::Deeper => Direction::Shallower,
            Direction::Shallower => Direction::Deeper,
        }
    }

    fn sign<T: Real>(self) -> T {
        match self {
            Direction::Deeper => T::one(),
            Direction::Shallower => -T::one(),
        }
    }
}

/// Search state after an iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrtulState<T> {
    /// Accepted estimate (the lower-loss of the two depths compared).
    pub estimate: Position<T>,
    pub depth_step: T,
    pub direction: Direction,
    /// Loss at the depth the iteration started from (s^2).
    pub loss_before: T,
    /// Loss at the tuned depth (s^2).
    pub loss_after: T,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult<T> {
    pub position: Position<T>,
    /// Straight-ray constant-speed fix the search started from.
    pub rough: Position<T>,
    pub iterations: usize,
    /// `(loss_before, loss_after)` per iteration.
    pub loss_history: Vec<(T, T)>,
    pub converged: bool,
}

impl<T: Real> LocalizationResult<T> {
    /// Loss of the accepted position after each iteration.
    pub fn accepted_losses(&self) -> impl Iterator<Item = T> + '_ {
        self.loss_history.iter().map(|&(a, b)| a.min(b))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizeError {
    #[error("need at least 4 measurements, got {0}")]
    TooFewMeasurements(usize),
    #[error("simulated and measured lists differ in length ({simulated} vs {measured})")]
    LengthMismatch { simulated: usize, measured: usize },
    #[error("reference geometry is degenerate: {0}")]
    Degenerate(#[from] LinalgError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid measurement from reference {reference}: {reason}")]
    InvalidMeasurement { reference: usize, reason: String },
    #[error(
        "ray solve failed for reference {reference} at iteration {iteration} \
         (depth {depth} m, depth step {depth_step} m): {source}"
    )]
    Solver {
        iteration: usize,
        depth: f64,
        depth_step: f64,
        reference: usize,
        source: RayError,
    },
}

fn f<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Straight-ray fix at a constant speed: ranges `mean_speed * t` are turned
/// into linear equations by subtracting the first sphere from the others and
/// solved by least squares.
pub fn rough_fix<T: Real>(
    measurements: &[Measurement<T>],
    mean_speed: T,
) -> Result<Position<T>, LocalizeError> {
    if measurements.len() < 4 {
        return Err(LocalizeError::TooFewMeasurements(measurements.len()));
    }
    let two = T::lit(2.0);
    let first = &measurements[0];
    let p0 = first.reference_position;
    let r0 = mean_speed * first.one_way_time;
    let mut rows = Vec::with_capacity(measurements.len() - 1);
    let mut rhs = Vec::with_capacity(measurements.len() - 1);
    for m in &measurements[1..] {
        let p = m.reference_position;
        let r = mean_speed * m.one_way_time;
        // coordinates relative to the first reference keep the squares small
        let (dx, dy, dz) = (p.x - p0.x, p.y - p0.y, p.z - p0.z);
        rows.push([two * dx, two * dy, two * dz]);
        rhs.push(dx * dx + dy * dy + dz * dz + r0 * r0 - r * r);
    }
    let [x, y, z] = least_squares(&rows, &rhs)?;
    Ok(Position::new(p0.x + x, p0.y + y, p0.z + z))
}

/// Horizontal least-squares fix from horizontal ranges to reference nodes,
/// differenced against the first entry.
pub fn horizontal_fix<T: Real>(ranges: &[(Position<T>, T)]) -> Result<(T, T), LocalizeError> {
    if ranges.len() < 4 {
        return Err(LocalizeError::TooFewMeasurements(ranges.len()));
    }
    let two = T::lit(2.0);
    let (p0, h0) = ranges[0];
    let (rows, rhs): (Vec<[T; 2]>, Vec<T>) = ranges[1..]
        .iter()
        .map(|&(p, h)| {
            let (dx, dy) = (p.x - p0.x, p.y - p0.y);
            ([two * dx, two * dy], dx * dx + dy * dy + h0 * h0 - h * h)
        })
        .unzip();
    let [x, y] = least_squares(&rows, &rhs)?;
    Ok((p0.x + x, p0.y + y))
}

/// Sum of squared differences, paired by index.
pub fn time_loss<T: Real>(simulated: &[T], measured: &[T]) -> Result<T, LocalizeError> {
    if simulated.len() != measured.len() || simulated.is_empty() {
        return Err(LocalizeError::LengthMismatch {
            simulated: simulated.len(),
            measured: measured.len(),
        });
    }
    Ok(simulated
        .iter()
        .zip(measured)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum())
}

/// Acoustic link between a reference node and a candidate target depth.
enum Link<T> {
    Ray(RaySegment<T>),
    /// Reference at the candidate depth: a level straight ray.
    Level(T),
}

impl<T: Real> Link<T> {
    fn new(svp: &SoundVelocityProfile<T>, z_ref: T, z: T) -> Result<Self, RayError> {
        if z_ref == z {
            Ok(Link::Level(svp.speed_at(z)?))
        } else {
            Ok(Link::Ray(RaySegment::between(svp, z_ref, z)?))
        }
    }

    /// Launch angle for a target value, saturated at the bracket end when no
    /// direct ray matches it.
    fn saturated(seg: &RaySegment<T>, solved: Result<T, RayError>) -> Result<T, RayError> {
        match solved {
            Err(RayError::Unreachable { .. }) => Ok(seg.feasible_bracket()?.upper),
            Err(RayError::BeyondRange { .. }) => Ok(seg.feasible_bracket()?.lower),
            other => other,
        }
    }

    fn range_for_time(&self, t: T, tol: T) -> Result<T, RayError> {
        match self {
            Link::Ray(seg) => {
                seg.horizontal_range(Self::saturated(seg, seg.solve_angle_for_time(t, tol))?)
            }
            Link::Level(s) => Ok(*s * t),
        }
    }

    fn time_for_range(&self, h: T, tol: T) -> Result<T, RayError> {
        match self {
            Link::Ray(seg) => {
                seg.propagation_time(Self::saturated(seg, seg.solve_angle_for_range(h, tol))?)
            }
            Link::Level(s) => Ok(h / *s),
        }
    }
}

/// Horizontal fix and loss at one candidate depth.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DepthFit<T> {
    x: T,
    y: T,
    loss: T,
}

/// Runs the inner pipeline (angle search by time, horizontal fix, angle
/// search by range, loss) at depth `z`.
fn fit_at_depth<T: Real>(
    svp: &SoundVelocityProfile<T>,
    measurements: &[Measurement<T>],
    z: T,
    config: &IrtulConfig<T>,
    iteration: usize,
    depth_step: T,
) -> Result<DepthFit<T>, LocalizeError> {
    let solver_error = |m: &Measurement<T>, source: RayError| LocalizeError::Solver {
        iteration,
        depth: f(z),
        depth_step: f(depth_step),
        reference: m.reference,
        source,
    };

    let mut links = Vec::with_capacity(measurements.len());
    let mut ranges = Vec::with_capacity(measurements.len());
    for m in measurements {
        let link = Link::new(svp, m.reference_position.z, z).map_err(|e| solver_error(m, e))?;
        let h = link
            .range_for_time(m.one_way_time, config.time_tolerance)
            .map_err(|e| solver_error(m, e))?;
        ranges.push((m.reference_position, h));
        links.push(link);
    }
    let (x, y) = horizontal_fix(&ranges)?;
    let target = Position::new(x, y, z);

    let mut simulated = Vec::with_capacity(links.len());
    let mut measured = Vec::with_capacity(links.len());
    for (m, link) in measurements.iter().zip(&links) {
        let h = target.horizontal_distance(&m.reference_position);
        simulated.push(
            link.time_for_range(h, config.range_tolerance)
                .map_err(|e| solver_error(m, e))?,
        );
        measured.push(m.one_way_time);
    }
    let loss = time_loss(&simulated, &measured)?;
    Ok(DepthFit { x, y, loss })
}

/// Step-by-step IRTUL driver.
pub struct Irtul<'a, T> {
    svp: &'a SoundVelocityProfile<T>,
    measurements: &'a [Measurement<T>],
    config: IrtulConfig<T>,
    rough: Position<T>,
    depth: T,
    fit: DepthFit<T>,
    depth_step: T,
    direction: Direction,
    iteration: usize,
    history: Vec<(T, T)>,
}

impl<'a, T: Real> Irtul<'a, T> {
    /// Validates the inputs, computes the rough fix and scores its depth.
    pub fn new(
        svp: &'a SoundVelocityProfile<T>,
        measurements: &'a [Measurement<T>],
        config: IrtulConfig<T>,
    ) -> Result<Self, LocalizeError> {
        config.validate()?;
        if measurements.len() < 4 {
            return Err(LocalizeError::TooFewMeasurements(measurements.len()));
        }
        for m in measurements {
            let reason = if !(m.one_way_time > T::zero() && m.one_way_time.is_finite()) {
                Some(format!(
                    "one-way time {} s must be positive",
                    m.one_way_time
                ))
            } else if !svp.contains(m.reference_position.z) {
                Some(format!(
                    "reference depth {} m outside the profile [{}, {}] m",
                    m.reference_position.z,
                    svp.min_depth(),
                    svp.max_depth()
                ))
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(LocalizeError::InvalidMeasurement {
                    reference: m.reference,
                    reason,
                });
            }
        }
        let rough = rough_fix(measurements, config.mean_speed)?;
        let depth = svp.clamp_depth(rough.z);
        let fit = fit_at_depth(
            svp,
            measurements,
            depth,
            &config,
            0,
            config.initial_depth_step,
        )?;
        Ok(Self {
            svp,
            measurements,
            config,
            rough,
            depth,
            fit,
            depth_step: config.initial_depth_step,
            direction: Direction::Deeper,
            iteration: 0,
            history: Vec::new(),
        })
    }

    pub fn rough_fix(&self) -> Position<T> {
        self.rough
    }

    pub fn estimate(&self) -> Position<T> {
        Position::new(self.fit.x, self.fit.y, self.depth)
    }

    pub fn is_converged(&self) -> bool {
        self.depth_step < self.config.depth_step_threshold
    }

    pub fn is_finished(&self) -> bool {
        self.is_converged() || self.iteration >= self.config.max_iterations
    }

    /// Runs one iteration; `None` once the search has finished.
    pub fn step(&mut self) -> Result<Option<IrtulState<T>>, LocalizeError> {
        if self.is_finished() {
            return Ok(None);
        }
        self.iteration += 1;
        let loss_before = self.fit.loss;
        let tuned = self
            .svp
            .clamp_depth(self.depth + self.direction.sign::<T>() * self.depth_step);
        let (loss_after, improved) = if tuned == self.depth {
            // pinned against the profile boundary
            (loss_before, false)
        } else {
            let cur = fit_at_depth(
                self.svp,
                self.measurements,
                tuned,
                &self.config,
                self.iteration,
                self.depth_step,
            )?;
            if cur.loss <= loss_before {
                self.depth = tuned;
                self.fit = cur;
                (cur.loss, true)
            } else {
                (cur.loss, false)
            }
        };
        if !improved {
            self.depth_step = self.depth_step / T::lit(2.0);
            self.direction = self.direction.flip();
        }
        self.history.push((loss_before, loss_after));
        Ok(Some(IrtulState {
            estimate: self.estimate(),
            depth_step: self.depth_step,
            direction: self.direction,
            loss_before,
            loss_after,
            iteration: self.iteration,
        }))
    }

    pub fn finish(self) -> LocalizationResult<T> {
        LocalizationResult {
            position: self.estimate(),
            rough: self.rough,
            iterations: self.iteration,
            converged: self.is_converged(),
            loss_history: self.history,
        }
    }

    pub fn run(mut self) -> Result<LocalizationResult<T>, LocalizeError> {
        while self.step()?.is_some() {}
        Ok(self.finish())
    }
}

/// Localizes one target from its measurements through `svp`.
pub fn irtul_localize<T: Real>(
    svp: &SoundVelocityProfile<T>,
    measurements: &[Measurement<T>],
    config: IrtulConfig<T>,
) -> Result<LocalizationResult<T>, LocalizeError> {
    Irtul::new(svp, measurements, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    type Pos = Position<f64>;

    fn meas(refs: &[Pos], target: Pos, speed: f64) -> Vec<Measurement<f64>> {
        refs.iter()
            .enumerate()
            .map(|(i, &p)| Measurement {
                reference: i,
                one_way_time: p.distance(&target) / speed,
                reference_position: p,
            })
            .collect()
    }

    #[test]
    fn rough_fix_exact() {
        let refs = [
            Pos::new(0.0, 0.0, 0.0),
            Pos::new(100.0, 0.0, 0.0),
            Pos::new(0.0, 100.0, 0.0),
            Pos::new(0.0, 0.0, 100.0),
        ];
        let target = Pos::new(25.0, 25.0, 25.0);
        let est = rough_fix(&meas(&refs, target, 1500.0), 1500.0).unwrap();
        assert!(est.distance(&target) < 1e-6);
    }

    #[test]
    fn rough_fix_perturbed() {
        let refs = [
            Pos::new(0.0, 0.0, 0.0),
            Pos::new(100.0, 0.0, 0.0),
            Pos::new(0.0, 100.0, 0.0),
            Pos::new(0.0, 0.0, 100.0),
        ];
        let target = Pos::new(25.0, 25.0, 25.0);
        let mut m = meas(&refs, target, 1500.0);
        for x in &mut m {
            x.one_way_time += 0.1 / 1500.0;
        }
        let est = rough_fix(&m, 1500.0).unwrap();
        assert!(est.distance(&target) < 0.5, "{}", est.distance(&target));
    }

    #[test]
    fn rough_fix_contract() {
        let refs = [
            Pos::new(0.0, 0.0, 0.0),
            Pos::new(100.0, 0.0, 0.0),
            Pos::new(0.0, 100.0, 0.0),
        ];
        let m = meas(&refs, Pos::new(1.0, 2.0, 3.0), 1500.0);
        assert_eq!(
            rough_fix(&m, 1500.0),
            Err(LocalizeError::TooFewMeasurements(3))
        );
        // all references in one plane: depth unobservable by the linear system
        let flat = [
            Pos::new(0.0, 0.0, 0.0),
            Pos::new(100.0, 0.0, 0.0),
            Pos::new(0.0, 100.0, 0.0),
            Pos::new(100.0, 100.0, 0.0),
        ];
        let m = meas(&flat, Pos::new(30.0, 40.0, 50.0), 1500.0);
        assert!(matches!(
            rough_fix(&m, 1500.0),
            Err(LocalizeError::Degenerate(_))
        ));
    }

    #[test]
    fn horizontal_fix_examples() {
        let square =
            [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)].map(|(x, y)| Pos::new(x, y, 0.0));
        let sym: Vec<_> = square.iter().map(|&p| (p, 50f64.sqrt())).collect();
        let (x, y) = horizontal_fix(&sym).unwrap();
        assert!((x - 5.0).abs() < 1e-12 && (y - 5.0).abs() < 1e-12);

        let h = [5.0, 65f64.sqrt(), 45f64.sqrt(), 85f64.sqrt()];
        let r: Vec<_> = square.iter().copied().zip(h).collect();
        let (x, y) = horizontal_fix(&r).unwrap();
        assert!((x - 3.0).abs() < 1e-9 && (y - 4.0).abs() < 1e-9);

        let line: Vec<_> = [0.0, 10.0, 20.0, 30.0]
            .iter()
            .map(|&x| (Pos::new(x, 0.0, 0.0), 5.0))
            .collect();
        assert!(matches!(
            horizontal_fix(&line),
            Err(LocalizeError::Degenerate(_))
        ));
        assert_eq!(
            horizontal_fix(&r[..3]),
            Err(LocalizeError::TooFewMeasurements(3))
        );
    }

    #[test]
    fn time_loss_examples() {
        assert_eq!(time_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((time_loss(&[1.0f64, 2.0], &[1.1, 1.9]).unwrap() - 0.02).abs() < 1e-15);
        assert!(time_loss(&[1.0, 2.0], &[2.0, 1.0]).unwrap() > 0.0);
        assert!(matches!(
            time_loss(&[1.0], &[1.0, 2.0]),
            Err(LocalizeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(IrtulConfig::<f64>::default().validate().is_ok());
        let bad = IrtulConfig {
            depth_step_threshold: 3.0,
            ..IrtulConfig::<f64>::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(LocalizeError::InvalidConfig(_))
        ));
        let bad = IrtulConfig {
            time_tolerance: 0.0,
            ..IrtulConfig::<f64>::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(LocalizeError::InvalidConfig(_))
        ));
    }

    #[test]
    fn isovelocity_matches_rough_fix() {
        let svp = SoundVelocityProfile::new(vec![(0.0, 1500.0), (3000.0, 1500.0)]).unwrap();
        let refs = [
            Pos::new(0.0, 0.0, 0.0),
            Pos::new(4000.0, 0.0, 0.0),
            Pos::new(0.0, 4000.0, 0.0),
            Pos::new(4000.0, 4000.0, 3000.0),
            Pos::new(0.0, 0.0, 3000.0),
            Pos::new(4000.0, 0.0, 3000.0),
        ];
        let target = Pos::new(1800.0, 2200.0, 1300.0);
        let m = meas(&refs, target, 1500.0);
        // the default 10 us bisection tolerance alone is worth ~1.5 cm of range
        let config = IrtulConfig {
            time_tolerance: 1e-10,
            range_tolerance: 1e-6,
            ..IrtulConfig::default()
        };
        let res = irtul_localize(&svp, &m, config).unwrap();
        assert!((res.position.x - res.rough.x).abs() < 1e-3);
        assert!((res.position.y - res.rough.y).abs() < 1e-3);
        assert!((res.position.z - res.rough.z).abs() < 1e-3);
        assert!(res.converged);
    }

    #[test]
    fn time_shorter_than_vertical_ray_saturates() {
        let svp =
            SoundVelocityProfile::new(vec![(0.0, 1520.0), (1000.0, 1480.0), (3000.0, 1500.0)])
                .unwrap();
        let target = Pos::new(2000.0, 2000.0, 1500.0);
        let refs = [
            Pos::new(2000.0, 2000.0, 0.0),
            Pos::new(0.0, 0.0, 0.0),
            Pos::new(4000.0, 0.0, 0.0),
            Pos::new(0.0, 4000.0, 3000.0),
            Pos::new(4000.0, 4000.0, 3000.0),
            Pos::new(4000.0, 2000.0, 3000.0),
        ];
        let mut m = meas(&refs, target, 1500.0);
        // directly overhead, and 1 ms faster than any ray can be
        let seg = RaySegment::between(&svp, 0.0, 1500.0).unwrap();
        m[0].one_way_time = seg.propagation_time(std::f64::consts::FRAC_PI_2).unwrap() - 1e-3;
        let link = Link::new(&svp, 0.0, 1500.0).unwrap();
        assert_eq!(link.range_for_time(m[0].one_way_time, 1e-5).unwrap(), 0.0);
        let res = irtul_localize(&svp, &m, IrtulConfig::default()).unwrap();
        assert!(res.position.z.is_finite());
    }

    #[test]
    fn loss_is_continuous_where_a_reference_loses_its_ray() {
        let svp = SoundVelocityProfile::new(vec![(0.0, 1500.0), (3000.0, 1500.0)]).unwrap();
        let target = Pos::new(2000.0, 2000.0, 1500.0);
        let refs = [
            Pos::new(2100.0, 2000.0, 0.0),
            Pos::new(0.0, 0.0, 0.0),
            Pos::new(4000.0, 0.0, 0.0),
            Pos::new(0.0, 4000.0, 3000.0),
            Pos::new(4000.0, 4000.0, 3000.0),
        ];
        let m = meas(&refs, target, 1500.0);
        // the overhead reference's vertical time passes its measured time near
        // 1500 + 100^2 / (2 * 1500) ~ 1503.3 m
        let c = IrtulConfig {
            time_tolerance: 1e-9,
            range_tolerance: 1e-6,
            ..IrtulConfig::default()
        };
        let losses: Vec<f64> = (0..=40)
            .map(|k| {
                fit_at_depth(&svp, &m, 1502.0 + 0.1 * k as f64, &c, 0, 1.0)
                    .unwrap()
                    .loss
            })
            .collect();
        for w in losses.windows(2) {
            assert!((w[1] - w[0]).abs() < 1e-6, "{losses:?}");
        }
    }

    #[test]
    fn rejects_measurements_outside_profile() {
        let svp = SoundVelocityProfile::new(vec![(0.0, 1500.0), (100.0, 1500.0)]).unwrap();
        let refs = [Pos::new(0.0, 0.0, 0.0); 3]
            .into_iter()
            .chain([Pos::new(0.0, 0.0, 200.0)])
            .collect::<Vec<_>>();
        let m = meas(&refs, Pos::new(10.0, 10.0, 50.0), 1500.0);
        assert!(matches!(
            irtul_localize(&svp, &m, IrtulConfig::default()),
            Err(LocalizeError::InvalidMeasurement { reference: 3, .. })
        ));
    }
}

#[cfg(test)]
mod props {
    use proptest::prelude::*;

    use super::*;
    use crate::Pos;

    fn forward(svp: &SoundVelocityProfile<f64>, from: Pos, to: Pos) -> f64 {
        let seg = RaySegment::between(svp, from.z, to.z).unwrap();
        seg.propagation_time(
            seg.solve_angle_for_range(from.horizontal_distance(&to), 1e-6)
                .unwrap(),
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn accepted_loss_never_increases(
            tx in 3000.0f64..7000.0,
            ty in 3000.0f64..7000.0,
            tz in 200.0f64..2800.0,
            offsets in prop::collection::vec((-2500.0f64..2500.0, -2500.0f64..2500.0), 8),
            noise in prop::collection::vec(-3e-3f64..3e-3, 8),
            max_iterations in 1usize..40,
        ) {
            let svp = SoundVelocityProfile::new(vec![(0.0, 1520.0), (1000.0, 1480.0), (3000.0, 1500.0)]).unwrap();
            let target = Pos::new(tx, ty, tz);
            let m: Vec<_> = offsets
                .iter()
                .zip(&noise)
                .enumerate()
                .map(|(i, (&(dx, dy), &e))| {
                    let r = Pos::new(tx + dx, ty + dy, if i < 4 { 0.0 } else { 3000.0 });
                    Measurement { reference: i, one_way_time: forward(&svp, r, target) + e, reference_position: r }
                })
                .collect();
            let config = IrtulConfig { max_iterations, ..IrtulConfig::default() };
            let res = match irtul_localize(&svp, &m, config) {
                Ok(res) => res,
                // random geometries may be degenerate or push the rough fix out of range
                Err(_) => return Ok(()),
            };
            prop_assert!(res.iterations <= max_iterations);
            let accepted: Vec<f64> = res.accepted_losses().collect();
            for w in accepted.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }
}
