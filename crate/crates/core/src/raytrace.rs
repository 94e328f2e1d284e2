//! Closed-form ray tracing through a piecewise-linear sound velocity profile.
//!
//! Within a layer of constant speed gradient a ray is a circular arc, so the
//! travel time and horizontal range across a depth span are closed-form
//! functions of the initial grazing angle `theta0` (measured from the
//! horizontal, `pi/2` is straight down). Both are strictly decreasing in
//! `theta0` for rays that do not turn, which is what makes the bisection
//! solvers at the bottom of this module valid.
//!
//! Writing `a = cos(theta0) / s0` for the Snell constant and
//! `tau_i = 1 - (s_i * a)^2` for the squared sine of the grazing angle at
//! boundary `i`, each layer contributes
//!
//! ```text
//! t_i = | dd_i / (s_i - s_{i-1}) * ln( s_{i-1} (1 + sqrt(tau_i)) / (s_i (1 + sqrt(tau_{i-1}))) ) |
//! h_i = | dd_i / (s_i - s_{i-1}) * (sqrt(tau_{i-1}) - sqrt(tau_i)) | / a
//! ```
//!
//! Both expressions cancel catastrophically as the gradient vanishes. They are
//! evaluated here in an algebraically identical form with the speed
//! difference divided out (see [`layer_time`] and [`layer_range`]), and
//! layers with `|s_i - s_{i-1}| < ISOVELOCITY_EPS` use the straight-ray limit.

use std::cell::Cell;

use thiserror::Error;

use crate::svp::{ProfileError, SoundVelocityProfile};
use crate::Real;

/// Speed difference (m/s) below which a layer is traced as isovelocity.
pub const ISOVELOCITY_EPS: f64 = 1e-6;
/// Bisection iteration cap.
pub const MAX_BISECTION_ITERATIONS: usize = 200;
/// Gap (rad) kept between the solvers' lower bracket and the turning limit.
pub const TURNING_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RayError {
    #[error("launch angle {theta} rad outside (0, pi/2]")]
    InvalidAngle { theta: f64 },
    #[error("launch angle {theta} rad turns inside the segment; minimum feasible angle is {min_feasible} rad")]
    Infeasible { theta: f64, min_feasible: f64 },
    #[error("measured time {target} s is below the vertical-ray time {minimum} s")]
    Unreachable { target: f64, minimum: f64 },
    #[error("target {target} beyond the feasible maximum {maximum}")]
    BeyondRange { target: f64, maximum: f64 },
    #[error("invalid target value {0}")]
    InvalidTarget(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(
        "bisection did not reach tolerance after {iterations} iterations (residual {residual})"
    )]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("oracle step must be positive, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Which end of a segment the ray leaves from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Heading {
    /// Source at the shallow end, propagating downward.
    #[default]
    Down,
    /// Source at the deep end, propagating upward.
    Up,
}

/// Travel time, horizontal range and boundary grazing angles of one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayTraceResult<T> {
    pub travel_time: T,
    pub horizontal_range: T,
    /// Grazing angle at each layer boundary in propagation order; index 0 is
    /// the launch angle.
    pub layer_angles: Vec<T>,
}

/// Bisection bounds on the launch angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleBracket<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Real> AngleBracket<T> {
    /// `(min_feasible + margin, pi/2]`.
    pub fn feasible(min_feasible: T) -> Result<Self, RayError> {
        let margin = T::lit(TURNING_MARGIN).max(T::epsilon() * T::lit(64.0));
        let lower = min_feasible + margin;
        let upper = T::FRAC_PI_2();
        if lower >= upper {
            return Err(RayError::Infeasible {
                theta: f(upper),
                min_feasible: f(min_feasible),
            });
        }
        Ok(Self { lower, upper })
    }
}

thread_local! {
    static LAYER_EVALUATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Layers evaluated by closed-form traces on this thread since the last reset.
pub fn layer_evaluations() -> u64 {
    LAYER_EVALUATIONS.with(Cell::get)
}

pub fn reset_layer_evaluations() {
    LAYER_EVALUATIONS.with(|c| c.set(0));
}

fn count_layers(n: usize) {
    LAYER_EVALUATIONS.with(|c| c.set(c.get() + n as u64));
}

fn f<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// A profile span together with the end the ray is launched from.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySegment<T> {
    profile: SoundVelocityProfile<T>,
    heading: Heading,
}

impl<T: Real> RaySegment<T> {
    pub fn new(profile: SoundVelocityProfile<T>, heading: Heading) -> Self {
        Self { profile, heading }
    }

    /// Segment of `svp` from a source at `z_source` to a receiver at `z_receiver`.
    pub fn between(
        svp: &SoundVelocityProfile<T>,
        z_source: T,
        z_receiver: T,
    ) -> Result<Self, RayError> {
        let profile = svp.segment(z_source, z_receiver)?;
        let heading = if z_source <= z_receiver {
            Heading::Down
        } else {
            Heading::Up
        };
        Ok(Self { profile, heading })
    }

    pub fn profile(&self) -> &SoundVelocityProfile<T> {
        &self.profile
    }

    pub fn heading(&self) -> Heading {
        self.heading
    }

    /// The same span traced from the other end.
    pub fn reversed(&self) -> Self {
        let heading = match self.heading {
            Heading::Down => Heading::Up,
            Heading::Up => Heading::Down,
        };
        Self {
            profile: self.profile.clone(),
            heading,
        }
    }

    fn view(&self) -> View<'_, T> {
        View {
            profile: &self.profile,
            heading: self.heading,
        }
    }

    pub fn propagation_time(&self, theta0: T) -> Result<T, RayError> {
        self.view().propagation_time(theta0)
    }

    pub fn horizontal_range(&self, theta0: T) -> Result<T, RayError> {
        self.view().horizontal_range(theta0)
    }

    pub fn trace(&self, theta0: T) -> Result<RayTraceResult<T>, RayError> {
        self.view().trace(theta0)
    }

    pub fn min_feasible_angle(&self) -> T {
        self.view().min_feasible_angle()
    }

    /// Launch angles the solvers search over.
    pub fn feasible_bracket(&self) -> Result<AngleBracket<T>, RayError> {
        self.view().bracket()
    }

    pub fn solve_angle_for_time(&self, t_target: T, tol: T) -> Result<T, RayError> {
        self.view().solve_angle_for_time(t_target, tol)
    }

    pub fn solve_angle_for_range(&self, h_target: T, tol: T) -> Result<T, RayError> {
        self.view().solve_angle_for_range(h_target, tol)
    }

    pub fn oracle_trace(&self, theta0: T, step: T) -> Result<(T, T), RayError> {
        self.view().oracle_trace(theta0, step)
    }

    pub fn oracle_path(&self, theta0: T, step: T) -> Result<Vec<(T, T)>, RayError> {
        self.view().oracle_path(theta0, step)
    }
}

/// Travel time (s) across `segment`, launched downward from its shallow end.
pub fn propagation_time<T: Real>(
    segment: &SoundVelocityProfile<T>,
    theta0: T,
) -> Result<T, RayError> {
    View::down(segment).propagation_time(theta0)
}

/// Horizontal range (m) across `segment`, launched downward from its shallow end.
pub fn horizontal_range<T: Real>(
    segment: &SoundVelocityProfile<T>,
    theta0: T,
) -> Result<T, RayError> {
    View::down(segment).horizontal_range(theta0)
}

pub fn trace<T: Real>(
    segment: &SoundVelocityProfile<T>,
    theta0: T,
) -> Result<RayTraceResult<T>, RayError> {
    View::down(segment).trace(theta0)
}

/// Infimum launch angle for which a downward ray crosses the whole segment
/// without turning: `arccos(s_first / max s)`.
pub fn min_feasible_angle<T: Real>(segment: &SoundVelocityProfile<T>) -> T {
    View::down(segment).min_feasible_angle()
}

pub fn solve_angle_for_time<T: Real>(
    segment: &SoundVelocityProfile<T>,
    t_target: T,
    tol: T,
) -> Result<T, RayError> {
    View::down(segment).solve_angle_for_time(t_target, tol)
}

pub fn solve_angle_for_range<T: Real>(
    segment: &SoundVelocityProfile<T>,
    h_target: T,
    tol: T,
) -> Result<T, RayError> {
    View::down(segment).solve_angle_for_range(h_target, tol)
}

/// Micro-slice integration of the ray: every layer is cut into depth slices
/// of at most `step` metres, each crossed in a straight line at the grazing
/// angle Snell's law gives for the slice's mid-depth speed. Returns
/// `(travel_time, horizontal_range)`. Converges to the closed form as
/// `step -> 0` and shares no code with it.
pub fn oracle_trace<T: Real>(
    segment: &SoundVelocityProfile<T>,
    theta0: T,
    step: T,
) -> Result<(T, T), RayError> {
    View::down(segment).oracle_trace(theta0, step)
}

/// Slice-boundary points `(horizontal offset, depth)` of the oracle ray.
pub fn oracle_path<T: Real>(
    segment: &SoundVelocityProfile<T>,
    theta0: T,
    step: T,
) -> Result<Vec<(T, T)>, RayError> {
    View::down(segment).oracle_path(theta0, step)
}

#[derive(Clone, Copy)]
struct View<'a, T> {
    profile: &'a SoundVelocityProfile<T>,
    heading: Heading,
}

/// Snell constant and derived quantities for one launch.
#[derive(Clone, Copy)]
struct Launch<T> {
    a: T,
}

impl<'a, T: Real> View<'a, T> {
    fn down(profile: &'a SoundVelocityProfile<T>) -> Self {
        Self {
            profile,
            heading: Heading::Down,
        }
    }

    fn len(&self) -> usize {
        self.profile.len()
    }

    /// Speed and depth of boundary `k` counted from the source.
    #[inline]
    fn boundary(&self, k: usize) -> (T, T) {
        let i = match self.heading {
            Heading::Down => k,
            Heading::Up => self.len() - 1 - k,
        };
        (self.profile.speeds()[i], self.profile.depths()[i])
    }

    /// `(s_{k-1}, s_k, thickness)` for every layer in propagation order.
    fn layers(&self) -> impl Iterator<Item = (T, T, T)> + '_ {
        (1..self.len()).map(move |k| {
            let (p, dp) = self.boundary(k - 1);
            let (q, dq) = self.boundary(k);
            (p, q, (dq - dp).abs())
        })
    }

    fn source_speed(&self) -> T {
        self.boundary(0).0
    }

    fn max_speed(&self) -> T {
        self.profile
            .speeds()
            .iter()
            .copied()
            .fold(T::zero(), T::max)
    }

    fn min_feasible_angle(&self) -> T {
        (self.source_speed() / self.max_speed())
            .min(T::one())
            .acos()
    }

    fn launch(&self, theta0: T) -> Result<Launch<T>, RayError> {
        let half_pi = T::FRAC_PI_2();
        if !(theta0 > T::zero() && theta0 <= half_pi) {
            return Err(RayError::InvalidAngle { theta: f(theta0) });
        }
        let cos0 = if theta0 == half_pi {
            T::zero()
        } else {
            theta0.cos()
        };
        let a = cos0 / self.source_speed();
        if self.max_speed() * a > T::one() {
            return Err(RayError::Infeasible {
                theta: f(theta0),
                min_feasible: f(self.min_feasible_angle()),
            });
        }
        Ok(Launch { a })
    }

    fn propagation_time(&self, theta0: T) -> Result<T, RayError> {
        let Launch { a } = self.launch(theta0)?;
        count_layers(self.len() - 1);
        Ok(self
            .layers()
            .map(|(p, q, dd)| layer_time(p, q, dd, a))
            .sum())
    }

    fn horizontal_range(&self, theta0: T) -> Result<T, RayError> {
        let Launch { a } = self.launch(theta0)?;
        count_layers(self.len() - 1);
        Ok(self
            .layers()
            .map(|(p, q, dd)| layer_range(p, q, dd, a))
            .sum())
    }

    fn trace(&self, theta0: T) -> Result<RayTraceResult<T>, RayError> {
        let travel_time = self.propagation_time(theta0)?;
        let horizontal_range = self.horizontal_range(theta0)?;
        let Launch { a } = self.launch(theta0)?;
        let mut layer_angles = Vec::with_capacity(self.len());
        layer_angles.push(theta0);
        for k in 1..self.len() {
            let c = self.boundary(k).0 * a;
            layer_angles.push(sin_from_cos(c).atan2(c));
        }
        Ok(RayTraceResult {
            travel_time,
            horizontal_range,
            layer_angles,
        })
    }

    fn bracket(&self) -> Result<AngleBracket<T>, RayError> {
        AngleBracket::feasible(self.min_feasible_angle())
    }

    fn solve_angle_for_time(&self, t_target: T, tol: T) -> Result<T, RayError> {
        if !(tol > T::zero()) {
            return Err(RayError::InvalidTolerance(f(tol)));
        }
        if !t_target.is_finite() || t_target <= T::zero() {
            return Err(RayError::InvalidTarget(f(t_target)));
        }
        let br = self.bracket()?;
        let t_vertical = self.propagation_time(br.upper)?;
        if (t_vertical - t_target).abs() <= tol {
            return Ok(br.upper);
        }
        if t_target < t_vertical {
            return Err(RayError::Unreachable {
                target: f(t_target),
                minimum: f(t_vertical),
            });
        }
        let t_lowest = self.propagation_time(br.lower)?;
        if t_target > t_lowest + tol {
            return Err(RayError::BeyondRange {
                target: f(t_target),
                maximum: f(t_lowest),
            });
        }
        bisect_decreasing(br, t_target, tol, |theta| self.propagation_time(theta))
    }

    fn solve_angle_for_range(&self, h_target: T, tol: T) -> Result<T, RayError> {
        if !(tol > T::zero()) {
            return Err(RayError::InvalidTolerance(f(tol)));
        }
        if !h_target.is_finite() || h_target < T::zero() {
            return Err(RayError::InvalidTarget(f(h_target)));
        }
        let br = self.bracket()?;
        if h_target == T::zero() {
            return Ok(br.upper);
        }
        // horizontal_range(pi/2) is exactly zero
        if h_target <= tol {
            return Ok(br.upper);
        }
        let h_widest = self.horizontal_range(br.lower)?;
        if h_target > h_widest + tol {
            return Err(RayError::BeyondRange {
                target: f(h_target),
                maximum: f(h_widest),
            });
        }
        bisect_decreasing(br, h_target, tol, |theta| self.horizontal_range(theta))
    }

    fn oracle_walk(
        &self,
        theta0: T,
        step: T,
        mut visit: impl FnMut(T, T),
    ) -> Result<(T, T), RayError> {
        if !(step > T::zero()) {
            return Err(RayError::InvalidStep(f(step)));
        }
        let half_pi = T::FRAC_PI_2();
        if !(theta0 > T::zero() && theta0 <= half_pi) {
            return Err(RayError::InvalidAngle { theta: f(theta0) });
        }
        let cos0 = if theta0 == half_pi {
            T::zero()
        } else {
            theta0.cos()
        };
        let snell = cos0 / self.source_speed();
        let (mut t, mut h) = (T::zero(), T::zero());
        let (_, z0) = self.boundary(0);
        let mut z = z0;
        visit(h, z);
        for k in 1..self.len() {
            let (p, dp) = self.boundary(k - 1);
            let (q, dq) = self.boundary(k);
            let slices = ((dq - dp).abs() / step).ceil().max(T::one());
            let n = slices.to_usize().expect("slice count fits usize");
            let dz = (dq - dp) / slices;
            let ds = (q - p) / slices;
            for j in 0..n {
                let jf = T::from_usize(j).expect("usize fits");
                // linear speed: mid-depth speed equals the slice mean
                let mid = p + ds * (jf + T::lit(0.5));
                let cos = mid * snell;
                if cos > T::one() {
                    return Err(RayError::Infeasible {
                        theta: f(theta0),
                        min_feasible: f(self.min_feasible_angle()),
                    });
                }
                let sin = (T::one() - cos * cos).sqrt();
                let adz = dz.abs();
                let dh = adz * cos / sin;
                let dl = (dh * dh + adz * adz).sqrt();
                t = t + dl / mid;
                h = h + dh;
                z = if j + 1 == n { dq } else { z + dz };
                visit(h, z);
            }
        }
        Ok((t, h))
    }

    fn oracle_trace(&self, theta0: T, step: T) -> Result<(T, T), RayError> {
        self.oracle_walk(theta0, step, |_, _| {})
    }

    fn oracle_path(&self, theta0: T, step: T) -> Result<Vec<(T, T)>, RayError> {
        let mut path = Vec::new();
        self.oracle_walk(theta0, step, |h, z| path.push((h, z)))?;
        Ok(path)
    }
}

#[inline]
fn sin_from_cos<T: Real>(c: T) -> T {
    ((T::one() - c) * (T::one() + c)).max(T::zero()).sqrt()
}

/// `ln(1 + x) / x`, continuous at zero.
#[inline]
fn ln1p_ratio<T: Real>(x: T) -> T {
    if x.abs() < T::epsilon() {
        T::one() - x / T::lit(2.0)
    } else {
        x.ln_1p() / x
    }
}

/// Travel time across one layer from speed `p` to speed `q` over
/// `thickness` metres, for Snell constant `a`.
///
/// With `u, v` the sines of the grazing angle at the two boundaries the
/// logarithm's argument minus one is `-(q - p) K / (q (1 + u))`, where
/// `K = 1 + (p + q) / (p v + q u)`, so the `1 / (q - p)` prefactor cancels
/// exactly.
#[inline]
pub(crate) fn layer_time<T: Real>(p: T, q: T, thickness: T, a: T) -> T {
    let u = sin_from_cos(p * a);
    if (q - p).abs() < T::lit(ISOVELOCITY_EPS) {
        let mean = (p + q) / T::lit(2.0);
        return thickness / (mean * u);
    }
    let v = sin_from_cos(q * a);
    let k = T::one() + (p + q) / (p * v + q * u);
    let denom = q * (T::one() + u);
    let x = -(q - p) * k / denom;
    thickness * k / denom * ln1p_ratio(x)
}

/// Horizontal range across one layer: `|dd / (q - p) (u - v)| / a` with
/// `u - v = (q^2 - p^2) a^2 / (u + v)`.
#[inline]
pub(crate) fn layer_range<T: Real>(p: T, q: T, thickness: T, a: T) -> T {
    let u = sin_from_cos(p * a);
    if (q - p).abs() < T::lit(ISOVELOCITY_EPS) {
        return thickness * (p * a) / u;
    }
    let v = sin_from_cos(q * a);
    thickness * (p + q) * a / (u + v)
}

/// Bisection for a strictly decreasing `eval` on `br`, stopping as soon as
/// `|eval(theta) - target| <= tol`.
fn bisect_decreasing<T: Real>(
    br: AngleBracket<T>,
    target: T,
    tol: T,
    mut eval: impl FnMut(T) -> Result<T, RayError>,
) -> Result<T, RayError> {
    let (mut lo, mut hi) = (br.lower, br.upper);
    let mut residual = T::infinity();
    for _ in 0..MAX_BISECTION_ITERATIONS {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = eval(mid)?;
        residual = value - target;
        if residual.abs() <= tol {
            return Ok(mid);
        }
        if value > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(RayError::NoConvergence {
        iterations: MAX_BISECTION_ITERATIONS,
        residual: f(residual),
    })
}
