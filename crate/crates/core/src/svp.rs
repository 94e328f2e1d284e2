//! Piecewise-linear sound velocity profiles.
//!
//! A profile is an ordered list of `(depth, speed)` samples with speed linear
//! in depth between consecutive samples. Depth is in metres, positive
//! downward; speed in metres per second.

use std::io::Read;

use thiserror::Error;

use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate depth {0} m")]
    DuplicateDepth(f64),
    #[error("profile needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-positive or non-finite speed {speed} m/s at depth {depth} m")]
    BadSpeed { depth: f64, speed: f64 },
    #[error("non-finite depth")]
    BadDepth,
    #[error("depth {depth} m outside profile range [{min}, {max}] m")]
    OutOfRange { depth: f64, min: f64, max: f64 },
    #[error("zero-span segment at depth {0} m")]
    ZeroSpan(f64),
    #[error("requested {requested} points but the profile has only {available}")]
    TooManyPoints { requested: usize, available: usize },
    #[error("invalid simplification control: {0}")]
    InvalidControl(String),
    #[error("simplified profile [{sim_min}, {sim_max}] m does not cover [{min}, {max}] m")]
    Coverage {
        min: f64,
        max: f64,
        sim_min: f64,
        sim_max: f64,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Ordered depth/speed samples defining a stratified medium.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundVelocityProfile<T> {
    depths: Vec<T>,
    speeds: Vec<T>,
}

/// How far [`SoundVelocityProfile::simplify_dm_eicps`] goes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimplificationControl<T> {
    /// Stop once this many feature points are selected (endpoints included).
    PointCount(usize),
    /// Stop once the speed RMSE against the original drops below this value (m/s).
    RmseThreshold(T),
}

impl<T> Default for SimplificationControl<T> {
    /// Eight feature points, i.e. seven layers.
    fn default() -> Self {
        SimplificationControl::PointCount(8)
    }
}

impl<T: Real> SimplificationControl<T> {
    fn validate(&self) -> Result<(), ProfileError> {
        match *self {
            SimplificationControl::PointCount(n) if n < 2 => {
                Err(ProfileError::InvalidControl(format!("point count {n} < 2")))
            }
            SimplificationControl::RmseThreshold(r) if !(r > T::zero()) => Err(
                ProfileError::InvalidControl(format!("rmse threshold {r} must be > 0")),
            ),
            _ => Ok(()),
        }
    }
}

fn f<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

impl<T: Real> SoundVelocityProfile<T> {
    /// Builds a profile from `(depth, speed)` pairs in any order.
    pub fn new(mut points: Vec<(T, T)>) -> Result<Self, ProfileError> {
        if points.len() < 2 {
            return Err(ProfileError::TooFewPoints(points.len()));
        }
        for &(d, s) in &points {
            if !d.is_finite() {
                return Err(ProfileError::BadDepth);
            }
            if !s.is_finite() || s <= T::zero() {
                return Err(ProfileError::BadSpeed {
                    depth: f(d),
                    speed: f(s),
                });
            }
        }
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite depths"));
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(ProfileError::DuplicateDepth(f(w[0].0)));
        }
        let (depths, speeds) = points.into_iter().unzip();
        Ok(Self { depths, speeds })
    }

    /// Parses the two-column `depth_m,speed_mps` CSV format. A non-numeric
    /// first row is taken as a header.
    pub fn parse<R: Read>(reader: R) -> Result<Self, ProfileError> {
        let rows = read_numeric_csv(reader, 2)?;
        let points = rows
            .into_iter()
            .map(|r| (T::lit(r[0]), T::lit(r[1])))
            .collect();
        Self::new(points)
    }

    pub fn parse_str(text: &str) -> Result<Self, ProfileError> {
        Self::parse(text.as_bytes())
    }

    /// Writes the profile as `depth_m,speed_mps` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth_m,speed_mps\n");
        for (d, s) in self.points() {
            out.push_str(&format!("{},{}\n", f(d), f(s)));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of linear layers (`len() - 1`).
    pub fn layer_count(&self) -> usize {
        self.depths.len() - 1
    }

    pub fn depths(&self) -> &[T] {
        &self.depths
    }

    pub fn speeds(&self) -> &[T] {
        &self.speeds
    }

    pub fn points(&self) -> impl DoubleEndedIterator<Item = (T, T)> + ExactSizeIterator + '_ {
        self.depths.iter().copied().zip(self.speeds.iter().copied())
    }

    pub fn min_depth(&self) -> T {
        self.depths[0]
    }

    pub fn max_depth(&self) -> T {
        self.depths[self.depths.len() - 1]
    }

    pub fn contains(&self, depth: T) -> bool {
        depth >= self.min_depth() && depth <= self.max_depth()
    }

    /// Clamps `depth` into the profile's depth range.
    pub fn clamp_depth(&self, depth: T) -> T {
        depth.max(self.min_depth()).min(self.max_depth())
    }

    /// Speed gradient of layer `i` (between samples `i` and `i + 1`), in 1/s.
    pub fn gradient(&self, i: usize) -> T {
        (self.speeds[i + 1] - self.speeds[i]) / (self.depths[i + 1] - self.depths[i])
    }

    fn out_of_range(&self, depth: T) -> ProfileError {
        ProfileError::OutOfRange {
            depth: f(depth),
            min: f(self.min_depth()),
            max: f(self.max_depth()),
        }
    }

    /// Linearly interpolated speed; exact at sample depths.
    pub fn speed_at(&self, depth: T) -> Result<T, ProfileError> {
        if !self.contains(depth) {
            return Err(self.out_of_range(depth));
        }
        Ok(self.interpolate(depth))
    }

    // Caller guarantees `depth` is in range.
    fn interpolate(&self, depth: T) -> T {
        // first index with sample depth > depth
        let hi = self.depths.partition_point(|&d| d <= depth);
        if hi == 0 {
            return self.speeds[0];
        }
        let lo = hi - 1;
        if self.depths[lo] == depth || hi == self.depths.len() {
            return self.speeds[lo];
        }
        let (d0, d1) = (self.depths[lo], self.depths[hi]);
        let (s0, s1) = (self.speeds[lo], self.speeds[hi]);
        s0 + (s1 - s0) * ((depth - d0) / (d1 - d0))
    }

    /// Sub-profile spanning `[min(z_a, z_b), max(z_a, z_b)]` with interpolated
    /// endpoints and the interior samples kept as they are.
    pub fn segment(&self, z_a: T, z_b: T) -> Result<Self, ProfileError> {
        for z in [z_a, z_b] {
            if !self.contains(z) {
                return Err(self.out_of_range(z));
            }
        }
        if z_a == z_b {
            return Err(ProfileError::ZeroSpan(f(z_a)));
        }
        let (lo, hi) = if z_a < z_b { (z_a, z_b) } else { (z_b, z_a) };
        let mut depths = vec![lo];
        let mut speeds = vec![self.interpolate(lo)];
        for (d, s) in self.points().filter(|&(d, _)| d > lo && d < hi) {
            depths.push(d);
            speeds.push(s);
        }
        depths.push(hi);
        speeds.push(self.interpolate(hi));
        Ok(Self { depths, speeds })
    }

    /// Greedy feature-point simplification by maximum distance reduction.
    ///
    /// Starting from the two endpoints, each round adds the unselected sample
    /// whose speed deviates most from the current simplified curve (ties go
    /// to the shallower sample), until `control` is satisfied. The result's
    /// points are a subset of the input's.
    pub fn simplify_dm_eicps(
        &self,
        control: SimplificationControl<T>,
    ) -> Result<Self, ProfileError> {
        control.validate()?;
        let n = self.len();
        if let SimplificationControl::PointCount(k) = control {
            if k > n {
                return Err(ProfileError::TooManyPoints {
                    requested: k,
                    available: n,
                });
            }
        }
        let mut selected = vec![false; n];
        selected[0] = true;
        selected[n - 1] = true;
        let mut count = 2;

        loop {
            match control {
                SimplificationControl::PointCount(k) if count >= k => break,
                SimplificationControl::RmseThreshold(r) if self.selection_rmse(&selected) < r => {
                    break
                }
                _ => {}
            }
            if count == n {
                break;
            }
            let mut best: Option<(usize, T)> = None;
            let mut prev = 0;
            for i in 1..n {
                if selected[i] {
                    // every sample strictly between `prev` and `i` is unselected
                    for j in prev + 1..i {
                        let dist = (self.speeds[j] - self.chord(prev, i, self.depths[j])).abs();
                        if best.is_none_or(|(_, b)| dist > b) {
                            best = Some((j, dist));
                        }
                    }
                    prev = i;
                }
            }
            let (pick, _) = best.expect("unselected samples remain");
            selected[pick] = true;
            count += 1;
        }
        Ok(self.subset(&selected))
    }

    fn chord(&self, a: usize, b: usize, depth: T) -> T {
        let (d0, d1) = (self.depths[a], self.depths[b]);
        let (s0, s1) = (self.speeds[a], self.speeds[b]);
        s0 + (s1 - s0) * ((depth - d0) / (d1 - d0))
    }

    fn subset(&self, selected: &[bool]) -> Self {
        let (depths, speeds) = self
            .points()
            .zip(selected)
            .filter(|(_, &keep)| keep)
            .map(|(p, _)| p)
            .unzip();
        Self { depths, speeds }
    }

    fn selection_rmse(&self, selected: &[bool]) -> T {
        profile_rmse(self, &self.subset(selected)).expect("subset covers its source")
    }
}

/// Root mean square speed deviation of `simplified` from `original`,
/// evaluated at every sample depth of `original`.
pub fn profile_rmse<T: Real>(
    original: &SoundVelocityProfile<T>,
    simplified: &SoundVelocityProfile<T>,
) -> Result<T, ProfileError> {
    if simplified.min_depth() > original.min_depth()
        || simplified.max_depth() < original.max_depth()
    {
        return Err(ProfileError::Coverage {
            min: f(original.min_depth()),
            max: f(original.max_depth()),
            sim_min: f(simplified.min_depth()),
            sim_max: f(simplified.max_depth()),
        });
    }
    let sum: T = original
        .points()
        .map(|(d, s)| {
            let e = s - simplified.interpolate(d);
            e * e
        })
        .sum();
    Ok((sum / T::from_usize(original.len()).expect("usize fits")).sqrt())
}

/// Reads a headerless-or-headed numeric CSV with exactly `columns` columns.
/// A first row that does not parse as numbers is treated as a header.
pub(crate) fn read_numeric_csv<R: Read>(
    reader: R,
    columns: usize,
) -> Result<Vec<Vec<f64>>, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| ProfileError::Io(e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) if values.len() == columns => {
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return Err(ProfileError::Malformed {
                        line,
                        reason: format!("non-finite value {v}"),
                    });
                }
                rows.push(values);
            }
            Ok(values) => {
                return Err(ProfileError::Malformed {
                    line,
                    reason: format!("expected {columns} columns, found {}", values.len()),
                })
            }
            Err(_) if rows.is_empty() && idx == 0 => {} // header
            Err(e) => {
                return Err(ProfileError::Malformed {
                    line,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(rows)
}
