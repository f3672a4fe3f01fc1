//! Piecewise-linear paths, dyadic Brownian sampling and the area diffusion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{segment_first_hit, HitMode, Point, RoundedSquare};
use crate::rng::{GaussianStream, Seed};

pub const MAX_LEVEL: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("a path needs at least two points, got {0}")]
    TooShort(usize),
    #[error("times and points differ in length ({times} vs {points})")]
    LengthMismatch { times: usize, points: usize },
    #[error("times must start at 0 and increase strictly (violation at index {0})")]
    Times(usize),
    #[error("dyadic level {0} outside 0..={MAX_LEVEL}")]
    Level(u32),
    #[error("horizon must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("path is not a dyadic Brownian sample")]
    NotDyadic,
    #[error("refinement target level {target} must exceed current level {current}")]
    RefineTarget { current: u32, target: u32 },
    #[error("time {0} outside the path horizon")]
    TimeOutOfRange(f64),
}

/// Timestamped polyline in the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRecord", into = "PathRecord")]
pub struct PiecewisePath {
    times: Vec<f64>,
    points: Vec<Point>,
    level: Option<u32>,
    seed: Option<Seed>,
}

#[derive(Serialize, Deserialize)]
struct PathRecord {
    times: Vec<f64>,
    points: Vec<Point>,
    #[serde(default)]
    level: Option<u32>,
    #[serde(default)]
    seed: Option<Seed>,
}

impl TryFrom<PathRecord> for PiecewisePath {
    type Error = PathError;
    fn try_from(r: PathRecord) -> Result<Self, PathError> {
        let mut p = PiecewisePath::new(r.times, r.points)?;
        p.level = r.level;
        p.seed = r.seed;
        Ok(p)
    }
}

impl From<PiecewisePath> for PathRecord {
    fn from(p: PiecewisePath) -> Self {
        PathRecord {
            times: p.times,
            points: p.points,
            level: p.level,
            seed: p.seed,
        }
    }
}

impl PiecewisePath {
    pub fn new(times: Vec<f64>, points: Vec<Point>) -> Result<Self, PathError> {
        if times.len() != points.len() {
            return Err(PathError::LengthMismatch {
                times: times.len(),
                points: points.len(),
            });
        }
        if points.len() < 2 {
            return Err(PathError::TooShort(points.len()));
        }
        if times[0] != 0.0 {
            return Err(PathError::Times(0));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(PathError::Times(i + 1));
        }
        Ok(Self {
            times,
            points,
            level: None,
            seed: None,
        })
    }

    /// Vertices at equally spaced times on `[0, 1]`.
    pub fn from_points(points: Vec<Point>) -> Result<Self, PathError> {
        let n = points.len();
        if n < 2 {
            return Err(PathError::TooShort(n));
        }
        let times = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Self::new(times, points)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn level(&self) -> Option<u32> {
        self.level
    }

    pub fn seed(&self) -> Option<Seed> {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty path")
    }

    pub fn start(&self) -> Point {
        self.points[0]
    }

    pub fn end(&self) -> Point {
        *self.points.last().expect("non-empty path")
    }

    /// Segments as `(t0, t1, a, b)`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, Point, Point)> + '_ {
        self.times
            .windows(2)
            .zip(self.points.windows(2))
            .map(|(t, p)| (t[0], t[1], p[0], p[1]))
    }

    /// Linear interpolation at time `t`.
    pub fn point_at(&self, t: f64) -> Result<Point, PathError> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(PathError::TimeOutOfRange(t));
        }
        let i = self.segment_index(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        Ok(self.points[i].lerp(self.points[i + 1], (t - t0) / (t1 - t0)))
    }

    /// Index of the segment `[times[i], times[i+1]]` holding `t`.
    fn segment_index(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.saturating_sub(1).min(self.times.len() - 2)
    }

    /// `self` followed by `other` translated to start at `self.end()`, with times shifted.
    pub fn concat(&self, other: &PiecewisePath) -> PiecewisePath {
        let shift = self.end() - other.start();
        let t0 = self.horizon();
        let mut times = self.times.clone();
        let mut points = self.points.clone();
        times.extend(other.times[1..].iter().map(|t| t + t0));
        points.extend(other.points[1..].iter().map(|&p| p + shift));
        PiecewisePath::new(times, points).expect("concatenation of valid paths")
    }

    /// Same trace run backwards, translated to start at the origin's image of the end point.
    pub fn reversed(&self) -> PiecewisePath {
        let h = self.horizon();
        let times = self.times.iter().rev().map(|t| h - t).collect();
        let points = self.points.iter().rev().copied().collect();
        PiecewisePath::new(times, points).expect("reversal of a valid path")
    }

    /// Multiply all coordinates by `c`.
    pub fn scaled(&self, c: f64) -> PiecewisePath {
        PiecewisePath {
            times: self.times.clone(),
            points: self.points.iter().map(|&p| p * c).collect(),
            level: self.level,
            seed: self.seed,
        }
    }

    /// Keep the dyadic points of a coarser level.
    pub fn restrict(&self, level: u32) -> Result<PiecewisePath, PathError> {
        let current = self.dyadic_level()?;
        if level > current {
            return Err(PathError::RefineTarget { current, target: level });
        }
        let stride = 1usize << (current - level);
        Ok(PiecewisePath {
            times: self.times.iter().step_by(stride).copied().collect(),
            points: self.points.iter().step_by(stride).copied().collect(),
            level: Some(level),
            seed: self.seed,
        })
    }

    fn dyadic_level(&self) -> Result<u32, PathError> {
        let level = self.level.ok_or(PathError::NotDyadic)?;
        if self.len() != (1usize << level) + 1 {
            return Err(PathError::NotDyadic);
        }
        let h = self.horizon();
        let n = (1u64 << level) as f64;
        let dyadic = self
            .times
            .iter()
            .enumerate()
            .all(|(j, &t)| (t - h * j as f64 / n).abs() <= 1e-12 * h);
        if dyadic {
            Ok(level)
        } else {
            Err(PathError::NotDyadic)
        }
    }
}

/// Planar Brownian motion from the origin on `[0, horizon]`, sampled at `2^level + 1`
/// dyadic times by the Lévy (midpoint bridge) construction.
///
/// Draw 0 of the seed's stream gives the endpoint; draw `2^(k-1) + j` gives the
/// `j`-th midpoint of level `k`. A sample at level `n` is therefore exactly the
/// restriction of the sample at any finer level.
pub fn sample_brownian(seed: Seed, level: u32, horizon: f64) -> Result<PiecewisePath, PathError> {
    if level > MAX_LEVEL {
        return Err(PathError::Level(level));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(PathError::Horizon(horizon));
    }
    let n = 1usize << level;
    let mut points = vec![Point::ORIGIN; n + 1];
    let mut stream = GaussianStream::at(seed, 0);
    let [gx, gy] = stream.next_pair();
    let sd = horizon.sqrt();
    points[n] = Point::new(sd * gx, sd * gy);
    fill_levels(&mut points, 0, level, horizon, &mut stream);
    let times = dyadic_times(level, horizon);
    Ok(PiecewisePath {
        times,
        points,
        level: Some(level),
        seed: Some(seed),
    })
}

/// Insert Brownian-bridge midpoints down to `to_level`. Existing points are kept bit-for-bit.
pub fn refine(path: &PiecewisePath, seed: Seed, to_level: u32) -> Result<PiecewisePath, PathError> {
    let current = path.dyadic_level()?;
    if to_level <= current {
        return Err(PathError::RefineTarget {
            current,
            target: to_level,
        });
    }
    if to_level > MAX_LEVEL {
        return Err(PathError::Level(to_level));
    }
    let horizon = path.horizon();
    let stride = 1usize << (to_level - current);
    let mut points = vec![Point::ORIGIN; (1usize << to_level) + 1];
    for (i, &p) in path.points.iter().enumerate() {
        points[i * stride] = p;
    }
    let mut stream = GaussianStream::at(seed, 1u64 << current);
    fill_levels(&mut points, current, to_level, horizon, &mut stream);
    let mut times = dyadic_times(to_level, horizon);
    // keep the coarse times exactly as given
    for (i, &t) in path.times.iter().enumerate() {
        times[i * stride] = t;
    }
    Ok(PiecewisePath {
        times,
        points,
        level: Some(to_level),
        seed: Some(seed),
    })
}

fn dyadic_times(level: u32, horizon: f64) -> Vec<f64> {
    let n = 1u64 << level;
    (0..=n).map(|j| horizon * j as f64 / n as f64).collect()
}

/// Fill levels `from+1 ..= to` of a `2^to + 1` point array whose level-`from` points are set.
/// `stream` must be positioned at draw `2^from`.
fn fill_levels(points: &mut [Point], from: u32, to: u32, horizon: f64, stream: &mut GaussianStream) {
    for k in from + 1..=to {
        let half = 1usize << (to - k);
        let sd = (horizon / (1u64 << (k + 1)) as f64).sqrt();
        for j in 0..1usize << (k - 1) {
            let left = j * 2 * half;
            let mid = left + half;
            let right = left + 2 * half;
            let [gx, gy] = stream.next_pair();
            let (a, b) = (points[left], points[right]);
            points[mid] = Point::new(0.5 * (a.x + b.x) + sd * gx, 0.5 * (a.y + b.y) + sd * gy);
        }
    }
}

/// Path of the degenerate diffusion `(X¹, X², X³)` with `dX³ = X² ∘ dX¹`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaPath {
    pub times: Vec<f64>,
    pub points: Vec<[f64; 3]>,
}

impl AreaPath {
    pub fn area(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p[2])
    }
}

/// Drive the area diffusion with a planar path. Each segment adds the exact
/// Stratonovich increment for linear interpolation, `½ (y_i + y_{i+1}) Δx`.
pub fn simulate_area_diffusion(driver: &PiecewisePath) -> AreaPath {
    let mut acc = 0.0;
    let mut points = Vec::with_capacity(driver.len());
    let p0 = driver.start();
    points.push([p0.x, p0.y, 0.0]);
    for (_, _, a, b) in driver.segments() {
        acc += 0.5 * (a.y + b.y) * (b.x - a.x);
        points.push([b.x, b.y, acc]);
    }
    AreaPath {
        times: driver.times.clone(),
        points,
    }
}

/// Earliest crossing of `∂sq` strictly after `from_time`: an exit if the path is
/// inside `sq` at `from_time`, an entry otherwise.
pub fn first_hit(path: &PiecewisePath, sq: &RoundedSquare, from_time: f64) -> Result<Option<(f64, Point)>, PathError> {
    let start = path.point_at(from_time)?;
    let mode = if sq.contains(start) {
        HitMode::Exit
    } else {
        HitMode::Enter
    };
    let first = path.segment_index(from_time);
    for i in first..path.len() - 1 {
        let (t0, t1) = (path.times[i], path.times[i + 1]);
        let (a, s0) = if i == first { (start, from_time) } else { (path.points[i], t0) };
        let b = path.points[i + 1];
        if s0 >= t1 {
            continue;
        }
        if let Some(hit) = segment_first_hit(a, b, sq, mode) {
            return Ok(Some((s0 + hit.t * (t1 - s0), hit.point)));
        }
    }
    Ok(None)
}
