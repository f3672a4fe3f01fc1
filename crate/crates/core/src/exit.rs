//! Absorbing-boundary problems for planar Brownian motion and interchangeable exit samplers.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoxKind, GridSpec, LatticePoint, Point, RoundedSquare};
use crate::rng::GaussianStream;
use crate::stochastic::PiecewisePath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExitError {
    #[error("unknown exit sampler {0:?}")]
    UnknownSampler(String),
    #[error("start point is already absorbed by absorber {0}")]
    StartAbsorbed(usize),
    #[error("no absorbers")]
    NoAbsorbers,
}

/// A set that stops the motion when reached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Absorber {
    /// Entering the closed rounded square.
    EnterBox { square: RoundedSquare },
    /// Leaving the rounded square.
    ExitBox { square: RoundedSquare },
    EnterDisk { center: Point, radius: f64 },
    ExitDisk { center: Point, radius: f64 },
    /// Entering any family box other than `exclude`.
    EnterLattice { grid: GridSpec, family: BoxKind, exclude: LatticePoint },
}

impl Absorber {
    /// Euclidean distance from `p` to the absorbing set; zero once absorbed.
    pub fn distance(&self, p: Point) -> f64 {
        match self {
            Absorber::EnterBox { square } => square.signed_distance(p).max(0.0),
            Absorber::ExitBox { square } => (-square.signed_distance(p)).max(0.0),
            Absorber::EnterDisk { center, radius } => (p.distance(*center) - radius).max(0.0),
            Absorber::ExitDisk { center, radius } => (radius - p.distance(*center)).max(0.0),
            Absorber::EnterLattice { grid, family, exclude } => {
                let e = grid.epsilon;
                let near = LatticePoint::new((p.x / e).round() as i64, (p.y / e).round() as i64);
                let mut best = f64::INFINITY;
                for dy in -2..=2 {
                    for dx in -2..=2 {
                        let z = LatticePoint::new(near.x + dx, near.y + dy);
                        if z == *exclude {
                            continue;
                        }
                        best = best.min(grid.family_box(*family, z).signed_distance(p));
                    }
                }
                best.max(0.0)
            }
        }
    }

    pub fn absorbed(&self, p: Point) -> bool {
        match self {
            Absorber::EnterBox { square } => square.contains(p),
            Absorber::ExitBox { square } => !square.contains(p),
            Absorber::EnterDisk { center, radius } => p.distance(*center) <= *radius,
            Absorber::ExitDisk { center, radius } => p.distance(*center) >= *radius,
            Absorber::EnterLattice { grid, family, exclude } => grid
                .locate(*family, p)
                .is_some_and(|z| z != *exclude),
        }
    }

    /// First segment parameter in `[0, 1]` at which `a → b` reaches the set.
    pub fn first_crossing(&self, a: Point, b: Point) -> Option<f64> {
        let enter = |iv: Option<(f64, f64)>| {
            let (lo, hi) = iv?;
            (hi >= 0.0 && lo <= 1.0).then_some(lo.max(0.0))
        };
        let leave = |iv: Option<(f64, f64)>| match iv {
            None => Some(0.0),
            Some((_, hi)) => (hi <= 1.0).then_some(hi.max(0.0)),
        };
        match self {
            Absorber::EnterBox { square } => enter(square.line_interval(a, b)),
            Absorber::ExitBox { square } => leave(square.line_interval(a, b)),
            Absorber::EnterDisk { center, radius } => enter(disk_interval(a, b, *center, *radius)),
            Absorber::ExitDisk { center, radius } => leave(disk_interval(a, b, *center, *radius)),
            Absorber::EnterLattice { grid, family, exclude } => grid
                .candidate_sites(*family, a, b)
                .filter(|z| z != exclude)
                .filter_map(|z| enter(grid.family_box(*family, z).line_interval(a, b)))
                .min_by(f64::total_cmp),
        }
    }
}

fn disk_interval(a: Point, b: Point, c: Point, r: f64) -> Option<(f64, f64)> {
    let d = b - a;
    let f = a - c;
    let qa = d.dot(d);
    if qa == 0.0 {
        return (f.dot(f) <= r * r).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let hb = f.dot(d);
    let disc = hb * hb - qa * (f.dot(f) - r * r);
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-hb - s) / qa, (-hb + s) / qa))
}

/// Start point and absorbing sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitProblem {
    pub start: Point,
    pub absorbers: Vec<Absorber>,
}

impl ExitProblem {
    pub fn new(start: Point, absorbers: Vec<Absorber>) -> Result<Self, ExitError> {
        if absorbers.is_empty() {
            return Err(ExitError::NoAbsorbers);
        }
        if let Some(i) = absorbers.iter().position(|a| a.absorbed(start)) {
            return Err(ExitError::StartAbsorbed(i));
        }
        Ok(Self { start, absorbers })
    }

    fn nearest(&self, p: Point) -> (usize, f64) {
        self.absorbers
            .iter()
            .enumerate()
            .map(|(i, a)| (i, a.distance(p)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("at least one absorber")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitOutcome {
    /// Index of the absorber reached, `None` if the step budget ran out.
    pub absorber: Option<usize>,
    pub point: Point,
    pub steps: usize,
}

/// Strategy for sampling which absorber a Brownian motion reaches first.
pub trait ExitSampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn sample(&self, problem: &ExitProblem, rng: &mut GaussianStream) -> ExitOutcome;
}

/// Walk on spheres: jump to a uniform point on the largest circle free of absorbers,
/// stop inside a shell of width `shell` around the nearest absorber.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkOnSpheres {
    pub shell: f64,
    pub max_steps: usize,
}

impl ExitSampler for WalkOnSpheres {
    fn name(&self) -> &'static str {
        "walk-on-spheres"
    }

    fn sample(&self, problem: &ExitProblem, rng: &mut GaussianStream) -> ExitOutcome {
        let mut p = problem.start;
        for steps in 0..self.max_steps {
            let (i, r) = problem.nearest(p);
            if r <= self.shell {
                return ExitOutcome {
                    absorber: Some(i),
                    point: p,
                    steps,
                };
            }
            let (s, c) = (TAU * rng.next_uniform()).sin_cos();
            p = p + Point::new(c, s) * r;
        }
        ExitOutcome {
            absorber: None,
            point: p,
            steps: self.max_steps,
        }
    }
}

/// Gaussian time stepping with segment-exact crossing detection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerSampler {
    pub dt: f64,
    pub max_steps: usize,
}

impl ExitSampler for EulerSampler {
    fn name(&self) -> &'static str {
        "euler"
    }

    fn sample(&self, problem: &ExitProblem, rng: &mut GaussianStream) -> ExitOutcome {
        let run = simulate_until(problem, self.dt, self.max_steps, rng);
        ExitOutcome {
            absorber: run.absorber,
            point: run.path.end(),
            steps: run.path.len() - 1,
        }
    }
}

/// A recorded Euler path stopped at the first absorber.
#[derive(Clone, Debug, PartialEq)]
pub struct StoppedPath {
    pub path: PiecewisePath,
    pub absorber: Option<usize>,
}

/// Brownian increments of variance `dt` per coordinate until an absorber is crossed;
/// the last vertex is the exact crossing point on the final segment.
pub fn simulate_until(problem: &ExitProblem, dt: f64, max_steps: usize, rng: &mut GaussianStream) -> StoppedPath {
    let sd = dt.sqrt();
    let mut p = problem.start;
    let mut times = vec![0.0];
    let mut points = vec![p];
    for step in 0..max_steps {
        let [gx, gy] = rng.next_pair();
        let q = p + Point::new(gx, gy) * sd;
        let hit = problem
            .absorbers
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.first_crossing(p, q).map(|t| (t, i)))
            .min_by(|x, y| x.0.total_cmp(&y.0));
        let t0 = step as f64 * dt;
        if let Some((t, i)) = hit {
            let x = p.lerp(q, t);
            let time = t0 + t * dt;
            if time > t0 {
                times.push(time);
                points.push(x);
            } else if let Some(last) = points.last_mut() {
                *last = x;
            }
            if points.len() == 1 {
                // absorbed at the very start; keep a two-point path
                times.push(t0 + f64::EPSILON.max(dt * 1e-12));
                points.push(x);
            }
            return StoppedPath {
                path: PiecewisePath::new(times, points).expect("increasing times"),
                absorber: Some(i),
            };
        }
        times.push(t0 + dt);
        points.push(q);
        p = q;
    }
    StoppedPath {
        path: PiecewisePath::new(times, points).expect("increasing times"),
        absorber: None,
    }
}

/// Parameters shared by the registered samplers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub shell: f64,
    pub dt: f64,
    pub max_steps: usize,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            shell: 1e-9,
            dt: 1e-6,
            max_steps: 10_000_000,
        }
    }
}

pub type SamplerFactory = fn(&SamplerParams) -> Box<dyn ExitSampler>;

/// Exit samplers selectable by name.
pub struct SamplerRegistry {
    entries: BTreeMap<&'static str, SamplerFactory>,
}

impl SamplerRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: SamplerFactory) {
        self.entries.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, name: &str, params: &SamplerParams) -> Result<Box<dyn ExitSampler>, ExitError> {
        self.entries
            .get(name)
            .map(|f| f(params))
            .ok_or_else(|| ExitError::UnknownSampler(name.to_string()))
    }
}

impl Default for SamplerRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("walk-on-spheres", |p| {
            Box::new(WalkOnSpheres {
                shell: p.shell,
                max_steps: p.max_steps,
            })
        });
        r.register("euler", |p| {
            Box::new(EulerSampler {
                dt: p.dt,
                max_steps: p.max_steps,
            })
        });
        r
    }
}

/// `P{reach radius r₂ before r₁}` from radius `ρ` for planar Brownian motion.
pub fn annulus_exit_probability(r1: f64, r2: f64, rho: f64) -> f64 {
    (rho / r1).ln() / (r2 / r1).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    fn annulus(rho: f64) -> ExitProblem {
        ExitProblem::new(
            Point::new(rho, 0.0),
            vec![
                Absorber::EnterDisk {
                    center: Point::ORIGIN,
                    radius: 0.5,
                },
                Absorber::ExitDisk {
                    center: Point::ORIGIN,
                    radius: 1.0,
                },
            ],
        )
        .unwrap()
    }

    fn outer_fraction(sampler: &dyn ExitSampler, problem: &ExitProblem, n: u64) -> f64 {
        let hits: usize = (0..n)
            .filter(|&i| {
                let mut rng = GaussianStream::new(Seed::new(61, i));
                sampler.sample(problem, &mut rng).absorber == Some(1)
            })
            .count();
        hits as f64 / n as f64
    }

    #[test]
    fn annulus_closed_form() {
        let u = annulus_exit_probability(0.09, 0.1, 0.0901);
        assert!((u - 0.01054).abs() < 5e-6, "{u}");
        assert_eq!(annulus_exit_probability(0.5, 1.0, 0.5), 0.0);
        assert_eq!(annulus_exit_probability(0.5, 1.0, 1.0), 1.0);
    }

    #[test]
    fn walk_on_spheres_matches_harmonic_value() {
        let problem = annulus(0.7);
        let wos = WalkOnSpheres {
            shell: 1e-8,
            max_steps: 100_000,
        };
        let n = 20_000;
        let p = outer_fraction(&wos, &problem, n);
        let u = annulus_exit_probability(0.5, 1.0, 0.7);
        let se = (u * (1.0 - u) / n as f64).sqrt();
        assert!((p - u).abs() < 3.5 * se, "{p} vs {u}");
    }

    #[test]
    fn euler_matches_harmonic_value() {
        let problem = annulus(0.7);
        let euler = EulerSampler {
            dt: 1e-4,
            max_steps: 1_000_000,
        };
        let n = 2_000;
        let p = outer_fraction(&euler, &problem, n);
        let u = annulus_exit_probability(0.5, 1.0, 0.7);
        let se = (u * (1.0 - u) / n as f64).sqrt();
        // time stepping misses boundary excursions; allow its O(sqrt dt) bias
        assert!((p - u).abs() < 3.5 * se + 0.02, "{p} vs {u}");
    }

    #[test]
    fn start_inside_target_rejected() {
        let sq = RoundedSquare::new(Point::ORIGIN, 0.1, 0.01).unwrap();
        let err = ExitProblem::new(Point::ORIGIN, vec![Absorber::EnterBox { square: sq }]).unwrap_err();
        assert_eq!(err, ExitError::StartAbsorbed(0));
        assert_eq!(ExitProblem::new(Point::ORIGIN, vec![]).unwrap_err(), ExitError::NoAbsorbers);
    }

    #[test]
    fn distances_agree_with_membership() {
        let g = GridSpec::relaxed(0.2).unwrap();
        let sq = g.family_box(BoxKind::Z, LatticePoint::ORIGIN);
        let absorbers = [
            Absorber::EnterBox { square: sq },
            Absorber::ExitBox { square: sq },
            Absorber::EnterDisk {
                center: Point::new(0.1, 0.0),
                radius: 0.05,
            },
            Absorber::ExitDisk {
                center: Point::ORIGIN,
                radius: 0.3,
            },
            Absorber::EnterLattice {
                grid: g,
                family: BoxKind::H,
                exclude: LatticePoint::ORIGIN,
            },
        ];
        let mut rng = GaussianStream::new(Seed::new(5, 5));
        for _ in 0..5000 {
            let [x, y] = rng.next_pair();
            let p = Point::new(0.15 * x, 0.15 * y);
            for a in &absorbers {
                let d = a.distance(p);
                if a.absorbed(p) {
                    assert!(d <= 1e-12);
                } else {
                    assert!(d > 0.0);
                    // the disk of radius d around p is free of the set
                    for k in 0..16 {
                        let (s, c) = (TAU * k as f64 / 16.0).sin_cos();
                        assert!(!a.absorbed(p + Point::new(c, s) * (0.999 * d)));
                    }
                }
            }
        }
    }

    #[test]
    fn lattice_distance_skips_excluded_box() {
        let g = GridSpec::relaxed(0.2).unwrap();
        let a = Absorber::EnterLattice {
            grid: g,
            family: BoxKind::H,
            exclude: LatticePoint::ORIGIN,
        };
        // at the origin the nearest other H box edge is 0.2 - 0.08 away
        assert!((a.distance(Point::ORIGIN) - 0.12).abs() < 1e-12);
        assert!(!a.absorbed(Point::ORIGIN));
        assert!(a.absorbed(Point::new(0.2, 0.0)));
    }

    #[test]
    fn simulate_until_stops_on_boundary() {
        let sq = RoundedSquare::new(Point::ORIGIN, 0.1, 0.01).unwrap();
        let problem = ExitProblem::new(Point::ORIGIN, vec![Absorber::ExitBox { square: sq }]).unwrap();
        for s in 0..20 {
            let mut rng = GaussianStream::new(Seed::new(71, s));
            let run = simulate_until(&problem, 1e-5, 1_000_000, &mut rng);
            assert_eq!(run.absorber, Some(0));
            assert!(sq.signed_distance(run.path.end()).abs() < 1e-12);
            assert!(run.path.points()[..run.path.len() - 1].iter().all(|p| sq.contains(*p)));
        }
    }

    #[test]
    fn registry_by_name() {
        let reg = SamplerRegistry::default();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["euler", "walk-on-spheres"]);
        let s = reg.build("walk-on-spheres", &SamplerParams::default()).unwrap();
        assert_eq!(s.name(), "walk-on-spheres");
        assert!(matches!(reg.build("nope", &SamplerParams::default()), Err(ExitError::UnknownSampler(_))));
    }

    #[test]
    fn samplers_agree_on_box_problem() {
        // hit H₀ before leaving V₀, from a point halfway through the gap
        let g = GridSpec::relaxed(0.25).unwrap();
        let (h, v) = (g.family_box(BoxKind::H, LatticePoint::ORIGIN), g.family_box(BoxKind::V, LatticePoint::ORIGIN));
        let start = Point::new(0.5 * (h.half_width + v.half_width), 0.0);
        let problem = ExitProblem::new(start, vec![Absorber::EnterBox { square: h }, Absorber::ExitBox { square: v }]).unwrap();
        let wos = WalkOnSpheres {
            shell: 1e-9,
            max_steps: 100_000,
        };
        let euler = EulerSampler {
            dt: 2e-7,
            max_steps: 10_000_000,
        };
        let n = 1500;
        let a = outer_fraction(&wos, &problem, n);
        let b = outer_fraction(&euler, &problem, n);
        let se = (a * (1.0 - a) / n as f64).sqrt() * 2f64.sqrt();
        assert!((a - b).abs() < 4.0 * se + 0.02, "{a} vs {b}");
    }
}
