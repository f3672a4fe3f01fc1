//! Hitting-time traces of a path through the H- or Z-family of boxes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoxKind, GridSpec, LatticePoint, Point};
use crate::stochastic::PiecewisePath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TracerError {
    #[error("traces come from different grids or horizons")]
    Provenance,
}

/// Which family of boxes drives a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    H,
    Z,
}

impl Family {
    pub fn kind(self) -> BoxKind {
        match self {
            Family::H => BoxKind::H,
            Family::Z => BoxKind::Z,
        }
    }
}

/// Sequence of lattice points.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeWord(pub Vec<LatticePoint>);

impl LatticeWord {
    pub fn new(entries: Vec<LatticePoint>) -> Self {
        Self(entries)
    }

    /// `⟨(0,0)⟩`.
    pub fn origin() -> Self {
        Self(vec![LatticePoint::ORIGIN])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[LatticePoint] {
        &self.0
    }

    pub fn last(&self) -> Option<LatticePoint> {
        self.0.last().copied()
    }

    /// Consecutive entries differ.
    pub fn is_admissible(&self) -> bool {
        self.0.windows(2).all(|w| w[0] != w[1])
    }

    pub fn pushed(&self, z: LatticePoint) -> LatticeWord {
        let mut v = self.0.clone();
        v.push(z);
        LatticeWord(v)
    }

    pub fn max_norm(&self) -> i64 {
        self.0.iter().map(|z| z.max_norm()).max().unwrap_or(0)
    }
}

impl fmt::Display for LatticeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨")?;
        for (i, z) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{z}")?;
        }
        write!(f, "⟩")
    }
}

/// Hit times and visited boxes. `times[0] = 0` belongs to the start box `(0,0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingTrace {
    pub family: Family,
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub word: LatticeWord,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default = "unit_horizon")]
    pub horizon: f64,
}

fn unit_horizon() -> f64 {
    1.0
}

/// Polyline through `εn_k` at the hit times.
pub type PolygonPath = PiecewisePath;

/// Successive entries into family boxes with an index different from the current one.
pub fn trace(path: &PiecewisePath, grid: &GridSpec, family: Family) -> HittingTrace {
    let kind = family.kind();
    let mut current = LatticePoint::ORIGIN;
    let mut times = vec![0.0];
    let mut word = vec![current];
    for (t0, t1, a, b) in path.segments() {
        let mut s = 0.0;
        loop {
            let from = a.lerp(b, s);
            let mut best: Option<(f64, LatticePoint)> = None;
            for z in grid.candidate_sites(kind, from, b) {
                if z == current {
                    continue;
                }
                let Some((lo, hi)) = grid.family_box(kind, z).line_interval(a, b) else {
                    continue;
                };
                if hi < s || lo > 1.0 {
                    continue;
                }
                let t = lo.max(s);
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, z));
                }
            }
            let Some((t, z)) = best else { break };
            let time = t0 + t * (t1 - t0);
            if time > *times.last().expect("seeded") {
                times.push(time);
                word.push(z);
            } else {
                // simultaneous with the previous event; keep the order of discovery
                *word.last_mut().expect("seeded") = z;
            }
            current = z;
            s = t;
            if s >= 1.0 {
                break;
            }
        }
    }
    let m = word.len() - 1;
    HittingTrace {
        family,
        epsilon: grid.epsilon,
        times,
        word: LatticeWord(word),
        m,
        horizon: path.horizon(),
    }
}

/// Vertex `εn_k` at time `τ_k`, constant after the last hit.
pub fn polygon(trace: &HittingTrace) -> PolygonPath {
    let mut times = trace.times.clone();
    let mut points: Vec<Point> = trace.word.entries().iter().map(|z| z.scaled(trace.epsilon)).collect();
    let end = *times.last().expect("nonempty trace");
    if end < trace.horizon {
        times.push(trace.horizon);
        points.push(*points.last().expect("nonempty trace"));
    }
    PiecewisePath::new(times, points).expect("trace times increase")
}

/// `M_H = M_Z` and the words agree.
pub fn coincidence(h: &HittingTrace, z: &HittingTrace) -> Result<bool, TracerError> {
    if h.epsilon != z.epsilon || h.horizon != z.horizon {
        return Err(TracerError::Provenance);
    }
    Ok(h.m == z.m && h.word == z.word)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use crate::stochastic::{refine, sample_brownian};
    use approx::assert_abs_diff_eq;

    fn lp(x: i64, y: i64) -> LatticePoint {
        LatticePoint::new(x, y)
    }

    fn grid() -> GridSpec {
        GridSpec::new(0.1, 0.01, 2.0, 3.0).unwrap()
    }

    #[test]
    fn straight_line_example() {
        let p = PiecewisePath::from_points(vec![Point::ORIGIN, Point::new(0.3, 0.0)]).unwrap();
        let t = trace(&p, &grid(), Family::H);
        assert_eq!(t.word.entries(), &[lp(0, 0), lp(1, 0), lp(2, 0), lp(3, 0)]);
        assert_eq!(t.m, 3);
        for (k, x) in [0.055, 0.155, 0.255].iter().enumerate() {
            assert_abs_diff_eq!(t.times[k + 1] * 0.3, x, epsilon = 1e-12);
        }
        let tz = trace(&p, &grid(), Family::Z);
        assert!(coincidence(&t, &tz).unwrap());
        let poly = polygon(&t);
        let xs: Vec<f64> = poly.points().iter().map(|p| p.x).collect();
        // constant tail after the last hit
        assert_eq!(poly.len(), 5);
        assert_eq!(poly.points()[4], poly.points()[3]);
        for (x, want) in xs.iter().zip([0.0, 0.1, 0.2, 0.3]) {
            assert_abs_diff_eq!(*x, want, epsilon = 1e-15);
        }
        assert!(poly.points().iter().all(|p| p.y == 0.0));
    }

    #[test]
    fn staying_inside() {
        let p = PiecewisePath::from_points(vec![Point::ORIGIN, Point::new(0.01, 0.02), Point::new(-0.03, 0.0)]).unwrap();
        let t = trace(&p, &grid(), Family::H);
        assert_eq!(t.word, LatticeWord::origin());
        assert_eq!(t.m, 0);
        let poly = polygon(&t);
        assert_eq!(poly.points(), &[Point::ORIGIN, Point::ORIGIN]);
        assert_eq!(poly.times(), &[0.0, 1.0]);
    }

    #[test]
    fn polygon_single_step() {
        let t = HittingTrace {
            family: Family::H,
            epsilon: 0.1,
            times: vec![0.0, 0.4],
            word: LatticeWord(vec![lp(0, 0), lp(1, 0)]),
            m: 1,
            horizon: 1.0,
        };
        let poly = polygon(&t);
        assert_eq!(poly.points()[0], Point::ORIGIN);
        assert_eq!(poly.points()[1], Point::new(0.1, 0.0));
        assert_eq!(poly.end(), Point::new(0.1, 0.0));
    }

    #[test]
    fn grazing_breaks_coincidence() {
        let g = grid();
        // touches Z_(1,1) between its edge 0.05495 and the H edge 0.055
        let p = PiecewisePath::from_points(vec![
            Point::ORIGIN,
            Point::new(0.05, 0.05),
            Point::new(0.05497, 0.1),
            Point::new(0.05, 0.1),
        ])
        .unwrap();
        let th = trace(&p, &g, Family::H);
        let tz = trace(&p, &g, Family::Z);
        assert_eq!(th.word, LatticeWord::origin());
        assert_eq!(tz.word.entries(), &[lp(0, 0), lp(1, 1)]);
        assert!(!coincidence(&th, &tz).unwrap());
        assert!(coincidence(&th, &th).unwrap());
        let mut other = tz.clone();
        other.epsilon = 0.2;
        assert_eq!(coincidence(&th, &other), Err(TracerError::Provenance));
    }

    #[test]
    fn brownian_traces_are_nested_and_admissible() {
        let g = GridSpec::relaxed(0.1).unwrap();
        for s in 0..40 {
            let p = sample_brownian(Seed::new(17, s), 12, 1.0).unwrap();
            let th = trace(&p, &g, Family::H);
            let tz = trace(&p, &g, Family::Z);
            assert!(th.word.is_admissible() && tz.word.is_admissible());
            assert!(th.m <= tz.m);
            assert!(th.times.windows(2).all(|w| w[1] > w[0]));
            for (zeta, tau) in tz.times.iter().zip(&th.times) {
                assert!(zeta <= tau, "seed {s}: {zeta} > {tau}");
            }
            // the boxes named in the word contain the hit points
            for (t, z) in th.times.iter().zip(th.word.entries()).skip(1) {
                let x = p.point_at(*t).unwrap();
                assert!(g.family_box(BoxKind::H, *z).signed_distance(x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn refinement_mostly_stable() {
        let g = GridSpec::relaxed(0.4).unwrap();
        let mut same = 0;
        for s in 0..50 {
            let seed = Seed::new(23, s);
            let p = sample_brownian(seed, 12, 1.0).unwrap();
            let q = refine(&p, seed, 14).unwrap();
            if trace(&p, &g, Family::H).word == trace(&q, &g, Family::H).word {
                same += 1;
            }
        }
        assert!(same >= 15, "only {same}/50 stable");
    }

    #[test]
    fn json_shape() {
        let p = PiecewisePath::from_points(vec![Point::ORIGIN, Point::new(0.12, 0.0)]).unwrap();
        let t = trace(&p, &grid(), Family::Z);
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["family"], "Z");
        assert_eq!(v["M"], 1);
        assert_eq!(v["word"], serde_json::json!([[0, 0], [1, 0]]));
        let back: HittingTrace = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }
}
