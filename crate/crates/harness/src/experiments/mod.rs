//! Registry of Monte Carlo verifications selectable by id.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sigtrace_core::exit::ExitError;
use sigtrace_core::geometry::GeometryError;
use sigtrace_core::reconstruct::ReconstructError;
use sigtrace_core::signature::SignatureError;
use sigtrace_core::stochastic::PathError;
use sigtrace_core::{Point, RoundedSquare};

use crate::config::ExperimentConfig;
use crate::record;
use crate::report::{Check, Record, Report};

pub mod area;
pub mod coincidence;
pub mod eta;
pub mod excursion;
pub mod exit_probability;
pub mod identities;
pub mod reconstruction;

pub use area::AreaDensity;
pub use coincidence::Coincidence;
pub use eta::{visit, EtaNonzero};
pub use excursion::ExcursionBound;
pub use exit_probability::{box_escape, EscapeCount, ExitProbability};
pub use identities::{green_loop_residual, Identities};
pub use reconstruction::{reconstruct_trial, Reconstruction, TrialOutcome};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("unknown experiment {0:?}; known: {1}")]
    Unknown(String, String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Exit(#[from] ExitError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error("{0}")]
    Config(String),
}

/// One verification: defaults plus a deterministic run.
pub trait Experiment: Send + Sync {
    fn id(&self) -> &'static str;
    /// Label of the statement the experiment checks.
    fn source_lemma(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn defaults(&self) -> ExperimentConfig;
    fn run(&self, config: &ExperimentConfig) -> Result<Report, ExperimentError>;
}

/// Experiments keyed by id.
pub struct ExperimentRegistry {
    entries: BTreeMap<&'static str, Box<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, experiment: Box<dyn Experiment>) {
        self.entries.insert(experiment.id(), experiment);
    }

    pub fn ids(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn get(&self, id: &str) -> Result<&dyn Experiment, ExperimentError> {
        self.entries
            .get(id)
            .map(|e| e.as_ref())
            .ok_or_else(|| ExperimentError::Unknown(id.to_string(), self.ids().collect::<Vec<_>>().join(", ")))
    }
}

impl Default for ExperimentRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(ExitProbability));
        r.register(Box::new(ExcursionBound));
        r.register(Box::new(Coincidence));
        r.register(Box::new(EtaNonzero));
        r.register(Box::new(AreaDensity));
        r.register(Box::new(Identities));
        r.register(Box::new(Reconstruction));
        r
    }
}

pub fn exp_exit_probability(config: &ExperimentConfig) -> Result<Report, ExperimentError> {
    ExitProbability.run(config)
}

pub fn exp_excursion_bound(config: &ExperimentConfig) -> Result<Report, ExperimentError> {
    ExcursionBound.run(config)
}

pub fn exp_coincidence(config: &ExperimentConfig) -> Result<Report, ExperimentError> {
    Coincidence.run(config)
}

pub fn exp_eta_nonzero(config: &ExperimentConfig) -> Result<Report, ExperimentError> {
    EtaNonzero.run(config)
}

pub fn exp_area_density(config: &ExperimentConfig) -> Result<Report, ExperimentError> {
    AreaDensity.run(config)
}

pub fn exp_identities(config: &ExperimentConfig) -> Result<Report, ExperimentError> {
    Identities.run(config)
}

pub fn exp_reconstruction(config: &ExperimentConfig) -> Result<Report, ExperimentError> {
    Reconstruction.run(config)
}

/// Evaluate `f` on `0..n` in parallel, collected in index order.
pub fn par_trials<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Stream offset separating independent sub-experiments that share a base seed.
pub(crate) fn stream(part: u64, trial: usize) -> u64 {
    (part << 40) | trial as u64
}

/// Point of `∂square` in direction `angle` from its center.
pub fn boundary_point(square: &RoundedSquare, angle: f64) -> Point {
    let d = Point::new(angle.cos(), angle.sin());
    square.center + d * (1.0 / square.radial_scale(square.center + d))
}

/// Minimum count at the upper threshold for a decade pair to count as resolvable.
pub const MIN_RESOLVABLE: u64 = 200;
/// Upper threshold fractions above this are outside the small-δ regime.
pub const MAX_RESOLVABLE_FRACTION: f64 = 0.1;
/// Required drop of `fraction(|x| < δ)` per tenfold decrease of δ.
pub const DECAY_FACTOR: f64 = 5.0;

/// Small-value profile of a sample: `fraction(|x| < δ)` on a δ grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomProfile {
    pub n: u64,
    /// `(δ, count, fraction)` in decreasing δ.
    pub rows: Vec<(f64, u64, f64)>,
    /// `(δ, δ', fraction ratio)` for resolvable consecutive pairs.
    pub pairs: Vec<(f64, f64, f64)>,
}

impl AtomProfile {
    pub fn new(values: &[f64], deltas: &[f64]) -> Self {
        let mut abs: Vec<f64> = values.iter().map(|x| x.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let n = abs.len() as u64;
        let mut ds = deltas.to_vec();
        ds.sort_by(|a, b| b.total_cmp(a));
        ds.dedup();
        let rows: Vec<(f64, u64, f64)> = ds
            .iter()
            .map(|&d| {
                let c = abs.partition_point(|&x| x < d) as u64;
                (d, c, if n == 0 { 0.0 } else { c as f64 / n as f64 })
            })
            .collect();
        let pairs = rows
            .windows(2)
            .filter(|w| w[0].1 >= MIN_RESOLVABLE && w[0].2 <= MAX_RESOLVABLE_FRACTION)
            .map(|w| {
                let ratio = if w[1].1 == 0 { f64::INFINITY } else { w[0].2 / w[1].2 };
                (w[0].0, w[1].0, ratio)
            })
            .collect();
        Self { n, rows, pairs }
    }

    /// Smallest decay per tenfold step of δ among resolvable pairs.
    pub fn min_decay(&self) -> Option<f64> {
        self.pairs
            .iter()
            .map(|&(hi, lo, r)| if r.is_finite() { r.powf(1.0 / (hi / lo).log10()) } else { r })
            .min_by(f64::total_cmp)
    }

    /// Pass when every resolvable pair decays by [`DECAY_FACTOR`] per decade.
    pub fn check(&self) -> Check {
        match self.min_decay() {
            None => Check::Inconclusive,
            Some(d) => Check::from_bool(d >= DECAY_FACTOR),
        }
    }

    /// `fraction / (2δ)` at the smallest resolvable upper threshold.
    pub fn density_at_zero(&self) -> Option<f64> {
        let &(d, _, _) = self.pairs.last()?;
        let row = self.rows.iter().find(|r| r.0 == d)?;
        Some(row.2 / (2.0 * d))
    }

    pub fn table(&self) -> Vec<Record> {
        self.rows
            .iter()
            .map(|&(d, c, f)| record! {"delta" => d, "count" => c, "fraction" => f})
            .collect()
    }
}

/// Ratio as JSON, infinite ratios as `null`.
pub(crate) fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::Value::Null
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sigtrace_core::GridSpec;
    use sigtrace_core::BoxKind;

    #[test]
    fn registry_lists_all() {
        let r = ExperimentRegistry::default();
        let ids: Vec<_> = r.ids().collect();
        assert_eq!(ids, ["identities", "lem-key1", "lem-m1", "lemadd1", "lemc1", "lemc2", "reconstruction"]);
        for id in ids {
            let e = r.get(id).unwrap();
            assert_eq!(e.defaults().experiment, id);
            assert!(!e.source_lemma().is_empty());
        }
        assert!(matches!(r.get("nope"), Err(ExperimentError::Unknown(..))));
    }

    #[test]
    fn par_trials_is_ordered() {
        assert_eq!(par_trials(1000, |i| i * i), (0..1000).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn boundary_points_lie_on_boundary() {
        let sq = GridSpec::relaxed(0.2).unwrap().family_box(BoxKind::Z, sigtrace_core::LatticePoint::ORIGIN);
        for k in 0..16 {
            let p = boundary_point(&sq, k as f64 * 0.4);
            assert!(sq.signed_distance(p).abs() < 1e-12);
        }
    }

    #[test]
    fn atom_profile_uniform_sample() {
        // |x| uniform on [0, 1): fraction(δ) = δ
        let xs: Vec<f64> = (0..100_000).map(|i| (i as f64 + 0.5) / 100_000.0).collect();
        let p = AtomProfile::new(&xs, &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5]);
        assert_eq!(p.rows[0], (1e-1, 10_000, 0.1));
        // pairs need 200 events above and fraction at most 0.1
        assert_eq!(p.pairs.len(), 2);
        assert!((p.min_decay().unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(p.check(), Check::Pass);
        assert!((p.density_at_zero().unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn atom_profile_detects_atom() {
        let mut xs: Vec<f64> = (0..100_000).map(|i| (i as f64 + 0.5) / 100_000.0).collect();
        xs.extend(std::iter::repeat_n(0.0, 2000));
        let p = AtomProfile::new(&xs, &[1e-1, 1e-2, 1e-3, 1e-4]);
        assert_eq!(p.check(), Check::Fail);
        let rows: Vec<u64> = p.rows.iter().map(|r| r.1).collect();
        assert!(rows.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(AtomProfile::new(&xs[..10], &[1e-2, 1e-3]).check(), Check::Inconclusive);
    }
}
