//! Small-value profile of the bump-form integral over one visit of a box.

use std::time::Instant;

use sigtrace_core::exit::{simulate_until, Absorber, ExitProblem};
use sigtrace_core::forms::{bump_form, line_integral, OneForm};
use sigtrace_core::rng::{GaussianStream, Seed};
use sigtrace_core::{BoxKind, GridSpec, LatticePoint};

use super::{boundary_point, finite_or_null, par_trials, stream, AtomProfile, Experiment, ExperimentError};
use crate::config::ExperimentConfig;
use crate::record;
use crate::report::{Check, Estimate, Report};

pub struct EtaNonzero;

const LEMMA: &str = "lem-key1";

/// Result of one attempt started on `∂Z₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Visit {
    /// Reached `H₀` before leaving `V₀`; `η` over the whole visit.
    Conditioned { eta: f64, steps: usize },
    /// Left `V₀` before reaching `H₀`.
    Escaped { steps: usize },
    /// Step budget exhausted.
    Unresolved,
}

/// Start on `∂Z₀` at a uniform angle, run to `S₁` (hit `H₀`), `S₂` (exit `K₀`)
/// and `T` (exit `V₀` after `S₂`), integrating the bump form of the origin.
pub fn visit(grid: &GridSpec, dt: f64, max_steps: usize, rng: &mut GaussianStream) -> Result<Visit, ExperimentError> {
    let boxes = grid.boxes_for(LatticePoint::ORIGIN);
    let form = bump_form(*grid, LatticePoint::ORIGIN);
    let start = boundary_point(&boxes.z, std::f64::consts::TAU * rng.next_uniform());
    let first = ExitProblem::new(
        start,
        vec![Absorber::EnterBox { square: boxes.h }, Absorber::ExitBox { square: boxes.v }],
    )?;
    let leg1 = simulate_until(&first, dt, max_steps, rng);
    let mut steps = leg1.path.len() - 1;
    match leg1.absorber {
        None => return Ok(Visit::Unresolved),
        Some(1) => return Ok(Visit::Escaped { steps }),
        Some(_) => {}
    }
    let mut eta = line_integral(&leg1.path, &form as &dyn OneForm);
    let mut at = leg1.path.end();
    for square in [boxes.k, boxes.v] {
        let leg = simulate_until(&ExitProblem::new(at, vec![Absorber::ExitBox { square }])?, dt, max_steps, rng);
        if leg.absorber.is_none() {
            return Ok(Visit::Unresolved);
        }
        steps += leg.path.len() - 1;
        eta += line_integral(&leg.path, &form as &dyn OneForm);
        at = leg.path.end();
    }
    Ok(Visit::Conditioned { eta, steps })
}

impl Experiment for EtaNonzero {
    fn id(&self) -> &'static str {
        "lem-key1"
    }

    fn source_lemma(&self) -> &'static str {
        LEMMA
    }

    fn description(&self) -> &'static str {
        "no atom at zero for the bump-form integral over a box visit that reaches H"
    }

    fn defaults(&self) -> ExperimentConfig {
        ExperimentConfig {
            experiment: self.id().into(),
            epsilon: 0.2,
            trials: 10_000,
            sampler: "euler".into(),
            dt: 1e-7,
            max_steps: 2_000_000,
            ..Default::default()
        }
    }

    fn run(&self, config: &ExperimentConfig) -> Result<Report, ExperimentError> {
        let started = Instant::now();
        let grid = config.grid()?;
        let gap = grid.half_width(BoxKind::K) - grid.half_width(BoxKind::H);
        if gap <= 0.1 * config.dt.sqrt() {
            return Err(ExperimentError::Degenerate(format!(
                "H-K gap {gap:.3e} is below a tenth of the Euler step {:.3e}",
                config.dt.sqrt()
            )));
        }
        let mut report = Report::new(self.id(), LEMMA, config);
        let target = config.trials;
        let cap = 4 * target + 64;
        let mut visits: Vec<Visit> = Vec::new();
        let mut conditioned = 0;
        while conditioned < target && visits.len() < cap {
            let deficit = target - conditioned;
            let batch = (deficit + deficit / 8 + 16).min(cap - visits.len());
            let offset = visits.len();
            let more = par_trials(batch, |i| {
                let mut rng = GaussianStream::new(Seed::new(config.seed, stream(0, offset + i)));
                visit(&grid, config.dt, config.max_steps, &mut rng)
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
            conditioned += more.iter().filter(|v| matches!(v, Visit::Conditioned { .. })).count();
            visits.extend(more);
        }
        // keep attempts up to the target-th conditioning event
        let mut seen = 0;
        let keep = visits
            .iter()
            .position(|v| {
                if matches!(v, Visit::Conditioned { .. }) {
                    seen += 1;
                }
                seen == target
            })
            .map_or(visits.len(), |i| i + 1);
        visits.truncate(keep);

        let etas: Vec<f64> = visits
            .iter()
            .filter_map(|v| match v {
                Visit::Conditioned { eta, .. } => Some(*eta),
                _ => None,
            })
            .collect();
        let escaped = visits.iter().filter(|v| matches!(v, Visit::Escaped { .. })).count() as u64;
        let unresolved = visits.iter().filter(|v| matches!(v, Visit::Unresolved)).count() as u64;
        report.estimate(Estimate::proportion(
            "conditioning_rate",
            etas.len() as u64,
            visits.len() as u64 - unresolved,
        ));
        report.estimate(Estimate::mean("eta", &etas));
        report.estimate(Estimate::mean("abs_eta", &etas.iter().map(|x| x.abs()).collect::<Vec<_>>()));

        let full = AtomProfile::new(&etas, &config.deltas);
        let half = AtomProfile::new(&etas[..etas.len() / 2], &config.deltas);
        for (name, p) in [("full", &full), ("half", &half)] {
            if let Some(d) = p.density_at_zero() {
                report.estimate(Estimate::point(format!("density_at_zero_{name}"), d, p.n));
            }
            if let Some(d) = p.min_decay() {
                report.estimate(Estimate::point(format!("min_decade_decay_{name}"), d.min(f64::MAX), p.n));
            }
        }
        let enough = etas.len() >= target;
        let check = if !enough { Check::Inconclusive } else { full.check() };
        report.bound(
            "no-atom",
            LEMMA,
            grid.regime(),
            "fraction(|eta| < delta) / fraction(|eta| < delta/10) >= 5 over resolvable decades",
            Some(super::DECAY_FACTOR),
            full.min_decay().map(|d| d.min(f64::MAX)),
            check,
            format!(
                "{} conditioning events (target {target}), {escaped} escapes, {unresolved} unresolved; a decade is resolvable when at least {} events fall below the upper threshold and that fraction is at most {}",
                etas.len(),
                super::MIN_RESOLVABLE,
                super::MAX_RESOLVABLE_FRACTION
            ),
        );
        report.tables.insert("fractions".into(), full.table());
        report.tables.insert(
            "decades".into(),
            full.pairs
                .iter()
                .map(|&(hi, lo, r)| record! {"delta" => hi, "delta_next" => lo, "ratio" => finite_or_null(r)})
                .collect(),
        );
        report.records = visits
            .iter()
            .enumerate()
            .map(|(i, v)| match *v {
                Visit::Conditioned { eta, steps } => {
                    record! {"attempt" => i, "outcome" => "conditioned", "eta" => eta, "steps" => steps}
                }
                Visit::Escaped { steps } => {
                    record! {"attempt" => i, "outcome" => "escaped", "eta" => serde_json::Value::Null, "steps" => steps}
                }
                Visit::Unresolved => {
                    record! {"attempt" => i, "outcome" => "unresolved", "eta" => serde_json::Value::Null, "steps" => serde_json::Value::Null}
                }
            })
            .collect();
        Ok(report.finish(started))
    }
}
