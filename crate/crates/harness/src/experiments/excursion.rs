//! Excursions far from the start before entering a neighbouring H box.

use std::time::Instant;

use sigtrace_core::exit::{Absorber, ExitProblem, SamplerRegistry};
use sigtrace_core::rng::{GaussianStream, Seed};
use sigtrace_core::{BoxKind, GridSpec, LatticePoint, Point};

use super::{par_trials, stream, Experiment, ExperimentError};
use crate::config::ExperimentConfig;
use crate::record;
use crate::report::{Check, Estimate, Report};
use crate::stats::wilson;

pub struct ExcursionBound;

const LEMMA: &str = "lemc2";

/// `(1/3)^⌊1/(2ε)⌋`.
pub fn strip_bound(epsilon: f64) -> f64 {
    (1.0f64 / 3.0).powi((0.5 / epsilon).floor() as i32)
}

/// Grid with `φ = ε^10` unless `φ` is given.
fn grid_for(config: &ExperimentConfig, epsilon: f64) -> Result<GridSpec, ExperimentError> {
    Ok(GridSpec::new(
        epsilon,
        config.phi.unwrap_or(epsilon.powi(10)),
        config.alpha,
        config.beta,
    )?)
}

impl Experiment for ExcursionBound {
    fn id(&self) -> &'static str {
        "lemc2"
    }

    fn source_lemma(&self) -> &'static str {
        LEMMA
    }

    fn description(&self) -> &'static str {
        "probability of leaving the disk of radius 3*sqrt(2)*eps before entering another H box"
    }

    fn defaults(&self) -> ExperimentConfig {
        ExperimentConfig {
            experiment: self.id().into(),
            epsilon: 0.25,
            epsilons: vec![0.2, 0.25],
            trials: 100_000,
            alpha: 10.0,
            beta: 10.0,
            ..Default::default()
        }
    }

    fn run(&self, config: &ExperimentConfig) -> Result<Report, ExperimentError> {
        let started = Instant::now();
        let sampler = SamplerRegistry::default().build(&config.sampler, &config.sampler_params())?;
        let mut report = Report::new(self.id(), LEMMA, config);
        let mut eps = config.epsilons.clone();
        if !eps.contains(&config.epsilon) {
            eps.push(config.epsilon);
        }
        for (part, &e) in eps.iter().enumerate() {
            let grid = grid_for(config, e)?;
            let radius = 3.0 * 2f64.sqrt() * e;
            let problem = ExitProblem::new(
                Point::ORIGIN,
                vec![
                    Absorber::EnterLattice {
                        grid,
                        family: BoxKind::H,
                        exclude: LatticePoint::ORIGIN,
                    },
                    Absorber::ExitDisk {
                        center: Point::ORIGIN,
                        radius,
                    },
                ],
            )?;
            let base = stream(part as u64, 0);
            let outcomes = par_trials(config.trials, |i| {
                let mut rng = GaussianStream::new(Seed::new(config.seed, base + i as u64));
                sampler.sample(&problem, &mut rng)
            });
            let escaped = outcomes.iter().filter(|o| o.absorber == Some(1)).count() as u64;
            let unresolved = outcomes.iter().filter(|o| o.absorber.is_none()).count() as u64;
            let n = outcomes.len() as u64 - unresolved;
            let bound = strip_bound(e);
            let upper = wilson(escaped, n, 0.99).hi;
            let check = if unresolved > 0 {
                Check::Inconclusive
            } else {
                Check::from_bool(upper <= bound)
            };
            report.estimate(Estimate::proportion(format!("escape_eps{e}"), escaped, n));
            report.bound(
                &format!("strip-eps{e}"),
                LEMMA,
                grid.regime(),
                "upper99 <= (1/3)^floor(1/(2 eps))",
                Some(bound),
                Some(upper),
                check,
                format!(
                    "radius {radius:.6}, corner exponent {}, phi {:.3e}, {unresolved} trials hit the step limit",
                    grid.beta, grid.phi
                ),
            );
            report.records.extend(outcomes.iter().enumerate().map(|(i, o)| {
                record! {
                    "epsilon" => e,
                    "trial" => i,
                    "escaped" => o.absorber == Some(1),
                    "resolved" => o.absorber.is_some(),
                    "steps" => o.steps,
                }
            }));
        }
        Ok(report.finish(started))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bound_values() {
        assert_abs_diff_eq!(strip_bound(0.1), 4.115226337448560e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(strip_bound(0.25), 1.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(strip_bound(0.2), 1.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn default_grid_is_paper_faithful() {
        let c = ExcursionBound.defaults();
        for e in c.epsilons.clone() {
            assert_eq!(grid_for(&c, e).unwrap().regime(), sigtrace_core::geometry::Regime::PaperFaithful);
        }
    }
}
