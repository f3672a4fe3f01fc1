//! Agreement of the H- and Z-traces of Brownian paths.

use std::f64::consts::FRAC_PI_4;
use std::time::Instant;

use sigtrace_core::exit::SamplerRegistry;
use sigtrace_core::geometry::Regime;
use sigtrace_core::rng::Seed;
use sigtrace_core::stochastic::sample_brownian;
use sigtrace_core::tracer::{coincidence, trace, Family};
use sigtrace_core::LatticePoint;

use super::exit_probability::{box_escape, check_gap};
use super::{boundary_point, par_trials, stream, Experiment, ExperimentError};
use crate::config::ExperimentConfig;
use crate::record;
use crate::report::{Check, Estimate, Report};
use crate::stats::proportion_se;

pub struct Coincidence;

const LEMMA: &str = "lemadd1";

/// `1 − 2ε⁴ − e^{−1/(2ε²)}`.
pub fn beta_faithful(epsilon: f64) -> f64 {
    1.0 - 2.0 * epsilon.powi(4) - (-0.5 / (epsilon * epsilon)).exp()
}

/// `(1 − q)^{⌊ε^{−6}⌋} − e^{−1/(2ε²)}` for a single-crossing failure rate `q`.
pub fn beta_relaxed(epsilon: f64, q: f64) -> f64 {
    let k = (epsilon.powi(-6) * (1.0 + 1e-12)).floor();
    (1.0 - q).powf(k) - (-0.5 / (epsilon * epsilon)).exp()
}

impl Experiment for Coincidence {
    fn id(&self) -> &'static str {
        "lemadd1"
    }

    fn source_lemma(&self) -> &'static str {
        LEMMA
    }

    fn description(&self) -> &'static str {
        "frequency with which the H- and Z-traces give the same word, against the recomputed lower bound"
    }

    fn defaults(&self) -> ExperimentConfig {
        ExperimentConfig {
            experiment: self.id().into(),
            epsilon: 0.2,
            trials: 10_000,
            level: 14,
            ..Default::default()
        }
    }

    fn run(&self, config: &ExperimentConfig) -> Result<Report, ExperimentError> {
        let started = Instant::now();
        let grid = config.grid()?;
        check_gap(&grid, config)?;
        let e = grid.epsilon;
        let mut report = Report::new(self.id(), LEMMA, config);

        let rows = par_trials(config.trials, |i| {
            let path = sample_brownian(Seed::new(config.seed, stream(0, i)), config.level, 1.0)?;
            let th = trace(&path, &grid, Family::H);
            let tz = trace(&path, &grid, Family::Z);
            let same = coincidence(&th, &tz).expect("same path and grid");
            Ok::<_, ExperimentError>((th.m, tz.m, same))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let n = rows.len() as u64;
        let hits = rows.iter().filter(|r| r.2).count() as u64;
        let freq = Estimate::proportion("coincidence", hits, n);
        let se = proportion_se(hits, n);

        let sampler = SamplerRegistry::default().build(&config.sampler, &config.sampler_params())?;
        let zbox = grid.boxes_for(LatticePoint::ORIGIN).z;
        let mut q_hat: f64 = 0.0;
        for (part, (name, angle)) in [("edge", 0.0), ("diagonal", FRAC_PI_4)].into_iter().enumerate() {
            let (count, _) = box_escape(
                &grid,
                boundary_point(&zbox, angle),
                sampler.as_ref(),
                config.trials,
                Seed::new(config.seed, stream(part as u64 + 1, 0)),
            )?;
            let est = Estimate::proportion(format!("crossing_failure_{name}"), count.escaped, count.resolved);
            q_hat = q_hat.max(est.value);
            report.estimate(est);
        }
        let beta_r = beta_relaxed(e, q_hat);
        let beta_p = beta_faithful(e);
        report.estimate(Estimate::point("beta_relaxed", beta_r, n));
        report.estimate(Estimate::point("beta_faithful", beta_p, 0));
        report.estimate(Estimate::mean(
            "M_H",
            &rows.iter().map(|r| r.0 as f64).collect::<Vec<_>>(),
        ));
        report.estimate(Estimate::mean(
            "M_Z",
            &rows.iter().map(|r| r.1 as f64).collect::<Vec<_>>(),
        ));
        report.bound(
            "relaxed-beta",
            LEMMA,
            grid.regime(),
            "freq >= beta' - 3 se",
            Some(beta_r - 3.0 * se),
            Some(freq.value),
            Check::from_bool(freq.value >= beta_r - 3.0 * se),
            format!(
                "beta' = (1-q)^floor(eps^-6) - exp(-1/(2 eps^2)) with measured q = {q_hat:.6e} (worst start on the Z boundary)"
            ),
        );
        report.bound(
            "faithful-beta",
            LEMMA,
            Regime::PaperFaithful,
            "freq >= 1 - 2 eps^4 - exp(-1/(2 eps^2))",
            Some(beta_p),
            Some(freq.value),
            Check::NotDeskCheckable,
            "holds for phi <= eps^10, where the H and Z boxes are numerically indistinguishable",
        );
        if beta_r <= 0.0 {
            report.note(format!(
                "recomputed lower bound is vacuous ({beta_r:.3e}): the measured crossing failure rate is compounded over floor(eps^-6) crossings"
            ));
        }
        report.estimate(freq);
        report.records = rows
            .iter()
            .enumerate()
            .map(|(i, &(mh, mz, same))| record! {"trial" => i, "M_H" => mh, "M_Z" => mz, "coincide" => same})
            .collect();
        Ok(report.finish(started))
    }
}
