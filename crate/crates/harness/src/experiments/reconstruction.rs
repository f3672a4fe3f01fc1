//! End-to-end recovery of the traced polygon from extended-signature tables.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sigtrace_core::reconstruct::{
    build_table, detect_word, frechet_distance, BuilderRegistry, ReconstructError, ReconstructionResult,
    TableBuilder, TableParams,
};
use sigtrace_core::rng::Seed;
use sigtrace_core::stochastic::{refine, sample_brownian};
use sigtrace_core::tracer::{coincidence, polygon, trace, Family};
use sigtrace_core::{GridSpec, PiecewisePath};

use super::{par_trials, stream, Experiment, ExperimentError};
use crate::config::ExperimentConfig;
use crate::record;
use crate::report::{Check, Estimate, Record, Report};
use crate::stats::{median, quantile};

pub struct Reconstruction;

const LEMMA: &str = "th-main";
/// Target word-match rate on non-flagged trials.
pub const MATCH_TARGET: f64 = 0.95;
/// Target trace refinement stability.
pub const REFINEMENT_TARGET: f64 = 0.9;

/// Per-trial comparison of the detected word with the traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub m_h: usize,
    pub m_z: usize,
    pub coincide: bool,
    /// `None` when the table held several maximal words.
    pub m_hat: Option<usize>,
    pub ambiguous: usize,
    pub match_h: bool,
    pub match_z: bool,
    pub sandwich: bool,
    pub frechet: Option<f64>,
    pub frechet_tracer: f64,
    pub accepted_margin: Option<f64>,
    pub rejected_margin: Option<f64>,
    /// Detection unchanged when θ moves by a factor of ten either way.
    pub theta_robust: bool,
    pub entries: usize,
    pub truncated: bool,
    #[serde(skip)]
    pub result: Option<ReconstructionResult>,
}

/// Lattice window covering the path with a margin of two sites.
pub fn window_for(path: &PiecewisePath, epsilon: f64) -> i64 {
    let reach = path.points().iter().map(|p| p.x.abs().max(p.y.abs())).fold(0.0, f64::max);
    (reach / epsilon).ceil() as i64 + 2
}

/// Trace, build the table, detect and compare.
pub fn reconstruct_trial(
    path: &PiecewisePath,
    grid: &GridSpec,
    params: &TableParams,
    builder: &dyn TableBuilder,
) -> Result<TrialOutcome, ExperimentError> {
    let th = trace(path, grid, Family::H);
    let tz = trace(path, grid, Family::Z);
    let coincide = coincidence(&th, &tz).expect("same path and grid");
    let frechet_tracer = frechet_distance(&polygon(&th), path);
    let params = TableParams {
        window: window_for(path, grid.epsilon),
        ..*params
    };
    let table = build_table(path, grid, &params, builder)?;
    let mut out = TrialOutcome {
        m_h: th.m,
        m_z: tz.m,
        coincide,
        m_hat: None,
        ambiguous: 0,
        match_h: false,
        match_z: false,
        sandwich: false,
        frechet: None,
        frechet_tracer,
        accepted_margin: None,
        rejected_margin: None,
        theta_robust: false,
        entries: table.entries.len(),
        truncated: table.truncated,
        result: None,
    };
    match detect_word(&table) {
        Ok(res) => {
            let d = res.diagnostics;
            out.m_hat = Some(res.m_hat);
            out.match_h = res.word == th.word;
            out.match_z = res.word == tz.word;
            out.sandwich = th.m <= res.m_hat && res.m_hat <= tz.m;
            out.frechet = Some(frechet_distance(&res.polygon, path));
            out.accepted_margin = (!d.empty).then_some(d.accepted_margin);
            out.rejected_margin = Some(d.rejected_margin);
            out.theta_robust = (d.empty || d.accepted_margin >= 10.0) && d.rejected_margin <= 0.1;
            out.result = Some(res);
        }
        Err(ReconstructError::AmbiguousWord { count, .. }) => out.ambiguous = count,
        Err(e) => return Err(e.into()),
    }
    Ok(out)
}

fn opt(x: Option<f64>) -> serde_json::Value {
    x.filter(|v| v.is_finite()).map_or(serde_json::Value::Null, |v| serde_json::json!(v))
}

fn trial_record(epsilon: f64, i: usize, t: &TrialOutcome) -> Record {
    record! {
        "epsilon" => epsilon,
        "trial" => i,
        "M_H" => t.m_h,
        "M_Z" => t.m_z,
        "M_hat" => t.m_hat,
        "flagged" => t.m_hat.is_none(),
        "ambiguous" => t.ambiguous,
        "coincide" => t.coincide,
        "match_h" => t.match_h,
        "match_z" => t.match_z,
        "sandwich" => t.sandwich,
        "frechet" => opt(t.frechet),
        "frechet_tracer" => t.frechet_tracer,
        "accepted_margin" => opt(t.accepted_margin),
        "rejected_margin" => opt(t.rejected_margin),
        "theta_robust" => t.theta_robust,
        "entries" => t.entries,
        "truncated" => t.truncated,
    }
}

/// Share of paths whose H-word is unchanged by two further levels of bridge refinement.
pub fn refinement_stability(grid: &GridSpec, seed: u64, level: u32, trials: usize) -> Result<(u64, u64), ExperimentError> {
    let same = par_trials(trials, |i| {
        let s = Seed::new(seed, stream(1, i));
        let p = sample_brownian(s, level, 1.0)?;
        let q = refine(&p, s, level + 2)?;
        Ok::<_, ExperimentError>(trace(&p, grid, Family::H).word == trace(&q, grid, Family::H).word)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok((same.iter().filter(|&&s| s).count() as u64, trials as u64))
}

impl Experiment for Reconstruction {
    fn id(&self) -> &'static str {
        "reconstruction"
    }

    fn source_lemma(&self) -> &'static str {
        LEMMA
    }

    fn description(&self) -> &'static str {
        "detect the maximal nonzero word, rebuild the polygon and compare with the traced polygon over an eps sweep"
    }

    fn defaults(&self) -> ExperimentConfig {
        ExperimentConfig {
            experiment: self.id().into(),
            epsilon: 0.1,
            epsilons: vec![0.4, 0.2, 0.1],
            trials: 200,
            level: 16,
            refinement_trials: 500,
            ..Default::default()
        }
    }

    fn run(&self, config: &ExperimentConfig) -> Result<Report, ExperimentError> {
        let started = Instant::now();
        let builder = BuilderRegistry::default().build(&config.builder)?;
        let params = TableParams {
            theta: config.theta,
            ..TableParams::default()
        };
        let mut eps = config.epsilons.clone();
        if !eps.contains(&config.epsilon) {
            eps.push(config.epsilon);
        }
        eps.sort_by(|a, b| b.total_cmp(a));
        let mut report = Report::new(self.id(), LEMMA, config);
        let mut medians = Vec::new();
        let mut sweep = Vec::new();
        let mut primary_regime = None;
        for &e in &eps {
            let grid = config.with_epsilon(e).grid()?;
            let outcomes = par_trials(config.trials, |i| {
                let path = sample_brownian(Seed::new(config.seed, stream(0, i)), config.level, 1.0)?;
                reconstruct_trial(&path, &grid, &params, builder.as_ref())
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
            let n = outcomes.len() as u64;
            let ok: Vec<&TrialOutcome> = outcomes.iter().filter(|t| t.m_hat.is_some()).collect();
            let k = ok.len() as u64;
            let count = |f: &dyn Fn(&TrialOutcome) -> bool| ok.iter().filter(|t| f(t)).count() as u64;
            let match_h = count(&|t| t.match_h);
            let fr: Vec<f64> = ok.iter().filter_map(|t| t.frechet).collect();
            let fr_tracer: Vec<f64> = outcomes.iter().map(|t| t.frechet_tracer).collect();
            let med = median(&fr);
            medians.push((e, med));
            let rate = |c: u64| if k == 0 { 0.0 } else { c as f64 / k as f64 };
            sweep.push(record! {
                "epsilon" => e,
                "trials" => n,
                "flagged" => n - k,
                "match_h_rate" => rate(match_h),
                "match_z_rate" => rate(count(&|t| t.match_z)),
                "coincidence_rate" => outcomes.iter().filter(|t| t.coincide).count() as f64 / n.max(1) as f64,
                "sandwich_rate" => rate(count(&|t| t.sandwich)),
                "theta_robust_rate" => rate(count(&|t| t.theta_robust)),
                "truncated" => outcomes.iter().filter(|t| t.truncated).count(),
                "mean_M_H" => outcomes.iter().map(|t| t.m_h as f64).sum::<f64>() / n.max(1) as f64,
                "median_frechet" => opt(Some(med)),
                "q1_frechet" => opt(Some(quantile(&fr, 0.25))),
                "q3_frechet" => opt(Some(quantile(&fr, 0.75))),
                "median_frechet_tracer" => opt(Some(median(&fr_tracer))),
            });
            report.estimate(Estimate::proportion(format!("match_h_eps{e}"), match_h, k));
            report.estimate(Estimate::proportion(format!("match_z_eps{e}"), count(&|t| t.match_z), k));
            report.estimate(Estimate::proportion(format!("sandwich_eps{e}"), count(&|t| t.sandwich), k));
            report.estimate(Estimate::proportion(format!("flagged_eps{e}"), n - k, n));
            if e == config.epsilon {
                primary_regime = Some(grid.regime());
                let observed = rate(match_h);
                report.bound(
                    "word-match",
                    LEMMA,
                    grid.regime(),
                    "match rate with the H-trace word on non-flagged trials >= 0.95",
                    Some(MATCH_TARGET),
                    Some(observed),
                    if k == 0 { Check::Inconclusive } else { Check::from_bool(observed >= MATCH_TARGET) },
                    format!(
                        "eps {e}, phi {:.3e}, level {}, {k} non-flagged of {n}; H/Z coincidence on {} trials",
                        grid.phi,
                        config.level,
                        outcomes.iter().filter(|t| t.coincide).count()
                    ),
                );
                report.bound(
                    "sandwich",
                    LEMMA,
                    grid.regime(),
                    "M_H <= M_hat <= M_Z",
                    Some(1.0),
                    Some(rate(count(&|t| t.sandwich))),
                    Check::Reported,
                    "share of non-flagged trials",
                );
            }
            report.records.extend(outcomes.iter().enumerate().map(|(i, t)| trial_record(e, i, t)));
        }
        let violations = medians
            .windows(2)
            .filter(|w| !(w[1].1 < w[0].1))
            .count();
        report.bound(
            "frechet-monotone",
            LEMMA,
            primary_regime.unwrap_or(sigtrace_core::geometry::Regime::Relaxed),
            "median Frechet distance strictly decreases as eps decreases",
            Some(0.0),
            Some(violations as f64),
            if medians.len() < 2 {
                Check::Inconclusive
            } else {
                Check::from_bool(violations == 0)
            },
            medians
                .iter()
                .map(|(e, m)| format!("eps {e}: {m:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
        );
        if config.refinement_trials > 0 {
            let grid = config.grid()?;
            let (same, n) = refinement_stability(&grid, config.seed, config.level, config.refinement_trials)?;
            let est = Estimate::proportion("refinement_stable", same, n);
            report.bound(
                "refinement-stability",
                "tracer",
                grid.regime(),
                "H-word at level L+2 equals level L on >= 90% of trials",
                Some(REFINEMENT_TARGET),
                Some(est.value),
                Check::Reported,
                format!("eps {}, level {} vs {}", config.epsilon, config.level, config.level + 2),
            );
            report.estimate(est);
        }
        report.tables.insert("sweep".into(), sweep);
        Ok(report.finish(started))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sigtrace_core::reconstruct::LeftmostGreedy;
    use sigtrace_core::Point;

    #[test]
    fn confined_path_detects_origin() {
        let grid = GridSpec::relaxed(0.2).unwrap();
        let p = PiecewisePath::from_points(vec![Point::ORIGIN, Point::new(0.01, -0.02)]).unwrap();
        let t = reconstruct_trial(&p, &grid, &TableParams::default(), &LeftmostGreedy).unwrap();
        assert_eq!(t.m_hat, Some(0));
        assert!(t.match_h && t.match_z && t.sandwich && t.coincide);
        assert_eq!(t.frechet, Some(p.end().norm()));
    }

    #[test]
    fn straight_line_recovered() {
        let grid = GridSpec::relaxed(0.2).unwrap();
        let p = PiecewisePath::from_points(vec![Point::ORIGIN, Point::new(0.5, 0.013)]).unwrap();
        let t = reconstruct_trial(&p, &grid, &TableParams::default(), &LeftmostGreedy).unwrap();
        assert_eq!(t.m_hat, Some(t.m_h));
        assert!(t.match_h, "{t:?}");
        assert_eq!(window_for(&p, 0.2), 5);
    }
}
