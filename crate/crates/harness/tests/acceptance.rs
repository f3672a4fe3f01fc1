use std::io::Write;
use std::time::{Duration, Instant};

use sigtrace_core::reconstruct::frechet_distance;
use sigtrace_core::rng::{GaussianStream, Seed};
use sigtrace_core::{PiecewisePath, Point};
use sigtrace_harness::experiments::identities::{corpus, dual_residuals, green_residuals, poly_identity_residual};
use sigtrace_harness::experiments::{
    exp_coincidence, exp_eta_nonzero, exp_excursion_bound, exp_exit_probability, exp_identities, exp_reconstruction,
};
use sigtrace_harness::report::Check;
use sigtrace_harness::{Experiment, ExperimentRegistry, Report};

type Outcome = Result<(bool, String), String>;

fn defaults(id: &str) -> sigtrace_harness::ExperimentConfig {
    ExperimentRegistry::default().get(id).unwrap().defaults()
}

fn bound_passes(report: &Report, name: &str) -> Result<bool, String> {
    report
        .find_bound(name)
        .map(|b| b.check == Check::Pass)
        .ok_or_else(|| format!("bound {name} missing"))
}

fn bound_detail(report: &Report, name: &str) -> String {
    report
        .find_bound(name)
        .map(|b| format!("{name}: {:?} observed {:?} bound {:?}", b.check, b.observed, b.bound))
        .unwrap_or_default()
}

fn estimate(report: &Report, name: &str) -> Result<f64, String> {
    report
        .find_estimate(name)
        .map(|e| e.value)
        .ok_or_else(|| format!("estimate {name} missing"))
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let paths = corpus(20_240_601, 100, 10).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for p in &paths {
        worst = worst.max(poly_identity_residual(p, 4).map_err(|e| e.to_string())?);
    }
    let elapsed = started.elapsed();
    Ok((
        worst < 1e-9 && within(elapsed, 30),
        format!("max relative residual {worst:.3e} over 100 paths, n <= 4, {:.1} s", elapsed.as_secs_f64()),
    ))
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut cfg = defaults("identities");
    cfg.trials = 100;
    cfg.level = 10;
    let report = exp_identities(&cfg).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let names = ["chen", "shuffle", "reversal-inverse", "dual-computation"];
    let mut ok = within(elapsed, 60);
    for n in names {
        ok &= bound_passes(&report, n)?;
    }
    let detail = names.map(|n| bound_detail(&report, n)).join("; ");
    Ok((ok, format!("{detail}; {:.1} s", elapsed.as_secs_f64())))
}

/// Minimum over all monotone couplings of the maximal paired distance.
fn brute_force_frechet(a: &[Point], b: &[Point]) -> f64 {
    fn go(a: &[Point], b: &[Point], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc.max(a[i].distance(b[j]));
        if acc >= *best {
            return;
        }
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = acc;
            return;
        }
        if i + 1 < a.len() {
            go(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            go(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            go(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, 0, 0, 0.0, &mut best);
    best
}

fn criterion_3() -> Outcome {
    let mut rng = GaussianStream::new(Seed::new(3, 0));
    let polyline = |rng: &mut GaussianStream| {
        let n = 2 + (rng.next_uniform() * 5.0) as usize;
        let pts: Vec<Point> = (0..n)
            .map(|_| {
                let [x, y] = rng.next_pair();
                Point::new(x, y)
            })
            .collect();
        PiecewisePath::from_points(pts).unwrap()
    };
    let mut mismatches = 0;
    for _ in 0..200 {
        let (p, q) = (polyline(&mut rng), polyline(&mut rng));
        if frechet_distance(&p, &q) != brute_force_frechet(p.points(), q.points()) {
            mismatches += 1;
        }
    }
    let green = green_residuals(20_240_601, 50).map_err(|e| e.to_string())?;
    let green_max = green.iter().fold(0.0f64, |m, x| m.max(*x));
    let dual = dual_residuals(20_240_601, 50).map_err(|e| e.to_string())?;
    let dual_max = dual.iter().fold(0.0f64, |m, x| m.max(*x));
    Ok((
        mismatches == 0 && green.len() == 50 && green_max <= 1e-9 && dual.len() == 50 && dual_max <= 1e-8,
        format!(
            "frechet mismatches {mismatches}/200; green max residual {green_max:.3e} over {} loops; dual max residual {dual_max:.3e} over {} cases",
            green.len(),
            dual.len()
        ),
    ))
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let mut cfg = defaults("lemc2");
    cfg.epsilon = 0.25;
    cfg.epsilons = vec![0.25];
    cfg.trials = 100_000;
    let report = exp_excursion_bound(&cfg).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let b = report.bounds.first().ok_or("no bound")?;
    let bound_ok = b.bound.is_some_and(|v| (v - 1.0 / 9.0).abs() < 1e-12);
    let ok = report.bounds.iter().all(|b| b.check == Check::Pass) && bound_ok && within(elapsed, 300);
    Ok((
        ok,
        format!(
            "{}: {:?}, upper99 {:?} vs bound {:?}; {:.1} s",
            b.name,
            b.check,
            b.observed,
            b.bound,
            elapsed.as_secs_f64()
        ),
    ))
}

fn criterion_5() -> Outcome {
    let cfg = defaults("lemc1");
    if cfg.epsilon != 0.1 || cfg.phi != Some(0.001) || cfg.trials != 100_000 {
        return Err("lemc1 defaults differ from the criterion".into());
    }
    let report = exp_exit_probability(&cfg).map_err(|e| e.to_string())?;
    let u = estimate(&report, "annulus_harmonic")?;
    let p = estimate(&report, "annulus_escape")?;
    let faithful = report.find_bound("faithful-eps10").ok_or("faithful-eps10 missing")?;
    let ok = bound_passes(&report, "annulus-harmonic")?
        && (u - 0.01054).abs() < 5e-6
        && faithful.check == Check::NotDeskCheckable;
    Ok((ok, format!("u = {u:.6}, p_hat = {p:.6}; {}; faithful bound {:?}", bound_detail(&report, "annulus-harmonic"), faithful.check)))
}

fn criterion_6() -> Outcome {
    let cfg = defaults("lemadd1");
    let report = exp_coincidence(&cfg).map_err(|e| e.to_string())?;
    let freq = estimate(&report, "coincidence")?;
    let relaxed = estimate(&report, "beta_relaxed")?;
    let faithful = estimate(&report, "beta_faithful")?;
    let ok = bound_passes(&report, "relaxed-beta")? && (faithful - 0.99680).abs() < 5e-6 && cfg.trials == 10_000;
    Ok((ok, format!("coincidence {freq:.4} vs beta' {relaxed:.4e}; faithful beta {faithful:.5} (not desk-checkable)")))
}

fn criterion_7() -> Outcome {
    let cfg = defaults("lem-key1");
    let report = exp_eta_nonzero(&cfg).map_err(|e| e.to_string())?;
    Ok((bound_passes(&report, "no-atom")? && cfg.trials == 10_000, bound_detail(&report, "no-atom")))
}

fn criterion_8() -> Outcome {
    let started = Instant::now();
    let cfg = defaults("reconstruction");
    let report = exp_reconstruction(&cfg).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let ok = bound_passes(&report, "word-match")? && bound_passes(&report, "frechet-monotone")? && within(elapsed, 1200);
    Ok((
        ok,
        format!(
            "{}; {}; {:.1} s",
            bound_detail(&report, "word-match"),
            bound_detail(&report, "frechet-monotone"),
            elapsed.as_secs_f64()
        ),
    ))
}

fn criterion_9() -> Outcome {
    let registry = ExperimentRegistry::default();
    let mut differing = Vec::new();
    for id in registry.ids() {
        let exp: &dyn Experiment = registry.get(id).map_err(|e| e.to_string())?;
        let mut cfg = exp.defaults();
        cfg.trials = cfg.trials.min(200);
        cfg.refinement_trials = cfg.refinement_trials.min(5);
        if id == "reconstruction" {
            cfg.trials = 3;
            cfg.level = 12;
        }
        let a = exp.run(&cfg).map_err(|e| e.to_string())?;
        let b = exp.run(&cfg).map_err(|e| e.to_string())?;
        let csv = |r: &Report| r.records_csv().map_err(|e| e.to_string());
        if a.canonical_json() != b.canonical_json() || csv(&a)? != csv(&b)? {
            differing.push(id);
        }
    }
    Ok((
        differing.is_empty(),
        format!("{} experiments re-run; differing: {differing:?}", registry.ids().count()),
    ))
}

#[test]
fn acceptance() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "polynomial identity", criterion_1),
        (2, "algebra suite", criterion_2),
        (3, "oracle equivalences", criterion_3),
        (4, "excursion bound", criterion_4),
        (5, "annulus surrogate", criterion_5),
        (6, "coincidence", criterion_6),
        (7, "no atom for eta", criterion_7),
        (8, "end-to-end reconstruction", criterion_8),
        (9, "reproducibility", criterion_9),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout();
    writeln!(out).unwrap();
    for (n, name, check) in criteria {
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let verdict = if ok { "PASS" } else { "FAIL" };
        writeln!(out, "criterion {n} ({name}): {verdict} - {detail}").unwrap();
        out.flush().unwrap();
        if !ok {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
