//! Algebraic identities of signatures and form integrals over seeded corpora.

use std::time::Instant;

use sigtrace_core::forms::{
    approximate_form_by_polynomials, bump_form, iterated_form_integral, line_integral, CoordinateForm, OneForm,
};
use sigtrace_core::geometry::Regime;
use sigtrace_core::rng::{GaussianStream, Seed};
use sigtrace_core::signature::{
    chen_concat, path_signature, polynomial_identity_sides, shuffle, CoordinateWord, TensorSeries,
};
use sigtrace_core::stochastic::sample_brownian;
use sigtrace_core::{BoxKind, GridSpec, LatticePoint, PiecewisePath, Point};

use super::{par_trials, stream, Experiment, ExperimentError};
use crate::config::ExperimentConfig;
use crate::record;
use crate::report::{Check, Estimate, Report};

pub struct Identities;

const LEMMA: &str = "lem-t1";
pub const POLY_TOL: f64 = 1e-9;
pub const CHEN_TOL: f64 = 1e-10;
pub const SHUFFLE_TOL: f64 = 1e-10;
pub const REVERSAL_TOL: f64 = 1e-10;
pub const DUAL_TOL: f64 = 1e-8;
pub const GREEN_TOL: f64 = 1e-9;
pub const DUAL_CASES: usize = 50;
pub const GREEN_CASES: usize = 50;
pub const MAX_POLY_ORDER: usize = 5;
pub const MAX_SHUFFLE_TOTAL: usize = 6;

/// `|a − b| / max(1, |a|)`.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(1.0)
}

fn series_rel(a: &TensorSeries, b: &TensorSeries) -> f64 {
    let scale = a.coeffs().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    a.max_abs_diff(b) / scale
}

/// Seeded Brownian paths.
pub fn corpus(seed: u64, n: usize, level: u32) -> Result<Vec<PiecewisePath>, ExperimentError> {
    par_trials(n, |i| sample_brownian(Seed::new(seed, stream(9, i)), level, 1.0))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

/// All index tuples over `{1, 2}` of length `1..=max_n`.
fn tuples(max_n: usize) -> Vec<Vec<u8>> {
    (1..=max_n)
        .flat_map(|n| CoordinateWord::all(2, n).map(|w| w.letters().to_vec()))
        .collect()
}

/// Largest relative residual of the polynomial identity over tuples up to `max_n`.
pub fn poly_identity_residual(path: &PiecewisePath, max_n: usize) -> Result<f64, ExperimentError> {
    let mut worst: f64 = 0.0;
    for t in tuples(max_n) {
        let (lhs, rhs) = polynomial_identity_sides(path, &t)?;
        worst = worst.max(rel(lhs, rhs));
    }
    Ok(worst)
}

/// Signature of the whole path against the product over a split at the middle vertex.
pub fn chen_residual(path: &PiecewisePath, level: usize) -> Result<f64, ExperimentError> {
    let m = path.len() / 2;
    let first = PiecewisePath::new(path.times()[..=m].to_vec(), path.points()[..=m].to_vec())?;
    let t0 = path.times()[m];
    let second = PiecewisePath::new(
        path.times()[m..].iter().map(|t| t - t0).collect(),
        path.points()[m..].to_vec(),
    )?;
    let whole = path_signature(path, level);
    let joined = chen_concat(&path_signature(&first, level), &path_signature(&second, level))?;
    Ok(series_rel(&whole, &joined))
}

/// `S(u) S(v) = Σ_{w ∈ u ⧢ v} S(w)` for nonempty `u, v` with `|u| + |v| ≤ max_total`.
pub fn shuffle_residual(path: &PiecewisePath, max_total: usize) -> Result<f64, ExperimentError> {
    let sig = path_signature(path, max_total);
    let mut worst: f64 = 0.0;
    for a in 1..max_total {
        for b in 1..=max_total - a {
            for u in CoordinateWord::all(2, a) {
                for v in CoordinateWord::all(2, b) {
                    let lhs = sig.get(&u)? * sig.get(&v)?;
                    let mut rhs = 0.0;
                    for w in shuffle(&u, &v) {
                        rhs += sig.get(&w)?;
                    }
                    worst = worst.max(rel(lhs, rhs));
                }
            }
        }
    }
    Ok(worst)
}

/// `S(path) ⊗ S(reversed) = 1`.
pub fn reversal_residual(path: &PiecewisePath, level: usize) -> Result<f64, ExperimentError> {
    let s = path_signature(path, level);
    let r = path_signature(&path.reversed(), level);
    let prod = chen_concat(&s, &r)?;
    Ok(series_rel(&TensorSeries::identity(2, level), &prod))
}

/// Iterated integrals of coordinate forms against signature coefficients on seeded cases.
pub fn dual_residuals(seed: u64, cases: usize) -> Result<Vec<f64>, ExperimentError> {
    par_trials(cases, |i| {
        let mut rng = GaussianStream::new(Seed::new(seed, stream(10, i)));
        let path = sample_brownian(Seed::new(seed, stream(11, i)), 4 + (i % 5) as u32, 1.0)?;
        let len = 1 + (rng.next_uniform() * 4.0) as usize;
        let letters: Vec<u8> = (0..len).map(|_| 1 + (rng.next_uniform() * 2.0) as u8).collect();
        let forms: Vec<CoordinateForm> = letters.iter().map(|&l| CoordinateForm(l)).collect();
        let refs: Vec<&dyn OneForm> = forms.iter().map(|f| f as &dyn OneForm).collect();
        let direct = iterated_form_integral(&path, &refs, false)
            .map_err(|e| ExperimentError::Config(e.to_string()))?
            .value;
        let sig = path_signature(&path, len).get(&CoordinateWord::new(letters))?;
        Ok(rel(sig, direct))
    })
    .into_iter()
    .collect()
}

/// Shoelace area of a closed polyline.
pub fn signed_area(points: &[Point]) -> f64 {
    0.5 * points.windows(2).map(|w| w[0].x * w[1].y - w[1].x * w[0].y).sum::<f64>()
}

/// `|∮ φ^z + area|` for a closed polygon inside `K_z`.
pub fn green_loop_residual(grid: &GridSpec, z: LatticePoint, vertices: &[Point]) -> Result<f64, ExperimentError> {
    let mut pts = vertices.to_vec();
    pts.push(vertices[0]);
    let area = signed_area(&pts);
    let path = PiecewisePath::from_points(pts)?;
    Ok((line_integral(&path, &bump_form(*grid, z)) + area).abs())
}

/// Random loops inside K boxes of varying sites.
pub fn green_residuals(seed: u64, cases: usize) -> Result<Vec<f64>, ExperimentError> {
    let grid = GridSpec::relaxed(0.2)?;
    par_trials(cases, |i| {
        let mut rng = GaussianStream::new(Seed::new(seed, stream(12, i)));
        let z = LatticePoint::new(i as i64 % 5 - 2, (i as i64 / 5) % 5 - 2);
        let k = grid.family_box(BoxKind::K, z);
        let n = 3 + (rng.next_uniform() * 6.0) as usize;
        let reach = 0.7 * k.half_width;
        let vertices: Vec<Point> = (0..n)
            .map(|_| {
                let u = 2.0 * rng.next_uniform() - 1.0;
                let v = 2.0 * rng.next_uniform() - 1.0;
                k.center + Point::new(u, v) * reach
            })
            .collect();
        green_loop_residual(&grid, z, &vertices)
    })
    .into_iter()
    .collect()
}

/// `(degree, sup error, error of the line integral and of the doubly iterated integral)`
/// for polynomial fits of a bump form along a path kept inside the fit window.
pub fn polynomial_convergence(seed: u64, degrees: &[usize]) -> Result<Vec<(usize, f64, f64, f64)>, ExperimentError> {
    let grid = GridSpec::new(0.4, 0.35, 2.0, 3.0)?;
    let form = bump_form(grid, LatticePoint::ORIGIN);
    let window = grid.family_box(BoxKind::V, LatticePoint::ORIGIN);
    let raw = sample_brownian(Seed::new(seed, stream(13, 0)), 10, 1.0)?;
    let reach = raw.points().iter().map(|p| p.x.abs().max(p.y.abs())).fold(0.0, f64::max);
    let path = raw.scaled(0.6 * window.half_width / reach);
    let exact1 = line_integral(&path, &form);
    let both: [&dyn OneForm; 2] = [&form, &form];
    let exact2 = iterated_form_integral(&path, &both, false)
        .map_err(|e| ExperimentError::Config(e.to_string()))?
        .value;
    degrees
        .iter()
        .map(|&d| {
            let fit = approximate_form_by_polynomials(&form, d, &window).map_err(|e| ExperimentError::Config(e.to_string()))?;
            let p1 = line_integral(&path, &fit.form);
            let pair: [&dyn OneForm; 2] = [&fit.form, &fit.form];
            let p2 = iterated_form_integral(&path, &pair, false)
                .map_err(|e| ExperimentError::Config(e.to_string()))?
                .value;
            Ok((d, fit.sup_error, (p1 - exact1).abs(), (p2 - exact2).abs()))
        })
        .collect()
}

impl Experiment for Identities {
    fn id(&self) -> &'static str {
        "identities"
    }

    fn source_lemma(&self) -> &'static str {
        LEMMA
    }

    fn description(&self) -> &'static str {
        "polynomial, Chen, shuffle, reversal and dual-computation identities; Green oracle; polynomial approximation"
    }

    fn defaults(&self) -> ExperimentConfig {
        ExperimentConfig {
            experiment: self.id().into(),
            trials: 100,
            level: 10,
            truncation: 6,
            ..Default::default()
        }
    }

    fn run(&self, config: &ExperimentConfig) -> Result<Report, ExperimentError> {
        let started = Instant::now();
        let paths = corpus(config.seed, config.trials, config.level)?;
        let n = config.truncation;
        let rows = par_trials(paths.len(), |i| {
            let p = &paths[i];
            Ok::<_, ExperimentError>([
                poly_identity_residual(p, MAX_POLY_ORDER)?,
                chen_residual(p, n)?,
                shuffle_residual(p, MAX_SHUFFLE_TOTAL)?,
                reversal_residual(p, n)?,
            ])
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let dual = dual_residuals(config.seed, DUAL_CASES)?;
        let green = green_residuals(config.seed, GREEN_CASES)?;
        let mut report = Report::new(self.id(), LEMMA, config);
        let max = |xs: &mut dyn Iterator<Item = f64>| xs.fold(0.0f64, f64::max);
        let suites = [
            ("polynomial-identity", max(&mut rows.iter().map(|r| r[0])), POLY_TOL, rows.len()),
            ("chen", max(&mut rows.iter().map(|r| r[1])), CHEN_TOL, rows.len()),
            ("shuffle", max(&mut rows.iter().map(|r| r[2])), SHUFFLE_TOL, rows.len()),
            ("reversal-inverse", max(&mut rows.iter().map(|r| r[3])), REVERSAL_TOL, rows.len()),
            ("dual-computation", max(&mut dual.iter().copied()), DUAL_TOL, dual.len()),
            ("green-oracle", max(&mut green.iter().copied()), GREEN_TOL, green.len()),
        ];
        for (name, worst, tol, count) in suites {
            report.estimate(Estimate::point(format!("{name}_max_residual"), worst, count as u64));
            report.bound(
                name,
                LEMMA,
                Regime::PaperFaithful,
                "max residual <= tolerance",
                Some(tol),
                Some(worst),
                Check::from_bool(worst <= tol),
                format!("{count} cases; residuals relative to max(1, |reference|)"),
            );
        }
        let conv = polynomial_convergence(config.seed, &[4, 8, 12, 16, 20])?;
        let (first, last) = (conv[0], conv[conv.len() - 1]);
        report.bound(
            "polynomial-approximation",
            LEMMA,
            Regime::PaperFaithful,
            "error at the highest degree < error at the lowest",
            Some(first.3),
            Some(last.3),
            Check::from_bool(last.1 < first.1 && last.2 < first.2 && last.3 < first.3),
            "sup error, line integral and doubly iterated integral along a path inside the fit window",
        );
        report.tables.insert(
            "polynomial_convergence".into(),
            conv.iter()
                .map(|&(d, s, e1, e2)| record! {"degree" => d, "sup_error" => s, "line_error" => e1, "iterated_error" => e2})
                .collect(),
        );
        report.records = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                record! {"path" => i, "polynomial" => r[0], "chen" => r[1], "shuffle" => r[2], "reversal" => r[3]}
            })
            .collect();
        Ok(report.finish(started))
    }
}
