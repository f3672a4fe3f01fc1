//! Experiment reports: estimates, bound checks, per-trial records and their output files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sigtrace_core::geometry::Regime;

use crate::config::ExperimentConfig;
use crate::stats::{mean_se, normal_interval, proportion_se, wilson, Interval};

/// One row of per-trial output.
pub type Record = BTreeMap<String, Value>;

/// Build a [`Record`] from `key => value` pairs.
#[macro_export]
macro_rules! record {
    ($($k:expr => $v:expr),* $(,)?) => {{
        let mut r = $crate::report::Record::new();
        $( r.insert($k.to_string(), serde_json::json!($v)); )*
        r
    }};
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    /// Process exit code: 0 pass, 2 bound failure, 3 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 2,
            Status::Inconclusive => 3,
        }
    }

    pub fn worst(self, other: Status) -> Status {
        match (self, other) {
            (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
            (Status::Inconclusive, _) | (_, Status::Inconclusive) => Status::Inconclusive,
            _ => Status::Pass,
        }
    }
}

/// Outcome of one bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Pass,
    Fail,
    Inconclusive,
    /// Printed for reference; the bound is too small to resolve by simulation.
    NotDeskCheckable,
    /// Measured and printed, not asserted.
    Reported,
}

impl Check {
    pub fn asserted(self) -> bool {
        matches!(self, Check::Pass | Check::Fail | Check::Inconclusive)
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Check::Pass
        } else {
            Check::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci95: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci99: Option<Interval>,
}

impl Estimate {
    /// `k/n` with Wilson intervals.
    pub fn proportion(name: impl Into<String>, k: u64, n: u64) -> Self {
        Self {
            name: name.into(),
            value: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            n,
            std_error: (n > 0).then(|| proportion_se(k, n)),
            ci95: Some(wilson(k, n, 0.95)),
            ci99: Some(wilson(k, n, 0.99)),
        }
    }

    /// Sample mean with normal intervals.
    pub fn mean(name: impl Into<String>, xs: &[f64]) -> Self {
        let (m, se) = mean_se(xs);
        let ok = se.is_finite();
        Self {
            name: name.into(),
            value: if m.is_finite() { m } else { 0.0 },
            n: xs.len() as u64,
            std_error: ok.then_some(se),
            ci95: ok.then(|| normal_interval(m, se, 0.95)),
            ci99: ok.then(|| normal_interval(m, se, 0.99)),
        }
    }

    /// A derived number without sampling error attached.
    pub fn point(name: impl Into<String>, value: f64, n: u64) -> Self {
        Self {
            name: name.into(),
            value,
            n,
            std_error: None,
            ci95: None,
            ci99: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCheck {
    pub name: String,
    pub source_lemma: String,
    pub regime: Regime,
    /// Human-readable comparison, e.g. `upper99 <= bound`.
    pub relation: String,
    pub bound: Option<f64>,
    pub observed: Option<f64>,
    pub check: Check,
    pub detail: String,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SchemaError {
    #[error("bound {0:?} has no source lemma")]
    MissingLemma(String),
    #[error("asserted bound {0:?} lacks a bound or an observed value")]
    MissingValues(String),
    #[error("estimate {0:?} has a malformed interval")]
    Interval(String),
    #[error("estimate {0:?} is not finite")]
    NotFinite(String),
    #[error("record {0} has different columns from record 0")]
    Columns(usize),
    #[error("status {found:?} disagrees with the bounds ({expected:?})")]
    Status { expected: Status, found: Status },
    #[error("report is not valid JSON for the schema: {0}")]
    Json(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub experiment: String,
    pub source_lemma: String,
    pub config: ExperimentConfig,
    pub estimates: Vec<Estimate>,
    pub bounds: Vec<BoundCheck>,
    /// Named summary tables, e.g. sweep rows.
    pub tables: BTreeMap<String, Vec<Record>>,
    pub notes: Vec<String>,
    pub records: Vec<Record>,
    pub status: Status,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_seconds: Option<f64>,
}

impl Report {
    pub fn new(experiment: &str, source_lemma: &str, config: &ExperimentConfig) -> Self {
        Self {
            experiment: experiment.to_string(),
            source_lemma: source_lemma.to_string(),
            config: config.echo(),
            estimates: Vec::new(),
            bounds: Vec::new(),
            tables: BTreeMap::new(),
            notes: Vec::new(),
            records: Vec::new(),
            status: Status::Pass,
            wall_clock_seconds: None,
        }
    }

    pub fn estimate(&mut self, e: Estimate) -> &mut Self {
        self.estimates.push(e);
        self
    }

    pub fn find_estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn find_bound(&self, name: &str) -> Option<&BoundCheck> {
        self.bounds.iter().find(|b| b.name == name)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn bound(
        &mut self,
        name: &str,
        source_lemma: &str,
        regime: Regime,
        relation: &str,
        bound: Option<f64>,
        observed: Option<f64>,
        check: Check,
        detail: impl Into<String>,
    ) -> &mut Self {
        self.bounds.push(BoundCheck {
            name: name.to_string(),
            source_lemma: source_lemma.to_string(),
            regime,
            relation: relation.to_string(),
            bound,
            observed,
            check,
            detail: detail.into(),
        });
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    /// Status implied by the asserted bounds.
    pub fn derived_status(&self) -> Status {
        self.bounds.iter().fold(Status::Pass, |s, b| {
            s.worst(match b.check {
                Check::Fail => Status::Fail,
                Check::Inconclusive => Status::Inconclusive,
                _ => Status::Pass,
            })
        })
    }

    /// Set the status and the elapsed time since `started`.
    pub fn finish(mut self, started: Instant) -> Self {
        self.status = self.derived_status();
        self.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
        self
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        for b in &self.bounds {
            if b.source_lemma.trim().is_empty() {
                return Err(SchemaError::MissingLemma(b.name.clone()));
            }
            if matches!(b.check, Check::Pass | Check::Fail) && (b.bound.is_none() || b.observed.is_none()) {
                return Err(SchemaError::MissingValues(b.name.clone()));
            }
        }
        for e in &self.estimates {
            if !e.value.is_finite() || e.std_error.is_some_and(|s| !s.is_finite()) {
                return Err(SchemaError::NotFinite(e.name.clone()));
            }
            let bad = |iv: &Interval| !(iv.lo <= iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite();
            if e.ci95.as_ref().is_some_and(bad) || e.ci99.as_ref().is_some_and(bad) {
                return Err(SchemaError::Interval(e.name.clone()));
            }
            if let (Some(a), Some(b)) = (e.ci95, e.ci99) {
                if b.lo > a.lo || a.hi > b.hi {
                    return Err(SchemaError::Interval(e.name.clone()));
                }
            }
        }
        if let Some(first) = self.records.first() {
            let keys: BTreeSet<&String> = first.keys().collect();
            if let Some(i) = self.records.iter().position(|r| r.keys().collect::<BTreeSet<_>>() != keys) {
                return Err(SchemaError::Columns(i));
            }
        }
        let expected = self.derived_status();
        if expected != self.status {
            return Err(SchemaError::Status {
                expected,
                found: self.status,
            });
        }
        Ok(())
    }

    /// Parse and validate a serialized report.
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let r: Report = serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Serialization with the wall-clock field cleared.
    pub fn canonical_json(&self) -> String {
        Report {
            wall_clock_seconds: None,
            ..self.clone()
        }
        .to_json()
    }

    /// Per-trial records as CSV with the union of columns in sorted order.
    pub fn records_csv(&self) -> Result<String, csv::Error> {
        let columns: BTreeSet<&String> = self.records.iter().flat_map(|r| r.keys()).collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&columns)?;
        for r in &self.records {
            w.write_record(columns.iter().map(|c| match r.get(*c) {
                None | Some(Value::Null) => String::new(),
                Some(Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
            }))?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
    }

    /// Write `<experiment>.json` and `<experiment>.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join(format!("{}.json", self.experiment));
        let csv_path = dir.join(format!("{}.csv", self.experiment));
        std::fs::write(&json, self.to_json())?;
        std::fs::write(&csv_path, self.records_csv().map_err(std::io::Error::other)?)?;
        Ok((json, csv_path))
    }

    /// One line per estimate and bound.
    pub fn summary(&self) -> String {
        let mut s = format!("{} [{}]: {:?}\n", self.experiment, self.source_lemma, self.status);
        for e in &self.estimates {
            s.push_str(&format!("  {} = {:.6e} (n={})", e.name, e.value, e.n));
            if let Some(iv) = e.ci95 {
                s.push_str(&format!(" 95% [{:.6e}, {:.6e}]", iv.lo, iv.hi));
            }
            s.push('\n');
        }
        for b in &self.bounds {
            let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6e}"));
            s.push_str(&format!(
                "  {:?} {} ({:?}, {}): {} observed {} bound {}\n",
                b.check,
                b.name,
                b.regime,
                b.source_lemma,
                b.relation,
                fmt(b.observed),
                fmt(b.bound)
            ));
        }
        for n in &self.notes {
            s.push_str(&format!("  note: {n}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let cfg = ExperimentConfig {
            experiment: "demo".into(),
            ..Default::default()
        };
        let mut r = Report::new("demo", "lemc2", &cfg);
        r.estimate(Estimate::proportion("p", 3, 100));
        r.bound(
            "p-bound",
            "lemc2",
            Regime::PaperFaithful,
            "upper99 <= bound",
            Some(0.1),
            Some(0.08),
            Check::Pass,
            "",
        );
        r.records = vec![record! {"trial" => 0, "hit" => true}, record! {"trial" => 1, "hit" => false}];
        r.finish(Instant::now())
    }

    #[test]
    fn valid_report_round_trips() {
        let r = sample();
        r.validate().unwrap();
        let back = Report::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.status.exit_code(), 0);
    }

    #[test]
    fn schema_rejects_missing_regime_or_lemma() {
        let r = sample();
        let mut v: Value = serde_json::from_str(&r.to_json()).unwrap();
        v["bounds"][0].as_object_mut().unwrap().remove("regime");
        assert!(matches!(Report::from_json(&v.to_string()), Err(SchemaError::Json(_))));
        let mut bad = r.clone();
        bad.bounds[0].source_lemma.clear();
        assert_eq!(bad.validate(), Err(SchemaError::MissingLemma("p-bound".into())));
    }

    #[test]
    fn schema_rejects_inconsistent_status_and_columns() {
        let mut r = sample();
        r.bounds[0].check = Check::Fail;
        assert!(matches!(r.validate(), Err(SchemaError::Status { .. })));
        let mut r = sample();
        r.records[1].insert("extra".into(), Value::Null);
        assert_eq!(r.validate(), Err(SchemaError::Columns(1)));
    }

    #[test]
    fn status_precedence() {
        let mut r = sample();
        r.bound("x", "lemc1", Regime::Relaxed, "", None, None, Check::Inconclusive, "");
        assert_eq!(r.derived_status(), Status::Inconclusive);
        r.bound("y", "lemc1", Regime::Relaxed, "", Some(1.0), Some(2.0), Check::Fail, "");
        assert_eq!(r.derived_status(), Status::Fail);
        assert_eq!(Status::Fail.exit_code(), 2);
        assert_eq!(Status::Inconclusive.exit_code(), 3);
        r.bound("z", "lemc1", Regime::PaperFaithful, "", Some(1e-10), None, Check::NotDeskCheckable, "");
        assert_eq!(r.derived_status(), Status::Fail);
    }

    #[test]
    fn canonical_json_ignores_wall_clock() {
        let a = sample();
        let mut b = a.clone();
        b.wall_clock_seconds = Some(123.0);
        assert_ne!(a.to_json(), b.to_json());
        assert_eq!(a.canonical_json(), b.canonical_json());
    }

    #[test]
    fn csv_has_sorted_header() {
        let r = sample();
        let csv = r.records_csv().unwrap();
        assert_eq!(csv, "hit,trial\ntrue,0\nfalse,1\n");
    }
}
