//! Command-line interface of the `sigtrace` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sigtrace_core::reconstruct::{BuilderRegistry, TableParams};
use sigtrace_core::rng::Seed;
use sigtrace_core::signature::path_signature;
use sigtrace_core::stochastic::sample_brownian;
use sigtrace_core::tracer::{trace, Family};

use crate::config::{ExperimentConfig, Overrides};
use crate::experiments::{reconstruct_trial, ExperimentRegistry};
use crate::report::{Report, Status};

#[derive(Debug, Parser)]
#[command(name = "sigtrace", version, about = "Signatures, grid traces and Monte Carlo checks for planar Brownian paths")]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides shared by every command.
#[derive(Debug, Default, Args)]
pub struct Flags {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub phi: Option<f64>,
    #[arg(long, global = true)]
    pub level: Option<u32>,
    #[arg(long, global = true)]
    pub truncation: Option<usize>,
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Comma-separated ε values for sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON file with ExperimentConfig fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FamilyArg {
    H,
    Z,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dyadic Brownian path.
    Simulate,
    /// Hitting trace of a sampled path.
    Trace {
        #[arg(long, value_enum, default_value = "h")]
        family: FamilyArg,
    },
    /// Truncated signature of a sampled path.
    Signature,
    /// Reconstruct the polygon of a sampled path from its extended signatures.
    Reconstruct {
        #[arg(long, default_value = "leftmost")]
        builder: String,
    },
    /// Run one registered experiment.
    Verify { id: String },
    /// Run one experiment for each ε of `--epsilons`.
    Sweep { id: String },
    /// List registered experiments.
    List,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            epsilon: self.epsilon,
            phi: self.phi,
            level: self.level,
            truncation: self.truncation,
            theta: self.theta,
            epsilons: self.epsilons.clone(),
            out: self.out.clone(),
        }
    }

    /// `base`, then the config file, then the flags.
    pub fn resolve(&self, base: ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => base.merged_file(path)?,
            None => base,
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

fn emit(out: &mut dyn Write, dir: Option<&Path>, name: &str, value: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            let path = d.join(name);
            std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "{}", path.display())?;
        }
        None => writeln!(out, "{json}")?,
    }
    Ok(())
}

fn write_report(out: &mut dyn Write, report: &Report, dir: &Path) -> Result<()> {
    report.validate()?;
    let (json, csv) = report.write(dir)?;
    write!(out, "{}", report.summary())?;
    writeln!(out, "wrote {} and {}", json.display(), csv.display())?;
    Ok(())
}

/// Run `id` once per ε of the configuration and collect the results.
pub fn sweep(registry: &ExperimentRegistry, cfg: &ExperimentConfig) -> Result<Report> {
    let started = Instant::now();
    let exp = registry.get(&cfg.experiment)?;
    let mut report = Report::new(&format!("sweep-{}", exp.id()), exp.source_lemma(), cfg);
    let mut rows = Vec::new();
    for &e in &cfg.epsilons {
        let mut c = cfg.with_epsilon(e);
        c.epsilons = vec![e];
        let r = exp.run(&c)?;
        let mut row = crate::record! {"epsilon" => e, "status" => r.status};
        for est in &r.estimates {
            row.insert(est.name.clone(), serde_json::json!(est.value));
        }
        rows.push(row);
        for mut b in r.bounds {
            b.name = format!("eps{e}/{}", b.name);
            report.bounds.push(b);
        }
        report.records.extend(r.records.into_iter().map(|mut rec| {
            rec.insert("sweep_epsilon".into(), serde_json::json!(e));
            rec
        }));
    }
    report.tables.insert("sweep".into(), rows);
    Ok(report.finish(started))
}

/// Parse `args` (including the program name), run and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(status) => status.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<Status> {
    let registry = ExperimentRegistry::default();
    let plain = |name: &str| {
        cli.flags.resolve(ExperimentConfig {
            experiment: name.into(),
            ..Default::default()
        })
    };
    match &cli.command {
        Command::List => {
            for id in registry.ids() {
                let e = registry.get(id)?;
                writeln!(out, "{id:15} [{}] {}", e.source_lemma(), e.description())?;
            }
        }
        Command::Simulate => {
            let cfg = plain("simulate")?;
            let path = sample_brownian(Seed::new(cfg.seed, 0), cfg.level, 1.0)?;
            emit(out, cfg.out.as_deref(), "path.json", &path)?;
        }
        Command::Trace { family } => {
            let cfg = plain("trace")?;
            let path = sample_brownian(Seed::new(cfg.seed, 0), cfg.level, 1.0)?;
            let fam = match family {
                FamilyArg::H => Family::H,
                FamilyArg::Z => Family::Z,
            };
            emit(out, cfg.out.as_deref(), "trace.json", &trace(&path, &cfg.grid()?, fam))?;
        }
        Command::Signature => {
            let cfg = plain("signature")?;
            let path = sample_brownian(Seed::new(cfg.seed, 0), cfg.level, 1.0)?;
            emit(out, cfg.out.as_deref(), "signature.json", &path_signature(&path, cfg.truncation))?;
        }
        Command::Reconstruct { builder } => {
            let cfg = plain("reconstruct")?;
            let path = sample_brownian(Seed::new(cfg.seed, 0), cfg.level, 1.0)?;
            let b = BuilderRegistry::default().build(builder)?;
            let params = TableParams {
                theta: cfg.theta,
                ..TableParams::default()
            };
            let t = reconstruct_trial(&path, &cfg.grid()?, &params, b.as_ref())?;
            let value = serde_json::json!({"result": t.result, "trial": t});
            emit(out, cfg.out.as_deref(), "reconstruction.json", &value)?;
        }
        Command::Verify { id } => {
            let exp = registry.get(id)?;
            let cfg = cli.flags.resolve(exp.defaults())?;
            let report = exp.run(&cfg)?;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("reports"));
            write_report(out, &report, &dir)?;
            return Ok(report.status);
        }
        Command::Sweep { id } => {
            let exp = registry.get(id)?;
            let cfg = cli.flags.resolve(exp.defaults())?;
            let report = sweep(&registry, &cfg)?;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("reports"));
            write_report(out, &report, &dir)?;
            return Ok(report.status);
        }
    }
    Ok(Status::Pass)
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::run;
    use crate::{ExperimentRegistry, Report, Status};

    fn sigtrace(args: &[&str]) -> (i32, String) {
        let mut out = Vec::new();
        let mut argv = vec!["sigtrace"];
        argv.extend_from_slice(args);
        let code = run(argv, &mut out);
        (code, String::from_utf8(out).unwrap())
    }

    fn load(dir: &Path, id: &str) -> Report {
        let text = std::fs::read_to_string(dir.join(format!("{id}.json"))).unwrap();
        Report::from_json(&text).unwrap()
    }

    #[test]
    fn list_shows_every_experiment() {
        let (code, out) = sigtrace(&["list"]);
        assert_eq!(code, 0);
        for id in ExperimentRegistry::default().ids() {
            assert!(out.contains(id), "{id} missing from {out}");
        }
    }

    #[test]
    fn parse_and_lookup_errors_exit_one() {
        assert_eq!(sigtrace(&["verify", "no-such-lemma"]).0, 1);
        assert_eq!(sigtrace(&["verify"]).0, 1);
        assert_eq!(sigtrace(&["list", "--seed", "abc"]).0, 1);
        assert_eq!(sigtrace(&["--help"]).0, 0);
    }

    #[test]
    fn verify_writes_valid_report_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let (code, out) = sigtrace(&["verify", "lemc2", "--trials", "200", "--out", d]);
        assert_eq!(code, 0, "{out}");
        let report = load(dir.path(), "lemc2");
        report.validate().unwrap();
        assert_eq!(report.config.trials, 200);
        assert!(report.bounds.iter().all(|b| !b.source_lemma.is_empty()));
        let csv = std::fs::read_to_string(dir.path().join("lemc2.csv")).unwrap();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.split(',').count() >= 2);
        assert_eq!(lines.count(), report.records.len());
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("cfg.json");
        std::fs::write(&cfg, r#"{"experiment": "lemc2", "trials": 150, "seed": 3, "epsilons": [0.25]}"#).unwrap();
        let d = dir.path().to_str().unwrap();
        let (code, _) = sigtrace(&["verify", "lemc2", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out", d]);
        assert_eq!(code, 0);
        let r = load(dir.path(), "lemc2");
        assert_eq!(r.config.trials, 150);
        assert_eq!(r.config.seed, 9);
        assert_eq!(r.config.epsilons, vec![0.25]);

        std::fs::write(&cfg, r#"{"experiment": "lemc1"}"#).unwrap();
        assert_eq!(sigtrace(&["verify", "lemc2", "--config", cfg.to_str().unwrap(), "--out", d]).0, 1);
        std::fs::write(&cfg, r#"{"trails": 5}"#).unwrap();
        assert_eq!(sigtrace(&["verify", "lemc2", "--config", cfg.to_str().unwrap(), "--out", d]).0, 1);
    }

    #[test]
    fn degenerate_geometry_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let (code, _) = sigtrace(&["verify", "lemc1", "--phi", "1e-9", "--trials", "10", "--out", d]);
        assert_eq!(code, 1);
        assert!(!dir.path().join("lemc1.json").exists());
    }

    #[test]
    fn too_few_events_is_inconclusive() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let (code, _) = sigtrace(&["verify", "lem-key1", "--trials", "20", "--out", d]);
        assert_eq!(code, Status::Inconclusive.exit_code());
        assert_eq!(code, 3);
        assert_eq!(load(dir.path(), "lem-key1").status, Status::Inconclusive);
    }

    #[test]
    fn written_reports_are_reproducible() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for dir in [&a, &b] {
            let d = dir.path().to_str().unwrap();
            assert_eq!(sigtrace(&["verify", "lemc1", "--trials", "500", "--seed", "77", "--out", d]).0, 0);
        }
        let (ra, rb) = (load(a.path(), "lemc1"), load(b.path(), "lemc1"));
        assert_eq!(ra.canonical_json(), rb.canonical_json());
        let csv = |p: &Path| std::fs::read(p.join("lemc1.csv")).unwrap();
        assert_eq!(csv(a.path()), csv(b.path()));

        let c = tempfile::tempdir().unwrap();
        let d = c.path().to_str().unwrap();
        sigtrace(&["verify", "lemc1", "--trials", "500", "--seed", "78", "--out", d]);
        assert_ne!(load(c.path(), "lemc1").canonical_json(), ra.canonical_json());
    }

    #[test]
    fn sweep_collects_each_epsilon() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let (code, _) = sigtrace(&["sweep", "lemc2", "--epsilons", "0.2,0.25", "--trials", "100", "--out", d]);
        assert_eq!(code, 0);
        let r = load(dir.path(), "sweep-lemc2");
        r.validate().unwrap();
        assert_eq!(r.tables["sweep"].len(), 2);
        assert!(r.bounds.iter().any(|b| b.name.starts_with("eps0.25/")));
    }

    #[test]
    fn path_commands_emit_json() {
        let (code, out) = sigtrace(&["simulate", "--level", "4", "--seed", "1"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["points"].as_array().unwrap().len(), 17);

        let (code, out) = sigtrace(&["signature", "--level", "6", "--truncation", "3"]);
        assert_eq!(code, 0);
        serde_json::from_str::<serde_json::Value>(&out).unwrap();

        let (code, out) = sigtrace(&["trace", "--family", "z", "--level", "8", "--epsilon", "0.2"]);
        assert_eq!(code, 0);
        let t: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(t["M"].as_u64().is_some());

        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let (code, _) = sigtrace(&["reconstruct", "--level", "8", "--epsilon", "0.4", "--out", d]);
        assert_eq!(code, 0);
        assert!(dir.path().join("reconstruction.json").exists());
    }
}
