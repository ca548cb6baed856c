//! Config files, run and sweep drivers, and the on-disk artifacts they produce.
//!
//! Configs are TOML. Top-level keys hold the experiment shape and the
//! `[privacy]`, `[training]`, `[channel]`, `[power]`, `[data]` and
//! `[dp_fedavg]` tables hold the rest; everything except `algorithm` has a
//! default. Unknown keys are rejected. `epsilon = inf` disables the privacy
//! constraint.
//!
//! A run writes into its output directory:
//! - `rounds.csv`: one row per round
//! - `summary.json`: final metrics, energy and subcarrier totals
//! - `config.toml`: the resolved config, seed included
//! - `manifest.json`: what was run and which files it produced
//!
//! Every file is written to a temporary name and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::{run_experiment, Algorithm, ExperimentConfig, RoundRecord};
use crate::privacy::basic_composition;

/// Column order of `rounds.csv`.
pub const ROUNDS_HEADER: [&str; 11] = [
    "round",
    "algorithm",
    "train_loss",
    "test_metric",
    "beta",
    "regime",
    "dp_feasible",
    "energy_cum",
    "subcarriers_cum",
    "k",
    "epsilon",
];

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parses a TOML config and validates it. Errors name the offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn config_to_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
}

/// Command-line or environment overrides applied after the file is read.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Table-style summary of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub rounds: usize,
    pub final_train_loss: f64,
    /// Accuracy for classifiers, mean squared error for regression.
    pub final_test_metric: Option<f64>,
    pub total_energy: f64,
    pub subcarriers_total: u64,
    pub subcarriers_per_round_per_device: usize,
    pub all_rounds_private: bool,
    /// Per-round ε; `null` when unbounded.
    pub epsilon_per_round: Option<f64>,
    /// Basic composition over all rounds, for orientation only.
    pub composed_epsilon: Option<f64>,
    pub composed_delta: f64,
}

impl RunSummary {
    pub fn from_records(cfg: &ExperimentConfig, records: &[RoundRecord]) -> Result<Self> {
        let last = records
            .last()
            .ok_or_else(|| Error::Invariant("a run produced no rounds".into()))?;
        let eps = cfg.privacy.epsilon;
        let (composed_eps, composed_delta) = basic_composition(eps, cfg.delta(), records.len());
        Ok(RunSummary {
            algorithm: cfg.algorithm,
            seed: cfg.seed,
            rounds: records.len(),
            final_train_loss: last.train_loss,
            final_test_metric: last.test_metric,
            total_energy: last.energy_cum,
            subcarriers_total: last.subcarriers_cum,
            subcarriers_per_round_per_device: last.k,
            all_rounds_private: records.iter().all(|r| r.dp_feasible),
            epsilon_per_round: eps.is_finite().then_some(eps),
            composed_epsilon: composed_eps.is_finite().then_some(composed_eps),
            composed_delta,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub master_seed: u64,
    /// The resolved config; also written next to the outputs as `config.toml`.
    pub config_toml: String,
    pub outputs: Vec<String>,
    pub wall_clock_secs: f64,
}

fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        x.to_string()
    }
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Renders records as CSV with the [`ROUNDS_HEADER`] columns.
pub fn rounds_csv(records: &[RoundRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(ROUNDS_HEADER)?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.algorithm.to_string(),
            fmt_f64(r.train_loss),
            opt_f64(r.test_metric),
            opt_f64(r.beta),
            r.regime.map(|g| g.as_str().to_string()).unwrap_or_default(),
            r.dp_feasible.to_string(),
            fmt_f64(r.energy_cum),
            r.subcarriers_cum.to_string(),
            r.k.to_string(),
            fmt_f64(r.epsilon),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Files produced by [`cli_run`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub rounds_csv: PathBuf,
    pub summary_json: PathBuf,
    pub config_toml: PathBuf,
    pub manifest_json: PathBuf,
    pub summary: RunSummary,
}

/// Runs one experiment from a config file and writes its artifacts.
pub fn cli_run(config: &Path, overrides: &Overrides) -> Result<RunArtifacts> {
    let mut cfg = load_config(config)?;
    overrides.apply(&mut cfg);
    run_config(&cfg, &overrides.out_dir(), "run")
}

/// Runs an already-resolved config into `out`.
pub fn run_config(cfg: &ExperimentConfig, out: &Path, command: &str) -> Result<RunArtifacts> {
    let start = Instant::now();
    let records = run_experiment(cfg)?;
    let summary = RunSummary::from_records(cfg, &records)?;
    let config_toml = config_to_toml(cfg)?;

    let rounds_path = out.join("rounds.csv");
    let summary_path = out.join("summary.json");
    let config_path = out.join("config.toml");
    let manifest_path = out.join("manifest.json");
    write_atomic(&rounds_path, &rounds_csv(&records)?)?;
    write_json(&summary_path, &summary)?;
    write_atomic(&config_path, config_toml.as_bytes())?;
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        command: command.to_string(),
        master_seed: cfg.seed,
        config_toml,
        outputs: [&rounds_path, &summary_path, &config_path].iter().map(|p| file_name(p)).collect(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path, &manifest)?;
    Ok(RunArtifacts {
        rounds_csv: rounds_path,
        summary_json: summary_path,
        config_toml: config_path,
        manifest_json: manifest_path,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Compression ratio p = k/d.
    Compression,
    /// Per-round privacy budget ε.
    Epsilon,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Compression => "compression",
            SweepAxis::Epsilon => "epsilon",
        }
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig, value: f64) {
        match self {
            SweepAxis::Compression => cfg.compression = value,
            SweepAxis::Epsilon => cfg.privacy.epsilon = value,
        }
    }
}

/// One row of the combined sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: RunSummary,
}

pub const SWEEP_HEADER: [&str; 7] = [
    "value",
    "final_train_loss",
    "final_test_metric",
    "total_energy",
    "subcarriers_total",
    "k",
    "all_rounds_private",
];

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        let s = &row.summary;
        w.write_record([
            fmt_f64(row.value),
            fmt_f64(s.final_train_loss),
            opt_f64(s.final_test_metric),
            fmt_f64(s.total_energy),
            s.subcarriers_total.to_string(),
            s.subcarriers_per_round_per_device.to_string(),
            s.all_rounds_private.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Runs one experiment per value of `axis`, all with the config's seed.
///
/// Point `j` writes its artifacts under `<out>/<axis>_<value>/`; the combined
/// table goes to `<out>/sweep_<axis>.csv` with a manifest alongside.
pub fn cli_sweep(config: &Path, axis: SweepAxis, values: &[f64], overrides: &Overrides) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let start = Instant::now();
    let mut base = load_config(config)?;
    overrides.apply(&mut base);
    let out = overrides.out_dir();
    let mut rows = Vec::with_capacity(values.len());
    let mut outputs = Vec::new();
    for &value in values {
        let mut cfg = base.clone();
        axis.apply(&mut cfg, value);
        cfg.validate()
            .map_err(|e| Error::Config(format!("{} = {value}: {e}", axis.as_str())))?;
        let dir_name = format!("{}_{}", axis.as_str(), fmt_f64(value));
        let artifacts = run_config(&cfg, &out.join(&dir_name), "sweep")?;
        outputs.push(format!("{dir_name}/rounds.csv"));
        rows.push(SweepRow {
            value,
            summary: artifacts.summary,
        });
    }
    let table = out.join(format!("sweep_{}.csv", axis.as_str()));
    write_atomic(&table, &sweep_csv(&rows)?)?;
    outputs.push(file_name(&table));
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        command: format!(
            "sweep --axis {} --values {}",
            axis.as_str(),
            values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
        ),
        master_seed: base.seed,
        config_toml: config_to_toml(&base)?,
        outputs,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join(format!("sweep_{}_manifest.json", axis.as_str())), &manifest)?;
    Ok(rows)
}

/// Parses a comma-separated list such as `0.5,1,inf`.
pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("not a number in --values: {s:?}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "algorithm = \"pfels\"\nrounds = 3\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Pfels);
        assert_eq!(cfg.rounds, 3);
        assert_eq!(cfg.population, ExperimentConfig::new(Algorithm::Pfels).population);
    }

    #[test]
    fn missing_algorithm_is_named() {
        let err = parse_config("rounds = 3\n").unwrap_err().to_string();
        assert!(err.contains("algorithm"), "{err}");
    }

    #[test]
    fn unknown_and_invalid_fields_are_named() {
        let err = parse_config("algorithm = \"fedavg\"\nroundz = 3\n").unwrap_err().to_string();
        assert!(err.contains("roundz"), "{err}");
        let err = parse_config("algorithm = \"fedavg\"\ncompression = 1.5\n").unwrap_err().to_string();
        assert!(err.contains("compression"), "{err}");
        let err = parse_config("algorithm = \"pfels\"\n[privacy]\nepsilon = -1.0\n").unwrap_err().to_string();
        assert!(err.contains("epsilon"), "{err}");
    }

    #[test]
    fn nested_tables_and_infinite_epsilon() {
        let text = "algorithm = \"wfl_pdp\"\n[privacy]\nepsilon = inf\n[channel]\nnoise_std = 0.5\n[data]\nmodel = \"mlp1_hidden\"\n";
        let cfg = parse_config(text).unwrap();
        assert!(cfg.privacy.epsilon.is_infinite());
        assert_eq!(cfg.channel.noise_std, 0.5);
        let back = parse_config(&config_to_toml(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_tables_keep_other_defaults() {
        let cfg = parse_config("algorithm = \"pfels\"\n[training]\nlearning_rate = 0.2\n[channel]\nsubcarriers = 64\n").unwrap();
        let base = ExperimentConfig::new(Algorithm::Pfels);
        assert_eq!(cfg.training.learning_rate, 0.2);
        assert_eq!(cfg.training.local_steps, base.training.local_steps);
        assert_eq!(cfg.channel.subcarriers, 64);
        assert_eq!(cfg.channel.gain_mean, base.channel.gain_mean);
        let err = parse_config("algorithm = \"pfels\"\n[training]\nstepz = 2\n").unwrap_err().to_string();
        assert!(err.contains("stepz"), "{err}");
    }

    #[test]
    fn csv_schema_and_formatting() {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.privacy.epsilon = f64::INFINITY;
        let records = run_experiment(&cfg).unwrap();
        let text = String::from_utf8(rounds_csv(&records).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], ROUNDS_HEADER.join(","));
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,pfels,"));
        assert!(lines[1].ends_with(",inf"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn values_parse() {
        assert_eq!(parse_values("0.5, 1,inf").unwrap(), vec![0.5, 1.0, f64::INFINITY]);
        assert!(parse_values("0.5,x").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
