//! Result tables and their persistence (CSV, JSON summary, manifest).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentPlan;
use crate::{Error, Result};

/// One metric at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub n: usize,
    pub k: f64,
    pub epsilon: f64,
    pub replicas: usize,
    pub metric: String,
    pub value: f64,
    /// Present exactly when the metric is a replica average.
    pub std_error: Option<f64>,
    pub wall_seconds: f64,
    pub complete: bool,
}

impl ResultRow {
    pub fn deterministic(experiment: &str, n: usize, k: f64, epsilon: f64, metric: &str, value: f64) -> Self {
        Self {
            experiment: experiment.into(),
            n,
            k,
            epsilon,
            replicas: 1,
            metric: metric.into(),
            value,
            std_error: None,
            wall_seconds: 0.0,
            complete: true,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn averaged(
        experiment: &str,
        n: usize,
        k: f64,
        epsilon: f64,
        replicas: usize,
        metric: &str,
        value: f64,
        std_error: f64,
    ) -> Self {
        Self { replicas, std_error: Some(std_error), ..Self::deterministic(experiment, n, k, epsilon, metric, value) }
    }
}

/// Rows in parameter-key order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    /// First row with the given metric at side `n` and killing rate `k`.
    pub fn find(&self, metric: &str, n: usize, k: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.metric == metric && r.n == n && r.k == k)
    }

    /// Value rows of one metric in table order.
    pub fn series(&self, metric: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.metric == metric).collect()
    }

    /// Equality ignoring wall time.
    pub fn same_values(&self, other: &ResultTable) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                let mut b = b.clone();
                b.wall_seconds = a.wall_seconds;
                *a == b
            })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "experiment,N,K,epsilon,replicas,metric,value,std_error,wall_seconds,complete")?;
        for r in &self.rows {
            let se = r.std_error.map(|s| format!("{s:e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{:e},{:e},{},{},{:e},{},{:.3},{}",
                r.experiment, r.n, r.k, r.epsilon, r.replicas, r.metric, r.value, se, r.wall_seconds, r.complete
            )?;
        }
        Ok(())
    }
}

/// Reproduction record written next to the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    /// SHA-256 of the resolved `plan.toml`.
    pub config_hash: String,
    pub seed: u64,
    pub crate_version: String,
    pub rustc_target: String,
    pub plan: ExperimentPlan,
}

impl Manifest {
    pub fn new(plan: &ExperimentPlan) -> Result<Self> {
        let text = plan.to_toml()?;
        Ok(Self {
            experiment: plan.kind.name().into(),
            config_hash: hex::encode(Sha256::digest(text.as_bytes())),
            seed: plan.seed,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            rustc_target: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            plan: plan.clone(),
        })
    }
}

/// Writes `bytes` to `path` through a temporary file and rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Files produced by [`emit`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub dir: PathBuf,
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
    pub plan: PathBuf,
}

/// Writes `results.csv`, `summary.json`, `manifest.json` and the resolved
/// `plan.toml` under `<output_dir>/<experiment>/`.
pub fn emit(plan: &ExperimentPlan, table: &ResultTable, extra: Option<&serde_json::Value>) -> Result<EmittedFiles> {
    let dir = plan.output_dir.join(plan.kind.name());
    fs::create_dir_all(&dir)?;
    let files = EmittedFiles {
        csv: dir.join("results.csv"),
        summary: dir.join("summary.json"),
        manifest: dir.join("manifest.json"),
        plan: dir.join("plan.toml"),
        dir,
    };
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    write_atomic(&files.csv, &csv)?;
    let summary = serde_json::json!({ "rows": table.rows, "details": extra });
    write_atomic(&files.summary, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    write_atomic(&files.plan, plan.to_toml()?.as_bytes())?;
    let manifest = Manifest::new(plan)?;
    write_atomic(&files.manifest, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(files)
}

/// Loads the plan stored in a manifest, verifying its hash.
pub fn load_manifest(path: &Path) -> Result<ExperimentPlan> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    let check = Manifest::new(&manifest.plan)?;
    if check.config_hash != manifest.config_hash
        || check.seed != manifest.seed
        || check.experiment != manifest.experiment
    {
        return Err(Error::Format(format!("manifest does not match its plan in {}", path.display())));
    }
    Ok(manifest.plan)
}

/// Reads back a summary's rows.
pub fn load_summary(path: &Path) -> Result<ResultTable> {
    #[derive(Deserialize)]
    struct Summary {
        rows: Vec<ResultRow>,
    }
    let s: Summary = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(ResultTable { rows: s.rows })
}
