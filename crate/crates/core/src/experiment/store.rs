//! On-disk experiment store. Each experiment lives in `<root>/<id>/`:
//!
//! ```text
//! meta.json          status, origin, lineage, timestamps
//! config.json        resolved configuration with provenance tags
//! results.csv        one row per successful scenario
//! results.json       full per-scenario results, including failures
//! traces/<id>.jsonl  event trace of each scenario
//! decisions.jsonl    agreed strategy pairs, appended
//! ```
//!
//! Files are written to a temporary name and renamed, so readers never see
//! a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{parse_results_csv, write_results_csv, ConfigDocument, ExperimentError, ExperimentResult, ExperimentRun, ResultRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    /// Finished with at least one failed scenario.
    Partial,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Simulation,
    /// Results table imported as-is, without configuration or traces.
    Import,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub id: String,
    pub status: RunStatus,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub code_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Dotted config path → new value, relative to the parent.
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub delta: serde_json::Map<String, serde_json::Value>,
    pub created_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
    #[serde(default)]
    pub rows: usize,
    #[serde(default)]
    pub failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExperimentMeta {
    pub fn new(id: &str, origin: Origin) -> Self {
        ExperimentMeta {
            id: id.into(),
            status: RunStatus::Running,
            origin,
            config_hash: None,
            code_version: env!("CARGO_PKG_VERSION").into(),
            parent: None,
            delta: serde_json::Map::new(),
            created_unix: now(),
            finished_unix: None,
            rows: 0,
            failed: 0,
            error: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.status, RunStatus::Complete | RunStatus::Partial)
    }
}

/// An agreed (supplier strategy, visibility) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub supplier_strategy: String,
    pub visibility: String,
    pub author: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub recorded_unix: u64,
}

pub fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("store types serialize");
    s.push(b'\n');
    s
}

/// Letters, digits, `-` and `_`; used verbatim as a directory name.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ExperimentError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> Result<PathBuf, ExperimentError> {
        if !valid_id(id) {
            return Err(ExperimentError::InvalidId(id.into()));
        }
        Ok(self.root.join(id))
    }

    fn existing(&self, id: &str) -> Result<PathBuf, ExperimentError> {
        let d = self.dir(id)?;
        if d.join("meta.json").is_file() {
            Ok(d)
        } else {
            Err(ExperimentError::UnknownExperiment(id.into()))
        }
    }

    pub fn exists(&self, id: &str) -> bool {
        self.existing(id).is_ok()
    }

    /// Experiments sorted by creation time, then id.
    pub fn list(&self) -> Result<Vec<ExperimentMeta>, ExperimentError> {
        let mut out = Vec::new();
        let entries = fs::read_dir(&self.root).map_err(|e| io_err(&self.root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| io_err(&self.root, e))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if valid_id(&name) && entry.path().join("meta.json").is_file() {
                out.push(self.meta(&name)?);
            }
        }
        out.sort_by(|a, b| (a.created_unix, &a.id).cmp(&(b.created_unix, &b.id)));
        Ok(out)
    }

    pub fn meta(&self, id: &str) -> Result<ExperimentMeta, ExperimentError> {
        let path = self.existing(id)?.join("meta.json");
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(&path, e))
    }

    pub fn write_meta(&self, meta: &ExperimentMeta) -> Result<(), ExperimentError> {
        write_atomic(&self.dir(&meta.id)?.join("meta.json"), &to_json(meta))
    }

    pub fn write_config(&self, id: &str, doc: &ConfigDocument) -> Result<(), ExperimentError> {
        write_atomic(&self.dir(id)?.join("config.json"), &to_json(doc))
    }

    pub fn config(&self, id: &str) -> Result<Option<ConfigDocument>, ExperimentError> {
        let path = self.existing(id)?.join("config.json");
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| io_err(&path, e))
    }

    /// Persists a finished run and marks the experiment complete (or
    /// partial when some scenarios failed).
    pub fn write_run(&self, meta: &mut ExperimentMeta, run: &ExperimentRun) -> Result<(), ExperimentError> {
        let dir = self.dir(&meta.id)?;
        let traces = dir.join("traces");
        for (scenario, text) in &run.traces {
            write_atomic(&traces.join(format!("{scenario}.jsonl")), text.as_bytes())?;
        }
        write_atomic(&dir.join("results.json"), &to_json(&run.result))?;
        let rows = run.result.rows();
        write_atomic(&dir.join("results.csv"), write_results_csv(&rows).as_bytes())?;
        meta.config_hash = Some(run.result.config_hash.clone());
        meta.rows = rows.len();
        meta.failed = run.result.failures().len();
        meta.status = if meta.failed == 0 { RunStatus::Complete } else { RunStatus::Partial };
        meta.finished_unix = Some(now());
        self.write_meta(meta)
    }

    /// Stores a results table as a complete experiment with no traces.
    pub fn import_table(&self, id: &str, csv_text: &str) -> Result<ExperimentMeta, ExperimentError> {
        let rows = parse_results_csv(csv_text)?;
        let dir = self.dir(id)?;
        write_atomic(&dir.join("results.csv"), write_results_csv(&rows).as_bytes())?;
        let mut meta = ExperimentMeta::new(id, Origin::Import);
        meta.rows = rows.len();
        meta.status = RunStatus::Complete;
        meta.finished_unix = Some(meta.created_unix);
        self.write_meta(&meta)?;
        Ok(meta)
    }

    pub fn rows(&self, id: &str) -> Result<Vec<ResultRow>, ExperimentError> {
        let path = self.existing(id)?.join("results.csv");
        if !path.is_file() {
            return Err(ExperimentError::Incomplete(id.into()));
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        parse_results_csv(&text)
    }

    pub fn result(&self, id: &str) -> Result<Option<ExperimentResult>, ExperimentError> {
        let path = self.existing(id)?.join("results.json");
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| io_err(&path, e))
    }

    pub fn trace(&self, id: &str, scenario: &str) -> Result<String, ExperimentError> {
        let missing = || ExperimentError::UnknownScenario {
            id: id.into(),
            scenario: scenario.into(),
        };
        if !valid_id(scenario) {
            return Err(missing());
        }
        let path = self.existing(id)?.join("traces").join(format!("{scenario}.jsonl"));
        fs::read_to_string(&path).map_err(|_| missing())
    }

    pub fn append_decision(&self, id: &str, d: &DecisionRecord) -> Result<(), ExperimentError> {
        let path = self.existing(id)?.join("decisions.jsonl");
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        let mut line = serde_json::to_string(d).expect("decision serializes");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))
    }

    pub fn decisions(&self, id: &str) -> Result<Vec<DecisionRecord>, ExperimentError> {
        let path = self.existing(id)?.join("decisions.jsonl");
        if !path.is_file() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| io_err(&path, e)))
            .collect()
    }
}
