//! Design-of-experiments expansion, parallel scenario execution, outcome
//! tables and their persistence.

mod config;
mod store;

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::{apply_penalties, Orientation, OutcomeMatrix, RiskError};
use crate::simulator::{
    audit_trace, backorder_series, export_jsonl, inventory_series, run_scenario, IndicatorSet, ScenarioSpec,
};
use crate::Period;

pub use config::{
    CapacitySection, ConfigDocument, CostSection, DoeSection, ExperimentConfig, Override, RunSection, TemporalSection,
    OVERRIDE_SOURCE,
};
pub use store::{now, valid_id, DecisionRecord, ExperimentMeta, Origin, RunStatus, RunStore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("override '{key}': {reason}")]
    Override { key: String, reason: String },
    #[error("design factor '{0}' is empty")]
    EmptyFactor(String),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("missing outcome cells: {}", .0.join(", "))]
    MissingCells(Vec<String>),
    #[error("duplicate row for {0}")]
    DuplicateRow(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("experiment '{id}' has no trace for '{scenario}'")]
    UnknownScenario { id: String, scenario: String },
    #[error("experiment '{0}' is not complete")]
    Incomplete(String),
    #[error("invalid experiment id '{0}'")]
    InvalidId(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Whose view an outcome matrix takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    /// Global gain per supplier strategy.
    Supplier,
    /// Backorder cost per visibility.
    Customer,
}

impl Actor {
    pub fn orientation(self) -> Orientation {
        match self {
            Actor::Supplier => Orientation::GainHigherBetter,
            Actor::Customer => Orientation::CostLowerBetter,
        }
    }
}

impl FromStr for Actor {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "supplier" => Ok(Actor::Supplier),
            "customer" => Ok(Actor::Customer),
            _ => Err(ExperimentError::Config(format!("unknown actor '{s}' (supplier or customer)"))),
        }
    }
}

/// Column order of the results table.
pub const RESULT_COLUMNS: [&str; 10] = [
    "strategy",
    "trend",
    "consolidation",
    "visibility",
    "global_gain",
    "global_costs",
    "production_cost",
    "inventory_cost",
    "backorder_cost",
    "purchasing_cost",
];

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub strategy: String,
    pub trend: String,
    pub consolidation: String,
    pub visibility: String,
    pub global_gain: f64,
    pub global_costs: f64,
    pub production_cost: f64,
    pub inventory_cost: f64,
    pub backorder_cost: f64,
    pub purchasing_cost: f64,
}

impl ResultRow {
    pub fn new(spec: &ScenarioSpec, s: &IndicatorSet) -> Self {
        ResultRow {
            strategy: spec.strategy.label().into(),
            trend: spec.trend.clone(),
            consolidation: spec.consolidation.label().into(),
            visibility: spec.visibility.label.clone(),
            global_gain: s.global_gain,
            global_costs: s.global_costs,
            production_cost: s.production_cost,
            inventory_cost: s.inventory_cost,
            backorder_cost: s.backorder_cost,
            purchasing_cost: s.purchasing_cost,
        }
    }

    pub fn scenario_id(&self) -> String {
        format!("{}-{}-{}-{}", self.trend, self.consolidation, self.visibility, self.strategy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub id: String,
    pub spec: ScenarioSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicators: Option<IndicatorSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Total backlog at the end of each executed period.
    #[serde(default)]
    pub backorders: Vec<(Period, f64)>,
    #[serde(default)]
    pub inventory: Vec<(Period, f64)>,
    /// Steps that stopped on the solver budget with an incumbent.
    #[serde(default)]
    pub flagged_steps: Vec<Period>,
    #[serde(default)]
    pub audit: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub code_version: String,
    pub scenarios: Vec<ScenarioResult>,
}

impl ExperimentResult {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.scenarios
            .iter()
            .filter_map(|s| s.indicators.as_ref().map(|i| ResultRow::new(&s.spec, i)))
            .collect()
    }

    pub fn failures(&self) -> Vec<(&str, &str)> {
        self.scenarios
            .iter()
            .filter_map(|s| s.error.as_deref().map(|e| (s.id.as_str(), e)))
            .collect()
    }
}

/// A finished run: the result and one JSON-lines trace per successful
/// scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub result: ExperimentResult,
    pub traces: Vec<(String, String)>,
}

pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

/// Runs every expanded scenario. A failing scenario becomes a row with an
/// error; the other rows still complete. The output does not depend on the
/// degree of parallelism.
pub fn run(config: &ExperimentConfig, progress: Option<Progress>) -> Result<ExperimentRun, ExperimentError> {
    let specs = config.expand()?;
    let setup = config.setup();
    let total = specs.len();
    let done = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.parallelism)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let outputs: Vec<(ScenarioResult, Option<String>)> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let out = match run_scenario(&setup, spec) {
                    Ok((trace, indicators)) => {
                        let jsonl = export_jsonl(&trace, Some(&indicators));
                        let r = ScenarioResult {
                            id: spec.id(),
                            spec: spec.clone(),
                            indicators: Some(indicators),
                            error: None,
                            backorders: backorder_series(&trace),
                            inventory: inventory_series(&trace),
                            flagged_steps: trace.flagged_steps(),
                            audit: audit_trace(&trace).violations().collect(),
                        };
                        (r, Some(jsonl))
                    }
                    Err(e) => (
                        ScenarioResult {
                            id: spec.id(),
                            spec: spec.clone(),
                            indicators: None,
                            error: Some(e.to_string()),
                            backorders: Vec::new(),
                            inventory: Vec::new(),
                            flagged_steps: Vec::new(),
                            audit: Vec::new(),
                        },
                        None,
                    ),
                };
                let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                if let Some(p) = progress {
                    p(n, total);
                }
                out
            })
            .collect()
    });
    let mut scenarios = Vec::with_capacity(total);
    let mut traces = Vec::new();
    for (r, t) in outputs {
        if let Some(t) = t {
            traces.push((r.id.clone(), t));
        }
        scenarios.push(r);
    }
    Ok(ExperimentRun {
        result: ExperimentResult {
            config_hash: config.hash(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            scenarios,
        },
        traces,
    })
}

/// Reshapes result rows into one actor's outcome matrix. Strategies and
/// scenarios keep their order of first appearance.
pub fn to_outcomes(
    rows: &[ResultRow],
    actor: Actor,
    penalties: &BTreeMap<String, f64>,
) -> Result<OutcomeMatrix, ExperimentError> {
    let mut strategies: Vec<String> = Vec::new();
    let mut scenarios: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for r in rows {
        let (strategy, scenario, value) = match actor {
            Actor::Supplier => (
                r.strategy.clone(),
                format!("{}/{}/{}", r.trend, r.consolidation, r.visibility),
                r.global_gain,
            ),
            Actor::Customer => (
                r.visibility.clone(),
                format!("{}/{}/{}", r.trend, r.consolidation, r.strategy),
                r.backorder_cost,
            ),
        };
        if !strategies.contains(&strategy) {
            strategies.push(strategy.clone());
        }
        if !scenarios.contains(&scenario) {
            scenarios.push(scenario.clone());
        }
        if cells.insert((strategy.clone(), scenario.clone()), value).is_some() {
            return Err(ExperimentError::DuplicateRow(format!("{strategy} @ {scenario}")));
        }
    }
    matrix(actor.orientation(), strategies, scenarios, &cells, penalties)
}

fn matrix(
    orientation: Orientation,
    strategies: Vec<String>,
    scenarios: Vec<String>,
    cells: &BTreeMap<(String, String), f64>,
    penalties: &BTreeMap<String, f64>,
) -> Result<OutcomeMatrix, ExperimentError> {
    let mut missing = Vec::new();
    let mut values = Vec::new();
    for s in &strategies {
        let mut row = Vec::new();
        for c in &scenarios {
            match cells.get(&(s.clone(), c.clone())) {
                Some(&v) => row.push(v),
                None => missing.push(format!("{s} @ {c}")),
            }
        }
        values.push(row);
    }
    if !missing.is_empty() {
        return Err(ExperimentError::MissingCells(missing));
    }
    let m = OutcomeMatrix::new(orientation, strategies, scenarios, values)?;
    if penalties.is_empty() {
        Ok(m)
    } else {
        Ok(apply_penalties(&m, penalties)?)
    }
}

fn csv_error(e: csv::Error) -> ExperimentError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    ExperimentError::Csv { line, message }
}

/// Writes the results table. Numbers use the shortest representation that
/// reads back exactly.
pub fn write_results_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_COLUMNS).expect("in-memory write");
    for r in rows {
        let nums = [
            r.global_gain,
            r.global_costs,
            r.production_cost,
            r.inventory_cost,
            r.backorder_cost,
            r.purchasing_cost,
        ]
        .map(|v| format!("{v}"));
        let mut rec = vec![
            r.strategy.clone(),
            r.trend.clone(),
            r.consolidation.clone(),
            r.visibility.clone(),
        ];
        rec.extend(nums);
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn header(text: &str) -> Result<(csv::Reader<&[u8]>, Vec<String>), ExperimentError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let head: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    Ok((rdr, head))
}

fn check_finite(values: &[f64], line: u64) -> Result<(), ExperimentError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ExperimentError::Csv {
            line,
            message: "non-finite value".into(),
        })
    }
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>, ExperimentError> {
    let (mut rdr, head) = header(text)?;
    if head != RESULT_COLUMNS {
        return Err(ExperimentError::Csv {
            line: 1,
            message: format!("expected columns {}", RESULT_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: ResultRow = rec.deserialize(Some(&csv::StringRecord::from(head.clone()))).map_err(csv_error)?;
        check_finite(
            &[
                row.global_gain,
                row.global_costs,
                row.production_cost,
                row.inventory_cost,
                row.backorder_cost,
                row.purchasing_cost,
            ],
            line,
        )?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Deserialize)]
struct ReducedRow {
    strategy: String,
    scenario: String,
    value: f64,
}

/// Reads `strategy,scenario,value` rows into a matrix.
pub fn parse_reduced_csv(text: &str, orientation: Orientation) -> Result<OutcomeMatrix, ExperimentError> {
    let (mut rdr, head) = header(text)?;
    if head != ["strategy", "scenario", "value"] {
        return Err(ExperimentError::Csv {
            line: 1,
            message: "expected columns strategy,scenario,value".into(),
        });
    }
    let mut strategies: Vec<String> = Vec::new();
    let mut scenarios: Vec<String> = Vec::new();
    let mut cells = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let r: ReducedRow = rec.deserialize(Some(&csv::StringRecord::from(head.clone()))).map_err(csv_error)?;
        check_finite(&[r.value], line)?;
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy.clone());
        }
        if !scenarios.contains(&r.scenario) {
            scenarios.push(r.scenario.clone());
        }
        if cells.insert((r.strategy.clone(), r.scenario.clone()), r.value).is_some() {
            return Err(ExperimentError::DuplicateRow(format!("{} @ {}", r.strategy, r.scenario)));
        }
    }
    if strategies.is_empty() {
        return Err(ExperimentError::Csv {
            line: 1,
            message: "no rows".into(),
        });
    }
    matrix(orientation, strategies, scenarios, &cells, &BTreeMap::new())
}

/// Imports either table schema, chosen by its header.
pub fn import_outcomes(
    text: &str,
    actor: Actor,
    penalties: &BTreeMap<String, f64>,
) -> Result<OutcomeMatrix, ExperimentError> {
    let (_, head) = header(text)?;
    if head.iter().any(|h| h == "scenario") {
        let m = parse_reduced_csv(text, actor.orientation())?;
        if penalties.is_empty() {
            Ok(m)
        } else {
            Ok(apply_penalties(&m, penalties)?)
        }
    } else {
        to_outcomes(&parse_results_csv(text)?, actor, penalties)
    }
}
