//! Experiment configuration document: TOML with optional provenance
//! annotations, dotted-path overrides and a content hash.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::demand::{Consolidation, TrendSpec};
use crate::planner::{Component, InitialState, PlanningParameters, Product, Supplier, WorkforceAction};
use crate::simulator::{ScenarioSpec, SimulationSetup, SupplierStrategy, Visibility};
use crate::solver::SolverLimits;
use crate::Period;

/// Source tag written for values set through an override.
pub const OVERRIDE_SOURCE: &str = "override";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub products: Vec<Product>,
    pub components: Vec<Component>,
    pub suppliers: Vec<Supplier>,
    pub actions: Vec<WorkforceAction>,
    /// Cost per extra hour `e`.
    pub extra_hours_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    pub nominal_capacity: f64,
    pub extra_hours_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalSection {
    pub planning_horizon: Period,
    pub replanning_period: Period,
    pub first_step: Period,
    pub production_lead_time: Period,
    pub production_anticipation: Period,
    pub subcontract_lead_time: Period,
    pub subcontract_anticipation: Period,
    pub extra_hours_anticipation: Period,
    pub action_anticipation: Period,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoeSection {
    pub trends: Vec<String>,
    pub consolidation: Vec<Consolidation>,
    pub visibility: Vec<Visibility>,
    pub strategies: Vec<SupplierStrategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub parallelism: usize,
    pub node_limit: usize,
    pub warm_start: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inventory_cap: Option<f64>,
    /// Added to the customer's backorder costs per visibility.
    #[serde(default)]
    pub penalties: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trends: Vec<TrendSpec>,
    pub costs: CostSection,
    pub capacity: CapacitySection,
    pub temporal: TemporalSection,
    #[serde(default)]
    pub initial: InitialState,
    pub doe: DoeSection,
    pub run: RunSection,
}

/// A parsed configuration and the provenance tags stripped from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub config: ExperimentConfig,
    /// Dotted path → source tag.
    pub sources: BTreeMap<String, String>,
}

/// `path=value`, where the value is a TOML literal or, failing that, a
/// bare string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: toml::Value,
}

impl std::str::FromStr for Override {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| ExperimentError::Override {
            key: s.to_string(),
            reason: reason.into(),
        };
        let (key, raw) = s.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let path: Vec<String> = key.trim().split('.').map(|p| p.trim().to_string()).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(bad("empty path segment"));
        }
        let raw = raw.trim();
        if raw.is_empty() {
            return Err(bad("missing value"));
        }
        let value = match format!("v = {raw}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        Ok(Override { path, value })
    }
}

impl Override {
    pub fn key(&self) -> String {
        self.path.join(".")
    }
}

/// Replaces every `{ value = …, source = "…" }` table by its value and
/// records the tag under the table's dotted path.
fn strip_sources(v: &mut toml::Value, path: &mut Vec<String>, out: &mut BTreeMap<String, String>) {
    if let toml::Value::Table(t) = v {
        let annotated = t.len() == 2 && t.contains_key("value") && matches!(t.get("source"), Some(toml::Value::String(_)));
        if annotated {
            if let Some(toml::Value::String(src)) = t.remove("source") {
                out.insert(path.join("."), src);
            }
            *v = t.remove("value").expect("checked above");
            return;
        }
    }
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t.iter_mut() {
                path.push(k.clone());
                strip_sources(child, path, out);
                path.pop();
            }
        }
        toml::Value::Array(a) => {
            for (i, child) in a.iter_mut().enumerate() {
                let seg = match child.get("id").and_then(|x| x.as_str()) {
                    Some(id) => id.to_string(),
                    None => i.to_string(),
                };
                path.push(seg);
                strip_sources(child, path, out);
                path.pop();
            }
        }
        _ => {}
    }
}

/// Resolves one path segment inside an array: by `id` field first, then by
/// index.
fn array_slot<'a>(a: &'a mut [toml::Value], seg: &str) -> Option<&'a mut toml::Value> {
    let by_id = a
        .iter()
        .position(|x| x.get("id").and_then(|i| i.as_str()) == Some(seg));
    let i = by_id.or_else(|| seg.parse::<usize>().ok().filter(|&i| i < a.len()))?;
    a.get_mut(i)
}

fn apply_override(doc: &mut toml::Value, o: &Override) -> Result<(), ExperimentError> {
    let fail = |reason: String| ExperimentError::Override { key: o.key(), reason };
    let (last, parents) = o.path.split_last().expect("non-empty path");
    let mut cur = doc;
    for seg in parents {
        cur = match cur {
            toml::Value::Table(t) => t.get_mut(seg).ok_or_else(|| fail(format!("unknown key '{seg}'")))?,
            toml::Value::Array(a) => array_slot(a, seg).ok_or_else(|| fail(format!("no element '{seg}'")))?,
            _ => return Err(fail(format!("'{seg}' is not a section"))),
        };
    }
    match cur {
        // New keys are allowed here; typed validation rejects undeclared ones.
        toml::Value::Table(t) => {
            t.insert(last.clone(), o.value.clone());
        }
        toml::Value::Array(a) => {
            *array_slot(a, last).ok_or_else(|| fail(format!("no element '{last}'")))? = o.value.clone();
        }
        _ => return Err(fail(format!("cannot set '{last}' on a scalar"))),
    }
    Ok(())
}

impl ConfigDocument {
    pub fn parse(text: &str, overrides: &[Override]) -> Result<Self, ExperimentError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ExperimentError::Config(e.to_string()))?;
        let mut doc = toml::Value::Table(table);
        let mut sources = BTreeMap::new();
        strip_sources(&mut doc, &mut Vec::new(), &mut sources);
        for o in overrides {
            apply_override(&mut doc, o)?;
            sources.insert(o.key(), OVERRIDE_SOURCE.into());
        }
        let config: ExperimentConfig = doc.try_into().map_err(|e: toml::de::Error| {
            let key = overrides.iter().map(Override::key).collect::<Vec<_>>();
            if key.is_empty() {
                ExperimentError::Config(e.to_string())
            } else {
                ExperimentError::Config(format!("{e} (after overrides {})", key.join(", ")))
            }
        })?;
        config.validate()?;
        Ok(ConfigDocument { config, sources })
    }

    pub fn from_config(config: ExperimentConfig) -> Self {
        ConfigDocument {
            config,
            sources: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn params(&self) -> PlanningParameters {
        let (t, c) = (&self.temporal, &self.costs);
        PlanningParameters {
            products: c.products.clone(),
            components: c.components.clone(),
            suppliers: c.suppliers.clone(),
            actions: c.actions.clone(),
            production_lead_time: t.production_lead_time,
            production_anticipation: t.production_anticipation,
            subcontract_lead_time: t.subcontract_lead_time,
            subcontract_anticipation: t.subcontract_anticipation,
            extra_hours_cost: c.extra_hours_cost,
            extra_hours_anticipation: t.extra_hours_anticipation,
            extra_hours_max: self.capacity.extra_hours_max,
            action_anticipation: t.action_anticipation,
            nominal_capacity: self.capacity.nominal_capacity,
            inventory_cap: self.run.inventory_cap,
            planning_horizon: t.planning_horizon,
            initial: self.initial.clone(),
        }
    }

    pub fn setup(&self) -> SimulationSetup {
        SimulationSetup {
            params: self.params(),
            trends: self.trends.clone(),
            replanning_period: self.temporal.replanning_period,
            first_step: self.temporal.first_step,
            warm_start: self.run.warm_start,
            limits: SolverLimits {
                node_limit: self.run.node_limit,
                time_limit: None,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |m: String| Err(ExperimentError::Config(m));
        self.params()
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        for t in &self.trends {
            t.validate().map_err(|e| ExperimentError::Config(format!("trend {}: {e}", t.id)))?;
        }
        for id in &self.doe.trends {
            if !self.trends.iter().any(|t| &t.id == id) {
                return invalid(format!("doe.trends names unknown trend '{id}'"));
            }
        }
        if self.temporal.replanning_period < 1 {
            return invalid("temporal.replanning_period must be at least 1".into());
        }
        if let Some(cap) = self.run.inventory_cap {
            if !(cap.is_finite() && cap >= 0.0) {
                return invalid(format!("run.inventory_cap must be a non-negative number, got {cap}"));
            }
        }
        for (k, v) in &self.run.penalties {
            if !(v.is_finite() && *v >= 0.0) {
                return invalid(format!("run.penalties.{k} must be non-negative"));
            }
        }
        self.expand().map(|_| ())
    }

    /// Cartesian product in the order trend, consolidation, visibility,
    /// strategy.
    pub fn expand(&self) -> Result<Vec<ScenarioSpec>, ExperimentError> {
        let d = &self.doe;
        for (name, len) in [
            ("trends", d.trends.len()),
            ("consolidation", d.consolidation.len()),
            ("visibility", d.visibility.len()),
            ("strategies", d.strategies.len()),
        ] {
            if len == 0 {
                return Err(ExperimentError::EmptyFactor(name.into()));
            }
        }
        let mut out = Vec::new();
        for t in &d.trends {
            for &g in &d.consolidation {
                for v in &d.visibility {
                    for &s in &d.strategies {
                        out.push(ScenarioSpec {
                            trend: t.clone(),
                            consolidation: g,
                            visibility: v.clone(),
                            strategy: s,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Canonical JSON: struct fields in declaration order, maps sorted.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}
