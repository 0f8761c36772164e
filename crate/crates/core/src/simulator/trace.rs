//! Line-per-event export of a simulation trace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ExecutedPeriod, IndicatorSet, ScenarioSpec, SimulationTrace, StepRecord};
use crate::planner::{BoundaryState, LedgerEntry, PlanningParameters};
use crate::Period;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "data", rename_all = "snake_case")]
pub enum TraceEvent {
    Header {
        scenario: ScenarioSpec,
        first_step: Period,
        replanning_period: Period,
        simulation_length: Period,
        params: Box<PlanningParameters>,
        initial: BoundaryState,
        pipeline: Vec<LedgerEntry>,
    },
    Step(Box<StepRecord>),
    Execute(Box<ExecutedPeriod>),
    Tail { unexecuted: Vec<LedgerEntry> },
    Indicators(IndicatorSet),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("trace line {line}: {message}")]
pub struct TraceFormatError {
    pub line: usize,
    pub message: String,
}

pub fn export_jsonl(trace: &SimulationTrace, indicators: Option<&IndicatorSet>) -> String {
    let mut events = vec![TraceEvent::Header {
        scenario: trace.scenario.clone(),
        first_step: trace.first_step,
        replanning_period: trace.replanning_period,
        simulation_length: trace.simulation_length,
        params: Box::new(trace.params.clone()),
        initial: trace.initial.clone(),
        pipeline: trace.pipeline.clone(),
    }];
    let mut executed = trace.executed.iter().peekable();
    for step in &trace.steps {
        events.push(TraceEvent::Step(Box::new(step.clone())));
        while let Some(e) = executed.next_if(|e| e.step == step.tau) {
            events.push(TraceEvent::Execute(Box::new(e.clone())));
        }
    }
    events.extend(executed.map(|e| TraceEvent::Execute(Box::new(e.clone()))));
    events.push(TraceEvent::Tail {
        unexecuted: trace.unexecuted.clone(),
    });
    if let Some(i) = indicators {
        events.push(TraceEvent::Indicators(*i));
    }
    let mut out = String::new();
    for e in &events {
        out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

pub fn import_jsonl(text: &str) -> Result<(SimulationTrace, Option<IndicatorSet>), TraceFormatError> {
    let mut trace: Option<SimulationTrace> = None;
    let mut indicators = None;
    let mut tail_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| TraceFormatError { line, message };
        if raw.trim().is_empty() {
            continue;
        }
        let event: TraceEvent = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        match (event, trace.as_mut()) {
            (
                TraceEvent::Header {
                    scenario,
                    first_step,
                    replanning_period,
                    simulation_length,
                    params,
                    initial,
                    pipeline,
                },
                None,
            ) => {
                trace = Some(SimulationTrace {
                    scenario,
                    first_step,
                    replanning_period,
                    simulation_length,
                    params: *params,
                    initial,
                    pipeline,
                    steps: Vec::new(),
                    executed: Vec::new(),
                    unexecuted: Vec::new(),
                })
            }
            (TraceEvent::Header { .. }, Some(_)) => return Err(err("duplicate header".into())),
            (_, None) => return Err(err("event before header".into())),
            (_, Some(_)) if tail_seen && indicators.is_some() => {
                return Err(err("event after indicators".into()))
            }
            (TraceEvent::Step(s), Some(t)) if !tail_seen => t.steps.push(*s),
            (TraceEvent::Execute(e), Some(t)) if !tail_seen => t.executed.push(*e),
            (TraceEvent::Tail { unexecuted }, Some(t)) if !tail_seen => {
                t.unexecuted = unexecuted;
                tail_seen = true;
            }
            (TraceEvent::Indicators(i), Some(_)) if tail_seen => indicators = Some(i),
            (_, Some(_)) => return Err(err("event out of order".into())),
        }
    }
    match trace {
        Some(t) if tail_seen => Ok((t, indicators)),
        _ => Err(TraceFormatError {
            line: text.lines().count(),
            message: "truncated trace".into(),
        }),
    }
}
