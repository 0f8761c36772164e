//! Consistency checks over a finished trace. Every check is recomputed
//! from the recorded events, not from the engine's internal state.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{compute_indicators, get, SimulationTrace};
use crate::planner::{split_purchase, DecisionKey, Family, PLANT};
use crate::Period;

const TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    /// (check name, violations found).
    pub checks: Vec<(String, Vec<String>)>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.checks.iter().all(|(_, v)| v.is_empty())
    }

    pub fn violations(&self) -> impl Iterator<Item = String> + '_ {
        self.checks
            .iter()
            .flat_map(|(name, v)| v.iter().map(move |m| format!("{name}: {m}")))
    }
}

pub fn audit_trace(trace: &SimulationTrace) -> AuditReport {
    let mut report = AuditReport::default();
    report.checks.push(("demand immutability".into(), demand_rolls(trace)));
    report.checks.push(("realized demand".into(), realized_demand(trace)));
    report.checks.push(("execution window".into(), execution_window(trace)));
    report.checks.push(("inventory conservation".into(), inventory(trace)));
    report.checks.push(("component conservation".into(), components(trace)));
    report.checks.push(("non-anticipativity".into(), write_once(trace)));
    report.checks.push(("accounting identities".into(), accounting(trace)));
    report
}

fn demand_rolls(trace: &SimulationTrace) -> Vec<String> {
    let mut out = Vec::new();
    for w in trace.steps.windows(2) {
        let (a, b) = (&w[0].demand_plan, &w[1].demand_plan);
        for (t, q) in &b.firm {
            if let Some(old) = a.firm.get(t) {
                if old != q {
                    out.push(format!("firm demand of {t} changed from {old} to {q} at step {}", b.tau));
                }
            } else if let Some(iv) = a.flexible.get(t) {
                if !(iv.lower <= *q && *q <= iv.upper) {
                    out.push(format!("firm demand {q} of {t} left its interval [{}, {}]", iv.lower, iv.upper));
                }
            }
        }
        for (t, iv) in &b.flexible {
            if let Some(old) = a.flexible.get(t) {
                if old != iv {
                    out.push(format!("flexible interval of {t} changed at step {}", b.tau));
                }
            }
        }
    }
    out
}

fn realized_demand(trace: &SimulationTrace) -> Vec<String> {
    let steps: BTreeMap<Period, _> = trace.steps.iter().map(|s| (s.tau, s)).collect();
    let mut out = Vec::new();
    for e in &trace.executed {
        let Some(step) = steps.get(&e.step) else {
            out.push(format!("period {} executed by unknown step {}", e.period, e.step));
            continue;
        };
        let firm = step.demand_plan.firm.get(&e.period).copied();
        let total: f64 = e.demand.values().sum();
        match firm {
            Some(q) if q == total => {}
            other => out.push(format!("period {} realized {total}, firm value {other:?}", e.period)),
        }
    }
    out
}

fn execution_window(trace: &SimulationTrace) -> Vec<String> {
    let mut out = Vec::new();
    let pp = trace.replanning_period;
    let expected: Vec<(Period, Period)> = trace
        .steps
        .iter()
        .flat_map(|s| (s.tau..s.tau + pp).map(move |t| (t, s.tau)))
        .collect();
    let actual: Vec<(Period, Period)> = trace.executed.iter().map(|e| (e.period, e.step)).collect();
    if expected != actual {
        out.push(format!("executed (period, step) pairs {actual:?} differ from step windows {expected:?}"));
    }
    if let Some(last) = trace.executed.last() {
        if last.period > trace.simulation_length {
            out.push(format!("period {} executed past the simulation horizon", last.period));
        }
    }
    out
}

fn launched(trace: &SimulationTrace, family: Family, product: &str, t: Period) -> f64 {
    if let Some(e) = trace.executed.iter().find(|e| e.period == t) {
        let m = if family == Family::X { &e.production } else { &e.subcontracting };
        return get(m, product);
    }
    trace
        .pipeline
        .iter()
        .find(|p| p.key.family == family && p.key.item == product && p.key.period == t)
        .map_or(0.0, |p| p.value)
}

fn inventory(trace: &SimulationTrace) -> Vec<String> {
    let params = &trace.params;
    let mut out = Vec::new();
    for p in &params.products {
        let mut net = get(&trace.initial.on_hand, &p.id) - get(&trace.initial.backlog, &p.id);
        for e in &trace.executed {
            let arrivals = launched(trace, Family::X, &p.id, e.period - params.production_lead_time)
                + launched(trace, Family::ST, &p.id, e.period - params.subcontract_lead_time);
            net += arrivals - get(&e.demand, &p.id);
            let (on_hand, backlog) = (get(&e.on_hand, &p.id), get(&e.backlog, &p.id));
            if (on_hand - backlog - net).abs() > TOL || on_hand < 0.0 || backlog < 0.0 {
                out.push(format!("{} at {}: I+ {on_hand}, I- {backlog}, expected net {net}", p.id, e.period));
            }
            if let Some(cap) = params.inventory_cap {
                if on_hand > cap + TOL {
                    out.push(format!("{} at {}: inventory {on_hand} above cap {cap}", p.id, e.period));
                }
            }
            net = on_hand - backlog;
        }
    }
    out
}

fn components(trace: &SimulationTrace) -> Vec<String> {
    let params = &trace.params;
    let mut out = Vec::new();
    for c in &params.components {
        let mut stock = get(&trace.initial.components, &c.id);
        for e in &trace.executed {
            let usage: f64 = params
                .products
                .iter()
                .map(|p| p.bom.get(&c.id).copied().unwrap_or(0.0) * (get(&e.production, &p.id) + get(&e.subcontracting, &p.id)))
                .sum();
            let bought: f64 = e
                .purchases
                .iter()
                .filter(|(k, _)| split_purchase(k).map(|x| x.1) == Some(c.id.as_str()))
                .map(|(_, q)| q)
                .sum();
            if usage > stock + TOL {
                out.push(format!("{} at {}: uses {usage} with {stock} in stock", c.id, e.period));
            }
            let next = stock - usage + bought;
            let recorded = get(&e.components, &c.id);
            if (next - recorded).abs() > TOL || recorded < 0.0 {
                out.push(format!("{} at {}: recorded {recorded}, expected {next}", c.id, e.period));
            }
            stock = recorded;
        }
    }
    out
}

fn write_once(trace: &SimulationTrace) -> Vec<String> {
    let mut out = Vec::new();
    let mut committed: BTreeMap<DecisionKey, f64> = trace
        .pipeline
        .iter()
        .map(|e| (e.key.clone(), e.value))
        .collect();
    for step in &trace.steps {
        for (key, v) in step.plan.decisions() {
            if let Some(&c) = committed.get(&key) {
                if (c - v).abs() > 1e-9 {
                    out.push(format!("step {} revised {key} from {c} to {v}", step.tau));
                }
            }
        }
        let plan: BTreeMap<_, _> = step.plan.decisions().into_iter().collect();
        for e in &step.commits {
            if committed.insert(e.key.clone(), e.value).is_some() {
                out.push(format!("{} committed twice", e.key));
            }
            if e.step != step.tau {
                out.push(format!("{} attributed to step {} inside step {}", e.key, e.step, step.tau));
            }
            if plan.get(&e.key).is_none_or(|&v| (v - e.value).abs() > 1e-9) {
                out.push(format!("{} committed a value its plan does not hold", e.key));
            }
        }
    }
    for e in &trace.executed {
        let mut decisions: Vec<(DecisionKey, f64)> = vec![(DecisionKey::new(Family::HS, PLANT, e.period), e.extra_hours)];
        for (family, m) in [
            (Family::X, &e.production),
            (Family::ST, &e.subcontracting),
            (Family::B, &e.actions),
            (Family::A, &e.purchases),
        ] {
            decisions.extend(m.iter().map(|(k, &v)| (DecisionKey::new(family, k.clone(), e.period), v)));
        }
        for (key, v) in decisions {
            match committed.get(&key) {
                Some(&c) if (c - v).abs() <= 1e-9 => {}
                other => out.push(format!("executed {key} = {v}, committed {other:?}")),
            }
        }
    }
    out
}

fn accounting(trace: &SimulationTrace) -> Vec<String> {
    let mut out = Vec::new();
    match compute_indicators(trace, &trace.params) {
        Ok(s) => {
            let four = s.production_cost + s.inventory_cost + s.backorder_cost + s.purchasing_cost;
            if (s.global_costs - four).abs() > TOL {
                out.push(format!("global costs {} differ from the four totals {four}", s.global_costs));
            }
            if (s.global_gain - (s.revenue - s.global_costs)).abs() > TOL {
                out.push("gain is not revenue minus costs".into());
            }
            let production = s.internal_production_cost + s.subcontracting_cost + s.extra_hours_cost + s.workforce_cost;
            if (s.production_cost - production).abs() > TOL {
                out.push("production total differs from its subcosts".into());
            }
            if (s.inventory_cost - s.finished_holding_cost - s.component_holding_cost).abs() > TOL {
                out.push("inventory total differs from its subcosts".into());
            }
        }
        Err(e) => out.push(e.to_string()),
    }
    out
}
