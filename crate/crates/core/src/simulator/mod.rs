//! Rolling-horizon simulation of one scenario: the customer rolls its
//! demand plan, the supplier plans, commits and executes, period after
//! period, and the executed periods are costed.

mod audit;
mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{
    init_demand, resolve_deterministic, roll_demand, Consolidation, CustomerConfig, DemandError,
    DemandPlan, StrategyMode, TrendSpec,
};
use crate::planner::{
    build_problem, commit, extract_plan, initial_ledger, split_purchase, BoundaryState,
    CommitLedger, DemandSeries, Family, LedgerEntry, PlannerError, PlanningParameters,
    PlanningProblem, ProductionPlan, PLANT,
};
use crate::solver::{solve_lp, solve_mip, SolverError, SolverLimits, Status};
use crate::Period;

pub use audit::{audit_trace, AuditReport};
pub use trace::{export_jsonl, import_jsonl, TraceEvent, TraceFormatError};

/// Negative component stock tolerated before execution fails.
const STOCK_TOLERANCE: f64 = 1e-6;

/// Supplier demand-management strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SupplierStrategy {
    /// Plans on the upper bound of flexible demand.
    S1,
    /// Plans on the lower bound.
    S2,
}

impl SupplierStrategy {
    pub fn mode(self) -> StrategyMode {
        match self {
            SupplierStrategy::S1 => StrategyMode::MaxBound,
            SupplierStrategy::S2 => StrategyMode::MinBound,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SupplierStrategy::S1 => "S1",
            SupplierStrategy::S2 => "S2",
        }
    }
}

impl std::str::FromStr for SupplierStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "S1" => Ok(SupplierStrategy::S1),
            "S2" => Ok(SupplierStrategy::S2),
            other => Err(format!("unknown supplier strategy '{other}'")),
        }
    }
}

/// Length of the firm horizon the customer commits to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Visibility {
    pub label: String,
    pub firm_length: Period,
}

impl Visibility {
    pub fn new(label: &str, firm_length: Period) -> Self {
        Visibility {
            label: label.into(),
            firm_length,
        }
    }

    /// V1..V4: 4, 6, 8 and 10 firm periods.
    pub fn standard() -> Vec<Visibility> {
        vec![
            Visibility::new("V1", 4),
            Visibility::new("V2", 6),
            Visibility::new("V3", 8),
            Visibility::new("V4", 10),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub trend: String,
    pub consolidation: Consolidation,
    pub visibility: Visibility,
    pub strategy: SupplierStrategy,
}

impl ScenarioSpec {
    pub fn id(&self) -> String {
        format!(
            "{}-{}-{}-{}",
            self.trend,
            self.consolidation.label(),
            self.visibility.label,
            self.strategy.label()
        )
    }
}

/// Everything a scenario run shares with the other scenarios of an
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSetup {
    pub params: PlanningParameters,
    pub trends: Vec<TrendSpec>,
    pub replanning_period: Period,
    pub first_step: Period,
    /// Replace the configured initial state by the steady state of the
    /// trend's baseline.
    pub warm_start: bool,
    pub limits: SolverLimits,
}

impl SimulationSetup {
    pub fn trend(&self, id: &str) -> Option<&TrendSpec> {
        self.trends.iter().find(|t| t.id == id)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("unknown trend '{0}'")]
    UnknownTrend(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("planning step {tau} ended with status {status:?}; {diagnostic}")]
    Step {
        tau: Period,
        status: Status,
        diagnostic: String,
    },
    #[error("execution of period {period} failed: {reason}")]
    Execution { period: Period, reason: String },
    #[error("accounting error: {0}")]
    Accounting(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub tau: Period,
    pub demand_plan: DemandPlan,
    pub dhat: DemandSeries,
    pub plan: ProductionPlan,
    pub status: Status,
    pub nodes: usize,
    /// The solve hit its budget and the plan is the best incumbent.
    pub flagged: bool,
    /// Entries this step added to the ledger. The ledger after step `k` is
    /// the union of the commitments of steps `..=k` and the pipeline.
    pub commits: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutedPeriod {
    pub period: Period,
    /// Step whose plan executed this period.
    pub step: Period,
    pub demand: BTreeMap<String, f64>,
    pub production: BTreeMap<String, f64>,
    pub subcontracting: BTreeMap<String, f64>,
    pub extra_hours: f64,
    pub actions: BTreeMap<String, f64>,
    pub purchases: BTreeMap<String, f64>,
    /// Finished goods landing this period (lagged production and
    /// subcontracting).
    pub arrivals: BTreeMap<String, f64>,
    pub on_hand: BTreeMap<String, f64>,
    pub backlog: BTreeMap<String, f64>,
    pub components: BTreeMap<String, f64>,
    pub delivered: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub scenario: ScenarioSpec,
    pub first_step: Period,
    pub replanning_period: Period,
    pub simulation_length: Period,
    /// Parameters actually used, warm start applied.
    pub params: PlanningParameters,
    pub initial: BoundaryState,
    pub pipeline: Vec<LedgerEntry>,
    pub steps: Vec<StepRecord>,
    pub executed: Vec<ExecutedPeriod>,
    /// Committed decisions for periods after the last executed one. Reported,
    /// never costed.
    pub unexecuted: Vec<LedgerEntry>,
}

impl SimulationTrace {
    pub fn flagged_steps(&self) -> Vec<Period> {
        self.steps.iter().filter(|s| s.flagged).map(|s| s.tau).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSet {
    pub global_gain: f64,
    pub global_costs: f64,
    pub production_cost: f64,
    pub inventory_cost: f64,
    pub backorder_cost: f64,
    pub purchasing_cost: f64,
    pub revenue: f64,
    pub internal_production_cost: f64,
    pub subcontracting_cost: f64,
    pub extra_hours_cost: f64,
    pub workforce_cost: f64,
    pub finished_holding_cost: f64,
    pub component_holding_cost: f64,
}

fn get(m: &BTreeMap<String, f64>, k: &str) -> f64 {
    m.get(k).copied().unwrap_or(0.0)
}

fn demand_series(params: &PlanningParameters, trend: &TrendSpec, plan: &DemandPlan, mode: StrategyMode) -> DemandSeries {
    let resolved = resolve_deterministic(plan, mode);
    params
        .products
        .iter()
        .map(|p| {
            let series = if p.id == trend.product {
                resolved.clone()
            } else {
                resolved.keys().map(|&t| (t, 0.0)).collect()
            };
            (p.id.clone(), series)
        })
        .collect()
}

/// Constraint groups whose removal makes the step's relaxation feasible.
pub fn diagnose_infeasibility(problem: &PlanningProblem) -> Vec<String> {
    let lp = &problem.mip.lp;
    let mut groups: Vec<String> = lp
        .constraints
        .iter()
        .map(|c| c.name.split('_').next().unwrap_or("").to_string())
        .collect();
    groups.sort();
    groups.dedup();
    let mut found = Vec::new();
    for g in &groups {
        let mut relaxed = lp.clone();
        relaxed
            .constraints
            .retain(|c| c.name.split('_').next() != Some(g.as_str()));
        if matches!(solve_lp(&relaxed), Ok(s) if s.status != Status::Infeasible) {
            found.push(format!("{g} rows"));
        }
    }
    let mut uncapped = lp.clone();
    let mut capped = false;
    for v in &mut uncapped.variables {
        if v.name.starts_with("Ip_") && v.upper.is_finite() {
            v.upper = f64::INFINITY;
            capped = true;
        }
    }
    if capped && matches!(solve_lp(&uncapped), Ok(s) if s.status != Status::Infeasible) {
        found.push("inventory cap".into());
    }
    let mut unfrozen = lp.clone();
    for (v, role) in unfrozen.variables.iter_mut().zip(&problem.roles) {
        if let crate::planner::VarRole::Decision(key) = role {
            if problem.fixed.contains(key) {
                v.lower = 0.0;
                v.upper = if key.family == Family::B { 1.0 } else { f64::INFINITY };
            }
        }
    }
    if matches!(solve_lp(&unfrozen), Ok(s) if s.status != Status::Infeasible) {
        found.push("frozen decisions".into());
    }
    found
}

pub fn run_scenario(setup: &SimulationSetup, spec: &ScenarioSpec) -> Result<(SimulationTrace, IndicatorSet), SimulationError> {
    let trend = setup
        .trend(&spec.trend)
        .ok_or_else(|| SimulationError::UnknownTrend(spec.trend.clone()))?;
    trend.validate()?;
    let mut params = setup.params.clone();
    if params.product(&trend.product).is_none() {
        return Err(SimulationError::InvalidScenario(format!(
            "trend {} drives unknown product {}",
            trend.id, trend.product
        )));
    }
    if setup.warm_start {
        params = params.with_warm_start(&[(trend.product.clone(), trend.baseline)].into(), setup.first_step);
    }
    params.validate()?;
    let cfg = CustomerConfig {
        firm_length: spec.visibility.firm_length,
        planning_horizon: params.planning_horizon,
        replanning_period: setup.replanning_period,
        consolidation: spec.consolidation,
    };
    cfg.validate()?;
    let pp = setup.replanning_period;
    let length = trend.simulation_length;

    let mut ledger = initial_ledger(&params)?;
    let pipeline: Vec<LedgerEntry> = ledger.clone().into();
    let initial = BoundaryState::initial(&params);
    let mut boundary = initial.clone();
    let mut demand_plan: Option<DemandPlan> = None;
    let mut steps = Vec::new();
    let mut executed = Vec::new();
    let mut tau = setup.first_step;
    while tau + pp - 1 <= length {
        let dp = match &demand_plan {
            None => init_demand(trend, &cfg, tau)?,
            Some(prev) => roll_demand(prev, trend, &cfg)?,
        };
        let dhat = demand_series(&params, trend, &dp, spec.strategy.mode());
        let problem = build_problem(&params, &dhat, &ledger, &boundary, tau)?;
        let sol = solve_mip(&problem.mip, &setup.limits)?;
        if !sol.status.has_values() {
            let diagnostic = match sol.status {
                Status::Infeasible => {
                    let groups = diagnose_infeasibility(&problem);
                    if groups.is_empty() {
                        "no single constraint group explains the infeasibility".to_string()
                    } else {
                        format!("feasibility is restored by dropping: {}", groups.join(", "))
                    }
                }
                Status::LimitWithoutIncumbent => "the solver budget ran out before any integral plan was found".into(),
                _ => "the planning program is unbounded".into(),
            };
            return Err(SimulationError::Step {
                tau,
                status: sol.status,
                diagnostic,
            });
        }
        let plan = extract_plan(&problem, &sol)?;
        let next = commit(&plan, &ledger, &params, pp)?;
        let commits: Vec<LedgerEntry> = next
            .iter()
            .filter(|(k, _, _)| !ledger.contains(k))
            .map(|(k, v, s)| LedgerEntry {
                key: k.clone(),
                value: v,
                step: s,
            })
            .collect();
        ledger = next;
        for t in tau..tau + pp {
            let period = execute(&params, &ledger, &dp, &trend.product, &boundary, t, tau)?;
            boundary = BoundaryState {
                on_hand: period.on_hand.clone(),
                backlog: period.backlog.clone(),
                components: period.components.clone(),
            };
            executed.push(period);
        }
        steps.push(StepRecord {
            tau,
            demand_plan: dp.clone(),
            dhat,
            plan,
            status: sol.status,
            nodes: sol.nodes,
            flagged: sol.status == Status::IncumbentAtLimit,
            commits,
        });
        demand_plan = Some(dp);
        tau += pp;
    }
    let last_executed = tau - 1;
    let unexecuted = ledger
        .iter()
        .filter(|(k, _, _)| k.period > last_executed)
        .map(|(k, v, s)| LedgerEntry {
            key: k.clone(),
            value: v,
            step: s,
        })
        .collect();
    let trace = SimulationTrace {
        scenario: spec.clone(),
        first_step: setup.first_step,
        replanning_period: pp,
        simulation_length: length,
        params,
        initial,
        pipeline,
        steps,
        executed,
        unexecuted,
    };
    let indicators = compute_indicators(&trace, &trace.params)?;
    Ok((trace, indicators))
}

/// Applies the committed decisions of period `t` to the realized (firm)
/// demand.
fn execute(
    params: &PlanningParameters,
    ledger: &CommitLedger,
    dp: &DemandPlan,
    product: &str,
    before: &BoundaryState,
    t: Period,
    step: Period,
) -> Result<ExecutedPeriod, SimulationError> {
    let committed = |family: Family, item: &str, period: Period| -> Result<f64, SimulationError> {
        ledger.get(family, item, period).ok_or_else(|| SimulationError::Execution {
            period: t,
            reason: format!("decision {family:?}({item}, {period}) was never committed"),
        })
    };
    let lagged = |family: Family, item: &str, period: Period| ledger.get(family, item, period).unwrap_or(0.0);
    let mut out = ExecutedPeriod {
        period: t,
        step,
        ..ExecutedPeriod::default()
    };
    let firm = *dp.firm.get(&t).ok_or_else(|| SimulationError::Execution {
        period: t,
        reason: "period is not in the firm horizon".into(),
    })?;
    out.extra_hours = committed(Family::HS, PLANT, t)?;
    for a in &params.actions {
        out.actions.insert(a.id.clone(), committed(Family::B, &a.id, t)?);
    }
    for s in &params.suppliers {
        for c in s.prices.keys() {
            let item = crate::planner::purchase_item(&s.id, c);
            let q = committed(Family::A, &item, t)?;
            out.purchases.insert(item, q);
        }
    }
    for p in &params.products {
        let demand = if p.id == product { firm } else { 0.0 };
        let x = committed(Family::X, &p.id, t)?;
        let st = committed(Family::ST, &p.id, t)?;
        let arrivals = lagged(Family::X, &p.id, t - params.production_lead_time)
            + lagged(Family::ST, &p.id, t - params.subcontract_lead_time);
        let prev_on_hand = get(&before.on_hand, &p.id);
        let prev_backlog = get(&before.backlog, &p.id);
        let net = prev_on_hand - prev_backlog + arrivals - demand;
        let (on_hand, backlog) = (net.max(0.0), (-net).max(0.0));
        out.demand.insert(p.id.clone(), demand);
        out.production.insert(p.id.clone(), x);
        out.subcontracting.insert(p.id.clone(), st);
        out.arrivals.insert(p.id.clone(), arrivals);
        out.on_hand.insert(p.id.clone(), on_hand);
        out.backlog.insert(p.id.clone(), backlog);
        out.delivered.insert(p.id.clone(), demand + prev_backlog - backlog);
    }
    for c in &params.components {
        let opening = get(&before.components, &c.id);
        let usage: f64 = params
            .products
            .iter()
            .map(|p| p.bom.get(&c.id).copied().unwrap_or(0.0) * (out.production[&p.id] + out.subcontracting[&p.id]))
            .sum();
        let bought: f64 = out
            .purchases
            .iter()
            .filter(|(item, _)| split_purchase(item).map(|(_, comp)| comp) == Some(c.id.as_str()))
            .map(|(_, &q)| q)
            .sum();
        if usage > opening + STOCK_TOLERANCE {
            return Err(SimulationError::Execution {
                period: t,
                reason: format!("component {} consumption {usage} exceeds opening stock {opening}", c.id),
            });
        }
        let closing = opening - usage + bought;
        if closing < -STOCK_TOLERANCE {
            return Err(SimulationError::Execution {
                period: t,
                reason: format!("component {} stock would be {closing}", c.id),
            });
        }
        out.components.insert(c.id.clone(), closing.max(0.0));
    }
    Ok(out)
}

/// Costs the executed periods of a trace.
pub fn compute_indicators(trace: &SimulationTrace, params: &PlanningParameters) -> Result<IndicatorSet, SimulationError> {
    for (k, e) in trace.executed.iter().enumerate() {
        let expected = trace.first_step + k as Period;
        if e.period != expected {
            return Err(SimulationError::Accounting(format!(
                "executed periods are not contiguous: expected {expected}, found {}",
                e.period
            )));
        }
    }
    let mut s = IndicatorSet::default();
    for e in &trace.executed {
        for p in &params.products {
            s.revenue += p.revenue * get(&e.delivered, &p.id);
            s.internal_production_cost += p.production_cost * get(&e.production, &p.id);
            s.subcontracting_cost += p.subcontract_cost * get(&e.subcontracting, &p.id);
            s.finished_holding_cost += p.holding_cost * get(&e.on_hand, &p.id);
            s.backorder_cost += p.backorder_cost * get(&e.backlog, &p.id);
        }
        for c in &params.components {
            s.component_holding_cost += c.holding_cost * get(&e.components, &c.id);
        }
        for a in &params.actions {
            s.workforce_cost += a.cost * get(&e.actions, &a.id);
        }
        s.extra_hours_cost += params.extra_hours_cost * e.extra_hours;
        for (item, &q) in &e.purchases {
            let (sup, comp) = split_purchase(item)
                .ok_or_else(|| SimulationError::Accounting(format!("malformed purchase key {item}")))?;
            let price = params
                .supplier(sup)
                .and_then(|x| x.prices.get(comp))
                .ok_or_else(|| SimulationError::Accounting(format!("no price for {item}")))?;
            s.purchasing_cost += price * q;
        }
    }
    s.production_cost = s.internal_production_cost + s.subcontracting_cost + s.extra_hours_cost + s.workforce_cost;
    s.inventory_cost = s.finished_holding_cost + s.component_holding_cost;
    s.global_costs = s.production_cost + s.inventory_cost + s.backorder_cost + s.purchasing_cost;
    s.global_gain = s.revenue - s.global_costs;
    Ok(s)
}

/// Realized backlog per executed period, summed over products.
pub fn backorder_series(trace: &SimulationTrace) -> Vec<(Period, f64)> {
    trace
        .executed
        .iter()
        .map(|e| (e.period, e.backlog.values().sum()))
        .collect()
}

/// Realized finished-goods inventory per executed period.
pub fn inventory_series(trace: &SimulationTrace) -> Vec<(Period, f64)> {
    trace
        .executed
        .iter()
        .map(|e| (e.period, e.on_hand.values().sum()))
        .collect()
}
