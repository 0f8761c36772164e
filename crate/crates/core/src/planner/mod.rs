//! The supplier's planning step: a mixed-binary production, subcontracting
//! and purchasing model over the planning horizon, with decisions inside
//! their anticipation delay frozen to previously committed values.

mod ledger;
mod params;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{
    LinearProgram, MixedIntegerProgram, Relation, Sense, Solution, SolverError, Status, VarId,
    TOLERANCES,
};
use crate::Period;

pub use ledger::{CommitLedger, DecisionKey, LedgerEntry, COMMIT_TOLERANCE};
pub use params::{
    Component, InitialState, PipelineOrder, PlanningParameters, Product, Supplier,
    WorkforceAction,
};

/// Item name under which plant-wide extra hours are keyed.
pub const PLANT: &str = "plant";

/// Largest balance residual accepted when extracting a plan.
pub const EXTRACTION_RESIDUAL: f64 = 1e-6;

/// Values this close to an integer are rounded on extraction.
const SNAP: f64 = 1e-7;

/// Decision variable families, each with its own anticipation delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Internal production.
    X,
    /// Subcontracted production.
    ST,
    /// Extra hours.
    HS,
    /// Workforce action switch.
    B,
    /// Component purchase from a rank-2 supplier.
    A,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("invalid planning parameters: {0}")]
    Parameters(String),
    #[error("deterministic demand missing or invalid for product {product} at period {period}")]
    DemandDomain { product: String, period: Period },
    #[error("ledger entry {key} = {value} is unusable: {reason}")]
    LedgerConflict {
        key: String,
        value: f64,
        reason: String,
    },
    #[error("commitment {key} already holds {old}, refusing {new}")]
    Overwrite { key: String, old: f64, new: f64 },
    #[error("no plan can be extracted from a solve with status {0:?}")]
    Unsolved(Status),
    #[error("extracted plan violates constraint {row} by {violation:e}")]
    Residual { row: String, violation: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

pub fn purchase_item(supplier: &str, component: &str) -> String {
    format!("{supplier}/{component}")
}

pub fn split_purchase(item: &str) -> Option<(&str, &str)> {
    item.split_once('/')
}

/// Deterministic demand per product and period.
pub type DemandSeries = BTreeMap<String, BTreeMap<Period, f64>>;

/// Inventory, backlog and component stock at the end of `τ − 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub on_hand: BTreeMap<String, f64>,
    pub backlog: BTreeMap<String, f64>,
    pub components: BTreeMap<String, f64>,
}

impl BoundaryState {
    pub fn initial(params: &PlanningParameters) -> Self {
        let pick = |m: &BTreeMap<String, f64>, ids: &mut dyn Iterator<Item = &String>| {
            ids.map(|id| (id.clone(), m.get(id).copied().unwrap_or(0.0)))
                .collect()
        };
        BoundaryState {
            on_hand: pick(&params.initial.on_hand, &mut params.products.iter().map(|p| &p.id)),
            backlog: pick(&params.initial.backlog, &mut params.products.iter().map(|p| &p.id)),
            components: pick(
                &params.initial.components,
                &mut params.components.iter().map(|c| &c.id),
            ),
        }
    }

    fn get(m: &BTreeMap<String, f64>, id: &str) -> f64 {
        m.get(id).copied().unwrap_or(0.0)
    }
}

/// Ledger seeded with the parameters' in-flight orders.
pub fn initial_ledger(params: &PlanningParameters) -> Result<CommitLedger, PlannerError> {
    let mut ledger = CommitLedger::new();
    for o in &params.initial.pipeline {
        ledger.record(DecisionKey::new(o.family, o.product.clone(), o.period), o.quantity, 0)?;
    }
    Ok(ledger)
}

/// What a column of the planning program stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VarRole {
    Decision(DecisionKey),
    OnHand { product: String, period: Period },
    Backlog { product: String, period: Period },
    Stock { component: String, period: Period },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningProblem {
    pub tau: Period,
    pub mip: MixedIntegerProgram,
    /// One role per column of `mip`.
    pub roles: Vec<VarRole>,
    pub dhat: DemandSeries,
    pub boundary: BoundaryState,
    /// Decisions frozen by their anticipation delay at this step.
    pub fixed: Vec<DecisionKey>,
}

fn lp_ident(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

struct PeriodVars {
    x: Vec<VarId>,
    st: Vec<VarId>,
    hs: VarId,
    b: Vec<VarId>,
    /// (component index, column) per supplier offer.
    a: Vec<(usize, VarId)>,
    on_hand: Vec<VarId>,
    backlog: Vec<VarId>,
    stock: Vec<VarId>,
}

struct Builder<'a> {
    params: &'a PlanningParameters,
    ledger: &'a CommitLedger,
    tau: Period,
    lp: LinearProgram,
    roles: Vec<VarRole>,
    fixed: Vec<DecisionKey>,
}

impl Builder<'_> {
    fn decision(
        &mut self,
        key: DecisionKey,
        supplier: Option<&str>,
        objective: f64,
        upper: f64,
    ) -> Result<VarId, PlannerError> {
        let name = lp_ident(&format!("{:?}_{}_{}", key.family, key.item, key.period));
        let delay = self.params.anticipation(key.family, supplier);
        let (lo, hi) = if key.period < self.tau + delay {
            let v = self.ledger.get(key.family, &key.item, key.period).unwrap_or(0.0);
            if !(v >= 0.0 && v <= upper + TOLERANCES.feasibility) {
                return Err(PlannerError::LedgerConflict {
                    key: key.to_string(),
                    value: v,
                    reason: format!("outside the variable's bounds [0, {upper}]"),
                });
            }
            self.fixed.push(key.clone());
            (v, v)
        } else {
            (0.0, upper)
        };
        let id = self.lp.add_variable(name, objective, lo, hi);
        self.roles.push(VarRole::Decision(key));
        Ok(id)
    }

    fn state(&mut self, role: VarRole, objective: f64, upper: f64) -> VarId {
        let name = match &role {
            VarRole::OnHand { product, period } => format!("Ip_{product}_{period}"),
            VarRole::Backlog { product, period } => format!("Im_{product}_{period}"),
            VarRole::Stock { component, period } => format!("J_{component}_{period}"),
            VarRole::Decision(_) => unreachable!(),
        };
        let id = self.lp.add_variable(lp_ident(&name), objective, 0.0, upper);
        self.roles.push(role);
        id
    }

    /// A lagged inflow: a column when the launch period is inside the
    /// horizon, otherwise the committed quantity.
    fn inflow(&self, vars: &[PeriodVars], family: Family, pi: usize, launch: Period) -> Result<(Option<VarId>, f64), PlannerError> {
        if launch >= self.tau {
            let pv = &vars[(launch - self.tau) as usize];
            Ok((Some(if family == Family::X { pv.x[pi] } else { pv.st[pi] }), 0.0))
        } else {
            let q = self
                .ledger
                .get(family, &self.params.products[pi].id, launch)
                .unwrap_or(0.0);
            Ok((None, q))
        }
    }
}

/// Builds the planning program for step `tau` over `[tau, tau + HP − 1]`.
pub fn build_problem(
    params: &PlanningParameters,
    dhat: &DemandSeries,
    ledger: &CommitLedger,
    boundary: &BoundaryState,
    tau: Period,
) -> Result<PlanningProblem, PlannerError> {
    params.validate()?;
    let hp = params.planning_horizon;
    let last = tau + hp - 1;
    let mut demand = DemandSeries::new();
    for p in &params.products {
        let series = demand.entry(p.id.clone()).or_default();
        for t in tau..=last {
            match dhat.get(&p.id).and_then(|m| m.get(&t)) {
                Some(&q) if q.is_finite() && q >= 0.0 => {
                    series.insert(t, q);
                }
                _ => {
                    return Err(PlannerError::DemandDomain {
                        product: p.id.clone(),
                        period: t,
                    })
                }
            }
        }
    }

    let mut b = Builder {
        params,
        ledger,
        tau,
        lp: LinearProgram::new(Sense::Maximize),
        roles: Vec::new(),
        fixed: Vec::new(),
    };
    let inf = f64::INFINITY;
    let cap = params.inventory_cap.unwrap_or(inf);
    let mut vars: Vec<PeriodVars> = Vec::with_capacity(hp as usize);
    let mut binaries = Vec::new();
    for t in tau..=last {
        let mut x = Vec::new();
        let mut st = Vec::new();
        for p in &params.products {
            x.push(b.decision(DecisionKey::new(Family::X, p.id.clone(), t), None, -p.production_cost, inf)?);
        }
        for p in &params.products {
            st.push(b.decision(DecisionKey::new(Family::ST, p.id.clone(), t), None, -p.subcontract_cost, inf)?);
        }
        let hs = b.decision(
            DecisionKey::new(Family::HS, PLANT, t),
            None,
            -params.extra_hours_cost,
            params.extra_hours_max,
        )?;
        let mut bv = Vec::new();
        for a in &params.actions {
            let id = b.decision(DecisionKey::new(Family::B, a.id.clone(), t), None, -a.cost, 1.0)?;
            binaries.push(id);
            bv.push(id);
        }
        let mut av = Vec::new();
        for s in &params.suppliers {
            for (ci, c) in params.components.iter().enumerate() {
                if let Some(&price) = s.prices.get(&c.id) {
                    let key = DecisionKey::new(Family::A, purchase_item(&s.id, &c.id), t);
                    av.push((ci, b.decision(key, Some(&s.id), -price, inf)?));
                }
            }
        }
        let mut on_hand = Vec::new();
        let mut backlog = Vec::new();
        for p in &params.products {
            on_hand.push(b.state(
                VarRole::OnHand { product: p.id.clone(), period: t },
                -p.holding_cost,
                cap,
            ));
        }
        for p in &params.products {
            // Revenue of V(t) = D̂(t) + I−(t−1) − I−(t): the I−(t) terms of
            // consecutive periods cancel except at the horizon end.
            let tail = if t == last { p.revenue } else { 0.0 };
            backlog.push(b.state(
                VarRole::Backlog { product: p.id.clone(), period: t },
                -p.backorder_cost - tail,
                inf,
            ));
        }
        let mut stock = Vec::new();
        for c in &params.components {
            stock.push(b.state(
                VarRole::Stock { component: c.id.clone(), period: t },
                -c.holding_cost,
                inf,
            ));
        }
        vars.push(PeriodVars {
            x,
            st,
            hs,
            b: bv,
            a: av,
            on_hand,
            backlog,
            stock,
        });
    }

    let mut offset = 0.0;
    for p in &params.products {
        offset += p.revenue
            * (demand[&p.id].values().sum::<f64>() + BoundaryState::get(&boundary.backlog, &p.id));
    }
    b.lp.objective_offset = offset;

    for t in tau..=last {
        let k = (t - tau) as usize;
        let pv = &vars[k];
        for (pi, p) in params.products.iter().enumerate() {
            let mut terms = vec![(pv.on_hand[pi], 1.0), (pv.backlog[pi], -1.0)];
            let mut rhs = -demand[&p.id][&t];
            if k == 0 {
                rhs += BoundaryState::get(&boundary.on_hand, &p.id)
                    - BoundaryState::get(&boundary.backlog, &p.id);
            } else {
                terms.push((vars[k - 1].on_hand[pi], -1.0));
                terms.push((vars[k - 1].backlog[pi], 1.0));
            }
            for (family, lag) in [
                (Family::X, params.production_lead_time),
                (Family::ST, params.subcontract_lead_time),
            ] {
                match b.inflow(&vars, family, pi, t - lag)? {
                    (Some(col), _) => terms.push((col, -1.0)),
                    (None, q) => rhs += q,
                }
            }
            b.lp.add_constraint(lp_ident(&format!("bal_{}_{t}", p.id)), terms, Relation::Eq, rhs);
        }

        let mut terms: Vec<(VarId, f64)> = params
            .products
            .iter()
            .zip(&pv.x)
            .map(|(p, &x)| (x, p.load))
            .collect();
        terms.extend(params.actions.iter().zip(&pv.b).map(|(a, &v)| (v, -a.overcapacity)));
        terms.push((pv.hs, -1.0));
        b.lp.add_constraint(format!("cap_{t}"), terms, Relation::Le, params.nominal_capacity);

        for (ci, c) in params.components.iter().enumerate() {
            let mut usage = Vec::new();
            for (pi, p) in params.products.iter().enumerate() {
                if let Some(&alpha) = p.bom.get(&c.id) {
                    if alpha != 0.0 {
                        usage.push((pv.x[pi], alpha));
                        usage.push((pv.st[pi], alpha));
                    }
                }
            }
            let mut bal = usage.clone();
            bal.push((pv.stock[ci], 1.0));
            bal.extend(pv.a.iter().filter(|(i, _)| *i == ci).map(|&(_, v)| (v, -1.0)));
            let mut avail = usage;
            let opening = if k == 0 {
                BoundaryState::get(&boundary.components, &c.id)
            } else {
                bal.push((vars[k - 1].stock[ci], -1.0));
                avail.push((vars[k - 1].stock[ci], -1.0));
                0.0
            };
            b.lp.add_constraint(lp_ident(&format!("comp_{}_{t}", c.id)), bal, Relation::Eq, opening);
            b.lp.add_constraint(lp_ident(&format!("avail_{}_{t}", c.id)), avail, Relation::Le, opening);
        }
    }

    Ok(PlanningProblem {
        tau,
        mip: MixedIntegerProgram::new(b.lp, binaries),
        roles: b.roles,
        dhat: demand,
        boundary: boundary.clone(),
        fixed: b.fixed,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodPlan {
    pub period: Period,
    pub demand: BTreeMap<String, f64>,
    pub production: BTreeMap<String, f64>,
    pub subcontracting: BTreeMap<String, f64>,
    pub extra_hours: f64,
    pub actions: BTreeMap<String, f64>,
    /// Keyed by `supplier/component`.
    pub purchases: BTreeMap<String, f64>,
    pub on_hand: BTreeMap<String, f64>,
    pub backlog: BTreeMap<String, f64>,
    pub components: BTreeMap<String, f64>,
    pub delivered: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionPlan {
    pub tau: Period,
    pub status: Status,
    pub objective: f64,
    pub periods: Vec<PeriodPlan>,
}

impl ProductionPlan {
    pub fn period(&self, t: Period) -> Option<&PeriodPlan> {
        t.checked_sub(self.tau)
            .and_then(|k| usize::try_from(k).ok())
            .and_then(|k| self.periods.get(k))
    }

    /// Every decision value of the plan, keyed like the ledger.
    pub fn decisions(&self) -> Vec<(DecisionKey, f64)> {
        let mut out = Vec::new();
        for pp in &self.periods {
            let t = pp.period;
            for (family, map) in [
                (Family::X, &pp.production),
                (Family::ST, &pp.subcontracting),
                (Family::B, &pp.actions),
                (Family::A, &pp.purchases),
            ] {
                out.extend(map.iter().map(|(k, &v)| (DecisionKey::new(family, k.clone(), t), v)));
            }
            out.push((DecisionKey::new(Family::HS, PLANT, t), pp.extra_hours));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

fn snap(v: f64, tol: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < tol {
        r + 0.0
    } else {
        v
    }
}

/// Maps solver values back onto a named plan and checks every row of the
/// program against the rounded values.
pub fn extract_plan(problem: &PlanningProblem, solution: &Solution) -> Result<ProductionPlan, PlannerError> {
    if !solution.status.has_values() {
        return Err(PlannerError::Unsolved(solution.status));
    }
    let lp = &problem.mip.lp;
    let mut values: Vec<f64> = solution
        .values
        .iter()
        .zip(&lp.variables)
        .map(|(&v, var)| snap(v, SNAP).clamp(var.lower, var.upper))
        .collect();
    for &k in &problem.mip.binaries {
        values[k] = snap(values[k], TOLERANCES.integrality);
    }
    for (i, c) in lp.constraints.iter().enumerate() {
        let act = lp.row_activity(i, &values);
        let violation = match c.relation {
            Relation::Le => act - c.rhs,
            Relation::Ge => c.rhs - act,
            Relation::Eq => (act - c.rhs).abs(),
        };
        if violation > EXTRACTION_RESIDUAL {
            return Err(PlannerError::Residual {
                row: c.name.clone(),
                violation,
            });
        }
    }

    let hp = problem
        .dhat
        .values()
        .next()
        .map_or(0, |m| m.len());
    let mut periods: Vec<PeriodPlan> = (0..hp)
        .map(|k| {
            let t = problem.tau + k as Period;
            PeriodPlan {
                period: t,
                demand: problem.dhat.iter().map(|(p, m)| (p.clone(), m[&t])).collect(),
                ..PeriodPlan::default()
            }
        })
        .collect();
    for (role, &v) in problem.roles.iter().zip(&values) {
        let period = match role {
            VarRole::Decision(key) => key.period,
            VarRole::OnHand { period, .. }
            | VarRole::Backlog { period, .. }
            | VarRole::Stock { period, .. } => *period,
        };
        let pp = &mut periods[(period - problem.tau) as usize];
        match role {
            VarRole::Decision(key) => {
                let map = match key.family {
                    Family::X => &mut pp.production,
                    Family::ST => &mut pp.subcontracting,
                    Family::B => &mut pp.actions,
                    Family::A => &mut pp.purchases,
                    Family::HS => {
                        pp.extra_hours = v;
                        continue;
                    }
                };
                map.insert(key.item.clone(), v);
            }
            VarRole::OnHand { product, .. } => {
                pp.on_hand.insert(product.clone(), v);
            }
            VarRole::Backlog { product, .. } => {
                pp.backlog.insert(product.clone(), v);
            }
            VarRole::Stock { component, .. } => {
                pp.components.insert(component.clone(), v);
            }
        }
    }
    for k in 0..periods.len() {
        let products: Vec<String> = periods[k].demand.keys().cloned().collect();
        for p in products {
            let prev = if k == 0 {
                BoundaryState::get(&problem.boundary.backlog, &p)
            } else {
                periods[k - 1].backlog[&p]
            };
            let pp = &mut periods[k];
            let v = pp.demand[&p] + prev - pp.backlog[&p];
            pp.delivered.insert(p, v);
        }
    }
    Ok(ProductionPlan {
        tau: problem.tau,
        status: solution.status,
        objective: lp.objective_value(&values),
        periods,
    })
}

/// The planning objective recomputed term by term from a plan's fields.
pub fn plan_objective(plan: &ProductionPlan, params: &PlanningParameters) -> f64 {
    let mut total = 0.0;
    for pp in &plan.periods {
        for p in &params.products {
            let g = |m: &BTreeMap<String, f64>| m.get(&p.id).copied().unwrap_or(0.0);
            total += p.revenue * g(&pp.delivered)
                - p.holding_cost * g(&pp.on_hand)
                - p.backorder_cost * g(&pp.backlog)
                - p.production_cost * g(&pp.production)
                - p.subcontract_cost * g(&pp.subcontracting);
        }
        for c in &params.components {
            total -= c.holding_cost * pp.components.get(&c.id).copied().unwrap_or(0.0);
        }
        for (item, &q) in &pp.purchases {
            if let Some((s, c)) = split_purchase(item) {
                let price = params
                    .supplier(s)
                    .and_then(|s| s.prices.get(c))
                    .copied()
                    .unwrap_or(0.0);
                total -= price * q;
            }
        }
        for a in &params.actions {
            total -= a.cost * pp.actions.get(&a.id).copied().unwrap_or(0.0);
        }
        total -= params.extra_hours_cost * pp.extra_hours;
    }
    total
}

/// Anticipation delay of one ledger key.
pub fn delay_of(params: &PlanningParameters, key: &DecisionKey) -> Period {
    let supplier = match key.family {
        Family::A => split_purchase(&key.item).map(|(s, _)| s),
        _ => None,
    };
    params.anticipation(key.family, supplier)
}

/// Writes every decision of `plan` that will no longer be revisable at
/// step `τ + PP` (period `< τ + PP + DA(family)`) into a copy of the ledger.
pub fn commit(
    plan: &ProductionPlan,
    ledger: &CommitLedger,
    params: &PlanningParameters,
    replanning_period: Period,
) -> Result<CommitLedger, PlannerError> {
    let mut next = ledger.clone();
    for (key, v) in plan.decisions() {
        if key.period < plan.tau + replanning_period + delay_of(params, &key) {
            next.record(key, v, plan.tau)?;
        }
    }
    Ok(next)
}
