use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Family, PlannerError};
use crate::Period;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Product {
    pub id: String,
    /// Unit selling price `v`.
    pub revenue: f64,
    /// Capacity consumed per unit produced internally (time units).
    pub load: f64,
    pub holding_cost: f64,
    pub backorder_cost: f64,
    pub production_cost: f64,
    pub subcontract_cost: f64,
    /// Bill of materials: component id → units per product.
    pub bom: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub id: String,
    pub holding_cost: f64,
}

/// Rank-2 supplier of components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Supplier {
    pub id: String,
    pub anticipation: Period,
    /// Component id → unit purchase price. Components not listed are not
    /// sold by this supplier.
    pub prices: BTreeMap<String, f64>,
}

/// Binary capacity lever such as an extra shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkforceAction {
    pub id: String,
    /// Time units added per period when active.
    pub overcapacity: f64,
    /// Cost per active period.
    pub cost: f64,
}

/// A production or subcontracting order launched before the first
/// planning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOrder {
    pub family: Family,
    pub product: String,
    pub period: Period,
    pub quantity: f64,
}

/// Stock positions at the end of the period before the first planning step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default)]
    pub on_hand: BTreeMap<String, f64>,
    #[serde(default)]
    pub backlog: BTreeMap<String, f64>,
    #[serde(default)]
    pub components: BTreeMap<String, f64>,
    #[serde(default)]
    pub pipeline: Vec<PipelineOrder>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningParameters {
    pub products: Vec<Product>,
    pub components: Vec<Component>,
    pub suppliers: Vec<Supplier>,
    pub actions: Vec<WorkforceAction>,
    pub production_lead_time: Period,
    pub production_anticipation: Period,
    pub subcontract_lead_time: Period,
    pub subcontract_anticipation: Period,
    pub extra_hours_cost: f64,
    pub extra_hours_anticipation: Period,
    pub extra_hours_max: f64,
    pub action_anticipation: Period,
    pub nominal_capacity: f64,
    /// Upper bound on finished-goods inventory, when active.
    pub inventory_cap: Option<f64>,
    pub planning_horizon: Period,
    #[serde(default)]
    pub initial: InitialState,
}

impl PlanningParameters {
    /// The single-product, two-component, two-supplier plant of the worked
    /// example, with an empty initial state. Capacity, the extra-hours cap
    /// and the workforce action are not given numerically there; the values
    /// used here are 100 time units, 20 time units and one 50-unit shift at
    /// 1 500 per period.
    pub fn reference() -> Self {
        PlanningParameters {
            products: vec![Product {
                id: "P".into(),
                revenue: 200.0,
                load: 2.0,
                holding_cost: 10.0,
                backorder_cost: 20.0,
                production_cost: 5.0,
                subcontract_cost: 70.0,
                bom: [("C1".to_string(), 1.0), ("C2".to_string(), 2.0)].into(),
            }],
            components: vec![
                Component {
                    id: "C1".into(),
                    holding_cost: 1.0,
                },
                Component {
                    id: "C2".into(),
                    holding_cost: 0.5,
                },
            ],
            suppliers: vec![
                Supplier {
                    id: "s1".into(),
                    anticipation: 4,
                    prices: [("C1".to_string(), 2.0), ("C2".to_string(), 1.0)].into(),
                },
                Supplier {
                    id: "s2".into(),
                    anticipation: 2,
                    prices: [("C1".to_string(), 3.0), ("C2".to_string(), 2.0)].into(),
                },
            ],
            actions: vec![WorkforceAction {
                id: "second-shift".into(),
                overcapacity: 50.0,
                cost: 1500.0,
            }],
            production_lead_time: 1,
            production_anticipation: 0,
            subcontract_lead_time: 2,
            subcontract_anticipation: 2,
            extra_hours_cost: 30.0,
            extra_hours_anticipation: 1,
            extra_hours_max: 20.0,
            action_anticipation: 1,
            nominal_capacity: 100.0,
            inventory_cap: None,
            planning_horizon: 12,
            initial: InitialState::default(),
        }
    }

    pub fn product(&self, id: &str) -> Option<&Product> {
        self.products.iter().find(|p| p.id == id)
    }

    pub fn supplier(&self, id: &str) -> Option<&Supplier> {
        self.suppliers.iter().find(|s| s.id == id)
    }

    /// Anticipation delay of a decision family. Purchases depend on the
    /// supplier, named by `supplier`.
    pub fn anticipation(&self, family: Family, supplier: Option<&str>) -> Period {
        match family {
            Family::X => self.production_anticipation,
            Family::ST => self.subcontract_anticipation,
            Family::HS => self.extra_hours_anticipation,
            Family::B => self.action_anticipation,
            Family::A => supplier
                .and_then(|s| self.supplier(s))
                .map_or(0, |s| s.anticipation),
        }
    }

    /// Steady-state warm start for constant demand `baseline` per product:
    /// production already in flight for the first `LP` periods and enough
    /// components to cover consumption until the most reactive supplier can
    /// deliver something usable.
    pub fn with_warm_start(mut self, baseline: &BTreeMap<String, f64>, tau0: Period) -> Self {
        let mut initial = InitialState::default();
        for p in &self.products {
            let q = baseline.get(&p.id).copied().unwrap_or(0.0);
            for t in tau0 - self.production_lead_time..tau0 {
                initial.pipeline.push(PipelineOrder {
                    family: Family::X,
                    product: p.id.clone(),
                    period: t,
                    quantity: q,
                });
            }
        }
        let cover = self
            .suppliers
            .iter()
            .map(|s| s.anticipation)
            .min()
            .unwrap_or(0)
            + 1;
        for c in &self.components {
            let per_period: f64 = self
                .products
                .iter()
                .map(|p| p.bom.get(&c.id).copied().unwrap_or(0.0) * baseline.get(&p.id).copied().unwrap_or(0.0))
                .sum();
            initial.components.insert(c.id.clone(), per_period * cover as f64);
        }
        self.initial = initial;
        self
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: String| Err(PlannerError::Parameters(m));
        if self.products.is_empty() {
            return bad("at least one product is required".into());
        }
        let mut ids = BTreeSet::new();
        for id in self
            .products
            .iter()
            .map(|p| &p.id)
            .chain(self.components.iter().map(|c| &c.id))
            .chain(self.suppliers.iter().map(|s| &s.id))
            .chain(self.actions.iter().map(|a| &a.id))
        {
            if id.is_empty() || id.contains('/') {
                return bad(format!("identifier '{id}' must be non-empty and contain no '/'"));
            }
            if !ids.insert(id.as_str()) {
                return bad(format!("identifier '{id}' is used twice"));
            }
        }
        let nonneg = |name: &str, v: f64| -> Result<(), PlannerError> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(PlannerError::Parameters(format!("{name} must be finite and non-negative, got {v}")))
            }
        };
        let components: BTreeSet<&str> = self.components.iter().map(|c| c.id.as_str()).collect();
        for p in &self.products {
            for (name, v) in [
                ("revenue", p.revenue),
                ("load", p.load),
                ("holding cost", p.holding_cost),
                ("backorder cost", p.backorder_cost),
                ("production cost", p.production_cost),
                ("subcontract cost", p.subcontract_cost),
            ] {
                nonneg(&format!("{} of {}", name, p.id), v)?;
            }
            for (c, &a) in &p.bom {
                if !components.contains(c.as_str()) {
                    return bad(format!("product {} uses unknown component {c}", p.id));
                }
                nonneg(&format!("bill of materials {}/{c}", p.id), a)?;
            }
        }
        for c in &self.components {
            nonneg(&format!("holding cost of {}", c.id), c.holding_cost)?;
        }
        for s in &self.suppliers {
            if s.anticipation < 0 {
                return bad(format!("anticipation of supplier {} is negative", s.id));
            }
            for (c, &f) in &s.prices {
                if !components.contains(c.as_str()) {
                    return bad(format!("supplier {} prices unknown component {c}", s.id));
                }
                nonneg(&format!("price of {c} at {}", s.id), f)?;
            }
        }
        for a in &self.actions {
            nonneg(&format!("overcapacity of {}", a.id), a.overcapacity)?;
            nonneg(&format!("cost of {}", a.id), a.cost)?;
        }
        nonneg("extra-hours cost", self.extra_hours_cost)?;
        nonneg("extra-hours cap", self.extra_hours_max)?;
        nonneg("nominal capacity", self.nominal_capacity)?;
        if let Some(cap) = self.inventory_cap {
            nonneg("inventory cap", cap)?;
        }
        for (name, d) in [
            ("production lead time", self.production_lead_time),
            ("production anticipation", self.production_anticipation),
            ("subcontract lead time", self.subcontract_lead_time),
            ("subcontract anticipation", self.subcontract_anticipation),
            ("extra-hours anticipation", self.extra_hours_anticipation),
            ("action anticipation", self.action_anticipation),
        ] {
            if d < 0 {
                return bad(format!("{name} is negative"));
            }
        }
        if self.planning_horizon <= self.production_lead_time.max(self.subcontract_lead_time) {
            return bad(format!(
                "planning horizon {} must exceed both lead times",
                self.planning_horizon
            ));
        }
        for (map, what) in [
            (&self.initial.on_hand, "on-hand"),
            (&self.initial.backlog, "backlog"),
        ] {
            for (p, &q) in map {
                if self.product(p).is_none() {
                    return bad(format!("initial {what} names unknown product {p}"));
                }
                nonneg(&format!("initial {what} of {p}"), q)?;
            }
        }
        for (c, &q) in &self.initial.components {
            if !components.contains(c.as_str()) {
                return bad(format!("initial stock names unknown component {c}"));
            }
            nonneg(&format!("initial stock of {c}"), q)?;
        }
        for o in &self.initial.pipeline {
            if !matches!(o.family, Family::X | Family::ST) || self.product(&o.product).is_none() {
                return bad(format!("pipeline order {o:?} must be a production or subcontracting order for a known product"));
            }
            nonneg("pipeline quantity", o.quantity)?;
        }
        Ok(())
    }
}
