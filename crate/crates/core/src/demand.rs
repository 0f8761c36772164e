//! Customer demand: trend-driven flexible intervals, consolidation into firm
//! values, rolling updates between planning steps, and the supplier's
//! reduction of a plan to deterministic demand.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Period;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("period {period} is outside the trend domain [1, {last}]")]
    OutOfDomain { period: Period, last: Period },
    #[error("invalid trend {id}: {reason}")]
    InvalidTrend { id: String, reason: String },
    #[error("invalid customer configuration: {0}")]
    InvalidConfig(String),
}

/// Spread of the flexible interval around the nominal trend value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flexibility {
    /// `nominal · (1 ± ratio)`.
    Ratio(f64),
    /// `nominal ± units`, lower end clamped at zero.
    Additive(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendSpec {
    pub id: String,
    pub product: String,
    /// Units per period outside the peak window.
    pub baseline: f64,
    /// First period of the peak window.
    pub peak_start: Period,
    /// One value per period of the window `[peak_start, peak_start + len)`.
    pub peak_profile: Vec<f64>,
    pub flexibility: Flexibility,
    pub simulation_length: Period,
    /// Periods past `simulation_length` over which the baseline repeats, so
    /// the last planning steps still see a full horizon.
    pub padding: Period,
}

impl TrendSpec {
    pub fn constant(id: &str, product: &str, baseline: f64, flexibility: Flexibility, length: Period, padding: Period) -> Self {
        TrendSpec {
            id: id.into(),
            product: product.into(),
            baseline,
            peak_start: 1,
            peak_profile: Vec::new(),
            flexibility,
            simulation_length: length,
            padding,
        }
    }

    pub fn last_period(&self) -> Period {
        self.simulation_length + self.padding
    }

    pub fn peak_window(&self) -> std::ops::Range<Period> {
        self.peak_start..self.peak_start + self.peak_profile.len() as Period
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        let bad = |reason: &str| {
            Err(DemandError::InvalidTrend {
                id: self.id.clone(),
                reason: reason.into(),
            })
        };
        let spread = match self.flexibility {
            Flexibility::Ratio(r) | Flexibility::Additive(r) => r,
        };
        if !(spread >= 0.0 && spread.is_finite()) {
            return bad("flexibility must be a finite non-negative number");
        }
        if !(self.baseline >= 0.0 && self.baseline.is_finite()) {
            return bad("baseline must be a finite non-negative quantity");
        }
        if self.peak_profile.iter().any(|q| !(*q >= 0.0 && q.is_finite())) {
            return bad("peak profile quantities must be finite and non-negative");
        }
        if self.simulation_length < 1 || self.padding < 0 {
            return bad("simulation length must be positive and padding non-negative");
        }
        let w = self.peak_window();
        if !self.peak_profile.is_empty() && (w.start < 1 || w.end - 1 > self.simulation_length) {
            return bad("peak window must lie within the simulation horizon");
        }
        Ok(())
    }

    /// Trend value at `t`.
    pub fn nominal(&self, t: Period) -> Result<f64, DemandError> {
        if t < 1 || t > self.last_period() {
            return Err(DemandError::OutOfDomain {
                period: t,
                last: self.last_period(),
            });
        }
        Ok(if self.peak_window().contains(&t) {
            self.peak_profile[(t - self.peak_start) as usize]
        } else {
            self.baseline
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexInterval {
    pub lower: f64,
    pub upper: f64,
}

impl FlexInterval {
    pub fn new(lower: f64, upper: f64) -> Self {
        debug_assert!(0.0 <= lower && lower <= upper);
        FlexInterval { lower, upper }
    }

    pub fn contains(&self, q: f64) -> bool {
        self.lower <= q && q <= self.upper
    }
}

/// How the customer turns a flexible interval into a firm order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Consolidation {
    /// Orders the lower bound (the flexible demand was overestimated).
    Min,
    /// Orders the upper bound.
    Max,
}

impl Consolidation {
    pub fn label(self) -> &'static str {
        match self {
            Consolidation::Min => "Min",
            Consolidation::Max => "Max",
        }
    }
}

impl std::str::FromStr for Consolidation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Min" | "min" => Ok(Consolidation::Min),
            "Max" | "max" => Ok(Consolidation::Max),
            other => Err(format!("unknown consolidation '{other}'")),
        }
    }
}

/// How the supplier reads a flexible interval when planning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyMode {
    MaxBound,
    MinBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerConfig {
    pub firm_length: Period,
    pub planning_horizon: Period,
    pub replanning_period: Period,
    pub consolidation: Consolidation,
}

impl CustomerConfig {
    pub fn validate(&self) -> Result<(), DemandError> {
        if !(0 < self.firm_length && self.firm_length < self.planning_horizon) {
            return Err(DemandError::InvalidConfig(format!(
                "firm horizon length {} must lie strictly between 0 and the planning horizon {}",
                self.firm_length, self.planning_horizon
            )));
        }
        if !(0 < self.replanning_period && self.replanning_period <= self.firm_length) {
            return Err(DemandError::InvalidConfig(format!(
                "replanning period {} must lie in (0, {}]",
                self.replanning_period, self.firm_length
            )));
        }
        Ok(())
    }
}

/// Demand communicated at one planning step: firm quantities over
/// `[tau, tau + FH - 1]`, flexible intervals over the rest of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandPlan {
    pub tau: Period,
    pub firm: BTreeMap<Period, f64>,
    pub flexible: BTreeMap<Period, FlexInterval>,
}

impl DemandPlan {
    pub fn horizon(&self) -> impl Iterator<Item = Period> + '_ {
        self.firm.keys().chain(self.flexible.keys()).copied()
    }
}

pub fn flexible_bounds(trend: &TrendSpec, t: Period) -> Result<FlexInterval, DemandError> {
    let nominal = trend.nominal(t)?;
    Ok(match trend.flexibility {
        Flexibility::Ratio(r) => FlexInterval::new(
            (nominal * (1.0 - r)).max(0.0),
            nominal * (1.0 + r),
        ),
        Flexibility::Additive(k) => FlexInterval::new((nominal - k).max(0.0), nominal + k),
    })
}

pub fn consolidate(g: Consolidation, iv: FlexInterval) -> f64 {
    match g {
        Consolidation::Min => iv.lower,
        Consolidation::Max => iv.upper,
    }
}

/// First demand plan: intervals over the whole horizon, then the firm part
/// consolidated.
pub fn init_demand(
    trend: &TrendSpec,
    cfg: &CustomerConfig,
    tau0: Period,
) -> Result<DemandPlan, DemandError> {
    if tau0 < 1 {
        return Err(DemandError::OutOfDomain {
            period: tau0,
            last: trend.last_period(),
        });
    }
    let mut firm = BTreeMap::new();
    let mut flexible = BTreeMap::new();
    for t in tau0..tau0 + cfg.planning_horizon {
        let iv = flexible_bounds(trend, t)?;
        if t < tau0 + cfg.firm_length {
            firm.insert(t, consolidate(cfg.consolidation, iv));
        } else {
            flexible.insert(t, iv);
        }
    }
    Ok(DemandPlan {
        tau: tau0,
        firm,
        flexible,
    })
}

/// Demand plan at `prev.tau + PP`: firm values and flexible intervals carry
/// over unchanged, periods entering the firm horizon are consolidated from
/// their previous interval, and new periods get fresh intervals.
pub fn roll_demand(
    prev: &DemandPlan,
    trend: &TrendSpec,
    cfg: &CustomerConfig,
) -> Result<DemandPlan, DemandError> {
    let tau = prev.tau + cfg.replanning_period;
    let firm_end = tau + cfg.firm_length;
    let mut firm = BTreeMap::new();
    let mut flexible = BTreeMap::new();
    for t in tau..tau + cfg.planning_horizon {
        let in_firm = t < firm_end;
        if let Some(&q) = prev.firm.get(&t) {
            firm.insert(t, q);
            continue;
        }
        let iv = match prev.flexible.get(&t) {
            Some(&iv) => iv,
            None => flexible_bounds(trend, t)?,
        };
        if in_firm {
            firm.insert(t, consolidate(cfg.consolidation, iv));
        } else {
            flexible.insert(t, iv);
        }
    }
    Ok(DemandPlan {
        tau,
        firm,
        flexible,
    })
}

/// Deterministic demand the planner works from: firm values as given,
/// flexible intervals reduced by the supplier's strategy.
pub fn resolve_deterministic(plan: &DemandPlan, mode: StrategyMode) -> BTreeMap<Period, f64> {
    let mut out = plan.firm.clone();
    for (&t, iv) in &plan.flexible {
        out.insert(
            t,
            match mode {
                StrategyMode::MaxBound => iv.upper,
                StrategyMode::MinBound => iv.lower,
            },
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(flex: Flexibility) -> TrendSpec {
        TrendSpec::constant("T", "P", 50.0, flex, 36, 12)
    }

    fn cfg(g: Consolidation) -> CustomerConfig {
        CustomerConfig {
            firm_length: 4,
            planning_horizon: 12,
            replanning_period: 2,
            consolidation: g,
        }
    }

    #[test]
    fn ratio_bounds() {
        let iv = flexible_bounds(&flat(Flexibility::Ratio(0.2)), 7).unwrap();
        assert_eq!(iv, FlexInterval::new(40.0, 60.0));
        let zero = TrendSpec::constant("T", "P", 0.0, Flexibility::Ratio(0.2), 10, 0);
        assert_eq!(flexible_bounds(&zero, 3).unwrap(), FlexInterval::new(0.0, 0.0));
    }

    #[test]
    fn additive_bounds_clamp_at_zero() {
        let t = TrendSpec::constant("T", "P", 5.0, Flexibility::Additive(5.0), 10, 0);
        assert_eq!(flexible_bounds(&t, 1).unwrap(), FlexInterval::new(0.0, 10.0));
        let t = TrendSpec::constant("T", "P", 2.0, Flexibility::Additive(5.0), 10, 0);
        assert_eq!(flexible_bounds(&t, 1).unwrap().lower, 0.0);
    }

    #[test]
    fn domain_errors() {
        let t = flat(Flexibility::Ratio(0.2));
        assert!(flexible_bounds(&t, 0).is_err());
        assert!(flexible_bounds(&t, 48).is_ok());
        assert_eq!(
            flexible_bounds(&t, 49).unwrap_err(),
            DemandError::OutOfDomain { period: 49, last: 48 }
        );
    }

    #[test]
    fn peak_profile_and_padding() {
        let mut t = flat(Flexibility::Ratio(0.0));
        t.peak_start = 20;
        t.peak_profile = vec![70.0; 6];
        assert_eq!(t.nominal(19).unwrap(), 50.0);
        assert_eq!(t.nominal(20).unwrap(), 70.0);
        assert_eq!(t.nominal(25).unwrap(), 70.0);
        assert_eq!(t.nominal(26).unwrap(), 50.0);
        assert_eq!(t.nominal(40).unwrap(), 50.0);
        t.peak_start = 34;
        assert!(t.validate().is_err());
    }

    #[test]
    fn init_min_and_max() {
        let t = flat(Flexibility::Ratio(0.2));
        let p = init_demand(&t, &cfg(Consolidation::Min), 1).unwrap();
        assert_eq!(p.firm.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert!(p.firm.values().all(|&q| q == 40.0));
        assert_eq!(p.flexible.keys().copied().collect::<Vec<_>>(), (5..=12).collect::<Vec<_>>());
        assert!(p.flexible.values().all(|iv| *iv == FlexInterval::new(40.0, 60.0)));
        let p = init_demand(&t, &cfg(Consolidation::Max), 1).unwrap();
        assert!(p.firm.values().all(|&q| q == 60.0));
    }

    // Linear ramp reaching 5 units per period with a ±5 discrepancy; the
    // customer overestimates, so every firm value is the previous lower bound.
    fn ramp() -> TrendSpec {
        TrendSpec {
            id: "ramp".into(),
            product: "P".into(),
            baseline: 5.0,
            peak_start: 1,
            peak_profile: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            flexibility: Flexibility::Additive(5.0),
            simulation_length: 20,
            padding: 12,
        }
    }

    #[test]
    fn ramp_firm_values_are_lower_bounds() {
        let t = ramp();
        let c = cfg(Consolidation::Min);
        let p0 = init_demand(&t, &c, 1).unwrap();
        for (&period, &q) in &p0.firm {
            assert_eq!(q, flexible_bounds(&t, period).unwrap().lower);
        }
        let p1 = roll_demand(&p0, &t, &c).unwrap();
        for period in [5, 6] {
            assert_eq!(p1.firm[&period], p0.flexible[&period].lower);
        }
    }

    #[test]
    fn roll_bookkeeping() {
        let t = flat(Flexibility::Ratio(0.2));
        let c = cfg(Consolidation::Max);
        let p0 = init_demand(&t, &c, 1).unwrap();
        let p1 = roll_demand(&p0, &t, &c).unwrap();
        assert_eq!(p1.tau, 3);
        assert_eq!(p1.firm[&3], p0.firm[&3]);
        assert_eq!(p1.firm[&4], p0.firm[&4]);
        assert_eq!(p1.firm[&5], p0.flexible[&5].upper);
        assert_eq!(p1.firm[&6], p0.flexible[&6].upper);
        for period in 7..=12 {
            assert_eq!(p1.flexible[&period], p0.flexible[&period]);
        }
        assert_eq!(p1.flexible[&13], flexible_bounds(&t, 13).unwrap());
        assert_eq!(p1.flexible[&14], flexible_bounds(&t, 14).unwrap());
        assert_eq!(p1.horizon().count(), 12);
    }

    #[test]
    fn constant_trend_fixed_point() {
        let t = flat(Flexibility::Ratio(0.2));
        let c = cfg(Consolidation::Min);
        let mut p = init_demand(&t, &c, 1).unwrap();
        for _ in 0..15 {
            p = roll_demand(&p, &t, &c).unwrap();
            assert!(p.firm.values().all(|&q| q == 40.0));
        }
    }

    #[test]
    fn deterministic_resolution() {
        let t = flat(Flexibility::Ratio(0.2));
        let p = init_demand(&t, &cfg(Consolidation::Min), 1).unwrap();
        let s1 = resolve_deterministic(&p, StrategyMode::MaxBound);
        assert_eq!(s1[&1], 40.0);
        assert_eq!(s1[&5], 60.0);
        let s2 = resolve_deterministic(&p, StrategyMode::MinBound);
        assert_eq!(s2[&5], 40.0);
        assert_eq!(s1.len(), 12);

        let only_firm = DemandPlan {
            tau: 1,
            firm: (1..=4).map(|t| (t, 10.0 * t as f64)).collect(),
            flexible: BTreeMap::new(),
        };
        assert_eq!(resolve_deterministic(&only_firm, StrategyMode::MaxBound), only_firm.firm);
    }

    #[test]
    fn consolidation_picks_bounds() {
        let iv = FlexInterval::new(40.0, 60.0);
        assert_eq!(consolidate(Consolidation::Min, iv), 40.0);
        assert_eq!(consolidate(Consolidation::Max, iv), 60.0);
        let point = FlexInterval::new(7.5, 7.5);
        assert_eq!(consolidate(Consolidation::Min, point), 7.5);
        assert_eq!(consolidate(Consolidation::Max, point), 7.5);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Consolidation::Min);
        assert!(c.validate().is_ok());
        c.firm_length = 12;
        assert!(c.validate().is_err());
        c.firm_length = 4;
        c.replanning_period = 5;
        assert!(c.validate().is_err());
    }

    fn arb_trend() -> impl Strategy<Value = TrendSpec> {
        (
            0.0..100.0f64,
            1i64..30,
            proptest::collection::vec(0.0..150.0f64, 0..8),
            prop_oneof![
                (0.0..0.5f64).prop_map(Flexibility::Ratio),
                (0.0..20.0f64).prop_map(Flexibility::Additive)
            ],
        )
            .prop_map(|(baseline, start, profile, flexibility)| TrendSpec {
                id: "T".into(),
                product: "P".into(),
                baseline,
                peak_start: start,
                peak_profile: profile,
                flexibility,
                simulation_length: 40,
                padding: 12,
            })
    }

    fn arb_cfg() -> impl Strategy<Value = CustomerConfig> {
        (2i64..12, any::<bool>())
            .prop_flat_map(|(fh, max)| {
                (1..=fh).prop_map(move |pp| CustomerConfig {
                    firm_length: fh,
                    planning_horizon: 12,
                    replanning_period: pp,
                    consolidation: if max { Consolidation::Max } else { Consolidation::Min },
                })
            })
    }

    proptest! {
        #[test]
        fn rolling_respects_immutability_and_containment(trend in arb_trend(), c in arb_cfg()) {
            let mut prev = init_demand(&trend, &c, 1).unwrap();
            while prev.tau + c.replanning_period + c.planning_horizon - 1 <= trend.last_period() {
                let next = roll_demand(&prev, &trend, &c).unwrap();
                for (t, q) in &next.firm {
                    if let Some(old) = prev.firm.get(t) {
                        prop_assert_eq!(old.to_bits(), q.to_bits());
                    } else if let Some(iv) = prev.flexible.get(t) {
                        prop_assert!(iv.contains(*q));
                    }
                }
                for (t, iv) in &next.flexible {
                    if let Some(old) = prev.flexible.get(t) {
                        prop_assert_eq!(old, iv);
                    }
                }
                let firm: Vec<_> = next.firm.keys().copied().collect();
                let flex: Vec<_> = next.flexible.keys().copied().collect();
                prop_assert_eq!(firm, (next.tau..next.tau + c.firm_length).collect::<Vec<_>>());
                prop_assert_eq!(flex, (next.tau + c.firm_length..next.tau + c.planning_horizon).collect::<Vec<_>>());
                for mode in [StrategyMode::MaxBound, StrategyMode::MinBound] {
                    let dhat = resolve_deterministic(&next, mode);
                    for (t, q) in &dhat {
                        match next.firm.get(t) {
                            Some(f) => prop_assert_eq!(f, q),
                            None => prop_assert!(next.flexible[t].contains(*q)),
                        }
                    }
                }
                prev = next;
            }
        }

        #[test]
        fn plans_are_deterministic(trend in arb_trend(), c in arb_cfg(), tau in 1i64..20) {
            let a = init_demand(&trend, &c, tau).unwrap();
            let b = init_demand(&trend, &c, tau).unwrap();
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }
}
