//! Instance generators shared by the integration tests.
#![allow(dead_code)]

use coplan::solver::{LinearProgram, MixedIntegerProgram, Relation, Sense};
use rand::Rng;

/// A small lot-sizing model with the planner's structure: production, extra
/// hours, an optional binary capacity action per period, inventory and
/// backorders, and one purchased component with a stock balance.
pub fn planner_shaped_mip<R: Rng>(rng: &mut R, periods: usize, binaries: usize) -> MixedIntegerProgram {
    assert!(binaries <= periods);
    let mut lp = LinearProgram::new(Sense::Maximize);
    let inf = f64::INFINITY;
    let cap = rng.random_range(20..60) as f64;
    let hsm = rng.random_range(0..15) as f64;
    let sc = rng.random_range(5..30) as f64;
    let price = rng.random_range(5..15) as f64;
    let backorder = rng.random_range(2..10) as f64;
    let final_penalty = rng.random_range(0..20) as f64;
    let j0 = rng.random_range(0..40) as f64;
    let mut prev: Option<(usize, usize, usize)> = None;
    for t in 0..periods {
        let demand = rng.random_range(10..90) as f64;
        let x = lp.add_variable(format!("X_{t}"), -(rng.random_range(1..4) as f64), 0.0, inf);
        let hs = lp.add_variable(format!("HS_{t}"), -(rng.random_range(2..6) as f64), 0.0, hsm);
        let ip = lp.add_variable(format!("Ip_{t}"), -(rng.random_range(1..3) as f64), 0.0, inf);
        let last = t + 1 == periods;
        let im_cost = backorder + if last { final_penalty } else { 0.0 };
        let im = lp.add_variable(format!("Im_{t}"), -im_cost, 0.0, inf);
        let a = lp.add_variable(format!("A_{t}"), -price, 0.0, inf);
        let j = lp.add_variable(format!("J_{t}"), -1.0, 0.0, inf);
        let b = (t < binaries).then(|| lp.add_variable(format!("B_{t}"), -(rng.random_range(20..200) as f64), 0.0, 1.0));

        let mut bal = vec![(ip, 1.0), (im, -1.0), (x, -1.0)];
        let mut comp = vec![(j, 1.0), (x, 1.0), (a, -1.0)];
        let mut avail = vec![(x, 1.0)];
        let mut avail_rhs = 0.0;
        match prev {
            Some((pip, pim, pj)) => {
                bal.extend([(pip, -1.0), (pim, 1.0)]);
                comp.push((pj, -1.0));
                avail.push((pj, -1.0));
            }
            None => avail_rhs = j0,
        }
        lp.add_constraint(format!("bal_{t}"), bal, Relation::Eq, -demand);
        lp.add_constraint(format!("comp_{t}"), comp, Relation::Eq, if prev.is_none() { j0 } else { 0.0 });
        lp.add_constraint(format!("avail_{t}"), avail, Relation::Le, avail_rhs);
        let mut capacity = vec![(x, 1.0), (hs, -1.0)];
        if let Some(b) = b {
            capacity.push((b, -sc));
        }
        lp.add_constraint(format!("cap_{t}"), capacity, Relation::Le, cap);
        prev = Some((ip, im, j));
    }
    let binaries = lp
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.name.starts_with("B_"))
        .map(|(i, _)| i)
        .collect();
    MixedIntegerProgram::new(lp, binaries)
}

use coplan::demand::{Flexibility, TrendSpec};
use coplan::planner::PlanningParameters;
use coplan::simulator::SimulationSetup;
use coplan::solver::SolverLimits;

/// Baseline 50 with a six-period plateau starting at period 20.
pub fn plateau_trend(id: &str, peak: f64) -> TrendSpec {
    TrendSpec {
        id: id.into(),
        product: "P".into(),
        baseline: 50.0,
        peak_start: 20,
        peak_profile: vec![peak; 6],
        flexibility: Flexibility::Ratio(0.2),
        simulation_length: 36,
        padding: 12,
    }
}

pub fn reference_setup() -> SimulationSetup {
    SimulationSetup {
        params: PlanningParameters::reference(),
        trends: vec![plateau_trend("T1", 70.0), plateau_trend("T2", 55.0)],
        replanning_period: 2,
        first_step: 1,
        warm_start: true,
        limits: SolverLimits::default(),
    }
}
