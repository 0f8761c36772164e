//! Acceptance criteria, one test each. Every test writes a single
//! `PASS`/`FAIL` line straight to stderr so the verdicts show up even when
//! the harness captures output.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use coplan::experiment::{import_outcomes, run, Actor, ConfigDocument, ExperimentRun, Override};
use coplan::risk::{breakpoints, laplace, parse_penalties, regret_table, savage, wald, OutcomeMatrix, RiskDiagram};
use coplan::solver::{enumerate_oracle, solve_lp, solve_mip, SolverLimits, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn report(name: &str, verdict: Verdict) {
    let line = match &verdict {
        Ok(detail) => format!("PASS {name}: {detail}\n"),
        Err(detail) => format!("FAIL {name}: {detail}\n"),
    };
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(detail) = verdict {
        panic!("{name}: {detail}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn near(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{what} = {got}, expected {want} ± {tol}"))
}

fn repo_file(rel: &str) -> String {
    std::fs::read_to_string(format!("{}/../../{rel}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn outcomes(table: &str, actor: Actor) -> OutcomeMatrix {
    import_outcomes(&repo_file(&format!("fixtures/{table}")), actor, &BTreeMap::new()).unwrap()
}

fn winners(d: &RiskDiagram) -> Vec<String> {
    d.intervals.iter().map(|i| i.winners.join("+")).collect()
}

fn extremes(d: &RiskDiagram, want: [(&str, f64, f64); 2]) -> Result<(), String> {
    for (label, worst, best) in want {
        let e = d.extremes.iter().find(|e| e.strategy == label).ok_or_else(|| format!("no {label}"))?;
        ensure((e.worst, e.best) == (worst, best), || format!("{label} extrema ({}, {})", e.worst, e.best))?;
    }
    Ok(())
}

fn regret_cell(m: &OutcomeMatrix, a: &str, b: &str, want: (f64, f64)) -> Result<(), String> {
    let c = regret_table(m).cell(a, b).ok_or_else(|| format!("no cell /{a},{b}"))?;
    ensure((c.min, c.max) == want, || format!("/{a},{b} = ({}, {}), expected {want:?}", c.min, c.max))
}

#[test]
fn supplier_hurwicz_breakpoint() {
    let check = || -> Verdict {
        let started = Instant::now();
        let m = outcomes("table4.csv", Actor::Supplier);
        let d = breakpoints(&m).map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();
        extremes(&d, [("S1", 235470.0, 478610.0), ("S2", 264853.0, 473611.0)])?;
        ensure(d.breakpoints.len() == 1, || format!("{} breakpoints", d.breakpoints.len()))?;
        near(d.breakpoints[0].alpha, 0.855, 1e-3, "alpha")?;
        ensure(winners(&d) == ["S2", "S1"], || format!("intervals {:?}", winners(&d)))?;
        ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
        Ok(format!("alpha {:.6}, S2 then S1, {elapsed:?}", d.breakpoints[0].alpha))
    };
    report("supplier breakpoint on the first run", check());
}

#[test]
fn supplier_regret_cells() {
    let check = || -> Verdict {
        let m = outcomes("table4.csv", Actor::Supplier);
        regret_cell(&m, "S1", "S2", (-46597.0, 73034.0))?;
        regret_cell(&m, "S2", "S1", (-73034.0, 46597.0))?;
        Ok("/S1,S2 = (-46597, 73034) and its mirror".into())
    };
    report("supplier regret table", check());
}

#[test]
fn supplier_classic_criteria() {
    let check = || -> Verdict {
        let m = outcomes("table4.csv", Actor::Supplier);
        let sv = savage(&m);
        ensure(sv.score("S1") == Some(46597.0) && sv.score("S2") == Some(73034.0), || format!("{:?}", sv.scores))?;
        ensure(sv.winners == ["S1"], || format!("savage {:?}", sv.winners))?;
        let w = wald(&m);
        ensure(w.winners == ["S2"], || format!("wald {:?}", w.winners))?;
        let l = laplace(&m);
        ensure(l.winners == ["S1"], || format!("laplace {:?}", l.winners))?;
        Ok("savage S1 (46597 vs 73034), wald S2, laplace S1".into())
    };
    report("supplier savage, wald and laplace", check());
}

#[test]
fn customer_first_run() {
    let check = || -> Verdict {
        let m = outcomes("table4.csv", Actor::Customer);
        let d = breakpoints(&m).map_err(|e| e.to_string())?;
        ensure(d.breakpoints.len() == 1, || format!("{} breakpoints", d.breakpoints.len()))?;
        near(d.breakpoints[0].alpha, 0.9935, 1e-3, "alpha")?;
        ensure(winners(&d) == ["V4", "V1"], || format!("intervals {:?}", winners(&d)))?;
        regret_cell(&m, "V1", "V2", (-44240.0, 300.0))?;
        regret_cell(&m, "V1", "V4", (-76100.0, 900.0))?;
        Ok(format!("alpha {:.6}, V4 then V1, regret cells match", d.breakpoints[0].alpha))
    };
    report("customer breakpoint and regret on the first run", check());
}

#[test]
fn customer_penalized_regret() {
    let check = || -> Verdict {
        let m = outcomes("table9.csv", Actor::Customer);
        regret_cell(&m, "V1", "V2", (-43240.0, 1300.0))?;
        regret_cell(&m, "V1", "V4", (-63760.0, 5900.0))?;
        Ok("/V1,V2 = (-43240, 1300), /V1,V4 = (-63760, 5900)".into())
    };
    report("customer regret on the penalized run", check());
}

#[test]
fn supplier_second_run() {
    let check = || -> Verdict {
        let d = breakpoints(&outcomes("table9.csv", Actor::Supplier)).map_err(|e| e.to_string())?;
        extremes(&d, [("S1", 236485.0, 467933.0), ("S2", 264853.0, 467861.0)])?;
        ensure(d.breakpoints.len() == 1, || format!("{} breakpoints", d.breakpoints.len()))?;
        near(d.breakpoints[0].alpha, 0.9975, 1e-3, "alpha")?;
        Ok(format!("alpha {:.6}", d.breakpoints[0].alpha))
    };
    report("supplier breakpoint on the penalized run", check());
}

#[test]
fn customer_second_run_intervals() {
    let check = || -> Verdict {
        let d = breakpoints(&outcomes("table9.csv", Actor::Customer)).map_err(|e| e.to_string())?;
        ensure(winners(&d) == ["V4", "V3", "V2", "V1"], || format!("intervals {:?}", winners(&d)))?;
        let first = &d.intervals[0];
        ensure(first.from == 0.0, || format!("first interval starts at {}", first.from))?;
        near(first.to, 0.123, 2e-3, "V4 upper end")?;
        near(d.intervals[1].to, 0.944, 2e-3, "V3 upper end")?;
        ensure(d.intervals.last().unwrap().to == 1.0, || "last interval does not reach 1".into())?;
        let ends: Vec<String> = d.intervals.iter().map(|i| format!("{:.4}", i.to)).collect();
        Ok(format!("V4, V3, V2, V1 up to {}", ends.join(", ")))
    };
    report("customer intervals on the penalized run", check());
}

#[test]
fn penalties_reproduce_backorder_cells() {
    // The published second run was re-simulated, so only T1/Min/S1 is
    // expected to equal first-run backorders plus penalties.
    let check = || -> Verdict {
        let p = parse_penalties("V2=1000,V3=2000,V4=5000").map_err(|e| e.to_string())?;
        let m = import_outcomes(&repo_file("fixtures/table4.csv"), Actor::Customer, &p).map_err(|e| e.to_string())?;
        let s9 = outcomes("table9.csv", Actor::Customer);
        for v in ["V1", "V2", "V3", "V4"] {
            let got = m.value(v, "T1/Min/S1");
            let want = s9.value(v, "T1/Min/S1");
            ensure(got == want, || format!("{v} T1/Min/S1 {got:?} vs {want:?}"))?;
        }
        Ok("T1/Min/S1 column matches after penalties".into())
    };
    report("penalty re-aggregation", check());
}

#[test]
fn cost_column_identity() {
    let check = || -> Verdict {
        let text = repo_file("fixtures/table4.csv");
        let rows = coplan::experiment::parse_results_csv(&text).map_err(|e| e.to_string())?;
        for r in &rows {
            let sum = r.production_cost + r.inventory_cost + r.backorder_cost + r.purchasing_cost;
            ensure((sum - r.global_costs).abs() < 0.5, || format!("{}: {sum} vs {}", r.scenario_id(), r.global_costs))?;
        }
        Ok(format!("{} rows, e.g. 27580 + 48303 + 0 + 7917 = 83800", rows.len()))
    };
    report("cost column identity", check());
}

#[test]
fn solver_matches_enumeration() {
    let check = || -> Verdict {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0001);
        let mut optimal = 0;
        for case in 0..100 {
            let periods = rng.random_range(2..=6);
            let binaries = rng.random_range(0..=periods);
            let mip = common::planner_shaped_mip(&mut rng, periods, binaries);
            let bb = solve_mip(&mip, &SolverLimits::default()).map_err(|e| format!("case {case}: {e}"))?;
            let oracle = enumerate_oracle(&mip).map_err(|e| format!("case {case}: {e}"))?;
            ensure(bb.status == oracle.status, || format!("case {case}: {:?} vs {:?}", bb.status, oracle.status))?;
            if bb.status != Status::Optimal {
                continue;
            }
            optimal += 1;
            let scale = oracle.objective.abs().max(1.0);
            ensure((bb.objective - oracle.objective).abs() <= 1e-6 * scale, || {
                format!("case {case}: {} vs {}", bb.objective, oracle.objective)
            })?;
            let viol = mip.lp.max_violation(&bb.values);
            ensure(viol <= 1e-7, || format!("case {case}: MIP violation {viol}"))?;
            let relaxed = solve_lp(&mip.lp).map_err(|e| format!("case {case}: {e}"))?;
            if relaxed.status == Status::Optimal {
                let viol = mip.lp.max_violation(&relaxed.values);
                ensure(viol <= 1e-7, || format!("case {case}: LP violation {viol}"))?;
            }
        }
        let elapsed = started.elapsed();
        ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
        Ok(format!("100 instances ({optimal} optimal) agree, {elapsed:?}"))
    };
    report("solver against enumeration", check());
}

struct Simulated {
    run: ExperimentRun,
    elapsed: Duration,
}

fn simulate(overrides: &[&str]) -> Simulated {
    let overrides: Vec<Override> = overrides.iter().map(|s| s.parse().unwrap()).collect();
    let doc = ConfigDocument::parse(&repo_file("configs/reference.toml"), &overrides).unwrap();
    let started = Instant::now();
    let run = run(&doc.config, None).unwrap();
    Simulated { run, elapsed: started.elapsed() }
}

fn uncapped() -> &'static Simulated {
    static CELL: OnceLock<Simulated> = OnceLock::new();
    CELL.get_or_init(|| simulate(&[]))
}

fn capped() -> &'static Simulated {
    static CELL: OnceLock<Simulated> = OnceLock::new();
    CELL.get_or_init(|| simulate(&["run.inventory_cap=80"]))
}

#[test]
fn simulator_invariants_on_shipped_config() {
    let check = || -> Verdict {
        let sim = uncapped();
        let scenarios = &sim.run.result.scenarios;
        ensure(scenarios.len() == 32, || format!("{} scenarios", scenarios.len()))?;
        let failures = sim.run.result.failures();
        ensure(failures.is_empty(), || format!("failed: {failures:?}"))?;
        for s in scenarios {
            ensure(s.audit.is_empty(), || format!("{}: {}", s.id, s.audit.join("; ")))?;
        }
        ensure(sim.elapsed < Duration::from_secs(600), || format!("took {:?}", sim.elapsed))?;
        Ok(format!("32 scenarios, all audits clean, {:?}", sim.elapsed))
    };
    report("simulator invariants", check());
}

#[test]
fn inventory_cap_is_respected() {
    let check = || -> Verdict {
        let (base, cap) = (uncapped(), capped());
        let failures = cap.run.result.failures();
        ensure(failures.is_empty(), || format!("failed: {failures:?}"))?;
        let peak = cap
            .run
            .result
            .scenarios
            .iter()
            .flat_map(|s| s.inventory.iter().map(|&(_, v)| v))
            .fold(0.0, f64::max);
        ensure(peak <= 80.0 + 1e-6, || format!("max finished inventory {peak}"))?;
        let max_cost = |r: &ExperimentRun| r.result.rows().iter().map(|r| r.inventory_cost).fold(0.0, f64::max);
        let (with, without) = (max_cost(&cap.run), max_cost(&base.run));
        ensure(with <= without + 1e-6, || format!("max inventory cost {with} above uncapped {without}"))?;
        Ok(format!("max inventory {peak}, max inventory cost {with} <= {without}"))
    };
    report("inventory cap 80", check());
}
