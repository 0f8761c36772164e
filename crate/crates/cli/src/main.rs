//! `coplan`: run experiments, evaluate risk, export plotting data and serve
//! the dashboard API.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coplan::experiment::{
    import_outcomes, run, Actor, ConfigDocument, ExperimentError, ExperimentMeta, ExperimentResult, Origin, Override,
    RunStore,
};
use coplan::risk::{breakpoints, parse_penalties, regret_table, Orientation, RegretTable, RiskDiagram};

#[derive(Parser)]
#[command(name = "coplan", version, about = "Cooperative customer-supplier planning workbench")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of an experiment and store the results.
    Simulate {
        #[arg(long, env = "COPLAN_CONFIG")]
        config: PathBuf,
        /// Override a configuration value, e.g. run.inventory_cap=80.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Store root; results go to <out>/<config-hash>/.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Risk evaluation of a results table or experiment directory.
    Evaluate {
        input: PathBuf,
        #[arg(long)]
        actor: String,
        /// Per-strategy additions to costs, e.g. V2=1000,V3=2000.
        #[arg(long)]
        penalties: Option<String>,
        #[arg(long, default_value = "evaluation")]
        out: PathBuf,
    },
    /// Per-scenario cost breakdowns and backorder series for plotting.
    Report {
        experiment: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Serve the HTTP API over a store root.
    Serve {
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io { .. } | ExperimentError::Pool(_) => runtime(e.to_string()),
            _ => usage(e.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { config, overrides, out } => simulate(&config, &overrides, &out, cli.verbose),
        Command::Evaluate {
            input,
            actor,
            penalties,
            out,
        } => evaluate(&input, &actor, penalties.as_deref(), &out),
        Command::Report { experiment, out } => report(&experiment, &out),
        Command::Serve { root, bind } => serve(root, &bind),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn money(v: f64) -> String {
    format!("{}", v.round() as i64)
}

fn simulate(config: &Path, overrides: &[String], out: &Path, verbose: bool) -> Result<(), Failure> {
    let text = fs::read_to_string(config).map_err(|e| usage(format!("{}: {e}", config.display())))?;
    let overrides: Vec<Override> = overrides.iter().map(|o| o.parse()).collect::<Result<_, _>>()?;
    let doc = ConfigDocument::parse(&text, &overrides).map_err(|e| usage(format!("{}: {e}", config.display())))?;
    let store = RunStore::open(out)?;
    let id = doc.config.hash();
    let mut meta = ExperimentMeta::new(&id, Origin::Simulation);
    meta.config_hash = Some(id.clone());
    store.write_config(&id, &doc)?;
    store.write_meta(&meta)?;
    let progress = |done: usize, total: usize| {
        if verbose {
            eprintln!("[{done}/{total}]");
        }
    };
    let result = run(&doc.config, Some(&progress))?;
    store.write_run(&mut meta, &result)?;

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<8} {:<5} {:<4} {:<4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "strategy", "trend", "g", "vis", "gain", "costs", "production", "inventory", "backorder", "purchasing"
    );
    for r in result.result.rows() {
        let _ = writeln!(
            table,
            "{:<8} {:<5} {:<4} {:<4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            r.strategy,
            r.trend,
            r.consolidation,
            r.visibility,
            money(r.global_gain),
            money(r.global_costs),
            money(r.production_cost),
            money(r.inventory_cost),
            money(r.backorder_cost),
            money(r.purchasing_cost)
        );
    }
    print!("{table}");
    println!("results: {}", store.root().join(&id).display());
    let failures = result.result.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        for (s, e) in &failures {
            eprintln!("{s}: {e}");
        }
        Err(runtime(format!("{} of {} scenarios failed", failures.len(), result.result.scenarios.len())))
    }
}

fn orientation_label(o: Orientation) -> &'static str {
    match o {
        Orientation::GainHigherBetter => "gains, higher is better",
        Orientation::CostLowerBetter => "costs, lower is better",
    }
}

fn num(v: f64) -> String {
    if v.fract() == 0.0 {
        money(v)
    } else {
        format!("{v:.2}")
    }
}

fn summary(actor: Actor, penalties: &BTreeMap<String, f64>, d: &RiskDiagram, t: &RegretTable, scenarios: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "actor: {actor:?} ({})", orientation_label(d.orientation));
    let _ = writeln!(s, "strategies: {}  scenarios: {scenarios}", t.strategies.join(", "));
    let pen: Vec<String> = penalties.iter().map(|(k, v)| format!("{k}={}", num(*v))).collect();
    let _ = writeln!(s, "penalties: {}", if pen.is_empty() { "none".into() } else { pen.join(", ") });
    let _ = writeln!(s, "\nworst / best per strategy:");
    for e in &d.extremes {
        let _ = writeln!(s, "  {:<6} {:>12} {:>12}", e.strategy, num(e.worst), num(e.best));
    }
    let _ = writeln!(s, "\nHurwicz breakpoints:");
    if d.breakpoints.is_empty() {
        let _ = writeln!(s, "  none");
    }
    for b in &d.breakpoints {
        let exact = b.exact.as_deref().map(|x| format!(" ({x})")).unwrap_or_default();
        let _ = writeln!(s, "  alpha = {:.6}{exact}", b.alpha);
    }
    let _ = writeln!(s, "\nrecommended by alpha:");
    for (i, iv) in d.intervals.iter().enumerate() {
        let open = if i == 0 { '[' } else { '(' };
        let _ = writeln!(s, "  {open}{:.4}, {:.4}]  {}", iv.from, iv.to, iv.winners.join(" = "));
    }
    let _ = writeln!(s);
    for (name, c) in [("Laplace", &d.laplace), ("Wald", &d.wald), ("Savage", &d.savage)] {
        let scores: Vec<String> = c.scores.iter().map(|(k, v)| format!("{k} {}", num(*v))).collect();
        let _ = writeln!(s, "{name:<8} {}  ({})", c.winners.join(" = "), scores.join(", "));
    }
    let _ = writeln!(s, "\nregret of using the column strategy against the row reference (min..max):");
    let _ = write!(s, "  {:<6}", "");
    for b in &t.strategies {
        let _ = write!(s, " {b:>18}");
    }
    let _ = writeln!(s);
    for (i, a) in t.strategies.iter().enumerate() {
        let _ = write!(s, "  {a:<6}");
        for c in &t.cells[i] {
            let _ = write!(s, " {:>18}", format!("{}..{}", num(c.min), num(c.max)));
        }
        let _ = writeln!(s);
    }
    s
}

fn evaluate(input: &Path, actor: &str, penalties: Option<&str>, out: &Path) -> Result<(), Failure> {
    let actor: Actor = actor.parse()?;
    let table = if input.is_dir() { input.join("results.csv") } else { input.to_path_buf() };
    let text = fs::read_to_string(&table).map_err(|e| usage(format!("{}: {e}", table.display())))?;
    let penalties = parse_penalties(penalties.unwrap_or("")).map_err(|e| usage(e.to_string()))?;
    let m = import_outcomes(&text, actor, &penalties).map_err(|e| usage(format!("{}: {e}", table.display())))?;
    let d = breakpoints(&m).map_err(|e| usage(e.to_string()))?;
    let t = regret_table(&m);
    let name = match actor {
        Actor::Supplier => "supplier",
        Actor::Customer => "customer",
    };
    let text = summary(actor, &penalties, &d, &t, m.scenarios.len());
    write_file(&out.join(format!("{name}-diagram.json")), &(serde_json::to_string_pretty(&d).expect("serializes") + "\n"))?;
    write_file(&out.join(format!("{name}-regret.json")), &(serde_json::to_string_pretty(&t).expect("serializes") + "\n"))?;
    write_file(&out.join(format!("{name}-summary.txt")), &text)?;
    print!("{text}");
    Ok(())
}

fn report(experiment: &Path, out: &Path) -> Result<(), Failure> {
    let path = experiment.join("results.json");
    let text = fs::read_to_string(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let result: ExperimentResult = serde_json::from_str(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    if result.scenarios.is_empty() {
        return Err(runtime("experiment has no scenarios"));
    }
    let mut costs = String::from(
        "scenario,global_gain,global_costs,revenue,production_cost,internal_production_cost,subcontracting_cost,\
         extra_hours_cost,workforce_cost,inventory_cost,finished_holding_cost,component_holding_cost,backorder_cost,purchasing_cost\n",
    );
    let mut missing = Vec::new();
    for s in &result.scenarios {
        let Some(i) = &s.indicators else {
            missing.push(format!("{} ({})", s.id, s.error.as_deref().unwrap_or("no indicators")));
            continue;
        };
        let cols = [
            i.global_gain,
            i.global_costs,
            i.revenue,
            i.production_cost,
            i.internal_production_cost,
            i.subcontracting_cost,
            i.extra_hours_cost,
            i.workforce_cost,
            i.inventory_cost,
            i.finished_holding_cost,
            i.component_holding_cost,
            i.backorder_cost,
            i.purchasing_cost,
        ];
        let _ = writeln!(costs, "{},{}", s.id, cols.map(|v| format!("{v}")).join(","));
        if s.backorders.is_empty() {
            missing.push(format!("{} (empty series)", s.id));
            continue;
        }
        let inventory: BTreeMap<i64, f64> = s.inventory.iter().copied().collect();
        let mut series = String::from("period,backorders,inventory\n");
        for (t, b) in &s.backorders {
            let _ = writeln!(series, "{t},{b},{}", inventory.get(t).copied().unwrap_or(0.0));
        }
        write_file(&out.join("series").join(format!("{}.csv", s.id)), &series)?;
    }
    write_file(&out.join("costs.csv"), &costs)?;
    if missing.is_empty() {
        println!("report: {}", out.display());
        Ok(())
    } else {
        Err(runtime(format!("missing series: {}", missing.join(", "))))
    }
}

fn serve(root: PathBuf, bind: &str) -> Result<(), Failure> {
    if !root.is_dir() {
        return Err(usage(format!("{}: not a directory", root.display())));
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| runtime(e.to_string()))?;
    eprintln!("serving {} on {bind}", root.display());
    rt.block_on(coplan_service::serve(root, bind)).map_err(|e| runtime(e.to_string()))
}
