//! `taskprio`: demo generation, training, synthesis and experiment suites.
//!
//! Exit codes: 0 success, 1 acceptance failure, 2 configuration or input
//! error, 3 numerical failure during a run.

mod config;
mod plots;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use taskprio::io::{read_demos, write_demos, write_table};
use taskprio::priority::{project_demo, PriorityModel};
use taskprio::sim::experiments::{
    self, bimanual_hierarchies, closed_loop, closed_loop_table, CriterionResult, SuiteReport, Table,
};
use taskprio::sim::{time_grid, Side};
use taskprio::tpgmm::TpGmm;
use taskprio::Execution;

use config::{ConfigError, ExperimentConfig, Kind};

#[derive(Parser, Debug)]
#[command(name = "taskprio", version, about = "Learn task priorities and governing spaces from demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON). Defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Demonstrated hierarchy for priority demos and `exp priority`.
    #[arg(long, global = true, value_enum)]
    side: Option<SideArg>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate demonstrations and write demos.csv.
    Demo {
        #[arg(long, value_enum)]
        kind: Option<Kind>,
    },
    /// Fit a model to demos.csv and write model.json and training_log.csv.
    Train {
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        /// Demonstration CSV; defaults to OUT/demos.csv.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Run a trained model and write its trajectories.
    Synth {
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        /// Model JSON; defaults to OUT/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run an experiment suite and write CSVs, SVG plots and verdict.json.
    Exp {
        #[arg(value_enum)]
        suite: Suite,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Left => Side::Left,
            SideArg::Right => Side::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Transitions,
    Feasible,
    Priority,
    Transfer,
    Spaces,
}

/// Why a command stopped; carries the process exit code.
#[derive(Debug)]
enum Failure {
    Acceptance(String),
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Acceptance(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<taskprio::Error> for Failure {
    fn from(e: taskprio::Error) -> Self {
        match e {
            taskprio::Error::IllConditionedProduct(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("i/o: {e}"))
    }
}

type Outcome = Result<(), Failure>;

struct Context {
    cfg: ExperimentConfig,
    out: PathBuf,
    /// `None` when neither the flag nor the config picks a side.
    side: Option<Side>,
    jobs: usize,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Outcome {
        fs::write(self.path(name), bytes).map_err(|e| Failure::Config(format!("cannot write {name}: {e}")))
    }

    fn write_table(&self, file: &str, table: &Table) -> Outcome {
        let mut buf = Vec::new();
        write_table(&mut buf, &table.columns, &table.rows)?;
        self.write(file, &buf)
    }
}

fn setup(cli: &Cli) -> Result<Context, Failure> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed.or(cfg.seed) {
        cfg.apply_seed(seed);
    }
    // Each run is single-threaded; `--jobs` spreads independent runs.
    cfg.priority.exec = Execution::Sequential;
    cfg.spaces.exec = Execution::Sequential;
    cfg.validate()?;
    if cli.jobs == 0 {
        return Err(Failure::Config("--jobs: must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    if cli.jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| Failure::Config(format!("--jobs: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    if cli.jobs > 1 {
        eprintln!("note: built without the `parallel` feature; --jobs is ignored");
    }
    let out = cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;
    let side = cli.side.map(Side::from).or(cfg.side);
    Ok(Context {
        cfg,
        out,
        side,
        jobs: cli.jobs,
    })
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Left => "left",
        Side::Right => "right",
    }
}

fn cmd_demo(ctx: &Context, kind: Kind) -> Outcome {
    let side = ctx.side.unwrap_or(Side::Left);
    let demos = match kind {
        Kind::Priority => {
            let (_, demos, warnings) = experiments::priority_demos(&ctx.cfg.priority, side)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let proj = project_demo(&demos, &bimanual_hierarchies(), ctx.cfg.priority.damping, Execution::Sequential)?;
            println!("{} priority demo(s), {} hierarchy", demos.len(), side_name(side));
            for (h, data) in bimanual_hierarchies().iter().zip(&proj.datasets) {
                let v: Vec<String> = (1..data.ncols()).map(|c| format!("{:.3e}", variance(data, c))).collect();
                println!("  projected variance under {}: [{}]", h.label, v.join(", "));
            }
            demos
        }
        Kind::Spaces => {
            let d = experiments::spaces_demos(&ctx.cfg.spaces)?;
            println!("{} spaces demo(s)", d.demos.len());
            d.demos
        }
    };
    let steps: usize = demos.iter().map(|d| d.len()).sum();
    let mut buf = Vec::new();
    write_demos(&mut buf, &demos)?;
    ctx.write("demos.csv", &buf)?;
    println!("  {steps} steps written to {}", ctx.path("demos.csv").display());
    Ok(())
}

fn variance(data: &nalgebra::DMatrix<f64>, c: usize) -> f64 {
    let col = data.column(c);
    let m = col.mean();
    col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64
}

fn cmd_train(ctx: &Context, kind: Kind, demos: Option<&Path>) -> Outcome {
    let path = demos.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("demos.csv"));
    let file = fs::File::open(&path).map_err(|e| Failure::Config(format!("cannot open {}: {e}", path.display())))?;
    let demos = read_demos(file)?;
    let (json, report) = match kind {
        Kind::Priority => {
            let (model, report) = experiments::fit_priority(&ctx.cfg.priority, &demos)?;
            (model.to_json()?, report)
        }
        Kind::Spaces => {
            let (model, report) = experiments::fit_spaces(&ctx.cfg.spaces, &demos)?;
            (model.to_json()?, report)
        }
    };
    ctx.write("model.json", json.as_bytes())?;
    let log = Table {
        name: "training_log".into(),
        columns: vec!["iteration".into(), "objective".into(), "log_likelihood".into()],
        rows: report
            .objective
            .iter()
            .zip(&report.log_likelihood)
            .enumerate()
            .map(|(i, (o, l))| vec![i as f64, *o, *l])
            .collect(),
    };
    ctx.write_table("training_log.csv", &log)?;
    let monotone = report.objective.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
    println!(
        "trained on {} demo(s): {} EM iteration(s), converged: {}, objective monotone: {monotone}",
        demos.len(),
        report.iterations,
        report.converged
    );
    if let Some(ll) = report.log_likelihood.last() {
        println!("  final log-likelihood {ll:.6e}");
    }
    Ok(())
}

fn cmd_synth(ctx: &Context, kind: Kind, model: Option<&Path>) -> Outcome {
    let path = model.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("model.json"));
    let text =
        fs::read_to_string(&path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    match kind {
        Kind::Priority => {
            let model = PriorityModel::from_json(&text)?;
            let cfg = &ctx.cfg.priority;
            for (name, outward) in [("conflict", cfg.excursion), ("feasible", -cfg.feasible_shift)] {
                let run = closed_loop(&model, &cfg.robot, outward, cfg)?;
                let table = closed_loop_table(&format!("synth_{name}"), &run);
                ctx.write_table(&format!("synth_{name}.csv"), &table)?;
                ctx.write(&format!("synth_{name}.svg"), plots::closed_loop(&table).as_bytes())?;
                println!(
                    "{name} ({}): final errors left {:.3e}, right {:.3e}; right target reachable: {}",
                    cfg.robot, run.errors[0], run.errors[1], run.reachable
                );
            }
        }
        Kind::Spaces => {
            let model = TpGmm::from_json(&text)?;
            let cfg = &ctx.cfg.spaces;
            let chain = taskprio::sim::preset(&cfg.robot)?.chain;
            let (object, q0) = experiments::held_out_object(cfg)?;
            let times = time_grid(cfg.demos.dt, cfg.demos.horizon);
            let run = experiments::reproduce_spaces(&model, &chain, &q0, &object, &times, cfg.damping)?;
            let table = experiments::reproduction_table(&run);
            ctx.write_table("reproduction.csv", &table)?;
            for (name, svg) in plots::reproduction(&table) {
                ctx.write(&name, svg.as_bytes())?;
            }
            println!("reproduced {} steps for object {:?}", times.len(), object.to_vector().as_slice());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SuiteVerdict<'a> {
    suite: &'a str,
    passed: bool,
    criteria: &'a [CriterionResult],
    warnings: &'a [String],
}

#[derive(Serialize)]
struct Verdict<'a> {
    experiment: &'a str,
    passed: bool,
    suites: Vec<SuiteVerdict<'a>>,
}

type Run = Box<dyn Fn() -> taskprio::Result<SuiteReport> + Send + Sync>;

fn cmd_exp(ctx: &Context, suite: Suite) -> Outcome {
    let pc = ctx.cfg.priority.clone();
    let tc = ctx.cfg.transitions.clone();
    let sc = ctx.cfg.spaces.clone();
    let runs: Vec<Run> = match suite {
        Suite::Transitions => vec![Box::new(move || experiments::transitions_suite(&tc))],
        Suite::Feasible => vec![Box::new(move || experiments::feasible_suite(&tc))],
        Suite::Priority => {
            let sides = match ctx.side {
                Some(s) => vec![s],
                None => vec![Side::Left, Side::Right],
            };
            let mut runs: Vec<Run> = sides
                .into_iter()
                .map(|s| {
                    let pc = pc.clone();
                    Box::new(move || experiments::priority_suite(&pc, s)) as Run
                })
                .collect();
            runs.push(Box::new(move || experiments::synthesis_suite(&pc)));
            runs
        }
        Suite::Transfer => vec![Box::new(move || experiments::transfer_suite(&pc))],
        Suite::Spaces => vec![Box::new(move || experiments::spaces_suite(&sc))],
    };
    let exec = if ctx.jobs > 1 { Execution::Parallel } else { Execution::Sequential };
    let reports = taskprio::par::map_slice(&runs, exec, |run| run())
        .into_iter()
        .collect::<taskprio::Result<Vec<_>>>()?;

    for r in &reports {
        for table in &r.tables {
            let stem = format!("{}_{}", r.suite, table.name);
            ctx.write_table(&format!("{stem}.csv"), table)?;
        }
        for (name, svg) in plots::for_report(r) {
            ctx.write(&name, svg.as_bytes())?;
        }
    }
    let name = format!("{suite:?}").to_lowercase();
    let verdict = Verdict {
        experiment: &name,
        passed: reports.iter().all(SuiteReport::passed),
        suites: reports
            .iter()
            .map(|r| SuiteVerdict {
                suite: &r.suite,
                passed: r.passed(),
                criteria: &r.criteria,
                warnings: &r.warnings,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&verdict).map_err(|e| Failure::Numerical(e.to_string()))?;
    ctx.write("verdict.json", format!("{json}\n").as_bytes())?;
    for r in &reports {
        for c in &r.criteria {
            println!(
                "{} {}: {}: {:.3e} {} {:.0e}",
                if c.passed { "PASS" } else { "FAIL" },
                r.suite,
                c.name,
                c.value,
                c.relation,
                c.threshold
            );
        }
        for w in &r.warnings {
            println!("warning {}: {w}", r.suite);
        }
    }
    if verdict.passed {
        Ok(())
    } else {
        let failed = reports.iter().flat_map(|r| &r.criteria).filter(|c| !c.passed).count();
        Err(Failure::Acceptance(format!("{failed} criterion(s) failed; see verdict.json")))
    }
}

fn run(cli: &Cli) -> Outcome {
    let ctx = setup(cli)?;
    let kind = |k: &Option<Kind>| k.unwrap_or(ctx.cfg.kind);
    match &cli.command {
        Command::Demo { kind: k } => cmd_demo(&ctx, kind(k)),
        Command::Train { kind: k, demos } => cmd_train(&ctx, kind(k), demos.as_deref()),
        Command::Synth { kind: k, model } => cmd_synth(&ctx, kind(k), model.as_deref()),
        Command::Exp { suite } => cmd_exp(&ctx, *suite),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (label, msg) = match &f {
                Failure::Acceptance(m) => ("acceptance failure", m),
                Failure::Config(m) => ("error", m),
                Failure::Numerical(m) => ("numerical error", m),
            };
            eprintln!("{label}: {msg}");
            ExitCode::from(f.code())
        }
    }
}
