mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::Options;
use skyblock::harness::{
    compare_baselines, run_cs, sweep_label_cost, write_comparison_csv, BaselineAsl, ExperimentPlan, SweepPlan,
};
use skyblock::learner::{learn, Algorithm};
use skyblock::oracle::{load_log, OracleSession};
use skyblock::report::RunReport;
use skyblock_service::{AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "skyblock", version, about = "Learn skylines of blocking schemes under a label budget")]
struct Cli {
    /// TOML file with the same keys as the long flags (snake_case)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one learner against the ground truth and write its report
    Learn {
        #[command(flatten)]
        opts: Options,
    },
    /// Shorthand for `learn` with one of the skyline learners
    Skyline {
        variant: Variant,
        #[command(flatten)]
        opts: Options,
    },
    /// Estimate the confidence score of a learner over repeated seeds
    Cs {
        #[command(flatten)]
        opts: Options,
    },
    /// Find the smallest budget whose confidence score reaches the target
    Sweep {
        #[command(flatten)]
        opts: Options,
    },
    /// Compare fixed preset schemes with a learned skyline
    Compare {
        #[command(flatten)]
        opts: Options,
    },
    /// Start the HTTP label service
    Serve {
        #[command(flatten)]
        opts: Options,
    },
    /// Re-run a learner from a saved label log
    Replay {
        log: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Naive,
    Active,
    Pro,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(p) => Options::load(p)?,
        None => Options::default(),
    };
    match cli.command {
        Command::Learn { opts } => {
            let opts = opts.over(file);
            let algorithm = opts.algorithm()?;
            run_learn(&opts, algorithm)
        }
        Command::Skyline { variant, opts } => {
            let opts = opts.over(file);
            let name = match variant {
                Variant::Naive => "naive_sky",
                Variant::Active => "active_sky",
                Variant::Pro => "pro_sky",
            };
            let algorithm = opts.algorithm_named(name)?;
            run_learn(&opts, algorithm)
        }
        Command::Cs { opts } => run_cs_cmd(&opts.over(file)),
        Command::Sweep { opts } => run_sweep(&opts.over(file)),
        Command::Compare { opts } => run_compare(&opts.over(file)),
        Command::Serve { opts } => run_serve(&opts.over(file)),
        Command::Replay { log, opts } => run_replay(&opts.over(file), log),
    }
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_report(opts: &Options, report: &RunReport) -> Result<()> {
    let mut out = output(opts.out.as_ref())?;
    report.write_json(&mut out)?;
    out.flush()?;
    if let Some(p) = &opts.points_csv {
        report.write_points_csv(File::create(p)?)?;
    }
    eprintln!(
        "{}: {} points, {} labels, {} rounds{}",
        report.algorithm,
        report.points.len(),
        report.labels_used,
        report.rounds,
        if report.aborted { ", aborted" } else { "" }
    );
    for p in &report.points {
        eprintln!("  pc {:.4}  pq {:.4}  {}", p.empirical_pc, p.empirical_pq, p.scheme);
    }
    Ok(())
}

fn run_learn(opts: &Options, algorithm: Algorithm) -> Result<()> {
    let index = opts.load_index()?;
    let truth = opts
        .load_truth(&index)?
        .ok_or_else(|| anyhow!("learn needs --truth; use `serve` to label interactively"))?;
    let (budget, seed) = (opts.budget()?, opts.seed());
    let mut session = OracleSession::ground_truth(truth.clone(), budget);
    let result = learn(&index, &mut session, &algorithm, seed, None)?;
    if let Some(p) = &opts.labels {
        session.write_log(File::create(p)?)?;
    }
    emit_report(opts, &RunReport::new(&index, &result, seed, budget, Some(&truth))?)
}

fn run_replay(opts: &Options, log: PathBuf) -> Result<()> {
    let index = opts.load_index()?;
    let truth = opts.load_truth(&index)?;
    let algorithm = opts.algorithm()?;
    let budget = match opts.budget {
        Some(b) => b,
        None => load_log(&log)?.len(),
    };
    let mut session = OracleSession::replay_with_budget(&log, budget)?;
    let result = learn(&index, &mut session, &algorithm, opts.seed(), None)?;
    emit_report(opts, &RunReport::new(&index, &result, opts.seed(), budget, truth.as_deref())?)
}

fn run_cs_cmd(opts: &Options) -> Result<()> {
    let fx = opts.fixture()?;
    let plan = ExperimentPlan {
        algorithm: opts.algorithm()?,
        budget: opts.budget()?,
        repetitions: opts.repetitions.unwrap_or(10),
        base_seed: opts.seed(),
    };
    let report = run_cs(&fx, &plan)?;
    for g in &report.groups {
        eprintln!("  cs {:.2}  x{}  {}", g.cs, g.count, g.outcome.render(&fx.index));
    }
    eprintln!("max cs {:.2}", report.max_cs());
    let mut out = output(opts.out.as_ref())?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    Ok(())
}

fn run_sweep(opts: &Options) -> Result<()> {
    let fx = opts.fixture()?;
    let mut plan = SweepPlan::new(opts.algorithm()?, opts.repetitions.unwrap_or(10), opts.seed());
    plan.start = opts.start.unwrap_or(plan.start);
    plan.step = opts.step.unwrap_or(plan.step);
    plan.cap = opts.cap.unwrap_or(plan.cap);
    let report = sweep_label_cost(&fx, &plan, opts.target_cs.unwrap_or(0.9))?;
    for s in &report.steps {
        eprintln!("  budget {:>6}  max cs {:.2}  labels {}", s.budget, s.max_cs, s.max_labels_used);
    }
    eprintln!("label cost {}", report.cost);
    let mut out = output(opts.out.as_ref())?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    Ok(())
}

fn run_compare(opts: &Options) -> Result<()> {
    let fx = opts.fixture()?;
    let presets = opts.presets(&fx.index)?;
    if presets.is_empty() {
        return Err(anyhow!("compare needs at least one --preset name=scheme"));
    }
    let algorithm = match &opts.algorithm {
        Some(_) => opts.algorithm()?,
        None => opts.algorithm_named("pro_sky")?,
    };
    let mut session = OracleSession::ground_truth(fx.truth.clone(), opts.budget()?);
    let skyline = learn(&fx.index, &mut session, &algorithm, opts.seed(), None)?;
    let asl = opts.baseline_budget.map(|budget| BaselineAsl {
        budget,
        k: opts.k.unwrap_or(20),
        seed: opts.seed(),
    });
    let rows = compare_baselines(&fx, &skyline, &presets, asl)?;
    write_comparison_csv(&rows, output(opts.out.as_ref())?)?;
    Ok(())
}

fn run_serve(opts: &Options) -> Result<()> {
    let index = opts.load_index()?;
    let truth = opts.load_truth(&index)?;
    let addr = opts.addr.as_deref().unwrap_or("127.0.0.1:8080");
    let addr = addr.parse().with_context(|| format!("bad address `{addr}`"))?;
    if let Some(dir) = &opts.log_dir {
        std::fs::create_dir_all(dir)?;
    }
    let state = AppState::new(ServiceConfig {
        index,
        truth,
        log_dir: opts.log_dir.clone(),
    });
    eprintln!("listening on {addr}");
    tokio::runtime::Runtime::new()?.block_on(skyblock_service::serve(addr, state))?;
    Ok(())
}
