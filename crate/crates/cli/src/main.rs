//! Command-line front end: single runs, replicated experiments and
//! scheduler comparisons.
//!
//! Exit status is 0 on success, 1 for configuration errors and 2 when a
//! run fails.

use std::path::PathBuf;
use std::process::ExitCode;

use aabc::harness::{
    compare_schedulers, format_report, parse_policy, run_experiment, ComparisonReport, Experiment,
    ExperimentConfig, PolicyRow,
};
use aabc::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "aabc", version, about = "ABC population Monte Carlo with adaptive tolerance schedules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One run with the configured seed.
    Run(Flags),
    /// Independent runs with seeds seed, seed+1, ...; reports the median run.
    Replicate(Flags),
    /// Replicated runs of several policies on the same seeds.
    Compare(Flags),
}

#[derive(Args, Debug)]
struct Flags {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Policy shorthand, e.g. adaptive, fixed-quantile:0.5, ess:0.5,
    /// tar:20:20, fixed-sequence[:e1,e2,...]. Repeat for compare.
    #[arg(long)]
    policy: Vec<String>,
    /// Particle count N.
    #[arg(long)]
    n: Option<usize>,
    /// Prior oversampling factor k.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long = "max-iter")]
    max_iter: Option<u32>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on total simulated draws per run.
    #[arg(long)]
    budget: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn build_config(flags: &Flags, command: &Command) -> Result<ExperimentConfig, Failure> {
    let mut c = match &flags.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &flags.model {
        c.model = m.clone();
    }
    let policies = flags.policy.iter().map(|p| parse_policy(p)).collect::<Result<Vec<_>, _>>()?;
    match command {
        Command::Compare(_) => {
            if !policies.is_empty() {
                c.policies = policies;
            }
        }
        _ => match policies.as_slice() {
            [] => {}
            [p] => c.policy = p.clone(),
            _ => return Err(Failure::Config("only `compare` accepts several --policy flags".into())),
        },
    }
    if let Some(n) = flags.n {
        c.n_particles = n;
    }
    if let Some(k) = flags.k {
        c.oversample = k;
    }
    if let Some(s) = flags.seed {
        c.seed = s;
    }
    if let Some(r) = flags.replicates {
        c.replicates = r;
    }
    if let Command::Run(_) = command {
        if flags.replicates.is_some_and(|r| r != 1) {
            return Err(Failure::Config("`run` performs exactly one run; use `replicate`".into()));
        }
        c.replicates = 1;
    }
    if let Some(m) = flags.max_iter {
        c.max_iterations = m;
    }
    if let Some(o) = &flags.out {
        c.out_dir = Some(o.clone());
    }
    if let Some(b) = flags.budget {
        c.draw_budget = Some(b);
    }
    if let Some(w) = flags.workers {
        c.workers = Some(w);
    }
    c.validate()?;
    Ok(c)
}

fn print_trace(exp: &Experiment) {
    let trace = exp.median_trace();
    println!("{:>3} {:>14} {:>8} {:>8} {:>10} {:>8}", "t", "epsilon", "q", "c_hat", "draws", "ess");
    for r in &trace.records {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:>3} {:>14.6} {:>8} {:>8} {:>10} {:>8.1}",
            r.t,
            r.epsilon,
            opt(r.q_used),
            opt(r.c_hat),
            r.draws,
            r.ess
        );
    }
    println!("stop: {:?}", trace.stop);
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let flags = match &cli.command {
        Command::Run(f) | Command::Replicate(f) | Command::Compare(f) => f,
    };
    let config = build_config(flags, &cli.command)?;
    match &cli.command {
        Command::Compare(_) => {
            let (report, _) = compare_schedulers(&config)?;
            print!("{}", format_report(&report));
            if report.rows.iter().all(|r| r.error.is_some()) {
                return Err(Failure::Runtime("every policy failed".into()));
            }
        }
        command => {
            let exp = run_experiment(&config)?;
            if let Command::Run(_) = command {
                print_trace(&exp);
            }
            let report = ComparisonReport {
                model: config.model.clone(),
                rows: vec![PolicyRow { label: exp.report.policy.clone(), report: Some(exp.report.clone()), error: None }],
            };
            print!("{}", format_report(&report));
            if let Some(dir) = &config.out_dir {
                aabc::harness::write_report(&report, dir, config.export.hellinger_table)?;
            }
            if let Some(w) = &exp.report.warning {
                eprintln!("warning: {w}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
