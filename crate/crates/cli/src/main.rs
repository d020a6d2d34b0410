use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dama_core::audit::{audit, AuditConfig, MisreportStrategy};
use dama_core::experiment::{self, format_improvement, ExperimentConfig, ResultRecord, RunStatus};
use dama_core::optim::{optimize, ProfileBatch};
use dama_core::rng::tag;

#[derive(Parser)]
#[command(name = "dama", version, about = "Optimize and audit dynamic affine maximizer mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its result record.
    Run {
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print improvements over VCG for records of the same setting.
    Compare {
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Audit the mechanism a config selects (or the one stored in a record) for IC and IR.
    Audit {
        config: PathBuf,
        /// Take the mechanism from this result record instead of optimizing.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        profiles: usize,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn read_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::from_json_str(&text).with_context(|| format!("in {}", path.display()))
}

fn read_record(path: &PathBuf) -> Result<ResultRecord> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ResultRecord::from_json_str(&text).with_context(|| format!("in {}", path.display()))
}

fn cmd_run(config: PathBuf, seed: Option<u64>, out: PathBuf, threads: Option<usize>) -> Result<ExitCode> {
    let mut cfg = read_config(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let start = Instant::now();
    let record = experiment::run(&cfg, threads)?;
    let seconds = start.elapsed().as_secs_f64();
    let path = experiment::persist(&record, &out, seconds)?;
    println!("{}", experiment::CSV_HEADER);
    println!("{}", record.csv_row(seconds));
    println!(
        "objective {:.4} (se {:.4}) vs VCG {:.4}; audit worst gain {:.3e}, min utility {:.3e}; {:?}",
        record.objective,
        record.std_err,
        record.vcg_objective,
        record.audit.worst_gain,
        record.audit.min_utility,
        record.status
    );
    println!("wrote {}", path.display());
    Ok(if record.status == RunStatus::Ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_compare(paths: Vec<PathBuf>) -> Result<ExitCode> {
    let records = paths.iter().map(read_record).collect::<Result<Vec<_>>>()?;
    let rows = experiment::compare(&records)?;
    let r0 = &records[0];
    println!("{} n={} m={} loss={:?}", r0.env, r0.n, r0.m, r0.loss);
    println!("{:<8} {:>10} {:>10} {:>10}", "method", "objective", "std_err", "vs VCG");
    for row in rows {
        println!(
            "{:<8} {:>10.4} {:>10.4} {:>10}{}",
            row.method.name(),
            row.objective,
            row.std_err,
            format_improvement(row.improvement),
            if row.best { "  *" } else { "" }
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(config: PathBuf, params: Option<PathBuf>, profiles: usize, threads: Option<usize>) -> Result<ExitCode> {
    let cfg = read_config(&config)?;
    if profiles == 0 {
        bail!("--profiles must be at least 1");
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build()?;
    let summary = pool.install(|| -> Result<_> {
        let env = cfg.build_environment()?;
        let mechanism = match &params {
            Some(p) => read_record(p)?.params,
            None => optimize(&env, cfg.loss, cfg.method, &cfg.optimizer, &cfg.bounds_for(&env), cfg.seed)?.params,
        };
        let batch = ProfileBatch::draw(&env, cfg.seed, &[tag("audit-cli")], profiles)?;
        let mut audit_cfg = AuditConfig {
            profiles,
            ..AuditConfig::default()
        };
        let spread = env.distribution().max_value();
        audit_cfg.strategies.push(MisreportStrategy::ExhaustiveGrid {
            offsets: vec![-spread, -0.5 * spread, 0.25 * spread, 0.5 * spread, spread],
        });
        Ok(audit(&env, &mechanism, &batch.samples, &audit_cfg, cfg.seed)?)
    })?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if summary.ic_passed && summary.ir_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            threads,
        } => cmd_run(config, seed, out, threads),
        Command::Compare { records } => cmd_compare(records),
        Command::Audit {
            config,
            params,
            profiles,
            threads,
        } => cmd_audit(config, params, profiles, threads),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
