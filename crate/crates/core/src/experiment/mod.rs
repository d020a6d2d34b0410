//! Config-driven runs: optimize, evaluate against VCG on matched profiles, audit, persist.

mod config;
mod record;

pub use config::ExperimentConfig;
pub use record::{format_improvement, improvement, ResultRecord, RunStatus, CSV_HEADER};

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::audit::{audit, AuditConfig};
use crate::error::{Error, Result};
use crate::mechanism::AmaParams;
use crate::optim::{optimize, profile_losses, summarize, Method, ProfileBatch};
use crate::rng::tag;

/// Runs the experiment on a pool of `threads` workers (all cores when `None`).
pub fn run(config: &ExperimentConfig, threads: Option<usize>) -> Result<ResultRecord> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        if k == 0 {
            return Err(Error::config("threads", "must be at least 1"));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &ExperimentConfig) -> Result<ResultRecord> {
    let env = config.build_environment()?;
    let bounds = config.bounds_for(&env);
    let optimized = optimize(&env, config.loss, config.method, &config.optimizer, &bounds, config.seed)?;

    let eval = ProfileBatch::draw(&env, config.seed, &[tag("eval")], config.eval_profiles)?;
    let losses = profile_losses(&env, &optimized.params, config.loss, &eval)?;
    let (mean_loss, std_err) = summarize(&losses);
    let vcg = AmaParams::vcg(env.num_agents(), env.mdp().num_states(), env.mdp().num_actions());
    let (vcg_mean_loss, vcg_std_err) = if config.method == Method::Vcg {
        (mean_loss, std_err)
    } else {
        summarize(&profile_losses(&env, &vcg, config.loss, &eval)?)
    };

    let audit_summary = audit(&env, &optimized.params, &eval.samples, &AuditConfig::default(), config.seed)?;
    let status = if audit_summary.ic_passed {
        RunStatus::Ok
    } else {
        RunStatus::Failed
    };
    let objective = config.loss.objective_from_loss(mean_loss);
    let vcg_objective = config.loss.objective_from_loss(vcg_mean_loss);
    Ok(ResultRecord {
        config_hash: config.hash(),
        config: config.clone(),
        env: config.environment.name().to_string(),
        n: config.environment.num_agents(),
        m: config.environment.size(),
        method: config.method,
        loss: config.loss,
        eval_profiles: config.eval_profiles,
        mean_loss,
        std_err,
        objective,
        vcg_mean_loss,
        vcg_std_err,
        vcg_objective,
        improvement: improvement(objective, vcg_objective),
        optimizer_estimate: Some(optimized.estimate).filter(|v| v.is_finite()),
        traces: optimized.traces,
        audit: audit_summary,
        status,
        params: optimized.params,
    })
}

/// File name of a record: `<env>_n<n>_m<m>_<method>_seed<seed>.json`.
pub fn record_file_name(record: &ResultRecord) -> String {
    format!(
        "{}_n{}_m{}_{}_seed{}.json",
        record.env,
        record.n,
        record.m,
        record.method.name(),
        record.config.seed
    )
}

/// Writes the record into `dir` and appends its row to `dir/results.csv`.
pub fn persist(record: &ResultRecord, dir: &Path, seconds: f64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(record_file_name(record));
    std::fs::write(&path, record.to_json()?)?;
    let csv = dir.join("results.csv");
    let fresh = !csv.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(&csv)?;
    if fresh {
        writeln!(f, "{CSV_HEADER}")?;
    }
    writeln!(f, "{}", record.csv_row(seconds))?;
    Ok(path)
}

/// One line of a comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub method: Method,
    pub objective: f64,
    pub std_err: f64,
    pub improvement: Option<f64>,
    pub best: bool,
}

/// Improvement of every record over the VCG baseline. The baseline is the VCG record when one
/// is given, otherwise the matched VCG evaluation embedded in the records.
pub fn compare(records: &[ResultRecord]) -> Result<Vec<ComparisonRow>> {
    let first = records
        .first()
        .ok_or_else(|| Error::Incomparable("no records".into()))?;
    for r in &records[1..] {
        if r.config.environment != first.config.environment
            || r.config.distribution != first.config.distribution
            || r.loss != first.loss
        {
            return Err(Error::Incomparable(format!(
                "{} ({}) and {} ({}) differ in environment, distribution or loss",
                first.method.name(),
                first.config_hash,
                r.method.name(),
                r.config_hash
            )));
        }
    }
    let baseline = records
        .iter()
        .find(|r| r.method == Method::Vcg)
        .map(|r| r.objective);
    let maximize = first.loss.maximizes();
    let best_idx = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.method != Method::Vcg)
        .max_by(|(_, a), (_, b)| {
            let ord = a.objective.total_cmp(&b.objective);
            if maximize {
                ord
            } else {
                ord.reverse()
            }
        })
        .map(|(i, _)| i);
    Ok(records
        .iter()
        .enumerate()
        .map(|(i, r)| ComparisonRow {
            method: r.method,
            objective: r.objective,
            std_err: r.std_err,
            improvement: improvement(r.objective, baseline.unwrap_or(r.vcg_objective)),
            best: Some(i) == best_idx,
        })
        .collect())
}
