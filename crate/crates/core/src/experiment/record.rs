use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::audit::AuditSummary;
use crate::error::{Error, Result};
use crate::mechanism::{AmaParams, LossSpec};
use crate::optim::{Method, StartTrace};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Everything a run produces except wall time, so identical configs give identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub env: String,
    pub n: usize,
    pub m: usize,
    pub method: Method,
    pub loss: LossSpec,
    pub eval_profiles: usize,
    pub mean_loss: f64,
    pub std_err: f64,
    /// Revenue, welfare or makespan, in the tables' orientation.
    pub objective: f64,
    pub vcg_mean_loss: f64,
    pub vcg_std_err: f64,
    pub vcg_objective: f64,
    /// Percent change of the objective relative to VCG; absent when VCG's objective is 0.
    pub improvement: Option<f64>,
    pub optimizer_estimate: Option<f64>,
    pub traces: Vec<StartTrace>,
    pub audit: AuditSummary,
    pub status: RunStatus,
    pub params: AmaParams,
}

impl ResultRecord {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })
    }

    /// `env,n,m,method,mean_loss,std_err,improvement,seconds,seed`
    pub fn csv_row(&self, seconds: f64) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3},{}",
            self.env,
            self.n,
            self.m,
            self.method.name(),
            self.mean_loss,
            self.std_err,
            format_improvement(self.improvement),
            seconds,
            self.config.seed
        )
    }
}

pub const CSV_HEADER: &str = "env,n,m,method,mean_loss,std_err,improvement,seconds,seed";

/// `(best − vcg) / vcg` in percent, `None` when the VCG objective is zero.
pub fn improvement(best: f64, vcg: f64) -> Option<f64> {
    if vcg.abs() <= 1e-12 {
        None
    } else {
        Some(100.0 * (best - vcg) / vcg)
    }
}

pub fn format_improvement(imp: Option<f64>) -> String {
    match imp {
        Some(v) => format!("{v:+.2}%"),
        None => "N/A".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_formatting() {
        assert_eq!(format_improvement(improvement(0.9132, 1.0336)), "-11.65%");
        assert_eq!(format_improvement(improvement(0.49, 0.0)), "N/A");
        let v = improvement(0.6777, 0.4999).unwrap();
        assert!((v - 35.56).abs() < 0.01, "{v}");
    }
}
