//! Rows of the per-evaluation metrics table.

use std::fmt::Write;

/// Column layout of a metrics table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricsSchema {
    pub rate_names: Vec<String>,
    /// `lambda_0..`; zero when the run has no multipliers.
    pub lambdas: usize,
    pub critics: usize,
}

impl MetricsSchema {
    pub fn header(&self) -> String {
        let mut cols = vec!["step".to_string(), "return_mean".into(), "success_rate".into()];
        cols.extend(self.rate_names.iter().map(|n| format!("rate_{n}")));
        cols.extend((0..self.lambdas).map(|i| format!("lambda_{i}")));
        cols.extend((0..self.critics).map(|i| format!("critic_loss_{i}")));
        cols.push("policy_objective".into());
        cols.join(",")
    }

    pub fn columns(&self) -> usize {
        4 + self.rate_names.len() + self.lambdas + self.critics
    }
}

/// One evaluation point. Losses are means over the latest update round and
/// are NaN before the first round.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub return_mean: f64,
    pub success_rate: f64,
    pub rates: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub critic_losses: Vec<f64>,
    pub policy_objective: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{},{}", self.step, self.return_mean, self.success_rate);
        for v in self.rates.iter().chain(&self.lambdas).chain(&self.critic_losses) {
            let _ = write!(s, ",{v}");
        }
        let _ = write!(s, ",{}", self.policy_objective);
        s
    }
}

pub fn metrics_csv(schema: &MetricsSchema, rows: &[MetricsRow]) -> String {
    let mut out = schema.header();
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}
