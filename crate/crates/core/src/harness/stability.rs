//! Normalized versus unnormalized multipliers under an impossible constraint.

use std::path::Path;

use super::config::RunConfig;
use super::experiment::{lambda_csv, SeedRun, TrainJob};
use super::plot::{line_plot, HLine, Series};
use super::pool::run_jobs;
use crate::agent::ThresholdSwitch;
use crate::error::{Error, Result};
use crate::multipliers::MultiplierMode;

/// Step at which the threshold is replaced.
pub fn switch_step(total_steps: u64, fraction: f64) -> u64 {
    (total_steps as f64 * fraction).round() as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityResult {
    pub switch_step: u64,
    pub feasible_threshold: f64,
    pub normalized: SeedRun,
    pub unnormalized: SeedRun,
}

impl StabilityResult {
    /// Multiplier of the constraint right after the last update at or
    /// before the switch.
    pub fn lambda_at_switch(run: &SeedRun, switch_step: u64) -> Option<f64> {
        run.lambda_trace.iter().rev().find(|p| p.step <= switch_step).map(|p| p.weights[1])
    }
}

/// Runs both multiplier modes from the same seed. A diverging run is
/// recorded in its `error` field and does not abort the other.
pub fn run_stability_experiment(cfg: &RunConfig, seed: u64, workers: usize, out: Option<&Path>) -> Result<StabilityResult> {
    cfg.validate()?;
    let mut job = TrainJob::from_config(cfg)?;
    if job.constraints.k() != 1 || job.constraints.has_success() {
        return Err(Error::Config("the stability run needs exactly one behavior constraint and no success constraint".into()));
    }
    let at = switch_step(cfg.trainer.total_steps, cfg.stability.switch_fraction);
    job.trainer.threshold_switch = Some(ThresholdSwitch { step: at, slot: 0, threshold: cfg.stability.feasible_threshold });
    let jobs = vec![(0u8, MultiplierMode::Normalized), (1u8, MultiplierMode::Unnormalized)];
    let mut runs = run_jobs(jobs, workers, |_, mode| {
        let mut j = job.clone();
        j.trainer.multiplier_mode = mode;
        let r = j.run(seed);
        if let Some(e) = &r.error {
            log::warn!("{mode:?} multipliers stopped early: {e}");
        }
        r
    })
    .into_iter()
    .map(|(_, r)| r);
    let result = StabilityResult {
        switch_step: at,
        feasible_threshold: cfg.stability.feasible_threshold,
        normalized: runs.next().expect("two runs"),
        unnormalized: runs.next().expect("two runs"),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), cfg.render())?;
        for (name, r) in [("normalized", &result.normalized), ("unnormalized", &result.unnormalized)] {
            std::fs::write(dir.join(format!("metrics_{name}.csv")), r.csv())?;
            std::fs::write(dir.join(format!("lambda_{name}.csv")), lambda_csv(&r.lambda_trace))?;
        }
        let trace = |name: &str, r: &SeedRun| {
            Series::new(name, r.lambda_trace.iter().map(|p| (p.step as f64, p.weights[1])).collect())
        };
        let svg = line_plot(
            "constraint multiplier",
            "step",
            "lambda",
            &[trace("normalized", &result.normalized), trace("unnormalized", &result.unnormalized)],
            &[],
        );
        std::fs::write(dir.join("lambda.svg"), svg)?;
        let rate = |name: &str, r: &SeedRun| {
            Series::new(name, r.rows.iter().map(|m| (m.step as f64, m.rates.first().copied().unwrap_or(f64::NAN))).collect())
        };
        let svg = line_plot(
            "behavior rate",
            "step",
            "rate",
            &[rate("normalized", &result.normalized), rate("unnormalized", &result.unnormalized)],
            &[HLine { label: "after switch".into(), y: cfg.stability.feasible_threshold }],
        );
        std::fs::write(dir.join("rate.svg"), svg)?;
    }
    Ok(result)
}
