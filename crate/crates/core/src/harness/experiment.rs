//! Multi-seed training runs and their summary table.

use std::fmt::Write;

use super::config::{Precision, RunConfig};
use super::plot::{line_plot, HLine, Series};
use super::pool::run_jobs;
use crate::agent::{
    eval_seeds, load_checkpoint, save_checkpoint, ActMode, LambdaPoint, MetricsRow, MetricsSchema, Trainer,
    TrainerConfig,
};
use crate::arena::ArenaEnv;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::events::{ConstraintSet, ConstraintSpec};
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, Stream};

/// Outcome of one seed. On failure `error` is set and the rows logged before
/// the failure are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub schema: MetricsSchema,
    pub rows: Vec<MetricsRow>,
    pub lambda_trace: Vec<LambdaPoint>,
    pub error: Option<String>,
}

impl SeedRun {
    pub fn csv(&self) -> String {
        crate::agent::metrics_csv(&self.schema, &self.rows)
    }

    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

/// Everything one training job needs besides the seed.
#[derive(Clone, Debug)]
pub struct TrainJob {
    pub arena: crate::arena::ArenaConfig,
    pub constraints: ConstraintSet,
    pub tracked: Vec<ConstraintSpec>,
    pub trainer: TrainerConfig,
    pub precision: Precision,
    /// Where to write the final checkpoint, if anywhere.
    pub checkpoint_dir: Option<std::path::PathBuf>,
}

impl TrainJob {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            arena: cfg.arena.clone(),
            constraints: cfg.constraint_set()?,
            tracked: cfg.tracked_specs()?,
            trainer: cfg.trainer.clone(),
            precision: cfg.precision,
            checkpoint_dir: None,
        })
    }

    pub fn run(&self, seed: u64) -> SeedRun {
        match self.precision {
            Precision::F32 => self.run_as::<f32>(seed),
            Precision::F64 => self.run_as::<f64>(seed),
        }
    }

    fn run_as<T: Scalar>(&self, seed: u64) -> SeedRun {
        let env = match ArenaEnv::new(self.arena.clone()) {
            Ok(e) => e,
            Err(e) => return self.failed(seed, e),
        };
        let mut trainer =
            match Trainer::<T, _>::new(env, self.constraints.clone(), self.tracked.clone(), self.trainer.clone(), seed) {
                Ok(t) => t,
                Err(e) => return self.failed(seed, e),
            };
        let mut error = trainer.run().err().map(|e| e.to_string());
        if error.is_none() {
            if let Some(dir) = &self.checkpoint_dir {
                let step = trainer.step_count();
                if let Err(e) = save_checkpoint(&dir.join(format!("seed_{seed}")), &trainer.agent, step) {
                    error = Some(format!("checkpoint: {e}"));
                }
            }
        }
        SeedRun {
            seed,
            schema: trainer.schema(),
            rows: std::mem::take(&mut trainer.rows),
            lambda_trace: std::mem::take(&mut trainer.lambda_trace),
            error,
        }
    }

    fn failed(&self, seed: u64, e: Error) -> SeedRun {
        SeedRun {
            seed,
            schema: MetricsSchema { rate_names: vec![], lambdas: 0, critics: 0 },
            rows: vec![],
            lambda_trace: vec![],
            error: Some(e.to_string()),
        }
    }
}

/// Mean and standard error across seeds at one evaluation step.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub step: u64,
    pub seeds: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation over `sqrt(seeds)`; NaN with a single seed.
    pub stderr: Vec<f64>,
}

fn row_values(r: &MetricsRow) -> Vec<f64> {
    let mut v = vec![r.return_mean, r.success_rate];
    v.extend(&r.rates);
    v.extend(&r.lambdas);
    v.extend(&r.critic_losses);
    v.push(r.policy_objective);
    v
}

/// Aggregates the successful runs at every step they all reached.
pub fn summarize(runs: &[SeedRun]) -> Vec<SummaryRow> {
    let ok: Vec<&SeedRun> = runs.iter().filter(|r| r.error.is_none()).collect();
    let Some(first) = ok.first() else { return vec![] };
    let mut out = Vec::new();
    for (i, row) in first.rows.iter().enumerate() {
        let aligned: Option<Vec<Vec<f64>>> =
            ok.iter().map(|r| r.rows.get(i).filter(|x| x.step == row.step).map(row_values)).collect();
        let Some(values) = aligned else { break };
        let n = values.len() as f64;
        let cols = values[0].len();
        let mean: Vec<f64> = (0..cols).map(|c| values.iter().map(|v| v[c]).sum::<f64>() / n).collect();
        let stderr = (0..cols)
            .map(|c| {
                if values.len() < 2 {
                    return f64::NAN;
                }
                let var = values.iter().map(|v| (v[c] - mean[c]).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            })
            .collect();
        out.push(SummaryRow { step: row.step, seeds: values.len(), mean, stderr });
    }
    out
}

pub fn summary_csv(schema: &MetricsSchema, rows: &[SummaryRow]) -> String {
    let header = schema.header();
    let names: Vec<&str> = header.split(',').skip(1).collect();
    let mut s = String::from("step,seeds");
    for n in &names {
        let _ = write!(s, ",{n}_mean,{n}_se");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{}", r.step, r.seeds);
        for (m, e) in r.mean.iter().zip(&r.stderr) {
            let _ = write!(s, ",{m},{e}");
        }
        s.push('\n');
    }
    s
}

pub fn lambda_csv(trace: &[LambdaPoint]) -> String {
    let Some(first) = trace.first() else { return "step\n".into() };
    let mut s = String::from("step");
    for i in 0..first.weights.len() {
        let _ = write!(s, ",lambda_{i}");
    }
    for i in 0..first.params.len() {
        let _ = write!(s, ",param_{i}");
    }
    for i in 0..first.rates.len() {
        let _ = write!(s, ",batch_rate_{i}");
    }
    s.push('\n');
    for p in trace {
        let _ = write!(s, "{}", p.step);
        for v in p.weights.iter().chain(&p.params).chain(&p.rates) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    pub fn schema(&self) -> Option<&MetricsSchema> {
        self.runs.iter().find(|r| r.error.is_none()).map(|r| &r.schema)
    }
}

/// Trains every seed of `cfg`. With `write` set, per-seed CSVs, the summary,
/// checkpoints, the resolved config and plots go to `cfg.out_dir`.
pub fn run_experiment(cfg: &RunConfig, workers: usize, write: bool) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut job = TrainJob::from_config(cfg)?;
    if write {
        std::fs::create_dir_all(&cfg.out_dir)?;
        std::fs::write(cfg.out_dir.join("config.txt"), cfg.render())?;
        job.checkpoint_dir = Some(cfg.out_dir.join("checkpoints"));
    }
    let jobs: Vec<(u64, ())> = cfg.seeds.iter().map(|&s| (s, ())).collect();
    let runs: Vec<SeedRun> = run_jobs(jobs, workers, |&seed, ()| job.run(seed)).into_iter().map(|(_, r)| r).collect();
    for r in &runs {
        if let Some(e) = &r.error {
            log::warn!("seed {} failed and is excluded from the summary: {e}", r.seed);
        }
    }
    let summary = summarize(&runs);
    let result = ExperimentResult { runs, summary };
    if write {
        write_experiment(cfg, &result)?;
    }
    Ok(result)
}

fn write_experiment(cfg: &RunConfig, result: &ExperimentResult) -> Result<()> {
    let dir = &cfg.out_dir;
    let mut failures = String::new();
    for r in &result.runs {
        std::fs::write(dir.join(format!("seed_{}.csv", r.seed)), r.csv())?;
        if !r.lambda_trace.is_empty() {
            std::fs::write(dir.join(format!("lambda_seed_{}.csv", r.seed)), lambda_csv(&r.lambda_trace))?;
        }
        if let Some(e) = &r.error {
            let _ = writeln!(failures, "seed {}: {e}", r.seed);
        }
    }
    if !failures.is_empty() {
        std::fs::write(dir.join("failures.txt"), failures)?;
    }
    let Some(schema) = result.schema() else {
        return Err(Error::Halted { step: 0, reason: "every seed failed".into() });
    };
    std::fs::write(dir.join("summary.csv"), summary_csv(schema, &result.summary))?;
    let rows = &result.summary;
    let col = |c: usize| -> Series {
        Series::new("mean", rows.iter().map(|r| (r.step as f64, r.mean[c])).collect())
            .with_spread(rows.iter().map(|r| r.stderr[c]).collect())
    };
    std::fs::write(dir.join("return.svg"), line_plot(&cfg.name, "step", "return", &[col(0)], &[]))?;
    std::fs::write(dir.join("success.svg"), line_plot(&cfg.name, "step", "success rate", &[col(1)], &[]))?;
    let rates: Vec<Series> = schema
        .rate_names
        .iter()
        .enumerate()
        .map(|(i, n)| Series { name: n.clone(), ..col(2 + i) })
        .collect();
    let lines: Vec<HLine> = cfg
        .tracked
        .iter()
        .filter_map(|n| cfg.threshold(n).ok().map(|y| HLine { label: n.clone(), y }))
        .collect();
    std::fs::write(dir.join("rates.svg"), line_plot(&cfg.name, "step", "behavior rate", &rates, &lines))?;
    if schema.lambdas > 0 {
        let base = 2 + schema.rate_names.len();
        let ls: Vec<Series> =
            (0..schema.lambdas).map(|i| Series { name: format!("lambda_{i}"), ..col(base + i) }).collect();
        std::fs::write(dir.join("lambda.svg"), line_plot(&cfg.name, "step", "multiplier", &ls, &[]))?;
    }
    Ok(())
}

/// Evaluates the checkpoint of `seed` written by [`run_experiment`].
pub fn evaluate_checkpoint(cfg: &RunConfig, seed: u64, episodes: usize) -> Result<(EvalReport, u64)> {
    match cfg.precision {
        Precision::F32 => evaluate_checkpoint_as::<f32>(cfg, seed, episodes),
        Precision::F64 => evaluate_checkpoint_as::<f64>(cfg, seed, episodes),
    }
}

fn evaluate_checkpoint_as<T: Scalar>(cfg: &RunConfig, seed: u64, episodes: usize) -> Result<(EvalReport, u64)> {
    let mut env = ArenaEnv::new(cfg.arena.clone())?;
    let dir = cfg.out_dir.join("checkpoints").join(format!("seed_{seed}"));
    let (agent, step) = load_checkpoint::<T>(
        &dir,
        crate::arena::OBS_DIM,
        crate::arena::ACTION_DIM,
        cfg.constraint_set()?,
        cfg.trainer.clone(),
    )?;
    let mut unused = stream_rng(0, Stream::Explore);
    let report = evaluate(&mut env, &eval_seeds(seed, episodes), &cfg.tracked_specs()?, |o| {
        agent.act(o, ActMode::Deterministic, &mut unused)
    })?;
    Ok((report, step))
}
