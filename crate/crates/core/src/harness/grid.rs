//! Reward-engineering baseline: fixed penalty weights instead of constraints.

use std::fmt::Write;

use super::config::{Precision, RunConfig};
use super::pool::run_jobs;
use crate::agent::{eval_seeds, ActMode, Trainer, TrainerConfig};
use crate::arena::{ArenaConfig, ArenaEnv};
use crate::env::{Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::events::{ConstraintSet, ConstraintSpec};
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeasibilityClass {
    Infeasible,
    Feasible,
    FeasiblePerformant,
}

impl FeasibilityClass {
    pub fn name(self) -> &'static str {
        match self {
            FeasibilityClass::Infeasible => "infeasible",
            FeasibilityClass::Feasible => "feasible",
            FeasibilityClass::FeasiblePerformant => "feasible_performant",
        }
    }
}

/// `report.rates` must be aligned with `specs`.
pub fn classify_feasible(report: &EvalReport, specs: &[ConstraintSpec], performance_floor: f64) -> FeasibilityClass {
    let feasible = specs.iter().zip(&report.rates).all(|(s, &r)| s.satisfied_by(r));
    if !feasible {
        FeasibilityClass::Infeasible
    } else if report.success_rate >= performance_floor {
        FeasibilityClass::FeasiblePerformant
    } else {
        FeasibilityClass::Feasible
    }
}

/// Subtracts `w_k` from the reward on every step where behavior `k` fires.
#[derive(Clone, Debug)]
pub struct PenalizedEnv<E> {
    pub inner: E,
    pub penalties: Vec<(ConstraintSpec, f64)>,
}

impl<E: Environment> Environment for PenalizedEnv<E> {
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn act_dim(&self) -> usize {
        self.inner.act_dim()
    }

    fn event_names(&self) -> Vec<String> {
        self.inner.event_names()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let mut out = self.inner.step(action)?;
        for (spec, w) in &self.penalties {
            if spec.indicator.read(&out.events) {
                out.reward -= w;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub behaviors: Vec<ConstraintSpec>,
    /// One weight list per behavior.
    pub weights: Vec<Vec<f64>>,
    pub arena: ArenaConfig,
    pub trainer: TrainerConfig,
    pub precision: Precision,
    pub performance_floor: f64,
    pub eval_episodes: usize,
    /// Every cell trains with this seed, so cells differ only in weights.
    pub seed: u64,
}

impl GridSpec {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let behaviors: Vec<ConstraintSpec> = cfg.grid.behaviors.iter().map(|n| cfg.spec(n)).collect::<Result<_>>()?;
        let spec = Self {
            weights: vec![cfg.grid.weights.clone(); behaviors.len()],
            behaviors,
            arena: cfg.arena.clone(),
            trainer: TrainerConfig { success_enabled: false, bootstrap: false, ..cfg.trainer.clone() },
            precision: cfg.precision,
            performance_floor: cfg.grid.performance_floor,
            eval_episodes: cfg.grid.eval_episodes,
            seed: cfg.seeds[0],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.behaviors.is_empty() || self.weights.len() != self.behaviors.len() {
            return Err(Error::Config("a grid needs one weight list per behavior and at least one behavior".into()));
        }
        if self.weights.iter().any(|w| w.is_empty()) {
            return Err(Error::Config("empty weight list".into()));
        }
        if self.weights.iter().flatten().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config("grid weights must be finite and non-negative".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("grid evaluation needs at least one episode".into()));
        }
        Ok(())
    }

    /// Every weight tuple, first behavior varying slowest.
    pub fn cells(&self) -> Vec<Vec<f64>> {
        self.weights.iter().fold(vec![vec![]], |acc, list| {
            acc.iter()
                .flat_map(|prefix| {
                    list.iter().map(move |&w| {
                        let mut v = prefix.clone();
                        v.push(w);
                        v
                    })
                })
                .collect()
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub weights: Vec<f64>,
    pub outcome: std::result::Result<(EvalReport, FeasibilityClass), String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub names: Vec<String>,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn csv(&self) -> String {
        let mut s = String::new();
        for n in &self.names {
            let _ = write!(s, "w_{n},");
        }
        s.push_str("return_mean,success_rate");
        for n in &self.names {
            let _ = write!(s, ",rate_{n}");
        }
        s.push_str(",class\n");
        for c in &self.cells {
            for w in &c.weights {
                let _ = write!(s, "{w},");
            }
            match &c.outcome {
                Ok((r, class)) => {
                    let _ = write!(s, "{},{}", r.return_mean, r.success_rate);
                    for v in &r.rates {
                        let _ = write!(s, ",{v}");
                    }
                    let _ = writeln!(s, ",{}", class.name());
                }
                Err(_) => {
                    s.push_str("NaN,NaN");
                    for _ in &self.names {
                        s.push_str(",NaN");
                    }
                    s.push_str(",error\n");
                }
            }
        }
        s
    }

    pub fn fraction(&self, class: FeasibilityClass) -> f64 {
        let hits = self.cells.iter().filter(|c| matches!(&c.outcome, Ok((_, k)) if *k == class)).count();
        hits as f64 / self.cells.len().max(1) as f64
    }
}

/// Trains one unconstrained agent on the penalized reward and evaluates it
/// on the original reward.
pub fn run_cell(grid: &GridSpec, weights: &[f64]) -> Result<(EvalReport, FeasibilityClass)> {
    match grid.precision {
        Precision::F32 => run_cell_as::<f32>(grid, weights),
        Precision::F64 => run_cell_as::<f64>(grid, weights),
    }
}

fn run_cell_as<T: Scalar>(grid: &GridSpec, weights: &[f64]) -> Result<(EvalReport, FeasibilityClass)> {
    let base = ArenaEnv::new(grid.arena.clone())?;
    let env = PenalizedEnv {
        inner: base.clone(),
        penalties: grid.behaviors.iter().cloned().zip(weights.iter().copied()).collect(),
    };
    let mut trainer = Trainer::<T, _>::new(
        env,
        ConstraintSet::unconstrained(),
        grid.behaviors.clone(),
        grid.trainer.clone(),
        grid.seed,
    )?;
    trainer.run()?;
    let agent = trainer.into_agent();
    let mut env = base;
    let mut unused = stream_rng(0, Stream::Explore);
    let report = evaluate(&mut env, &eval_seeds(grid.seed, grid.eval_episodes), &grid.behaviors, |o| {
        agent.act(o, ActMode::Deterministic, &mut unused)
    })?;
    let class = classify_feasible(&report, &grid.behaviors, grid.performance_floor);
    Ok((report, class))
}

/// Runs every cell; failed cells are recorded and the grid carries on.
pub fn run_reward_engineering_grid(grid: &GridSpec, workers: usize) -> Result<GridResult> {
    grid.validate()?;
    let jobs: Vec<(usize, Vec<f64>)> = grid.cells().into_iter().enumerate().collect();
    let cells = run_jobs(jobs, workers, |_, w| {
        let outcome = run_cell(grid, &w).map_err(|e| {
            log::warn!("grid cell {w:?} failed: {e}");
            e.to_string()
        });
        GridCell { weights: w, outcome }
    });
    Ok(GridResult {
        names: grid.behaviors.iter().map(|b| b.name.clone()).collect(),
        cells: cells.into_iter().map(|(_, c)| c).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena;
    use crate::events::Indicator;

    fn lava() -> ConstraintSpec {
        ConstraintSpec::upper("in_lava", 0.01, Indicator::direct(arena::IN_LAVA))
    }

    fn report(success: f64, rates: Vec<f64>) -> EvalReport {
        EvalReport { episodes: 10, steps: 100, success_rate: success, rates, return_mean: 0.0 }
    }

    #[test]
    fn classification_examples() {
        let specs = [lava(), ConstraintSpec::upper("nl", 0.1, Indicator::direct(arena::NOT_LOOKING))];
        assert_eq!(classify_feasible(&report(0.995, vec![0.005, 0.05]), &specs, 0.99), FeasibilityClass::FeasiblePerformant);
        assert_eq!(classify_feasible(&report(1.0, vec![0.02, 0.05]), &specs, 0.99), FeasibilityClass::Infeasible);
        assert_eq!(classify_feasible(&report(0.5, vec![0.0, 0.0]), &specs, 0.99), FeasibilityClass::Feasible);
        let lower = [ConstraintSpec::lower("goal", 0.9, Indicator::direct(arena::REACHED_GOAL))];
        assert_eq!(classify_feasible(&report(1.0, vec![0.5]), &lower, 0.5), FeasibilityClass::Infeasible);
    }

    #[test]
    fn cells_enumerate_the_product() {
        let mut g = GridSpec::from_config(&crate::harness::presets::desk_grid(&["in_lava", "not_looking_at_marker"])).unwrap();
        g.weights = vec![(0..7).map(f64::from).collect(); 2];
        let cells = g.cells();
        assert_eq!(cells.len(), 49);
        assert_eq!(cells[0], vec![0.0, 0.0]);
        assert_eq!(cells[1], vec![0.0, 1.0]);
        assert_eq!(cells[48], vec![6.0, 6.0]);
        g.weights.push(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        g.behaviors.push(lava());
        assert_eq!(g.cells().len(), 343);
    }

    #[test]
    fn failed_cells_are_kept_in_the_table() {
        let r = GridResult {
            names: vec!["in_lava".into()],
            cells: vec![
                GridCell { weights: vec![0.5], outcome: Ok((report(1.0, vec![0.0]), FeasibilityClass::FeasiblePerformant)) },
                GridCell { weights: vec![2.0], outcome: Err("boom".into()) },
            ],
        };
        assert_eq!(r.csv(), "w_in_lava,return_mean,success_rate,rate_in_lava,class\n0.5,0,1,0,feasible_performant\n2,NaN,NaN,NaN,error\n");
        assert_eq!(r.fraction(FeasibilityClass::FeasiblePerformant), 0.5);
    }
}
