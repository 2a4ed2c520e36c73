//! Command-line front end for training, evaluation, reward-engineering
//! grids, the multiplier stability run and the tabular oracle.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use crl_core::harness::{
    self, evaluate_checkpoint, line_plot, presets, run_experiment, run_reward_engineering_grid,
    run_stability_experiment, FeasibilityClass, GridSpec, RunConfig, Series, StabilityResult,
};
use crl_core::multipliers::MultiplierMode;
use crl_core::oracle::{self, DualGrid, GdaConfig, TabularCMDP};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "crl", version, about = "Constrained RL with normalized Lagrange multipliers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed and write metrics, a summary, checkpoints and plots.
    Train(Common),
    /// Evaluate checkpoints written by `train`.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Evaluation episodes per seed.
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Reward-engineering grid over `grid.behaviors` and `grid.weights`.
    Grid(Common),
    /// Impossible-then-feasible constraint under both multiplier modes.
    Stability(Common),
    /// Exact dual optimum and gradient descent-ascent on a tabular CMDP.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct Common {
    /// Flat `section.key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset applied before the file; the file may override it.
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated seeds overriding `experiment.seeds`.
    #[arg(long, alias = "seed", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory overriding `experiment.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Normalized,
    Unnormalized,
}

#[derive(Args)]
struct OracleArgs {
    /// CMDP text file; a random instance is generated when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed of the random instance.
    #[arg(long, alias = "seeds", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for interface symmetry; the oracle is single-threaded.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 5)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 1)]
    constraints: usize,
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    #[arg(long, default_value_t = 5.0)]
    policy_lr: f64,
    #[arg(long, default_value_t = 0.5)]
    multiplier_lr: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Unnormalized)]
    mode: ModeArg,
    /// Largest multiplier of the dual grid.
    #[arg(long, default_value_t = 2.0)]
    grid_max: f64,
    #[arg(long, default_value_t = 201)]
    grid_points: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut text = String::new();
    if let Some(p) = &c.preset {
        if presets::by_name(p).is_none() {
            bail!("unknown preset {p:?}; known: {}", presets::NAMES.join(", "));
        }
        writeln!(text, "experiment.preset = {p}")?;
    }
    if let Some(path) = &c.config {
        text.push_str(&std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let mut cfg = RunConfig::parse(&text).with_context(|| match &c.config {
        Some(p) => format!("in {}", p.display()),
        None => "in preset".into(),
    })?;
    if let Some(s) = &c.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    log::info!("training {} on seeds {:?} into {}", cfg.name, cfg.seeds, cfg.out_dir.display());
    let res = run_experiment(&cfg, c.workers, true)?;
    for r in &res.runs {
        match (&r.error, r.final_row()) {
            (Some(e), _) => println!("seed {}: failed: {e}", r.seed),
            (None, Some(f)) => println!(
                "seed {}: step {} return {:.3} success {:.3} rates {:?}",
                r.seed, f.step, f.return_mean, f.success_rate, f.rates
            ),
            (None, None) => println!("seed {}: no evaluation point reached", r.seed),
        }
    }
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn eval(c: &Common, episodes: usize) -> Result<()> {
    let cfg = load_config(c)?;
    let specs = cfg.tracked_specs()?;
    let mut csv = String::from("seed,checkpoint_step,return_mean,success_rate");
    for s in &specs {
        write!(csv, ",rate_{}", s.name)?;
    }
    csv.push('\n');
    for &seed in &cfg.seeds {
        let (r, step) = evaluate_checkpoint(&cfg, seed, episodes).with_context(|| format!("seed {seed}"))?;
        println!("seed {seed}: step {step} return {:.3} success {:.3} rates {:?}", r.return_mean, r.success_rate, r.rates);
        write!(csv, "{seed},{step},{},{}", r.return_mean, r.success_rate)?;
        for v in &r.rates {
            write!(csv, ",{v}")?;
        }
        csv.push('\n');
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("eval.csv"), csv)?;
    Ok(())
}

fn grid(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let spec = GridSpec::from_config(&cfg)?;
    log::info!("{} grid cells on {} workers", spec.cells().len(), c.workers);
    let res = run_reward_engineering_grid(&spec, c.workers)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.txt"), cfg.render())?;
    std::fs::write(cfg.out_dir.join("grid.csv"), res.csv())?;
    for class in [FeasibilityClass::FeasiblePerformant, FeasibilityClass::Feasible, FeasibilityClass::Infeasible] {
        println!("{:>20}: {:.3}", class.name(), res.fraction(class));
    }
    println!("wrote {}", cfg.out_dir.join("grid.csv").display());
    Ok(())
}

fn stability(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    for &seed in &cfg.seeds {
        let dir = cfg.out_dir.join(format!("seed_{seed}"));
        let res = run_stability_experiment(&cfg, seed, c.workers, Some(&dir))?;
        let at = |r| StabilityResult::lambda_at_switch(r, res.switch_step).unwrap_or(f64::NAN);
        println!(
            "seed {seed}: switch at {}; lambda there: normalized {:.4}, unnormalized {:.4}",
            res.switch_step,
            at(&res.normalized),
            at(&res.unnormalized)
        );
        for (name, r) in [("normalized", &res.normalized), ("unnormalized", &res.unnormalized)] {
            if let Some(e) = &r.error {
                println!("  {name} stopped early: {e}");
            }
        }
    }
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn load_cmdp(a: &OracleArgs) -> Result<TabularCMDP> {
    match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(oracle::parse_cmdp(&text).with_context(|| format!("in {}", p.display()))?)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            Ok(oracle::random_cmdp(&mut rng, a.states, a.actions, a.constraints, 0.9, 0.5))
        }
    }
}

fn run_oracle(a: &OracleArgs) -> Result<()> {
    let m = load_cmdp(a)?;
    let mut report = String::new();
    writeln!(report, "states {} actions {} constraints {} gamma {}", m.states(), m.actions(), m.num_constraints(), m.gamma())?;
    let dual = oracle::dual_minimize(&m, &DualGrid::linear(a.grid_max, a.grid_points))?;
    writeln!(report, "dual: lambda {:?} value {:.6}", dual.lambda, dual.dual_value)?;
    match &dual.primal {
        Some(p) => writeln!(
            report,
            "best feasible: reward {:.6} costs {:?}{}",
            p.profile.reward,
            p.profile.costs,
            if p.mixed { " (mixture)" } else { "" }
        )?,
        None => writeln!(report, "best feasible: none found on the grid")?,
    }
    let cfg = GdaConfig {
        steps: a.steps,
        policy_lr: a.policy_lr,
        multiplier_lr: a.multiplier_lr,
        mode: match a.mode {
            ModeArg::Normalized => MultiplierMode::Normalized,
            ModeArg::Unnormalized => MultiplierMode::Unnormalized,
        },
        ..GdaConfig::default()
    };
    let traj = oracle::gda_reference(&m, &cfg)?;
    let last = traj.steps.last().context("zero descent-ascent steps")?;
    writeln!(report, "gda last iterate: reward {:.6} costs {:?}", last.profile.reward, last.profile.costs)?;
    let (_, avg) = traj.averaged(&m, traj.steps.len() / 2)?;
    writeln!(report, "gda average of second half: reward {:.6} costs {:?}", avg.reward, avg.costs)?;
    if let Some(at) = traj.diverged_at {
        writeln!(report, "gda diverged at step {at}")?;
    }
    print!("{report}");
    if let Some(out) = &a.out {
        write_oracle(out, &m, &report, &traj)?;
    }
    Ok(())
}

fn write_oracle(out: &Path, m: &TabularCMDP, report: &str, traj: &oracle::GdaTrajectory) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("oracle.txt"), report)?;
    std::fs::write(out.join("instance.cmdp"), oracle::write_cmdp(m))?;
    let mut csv = String::from("step,reward");
    for k in 0..m.num_constraints() {
        write!(csv, ",cost_{k}")?;
    }
    csv.push_str(",lambda_0");
    for k in 0..m.num_constraints() {
        write!(csv, ",lambda_{}", k + 1)?;
    }
    csv.push('\n');
    for (i, s) in traj.steps.iter().enumerate() {
        write!(csv, "{i},{}", s.profile.reward)?;
        for c in &s.profile.costs {
            write!(csv, ",{c}")?;
        }
        write!(csv, ",{}", s.weights.lambda0)?;
        for l in &s.weights.lambdas {
            write!(csv, ",{l}")?;
        }
        csv.push('\n');
    }
    std::fs::write(out.join("gda.csv"), csv)?;
    let stride = (traj.steps.len() / 500).max(1);
    let series = |name: String, f: &dyn Fn(&oracle::GdaStep) -> f64| {
        Series::new(name, traj.steps.iter().enumerate().step_by(stride).map(|(i, s)| (i as f64, f(s))).collect())
    };
    let mut curves = vec![series("reward".into(), &|s| s.profile.reward)];
    for k in 0..m.num_constraints() {
        curves.push(series(format!("cost_{k}"), &move |s| s.profile.costs[k]));
    }
    let lines: Vec<harness::HLine> =
        m.thresholds().iter().enumerate().map(|(k, &y)| harness::HLine { label: format!("d_{k}"), y }).collect();
    std::fs::write(out.join("gda.svg"), line_plot("descent-ascent", "iteration", "value", &curves, &lines))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(c) => train(c),
        Command::Eval { common, episodes } => eval(common, *episodes),
        Command::Grid(c) => grid(c),
        Command::Stability(c) => stability(c),
        Command::Oracle(a) => run_oracle(a),
    }
}
