use super::model::{exact_return, occupancy, value_iteration, ReturnProfile, TabularCMDP, TabularPolicy};
use crate::error::{Error, Result};

const VI_TOL: f64 = 1e-10;

/// Greedy policy for the Lagrangian reward `R - sum lambda_k C_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    pub actions: Vec<usize>,
    pub policy: TabularPolicy,
    /// Exact discounted Lagrangian return of `policy`.
    pub value: f64,
}

pub fn lagrangian_best_response(m: &TabularCMDP, lambda: &[f64]) -> Result<BestResponse> {
    if lambda.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Model("multipliers must be non-negative".into()));
    }
    let l = m.lagrangian_reward(lambda)?;
    let (_, actions) = value_iteration(m, &l, VI_TOL)?;
    let policy = TabularPolicy::deterministic(m.actions(), &actions)?;
    let value = exact_return(m, &policy, &l)?;
    Ok(BestResponse { actions, policy, value })
}

/// Per-constraint multiplier values; the search runs over their Cartesian
/// product.
#[derive(Clone, Debug, PartialEq)]
pub struct DualGrid {
    pub values: Vec<f64>,
}

impl DualGrid {
    /// `points` evenly spaced values on `[0, max]`.
    pub fn linear(max: f64, points: usize) -> Self {
        let values = match points {
            0 => vec![],
            1 => vec![0.0],
            _ => (0..points).map(|i| max * i as f64 / (points - 1) as f64).collect(),
        };
        Self { values }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimalPoint {
    pub policy: TabularPolicy,
    pub profile: ReturnProfile,
    /// True when the point mixes two best responses.
    pub mixed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    /// `min_lambda max_pi <x_pi, R - sum lambda C> + lambda . d`, in
    /// occupancy units.
    pub dual_value: f64,
    /// Best feasible point among grid best responses and their pairwise
    /// mixtures, if any is feasible.
    pub primal: Option<PrimalPoint>,
}

struct Candidate {
    actions: Vec<usize>,
    x: Vec<f64>,
    profile: ReturnProfile,
}

/// Grid-search minimization of the dual function for `K <= 2`.
pub fn dual_minimize(m: &TabularCMDP, grid: &DualGrid) -> Result<DualSolution> {
    let k = m.num_constraints();
    if grid.values.is_empty() {
        return Err(Error::Config("empty multiplier grid".into()));
    }
    if k > 2 {
        return Err(Error::Config(format!("grid dual search supports at most 2 constraints, got {k}")));
    }
    let n = grid.values.len();
    let total = n.pow(k as u32);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut candidates: Vec<Candidate> = Vec::new();
    for idx in 0..total {
        let lambda: Vec<f64> = (0..k).map(|j| grid.values[(idx / n.pow(j as u32)) % n]).collect();
        let br = lagrangian_best_response(m, &lambda)?;
        let x = occupancy(m, &br.policy)?;
        let profile = ReturnProfile::from_occupancy(m, &x);
        let g = profile.reward
            - lambda.iter().zip(&profile.costs).zip(m.thresholds()).map(|((l, c), d)| l * (c - d)).sum::<f64>();
        if best.as_ref().is_none_or(|(_, v)| g < *v) {
            best = Some((lambda, g));
        }
        if !candidates.iter().any(|c| c.actions == br.actions) {
            candidates.push(Candidate { actions: br.actions, x, profile });
        }
    }
    let (lambda, dual_value) = best.expect("grid is non-empty");
    let primal = best_feasible(m, &candidates)?;
    Ok(DualSolution { lambda, dual_value, primal })
}

/// Feasible interval of `theta` for `theta * a + (1 - theta) * b <= d`.
fn feasible_theta(a: &[f64], b: &[f64], d: &[f64]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for ((&ca, &cb), &dk) in a.iter().zip(b).zip(d) {
        // cb + theta (ca - cb) <= dk
        let slope = ca - cb;
        let room = dk - cb;
        if slope.abs() < 1e-15 {
            if room < 0.0 {
                return None;
            }
        } else if slope > 0.0 {
            hi = hi.min(room / slope);
        } else {
            lo = lo.max(room / slope);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn best_feasible(m: &TabularCMDP, cands: &[Candidate]) -> Result<Option<PrimalPoint>> {
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    let mut offer = |reward: f64, x: Vec<f64>, mixed: bool| {
        if best.as_ref().is_none_or(|(r, _, _)| reward > *r + 1e-15) {
            best = Some((reward, x, mixed));
        }
    };
    for c in cands {
        if c.profile.feasible(m, 0.0) {
            offer(c.profile.reward, c.x.clone(), false);
        }
    }
    for (i, a) in cands.iter().enumerate() {
        for b in &cands[i + 1..] {
            let Some((lo, hi)) = feasible_theta(&a.profile.costs, &b.profile.costs, m.thresholds()) else {
                continue;
            };
            for theta in [lo, hi] {
                let x: Vec<f64> = a.x.iter().zip(&b.x).map(|(p, q)| theta * p + (1.0 - theta) * q).collect();
                let reward = theta * a.profile.reward + (1.0 - theta) * b.profile.reward;
                offer(reward, x, theta > 0.0 && theta < 1.0);
            }
        }
    }
    best.map(|(_, x, mixed)| {
        let policy = TabularPolicy::from_occupancy(m.states(), m.actions(), &x)?;
        let profile = ReturnProfile::from_occupancy(m, &x);
        Ok(PrimalPoint { policy, profile, mixed })
    })
    .transpose()
}
