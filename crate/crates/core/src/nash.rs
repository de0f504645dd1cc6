//! Monte Carlo checks that truthful grading is an equilibrium.
//!
//! Users `1..=n+1` hold unbiased, uncorrelated private estimates `y_i` of a
//! paper's quality with common variance `v`. Truthful users who see earlier
//! ratings report the running mean `x_i = (y_1 + ... + y_i) / i`. If user `n`
//! shifts its report by `Δ`, its expected accuracy loss against the next
//! truthful rating is `v / (n(n+1)) + Δ² / (n+1)²`, minimised at `Δ = 0`.
//!
//! Grades here are unbounded reals; no clamping to `[0, M]` is applied.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::incentive::{quadratic_loss, IncentiveParams};

/// Trials per independently seeded partition.
const CHUNK: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationExperiment {
    pub variance: f64,
    pub n: usize,
    pub delta: f64,
    pub trials: u64,
    pub seed: u64,
}

impl DeviationExperiment {
    fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(invalid("variance", "must be finite and >= 0"));
        }
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if !self.delta.is_finite() {
            return Err(invalid("delta", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// `E[(x_n - x_{n+1})²] = v / (n(n+1)) + Δ² / (n+1)²`.
pub fn analytic_deviation_loss(variance: f64, n: usize, delta: f64) -> f64 {
    let n = n as f64;
    variance / (n * (n + 1.0)) + delta * delta / ((n + 1.0) * (n + 1.0))
}

#[derive(Clone, Copy, Default)]
struct Moments {
    count: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(self, other: Moments) -> Moments {
        Moments {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }

    fn estimate(&self) -> MonteCarloEstimate {
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = if self.count > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        MonteCarloEstimate {
            estimate: mean,
            std_error: (var / n).sqrt(),
        }
    }
}

/// Splits `trials` into fixed-size partitions, each with its own generator
/// derived from `seed`, and merges the per-partition moments in order.
fn partitioned<F>(trials: u64, seed: u64, per_trial: F) -> MonteCarloEstimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let len = CHUNK.min(trials - c * CHUNK);
            let mut m = Moments::default();
            for _ in 0..len {
                m.push(per_trial(&mut rng));
            }
            m
        })
        .collect();
    parts
        .into_iter()
        .fold(Moments::default(), Moments::merge)
        .estimate()
}

fn draw(rng: &mut ChaCha8Rng, q_true: f64, sd: f64) -> f64 {
    let e: f64 = StandardNormal.sample(rng);
    q_true + sd * e
}

/// Monte Carlo estimate of `E[(x_n - x_{n+1})²]` when user `n` deviates by `Δ`
/// and everyone else reports the running mean of the private estimates.
pub fn simulate_deviation_loss(exp: &DeviationExperiment, q_true: f64) -> Result<MonteCarloEstimate> {
    exp.validate()?;
    let sd = exp.variance.sqrt();
    let n = exp.n;
    Ok(partitioned(exp.trials, exp.seed, |rng| {
        let mut x = 0.0;
        for i in 1..=n {
            let y = draw(rng, q_true, sd);
            x = x * (i - 1) as f64 / i as f64 + y / i as f64;
        }
        let x_n = x + exp.delta;
        let y_next = draw(rng, q_true, sd);
        let x_next = n as f64 * x_n / (n + 1) as f64 + y_next / (n + 1) as f64;
        quadratic_loss(x_n, x_next)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub delta: f64,
    pub simulated: f64,
    pub analytic: f64,
    pub std_error: f64,
}

impl GridRow {
    /// Whether the simulated value lies within `k` standard errors of the formula.
    pub fn within(&self, k: f64) -> bool {
        (self.simulated - self.analytic).abs() <= k * self.std_error
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    pub variance: f64,
    pub n: usize,
    pub rows: Vec<GridRow>,
}

impl GridCheck {
    /// True when the `Δ = 0` row has the smallest simulated loss.
    pub fn minimum_at_zero(&self) -> bool {
        let zero = self
            .rows
            .iter()
            .find(|r| r.delta == 0.0)
            .map(|r| r.simulated)
            .unwrap_or(f64::INFINITY);
        self.rows.iter().all(|r| r.delta == 0.0 || zero < r.simulated)
    }

    pub fn all_within(&self, k: f64) -> bool {
        self.rows.iter().all(|r| r.within(k))
    }
}

/// Simulates every `Δ` of the grid with common random numbers (the same seed
/// per row), so the rows differ only by the deviation.
pub fn truthfulness_grid_check(
    variance: f64,
    n: usize,
    delta_grid: &[f64],
    trials: u64,
    seed: u64,
) -> Result<GridCheck> {
    if !delta_grid.contains(&0.0) {
        return Err(invalid("delta_grid", "must contain 0"));
    }
    let rows = delta_grid
        .iter()
        .map(|&delta| {
            let exp = DeviationExperiment {
                variance,
                n,
                delta,
                trials,
                seed,
            };
            let mc = simulate_deviation_loss(&exp, 0.0)?;
            Ok(GridRow {
                delta,
                simulated: mc.estimate,
                analytic: analytic_deviation_loss(variance, n, delta),
                std_error: mc.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridCheck { variance, n, rows })
}

/// Result of the no-access setting: a reviewer grades blind, later reviewers
/// report their own estimates, and the reviewer's rating is compared with the
/// mean of the `future` ratings that follow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlindDeviation {
    pub delta: f64,
    pub accuracy_loss: MonteCarloEstimate,
    /// Expected accuracy factor `E[f(θ)]`.
    pub accuracy_factor: MonteCarloEstimate,
}

/// Expected accuracy loss is `v + Δ² + v / future` in this setting.
pub fn blind_accuracy_loss(variance: f64, future: usize, delta: f64) -> f64 {
    variance + delta * delta + variance / future as f64
}

pub fn simulate_blind_deviation(exp: &DeviationExperiment, inc: &IncentiveParams) -> Result<BlindDeviation> {
    exp.validate()?;
    let sd = exp.variance.sqrt();
    let future = exp.n;
    let theta = |rng: &mut ChaCha8Rng| {
        let own = draw(rng, 0.0, sd) + exp.delta;
        let later: f64 = (0..future).map(|_| draw(rng, 0.0, sd)).sum::<f64>() / future as f64;
        quadratic_loss(own, later)
    };
    Ok(BlindDeviation {
        delta: exp.delta,
        accuracy_loss: partitioned(exp.trials, exp.seed, theta),
        accuracy_factor: partitioned(exp.trials, exp.seed, |rng| inc.accuracy_factor(theta(rng))),
    })
}
