//! Simulated population: ground truth, user competences and private beliefs,
//! plus the two user models that turn a belief and a paper's visible state
//! into an estimated reputation boost and a grade.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::incentive::{quadratic_loss, IncentiveParams};

/// Smallest per-paper error a sampled belief may carry.
pub const MIN_ERROR: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub num_users: usize,
    pub num_papers: usize,
    pub papers_per_user: usize,
    pub q_true_mean: f64,
    pub q_true_stddev: f64,
    /// Population mean of the users' typical errors (σ̄).
    pub mean_error: f64,
    pub typical_error_low: f64,
    pub typical_error_high: f64,
    /// Relative half-width of the per-paper error around a user's typical error.
    pub paper_error_spread: f64,
    pub error_cap: f64,
    pub max_grade: f64,
    pub default_rating: f64,
}

impl Default for PopulationParams {
    fn default() -> Self {
        Self {
            num_users: 1000,
            num_papers: 1000,
            papers_per_user: 100,
            q_true_mean: 5.0,
            q_true_stddev: 1.5,
            mean_error: 3.0,
            typical_error_low: 2.0,
            typical_error_high: 4.0,
            paper_error_spread: 0.5,
            error_cap: 5.0,
            max_grade: 10.0,
            default_rating: 0.0,
        }
    }
}

impl PopulationParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(invalid("num_users", "must be at least 1"));
        }
        if self.num_papers == 0 {
            return Err(invalid("num_papers", "must be at least 1"));
        }
        if self.papers_per_user == 0 || self.papers_per_user > self.num_papers {
            return Err(invalid(
                "papers_per_user",
                format!("must lie in 1..={}", self.num_papers),
            ));
        }
        if !(self.max_grade > 0.0 && self.max_grade.is_finite()) {
            return Err(invalid("max_grade", "must be > 0"));
        }
        if !(0.0..=self.max_grade).contains(&self.default_rating) {
            return Err(invalid("default_rating", "must lie in [0, max_grade]"));
        }
        if !(0.0..=self.max_grade).contains(&self.q_true_mean) {
            return Err(invalid("q_true_mean", "must lie in [0, max_grade]"));
        }
        if !(self.q_true_stddev >= 0.0 && self.q_true_stddev.is_finite()) {
            return Err(invalid("q_true_stddev", "must be >= 0"));
        }
        if self.typical_error_low.is_nan() || self.typical_error_low <= 0.0 {
            return Err(invalid("typical_error_low", "must be > 0"));
        }
        if !(self.typical_error_high >= self.typical_error_low && self.typical_error_high.is_finite()) {
            return Err(invalid("typical_error_high", "must be >= typical_error_low"));
        }
        let centre = 0.5 * (self.typical_error_low + self.typical_error_high);
        if self.mean_error.is_nan()
            || self.mean_error <= 0.0
            || (centre - self.mean_error).abs() > 1e-9 * self.mean_error
        {
            return Err(invalid(
                "mean_error",
                format!("must equal the midpoint of [typical_error_low, typical_error_high] = {centre}"),
            ));
        }
        if !(0.0..1.0).contains(&self.paper_error_spread) {
            return Err(invalid("paper_error_spread", "must lie in [0, 1)"));
        }
        if !(self.error_cap >= MIN_ERROR && self.error_cap <= self.max_grade / 2.0) {
            return Err(invalid(
                "error_cap",
                format!("must lie in [{MIN_ERROR}, max_grade / 2]"),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperGroundTruth {
    pub q_true: f64,
}

/// A user's private view of one paper: perceived quality and its expected error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub z: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub typical_error: f64,
    /// Beliefs keyed by paper id, sorted ascending by id.
    pub beliefs: Vec<(u32, Belief)>,
    pub reputation: f64,
    pub reviewed: BTreeSet<u32>,
}

impl UserState {
    pub fn belief(&self, paper: u32) -> Option<&Belief> {
        self.beliefs
            .binary_search_by_key(&paper, |(id, _)| *id)
            .ok()
            .map(|k| &self.beliefs[k].1)
    }

    /// Papers the user knows about and has not reviewed yet, ascending by id.
    pub fn candidates(&self) -> impl Iterator<Item = (u32, &Belief)> {
        self.beliefs
            .iter()
            .filter(|(id, _)| !self.reviewed.contains(id))
            .map(|(id, b)| (*id, b))
    }
}

pub fn sample_population(
    params: &PopulationParams,
    seed: u64,
) -> Result<(Vec<PaperGroundTruth>, Vec<UserState>)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = params.max_grade;

    let quality = Normal::new(params.q_true_mean, params.q_true_stddev)
        .map_err(|e| invalid("q_true_stddev", e.to_string()))?;
    let papers: Vec<PaperGroundTruth> = (0..params.num_papers)
        .map(|_| PaperGroundTruth {
            q_true: quality.sample(&mut rng).clamp(0.0, max),
        })
        .collect();

    let mut users = Vec::with_capacity(params.num_users);
    for _ in 0..params.num_users {
        let typical_error = rng.gen_range(params.typical_error_low..=params.typical_error_high);
        let lo = typical_error * (1.0 - params.paper_error_spread);
        let hi = typical_error * (1.0 + params.paper_error_spread);

        let mut known: Vec<u32> = index::sample(&mut rng, params.num_papers, params.papers_per_user)
            .into_iter()
            .map(|p| p as u32)
            .collect();
        known.sort_unstable();

        let beliefs = known
            .into_iter()
            .map(|paper| {
                let sigma = rng.gen_range(lo..=hi).clamp(MIN_ERROR, params.error_cap);
                let q_true = papers[paper as usize].q_true;
                // sigma >= MIN_ERROR > 0, so the distribution is always valid
                let z = Normal::new(q_true, sigma)
                    .expect("positive finite std dev")
                    .sample(&mut rng)
                    .clamp(0.0, max);
                (paper, Belief { z, sigma })
            })
            .collect();

        users.push(UserState {
            typical_error,
            beliefs,
            reputation: 0.0,
            reviewed: BTreeSet::new(),
        });
    }
    Ok((papers, users))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserModel {
    /// Grades with the private belief, ignoring previous reviews.
    Model1,
    /// Combines the private belief with previous reviews by Bayesian inference.
    Model2,
}

impl UserModel {
    pub fn label(self) -> &'static str {
        match self {
            UserModel::Model1 => "model1",
            UserModel::Model2 => "model2",
        }
    }
}

impl std::str::FromStr for UserModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "model1" | "1" => Ok(UserModel::Model1),
            "model2" | "2" => Ok(UserModel::Model2),
            other => Err(format!("unknown user model `{other}` (expected model1 | model2)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub q_hat: f64,
    pub sigma_hat: f64,
}

/// Conjugate-normal update of the prior `N(z, σ)` with an observed mean of
/// `n` reviews, each assumed to carry error `mean_error`.
///
/// Returns `None` for `n = 0`: there is no observation and the prior stands.
/// The posterior mean is left unclamped.
pub fn posterior_update(belief: &Belief, observation: f64, n: usize, mean_error: f64) -> Option<Posterior> {
    if n == 0 {
        return None;
    }
    let prior_precision = 1.0 / (belief.sigma * belief.sigma);
    let obs_precision = n as f64 / (mean_error * mean_error);
    let precision = prior_precision + obs_precision;
    let q_hat = if obs_precision == 0.0 {
        belief.z
    } else {
        (belief.z * prior_precision + observation * obs_precision) / precision
    };
    Some(Posterior {
        q_hat,
        sigma_hat: precision.recip().sqrt(),
    })
}

/// What a user expects from reviewing one paper, under either user model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoostEstimate {
    /// Expected informativeness `(q_past - estimate)²`.
    pub informativeness: f64,
    /// Expected accuracy loss (variance of the user's estimate).
    pub accuracy_loss: f64,
    pub boost: f64,
    pub grade: f64,
}

fn estimate(q_past: f64, quality: f64, sigma: f64, inc: &IncentiveParams) -> BoostEstimate {
    let informativeness = quadratic_loss(q_past, quality);
    let accuracy_loss = sigma * sigma;
    let factor = inc.accuracy_factor(accuracy_loss.clamp(0.0, inc.max_loss()));
    BoostEstimate {
        informativeness,
        accuracy_loss,
        boost: informativeness * factor,
        grade: quality.clamp(0.0, inc.max_grade()),
    }
}

/// First user model: boost `(q_past - z)² · f(σ²)`, grade `z`.
pub fn model1_boost_and_grade(belief: &Belief, q_past: f64, inc: &IncentiveParams) -> BoostEstimate {
    estimate(q_past, belief.z, belief.sigma, inc)
}

/// Second user model: boost `(q_past - q̂)² · f(σ̂²)`, grade `q̂` clamped to `[0, M]`.
///
/// `q_past` is the mechanism's informativeness baseline (average including
/// the default rating); `observation` is the mean the user conditions on.
pub fn model2_boost_and_grade(
    belief: &Belief,
    q_past: f64,
    observation: f64,
    n: usize,
    mean_error: f64,
    inc: &IncentiveParams,
) -> BoostEstimate {
    match posterior_update(belief, observation, n, mean_error) {
        Some(post) => estimate(q_past, post.q_hat, post.sigma_hat, inc),
        None => estimate(q_past, belief.z, belief.sigma, inc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inc(alpha: f64) -> IncentiveParams {
        IncentiveParams::sigmoid(alpha, 10.0).unwrap()
    }

    fn small() -> PopulationParams {
        PopulationParams {
            num_users: 50,
            num_papers: 80,
            papers_per_user: 20,
            ..PopulationParams::default()
        }
    }

    #[test]
    fn degenerate_quality_distribution() {
        let params = PopulationParams {
            q_true_stddev: 0.0,
            ..small()
        };
        let (papers, _) = sample_population(&params, 3).unwrap();
        assert!(papers.iter().all(|p| p.q_true == 5.0));
    }

    #[test]
    fn zero_spread_pins_paper_errors() {
        let params = PopulationParams {
            paper_error_spread: 0.0,
            ..small()
        };
        let (_, users) = sample_population(&params, 4).unwrap();
        for u in &users {
            assert!(u.beliefs.iter().all(|(_, b)| b.sigma == u.typical_error));
        }
    }

    #[test]
    fn population_shape_and_ranges() {
        let params = small();
        let (papers, users) = sample_population(&params, 9).unwrap();
        assert_eq!(papers.len(), 80);
        assert_eq!(users.len(), 50);
        for u in &users {
            assert_eq!(u.beliefs.len(), 20);
            assert!(u.beliefs.windows(2).all(|w| w[0].0 < w[1].0));
            for (id, b) in &u.beliefs {
                assert!((*id as usize) < 80);
                assert!((0.0..=10.0).contains(&b.z));
                assert!(b.sigma >= MIN_ERROR && b.sigma <= params.error_cap);
            }
            assert!((2.0..=4.0).contains(&u.typical_error));
        }
    }

    #[test]
    fn same_seed_same_population() {
        let a = sample_population(&small(), 17).unwrap();
        let b = sample_population(&small(), 17).unwrap();
        assert_eq!(a, b);
        let c = sample_population(&small(), 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mean_paper_error_matches_population_mean() {
        let params = PopulationParams::default();
        let (_, users) = sample_population(&params, 11).unwrap();
        let sigmas: Vec<f64> = users
            .iter()
            .flat_map(|u| u.beliefs.iter().map(|(_, b)| b.sigma))
            .collect();
        let n = sigmas.len() as f64;
        let mean = sigmas.iter().sum::<f64>() / n;
        // Per-user draws share σ^t, so the standard error is driven by the
        // number of users, not the number of beliefs.
        let per_user: Vec<f64> = users
            .iter()
            .map(|u| u.beliefs.iter().map(|(_, b)| b.sigma).sum::<f64>() / u.beliefs.len() as f64)
            .collect();
        let m = per_user.len() as f64;
        let var = per_user.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let se = (var / m).sqrt();
        assert!((mean - params.mean_error).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn invalid_population_rejected() {
        let bad = PopulationParams {
            papers_per_user: 2000,
            ..PopulationParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = PopulationParams {
            mean_error: 2.0,
            ..PopulationParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = PopulationParams {
            error_cap: 6.0,
            ..PopulationParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn model1_examples() {
        let b = Belief { z: 5.0, sigma: 1.0 };
        assert_eq!(model1_boost_and_grade(&b, 5.0, &inc(1.0)).boost, 0.0);

        let tiny = Belief { z: 5.0, sigma: 1e-9 };
        assert!((model1_boost_and_grade(&tiny, 0.0, &inc(1.0)).boost - 25.0).abs() < 1e-12);

        let wide = Belief { z: 5.0, sigma: 5.0 };
        let est = model1_boost_and_grade(&wide, 0.0, &inc(1.0));
        // mpmath: 25 * f_{1,10}(25)
        assert!((est.boost - 23.375_770_771_783_398).abs() < 1e-11);
        assert_eq!(est.grade, 5.0);
    }

    #[test]
    fn posterior_examples() {
        let b = Belief { z: 4.0, sigma: 2.0 };
        let p = posterior_update(&b, 6.0, 4, 2.0).unwrap();
        // precision 1/4 + 4/4 = 1.25; mean (4/4 + 6) / 1.25
        assert!((p.q_hat - 5.6).abs() < 1e-12);
        assert!((p.sigma_hat * p.sigma_hat - 0.8).abs() < 1e-12);

        let flat = posterior_update(&b, 9.0, 10, f64::INFINITY).unwrap();
        assert_eq!(flat.q_hat, 4.0);
        assert_eq!(flat.sigma_hat, 2.0);

        let agree = posterior_update(&b, 4.0, 7, 0.3).unwrap();
        assert!((agree.q_hat - 4.0).abs() < 1e-12);

        assert!(posterior_update(&b, 6.0, 0, 2.0).is_none());
    }

    #[test]
    fn model2_examples() {
        let b = Belief { z: 4.0, sigma: 2.0 };
        let est = model2_boost_and_grade(&b, 6.0, 6.0, 4, 2.0, &inc(0.1));
        // mpmath: 0.16 * f_{0.1,10}(0.8)
        assert!((est.boost - 0.159_999_285_684_265).abs() < 1e-12);
        assert!((est.grade - 5.6).abs() < 1e-12);

        let huge = model2_boost_and_grade(&b, 6.0, 6.0, 1_000_000_000, 2.0, &inc(0.1));
        assert!(huge.boost < 1e-12);
        assert!((huge.grade - 6.0).abs() < 1e-6);
    }

    #[test]
    fn user_model_parses() {
        assert_eq!("model1".parse::<UserModel>().unwrap(), UserModel::Model1);
        assert_eq!("2".parse::<UserModel>().unwrap(), UserModel::Model2);
        assert!("model3".parse::<UserModel>().is_err());
    }

    proptest! {
        #[test]
        fn model2_without_reviews_is_model1(
            z in 0.0f64..=10.0, sigma in 0.05f64..5.0, q_past in 0.0f64..=10.0,
            obs in 0.0f64..=10.0, mean_error in 0.1f64..3.0, alpha in 0.05f64..5.0,
        ) {
            let b = Belief { z, sigma };
            let p = inc(alpha);
            prop_assert_eq!(
                model2_boost_and_grade(&b, q_past, obs, 0, mean_error, &p),
                model1_boost_and_grade(&b, q_past, &p)
            );
        }

        #[test]
        fn posterior_narrows(
            z in 0.0f64..=10.0, sigma in 0.05f64..5.0, obs in 0.0f64..=10.0,
            n in 1usize..500, mean_error in 0.1f64..3.0,
        ) {
            let p = posterior_update(&Belief { z, sigma }, obs, n, mean_error).unwrap();
            prop_assert!(p.sigma_hat < sigma);
            let (lo, hi) = if z <= obs { (z, obs) } else { (obs, z) };
            prop_assert!(p.q_hat >= lo - 1e-9 && p.q_hat <= hi + 1e-9);
        }

        #[test]
        fn boosts_nonnegative_and_grades_in_range(
            z in 0.0f64..=10.0, sigma in 0.05f64..5.0, q_past in 0.0f64..=10.0,
            obs in 0.0f64..=10.0, n in 0usize..50, mean_error in 0.1f64..3.0, alpha in 0.05f64..5.0,
        ) {
            let b = Belief { z, sigma };
            let p = inc(alpha);
            for est in [
                model1_boost_and_grade(&b, q_past, &p),
                model2_boost_and_grade(&b, q_past, obs, n, mean_error, &p),
            ] {
                prop_assert!(est.boost >= 0.0);
                prop_assert!((0.0..=10.0).contains(&est.grade));
            }
        }
    }
}
