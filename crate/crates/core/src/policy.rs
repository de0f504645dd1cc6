//! Paper-selection criteria: which of its known, unreviewed papers a user picks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{
    model1_boost_and_grade, model2_boost_and_grade, Belief, BoostEstimate, UserModel, UserState,
};
use crate::incentive::{quadratic_loss, IncentiveParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Random,
    Selfish,
    Accuracy,
    Informativeness,
    Optimal,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Random,
        PolicyKind::Selfish,
        PolicyKind::Accuracy,
        PolicyKind::Informativeness,
        PolicyKind::Optimal,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Selfish => "selfish",
            PolicyKind::Accuracy => "accuracy",
            PolicyKind::Informativeness => "informativeness",
            PolicyKind::Optimal => "optimal",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| {
                format!(
                    "unknown policy `{s}` (expected random | selfish | accuracy | informativeness | optimal)"
                )
            })
    }
}

/// Publicly visible state of one paper, plus the ground truth the optimal
/// criterion is allowed to peek at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PaperView {
    /// Current displayed rating, including the default. This is also the
    /// informativeness baseline `q_past` for the next review.
    pub rating: f64,
    /// Mean the second user model conditions on.
    pub observation: f64,
    /// Number of user reviews so far.
    pub reviews: usize,
    pub q_true: f64,
}

impl PaperView {
    /// Displayed rating after one more grade is appended.
    pub fn rating_after(&self, grade: f64) -> f64 {
        let count = (self.reviews + 1) as f64;
        (self.rating * count + grade) / (count + 1.0)
    }

    /// Reduction of this paper's contribution to the global loss if `grade` is added.
    pub fn loss_decrease(&self, grade: f64) -> f64 {
        quadratic_loss(self.rating, self.q_true) - quadratic_loss(self.rating_after(grade), self.q_true)
    }
}

/// The user-model settings a choice depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelContext {
    pub user_model: UserModel,
    /// σ̄, assumed error of every previous reviewer.
    pub mean_error: f64,
}

impl ModelContext {
    pub fn estimate(&self, belief: &Belief, view: &PaperView, inc: &IncentiveParams) -> BoostEstimate {
        match self.user_model {
            UserModel::Model1 => model1_boost_and_grade(belief, view.rating, inc),
            UserModel::Model2 => model2_boost_and_grade(
                belief,
                view.rating,
                view.observation,
                view.reviews,
                self.mean_error,
                inc,
            ),
        }
    }
}

/// Picks a paper for `user`, or `None` when every known paper was already reviewed.
///
/// `views` is indexed by paper id. Deterministic criteria break ties towards
/// the lowest paper id.
pub fn choose_paper<R: Rng + ?Sized>(
    policy: PolicyKind,
    user: &UserState,
    views: &[PaperView],
    inc: &IncentiveParams,
    ctx: &ModelContext,
    rng: &mut R,
) -> Option<u32> {
    if policy == PolicyKind::Random {
        let count = user.candidates().count();
        if count == 0 {
            return None;
        }
        return user.candidates().nth(rng.gen_range(0..count)).map(|(id, _)| id);
    }

    let mut best: Option<(u32, f64)> = None;
    for (paper, belief) in user.candidates() {
        let view = &views[paper as usize];
        let est = ctx.estimate(belief, view, inc);
        // larger is better for every criterion
        let score = match policy {
            PolicyKind::Selfish => est.boost,
            PolicyKind::Accuracy => -est.accuracy_loss,
            PolicyKind::Informativeness => est.informativeness,
            PolicyKind::Optimal => view.loss_decrease(est.grade),
            PolicyKind::Random => unreachable!(),
        };
        let score = if score.is_nan() { f64::NEG_INFINITY } else { score };
        match best {
            Some((_, top)) if score <= top => {}
            _ => best = Some((paper, score)),
        }
    }
    best.map(|(paper, _)| paper)
}
