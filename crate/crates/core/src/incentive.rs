//! The review bonus: informativeness times an accuracy factor.
//!
//! A paper's ratings form a chronological sequence `x_0, x_1, ..., x_n`, where
//! `x_0` is the system default. For a user rating `x_i` the mechanism compares
//! the average of everything before it (`q_past`) with the average of
//! everything after it (`q_future`):
//!
//! * informativeness `δ_i = (q_past - q_future)²`
//! * accuracy loss `θ_i = (x_i - q_future)²`
//! * bonus `b_i = δ_i · f(θ_i)` with `f` a decreasing map `[0, M²] → [0, 1]`.
//!
//! A rating with nothing after it has no `q_future`; its bonus is pending and
//! counts as zero until the history grows.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Map inputs within this fraction of `M²` from an endpoint snap to that endpoint.
const ENDPOINT_EPS: f64 = 1e-12;

pub fn quadratic_loss(a: f64, b: f64) -> f64 {
    let d = a - b;
    d * d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMap {
    Sigmoid,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncentiveParams {
    alpha: f64,
    max_grade: f64,
    accuracy_map: AccuracyMap,
}

impl IncentiveParams {
    pub fn new(alpha: f64, max_grade: f64, accuracy_map: AccuracyMap) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
        }
        if !(max_grade > 0.0 && max_grade.is_finite()) {
            return Err(invalid("max_grade", format!("must be > 0, got {max_grade}")));
        }
        Ok(Self {
            alpha,
            max_grade,
            accuracy_map,
        })
    }

    pub fn sigmoid(alpha: f64, max_grade: f64) -> Result<Self> {
        Self::new(alpha, max_grade, AccuracyMap::Sigmoid)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn max_grade(&self) -> f64 {
        self.max_grade
    }

    pub fn accuracy_map(&self) -> AccuracyMap {
        self.accuracy_map
    }

    /// `M²`, the largest possible quadratic loss between two grades.
    pub fn max_loss(&self) -> f64 {
        self.max_grade * self.max_grade
    }

    /// Applies the configured accuracy map.
    pub fn accuracy_factor(&self, loss: f64) -> f64 {
        match self.accuracy_map {
            AccuracyMap::Sigmoid => accuracy_map_sigmoid(loss, self),
            AccuracyMap::Linear => accuracy_map_linear(loss, self),
        }
    }
}

/// `f^S_α(x) = 1 / (1 + exp(x / (α(M² - x)) - α(M² - x) / x))`, extended by
/// continuity to `f(0) = 1` and `f(M²) = 0`. Inputs are clamped to `[0, M²]`.
pub fn accuracy_map_sigmoid(x: f64, params: &IncentiveParams) -> f64 {
    let m2 = params.max_loss();
    let x = x.clamp(0.0, m2);
    if x <= ENDPOINT_EPS * m2 {
        return 1.0;
    }
    if x >= (1.0 - ENDPOINT_EPS) * m2 {
        return 0.0;
    }
    let rest = m2 - x;
    let exponent = x / (params.alpha * rest) - params.alpha * rest / x;
    1.0 / (1.0 + exponent.exp())
}

/// `f^lin(x) = 1 - x / M²`, inputs clamped to `[0, M²]`.
pub fn accuracy_map_linear(x: f64, params: &IncentiveParams) -> f64 {
    let m2 = params.max_loss();
    1.0 - x.clamp(0.0, m2) / m2
}

/// A single user rating inside a [`RatingHistory`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub reviewer: u32,
    pub grade: f64,
    pub round: u64,
}

/// Chronological ratings of one paper, seeded with the system default `x_0`.
///
/// Entries are 1-indexed in the accessors below to match `x_1..x_n`; the
/// default sits at position 0 and belongs to no reviewer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingHistory {
    default_rating: f64,
    max_grade: f64,
    entries: Vec<Rating>,
    sum: f64,
}

impl RatingHistory {
    pub fn new(default_rating: f64, max_grade: f64) -> Result<Self> {
        if !(max_grade > 0.0 && max_grade.is_finite()) {
            return Err(invalid("max_grade", format!("must be > 0, got {max_grade}")));
        }
        if !(0.0..=max_grade).contains(&default_rating) {
            return Err(Error::GradeOutOfRange {
                grade: default_rating,
                max_grade,
            });
        }
        Ok(Self {
            default_rating,
            max_grade,
            entries: Vec::new(),
            sum: default_rating,
        })
    }

    /// Builds a history from `(reviewer, grade)` pairs, assigning rounds 0, 1, 2, ...
    pub fn from_grades(
        default_rating: f64,
        max_grade: f64,
        ratings: impl IntoIterator<Item = (u32, f64)>,
    ) -> Result<Self> {
        let mut history = Self::new(default_rating, max_grade)?;
        for (round, (reviewer, grade)) in ratings.into_iter().enumerate() {
            history.push(reviewer, grade, round as u64)?;
        }
        Ok(history)
    }

    pub fn push(&mut self, reviewer: u32, grade: f64, round: u64) -> Result<()> {
        if !(0.0..=self.max_grade).contains(&grade) {
            return Err(Error::GradeOutOfRange {
                grade,
                max_grade: self.max_grade,
            });
        }
        if let Some(last) = self.entries.last() {
            if round <= last.round {
                return Err(Error::NonIncreasingRound {
                    round,
                    previous: last.round,
                });
            }
        }
        if self.has_reviewer(reviewer) {
            return Err(Error::DuplicateReviewer(reviewer));
        }
        self.entries.push(Rating {
            reviewer,
            grade,
            round,
        });
        self.sum += grade;
        Ok(())
    }

    pub fn default_rating(&self) -> f64 {
        self.default_rating
    }

    pub fn max_grade(&self) -> f64 {
        self.max_grade
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    /// Number of user ratings, excluding the default.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_reviewer(&self, reviewer: u32) -> bool {
        self.entries.iter().any(|r| r.reviewer == reviewer)
    }

    /// `x_i`, with `x_0` the default rating.
    pub fn grade(&self, i: usize) -> Option<f64> {
        match i {
            0 => Some(self.default_rating),
            _ => self.entries.get(i - 1).map(|r| r.grade),
        }
    }

    /// Mean of the user grades only (the default is excluded); `None` when empty.
    pub fn user_mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            None
        } else {
            Some((self.sum - self.default_rating) / self.entries.len() as f64)
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.entries.len() {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.entries.len(),
            })
        } else {
            Ok(())
        }
    }

    /// `q_past_i = avg{x_0, ..., x_{i-1}}`.
    pub fn past_average(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        let preceding = &self.entries[..i - 1];
        let sum = self.default_rating + preceding.iter().map(|r| r.grade).sum::<f64>();
        Ok(sum / i as f64)
    }

    /// `q_future_i = avg{x_{i+1}, ..., x_n}`; `None` for the last rating.
    pub fn future_average(&self, i: usize) -> Result<Option<f64>> {
        self.check_index(i)?;
        let following = &self.entries[i..];
        if following.is_empty() {
            return Ok(None);
        }
        let sum: f64 = following.iter().map(|r| r.grade).sum();
        Ok(Some(sum / following.len() as f64))
    }

    /// The displayed rating: mean of the default and all user grades.
    pub fn current_rating(&self) -> f64 {
        self.sum / (self.entries.len() + 1) as f64
    }
}

/// The components of one settled review bonus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BonusBreakdown {
    pub informativeness: f64,
    pub accuracy_loss: f64,
    pub accuracy_factor: f64,
    pub bonus: f64,
}

impl BonusBreakdown {
    fn evaluate(past: f64, own: f64, future: f64, params: &IncentiveParams) -> Self {
        let informativeness = quadratic_loss(past, future);
        let accuracy_loss = quadratic_loss(own, future).clamp(0.0, params.max_loss());
        let accuracy_factor = params.accuracy_factor(accuracy_loss);
        Self {
            informativeness,
            accuracy_loss,
            accuracy_factor,
            bonus: informativeness * accuracy_factor,
        }
    }
}

/// Bonus for the `i`-th user rating, or `None` while it is still pending.
pub fn review_bonus(
    history: &RatingHistory,
    i: usize,
    params: &IncentiveParams,
) -> Result<Option<BonusBreakdown>> {
    let past = history.past_average(i)?;
    let Some(future) = history.future_average(i)? else {
        return Ok(None);
    };
    let own = history.entries[i - 1].grade;
    Ok(Some(BonusBreakdown::evaluate(past, own, future, params)))
}

/// Bonus of every user rating in one linear pass; pending ratings get 0.
///
/// Equivalent to calling [`review_bonus`] for each index, without the
/// quadratic cost of recomputing the averages.
pub fn history_bonuses(history: &RatingHistory, params: &IncentiveParams) -> Vec<f64> {
    let grades: Vec<f64> = history.entries.iter().map(|r| r.grade).collect();
    let n = grades.len();
    let total: f64 = grades.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut before = history.default_rating;
    let mut through = 0.0;
    for (k, &grade) in grades.iter().enumerate() {
        through += grade;
        let remaining = n - k - 1;
        if remaining == 0 {
            out.push(0.0);
            break;
        }
        let past = before / (k + 1) as f64;
        let future = (total - through) / remaining as f64;
        out.push(BonusBreakdown::evaluate(past, grade, future, params).bonus);
        before += grade;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(alpha: f64) -> IncentiveParams {
        IncentiveParams::sigmoid(alpha, 10.0).unwrap()
    }

    fn hist(grades: &[f64]) -> RatingHistory {
        RatingHistory::from_grades(0.0, 10.0, grades.iter().enumerate().map(|(k, &g)| (k as u32, g))).unwrap()
    }

    #[test]
    fn quadratic_loss_examples() {
        assert_eq!(quadratic_loss(3.0, 3.0), 0.0);
        assert_eq!(quadratic_loss(0.0, 10.0), 100.0);
        assert_eq!(quadratic_loss(6.0, 4.5), 2.25);
    }

    #[test]
    fn past_and_future_averages() {
        let h = hist(&[6.0, 8.0]);
        assert_eq!(h.past_average(1).unwrap(), 0.0);
        assert_eq!(h.past_average(2).unwrap(), 3.0);
        assert_eq!(h.future_average(1).unwrap(), Some(8.0));
        assert_eq!(h.future_average(2).unwrap(), None);

        let h = hist(&[6.0, 8.0, 7.0]);
        assert!((h.past_average(3).unwrap() - 14.0 / 3.0).abs() < 1e-15);
        assert_eq!(h.future_average(1).unwrap(), Some(7.5));
    }

    #[test]
    fn averages_reject_bad_index() {
        let h = hist(&[6.0, 8.0]);
        assert!(matches!(h.past_average(0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(h.future_average(3), Err(Error::IndexOutOfRange { .. })));
        assert!(review_bonus(&h, 3, &sig(1.0)).is_err());
    }

    #[test]
    fn sigmoid_anchor_values() {
        let p = sig(1.0);
        assert_eq!(accuracy_map_sigmoid(0.0, &p), 1.0);
        assert_eq!(accuracy_map_sigmoid(100.0, &p), 0.0);
        // mpmath, 30 digits: 1 / (1 + e^(-8/3))
        assert!((accuracy_map_sigmoid(25.0, &p) - 0.935_030_830_871_336).abs() < 1e-13);
        assert!((accuracy_map_sigmoid(50.0, &p) - 0.5).abs() < 1e-15);
        // out-of-range inputs clamp
        assert_eq!(accuracy_map_sigmoid(-3.0, &p), 1.0);
        assert_eq!(accuracy_map_sigmoid(150.0, &p), 0.0);
    }

    #[test]
    fn linear_map_values() {
        let p = IncentiveParams::new(1.0, 10.0, AccuracyMap::Linear).unwrap();
        assert_eq!(accuracy_map_linear(0.0, &p), 1.0);
        assert_eq!(accuracy_map_linear(100.0, &p), 0.0);
        assert_eq!(accuracy_map_linear(25.0, &p), 0.75);
        assert_eq!(p.accuracy_factor(25.0), 0.75);
    }

    #[test]
    fn params_reject_non_positive() {
        assert!(matches!(
            IncentiveParams::sigmoid(-1.0, 10.0),
            Err(Error::InvalidParam { name: "alpha", .. })
        ));
        assert!(matches!(
            IncentiveParams::sigmoid(1.0, 0.0),
            Err(Error::InvalidParam {
                name: "max_grade",
                ..
            })
        ));
    }

    #[test]
    fn bonus_examples() {
        let h = hist(&[6.0, 6.0, 6.0]);
        let b = review_bonus(&h, 1, &sig(1.0)).unwrap().unwrap();
        assert_eq!(b.informativeness, 36.0);
        assert_eq!(b.accuracy_loss, 0.0);
        assert_eq!(b.accuracy_factor, 1.0);
        assert_eq!(b.bonus, 36.0);

        assert_eq!(review_bonus(&hist(&[6.0, 8.0]), 2, &sig(1.0)).unwrap(), None);

        let h = hist(&[4.0, 8.0, 6.0]);
        let b = review_bonus(&h, 1, &sig(0.1)).unwrap().unwrap();
        assert_eq!(b.informativeness, 49.0);
        assert_eq!(b.accuracy_loss, 9.0);
        // mpmath: 49 * f_{0.1,10}(9)
        assert!((b.bonus - 24.770_715_477_348_914).abs() < 1e-11);
    }

    #[test]
    fn current_rating_includes_default() {
        assert_eq!(hist(&[]).current_rating(), 0.0);
        assert_eq!(hist(&[6.0]).current_rating(), 3.0);
        assert_eq!(hist(&[6.0, 8.0, 7.0]).current_rating(), 5.25);
    }

    #[test]
    fn history_invariants_enforced() {
        let mut h = RatingHistory::new(0.0, 10.0).unwrap();
        h.push(1, 5.0, 3).unwrap();
        assert!(matches!(h.push(2, 5.0, 3), Err(Error::NonIncreasingRound { .. })));
        assert!(matches!(h.push(1, 5.0, 4), Err(Error::DuplicateReviewer(1))));
        assert!(matches!(h.push(2, 10.5, 4), Err(Error::GradeOutOfRange { .. })));
        assert!(matches!(
            h.push(2, f64::NAN, 4),
            Err(Error::GradeOutOfRange { .. })
        ));
        assert_eq!(h.len(), 1);
    }

    fn history_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=10.0, 0..10)
    }

    proptest! {
        #[test]
        fn sigmoid_is_monotone_and_bounded(
            alpha in 0.01f64..20.0,
            max_grade in 0.5f64..50.0,
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
        ) {
            let p = IncentiveParams::sigmoid(alpha, max_grade).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (flo, fhi) = (
                accuracy_map_sigmoid(lo * p.max_loss(), &p),
                accuracy_map_sigmoid(hi * p.max_loss(), &p),
            );
            prop_assert!((0.0..=1.0).contains(&flo));
            prop_assert!((0.0..=1.0).contains(&fhi));
            prop_assert!(flo >= fhi);
        }

        #[test]
        fn sigmoid_crosses_half_where_exponent_vanishes(
            alpha in 0.05f64..20.0,
            max_grade in 0.5f64..50.0,
        ) {
            let p = IncentiveParams::sigmoid(alpha, max_grade).unwrap();
            let mid = alpha * p.max_loss() / (1.0 + alpha);
            prop_assert!((accuracy_map_sigmoid(mid, &p) - 0.5).abs() < 1e-9);
        }

        #[test]
        fn averages_match_brute_force(grades in history_strategy(), default in 0.0f64..=10.0) {
            let h = RatingHistory::from_grades(default, 10.0, grades.iter().enumerate().map(|(k, &g)| (k as u32, g))).unwrap();
            let mut all = vec![default];
            all.extend(&grades);
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            for i in 1..=grades.len() {
                prop_assert!((h.past_average(i).unwrap() - mean(&all[..i])).abs() < 1e-12);
                let fut = h.future_average(i).unwrap();
                if i == grades.len() {
                    prop_assert!(fut.is_none());
                } else {
                    prop_assert!((fut.unwrap() - mean(&all[i + 1..])).abs() < 1e-12);
                }
            }
            prop_assert!((h.current_rating() - mean(&all)).abs() < 1e-12);
        }

        #[test]
        fn bonus_structure(grades in prop::collection::vec(0.0f64..=10.0, 2..10), replacement in 0.0f64..=10.0, alpha in 0.05f64..5.0) {
            let p = IncentiveParams::sigmoid(alpha, 10.0).unwrap();
            let h = hist(&grades);
            let fast = history_bonuses(&h, &p);
            for i in 1..grades.len() {
                let b = review_bonus(&h, i, &p).unwrap().unwrap();
                prop_assert_eq!(b.bonus, b.informativeness * b.accuracy_factor);
                prop_assert!((fast[i - 1] - b.bonus).abs() <= 1e-10 * b.bonus.max(1.0));

                // x_i enters only through θ_i
                let mut changed = grades.clone();
                changed[i - 1] = replacement;
                let b2 = review_bonus(&hist(&changed), i, &p).unwrap().unwrap();
                prop_assert_eq!(b.informativeness, b2.informativeness);

                // rating exactly at q_future collects the full informativeness
                let future = h.future_average(i).unwrap().unwrap();
                changed[i - 1] = future;
                let b3 = review_bonus(&hist(&changed), i, &p).unwrap().unwrap();
                prop_assert_eq!(b3.bonus, b3.informativeness);
            }
            prop_assert_eq!(*fast.last().unwrap(), 0.0);
        }
    }
}
