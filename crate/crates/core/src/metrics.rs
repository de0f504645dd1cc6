//! Performance measures of a simulation run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::incentive::quadratic_loss;
use crate::sim::{SimTrace, World, TABLE_CHECKPOINTS};

/// Σ over papers of `(current_rating - q_true)²`, recomputed from the histories.
pub fn global_loss(world: &World) -> f64 {
    world
        .papers()
        .iter()
        .map(|p| quadratic_loss(p.history.current_rating(), p.truth.q_true))
        .sum()
}

/// Each snapshot's global loss divided by the round-0 loss.
pub fn relative_global_loss(trace: &SimTrace) -> Result<Vec<(u64, f64)>> {
    let initial = trace.initial().ok_or(Error::DegenerateLoss)?.global_loss;
    if initial.is_nan() || initial <= 0.0 {
        return Err(Error::DegenerateLoss);
    }
    Ok(trace
        .snapshots
        .iter()
        .map(|s| (s.round, s.global_loss / initial))
        .collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Product-moment correlation; `None` for fewer than two points or a constant series.
///
/// # Panics
///
/// If the series have different lengths.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "correlated series must have equal length");
    if xs.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties sharing the average of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Rank correlation: Pearson on average-tied ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "correlated series must have equal length");
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Competence per user: `1/σ^t`, or `σ^t` itself when `inverse` is false.
pub fn competence_series(typical_errors: &[f64], inverse: bool) -> Vec<f64> {
    if inverse {
        typical_errors.iter().map(|s| 1.0 / s).collect()
    } else {
        typical_errors.to_vec()
    }
}

/// Mean over one run's reviews of `σ_chosen / σ^t`; `None` without reviews.
pub fn relative_error_of(trace: &SimTrace) -> Option<f64> {
    if trace.reviews.is_empty() {
        return None;
    }
    let total: f64 = trace
        .reviews
        .iter()
        .map(|r| r.sigma / trace.typical_errors[r.user as usize])
        .sum();
    Some(total / trace.reviews.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub stddev: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_and_stddev(xs: &[f64]) -> Option<MeanStd> {
    if xs.is_empty() {
        return None;
    }
    let m = mean(xs);
    let stddev = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(MeanStd { mean: m, stddev })
}

/// Relative error averaged over repetitions, with its spread across repetitions.
pub fn relative_error(traces: &[SimTrace]) -> Option<MeanStd> {
    let per_rep: Vec<f64> = traces.iter().filter_map(relative_error_of).collect();
    mean_and_stddev(&per_rep)
}

pub const BIN_LABELS: [&str; 13] = [
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11-20", "21+",
];

/// Papers per review-count bin: `0..=10` individually, then `11-20` and `21+`.
pub fn histogram_from_counts(counts: &[u32]) -> [u32; 13] {
    let mut bins = [0u32; 13];
    for &c in counts {
        let bin = match c {
            0..=10 => c as usize,
            11..=20 => 11,
            _ => 12,
        };
        bins[bin] += 1;
    }
    bins
}

pub fn grade_count_histogram(world: &World) -> [u32; 13] {
    histogram_from_counts(&world.review_counts())
}

/// Round at which the summary loss is read: the first table checkpoint, or the
/// last round for shorter runs.
pub fn loss_checkpoint(rounds: u64) -> u64 {
    TABLE_CHECKPOINTS[0].min(rounds)
}

/// Per-repetition summary numbers, the raw material of [`SummaryReport`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSummary {
    pub seed: u64,
    pub relative_loss: f64,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub relative_error: Option<f64>,
}

impl RepetitionSummary {
    pub fn from_trace(trace: &SimTrace, competence_inverse: bool) -> Result<Self> {
        let last = trace.last().ok_or(Error::DegenerateLoss)?;
        let at = loss_checkpoint(last.round);
        let relative_loss = relative_global_loss(trace)?
            .into_iter()
            .find(|(round, _)| *round == at)
            .map(|(_, l)| l)
            .ok_or(Error::DegenerateLoss)?;
        let competence = competence_series(&trace.typical_errors, competence_inverse);
        Ok(Self {
            seed: trace.seed,
            relative_loss,
            pearson: pearson(&competence, &last.reputations),
            spearman: spearman(&competence, &last.reputations),
            relative_error: relative_error_of(trace),
        })
    }
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub user_model: String,
    pub policy: String,
    pub relative_loss: f64,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub relative_error_mean: Option<f64>,
    pub relative_error_stddev: Option<f64>,
}

impl SummaryReport {
    pub fn from_repetitions(user_model: &str, policy: &str, reps: &[RepetitionSummary]) -> Self {
        let avg = |xs: Vec<f64>| mean_and_stddev(&xs).map(|m| m.mean);
        let rel_err = mean_and_stddev(&reps.iter().filter_map(|r| r.relative_error).collect::<Vec<_>>());
        Self {
            user_model: user_model.to_string(),
            policy: policy.to_string(),
            relative_loss: avg(reps.iter().map(|r| r.relative_loss).collect()).unwrap_or(f64::NAN),
            pearson: avg(reps.iter().filter_map(|r| r.pearson).collect()),
            spearman: avg(reps.iter().filter_map(|r| r.spearman).collect()),
            relative_error_mean: rel_err.map(|m| m.mean),
            relative_error_stddev: rel_err.map(|m| m.stddev),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{Belief, PaperGroundTruth, UserState};
    use crate::sim::{ReviewEvent, Snapshot};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn world(truths: &[f64]) -> World {
        let papers = truths.iter().map(|&q_true| PaperGroundTruth { q_true }).collect();
        let user = UserState {
            typical_error: 1.0,
            beliefs: (0..truths.len() as u32)
                .map(|p| (p, Belief { z: 5.0, sigma: 1.0 }))
                .collect(),
            reputation: 0.0,
            reviewed: BTreeSet::new(),
        };
        World::new(papers, vec![user], 0.0, 10.0, false).unwrap()
    }

    fn trace_with_losses(losses: &[f64]) -> SimTrace {
        SimTrace {
            seed: 0,
            typical_errors: vec![1.0],
            snapshots: losses
                .iter()
                .enumerate()
                .map(|(k, &global_loss)| Snapshot {
                    round: k as u64 * 100,
                    global_loss,
                    reputations: vec![0.0],
                    review_counts: vec![0],
                })
                .collect(),
            reviews: vec![],
            skips: 0,
        }
    }

    #[test]
    fn global_loss_examples() {
        let w = world(&[3.0, 4.0]);
        assert_eq!(global_loss(&w), 25.0);
        assert_eq!(global_loss(&world(&[0.0, 0.0])), 0.0);
    }

    #[test]
    fn global_loss_with_estimates() {
        // estimates {3, 7} against truths {5, 5}
        let papers = vec![PaperGroundTruth { q_true: 5.0 }; 2];
        let users = (0..3)
            .map(|_| UserState {
                typical_error: 1.0,
                beliefs: vec![],
                reputation: 0.0,
                reviewed: BTreeSet::new(),
            })
            .collect();
        let mut w = World::new(papers, users, 0.0, 10.0, false).unwrap();
        w.submit(0, 0, 6.0).unwrap();
        for (user, grade) in [(0, 10.0), (1, 10.0), (2, 8.0)] {
            w.submit(user, 1, grade).unwrap();
        }
        assert_eq!(w.papers()[0].history.current_rating(), 3.0);
        assert_eq!(w.papers()[1].history.current_rating(), 7.0);
        assert_eq!(global_loss(&w), 8.0);
        assert!(w.submit(0, 1, 5.0).is_err());
    }

    #[test]
    fn relative_loss_series() {
        let t = trace_with_losses(&[10.0, 5.0, 0.0]);
        let rel = relative_global_loss(&t).unwrap();
        assert_eq!(rel, vec![(0, 1.0), (100, 0.5), (200, 0.0)]);
        assert!(matches!(
            relative_global_loss(&trace_with_losses(&[0.0, 0.0])),
            Err(Error::DegenerateLoss)
        ));
    }

    #[test]
    fn correlation_examples() {
        let xs = [1.0, 2.0, 3.0, 4.5, 7.0];
        let lin: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let cube: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        assert!((pearson(&xs, &lin).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &cube).unwrap() - 1.0).abs() < 1e-12);
        assert!(pearson(&xs, &cube).unwrap() < 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), None);
        assert_eq!(pearson(&[1.0], &[3.0]), None);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn competence_examples() {
        assert_eq!(competence_series(&[0.5], true), vec![2.0]);
        assert_eq!(competence_series(&[1.0, 2.0], true), vec![1.0, 0.5]);
        let eq = competence_series(&[1.3, 1.3], true);
        assert_eq!(eq[0], eq[1]);
        assert_eq!(competence_series(&[1.0, 2.0], false), vec![1.0, 2.0]);
    }

    fn review(user: u32, sigma: f64) -> ReviewEvent {
        ReviewEvent {
            round: 0,
            user,
            paper: 0,
            grade: 5.0,
            sigma,
        }
    }

    #[test]
    fn relative_error_values() {
        let mut t = trace_with_losses(&[1.0]);
        t.typical_errors = vec![1.0, 2.0];
        t.reviews = vec![review(0, 1.0), review(1, 2.0)];
        assert_eq!(relative_error_of(&t), Some(1.0));
        t.reviews = vec![review(0, 0.5), review(1, 1.5)];
        assert_eq!(relative_error_of(&t), Some(0.625));

        let mut u = t.clone();
        u.reviews = vec![review(0, 1.0)];
        let rel = relative_error(&[t, u]).unwrap();
        assert!((rel.mean - 0.8125).abs() < 1e-15);
        // sample sd of {0.625, 1.0}
        assert!((rel.stddev - 0.375 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn histogram_bins() {
        assert_eq!(histogram_from_counts(&[0, 0, 0])[0], 3);
        let bins = histogram_from_counts(&[15, 0, 10, 11, 20, 21, 300]);
        assert_eq!(bins[11], 3);
        assert_eq!(bins[12], 2);
        assert_eq!(bins[10], 1);
        assert_eq!(bins.iter().sum::<u32>(), 7);
        assert_eq!(grade_count_histogram(&world(&[1.0, 2.0]))[0], 2);
    }

    proptest! {
        #[test]
        fn pearson_of_affine_map(xs in prop::collection::vec(-100.0f64..100.0, 3..40), a in 0.1f64..10.0, b in -10.0f64..10.0, flip in any::<bool>()) {
            prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
            let a = if flip { -a } else { a };
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let r = pearson(&xs, &ys).unwrap();
            prop_assert!((r - a.signum()).abs() < 1e-12);
        }

        #[test]
        fn spearman_ignores_monotone_transforms(
            pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40),
        ) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let base = spearman(&xs, &ys);
            let tx: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
            let ty: Vec<f64> = ys.iter().map(|y| -(y * y * y)).collect();
            match (base, spearman(&tx, &ty)) {
                (Some(a), Some(b)) => prop_assert!((a + b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
            }
        }

        #[test]
        fn correlations_bounded(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40)) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            for r in [pearson(&xs, &ys), spearman(&xs, &ys)].into_iter().flatten() {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn histogram_sums_to_paper_count(counts in prop::collection::vec(0u32..60, 0..200)) {
            prop_assert_eq!(histogram_from_counts(&counts).iter().sum::<u32>() as usize, counts.len());
        }
    }
}
