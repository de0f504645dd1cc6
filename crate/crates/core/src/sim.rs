//! Round-robin review simulation.
//!
//! Each round the next user (in index order) picks a paper with the configured
//! criterion and appends a truthful grade from its user model. Bonuses are
//! settled retroactively: every new rating changes `q_future` of all earlier
//! ratings on the paper, so reputations are recomputed from the histories.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{sample_population, PaperGroundTruth, PopulationParams, UserModel, UserState};
use crate::error::{invalid, Result};
use crate::incentive::{history_bonuses, quadratic_loss, IncentiveParams, RatingHistory};
use crate::policy::{choose_paper, ModelContext, PaperView, PolicyKind};

/// Rounds at which a snapshot is always taken (summary-table checkpoints).
pub const TABLE_CHECKPOINTS: [u64; 2] = [3000, 5000];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub population: PopulationParams,
    pub incentive: IncentiveParams,
    pub user_model: UserModel,
    pub policy: PolicyKind,
    pub rounds: u64,
    pub repetitions: usize,
    pub seed: u64,
    pub snapshot_every: u64,
    /// Whether the second user model's observation includes the default rating.
    pub observation_includes_default: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            population: PopulationParams::default(),
            incentive: IncentiveParams::sigmoid(1.0, 10.0).expect("valid defaults"),
            user_model: UserModel::Model1,
            policy: PolicyKind::Random,
            rounds: 5000,
            repetitions: 10,
            seed: 0,
            snapshot_every: 100,
            observation_includes_default: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        if self.incentive.max_grade() != self.population.max_grade {
            return Err(invalid("max_grade", "incentive and population disagree"));
        }
        if self.repetitions == 0 {
            return Err(invalid("reps", "must be at least 1"));
        }
        if self.snapshot_every == 0 {
            return Err(invalid("snapshot_every", "must be at least 1"));
        }
        Ok(())
    }

    pub fn model_context(&self) -> ModelContext {
        ModelContext {
            user_model: self.user_model,
            mean_error: self.population.mean_error,
        }
    }

    /// Rounds at which snapshots are recorded, ascending, always including 0
    /// and the final round.
    pub fn snapshot_rounds(&self) -> Vec<u64> {
        let mut rounds: Vec<u64> = (0..=self.rounds).step_by(self.snapshot_every as usize).collect();
        rounds.extend(TABLE_CHECKPOINTS.iter().copied().filter(|&r| r <= self.rounds));
        rounds.push(self.rounds);
        rounds.sort_unstable();
        rounds.dedup();
        rounds
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Paper {
    pub truth: PaperGroundTruth,
    pub history: RatingHistory,
}

/// Full simulation state.
#[derive(Clone, Debug)]
pub struct World {
    papers: Vec<Paper>,
    users: Vec<UserState>,
    round: u64,
    views: Vec<PaperView>,
    loss: f64,
    observation_includes_default: bool,
}

impl World {
    pub fn new(
        truths: Vec<PaperGroundTruth>,
        users: Vec<UserState>,
        default_rating: f64,
        max_grade: f64,
        observation_includes_default: bool,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(invalid("num_users", "must be at least 1"));
        }
        let papers = truths
            .into_iter()
            .map(|truth| {
                Ok(Paper {
                    truth,
                    history: RatingHistory::new(default_rating, max_grade)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for user in &users {
            if let Some((id, _)) = user.beliefs.iter().find(|(id, _)| *id as usize >= papers.len()) {
                return Err(invalid("beliefs", format!("unknown paper id {id}")));
            }
        }
        let mut world = Self {
            views: Vec::with_capacity(papers.len()),
            papers,
            users,
            round: 0,
            loss: 0.0,
            observation_includes_default,
        };
        world.views = (0..world.papers.len()).map(|p| world.view_of(p)).collect();
        world.loss = world
            .views
            .iter()
            .map(|v| quadratic_loss(v.rating, v.q_true))
            .sum();
        Ok(world)
    }

    pub fn from_config(config: &SimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (truths, users) = sample_population(&config.population, seed)?;
        Self::new(
            truths,
            users,
            config.population.default_rating,
            config.population.max_grade,
            config.observation_includes_default,
        )
    }

    fn view_of(&self, paper: usize) -> PaperView {
        let p = &self.papers[paper];
        let rating = p.history.current_rating();
        let observation = if self.observation_includes_default {
            rating
        } else {
            p.history.user_mean().unwrap_or(p.history.default_rating())
        };
        PaperView {
            rating,
            observation,
            reviews: p.history.len(),
            q_true: p.truth.q_true,
        }
    }

    pub fn papers(&self) -> &[Paper] {
        &self.papers
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn views(&self) -> &[PaperView] {
        &self.views
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Global loss maintained incrementally as grades arrive.
    pub fn tracked_loss(&self) -> f64 {
        self.loss
    }

    /// Index of the user acting in the current round.
    pub fn acting_user(&self) -> usize {
        (self.round % self.users.len() as u64) as usize
    }

    pub fn review_counts(&self) -> Vec<u32> {
        self.papers.iter().map(|p| p.history.len() as u32).collect()
    }

    /// Records a review outside the policy loop (at the current round) and
    /// advances the round counter.
    pub fn submit(&mut self, user: usize, paper: usize, grade: f64) -> Result<()> {
        if user >= self.users.len() {
            return Err(invalid("user", format!("unknown user {user}")));
        }
        if paper >= self.papers.len() {
            return Err(invalid("paper", format!("unknown paper {paper}")));
        }
        self.append(user, paper, grade)?;
        self.round += 1;
        Ok(())
    }

    fn append(&mut self, user: usize, paper: usize, grade: f64) -> Result<()> {
        self.papers[paper].history.push(user as u32, grade, self.round)?;
        self.users[user].reviewed.insert(paper as u32);
        let before = quadratic_loss(self.views[paper].rating, self.views[paper].q_true);
        self.views[paper] = self.view_of(paper);
        let after = quadratic_loss(self.views[paper].rating, self.views[paper].q_true);
        self.loss += after - before;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewEvent {
    pub round: u64,
    pub user: u32,
    pub paper: u32,
    pub grade: f64,
    /// The reviewer's private error on the chosen paper.
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RoundOutcome {
    Review(ReviewEvent),
    Skip { round: u64, user: u32 },
}

/// Plays one round. The round counter advances whether or not the user reviews.
pub fn run_round(world: &mut World, config: &SimConfig, rng: &mut ChaCha8Rng) -> Result<RoundOutcome> {
    let user = world.acting_user();
    let round = world.round;
    let ctx = config.model_context();
    let chosen = choose_paper(
        config.policy,
        &world.users[user],
        &world.views,
        &config.incentive,
        &ctx,
        rng,
    );
    let outcome = match chosen {
        None => RoundOutcome::Skip {
            round,
            user: user as u32,
        },
        Some(paper) => {
            let belief = *world.users[user]
                .belief(paper)
                .expect("candidates come from the user's beliefs");
            let grade = ctx
                .estimate(&belief, &world.views[paper as usize], &config.incentive)
                .grade;
            world.append(user, paper as usize, grade)?;
            RoundOutcome::Review(ReviewEvent {
                round,
                user: user as u32,
                paper,
                grade,
                sigma: belief.sigma,
            })
        }
    };
    world.round += 1;
    Ok(outcome)
}

/// Recomputes every user's reputation from scratch and returns the totals.
pub fn settle_reputations(world: &mut World, inc: &IncentiveParams) -> Vec<f64> {
    let mut totals = vec![0.0; world.users.len()];
    for paper in &world.papers {
        let bonuses = history_bonuses(&paper.history, inc);
        for (rating, bonus) in paper.history.entries().iter().zip(bonuses) {
            totals[rating.reviewer as usize] += bonus;
        }
    }
    for (user, &total) in world.users.iter_mut().zip(&totals) {
        user.reputation = total;
    }
    totals
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub round: u64,
    pub global_loss: f64,
    pub reputations: Vec<f64>,
    pub review_counts: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub seed: u64,
    /// σ^t of each user, indexed like the reputations.
    pub typical_errors: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub reviews: Vec<ReviewEvent>,
    pub skips: u64,
}

impl SimTrace {
    pub fn snapshot_at(&self, round: u64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.round == round)
    }

    pub fn initial(&self) -> Option<&Snapshot> {
        self.snapshots.first()
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

fn snapshot(world: &mut World, inc: &IncentiveParams) -> Snapshot {
    let reputations = settle_reputations(world, inc);
    Snapshot {
        round: world.round,
        global_loss: world.loss,
        reputations,
        review_counts: world.review_counts(),
    }
}

/// Runs one repetition with `config.seed`.
pub fn run_simulation(config: &SimConfig) -> Result<SimTrace> {
    let mut world = World::from_config(config, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // keep the choice stream apart from the population stream
    rng.set_stream(1);

    let checkpoints = config.snapshot_rounds();
    let mut next = checkpoints.iter().copied().peekable();
    let mut trace = SimTrace {
        seed: config.seed,
        typical_errors: world.users.iter().map(|u| u.typical_error).collect(),
        snapshots: Vec::with_capacity(checkpoints.len()),
        reviews: Vec::with_capacity(config.rounds as usize),
        skips: 0,
    };
    loop {
        if next.peek() == Some(&world.round) {
            next.next();
            trace.snapshots.push(snapshot(&mut world, &config.incentive));
        }
        if world.round >= config.rounds {
            break;
        }
        match run_round(&mut world, config, &mut rng)? {
            RoundOutcome::Review(ev) => trace.reviews.push(ev),
            RoundOutcome::Skip { .. } => trace.skips += 1,
        }
    }
    Ok(trace)
}

/// Runs `config.repetitions` independent repetitions (seeds `seed + k`) in
/// parallel; results are ordered by repetition index.
pub fn run_repetitions(config: &SimConfig) -> Result<Vec<SimTrace>> {
    config.validate()?;
    (0..config.repetitions)
        .into_par_iter()
        .map(|k| {
            let rep = SimConfig {
                seed: config.seed.wrapping_add(k as u64),
                ..config.clone()
            };
            run_simulation(&rep)
        })
        .collect()
}
