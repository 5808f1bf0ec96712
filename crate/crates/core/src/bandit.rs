//! Outcome-partitioned bandit instances.
//!
//! A large arm set is partitioned into a small number of outcome classes;
//! the Bernoulli reward of an arm depends only on its class. Instance
//! generators cover the balanced case (equal class sizes) and the
//! lower-bound construction (optimal arms placed uniformly at random), and
//! [`survival_probability`] gives the closed-form chance that uniform
//! without-replacement probing misses the optimal class for its first `t`
//! draws.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Partition of `num_arms` arms into `num_outcomes` mutually exclusive
/// classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomePartition {
    num_arms: usize,
    num_outcomes: usize,
    outcome_of_arm: Vec<usize>,
    class_sizes: Vec<usize>,
}

impl OutcomePartition {
    /// Build from a total arm -> outcome map. Every outcome in
    /// `0..num_outcomes` must own at least one arm.
    pub fn new(outcome_of_arm: Vec<usize>, num_outcomes: usize) -> Result<Self> {
        if outcome_of_arm.is_empty() {
            return Err(Error::EmptyPartition("no arms"));
        }
        if num_outcomes == 0 {
            return Err(Error::EmptyPartition("no outcomes"));
        }
        let mut class_sizes = vec![0usize; num_outcomes];
        for (arm, &o) in outcome_of_arm.iter().enumerate() {
            if o >= num_outcomes {
                return Err(Error::WorldShape(format!(
                    "arm {arm} maps to outcome {o}, but there are only {num_outcomes} outcomes"
                )));
            }
            class_sizes[o] += 1;
        }
        if let Some(empty) = class_sizes.iter().position(|&s| s == 0) {
            return Err(Error::WorldShape(format!("outcome {empty} has no arms")));
        }
        Ok(Self {
            num_arms: outcome_of_arm.len(),
            num_outcomes,
            outcome_of_arm,
            class_sizes,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn num_outcomes(&self) -> usize {
        self.num_outcomes
    }

    /// The class label of an arm.
    pub fn outcome_of(&self, arm: usize) -> usize {
        self.outcome_of_arm[arm]
    }

    pub fn outcome_map(&self) -> &[usize] {
        &self.outcome_of_arm
    }

    pub fn class_sizes(&self) -> &[usize] {
        &self.class_sizes
    }

    /// p_o = s_o / K.
    pub fn class_mass(&self, outcome: usize) -> f64 {
        self.class_sizes[outcome] as f64 / self.num_arms as f64
    }

    pub fn class_masses(&self) -> Vec<f64> {
        (0..self.num_outcomes).map(|o| self.class_mass(o)).collect()
    }

    /// Arms of each class, ascending within a class.
    pub fn arms_by_outcome(&self) -> Vec<Vec<usize>> {
        let mut classes = vec![Vec::new(); self.num_outcomes];
        for (arm, &o) in self.outcome_of_arm.iter().enumerate() {
            classes[o].push(arm);
        }
        classes
    }
}

/// A bandit instance: partition plus per-outcome Bernoulli means.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    partition: OutcomePartition,
    outcome_means: Vec<f64>,
    optimal_outcome: usize,
    gap: f64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    #[serde(rename = "K")]
    k: usize,
    m: usize,
    class_sizes: Vec<usize>,
    outcome_of_arm: Vec<usize>,
    means: Vec<f64>,
    seed: u64,
}

impl BanditInstance {
    /// Assemble an instance from parts, recomputing the optimal outcome and
    /// the gap.
    pub fn new(partition: OutcomePartition, outcome_means: Vec<f64>, seed: u64) -> Result<Self> {
        if outcome_means.len() != partition.num_outcomes() {
            return Err(Error::WorldShape(format!(
                "{} means for {} outcomes",
                outcome_means.len(),
                partition.num_outcomes()
            )));
        }
        if let Some(&bad) = outcome_means
            .iter()
            .find(|m| !m.is_finite() || **m < 0.0 || **m > 1.0)
        {
            return Err(Error::WorldShape(format!("mean {bad} outside [0, 1]")));
        }
        let optimal_outcome = outcome_means
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite means"))
            .map(|(o, _)| o)
            .expect("at least one outcome");
        let best = outcome_means[optimal_outcome];
        let second = outcome_means
            .iter()
            .enumerate()
            .filter(|(o, _)| *o != optimal_outcome)
            .map(|(_, &m)| m)
            .fold(f64::NEG_INFINITY, f64::max);
        let gap = if second.is_finite() { best - second } else { 0.0 };
        Ok(Self {
            partition,
            outcome_means,
            optimal_outcome,
            gap,
            seed,
        })
    }

    pub fn partition(&self) -> &OutcomePartition {
        &self.partition
    }

    pub fn num_arms(&self) -> usize {
        self.partition.num_arms()
    }

    pub fn num_outcomes(&self) -> usize {
        self.partition.num_outcomes()
    }

    pub fn outcome_means(&self) -> &[f64] {
        &self.outcome_means
    }

    pub fn mean_of_outcome(&self, outcome: usize) -> f64 {
        self.outcome_means[outcome]
    }

    pub fn mean_of_arm(&self, arm: usize) -> f64 {
        self.outcome_means[self.partition.outcome_of(arm)]
    }

    pub fn optimal_outcome(&self) -> usize {
        self.optimal_outcome
    }

    pub fn optimal_mean(&self) -> f64 {
        self.outcome_means[self.optimal_outcome]
    }

    /// Gap between the optimal outcome mean and the best of the rest
    /// (0 for a single outcome).
    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Serialize as `{K, m, class_sizes, outcome_of_arm, means, seed}` so a
    /// run is fully replayable.
    pub fn to_json(&self) -> Result<String> {
        let doc = InstanceDoc {
            k: self.num_arms(),
            m: self.num_outcomes(),
            class_sizes: self.partition.class_sizes().to_vec(),
            outcome_of_arm: self.partition.outcome_map().to_vec(),
            means: self.outcome_means.clone(),
            seed: self.seed,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        if doc.outcome_of_arm.len() != doc.k {
            return Err(Error::ClassSizeMismatch {
                total: doc.outcome_of_arm.len(),
                expected: doc.k,
            });
        }
        let partition = OutcomePartition::new(doc.outcome_of_arm, doc.m)?;
        if partition.class_sizes() != doc.class_sizes.as_slice() {
            return Err(Error::WorldShape(
                "recorded class_sizes disagree with outcome_of_arm".into(),
            ));
        }
        Self::new(partition, doc.means, doc.seed)
    }
}

/// Result of pulling one arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PullResult {
    pub arm: usize,
    pub outcome: usize,
    pub reward: u8,
}

/// Balanced instance: `m` classes of size `K/m`, one class at mean
/// `1/2 + delta`, the rest at `1/2`. The arm -> class assignment is a
/// seeded permutation, and the optimal class label is drawn from the same
/// seed, so neither arm order nor labels carry information.
pub fn make_balanced_instance(
    num_arms: usize,
    num_outcomes: usize,
    delta: f64,
    seed: u64,
) -> Result<BanditInstance> {
    if num_arms == 0 {
        return Err(Error::EmptyPartition("no arms"));
    }
    if num_outcomes == 0 {
        return Err(Error::EmptyPartition("no outcomes"));
    }
    if !num_arms.is_multiple_of(num_outcomes) {
        return Err(Error::UnbalancedPartition {
            arms: num_arms,
            outcomes: num_outcomes,
        });
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::InvalidGap(delta));
    }
    let mut rng = crate::rng::substream(seed, &[crate::rng::stream::INSTANCE]);
    let per_class = num_arms / num_outcomes;
    let mut outcome_of_arm: Vec<usize> = (0..num_outcomes)
        .flat_map(|o| std::iter::repeat_n(o, per_class))
        .collect();
    outcome_of_arm.shuffle(&mut rng);
    let optimal = rng.gen_range(0..num_outcomes);
    let means = (0..num_outcomes)
        .map(|o| if o == optimal { 0.5 + delta } else { 0.5 })
        .collect();
    BanditInstance::new(OutcomePartition::new(outcome_of_arm, num_outcomes)?, means, seed)
}

/// Lower-bound construction: class sizes are given, the optimal class is the
/// first one of size `s_star`, and its arms form a uniformly random subset
/// of all arm indices under the seed. Means are `1/2 + delta` (optimal) and
/// `1/2` (rest).
pub fn make_lower_bound_instance(
    num_arms: usize,
    class_sizes: &[usize],
    s_star: usize,
    delta: f64,
    seed: u64,
) -> Result<BanditInstance> {
    let total: usize = class_sizes.iter().sum();
    if total != num_arms {
        return Err(Error::ClassSizeMismatch {
            total,
            expected: num_arms,
        });
    }
    if class_sizes.contains(&0) {
        return Err(Error::EmptyPartition("zero-size class"));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::InvalidGap(delta));
    }
    let optimal = class_sizes
        .iter()
        .position(|&s| s == s_star)
        .ok_or(Error::NoOptimalClass { s_star })?;
    let mut rng = crate::rng::substream(seed, &[crate::rng::stream::INSTANCE]);
    // A full shuffle makes the first s_star positions a uniform subset; the
    // remaining arms fill the other classes in label order.
    let mut arms: Vec<usize> = (0..num_arms).collect();
    arms.shuffle(&mut rng);
    let mut outcome_of_arm = vec![0usize; num_arms];
    for &arm in arms.iter().take(s_star) {
        outcome_of_arm[arm] = optimal;
    }
    let mut cursor = s_star;
    for (o, &size) in class_sizes.iter().enumerate() {
        if o == optimal {
            continue;
        }
        for &arm in arms.iter().skip(cursor).take(size) {
            outcome_of_arm[arm] = o;
        }
        cursor += size;
    }
    let num_outcomes = class_sizes.len();
    let means = (0..num_outcomes)
        .map(|o| if o == optimal { 0.5 + delta } else { 0.5 })
        .collect();
    BanditInstance::new(OutcomePartition::new(outcome_of_arm, num_outcomes)?, means, seed)
}

/// Pull an arm: Bernoulli reward with the arm's outcome mean, plus the
/// revealed outcome label.
pub fn pull(instance: &BanditInstance, arm: usize, rng: &mut impl Rng) -> Result<PullResult> {
    if arm >= instance.num_arms() {
        return Err(Error::ArmOutOfRange {
            arm,
            arms: instance.num_arms(),
        });
    }
    let outcome = instance.partition().outcome_of(arm);
    let reward = u8::from(rng.gen::<f64>() < instance.outcome_means[outcome]);
    Ok(PullResult {
        arm,
        outcome,
        reward,
    })
}

/// Probability that `t` uniform without-replacement draws from `K` arms all
/// miss an optimal class of size `s_star`:
/// prod_{i=0}^{t-1} (K - s_star - i) / (K - i).
pub fn survival_probability(num_arms: usize, s_star: usize, t: usize) -> Result<f64> {
    if s_star > num_arms {
        return Err(Error::OptimalClassTooLarge {
            s_star,
            arms: num_arms,
        });
    }
    if s_star == 0 || num_arms == 0 {
        return Err(Error::EmptyPartition("survival needs K >= s_star >= 1"));
    }
    if t > num_arms - s_star {
        return Ok(0.0);
    }
    let mut p = 1.0;
    for i in 0..t {
        p *= (num_arms - s_star - i) as f64 / (num_arms - i) as f64;
    }
    Ok(p)
}

/// Expected index of the first optimal-class hit under uniform
/// without-replacement probing: sum of survival probabilities, which
/// telescopes to (K + 1) / (s_star + 1).
pub fn expected_first_hit(num_arms: usize, s_star: usize) -> Result<f64> {
    let mut acc = 0.0;
    for t in 0..=(num_arms - s_star.min(num_arms)) {
        acc += survival_probability(num_arms, s_star, t)?;
    }
    Ok(acc)
}
