//! Group-normalized policy-gradient training with outcome exploration
//! bonuses.
//!
//! Per question, a group of `n` samples is scored by the standardized
//! reward advantage; an optional exploration signal is added per sample:
//!
//! - `ucb`: `min{1, sqrt(1 / N(x, a))}` from historical visitation counts;
//! - `ucb-mean`: the same bonus re-centered by its leave-one-out batch mean;
//! - `ucb-con`: re-centered by a constant `b0`;
//! - `batch`: `-(1/n) * |{j != i : a_j = a_i}|`, penalizing within-batch
//!   repetition;
//! - `batch-positive`: `+1` for answers unique in the batch.
//!
//! When every reward in a group is 1 the exploration signal is zeroed so
//! the step falls back to the plain objective. The update is the exact
//! analytic gradient of the sampled surrogate (advantage-plus-bonus times
//! log-probability, minus `beta` times the low-variance KL estimator) with
//! respect to the tabular logits, with one ascent step per call.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::metrics::SampleHistory;
use crate::rng::{stream, substream};
use crate::world::{sample_batch, sample_reference_batch, BatchSample, PolicyParams, ReasoningWorld};
use crate::{Error, Result};

/// Exploration signal added to the group advantage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BonusVariant {
    None,
    Ucb,
    UcbMean,
    UcbCon,
    Batch,
    /// Positive batch variant: kept behind this flag to reproduce its
    /// negative result, not as a recommended setting.
    BatchPositive,
}

impl fmt::Display for BonusVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BonusVariant::None => "none",
            BonusVariant::Ucb => "ucb",
            BonusVariant::UcbMean => "ucb-mean",
            BonusVariant::UcbCon => "ucb-con",
            BonusVariant::Batch => "batch",
            BonusVariant::BatchPositive => "batch-positive",
        };
        f.write_str(s)
    }
}

impl FromStr for BonusVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(BonusVariant::None),
            "ucb" => Ok(BonusVariant::Ucb),
            "ucb-mean" => Ok(BonusVariant::UcbMean),
            "ucb-con" => Ok(BonusVariant::UcbCon),
            "batch" => Ok(BonusVariant::Batch),
            "batch-positive" => Ok(BonusVariant::BatchPositive),
            other => Err(format!(
                "unknown bonus variant '{other}' (expected none|ucb|ucb-mean|ucb-con|batch|batch-positive)"
            )),
        }
    }
}

/// Whether counts include the current batch when bonuses are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountTiming {
    /// Update counts with the current batch first; every sampled answer then
    /// has N >= 1 and the bonus lies in (0, 1].
    IncludeCurrent,
    /// Compute bonuses from pre-batch counts, clamping unseen answers to
    /// bonus 1; kept for sensitivity runs.
    PriorCounts,
}

impl fmt::Display for CountTiming {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountTiming::IncludeCurrent => "include-current",
            CountTiming::PriorCounts => "prior",
        })
    }
}

impl FromStr for CountTiming {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "include-current" => Ok(CountTiming::IncludeCurrent),
            "prior" => Ok(CountTiming::PriorCounts),
            other => Err(format!(
                "unknown count timing '{other}' (expected include-current|prior)"
            )),
        }
    }
}

/// Which variants the all-correct zeroing rule applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllCorrectScope {
    /// Zero the exploration signal of fully correct groups for every
    /// variant.
    AllVariants,
    /// Only for the baseline-shifted variants (`ucb-mean`, `ucb-con`).
    BaselineOnly,
}

impl fmt::Display for AllCorrectScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AllCorrectScope::AllVariants => "all",
            AllCorrectScope::BaselineOnly => "baseline-only",
        })
    }
}

impl FromStr for AllCorrectScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "all" => Ok(AllCorrectScope::AllVariants),
            "baseline-only" => Ok(AllCorrectScope::BaselineOnly),
            other => Err(format!(
                "unknown all-correct scope '{other}' (expected all|baseline-only)"
            )),
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Group size n (>= 2).
    pub group_size: usize,
    pub bonus: BonusVariant,
    /// Bonus coefficient c (>= 0).
    pub bonus_coef: f64,
    /// Constant baseline b0 for `ucb-con`.
    pub const_baseline: f64,
    /// KL weight beta (>= 0).
    pub kl_weight: f64,
    /// Guard added to the group std (> 0).
    pub adv_epsilon: f64,
    pub learning_rate: f64,
    /// Training epochs T; one gradient step per epoch.
    pub epochs: usize,
    pub count_timing: CountTiming,
    pub all_correct_scope: AllCorrectScope,
    /// Coupling strength gamma (>= 0) of the shared answer logits.
    pub coupling: f64,
    /// Scale of the initial per-trace logits.
    pub init_scale: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::GroupTooSmall(self.group_size));
        }
        let positive = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::BadTrainConfig(format!("{name} out of range")))
            }
        };
        positive("bonus_coef (c >= 0)", self.bonus_coef >= 0.0)?;
        positive("kl_weight (beta >= 0)", self.kl_weight >= 0.0)?;
        positive("adv_epsilon (> 0)", self.adv_epsilon > 0.0)?;
        positive(
            "learning_rate (finite)",
            self.learning_rate.is_finite(),
        )?;
        positive("coupling (gamma >= 0)", self.coupling >= 0.0)?;
        positive("init_scale (>= 0)", self.init_scale >= 0.0)?;
        positive("epochs (>= 1)", self.epochs >= 1)?;
        Ok(())
    }
}

/// Historical visitation counts N(x, a).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountsTable {
    per_question: Vec<HashMap<usize, u64>>,
}

impl CountsTable {
    pub fn new(num_questions: usize) -> Self {
        Self {
            per_question: vec![HashMap::new(); num_questions],
        }
    }

    pub fn num_questions(&self) -> usize {
        self.per_question.len()
    }

    pub fn count(&self, question: usize, answer: usize) -> u64 {
        self.per_question[question]
            .get(&answer)
            .copied()
            .unwrap_or(0)
    }

    /// Total samples recorded for a question.
    pub fn total(&self, question: usize) -> u64 {
        self.per_question[question].values().sum()
    }
}

/// Record every sampled answer of the batch, once per sample. Deliberately
/// not idempotent: applying a batch twice doubles its counts.
pub fn update_counts(counts: &mut CountsTable, batch: &BatchSample) {
    for &a in &batch.answers {
        *counts.per_question[batch.question].entry(a).or_insert(0) += 1;
    }
}

/// Standardized group advantages `(r_i - mean) / (std + eps)` with
/// population std; a group of identical rewards yields all zeros.
pub fn group_advantages(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let var = rewards.iter().map(|&r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + epsilon;
    Ok(rewards.iter().map(|&r| (r - mean) / std).collect())
}

/// Count-based bonus `min{1, sqrt(1 / N(x, a))}`. The counts must already
/// include the current batch; an unvisited answer is a contract violation.
pub fn ucb_bonus(counts: &CountsTable, question: usize, answer: usize) -> Result<f64> {
    let n = counts.count(question, answer);
    if n == 0 {
        return Err(Error::ZeroCount { question, answer });
    }
    Ok((1.0 / n as f64).sqrt().min(1.0))
}

fn ucb_bonus_clamped(counts: &CountsTable, question: usize, answer: usize) -> f64 {
    let n = counts.count(question, answer);
    if n == 0 {
        1.0
    } else {
        (1.0 / n as f64).sqrt().min(1.0)
    }
}

/// Leave-one-out batch mean baseline: `b_i - mean_{j != i} b_j`.
pub fn mean_baseline(bonuses: &[f64]) -> Vec<f64> {
    debug_assert!(bonuses.len() >= 2);
    let total: f64 = bonuses.iter().sum();
    let n = bonuses.len() as f64;
    bonuses
        .iter()
        .map(|&b| b - (total - b) / (n - 1.0))
        .collect()
}

/// Constant baseline: `b_i - b0`.
pub fn const_baseline(bonuses: &[f64], b0: f64) -> Vec<f64> {
    bonuses.iter().map(|&b| b - b0).collect()
}

/// Within-batch repetition penalty `-(1/n) * |{j != i : a_j = a_i}|`;
/// unique answers get 0.
pub fn batch_bonus(answers: &[usize]) -> Vec<f64> {
    let n = answers.len() as f64;
    answers
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let dups = answers
                .iter()
                .enumerate()
                .filter(|(j, &b)| *j != i && b == a)
                .count();
            -(dups as f64) / n
        })
        .collect()
}

/// Positive batch variant: 1 for answers unique in the batch, else 0.
pub fn batch_bonus_positive(answers: &[usize]) -> Vec<f64> {
    answers
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let unique = !answers
                .iter()
                .enumerate()
                .any(|(j, &b)| j != i && b == a);
            f64::from(u8::from(unique))
        })
        .collect()
}

/// Zero the exploration signal when every reward in the group is 1;
/// otherwise pass it through unchanged.
pub fn apply_all_correct_rule(rewards: &[f64], bonuses: &[f64]) -> Vec<f64> {
    if !rewards.is_empty() && rewards.iter().all(|&r| r == 1.0) {
        vec![0.0; bonuses.len()]
    } else {
        bonuses.to_vec()
    }
}

/// Low-variance per-sample KL estimate
/// `log(pi/pi_ref) + pi_ref/pi - 1`, non-negative by convexity.
///
/// Computed as `log_ratio + exp_m1(-log_ratio)`: the naive form cancels
/// catastrophically for tiny log-ratios (true value ~ log_ratio^2 / 2) and
/// can round below zero.
pub fn kl_k3(logp: f64, logp_ref: f64) -> f64 {
    let log_ratio = logp - logp_ref;
    (log_ratio + (-log_ratio).exp_m1()).max(0.0)
}

/// Exploration signal and combined per-sample weights for one batch.
#[derive(Debug, Clone)]
pub struct BatchSignals {
    pub advantages: Vec<f64>,
    /// Final exploration signal B-hat, after baseline and all-correct rule;
    /// all zeros for `BonusVariant::None`.
    pub bonuses: Vec<f64>,
    /// `advantage_i + c * bonus_i`: the stop-gradient weight of sample i.
    pub weights: Vec<f64>,
}

/// Apply count timing, compute the configured exploration signal, and
/// combine it with the group advantages. Mutates `counts` by exactly one
/// batch update.
pub fn prepare_signals(
    cfg: &TrainConfig,
    batch: &BatchSample,
    counts: &mut CountsTable,
) -> Result<BatchSignals> {
    if batch.len() < 2 {
        return Err(Error::GroupTooSmall(batch.len()));
    }
    let raw = match cfg.bonus {
        BonusVariant::None => {
            update_counts(counts, batch);
            vec![0.0; batch.len()]
        }
        BonusVariant::Ucb | BonusVariant::UcbMean | BonusVariant::UcbCon => {
            let base: Vec<f64> = match cfg.count_timing {
                CountTiming::IncludeCurrent => {
                    update_counts(counts, batch);
                    batch
                        .answers
                        .iter()
                        .map(|&a| ucb_bonus(counts, batch.question, a))
                        .collect::<Result<_>>()?
                }
                CountTiming::PriorCounts => {
                    let base = batch
                        .answers
                        .iter()
                        .map(|&a| ucb_bonus_clamped(counts, batch.question, a))
                        .collect();
                    update_counts(counts, batch);
                    base
                }
            };
            match cfg.bonus {
                BonusVariant::Ucb => base,
                BonusVariant::UcbMean => mean_baseline(&base),
                BonusVariant::UcbCon => const_baseline(&base, cfg.const_baseline),
                _ => unreachable!(),
            }
        }
        BonusVariant::Batch => {
            update_counts(counts, batch);
            batch_bonus(&batch.answers)
        }
        BonusVariant::BatchPositive => {
            update_counts(counts, batch);
            batch_bonus_positive(&batch.answers)
        }
    };

    let rule_applies = match cfg.all_correct_scope {
        AllCorrectScope::AllVariants => !matches!(cfg.bonus, BonusVariant::None),
        AllCorrectScope::BaselineOnly => {
            matches!(cfg.bonus, BonusVariant::UcbMean | BonusVariant::UcbCon)
        }
    };
    let bonuses = if rule_applies {
        apply_all_correct_rule(&batch.rewards, &raw)
    } else {
        raw
    };

    let advantages = group_advantages(&batch.rewards, cfg.adv_epsilon)?;
    let weights = advantages
        .iter()
        .zip(&bonuses)
        .map(|(a, b)| a + cfg.bonus_coef * b)
        .collect();
    Ok(BatchSignals {
        advantages,
        bonuses,
        weights,
    })
}

/// The sampled surrogate as a function of the policy parameters, with the
/// per-sample weights and the reference log-probabilities held fixed:
/// `sum_x (1/n) sum_i [w_i log pi(y_i|x) - beta k3(log pi(y_i|x), logp_ref_i)]`.
pub fn surrogate_objective(
    params: &PolicyParams,
    world: &ReasoningWorld,
    batches: &[BatchSample],
    weights: &[Vec<f64>],
    kl_weight: f64,
) -> f64 {
    let mut total = 0.0;
    for (batch, w) in batches.iter().zip(weights) {
        let logp = params.log_distribution(world, batch.question);
        let n = batch.len() as f64;
        let mut acc = 0.0;
        for (i, &t) in batch.traces.iter().enumerate() {
            acc += w[i] * logp[t] - kl_weight * kl_k3(logp[t], batch.logp_ref[i]);
        }
        total += acc / n;
    }
    total
}

/// Exact gradient of [`surrogate_objective`] with respect to the trace and
/// shared answer logits.
pub struct PolicyGrad {
    /// Per-question trace-logit gradients, indexed like the batches.
    pub trace: Vec<Vec<f64>>,
    /// Shared answer-logit gradient (already includes the coupling factor).
    pub answer: Vec<f64>,
}

pub fn surrogate_gradient(
    params: &PolicyParams,
    world: &ReasoningWorld,
    batches: &[BatchSample],
    weights: &[Vec<f64>],
    kl_weight: f64,
) -> PolicyGrad {
    let gamma = params.coupling();
    let mut answer = vec![0.0; world.vocab_size()];
    let mut trace = Vec::with_capacity(batches.len());
    for (batch, w) in batches.iter().zip(weights) {
        let x = batch.question;
        let probs = params.distribution(world, x);
        let logp = params.log_distribution(world, x);
        let n = batch.len() as f64;
        let mut gz = vec![0.0; probs.len()];
        for (i, &t) in batch.traces.iter().enumerate() {
            let log_ratio = logp[t] - batch.logp_ref[i];
            // d/d logp of [w logp - beta (logp - ref + e^{ref - logp} - 1)]
            let gi = (w[i] - kl_weight * (1.0 - (-log_ratio).exp())) / n;
            gz[t] += gi;
            for (j, &p) in probs.iter().enumerate() {
                gz[j] -= gi * p;
            }
        }
        let classes = &world.question(x).answer_of_trace;
        for (j, &g) in gz.iter().enumerate() {
            answer[classes[j]] += gamma * g;
        }
        trace.push(gz);
    }
    PolicyGrad { trace, answer }
}

/// Per-step training statistics; one CSV row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub mean_entropy: f64,
    /// Mean applied exploration signal; exactly 0 for `BonusVariant::None`.
    pub mean_bonus: f64,
    pub variant: BonusVariant,
}

impl StepStats {
    pub const CSV_HEADER: &'static str = "step,mean_reward,mean_kl,mean_entropy,mean_bonus,variant";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.mean_reward, self.mean_kl, self.mean_entropy, self.mean_bonus, self.variant
        )
    }
}

/// One synchronous ascent step over a set of batches (one per question in
/// the step), sampled from the current parameters. Counts are updated per
/// the configured timing; advantages and bonuses are treated as constants.
pub fn grpo_step(
    params: &mut PolicyParams,
    world: &ReasoningWorld,
    batches: &[BatchSample],
    cfg: &TrainConfig,
    counts: &mut CountsTable,
) -> Result<StepStats> {
    cfg.validate()?;
    check_shapes(params, world, counts)?;
    let mut weights = Vec::with_capacity(batches.len());
    let mut reward_sum = 0.0;
    let mut bonus_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut samples = 0usize;
    for batch in batches {
        if batch.question >= world.num_questions() {
            return Err(Error::QuestionOutOfRange {
                question: batch.question,
                questions: world.num_questions(),
            });
        }
        let signals = prepare_signals(cfg, batch, counts)?;
        reward_sum += batch.rewards.iter().sum::<f64>();
        bonus_sum += signals.bonuses.iter().sum::<f64>();
        kl_sum += batch
            .logp
            .iter()
            .zip(&batch.logp_ref)
            .map(|(&lp, &lr)| kl_k3(lp, lr))
            .sum::<f64>();
        samples += batch.len();
        entropy_sum += crate::metrics::policy_entropy(params, world, batch.question);
        weights.push(signals.weights);
    }

    let grad = surrogate_gradient(params, world, batches, &weights, cfg.kl_weight);
    for (batch, gz) in batches.iter().zip(&grad.trace) {
        let logits = params.trace_logits_mut(batch.question);
        for (j, g) in gz.iter().enumerate() {
            logits[j] += cfg.learning_rate * g;
        }
    }
    let answer_logits = params.answer_logits_mut();
    for (a, g) in grad.answer.iter().enumerate() {
        answer_logits[a] += cfg.learning_rate * g;
    }

    let n = samples.max(1) as f64;
    Ok(StepStats {
        step: 0,
        mean_reward: reward_sum / n,
        mean_kl: kl_sum / n,
        mean_entropy: entropy_sum / batches.len().max(1) as f64,
        mean_bonus: bonus_sum / n,
        variant: cfg.bonus,
    })
}

fn check_shapes(params: &PolicyParams, world: &ReasoningWorld, counts: &CountsTable) -> Result<()> {
    if params.answer_logits().len() != world.vocab_size() {
        return Err(Error::ShapeMismatch(format!(
            "{} answer logits for vocabulary of {}",
            params.answer_logits().len(),
            world.vocab_size()
        )));
    }
    if counts.num_questions() != world.num_questions() {
        return Err(Error::ShapeMismatch(format!(
            "counts table covers {} questions, world has {}",
            counts.num_questions(),
            world.num_questions()
        )));
    }
    for x in 0..world.num_questions() {
        if params.trace_logits(x).len() != world.trace_count(x) {
            return Err(Error::ShapeMismatch(format!(
                "question {x}: {} trace logits for {} traces",
                params.trace_logits(x).len(),
                world.trace_count(x)
            )));
        }
    }
    Ok(())
}

/// Drives epochs of sampling plus [`grpo_step`], recording the full sample
/// history. Sampling streams are keyed by (seed, question, epoch) only, so
/// a question whose policy never moves draws the same samples a reference
/// run would.
pub struct Trainer<'w> {
    world: &'w ReasoningWorld,
    cfg: TrainConfig,
    params: PolicyParams,
    counts: CountsTable,
    history: SampleHistory,
    epoch: usize,
}

impl<'w> Trainer<'w> {
    pub fn new(world: &'w ReasoningWorld, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = substream(cfg.seed, &[stream::INIT]);
        let params = PolicyParams::init(world, cfg.init_scale, cfg.coupling, &mut init_rng);
        let counts = CountsTable::new(world.num_questions());
        let history = SampleHistory::new(world.num_questions(), cfg.group_size);
        Ok(Self {
            world,
            cfg,
            params,
            counts,
            history,
            epoch: 0,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn counts(&self) -> &CountsTable {
        &self.counts
    }

    pub fn history(&self) -> &SampleHistory {
        &self.history
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Sample one group per question and take one gradient step.
    pub fn step(&mut self) -> Result<StepStats> {
        let epoch = self.epoch + 1;
        let mut batches = Vec::with_capacity(self.world.num_questions());
        for x in 0..self.world.num_questions() {
            let mut rng = substream(
                self.cfg.seed,
                &[stream::SAMPLE, x as u64, epoch as u64],
            );
            batches.push(sample_batch(
                &self.params,
                self.world,
                x,
                self.cfg.group_size,
                &mut rng,
            )?);
        }
        let mut stats = grpo_step(&mut self.params, self.world, &batches, &self.cfg, &mut self.counts)?;
        self.history.record_epoch(epoch, &batches)?;
        self.epoch = epoch;
        stats.step = epoch;
        Ok(stats)
    }

    /// Run the configured number of epochs.
    pub fn run(&mut self) -> Result<Vec<StepStats>> {
        let mut all = Vec::with_capacity(self.cfg.epochs);
        while self.epoch < self.cfg.epochs {
            all.push(self.step()?);
        }
        Ok(all)
    }

    pub fn into_parts(self) -> (PolicyParams, CountsTable, SampleHistory) {
        (self.params, self.counts, self.history)
    }
}

/// Draw `n * epochs` samples per question from the frozen reference policy,
/// using the same per-(question, epoch) streams as a training run with the
/// same seed. This is the comparison stream for training-versus-sampling
/// curves.
pub fn reference_stream(
    world: &ReasoningWorld,
    init_scale: f64,
    n: usize,
    epochs: usize,
    seed: u64,
) -> Result<SampleHistory> {
    if n < 2 {
        return Err(Error::GroupTooSmall(n));
    }
    let mut init_rng = substream(seed, &[stream::INIT]);
    let params = PolicyParams::init(world, init_scale, 0.0, &mut init_rng);
    let mut history = SampleHistory::new(world.num_questions(), n);
    for epoch in 1..=epochs {
        let mut batches = Vec::with_capacity(world.num_questions());
        for x in 0..world.num_questions() {
            let mut rng = substream(seed, &[stream::SAMPLE, x as u64, epoch as u64]);
            batches.push(sample_reference_batch(&params, world, x, n, &mut rng)?);
        }
        history.record_epoch(epoch, &batches)?;
    }
    Ok(history)
}
