//! Simulation lab for outcome-based exploration.
//!
//! Reasoning tasks have a huge space of traces but a small space of final
//! answers, and the reward depends only on the answer. This crate builds the
//! two desk-scale models that make that structure studyable:
//!
//! - [`bandit`] / [`algorithms`]: stochastic bandits whose arms are
//!   partitioned into outcome classes, together with outcome-level UCB
//!   algorithms (balanced discovery, strong/soft generalization) and
//!   arm-level baselines, all producing per-round regret records.
//! - [`world`] / [`grpo`] / [`metrics`]: a synthetic question/trace/answer
//!   world with an exact tabular softmax policy, a group-normalized policy
//!   gradient trainer with count-based and batch-level exploration bonuses,
//!   and the diversity metrics (solved/distinct curves, pass@k, entropy)
//!   used to compare training against plain sampling from the reference
//!   policy.
//!
//! Every stochastic operation takes an explicit RNG; streams are derived
//! from a root seed via [`rng::substream`], so identical (config, seed)
//! pairs reproduce runs bit for bit.

pub mod algorithms;
pub mod bandit;
pub mod grpo;
pub mod metrics;
pub mod rng;
pub mod world;

use thiserror::Error;

/// Errors for contract violations across the lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{arms} arms cannot be split into {outcomes} equal outcome classes")]
    UnbalancedPartition { arms: usize, outcomes: usize },
    #[error("class sizes sum to {total}, expected {expected} arms")]
    ClassSizeMismatch { total: usize, expected: usize },
    #[error("no outcome class of size {s_star} to designate optimal")]
    NoOptimalClass { s_star: usize },
    #[error("empty partition: {0}")]
    EmptyPartition(&'static str),
    #[error("gap {0} outside (0, 0.5]")]
    InvalidGap(f64),
    #[error("arm {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("optimal class size {s_star} exceeds {arms} arms")]
    OptimalClassTooLarge { s_star: usize, arms: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("exclusion fraction {value} for outcome {outcome} outside [0, 1]")]
    InvalidRho { outcome: usize, value: f64 },
    #[error("exclusion fractions: got {got}, expected one per outcome ({expected})")]
    RhoLength { got: usize, expected: usize },
    #[error("group must have at least 2 samples, got {0}")]
    GroupTooSmall(usize),
    #[error("empty reward group")]
    EmptyGroup,
    #[error("bonus requested for unvisited (question {question}, answer {answer}); counts must include the batch first")]
    ZeroCount { question: usize, answer: usize },
    #[error("question {question} out of range for {questions} questions")]
    QuestionOutOfRange { question: usize, questions: usize },
    #[error("world generation: {0}")]
    WorldShape(String),
    #[error("policy shape does not match world: {0}")]
    ShapeMismatch(String),
    #[error("train config: {0}")]
    BadTrainConfig(String),
    #[error("pass@k requires k <= n, got k={k}, n={n}")]
    KTooLarge { k: usize, n: usize },
    #[error("correct count {c} exceeds sample count {n}")]
    BadCorrectCount { c: usize, n: usize },
    #[error("history epoch {epoch} has {got} samples for question {question}, expected {expected}")]
    BadEpochSize {
        epoch: usize,
        question: usize,
        got: usize,
        expected: usize,
    },
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
