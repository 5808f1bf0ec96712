//! Synthetic question/trace/answer world with an exact tabular policy.
//!
//! Each question has a fixed set of atomic traces; every trace maps
//! deterministically to one answer from a shared global vocabulary, and a
//! question is solvable iff its correct answer is reachable through some
//! trace. The policy is a per-question softmax over traces whose logits are
//! `u[x][trace] + gamma * w[answer_of_trace]`: `u` is question-local, `w` is
//! shared across questions, and `gamma` controls how strongly updates on one
//! question leak into others that reach the same answers. A frozen copy of
//! the initial logits serves as the reference policy.
//!
//! Worlds are generated with a Zipf-like answer popularity so that popular
//! answers are shared across many questions; that sharing is the channel
//! through which concentration on solved questions can degrade diversity on
//! unsolved ones.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{stream, substream};
use crate::{Error, Result};

/// Generation parameters for [`generate_world`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub num_questions: usize,
    pub traces_per_question: usize,
    /// Distinct answers reachable per question.
    pub answers_per_question: usize,
    pub vocab_size: usize,
    /// Zipf exponent for answer popularity; 0 = uniform.
    pub popularity_exponent: f64,
    /// Fraction of questions whose correct answer is reachable.
    pub solvable_fraction: f64,
    /// Where the correct answer sits among a solvable question's reachable
    /// answers, ranked by trace mass: 0 picks the most probable answer
    /// (easy), 1 the least probable (hard).
    pub difficulty_quantile: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    /// Total trace -> global answer id map (the per-question partition).
    pub answer_of_trace: Vec<usize>,
    /// Global answer id; may or may not be reachable.
    pub correct_answer: usize,
    /// Sorted distinct answers among the traces.
    pub reachable_answers: Vec<usize>,
}

impl Question {
    pub fn trace_count(&self) -> usize {
        self.answer_of_trace.len()
    }

    pub fn is_solvable(&self) -> bool {
        self.reachable_answers.binary_search(&self.correct_answer).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningWorld {
    questions: Vec<Question>,
    vocab_size: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct QuestionDoc {
    traces: usize,
    answer_of_trace: Vec<usize>,
    correct: usize,
}

#[derive(Serialize, Deserialize)]
struct WorldDoc {
    questions: Vec<QuestionDoc>,
    vocab_size: usize,
    seed: u64,
}

impl ReasoningWorld {
    pub fn num_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn question(&self, x: usize) -> &Question {
        &self.questions[x]
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn trace_count(&self, x: usize) -> usize {
        self.questions[x].trace_count()
    }

    fn check_question(&self, x: usize) -> Result<()> {
        if x >= self.questions.len() {
            return Err(Error::QuestionOutOfRange {
                question: x,
                questions: self.questions.len(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = WorldDoc {
            questions: self
                .questions
                .iter()
                .map(|q| QuestionDoc {
                    traces: q.trace_count(),
                    answer_of_trace: q.answer_of_trace.clone(),
                    correct: q.correct_answer,
                })
                .collect(),
            vocab_size: self.vocab_size,
            seed: self.seed,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WorldDoc = serde_json::from_str(text)?;
        let mut questions = Vec::with_capacity(doc.questions.len());
        for (x, q) in doc.questions.into_iter().enumerate() {
            if q.answer_of_trace.len() != q.traces {
                return Err(Error::WorldShape(format!(
                    "question {x}: {} trace labels for {} traces",
                    q.answer_of_trace.len(),
                    q.traces
                )));
            }
            if let Some(&a) = q.answer_of_trace.iter().find(|&&a| a >= doc.vocab_size) {
                return Err(Error::WorldShape(format!(
                    "question {x}: answer {a} outside vocabulary of {}",
                    doc.vocab_size
                )));
            }
            let mut reachable = q.answer_of_trace.clone();
            reachable.sort_unstable();
            reachable.dedup();
            questions.push(Question {
                answer_of_trace: q.answer_of_trace,
                correct_answer: q.correct,
                reachable_answers: reachable,
            });
        }
        Ok(Self {
            questions,
            vocab_size: doc.vocab_size,
            seed: doc.seed,
        })
    }
}

/// Sequential weighted sampling without replacement: `k` distinct indices
/// from `weights`, chosen proportionally with chosen entries zeroed out.
fn weighted_sample_distinct(weights: &[f64], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    debug_assert!(k <= weights.len());
    let mut live = weights.to_vec();
    let mut total: f64 = live.iter().sum();
    let mut picks = Vec::with_capacity(k);
    for _ in 0..k {
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = usize::MAX;
        for (i, &w) in live.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            u -= w;
            if u < 0.0 {
                chosen = i;
                break;
            }
        }
        // Float underflow at the tail: fall back to the last live index.
        if chosen == usize::MAX {
            chosen = live
                .iter()
                .rposition(|&w| w > 0.0)
                .expect("at least one live weight");
        }
        picks.push(chosen);
        total -= live[chosen];
        live[chosen] = 0.0;
    }
    picks
}

/// Generate a world from the spec. Answer sets are drawn per question from
/// the shared Zipf popularity; the correct answer is reachable exactly for
/// the solvable questions.
pub fn generate_world(spec: &WorldSpec) -> Result<ReasoningWorld> {
    if spec.num_questions == 0 || spec.traces_per_question == 0 || spec.vocab_size == 0 {
        return Err(Error::WorldShape("all sizes must be positive".into()));
    }
    if spec.answers_per_question == 0
        || spec.answers_per_question > spec.traces_per_question.min(spec.vocab_size)
    {
        return Err(Error::WorldShape(format!(
            "answers_per_question {} must lie in 1..=min(traces {}, vocab {})",
            spec.answers_per_question, spec.traces_per_question, spec.vocab_size
        )));
    }
    if !(0.0..=1.0).contains(&spec.solvable_fraction) {
        return Err(Error::WorldShape(format!(
            "solvable_fraction {} outside [0, 1]",
            spec.solvable_fraction
        )));
    }
    if !(0.0..=1.0).contains(&spec.difficulty_quantile) {
        return Err(Error::WorldShape(format!(
            "difficulty_quantile {} outside [0, 1]",
            spec.difficulty_quantile
        )));
    }

    let mut rng = substream(spec.seed, &[stream::WORLD]);
    let popularity: Vec<f64> = (0..spec.vocab_size)
        .map(|v| ((v + 1) as f64).powf(-spec.popularity_exponent))
        .collect();

    let n_solvable = (spec.solvable_fraction * spec.num_questions as f64).round() as usize;
    let mut order: Vec<usize> = (0..spec.num_questions).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut solvable = vec![false; spec.num_questions];
    for &x in order.iter().take(n_solvable) {
        solvable[x] = true;
    }

    let mut questions = Vec::with_capacity(spec.num_questions);
    for (x, &question_solvable) in solvable.iter().enumerate() {
        let answers = weighted_sample_distinct(&popularity, spec.answers_per_question, &mut rng);

        // Each chosen answer gets one trace; the rest of the traces are
        // spread uniformly. A seeded permutation of trace slots removes any
        // positional information.
        let a = spec.answers_per_question;
        let mut assignment: Vec<usize> = (0..spec.traces_per_question)
            .map(|i| {
                if i < a {
                    answers[i]
                } else {
                    answers[rng.gen_range(0..a)]
                }
            })
            .collect();
        rand::seq::SliceRandom::shuffle(assignment.as_mut_slice(), &mut rng);

        let mut reachable = assignment.clone();
        reachable.sort_unstable();
        reachable.dedup();

        let correct_answer = if question_solvable {
            // Rank reachable answers by trace mass, most probable first;
            // the quantile picks how deep in that ranking the correct answer
            // sits.
            let mut by_mass: Vec<(usize, usize)> = reachable
                .iter()
                .map(|&ans| {
                    (
                        assignment.iter().filter(|&&t| t == ans).count(),
                        ans,
                    )
                })
                .collect();
            by_mass.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let idx = (spec.difficulty_quantile * (by_mass.len() - 1) as f64).round() as usize;
            by_mass[idx].1
        } else {
            let candidates: Vec<usize> = (0..spec.vocab_size)
                .filter(|v| reachable.binary_search(v).is_err())
                .collect();
            if candidates.is_empty() {
                return Err(Error::WorldShape(format!(
                    "question {x} must be unsolvable but every vocabulary answer is reachable"
                )));
            }
            candidates[rng.gen_range(0..candidates.len())]
        };

        questions.push(Question {
            answer_of_trace: assignment,
            correct_answer,
            reachable_answers: reachable,
        });
    }

    Ok(ReasoningWorld {
        questions,
        vocab_size: spec.vocab_size,
        seed: spec.seed,
    })
}

/// Tabular policy: per-question trace logits plus shared answer logits, with
/// a frozen reference copy taken at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    trace_logits: Vec<Vec<f64>>,
    answer_logits: Vec<f64>,
    coupling: f64,
    ref_trace_logits: Vec<Vec<f64>>,
    ref_answer_logits: Vec<f64>,
}

impl PolicyParams {
    /// Initialize with i.i.d. normal trace logits of the given scale and
    /// zero shared answer logits; the reference policy is frozen here.
    pub fn init(world: &ReasoningWorld, init_scale: f64, coupling: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, init_scale.max(0.0)).expect("finite scale");
        let trace_logits: Vec<Vec<f64>> = world
            .questions()
            .iter()
            .map(|q| (0..q.trace_count()).map(|_| normal.sample(rng)).collect())
            .collect();
        let answer_logits = vec![0.0; world.vocab_size()];
        Self {
            ref_trace_logits: trace_logits.clone(),
            ref_answer_logits: answer_logits.clone(),
            trace_logits,
            answer_logits,
            coupling,
        }
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn trace_logits(&self, x: usize) -> &[f64] {
        &self.trace_logits[x]
    }

    pub fn answer_logits(&self) -> &[f64] {
        &self.answer_logits
    }

    /// Combined logit for one trace under the current parameters.
    fn logit(&self, world: &ReasoningWorld, x: usize, trace: usize) -> f64 {
        self.trace_logits[x][trace]
            + self.coupling * self.answer_logits[world.question(x).answer_of_trace[trace]]
    }

    fn logits(&self, world: &ReasoningWorld, x: usize) -> Vec<f64> {
        (0..world.trace_count(x))
            .map(|t| self.logit(world, x, t))
            .collect()
    }

    fn ref_logits(&self, world: &ReasoningWorld, x: usize) -> Vec<f64> {
        let q = world.question(x);
        (0..q.trace_count())
            .map(|t| {
                self.ref_trace_logits[x][t]
                    + self.coupling * self.ref_answer_logits[q.answer_of_trace[t]]
            })
            .collect()
    }

    /// Per-trace probabilities pi(. | x), max-subtracted for stability.
    pub fn distribution(&self, world: &ReasoningWorld, x: usize) -> Vec<f64> {
        softmax(&self.logits(world, x))
    }

    /// Per-trace log probabilities under the current policy.
    pub fn log_distribution(&self, world: &ReasoningWorld, x: usize) -> Vec<f64> {
        log_softmax(&self.logits(world, x))
    }

    /// Per-trace probabilities under the frozen reference policy.
    pub fn ref_distribution(&self, world: &ReasoningWorld, x: usize) -> Vec<f64> {
        softmax(&self.ref_logits(world, x))
    }

    pub fn ref_log_distribution(&self, world: &ReasoningWorld, x: usize) -> Vec<f64> {
        log_softmax(&self.ref_logits(world, x))
    }

    /// Marginal over global answers: sum of trace probabilities per class.
    /// Dense over the vocabulary; support is exactly the reachable set.
    pub fn answer_marginal(&self, world: &ReasoningWorld, x: usize) -> Vec<f64> {
        let probs = self.distribution(world, x);
        let mut marginal = vec![0.0; world.vocab_size()];
        for (t, &p) in probs.iter().enumerate() {
            marginal[world.question(x).answer_of_trace[t]] += p;
        }
        marginal
    }

    pub fn ref_answer_marginal(&self, world: &ReasoningWorld, x: usize) -> Vec<f64> {
        let probs = self.ref_distribution(world, x);
        let mut marginal = vec![0.0; world.vocab_size()];
        for (t, &p) in probs.iter().enumerate() {
            marginal[world.question(x).answer_of_trace[t]] += p;
        }
        marginal
    }

    /// True iff the current policy on `x` is bit-identical to the reference.
    pub fn matches_reference(&self, x: usize) -> bool {
        self.trace_logits[x] == self.ref_trace_logits[x]
    }

    pub(crate) fn trace_logits_mut(&mut self, x: usize) -> &mut [f64] {
        &mut self.trace_logits[x]
    }

    pub(crate) fn answer_logits_mut(&mut self) -> &mut [f64] {
        &mut self.answer_logits
    }

    /// Additively perturb one trace logit. Numerical-diagnostics hook used
    /// by gradient checks; training updates go through the trainer.
    pub fn nudge_trace_logit(&mut self, x: usize, trace: usize, delta: f64) {
        self.trace_logits[x][trace] += delta;
    }

    /// Additively perturb one shared answer logit.
    pub fn nudge_answer_logit(&mut self, answer: usize, delta: f64) {
        self.answer_logits[answer] += delta;
    }

    pub fn ref_trace_logits(&self, x: usize) -> &[f64] {
        &self.ref_trace_logits[x]
    }

    pub fn ref_answer_logits(&self) -> &[f64] {
        &self.ref_answer_logits
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits
        .iter()
        .map(|&z| (z - max).exp())
        .sum::<f64>()
        .ln();
    logits.iter().map(|&z| z - max - log_total).collect()
}

/// One sampled group for a question.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSample {
    pub question: usize,
    pub traces: Vec<usize>,
    pub answers: Vec<usize>,
    /// 0/1 correctness rewards.
    pub rewards: Vec<f64>,
    /// Log-probabilities of the sampled traces under the current policy.
    pub logp: Vec<f64>,
    /// Log-probabilities under the frozen reference policy.
    pub logp_ref: Vec<f64>,
}

impl BatchSample {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

fn draw_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u = rng.gen::<f64>();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

fn sample_from(
    world: &ReasoningWorld,
    x: usize,
    n: usize,
    probs: &[f64],
    logp: &[f64],
    logp_ref: &[f64],
    rng: &mut impl Rng,
) -> BatchSample {
    let q = world.question(x);
    let mut traces = Vec::with_capacity(n);
    let mut answers = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut lp = Vec::with_capacity(n);
    let mut lp_ref = Vec::with_capacity(n);
    for _ in 0..n {
        let t = draw_categorical(probs, rng);
        traces.push(t);
        let a = q.answer_of_trace[t];
        answers.push(a);
        rewards.push(f64::from(u8::from(a == q.correct_answer)));
        lp.push(logp[t]);
        lp_ref.push(logp_ref[t]);
    }
    BatchSample {
        question: x,
        traces,
        answers,
        rewards,
        logp: lp,
        logp_ref: lp_ref,
    }
}

/// Draw `n >= 2` i.i.d. traces for question `x` from the current policy,
/// recording log-probabilities under both the current and reference policy.
pub fn sample_batch(
    params: &PolicyParams,
    world: &ReasoningWorld,
    x: usize,
    n: usize,
    rng: &mut impl Rng,
) -> Result<BatchSample> {
    world.check_question(x)?;
    if n < 2 {
        return Err(Error::GroupTooSmall(n));
    }
    let probs = params.distribution(world, x);
    let logp = params.log_distribution(world, x);
    let logp_ref = params.ref_log_distribution(world, x);
    Ok(sample_from(world, x, n, &probs, &logp, &logp_ref, rng))
}

/// Draw `n` traces for question `x` from the reference policy. Consumes the
/// RNG exactly like [`sample_batch`], so a question whose policy equals the
/// reference produces identical samples on a shared stream.
pub fn sample_reference_batch(
    params: &PolicyParams,
    world: &ReasoningWorld,
    x: usize,
    n: usize,
    rng: &mut impl Rng,
) -> Result<BatchSample> {
    world.check_question(x)?;
    if n < 2 {
        return Err(Error::GroupTooSmall(n));
    }
    let probs = params.ref_distribution(world, x);
    let logp_ref = params.ref_log_distribution(world, x);
    Ok(sample_from(world, x, n, &probs, &logp_ref, &logp_ref, rng))
}
