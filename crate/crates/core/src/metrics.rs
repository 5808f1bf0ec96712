//! Evaluation metrics: pass@k, cumulative solved/distinct curves, batch
//! diversity, and exact policy entropy/accuracy.
//!
//! Training is read as a sampling process: epoch `t` of a run with group
//! size `n` corresponds to `k = n * t` samples per question, so curves over
//! epochs are directly comparable with sampling the same budget from the
//! reference policy.

use crate::world::{BatchSample, PolicyParams, ReasoningWorld};
use crate::{Error, Result};

/// One recorded sample of the training (or reference) stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleEvent {
    /// 1-based epoch.
    pub epoch: usize,
    pub answer: usize,
    pub correct: bool,
}

/// Ordered per-question sample log; every epoch contributes exactly the
/// configured group size per question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleHistory {
    n_per_epoch: usize,
    epochs: usize,
    questions: Vec<Vec<SampleEvent>>,
}

impl SampleHistory {
    pub fn new(num_questions: usize, n_per_epoch: usize) -> Self {
        Self {
            n_per_epoch,
            epochs: 0,
            questions: vec![Vec::new(); num_questions],
        }
    }

    pub fn num_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn n_per_epoch(&self) -> usize {
        self.n_per_epoch
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn samples(&self, question: usize) -> &[SampleEvent] {
        &self.questions[question]
    }

    /// Append one epoch: one batch per question, each of the configured
    /// size.
    pub fn record_epoch(&mut self, epoch: usize, batches: &[BatchSample]) -> Result<()> {
        if epoch != self.epochs + 1 {
            return Err(Error::BadEpochSize {
                epoch,
                question: usize::MAX,
                got: 0,
                expected: self.epochs + 1,
            });
        }
        if batches.len() != self.questions.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} batches for {} questions",
                batches.len(),
                self.questions.len()
            )));
        }
        for batch in batches {
            if batch.len() != self.n_per_epoch {
                return Err(Error::BadEpochSize {
                    epoch,
                    question: batch.question,
                    got: batch.len(),
                    expected: self.n_per_epoch,
                });
            }
        }
        for batch in batches {
            let log = &mut self.questions[batch.question];
            for (i, &a) in batch.answers.iter().enumerate() {
                log.push(SampleEvent {
                    epoch,
                    answer: a,
                    correct: batch.rewards[i] == 1.0,
                });
            }
        }
        self.epochs = epoch;
        Ok(())
    }

    /// First epoch with a correct sample for `question`, if any.
    pub fn first_solve_epoch(&self, question: usize) -> Option<usize> {
        self.questions[question]
            .iter()
            .find(|s| s.correct)
            .map(|s| s.epoch)
    }

    /// Cumulative fraction of questions with at least one correct sample,
    /// per epoch. Non-decreasing; epoch t covers exactly the first n*t
    /// samples.
    pub fn solved_curve(&self) -> Vec<f64> {
        let q = self.questions.len() as f64;
        let firsts: Vec<Option<usize>> = (0..self.questions.len())
            .map(|x| self.first_solve_epoch(x))
            .collect();
        (1..=self.epochs)
            .map(|t| {
                firsts.iter().filter(|f| matches!(f, Some(e) if *e <= t)).count() as f64 / q
            })
            .collect()
    }

    /// Mean cumulative distinct-answer count per epoch. With
    /// `restrict_unsolved`, the mean covers only the questions with no
    /// correct sample up to that epoch; an empty cohort yields `None`, never
    /// a filled-in zero.
    pub fn diff_curve(&self, restrict_unsolved: bool) -> Vec<Option<f64>> {
        // Per question: distinct count after each epoch.
        let per_question: Vec<Vec<usize>> = self
            .questions
            .iter()
            .map(|log| {
                let mut seen = std::collections::HashSet::new();
                let mut by_epoch = vec![0usize; self.epochs];
                let mut idx = 0usize;
                for t in 1..=self.epochs {
                    while idx < log.len() && log[idx].epoch == t {
                        seen.insert(log[idx].answer);
                        idx += 1;
                    }
                    by_epoch[t - 1] = seen.len();
                }
                by_epoch
            })
            .collect();
        let firsts: Vec<Option<usize>> = (0..self.questions.len())
            .map(|x| self.first_solve_epoch(x))
            .collect();
        (1..=self.epochs)
            .map(|t| {
                let cohort: Vec<usize> = (0..self.questions.len())
                    .filter(|&x| {
                        !restrict_unsolved || !matches!(firsts[x], Some(e) if e <= t)
                    })
                    .collect();
                if cohort.is_empty() {
                    None
                } else {
                    Some(
                        cohort.iter().map(|&x| per_question[x][t - 1] as f64).sum::<f64>()
                            / cohort.len() as f64,
                    )
                }
            })
            .collect()
    }

    /// Mean number of distinct answers inside each epoch's batch, per epoch,
    /// over all questions or only those still unsolved through that epoch.
    pub fn batch_distinct_curve(&self, restrict_unsolved: bool) -> Vec<Option<f64>> {
        let firsts: Vec<Option<usize>> = (0..self.questions.len())
            .map(|x| self.first_solve_epoch(x))
            .collect();
        (1..=self.epochs)
            .map(|t| {
                let mut total = 0usize;
                let mut count = 0usize;
                for (x, log) in self.questions.iter().enumerate() {
                    if restrict_unsolved && matches!(firsts[x], Some(e) if e <= t) {
                        continue;
                    }
                    let answers: Vec<usize> = log
                        .iter()
                        .filter(|s| s.epoch == t)
                        .map(|s| s.answer)
                        .collect();
                    total += batch_distinct(&answers);
                    count += 1;
                }
                if count == 0 {
                    None
                } else {
                    Some(total as f64 / count as f64)
                }
            })
            .collect()
    }

    /// Number of correct samples for a question over the whole history.
    pub fn correct_count(&self, question: usize) -> usize {
        self.questions[question].iter().filter(|s| s.correct).count()
    }
}

/// Unbiased pass@k from `n` samples with `c` correct:
/// `1 - C(n-c, k) / C(n, k)`, evaluated as a stable product.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64> {
    if c > n {
        return Err(Error::BadCorrectCount { c, n });
    }
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    if c == 0 {
        return Ok(0.0);
    }
    if n - c < k {
        return Ok(1.0);
    }
    let mut miss = 1.0;
    for i in 0..k {
        miss *= (n - c - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - miss)
}

/// Distinct answers in one batch.
pub fn batch_distinct(answers: &[usize]) -> usize {
    let mut sorted = answers.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len()
}

/// Shannon entropy of a probability vector, in nats.
pub fn entropy_nats(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Entropy of the trace distribution of question `x`.
pub fn policy_entropy(params: &PolicyParams, world: &ReasoningWorld, x: usize) -> f64 {
    entropy_nats(&params.distribution(world, x))
}

/// Entropy of the answer marginal of question `x`. The trace-level entropy
/// has no token-level analog here, so the answer-level value is reported
/// alongside it.
pub fn answer_entropy(params: &PolicyParams, world: &ReasoningWorld, x: usize) -> f64 {
    entropy_nats(&params.answer_marginal(world, x))
}

/// Exact expected accuracy over the uniform question distribution: the
/// probability mass each question's policy puts on its correct answer, no
/// sampling involved.
pub fn mean_accuracy(params: &PolicyParams, world: &ReasoningWorld) -> f64 {
    let q = world.num_questions();
    (0..q)
        .map(|x| params.answer_marginal(world, x)[world.question(x).correct_answer])
        .sum::<f64>()
        / q as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, substream};
    use crate::world::{generate_world, PolicyParams, WorldSpec};

    fn batch(question: usize, answers: Vec<usize>, rewards: Vec<f64>) -> BatchSample {
        let n = answers.len();
        BatchSample {
            question,
            traces: vec![0; n],
            answers,
            rewards,
            logp: vec![0.0; n],
            logp_ref: vec![0.0; n],
        }
    }

    #[test]
    fn pass_at_k_trivial_and_enumerated() {
        assert_eq!(pass_at_k(5, 5, 3).unwrap(), 1.0);
        assert_eq!(pass_at_k(5, 0, 3).unwrap(), 0.0);
        // n=2, c=1, k=1: two singleton subsets, one correct.
        assert!((pass_at_k(2, 1, 1).unwrap() - 0.5).abs() < 1e-15);
        // n=4, c=2, k=2: of the 6 pairs only one misses both correct.
        assert!((pass_at_k(4, 2, 2).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!(matches!(pass_at_k(4, 2, 5), Err(Error::KTooLarge { .. })));
        assert!(matches!(pass_at_k(4, 5, 2), Err(Error::BadCorrectCount { .. })));
    }

    #[test]
    fn pass_at_k_monotone_and_full_k() {
        for n in 1..=10usize {
            for c in 0..=n {
                let mut prev = 0.0;
                for k in 1..=n {
                    let v = pass_at_k(n, c, k).unwrap();
                    assert!(v + 1e-12 >= prev, "k-monotonicity failed at n={n} c={c} k={k}");
                    prev = v;
                    if c > 0 {
                        let less = pass_at_k(n, c - 1, k).unwrap();
                        assert!(v + 1e-12 >= less, "c-monotonicity failed");
                    }
                }
                assert_eq!(pass_at_k(n, c, n).unwrap() == 1.0, c >= 1);
            }
        }
    }

    /// Estimator equivalence against random k-subsets.
    #[test]
    fn pass_at_k_matches_subset_sampling() {
        use rand::seq::SliceRandom;
        let mut rng = substream(3, &[stream::EVAL]);
        for &(n, c, k) in &[(10usize, 3usize, 4usize), (8, 1, 2), (12, 6, 5)] {
            let exact = pass_at_k(n, c, k).unwrap();
            let reps = 20_000;
            let mut hits = 0usize;
            let mut items: Vec<usize> = (0..n).collect();
            for _ in 0..reps {
                items.shuffle(&mut rng);
                if items[..k].iter().any(|&i| i < c) {
                    hits += 1;
                }
            }
            let emp = hits as f64 / reps as f64;
            let sigma = (exact * (1.0 - exact) / reps as f64).sqrt();
            assert!(
                (emp - exact).abs() <= 3.0 * sigma.max(1e-4),
                "(n={n}, c={c}, k={k}): {emp} vs {exact}"
            );
        }
    }

    #[test]
    fn solved_curve_cases() {
        let mut h = SampleHistory::new(2, 2);
        h.record_epoch(1, &[batch(0, vec![1, 1], vec![0.0, 0.0]), batch(1, vec![2, 2], vec![1.0, 0.0])])
            .unwrap();
        h.record_epoch(2, &[batch(0, vec![1, 3], vec![0.0, 1.0]), batch(1, vec![2, 2], vec![0.0, 0.0])])
            .unwrap();
        assert_eq!(h.solved_curve(), vec![0.5, 1.0]);
        assert_eq!(h.first_solve_epoch(0), Some(2));
        assert_eq!(h.first_solve_epoch(1), Some(1));

        let mut none = SampleHistory::new(2, 2);
        none.record_epoch(1, &[batch(0, vec![1, 1], vec![0.0, 0.0]), batch(1, vec![2, 2], vec![0.0, 0.0])])
            .unwrap();
        assert_eq!(none.solved_curve(), vec![0.0]);
    }

    #[test]
    fn diff_curve_union_and_cohorts() {
        let mut h = SampleHistory::new(2, 2);
        h.record_epoch(1, &[batch(0, vec![1, 2], vec![0.0, 0.0]), batch(1, vec![5, 5], vec![1.0, 0.0])])
            .unwrap();
        h.record_epoch(2, &[batch(0, vec![2, 3], vec![0.0, 0.0]), batch(1, vec![5, 6], vec![0.0, 0.0])])
            .unwrap();
        let all = h.diff_curve(false);
        assert_eq!(all, vec![Some(1.5), Some(2.5)]);
        // Question 1 solved at epoch 1: unsolved cohort = {0} throughout.
        let unsolved = h.diff_curve(true);
        assert_eq!(unsolved, vec![Some(2.0), Some(3.0)]);

        // All solved immediately: cohort empty, values absent.
        let mut s = SampleHistory::new(1, 2);
        s.record_epoch(1, &[batch(0, vec![1, 2], vec![1.0, 1.0])]).unwrap();
        assert_eq!(s.diff_curve(true), vec![None]);
    }

    #[test]
    fn diff_curve_ignores_within_epoch_order() {
        let mut a = SampleHistory::new(1, 3);
        a.record_epoch(1, &[batch(0, vec![1, 2, 2], vec![0.0; 3])]).unwrap();
        a.record_epoch(2, &[batch(0, vec![3, 1, 4], vec![0.0; 3])]).unwrap();
        let mut b = SampleHistory::new(1, 3);
        b.record_epoch(1, &[batch(0, vec![2, 2, 1], vec![0.0; 3])]).unwrap();
        b.record_epoch(2, &[batch(0, vec![4, 3, 1], vec![0.0; 3])]).unwrap();
        assert_eq!(a.diff_curve(false), b.diff_curve(false));
        assert_eq!(a.solved_curve(), b.solved_curve());
    }

    #[test]
    fn batch_distinct_cases() {
        assert_eq!(batch_distinct(&[7, 7, 7]), 1);
        assert_eq!(batch_distinct(&[0, 1, 2, 3, 4, 5, 6, 7]), 8);
        assert_eq!(batch_distinct(&[4, 4, 5, 6]), 3);
        assert_eq!(batch_distinct(&[]), 0);
    }

    #[test]
    fn batch_distinct_curve_cohorts() {
        let mut h = SampleHistory::new(2, 2);
        h.record_epoch(1, &[batch(0, vec![1, 2], vec![0.0, 0.0]), batch(1, vec![5, 5], vec![1.0, 0.0])])
            .unwrap();
        let all = h.batch_distinct_curve(false);
        assert_eq!(all, vec![Some(1.5)]);
        let unsolved = h.batch_distinct_curve(true);
        assert_eq!(unsolved, vec![Some(2.0)]);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_nats(&[1.0, 0.0, 0.0]), 0.0);
        let k = 8usize;
        let uniform = vec![1.0 / k as f64; k];
        assert!((entropy_nats(&uniform) - (k as f64).ln()).abs() < 1e-12);
        assert!((entropy_nats(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_extremes_and_monte_carlo() {
        let spec = WorldSpec {
            num_questions: 10,
            traces_per_question: 6,
            answers_per_question: 3,
            vocab_size: 12,
            popularity_exponent: 0.8,
            solvable_fraction: 0.0,
            difficulty_quantile: 0.5,
            seed: 2,
        };
        let world = generate_world(&spec).unwrap();
        let mut rng = substream(0, &[stream::INIT]);
        let params = PolicyParams::init(&world, 1.0, 0.3, &mut rng);
        // Correct answers unreachable everywhere: exact accuracy 0.
        assert_eq!(mean_accuracy(&params, &world), 0.0);

        let mut solvable = spec.clone();
        solvable.solvable_fraction = 1.0;
        let world = generate_world(&solvable).unwrap();
        let mut rng = substream(1, &[stream::INIT]);
        let params = PolicyParams::init(&world, 1.2, 0.0, &mut rng);
        let exact = mean_accuracy(&params, &world);
        // Monte-Carlo estimate.
        let mut hits = 0usize;
        let reps = 4000usize;
        let mut srng = substream(9, &[stream::EVAL]);
        for x in 0..world.num_questions() {
            let b = crate::world::sample_batch(&params, &world, x, reps, &mut srng).unwrap();
            hits += b.rewards.iter().filter(|&&r| r == 1.0).count();
        }
        let total = reps * world.num_questions();
        let emp = hits as f64 / total as f64;
        let sigma = (exact * (1.0 - exact) / total as f64).sqrt();
        assert!(
            (emp - exact).abs() <= 3.0 * sigma.max(1e-4),
            "{emp} vs {exact}"
        );
    }

    #[test]
    fn single_answer_vocabulary_pins_diff_at_one() {
        let spec = WorldSpec {
            num_questions: 5,
            traces_per_question: 6,
            answers_per_question: 1,
            vocab_size: 1,
            popularity_exponent: 0.0,
            solvable_fraction: 1.0,
            difficulty_quantile: 0.0,
            seed: 3,
        };
        let world = generate_world(&spec).unwrap();
        let history = crate::grpo::reference_stream(&world, 1.0, 4, 6, 0).unwrap();
        for v in history.diff_curve(false) {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn all_distinct_answers_grow_by_n_per_epoch() {
        let mut h = SampleHistory::new(1, 2);
        h.record_epoch(1, &[batch(0, vec![0, 1], vec![0.0, 0.0])]).unwrap();
        h.record_epoch(2, &[batch(0, vec![2, 3], vec![0.0, 0.0])]).unwrap();
        h.record_epoch(3, &[batch(0, vec![4, 5], vec![0.0, 0.0])]).unwrap();
        assert_eq!(h.diff_curve(false), vec![Some(2.0), Some(4.0), Some(6.0)]);
    }

    #[test]
    fn deterministic_correct_policy_has_accuracy_one() {
        let spec = WorldSpec {
            num_questions: 6,
            traces_per_question: 5,
            answers_per_question: 3,
            vocab_size: 9,
            popularity_exponent: 1.0,
            solvable_fraction: 1.0,
            difficulty_quantile: 0.5,
            seed: 8,
        };
        let world = generate_world(&spec).unwrap();
        let mut rng = substream(0, &[stream::INIT]);
        let mut params = PolicyParams::init(&world, 0.5, 0.0, &mut rng);
        for x in 0..world.num_questions() {
            let q = world.question(x);
            let trace = q
                .answer_of_trace
                .iter()
                .position(|&a| a == q.correct_answer)
                .expect("solvable question");
            params.nudge_trace_logit(x, trace, 50.0);
        }
        assert!(mean_accuracy(&params, &world) > 1.0 - 1e-12);
    }

    #[test]
    fn history_rejects_wrong_epoch_or_size() {
        let mut h = SampleHistory::new(1, 2);
        assert!(h.record_epoch(2, &[batch(0, vec![1, 2], vec![0.0, 0.0])]).is_err());
        assert!(h
            .record_epoch(1, &[batch(0, vec![1, 2, 3], vec![0.0; 3])])
            .is_err());
        h.record_epoch(1, &[batch(0, vec![1, 2], vec![0.0, 0.0])]).unwrap();
        assert_eq!(h.epochs(), 1);
    }
}
