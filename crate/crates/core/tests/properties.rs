//! Property and Monte-Carlo invariants for the bandit side of the lab.

use obex_core::algorithms::{
    run_balanced_ucb, run_pa_ucb, run_soft_ucb, run_ucb1_arms, run_uniform, RunRecord,
};
use obex_core::bandit::{
    expected_first_hit, make_balanced_instance, make_lower_bound_instance, survival_probability,
    BanditInstance, OutcomePartition,
};
use obex_core::rng::{stream, substream};
use proptest::prelude::*;

type RunFn = fn(&BanditInstance, usize, &mut rand_chacha::ChaCha8Rng) -> obex_core::Result<RunRecord>;

use rand::seq::SliceRandom;
use rand::Rng;

proptest! {
    /// Partition totality: class membership counts reproduce class_sizes.
    #[test]
    fn partition_counts_consistent(m in 1usize..12, per in 1usize..20, seed in any::<u64>()) {
        let k = m * per;
        let inst = make_balanced_instance(k, m, 0.2, seed).unwrap();
        let mut counts = vec![0usize; m];
        for arm in 0..k {
            counts[inst.partition().outcome_of(arm)] += 1;
        }
        prop_assert_eq!(&counts[..], inst.partition().class_sizes());
        let masses = inst.partition().class_masses();
        prop_assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    /// Survival probability is non-increasing in t and in s_star, and zero
    /// past K - s_star.
    #[test]
    fn survival_monotone(k in 2usize..200, s in 1usize..50, t in 0usize..220) {
        let s = s.min(k);
        let p = survival_probability(k, s, t).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        let p_next = survival_probability(k, s, t + 1).unwrap();
        prop_assert!(p_next <= p + 1e-15);
        if s < k {
            let p_bigger_class = survival_probability(k, s + 1, t).unwrap();
            prop_assert!(p_bigger_class <= p + 1e-15);
        }
        if t > k - s {
            prop_assert_eq!(p, 0.0);
        }
    }

    /// Uniform and UCB1 baselines ignore outcome labels entirely: an
    /// arbitrary relabeling changes nothing but the recorded label.
    #[test]
    fn arm_level_runs_are_label_equivariant(seed in any::<u64>(), perm_seed in any::<u64>()) {
        let inst = make_lower_bound_instance(24, &[2, 10, 12], 2, 0.25, 3).unwrap();
        let sigma = random_permutation(3, perm_seed, false);
        let permuted = permute_outcome_labels(&inst, &sigma);

        let runs: [RunFn; 2] = [
            |i, h, r| run_ucb1_arms(i, h, r),
            |i, h, r| run_uniform(i, h, r),
        ];
        for run in runs {
            let mut rng_a = substream(seed, &[stream::RUN]);
            let mut rng_b = substream(seed, &[stream::RUN]);
            let a = run(&inst, 160, &mut rng_a).unwrap();
            let b = run(&permuted, 160, &mut rng_b).unwrap();
            for (ra, rb) in a.rows().iter().zip(b.rows()) {
                prop_assert_eq!(ra.arm, rb.arm);
                prop_assert_eq!(ra.reward, rb.reward);
                prop_assert_eq!(sigma[ra.outcome], rb.outcome);
                prop_assert!((ra.cum_regret - rb.cum_regret).abs() < 1e-12);
            }
        }
    }

    /// Outcome-level algorithms: discovery is label-free, so the probe
    /// prefix is identical under any relabeling; and with the optimal label
    /// held smallest, argmax ties resolve consistently, so the whole regret
    /// sequence is label-equivariant.
    #[test]
    fn outcome_level_regret_is_label_equivariant(seed in any::<u64>(), perm_seed in any::<u64>()) {
        // Optimal outcome at label 0 (ties against it then resolve to it in
        // both runs); suboptimal outcomes share one mean, so tie swaps among
        // them cannot change pseudo-regret.
        let inst = instance_with_optimal_label_zero();
        let sigma = random_permutation(4, perm_seed, true);
        let permuted = permute_outcome_labels(&inst, &sigma);

        let runs: [RunFn; 2] = [
            |i, h, r| run_balanced_ucb(i, h, r),
            |i, h, r| run_pa_ucb(i, h, r),
        ];
        for run in runs {
            let mut rng_a = substream(seed, &[stream::RUN]);
            let mut rng_b = substream(seed, &[stream::RUN]);
            let a = run(&inst, 300, &mut rng_a).unwrap();
            let b = run(&permuted, 300, &mut rng_b).unwrap();
            let disc = a.discovery_time().unwrap();
            prop_assert_eq!(b.discovery_time(), Some(disc));
            for (ra, rb) in a.rows()[..disc].iter().zip(&b.rows()[..disc]) {
                prop_assert_eq!(ra.arm, rb.arm);
                prop_assert_eq!(sigma[ra.outcome], rb.outcome);
                prop_assert_eq!(ra.reward, rb.reward);
            }
            for (ra, rb) in a.rows().iter().zip(b.rows()) {
                prop_assert!((ra.inst_regret - rb.inst_regret).abs() < 1e-12,
                    "round {}", ra.round);
            }
        }
    }

    /// Fresh probes under strong generalization never exceed m, per run.
    #[test]
    fn pa_ucb_fresh_probes_bounded(seed in any::<u64>()) {
        let inst = make_lower_bound_instance(300, &[3, 150, 87, 60], 3, 0.2, 7).unwrap();
        let mut rng = substream(seed, &[stream::RUN]);
        let rec = run_pa_ucb(&inst, 600, &mut rng).unwrap();
        prop_assert!(rec.discovery_time().unwrap() <= 4);
    }
}

fn random_permutation(m: usize, seed: u64, fix_zero: bool) -> Vec<usize> {
    let mut sigma: Vec<usize> = (0..m).collect();
    let mut rng = substream(seed, &[99]);
    if fix_zero {
        sigma[1..].shuffle(&mut rng);
    } else {
        sigma.shuffle(&mut rng);
    }
    sigma
}

fn permute_outcome_labels(inst: &BanditInstance, sigma: &[usize]) -> BanditInstance {
    let m = inst.num_outcomes();
    let outcome_of_arm: Vec<usize> = inst
        .partition()
        .outcome_map()
        .iter()
        .map(|&o| sigma[o])
        .collect();
    let mut means = vec![0.0; m];
    for o in 0..m {
        means[sigma[o]] = inst.mean_of_outcome(o);
    }
    BanditInstance::new(
        OutcomePartition::new(outcome_of_arm, m).unwrap(),
        means,
        inst.seed(),
    )
    .unwrap()
}

fn instance_with_optimal_label_zero() -> BanditInstance {
    // 4 outcomes over 24 arms, sizes 3/9/6/6, optimal (mean 0.8) at label 0.
    let mut outcome_of_arm = Vec::new();
    for (o, size) in [(0usize, 3usize), (1, 9), (2, 6), (3, 6)] {
        outcome_of_arm.extend(std::iter::repeat_n(o, size));
    }
    // Fixed interleave so classes are not contiguous.
    let mut rng = substream(1234, &[stream::INSTANCE]);
    outcome_of_arm.shuffle(&mut rng);
    BanditInstance::new(
        OutcomePartition::new(outcome_of_arm, 4).unwrap(),
        vec![0.8, 0.5, 0.5, 0.5],
        0,
    )
    .unwrap()
}

/// Independent probe oracle: shuffle all arms, walk them in order, and
/// report the 1-based position of the first optimal-class hit.
fn probe_first_hit(inst: &BanditInstance, rng: &mut impl Rng) -> usize {
    let mut order: Vec<usize> = (0..inst.num_arms()).collect();
    order.shuffle(rng);
    order
        .iter()
        .position(|&a| inst.partition().outcome_of(a) == inst.optimal_outcome())
        .expect("optimal class is non-empty")
        + 1
}

/// Monte-Carlo agreement between seeded without-replacement probing and the
/// closed-form survival probability, on a small grid.
#[test]
fn survival_matches_probe_monte_carlo() {
    let reps = 6000usize;
    for &(k, s) in &[(30usize, 3usize), (50, 10)] {
        let sizes = [s, k - s];
        let mut rng = substream(500, &[stream::RUN]);
        let mut hits: Vec<usize> = Vec::with_capacity(reps);
        for rep in 0..reps {
            let inst =
                make_lower_bound_instance(k, &sizes, s, 0.2, rep as u64).unwrap();
            hits.push(probe_first_hit(&inst, &mut rng));
        }
        for t in [1usize, 3, 8] {
            let exact = survival_probability(k, s, t).unwrap();
            let emp = hits.iter().filter(|&&h| h > t).count() as f64 / reps as f64;
            let sigma = (exact * (1.0 - exact) / reps as f64).sqrt();
            assert!(
                (emp - exact).abs() <= 3.0 * sigma.max(1e-4),
                "(K={k}, s={s}, t={t}): {emp} vs {exact}"
            );
        }
        // Mean first hit matches (K+1)/(s+1); the probe position is negative
        // hypergeometric with variance s(K-s)(K+1) / ((s+1)^2 (s+2)).
        let mean = hits.iter().sum::<usize>() as f64 / reps as f64;
        let closed = expected_first_hit(k, s).unwrap();
        let (kf, sf) = (k as f64, s as f64);
        let var = sf * (kf - sf) * (kf + 1.0) / ((sf + 1.0).powi(2) * (sf + 2.0));
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - closed).abs() <= 4.0 * se,
            "(K={k}, s={s}): mean {mean} vs {closed} (se {se})"
        );
    }
}

/// Balanced discovery is dominated by with-replacement coupon collecting.
#[test]
fn discovery_time_below_coupon_collector() {
    let m = 12usize;
    let k = 10 * m;
    let reps = 3000usize;
    let mut total = 0usize;
    for seed in 0..reps as u64 {
        let inst = make_balanced_instance(k, m, 0.2, 3).unwrap();
        let mut rng = substream(seed, &[stream::RUN]);
        let rec = run_balanced_ucb(&inst, k, &mut rng).unwrap();
        total += rec.discovery_time().expect("horizon K always discovers");
    }
    let mean = total as f64 / reps as f64;
    let h_m: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
    assert!(
        mean <= m as f64 * h_m,
        "mean discovery {mean} above coupon-collector mean {}",
        m as f64 * h_m
    );
    assert!(mean <= m as f64 * ((m as f64).ln() + 1.0));
}

/// K = m: discovery is a permutation walk; every arm seen exactly once
/// before the UCB phase.
#[test]
fn singleton_classes_discover_in_m_rounds_at_most_k() {
    let m = 10usize;
    for seed in 0..50u64 {
        let inst = make_balanced_instance(m, m, 0.2, 7).unwrap();
        let mut rng = substream(seed, &[stream::RUN]);
        let rec = run_balanced_ucb(&inst, 2 * m, &mut rng).unwrap();
        assert_eq!(rec.discovery_time(), Some(m));
    }
}

fn mean_first_hit(k: usize, sizes: &[usize], s_star: usize, rho: f64, reps: usize) -> (f64, f64) {
    let rhos = vec![rho; sizes.len()];
    let mut total = 0usize;
    let mut sq = 0.0f64;
    for seed in 0..reps as u64 {
        let inst = make_lower_bound_instance(k, sizes, s_star, 0.2, seed).unwrap();
        let mut rng = substream(seed ^ 0x5050, &[stream::RUN]);
        let rec = run_soft_ucb(&inst, &rhos, k, &mut rng).unwrap();
        let hit = rec.first_hit_optimal().expect("must hit within K probes");
        total += hit;
        sq += (hit * hit) as f64;
    }
    let mean = total as f64 / reps as f64;
    let var = sq / reps as f64 - mean * mean;
    (mean, (var / reps as f64).sqrt())
}

fn soft_bound(k: usize, sizes: &[usize], optimal: usize, rho: f64) -> f64 {
    let p_star = sizes[optimal] as f64 / k as f64;
    let rho_bar: f64 = sizes
        .iter()
        .enumerate()
        .filter(|(o, _)| *o != optimal)
        .map(|(_, &s)| rho * s as f64 / k as f64)
        .sum();
    (1.0 - rho_bar) / p_star
}

/// Soft exclusion first-hit: mean tau_star <= (1 - rho_bar) / p_star for
/// moderate exclusion fractions (small version of the grid check).
#[test]
fn soft_first_hit_bound_smoke() {
    let (k, sizes, s_star) = (200usize, [8usize, 96, 60, 36], 8usize);
    for rho in [0.0f64, 0.25, 0.5] {
        let (mean, se) = mean_first_hit(k, &sizes, s_star, rho, 1500);
        let bound = soft_bound(k, &sizes, 0, rho);
        assert!(
            mean <= bound + 3.0 * se,
            "rho={rho}: mean {mean} vs bound {bound}"
        );
    }
}

/// Negative control: at large exclusion fractions the bound breaks on large
/// instances, because the first probes are drawn before any exclusion
/// exists (the geometric domination needs the final pool from probe one).
/// The bound tends to 1 as rho -> 1 while the first probe alone already
/// costs 2 - p_star in expectation.
#[test]
fn soft_first_hit_bound_fails_for_large_rho_on_large_instances() {
    let (k, sizes, s_star) = (500usize, [10usize, 490], 10usize);
    let (mean, se) = mean_first_hit(k, &sizes, s_star, 0.9, 2000);
    let bound = soft_bound(k, &sizes, 0, 0.9);
    assert!(
        mean > bound + 3.0 * se,
        "expected violation: mean {mean}, bound {bound}, se {se}"
    );
}

/// Post-discovery regret of the outcome-level algorithms stays well below
/// the uniform baseline on a mid-size instance.
#[test]
fn outcome_ucb_beats_uniform() {
    let inst = make_balanced_instance(400, 8, 0.2, 5).unwrap();
    let horizon = 4000usize;
    let mut reg_ucb = 0.0;
    let mut reg_uni = 0.0;
    for seed in 0..8u64 {
        let mut rng = substream(seed, &[stream::RUN]);
        reg_ucb += run_balanced_ucb(&inst, horizon, &mut rng)
            .unwrap()
            .final_regret();
        let mut rng = substream(seed, &[stream::RUN, 1]);
        reg_uni += run_uniform(&inst, horizon, &mut rng).unwrap().final_regret();
    }
    assert!(
        reg_ucb < 0.5 * reg_uni,
        "outcome UCB {reg_ucb} not clearly below uniform {reg_uni}"
    );
}

proptest! {
    /// k3 is non-negative everywhere and zero exactly at equal
    /// log-probabilities; strictly positive once the ratio is resolvable at
    /// float precision.
    #[test]
    fn k3_non_negative(lp in -30.0f64..0.0, lr in -30.0f64..0.0) {
        let v = obex_core::grpo::kl_k3(lp, lr);
        prop_assert!(v >= 0.0, "k3({lp}, {lr}) = {v}");
        prop_assert_eq!(obex_core::grpo::kl_k3(lp, lp), 0.0);
        if (lp - lr).abs() > 1e-6 {
            prop_assert!(v > 0.0);
        }
    }

    /// The batch repetition penalty sums to -(2 / n) x (duplicate pairs),
    /// checked against an independent pair-counting oracle.
    #[test]
    fn batch_bonus_sum_matches_pair_count(answers in proptest::collection::vec(0usize..6, 2..24)) {
        let total: f64 = obex_core::grpo::batch_bonus(&answers).iter().sum();
        let n = answers.len() as f64;
        let mut pairs = 0usize;
        for i in 0..answers.len() {
            for j in (i + 1)..answers.len() {
                if answers[i] == answers[j] {
                    pairs += 1;
                }
            }
        }
        let expected = -(pairs as f64) * 2.0 / n;
        prop_assert!((total - expected).abs() < 1e-9, "{total} vs {expected}");
    }

    /// Group advantages have (near-)zero mean whenever rewards are mixed.
    #[test]
    fn advantages_center(rewards in proptest::collection::vec(prop_oneof![Just(0.0f64), Just(1.0f64)], 2..32)) {
        let adv = obex_core::grpo::group_advantages(&rewards, 1e-6).unwrap();
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
        if rewards.iter().all(|&r| r == rewards[0]) {
            prop_assert!(adv.iter().all(|&a| a == 0.0));
        }
    }
}
