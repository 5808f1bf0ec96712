//! Mode dispatch: run every seed of a config deterministically and record a
//! manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use obex_core::algorithms::{
    run_balanced_ucb, run_pa_ucb, run_soft_ucb, run_ucb1_arms, run_uniform, RunRecord,
};
use obex_core::bandit::{make_balanced_instance, make_lower_bound_instance, BanditInstance};
use obex_core::grpo::{reference_stream, StepStats, TrainConfig, Trainer};
use obex_core::metrics::{self, SampleHistory};
use obex_core::rng::{stream, substream};
use obex_core::world::{generate_world, sample_batch, PolicyParams, ReasoningWorld, WorldSpec};

use crate::config::{BanditAlgorithm, InstanceKind, Mode, RunConfig};
use crate::manifest::ExperimentManifest;

pub const METRICS_CSV_HEADER: &str = "epoch,k,metric_name,value,cohort,variant,seed";

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    /// Matched sample count (n * epoch) for curve rows; the evaluated k for
    /// pass@k rows.
    pub k: usize,
    pub metric: &'static str,
    pub value: f64,
    pub cohort: &'static str,
    pub variant: String,
    pub seed: u64,
}

impl MetricRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.k, self.metric, self.value, self.cohort, self.variant, self.seed
        )
    }
}

/// Run all seeds of the config and write outputs plus a manifest under
/// `cfg.out_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentManifest> {
    cfg.validate()?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;

    let hash = cfg.config_hash();
    let resolved_name = format!("config_{}_{hash}.resolved.txt", cfg.mode);
    std::fs::write(dir.join(&resolved_name), cfg.resolved_text())?;

    let mut manifest = ExperimentManifest {
        mode: cfg.mode.to_string(),
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: cfg.seeds.clone(),
        resolved_config: resolved_name,
        shared_outputs: Vec::new(),
        outputs: BTreeMap::new(),
        wall_clock_secs: BTreeMap::new(),
    };

    match cfg.mode {
        Mode::Bandit => run_bandit_mode(cfg, dir, &mut manifest)?,
        Mode::Train => run_train_mode(cfg, dir, &mut manifest)?,
        Mode::BaseSample => run_base_sample_mode(cfg, dir, &mut manifest)?,
    }

    manifest.save(dir)?;
    manifest.verify_complete(dir)?;
    Ok(manifest)
}

pub fn build_instance(cfg: &RunConfig, seed: u64) -> Result<BanditInstance> {
    let b = &cfg.bandit;
    let inst = match b.instance {
        InstanceKind::Balanced => make_balanced_instance(b.arms, b.outcomes, b.delta, seed)?,
        InstanceKind::LowerBound => {
            let sizes = if b.class_sizes.is_empty() {
                vec![b.s_star, b.arms - b.s_star]
            } else {
                b.class_sizes.clone()
            };
            make_lower_bound_instance(b.arms, &sizes, b.s_star, b.delta, seed)?
        }
    };
    Ok(inst)
}

fn broadcast_rho(rho: &[f64], outcomes: usize) -> Vec<f64> {
    if rho.len() == 1 {
        vec![rho[0]; outcomes]
    } else {
        rho.to_vec()
    }
}

pub fn run_bandit_algorithm(
    cfg: &RunConfig,
    instance: &BanditInstance,
    seed: u64,
) -> Result<RunRecord> {
    let mut rng = substream(seed, &[stream::RUN]);
    let horizon = cfg.bandit.horizon;
    let record = match cfg.bandit.algorithm {
        BanditAlgorithm::BalancedUcb => run_balanced_ucb(instance, horizon, &mut rng)?,
        BanditAlgorithm::PaUcb => run_pa_ucb(instance, horizon, &mut rng)?,
        BanditAlgorithm::SoftUcb => {
            let rho = broadcast_rho(&cfg.bandit.rho, instance.num_outcomes());
            run_soft_ucb(instance, &rho, horizon, &mut rng)?
        }
        BanditAlgorithm::Ucb1 => run_ucb1_arms(instance, horizon, &mut rng)?,
        BanditAlgorithm::Uniform => run_uniform(instance, horizon, &mut rng)?,
    };
    Ok(record)
}

/// Run one closure per seed, in parallel batches bounded by the machine's
/// parallelism. Each worker is a pure function of its seed and writes only
/// its own files, so the parallelism cannot affect output bytes. Results
/// come back in seed order.
fn run_seeds<T, F>(seeds: &[u64], worker: F) -> Result<Vec<(u64, T, f64)>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let width = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .max(1);
    let mut results = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(width) {
        let chunk_results: Vec<(u64, T, f64)> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    let worker = &worker;
                    scope.spawn(move || {
                        let start = Instant::now();
                        worker(seed).map(|out| (seed, out, start.elapsed().as_secs_f64()))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("seed worker panicked"))
                .collect::<Result<Vec<_>>>()
        })?;
        results.extend(chunk_results);
    }
    Ok(results)
}

fn record_outputs(
    manifest: &mut ExperimentManifest,
    results: Vec<(u64, Vec<String>, f64)>,
) {
    for (seed, files, wall) in results {
        manifest.outputs.insert(seed, files);
        manifest.wall_clock_secs.insert(seed, wall);
    }
}

fn run_bandit_mode(cfg: &RunConfig, dir: &Path, manifest: &mut ExperimentManifest) -> Result<()> {
    let alg = cfg.bandit.algorithm.to_string();
    let results = run_seeds(&cfg.seeds, |seed| {
        let instance = build_instance(cfg, seed)?;
        let record = run_bandit_algorithm(cfg, &instance, seed)?;

        let inst_name = format!("instance_{alg}_seed{seed}.json");
        std::fs::write(dir.join(&inst_name), instance.to_json()?)?;
        let csv_name = format!("bandit_{alg}_seed{seed}.csv");
        let mut buf = Vec::new();
        record.write_csv(&mut buf)?;
        std::fs::write(dir.join(&csv_name), buf)?;
        Ok(vec![inst_name, csv_name])
    })?;
    record_outputs(manifest, results);
    Ok(())
}

pub fn world_spec_of(cfg: &RunConfig) -> WorldSpec {
    WorldSpec {
        num_questions: cfg.world.questions,
        traces_per_question: cfg.world.traces,
        answers_per_question: cfg.world.answers,
        vocab_size: cfg.world.vocab,
        popularity_exponent: cfg.world.zipf,
        solvable_fraction: cfg.world.solvable,
        difficulty_quantile: cfg.world.difficulty,
        seed: cfg.world.seed,
    }
}

pub fn train_config_of(cfg: &RunConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        group_size: cfg.train.n,
        bonus: cfg.train.variant,
        bonus_coef: cfg.train.c,
        const_baseline: cfg.train.b0,
        kl_weight: cfg.train.kl,
        adv_epsilon: cfg.train.eps,
        learning_rate: cfg.train.lr,
        epochs: cfg.train.epochs,
        count_timing: cfg.train.count_timing,
        all_correct_scope: cfg.train.all_correct,
        coupling: cfg.train.gamma,
        init_scale: cfg.world.init_scale,
        seed,
    }
}

fn write_world(cfg: &RunConfig, dir: &Path, world: &ReasoningWorld) -> Result<String> {
    let name = format!("world_{}.json", cfg.world.seed);
    std::fs::write(dir.join(&name), world.to_json()?)?;
    Ok(name)
}

/// History-based rows shared by train and base-sample modes: solved curve,
/// cumulative distinct answers, per-batch distinct answers, and pass@k over
/// the realized stream at the evaluation cadence.
fn history_rows(
    history: &SampleHistory,
    cadence: usize,
    ks: &[usize],
    variant: &str,
    seed: u64,
) -> Vec<MetricRow> {
    let n = history.n_per_epoch();
    let epochs = history.epochs();
    let mut rows = Vec::new();
    let row = |epoch: usize, k: usize, metric: &'static str, value: f64, cohort: &'static str| MetricRow {
        epoch,
        k,
        metric,
        value,
        cohort,
        variant: variant.to_string(),
        seed,
    };

    for (i, v) in history.solved_curve().into_iter().enumerate() {
        rows.push(row(i + 1, n * (i + 1), "solved_frac", v, "all"));
    }
    for (restrict, cohort) in [(false, "all"), (true, "unsolved")] {
        for (i, v) in history.diff_curve(restrict).into_iter().enumerate() {
            if let Some(v) = v {
                rows.push(row(i + 1, n * (i + 1), "diff_cum", v, cohort));
            }
        }
        for (i, v) in history.batch_distinct_curve(restrict).into_iter().enumerate() {
            if let Some(v) = v {
                rows.push(row(i + 1, n * (i + 1), "batch_distinct", v, cohort));
            }
        }
    }

    // pass@k over the realized stream, evaluated at the cadence and at the
    // final epoch.
    let mut eval_epochs: Vec<usize> = (1..=epochs).filter(|t| t % cadence == 0).collect();
    if epochs > 0 && !eval_epochs.contains(&epochs) {
        eval_epochs.push(epochs);
    }
    for &t in &eval_epochs {
        let total = n * t;
        for &k in ks {
            if k > total {
                continue;
            }
            let mut acc = 0.0;
            for x in 0..history.num_questions() {
                let c = history
                    .samples(x)
                    .iter()
                    .filter(|s| s.epoch <= t && s.correct)
                    .count();
                acc += metrics::pass_at_k(total, c, k).expect("validated k");
            }
            rows.push(row(
                t,
                k,
                "pass_at_k_hist",
                acc / history.num_questions() as f64,
                "all",
            ));
        }
    }
    rows
}

/// Policy-dependent rows at one checkpoint epoch: exact accuracy, entropies,
/// and fresh-sample pass@k estimates.
fn checkpoint_rows(
    params: &PolicyParams,
    world: &ReasoningWorld,
    epoch: usize,
    n_per_epoch: usize,
    eval: &crate::config::EvalConfig,
    variant: &str,
    seed: u64,
) -> Vec<MetricRow> {
    let (eval_n, ks) = (eval.n, &eval.ks);
    let q = world.num_questions();
    let mut rows = Vec::new();
    let k_matched = n_per_epoch * epoch;
    let mut push = |k: usize, metric: &'static str, value: f64| {
        rows.push(MetricRow {
            epoch,
            k,
            metric,
            value,
            cohort: "all",
            variant: variant.to_string(),
            seed,
        });
    };

    push(k_matched, "mean_accuracy", metrics::mean_accuracy(params, world));
    let trace_h =
        (0..q).map(|x| metrics::policy_entropy(params, world, x)).sum::<f64>() / q as f64;
    push(k_matched, "trace_entropy", trace_h);
    let answer_h =
        (0..q).map(|x| metrics::answer_entropy(params, world, x)).sum::<f64>() / q as f64;
    push(k_matched, "answer_entropy", answer_h);

    // Fresh draws from the current policy, on the evaluation stream.
    let mut corrects = Vec::with_capacity(q);
    for x in 0..q {
        let mut rng = substream(seed, &[stream::EVAL, x as u64, epoch as u64]);
        let batch = sample_batch(params, world, x, eval_n, &mut rng).expect("eval batch");
        corrects.push(batch.rewards.iter().filter(|&&r| r == 1.0).count());
    }
    for &k in ks {
        let acc: f64 = corrects
            .iter()
            .map(|&c| metrics::pass_at_k(eval_n, c, k).expect("validated k"))
            .sum();
        push(k, "pass_at_k", acc / q as f64);
    }
    rows
}

fn write_metric_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 48 + 64);
    text.push_str(METRICS_CSV_HEADER);
    text.push('\n');
    for r in rows {
        let _ = writeln!(text, "{}", r.csv());
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run_train_mode(cfg: &RunConfig, dir: &Path, manifest: &mut ExperimentManifest) -> Result<()> {
    let world = generate_world(&world_spec_of(cfg))?;
    let world_file = write_world(cfg, dir, &world)?;
    manifest.shared_outputs.push(world_file);

    let variant = cfg.train.variant.to_string();
    let results = run_seeds(&cfg.seeds, |seed| {
        let mut trainer = Trainer::new(&world, train_config_of(cfg, seed))?;
        let mut step_rows = Vec::with_capacity(cfg.train.epochs);
        let mut rows: Vec<MetricRow> = Vec::new();
        for epoch in 1..=cfg.train.epochs {
            let stats: StepStats = trainer.step()?;
            step_rows.push(stats.csv_row());
            if epoch % cfg.eval.cadence == 0 || epoch == cfg.train.epochs {
                rows.extend(checkpoint_rows(
                    trainer.params(),
                    &world,
                    epoch,
                    cfg.train.n,
                    &cfg.eval,
                    &variant,
                    seed,
                ));
            }
        }
        rows.extend(history_rows(
            trainer.history(),
            cfg.eval.cadence,
            &cfg.eval.ks,
            &variant,
            seed,
        ));

        let steps_name = format!("train_{variant}_seed{seed}_steps.csv");
        let mut steps_text = String::new();
        steps_text.push_str(StepStats::CSV_HEADER);
        steps_text.push('\n');
        for r in &step_rows {
            let _ = writeln!(steps_text, "{r}");
        }
        std::fs::write(dir.join(&steps_name), steps_text)?;

        let metrics_name = format!("train_{variant}_seed{seed}_metrics.csv");
        write_metric_rows(&dir.join(&metrics_name), &rows)?;
        Ok(vec![steps_name, metrics_name])
    })?;
    record_outputs(manifest, results);
    Ok(())
}

fn run_base_sample_mode(
    cfg: &RunConfig,
    dir: &Path,
    manifest: &mut ExperimentManifest,
) -> Result<()> {
    let world = generate_world(&world_spec_of(cfg))?;
    let world_file = write_world(cfg, dir, &world)?;
    manifest.shared_outputs.push(world_file);

    let results = run_seeds(&cfg.seeds, |seed| {
        let history = reference_stream(
            &world,
            cfg.world.init_scale,
            cfg.sample.n,
            cfg.sample.epochs,
            seed,
        )?;
        let rows = history_rows(&history, cfg.eval.cadence, &cfg.eval.ks, "base", seed);
        let name = format!("base_seed{seed}_metrics.csv");
        write_metric_rows(&dir.join(&name), &rows)?;
        Ok(vec![name])
    })?;
    record_outputs(manifest, results);
    Ok(())
}
