//! Flat key-value run configuration with dotted keys.
//!
//! A config file is lines of `key = value`; `#` starts a comment. Every key
//! has a default, so an empty (or missing) file is a valid configuration.
//! Unknown keys, duplicate keys, malformed values and constraint violations
//! are all errors that name the offending key.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use obex_core::grpo::{AllCorrectScope, BonusVariant, CountTiming};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Bandit,
    Train,
    BaseSample,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Bandit => "bandit",
            Mode::Train => "train",
            Mode::BaseSample => "base-sample",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bandit" => Ok(Mode::Bandit),
            "train" => Ok(Mode::Train),
            "base-sample" => Ok(Mode::BaseSample),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BanditAlgorithm {
    BalancedUcb,
    PaUcb,
    SoftUcb,
    Ucb1,
    Uniform,
}

impl std::fmt::Display for BanditAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BanditAlgorithm::BalancedUcb => "balanced-ucb",
            BanditAlgorithm::PaUcb => "pa-ucb",
            BanditAlgorithm::SoftUcb => "soft-ucb",
            BanditAlgorithm::Ucb1 => "ucb1",
            BanditAlgorithm::Uniform => "uniform",
        })
    }
}

impl FromStr for BanditAlgorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "balanced-ucb" => Ok(BanditAlgorithm::BalancedUcb),
            "pa-ucb" => Ok(BanditAlgorithm::PaUcb),
            "soft-ucb" => Ok(BanditAlgorithm::SoftUcb),
            "ucb1" => Ok(BanditAlgorithm::Ucb1),
            "uniform" => Ok(BanditAlgorithm::Uniform),
            other => Err(format!(
                "unknown algorithm '{other}' (expected balanced-ucb|pa-ucb|soft-ucb|ucb1|uniform)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Balanced,
    LowerBound,
}

impl std::fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InstanceKind::Balanced => "balanced",
            InstanceKind::LowerBound => "lower-bound",
        })
    }
}

impl FromStr for InstanceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "balanced" => Ok(InstanceKind::Balanced),
            "lower-bound" => Ok(InstanceKind::LowerBound),
            other => Err(format!(
                "unknown instance kind '{other}' (expected balanced|lower-bound)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditConfig {
    pub algorithm: BanditAlgorithm,
    pub instance: InstanceKind,
    pub arms: usize,
    pub outcomes: usize,
    pub delta: f64,
    pub horizon: usize,
    /// Class sizes for lower-bound instances; empty derives
    /// `[s_star, arms - s_star]`.
    pub class_sizes: Vec<usize>,
    pub s_star: usize,
    /// Per-outcome exclusion fractions; a single value broadcasts.
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub questions: usize,
    pub traces: usize,
    pub answers: usize,
    pub vocab: usize,
    pub zipf: f64,
    pub solvable: f64,
    pub difficulty: f64,
    pub init_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainModeConfig {
    pub n: usize,
    pub epochs: usize,
    pub lr: f64,
    pub kl: f64,
    pub eps: f64,
    pub gamma: f64,
    pub variant: BonusVariant,
    pub c: f64,
    pub b0: f64,
    pub count_timing: CountTiming,
    pub all_correct: AllCorrectScope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub n: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub cadence: usize,
    pub n: usize,
    pub ks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub report_plots: bool,
    pub bandit: BanditConfig,
    pub world: WorldConfig,
    pub train: TrainModeConfig,
    pub sample: SampleConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn defaults(mode: Mode) -> Self {
        Self {
            mode,
            seeds: vec![0],
            out_dir: PathBuf::from("obex-out"),
            report_plots: true,
            bandit: BanditConfig {
                algorithm: BanditAlgorithm::BalancedUcb,
                instance: InstanceKind::Balanced,
                arms: 1000,
                outcomes: 10,
                delta: 0.2,
                horizon: 50_000,
                class_sizes: Vec::new(),
                s_star: 1,
                rho: vec![0.5],
            },
            world: WorldConfig {
                questions: 500,
                traces: 32,
                answers: 12,
                vocab: 60,
                zipf: 1.0,
                solvable: 0.7,
                difficulty: 0.7,
                init_scale: 1.0,
                seed: 7,
            },
            train: TrainModeConfig {
                n: 8,
                epochs: 200,
                lr: 0.1,
                kl: 0.001,
                eps: 1e-6,
                gamma: 0.5,
                variant: BonusVariant::None,
                c: 0.1,
                b0: 0.5,
                count_timing: CountTiming::IncludeCurrent,
                all_correct: AllCorrectScope::AllVariants,
            },
            sample: SampleConfig { n: 8, epochs: 200 },
            eval: EvalConfig {
                cadence: 20,
                n: 16,
                ks: vec![1, 2, 4, 8, 16],
            },
        }
    }

    /// Parse config text over the defaults for `mode`.
    pub fn parse(text: &str, mode: Mode) -> Result<Self> {
        let mut cfg = Self::defaults(mode);
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected 'key = value', got '{line}'", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            if seen.insert(key.to_string(), lineno + 1).is_some() {
                bail!("duplicate key '{key}' (line {})", lineno + 1);
            }
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from an optional path (no file means pure defaults), then apply
    /// CLI overrides.
    pub fn load(
        path: Option<&std::path::Path>,
        mode: Mode,
        seed_overrides: &[u64],
        out_override: Option<&std::path::Path>,
    ) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text, mode)?
            }
            None => Self::defaults(mode),
        };
        if !seed_overrides.is_empty() {
            cfg.seeds = seed_overrides.to_vec();
        }
        if let Some(out) = out_override {
            cfg.out_dir = out.to_path_buf();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| anyhow!("key '{key}': invalid value '{value}': {e}"))
        }
        fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
        where
            T::Err: std::fmt::Display,
        {
            if value.is_empty() {
                return Ok(Vec::new());
            }
            value.split(',').map(|v| num::<T>(key, v.trim())).collect()
        }

        match key {
            "mode" => {
                let file_mode: Mode = num(key, value)?;
                if file_mode != self.mode {
                    bail!(
                        "key 'mode': config says '{file_mode}' but the subcommand is '{}'",
                        self.mode
                    );
                }
            }
            "seeds" => self.seeds = list(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "report.plots" => self.report_plots = num(key, value)?,

            "bandit.algorithm" => self.bandit.algorithm = num(key, value)?,
            "bandit.instance" => self.bandit.instance = num(key, value)?,
            "bandit.arms" => self.bandit.arms = num(key, value)?,
            "bandit.outcomes" => self.bandit.outcomes = num(key, value)?,
            "bandit.delta" => self.bandit.delta = num(key, value)?,
            "bandit.horizon" => self.bandit.horizon = num(key, value)?,
            "bandit.class_sizes" => self.bandit.class_sizes = list(key, value)?,
            "bandit.s_star" => self.bandit.s_star = num(key, value)?,
            "bandit.rho" => self.bandit.rho = list(key, value)?,

            "world.questions" => self.world.questions = num(key, value)?,
            "world.traces" => self.world.traces = num(key, value)?,
            "world.answers" => self.world.answers = num(key, value)?,
            "world.vocab" => self.world.vocab = num(key, value)?,
            "world.zipf" => self.world.zipf = num(key, value)?,
            "world.solvable" => self.world.solvable = num(key, value)?,
            "world.difficulty" => self.world.difficulty = num(key, value)?,
            "world.init_scale" => self.world.init_scale = num(key, value)?,
            "world.seed" => self.world.seed = num(key, value)?,

            "train.n" => self.train.n = num(key, value)?,
            "train.epochs" => self.train.epochs = num(key, value)?,
            "train.lr" => self.train.lr = num(key, value)?,
            "train.kl" => self.train.kl = num(key, value)?,
            "train.eps" => self.train.eps = num(key, value)?,
            "train.gamma" => self.train.gamma = num(key, value)?,
            "train.bonus.variant" => {
                self.train.variant = value
                    .parse::<BonusVariant>()
                    .map_err(|e| anyhow!("key '{key}': {e}"))?;
            }
            "train.bonus.c" => self.train.c = num(key, value)?,
            "train.bonus.b0" => self.train.b0 = num(key, value)?,
            "train.count_timing" => {
                self.train.count_timing = value
                    .parse::<CountTiming>()
                    .map_err(|e| anyhow!("key '{key}': {e}"))?;
            }
            "train.all_correct" => {
                self.train.all_correct = value
                    .parse::<AllCorrectScope>()
                    .map_err(|e| anyhow!("key '{key}': {e}"))?;
            }

            "sample.n" => self.sample.n = num(key, value)?,
            "sample.epochs" => self.sample.epochs = num(key, value)?,

            "eval.cadence" => self.eval.cadence = num(key, value)?,
            "eval.n" => self.eval.n = num(key, value)?,
            "eval.ks" => self.eval.ks = list(key, value)?,

            other => bail!("unknown key '{other}'"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds: at least one seed is required");
        }
        let b = &self.bandit;
        if b.arms == 0 || b.outcomes == 0 {
            bail!("bandit.arms / bandit.outcomes must be positive");
        }
        if !(b.delta > 0.0 && b.delta <= 0.5) {
            bail!("bandit.delta must lie in (0, 0.5], got {}", b.delta);
        }
        if b.horizon == 0 {
            bail!("bandit.horizon must be at least 1");
        }
        for (o, &r) in b.rho.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                bail!("bandit.rho[{o}] = {r} outside [0, 1]");
            }
        }
        if b.rho.is_empty() {
            bail!("bandit.rho must hold at least one value");
        }
        let w = &self.world;
        if w.questions == 0 || w.traces == 0 || w.vocab == 0 {
            bail!("world sizes must be positive");
        }
        if w.answers == 0 || w.answers > w.traces.min(w.vocab) {
            bail!(
                "world.answers must lie in 1..=min(world.traces, world.vocab), got {}",
                w.answers
            );
        }
        for (name, v) in [("world.solvable", w.solvable), ("world.difficulty", w.difficulty)] {
            if !(0.0..=1.0).contains(&v) {
                bail!("{name} = {v} outside [0, 1]");
            }
        }
        let t = &self.train;
        if t.n < 2 {
            bail!("train.n must be at least 2 (group advantages), got {}", t.n);
        }
        if t.epochs == 0 {
            bail!("train.epochs must be at least 1");
        }
        if t.c < 0.0 || t.kl < 0.0 || t.eps <= 0.0 || t.gamma < 0.0 {
            bail!("train.bonus.c / train.kl / train.gamma must be >= 0 and train.eps > 0");
        }
        if self.sample.n < 2 {
            bail!("sample.n must be at least 2, got {}", self.sample.n);
        }
        if self.sample.epochs == 0 {
            bail!("sample.epochs must be at least 1");
        }
        let e = &self.eval;
        if e.cadence == 0 {
            bail!("eval.cadence must be at least 1");
        }
        if e.n < 2 {
            bail!("eval.n must be at least 2, got {}", e.n);
        }
        for &k in &e.ks {
            if k == 0 || k > e.n {
                bail!("eval.ks entry {k} outside 1..=eval.n ({})", e.n);
            }
        }
        Ok(())
    }

    /// Canonical resolved text: every experiment-defining key with its
    /// final value. This is the determinism anchor hashed into the
    /// manifest; the output directory is deliberately not part of it (the
    /// same experiment written elsewhere is the same experiment).
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        push("mode", self.mode.to_string());
        push(
            "seeds",
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        push("report.plots", self.report_plots.to_string());

        push("bandit.algorithm", self.bandit.algorithm.to_string());
        push("bandit.instance", self.bandit.instance.to_string());
        push("bandit.arms", self.bandit.arms.to_string());
        push("bandit.outcomes", self.bandit.outcomes.to_string());
        push("bandit.delta", self.bandit.delta.to_string());
        push("bandit.horizon", self.bandit.horizon.to_string());
        push(
            "bandit.class_sizes",
            self.bandit
                .class_sizes
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        push("bandit.s_star", self.bandit.s_star.to_string());
        push(
            "bandit.rho",
            self.bandit
                .rho
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );

        push("world.questions", self.world.questions.to_string());
        push("world.traces", self.world.traces.to_string());
        push("world.answers", self.world.answers.to_string());
        push("world.vocab", self.world.vocab.to_string());
        push("world.zipf", self.world.zipf.to_string());
        push("world.solvable", self.world.solvable.to_string());
        push("world.difficulty", self.world.difficulty.to_string());
        push("world.init_scale", self.world.init_scale.to_string());
        push("world.seed", self.world.seed.to_string());

        push("train.n", self.train.n.to_string());
        push("train.epochs", self.train.epochs.to_string());
        push("train.lr", self.train.lr.to_string());
        push("train.kl", self.train.kl.to_string());
        push("train.eps", self.train.eps.to_string());
        push("train.gamma", self.train.gamma.to_string());
        push("train.bonus.variant", self.train.variant.to_string());
        push("train.bonus.c", self.train.c.to_string());
        push("train.bonus.b0", self.train.b0.to_string());
        push("train.count_timing", self.train.count_timing.to_string());
        push("train.all_correct", self.train.all_correct.to_string());

        push("sample.n", self.sample.n.to_string());
        push("sample.epochs", self.sample.epochs.to_string());

        push("eval.cadence", self.eval.cadence.to_string());
        push("eval.n", self.eval.n.to_string());
        push(
            "eval.ks",
            self.eval
                .ks
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        out
    }

    /// FNV-1a over the resolved text, as a hex tag for file names.
    pub fn config_hash(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.resolved_text().bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{hash:016x}")
    }
}
