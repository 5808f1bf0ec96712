use std::path::PathBuf;
use std::process::ExitCode;

use obex_harness::config::{Mode, RunConfig};
use obex_harness::{report, run_experiment};

const USAGE: &str = "\
obex — outcome-based exploration lab

USAGE:
    obex <bandit|train|base-sample> [--config PATH] [--seed N]... [--out DIR]
    obex report [--out DIR]

MODES:
    bandit        run one bandit algorithm, one regret CSV per seed
    train         GRPO training on a synthetic reasoning world
    base-sample   matched sampling stream from the frozen reference policy
    report        aggregate every manifest in --out into summary CSVs + SVGs

FLAGS:
    --config PATH   flat key = value file (defaults apply to missing keys)
    --seed N        replace the config's seed list (repeatable)
    --out DIR       output directory (default obex-out)
";

struct Args {
    command: String,
    config: Option<PathBuf>,
    seeds: Vec<u64>,
    out: Option<PathBuf>,
}

fn parse_args(mut argv: std::env::Args) -> Result<Args, String> {
    let _ = argv.next();
    let command = argv.next().ok_or("missing subcommand")?;
    let mut args = Args {
        command,
        config: None,
        seeds: Vec::new(),
        out: None,
    };
    while let Some(flag) = argv.next() {
        let mut value_for = |name: &str| {
            argv.next()
                .ok_or_else(|| format!("flag {name} needs a value"))
        };
        match flag.as_str() {
            "--config" => args.config = Some(PathBuf::from(value_for("--config")?)),
            "--seed" => {
                let raw = value_for("--seed")?;
                let seed = raw
                    .parse::<u64>()
                    .map_err(|e| format!("--seed {raw}: {e}"))?;
                args.seeds.push(seed);
            }
            "--out" => args.out = Some(PathBuf::from(value_for("--out")?)),
            "--help" | "-h" => return Err(String::new()),
            other => return Err(format!("unknown flag '{other}'")),
        }
    }
    Ok(args)
}

fn run() -> anyhow::Result<()> {
    let args = match parse_args(std::env::args()) {
        Ok(args) => args,
        Err(msg) => {
            if msg.is_empty() {
                print!("{USAGE}");
                return Ok(());
            }
            anyhow::bail!("{msg}\n\n{USAGE}");
        }
    };

    match args.command.as_str() {
        "bandit" | "train" | "base-sample" => {
            let mode: Mode = args.command.parse().expect("matched above");
            let cfg = RunConfig::load(
                args.config.as_deref(),
                mode,
                &args.seeds,
                args.out.as_deref(),
            )?;
            let manifest = run_experiment(&cfg)?;
            println!(
                "{}: {} seed(s) -> {}",
                cfg.mode,
                manifest.seeds.len(),
                cfg.out_dir.join(manifest.file_name()).display()
            );
        }
        "report" => {
            let dir = args.out.unwrap_or_else(|| PathBuf::from("obex-out"));
            let output = report::generate(&dir, true)?;
            for path in [
                output.summary_metrics,
                output.summary_table,
                output.summary_regret,
            ]
            .into_iter()
            .flatten()
            {
                println!("wrote {}", path.display());
            }
            println!("wrote {} plot(s)", output.plots.len());
        }
        other => anyhow::bail!("unknown subcommand '{other}'\n\n{USAGE}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
