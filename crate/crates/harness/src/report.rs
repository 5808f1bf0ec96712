//! Cross-seed aggregation: summary CSVs (mean and sample standard
//! deviation per curve point) and SVG plots, driven by the manifests found
//! in an output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::manifest::ExperimentManifest;
use crate::svg::{line_plot, Series};

/// Sample mean and sample (n-1) standard deviation; std is 0 for a single
/// value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n > 0, "mean_std over empty slice");
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMetricRow {
    pub epoch: usize,
    pub k: usize,
    pub metric: String,
    pub value: f64,
    pub cohort: String,
    pub variant: String,
    pub seed: u64,
}

pub fn parse_metrics_csv(text: &str, path: &Path) -> Result<Vec<ParsedMetricRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != crate::runner::METRICS_CSV_HEADER {
        bail!(
            "{}: unexpected metrics header '{header}'",
            path.display()
        );
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            bail!("{}: line {}: expected 7 fields", path.display(), i + 2);
        }
        rows.push(ParsedMetricRow {
            epoch: fields[0].parse().with_context(|| format!("line {}", i + 2))?,
            k: fields[1].parse()?,
            metric: fields[2].to_string(),
            value: fields[3].parse()?,
            cohort: fields[4].to_string(),
            variant: fields[5].to_string(),
            seed: fields[6].parse()?,
        });
    }
    Ok(rows)
}

/// (variant, metric, cohort, epoch, k) -> per-seed values.
type MetricGroups = BTreeMap<(String, String, String, usize, usize), Vec<f64>>;

fn group_rows(rows: &[ParsedMetricRow]) -> MetricGroups {
    let mut groups: MetricGroups = BTreeMap::new();
    for r in rows {
        groups
            .entry((
                r.variant.clone(),
                r.metric.clone(),
                r.cohort.clone(),
                r.epoch,
                r.k,
            ))
            .or_default()
            .push(r.value);
    }
    groups
}

/// Load every manifest (`manifest_*.json`) in a directory.
pub fn load_manifests(dir: &Path) -> Result<Vec<ExperimentManifest>> {
    let mut manifests = Vec::new();
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("manifest_") && n.ends_with(".json"))
        })
        .collect();
    names.sort();
    for path in names {
        manifests.push(ExperimentManifest::load(&path)?);
    }
    Ok(manifests)
}

#[derive(Debug)]
pub struct ReportOutput {
    pub summary_metrics: Option<PathBuf>,
    pub summary_table: Option<PathBuf>,
    pub summary_regret: Option<PathBuf>,
    pub plots: Vec<PathBuf>,
}

/// Aggregate all runs in `dir` and write summary CSVs plus plots.
pub fn generate(dir: &Path, plots: bool) -> Result<ReportOutput> {
    let manifests = load_manifests(dir)?;
    if manifests.is_empty() {
        bail!("no manifest_*.json found in {}", dir.display());
    }
    for m in &manifests {
        m.verify_complete(dir)?;
    }

    let mut out = ReportOutput {
        summary_metrics: None,
        summary_table: None,
        summary_regret: None,
        plots: Vec::new(),
    };

    // Metric-style manifests (train / base-sample).
    let mut metric_rows: Vec<ParsedMetricRow> = Vec::new();
    for m in manifests.iter().filter(|m| m.mode != "bandit") {
        for files in m.outputs.values() {
            for f in files.iter().filter(|f| f.ends_with("_metrics.csv")) {
                let path = dir.join(f);
                let text = std::fs::read_to_string(&path)?;
                metric_rows.extend(parse_metrics_csv(&text, &path)?);
            }
        }
    }
    if !metric_rows.is_empty() {
        let groups = group_rows(&metric_rows);
        let mut text = String::from("variant,metric,cohort,epoch,k,mean,std,n_seeds\n");
        for ((variant, metric, cohort, epoch, k), values) in &groups {
            let (mean, std) = mean_std(values);
            let _ = writeln!(
                text,
                "{variant},{metric},{cohort},{epoch},{k},{mean},{std},{}",
                values.len()
            );
        }
        let path = dir.join("summary_metrics.csv");
        std::fs::write(&path, text)?;
        out.summary_metrics = Some(path);

        out.summary_table = Some(write_final_best_table(dir, &groups)?);

        if plots {
            out.plots.extend(metric_plots(dir, &groups)?);
        }
    }

    // Bandit manifests: regret curves.
    let mut regret: BTreeMap<String, Vec<Vec<(usize, f64)>>> = BTreeMap::new();
    for m in manifests.iter().filter(|m| m.mode == "bandit") {
        for files in m.outputs.values() {
            for f in files.iter().filter(|f| f.starts_with("bandit_") && f.ends_with(".csv")) {
                let algorithm = f
                    .trim_start_matches("bandit_")
                    .split("_seed")
                    .next()
                    .unwrap_or("unknown")
                    .to_string();
                let text = std::fs::read_to_string(dir.join(f))?;
                regret.entry(algorithm).or_default().push(parse_regret(&text)?);
            }
        }
    }
    if !regret.is_empty() {
        let mut text = String::from("algorithm,round,mean,std,n_seeds\n");
        let mut series = Vec::new();
        for (algorithm, runs) in &regret {
            let horizon = runs.iter().map(|r| r.len()).min().unwrap_or(0);
            let stride = (horizon / 400).max(1);
            let mut points = Vec::new();
            let mut idx = stride - 1;
            while idx < horizon {
                let round = runs[0][idx].0;
                let values: Vec<f64> = runs.iter().map(|r| r[idx].1).collect();
                let (mean, std) = mean_std(&values);
                let _ = writeln!(text, "{algorithm},{round},{mean},{std},{}", values.len());
                points.push((round as f64, mean));
                idx += stride;
            }
            series.push(Series {
                name: algorithm.clone(),
                points,
            });
        }
        let path = dir.join("summary_regret.csv");
        std::fs::write(&path, text)?;
        out.summary_regret = Some(path);
        if plots {
            let svg = line_plot(
                "cumulative pseudo-regret",
                "round",
                "regret",
                &series,
                None,
            );
            let path = dir.join("plot_regret.svg");
            std::fs::write(&path, svg)?;
            out.plots.push(path);
        }
    }

    Ok(out)
}

/// Mean (std) at the final epoch and at the best cadence point, per
/// (variant, metric, cohort) and per k for the pass@k families.
fn write_final_best_table(dir: &Path, groups: &MetricGroups) -> Result<PathBuf> {
    // (variant, metric-with-k, cohort) -> epoch -> values.
    let mut table: BTreeMap<(String, String, String), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for ((variant, metric, cohort, epoch, k), values) in groups {
        let label = if metric.starts_with("pass_at_k") {
            format!("{metric}[k={k}]")
        } else {
            metric.clone()
        };
        table
            .entry((variant.clone(), label, cohort.clone()))
            .or_default()
            .insert(*epoch, values.clone());
    }
    let mut text =
        String::from("variant,metric,cohort,final_epoch,final_mean,final_std,best_epoch,best_mean,best_std\n");
    for ((variant, metric, cohort), by_epoch) in &table {
        let (&final_epoch, final_values) = by_epoch.iter().next_back().expect("non-empty");
        let (final_mean, final_std) = mean_std(final_values);
        let (best_epoch, best_mean, best_std) = by_epoch
            .iter()
            .map(|(&e, v)| {
                let (m, s) = mean_std(v);
                (e, m, s)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite means"))
            .expect("non-empty");
        let _ = writeln!(
            text,
            "{variant},{metric},{cohort},{final_epoch},{final_mean},{final_std},{best_epoch},{best_mean},{best_std}"
        );
    }
    let path = dir.join("summary_table.csv");
    std::fs::write(&path, text)?;
    Ok(path)
}

fn metric_plots(dir: &Path, groups: &MetricGroups) -> Result<Vec<PathBuf>> {
    // Curves over epochs: (metric, cohort) -> variant -> points.
    type CurveMap = BTreeMap<(String, String), BTreeMap<String, Vec<(f64, f64)>>>;
    // pass@k at final epoch: (metric, cohort) -> variant -> k -> (epoch, value).
    type PassMap = BTreeMap<(String, String), BTreeMap<String, BTreeMap<usize, (usize, f64)>>>;
    let mut curves: CurveMap = BTreeMap::new();
    let mut pass_final: PassMap = BTreeMap::new();
    // k = n * epoch for curve rows; usable as a top axis when every series
    // shares the same n.
    let mut k_ratios: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();

    for ((variant, metric, cohort, epoch, k), values) in groups {
        let (mean, _) = mean_std(values);
        if metric.starts_with("pass_at_k") {
            let per_variant = pass_final
                .entry((metric.clone(), cohort.clone()))
                .or_default()
                .entry(variant.clone())
                .or_default();
            // Keep the latest epoch per k.
            let entry = per_variant.entry(*k).or_insert((*epoch, mean));
            if *epoch >= entry.0 {
                *entry = (*epoch, mean);
            }
        } else {
            if *epoch > 0 && k % epoch == 0 {
                k_ratios.insert(k / epoch);
            }
            curves
                .entry((metric.clone(), cohort.clone()))
                .or_default()
                .entry(variant.clone())
                .or_default()
                .push((*epoch as f64, mean));
        }
    }
    let shared_n = if k_ratios.len() == 1 {
        k_ratios.into_iter().next()
    } else {
        None
    };

    let mut paths = Vec::new();
    for ((metric, cohort), by_variant) in &curves {
        let series: Vec<Series> = by_variant
            .iter()
            .map(|(variant, points)| Series {
                name: variant.clone(),
                points: points.clone(),
            })
            .collect();
        let top = shared_n.map(|n| ("k = n*t", n as f64));
        let svg = line_plot(
            &format!("{metric} ({cohort})"),
            "epoch",
            metric,
            &series,
            top,
        );
        let path = dir.join(format!("plot_{metric}_{cohort}.svg"));
        std::fs::write(&path, svg)?;
        paths.push(path);
    }
    for ((metric, cohort), by_variant) in &pass_final {
        let series: Vec<Series> = by_variant
            .iter()
            .map(|(variant, by_k)| Series {
                name: variant.clone(),
                points: by_k.iter().map(|(&k, &(_, v))| (k as f64, v)).collect(),
            })
            .collect();
        let svg = line_plot(
            &format!("{metric} at final checkpoint ({cohort})"),
            "k",
            metric,
            &series,
            None,
        );
        let path = dir.join(format!("plot_{metric}_final_{cohort}.svg"));
        std::fs::write(&path, svg)?;
        paths.push(path);
    }
    Ok(paths)
}

fn parse_regret(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            bail!("bandit csv line {}: expected 6 fields", i + 1);
        }
        rows.push((fields[0].parse()?, fields[5].parse()?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_hand_values() {
        // Known constants {1, 2, 3}: mean 2, sample std 1.
        let (mean, std) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(mean, 2.0);
        assert_eq!(std, 1.0);
        // Single value: std fixed at 0.
        assert_eq!(mean_std(&[4.2]), (4.2, 0.0));
        // Two identical runs: std 0.
        assert_eq!(mean_std(&[0.7, 0.7]).1, 0.0);
    }
}
