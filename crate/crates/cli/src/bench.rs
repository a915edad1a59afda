use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use chrono::Utc;
use molguide::ga::{auc_topk, RunRecord};
use serde::Serialize;

use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::optimize::RECORDS_FILE;
use crate::support::{create_dir, input, runtime, write_atomic, CmdResult};

#[derive(clap::Args)]
pub struct Args {
    /// Output directories of `optimize` runs.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Directory for the aggregate tables.
    #[arg(long)]
    out: PathBuf,
    /// Also write every trajectory as tidy CSV for plotting.
    #[arg(long)]
    curves: bool,
}

struct Run {
    dir: PathBuf,
    task: String,
    config: String,
    label: Option<String>,
    seed: Option<u64>,
    budget: usize,
    records: Vec<RunRecord>,
    auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub config_hash: String,
    pub label: String,
    pub task: String,
    pub runs: usize,
    pub budget: usize,
    pub auc_mean: f64,
    pub auc_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub config_hash: String,
    pub label: String,
    pub tasks: usize,
    pub avg_rank: f64,
    pub avg_auc: f64,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    config_hash: &'a str,
    label: &'a str,
    task: &'a str,
    seed: Option<u64>,
    generation: usize,
    budget_spent: usize,
    avg_topk: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-task 1-based ranks by descending mean AUC, ties sharing the average
/// of their positions, then averaged per configuration over its tasks.
pub fn rank_configs(summary: &[SummaryRow]) -> Vec<RankRow> {
    let tasks: BTreeSet<&str> = summary.iter().map(|r| r.task.as_str()).collect();
    let mut ranks: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for task in tasks {
        let mut rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.task == task).collect();
        rows.sort_by(|a, b| b.auc_mean.total_cmp(&a.auc_mean));
        let mut i = 0;
        while i < rows.len() {
            let j = (i..rows.len())
                .take_while(|&j| rows[j].auc_mean == rows[i].auc_mean)
                .last()
                .unwrap();
            let shared = (i + j) as f64 / 2.0 + 1.0;
            for r in &rows[i..=j] {
                ranks.entry(r.config_hash.as_str()).or_default().push(shared);
            }
            i = j + 1;
        }
    }
    let mut out: Vec<RankRow> = ranks
        .into_iter()
        .map(|(config, rs)| {
            let own: Vec<&SummaryRow> = summary.iter().filter(|r| r.config_hash == config).collect();
            RankRow {
                config_hash: config.to_owned(),
                label: own[0].label.clone(),
                tasks: rs.len(),
                avg_rank: rs.iter().sum::<f64>() / rs.len() as f64,
                avg_auc: own.iter().map(|r| r.auc_mean).sum::<f64>() / own.len() as f64,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.avg_rank
            .total_cmp(&b.avg_rank)
            .then(b.avg_auc.total_cmp(&a.avg_auc))
            .then(a.config_hash.cmp(&b.config_hash))
    });
    out
}

fn load_run(dir: PathBuf) -> CmdResult<Run> {
    let m = RunManifest::load(&dir.join(MANIFEST_FILE))?;
    let bad = |what: &str| input(anyhow!("{}: manifest lacks {what}", dir.display()));
    if m.command != "optimize" {
        return Err(input(anyhow!("{} is not an optimize run", dir.display())));
    }
    let budget: usize = m
        .config
        .get("budget")
        .and_then(|v| v.as_str())
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("budget"))?;
    let path = dir.join(RECORDS_FILE);
    let mut reader = csv::Reader::from_path(&path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(input)?;
    let records = reader
        .deserialize()
        .collect::<Result<Vec<RunRecord>, _>>()
        .with_context(|| format!("malformed {}", path.display()))
        .map_err(input)?;
    let auc = auc_topk(&records, budget)
        .with_context(|| format!("{}", path.display()))
        .map_err(input)?;
    Ok(Run {
        task: m.oracle.clone().ok_or_else(|| bad("oracle"))?,
        config: m.config_hash.clone().ok_or_else(|| bad("config_hash"))?,
        label: m.label,
        seed: m.seed,
        budget,
        records,
        auc,
        dir,
    })
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

pub fn run(args: Args) -> CmdResult {
    let started = Utc::now();
    let runs = args
        .runs
        .iter()
        .cloned()
        .map(load_run)
        .collect::<CmdResult<Vec<_>>>()?;

    let mut groups: BTreeMap<(String, String), Vec<&Run>> = BTreeMap::new();
    for r in &runs {
        groups.entry((r.config.clone(), r.task.clone())).or_default().push(r);
    }
    let mut summary = Vec::new();
    for ((config, task), members) in &groups {
        let budgets: BTreeSet<usize> = members.iter().map(|r| r.budget).collect();
        if budgets.len() > 1 {
            return Err(input(anyhow!(
                "runs of config {} on task {task} have different budgets {budgets:?}",
                short(config)
            )));
        }
        let aucs: Vec<f64> = members.iter().map(|r| r.auc).collect();
        let (auc_mean, auc_sd) = mean_sd(&aucs);
        summary.push(SummaryRow {
            config_hash: config.clone(),
            label: members.iter().find_map(|r| r.label.clone()).unwrap_or_default(),
            task: task.clone(),
            runs: members.len(),
            budget: members[0].budget,
            auc_mean,
            auc_sd,
        });
    }
    let ranks = rank_configs(&summary);

    create_dir(&args.out)?;
    let summary_path = args.out.join("summary.csv");
    let ranks_path = args.out.join("ranks.csv");
    write_atomic(&summary_path, &to_csv(&summary)?)?;
    write_atomic(&ranks_path, &to_csv(&ranks)?)?;
    let mut m = RunManifest::new("bench", started);
    m.set("curves", args.curves);
    m.inputs = runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let manifest = r.dir.join(MANIFEST_FILE);
            let bytes = std::fs::read(&manifest).unwrap_or_default();
            (
                format!("run{i:03}"),
                crate::manifest::InputRef {
                    source: r.dir.display().to_string(),
                    sha256: crate::support::sha256_hex(&bytes),
                },
            )
        })
        .collect();
    m.outputs.insert("summary".into(), summary_path.display().to_string());
    m.outputs.insert("ranks".into(), ranks_path.display().to_string());
    if args.curves {
        let mut rows = Vec::new();
        for r in &runs {
            let label = r.label.as_deref().unwrap_or("");
            rows.extend(r.records.iter().map(|rec| CurveRow {
                config_hash: &r.config,
                label,
                task: &r.task,
                seed: r.seed,
                generation: rec.generation,
                budget_spent: rec.budget_spent,
                avg_topk: rec.avg_topk,
            }));
        }
        let curves = args.out.join("curves.csv");
        write_atomic(&curves, &to_csv(&rows)?)?;
        m.outputs.insert("curves".into(), curves.display().to_string());
    }
    print!("{}", render(&summary, &ranks));
    m.finish(&args.out.join(MANIFEST_FILE))
}

fn to_csv<T: Serialize>(rows: &[T]) -> CmdResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(runtime)?;
    }
    w.into_inner().map_err(|e| runtime(anyhow!("{e}")))
}

fn render(summary: &[SummaryRow], ranks: &[RankRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:<16} {:<24} {:>4} {:>7}  auc", "config", "label", "task", "runs", "budget");
    for r in summary {
        let _ = writeln!(
            s,
            "{:<12} {:<16} {:<24} {:>4} {:>7}  {:.4} ± {:.4}",
            short(&r.config_hash),
            r.label,
            r.task,
            r.runs,
            r.budget,
            r.auc_mean,
            r.auc_sd
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<12} {:<16} {:>5} {:>8} {:>8}", "config", "label", "tasks", "avg rank", "avg auc");
    for r in ranks {
        let _ = writeln!(
            s,
            "{:<12} {:<16} {:>5} {:>8.3} {:>8.4}",
            short(&r.config_hash),
            r.label,
            r.tasks,
            r.avg_rank,
            r.avg_auc
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(config: &str, task: &str, auc: f64) -> SummaryRow {
        SummaryRow {
            config_hash: config.into(),
            label: config.to_uppercase(),
            task: task.into(),
            runs: 5,
            budget: 100,
            auc_mean: auc,
            auc_sd: 0.0,
        }
    }

    #[test]
    fn mean_and_sd() {
        assert_eq!(mean_sd(&[0.4, 0.6]).0, 0.5);
        assert_eq!(mean_sd(&[0.3; 5]), (0.3, 0.0));
        assert_eq!(mean_sd(&[0.7]), (0.7, 0.0));
        let (_, sd) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ranks_on_a_hand_ranked_grid() {
        // task t1: a wins; t2: b wins; t3: tie
        // a: ranks 1, 2, 1.5 → 1.5; b: 2, 1, 1.5 → 1.5; tie broken by avg auc
        let grid = [
            row("a", "t1", 0.9),
            row("b", "t1", 0.5),
            row("a", "t2", 0.3),
            row("b", "t2", 0.4),
            row("a", "t3", 0.6),
            row("b", "t3", 0.6),
        ];
        let ranks = rank_configs(&grid);
        assert_eq!(ranks.len(), 2);
        assert_eq!(ranks[0].config_hash, "a");
        assert_eq!((ranks[0].avg_rank, ranks[1].avg_rank), (1.5, 1.5));
        assert!((ranks[0].avg_auc - 0.6).abs() < 1e-15);
        assert!((ranks[1].avg_auc - 0.5).abs() < 1e-15);
        assert_eq!(ranks[0].tasks, 3);

        let skewed = [row("a", "t1", 0.9), row("b", "t1", 0.5), row("a", "t2", 0.8), row("b", "t2", 0.1), row("a", "t3", 0.1), row("b", "t3", 0.2)];
        let ranks = rank_configs(&skewed);
        assert_eq!(ranks[0].config_hash, "a");
        assert!((ranks[0].avg_rank - 4.0 / 3.0).abs() < 1e-15);
        assert!((ranks[1].avg_rank - 5.0 / 3.0).abs() < 1e-15);
    }
}
