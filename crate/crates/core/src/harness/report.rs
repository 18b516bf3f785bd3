use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::train::RunResult;
use crate::error::{Error, Result};

/// Files written by [`emit_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub comparison_csv: PathBuf,
    pub comparison_md: PathBuf,
    pub trajectories: Vec<PathBuf>,
}

/// Per column (task x {dev, test}), the index of the best run.
fn best_per_column(results: &[RunResult], n_tasks: usize) -> Vec<Option<usize>> {
    (0..n_tasks * 2)
        .map(|col| {
            results
                .iter()
                .enumerate()
                .filter_map(|(i, r)| {
                    let t = r.tasks.get(col / 2)?;
                    Some((i, if col % 2 == 0 { t.dev_score } else { t.test_score }))
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
        })
        .collect()
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Writes the method comparison table (CSV and Markdown, best score per
/// column flagged) and one trajectory CSV per run with scores, relative
/// scores, weights and effective learning rates over steps.
pub fn emit_report(results: &[RunResult], out_dir: &Path) -> Result<ReportFiles> {
    let first = results.first().ok_or(Error::Empty("report results"))?;
    let task_names: Vec<&str> = first.tasks.iter().map(|t| t.name.as_str()).collect();
    let n = task_names.len();
    std::fs::create_dir_all(out_dir)?;
    let best = best_per_column(results, n);

    let comparison_csv = out_dir.join("comparison.csv");
    let mut w = csv::Writer::from_path(&comparison_csv)?;
    let mut header = vec!["method".to_string()];
    for t in &task_names {
        header.push(format!("{t}_dev"));
        header.push(format!("{t}_test"));
    }
    header.push("best".into());
    w.write_record(&header)?;
    for (i, r) in results.iter().enumerate() {
        let mut row = vec![r.label.clone()];
        let mut flags = Vec::new();
        for (t, task) in r.tasks.iter().enumerate() {
            row.push(task.dev_score.to_string());
            row.push(task.test_score.to_string());
            if best[2 * t] == Some(i) {
                flags.push(format!("{}_dev", task.name));
            }
            if best[2 * t + 1] == Some(i) {
                flags.push(format!("{}_test", task.name));
            }
        }
        row.push(flags.join(";"));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut md = String::new();
    let baselines: Vec<String> = first
        .tasks
        .iter()
        .map(|t| format!("{} = {:.2}", t.name, t.baseline))
        .collect();
    let _ = writeln!(md, "Baselines (dev): {}\n", baselines.join(", "));
    let _ = write!(md, "| Method |");
    for t in &task_names {
        let _ = write!(md, " {t} dev | {t} test |");
    }
    let _ = write!(md, "\n|---|");
    for _ in 0..n {
        let _ = write!(md, "---:|---:|");
    }
    md.push('\n');
    for (i, r) in results.iter().enumerate() {
        let _ = write!(md, "| {} |", r.label);
        for (t, task) in r.tasks.iter().enumerate() {
            for (col, v) in [(2 * t, task.dev_score), (2 * t + 1, task.test_score)] {
                if best[col] == Some(i) {
                    let _ = write!(md, " **{v:.2}** |");
                } else {
                    let _ = write!(md, " {v:.2} |");
                }
            }
        }
        md.push('\n');
    }
    let comparison_md = out_dir.join("comparison.md");
    std::fs::write(&comparison_md, md)?;

    let mut used = HashSet::new();
    let mut trajectories = Vec::with_capacity(results.len());
    for r in results {
        let stem = file_stem(&r.label);
        let mut name = stem.clone();
        let mut k = 2;
        while !used.insert(name.clone()) {
            name = format!("{stem}-{k}");
            k += 1;
        }
        let path = out_dir.join(format!("trajectory_{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["step", "task", "score", "relative_score", "weight", "lr", "train_loss"])?;
        for rec in &r.records {
            w.write_record([
                rec.step.to_string(),
                rec.task.to_string(),
                rec.raw_score.to_string(),
                rec.relative_score.to_string(),
                rec.weight.to_string(),
                rec.effective_lr.to_string(),
                rec.train_loss.to_string(),
            ])?;
        }
        w.flush()?;
        trajectories.push(path);
    }
    Ok(ReportFiles {
        comparison_csv,
        comparison_md,
        trajectories,
    })
}
