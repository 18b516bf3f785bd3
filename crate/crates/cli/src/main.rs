use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use mtsched::harness::{
    emit_report, generate_data, load_json, run_baselines_with_data, run_multitask_with_data, run_sweep,
    save_checkpoint, write_jsonl, Checkpoint, RunConfig, RunResult, SweepSpec,
};
use mtsched::simdyn::{detect_oscillation, run_sim, SimFile, DEFAULT_OSCILLATION_THRESHOLD, DEFAULT_OSCILLATION_WINDOW};

#[derive(Parser)]
#[command(name = "mtsched", version, about = "Multi-task schedule experiments on synthetic regression tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one single-task model per task and record the baseline scores.
    Baseline(RunArgs),
    /// Train a multi-task model under the configured scheduler.
    Train(RunArgs),
    /// Run the analytic learning-dynamics simulator.
    Simulate(RunArgs),
    /// Run every point of a hyperparameter grid.
    Sweep(RunArgs),
    /// Build a comparison table and trajectory files from saved results.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file.
    config: PathBuf,
    /// Replaces the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Dotted-path override, `key=value`, value parsed as JSON when possible.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Glob matching result.json files.
    pattern: String,
    #[arg(long, default_value = "report")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Baseline(a) => baseline(&a),
        Command::Train(a) => train(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Report(a) => report(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = json!({"error": error_code(&err), "message": format!("{err:#}")});
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn error_code(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mtsched::Error>() {
            return e.code();
        }
        if cause.is::<serde_json::Error>() {
            return "json";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "cli"
}

/// Loads the config with overrides applied, then the seed at `seed_path`.
fn load_config(args: &RunArgs, seed_path: &str) -> Result<Value> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("{seed_path}={seed}"));
    }
    Ok(load_json(&args.config, &overrides).with_context(|| format!("loading {}", args.config.display()))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes whatever log a diverged run left behind before reporting the error.
fn keep_partial_log(err: mtsched::Error, out_dir: &Path) -> anyhow::Error {
    if let mtsched::Error::Diverged { partial, .. } = &err {
        let _ = write_jsonl(&out_dir.join("metrics.jsonl"), partial);
    }
    err.into()
}

fn baseline_summary(results: &[mtsched::harness::BaselineResult]) -> Value {
    json!({
        "scores": results.iter().map(|b| b.score).collect::<Vec<_>>(),
        "tasks": results.iter().map(|b| json!({
            "name": b.name,
            "score": b.score,
            "test_score": b.test_score,
            "best_dev": b.best_dev,
            "steps": b.steps,
        })).collect::<Vec<_>>(),
    })
}

fn baseline(args: &RunArgs) -> Result<()> {
    let cfg = RunConfig::from_value(load_config(args, "seed")?)?;
    prepare_out_dir(&args.out_dir)?;
    let data = generate_data(&cfg)?;
    let results = run_baselines_with_data(&cfg, &data).map_err(|e| keep_partial_log(e, &args.out_dir))?;
    for b in &results {
        write_jsonl(&args.out_dir.join(format!("baseline_{}.jsonl", b.name)), &b.records)?;
        println!("{}: {:.4}", b.name, b.score);
    }
    write_json(&args.out_dir.join("baselines.json"), &baseline_summary(&results))
}

fn train(args: &RunArgs) -> Result<()> {
    let cfg = RunConfig::from_value(load_config(args, "seed")?)?;
    prepare_out_dir(&args.out_dir)?;
    let data = generate_data(&cfg)?;
    let baselines = match &cfg.baselines {
        Some(b) => b.clone(),
        None => {
            let results = run_baselines_with_data(&cfg, &data).map_err(|e| keep_partial_log(e, &args.out_dir))?;
            write_json(&args.out_dir.join("baselines.json"), &baseline_summary(&results))?;
            results.iter().map(|b| b.score).collect()
        }
    };
    let result = run_multitask_with_data(&cfg, &baselines, &data).map_err(|e| keep_partial_log(e, &args.out_dir))?;
    write_jsonl(&args.out_dir.join("metrics.jsonl"), &result.records)?;
    write_json(&args.out_dir.join("result.json"), &result)?;
    if let Some(params) = &result.averaged_params {
        let ckpt = Checkpoint {
            step: result.final_step,
            params: params.clone(),
        };
        save_checkpoint(&args.out_dir.join("checkpoint.bin"), &cfg.model, &ckpt, &cfg.hash())?;
    }
    for t in &result.tasks {
        println!(
            "{}: dev {:.4} test {:.4} (baseline {:.4})",
            t.name, t.dev_score, t.test_score, t.baseline
        );
    }
    Ok(())
}

fn simulate(args: &RunArgs) -> Result<()> {
    let file: SimFile = serde_json::from_value(load_config(args, "sim.seed")?)?;
    prepare_out_dir(&args.out_dir)?;
    let records = run_sim(&file.dynamics, &file.sim)?;
    write_jsonl(&args.out_dir.join("metrics.jsonl"), &records)?;
    let report = detect_oscillation(&records, DEFAULT_OSCILLATION_WINDOW, DEFAULT_OSCILLATION_THRESHOLD)?;
    write_json(&args.out_dir.join("oscillation.json"), &report)?;
    println!("oscillation detected: {} amplitudes {:?}", report.detected, report.amplitudes);
    Ok(())
}

fn sweep(args: &RunArgs) -> Result<()> {
    let spec: SweepSpec = serde_json::from_value(load_config(args, "base.seed")?)?;
    prepare_out_dir(&args.out_dir)?;
    let table = run_sweep(&spec)?;
    table.write_csv(&args.out_dir.join("sweep.csv"))?;
    let results_dir = args.out_dir.join("points");
    prepare_out_dir(&results_dir)?;
    let mut failures = 0;
    for (i, point) in table.points.iter().enumerate() {
        match &point.outcome {
            Ok(r) => write_json(&results_dir.join(format!("point_{i:03}.json")), r)?,
            Err(e) => {
                failures += 1;
                eprintln!("{}", json!({"warning": "sweep-point-failed", "point": i, "message": e}));
            }
        }
    }
    if let Some(best) = table.best() {
        println!("best point {best}: {:?}", table.points[best].values);
    }
    println!("{} points, {failures} failed", table.points.len());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = glob::glob(&args.pattern)
        .with_context(|| format!("bad glob `{}`", args.pattern))?
        .collect::<std::result::Result<_, _>>()?;
    paths.sort();
    if paths.is_empty() {
        bail!("no files match `{}`", args.pattern);
    }
    let mut results = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r: RunResult = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        results.push(r);
    }
    let files = emit_report(&results, &args.out_dir)?;
    println!("{}", fs::read_to_string(&files.comparison_md)?);
    Ok(())
}
