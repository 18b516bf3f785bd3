mod common;

use common::tiny;
use mtsched::harness::{emit_report, run_multitask, run_sweep, SweepAxis, SweepSpec};
use serde_json::json;

fn spec(grid: Vec<SweepAxis>) -> SweepSpec {
    let mut base = tiny(json!({"kind": "uniform"}));
    base.total_steps = 200;
    base.tasks.iter_mut().for_each(|t| t.baseline_steps = Some(200));
    SweepSpec {
        base,
        grid,
        max_points: 64,
    }
}

fn ratio_axis() -> SweepAxis {
    SweepAxis {
        name: "probabilities".into(),
        path: Some("scheduler.probabilities".into()),
        values: (1..10)
            .map(|k| json!([(10 - k) as f64 / 10.0, k as f64 / 10.0]))
            .collect(),
    }
}

#[test]
fn constant_ratio_grid_has_nine_rows() {
    let mut s = spec(vec![ratio_axis()]);
    s.base.scheduler = mtsched::SchedulerConfig::Constant(mtsched::ConstantConfig {
        probabilities: vec![0.5, 0.5],
    });
    let table = run_sweep(&s).unwrap();
    assert_eq!(table.rows().len(), 9);
    assert!(table.points.iter().all(|p| p.outcome.is_ok()));
    assert_eq!(
        table.header(),
        ["probabilities", "low_dev", "low_test", "high_dev", "high_test", "mean_dev", "status"]
    );
    let selected: Vec<_> = table.rows().into_iter().filter(|r| r.last().unwrap() == "selected").collect();
    assert_eq!(selected.len(), 1);
}

#[test]
fn empty_grid_is_an_error() {
    assert_eq!(run_sweep(&spec(vec![])).unwrap_err().code(), "empty-input");
    let empty_axis = SweepAxis {
        name: "seed".into(),
        path: None,
        values: vec![],
    };
    assert!(run_sweep(&spec(vec![empty_axis])).is_err());
}

#[test]
fn oversized_grid_is_refused() {
    let mut s = spec(vec![SweepAxis {
        name: "seed".into(),
        path: None,
        values: (0..10).map(|i| json!(i)).collect(),
    }]);
    s.max_points = 5;
    assert_eq!(run_sweep(&s).unwrap_err().code(), "invalid-config");
}

#[test]
fn two_by_two_points_reproduce_from_their_configs() {
    let mut s = spec(vec![
        SweepAxis {
            name: "alpha".into(),
            path: Some("scheduler.alpha".into()),
            values: vec![json!(1.0), json!(8.0)],
        },
        SweepAxis {
            name: "epsilon".into(),
            path: Some("scheduler.epsilon".into()),
            values: vec![json!(0.05), json!(0.5)],
        },
    ]);
    s.base.scheduler = mtsched::SchedulerConfig::Explicit(mtsched::ExplicitConfig {
        alpha: 1.0,
        epsilon: 0.05,
    });
    let table = run_sweep(&s).unwrap();
    assert_eq!(table.rows().len(), 4);
    for p in &table.points {
        let r = p.outcome.as_ref().unwrap();
        let again = run_multitask(&r.config, r.config.baselines.as_deref().unwrap()).unwrap();
        assert_eq!(&again, r);
    }
}

#[test]
fn failing_points_are_recorded_and_the_sweep_continues() {
    let mut s = spec(vec![SweepAxis {
        name: "gamma".into(),
        path: Some("scheduler.gamma".into()),
        values: vec![json!(0.5), json!(1.5), json!(0.2)],
    }]);
    s.base.scheduler = mtsched::SchedulerConfig::Implicit(mtsched::ImplicitConfig {
        alpha: 1.0,
        beta: 0.5,
        gamma: 0.5,
    });
    let table = run_sweep(&s).unwrap();
    assert!(table.points[0].outcome.is_ok());
    assert!(table.points[1].outcome.is_err());
    assert!(table.points[2].outcome.is_ok());
    assert!(table.rows()[1].last().unwrap().starts_with("error: "));
}

#[test]
fn sweep_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(vec![SweepAxis {
        name: "seed".into(),
        path: None,
        values: vec![json!(1), json!(2)],
    }]);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    run_sweep(&s).unwrap().write_csv(&a).unwrap();
    run_sweep(&s).unwrap().write_csv(&b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

fn five_methods() -> Vec<mtsched::harness::RunResult> {
    [
        json!({"kind": "uniform"}),
        json!({"kind": "constant", "probabilities": [0.25, 0.75]}),
        json!({"kind": "explicit", "alpha": 4.0, "epsilon": 0.05}),
        json!({"kind": "implicit", "alpha": 4.0, "beta": 0.5, "gamma": 0.5}),
        json!({"kind": "loss_progress", "window": 80, "temperature": 1.0}),
    ]
    .into_iter()
    .map(|s| run_multitask(&tiny(s), &[90.0, 92.0]).unwrap())
    .collect()
}

#[test]
fn single_run_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_multitask(&tiny(json!({"kind": "uniform"})), &[90.0, 92.0]).unwrap();
    let files = emit_report(&[r], dir.path()).unwrap();
    let text = std::fs::read_to_string(files.comparison_csv).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("uniform,"));
}

#[test]
fn five_methods_give_five_rows_and_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let results = five_methods();
    let files = emit_report(&results, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(&files.comparison_csv).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let methods: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(
        methods,
        ["uniform", "constant-0.25-0.75", "explicit-adaptive", "implicit-adaptive", "loss-progress"]
    );
    // every dev/test column is flagged best exactly once
    let flags: Vec<&str> = rows.iter().flat_map(|r| r[5].split(';')).filter(|f| !f.is_empty()).collect();
    assert_eq!(flags.len(), 4);

    let md = std::fs::read_to_string(&files.comparison_md).unwrap();
    assert_eq!(md.matches("**").count(), 4 * 2);

    assert_eq!(files.trajectories.len(), 5);
    for path in &files.trajectories {
        let n = std::fs::read_to_string(path).unwrap().lines().count();
        assert_eq!(n, 1 + 10 * 2, "{}", path.display());
    }
}

#[test]
fn empty_report_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(emit_report(&[], dir.path()).unwrap_err().code(), "empty-input");
}
