use std::fs;
use std::path::Path;

use strike_core::harness::{
    emit_config, emit_report, parse_config, report_from_dir, run_config, run_sweep, AxisValue,
    ExperimentConfig, SweepAxis, SweepSpec, SINGLE_RUN_AXIS, SUMMARY_HEADER,
};

const TINY: &str = "\
federation.n = 10
federation.rounds = 3
dataset.classes = 4
dataset.dim = 6
dataset.per_class = 30
dataset.test_per_class = 10
defense = \"median\"
attack = \"strike\"
seeds = [4, 9]
";

fn tiny() -> ExperimentConfig {
    parse_config(TINY).unwrap()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn report_files_have_the_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let outcome = run_config(&cfg, None).unwrap();
    let row = emit_report(dir.path(), &cfg, &outcome.runs, SINGLE_RUN_AXIS).unwrap();
    assert_eq!(row.seed_count, 2);
    assert_eq!(row.attack, "strike");
    assert_eq!(row.defense, "median");

    let rounds = read(&dir.path().join("rounds.jsonl"));
    assert_eq!(rounds.lines().count(), 3 * 2);
    let first = rounds.lines().next().unwrap();
    let at = |key: &str| first.find(&format!("\"{key}\":")).unwrap();
    let keys = ["round", "seed", "attack", "defense", "accuracy", "diagnostics", "aggregate"];
    assert!(keys.windows(2).all(|k| at(k[0]) < at(k[1])), "{first}");

    let summary = read(&dir.path().join("summary.csv"));
    assert_eq!(summary.lines().next(), Some(SUMMARY_HEADER));
    assert_eq!(summary.lines().count(), 2);

    let resolved = read(&dir.path().join("config.resolved.txt"));
    assert_eq!(parse_config(&resolved).unwrap(), cfg);
    assert_eq!(emit_config(&cfg), resolved);

    let curve = read(&dir.path().join("accuracy_vs_round.csv"));
    assert_eq!(curve.lines().count(), 1 + 6);

    // Rebuilding from rounds.jsonl gives the same summary.
    fs::remove_file(dir.path().join("summary.csv")).unwrap();
    let again = report_from_dir(dir.path(), SINGLE_RUN_AXIS).unwrap();
    assert_eq!(again, row);
    assert_eq!(read(&dir.path().join("summary.csv")), summary);
}

#[test]
fn rounds_do_not_depend_on_thread_count() {
    let cfg = tiny();
    let mut outputs = Vec::new();
    for threads in [1, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let dir = tempfile::tempdir().unwrap();
        pool.install(|| {
            let outcome = run_config(&cfg, None).unwrap();
            emit_report(dir.path(), &cfg, &outcome.runs, SINGLE_RUN_AXIS).unwrap();
        });
        outputs.push(fs::read(dir.path().join("rounds.jsonl")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn gradient_dumps_hold_the_honest_clients() {
    let outcome = run_config(&tiny(), Some(1)).unwrap();
    assert_eq!(outcome.dumps.len(), 2);
    for (_, batch) in &outcome.dumps {
        assert_eq!(batch.ids(), &[0, 1, 2, 3, 4, 5, 6, 7]);
    }
}

#[test]
fn single_cell_sweep_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = tiny();
    base.seeds = vec![1];
    let spec = SweepSpec {
        base,
        axis: SweepAxis::Beta,
        values: vec![AxisValue::Beta(0.3)],
    };
    let out = run_sweep(&spec, dir.path()).unwrap();
    assert_eq!(out.rows().len(), 1);
    assert_eq!(read(&dir.path().join("summary.csv")).lines().count(), 2);
    assert!(dir.path().join("beta=0.3/rounds.jsonl").exists());
}

#[test]
fn nu_sweep_rows_are_deterministic_and_order_free() {
    let mut base = tiny();
    base.seeds = vec![1, 2, 3];
    base.sim.federation.rounds = 2;
    let spec = SweepSpec::new(base, SweepAxis::Nu);
    assert_eq!(spec.values.len(), 8);

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = run_sweep(&spec, a.path()).unwrap();
    let rows = out.rows();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.seed_count == 3));
    let labels: Vec<&str> = rows.iter().map(|r| r.axis.as_str()).collect();
    assert_eq!(labels, ["0.25", "0.5", "0.75", "1", "1.25", "1.5", "1.75", "2"]);
    run_sweep(&spec, b.path()).unwrap();
    for file in ["summary.csv", "best_nu.json", "accuracy_vs_axis.csv"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap());
    }
    let best: serde_json::Value = serde_json::from_str(&read(&a.path().join("best_nu.json"))).unwrap();
    let strongest = out.strongest().unwrap();
    assert_eq!(best["best_nu"], serde_json::json!(strongest.axis));

    // Cells computed in reverse order match cell for cell.
    let mut reversed = spec.clone();
    reversed.values.reverse();
    let c = tempfile::tempdir().unwrap();
    let mut back = run_sweep(&reversed, c.path()).unwrap().rows();
    back.reverse();
    assert_eq!(back, rows);
}

#[test]
fn failing_cells_are_recorded_without_stopping_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = tiny();
    base.seeds = vec![1];
    base.sim.federation.rounds = 1;
    let spec = SweepSpec {
        base,
        axis: SweepAxis::ByzRatio,
        values: vec![AxisValue::ByzRatio(0.2), AxisValue::ByzRatio(0.5)],
    };
    let out = run_sweep(&spec, dir.path()).unwrap();
    assert!(out.cells[0].result.is_ok());
    assert!(out.cells[1].result.is_err());
    let errors = read(&dir.path().join("errors.csv"));
    assert_eq!(errors.lines().count(), 2);
    assert!(errors.lines().nth(1).unwrap().starts_with("0.5,"));

    // nu needs the strike attack.
    let mut base = tiny();
    base.sim.attack = strike_core::attacks::Attack::None;
    assert!(AxisValue::Nu(1.0).apply(&base).is_err());
}

#[test]
fn axis_values_rewrite_the_config() {
    let base = tiny();
    let c = AxisValue::Clients(50).apply(&base).unwrap();
    assert_eq!((c.sim.federation.n, c.sim.federation.f, c.sim.federation.sampled_per_round), (50, 10, 50));
    let c = AxisValue::ByzRatio(0.3).apply(&base).unwrap();
    assert_eq!(c.sim.federation.f, 3);
    let c = AxisValue::Iid.apply(&base).unwrap();
    assert!(c.sim.partition.iid);
    assert_eq!(AxisValue::Iid.to_string(), "iid");
    assert_eq!(SweepAxis::Beta.default_values().len(), 6);
    assert_eq!(SweepAxis::Clients.default_values().len(), 5);
}
