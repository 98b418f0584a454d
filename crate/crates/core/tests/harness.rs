use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use refvolt::estimation::{EstimationMode, ModelKind};
use refvolt::harness::{
    emit_report, run_monte_carlo, run_plan, ExcitationSource, ExperimentPlan, MonteCarloCell, ReportFormat,
    ReportRow, ReportTable,
};
use refvolt::params::DegradationScenario;
use refvolt::sim::{Fidelity, UncertaintySpec};

fn default_plan_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/plans/default_plan.toml")
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/report")
}

#[allow(clippy::approx_constant)]
fn fixture_table() -> ReportTable {
    let row = |scenario: &str, mode, excitation: &str, errors: Option<[f64; 4]>| ReportRow {
        scenario: scenario.into(),
        mode,
        excitation: excitation.into(),
        errors_pct: errors,
        failure: errors.is_none().then(|| "estimation: voltage 2.1 V < 2.4 V".to_string()),
        result_file: errors.map(|_| format!("results/{scenario}_{excitation}.json")),
    };
    let mut t = ReportTable::new("Health parameter estimation error (%)");
    t.rows = vec![
        row("10%", EstimationMode::Reference, "D-opt", Some([-0.412, 0.0731, 0.25, -1.0 / 3.0])),
        row("10%", EstimationMode::Conventional, "D-opt", Some([4.5, -2.125, 0.875, 7.0])),
        row("10%", EstimationMode::Reference, "1C-CC", Some([1.2e-5, -0.0, 3.14159, -12.5])),
        row("10%", EstimationMode::Conventional, "1C-CC", None),
    ];
    t
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn report_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    emit_report(&fixture_table(), dir.path(), &[ReportFormat::Text, ReportFormat::Csv, ReportFormat::Svg]).unwrap();
    if std::env::var_os("REFVOLT_BLESS").is_some() {
        std::fs::create_dir_all(fixture_dir()).unwrap();
        for f in ["table.txt", "table.csv", "errors.svg"] {
            std::fs::copy(dir.path().join(f), fixture_dir().join(f)).unwrap();
        }
    }
    for f in ["table.txt", "table.csv", "errors.svg"] {
        let got = std::fs::read_to_string(dir.path().join(f)).unwrap();
        let want = std::fs::read_to_string(fixture_dir().join(f)).unwrap();
        assert_eq!(got, want, "{f} differs from the golden file");
    }
}

#[test]
fn report_csv_round_trips() {
    let t = fixture_table();
    let back = ReportTable::from_csv(&t.to_csv()).unwrap();
    assert_eq!(back, t);
    let reloaded = ReportTable::read_csv(fixture_dir().join("table.csv")).unwrap();
    assert_eq!(reloaded, t);
}

#[test]
fn default_plan_is_complete_reproducible_and_favours_reference() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut plan = ExperimentPlan::load(default_plan_path()).unwrap();
    plan.output_dir = Some(a.path().to_path_buf());
    let outcome = run_plan(&plan).unwrap();
    let table = &outcome.table;

    assert_eq!(table.rows.len(), 3 * 2 * 4);
    assert_eq!(table.failures(), 0);
    for s in ["5%", "10%", "20%"] {
        for m in [EstimationMode::Reference, EstimationMode::Conventional] {
            for e in ["D-opt", "E-opt", "A-opt", "1C-CC"] {
                let row = table.row(s, m, e).unwrap();
                let file = a.path().join(row.result_file.as_ref().unwrap());
                assert!(file.exists(), "{}", file.display());
            }
        }
        let max = |m| {
            table.row(s, m, "D-opt").unwrap().errors_pct.unwrap().iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
        };
        assert!(max(EstimationMode::Reference) < max(EstimationMode::Conventional), "level {s}");
    }
    let csv = std::fs::read_to_string(a.path().join("report/table.csv")).unwrap();
    assert_eq!(ReportTable::from_csv(&csv).unwrap(), *table);

    // A different thread count must not change a single byte.
    plan.output_dir = Some(b.path().to_path_buf());
    plan.threads = 1;
    run_plan(&plan).unwrap();
    let (mut ta, mut tb) = (read_tree(a.path()), read_tree(b.path()));
    // The plan echo records the thread count itself.
    let (pa, pb) = (ta.remove(Path::new("plan.toml")).unwrap(), tb.remove(Path::new("plan.toml")).unwrap());
    assert_ne!(pa, pb);
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(tb[k] == *v, "{} differs between runs", k.display());
    }
}

#[test]
fn noise_free_self_consistent_plan_recovers_truth() {
    let dir = tempfile::tempdir().unwrap();
    let plan = ExperimentPlan {
        output_dir: Some(dir.path().to_path_buf()),
        master_seed: 5,
        excitations: vec![ExcitationSource::Designed {
            criterion: refvolt::fisher::Criterion::D,
        }],
        plant: Fidelity::Spme,
        estimation_model: ModelKind::Spme,
        uncertainty: UncertaintySpec::none(),
        ..ExperimentPlan::default()
    };
    let table = run_plan(&plan).unwrap().table;
    assert_eq!(table.rows.len(), 3 * 2);
    for r in &table.rows {
        let e = r.errors_pct.unwrap();
        assert!(e.iter().all(|v| v.abs() < 0.1), "{r:?}");
    }
}

#[test]
fn failing_cells_are_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    // Discharging from empty leaves the OCP table on the first sample.
    let profile = dir.path().join("discharge.csv");
    refvolt::sim::ExcitationProfile::constant(5.0, 120.0, 2, 1.0).unwrap().write_csv(&profile).unwrap();
    let plan = ExperimentPlan {
        output_dir: Some(dir.path().join("out")),
        scenarios: vec![DegradationScenario::standard_levels()[0].clone()],
        excitations: vec![
            ExcitationSource::Cc,
            ExcitationSource::File {
                path: profile,
                label: "discharge".into(),
            },
        ],
        plant: Fidelity::Ocp,
        estimation_model: ModelKind::Ocp,
        ..ExperimentPlan::default()
    };
    let table = run_plan(&plan).unwrap().table;
    assert_eq!(table.rows.len(), 4);
    assert_eq!(table.failures(), 2);
    assert!(table.row("5%", EstimationMode::Reference, "1C-CC").unwrap().errors_pct.is_some());
    let text = std::fs::read_to_string(dir.path().join("out/report/table.txt")).unwrap();
    assert!(text.contains("failed: "));
}

#[test]
fn noiseless_monte_carlo_has_zero_spread() {
    let mut plan = ExperimentPlan::load(default_plan_path()).unwrap();
    plan.uncertainty = UncertaintySpec::none();
    plan.pso.max_iterations = 10;
    plan.pso.swarm_size = 10;
    let cell = MonteCarloCell::from_plan(&plan).unwrap();
    let summary = run_monte_carlo(&cell, 50).unwrap();
    assert_eq!(summary.excluded, 0);
    assert!(summary.covariance.iter().flatten().all(|c| c.abs() < 1e-12));
    assert!(summary.prediction.covariance.iter().flatten().all(|c| *c == 0.0));
}

#[test]
fn plan_round_trips_through_toml() {
    let plan = ExperimentPlan::load(default_plan_path()).unwrap();
    let text = plan.to_toml().unwrap();
    let mut back: ExperimentPlan = toml::from_str(&text).unwrap();
    back.base_dir = plan.base_dir.clone();
    assert_eq!(back, plan);
}

#[test]
fn plans_without_cells_are_rejected() {
    let plan = ExperimentPlan {
        modes: vec![],
        ..ExperimentPlan::default()
    };
    assert!(plan.validate().is_err());
    let dup = ExperimentPlan {
        excitations: vec![ExcitationSource::Cc, ExcitationSource::Cc],
        ..ExperimentPlan::default()
    };
    assert!(dup.validate().is_err());
}
