use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refvolt::params::{
    apply_degradation, load_parameter_set, DegradationScenario, Electrode, Interpolation, OcpCurve, ParameterSet,
};
use refvolt::Error;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Copies the bundled parameter file into a temp dir with `edit` applied.
fn edited_params(edit: impl Fn(&str) -> String) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(data_dir().join("lgm50.toml")).unwrap();
    for f in ["ocp_positive.csv", "ocp_negative.csv"] {
        std::fs::copy(data_dir().join(f), dir.path().join(f)).unwrap();
    }
    let path = dir.path().join("cell.toml");
    std::fs::write(&path, edit(&src)).unwrap();
    (dir, path)
}

#[test]
fn bundled_file_loads_with_documented_value() {
    let p = load_parameter_set(data_dir().join("lgm50.toml")).unwrap();
    assert_eq!(p.positive.active_volume_fraction, 0.665);
    assert_eq!(p, ParameterSet::bundled_default());
}

#[test]
fn active_fraction_above_one_is_rejected_with_field_name() {
    let (_dir, path) = edited_params(|s| s.replacen("active_volume_fraction = 0.665", "active_volume_fraction = 1.5", 1));
    let err = load_parameter_set(&path).unwrap_err();
    assert!(err.to_string().contains("active_volume_fraction out of (0,1)"), "{err}");
}

#[test]
fn degenerate_negative_window_is_rejected() {
    let (_dir, path) = edited_params(|s| s.replacen("stoich_at_0 = 0.0279", "stoich_at_0 = 0.9014", 1));
    let err = load_parameter_set(&path).unwrap_err();
    assert!(err.to_string().contains("degenerate stoichiometry window"), "{err}");
}

#[test]
fn missing_field_is_reported() {
    let (_dir, path) = edited_params(|s| s.replacen("nominal_capacity_ah = 5.0\n", "", 1));
    let err = load_parameter_set(&path).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }));
    assert!(err.to_string().contains("nominal_capacity_ah"), "{err}");
}

#[test]
fn save_and_reload_is_idempotent() {
    let p = ParameterSet::bundled_default();
    let dir = tempfile::tempdir().unwrap();
    let path = p.save(dir.path(), "copy").unwrap();
    let back = load_parameter_set(&path).unwrap();
    assert_eq!(back, p);
    let again = back.save(dir.path(), "copy2").unwrap();
    assert_eq!(load_parameter_set(again).unwrap(), p);
}

#[test]
fn twenty_percent_scenario_values() {
    let bol = ParameterSet::bundled_default();
    let s = &DegradationScenario::standard_levels()[2];
    let aged = apply_degradation(&bol, s).unwrap();
    let (b, a) = (bol.health(), aged.health());
    assert_eq!(a.eps_pos, 0.80 * b.eps_pos);
    assert_eq!(a.eps_neg, 0.80 * b.eps_neg);
    assert_eq!(a.beta0_pos, 0.95 * b.beta0_pos);
    assert_eq!(a.beta0_neg, 0.95 * b.beta0_neg);
    // Everything else is untouched.
    assert_eq!(aged.positive.stoich_at_100, bol.positive.stoich_at_100);
    assert_eq!(aged.electrolyte, bol.electrolyte);
    assert_eq!(aged.lumped_resistance, bol.lumped_resistance);
    assert_eq!(aged.negative.particle_radius, bol.negative.particle_radius);
}

#[test]
fn five_percent_scenario_ratios() {
    let s = &DegradationScenario::standard_levels()[0];
    assert_eq!(s.ratios, [0.95, 0.95, 0.975, 0.975]);
}

#[test]
fn degradation_round_trips_to_bol() {
    let bol = ParameterSet::bundled_default();
    for s in DegradationScenario::standard_levels() {
        let aged = apply_degradation(&bol, &s).unwrap().health().to_array();
        let b = bol.health().to_array();
        for i in 0..4 {
            let back = aged[i] / s.ratios[i];
            assert!(((back - b[i]) / b[i]).abs() < 1e-12);
        }
    }
    let same = apply_degradation(&bol, &DegradationScenario::identity()).unwrap();
    assert_eq!(same, bol);
}

#[test]
fn ocp_reproduces_knots() {
    let p = ParameterSet::bundled_default();
    for e in [Electrode::Positive, Electrode::Negative] {
        let curve = p.ocp(e);
        let (x, u) = curve.knots();
        for i in (0..x.len()).step_by(37) {
            assert_eq!(curve.eval(x[i]).unwrap().0, u[i]);
        }
    }
}

#[test]
fn linear_midpoint_is_knot_mean() {
    let c = OcpCurve::new(Electrode::Negative, vec![0.0, 0.5, 1.0], vec![1.0, 0.4, 0.1], Interpolation::Linear).unwrap();
    assert_eq!(c.eval(0.25).unwrap().0, 0.7);
    assert_eq!(c.eval(0.75).unwrap().0, 0.25);
}

#[test]
fn ocp_outside_table_is_an_error() {
    let p = ParameterSet::bundled_default();
    assert!(matches!(p.ocp_positive.eval(1.0 + 1e-9), Err(Error::OcpDomain { .. })));
    assert!(matches!(p.ocp_negative.eval(-1e-9), Err(Error::OcpDomain { .. })));
}

#[test]
fn ocp_slope_matches_central_differences() {
    // The cubic interpolant is C² only between knots, so stencils straddling a
    // knot are skipped.
    let p = ParameterSet::bundled_default();
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for e in [Electrode::Positive, Electrode::Negative] {
        let curve = p.ocp(e);
        let (knots, _) = curve.knots();
        let mut checked = 0;
        while checked < 100 {
            let x: f64 = rng.random_range(0.01..0.99);
            let i = knots.partition_point(|k| *k <= x);
            if (x - knots[i - 1]).abs() < 10.0 * h || (knots[i] - x).abs() < 10.0 * h {
                continue;
            }
            let (_, slope) = curve.eval(x).unwrap();
            let fd = (curve.eval(x + h).unwrap().0 - curve.eval(x - h).unwrap().0) / (2.0 * h);
            // The table has flat stretches, where a relative check is meaningless.
            let tol = 1e-6 * slope.abs().max(1e-3);
            assert!((fd - slope).abs() < tol, "{e:?} x={x}: {fd} vs {slope}");
            checked += 1;
        }
    }
}
