//! Fisher-information excitation design by particle swarm optimization.
//!
//! A candidate is one current per interval. It is scored on the OCP model:
//! sensitivities, Fisher matrix scaled to relative parameters, then the chosen
//! optimality criterion. Constraint violations are subtracted as a penalty.

mod pso;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{design_objective, fisher, sensitivities_ocp, Criterion};
use crate::params::ParameterSet;
use crate::sim::{ocp_response, simulate_spme, CellState, ExcitationProfile};

pub use pso::{design_excitation, design_excitation_seeded, PsoConfig};

/// Violation charged when the OCP model cannot be evaluated at all.
const DOMAIN_VIOLATION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSpec {
    /// Test length (s).
    pub horizon: f64,
    pub intervals: usize,
    /// Bound on |I| as a multiple of the 1C current.
    pub c_rate_bound: f64,
    pub soc0: f64,
    pub soc_bounds: (f64, f64),
    pub voltage_window: (f64, f64),
    pub criterion: Criterion,
    pub sample_period: f64,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            horizon: 600.0,
            intervals: 10,
            c_rate_bound: 1.0,
            soc0: 0.0,
            soc_bounds: (0.0, 1.0),
            voltage_window: (2.4, 4.2),
            criterion: Criterion::D,
            sample_period: 1.0,
        }
    }
}

impl DesignSpec {
    /// Defaults with the voltage window taken from `params`.
    pub fn for_params(params: &ParameterSet, criterion: Criterion) -> Self {
        Self {
            voltage_window: params.voltage_window,
            criterion,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 {
            return Err(Error::invalid("intervals", "must be at least 1"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        if !(self.c_rate_bound > 0.0) {
            return Err(Error::invalid("c_rate_bound", "must be positive"));
        }
        if !(self.soc_bounds.0 < self.soc_bounds.1) {
            return Err(Error::invalid("soc_bounds", "degenerate window"));
        }
        if !(self.voltage_window.0 < self.voltage_window.1) {
            return Err(Error::invalid("voltage_window", "degenerate window"));
        }
        if !(self.soc_bounds.0..=self.soc_bounds.1).contains(&self.soc0) {
            return Err(Error::invalid("soc0", "outside SOC bounds"));
        }
        self.profile(vec![0.0; self.intervals]).map(|_| ())
    }

    pub fn segment_duration(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn max_current(&self, params: &ParameterSet) -> f64 {
        params.c_rate_current(self.c_rate_bound)
    }

    pub fn profile(&self, currents: Vec<f64>) -> Result<ExcitationProfile> {
        ExcitationProfile::new(self.segment_duration(), currents, self.sample_period)
    }
}

/// Extremes reached by a profile, used to check constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub max_abs_current: f64,
    pub min_soc: f64,
    pub max_soc: f64,
    /// NaN when the voltage could not be evaluated.
    pub min_voltage: f64,
    pub max_voltage: f64,
}

/// Constraint violation magnitudes (zero when satisfied).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Violations {
    /// Σ over segments of excess amps × segment duration (A·s).
    pub current: f64,
    /// Largest SOC excursion outside the bounds.
    pub soc: f64,
    /// Largest voltage excursion outside the window (V).
    pub voltage: f64,
    /// Set when the model could not be evaluated.
    pub domain: f64,
}

impl Violations {
    pub fn total(&self) -> f64 {
        self.current + self.soc + self.voltage + self.domain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEvaluation {
    /// Sign-adjusted metric (larger is better); zero when unavailable.
    pub objective: f64,
    /// `objective − penalty_weight × total violation`.
    pub penalized: f64,
    pub feasible: bool,
    pub violations: Violations,
    pub report: ConstraintReport,
}

/// Scores one candidate. Never fails on a bad candidate; problems show up as
/// violations.
pub fn evaluate_design(
    candidate: &[f64],
    spec: &DesignSpec,
    params: &ParameterSet,
    penalty_weight: f64,
) -> Result<DesignEvaluation> {
    if candidate.len() != spec.intervals {
        return Err(Error::InvalidInput(format!(
            "candidate has {} currents, expected {}",
            candidate.len(),
            spec.intervals
        )));
    }
    let profile = spec.profile(candidate.to_vec())?;
    let i_max = spec.max_current(params);
    let seg = spec.segment_duration();
    let mut v = Violations {
        current: candidate
            .iter()
            .map(|i| (i.abs() - i_max).max(0.0) * seg)
            .sum(),
        ..Violations::default()
    };

    let q_neg = params.negative.capacity(params.faraday);
    let charge = profile.charge_at_samples();
    let (mut min_soc, mut max_soc) = (spec.soc0, spec.soc0);
    for q in &charge {
        let soc = spec.soc0 - q / q_neg;
        min_soc = min_soc.min(soc);
        max_soc = max_soc.max(soc);
    }
    v.soc = (spec.soc_bounds.0 - min_soc).max(max_soc - spec.soc_bounds.1).max(0.0);

    let mut report = ConstraintReport {
        max_abs_current: profile.max_abs_current(),
        min_soc,
        max_soc,
        min_voltage: f64::NAN,
        max_voltage: f64::NAN,
    };
    let mut objective = 0.0;
    match ocp_response(params, &profile, spec.soc0) {
        Ok(r) => {
            let lo = r.voltage.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.voltage.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            report.min_voltage = lo;
            report.max_voltage = hi;
            v.voltage = (spec.voltage_window.0 - lo).max(hi - spec.voltage_window.1).max(0.0);
            objective = scaled_objective(params, &profile, spec.soc0, spec.criterion).unwrap_or(0.0);
        }
        Err(_) => v.domain = DOMAIN_VIOLATION,
    }
    let total = v.total();
    Ok(DesignEvaluation {
        objective,
        penalized: objective - penalty_weight * total,
        feasible: total == 0.0,
        violations: v,
        report,
    })
}

/// Criterion value of the Fisher matrix in relative parameter units
/// (columns scaled by the BOL health values).
pub fn scaled_objective(
    params: &ParameterSet,
    profile: &ExcitationProfile,
    soc0: f64,
    criterion: Criterion,
) -> Result<f64> {
    let sens = sensitivities_ocp(params, profile, soc0)?;
    let f = fisher(&sens)?.scaled(&params.health().to_array());
    match design_objective(&f, criterion) {
        Err(Error::SingularMatrix { .. }) if criterion == Criterion::A => Ok(SINGULAR_A_OBJECTIVE),
        other => other,
    }
}

/// Objective assigned under A-optimality when `F` cannot be inverted.
pub const SINGULAR_A_OBJECTIVE: f64 = -1e15;

/// Constant charging at the design's C-rate bound over the whole horizon.
pub fn cc_baseline(spec: &DesignSpec, params: &ParameterSet) -> Result<ExcitationProfile> {
    spec.profile(vec![-spec.max_current(params); spec.intervals])
}

/// Outcome of checking a designed profile on the SPMe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpmeCheck {
    pub passed: bool,
    pub min_voltage: f64,
    pub max_voltage: f64,
    pub message: Option<String>,
}

/// Runs the SPMe from equilibrium at `spec.soc0` and checks the voltage window.
pub fn verify_on_spme(profile: &ExcitationProfile, spec: &DesignSpec, params: &ParameterSet) -> SpmeCheck {
    let run = CellState::equilibrium(params, spec.soc0).and_then(|s| simulate_spme(params, profile, &s));
    match run {
        Ok(t) => {
            let lo = t.voltage.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = t.voltage.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let passed = lo >= spec.voltage_window.0 && hi <= spec.voltage_window.1;
            SpmeCheck {
                passed,
                min_voltage: lo,
                max_voltage: hi,
                message: (!passed).then(|| format!("SPMe voltage range [{lo:.4}, {hi:.4}] V leaves the window")),
            }
        }
        Err(e) => SpmeCheck {
            passed: false,
            min_voltage: f64::NAN,
            max_voltage: f64::NAN,
            message: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub criterion: Criterion,
    pub profile: ExcitationProfile,
    pub objective: f64,
    /// Best penalized objective after initialization and after each iteration.
    pub history: Vec<f64>,
    pub report: ConstraintReport,
    pub spme_check: SpmeCheck,
    pub iterations: usize,
    pub evaluations: usize,
}

impl DesignResult {
    /// `iteration,best_objective`
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,best_objective\n");
        for (i, v) in self.history.iter().enumerate() {
            let _ = writeln!(out, "{i},{v}");
        }
        out
    }

    pub fn write_history_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.history_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_current_has_zero_d_objective() {
        let p = ParameterSet::bundled_default();
        let spec = DesignSpec::for_params(&p, Criterion::D);
        let e = evaluate_design(&[0.0; 10], &spec, &p, 1e6).unwrap();
        assert!(e.feasible);
        assert!(e.objective.abs() < 1e-30);
    }

    #[test]
    fn current_excess_is_amp_seconds() {
        let p = ParameterSet::bundled_default();
        let spec = DesignSpec::for_params(&p, Criterion::D);
        let mut c = vec![-p.c_rate_current(1.0); 10];
        c[3] = -p.c_rate_current(1.0) - 0.5;
        let e = evaluate_design(&c, &spec, &p, 1e6).unwrap();
        assert!(!e.feasible);
        assert!((e.violations.current - 0.5 * 60.0).abs() < 1e-9);
        assert_eq!(e.violations.soc, 0.0);
    }

    #[test]
    fn discharge_from_empty_violates_soc() {
        let p = ParameterSet::bundled_default();
        let spec = DesignSpec::for_params(&p, Criterion::D);
        let e = evaluate_design(&[5.0; 10], &spec, &p, 1e6).unwrap();
        assert!(!e.feasible);
        assert!(e.violations.soc > 0.0);
        assert!(e.penalized < -1e5);
    }

    #[test]
    fn baseline_shape() {
        let p = ParameterSet::bundled_default();
        let spec = DesignSpec {
            horizon: 300.0,
            intervals: 5,
            ..DesignSpec::for_params(&p, Criterion::D)
        };
        let b = cc_baseline(&spec, &p).unwrap();
        assert_eq!(b.currents(), &[-5.0; 5]);
        assert_eq!(b.segment_duration(), 60.0);
    }

    #[test]
    fn wrong_length_is_error() {
        let p = ParameterSet::bundled_default();
        let spec = DesignSpec::for_params(&p, Criterion::E);
        assert!(evaluate_design(&[0.0; 3], &spec, &p, 1e6).is_err());
    }
}
