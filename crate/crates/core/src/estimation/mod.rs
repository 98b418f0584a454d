//! Joint least-squares estimation of the four health parameters.
//!
//! Conventional mode fits the aged measurement directly,
//! `r_k = V₁ᵐ(t_k) − S(θ̂, t_k)`. Reference mode fits the difference from the
//! beginning-of-life measurement under the same excitation,
//! `r_k = (V₁ᵐ − V₀ᵐ)(t_k) − (S(θ̂, t_k) − S(θ₀, t_k))`, so uncertainty terms
//! common to both measurements cancel.

mod lm;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{HealthVector, ParameterSet};
use crate::sim::{
    run_electrochemical, simulate_ocp_model, CellState, ExcitationProfile, SimOptions, SolidModel,
    VoltageTrajectory,
};

pub use lm::{LmOptions, MultiStart, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMode {
    Conventional,
    Reference,
}

impl EstimationMode {
    pub fn label(self) -> &'static str {
        match self {
            EstimationMode::Conventional => "conventional",
            EstimationMode::Reference => "reference",
        }
    }
}

impl std::str::FromStr for EstimationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(Self::Conventional),
            "reference" => Ok(Self::Reference),
            other => Err(Error::InvalidInput(format!(
                "unknown mode `{other}` (expected conventional or reference)"
            ))),
        }
    }
}

/// Model `S` fitted to the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ocp,
    #[default]
    Spme,
}

/// Box bounds on θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl Bounds {
    /// `[lo, hi] × θ₀`, intersected with the open unit interval.
    pub fn relative(theta0: &HealthVector, lo: f64, hi: f64) -> Self {
        let t = theta0.to_array();
        Self {
            lower: std::array::from_fn(|i| (t[i] * lo).max(1e-6)),
            upper: std::array::from_fn(|i| (t[i] * hi).min(1.0 - 1e-6)),
        }
    }

    pub fn contains(&self, theta: &[f64; 4]) -> bool {
        (0..4).all(|i| self.lower[i] <= theta[i] && theta[i] <= self.upper[i])
    }

    pub fn clamp(&self, theta: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| theta[i].clamp(self.lower[i], self.upper[i]))
    }
}

/// Everything needed to fit θ̂₁ to measured data.
#[derive(Debug, Clone)]
pub struct EstimationProblem {
    mode: EstimationMode,
    model: ModelKind,
    template: ParameterSet,
    profile: ExcitationProfile,
    soc0: f64,
    bounds: Bounds,
    initial: HealthVector,
    aged: VoltageTrajectory,
    reference: Option<VoltageTrajectory>,
    /// `V₁ᵐ` (conventional) or `V₁ᵐ − V₀ᵐ` (reference).
    target: Vec<f64>,
    /// `S(θ₀, ·)`, reference mode only.
    nominal: Option<Vec<f64>>,
}

impl EstimationProblem {
    /// Problem fitting `aged` alone. `template` supplies θ₀ and every
    /// non-target parameter; the cell starts relaxed at `soc0`.
    pub fn conventional(
        template: &ParameterSet,
        profile: &ExcitationProfile,
        soc0: f64,
        aged: VoltageTrajectory,
    ) -> Result<Self> {
        Self::build(EstimationMode::Conventional, template, profile, soc0, aged, None, ModelKind::Spme)
    }

    /// Problem fitting `aged − reference`.
    pub fn reference(
        template: &ParameterSet,
        profile: &ExcitationProfile,
        soc0: f64,
        aged: VoltageTrajectory,
        reference: VoltageTrajectory,
    ) -> Result<Self> {
        Self::build(
            EstimationMode::Reference,
            template,
            profile,
            soc0,
            aged,
            Some(reference),
            ModelKind::Spme,
        )
    }

    /// Generic constructor.
    pub fn new(
        mode: EstimationMode,
        model: ModelKind,
        template: &ParameterSet,
        profile: &ExcitationProfile,
        soc0: f64,
        aged: VoltageTrajectory,
        reference: Option<VoltageTrajectory>,
    ) -> Result<Self> {
        Self::build(mode, template, profile, soc0, aged, reference, model)
    }

    fn build(
        mode: EstimationMode,
        template: &ParameterSet,
        profile: &ExcitationProfile,
        soc0: f64,
        aged: VoltageTrajectory,
        reference: Option<VoltageTrajectory>,
        model: ModelKind,
    ) -> Result<Self> {
        template.validate()?;
        if !(0.0..=1.0).contains(&soc0) {
            return Err(Error::InvalidInput(format!("soc0 {soc0} outside [0, 1]")));
        }
        let times = profile.sample_times();
        let matches_profile = |t: &[f64]| {
            t.len() == times.len()
                && t.iter().zip(&times).all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1.0))
        };
        if !matches_profile(&aged.times) {
            return Err(Error::InvalidInput(
                "aged measurement timestamps do not match the excitation sampling".into(),
            ));
        }
        let target = match (mode, &reference) {
            (EstimationMode::Conventional, _) => aged.voltage.clone(),
            (EstimationMode::Reference, Some(r)) => {
                if r.times != aged.times {
                    return Err(Error::TimestampMismatch);
                }
                aged.voltage.iter().zip(&r.voltage).map(|(a, b)| a - b).collect()
            }
            (EstimationMode::Reference, None) => {
                return Err(Error::InvalidInput("reference mode needs a reference measurement".into()))
            }
        };
        let theta0 = template.health();
        let mut problem = Self {
            mode,
            model,
            template: template.clone(),
            profile: profile.clone(),
            soc0,
            bounds: Bounds::relative(&theta0, 0.5, 1.2),
            initial: theta0,
            aged,
            reference,
            target,
            nominal: None,
        };
        problem.refresh_nominal()?;
        Ok(problem)
    }

    fn refresh_nominal(&mut self) -> Result<()> {
        self.nominal = match self.mode {
            EstimationMode::Reference => Some(self.simulate(&self.template.health())?),
            EstimationMode::Conventional => None,
        };
        Ok(())
    }

    pub fn with_model(mut self, model: ModelKind) -> Result<Self> {
        self.model = model;
        self.refresh_nominal()?;
        Ok(self)
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Result<Self> {
        if !(0..4).all(|i| bounds.lower[i] < bounds.upper[i]) {
            return Err(Error::InvalidInput("empty parameter bounds".into()));
        }
        if !bounds.contains(&self.initial.to_array()) {
            return Err(Error::InvalidInput("bounds exclude the initial guess".into()));
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn with_initial(mut self, initial: HealthVector) -> Result<Self> {
        initial.validate()?;
        if !self.bounds.contains(&initial.to_array()) {
            return Err(Error::InvalidInput("initial guess outside bounds".into()));
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn mode(&self) -> EstimationMode {
        self.mode
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn initial(&self) -> HealthVector {
        self.initial
    }

    /// θ₀, the beginning-of-life health values.
    pub fn nominal_health(&self) -> HealthVector {
        self.template.health()
    }

    pub fn profile(&self) -> &ExcitationProfile {
        &self.profile
    }

    pub fn aged(&self) -> &VoltageTrajectory {
        &self.aged
    }

    pub fn reference_measurement(&self) -> Option<&VoltageTrajectory> {
        self.reference.as_ref()
    }

    pub fn sample_count(&self) -> usize {
        self.target.len()
    }

    /// Estimation-model output `S(θ, t_k)`.
    pub fn simulate(&self, theta: &HealthVector) -> Result<Vec<f64>> {
        let params = self.template.with_health(theta)?;
        match self.model {
            ModelKind::Ocp => Ok(simulate_ocp_model(&params, &self.profile, self.soc0)?.voltage),
            ModelKind::Spme => {
                let state = CellState::equilibrium(&params, self.soc0)?;
                let options = SimOptions {
                    substeps: None,
                    enforce_voltage_window: false,
                };
                let run = run_electrochemical(&params, &self.profile, &state, SolidModel::Polynomial, options)?;
                Ok(run.trajectory.voltage)
            }
        }
    }
}

/// Residual vector at `theta` (V per sample).
pub fn residuals(theta: &HealthVector, problem: &EstimationProblem) -> Result<Vec<f64>> {
    let s = problem.simulate(theta)?;
    Ok(match &problem.nominal {
        None => problem.target.iter().zip(&s).map(|(y, m)| y - m).collect(),
        Some(s0) => problem
            .target
            .iter()
            .zip(s.iter().zip(s0))
            .map(|(y, (m, m0))| y - (m - m0))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub mode: EstimationMode,
    pub theta: HealthVector,
    /// `100·(θ̂ − θ_true)/θ_true`, present once a truth is supplied.
    pub errors_pct: Option<[f64; 4]>,
    /// Residual sum of squares at θ̂ (V²).
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: String,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
}

impl EstimationResult {
    pub fn with_truth(mut self, truth: &HealthVector) -> Self {
        self.errors_pct = Some(evaluate_against_truth(&self, truth));
        self
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

/// Fits θ̂₁ by projected Levenberg–Marquardt with default options.
pub fn estimate(problem: &EstimationProblem) -> Result<EstimationResult> {
    estimate_with(problem, &LmOptions::default())
}

pub fn estimate_with(problem: &EstimationProblem, options: &LmOptions) -> Result<EstimationResult> {
    lm::solve(problem, options)
}

/// Percent error `100·(θ̂ᵢ − θ_true,i)/θ_true,i` per parameter.
pub fn evaluate_against_truth(result: &EstimationResult, truth: &HealthVector) -> [f64; 4] {
    let (e, t) = (result.theta.to_array(), truth.to_array());
    std::array::from_fn(|i| 100.0 * (e[i] - t[i]) / t[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ParameterSet, ExcitationProfile) {
        let p = ParameterSet::bundled_default();
        let profile = ExcitationProfile::new(60.0, vec![-5.0, -5.0, -2.0, -5.0, -4.0], 2.0).unwrap();
        (p, profile)
    }

    #[test]
    fn reference_identity_gives_zero_residuals() {
        let (p, profile) = setup();
        let problem = EstimationProblem::new(
            EstimationMode::Reference,
            ModelKind::Ocp,
            &p,
            &profile,
            0.0,
            simulate_ocp_model(&p, &profile, 0.0).unwrap(),
            Some(simulate_ocp_model(&p, &profile, 0.0).unwrap()),
        )
        .unwrap();
        let r = residuals(&p.health(), &problem).unwrap();
        assert!(r.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn conventional_truth_gives_zero_residuals() {
        let (p, profile) = setup();
        let state = CellState::equilibrium(&p, 0.0).unwrap();
        let aged = crate::sim::simulate_spme(&p, &profile, &state).unwrap();
        let problem = EstimationProblem::conventional(&p, &profile, 0.0, aged).unwrap();
        let r = residuals(&p.health(), &problem).unwrap();
        assert!(r.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn reference_mode_requires_matching_times() {
        let (p, profile) = setup();
        let a = simulate_ocp_model(&p, &profile, 0.0).unwrap();
        let mut b = a.clone();
        b.times[3] += 0.5;
        assert!(matches!(
            EstimationProblem::reference(&p, &profile, 0.0, a, b),
            Err(Error::TimestampMismatch)
        ));
    }

    #[test]
    fn percent_errors() {
        let truth = HealthVector::from_array([0.5, 0.6, 0.7, 0.1]);
        let result = EstimationResult {
            mode: EstimationMode::Reference,
            theta: truth.scaled(&[1.05; 4]),
            errors_pct: None,
            ssr: 0.0,
            iterations: 0,
            converged: true,
            termination: String::new(),
            evaluations: 0,
            trace: Vec::new(),
        };
        for e in evaluate_against_truth(&result, &truth) {
            assert!((e - 5.0).abs() < 1e-12);
        }
        let exact = EstimationResult { theta: truth, ..result };
        assert_eq!(evaluate_against_truth(&exact, &truth), [0.0; 4]);
    }

    #[test]
    fn default_bounds_stay_inside_unit_interval() {
        let p = ParameterSet::bundled_default();
        let b = Bounds::relative(&p.health(), 0.5, 1.2);
        assert!(b.upper.iter().all(|u| *u < 1.0));
        assert!(b.contains(&p.health().to_array()));
    }
}
