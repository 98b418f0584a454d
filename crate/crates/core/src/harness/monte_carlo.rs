use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::{derive_seed, streams, ExperimentPlan};
use crate::error::{Error, Result};
use crate::estimation::{estimate_with, EstimationMode, EstimationProblem, LmOptions, ModelKind};
use crate::fisher::{fisher, predict_error, sensitivities_ocp, ErrorPrediction};
use crate::params::{apply_degradation, DegradationScenario, HealthVector, ParameterSet};
use crate::sim::{measure, CellState, ExcitationProfile, Fidelity, UncertaintySpec};

/// One plan cell repeated with fresh noise.
#[derive(Debug, Clone)]
pub struct MonteCarloCell {
    pub params: ParameterSet,
    pub scenario: DegradationScenario,
    pub profile: ExcitationProfile,
    pub soc0: f64,
    pub mode: EstimationMode,
    pub plant: Fidelity,
    pub model: ModelKind,
    pub bol_uncertainty: UncertaintySpec,
    pub aged_uncertainty: UncertaintySpec,
    pub lm: LmOptions,
    pub seed: u64,
}

impl MonteCarloCell {
    /// The cell named by the plan's `[monte_carlo]` table.
    pub fn from_plan(plan: &ExperimentPlan) -> Result<Self> {
        let mc = &plan.monte_carlo;
        let params = plan.load_params()?;
        let scenario = plan.scenarios[plan.scenario_index(&mc.scenario)?].clone();
        let (profile, _) = plan.build_excitation(plan.excitation_index(&mc.excitation)?, &params)?;
        Ok(Self {
            params,
            scenario,
            profile,
            soc0: plan.soc0,
            mode: mc.mode,
            plant: mc.plant,
            model: mc.model,
            bol_uncertainty: mc.bol_uncertainty.unwrap_or(plan.uncertainty),
            aged_uncertainty: mc.aged_uncertainty.unwrap_or(plan.uncertainty),
            lm: plan.estimation.clone(),
            seed: plan.master_seed,
        })
    }

    /// Mean lumped uncertainty entering the fit (V).
    pub fn delta_bar(&self) -> f64 {
        match self.mode {
            EstimationMode::Reference => self.aged_uncertainty.constant_offset() - self.bol_uncertainty.constant_offset(),
            EstimationMode::Conventional => self.aged_uncertainty.constant_offset(),
        }
    }

    /// Linearized prediction at the true aged parameters from OCP sensitivities.
    /// In conventional mode only one measurement contributes noise, so the
    /// covariance is half the reference-mode value.
    pub fn prediction(&self) -> Result<ErrorPrediction> {
        let aged = apply_degradation(&self.params, &self.scenario)?;
        let sens = sensitivities_ocp(&aged, &self.profile, self.soc0)?;
        let f = fisher(&sens)?;
        let sigma = self.aged_uncertainty.noise_sigma;
        let mut p = predict_error(&f, &sens, self.delta_bar(), sigma)?;
        if self.mode == EstimationMode::Conventional {
            for row in p.covariance.iter_mut() {
                for v in row.iter_mut() {
                    *v *= 0.5;
                }
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub replicates: usize,
    pub excluded: usize,
    pub truth: HealthVector,
    /// Sample mean of `θ_true − θ̂` (natural units).
    pub mean_error: [f64; 4],
    /// Sample covariance of `θ_true − θ̂` (n − 1 normalization).
    pub covariance: [[f64; 4]; 4],
    pub prediction: ErrorPrediction,
}

impl MonteCarloSummary {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

/// Repeats the cell `replicates` times with independent noise on both
/// measurements. Replicates that fail or do not converge are excluded; more
/// than 10% exclusions is an error.
pub fn run_monte_carlo(cell: &MonteCarloCell, replicates: usize) -> Result<MonteCarloSummary> {
    if replicates < 2 {
        return Err(Error::InvalidInput("Monte Carlo needs at least 2 replicates".into()));
    }
    let aged = apply_degradation(&cell.params, &cell.scenario)?;
    let truth = aged.health();
    let bol_state = CellState::equilibrium(&cell.params, cell.soc0)?;
    let aged_state = CellState::equilibrium(&aged, cell.soc0)?;
    let prediction = cell.prediction()?;

    let errors: Vec<Option<[f64; 4]>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let (s0, s1) = streams::replicate(r);
            let bol_unc = cell.bol_uncertainty.with_seed(derive_seed(cell.seed, s0));
            let aged_unc = cell.aged_uncertainty.with_seed(derive_seed(cell.seed, s1));
            let run = || -> Result<[f64; 4]> {
                let v1 = measure(&aged, &cell.profile, &aged_state, cell.plant, &aged_unc)?;
                let v0 = match cell.mode {
                    EstimationMode::Reference => {
                        Some(measure(&cell.params, &cell.profile, &bol_state, cell.plant, &bol_unc)?)
                    }
                    EstimationMode::Conventional => None,
                };
                let problem =
                    EstimationProblem::new(cell.mode, cell.model, &cell.params, &cell.profile, cell.soc0, v1, v0)?;
                let result = estimate_with(&problem, &cell.lm)?;
                if !result.converged {
                    return Err(Error::InvalidInput(result.termination));
                }
                let (t, e) = (truth.to_array(), result.theta.to_array());
                Ok(std::array::from_fn(|i| t[i] - e[i]))
            };
            run().ok()
        })
        .collect();

    let ok: Vec<[f64; 4]> = errors.iter().flatten().copied().collect();
    let excluded = replicates - ok.len();
    if excluded * 10 > replicates || ok.len() < 2 {
        return Err(Error::TooManyExclusions {
            excluded,
            total: replicates,
        });
    }
    let n = ok.len() as f64;
    let mean: [f64; 4] = std::array::from_fn(|i| ok.iter().map(|e| e[i]).sum::<f64>() / n);
    let covariance = std::array::from_fn(|i| {
        std::array::from_fn(|j| ok.iter().map(|e| (e[i] - mean[i]) * (e[j] - mean[j])).sum::<f64>() / (n - 1.0))
    });
    Ok(MonteCarloSummary {
        replicates,
        excluded,
        truth,
        mean_error: mean,
        covariance,
        prediction,
    })
}
