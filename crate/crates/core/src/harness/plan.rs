use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{cc_baseline, design_excitation, DesignResult, DesignSpec, PsoConfig};
use crate::error::{Error, Result};
use crate::estimation::{EstimationMode, LmOptions, ModelKind};
use crate::fisher::Criterion;
use crate::params::{load_parameter_set, DegradationScenario, ParameterSet};
use crate::sim::{ExcitationProfile, Fidelity, UncertaintySpec};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "REFVOLT_OUTPUT_DIR";

/// Seed streams. Every random quantity in a plan draws its seed as
/// `derive_seed(master_seed, stream)`:
///
/// | stream                          | use                                    |
/// |---------------------------------|----------------------------------------|
/// | `1000 + e`                      | swarm for designed excitation `e`      |
/// | `2000 + e`                      | noise of the BOL measurement `V₀` for `e` |
/// | `3000 + 100·s + e`              | noise of the aged measurement `V₁` for scenario `s` |
/// | `1_000_000 + 2r`, `+ 2r + 1`    | Monte Carlo replicate `r`: `V₀`, `V₁` |
pub mod streams {
    pub fn design(excitation: usize) -> u64 {
        1000 + excitation as u64
    }

    pub fn reference(excitation: usize) -> u64 {
        2000 + excitation as u64
    }

    pub fn aged(scenario: usize, excitation: usize) -> u64 {
        3000 + 100 * scenario as u64 + excitation as u64
    }

    pub fn replicate(replicate: usize) -> (u64, u64) {
        let base = 1_000_000 + 2 * replicate as u64;
        (base, base + 1)
    }
}

/// First output of ChaCha8 seeded with `master` on stream `stream`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Where an excitation profile comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExcitationSource {
    /// Swarm-designed for a criterion.
    Designed { criterion: Criterion },
    /// Constant charge at the design C-rate bound.
    Cc,
    /// Profile CSV, relative to the plan file.
    File { path: PathBuf, label: String },
}

impl ExcitationSource {
    pub fn label(&self) -> String {
        match self {
            ExcitationSource::Designed { criterion } => criterion.label().to_string(),
            ExcitationSource::Cc => "1C-CC".to_string(),
            ExcitationSource::File { label, .. } => label.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSettings {
    pub replicates: usize,
    pub scenario: String,
    pub excitation: String,
    pub mode: EstimationMode,
    /// Fidelity of the synthetic measurements.
    pub plant: Fidelity,
    pub model: ModelKind,
    /// Uncertainty on the BOL measurements; the plan's uncertainty when absent.
    pub bol_uncertainty: Option<UncertaintySpec>,
    /// Uncertainty on the aged measurements; the plan's uncertainty when absent.
    pub aged_uncertainty: Option<UncertaintySpec>,
}

impl Default for MonteCarloSettings {
    fn default() -> Self {
        Self {
            replicates: 200,
            scenario: "20%".into(),
            excitation: "D-opt".into(),
            mode: EstimationMode::Reference,
            plant: Fidelity::Ocp,
            model: ModelKind::Ocp,
            bol_uncertainty: None,
            aged_uncertainty: None,
        }
    }
}

/// A full study, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    /// Parameter file relative to the plan; the bundled set when absent.
    pub params: Option<PathBuf>,
    /// Output directory relative to the plan; falls back to
    /// `$REFVOLT_OUTPUT_DIR`, then `refvolt-output`.
    pub output_dir: Option<PathBuf>,
    pub master_seed: u64,
    pub soc0: f64,
    pub sample_period: f64,
    pub scenarios: Vec<DegradationScenario>,
    pub excitations: Vec<ExcitationSource>,
    pub modes: Vec<EstimationMode>,
    pub plant: Fidelity,
    pub estimation_model: ModelKind,
    pub uncertainty: UncertaintySpec,
    pub design: DesignOverrides,
    pub pso: PsoConfig,
    pub estimation: LmOptions,
    pub monte_carlo: MonteCarloSettings,
    /// Worker threads for plan cells; 0 uses all cores.
    pub threads: usize,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Design settings shared by every designed excitation in a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignOverrides {
    pub horizon: f64,
    pub intervals: usize,
    pub c_rate_bound: f64,
    pub soc_bounds: (f64, f64),
    /// The parameter set's window when absent.
    pub voltage_window: Option<(f64, f64)>,
}

impl Default for DesignOverrides {
    fn default() -> Self {
        let d = DesignSpec::default();
        Self {
            horizon: d.horizon,
            intervals: d.intervals,
            c_rate_bound: d.c_rate_bound,
            soc_bounds: d.soc_bounds,
            voltage_window: None,
        }
    }
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            params: None,
            output_dir: None,
            master_seed: 0,
            soc0: 0.0,
            sample_period: 1.0,
            scenarios: DegradationScenario::standard_levels(),
            excitations: vec![
                ExcitationSource::Designed { criterion: Criterion::D },
                ExcitationSource::Designed { criterion: Criterion::E },
                ExcitationSource::Designed { criterion: Criterion::A },
                ExcitationSource::Cc,
            ],
            modes: vec![EstimationMode::Reference, EstimationMode::Conventional],
            plant: Fidelity::default(),
            estimation_model: ModelKind::Spme,
            uncertainty: UncertaintySpec {
                model_bias: 0.010,
                noise_sigma: 0.001,
                ..UncertaintySpec::none()
            },
            design: DesignOverrides::default(),
            pso: PsoConfig::default(),
            estimation: LmOptions::default(),
            monte_carlo: MonteCarloSettings::default(),
            threads: 0,
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentPlan {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan: Self = toml::from_str(&text).map_err(|e| Error::parse(path, e.message()))?;
        plan.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.excitations.is_empty() || self.modes.is_empty() {
            return Err(Error::InvalidInput(
                "plan needs at least one scenario, one excitation and one mode".into(),
            ));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        let mut labels: Vec<String> = self.excitations.iter().map(ExcitationSource::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("excitation labels must be unique".into()));
        }
        let mut scen: Vec<&str> = self.scenarios.iter().map(|s| s.label.as_str()).collect();
        scen.sort();
        if scen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("scenario labels must be unique".into()));
        }
        self.uncertainty.validate()?;
        self.pso.validate()?;
        Ok(())
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        if relative.is_absolute() {
            relative.to_path_buf()
        } else {
            self.base_dir.join(relative)
        }
    }

    pub fn load_params(&self) -> Result<ParameterSet> {
        match &self.params {
            Some(p) => load_parameter_set(self.resolve(p)),
            None => Ok(ParameterSet::bundled_default()),
        }
    }

    /// Explicit directory, then the environment variable, then `refvolt-output`.
    pub fn output_dir(&self) -> PathBuf {
        match &self.output_dir {
            Some(d) => self.resolve(d),
            None => std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("refvolt-output")),
        }
    }

    pub fn design_spec(&self, params: &ParameterSet, criterion: Criterion) -> DesignSpec {
        DesignSpec {
            horizon: self.design.horizon,
            intervals: self.design.intervals,
            c_rate_bound: self.design.c_rate_bound,
            soc0: self.soc0,
            soc_bounds: self.design.soc_bounds,
            voltage_window: self.design.voltage_window.unwrap_or(params.voltage_window),
            criterion,
            sample_period: self.sample_period,
        }
    }

    pub fn excitation_index(&self, label: &str) -> Result<usize> {
        self.excitations
            .iter()
            .position(|e| e.label() == label)
            .ok_or_else(|| Error::InvalidInput(format!("no excitation labelled `{label}` in plan")))
    }

    pub fn scenario_index(&self, label: &str) -> Result<usize> {
        self.scenarios
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::InvalidInput(format!("no scenario labelled `{label}` in plan")))
    }

    /// Builds excitation `index`; designed profiles also return the design run.
    pub fn build_excitation(
        &self,
        index: usize,
        params: &ParameterSet,
    ) -> Result<(ExcitationProfile, Option<DesignResult>)> {
        let source = self
            .excitations
            .get(index)
            .ok_or_else(|| Error::InvalidInput(format!("excitation index {index} out of range")))?;
        match source {
            ExcitationSource::Designed { criterion } => {
                let spec = self.design_spec(params, *criterion);
                let pso = PsoConfig {
                    seed: derive_seed(self.master_seed, streams::design(index)),
                    ..self.pso.clone()
                };
                let result = design_excitation(&spec, &pso, params)?;
                Ok((result.profile.clone(), Some(result)))
            }
            ExcitationSource::Cc => Ok((cc_baseline(&self.design_spec(params, Criterion::D), params)?, None)),
            ExcitationSource::File { path, .. } => {
                Ok((ExcitationProfile::read_csv(self.resolve(path), self.sample_period)?, None))
            }
        }
    }
}
