//! Cell simulation at three fidelities and uncertainty injection.
//!
//! * [`simulate_ocp_model`]: equilibrium voltage from Coulomb counting.
//! * [`simulate_spme`]: reduced SPMe, the estimation model.
//! * [`simulate_plant`]: SPMe with shell-resolved solid diffusion plus injected
//!   model and measurement uncertainty; stands in for a measured cell.

mod integrate;
mod ocp_model;
mod profile;
mod spme;
mod state;
mod trajectory;
mod uncertainty;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::ParameterSet;

pub(crate) use ocp_model::ocp_response;
pub use ocp_model::simulate_ocp_model;
pub use profile::ExcitationProfile;
pub use spme::{run_electrochemical, simulate_spme, SimOptions, SimulationRun, SolidModel, PLANT_SHELLS};
pub use state::{CellState, SolidState};
pub use trajectory::{diff_trajectories, Provenance, VoltageComponents, VoltageTrajectory};
pub use uncertainty::UncertaintySpec;

/// Plant output with uncertainty applied:
/// `V_m = V_plant + model_bias + lag(I) + meas_bias + noise`.
pub fn simulate_plant(
    params: &ParameterSet,
    profile: &ExcitationProfile,
    state0: &CellState,
    unc: &UncertaintySpec,
) -> Result<VoltageTrajectory> {
    measure(params, profile, state0, Fidelity::Plant { shells: PLANT_SHELLS }, unc)
}

/// Model used to generate synthetic measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Fidelity {
    /// Equilibrium OCP model.
    Ocp,
    /// Reduced SPMe (identical to the estimation model).
    Spme,
    /// Shell-resolved SPMe.
    Plant { shells: usize },
}

impl Default for Fidelity {
    fn default() -> Self {
        Fidelity::Plant { shells: PLANT_SHELLS }
    }
}

/// Clean model output at the given fidelity with `unc` applied on top.
pub fn measure(
    params: &ParameterSet,
    profile: &ExcitationProfile,
    state0: &CellState,
    fidelity: Fidelity,
    unc: &UncertaintySpec,
) -> Result<VoltageTrajectory> {
    let clean = match fidelity {
        Fidelity::Ocp => simulate_ocp_model(params, profile, state0.soc)?,
        Fidelity::Spme => simulate_spme(params, profile, state0)?,
        Fidelity::Plant { shells } => {
            run_electrochemical(
                params,
                profile,
                state0,
                SolidModel::FiniteVolume { shells },
                SimOptions::default(),
            )?
            .trajectory
        }
    };
    unc.apply(&clean)
}
