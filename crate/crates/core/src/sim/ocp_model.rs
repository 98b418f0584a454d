//! Equilibrium (OCP-only) cell model driven by Coulomb counting.
//!
//! Each electrode's SOC is `SOC₀ − q(t)/Q_i` with `q(t) = ∫₀ᵗ I dτ` and
//! `Q_i = F·A_i·δ_i·c_s,max,i·ε_s,i·|β_100%,i − β_0%,i|`; the surface
//! stoichiometry is `β_0% + (β_100% − β_0%)·SOC_i` and the terminal voltage is
//! `U_p − U_n`. The cell SOC reported is the negative electrode's.

use crate::error::{Error, Result};
use crate::params::{Electrode, ParameterSet};
use crate::sim::{ExcitationProfile, Provenance, VoltageTrajectory};

/// Per-sample quantities of the OCP model, shared with the sensitivity and
/// design code.
#[derive(Debug, Clone)]
pub(crate) struct OcpResponse {
    pub times: Vec<f64>,
    pub current: Vec<f64>,
    pub charge: Vec<f64>,
    /// Cell (negative-electrode) SOC.
    pub soc: Vec<f64>,
    pub soc_pos: Vec<f64>,
    pub voltage: Vec<f64>,
    pub slope_pos: Vec<f64>,
    pub slope_neg: Vec<f64>,
}

/// Evaluates the OCP model at every sample without SOC bound checks. Fails
/// only when a stoichiometry leaves the OCP table.
pub(crate) fn ocp_response(
    params: &ParameterSet,
    profile: &ExcitationProfile,
    soc0: f64,
) -> Result<OcpResponse> {
    let q_pos = params.positive.capacity(params.faraday);
    let q_neg = params.negative.capacity(params.faraday);
    let times = profile.sample_times();
    let charge = profile.charge_at_samples();
    let n = times.len();
    let mut out = OcpResponse {
        current: (1..=n).map(|k| profile.current_for_sample(k)).collect(),
        times,
        soc: Vec::with_capacity(n),
        soc_pos: Vec::with_capacity(n),
        voltage: Vec::with_capacity(n),
        slope_pos: Vec::with_capacity(n),
        slope_neg: Vec::with_capacity(n),
        charge,
    };
    for k in 0..n {
        let q = out.charge[k];
        let soc_n = soc0 - q / q_neg;
        let soc_p = soc0 - q / q_pos;
        let x_p = params.positive.stoichiometry_at(soc_p);
        let x_n = params.negative.stoichiometry_at(soc_n);
        let wrap = |e: Error, electrode: Electrode| match e {
            Error::OcpDomain { x, .. } => Error::SimulationDomain {
                time_s: out.times[k],
                reason: format!("{} stoichiometry {x} outside OCP table", electrode.key()),
            },
            other => other,
        };
        let (u_p, du_p) = params
            .ocp_positive
            .eval(x_p)
            .map_err(|e| wrap(e, Electrode::Positive))?;
        let (u_n, du_n) = params
            .ocp_negative
            .eval(x_n)
            .map_err(|e| wrap(e, Electrode::Negative))?;
        out.soc.push(soc_n);
        out.soc_pos.push(soc_p);
        out.voltage.push(u_p - u_n);
        out.slope_pos.push(du_p);
        out.slope_neg.push(du_n);
    }
    Ok(out)
}

/// Terminal voltage of the OCP model, `V = U_p(c_se,p) − U_n(c_se,n)`.
pub fn simulate_ocp_model(
    params: &ParameterSet,
    profile: &ExcitationProfile,
    soc0: f64,
) -> Result<VoltageTrajectory> {
    if !(0.0..=1.0).contains(&soc0) {
        return Err(Error::InvalidInput(format!("soc0 {soc0} outside [0, 1]")));
    }
    let q_neg = params.negative.capacity(params.faraday);
    let charge = profile.charge_at_samples();
    if let Some(k) = charge.iter().position(|q| !(0.0..=1.0).contains(&(soc0 - q / q_neg))) {
        return Err(Error::SimulationDomain {
            time_s: profile.sample_times()[k],
            reason: format!("SOC {} outside [0, 1]", soc0 - charge[k] / q_neg),
        });
    }
    let r = ocp_response(params, profile, soc0)?;
    Ok(VoltageTrajectory {
        times: r.times,
        current: r.current,
        voltage: r.voltage,
        provenance: Provenance::ModelPredicted,
        components: None,
    })
}
