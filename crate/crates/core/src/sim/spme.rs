//! Single particle model with electrolyte dynamics at two solid-phase fidelities.
//!
//! Terminal voltage
//!
//! ```text
//! V = (U_p − U_n) + (η_p − η_n) + (φ_e,p − φ_e,n) − I·R_l
//! ```
//!
//! * Solid diffusion: either the three-parameter polynomial profile
//!   (volume average `c̄`, averaged gradient `q̄`, surface reconstruction
//!   `c_se = c̄ + 8R/35·q̄ − R·j/(35·D)`), or a radial finite-volume
//!   discretization with equal-width shells.
//! * Overpotential: symmetric Butler-Volmer, `η = 2RT/F · asinh(i / 2i₀)` with
//!   `i₀ = k·√(c_e·c_se·(c_s,max − c_se))`.
//! * Electrolyte: one concentration node per electrode region, exchanging
//!   lithium by diffusion across the separator. `φ_e` combines the
//!   concentration term `2RT/F·(1 − t⁺)·ln(c_e,p/c_e,n)` with the ohmic drop
//!   through the electrolyte.
//!
//! Every state derivative is linear in the state for a fixed current, and the
//! input is constant between samples, so fixed-step RK4 integrates each sample
//! interval with a step count chosen from the fastest mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Electrode, ElectrodeParams, ParameterSet};
use crate::sim::integrate::Rk4;
use crate::sim::state::shell_average;
use crate::sim::{CellState, ExcitationProfile, Provenance, SolidState, VoltageComponents, VoltageTrajectory};

/// Radial shells used by the plant.
pub const PLANT_SHELLS: usize = 20;

// Largest |λ·h| allowed per RK4 step.
const STABILITY_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SolidModel {
    Polynomial,
    FiniteVolume { shells: usize },
}

impl SolidModel {
    fn shells(self) -> Option<usize> {
        match self {
            SolidModel::Polynomial => None,
            SolidModel::FiniteVolume { shells } => Some(shells),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// RK4 steps per sample period; `None` picks the smallest stable count.
    pub substeps: Option<usize>,
    /// Fail when the terminal voltage leaves the parameter set's window.
    pub enforce_voltage_window: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            substeps: None,
            enforce_voltage_window: true,
        }
    }
}

/// Output of an electrochemical run.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub trajectory: VoltageTrajectory,
    /// Cell SOC at each sample, from the negative electrode's average concentration.
    pub soc: Vec<f64>,
    pub final_state: CellState,
}

struct ElectrodeModel<'a> {
    electrode: Electrode,
    params: &'a ElectrodeParams,
    ocp: &'a crate::params::OcpCurve,
    // Molar pore-wall flux per ampere of cell current (mol/m²/s/A), signed so
    // that positive flux leaves the particle.
    flux_per_amp: f64,
    shells: Option<ShellGeometry>,
}

struct ShellGeometry {
    dr: f64,
    // Face areas at the inner/outer boundary of each shell divided by
    // shell volume, times D/Δr.
    inner: Vec<f64>,
    outer: Vec<f64>,
    // Outer surface area over outer shell volume.
    surface: f64,
}

impl ShellGeometry {
    fn new(radius: f64, diffusivity: f64, n: usize) -> Self {
        let dr = radius / n as f64;
        let mut inner = Vec::with_capacity(n);
        let mut outer = Vec::with_capacity(n);
        let mut surface = 0.0;
        for i in 0..n {
            let r0 = i as f64 * dr;
            let r1 = (i + 1) as f64 * dr;
            let vol = (r1.powi(3) - r0.powi(3)) / 3.0;
            inner.push(diffusivity * r0 * r0 / (dr * vol));
            outer.push(if i + 1 < n { diffusivity * r1 * r1 / (dr * vol) } else { 0.0 });
            if i + 1 == n {
                surface = r1 * r1 / vol;
            }
        }
        Self {
            dr,
            inner,
            outer,
            surface,
        }
    }

    fn fastest_rate(&self) -> f64 {
        // Gershgorin bound on the spectral radius of the diffusion operator.
        self.inner
            .iter()
            .zip(&self.outer)
            .map(|(a, b)| 2.0 * (a + b))
            .fold(0.0, f64::max)
    }
}

impl<'a> ElectrodeModel<'a> {
    fn new(cell: &'a ParameterSet, electrode: Electrode, solid: SolidModel) -> Self {
        let params = cell.electrode(electrode);
        let sign = match electrode {
            Electrode::Negative => 1.0,
            Electrode::Positive => -1.0,
        };
        let surface_area = params.specific_area() * params.area * params.thickness;
        Self {
            electrode,
            params,
            ocp: cell.ocp(electrode),
            flux_per_amp: sign / (cell.faraday * surface_area),
            shells: solid
                .shells()
                .map(|n| ShellGeometry::new(params.particle_radius, params.diffusivity, n)),
        }
    }

    fn len(&self) -> usize {
        self.shells.as_ref().map_or(2, |s| s.inner.len())
    }

    fn fastest_rate(&self) -> f64 {
        match &self.shells {
            Some(g) => g.fastest_rate(),
            None => 30.0 * self.params.diffusivity / self.params.particle_radius.powi(2),
        }
    }

    fn derivative(&self, y: &[f64], flux: f64, dy: &mut [f64]) {
        let r = self.params.particle_radius;
        match &self.shells {
            None => {
                dy[0] = -3.0 * flux / r;
                dy[1] = -30.0 * self.params.diffusivity / (r * r) * y[1] - 45.0 / (2.0 * r * r) * flux;
            }
            Some(g) => {
                let n = y.len();
                for i in 0..n {
                    let mut d = 0.0;
                    if i > 0 {
                        d -= g.inner[i] * (y[i] - y[i - 1]);
                    }
                    if i + 1 < n {
                        d += g.outer[i] * (y[i + 1] - y[i]);
                    }
                    dy[i] = d;
                }
                dy[n - 1] -= g.surface * flux;
            }
        }
    }

    fn average(&self, y: &[f64]) -> f64 {
        match self.shells {
            None => y[0],
            Some(_) => shell_average(y),
        }
    }

    fn surface(&self, y: &[f64], flux: f64) -> f64 {
        let r = self.params.particle_radius;
        match &self.shells {
            None => y[0] + 8.0 * r / 35.0 * y[1] - r * flux / (35.0 * self.params.diffusivity),
            Some(g) => y[y.len() - 1] - flux * 0.5 * g.dr / self.params.diffusivity,
        }
    }

    fn to_state(&self, y: &[f64]) -> SolidState {
        match self.shells {
            None => SolidState::Polynomial {
                average: y[0],
                flux: y[1],
            },
            Some(_) => SolidState::Shells(y.to_vec()),
        }
    }
}

struct ElectrolyteModel {
    // Rates (1/s) of the two-node exchange, and source term per ampere (mol/m³/s/A).
    rate_neg: f64,
    rate_pos: f64,
    source_neg: f64,
    source_pos: f64,
    resistance: f64,
    conc_coefficient: f64,
}

impl ElectrolyteModel {
    fn new(p: &ParameterSet) -> Self {
        let e = &p.electrolyte;
        let (l_n, l_s, l_p) = (p.negative.thickness, e.separator_thickness, p.positive.thickness);
        let area = p.negative.area;
        let brug = |eps: f64| eps.powf(e.bruggeman);
        let l_exchange = 0.5 * l_n + l_s + 0.5 * l_p;
        let d_eff = e.diffusivity * brug(e.porosity_separator);
        let conductance = d_eff / l_exchange;
        let source = (1.0 - e.transference_number) / (p.faraday * area);
        let kappa = |eps: f64| e.conductivity * brug(eps);
        Self {
            rate_neg: conductance / (e.porosity_negative * l_n),
            rate_pos: conductance / (e.porosity_positive * l_p),
            source_neg: source / (e.porosity_negative * l_n),
            source_pos: -source / (e.porosity_positive * l_p),
            resistance: (l_n / (3.0 * kappa(e.porosity_negative))
                + l_s / kappa(e.porosity_separator)
                + l_p / (3.0 * kappa(e.porosity_positive)))
                / area,
            conc_coefficient: 2.0 * p.thermal_voltage() * (1.0 - e.transference_number),
        }
    }

    // y = [c_e,p, c_e,n]
    fn derivative(&self, y: &[f64], current: f64, dy: &mut [f64]) {
        let exchange = y[1] - y[0];
        dy[0] = self.source_pos * current + self.rate_pos * exchange;
        dy[1] = self.source_neg * current - self.rate_neg * exchange;
    }

    fn potential(&self, y: &[f64], current: f64) -> f64 {
        self.conc_coefficient * (y[0] / y[1]).ln() - current * self.resistance
    }
}

struct CellModel<'a> {
    params: &'a ParameterSet,
    pos: ElectrodeModel<'a>,
    neg: ElectrodeModel<'a>,
    electrolyte: ElectrolyteModel,
}

impl<'a> CellModel<'a> {
    fn new(params: &'a ParameterSet, solid: SolidModel) -> Self {
        Self {
            params,
            pos: ElectrodeModel::new(params, Electrode::Positive, solid),
            neg: ElectrodeModel::new(params, Electrode::Negative, solid),
            electrolyte: ElectrolyteModel::new(params),
        }
    }

    fn split<'y>(&self, y: &'y [f64]) -> (&'y [f64], &'y [f64], &'y [f64]) {
        let (p, rest) = y.split_at(self.pos.len());
        let (n, e) = rest.split_at(self.neg.len());
        (p, n, e)
    }

    fn derivative(&self, y: &[f64], current: f64, dy: &mut [f64]) {
        let (yp, yn, ye) = self.split(y);
        let (dp, rest) = dy.split_at_mut(self.pos.len());
        let (dn, de) = rest.split_at_mut(self.neg.len());
        self.pos.derivative(yp, self.pos.flux_per_amp * current, dp);
        self.neg.derivative(yn, self.neg.flux_per_amp * current, dn);
        self.electrolyte.derivative(ye, current, de);
    }

    fn fastest_rate(&self) -> f64 {
        let e = self.electrolyte.rate_neg + self.electrolyte.rate_pos;
        self.pos.fastest_rate().max(self.neg.fastest_rate()).max(e)
    }

    fn voltage(&self, y: &[f64], current: f64, time: f64) -> Result<VoltageComponents> {
        let (yp, yn, ye) = self.split(y);
        let ocp_and_eta = |m: &ElectrodeModel, ys: &[f64], c_e: f64| -> Result<(f64, f64)> {
            let flux = m.flux_per_amp * current;
            let c_max = m.params.max_concentration;
            let c_se = m.surface(ys, flux);
            if !(c_se > 0.0 && c_se < c_max) {
                return Err(Error::SimulationDomain {
                    time_s: time,
                    reason: format!(
                        "{} surface concentration {c_se} outside (0, c_s_max)",
                        m.electrode.key()
                    ),
                });
            }
            let x = c_se / c_max;
            let (u, _) = m.ocp.eval(x).map_err(|_| Error::SimulationDomain {
                time_s: time,
                reason: format!("{} stoichiometry {x} outside OCP table", m.electrode.key()),
            })?;
            let i0 = m.params.reaction_rate * (c_e * c_se * (c_max - c_se)).sqrt();
            let i = self.params.faraday * flux;
            let eta = 2.0 * self.params.thermal_voltage() * (i / (2.0 * i0)).asinh();
            Ok((u, eta))
        };
        let (u_p, eta_p) = ocp_and_eta(&self.pos, yp, ye[0])?;
        let (u_n, eta_n) = ocp_and_eta(&self.neg, yn, ye[1])?;
        Ok(VoltageComponents {
            ocp: u_p - u_n,
            eta: eta_p - eta_n,
            phie: self.electrolyte.potential(ye, current),
            ir: -current * self.params.lumped_resistance,
        })
    }

    fn check_state(&self, y: &[f64], time: f64) -> Result<()> {
        let (yp, yn, ye) = self.split(y);
        for (m, ys) in [(&self.pos, yp), (&self.neg, yn)] {
            let c_max = m.params.max_concentration;
            let values: &[f64] = if m.shells.is_some() { ys } else { &ys[..1] };
            if values.iter().any(|c| !(0.0..=c_max).contains(c)) {
                return Err(Error::SimulationDomain {
                    time_s: time,
                    reason: format!(
                        "{} solid concentration left [0, c_s_max]; integrator step may be too large",
                        m.electrode.key()
                    ),
                });
            }
        }
        if !ye.iter().all(|c| c.is_finite() && *c > 0.0) {
            return Err(Error::SimulationDomain {
                time_s: time,
                reason: "electrolyte concentration non-positive".into(),
            });
        }
        Ok(())
    }
}

/// Runs the electrochemical model and returns the trajectory, per-sample SOC
/// and the final state.
pub fn run_electrochemical(
    params: &ParameterSet,
    profile: &ExcitationProfile,
    state0: &CellState,
    solid: SolidModel,
    options: SimOptions,
) -> Result<SimulationRun> {
    if let SolidModel::FiniteVolume { shells } = solid {
        if shells < 2 {
            return Err(Error::InvalidInput("finite-volume plant needs at least 2 shells".into()));
        }
    }
    state0.validate(params)?;
    let model = CellModel::new(params, solid);
    let mut y = state0.solid_as(Electrode::Positive, solid.shells())?;
    y.extend(state0.solid_as(Electrode::Negative, solid.shells())?);
    y.push(state0.electrolyte_positive);
    y.push(state0.electrolyte_negative);

    let dt = profile.sample_period();
    let substeps = match options.substeps {
        Some(0) => return Err(Error::InvalidInput("substeps must be at least 1".into())),
        Some(n) => n,
        None => ((dt * model.fastest_rate() / STABILITY_LIMIT).ceil() as usize).max(1),
    };
    let h = dt / substeps as f64;
    let (v_min, v_max) = params.voltage_window;
    let neg = &params.negative;
    let soc_of = |y: &[f64]| {
        let x = model.neg.average(&y[model.pos.len()..model.pos.len() + model.neg.len()]) / neg.max_concentration;
        (x - neg.stoich_at_0) / (neg.stoich_at_100 - neg.stoich_at_0)
    };

    let n = profile.sample_count();
    let mut rk4 = Rk4::new(y.len());
    let mut trajectory = VoltageTrajectory {
        times: Vec::with_capacity(n),
        current: Vec::with_capacity(n),
        voltage: Vec::with_capacity(n),
        provenance: Provenance::ModelPredicted,
        components: Some(Vec::with_capacity(n)),
    };
    let mut soc = Vec::with_capacity(n);
    for k in 1..=n {
        let current = profile.current_for_sample(k);
        let t = k as f64 * dt;
        for _ in 0..substeps {
            rk4.step(&mut y, h, |ys, dys| model.derivative(ys, current, dys));
        }
        model.check_state(&y, t)?;
        let parts = model.voltage(&y, current, t)?;
        let v = parts.total();
        if options.enforce_voltage_window && !(v_min..=v_max).contains(&v) {
            return Err(Error::SimulationDomain {
                time_s: t,
                reason: format!("voltage {v:.4} V outside safety window [{v_min}, {v_max}] V"),
            });
        }
        trajectory.times.push(t);
        trajectory.current.push(current);
        trajectory.voltage.push(v);
        if let Some(c) = trajectory.components.as_mut() {
            c.push(parts);
        }
        soc.push(soc_of(&y));
    }

    let (yp, yn, ye) = model.split(&y);
    let final_state = CellState {
        soc: soc.last().copied().unwrap_or(state0.soc),
        positive: model.pos.to_state(yp),
        negative: model.neg.to_state(yn),
        electrolyte_positive: ye[0],
        electrolyte_negative: ye[1],
    };
    Ok(SimulationRun {
        trajectory,
        soc,
        final_state,
    })
}

/// Reduced-order SPMe used as the estimation model.
pub fn simulate_spme(
    params: &ParameterSet,
    profile: &ExcitationProfile,
    state0: &CellState,
) -> Result<VoltageTrajectory> {
    run_electrochemical(params, profile, state0, SolidModel::Polynomial, SimOptions::default())
        .map(|r| r.trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_surface_offset_matches_steady_parabola() {
        // After many diffusion times at constant flux, c_se − c̄ → −R·j/(5D).
        let p = ParameterSet::bundled_default();
        let m = ElectrodeModel::new(&p, Electrode::Negative, SolidModel::Polynomial);
        let flux = 1e-6;
        let r = p.negative.particle_radius;
        let d = p.negative.diffusivity;
        let q_ss = -45.0 / (2.0 * r * r) * flux / (30.0 * d / (r * r));
        let c_se = m.surface(&[1000.0, q_ss], flux);
        assert!((c_se - 1000.0 + r * flux / (5.0 * d)).abs() < 1e-9);
    }

    #[test]
    fn shells_conserve_mass() {
        let g = ShellGeometry::new(1.0, 1.0, 10);
        let p = ParameterSet::bundled_default();
        let mut m = ElectrodeModel::new(&p, Electrode::Negative, SolidModel::FiniteVolume { shells: 10 });
        m.shells = Some(g);
        let y: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let mut dy = vec![0.0; 10];
        m.derivative(&y, 0.0, &mut dy);
        // Zero surface flux: volume-weighted sum of derivatives vanishes.
        assert!(shell_average(&dy).abs() < 1e-12);
    }

    #[test]
    fn auto_substeps_keep_plant_stable() {
        let p = ParameterSet::bundled_default();
        let model = CellModel::new(&p, SolidModel::FiniteVolume { shells: PLANT_SHELLS });
        let n = (model.fastest_rate() / STABILITY_LIMIT).ceil();
        assert!(n >= 1.0 && n < 10.0);
    }
}
