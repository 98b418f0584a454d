//! Simulates a 1C charge from empty with the OCP model, the reduced SPMe and
//! the shell-resolved plant, and shows the voltage breakdown.
//!
//! ```text
//! cargo run --release --example simulate_cell
//! ```

use refvolt::params::ParameterSet;
use refvolt::sim::{
    run_electrochemical, simulate_ocp_model, simulate_plant, simulate_spme, CellState, ExcitationProfile,
    SimOptions, SolidModel, UncertaintySpec, PLANT_SHELLS,
};

fn main() -> refvolt::Result<()> {
    let params = ParameterSet::bundled_default();
    let one_c = params.c_rate_current(1.0);
    let profile = ExcitationProfile::constant(-one_c, 600.0, 10, 1.0)?;
    let state = CellState::equilibrium(&params, 0.0)?;

    let ocp = simulate_ocp_model(&params, &profile, 0.0)?;
    let spme = run_electrochemical(&params, &profile, &state, SolidModel::Polynomial, SimOptions::default())?;
    let plant = run_electrochemical(
        &params,
        &profile,
        &state,
        SolidModel::FiniteVolume { shells: PLANT_SHELLS },
        SimOptions::default(),
    )?;

    println!("{:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}", "t [s]", "OCP", "SPMe", "plant", "eta", "phi_e", "IR");
    let parts = spme.trajectory.components.as_ref().expect("SPMe reports components");
    for k in (59..600).step_by(60) {
        println!(
            "{:>6} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>9.5}",
            ocp.times[k],
            ocp.voltage[k],
            spme.trajectory.voltage[k],
            plant.trajectory.voltage[k],
            parts[k].eta,
            parts[k].phie,
            parts[k].ir
        );
    }
    let gap = spme
        .trajectory
        .voltage
        .iter()
        .zip(&plant.trajectory.voltage)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("largest SPMe/plant gap: {:.3} mV", gap * 1e3);
    println!("final SOC: SPMe {:.6}, plant {:.6}", spme.final_state.soc, plant.final_state.soc);

    // The same plant with 10 mV model bias and 1 mV measurement noise.
    let unc = UncertaintySpec {
        model_bias: 0.010,
        noise_sigma: 0.001,
        seed: 7,
        ..UncertaintySpec::none()
    };
    let measured = simulate_plant(&params, &profile, &state, &unc)?;
    println!("measured at 600 s: {:.5} V", measured.voltage[599]);
    let _ = simulate_spme(&params, &profile, &state)?;
    Ok(())
}
