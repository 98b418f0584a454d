//! Checks the linearized error statistics against Monte Carlo on the OCP
//! model: the spread of reference-mode estimates under 1 mV noise, and the
//! mean error left by a 5 mV offset that only the aged measurement carries.
//!
//! ```text
//! cargo run --release --example error_statistics
//! ```

use refvolt::design::{design_excitation, DesignSpec, PsoConfig};
use refvolt::estimation::{EstimationMode, LmOptions, ModelKind};
use refvolt::fisher::Criterion;
use refvolt::harness::{run_monte_carlo, MonteCarloCell};
use refvolt::params::{DegradationScenario, ParameterSet};
use refvolt::sim::{Fidelity, UncertaintySpec};

fn main() -> refvolt::Result<()> {
    let bol = ParameterSet::bundled_default();
    let spec = DesignSpec::for_params(&bol, Criterion::D);
    let profile = design_excitation(&spec, &PsoConfig::default(), &bol)?.profile;
    let base = MonteCarloCell {
        params: bol,
        scenario: DegradationScenario::standard_levels()[1].clone(),
        profile,
        soc0: spec.soc0,
        mode: EstimationMode::Reference,
        plant: Fidelity::Ocp,
        model: ModelKind::Ocp,
        bol_uncertainty: UncertaintySpec::none(),
        aged_uncertainty: UncertaintySpec::none(),
        lm: LmOptions::default(),
        seed: 42,
    };

    let noise = UncertaintySpec {
        noise_sigma: 0.001,
        ..UncertaintySpec::none()
    };
    let noisy = MonteCarloCell {
        bol_uncertainty: noise,
        aged_uncertainty: noise,
        ..base.clone()
    };
    let s = run_monte_carlo(&noisy, 200)?;
    println!("noise 1 mV, {} replicates ({} excluded)", s.replicates, s.excluded);
    println!("{:>8} {:>12} {:>12}", "param", "sample sd", "predicted sd");
    for i in 0..4 {
        println!("{:>8} {:>12.4e} {:>12.4e}", i, s.covariance[i][i].sqrt(), s.prediction.covariance[i][i].sqrt());
    }

    let biased = MonteCarloCell {
        aged_uncertainty: UncertaintySpec {
            meas_bias: 0.005,
            ..UncertaintySpec::none()
        },
        ..base
    };
    let b = run_monte_carlo(&biased, 2)?;
    println!("\naged offset 5 mV, no noise");
    println!("{:>8} {:>12} {:>12}", "param", "mean error", "predicted");
    for i in 0..4 {
        println!("{:>8} {:>12.4e} {:>12.4e}", i, b.mean_error[i], b.prediction.mean[i]);
    }
    Ok(())
}
