//! Estimates the health vector of degraded cells from synthetic plant data,
//! once with the conventional least-squares fit and once against the
//! beginning-of-life reference trajectory.
//!
//! ```text
//! cargo run --release --example estimate_health
//! ```

use refvolt::design::{design_excitation, DesignSpec, PsoConfig};
use refvolt::estimation::{estimate, EstimationProblem};
use refvolt::fisher::Criterion;
use refvolt::params::{apply_degradation, DegradationScenario, ParameterSet};
use refvolt::sim::{simulate_plant, CellState, UncertaintySpec};

fn main() -> refvolt::Result<()> {
    let bol = ParameterSet::bundled_default();
    let spec = DesignSpec::for_params(&bol, Criterion::D);
    let profile = design_excitation(&spec, &PsoConfig::default(), &bol)?.profile;

    // 10 mV model bias and 1 mV noise on every measurement.
    let unc = UncertaintySpec {
        model_bias: 0.010,
        noise_sigma: 0.001,
        ..UncertaintySpec::none()
    };
    let v0 = simulate_plant(&bol, &profile, &CellState::equilibrium(&bol, spec.soc0)?, &unc.clone().with_seed(1))?;

    println!("{:<6} {:<13} {:>9} {:>9} {:>9} {:>9}", "level", "mode", "eps_p %", "eps_n %", "beta_p %", "beta_n %");
    for (i, scenario) in DegradationScenario::standard_levels().iter().enumerate() {
        let aged = apply_degradation(&bol, scenario)?;
        let truth = aged.health();
        let state = CellState::equilibrium(&aged, spec.soc0)?;
        let v1 = simulate_plant(&aged, &profile, &state, &unc.clone().with_seed(10 + i as u64))?;

        let problems = [
            EstimationProblem::conventional(&bol, &profile, spec.soc0, v1.clone())?,
            EstimationProblem::reference(&bol, &profile, spec.soc0, v1, v0.clone())?,
        ];
        for problem in &problems {
            let start = std::time::Instant::now();
            let result = estimate(problem)?.with_truth(&truth);
            let e = result.errors_pct.expect("truth supplied");
            println!(
                "{:<6} {:<13} {:>9.3} {:>9.3} {:>9.3} {:>9.3}   ({} iterations, {:.1?})",
                scenario.label,
                problem.mode().label(),
                e[0],
                e[1],
                e[2],
                e[3],
                result.iterations,
                start.elapsed()
            );
        }
    }
    Ok(())
}
