//! Designs D-, E- and A-optimal excitations with the default swarm and
//! compares each against the 1C constant-current baseline.
//!
//! ```text
//! cargo run --release --example design_excitation
//! ```

use refvolt::design::{cc_baseline, design_excitation, scaled_objective, DesignSpec, PsoConfig};
use refvolt::fisher::Criterion;
use refvolt::params::ParameterSet;

fn main() -> refvolt::Result<()> {
    let params = ParameterSet::bundled_default();
    let pso = PsoConfig::default();
    for criterion in [Criterion::D, Criterion::E, Criterion::A] {
        let spec = DesignSpec::for_params(&params, criterion);
        let start = std::time::Instant::now();
        let result = design_excitation(&spec, &pso, &params)?;
        let baseline = cc_baseline(&spec, &params)?;
        let base = scaled_objective(&params, &baseline, spec.soc0, criterion)?;
        println!(
            "{}: objective {:.6e} (1C CC {:.6e}), {} evaluations in {:.1?}",
            criterion.label(),
            result.objective,
            base,
            result.evaluations,
            start.elapsed()
        );
        let currents: Vec<String> = result.profile.currents().iter().map(|i| format!("{i:+.2}")).collect();
        println!("  currents [A]: {}", currents.join(" "));
        println!(
            "  SOC range [{:.3}, {:.3}], SPMe check: {}",
            result.report.min_soc,
            result.report.max_soc,
            result
                .spme_check
                .message
                .as_deref()
                .unwrap_or("voltage window respected")
        );
    }
    Ok(())
}
