//! Compares the information content of a constant-current charge with a
//! pulsed profile: analytic OCP sensitivities, the Fisher matrix scaled to
//! relative parameter units, and the D/E/A optimality metrics.
//!
//! ```text
//! cargo run --release --example sensitivities_fisher
//! ```

use refvolt::fisher::{fisher, optimality_metric, sensitivities_ocp, Criterion};
use refvolt::params::ParameterSet;
use refvolt::sim::ExcitationProfile;

fn main() -> refvolt::Result<()> {
    let p = ParameterSet::bundled_default();
    let one_c = p.c_rate_current(1.0);
    let theta = p.health().to_array();

    let profiles = [
        ("1C CC charge", ExcitationProfile::constant(-one_c, 600.0, 10, 1.0)?),
        (
            "pulsed",
            ExcitationProfile::new(60.0, [-1.0, -1.0, 0.5, -1.0, -1.0, 0.0, -1.0, -1.0, 1.0, -1.0].map(|r| r * one_c).to_vec(), 1.0)?,
        ),
    ];
    for (name, profile) in &profiles {
        let sens = sensitivities_ocp(&p, profile, 0.0)?;
        let sums = sens.column_sums();
        println!("{name}: {} samples", sens.len());
        println!("  sum dV/dtheta: {:>10.4} {:>10.4} {:>10.4} {:>10.4}", sums[0], sums[1], sums[2], sums[3]);

        let f = fisher(&sens)?.scaled(&theta);
        let eig = f.eigenvalues();
        println!("  eigenvalues:   {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e}", eig[0], eig[1], eig[2], eig[3]);
        println!("  condition number {:.3e}", f.condition_number());
        for c in [Criterion::D, Criterion::E, Criterion::A] {
            println!("  {:<6} {:.4e}", c.label(), optimality_metric(&f, c)?);
        }
    }
    Ok(())
}
