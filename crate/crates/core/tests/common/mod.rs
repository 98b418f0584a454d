//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refvolt::fisher::SensitivityTrajectory;
use refvolt::params::{HealthVector, ParameterSet};
use refvolt::sim::{simulate_ocp_model, ExcitationProfile};

/// Ten 60 s segments with currents drawn uniformly from `[lo, hi]` C.
pub fn random_profile(params: &ParameterSet, seed: u64, lo: f64, hi: f64) -> ExcitationProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one_c = params.c_rate_current(1.0);
    let currents = (0..10).map(|_| rng.random_range(lo..=hi) * one_c).collect();
    ExcitationProfile::new(60.0, currents, 1.0).unwrap()
}

/// Central finite differences of the OCP model in each health parameter,
/// relative step `rel`.
pub fn fd_sensitivities(params: &ParameterSet, profile: &ExcitationProfile, soc0: f64, rel: f64) -> Vec<[f64; 4]> {
    let theta = params.health().to_array();
    let mut cols = Vec::with_capacity(4);
    for i in 0..4 {
        let h = rel * theta[i];
        let shifted = |d: f64| {
            let mut t = theta;
            t[i] += d;
            let p = params.with_health(&HealthVector::from_array(t)).unwrap();
            simulate_ocp_model(&p, profile, soc0).unwrap().voltage
        };
        let (up, down) = (shifted(h), shifted(-h));
        cols.push(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    (0..profile.sample_count()).map(|k| std::array::from_fn(|i| cols[i][k])).collect()
}

/// Per-column relative RMS error `‖a − b‖ / ‖b‖`.
pub fn relative_rms(analytic: &SensitivityTrajectory, reference: &[[f64; 4]]) -> [f64; 4] {
    std::array::from_fn(|i| {
        let num: f64 = analytic.rows.iter().zip(reference).map(|(a, b)| (a[i] - b[i]).powi(2)).sum();
        let den: f64 = reference.iter().map(|b| b[i].powi(2)).sum();
        (num / den).sqrt()
    })
}

/// The seeded default D-optimal design on the bundled parameters.
pub fn d_opt_profile(params: &ParameterSet) -> ExcitationProfile {
    use refvolt::design::{design_excitation, DesignSpec, PsoConfig};
    use refvolt::fisher::Criterion;
    let spec = DesignSpec::for_params(params, Criterion::D);
    design_excitation(&spec, &PsoConfig::default(), params).unwrap().profile
}
