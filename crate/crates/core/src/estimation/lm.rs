//! Projected Levenberg–Marquardt in coordinates relative to θ₀.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{residuals, EstimationProblem, EstimationResult};
use crate::error::{Error, Result};
use crate::params::HealthVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative forward-difference step.
    pub fd_step: f64,
    pub initial_damping: f64,
    /// Stop when `‖Δz‖∞ < step_tolerance · max(‖z‖∞, 1)`.
    pub step_tolerance: f64,
    /// Stop when the relative SSR decrease falls below this.
    pub cost_tolerance: f64,
    pub multi_start: Option<MultiStart>,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            fd_step: 1e-6,
            initial_damping: 1e-3,
            step_tolerance: 1e-10,
            cost_tolerance: 1e-14,
            multi_start: None,
        }
    }
}

/// Extra starts drawn uniformly within `±spread` (relative) of the initial guess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiStart {
    pub starts: usize,
    pub spread: f64,
    pub seed: u64,
}

impl Default for MultiStart {
    fn default() -> Self {
        Self {
            starts: 5,
            spread: 0.1,
            seed: 0,
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub ssr: f64,
    pub damping: f64,
    pub theta: [f64; 4],
}

const MAX_DAMPING: f64 = 1e16;

struct Run {
    z: [f64; 4],
    ssr: f64,
    iterations: usize,
    converged: bool,
    termination: String,
    evaluations: usize,
    trace: Vec<TraceEntry>,
}

pub(super) fn solve(problem: &EstimationProblem, options: &LmOptions) -> Result<EstimationResult> {
    let scale = problem.nominal_health().to_array();
    let z_init: [f64; 4] = {
        let t = problem.initial().to_array();
        std::array::from_fn(|i| t[i] / scale[i])
    };
    let mut starts = vec![z_init];
    if let Some(ms) = options.multi_start {
        let mut rng = ChaCha8Rng::seed_from_u64(ms.seed);
        for _ in 1..ms.starts.max(1) {
            let z: [f64; 4] = std::array::from_fn(|i| z_init[i] * (1.0 + rng.random_range(-ms.spread..=ms.spread)));
            starts.push(z);
        }
    }
    let runs: Vec<Result<Run>> = starts.par_iter().map(|z| run(problem, options, &scale, *z)).collect();
    let mut best: Option<Run> = None;
    let mut first_err = None;
    let mut evaluations = 0;
    for r in runs {
        match r {
            Ok(r) => {
                evaluations += r.evaluations;
                if best.as_ref().is_none_or(|b| r.ssr < b.ssr) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(best) = best else {
        return Err(first_err.unwrap_or_else(|| Error::InvalidInput("no estimation start".into())));
    };
    Ok(EstimationResult {
        mode: problem.mode(),
        theta: HealthVector::from_array(std::array::from_fn(|i| best.z[i] * scale[i])),
        errors_pct: None,
        ssr: best.ssr,
        iterations: best.iterations,
        converged: best.converged,
        termination: best.termination,
        evaluations,
        trace: best.trace,
    })
}

fn run(problem: &EstimationProblem, options: &LmOptions, scale: &[f64; 4], z0: [f64; 4]) -> Result<Run> {
    let b = problem.bounds();
    let lower: [f64; 4] = std::array::from_fn(|i| b.lower[i] / scale[i]);
    let upper: [f64; 4] = std::array::from_fn(|i| b.upper[i] / scale[i]);
    let project = |z: &[f64; 4]| -> [f64; 4] { std::array::from_fn(|i| z[i].clamp(lower[i], upper[i])) };
    let theta_of = |z: &[f64; 4]| HealthVector::from_array(std::array::from_fn(|i| z[i] * scale[i]));
    let eval = |z: &[f64; 4]| -> Option<Vec<f64>> {
        residuals(&theta_of(z), problem)
            .ok()
            .filter(|r| r.iter().all(|v| v.is_finite()))
    };
    let ssr = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut z = project(&z0);
    let mut r = eval(&z).ok_or_else(|| Error::InvalidInput("estimation model fails at the initial guess".into()))?;
    let mut cost = ssr(&r);
    let mut evaluations = 1;
    let mut lambda = options.initial_damping;
    let mut trace = vec![TraceEntry {
        iteration: 0,
        ssr: cost,
        damping: lambda,
        theta: theta_of(&z).to_array(),
    }];
    let n = r.len();
    let mut iterations = 0;
    let mut converged = false;
    let mut termination = String::from("iteration limit");

    'outer: while iterations < options.max_iterations {
        if cost == 0.0 {
            converged = true;
            termination = "zero residual".into();
            break;
        }
        // Forward differences, stepping backwards at the upper bound.
        let columns: Vec<Option<Vec<f64>>> = (0..4)
            .into_par_iter()
            .map(|i| {
                let mut h = options.fd_step * z[i].abs().max(1e-3);
                if z[i] + h > upper[i] {
                    h = -h;
                }
                let mut zp = z;
                zp[i] += h;
                eval(&zp).map(|rp| rp.iter().zip(&r).map(|(a, b)| (a - b) / h).collect())
            })
            .collect();
        evaluations += 4;
        let mut jac = DMatrix::<f64>::zeros(n, 4);
        for (i, col) in columns.into_iter().enumerate() {
            let col = col.ok_or_else(|| Error::InvalidInput("estimation model fails inside the finite-difference stencil".into()))?;
            jac.set_column(i, &DVector::from_vec(col));
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &rv;

        // Bound-active variables whose descent direction points outward stay fixed.
        let free: Vec<usize> = (0..4)
            .filter(|&i| {
                let at_lower = z[i] <= lower[i] && g[i] > 0.0;
                let at_upper = z[i] >= upper[i] && g[i] < 0.0;
                !(at_lower || at_upper)
            })
            .collect();
        if free.is_empty() {
            converged = true;
            termination = "all parameters at active bounds".into();
            break;
        }
        let diag_floor = 1e-12 * (0..4).map(|i| jtj[(i, i)]).fold(0.0, f64::max);

        loop {
            let m = free.len();
            let mut a = DMatrix::<f64>::zeros(m, m);
            let mut rhs = DVector::<f64>::zeros(m);
            for (p, &i) in free.iter().enumerate() {
                for (q, &j) in free.iter().enumerate() {
                    a[(p, q)] = jtj[(i, j)];
                }
                a[(p, p)] += lambda * jtj[(i, i)].max(diag_floor).max(f64::MIN_POSITIVE);
                rhs[p] = -g[i];
            }
            let step = a.cholesky().map(|c| c.solve(&rhs));
            let Some(step) = step else {
                lambda *= 4.0;
                if lambda > MAX_DAMPING {
                    termination = "singular normal equations".into();
                    break 'outer;
                }
                continue;
            };
            let mut trial = z;
            for (p, &i) in free.iter().enumerate() {
                trial[i] += step[p];
            }
            let trial = project(&trial);
            let dz = (0..4).map(|i| (trial[i] - z[i]).abs()).fold(0.0, f64::max);
            let zmax = z.iter().map(|v| v.abs()).fold(1.0, f64::max);
            if dz < options.step_tolerance * zmax {
                converged = true;
                termination = "step below tolerance".into();
                break 'outer;
            }
            evaluations += 1;
            let trial_r = eval(&trial);
            let trial_cost = trial_r.as_deref().map(ssr).unwrap_or(f64::INFINITY);
            if trial_cost < cost {
                let decrease = (cost - trial_cost) / cost;
                z = trial;
                r = trial_r.expect("finite cost implies residuals");
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                iterations += 1;
                trace.push(TraceEntry {
                    iteration: iterations,
                    ssr: cost,
                    damping: lambda,
                    theta: theta_of(&z).to_array(),
                });
                if decrease < options.cost_tolerance {
                    converged = true;
                    termination = "cost decrease below tolerance".into();
                    break 'outer;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > MAX_DAMPING {
                converged = true;
                termination = "no further descent".into();
                break 'outer;
            }
        }
    }

    Ok(Run {
        z,
        ssr: cost,
        iterations,
        converged,
        termination,
        evaluations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{EstimationMode, ModelKind};
    use crate::params::{apply_degradation, DegradationScenario, ParameterSet};
    use crate::sim::{simulate_ocp_model, ExcitationProfile};

    fn profile() -> ExcitationProfile {
        ExcitationProfile::new(60.0, vec![-5.0, -5.0, -1.0, -5.0, -5.0, -3.0, -5.0, -5.0, -5.0, -2.0], 1.0).unwrap()
    }

    #[test]
    fn recovers_truth_on_ocp_model() {
        let p = ParameterSet::bundled_default();
        let s = DegradationScenario::new("10%", [0.9, 0.9, 0.95, 0.95]).unwrap();
        let aged_p = apply_degradation(&p, &s).unwrap();
        let prof = profile();
        let aged = simulate_ocp_model(&aged_p, &prof, 0.0).unwrap();
        let problem =
            EstimationProblem::new(EstimationMode::Conventional, ModelKind::Ocp, &p, &prof, 0.0, aged, None).unwrap();
        let result = solve(&problem, &LmOptions::default()).unwrap();
        let truth = aged_p.health().to_array();
        for (e, t) in result.theta.to_array().iter().zip(truth) {
            assert!(((e - t) / t).abs() < 1e-6, "{e} vs {t}");
        }
        assert!(result.trace.windows(2).all(|w| w[1].ssr <= w[0].ssr));
    }

    #[test]
    fn multi_start_is_deterministic() {
        let p = ParameterSet::bundled_default();
        let s = DegradationScenario::new("5%", [0.95, 0.95, 0.975, 0.975]).unwrap();
        let aged_p = apply_degradation(&p, &s).unwrap();
        let prof = profile();
        let aged = simulate_ocp_model(&aged_p, &prof, 0.0).unwrap();
        let problem =
            EstimationProblem::new(EstimationMode::Conventional, ModelKind::Ocp, &p, &prof, 0.0, aged, None).unwrap();
        let options = LmOptions {
            multi_start: Some(MultiStart::default()),
            ..LmOptions::default()
        };
        let a = solve(&problem, &options).unwrap();
        let b = solve(&problem, &options).unwrap();
        assert_eq!(a, b);
    }
}
