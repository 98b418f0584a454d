use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cc_baseline, evaluate_design, verify_on_spme, DesignEvaluation, DesignResult, DesignSpec};
use crate::error::{Error, Result};
use crate::params::ParameterSet;

/// Global-best particle swarm settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit as a fraction of the box width.
    pub velocity_clamp: f64,
    pub penalty_weight: f64,
    pub seed: u64,
    /// Relative improvement below which an iteration counts as stalled.
    pub stall_tolerance: f64,
    /// Stop after this many consecutive stalled iterations; 0 disables.
    pub stall_patience: usize,
    /// Start one particle at the constant-current baseline.
    pub include_baseline: bool,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 50,
            max_iterations: 100,
            inertia: 0.729,
            cognitive: 1.494,
            social: 1.494,
            velocity_clamp: 0.5,
            penalty_weight: 1e6,
            seed: 0,
            stall_tolerance: 1e-9,
            stall_patience: 0,
            include_baseline: true,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::invalid("swarm_size", "must be at least 2"));
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return Err(Error::invalid("inertia", "must lie in (0, 1)"));
        }
        if !(self.cognitive > 0.0 && self.social > 0.0) {
            return Err(Error::invalid("cognitive/social", "must be positive"));
        }
        if !(self.velocity_clamp > 0.0) {
            return Err(Error::invalid("velocity_clamp", "must be positive"));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(Error::invalid("penalty_weight", "must be non-negative"));
        }
        Ok(())
    }
}

/// Runs the swarm from random positions (plus the baseline if configured).
pub fn design_excitation(spec: &DesignSpec, pso: &PsoConfig, params: &ParameterSet) -> Result<DesignResult> {
    let mut seeds = Vec::new();
    if pso.include_baseline {
        seeds.push((cc_baseline(spec, params)?.currents().to_vec(), None));
    }
    run(spec, pso, params, seeds)
}

/// Like [`design_excitation`] with caller-provided particles placed first,
/// each with zero initial velocity. Remaining particles are random.
pub fn design_excitation_seeded(
    spec: &DesignSpec,
    pso: &PsoConfig,
    params: &ParameterSet,
    particles: &[Vec<f64>],
) -> Result<DesignResult> {
    let seeds = particles.iter().map(|p| (p.clone(), Some(vec![0.0; p.len()]))).collect();
    run(spec, pso, params, seeds)
}

struct Particle {
    x: Vec<f64>,
    v: Vec<f64>,
    best_x: Vec<f64>,
    best: f64,
}

fn run(
    spec: &DesignSpec,
    pso: &PsoConfig,
    params: &ParameterSet,
    seeds: Vec<(Vec<f64>, Option<Vec<f64>>)>,
) -> Result<DesignResult> {
    spec.validate()?;
    pso.validate()?;
    let dim = spec.intervals;
    if let Some((bad, _)) = seeds.iter().find(|(x, _)| x.len() != dim) {
        return Err(Error::InvalidInput(format!(
            "seed particle has {} currents, expected {dim}",
            bad.len()
        )));
    }
    let bound = spec.max_current(params);
    let v_max = pso.velocity_clamp * 2.0 * bound;
    let mut rng = ChaCha8Rng::seed_from_u64(pso.seed);

    let n = pso.swarm_size.max(seeds.len());
    let mut swarm: Vec<Particle> = Vec::with_capacity(n);
    let mut seeds = seeds.into_iter();
    for _ in 0..n {
        let (x, v) = match seeds.next() {
            Some((x, v)) => {
                let v = v.unwrap_or_else(|| (0..dim).map(|_| rng.random_range(-v_max..=v_max) * 0.1).collect());
                (x.iter().map(|c| c.clamp(-bound, bound)).collect::<Vec<f64>>(), v)
            }
            None => (
                (0..dim).map(|_| rng.random_range(-bound..=bound)).collect(),
                (0..dim).map(|_| rng.random_range(-v_max..=v_max) * 0.1).collect(),
            ),
        };
        swarm.push(Particle {
            best_x: x.clone(),
            x,
            v,
            best: f64::NEG_INFINITY,
        });
    }

    let evaluate = |swarm: &[Particle]| -> Result<Vec<DesignEvaluation>> {
        swarm
            .par_iter()
            .map(|p| evaluate_design(&p.x, spec, params, pso.penalty_weight))
            .collect()
    };

    let mut g_best_x = swarm[0].x.clone();
    let mut g_best = f64::NEG_INFINITY;
    let mut feasible_best: Option<(Vec<f64>, DesignEvaluation)> = None;
    let mut least_violating: Option<(Vec<f64>, f64)> = None;
    let mut history = Vec::with_capacity(pso.max_iterations + 1);
    let mut evaluations = 0;
    let mut stalled = 0;
    let mut iterations = 0;

    let mut absorb = |swarm: &mut [Particle],
                      evals: Vec<DesignEvaluation>,
                      g_best: &mut f64,
                      g_best_x: &mut Vec<f64>| {
        for (p, e) in swarm.iter_mut().zip(evals) {
            if e.penalized > p.best {
                p.best = e.penalized;
                p.best_x.clone_from(&p.x);
            }
            if e.penalized > *g_best {
                *g_best = e.penalized;
                g_best_x.clone_from(&p.x);
            }
            if e.feasible {
                if feasible_best.as_ref().is_none_or(|(_, b)| e.objective > b.objective) {
                    feasible_best = Some((p.x.clone(), e));
                }
            } else {
                let total = e.violations.total();
                if least_violating.as_ref().is_none_or(|(_, b)| total < *b) {
                    least_violating = Some((p.x.clone(), total));
                }
            }
        }
    };

    let evals = evaluate(&swarm)?;
    evaluations += evals.len();
    absorb(&mut swarm, evals, &mut g_best, &mut g_best_x);
    history.push(g_best);

    for _ in 0..pso.max_iterations {
        for p in swarm.iter_mut() {
            for d in 0..dim {
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let v = pso.inertia * p.v[d]
                    + pso.cognitive * r1 * (p.best_x[d] - p.x[d])
                    + pso.social * r2 * (g_best_x[d] - p.x[d]);
                p.v[d] = v.clamp(-v_max, v_max);
                p.x[d] = (p.x[d] + p.v[d]).clamp(-bound, bound);
            }
        }
        let before = g_best;
        let evals = evaluate(&swarm)?;
        evaluations += evals.len();
        absorb(&mut swarm, evals, &mut g_best, &mut g_best_x);
        history.push(g_best);
        iterations += 1;

        if pso.stall_patience > 0 {
            let gain = g_best - before;
            if gain <= pso.stall_tolerance * before.abs().max(f64::MIN_POSITIVE) {
                stalled += 1;
                if stalled >= pso.stall_patience {
                    break;
                }
            } else {
                stalled = 0;
            }
        }
    }

    let Some((best_x, best)) = feasible_best else {
        let (best, violation) = least_violating.unwrap_or((g_best_x, f64::INFINITY));
        return Err(Error::NoFeasibleDesign { best, violation });
    };
    let profile = spec.profile(best_x)?;
    let spme_check = verify_on_spme(&profile, spec, params);
    Ok(DesignResult {
        criterion: spec.criterion,
        profile,
        objective: best.objective,
        history,
        report: best.report,
        spme_check,
        iterations,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::Criterion;

    fn small() -> PsoConfig {
        PsoConfig {
            swarm_size: 12,
            max_iterations: 15,
            seed: 7,
            ..PsoConfig::default()
        }
    }

    #[test]
    fn zero_iterations_returns_seed_particle() {
        let p = ParameterSet::bundled_default();
        let spec = DesignSpec::for_params(&p, Criterion::D);
        let known = vec![-5.0, -4.0, -5.0, -2.0, -5.0, -1.0, -5.0, -3.0, -5.0, -4.5];
        let pso = PsoConfig {
            swarm_size: 2,
            max_iterations: 0,
            include_baseline: false,
            ..PsoConfig::default()
        };
        let r = design_excitation_seeded(&spec, &pso, &p, &[known.clone(), known.clone()]).unwrap();
        assert_eq!(r.profile.currents(), known.as_slice());
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn history_is_monotone_and_seeded_runs_repeat() {
        let p = ParameterSet::bundled_default();
        let spec = DesignSpec::for_params(&p, Criterion::E);
        let a = design_excitation(&spec, &small(), &p).unwrap();
        let b = design_excitation(&spec, &small(), &p).unwrap();
        assert_eq!(a, b);
        assert!(a.history.windows(2).all(|w| w[1] >= w[0]));
        let e = evaluate_design(a.profile.currents(), &spec, &p, 1e6).unwrap();
        assert!(e.feasible);
    }

    #[test]
    fn rejects_bad_config() {
        let p = ParameterSet::bundled_default();
        let spec = DesignSpec::for_params(&p, Criterion::D);
        let pso = PsoConfig {
            swarm_size: 1,
            ..PsoConfig::default()
        };
        assert!(design_excitation(&spec, &pso, &p).is_err());
    }
}
