use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Provenance, VoltageTrajectory};

/// Model and measurement uncertainty injected into plant output.
///
/// `V_m(t) = V_plant(t) + model_bias + lag(I)(t) + meas_bias + N(0, σ²)`, where
/// `lag` is a first-order response `τ·dz/dt = gain·I − z` started from rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySpec {
    /// Constant model bias (V).
    pub model_bias: f64,
    /// Lag gain (V/A).
    pub lag_gain: f64,
    /// Lag time constant (s).
    pub lag_time_constant: f64,
    /// Constant measurement bias (V).
    pub meas_bias: f64,
    /// Gaussian measurement noise standard deviation (V).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for UncertaintySpec {
    fn default() -> Self {
        Self {
            model_bias: 0.0,
            lag_gain: 0.0,
            lag_time_constant: 1.0,
            meas_bias: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl UncertaintySpec {
    /// No injected uncertainty.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.model_bias, self.lag_gain, self.lag_time_constant, self.meas_bias, self.noise_sigma];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("uncertainty", "values must be finite"));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::invalid("uncertainty.noise_sigma", "noise_sigma must be >= 0"));
        }
        if self.lag_gain != 0.0 && self.lag_time_constant <= 0.0 {
            return Err(Error::invalid(
                "uncertainty.lag_time_constant",
                "lag_time_constant must be > 0 when lag_gain is non-zero",
            ));
        }
        Ok(())
    }

    /// Total constant offset, `model_bias + meas_bias` (V).
    pub fn constant_offset(&self) -> f64 {
        self.model_bias + self.meas_bias
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Applies the uncertainty to `clean`; deterministic for a fixed seed.
    pub fn apply(&self, clean: &VoltageTrajectory) -> Result<VoltageTrajectory> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_sigma).map_err(|e| Error::invalid("uncertainty.noise_sigma", e.to_string()))?;
        let mut lag = 0.0;
        let mut t_prev = 0.0;
        let mut voltage = Vec::with_capacity(clean.len());
        for k in 0..clean.len() {
            if self.lag_gain != 0.0 {
                let decay = (-(clean.times[k] - t_prev) / self.lag_time_constant).exp();
                lag = lag * decay + self.lag_gain * clean.current[k] * (1.0 - decay);
            }
            t_prev = clean.times[k];
            let mut v = clean.voltage[k] + self.model_bias + lag + self.meas_bias;
            if self.noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            voltage.push(v);
        }
        Ok(VoltageTrajectory {
            times: clean.times.clone(),
            current: clean.current.clone(),
            voltage,
            provenance: Provenance::PlantMeasured,
            components: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(n: usize) -> VoltageTrajectory {
        VoltageTrajectory {
            times: (1..=n).map(|k| k as f64).collect(),
            current: vec![2.0; n],
            voltage: vec![3.7; n],
            provenance: Provenance::ModelPredicted,
            components: None,
        }
    }

    #[test]
    fn lag_approaches_gain_times_current() {
        let u = UncertaintySpec {
            lag_gain: 0.01,
            lag_time_constant: 5.0,
            ..Default::default()
        };
        let out = u.apply(&clean(200)).unwrap();
        assert!((out.voltage[199] - 3.7 - 0.02).abs() < 1e-12);
        assert!((out.voltage[0] - 3.7 - 0.02 * (1.0 - (-0.2f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn noise_statistics() {
        let u = UncertaintySpec {
            noise_sigma: 0.001,
            seed: 11,
            ..Default::default()
        };
        let out = u.apply(&clean(20_000)).unwrap();
        let e: Vec<f64> = out.voltage.iter().map(|v| v - 3.7).collect();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
        assert!(mean.abs() < 5e-5);
        assert!((var.sqrt() / 0.001 - 1.0).abs() < 0.03);
    }

    #[test]
    fn rejects_invalid() {
        let u = UncertaintySpec {
            noise_sigma: -1.0,
            ..Default::default()
        };
        assert!(u.validate().is_err());
        let u = UncertaintySpec {
            lag_gain: 1.0,
            lag_time_constant: 0.0,
            ..Default::default()
        };
        assert!(u.validate().is_err());
    }
}
