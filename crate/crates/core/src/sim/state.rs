use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Electrode, ParameterSet};

/// Solid-phase concentration state of one electrode's representative particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolidState {
    /// Reduced polynomial-profile states: volume-averaged concentration
    /// (mol/m³) and volume-averaged concentration gradient (mol/m⁴).
    Polynomial { average: f64, flux: f64 },
    /// Radial finite-volume shell concentrations, centre outwards (mol/m³).
    Shells(Vec<f64>),
}

impl SolidState {
    /// Volume-averaged concentration (mol/m³).
    pub fn average(&self) -> f64 {
        match self {
            SolidState::Polynomial { average, .. } => *average,
            SolidState::Shells(c) => shell_average(c),
        }
    }

    fn is_uniform(&self) -> bool {
        match self {
            SolidState::Polynomial { flux, .. } => *flux == 0.0,
            SolidState::Shells(c) => c.windows(2).all(|w| w[0] == w[1]),
        }
    }

    fn concentrations(&self) -> Vec<f64> {
        match self {
            SolidState::Polynomial { average, .. } => vec![*average],
            SolidState::Shells(c) => c.clone(),
        }
    }
}

/// Volume-weighted mean over equal-width spherical shells.
pub(crate) fn shell_average(c: &[f64]) -> f64 {
    let n = c.len() as f64;
    let mut acc = 0.0;
    for (i, ci) in c.iter().enumerate() {
        let (r0, r1) = (i as f64 / n, (i + 1) as f64 / n);
        acc += ci * (r1.powi(3) - r0.powi(3));
    }
    acc
}

/// Full model state. `soc` is defined on the negative electrode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub soc: f64,
    pub positive: SolidState,
    pub negative: SolidState,
    /// Electrolyte concentration in the positive electrode region (mol/m³).
    pub electrolyte_positive: f64,
    /// Electrolyte concentration in the negative electrode region (mol/m³).
    pub electrolyte_negative: f64,
}

impl CellState {
    /// Relaxed state at `soc`: uniform particles, uniform electrolyte.
    pub fn equilibrium(params: &ParameterSet, soc: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&soc) {
            return Err(Error::InvalidInput(format!("soc {soc} outside [0, 1]")));
        }
        let avg = |e: Electrode| {
            let p = params.electrode(e);
            p.stoichiometry_at(soc) * p.max_concentration
        };
        Ok(Self {
            soc,
            positive: SolidState::Polynomial {
                average: avg(Electrode::Positive),
                flux: 0.0,
            },
            negative: SolidState::Polynomial {
                average: avg(Electrode::Negative),
                flux: 0.0,
            },
            electrolyte_positive: params.electrolyte.initial_concentration,
            electrolyte_negative: params.electrolyte.initial_concentration,
        })
    }

    pub fn solid(&self, electrode: Electrode) -> &SolidState {
        match electrode {
            Electrode::Positive => &self.positive,
            Electrode::Negative => &self.negative,
        }
    }

    /// SOC implied by an electrode's average concentration.
    pub fn electrode_soc(&self, params: &ParameterSet, electrode: Electrode) -> f64 {
        let p = params.electrode(electrode);
        let x = self.solid(electrode).average() / p.max_concentration;
        (x - p.stoich_at_0) / (p.stoich_at_100 - p.stoich_at_0)
    }

    pub fn validate(&self, params: &ParameterSet) -> Result<()> {
        if !(0.0..=1.0).contains(&self.soc) {
            return Err(Error::InvalidInput(format!("soc {} outside [0, 1]", self.soc)));
        }
        for e in [Electrode::Positive, Electrode::Negative] {
            let c_max = params.electrode(e).max_concentration;
            if self
                .solid(e)
                .concentrations()
                .iter()
                .any(|c| !(0.0..=c_max).contains(c))
            {
                return Err(Error::InvalidInput(format!(
                    "{} solid concentration outside [0, c_s_max]",
                    e.key()
                )));
            }
        }
        if !(self.electrolyte_positive > 0.0 && self.electrolyte_negative > 0.0) {
            return Err(Error::InvalidInput("electrolyte concentration must be positive".into()));
        }
        Ok(())
    }

    /// Solid state of one electrode expressed in the requested representation.
    /// Only relaxed (uniform) states convert between representations.
    pub(crate) fn solid_as(&self, electrode: Electrode, shells: Option<usize>) -> Result<Vec<f64>> {
        let s = self.solid(electrode);
        match (s, shells) {
            (SolidState::Polynomial { average, flux }, None) => Ok(vec![*average, *flux]),
            (SolidState::Shells(c), Some(n)) if c.len() == n => Ok(c.clone()),
            (_, target) if s.is_uniform() => {
                let avg = s.average();
                Ok(match target {
                    None => vec![avg, 0.0],
                    Some(n) => vec![avg; n],
                })
            }
            _ => Err(Error::InvalidInput(
                "non-equilibrium solid state cannot change representation".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_average_of_uniform_is_value() {
        assert!((shell_average(&[7.0; 20]) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_round_trips_soc() {
        let p = ParameterSet::bundled_default();
        let s = CellState::equilibrium(&p, 0.37).unwrap();
        for e in [Electrode::Positive, Electrode::Negative] {
            assert!((s.electrode_soc(&p, e) - 0.37).abs() < 1e-12);
        }
        s.validate(&p).unwrap();
        assert!(CellState::equilibrium(&p, 1.2).is_err());
    }

    #[test]
    fn representation_conversion() {
        let p = ParameterSet::bundled_default();
        let s = CellState::equilibrium(&p, 0.5).unwrap();
        let shells = s.solid_as(Electrode::Negative, Some(5)).unwrap();
        assert_eq!(shells.len(), 5);
        let mut t = s.clone();
        t.negative = SolidState::Polynomial {
            average: 1000.0,
            flux: 3.0,
        };
        assert!(t.solid_as(Electrode::Negative, Some(5)).is_err());
    }
}
