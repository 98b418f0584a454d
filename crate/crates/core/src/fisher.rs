//! Output sensitivities, Fisher information and estimation-error statistics.
//!
//! Sensitivities come from the OCP model by the chain rule. With
//! `q(t) = ∫₀ᵗ I dτ`, `K_i = F·A_i·δ_i·c_s,max,i` and slope `U_i' = dU_i/dx`:
//!
//! ```text
//! ∂V/∂ε_s,p  = −U_p'(x_p) · q / (K_p ε_s,p²)
//! ∂V/∂ε_s,n  = −U_n'(x_n) · q / (K_n ε_s,n²)
//! ∂V/∂β_p,0% =  U_p'(x_p) · (1 − SOC₀)
//! ∂V/∂β_n,0% = −U_n'(x_n) · (1 − SOC₀)
//! ```
//!
//! The `(1 − SOC₀)` factor is exact: `β_0%` also enters the Coulomb-counting
//! capacity, which cancels the time-varying part. [`BetaFactor::RunningSoc`]
//! keeps the `(1 − SOC(t))` variant for comparison.

use nalgebra::{Cholesky, DVector, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{HealthVector, ParameterSet};
use crate::sim::{ocp_response, ExcitationProfile};

/// Largest condition number accepted when inverting a Fisher matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Output sensitivity `∂V/∂θ` at each sample, ordered as [`HealthVector::NAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTrajectory {
    pub times: Vec<f64>,
    pub rows: Vec<[f64; 4]>,
}

impl SensitivityTrajectory {
    pub fn new(times: Vec<f64>, rows: Vec<[f64; 4]>) -> Result<Self> {
        if times.len() != rows.len() {
            return Err(Error::InvalidInput("sensitivity rows and timestamps differ in length".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sensitivity".into()));
        }
        Ok(Self { times, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Columns multiplied by `scale` (sensitivity to `θ_i / scale_i`).
    pub fn scaled(&self, scale: &[f64; 4]) -> Self {
        Self {
            times: self.times.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| std::array::from_fn(|i| r[i] * scale[i]))
                .collect(),
        }
    }

    /// `Σ_k s(t_k)`.
    pub fn column_sums(&self) -> [f64; 4] {
        let mut acc = [0.0; 4];
        for r in &self.rows {
            for i in 0..4 {
                acc[i] += r[i];
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaFactor {
    /// `(1 − SOC₀)`: the exact derivative.
    #[default]
    InitialSoc,
    /// `(1 − SOC_i(t))` evaluated along the trajectory.
    RunningSoc,
}

/// Chain-rule sensitivities of the OCP model output.
pub fn sensitivities_ocp(
    params: &ParameterSet,
    profile: &ExcitationProfile,
    soc0: f64,
) -> Result<SensitivityTrajectory> {
    sensitivities_ocp_with(params, profile, soc0, BetaFactor::InitialSoc)
}

pub fn sensitivities_ocp_with(
    params: &ParameterSet,
    profile: &ExcitationProfile,
    soc0: f64,
    beta_factor: BetaFactor,
) -> Result<SensitivityTrajectory> {
    let r = ocp_response(params, profile, soc0)?;
    let f = params.faraday;
    let (pos, neg) = (&params.positive, &params.negative);
    let k_p = pos.charge_scale(f) * pos.active_volume_fraction.powi(2);
    let k_n = neg.charge_scale(f) * neg.active_volume_fraction.powi(2);
    let rows = (0..r.times.len())
        .map(|k| {
            let (du_p, du_n, q) = (r.slope_pos[k], r.slope_neg[k], r.charge[k]);
            let (fac_p, fac_n) = match beta_factor {
                BetaFactor::InitialSoc => (1.0 - soc0, 1.0 - soc0),
                BetaFactor::RunningSoc => (1.0 - r.soc_pos[k], 1.0 - r.soc[k]),
            };
            [
                -du_p * q / k_p,
                -du_n * q / k_n,
                du_p * fac_p,
                -du_n * fac_n,
            ]
        })
        .collect();
    SensitivityTrajectory::new(r.times, rows)
}

/// Symmetric 4×4 Fisher information matrix `Σ_k s(t_k)ᵀ s(t_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FisherRecord", try_from = "FisherRecord")]
pub struct FisherMatrix {
    matrix: Matrix4<f64>,
    samples: usize,
}

#[derive(Serialize, Deserialize)]
struct FisherRecord {
    parameters: Vec<String>,
    samples: usize,
    matrix: [[f64; 4]; 4],
}

impl From<FisherMatrix> for FisherRecord {
    fn from(f: FisherMatrix) -> Self {
        Self {
            parameters: HealthVector::NAMES.iter().map(|s| s.to_string()).collect(),
            samples: f.samples,
            matrix: std::array::from_fn(|i| std::array::from_fn(|j| f.matrix[(i, j)])),
        }
    }
}

impl TryFrom<FisherRecord> for FisherMatrix {
    type Error = String;

    fn try_from(r: FisherRecord) -> std::result::Result<Self, String> {
        if r.parameters.iter().map(String::as_str).ne(HealthVector::NAMES) {
            return Err(format!("unexpected parameter ordering {:?}", r.parameters));
        }
        Ok(Self {
            matrix: Matrix4::from_fn(|i, j| r.matrix[i][j]),
            samples: r.samples,
        })
    }
}

impl FisherMatrix {
    /// Wraps an explicit matrix; must be symmetric.
    pub fn from_matrix(matrix: Matrix4<f64>, samples: usize) -> Result<Self> {
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        if (matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidInput("Fisher matrix must be symmetric".into()));
        }
        Ok(Self { matrix, samples })
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// `D·F·D` with `D = diag(scale)`.
    pub fn scaled(&self, scale: &[f64; 4]) -> Self {
        let d = Matrix4::from_diagonal(&Vector4::from(*scale));
        let m = d * self.matrix * d;
        Self {
            matrix: (m + m.transpose()) * 0.5,
            samples: self.samples,
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2], ev[3]]
    }

    pub fn determinant(&self) -> f64 {
        match Cholesky::new(self.matrix) {
            Some(ch) => ch.l().diagonal().iter().map(|d| d * d).product(),
            None => self.matrix.lu().determinant(),
        }
    }

    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        if ev[0] <= 0.0 {
            f64::INFINITY
        } else {
            ev[3] / ev[0]
        }
    }

    /// `F⁻¹`, refusing matrices with condition number above [`MAX_CONDITION`].
    pub fn inverse(&self) -> Result<Matrix4<f64>> {
        let condition = self.condition_number();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularMatrix { condition });
        }
        let inv = match Cholesky::new(self.matrix) {
            Some(ch) => ch.inverse(),
            None => self
                .matrix
                .try_inverse()
                .ok_or(Error::SingularMatrix { condition })?,
        };
        Ok((inv + inv.transpose()) * 0.5)
    }
}

/// Accumulates the Fisher information of a sensitivity trajectory.
pub fn fisher(sens: &SensitivityTrajectory) -> Result<FisherMatrix> {
    if sens.is_empty() {
        return Err(Error::InvalidInput("empty sensitivity trajectory".into()));
    }
    let mut m = Matrix4::zeros();
    for s in &sens.rows {
        for i in 0..4 {
            for j in i..4 {
                m[(i, j)] += s[i] * s[j];
            }
        }
    }
    for i in 0..4 {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    Ok(FisherMatrix {
        matrix: m,
        samples: sens.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    /// Determinant.
    #[serde(rename = "d")]
    D,
    /// Minimum eigenvalue.
    #[serde(rename = "e")]
    E,
    /// Trace of the inverse (lower is better).
    #[serde(rename = "a")]
    A,
}

impl Criterion {
    pub fn label(self) -> &'static str {
        match self {
            Criterion::D => "D-opt",
            Criterion::E => "E-opt",
            Criterion::A => "A-opt",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d" => Ok(Criterion::D),
            "e" => Ok(Criterion::E),
            "a" => Ok(Criterion::A),
            other => Err(Error::InvalidInput(format!("unknown criterion `{other}` (expected d, e or a)"))),
        }
    }
}

/// D: `det F`; E: `λ_min(F)`; A: `trace(F⁻¹)`.
pub fn optimality_metric(f: &FisherMatrix, criterion: Criterion) -> Result<f64> {
    match criterion {
        Criterion::D => Ok(f.determinant()),
        Criterion::E => Ok(f.eigenvalues()[0]),
        Criterion::A => {
            let inv = f.inverse()?;
            Ok(compensated_sum((0..4).map(|i| inv[(i, i)])))
        }
    }
}

/// Neumaier summation; correctly rounded for the handful of terms used here.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        c += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + c
}

/// Metric oriented so that larger is better for every criterion.
pub fn design_objective(f: &FisherMatrix, criterion: Criterion) -> Result<f64> {
    let m = optimality_metric(f, criterion)?;
    Ok(if criterion == Criterion::A { -m } else { m })
}

/// Predicted statistics of the estimation error `θ_true − θ̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPrediction {
    pub mean: [f64; 4],
    pub covariance: [[f64; 4]; 4],
    /// Constant part of the lumped uncertainty (V).
    pub delta_bar: f64,
    /// Measurement noise standard deviation (V).
    pub sigma: f64,
}

/// `E[Δθ] = −F⁻¹ (Σ_k s_kᵀ) Δδ̄` and `cov(Δθ) = 2 F⁻¹ σ²`, where the factor 2
/// accounts for the noise of both the reference and the aged trajectory.
pub fn predict_error(
    f: &FisherMatrix,
    sens: &SensitivityTrajectory,
    delta_bar: f64,
    sigma: f64,
) -> Result<ErrorPrediction> {
    let inv = f.inverse()?;
    let sums = DVector::from_row_slice(&sens.column_sums());
    let inv_dyn = nalgebra::DMatrix::from_fn(4, 4, |i, j| inv[(i, j)]);
    let mean = -(inv_dyn * sums) * delta_bar;
    let cov = inv * (2.0 * sigma * sigma);
    Ok(ErrorPrediction {
        mean: std::array::from_fn(|i| mean[i]),
        covariance: std::array::from_fn(|i| std::array::from_fn(|j| cov[(i, j)])),
        delta_bar,
        sigma,
    })
}
