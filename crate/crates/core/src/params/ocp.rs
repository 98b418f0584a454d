//! Open-circuit potential curves stored as knot tables.
//!
//! A curve maps electrode stoichiometry `x` to potential `U(x)` and its slope
//! `dU/dx`. The default rule is a shape-preserving monotone cubic Hermite
//! interpolant (Fritsch-Carlson slopes), which keeps `dU/dx` continuous. A
//! piecewise-linear rule is available for tests and coarse tables.
//!
//! Evaluation outside the knot range is an error; curves never extrapolate.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Electrode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    #[default]
    MonotoneCubic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpCurve {
    electrode: Electrode,
    x: Vec<f64>,
    u: Vec<f64>,
    // Hermite node slopes; empty for the linear rule.
    slopes: Vec<f64>,
    interpolation: Interpolation,
}

impl OcpCurve {
    pub fn new(
        electrode: Electrode,
        x: Vec<f64>,
        u: Vec<f64>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        let field = format!("{}.ocp", electrode.key());
        if x.len() != u.len() {
            return Err(Error::invalid(field, "knot columns differ in length"));
        }
        if x.len() < 2 {
            return Err(Error::invalid(field, "at least two knots are required"));
        }
        if x.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid(field, "non-finite knot value"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(field, "knots must be strictly increasing in x"));
        }
        if x[0] < 0.0 || x[x.len() - 1] > 1.0 {
            return Err(Error::invalid(field, "knots must lie in [0, 1]"));
        }
        let slopes = match interpolation {
            Interpolation::Linear => Vec::new(),
            Interpolation::MonotoneCubic => pchip_slopes(&x, &u),
        };
        Ok(Self {
            electrode,
            x,
            u,
            slopes,
            interpolation,
        })
    }

    /// Reads a two-column `x,U_volts` table.
    pub fn from_csv_path(
        path: impl AsRef<Path>,
        electrode: Electrode,
        interpolation: Interpolation,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, electrode, interpolation)
            .map_err(|e| match e {
                Error::Parse { message, .. } => Error::parse(path, message),
                other => other,
            })
    }

    pub fn from_csv_reader(
        reader: impl Read,
        electrode: Electrode,
        interpolation: Interpolation,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::parse("<ocp>", e))?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "U_volts" {
            return Err(Error::parse("<ocp>", "expected header `x,U_volts`"));
        }
        let mut x = Vec::new();
        let mut u = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::parse("<ocp>", e))?;
            let parse = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::parse("<ocp>", format!("row {}: {e}", line + 2)))
            };
            x.push(parse(0)?);
            u.push(parse(1)?);
        }
        Self::new(electrode, x, u, interpolation)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("x,U_volts\n");
        for (x, u) in self.x.iter().zip(&self.u) {
            out.push_str(&format!("{x},{u}\n"));
        }
        out
    }

    pub fn electrode(&self) -> Electrode {
        self.electrode
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.u)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Same knots under a different interpolation rule.
    pub fn with_interpolation(&self, interpolation: Interpolation) -> Self {
        Self::new(self.electrode, self.x.clone(), self.u.clone(), interpolation)
            .expect("knots were validated on construction")
    }

    /// Potential and slope `(U, dU/dx)` at stoichiometry `x`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&x) {
            return Err(Error::OcpDomain { x, min: lo, max: hi });
        }
        // Index of the interval [x_k, x_{k+1}] containing x.
        let k = (self.x.partition_point(|&xk| xk <= x).max(1) - 1).min(self.x.len() - 2);
        let h = self.x[k + 1] - self.x[k];
        let t = (x - self.x[k]) / h;
        let (u0, u1) = (self.u[k], self.u[k + 1]);
        match self.interpolation {
            Interpolation::Linear => {
                let slope = (u1 - u0) / h;
                Ok((u0 + t * (u1 - u0), slope))
            }
            Interpolation::MonotoneCubic => {
                let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
                let t2 = t * t;
                let t3 = t2 * t;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + t;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                let value = h00 * u0 + h10 * h * d0 + h01 * u1 + h11 * h * d1;
                let dh00 = (6.0 * t2 - 6.0 * t) / h;
                let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
                let dh01 = (-6.0 * t2 + 6.0 * t) / h;
                let dh11 = 3.0 * t2 - 2.0 * t;
                let slope = dh00 * u0 + dh10 * d0 + dh01 * u1 + dh11 * d1;
                Ok((value, slope))
            }
        }
    }
}

/// Fritsch-Carlson node slopes with the weighted harmonic mean in the
/// interior and the three-point shape-preserving rule at the ends.
fn pchip_slopes(x: &[f64], u: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (u[k + 1] - u[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a * b <= 0.0 {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}
