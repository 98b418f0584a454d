use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    PlantMeasured,
    ModelPredicted,
    Differenced,
}

/// The four additive parts of the SPMe terminal voltage (V).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VoltageComponents {
    /// `U_p(c_se,p) − U_n(c_se,n)`
    pub ocp: f64,
    /// `η_p − η_n`
    pub eta: f64,
    /// `φ_e,p − φ_e,n`
    pub phie: f64,
    /// `−I·R_l`
    pub ir: f64,
}

impl VoltageComponents {
    pub fn total(&self) -> f64 {
        self.ocp + self.eta + self.phie + self.ir
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageTrajectory {
    pub times: Vec<f64>,
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    pub provenance: Provenance,
    pub components: Option<Vec<VoltageComponents>>,
}

impl VoltageTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Copy with `offset` added to every voltage sample; components dropped.
    pub fn offset(&self, offset: f64) -> Self {
        Self {
            times: self.times.clone(),
            current: self.current.clone(),
            voltage: self.voltage.iter().map(|v| v + offset).collect(),
            provenance: self.provenance,
            components: None,
        }
    }

    /// CSV with header `t_s,current_A,voltage_V[,ocp_V,eta_V,phie_V,ir_V]`,
    /// values written at 12 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t_s,current_A,voltage_V");
        if self.components.is_some() {
            out.push_str(",ocp_V,eta_V,phie_V,ir_V");
        }
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(
                out,
                "{},{},{}",
                sig12(self.times[k]),
                sig12(self.current[k]),
                sig12(self.voltage[k])
            );
            if let Some(c) = &self.components {
                let c = c[k];
                let _ = write!(out, ",{},{},{},{}", sig12(c.ocp), sig12(c.eta), sig12(c.phie), sig12(c.ir));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>, provenance: Provenance) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, provenance).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }

    pub fn from_csv_str(text: &str, provenance: Provenance) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::parse("<trajectory>", e))?.clone();
        let base = ["t_s", "current_A", "voltage_V"];
        let full = ["t_s", "current_A", "voltage_V", "ocp_V", "eta_V", "phie_V", "ir_V"];
        let with_components = if headers.iter().eq(full.iter().copied()) {
            true
        } else if headers.iter().eq(base.iter().copied()) {
            false
        } else {
            return Err(Error::parse(
                "<trajectory>",
                "expected header `t_s,current_A,voltage_V[,ocp_V,eta_V,phie_V,ir_V]`",
            ));
        };
        let mut traj = Self {
            times: Vec::new(),
            current: Vec::new(),
            voltage: Vec::new(),
            provenance,
            components: with_components.then(Vec::new),
        };
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::parse("<trajectory>", e))?;
            let f = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .ok_or_else(|| Error::parse("<trajectory>", format!("row {}: missing column", line + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::parse("<trajectory>", format!("row {}: {e}", line + 2)))
            };
            traj.times.push(f(0)?);
            traj.current.push(f(1)?);
            traj.voltage.push(f(2)?);
            if let Some(c) = traj.components.as_mut() {
                c.push(VoltageComponents {
                    ocp: f(3)?,
                    eta: f(4)?,
                    phie: f(5)?,
                    ir: f(6)?,
                });
            }
        }
        if traj.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::parse("<trajectory>", "timestamps must be strictly increasing"));
        }
        Ok(traj)
    }
}

/// Formats with 12 significant digits in scientific notation.
pub(crate) fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Samplewise `a − b`; timestamps must match exactly.
pub fn diff_trajectories(a: &VoltageTrajectory, b: &VoltageTrajectory) -> Result<VoltageTrajectory> {
    if a.times != b.times {
        return Err(Error::TimestampMismatch);
    }
    Ok(VoltageTrajectory {
        times: a.times.clone(),
        current: a.current.clone(),
        voltage: a.voltage.iter().zip(&b.voltage).map(|(x, y)| x - y).collect(),
        provenance: Provenance::Differenced,
        components: None,
    })
}
