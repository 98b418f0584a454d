//! Cell parameters, health vectors, degradation scenarios and parameter files.
//!
//! A parameter file is a TOML document with SI units plus two OCP knot tables
//! (`x,U_volts`) referenced by relative path. See `data/lgm50.toml` for the
//! bundled default and the full key list.

mod ocp;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ocp::{Interpolation, OcpCurve};

pub const FARADAY: f64 = 96485.33212;
pub const GAS_CONSTANT: f64 = 8.314462618;

const BUNDLED_PARAMS: &str = include_str!("../../data/lgm50.toml");
const BUNDLED_OCP_POSITIVE: &str = include_str!("../../data/ocp_positive.csv");
const BUNDLED_OCP_NEGATIVE: &str = include_str!("../../data/ocp_negative.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Electrode {
    Positive,
    Negative,
}

impl Electrode {
    pub fn key(self) -> &'static str {
        match self {
            Electrode::Positive => "positive",
            Electrode::Negative => "negative",
        }
    }
}

/// Geometry, thermodynamic window and transport properties of one electrode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeParams {
    #[serde(rename = "area_m2")]
    pub area: f64,
    #[serde(rename = "thickness_m")]
    pub thickness: f64,
    #[serde(rename = "max_concentration_mol_m3")]
    pub max_concentration: f64,
    pub active_volume_fraction: f64,
    /// Stoichiometry at 0% SOC.
    pub stoich_at_0: f64,
    /// Stoichiometry at 100% SOC.
    pub stoich_at_100: f64,
    #[serde(rename = "particle_radius_m")]
    pub particle_radius: f64,
    #[serde(rename = "diffusivity_m2_s")]
    pub diffusivity: f64,
    /// Exchange-current prefactor, A/m² (m³/mol)^1.5.
    pub reaction_rate: f64,
}

impl ElectrodeParams {
    fn validate(&self, electrode: Electrode) -> Result<()> {
        let key = electrode.key();
        let positive = [
            ("area_m2", self.area),
            ("thickness_m", self.thickness),
            ("max_concentration_mol_m3", self.max_concentration),
            ("particle_radius_m", self.particle_radius),
            ("diffusivity_m2_s", self.diffusivity),
            ("reaction_rate", self.reaction_rate),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(
                    format!("{key}.{name}"),
                    format!("{name} must be finite and > 0 (got {value})"),
                ));
            }
        }
        let eps = self.active_volume_fraction;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid(
                format!("{key}.active_volume_fraction"),
                format!("active_volume_fraction out of (0,1) (got {eps})"),
            ));
        }
        for (name, value) in [("stoich_at_0", self.stoich_at_0), ("stoich_at_100", self.stoich_at_100)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::invalid(
                    format!("{key}.{name}"),
                    format!("{name} out of [0,1] (got {value})"),
                ));
            }
        }
        if self.stoich_at_0 == self.stoich_at_100 {
            return Err(Error::invalid(
                format!("{key}.stoich_at_0"),
                "degenerate stoichiometry window",
            ));
        }
        let ordered = match electrode {
            Electrode::Negative => self.stoich_at_0 < self.stoich_at_100,
            Electrode::Positive => self.stoich_at_100 < self.stoich_at_0,
        };
        if !ordered {
            return Err(Error::invalid(
                format!("{key}.stoich_at_0"),
                match electrode {
                    Electrode::Negative => "negative electrode requires stoich_at_0 < stoich_at_100",
                    Electrode::Positive => "positive electrode requires stoich_at_100 < stoich_at_0",
                },
            ));
        }
        Ok(())
    }

    /// Charge per unit stoichiometry excluding the active fraction, `F·A·δ·c_max` (C).
    pub fn charge_scale(&self, faraday: f64) -> f64 {
        faraday * self.area * self.thickness * self.max_concentration
    }

    /// Usable capacity between the 0% and 100% stoichiometries (C).
    pub fn capacity(&self, faraday: f64) -> f64 {
        self.charge_scale(faraday)
            * self.active_volume_fraction
            * (self.stoich_at_100 - self.stoich_at_0).abs()
    }

    pub fn stoichiometry_at(&self, soc: f64) -> f64 {
        self.stoich_at_0 + (self.stoich_at_100 - self.stoich_at_0) * soc
    }

    /// Particle surface area per electrode volume, `3 ε / R` (1/m).
    pub fn specific_area(&self) -> f64 {
        3.0 * self.active_volume_fraction / self.particle_radius
    }
}

/// Electrolyte transport bundle used for the φ_e term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrolyteParams {
    #[serde(rename = "initial_concentration_mol_m3")]
    pub initial_concentration: f64,
    #[serde(rename = "diffusivity_m2_s")]
    pub diffusivity: f64,
    pub transference_number: f64,
    #[serde(rename = "conductivity_s_m")]
    pub conductivity: f64,
    pub porosity_positive: f64,
    pub porosity_negative: f64,
    pub porosity_separator: f64,
    #[serde(rename = "separator_thickness_m")]
    pub separator_thickness: f64,
    pub bruggeman: f64,
}

impl ElectrolyteParams {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_concentration_mol_m3", self.initial_concentration),
            ("diffusivity_m2_s", self.diffusivity),
            ("conductivity_s_m", self.conductivity),
            ("separator_thickness_m", self.separator_thickness),
            ("bruggeman", self.bruggeman),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(
                    format!("electrolyte.{name}"),
                    format!("{name} must be finite and > 0 (got {value})"),
                ));
            }
        }
        let fractions = [
            ("transference_number", self.transference_number),
            ("porosity_positive", self.porosity_positive),
            ("porosity_negative", self.porosity_negative),
            ("porosity_separator", self.porosity_separator),
        ];
        for (name, value) in fractions {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::invalid(
                    format!("electrolyte.{name}"),
                    format!("{name} out of (0,1) (got {value})"),
                ));
            }
        }
        Ok(())
    }
}

/// Full electrochemical parameter set shared by every model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub positive: ElectrodeParams,
    pub negative: ElectrodeParams,
    pub electrolyte: ElectrolyteParams,
    /// Lumped ohmic resistance R_l (Ω).
    pub lumped_resistance: f64,
    /// Cell temperature (K).
    pub temperature: f64,
    pub nominal_capacity_ah: f64,
    /// Safety window `[V_min, V_max]` (V).
    pub voltage_window: (f64, f64),
    pub faraday: f64,
    pub ocp_positive: Arc<OcpCurve>,
    pub ocp_negative: Arc<OcpCurve>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParameterFile {
    temperature_k: f64,
    lumped_resistance_ohm: f64,
    nominal_capacity_ah: f64,
    voltage_min_v: f64,
    voltage_max_v: f64,
    #[serde(default = "default_faraday")]
    faraday_c_mol: f64,
    #[serde(default)]
    ocp_interpolation: Interpolation,
    positive: ElectrodeEntry,
    negative: ElectrodeEntry,
    electrolyte: ElectrolyteParams,
}

#[derive(Debug, Serialize, Deserialize)]
struct ElectrodeEntry {
    #[serde(flatten)]
    params: ElectrodeParams,
    ocp_file: String,
}

fn default_faraday() -> f64 {
    FARADAY
}

impl ParameterSet {
    /// The LG M50 defaults compiled into the crate.
    pub fn bundled_default() -> Self {
        let file: ParameterFile =
            toml::from_str(BUNDLED_PARAMS).expect("bundled parameter file parses");
        let interp = file.ocp_interpolation;
        let pos = OcpCurve::from_csv_reader(BUNDLED_OCP_POSITIVE.as_bytes(), Electrode::Positive, interp)
            .expect("bundled positive OCP table parses");
        let neg = OcpCurve::from_csv_reader(BUNDLED_OCP_NEGATIVE.as_bytes(), Electrode::Negative, interp)
            .expect("bundled negative OCP table parses");
        Self::assemble(file, pos, neg).expect("bundled parameters are valid")
    }

    fn assemble(file: ParameterFile, pos: OcpCurve, neg: OcpCurve) -> Result<Self> {
        let set = Self {
            positive: file.positive.params,
            negative: file.negative.params,
            electrolyte: file.electrolyte,
            lumped_resistance: file.lumped_resistance_ohm,
            temperature: file.temperature_k,
            nominal_capacity_ah: file.nominal_capacity_ah,
            voltage_window: (file.voltage_min_v, file.voltage_max_v),
            faraday: file.faraday_c_mol,
            ocp_positive: Arc::new(pos),
            ocp_negative: Arc::new(neg),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        self.positive.validate(Electrode::Positive)?;
        self.negative.validate(Electrode::Negative)?;
        self.electrolyte.validate()?;
        if !(self.lumped_resistance.is_finite() && self.lumped_resistance >= 0.0) {
            return Err(Error::invalid(
                "lumped_resistance_ohm",
                format!("lumped_resistance_ohm must be >= 0 (got {})", self.lumped_resistance),
            ));
        }
        for (name, value) in [
            ("temperature_k", self.temperature),
            ("nominal_capacity_ah", self.nominal_capacity_ah),
            ("faraday_c_mol", self.faraday),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, format!("{name} must be finite and > 0 (got {value})")));
            }
        }
        let (lo, hi) = self.voltage_window;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("voltage_min_v", "voltage window is degenerate"));
        }
        for (electrode, params) in [(Electrode::Positive, &self.positive), (Electrode::Negative, &self.negative)] {
            let q = params.capacity(self.faraday);
            if !(q.is_finite() && q > 0.0) {
                return Err(Error::invalid(
                    format!("{}.capacity", electrode.key()),
                    "electrode capacity must be finite and positive",
                ));
            }
        }
        if self.ocp_positive.electrode() != Electrode::Positive
            || self.ocp_negative.electrode() != Electrode::Negative
        {
            return Err(Error::invalid("ocp_file", "OCP curves are attached to the wrong electrodes"));
        }
        Ok(())
    }

    pub fn electrode(&self, electrode: Electrode) -> &ElectrodeParams {
        match electrode {
            Electrode::Positive => &self.positive,
            Electrode::Negative => &self.negative,
        }
    }

    pub fn ocp(&self, electrode: Electrode) -> &OcpCurve {
        match electrode {
            Electrode::Positive => &self.ocp_positive,
            Electrode::Negative => &self.ocp_negative,
        }
    }

    /// Current magnitude corresponding to a C-rate (A).
    pub fn c_rate_current(&self, c_rate: f64) -> f64 {
        c_rate * self.nominal_capacity_ah
    }

    /// Thermal voltage `R T / F` (V).
    pub fn thermal_voltage(&self) -> f64 {
        GAS_CONSTANT * self.temperature / self.faraday
    }

    pub fn health(&self) -> HealthVector {
        HealthVector {
            eps_pos: self.positive.active_volume_fraction,
            eps_neg: self.negative.active_volume_fraction,
            beta0_pos: self.positive.stoich_at_0,
            beta0_neg: self.negative.stoich_at_0,
        }
    }

    /// Copy with the four health parameters replaced; validated.
    pub fn with_health(&self, health: &HealthVector) -> Result<Self> {
        let mut out = self.clone();
        out.positive.active_volume_fraction = health.eps_pos;
        out.negative.active_volume_fraction = health.eps_neg;
        out.positive.stoich_at_0 = health.beta0_pos;
        out.negative.stoich_at_0 = health.beta0_neg;
        out.validate()?;
        Ok(out)
    }

    /// Writes `<stem>.toml` plus `<stem>_ocp_positive.csv` and
    /// `<stem>_ocp_negative.csv` into `dir`; returns the TOML path.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<std::path::PathBuf> {
        let dir = dir.as_ref();
        let pos_name = format!("{stem}_ocp_positive.csv");
        let neg_name = format!("{stem}_ocp_negative.csv");
        let file = ParameterFile {
            temperature_k: self.temperature,
            lumped_resistance_ohm: self.lumped_resistance,
            nominal_capacity_ah: self.nominal_capacity_ah,
            voltage_min_v: self.voltage_window.0,
            voltage_max_v: self.voltage_window.1,
            faraday_c_mol: self.faraday,
            ocp_interpolation: self.ocp_positive.interpolation(),
            positive: ElectrodeEntry {
                params: self.positive.clone(),
                ocp_file: pos_name.clone(),
            },
            negative: ElectrodeEntry {
                params: self.negative.clone(),
                ocp_file: neg_name.clone(),
            },
            electrolyte: self.electrolyte.clone(),
        };
        let text = toml::to_string(&file).map_err(|e| Error::parse(dir, e))?;
        let toml_path = dir.join(format!("{stem}.toml"));
        write(&toml_path, text.as_bytes())?;
        write(&dir.join(pos_name), self.ocp_positive.to_csv_string().as_bytes())?;
        write(&dir.join(neg_name), self.ocp_negative.to_csv_string().as_bytes())?;
        Ok(toml_path)
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads and validates a parameter file. OCP table paths are resolved
/// relative to the file's directory.
pub fn load_parameter_set(path: impl AsRef<Path>) -> Result<ParameterSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ParameterFile = toml::from_str(&text).map_err(|e| Error::parse(path, e.message()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let interp = file.ocp_interpolation;
    let pos = OcpCurve::from_csv_path(base.join(&file.positive.ocp_file), Electrode::Positive, interp)?;
    let neg = OcpCurve::from_csv_path(base.join(&file.negative.ocp_file), Electrode::Negative, interp)?;
    ParameterSet::assemble(file, pos, neg)
}

/// The four estimation targets θ = (ε_s,p, ε_s,n, β_p,0%, β_n,0%).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HealthVector {
    pub eps_pos: f64,
    pub eps_neg: f64,
    pub beta0_pos: f64,
    pub beta0_neg: f64,
}

impl HealthVector {
    pub const NAMES: [&'static str; 4] = ["eps_s_pos", "eps_s_neg", "beta_pos_0", "beta_neg_0"];

    pub fn new(values: [f64; 4]) -> Result<Self> {
        let h = Self::from_array(values);
        h.validate()?;
        Ok(h)
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            eps_pos: v[0],
            eps_neg: v[1],
            beta0_pos: v[2],
            beta0_neg: v[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.eps_pos, self.eps_neg, self.beta0_pos, self.beta0_neg]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::NAMES.iter().zip(self.to_array()) {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(*name, format!("{name} out of (0,1) (got {v})")));
            }
        }
        Ok(())
    }

    /// Componentwise product with `ratios`.
    pub fn scaled(&self, ratios: &[f64; 4]) -> Self {
        let a = self.to_array();
        Self::from_array(std::array::from_fn(|i| a[i] * ratios[i]))
    }
}

/// A named set of multipliers applied to the beginning-of-life health vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationScenario {
    pub label: String,
    pub ratios: [f64; 4],
}

impl DegradationScenario {
    pub fn new(label: impl Into<String>, ratios: [f64; 4]) -> Result<Self> {
        let s = Self {
            label: label.into(),
            ratios,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in HealthVector::NAMES.iter().zip(self.ratios) {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::invalid(
                    format!("scenario {}.{name}", self.label),
                    format!("ratio out of (0,1] (got {r})"),
                ));
            }
        }
        Ok(())
    }

    pub fn identity() -> Self {
        Self {
            label: "BOL".into(),
            ratios: [1.0; 4],
        }
    }

    /// The three degradation levels: 5%, 10% and 20%.
    pub fn standard_levels() -> Vec<Self> {
        vec![
            Self {
                label: "5%".into(),
                ratios: [0.95, 0.95, 0.975, 0.975],
            },
            Self {
                label: "10%".into(),
                ratios: [0.90, 0.90, 0.95, 0.95],
            },
            Self {
                label: "20%".into(),
                ratios: [0.80, 0.80, 0.95, 0.95],
            },
        ]
    }
}

/// Multiplies the four health fields of `bol` by the scenario ratios.
pub fn apply_degradation(bol: &ParameterSet, scenario: &DegradationScenario) -> Result<ParameterSet> {
    scenario.validate()?;
    bol.with_health(&bol.health().scaled(&scenario.ratios))
}
