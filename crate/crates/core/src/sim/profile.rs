use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant current excitation. Positive current discharges the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationProfile {
    segment_duration: f64,
    currents: Vec<f64>,
    sample_period: f64,
    samples_per_segment: usize,
}

impl ExcitationProfile {
    pub fn new(segment_duration: f64, currents: Vec<f64>, sample_period: f64) -> Result<Self> {
        if currents.is_empty() {
            return Err(Error::InvalidInput("profile has no segments".into()));
        }
        if currents.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("profile current is not finite".into()));
        }
        if !(segment_duration > 0.0 && sample_period > 0.0) {
            return Err(Error::InvalidInput(
                "segment duration and sample period must be positive".into(),
            ));
        }
        let ratio = segment_duration / sample_period;
        let samples_per_segment = ratio.round();
        if samples_per_segment < 1.0 || (ratio - samples_per_segment).abs() > 1e-9 * ratio {
            return Err(Error::InvalidInput(format!(
                "sample period {sample_period} s does not divide segment duration {segment_duration} s"
            )));
        }
        Ok(Self {
            segment_duration,
            currents,
            sample_period,
            samples_per_segment: samples_per_segment as usize,
        })
    }

    /// `intervals` equal segments of `current` spanning `horizon` seconds.
    pub fn constant(current: f64, horizon: f64, intervals: usize, sample_period: f64) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidInput("profile needs at least one interval".into()));
        }
        Self::new(horizon / intervals as f64, vec![current; intervals], sample_period)
    }

    pub fn currents(&self) -> &[f64] {
        &self.currents
    }

    pub fn segment_duration(&self) -> f64 {
        self.segment_duration
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn horizon(&self) -> f64 {
        self.segment_duration * self.currents.len() as f64
    }

    pub fn samples_per_segment(&self) -> usize {
        self.samples_per_segment
    }

    pub fn sample_count(&self) -> usize {
        self.samples_per_segment * self.currents.len()
    }

    /// Sample instants `k·Δt` for `k = 1..=N`.
    pub fn sample_times(&self) -> Vec<f64> {
        (1..=self.sample_count()).map(|k| k as f64 * self.sample_period).collect()
    }

    /// Current applied over `(t_{k-1}, t_k]`, where `k` is 1-based.
    pub fn current_for_sample(&self, k: usize) -> f64 {
        self.currents[(k - 1) / self.samples_per_segment]
    }

    pub fn max_abs_current(&self) -> f64 {
        self.currents.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Errors when any segment exceeds `max_current` in magnitude.
    pub fn check_current_bound(&self, max_current: f64) -> Result<()> {
        match self.currents.iter().position(|c| c.abs() > max_current) {
            Some(i) => Err(Error::InvalidInput(format!(
                "segment {i} current {} A exceeds bound {max_current} A",
                self.currents[i]
            ))),
            None => Ok(()),
        }
    }

    /// Charge passed, `∫₀ᵗ I dτ` (C), evaluated exactly for the piecewise-constant input.
    pub fn charge_passed(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon());
        let full = (t / self.segment_duration).floor() as usize;
        let mut q = 0.0;
        for &c in self.currents.iter().take(full) {
            q += c * self.segment_duration;
        }
        if full < self.currents.len() {
            q += self.currents[full] * (t - full as f64 * self.segment_duration);
        }
        q
    }

    /// Cumulative charge at every sample instant, accumulated segment-by-segment.
    pub fn charge_at_samples(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.sample_count());
        let mut q = 0.0;
        for &c in &self.currents {
            for j in 1..=self.samples_per_segment {
                out.push(q + c * self.sample_period * j as f64);
            }
            q += c * self.segment_duration;
        }
        out
    }

    /// CSV with header `segment_index,t_start_s,t_end_s,current_A`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("segment_index,t_start_s,t_end_s,current_A\n");
        for (i, c) in self.currents.iter().enumerate() {
            let t0 = i as f64 * self.segment_duration;
            let t1 = (i + 1) as f64 * self.segment_duration;
            out.push_str(&format!("{i},{t0},{t1},{c}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>, sample_period: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, sample_period).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }

    pub fn from_csv_str(text: &str, sample_period: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::parse("<profile>", e))?.clone();
        let expected = ["segment_index", "t_start_s", "t_end_s", "current_A"];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(Error::parse(
                "<profile>",
                "expected header `segment_index,t_start_s,t_end_s,current_A`",
            ));
        }
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::parse("<profile>", e))?;
            let field = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::parse("<profile>", format!("row {}: {e}", line + 2)))
            };
            rows.push((field(0)?, field(1)?, field(2)?, field(3)?));
        }
        let Some(&(_, first_start, first_end, _)) = rows.first() else {
            return Err(Error::parse("<profile>", "profile has no segments"));
        };
        let duration = first_end - first_start;
        for (i, &(idx, t0, t1, _)) in rows.iter().enumerate() {
            let expect_t0 = i as f64 * duration;
            let tol = 1e-9 * duration.max(1.0) * (i + 1) as f64;
            if idx != i as f64 || (t0 - expect_t0).abs() > tol || (t1 - t0 - duration).abs() > tol {
                return Err(Error::parse(
                    "<profile>",
                    format!("segment {i} is not contiguous with equal duration"),
                ));
            }
        }
        Self::new(duration, rows.iter().map(|r| r.3).collect(), sample_period)
    }
}
