use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EstimationMode;
use crate::params::HealthVector;
use crate::sim::ExcitationProfile;

/// One (scenario, mode, excitation) cell of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub mode: EstimationMode,
    pub excitation: String,
    /// Percent errors, absent when the cell failed.
    pub errors_pct: Option<[f64; 4]>,
    pub failure: Option<String>,
    /// Result JSON, relative to the output directory.
    pub result_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    /// Decimals shown in the text table.
    pub precision: usize,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Svg,
}

const CSV_HEADER: &str =
    "scenario,mode,excitation,eps_s_pos_pct,eps_s_neg_pct,beta_pos_0_pct,beta_neg_0_pct,status,result_file";

impl ReportTable {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            precision: 3,
            rows: Vec::new(),
        }
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failure.is_some()).count()
    }

    pub fn row(&self, scenario: &str, mode: EstimationMode, excitation: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.mode == mode && r.excitation == excitation)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let p = self.precision;
        let mut cells: Vec<[String; 7]> = vec![[
            "level".into(),
            "mode".into(),
            "excitation".into(),
            format!("{} %", HealthVector::NAMES[0]),
            format!("{} %", HealthVector::NAMES[1]),
            format!("{} %", HealthVector::NAMES[2]),
            format!("{} %", HealthVector::NAMES[3]),
        ]];
        for r in &self.rows {
            let mut line: [String; 7] = Default::default();
            line[0] = r.scenario.clone();
            line[1] = r.mode.label().into();
            line[2] = r.excitation.clone();
            match (&r.errors_pct, &r.failure) {
                (Some(e), _) => {
                    for i in 0..4 {
                        line[3 + i] = format!("{:.p$}", e[i]);
                    }
                }
                (None, failure) => {
                    line[3] = format!("failed: {}", failure.as_deref().unwrap_or("unknown"));
                }
            }
            cells.push(line);
        }
        let widths: [usize; 7] = std::array::from_fn(|c| {
            cells
                .iter()
                .filter(|l| c < 3 || !l[3].starts_with("failed"))
                .map(|l| l[c].chars().count())
                .max()
                .unwrap_or(0)
        });
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        for l in &cells {
            let mut line = String::new();
            for c in 0..3 {
                let _ = write!(line, "{:<w$}  ", l[c], w = widths[c]);
            }
            if l[3].starts_with("failed") {
                line.push_str(&l[3]);
            } else {
                for c in 3..7 {
                    let _ = write!(line, "{:>w$}  ", l[c], w = widths[c]);
                }
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        out
    }

    /// CSV with `#` metadata lines; floats use the shortest exact representation.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# title: {}", self.title);
        let _ = writeln!(out, "# precision: {}", self.precision);
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for r in &self.rows {
            let mut rec = vec![r.scenario.clone(), r.mode.label().to_string(), r.excitation.clone()];
            match &r.errors_pct {
                Some(e) => rec.extend(e.iter().map(|v| format!("{v:?}"))),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
            rec.push(match &r.failure {
                None => "ok".to_string(),
                Some(f) => format!("failed: {f}"),
            });
            rec.push(r.result_file.clone().unwrap_or_default());
            w.write_record(&rec).expect("writing to memory");
        }
        out.push_str(CSV_HEADER);
        out.push('\n');
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory writer")).expect("UTF-8"));
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let src = "<report csv>";
        let mut table = Self::new("");
        let mut body = String::new();
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix("# ") {
                if let Some(t) = meta.strip_prefix("title: ") {
                    table.title = t.to_string();
                } else if let Some(p) = meta.strip_prefix("precision: ") {
                    table.precision = p.parse().map_err(|e| Error::parse(src, e))?;
                }
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::parse(src, e))?;
        if headers.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
            return Err(Error::parse(src, format!("expected header `{CSV_HEADER}`")));
        }
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse(src, e))?;
            let status = &rec[7];
            let failure = match status {
                "ok" => None,
                s => Some(s.strip_prefix("failed: ").unwrap_or(s).to_string()),
            };
            let errors_pct = if failure.is_none() {
                let mut e = [0.0; 4];
                for i in 0..4 {
                    e[i] = rec[3 + i].parse().map_err(|err| Error::parse(src, err))?;
                }
                Some(e)
            } else {
                None
            };
            table.rows.push(ReportRow {
                scenario: rec[0].to_string(),
                mode: rec[1].parse()?,
                excitation: rec[2].to_string(),
                errors_pct,
                failure,
                result_file: (!rec[8].is_empty()).then(|| rec[8].to_string()),
            });
        }
        Ok(table)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }

    /// Grouped bars of the four percent errors per row.
    pub fn to_svg(&self) -> String {
        let ok: Vec<&ReportRow> = self.rows.iter().filter(|r| r.errors_pct.is_some()).collect();
        let max = ok
            .iter()
            .flat_map(|r| r.errors_pct.unwrap())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(1e-3);
        let scale = nice_ceiling(max);
        let (left, top, row_h, bar_w) = (260.0, 40.0, 44.0, 420.0);
        let height = top + row_h * ok.len() as f64 + 60.0;
        let width = left + bar_w + 40.0;
        let zero_x = left + bar_w / 2.0;
        let mut s = svg_open(width, height);
        let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14">{}</text>"#, left, xml_escape(&self.title));
        let _ = writeln!(
            s,
            r##"<line x1="{zero_x}" y1="{top}" x2="{zero_x}" y2="{}" stroke="#444"/>"##,
            height - 40.0
        );
        for (k, r) in ok.iter().enumerate() {
            let y0 = top + row_h * k as f64;
            let label = format!("{} / {} / {}", r.scenario, r.mode.label(), r.excitation);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
                left - 8.0,
                y0 + row_h / 2.0 + 4.0,
                xml_escape(&label)
            );
            for (i, v) in r.errors_pct.unwrap().iter().enumerate() {
                let w = v / scale * bar_w / 2.0;
                let x = if w < 0.0 { zero_x + w } else { zero_x };
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.1}" width="{:.2}" height="8" fill="{}"/>"#,
                    x,
                    y0 + 4.0 + 9.0 * i as f64,
                    w.abs(),
                    PALETTE[i]
                );
            }
        }
        let axis_y = height - 40.0;
        for (x, v) in [(left, -scale), (zero_x, 0.0), (left + bar_w, scale)] {
            let _ = writeln!(
                s,
                r#"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{v}%</text>"#,
                axis_y + 16.0
            );
        }
        for (i, name) in HealthVector::NAMES.iter().enumerate() {
            let x = left + 105.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="11">{name}</text>"#,
                axis_y + 26.0,
                PALETTE[i],
                x + 14.0,
                axis_y + 35.0
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

fn svg_open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Smallest 1, 2 or 5 × 10ⁿ not below `v`.
fn nice_ceiling(v: f64) -> f64 {
    let exp = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 5.0, 10.0] {
        if m * exp >= v {
            return m * exp;
        }
    }
    10.0 * exp
}

/// Step plot of current versus time, one panel per profile.
pub fn profiles_svg(profiles: &[(String, ExcitationProfile)]) -> String {
    let (panel_w, panel_h, left, gap) = (480.0, 140.0, 60.0, 30.0);
    let width = left + panel_w + 20.0;
    let height = gap + (panel_h + gap) * profiles.len() as f64;
    let mut s = svg_open(width, height);
    for (k, (label, p)) in profiles.iter().enumerate() {
        let y_top = gap + (panel_h + gap) * k as f64;
        let amp = p.max_abs_current().max(1e-9);
        let y_of = |i: f64| y_top + panel_h / 2.0 - i / amp * panel_h / 2.0;
        let x_of = |t: f64| left + t / p.horizon() * panel_w;
        let _ = writeln!(
            s,
            r#"<text x="{left}" y="{:.1}" font-size="12">{} (peak {:.2} A)</text>"#,
            y_top - 6.0,
            xml_escape(label),
            amp
        );
        let _ = writeln!(
            s,
            r##"<rect x="{left}" y="{y_top:.1}" width="{panel_w}" height="{panel_h}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ccc"/>"##,
            y_of(0.0),
            left + panel_w,
            y_of(0.0)
        );
        let mut d = String::new();
        for (j, i) in p.currents().iter().enumerate() {
            let t0 = j as f64 * p.segment_duration();
            let t1 = t0 + p.segment_duration();
            let cmd = if j == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2},{:.2} L{:.2},{:.2} ", x_of(t0), y_of(*i), x_of(t1), y_of(*i));
        }
        let _ = writeln!(s, r##"<path d="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##, d.trim_end());
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the table in each format to `dir` as `table.txt`, `table.csv` and
/// `errors.svg`. Returns the written paths.
pub fn emit_report(table: &ReportTable, dir: impl AsRef<Path>, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        let (name, body) = match f {
            ReportFormat::Text => ("table.txt", table.to_text()),
            ReportFormat::Csv => ("table.csv", table.to_csv()),
            ReportFormat::Svg => ("errors.svg", table.to_svg()),
        };
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
