//! Runs the scenario × excitation × mode study, Monte Carlo checks of the
//! predicted error statistics, and report emission.
//!
//! Layout of a plan's output directory:
//!
//! ```text
//! plan.toml                      plan as executed, without its output directory
//! profiles/<exc>.csv             excitation profiles
//! profiles/<exc>_design.json     swarm result for designed profiles
//! profiles/<exc>_history.csv     best objective per swarm iteration
//! trajectories/v0_<exc>.csv      BOL measurement
//! trajectories/v1_<scen>_<exc>.csv  aged measurement
//! results/<scen>_<exc>_<mode>.json  estimation result
//! report/table.txt, table.csv, errors.svg, profiles.svg
//! ```

mod monte_carlo;
mod plan;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{estimate_with, EstimationMode, EstimationProblem, EstimationResult};
use crate::params::{apply_degradation, HealthVector, ParameterSet};
use crate::sim::{measure, CellState, ExcitationProfile, VoltageTrajectory};

pub use monte_carlo::{run_monte_carlo, MonteCarloCell, MonteCarloSummary};
pub use plan::{
    derive_seed, streams, DesignOverrides, ExcitationSource, ExperimentPlan, MonteCarloSettings, OUTPUT_DIR_ENV,
};
pub use report::{emit_report, profiles_svg, ReportFormat, ReportRow, ReportTable};

/// Persisted record of one estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub scenario: String,
    pub excitation: String,
    pub truth: HealthVector,
    pub result: EstimationResult,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub table: ReportTable,
    pub output_dir: PathBuf,
}

/// File-name-safe form of a label: `%` becomes `pct`, other punctuation `_`.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .flat_map(|c| match c {
            '%' => "pct".chars().collect::<Vec<_>>(),
            c if c.is_ascii_alphanumeric() || c == '-' => vec![c.to_ascii_lowercase()],
            _ => vec!['_'],
        })
        .collect()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

struct Excitation {
    label: String,
    /// Profile and BOL measurement, or the reason they are unavailable.
    data: std::result::Result<(ExcitationProfile, VoltageTrajectory), String>,
}

/// Executes every cell of the plan and writes all artifacts. Cell failures are
/// recorded in the table; only I/O and setup problems abort.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanOutcome> {
    plan.validate()?;
    let out = plan.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let echo = ExperimentPlan {
        output_dir: None,
        ..plan.clone()
    };
    write(&out.join("plan.toml"), echo.to_toml()?)?;
    let bol = plan.load_params()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.threads)
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;

    pool.install(|| run_cells(plan, &bol, &out))
}

fn run_cells(plan: &ExperimentPlan, bol: &ParameterSet, out: &Path) -> Result<PlanOutcome> {
    let bol_state = CellState::equilibrium(bol, plan.soc0)?;
    let mut excitations = Vec::with_capacity(plan.excitations.len());
    for (e, source) in plan.excitations.iter().enumerate() {
        let label = source.label();
        let stem = slug(&label);
        let data = match plan.build_excitation(e, bol) {
            Ok((profile, design)) => {
                write(&out.join(format!("profiles/{stem}.csv")), profile.to_csv_string())?;
                if let Some(d) = &design {
                    write(&out.join(format!("profiles/{stem}_design.json")), to_json(d)?)?;
                    write(&out.join(format!("profiles/{stem}_history.csv")), d.history_csv())?;
                }
                let unc = plan
                    .uncertainty
                    .with_seed(derive_seed(plan.master_seed, streams::reference(e)));
                match measure(bol, &profile, &bol_state, plan.plant, &unc) {
                    Ok(v0) => {
                        write(&out.join(format!("trajectories/v0_{stem}.csv")), v0.to_csv_string())?;
                        Ok((profile, v0))
                    }
                    Err(err) => Err(format!("BOL measurement: {err}")),
                }
            }
            Err(err) => Err(format!("excitation: {err}")),
        };
        excitations.push(Excitation { label, data });
    }

    let cells: Vec<(usize, usize)> = (0..plan.scenarios.len())
        .flat_map(|s| (0..plan.excitations.len()).map(move |e| (s, e)))
        .collect();
    let outcomes: Vec<Result<Vec<ReportRow>>> = cells
        .par_iter()
        .map(|&(s, e)| run_cell(plan, bol, out, s, &excitations[e], e))
        .collect();

    let mut by_cell = std::collections::HashMap::new();
    for (cell, rows) in cells.iter().zip(outcomes) {
        by_cell.insert(*cell, rows?);
    }
    let mut table = ReportTable::new("Health parameter estimation error (%)");
    for (s, _) in plan.scenarios.iter().enumerate() {
        for m in &plan.modes {
            for e in 0..plan.excitations.len() {
                let row = by_cell[&(s, e)]
                    .iter()
                    .find(|r| r.mode == *m)
                    .expect("each cell yields one row per mode")
                    .clone();
                table.rows.push(row);
            }
        }
    }

    let report_dir = out.join("report");
    emit_report(&table, &report_dir, &[ReportFormat::Text, ReportFormat::Csv, ReportFormat::Svg])?;
    let profiles: Vec<(String, ExcitationProfile)> = excitations
        .iter()
        .filter_map(|x| x.data.as_ref().ok().map(|(p, _)| (x.label.clone(), p.clone())))
        .collect();
    write(&report_dir.join("profiles.svg"), profiles_svg(&profiles))?;
    Ok(PlanOutcome {
        table,
        output_dir: out.to_path_buf(),
    })
}

/// Rows for every mode of one (scenario, excitation) pair.
fn run_cell(
    plan: &ExperimentPlan,
    bol: &ParameterSet,
    out: &Path,
    s: usize,
    excitation: &Excitation,
    e: usize,
) -> Result<Vec<ReportRow>> {
    let scenario = &plan.scenarios[s];
    let failed = |reason: String| -> Vec<ReportRow> {
        plan.modes
            .iter()
            .map(|m| ReportRow {
                scenario: scenario.label.clone(),
                mode: *m,
                excitation: excitation.label.clone(),
                errors_pct: None,
                failure: Some(reason.clone()),
                result_file: None,
            })
            .collect()
    };
    let (profile, v0) = match &excitation.data {
        Ok(d) => d,
        Err(reason) => return Ok(failed(reason.clone())),
    };
    let aged = match apply_degradation(bol, scenario) {
        Ok(p) => p,
        Err(err) => return Ok(failed(format!("degradation: {err}"))),
    };
    let truth = aged.health();
    let unc = plan
        .uncertainty
        .with_seed(derive_seed(plan.master_seed, streams::aged(s, e)));
    let v1 = match CellState::equilibrium(&aged, plan.soc0).and_then(|st| measure(&aged, profile, &st, plan.plant, &unc)) {
        Ok(v) => v,
        Err(err) => return Ok(failed(format!("aged measurement: {err}"))),
    };
    let (scen_slug, exc_slug) = (slug(&scenario.label), slug(&excitation.label));
    write(
        &out.join(format!("trajectories/v1_{scen_slug}_{exc_slug}.csv")),
        v1.to_csv_string(),
    )?;

    let mut rows = Vec::with_capacity(plan.modes.len());
    for mode in &plan.modes {
        let reference = (*mode == EstimationMode::Reference).then(|| v0.clone());
        let attempt = EstimationProblem::new(*mode, plan.estimation_model, bol, profile, plan.soc0, v1.clone(), reference)
            .and_then(|p| estimate_with(&p, &plan.estimation));
        let row = match attempt {
            Ok(result) => {
                let result = result.with_truth(&truth);
                let rel = format!("results/{scen_slug}_{exc_slug}_{}.json", mode.label());
                let record = CellRecord {
                    scenario: scenario.label.clone(),
                    excitation: excitation.label.clone(),
                    truth,
                    result: result.clone(),
                };
                write(&out.join(&rel), to_json(&record)?)?;
                ReportRow {
                    scenario: scenario.label.clone(),
                    mode: *mode,
                    excitation: excitation.label.clone(),
                    errors_pct: result.errors_pct,
                    failure: (!result.converged).then(|| format!("not converged: {}", result.termination)),
                    result_file: Some(rel),
                }
            }
            Err(err) => ReportRow {
                scenario: scenario.label.clone(),
                mode: *mode,
                excitation: excitation.label.clone(),
                errors_pct: None,
                failure: Some(format!("estimation: {err}")),
                result_file: None,
            },
        };
        rows.push(row);
    }
    Ok(rows)
}
