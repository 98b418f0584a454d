use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use refvolt::design::{design_excitation, DesignSpec, PsoConfig};
use refvolt::estimation::{estimate_with, EstimationMode, EstimationProblem, LmOptions, ModelKind};
use refvolt::fisher::Criterion;
use refvolt::harness::{
    emit_report, run_monte_carlo, run_plan, ExperimentPlan, MonteCarloCell, ReportFormat, ReportTable, OUTPUT_DIR_ENV,
};
use refvolt::params::{apply_degradation, load_parameter_set, DegradationScenario, HealthVector, ParameterSet};
use refvolt::sim::{measure, CellState, ExcitationProfile, Fidelity, Provenance, UncertaintySpec, VoltageTrajectory};
use refvolt::{Error, Result};

#[derive(Parser)]
#[command(name = "refvolt", version, about = "Battery health estimation with reference voltage trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a voltage trajectory for a profile.
    Simulate {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        sample_period: f64,
        #[arg(long, default_value_t = 0.0)]
        soc0: f64,
        /// Shell-resolved plant (the default).
        #[arg(long, conflicts_with = "model")]
        plant: bool,
        /// Reduced model instead of the plant.
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        /// Four comma-separated ratios applied to the health parameters.
        #[arg(long, value_parser = parse_four)]
        degradation: Option<[f64; 4]>,
        /// Uncertainty TOML (fields of the `[uncertainty]` plan table).
        #[arg(long)]
        uncertainty: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Design an optimal excitation by particle swarm.
    DesignExcitation {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "d")]
        criterion: Criterion,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        swarm: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Estimate the health vector from measured trajectories.
    Estimate {
        #[arg(long)]
        mode: EstimationMode,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        sample_period: f64,
        #[arg(long, default_value_t = 0.0)]
        soc0: f64,
        #[arg(long)]
        aged: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// True health: four comma-separated values or an aged parameter file.
        #[arg(long)]
        truth: Option<String>,
        #[arg(long, value_enum, default_value_t = EstimationModelArg::Spme)]
        model: EstimationModelArg,
        #[arg(long)]
        multi_start: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every cell of an experiment plan.
    RunPlan {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, env = OUTPUT_DIR_ENV)]
        output_dir: Option<PathBuf>,
    },
    /// Monte Carlo check of the predicted error statistics.
    MonteCarlo {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a report table CSV as text, CSV and SVG.
    Report {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values = ["text", "csv", "svg"])]
        format: Vec<FormatArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ocp,
    Spme,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimationModelArg {
    Ocp,
    Spme,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
    Svg,
}

fn parse_four(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| "expected four comma-separated values".to_string())
}

fn load_params(path: &Option<PathBuf>) -> Result<ParameterSet> {
    match path {
        Some(p) => load_parameter_set(p),
        None => Ok(ParameterSet::bundled_default()),
    }
}

/// `out`, or `name` inside `$REFVOLT_OUTPUT_DIR` (current directory if unset).
fn output_path(out: Option<PathBuf>, name: &str) -> PathBuf {
    out.unwrap_or_else(|| {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_default()
            .join(name)
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            params,
            profile,
            sample_period,
            soc0,
            plant: _,
            model,
            degradation,
            uncertainty,
            seed,
            out,
        } => {
            let mut params = load_params(&params)?;
            if let Some(r) = degradation {
                params = apply_degradation(&params, &DegradationScenario::new("cli", r)?)?;
            }
            let profile = ExcitationProfile::read_csv(&profile, sample_period)?;
            let unc = match uncertainty {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    toml::from_str::<UncertaintySpec>(&text).map_err(|e| Error::Parse {
                        path,
                        message: e.message().to_string(),
                    })?
                }
                None => UncertaintySpec::none(),
            }
            .with_seed(seed);
            let fidelity = match model {
                Some(ModelArg::Ocp) => Fidelity::Ocp,
                Some(ModelArg::Spme) => Fidelity::Spme,
                None => Fidelity::default(),
            };
            let state = CellState::equilibrium(&params, soc0)?;
            let traj = measure(&params, &profile, &state, fidelity, &unc)?;
            let path = output_path(out, "trajectory.csv");
            write_text(&path, &traj.to_csv_string())?;
            eprintln!("wrote {} samples to {}", traj.len(), path.display());
        }
        Command::DesignExcitation {
            params,
            criterion,
            seed,
            swarm,
            iterations,
            out,
            history,
        } => {
            let params = load_params(&params)?;
            let spec = DesignSpec::for_params(&params, criterion);
            let mut pso = PsoConfig {
                seed,
                ..PsoConfig::default()
            };
            if let Some(n) = swarm {
                pso.swarm_size = n;
            }
            if let Some(n) = iterations {
                pso.max_iterations = n;
            }
            let result = design_excitation(&spec, &pso, &params)?;
            let path = output_path(out, "profile.csv");
            write_text(&path, &result.profile.to_csv_string())?;
            if let Some(h) = history {
                write_text(&h, &result.history_csv())?;
            }
            println!("{} objective {:.6e}", criterion.label(), result.objective);
            if let Some(msg) = &result.spme_check.message {
                eprintln!("warning: SPMe re-verification failed: {msg}");
            }
        }
        Command::Estimate {
            mode,
            params,
            profile,
            sample_period,
            soc0,
            aged,
            reference,
            truth,
            model,
            multi_start,
            out,
        } => {
            let params = load_params(&params)?;
            let profile = ExcitationProfile::read_csv(&profile, sample_period)?;
            let aged = VoltageTrajectory::read_csv(&aged, Provenance::PlantMeasured)?;
            let reference = reference
                .map(|p| VoltageTrajectory::read_csv(p, Provenance::PlantMeasured))
                .transpose()?;
            let model = match model {
                EstimationModelArg::Ocp => ModelKind::Ocp,
                EstimationModelArg::Spme => ModelKind::Spme,
            };
            let problem = EstimationProblem::new(mode, model, &params, &profile, soc0, aged, reference)?;
            let options = LmOptions {
                multi_start: multi_start.then(Default::default),
                ..LmOptions::default()
            };
            let mut result = estimate_with(&problem, &options)?;
            if let Some(t) = truth {
                let truth = match parse_four(&t) {
                    Ok(v) => HealthVector::new(v)?,
                    Err(_) => load_parameter_set(&t)?.health(),
                };
                result = result.with_truth(&truth);
            }
            let path = output_path(out, "result.json");
            ensure_parent(&path)?;
            result.write_json(&path)?;
            println!("theta = {:?}", result.theta.to_array());
            if let Some(e) = result.errors_pct {
                println!("errors % = {e:?}");
            }
        }
        Command::RunPlan { plan, output_dir } => {
            let mut plan = ExperimentPlan::load(&plan)?;
            if let Some(d) = output_dir {
                plan.output_dir = Some(std::path::absolute(&d).unwrap_or(d));
            }
            let outcome = run_plan(&plan)?;
            print!("{}", outcome.table.to_text());
            eprintln!("artifacts in {}", outcome.output_dir.display());
        }
        Command::MonteCarlo { plan, replicates, out } => {
            let plan = ExperimentPlan::load(&plan)?;
            let cell = MonteCarloCell::from_plan(&plan)?;
            let summary = run_monte_carlo(&cell, replicates.unwrap_or(plan.monte_carlo.replicates))?;
            let json = summary.to_json()?;
            write_text(&output_path(out, "monte_carlo.json"), &(json + "\n"))?;
            for i in 0..4 {
                println!(
                    "{:<11} mean {:+.3e} (predicted {:+.3e})  var {:.3e} (predicted {:.3e})",
                    HealthVector::NAMES[i],
                    summary.mean_error[i],
                    summary.prediction.mean[i],
                    summary.covariance[i][i],
                    summary.prediction.covariance[i][i]
                );
            }
        }
        Command::Report { table, out_dir, format } => {
            let t = ReportTable::read_csv(&table)?;
            let dir = out_dir.unwrap_or_else(|| output_path(None, "report"));
            let formats: Vec<ReportFormat> = format
                .iter()
                .map(|f| match f {
                    FormatArg::Text => ReportFormat::Text,
                    FormatArg::Csv => ReportFormat::Csv,
                    FormatArg::Svg => ReportFormat::Svg,
                })
                .collect();
            for p in emit_report(&t, &dir, &formats)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
