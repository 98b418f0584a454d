//! Runs the bundled experiment plan (three degradation levels, four
//! excitations, both estimation modes) and prints the error table. Output
//! files go to a directory given as the first argument, or `plan-output`.
//!
//! ```text
//! cargo run --release --example experiment_plan -- /tmp/plan-output
//! ```

use std::path::{Path, PathBuf};

use refvolt::harness::{run_plan, ExperimentPlan};

fn main() -> refvolt::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "plan-output".into());
    let mut plan = ExperimentPlan::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/plans/default_plan.toml"))?;
    plan.output_dir = Some(out);

    let start = std::time::Instant::now();
    let outcome = run_plan(&plan)?;
    print!("{}", outcome.table.to_text());
    println!(
        "\n{} cells, {} failed, {:.1?}; results in {}",
        outcome.table.rows.len(),
        outcome.table.failures(),
        start.elapsed(),
        outcome.output_dir.display()
    );
    Ok(())
}
