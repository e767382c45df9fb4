//! Error against the number of in-context examples over a coefficient grid.
//!
//! Usage: `grid_study <checkpoint_dir> [k] [instances]`
use std::path::Path;

use iconcl::dataset::{coefficient_grid, generate_operator_datasets, GenerationConfig};
use iconcl::evalkit::{grid_eval, GridEvalConfig};
use iconcl::inference::IconModel;
use iconcl::model::load_checkpoint;

fn main() -> iconcl::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next() else {
        eprintln!(
            "usage: grid_study <checkpoint_dir> [k] [instances]  (see the train_desk example)"
        );
        std::process::exit(1);
    };
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let instances: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let params = load_checkpoint(Path::new(&dir))?.params;
    let max_examples = params.config.max_pairs - 1;
    let model = IconModel::new(params);
    let data = generate_operator_datasets(&coefficient_grid(k), &GenerationConfig::desk(), 99);
    let report = grid_eval(
        &model,
        &data,
        &GridEvalConfig {
            instances,
            max_examples,
            seed: 0,
        },
    )?;
    println!(
        "{} operators, {} skipped",
        report.rows.len(),
        report.skipped.len()
    );
    println!("{:>3} {:>12} {:>12}", "J", "forward", "reverse");
    for j in 0..report.forward.len() {
        println!(
            "{:>3} {:>12.5} {:>12.5}",
            report.forward.abscissa[j], report.forward.mean_error[j], report.reverse.mean_error[j]
        );
    }
    Ok(())
}
