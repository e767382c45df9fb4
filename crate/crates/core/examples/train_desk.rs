//! Desk-scale training run on freshly simulated operators.
//!
//! Usage: `train_desk [steps] [checkpoint_dir]`
use std::path::PathBuf;

use iconcl::dataset::{generate_operator_datasets, sample_training_fluxes, GenerationConfig};
use iconcl::model::ModelConfig;
use iconcl::training::{smoothed_forward_loss, train, TrainConfig, TrainOptions};

fn main() -> iconcl::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("iconcl_train_example"));

    let data =
        generate_operator_datasets(&sample_training_fluxes(20, 1), &GenerationConfig::desk(), 1);
    let cfg = TrainConfig {
        total_steps: steps,
        log_every: 1,
        checkpoint_every: 0,
        ..TrainConfig::desk()
    };
    let outcome = train(
        &cfg,
        &ModelConfig::desk(),
        &data,
        &TrainOptions {
            out_dir: Some(out.clone()),
            resume: false,
        },
    )?;
    let smooth = smoothed_forward_loss(&outcome.history, 25);
    for (step, loss) in smooth.iter().step_by((steps / 10).max(1)) {
        println!("step {step:>6}  forward loss {loss:.5}");
    }
    println!("loss.csv and checkpoint/ written to {}", out.display());
    Ok(())
}
