//! Recursive multi-stride rollout. With no argument the exact solver plays
//! the model, so the rollout reproduces direct simulation; with a checkpoint
//! directory the trained network is used instead.
use std::path::Path;

use iconcl::dataset::Direction;
use iconcl::evalkit::forward_error;
use iconcl::flux::FluxSpec;
use iconcl::grf::{GrfConfig, GrfSampler};
use iconcl::inference::{recursive_rollout, ExactOperator, IconModel, OperatorModel, RolloutPlan};
use iconcl::model::load_checkpoint;
use iconcl::solver::{simulate, BASE_DT};

fn main() -> iconcl::Result<()> {
    let flux = FluxSpec::SinCos;
    let model: Box<dyn OperatorModel> = match std::env::args().nth(1) {
        Some(dir) => Box::new(IconModel::new(load_checkpoint(Path::new(&dir))?.params)),
        None => Box::new(ExactOperator { flux: flux.clone() }),
    };
    let u0 = GrfSampler::new(GrfConfig::default())?.sample(5)?;
    let truth = simulate(&u0, &flux, 0.5, BASE_DT, 20)?;
    let plan = RolloutPlan {
        t0: 0.1,
        dt: 0.01,
        max_stride: 0.05,
        horizon: 0.5,
        direction: Direction::Forward,
        examples_per_call: 5,
        seed: 0,
        cov_r: None,
    };
    let pred = recursive_rollout(model.as_ref(), &truth, &plan)?;
    for i in (0..pred.len()).step_by(5).chain([pred.len() - 1]) {
        let t = pred.time(i);
        let k = truth.index_of_time(t).expect("on the record lattice");
        println!(
            "t = {t:.2}  L1 error {:.3e}",
            forward_error(pred.frame(i), truth.frame(k))?
        );
    }
    Ok(())
}
