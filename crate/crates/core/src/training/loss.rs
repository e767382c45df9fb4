//! Sequence losses and their parameter gradients.
//!
//! Every function returns the loss of one sequence and, when `grad` is given,
//! adds `weight * dloss/dparams` to it.

use crate::dataset::{CondQoIPair, Direction, TrainingSequence};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::model::{backward, forward_cached, ModelInput, ModelParams, Real};
use crate::prompt::{build_prompt, build_training_prompt, Role};

fn require(seq: &TrainingSequence, orientation: Direction) -> Result<()> {
    if seq.orientation != orientation {
        return Err(Error::Argument(format!(
            "loss expects a {} sequence, got {}",
            orientation.as_str(),
            seq.orientation.as_str()
        )));
    }
    Ok(())
}

/// Mean over `i = 2..I` of the mean squared error at the `R_i` query block.
fn next_function_l2<T: Real>(
    params: &ModelParams<T>,
    seq: &TrainingSequence,
    weight: f64,
    grad: Option<&mut [T]>,
) -> Result<f64> {
    let stride = params.config.grid_stride;
    let prompt = build_training_prompt(seq, stride)?;
    let input = ModelInput::new(&params.config, &prompt)?;
    let (pred, cache) = forward_cached(params, &input)?;
    let terms = (seq.len() - 1) as f64;
    let mut loss = 0.0;
    let mut d_pred = Vec::with_capacity(pred.values.len());
    for (block, values) in pred.iter_blocks() {
        let target = &seq.pairs[block.pair_index - 1].qoi;
        let m = values.len() as f64;
        for (k, &p) in values.iter().enumerate() {
            let diff = p.as_f64() - target.values()[k * stride];
            loss += diff * diff / (m * terms);
            d_pred.push(T::from_f64(2.0 * diff / (m * terms) * weight));
        }
    }
    if let Some(g) = grad {
        backward(params, &input, &cache, &d_pred, Some(g))?;
    }
    Ok(loss)
}

/// Forward next-function loss on a forward-oriented sequence.
pub fn forward_l2_loss<T: Real>(
    params: &ModelParams<T>,
    seq: &TrainingSequence,
    weight: f64,
    grad: Option<&mut [T]>,
) -> Result<f64> {
    require(seq, Direction::Forward)?;
    next_function_l2(params, seq, weight, grad)
}

/// Same formula on a reverse-oriented (swapped) sequence.
pub fn reverse_l2_loss<T: Real>(
    params: &ModelParams<T>,
    seq: &TrainingSequence,
    weight: f64,
    grad: Option<&mut [T]>,
) -> Result<f64> {
    require(seq, Direction::Reverse)?;
    next_function_l2(params, seq, weight, grad)
}

fn coarse(f: &GridFunction, stride: usize) -> Result<GridFunction> {
    f.subsample(stride)
}

/// Reverse predictions pushed through a frozen forward surrogate built from
/// the other pairs of the sequence, compared with the original conditions.
///
/// Parameter gradients flow only through the reverse predictions.
pub fn consistency_loss<T: Real>(
    params: &ModelParams<T>,
    seq: &TrainingSequence,
    weight: f64,
    grad: Option<&mut [T]>,
) -> Result<f64> {
    consistency_loss_with(params, params, seq, weight, grad)
}

/// [`consistency_loss`] with an explicit parameter set for the surrogate.
pub fn consistency_loss_with<T: Real>(
    params: &ModelParams<T>,
    surrogate: &ModelParams<T>,
    seq: &TrainingSequence,
    weight: f64,
    grad: Option<&mut [T]>,
) -> Result<f64> {
    require(seq, Direction::Reverse)?;
    let stride = params.config.grid_stride;
    let prompt = build_training_prompt(seq, stride)?;
    let input = ModelInput::new(&params.config, &prompt)?;
    let (pred, cache) = forward_cached(params, &input)?;
    let terms = (seq.len() - 1) as f64;
    let forward_pairs = seq
        .pairs
        .iter()
        .map(|p| {
            CondQoIPair::new(
                coarse(&p.qoi, stride)?,
                coarse(&p.cond, stride)?,
                p.stride,
                p.operator_id,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut d_pred = Vec::with_capacity(pred.values.len());
    for (block, values) in pred.iter_blocks() {
        let i = block.pair_index - 1;
        let examples: Vec<CondQoIPair> = forward_pairs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| p.clone())
            .collect();
        let question = GridFunction::new(values.iter().map(|v| v.as_f64()).collect())?;
        let target = coarse(&seq.pairs[i].cond, stride)?;
        let frozen_prompt = build_prompt(&examples, &question)?;
        let frozen_input = ModelInput::new(&surrogate.config, &frozen_prompt)?;
        let (out, frozen_cache) = forward_cached(surrogate, &frozen_input)?;
        let m = out.values.len() as f64;
        let mut d_out = Vec::with_capacity(out.values.len());
        for (&o, &t) in out.values.iter().zip(target.values()) {
            let diff = o.as_f64() - t;
            loss += diff * diff / (m * terms);
            d_out.push(T::from_f64(2.0 * diff / (m * terms) * weight));
        }
        let d_values = backward(surrogate, &frozen_input, &frozen_cache, &d_out, None)?;
        let q = frozen_prompt
            .block(Role::Condition, examples.len() + 1)
            .expect("inference prompt ends with the question");
        d_pred.extend_from_slice(&d_values[q.range()]);
    }
    if let Some(g) = grad {
        backward(params, &input, &cache, &d_pred, Some(g))?;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            d_attn: 8,
            d_ff: 16,
            max_pairs: 3,
            grid_stride: 2,
            key_frequencies: 1,
        }
    }

    fn sequence(rng: &mut ChaCha8Rng, pairs: usize, orientation: Direction) -> TrainingSequence {
        let f = |rng: &mut ChaCha8Rng| {
            GridFunction::new((0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        TrainingSequence {
            pairs: (0..pairs)
                .map(|_| CondQoIPair::new(f(rng), f(rng), 0.1, 0).unwrap())
                .collect(),
            orientation,
        }
    }

    #[test]
    fn orientation_is_enforced() {
        let params: ModelParams<f64> = init_params(&tiny(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fwd = sequence(&mut rng, 3, Direction::Forward);
        assert!(forward_l2_loss(&params, &fwd, 1.0, None).is_ok());
        assert!(reverse_l2_loss(&params, &fwd, 1.0, None).is_err());
        assert!(consistency_loss(&params, &fwd, 1.0, None).is_err());
    }

    #[test]
    fn l2_loss_is_mean_squared_offset() {
        // A zero model predicts its output bias everywhere.
        let mut params: ModelParams<f64> = init_params(&tiny(), 0).unwrap();
        params.data.fill(0.0);
        let head_b = params.layout.head_b;
        params.data[head_b] = 0.3;
        let mut seq = sequence(&mut ChaCha8Rng::seed_from_u64(1), 3, Direction::Forward);
        for p in &mut seq.pairs {
            p.qoi = GridFunction::constant(8, 0.1);
        }
        let loss = forward_l2_loss(&params, &seq, 1.0, None).unwrap();
        assert!((loss - 0.04).abs() < 1e-12);
        // Single-term sum for I = 2.
        seq.pairs.truncate(2);
        let loss = forward_l2_loss(&params, &seq, 1.0, None).unwrap();
        assert!((loss - 0.04).abs() < 1e-12);
        let rev = seq.reversed().reversed();
        assert_eq!(forward_l2_loss(&params, &rev, 1.0, None).unwrap(), loss);
    }

    fn check_gradient(
        loss: impl Fn(&ModelParams<f64>, Option<&mut [f64]>) -> f64,
        params: &mut ModelParams<f64>,
    ) {
        let mut grad = vec![0.0; params.len()];
        loss(params, Some(&mut grad));
        let h = 1e-5;
        for idx in 0..params.len() {
            let orig = params.data[idx];
            params.data[idx] = orig + h;
            let up = loss(params, None);
            params.data[idx] = orig - h;
            let down = loss(params, None);
            params.data[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[idx]).abs() / (fd.abs() + grad[idx].abs()).max(1e-6);
            assert!(rel <= 1e-4, "param {idx}: fd {fd}, analytic {}", grad[idx]);
        }
    }

    #[test]
    fn l2_gradient_matches_finite_differences() {
        let mut params: ModelParams<f64> = init_params(&tiny(), 2).unwrap();
        let seq = sequence(&mut ChaCha8Rng::seed_from_u64(2), 3, Direction::Reverse);
        check_gradient(
            |p, g| reverse_l2_loss(p, &seq, 0.5, g).unwrap() * 0.5,
            &mut params,
        );
    }

    #[test]
    fn consistency_gradient_blocks_the_surrogate() {
        let mut params: ModelParams<f64> = init_params(&tiny(), 3).unwrap();
        let surrogate = params.clone();
        let seq = sequence(&mut ChaCha8Rng::seed_from_u64(3), 3, Direction::Reverse);
        // Finite differences move only the reverse-prediction parameters.
        check_gradient(
            |p, g| consistency_loss_with(p, &surrogate, &seq, 1.0, g).unwrap(),
            &mut params,
        );
        let mut a = vec![0.0; params.len()];
        let mut b = vec![0.0; params.len()];
        let la = consistency_loss(&params, &seq, 1.0, Some(&mut a)).unwrap();
        let lb = consistency_loss_with(&params, &surrogate, &seq, 1.0, Some(&mut b)).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
    }
}
