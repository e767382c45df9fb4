use iconcl::dataset::{CondQoIPair, Direction, TrainingSequence};
use iconcl::grid::GridFunction;
use iconcl::model::{
    forward, init_params, load_checkpoint, predict, save_checkpoint, Checkpoint, ModelConfig,
    ModelParams,
};
use iconcl::prompt::{build_prompt, build_training_prompt};
use proptest::prelude::*;

fn small() -> ModelConfig {
    ModelConfig {
        layers: 2,
        heads: 2,
        d_model: 16,
        d_attn: 16,
        d_ff: 32,
        max_pairs: 4,
        grid_stride: 1,
        key_frequencies: 2,
    }
}

fn function(n: usize) -> impl Strategy<Value = GridFunction> {
    prop::collection::vec(-2.0f64..2.0, n).prop_map(|v| GridFunction::new(v).unwrap())
}

fn pairs(n: usize, count: std::ops::Range<usize>) -> impl Strategy<Value = Vec<CondQoIPair>> {
    prop::collection::vec((function(n), function(n)), count).prop_map(|v| {
        v.into_iter()
            .map(|(c, q)| CondQoIPair::new(c, q, 0.1, 0).unwrap())
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn single_and_double_precision_agree(p in pairs(6, 2..5), seed in 0u64..100) {
        let p32: ModelParams<f32> = init_params(&small(), seed).unwrap();
        let p64: ModelParams<f64> = p32.cast();
        let seq = TrainingSequence { pairs: p, orientation: Direction::Forward };
        let prompt = build_training_prompt(&seq, 1).unwrap();
        let a = forward(&p32, &prompt).unwrap();
        let b = forward(&p64, &prompt).unwrap();
        prop_assert_eq!(a.values.len(), (seq.len() - 1) * 6);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((*x as f64 - y).abs() <= 1e-4 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn appending_pairs_keeps_earlier_predictions(p in pairs(5, 3..5), seed in 0u64..100) {
        let params: ModelParams<f32> = init_params(&small(), seed).unwrap();
        let full = TrainingSequence { pairs: p.clone(), orientation: Direction::Forward };
        let short = TrainingSequence { pairs: p[..2].to_vec(), orientation: Direction::Forward };
        let a = forward(&params, &build_training_prompt(&full, 1).unwrap()).unwrap();
        let b = forward(&params, &build_training_prompt(&short, 1).unwrap()).unwrap();
        prop_assert_eq!(&a.values[..5], &b.values[..]);
    }

    #[test]
    fn inference_prompt_yields_one_question_sized_vector(p in pairs(7, 1..4), q in function(7)) {
        let params: ModelParams<f32> = init_params(&small(), 1).unwrap();
        let out = predict(&params, &build_prompt(&p, &q).unwrap()).unwrap();
        prop_assert_eq!(out.len(), 7);
        prop_assert!(out.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn checkpointed_model_predicts_identically() {
    let params: ModelParams<f32> = init_params(&small(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(
        &Checkpoint {
            params: params.clone(),
            step: 17,
            moments: None,
        },
        dir.path(),
    )
    .unwrap();
    let back = load_checkpoint(dir.path()).unwrap();
    assert_eq!(back.step, 17);
    let q = GridFunction::from_cell_averages(10, |x| x.sin()).unwrap();
    let ex = CondQoIPair::new(q.clone(), q.map(|v| 2.0 * v), 0.1, 0).unwrap();
    let prompt = build_prompt(&[ex], &q).unwrap();
    assert_eq!(
        predict(&params, &prompt).unwrap(),
        predict(&back.params, &prompt).unwrap()
    );
}
