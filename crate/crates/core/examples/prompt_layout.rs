//! Token layout and block-causal attention mask of a small training prompt.
use iconcl::dataset::{CondQoIPair, Direction, TrainingSequence};
use iconcl::grid::GridFunction;
use iconcl::model::{attention_mask, AttentionPlan};
use iconcl::prompt::{build_training_prompt, Role};

fn main() -> iconcl::Result<()> {
    let f = |s: f64| GridFunction::from_cell_averages(4, |x| (x + s).sin());
    let pairs = (0..3)
        .map(|i| CondQoIPair::new(f(i as f64)?, f(i as f64 + 0.5)?, 0.1, 0))
        .collect::<iconcl::Result<Vec<_>>>()?;
    let seq = TrainingSequence {
        pairs,
        orientation: Direction::Forward,
    };
    let prompt = build_training_prompt(&seq, 2)?;
    let labels: Vec<String> = prompt
        .tokens
        .iter()
        .map(|t| {
            let r = match t.role {
                Role::Condition => "C",
                Role::Qoi => "Q",
                Role::Query => "R",
            };
            format!("{r}{}", t.pair_index)
        })
        .collect();
    println!("{} tokens", prompt.len());
    for b in &prompt.blocks {
        println!("{:?} {} -> tokens {:?}", b.role, b.pair_index, b.range());
    }
    let mask = attention_mask(&prompt.blocks);
    println!(
        "\n      {}",
        labels.iter().map(|l| format!("{l:>3}")).collect::<String>()
    );
    for (i, l) in labels.iter().enumerate() {
        let row: String = mask
            .row(i)
            .iter()
            .map(|&v| if v { "  x" } else { "  ." })
            .collect();
        println!("{l:>5} {row}");
    }
    let plan = AttentionPlan::from_blocks(&prompt.blocks)?;
    println!(
        "\ncontext tokens: {}, plan matches mask: {}",
        plan.n_ctx,
        plan.to_mask() == mask
    );
    Ok(())
}
