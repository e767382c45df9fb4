//! Tokenized condition / QoI / query sequences.
//!
//! Every function becomes one token per (retained) grid cell carrying the cell
//! key `x` and the value there. Query tokens carry only the key at which a QoI
//! prediction is read out.
//!
//! Training layout for `I` pairs:
//!
//! ```text
//! C1 Q1 | C2 R2 Q2 | C3 R3 Q3 | ... | CI RI QI
//! ```
//!
//! Inference layout with `J` examples and one question:
//!
//! ```text
//! C1 Q1 | ... | CJ QJ | C(J+1) R(J+1)
//! ```

use serde::{Deserialize, Serialize};

use crate::dataset::{CondQoIPair, TrainingSequence};
use crate::error::{Error, Result};
use crate::grid::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Condition,
    Qoi,
    Query,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Condition, Role::Qoi, Role::Query];

    pub fn index(self) -> usize {
        match self {
            Role::Condition => 0,
            Role::Qoi => 1,
            Role::Query => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Token {
    pub key: f64,
    pub value: f64,
    pub role: Role,
    /// 1-based index of the pair the token belongs to.
    pub pair_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub role: Role,
    pub pair_index: usize,
    pub start: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSequence {
    pub tokens: Vec<Token>,
    pub blocks: Vec<Block>,
}

impl PromptSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn query_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.role == Role::Query)
    }

    pub fn block(&self, role: Role, pair_index: usize) -> Option<&Block> {
        self.blocks
            .iter()
            .find(|b| b.role == role && b.pair_index == pair_index)
    }

    /// Largest pair index present.
    pub fn num_pairs(&self) -> usize {
        self.blocks.iter().map(|b| b.pair_index).max().unwrap_or(0)
    }

    fn push_function(
        &mut self,
        f: &GridFunction,
        grid_stride: usize,
        role: Role,
        pair_index: usize,
    ) {
        let start = self.tokens.len();
        for i in (0..f.len()).step_by(grid_stride) {
            self.tokens.push(Token {
                key: f.key(i),
                value: if role == Role::Query {
                    0.0
                } else {
                    f.values()[i]
                },
                role,
                pair_index,
            });
        }
        self.blocks.push(Block {
            role,
            pair_index,
            start,
            len: self.tokens.len() - start,
        });
    }

    /// Overwrites the values of a condition or QoI block.
    pub fn set_block_values(
        &mut self,
        role: Role,
        pair_index: usize,
        values: &[f64],
    ) -> Result<()> {
        let block = *self
            .block(role, pair_index)
            .ok_or_else(|| Error::Argument(format!("no {role:?} block for pair {pair_index}")))?;
        if role == Role::Query {
            return Err(Error::Argument("query tokens carry no values".into()));
        }
        if values.len() != block.len {
            return Err(Error::Shape {
                expected: block.len,
                actual: values.len(),
            });
        }
        for (t, &v) in self.tokens[block.range()].iter_mut().zip(values) {
            t.value = v;
        }
        Ok(())
    }
}

fn check_grid(f: &GridFunction, n: usize, grid_stride: usize) -> Result<()> {
    if f.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: f.len(),
        });
    }
    if grid_stride == 0 || !n.is_multiple_of(grid_stride) {
        return Err(Error::Argument(format!(
            "grid stride {grid_stride} does not divide {n} cells"
        )));
    }
    Ok(())
}

/// Inference prompt `C1 Q1 ... CJ QJ C(J+1) R(J+1)` over every grid cell.
pub fn build_prompt(examples: &[CondQoIPair], question: &GridFunction) -> Result<PromptSequence> {
    build_prompt_strided(examples, question, 1)
}

/// Inference prompt keeping every `grid_stride`-th cell of each function.
pub fn build_prompt_strided(
    examples: &[CondQoIPair],
    question: &GridFunction,
    grid_stride: usize,
) -> Result<PromptSequence> {
    if examples.is_empty() {
        return Err(Error::Argument(
            "a prompt needs at least one example".into(),
        ));
    }
    let n = question.len();
    let mut prompt = PromptSequence {
        tokens: Vec::new(),
        blocks: Vec::new(),
    };
    for (j, ex) in examples.iter().enumerate() {
        check_grid(&ex.cond, n, grid_stride)?;
        check_grid(&ex.qoi, n, grid_stride)?;
        prompt.push_function(&ex.cond, grid_stride, Role::Condition, j + 1);
        prompt.push_function(&ex.qoi, grid_stride, Role::Qoi, j + 1);
    }
    check_grid(question, n, grid_stride)?;
    let q = examples.len() + 1;
    prompt.push_function(question, grid_stride, Role::Condition, q);
    prompt.push_function(question, grid_stride, Role::Query, q);
    Ok(prompt)
}

/// Training prompt `C1 Q1 C2 R2 Q2 ... CI RI QI`.
pub fn build_training_prompt(seq: &TrainingSequence, grid_stride: usize) -> Result<PromptSequence> {
    if seq.pairs.len() < 2 {
        return Err(Error::Argument(
            "a training sequence needs at least two pairs".into(),
        ));
    }
    let n = seq.pairs[0].cond.len();
    let mut prompt = PromptSequence {
        tokens: Vec::new(),
        blocks: Vec::new(),
    };
    for (j, p) in seq.pairs.iter().enumerate() {
        check_grid(&p.cond, n, grid_stride)?;
        check_grid(&p.qoi, n, grid_stride)?;
        let idx = j + 1;
        prompt.push_function(&p.cond, grid_stride, Role::Condition, idx);
        if idx >= 2 {
            prompt.push_function(&p.qoi, grid_stride, Role::Query, idx);
        }
        prompt.push_function(&p.qoi, grid_stride, Role::Qoi, idx);
    }
    Ok(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Direction;

    fn pair(n: usize, v: f64) -> CondQoIPair {
        CondQoIPair::new(
            GridFunction::constant(n, v),
            GridFunction::constant(n, v + 1.0),
            0.1,
            0,
        )
        .unwrap()
    }

    #[test]
    fn training_layout_token_count() {
        let seq = TrainingSequence {
            pairs: (0..6).map(|i| pair(100, i as f64)).collect(),
            orientation: Direction::Forward,
        };
        let p = build_training_prompt(&seq, 1).unwrap();
        assert_eq!(p.len(), 1700);
        assert_eq!(p.query_blocks().count(), 5);
        let roles: Vec<(Role, usize)> = p.blocks.iter().map(|b| (b.role, b.pair_index)).collect();
        assert_eq!(
            &roles[..5],
            &[
                (Role::Condition, 1),
                (Role::Qoi, 1),
                (Role::Condition, 2),
                (Role::Query, 2),
                (Role::Qoi, 2),
            ]
        );
        let desk = build_training_prompt(
            &TrainingSequence {
                pairs: seq.pairs[..4].to_vec(),
                orientation: Direction::Forward,
            },
            2,
        )
        .unwrap();
        assert_eq!(desk.len(), 550);
    }

    #[test]
    fn minimal_inference_prompt() {
        let p = build_prompt(&[pair(10, 0.0)], &GridFunction::constant(10, 3.0)).unwrap();
        let roles: Vec<(Role, usize)> = p.blocks.iter().map(|b| (b.role, b.pair_index)).collect();
        assert_eq!(
            roles,
            vec![
                (Role::Condition, 1),
                (Role::Qoi, 1),
                (Role::Condition, 2),
                (Role::Query, 2),
            ]
        );
        let query = p.block(Role::Query, 2).unwrap();
        assert!(p.tokens[query.range()].iter().all(|t| t.value == 0.0));
        assert!((p.tokens[query.range()][3].key - 0.3).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let err = build_prompt(&[pair(10, 0.0)], &GridFunction::constant(12, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        assert!(build_prompt(&[], &GridFunction::constant(10, 0.0)).is_err());
        assert!(
            build_prompt_strided(&[pair(10, 0.0)], &GridFunction::constant(10, 0.0), 3).is_err()
        );
    }
}
