use crate::error::{Error, Result};
use crate::prompt::{Block, Role};

/// Dense visibility matrix; `get(i, j)` is true when token `i` attends to `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    n: usize,
    visible: Vec<bool>,
}

impl Mask {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.visible[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.visible[i * self.n..(i + 1) * self.n]
    }
}

/// Condition and QoI tokens of pair `i` see every condition and QoI of earlier
/// pairs plus `C_i` (and `Q_i` for QoI tokens). Query tokens of pair `i` see the
/// same context as `C_i` plus themselves, and are seen by nobody else.
pub fn attention_mask(blocks: &[Block]) -> Mask {
    let n = blocks.iter().map(|b| b.start + b.len).max().unwrap_or(0);
    let mut visible = vec![false; n * n];
    for row_block in blocks {
        let i = row_block.pair_index;
        for col_block in blocks {
            let j = col_block.pair_index;
            let sees = match (row_block.role, col_block.role) {
                (_, Role::Query) => false,
                (_, _) if j < i => true,
                (_, Role::Condition) => j == i,
                (Role::Qoi, Role::Qoi) => j == i,
                _ => false,
            };
            if sees {
                for r in row_block.range() {
                    visible[r * n + col_block.start..r * n + col_block.start + col_block.len]
                        .fill(true);
                }
            }
        }
        if row_block.role == Role::Query {
            for r in row_block.range() {
                visible[r * n + r] = true;
            }
        }
    }
    Mask { n, visible }
}

/// Compact form of a mask in which every token sees a prefix of the context
/// stream (all non-query tokens, in order) and query tokens also see themselves.
///
/// Rows are reordered so context tokens come first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionPlan {
    /// `order[r]` is the original index of reordered row `r`.
    pub order: Vec<usize>,
    /// Number of context (non-query) tokens; they occupy rows `0..n_ctx`.
    pub n_ctx: usize,
    /// Visible context prefix of each reordered row.
    pub limit: Vec<usize>,
}

impl AttentionPlan {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_query(&self, r: usize) -> bool {
        r >= self.n_ctx
    }

    pub fn from_blocks(blocks: &[Block]) -> Result<Self> {
        let mask = attention_mask(blocks);
        let n = mask.len();
        let mut is_query = vec![false; n];
        let mut covered = vec![false; n];
        for b in blocks {
            for t in b.range() {
                if covered[t] {
                    return Err(Error::Argument(format!("token {t} belongs to two blocks")));
                }
                covered[t] = true;
                is_query[t] = b.role == Role::Query;
            }
        }
        if let Some(t) = covered.iter().position(|c| !c) {
            return Err(Error::Argument(format!("token {t} belongs to no block")));
        }
        let ctx: Vec<usize> = (0..n).filter(|&t| !is_query[t]).collect();
        let queries: Vec<usize> = (0..n).filter(|&t| is_query[t]).collect();
        let order: Vec<usize> = ctx.iter().chain(&queries).copied().collect();
        let mut limit = Vec::with_capacity(n);
        for &t in &order {
            let row = mask.row(t);
            let count = ctx.iter().take_while(|&&c| row[c]).count();
            let rest_hidden = ctx[count..].iter().all(|&c| !row[c]);
            let self_ok = !is_query[t] || queries.iter().all(|&q| row[q] == (q == t));
            if !rest_hidden || !self_ok {
                return Err(Error::Argument(
                    "block table does not yield a prefix-structured mask".into(),
                ));
            }
            limit.push(count);
        }
        Ok(AttentionPlan {
            order,
            n_ctx: ctx.len(),
            limit,
        })
    }

    /// Expands back to a dense mask in original token order.
    pub fn to_mask(&self) -> Mask {
        let n = self.len();
        let mut visible = vec![false; n * n];
        for (r, &t) in self.order.iter().enumerate() {
            for &c in &self.order[..self.limit[r]] {
                visible[t * n + c] = true;
            }
            if self.is_query(r) {
                visible[t * n + t] = true;
            }
        }
        Mask { n, visible }
    }
}
