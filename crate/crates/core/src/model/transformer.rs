//! Forward and reverse-mode passes.
//!
//! Rows are processed in the order of an [`AttentionPlan`]: context tokens
//! first, queries last. Rows sharing a visible prefix form a group whose
//! attention scores are one dense matrix, so no masked score is ever formed.

use std::f64::consts::PI;

use super::mask::AttentionPlan;
use super::params::ModelParams;
use super::real::{gemm, Real, View, ViewMut};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::prompt::{Block, PromptSequence, Token};

const LN_EPS: f64 = 1e-5;

/// Consecutive reordered rows with the same visible context prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Group {
    start: usize,
    end: usize,
    limit: usize,
    query: bool,
    /// Offset of the group's probabilities in a per-head buffer.
    offset: usize,
}

impl Group {
    fn rows(&self) -> usize {
        self.end - self.start
    }
}

/// A prompt prepared for a particular configuration.
#[derive(Debug, Clone)]
pub struct ModelInput<T> {
    pub plan: AttentionPlan,
    /// Input features of reordered rows, `[rows][d_in]`.
    pub features: Vec<T>,
    /// Row of the role/pair embedding table used by each reordered row.
    pub embed_rows: Vec<usize>,
    pub query_blocks: Vec<Block>,
    groups: Vec<Group>,
    probs_len: usize,
}

/// Feature vector of one token: key, key harmonics, value, role one-hot.
pub fn input_features<T: Real>(cfg: &ModelConfig, token: &Token, out: &mut [T]) {
    out[0] = T::from_f64(token.key);
    for m in 1..=cfg.key_frequencies {
        let phase = 2.0 * PI * m as f64 * token.key;
        out[2 * m - 1] = T::from_f64(phase.cos());
        out[2 * m] = T::from_f64(phase.sin());
    }
    let v = value_feature(cfg);
    out[v] = T::from_f64(token.value);
    for r in 0..3 {
        out[v + 1 + r] = if token.role.index() == r {
            T::one()
        } else {
            T::zero()
        };
    }
}

fn value_feature(cfg: &ModelConfig) -> usize {
    1 + 2 * cfg.key_frequencies
}

impl<T: Real> ModelInput<T> {
    pub fn new(cfg: &ModelConfig, prompt: &PromptSequence) -> Result<Self> {
        let plan = AttentionPlan::from_blocks(&prompt.blocks)?;
        if plan.len() != prompt.len() {
            return Err(Error::Shape {
                expected: prompt.len(),
                actual: plan.len(),
            });
        }
        let d_in = cfg.d_in();
        let mut features = vec![T::zero(); plan.len() * d_in];
        let mut embed_rows = Vec::with_capacity(plan.len());
        for (r, &t) in plan.order.iter().enumerate() {
            let token = &prompt.tokens[t];
            if token.pair_index == 0 || token.pair_index > cfg.max_pairs {
                return Err(Error::Argument(format!(
                    "pair index {} outside the model's 1..={} range",
                    token.pair_index, cfg.max_pairs
                )));
            }
            input_features(cfg, token, &mut features[r * d_in..(r + 1) * d_in]);
            embed_rows.push(token.role.index() * cfg.max_pairs + token.pair_index - 1);
        }
        let mut groups: Vec<Group> = Vec::new();
        let mut offset = 0;
        for r in 0..plan.len() {
            let (limit, query) = (plan.limit[r], plan.is_query(r));
            if limit == 0 && !query {
                return Err(Error::Argument(format!(
                    "token {} sees nothing",
                    plan.order[r]
                )));
            }
            match groups.last_mut() {
                Some(g) if g.limit == limit && g.query == query => g.end += 1,
                _ => groups.push(Group {
                    start: r,
                    end: r + 1,
                    limit,
                    query,
                    offset,
                }),
            }
            offset += limit;
        }
        Ok(ModelInput {
            plan,
            features,
            embed_rows,
            query_blocks: prompt.query_blocks().copied().collect(),
            groups,
            probs_len: offset,
        })
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.is_empty()
    }

    pub fn num_queries(&self) -> usize {
        self.plan.len() - self.plan.n_ctx
    }
}

/// Predicted values at every query token, concatenated in block order.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub blocks: Vec<Block>,
    pub values: Vec<T>,
}

impl<T: Real> Prediction<T> {
    /// Prediction for the query block of `pair_index`.
    pub fn block(&self, pair_index: usize) -> Option<&[T]> {
        let mut start = 0;
        for b in &self.blocks {
            if b.pair_index == pair_index {
                return Some(&self.values[start..start + b.len]);
            }
            start += b.len;
        }
        None
    }

    pub fn iter_blocks(&self) -> impl Iterator<Item = (&Block, &[T])> {
        let mut start = 0;
        self.blocks.iter().map(move |b| {
            let s = &self.values[start..start + b.len];
            start += b.len;
            (b, s)
        })
    }
}

struct LayerCache<T> {
    xhat1: Vec<T>,
    rstd1: Vec<T>,
    ln1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    probs_self: Vec<T>,
    attn: Vec<T>,
    xhat2: Vec<T>,
    rstd2: Vec<T>,
    ln2: Vec<T>,
    h1: Vec<T>,
    act: Vec<T>,
}

/// Activations kept for [`backward`].
pub struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
    final_xhat: Vec<T>,
    final_rstd: Vec<T>,
    final_out: Vec<T>,
}

fn view<T: Real>(data: &[T], offset: usize, rows: usize, cols: usize, rs: usize) -> View<'_, T> {
    View {
        data,
        offset,
        rows,
        cols,
        rs,
        cs: 1,
    }
}

fn view_mut<T: Real>(
    data: &mut [T],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
) -> ViewMut<'_, T> {
    ViewMut {
        data,
        offset,
        rows,
        cols,
        rs,
        cs: 1,
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `x W + b` for row-major `x: [rows][din]`, `W: [din][dout]`.
fn linear<T: Real>(x: &[T], rows: usize, w: &[T], b: &[T], din: usize, dout: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(rows * dout);
    for _ in 0..rows {
        y.extend_from_slice(b);
    }
    gemm(
        T::one(),
        View::new(x, rows, din),
        View::new(w, din, dout),
        T::one(),
        ViewMut::new(&mut y, rows, dout),
    );
    y
}

/// Accumulates `dW += x^T dy` and `db += colsum(dy)` into `grad = [W | b]`.
fn linear_param_grad<T: Real>(
    x: &[T],
    dy: &[T],
    rows: usize,
    din: usize,
    dout: usize,
    grad: &mut [T],
) {
    let (dw, db) = grad.split_at_mut(din * dout);
    gemm(
        T::one(),
        View::new(x, rows, din).t(),
        View::new(dy, rows, dout),
        T::one(),
        ViewMut::new(dw, din, dout),
    );
    for r in 0..rows {
        for (acc, &g) in db.iter_mut().zip(&dy[r * dout..(r + 1) * dout]) {
            *acc += g;
        }
    }
}

fn layer_norm<T: Real>(
    x: &[T],
    rows: usize,
    d: usize,
    gamma: &[T],
    beta: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let eps = T::from_f64(LN_EPS);
    let dn = T::from_f64(d as f64);
    let mut xhat = vec![T::zero(); rows * d];
    let mut rstd = vec![T::zero(); rows];
    let mut out = vec![T::zero(); rows * d];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[r * d + j] = h;
            out[r * d + j] = h * gamma[j] + beta[j];
        }
    }
    (xhat, rstd, out)
}

/// Adds the input gradient of a layer norm to `dx`; `grad = [gamma | beta]`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward<T: Real>(
    dy: &[T],
    xhat: &[T],
    rstd: &[T],
    gamma: &[T],
    rows: usize,
    d: usize,
    grad: Option<&mut [T]>,
    dx: &mut [T],
) {
    if let Some(grad) = grad {
        let (dg, db) = grad.split_at_mut(d);
        for r in 0..rows {
            for j in 0..d {
                dg[j] += dy[r * d + j] * xhat[r * d + j];
                db[j] += dy[r * d + j];
            }
        }
    }
    let dn = T::from_f64(d as f64);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let mut sum = T::zero();
        let mut sum_x = T::zero();
        for j in 0..d {
            let g = dy[r * d + j] * gamma[j];
            dxhat[j] = g;
            sum += g;
            sum_x += g * xhat[r * d + j];
        }
        let scale = rstd[r] / dn;
        for j in 0..d {
            dx[r * d + j] += scale * (dn * dxhat[j] - sum - xhat[r * d + j] * sum_x);
        }
    }
}

fn gelu_consts<T: Real>() -> (T, T) {
    (T::from_f64((2.0 / PI).sqrt()), T::from_f64(0.044_715))
}

fn gelu<T: Real>(x: T) -> T {
    let (c, k) = gelu_consts::<T>();
    let half = T::from_f64(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let (c, k) = gelu_consts::<T>();
    let half = T::from_f64(0.5);
    let t = (c * (x + k * x * x * x)).tanh();
    let three = T::from_f64(3.0);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * k * x * x)
}

fn attention<T: Real>(
    cfg: &ModelConfig,
    input: &ModelInput<T>,
    q: &[T],
    k: &[T],
    v: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = input.len();
    let (da, dh) = (cfg.d_attn, cfg.head_dim());
    let n_ctx = input.plan.n_ctx;
    let nq = n - n_ctx;
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut probs = vec![T::zero(); cfg.heads * input.probs_len];
    let mut probs_self = vec![T::zero(); cfg.heads * nq];
    let mut out = vec![T::zero(); n * da];
    for h in 0..cfg.heads {
        let col = h * dh;
        for g in &input.groups {
            let (rows, lim) = (g.rows(), g.limit);
            let base = h * input.probs_len + g.offset;
            let pg = &mut probs[base..base + rows * lim];
            gemm(
                scale,
                view(q, g.start * da + col, rows, dh, da),
                view(k, col, lim, dh, da).t(),
                T::zero(),
                ViewMut::new(pg, rows, lim),
            );
            for i in 0..rows {
                let r = g.start + i;
                let row = &mut pg[i * lim..(i + 1) * lim];
                let self_score = g.query.then(|| {
                    scale
                        * dot(
                            &q[r * da + col..r * da + col + dh],
                            &k[r * da + col..r * da + col + dh],
                        )
                });
                let mut max = row.iter().copied().fold(T::neg_infinity(), T::max);
                if let Some(s) = self_score {
                    max = max.max(s);
                }
                let mut sum = T::zero();
                for p in row.iter_mut() {
                    *p = (*p - max).exp();
                    sum += *p;
                }
                let e_self = self_score.map(|s| (s - max).exp());
                if let Some(e) = e_self {
                    sum += e;
                }
                let inv = T::one() / sum;
                for p in row.iter_mut() {
                    *p *= inv;
                }
                if let Some(e) = e_self {
                    probs_self[h * nq + r - n_ctx] = e * inv;
                }
            }
            gemm(
                T::one(),
                View::new(pg, rows, lim),
                view(v, col, lim, dh, da),
                T::zero(),
                view_mut(&mut out, g.start * da + col, rows, dh, da),
            );
            if g.query {
                for r in g.start..g.end {
                    let p = probs_self[h * nq + r - n_ctx];
                    for j in 0..dh {
                        out[r * da + col + j] += p * v[r * da + col + j];
                    }
                }
            }
        }
    }
    (out, probs, probs_self)
}

/// Forward pass keeping the activations needed by [`backward`].
pub fn forward_cached<T: Real>(
    params: &ModelParams<T>,
    input: &ModelInput<T>,
) -> Result<(Prediction<T>, ForwardCache<T>)> {
    let cfg = &params.config;
    let lay = &params.layout;
    let w = &params.data;
    let n = input.len();
    let (d, da, ff, d_in) = (cfg.d_model, cfg.d_attn, cfg.d_ff, cfg.d_in());
    if input.features.len() != n * d_in {
        return Err(Error::Argument(format!(
            "input prepared for {} features per token, model expects {d_in}",
            input.features.len() / n.max(1)
        )));
    }
    let mut x = Vec::with_capacity(n * d);
    for &e in &input.embed_rows {
        let table = lay.role_pair + e * d;
        x.extend(
            w[lay.embed_b..lay.embed_b + d]
                .iter()
                .zip(&w[table..table + d])
                .map(|(&b, &t)| b + t),
        );
    }
    gemm(
        T::one(),
        View::new(&input.features, n, d_in),
        View::new(&w[lay.embed_w..lay.embed_w + d_in * d], d_in, d),
        T::one(),
        ViewMut::new(&mut x, n, d),
    );
    let mut layers = Vec::with_capacity(cfg.layers);
    for o in &lay.layers {
        let (xhat1, rstd1, ln1) =
            layer_norm(&x, n, d, &w[o.ln1_g..o.ln1_g + d], &w[o.ln1_b..o.ln1_b + d]);
        let q = linear(&ln1, n, &w[o.wq..o.wq + d * da], &w[o.bq..o.bq + da], d, da);
        let k = linear(&ln1, n, &w[o.wk..o.wk + d * da], &w[o.bk..o.bk + da], d, da);
        let v = linear(&ln1, n, &w[o.wv..o.wv + d * da], &w[o.bv..o.bv + da], d, da);
        let (attn, probs, probs_self) = attention(cfg, input, &q, &k, &v);
        let y = linear(&attn, n, &w[o.wo..o.wo + da * d], &w[o.bo..o.bo + d], da, d);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi += *yi;
        }
        let (xhat2, rstd2, ln2) =
            layer_norm(&x, n, d, &w[o.ln2_g..o.ln2_g + d], &w[o.ln2_b..o.ln2_b + d]);
        let h1 = linear(&ln2, n, &w[o.w1..o.w1 + d * ff], &w[o.b1..o.b1 + ff], d, ff);
        let act: Vec<T> = h1.iter().map(|&h| gelu(h)).collect();
        let f = linear(&act, n, &w[o.w2..o.w2 + ff * d], &w[o.b2..o.b2 + d], ff, d);
        for (xi, fi) in x.iter_mut().zip(&f) {
            *xi += *fi;
        }
        layers.push(LayerCache {
            xhat1,
            rstd1,
            ln1,
            q,
            k,
            v,
            probs,
            probs_self,
            attn,
            xhat2,
            rstd2,
            ln2,
            h1,
            act,
        });
    }
    let n_ctx = input.plan.n_ctx;
    let nq = n - n_ctx;
    let (final_xhat, final_rstd, final_out) = layer_norm(
        &x[n_ctx * d..],
        nq,
        d,
        &w[lay.final_g..lay.final_g + d],
        &w[lay.final_b..lay.final_b + d],
    );
    let head = &w[lay.head_w..lay.head_w + d];
    let bias = w[lay.head_b];
    let values: Vec<T> = (0..nq)
        .map(|i| dot(&final_out[i * d..(i + 1) * d], head) + bias)
        .collect();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            index,
            context: "model prediction".into(),
        });
    }
    Ok((
        Prediction {
            blocks: input.query_blocks.clone(),
            values,
        },
        ForwardCache {
            layers,
            final_xhat,
            final_rstd,
            final_out,
        },
    ))
}

pub fn forward<T: Real>(params: &ModelParams<T>, prompt: &PromptSequence) -> Result<Prediction<T>> {
    let input = ModelInput::new(&params.config, prompt)?;
    forward_cached(params, &input).map(|(p, _)| p)
}

/// Prediction for the single query block of an inference prompt, as `f64`.
pub fn predict<T: Real>(params: &ModelParams<T>, prompt: &PromptSequence) -> Result<Vec<f64>> {
    let pred = forward(params, prompt)?;
    if pred.blocks.len() != 1 {
        return Err(Error::Argument(format!(
            "expected one query block, found {}",
            pred.blocks.len()
        )));
    }
    Ok(pred.values.iter().map(|v| v.as_f64()).collect())
}

#[allow(clippy::too_many_arguments)]
fn attention_backward<T: Real>(
    cfg: &ModelConfig,
    input: &ModelInput<T>,
    c: &LayerCache<T>,
    d_attn_out: &[T],
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
) {
    let n = input.len();
    let (da, dh) = (cfg.d_attn, cfg.head_dim());
    let n_ctx = input.plan.n_ctx;
    let nq = n - n_ctx;
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let (q, k, v) = (&c.q, &c.k, &c.v);
    let mut dp = Vec::new();
    for h in 0..cfg.heads {
        let col = h * dh;
        for g in &input.groups {
            let (rows, lim) = (g.rows(), g.limit);
            let base = h * input.probs_len + g.offset;
            let pg = &c.probs[base..base + rows * lim];
            let d_out = view(d_attn_out, g.start * da + col, rows, dh, da);
            dp.clear();
            dp.resize(rows * lim, T::zero());
            gemm(
                T::one(),
                d_out,
                view(v, col, lim, dh, da).t(),
                T::zero(),
                ViewMut::new(&mut dp, rows, lim),
            );
            gemm(
                T::one(),
                View::new(pg, rows, lim).t(),
                d_out,
                T::one(),
                view_mut(dv, col, lim, dh, da),
            );
            let mut ds_self = vec![T::zero(); if g.query { rows } else { 0 }];
            for i in 0..rows {
                let r = g.start + i;
                let prow = &pg[i * lim..(i + 1) * lim];
                let drow = &mut dp[i * lim..(i + 1) * lim];
                let mut rowdot = dot(prow, drow);
                let mut self_terms = None;
                if g.query {
                    let p_self = c.probs_self[h * nq + r - n_ctx];
                    let dp_self = dot(
                        &d_attn_out[r * da + col..r * da + col + dh],
                        &v[r * da + col..r * da + col + dh],
                    );
                    rowdot += p_self * dp_self;
                    self_terms = Some((p_self, dp_self));
                }
                for (dpj, &pj) in drow.iter_mut().zip(prow) {
                    *dpj = pj * (*dpj - rowdot);
                }
                if let Some((p_self, dp_self)) = self_terms {
                    ds_self[i] = p_self * (dp_self - rowdot);
                    for j in 0..dh {
                        dv[r * da + col + j] += p_self * d_attn_out[r * da + col + j];
                    }
                }
            }
            gemm(
                scale,
                View::new(&dp, rows, lim),
                view(k, col, lim, dh, da),
                T::one(),
                view_mut(dq, g.start * da + col, rows, dh, da),
            );
            gemm(
                scale,
                View::new(&dp, rows, lim).t(),
                view(q, g.start * da + col, rows, dh, da),
                T::one(),
                view_mut(dk, col, lim, dh, da),
            );
            if g.query {
                for i in 0..rows {
                    let r = g.start + i;
                    let s = scale * ds_self[i];
                    for j in 0..dh {
                        let at = r * da + col + j;
                        dq[at] += s * k[at];
                        dk[at] += s * q[at];
                    }
                }
            }
        }
    }
}

/// Reverse pass for the upstream gradient `d_pred` (one entry per query token).
///
/// Parameter gradients are accumulated into `param_grad` when given; the
/// gradient with respect to every token value is returned in prompt order.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    input: &ModelInput<T>,
    cache: &ForwardCache<T>,
    d_pred: &[T],
    mut param_grad: Option<&mut [T]>,
) -> Result<Vec<T>> {
    let cfg = &params.config;
    let lay = &params.layout;
    let w = &params.data;
    let n = input.len();
    let n_ctx = input.plan.n_ctx;
    let nq = n - n_ctx;
    let (d, da, ff, d_in) = (cfg.d_model, cfg.d_attn, cfg.d_ff, cfg.d_in());
    if d_pred.len() != nq {
        return Err(Error::Shape {
            expected: nq,
            actual: d_pred.len(),
        });
    }
    if let Some(g) = param_grad.as_deref() {
        if g.len() != lay.total {
            return Err(Error::Shape {
                expected: lay.total,
                actual: g.len(),
            });
        }
    }
    let head = &w[lay.head_w..lay.head_w + d];
    let mut d_final = vec![T::zero(); nq * d];
    for i in 0..nq {
        for j in 0..d {
            d_final[i * d + j] = d_pred[i] * head[j];
        }
    }
    if let Some(g) = param_grad.as_deref_mut() {
        for i in 0..nq {
            for j in 0..d {
                g[lay.head_w + j] += d_pred[i] * cache.final_out[i * d + j];
            }
            g[lay.head_b] += d_pred[i];
        }
    }
    let mut dx = vec![T::zero(); n * d];
    layer_norm_backward(
        &d_final,
        &cache.final_xhat,
        &cache.final_rstd,
        &w[lay.final_g..lay.final_g + d],
        nq,
        d,
        param_grad
            .as_deref_mut()
            .map(|g| &mut g[lay.final_g..lay.final_g + 2 * d]),
        &mut dx[n_ctx * d..],
    );
    let mut d_act = vec![T::zero(); n * ff];
    let mut d_ln = vec![T::zero(); n * d];
    let mut d_attn_out = vec![T::zero(); n * da];
    let mut dq = vec![T::zero(); n * da];
    let mut dk = vec![T::zero(); n * da];
    let mut dv = vec![T::zero(); n * da];
    for (o, c) in lay.layers.iter().zip(&cache.layers).rev() {
        // Feed-forward branch.
        gemm(
            T::one(),
            View::new(&dx, n, d),
            View::new(&w[o.w2..o.w2 + ff * d], ff, d).t(),
            T::zero(),
            ViewMut::new(&mut d_act, n, ff),
        );
        if let Some(g) = param_grad.as_deref_mut() {
            linear_param_grad(&c.act, &dx, n, ff, d, &mut g[o.w2..o.b2 + d]);
        }
        for (da_i, &h) in d_act.iter_mut().zip(&c.h1) {
            *da_i *= gelu_grad(h);
        }
        if let Some(g) = param_grad.as_deref_mut() {
            linear_param_grad(&c.ln2, &d_act, n, d, ff, &mut g[o.w1..o.b1 + ff]);
        }
        gemm(
            T::one(),
            View::new(&d_act, n, ff),
            View::new(&w[o.w1..o.w1 + d * ff], d, ff).t(),
            T::zero(),
            ViewMut::new(&mut d_ln, n, d),
        );
        layer_norm_backward(
            &d_ln,
            &c.xhat2,
            &c.rstd2,
            &w[o.ln2_g..o.ln2_g + d],
            n,
            d,
            param_grad
                .as_deref_mut()
                .map(|g| &mut g[o.ln2_g..o.ln2_g + 2 * d]),
            &mut dx,
        );
        // Attention branch.
        gemm(
            T::one(),
            View::new(&dx, n, d),
            View::new(&w[o.wo..o.wo + da * d], da, d).t(),
            T::zero(),
            ViewMut::new(&mut d_attn_out, n, da),
        );
        if let Some(g) = param_grad.as_deref_mut() {
            linear_param_grad(&c.attn, &dx, n, da, d, &mut g[o.wo..o.bo + d]);
        }
        dq.fill(T::zero());
        dk.fill(T::zero());
        dv.fill(T::zero());
        attention_backward(cfg, input, c, &d_attn_out, &mut dq, &mut dk, &mut dv);
        for (grad_y, wo, bo) in [(&dq, o.wq, o.bq), (&dk, o.wk, o.bk), (&dv, o.wv, o.bv)] {
            if let Some(g) = param_grad.as_deref_mut() {
                linear_param_grad(&c.ln1, grad_y, n, d, da, &mut g[wo..bo + da]);
            }
        }
        gemm(
            T::one(),
            View::new(&dq, n, da),
            View::new(&w[o.wq..o.wq + d * da], d, da).t(),
            T::zero(),
            ViewMut::new(&mut d_ln, n, d),
        );
        gemm(
            T::one(),
            View::new(&dk, n, da),
            View::new(&w[o.wk..o.wk + d * da], d, da).t(),
            T::one(),
            ViewMut::new(&mut d_ln, n, d),
        );
        gemm(
            T::one(),
            View::new(&dv, n, da),
            View::new(&w[o.wv..o.wv + d * da], d, da).t(),
            T::one(),
            ViewMut::new(&mut d_ln, n, d),
        );
        layer_norm_backward(
            &d_ln,
            &c.xhat1,
            &c.rstd1,
            &w[o.ln1_g..o.ln1_g + d],
            n,
            d,
            param_grad
                .as_deref_mut()
                .map(|g| &mut g[o.ln1_g..o.ln1_g + 2 * d]),
            &mut dx,
        );
    }
    if let Some(g) = param_grad {
        linear_param_grad(
            &input.features,
            &dx,
            n,
            d_in,
            d,
            &mut g[lay.embed_w..lay.embed_b + d],
        );
        for (r, &e) in input.embed_rows.iter().enumerate() {
            let table = lay.role_pair + e * d;
            for j in 0..d {
                g[table + j] += dx[r * d + j];
            }
        }
    }
    let vf = value_feature(cfg);
    let w_value = &w[lay.embed_w + vf * d..lay.embed_w + (vf + 1) * d];
    let mut d_values = vec![T::zero(); n];
    for (r, &t) in input.plan.order.iter().enumerate() {
        d_values[t] = dot(&dx[r * d..(r + 1) * d], w_value);
    }
    Ok(d_values)
}
