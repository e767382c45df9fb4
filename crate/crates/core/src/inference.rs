//! In-context operator application and recursive multi-stride rollout.
//!
//! Rollout schedule for maximum stride `S = m dt` (forward; reverse mirrors
//! the signs of every time offset):
//!
//! ```text
//! n <= m : u(t0 + n dt) <- F_{n dt}[u(t0)]
//! n >  m : u(t0 + n dt) <- F_S[u(t0 + (n - m) dt)]   (predicted frame)
//! ```
//!
//! Examples for a stride-`s` call are drawn afresh for every call, uniformly
//! without replacement from the stride-`s` pairs of the given record.

use std::path::Path;

use log::debug;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::{pairs_from_record, CondQoIPair, Direction};
use crate::error::{Error, Result};
use crate::flux::FluxSpec;
use crate::grid::{GridFunction, Record};
use crate::model::{predict, ModelParams};
use crate::prompt::build_prompt_strided;
use crate::rng::{derive_labeled, rng_from};
use crate::solver::{exact_backward, exact_forward};
use crate::storage;

/// Side information of one operator call. Learned models ignore it; the
/// exact-solver oracle needs it to know which operator to apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallInfo {
    pub stride: f64,
    pub direction: Direction,
    /// Change of variables `u = alpha v + beta` applied to every function.
    pub affine: Option<(f64, f64)>,
}

/// Anything that maps in-context examples and a question to a prediction.
pub trait OperatorModel: Sync {
    /// Largest number of examples accepted by a single call.
    fn max_examples(&self) -> usize;

    fn apply(
        &self,
        examples: &[CondQoIPair],
        question: &GridFunction,
        call: &CallInfo,
    ) -> Result<GridFunction>;
}

/// A trained network; predictions on the subsampled grid are linearly
/// interpolated back to the full grid.
#[derive(Debug, Clone)]
pub struct IconModel {
    pub params: ModelParams<f32>,
}

impl IconModel {
    pub fn new(params: ModelParams<f32>) -> Self {
        IconModel { params }
    }
}

impl OperatorModel for IconModel {
    fn max_examples(&self) -> usize {
        self.params.config.max_pairs - 1
    }

    fn apply(
        &self,
        examples: &[CondQoIPair],
        question: &GridFunction,
        _call: &CallInfo,
    ) -> Result<GridFunction> {
        let stride = self.params.config.grid_stride;
        let prompt = build_prompt_strided(examples, question, stride)?;
        let coarse = GridFunction::new(predict(&self.params, &prompt)?)?;
        coarse.upsample(stride)
    }
}

/// Reference operator that ignores the examples and runs the solver.
#[derive(Debug, Clone)]
pub struct ExactOperator {
    pub flux: FluxSpec,
}

impl OperatorModel for ExactOperator {
    fn max_examples(&self) -> usize {
        usize::MAX
    }

    fn apply(
        &self,
        _examples: &[CondQoIPair],
        question: &GridFunction,
        call: &CallInfo,
    ) -> Result<GridFunction> {
        let flux = match call.affine {
            Some((alpha, beta)) => self.flux.clone().affine(alpha, beta)?,
            None => self.flux.clone(),
        };
        match call.direction {
            Direction::Forward => exact_forward(question, &flux, call.stride),
            Direction::Reverse => exact_backward(question, &flux, call.stride),
        }
    }
}

/// In-context prediction for `question` from `examples`.
pub fn apply_operator(
    model: &dyn OperatorModel,
    examples: &[CondQoIPair],
    question: &GridFunction,
    direction: Direction,
) -> Result<GridFunction> {
    let call = call_info(examples, direction, None)?;
    check_example_count(model, examples)?;
    model.apply(examples, question, &call)
}

fn check_example_count(model: &dyn OperatorModel, examples: &[CondQoIPair]) -> Result<()> {
    if examples.is_empty() || examples.len() > model.max_examples() {
        return Err(Error::Argument(format!(
            "{} examples given, the model accepts 1..={}",
            examples.len(),
            model.max_examples()
        )));
    }
    Ok(())
}

fn call_info(
    examples: &[CondQoIPair],
    direction: Direction,
    affine: Option<(f64, f64)>,
) -> Result<CallInfo> {
    let stride = examples
        .first()
        .map(|e| e.stride)
        .ok_or_else(|| Error::Argument("at least one example is required".into()))?;
    if examples
        .iter()
        .any(|e| (e.stride - stride).abs() > 1e-9 * stride)
    {
        return Err(Error::Argument("examples mix different strides".into()));
    }
    Ok(CallInfo {
        stride,
        direction,
        affine,
    })
}

/// Affine map `u = alpha v + beta` taking the data range onto `[-r, r]`.
pub fn change_of_variables(
    examples: &[CondQoIPair],
    question: &GridFunction,
    r: f64,
) -> Result<(f64, f64)> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Argument(format!(
            "change-of-variables half-width must be positive, got {r}"
        )));
    }
    let mut lo = question.min();
    let mut hi = question.max();
    for e in examples {
        lo = lo.min(e.cond.min()).min(e.qoi.min());
        hi = hi.max(e.cond.max()).max(e.qoi.max());
    }
    if hi <= lo {
        return Err(Error::Argument(format!(
            "constant data (u = {lo}) has no range to rescale"
        )));
    }
    Ok((0.5 * (hi - lo) / r, 0.5 * (hi + lo)))
}

/// Applies the operator in the variable `v = (u - beta) / alpha` chosen so the
/// data spans `[-r, r]`, then maps the prediction back.
pub fn change_of_variables_apply(
    model: &dyn OperatorModel,
    examples: &[CondQoIPair],
    question: &GridFunction,
    direction: Direction,
    r: f64,
) -> Result<GridFunction> {
    check_example_count(model, examples)?;
    let (alpha, beta) = change_of_variables(examples, question, r)?;
    let call = call_info(examples, direction, Some((alpha, beta)))?;
    let to_v = |f: &GridFunction| f.map(|u| (u - beta) / alpha);
    let transformed: Vec<CondQoIPair> = examples
        .iter()
        .map(|e| CondQoIPair::new(to_v(&e.cond), to_v(&e.qoi), e.stride, e.operator_id))
        .collect::<Result<_>>()?;
    let v = model.apply(&transformed, &to_v(question), &call)?;
    Ok(v.map(|v| alpha * v + beta))
}

/// Flux `k f`, whose stride-`tau` operator equals the stride-`k tau` operator of `f`.
pub fn stride_rescale(flux: &FluxSpec, k: f64) -> Result<FluxSpec> {
    if k == 1.0 {
        return Ok(flux.clone());
    }
    flux.clone().scaled(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutPlan {
    /// Time of the first question condition.
    pub t0: f64,
    pub dt: f64,
    pub max_stride: f64,
    /// Final predicted time: after `t0` for forward plans, before it for reverse.
    pub horizon: f64,
    pub direction: Direction,
    pub examples_per_call: usize,
    pub seed: u64,
    /// Change-of-variables half-width applied to every call.
    pub cov_r: Option<f64>,
}

fn lattice(span: f64, step: f64, what: &str) -> Result<usize> {
    let k = span / step;
    let r = k.round();
    if r < 1.0 || (k - r).abs() > 1e-6 {
        return Err(Error::Argument(format!(
            "{what} {span} is not a positive multiple of {step}"
        )));
    }
    Ok(r as usize)
}

impl RolloutPlan {
    /// Number of stride multiples in the maximum stride.
    pub fn stride_steps(&self) -> Result<usize> {
        lattice(self.max_stride, self.dt, "maximum stride")
    }

    /// Number of predicted frames.
    pub fn frames(&self) -> Result<usize> {
        let span = match self.direction {
            Direction::Forward => self.horizon - self.t0,
            Direction::Reverse => self.t0 - self.horizon,
        };
        lattice(span, self.dt, "rollout span")
    }

    fn sign(&self) -> f64 {
        match self.direction {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }

    /// Predicted times in the order they are produced.
    pub fn times(&self) -> Result<Vec<f64>> {
        Ok((1..=self.frames()?)
            .map(|n| self.t0 + self.sign() * n as f64 * self.dt)
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Argument(format!(
                "rollout dt must be positive, got {}",
                self.dt
            )));
        }
        if self.examples_per_call == 0 {
            return Err(Error::Argument(
                "at least one example per call is required".into(),
            ));
        }
        if let Some(r) = self.cov_r {
            if !(r > 0.0) {
                return Err(Error::Argument(format!(
                    "change-of-variables half-width must be positive, got {r}"
                )));
            }
        }
        self.stride_steps()?;
        self.frames()?;
        Ok(())
    }
}

/// Part of `record` usable for examples: frames up to `t0` (forward) or from
/// `t0` on (reverse).
fn example_window(record: &Record, plan: &RolloutPlan) -> Result<(Record, usize)> {
    let start = record.index_of_time(plan.t0).ok_or_else(|| {
        Error::Argument(format!(
            "t0 = {} is not a frame of the record ({}..{} step {})",
            plan.t0,
            record.t0(),
            record.t_end(),
            record.dt()
        ))
    })?;
    match plan.direction {
        Direction::Forward => Ok((record.slice(0, start + 1)?, start)),
        Direction::Reverse => Ok((record.slice(start, record.len())?, 0)),
    }
}

/// Recursive prediction over the plan; returns the predicted frames in
/// ascending time order.
pub fn recursive_rollout(
    model: &dyn OperatorModel,
    record: &Record,
    plan: &RolloutPlan,
) -> Result<Record> {
    recursive_rollout_from(model, record, None, plan)
}

/// [`recursive_rollout`] with examples from `record` but the first question
/// condition supplied separately (defaults to the record frame at `t0`).
pub fn recursive_rollout_from(
    model: &dyn OperatorModel,
    record: &Record,
    question: Option<&GridFunction>,
    plan: &RolloutPlan,
) -> Result<Record> {
    plan.validate()?;
    let m = plan.stride_steps()?;
    let total = plan.frames()?;
    let per_frame = lattice(plan.dt, record.dt(), "rollout dt")?;
    let (window, q_index) = example_window(record, plan)?;
    let question0 = match question {
        Some(q) => {
            q.check_same_grid(window.frame(q_index))?;
            q.clone()
        }
        None => window.frame(q_index).clone(),
    };
    let j = plan.examples_per_call.min(model.max_examples());

    // Example pools per stride multiple, built lazily.
    let mut pools: Vec<Option<Vec<CondQoIPair>>> = vec![None; m + 1];
    let mut predicted: Vec<GridFunction> = Vec::with_capacity(total);
    for n in 1..=total {
        let k = n.min(m);
        if pools[k].is_none() {
            let s = k as f64 * plan.dt;
            let pairs =
                pairs_from_record(&window, k * per_frame, plan.direction).map_err(|_| {
                    Error::Argument(format!(
                        "record span {} is too short for stride {s}",
                        window.t_end() - window.t0()
                    ))
                })?;
            pools[k] = Some(pairs);
        }
        let pool = pools[k].as_ref().expect("filled above");
        let mut rng = rng_from(derive_labeled(plan.seed, "rollout", n as u64));
        let picks = index::sample(&mut rng, pool.len(), j.min(pool.len()));
        let examples: Vec<CondQoIPair> = picks.iter().map(|i| pool[i].clone()).collect();
        if examples.len() < j {
            debug!(
                "stride {k}: only {} example pairs available",
                examples.len()
            );
        }
        let question = if n <= m {
            &question0
        } else {
            &predicted[n - m - 1]
        };
        let next = match plan.cov_r {
            Some(r) => change_of_variables_apply(model, &examples, question, plan.direction, r)?,
            None => apply_operator(model, &examples, question, plan.direction)?,
        };
        predicted.push(next);
    }
    let (frames, t_start) = match plan.direction {
        Direction::Forward => (predicted, plan.t0 + plan.dt),
        Direction::Reverse => {
            predicted.reverse();
            (predicted, plan.horizon)
        }
    };
    Record::new(frames, plan.dt, t_start)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMeta {
    pub plan: RolloutPlan,
    pub n: usize,
    pub num_frames: usize,
    pub t_start: f64,
    pub dt: f64,
}

pub const PREDICTION_META: &str = "meta.json";
pub const PREDICTION_RECORDS: &str = "records.f32";

/// Writes a predicted record in the dataset record layout plus its plan.
pub fn write_prediction(record: &Record, plan: &RolloutPlan, dir: &Path) -> Result<()> {
    storage::ensure_dir(dir)?;
    storage::write_f32_le(
        &dir.join(PREDICTION_RECORDS),
        record
            .frames()
            .iter()
            .flat_map(|f| f.values().iter().map(|&v| v as f32)),
    )?;
    let meta = PredictionMeta {
        plan: plan.clone(),
        n: record.n(),
        num_frames: record.len(),
        t_start: record.t0(),
        dt: record.dt(),
    };
    storage::write_json(&dir.join(PREDICTION_META), &meta)
}

pub fn read_prediction(dir: &Path) -> Result<(Record, PredictionMeta)> {
    let meta: PredictionMeta = storage::read_json(&dir.join(PREDICTION_META))?;
    let path = dir.join(PREDICTION_RECORDS);
    let raw = storage::read_f32_le(&path)?;
    if raw.len() != meta.n * meta.num_frames {
        return Err(Error::format(
            &path,
            format!(
                "expected {} values, found {}",
                meta.n * meta.num_frames,
                raw.len()
            ),
        ));
    }
    let frames = raw
        .chunks(meta.n)
        .map(|c| GridFunction::new(c.iter().map(|&v| v as f64).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok((Record::new(frames, meta.dt, meta.t_start)?, meta))
}
