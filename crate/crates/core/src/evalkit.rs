//! Error metrics, grid evaluation and generalization studies.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CondQoIPair, Direction, OperatorDataset};
use crate::error::{Error, Result};
use crate::flux::{adaptive_cubic_fit, cubic_fit, CubicCoeffs, FluxSpec};
use crate::grf::{GrfConfig, GrfSampler};
use crate::grid::{GridFunction, Record};
use crate::inference::{apply_operator, recursive_rollout_from, OperatorModel, RolloutPlan};
use crate::rng::{derive_labeled, rng_from};
use crate::solver::{exact_forward, simulate, BASE_DT};

/// Mean absolute difference over grid cells.
pub fn forward_error(prediction: &GridFunction, truth: &GridFunction) -> Result<f64> {
    prediction.l1_distance(truth)
}

/// Scores a reverse prediction by pushing it forward with the exact solver
/// and comparing with the condition it was predicted from.
pub fn reverse_error(
    predicted_initial: &GridFunction,
    flux: &FluxSpec,
    tau: f64,
    condition: &GridFunction,
) -> Result<f64> {
    forward_error(&exact_forward(predicted_initial, flux, tau)?, condition)
}

/// One reverse-error value per predicted frame, each simulated forward to `t0`.
pub fn recursive_reverse_error(
    predictions: &Record,
    flux: &FluxSpec,
    t0: f64,
    truth_at_t0: &GridFunction,
) -> Result<ErrorCurve> {
    let mut times = Vec::with_capacity(predictions.len());
    let mut errors = Vec::with_capacity(predictions.len());
    for (i, frame) in predictions.frames().iter().enumerate() {
        let t = predictions.time(i);
        if t >= t0 {
            return Err(Error::Argument(format!(
                "predicted frame at t = {t} is not before t0 = {t0}"
            )));
        }
        times.push(t);
        errors.push(reverse_error(frame, flux, t0 - t, truth_at_t0)?);
    }
    ErrorCurve::from_instances("reverse", times, &[errors])
}

/// Mean error against an abscissa (time or example count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub tag: String,
    pub abscissa: Vec<f64>,
    pub mean_error: Vec<f64>,
    pub n_instances: Vec<usize>,
}

impl ErrorCurve {
    /// Averages per-instance error rows, summing in row order.
    pub fn from_instances(
        tag: impl Into<String>,
        abscissa: Vec<f64>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Argument(
                "an error curve needs at least one instance".into(),
            ));
        }
        let mut sum = vec![0.0; abscissa.len()];
        for row in rows {
            if row.len() != abscissa.len() {
                return Err(Error::Shape {
                    expected: abscissa.len(),
                    actual: row.len(),
                });
            }
            for (s, e) in sum.iter_mut().zip(row) {
                *s += e;
            }
        }
        let n = rows.len();
        Ok(ErrorCurve {
            tag: tag.into(),
            mean_error: sum.into_iter().map(|s| s / n as f64).collect(),
            n_instances: vec![n; abscissa.len()],
            abscissa,
        })
    }

    pub fn len(&self) -> usize {
        self.abscissa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissa.is_empty()
    }

    pub fn last_error(&self) -> Option<f64> {
        self.mean_error.last().copied()
    }

    /// Mean error at the abscissa closest to `x`.
    pub fn at(&self, x: f64) -> Option<f64> {
        self.abscissa
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| self.mean_error[i])
    }
}

/// `{study}_{direction}_{flux}.csv` with characters unsafe in file names replaced.
pub fn curve_file_name(study: &str, direction: Direction, flux: &str) -> String {
    let clean: String = flux
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{study}_{}_{clean}.csv", direction.as_str())
}

/// Writes a family of curves to one CSV, distinguished by the `tag` column.
pub fn write_curves(
    dir: &Path,
    study: &str,
    direction: Direction,
    flux: &str,
    curves: &[ErrorCurve],
) -> Result<PathBuf> {
    crate::storage::ensure_dir(dir)?;
    let path = dir.join(curve_file_name(study, direction, flux));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# study={study} direction={} flux={flux}",
        direction.as_str()
    );
    out.push_str("abscissa,mean_error,n_instances,tag\n");
    for c in curves {
        for i in 0..c.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c.abscissa[i], c.mean_error[i], c.n_instances[i], c.tag
            );
        }
    }
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEvalConfig {
    /// Instances per operator.
    pub instances: usize,
    /// Largest example count `J`; curves run over `1..=max_examples`.
    pub max_examples: usize,
    pub seed: u64,
}

impl GridEvalConfig {
    pub fn desk() -> Self {
        GridEvalConfig {
            instances: 10,
            max_examples: 3,
            seed: 0,
        }
    }

    pub fn paper() -> Self {
        GridEvalConfig {
            instances: 100,
            max_examples: 5,
            seed: 0,
        }
    }
}

/// Per-operator mean errors indexed by `J - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRow {
    pub operator_id: usize,
    pub flux: FluxSpec,
    pub forward: Vec<f64>,
    pub reverse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEvalReport {
    pub rows: Vec<OperatorRow>,
    pub skipped: Vec<(usize, String)>,
    pub forward: ErrorCurve,
    pub reverse: ErrorCurve,
}

struct OperatorErrors {
    row: OperatorRow,
    forward: Vec<Vec<f64>>,
    reverse: Vec<Vec<f64>>,
}

fn eval_operator(
    model: &dyn OperatorModel,
    ds: &OperatorDataset,
    cfg: &GridEvalConfig,
) -> Result<OperatorErrors> {
    let jmax = cfg.max_examples;
    let mut rng = rng_from(derive_labeled(cfg.seed, "grid-eval", ds.id as u64));
    let flux = &ds.operator.flux;
    let mut forward = Vec::with_capacity(cfg.instances);
    let mut reverse = Vec::with_capacity(cfg.instances);
    for _ in 0..cfg.instances {
        let picks: Vec<&CondQoIPair> = index::sample(&mut rng, ds.pairs.len(), jmax + 1)
            .iter()
            .map(|i| &ds.pairs[i])
            .collect();
        let (question, examples) = (picks[0], &picks[1..]);
        let fwd_examples: Vec<CondQoIPair> = examples.iter().map(|&p| p.clone()).collect();
        let rev_examples: Vec<CondQoIPair> = examples.iter().map(|p| p.swapped()).collect();
        let mut f_row = Vec::with_capacity(jmax);
        let mut r_row = Vec::with_capacity(jmax);
        for j in 1..=jmax {
            let pred = apply_operator(
                model,
                &fwd_examples[..j],
                &question.cond,
                Direction::Forward,
            )?;
            f_row.push(forward_error(&pred, &question.qoi)?);
            let pred =
                apply_operator(model, &rev_examples[..j], &question.qoi, Direction::Reverse)?;
            r_row.push(reverse_error(&pred, flux, question.stride, &question.qoi)?);
        }
        forward.push(f_row);
        reverse.push(r_row);
    }
    let mean = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..jmax)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            .collect()
    };
    Ok(OperatorErrors {
        row: OperatorRow {
            operator_id: ds.id,
            flux: flux.clone(),
            forward: mean(&forward),
            reverse: mean(&reverse),
        },
        forward,
        reverse,
    })
}

/// Forward and reverse error against the number of examples, averaged over
/// every operator and instance. Operators whose pool is too small are skipped.
pub fn grid_eval(
    model: &dyn OperatorModel,
    datasets: &[OperatorDataset],
    cfg: &GridEvalConfig,
) -> Result<GridEvalReport> {
    if cfg.instances == 0 || cfg.max_examples == 0 {
        return Err(Error::Argument(
            "grid evaluation needs instances and examples".into(),
        ));
    }
    if cfg.max_examples > model.max_examples() {
        return Err(Error::Argument(format!(
            "{} examples requested, the model accepts {}",
            cfg.max_examples,
            model.max_examples()
        )));
    }
    let mut order: Vec<&OperatorDataset> = datasets.iter().collect();
    order.sort_by_key(|d| d.id);
    let mut skipped = Vec::new();
    let mut usable = Vec::new();
    for ds in order {
        if ds.pairs.len() <= cfg.max_examples {
            skipped.push((
                ds.id,
                format!("{} pairs, need {}", ds.pairs.len(), cfg.max_examples + 1),
            ));
        } else {
            usable.push(ds);
        }
    }
    if usable.is_empty() {
        return Err(Error::Argument(
            "no operator has enough pairs for grid evaluation".into(),
        ));
    }
    let results: Vec<OperatorErrors> = usable
        .par_iter()
        .map(|ds| eval_operator(model, ds, cfg))
        .collect::<Result<_>>()?;
    let js: Vec<f64> = (1..=cfg.max_examples).map(|j| j as f64).collect();
    let all_f: Vec<Vec<f64>> = results
        .iter()
        .flat_map(|r| r.forward.iter().cloned())
        .collect();
    let all_r: Vec<Vec<f64>> = results
        .iter()
        .flat_map(|r| r.reverse.iter().cloned())
        .collect();
    Ok(GridEvalReport {
        forward: ErrorCurve::from_instances("forward", js.clone(), &all_f)?,
        reverse: ErrorCurve::from_instances("reverse", js, &all_r)?,
        rows: results.into_iter().map(|r| r.row).collect(),
        skipped,
    })
}

/// Cubic Taylor polynomial at zero, constant term dropped.
pub fn taylor_cubic(flux: &FluxSpec) -> CubicCoeffs {
    let h = 1e-3;
    let (dm, d0, dp) = (
        flux.derivative(-h),
        flux.derivative(0.0),
        flux.derivative(h),
    );
    let second = (dp - dm) / (2.0 * h);
    let third = (dp - 2.0 * d0 + dm) / (h * h);
    CubicCoeffs::new(third / 6.0, second / 2.0, d0)
}

/// Equation supplying examples in a generalization study.
#[derive(Debug, Clone, PartialEq)]
pub enum Equation {
    Flux(FluxSpec),
    /// Cubic fit of the true flux over the range of each instance's initial data.
    AdaptiveFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyEquation {
    pub tag: String,
    pub equation: Equation,
}

impl StudyEquation {
    fn resolve(&self, truth: &FluxSpec, initial: &GridFunction) -> Result<FluxSpec> {
        match &self.equation {
            Equation::Flux(f) => Ok(f.clone()),
            Equation::AdaptiveFit => Ok(adaptive_cubic_fit(truth, initial.values())?
                .coeffs
                .to_flux()),
        }
    }
}

/// Taylor, fit on `[-1, 1]`, fit on `[-2, 2]` and adaptive-fit cubics of `flux`.
pub fn similar_cubics(flux: &FluxSpec) -> Result<Vec<StudyEquation>> {
    Ok(vec![
        StudyEquation {
            tag: "taylor".into(),
            equation: Equation::Flux(taylor_cubic(flux).to_flux()),
        },
        StudyEquation {
            tag: "fit[-1,1]".into(),
            equation: Equation::Flux(cubic_fit(flux, -1.0, 1.0)?.to_flux()),
        },
        StudyEquation {
            tag: "fit[-2,2]".into(),
            equation: Equation::Flux(cubic_fit(flux, -2.0, 2.0)?.to_flux()),
        },
        StudyEquation {
            tag: "adaptive".into(),
            equation: Equation::AdaptiveFit,
        },
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub instances: usize,
    pub grf: GrfConfig,
    /// Frame spacing of the simulated records.
    pub dt: f64,
    pub t_end: f64,
    /// Span of given frames: `[0, window]` forward, `[t_end - window, t_end]` reverse.
    pub window: f64,
    pub max_stride: f64,
    pub examples_per_call: usize,
    pub direction: Direction,
    pub cov_r: Option<f64>,
    pub seed: u64,
}

impl StudyConfig {
    pub fn paper(direction: Direction) -> Self {
        StudyConfig {
            instances: 512,
            grf: GrfConfig::default(),
            dt: 0.01,
            t_end: 0.5,
            window: 0.1,
            max_stride: 0.05,
            examples_per_call: 5,
            direction,
            cov_r: None,
            seed: 0,
        }
    }

    pub fn desk(direction: Direction) -> Self {
        StudyConfig {
            instances: 32,
            ..StudyConfig::paper(direction)
        }
    }

    pub fn plan(&self, seed: u64) -> RolloutPlan {
        let (t0, horizon) = match self.direction {
            Direction::Forward => (self.window, self.t_end),
            Direction::Reverse => (self.t_end - self.window, 0.0),
        };
        RolloutPlan {
            t0,
            dt: self.dt,
            max_stride: self.max_stride,
            horizon,
            direction: self.direction,
            examples_per_call: self.examples_per_call,
            seed,
            cov_r: self.cov_r,
        }
    }

    fn save_every(&self) -> Result<usize> {
        let k = self.dt / BASE_DT;
        if (k - k.round()).abs() > 1e-9 || k.round() < 1.0 {
            return Err(Error::Config(format!(
                "study dt {} is not a multiple of {BASE_DT}",
                self.dt
            )));
        }
        Ok(k.round() as usize)
    }
}

/// Comparison 1: each equation predicted from its own examples and scored
/// against its own solution. Comparison 2: examples from each equation,
/// question and truth from the true flux.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationCurves {
    pub comparison1: Vec<ErrorCurve>,
    pub comparison2: Vec<ErrorCurve>,
}

struct Instance {
    initial: GridFunction,
    truth: Record,
    plan: RolloutPlan,
}

fn study_instance(
    flux: &FluxSpec,
    cfg: &StudyConfig,
    sampler: &GrfSampler,
    i: usize,
) -> Result<Instance> {
    let initial = sampler.sample(derive_labeled(cfg.seed, "study-initial", i as u64))?;
    let truth = simulate(&initial, flux, cfg.t_end, BASE_DT, cfg.save_every()?)?;
    Ok(Instance {
        initial,
        truth,
        plan: cfg.plan(derive_labeled(cfg.seed, "study-rollout", i as u64)),
    })
}

/// Per-frame errors of `predictions` against `truth`, by direction.
fn rollout_errors(
    predictions: &Record,
    truth: &Record,
    flux: &FluxSpec,
    plan: &RolloutPlan,
) -> Result<Vec<f64>> {
    let at = |t: f64| {
        truth
            .index_of_time(t)
            .map(|k| truth.frame(k))
            .ok_or_else(|| Error::Argument(format!("no truth frame at t = {t}")))
    };
    match plan.direction {
        Direction::Forward => predictions
            .frames()
            .iter()
            .enumerate()
            .map(|(i, f)| forward_error(f, at(predictions.time(i))?))
            .collect(),
        Direction::Reverse => {
            let curve = recursive_reverse_error(predictions, flux, plan.t0, at(plan.t0)?)?;
            // Report in prediction order (times moving away from t0).
            Ok(curve.mean_error.into_iter().rev().collect())
        }
    }
}

fn curve_times(cfg: &StudyConfig) -> Result<Vec<f64>> {
    cfg.plan(0).times()
}

/// Rollout error of the true equation against time, averaged over instances.
pub fn rollout_curve(
    model: &dyn OperatorModel,
    flux: &FluxSpec,
    cfg: &StudyConfig,
    tag: &str,
) -> Result<ErrorCurve> {
    let sampler = GrfSampler::new(cfg.grf.clone())?;
    let rows: Vec<Vec<f64>> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let inst = study_instance(flux, cfg, &sampler, i)?;
            let pred = recursive_rollout_from(model, &inst.truth, None, &inst.plan)?;
            rollout_errors(&pred, &inst.truth, flux, &inst.plan)
        })
        .collect::<Result<_>>()?;
    ErrorCurve::from_instances(tag, curve_times(cfg)?, &rows)
}

/// Both comparisons for `flux` against `equations`. The true equation appears
/// first in each family, tagged `"correct"`.
pub fn generalization_study(
    model: &dyn OperatorModel,
    flux: &FluxSpec,
    equations: &[StudyEquation],
    cfg: &StudyConfig,
) -> Result<GeneralizationCurves> {
    if cfg.instances == 0 {
        return Err(Error::Argument(
            "a study needs at least one instance".into(),
        ));
    }
    let sampler = GrfSampler::new(cfg.grf.clone())?;
    let save_every = cfg.save_every()?;
    // Per instance: [correct, c1 per equation..., c2 per equation...].
    let per_instance: Vec<Vec<Vec<f64>>> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let inst = study_instance(flux, cfg, &sampler, i)?;
            let question = inst
                .truth
                .index_of_time(inst.plan.t0)
                .map(|k| inst.truth.frame(k).clone())
                .ok_or_else(|| {
                    Error::Argument(format!("no truth frame at t0 = {}", inst.plan.t0))
                })?;
            let correct = recursive_rollout_from(model, &inst.truth, None, &inst.plan)?;
            let mut out = vec![rollout_errors(&correct, &inst.truth, flux, &inst.plan)?];
            let mut second = Vec::with_capacity(equations.len());
            for eq in equations {
                let f = eq.resolve(flux, &inst.initial)?;
                let own = simulate(&inst.initial, &f, cfg.t_end, BASE_DT, save_every)?;
                let p1 = recursive_rollout_from(model, &own, None, &inst.plan)?;
                out.push(rollout_errors(&p1, &own, &f, &inst.plan)?);
                let p2 = recursive_rollout_from(model, &own, Some(&question), &inst.plan)?;
                second.push(rollout_errors(&p2, &inst.truth, flux, &inst.plan)?);
            }
            out.extend(second);
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let times = curve_times(cfg)?;
    let family = |k: usize, tag: &str| -> Result<ErrorCurve> {
        let rows: Vec<Vec<f64>> = per_instance.iter().map(|r| r[k].clone()).collect();
        ErrorCurve::from_instances(tag, times.clone(), &rows)
    };
    let correct = family(0, "correct")?;
    let mut comparison1 = vec![correct.clone()];
    let mut comparison2 = vec![correct];
    for (e, eq) in equations.iter().enumerate() {
        comparison1.push(family(1 + e, &eq.tag)?);
        comparison2.push(family(1 + equations.len() + e, &eq.tag)?);
    }
    Ok(GeneralizationCurves {
        comparison1,
        comparison2,
    })
}

/// Rollout curves with change of variables at each half-width (`None` = off).
pub fn cov_sweep(
    model: &dyn OperatorModel,
    flux: &FluxSpec,
    cfg: &StudyConfig,
    settings: &[Option<f64>],
) -> Result<Vec<ErrorCurve>> {
    settings
        .iter()
        .map(|&r| {
            let tag = r.map_or_else(|| "off".to_string(), |r| format!("r={r}"));
            let c = StudyConfig {
                cov_r: r,
                ..cfg.clone()
            };
            rollout_curve(model, flux, &c, &tag)
        })
        .collect()
}

/// Rollout curves for each maximum stride.
pub fn stride_sweep(
    model: &dyn OperatorModel,
    flux: &FluxSpec,
    cfg: &StudyConfig,
    strides: &[f64],
) -> Result<Vec<ErrorCurve>> {
    strides
        .iter()
        .map(|&s| {
            let c = StudyConfig {
                max_stride: s,
                ..cfg.clone()
            };
            rollout_curve(model, flux, &c, &format!("S={s}"))
        })
        .collect()
}
