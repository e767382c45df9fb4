//! Condition/QoI pair pools generated with the WENO solver, their on-disk
//! layout, and assembly of training sequences.
//!
//! For every operator `(f, tau)` and each of `N` random initial conditions the
//! solver runs to `t_end` at the base step. Each of the saved states in the
//! first `window` time units becomes a condition whose QoI is the state `tau`
//! later, giving `(window / dt + 1) * N` candidate pairs, of which a seeded
//! random subset of `pool_size` is kept.
//!
//! Directory layout of one operator:
//!
//! ```text
//! meta.json      text metadata (flux encoding, tau, grid, seeds, counts)
//! pairs.f32      [num_pairs][2][n] little-endian f32, condition then QoI
//! records.f32    [num_records][num_frames][n] little-endian f32
//! ```

use std::path::Path;

use log::warn;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::FluxSpec;
use crate::grf::{GrfConfig, GrfSampler};
use crate::grid::{GridFunction, Record};
use crate::rng::{derive_labeled, rng_from};
use crate::solver;
use crate::storage;

pub use crate::prompt::build_prompt;

/// Orientation of an operator: forward maps earlier states to later ones,
/// reverse swaps condition and QoI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "reverse" => Ok(Direction::Reverse),
            other => Err(Error::Argument(format!("unknown direction {other:?}"))),
        }
    }
}

/// A flux together with the stride `tau` of its forward operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub flux: FluxSpec,
    pub stride: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondQoIPair {
    pub cond: GridFunction,
    pub qoi: GridFunction,
    pub stride: f64,
    pub operator_id: usize,
}

impl CondQoIPair {
    pub fn new(
        cond: GridFunction,
        qoi: GridFunction,
        stride: f64,
        operator_id: usize,
    ) -> Result<Self> {
        cond.check_same_grid(&qoi)?;
        if !(stride > 0.0) {
            return Err(Error::Argument(format!(
                "pair stride must be positive, got {stride}"
            )));
        }
        Ok(CondQoIPair {
            cond,
            qoi,
            stride,
            operator_id,
        })
    }

    pub fn swapped(&self) -> Self {
        CondQoIPair {
            cond: self.qoi.clone(),
            qoi: self.cond.clone(),
            stride: self.stride,
            operator_id: self.operator_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Initial conditions per operator (`N`).
    pub n_initial: usize,
    pub grf: GrfConfig,
    pub t_end: f64,
    pub solver_dt: f64,
    /// Span of condition times, starting at zero.
    pub window: f64,
    pub stride: f64,
    /// Pairs kept per operator after downsampling.
    pub pool_size: usize,
    /// Full trajectories retained per operator for inference experiments.
    pub records_kept: usize,
    /// Solver steps between retained record frames.
    pub record_every: usize,
}

impl GenerationConfig {
    /// Full-scale protocol: 100 initial conditions, 10000 stored pairs.
    pub fn paper() -> Self {
        GenerationConfig {
            n_initial: 100,
            grf: GrfConfig::default(),
            t_end: 0.5,
            solver_dt: solver::BASE_DT,
            window: 0.4,
            stride: 0.1,
            pool_size: 10_000,
            records_kept: 4,
            record_every: 20,
        }
    }

    pub fn desk() -> Self {
        GenerationConfig {
            n_initial: 4,
            pool_size: 64,
            records_kept: 2,
            ..GenerationConfig::paper()
        }
    }

    fn steps(&self, span: f64, what: &str) -> Result<usize> {
        let k = span / self.solver_dt;
        let r = k.round();
        if r < 1.0 || (k - r).abs() > 1e-9 * k {
            return Err(Error::Config(format!(
                "{what} {span} is not a positive multiple of the solver step {}",
                self.solver_dt
            )));
        }
        Ok(r as usize)
    }

    pub fn window_steps(&self) -> Result<usize> {
        self.steps(self.window, "collection window")
    }

    pub fn stride_steps(&self) -> Result<usize> {
        self.steps(self.stride, "stride")
    }

    /// Candidate pairs per initial condition (`window / dt + 1`).
    pub fn pairs_per_initial(&self) -> Result<usize> {
        Ok(self.window_steps()? + 1)
    }

    pub fn available_pairs(&self) -> Result<usize> {
        Ok(self.pairs_per_initial()? * self.n_initial)
    }

    pub fn validate(&self) -> Result<()> {
        self.grf.validate()?;
        if self.n_initial == 0 || self.pool_size == 0 || self.record_every == 0 {
            return Err(Error::Config(
                "n_initial, pool_size and record_every must be positive".into(),
            ));
        }
        let total = self.steps(self.t_end, "t_end")?;
        let needed = self.window_steps()? + self.stride_steps()?;
        if needed > total {
            return Err(Error::Config(format!(
                "window + stride ({} steps) exceeds the simulated horizon ({total} steps)",
                needed
            )));
        }
        if total % self.record_every != 0 {
            return Err(Error::Config(format!(
                "record_every={} does not divide the {total} solver steps",
                self.record_every
            )));
        }
        if self.records_kept > self.n_initial {
            return Err(Error::Config("records_kept exceeds n_initial".into()));
        }
        if self.pool_size > self.available_pairs()? {
            return Err(Error::Config(format!(
                "pool size {} exceeds the {} available pairs",
                self.pool_size,
                self.available_pairs()?
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub grf_seeds: Vec<u64>,
    pub pool_seed: u64,
}

#[derive(Debug, Clone)]
pub struct OperatorDataset {
    pub id: usize,
    pub operator: OperatorSpec,
    pub pairs: Vec<CondQoIPair>,
    pub records: Vec<Record>,
    pub available_pairs: usize,
    pub provenance: Provenance,
}

impl OperatorDataset {
    pub fn n(&self) -> usize {
        self.pairs.first().map(|p| p.cond.len()).unwrap_or(0)
    }
}

pub fn generate_operator_dataset(
    flux: &FluxSpec,
    cfg: &GenerationConfig,
    seed: u64,
) -> Result<OperatorDataset> {
    generate_operator_dataset_with_id(flux, cfg, seed, 0)
}

pub fn generate_operator_dataset_with_id(
    flux: &FluxSpec,
    cfg: &GenerationConfig,
    seed: u64,
    id: usize,
) -> Result<OperatorDataset> {
    cfg.validate()?;
    flux.validate()?;
    let sampler = GrfSampler::new(cfg.grf.clone())?;
    let total_steps = (cfg.t_end / cfg.solver_dt).round() as usize;
    let per_initial = cfg.pairs_per_initial()?;
    let offset = cfg.stride_steps()?;

    let grf_seeds: Vec<u64> = (0..cfg.n_initial)
        .map(|i| derive_labeled(seed, "grf", i as u64))
        .collect();
    let mut trajectories = Vec::with_capacity(cfg.n_initial);
    for &s in &grf_seeds {
        let u0 = sampler.sample(s)?;
        trajectories.push(solver::simulate(&u0, flux, cfg.t_end, cfg.solver_dt, 1)?);
    }

    let available = per_initial * cfg.n_initial;
    let pool_seed = derive_labeled(seed, "pool", 0);
    let mut rng = rng_from(pool_seed);
    let mut chosen = index::sample(&mut rng, available, cfg.pool_size).into_vec();
    chosen.sort_unstable();
    let pairs = chosen
        .into_iter()
        .map(|idx| {
            let (ic, k) = (idx / per_initial, idx % per_initial);
            let traj = &trajectories[ic];
            CondQoIPair {
                cond: traj.frame(k).clone(),
                qoi: traj.frame(k + offset).clone(),
                stride: cfg.stride,
                operator_id: id,
            }
        })
        .collect();

    let records = trajectories
        .iter()
        .take(cfg.records_kept)
        .map(|t| t.thin(cfg.record_every))
        .collect::<Result<Vec<_>>>()?;
    debug_assert!(records
        .iter()
        .all(|r| r.len() == total_steps / cfg.record_every + 1));

    Ok(OperatorDataset {
        id,
        operator: OperatorSpec {
            flux: flux.clone(),
            stride: cfg.stride,
        },
        pairs,
        records,
        available_pairs: available,
        provenance: Provenance {
            seed,
            grf_seeds,
            pool_seed,
        },
    })
}

/// Generates one dataset per flux in parallel. Operators whose simulation fails
/// are logged and skipped; the survivors keep their position-derived ids.
pub fn generate_operator_datasets(
    fluxes: &[FluxSpec],
    cfg: &GenerationConfig,
    root_seed: u64,
) -> Vec<OperatorDataset> {
    let results: Vec<(usize, Result<OperatorDataset>)> = fluxes
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let seed = derive_labeled(root_seed, "operator", i as u64);
            (i, generate_operator_dataset_with_id(f, cfg, seed, i))
        })
        .collect();
    results
        .into_iter()
        .filter_map(|(i, r)| match r {
            Ok(ds) => Some(ds),
            Err(e) => {
                warn!("skipping operator {i} ({}): {e}", fluxes[i]);
                None
            }
        })
        .collect()
}

/// `count` cubic fluxes with coefficients uniform in `[-1, 1]^3`.
pub fn sample_training_fluxes(count: usize, seed: u64) -> Vec<FluxSpec> {
    let mut rng = rng_from(derive_labeled(seed, "fluxes", 0));
    (0..count)
        .map(|_| {
            FluxSpec::cubic(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            )
        })
        .collect()
}

/// Uniform `k x k x k` grid of cubic coefficients over `[-1, 1]^3`.
pub fn coefficient_grid(k: usize) -> Vec<FluxSpec> {
    let axis: Vec<f64> = if k == 1 {
        vec![0.0]
    } else {
        (0..k)
            .map(|i| -1.0 + 2.0 * i as f64 / (k - 1) as f64)
            .collect()
    };
    let mut out = Vec::with_capacity(k * k * k);
    for &a in &axis {
        for &b in &axis {
            for &c in &axis {
                out.push(FluxSpec::cubic(a, b, c));
            }
        }
    }
    out
}

/// `I` pairs of one operator, ordered for a single model input.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSequence {
    pub pairs: Vec<CondQoIPair>,
    pub orientation: Direction,
}

impl TrainingSequence {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Same pairs with condition and QoI exchanged.
    pub fn reversed(&self) -> Self {
        TrainingSequence {
            pairs: self.pairs.iter().map(CondQoIPair::swapped).collect(),
            orientation: self.orientation.flipped(),
        }
    }
}

pub fn sample_training_sequence(
    ds: &OperatorDataset,
    len: usize,
    orientation: Direction,
    seed: u64,
) -> Result<TrainingSequence> {
    let mut rng = rng_from(seed);
    sample_training_sequence_with(ds, len, orientation, &mut rng)
}

pub fn sample_training_sequence_with<R: Rng + ?Sized>(
    ds: &OperatorDataset,
    len: usize,
    orientation: Direction,
    rng: &mut R,
) -> Result<TrainingSequence> {
    if len == 0 || ds.pairs.len() < len {
        return Err(Error::Argument(format!(
            "cannot draw {len} pairs from a pool of {}",
            ds.pairs.len()
        )));
    }
    let picks = index::sample(rng, ds.pairs.len(), len);
    let pairs = picks
        .iter()
        .map(|i| match orientation {
            Direction::Forward => ds.pairs[i].clone(),
            Direction::Reverse => ds.pairs[i].swapped(),
        })
        .collect();
    Ok(TrainingSequence { pairs, orientation })
}

/// All pairs `stride_steps` frames apart within `rec`; reverse pairs point
/// back in time (`<u(t_i), u(t_i - s)>`).
pub fn pairs_from_record(
    rec: &Record,
    stride_steps: usize,
    direction: Direction,
) -> Result<Vec<CondQoIPair>> {
    if stride_steps == 0 || rec.len() <= stride_steps {
        return Err(Error::Argument(format!(
            "record of {} frames is too short for a stride of {stride_steps} frames",
            rec.len()
        )));
    }
    let stride = stride_steps as f64 * rec.dt();
    let frames = rec.frames();
    let pairs = match direction {
        Direction::Forward => (0..frames.len() - stride_steps)
            .map(|i| CondQoIPair {
                cond: frames[i].clone(),
                qoi: frames[i + stride_steps].clone(),
                stride,
                operator_id: 0,
            })
            .collect(),
        Direction::Reverse => (stride_steps..frames.len())
            .map(|i| CondQoIPair {
                cond: frames[i].clone(),
                qoi: frames[i - stride_steps].clone(),
                stride,
                operator_id: 0,
            })
            .collect(),
    };
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub operator_id: usize,
    pub flux: FluxSpec,
    pub tau: f64,
    pub n: usize,
    pub dx: f64,
    pub solver_dt: f64,
    pub record_dt: f64,
    pub n_initial: usize,
    pub available_pairs: usize,
    pub num_pairs: usize,
    pub num_records: usize,
    pub frames_per_record: usize,
    pub provenance: Provenance,
}

pub const META_FILE: &str = "meta.json";
pub const PAIRS_FILE: &str = "pairs.f32";
pub const RECORDS_FILE: &str = "records.f32";

pub fn write_dataset(ds: &OperatorDataset, cfg: &GenerationConfig, dir: &Path) -> Result<()> {
    storage::ensure_dir(dir)?;
    let n = ds.n();
    let frames_per_record = ds.records.first().map(Record::len).unwrap_or(0);
    let meta = DatasetMeta {
        operator_id: ds.id,
        flux: ds.operator.flux.clone(),
        tau: ds.operator.stride,
        n,
        dx: 1.0 / n as f64,
        solver_dt: cfg.solver_dt,
        record_dt: ds
            .records
            .first()
            .map(Record::dt)
            .unwrap_or(cfg.solver_dt * cfg.record_every as f64),
        n_initial: cfg.n_initial,
        available_pairs: ds.available_pairs,
        num_pairs: ds.pairs.len(),
        num_records: ds.records.len(),
        frames_per_record,
        provenance: ds.provenance.clone(),
    };
    storage::write_json(&dir.join(META_FILE), &meta)?;
    storage::write_f32_le(
        &dir.join(PAIRS_FILE),
        ds.pairs
            .iter()
            .flat_map(|p| p.cond.values().iter().chain(p.qoi.values()))
            .map(|&v| v as f32),
    )?;
    storage::write_f32_le(
        &dir.join(RECORDS_FILE),
        ds.records
            .iter()
            .flat_map(|r| r.frames().iter().flat_map(|f| f.values().iter()))
            .map(|&v| v as f32),
    )
}

fn to_grid(chunk: &[f32]) -> Result<GridFunction> {
    GridFunction::new(chunk.iter().map(|&v| v as f64).collect())
}

pub fn read_dataset(dir: &Path) -> Result<OperatorDataset> {
    let meta: DatasetMeta = storage::read_json(&dir.join(META_FILE))?;
    let n = meta.n;
    let pairs_path = dir.join(PAIRS_FILE);
    let raw = storage::read_f32_le(&pairs_path)?;
    if raw.len() != meta.num_pairs * 2 * n {
        return Err(Error::format(
            &pairs_path,
            format!(
                "expected {} floats, found {}",
                meta.num_pairs * 2 * n,
                raw.len()
            ),
        ));
    }
    let pairs = raw
        .chunks_exact(2 * n)
        .map(|c| {
            Ok(CondQoIPair {
                cond: to_grid(&c[..n])?,
                qoi: to_grid(&c[n..])?,
                stride: meta.tau,
                operator_id: meta.operator_id,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let records_path = dir.join(RECORDS_FILE);
    let raw = storage::read_f32_le(&records_path)?;
    let per_record = meta.frames_per_record * n;
    if raw.len() != meta.num_records * per_record {
        return Err(Error::format(
            &records_path,
            format!(
                "expected {} floats, found {}",
                meta.num_records * per_record,
                raw.len()
            ),
        ));
    }
    let records = if per_record == 0 {
        Vec::new()
    } else {
        raw.chunks_exact(per_record)
            .map(|r| {
                let frames = r.chunks_exact(n).map(to_grid).collect::<Result<Vec<_>>>()?;
                Record::new(frames, meta.record_dt, 0.0)
            })
            .collect::<Result<Vec<_>>>()?
    };

    Ok(OperatorDataset {
        id: meta.operator_id,
        operator: OperatorSpec {
            flux: meta.flux,
            stride: meta.tau,
        },
        pairs,
        records,
        available_pairs: meta.available_pairs,
        provenance: meta.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GenerationConfig {
        GenerationConfig {
            n_initial: 2,
            grf: GrfConfig {
                n: 20,
                ..GrfConfig::default()
            },
            t_end: 0.02,
            window: 0.01,
            stride: 0.005,
            pool_size: 10,
            records_kept: 1,
            record_every: 4,
            ..GenerationConfig::paper()
        }
    }

    #[test]
    fn pool_counts_follow_protocol() {
        let paper = GenerationConfig::paper();
        assert_eq!(paper.available_pairs().unwrap(), 80_100);
        assert_eq!(paper.pool_size, 10_000);
        let desk = GenerationConfig::desk();
        assert_eq!(desk.available_pairs().unwrap(), 3204);
        assert_eq!(desk.pool_size, 64);
    }

    #[test]
    fn zero_flux_pairs_are_identical() {
        let ds = generate_operator_dataset(&FluxSpec::zero(), &tiny(), 3).unwrap();
        assert_eq!(ds.pairs.len(), 10);
        assert_eq!(ds.available_pairs, 42);
        assert!(ds.pairs.iter().all(|p| p.cond == p.qoi));
        assert_eq!(ds.records.len(), 1);
        assert_eq!(ds.records[0].len(), 11);
    }

    #[test]
    fn stored_pairs_match_the_solver() {
        let flux = FluxSpec::cubic(0.5, -0.3, 0.8);
        let ds = generate_operator_dataset(&flux, &tiny(), 5).unwrap();
        for p in &ds.pairs {
            let pred = solver::exact_forward(&p.cond, &flux, p.stride).unwrap();
            assert!(pred.l1_distance(&p.qoi).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn downsampling_is_seeded() {
        let flux = FluxSpec::cubic(0.1, 0.2, 0.3);
        let a = generate_operator_dataset(&flux, &tiny(), 8).unwrap();
        let b = generate_operator_dataset(&flux, &tiny(), 8).unwrap();
        let c = generate_operator_dataset(&flux, &tiny(), 9).unwrap();
        assert_eq!(a.pairs, b.pairs);
        assert_ne!(a.pairs, c.pairs);
    }

    #[test]
    fn oversized_pool_is_rejected() {
        let cfg = GenerationConfig {
            pool_size: 43,
            ..tiny()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn sequence_orientation_and_determinism() {
        let ds = generate_operator_dataset(&FluxSpec::cubic(0.0, 1.0, 0.0), &tiny(), 1).unwrap();
        let fwd = sample_training_sequence(&ds, 4, Direction::Forward, 17).unwrap();
        assert_eq!(
            fwd,
            sample_training_sequence(&ds, 4, Direction::Forward, 17).unwrap()
        );
        let rev = sample_training_sequence(&ds, 4, Direction::Reverse, 17).unwrap();
        assert_eq!(rev, fwd.reversed());
        assert_eq!(rev.reversed(), fwd);
        assert!(sample_training_sequence(&ds, 11, Direction::Forward, 0).is_err());
    }

    #[test]
    fn record_pair_counts() {
        let frames = (0..11)
            .map(|i| GridFunction::constant(4, i as f64))
            .collect();
        let rec = Record::new(frames, 0.01, 0.0).unwrap();
        let fwd = pairs_from_record(&rec, 1, Direction::Forward).unwrap();
        assert_eq!(fwd.len(), 10);
        assert_eq!(fwd[0].cond.values()[0], 0.0);
        assert_eq!(fwd[0].qoi.values()[0], 1.0);
        let five = pairs_from_record(&rec, 5, Direction::Forward).unwrap();
        assert_eq!(five.len(), 6);
        assert!((five[0].stride - 0.05).abs() < 1e-15);
        let rev = pairs_from_record(&rec, 5, Direction::Reverse).unwrap();
        assert_eq!(rev.len(), 6);
        assert_eq!(rev[0].cond.values()[0], 5.0);
        assert_eq!(rev[0].qoi.values()[0], 0.0);
        for (f, r) in five.iter().zip(&rev) {
            assert_eq!(&f.swapped(), r);
        }
        assert!(pairs_from_record(&rec, 11, Direction::Forward).is_err());
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let flux = FluxSpec::cubic(0.2, 0.0, -0.4);
        let ds = generate_operator_dataset(&flux, &tiny(), 2).unwrap();
        write_dataset(&ds, &tiny(), dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.operator, ds.operator);
        assert_eq!(back.pairs.len(), ds.pairs.len());
        for (a, b) in ds.pairs.iter().zip(&back.pairs) {
            for (x, y) in a.qoi.values().iter().zip(b.qoi.values()) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        assert_eq!(back.records.len(), 1);
        assert_eq!(back.records[0].len(), ds.records[0].len());
        let bytes = std::fs::metadata(dir.path().join(PAIRS_FILE))
            .unwrap()
            .len();
        assert_eq!(bytes as usize, 10 * 2 * 20 * 4);
    }

    #[test]
    fn coefficient_grid_sizes() {
        assert_eq!(coefficient_grid(3).len(), 27);
        assert_eq!(coefficient_grid(11).len(), 1331);
        assert_eq!(coefficient_grid(3)[0], FluxSpec::cubic(-1.0, -1.0, -1.0));
    }
}
