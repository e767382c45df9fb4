//! Cell-average data on the periodic unit interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell averages of `u` on a uniform periodic grid over `[0, 1)`.
///
/// Cell `i` covers `[i dx, (i + 1) dx]`; its key is the left edge `x_i = i dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    values: Vec<f64>,
    dx: f64,
}

impl GridFunction {
    /// Grid function on `n = values.len()` cells spanning the unit interval.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument(
                "grid function needs at least one cell".into(),
            ));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                index,
                context: "grid function value".into(),
            });
        }
        let dx = 1.0 / values.len() as f64;
        Ok(GridFunction { values, dx })
    }

    pub fn zeros(n: usize) -> Self {
        GridFunction {
            values: vec![0.0; n],
            dx: 1.0 / n as f64,
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        GridFunction {
            values: vec![value; n],
            dx: 1.0 / n as f64,
        }
    }

    /// Samples `f` at the cell keys `x_i = i dx`.
    pub fn from_point_values(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = 1.0 / n as f64;
        Self::new((0..n).map(|i| f(i as f64 * dx)).collect())
    }

    /// Cell averages of `f` computed with 5-point Gauss-Legendre quadrature per cell.
    pub fn from_cell_averages(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        const NODES: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683,
            0.538_469_310_105_683,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
            0.236_926_885_056_189,
        ];
        let dx = 1.0 / n as f64;
        Self::new(
            (0..n)
                .map(|i| {
                    let mid = (i as f64 + 0.5) * dx;
                    NODES
                        .iter()
                        .zip(WEIGHTS)
                        .map(|(s, w)| 0.5 * w * f(mid + 0.5 * dx * s))
                        .sum()
                })
                .collect(),
        )
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        let dx = 1.0 / values.len() as f64;
        GridFunction { values, dx }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn key(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn keys(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.key(i)).collect()
    }

    /// Total mass `sum(values) * dx`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Shape {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }

    /// Mean absolute difference over cells.
    pub fn l1_distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.len() as f64)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            values: self.values.iter().map(|&v| f(v)).collect(),
            dx: self.dx,
        }
    }

    /// Keeps every `stride`-th cell starting at cell 0.
    pub fn subsample(&self, stride: usize) -> Result<GridFunction> {
        if stride == 0 || !self.len().is_multiple_of(stride) {
            return Err(Error::Argument(format!(
                "cannot subsample {} cells with stride {stride}",
                self.len()
            )));
        }
        Ok(GridFunction::from_raw(
            self.values.iter().step_by(stride).copied().collect(),
        ))
    }

    /// Periodic linear interpolation onto a grid `factor` times finer; inverse of
    /// [`subsample`](Self::subsample) on the retained cells.
    pub fn upsample(&self, factor: usize) -> Result<GridFunction> {
        if factor == 0 {
            return Err(Error::Argument("upsample factor must be positive".into()));
        }
        let n = self.len();
        let mut out = Vec::with_capacity(n * factor);
        for i in 0..n {
            let here = self.values[i];
            let next = self.values[(i + 1) % n];
            for j in 0..factor {
                let w = j as f64 / factor as f64;
                out.push((1.0 - w) * here + w * next);
            }
        }
        Ok(GridFunction::from_raw(out))
    }
}

/// Frames at uniform spacing `dt` starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    frames: Vec<GridFunction>,
    dt: f64,
    t0: f64,
}

impl Record {
    pub fn new(frames: Vec<GridFunction>, dt: f64, t0: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Argument("record needs at least one frame".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Argument(format!(
                "record spacing must be positive, got {dt}"
            )));
        }
        let n = frames[0].len();
        if let Some(bad) = frames.iter().find(|f| f.len() != n) {
            return Err(Error::Shape {
                expected: n,
                actual: bad.len(),
            });
        }
        Ok(Record { frames, dt, t0 })
    }

    pub fn frames(&self) -> &[GridFunction] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<GridFunction> {
        self.frames
    }

    pub fn frame(&self, i: usize) -> &GridFunction {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn n(&self) -> usize {
        self.frames[0].len()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Index of the frame at time `t`, if `t` lies on the record's time lattice.
    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        let k = (t - self.t0) / self.dt;
        let idx = k.round();
        if idx < 0.0 || (k - idx).abs() > 1e-6 || idx as usize >= self.len() {
            return None;
        }
        Some(idx as usize)
    }

    /// Every `every`-th frame, keeping the first.
    pub fn thin(&self, every: usize) -> Result<Record> {
        if every == 0 {
            return Err(Error::Argument("thinning factor must be positive".into()));
        }
        Record::new(
            self.frames.iter().step_by(every).cloned().collect(),
            self.dt * every as f64,
            self.t0,
        )
    }

    /// Frames `range` as a new record.
    pub fn slice(&self, start: usize, end: usize) -> Result<Record> {
        if start >= end || end > self.len() {
            return Err(Error::Argument(format!(
                "invalid frame range {start}..{end} for a record of {} frames",
                self.len()
            )));
        }
        Record::new(self.frames[start..end].to_vec(), self.dt, self.time(start))
    }

    pub fn map_frames(&self, f: impl Fn(&GridFunction) -> Result<GridFunction>) -> Result<Record> {
        Record::new(
            self.frames.iter().map(f).collect::<Result<Vec<_>>>()?,
            self.dt,
            self.t0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spans_unit_interval() {
        let g = GridFunction::zeros(100);
        assert!((g.len() as f64 * g.dx() - 1.0).abs() < 1e-12);
        assert_eq!(g.key(3), 0.03);
    }

    #[test]
    fn rejects_non_finite_values() {
        let err = GridFunction::new(vec![0.0, f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Numeric { index: 1, .. }));
    }

    #[test]
    fn cell_averages_of_linear_profile_are_midpoints() {
        let g = GridFunction::from_cell_averages(10, |x| 2.0 * x + 1.0).unwrap();
        for (i, v) in g.values().iter().enumerate() {
            let mid = (i as f64 + 0.5) * 0.1;
            assert!((v - (2.0 * mid + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn subsample_then_upsample_keeps_retained_cells() {
        let g = GridFunction::from_point_values(100, |x| (2.0 * std::f64::consts::PI * x).sin())
            .unwrap();
        let coarse = g.subsample(2).unwrap();
        assert_eq!(coarse.len(), 50);
        let fine = coarse.upsample(2).unwrap();
        for i in (0..100).step_by(2) {
            assert_eq!(fine.values()[i], g.values()[i]);
        }
        assert!(fine.l1_distance(&g).unwrap() < 1e-3);
        assert!(g.subsample(3).is_err());
    }

    #[test]
    fn record_time_lookup() {
        let frames = vec![GridFunction::zeros(4); 11];
        let rec = Record::new(frames, 0.01, 0.4).unwrap();
        assert_eq!(rec.index_of_time(0.45), Some(5));
        assert_eq!(rec.index_of_time(0.455), None);
        assert_eq!(rec.index_of_time(0.6), None);
        assert!((rec.t_end() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn record_rejects_mixed_grids() {
        let frames = vec![GridFunction::zeros(4), GridFunction::zeros(5)];
        assert!(Record::new(frames, 0.1, 0.0).is_err());
    }
}
