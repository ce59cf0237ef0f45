//! Uniform radial and time grids, radial quadrature and trajectory containers.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest radial grid accepted anywhere in the crate.
pub const MIN_RADIAL_POINTS: usize = 16;

/// Uniform grid `r_j = j h`, `j = 0..n_points`, with `r_0 = 0` and `r_{n-1} = r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RadialGridSpec", into = "RadialGridSpec")]
pub struct RadialGrid {
    r_max: f64,
    n_points: usize,
    h: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RadialGridSpec {
    r_max: f64,
    n_points: usize,
}

impl TryFrom<RadialGridSpec> for RadialGrid {
    type Error = Error;
    fn try_from(spec: RadialGridSpec) -> Result<Self> {
        RadialGrid::new(spec.r_max, spec.n_points)
    }
}

impl From<RadialGrid> for RadialGridSpec {
    fn from(grid: RadialGrid) -> Self {
        RadialGridSpec {
            r_max: grid.r_max,
            n_points: grid.n_points,
        }
    }
}

/// Which composite rule [`RadialGrid::weights`] produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Simpson,
    Trapezoid,
}

impl RadialGrid {
    pub fn new(r_max: f64, n_points: usize) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::InvalidGrid(format!("r_max must be positive, got {r_max}")));
        }
        if n_points < MIN_RADIAL_POINTS {
            return Err(Error::InvalidGrid(format!(
                "n_points must be at least {MIN_RADIAL_POINTS}, got {n_points}"
            )));
        }
        Ok(Self {
            r_max,
            n_points,
            h: r_max / (n_points - 1) as f64,
        })
    }

    /// Grid with spacing as close as possible to `h` that ends exactly on `r_max`.
    pub fn with_spacing(r_max: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        let n = (r_max / h).round() as usize + 1;
        Self::new(r_max, n)
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn r(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.r(j)).collect()
    }

    pub fn rule(&self) -> QuadratureRule {
        if self.n_points % 2 == 1 {
            QuadratureRule::Simpson
        } else {
            QuadratureRule::Trapezoid
        }
    }

    /// Composite Simpson weights for an odd number of nodes, trapezoid otherwise.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.n_points;
        let h = self.h;
        let mut w = vec![0.0; n];
        match self.rule() {
            QuadratureRule::Simpson => {
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj = if j == 0 || j == n - 1 {
                        h / 3.0
                    } else if j % 2 == 1 {
                        4.0 * h / 3.0
                    } else {
                        2.0 * h / 3.0
                    };
                }
            }
            QuadratureRule::Trapezoid => {
                w.iter_mut().for_each(|wj| *wj = h);
                w[0] = 0.5 * h;
                w[n - 1] = 0.5 * h;
            }
        }
        w
    }

    /// Radial measure `4π w_j r_j²`, the discrete version of `d³r` for spherical integrands.
    pub fn volume_weights(&self) -> Vec<f64> {
        self.weights()
            .iter()
            .enumerate()
            .map(|(j, w)| 4.0 * PI * w * self.r(j) * self.r(j))
            .collect()
    }

    /// Index of the node nearest to `r` (clamped to the grid).
    pub fn index_of(&self, r: f64) -> usize {
        ((r / self.h).round().max(0.0) as usize).min(self.n_points - 1)
    }
}

/// `4π Σ w_j r_j² f_j`.
pub fn integrate_radial(samples: &[f64], grid: &RadialGrid) -> Result<f64> {
    if samples.len() != grid.n_points() {
        return Err(Error::InputShape(format!(
            "expected {} radial samples, got {}",
            grid.n_points(),
            samples.len()
        )));
    }
    Ok(grid
        .volume_weights()
        .iter()
        .zip(samples)
        .map(|(w, f)| w * f)
        .sum())
}

/// Uniform time grid `t_k = k dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TimeGridSpec", into = "TimeGridSpec")]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
    dt: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct TimeGridSpec {
    t_final: f64,
    n_steps: usize,
}

impl TryFrom<TimeGridSpec> for TimeGrid {
    type Error = Error;
    fn try_from(spec: TimeGridSpec) -> Result<Self> {
        TimeGrid::new(spec.t_final, spec.n_steps)
    }
}

impl From<TimeGrid> for TimeGridSpec {
    fn from(grid: TimeGrid) -> Self {
        TimeGridSpec {
            t_final: grid.t_final,
            n_steps: grid.n_steps,
        }
    }
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final >= 0.0) {
            return Err(Error::InvalidGrid(format!("t_final must be non-negative, got {t_final}")));
        }
        if n_steps == 0 || t_final == 0.0 {
            if n_steps == 0 && t_final == 0.0 {
                // a single slice at t = 0 (static snapshot)
                return Ok(Self {
                    t_final,
                    n_steps,
                    dt: 0.0,
                });
            }
            return Err(Error::InvalidGrid(format!(
                "t_final = {t_final} with n_steps = {n_steps} gives no positive dt"
            )));
        }
        Ok(Self {
            t_final,
            n_steps,
            dt: t_final / n_steps as f64,
        })
    }

    pub fn with_step(t_final: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        Self::new(t_final, (t_final / dt).round() as usize)
    }

    /// A single slice at t = 0.
    pub fn snapshot() -> Self {
        Self {
            t_final: 0.0,
            n_steps: 0,
            dt: 0.0,
        }
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_slices(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_slices()).map(|k| self.t(k)).collect()
    }

    /// Grid of every `stride`-th slice; `stride` must divide `n_steps`.
    pub fn thinned(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.n_steps % stride != 0 {
            return Err(Error::InvalidGrid(format!(
                "stride {stride} does not divide n_steps = {}",
                self.n_steps
            )));
        }
        if self.n_steps == 0 {
            return Ok(*self);
        }
        Self::new(self.t_final, self.n_steps / stride)
    }

    /// Ratio `self.n_steps / coarse.n_steps` if `coarse` is an exact thinning of `self`.
    pub fn refinement_of(&self, coarse: &TimeGrid) -> Option<usize> {
        if coarse.n_steps == 0 {
            return (self.t_final == coarse.t_final || self.n_steps == 0).then_some(1);
        }
        if (self.t_final - coarse.t_final).abs() > 1e-12 * self.t_final.max(1.0) {
            return None;
        }
        (self.n_steps % coarse.n_steps == 0).then(|| self.n_steps / coarse.n_steps)
    }
}

/// Real samples on a radial grid at every slice of a time grid: `values[k][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub grid: RadialGrid,
    pub times: TimeGrid,
    pub values: Vec<Vec<f64>>,
}

impl RadialField {
    pub fn new(grid: RadialGrid, times: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != times.n_slices() {
            return Err(Error::InputShape(format!(
                "expected {} time slices, got {}",
                times.n_slices(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|row| row.len() != grid.n_points()) {
            return Err(Error::InputShape(format!(
                "slice {bad} has {} samples, grid has {}",
                values[bad].len(),
                grid.n_points()
            )));
        }
        Ok(Self { grid, times, values })
    }

    pub fn from_fn(grid: RadialGrid, times: TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..times.n_slices())
            .map(|k| (0..grid.n_points()).map(|j| f(times.t(k), grid.r(j))).collect())
            .collect();
        Self { grid, times, values }
    }

    pub fn same_grids(&self, other: &RadialField) -> bool {
        self.grid == other.grid && self.times == other.times
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Largest `|f(r_max, t)| / max_r |f(r, t)|` over all slices.
    pub fn tail_ratio(&self) -> f64 {
        self.values
            .iter()
            .map(|row| {
                let peak = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if peak > 0.0 {
                    row[row.len() - 1].abs() / peak
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// Fails when the field has not decayed to `limit` of its peak at the outer edge.
    pub fn check_tail(&self, limit: f64) -> Result<()> {
        let ratio = self.tail_ratio();
        if ratio < limit {
            Ok(())
        } else {
            Err(Error::GridTail { ratio, limit })
        }
    }
}

/// Required decay `n(r_max)/max n` of a density at the outer edge of the grid.
pub const TAIL_LIMIT: f64 = 1e-12;

/// Two-electron density `n(r, t)`; integrates to 2 at every slice.
pub type DensityTrajectory = RadialField;

/// Where the central time stencil could not be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilQuality {
    Central,
    OneSided,
}

/// One-body potential `V(r, t)` with the gauge pinned at `V(0, t) = 0`.
///
/// Samples outside the evaluation mask are `NaN`; `mask_len[k]` is the number of
/// leading radial nodes where slice `k` is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTrajectory {
    pub field: RadialField,
    pub mask_len: Vec<usize>,
    pub quality: Vec<StencilQuality>,
}

impl PotentialTrajectory {
    /// Potential defined everywhere (e.g. an analytic well), gauge-pinned at the origin.
    pub fn from_fn(grid: RadialGrid, times: TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut field = RadialField::from_fn(grid, times, f);
        for row in &mut field.values {
            let v0 = row[0];
            row.iter_mut().for_each(|v| *v -= v0);
        }
        Self {
            mask_len: vec![grid.n_points(); times.n_slices()],
            quality: vec![StencilQuality::Central; times.n_slices()],
            field,
        }
    }

    pub fn is_masked(&self, k: usize, j: usize) -> bool {
        j >= self.mask_len[k]
    }

    /// Slice `k` continued past the mask by the least-squares fit `a + b r²` to the
    /// outer quarter of the defined nodes (a flat continuation lets a trapped
    /// density tail leak out).
    pub fn filled_slice(&self, k: usize) -> Vec<f64> {
        let row = &self.field.values[k];
        let len = self.mask_len[k].min(row.len());
        if len == row.len() {
            return row.clone();
        }
        if len < 8 {
            let edge = row[len.max(1) - 1];
            return row.iter().enumerate().map(|(j, &v)| if j < len { v } else { edge }).collect();
        }
        let grid = self.field.grid;
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (j, &v) in row.iter().enumerate().take(len).skip(len - len / 4) {
            let x = grid.r(j).powi(2);
            s0 += 1.0;
            s1 += x;
            s2 += x * x;
            t0 += v;
            t1 += x * v;
        }
        let b = (s0 * t1 - s1 * t0) / (s0 * s2 - s1 * s1);
        let a = (t0 - b * s1) / s0;
        row.iter()
            .enumerate()
            .map(|(j, &v)| if j < len { v } else { a + b * grid.r(j).powi(2) })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// Time derivative of a sampled trajectory with per-slice stencil flags.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDerivative<T> {
    pub values: Vec<Vec<T>>,
    pub quality: Vec<StencilQuality>,
}

/// Second-order finite differences in time.
///
/// Interior slices use central stencils; the two boundary slices use one-sided
/// second-order stencils (four points for the second derivative when available).
pub fn d_dt<T>(values: &[Vec<T>], dt: f64, order: DerivativeOrder) -> Result<TimeDerivative<T>>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let m = values.len();
    if m < 3 {
        return Err(Error::InsufficientData(format!(
            "time derivative needs at least 3 slices, got {m}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidGrid(format!("time step must be positive, got {dt}")));
    }
    let n = values[0].len();
    if values.iter().any(|row| row.len() != n) {
        return Err(Error::InputShape("slices differ in length".into()));
    }
    let lin = |coeffs: &[(usize, f64)], j: usize, scale: f64| -> T {
        let (k0, c0) = coeffs[0];
        let mut acc = values[k0][j] * c0;
        for &(k, c) in &coeffs[1..] {
            acc = acc + values[k][j] * c;
        }
        acc * scale
    };
    let mut out = Vec::with_capacity(m);
    let mut quality = vec![StencilQuality::Central; m];
    quality[0] = StencilQuality::OneSided;
    quality[m - 1] = StencilQuality::OneSided;
    for k in 0..m {
        let stencil: Vec<(usize, f64)> = match order {
            DerivativeOrder::First => {
                if k == 0 {
                    vec![(0, -1.5), (1, 2.0), (2, -0.5)]
                } else if k == m - 1 {
                    vec![(m - 1, 1.5), (m - 2, -2.0), (m - 3, 0.5)]
                } else {
                    vec![(k + 1, 0.5), (k - 1, -0.5)]
                }
            }
            DerivativeOrder::Second => {
                if k == 0 {
                    if m >= 4 {
                        vec![(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)]
                    } else {
                        vec![(0, 1.0), (1, -2.0), (2, 1.0)]
                    }
                } else if k == m - 1 {
                    if m >= 4 {
                        vec![(m - 1, 2.0), (m - 2, -5.0), (m - 3, 4.0), (m - 4, -1.0)]
                    } else {
                        vec![(m - 1, 1.0), (m - 2, -2.0), (m - 3, 1.0)]
                    }
                } else {
                    vec![(k - 1, 1.0), (k, -2.0), (k + 1, 1.0)]
                }
            }
        };
        let scale = match order {
            DerivativeOrder::First => 1.0 / dt,
            DerivativeOrder::Second => 1.0 / (dt * dt),
        };
        out.push((0..n).map(|j| lin(&stencil, j, scale)).collect());
    }
    Ok(TimeDerivative { values: out, quality })
}

impl RadialField {
    pub fn d_dt(&self, order: DerivativeOrder) -> Result<TimeDerivative<f64>> {
        d_dt(&self.values, self.times.dt(), order)
    }
}
