//! Discrete-time linear response: causal kernels, Dyson composition, and the
//! second-kind Volterra inversion from a density change back to its drive.
//!
//! Time integrals use the left-rectangle rule including the equal-time term,
//! `Δn_k = dt Σ_{k'≤k} χ[k][k'] v_{k'}`, so every solve is a forward substitution
//! and nothing above the time diagonal is ever stored.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{RadialGrid, StencilQuality, TimeGrid};
use crate::rm::{solve_ground_state, FrequencyLaw, FrequencyProtocol, InteractionSpec, Potential, TrapPotential};

/// Block lower-triangular kernel `χ[k][k']` (`d × d` row-major blocks) for `k' ≤ k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalKernel {
    d: usize,
    times: TimeGrid,
    rows: Vec<Vec<f64>>,
}

/// Result of inspecting the storage of a [`CausalKernel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CausalityAudit {
    pub rows: usize,
    /// Entries stored for `k' > k` (always zero: rows hold exactly `k + 1` blocks).
    pub stored_upper_blocks: usize,
    /// `max |χ[k][k']|` over `k' > k` as returned by [`CausalKernel::get`].
    pub max_upper: f64,
}

impl CausalKernel {
    pub fn zeros(d: usize, times: TimeGrid) -> Self {
        let rows = (0..times.n_slices()).map(|k| vec![0.0; (k + 1) * d * d]).collect();
        Self { d, times, rows }
    }

    pub fn from_fn(d: usize, times: TimeGrid, f: impl Fn(usize, usize, usize, usize) -> f64 + Sync) -> Self {
        let rows = (0..times.n_slices())
            .into_par_iter()
            .map(|k| {
                let mut row = vec![0.0; (k + 1) * d * d];
                for kp in 0..=k {
                    for i in 0..d {
                        for j in 0..d {
                            row[(kp * d + i) * d + j] = f(k, kp, i, j);
                        }
                    }
                }
                row
            })
            .collect();
        Self { d, times, rows }
    }

    /// Scalar kernel from `χ(t, t')` sampled for `t' ≤ t`.
    pub fn from_scalar(times: TimeGrid, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        Self::from_fn(1, times, |k, kp, _, _| f(times.t(k), times.t(kp)))
    }

    /// Rebuild from stored rows; row `k` must hold exactly `(k + 1) d²` values.
    pub fn from_rows(d: usize, times: TimeGrid, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != times.n_slices() {
            return Err(Error::InputShape(format!("{} rows for {} slices", rows.len(), times.n_slices())));
        }
        for (k, row) in rows.iter().enumerate() {
            if row.len() != (k + 1) * d * d {
                return Err(Error::InputShape(format!("row {k} has {} values, expected {}", row.len(), (k + 1) * d * d)));
            }
        }
        Ok(Self { d, times, rows })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    pub fn n_slices(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    /// Block `χ[k][k']`; `kp ≤ k` is required.
    pub fn block(&self, k: usize, kp: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.rows[k][kp * dd..(kp + 1) * dd]
    }

    pub fn block_mut(&mut self, k: usize, kp: usize) -> &mut [f64] {
        let dd = self.d * self.d;
        &mut self.rows[k][kp * dd..(kp + 1) * dd]
    }

    /// Any element; exactly zero above the time diagonal.
    pub fn get(&self, k: usize, kp: usize, i: usize, j: usize) -> f64 {
        if kp > k {
            0.0
        } else {
            self.block(k, kp)[i * self.d + j]
        }
    }

    pub fn audit(&self) -> CausalityAudit {
        let dd = self.d * self.d;
        let stored_upper_blocks = self.rows.iter().enumerate().map(|(k, r)| (r.len() / dd).saturating_sub(k + 1)).sum();
        let n = self.rows.len();
        let mut max_upper: f64 = 0.0;
        for k in 0..n {
            for kp in k + 1..n {
                for i in 0..self.d {
                    for j in 0..self.d {
                        max_upper = max_upper.max(self.get(k, kp, i, j).abs());
                    }
                }
            }
        }
        CausalityAudit {
            rows: n,
            stored_upper_blocks,
            max_upper,
        }
    }
}

/// Per-slice vectors of length `d` on a time grid (drives, density changes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSeries {
    pub times: TimeGrid,
    pub values: Vec<Vec<f64>>,
}

impl ResponseSeries {
    pub fn zeros(d: usize, times: TimeGrid) -> Self {
        Self {
            times,
            values: vec![vec![0.0; d]; times.n_slices()],
        }
    }

    pub fn from_scalar(times: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            times,
            values: times.times().into_iter().map(|t| vec![f(t)]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `max |self − other| / max |other|` (absolute if `other` vanishes).
    pub fn relative_sup_error(&self, other: &ResponseSeries) -> f64 {
        let num = self
            .values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let den = other.sup();
        if den > 0.0 {
            num / den
        } else {
            num
        }
    }
}

fn check_series(chi: &CausalKernel, s: &ResponseSeries, what: &str) -> Result<()> {
    if s.times != chi.times {
        return Err(Error::InputShape(format!("{what} and kernel time grids differ")));
    }
    if s.values.iter().any(|v| v.len() != chi.d) {
        return Err(Error::InputShape(format!("{what} has slices of the wrong dimension (kernel d = {})", chi.d)));
    }
    Ok(())
}

/// `acc += B x` for a row-major `d × d` block.
fn add_block_mul(acc: &mut [f64], block: &[f64], x: &[f64]) {
    let d = x.len();
    for (i, a) in acc.iter_mut().enumerate() {
        let row = &block[i * d..(i + 1) * d];
        *a += row.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
    }
}

/// `Σ_{k' < upto} χ[k][k'] v_{k'}`.
fn history(chi: &CausalKernel, k: usize, upto: usize, v: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; chi.d];
    for (kp, vk) in v.iter().enumerate().take(upto) {
        add_block_mul(&mut acc, chi.block(k, kp), vk);
    }
    acc
}

/// `Δn_k = dt Σ_{k'≤k} χ[k][k'] v_{k'}`.
pub fn forward_response(chi: &CausalKernel, v: &ResponseSeries) -> Result<ResponseSeries> {
    check_series(chi, v, "drive")?;
    let dt = chi.times.dt();
    let values = (0..chi.n_slices())
        .into_par_iter()
        .map(|k| {
            let mut acc = history(chi, k, k, &v.values);
            add_block_mul(&mut acc, chi.block(k, k), &v.values[k]);
            acc.iter().map(|a| a * dt).collect()
        })
        .collect();
    Ok(ResponseSeries { times: v.times, values })
}

/// Spherical Hartree matrix `H[j][j'] = 4π r_{j'}² w_{j'} / max(r_j, r_{j'})`.
///
/// The origin self-term uses the analytic integral over the half cell `[0, h/2]`,
/// `∫ 4π r dr = π h²/2`.
pub fn hartree_kernel(grid: &RadialGrid) -> DMatrix<f64> {
    let n = grid.n_points();
    let w = grid.weights();
    let r = grid.nodes();
    let mut m = DMatrix::from_fn(n, n, |j, jp| {
        let big = r[j].max(r[jp]);
        if big == 0.0 {
            0.0
        } else {
            4.0 * std::f64::consts::PI * r[jp] * r[jp] * w[jp] / big
        }
    });
    let h = grid.h();
    m[(0, 0)] = std::f64::consts::PI * h * h / 2.0;
    m
}

/// Model exchange-correlation kernels; neither is claimed to be exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelXcKernel {
    /// Hartree-only (RPA).
    #[default]
    Zero,
    /// `f_xc(r, t; r', t') = g δ(r − r') δ(t − t')` on the basis.
    AdiabaticLocal { g: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DysonSolution {
    pub dn: ResponseSeries,
    /// `ΔV = v_ext + H Δn + f_xc Δn`.
    pub dv: ResponseSeries,
    pub max_iterations: usize,
}

const DYSON_TOL: f64 = 1e-10;
const DYSON_MAX_ITER: usize = 500;

/// Self-consistent `Δn = χ_s (v_ext + H Δn + f_xc Δn)`, one time slice at a time.
///
/// Only the equal-time block couples `Δn_k` to itself; it is resolved by fixed-point
/// iteration to `1e−10` in the sup norm.
pub fn solve_dyson(
    chi_s: &CausalKernel,
    hartree: Option<&DMatrix<f64>>,
    f_xc: &ModelXcKernel,
    v_ext: &ResponseSeries,
) -> Result<DysonSolution> {
    check_series(chi_s, v_ext, "drive")?;
    let d = chi_s.d;
    if let Some(h) = hartree {
        if h.nrows() != d || h.ncols() != d {
            return Err(Error::InputShape(format!("Hartree matrix is {}×{}, kernel d = {d}", h.nrows(), h.ncols())));
        }
    }
    let g = match *f_xc {
        ModelXcKernel::Zero => 0.0,
        ModelXcKernel::AdiabaticLocal { g } => g,
    };
    let coupled = hartree.is_some() || g != 0.0;
    let induced = |dn: &[f64], v: &[f64]| -> Vec<f64> {
        let mut out = v.to_vec();
        if let Some(h) = hartree {
            for (i, o) in out.iter_mut().enumerate() {
                *o += (0..d).map(|j| h[(i, j)] * dn[j]).sum::<f64>();
            }
        }
        if g != 0.0 {
            out.iter_mut().zip(dn).for_each(|(o, n)| *o += g * n);
        }
        out
    };
    let dt = chi_s.times.dt();
    let n = chi_s.n_slices();
    let mut dn: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut dv: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut max_iterations = 0;
    for k in 0..n {
        let past = history(chi_s, k, k, &dv);
        let diag = chi_s.block(k, k);
        let update = |dv_k: &[f64]| -> Vec<f64> {
            let mut acc = past.clone();
            add_block_mul(&mut acc, diag, dv_k);
            acc.iter().map(|a| a * dt).collect()
        };
        let v = &v_ext.values[k];
        if !coupled {
            dn.push(update(v));
            dv.push(v.clone());
            continue;
        }
        let mut cur = update(v);
        let mut prev_change = f64::NAN;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let next = update(&induced(&cur, v));
            let change = next.iter().zip(&cur).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            cur = next;
            if change <= DYSON_TOL {
                break;
            }
            let rate = change / prev_change;
            if iterations >= DYSON_MAX_ITER || (iterations > 3 && rate >= 1.0) || !change.is_finite() {
                return Err(Error::Divergence {
                    slice: k,
                    spectral_radius: if rate.is_finite() { rate } else { f64::INFINITY },
                });
            }
            prev_change = change;
        }
        max_iterations = max_iterations.max(iterations);
        dv.push(induced(&cur, v));
        dn.push(cur);
    }
    Ok(DysonSolution {
        dn: ResponseSeries { times: v_ext.times, values: dn },
        dv: ResponseSeries { times: v_ext.times, values: dv },
        max_iterations,
    })
}

/// Equal-time derivative `K[k] ≈ ∂χ(t_k, t')/∂t'` at `t' → t_k⁻`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelDiagonal {
    pub d: usize,
    pub blocks: Vec<Vec<f64>>,
    pub quality: Vec<StencilQuality>,
    /// Slices whose block is numerically singular.
    pub singular: Vec<usize>,
}

fn as_matrix(block: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, block)
}

/// One-sided `K[k] = (χ[k][k] − χ[k][k−1]) / dt`; `K[0]` copies `K[1]`.
pub fn extract_k(chi: &CausalKernel) -> Result<KernelDiagonal> {
    let n = chi.n_slices();
    if n < 2 {
        return Err(Error::InsufficientData("K needs at least two time slices".into()));
    }
    let dt = chi.times.dt();
    let d = chi.d;
    let mut blocks: Vec<Vec<f64>> = (1..n)
        .map(|k| chi.block(k, k).iter().zip(chi.block(k, k - 1)).map(|(a, b)| (a - b) / dt).collect())
        .collect();
    blocks.insert(0, blocks[0].clone());
    let mut quality = vec![StencilQuality::Central; n];
    quality[0] = StencilQuality::OneSided;
    let singular = blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| {
            let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if scale == 0.0 {
                return true;
            }
            let lu = as_matrix(b, d).lu();
            let u = lu.u();
            (0..d).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min) <= 1e-12 * scale
        })
        .map(|(k, _)| k)
        .collect();
    Ok(KernelDiagonal {
        d,
        blocks,
        quality,
        singular,
    })
}

/// `∂²/∂t² χ(t_k, t_{k'})` for every `k' ≤ k` of row `k`.
///
/// Central in `t` where the row below exists; the equal-time entry uses the forward
/// stencil `(2, −5, 4, −1)` down the column, or quadratic extrapolation along `k'`
/// near the end of the grid. The last row uses backward stencils.
fn d2t_row(chi: &CausalKernel, k: usize) -> Vec<Vec<f64>> {
    let n = chi.n_slices();
    let dd = chi.d * chi.d;
    let inv = 1.0 / (chi.times.dt() * chi.times.dt());
    let combo = |terms: &[(f64, usize)], kp: usize| -> Vec<f64> {
        (0..dd)
            .map(|e| terms.iter().map(|&(c, kk)| c * chi.block(kk, kp)[e]).sum::<f64>() * inv)
            .collect()
    };
    let mut row: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    for kp in 0..=k {
        let value = if kp < k && k + 1 < n {
            Some(combo(&[(1.0, k + 1), (-2.0, k), (1.0, k - 1)], kp))
        } else if kp + 3 <= k && k + 1 == n {
            Some(combo(&[(2.0, k), (-5.0, k - 1), (4.0, k - 2), (-1.0, k - 3)], kp))
        } else if kp == k && k + 3 < n {
            Some(combo(&[(2.0, k), (-5.0, k + 1), (4.0, k + 2), (-1.0, k + 3)], kp))
        } else {
            None
        };
        let value = value.unwrap_or_else(|| {
            // kp ≥ 3 here whenever the grid has at least four slices
            (0..dd)
                .map(|e| 3.0 * row[kp - 1][e] - 3.0 * row[kp - 2][e] + row[kp - 3][e])
                .collect()
        });
        row.push(value);
    }
    row
}

/// `∂²Δn/∂t²`: central inside, `(2, −5, 4, −1)` at the ends.
fn d2t_series(s: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n = s.len();
    let inv = 1.0 / (dt * dt);
    (0..n)
        .map(|k| {
            let terms: Vec<(f64, usize)> = if k == 0 {
                vec![(2.0, 0), (-5.0, 1), (4.0, 2), (-1.0, 3)]
            } else if k + 1 == n {
                vec![(2.0, k), (-5.0, k - 1), (4.0, k - 2), (-1.0, k - 3)]
            } else {
                vec![(1.0, k + 1), (-2.0, k), (1.0, k - 1)]
            };
            (0..s[k].len())
                .map(|i| terms.iter().map(|&(c, kk)| c * s[kk][i]).sum::<f64>() * inv)
                .collect()
        })
        .collect()
}

/// The discrete second-kind equation `v = b + A v`, `A` block lower-triangular.
struct VolterraSystem {
    b: Vec<Vec<f64>>,
    a: CausalKernel,
}

fn volterra_system(chi: &CausalKernel, dn: &ResponseSeries) -> Result<VolterraSystem> {
    check_series(chi, dn, "density change")?;
    if chi.n_slices() < 4 {
        return Err(Error::InsufficientData("the Volterra solve needs at least four time slices".into()));
    }
    let kd = extract_k(chi)?;
    if let Some(&slice) = kd.singular.first() {
        return Err(Error::SingularKernel { slice });
    }
    let d = chi.d;
    let dt = chi.times.dt();
    let d2n = d2t_series(&dn.values, dt);
    let n = chi.n_slices();
    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let kinv = as_matrix(&kd.blocks[k], d).try_inverse().expect("K checked regular");
            let b: Vec<f64> = (0..d).map(|i| -(0..d).map(|j| kinv[(i, j)] * d2n[k][j]).sum::<f64>()).collect();
            let mut a = Vec::with_capacity((k + 1) * d * d);
            for blk in d2t_row(chi, k) {
                let m = &kinv * as_matrix(&blk, d) * dt;
                for i in 0..d {
                    for j in 0..d {
                        a.push(m[(i, j)]);
                    }
                }
            }
            (b, a)
        })
        .collect();
    let (b, rows): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    Ok(VolterraSystem {
        b,
        a: CausalKernel::from_rows(d, chi.times, rows)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolterraSolution {
    pub v: ResponseSeries,
    /// Slices whose recovery involved one-sided time stencils.
    pub quality: Vec<StencilQuality>,
    /// `max |forward_response(χ, v) − Δn| / max |Δn|`.
    pub residual: f64,
}

/// Above this re-substitution mismatch the density change is reported as not
/// produced by any causal drive switched on at `t = 0`.
pub const INCONSISTENCY_LIMIT: f64 = 1e-2;

fn solve_block(m: DMatrix<f64>, rhs: Vec<f64>) -> Vec<f64> {
    let d = rhs.len();
    let x = m.lu().solve(&DMatrix::from_vec(d, 1, rhs)).expect("I − A_kk regular for dt small");
    x.iter().copied().collect()
}

fn identity_minus(block: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::identity(d, d) - as_matrix(block, d)
}

/// Recover the drive from `Δn` by forward substitution on
/// `v = −K⁻¹ ∂²Δn + K⁻¹ ∫ ∂²χ/∂t² v dt'`.
///
/// Assumes the switch-on convention `Δn(0) = ∂Δn/∂t(0) = 0`.
pub fn volterra_invert(chi: &CausalKernel, dn: &ResponseSeries) -> Result<VolterraSolution> {
    let sys = volterra_system(chi, dn)?;
    let d = chi.d;
    let n = chi.n_slices();
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut rhs = sys.b[k].clone();
        for (kp, vk) in v.iter().enumerate() {
            add_block_mul(&mut rhs, sys.a.block(k, kp), vk);
        }
        v.push(solve_block(identity_minus(sys.a.block(k, k), d), rhs));
    }
    let v = ResponseSeries { times: dn.times, values: v };
    let residual = forward_response(chi, &v)?.relative_sup_error(dn);
    if !(residual <= INCONSISTENCY_LIMIT) {
        return Err(Error::Inconsistent { residual });
    }
    let mut quality = vec![StencilQuality::Central; n];
    quality[0] = StencilQuality::OneSided;
    quality[1] = StencilQuality::OneSided;
    quality[n - 1] = StencilQuality::OneSided;
    Ok(VolterraSolution { v, quality, residual })
}

/// Resolvent `R` with `v = b + dt R b`, i.e. `dt R = A (I − A)⁻¹`.
///
/// Costs `O(N³ d³)`; intended for short grids.
pub fn volterra_resolvent(chi: &CausalKernel) -> Result<CausalKernel> {
    let sys = volterra_system(chi, &ResponseSeries::zeros(chi.d, chi.times))?;
    let d = chi.d;
    let n = chi.n_slices();
    let dt = chi.times.dt();
    // X = (I − A)⁻¹, built row by row: (I − A_kk) X[k][j] = δ_kj I + Σ_{j≤m<k} A[k][m] X[m][j]
    let mut x: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(n);
    for k in 0..n {
        let lu = identity_minus(sys.a.block(k, k), d).lu();
        let row: Vec<DMatrix<f64>> = (0..=k)
            .into_par_iter()
            .map(|j| {
                let mut rhs = if j == k { DMatrix::identity(d, d) } else { DMatrix::zeros(d, d) };
                for (m, xm) in x.iter().enumerate().take(k).skip(j) {
                    rhs += as_matrix(sys.a.block(k, m), d) * &xm[j];
                }
                lu.solve(&rhs).expect("I − A_kk regular for dt small")
            })
            .collect();
        x.push(row);
    }
    let rows = x
        .into_iter()
        .enumerate()
        .map(|(k, row)| {
            let mut out = Vec::with_capacity((k + 1) * d * d);
            for (j, m) in row.into_iter().enumerate() {
                let m = if j == k { m - DMatrix::identity(d, d) } else { m };
                for i in 0..d {
                    for c in 0..d {
                        out.push(m[(i, c)] / dt);
                    }
                }
            }
            out
        })
        .collect();
    CausalKernel::from_rows(d, chi.times, rows)
}

/// `v = b + dt Σ_{k'≤k} R[k][k'] b_{k'}`, with `b = −K⁻¹ ∂²Δn`.
pub fn apply_resolvent(resolvent: &CausalKernel, chi: &CausalKernel, dn: &ResponseSeries) -> Result<ResponseSeries> {
    let sys = volterra_system(chi, dn)?;
    if resolvent.times != chi.times || resolvent.d != chi.d {
        return Err(Error::InputShape("resolvent does not match the kernel".into()));
    }
    let b = ResponseSeries { times: dn.times, values: sys.b };
    let rb = forward_response(resolvent, &b)?;
    let values = b.values.iter().zip(&rb.values).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect();
    Ok(ResponseSeries { times: dn.times, values })
}

/// Non-interacting system used to measure `χ_s` columns: a doubly occupied orbital
/// (mass 1) starting in the ground state of `ω(0)` and driven by the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiScenario {
    pub grid: RadialGrid,
    pub times: TimeGrid,
    pub protocol: FrequencyProtocol,
    /// Keep every `basis_stride`-th radial node as an observation site.
    #[serde(default = "one")]
    pub basis_stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// Radial node carrying the hat-function bump.
    pub site: usize,
    /// Time slice at which the impulse starts; it lasts one step.
    pub slice: usize,
    pub amplitude: f64,
}

/// One column `χ_s[k][·](site, slice)` on the observation sites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelColumn {
    pub times: TimeGrid,
    pub sites: Vec<usize>,
    pub perturbation: Perturbation,
    pub values: Vec<Vec<f64>>,
    /// Relative change of the column when the amplitude is halved.
    pub step_change: f64,
}

impl KernelColumn {
    /// Largest `|χ|` over observation times `t_k ≤ t_{slice}`.
    pub fn max_before_perturbation(&self) -> f64 {
        self.values[..=self.perturbation.slice].iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}

struct Impulse<'a, L: FrequencyLaw> {
    base: &'a TrapPotential<L>,
    site: usize,
    t0: f64,
    t1: f64,
    amplitude: f64,
}

impl<L: FrequencyLaw> Potential for Impulse<'_, L> {
    fn fill(&self, t: f64, out: &mut [f64]) {
        self.base.fill(t, out);
        if t >= self.t0 && t < self.t1 {
            out[self.site] += self.amplitude;
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.base.breakpoints();
        b.extend([self.t0, self.t1]);
        b
    }
}

/// Threshold on [`KernelColumn::step_change`] above which the amplitude is rejected.
pub const STEP_CHANGE_LIMIT: f64 = 0.1;

/// Measure a column of the non-interacting response kernel by rerunning the
/// simulator with an impulse `±ε/dt` on one node during one step.
///
/// Central differences at `ε` and `ε/2`; their disagreement must stay below 10 %.
pub fn numerical_chi_s(scenario: &ChiScenario, p: &Perturbation) -> Result<KernelColumn> {
    let grid = scenario.grid;
    let times = scenario.times;
    if p.site == 0 || p.site + 1 >= grid.n_points() {
        return Err(Error::InputShape(format!("site {} is not an interior node", p.site)));
    }
    if p.slice >= times.n_steps() {
        return Err(Error::InputShape(format!("impulse slice {} is past the last step", p.slice)));
    }
    if !(p.amplitude > 0.0) || scenario.basis_stride == 0 {
        return Err(Error::InputShape("amplitude and basis stride must be positive".into()));
    }
    scenario.protocol.validate()?;
    let (_, psi0) = solve_ground_state(&InteractionSpec::None, scenario.protocol.omega0(), 1.0, &grid)?;
    let base = TrapPotential {
        interaction: InteractionSpec::None,
        law: scenario.protocol.clone(),
        mass: 1.0,
        nodes: grid.nodes(),
    };
    let dt = times.dt();
    let sites: Vec<usize> = (0..grid.n_points()).step_by(scenario.basis_stride).collect();
    let run = |eps: f64| -> Result<Vec<Vec<f64>>> {
        let pot = Impulse {
            base: &base,
            site: p.site,
            t0: times.t(p.slice),
            t1: times.t(p.slice + 1),
            amplitude: eps / dt,
        };
        let traj = crate::rm::propagate_with(&psi0, &pot, &times, 1)?;
        Ok((0..traj.n_slices())
            .map(|k| {
                let n = traj.density(k);
                sites.iter().map(|&j| 2.0 * n[j]).collect()
            })
            .collect())
    };
    let eps = p.amplitude;
    let amps = [eps, -eps, 0.5 * eps, -0.5 * eps];
    let runs: Vec<Vec<Vec<f64>>> = amps.par_iter().map(|&a| run(a)).collect::<Result<_>>()?;
    let column = |plus: &Vec<Vec<f64>>, minus: &Vec<Vec<f64>>, e: f64| -> Vec<Vec<f64>> {
        plus.iter()
            .zip(minus)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) / (2.0 * e)).collect())
            .collect()
    };
    let full = column(&runs[0], &runs[1], eps);
    let half = column(&runs[2], &runs[3], 0.5 * eps);
    let scale = full.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = full.iter().flatten().zip(half.iter().flatten()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let step_change = if scale > 0.0 { diff / scale } else { 0.0 };
    if !(step_change <= STEP_CHANGE_LIMIT) {
        return Err(Error::StepSize { eps, change: step_change });
    }
    Ok(KernelColumn {
        times,
        sites,
        perturbation: *p,
        values: full,
        step_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sin_kernel(times: TimeGrid) -> CausalKernel {
        CausalKernel::from_scalar(times, |t, tp| (t - tp).sin())
    }

    fn drive(t: f64) -> f64 {
        (1.3 * t).sin().powi(2) * (-0.2 * t).exp()
    }

    #[test]
    fn sin_kernel_step_response() {
        let times = TimeGrid::new(5.0, 5000).unwrap();
        let dn = forward_response(&sin_kernel(times), &ResponseSeries::from_scalar(times, |_| 1.0)).unwrap();
        for k in (0..=5000).step_by(250) {
            let t = times.t(k);
            assert!((dn.values[k][0] - (1.0 - t.cos())).abs() < 3.0 * times.dt());
        }
    }

    #[test]
    fn impulse_reads_out_a_column() {
        let times = TimeGrid::new(1.0, 50).unwrap();
        let chi = sin_kernel(times);
        let mut v = ResponseSeries::zeros(1, times);
        v.values[0][0] = 1.0 / times.dt();
        let dn = forward_response(&chi, &v).unwrap();
        for k in 0..=50 {
            assert!((dn.values[k][0] - chi.get(k, 0, 0, 0)).abs() < 1e-15);
        }
    }

    #[test]
    fn k_of_the_sin_and_linear_kernels() {
        let times = TimeGrid::new(2.0, 200).unwrap();
        let kd = extract_k(&sin_kernel(times)).unwrap();
        assert!(kd.blocks.iter().all(|b| (b[0] + 1.0).abs() < times.dt()));
        let lin = CausalKernel::from_scalar(times, |t, tp| t - tp);
        let kd = extract_k(&lin).unwrap();
        assert!(kd.blocks.iter().all(|b| (b[0] + 1.0).abs() < 1e-12));
        assert_eq!(kd.quality[0], StencilQuality::OneSided);
        let flat = CausalKernel::from_scalar(times, |_, _| 1.0);
        assert_eq!(extract_k(&flat).unwrap().singular.len(), 201);
        let dn = ResponseSeries::zeros(1, times);
        assert!(matches!(volterra_invert(&flat, &dn), Err(Error::SingularKernel { slice: 0 })));
    }

    #[test]
    fn zero_density_change_needs_zero_drive() {
        let times = TimeGrid::new(1.0, 100).unwrap();
        let sol = volterra_invert(&sin_kernel(times), &ResponseSeries::zeros(1, times)).unwrap();
        assert!(sol.v.sup() == 0.0);
    }

    #[test]
    fn drive_roundtrip_first_order() {
        let mut errs = Vec::new();
        for n in [1000, 2000, 4000] {
            let times = TimeGrid::new(4.0, n).unwrap();
            let chi = sin_kernel(times);
            let v = ResponseSeries::from_scalar(times, drive);
            let dn = forward_response(&chi, &v).unwrap();
            let sol = volterra_invert(&chi, &dn).unwrap();
            errs.push(sol.v.relative_sup_error(&v));
        }
        assert!(errs[0] < 1e-4, "{errs:?}");
        assert!(errs[0] / errs[1] > 1.8 && errs[1] / errs[2] > 1.8, "{errs:?}");
    }

    #[test]
    fn resolvent_matches_forward_substitution() {
        let times = TimeGrid::new(1.0, 200).unwrap();
        let chi = sin_kernel(times);
        let dn = forward_response(&chi, &ResponseSeries::from_scalar(times, drive)).unwrap();
        let r = volterra_resolvent(&chi).unwrap();
        let a = apply_resolvent(&r, &chi, &dn).unwrap();
        let b = volterra_invert(&chi, &dn).unwrap().v;
        assert!(a.relative_sup_error(&b) < 1e-10);
        let audit = r.audit();
        assert_eq!(audit.stored_upper_blocks, 0);
        assert_eq!(audit.max_upper, 0.0);
    }

    #[test]
    fn inconsistent_density_change_is_reported() {
        let times = TimeGrid::new(1.0, 100).unwrap();
        let dn = ResponseSeries::from_scalar(times, |t| 1.0 + t);
        assert!(matches!(volterra_invert(&sin_kernel(times), &dn), Err(Error::Inconsistent { .. })));
    }

    #[test]
    fn two_step_dyson_matches_linear_solve() {
        // d = 1, scalar Hartree strength γ; brute-force the 3 unknowns Δn_0..Δn_2
        let times = TimeGrid::new(0.2, 2).unwrap();
        let chi = CausalKernel::from_scalar(times, |t, tp| 0.3 + 0.5 * (t - tp) + 0.1 * t);
        let gamma = 0.8;
        let h = DMatrix::from_element(1, 1, gamma);
        let v = ResponseSeries::from_scalar(times, |t| 1.0 - t);
        let sol = solve_dyson(&chi, Some(&h), &ModelXcKernel::Zero, &v).unwrap();
        let dt = times.dt();
        // Δn = dt C (v + γ Δn)  →  (I − γ dt C) Δn = dt C v
        let c = DMatrix::from_fn(3, 3, |k, kp| chi.get(k, kp, 0, 0));
        let vv = DMatrix::from_fn(3, 1, |k, _| v.values[k][0]);
        let lhs = DMatrix::identity(3, 3) - &c * (gamma * dt);
        let exact = lhs.lu().solve(&(&c * vv * dt)).unwrap();
        for k in 0..3 {
            assert!((sol.dn.values[k][0] - exact[k]).abs() < 1e-12);
            assert!((sol.dv.values[k][0] - (v.values[k][0] + gamma * sol.dn.values[k][0])).abs() < 1e-12);
        }
    }

    #[test]
    fn dyson_without_kernels_is_forward_response() {
        let times = TimeGrid::new(1.0, 100).unwrap();
        let chi = sin_kernel(times);
        let v = ResponseSeries::from_scalar(times, drive);
        let a = solve_dyson(&chi, None, &ModelXcKernel::Zero, &v).unwrap();
        assert_eq!(a.dn, forward_response(&chi, &v).unwrap());
    }

    #[test]
    fn strong_coupling_diverges() {
        let times = TimeGrid::new(1.0, 10).unwrap();
        let chi = CausalKernel::from_scalar(times, |_, _| 1.0);
        let v = ResponseSeries::from_scalar(times, |_| 1.0);
        let f = ModelXcKernel::AdiabaticLocal { g: 30.0 };
        assert!(matches!(solve_dyson(&chi, None, &f, &v), Err(Error::Divergence { .. })));
    }

    #[test]
    fn hartree_exterior_and_origin() {
        let grid = RadialGrid::new(4.0, 401).unwrap();
        let h = hartree_kernel(&grid);
        let w = grid.weights();
        let (i2, i1) = (grid.index_of(2.0), grid.index_of(1.0));
        assert!((h[(i2, i1)] - 4.0 * std::f64::consts::PI * w[i1] / 2.0).abs() < 1e-14);
        assert!((h[(0, 0)] - std::f64::consts::PI * 1e-4 / 2.0).abs() < 1e-16);
    }
}
