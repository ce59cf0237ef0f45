//! Kohn–Sham inversion for two electrons in one doubly occupied orbital: density →
//! velocity → orbital → potential, and the reverse trip by propagation.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grids::{
    integrate_radial, DensityTrajectory, DerivativeOrder, PotentialTrajectory, RadialField, RadialGrid,
    StencilQuality, TimeGrid,
};
use crate::radial::{cumulative, laplacian, r2_cell_integrals, Parity};
use crate::rm::{propagate_with, Potential, RadialWavefunction};

/// Relative density floor below which the inversion is not evaluated.
pub const DENSITY_FLOOR: f64 = 1e-8;

/// Leading nodes of each slice with `n > floor · max n`.
pub fn evaluation_mask(n: &DensityTrajectory, floor: f64) -> Result<Vec<usize>> {
    n.values
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let len = row.iter().position(|&v| !(v > floor * max)).unwrap_or(row.len());
            if len < 6 {
                Err(Error::DegenerateInput(format!(
                    "density at slice {k} (t = {}) exceeds the evaluation floor at only {len} nodes",
                    n.times.t(k)
                )))
            } else {
                Ok(len)
            }
        })
        .collect()
}

/// Radial velocity `v(r, t)`; the current is `j = n v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityField {
    pub field: RadialField,
    pub mask_len: Vec<usize>,
    pub quality: Vec<StencilQuality>,
}

/// `v = −(1/(r² n)) ∫_0^r ∂n/∂t r'² dr'` from the continuity equation.
///
/// Slices are first rescaled to a common discrete total so that `∫ ∂n/∂t r² dr`
/// vanishes exactly; beyond the peak of `r² n` the flux integral is then taken from
/// the outer end, which avoids cancellation in the tail. Outside the mask `v` is
/// continued linearly through the origin from its last masked value.
pub fn velocity_field(n: &DensityTrajectory) -> Result<VelocityField> {
    let mask_len = evaluation_mask(n, DENSITY_FLOOR)?;
    let grid = n.grid;
    let h = grid.h();
    let nodes = grid.nodes();
    let r2n = |row: &[f64]| -> Vec<f64> { row.iter().zip(&nodes).map(|(v, r)| v * r * r).collect() };
    let totals: Vec<f64> = n
        .values
        .iter()
        .map(|row| r2_cell_integrals(row, h, Parity::Even).iter().sum())
        .collect();
    let scaled: Vec<Vec<f64>> = n
        .values
        .iter()
        .zip(&totals)
        .map(|(row, t)| row.iter().map(|v| v * totals[0] / t).collect())
        .collect();
    let dn = crate::grids::d_dt(&scaled, n.times.dt(), DerivativeOrder::First)?;
    let values: Vec<Vec<f64>> = (0..n.values.len())
        .into_par_iter()
        .map(|k| {
            let row = &scaled[k];
            let weight = r2n(row);
            let split = weight
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, &w)| if w > acc.1 { (j, w) } else { acc })
                .0;
            let cells = r2_cell_integrals(&dn.values[k], h, Parity::Even);
            let m = nodes.len();
            let mut c = vec![0.0; m];
            for j in 1..=split {
                c[j] = c[j - 1] + cells[j - 1];
            }
            let mut tail = 0.0;
            for j in (split + 1..m).rev() {
                c[j] = -tail;
                tail += cells[j - 1];
            }
            let len = mask_len[k];
            let mut v = vec![0.0; m];
            for j in 1..len {
                v[j] = -c[j] / (nodes[j] * nodes[j] * row[j]);
            }
            let e = len - 1;
            for j in len..m {
                v[j] = v[e] * nodes[j] / nodes[e];
            }
            v
        })
        .collect();
    Ok(VelocityField {
        field: RadialField::new(grid, n.times, values)?,
        mask_len,
        quality: dn.quality,
    })
}

/// Doubly occupied orbital `φ = √(n/2) e^{iα}` with `∂α/∂r = v`, `α(0, t) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KsOrbital {
    pub grid: RadialGrid,
    pub times: TimeGrid,
    pub phi: Vec<Vec<Complex64>>,
    pub alpha: RadialField,
    pub mask_len: Vec<usize>,
}

impl KsOrbital {
    pub fn density(&self, k: usize) -> Vec<f64> {
        self.phi[k].iter().map(|p| 2.0 * p.norm_sqr()).collect()
    }

    /// The same orbital multiplied by a global phase.
    pub fn with_phase(&self, c: f64) -> Self {
        let z = Complex64::from_polar(1.0, c);
        let mut out = self.clone();
        out.phi.iter_mut().flatten().for_each(|p| *p *= z);
        out.alpha.values.iter_mut().flatten().for_each(|a| *a += c);
        out
    }
}

pub fn build_orbital(n: &DensityTrajectory, v: &VelocityField) -> Result<KsOrbital> {
    if !n.same_grids(&v.field) {
        return Err(Error::InputShape("density and velocity grids differ".into()));
    }
    let h = n.grid.h();
    let alpha: Vec<Vec<f64>> = v.field.values.iter().map(|row| cumulative(row, h, Parity::Odd)).collect();
    let phi = n
        .values
        .iter()
        .zip(&alpha)
        .map(|(row, al)| {
            row.iter()
                .zip(al)
                .map(|(&d, &a)| Complex64::from_polar((0.5 * d.max(0.0)).sqrt(), a))
                .collect()
        })
        .collect();
    Ok(KsOrbital {
        grid: n.grid,
        times: n.times,
        phi,
        alpha: RadialField::new(n.grid, n.times, alpha)?,
        mask_len: v.mask_len.clone(),
    })
}

/// `V = Re[(i ∂φ/∂t + ½ ∇²φ)/φ]` on the mask, pinned to `V(0, t) = 0`; `NaN` outside.
pub fn invert_potential(orbital: &KsOrbital) -> Result<PotentialTrajectory> {
    let dphi = crate::grids::d_dt(&orbital.phi, orbital.times.dt(), DerivativeOrder::First)?;
    let h = orbital.grid.h();
    let i = Complex64::new(0.0, 1.0);
    let values: Vec<Vec<f64>> = (0..orbital.phi.len())
        .into_par_iter()
        .map(|k| {
            let phi = &orbital.phi[k];
            let lap = laplacian(phi, h);
            let len = orbital.mask_len[k];
            let mut v: Vec<f64> = (0..phi.len())
                .map(|j| {
                    if j < len {
                        ((i * dphi.values[k][j] + lap[j] * 0.5) / phi[j]).re
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            let v0 = v[0];
            v.iter_mut().for_each(|x| *x -= v0);
            v
        })
        .collect();
    Ok(PotentialTrajectory {
        field: RadialField::new(orbital.grid, orbital.times, values)?,
        mask_len: orbital.mask_len.clone(),
        quality: dphi.quality,
    })
}

/// Piecewise-linear-in-time potential from sampled slices, continued past the mask
/// by [`PotentialTrajectory::filled_slice`], re-pinned to zero at the origin.
struct SampledPotential {
    slices: Vec<Vec<f64>>,
    times: TimeGrid,
}

impl Potential for SampledPotential {
    fn fill(&self, t: f64, out: &mut [f64]) {
        let last = self.slices.len() - 1;
        let x = if last == 0 { 0.0 } else { (t / self.times.dt()).clamp(0.0, last as f64) };
        let k = (x.floor() as usize).min(last.saturating_sub(1));
        let w = x - k as f64;
        let (a, b) = (&self.slices[k], &self.slices[(k + 1).min(last)]);
        let v0 = (1.0 - w) * a[0] + w * b[0];
        for (o, (p, q)) in out.iter_mut().zip(a.iter().zip(b)) {
            *o = (1.0 - w) * p + w * q - v0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripReport {
    /// `‖2|φ|² − n‖ / ‖n‖` per slice.
    pub mismatch: Vec<f64>,
    pub max_mismatch: f64,
}

/// Propagate `φ(·, 0) = √(n(·, 0)/2)` under `V` (unit mass) and compare densities.
pub fn repropagate_check(v: &PotentialTrajectory, n_target: &DensityTrajectory) -> Result<RoundtripReport> {
    if !v.field.same_grids(n_target) {
        return Err(Error::InputShape("potential and density grids differ".into()));
    }
    let grid = n_target.grid;
    let times = n_target.times;
    if times.n_steps() < 1 {
        return Err(Error::InsufficientData("roundtrip needs at least two slices".into()));
    }
    let four_pi = 4.0 * std::f64::consts::PI;
    let chi: Vec<Complex64> = n_target.values[0]
        .iter()
        .enumerate()
        .map(|(j, &d)| Complex64::new((four_pi * 0.5 * d.max(0.0)).sqrt() * grid.r(j), 0.0))
        .collect();
    let n_nodes = chi.len();
    let mut chi = chi;
    chi[0] = Complex64::new(0.0, 0.0);
    chi[n_nodes - 1] = Complex64::new(0.0, 0.0);
    let psi0 = RadialWavefunction { grid, mass: 1.0, chi };
    let potential = SampledPotential {
        slices: (0..times.n_slices()).map(|k| v.filled_slice(k)).collect(),
        times,
    };
    let traj = propagate_with(&psi0, &potential, &times, 1)?;
    let mismatch = (0..times.n_slices())
        .map(|k| {
            let got: Vec<f64> = traj.density(k).iter().map(|d| 2.0 * d).collect();
            let target = &n_target.values[k];
            let diff: Vec<f64> = got.iter().zip(target).map(|(a, b)| (a - b).powi(2)).collect();
            let sq: Vec<f64> = target.iter().map(|b| b * b).collect();
            Ok((integrate_radial(&diff, &grid)? / integrate_radial(&sq, &grid)?).sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_mismatch = mismatch.iter().cloned().fold(0.0, f64::max);
    Ok(RoundtripReport { mismatch, max_mismatch })
}
