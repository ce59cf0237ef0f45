//! Two-electron density from the centre-of-mass width and the relative-motion
//! wavefunction, and its spherical Fourier transform.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cm::{solve_ermakov, WidthTrajectory};
use crate::error::{Error, Result};
use crate::grids::{integrate_radial, DensityTrajectory, RadialField, RadialGrid, TimeGrid};
use crate::quadrature::gauss_legendre;
use crate::radial::EvenInterpolator;
use crate::rm::{FrequencyProtocol, ShiftedFrequency, WavefunctionTrajectory};

/// Controls the `y` quadrature of the density integral.
///
/// Panels are aligned with the cells of the relative-motion grid (mapped to `y = s/a`),
/// so the interpolated `|ψ|²` is a single cubic on each panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Gauss–Legendre points per panel.
    pub order: usize,
    /// Successive refinements must agree to this relative tolerance.
    pub rel_tol: f64,
    /// Disagreement above this after `max_levels` is an error.
    pub fail_tol: f64,
    pub max_levels: usize,
    /// Terms with `|y/2 − r/a| > window` are dropped; they carry a factor below
    /// `exp(−window²)`.
    pub window: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            order: 3,
            rel_tol: 1e-8,
            fail_tol: 1e-6,
            max_levels: 5,
            window: 6.5,
        }
    }
}

/// Composite rule in `y` with per-panel bookkeeping: nodes sorted ascending.
struct YRule {
    y: Vec<f64>,
    g: Vec<f64>,
}

impl YRule {
    /// `g_i = w_i · y_i² · |ψ(a y_i)|²` over cells where `|ψ|²` is not negligible.
    fn build(psi_sq: &[f64], interp: &EvenInterpolator<f64>, h: f64, a: f64, order: usize, split: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let peak = psi_sq.iter().cloned().fold(0.0, f64::max);
        let cutoff = 1e-24 * peak;
        let n = psi_sq.len();
        let mut y = Vec::new();
        let mut g = Vec::new();
        for j in 0..n - 1 {
            let lo = j.saturating_sub(1);
            let hi = (j + 2).min(n - 1);
            if psi_sq[lo..=hi].iter().all(|&v| v.abs() <= cutoff) {
                continue;
            }
            let width = h / a / split as f64;
            for p in 0..split {
                let mid = (j as f64 * h / a) + (p as f64 + 0.5) * width;
                for (xi, wi) in x.iter().zip(&w) {
                    let yi = mid + 0.5 * width * xi;
                    let v = interp.eval(a * yi);
                    y.push(yi);
                    g.push(0.5 * width * wi * yi * yi * v);
                }
            }
        }
        Self { y, g }
    }

    /// `∫ dy y² |ψ(ay)|² exp(−(y/2 − ρ)²)·(1 − e^{−2ρy})/(2ρy)` at every `ρ_j = j δ`.
    ///
    /// This is `exp(−ρ² − y²/4)·sinh(ρy)/(ρy)` regrouped so no factor can overflow.
    /// For each node the Gaussian and `e^{−2ρy}` factors are generated by exact
    /// multiplicative recurrences in `j`, walking outward from the Gaussian peak
    /// so that underflow only ever truncates a decaying tail.
    fn integrals(&self, delta: f64, n_r: usize, half_window: f64) -> Vec<f64> {
        let mut acc = vec![0.0; n_r];
        let inv_j: Vec<f64> = (0..n_r).map(|j| if j == 0 { 0.0 } else { 1.0 / j as f64 }).collect();
        let c = (-2.0 * delta * delta).exp();
        let jmax = (n_r - 1) as f64;
        for (&y, &g) in self.y.iter().zip(&self.g) {
            if g == 0.0 {
                continue;
            }
            let peak = (0.5 * y / delta).round().min(jmax) as usize;
            let lo = ((0.5 * y - half_window) / delta).ceil().max(0.0) as usize;
            let hi = (((0.5 * y + half_window) / delta).floor().min(jmax)) as usize;
            if lo > hi {
                continue;
            }
            let peak = peak.clamp(lo, hi);
            let q = (-2.0 * delta * y).exp();
            let inv_2dy = 1.0 / (2.0 * delta * y);
            let term = |j: usize, e: f64, big_q: f64| -> f64 {
                let z = j as f64 * delta * y;
                let shape = if z < 0.5 {
                    if z == 0.0 {
                        1.0
                    } else {
                        -(-2.0 * z).exp_m1() / (2.0 * z)
                    }
                } else {
                    (1.0 - big_q) * inv_2dy * inv_j[j]
                };
                g * e * shape
            };
            let d0 = 0.5 * y - peak as f64 * delta;
            let e0 = (-d0 * d0).exp();
            let q0 = (-2.0 * peak as f64 * delta * y).exp();
            // E_{j+1}/E_j = exp(2δ(y/2 − ρ_j) − δ²) = R_j, with R_{j+1} = c R_j
            let r0 = (2.0 * delta * d0 - delta * delta).exp();
            acc[peak] += term(peak, e0, q0);
            let (mut e, mut r, mut bq) = (e0, r0, q0);
            for j in peak + 1..=hi {
                e *= r;
                r *= c;
                bq *= q;
                if e < 1e-300 {
                    break;
                }
                acc[j] += term(j, e, bq);
            }
            let (mut e, mut r, mut bq) = (e0, r0, q0);
            for j in (lo..peak).rev() {
                r /= c;
                e /= r;
                bq /= q;
                if e < 1e-300 {
                    break;
                }
                acc[j] += term(j, e, bq);
            }
        }
        acc
    }
}

const EIGHT_OVER_ROOT_PI: f64 = 4.513_516_668_382_893; // 8/√π

fn assemble_slice(
    a: f64,
    psi_sq: &[f64],
    h_rm: f64,
    grid: &RadialGrid,
    q: &QuadratureSpec,
    time: f64,
) -> Result<Vec<f64>> {
    let interp = EvenInterpolator::new(psi_sq.to_vec(), h_rm);
    let nodes = grid.nodes();
    let eval = |split: usize| -> Vec<f64> {
        let rule = YRule::build(psi_sq, &interp, h_rm, a, q.order, split);
        let mut out = rule.integrals(grid.h() / a, grid.n_points(), q.window);
        out.iter_mut().for_each(|v| *v *= EIGHT_OVER_ROOT_PI);
        out
    };
    let mut prev = eval(1);
    let mut worst = (0.0, 0.0);
    for level in 1..=q.max_levels {
        let next = eval(1 << level);
        let peak = next.iter().cloned().fold(0.0, f64::max);
        let floor = 1e-15 * peak;
        worst = (0.0, 0.0);
        for (j, (p, n)) in prev.iter().zip(&next).enumerate() {
            let change = (n - p).abs() / n.abs().max(floor);
            if change > worst.0 {
                worst = (change, nodes[j]);
            }
        }
        prev = next;
        if worst.0 <= q.rel_tol {
            return Ok(prev);
        }
    }
    if worst.0 > q.fail_tol {
        return Err(Error::Quadrature {
            r: worst.1,
            time,
            change: worst.0,
            panels: 1 << q.max_levels,
        });
    }
    Ok(prev)
}

/// `n(r, t) = (8/√π) e^{−r²/a²} ∫ dy y² e^{−y²/4} |ψ(a y, t)|² sinh(ry/a)/(ry/a)`,
/// with `a = a_CM(t)` and `ψ` the relative-motion wavefunction.
pub fn assemble_density(
    width: &WidthTrajectory,
    rm: &WavefunctionTrajectory,
    grid: &RadialGrid,
    q: &QuadratureSpec,
) -> Result<DensityTrajectory> {
    if width.times != rm.times {
        return Err(Error::InputShape(
            "width and relative-motion trajectories must share a time grid".into(),
        ));
    }
    if q.order < 1 || q.max_levels < 1 || !(q.window > 0.0) {
        return Err(Error::InvalidGrid("quadrature spec needs order ≥ 1, max_levels ≥ 1, window > 0".into()));
    }
    let values = (0..rm.n_slices())
        .into_par_iter()
        .map(|k| assemble_slice(width.a[k], &rm.density(k), rm.grid.h(), grid, q, rm.times.t(k)))
        .collect::<Result<Vec<_>>>()?;
    RadialField::new(*grid, rm.times, values)
}

/// Uniform momentum grid `k_q = q·k_max/(n_k − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub k_max: f64,
    pub n_k: usize,
}

impl KGrid {
    pub fn new(k_max: f64, n_k: usize) -> Result<Self> {
        if !(k_max > 0.0 && k_max.is_finite()) || n_k < 2 {
            return Err(Error::InvalidGrid(format!(
                "k grid needs k_max > 0 and n_k ≥ 2, got {k_max}, {n_k}"
            )));
        }
        Ok(Self { k_max, n_k })
    }

    pub fn k(&self, q: usize) -> f64 {
        q as f64 * self.k_max / (self.n_k - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_k).map(|q| self.k(q)).collect()
    }
}

/// `f[k][q]` on a time grid × momentum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringFactor {
    pub times: TimeGrid,
    pub kgrid: KGrid,
    pub f: Vec<Vec<Complex64>>,
}

impl ScatteringFactor {
    /// `max |f − g| / 2` over all samples with `k ≤ k_limit`.
    pub fn max_deviation(&self, other: &ScatteringFactor, k_limit: f64) -> Result<f64> {
        if self.times != other.times || self.kgrid != other.kgrid {
            return Err(Error::InputShape("scattering factors on different grids".into()));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.f.iter().zip(&other.f) {
            for (q, (x, y)) in a.iter().zip(b).enumerate() {
                if self.kgrid.k(q) <= k_limit + 1e-12 {
                    worst = worst.max((x - y).norm() / 2.0);
                }
            }
        }
        Ok(worst)
    }
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// `f(k, t) = ∫ 4π r² n(r, t) sin(kr)/(kr) dr`.
pub fn scattering_factor(n: &DensityTrajectory, kgrid: &KGrid) -> Result<ScatteringFactor> {
    let nodes = n.grid.nodes();
    let f = n
        .values
        .par_iter()
        .map(|row| {
            (0..kgrid.n_k)
                .map(|q| {
                    let k = kgrid.k(q);
                    let samples: Vec<f64> = row.iter().zip(&nodes).map(|(v, r)| v * sinc(k * r)).collect();
                    integrate_radial(&samples, &n.grid).map(|v| Complex64::new(v, 0.0))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScatteringFactor {
        times: n.times,
        kgrid: *kgrid,
        f,
    })
}

/// Fourier transform of the normalized Gaussian density `exp(−c²/a²)/(a³π^{3/2})`.
pub fn gaussian_transform(k: f64, a: f64) -> f64 {
    (-k * k * a * a / 4.0).exp()
}

pub const CM_MASS: f64 = 2.0;
pub const RM_MASS: f64 = 0.5;

/// Centre-of-mass and relative-motion widths of a Moshinsky pair.
pub fn moshinsky_widths(protocol: &FrequencyProtocol, k: f64, times: &TimeGrid) -> Result<(WidthTrajectory, WidthTrajectory)> {
    protocol.validate()?;
    let shifted = ShiftedFrequency::validated(protocol.clone(), k, RM_MASS, times.t_final())?;
    Ok((
        solve_ermakov(protocol, CM_MASS, times)?,
        solve_ermakov(&shifted, RM_MASS, times)?,
    ))
}

/// `f = 2 g(k, a_CM) g(k/2, a_RM)` with both widths recovered from their phase rates.
pub fn moshinsky_scattering_closed_form(
    protocol: &FrequencyProtocol,
    k: f64,
    kgrid: &KGrid,
    times: &TimeGrid,
) -> Result<ScatteringFactor> {
    let (cm, rm) = moshinsky_widths(protocol, k, times)?;
    let ks = kgrid.nodes();
    let f = (0..times.n_slices())
        .map(|i| {
            let a_cm = 1.0 / (cm.mass * cm.phase_rate(i));
            let a_rm = 1.0 / (rm.mass * rm.phase_rate(i));
            ks.iter()
                .map(|&q| Complex64::new(2.0 * gaussian_transform(q, a_cm) * gaussian_transform(q / 2.0, a_rm), 0.0))
                .collect()
        })
        .collect();
    Ok(ScatteringFactor {
        times: *times,
        kgrid: *kgrid,
        f,
    })
}

/// Moshinsky density: a Gaussian of width² `a_CM² + a_RM²/4`, holding two electrons.
pub fn moshinsky_density_closed_form(a_cm: f64, a_rm: f64, r: f64) -> f64 {
    let b2 = a_cm * a_cm + 0.25 * a_rm * a_rm;
    2.0 * (-r * r / b2).exp() / (b2.powf(1.5) * PI.powf(1.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rm::{propagate, solve_ground_state, InteractionSpec};

    fn static_run(k: f64) -> (WidthTrajectory, WavefunctionTrajectory, RadialGrid) {
        let grid = RadialGrid::new(12.0, 601).unwrap();
        let times = TimeGrid::new(0.02, 2).unwrap();
        let p = FrequencyProtocol::Constant { omega0: 1.0 };
        let (_, psi) = solve_ground_state(&InteractionSpec::Moshinsky { k }, 1.0, RM_MASS, &grid).unwrap();
        let rm = propagate(&psi, &InteractionSpec::Moshinsky { k }, &p, &times, 1).unwrap();
        let w = solve_ermakov(&p, CM_MASS, &times).unwrap();
        (w, rm, grid)
    }

    #[test]
    fn independent_electron_density() {
        let (w, rm, grid) = static_run(0.0);
        let n = assemble_density(&w, &rm, &grid, &QuadratureSpec::default()).unwrap();
        assert!((n.values[0][0] - 2.0 * PI.powf(-1.5)).abs() < 1e-7, "{}", n.values[0][0]);
        for k in 0..3 {
            let total = integrate_radial(&n.values[k], &grid).unwrap();
            assert!((total - 2.0).abs() < 1e-6);
            for (j, v) in n.values[k].iter().enumerate() {
                let r = grid.r(j);
                assert!((v - 2.0 * PI.powf(-1.5) * (-r * r).exp()).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn static_moshinsky_density_is_gaussian() {
        let (w, rm, grid) = static_run(0.2);
        let n = assemble_density(&w, &rm, &grid, &QuadratureSpec::default()).unwrap();
        let a_rm = (1.0 / (RM_MASS * 0.6f64.sqrt())).sqrt();
        for (j, v) in n.values[1].iter().enumerate() {
            let exact = moshinsky_density_closed_form(0.5f64.sqrt(), a_rm, grid.r(j));
            assert!((v - exact).abs() < 1e-7 * exact.max(1e-3));
        }
    }

    #[test]
    fn gaussian_scattering_pair() {
        let grid = RadialGrid::new(12.0, 601).unwrap();
        let n = RadialField::from_fn(grid, TimeGrid::snapshot(), |_, r| 2.0 * PI.powf(-1.5) * (-r * r).exp());
        let kg = KGrid::new(6.0, 61).unwrap();
        let f = scattering_factor(&n, &kg).unwrap();
        assert!((f.f[0][0].re - 2.0).abs() < 1e-9);
        for (q, v) in f.f[0].iter().enumerate() {
            let k = kg.k(q);
            assert!((v.re - 2.0 * (-k * k / 4.0).exp()).abs() < 1e-6);
            assert_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn closed_form_static_limit() {
        let kg = KGrid::new(6.0, 13).unwrap();
        let times = TimeGrid::new(1.0, 10).unwrap();
        let p = FrequencyProtocol::Constant { omega0: 1.0 };
        let f = moshinsky_scattering_closed_form(&p, 0.0, &kg, &times).unwrap();
        for row in &f.f {
            for (q, v) in row.iter().enumerate() {
                let k = kg.k(q);
                assert!((v.re - 2.0 * (-k * k / 4.0).exp()).abs() < 1e-12);
            }
        }
        let g = moshinsky_scattering_closed_form(&p, 0.2, &kg, &times).unwrap();
        for row in &g.f {
            for (x, y) in row.iter().zip(&g.f[0]) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }
}
