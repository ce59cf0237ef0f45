//! Centre-of-mass dynamics: the Gaussian width `a(t)` of a harmonic ground state
//! driven by `ω(t)`, from the Ermakov equation `ä + ω²a = 1/(M²a³)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grids::{DensityTrajectory, RadialField, RadialGrid, TimeGrid};
use crate::rm::FrequencyLaw;

#[derive(Debug, Clone, PartialEq)]
pub struct WidthTrajectory {
    pub times: TimeGrid,
    pub mass: f64,
    pub omega0: f64,
    pub a: Vec<f64>,
    pub adot: Vec<f64>,
}

impl WidthTrajectory {
    /// `φ̇ = 1/(M a)`, the phase rate paired with the width.
    pub fn phase_rate(&self, k: usize) -> f64 {
        1.0 / (self.mass * self.a[k])
    }

    /// Every `stride`-th slice.
    pub fn thinned(&self, stride: usize) -> Result<Self> {
        let times = self.times.thinned(stride)?;
        let pick = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
        Ok(Self {
            times,
            mass: self.mass,
            omega0: self.omega0,
            a: pick(&self.a),
            adot: pick(&self.adot),
        })
    }

    /// Thin down to a coarser grid that this one refines.
    pub fn resample_to(&self, times: &TimeGrid) -> Result<Self> {
        let stride = self.times.refinement_of(times).ok_or_else(|| {
            Error::InputShape("width trajectory does not refine the requested time grid".into())
        })?;
        self.thinned(stride)
    }
}

/// Splits `[t0, t1]` at breakpoints strictly inside it.
pub(crate) fn segments(breaks: &[f64], t0: f64, t1: f64) -> Vec<(f64, f64)> {
    let eps = 1e-12 * t1.abs().max(1.0);
    let mut out = Vec::with_capacity(2);
    let mut a = t0;
    for &b in breaks {
        if b > t0 + eps && b < t1 - eps {
            out.push((a, b));
            a = b;
        }
    }
    out.push((a, t1));
    out
}

fn rk4<F: Fn(f64, [f64; 2]) -> [f64; 2]>(f: F, t: f64, y: [f64; 2], h: f64) -> [f64; 2] {
    let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, add(y, k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, add(y, k2, 0.5 * h));
    let k4 = f(t + h, add(y, k3, h));
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integrate `ÿ = rhs(t, y, ω)` with RK4, never straddling a breakpoint of `law`.
fn integrate<L: FrequencyLaw + ?Sized>(
    law: &L,
    times: &TimeGrid,
    y0: [f64; 2],
    accel: impl Fn(f64, f64) -> f64,
    mut check: impl FnMut(f64, [f64; 2]) -> Result<()>,
) -> Result<Vec<[f64; 2]>> {
    let mut breaks = law.breakpoints();
    breaks.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(times.n_slices());
    let mut y = y0;
    out.push(y);
    for k in 0..times.n_steps() {
        for (a, b) in segments(&breaks, times.t(k), times.t(k + 1)) {
            let f = |t: f64, y: [f64; 2]| {
                let w = law.omega_on(t, a);
                [y[1], accel(y[0], w)]
            };
            y = rk4(f, a, y, b - a);
        }
        check(times.t(k + 1), y)?;
        out.push(y);
    }
    Ok(out)
}

/// Width of the ground-state Gaussian `exp(−c²/(2a²))` wavefunction of mass `mass`,
/// starting from `a(0) = 1/√(M ω0)`, `ȧ(0) = 0`.
pub fn solve_ermakov<L: FrequencyLaw + ?Sized>(law: &L, mass: f64, times: &TimeGrid) -> Result<WidthTrajectory> {
    let omega0 = law.omega(0.0);
    if !(omega0 > 0.0) || !(mass > 0.0) {
        return Err(Error::ModelInvalid(format!(
            "Ermakov evolution needs ω(0) > 0 and M > 0, got {omega0}, {mass}"
        )));
    }
    let a0 = 1.0 / (mass * omega0).sqrt();
    let inv_m2 = 1.0 / (mass * mass);
    let floor = 1e-8 * a0;
    let ys = integrate(
        law,
        times,
        [a0, 0.0],
        |a, w| -w * w * a + inv_m2 / (a * a * a),
        |t, y| {
            if !(y[0] > floor) || !y[1].is_finite() {
                Err(Error::Singularity { time: t, width: y[0] })
            } else {
                Ok(())
            }
        },
    )?;
    Ok(WidthTrajectory {
        times: *times,
        mass,
        omega0,
        a: ys.iter().map(|y| y[0]).collect(),
        adot: ys.iter().map(|y| y[1]).collect(),
    })
}

/// Ermakov–Lewis invariant `½[(x/ρ)² + (ρẋ − ρ̇x)²]` with `ρ = √M a` and an auxiliary
/// classical trajectory `ẍ = −ω² x` started at `(x0, v0)`. Constant for any `ω(t)`.
pub fn lewis_invariant<L: FrequencyLaw + ?Sized>(
    width: &WidthTrajectory,
    law: &L,
    x0: f64,
    v0: f64,
) -> Result<Vec<f64>> {
    let xs = integrate(law, &width.times, [x0, v0], |x, w| -w * w * x, |_, _| Ok(()))?;
    let sm = width.mass.sqrt();
    Ok(xs
        .iter()
        .zip(width.a.iter().zip(&width.adot))
        .map(|(x, (&a, &ad))| {
            let (rho, rhod) = (sm * a, sm * ad);
            0.5 * ((x[0] / rho).powi(2) + (rho * x[1] - rhod * x[0]).powi(2))
        })
        .collect())
}

/// Closed-form width² after a switch `ω0 → ω1` at `t = 0`.
pub fn sudden_switch_width_sq(omega0: f64, omega1: f64, mass: f64, t: f64) -> f64 {
    let a0sq = 1.0 / (mass * omega0);
    let (s, c) = (omega1 * t).sin_cos();
    a0sq * (c * c + (omega0 / omega1).powi(2) * s * s)
}

/// `|ψ_CM(c, t)|² = exp(−c²/a²)/(a³ π^{3/2})`, normalized to one.
pub fn cm_density(width: &WidthTrajectory, grid: &RadialGrid) -> DensityTrajectory {
    let values = width
        .a
        .iter()
        .map(|&a| {
            let pre = 1.0 / (a * a * a * PI.powf(1.5));
            grid.nodes().iter().map(|&c| pre * (-(c * c) / (a * a)).exp()).collect()
        })
        .collect();
    RadialField {
        grid: *grid,
        times: width.times,
        values,
    }
}
