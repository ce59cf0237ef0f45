//! Pointwise identity checks: continuity, the differential virial theorem (with and
//! without the Moshinsky pair force), and rigid translation in a driven harmonic well.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cm::WidthTrajectory;
use crate::error::{Error, Result};
use crate::grids::{
    DensityTrajectory, DerivativeOrder, PotentialTrajectory, RadialField, RadialGrid, StencilQuality,
    TimeGrid,
};
use crate::ks::{KsOrbital, VelocityField, DENSITY_FLOOR};
use crate::quadrature::gauss_legendre;
use crate::radial::{derivative, divergence, laplacian, reduced_to_radial, Parity};
use crate::rm::{propagate_cartesian_1d, LineGrid, LinePotential, WavefunctionTrajectory};

/// `LHS − RHS` of an identity on the grid, `NaN` outside the evaluation mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualField {
    pub field: RadialField,
    pub mask_len: Vec<usize>,
    pub quality: Vec<StencilQuality>,
    /// `(4π ∫ r² res² dr)^{1/2}` over the mask, per slice.
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
}

impl ResidualField {
    fn new(field: RadialField, mask_len: Vec<usize>, quality: Vec<StencilQuality>) -> Self {
        let w = field.grid.volume_weights();
        let (l2, linf) = field
            .values
            .iter()
            .zip(&mask_len)
            .map(|(row, &len)| {
                let l2 = row[..len].iter().zip(&w).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
                let linf = row[..len].iter().fold(0.0f64, |m, x| m.max(x.abs()));
                (l2, linf)
            })
            .unzip();
        Self {
            field,
            mask_len,
            quality,
            l2,
            linf,
        }
    }

    fn central(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.quality.len()).filter(|&k| self.quality[k] == StencilQuality::Central)
    }

    /// Largest per-slice L2 norm over slices evaluated with central time stencils.
    pub fn max_l2(&self) -> f64 {
        self.central().map(|k| self.l2[k]).fold(0.0, f64::max)
    }

    pub fn max_linf(&self) -> f64 {
        self.central().map(|k| self.linf[k]).fold(0.0, f64::max)
    }

    /// Largest `|res|` on `r ≤ r_limit` over central slices.
    pub fn max_abs_within(&self, r_limit: f64) -> f64 {
        let grid = self.field.grid;
        self.central()
            .flat_map(|k| {
                let len = self.mask_len[k];
                self.field.values[k][..len]
                    .iter()
                    .enumerate()
                    .filter(move |(j, _)| grid.r(*j) <= r_limit + 1e-12)
                    .map(|(_, x)| x.abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }
}

fn mask_row(row: &mut [f64], len: usize) {
    row[len..].iter_mut().for_each(|x| *x = f64::NAN);
}

/// `∂n/∂t + (1/r²) ∂(r² n v)/∂r`.
pub fn continuity_residual(n: &DensityTrajectory, v: &VelocityField) -> Result<ResidualField> {
    if !n.same_grids(&v.field) {
        return Err(Error::InputShape("density and velocity grids differ".into()));
    }
    let dn = n.d_dt(DerivativeOrder::First)?;
    let h = n.grid.h();
    let mask: Vec<usize> = v.mask_len.iter().map(|&m| m.saturating_sub(2)).collect();
    let values: Vec<Vec<f64>> = (0..n.values.len())
        .into_par_iter()
        .map(|k| {
            let flux: Vec<f64> = n.values[k].iter().zip(&v.field.values[k]).map(|(a, b)| a * b).collect();
            let div = divergence(&flux, h);
            let mut row: Vec<f64> = dn.values[k].iter().zip(&div).map(|(a, b)| a + b).collect();
            mask_row(&mut row, mask[k]);
            row
        })
        .collect();
    Ok(ResidualField::new(RadialField::new(n.grid, n.times, values)?, mask, dn.quality))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticVariant {
    Interacting,
    Noninteracting,
}

/// Radial component of `z_α = ∂_β τ_αβ`, `τ_αβ` the kinetic stress tensor
/// `Re Σ ∂_α φ* ∂_β φ` summed over both spin orbitals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KineticVectorField {
    pub field: RadialField,
    pub mask_len: Vec<usize>,
    pub variant: KineticVariant,
}

/// `z = τ_L' + 2(τ_L − τ_T)/r` for a tensor `τ_L r̂r̂ + τ_T (1 − r̂r̂)`.
fn z_from_tensor(tau_l: &[f64], tau_t: &[f64], h: f64) -> Vec<f64> {
    let d = derivative(tau_l, h, Parity::Even);
    d.iter()
        .enumerate()
        .map(|(j, &dl)| if j == 0 { 0.0 } else { dl + 2.0 * (tau_l[j] - tau_t[j]) / (j as f64 * h) })
        .collect()
}

/// `z_s` for the doubly occupied orbital: `τ = 2|φ'|² r̂r̂`.
pub fn kinetic_vector_field(orbital: &KsOrbital) -> Result<KineticVectorField> {
    let h = orbital.grid.h();
    let values: Vec<Vec<f64>> = orbital
        .phi
        .par_iter()
        .map(|phi| {
            let dphi = derivative(phi, h, Parity::Even);
            let tau: Vec<f64> = dphi.iter().map(|d| 2.0 * d.norm_sqr()).collect();
            z_from_tensor(&tau, &vec![0.0; tau.len()], h)
        })
        .collect();
    Ok(KineticVectorField {
        field: RadialField::new(orbital.grid, orbital.times, values)?,
        mask_len: orbital.mask_len.iter().map(|&m| m.saturating_sub(2)).collect(),
        variant: KineticVariant::Noninteracting,
    })
}

/// `z_s` of a real orbital from the density alone: `τ = n'²/(4n)`.
pub fn static_kinetic_vector_field(n: &DensityTrajectory) -> Result<KineticVectorField> {
    let mask = crate::ks::evaluation_mask(n, DENSITY_FLOOR)?;
    let h = n.grid.h();
    let values: Vec<Vec<f64>> = n
        .values
        .iter()
        .zip(&mask)
        .map(|(row, &len)| {
            let dn = derivative(row, h, Parity::Even);
            let tau: Vec<f64> = dn
                .iter()
                .zip(row)
                .enumerate()
                .map(|(j, (d, v))| if j < len { d * d / (4.0 * v) } else { 0.0 })
                .collect();
            z_from_tensor(&tau, &vec![0.0; tau.len()], h)
        })
        .collect();
    Ok(KineticVectorField {
        field: RadialField::new(n.grid, n.times, values)?,
        mask_len: mask.iter().map(|&m| m.saturating_sub(2)).collect(),
        variant: KineticVariant::Noninteracting,
    })
}

fn dvt_core(
    n: &DensityTrajectory,
    z: &KineticVectorField,
    force: Option<&RadialField>,
    v: &PotentialTrajectory,
) -> Result<ResidualField> {
    if !n.same_grids(&z.field) || !n.same_grids(&v.field) || force.is_some_and(|f| !n.same_grids(f)) {
        return Err(Error::InputShape("DVT inputs are on different grids".into()));
    }
    let d2n = n.d_dt(DerivativeOrder::Second)?;
    let h = n.grid.h();
    let mask: Vec<usize> = (0..n.values.len())
        .map(|k| z.mask_len[k].min(v.mask_len[k]).saturating_sub(4))
        .collect();
    let values: Vec<Vec<f64>> = (0..n.values.len())
        .into_par_iter()
        .map(|k| {
            let row = &n.values[k];
            let bilap = laplacian(&laplacian(row, h), h);
            let divz = divergence(&z.field.values[k], h);
            let vk = v.filled_slice(k);
            let dv = derivative(&vk, h, Parity::Even);
            let ndv: Vec<f64> = row.iter().zip(&dv).map(|(a, b)| a * b).collect();
            let divndv = divergence(&ndv, h);
            let mut res: Vec<f64> = (0..row.len())
                .map(|j| {
                    let f = force.map_or(0.0, |f| f.values[k][j]);
                    d2n.values[k][j] + 0.25 * bilap[j] - divz[j] - divndv[j] - f
                })
                .collect();
            mask_row(&mut res, mask[k]);
            res
        })
        .collect();
    Ok(ResidualField::new(RadialField::new(n.grid, n.times, values)?, mask, d2n.quality))
}

/// `∂²n/∂t² + ¼∇⁴n − ∇·z_s − ∇·(n∇V)`.
pub fn dvt_residual_ks(n: &DensityTrajectory, z_s: &KineticVectorField, v: &PotentialTrajectory) -> Result<ResidualField> {
    dvt_core(n, z_s, None, v)
}

/// `∂²n/∂t² + ¼∇⁴n − ∇·z − ∇·(n∇V_ext) − ∇·F`, with `F` the pair force density
/// from [`interaction_force_term`].
pub fn dvt_residual_interacting(
    n: &DensityTrajectory,
    z: &KineticVectorField,
    force_term: &RadialField,
    v_ext: &PotentialTrajectory,
) -> Result<ResidualField> {
    dvt_core(n, z, Some(force_term), v_ext)
}

/// `M_m(z) = ∫_{−1}^{1} x^m e^{z(x−1)} dx` for `m = 0, 1, 2`.
pub fn angular_moments(z: f64) -> [f64; 3] {
    if z < 2.0 {
        thread_local! {
            static GL: (Vec<f64>, Vec<f64>) = gauss_legendre(16);
        }
        GL.with(|(x, w)| {
            let mut m = [0.0; 3];
            for (xi, wi) in x.iter().zip(w) {
                let e = wi * (z * (xi - 1.0)).exp();
                m[0] += e;
                m[1] += e * xi;
                m[2] += e * xi * xi;
            }
            m
        })
    } else {
        let e = (-2.0 * z).exp();
        let m0 = (1.0 - e) / z;
        let m1 = (1.0 + e) / z - (1.0 - e) / (z * z);
        let m2 = (1.0 - e) / z - 2.0 * m1 / z;
        [m0, m1, m2]
    }
}

fn check_scope(width: &WidthTrajectory, rm: &WavefunctionTrajectory, grid: &RadialGrid) -> Result<()> {
    if width.times != rm.times {
        return Err(Error::InputShape("width and relative-motion trajectories must share a time grid".into()));
    }
    if grid.n_points() < 6 {
        return Err(Error::InvalidGrid("grid too small".into()));
    }
    Ok(())
}

/// `∫ ds s² e^{−(r − s/2)²/a²} g(s, r)` over the relative-motion nodes with its
/// quadrature weights; terms whose Gaussian factor is below `e^{−50}` are skipped.
fn pair_integral(r: f64, a: f64, s_nodes: &[f64], s_w: &[f64], mut g: impl FnMut(usize, f64, [f64; 3]) -> f64) -> f64 {
    let mut acc = 0.0;
    for (i, (&s, &w)) in s_nodes.iter().zip(s_w).enumerate() {
        let d = (r - 0.5 * s) / a;
        if d * d > 50.0 || w == 0.0 {
            continue;
        }
        let m = angular_moments(r * s / (a * a));
        acc += w * s * s * (-d * d).exp() * g(i, s, m);
    }
    acc
}

/// Radial pair force `F_r(r) = −K ∫ P(r, r') (r − r')·r̂ dr'` with `P = 2|Ψ|²`.
pub fn interaction_force_field(width: &WidthTrajectory, rm: &WavefunctionTrajectory, k: f64, grid: &RadialGrid) -> Result<RadialField> {
    check_scope(width, rm, grid)?;
    let s_nodes = rm.grid.nodes();
    let s_w = rm.grid.weights();
    let values = (0..rm.n_slices())
        .into_par_iter()
        .map(|t| {
            let a = width.a[t];
            let rho = rm.density(t);
            let pre = -k * 2.0 * 2.0 * PI / (a.powi(3) * PI.powf(1.5));
            grid.nodes()
                .iter()
                .map(|&r| pre * pair_integral(r, a, &s_nodes, &s_w, |i, s, m| s * rho[i] * m[1]))
                .collect()
        })
        .collect();
    RadialField::new(*grid, rm.times, values)
}

/// The pair-force term `∇·F` of the interacting identity, Moshinsky interaction only.
pub fn interaction_force_term(
    width: &WidthTrajectory,
    rm: &WavefunctionTrajectory,
    interaction: &crate::rm::InteractionSpec,
    grid: &RadialGrid,
) -> Result<RadialField> {
    let k = interaction.moshinsky_k().ok_or_else(|| {
        Error::UnsupportedScope("the pair-force term is implemented for the Moshinsky interaction only".into())
    })?;
    let mut f = interaction_force_field(width, rm, k, grid)?;
    let h = grid.h();
    f.values.iter_mut().for_each(|row| *row = divergence(row, h));
    Ok(f)
}

/// Interacting `z` from the separable state `ψ_CM(C) ψ_RM(s)` with a breathing
/// Gaussian centre of mass.
pub fn interacting_kinetic_vector_field(
    width: &WidthTrajectory,
    rm: &WavefunctionTrajectory,
    grid: &RadialGrid,
) -> Result<KineticVectorField> {
    check_scope(width, rm, grid)?;
    let s_nodes = rm.grid.nodes();
    let s_w = rm.grid.weights();
    let hs = rm.grid.h();
    let norm = 1.0 / (4.0 * PI).sqrt();
    let values: Vec<Vec<f64>> = (0..rm.n_slices())
        .into_par_iter()
        .map(|t| {
            let a = width.a[t];
            let beta = width.mass * width.adot[t] / a;
            let big_a = Complex64::new(-1.0 / (a * a), beta);
            let psi: Vec<Complex64> = reduced_to_radial(&rm.chi[t], hs).iter().map(|p| p * norm).collect();
            let dpsi = derivative(&psi, hs, Parity::Even);
            let a2 = big_a.norm_sqr();
            let p: Vec<f64> = psi.iter().zip(&dpsi).map(|(f, d)| (big_a.conj() * f.conj() * d).re).collect();
            let q: Vec<f64> = psi.iter().map(|f| f.norm_sqr()).collect();
            let dq: Vec<f64> = dpsi.iter().map(|d| d.norm_sqr()).collect();
            let pre = 2.0 * 2.0 * PI / (a.powi(3) * PI.powf(1.5));
            let (tau_l, trace): (Vec<f64>, Vec<f64>) = grid
                .nodes()
                .iter()
                .map(|&r| {
                    let l = pair_integral(r, a, &s_nodes, &s_w, |i, s, m| {
                        0.25 * a2 * q[i] * (r * r * m[0] - r * s * m[1] + 0.25 * s * s * m[2])
                            + p[i] * (r * m[1] - 0.5 * s * m[2])
                            + dq[i] * m[2]
                    });
                    let tr = pair_integral(r, a, &s_nodes, &s_w, |i, s, m| {
                        0.25 * a2 * q[i] * ((r * r + 0.25 * s * s) * m[0] - r * s * m[1])
                            + p[i] * (r * m[1] - 0.5 * s * m[0])
                            + dq[i] * m[0]
                    });
                    (pre * l, pre * tr)
                })
                .unzip();
            let tau_t: Vec<f64> = trace.iter().zip(&tau_l).map(|(tr, l)| 0.5 * (tr - l)).collect();
            z_from_tensor(&tau_l, &tau_t, grid.h())
        })
        .collect();
    Ok(KineticVectorField {
        field: RadialField::new(*grid, rm.times, values)?,
        mask_len: vec![grid.n_points().saturating_sub(2); rm.n_slices()],
        variant: KineticVariant::Interacting,
    })
}

/// Outcome of a driven-oscillator translation check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HptReport {
    pub times: Vec<f64>,
    /// `max_x |n(x, t) − n_0(x − x_cl(t))|` per stored slice.
    pub deviation: Vec<f64>,
    pub x_classical: Vec<f64>,
    pub max_deviation: f64,
    pub warning: Option<String>,
}

impl HptReport {
    /// Largest deviation up to time `t`.
    pub fn max_until(&self, t: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.deviation)
            .filter(|(s, _)| **s <= t + 1e-12)
            .map(|(_, d)| *d)
            .fold(0.0, f64::max)
    }
}

/// Parameters of a driven line `ω0²x²/2 − E0 sin(Ωt) x + c4 x⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrivenLine {
    pub omega0: f64,
    pub e0: f64,
    pub omega_drive: f64,
    #[serde(default)]
    pub quartic: f64,
}

/// Classical `ẍ = −ω0² x + E0 sin(Ωt)` from rest at the origin, RK4 on the time grid.
pub fn classical_trajectory(p: &DrivenLine, times: &TimeGrid) -> Vec<f64> {
    let f = |t: f64, y: [f64; 2]| [y[1], -p.omega0 * p.omega0 * y[0] + p.e0 * (p.omega_drive * t).sin()];
    let mut y = [0.0, 0.0];
    let mut out = vec![0.0];
    let dt = times.dt();
    for k in 0..times.n_steps() {
        let t = times.t(k);
        let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * dt, add(y, k1, 0.5 * dt));
        let k3 = f(t + 0.5 * dt, add(y, k2, 0.5 * dt));
        let k4 = f(t + dt, add(y, k3, dt));
        y = [
            y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        out.push(y[0]);
    }
    out
}

/// Four-point Lagrange interpolation on a uniform line; zero outside.
fn line_interp(values: &[f64], grid: &LineGrid, x: f64) -> f64 {
    let n = values.len();
    let u = (x + grid.x_max()) / grid.h();
    if u < 0.0 || u > (n - 1) as f64 {
        return 0.0;
    }
    let i0 = (u.floor() as isize).clamp(1, n as isize - 3);
    let p = u - i0 as f64;
    let f = |i: isize| values[i as usize];
    let wm1 = -p * (p - 1.0) * (p - 2.0) / 6.0;
    let w0 = (p + 1.0) * (p - 1.0) * (p - 2.0) / 2.0;
    let w1 = -(p + 1.0) * p * (p - 2.0) / 2.0;
    let w2 = (p + 1.0) * p * (p - 1.0) / 6.0;
    wm1 * f(i0 - 1) + w0 * f(i0) + w1 * f(i0 + 1) + w2 * f(i0 + 2)
}

/// Propagate the ground state of the undriven well under the drive and compare the
/// density with the ground-state density carried along the classical trajectory.
pub fn hpt_check(p: &DrivenLine, grid: &LineGrid, times: &TimeGrid, stride: usize) -> Result<HptReport> {
    if !(p.omega0 > 0.0) {
        return Err(Error::ModelInvalid(format!("ω0 must be positive, got {}", p.omega0)));
    }
    let potential = LinePotential {
        omega0: p.omega0,
        e0: p.e0,
        omega_drive: p.omega_drive,
        quartic: p.quartic,
        nodes: grid.nodes(),
    };
    let (_, psi0) = potential.ground_state(grid)?;
    let traj = propagate_cartesian_1d(&psi0, grid, &potential, times, stride)?;
    let xcl_all = classical_trajectory(p, times);
    let n0 = traj.density(0);
    let nodes = grid.nodes();
    let peak = n0.iter().cloned().fold(0.0, f64::max);
    let edge = (grid.n_points() / 20).max(2);
    let mut warning = None;
    let mut deviation = Vec::with_capacity(traj.psi.len());
    let mut x_classical = Vec::with_capacity(traj.psi.len());
    for k in 0..traj.psi.len() {
        let xc = xcl_all[k * stride];
        let n = traj.density(k);
        let dev = n
            .iter()
            .zip(&nodes)
            .map(|(v, &x)| (v - line_interp(&n0, grid, x - xc)).abs())
            .fold(0.0, f64::max);
        let near_edge = n[..edge].iter().chain(&n[n.len() - edge..]).cloned().fold(0.0, f64::max);
        if warning.is_none() && near_edge > 1e-10 * peak {
            warning = Some(format!(
                "packet reaches the last {edge} nodes at t = {} (x_cl = {xc:.3}); widen the line or shorten the run",
                traj.times.t(k)
            ));
        }
        deviation.push(dev);
        x_classical.push(xc);
    }
    let max_deviation = deviation.iter().cloned().fold(0.0, f64::max);
    Ok(HptReport {
        times: traj.times.times(),
        deviation,
        x_classical,
        max_deviation,
        warning,
    })
}
