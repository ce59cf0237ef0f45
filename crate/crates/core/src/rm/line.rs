use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::stepper::{evolve, kinetic_matrix, Potential};
use crate::error::{Error, Result};
use crate::grids::TimeGrid;

/// Symmetric line `[−x_max, x_max]` with hard walls at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineGrid {
    x_max: f64,
    n_points: usize,
}

impl LineGrid {
    pub fn new(x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_max > 0.0 && x_max.is_finite()) || n_points < 16 {
            return Err(Error::InvalidGrid(format!(
                "line grid needs x_max > 0 and at least 16 points, got {x_max}, {n_points}"
            )));
        }
        Ok(Self { x_max, n_points })
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn h(&self) -> f64 {
        2.0 * self.x_max / (self.n_points - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.x_max + j as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }
}

/// `ω0² x²/2 − E0 sin(Ω t) x + c4 x⁴` (unit mass).
#[derive(Debug, Clone, PartialEq)]
pub struct LinePotential {
    pub omega0: f64,
    pub e0: f64,
    pub omega_drive: f64,
    pub quartic: f64,
    pub nodes: Vec<f64>,
}

impl LinePotential {
    pub fn at(&self, x: f64, t: f64) -> f64 {
        0.5 * self.omega0 * self.omega0 * x * x - self.e0 * (self.omega_drive * t).sin() * x
            + self.quartic * x.powi(4)
    }

    /// Ground state of the undriven well, `h Σ |ψ|² = 1`.
    pub fn ground_state(&self, grid: &LineGrid) -> Result<(f64, Vec<Complex64>)> {
        let n = grid.n_points();
        let v: Vec<f64> = self.nodes[1..n - 1].iter().map(|&x| self.at(x, 0.0)).collect();
        let ham = kinetic_matrix(n, grid.h(), 1.0).with_diagonal_added(&v);
        let (e, x) = ham.lowest_eigenpair()?;
        let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let norm = (grid.h() * x.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let mut psi = vec![Complex64::new(0.0, 0.0); n];
        for (p, v) in psi[1..n - 1].iter_mut().zip(&x) {
            *p = Complex64::new(sign * v / norm, 0.0);
        }
        Ok((e, psi))
    }
}

impl Potential for LinePotential {
    fn fill(&self, t: f64, out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(&self.nodes) {
            *o = self.at(x, t);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineTrajectory {
    pub grid: LineGrid,
    pub times: TimeGrid,
    pub psi: Vec<Vec<Complex64>>,
}

impl LineTrajectory {
    pub fn density(&self, k: usize) -> Vec<f64> {
        self.psi[k].iter().map(|p| p.norm_sqr()).collect()
    }

    pub fn norm(&self, k: usize) -> f64 {
        self.grid.h() * self.psi[k].iter().map(|p| p.norm_sqr()).sum::<f64>()
    }
}

/// Crank–Nicolson on the walled line with unit mass.
pub fn propagate_cartesian_1d<P: Potential + ?Sized>(
    psi0: &[Complex64],
    grid: &LineGrid,
    potential: &P,
    times: &TimeGrid,
    stride: usize,
) -> Result<LineTrajectory> {
    if psi0.len() != grid.n_points() {
        return Err(Error::InputShape(format!(
            "wavefunction has {} samples, line grid has {}",
            psi0.len(),
            grid.n_points()
        )));
    }
    let kept = times.thinned(stride)?;
    let psi = evolve(grid.h(), 1.0, psi0, potential, times, stride, |_, _| {})?;
    Ok(LineTrajectory { grid: *grid, times: kept, psi })
}
