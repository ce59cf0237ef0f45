//! Relative-motion dynamics: radial ground states and Crank–Nicolson propagation of
//! reduced wavefunctions `χ(s) = √(4π)·s·ψ(s)`, plus a walled 1D line propagator.

mod line;
mod protocol;
mod stepper;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{RadialGrid, TimeGrid};

pub use line::{propagate_cartesian_1d, LineGrid, LinePotential, LineTrajectory};
pub use protocol::{FrequencyLaw, FrequencyProtocol, ShiftedFrequency};
pub use stepper::{evolve, imaginary_time_ground_state, kinetic_matrix, rayleigh, CrankNicolson, Potential, NORM_DRIFT_LIMIT};

/// Pair interaction `u(s)` at relative separation `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionSpec {
    None,
    /// `u = −K s²/2`.
    Moshinsky { k: f64 },
    /// `u = λ/√(s² + a²)`.
    SoftenedCoulomb { lambda: f64, a: f64 },
    /// `u = g/s²`.
    InverseSquare { g: f64 },
}

impl InteractionSpec {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            InteractionSpec::None => 0.0,
            InteractionSpec::Moshinsky { k } => -0.5 * k * s * s,
            InteractionSpec::SoftenedCoulomb { lambda, a } => lambda / (s * s + a * a).sqrt(),
            InteractionSpec::InverseSquare { g } => {
                if s == 0.0 {
                    0.0
                } else {
                    g / (s * s)
                }
            }
        }
    }

    pub fn moshinsky_k(&self) -> Option<f64> {
        match *self {
            InteractionSpec::None => Some(0.0),
            InteractionSpec::Moshinsky { k } => Some(k),
            _ => None,
        }
    }

    /// Checks that `½ m ω² s² + u(s)` is bounded below for the given trap frequency.
    pub fn validate(&self, omega: f64, mass: f64) -> Result<()> {
        match *self {
            InteractionSpec::None => Ok(()),
            InteractionSpec::Moshinsky { k } => {
                if !k.is_finite() {
                    return Err(Error::ModelInvalid("K must be finite".into()));
                }
                if omega * omega - k / mass <= 0.0 {
                    return Err(Error::ModelInvalid(format!(
                        "relative motion unbound: ω² = {} ≤ K/μ = {}",
                        omega * omega,
                        k / mass
                    )));
                }
                Ok(())
            }
            InteractionSpec::SoftenedCoulomb { lambda, a } => {
                if !(a > 0.0 && a.is_finite() && lambda.is_finite()) {
                    return Err(Error::ModelInvalid(format!(
                        "softened Coulomb needs a > 0 and finite λ, got a = {a}, λ = {lambda}"
                    )));
                }
                Ok(())
            }
            InteractionSpec::InverseSquare { g } => {
                if !(2.0 * mass * g >= -0.25) || !g.is_finite() {
                    return Err(Error::ModelInvalid(format!(
                        "inverse-square strength g = {g} makes the radial problem fall to the centre"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// `½ m ω(t)² s² + u(s)` on the nodes of a radial grid.
#[derive(Debug, Clone)]
pub struct TrapPotential<L: FrequencyLaw> {
    pub interaction: InteractionSpec,
    pub law: L,
    pub mass: f64,
    pub nodes: Vec<f64>,
}

impl<L: FrequencyLaw> Potential for TrapPotential<L> {
    fn fill(&self, t: f64, out: &mut [f64]) {
        let w = self.law.omega(t);
        for (o, &s) in out.iter_mut().zip(&self.nodes) {
            *o = 0.5 * self.mass * w * w * s * s + self.interaction.eval(s);
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.law.breakpoints()
    }
}

/// Reduced radial wavefunction; `h Σ |χ_j|² = 1` (the end nodes are zero, so this is
/// the trapezoid rule, which Crank–Nicolson conserves exactly).
#[derive(Debug, Clone, PartialEq)]
pub struct RadialWavefunction {
    pub grid: RadialGrid,
    pub mass: f64,
    pub chi: Vec<Complex64>,
}

impl RadialWavefunction {
    pub fn norm(&self) -> f64 {
        chi_norm(&self.chi, self.grid.h())
    }

    /// `|ψ(s)|²`, normalized so that `4π ∫ |ψ|² s² ds = 1`.
    pub fn density(&self) -> Vec<f64> {
        radial_density(&self.chi, self.grid.h())
    }

    pub fn mean_s2(&self) -> f64 {
        mean_s2(&self.chi, self.grid.h())
    }
}

fn chi_norm(chi: &[Complex64], h: f64) -> f64 {
    h * chi.iter().map(|c| c.norm_sqr()).sum::<f64>()
}

fn mean_s2(chi: &[Complex64], h: f64) -> f64 {
    h * chi
        .iter()
        .enumerate()
        .map(|(j, c)| c.norm_sqr() * (j as f64 * h).powi(2))
        .sum::<f64>()
}

fn radial_density(chi: &[Complex64], h: f64) -> Vec<f64> {
    let psi = crate::radial::reduced_to_radial(chi, h);
    psi.iter().map(|p| p.norm_sqr() / (4.0 * PI)).collect()
}

/// Lowest state of `−(1/2m) d²/ds² + ½ m ω0² s² + u(s)` with `χ(0) = χ(s_max) = 0`.
pub fn solve_ground_state(
    interaction: &InteractionSpec,
    omega0: f64,
    mass: f64,
    grid: &RadialGrid,
) -> Result<(f64, RadialWavefunction)> {
    if !(omega0 > 0.0) || !(mass > 0.0) {
        return Err(Error::ModelInvalid(format!(
            "need ω0 > 0 and m > 0, got ω0 = {omega0}, m = {mass}"
        )));
    }
    interaction.validate(omega0, mass)?;
    let ham = static_hamiltonian(interaction, omega0, mass, grid);
    let (energy, x) = ham.lowest_eigenpair()?;
    Ok((energy, wavefunction_from_interior(&x, mass, grid)))
}

/// The interior Hamiltonian matrix used by [`solve_ground_state`].
pub fn static_hamiltonian(
    interaction: &InteractionSpec,
    omega0: f64,
    mass: f64,
    grid: &RadialGrid,
) -> crate::banded::SymPenta {
    let n = grid.n_points();
    let v: Vec<f64> = (1..n - 1)
        .map(|j| {
            let s = grid.r(j);
            0.5 * mass * omega0 * omega0 * s * s + interaction.eval(s)
        })
        .collect();
    kinetic_matrix(n, grid.h(), mass).with_diagonal_added(&v)
}

/// Sign-fixed, normalized wavefunction from an interior eigenvector.
pub fn wavefunction_from_interior(x: &[f64], mass: f64, grid: &RadialGrid) -> RadialWavefunction {
    let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let n = grid.n_points();
    let mut chi = vec![Complex64::new(0.0, 0.0); n];
    for (c, v) in chi[1..n - 1].iter_mut().zip(x) {
        *c = Complex64::new(sign * v, 0.0);
    }
    let norm = chi_norm(&chi, grid.h()).sqrt();
    chi.iter_mut().for_each(|c| *c /= norm);
    RadialWavefunction { grid: *grid, mass, chi }
}

/// Stored snapshots of a propagated reduced wavefunction.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionTrajectory {
    pub grid: RadialGrid,
    pub times: TimeGrid,
    pub mass: f64,
    pub chi: Vec<Vec<Complex64>>,
}

impl WavefunctionTrajectory {
    pub fn n_slices(&self) -> usize {
        self.chi.len()
    }

    pub fn snapshot(&self, k: usize) -> RadialWavefunction {
        RadialWavefunction {
            grid: self.grid,
            mass: self.mass,
            chi: self.chi[k].clone(),
        }
    }

    pub fn norm(&self, k: usize) -> f64 {
        chi_norm(&self.chi[k], self.grid.h())
    }

    pub fn mean_s2(&self, k: usize) -> f64 {
        mean_s2(&self.chi[k], self.grid.h())
    }

    /// `|ψ(s, t_k)|²` with `4π ∫ |ψ|² s² ds = 1`.
    pub fn density(&self, k: usize) -> Vec<f64> {
        radial_density(&self.chi[k], self.grid.h())
    }
}

/// Propagate under `½ m ω(t)² s² + u(s)`, keeping every `stride`-th snapshot.
pub fn propagate(
    psi0: &RadialWavefunction,
    interaction: &InteractionSpec,
    protocol: &FrequencyProtocol,
    times: &TimeGrid,
    stride: usize,
) -> Result<WavefunctionTrajectory> {
    protocol.validate()?;
    interaction.validate(protocol.min_omega(times.t_final()), psi0.mass)?;
    let potential = TrapPotential {
        interaction: interaction.clone(),
        law: protocol.clone(),
        mass: psi0.mass,
        nodes: psi0.grid.nodes(),
    };
    propagate_with(psi0, &potential, times, stride)
}

/// Propagate under an arbitrary potential.
pub fn propagate_with<P: Potential + ?Sized>(
    psi0: &RadialWavefunction,
    potential: &P,
    times: &TimeGrid,
    stride: usize,
) -> Result<WavefunctionTrajectory> {
    let kept = times.thinned(stride)?;
    let chi = evolve(psi0.grid.h(), psi0.mass, &psi0.chi, potential, times, stride, |_, _| {})?;
    Ok(WavefunctionTrajectory {
        grid: psi0.grid,
        times: kept,
        mass: psi0.mass,
        chi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillator_ground_energy() {
        let grid = RadialGrid::new(12.0, 601).unwrap();
        let (e, psi) = solve_ground_state(&InteractionSpec::None, 1.0, 0.5, &grid).unwrap();
        assert!((e - 1.5).abs() < 1e-6, "{e}");
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let max = psi.chi.iter().map(|c| c.re).fold(0.0, f64::max);
        assert!(psi.chi.iter().all(|c| c.re >= -1e-14 * max && c.im == 0.0));
    }

    #[test]
    fn moshinsky_shifted_frequency_energy() {
        let grid = RadialGrid::new(12.0, 601).unwrap();
        let (e, _) = solve_ground_state(&InteractionSpec::Moshinsky { k: 0.2 }, 1.0, 0.5, &grid).unwrap();
        assert!((e - 1.5 * 0.6f64.sqrt()).abs() < 1e-6, "{e}");
    }

    #[test]
    fn unbound_moshinsky_is_model_invalid() {
        let grid = RadialGrid::new(12.0, 601).unwrap();
        let r = solve_ground_state(&InteractionSpec::Moshinsky { k: 0.5 }, 1.0, 0.5, &grid);
        assert!(matches!(r, Err(Error::ModelInvalid(_))));
    }

    #[test]
    fn radial_density_normalization() {
        let grid = RadialGrid::new(12.0, 601).unwrap();
        let (_, psi) = solve_ground_state(&InteractionSpec::None, 1.0, 0.5, &grid).unwrap();
        let total = crate::grids::integrate_radial(&psi.density(), &grid).unwrap();
        assert!((total - 1.0).abs() < 1e-9);
        // ⟨s²⟩ = 3/(2 μ ω)
        assert!((psi.mean_s2() - 3.0).abs() < 1e-7, "{}", psi.mean_s2());
    }
}
