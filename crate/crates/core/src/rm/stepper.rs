//! Crank–Nicolson stepping for `−(1/2m) d²/dx² + V(x, t)` on the interior nodes of a
//! uniform grid whose two end nodes carry homogeneous Dirichlet values.
//!
//! Fourth-order differences with odd ghost values beyond both ends; this is the
//! reduced radial problem (`χ(0) = 0`) and the walled line alike.

use num_complex::Complex64;

use crate::banded::{cayley_step, CayleyFactor, SymPenta};
use crate::error::{Error, Result};
use crate::grids::TimeGrid;

/// A one-body potential sampled on every node of a grid (end nodes included).
pub trait Potential: Sync {
    fn fill(&self, t: f64, out: &mut [f64]);

    /// Times where the potential jumps; no step straddles one.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `−(1/2m) d²/dx²` restricted to the `n − 2` interior nodes.
pub fn kinetic_matrix(n: usize, h: f64, mass: f64) -> SymPenta {
    let m = n - 2;
    let c = 1.0 / (2.0 * mass * 12.0 * h * h);
    let mut diag = vec![30.0 * c; m];
    diag[0] = 29.0 * c;
    diag[m - 1] = 29.0 * c;
    SymPenta {
        diag,
        off1: vec![-16.0 * c; m - 1],
        off2: vec![c; m - 2],
    }
}

/// `⟨x|A|x⟩ / ⟨x|x⟩` for complex `x`.
pub fn rayleigh(a: &SymPenta, x: &[Complex64]) -> f64 {
    let ax = a.matvec(x);
    let num: f64 = x.iter().zip(&ax).map(|(p, q)| (p.conj() * q).re).sum();
    let den: f64 = x.iter().map(|p| p.norm_sqr()).sum();
    num / den
}

struct Cached {
    v: Vec<f64>,
    tau: f64,
    h: SymPenta,
    factor: CayleyFactor,
}

pub struct CrankNicolson<'a, P: Potential + ?Sized> {
    kinetic: SymPenta,
    potential: &'a P,
    breakpoints: Vec<f64>,
    e_ref: f64,
    buf: Vec<f64>,
    cache: Option<Cached>,
}

impl<'a, P: Potential + ?Sized> CrankNicolson<'a, P> {
    pub fn new(n: usize, h: f64, mass: f64, potential: &'a P) -> Self {
        let mut breakpoints = potential.breakpoints();
        breakpoints.sort_by(f64::total_cmp);
        Self {
            kinetic: kinetic_matrix(n, h, mass),
            potential,
            breakpoints,
            e_ref: 0.0,
            buf: vec![0.0; n],
            cache: None,
        }
    }

    /// Constant subtracted from the Hamiltonian. A pure gauge shift, but it keeps the
    /// Cayley phase error tied to excitation energies rather than absolute ones.
    pub fn set_energy_reference(&mut self, e: f64) {
        self.e_ref = e;
        self.cache = None;
    }

    pub fn energy_reference(&self) -> f64 {
        self.e_ref
    }

    /// Hamiltonian on the interior at time `t`, without the energy reference.
    pub fn hamiltonian(&mut self, t: f64) -> SymPenta {
        self.potential.fill(t, &mut self.buf);
        let n = self.buf.len();
        self.kinetic.with_diagonal_added(&self.buf[1..n - 1])
    }

    /// Advance interior amplitudes from `t0` to `t1`.
    pub fn advance(&mut self, chi: &mut [Complex64], t0: f64, t1: f64) {
        let eps = 1e-12 * t1.abs().max(1.0);
        let mut a = t0;
        let cuts: Vec<f64> = self
            .breakpoints
            .iter()
            .copied()
            .filter(|&b| b > t0 + eps && b < t1 - eps)
            .collect();
        for b in cuts.into_iter().chain(std::iter::once(t1)) {
            self.substep(chi, a, b);
            a = b;
        }
    }

    fn substep(&mut self, chi: &mut [Complex64], a: f64, b: f64) {
        let tau = 0.5 * (b - a);
        self.potential.fill(0.5 * (a + b), &mut self.buf);
        let n = self.buf.len();
        let e_ref = self.e_ref;
        let v: Vec<f64> = self.buf[1..n - 1].iter().map(|x| x - e_ref).collect();
        let fresh = match &self.cache {
            Some(c) => c.tau != tau || c.v != v,
            None => true,
        };
        if fresh {
            let h = self.kinetic.with_diagonal_added(&v);
            let factor = CayleyFactor::new(&h, tau);
            self.cache = Some(Cached { v, tau, h, factor });
        }
        let c = self.cache.as_ref().expect("factor cached above");
        cayley_step(&c.h, &c.factor, chi);
    }
}

/// Norm drift beyond which a run is declared unstable.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

/// Propagate full-grid amplitudes `chi0` over `times`, storing every `stride`-th slice.
///
/// Stored slices carry the physical phase (the energy reference is undone).
/// `observe(k, interior)` sees every step.
pub fn evolve<P: Potential + ?Sized>(
    h: f64,
    mass: f64,
    chi0: &[Complex64],
    potential: &P,
    times: &TimeGrid,
    stride: usize,
    mut observe: impl FnMut(usize, &[Complex64]),
) -> Result<Vec<Vec<Complex64>>> {
    let n = chi0.len();
    let mut cn = CrankNicolson::new(n, h, mass, potential);
    let mut chi: Vec<Complex64> = chi0[1..n - 1].to_vec();
    let norm0: f64 = chi.iter().map(|c| c.norm_sqr()).sum();
    if times.n_steps() > 0 {
        let h0 = cn.hamiltonian(0.5 * times.dt());
        cn.set_energy_reference(rayleigh(&h0, &chi));
    }
    let e_ref = cn.energy_reference();
    let store = |chi: &[Complex64], t: f64| {
        let phase = Complex64::from_polar(1.0, -e_ref * t);
        let mut full = vec![Complex64::new(0.0, 0.0); n];
        for (dst, src) in full[1..n - 1].iter_mut().zip(chi) {
            *dst = src * phase;
        }
        full
    };
    let mut out = vec![store(&chi, 0.0)];
    observe(0, &chi);
    for k in 0..times.n_steps() {
        let (t0, t1) = (times.t(k), times.t(k + 1));
        cn.advance(&mut chi, t0, t1);
        let norm: f64 = chi.iter().map(|c| c.norm_sqr()).sum();
        let drift = (norm / norm0 - 1.0).abs();
        if !(drift <= NORM_DRIFT_LIMIT) {
            return Err(Error::Instability { time: t1, drift });
        }
        observe(k + 1, &chi);
        if (k + 1) % stride == 0 {
            out.push(store(&chi, t1));
        }
    }
    Ok(out)
}

/// Ground state by imaginary-time Crank–Nicolson; an independent check on the
/// direct eigensolver. Returns the energy and the (unnormalized) interior vector.
pub fn imaginary_time_ground_state(ham: &SymPenta, dtau: f64, tol: f64, max_steps: usize) -> Result<(f64, Vec<f64>)> {
    let m = ham.len();
    // (1 + τH/2) x' = (1 − τH/2) x
    let lhs = SymPenta {
        diag: ham.diag.iter().map(|d| 1.0 + 0.5 * dtau * d).collect(),
        off1: ham.off1.iter().map(|d| 0.5 * dtau * d).collect(),
        off2: ham.off2.iter().map(|d| 0.5 * dtau * d).collect(),
    };
    let chol = lhs.cholesky_shifted(0.0).ok_or(Error::EigenNonConvergence {
        iterations: 0,
        bracket: dtau,
    })?;
    let mut x: Vec<f64> = (0..m).map(|i| (-(i as f64 / m as f64 - 0.2).powi(2) * 20.0).exp()).collect();
    let mut e_old = f64::INFINITY;
    for step in 0..max_steps {
        let hx = ham.matvec(&x);
        let rhs: Vec<f64> = x.iter().zip(&hx).map(|(a, b)| a - 0.5 * dtau * b).collect();
        x = chol.solve(&rhs);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        let hx = ham.matvec(&x);
        let e: f64 = x.iter().zip(&hx).map(|(a, b)| a * b).sum();
        if (e - e_old).abs() < tol * e.abs().max(1.0) {
            return Ok((e, x));
        }
        e_old = e;
        if step + 1 == max_steps {
            return Err(Error::EigenNonConvergence {
                iterations: max_steps,
                bracket: (e - e_old).abs(),
            });
        }
    }
    Err(Error::EigenNonConvergence {
        iterations: max_steps,
        bracket: f64::NAN,
    })
}
