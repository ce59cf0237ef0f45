//! Pentadiagonal solvers: real symmetric eigenproblems and complex Crank–Nicolson systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real symmetric matrix with two off-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPenta {
    pub diag: Vec<f64>,
    pub off1: Vec<f64>,
    pub off2: Vec<f64>,
}

impl SymPenta {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn with_diagonal_added(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        out.diag.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        out
    }

    pub fn matvec<T>(&self, x: &[T]) -> Vec<T>
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let n = self.len();
        let mut y = vec![T::default(); n];
        for i in 0..n {
            let mut acc = x[i] * self.diag[i];
            if i >= 1 {
                acc = acc + x[i - 1] * self.off1[i - 1];
            }
            if i + 1 < n {
                acc = acc + x[i + 1] * self.off1[i];
            }
            if i >= 2 {
                acc = acc + x[i - 2] * self.off2[i - 2];
            }
            if i + 2 < n {
                acc = acc + x[i + 2] * self.off2[i];
            }
            y[i] = acc;
        }
        y
    }

    /// Gershgorin interval enclosing the spectrum.
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut rad = 0.0;
            if i >= 1 {
                rad += self.off1[i - 1].abs();
            }
            if i + 1 < n {
                rad += self.off1[i].abs();
            }
            if i >= 2 {
                rad += self.off2[i - 2].abs();
            }
            if i + 2 < n {
                rad += self.off2[i].abs();
            }
            lo = lo.min(self.diag[i] - rad);
            hi = hi.max(self.diag[i] + rad);
        }
        (lo, hi)
    }

    /// Band Cholesky of `A - σI`; `None` if it is not positive definite.
    pub fn cholesky_shifted(&self, sigma: f64) -> Option<BandCholesky> {
        let n = self.len();
        // L has diagonal d, sub-diagonals l1 (i,i-1) and l2 (i,i-2)
        let mut d = vec![0.0; n];
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        for i in 0..n {
            if i >= 2 {
                l2[i] = self.off2[i - 2] / d[i - 2];
            }
            if i >= 1 {
                let mut s = self.off1[i - 1];
                if i >= 2 {
                    s -= l2[i] * l1[i - 1];
                }
                l1[i] = s / d[i - 1];
            }
            let mut s = self.diag[i] - sigma - l1[i] * l1[i] - l2[i] * l2[i];
            if !(s > 0.0) {
                return None;
            }
            s = s.sqrt();
            d[i] = s;
        }
        Some(BandCholesky { d, l1, l2 })
    }

    /// Lowest eigenvalue by bisection on positive-definiteness, then inverse iteration.
    pub fn lowest_eigenpair(&self) -> Result<(f64, Vec<f64>)> {
        let (mut lo, hi) = self.spectrum_bounds();
        let mut up = hi;
        let scale = lo.abs().max(hi.abs()).max(1.0);
        let mut iterations = 0;
        while up - lo > 4.0 * f64::EPSILON * scale {
            iterations += 1;
            if iterations > 400 {
                return Err(Error::EigenNonConvergence {
                    iterations,
                    bracket: up - lo,
                });
            }
            let mid = 0.5 * (lo + up);
            if mid <= lo || mid >= up {
                break;
            }
            if self.cholesky_shifted(mid).is_some() {
                lo = mid;
            } else {
                up = mid;
            }
        }
        let lambda = lo;
        let n = self.len();
        // shift just below the eigenvalue keeps A - σI positive definite
        let mut delta = 1e-10 * scale;
        let chol = loop {
            if let Some(c) = self.cholesky_shifted(lambda - delta) {
                break c;
            }
            delta *= 10.0;
            if delta > 1e-2 * scale {
                return Err(Error::EigenNonConvergence {
                    iterations,
                    bracket: delta,
                });
            }
        };
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
        for _ in 0..4 {
            x = chol.solve(&x);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
        }
        // Rayleigh quotient polishes the bisection value
        let ax = self.matvec(&x);
        let rq: f64 = ax.iter().zip(&x).map(|(a, b)| a * b).sum();
        let energy = if (rq - lambda).abs() < 1e-8 * scale { rq } else { lambda };
        Ok((energy, x))
    }
}

/// Factor `L Lᵀ` of a symmetric positive-definite pentadiagonal matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            if i >= 1 {
                s -= self.l1[i] * y[i - 1];
            }
            if i >= 2 {
                s -= self.l2[i] * y[i - 2];
            }
            y[i] = s / self.d[i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s -= self.l1[i + 1] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.l2[i + 2] * x[i + 2];
            }
            x[i] = s / self.d[i];
        }
        x
    }
}

/// LU factor (no pivoting) of `I + iτ(H + diag(v))` for real symmetric pentadiagonal `H`.
///
/// The Hermitian part of the matrix is the identity, so elimination without
/// pivoting is well defined.
#[derive(Debug, Clone)]
pub struct CayleyFactor {
    // U rows: u0 (diag), u1, u2 (super-diagonals); L multipliers m1 (i,i-1), m2 (i,i-2)
    u0: Vec<Complex64>,
    u1: Vec<Complex64>,
    u2: Vec<Complex64>,
    m1: Vec<Complex64>,
    m2: Vec<Complex64>,
    tau: f64,
}

impl CayleyFactor {
    /// Factor `I + iτ H` where `H` already contains the potential on its diagonal.
    pub fn new(h: &SymPenta, tau: f64) -> Self {
        let n = h.len();
        let i = Complex64::new(0.0, tau);
        let a0: Vec<Complex64> = h.diag.iter().map(|&d| Complex64::new(1.0, 0.0) + i * d).collect();
        let a1: Vec<Complex64> = h.off1.iter().map(|&d| i * d).collect();
        let a2: Vec<Complex64> = h.off2.iter().map(|&d| i * d).collect();
        let zero = Complex64::new(0.0, 0.0);
        let mut u0 = vec![zero; n];
        let mut u1 = vec![zero; n];
        let mut u2 = vec![zero; n];
        let mut m1 = vec![zero; n];
        let mut m2 = vec![zero; n];
        for r in 0..n {
            // row r of A: a2[r-2], a1[r-1], a0[r], a1[r], a2[r]
            let mut below2 = if r >= 2 { a2[r - 2] } else { zero };
            let mut below1 = if r >= 1 { a1[r - 1] } else { zero };
            let mut diag = a0[r];
            let mut sup1 = if r + 1 < n { a1[r] } else { zero };
            let sup2 = if r + 2 < n { a2[r] } else { zero };
            if r >= 2 {
                let m = below2 / u0[r - 2];
                m2[r] = m;
                below1 -= m * u1[r - 2];
                diag -= m * u2[r - 2];
                below2 = zero;
            }
            let _ = below2;
            if r >= 1 {
                let m = below1 / u0[r - 1];
                m1[r] = m;
                diag -= m * u1[r - 1];
                sup1 -= m * u2[r - 1];
            }
            u0[r] = diag;
            u1[r] = sup1;
            u2[r] = sup2;
        }
        Self { u0, u1, u2, m1, m2, tau }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = b.len();
        for r in 0..n {
            let mut s = b[r];
            if r >= 1 {
                s -= self.m1[r] * b[r - 1];
            }
            if r >= 2 {
                s -= self.m2[r] * b[r - 2];
            }
            b[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = b[r];
            if r + 1 < n {
                s -= self.u1[r] * b[r + 1];
            }
            if r + 2 < n {
                s -= self.u2[r] * b[r + 2];
            }
            b[r] = s / self.u0[r];
        }
    }
}

/// One Crank–Nicolson step `χ ← (I + iτH)⁻¹ (I − iτH) χ`.
pub fn cayley_step(h: &SymPenta, factor: &CayleyFactor, chi: &mut [Complex64]) {
    let hx = h.matvec(chi);
    let i_tau = Complex64::new(0.0, factor.tau());
    for (c, hc) in chi.iter_mut().zip(hx) {
        *c -= i_tau * hc;
    }
    factor.solve_in_place(chi);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_like(n: usize) -> SymPenta {
        SymPenta {
            diag: (0..n).map(|i| 2.5 + 0.01 * i as f64).collect(),
            off1: vec![-4.0 / 3.0; n - 1],
            off2: vec![1.0 / 12.0; n - 2],
        }
    }

    #[test]
    fn cholesky_solves() {
        let a = laplacian_like(30);
        let x: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x);
        let y = a.cholesky_shifted(0.0).unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn cayley_factor_solves() {
        let a = laplacian_like(25);
        let f = CayleyFactor::new(&a, 0.3);
        let x: Vec<Complex64> = (0..25).map(|i| Complex64::new((i as f64).cos(), 0.2 * i as f64)).collect();
        let ax = a.matvec(&x);
        let mut b: Vec<Complex64> = x
            .iter()
            .zip(&ax)
            .map(|(xi, hi)| xi + Complex64::new(0.0, 0.3) * hi)
            .collect();
        f.solve_in_place(&mut b);
        for (p, q) in x.iter().zip(&b) {
            assert!((p - q).norm() < 1e-11);
        }
    }

    #[test]
    fn cayley_step_is_unitary() {
        let a = laplacian_like(40);
        let f = CayleyFactor::new(&a, 0.05);
        let mut chi: Vec<Complex64> = (0..40).map(|i| Complex64::new((0.3 * i as f64).sin(), 0.0)).collect();
        let n0: f64 = chi.iter().map(|c| c.norm_sqr()).sum();
        for _ in 0..1000 {
            cayley_step(&a, &f, &mut chi);
        }
        let n1: f64 = chi.iter().map(|c| c.norm_sqr()).sum();
        assert!((n1 / n0 - 1.0).abs() < 1e-12);
    }
}
