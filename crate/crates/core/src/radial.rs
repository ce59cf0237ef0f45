//! Fourth-order finite-difference calculus for spherically symmetric fields.
//!
//! Fields sampled on a [`RadialGrid`] are extended to `r < 0` by their parity
//! (even for scalars such as densities and potentials, odd for radial vector
//! components and reduced wavefunctions `u = r f`), which makes the centred
//! stencils valid right up to the origin. At `r_max` one-sided stencils are used.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

/// Minimal field trait shared by `f64` and `Complex64`.
pub trait Scalar:
    Copy
    + Default
    + Send
    + Sync
    + From<f64>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
{
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

#[inline]
fn at<T: Scalar>(f: &[T], j: isize, parity: Parity) -> T {
    if j < 0 {
        f[(-j) as usize] * parity.sign()
    } else {
        f[j as usize]
    }
}

/// `df/dr`. The result has the opposite parity of `f`.
pub fn derivative<T: Scalar>(f: &[T], h: f64, parity: Parity) -> Vec<T> {
    let n = f.len();
    assert!(n >= 6, "derivative needs at least 6 nodes");
    let mut out = vec![T::default(); n];
    let c = 1.0 / (12.0 * h);
    for j in 0..n - 2 {
        let j = j as isize;
        out[j as usize] = (at(f, j - 2, parity) - at(f, j - 1, parity) * 8.0
            + at(f, j + 1, parity) * 8.0
            - at(f, j + 2, parity))
            * c;
    }
    let m = n - 1;
    out[m - 1] = (f[m] * 3.0 + f[m - 1] * 10.0 - f[m - 2] * 18.0 + f[m - 3] * 6.0 - f[m - 4]) * c;
    out[m] = (f[m] * 25.0 - f[m - 1] * 48.0 + f[m - 2] * 36.0 - f[m - 3] * 16.0 + f[m - 4] * 3.0) * c;
    out
}

/// `d²f/dr²`. Same parity as `f`.
pub fn second_derivative<T: Scalar>(f: &[T], h: f64, parity: Parity) -> Vec<T> {
    let n = f.len();
    assert!(n >= 6, "second derivative needs at least 6 nodes");
    let mut out = vec![T::default(); n];
    let c = 1.0 / (12.0 * h * h);
    for j in 0..n - 2 {
        let j = j as isize;
        out[j as usize] = (-at(f, j - 2, parity) + at(f, j - 1, parity) * 16.0
            - at(f, j, parity) * 30.0
            + at(f, j + 1, parity) * 16.0
            - at(f, j + 2, parity))
            * c;
    }
    let m = n - 1;
    out[m - 1] = (f[m] * 10.0 - f[m - 1] * 15.0 - f[m - 2] * 4.0 + f[m - 3] * 14.0 - f[m - 4] * 6.0
        + f[m - 5])
        * c;
    out[m] = (f[m] * 45.0 - f[m - 1] * 154.0 + f[m - 2] * 214.0 - f[m - 3] * 156.0
        + f[m - 4] * 61.0
        - f[m - 5] * 10.0)
        * c;
    out
}

/// Radial Laplacian `(1/r) d²(r f)/dr²` of an even scalar.
///
/// The origin value is extrapolated in `r²` from the first three nodes rather than
/// taken as `3 f''(0)`: the limit has a different truncation-error coefficient, and
/// the jump would be amplified by a second Laplacian.
pub fn laplacian<T: Scalar>(f: &[T], h: f64) -> Vec<T> {
    let u: Vec<T> = f.iter().enumerate().map(|(j, &v)| v * (j as f64 * h)).collect();
    let d2u = second_derivative(&u, h, Parity::Odd);
    let mut out: Vec<T> = d2u
        .iter()
        .enumerate()
        .map(|(j, &v)| if j == 0 { T::default() } else { v * (1.0 / (j as f64 * h)) })
        .collect();
    out[0] = origin_from_even(&out);
    out
}

/// `c0` of the even fit `c0 + c1 r² + c2 r⁴` through nodes 1, 2, 3.
fn origin_from_even<T: Scalar>(v: &[T]) -> T {
    v[1] * 1.5 - v[2] * 0.6 + v[3] * 0.1
}

/// Divergence `(1/r²) d(r² g)/dr = g' + 2g/r` of an odd radial component, origin
/// extrapolated as in [`laplacian`].
pub fn divergence(g: &[f64], h: f64) -> Vec<f64> {
    let dg = derivative(g, h, Parity::Odd);
    let mut out: Vec<f64> = dg
        .iter()
        .zip(g)
        .enumerate()
        .map(|(j, (d, v))| if j == 0 { 0.0 } else { d + 2.0 * v / (j as f64 * h) })
        .collect();
    out[0] = origin_from_even(&out);
    out
}

/// Integrals over each cell `[r_j, r_{j+1}]` from the cubic through four neighbours.
pub fn cell_integrals<T: Scalar>(f: &[T], h: f64, parity: Parity) -> Vec<T> {
    let n = f.len();
    assert!(n >= 4, "cell integrals need at least 4 nodes");
    let c = h / 24.0;
    (0..n - 1)
        .map(|j| {
            if j + 2 < n {
                let j = j as isize;
                (-at(f, j - 1, parity) + at(f, j, parity) * 13.0 + at(f, j + 1, parity) * 13.0
                    - at(f, j + 2, parity))
                    * c
            } else {
                (f[j - 2] - f[j - 1] * 5.0 + f[j] * 19.0 + f[j + 1] * 9.0) * c
            }
        })
        .collect()
}

/// Integrals `∫ r² g dr` over each cell `[r_j, r_{j+1}]`, with `g` cubic through four
/// neighbours and the `r²` weight integrated exactly. Keeps full relative accuracy
/// near the origin, where `r² g` itself is poorly resolved by a cubic.
pub fn r2_cell_integrals<T: Scalar>(g: &[T], h: f64, parity: Parity) -> Vec<T> {
    let n = g.len();
    assert!(n >= 4, "cell integrals need at least 4 nodes");
    // moments ∫_0^1 x^p L_i(x) dx for Lagrange bases on offsets, via 3-point Gauss
    let gl = [
        (0.5 - 0.5 * (0.6f64).sqrt(), 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + 0.5 * (0.6f64).sqrt(), 5.0 / 18.0),
    ];
    let moments = |offsets: [f64; 4]| -> [[f64; 4]; 3] {
        let mut m = [[0.0; 4]; 3];
        for &(x, w) in &gl {
            for i in 0..4 {
                let mut l = 1.0;
                for k in 0..4 {
                    if k != i {
                        l *= (x - offsets[k]) / (offsets[i] - offsets[k]);
                    }
                }
                for (p, row) in m.iter_mut().enumerate() {
                    row[i] += w * x.powi(p as i32) * l;
                }
            }
        }
        m
    };
    let inner = moments([-1.0, 0.0, 1.0, 2.0]);
    let outer = moments([-2.0, -1.0, 0.0, 1.0]);
    let h3 = h * h * h;
    (0..n - 1)
        .map(|j| {
            let jf = j as f64;
            let (m, first) = if j + 2 < n { (&inner, j as isize - 1) } else { (&outer, j as isize - 2) };
            let mut acc = T::default();
            for i in 0..4 {
                let w = jf * jf * m[0][i] + 2.0 * jf * m[1][i] + m[2][i];
                acc = acc + at(g, first + i as isize, parity) * (w * h3);
            }
            acc
        })
        .collect()
}

/// `∫_0^{r_j} f dr` for every node.
pub fn cumulative<T: Scalar>(f: &[T], h: f64, parity: Parity) -> Vec<T> {
    let cells = cell_integrals(f, h, parity);
    let mut out = Vec::with_capacity(f.len());
    let mut acc = T::default();
    out.push(acc);
    for c in cells {
        acc = acc + c;
        out.push(acc);
    }
    out
}

/// `∫_{r_j}^{r_max} f dr` for every node, accumulated from the outer end.
pub fn cumulative_from_end<T: Scalar>(f: &[T], h: f64, parity: Parity) -> Vec<T> {
    let cells = cell_integrals(f, h, parity);
    let n = f.len();
    let mut out = vec![T::default(); n];
    let mut acc = T::default();
    for j in (0..n - 1).rev() {
        acc = acc + cells[j];
        out[j] = acc;
    }
    out
}

/// Four-point Lagrange interpolation of an even function sampled on `r_j = j h`.
///
/// Points beyond the last node evaluate to zero.
#[derive(Debug, Clone)]
pub struct EvenInterpolator<T> {
    values: Vec<T>,
    h: f64,
}

impl<T: Scalar> EvenInterpolator<T> {
    pub fn new(values: Vec<T>, h: f64) -> Self {
        assert!(values.len() >= 4);
        Self { values, h }
    }

    pub fn eval(&self, r: f64) -> T {
        let x = r.abs() / self.h;
        let n = self.values.len();
        if x > (n - 1) as f64 {
            return T::default();
        }
        // nodes i0-1 .. i0+2 around x, shifted inward at the outer end
        let mut i0 = x.floor() as isize;
        if i0 + 2 > n as isize - 1 {
            i0 = n as isize - 3;
        }
        let p = x - i0 as f64;
        let fm1 = at(&self.values, i0 - 1, Parity::Even);
        let f0 = at(&self.values, i0, Parity::Even);
        let f1 = at(&self.values, i0 + 1, Parity::Even);
        let f2 = at(&self.values, i0 + 2, Parity::Even);
        let wm1 = -p * (p - 1.0) * (p - 2.0) / 6.0;
        let w0 = (p + 1.0) * (p - 1.0) * (p - 2.0) / 2.0;
        let w1 = -(p + 1.0) * p * (p - 2.0) / 2.0;
        let w2 = (p + 1.0) * p * (p - 1.0) / 6.0;
        fm1 * wm1 + f0 * w0 + f1 * w1 + f2 * w2
    }
}

/// `ψ = χ / s` on the grid for a reduced radial wavefunction `χ` (odd, `χ_0 = 0`).
///
/// The origin value is the fourth-order slope `χ'(0) = (8χ_1 − χ_2)/(6h)`.
pub fn reduced_to_radial<T: Scalar>(chi: &[T], h: f64) -> Vec<T> {
    let mut psi: Vec<T> = chi
        .iter()
        .enumerate()
        .map(|(j, &c)| if j == 0 { T::default() } else { c * (1.0 / (j as f64 * h)) })
        .collect();
    psi[0] = (chi[1] * 8.0 - chi[2]) * (1.0 / (6.0 * h));
    psi
}
