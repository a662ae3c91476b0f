//! Special functions: the Faddeeva function, small-argument Bessel
//! functions and Gauss-Hermite nodes.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

const WEIDEMAN_TERMS: usize = 40;

struct Weideman {
    l: f64,
    coeffs: [f64; WEIDEMAN_TERMS],
}

fn weideman() -> &'static Weideman {
    static TABLE: OnceLock<Weideman> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = WEIDEMAN_TERMS;
        let m = 2 * n;
        let l = (n as f64 / 2f64.sqrt()).sqrt();
        let f: Vec<(f64, f64)> = (-(m as i64) + 1..m as i64)
            .map(|k| {
                let theta = k as f64 * PI / m as f64;
                let t = l * (theta / 2.0).tan();
                (k as f64, (-t * t).exp() * (l * l + t * t))
            })
            .collect();
        let mut coeffs = [0.0; WEIDEMAN_TERMS];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let order = (j + 1) as f64;
            let sum: f64 = f.iter().map(|&(k, fk)| fk * (PI * order * k / m as f64).cos()).sum();
            *c = sum / (2 * m) as f64;
        }
        Weideman { l, coeffs }
    })
}

/// Faddeeva function `w(z) = exp(-z²) erfc(-iz)` for `Im z >= 0`, by
/// Weideman's rational expansion. Relative accuracy is around 1e-13 in the
/// closed upper half-plane.
pub fn faddeeva_upper(z: Complex64) -> Complex64 {
    debug_assert!(z.im >= -1e-12, "faddeeva_upper needs Im z >= 0, got {z}");
    let w = weideman();
    let i = Complex64::i();
    let denom = w.l - i * z;
    let zz = (w.l + i * z) / denom;
    // Horner, highest order first
    let mut p = Complex64::new(0.0, 0.0);
    for &c in w.coeffs.iter().rev() {
        p = p * zz + c;
    }
    2.0 * p / (denom * denom) + 1.0 / (PI.sqrt() * denom)
}

/// Faddeeva function on the whole complex plane.
pub fn faddeeva(z: Complex64) -> Complex64 {
    if z.im >= 0.0 {
        faddeeva_upper(z)
    } else {
        2.0 * (-z * z).exp() - faddeeva_upper(-z)
    }
}

/// Gaussian average `E[1/(u - z0)]` with `u ~ N(0, 1/2)` (weight
/// `exp(-u²)/√π`), for any `z0` off the real axis.
pub fn gaussian_mean_inverse(z0: Complex64) -> Complex64 {
    let i = Complex64::i();
    if z0.im >= 0.0 {
        i * PI.sqrt() * faddeeva_upper(z0)
    } else {
        (i * PI.sqrt() * faddeeva_upper(z0.conj())).conj()
    }
}

fn bessel_series(order: u32, x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = (0..order).fold(1.0, |acc, k| acc * half / (k + 1) as f64);
    let mut sum = term;
    for m in 1..60 {
        term *= -half * half / (m as f64 * (m + order) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Bessel J0 by power series; accurate for |x| below about 10.
pub fn bessel_j0(x: f64) -> f64 {
    bessel_series(0, x)
}

/// Bessel J1 by power series; accurate for |x| below about 10.
pub fn bessel_j1(x: f64) -> f64 {
    bessel_series(1, x)
}

/// Gauss-Hermite nodes and weights for the weight `exp(-x²)`, by the
/// Golub-Welsch eigenvalue method. Nodes are returned in ascending order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1e-300)
    }

    #[test]
    fn faddeeva_reference_values() {
        // Reference values from scipy.special.wofz.
        let cases = [
            ((0.0, 0.0), (1.0, 0.0)),
            ((0.0, 1.0), (0.427_583_576_155_807, 0.0)),
            ((1.0, 1.0), (0.304_744_205_256_912_54, 0.208_218_938_202_831_6)),
            ((3.0, 0.01), (0.000_908_830_706_741_581_5, 0.201_146_462_540_196_64)),
            ((-2.5, 0.3), (0.038_226_506_260_685_265, -0.243_042_008_530_977_93)),
            ((10.0, 0.001), (5.728_717_502_841_752e-6, 0.056_705_393_651_106_197)),
        ];
        for ((zr, zi), (wr, wi)) in cases {
            let got = faddeeva(Complex64::new(zr, zi));
            assert!(close(got, Complex64::new(wr, wi), 1e-10), "w({zr}+{zi}i) = {got}");
        }
    }

    #[test]
    fn faddeeva_lower_half_plane_identity() {
        let z = Complex64::new(0.7, -0.4);
        let w = faddeeva(z);
        let back = 2.0 * (-z * z).exp() - faddeeva(-z);
        assert!(close(w, back, 1e-12));
    }

    #[test]
    fn gaussian_mean_matches_quadrature() {
        for z0 in [Complex64::new(0.3, 0.05), Complex64::new(-1.2, -0.02)] {
            let h = 1e-4;
            let mut acc = Complex64::new(0.0, 0.0);
            let mut u: f64 = -9.0;
            while u <= 9.0 {
                acc += (-u * u).exp() / (u - z0) * h;
                u += h;
            }
            acc /= PI.sqrt();
            assert!(close(gaussian_mean_inverse(z0), acc, 1e-8), "{z0}");
        }
    }

    #[test]
    fn bessel_values() {
        // Reference values from scipy.special.j0 / j1.
        assert!((bessel_j0(0.3) - 0.977_626_246_538_296).abs() < 1e-14);
        assert!((bessel_j1(0.3) - 0.148_318_816_273_104).abs() < 1e-14);
        assert_eq!(bessel_j1(0.0), 0.0);
        assert_eq!(bessel_j0(0.0), 1.0);
    }

    #[test]
    fn gauss_hermite_moments() {
        for n in [8, 20, 200] {
            let (x, w) = gauss_hermite(n);
            let m0: f64 = w.iter().sum();
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            assert!((m0 - PI.sqrt()).abs() < 1e-12, "n={n} m0={m0}");
            assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12, "n={n}");
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }
}
