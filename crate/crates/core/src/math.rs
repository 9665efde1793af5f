//! Small numeric helpers: combinatorics and a complex Hermitian
//! eigensolver used for branch condensation.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)] // used in the no_std build
use num_traits::Float;

/// Binomial coefficient as f64; exact for the photon numbers used here.
pub fn binom(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * f64::from(n - i) / f64::from(i + 1);
    }
    acc
}

/// n! as f64; exact for n <= 20.
pub fn factorial(n: u32) -> f64 {
    let mut acc = 1.0f64;
    for i in 2..=n {
        acc *= f64::from(i);
    }
    acc
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. `a` is row-major `dim x dim`; returns eigenvalues and the
/// unitary of column eigenvectors (row-major), both in no particular
/// eigenvalue order. Deterministic sweep order.
pub fn hermitian_eigen(dim: usize, a: &[Complex64]) -> (Vec<f64>, Vec<Complex64>) {
    assert_eq!(a.len(), dim * dim);
    let mut m = a.to_vec();
    let mut v = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        v[i * dim + i] = Complex64::new(1.0, 0.0);
    }
    if dim <= 1 {
        let vals = if dim == 1 { vec![m[0].re] } else { Vec::new() };
        return (vals, v);
    }

    let scale: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
    let tol = 1e-30 * scale * scale;

    for _sweep in 0..64 {
        let off: f64 = (0..dim)
            .flat_map(|p| ((p + 1)..dim).map(move |q| (p, q)))
            .map(|(p, q)| m[p * dim + q].norm_sqr())
            .sum();
        if off <= tol {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = m[p * dim + q];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let phase = apq / r;
                let app = m[p * dim + p].re;
                let aqq = m[q * dim + q].re;
                // tan(2 theta) = 2 r / (app - aqq), Rutishauser form.
                let tau = (app - aqq) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns: col_p' = c*col_p + s*conj(phase)... applied as
                // A <- R^dag A R with R_pp = c, R_pq = -s*phase,
                // R_qp = s*conj(phase), R_qq = c.
                let rpq = -s * phase;
                let rqp = s * phase.conj();
                // A <- A R (update columns p, q).
                for row in 0..dim {
                    let xp = m[row * dim + p];
                    let xq = m[row * dim + q];
                    m[row * dim + p] = xp * c + xq * rqp;
                    m[row * dim + q] = xp * rpq + xq * c;
                }
                // A <- R^dag A (update rows p, q).
                for col in 0..dim {
                    let xp = m[p * dim + col];
                    let xq = m[q * dim + col];
                    m[p * dim + col] = xp * c + xq * rqp.conj();
                    m[q * dim + col] = xp * rpq.conj() + xq * c;
                }
                // V <- V R.
                for row in 0..dim {
                    let xp = v[row * dim + p];
                    let xq = v[row * dim + q];
                    v[row * dim + p] = xp * c + xq * rqp;
                    v[row * dim + q] = xp * rpq + xq * c;
                }
                // Clamp the rotated pair to exact Hermitian form.
                m[p * dim + q] = Complex64::new(0.0, 0.0);
                m[q * dim + p] = Complex64::new(0.0, 0.0);
            }
        }
    }

    let vals = (0..dim).map(|i| m[i * dim + i].re).collect();
    (vals, v)
}
