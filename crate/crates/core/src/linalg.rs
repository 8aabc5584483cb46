//! Small dense complex linear algebra: Haar unitaries, Hermitian functions, one-sided Jacobi SVD.

use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type C64 = Complex<f64>;

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Largest absolute entry of `m - m^†`.
pub fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `V diag(f(w)) V^†` for a Hermitian matrix with eigenpairs `(w, V)`.
pub fn hermitian_function(values: &[f64], vectors: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &w) in values.iter().enumerate() {
        let fw = f(w);
        for i in 0..n {
            scaled[(i, j)] *= fw;
        }
    }
    &scaled * vectors.adjoint()
}

/// Standard complex Gaussian with `E|z|^2 = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64(s * re, s * im)
}

/// Haar-distributed unitary matrix: QR of a complex Ginibre matrix with phase-corrected `R` diagonal.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let z = DMatrix::from_fn(n, n, |_, _| complex_gaussian(rng));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 { d / norm } else { c64(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Orthonormal frame of the hyperplane `Σ x_i = 0` in `R^n` (Helmert vectors as columns).
pub fn helmert_frame(n: usize) -> DMatrix<f64> {
    let mut frame = DMatrix::zeros(n, n.saturating_sub(1));
    for m in 1..n {
        let norm = ((m * (m + 1)) as f64).sqrt();
        for i in 0..m {
            frame[(i, m - 1)] = 1.0 / norm;
        }
        frame[(m, m - 1)] = -(m as f64) / norm;
    }
    frame
}

/// Random traceless Hermitian matrix whose coordinates in an orthonormal frame
/// (Frobenius inner product) are i.i.d. `N(0, variance)`.
pub fn traceless_hermitian_gaussian<R: Rng + ?Sized>(n: usize, variance: f64, rng: &mut R) -> DMatrix<C64> {
    let sd = variance.sqrt();
    let frame = helmert_frame(n);
    let mut w = DMatrix::from_element(n, n, c64(0.0, 0.0));
    for m in 0..n.saturating_sub(1) {
        let g: f64 = StandardNormal.sample(rng);
        for i in 0..n {
            w[(i, i)].re += sd * g * frame[(i, m)];
        }
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            let z = c64(sd * s * a, sd * s * b);
            w[(i, j)] = z;
            w[(j, i)] = z.conj();
        }
    }
    w
}

/// Singular value decomposition `G = U Σ V^†` by one-sided (Hestenes) Jacobi rotations.
///
/// Singular values come back sorted descending. Column-scaled inputs keep high relative accuracy.
pub struct JacobiSvd {
    pub singular_values: Vec<f64>,
    pub v: DMatrix<C64>,
}

pub fn jacobi_svd(g: &DMatrix<C64>) -> Result<JacobiSvd> {
    let n = g.ncols();
    let rows = g.nrows();
    let mut a = g.clone();
    let mut v = DMatrix::<C64>::identity(n, n);
    let tol = 4.0 * f64::EPSILON;
    let mut converged = false;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = c64(0.0, 0.0);
                for i in 0..rows {
                    alpha += a[(i, p)].norm_sqr();
                    beta += a[(i, q)].norm_sqr();
                    gamma += a[(i, p)].conj() * a[(i, q)];
                }
                let gnorm = gamma.norm();
                if gnorm <= tol * (alpha * beta).sqrt() || gnorm == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = gamma / gnorm;
                let zeta = (beta - alpha) / (2.0 * gnorm);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let back = phase.conj();
                for i in 0..rows {
                    let xp = a[(i, p)];
                    let xq = a[(i, q)] * back;
                    a[(i, p)] = xp * c - xq * s;
                    a[(i, q)] = (xp * s + xq * c) * phase;
                }
                for i in 0..n {
                    let xp = v[(i, p)];
                    let xq = v[(i, q)] * back;
                    v[(i, p)] = xp * c - xq * s;
                    v[(i, q)] = (xp * s + xq * c) * phase;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Step("one-sided Jacobi SVD did not converge".into()));
    }
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..rows).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    Ok(JacobiSvd {
        singular_values: order.iter().map(|&j| norms[j]).collect(),
        v: DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]),
    })
}

/// Rotates the phase of each column so its first non-negligible entry is real and positive.
pub fn fix_column_phases(m: &mut DMatrix<C64>) {
    let (rows, cols) = m.shape();
    for j in 0..cols {
        let scale = (0..rows).map(|i| m[(i, j)].norm()).fold(0.0, f64::max);
        let pivot = (0..rows).map(|i| m[(i, j)]).find(|z| z.norm() > 1e-8 * scale);
        if let Some(z) = pivot {
            let phase = z.conj() / z.norm();
            for i in 0..rows {
                m[(i, j)] *= phase;
            }
        }
    }
}

pub fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - DMatrix::<C64>::identity(n, n)))
}

pub fn dvector(values: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(values)
}
