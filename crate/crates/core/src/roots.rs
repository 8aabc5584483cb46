//! Polynomial roots on the Riemann sphere: companion-matrix eigenvalues and Aberth–Ehrlich iteration.
//!
//! Coefficients are given in ascending order `a_0, ..., a_k`. Exact zeros at the top are roots at
//! infinity (degree deficit), exact zeros at the bottom are roots at the origin.

use crate::error::{Error, Result};
use crate::linalg::{c64, C64};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RootSolver {
    /// balanced companion matrix, shifted Hessenberg QR, one Newton step per root
    #[default]
    Companion,
    /// simultaneous Aberth–Ehrlich iteration from Newton-polygon starting points
    Aberth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialRoots {
    pub finite: Vec<C64>,
    pub at_infinity: usize,
}

/// Residual threshold relative to `Σ |a_j| |z|^j`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

struct Trimmed<'a> {
    coeffs: &'a [C64],
    zeros_at_origin: usize,
    at_infinity: usize,
}

fn trim(coeffs: &[C64]) -> Result<Trimmed<'_>> {
    let top = coeffs.iter().rposition(|a| *a != c64(0.0, 0.0)).ok_or_else(|| Error::invalid("zero polynomial has no isolated roots"))?;
    let bottom = coeffs.iter().position(|a| *a != c64(0.0, 0.0)).unwrap();
    Ok(Trimmed { coeffs: &coeffs[bottom..=top], zeros_at_origin: bottom, at_infinity: coeffs.len() - 1 - top })
}

/// `p(z)`, `p'(z)` and `Σ|a_j||z|^j` by Horner's rule.
fn horner(a: &[C64], z: C64) -> (C64, C64, f64) {
    let mut p = c64(0.0, 0.0);
    let mut dp = c64(0.0, 0.0);
    let mut scale = 0.0;
    let r = z.norm();
    for coeff in a.iter().rev() {
        dp = dp * z + p;
        p = p * z + coeff;
        scale = scale * r + coeff.norm();
    }
    (p, dp, scale)
}

/// `Σ a_j w^{d-j}` and its derivative in `w`, with the matching scale.
fn horner_reversed(a: &[C64], w: C64) -> (C64, C64, f64) {
    let mut q = c64(0.0, 0.0);
    let mut dq = c64(0.0, 0.0);
    let mut scale = 0.0;
    let r = w.norm();
    for coeff in a.iter() {
        dq = dq * w + q;
        q = q * w + coeff;
        scale = scale * r + coeff.norm();
    }
    (q, dq, scale)
}

/// Newton correction `p/p'` and relative residual, evaluated in the chart where `z` is small.
fn newton_ratio(a: &[C64], z: C64) -> (C64, f64) {
    let d = (a.len() - 1) as f64;
    if z.norm() <= 1.0 {
        let (p, dp, scale) = horner(a, z);
        (p / dp, p.norm() / scale)
    } else {
        let w = z.inv();
        let (q, dq, scale) = horner_reversed(a, w);
        (z * q / (q * d - w * dq), q.norm() / scale)
    }
}

/// `|p(z)| / Σ|a_j||z|^j`, computed in the better conditioned chart.
pub fn relative_residual(coeffs: &[C64], z: C64) -> f64 {
    newton_ratio(coeffs, z).1
}

fn polish_and_check(a: &[C64], roots: &mut [C64]) -> Result<()> {
    for z in roots.iter_mut() {
        let (ratio, before) = newton_ratio(a, *z);
        let candidate = *z - ratio;
        if candidate.re.is_finite() && candidate.im.is_finite() {
            let (_, after) = newton_ratio(a, candidate);
            if after <= before {
                *z = candidate;
            }
        }
        let residual = newton_ratio(a, *z).1;
        if !(residual < RESIDUAL_TOLERANCE) {
            return Err(Error::RootResidual { root: format!("{z}"), residual });
        }
    }
    Ok(())
}

/// Roots of `Σ a_j z^j` with the chosen solver.
pub fn polynomial_roots(coeffs: &[C64], solver: RootSolver) -> Result<PolynomialRoots> {
    let t = trim(coeffs)?;
    let mut finite = vec![c64(0.0, 0.0); t.zeros_at_origin];
    if t.coeffs.len() > 1 {
        let mut found = match solver {
            RootSolver::Companion => companion_eigenvalues(t.coeffs)?,
            RootSolver::Aberth => aberth(t.coeffs)?,
        };
        polish_and_check(t.coeffs, &mut found)?;
        finite.extend(found);
    }
    Ok(PolynomialRoots { finite, at_infinity: t.at_infinity })
}

fn balance(h: &mut [Vec<C64>]) {
    let n = h.len();
    let radix = 2.0;
    let sqrdx = radix * radix;
    let norm1 = |z: C64| z.re.abs() + z.im.abs();
    for _ in 0..200 {
        let mut done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += norm1(h[j][i]);
                    r += norm1(h[i][j]);
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    h[i][j] *= inv;
                }
                for row in h.iter_mut() {
                    row[i] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Givens rotation `[c s; -conj(s) c]` mapping `(x, y)` to `(r, 0)`.
fn givens(x: C64, y: C64) -> (f64, C64) {
    let ax = x.norm();
    let nu = ax.hypot(y.norm());
    if nu == 0.0 {
        return (1.0, c64(0.0, 0.0));
    }
    if ax == 0.0 {
        return (0.0, c64(1.0, 0.0));
    }
    (ax / nu, (x / ax) * y.conj() / nu)
}

/// Eigenvalues of an upper Hessenberg matrix by single-shift QR with deflation.
fn hessenberg_eigenvalues(h: &mut [Vec<C64>]) -> Result<Vec<C64>> {
    let n = h.len();
    let mut eig = vec![c64(0.0, 0.0); n];
    let mut hi = n - 1;
    let mut iterations = 0usize;
    let mut since_deflation = 0usize;
    let limit = 60 * n.max(10);
    loop {
        if hi == 0 {
            eig[0] = h[0][0];
            break;
        }
        let mut lo = hi;
        while lo > 0 {
            let sub = h[lo][lo - 1].norm();
            if sub <= f64::EPSILON * (h[lo - 1][lo - 1].norm() + h[lo][lo].norm()) || sub < f64::MIN_POSITIVE {
                h[lo][lo - 1] = c64(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = h[hi][hi];
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        iterations += 1;
        since_deflation += 1;
        if iterations > limit {
            return Err(Error::RootConvergence { iterations });
        }
        let shift = if since_deflation % 11 == 10 {
            // exceptional shift
            h[hi][hi] + c64(h[hi][hi - 1].norm() * 0.75, h[hi][hi - 1].norm() * 0.4)
        } else {
            let a = h[hi - 1][hi - 1];
            let b = h[hi - 1][hi];
            let c = h[hi][hi - 1];
            let d = h[hi][hi];
            let half_tr = (a + d) * 0.5;
            let disc = ((a - d) * 0.5 * ((a - d) * 0.5) + b * c).sqrt();
            let (l1, l2) = (half_tr + disc, half_tr - disc);
            if (l1 - d).norm() < (l2 - d).norm() { l1 } else { l2 }
        };
        for i in lo..=hi {
            h[i][i] -= shift;
        }
        let mut rotations = Vec::with_capacity(hi - lo);
        for i in lo..hi {
            let (c, s) = givens(h[i][i], h[i + 1][i]);
            for j in i..=hi {
                let x = h[i][j];
                let y = h[i + 1][j];
                h[i][j] = x * c + s * y;
                h[i + 1][j] = -s.conj() * x + y * c;
            }
            rotations.push((c, s));
        }
        for (offset, &(c, s)) in rotations.iter().enumerate() {
            let i = lo + offset;
            for r in lo..=(i + 1).min(hi) {
                let x = h[r][i];
                let y = h[r][i + 1];
                h[r][i] = x * c + y * s.conj();
                h[r][i + 1] = -x * s + y * c;
            }
        }
        for i in lo..=hi {
            h[i][i] += shift;
        }
    }
    Ok(eig)
}

fn companion_eigenvalues(a: &[C64]) -> Result<Vec<C64>> {
    let d = a.len() - 1;
    let lead = a[d];
    let mut h = vec![vec![c64(0.0, 0.0); d]; d];
    for j in 0..d {
        h[0][j] = -a[d - 1 - j] / lead;
    }
    for i in 1..d {
        h[i][i - 1] = c64(1.0, 0.0);
    }
    balance(&mut h);
    hessenberg_eigenvalues(&mut h)
}

/// Starting points on circles whose radii come from the upper convex hull of `(j, log|a_j|)`.
fn newton_polygon_guesses(a: &[C64]) -> Vec<C64> {
    let pts: Vec<(usize, f64)> = a
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(j, c)| (j, c.norm().ln()))
        .collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (x1, y1) = hull[hull.len() - 2];
            let (x2, y2) = hull[hull.len() - 1];
            let cross = (x2 as f64 - x1 as f64) * (p.1 - y1) - (y2 - y1) * (p.0 as f64 - x1 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut guesses = Vec::with_capacity(a.len() - 1);
    for (seg, w) in hull.windows(2).enumerate() {
        let (i, yi) = w[0];
        let (j, yj) = w[1];
        let m = j - i;
        let radius = ((yi - yj) / m as f64).exp();
        let offset = 0.7 + 1.3 * seg as f64;
        for l in 0..m {
            let angle = 2.0 * std::f64::consts::PI * l as f64 / m as f64 + offset;
            guesses.push(C64::from_polar(radius, angle));
        }
    }
    guesses
}

fn aberth(a: &[C64]) -> Result<Vec<C64>> {
    let d = a.len() - 1;
    let mut z = newton_polygon_guesses(a);
    debug_assert_eq!(z.len(), d);
    let mut done = vec![false; d];
    let stop = 8.0 * d as f64 * f64::EPSILON;
    let max_iterations = 200;
    for _ in 0..max_iterations {
        let mut active = 0;
        for i in 0..d {
            if done[i] {
                continue;
            }
            active += 1;
            let (ratio, residual) = newton_ratio(a, z[i]);
            if residual <= stop {
                done[i] = true;
                continue;
            }
            let mut s = c64(0.0, 0.0);
            for (j, zj) in z.iter().enumerate() {
                if j != i {
                    s += (z[i] - zj).inv();
                }
            }
            let step = ratio / (c64(1.0, 0.0) - ratio * s);
            if !(step.re.is_finite() && step.im.is_finite()) {
                continue;
            }
            z[i] -= step;
            if step.norm() <= 4.0 * f64::EPSILON * z[i].norm() {
                done[i] = true;
            }
        }
        if active == 0 {
            return Ok(z);
        }
    }
    if done.iter().all(|d| *d) {
        Ok(z)
    } else {
        Err(Error::RootConvergence { iterations: max_iterations })
    }
}
