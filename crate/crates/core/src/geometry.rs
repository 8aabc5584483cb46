//! The projective line with the round Kähler form, its line bundle powers, and Bergman bases.
//!
//! The background form is `ω₀ = i dz∧dz̄ / (1+|z|²)²`, of total area `2π`. Through stereographic
//! projection `p = (2 Re z, 2 Im z, 1 - |z|²) / (1+|z|²)` it equals half the unit-sphere area element.

use crate::error::{Error, Result};
use crate::linalg::{c64, C64};
use crate::quadrature::{sphere_integral, Tolerance};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Total `ω₀`-area of the sphere.
pub const TOTAL_AREA: f64 = 2.0 * PI;

/// Metric weight `λ(z)` at the origin used by [`scaled_pair`].
pub const SCALING_WEIGHT_AT_ORIGIN: f64 = 1.0;

/// `ℂP¹` with the line bundle `O(k)`, `N = k + 1` sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub k: usize,
}

impl ManifoldModel {
    pub fn new(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::invalid("line bundle power k must be at least 1"));
        }
        Ok(ManifoldModel { k })
    }

    pub fn dimension(&self) -> usize {
        self.k + 1
    }

    /// Round metric coefficient of `i dζ∧dζ̄` in either chart.
    pub fn round_density(zeta: C64) -> f64 {
        let s = 1.0 + zeta.norm_sqr();
        1.0 / (s * s)
    }
}

/// Orthonormal basis of sections of `O(k)`; rejects `k = 0`.
pub fn build_basis(k: usize) -> Result<SectionBasis> {
    Ok(SectionBasis::orthonormal(ManifoldModel::new(k)?))
}

/// A point of `ℂP¹`: a finite affine coordinate or the point at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub z: C64,
    pub at_infinity: bool,
}

/// Which affine chart a local computation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// coordinate `z`
    Origin,
    /// coordinate `w = 1/z`
    Infinity,
}

impl ChartPoint {
    pub fn finite(z: C64) -> Self {
        ChartPoint { z, at_infinity: false }
    }

    pub fn new(re: f64, im: f64) -> Self {
        Self::finite(c64(re, im))
    }

    pub fn infinity() -> Self {
        ChartPoint { z: c64(0.0, 0.0), at_infinity: true }
    }

    /// The better conditioned chart and the local coordinate in it.
    pub fn local(&self) -> (Chart, C64) {
        if self.at_infinity {
            (Chart::Infinity, c64(0.0, 0.0))
        } else if self.z.norm() <= 1.0 {
            (Chart::Origin, self.z)
        } else {
            (Chart::Infinity, self.z.inv())
        }
    }

    /// Unit vector in `R³` (stereographic, `z = 0` at the north pole).
    pub fn to_sphere(&self) -> [f64; 3] {
        if self.at_infinity {
            return [0.0, 0.0, -1.0];
        }
        let r2 = self.z.norm_sqr();
        if !r2.is_finite() {
            return [0.0, 0.0, -1.0];
        }
        let d = 1.0 + r2;
        [2.0 * self.z.re / d, 2.0 * self.z.im / d, (1.0 - r2) / d]
    }

    /// Point with polar coordinate `x = cos θ` and longitude `φ`.
    pub fn from_polar(x: f64, phi: f64) -> Self {
        if x <= -1.0 {
            return Self::infinity();
        }
        let r = ((1.0 - x) / (1.0 + x)).max(0.0).sqrt();
        Self::finite(C64::from_polar(r, phi))
    }

    pub fn from_sphere(p: [f64; 3]) -> Self {
        let x = p[2].clamp(-1.0, 1.0);
        Self::from_polar(x, p[1].atan2(p[0]))
    }
}

/// Two points, the argument of two-point quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub first: ChartPoint,
    pub second: ChartPoint,
}

impl PointPair {
    pub fn new(first: ChartPoint, second: ChartPoint) -> Self {
        PointPair { first, second }
    }
}

/// A basis of holomorphic sections of `O(k)`: `s_i(z) = Σ_j coeffs[(i, j)] z^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionBasis {
    pub k: usize,
    pub coeffs: DMatrix<C64>,
}

#[derive(Serialize, Deserialize)]
struct BasisRecord {
    k: usize,
    coeffs: Vec<[f64; 2]>,
}

/// `(k+1) binom(k, j)`, the squared normalization of `z^j` for the round form.
pub fn monomial_weight(k: usize, j: usize) -> f64 {
    let mut exact: Option<u128> = Some(k as u128 + 1);
    for i in 1..=j as u128 {
        exact = exact.and_then(|b| b.checked_mul(k as u128 - j as u128 + i)).map(|b| b / i);
    }
    match exact {
        Some(b) => b as f64,
        None => {
            let lf = crate::special::log_factorials(k + 1);
            (lf[k + 1] - lf[j] - lf[k - j]).exp()
        }
    }
}

impl SectionBasis {
    /// Closed-form orthonormal basis `s_j = sqrt((k+1) binom(k,j)) z^j`.
    pub fn orthonormal(model: ManifoldModel) -> Self {
        let k = model.k;
        let coeffs = DMatrix::from_fn(k + 1, k + 1, |i, j| {
            if i == j {
                c64(monomial_weight(k, j).sqrt(), 0.0)
            } else {
                c64(0.0, 0.0)
            }
        });
        SectionBasis { k, coeffs }
    }

    /// Orthonormal basis from monomials by numerical Gram–Schmidt against the `L²(h^k ω₀ / 2π)` product.
    pub fn gram_schmidt(model: ManifoldModel, tol: Tolerance) -> Result<Self> {
        let k = model.k;
        let n = k + 1;
        let mut gram = DMatrix::from_element(n, n, c64(0.0, 0.0));
        for a in 0..n {
            gram[(a, a)] = monomial_inner_product(k, a, a, tol)?;
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let scale = (gram[(a, a)].re * gram[(b, b)].re).sqrt();
                let local = Tolerance { abs: tol.rel * scale, ..tol };
                let g = monomial_inner_product(k, a, b, local)?;
                gram[(a, b)] = g;
                gram[(b, a)] = g.conj();
            }
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Step("Gram matrix of monomials is not positive definite".into()))?;
        let l_inv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::Step("singular Cholesky factor".into()))?;
        Ok(SectionBasis { k, coeffs: l_inv.conjugate() })
    }

    pub fn dimension(&self) -> usize {
        self.k + 1
    }

    /// Local frame values of all sections and their chart derivatives.
    ///
    /// In the chart at infinity the section `z^j` reads `w^{k-j}`.
    pub fn evaluate(&self, chart: Chart, zeta: C64) -> (DVector<C64>, DVector<C64>) {
        let n = self.k + 1;
        let mut m = DVector::from_element(n, c64(0.0, 0.0));
        let mut dm = DVector::from_element(n, c64(0.0, 0.0));
        let mut powers = vec![c64(1.0, 0.0); n];
        for e in 1..n {
            powers[e] = powers[e - 1] * zeta;
        }
        for j in 0..n {
            let e = match chart {
                Chart::Origin => j,
                Chart::Infinity => self.k - j,
            };
            m[j] = powers[e];
            if e > 0 {
                dm[j] = powers[e - 1] * (e as f64);
            }
        }
        (&self.coeffs * m, &self.coeffs * dm)
    }

    /// Section values at a point, in its better conditioned chart.
    pub fn values_at(&self, p: &ChartPoint) -> DVector<C64> {
        let (chart, zeta) = p.local();
        self.evaluate(chart, zeta).0
    }

    /// Unit vector in the direction of the section values at `p`; independent of the chart up to a phase.
    pub fn normalized_values(&self, p: &ChartPoint) -> DVector<C64> {
        let v = self.values_at(p);
        let norm = v.norm();
        v / c64(norm, 0.0)
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.k + 1;
        let mut coeffs = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.coeffs[(i, j)];
                coeffs.push([z.re, z.im]);
            }
        }
        Ok(serde_json::to_string_pretty(&BasisRecord { k: self.k, coeffs })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: BasisRecord = serde_json::from_str(text)?;
        let n = rec.k + 1;
        if rec.k < 1 || rec.coeffs.len() != n * n {
            return Err(Error::invalid(format!(
                "basis record for k={} needs {} coefficients, found {}",
                rec.k,
                n * n,
                rec.coeffs.len()
            )));
        }
        let coeffs = DMatrix::from_fn(n, n, |i, j| {
            let [re, im] = rec.coeffs[i * n + j];
            c64(re, im)
        });
        Ok(SectionBasis { k: rec.k, coeffs })
    }
}

/// `(1/2π) ∫ conj(z^a) z^b (1+|z|²)^{-k} ω₀`, computed on the sphere.
fn monomial_inner_product(k: usize, a: usize, b: usize, tol: Tolerance) -> Result<C64> {
    let m = 0.5 * (a + b) as f64;
    let freq = b as f64 - a as f64;
    let radial = |x: f64| ((1.0 - x) / 2.0).max(0.0).powf(m) * ((1.0 + x) / 2.0).powf(k as f64 - m);
    let re = sphere_integral(|x, phi| radial(x) * (freq * phi).cos(), &[], &[], tol)?;
    let im = if a == b {
        0.0
    } else {
        sphere_integral(|x, phi| radial(x) * (freq * phi).sin(), &[], &[], tol)?.value
    };
    // ω₀ is half the sphere area element
    Ok(c64(re.value, im) * (0.5 / TOTAL_AREA))
}

/// Bergman kernel `Σ_j s_j(z₁) conj(s_j(z₂))` in the affine chart `z`.
pub fn bergman_kernel(basis: &SectionBasis, pair: &PointPair) -> Result<C64> {
    if pair.first.at_infinity || pair.second.at_infinity {
        return Err(Error::OutOfChart("the Bergman kernel is evaluated in the chart z".into()));
    }
    let (v1, _) = basis.evaluate(Chart::Origin, pair.first.z);
    let (v2, _) = basis.evaluate(Chart::Origin, pair.second.z);
    Ok(v2.dotc(&v1))
}

/// Berezin kernel `ρ = |B(z₁,z₂)|² / (B(z₁,z₁) B(z₂,z₂))`, chart-free and in `[0, 1]`.
pub fn berezin_rho(basis: &SectionBasis, pair: &PointPair) -> f64 {
    let v1 = basis.normalized_values(&pair.first);
    let v2 = basis.normalized_values(&pair.second);
    v1.dotc(&v2).norm_sqr().clamp(0.0, 1.0)
}

/// Diastasis `D = -(1/k) log ρ`.
pub fn diastasis(basis: &SectionBasis, pair: &PointPair) -> Result<f64> {
    let rho = berezin_rho(basis, pair);
    if rho == 0.0 {
        return Err(Error::InfiniteDiastasis);
    }
    Ok(-rho.ln() / basis.k as f64)
}

/// The pair `(z, z + u / sqrt(k λ(z)))` at scale `1/sqrt(k)`, with `λ(z) = (1+|z|²)^{-2}`.
///
/// `|u|` is limited to `bound * sqrt(log k)`.
pub fn scaled_pair(z: ChartPoint, u: C64, k: usize, bound: f64) -> Result<PointPair> {
    if z.at_infinity {
        return Err(Error::OutOfChart("scaled pairs are built in the chart z".into()));
    }
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let limit = bound * (k as f64).ln().sqrt();
    if u.norm() > limit {
        return Err(Error::invalid(format!("|u| = {} exceeds the bound {limit}", u.norm())));
    }
    let lambda = ManifoldModel::round_density(z.z) * SCALING_WEIGHT_AT_ORIGIN;
    let step = u / (k as f64 * lambda).sqrt();
    Ok(PointPair::new(z, ChartPoint::finite(z.z + step)))
}

/// Image of a point under the rotation `z ↦ (a z + b) / (-conj(b) z + conj(a))`, `|a|² + |b|² = 1`.
pub fn rotate(p: &ChartPoint, a: C64, b: C64) -> ChartPoint {
    let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let (a, b) = (a / norm, b / norm);
    if p.at_infinity {
        // limit z → ∞
        let den = -b.conj();
        return if den.norm() == 0.0 { ChartPoint::infinity() } else { ChartPoint::finite(a / den) };
    }
    let num = a * p.z + b;
    let den = -b.conj() * p.z + a.conj();
    if den.norm() == 0.0 {
        ChartPoint::infinity()
    } else {
        ChartPoint::finite(num / den)
    }
}

/// The pair `(0, r e^{iθ})` whose Berezin value for the round model at power `k` is `rho`.
pub fn pair_at_rho(k: usize, rho: f64, angle: f64) -> Result<PointPair> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::invalid(format!("rho must lie in (0, 1], got {rho}")));
    }
    let r2 = (-rho.ln() / k as f64).exp_m1();
    Ok(PointPair::new(ChartPoint::new(0.0, 0.0), ChartPoint::finite(C64::from_polar(r2.sqrt(), angle))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_rho(pair: &PointPair, k: usize) -> f64 {
        let (a, b) = (pair.first.z, pair.second.z);
        let num = (c64(1.0, 0.0) + a * b.conj()).norm_sqr();
        (num / ((1.0 + a.norm_sqr()) * (1.0 + b.norm_sqr()))).powi(k as i32)
    }

    #[test]
    fn model_rejects_zero_power() {
        assert!(ManifoldModel::new(0).is_err());
        assert_eq!(ManifoldModel::new(3).unwrap().dimension(), 4);
    }

    #[test]
    fn kernel_closed_form() {
        let basis = SectionBasis::orthonormal(ManifoldModel::new(5).unwrap());
        let pair = PointPair::new(ChartPoint::new(0.3, -0.7), ChartPoint::new(-1.2, 0.4));
        let b = bergman_kernel(&basis, &pair).unwrap();
        let expected = (c64(1.0, 0.0) + pair.first.z * pair.second.z.conj()).powu(5) * 6.0;
        assert!((b - expected).norm() < 1e-12 * expected.norm());
    }

    #[test]
    fn diagonal_bergman_k1() {
        let basis = SectionBasis::orthonormal(ManifoldModel::new(1).unwrap());
        let p = ChartPoint::new(0.0, 0.0);
        assert!((bergman_kernel(&basis, &PointPair::new(p, p)).unwrap().re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rho_examples() {
        let basis = SectionBasis::orthonormal(ManifoldModel::new(4).unwrap());
        let o = ChartPoint::new(0.0, 0.0);
        assert_eq!(berezin_rho(&basis, &PointPair::new(o, o)), 1.0);
        assert_eq!(diastasis(&basis, &PointPair::new(o, o)).unwrap(), 0.0);
        let anti = PointPair::new(o, ChartPoint::infinity());
        assert_eq!(berezin_rho(&basis, &anti), 0.0);
        assert!(matches!(diastasis(&basis, &anti), Err(Error::InfiniteDiastasis)));
        let pair = PointPair::new(ChartPoint::new(0.2, 0.1), ChartPoint::new(3.0, -2.0));
        assert!((berezin_rho(&basis, &pair) - round_rho(&pair, 4)).abs() < 1e-14);
    }

    #[test]
    fn scaled_pair_at_origin() {
        let k = 100;
        let pair = scaled_pair(ChartPoint::new(0.0, 0.0), c64(1.0, 0.0), k, 3.0).unwrap();
        let basis = SectionBasis::orthonormal(ManifoldModel::new(k).unwrap());
        let rho = berezin_rho(&basis, &pair);
        assert!((rho - (1.0 + 1.0 / k as f64).powi(-(k as i32))).abs() < 1e-12);
        assert!(scaled_pair(ChartPoint::new(0.0, 0.0), c64(10.0, 0.0), k, 3.0).is_err());
    }

    #[test]
    fn gram_schmidt_matches_closed_form() {
        let model = ManifoldModel::new(6).unwrap();
        let numeric = SectionBasis::gram_schmidt(model, Tolerance::new(1e-15, 1e-12)).unwrap();
        let exact = SectionBasis::orthonormal(model);
        for i in 0..7 {
            for j in 0..7 {
                let d = (numeric.coeffs[(i, j)] - exact.coeffs[(i, j)]).norm();
                assert!(d < 1e-10 * exact.coeffs[(i, i)].norm(), "({i},{j}) {d}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let basis = SectionBasis::orthonormal(ManifoldModel::new(3).unwrap());
        let back = SectionBasis::from_json(&basis.to_json().unwrap()).unwrap();
        assert_eq!(basis, back);
        assert!(SectionBasis::from_json(r#"{"k":2,"coeffs":[[1,0]]}"#).is_err());
    }

    #[test]
    fn rotations_preserve_rho() {
        let basis = SectionBasis::orthonormal(ManifoldModel::new(8).unwrap());
        let pair = pair_at_rho(8, 0.3, 0.4).unwrap();
        assert!((berezin_rho(&basis, &pair) - 0.3).abs() < 1e-13);
        let (a, b) = (c64(0.6, 0.2), c64(-0.3, 0.7));
        let moved = PointPair::new(rotate(&pair.first, a, b), rotate(&pair.second, a, b));
        assert!((berezin_rho(&basis, &moved) - 0.3).abs() < 1e-12);
        let inf = rotate(&ChartPoint::infinity(), a, b);
        let back = PointPair::new(inf, rotate(&ChartPoint::new(0.0, 0.0), a, b));
        assert!(berezin_rho(&basis, &back) < 1e-20);
    }

    #[test]
    fn sphere_round_trip() {
        let p = ChartPoint::new(0.4, -2.5);
        let q = ChartPoint::from_sphere(p.to_sphere());
        assert!((p.z - q.z).norm() < 1e-13);
        assert!(ChartPoint::from_polar(-1.0, 0.3).at_infinity);
    }
}
