//! Positive Hermitian matrices as Bergman metrics: potentials, metric densities, polar coordinates.

use crate::error::{Error, Result};
use crate::geometry::{Chart, ChartPoint, ManifoldModel, SectionBasis};
use crate::linalg::{c64, fix_column_phases, hermitian_deviation, hermitian_eigen, max_abs, unitarity_defect, C64};
use crate::special::log_abs_exp_diff;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use std::io::{Read, Write};

const HERMITIAN_TOL: f64 = 1e-12;
const DET_TOL: f64 = 1e-10;

/// Positive definite Hermitian matrix with unit determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveMatrix {
    entries: DMatrix<C64>,
}

fn check_hermitian_positive(m: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::invalid(format!("matrix must be square and nonempty, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let deviation = hermitian_deviation(m);
    if deviation > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    let sym = (m + m.adjoint()) * c64(0.5, 0.0);
    let (values, vectors) = hermitian_eigen(&sym);
    let min = *values.last().unwrap();
    if min <= 0.0 {
        return Err(Error::NotPositive { min_eigenvalue: min });
    }
    Ok((values, vectors))
}

#[derive(Serialize, Deserialize)]
struct MatrixRecord {
    #[serde(rename = "N")]
    n: usize,
    entries: Vec<[f64; 2]>,
}

impl PositiveMatrix {
    /// Accepts a matrix that already has unit determinant.
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        let (values, _) = check_hermitian_positive(&entries)?;
        let log_det: f64 = values.iter().map(|v| v.ln()).sum();
        if log_det.abs() > DET_TOL {
            return Err(Error::DeterminantNotUnit { det: log_det.exp() });
        }
        Ok(PositiveMatrix { entries: (&entries + entries.adjoint()) * c64(0.5, 0.0) })
    }

    /// Rescales a positive Hermitian matrix to `P / det(P)^{1/N}`.
    pub fn normalized(entries: DMatrix<C64>) -> Result<Self> {
        let (values, _) = check_hermitian_positive(&entries)?;
        let n = values.len() as f64;
        let log_det: f64 = values.iter().map(|v| v.ln()).sum();
        let scale = (-log_det / n).exp();
        Ok(PositiveMatrix { entries: (&entries + entries.adjoint()) * c64(0.5 * scale, 0.0) })
    }

    pub fn identity(n: usize) -> Self {
        PositiveMatrix { entries: DMatrix::identity(n, n) }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| if i == j { c64(values[i], 0.0) } else { c64(0.0, 0.0) }))
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.entries.nrows()
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.dimension();
        let entries = (0..n * n).map(|idx| {
            let z = self.entries[(idx / n, idx % n)];
            [z.re, z.im]
        });
        Ok(serde_json::to_string(&MatrixRecord { n, entries: entries.collect() })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: MatrixRecord = serde_json::from_str(text)?;
        if rec.entries.len() != rec.n * rec.n {
            return Err(Error::invalid(format!("expected {} entries for N={}", rec.n * rec.n, rec.n)));
        }
        let n = rec.n;
        Self::new(DMatrix::from_fn(n, n, |i, j| {
            let [re, im] = rec.entries[i * n + j];
            c64(re, im)
        }))
    }
}

/// `P = U^† e^Λ U` with `λ` descending and summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCoords {
    pub lambda: Vec<f64>,
    pub unitary: DMatrix<C64>,
}

impl PolarCoords {
    /// Validates, and sorts `λ` descending (permuting the rows of `U` along).
    pub fn new(lambda: Vec<f64>, unitary: DMatrix<C64>) -> Result<Self> {
        let n = lambda.len();
        if n == 0 || unitary.shape() != (n, n) {
            return Err(Error::invalid("polar coordinates need an N-vector and an NxN unitary"));
        }
        if lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("non-finite eigenvalue"));
        }
        let scale = lambda.iter().fold(1.0_f64, |a, l| a.max(l.abs()));
        let sum: f64 = lambda.iter().sum();
        if sum.abs() > 1e-10 * scale * n as f64 {
            return Err(Error::invalid(format!("eigenvalues must sum to zero, sum = {sum:e}")));
        }
        let defect = unitarity_defect(&unitary);
        if defect > 1e-10 {
            return Err(Error::invalid(format!("matrix is not unitary (defect {defect:e})")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]));
        Ok(PolarCoords {
            lambda: order.iter().map(|&i| lambda[i]).collect(),
            unitary: DMatrix::from_fn(n, n, |r, c| unitary[(order[r], c)]),
        })
    }

    pub fn identity(n: usize) -> Self {
        PolarCoords { lambda: vec![0.0; n], unitary: DMatrix::identity(n, n) }
    }

    pub fn dimension(&self) -> usize {
        self.lambda.len()
    }

    /// `U^† e^Λ U`; overflows for very large `λ`.
    pub fn to_matrix(&self) -> Result<PositiveMatrix> {
        let n = self.dimension();
        let mut scaled = self.unitary.adjoint();
        for (j, l) in self.lambda.iter().enumerate() {
            let e = l.exp();
            for i in 0..n {
                scaled[(i, j)] *= e;
            }
        }
        let m = scaled * &self.unitary;
        PositiveMatrix::normalized(m)
    }
}

/// `δ_N = (-(N-1)/2, ..., (N-1)/2)`, the half sum of positive roots.
pub fn delta_n(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 - (n as f64 - 1.0) / 2.0).collect()
}

/// Eigen-decomposition of `log P`; eigenvector phases fixed so each first non-negligible entry is positive.
pub fn polar_decompose(p: &PositiveMatrix) -> Result<PolarCoords> {
    let (values, mut vectors) = check_hermitian_positive(p.entries())?;
    fix_column_phases(&mut vectors);
    let mut lambda: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mean = lambda.iter().sum::<f64>() / lambda.len() as f64;
    lambda.iter_mut().for_each(|l| *l -= mean);
    Ok(PolarCoords { lambda, unitary: vectors.adjoint() })
}

/// Radial Haar density `Δ²(e^λ)` and its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HaarDensity {
    pub value: f64,
    pub log_value: f64,
}

pub fn haar_volume_density(lambda: &[f64]) -> HaarDensity {
    let mut log_value = 0.0;
    for i in 0..lambda.len() {
        for j in (i + 1)..lambda.len() {
            log_value += 2.0 * log_abs_exp_diff(lambda[i], lambda[j]);
        }
    }
    HaarDensity { value: log_value.exp(), log_value }
}

/// A Bergman metric sample: the matrix in polar form with shifted weights `e^{λ_j - λ_max}`.
#[derive(Debug)]
pub struct KahlerPotentialSample {
    pub k: usize,
    pub polar: PolarCoords,
    matrix: Option<PositiveMatrix>,
    weights: Vec<f64>,
    lambda_max: f64,
    cache: RefCell<HashMap<[u64; 3], f64>>,
}

/// Local data of `Q = s^† P s` at one point of a chart, scaled by `e^{-λ_max}`.
struct LocalQ {
    q: f64,
    q_identity: f64,
    lagrange: f64,
}

impl KahlerPotentialSample {
    pub fn new(matrix: PositiveMatrix, k: usize) -> Result<Self> {
        let polar = polar_decompose(&matrix)?;
        let mut s = Self::from_polar(polar, k)?;
        s.matrix = Some(matrix);
        Ok(s)
    }

    pub fn from_polar(polar: PolarCoords, k: usize) -> Result<Self> {
        if polar.dimension() != k + 1 {
            return Err(Error::invalid(format!("matrix size {} does not match k = {k}", polar.dimension())));
        }
        let lambda_max = polar.lambda[0];
        let weights = polar.lambda.iter().map(|l| (l - lambda_max).exp()).collect();
        Ok(KahlerPotentialSample { k, polar, matrix: None, weights, lambda_max, cache: RefCell::new(HashMap::new()) })
    }

    pub fn identity(k: usize) -> Self {
        Self::from_polar(PolarCoords::identity(k + 1), k).expect("identity sample")
    }

    pub fn matrix(&self) -> Option<&PositiveMatrix> {
        self.matrix.as_ref()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    fn check_basis(&self, basis: &SectionBasis) -> Result<()> {
        if basis.k != self.k {
            return Err(Error::invalid(format!("basis has k = {}, sample has k = {}", basis.k, self.k)));
        }
        Ok(())
    }

    fn local(&self, basis: &SectionBasis, chart: Chart, zeta: C64) -> LocalQ {
        let (s, ds) = basis.evaluate(chart, zeta);
        let w = &self.polar.unitary * s;
        let dw = &self.polar.unitary * ds;
        let n = w.len();
        let mut q = 0.0;
        let mut q_identity = 0.0;
        for j in 0..n {
            q += self.weights[j] * w[j].norm_sqr();
            q_identity += w[j].norm_sqr();
        }
        let mut lagrange = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let cross = w[i] * dw[j] - w[j] * dw[i];
                lagrange += self.weights[i] * self.weights[j] * cross.norm_sqr();
            }
        }
        LocalQ { q, q_identity, lagrange }
    }

    /// `φ_P − φ_I`, a bounded function independent of the chart.
    pub fn relative_potential(&self, basis: &SectionBasis, p: &ChartPoint) -> Result<f64> {
        self.check_basis(basis)?;
        let (chart, zeta) = p.local();
        let l = self.local(basis, chart, zeta);
        Ok((self.lambda_max + (l.q / l.q_identity).ln()) / self.k as f64)
    }

    /// `k (φ_P − φ_I) − λ_max`: the relative potential with the common top eigenvalue removed.
    pub fn centered_log_ratio(&self, basis: &SectionBasis, p: &ChartPoint) -> Result<f64> {
        self.check_basis(basis)?;
        let (chart, zeta) = p.local();
        let l = self.local(basis, chart, zeta);
        Ok((l.q / l.q_identity).ln())
    }

    /// Ratio of `ω_P` to the round form `ω₀` at a point.
    pub fn density_ratio(&self, basis: &SectionBasis, p: &ChartPoint) -> Result<f64> {
        self.check_basis(basis)?;
        let (chart, zeta) = p.local();
        let l = self.local(basis, chart, zeta);
        let g = l.lagrange / (self.k as f64 * l.q * l.q);
        Ok(g / ManifoldModel::round_density(zeta))
    }

    /// `φ_P(z) = (1/k) log(s^† P s)` in the chart `z`, or in the chart `w = 1/z` at infinity.
    pub fn potential(&self, basis: &SectionBasis, p: &ChartPoint) -> Result<f64> {
        self.check_basis(basis)?;
        let key = [p.z.re.to_bits(), p.z.im.to_bits(), p.at_infinity as u64];
        if let Some(v) = self.cache.borrow().get(&key) {
            return Ok(*v);
        }
        let (chart, zeta) = if p.at_infinity { (Chart::Infinity, c64(0.0, 0.0)) } else { (Chart::Origin, p.z) };
        let (s, _) = basis.evaluate(chart, zeta);
        let w = &self.polar.unitary * s;
        let q: f64 = w.iter().zip(&self.weights).map(|(x, e)| e * x.norm_sqr()).sum();
        let value = (self.lambda_max + q.ln()) / self.k as f64;
        self.cache.borrow_mut().insert(key, value);
        Ok(value)
    }

    /// Coefficient of `i dz∧dz̄` in `ω_P` (chart `w` at infinity).
    pub fn density(&self, basis: &SectionBasis, p: &ChartPoint) -> Result<f64> {
        self.check_basis(basis)?;
        let (chart, zeta) = p.local();
        let l = self.local(basis, chart, zeta);
        let g = l.lagrange / (self.k as f64 * l.q * l.q);
        Ok(match chart {
            Chart::Infinity if !p.at_infinity => g * zeta.norm_sqr().powi(2),
            _ => g,
        })
    }
}

/// See [`KahlerPotentialSample::potential`].
pub fn kahler_potential(sample: &KahlerPotentialSample, basis: &SectionBasis, z: &ChartPoint) -> Result<f64> {
    sample.potential(basis, z)
}

/// See [`KahlerPotentialSample::density`].
pub fn metric_density(sample: &KahlerPotentialSample, basis: &SectionBasis, z: &ChartPoint) -> Result<f64> {
    sample.density(basis, z)
}

/// `(1/k)(Q ∂∂̄Q − |∂Q|²)/Q²` straight from the matrix entries, in the chart `z`.
pub fn metric_density_direct(p: &PositiveMatrix, basis: &SectionBasis, z: C64) -> f64 {
    let (s, ds) = basis.evaluate(Chart::Origin, z);
    let m = p.entries();
    let ps = m * &s;
    let pds = m * &ds;
    let q = s.dotc(&ps).re;
    let dq = s.dotc(&pds);
    let ddq = ds.dotc(&pds).re;
    (q * ddq - dq.norm_sqr()) / (basis.k as f64 * q * q)
}

/// Central-difference Laplacian of the potential, `g = Δφ / 4`.
pub fn metric_density_fd(sample: &KahlerPotentialSample, basis: &SectionBasis, z: C64, h: f64) -> Result<f64> {
    let phi = |dz: C64| sample.potential(basis, &ChartPoint::finite(z + dz));
    let center = phi(c64(0.0, 0.0))?;
    let lap = phi(c64(h, 0.0))? + phi(c64(-h, 0.0))? + phi(c64(0.0, h))? + phi(c64(0.0, -h))? - 4.0 * center;
    Ok(lap / (4.0 * h * h))
}

/// Writes one polar record: `u32` payload length, then `N`, `λ`, and `U` row-major as `(re, im)`.
pub fn write_polar_record<W: Write>(out: &mut W, polar: &PolarCoords) -> Result<()> {
    let n = polar.dimension();
    let mut payload = Vec::with_capacity(4 + 8 * (n + 2 * n * n));
    payload.extend_from_slice(&(n as u32).to_le_bytes());
    for l in &polar.lambda {
        payload.extend_from_slice(&l.to_le_bytes());
    }
    for i in 0..n {
        for j in 0..n {
            let z = polar.unitary[(i, j)];
            payload.extend_from_slice(&z.re.to_le_bytes());
            payload.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out.write_all(&(payload.len() as u32).to_le_bytes())?;
    out.write_all(&payload)?;
    Ok(())
}

/// Reads a record written by [`write_polar_record`]; `None` at a clean end of stream.
pub fn read_polar_record<R: Read>(input: &mut R) -> Result<Option<PolarCoords>> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let mut payload = vec![0u8; u32::from_le_bytes(len) as usize];
    input.read_exact(&mut payload)?;
    let mut words = payload[4..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let n = u32::from_le_bytes(payload[..4].try_into().unwrap()) as usize;
    if payload.len() != 4 + 8 * (n + 2 * n * n) {
        return Err(Error::invalid("corrupt polar record"));
    }
    let lambda: Vec<f64> = (0..n).map(|_| words.next().unwrap()).collect();
    let entries: Vec<C64> = (0..n * n).map(|_| c64(words.next().unwrap(), words.next().unwrap())).collect();
    let unitary = DMatrix::from_row_slice(n, n, &entries);
    Ok(Some(PolarCoords::new(lambda, unitary)?))
}

/// JSON-lines form of a polar sample.
#[derive(Serialize, Deserialize)]
pub struct PolarJson {
    pub lambda: Vec<f64>,
    pub unitary: Vec<[f64; 2]>,
}

impl From<&PolarCoords> for PolarJson {
    fn from(p: &PolarCoords) -> Self {
        let n = p.dimension();
        PolarJson {
            lambda: p.lambda.clone(),
            unitary: (0..n * n).map(|i| { let z = p.unitary[(i / n, i % n)]; [z.re, z.im] }).collect(),
        }
    }
}

pub fn section_vector(basis: &SectionBasis, p: &ChartPoint) -> DVector<C64> {
    basis.values_at(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_unitary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis(k: usize) -> SectionBasis {
        SectionBasis::orthonormal(ManifoldModel::new(k).unwrap())
    }

    #[test]
    fn det_checks() {
        let two = DMatrix::from_diagonal_element(2, 2, c64(2.0, 0.0));
        assert!(matches!(PositiveMatrix::new(two.clone()), Err(Error::DeterminantNotUnit { .. })));
        let p = PositiveMatrix::normalized(two).unwrap();
        assert!((p.entries()[(0, 0)].re - 1.0).abs() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(0.5, 0.0), c64(0.0, 0.0), c64(1.0, 0.0)]);
        assert!(matches!(PositiveMatrix::normalized(bad), Err(Error::NotHermitian { .. })));
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![c64(-1.0, 0.0), c64(-1.0, 0.0)]));
        assert!(matches!(PositiveMatrix::normalized(neg), Err(Error::NotPositive { .. })));
    }

    #[test]
    fn potential_example_k1() {
        let p = PositiveMatrix::diagonal(&[2.0, 0.5]).unwrap();
        let s = KahlerPotentialSample::new(p, 1).unwrap();
        let phi = s.potential(&basis(1), &ChartPoint::new(0.0, 0.0)).unwrap();
        assert!((phi - 4.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn identity_is_background() {
        let b = basis(3);
        let s = KahlerPotentialSample::identity(3);
        for &(x, y) in &[(0.0, 0.0), (0.3, 2.0), (-5.0, 1.0)] {
            let z = ChartPoint::new(x, y);
            assert_eq!(s.relative_potential(&b, &z).unwrap(), 0.0);
            assert!((s.density_ratio(&b, &z).unwrap() - 1.0).abs() < 1e-13);
            let bk = crate::geometry::bergman_kernel(&b, &crate::geometry::PointPair::new(z, z)).unwrap().re;
            assert!((s.potential(&b, &z).unwrap() - bk.ln() / 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn diag_density_ratio_k1() {
        // P = diag(4, 1/4): ω_P = ω₀ scaled by 1/16 at the origin and by 16 at infinity
        let s = KahlerPotentialSample::new(PositiveMatrix::diagonal(&[4.0, 0.25]).unwrap(), 1).unwrap();
        let b = basis(1);
        let at0 = s.density_ratio(&b, &ChartPoint::new(0.0, 0.0)).unwrap();
        let at_inf = s.density_ratio(&b, &ChartPoint::infinity()).unwrap();
        assert!((at0 - 1.0 / 16.0).abs() < 1e-15);
        assert!((at_inf - 16.0).abs() < 1e-13);
        assert!((at_inf / at0 - 256.0).abs() < 1e-10);
    }

    #[test]
    fn density_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = 4;
        let u = haar_unitary(k + 1, &mut rng);
        let polar = PolarCoords::new(vec![1.0, 0.4, 0.0, -0.3, -1.1], u).unwrap();
        let p = polar.to_matrix().unwrap();
        let s = KahlerPotentialSample::new(p.clone(), k).unwrap();
        let b = basis(k);
        for &(x, y) in &[(0.1, 0.2), (0.7, -0.4), (-0.2, 0.9)] {
            let z = c64(x, y);
            let polar_form = s.density(&b, &ChartPoint::finite(z)).unwrap();
            let direct = metric_density_direct(&p, &b, z);
            let fd = metric_density_fd(&s, &b, z, 1e-4).unwrap();
            assert!((polar_form - direct).abs() < 1e-12 * direct, "{polar_form} {direct}");
            assert!((polar_form - fd).abs() < 1e-5 * direct, "{polar_form} {fd}");
        }
        // chart change consistency for finite points beyond the unit circle
        let z = c64(2.0, -1.5);
        let far = s.density(&b, &ChartPoint::finite(z)).unwrap();
        assert!((far - metric_density_direct(&p, &b, z)).abs() < 1e-12 * far);
    }

    #[test]
    fn polar_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = haar_unitary(3, &mut rng);
        let polar = PolarCoords::new(vec![-0.5, 1.5, -1.0], u).unwrap();
        assert_eq!(polar.lambda, vec![1.5, -0.5, -1.0]);
        let p = polar.to_matrix().unwrap();
        let back = polar_decompose(&p).unwrap();
        let rebuilt = back.to_matrix().unwrap();
        assert!(max_abs(&(rebuilt.entries() - p.entries())) < 1e-12);
        let id = polar_decompose(&PositiveMatrix::identity(3)).unwrap();
        assert_eq!(id.lambda, vec![0.0; 3]);
        assert_eq!(id.unitary, DMatrix::identity(3, 3));
    }

    #[test]
    fn haar_density_examples() {
        let a: f64 = 0.7;
        let d = haar_volume_density(&[a, -a]);
        assert!((d.value - ((-a).exp() - a.exp()).powi(2)).abs() < 1e-13);
        assert_eq!(haar_volume_density(&[0.2, 0.2, -0.4]).value, 0.0);
        let e = std::f64::consts::E;
        let direct = ((1.0 - e) * (1.0 / e - e) * (1.0 / e - 1.0)).powi(2);
        assert!((haar_volume_density(&[1.0, 0.0, -1.0]).value - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn serialization_round_trips() {
        let p = PositiveMatrix::diagonal(&[4.0, 0.25]).unwrap();
        assert_eq!(PositiveMatrix::from_json(&p.to_json().unwrap()).unwrap(), p);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let polar = PolarCoords::new(vec![0.3, -0.3], haar_unitary(2, &mut rng)).unwrap();
        let mut buf = Vec::new();
        write_polar_record(&mut buf, &polar).unwrap();
        write_polar_record(&mut buf, &polar).unwrap();
        let mut cursor = std::io::Cursor::new(buf);
        assert_eq!(read_polar_record(&mut cursor).unwrap().unwrap(), polar);
        assert!(read_polar_record(&mut cursor).unwrap().is_some());
        assert!(read_polar_record(&mut cursor).unwrap().is_none());
    }

    #[test]
    fn mismatched_basis_rejected() {
        let s = KahlerPotentialSample::identity(2);
        assert!(s.potential(&basis(3), &ChartPoint::new(0.0, 0.0)).is_err());
    }
}
