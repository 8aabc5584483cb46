//! Geodesic rays of Bergman potentials and zeros of Gaussian random sections.

use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, SectionBasis};
use crate::heat_sampler::stream_rng;
use crate::linalg::{c64, complex_gaussian, C64};
use crate::matrix_metric::{KahlerPotentialSample, PolarCoords};
use crate::quadrature::{sphere_integral, Tolerance};
use crate::roots::{polynomial_roots, RootSolver};
use crate::special::number_variance_constant;
use crate::statistics::{batch_means, variance_estimate, EstimatorResult, LinearStatistic, SphereSet, ZonalFunction};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::f64::consts::PI;

/// Initial vector `(Λ, U)` of the ray `s ↦ U† e^{sΛ} U`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayDirection {
    pub polar: PolarCoords,
    /// multiplicity of the top eigenvalue
    pub multiplicity: usize,
}

impl RayDirection {
    pub fn new(lambda: Vec<f64>, unitary: DMatrix<C64>) -> Result<Self> {
        let polar = PolarCoords::new(lambda, unitary)?;
        let top = polar.lambda[0];
        let scale = polar.lambda.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let multiplicity = polar.lambda.iter().take_while(|v| top - **v <= 1e-12 * scale).count();
        if multiplicity == polar.lambda.len() {
            return Err(Error::invalid("a ray needs a nonzero direction"));
        }
        Ok(RayDirection { polar, multiplicity })
    }

    pub fn dimension(&self) -> usize {
        self.polar.lambda.len()
    }

    /// Gap between the top eigenvalue and the next distinct one.
    pub fn spectral_gap(&self) -> f64 {
        self.polar.lambda[0] - self.polar.lambda[self.multiplicity]
    }

    /// The metric at ray time `s`.
    pub fn at(&self, s: f64, k: usize) -> Result<KahlerPotentialSample> {
        let lambda = self.polar.lambda.iter().map(|v| v * s).collect();
        KahlerPotentialSample::from_polar(PolarCoords::new(lambda, self.polar.unitary.clone())?, k)
    }

    /// Coefficients in `z` of the top sections `(U s)_j`, `j < r`.
    pub fn top_sections(&self, basis: &SectionBasis) -> Vec<Vec<C64>> {
        let m = &self.polar.unitary * &basis.coeffs;
        (0..self.multiplicity).map(|j| m.row(j).iter().copied().collect()).collect()
    }
}

fn check_basis(ray: &RayDirection, basis: &SectionBasis) -> Result<()> {
    if ray.dimension() != basis.k + 1 {
        return Err(Error::invalid(format!("ray has dimension {}, basis has k = {}", ray.dimension(), basis.k)));
    }
    Ok(())
}

/// `β_s(z) = (1/k) log Σ_j e^{s λ_j} |s^U_j(z)|²` in the chart `z` (chart `w` at infinity).
pub fn ray_potential(ray: &RayDirection, s: f64, basis: &SectionBasis, z: &ChartPoint) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::invalid(format!("ray time must be nonnegative, got {s}")));
    }
    check_basis(ray, basis)?;
    ray.at(s, basis.k)?.potential(basis, z)
}

/// `(1/k) log (F_s / Σ_{j≤r} |ŝ^U_j|²)` with `F_s = Σ_j e^{s(λ_j − λ_max)} |ŝ^U_j|²`, chart independent and nonnegative.
pub fn ray_excess(ray: &RayDirection, s: f64, basis: &SectionBasis, z: &ChartPoint) -> f64 {
    let w = &ray.polar.unitary * basis.normalized_values(z);
    let top = ray.polar.lambda[0];
    let mut rest = 0.0;
    let mut limit = 0.0;
    for (j, x) in w.iter().enumerate() {
        let a = x.norm_sqr();
        if j < ray.multiplicity {
            limit += a;
        } else {
            rest += (s * (ray.polar.lambda[j] - top)).exp() * a;
        }
    }
    (rest / limit).ln_1p() / basis.k as f64
}

/// Common zeros of the top sections, as break points for quadrature.
fn top_zeros(ray: &RayDirection, basis: &SectionBasis) -> Result<Vec<ChartPoint>> {
    let mut points = Vec::new();
    for coeffs in ray.top_sections(basis) {
        points.extend(polynomial_roots(&coeffs, RootSolver::Companion).map(|r| roots_to_points(r.finite, r.at_infinity))?);
    }
    Ok(points)
}

fn roots_to_points(finite: Vec<C64>, at_infinity: usize) -> Vec<ChartPoint> {
    let mut v: Vec<ChartPoint> = finite.into_iter().map(ChartPoint::finite).collect();
    v.extend(std::iter::repeat_n(ChartPoint::infinity(), at_infinity));
    v
}

fn breaks_of(points: &[ChartPoint]) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut phis = Vec::new();
    for p in points {
        let q = p.to_sphere();
        xs.push(q[2]);
        if q[2].abs() < 1.0 {
            phis.push(q[1].atan2(q[0]));
        }
    }
    (xs, phis)
}

/// `L¹(ω₀)` distance between `(1/k) log F_s` and its limit `(1/k) log Σ_{j≤r} |s^U_j|²` at each time.
pub fn l1_convergence(ray: &RayDirection, basis: &SectionBasis, times: &[f64]) -> Result<Vec<f64>> {
    check_basis(ray, basis)?;
    let zeros = top_zeros(ray, basis)?;
    let (xs, phis) = breaks_of(&zeros);
    let tol = Tolerance { abs: 1e-13, rel: 1e-9, max_intervals: 4000 };
    times
        .iter()
        .map(|&s| {
            if !(s >= 0.0) {
                return Err(Error::invalid(format!("ray time must be nonnegative, got {s}")));
            }
            let r = sphere_integral(
                |x, phi| {
                    let v = ray_excess(ray, s, basis, &ChartPoint::from_polar(x, phi));
                    if v.is_finite() { v } else { 0.0 }
                },
                &xs,
                &phis,
                tol,
            )?;
            Ok(0.5 * r.value)
        })
        .collect()
}

/// `|∫ψ ω_{β_s} − (2π/k) Σ_{roots of s_max} ψ(root)|`.
///
/// The mass `2π/k` per root makes both sides equal `2π` for `ψ ≡ 1`.
pub fn weak_limit_check(ray: &RayDirection, basis: &SectionBasis, psi: &ZonalFunction, s: f64) -> Result<f64> {
    check_basis(ray, basis)?;
    if ray.multiplicity != 1 {
        return Err(Error::invalid("the zero current needs a simple top eigenvalue"));
    }
    let sample = ray.at(s, basis.k)?;
    let smooth = crate::statistics::linear_statistic_value(&LinearStatistic::Smooth(*psi), &sample, basis, Tolerance::new(1e-12, 1e-11))?;
    let zeros = top_zeros(ray, basis)?;
    if zeros.len() != basis.k {
        return Err(Error::invalid("top section has the wrong number of roots"));
    }
    let atomic: f64 = zeros.iter().map(|p| psi.value_at(p)).sum::<f64>() * 2.0 * PI / basis.k as f64;
    Ok((smooth - atomic).abs())
}

/// `s = Σ c_j s_j` with i.i.d. standard complex Gaussian `c_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianSection {
    pub c: DVector<C64>,
}

impl GaussianSection {
    pub fn new(c: DVector<C64>) -> Result<Self> {
        if c.iter().any(|x| !(x.re.is_finite() && x.im.is_finite())) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(GaussianSection { c })
    }

    pub fn degree(&self) -> usize {
        self.c.len() - 1
    }

    /// Coefficients in powers of `z`, with entries below rounding level of their column set to zero.
    pub fn monomial_coefficients(&self, basis: &SectionBasis) -> Vec<C64> {
        let c_norm = self.c.norm();
        (0..basis.coeffs.ncols())
            .map(|m| {
                let column = basis.coeffs.column(m);
                let a: C64 = self.c.iter().zip(column.iter()).map(|(x, y)| x * y).sum();
                if a.norm() <= 1e-14 * c_norm * column.norm() {
                    c64(0.0, 0.0)
                } else {
                    a
                }
            })
            .collect()
    }
}

pub fn sample_section_with<R: Rng + ?Sized>(k: usize, rng: &mut R) -> GaussianSection {
    GaussianSection { c: DVector::from_fn(k + 1, |_, _| complex_gaussian(rng)) }
}

pub fn sample_section(k: usize, seed: u64) -> GaussianSection {
    sample_section_with(k, &mut stream_rng(seed, 0))
}

/// The `k` zeros of a section on `ℂP¹`, with multiplicity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroSet {
    pub roots: Vec<ChartPoint>,
}

impl ZeroSet {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn count_in(&self, set: &SphereSet) -> usize {
        self.roots.iter().filter(|p| set.contains(p)).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,at_infinity\n");
        for p in &self.roots {
            out.push_str(&format!("{},{},{}\n", p.z.re, p.z.im, p.at_infinity));
        }
        out
    }
}

pub fn zeros_of(section: &GaussianSection, basis: &SectionBasis) -> Result<ZeroSet> {
    zeros_with(section, basis, RootSolver::Companion)
}

pub fn zeros_with(section: &GaussianSection, basis: &SectionBasis, solver: RootSolver) -> Result<ZeroSet> {
    if section.degree() != basis.k {
        return Err(Error::invalid(format!("section has degree {}, basis has k = {}", section.degree(), basis.k)));
    }
    let r = polynomial_roots(&section.monomial_coefficients(basis), solver)?;
    let roots = roots_to_points(r.finite, r.at_infinity);
    debug_assert_eq!(roots.len(), basis.k);
    Ok(ZeroSet { roots })
}

/// What to record from each sampled zero set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroStatsRequest {
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    pub solver: RootSolver,
    pub set: SphereSet,
    pub function: Option<ZonalFunction>,
    /// record counts in the eight equal-area cells
    pub cells: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ZeroStats {
    /// number of roots in the set, per sample
    pub counts: Vec<f64>,
    /// `Σ f(root)`, per sample
    pub smooth: Vec<f64>,
    /// per sample counts in the cells of [`equal_area_cell`]
    pub cells: Vec<[f64; 8]>,
}

/// Cell index in the partition by `x = cos θ ∈ [-1,-½), [-½,0), [0,½), [½,1]` and the sign of `Im z`.
pub fn equal_area_cell(p: &ChartPoint) -> usize {
    let q = p.to_sphere();
    let band = (((q[2] + 1.0) * 2.0).floor() as usize).min(3);
    let half = usize::from(q[1] < 0.0);
    2 * band + half
}

/// Samples `n` sections with their zero sets; sample `i` uses stream `i` of the seed.
pub fn zero_statistics(req: &ZeroStatsRequest) -> Result<ZeroStats> {
    let basis = SectionBasis::orthonormal(crate::geometry::ManifoldModel::new(req.k)?);
    let per_sample: Vec<Result<(f64, f64, [f64; 8])>> = (0..req.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(req.seed, i as u64);
            let section = sample_section_with(req.k, &mut rng);
            let zs = zeros_with(&section, &basis, req.solver)?;
            if zs.len() != req.k {
                return Err(Error::invalid(format!("found {} roots for k = {}", zs.len(), req.k)));
            }
            let count = zs.count_in(&req.set) as f64;
            let smooth = req.function.map_or(0.0, |f| zs.roots.iter().map(|p| f.value_at(p)).sum());
            let mut cells = [0.0; 8];
            if req.cells {
                for p in &zs.roots {
                    cells[equal_area_cell(p)] += 1.0;
                }
            }
            Ok((count, smooth, cells))
        })
        .collect();
    let mut out = ZeroStats::default();
    for r in per_sample {
        let (count, smooth, cells) = r?;
        out.counts.push(count);
        out.smooth.push(smooth);
        if req.cells {
            out.cells.push(cells);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct NumberVarianceReport {
    pub variance: EstimatorResult,
    pub mean_count: EstimatorResult,
    pub predicted: f64,
    pub ratio: f64,
}

/// Variance of the number of zeros in `set` against `√k ν₁ Vol₁(∂U)`.
pub fn number_variance(k: usize, set: &SphereSet, n: usize, seed: u64, solver: RootSolver) -> Result<NumberVarianceReport> {
    if n < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let req = ZeroStatsRequest { k, n, seed, solver, set: *set, function: None, cells: false };
    let stats = zero_statistics(&req)?;
    let predicted = (k as f64).sqrt() * number_variance_constant() * set.boundary_length();
    let manifest = json!({ "k": k, "n": n, "seed": seed, "set": set, "solver": solver, "boundary_length": set.boundary_length() });
    let variance = variance_estimate(&stats.counts).with_manifest(manifest.clone());
    Ok(NumberVarianceReport {
        ratio: variance.estimate / predicted,
        mean_count: batch_means(&stats.counts).with_manifest(manifest),
        variance,
        predicted,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    /// mean fraction of roots in each cell
    pub fractions: Vec<EstimatorResult>,
    pub expected: f64,
    pub max_abs_z: f64,
}

/// Mean fraction of roots in the eight equal-area cells against `1/8`.
pub fn density_uniformity(k: usize, n: usize, seed: u64, solver: RootSolver) -> Result<DensityReport> {
    let req = ZeroStatsRequest { k, n, seed, solver, set: SphereSet::Whole, function: None, cells: true };
    let stats = zero_statistics(&req)?;
    let fractions: Vec<EstimatorResult> = (0..8)
        .map(|c| batch_means(&stats.cells.iter().map(|row| row[c] / k as f64).collect::<Vec<_>>()))
        .collect();
    let expected = 1.0 / 8.0;
    let max_abs_z = fractions.iter().map(|f| f.z_score(expected).abs()).fold(0.0, f64::max);
    Ok(DensityReport { fractions, expected, max_abs_z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ManifoldModel;
    use crate::statistics::Profile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis(k: usize) -> SectionBasis {
        SectionBasis::orthonormal(ManifoldModel::new(k).unwrap())
    }

    fn generic_ray(n: usize, seed: u64) -> RayDirection {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lambda: Vec<f64> = (0..n).map(|j| -(j as f64)).collect();
        let mean = lambda.iter().sum::<f64>() / n as f64;
        lambda.iter_mut().for_each(|v| *v -= mean);
        RayDirection::new(lambda, crate::linalg::haar_unitary(n, &mut rng)).unwrap()
    }

    #[test]
    fn ray_potential_at_zero_and_closed_form() {
        let b = basis(2);
        let ray = generic_ray(3, 1);
        let z = ChartPoint::new(0.3, -0.4);
        // s_j = c_j z^j with c_j² = 3, 6, 3
        let phi_identity = 0.5 * 3f64.ln() + (1.0 + z.z.norm_sqr()).ln();
        assert!((ray_potential(&ray, 0.0, &b, &z).unwrap() - phi_identity).abs() < 1e-14);
        // λ = (1, 0, -1), U = I: β_s = ½ log 3(e^s + 2|z|² + e^{-s}|z|⁴)
        let r = RayDirection::new(vec![1.0, 0.0, -1.0], DMatrix::identity(3, 3)).unwrap();
        let s: f64 = 2.5;
        let a = z.z.norm_sqr();
        let expected = 0.5 * (3.0 * (s.exp() + 2.0 * a + (-s).exp() * a * a)).ln();
        assert!((ray_potential(&r, s, &b, &z).unwrap() - expected).abs() < 1e-13);
        assert!(ray_potential(&r, -1.0, &b, &z).is_err());
        // β_s − s λ_max / k → (1/k) log |s_max|²
        let far = ray_potential(&r, 60.0, &b, &z).unwrap() - 30.0;
        assert!((far - 0.5 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn l1_distance_decreases() {
        let b = basis(3);
        let ray = generic_ray(4, 2);
        let d = l1_convergence(&ray, &b, &[1.0, 2.0, 4.0, 8.0, 32.0]).unwrap();
        assert!(d.windows(2).all(|w| w[1] <= w[0]), "{d:?}");
        assert!(d[4] < 1e-6, "{d:?}");
    }

    #[test]
    fn degenerate_top_uses_the_span() {
        let b = basis(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ray = RayDirection::new(vec![0.5, 0.5, -1.0], crate::linalg::haar_unitary(3, &mut rng)).unwrap();
        assert_eq!(ray.multiplicity, 2);
        let z = ChartPoint::new(-0.2, 0.7);
        assert!(ray_excess(&ray, 40.0, &b, &z) < 1e-15);
        let d = l1_convergence(&ray, &b, &[1.0, 4.0, 16.0]).unwrap();
        assert!(d.windows(2).all(|w| w[1] <= w[0]));
        assert!(weak_limit_check(&ray, &b, &ZonalFunction::bump(1.0), 10.0).is_err());
    }

    #[test]
    fn weak_limit_constant_and_local() {
        let b = basis(4);
        let ray = generic_ray(5, 3);
        let one = ZonalFunction::new([0.0, 0.0, 1.0], Profile::Constant { value: 1.0 }).unwrap();
        assert!(weak_limit_check(&ray, &b, &one, 5.0).unwrap() < 1e-10);
        let psi = ZonalFunction::new([0.2, 0.5, -0.3], Profile::ExpBump { a: 2.0 }).unwrap();
        assert!(weak_limit_check(&ray, &b, &psi, 50.0).unwrap() < 1e-3);
    }

    #[test]
    fn section_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20_000;
        let draws: Vec<GaussianSection> = (0..n).map(|_| sample_section_with(2, &mut rng)).collect();
        let abs2: Vec<f64> = draws.iter().map(|s| s.c[1].norm_sqr()).collect();
        assert!(batch_means(&abs2).z_score(1.0).abs() < 3.0);
        let sq_re: Vec<f64> = draws.iter().map(|s| (s.c[0] * s.c[0]).re).collect();
        assert!(batch_means(&sq_re).z_score(0.0).abs() < 3.0);
        let cross: Vec<f64> = draws.iter().map(|s| (s.c[0] * s.c[2].conj()).re).collect();
        assert!(batch_means(&cross).z_score(0.0).abs() < 3.0);
    }

    #[test]
    fn linear_and_constant_sections() {
        let b = basis(1);
        // s = c₀ s₀ + c₁ s₁ with s_j = √2 z^j, so the root is −c₀/c₁
        let s = GaussianSection::new(DVector::from_vec(vec![c64(1.0, 0.0), c64(-1.0, 0.0)])).unwrap();
        let z = zeros_of(&s, &b).unwrap();
        assert!((z.roots[0].z - c64(1.0, 0.0)).norm() < 1e-14);
        let b5 = basis(5);
        let mut c = DVector::from_element(6, c64(0.0, 0.0));
        c[0] = c64(1.0, 0.0);
        let z = zeros_of(&GaussianSection::new(c).unwrap(), &b5).unwrap();
        assert_eq!(z.len(), 5);
        assert!(z.roots.iter().all(|p| p.at_infinity));
        assert!(z.to_csv().starts_with("re,im,at_infinity\n"));
    }

    #[test]
    fn zero_counts_and_cells() {
        let req = ZeroStatsRequest {
            k: 16,
            n: 2000,
            seed: 5,
            solver: RootSolver::Companion,
            set: SphereSet::Disk { radius: 0.5 },
            function: None,
            cells: true,
        };
        let st = zero_statistics(&req).unwrap();
        let expected = 16.0 * req.set.omega_area() / (2.0 * PI);
        assert!(batch_means(&st.counts).z_score(expected).abs() < 3.5);
        assert!(st.cells.iter().all(|c| c.iter().sum::<f64>() == 16.0));
        let whole = number_variance(8, &SphereSet::Whole, 50, 1, RootSolver::Aberth).unwrap();
        assert_eq!(whole.variance.estimate, 0.0);
        assert_eq!(equal_area_cell(&ChartPoint::new(0.0, 0.0)), 6);
        assert_eq!(equal_area_cell(&ChartPoint::infinity()), 0);
    }
}
