//! Monte Carlo estimators over heat-measure samples and zero sets, with error bars.

use crate::analytic_oracle::{bipotential_difference, dilog_difference};
use crate::boundary_zeros::{zero_statistics, ZeroStatsRequest};
use crate::error::{Error, Result};
use crate::geometry::{berezin_rho, ChartPoint, PointPair, SectionBasis};
use crate::heat_sampler::{sample_map, HeatParams, SamplerKind};
use crate::matrix_metric::KahlerPotentialSample;
use crate::quadrature::{integrate, sphere_integral, Tolerance};
use crate::roots::RootSolver;
use crate::special::{normal_cdf, smooth_variance_constant};
use serde::Serialize;
use serde_json::{json, Value};
use std::f64::consts::PI;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub manifest: Value,
}

impl EstimatorResult {
    pub fn with_manifest(mut self, manifest: Value) -> Self {
        self.manifest = manifest;
        self
    }

    /// `(estimate - target) / std_error`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.estimate - target) / self.std_error
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample mean with the i.i.d. standard error.
pub fn mean_estimate(xs: &[f64]) -> EstimatorResult {
    let n = xs.len();
    EstimatorResult { estimate: mean(xs), std_error: (sample_variance(xs) / n as f64).sqrt(), n, manifest: Value::Null }
}

fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let den: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / den
}

/// Sample mean with a batch-means standard error.
///
/// The batch length doubles until the lag-1 autocorrelation of the batch means is below 0.1,
/// keeping at least 32 batches.
pub fn batch_means(xs: &[f64]) -> EstimatorResult {
    let n = xs.len();
    let estimate = mean(xs);
    let mut len = 1;
    loop {
        let batches: Vec<f64> = xs.chunks_exact(len).map(mean).collect();
        let rho = lag1_autocorrelation(&batches);
        if rho < 0.1 || batches.len() < 64 {
            let se = (sample_variance(&batches) / batches.len() as f64).sqrt();
            return EstimatorResult { estimate, std_error: se, n, manifest: json!({ "batch_length": len }) };
        }
        len *= 2;
    }
}

/// Sample variance; the standard error uses the fourth central moment.
pub fn variance_estimate(xs: &[f64]) -> EstimatorResult {
    let n = xs.len() as f64;
    let m = mean(xs);
    let v = sample_variance(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let var_of_var = ((m4 - v * v * (n - 3.0) / (n - 1.0)) / n).max(0.0);
    EstimatorResult { estimate: v, std_error: var_of_var.sqrt(), n: xs.len(), manifest: Value::Null }
}

/// Covariance of paired samples with a batch-means error bar on the products of deviations.
pub fn covariance_estimate(a: &[f64], b: &[f64]) -> EstimatorResult {
    let (ma, mb) = (mean(a), mean(b));
    let products: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let mut r = batch_means(&products);
    let n = a.len() as f64;
    r.estimate *= n / (n - 1.0);
    r
}

/// `Cov(a₁, b₁) − Cov(a₂, b₂)` from the same samples, with a paired error bar.
pub fn covariance_difference(a1: &[f64], b1: &[f64], a2: &[f64], b2: &[f64]) -> EstimatorResult {
    let (ma1, mb1, ma2, mb2) = (mean(a1), mean(b1), mean(a2), mean(b2));
    let terms: Vec<f64> = (0..a1.len())
        .map(|i| (a1[i] - ma1) * (b1[i] - mb1) - (a2[i] - ma2) * (b2[i] - mb2))
        .collect();
    let mut r = batch_means(&terms);
    let n = a1.len() as f64;
    r.estimate *= n / (n - 1.0);
    r
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Kolmogorov–Smirnov distance to the standard normal distribution.
pub fn ks_normal(z: &[f64]) -> f64 {
    let mut x = z.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter().enumerate().fold(0.0, |d, (i, v)| {
        let f = normal_cdf(*v);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalityReport {
    pub n: usize,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_distance: f64,
    pub skewness_threshold: f64,
    pub kurtosis_threshold: f64,
    pub passed: bool,
}

/// Standardizes by the sample mean and deviation, then checks `|skew| < 0.1`, `|excess kurtosis| < 0.2`.
pub fn normality_test(samples: &[f64]) -> Result<NormalityReport> {
    let n = samples.len();
    if n < 1000 {
        return Err(Error::invalid(format!("normality test needs at least 1000 samples, got {n}")));
    }
    let m = mean(samples);
    let sd = sample_variance(samples).sqrt();
    if sd == 0.0 {
        return Err(Error::invalid("samples are constant"));
    }
    let z: Vec<f64> = samples.iter().map(|x| (x - m) / sd).collect();
    let skewness = z.iter().map(|v| v.powi(3)).sum::<f64>() / n as f64;
    let excess_kurtosis = z.iter().map(|v| v.powi(4)).sum::<f64>() / n as f64 - 3.0;
    let ks_distance = ks_normal(&z);
    let (skewness_threshold, kurtosis_threshold) = (0.1, 0.2);
    Ok(NormalityReport {
        n,
        skewness,
        excess_kurtosis,
        ks_distance,
        skewness_threshold,
        kurtosis_threshold,
        passed: skewness.abs() < skewness_threshold && excess_kurtosis.abs() < kurtosis_threshold,
    })
}

/// Radial profile of a zonal test function `f(x)`, `x = n · p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Profile {
    Constant { value: f64 },
    /// `e^{a (x - 1)}`
    ExpBump { a: f64 },
    /// Legendre polynomial `P_l(x)`
    Legendre { l: usize },
    /// `exp(1 - 1/(1 - s²))` for `s = (1 - x)/width < 1`, zero beyond
    CompactBump { width: f64 },
}

/// Test function on the sphere depending only on the angle to `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ZonalFunction {
    pub axis: [f64; 3],
    pub profile: Profile,
}

impl ZonalFunction {
    pub fn new(axis: [f64; 3], profile: Profile) -> Result<Self> {
        let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::invalid("axis must be nonzero"));
        }
        Ok(ZonalFunction { axis: axis.map(|v| v / norm), profile })
    }

    pub fn bump(a: f64) -> Self {
        ZonalFunction { axis: [0.0, 0.0, 1.0], profile: Profile::ExpBump { a } }
    }

    /// `(f, f', f'')` in the variable `x`.
    pub fn profile_derivatives(&self, x: f64) -> (f64, f64, f64) {
        match self.profile {
            Profile::Constant { value } => (value, 0.0, 0.0),
            Profile::ExpBump { a } => {
                let f = (a * (x - 1.0)).exp();
                (f, a * f, a * a * f)
            }
            Profile::Legendre { l } => {
                let (p, dp) = legendre(l, x);
                // from the Legendre equation, valid also at x = ±1 through the limit
                let d2 = if (1.0 - x * x).abs() > 1e-12 {
                    (2.0 * x * dp - (l * (l + 1)) as f64 * p) / (1.0 - x * x)
                } else {
                    f64::NAN
                };
                (p, dp, d2)
            }
            Profile::CompactBump { width } => {
                let s = (1.0 - x) / width;
                if s >= 1.0 {
                    return (0.0, 0.0, 0.0);
                }
                let u = 1.0 - s * s;
                let f = (1.0 - 1.0 / u).exp();
                let g1 = -2.0 * s / (u * u);
                let g2 = -2.0 / (u * u) - 8.0 * s * s / (u * u * u);
                (f, -f * g1 / width, f * (g1 * g1 + g2) / (width * width))
            }
        }
    }

    pub fn cos_angle(&self, p: [f64; 3]) -> f64 {
        (self.axis[0] * p[0] + self.axis[1] * p[1] + self.axis[2] * p[2]).clamp(-1.0, 1.0)
    }

    pub fn value(&self, p: [f64; 3]) -> f64 {
        self.profile_derivatives(self.cos_angle(p)).0
    }

    pub fn value_at(&self, z: &ChartPoint) -> f64 {
        self.value(z.to_sphere())
    }

    /// Unit-sphere Laplacian `(1 - x²) f'' - 2 x f'`.
    pub fn laplacian_profile(&self, x: f64) -> f64 {
        if let Profile::Legendre { l } = self.profile {
            return -((l * (l + 1)) as f64) * legendre(l, x).0;
        }
        let (_, d1, d2) = self.profile_derivatives(x);
        (1.0 - x * x) * d2 - 2.0 * x * d1
    }

    pub fn laplacian(&self, p: [f64; 3]) -> f64 {
        self.laplacian_profile(self.cos_angle(p))
    }

    /// `‖Δf‖² = 4 ∫_{S²} (Δ_{S²} f)² dA`: the Laplacian and `L²` norm of the metric `|dz|²/(1+|z|²)²`.
    pub fn laplacian_norm_sq(&self, tol: Tolerance) -> Result<f64> {
        let mut pts = vec![-1.0];
        if let Profile::CompactBump { width } = self.profile {
            if width < 2.0 {
                pts.push(1.0 - width);
            }
        }
        pts.push(1.0);
        let r = crate::quadrature::integrate_with_breaks(|x| self.laplacian_profile(x).powi(2), &pts, tol)?;
        Ok(4.0 * 2.0 * PI * r.value)
    }
}

fn legendre(l: usize, x: f64) -> (f64, f64) {
    if l == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    for n in 1..l {
        let nf = n as f64;
        let p2 = ((2.0 * nf + 1.0) * x * p1 - nf * p0) / (nf + 1.0);
        let d2 = d0 + (2.0 * nf + 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// A rotation-invariant region of the chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SphereSet {
    Whole,
    /// `|z| < radius`
    Disk { radius: f64 },
    /// `inner < |z| < outer`
    Annulus { inner: f64, outer: f64 },
}

fn cos_theta_of_radius(r: f64) -> f64 {
    if r.is_infinite() {
        -1.0
    } else {
        (1.0 - r * r) / (1.0 + r * r)
    }
}

impl SphereSet {
    pub fn hemisphere() -> Self {
        SphereSet::Disk { radius: 1.0 }
    }

    /// Interval of `x = cos θ` covered.
    pub fn x_range(&self) -> (f64, f64) {
        match *self {
            SphereSet::Whole => (-1.0, 1.0),
            SphereSet::Disk { radius } => (cos_theta_of_radius(radius), 1.0),
            SphereSet::Annulus { inner, outer } => (cos_theta_of_radius(outer), cos_theta_of_radius(inner)),
        }
    }

    pub fn contains(&self, p: &ChartPoint) -> bool {
        match *self {
            SphereSet::Whole => true,
            _ if p.at_infinity => false,
            SphereSet::Disk { radius } => p.z.norm() < radius,
            SphereSet::Annulus { inner, outer } => {
                let r = p.z.norm();
                r > inner && r < outer
            }
        }
    }

    /// `ω₀`-area, `π (x_hi - x_lo)`.
    pub fn omega_area(&self) -> f64 {
        let (lo, hi) = self.x_range();
        PI * (hi - lo)
    }

    /// Boundary length in the metric `|dz|/(1+|z|²)`; a circle `|z| = r` has length `2πr/(1+r²)`.
    pub fn boundary_length(&self) -> f64 {
        let circle = |r: f64| if r.is_finite() && r > 0.0 { 2.0 * PI * r / (1.0 + r * r) } else { 0.0 };
        match *self {
            SphereSet::Whole => 0.0,
            SphereSet::Disk { radius } => circle(radius),
            SphereSet::Annulus { inner, outer } => circle(inner) + circle(outer),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearStatistic {
    Smooth(ZonalFunction),
    Set(SphereSet),
}

/// `∫ f ω_P` by integration by parts, `½∫ f dA + ½∫ (φ_P − φ_I) Δf dA` on the unit sphere;
/// `∫_U ω_P` by quadrature of the metric density over `U`.
pub fn linear_statistic_value(
    stat: &LinearStatistic,
    sample: &KahlerPotentialSample,
    basis: &SectionBasis,
    tol: Tolerance,
) -> Result<f64> {
    match stat {
        LinearStatistic::Smooth(f) => {
            let failure = std::cell::Cell::new(false);
            let r = sphere_integral(
                |x, phi| {
                    let p = ChartPoint::from_polar(x, phi);
                    let s = p.to_sphere();
                    let u = sample.relative_potential(basis, &p).unwrap_or_else(|_| {
                        failure.set(true);
                        f64::NAN
                    });
                    0.5 * (f.value(s) + u * f.laplacian(s))
                },
                &[],
                &[],
                tol,
            )?;
            if failure.get() {
                return Err(Error::invalid("basis does not match the sample"));
            }
            Ok(r.value)
        }
        LinearStatistic::Set(set) => {
            let (lo, hi) = set.x_range();
            let failure = std::cell::Cell::new(false);
            let inner = |x: f64| {
                integrate(
                    |phi| {
                        sample.density_ratio(basis, &ChartPoint::from_polar(x, phi)).unwrap_or_else(|_| {
                            failure.set(true);
                            f64::NAN
                        })
                    },
                    0.0,
                    2.0 * PI,
                    tol,
                )
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
            };
            let r = integrate(inner, lo, hi, tol)?;
            if failure.get() {
                return Err(Error::invalid("basis does not match the sample"));
            }
            Ok(0.5 * r.value)
        }
    }
}

/// `∫ f ω_P` straight from the metric density, a cross-check of [`linear_statistic_value`].
pub fn smooth_statistic_direct(f: &ZonalFunction, sample: &KahlerPotentialSample, basis: &SectionBasis, tol: Tolerance) -> Result<f64> {
    let r = sphere_integral(
        |x, phi| {
            let p = ChartPoint::from_polar(x, phi);
            0.5 * f.value(p.to_sphere()) * sample.density_ratio(basis, &p).unwrap_or(f64::NAN)
        },
        &[],
        &[],
        tol,
    )?;
    Ok(r.value)
}

/// Result of the one-point flatness estimator.
#[derive(Debug, Clone, Serialize)]
pub struct FlatnessReport {
    /// `E[φ_P − φ_I]` at each grid point
    pub per_point: Vec<EstimatorResult>,
    /// deviation of each point from the grid average, with the joint error bar
    pub deviations: Vec<EstimatorResult>,
    /// the common offset (grid average)
    pub offset: EstimatorResult,
    pub max_abs_z: f64,
    pub manifest: Value,
}

/// Estimates `E[φ_P(z) − φ_I(z)]` on a grid and how much it varies across the grid.
pub fn one_point_flatness(
    params: &HeatParams,
    basis: &SectionBasis,
    grid: &[ChartPoint],
    n: usize,
    seed: u64,
    sampler: &SamplerKind,
) -> Result<FlatnessReport> {
    if grid.is_empty() {
        return Err(Error::invalid("grid must not be empty"));
    }
    if params.n != basis.k + 1 {
        return Err(Error::invalid("matrix size must be k + 1"));
    }
    let k = basis.k;
    let rows: Vec<Result<Vec<f64>>> = sample_map(params, sampler, n, seed, |polar| {
        let s = KahlerPotentialSample::from_polar(polar, k)?;
        grid.iter().map(|z| s.relative_potential(basis, z)).collect()
    })?;
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    let m = grid.len();
    let column = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let averages: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / m as f64).collect();
    let per_point: Vec<EstimatorResult> = (0..m).map(|j| batch_means(&column(j))).collect();
    let deviations: Vec<EstimatorResult> = (0..m)
        .map(|j| batch_means(&rows.iter().zip(&averages).map(|(r, a)| r[j] - a).collect::<Vec<_>>()))
        .collect();
    let max_abs_z = deviations.iter().map(|d| d.z_score(0.0).abs()).fold(0.0, f64::max);
    let manifest = json!({ "seed": seed, "params": params, "sampler": sampler, "n": n, "grid": grid });
    Ok(FlatnessReport { per_point, deviations, offset: batch_means(&averages), max_abs_z, manifest })
}

/// Point pairs with Berezin values strictly decreasing along the list.
#[derive(Debug, Clone, Serialize)]
pub struct TwoPointGrid {
    pub pairs: Vec<PointPair>,
    pub rho: Vec<f64>,
}

impl TwoPointGrid {
    pub fn new(basis: &SectionBasis, pairs: Vec<PointPair>) -> Result<Self> {
        let rho: Vec<f64> = pairs.iter().map(|p| berezin_rho(basis, p)).collect();
        if rho.is_empty() || rho.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::invalid("every pair needs 0 < rho < 1"));
        }
        if rho.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::invalid(format!("rho must decrease strictly along the grid: {rho:?}")));
        }
        Ok(TwoPointGrid { pairs, rho })
    }

    /// Pairs `(0, r_j)` hitting the requested Berezin values for the round model.
    pub fn from_rhos(basis: &SectionBasis, rhos: &[f64]) -> Result<Self> {
        let pairs = rhos
            .iter()
            .enumerate()
            .map(|(i, r)| crate::geometry::pair_at_rho(basis.k, *r, 0.37 * i as f64))
            .collect::<Result<Vec<_>>>()?;
        Self::new(basis, pairs)
    }
}

/// Covariance estimates per pair and differences against the first pair.
#[derive(Debug, Clone, Serialize)]
pub struct TwoPointReport {
    pub rho: Vec<f64>,
    /// `Cov(φ_P(z₁), φ_P(z₂))`
    pub covariance: Vec<EstimatorResult>,
    /// `Cov(first pair) − Cov(pair j)`
    pub differences: Vec<EstimatorResult>,
    /// `(1/k²) ∫_{ρ_j}^{ρ_0} ∂_ρ I dρ`
    pub predicted: Vec<f64>,
    /// `(1/k²) (Li₂(ρ_0) − Li₂(ρ_j))`
    pub predicted_limit: Vec<f64>,
    /// pairs whose error bar exceeds the predicted difference
    pub inconclusive: Vec<bool>,
    pub manifest: Value,
}

/// Estimates `Cov(φ_P(z₁), φ_P(z₂))` for every pair of the grid.
///
/// Differences are computed from `k(φ_P − φ_I) − λ_max`; the removed term enters every pair's
/// covariance identically, so differences are unchanged while their variance drops.
pub fn two_point_covariance(
    params: &HeatParams,
    basis: &SectionBasis,
    grid: &TwoPointGrid,
    n: usize,
    seed: u64,
    sampler: &SamplerKind,
    oracle_tolerance: f64,
) -> Result<TwoPointReport> {
    if params.n != basis.k + 1 {
        return Err(Error::invalid("matrix size must be k + 1"));
    }
    let k = basis.k;
    let kf = k as f64;
    let rows: Vec<Result<Vec<f64>>> = sample_map(params, sampler, n, seed, |polar| {
        let s = KahlerPotentialSample::from_polar(polar, k)?;
        let mut row = vec![s.lambda_max()];
        for pair in &grid.pairs {
            row.push(s.centered_log_ratio(basis, &pair.first)?);
            row.push(s.centered_log_ratio(basis, &pair.second)?);
        }
        Ok(row)
    })?;
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let lmax = col(0);
    let m = grid.pairs.len();
    let mut covariance = Vec::with_capacity(m);
    let mut differences = Vec::with_capacity(m);
    let (y01, y02) = (col(1), col(2));
    let t = params.effective_time();
    let mut predicted = Vec::with_capacity(m);
    let mut predicted_limit = Vec::with_capacity(m);
    let mut inconclusive = Vec::with_capacity(m);
    for j in 0..m {
        let (y1, y2) = (col(1 + 2 * j), col(2 + 2 * j));
        let full1: Vec<f64> = y1.iter().zip(&lmax).map(|(y, l)| (y + l) / kf).collect();
        let full2: Vec<f64> = y2.iter().zip(&lmax).map(|(y, l)| (y + l) / kf).collect();
        covariance.push(covariance_estimate(&full1, &full2));
        let mut d = covariance_difference(&y01, &y02, &y1, &y2);
        d.estimate /= kf * kf;
        d.std_error /= kf * kf;
        let p = if j == 0 { 0.0 } else { bipotential_difference(t, grid.rho[j], grid.rho[0], oracle_tolerance)?.value / (kf * kf) };
        inconclusive.push(j > 0 && d.std_error > p.abs());
        predicted.push(p);
        predicted_limit.push(dilog_difference(grid.rho[j], grid.rho[0]) / (kf * kf));
        differences.push(d);
    }
    let manifest = json!({ "seed": seed, "params": params, "sampler": sampler, "n": n, "pairs": grid.pairs, "rho": grid.rho });
    Ok(TwoPointReport { rho: grid.rho.clone(), covariance, differences, predicted, predicted_limit, inconclusive, manifest })
}

/// Which random ensemble a linear statistic is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Ensemble {
    /// zeros of Gaussian random sections; `X_f = Σ f(roots)`
    Zeros { solver: RootSolver },
    /// heat measure at time `t`; `X_f = (k/2π) ∫ f ω_P`, the same normalization as a root sum
    Heat { t: f64, sampler: SamplerKind },
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceReport {
    pub variance: EstimatorResult,
    pub predicted: f64,
    pub ratio: f64,
    pub laplacian_norm_sq: f64,
    pub samples: Vec<f64>,
}

/// `k^{-1} (ζ(3)/16π) ‖Δf‖²`.
pub fn predicted_smooth_variance(k: usize, f: &ZonalFunction) -> Result<f64> {
    Ok(smooth_variance_constant() * f.laplacian_norm_sq(Tolerance::new(1e-14, 1e-12))? / k as f64)
}

/// Monte Carlo variance of the smooth linear statistic against its large-`k` prediction.
pub fn smooth_variance_check(k: usize, f: &ZonalFunction, n: usize, seed: u64, ensemble: &Ensemble) -> Result<VarianceReport> {
    let samples = match ensemble {
        Ensemble::Zeros { solver } => {
            let req = ZeroStatsRequest { k, n, seed, solver: *solver, set: SphereSet::Whole, function: Some(*f), cells: false };
            zero_statistics(&req)?.smooth
        }
        Ensemble::Heat { t, sampler } => {
            let params = HeatParams::for_power(k, *t)?;
            let basis = SectionBasis::orthonormal(crate::geometry::ManifoldModel::new(k)?);
            let stat = LinearStatistic::Smooth(*f);
            let values: Vec<Result<f64>> = sample_map(&params, sampler, n, seed, |polar| {
                let s = KahlerPotentialSample::from_polar(polar, k)?;
                Ok(linear_statistic_value(&stat, &s, &basis, Tolerance::new(1e-9, 1e-9))? * k as f64 / (2.0 * PI))
            })?;
            values.into_iter().collect::<Result<Vec<f64>>>()?
        }
    };
    let predicted = predicted_smooth_variance(k, f)?;
    let variance = variance_estimate(&samples).with_manifest(json!({ "k": k, "seed": seed, "n": n, "ensemble": ensemble, "function": f }));
    Ok(VarianceReport {
        ratio: variance.estimate / predicted,
        laplacian_norm_sq: f.laplacian_norm_sq(Tolerance::new(1e-14, 1e-12))?,
        variance,
        predicted,
        samples,
    })
}

/// Monte Carlo `∫_{U(N)} exp(μ tr(A U B U†)) dU` for diagonal `A`, `B`; chunk `i` draws from stream `i`.
pub fn haar_average(a: &[f64], b: &[f64], mu: f64, n: usize, seed: u64) -> Result<EstimatorResult> {
    use rayon::prelude::*;
    let dim = a.len();
    if dim == 0 || b.len() != dim {
        return Err(Error::invalid("a and b must be nonempty and of equal length"));
    }
    if n < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    const CHUNK: usize = 4096;
    let values: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = crate::heat_sampler::stream_rng(seed, c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len)
                .map(|_| {
                    let u = crate::linalg::haar_unitary(dim, &mut rng);
                    let mut tr = 0.0;
                    for i in 0..dim {
                        for j in 0..dim {
                            tr += a[i] * b[j] * u[(i, j)].norm_sqr();
                        }
                    }
                    (mu * tr).exp()
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    Ok(mean_estimate(&values).with_manifest(json!({ "a": a, "b": b, "mu": mu, "n": n, "seed": seed })))
}
