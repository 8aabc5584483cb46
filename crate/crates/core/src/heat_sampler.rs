//! Samplers for the heat-kernel measure on positive Hermitian matrices of unit determinant.
//!
//! The radial density on `Σλ = 0` is `Δ(λ) Δ(e^λ) e^{-|λ|²/4t}` and the angular part is Haar.
//! Two samplers are provided: a Metropolis chain on the eigenvalues paired with Haar unitaries,
//! and a geodesic random walk started at the identity.

use crate::error::{Error, Result};
use crate::linalg::{
    c64, haar_unitary as haar_with_rng, helmert_frame, hermitian_eigen, hermitian_function, jacobi_svd,
    traceless_hermitian_gaussian, C64,
};
use crate::matrix_metric::{delta_n, PolarCoords, PositiveMatrix};
use crate::special::log_abs_exp_diff;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeScaling {
    Raw,
    /// time multiplied by `ε_k^{-2} = k² N`
    Mabuchi { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatParams {
    pub n: usize,
    pub t: f64,
    pub scaling: TimeScaling,
}

impl HeatParams {
    pub fn raw(n: usize, t: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("matrix size N must be at least 2"));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("diffusion time must be positive, got {t}")));
        }
        Ok(HeatParams { n, t, scaling: TimeScaling::Raw })
    }

    /// Ensemble for the line bundle power `k` (`N = k + 1`) at raw time `t`.
    pub fn for_power(k: usize, t: f64) -> Result<Self> {
        Self::raw(k + 1, t)
    }

    pub fn mabuchi(k: usize, t: f64) -> Result<Self> {
        let mut p = Self::raw(k + 1, t)?;
        p.scaling = TimeScaling::Mabuchi { k };
        Ok(p)
    }

    /// `ε_k = 1 / (k sqrt(N_k))`.
    pub fn epsilon(k: usize) -> f64 {
        1.0 / (k as f64 * ((k + 1) as f64).sqrt())
    }

    /// The time actually entering the heat kernel.
    pub fn effective_time(&self) -> f64 {
        match self.scaling {
            TimeScaling::Raw => self.t,
            TimeScaling::Mabuchi { k } => self.t * (k * k * (k + 1)) as f64,
        }
    }
}

/// Normalizing constant `C(t, N)` of the heat measure.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HeatNormalization {
    pub log_value: f64,
    pub value: f64,
}

/// `C = sqrt(N) / (2π (4πt)^{(N²-1)/2}) e^{-t N (N²-1)/12}`, evaluated in the log domain.
pub fn heat_normalization(params: &HeatParams) -> HeatNormalization {
    let n = params.n as f64;
    let t = params.effective_time();
    let log_value = 0.5 * n.ln() - (2.0 * PI).ln() - 0.5 * (n * n - 1.0) * (4.0 * PI * t).ln() - t * delta_norm_sq(params.n);
    HeatNormalization { log_value, value: log_value.exp() }
}

/// `|δ_N|² = N (N² - 1) / 12`.
pub fn delta_norm_sq(n: usize) -> f64 {
    let n = n as f64;
    n * (n * n - 1.0) / 12.0
}

/// `log[Δ(λ) Δ(e^λ) e^{-|λ|²/4t}]` with both Vandermonde factors taken in absolute value.
pub fn eigen_log_density(lambda: &[f64], params: &HeatParams) -> f64 {
    let t = params.effective_time();
    let mut acc = 0.0;
    for i in 0..lambda.len() {
        for j in (i + 1)..lambda.len() {
            let gap = (lambda[i] - lambda[j]).abs();
            if gap == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += gap.ln() + log_abs_exp_diff(lambda[i], lambda[j]);
        }
    }
    acc - lambda.iter().map(|l| l * l).sum::<f64>() / (4.0 * t)
}

/// Haar unitary from a seed.
pub fn haar_unitary(n: usize, seed: u64) -> DMatrix<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_with_rng(n, &mut rng)
}

/// Random-number stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    /// proposal scale in hyperplane coordinates; chosen from `t` when absent
    pub initial_step: Option<f64>,
    pub target_acceptance: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { burn_in: 4000, thin: 4, chains: 4, initial_step: None, target_acceptance: 0.3 }
    }
}

/// State of one Markov chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub x: DVector<f64>,
    pub lambda: Vec<f64>,
    pub log_density: f64,
    pub step: f64,
    pub steps_taken: usize,
    pub accepted: usize,
    /// acceptance over the last tuning window
    pub tuned_rate: f64,
    pub seed: u64,
    pub chain: u64,
}

impl ChainState {
    pub fn acceptance_rate(&self) -> f64 {
        if self.steps_taken == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps_taken as f64
        }
    }
}

/// Output of a Metropolis run.
#[derive(Debug, Clone)]
pub struct McmcRun<T> {
    pub samples: Vec<T>,
    pub acceptance: Vec<f64>,
    pub steps: Vec<f64>,
}

/// `log π(to) - log π(from)` of the Metropolis acceptance test.
pub fn metropolis_log_ratio(params: &HeatParams, from: &[f64], to: &[f64]) -> f64 {
    eigen_log_density(to, params) - eigen_log_density(from, params)
}

struct Chain<'a> {
    params: &'a HeatParams,
    frame: &'a DMatrix<f64>,
    rng: ChaCha8Rng,
    state: ChainState,
}

impl<'a> Chain<'a> {
    fn new(params: &'a HeatParams, frame: &'a DMatrix<f64>, cfg: &McmcConfig, seed: u64, chain: u64) -> Self {
        let t = params.effective_time();
        let start: Vec<f64> = delta_n(params.n).iter().map(|d| 2.0 * t * d).collect();
        let x = frame.transpose() * DVector::from_column_slice(&start);
        let lambda: Vec<f64> = (frame * &x).iter().copied().collect();
        let dim = (params.n - 1) as f64;
        let step = cfg.initial_step.unwrap_or(2.4 * (2.0 * t).sqrt().min(1.0 + t.sqrt()) / dim.sqrt());
        let log_density = eigen_log_density(&lambda, params);
        Chain {
            params,
            frame,
            rng: stream_rng(seed, 2 * chain),
            state: ChainState { x, lambda, log_density, step, steps_taken: 0, accepted: 0, tuned_rate: 1.0, seed, chain },
        }
    }

    fn advance(&mut self) {
        let d = self.state.x.len();
        let proposal = DVector::from_fn(d, |_, _| {
            let g: f64 = self.rng.sample(StandardNormal);
            g
        }) * self.state.step
            + &self.state.x;
        let lambda: Vec<f64> = (self.frame * &proposal).iter().copied().collect();
        let log_density = eigen_log_density(&lambda, self.params);
        self.state.steps_taken += 1;
        let log_u: f64 = self.rng.random::<f64>().ln();
        if log_density > f64::NEG_INFINITY && log_u < log_density - self.state.log_density {
            self.state.x = proposal;
            self.state.lambda = lambda;
            self.state.log_density = log_density;
            self.state.accepted += 1;
        }
    }

    fn burn_in(&mut self, cfg: &McmcConfig) {
        let window = 100;
        let mut done = 0;
        while done < cfg.burn_in {
            let before = self.state.accepted;
            let len = window.min(cfg.burn_in - done);
            for _ in 0..len {
                self.advance();
            }
            done += len;
            let rate = (self.state.accepted - before) as f64 / len as f64;
            self.state.step *= (2.0 * (rate - cfg.target_acceptance)).exp();
            self.state.tuned_rate = rate;
        }
        self.state.steps_taken = 0;
        self.state.accepted = 0;
    }
}

fn chain_counts(n: usize, chains: usize) -> Vec<usize> {
    (0..chains).map(|c| n / chains + usize::from(c < n % chains)).collect()
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Runs the eigenvalue chains and maps each retained state (with a fresh Haar unitary) through `f`.
///
/// Chains run in parallel on derived streams; results are concatenated in chain order.
pub fn mcmc_map<T, F>(params: &HeatParams, n: usize, seed: u64, cfg: &McmcConfig, with_unitary: bool, f: F) -> Result<McmcRun<T>>
where
    T: Send,
    F: Fn(PolarCoords) -> T + Sync,
{
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    if cfg.chains == 0 || cfg.thin == 0 {
        return Err(Error::invalid("chains and thinning must be positive"));
    }
    let frame = helmert_frame(params.n);
    let counts = chain_counts(n, cfg.chains);
    let results: Vec<Result<(Vec<T>, f64, f64)>> = counts
        .par_iter()
        .enumerate()
        .map(|(c, &count)| {
            let mut chain = Chain::new(params, &frame, cfg, seed, c as u64);
            chain.burn_in(cfg);
            let mut haar_rng = stream_rng(seed, 2 * c as u64 + 1);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                for _ in 0..cfg.thin {
                    chain.advance();
                }
                let lambda = sorted_desc(chain.state.lambda.clone());
                let unitary = if with_unitary {
                    haar_with_rng(params.n, &mut haar_rng)
                } else {
                    DMatrix::identity(params.n, params.n)
                };
                out.push(f(PolarCoords { lambda, unitary }));
            }
            // short runs are judged by the tuning window
            let rate = if chain.state.steps_taken >= 200 { chain.state.acceptance_rate() } else { chain.state.tuned_rate };
            if count > 0 && rate < 0.05 {
                return Err(Error::Sampler(format!("chain {c}: acceptance {rate:.3} below 5% after tuning")));
            }
            Ok((out, rate, chain.state.step))
        })
        .collect();
    let mut run = McmcRun { samples: Vec::with_capacity(n), acceptance: vec![], steps: vec![] };
    for r in results {
        let (out, rate, step) = r?;
        run.samples.extend(out);
        run.acceptance.push(rate);
        run.steps.push(step);
    }
    Ok(run)
}

/// Polar samples of the heat measure from the eigenvalue chain and independent Haar unitaries.
pub fn mcmc_sample(params: &HeatParams, n: usize, seed: u64, cfg: &McmcConfig) -> Result<McmcRun<PolarCoords>> {
    mcmc_map(params, n, seed, cfg, true, |p| p)
}

/// Eigenvalues only, descending.
pub fn mcmc_eigenvalues(params: &HeatParams, n: usize, seed: u64, cfg: &McmcConfig) -> Result<McmcRun<Vec<f64>>> {
    mcmc_map(params, n, seed, cfg, false, |p| p.lambda)
}

/// `max(100, ceil(50 t))`.
pub fn default_steps(t: f64) -> usize {
    100.max((50.0 * t).ceil() as usize)
}

/// One walk `X ← X^{1/2} exp(√h W) X^{1/2}` from the identity, kept in polar form throughout.
///
/// `W` has i.i.d. `N(0, 2)` coordinates in an orthonormal frame of traceless Hermitian matrices.
/// Each step diagonalizes `e^{Λ/2} E e^{Λ/2}` through a one-sided Jacobi SVD of `E^{1/2} e^{(Λ-λ_max)/2}`.
pub fn brownian_polar<R: Rng + ?Sized>(params: &HeatParams, steps: usize, rng: &mut R) -> Result<PolarCoords> {
    if steps == 0 {
        return Err(Error::invalid("the walk needs at least one step"));
    }
    let n = params.n;
    let h = params.effective_time() / steps as f64;
    let root_h = h.sqrt();
    let mut lambda = vec![0.0; n];
    let mut v = DMatrix::<C64>::identity(n, n);
    for m in 0..steps {
        let w = traceless_hermitian_gaussian(n, 2.0, rng);
        let (wv, wq) = hermitian_eigen(&w);
        let half = hermitian_function(&wv, &wq, |x| (0.5 * root_h * x).exp());
        let top = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut g = half;
        for (j, l) in lambda.iter().enumerate() {
            let s = ((l - top) * 0.5).exp();
            for i in 0..n {
                g[(i, j)] *= s;
            }
        }
        let svd = jacobi_svd(&g)?;
        let mut next = Vec::with_capacity(n);
        for &sigma in &svd.singular_values {
            let l = 2.0 * sigma.ln() + top;
            if !(sigma > 0.0) || !l.is_finite() {
                return Err(Error::Step(format!("walk step {m} lost an eigenvalue; reduce the step size")));
            }
            next.push(l);
        }
        let mean = next.iter().sum::<f64>() / n as f64;
        next.iter_mut().for_each(|l| *l -= mean);
        lambda = next;
        v = &v * &svd.v;
        if m % 32 == 31 {
            v = reorthonormalize(&v);
        }
    }
    let v = reorthonormalize(&v);
    PolarCoords::new(lambda, v.adjoint())
}

fn reorthonormalize(v: &DMatrix<C64>) -> DMatrix<C64> {
    let qr = v.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
        for i in 0..q.nrows() {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Endpoint of one geodesic random walk of `steps` steps, as a unit-determinant matrix.
pub fn brownian_sample(params: &HeatParams, steps: usize, seed: u64) -> Result<PositiveMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    brownian_polar(params, steps, &mut rng)?.to_matrix()
}

/// `n` independent walks; walk `i` uses stream `i` of `seed`.
pub fn brownian_map<T, F>(params: &HeatParams, steps: usize, n: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(PolarCoords) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            brownian_polar(params, steps, &mut rng).map(&f)
        })
        .collect()
}

/// Choice of sampler for the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Mcmc(McmcConfig),
    Brownian { steps: Option<usize> },
}

impl Default for SamplerKind {
    fn default() -> Self {
        SamplerKind::Mcmc(McmcConfig::default())
    }
}

/// Maps `n` heat-measure samples through `f` with the chosen sampler.
pub fn sample_map<T, F>(params: &HeatParams, kind: &SamplerKind, n: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(PolarCoords) -> T + Sync,
{
    match kind {
        SamplerKind::Mcmc(cfg) => Ok(mcmc_map(params, n, seed, cfg, true, f)?.samples),
        SamplerKind::Brownian { steps } => {
            let steps = steps.unwrap_or_else(|| default_steps(params.effective_time()));
            brownian_map(params, steps, n, seed, f)
        }
    }
}

/// Position of an eigenvalue vector relative to the concentration cone around `δ_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub radius: f64,
    pub angle: f64,
    pub expected_radius: f64,
}

pub fn concentration_report(sample: &PolarCoords, params: &HeatParams) -> ConcentrationReport {
    let mut ascending = sample.lambda.clone();
    ascending.sort_by(f64::total_cmp);
    let delta = delta_n(params.n);
    let radius = ascending.iter().map(|l| l * l).sum::<f64>().sqrt();
    let delta_norm = delta_norm_sq(params.n).sqrt();
    let angle = if radius == 0.0 {
        PI / 2.0
    } else {
        let dot: f64 = ascending.iter().zip(&delta).map(|(l, d)| l * d).sum();
        (dot / (radius * delta_norm)).clamp(-1.0, 1.0).acos()
    };
    ConcentrationReport { radius, angle, expected_radius: 2.0 * delta_norm * params.effective_time() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};

    #[test]
    fn normalization_n2() {
        let p = HeatParams::raw(2, 0.7).unwrap();
        let expected = 0.5 * 2f64.ln() - (2.0 * PI).ln() - 1.5 * (4.0 * PI * 0.7).ln() - 0.7 / 2.0;
        assert!((heat_normalization(&p).log_value - expected).abs() < 1e-14);
        assert_eq!(delta_norm_sq(4), 5.0);
    }

    #[test]
    fn params_validation_and_scaling() {
        assert!(HeatParams::raw(1, 1.0).is_err());
        assert!(HeatParams::raw(3, 0.0).is_err());
        let m = HeatParams::mabuchi(4, 0.5).unwrap();
        let eps = HeatParams::epsilon(4);
        assert!((m.effective_time() - 0.5 / (eps * eps)).abs() < 1e-10);
    }

    #[test]
    fn log_density_examples() {
        let p = HeatParams::raw(2, 1.3).unwrap();
        let a: f64 = 0.8;
        let expected = (2.0 * a * (a.exp() - (-a).exp())).ln() - a * a / (2.0 * 1.3);
        assert!((eigen_log_density(&[a, -a], &p) - expected).abs() < 1e-13);
        assert!((eigen_log_density(&[-a, a], &p) - expected).abs() < 1e-13);
        assert_eq!(eigen_log_density(&[0.0, 0.0], &p), f64::NEG_INFINITY);
    }

    #[test]
    fn detailed_balance_on_frozen_segment() {
        let p = HeatParams::raw(3, 1.0).unwrap();
        let frame = helmert_frame(3);
        let mut chain = Chain::new(&p, &frame, &McmcConfig::default(), 9, 0);
        let mut states = vec![chain.state.lambda.clone()];
        for _ in 0..50 {
            chain.advance();
            states.push(chain.state.lambda.clone());
        }
        for pair in states.windows(2) {
            let (x, y) = (&pair[0], &pair[1]);
            let flow_xy = eigen_log_density(x, &p) + metropolis_log_ratio(&p, x, y).min(0.0);
            let flow_yx = eigen_log_density(y, &p) + metropolis_log_ratio(&p, y, x).min(0.0);
            assert!((flow_xy - flow_yx).abs() < 1e-10);
        }
    }

    #[test]
    fn mcmc_n2_mean_matches_quadrature() {
        let t = 1.0;
        let p = HeatParams::raw(2, t).unwrap();
        let run = mcmc_eigenvalues(&p, 20_000, 42, &McmcConfig::default()).unwrap();
        let xs: Vec<f64> = run.samples.iter().map(|l| l[0]).collect();
        let w = |a: f64| a * a.sinh() * (-a * a / (2.0 * t)).exp();
        let tol = Tolerance::new(1e-13, 1e-12);
        let z = integrate(w, 0.0, 40.0, tol).unwrap().value;
        let m = integrate(|a| a * w(a), 0.0, 40.0, tol).unwrap().value / z;
        let est = crate::statistics::mean_estimate(&xs);
        assert!((est.estimate - m).abs() < 3.0 * est.std_error, "{} vs {m} (se {})", est.estimate, est.std_error);
        assert!(run.acceptance.iter().all(|a| (0.15..0.5).contains(a)), "{:?}", run.acceptance);
    }

    #[test]
    fn mcmc_is_reproducible_and_sums_to_zero() {
        let p = HeatParams::raw(3, 0.5).unwrap();
        let a = mcmc_sample(&p, 50, 5, &McmcConfig::default()).unwrap();
        let b = mcmc_sample(&p, 50, 5, &McmcConfig::default()).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x, y);
            assert!(x.lambda.iter().sum::<f64>().abs() < 1e-8);
        }
    }

    #[test]
    fn walk_at_zero_time_is_identity() {
        let p = HeatParams::raw(3, 1e-300).unwrap();
        let m = brownian_sample(&p, 10, 1).unwrap();
        let id = DMatrix::<C64>::identity(3, 3);
        assert!(crate::linalg::max_abs(&(m.entries() - id)) < 1e-12);
    }

    #[test]
    fn walk_keeps_unit_determinant() {
        let p = HeatParams::raw(4, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let polar = brownian_polar(&p, 200, &mut rng).unwrap();
        assert!(polar.lambda.iter().sum::<f64>().abs() < 1e-8);
        assert!(crate::linalg::unitarity_defect(&polar.unitary) < 1e-12);
    }

    #[test]
    fn concentration_on_axis() {
        let p = HeatParams::raw(4, 2.0).unwrap();
        let lambda: Vec<f64> = delta_n(4).iter().rev().map(|d| 3.0 * d).collect();
        let r = concentration_report(&PolarCoords::new(lambda, DMatrix::identity(4, 4)).unwrap(), &p);
        assert!(r.angle.abs() < 1e-7);
        assert!((r.expected_radius - 4.0 * 5f64.sqrt()).abs() < 1e-12);
    }
}
