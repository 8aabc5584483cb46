//! Globally adaptive Gauss–Kronrod (21-point) integration with error estimates.

use crate::error::{Error, Result};
use serde::Serialize;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_981_000,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel, max_intervals: 2000 }
    }

    pub fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-12, 1e-10)
    }
}

/// Value of an integral together with its error estimate and cost.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureReport {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    floor: f64,
}

fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    let mut abs_sum = kronrod.abs();
    let mut values = [(0.0, 0.0); 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        values[j] = (f1, f2);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((values[j].0 - mean).abs() + (values[j].1 - mean).abs());
    }
    let result = kronrod * half;
    let asc = asc * half.abs();
    let abs_sum = abs_sum * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * abs_sum;
    if abs_sum > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(floor);
    }
    (result, err, floor)
}

/// Integrates `f` over `[a, b]`, splitting the worst interval until the tolerance is met.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadratureReport> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Like [`integrate`] but starts from the partition given by `points` (sorted, at least two).
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    tol: Tolerance,
) -> Result<QuadratureReport> {
    if points.len() < 2 || points.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("integration breakpoints must be strictly increasing"));
    }
    let mut segments: Vec<Segment> = points
        .windows(2)
        .map(|w| {
            let (value, error, floor) = gk21(&mut f, w[0], w[1]);
            Segment { a: w[0], b: w[1], value, error, floor }
        })
        .collect();
    let mut evaluations = 21 * segments.len();
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature { value, error, tolerance: tol.target(value) });
        }
        let floor: f64 = segments.iter().map(|s| s.floor).sum();
        // accept once the estimate is at the rounding floor of the summed values
        if error <= tol.target(value) || error <= 1.5 * floor {
            return Ok(QuadratureReport { value, abs_error_estimate: error, evaluations });
        }
        if segments.len() >= tol.max_intervals {
            return Err(Error::Quadrature { value, error, tolerance: tol.target(value) });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap();
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            // interval can no longer be split in floating point
            return Err(Error::Quadrature { value, error, tolerance: tol.target(value) });
        }
        let (v1, e1, f1) = gk21(&mut f, seg.a, mid);
        let (v2, e2, f2) = gk21(&mut f, mid, seg.b);
        evaluations += 42;
        segments.push(Segment { a: seg.a, b: mid, value: v1, error: e1, floor: f1 });
        segments.push(Segment { a: mid, b: seg.b, value: v2, error: e2, floor: f2 });
    }
}

/// Nested integral over the unit sphere in coordinates `x = cos θ ∈ [-1, 1]`, `φ ∈ [0, 2π]`
/// with the round area element `dx dφ` (total area 4π).
///
/// `x_breaks` and `phi_breaks` are extra break points, for example where the integrand has kinks
/// or integrable singularities.
pub fn sphere_integral<F>(f: F, x_breaks: &[f64], phi_breaks: &[f64], tol: Tolerance) -> Result<QuadratureReport>
where
    F: Fn(f64, f64) -> f64,
{
    let mut points = vec![-1.0];
    let mut inner: Vec<f64> = x_breaks.iter().copied().filter(|x| *x > -1.0 && *x < 1.0).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    points.extend(inner);
    points.push(1.0);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut phi_points = vec![0.0];
    let mut inner_phi: Vec<f64> = phi_breaks.iter().map(|p| p.rem_euclid(two_pi)).filter(|p| *p > 1e-9 && *p < two_pi - 1e-9).collect();
    inner_phi.sort_by(f64::total_cmp);
    inner_phi.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    phi_points.extend(inner_phi);
    phi_points.push(two_pi);
    let inner_tol = Tolerance { abs: tol.abs / 8.0, rel: tol.rel / 8.0, max_intervals: tol.max_intervals };
    let mut evaluations = 0;
    let mut failure = None;
    let outer = integrate_with_breaks(
        |x| match integrate_with_breaks(|phi| f(x, phi), &phi_points, inner_tol) {
            Ok(r) => {
                evaluations += r.evaluations;
                r.value
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        &points,
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let outer = outer?;
    Ok(QuadratureReport { value: outer.value, abs_error_estimate: outer.abs_error_estimate, evaluations })
}

/// Iterated adaptive integral over a box, innermost variable last.
pub fn box_integral<F>(f: &F, bounds: &[(f64, f64)], tol: Tolerance) -> Result<QuadratureReport>
where
    F: Fn(&[f64]) -> f64,
{
    let mut point = vec![0.0; bounds.len()];
    let mut evaluations = 0;
    let value = nested(f, bounds, 0, &mut point, tol, &mut evaluations)?;
    Ok(QuadratureReport { value: value.0, abs_error_estimate: value.1, evaluations })
}

fn nested<F>(
    f: &F,
    bounds: &[(f64, f64)],
    depth: usize,
    point: &mut Vec<f64>,
    tol: Tolerance,
    evaluations: &mut usize,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let (a, b) = bounds[depth];
    if depth + 1 == bounds.len() {
        let r = integrate(
            |x| {
                point[depth] = x;
                f(point)
            },
            a,
            b,
            tol,
        )?;
        *evaluations += r.evaluations;
        return Ok((r.value, r.abs_error_estimate));
    }
    let inner_tol = Tolerance { abs: tol.abs / 4.0, rel: tol.rel / 4.0, max_intervals: tol.max_intervals };
    let mut failure = None;
    let mut inner_error: f64 = 0.0;
    let r = integrate(
        |x| {
            point[depth] = x;
            match nested(f, bounds, depth + 1, point, inner_tol, evaluations) {
                Ok((v, e)) => {
                    inner_error = inner_error.max(e);
                    v
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        a,
        b,
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let r = r?;
    Ok((r.value, r.abs_error_estimate + inner_error * (b - a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_and_smooth() {
        let r = integrate(|x| x * x, 0.0, 3.0, Tolerance::default()).unwrap();
        assert!((r.value - 9.0).abs() < 1e-13);
        let r = integrate(|x| (-x * x).exp(), -10.0, 10.0, Tolerance::default()).unwrap();
        assert!((r.value - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn endpoint_log_singularity() {
        let r = integrate(|x: f64| x.ln(), 0.0, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert!((r.value + 1.0).abs() < 1e-10, "{}", r.value);
    }

    #[test]
    fn sphere_area_and_moment() {
        let tol = Tolerance::new(1e-12, 1e-11);
        let area = sphere_integral(|_, _| 1.0, &[], &[], tol).unwrap();
        assert!((area.value - 4.0 * PI).abs() < 1e-11);
        let m = sphere_integral(|x, _| x * x, &[], &[0.5], tol).unwrap();
        assert!((m.value - 4.0 * PI / 3.0).abs() < 1e-11);
    }

    #[test]
    fn box_gaussian() {
        let f = |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp();
        let r = box_integral(&f, &[(-9.0, 9.0); 3], Tolerance::new(1e-12, 1e-10)).unwrap();
        assert!((r.value - PI.powf(1.5)).abs() < 1e-9);
    }

    #[test]
    fn bad_breaks_rejected() {
        assert!(integrate_with_breaks(|x| x, &[1.0, 0.0], Tolerance::default()).is_err());
    }
}
