//! Adaptive Gauss–Kronrod quadrature (7-point Gauss, 15-point Kronrod).
//!
//! Global adaptive bisection in the QUADPACK style: the interval with the
//! largest error estimate is split until the summed estimate meets
//! `max(abs_tol, rel_tol * |I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
        }
    }
}

impl QuadOptions {
    pub fn absolute(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol: 0.0,
            ..Self::default()
        }
    }

    pub fn relative(rel_tol: f64) -> Self {
        Self {
            abs_tol: 0.0,
            rel_tol,
            ..Self::default()
        }
    }
}

/// Value and error estimate of a converged integral.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = err.abs();
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    err
}

fn kronrod15<F>(f: &mut F, a: f64, b: f64) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x)?;
        let f2 = f(center + x)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let error = rescale_error((res_k - res_g) * half, res_abs, res_asc);
    Ok(Segment { a, b, value, error })
}

/// Integrates a fallible integrand over `[a, b]`.
pub fn integrate_fallible<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Quadrature>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let first = kronrod15(&mut f, a, b)?;
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    let mut value = first.value;
    let mut error = first.error;
    heap.push(first);
    let target = |v: f64| opts.abs_tol.max(opts.rel_tol * v.abs());
    let mut splits = 0;
    while error > target(value) {
        if splits >= opts.max_subdivisions {
            return Err(Error::Quadrature {
                achieved: error,
                requested: target(value),
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval collapsed to adjacent floats; nothing left to refine.
            return Err(Error::Quadrature {
                achieved: error,
                requested: target(value),
            });
        }
        let left = kronrod15(&mut f, worst.a, mid)?;
        let right = kronrod15(&mut f, mid, worst.b)?;
        evaluations += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        splits += 1;
        if error <= target(value) {
            // Re-sum to shed drift accumulated by the running updates.
            value = heap.iter().map(|s| s.value).sum();
            error = heap.iter().map(|s| s.error).sum();
        }
    }
    Ok(Quadrature {
        value,
        error,
        evaluations,
    })
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Quadrature>
where
    F: FnMut(f64) -> f64,
{
    integrate_fallible(|x| Ok(f(x)), a, b, opts)
}

/// Integrates over `[a, b]` split at the given interior breakpoints, with the
/// absolute tolerance shared evenly between pieces.
pub fn integrate_pieces<F>(
    mut f: F,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<Quadrature>
where
    F: FnMut(f64) -> Result<f64>,
{
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    let piece_opts = QuadOptions {
        abs_tol: opts.abs_tol / pieces,
        ..opts
    };
    let mut total = Quadrature {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    for w in breaks.windows(2) {
        let q = integrate_fallible(&mut f, w[0], w[1], piece_opts)?;
        total.value += q.value;
        total.error += q.error;
        total.evaluations += q.evaluations;
    }
    Ok(total)
}

/// Iterated adaptive integration over the box `lower × upper` in any
/// dimension. The integrand receives the full point.
pub fn integrate_box<F>(
    f: &mut F,
    lower: &[f64],
    upper: &[f64],
    opts: QuadOptions,
) -> Result<Quadrature>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = lower.len();
    let mut point = vec![0.0; d];
    nested(f, lower, upper, opts, 0, &mut point)
}

fn nested<F>(
    f: &mut F,
    lower: &[f64],
    upper: &[f64],
    opts: QuadOptions,
    axis: usize,
    point: &mut Vec<f64>,
) -> Result<Quadrature>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = lower.len();
    if axis + 1 == d {
        let mut p = point.clone();
        return integrate_fallible(
            |x| {
                p[axis] = x;
                f(&p)
            },
            lower[axis],
            upper[axis],
            opts,
        );
    }
    // Inner integrals must be accurate relative to the outer tolerance.
    let width: f64 = (upper[axis] - lower[axis]).abs().max(1.0);
    let inner = QuadOptions {
        abs_tol: opts.abs_tol / (10.0 * width),
        rel_tol: opts.rel_tol / 10.0,
        ..opts
    };
    let mut evals = 0;
    let q = integrate_fallible(
        |x| {
            point[axis] = x;
            let mut p = point.clone();
            let r = nested(f, lower, upper, inner, axis + 1, &mut p)?;
            evals += r.evaluations;
            Ok(r.value)
        },
        lower[axis],
        upper[axis],
        opts,
    )?;
    Ok(Quadrature {
        evaluations: q.evaluations + evals,
        ..q
    })
}

/// Composite Simpson rule on `m` (even) subintervals.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, m: usize) -> f64 {
    let m = if m % 2 == 1 { m + 1 } else { m.max(2) };
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, QuadOptions::default()).unwrap();
        // ∫ = [x⁴/4 - x² + x] = (4 - 4 + 2) - (1/4 - 1 - 1) = 3.75
        assert!((q.value - 3.75).abs() < 1e-14);
    }

    #[test]
    fn kinked_integrand_converges() {
        let q = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, QuadOptions::absolute(1e-11)).unwrap();
        assert!((q.value - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_tail_mass() {
        let q = integrate(
            |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -40.0,
            40.0,
            QuadOptions::default(),
        )
        .unwrap();
        assert!((q.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_integral_of_separable_function() {
        let mut f = |p: &[f64]| Ok(p[0] * p[0] * p[1].cos());
        let q = integrate_box(&mut f, &[0.0, 0.0], &[1.0, 1.0], QuadOptions::default()).unwrap();
        assert!((q.value - 1.0f64.sin() / 3.0).abs() < 1e-11);
    }

    #[test]
    fn non_convergence_is_reported() {
        let opts = QuadOptions {
            abs_tol: 1e-15,
            rel_tol: 0.0,
            max_subdivisions: 3,
        };
        let err = integrate(|x: f64| (1.0 / x).sin(), 1e-3, 1.0, opts).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }

    #[test]
    fn simpson_matches_cubic() {
        let s = simpson(|x| x * x * x, 0.0, 2.0, 4);
        assert!((s - 4.0).abs() < 1e-14);
    }
}
