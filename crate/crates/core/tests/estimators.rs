use std::sync::Arc;

use proptest::prelude::*;

use clipkde::clipping::{BetaSpec, ClippingSpec};
use clipkde::estimators::{
    schedule_for, BandwidthSchedule, Engine, EstimateField, Evaluator, Grid, Mode, SampleSet,
};
use clipkde::experiments::{draw, integration_grid, AnalyticDerivatives, DensityModel, GaussianMixture};
use clipkde::kernels::{FourthOrderKernelSpec, RadialKernelSpec};

fn gaussian(d: usize) -> Arc<dyn DensityModel> {
    Arc::new(GaussianMixture::standard(d))
}

fn k1() -> RadialKernelSpec {
    RadialKernelSpec::default_profile(1).unwrap()
}

fn clip() -> ClippingSpec {
    ClippingSpec::mckay(0.1).unwrap()
}

/// `(1/(n h)) Σ w(x) K((t − x) s(x) / h)` written out longhand.
fn longhand(xs: &[f64], t: f64, h: f64, scale: impl Fn(usize) -> f64) -> f64 {
    let k = k1();
    let mut total = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let s = scale(i);
        total += s * k.eval(&[(t - x) * s / h]);
    }
    total / (xs.len() as f64 * h)
}

#[test]
fn real_mckay_matches_longhand_composition() {
    let g = gaussian(1);
    let samples = draw(g.as_ref(), 50, 9, 0).unwrap();
    let xs = samples.points().to_vec();
    let s = BandwidthSchedule::custom_h4(1, 0.5, 0.6).unwrap();
    let grid = Grid::linspace(-3.0, 3.0, 61).unwrap();
    let field = Evaluator::default().real_mckay(&samples, &k1(), &s, &clip(), &grid).unwrap();
    let fhat: Vec<f64> = xs.iter().map(|&x| longhand(&xs, x, 0.5, |_| 1.0)).collect();
    for (q, &t) in grid.points().iter().enumerate() {
        let want = longhand(&xs, t, 0.6, |i| clip().alpha(fhat[i]).unwrap());
        assert!((field.values[q] - want).abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn real_h6_matches_longhand_composition() {
    let g = gaussian(1);
    let samples = draw(g.as_ref(), 50, 42, 0).unwrap();
    let xs = samples.points().to_vec();
    let (h1, h2, h3, h4) = (0.5, 0.45, 0.7, 0.9);
    let s = BandwidthSchedule::custom_h6(h1, h2, h3, h4).unwrap();
    let gk = FourthOrderKernelSpec::new().unwrap();
    let grid = Grid::linspace(-3.0, 3.0, 61).unwrap();
    let field = Evaluator::default()
        .real_jkh(&samples, &k1(), &gk, &s, &clip(), &grid)
        .unwrap();

    let n = xs.len() as f64;
    let m = k1().moments(4).unwrap();
    let (tau2, tau4) = (m.tau(2).unwrap(), m.tau(4).unwrap());
    let c = clip();
    let alphas: Vec<f64> = xs
        .iter()
        .map(|&x| c.alpha(longhand(&xs, x, h1, |_| 1.0)).unwrap())
        .collect();
    let upper = 2.0 * alphas.iter().copied().fold(0.0, f64::max);
    let mut clamps = 0;
    let gamma: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let f = longhand(&xs, x, h1, |_| 1.0);
            let f1: f64 = xs.iter().map(|y| gk.d1((x - y) / h3)).sum::<f64>() / (n * h3 * h3);
            let f2: f64 = xs.iter().map(|y| gk.d2((x - y) / h4)).sum::<f64>() / (n * h4 * h4 * h4);
            let a = c.alpha(f).unwrap();
            let beta = tau4 * (f2 * f - 2.0 * f1 * f1) / (24.0 * tau2 * a.powi(6));
            let denom = 1.0 + h2 * h2 * beta;
            let raw = if denom > 0.0 { a / denom } else { f64::INFINITY };
            let kept = raw.clamp(c.c() / 2.0, upper);
            clamps += usize::from(kept != raw);
            kept
        })
        .collect();
    assert_eq!(field.metadata.clamp_count, clamps);
    for (q, &t) in grid.points().iter().enumerate() {
        let want = longhand(&xs, t, h2, |i| gamma[i]);
        assert!((field.values[q] - want).abs() < 1e-12, "t = {t}");
    }
}

#[test]
fn zero_correction_reduces_to_mckay() {
    let g = gaussian(1);
    let samples = draw(g.as_ref(), 400, 1, 0).unwrap();
    let grid = Grid::linspace(-3.0, 3.0, 101).unwrap();
    let s6 = schedule_for(400, 1, Mode::H6).unwrap();
    let s4 = BandwidthSchedule::custom_h4(1, s6.h1, s6.h2).unwrap();
    let eval = Evaluator::default();
    let gk = FourthOrderKernelSpec::new().unwrap();
    let a = eval
        .real_jkh_with_correction(&samples, &k1(), &gk, &s6, 0.0, &clip(), &grid)
        .unwrap();
    let b = eval.real_mckay(&samples, &k1(), &s4, &clip(), &grid).unwrap();
    assert_eq!(a.values, b.values);
}

fn integral(field: &EstimateField) -> f64 {
    field.integral().unwrap()
}

#[test]
fn ideal_estimators_integrate_to_one() {
    let g = gaussian(1);
    let f = |t: &[f64]| g.pdf(t);
    let eval = Evaluator::default();
    let c = clip();
    for n in [100, 2000] {
        let samples = draw(g.as_ref(), n, 3, 0).unwrap();
        let h = schedule_for(n, 1, Mode::H4).unwrap();
        let grid = integration_grid(&samples, &k1(), h.h1, 1.0, 1.0).unwrap();
        assert!((integral(&eval.classical_kde(&samples, &k1(), h.h1, &grid).unwrap()) - 1.0).abs() < 1e-6);
        let grid = integration_grid(&samples, &k1(), h.h2, c.c(), 0.7).unwrap();
        let mk = eval.ideal_mckay(&samples, &k1(), h.h2, &c, &f, &grid).unwrap();
        assert!((integral(&mk) - 1.0).abs() < 1e-6);
    }
    // the ideal h6 scale needs h2²|β| < 1/2: larger n and c
    let c = ClippingSpec::mckay(0.2).unwrap();
    let n = 20_000;
    let samples = draw(g.as_ref(), n, 3, 0).unwrap();
    let h = schedule_for(n, 1, Mode::H6).unwrap();
    let beta = BetaSpec::from_moments(&k1().moments(4).unwrap(), Arc::new(AnalyticDerivatives(g.clone()))).unwrap();
    let grid = integration_grid(&samples, &k1(), h.h2, 2.0 * c.c() / 3.0, 1.0).unwrap();
    let jk = eval.ideal_jkh(&samples, &k1(), h.h2, &c, &beta, &grid).unwrap();
    assert!((integral(&jk) - 1.0).abs() < 1e-6);
}

#[test]
fn two_dimensional_mckay_integrates_to_one() {
    let g = gaussian(2);
    let k = RadialKernelSpec::default_profile(2).unwrap();
    let samples = draw(g.as_ref(), 500, 4, 0).unwrap();
    let f = |t: &[f64]| g.pdf(t);
    let grid = integration_grid(&samples, &k, 0.6, 0.1, 0.4).unwrap();
    let field = Evaluator::default().ideal_mckay(&samples, &k, 0.6, &clip(), &f, &grid).unwrap();
    assert!((integral(&field) - 1.0).abs() < 1e-4);
}

fn sample_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 1..80)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_leaves_output_bitwise_unchanged(
        xs in sample_strategy(),
        seed in any::<u64>(),
        h in 0.1f64..1.0,
    ) {
        let mut shuffled = xs.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let grid = Grid::linspace(-4.0, 4.0, 33).unwrap();
        let s = BandwidthSchedule::custom_h4(1, h, h * 1.1).unwrap();
        let eval = Evaluator::default();
        let a = eval.real_mckay(&SampleSet::new(1, xs).unwrap(), &k1(), &s, &clip(), &grid).unwrap();
        let b = eval.real_mckay(&SampleSet::new(1, shuffled).unwrap(), &k1(), &s, &clip(), &grid).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn far_samples_do_not_matter(
        xs in sample_strategy(),
        t in -3.0f64..3.0,
        h in 0.05f64..0.5,
    ) {
        let g = gaussian(1);
        let f = |p: &[f64]| g.pdf(p);
        let c = clip();
        let grid = Grid::scattered(1, vec![t]).unwrap();
        let eval = Evaluator::default();
        let full = eval
            .ideal_mckay(&SampleSet::new(1, xs.clone()).unwrap(), &k1(), h, &c, &f, &grid)
            .unwrap();
        let near: Vec<f64> = xs
            .iter()
            .copied()
            .filter(|x| (t - x).abs() * c.c() / h <= k1().support_radius())
            .collect();
        // the normalization counts every sample, so rescale by n
        let value = if near.is_empty() {
            0.0
        } else {
            let part = eval
                .ideal_mckay(&SampleSet::new(1, near.clone()).unwrap(), &k1(), h, &c, &f, &grid)
                .unwrap();
            part.values[0] * near.len() as f64 / xs.len() as f64
        };
        prop_assert!((full.values[0] - value).abs() <= 1e-14 * (1.0 + value.abs()));
    }

    #[test]
    fn bucketed_equals_naive(
        xs in prop::collection::vec(-3.0f64..3.0, 2..120),
        h in 0.05f64..0.8,
    ) {
        let d = 2;
        let samples = SampleSet::new(d, xs[..xs.len() / d * d].to_vec()).unwrap();
        let k = RadialKernelSpec::default_profile(d).unwrap();
        let s = BandwidthSchedule::custom_h4(d, h, h).unwrap();
        let grid = Grid::tensor(vec![
            (0..9).map(|i| -4.0 + i as f64).collect(),
            (0..9).map(|i| -4.0 + i as f64).collect(),
        ]).unwrap();
        let a = Evaluator::new(Engine::Bucketed).real_mckay(&samples, &k, &s, &clip(), &grid).unwrap();
        let b = Evaluator::new(Engine::Naive).real_mckay(&samples, &k, &s, &clip(), &grid).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn density_estimates_are_nonnegative(
        xs in sample_strategy(),
        h in 0.05f64..1.0,
    ) {
        let samples = SampleSet::new(1, xs).unwrap();
        let grid = Grid::linspace(-5.0, 5.0, 101).unwrap();
        let s = BandwidthSchedule::custom_h6(h, h, h * 1.3, h * 1.6).unwrap();
        let gk = FourthOrderKernelSpec::new().unwrap();
        let field = Evaluator::default().real_jkh(&samples, &k1(), &gk, &s, &clip(), &grid).unwrap();
        prop_assert!(field.min_value() >= 0.0);
    }
}
