use std::sync::Arc;

use clipkde::estimators::{schedule_for, EstimatorId, Evaluator, Mode};
use clipkde::experiments::{
    containment_experiment, draw, gap_experiment, oracle_region, rate_experiment, sup_error,
    DensityModel, ExperimentSetup, GaussianMixture, RateReport,
};

fn gaussian() -> Arc<dyn DensityModel> {
    Arc::new(GaussianMixture::standard(1))
}

fn classical(seed: u64) -> RateReport {
    let g = gaussian();
    let setup = ExperimentSetup::default_for(g.as_ref()).unwrap();
    let n: Vec<usize> = (12..=18).map(|k| 1usize << k).collect();
    rate_experiment(&setup, EstimatorId::Classical, g, &n, 20, seed, Mode::H4).unwrap()
}

#[test]
fn classical_rate_calibrates_the_harness() {
    let reports: Vec<RateReport> = (1..=5).map(classical).collect();
    let slopes: Vec<f64> = reports.iter().map(|r| r.slope).collect();
    for r in &reports {
        assert!((r.slope - 0.4).abs() <= 0.15, "slopes {slopes:?}");
        assert!(r.errors.iter().flatten().all(|e| *e >= 0.0));
        assert_eq!(r.errors.len(), 7);
        assert_eq!(r.replications, 20);
        // doubling n never raises the median error by more than 10%
        for w in r.medians.windows(2) {
            assert!(w[1] <= 1.1 * w[0], "medians {:?}", r.medians);
        }
    }
    let spread = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - slopes.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.1, "slopes {slopes:?}");
}

#[test]
fn gap_is_positive_at_fixed_n() {
    let g = gaussian();
    let setup = ExperimentSetup::default_for(g.as_ref()).unwrap();
    let r = gap_experiment(&setup, g, &[500, 1000, 2000], 3, 9).unwrap();
    assert!(r.errors.iter().flatten().all(|e| *e > 0.0));
}

#[test]
fn sup_error_matches_a_direct_recomputation() {
    let g = gaussian();
    let setup = ExperimentSetup::default_for(g.as_ref()).unwrap();
    let n = 10_000;
    let samples = draw(g.as_ref(), n, 123, 0).unwrap();
    let s = schedule_for(n, 1, Mode::H4).unwrap();
    let field = Evaluator::default()
        .real_mckay(&samples, &setup.kernel, &s, &setup.clip, &setup.grid)
        .unwrap();
    let region = oracle_region(g.as_ref(), setup.r, &setup.clip, &setup.grid).unwrap();
    let got = sup_error(&field, g.as_ref(), &region).unwrap();
    let mut want = 0.0f64;
    for (i, &t) in setup.grid.points().iter().enumerate() {
        let f = g.pdf(&[t]);
        if f > setup.r && t.abs() < 1.0 / setup.r {
            want = want.max((field.values[i] - f).abs());
        }
    }
    assert_eq!(got, want);
}

#[test]
fn estimated_region_is_usually_inside_the_oracle_region() {
    let g = gaussian();
    let setup = ExperimentSetup::default_for(g.as_ref()).unwrap();
    let inside = containment_experiment(&setup, g, 10_000, 50, 77).unwrap();
    let hits = inside.iter().filter(|&&b| b).count();
    assert!(hits >= 48, "{hits}/50");
}

#[test]
fn reports_are_identical_for_any_worker_count() {
    let run = |workers| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        pool.install(|| {
            let g = gaussian();
            let setup = ExperimentSetup::default_for(g.as_ref()).unwrap();
            let r = rate_experiment(&setup, EstimatorId::JkhReal, g, &[1000, 2000, 4000], 3, 5, Mode::H6)
                .unwrap();
            serde_json::to_string(&r.to_json()).unwrap() + &r.raw_csv() + &r.summary_csv()
        })
    };
    assert_eq!(run(1), run(3));
}
