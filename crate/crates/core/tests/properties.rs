use bornrate::bound::{empirical_cdf, moment_ratio, sup_deviation, BinningScheme, EmpiricalHistogram, Origin};
use bornrate::density::{cdf, double_slit_density, CdfTable, DensityModel, Gaussian, Recentered, Scaled, SlitGeometry, TabulatedDensity, Uniform};
use bornrate::harness::{geometric_grid, run_convergence_sweep, Experiment, ExperimentConfig};
use bornrate::quadrature::{central_moment, integrate, Interval, QuadratureConfig};
use bornrate::sampler::{bin_events, sample_events, sample_from_table, RngSeed};
use proptest::prelude::*;

fn geometry() -> impl Strategy<Value = SlitGeometry> {
    (30.0..120.0f64, 1.2..6.0f64, 50.0..500.0f64, 20.0..120.0f64, -0.2..0.2f64, 0.1..10.0f64).prop_map(
        |(w, ratio, l, lambda, mu, i0)| SlitGeometry {
            slit_width_nm: w,
            slit_separation_nm: w * ratio,
            screen_distance_mm: l,
            wavelength_pm: lambda,
            center_mm: mu,
            peak_height: i0,
        },
    )
}

fn unit() -> Interval {
    Interval::new(-1.0, 1.0).unwrap()
}

/// Composite Simpson on a fixed grid of `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, iv: Interval, n: usize) -> f64 {
    let h = iv.width() / n as f64;
    let inner: f64 = (1..n).map(|i| f(iv.lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(iv.lo) + f(iv.hi) + inner) * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed),
        ..ProptestConfig::default()
    })]

    #[test]
    fn quadrature_is_linear(a in -5.0..5.0f64, b in -5.0..5.0f64, k in 0.5..8.0f64, p in 0.1..3.0f64) {
        let cfg = QuadratureConfig::default();
        let iv = Interval::new(-1.0, 2.0).unwrap();
        let f = |x: f64| (k * x).sin();
        let g = |x: f64| (-p * x * x).exp();
        let lhs = integrate(|x| a * f(x) + b * g(x), iv, &cfg).unwrap();
        let rhs = a * integrate(f, iv, &cfg).unwrap() + b * integrate(g, iv, &cfg).unwrap();
        let tol = cfg.rel_tol * (lhs.abs() + a.abs() + b.abs()) + cfg.abs_tol;
        prop_assert!((lhs - rhs).abs() <= 10.0 * tol, "{lhs} vs {rhs}");
    }

    #[test]
    fn quadrature_is_additive(lo in -3.0..0.0f64, mid in 0.0..1.0f64, hi in 1.0..4.0f64, k in 0.5..6.0f64) {
        let cfg = QuadratureConfig::default();
        let f = |x: f64| (k * x).cos() * (1.0 + x * x).recip();
        let whole = integrate(f, Interval::new(lo, hi).unwrap(), &cfg).unwrap();
        let parts = integrate(f, Interval::new(lo, mid).unwrap(), &cfg).unwrap()
            + integrate(f, Interval::new(mid, hi).unwrap(), &cfg).unwrap();
        let tol = cfg.rel_tol * (hi - lo) + cfg.abs_tol;
        prop_assert!((whole - parts).abs() <= 10.0 * tol, "{whole} vs {parts}");
    }

    #[test]
    fn absolute_moments_are_non_negative(g in geometry(), k in 2u32..4) {
        let d = double_slit_density(g).unwrap();
        let m = central_moment(&d, k, true, unit(), &QuadratureConfig::default()).unwrap();
        prop_assert!(m >= 0.0);
    }

    #[test]
    fn double_slit_is_non_negative_and_vanishes_at_zeros(g in geometry()) {
        let d = double_slit_density(g).unwrap();
        let s = d.support();
        let n = 100_000;
        for i in 0..=n {
            let t = s.lo + s.width() * i as f64 / n as f64;
            prop_assert!(d.evaluate(t) >= 0.0);
        }
        for z in d.analytic_zeros() {
            prop_assert!(d.evaluate(z) < 1e-12 * g.peak_height, "zero at {z}: {}", d.evaluate(z));
        }
    }

    #[test]
    fn cdf_is_monotone(g in geometry()) {
        let d = double_slit_density(g).unwrap();
        let table = CdfTable::new(&d, unit(), &QuadratureConfig::default()).unwrap();
        let mut last = 0.0;
        for i in 0..=10_000 {
            let x = -1.0 + 2.0 * i as f64 / 10_000.0;
            let f = table.cdf(x).unwrap();
            prop_assert!(f >= last);
            last = f;
        }
        prop_assert!((last - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_ignores_density_scale(g in geometry(), x in -1.0..1.0f64) {
        let cfg = QuadratureConfig::default();
        let d = double_slit_density(g).unwrap();
        let base = cdf(&d, unit(), x, &cfg).unwrap();
        for a in [1e-6, 1.0, 1e6] {
            let scaled = Scaled { inner: &d, factor: a };
            let v = cdf(&scaled, unit(), x, &cfg).unwrap();
            prop_assert!((v - base).abs() <= 1e-9 * base.max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn moment_ratio_is_at_least_one(g in geometry(), sigma in 0.02..3.0f64, c in -0.5..0.5f64) {
        let cfg = QuadratureConfig::default();
        let d = double_slit_density(g).unwrap();
        let centered = unit().relative_to(g.center_mm);
        let moved = Recentered { inner: &d, center: g.center_mm };
        prop_assert!(moment_ratio(&moved, centered, &cfg).unwrap() >= 1.0);
        let gauss = Gaussian::new(c, sigma, 1.0, unit()).unwrap();
        prop_assert!(moment_ratio(&gauss, unit(), &cfg).unwrap() >= 1.0);
        let tab = TabulatedDensity::sample(&d, unit(), 257).unwrap();
        prop_assert!(moment_ratio(&tab, unit(), &cfg).unwrap() >= 1.0);
    }

    #[test]
    fn edge_sup_matches_brute_force(counts in prop::collection::vec(0u64..40, 1..16), from_b in any::<bool>()) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let cfg = QuadratureConfig::default();
        let d = double_slit_density(SlitGeometry::default()).unwrap();
        let table = CdfTable::new(&d, unit(), &cfg).unwrap();
        let origin = if from_b { Origin::FromB } else { Origin::FromA };
        let scheme = BinningScheme::new(counts.len(), origin, unit()).unwrap();
        let h = EmpiricalHistogram::new(scheme, counts.clone()).unwrap();
        let edge_sup = sup_deviation(&h, &table).unwrap();
        // independent, finer table as the oracle
        let fine = CdfTable::with_cells(&d, unit(), 65_536, &cfg).unwrap();
        let mut brute: f64 = 0.0;
        let mut widest: f64 = 0.0;
        let per_bin = 1000;
        let bins = counts.len();
        for k in 0..bins {
            let lo = -1.0 + 2.0 * k as f64 / bins as f64;
            let hi = -1.0 + 2.0 * (k + 1) as f64 / bins as f64;
            widest = widest.max(fine.cdf(hi).unwrap() - fine.cdf(lo).unwrap());
            for i in 0..per_bin {
                let x = lo + (hi - lo) * i as f64 / per_bin as f64;
                let below = fine.cdf(x).unwrap();
                let theory = if from_b { 1.0 - below } else { below };
                brute = brute.max((empirical_cdf(&h, x).unwrap() - theory).abs());
            }
        }
        prop_assert!((brute - edge_sup).abs() <= widest + 1e-12, "brute {brute} edge {edge_sup} widest {widest}");
    }

    #[test]
    fn inverse_cdf_is_monotone(g in geometry(), u1 in 0.0..1.0f64, u2 in 0.0..1.0f64) {
        let d = double_slit_density(g).unwrap();
        let table = CdfTable::new(&d, unit(), &QuadratureConfig::default()).unwrap();
        let (a, b) = if u1 < u2 { (u1, u2) } else { (u2, u1) };
        prop_assert!(table.inverse(a).unwrap() <= table.inverse(b).unwrap());
    }

    #[test]
    fn simpson_oracle_discrepancy_never_grows(k in 1.0..20.0f64, p in 0.5..4.0f64) {
        let f = |x: f64| (k * x).sin().powi(2) * (-p * x * x).exp();
        let iv = Interval::new(-2.0, 2.0).unwrap();
        let oracle = simpson(f, iv, 1_000_000);
        let mut last = f64::INFINITY;
        let mut tol = 1e-4;
        while tol >= 1e-11 {
            let cfg = QuadratureConfig { rel_tol: tol, abs_tol: 0.0, ..QuadratureConfig::default() };
            let err = (integrate(f, iv, &cfg).unwrap() - oracle).abs();
            // Once the achieved error is far below the request, a new paneling
            // can move it slightly either way; only growth that matters at the
            // requested tolerance counts.
            let slack = (1e3 * f64::EPSILON).max(1e-2 * tol) * oracle.abs();
            prop_assert!(err <= last + slack, "tol {tol}: {err} > {last}");
            last = err;
            tol /= 2.0;
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x + 1.0) / 2.0;
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn dkw_pass_rate(seeds: std::ops::Range<u64>) -> usize {
    let cfg = QuadratureConfig::default();
    let d = Uniform::new(unit(), 1.0).unwrap();
    let table = CdfTable::new(&d, unit(), &cfg).unwrap();
    let n = 100_000;
    seeds
        .filter(|&s| {
            let xs = sample_from_table(&table, n, RngSeed(s)).unwrap().into_iter().map(|e| e.position).collect();
            ks_uniform(xs) < 1.95 / (n as f64).sqrt()
        })
        .count()
}

#[test]
fn uniform_samples_pass_dkw_in_two_seed_blocks() {
    let a = dkw_pass_rate(0..100);
    let b = dkw_pass_rate(100..200);
    assert!(a >= 95, "block A {a}/100");
    assert!(b >= 95, "block B {b}/100");
}

#[test]
fn per_bin_counts_stay_within_five_sigma() {
    let cfg = QuadratureConfig::default();
    let d = Uniform::new(unit(), 1.0).unwrap();
    let n = 100_000u64;
    let events = sample_events(&d, unit(), n as usize, RngSeed(42), &cfg).unwrap();
    let h = bin_events(&events, BinningScheme::new(10, Origin::FromA, unit()).unwrap()).unwrap();
    let sigma = (n as f64 * 0.1 * 0.9).sqrt();
    for c in &h.counts {
        assert!((*c as f64 - n as f64 / 10.0).abs() <= 5.0 * sigma, "{c}");
    }
    assert_eq!(h.counts.iter().sum::<u64>(), n);
}

#[test]
fn doubling_n_shrinks_median_deviation_like_root_n() {
    let cfg = ExperimentConfig::default();
    let d = cfg.density().unwrap();
    let e = Experiment::prepare(&d, cfg.geometry.center_mm, &cfg).unwrap();
    let ns = [1000u64, 2000, 4000, 8000];
    let seeds: Vec<u64> = (0..100).collect();
    let report = e.run(&ns, &[10], &[Origin::FromA], &seeds).unwrap();
    let medians: Vec<f64> = ns
        .iter()
        .map(|&n| median(report.rows.iter().filter(|r| r.report.n == n).map(|r| r.report.sup_deviation).collect()))
        .collect();
    for w in medians.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.6..=0.85).contains(&ratio), "ratio {ratio} from {medians:?}");
    }
}

#[test]
fn sweep_slope_is_stable_across_seed_blocks() {
    let cfg = ExperimentConfig::default();
    let grid = geometric_grid(100, 100_000, 10);
    let a = run_convergence_sweep(&cfg, &grid, &(0..30).collect::<Vec<_>>()).unwrap().slope();
    let b = run_convergence_sweep(&cfg, &grid, &(500..530).collect::<Vec<_>>()).unwrap().slope();
    assert!((a - b).abs() < 0.05, "{a} vs {b}");
}
