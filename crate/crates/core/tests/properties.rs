use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qvol::experiments::{read_rank_distribution, write_rank_distribution};
use qvol::fit::{
    chisq_fit, chisq_objective, constrained_chisq_fit, csn_fit, expected_bin_counts, fit_binned,
    fit_continuous, nls_zipf_fit, BinnedFitInputs, FitMethod,
};
use qvol::io::read_continuous;
use qvol::model::{
    estimate_query_count, estimate_total_volume, expected_volume, total_volume, PopulationSpec,
    ZipfParams,
};
use qvol::numerics::{ks_statistic, nls_solve, zipf_mass, FnResiduals, SolverOptions};
use qvol::report::report_table;
use qvol::sampling::{
    apply_noise, apply_sketch, draw_seeded_sample, BiasParams, BinnedSample, BinningScheme,
    ContinuousSample, SamplingConfig, Scheme,
};
use qvol::uncertainty::{count_error, volume_error, ParamErrors};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn params() -> impl Strategy<Value = ZipfParams> {
    (1.0f64..6.0, 0.3f64..2.0)
        .prop_filter("away from the harmonic pole", |(_, b)| (b - 1.0).abs() > 1e-3)
        .prop_map(|(lc, beta)| ZipfParams::new(10f64.powf(lc), beta).unwrap())
}

fn volumes(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..6.0, len).prop_map(|logs| logs.into_iter().map(|l| 10f64.powf(l)).collect())
}

fn ladder() -> impl Strategy<Value = BinningScheme> {
    (0.1f64..100.0, 1.1f64..3.0, 3usize..40)
        .prop_map(|(floor, ratio, m)| BinningScheme::new(floor, floor * ratio, ratio, m).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zipf_mass_monotone(beta in 0.3f64..2.5, x in 1.5f64..1e6, dx in 0.01f64..1e3, db in 1e-3f64..0.5) {
        let s = zipf_mass(beta, x).unwrap();
        prop_assert!(zipf_mass(beta, x + dx).unwrap() > s);
        prop_assert!(zipf_mass(beta + db, x).unwrap() < s);
    }

    #[test]
    fn nls_solve_recovers_exact_model(lc in 1.0f64..6.0, beta in 0.3f64..2.0) {
        let c = 10f64.powf(lc);
        let data: Vec<f64> = (1..=50).map(|i| c / (i as f64).powf(beta)).collect();
        let problem = FnResiduals::new(50, |p: [f64; 2]| {
            data.iter().enumerate().map(|(i, v)| v - p[0] / ((i + 1) as f64).powf(p[1])).collect()
        });
        let sol = nls_solve(&problem, [c * 1.2, beta * 0.9], &SolverOptions::default()).unwrap();
        prop_assert!(rel(sol.params[0], c) <= 1e-6, "c {} vs {c}", sol.params[0]);
        prop_assert!(rel(sol.params[1], beta) <= 1e-6, "beta {} vs {beta}", sol.params[1]);
    }

    #[test]
    fn ks_invariant_under_monotone_maps(mut data in prop::collection::vec(0.01f64..20.0, 1..200), rate in 0.05f64..3.0) {
        data.sort_by(f64::total_cmp);
        let cdf = |x: f64| 1.0 - (-rate * x).exp();
        let direct = ks_statistic(&data, cdf).unwrap();
        let logs: Vec<f64> = data.iter().map(|x| x.ln()).collect();
        let mapped = ks_statistic(&logs, |y: f64| cdf(y.exp())).unwrap();
        prop_assert!((direct - mapped).abs() <= 1e-12);
    }

    #[test]
    fn estimates_monotone_in_threshold_and_intercept(p in params(), f1 in -3.0f64..-0.01, df in 0.01f64..2.0, k in 1.01f64..10.0) {
        let (v1, v2) = (p.c * 10f64.powf(f1 - df), p.c * 10f64.powf(f1));
        prop_assert!(estimate_query_count(p, v1) > estimate_query_count(p, v2));
        prop_assert!(estimate_total_volume(p, v1).unwrap() > estimate_total_volume(p, v2).unwrap());
        let bigger = ZipfParams { c: p.c * k, ..p };
        prop_assert!(estimate_query_count(bigger, v2) > estimate_query_count(p, v2));
        prop_assert!(estimate_total_volume(bigger, v2).unwrap() > estimate_total_volume(p, v2).unwrap());
    }

    #[test]
    fn threshold_volume_bounded_by_total(p in params(), n in 10u64..1_000_000, lift in 0.0f64..3.0) {
        let spec = PopulationSpec::new(p, n).unwrap();
        let total = total_volume(&spec).unwrap();
        let at_floor = estimate_total_volume(p, spec.min_volume).unwrap();
        prop_assert!(rel(at_floor, total) <= 1e-9, "{at_floor} vs {total}");
        let above = estimate_total_volume(p, spec.min_volume * 10f64.powf(lift)).unwrap();
        prop_assert!(above <= total * (1.0 + 1e-12));
    }

    #[test]
    fn count_round_trip(p in params(), n in 1u64..10_000_000) {
        let back = estimate_query_count(p, expected_volume(p, n));
        prop_assert!(rel(back, n as f64) <= 1e-9);
    }

    #[test]
    fn errors_linear_nonnegative_and_decreasing(
        p in params(), f in -4.0f64..-0.01, df in 0.01f64..1.0,
        dc in 0.0f64..1e4, db in 0.0f64..0.1, a in 0.0f64..5.0,
    ) {
        let v = p.c * 10f64.powf(f);
        let e = ParamErrors::new(dc, db).unwrap();
        let only_c = ParamErrors::new(dc, 0.0).unwrap();
        let only_b = ParamErrors::new(0.0, db).unwrap();
        let scaled = ParamErrors::new(a * dc, a * db).unwrap();
        for err in [count_error, volume_error] {
            let full = err(p, e, v).unwrap();
            prop_assert!(full >= 0.0);
            let parts = err(p, only_c, v).unwrap() + err(p, only_b, v).unwrap();
            prop_assert!((full - parts).abs() <= 1e-9 * full.max(1e-300));
            prop_assert!((err(p, scaled, v).unwrap() - a * full).abs() <= 1e-9 * (a * full).max(1e-300));
        }
        let lower = p.c * 10f64.powf(f - df);
        prop_assert!(count_error(p, e, lower).unwrap() >= count_error(p, e, v).unwrap());
    }

    #[test]
    fn report_rows_strictly_decrease(p in params(), mut thresholds in prop::collection::vec(-5.0f64..-0.01, 2..8)) {
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let vs: Vec<f64> = thresholds.iter().map(|f| p.c * 10f64.powf(*f)).collect();
        let rows = report_table(p, ParamErrors::default(), &vs).unwrap();
        for w in rows.windows(2) {
            prop_assert!(w[0].n_hat > w[1].n_hat && w[0].v_hat > w[1].v_hat);
        }
    }

    #[test]
    fn seeded_sampling_is_deterministic(seed in any::<u64>(), scheme_ix in 0usize..4) {
        let population: Vec<f64> = (1..=2000).map(|i| 1e4 / (i as f64).powf(0.8)).collect();
        let config = SamplingConfig {
            scheme: Scheme::ALL[scheme_ix],
            sample_size: 100,
            bias: BiasParams::default(),
            seed,
        };
        let a = draw_seeded_sample(&population, &config).unwrap();
        let b = draw_seeded_sample(&population, &config).unwrap();
        prop_assert_eq!(a.volumes(), b.volumes());
        prop_assert_eq!(a.true_ranks(), b.true_ranks());
    }

    #[test]
    fn perturbations_keep_length_and_sign(vols in volumes(1..300), seed in any::<u64>(), sd in 0.0f64..0.5, gamma in 0.0f64..0.1) {
        let sample = ContinuousSample::new(vols).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy = apply_noise(&sample, 1.0, sd, &mut rng).unwrap();
        let sketched = apply_sketch(&sample, gamma, sample.volumes()[0], &mut rng).unwrap();
        for out in [&noisy, &sketched] {
            prop_assert_eq!(out.len(), sample.len());
            prop_assert!(out.volumes().iter().all(|&v| v > 0.0));
            prop_assert!(out.volumes().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn bin_edges_are_half_open(s in ladder()) {
        for j in 1..s.bin_count {
            let edge = s.edge(j);
            prop_assert_eq!(s.bin_of(edge - edge * 1e-9).unwrap(), j);
            prop_assert_eq!(s.bin_of(edge).unwrap(), j + 1);
        }
    }

    #[test]
    fn csn_scale_equivariant(vols in volumes(20..200), k in 0.001f64..1000.0) {
        let a = ContinuousSample::new(vols.clone()).unwrap();
        prop_assume!(a.volumes()[0] > a.volumes()[a.len() - 1]);
        let b = ContinuousSample::new(vols.iter().map(|v| v * k).collect()).unwrap();
        let (fa, fb) = (csn_fit(&a).unwrap(), csn_fit(&b).unwrap());
        prop_assert_eq!(fa.cutoff_rank, fb.cutoff_rank);
        prop_assert!(rel(fb.alpha, fa.alpha) <= 1e-9);
        prop_assert!(rel(fb.cutoff_volume, k * fa.cutoff_volume) <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nls_scale_equivariant(lc in 2.0f64..5.0, beta in 0.4f64..1.6, noise_seed in any::<u64>(), k in 0.01f64..100.0) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let c = 10f64.powf(lc);
        let vols: Vec<f64> = (1..=200)
            .map(|i| c / (i as f64).powf(beta) * (1.0 + 0.05 * (rng.random::<f64>() - 0.5)))
            .collect();
        let a = ContinuousSample::new(vols.clone()).unwrap();
        let b = ContinuousSample::new(vols.iter().map(|v| v * k).collect()).unwrap();
        let opts = SolverOptions::default();
        let (fa, fb) = (nls_zipf_fit(&a, 200, &opts).unwrap(), nls_zipf_fit(&b, 200, &opts).unwrap());
        prop_assert!(rel(fb.params.c, k * fa.params.c) <= 1e-6);
        prop_assert!(rel(fb.params.beta, fa.params.beta) <= 1e-6);
        prop_assert!(rel(fb.errors.delta_c, k * fa.errors.delta_c) <= 1e-4);
        prop_assert!(rel(fb.errors.delta_beta, fa.errors.delta_beta) <= 1e-4);
    }

    #[test]
    fn exact_data_fits_are_deterministic_with_tiny_errors(p in params(), method_ix in 0usize..2) {
        let vols: Vec<f64> = (1..=300).map(|i| expected_volume(p, i)).collect();
        let sample = ContinuousSample::new(vols).unwrap();
        let method = [FitMethod::Nls, FitMethod::CsnMax][method_ix];
        let a = fit_continuous(&sample, method).unwrap();
        prop_assert_eq!(&a, &fit_continuous(&sample, method).unwrap());
        if method == FitMethod::Nls {
            prop_assert!(a.errors.delta_c <= 1e-6 * a.params.c);
            prop_assert!(a.errors.delta_beta <= 1e-6 * a.params.beta);
        }
    }

    #[test]
    fn chisq_zero_at_truth_and_telescoping(lc in 2.0f64..6.0, beta in 0.4f64..1.6, ratio in 1.1f64..2.5, from in 1usize..5) {
        let p = ZipfParams::new(10f64.powf(lc), beta).unwrap();
        let floor = p.c / 1e5f64.powf(beta);
        let scheme = BinningScheme::covering(floor, ratio, 2.0 * p.c).unwrap();
        let expected = expected_bin_counts(p, &scheme, 1).unwrap();
        let sample = BinnedSample::new(scheme, expected.clone()).unwrap();
        let inputs = BinnedFitInputs::new(&sample, from).unwrap();
        prop_assert!(chisq_objective(p, &inputs).unwrap().abs() <= 1e-9);
        let mut partial = 0.0;
        for (j, e) in expected.iter().enumerate() {
            partial += e;
            let telescoped = estimate_query_count(p, scheme.edge(0)) - estimate_query_count(p, scheme.edge(j + 1));
            prop_assert!(rel(partial, telescoped) <= 1e-9);
        }
    }

    #[test]
    fn binned_fit_scale_equivariant_and_self_consistent(beta in 0.5f64..1.4, k in 0.01f64..100.0, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ZipfParams::new(1e4, beta).unwrap();
        let scheme = BinningScheme::covering(p.c / 1e5f64.powf(beta), 1.2324, 2.0 * p.c).unwrap();
        let counts: Vec<f64> = expected_bin_counts(p, &scheme, 1)
            .unwrap()
            .into_iter()
            .map(|e| (e * (0.8 + 0.4 * rng.random::<f64>())).round())
            .collect();
        let sample = BinnedSample::new(scheme, counts.clone()).unwrap();
        let scaled_scheme = BinningScheme::new(scheme.floor * k, scheme.first_edge * k, scheme.ratio, scheme.bin_count).unwrap();
        let scaled = BinnedSample::new(scaled_scheme, counts).unwrap();
        let (fa, fb) = (fit_binned(&sample, FitMethod::Chi2, None).unwrap(), fit_binned(&scaled, FitMethod::Chi2, None).unwrap());
        prop_assert!((fa.params.beta - fb.params.beta).abs() <= 1e-5, "{} vs {}", fa.params.beta, fb.params.beta);
        prop_assert_eq!(&fa, &fit_binned(&sample, FitMethod::Chi2, None).unwrap());

        let inputs = BinnedFitInputs::new(&sample, 1).unwrap();
        let free = chisq_fit(&inputs, &SolverOptions::default()).unwrap();
        let frozen = constrained_chisq_fit(&inputs, free.params.beta, 0.0).unwrap();
        prop_assert!(rel(frozen.params.c, free.params.c) <= 1e-6, "{} vs {}", frozen.params.c, free.params.c);
    }

    #[test]
    fn ingest_export_ingest_identity(vols in volumes(1..100)) {
        let mut text = String::from("query,volume\n");
        for (i, v) in vols.iter().enumerate() {
            text.push_str(&format!("q{i},{v}\n"));
        }
        let first = read_continuous(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_rank_distribution(first.volumes(), &mut buf).unwrap();
        let back = read_rank_distribution(buf.as_slice()).unwrap();
        prop_assert_eq!(first.volumes(), back.as_slice());
    }
}
