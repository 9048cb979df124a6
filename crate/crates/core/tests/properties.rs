mod common;

use bnpirt::design::{build_dichotomous, build_polytomous, Observation};
use bnpirt::diagnostics::{batch_means_mcci, compare_models, quantile_sorted, PredictionTable};
use bnpirt::model::{
    data_log_likelihood, latent_moments, mixture_weight, observation_pmf, response_probability,
    weight_window,
};
use bnpirt::samples_io::{read_samples_csv, write_samples_csv};
use bnpirt::{
    run_chain, ChainConfig, FitReport, ItemResponseData, MuWindow, ParameterState, PriorConfig,
    Sampler, DEFAULT_EPS,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// ζ of dimension `d` with every μ_j the window of `x` needs.
fn zeta_strategy(d: usize) -> impl Strategy<Value = (Vec<f64>, ParameterState)> {
    (
        prop::collection::vec(-2.0..2.0f64, d),
        prop::collection::vec(-1.5..1.5f64, d),
        prop::collection::vec(-1.5..1.5f64, d),
        0.1..4.0f64,
        0.05..4.0f64,
        0.05..1.0f64,
        any::<u64>(),
    )
        .prop_map(
            |(x, beta, beta_omega, sigma2, sigma_omega2, sigma_mu, seed)| {
                let mut zeta = ParameterState {
                    mu: MuWindow::single(0.0),
                    sigma_mu,
                    beta,
                    beta_omega,
                    sigma2,
                    sigma_omega2,
                };
                zeta.cover(&x, DEFAULT_EPS, &mut ChaCha8Rng::seed_from_u64(seed))
                    .unwrap();
                (x, zeta)
            },
        )
}

fn grid_data(n: usize, i: usize, scores: &[u32]) -> ItemResponseData {
    let obs = (0..n * i)
        .map(|k| Observation {
            person: k / i,
            item: k % i,
            score: scores[k % scores.len()],
        })
        .collect();
    ItemResponseData::from_observations(n, i, obs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weights_are_probabilities_that_sum_to_one(eta in -40.0..40.0f64, log_sd in -3.0..2.0f64) {
        let w = weight_window(eta, 10f64.powf(log_sd), DEFAULT_EPS).unwrap();
        prop_assert!(w.weights.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((w.captured_mass() + w.tail_mass - 1.0).abs() <= 1e-12);
        prop_assert!(w.tail_mass <= DEFAULT_EPS);
    }

    #[test]
    fn weights_are_translation_equivariant(j in -20i64..20, eta in -10.0..10.0f64, k in -30i64..30, sd in 0.05..5.0f64) {
        let a = mixture_weight(j, eta, sd).unwrap();
        let b = mixture_weight(j + k, eta + k as f64, sd).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn pmf_is_a_bernoulli((x, zeta) in zeta_strategy(3)) {
        let p = response_probability(&x, &zeta, DEFAULT_EPS).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
        let total = observation_pmf(0, &x, &zeta, DEFAULT_EPS).unwrap() + observation_pmf(1, &x, &zeta, DEFAULT_EPS).unwrap();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn latent_variance_exceeds_noise((x, zeta) in zeta_strategy(3)) {
        let (_, v) = latent_moments(&x, &zeta, DEFAULT_EPS).unwrap();
        prop_assert!(v >= zeta.sigma2 * (1.0 - 1e-12));
    }

    #[test]
    fn log_likelihood_is_the_sum_of_cell_terms(n in 1usize..5, i in 1usize..4, seed in any::<u64>()) {
        let scores: Vec<u32> = (0..7).map(|k| ((seed >> k) & 1) as u32).collect();
        let design = build_dichotomous(&grid_data(n, i, &scores)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = PriorConfig::new(1.0, 1.0, 4.0, 1.0, 4.0).unwrap();
        let mut zeta = bnpirt::simulate::draw_prior(design.dimension, &prior, 0, true, &mut rng);
        for row in &design.rows {
            zeta.cover(&row.x, DEFAULT_EPS, &mut rng).unwrap();
        }
        let total = data_log_likelihood(&design, &zeta, DEFAULT_EPS).unwrap();
        let by_hand: f64 = design.rows.iter().map(|r| observation_pmf(r.response, &r.x, &zeta, DEFAULT_EPS).unwrap().ln()).sum();
        prop_assert!((total - by_hand).abs() <= 1e-12 * by_hand.abs().max(1.0));
    }

    #[test]
    fn dichotomous_rows_have_one_person_and_one_item_flag(n in 1usize..6, i in 1usize..6) {
        let design = build_dichotomous(&grid_data(n, i, &[0, 1])).unwrap();
        prop_assert_eq!(design.dimension, 1 + n + i);
        prop_assert_eq!(design.rows.len(), n * i);
        for row in &design.rows {
            prop_assert_eq!(row.x[0], 1.0);
            prop_assert_eq!(row.x[1..=n].iter().filter(|&&v| v == 1.0).count(), 1);
            prop_assert_eq!(row.x[1 + n..].iter().filter(|&&v| v == -1.0).count(), 1);
            prop_assert_eq!(row.x.iter().sum::<f64>(), 1.0);
            prop_assert_eq!(row.x[1 + row.person], 1.0);
            prop_assert_eq!(row.x[1 + n + row.item], -1.0);
        }
    }

    #[test]
    fn polytomous_rows_have_at_most_one_category_flag(n in 1usize..5, i in 1usize..5, top in 2u32..4) {
        let scores: Vec<u32> = (0..=top).collect();
        let data = grid_data(n, i, &scores);
        let m_star = data.observations.iter().map(|o| o.score).max().unwrap().max(1) as usize;
        let design = build_polytomous(&data).unwrap();
        prop_assert_eq!(design.dimension, 1 + n + m_star * i);
        for row in &design.rows {
            let block = &row.x[1 + n..];
            let flags: Vec<f64> = block.iter().copied().filter(|&v| v != 0.0).collect();
            prop_assert!(flags.len() <= 1 && flags.iter().all(|&v| v == 1.0));
            prop_assert_eq!(flags.len() == 1, row.score > 0);
            prop_assert_eq!(row.response, u8::from(row.score > 0));
        }
    }

    #[test]
    fn fit_identities_hold(cells in prop::collection::vec((0u8..=1, 0.0..1.0f64), 1..80)) {
        let responses: Vec<u8> = cells.iter().map(|c| c.0).collect();
        let means: Vec<f64> = cells.iter().map(|c| c.1).collect();
        let table = PredictionTable {
            cells: (0..cells.len()).map(|k| (k, 0)).collect(),
            variances: means.iter().map(|m| m * (1.0 - m)).collect(),
            responses,
            means,
        };
        let r = FitReport::from_table("m", table, 2.0).unwrap();
        prop_assert_eq!(r.criterion_d, r.gof + r.penalty);
        prop_assert!(r.gof >= 0.0 && r.penalty >= 0.0);
        if let Some(r2) = r.r_squared {
            prop_assert!(r2 <= 1.0);
        }
        for (k, res) in r.residuals.iter().enumerate() {
            if let Some(v) = res {
                prop_assert_eq!(r.is_outlier(k), v.abs() > 2.0);
            }
        }
    }

    #[test]
    fn comparison_is_a_permutation_sorted_by_d(ms in prop::collection::vec(prop::collection::vec(0.01..0.99f64, 4), 2..6)) {
        let reports: Vec<FitReport> = ms
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let table = PredictionTable {
                    cells: (0..4).map(|c| (c, 0)).collect(),
                    responses: vec![1, 0, 1, 0],
                    means: m.clone(),
                    variances: m.iter().map(|p| p * (1.0 - p)).collect(),
                };
                FitReport::from_table(format!("m{k}"), table, 2.0).unwrap()
            })
            .collect();
        let order = compare_models(&reports).unwrap();
        let mut seen = order.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..reports.len()).collect::<Vec<_>>());
        for w in order.windows(2) {
            prop_assert!(reports[w[0]].criterion_d <= reports[w[1]].criterion_d);
        }
    }

    #[test]
    fn quantiles_are_monotone(mut v in prop::collection::vec(-1e3..1e3f64, 1..200), p in 0.0..1.0f64, q in 0.0..1.0f64) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile_sorted(&v, lo) <= quantile_sorted(&v, hi));
        prop_assert_eq!(quantile_sorted(&v, 0.0), v[0]);
        prop_assert_eq!(quantile_sorted(&v, 1.0), *v.last().unwrap());
    }

    #[test]
    fn batch_half_width_is_nonnegative_and_shift_invariant(v in prop::collection::vec(-10.0..10.0f64, 100..400), shift in -5.0..5.0f64) {
        let a = batch_means_mcci(&v, 0.95).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let b = batch_means_mcci(&shifted, 0.95).unwrap();
        prop_assert!(a.half_width >= 0.0);
        prop_assert!((a.half_width - b.half_width).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sweeps_preserve_latent_invariants(n in 1usize..5, i in 1usize..4, seed in any::<u64>()) {
        let scores: Vec<u32> = (0..5).map(|k| ((seed >> (k + 3)) & 1) as u32).collect();
        let design = build_dichotomous(&grid_data(n, i, &scores)).unwrap();
        let cfg = ChainConfig { iterations: 10, burn_in: 0, thin: 1, seed, ..Default::default() };
        let mut s = Sampler::new(&design, &cfg).unwrap();
        for _ in 0..60 {
            s.sweep();
            let responses = s.responses().to_vec();
            prop_assert!(s.latent().check(&responses).is_ok());
            prop_assert!(s.first_non_finite().is_none());
            prop_assert!(s.zeta().sigma_mu > 0.0 && s.zeta().sigma_mu < cfg.prior.b_sigma_mu);
        }
    }

    #[test]
    fn samples_csv_round_trips(seed in any::<u64>(), thin in 1usize..4) {
        let design = build_dichotomous(&grid_data(3, 2, &[1, 0, 0])).unwrap();
        let cfg = ChainConfig { iterations: 40, burn_in: 10, thin, seed, ..Default::default() };
        let samples = run_chain(&design, &cfg).unwrap();
        prop_assert_eq!(samples.len(), cfg.stored_draws());
        let mut buf = Vec::new();
        write_samples_csv(&samples, &mut buf).unwrap();
        let table = read_samples_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(table.names, samples.parameter_names());
        prop_assert_eq!(table.rows, samples.scalar_rows());
    }
}
