//! Posterior tail probabilities from the sampler against independent
//! numerical references: adaptive Simpson in one dimension, a tensor grid in
//! two, and prior importance sampling for the full hierarchy.

use mats_core::inference::{sample_posterior_with, PinnedHypers, SamplerOptions};
use mats_core::model::SamplePlan;
use mats_core::{logit, sample_posterior, Counts, McmcSettings, ModelConfig, Stage2Counts, TrialData};
mod common;

use common::{full_model_tails, grid_2d, simpson, tail_1d};

const TOL: f64 = 0.02;

fn single(p0: f64, p_star: f64) -> ModelConfig {
    ModelConfig {
        n_indications: 1,
        reference_rates: vec![p0],
        target_rates: vec![p_star],
        sample_plan: SamplePlan::uniform(1, 20, 20, 20),
        ..ModelConfig::default()
    }
}

fn pinned(sigma2_eta: f64, sigma2_gamma: f64) -> SamplerOptions {
    SamplerOptions {
        pinned: Some(PinnedHypers {
            eta0: 0.0,
            sigma2_eta,
            gamma0: 0.0,
            sigma2_gamma,
        }),
        initial_scales: None,
    }
}

fn long_run(seed: u64) -> McmcSettings {
    McmcSettings {
        n_iterations: 20_000,
        burn_in: 2_000,
        seed,
        ..McmcSettings::default()
    }
}

fn tail_mcmc(y: u32, p0: f64, s2: f64, tau: f64, seed: u64) -> f64 {
    let cfg = single(p0, 0.4);
    let data = TrialData::stage1_only(vec![Counts::new(y, 20)]);
    let d = sample_posterior_with(&data, &cfg, &long_run(seed), &pinned(s2, 0.5)).unwrap();
    d.eta(0).filter(|&e| e >= tau).count() as f64 / d.len() as f64
}

#[test]
fn simpson_integrates_a_gaussian() {
    let f = |x: f64| (-x * x / 2.0).exp();
    let v = simpson(&f, -10.0, 10.0, 1e-12);
    assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-9);
}

#[test]
fn one_dimensional_tail_matches_quadrature() {
    let tau = logit(0.3).unwrap() - logit(0.2).unwrap();
    assert!((tau - 0.539).abs() < 1e-3);
    for (k, y) in [0u32, 5, 10, 15, 20].into_iter().enumerate() {
        let exact = tail_1d(y, 20, 0.2, 1.0, tau);
        let mc = tail_mcmc(y, 0.2, 1.0, tau, 100 + k as u64);
        assert!((exact - mc).abs() < TOL, "y={y}: quadrature {exact:.4}, mcmc {mc:.4}");
    }
}

#[test]
fn tail_probability_is_monotone_in_responders() {
    let tau = logit(0.3).unwrap() - logit(0.2).unwrap();
    let exact: Vec<f64> = (0..=20).map(|y| tail_1d(y, 20, 0.2, 1.0, tau)).collect();
    for w in exact.windows(2) {
        assert!(w[1] > w[0], "{exact:?}");
    }
    let mc: Vec<f64> = [2u32, 6, 10, 14]
        .iter()
        .map(|&y| tail_mcmc(y, 0.2, 1.0, tau, 7))
        .collect();
    for (m, y) in mc.iter().zip([2usize, 6, 10, 14]) {
        assert!((m - exact[y]).abs() < TOL);
    }
    for w in mc.windows(2) {
        assert!(w[1] > w[0] - TOL);
    }
}

#[test]
fn two_dimensional_probabilities_match_tensor_grid() {
    let cfg = single(0.2, 0.4);
    let tau1 = cfg.tau1().unwrap()[0];
    let tau2 = cfg.tau2;
    let cases = [(12, 16, 15), (8, 9, 4), (10, 11, 10), (7, 14, 3)];
    for (k, (y1, yh, yl)) in cases.into_iter().enumerate() {
        let data = TrialData::with_stage2(
            vec![Counts::new(y1, 20)],
            vec![Some(Stage2Counts {
                high: Counts::new(yh, 20),
                low: Counts::new(yl, 20),
            })],
        );
        let oracle = grid_2d(
            data.high_dose_totals(0),
            data.low_dose_totals(0),
            0.2,
            tau1,
            tau2,
            1.0,
            0.5,
        );
        let d = sample_posterior_with(&data, &cfg, &long_run(300 + k as u64), &pinned(1.0, 0.5)).unwrap();
        let n = d.len() as f64;
        let high = d.eta(0).filter(|&e| e >= tau1).count() as f64 / n;
        let low = d.eta(0).zip(d.gamma(0)).filter(|(e, g)| e - g >= tau1).count() as f64 / n;
        let sup = d.gamma(0).filter(|&g| g >= tau2).count() as f64 / n;
        for (name, o, m) in [
            ("high", oracle.go_high, high),
            ("low", oracle.go_low, low),
            ("superiority", oracle.superior, sup),
        ] {
            assert!((o - m).abs() < TOL, "case {k} {name}: grid {o:.4}, mcmc {m:.4}");
        }
    }
}

#[test]
fn strong_stage2_data_has_both_doses_efficacious_on_the_grid() {
    let cfg = single(0.2, 0.4);
    let tau1 = cfg.tau1().unwrap()[0];
    let g = grid_2d(Counts::new(28, 40), Counts::new(15, 20), 0.2, tau1, cfg.tau2, 1.0, 0.5);
    assert!(g.go_high > 0.5 && g.go_low > 0.5);
}

#[test]
fn full_hierarchy_matches_prior_importance_sampling() {
    let cfg = ModelConfig::default();
    let tau1 = cfg.tau1().unwrap();
    for (k, y) in [[5, 3, 2, 4], [5, 7, 1, 3], [10, 12, 9, 11], [9, 4, 2, 10]]
        .into_iter()
        .enumerate()
    {
        let oracle = full_model_tails(y, &cfg, 400_000);
        let data = TrialData::stage1_only(y.iter().map(|&r| Counts::new(r, 20)).collect());
        let d = sample_posterior(&data, &cfg, &long_run(500 + k as u64)).unwrap();
        for j in 0..4 {
            let mc = d.eta(j).filter(|&e| e >= tau1[j]).count() as f64 / d.len() as f64;
            assert!(
                (mc - oracle[j]).abs() < TOL,
                "y={y:?} j={j}: oracle {:.4}, mcmc {mc:.4}",
                oracle[j]
            );
        }
    }
}

#[test]
fn all_zero_interim_is_far_below_threshold() {
    let p = tail_1d(0, 20, 0.2, 1.0, logit(0.3).unwrap() - logit(0.2).unwrap());
    assert!(p < 0.01, "{p}");
    let cfg = ModelConfig::default();
    let oracle = full_model_tails([0; 4], &cfg, 200_000);
    assert!(oracle.iter().all(|&p| p < 0.05));
}
