mod common;

use markov_identity::analysis::{exact_mixing_time, mixing_profile, stationary_distribution, two_thirds_pi_norm};
use markov_identity::chain::{sample_trajectory, Distribution, RngSeed, TransitionMatrix};
use markov_identity::complexity::{sample_complexity, Constants, Mode};
use markov_identity::distance::{l1_dist, matrix_tv_norm};
use markov_identity::experiment::{run_experiment, ExperimentSpec};
use markov_identity::families::{
    build_g_chain, build_h_chain, build_h_rational, g_initial, nonconsecutive_count, perturbed_uniform,
    visit_count_pmf, GFamilySpec, HFamilySpec,
};
use markov_identity::iid::{calibrate_threshold, vv_statistic, AmplifiedTester, Calibration};
use markov_identity::oracle::{
    enumerate_paths, exact_visit_pmf, f64_kernel, mixture_product_tv, to_f64,
};
use markov_identity::prelude::ChainAnalysis;
use markov_identity::tester::{IdentityTester, TesterOptions};
use num_traits::{One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{binomial_sigma, random_ergodic, random_stochastic};

fn iid_sample(q: &Distribution, n: usize, seed: RngSeed) -> Vec<usize> {
    let c = markov_identity::chain::Categorical::new(q.probs());
    let mut rng = seed.rng();
    (0..n).map(|_| c.sample(&mut rng)).collect()
}

fn counts(sample: &[usize], d: usize) -> Vec<usize> {
    let mut c = vec![0; d];
    for &s in sample {
        c[s] += 1;
    }
    c
}

#[test]
fn sampling_is_a_function_of_the_seed() {
    let m = TransitionMatrix::new(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
    let init = Distribution::uniform(2);
    let a = sample_trajectory(&m, &init, 200, RngSeed(9)).unwrap();
    assert_eq!(a, sample_trajectory(&m, &init, 200, RngSeed(9)).unwrap());
    assert_ne!(a, sample_trajectory(&m, &init, 200, RngSeed(10)).unwrap());
}

#[test]
fn stationary_law_matches_high_powers() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..30 {
        let d = rng.random_range(2..9);
        let m = random_ergodic(d, &mut rng);
        let pi = stationary_distribution(&m, 1e-13).unwrap();
        let residual: f64 = m.step(pi.probs()).iter().zip(pi.probs()).map(|(a, b)| (a - b).abs()).sum();
        assert!(residual <= 1e-12, "residual {residual}");
        let t = exact_mixing_time(&m, &pi, 100_000).unwrap();
        if t > 100 {
            continue;
        }
        let mut row = vec![0.0; d];
        row[0] = 1.0;
        for _ in 0..60 * t {
            row = m.step(&row);
        }
        let gap: f64 = row.iter().zip(pi.probs()).map(|(a, b)| (a - b).abs()).sum();
        assert!(gap < 1e-10, "M^t row is {gap} from pi");
    }
}

#[test]
fn mixing_profile_is_monotone_and_defines_t_mix() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let d = rng.random_range(2..9);
        let m = random_ergodic(d, &mut rng);
        let pi = stationary_distribution(&m, 1e-13).unwrap();
        let t = exact_mixing_time(&m, &pi, 100_000).unwrap();
        let profile = mixing_profile(&m, &pi, t + 20);
        assert!(profile.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(profile[t - 1] <= 0.25);
        assert!(t == 1 || profile[t - 2] > 0.25);
    }
}

#[test]
fn two_thirds_bound_is_tight_on_uniform_rows() {
    for d in 1..10 {
        let m = TransitionMatrix::new(vec![vec![1.0 / d as f64; d]; d]).unwrap();
        let pi = stationary_distribution(&m, 1e-14).unwrap();
        let v = two_thirds_pi_norm(&m, &pi).unwrap();
        let bound = (d as f64).sqrt() / pi.min();
        assert!((v - bound).abs() <= 1e-9 * bound, "d = {d}: {v} vs {bound}");
    }
}

#[test]
fn uniform_rows_give_equal_plans_in_both_modes() {
    let d = 6;
    let m = TransitionMatrix::new(vec![vec![1.0 / d as f64; d]; d]).unwrap();
    let a = ChainAnalysis::compute(&m).unwrap();
    let c = Constants::uniform(1.0);
    let worst = sample_complexity(&a, 0.2, 0.1, Mode::WorstCase, &c).unwrap();
    let inst = sample_complexity(&a, 0.2, 0.1, Mode::Instance, &c).unwrap();
    assert_eq!(worst.m, inst.m);
}

#[test]
fn visit_pmf_is_normalized_on_its_support() {
    for p in [0.05, 0.1, 0.3] {
        for m in 1..=30usize {
            let top = (m + 2) / 2;
            let total: f64 = (0..=top).map(|n| visit_count_pmf(m, n, p).unwrap()).sum();
            assert!((total - 1.0).abs() <= 1e-12, "m = {m}, p = {p}: {total}");
            assert_eq!(visit_count_pmf(m, top + 1, p).unwrap(), 0.0);
        }
    }
}

#[test]
fn nonconsecutive_count_matches_enumeration_up_to_20() {
    for m in 0..=20usize {
        let mut by_size = vec![0u64; m + 2];
        for s in 0u32..1 << m {
            if s & (s >> 1) == 0 {
                by_size[s.count_ones() as usize] += 1;
            }
        }
        for (n, &expected) in by_size.iter().enumerate() {
            match nonconsecutive_count(m, n) {
                Ok(c) => assert_eq!(c, expected.into(), "m = {m}, n = {n}"),
                Err(_) => assert_eq!(expected, 0, "m = {m}, n = {n}"),
            }
        }
    }
}

#[test]
fn family_rows_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let tau: Vec<bool> = (0..4).map(|_| rng.random_bool(0.5)).collect();
        let spec = HFamilySpec::new(12, 0.02, tau, 0.125).unwrap();
        for row in build_h_rational(&spec).unwrap() {
            let sum = row.iter().fold(num_rational::BigRational::zero(), |a, b| a + b);
            assert!(sum.is_one());
        }
        build_h_chain(&spec).unwrap();
    }
    for d in [2, 4, 6] {
        let eta1 = perturbed_uniform(d, 0.3, &vec![1; d / 2]).unwrap();
        let eta2 = Distribution::uniform(d);
        let g1 = build_g_chain(&GFamilySpec::new(d, 0.05, eta1.clone()).unwrap()).unwrap();
        let g2 = build_g_chain(&GFamilySpec::new(d, 0.05, eta2.clone()).unwrap()).unwrap();
        for row in g1.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        }
        let expected = 0.5 * l1_dist(&eta1, &eta2).unwrap();
        assert!((matrix_tv_norm(&g1, &g2).unwrap() - expected).abs() < 1e-15);
    }
}

#[test]
fn path_marginals_match_matrix_powers() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let d = rng.random_range(2..5);
        let m = random_stochastic(d, &mut rng);
        let init = Distribution::new(common::normalize((0..d).map(|_| rng.random_range(0.1..1.0)).collect())).unwrap();
        let len = rng.random_range(1..7);
        let paths = enumerate_paths(&f64_kernel(&m), init.probs(), len).unwrap();
        let mut mu = init.probs().to_vec();
        for t in 0..len {
            for (a, b) in paths.marginal(t + 1).iter().zip(&mu) {
                assert!((a - b).abs() <= 1e-14, "t = {t}: {a} vs {b}");
            }
            mu = m.step(&mu);
        }
    }
}

#[test]
fn visit_dp_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let d = rng.random_range(2..5);
        let k = f64_kernel(&random_stochastic(d, &mut rng));
        let init = Distribution::uniform(d);
        let len = rng.random_range(1..8);
        let state = rng.random_range(0..d);
        let paths = enumerate_paths(&k, init.probs(), len).unwrap();
        let mut by_count = vec![0.0; len + 1];
        for (c, p) in paths.visit_counts(state).iter().zip(&paths.probs) {
            by_count[*c] += p;
        }
        let dp = exact_visit_pmf(&k, init.probs(), len, state).unwrap();
        for (n, want) in by_count.iter().enumerate() {
            let got = dp.get(n).copied().unwrap_or(0.0);
            assert!((got - want).abs() <= 1e-12, "n = {n}: {got} vs {want}");
        }
    }
}

#[test]
fn sigma_mixture_respects_paninski_bound() {
    for d in [2usize, 4] {
        let signs: Vec<Vec<i8>> = (0..1u32 << (d / 2))
            .map(|mask| (0..d / 2).map(|b| if mask >> b & 1 == 1 { 1 } else { -1 }).collect())
            .collect();
        for eps in [0.1, 0.3] {
            let components: Vec<Vec<f64>> = signs
                .iter()
                .map(|s| perturbed_uniform(d, eps, s).unwrap().into_vec())
                .collect();
            let u = vec![1.0 / d as f64; d];
            for n in 1..=4usize {
                let tv: f64 = to_f64(&mixture_product_tv(&components, &u, n).unwrap());
                let x = (n * n) as f64 * eps.powi(4) / d as f64;
                assert!(tv <= x.exp().sqrt().min(1.0) + 1e-12);
                // the chi-square form of the same bound is also respected here
                assert!(tv <= 0.5 * (x.exp() - 1.0).sqrt() + 1e-12, "d {d} eps {eps} n {n}: {tv}");
            }
        }
    }
}

#[test]
fn null_statistic_has_negative_mean() {
    for (q, n) in [
        (Distribution::uniform(4), 20),
        (Distribution::new(vec![0.5, 0.3, 0.2]).unwrap(), 15),
        (Distribution::new(vec![0.7, 0.1, 0.1, 0.05, 0.05]).unwrap(), 40),
    ] {
        let trials = 4000;
        let mut sum = 0.0;
        let mut cell = vec![0.0; q.d()];
        for t in 0..trials {
            let c = counts(&iid_sample(&q, n, RngSeed(7).derive(&[t])), q.d());
            sum += vv_statistic(&c, &q, n).unwrap().value;
            for (i, acc) in cell.iter_mut().enumerate() {
                let dev = c[i] as f64 - n as f64 * q.probs()[i];
                *acc += dev * dev - c[i] as f64;
            }
        }
        assert!(sum < 0.0);
        // E[(N - nq)^2 - N] is -n q^2, not zero
        for (i, acc) in cell.iter().enumerate() {
            let qi = q.probs()[i];
            let mean = acc / trials as f64;
            let var_bound = (2.0 * (n as f64 * qi).powi(2) + 6.0 * n as f64 * qi) / trials as f64;
            assert!((mean + n as f64 * qi * qi).abs() <= 4.0 * var_bound.sqrt() + 1e-9, "cell {i}: {mean}");
        }
    }
}

#[test]
fn majority_vote_shrinks_error() {
    let q = Distribution::uniform(6);
    let block = 30;
    let cal = Calibration {
        delta0: 1.0 / 3.0,
        trials: 2000,
        seed: RngSeed(11),
    };
    let mut errors = Vec::new();
    for blocks in [1usize, 3, 9, 27] {
        let t = AmplifiedTester::new(q.clone(), blocks, block, &cal).unwrap();
        let trials = 600;
        let rejected = (0..trials)
            .filter(|&k| t.test(&iid_sample(&q, blocks * block, RngSeed(12).derive(&[k]))).unwrap().reject)
            .count();
        errors.push(rejected as f64 / trials as f64);
    }
    for w in errors.windows(2) {
        assert!(w[1] <= w[0] + 2.0 * binomial_sigma(w[0].max(0.05), 600), "{errors:?}");
    }
    assert!(errors[3] < 0.05, "{errors:?}");
}

#[test]
fn base_tester_power_grows_with_distance() {
    let d = 8;
    let n = 60;
    let q = Distribution::uniform(d);
    let threshold = calibrate_threshold(&q, n, 0.2, 2000, RngSeed(13)).unwrap();
    let trials = 500;
    let mut rates = Vec::new();
    for eps in [0.0, 0.2, 0.4, 0.6, 0.8] {
        let p = perturbed_uniform(d, eps, &[1, -1, 1, -1]).unwrap();
        let rejected = (0..trials)
            .filter(|&k| {
                let c = counts(&iid_sample(&p, n, RngSeed(14).derive(&[k])), d);
                vv_statistic(&c, &q, n).unwrap().value > threshold
            })
            .count();
        rates.push(rejected as f64 / trials as f64);
    }
    let inversions = rates.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(inversions <= 1, "{rates:?}");
    assert!(rates[4] > 0.9 && rates[0] < 0.3, "{rates:?}");
}

fn g_tester(force: bool) -> (TransitionMatrix, IdentityTester) {
    let reference = build_g_chain(&GFamilySpec::uniform(6, 0.05).unwrap()).unwrap();
    let options = TesterOptions {
        force,
        calibration_trials: 500,
        ..Default::default()
    };
    let analysis = ChainAnalysis::compute(&reference).unwrap();
    let tester = IdentityTester::new(&reference, analysis, 0.25, 0.1, options).unwrap();
    (reference, tester)
}

#[test]
fn identical_inputs_give_identical_reports() {
    let (reference, tester) = g_tester(false);
    let x = sample_trajectory(&reference, &g_initial(6, 0.05), tester.required_length(), RngSeed(3)).unwrap();
    let a = serde_json::to_string(&tester.test(&x).unwrap()).unwrap();
    let (_, again) = g_tester(false);
    assert_eq!(a, serde_json::to_string(&again.test(&x).unwrap()).unwrap());
}

#[test]
fn chain_tester_power_grows_with_row_distance() {
    let (_, tester) = g_tester(true);
    let m = tester.required_length();
    let trials = 100;
    let mut rates = Vec::new();
    for eps in [0.0, 0.2, 0.4, 0.6, 0.9] {
        let eta = perturbed_uniform(6, eps, &[1, 1, 1]).unwrap();
        let alt = build_g_chain(&GFamilySpec::new(6, 0.05, eta).unwrap()).unwrap();
        let rejected = (0..trials)
            .filter(|&k| {
                let x = sample_trajectory(&alt, &g_initial(6, 0.05), m, RngSeed(21).derive(&[k])).unwrap();
                tester.test(&x).unwrap().reject
            })
            .count();
        rates.push(rejected as f64 / trials as f64);
    }
    let bad = rates
        .windows(2)
        .filter(|w| w[1] < w[0] - 2.0 * binomial_sigma(w[0].max(0.05), trials as usize))
        .count();
    let inversions = rates.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(bad == 0 && inversions <= 1, "{rates:?}");
    assert!(rates[4] > 0.9 && rates[0] < 0.2, "{rates:?}");
}

#[test]
fn h_two_point_pair_is_hard_below_the_half_cover_scale() {
    // m = d / (120 eta) = 5
    let spec = r#"{
      "reference": { "kind": "family_h", "d": 12, "eta": 0.02 },
      "alternatives": [{ "name": "one_hot", "source": { "kind": "family_h", "d": 12, "eta": 0.02,
                         "tau": [true, false, false, false] } }],
      "m_grid": [5],
      "trials": 200,
      "eps": 0.125,
      "delta": 0.1,
      "seed": 4,
      "calibration_trials": 300
    }"#;
    let rows = run_experiment(&ExperimentSpec::from_json(spec, std::path::Path::new(".")).unwrap(), None).unwrap();
    let r = &rows[0];
    let combined = r.null_reject_rate + r.alt_accept_rate.unwrap();
    assert!(combined / 2.0 >= 0.1, "{r:?}");
}

#[test]
fn single_trial_rows_are_well_formed() {
    let spec = r#"{
      "reference": { "kind": "inline", "matrix": [[0.5, 0.5], [0.5, 0.5]] },
      "alternatives": [{ "name": "flip", "source": { "kind": "inline", "matrix": [[0.1, 0.9], [0.9, 0.1]] } }],
      "m_grid": [50, 100],
      "trials": 1,
      "eps": 0.3,
      "delta": 0.2,
      "seed": 8,
      "calibration_trials": 200
    }"#;
    let rows = run_experiment(&ExperimentSpec::from_json(spec, std::path::Path::new(".")).unwrap(), Some(1)).unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r.null_reject_rate == 0.0 || r.null_reject_rate == 1.0);
        assert!(matches!(r.alt_accept_rate, Some(a) if a == 0.0 || a == 1.0));
        assert_eq!(r.wall_time_ms, 0);
    }
}
