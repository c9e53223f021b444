use innovations::stats::{autocorrelation, ks_uniform, mean, normal_cdf, state_frequencies, total_variation, variance};
use innovations::synth::{
    ar1_conditional_law, ar1_true_innovations, gen_ar1, gen_markov, markov_conditional_pmf, Ar1Spec, MarkovChainSpec,
    SynthError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn ar1(a: f64, len: usize, seed: u64) -> Ar1Spec {
    Ar1Spec { a, sigma: 1.0, len, seed }
}

#[test]
fn normal_cdf_reference_values() {
    // Reference values from erfc.
    let table = [
        (0.0, 0.5),
        (1.0, 0.841_344_746_068_542_9),
        (-1.0, 0.158_655_253_931_457_05),
        (2.5, 0.993_790_334_674_223_8),
        (-3.0, 0.001_349_898_031_630_095_7),
        (-6.0, 9.865_876_450_377_01e-10),
    ];
    for (z, p) in table {
        assert!((normal_cdf(z) - p).abs() < 1e-12, "{z}");
    }
}

#[test]
fn white_noise_has_unit_variance() {
    let x = gen_ar1(&ar1(0.0, 100_000, 1)).unwrap();
    assert!((variance(x.values()) - 1.0).abs() < 0.03);
}

#[test]
fn ar1_lag_one_autocorrelation() {
    let x = gen_ar1(&ar1(0.9, 100_000, 2)).unwrap();
    assert!((autocorrelation(x.values(), 1) - 0.9).abs() < 0.02);
}

#[test]
fn generators_replay_per_seed() {
    assert_eq!(gen_ar1(&ar1(0.5, 500, 3)).unwrap(), gen_ar1(&ar1(0.5, 500, 3)).unwrap());
    assert_ne!(gen_ar1(&ar1(0.5, 500, 3)).unwrap(), gen_ar1(&ar1(0.5, 500, 4)).unwrap());
    let m = MarkovChainSpec::symmetric(0.3, 500, 5);
    assert_eq!(gen_markov(&m).unwrap(), gen_markov(&m).unwrap());
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(matches!(gen_ar1(&ar1(1.0, 10, 0)), Err(SynthError::NonStationary(_))));
    assert!(matches!(gen_ar1(&Ar1Spec { a: 0.5, sigma: 0.0, len: 10, seed: 0 }), Err(SynthError::BadSigma(_))));
    assert!(matches!(gen_ar1(&ar1(0.5, 0, 0)), Err(SynthError::EmptyLength)));
}

#[test]
fn oracle_innovations_are_iid_uniform() {
    let spec = ar1(0.9, 100_000, 6);
    let x = gen_ar1(&spec).unwrap();
    let v = ar1_true_innovations(&spec, &x);
    assert!(ks_uniform(v.values()) < 0.01);
    for lag in 1..=5 {
        assert!(autocorrelation(v.values(), lag).abs() < 0.01, "lag {lag}");
    }
}

#[test]
fn memoryless_innovations_are_the_marginal_transform() {
    let spec = ar1(0.0, 100, 7);
    let x = gen_ar1(&spec).unwrap();
    let v = ar1_true_innovations(&spec, &x);
    for (vi, xi) in v.values().iter().zip(x.values()) {
        assert_eq!(*vi, normal_cdf(*xi));
    }
}

#[test]
fn conditional_law_limits() {
    let spec = ar1(0.9, 10, 0);
    assert_eq!(ar1_conditional_law(&spec, 2.0, 1).unwrap(), (1.8, 1.0));
    let (m, s) = ar1_conditional_law(&spec, 2.0, 500).unwrap();
    assert!(m.abs() < 1e-12);
    assert!((s * s - 1.0 / (1.0 - 0.81)).abs() < 1e-9);
    assert!(matches!(ar1_conditional_law(&spec, 0.0, 0), Err(SynthError::ZeroHorizon)));
}

#[test]
fn conditional_law_matches_rollouts() {
    let spec = Ar1Spec { a: 0.8, sigma: 0.7, len: 10, seed: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 40_000;
    for horizon in [1, 3, 8] {
        let ends: Vec<f64> = (0..n)
            .map(|_| {
                let mut x = 1.5;
                for _ in 0..horizon {
                    x = spec.a * x + spec.sigma * rng.sample::<f64, _>(StandardNormal);
                }
                x
            })
            .collect();
        let (m, s) = ar1_conditional_law(&spec, 1.5, horizon).unwrap();
        let se = s / (n as f64).sqrt();
        assert!((mean(&ends) - m).abs() < 3.0 * se, "mean at T={horizon}");
        // Standard error of the sample std is about s / sqrt(2n).
        assert!((variance(&ends).sqrt() - s).abs() < 3.0 * s / (2.0 * n as f64).sqrt(), "std at T={horizon}");
    }
}

#[test]
fn markov_stationary_frequencies() {
    let spec = MarkovChainSpec::symmetric(0.3, 100_000, 9);
    let x = gen_markov(&spec).unwrap();
    let idx: Vec<usize> = x.values().iter().map(|v| spec.state_index(*v).unwrap()).collect();
    let freq = state_frequencies(&idx, 2);
    assert!(total_variation(&freq, &[0.5, 0.5]) < 0.01);
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|l| a[i][l] * b[l][j]).sum()).collect()).collect()
}

#[test]
fn multi_step_pmf_is_matrix_power_row() {
    let spec = MarkovChainSpec {
        states: vec![-1.0, 0.5, 2.0],
        transition: vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.25, 0.25, 0.5]],
        len: 10,
        seed: 0,
    };
    let mut power = spec.transition.clone();
    for horizon in 1..=6 {
        for (row, &state) in spec.states.iter().enumerate() {
            let pmf = markov_conditional_pmf(&spec, state, horizon).unwrap();
            for (p, q) in pmf.iter().zip(&power[row]) {
                assert!((p - q).abs() < 1e-12);
            }
        }
        power = matmul(&power, &spec.transition);
    }
    assert!(matches!(markov_conditional_pmf(&spec, 7.0, 1), Err(SynthError::UnknownState(_))));
}

#[test]
fn degenerate_chains_are_rejected() {
    let periodic = MarkovChainSpec {
        states: vec![0.0, 1.0],
        transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        len: 10,
        seed: 0,
    };
    assert!(matches!(gen_markov(&periodic), Err(SynthError::NotPrimitive)));
    let reducible = MarkovChainSpec {
        transition: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        ..periodic.clone()
    };
    assert!(matches!(gen_markov(&reducible), Err(SynthError::NotPrimitive)));
    let bad_row = MarkovChainSpec {
        transition: vec![vec![0.5, 0.4], vec![0.5, 0.5]],
        ..periodic
    };
    assert!(matches!(gen_markov(&bad_row), Err(SynthError::RowSum { row: 0, .. })));
}
