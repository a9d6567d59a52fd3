use oist_core::model::*;
use oist_core::rng::{stream, Purpose};

fn empirical_cov(signal: &SignalVector, omega: f64, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = signal.p();
    let mut rng = stream(seed, 0, Purpose::Samples);
    let mut y = vec![0.0; p];
    let mut sum = vec![0.0; p];
    let mut cov = vec![vec![0.0; p]; p];
    for _ in 0..n {
        fill_sample(signal, omega, &mut rng, &mut y);
        for i in 0..p {
            sum[i] += y[i];
            for j in 0..p {
                cov[i][j] += y[i] * y[j];
            }
        }
    }
    let n = n as f64;
    cov.iter_mut().flatten().for_each(|v| *v /= n);
    sum.iter_mut().for_each(|v| *v /= n);
    (cov, sum)
}

#[test]
fn pure_noise_has_identity_covariance() {
    let signal = SignalVector { xi: vec![2.0, 0.0, 0.0, 0.0] };
    let (cov, _) = empirical_cov(&signal, 0.0, 100_000, 11);
    for i in 0..4 {
        for j in 0..4 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((cov[i][j] - want).abs() <= 0.05, "({i},{j}) {}", cov[i][j]);
        }
    }
}

#[test]
fn spiked_covariance() {
    let r2 = 2f64.sqrt();
    let signal = SignalVector { xi: vec![r2, r2, 0.0, 0.0] };
    let omega = 1.0;
    let (cov, _) = empirical_cov(&signal, omega, 1_000_000, 12);
    for i in 0..4 {
        for j in 0..4 {
            let want = if i == j { 1.0 } else { 0.0 } + omega / 4.0 * signal.xi[i] * signal.xi[j];
            assert!((cov[i][j] - want).abs() <= 0.01, "({i},{j}) {} vs {want}", cov[i][j]);
        }
    }
}

#[test]
fn samples_are_centered() {
    let prior = Prior::two_point(0.05).unwrap();
    let signal = draw_signal(&prior, 64, 5).unwrap();
    let (_, mean) = empirical_cov(&signal, 1.0, 100_000, 13);
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm <= 0.05 * 8.0, "{norm}");
}

#[test]
fn deterministic_branch() {
    let prior = Prior::two_point(0.05).unwrap();
    let signal = draw_signal(&prior, 100, 3).unwrap();
    let mut y = vec![0.0; 100];
    compose_sample(&signal, 2.0, 1.0, &[0.0; 100], &mut y);
    for (v, xi) in y.iter().zip(&signal.xi) {
        assert_eq!(*v, (2.0f64 / 100.0).sqrt() * xi);
    }
}

#[test]
fn signal_concentration() {
    let prior = Prior::two_point(0.05).unwrap();
    let p = 10_000;
    let nonzero = 1.0 / 0.05f64.sqrt();
    let mut mean = 0.0;
    for seed in 0..100 {
        let s = draw_signal(&prior, p, seed).unwrap();
        let count = s.xi.iter().filter(|&&v| v != 0.0).count() as f64;
        assert!((count - 500.0).abs() <= 5.0 * (p as f64 * 0.05 * 0.95).sqrt());
        assert!(s.xi.iter().all(|&v| v == 0.0 || v == nonzero));
        let m2 = s.norm_sq() / p as f64;
        assert!((m2 - 1.0).abs() <= 5.0 * (prior.variance_of_square() / p as f64).sqrt());
        mean += m2 / 100.0;
    }
    assert!((mean - 1.0).abs() <= 0.02);
}

#[test]
fn signal_is_reproducible() {
    let prior = Prior::signed_two_point(0.1).unwrap();
    assert_eq!(draw_signal(&prior, 500, 42).unwrap(), draw_signal(&prior, 500, 42).unwrap());
    assert_ne!(draw_signal(&prior, 500, 42).unwrap(), draw_signal(&prior, 500, 43).unwrap());
}

#[test]
fn discretized_bernoulli_gaussian() {
    for (rho, n) in [(0.5, 10), (0.05, 21), (0.2, 40)] {
        let d = discretize_prior(&Prior::bernoulli_gaussian(rho).unwrap(), n).unwrap();
        assert!(d.is_discrete());
        assert!((d.total_weight() - 1.0).abs() <= 1e-12);
        assert!((d.second_moment() - 1.0).abs() <= 1e-8);
        let zero: f64 = d.atoms().iter().filter(|a| a.value == 0.0).map(|a| a.weight).sum();
        assert!(zero >= 1.0 - rho - 1e-12);
    }
    let tp = Prior::two_point(0.05).unwrap();
    assert_eq!(discretize_prior(&tp, 7).unwrap(), tp);
    assert!(discretize_prior(&Prior::bernoulli_gaussian(0.5).unwrap(), 1).is_err());
}
