use statrs::distribution::{Beta, ContinuousCDF, Normal};

use mse_core::stochastics::{gl1_cdf, sample_beta, sample_binomial, sample_gl1, sample_multinomial, sample_normal, RngStream};

const DRAWS: usize = 100_000;

fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn binomial_mean_large_n() {
    let mut rng = RngStream::new(1, 0);
    let reps = 200;
    let mean = (0..reps).map(|_| sample_binomial(1_000_000, 0.3, &mut rng).unwrap() as f64).sum::<f64>() / reps as f64;
    let sd_of_mean = (1e6 * 0.3 * 0.7 / reps as f64).sqrt();
    assert!((mean - 3e5).abs() < 3.0 * sd_of_mean, "{mean}");
}

#[test]
fn multinomial_uniform_components() {
    let mut rng = RngStream::new(2, 0);
    let draw = sample_multinomial(100_000, &[0.2; 5], &mut rng).unwrap();
    assert_eq!(draw.iter().sum::<u64>(), 100_000);
    let sd = (1e5 * 0.2 * 0.8f64).sqrt();
    for c in draw {
        assert!((c as f64 - 2e4).abs() < 3.0 * sd, "{c}");
    }
}

#[test]
fn beta_moments() {
    let mut rng = RngStream::new(3, 0);
    let xs: Vec<f64> = (0..DRAWS).map(|_| sample_beta(2.0, 2.0, &mut rng).unwrap()).collect();
    let m = xs.iter().sum::<f64>() / DRAWS as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (DRAWS - 1) as f64;
    assert!((v - 0.05).abs() < 0.001, "{v}");
    let ys: Vec<f64> = (0..DRAWS).map(|_| sample_beta(29.0, 11.0, &mut rng).unwrap()).collect();
    let my = ys.iter().sum::<f64>() / DRAWS as f64;
    let sd = (29.0 * 11.0 / (40.0f64.powi(2) * 41.0) / DRAWS as f64).sqrt();
    assert!((my - 0.725).abs() < 3.0 * sd, "{my}");
}

#[test]
fn kolmogorov_smirnov_continuous() {
    let mut rng = RngStream::new(4, 0);
    for (a, b) in [(0.5, 0.5), (2.0, 5.0), (29.0, 11.0)] {
        let d = Beta::new(a, b).unwrap();
        let xs = (0..DRAWS).map(|_| sample_beta(a, b, &mut rng).unwrap()).collect();
        let ks = ks_distance(xs, |x| d.cdf(x));
        assert!(ks < 0.01, "beta({a},{b}) ks {ks}");
    }
    for (mu, sd) in [(0.0, 1.0), (1.0, 5.0)] {
        let d = Normal::new(mu, sd).unwrap();
        let xs: Vec<f64> = (0..DRAWS).map(|_| sample_normal(mu, sd, &mut rng).unwrap()).collect();
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / DRAWS as f64;
        assert!((var / (sd * sd) - 1.0).abs() < 0.02, "{var}");
        let ks = ks_distance(xs, |x| d.cdf(x));
        assert!(ks < 0.01, "normal({mu},{sd}) ks {ks}");
    }
    for eta in [0.8, 1.0, 1.8] {
        let xs = (0..DRAWS).map(|_| sample_gl1(eta, &mut rng).unwrap()).collect();
        let ks = ks_distance(xs, |x| gl1_cdf(eta, x));
        assert!(ks < 0.01, "gl1({eta}) ks {ks}");
    }
}

#[test]
fn child_streams_do_not_overlap() {
    let base = RngStream::new(9, 3);
    let a: Vec<u64> = (0..64).map(|_| sample_binomial(1 << 30, 0.5, &mut base.child(0)).unwrap()).collect();
    let b: Vec<u64> = (0..64).map(|_| sample_binomial(1 << 30, 0.5, &mut base.child(1)).unwrap()).collect();
    assert_ne!(a, b);
    assert!(a.windows(2).all(|w| w[0] == w[1]), "fresh child streams restart identically");
}
