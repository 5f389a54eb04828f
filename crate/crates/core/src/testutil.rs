//! Brute-force oracles shared by unit tests. Deliberately naive and
//! independent of the library code paths they check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Kendall's tau-a over all pairs (inputs without ties).
pub fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len();
    let mut s = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            s += ((x[i] - x[j]) * (y[i] - y[j])).signum();
        }
    }
    s / (m * (m - 1) / 2) as f64
}

pub fn pair_tau(pairs: &[[f64; 2]]) -> f64 {
    let x: Vec<f64> = pairs.iter().map(|p| p[0]).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p[1]).collect();
    brute_tau(&x, &y)
}

/// Kolmogorov–Smirnov distance from the U(0,1) distribution.
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / m - x).max(x - i as f64 / m))
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 0.01.
pub fn ks_critical_01(m: usize) -> f64 {
    1.628 / (m as f64).sqrt()
}

/// Asymptotic KS critical value at level 0.001.
pub fn ks_critical_001(m: usize) -> f64 {
    1.949 / (m as f64).sqrt()
}
