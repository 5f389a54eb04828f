//! Fixtures shared by the benchmarks.

use copula_eda::benchmarks::f_summation_cancellation;
use copula_eda::Population;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An evaluated population with the linear dependences that Summation
/// Cancellation selection produces: each variable roughly cancels the
/// running sum of the previous ones.
pub fn dependent_population(m: usize, n: usize, seed: u64) -> Population {
    let mut r = rng(seed);
    let solutions = (0..m)
        .map(|_| {
            let mut prefix = 0.0;
            (0..n)
                .map(|_| {
                    let x = -0.8 * prefix + 0.05 * (r.random::<f64>() - 0.5);
                    prefix += x;
                    x
                })
                .collect()
        })
        .collect();
    let mut pop = Population::new(solutions);
    pop.evaluate(&f_summation_cancellation).expect("finite objective");
    pop
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shape() {
        let pop = dependent_population(50, 6, 1);
        assert_eq!((pop.len(), pop.dim()), (50, 6));
        assert!(pop.is_evaluated());
    }
}
