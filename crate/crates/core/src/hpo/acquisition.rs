use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::gp::Surrogate;

pub const CANDIDATES: usize = 2048;
const PRIMES: [u32; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Expected improvement over `best` for a maximized objective.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let gain = mean - best;
    if !(std > 0.0) {
        return gain.max(0.0);
    }
    let z = gain / std;
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    (gain * n.cdf(z) + std * n.pdf(z)).max(0.0)
}

/// Radical inverse of `i` in `base`.
fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut f = 1.0 / b;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base as u64) as f64;
        i /= base as u64;
        f /= b;
    }
    r
}

/// Halton point `index` (0-based sequence position `index + 1`).
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    assert!(
        dim <= PRIMES.len(),
        "halton supports up to {} dimensions",
        PRIMES.len()
    );
    PRIMES[..dim]
        .iter()
        .map(|&p| radical_inverse(index as u64 + 1, p))
        .collect()
}

/// `n` Halton points under a random toroidal shift.
pub fn shifted_halton(n: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..n)
        .map(|i| {
            halton(i, dim)
                .iter()
                .zip(&shift)
                .map(|(h, s)| (h + s).fract())
                .collect()
        })
        .collect()
}

/// Candidate with the largest EI; the first scanned wins ties.
pub fn maximize_ei(s: &Surrogate, best: f64, candidates: &[Vec<f64>]) -> (usize, f64) {
    let mut winner = (0, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let (m, sd) = s.posterior(c);
        let ei = expected_improvement(m, sd, best);
        if ei > winner.1 {
            winner = (i, ei);
        }
    }
    winner
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    #[test]
    fn degenerate_cases() {
        assert_eq!(expected_improvement(0.5, 0.0, 0.7), 0.0);
        assert_eq!(expected_improvement(0.9, 0.0, 0.7), 0.9 - 0.7);
        assert!((expected_improvement(0.3, 1.0, 0.3) - 0.398942).abs() < 1e-6);
    }

    #[test]
    fn monte_carlo_oracle() {
        let (mu, sigma, best): (f64, f64, f64) = (0.8, 0.05, 0.82);
        let normal = rand_distr::Normal::new(mu, sigma).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let n = 2_000_000;
        let mc = (0..n)
            .map(|_| (normal.sample(&mut rng) - best).max(0.0))
            .sum::<f64>()
            / n as f64;
        assert!((mc - expected_improvement(mu, sigma, best)).abs() < 1e-3);
    }

    #[test]
    fn halton_prefix() {
        assert_eq!(halton(0, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(1, 2), vec![0.25, 2.0 / 3.0]);
        assert_eq!(halton(2, 1), vec![0.75]);
    }

    proptest! {
        #[test]
        fn monotone_in_sigma_and_mean(mu in -1.0f64..1.0, gap in 0.001f64..1.0, s1 in 0.001f64..1.0, ds in 0.001f64..1.0) {
            let best = mu + gap;
            prop_assert!(expected_improvement(mu, s1 + ds, best) >= expected_improvement(mu, s1, best));
            prop_assert!(expected_improvement(mu + ds, s1, best) >= expected_improvement(mu, s1, best));
        }

        #[test]
        fn shifted_points_in_cube(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for p in shifted_halton(64, 3, &mut rng) {
                prop_assert!(p.iter().all(|v| (0.0..1.0).contains(v)));
            }
        }
    }
}
