use iclcover::Error;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Draws `k` distinct candidates uniformly without replacement, in random order.
///
/// `stream` separates draws that share a seed, e.g. one stream per test
/// instance, so each draw is reproducible on its own.
pub fn random_select(candidates: &[String], k: usize, seed: u64, stream: u64) -> Result<Vec<String>, Error> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > candidates.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot draw {k} demonstrations from {} candidates",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok(index::sample(&mut rng, candidates.len(), k)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn whole_pool_when_k_equals_n() {
        let pool = ids(6);
        let mut got = random_select(&pool, 6, 3, 0).unwrap();
        got.sort();
        assert_eq!(got, pool);
    }

    #[test]
    fn same_seed_same_draw() {
        let pool = ids(50);
        assert_eq!(random_select(&pool, 8, 42, 5).unwrap(), random_select(&pool, 8, 42, 5).unwrap());
        assert_ne!(random_select(&pool, 8, 42, 5).unwrap(), random_select(&pool, 8, 42, 6).unwrap());
    }

    #[test]
    fn rejects_bad_k() {
        assert!(random_select(&ids(3), 4, 0, 0).is_err());
        assert!(random_select(&ids(3), 0, 0, 0).is_err());
    }

    #[test]
    fn single_draws_are_uniform() {
        // 10k draws from 4 ids: each count ~ Binomial(10000, 1/4), sigma ≈ 43.3
        let pool = ids(4);
        let mut counts = [0usize; 4];
        for seed in 0..10_000u64 {
            let pick = random_select(&pool, 1, seed, 0).unwrap();
            counts[pool.iter().position(|p| *p == pick[0]).unwrap()] += 1;
        }
        let sigma = (10_000.0f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 2500.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }
}
