use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Linear-interpolation percentile (`0 <= p <= 100`) of sorted data.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p / 100.0;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Resamples `series` with replacement `resamples` times, takes the
/// `alpha`-percentile of each resample and returns their mean with a 95%
/// percentile interval.
pub fn bootstrap_expected_demand(
    series: &[f64],
    alpha: f64,
    resamples: usize,
    rng: &mut impl Rng,
) -> BootstrapEstimate {
    let n = series.len();
    if n == 0 || resamples == 0 {
        return BootstrapEstimate {
            estimate: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
        };
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (n - 1) as f64 * alpha / 100.0;
    let lo_rank = h.floor() as usize;
    let hi_rank = (lo_rank + 1).min(n - 1);
    let frac = h - lo_rank as f64;

    // A resample is a multiset of positions in `sorted`, so its order
    // statistics come from a cumulative walk over the position counts.
    let mut counts = vec![0u32; n];
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        let (mut lo_val, mut hi_val) = (None, None);
        let mut seen = 0usize;
        for (i, &c) in counts.iter().enumerate() {
            seen += c as usize;
            if lo_val.is_none() && seen > lo_rank {
                lo_val = Some(sorted[i]);
            }
            if seen > hi_rank {
                hi_val = Some(sorted[i]);
                break;
            }
        }
        let (lo_val, hi_val) = (lo_val.unwrap(), hi_val.unwrap());
        stats.push(lo_val + frac * (hi_val - lo_val));
    }
    let estimate = stats.iter().sum::<f64>() / resamples as f64;
    stats.sort_by(f64::total_cmp);
    BootstrapEstimate {
        estimate,
        ci_low: percentile_sorted(&stats, 2.5),
        ci_high: percentile_sorted(&stats, 97.5),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straightforward resampling: materialize, sort, interpolate.
    fn naive(series: &[f64], alpha: f64, b: usize, rng: &mut impl Rng) -> f64 {
        let mut sorted = series.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for _ in 0..b {
            let mut sample: Vec<f64> =
                (0..sorted.len()).map(|_| sorted[rng.random_range(0..sorted.len())]).collect();
            sample.sort_by(f64::total_cmp);
            total += percentile_sorted(&sample, alpha);
        }
        total / b as f64
    }

    #[test]
    fn constant_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = bootstrap_expected_demand(&[7.0; 50], 80.0, 200, &mut rng);
        assert_eq!(est.estimate, 7.0);
        assert_eq!(est.ci_high - est.ci_low, 0.0);
    }

    #[test]
    fn one_to_hundred_matches_naive_oracle() {
        let series: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        let est = bootstrap_expected_demand(&series, 80.0, 1000, &mut ChaCha8Rng::seed_from_u64(42));
        assert!((75.0..=85.0).contains(&est.estimate), "{est:?}");
        let oracle = naive(&series, 80.0, 1000, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(est.estimate, oracle);
        assert!(est.ci_low <= est.estimate && est.estimate <= est.ci_high);
    }

    #[test]
    fn alpha_hundred_never_exceeds_max() {
        let series: Vec<f64> = (0..40).map(|x| ((x * 37) % 23) as f64).collect();
        let est = bootstrap_expected_demand(&series, 100.0, 300, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(est.estimate <= 22.0);
        assert!(est.ci_high <= 22.0);
    }

    #[test]
    fn empty_series() {
        let est = bootstrap_expected_demand(&[], 80.0, 100, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(est.estimate, 0.0);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile_sorted(&[1.0, 2.0, 3.0, 4.0, 5.0], 80.0), 4.2);
        assert_eq!(percentile_sorted(&[1.0, 2.0], 100.0), 2.0);
    }
}
