use rand::seq::index::sample;

use crate::rng::seeded;
use crate::scalar::Real;

/// Distinct coordinates in `0..n`, at most `k` of them, chosen by seed.
pub fn sample_coords(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed);
    let mut v = sample(&mut rng, n, k.min(n)).into_vec();
    v.sort_unstable();
    v
}

/// Largest relative disagreement between `analytic` and central finite
/// differences of `loss` over `coords`:
/// `|g_an - g_fd| / max(1e-8, |g_an| + |g_fd|)`.
pub fn grad_check<T: Real>(
    mut loss: impl FnMut(&[T]) -> T,
    params: &[T],
    analytic: &[T],
    fd_step: T,
    coords: &[usize],
) -> T {
    assert!(fd_step > T::zero(), "finite-difference step must be positive");
    assert_eq!(params.len(), analytic.len(), "gradient length");
    let mut work = params.to_vec();
    let floor = T::lit(1e-8);
    let two = T::lit(2.0);
    let mut worst = T::zero();
    for &i in coords {
        let orig = work[i];
        work[i] = orig + fd_step;
        let up = loss(&work);
        work[i] = orig - fd_step;
        let down = loss(&work);
        work[i] = orig;
        let fd = (up - down) / (two * fd_step);
        let an = analytic[i];
        let rel = (an - fd).abs() / floor.max(an.abs() + fd.abs());
        worst = worst.max(rel);
    }
    worst
}
