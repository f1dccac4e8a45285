//! Space-filling designs on the unit hypercube.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng;

/// `n` Latin-hypercube points in `[0, 1]^d`: each axis is cut into `n` strata
/// and every stratum holds exactly one point, jittered uniformly inside it.
pub fn latin_hypercube(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::rng(seed);
    let mut points = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(&mut r);
        for (i, p) in points.iter_mut().enumerate() {
            let u: f64 = r.random();
            p[j] = (perm[i] as f64 + u) / n as f64;
        }
    }
    points
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut v = 0.0;
    while i > 0 {
        v += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    v
}

/// Randomly shifted Halton sequence (Cranley-Patterson rotation) in `[0, 1)^d`.
/// Supports up to 16 dimensions.
pub fn scrambled_halton(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(d <= PRIMES.len(), "Halton pool supports at most {} dimensions", PRIMES.len());
    let mut r = rng::rng(seed);
    let shift: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
    (1..=n as u64)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let v = radical_inverse(i, PRIMES[j]) + shift[j];
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}
