//! Deterministic low-discrepancy sample points over a box.

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Van der Corput radical inverse of `index` in base `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    r
}

/// Points per seed; different seeds draw disjoint runs of the sequence.
pub const SEED_STRIDE: u64 = 1 << 20;

/// The `k`-th Halton point in the unit cube of dimension `dim`. The sequence
/// index is `seed·SEED_STRIDE + k + 1`, so the origin is never produced.
pub fn halton_unit(k: u64, seed: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton sampling supports at most {} dimensions", PRIMES.len());
    let index = seed.wrapping_mul(SEED_STRIDE).wrapping_add(k + 1);
    PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
}

/// `count` Halton points mapped affinely into `bounds`.
pub fn halton_box(bounds: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count as u64)
        .map(|k| {
            halton_unit(k, seed, bounds.len())
                .into_iter()
                .zip(bounds)
                .map(|(u, &(lo, hi))| lo + u * (hi - lo))
                .collect()
        })
        .collect()
}

/// Like [`halton_box`] but shrunk towards the center by `margin` (a fraction
/// of each side), for checks that need strictly interior points.
pub fn halton_interior(bounds: &[(f64, f64)], count: usize, seed: u64, margin: f64) -> Vec<Vec<f64>> {
    let shrunk: Vec<(f64, f64)> = bounds
        .iter()
        .map(|&(lo, hi)| {
            let d = (hi - lo) * margin;
            (lo + d, hi - d)
        })
        .collect();
    halton_box(&shrunk, count, seed)
}

/// All 2^n corners of the box.
pub fn box_corners(bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let n = bounds.len();
    (0..1usize << n)
        .map(|mask| {
            bounds
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| if mask >> i & 1 == 1 { hi } else { lo })
                .collect()
        })
        .collect()
}
