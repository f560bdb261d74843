//! Deterministic low-discrepancy points for multistart sampling.
//!
//! Kronecker/Weyl sequences: frac(n * sqrt(p_d)) with a distinct prime per
//! dimension. Reproducible across runs and platforms without carrying an
//! RNG dependency; a seed just offsets the index.

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// n-th element of the 1-d Weyl sequence for dimension slot `dim`, in [0, 1).
pub fn weyl(n: u64, dim: usize) -> f64 {
    let alpha = (PRIMES[dim % PRIMES.len()] as f64).sqrt().fract();
    // split the multiply to keep the fractional part accurate for large n
    let hi = (n >> 20) as f64 * ((1u64 << 20) as f64 * alpha).fract();
    let lo = (n & 0xF_FFFF) as f64 * alpha;
    (hi.fract() + lo.fract()).fract()
}



#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stays_in_unit_interval() {
        for n in 0..10_000u64 {
            for d in 0..6 {
                let x = weyl(n, d);
                assert!((0.0..1.0).contains(&x), "weyl({n}, {d}) = {x}");
            }
        }
    }

    #[test]
    fn roughly_equidistributed() {
        // crude: mean of the first 4096 points is near 1/2 in every dimension
        for d in 0..4 {
            let mean: f64 = (1..=4096u64).map(|n| weyl(n, d)).sum::<f64>() / 4096.0;
            assert!((mean - 0.5).abs() < 0.02, "dim {d}: mean {mean}");
        }
    }
}
