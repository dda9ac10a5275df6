//! Counter-based hashing used by the synthetic model, so every value it
//! produces is a pure function of (seed, coordinates).

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn hash(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix(seed), |acc, &w| splitmix(acc ^ splitmix(w)))
}

/// Uniform in [0, 1).
pub(crate) fn uniform(seed: u64, words: &[u64]) -> f64 {
    (hash(seed, words) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box-Muller over two hashed uniforms.
pub(crate) fn normal(seed: u64, words: &[u64]) -> f64 {
    let h = hash(seed, words);
    let u1 = ((splitmix(h) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    let u2 = (splitmix(h ^ GOLDEN) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_spread() {
        assert_eq!(hash(1, &[2, 3]), hash(1, &[2, 3]));
        assert_ne!(hash(1, &[2, 3]), hash(1, &[3, 2]));
        let n = 20_000;
        let mean = (0..n).map(|i| uniform(7, &[i])).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        let xs: Vec<f64> = (0..n).map(|i| normal(7, &[i])).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        assert!(m.abs() < 0.03 && (v - 1.0).abs() < 0.05, "{m} {v}");
    }
}
