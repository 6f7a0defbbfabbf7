//! Seed derivation and counter-based random numbers.

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent and a stream index.
pub fn mix(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Derives a seed from a path of indices, e.g. `(root, epoch, batch, sample)`.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &p| mix(s, p))
}

/// Uniform in the open interval (0, 1).
fn unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw that depends only on `(seed, counter)`.
pub fn counter_normal(seed: u64, counter: u64) -> f64 {
    let a = mix(seed, counter.wrapping_mul(2));
    let b = mix(seed, counter.wrapping_mul(2).wrapping_add(1));
    let (u1, u2) = (unit(a), unit(b));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
