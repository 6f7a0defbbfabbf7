/// Sinusoidal encoding of a scalar time: `sin(t / 10000^{2i/d})` at even
/// positions and the matching cosine at odd positions.
pub fn time_encoding(t: f64, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(2.0 * i as f64 / dim as f64);
        let arg = t / freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_in_unit_range_and_injective_on_grid() {
        let grid: Vec<Vec<f64>> = (0..=1000).map(|k| time_encoding(k as f64 / 1000.0, 8)).collect();
        assert!(grid.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        for w in grid.windows(2) {
            assert_ne!(w[0], w[1]);
        }
        assert_eq!(time_encoding(0.0, 8), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn fine_grid_separates_nearby_times() {
        // |t - t'| > 1e-6 on [0, 1] must give distinct encodings.
        let a = time_encoding(0.5, 8);
        let b = time_encoding(0.5 + 2e-6, 8);
        assert_ne!(a, b);
    }
}
