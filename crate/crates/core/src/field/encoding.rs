use std::f64::consts::PI;

/// `(x, sin(2⁰πx), cos(2⁰πx), …, sin(2^{L−1}πx), cos(2^{L−1}πx))`, each
/// sin/cos block covering all three components; length `3 + 6L`.
pub fn positional_encode(x: [f64; 3], frequencies: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(frequencies));
    encode_into(x, frequencies, &mut out);
    out
}

pub fn encoded_len(frequencies: usize) -> usize {
    3 + 6 * frequencies
}

pub(crate) fn encode_into(x: [f64; 3], frequencies: usize, out: &mut Vec<f64>) {
    out.extend_from_slice(&x);
    let mut scale = PI;
    for _ in 0..frequencies {
        for v in x {
            out.push((scale * v).sin());
        }
        for v in x {
            out.push((scale * v).cos());
        }
        scale *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_encodes_to_zero_sines_unit_cosines() {
        let e = positional_encode([0.0; 3], 4);
        assert_eq!(e.len(), 27);
        for f in 0..4 {
            let base = 3 + 6 * f;
            assert_eq!(&e[base..base + 3], &[0.0; 3]);
            assert_eq!(&e[base + 3..base + 6], &[1.0; 3]);
        }
    }

    #[test]
    fn zero_frequencies_is_identity() {
        assert_eq!(positional_encode([0.1, -0.2, 0.3], 0), vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn half_maps_to_quarter_turn() {
        let e = positional_encode([0.5, 0.0, 0.0], 1);
        assert!((e[3] - 1.0).abs() < 1e-15);
        assert!(e[6].abs() < 1e-15);
    }
}
