use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// `(h°, s, v)` with `h ∈ [0, 360)`, `h = 0` for greys.
pub fn rgb_to_hsv(rgb: [f64; 3]) -> Result<(f64, f64, f64)> {
    if rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::invalid(format!("rgb components must lie in [0,1], got {rgb:?}")));
    }
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let v = max;
    let s = if max > 0.0 { chroma / max } else { 0.0 };
    if chroma == 0.0 {
        return Ok((0.0, s, v));
    }
    let sector = if max == r {
        ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    let h = (60.0 * sector).rem_euclid(360.0);
    Ok((h, s, v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsvThresholds {
    pub v_lower: f64,
    pub s_lower: f64,
}

impl HsvThresholds {
    pub fn new(v_lower: f64, s_lower: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v_lower) || !(0.0..=1.0).contains(&s_lower) {
            return Err(Error::invalid(format!(
                "HSV thresholds must lie in [0,1], got v={v_lower}, s={s_lower}"
            )));
        }
        Ok(Self { v_lower, s_lower })
    }
}

impl Default for HsvThresholds {
    fn default() -> Self {
        Self {
            v_lower: 0.2,
            s_lower: 0.2,
        }
    }
}

/// `true` where `v ≥ v_lower` and `s ≥ s_lower`; failing pixels form the
/// dark / low-saturation region.
pub fn hsv_mask(image: &ImageBuffer, thresholds: &HsvThresholds) -> Vec<bool> {
    image
        .pixels()
        .iter()
        .map(|p| {
            let (_, s, v) = rgb_to_hsv(p.map(|c| c.clamp(0.0, 1.0))).expect("clamped");
            v >= thresholds.v_lower && s >= thresholds.s_lower
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
        let c = v * s;
        let hp = h / 60.0;
        let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
        let (r, g, b) = match hp as u32 {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        let m = v - c;
        [r + m, g + m, b + m]
    }

    #[test]
    fn reference_triples() {
        assert_eq!(rgb_to_hsv([1.0, 0.0, 0.0]).unwrap(), (0.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv([0.5, 0.5, 0.5]).unwrap(), (0.0, 0.0, 0.5));
        let (h, s, v) = rgb_to_hsv([0.2, 0.4, 0.6]).unwrap();
        assert!((h - 210.0).abs() < 1e-9);
        assert!((s - 2.0 / 3.0).abs() < 1e-9);
        assert!((v - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(rgb_to_hsv([1.1, 0.0, 0.0]).is_err());
        assert!(HsvThresholds::new(1.2, 0.0).is_err());
    }

    #[test]
    fn mask_semantics() {
        let grey = ImageBuffer::filled(3, 3, [0.5; 3]).unwrap();
        assert!(hsv_mask(&grey, &HsvThresholds::new(0.0, 0.0).unwrap()).iter().all(|m| *m));
        assert!(hsv_mask(&grey, &HsvThresholds::new(1.0, 1.0).unwrap()).iter().all(|m| !*m));

        let img = ImageBuffer::new(2, 1, vec![[0.2, 0.0, 0.0], [0.5, 0.0, 0.0]]).unwrap();
        assert_eq!(hsv_mask(&img, &HsvThresholds::new(0.3, 0.0).unwrap()), vec![false, true]);
    }

    proptest! {
        #[test]
        fn round_trips_through_inverse(r in 0.0f64..=1.0, g in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (h, s, v) = rgb_to_hsv([r, g, b]).unwrap();
            prop_assume!(s > 0.0);
            prop_assert!((0.0..360.0).contains(&h));
            let back = hsv_to_rgb(h, s, v);
            for (x, y) in back.iter().zip([r, g, b]) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
