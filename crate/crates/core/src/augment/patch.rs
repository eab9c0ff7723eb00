//! Patch sampling and the brightest-colour dilation that simulates
//! sparse-view blur.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub side: usize,
    pub window: usize,
}

impl PatchSpec {
    pub fn new(side: usize, window: usize) -> Result<Self> {
        if window % 2 == 0 {
            return Err(Error::invalid(format!("dilation window must be odd, got {window}")));
        }
        if side < window {
            return Err(Error::invalid(format!(
                "patch side {side} is smaller than the dilation window {window}"
            )));
        }
        Ok(Self { side, window })
    }
}

/// A square block of contiguous pixels, listed row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Patch {
    pub x0: usize,
    pub y0: usize,
    pub side: usize,
    pub pixels: Vec<(usize, usize)>,
}

impl Patch {
    pub fn at(x0: usize, y0: usize, side: usize) -> Self {
        let pixels = (0..side)
            .flat_map(|dy| (0..side).map(move |dx| (x0 + dx, y0 + dy)))
            .collect();
        Self { x0, y0, side, pixels }
    }

    /// Position of image pixel `(x, y)` inside the patch, if covered.
    pub fn local_index(&self, x: usize, y: usize) -> Option<usize> {
        let inside = x >= self.x0 && y >= self.y0 && x < self.x0 + self.side && y < self.y0 + self.side;
        inside.then(|| (y - self.y0) * self.side + (x - self.x0))
    }
}

/// Uniformly random top-left corner among all placements that fit.
pub fn sample_patch<R: Rng + ?Sized>(width: usize, height: usize, spec: &PatchSpec, rng: &mut R) -> Result<Patch> {
    if spec.side == 0 || spec.side > width || spec.side > height {
        return Err(Error::invalid(format!(
            "patch side {} does not fit a {width}×{height} image",
            spec.side
        )));
    }
    let x0 = rng.random_range(0..=width - spec.side);
    let y0 = rng.random_range(0..=height - spec.side);
    Ok(Patch::at(x0, y0, spec.side))
}

#[inline]
fn brightness(rgb: &[f64; 3]) -> f64 {
    rgb[0].max(rgb[1]).max(rgb[2])
}

/// For each pixel, the row-major index of the brightest pixel (HSV value,
/// `max(r,g,b)`) in its `window × window` neighbourhood clipped to the grid.
/// Ties go to the first pixel in row-major order.
pub fn brightest_sources(pixels: &[[f64; 3]], width: usize, height: usize, window: usize) -> Result<Vec<usize>> {
    if pixels.len() != width * height {
        return Err(Error::shape(
            "brightest_dilate",
            format!("{} pixels for a {width}×{height} grid", pixels.len()),
        ));
    }
    if window % 2 == 0 {
        return Err(Error::invalid(format!("dilation window must be odd, got {window}")));
    }
    let r = window / 2;
    let mut sources = Vec::with_capacity(pixels.len());
    for y in 0..height {
        for x in 0..width {
            let mut best = y * width + x;
            let mut best_v = f64::NEG_INFINITY;
            for ny in y.saturating_sub(r)..=(y + r).min(height - 1) {
                for nx in x.saturating_sub(r)..=(x + r).min(width - 1) {
                    let idx = ny * width + nx;
                    let v = brightness(&pixels[idx]);
                    if v > best_v {
                        best_v = v;
                        best = idx;
                    }
                }
            }
            sources.push(best);
        }
    }
    Ok(sources)
}

/// Replaces each pixel with the full colour of its brightest neighbour.
pub fn brightest_dilate(pixels: &[[f64; 3]], width: usize, height: usize, window: usize) -> Result<Vec<[f64; 3]>> {
    let sources = brightest_sources(pixels, width, height, window)?;
    Ok(sources.into_iter().map(|s| pixels[s]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use crate::rng::StreamRng;

    const BLACK: [f64; 3] = [0.0; 3];
    const WHITE: [f64; 3] = [1.0; 3];

    fn impulse(side: usize, at: (usize, usize)) -> Vec<[f64; 3]> {
        let mut img = vec![BLACK; side * side];
        img[at.1 * side + at.0] = WHITE;
        img
    }

    #[test]
    fn spec_validation() {
        assert!(PatchSpec::new(8, 4).is_err());
        assert!(PatchSpec::new(2, 3).is_err());
        assert!(PatchSpec::new(3, 3).is_ok());
    }

    #[test]
    fn full_image_patch_has_single_corner() {
        let mut rng = StreamRng::seed_from_u64(0);
        let spec = PatchSpec::new(8, 3).unwrap();
        for _ in 0..20 {
            let p = sample_patch(8, 8, &spec, &mut rng).unwrap();
            assert_eq!((p.x0, p.y0), (0, 0));
            assert_eq!(p.pixels.len(), 64);
        }
        assert!(sample_patch(4, 8, &spec, &mut rng).is_err());
    }

    #[test]
    fn patch_pixels_are_row_major_and_contiguous() {
        let p = Patch::at(2, 5, 3);
        assert_eq!(p.pixels[0], (2, 5));
        assert_eq!(p.pixels[1], (3, 5));
        assert_eq!(p.pixels[3], (2, 6));
        assert_eq!(p.local_index(4, 7), Some(8));
        assert_eq!(p.local_index(5, 7), None);
    }

    #[test]
    fn uniform_patch_is_fixed_point() {
        let img = vec![[0.3, 0.6, 0.1]; 25];
        assert_eq!(brightest_dilate(&img, 5, 5, 3).unwrap(), img);
    }

    #[test]
    fn impulse_spreads_to_window() {
        let out = brightest_dilate(&impulse(5, (2, 2)), 5, 5, 3).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let inside = (1..=3).contains(&x) && (1..=3).contains(&y);
                assert_eq!(out[y * 5 + x], if inside { WHITE } else { BLACK }, "({x},{y})");
            }
        }
    }

    #[test]
    fn two_window3_passes_equal_one_window5_on_impulse() {
        for at in [(3, 3), (0, 0), (6, 2)] {
            let img = impulse(7, at);
            let twice = brightest_dilate(&brightest_dilate(&img, 7, 7, 3).unwrap(), 7, 7, 3).unwrap();
            let once = brightest_dilate(&img, 7, 7, 5).unwrap();
            assert_eq!(twice, once);
        }
    }

    #[test]
    fn ties_take_row_major_first() {
        let mut img = vec![BLACK; 9];
        img[1] = [0.0, 0.8, 0.0];
        img[3] = [0.8, 0.0, 0.0];
        let out = brightest_dilate(&img, 3, 3, 3).unwrap();
        assert_eq!(out[4], [0.0, 0.8, 0.0]);
    }

    fn grid() -> impl Strategy<Value = Vec<[f64; 3]>> {
        prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 36)
    }

    proptest! {
        #[test]
        fn never_darkens(img in grid()) {
            let out = brightest_dilate(&img, 6, 6, 3).unwrap();
            for (a, b) in img.iter().zip(&out) {
                prop_assert!(brightness(b) >= brightness(a));
            }
        }

        #[test]
        fn brightness_composes_like_a_max_filter(img in grid()) {
            let twice = brightest_dilate(&brightest_dilate(&img, 6, 6, 3).unwrap(), 6, 6, 3).unwrap();
            let once = brightest_dilate(&img, 6, 6, 5).unwrap();
            for (a, b) in twice.iter().zip(&once) {
                prop_assert_eq!(brightness(a), brightness(b));
            }
        }

        #[test]
        fn idempotent_on_window_closed_images(colour in prop::array::uniform3(0.0f64..1.0), window in 0usize..3) {
            let window = 2 * window + 1;
            let flat = vec![colour; 36];
            let once = brightest_dilate(&flat, 6, 6, window).unwrap();
            prop_assert_eq!(&once, &flat);
            prop_assert_eq!(brightest_dilate(&once, 6, 6, window).unwrap(), once);
        }
    }
}
