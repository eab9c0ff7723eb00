//! Float RGB images and their PNG / raw exports.

use std::path::Path;

use crate::error::{Error, Result};

/// RGB image with one `[f64; 3]` per pixel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("image dimensions must be positive, got {width}×{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::shape(
                "ImageBuffer::new",
                format!("{} pixels for {width}×{height}", pixels.len()),
            ));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn clipped(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(|c| c.clamp(0.0, 1.0))).collect(),
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let mut out = image::RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in out.pixels_mut().enumerate() {
            let p = self.pixels[i];
            *px = image::Rgb(p.map(to_u8));
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Row-major little-endian `f64` dump, three values per pixel.
    pub fn to_raw_f64(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.iter().flat_map(|c| c.to_le_bytes()))
            .collect()
    }

    pub fn from_raw_f64(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 24 {
            return Err(Error::Format {
                kind: "raw image",
                detail: format!("{} bytes for {width}×{height}", bytes.len()),
            });
        }
        let pixels = bytes
            .chunks_exact(24)
            .map(|c| {
                let v = |i: usize| f64::from_le_bytes(c[i * 8..i * 8 + 8].try_into().unwrap());
                [v(0), v(1), v(2)]
            })
            .collect();
        Self::new(width, height, pixels)
    }
}

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a per-pixel scalar map as 8-bit grayscale, min→black, max→white.
pub fn save_gray_png(values: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::shape("save_gray_png", format!("{} values for {width}×{height}", values.len())));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = image::GrayImage::new(width as u32, height as u32);
    for (px, &v) in img.pixels_mut().zip(values) {
        *px = image::Luma([to_u8((v - lo) / span)]);
    }
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Writes a boolean mask as black/white grayscale.
pub fn save_mask_png(mask: &[bool], width: usize, height: usize, path: &Path) -> Result<()> {
    let values: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    if values.len() != width * height {
        return Err(Error::shape("save_mask_png", format!("{} values for {width}×{height}", values.len())));
    }
    let mut img = image::GrayImage::new(width as u32, height as u32);
    for (px, &v) in img.pixels_mut().zip(&values) {
        *px = image::Luma([to_u8(v)]);
    }
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_raw_exports() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::new(2, 1, vec![[1.2, 0.5, -0.1], [0.0, 1.0, 0.25]]).unwrap();
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        let back = image::open(&path).unwrap().to_rgb8();
        assert_eq!(back.get_pixel(0, 0).0, [255, 128, 0]);
        assert_eq!(back.get_pixel(1, 0).0, [0, 255, 64]);

        let raw = img.to_raw_f64();
        assert_eq!(ImageBuffer::from_raw_f64(2, 1, &raw).unwrap(), img);
        save_gray_png(&[0.0, 2.0], 2, 1, &dir.path().join("g.png")).unwrap();
        save_mask_png(&[true, false], 2, 1, &dir.path().join("m.png")).unwrap();
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(ImageBuffer::new(0, 3, vec![]).is_err());
        assert!(ImageBuffer::new(2, 2, vec![[0.0; 3]; 3]).is_err());
    }
}
