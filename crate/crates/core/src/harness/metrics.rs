use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Reported for identical images instead of infinity.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check_dims(a: &ImageBuffer, b: &ImageBuffer, op: &'static str) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::shape(
            op,
            format!("{}x{} vs {}x{}", a.width(), a.height(), b.width(), b.height()),
        ));
    }
    Ok(())
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_dims(a, b, "mse")?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>())
        .sum();
    Ok(sum / (3 * a.pixel_count()) as f64)
}

/// `10·log10(1/MSE)` for values in [0, 1], capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (-10.0 * mse.log10()).min(PSNR_CAP)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(plane: &[f64], width: usize, height: usize, g: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = g.len();
    let (ow, oh) = (width - k + 1, height - k + 1);
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * plane[y * width + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Windowed SSIM (11×11 Gaussian, σ = 1.5), per channel, averaged over the
/// valid window positions and the three channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_dims(a, b, "ssim")?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}")));
    }
    let g = gaussian_window();
    let mut total = 0.0;
    for c in 0..3 {
        let x: Vec<f64> = a.pixels().iter().map(|p| p[c]).collect();
        let y: Vec<f64> = b.pixels().iter().map(|p| p[c]).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, ow, oh) = filter_valid(&x, w, h, &g);
        let (my, _, _) = filter_valid(&y, w, h, &g);
        let (sxx, _, _) = filter_valid(&xx, w, h, &g);
        let (syy, _, _) = filter_valid(&yy, w, h, &g);
        let (sxy, _, _) = filter_valid(&xy, w, h, &g);
        let mut acc = 0.0;
        for i in 0..ow * oh {
            let vx = sxx[i] - mx[i] * mx[i];
            let vy = syy[i] - my[i] * my[i];
            let cov = sxy[i] - mx[i] * my[i];
            let num = (2.0 * mx[i] * my[i] + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mx[i] * mx[i] + my[i] * my[i] + SSIM_C1) * (vx + vy + SSIM_C2);
            acc += num / den;
        }
        total += acc / (ow * oh) as f64;
    }
    Ok(total / 3.0)
}
