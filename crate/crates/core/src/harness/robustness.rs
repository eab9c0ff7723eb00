use std::fmt::Write as _;

use super::metrics::psnr;
use crate::error::{Error, Result};
use crate::renderer::{render_image, DensityNoise, RadianceSource, RenderAugment, RenderConfig};
use crate::trainer::ViewSet;

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessReport {
    pub amplitude: f64,
    /// `(clean, noisy)` PSNR per view.
    pub per_view: Vec<(f64, f64)>,
}

impl RobustnessReport {
    pub fn mean_clean(&self) -> f64 {
        self.per_view.iter().map(|v| v.0).sum::<f64>() / self.per_view.len() as f64
    }

    pub fn mean_noisy(&self) -> f64 {
        self.per_view.iter().map(|v| v.1).sum::<f64>() / self.per_view.len() as f64
    }

    /// Mean PSNR lost to the density noise.
    pub fn drop(&self) -> f64 {
        self.mean_clean() - self.mean_noisy()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("density noise amplitude {}\nview  clean_psnr  noisy_psnr\n", self.amplitude);
        for (i, (c, n)) in self.per_view.iter().enumerate() {
            let _ = writeln!(out, "{i:<5} {c:>10.4}  {n:>10.4}");
        }
        let _ = writeln!(
            out,
            "mean  {:>10.4}  {:>10.4}  (drop {:.4} dB)",
            self.mean_clean(),
            self.mean_noisy(),
            self.drop()
        );
        out
    }
}

/// Renders every view clean and with `σ′ = max(0, σ + u)`, `u ~ U(−a, a)`
/// per sample, scoring both against the views' ground truth.
pub fn robustness_report(
    source: &dyn RadianceSource,
    views: &ViewSet,
    amplitude: f64,
    config: &RenderConfig,
    seed: u64,
) -> Result<RobustnessReport> {
    views.validate()?;
    if views.is_empty() {
        return Err(Error::invalid("no views to evaluate"));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::invalid(format!("noise amplitude must be non-negative, got {amplitude}")));
    }
    let plain = RenderConfig {
        jitter: false,
        ..config.clone()
    };
    let noise = RenderAugment {
        weight_perturb: None,
        density_noise: Some(DensityNoise { amplitude, seed }),
    };
    let mut per_view = Vec::with_capacity(views.len());
    for (cam, gt) in views.cameras.iter().zip(&views.images) {
        let clean = render_image(source, cam, &plain, None)?.image;
        let noisy = render_image(source, cam, &plain, Some(&noise))?.image;
        per_view.push((psnr(&clean, gt)?, psnr(&noisy, gt)?));
    }
    Ok(RobustnessReport { amplitude, per_view })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{make_scene, SyntheticScene};

    fn small(spec: SyntheticScene) -> crate::harness::Scene {
        let mut spec = spec;
        spec.rig.width = 16;
        spec.rig.height = 16;
        make_scene(&spec, 2, 0, 0.5, 3.5).unwrap()
    }

    #[test]
    fn zero_amplitude_changes_nothing() {
        let scene = small(SyntheticScene::default_scene());
        let config = RenderConfig {
            samples: 32,
            ..RenderConfig::default()
        };
        let r = robustness_report(&scene.field, &scene.train, 0.0, &config, 4).unwrap();
        assert!(r.per_view.iter().all(|(c, n)| c == n));
        assert_eq!(r.drop(), 0.0);
    }

    #[test]
    fn large_noise_degrades_an_empty_scene() {
        // a grey backdrop so that spurious black density shows up
        let scene = small(SyntheticScene {
            background: [0.6; 3],
            ..SyntheticScene::empty()
        });
        let config = RenderConfig {
            background: [0.6; 3],
            ..RenderConfig::default()
        };
        let r = robustness_report(&scene.field, &scene.train, 5.0, &config, 4).unwrap();
        assert_eq!(r.mean_clean(), crate::harness::PSNR_CAP);
        assert!(r.mean_noisy() < r.mean_clean());
        assert!(r.to_text().contains("drop"));
    }

    #[test]
    fn rejects_negative_amplitude() {
        let scene = small(SyntheticScene::empty());
        assert!(robustness_report(&scene.field, &scene.train, -1.0, &RenderConfig::default(), 0).is_err());
    }
}
