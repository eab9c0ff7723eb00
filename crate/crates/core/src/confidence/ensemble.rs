use serde::{Deserialize, Serialize};

use super::hsv::{hsv_mask, HsvThresholds};
use crate::error::{Error, Result};
use crate::field::{DropoutSpec, FieldAugment, FieldParams};
use crate::image::ImageBuffer;
use crate::renderer::{render_image, AugmentedField, Camera, RenderConfig};

/// Dropout ratios of the Monte-Carlo ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub ratios: Vec<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            ratios: vec![0.0, 0.05, 0.15, 0.20],
        }
    }
}

impl EnsembleConfig {
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        let c = Self { ratios };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(Error::invalid("ensemble needs at least one dropout ratio"));
        }
        for (i, r) in self.ratios.iter().enumerate() {
            if !(0.0..1.0).contains(r) {
                return Err(Error::invalid(format!("dropout ratio {r} outside [0,1)")));
            }
            if self.ratios[..i].contains(r) {
                return Err(Error::invalid(format!("dropout ratio {r} listed twice")));
            }
        }
        Ok(())
    }
}

/// One render of the frozen teacher per dropout ratio. All renders share the
/// ray sampling in `config`; the ratio-0 render is the plain render.
pub fn render_ensemble(
    teacher: &FieldParams,
    camera: &Camera,
    config: &RenderConfig,
    ensemble: &EnsembleConfig,
    dropout_seed: u64,
) -> Result<Vec<ImageBuffer>> {
    ensemble.validate()?;
    ensemble
        .ratios
        .iter()
        .map(|&ratio| {
            let out = if ratio == 0.0 {
                render_image(teacher, camera, config, None)?
            } else {
                let source = AugmentedField {
                    params: teacher,
                    augment: FieldAugment {
                        dropout: Some(DropoutSpec::new(ratio, dropout_seed)?),
                        layer_noise: None,
                    },
                };
                render_image(&source, camera, config, None)?
            };
            Ok(out.image)
        })
        .collect()
}

/// Per pixel: population variance across the stack for each channel,
/// averaged over channels and negated (higher = more confident).
pub fn epistemic_map(stack: &[ImageBuffer]) -> Result<Vec<f64>> {
    let [first, rest @ ..] = stack else {
        return Err(Error::invalid("epistemic map needs at least two renders"));
    };
    if rest.is_empty() {
        return Err(Error::invalid("epistemic map needs at least two renders"));
    }
    if rest.iter().any(|img| !img.same_dims(first)) {
        return Err(Error::shape("epistemic_map", "renders differ in size"));
    }
    let k = stack.len() as f64;
    let mut column = Vec::with_capacity(stack.len());
    let scores = (0..first.pixel_count())
        .map(|p| {
            let mut total = 0.0;
            for c in 0..3 {
                column.clear();
                column.extend(stack.iter().map(|img| img.pixels()[p][c]));
                // order-independent sums
                column.sort_by(f64::total_cmp);
                let mean = column.iter().sum::<f64>() / k;
                total += column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
            }
            -(total / 3.0)
        })
        .collect();
    Ok(scores)
}

/// Epistemic scores plus the HSV pass/fail mask of the ratio-0 render.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap {
    pub width: usize,
    pub height: usize,
    pub scores: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ConfidenceMap {
    /// `stack[0]` must be the ratio-0 render.
    pub fn from_stack(stack: &[ImageBuffer], thresholds: &HsvThresholds) -> Result<Self> {
        let scores = epistemic_map(stack)?;
        let base = &stack[0];
        Ok(Self {
            width: base.width(),
            height: base.height(),
            scores,
            mask: hsv_mask(base, thresholds),
        })
    }
}
