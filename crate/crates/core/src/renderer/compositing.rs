//! Transmittance, sample weights and alpha compositing, plus the same
//! compositing as a differentiable tape op.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::sample_tau_with;
use crate::error::{Error, Result};
use crate::tensor::{CustomOp, NumericArray};

#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    /// `Tᵢ = exp(−Σ_{j<i} σⱼδⱼ)`, with `T₁ = 1`.
    pub transmittance: Vec<f64>,
    /// `wᵢ = Tᵢ(1 − exp(−σᵢδᵢ))`.
    pub weights: Vec<f64>,
    /// Transmittance past the last sample, `T_{N+1}`.
    pub final_transmittance: f64,
}

pub fn compute_weights(sigmas: &[f64], deltas: &[f64]) -> Result<Weights> {
    if sigmas.len() != deltas.len() {
        return Err(Error::shape(
            "compute_weights",
            format!("{} densities vs {} spacings", sigmas.len(), deltas.len()),
        ));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::invalid(format!("density must be non-negative, got {s}")));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::invalid(format!("spacing must be positive, got {d}")));
    }
    Ok(weights_unchecked(sigmas, deltas))
}

fn weights_unchecked(sigmas: &[f64], deltas: &[f64]) -> Weights {
    let n = sigmas.len();
    let mut transmittance = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut depth = 0.0f64;
    for (s, d) in sigmas.iter().zip(deltas) {
        let t = (-depth).exp();
        let tau = s * d;
        transmittance.push(t);
        weights.push(t * -(-tau).exp_m1());
        depth += tau;
    }
    Weights {
        transmittance,
        weights,
        final_transmittance: (-depth).exp(),
    }
}

/// Everything known about the samples of one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySampleBatch {
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    pub transmittance: Vec<f64>,
    pub weights: Vec<f64>,
    pub final_transmittance: f64,
}

impl RaySampleBatch {
    pub fn new(depths: Vec<f64>, deltas: Vec<f64>, sigmas: Vec<f64>, colors: Vec<[f64; 3]>) -> Result<Self> {
        if colors.len() != sigmas.len() || depths.len() != sigmas.len() {
            return Err(Error::shape(
                "RaySampleBatch",
                format!("{} depths, {} densities, {} colours", depths.len(), sigmas.len(), colors.len()),
            ));
        }
        let w = compute_weights(&sigmas, &deltas)?;
        Ok(Self {
            depths,
            deltas,
            sigmas,
            colors,
            transmittance: w.transmittance,
            weights: w.weights,
            final_transmittance: w.final_transmittance,
        })
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weight-averaged depth (unnormalised, as NeRF depth maps).
    pub fn expected_depth(&self) -> f64 {
        self.weights.iter().zip(&self.depths).map(|(w, t)| w * t).sum()
    }
}

/// Additive τ-noise on the compositing weights: `wᵢ + ω·εᵢ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightPerturbSpec {
    pub weight: f64,
    pub bound: f64,
    /// Floor perturbed weights at zero.
    pub clamp: bool,
    pub seed: u64,
}

impl WeightPerturbSpec {
    pub fn is_active(&self) -> bool {
        self.weight != 0.0
    }

    /// `ω·εᵢ` for `n` samples, one ε per sample shared by all channels.
    pub fn draw_offsets<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.weight * sample_tau_with(rng, self.bound)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Composited {
    /// Value used by the losses.
    pub raw: [f64; 3],
    /// Clipped to `[0, 1]` for image assembly.
    pub clipped: [f64; 3],
}

/// `Σ (wᵢ + offsetᵢ)·cᵢ + T_{N+1}·background`, flooring perturbed weights at
/// zero when `clamp` is set.
pub fn composite(batch: &RaySampleBatch, offsets: Option<&[f64]>, clamp: bool, background: [f64; 3]) -> Composited {
    let raw = accumulate(&batch.weights, &batch.colors, offsets, clamp, batch.final_transmittance, background);
    Composited {
        raw,
        clipped: raw.map(|c| c.clamp(0.0, 1.0)),
    }
}

#[inline]
fn effective_weight(w: f64, offset: Option<f64>, clamp: bool) -> f64 {
    match offset {
        Some(o) => {
            let p = w + o;
            if clamp {
                p.max(0.0)
            } else {
                p
            }
        }
        None => w,
    }
}

fn accumulate(
    weights: &[f64],
    colors: &[[f64; 3]],
    offsets: Option<&[f64]>,
    clamp: bool,
    final_transmittance: f64,
    background: [f64; 3],
) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, (w, c)) in weights.iter().zip(colors).enumerate() {
        let w = effective_weight(*w, offsets.map(|o| o[i]), clamp);
        for k in 0..3 {
            out[k] += w * c[k];
        }
    }
    for k in 0..3 {
        out[k] += final_transmittance * background[k];
    }
    out
}

/// Differentiable compositing of `rays × samples` points.
///
/// Inputs: densities `[P, 1]` and colours `[P, 3]` with `P = rays·samples`,
/// ray-major. Output: raw colours `[rays, 3]`.
#[derive(Clone, Debug)]
pub struct CompositeOp {
    pub samples: usize,
    pub deltas: Vec<f64>,
    pub offsets: Option<Vec<f64>>,
    pub clamp: bool,
    pub background: [f64; 3],
}

impl CompositeOp {
    fn rays(&self) -> usize {
        self.deltas.len() / self.samples
    }

    fn check(&self, sigma: &NumericArray, rgb: &NumericArray) -> Result<()> {
        let p = self.deltas.len();
        if self.samples == 0 || p % self.samples != 0 {
            return Err(Error::shape("composite", format!("{p} spacings for {} samples per ray", self.samples)));
        }
        if sigma.shape() != [p, 1] || rgb.shape() != [p, 3] {
            return Err(Error::shape(
                "composite",
                format!("densities {:?}, colours {:?} for {p} samples", sigma.shape(), rgb.shape()),
            ));
        }
        if matches!(&self.offsets, Some(o) if o.len() != p) {
            return Err(Error::shape("composite", "offset count differs from sample count"));
        }
        Ok(())
    }

    fn colors(rgb: &NumericArray, range: std::ops::Range<usize>) -> Vec<[f64; 3]> {
        rgb.values()[range.start * 3..range.end * 3]
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect()
    }
}

impl CustomOp for CompositeOp {
    fn name(&self) -> &'static str {
        "composite"
    }

    fn forward(&self, inputs: &[&NumericArray]) -> Result<NumericArray> {
        let [sigma, rgb] = inputs else {
            return Err(Error::shape("composite", "expects densities and colours"));
        };
        self.check(sigma, rgb)?;
        let n = self.samples;
        let mut out = Vec::with_capacity(self.rays() * 3);
        for r in 0..self.rays() {
            let range = r * n..(r + 1) * n;
            let sig = &sigma.values()[range.clone()];
            let w = compute_weights(sig, &self.deltas[range.clone()])?;
            let offsets = self.offsets.as_ref().map(|o| &o[range.clone()]);
            let colors = Self::colors(rgb, range);
            out.extend(accumulate(&w.weights, &colors, offsets, self.clamp, w.final_transmittance, self.background));
        }
        NumericArray::matrix(self.rays(), 3, out)
    }

    fn backward(&self, inputs: &[&NumericArray], _output: &NumericArray, grad_output: &NumericArray) -> Vec<NumericArray> {
        let (sigma, rgb) = (inputs[0], inputs[1]);
        let n = self.samples;
        let mut g_sigma = vec![0.0; sigma.len()];
        let mut g_rgb = vec![0.0; rgb.len()];
        let mut gw = vec![0.0; n];
        for r in 0..self.rays() {
            let base = r * n;
            let g = &grad_output.values()[r * 3..r * 3 + 3];
            let sig = &sigma.values()[base..base + n];
            let deltas = &self.deltas[base..base + n];
            let w = weights_unchecked(sig, deltas);
            for i in 0..n {
                let c = &rgb.values()[(base + i) * 3..(base + i) * 3 + 3];
                let offset = self.offsets.as_ref().map(|o| o[base + i]);
                let eff = effective_weight(w.weights[i], offset, self.clamp);
                for k in 0..3 {
                    g_rgb[(base + i) * 3 + k] = eff * g[k];
                }
                let passes = match offset {
                    Some(o) if self.clamp => w.weights[i] + o >= 0.0,
                    _ => true,
                };
                gw[i] = if passes { g[0] * c[0] + g[1] * c[1] + g[2] * c[2] } else { 0.0 };
            }
            let g_bg = g[0] * self.background[0] + g[1] * self.background[1] + g[2] * self.background[2];
            // ∂L/∂σₖ = δₖ [T_{k+1} gwₖ − Σ_{i>k} wᵢ gwᵢ − T_{N+1} g·bg]
            let mut tail = 0.0;
            for k in (0..n).rev() {
                let t_next = if k + 1 < n { w.transmittance[k + 1] } else { w.final_transmittance };
                g_sigma[base + k] = deltas[k] * (t_next * gw[k] - tail - w.final_transmittance * g_bg);
                tail += w.weights[k] * gw[k];
            }
        }
        vec![
            NumericArray::new(sigma.shape().to_vec(), g_sigma).unwrap(),
            NumericArray::new(rgb.shape().to_vec(), g_rgb).unwrap(),
        ]
    }
}
