//! The MLP radiance field: encoded position through a ReLU trunk, a
//! softplus density head, and a sigmoid colour head that also sees the
//! encoded view direction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{encode_into, encoded_len};
use crate::augment::sample_tau_with;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Activation, NumericArray, ParameterStore, Tape, Var};

pub const HEAD_SIGMA: &str = "head.sigma";
pub const HEAD_RGB: &str = "head.rgb";

const DIRECTION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub width: usize,
    pub trunk_depth: usize,
    pub pos_frequencies: usize,
    pub dir_frequencies: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            width: 64,
            trunk_depth: 4,
            pos_frequencies: 6,
            dir_frequencies: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.trunk_depth == 0 {
            return Err(Error::invalid(format!(
                "field needs width ≥ 1 and trunk depth ≥ 1, got {}×{}",
                self.width, self.trunk_depth
            )));
        }
        Ok(())
    }

    /// Layers in evaluation order: `trunk.0 … trunk.{d−1}`, `head.sigma`,
    /// `head.rgb`.
    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut layers = Vec::with_capacity(self.trunk_depth + 2);
        for i in 0..self.trunk_depth {
            let inputs = if i == 0 { encoded_len(self.pos_frequencies) } else { self.width };
            layers.push(LayerInfo {
                name: format!("trunk.{i}"),
                inputs,
                outputs: self.width,
            });
        }
        layers.push(LayerInfo {
            name: HEAD_SIGMA.into(),
            inputs: self.width,
            outputs: 1,
        });
        layers.push(LayerInfo {
            name: HEAD_RGB.into(),
            inputs: self.width + encoded_len(self.dir_frequencies),
            outputs: 3,
        });
        layers
    }
}

pub fn weight_name(layer: &str) -> String {
    format!("{layer}.weight")
}

pub fn bias_name(layer: &str) -> String {
    format!("{layer}.bias")
}

/// Weights of one field (teacher and student each own one).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldParams {
    config: FieldConfig,
    store: ParameterStore,
}

/// Dropout on trunk activations with inverted scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    pub ratio: f64,
    pub seed: u64,
}

impl DropoutSpec {
    pub fn new(ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::invalid(format!("dropout ratio must be in [0,1), got {ratio}")));
        }
        Ok(Self { ratio, seed })
    }
}

/// τ-noise added to the input features of the target layers, scaled by ω.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNoiseSpec {
    pub targets: Vec<String>,
    pub weight: f64,
    pub seed: u64,
    pub bound: f64,
}

impl LayerNoiseSpec {
    /// Targets the two output heads.
    pub fn output_heads(weight: f64, seed: u64, bound: f64) -> Self {
        Self {
            targets: vec![HEAD_RGB.into(), HEAD_SIGMA.into()],
            weight,
            seed,
            bound,
        }
    }

    fn active(&self) -> bool {
        self.weight != 0.0 && !self.targets.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldAugment {
    pub dropout: Option<DropoutSpec>,
    pub layer_noise: Option<LayerNoiseSpec>,
}

impl FieldAugment {
    pub fn none() -> Self {
        Self::default()
    }
}

/// Points to evaluate. `keys` identify each point for its random streams.
#[derive(Clone, Debug, Default)]
pub struct FieldBatch {
    pub positions: Vec<[f64; 3]>,
    pub directions: Vec<[f64; 3]>,
    pub keys: Vec<u64>,
}

impl FieldBatch {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Tape handles for every layer's weight and bias, in layer order.
#[derive(Clone, Debug)]
pub struct FieldVars {
    layers: Vec<(Var, Var)>,
}

#[derive(Clone, Copy, Debug)]
pub struct FieldOutput {
    /// `[points, 1]`, non-negative.
    pub sigma: Var,
    /// `[points, 3]`, in `(0, 1)`.
    pub rgb: Var,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub rgb: [f64; 3],
    pub sigma: f64,
}

impl FieldParams {
    /// Uniform fan-in initialisation for the ReLU trunk, Glorot for the heads,
    /// zero biases.
    pub fn init(config: FieldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Init, &[]);
        let mut store = ParameterStore::new();
        for layer in config.layers() {
            let limit = if layer.name.starts_with("trunk") {
                (6.0 / layer.inputs as f64).sqrt()
            } else {
                (6.0 / (layer.inputs + layer.outputs) as f64).sqrt()
            };
            let weights = (0..layer.inputs * layer.outputs)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            store.insert(
                weight_name(&layer.name),
                NumericArray::matrix(layer.outputs, layer.inputs, weights)?,
            );
            store.insert(bias_name(&layer.name), NumericArray::zeros(&[layer.outputs]));
        }
        Ok(Self { config, store })
    }

    /// Wraps an existing store, checking it against the architecture.
    pub fn from_store(config: FieldConfig, store: ParameterStore) -> Result<Self> {
        config.validate()?;
        let reference = Self::init(config, 0)?;
        reference.store.check_compatible(&store)?;
        Ok(Self { config, store })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn into_store(self) -> ParameterStore {
        self.store
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.config.layers().into_iter().map(|l| l.name).collect()
    }

    pub fn check_same_architecture(&self, other: &FieldParams) -> Result<()> {
        if self.config != other.config {
            return Err(Error::Architecture(format!("{:?} vs {:?}", self.config, other.config)));
        }
        self.store.check_compatible(&other.store)
    }

    /// Puts every layer's weight and bias on the tape, as trainable
    /// parameters or as constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> FieldVars {
        let layers = self
            .config
            .layers()
            .iter()
            .map(|layer| {
                let (w, b) = (weight_name(&layer.name), bias_name(&layer.name));
                let wv = self.store.get(&w).expect("layer weight").clone();
                let bv = self.store.get(&b).expect("layer bias").clone();
                if trainable {
                    (tape.parameter(w, wv), tape.parameter(b, bv))
                } else {
                    (tape.constant(wv), tape.constant(bv))
                }
            })
            .collect();
        FieldVars { layers }
    }

    /// Records the batched field evaluation on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &FieldVars,
        batch: &FieldBatch,
        augment: &FieldAugment,
    ) -> Result<FieldOutput> {
        let n = batch.len();
        if batch.directions.len() != n || batch.keys.len() != n {
            return Err(Error::shape(
                "field forward",
                format!(
                    "{} positions, {} directions, {} keys",
                    n,
                    batch.directions.len(),
                    batch.keys.len()
                ),
            ));
        }
        for d in &batch.directions {
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if (norm - 1.0).abs() > DIRECTION_TOLERANCE {
                return Err(Error::invalid(format!("view direction {d:?} is not unit length ({norm})")));
            }
        }
        let layers = self.config.layers();
        if let Some(noise) = &augment.layer_noise {
            for t in &noise.targets {
                if !layers.iter().any(|l| &l.name == t) {
                    return Err(Error::invalid(format!("layer-noise target `{t}` is not a field layer")));
                }
            }
        }

        let pos_len = encoded_len(self.config.pos_frequencies);
        let dir_len = encoded_len(self.config.dir_frequencies);
        let mut pos_enc = Vec::with_capacity(n * pos_len);
        let mut dir_enc = Vec::with_capacity(n * dir_len);
        for (p, d) in batch.positions.iter().zip(&batch.directions) {
            encode_into(*p, self.config.pos_frequencies, &mut pos_enc);
            encode_into(*d, self.config.dir_frequencies, &mut dir_enc);
        }
        let pos_enc = tape.constant(NumericArray::matrix(n, pos_len, pos_enc)?);
        let dir_enc = tape.constant(NumericArray::matrix(n, dir_len, dir_enc)?);

        let masks = match augment.dropout {
            Some(spec) if spec.ratio > 0.0 => Some(dropout_masks(&self.config, batch, spec)),
            _ => None,
        };
        let mut noise = match &augment.layer_noise {
            Some(spec) if spec.active() => Some(layer_noise(&layers, batch, spec)),
            _ => None,
        };
        let mut perturb = |tape: &mut Tape, index: usize, input: Var| -> Result<Var> {
            match noise.as_mut().and_then(|per_layer| per_layer[index].take()) {
                Some(offset) => tape.add_constant(input, offset),
                None => Ok(input),
            }
        };

        let mut h = pos_enc;
        for i in 0..self.config.trunk_depth {
            let input = perturb(tape, i, h)?;
            let (w, b) = vars.layers[i];
            let pre = tape.affine(input, w, b)?;
            h = tape.activation(pre, Activation::Relu);
            if let Some(masks) = &masks {
                h = tape.mul_constant(h, masks[i].clone())?;
            }
        }

        let sigma_index = self.config.trunk_depth;
        let sigma_in = perturb(tape, sigma_index, h)?;
        let (w, b) = vars.layers[sigma_index];
        let sigma_pre = tape.affine(sigma_in, w, b)?;
        let sigma = tape.activation(sigma_pre, Activation::Softplus);

        let rgb_index = sigma_index + 1;
        let rgb_in = tape.concat_columns(h, dir_enc)?;
        let rgb_in = perturb(tape, rgb_index, rgb_in)?;
        let (w, b) = vars.layers[rgb_index];
        let rgb_pre = tape.affine(rgb_in, w, b)?;
        let rgb = tape.activation(rgb_pre, Activation::Sigmoid);

        Ok(FieldOutput { sigma, rgb })
    }

    /// Forward-only batched evaluation.
    pub fn evaluate_batch(&self, batch: &FieldBatch, augment: &FieldAugment) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let out = self.forward(&mut tape, &vars, batch, augment)?;
        let sigma = tape.value(out.sigma).values().to_vec();
        let rgb = tape
            .value(out.rgb)
            .values()
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Ok((sigma, rgb))
    }

    /// Single-point evaluation.
    pub fn evaluate(
        &self,
        point: [f64; 3],
        dir: [f64; 3],
        dropout: Option<DropoutSpec>,
        layer_noise: Option<LayerNoiseSpec>,
    ) -> Result<FieldSample> {
        let batch = FieldBatch {
            positions: vec![point],
            directions: vec![dir],
            keys: vec![0],
        };
        let augment = FieldAugment { dropout, layer_noise };
        let (sigma, rgb) = self.evaluate_batch(&batch, &augment)?;
        Ok(FieldSample {
            rgb: rgb[0],
            sigma: sigma[0],
        })
    }
}

/// Inverted-dropout masks, one `[points, width]` array per trunk layer.
/// Each point's keep/drop draws come from its own stream, so the mask for a
/// given (seed, key) is the same at every ratio up to the threshold.
fn dropout_masks(config: &FieldConfig, batch: &FieldBatch, spec: DropoutSpec) -> Vec<NumericArray> {
    let n = batch.len();
    let width = config.width;
    let keep_scale = 1.0 / (1.0 - spec.ratio);
    let mut masks: Vec<Vec<f64>> = vec![Vec::with_capacity(n * width); config.trunk_depth];
    for &key in &batch.keys {
        let mut rng = stream_rng(spec.seed, Stream::Dropout, &[key]);
        for mask in masks.iter_mut() {
            for _ in 0..width {
                let u: f64 = rng.random();
                mask.push(if u < spec.ratio { 0.0 } else { keep_scale });
            }
        }
    }
    masks
        .into_iter()
        .map(|m| NumericArray::matrix(n, width, m).expect("sized above"))
        .collect()
}

/// `ω·ε` offsets for each targeted layer's input; `None` for untouched
/// layers. ε is drawn per feature element, fresh for every point.
fn layer_noise(layers: &[super::LayerInfo], batch: &FieldBatch, spec: &LayerNoiseSpec) -> Vec<Option<NumericArray>> {
    let n = batch.len();
    let targeted: Vec<bool> = layers.iter().map(|l| spec.targets.contains(&l.name)).collect();
    let mut buffers: Vec<Option<Vec<f64>>> = layers
        .iter()
        .zip(&targeted)
        .map(|(l, &t)| t.then(|| Vec::with_capacity(n * l.inputs)))
        .collect();
    for &key in &batch.keys {
        let mut rng = stream_rng(spec.seed, Stream::LayerNoise, &[key]);
        for (layer, buf) in layers.iter().zip(buffers.iter_mut()) {
            if let Some(buf) = buf {
                for _ in 0..layer.inputs {
                    buf.push(spec.weight * sample_tau_with(&mut rng, spec.bound));
                }
            }
        }
    }
    layers
        .iter()
        .zip(buffers)
        .map(|(l, buf)| buf.map(|b| NumericArray::matrix(n, l.inputs, b).expect("sized above")))
        .collect()
}
