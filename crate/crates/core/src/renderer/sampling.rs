use rand::Rng;

use crate::error::{Error, Result};

/// Sample depths along a ray with their spacings; the last spacing runs to
/// the far bound.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDepths {
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
}

/// One draw per equal-width bin of `[near, far]`, or the bin midpoints when
/// `jitter` is `None`.
pub fn stratified_sample<R: Rng + ?Sized>(
    near: f64,
    far: f64,
    count: usize,
    jitter: Option<&mut R>,
) -> Result<SampleDepths> {
    if !(near >= 0.0 && near < far && far.is_finite()) {
        return Err(Error::invalid(format!("need 0 ≤ near < far, got near={near}, far={far}")));
    }
    if count == 0 {
        return Err(Error::invalid("at least one sample per ray is required"));
    }
    let width = (far - near) / count as f64;
    let depths: Vec<f64> = match jitter {
        Some(rng) => (0..count)
            .map(|i| near + (i as f64 + rng.random::<f64>()) * width)
            .collect(),
        None => (0..count).map(|i| near + (i as f64 + 0.5) * width).collect(),
    };
    let mut deltas: Vec<f64> = depths.windows(2).map(|w| w[1] - w[0]).collect();
    deltas.push(far - depths[count - 1]);
    Ok(SampleDepths { depths, deltas })
}
