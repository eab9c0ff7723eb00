use super::{GradientSet, ParameterStore};
use crate::error::{Error, Result};

/// Compares analytic gradients against central differences for every scalar
/// parameter and returns the worst relative error.
///
/// `objective` must return the loss and its analytic gradient at the given
/// parameters. The relative error denominator is
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_difference_check<F>(objective: F, params: &ParameterStore, step: f64) -> Result<f64>
where
    F: Fn(&ParameterStore) -> Result<(f64, GradientSet)>,
{
    if !(step > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let (base, analytic) = objective(params)?;
    let (again, _) = objective(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic {
            first: base,
            second: again,
        });
    }
    let analytic = analytic.completed_for(params)?;

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    for name in &names {
        let grad = analytic.get(name).expect("completed").values().to_vec();
        for (i, &a) in grad.iter().enumerate() {
            let original = params.get(name).expect("listed").values()[i];

            probe.get_mut(name).unwrap().values_mut()[i] = original + step;
            let (plus, _) = objective(&probe)?;
            probe.get_mut(name).unwrap().values_mut()[i] = original - step;
            let (minus, _) = objective(&probe)?;
            probe.get_mut(name).unwrap().values_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
