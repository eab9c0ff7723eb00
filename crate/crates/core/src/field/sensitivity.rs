use super::{bias_name, weight_name, FieldParams};
use crate::error::{Error, Result};

/// Per-layer parameter variance across fields trained under different view
/// counts, highest first.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityReport {
    /// `(layer, score)` in layer order.
    pub scores: Vec<(String, f64)>,
    /// Layer names by descending score; ties keep layer order.
    pub ranking: Vec<String>,
}

impl SensitivityReport {
    pub fn score(&self, layer: &str) -> Option<f64> {
        self.scores.iter().find(|(n, _)| n == layer).map(|(_, s)| *s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("rank\tlayer\tscore\n");
        for (rank, name) in self.ranking.iter().enumerate() {
            let score = self.score(name).unwrap_or(f64::NAN);
            out.push_str(&format!("{}\t{name}\t{score:.6e}\n", rank + 1));
        }
        out
    }
}

/// Score of a layer = mean over its scalar parameters (weights and biases)
/// of the population variance of that parameter across `param_sets`.
pub fn layer_sensitivity(param_sets: &[FieldParams]) -> Result<SensitivityReport> {
    let [first, rest @ ..] = param_sets else {
        return Err(Error::invalid("layer sensitivity needs at least two parameter sets"));
    };
    if rest.is_empty() {
        return Err(Error::invalid("layer sensitivity needs at least two parameter sets"));
    }
    for other in rest {
        first.check_same_architecture(other)?;
    }

    let k = param_sets.len() as f64;
    let mut column = Vec::with_capacity(param_sets.len());
    let mut scores = Vec::new();
    for layer in first.layer_names() {
        let mut total = 0.0;
        let mut count = 0usize;
        for name in [weight_name(&layer), bias_name(&layer)] {
            let len = first.store().get(&name).expect("architecture checked").len();
            for i in 0..len {
                column.clear();
                column.extend(param_sets.iter().map(|p| p.store().get(&name).unwrap().values()[i]));
                // sorted so the result does not depend on the order of the sets
                column.sort_by(f64::total_cmp);
                // shifted by the minimum so identical values give exactly 0
                let lo = column[0];
                let mean = column.iter().map(|v| v - lo).sum::<f64>() / k;
                total += column.iter().map(|v| (v - lo - mean) * (v - lo - mean)).sum::<f64>() / k;
                count += 1;
            }
        }
        scores.push((layer, total / count as f64));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].1.total_cmp(&scores[a].1));
    let ranking = order.into_iter().map(|i| scores[i].0.clone()).collect();
    Ok(SensitivityReport { scores, ranking })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldConfig, HEAD_RGB, HEAD_SIGMA};

    fn cfg() -> FieldConfig {
        FieldConfig {
            width: 4,
            trunk_depth: 2,
            pos_frequencies: 1,
            dir_frequencies: 1,
        }
    }

    #[test]
    fn identical_sets_score_zero() {
        let a = FieldParams::init(cfg(), 1).unwrap();
        let r = layer_sensitivity(&[a.clone(), a]).unwrap();
        assert!(r.scores.iter().all(|(_, s)| *s == 0.0));
        assert_eq!(r.ranking[0], "trunk.0");
    }

    #[test]
    fn perturbed_head_ranks_first() {
        let a = FieldParams::init(cfg(), 1).unwrap();
        let mut b = a.clone();
        for v in b.store_mut().get_mut("head.rgb.weight").unwrap().values_mut() {
            *v += 0.5;
        }
        let r = layer_sensitivity(&[a, b]).unwrap();
        assert_eq!(r.ranking[0], HEAD_RGB);
    }

    /// Three sets where trunk.0 parameters take values {0.9, 1.0, 1.1}·c and
    /// head.sigma values {−0.3, 0, 0.3}·c shifted; population variances are
    /// 0.02/3 and 0.18/3, i.e. ratio 9 as in {0.01, 0.09}.
    #[test]
    fn hand_computed_variances() {
        let base = FieldParams::init(cfg(), 1).unwrap();
        let mut sets = vec![base.clone(), base.clone(), base];
        let shifts = [-1.0, 0.0, 1.0];
        for (set, s) in sets.iter_mut().zip(shifts) {
            for (name, v) in set.store_mut().iter_mut() {
                let delta = if name.starts_with("trunk.0") {
                    0.1 * s
                } else if name.starts_with(HEAD_SIGMA) {
                    0.3 * s
                } else {
                    0.0
                };
                for x in v.values_mut() {
                    *x += delta;
                }
            }
        }
        let r = layer_sensitivity(&sets).unwrap();
        assert_eq!(r.ranking[0], HEAD_SIGMA);
        assert_eq!(r.ranking[1], "trunk.0");
        assert!((r.score("trunk.0").unwrap() - 0.02 / 3.0).abs() < 1e-12);
        assert!((r.score(HEAD_SIGMA).unwrap() - 0.18 / 3.0).abs() < 1e-12);
        assert_eq!(r.score("trunk.1").unwrap(), 0.0);
    }

    #[test]
    fn order_of_sets_does_not_matter() {
        let sets: Vec<_> = (0..4).map(|s| FieldParams::init(cfg(), s).unwrap()).collect();
        let forward = layer_sensitivity(&sets).unwrap();
        let mut reversed = sets.clone();
        reversed.reverse();
        assert_eq!(forward, layer_sensitivity(&reversed).unwrap());
        reversed.swap(0, 2);
        assert_eq!(forward, layer_sensitivity(&reversed).unwrap());
    }

    #[test]
    fn rejects_single_set_and_mismatch() {
        let a = FieldParams::init(cfg(), 1).unwrap();
        assert!(layer_sensitivity(&[a.clone()]).is_err());
        let other = FieldParams::init(FieldConfig { width: 5, ..cfg() }, 1).unwrap();
        assert!(layer_sensitivity(&[a, other]).is_err());
    }
}
