//! Teacher-side confidence: dropout-ensemble variance, the HSV mask, and
//! top-κ pseudo-label selection.

mod ensemble;
mod hsv;
mod select;

pub use ensemble::{epistemic_map, render_ensemble, ConfidenceMap, EnsembleConfig};
pub use hsv::{hsv_mask, rgb_to_hsv, HsvThresholds};
pub use select::{map_similarity, select_pseudo, PseudoLabel, PseudoLabelSet, PSEUDO_FORMAT_VERSION};
