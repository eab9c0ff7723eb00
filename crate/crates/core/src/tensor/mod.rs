//! Dense arrays and reverse-mode differentiation for small MLPs.

mod array;
mod gradcheck;
mod params;
mod tape;

pub use array::NumericArray;
pub use gradcheck::finite_difference_check;
pub use params::{GradientSet, ParameterStore};
pub use tape::{forward_activation, forward_affine, sigmoid, Activation, Adjoints, CustomOp, Tape, Var};
