//! Differentiable embedding network and the reverse-mode machinery behind the
//! inner and outer loops.

mod grad;
mod net;
mod scalar;
mod tape;

pub use grad::{
    finite_difference_grad, grad, hessian_vector, inner_trajectory, inner_update, meta_gradient,
    value_and_grad, MetaGradient, MetaOrder, OuterFn, ParamFn,
};
pub use net::{layer_norm, Activation, EmbeddingNet, LayoutEntry, ParamVector};
pub use scalar::{Dual, Scalar};
pub use tape::{Tape, Var};
