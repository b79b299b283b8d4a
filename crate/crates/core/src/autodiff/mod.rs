//! Dense `f64` tensors, a reverse-mode gradient tape, and Adam.

mod adam;
mod gradcheck;
mod kernels;
mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, grad_check_at, REL_FLOOR};
pub use ops::{concat_channels, shuffle_index};
pub use params::{ParamCursor, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
