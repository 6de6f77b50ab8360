//! Reverse-mode automatic differentiation on a flat tape, sized for small
//! networks trained on the CPU.
//!
//! All values are 64-bit floats. A [`Tape`] records eagerly-evaluated
//! operations into one contiguous arena; [`Tape::backward`] walks the
//! recording once in reverse. Parameters live outside the tape in a
//! [`ParamStore`] so one set of weights can serve many tapes, optimizer
//! steps, and checkpoints.
//!
//! The op set is exactly what the models here need: dense and 1-D
//! convolutional layers, width-2 max pooling, ReLU/sigmoid/tanh, clamp with
//! a boundary-inclusive subgradient, slicing, concatenation, and reductions.

pub mod check;
pub mod checkpoint;
pub mod nn;
pub mod optim;
pub mod tape;

pub use check::{grad_check, GradCheckReport};
pub use nn::{Conv1dLayer, Dense, Embedding, LstmCell};
pub use optim::{Adam, OptimError};
pub use tape::{ParamId, ParamStore, Tape, ValueId};
