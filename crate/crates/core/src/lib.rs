//! Lipschitz GAN laboratory.
//!
//! The crate is `no_std` (with `alloc`) and contains only the numerical
//! machinery; file formats and the command-line front end live in the
//! `lipgan` crate.
//!
//! * [`autodiff`]: reverse-mode differentiation over dense `f64` tensors whose
//!   backward pass is itself a differentiable graph, so penalties on
//!   `‖∇ₓf‖` can be differentiated with respect to network parameters.
//! * [`loss`]: the `(φ, ϕ, ψ)` discriminator/generator loss family and the
//!   admissibility checker.
//! * [`penalty`]: blend-region sampling and the GP, LP and max-gradient
//!   penalties.
//! * [`train`]: MLPs, Adam and the alternating critic/generator loop on
//!   synthetic 2-D data.
//! * [`ot`]: exact discrete optimal transport, both Wasserstein dual forms,
//!   closed-form optimal discriminators and bounding-relationship checks.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod autodiff;
pub mod field;
pub mod loss;
pub(crate) mod math;
pub mod ot;
pub mod penalty;
pub mod tensor;
pub mod train;

pub use autodiff::{ExprGraph, GraphError, NodeId};
pub use tensor::Tensor;
