//! Probability-domain softening operators for knowledge distillation.
//!
//! The crate is organised bottom-up:
//!
//! - [`simplex`]: validated points on the probability simplex plus entropy,
//!   KL divergence, argmax sets and Dirichlet sampling.
//! - [`softening`]: the power, convex-mixing and entropy-projection operator
//!   families, a deliberately non-conforming fixture, and the logit-domain
//!   softmax reference.
//! - [`topk`]: completion of top-k truncated teacher outputs.
//! - [`axioms`] and [`equiv`]: property checks for the five softening axioms
//!   and brute-force KD-equivalence of operator pairs.
//! - [`sim`]: a desk-scale teacher/student simulator with magnitude pruning,
//!   staged distillation and the bias-variance / homotopy / convergence
//!   harnesses.
//!
//! Sample loops and seed sweeps go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod axioms;
pub mod equiv;
pub mod io;
pub mod par;
pub mod rng;
pub mod sim;
pub mod simplex;
pub mod softening;
pub mod topk;

pub use par::ExecMode;
pub use simplex::{EntropyNats, ProbDist, SimplexError};
pub use softening::{Family, OperatorSpec, Softener, SoftenError, Temperature};
pub use topk::{Completion, TopKError, TruncatedDist};
