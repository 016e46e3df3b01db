//! Backstepping synthesis of incrementally stabilizing controllers for
//! strict-feedback systems, with numerical certification of the resulting
//! contraction metrics and exponential trajectory bounds.
//!
//! The pipeline is: describe a system with [`expr`] text ([`model`]), build a
//! controller and metric with [`synthesis`], then check the contraction
//! inequalities pointwise ([`verify`]) and along simulated trajectory pairs
//! ([`sim`]). [`examples`] holds the built-in systems together with
//! independent closed-form oracles for them.

pub mod autodiff;
pub mod error;
pub mod examples;
pub mod expr;
pub mod model;
pub mod sampling;
pub mod sim;
pub mod synthesis;
pub mod verify;

pub use autodiff::{Dual, Scalar};
pub use error::{DomainError, Error, Result};
pub use expr::{parse, Bindings, Expression};
pub use model::{Interval, ParametricForm, ParametricStrictFeedbackSystem, StrictFeedbackSystem, VectorField};
pub use synthesis::{MetricField, SynthesizedController};
