//! Optimally robust estimation on infinitesimal neighborhoods of smooth
//! parametric models.
//!
//! The crate solves for minmax-MSE influence curves on contamination and
//! total-variation neighborhoods, finds the radius-minmax curve for a radius
//! interval, and builds one-step estimators from minimum-distance starts.

pub mod error;
pub mod expectation;
pub mod family;
pub mod optim;
pub mod special;

pub use error::{Error, Result};
pub mod ic;
pub mod data;
pub mod rmx;
pub mod start;
pub mod onestep;
pub mod cniper;
pub mod mc;
