//! Counterfactual trajectory prediction.
//!
//! A factual forward pass and a counterfactual pass (with the history feature
//! replaced by an intervention) run through the same predictor; their
//! difference is the causal prediction that gets trained and evaluated.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod error;
pub mod data;
pub mod grad;
pub mod model;
pub mod causal;
pub mod forge;
pub mod harness;

pub use error::{Error, Result};
