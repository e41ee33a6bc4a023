//! Compact weighted binary codes learned by large-margin column generation.
//!
//! The crate covers the whole learning and inference path without touching
//! the filesystem:
//!
//! * [`data`] holds datasets, patch collections and nearest-neighbour triplet
//!   mining in the original feature space.
//! * [`hashfn`] holds linear threshold hash functions and packed codes.
//! * [`loss`] holds the logistic loss, its conjugate, and the penalties.
//! * [`trainer`] runs column generation: weak-learner search, totally
//!   corrective weight solves, and KKT dual updates.
//! * [`hamming`] computes weighted Hamming distances (naive and 8-bit lookup
//!   tables) and exact top-k retrieval.
//! * [`classify`] provides NBNN, image-to-class and kNN classifiers on codes.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod classify;
pub mod data;
mod error;
pub mod hamming;
pub mod hashfn;
pub mod loss;
mod matrix;
pub mod qn;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
