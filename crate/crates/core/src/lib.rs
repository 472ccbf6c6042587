//! Joint analysis-synthesis dictionary learning with a low-rank shared
//! dictionary, for patch-based image classification.
//!
//! Training alternates closed-form block updates over class dictionaries
//! `D_c`, class analysis operators `A_c`, a shared dictionary `D_0` kept low
//! rank by singular value thresholding, and a shared analysis operator
//! `A_0`. A patch `y` is classified with matrix-vector products only: the
//! class `c` minimizing `||y - D_c A_c y - D_0 A_0 y||^2`. Image decisions
//! aggregate the patch labels either as a positive-patch ratio or as the
//! largest 8-connected positive region.
//!
//! With the `parallel` feature (default) batch classification, the per-class
//! training phase and cross-validation folds run on rayon; without it the
//! same code runs sequentially with identical results.

pub mod bench;
pub mod classifier;
pub mod commands;
pub mod data;
pub mod error;
pub mod instrument;
pub mod io;
pub mod model;
pub mod numerics;
pub mod par;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{AlsfModel, Codes, Hyperparams, ResidualMode, TrainingSet};
pub use numerics::{Matrix, Vector};
pub use par::ExecPolicy;
