//! Data-augmentation Gibbs samplers for Bayesian probit regression, coupled
//! versions of them, meeting-time based total-variation bounds, and the
//! closed-form mixing-time bounds they are compared against.
//!
//! ```
//! use nalgebra::DMatrix;
//! use probit_mixing::model::{build_cache, PriorPrecision, PriorSpec, ProbitModel};
//! use probit_mixing::samplers::{da_step, sample_prior_start};
//! use rand::SeedableRng;
//!
//! let x = DMatrix::from_element(20, 1, 1.0);
//! let prior = PriorSpec::new(PriorPrecision::Isotropic { variance: 1.0 });
//! let model = ProbitModel::new(x, vec![true; 20], prior).unwrap();
//! let cache = build_cache(&model).unwrap();
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let mut state = sample_prior_start(&cache, &model, &mut rng);
//! for _ in 0..100 {
//!     da_step(&mut state, &cache, &model, &mut rng);
//! }
//! assert!(state.z.iter().all(|&z| z > 0.0));
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bounds;
pub mod couplings;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod farm;
pub mod io;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod samplers;
pub mod special;

pub use error::{Error, Result};
