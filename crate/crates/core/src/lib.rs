//! Two-stage (digital + analog) MMSE precoding for massive MIMO downlinks
//! whose transmitter and receivers use 1-bit converters.
//!
//! The crate is organised bottom-up:
//!
//! - [`quant`]: the complex 1-bit quantizer and the second-order statistics of
//!   hard-limited circular Gaussian vectors (arcsine law and its linearization).
//! - [`precoder`]: precoder types, the closed-form MSE objective, its gradient,
//!   power projection and the Wiener-filter baseline.
//! - [`gp`]: the gradient projection optimizer producing the QP-GP precoder pair.
//! - [`sim`]: the end-to-end transmit chain and the Monte Carlo experiments.
//!
//! ```
//! use onebit_precoding::{gp, precoder::SystemDimensions, sim};
//!
//! let dims = SystemDimensions::new(8, 2, 2.0, 10.0).unwrap();
//! let h = sim::draw_channel(&dims, 7);
//! let result = gp::gradient_projection(h.matrix(), &dims, &gp::GpConfig::default()).unwrap();
//! assert!(result.final_mse < result.initial_mse);
//! ```

pub mod error;
pub mod gp;
pub mod linalg;
pub mod precoder;
pub mod quant;
pub mod sim;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, ComplexVector};
