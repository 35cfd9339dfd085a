//! Differentially private simple and polynomial linear regression from
//! refined simplex sufficient statistics (DP-RSS), with the DP-SS and
//! DP-Theil-Sen baselines and a Monte Carlo evaluation harness.
//!
//! ```
//! use dprss::mechanisms::{dp_rss_fit, PrivacyBudget};
//! use dprss::noise::RandomStream;
//! use dprss::simplex::records_from_pairs;
//!
//! let data = records_from_pairs(&[(0.0, 0.2), (0.5, 0.45), (1.0, 0.7)]).unwrap();
//! let mut stream = RandomStream::new(7, 0);
//! let fit = dp_rss_fit(&data, PrivacyBudget::new(1e6).unwrap(), &mut stream);
//! assert!((fit.alpha_hat - 0.5).abs() < 1e-2);
//! ```

pub mod cli;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod mechanisms;
pub mod noise;
pub mod simplex;

pub use error::{DpError, Result};
pub use mechanisms::{FitResult, PolyFitResult, PrivacyBudget};
pub use noise::{NoiseSource, RandomStream, ZeroNoise};
pub use simplex::Record;
