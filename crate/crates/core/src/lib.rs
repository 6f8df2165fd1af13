//! Transform-based tensor algebra, tensor sparse coding, frequency-domain
//! dictionary learning and radio-map super-resolution for fingerprint
//! localization.

pub mod adversarial;
pub mod dict;
pub mod error;
pub mod experiments;
pub mod localization;
pub mod radiomap;
pub mod sparse;
pub mod sr;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use radiomap::RadioMap;
pub use tensor::{FreqTensor3, Tensor3};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
