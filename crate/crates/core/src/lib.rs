pub mod disorder;
pub mod error;
pub mod harness;
pub mod lyapunov;
pub mod mat2;
pub mod quad;
pub mod rng;
pub mod scaling;
pub mod spectrum;
pub mod stats;
pub mod waveguide;
pub mod whitenoise;

pub use error::{Error, Result};
pub use mat2::Mat2;
