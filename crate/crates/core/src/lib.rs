pub mod chain;
pub mod diff;
pub mod error;
pub mod flow;
pub mod iso;
pub mod lie;
pub mod linalg;
pub mod poly;
pub mod quadrature;
pub mod rep;
pub mod scenario;
pub mod slice;
pub mod spectra;

pub use error::{Error, Result};
