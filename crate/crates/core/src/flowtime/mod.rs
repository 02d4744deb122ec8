//! Maximum (weighted) flow-time with rejection.

mod alg_a;
mod alg_b;
mod baseline;
mod unit;

pub use alg_a::{AlgA, Variant};
pub use alg_b::Coupled;
pub use baseline::SrptBaseline;
pub use unit::FtUnit;
