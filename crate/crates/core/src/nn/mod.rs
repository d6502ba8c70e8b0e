//! Minimal neural-network toolkit: flat parameter storage, a tape-based
//! reverse-mode differentiation engine, and an Adam optimizer.
//!
//! Everything operates on `f64` vectors. Networks in this crate are small
//! (hidden widths ≤ 128), so clarity and exact, finite-difference-verifiable
//! gradients are worth more than vectorized throughput.

mod adam;
mod params;
mod tape;

pub use adam::Adam;
pub use params::{Init, ParamArray, ParamSet};
pub use tape::{Tape, Var};
