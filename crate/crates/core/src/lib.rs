//! Adams linear multistep schemes applied to multi-scale feature fusion.
//!
//! The crate is organised bottom-up:
//!
//! * [`diffarray`]: rank-3 `f64` tensors, the handful of kernels the fusion
//!   decoder needs, and a reverse-mode tape over them.
//! * [`multistep`]: Adams-Bashforth / Adams-Moulton coefficient tables,
//!   single steps, predictor-corrector composition and a fixed-step IVP solver.
//! * [`fusecore`]: the memory-flow right-hand side `F = -Y + f(Y + g(X))` and
//!   the adaptive start-up scheduler that walks the skip-connection stages.
//! * [`orderlab`]: analytic benchmark problems and order-of-accuracy studies.
//! * [`toyseg`]: a synthetic binary segmentation task used to train the
//!   fusion parameters end to end.

pub mod diffarray;
pub mod error;
pub mod fusecore;
pub mod multistep;
pub mod orderlab;
pub mod toyseg;

pub use error::{Error, Result};
