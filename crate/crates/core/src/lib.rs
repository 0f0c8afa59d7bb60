//! Constrained multivariate Hawkes processes with exponential kernels.
//!
//! Marks `1..=p` excite each other through a fertility matrix; an integer
//! state `S` in `Z_+^q` moves by a jump vector at each event and blocks
//! marks whose constraint sets contain the current value. The crate
//! simulates the embedded chain exactly, classifies ergodicity, estimates
//! the scaling limit of weighted counts, and ships an order-book preset.

pub mod access;
pub mod ergodicity;
pub mod error;
pub mod estimate;
pub mod hawkes;
pub mod linalg;
pub mod lob;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use hawkes::{simulate, ChainState, Event, EventLog, PathSeed, StopRule};
pub use model::{load_spec, lob_preset, ModelSpec, WeightFunction};
