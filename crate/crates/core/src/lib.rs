//! Driver action prediction with deep bidirectional recurrent networks.
//!
//! The crate covers the whole pipeline on windowed multimodal time series:
//!
//! * [`numeric`]: dense matrices, activations, initialization, seeded RNG
//! * [`cells`]: simple RNN, LSTM and GRU steps with analytic gradients
//! * [`network`]: bidirectional layers, deep stacks, the Bi-LSTM → GRU
//!   classifier and its model file
//! * [`training`]: cross-entropy, backpropagation through time, clipping,
//!   Adam with step decay, the epoch loop
//! * [`datapipe`]: session ingestion, 10 Hz resampling, threshold action
//!   recognition, window labeling, class balancing, session-level splits
//! * [`synthgen`]: synthetic sessions with planted actions and precursors
//! * [`evaluation`]: piecewise metrics versus time-to-event

pub mod cells;
pub mod datapipe;
pub mod error;
pub mod evaluation;
pub mod network;
pub mod numeric;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
