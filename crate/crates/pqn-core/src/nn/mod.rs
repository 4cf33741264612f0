//! Minimal differentiable building blocks: parameters, a per-pass gradient
//! tape, dense and LSTM layers, and the Adam optimizer.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod param;
pub mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{check_gradients, GradCheck, FD_STEP};
pub use layers::{dense_forward, lstm_step, Activation, Dense, LstmCell, LstmCellState, LstmVars};
pub use param::{ParamId, ParamStore, ParamTensor};
pub use tape::{Gradients, Tape, Var};

/// Half-width of the uniform weight initialisation.
pub const INIT_BOUND: f64 = 0.08;
