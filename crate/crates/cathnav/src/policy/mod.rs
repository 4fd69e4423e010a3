//! Action-prediction models: the cross-attention policy and the
//! kinematics-only LSTM baseline.

pub mod cva;
pub mod lstm;

pub use cva::{build_cross_mask, count_params, CvaCache, CvaPolicy, ForwardOpts};
pub use lstm::{LstmCache, LstmPolicy};
