//! Common-revenue allocation for two-stage production units.
//!
//! The pipeline: a panel of n two-stage DMUs is normalized and split into 2n
//! single-stage sub-DMUs, an aggressive cross-efficiency matrix is computed by
//! linear programming, a transferable-utility game is built from the matrix,
//! and a fixed revenue is allocated by the Shapley value, the least core, or
//! the nucleolus, either directly over the 2n units or per stage.

pub mod alloc;
pub mod cli;
pub mod dea;
pub mod game;
pub mod lp;
pub mod solvers;
