//! Core of the block-programming robot workbench: the message vocabulary,
//! the differential-drive simulator, the block language and its interpreter.

pub mod msg;
pub mod program;
pub mod runtime;
pub mod sim;
pub mod topics;
