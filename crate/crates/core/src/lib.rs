//! Instruction sequences over boolean-register services, the mechanisms
//! that put them into effect (direct stepping, a generated interpreter,
//! compilation, fragment-wise expansion) and a classifier that says which
//! runs are executions, interpretations or neither.

pub mod compile;
pub mod engine;
pub mod inseq;
pub mod inseqex;
pub mod interp;
pub mod mechanism;
pub mod run;
pub mod service;
pub mod trace;
