//! A configurable test oracle that identifies TP/FP/FN object detections by
//! comparing an object-list recording from a system under test against a
//! reference-system recording. Every degree of freedom of the comparison is
//! an explicit configuration field; every verdict is auditable back to the
//! configuration section that produced it.

pub mod config;
pub mod engine;
pub mod filters;
pub mod geometry;
pub mod matching;
pub mod model;
pub mod synth;
pub mod temporal;
pub mod verdict;
