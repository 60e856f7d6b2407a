//! Acoustic scene classification toolkit.

pub mod audio;
pub mod augment;
pub mod frontend;
pub mod fusion;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;
