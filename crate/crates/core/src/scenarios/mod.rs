//! End-to-end case studies and parameter sweeps built on the battle engine.

pub mod genetic;
pub mod presets;
pub mod spectrogram;
pub mod risiren;
pub mod jamming;
pub mod protego;
pub mod irshield;
