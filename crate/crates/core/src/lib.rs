//! Two-stage windowed classification of multichannel time-series recordings.
//!
//! A recording carries one normal/abnormal label, but models are trained on
//! fixed-length windows that inherit that label. When abnormal activity is
//! temporally isolated, many inherited window labels are wrong; this crate
//! makes that label noise measurable and provides the machinery to study two
//! mitigations: longer windows and a trained second-stage arbitration model
//! that fuses per-window abnormality scores into one per-recording decision.
//!
//! The pipeline, end to end:
//!
//! 1. [`synth`] generates seeded multichannel recordings whose abnormal
//!    examples contain isolated transient bursts, so ground truth per window
//!    is known exactly.
//! 2. [`windowing`] segments recordings into non-overlapping windows with
//!    inherited labels and measures the label-noise rate.
//! 3. [`first_stage`] extracts spectral/amplitude features per window and
//!    trains an [`mlp`] scorer that emits per-window abnormality
//!    probabilities.
//! 4. [`arbitration`] turns a recording's score sequence into a single
//!    decision: mean rule, threshold rule, or a trained MLP over raw /
//!    histogram / hybrid encodings of the scores.
//! 5. [`evaluation`] computes confusion metrics and runs the seeded
//!    experiment protocols (seed grids, window-length sweeps, architecture
//!    grids).
//!
//! Everything is deterministic given the configured seeds.

pub mod arbitration;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod first_stage;
pub mod label;
pub mod mlp;
pub mod persist;
pub mod spectrum;
pub mod synth;
pub mod windowing;

pub use error::{Error, Result};
pub use label::Label;
