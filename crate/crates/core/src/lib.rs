//! Alignment of MIDI performances to scanned sheet-music strips.
//!
//! Both modalities are projected into a common "bootleg score" space: a
//! sparse binary image that contains nothing but rectangular notehead blobs.
//! The MIDI side is synthesized from note onsets using each strip's detected
//! staff geometry, the sheet side comes from notehead boxes (or raw ink), and
//! the two are aligned with a block-assembled dynamic time warping.
//!
//! Pipeline, bottom-up:
//!
//! * [`midi`] parses Standard MIDI Files into note onsets.
//! * [`sheet`] loads and binarizes image strips.
//! * [`staff`] finds the grand-staff coordinate system of each strip.
//! * [`bootleg`] synthesizes the MIDI bootleg score in a strip's coordinates.
//! * [`noteheads`] projects sheet strips into bootleg space.
//! * [`align`] builds cost blocks, runs DTW and answers time/pixel queries.
//! * [`eval`] scores alignments against beat annotations.
//! * [`corpus`] generates seeded synthetic test pieces.
//! * [`pipeline`] wires the stages together; [`render`] draws overlays.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod align;
pub mod bootleg;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod mask;
pub mod midi;
pub mod noteheads;
pub mod pipeline;
pub mod render;
pub mod sheet;
pub mod staff;

pub use error::{Error, ErrorKind, Result};
