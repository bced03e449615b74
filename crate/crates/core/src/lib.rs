//! Verification and construction toolkit for Morse quasigeodesics and Morse actions
//! on the symmetric space `SL(n,ℝ)/SO(n)`.
//!
//! Layers, bottom-up:
//! - [`symspace`]: points, isometries, Cartan projection, regularity, Finsler distance;
//! - [`flags`]: partial flags, ζ-angles, antipodality, parallel sets, cones and diamonds;
//! - [`straightness`]: straight/spaced sequences and the quadruple condition;
//! - [`morsecheck`]: Morse quasigeodesic certificates and local-to-global promotion;
//! - [`schottky`]: Schottky subgroups from a generic pair of axial isometries;
//! - [`recognizer`]: the staged semidecision procedure for free-group actions.

// Negated comparisons reject NaN on purpose; index loops walk parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibration;
pub mod error;
pub mod flags;
pub mod io;
pub mod linalg;
pub mod morsecheck;
pub mod paths;
pub mod recognizer;
pub mod sampling;
pub mod schottky;
pub mod straightness;
pub mod symspace;
pub mod words;

pub use error::{MorseError, Result};
