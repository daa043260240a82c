//! Space-time reduced-basis (ST-RB) model reduction for parameterized unsteady
//! PDEs, with four matrix-DEIM hyper-reduction variants.
//!
//! The crate contains a desk-scale finite-element full-order solver for heat
//! and Stokes problems ([`fem`], [`timeloop`]), truncated-POD compression in
//! space and time ([`tpod`]), algebraic and functional MDEIM interpolants
//! ([`mdeim`]), the coupled reduced-order online solver ([`rom`]), a
//! posteriori error machinery ([`estimators`]), and a CLI pipeline driver
//! ([`harness`]).
//!
//! Dense labeled 3-axis arrays ("hypermatrices", [`hypermatrix`]) are the
//! data backbone of all compression steps: solution snapshots, operator
//! nonzero snapshots and quadrature-point field snapshots are all stored in
//! the same canonical layout (first axis fastest-varying) so that every
//! flattening is reproducible bit-for-bit across modules.

pub mod error;
pub(crate) mod clock;
pub mod rng;
pub mod sparse;

pub mod hypermatrix;
pub mod tpod;

pub mod fem;
pub mod timeloop;

pub mod mdeim;
pub mod rom;

pub mod estimators;
pub mod harness;

pub use error::{Error, Result};
pub use hypermatrix::{Axis, Hypermatrix, NormMatrix};
