//! Symbolic-numeric geometrothermodynamics.
//!
//! Thermodynamic fundamental equations are written as expressions
//! ([`symexpr`]); from them the crate builds Legendre-invariant metrics on
//! the equilibrium manifold ([`contact`]), computes their curvature
//! ([`geometry`]), and integrates geodesics with singularity-aware
//! termination ([`geodesic`]). The van der Waals gas has a dedicated
//! module ([`vdw`]).

// `!(x > 0.0)` deliberately rejects NaN; tensor code indexes several
// arrays with the same loop variables.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod contact;
pub mod geodesic;
pub mod geometry;
pub mod symexpr;
pub mod vdw;
