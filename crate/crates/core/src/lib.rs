//! Exact computation in the dimension theory of finite lattices and in
//! pointed partially ordered abelian groups.
//!
//! The crate has three layers:
//!
//! * [`lattice`] and [`dimension`] — finite lattices, their dimension
//!   monoids presented by the distance relations, and bounded decision
//!   procedures for the word and divisibility problems.
//! * [`egroup`], [`interp`] and [`iterm`] — the ordered group generated by
//!   relations `0 <= a_xi <= e`, interpolators on `Z^r`, and a term algebra
//!   with evaluation, a sound inequality prover, and a finite-model refuter.
//! * [`freeset`] and [`scenarios`] — finite free-set finders and a suite of
//!   end-to-end verification scenarios built from the layers above.
//!
//! Search-heavy operations run data-parallel under the `parallel` feature
//! (enabled by default) and fall back to sequential scans without it; both
//! paths return the canonically first result, so output never depends on
//! the worker count.

pub mod dimension;
pub mod egroup;
pub mod exec;
pub mod freeset;
pub mod interp;
pub mod iterm;
pub mod lattice;
pub mod scenarios;
