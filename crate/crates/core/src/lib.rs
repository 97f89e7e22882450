//! Exact, certificate-carrying constructions for free actions of amenable
//! groups on computable zero-dimensional systems and on irrational circle
//! rotations.
//!
//! The crate is organised bottom-up:
//!
//! * [`group`]: finitely generated amenable groups (`Z^d`, discrete Heisenberg),
//!   finite subsets, Følner families and invariance defects.
//! * [`dynsys`]: odometers and substitution subshifts presented through atoms,
//!   exact translation of clopen sets and (interval) invariant measures.
//! * [`density`]: Banach density window bounds and the `(K, delta)*` test.
//! * [`tiling`]: towers, castles, the clopen castle step, the full castle
//!   construction, quasitilings and refinement by a partition.
//! * [`comparison`]: subequivalence witnesses, matching to a partition,
//!   almost-finiteness witnesses and almost divisibility.
//! * [`gamma`]: layered tiles and the orthogonal almost-invariant function pair.
//! * [`rotation`]: quadratic-irrational circle rotations, regular closed
//!   partitions and the coding tree.
//! * [`io`] and [`config`]: serialized artifacts, certificates and run configs.

pub mod comparison;
pub mod certify;
pub mod config;
pub mod density;
pub mod dynsys;
pub mod error;
pub mod gamma;
pub mod group;
pub mod io;
pub mod matching;
pub mod rational;
pub mod rotation;
pub mod tiling;

pub use error::{Error, Result};
pub use rational::Rational;
