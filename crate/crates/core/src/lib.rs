//! Symbolic computation for homeomorphism groups of compact ordinals.
//!
//! The library works with ordinals below ε₀ in Cantor normal form, the
//! spaces `X = ω^(α+1)·d + 1` in block coordinates, a finitely-describable
//! class of homeomorphisms of those spaces, and constructive factorization
//! theorems (Galvin fragmentation, Anderson's method, commutator tricks,
//! flux homomorphisms), each verifiable pointwise at desk scale.

pub mod homeo;
pub mod ordinal;
pub mod space;

pub use homeo::EngineError;
pub use ordinal::{ClassificationData, Ordinal, OrdinalError};
pub use space::{BlockCoord, BlockKind, BlockSet, Cut, FiberSet, SpaceError, SpaceSpec};
