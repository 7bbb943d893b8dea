//! Structured homeomorphisms of the block-coordinate spaces.
//!
//! A [`Homeo`] pairs a [`SpaceSpec`] with a syntax tree of generators whose
//! every constructor validates a finite certificate (windowed bijectivity,
//! piece profiles, support containment), so that a constructed value is a
//! genuine homeomorphism of its space, evaluable at any point.

mod canonical;
mod factor;
mod image;
mod node;
pub mod testing;
mod util;

pub use canonical::chunk_index;
pub use factor::{
    anderson_factor, change_of_coords, commutator_factor, displacement_moiety, distortion_words,
    galvin_factor, normal_word_12, perfect_3, translation_for, CommutatorPair, ConjugateFactor,
    DistortionWords, GalvinCase, GalvinFactors,
};
pub use node::{Homeo, Inner, Node};
pub use testing::{
    block_z_cycle, sample_points, seeded_finitary, seeded_homeo, seeded_moiety,
    seeded_moiety_pair, seeded_nonfinitary, seeded_pure_homeo, verify_equal_on,
    verify_factorization, Counterexample, EquationReport, ReportStatus, DEFAULT_POINT_BUDGET,
};
pub use util::{BlockMap, EvPerm, TailRule, TopMap};

use crate::ordinal::OrdinalError;
use crate::space::SpaceError;

/// Errors raised while building or analysing structured homeomorphisms.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Ordinal(#[from] OrdinalError),
    /// A constructor certificate failed (non-bijective block map, mismatched
    /// piece profiles, overlapping tail rules, ...).
    #[error("invalid node: {reason}")]
    InvalidNode { reason: String },
    /// An exact set image is outside the representable class.
    #[error("image not representable: {what}")]
    NotRepresentable { what: String },
    /// A certified property (disjoint supports, support containment) fails.
    #[error("certificate violation: {reason}")]
    CertificateViolation { reason: String },
    /// An infinite-product locator could not resolve a point soundly.
    #[error("orbit locator failure: {reason}")]
    LocatorFailed { reason: String },
    /// Flux of a map that moves some maximal point.
    #[error("map is not pure: moves the maximal point of channel {channel}")]
    NonPure { channel: u64 },
    /// Flux scan cannot certify a finite crossing window for the input.
    #[error("missing tail descriptor: {reason}")]
    MissingDescriptor { reason: String },
    /// A factorization needs a map supported in a topological moiety.
    #[error("support is not certified inside a moiety")]
    NotMoietySupported,
    /// The map moves only finitely many maximal-rank points, so no
    /// displacement-based normal generation is possible.
    #[error("map is finitary: it moves only finitely many maximal-rank points")]
    FinitaryInput,
    /// Whether the map is finitary cannot be decided from its certificates.
    #[error("finitariness undecided: {reason}")]
    FinitaryUndecided { reason: String },
    /// The greedy displacement-moiety search failed to certify a witness.
    #[error("displacement search failed: {reason}")]
    DisplacementFailed { reason: String },
    /// Operation needs a higher degree.
    #[error("degree {degree} too small, need at least {need}")]
    DegreeTooSmall { degree: u64, need: u64 },
    /// Operation is only available at the stated exponent.
    #[error("unsupported exponent: {reason}")]
    AlphaUnsupported { reason: String },
    /// Two operands live in different spaces.
    #[error("space mismatch: expected {expected}, found {found}")]
    SpaceMismatch { expected: String, found: String },
}

impl EngineError {
    pub(crate) fn invalid(reason: impl Into<String>) -> Self {
        EngineError::InvalidNode {
            reason: reason.into(),
        }
    }

    pub(crate) fn not_representable(what: impl Into<String>) -> Self {
        EngineError::NotRepresentable { what: what.into() }
    }
}
