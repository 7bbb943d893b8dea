//! Canonical order isomorphisms between patch pieces.
//!
//! A *patch piece* is a pair of block sets `(S, T)` of one space.  Within a
//! channel, the blocks whose fiber contains the top `w^a` cut the material
//! of a set into *chunks*: chunk `k` is the material in the block interval
//! `(n_{k-1}, n_k]` where `n_k` is the `k`-th top block.  For `a >= 1` every
//! chunk has order type exactly `w^a + 1` — the closing interval of the top
//! block contributes `w^a + 1` and every preceding bounded piece has type
//! `< w^a`, which the additively indecomposable `w^a` absorbs.  So chunk `k`
//! of `S` admits a unique order isomorphism onto chunk `k` of `T`, and the
//! union of those isomorphisms (the *canonical map* of the piece) is a
//! homeomorphism: pieces are clopen, chunks are convex with jump boundaries,
//! and chunk indices grow with the block index, which keeps the channel
//! limits continuous.

use std::collections::BTreeMap;

use super::util::{top_transport, TailRule};
use super::EngineError;
use crate::ordinal::Ordinal;
use crate::space::{BlockCoord, BlockKind, BlockSet, Cut, SpaceSpec, TopPositions};

/// Chunk index of a block: the number of top blocks strictly below it.
pub fn chunk_index(tops: &TopPositions, block: u64) -> u64 {
    tops.count_below(block)
}

/// A convex set of points in raw coordinates: `[0, hi]` when `lo` is absent,
/// `(lo, hi]` otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct AbsInterval {
    pub lo: Option<Ordinal>,
    pub hi: Ordinal,
}

impl AbsInterval {
    /// Order type.  Left subtraction absorbs the block base, so the formula
    /// is uniform across initial and tail blocks.
    pub fn itype(&self) -> Ordinal {
        match &self.lo {
            None => self.hi.add(&Ordinal::one()),
            Some(a) => {
                let d = self.hi.left_diff(a).expect("interval bounds are ordered");
                if d.is_finite() {
                    d
                } else {
                    d.add(&Ordinal::one())
                }
            }
        }
    }

    pub fn contains(&self, p: &Ordinal) -> bool {
        *p <= self.hi
            && match &self.lo {
                None => true,
                Some(a) => *p > *a,
            }
    }

    /// Position of a member within the interval, as an ordinal `< itype()`.
    pub fn pos_within(&self, p: &Ordinal) -> Ordinal {
        match &self.lo {
            None => p.clone(),
            Some(a) => {
                let d = p.left_diff(a).expect("member lies above the lower bound");
                if d.is_finite() {
                    d.pred().expect("member is strictly above the lower bound")
                } else {
                    d
                }
            }
        }
    }

    /// The member at a given position; inverse of [`Self::pos_within`].
    pub fn elem_at(&self, q: &Ordinal) -> Ordinal {
        match &self.lo {
            None => q.clone(),
            Some(a) => {
                if q.is_finite() {
                    a.add(&q.successor())
                } else {
                    a.add(q)
                }
            }
        }
    }
}

/// First raw point of a block minus one step: tail block `n` of channel `c`
/// covers `(base, base + w^a]` with `base = mu_(c-1) + w^a * n`.
fn block_base(space: &SpaceSpec, channel: u64, block: u64) -> Ordinal {
    let offset = if block == 0 {
        Ordinal::zero()
    } else {
        Ordinal::single(space.alpha().clone(), block)
    };
    space.mu(channel - 1).add(&offset)
}

/// The material of one block of a set, as raw intervals in ascending order.
pub(crate) fn block_intervals(set: &BlockSet, channel: u64, block: u64) -> Vec<AbsInterval> {
    let space = set.space();
    let top = space.fiber_top();
    let fs = set.channel(channel).fiber_at(block, &top);
    match space.block_kind(channel, block) {
        BlockKind::Initial => fs
            .intervals()
            .iter()
            .map(|(cut, hi)| AbsInterval {
                lo: match cut {
                    Cut::Bottom => None,
                    Cut::Above(a) => Some(a.clone()),
                },
                hi: hi.clone(),
            })
            .collect(),
        BlockKind::Tail => {
            // Fiber sets store normalized positions; raw fibers sit one
            // higher at finite values (`raw_fiber` is strictly monotone and
            // anchors the top), so both endpoints convert through it.
            let base = block_base(space, channel, block);
            fs.intervals()
                .iter()
                .map(|(cut, hi)| AbsInterval {
                    lo: Some(match cut {
                        Cut::Bottom => base.clone(),
                        Cut::Above(a) => base.add(&space.raw_fiber(BlockKind::Tail, a)),
                    }),
                    hi: base.add(&space.raw_fiber(BlockKind::Tail, hi)),
                })
                .collect()
        }
    }
}

/// The raw intervals of chunk `k` of one channel of a set, in order.
pub(crate) fn chunk_intervals(
    set: &BlockSet,
    tops: &TopPositions,
    channel: u64,
    k: u64,
) -> Option<Vec<AbsInterval>> {
    let hi_block = tops.nth(k)?;
    let start = if k == 0 {
        0
    } else {
        tops.nth(k - 1).expect("earlier positions exist") + 1
    };
    let mut out = Vec::new();
    for b in start..=hi_block {
        out.extend(block_intervals(set, channel, b));
    }
    Some(out)
}

/// Per-piece profile validation: the canonical map between `s` and `t`
/// exists (and extends to a homeomorphism when glued clopen-wise).
pub(crate) fn validate_patch_piece(
    space: &SpaceSpec,
    s: &BlockSet,
    t: &BlockSet,
) -> Result<(), EngineError> {
    if s.space() != space || t.space() != space {
        return Err(EngineError::SpaceMismatch {
            expected: format!("{space:?}"),
            found: "piece over a different space".into(),
        });
    }
    // Pieces need not be closed at the channel limits: the canonical map
    // sends chunk k to chunk k, and top positions grow without bound, so the
    // glued map is continuous there whenever the limit itself sits on both
    // sides or neither.
    for c in 1..=space.degree() {
        if s.contains_mu(c) != t.contains_mu(c) {
            return Err(EngineError::invalid(
                "channel limit must belong to both sides or neither",
            ));
        }
        let st = s.top_positions(c);
        let tt = t.top_positions(c);
        match (st.is_infinite(), tt.is_infinite()) {
            (true, true) => {}
            (false, false) => {
                if st.total() != tt.total() {
                    return Err(EngineError::invalid(
                        "top block counts differ within a channel",
                    ));
                }
                if st.total() == Some(0) {
                    // No synchronization anchors: only the identity is
                    // canonical, so the material must agree exactly.
                    if s.channel(c) != t.channel(c) {
                        return Err(EngineError::invalid(
                            "topless channel material differs between the sides",
                        ));
                    }
                } else {
                    // All material must lie at or below the last top block.
                    let last_s = st.nth(st.total().unwrap() - 1).unwrap();
                    let last_t = tt.nth(tt.total().unwrap() - 1).unwrap();
                    if residual_above(s, c, last_s) || residual_above(t, c, last_t) {
                        return Err(EngineError::invalid(
                            "material above the last top block has no chunk",
                        ));
                    }
                }
            }
            _ => {
                return Err(EngineError::invalid(
                    "one side has finitely many top blocks, the other infinitely many",
                ));
            }
        }
    }
    if space.alpha().is_zero() {
        // The initial block is the only two-point block; its non-top point
        // cannot move anywhere else.
        let zero = Ordinal::zero();
        if s.member(&zero)? != t.member(&zero)? {
            return Err(EngineError::invalid(
                "point 0 must belong to both sides or neither",
            ));
        }
    }
    Ok(())
}

/// Whether a channel has material in blocks strictly above `last`.
fn residual_above(set: &BlockSet, channel: u64, last: u64) -> bool {
    let space = set.space();
    let top = space.fiber_top();
    let ch = set.channel(channel);
    // Tail pattern entries are full blocks (hence tops), so with finitely
    // many tops the tail is empty and residue can only sit in exceptions.
    ch.except()
        .iter()
        .any(|(&n, fs)| n > last && !fs.is_empty())
        || (ch.tail_from() > last + 1
            && (last + 1..ch.tail_from()).any(|n| !ch.fiber_at(n, &top).is_empty()))
        || ch.pattern().iter().any(|&b| b)
            && ch.tail_from() <= last
            && (last + 1..last + 1 + ch.pattern().len() as u64)
                .any(|n| !ch.fiber_at(n, &top).is_empty())
}

/// The canonical map of a validated piece, evaluated at `p ∈ s`.
pub(crate) fn patch_apply(
    space: &SpaceSpec,
    s: &BlockSet,
    t: &BlockSet,
    p: &Ordinal,
) -> Result<Ordinal, EngineError> {
    let (channel, block) = match space.to_blocks(p)? {
        // Validation pins the channel limit to both sides; canonical maps
        // fix it.
        BlockCoord::MaxPoint { .. } => return Ok(p.clone()),
        BlockCoord::Block { channel, block, .. } => (channel, block),
    };
    let stops = s.top_positions(channel);
    let k = chunk_index(&stops, block);
    let (si, ti) = match (
        chunk_intervals(s, &stops, channel, k),
        chunk_intervals(t, &t.top_positions(channel), channel, k),
    ) {
        (Some(si), Some(ti)) => (si, ti),
        // Beyond every top: only possible in a topless channel, where the
        // sides agree and the canonical map is the identity.
        _ => return Ok(p.clone()),
    };
    let mut g = Ordinal::zero();
    let mut found = false;
    for iv in &si {
        if iv.contains(p) {
            g = g.add(&iv.pos_within(p));
            found = true;
            break;
        }
        g = g.add(&iv.itype());
    }
    if !found {
        return Err(EngineError::LocatorFailed {
            reason: "point not in its own chunk".into(),
        });
    }
    let mut acc = Ordinal::zero();
    for jv in &ti {
        let next = acc.add(&jv.itype());
        if g < next {
            let q = g.left_diff(&acc).expect("walk keeps acc <= g");
            return Ok(jv.elem_at(&q));
        }
        acc = next;
    }
    Err(EngineError::LocatorFailed {
        reason: "target chunk shorter than source chunk".into(),
    })
}

/// The action of the canonical map on the top blocks of one channel, in
/// block coordinates: `None` when not eventually periodic-affine (then it
/// provably moves all but finitely many tops).
#[allow(clippy::type_complexity)]
pub(crate) fn patch_top_rules(
    channel: u64,
    s: &BlockSet,
    t: &BlockSet,
) -> Option<(Vec<TailRule>, BTreeMap<(u64, u64), (u64, u64)>)> {
    top_transport(channel, &s.top_positions(channel), &t.top_positions(channel))
}
