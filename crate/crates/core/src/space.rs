//! Block-coordinate geometry of the compact spaces `w^(a+1)*d + 1` and of the
//! non-compactified space `w^(a+1)`.
//!
//! Points are ordinals.  The space splits into `d` *channels*: channel
//! `k ∈ 1..=d` covers `(w^(a+1)*(k-1), w^(a+1)*k]` (channel 1 additionally
//! contains 0), and `mu_k = w^(a+1)*k` is the maximal point of channel `k`.
//! Each channel splits into ω many *blocks*: block 0 of channel 1 is
//! `[0, w^a]`, every other block is a half-open interval of width `w^a`
//! anchored at its top.  A point is addressed by (channel, block, fiber)
//! where the fiber is the direct offset from the block's lower cut; the
//! block's maximum — its unique point of rank `a+1` — always has fiber `w^a`.
//!
//! Internally fibers are *normalized* to the order position of the point
//! inside its block, so that every block reads uniformly as a copy of
//! `[0, w^a]` with top `w^a`.  For `a = 0` the tail blocks are singletons
//! consisting of their top alone; normalization keeps the top anchored at
//! `w^a` there (position arithmetic never sees those blocks except at the
//! top).
//!
//! Clopen subsets that respect block structure are represented exactly:
//! per channel, a finite map of exceptional blocks to fiber interval sets
//! plus an eventually periodic full/empty tail.  All Boolean algebra is
//! exact and results are kept in a canonical normal form, so structural
//! equality is set equality.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ordinal::Ordinal;

/// Errors arising from space geometry and block-set operations.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    /// Spaces must have at least one channel.
    #[error("a space needs degree >= 1")]
    InvalidDegree,
    /// The non-compactified model is only used with a single channel.
    #[error("a non-compactified space must have degree 1")]
    InvalidSpace,
    /// A point was not a member of the space.
    #[error("point {point} lies outside the space {space}")]
    OutOfSpace { point: String, space: String },
    /// A channel index was out of range.
    #[error("channel {channel} is out of range for degree {degree}")]
    InvalidChannel { channel: u64, degree: u64 },
    /// A block coordinate carried an invalid fiber.
    #[error("invalid fiber {fiber} for block {block}: {reason}")]
    InvalidFiber {
        block: u64,
        fiber: String,
        reason: &'static str,
    },
    /// The maximal point of a channel exists only in compactified spaces.
    #[error("channel {channel} has no maximal point in a non-compactified space")]
    NoMaxPoint { channel: u64 },
    /// Moiety operations live on the non-compactified degree-1 space.
    #[error("moieties are defined on the non-compactified space w^(a+1)")]
    MoietySpace,
    /// The operand was required to be a moiety but is not one.
    #[error("the set is not a moiety: its tail is not split between set and complement")]
    NotAMoiety,
    /// The requested neighborhood does not exist inside the given set.
    #[error("the set is not a neighborhood of {point}")]
    NotANeighborhood { point: String },
}

/// Which of the two block shapes a block has.
///
/// Block 0 of channel 1 is the closed interval `[0, w^a]`; every other block
/// is a half-open interval `(c, c + w^a]`.  The two shapes have different
/// fiber ranges, and for `a = 0` they are not even homeomorphic (two points
/// versus one), so several operations must distinguish them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// `[0, w^a]` — block 0 of channel 1 only.
    Initial,
    /// `(c, c + w^a]` — every other block.
    Tail,
}

/// A space `w^(a+1)*d + 1` (compactified) or `w^(a+1)` (non-compactified,
/// degree 1 only).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceSpec {
    alpha: Ordinal,
    degree: u64,
    compactified: bool,
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.channel_width();
        if self.compactified {
            if self.degree == 1 {
                write!(f, "{} + 1", width)
            } else {
                write!(f, "{}*{} + 1", width, self.degree)
            }
        } else {
            write!(f, "{}", width)
        }
    }
}

impl SpaceSpec {
    /// The compact space `w^(a+1)*d + 1`.
    pub fn compact(alpha: Ordinal, degree: u64) -> Result<Self, SpaceError> {
        if degree == 0 {
            return Err(SpaceError::InvalidDegree);
        }
        Ok(SpaceSpec {
            alpha,
            degree,
            compactified: true,
        })
    }

    /// The non-compactified space `w^(a+1)` (a single channel without its
    /// maximal point).
    pub fn omega_power(alpha: Ordinal) -> Self {
        SpaceSpec {
            alpha,
            degree: 1,
            compactified: false,
        }
    }

    pub fn alpha(&self) -> &Ordinal {
        &self.alpha
    }

    pub fn degree(&self) -> u64 {
        self.degree
    }

    pub fn is_compactified(&self) -> bool {
        self.compactified
    }

    /// `w^a`, the top fiber value of every block.
    pub fn fiber_top(&self) -> Ordinal {
        Ordinal::omega_pow(self.alpha.clone())
    }

    /// `w^(a+1)`, the width of one channel.
    pub fn channel_width(&self) -> Ordinal {
        Ordinal::omega_pow(self.alpha.successor())
    }

    /// `mu_k = w^(a+1)*k`; `mu_0 = 0` is the lower cut of channel 1.
    pub fn mu(&self, k: u64) -> Ordinal {
        if k == 0 {
            Ordinal::zero()
        } else {
            Ordinal::single(self.alpha.successor(), k)
        }
    }

    /// The maximal point of the space, when compactified.
    pub fn max_point(&self) -> Option<Ordinal> {
        self.compactified.then(|| self.mu(self.degree))
    }

    /// Whether `p` is a point of the space.
    pub fn contains(&self, p: &Ordinal) -> bool {
        let top = self.mu(self.degree);
        if self.compactified {
            *p <= top
        } else {
            *p < top
        }
    }

    fn out_of_space(&self, p: &Ordinal) -> SpaceError {
        SpaceError::OutOfSpace {
            point: p.to_string(),
            space: self.to_string(),
        }
    }

    /// The channel containing `p` (1-based).
    pub fn channel_of(&self, p: &Ordinal) -> Result<u64, SpaceError> {
        if !self.contains(p) {
            return Err(self.out_of_space(p));
        }
        if p.is_zero() {
            return Ok(1);
        }
        for k in 1..=self.degree {
            if *p <= self.mu(k) {
                return Ok(k);
            }
        }
        unreachable!("containment check bounds p by mu({})", self.degree)
    }

    /// The kind of block `n` of channel `channel`.
    pub fn block_kind(&self, channel: u64, block: u64) -> BlockKind {
        if channel == 1 && block == 0 {
            BlockKind::Initial
        } else {
            BlockKind::Tail
        }
    }

    /// The top point of block `n` of channel `channel`:
    /// `mu_(k-1) + w^a*(n+1)`.
    pub fn block_top_point(&self, channel: u64, block: u64) -> Ordinal {
        self.mu(channel - 1)
            .add(&Ordinal::single(self.alpha.clone(), block + 1))
    }

    /// Decomposes a point into block coordinates.
    pub fn to_blocks(&self, p: &Ordinal) -> Result<BlockCoord, SpaceError> {
        if !self.contains(p) {
            return Err(self.out_of_space(p));
        }
        if p.is_zero() {
            return Ok(BlockCoord::Block {
                channel: 1,
                block: 0,
                fiber: Ordinal::zero(),
            });
        }
        let k = self.channel_of(p)?;
        if *p == self.mu(k) {
            return Ok(BlockCoord::MaxPoint { channel: k });
        }
        let base = self.mu(k - 1);
        let r = p
            .left_diff(&base)
            .expect("a channel member extends the channel's lower cut");
        // r ∈ (0, w^(a+1)); split r = w^a*q + s with s < w^a.
        let q = r.coefficient_of(&self.alpha);
        let s = r.below_exponent(&self.alpha);
        if s.is_zero() {
            // p is the top of block q-1.
            Ok(BlockCoord::Block {
                channel: k,
                block: q - 1,
                fiber: self.fiber_top(),
            })
        } else {
            Ok(BlockCoord::Block {
                channel: k,
                block: q,
                fiber: s,
            })
        }
    }

    /// Reassembles a point from block coordinates.
    pub fn from_blocks(&self, c: &BlockCoord) -> Result<Ordinal, SpaceError> {
        match c {
            BlockCoord::MaxPoint { channel } => {
                if *channel == 0 || *channel > self.degree {
                    return Err(SpaceError::InvalidChannel {
                        channel: *channel,
                        degree: self.degree,
                    });
                }
                if !self.compactified {
                    return Err(SpaceError::NoMaxPoint { channel: *channel });
                }
                Ok(self.mu(*channel))
            }
            BlockCoord::Block {
                channel,
                block,
                fiber,
            } => {
                if *channel == 0 || *channel > self.degree {
                    return Err(SpaceError::InvalidChannel {
                        channel: *channel,
                        degree: self.degree,
                    });
                }
                let top = self.fiber_top();
                if *fiber > top {
                    return Err(SpaceError::InvalidFiber {
                        block: *block,
                        fiber: fiber.to_string(),
                        reason: "fiber exceeds w^a",
                    });
                }
                if fiber.is_zero() && self.block_kind(*channel, *block) == BlockKind::Tail {
                    return Err(SpaceError::InvalidFiber {
                        block: *block,
                        fiber: fiber.to_string(),
                        reason: "only block 0 of channel 1 contains its lower cut",
                    });
                }
                let mut p = self.mu(*channel - 1);
                if *block > 0 {
                    p = p.add(&Ordinal::single(self.alpha.clone(), *block));
                }
                Ok(p.add(fiber))
            }
        }
    }

    /// Order position of a raw fiber inside its block: the normalized fiber.
    ///
    /// Initial blocks are already positions.  In a tail block `(c, c + w^a]`
    /// the point `c + s` has position `s - 1` for finite `s`, `s` for
    /// infinite `s`; the top stays anchored at `w^a` (the only case where
    /// this differs from the position is `a = 0`, whose singleton tail
    /// blocks carry their sole point at `w^0`).
    pub fn normalize_fiber(&self, kind: BlockKind, raw: &Ordinal) -> Ordinal {
        match kind {
            BlockKind::Initial => raw.clone(),
            BlockKind::Tail => {
                let top = self.fiber_top();
                if *raw == top {
                    top
                } else if let Some(n) = raw.as_nat() {
                    debug_assert!(n >= 1, "tail fibers are positive");
                    Ordinal::nat(n - 1)
                } else {
                    raw.clone()
                }
            }
        }
    }

    /// Inverse of [`normalize_fiber`](Self::normalize_fiber).
    pub fn raw_fiber(&self, kind: BlockKind, normalized: &Ordinal) -> Ordinal {
        match kind {
            BlockKind::Initial => normalized.clone(),
            BlockKind::Tail => {
                let top = self.fiber_top();
                if *normalized == top {
                    top
                } else if let Some(n) = normalized.as_nat() {
                    Ordinal::nat(n + 1)
                } else {
                    normalized.clone()
                }
            }
        }
    }
}

/// Block coordinates of a point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockCoord {
    /// The maximal point `mu_k` of channel `k`.
    MaxPoint { channel: u64 },
    /// An ordinary point: `mu_(k-1) + w^a*block + fiber` with the fiber a
    /// direct offset, `0 < fiber <= w^a` (block 0 of channel 1 also admits
    /// fiber 0).
    Block {
        channel: u64,
        block: u64,
        fiber: Ordinal,
    },
}

impl fmt::Display for BlockCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockCoord::MaxPoint { channel } => write!(f, "max point of channel {channel}"),
            BlockCoord::Block {
                channel,
                block,
                fiber,
            } => write!(f, "channel {channel}, block {block}, fiber {fiber}"),
        }
    }
}

/// Lower endpoint of a fiber interval: either the bottom of the block
/// (closed at 0) or an open cut just above a normalized fiber value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cut {
    Bottom,
    Above(Ordinal),
}

impl Cut {
    fn lt_point(&self, p: &Ordinal) -> bool {
        match self {
            Cut::Bottom => true,
            Cut::Above(a) => a < p,
        }
    }
}

/// A clopen set of normalized fiber values inside one block: a canonical
/// list of disjoint, non-adjacent intervals `(lo, hi]` sorted increasingly
/// (`lo = Bottom` closes the interval at 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FiberSet {
    intervals: Vec<(Cut, Ordinal)>,
}

impl FiberSet {
    pub fn empty() -> Self {
        FiberSet { intervals: vec![] }
    }

    /// The whole block `[0, top]`.
    pub fn full(top: &Ordinal) -> Self {
        FiberSet {
            intervals: vec![(Cut::Bottom, top.clone())],
        }
    }

    /// A single interval `(lo, hi]`.  Panics if empty (`lo >= hi`).
    pub fn interval(lo: Cut, hi: Ordinal) -> Self {
        assert!(lo.lt_point(&hi), "interval must be nonempty");
        FiberSet {
            intervals: vec![(lo, hi)],
        }
    }

    /// The singleton `{f}` for an isolated normalized fiber (finite `f`).
    pub fn singleton(f: &Ordinal) -> Self {
        let n = f
            .as_nat()
            .expect("only finite normalized fibers are isolated within a block");
        if n == 0 {
            FiberSet::interval(Cut::Bottom, Ordinal::zero())
        } else {
            FiberSet::interval(Cut::Above(Ordinal::nat(n - 1)), f.clone())
        }
    }

    pub fn intervals(&self) -> &[(Cut, Ordinal)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_full(&self, top: &Ordinal) -> bool {
        self.intervals.len() == 1
            && self.intervals[0].0 == Cut::Bottom
            && self.intervals[0].1 == *top
    }

    pub fn member(&self, f: &Ordinal) -> bool {
        let i = self.intervals.partition_point(|(_, hi)| hi < f);
        match self.intervals.get(i) {
            Some((lo, _)) => lo.lt_point(f),
            None => false,
        }
    }

    pub fn union(&self, other: &FiberSet) -> FiberSet {
        let mut items: Vec<&(Cut, Ordinal)> =
            self.intervals.iter().chain(other.intervals.iter()).collect();
        items.sort_by(|x, y| x.0.cmp(&y.0));
        let mut out: Vec<(Cut, Ordinal)> = Vec::new();
        for (lo, hi) in items {
            if let Some(last) = out.last_mut() {
                let touches = match lo {
                    Cut::Bottom => true,
                    Cut::Above(a) => *a <= last.1,
                };
                if touches {
                    if *hi > last.1 {
                        last.1 = hi.clone();
                    }
                    continue;
                }
            }
            out.push((lo.clone(), hi.clone()));
        }
        FiberSet { intervals: out }
    }

    /// Complement inside `[0, top]`.
    pub fn complement(&self, top: &Ordinal) -> FiberSet {
        let mut out: Vec<(Cut, Ordinal)> = Vec::new();
        let mut lo = Cut::Bottom;
        for (l, h) in &self.intervals {
            if let Cut::Above(a) = l {
                // Non-adjacency of the input guarantees this gap is nonempty.
                out.push((lo.clone(), a.clone()));
            }
            lo = Cut::Above(h.clone());
        }
        match &lo {
            Cut::Above(b) => {
                if b < top {
                    out.push((lo.clone(), top.clone()));
                }
            }
            Cut::Bottom => out.push((Cut::Bottom, top.clone())),
        }
        FiberSet { intervals: out }
    }

    pub fn intersect(&self, other: &FiberSet) -> FiberSet {
        let mut out: Vec<(Cut, Ordinal)> = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (la, ha) = &self.intervals[i];
            let (lb, hb) = &other.intervals[j];
            let lo = la.clone().max(lb.clone());
            let hi = ha.min(hb);
            if lo.lt_point(hi) {
                out.push((lo, hi.clone()));
            }
            if ha <= hb {
                i += 1;
            }
            if hb <= ha {
                j += 1;
            }
        }
        FiberSet { intervals: out }
    }

    pub fn minus(&self, other: &FiberSet) -> FiberSet {
        match self.intervals.last() {
            None => FiberSet::empty(),
            Some((_, reach)) => self.intersect(&other.complement(reach)),
        }
    }

    /// Canonical form relative to the block shape.  The only non-identity
    /// case is an `a = 0` tail block, whose sole valid fiber is the top:
    /// such a set snaps to full or empty.
    fn canonicalize_for(&self, kind: BlockKind, top: &Ordinal) -> FiberSet {
        if kind == BlockKind::Tail && top.as_nat() == Some(1) {
            if self.member(top) {
                FiberSet::full(top)
            } else {
                FiberSet::empty()
            }
        } else {
            self.clone()
        }
    }
}

pub(crate) fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// One channel of a [`BlockSet`]: finitely many exceptional blocks plus an
/// eventually periodic full/empty tail, plus an explicit membership bit for
/// the channel's maximal point.  Membership of block `n` is the exceptional
/// fiber set if present, else the tail value
/// `pattern[(n - tail_from) mod pattern.len()]` when `n >= tail_from`, else
/// empty.
///
/// `mu_in` is independent data: deriving it from the tail would make
/// complement lose the maximal point whenever the tail alternates.  In a
/// non-compactified space it is canonically `false`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSet {
    except: BTreeMap<u64, FiberSet>,
    tail_from: u64,
    pattern: Vec<bool>,
    mu_in: bool,
}

impl ChannelSet {
    pub(crate) fn empty() -> Self {
        ChannelSet {
            except: BTreeMap::new(),
            tail_from: 0,
            pattern: vec![false],
            mu_in: false,
        }
    }

    pub(crate) fn full() -> Self {
        ChannelSet {
            except: BTreeMap::new(),
            tail_from: 0,
            pattern: vec![true],
            mu_in: true,
        }
    }

    pub(crate) fn new(
        except: BTreeMap<u64, FiberSet>,
        tail_from: u64,
        pattern: Vec<bool>,
        mu_in: bool,
    ) -> Self {
        assert!(!pattern.is_empty(), "tail pattern must be nonempty");
        ChannelSet {
            except,
            tail_from,
            pattern,
            mu_in,
        }
    }

    pub(crate) fn mu_in(&self) -> bool {
        self.mu_in
    }

    pub(crate) fn except(&self) -> &BTreeMap<u64, FiberSet> {
        &self.except
    }

    pub(crate) fn tail_from(&self) -> u64 {
        self.tail_from
    }

    pub(crate) fn pattern(&self) -> &[bool] {
        &self.pattern
    }

    /// Tail value at block `n` (valid for any `n` via periodic extension in
    /// both directions, anchored at `tail_from`).
    fn phi(&self, n: u64) -> bool {
        let len = self.pattern.len() as i128;
        let idx = (n as i128 - self.tail_from as i128).rem_euclid(len);
        self.pattern[idx as usize]
    }

    /// Exact fiber set of block `n`.
    pub(crate) fn fiber_at(&self, n: u64, top: &Ordinal) -> FiberSet {
        if let Some(fs) = self.except.get(&n) {
            return fs.clone();
        }
        if n >= self.tail_from && self.phi(n) {
            FiberSet::full(top)
        } else {
            FiberSet::empty()
        }
    }

    /// Whether the tail is constant (the channel is clopen at `mu`).
    pub(crate) fn tail_constant(&self) -> Option<bool> {
        if self.pattern.iter().all(|&b| b == self.pattern[0]) {
            Some(self.pattern[0])
        } else {
            None
        }
    }

    /// Brings the representation to its canonical form: canonical fiber
    /// sets, minimal period, minimal tail start, no redundant exceptions.
    /// Exceptional entries override the tail (even empty ones), so the
    /// semantic value of every block below the scan start is computed
    /// before entries are dropped or materialized.
    fn normalize(&mut self, channel: u64, space: &SpaceSpec) {
        let top = space.fiber_top();
        let canon: BTreeMap<u64, FiberSet> = self
            .except
            .iter()
            .map(|(n, fs)| {
                (
                    *n,
                    fs.canonicalize_for(space.block_kind(channel, *n), &top),
                )
            })
            .collect();
        let val = |n: u64| -> FiberSet {
            if let Some(fs) = canon.get(&n) {
                fs.clone()
            } else if n >= self.tail_from && self.phi(n) {
                FiberSet::full(&top)
            } else {
                FiberSet::empty()
            }
        };
        // Minimal period, preserving the anchor.
        let len = self.pattern.len();
        let q = (1..=len)
            .find(|q| len % q == 0 && (0..len).all(|i| self.pattern[i] == self.pattern[i % q]))
            .expect("len itself always qualifies");
        let pattern: Vec<bool> = self.pattern[..q].to_vec();
        let anchor = self.tail_from;
        let phi_ext = |n: u64| -> bool {
            let len = pattern.len() as i128;
            pattern[(n as i128 - anchor as i128).rem_euclid(len) as usize]
        };
        // Scan start: past every exceptional block.
        let t0 = self
            .tail_from
            .max(canon.keys().next_back().map_or(0, |k| k + 1));
        // Walk the tail start downward while blocks agree with the periodic
        // extension.
        let mut t = t0;
        while t > 0 {
            let v = val(t - 1);
            let matches = if phi_ext(t - 1) {
                v.is_full(&top)
            } else {
                v.is_empty()
            };
            if !matches {
                break;
            }
            t -= 1;
        }
        let new_pattern: Vec<bool> = (0..q as u64).map(|i| phi_ext(t + i)).collect();
        let except: BTreeMap<u64, FiberSet> = (0..t)
            .filter_map(|n| {
                let v = val(n);
                (!v.is_empty()).then_some((n, v))
            })
            .collect();
        self.pattern = new_pattern;
        self.tail_from = t;
        self.except = except;
        if !space.is_compactified() {
            self.mu_in = false;
        }
    }

    fn zip(
        &self,
        other: &ChannelSet,
        top: &Ordinal,
        bool_op: impl Fn(bool, bool) -> bool,
        fiber_op: impl Fn(&FiberSet, &FiberSet) -> FiberSet,
    ) -> ChannelSet {
        let t = self.tail_from.max(other.tail_from);
        let q = lcm(self.pattern.len() as u64, other.pattern.len() as u64);
        let mut except = BTreeMap::new();
        let keys: Vec<u64> = (0..t)
            .chain(self.except.keys().copied())
            .chain(other.except.keys().copied())
            .collect();
        for n in keys {
            let r = fiber_op(&self.fiber_at(n, top), &other.fiber_at(n, top));
            if !r.is_empty() {
                except.insert(n, r);
            }
        }
        let pattern = (0..q).map(|i| bool_op(self.phi(t + i), other.phi(t + i))).collect();
        ChannelSet {
            except,
            tail_from: t,
            pattern,
            mu_in: bool_op(self.mu_in, other.mu_in),
        }
    }

    fn complement_channel(&self, top: &Ordinal) -> ChannelSet {
        let mut except = BTreeMap::new();
        for n in 0..self.tail_from {
            let r = self.fiber_at(n, top).complement(top);
            if !r.is_empty() {
                except.insert(n, r);
            }
        }
        ChannelSet {
            except,
            tail_from: self.tail_from,
            pattern: self.pattern.iter().map(|b| !b).collect(),
            mu_in: !self.mu_in,
        }
    }
}

/// Positions of the *top blocks* of one channel of a block set: the blocks
/// whose fiber set contains the top `w^a`.  Finitely many listed in `head`
/// (all `< from`); past `from` they sit periodically at
/// `from + j*period + offsets[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopPositions {
    pub head: Vec<u64>,
    pub from: u64,
    pub period: u64,
    pub offsets: Vec<u64>,
}

impl TopPositions {
    pub fn is_infinite(&self) -> bool {
        !self.offsets.is_empty()
    }

    /// Total count when finite.
    pub fn total(&self) -> Option<u64> {
        self.offsets.is_empty().then(|| self.head.len() as u64)
    }

    /// The `i`-th top block, ascending, 0-based.
    pub fn nth(&self, i: u64) -> Option<u64> {
        if (i as usize) < self.head.len() {
            return Some(self.head[i as usize]);
        }
        if self.offsets.is_empty() {
            return None;
        }
        let j = i - self.head.len() as u64;
        let m = self.offsets.len() as u64;
        Some(self.from + (j / m) * self.period + self.offsets[(j % m) as usize])
    }

    /// Number of top blocks strictly below block `n`.
    pub fn count_below(&self, n: u64) -> u64 {
        let head = self.head.iter().filter(|&&b| b < n).count() as u64;
        if n <= self.from || self.offsets.is_empty() {
            return head;
        }
        let span = n - self.from;
        let full = span / self.period * self.offsets.len() as u64;
        let partial = self.offsets.iter().filter(|&&o| o < span % self.period).count() as u64;
        head + full + partial
    }

    pub fn contains(&self, n: u64) -> bool {
        if n < self.from {
            return self.head.binary_search(&n).is_ok();
        }
        self.offsets.binary_search(&((n - self.from) % self.period)).is_ok()
    }
}

/// An exactly represented, block-structured subset of a space.
///
/// Every channel is a [`ChannelSet`].  The maximal point `mu_k` counts as a
/// member exactly when channel `k`'s tail is constantly full.  The set is
/// clopen in a compactified space iff every tail is constant; alternating
/// tails are still valid *sets* (used as bookkeeping by the factorization
/// machinery) but are rejected wherever clopen-ness is required.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSet {
    space: SpaceSpec,
    channels: Vec<ChannelSet>,
}

impl BlockSet {
    pub fn empty(space: &SpaceSpec) -> Self {
        BlockSet {
            space: space.clone(),
            channels: (0..space.degree()).map(|_| ChannelSet::empty()).collect(),
        }
    }

    pub fn full(space: &SpaceSpec) -> Self {
        let mut s = BlockSet {
            space: space.clone(),
            channels: (0..space.degree()).map(|_| ChannelSet::full()).collect(),
        };
        s.normalize();
        s
    }

    /// Builds a set from raw per-channel data and normalizes it.
    pub fn from_channels(
        space: &SpaceSpec,
        channels: Vec<ChannelSet>,
    ) -> Result<Self, SpaceError> {
        if channels.len() as u64 != space.degree() {
            return Err(SpaceError::InvalidDegree);
        }
        let mut s = BlockSet {
            space: space.clone(),
            channels,
        };
        s.normalize();
        Ok(s)
    }

    /// The set whose channel `channel` has the given eventually periodic
    /// full/empty tail starting at `from` (blocks below `from` empty), all
    /// other channels empty.
    pub fn periodic(
        space: &SpaceSpec,
        channel: u64,
        from: u64,
        pattern: Vec<bool>,
    ) -> Result<Self, SpaceError> {
        if channel == 0 || channel > space.degree() {
            return Err(SpaceError::InvalidChannel {
                channel,
                degree: space.degree(),
            });
        }
        assert!(!pattern.is_empty(), "tail pattern must be nonempty");
        let mu_in = pattern.iter().all(|&b| b);
        let mut s = BlockSet::empty(space);
        s.channels[(channel - 1) as usize] =
            ChannelSet::new(BTreeMap::new(), from, pattern, mu_in);
        s.normalize();
        Ok(s)
    }

    /// Sets the membership bit of one channel's maximal point (builder
    /// style).  A no-op on non-compactified spaces.
    pub fn with_mu(mut self, channel: u64, mu_in: bool) -> Self {
        assert!(
            channel >= 1 && channel <= self.space.degree(),
            "channel out of range"
        );
        self.channels[(channel - 1) as usize].mu_in = mu_in;
        self.normalize();
        self
    }

    /// Blocks congruent to `r` mod `m` in one channel (full blocks).
    pub fn residue(space: &SpaceSpec, channel: u64, r: u64, m: u64) -> Result<Self, SpaceError> {
        assert!(m >= 1 && r < m, "residue requires r < m");
        let pattern = (0..m).map(|i| i == r).collect();
        BlockSet::periodic(space, channel, 0, pattern)
    }

    /// Replaces the fiber set of one block (builder style).
    pub fn with_block(mut self, channel: u64, block: u64, fibers: FiberSet) -> Self {
        assert!(
            channel >= 1 && channel <= self.space.degree(),
            "channel out of range"
        );
        let ch = &mut self.channels[(channel - 1) as usize];
        // `fiber_at` consults `except` first, so a plain insert is an exact
        // override of the block's value (including overriding a full tail
        // slot with an empty set; normalization re-anchors the tail).
        ch.except.insert(block, fibers);
        self.normalize();
        self
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub(crate) fn channel(&self, channel: u64) -> &ChannelSet {
        &self.channels[(channel - 1) as usize]
    }

    fn normalize(&mut self) {
        let space = self.space.clone();
        for (i, ch) in self.channels.iter_mut().enumerate() {
            ch.normalize(i as u64 + 1, &space);
        }
    }

    /// Whether `mu_k` belongs to the set.
    pub fn contains_mu(&self, channel: u64) -> bool {
        self.channel(channel).mu_in()
    }

    /// Exact membership.
    pub fn member(&self, p: &Ordinal) -> Result<bool, SpaceError> {
        match self.space.to_blocks(p)? {
            BlockCoord::MaxPoint { channel } => Ok(self.contains_mu(channel)),
            BlockCoord::Block {
                channel,
                block,
                fiber,
            } => {
                let kind = self.space.block_kind(channel, block);
                let f = self.space.normalize_fiber(kind, &fiber);
                let top = self.space.fiber_top();
                Ok(self.channel(channel).fiber_at(block, &top).member(&f))
            }
        }
    }

    pub fn union(&self, other: &BlockSet) -> BlockSet {
        self.binary(other, |a, b| a || b, FiberSet::union)
    }

    pub fn intersect(&self, other: &BlockSet) -> BlockSet {
        self.binary(other, |a, b| a && b, FiberSet::intersect)
    }

    pub fn minus(&self, other: &BlockSet) -> BlockSet {
        self.binary(other, |a, b| a && !b, FiberSet::minus)
    }

    fn binary(
        &self,
        other: &BlockSet,
        bool_op: impl Fn(bool, bool) -> bool + Copy,
        fiber_op: impl Fn(&FiberSet, &FiberSet) -> FiberSet + Copy,
    ) -> BlockSet {
        assert_eq!(self.space, other.space, "operands from different spaces");
        let top = self.space.fiber_top();
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.zip(b, &top, bool_op, fiber_op))
            .collect();
        let mut s = BlockSet {
            space: self.space.clone(),
            channels,
        };
        s.normalize();
        s
    }

    pub fn complement(&self) -> BlockSet {
        let top = self.space.fiber_top();
        let channels = self
            .channels
            .iter()
            .map(|c| c.complement_channel(&top))
            .collect();
        let mut s = BlockSet {
            space: self.space.clone(),
            channels,
        };
        s.normalize();
        s
    }

    pub fn is_empty(&self) -> bool {
        self.channels
            .iter()
            .all(|c| c.except.is_empty() && c.pattern == [false] && !c.mu_in)
    }

    pub fn is_full(&self) -> bool {
        let mu = self.space.is_compactified();
        self.channels
            .iter()
            .all(|c| c.except.is_empty() && c.tail_from == 0 && c.pattern == [true] && c.mu_in == mu)
    }

    /// Whether the represented set is clopen.  Automatic in non-compactified
    /// spaces; in a compactified space each channel tail must be constant
    /// and the maximal point's membership must match it (an alternating
    /// tail, or a constant tail disagreeing with `mu_in`, leaves the set
    /// non-closed or non-open at that channel's maximal point).
    pub fn is_clopen(&self) -> bool {
        !self.space.is_compactified()
            || self
                .channels
                .iter()
                .all(|c| c.tail_constant() == Some(c.mu_in()))
    }

    /// Positions of the blocks whose fiber set contains the block top.
    pub fn top_positions(&self, channel: u64) -> TopPositions {
        let ch = self.channel(channel);
        let top = self.space.fiber_top();
        let head: Vec<u64> = ch
            .except
            .iter()
            .filter(|(_, fs)| fs.member(&top))
            .map(|(n, _)| *n)
            .collect();
        let offsets: Vec<u64> = ch
            .pattern
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as u64)
            .collect();
        TopPositions {
            head,
            from: ch.tail_from,
            period: ch.pattern.len() as u64,
            offsets,
        }
    }

    /// Moiety test on the non-compactified space `w^(a+1)`: the set and its
    /// complement must both contain infinitely many block tops.
    pub fn is_moiety(&self) -> Result<bool, SpaceError> {
        if self.space.is_compactified() {
            return Err(SpaceError::MoietySpace);
        }
        let pattern = &self.channels[0].pattern;
        Ok(pattern.contains(&true) && pattern.contains(&false))
    }

    /// Splits a set with infinitely many top blocks into disjoint moieties
    /// `(A1, A2)` by alternating those blocks: `A2` takes `A`'s pieces at
    /// the odd-indexed top blocks, `A1` keeps the rest (including every
    /// topless piece).  The input need not itself be a moiety — the full
    /// space splits into (even blocks, odd blocks) — but a set with finitely
    /// many tops cannot be split and is rejected.
    pub fn moiety_pair_split(&self) -> Result<(BlockSet, BlockSet), SpaceError> {
        if self.space.is_compactified() {
            return Err(SpaceError::MoietySpace);
        }
        let tops = self.top_positions(1);
        if !tops.is_infinite() {
            return Err(SpaceError::NotAMoiety);
        }
        let m = tops.offsets.len() as u64;
        debug_assert!(m >= 1);
        let head_count = tops.head.len() as u64;
        let mut except = BTreeMap::new();
        for (i, blk) in tops.head.iter().enumerate() {
            if i % 2 == 1 {
                except.insert(*blk, FiberSet::full(&self.space.fiber_top()));
            }
        }
        let p = tops.period;
        let pattern: Vec<bool> = (0..2 * p)
            .map(|i| {
                let r = i % p;
                if !tops.offsets.contains(&r) {
                    return false;
                }
                let rank = tops.offsets.iter().filter(|&&o| o < r).count() as u64;
                let idx = head_count + (i / p) * m + rank;
                idx % 2 == 1
            })
            .collect();
        let selector = BlockSet::from_channels(
            &self.space,
            vec![ChannelSet::new(except, tops.from, pattern, false)],
        )?;
        let a2 = self.intersect(&selector);
        let a1 = self.minus(&a2);
        Ok((a1, a2))
    }
}

/// The canonical *stable neighborhood* of `p` inside `within`: a clopen
/// piece of `within` containing `p` as its unique point of maximal rank.
/// For an isolated `p` it is the singleton `{p}`; for `p` of rank `b+1 >= 2`
/// it is homeomorphic to `w^b + 1`; for a channel maximum it is the tail of
/// the channel.  Errors if `p` is not a member of `within`.
pub fn stable_neighborhood(
    space: &SpaceSpec,
    p: &Ordinal,
    within: &BlockSet,
) -> Result<BlockSet, SpaceError> {
    assert_eq!(space, within.space(), "set belongs to a different space");
    let not_nbhd = || SpaceError::NotANeighborhood {
        point: p.to_string(),
    };
    if !within.member(p)? {
        return Err(not_nbhd());
    }
    let top = space.fiber_top();
    match space.to_blocks(p)? {
        BlockCoord::MaxPoint { channel } => {
            // Need the whole tail of the channel inside `within`.
            let ch = within.channel(channel);
            if ch.tail_constant() != Some(true) {
                return Err(not_nbhd());
            }
            BlockSet::periodic(space, channel, ch.tail_from(), vec![true])
        }
        BlockCoord::Block {
            channel,
            block,
            fiber,
        } => {
            let kind = space.block_kind(channel, block);
            let f = space.normalize_fiber(kind, &fiber);
            let fibers = within.channel(channel).fiber_at(block, &top);
            let piece = if !p.is_limit() {
                // Isolated point: the singleton.
                FiberSet::singleton(&f)
            } else {
                let (lo, _) = fibers
                    .intervals()
                    .iter()
                    .find(|(lo, hi)| lo.lt_point(&f) && f <= *hi)
                    .expect("membership guarantees an interval");
                if f == top {
                    // Block top: everything below it in the block has lower
                    // rank, so the whole available interval is stable.
                    FiberSet::interval(lo.clone(), f)
                } else {
                    // Interior limit: cut just below f's stable tail — any
                    // (x, f] with Q + w^b*(c-1) <= x < f has order type
                    // w^b + 1 and no second point of rank b+1.
                    let (beta, c) = f
                        .terms()
                        .last()
                        .expect("limit fibers are nonzero")
                        .clone();
                    let mut ell = Ordinal::zero();
                    for (e, k) in f.terms() {
                        if *e == beta {
                            break;
                        }
                        ell = ell.add(&Ordinal::single(e.clone(), *k));
                    }
                    if c > 1 {
                        ell = ell.add(&Ordinal::single(beta, c - 1));
                    }
                    let lo = lo.clone().max(Cut::Above(ell));
                    FiberSet::interval(lo, f)
                }
            };
            Ok(BlockSet::empty(space).with_block(channel, block, piece))
        }
    }
}
