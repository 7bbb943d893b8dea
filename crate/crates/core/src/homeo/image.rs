//! Exact set images and coarse actions of a [`Homeo`].
//!
//! `image` pushes a block set forward exactly or fails with
//! `NotRepresentable`; it never approximates.  `support_cert` is the dual
//! bookkeeping: an always-available *superset* of the support, exact for the
//! basic nodes and inherited from construction certificates elsewhere.  The
//! coarse actions (`mu_action`, `top_action`, `crossing_window`) expose how a
//! map permutes the maximal points and the rank-`a` points — the data the
//! flux and factorization layers consume.

use std::collections::BTreeMap;

use super::canonical::{block_intervals, patch_top_rules};
use super::node::{Homeo, Inner, Node};
use super::util::{checked_translate_block, zig, zig_inv, BlockMap, TopMap, MAX_WINDOW};
use super::EngineError;
use crate::ordinal::Ordinal;
use crate::space::{lcm, BlockCoord, BlockSet, ChannelSet, Cut, FiberSet, SpaceSpec};

/// Deepest dyadic level magnitude scanned when decomposing a set into level
/// classes (class modulus `2^(x+2)` stays within the certification window).
const MAX_LEVEL_EXP: u32 = 18;

/// The singleton of one normalized position.  Valid for positions with an
/// immediate predecessor (and 0); a limit position is not isolated.
fn position_singleton(pos: &Ordinal) -> Result<FiberSet, EngineError> {
    if pos.is_zero() {
        return Ok(FiberSet::interval(Cut::Bottom, Ordinal::zero()));
    }
    match pos.pred() {
        Some(prev) => Ok(FiberSet::interval(Cut::Above(prev), pos.clone())),
        None => Err(EngineError::invalid("a limit position is not isolated")),
    }
}

/// Toggles one point's membership.
pub(crate) fn with_point(
    set: &BlockSet,
    p: &Ordinal,
    present: bool,
) -> Result<BlockSet, EngineError> {
    let space = set.space().clone();
    match space.to_blocks(p)? {
        BlockCoord::MaxPoint { channel } => Ok(set.clone().with_mu(channel, present)),
        BlockCoord::Block {
            channel,
            block,
            fiber,
        } => {
            let pos = space.normalize_fiber(space.block_kind(channel, block), &fiber);
            let single = position_singleton(&pos)?;
            let cur = set.channel(channel).fiber_at(block, &space.fiber_top());
            let moved = if present {
                cur.union(&single)
            } else {
                cur.minus(&single)
            };
            Ok(set.clone().with_block(channel, block, moved))
        }
    }
}

/// All points `<= x`, as a block set.
fn down_set(space: &SpaceSpec, x: &Ordinal) -> Result<BlockSet, EngineError> {
    let top = space.fiber_top();
    let (channel, partial_block) = match space.to_blocks(x)? {
        BlockCoord::MaxPoint { channel } => (channel, None),
        BlockCoord::Block {
            channel,
            block,
            fiber,
        } => (
            channel,
            Some((
                block,
                space.normalize_fiber(space.block_kind(channel, block), &fiber),
            )),
        ),
    };
    let mut channels: Vec<ChannelSet> = (1..channel).map(|_| ChannelSet::full()).collect();
    match partial_block {
        None => channels.push(ChannelSet::full()),
        Some((block, pos)) => {
            if block > MAX_WINDOW {
                return Err(EngineError::not_representable(
                    "initial segment reaches past the block window",
                ));
            }
            let mut except: BTreeMap<u64, FiberSet> =
                (0..block).map(|n| (n, FiberSet::full(&top))).collect();
            except.insert(block, FiberSet::interval(Cut::Bottom, pos));
            channels.push(ChannelSet::new(except, block + 1, vec![false], false));
        }
    }
    for _ in channel..space.degree() {
        channels.push(ChannelSet::empty());
    }
    Ok(BlockSet::from_channels(space, channels)?)
}

/// Reads a set of normalized positions `[0, w^a]` as a subset of the compact
/// degree-1 space one exponent down (whose points those positions are).
fn positions_to_blockset(
    fiber_space: &SpaceSpec,
    fs: &FiberSet,
) -> Result<BlockSet, EngineError> {
    let mut out = BlockSet::empty(fiber_space);
    for (cut, hi) in fs.intervals() {
        let upper = down_set(fiber_space, hi)?;
        let piece = match cut {
            Cut::Bottom => upper,
            Cut::Above(a) => upper.minus(&down_set(fiber_space, a)?),
        };
        out = out.union(&piece);
    }
    Ok(out)
}

/// Inverse of [`positions_to_blockset`]: exact or `NotRepresentable` (a
/// fiber set is a finite union of half-open intervals; sets accumulating at
/// the top without containing it, or containing it in isolation, are not).
fn blockset_to_positions(set: &BlockSet) -> Result<FiberSet, EngineError> {
    let space = set.space();
    let ch = set.channel(1);
    let mut out = FiberSet::empty();
    match ch.tail_constant() {
        None => {
            return Err(EngineError::not_representable(
                "fiber image alternates at the top",
            ))
        }
        Some(true) => {
            if !ch.mu_in() {
                return Err(EngineError::not_representable(
                    "fiber image accumulates at the top without containing it",
                ));
            }
            let hi = space.max_point().expect("fiber spaces are compactified");
            let t = ch.tail_from();
            let lo = if t == 0 {
                Cut::Bottom
            } else {
                Cut::Above(Ordinal::single(space.alpha().clone(), t))
            };
            out = out.union(&FiberSet::interval(lo, hi));
        }
        Some(false) => {
            if ch.mu_in() {
                return Err(EngineError::not_representable(
                    "fiber image isolates the top",
                ));
            }
        }
    }
    for &n in ch.except().keys() {
        for iv in block_intervals(set, 1, n) {
            let lo = match iv.lo {
                None => Cut::Bottom,
                Some(a) => Cut::Above(a),
            };
            out = out.union(&FiberSet::interval(lo, iv.hi));
        }
    }
    Ok(out)
}

/// Whether every block of the set is wholly in or wholly out.
fn crisp(set: &BlockSet) -> bool {
    let top = set.space().fiber_top();
    (1..=set.space().degree()).all(|c| {
        set.channel(c)
            .except()
            .values()
            .all(|fs| fs.is_empty() || fs.is_full(&top))
    })
}

fn pattern_all_false(ch: &ChannelSet) -> bool {
    ch.pattern().iter().all(|&b| !b)
}

/// Past every exceptional block and the tail anchor.
fn channel_bound(ch: &ChannelSet) -> u64 {
    ch.tail_from()
        .max(ch.except().keys().next_back().map_or(0, |&k| k + 1))
}

/// The dyadic-leveled blocks of one channel: even indices except 0, full.
pub(crate) fn leveled_blocks(space: &SpaceSpec, channel: u64) -> BlockSet {
    BlockSet::residue(space, channel, 0, 2)
        .expect("constructor-validated channel")
        .with_block(channel, 0, FiberSet::empty())
}

/// The full blocks `{n >= from : n = residue mod period}` of one channel.
fn rule_class_set(space: &SpaceSpec, channel: u64, residue: u64, period: u64, from: u64) -> BlockSet {
    let pattern = (0..period).map(|i| (from + i) % period == residue).collect();
    BlockSet::periodic(space, channel, from, pattern).expect("constructor-validated rule channel")
}

/// The full blocks of one dyadic class index: `{2^(x+1) * (2y+1) : y >= 0}`.
fn dyadic_class(space: &SpaceSpec, channel: u64, x: u32) -> BlockSet {
    BlockSet::residue(space, channel, 1 << (x + 1), 1 << (x + 2))
        .expect("constructor-validated channel")
}

/// Image of `x ⊆ si` under the canonical map of a crisp piece `(si, ti)`:
/// the `k`-th top block of `si` carries its material verbatim onto the
/// `k`-th top block of `ti` (normalized positions are preserved by the
/// rigid order isomorphism of full blocks).
fn crisp_patch_image(
    si: &BlockSet,
    ti: &BlockSet,
    x: &BlockSet,
) -> Result<BlockSet, EngineError> {
    let space = si.space();
    let top = space.fiber_top();
    let mut channels = Vec::with_capacity(space.degree() as usize);
    for c in 1..=space.degree() {
        let mu_in = x.contains_mu(c);
        let st = si.top_positions(c);
        let tt = ti.top_positions(c);
        let xch = x.channel(c);
        if !st.is_infinite() {
            // Piece validation pinned equal finite totals.
            let mut except = BTreeMap::new();
            for k in 0..st.total().expect("finite side") {
                let n = st.nth(k).expect("below the total");
                let m = tt.nth(k).expect("equal totals");
                let fs = xch.fiber_at(n, &top);
                if !fs.is_empty() {
                    except.insert(m, fs);
                }
            }
            channels.push(ChannelSet::new(except, 0, vec![false], mu_in));
            continue;
        }
        // Both sides infinite.  Beyond `k0` the source reads its periodic
        // tail, so the image tail is periodic with the combined period.
        let mut k0 = (st.head.len() as u64).max(tt.head.len() as u64);
        let bound = channel_bound(xch);
        while st.nth(k0).expect("infinite side") < bound {
            k0 += 1;
            if k0 > MAX_WINDOW {
                return Err(EngineError::not_representable(
                    "piece tops start past the block window",
                ));
            }
        }
        let q_x = xch.pattern().len() as u64;
        let m_s = st.offsets.len() as u64;
        let repeat = q_x / crate::space::gcd(st.period, q_x);
        let j = lcm(m_s * repeat, tt.offsets.len() as u64);
        let m0 = tt.nth(k0).expect("infinite side");
        let p_img = j / tt.offsets.len() as u64 * tt.period;
        if j > MAX_WINDOW || p_img > MAX_WINDOW {
            return Err(EngineError::not_representable(
                "image tail period exceeds the block window",
            ));
        }
        let mut pattern = vec![false; p_img as usize];
        for k in k0..k0 + j {
            let n = st.nth(k).expect("infinite side");
            let m = tt.nth(k).expect("infinite side");
            let fs = xch.fiber_at(n, &top);
            debug_assert!(fs.is_empty() || fs.is_full(&top), "tail fibers are crisp");
            pattern[(m - m0) as usize] = fs.is_full(&top);
        }
        let mut except = BTreeMap::new();
        for k in 0..k0 {
            let n = st.nth(k).expect("below k0");
            let m = tt.nth(k).expect("below k0");
            let fs = xch.fiber_at(n, &top);
            if !fs.is_empty() {
                except.insert(m, fs);
            }
        }
        channels.push(ChannelSet::new(except, m0, pattern, mu_in));
    }
    Ok(BlockSet::from_channels(space, channels)?)
}

/// Global labels for the rank-`a` points.  At positive exponents index `n`
/// of a channel is its block `n` (whose top is the rank-`a` point).  At
/// exponent zero every point has rank 0, so channel 1 gains one label:
/// index `k` is the point `k` itself (point 0 plus the block tops).
fn point_idx(space: &SpaceSpec, p: &Ordinal) -> Result<(u64, u64), EngineError> {
    match space.to_blocks(p)? {
        BlockCoord::MaxPoint { .. } => Err(EngineError::invalid(
            "maximal points carry no rank-a index",
        )),
        BlockCoord::Block {
            channel,
            block,
            fiber,
        } => Ok(if channel == 1 {
            if block == 0 {
                (1, fiber.as_nat().expect("exponent-zero fibers are finite"))
            } else {
                (1, block + 1)
            }
        } else {
            (channel, block)
        }),
    }
}

/// Relabels a block-coordinate map into exponent-zero index coordinates
/// (channel 1 shifts by one; block `(1,0)` is pinned, so index 0 stays put).
fn map_to_idx(map: &BlockMap, degree: u64) -> Result<BlockMap, EngineError> {
    let conv = |(c, n): (u64, u64)| if c == 1 { (1, n + 1) } else { (c, n) };
    let except = map
        .except()
        .iter()
        .map(|(&k, &v)| (conv(k), conv(v)))
        .collect();
    let rules = map
        .rules()
        .iter()
        .map(|r| {
            let mut r2 = r.clone();
            if r.src == 1 {
                r2.from = r.from + 1;
                r2.residue = (r.residue + 1) % r.period;
            }
            r2.shift = r.shift - (r.src == 1) as i64 + (r.dst == 1) as i64;
            r2
        })
        .collect();
    BlockMap::new(except, rules, degree)
}

impl Homeo {
    /// The exact image of a block set, or `NotRepresentable` when the image
    /// leaves the eventually-periodic family (it is never approximated).
    pub fn image(&self, s: &BlockSet) -> Result<BlockSet, EngineError> {
        let space = self.space();
        if s.space() != space {
            return Err(EngineError::SpaceMismatch {
                expected: space.to_string(),
                found: s.space().to_string(),
            });
        }
        match self.node() {
            Node::Identity => Ok(s.clone()),
            Node::FinitePerm(pairs) => {
                let mem = pairs
                    .iter()
                    .map(|(a, _)| s.member(a))
                    .collect::<Result<Vec<bool>, _>>()?;
                let mut out = s.clone();
                for ((_, b), was_in) in pairs.iter().zip(mem) {
                    out = with_point(&out, b, was_in)?;
                }
                Ok(out)
            }
            Node::BlockPerm(map) => {
                let d = space.degree();
                let top = space.fiber_top();
                let inv = map.inverse(d);
                let max_shift = inv
                    .rules()
                    .iter()
                    .map(|r| r.shift.unsigned_abs())
                    .max()
                    .unwrap_or(0);
                let inv_bound = inv
                    .rules()
                    .iter()
                    .map(|r| r.from)
                    .chain(inv.except().keys().map(|&(_, n)| n + 1))
                    .max()
                    .unwrap_or(0);
                let src_bound = (1..=d)
                    .map(|c| channel_bound(s.channel(c)))
                    .max()
                    .unwrap_or(0);
                let start = inv_bound.max(src_bound + max_shift);
                let period = inv
                    .rules()
                    .iter()
                    .map(|r| r.period)
                    .chain((1..=d).map(|c| s.channel(c).pattern().len() as u64))
                    .fold(1, lcm);
                if start.saturating_add(period) > MAX_WINDOW {
                    return Err(EngineError::not_representable(
                        "image window of the block permutation",
                    ));
                }
                let mut channels = Vec::with_capacity(d as usize);
                for c2 in 1..=d {
                    let mu_in =
                        space.is_compactified() && s.contains_mu(inv.mu_destination(c2));
                    let mut except = BTreeMap::new();
                    for m in 0..start {
                        let (c1, n1) = inv.apply((c2, m));
                        let fs = s.channel(c1).fiber_at(n1, &top);
                        if !fs.is_empty() {
                            except.insert(m, fs);
                        }
                    }
                    let pattern = (0..period)
                        .map(|i| {
                            let (c1, n1) = inv.apply((c2, start + i));
                            let fs = s.channel(c1).fiber_at(n1, &top);
                            debug_assert!(
                                fs.is_empty() || fs.is_full(&top),
                                "tail blocks are crisp past the window"
                            );
                            fs.is_full(&top)
                        })
                        .collect();
                    channels.push(ChannelSet::new(except, start, pattern, mu_in));
                }
                Ok(BlockSet::from_channels(space, channels)?)
            }
            Node::FiberMap(entries) => {
                let top = space.fiber_top();
                let mut out = s.clone();
                for ((c, n), inner) in entries {
                    let fs = s.channel(*c).fiber_at(*n, &top);
                    let moved = match inner {
                        Inner::Swap01 => {
                            let zero = Ordinal::zero();
                            let one = Ordinal::one();
                            let had = (fs.member(&zero), fs.member(&one));
                            match had {
                                (true, false) => fs
                                    .minus(&FiberSet::singleton(&zero))
                                    .union(&FiberSet::singleton(&one)),
                                (false, true) => fs
                                    .minus(&FiberSet::singleton(&one))
                                    .union(&FiberSet::singleton(&zero)),
                                _ => fs,
                            }
                        }
                        Inner::Sub(h) => {
                            if fs.is_empty() || fs.is_full(&top) {
                                fs
                            } else {
                                let as_set = positions_to_blockset(h.space(), &fs)?;
                                blockset_to_positions(&h.image(&as_set)?)?
                            }
                        }
                    };
                    out = out.with_block(*c, *n, moved);
                }
                Ok(out)
            }
            Node::Patchwork(pieces) => {
                let mut out = s.clone();
                for (si, _) in pieces {
                    out = out.minus(si);
                }
                for (si, ti) in pieces {
                    let x = s.intersect(si);
                    if x.is_empty() {
                        continue;
                    }
                    let img = if crisp(si) && crisp(ti) {
                        crisp_patch_image(si, ti, &x)?
                    } else if x == *si {
                        ti.clone()
                    } else if space.alpha().is_zero() {
                        // At exponent zero the index action is the whole map.
                        return self.image_at_zero(s);
                    } else {
                        return Err(EngineError::not_representable(
                            "partial overlap with a non-crisp patch piece",
                        ));
                    };
                    out = out.union(&img);
                }
                Ok(out)
            }
            Node::Piecewise(pieces) => {
                let mut out = s.clone();
                for (si, _, _) in pieces {
                    out = out.minus(si);
                }
                for (si, h, _) in pieces {
                    let x = s.intersect(si);
                    if !x.is_empty() {
                        out = out.union(&h.image(&x)?);
                    }
                }
                Ok(out)
            }
            Node::Translation { channel, steps } => {
                self.translation_image(s, *channel, *steps)
            }
            Node::InfProd { .. } => Err(EngineError::not_representable(
                "image through an infinite product",
            )),
            Node::Compose(parts) => {
                let mut out = s.clone();
                for h in parts.iter().rev() {
                    out = h.image(&out)?;
                }
                Ok(out)
            }
        }
    }

    fn translation_image(
        &self,
        s: &BlockSet,
        channel: u64,
        steps: i64,
    ) -> Result<BlockSet, EngineError> {
        let space = self.space();
        if steps == 0 {
            return Ok(s.clone());
        }
        let leveled = leveled_blocks(space, channel);
        let x = s.intersect(&leveled);
        if x.is_empty() {
            return Ok(s.clone());
        }
        // The translation permutes the leveled blocks, so a set containing
        // all of them is fixed as a set.
        if leveled.minus(&x).is_empty() {
            return Ok(s.clone());
        }
        let translate_finite = |blocks: &BTreeMap<u64, FiberSet>| {
            let mut out = BlockSet::empty(space);
            for (&b, fs) in blocks {
                match checked_translate_block(b, steps) {
                    Some(b2) => out = out.with_block(channel, b2, fs.clone()),
                    None => {
                        return Err(EngineError::not_representable(
                            "translated block leaves the dyadic range",
                        ))
                    }
                }
            }
            Ok(out)
        };
        let xch = x.channel(channel);
        if pattern_all_false(xch) {
            // Finitely many moving blocks: translate them one by one.
            return Ok(s.minus(&x).union(&translate_finite(xch.except())?));
        }
        let rest = leveled.minus(&x);
        let rch = rest.channel(channel);
        if pattern_all_false(rch) {
            // Cofinite in the leveled blocks: translate the finite hole.
            let hole = translate_finite(rch.except())?;
            return Ok(s.minus(&leveled).union(&leveled.minus(&hole)));
        }
        // Both the moving set and its leveled complement are infinite: the
        // image stays representable only when the set splits into finitely
        // many whole level classes plus finitely many stray blocks.
        let mut out = s.minus(&x);
        let mut covered = BlockSet::empty(space);
        for exp in 0..=MAX_LEVEL_EXP {
            let class = dyadic_class(space, channel, exp);
            let part = x.intersect(&class);
            if part.is_empty() {
                continue;
            }
            if part == class {
                let level2 = zig_inv(exp) + steps;
                if level2.abs() > 30 {
                    return Err(EngineError::not_representable(
                        "translated level leaves the dyadic range",
                    ));
                }
                let exp2 = zig(level2);
                if exp2 > MAX_LEVEL_EXP {
                    return Err(EngineError::not_representable(
                        "translated level class exceeds the block window",
                    ));
                }
                out = out.union(&dyadic_class(space, channel, exp2));
            } else if pattern_all_false(part.channel(channel)) {
                out = out.union(&translate_finite(part.channel(channel).except())?);
            } else {
                return Err(EngineError::not_representable(
                    "level class covered only partially",
                ));
            }
            covered = covered.union(&class);
        }
        if !x.minus(&covered).is_empty() {
            return Err(EngineError::not_representable(
                "material on unboundedly deep levels",
            ));
        }
        Ok(out)
    }

    /// Exact image at exponent zero, where every non-maximal point is a
    /// rank-0 point: the index action from [`Homeo::top_action`] determines
    /// the whole map, so the image is the index map applied blockwise.
    fn image_at_zero(&self, s: &BlockSet) -> Result<BlockSet, EngineError> {
        let space = self.space();
        debug_assert!(space.alpha().is_zero());
        let d = space.degree();
        let top = space.fiber_top();
        let m = match self.top_action()? {
            TopMap::Exact(m) => m,
            TopMap::Unknown { .. } => {
                return Err(EngineError::not_representable(
                    "image without an exact index action",
                ))
            }
        };
        let inv = m.inverse(d);
        // Index `i` of channel 1 is the point `i` itself; channels past the
        // first index their singleton blocks directly.
        let member_idx = |c: u64, i: u64| -> Result<bool, EngineError> {
            let p = if c == 1 && i == 0 {
                Ordinal::zero()
            } else if c == 1 {
                space.block_top_point(1, i - 1)
            } else {
                space.block_top_point(c, i)
            };
            Ok(s.member(&p)?)
        };
        let max_shift = inv
            .rules()
            .iter()
            .map(|r| r.shift.unsigned_abs())
            .max()
            .unwrap_or(0);
        let inv_bound = inv
            .rules()
            .iter()
            .map(|r| r.from)
            .chain(inv.except().keys().map(|&(_, n)| n + 1))
            .max()
            .unwrap_or(0);
        let src_bound = (1..=d)
            .map(|c| channel_bound(s.channel(c)) + 2)
            .max()
            .unwrap_or(0);
        let start = inv_bound.max(src_bound + max_shift).max(2);
        let period = inv
            .rules()
            .iter()
            .map(|r| r.period)
            .chain((1..=d).map(|c| s.channel(c).pattern().len() as u64))
            .fold(1, lcm);
        if start.saturating_add(period) > MAX_WINDOW {
            return Err(EngineError::not_representable(
                "image window of the index action",
            ));
        }
        let mut channels = Vec::with_capacity(d as usize);
        for c2 in 1..=d {
            let mu_in = space.is_compactified() && s.contains_mu(inv.mu_destination(c2));
            // Membership of image index `i` in channel `c2`.
            let g = |i: u64| -> Result<bool, EngineError> {
                let (c1, i1) = inv.apply((c2, i));
                member_idx(c1, i1)
            };
            let mut except = BTreeMap::new();
            let idx_of = |b: u64| if c2 == 1 { b + 1 } else { b };
            if c2 == 1 {
                let fs = match (g(0)?, g(1)?) {
                    (true, true) => FiberSet::full(&top),
                    (true, false) => FiberSet::singleton(&Ordinal::zero()),
                    (false, true) => FiberSet::singleton(&Ordinal::one()),
                    (false, false) => FiberSet::empty(),
                };
                if !fs.is_empty() {
                    except.insert(0, fs);
                }
            } else if g(0)? {
                except.insert(0, FiberSet::full(&top));
            }
            for b in 1..start {
                if g(idx_of(b))? {
                    except.insert(b, FiberSet::full(&top));
                }
            }
            let mut pattern = Vec::with_capacity(period as usize);
            for j in 0..period {
                pattern.push(g(idx_of(start + j))?);
            }
            channels.push(ChannelSet::new(except, start, pattern, mu_in));
        }
        Ok(BlockSet::from_channels(space, channels)?)
    }

    /// A certified superset of the support.  Construction-attached
    /// certificates take precedence; the structural fallback is exact for
    /// the basic nodes and a union bound for composite ones.
    pub fn support_cert(&self) -> BlockSet {
        if let Some(cert) = self.cert() {
            return cert.clone();
        }
        let space = self.space();
        match self.node() {
            Node::Identity => BlockSet::empty(space),
            Node::FinitePerm(pairs) => {
                let mut out = BlockSet::empty(space);
                for (a, b) in pairs {
                    out = with_point(&out, a, true).expect("constructor-checked points");
                    out = with_point(&out, b, true).expect("constructor-checked points");
                }
                out
            }
            Node::BlockPerm(map) => {
                let top = space.fiber_top();
                let mut out = BlockSet::empty(space);
                for (&(c, n), &(c2, n2)) in map.except() {
                    if (c, n) != (c2, n2) {
                        out = out
                            .with_block(c, n, FiberSet::full(&top))
                            .with_block(c2, n2, FiberSet::full(&top));
                    }
                }
                for r in map.rules() {
                    if r.src == r.dst && r.shift == 0 {
                        continue;
                    }
                    out = out.union(&rule_class_set(space, r.src, r.residue, r.period, r.from));
                    let from2 = u64::try_from(r.from as i128 + r.shift as i128).unwrap_or(0);
                    let res2 = ((r.residue as i64 + r.shift).rem_euclid(r.period as i64)) as u64;
                    out = out.union(&rule_class_set(space, r.dst, res2, r.period, from2));
                }
                for c in 1..=space.degree() {
                    if map.mu_destination(c) != c {
                        out = out.with_mu(c, true).with_mu(map.mu_destination(c), true);
                    }
                }
                out
            }
            Node::FiberMap(entries) => {
                let top = space.fiber_top();
                let mut out = BlockSet::empty(space);
                for &(c, n) in entries.keys() {
                    out = out.with_block(c, n, FiberSet::full(&top));
                }
                out
            }
            Node::Patchwork(pieces) => pieces
                .iter()
                .fold(BlockSet::empty(space), |acc, (s, t)| {
                    acc.union(s).union(t)
                }),
            Node::Piecewise(pieces) => pieces
                .iter()
                .fold(BlockSet::empty(space), |acc, (s, _, t)| {
                    acc.union(s).union(t)
                }),
            Node::Translation { channel, steps } => {
                if *steps == 0 {
                    BlockSet::empty(space)
                } else {
                    leveled_blocks(space, *channel)
                }
            }
            Node::InfProd { conj, channel, .. } => {
                // The factors live on the nonnegative levels, a subset of
                // the leveled blocks, transported by the conjugator.
                let leveled = leveled_blocks(space, *channel);
                conj.image(&leveled)
                    .unwrap_or_else(|_| BlockSet::full(space))
            }
            Node::Compose(parts) => parts
                .iter()
                .fold(BlockSet::empty(space), |acc, h| acc.union(&h.support_cert())),
        }
    }

    /// Where each maximal point goes: entry `k-1` is the channel of the
    /// image of `mu_k`.  Exact for every node.
    pub fn mu_action(&self) -> Vec<u64> {
        let d = self.space().degree();
        match self.node() {
            Node::BlockPerm(map) => (1..=d).map(|c| map.mu_destination(c)).collect(),
            Node::Compose(parts) => {
                let mut acc: Vec<u64> = (1..=d).collect();
                for h in parts.iter().rev() {
                    let step = h.mu_action();
                    for c in acc.iter_mut() {
                        *c = step[(*c - 1) as usize];
                    }
                }
                acc
            }
            // Finite permutations touch isolated points only; fiber maps,
            // patchworks, translations, and infinite products fix every
            // channel limit; piecewise maps live on the space without them.
            _ => (1..=d).collect(),
        }
    }

    /// Whether every maximal point is fixed.
    pub fn is_pure(&self) -> bool {
        self.mu_action().iter().enumerate().all(|(i, &c)| c == i as u64 + 1)
    }

    /// A two-sided stability window for the rank-`a` points: every block-top
    /// point in a block `>=` the returned index is carried — in both
    /// directions — to a block-top point of the *same channel* with block
    /// index `>= b`.
    pub fn crossing_window(&self, b: u64) -> Result<u64, EngineError> {
        let space = self.space();
        match self.node() {
            Node::Identity => Ok(b),
            Node::FinitePerm(pairs) => {
                let mut w = b;
                for (p, q) in pairs {
                    for point in [p, q] {
                        if let BlockCoord::Block { block, .. } = space.to_blocks(point)? {
                            w = w.max(block + 1);
                        }
                    }
                }
                Ok(w)
            }
            Node::BlockPerm(map) => {
                for r in map.rules() {
                    if r.src != r.dst {
                        return Err(EngineError::NonPure { channel: r.src });
                    }
                }
                let max_shift = map
                    .rules()
                    .iter()
                    .map(|r| r.shift.unsigned_abs())
                    .max()
                    .unwrap_or(0);
                let froms = map.rules().iter().map(|r| r.from).max().unwrap_or(0);
                let excepts = map
                    .except()
                    .iter()
                    .map(|(k, v)| k.1.max(v.1) + 1)
                    .max()
                    .unwrap_or(0);
                Ok(b.max(froms).max(excepts).saturating_add(max_shift))
            }
            Node::FiberMap(entries) => Ok(b.max(
                entries.keys().map(|&(_, n)| n + 1).max().unwrap_or(0),
            )),
            Node::Patchwork(pieces) => {
                let mut w = b;
                for (si, ti) in pieces {
                    for c in 1..=space.degree() {
                        let st = si.top_positions(c);
                        let tt = ti.top_positions(c);
                        w = w
                            .max(transport_window(&st, &tt, b)?)
                            .max(transport_window(&tt, &st, b)?);
                    }
                }
                Ok(w)
            }
            Node::Piecewise(pieces) => {
                let mut w = b;
                for (_, h, _) in pieces {
                    w = w.max(h.crossing_window(b)?);
                }
                Ok(w)
            }
            Node::Translation { steps, .. } => Ok(b
                .saturating_mul(1 << (2 * steps.unsigned_abs().min(16) + 1))
                .saturating_add(4)),
            Node::InfProd { .. } => Err(EngineError::MissingDescriptor {
                reason: "infinite products admit no uniform crossing window".into(),
            }),
            Node::Compose(parts) => {
                let fwd = parts
                    .iter()
                    .try_fold(b, |acc, h| h.crossing_window(acc))?;
                let rev = parts
                    .iter()
                    .rev()
                    .try_fold(b, |acc, h| h.crossing_window(acc))?;
                Ok(fwd.max(rev))
            }
        }
    }

    /// The induced map on the rank-`a` point labels (see [`point_idx`] for
    /// the exponent-zero convention), exact whenever the node structure
    /// determines it.
    pub fn top_action(&self) -> Result<TopMap, EngineError> {
        let space = self.space();
        let d = space.degree();
        let at_zero = space.alpha().is_zero();
        match self.node() {
            Node::Identity => Ok(TopMap::identity()),
            Node::FinitePerm(pairs) => {
                if !at_zero {
                    // Isolated points are never rank-a points here.
                    return Ok(TopMap::identity());
                }
                let mut except = BTreeMap::new();
                for (p, q) in pairs {
                    except.insert(point_idx(space, p)?, point_idx(space, q)?);
                }
                Ok(TopMap::Exact(BlockMap::new(except, vec![], d)?))
            }
            Node::BlockPerm(map) => Ok(TopMap::Exact(if at_zero {
                map_to_idx(map, d)?
            } else {
                map.clone()
            })),
            Node::FiberMap(_) => Ok(TopMap::identity()),
            Node::Patchwork(pieces) => {
                let mut rules = Vec::new();
                let mut except = BTreeMap::new();
                for (si, ti) in pieces {
                    for c in 1..=d {
                        match patch_top_rules(c, si, ti) {
                            // Mismatched densities: the index drift is
                            // unbounded, so all but finitely many tops move.
                            None => {
                                return Ok(TopMap::Unknown {
                                    moves_infinitely: Some(true),
                                })
                            }
                            Some((rs, ex)) => {
                                rules.extend(rs);
                                except.extend(ex);
                            }
                        }
                    }
                }
                // Sources tile, targets tile, and their unions agree, so the
                // merged clauses form a bijection (identity off the pieces).
                let merged = BlockMap::new(except, rules, d)?;
                Ok(TopMap::Exact(if at_zero {
                    map_to_idx(&merged, d)?
                } else {
                    merged
                }))
            }
            Node::Piecewise(pieces) => {
                for (_, h, _) in pieces {
                    match h.top_action()? {
                        TopMap::Exact(m) if m.is_identity() => {}
                        _ => {
                            return Ok(TopMap::Unknown {
                                moves_infinitely: None,
                            })
                        }
                    }
                }
                Ok(TopMap::identity())
            }
            Node::Translation { steps, .. } => Ok(if *steps == 0 {
                TopMap::identity()
            } else {
                TopMap::Unknown {
                    moves_infinitely: Some(true),
                }
            }),
            Node::InfProd { inner, .. } => Ok(match inner.top_action()? {
                TopMap::Exact(m) if m.is_identity() => TopMap::identity(),
                // A moved top in the seed recurs in every translated factor.
                TopMap::Exact(_)
                | TopMap::Unknown {
                    moves_infinitely: Some(true),
                } => TopMap::Unknown {
                    moves_infinitely: Some(true),
                },
                TopMap::Unknown { .. } => TopMap::Unknown {
                    moves_infinitely: None,
                },
            }),
            Node::Compose(parts) => {
                let mut acc = TopMap::identity();
                for h in parts {
                    acc = acc.compose(&h.top_action()?, d);
                }
                Ok(acc)
            }
        }
    }

    /// Whether only finitely many rank-`a` points move.  (At positive
    /// exponents a map may still move infinitely many isolated points and
    /// count as finitary; the factorization preconditions are about the
    /// rank-`a` action.)
    pub fn is_finitary(&self) -> Result<bool, EngineError> {
        match self.top_action()? {
            TopMap::Exact(m) => Ok(!m.moves_infinitely_many()),
            TopMap::Unknown {
                moves_infinitely: Some(moves),
            } => Ok(!moves),
            TopMap::Unknown {
                moves_infinitely: None,
            } => Err(EngineError::FinitaryUndecided {
                reason: "no exact action on the rank-a points is available".into(),
            }),
        }
    }
}

/// Smallest `w >= b` past which every remaining source top lands at a
/// target top of block `>= b` under the index-aligned transport.
fn transport_window(
    src: &crate::space::TopPositions,
    dst: &crate::space::TopPositions,
    b: u64,
) -> Result<u64, EngineError> {
    let mut w = b;
    loop {
        match dst.nth(src.count_below(w)) {
            None => return Ok(w),
            Some(m) if m >= b => return Ok(w),
            Some(_) => {}
        }
        w += 1;
        if w > MAX_WINDOW {
            return Err(EngineError::MissingDescriptor {
                reason: "no crossing window within the block bound".into(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(s: &str) -> Ordinal {
        s.parse().unwrap()
    }

    fn x(alpha: u64, d: u64) -> SpaceSpec {
        SpaceSpec::compact(Ordinal::nat(alpha), d).unwrap()
    }

    /// The image must satisfy `q ∈ h(S) ⟺ h⁻¹(q) ∈ S`; with `q = h(p)`
    /// ranging over a sample this checks both directions.
    fn check_image(h: &Homeo, s: &BlockSet, samples: &[&str]) -> BlockSet {
        let img = h.image(s).unwrap();
        for p in samples {
            let p = o(p);
            let q = h.apply(&p).unwrap();
            assert_eq!(
                img.member(&q).unwrap(),
                s.member(&p).unwrap(),
                "image membership at {p} -> {q}"
            );
        }
        img
    }

    #[test]
    fn finite_perm_image_edits_points() {
        let sp = x(1, 1);
        let h = Homeo::finite_perm(&sp, vec![(o("2"), o("w+1")), (o("w+1"), o("2"))]).unwrap();
        let evens = BlockSet::residue(&sp, 1, 0, 2).unwrap();
        let img = check_image(
            &h,
            &evens,
            &["0", "1", "2", "3", "w", "w+1", "w+2", "w*2", "w*2+1", "w*3", "w^2"],
        );
        assert!(img.member(&o("w+1")).unwrap(), "2 moved into block 1");
        assert!(!img.member(&o("2")).unwrap(), "w+1 (outside) replaced 2");
        assert!(img.member(&o("4")).unwrap(), "untouched members stay");
    }

    #[test]
    fn block_perm_image_slides_tails() {
        let sp = x(1, 3);
        let s1 = Homeo::shift(&sp, 1).unwrap();
        let ch1 = BlockSet::periodic(&sp, 1, 0, vec![true]).unwrap().with_mu(1, true);
        let samples = [
            "0", "5", "w", "w+1", "w*2+3", "w*5", "w^2", "w^2+1", "w^2+w",
            "w^2*2", "w^2*2+1", "w^2*2+w", "w^2*2+w+1", "w^2*2+w*2", "w^2*3",
        ];
        let img = check_image(&s1, &ch1, &samples);
        // Channel 1 stays full (every block has a source one step up) and
        // the wrapped block lands at (3, 0).
        assert!(img.member(&o("w*9+4")).unwrap());
        assert!(img.member(&o("w^2")).unwrap(), "mu_1 follows its tail");
        assert!(img.member(&o("w^2*2+1")).unwrap(), "block (3,0) received");
        assert!(!img.member(&o("w^2*2+w+1")).unwrap(), "(3,1) untouched");
        assert!(!img.member(&o("w^2*3")).unwrap(), "mu_3 not in the image");

        // Pull a periodic set through: odd blocks of channel 1.
        let odds = BlockSet::residue(&sp, 1, 1, 2).unwrap();
        check_image(&s1, &odds, &samples);
        let img = s1.image(&odds).unwrap();
        // Odd blocks n >= 3 slide to even blocks n - 1 >= 2; block 1 wraps.
        assert!(img.member(&o("w*2+1")).unwrap());
        assert!(!img.member(&o("w+1")).unwrap());
        assert!(img.member(&o("w^2*2+1")).unwrap(), "wrapped block (3,0)");
    }

    #[test]
    fn block_perm_image_at_exponent_zero() {
        let sp = x(0, 2);
        let s1 = Homeo::shift(&sp, 1).unwrap();
        let set = BlockSet::empty(&sp)
            .with_block(1, 0, FiberSet::full(&sp.fiber_top()))
            .with_block(1, 1, FiberSet::full(&sp.fiber_top()));
        let img = check_image(&s1, &set, &["0", "1", "2", "3", "4", "w", "w+1", "w+2", "w*2"]);
        assert!(img.member(&o("0")).unwrap());
        assert!(img.member(&o("1")).unwrap());
        assert!(img.member(&o("w+1")).unwrap(), "block (1,1) wrapped to (2,0)");
        assert!(!img.member(&o("2")).unwrap());
    }

    #[test]
    fn fiber_map_image_flips_least_positions() {
        let sp = x(1, 1);
        let mut entries = BTreeMap::new();
        entries.insert((1u64, 1u64), Inner::Swap01);
        let h = Homeo::fiber_map(&sp, entries).unwrap();
        // S meets block 1 in position 0 only (raw point w+1).
        let s = BlockSet::empty(&sp).with_block(1, 1, FiberSet::singleton(&Ordinal::zero()));
        let img = check_image(&h, &s, &["w+1", "w+2", "w+3", "w*2", "5"]);
        assert!(img.member(&o("w+2")).unwrap());
        assert!(!img.member(&o("w+1")).unwrap());
    }

    #[test]
    fn fiber_map_image_runs_submaps() {
        let sp = x(2, 1);
        let fiber_space = x(1, 1);
        let g = Homeo::finite_perm(&fiber_space, vec![(o("0"), o("1")), (o("1"), o("0"))]).unwrap();
        let mut entries = BTreeMap::new();
        entries.insert((1u64, 0u64), Inner::Sub(Box::new(g)));
        let h = Homeo::fiber_map(&sp, entries).unwrap();
        // S ∩ block 0 = [0, w]: positions 0..w; the submap swaps 0 and 1,
        // so the image still covers [0, w] — but a set containing only
        // position 0 moves.
        let s0 = BlockSet::empty(&sp).with_block(1, 0, FiberSet::singleton(&Ordinal::zero()));
        let img = check_image(&h, &s0, &["0", "1", "2", "w", "w+1", "w^2"]);
        assert!(img.member(&o("1")).unwrap());
        assert!(!img.member(&o("0")).unwrap());
        // A partial fiber with an infinite interval converts both ways.
        let s1 = BlockSet::empty(&sp).with_block(
            1,
            0,
            FiberSet::interval(Cut::Above(o("2")), o("w")),
        );
        check_image(&h, &s1, &["0", "1", "2", "3", "17", "w", "w+1", "w^2"]);
    }

    #[test]
    fn patchwork_image_crisp_periodic() {
        let sp = x(1, 1);
        let evens = BlockSet::residue(&sp, 1, 0, 2).unwrap();
        let odds = BlockSet::residue(&sp, 1, 1, 2).unwrap();
        let h = Homeo::swap(&evens, &odds).unwrap();
        // S = blocks 0 mod 4, so its image is blocks 1 mod 4 shifted to the
        // odd enumeration: even top k maps to odd top k.
        let s = BlockSet::residue(&sp, 1, 0, 4).unwrap();
        let samples = [
            "0", "3", "w", "w+1", "w*2+1", "w*3", "w*4+2", "w*5", "w*6", "w*7",
            "w*8+1", "w*9", "w^2",
        ];
        let img = check_image(&h, &s, &samples);
        // Even tops 0,4,8,... are the 0th,2nd,4th,... evens; their odd
        // partners are blocks 1, 9, 17, ...
        assert!(img.member(&o("w+1")).unwrap());
        assert!(img.member(&o("w*9+1")).unwrap());
        assert!(!img.member(&o("w*3+1")).unwrap());

        // A partial fiber rides along verbatim.
        let s2 = BlockSet::empty(&sp)
            .with_block(1, 0, FiberSet::singleton(&o("3")))
            .union(&BlockSet::residue(&sp, 1, 0, 2).unwrap().with_block(1, 0, FiberSet::full(&sp.fiber_top())));
        check_image(&h, &s2, &samples);
    }

    #[test]
    fn patchwork_image_non_crisp_piece() {
        let sp = x(1, 1);
        let top = sp.fiber_top();
        // Piece sources: [0, w] ∪ half of block 1; targets: whole blocks.
        let s_piece = BlockSet::residue(&sp, 1, 0, 2)
            .unwrap()
            .with_block(1, 1, FiberSet::interval(Cut::Above(o("3")), top.clone()));
        let t_piece = BlockSet::residue(&sp, 1, 1, 2)
            .unwrap()
            .with_block(1, 0, FiberSet::full(&top))
            .with_block(1, 1, FiberSet::empty());
        let rest_s = s_piece.complement();
        let rest_t = t_piece.complement();
        let h = Homeo::patchwork(
            &sp,
            vec![
                (s_piece.clone(), t_piece.clone()),
                (rest_s.clone(), rest_t.clone()),
            ],
        )
        .unwrap();
        // The full source set maps to the full target set.
        assert_eq!(h.image(&s_piece).unwrap(), t_piece);
        // A partial overlap with the non-crisp piece is not representable.
        let partial = BlockSet::residue(&sp, 1, 0, 4).unwrap();
        assert!(matches!(
            h.image(&partial),
            Err(EngineError::NotRepresentable { .. })
        ));
    }

    #[test]
    fn piecewise_glues_restrictions() {
        let sp = SpaceSpec::omega_power(Ordinal::one());
        let evens = BlockSet::residue(&sp, 1, 0, 2).unwrap();
        let odds = BlockSet::residue(&sp, 1, 1, 2).unwrap();
        // On the evens run the even/odd swap; outside identity — a fiber
        // map keeps the odd blocks off the evens' image, so instead pair
        // the swap with its own inverse set.
        let swap = Homeo::swap(&evens, &odds).unwrap();
        let h = Homeo::piecewise(&sp, vec![(evens.clone(), swap.clone()), (odds.clone(), swap.inverse())]).unwrap();
        for p in ["0", "3", "w", "w+4", "w*2", "w*2+1", "w*5", "w*6+2"] {
            assert_eq!(h.apply(&o(p)).unwrap(), swap.apply(&o(p)).unwrap(), "at {p}");
        }
        let s = BlockSet::residue(&sp, 1, 0, 4).unwrap();
        check_image(&h, &s, &["0", "1", "w", "w+1", "w*2", "w*3", "w*4", "w*5+3"]);

        // Compactified spaces are rejected.
        let bad = Homeo::piecewise(&x(1, 1), vec![]);
        assert!(bad.is_err());
    }

    #[test]
    fn translation_image_cases() {
        let sp = SpaceSpec::omega_power(Ordinal::one());
        let t = Homeo::translation(&sp, 1, 1).unwrap();
        let samples = [
            "1", "w+1", "w*2+1", "w*3", "w*4+2", "w*5", "w*6+1", "w*8",
            "w*10+3", "w*12+1", "w*16", "w*24+1",
        ];
        // Finitely many moving blocks.
        let finite = BlockSet::empty(&sp)
            .with_block(1, 2, FiberSet::full(&sp.fiber_top()))
            .with_block(1, 3, FiberSet::full(&sp.fiber_top()));
        let img = check_image(&t, &finite, &samples);
        assert!(img.member(&o("w*8+1")).unwrap(), "block 2 slid to 8");
        assert!(img.member(&o("w*3+1")).unwrap(), "odd block fixed");
        assert!(!img.member(&o("w*2+1")).unwrap());

        // A full level class slides to the next level class (8 mod 16).
        let level0 = BlockSet::residue(&sp, 1, 2, 4).unwrap();
        let img = check_image(&t, &level0, &samples);
        assert!(img.member(&o("w*8+1")).unwrap());
        assert!(img.member(&o("w*24+2")).unwrap());
        assert!(!img.member(&o("w*2+1")).unwrap());

        // Everything leveled: fixed as a set.
        let evens = BlockSet::residue(&sp, 1, 0, 2).unwrap();
        assert_eq!(t.image(&evens).unwrap(), evens);

        // Cofinite in the leveled blocks.
        let holey = evens.with_block(1, 2, FiberSet::empty());
        let img = check_image(&t, &holey, &samples);
        assert!(!img.member(&o("w*8+1")).unwrap(), "the hole slid to block 8");
        assert!(img.member(&o("w*2+1")).unwrap(), "block 2 receives from 4");
        assert!(img.member(&o("w*4+1")).unwrap());

        // Half of a level class: not representable.
        let half = BlockSet::residue(&sp, 1, 2, 8).unwrap();
        assert!(matches!(
            t.image(&half),
            Err(EngineError::NotRepresentable { .. })
        ));
    }

    #[test]
    fn inf_prod_applies_levelwise() {
        let sp = SpaceSpec::omega_power(Ordinal::one());
        let mut entries = BTreeMap::new();
        entries.insert((1u64, 2u64), Inner::Swap01);
        entries.insert((1u64, 6u64), Inner::Swap01);
        let inner = Homeo::fiber_map(&sp, entries).unwrap();
        let h = Homeo::inf_prod(Homeo::identity(&sp), inner.clone(), 1).unwrap();
        // Level 0 blocks act directly.
        assert_eq!(h.apply(&o("w*2+1")).unwrap(), o("w*2+2"));
        assert_eq!(h.apply(&o("w*6+2")).unwrap(), o("w*6+1"));
        // Level 1: blocks 8 and 24 are the translates of 2 and 6.
        assert_eq!(h.apply(&o("w*8+1")).unwrap(), o("w*8+2"));
        assert_eq!(h.apply(&o("w*24+2")).unwrap(), o("w*24+1"));
        // Negative levels are untouched.
        assert_eq!(h.apply(&o("w*4+1")).unwrap(), o("w*4+1"));
        // Unleveled blocks too.
        assert_eq!(h.apply(&o("w+1")).unwrap(), o("w+1"));
        assert_eq!(h.apply(&o("w*3+1")).unwrap(), o("w*3+1"));
        // Inverse round trip.
        let inv = h.inverse();
        for p in ["w*2+1", "w*8+2", "w*16+1", "w*5", "3"] {
            let q = h.apply(&o(p)).unwrap();
            assert_eq!(inv.apply(&q).unwrap(), o(p));
        }
        // A conjugated product transports the action one level up.
        let conj = Homeo::translation(&sp, 1, 1).unwrap();
        let hc = Homeo::inf_prod(conj, inner, 1).unwrap();
        assert_eq!(hc.apply(&o("w*8+1")).unwrap(), o("w*8+2"));
        assert_eq!(hc.apply(&o("w*2+1")).unwrap(), o("w*2+1"), "level -1 source");

        // Support containment is enforced.
        let mut bad = BTreeMap::new();
        bad.insert((1u64, 3u64), Inner::Swap01);
        let stray = Homeo::fiber_map(&sp, bad).unwrap();
        assert!(matches!(
            Homeo::inf_prod(Homeo::identity(&sp), stray, 1),
            Err(EngineError::CertificateViolation { .. })
        ));
        // Images through the product are not representable.
        assert!(matches!(
            h.image(&BlockSet::residue(&sp, 1, 0, 2).unwrap()),
            Err(EngineError::NotRepresentable { .. })
        ));
    }

    #[test]
    fn compose_image_folds_right_to_left() {
        let sp = x(1, 3);
        let s1 = Homeo::shift(&sp, 1).unwrap();
        let s2 = Homeo::shift(&sp, 2).unwrap();
        let h = Homeo::compose(vec![s1.clone(), s2.clone()]).unwrap();
        let set = BlockSet::periodic(&sp, 2, 0, vec![true, false]).unwrap();
        let expect = s1.image(&s2.image(&set).unwrap()).unwrap();
        assert_eq!(h.image(&set).unwrap(), expect);
        check_image(
            &h,
            &set,
            &["w^2+1", "w^2+w+1", "w^2+w*2", "w^2+w*4+3", "w^2", "w^2*2", "5", "w+1"],
        );
    }

    #[test]
    fn support_certificates_cover_movement() {
        let sp = x(1, 3);
        let s1 = Homeo::shift(&sp, 1).unwrap();
        let cert = s1.support_cert();
        for p in [
            "w+1", "w*2+3", "w*9", "w^2*2+1", "w^2*2+w", "w^2*2+w*2+1", "w^2*2+w*4",
        ] {
            let p = o(p);
            if s1.apply(&p).unwrap() != p {
                assert!(cert.member(&p).unwrap(), "moved point {p} certified");
            }
        }
        // Fixed territory is allowed but these stay out.
        assert!(!cert.member(&o("5")).unwrap());
        assert!(!cert.member(&o("w^2+3")).unwrap(), "channel 2 untouched");
        assert!(!cert.member(&o("w^2*2+w+1")).unwrap(), "ladder class 1 mod 2");

        // A finite permutation's certificate is its exact orbit set.
        let f = Homeo::finite_perm(&sp, vec![(o("3"), o("w+1")), (o("w+1"), o("3"))]).unwrap();
        let cert = f.support_cert();
        assert!(cert.member(&o("3")).unwrap());
        assert!(cert.member(&o("w+1")).unwrap());
        assert!(!cert.member(&o("4")).unwrap());

        // Attached certificates win.
        let labeled = f
            .clone()
            .with_cert(BlockSet::full(&sp))
            .unwrap();
        assert!(labeled.support_cert().is_full());

        // Translations are supported exactly on the leveled blocks.
        let spw = SpaceSpec::omega_power(Ordinal::one());
        let t = Homeo::translation(&spw, 1, 2).unwrap();
        let cert = t.support_cert();
        assert!(cert.member(&o("w*2+1")).unwrap());
        assert!(!cert.member(&o("w+1")).unwrap());
        assert!(!cert.member(&o("3")).unwrap());
    }

    #[test]
    fn mu_action_and_purity() {
        let sp = x(1, 3);
        assert!(Homeo::shift(&sp, 1).unwrap().is_pure());
        assert!(Homeo::shift(&sp, 2).unwrap().is_pure());
        let sym = Homeo::sym_section(&sp, &[2, 3, 1]).unwrap();
        assert_eq!(sym.mu_action(), vec![2, 3, 1]);
        assert!(!sym.is_pure());
        // Composition tracks the permutation product.
        let sym2 = Homeo::sym_section(&sp, &[2, 1, 3]).unwrap();
        let prod = Homeo::compose(vec![sym.clone(), sym2]).unwrap();
        assert_eq!(prod.mu_action(), vec![3, 2, 1]);
        // mu images agree pointwise.
        for (k, &c) in sym.mu_action().iter().enumerate() {
            assert_eq!(sym.apply(&sp.mu(k as u64 + 1)).unwrap(), sp.mu(c));
        }
    }

    #[test]
    fn crossing_windows_hold_pointwise() {
        let sp = x(1, 3);
        let s1 = Homeo::shift(&sp, 1).unwrap();
        let b = 3;
        let w = s1.crossing_window(b).unwrap();
        let inv = s1.inverse();
        for c in 1..=3u64 {
            for n in w..w + 12 {
                let t = sp.block_top_point(c, n);
                for (tag, q) in [("fwd", s1.apply(&t).unwrap()), ("rev", inv.apply(&t).unwrap())] {
                    match sp.to_blocks(&q).unwrap() {
                        BlockCoord::Block { channel, block, fiber } => {
                            assert_eq!(channel, c, "{tag} stays in channel at ({c},{n})");
                            assert!(block >= b, "{tag} lands at block {block} >= {b}");
                            assert_eq!(fiber, sp.fiber_top(), "{tag} lands on a top");
                        }
                        _ => panic!("top landed on a maximal point"),
                    }
                }
            }
        }
        // Patchwork windows come from the top transport.
        let evens = BlockSet::residue(&sp, 1, 0, 2).unwrap();
        let odds = BlockSet::residue(&sp, 1, 1, 2).unwrap();
        let h = Homeo::swap(&evens, &odds).unwrap();
        let w = h.crossing_window(5).unwrap();
        for n in w..w + 8 {
            let t = sp.block_top_point(1, n);
            let q = h.apply(&t).unwrap();
            if let BlockCoord::Block { channel, block, .. } = sp.to_blocks(&q).unwrap() {
                assert_eq!(channel, 1);
                assert!(block >= 5);
            }
        }
        // Symbol sections move whole channels: no window exists.
        let sym = Homeo::sym_section(&sp, &[2, 3, 1]).unwrap();
        assert!(matches!(
            sym.crossing_window(1),
            Err(EngineError::NonPure { .. })
        ));
        // Translations have the dyadic bound.
        let spw = SpaceSpec::omega_power(Ordinal::one());
        let t = Homeo::translation(&spw, 1, 1).unwrap();
        assert_eq!(t.crossing_window(3).unwrap(), 28);
    }

    #[test]
    fn top_actions_match_pointwise() {
        let sp = x(1, 3);
        let s1 = Homeo::shift(&sp, 1).unwrap();
        let TopMap::Exact(m) = s1.top_action().unwrap() else {
            panic!("block permutations act exactly");
        };
        for (c, n) in [(1u64, 0u64), (1, 1), (1, 5), (2, 3), (3, 0), (3, 4), (3, 7)] {
            let t = sp.block_top_point(c, n);
            let q = s1.apply(&t).unwrap();
            let (c2, n2) = m.apply((c, n));
            assert_eq!(q, sp.block_top_point(c2, n2), "top ({c},{n})");
        }
        // Patchwork glues the per-piece transports.
        let evens = BlockSet::residue(&sp, 1, 0, 2).unwrap();
        let odds = BlockSet::residue(&sp, 1, 1, 2).unwrap();
        let h = Homeo::swap(&evens, &odds).unwrap();
        let TopMap::Exact(m) = h.top_action().unwrap() else {
            panic!("matched densities act exactly");
        };
        for n in 0..12u64 {
            let t = sp.block_top_point(1, n);
            let q = h.apply(&t).unwrap();
            let (c2, n2) = m.apply((1, n));
            assert_eq!(q, sp.block_top_point(c2, n2), "top (1,{n})");
        }
        // Density mismatch: provably moves almost all tops.
        let quarters = BlockSet::residue(&sp, 1, 0, 4).unwrap();
        let rest = quarters.complement();
        let dense = Homeo::patchwork(
            &sp,
            vec![
                (quarters.clone(), odds.clone()),
                (rest.clone(), odds.complement()),
            ],
        )
        .unwrap();
        assert_eq!(
            dense.top_action().unwrap().moves_infinitely(),
            Some(true)
        );
    }

    #[test]
    fn top_action_at_exponent_zero_uses_indices() {
        let sp = x(0, 2);
        // Point k of channel 1 is index k; channel 2 blocks keep their own.
        let f = Homeo::finite_perm(&sp, vec![(o("0"), o("3")), (o("3"), o("0"))]).unwrap();
        let TopMap::Exact(m) = f.top_action().unwrap() else {
            panic!("exact at exponent zero");
        };
        assert_eq!(m.apply((1, 0)), (1, 3));
        assert_eq!(m.apply((1, 3)), (1, 0));
        assert_eq!(m.apply((1, 1)), (1, 1));

        let s1 = Homeo::shift(&sp, 1).unwrap();
        let TopMap::Exact(m) = s1.top_action().unwrap() else {
            panic!("exact at exponent zero");
        };
        // Point 2 (block 1) wraps to (2,0); point 3 slides to point 2;
        // points 0 and 1 are pinned.
        assert_eq!(m.apply((1, 2)), (2, 0));
        assert_eq!(m.apply((1, 3)), (1, 2));
        assert_eq!(m.apply((1, 0)), (1, 0));
        assert_eq!(m.apply((1, 1)), (1, 1));
        assert_eq!(m.apply((2, 0)), (2, 1));
    }

    #[test]
    fn finitariness_tiers() {
        let sp = x(1, 2);
        let f = Homeo::finite_perm(&sp, vec![(o("1"), o("2")), (o("2"), o("1"))]).unwrap();
        assert!(f.is_finitary().unwrap());
        assert!(!Homeo::shift(&sp, 1).unwrap().is_finitary().unwrap());
        let mut entries = BTreeMap::new();
        entries.insert((1u64, 0u64), Inner::Swap01);
        assert!(Homeo::fiber_map(&sp, entries).unwrap().is_finitary().unwrap());

        let spw = SpaceSpec::omega_power(Ordinal::one());
        let t = Homeo::translation(&spw, 1, 1).unwrap();
        assert!(!t.is_finitary().unwrap());
        // An infinite product of top-fixing seeds fixes all tops.
        let mut entries = BTreeMap::new();
        entries.insert((1u64, 2u64), Inner::Swap01);
        let inner = Homeo::fiber_map(&spw, entries).unwrap();
        let prod = Homeo::inf_prod(Homeo::identity(&spw), inner, 1).unwrap();
        assert!(prod.is_finitary().unwrap());
    }

    #[test]
    fn position_blockset_conversions_round_trip() {
        let fsp = x(1, 1);
        let top = o("w^2");
        for fs in [
            FiberSet::empty(),
            FiberSet::full(&top),
            FiberSet::singleton(&Ordinal::zero()),
            FiberSet::interval(Cut::Above(o("3")), o("w")),
            FiberSet::interval(Cut::Above(o("w+2")), o("w*3"))
                .union(&FiberSet::singleton(&o("1"))),
            FiberSet::interval(Cut::Above(o("w*2")), top.clone()),
        ] {
            let bs = positions_to_blockset(&fsp, &fs).unwrap();
            for p in ["0", "1", "2", "3", "4", "w", "w+1", "w+2", "w+3", "w*2", "w*2+1", "w*3", "w^2"] {
                assert_eq!(
                    bs.member(&o(p)).unwrap(),
                    fs.member(&o(p)),
                    "position {p} in {fs:?}"
                );
            }
            assert_eq!(blockset_to_positions(&bs).unwrap(), fs.union(&FiberSet::empty()));
        }
        // An alternating block pattern is no finite union of intervals.
        let alt = BlockSet::residue(&fsp, 1, 0, 2).unwrap();
        assert!(matches!(
            blockset_to_positions(&alt),
            Err(EngineError::NotRepresentable { .. })
        ));
        // A true tail without its limit point is not one either.
        let tail = BlockSet::periodic(&fsp, 1, 3, vec![true]).unwrap().with_mu(1, false);
        assert!(matches!(
            blockset_to_positions(&tail),
            Err(EngineError::NotRepresentable { .. })
        ));
    }
}
