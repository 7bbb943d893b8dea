//! The homeomorphism syntax tree: nodes, pointwise application, and
//! constructive inverses.
//!
//! Every constructor checks a finite certificate (windowed bijectivity,
//! piece profiles, support containment), so a value of type [`Homeo`] is a
//! genuine homeomorphism of its space.  There is no symbolic inverse node:
//! [`Homeo::inverse`] rebuilds the inverse from the same constructors.

use std::collections::BTreeMap;

use super::canonical::{patch_apply, validate_patch_piece};
use super::util::{block_level, checked_translate_block, BlockMap, TailRule};
use super::EngineError;
use crate::ordinal::Ordinal;
use crate::space::{BlockCoord, BlockSet, SpaceError, SpaceSpec};

/// A homeomorphism of one block fiber, acting on normalized fiber positions
/// `[0, w^a]` — the points of the compact degree-1 space one exponent down.
#[derive(Debug, Clone, PartialEq)]
pub enum Inner {
    /// Swaps the two least fiber positions; identity elsewhere.
    Swap01,
    /// An arbitrary homeomorphism of the fiber space.
    Sub(Box<Homeo>),
}

impl Inner {
    fn inverse(&self) -> Inner {
        match self {
            Inner::Swap01 => Inner::Swap01,
            Inner::Sub(h) => Inner::Sub(Box::new(h.inverse())),
        }
    }
}

/// One node of the homeomorphism syntax tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// The identity map.
    Identity,
    /// A finite permutation of isolated points, as its graph of moved
    /// points.
    FinitePerm(Vec<(Ordinal, Ordinal)>),
    /// A rigid permutation of blocks: each block is carried onto its image
    /// by the order isomorphism of normalized fibers, and each channel
    /// limit follows its tail.
    BlockPerm(BlockMap),
    /// Independent homeomorphisms of finitely many block fibers.
    FiberMap(BTreeMap<(u64, u64), Inner>),
    /// Canonical order isomorphisms between paired block sets, identity
    /// outside their common union.
    Patchwork(Vec<(BlockSet, BlockSet)>),
    /// Whole-space maps restricted to a clopen partition and glued:
    /// `(source, map, cached image)` triples, identity outside.
    Piecewise(Vec<(BlockSet, Homeo, BlockSet)>),
    /// The dyadic translation on one channel: blocks of level `l` slide
    /// rigidly to level `l + steps`; unleveled blocks stay put.
    Translation { channel: u64, steps: i64 },
    /// The infinite product of the level-`n` translates of `inner`,
    /// transported by `conj`.  Convergent because `inner` is supported in
    /// the level-0 class, so the factors have pairwise disjoint supports.
    InfProd {
        conj: Box<Homeo>,
        inner: Box<Homeo>,
        channel: u64,
    },
    /// Right-to-left composition: `[f, g]` maps `p` to `f(g(p))`.
    Compose(Vec<Homeo>),
}

/// A certified homeomorphism of a block-coordinate space.
#[derive(Debug, Clone, PartialEq)]
pub struct Homeo {
    space: SpaceSpec,
    node: Node,
    cert: Option<BlockSet>,
}

fn guard_point(space: &SpaceSpec, p: &Ordinal) -> Result<(), EngineError> {
    if space.contains(p) {
        Ok(())
    } else {
        Err(EngineError::Space(SpaceError::OutOfSpace {
            point: p.to_string(),
            space: space.to_string(),
        }))
    }
}

/// Rigidly moves a point of `channel` by `steps` dyadic levels.  Points of
/// other channels, of unleveled blocks, and channel limits are fixed.
fn translate_point(
    space: &SpaceSpec,
    channel: u64,
    steps: i64,
    p: &Ordinal,
) -> Result<Ordinal, EngineError> {
    match space.to_blocks(p)? {
        BlockCoord::Block {
            channel: c,
            block,
            fiber,
        } if c == channel && block_level(block).is_some() => {
            let b2 = checked_translate_block(block, steps)
                .ok_or_else(|| EngineError::not_representable("translated block index"))?;
            // Leveled blocks are tail blocks on both sides: the raw fiber
            // transports rigidly.
            Ok(space.from_blocks(&BlockCoord::Block {
                channel: c,
                block: b2,
                fiber,
            })?)
        }
        _ => Ok(p.clone()),
    }
}

/// Disjointness of sources, disjointness of targets, and equality of the
/// two unions: the global frame of every piecewise-defined bijection.
fn validate_pieces<'a>(
    space: &SpaceSpec,
    pieces: impl Iterator<Item = (&'a BlockSet, &'a BlockSet)>,
) -> Result<(), EngineError> {
    let mut src_union = BlockSet::empty(space);
    let mut dst_union = BlockSet::empty(space);
    for (s, t) in pieces {
        if s.space() != space || t.space() != space {
            return Err(EngineError::SpaceMismatch {
                expected: space.to_string(),
                found: "a piece over a different space".into(),
            });
        }
        if !s.intersect(&src_union).is_empty() {
            return Err(EngineError::invalid("piece sources overlap"));
        }
        if !t.intersect(&dst_union).is_empty() {
            return Err(EngineError::invalid("piece targets overlap"));
        }
        src_union = src_union.union(s);
        dst_union = dst_union.union(t);
    }
    if !src_union.minus(&dst_union).is_empty() || !dst_union.minus(&src_union).is_empty() {
        return Err(EngineError::invalid(
            "piece sources and targets do not cover the same set",
        ));
    }
    Ok(())
}

impl Homeo {
    fn raw(space: SpaceSpec, node: Node) -> Homeo {
        Homeo {
            space,
            node,
            cert: None,
        }
    }

    /// The identity of `space`.
    pub fn identity(space: &SpaceSpec) -> Homeo {
        Homeo::raw(space.clone(), Node::Identity)
    }

    /// A finite permutation of isolated points, given as its graph.
    /// Identity pairs are dropped; moving a limit point is rejected, since
    /// no finite permutation can be continuous there.
    pub fn finite_perm(
        space: &SpaceSpec,
        pairs: Vec<(Ordinal, Ordinal)>,
    ) -> Result<Homeo, EngineError> {
        let moved: Vec<(Ordinal, Ordinal)> = pairs.into_iter().filter(|(a, b)| a != b).collect();
        for (a, b) in &moved {
            guard_point(space, a)?;
            guard_point(space, b)?;
            if a.is_limit() || b.is_limit() {
                return Err(EngineError::invalid(
                    "finite permutations may move isolated points only",
                ));
            }
        }
        let mut sources: Vec<&Ordinal> = moved.iter().map(|(a, _)| a).collect();
        let mut targets: Vec<&Ordinal> = moved.iter().map(|(_, b)| b).collect();
        sources.sort();
        targets.sort();
        if sources.windows(2).any(|w| w[0] == w[1]) {
            return Err(EngineError::invalid("finite permutation repeats a source"));
        }
        if sources != targets {
            return Err(EngineError::invalid(
                "finite permutation sources and targets differ as sets",
            ));
        }
        Ok(Homeo::raw(space.clone(), Node::FinitePerm(moved)))
    }

    /// A rigid block permutation.  The map is re-certified against this
    /// space's degree.  At exponent zero block `(1,0)` is the two-point set
    /// `{0, 1}` while every other block is a singleton, so it must stay
    /// fixed there; at higher exponents all blocks share the normalized
    /// fiber range `[0, w^a]` and may move freely.
    pub fn block_perm(space: &SpaceSpec, map: BlockMap) -> Result<Homeo, EngineError> {
        let map = BlockMap::new(map.except().clone(), map.rules().to_vec(), space.degree())?;
        if space.alpha().is_zero() && map.apply((1, 0)) != (1, 0) {
            return Err(EngineError::invalid(
                "at exponent zero the two-point block (1,0) cannot move",
            ));
        }
        Ok(Homeo::raw(space.clone(), Node::BlockPerm(map)))
    }

    /// Independent fiber homeomorphisms on finitely many blocks.  Submaps
    /// live on the compact degree-1 space one exponent down, so the
    /// exponent must be a successor; `Swap01` needs only exponent >= 1.
    pub fn fiber_map(
        space: &SpaceSpec,
        entries: BTreeMap<(u64, u64), Inner>,
    ) -> Result<Homeo, EngineError> {
        if space.alpha().is_zero() {
            return Err(EngineError::AlphaUnsupported {
                reason: "fiber maps need exponent >= 1; singleton fibers admit only the identity"
                    .into(),
            });
        }
        for ((c, _), inner) in &entries {
            if *c == 0 || *c > space.degree() {
                return Err(EngineError::Space(SpaceError::InvalidChannel {
                    channel: *c,
                    degree: space.degree(),
                }));
            }
            if let Inner::Sub(h) = inner {
                let beta = space
                    .alpha()
                    .pred()
                    .ok_or_else(|| EngineError::AlphaUnsupported {
                        reason: "fiber submaps need a successor exponent".into(),
                    })?;
                let fiber_space = SpaceSpec::compact(beta, 1)?;
                if *h.space() != fiber_space {
                    return Err(EngineError::SpaceMismatch {
                        expected: fiber_space.to_string(),
                        found: h.space().to_string(),
                    });
                }
            }
        }
        Ok(Homeo::raw(space.clone(), Node::FiberMap(entries)))
    }

    /// Canonical maps between paired block sets, identity outside.  Each
    /// piece must pass the per-channel profile validation; globally the
    /// sources and the targets must tile the same set.
    pub fn patchwork(
        space: &SpaceSpec,
        pieces: Vec<(BlockSet, BlockSet)>,
    ) -> Result<Homeo, EngineError> {
        validate_pieces(space, pieces.iter().map(|(s, t)| (s, t)))?;
        for (s, t) in &pieces {
            validate_patch_piece(space, s, t)?;
        }
        Ok(Homeo::raw(space.clone(), Node::Patchwork(pieces)))
    }

    /// Glues restrictions of whole-space maps: on each source the glued map
    /// is that piece's map, outside all sources the identity.  Only
    /// available on the non-compactified space, where every block set is
    /// clopen and any such gluing is automatically a homeomorphism.
    pub fn piecewise(
        space: &SpaceSpec,
        pieces: Vec<(BlockSet, Homeo)>,
    ) -> Result<Homeo, EngineError> {
        if space.is_compactified() {
            return Err(EngineError::invalid(
                "piecewise gluing needs the non-compactified space, where block sets are clopen",
            ));
        }
        let mut cached = Vec::with_capacity(pieces.len());
        for (s, h) in pieces {
            if h.space() != space {
                return Err(EngineError::SpaceMismatch {
                    expected: space.to_string(),
                    found: h.space().to_string(),
                });
            }
            let t = h.image(&s)?;
            cached.push((s, h, t));
        }
        validate_pieces(space, cached.iter().map(|(s, _, t)| (s, t)))?;
        Ok(Homeo::raw(space.clone(), Node::Piecewise(cached)))
    }

    /// The dyadic translation by `steps` levels on one channel.
    pub fn translation(space: &SpaceSpec, channel: u64, steps: i64) -> Result<Homeo, EngineError> {
        if channel == 0 || channel > space.degree() {
            return Err(EngineError::Space(SpaceError::InvalidChannel {
                channel,
                degree: space.degree(),
            }));
        }
        if steps.unsigned_abs() > 64 {
            return Err(EngineError::invalid(
                "translation depth exceeds the certified level range",
            ));
        }
        Ok(Homeo::raw(space.clone(), Node::Translation { channel, steps }))
    }

    /// The infinite product `prod_n (c t^n) inner (t^-n c^-1)` over the
    /// dyadic levels of `channel`, where `t` is the one-step translation
    /// and `c = conj`.  Requires `inner`'s support to be certified inside
    /// the level-0 class (blocks `2 mod 4`).
    pub fn inf_prod(conj: Homeo, inner: Homeo, channel: u64) -> Result<Homeo, EngineError> {
        let space = conj.space().clone();
        if inner.space() != &space {
            return Err(EngineError::SpaceMismatch {
                expected: space.to_string(),
                found: inner.space().to_string(),
            });
        }
        if channel == 0 || channel > space.degree() {
            return Err(EngineError::Space(SpaceError::InvalidChannel {
                channel,
                degree: space.degree(),
            }));
        }
        let level0 = BlockSet::residue(&space, channel, 2, 4)?;
        let supp = inner.support_cert();
        if !supp.minus(&level0).is_empty() {
            return Err(EngineError::CertificateViolation {
                reason: "inner map is not certified to be supported in the level-0 class".into(),
            });
        }
        Ok(Homeo::raw(
            space,
            Node::InfProd {
                conj: Box::new(conj),
                inner: Box::new(inner),
                channel,
            },
        ))
    }

    /// Right-to-left composition: `compose([f, g])` maps `p` to `f(g(p))`.
    pub fn compose(parts: Vec<Homeo>) -> Result<Homeo, EngineError> {
        let space = parts
            .first()
            .ok_or_else(|| EngineError::invalid("empty composition"))?
            .space()
            .clone();
        for h in &parts {
            if h.space() != &space {
                return Err(EngineError::SpaceMismatch {
                    expected: space.to_string(),
                    found: h.space().to_string(),
                });
            }
        }
        Ok(Homeo::raw(space, Node::Compose(parts)))
    }

    /// The involution exchanging two disjoint block sets by their canonical
    /// maps.
    pub fn swap(a: &BlockSet, b: &BlockSet) -> Result<Homeo, EngineError> {
        let space = a.space().clone();
        Homeo::patchwork(&space, vec![(a.clone(), b.clone()), (b.clone(), a.clone())])
    }

    /// The outflow generator `s_i`, `1 <= i < d`: channel `i`'s tail slides
    /// one block down, its lowest tail block wraps to channel `d`'s ladder
    /// class `i - 1`, and that class slides up by `d - 1`.  Block `(1,0)`
    /// never moves, so the construction is uniform in the exponent.
    pub fn shift(space: &SpaceSpec, i: u64) -> Result<Homeo, EngineError> {
        let d = space.degree();
        if d < 2 {
            return Err(EngineError::DegreeTooSmall { degree: d, need: 2 });
        }
        if i == 0 || i >= d {
            return Err(EngineError::invalid(
                "shift index must satisfy 1 <= i < degree",
            ));
        }
        let lowest = if i == 1 { 1 } else { 0 };
        let mut except = BTreeMap::new();
        except.insert((i, lowest), (d, i - 1));
        let rules = vec![
            TailRule {
                src: i,
                residue: 0,
                period: 1,
                from: lowest + 1,
                dst: i,
                shift: -1,
            },
            TailRule {
                src: d,
                residue: i - 1,
                period: d - 1,
                from: 0,
                dst: d,
                shift: (d - 1) as i64,
            },
        ];
        Homeo::block_perm(space, BlockMap::new(except, rules, d)?)
    }

    /// The block-rigid section of the symbol homomorphism: channels are
    /// relabeled by `sigma` in tail coordinates (block `(1,0)` pinned, so
    /// channel 1's tail starts at block 1).  `sigma[j-1]` is the image of
    /// channel `j`.  The assignment `sigma -> map` is a group homomorphism.
    pub fn sym_section(space: &SpaceSpec, sigma: &[u64]) -> Result<Homeo, EngineError> {
        let d = space.degree();
        if sigma.len() as u64 != d {
            return Err(EngineError::invalid(
                "symbol must list the image of every channel",
            ));
        }
        let mut seen = vec![false; d as usize];
        for &img in sigma {
            if img == 0 || img > d || seen[(img - 1) as usize] {
                return Err(EngineError::invalid(
                    "symbol is not a permutation of the channels",
                ));
            }
            seen[(img - 1) as usize] = true;
        }
        let mut rules = Vec::new();
        let k = sigma[0];
        if k != 1 {
            rules.push(TailRule {
                src: 1,
                residue: 0,
                period: 1,
                from: 1,
                dst: k,
                shift: -1,
            });
            let j0 = (sigma.iter().position(|&x| x == 1).expect("1 has a preimage") + 1) as u64;
            rules.push(TailRule {
                src: j0,
                residue: 0,
                period: 1,
                from: 0,
                dst: 1,
                shift: 1,
            });
            for j in 2..=d {
                if j != j0 {
                    rules.push(TailRule {
                        src: j,
                        residue: 0,
                        period: 1,
                        from: 0,
                        dst: sigma[(j - 1) as usize],
                        shift: 0,
                    });
                }
            }
        } else {
            for j in 2..=d {
                rules.push(TailRule {
                    src: j,
                    residue: 0,
                    period: 1,
                    from: 0,
                    dst: sigma[(j - 1) as usize],
                    shift: 0,
                });
            }
        }
        Homeo::block_perm(space, BlockMap::new(BTreeMap::new(), rules, d)?)
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    /// The support certificate attached by a constructing algorithm, if
    /// any: a set guaranteed by that algorithm to contain the support.
    pub fn cert(&self) -> Option<&BlockSet> {
        self.cert.as_ref()
    }

    /// Attaches a support certificate.  Downstream constructions trust it;
    /// the pointwise verifier can refute a wrong one.
    pub fn with_cert(mut self, support: BlockSet) -> Result<Homeo, EngineError> {
        if support.space() != &self.space {
            return Err(EngineError::SpaceMismatch {
                expected: self.space.to_string(),
                found: support.space().to_string(),
            });
        }
        self.cert = Some(support);
        Ok(self)
    }

    /// Evaluates the map at one point of its space.
    pub fn apply(&self, p: &Ordinal) -> Result<Ordinal, EngineError> {
        match &self.node {
            Node::Identity => {
                guard_point(&self.space, p)?;
                Ok(p.clone())
            }
            Node::FinitePerm(pairs) => {
                guard_point(&self.space, p)?;
                for (a, b) in pairs {
                    if a == p {
                        return Ok(b.clone());
                    }
                }
                Ok(p.clone())
            }
            Node::BlockPerm(map) => match self.space.to_blocks(p)? {
                BlockCoord::MaxPoint { channel } => {
                    Ok(self.space.from_blocks(&BlockCoord::MaxPoint {
                        channel: map.mu_destination(channel),
                    })?)
                }
                BlockCoord::Block {
                    channel,
                    block,
                    fiber,
                } => {
                    let pos = self
                        .space
                        .normalize_fiber(self.space.block_kind(channel, block), &fiber);
                    let (c2, b2) = map.apply((channel, block));
                    let raw = self
                        .space
                        .raw_fiber(self.space.block_kind(c2, b2), &pos);
                    Ok(self.space.from_blocks(&BlockCoord::Block {
                        channel: c2,
                        block: b2,
                        fiber: raw,
                    })?)
                }
            },
            Node::FiberMap(entries) => match self.space.to_blocks(p)? {
                BlockCoord::Block {
                    channel,
                    block,
                    fiber,
                } => match entries.get(&(channel, block)) {
                    Some(inner) => {
                        let kind = self.space.block_kind(channel, block);
                        let pos = self.space.normalize_fiber(kind, &fiber);
                        let moved = match inner {
                            Inner::Swap01 => {
                                if pos.is_zero() {
                                    Ordinal::one()
                                } else if pos == Ordinal::one() {
                                    Ordinal::zero()
                                } else {
                                    pos
                                }
                            }
                            Inner::Sub(h) => h.apply(&pos)?,
                        };
                        let raw = self.space.raw_fiber(kind, &moved);
                        Ok(self.space.from_blocks(&BlockCoord::Block {
                            channel,
                            block,
                            fiber: raw,
                        })?)
                    }
                    None => Ok(p.clone()),
                },
                BlockCoord::MaxPoint { .. } => Ok(p.clone()),
            },
            Node::Patchwork(pieces) => {
                guard_point(&self.space, p)?;
                for (s, t) in pieces {
                    if s.member(p)? {
                        return patch_apply(&self.space, s, t, p);
                    }
                }
                Ok(p.clone())
            }
            Node::Piecewise(pieces) => {
                guard_point(&self.space, p)?;
                for (s, h, _) in pieces {
                    if s.member(p)? {
                        return h.apply(p);
                    }
                }
                Ok(p.clone())
            }
            Node::Translation { channel, steps } => {
                translate_point(&self.space, *channel, *steps, p)
            }
            Node::InfProd {
                conj,
                inner,
                channel,
            } => {
                let q = conj.apply_inverse(p)?;
                let level = match self.space.to_blocks(&q)? {
                    BlockCoord::Block {
                        channel: c, block, ..
                    } if c == *channel => block_level(block),
                    _ => None,
                };
                match level {
                    Some(l) if l >= 0 => {
                        // Only the level-l factor acts on level-l points,
                        // and it keeps them at level l.
                        let q0 = translate_point(&self.space, *channel, -l, &q)?;
                        let r0 = inner.apply(&q0)?;
                        let r = translate_point(&self.space, *channel, l, &r0)?;
                        conj.apply(&r)
                    }
                    _ => Ok(p.clone()),
                }
            }
            Node::Compose(parts) => {
                let mut q = p.clone();
                for h in parts.iter().rev() {
                    q = h.apply(&q)?;
                }
                Ok(q)
            }
        }
    }

    /// Evaluates the inverse map at one point.
    pub fn apply_inverse(&self, p: &Ordinal) -> Result<Ordinal, EngineError> {
        self.inverse().apply(p)
    }

    /// The inverse homeomorphism, built constructively node by node.  The
    /// support certificate carries over: a map and its inverse share their
    /// support.
    pub fn inverse(&self) -> Homeo {
        let node = match &self.node {
            Node::Identity => Node::Identity,
            Node::FinitePerm(pairs) => {
                Node::FinitePerm(pairs.iter().map(|(a, b)| (b.clone(), a.clone())).collect())
            }
            Node::BlockPerm(map) => Node::BlockPerm(map.inverse(self.space.degree())),
            Node::FiberMap(entries) => {
                Node::FiberMap(entries.iter().map(|(k, v)| (*k, v.inverse())).collect())
            }
            Node::Patchwork(pieces) => {
                Node::Patchwork(pieces.iter().map(|(s, t)| (t.clone(), s.clone())).collect())
            }
            Node::Piecewise(pieces) => Node::Piecewise(
                pieces
                    .iter()
                    .map(|(s, h, t)| (t.clone(), h.inverse(), s.clone()))
                    .collect(),
            ),
            Node::Translation { channel, steps } => Node::Translation {
                channel: *channel,
                steps: -steps,
            },
            Node::InfProd {
                conj,
                inner,
                channel,
            } => Node::InfProd {
                conj: conj.clone(),
                inner: Box::new(inner.inverse()),
                channel: *channel,
            },
            Node::Compose(parts) => Node::Compose(parts.iter().rev().map(Homeo::inverse).collect()),
        };
        Homeo {
            space: self.space.clone(),
            node,
            cert: self.cert.clone(),
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

    #[test]
    fn finite_perm_swaps_isolated_points() {
        let sp = x(1, 1);
        let h = Homeo::finite_perm(&sp, vec![(o("1"), o("2")), (o("2"), o("1"))]).unwrap();
        assert_eq!(h.apply(&o("1")).unwrap(), o("2"));
        assert_eq!(h.apply(&o("2")).unwrap(), o("1"));
        assert_eq!(h.apply(&o("3")).unwrap(), o("3"));
        assert_eq!(h.apply(&o("w")).unwrap(), o("w"));
        assert_eq!(h.inverse().apply(&o("1")).unwrap(), o("2"));
        assert!(h.apply(&o("w^3")).is_err());

        assert!(Homeo::finite_perm(&sp, vec![(o("w"), o("1")), (o("1"), o("w"))]).is_err());
        assert!(
            Homeo::finite_perm(&sp, vec![(o("1"), o("2")), (o("1"), o("3"))]).is_err(),
            "repeated source"
        );
        assert!(
            Homeo::finite_perm(&sp, vec![(o("1"), o("2")), (o("2"), o("3"))]).is_err(),
            "targets are not a permutation of sources"
        );
    }

    #[test]
    fn shift_generator_acts_on_blocks() {
        // a = 1, d = 3: mu_1 = w^2, mu_2 = w^2*2, mu_3 = w^2*3.
        let sp = x(1, 3);
        let s1 = Homeo::shift(&sp, 1).unwrap();
        assert_eq!(s1.apply(&o("w*2+5")).unwrap(), o("w+5"));
        // Lowest tail block (1,1) wraps to (3,0), tops riding along.
        assert_eq!(s1.apply(&o("w+1")).unwrap(), o("w^2*2+1"));
        assert_eq!(s1.apply(&o("w*2")).unwrap(), o("w^2*2+w"));
        // Block (1,0) stays fixed.
        assert_eq!(s1.apply(&o("5")).unwrap(), o("5"));
        assert_eq!(s1.apply(&o("w")).unwrap(), o("w"));
        // Channel 3's ladder class 0 mod 2 slides up by 2; odd blocks stay.
        assert_eq!(s1.apply(&o("w^2*2+w")).unwrap(), o("w^2*2+w*3"));
        assert_eq!(s1.apply(&o("w^2*2+w+1")).unwrap(), o("w^2*2+w+1"));
        // Channel limits follow their tails.
        assert_eq!(s1.apply(&o("w^2")).unwrap(), o("w^2"));
        assert_eq!(s1.apply(&o("w^2*3")).unwrap(), o("w^2*3"));
        // Channel 2 untouched by s_1.
        assert_eq!(s1.apply(&o("w^2+w+3")).unwrap(), o("w^2+w+3"));

        let s2 = Homeo::shift(&sp, 2).unwrap();
        assert_eq!(s2.apply(&o("w^2+1")).unwrap(), o("w^2*2+w+1"));
        assert_eq!(s2.apply(&o("w^2+w+3")).unwrap(), o("w^2+3"));
        assert_eq!(s2.apply(&o("w^2*2+w*2")).unwrap(), o("w^2*2+w*4"));

        for (h, i) in [(&s1, 1u64), (&s2, 2u64)] {
            let inv = h.inverse();
            for p in ["0", "7", "w+2", "w*5+1", "w^2+w*3+4", "w^2*2+w*6", "w^2*2"] {
                let q = h.apply(&o(p)).unwrap();
                assert_eq!(inv.apply(&q).unwrap(), o(p), "s_{i} roundtrip at {p}");
            }
        }

        assert!(Homeo::shift(&sp, 0).is_err());
        assert!(Homeo::shift(&sp, 3).is_err());
        assert!(matches!(
            Homeo::shift(&x(1, 1), 1),
            Err(EngineError::DegreeTooSmall { .. })
        ));
    }

    #[test]
    fn shift_generator_at_exponent_zero() {
        // X = w*2 + 1: channel 1 = {0, 1, 2, ...}, channel 2 = {w+1, ...}.
        let sp = x(0, 2);
        let s1 = Homeo::shift(&sp, 1).unwrap();
        assert_eq!(s1.apply(&o("2")).unwrap(), o("w+1"));
        assert_eq!(s1.apply(&o("3")).unwrap(), o("2"));
        assert_eq!(s1.apply(&o("w+1")).unwrap(), o("w+2"));
        assert_eq!(s1.apply(&o("0")).unwrap(), o("0"));
        assert_eq!(s1.apply(&o("1")).unwrap(), o("1"));
        assert_eq!(s1.apply(&o("w")).unwrap(), o("w"));
        assert_eq!(s1.apply(&o("w*2")).unwrap(), o("w*2"));
        let inv = s1.inverse();
        for p in ["0", "1", "2", "5", "w", "w+1", "w+4", "w*2"] {
            let q = s1.apply(&o(p)).unwrap();
            assert_eq!(inv.apply(&q).unwrap(), o(p));
        }
    }

    #[test]
    fn block_perm_respects_the_initial_block_guard() {
        let mut except = BTreeMap::new();
        except.insert((1, 0), (1, 1));
        except.insert((1, 1), (1, 0));
        let map = BlockMap::new(except, vec![], 1).unwrap();

        assert!(Homeo::block_perm(&x(0, 1), map.clone()).is_err());

        // At exponent 1 the initial block moves by the order isomorphism of
        // normalized fibers: [0, w] <-> (w, w*2].
        let h = Homeo::block_perm(&x(1, 1), map).unwrap();
        assert_eq!(h.apply(&o("0")).unwrap(), o("w+1"));
        assert_eq!(h.apply(&o("5")).unwrap(), o("w+6"));
        assert_eq!(h.apply(&o("w")).unwrap(), o("w*2"));
        assert_eq!(h.apply(&o("w+1")).unwrap(), o("0"));
        assert_eq!(h.apply(&o("w+6")).unwrap(), o("5"));
        assert_eq!(h.apply(&o("w*2")).unwrap(), o("w"));
        assert_eq!(h.apply(&o("w*2+3")).unwrap(), o("w*2+3"));
    }

    #[test]
    fn sym_section_is_homomorphic() {
        let sp = x(1, 3);
        let samples = [
            "0", "4", "w", "w+1", "w*3+5", "w*6", "w^2", "w^2+2", "w^2+w*2+1", "w^2+w*4",
            "w^2*2", "w^2*2+w+7", "w^2*2+w*5", "w^2*3",
        ];
        // sigma = (1 2 3), tau = (1 2); sigma.tau in one-line images.
        let sigma = [2u64, 3, 1];
        let tau = [2u64, 1, 3];
        let sigma_tau = [3u64, 2, 1];
        let hs = Homeo::sym_section(&sp, &sigma).unwrap();
        let ht = Homeo::sym_section(&sp, &tau).unwrap();
        let hst = Homeo::sym_section(&sp, &sigma_tau).unwrap();
        for p in samples {
            let composed = hs.apply(&ht.apply(&o(p)).unwrap()).unwrap();
            assert_eq!(composed, hst.apply(&o(p)).unwrap(), "at {p}");
        }
        // Block (1,0) is pinned; channel-1 tail block 1 goes to (2,0).
        assert_eq!(hs.apply(&o("5")).unwrap(), o("5"));
        assert_eq!(hs.apply(&o("w")).unwrap(), o("w"));
        assert_eq!(hs.apply(&o("w+1")).unwrap(), o("w^2+1"));
        assert_eq!(hs.apply(&o("w^2")).unwrap(), o("w^2*2"));
        // Round trip through the inverse symbol.
        let hs_inv = Homeo::sym_section(&sp, &[3u64, 1, 2]).unwrap();
        for p in samples {
            let q = hs.apply(&o(p)).unwrap();
            assert_eq!(hs_inv.apply(&q).unwrap(), o(p));
        }
        assert_eq!(hs.inverse().apply(&o("w^2+1")).unwrap(), o("w+1"));

        assert!(Homeo::sym_section(&sp, &[2, 2, 1]).is_err());
        assert!(Homeo::sym_section(&sp, &[1, 2]).is_err());
    }

    #[test]
    fn fiber_map_swaps_least_positions() {
        let sp = x(1, 1);
        let mut entries = BTreeMap::new();
        entries.insert((1, 0), Inner::Swap01);
        entries.insert((1, 1), Inner::Swap01);
        let h = Homeo::fiber_map(&sp, entries).unwrap();
        // Initial block: positions are raw points.
        assert_eq!(h.apply(&o("0")).unwrap(), o("1"));
        assert_eq!(h.apply(&o("1")).unwrap(), o("0"));
        assert_eq!(h.apply(&o("2")).unwrap(), o("2"));
        assert_eq!(h.apply(&o("w")).unwrap(), o("w"));
        // Tail block (1,1): positions 0,1 are the raw points w+1, w+2.
        assert_eq!(h.apply(&o("w+1")).unwrap(), o("w+2"));
        assert_eq!(h.apply(&o("w+2")).unwrap(), o("w+1"));
        assert_eq!(h.apply(&o("w+3")).unwrap(), o("w+3"));
        assert_eq!(h.apply(&o("w*2")).unwrap(), o("w*2"));
        // Blocks outside the map are fixed.
        assert_eq!(h.apply(&o("w*2+1")).unwrap(), o("w*2+1"));
        assert_eq!(h.inverse(), h);
    }

    #[test]
    fn fiber_map_runs_submaps_in_normalized_positions() {
        let sp = x(2, 1);
        let fiber_space = x(1, 1);
        let g = Homeo::finite_perm(&fiber_space, vec![(o("1"), o("2")), (o("2"), o("1"))]).unwrap();
        let mut entries = BTreeMap::new();
        entries.insert((1, 1), Inner::Sub(Box::new(g)));
        let h = Homeo::fiber_map(&sp, entries).unwrap();
        // Tail block (1,1) = (w^2, w^2*2]: raw fiber s sits at position
        // s - 1 for finite s, so the submap's 1 <-> 2 swap moves raw 2,3.
        assert_eq!(h.apply(&o("w^2+2")).unwrap(), o("w^2+3"));
        assert_eq!(h.apply(&o("w^2+3")).unwrap(), o("w^2+2"));
        assert_eq!(h.apply(&o("w^2+1")).unwrap(), o("w^2+1"));
        assert_eq!(h.apply(&o("w^2+w")).unwrap(), o("w^2+w"));
        assert_eq!(h.apply(&o("w^2*2")).unwrap(), o("w^2*2"));
        assert_eq!(h.apply(&o("5")).unwrap(), o("5"));
        let inv = h.inverse();
        assert_eq!(inv.apply(&o("w^2+3")).unwrap(), o("w^2+2"));
    }

    #[test]
    fn fiber_map_rejections() {
        assert!(matches!(
            Homeo::fiber_map(&x(0, 1), BTreeMap::from([((1, 0), Inner::Swap01)])),
            Err(EngineError::AlphaUnsupported { .. })
        ));
        // Submap over the wrong space.
        let wrong = Homeo::identity(&x(0, 1));
        assert!(matches!(
            Homeo::fiber_map(
                &x(2, 1),
                BTreeMap::from([((1, 0), Inner::Sub(Box::new(wrong.clone())))])
            ),
            Err(EngineError::SpaceMismatch { .. })
        ));
        // Limit exponent: no fiber space one exponent down.
        let limit = SpaceSpec::compact(o("w"), 1).unwrap();
        assert!(matches!(
            Homeo::fiber_map(
                &limit,
                BTreeMap::from([((1, 0), Inner::Sub(Box::new(wrong)))])
            ),
            Err(EngineError::AlphaUnsupported { .. })
        ));
        // Channel out of range.
        assert!(Homeo::fiber_map(&x(1, 1), BTreeMap::from([((2, 0), Inner::Swap01)])).is_err());
    }

    #[test]
    fn patchwork_swap_of_even_and_odd_blocks() {
        let sp = x(1, 1);
        let evens = BlockSet::residue(&sp, 1, 0, 2).unwrap();
        let odds = BlockSet::residue(&sp, 1, 1, 2).unwrap();
        let h = Homeo::swap(&evens, &odds).unwrap();
        assert_eq!(h.apply(&o("3")).unwrap(), o("w+4"));
        assert_eq!(h.apply(&o("w")).unwrap(), o("w*2"));
        assert_eq!(h.apply(&o("w+4")).unwrap(), o("3"));
        assert_eq!(h.apply(&o("w*2")).unwrap(), o("w"));
        // The channel limit is outside both sides: identity.
        assert_eq!(h.apply(&o("w^2")).unwrap(), o("w^2"));
        // Involution.
        for p in ["0", "2", "w+1", "w*2+5", "w*3", "w*7+2"] {
            let q = h.apply(&o(p)).unwrap();
            assert_eq!(h.apply(&q).unwrap(), o(p));
        }
        assert_eq!(h.inverse().apply(&o("3")).unwrap(), o("w+4"));
    }

    #[test]
    fn patchwork_rejects_bad_global_frames() {
        let sp = x(1, 1);
        let evens = BlockSet::residue(&sp, 1, 0, 2).unwrap();
        let odds = BlockSet::residue(&sp, 1, 1, 2).unwrap();
        let zeros = BlockSet::residue(&sp, 1, 0, 4).unwrap();
        // Overlapping sources.
        assert!(Homeo::patchwork(
            &sp,
            vec![(evens.clone(), odds.clone()), (zeros.clone(), evens.clone())]
        )
        .is_err());
        // Unions differ.
        assert!(Homeo::patchwork(&sp, vec![(evens.clone(), odds.clone())]).is_err());
        // Self-swap is fine (identity patch frame).
        assert!(Homeo::patchwork(&sp, vec![(evens.clone(), evens)]).is_ok());
        let _ = odds;
    }

    #[test]
    fn translation_moves_dyadic_levels() {
        let sp = SpaceSpec::omega_power(Ordinal::one());
        let t = Homeo::translation(&sp, 1, 1).unwrap();
        // Level 0 member 0 is block 2, level 1 member 0 is block 8.
        assert_eq!(t.apply(&o("w*2+1")).unwrap(), o("w*8+1"));
        assert_eq!(t.apply(&o("w*3")).unwrap(), o("w*9"));
        // Level 0 member 1 (block 6) -> level 1 member 1 (block 24).
        assert_eq!(t.apply(&o("w*6+2")).unwrap(), o("w*24+2"));
        // Unleveled blocks (odd or 0) are fixed.
        assert_eq!(t.apply(&o("w+1")).unwrap(), o("w+1"));
        assert_eq!(t.apply(&o("3")).unwrap(), o("3"));
        // Inverse round trip.
        let inv = t.inverse();
        for p in ["w*2+1", "w*4+2", "w*8+1", "w*6", "w*10+3", "5", "w+2"] {
            let q = t.apply(&o(p)).unwrap();
            assert_eq!(inv.apply(&q).unwrap(), o(p));
        }
        // Down one level from level 0: block 2 -> block 4.
        let down = Homeo::translation(&sp, 1, -1).unwrap();
        assert_eq!(down.apply(&o("w*2+1")).unwrap(), o("w*4+1"));

        assert!(Homeo::translation(&sp, 1, 65).is_err());
        assert!(Homeo::translation(&sp, 2, 1).is_err());

        // On a compactified space another channel's blocks are untouched.
        let spc = x(1, 2);
        let t2 = Homeo::translation(&spc, 2, 1).unwrap();
        assert_eq!(t2.apply(&o("w^2+w*2+1")).unwrap(), o("w^2+w*8+1"));
        assert_eq!(t2.apply(&o("w*2+1")).unwrap(), o("w*2+1"));
        assert_eq!(t2.apply(&o("w^2*2")).unwrap(), o("w^2*2"));
    }

    #[test]
    fn compose_applies_right_to_left() {
        let sp = x(1, 3);
        let s1 = Homeo::shift(&sp, 1).unwrap();
        let s2 = Homeo::shift(&sp, 2).unwrap();
        let h = Homeo::compose(vec![s1.clone(), s2.clone()]).unwrap();
        let samples = [
            "0", "3", "w", "w+5", "w*4+1", "w^2", "w^2+w+1", "w^2*2+w*3", "w^2*2", "w^2*3",
        ];
        for p in samples {
            let expect = s1.apply(&s2.apply(&o(p)).unwrap()).unwrap();
            assert_eq!(h.apply(&o(p)).unwrap(), expect, "at {p}");
        }
        let inv = h.inverse();
        for p in samples {
            let q = h.apply(&o(p)).unwrap();
            assert_eq!(inv.apply(&q).unwrap(), o(p));
            assert_eq!(h.apply_inverse(&q).unwrap(), o(p));
        }
        assert!(Homeo::compose(vec![]).is_err());
        assert!(Homeo::compose(vec![s1, Homeo::identity(&x(1, 2))]).is_err());
    }
}
