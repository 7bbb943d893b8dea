//! Deterministic point samplers, bounded pointwise verification with
//! end-behavior comparison, and seeded generators of structured maps.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::node::{Homeo, Inner};
use super::util::{BlockMap, TailRule, TopMap};
use super::EngineError;
use crate::ordinal::Ordinal;
use crate::space::{lcm, BlockCoord, BlockSet, FiberSet, SpaceSpec};

/// Default size of the pointwise test set used by the verification oracles.
pub const DEFAULT_POINT_BUDGET: usize = 10_000;

/// Block indices probed in every sample besides a consecutive initial run:
/// boundaries of small powers of two and decimal round numbers, where
/// off-by-one errors in windows and residue rules like to hide.
const EDGE_BLOCKS: [u64; 21] = [
    23, 24, 31, 32, 47, 48, 63, 64, 65, 99, 100, 101, 127, 128, 129, 255, 256, 511, 512, 1023,
    1024,
];

/// Representative fiber positions (normalized coordinates) for blocks of
/// exponent `alpha`: the isolated bottom, a couple of successors, one or two
/// sub-limit layers when the exponent allows them, and the block top.
fn fiber_positions(alpha: &Ordinal) -> Vec<Ordinal> {
    let mut pos = vec![Ordinal::zero(), Ordinal::one(), Ordinal::nat(2)];
    if !alpha.is_zero() {
        let mut exps: Vec<Ordinal> = Vec::new();
        if let Some(beta) = alpha.pred() {
            if let Some(gamma) = beta.pred() {
                exps.push(gamma);
            } else if !beta.is_zero() {
                exps.push(Ordinal::zero());
            }
            exps.push(beta);
        } else {
            // A limit exponent: probe a couple of small layers below it.
            exps.push(Ordinal::one());
            exps.push(Ordinal::nat(2));
        }
        exps.sort();
        exps.dedup();
        for e in &exps {
            let w = Ordinal::omega_pow(e.clone());
            pos.push(w.clone());
            pos.push(w.add(&Ordinal::one()));
            pos.push(Ordinal::single(e.clone(), 2));
            pos.push(Ordinal::single(e.clone(), 2).add(&Ordinal::one()));
        }
        if exps.len() >= 2 {
            let w0 = Ordinal::omega_pow(exps[exps.len() - 1].clone());
            let w1 = Ordinal::omega_pow(exps[0].clone());
            pos.push(w0.add(&w1));
            pos.push(w0.add(&w1).add(&Ordinal::one()));
        }
    }
    pos.push(Ordinal::omega_pow(alpha.clone()));
    pos.sort();
    pos.dedup();
    pos
}

/// A deterministic test set of roughly `budget` points: every channel, the
/// representative fiber positions in a consecutive initial run of blocks
/// (sized to spend the budget) plus the boundary blocks, and the maximal
/// points when the space is compactified.
pub fn sample_points(space: &SpaceSpec, budget: usize) -> Vec<Ordinal> {
    let pos = fiber_positions(space.alpha());
    let d = space.degree();
    let per_block = (pos.len() * d as usize).max(1);
    let run = ((budget / per_block) as u64).clamp(8, 4096);
    let mut blocks: Vec<u64> = (0..run).collect();
    blocks.extend(EDGE_BLOCKS);
    blocks.sort_unstable();
    blocks.dedup();
    let mut out = std::collections::BTreeSet::new();
    for c in 1..=d {
        for &b in &blocks {
            let kind = space.block_kind(c, b);
            for p in &pos {
                let raw = space.raw_fiber(kind, p);
                if let Ok(point) = space.from_blocks(&BlockCoord::Block {
                    channel: c,
                    block: b,
                    fiber: raw,
                }) {
                    out.insert(point);
                }
            }
        }
        if space.is_compactified() {
            if let Ok(point) = space.from_blocks(&BlockCoord::MaxPoint { channel: c }) {
                out.insert(point);
            }
        }
    }
    out.into_iter().collect()
}

/// Outcome of a bounded equality check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Verified,
    Counterexample,
}

/// A point where the two sides disagree, with both values.
#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub point: Ordinal,
    pub left: Ordinal,
    pub right: Ordinal,
}

/// Result of comparing two maps on a finite test set plus, where both sides
/// expose one, their exact end behavior.
#[derive(Debug, Clone, Serialize)]
pub struct EquationReport {
    pub status: ReportStatus,
    pub points_checked: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

impl EquationReport {
    pub fn verified(&self) -> bool {
        self.status == ReportStatus::Verified
    }

    fn ok(points_checked: u64) -> Self {
        EquationReport {
            status: ReportStatus::Verified,
            points_checked,
            counterexample: None,
        }
    }

    fn refuted(points_checked: u64, point: Ordinal, left: Ordinal, right: Ordinal) -> Self {
        EquationReport {
            status: ReportStatus::Counterexample,
            points_checked,
            counterexample: Some(Counterexample { point, left, right }),
        }
    }
}

/// The point labelled by an index of the rank-`a` action (at exponent zero
/// channel 1 indexes its points directly; everywhere else index `n` is the
/// top of block `n`).
fn index_label(space: &SpaceSpec, c: u64, i: u64) -> Ordinal {
    if space.alpha().is_zero() && c == 1 {
        if i == 0 {
            Ordinal::zero()
        } else {
            space.block_top_point(1, i - 1)
        }
    } else {
        space.block_top_point(c, i)
    }
}

/// Compares two maps pointwise on the given test set, then — when both
/// expose an exact rank-`a` action — compares those actions over a window
/// long enough to pin their eventually periodic rules, and compares the
/// action on the maximal points.  A disagreement is reported through a
/// concrete counterexample; `Verified` means no disagreement was found.
pub fn verify_equal_on(
    h1: &Homeo,
    h2: &Homeo,
    points: &[Ordinal],
) -> Result<EquationReport, EngineError> {
    let space = h1.space();
    if h2.space() != space {
        return Err(EngineError::SpaceMismatch {
            expected: space.to_string(),
            found: h2.space().to_string(),
        });
    }
    let mut checked = 0u64;
    for p in points {
        let left = h1.apply(p)?;
        let right = h2.apply(p)?;
        checked += 1;
        if left != right {
            return Ok(EquationReport::refuted(checked, p.clone(), left, right));
        }
    }
    let d = space.degree();
    if space.is_compactified() {
        let m1 = h1.mu_action();
        let m2 = h2.mu_action();
        for c in 1..=d {
            let (l, r) = (m1[(c - 1) as usize], m2[(c - 1) as usize]);
            if l != r {
                return Ok(EquationReport::refuted(
                    checked,
                    space.mu(c),
                    space.mu(l),
                    space.mu(r),
                ));
            }
        }
    }
    if let (Ok(TopMap::Exact(m1)), Ok(TopMap::Exact(m2))) = (h1.top_action(), h2.top_action()) {
        let periods = m1
            .rules()
            .iter()
            .chain(m2.rules())
            .map(|r| r.period)
            .fold(1, lcm);
        let bound = m1.window().max(m2.window()).saturating_add(2 * periods);
        if bound <= 200_000 {
            for c in 1..=d {
                for n in 0..bound {
                    let l = m1.apply((c, n));
                    let r = m2.apply((c, n));
                    if l != r {
                        return Ok(EquationReport::refuted(
                            checked,
                            index_label(space, c, n),
                            index_label(space, l.0, l.1),
                            index_label(space, r.0, r.1),
                        ));
                    }
                }
            }
        }
    }
    Ok(EquationReport::ok(checked))
}

/// Checks that the parts compose (right to left) back to the target on the
/// test set.  An empty word stands for the identity.
pub fn verify_factorization(
    target: &Homeo,
    parts: &[Homeo],
    points: &[Ordinal],
) -> Result<EquationReport, EngineError> {
    let product = if parts.is_empty() {
        Homeo::identity(target.space())
    } else {
        Homeo::compose(parts.to_vec())?
    };
    verify_equal_on(&product, target, points)
}

/// A block permutation with a single two-sided infinite orbit on one
/// channel: `... 5 -> 3 -> 1 -> 2 -> 4 -> 6 -> ...`, block 0 fixed.  It
/// moves every top and is exactly representable, so it is the canonical
/// seed for non-finitary behavior.
pub fn block_z_cycle(space: &SpaceSpec, channel: u64) -> Result<Homeo, EngineError> {
    let rules = vec![
        TailRule {
            src: channel,
            residue: 0,
            period: 2,
            from: 2,
            dst: channel,
            shift: 2,
        },
        TailRule {
            src: channel,
            residue: 1,
            period: 2,
            from: 3,
            dst: channel,
            shift: -2,
        },
    ];
    let mut except = BTreeMap::new();
    except.insert((channel, 1), (channel, 2));
    Homeo::block_perm(space, BlockMap::new(except, rules, space.degree())?)
}

/// What a seeded draw must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Profile {
    Any,
    Pure,
    Finitary,
    NonFinitary,
}

fn isolated_point(space: &SpaceSpec, rng: &mut ChaCha8Rng) -> Result<Ordinal, EngineError> {
    let c = 1 + rng.gen_range(0..space.degree());
    let b = rng.gen_range(0..12u64);
    let raw = if space.alpha().is_zero() {
        // Initial block: either point; tail blocks: the single point.
        if b == 0 && c == 1 && rng.gen_bool(0.5) {
            Ordinal::zero()
        } else {
            Ordinal::one()
        }
    } else {
        Ordinal::nat(1 + rng.gen_range(0..3))
    };
    Ok(space.from_blocks(&BlockCoord::Block {
        channel: c,
        block: b,
        fiber: raw,
    })?)
}

fn comp_finite_perm(space: &SpaceSpec, rng: &mut ChaCha8Rng) -> Result<Homeo, EngineError> {
    let k = 2 + rng.gen_range(0..3);
    let mut pts: Vec<Ordinal> = Vec::new();
    let mut guard = 0;
    while pts.len() < k && guard < 64 {
        guard += 1;
        let p = isolated_point(space, rng)?;
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    let pairs = (0..pts.len())
        .map(|i| (pts[i].clone(), pts[(i + 1) % pts.len()].clone()))
        .collect();
    Homeo::finite_perm(space, pairs)
}

fn comp_block_swap(space: &SpaceSpec, rng: &mut ChaCha8Rng) -> Result<Homeo, EngineError> {
    let c = 1 + rng.gen_range(0..space.degree());
    let a = 1 + rng.gen_range(0..10u64);
    let b = {
        let mut b = 1 + rng.gen_range(0..10u64);
        if b == a {
            b = a + 1;
        }
        b
    };
    let mut except = BTreeMap::new();
    except.insert((c, a), (c, b));
    except.insert((c, b), (c, a));
    Homeo::block_perm(space, BlockMap::new(except, vec![], space.degree())?)
}

fn comp_residue_shift(space: &SpaceSpec, rng: &mut ChaCha8Rng) -> Result<Homeo, EngineError> {
    let c = 1 + rng.gen_range(0..space.degree());
    let m = [2u64, 3, 4][rng.gen_range(0..3)];
    let r1 = rng.gen_range(0..m - 1);
    let r2 = r1 + 1 + rng.gen_range(0..(m - r1 - 1));
    let delta = (r2 - r1) as i64;
    // Align the thresholds with the shift so the two rules exchange the
    // residue classes without touching the identity region.
    let base = m * (1 + rng.gen_range(0..3));
    let from1 = base + r1;
    let from2 = from1 + delta as u64;
    let rules = vec![
        TailRule {
            src: c,
            residue: r1,
            period: m,
            from: from1,
            dst: c,
            shift: delta,
        },
        TailRule {
            src: c,
            residue: r2,
            period: m,
            from: from2,
            dst: c,
            shift: -delta,
        },
    ];
    Homeo::block_perm(space, BlockMap::new(BTreeMap::new(), rules, space.degree())?)
}

fn comp_fiber(space: &SpaceSpec, rng: &mut ChaCha8Rng) -> Result<Homeo, EngineError> {
    let mut entries = BTreeMap::new();
    for _ in 0..=rng.gen_range(0..2) {
        let c = 1 + rng.gen_range(0..space.degree());
        let b = rng.gen_range(0..6u64);
        let inner = if rng.gen_bool(0.5) {
            Inner::Swap01
        } else if let Some(beta) = space.alpha().pred() {
            let sub = SpaceSpec::compact(beta, 1)?;
            let swap = Homeo::finite_perm(
                &sub,
                vec![
                    (Ordinal::one(), Ordinal::nat(2)),
                    (Ordinal::nat(2), Ordinal::one()),
                ],
            )?;
            Inner::Sub(Box::new(swap))
        } else {
            Inner::Swap01
        };
        entries.insert((c, b), inner);
    }
    Homeo::fiber_map(space, entries)
}

fn comp_patch_swap(space: &SpaceSpec, rng: &mut ChaCha8Rng) -> Result<Homeo, EngineError> {
    let c = 1 + rng.gen_range(0..space.degree());
    let m = [4u64, 6][rng.gen_range(0..2)];
    let r1 = 1 + rng.gen_range(0..m - 2);
    let r2 = r1 + 1 + rng.gen_range(0..(m - r1 - 1));
    let a = BlockSet::residue(space, c, r1, m)?;
    let b = BlockSet::residue(space, c, r2, m)?;
    Homeo::swap(&a, &b)
}

fn comp_transfer(space: &SpaceSpec, rng: &mut ChaCha8Rng) -> Result<Homeo, EngineError> {
    let d = space.degree();
    let c1 = 1 + rng.gen_range(0..d);
    let c2 = {
        let mut c = 1 + rng.gen_range(0..d);
        if c == c1 {
            c = c1 % d + 1;
        }
        c
    };
    let rules = vec![
        TailRule {
            src: c1,
            residue: 0,
            period: 1,
            from: 1,
            dst: c2,
            shift: 0,
        },
        TailRule {
            src: c2,
            residue: 0,
            period: 1,
            from: 1,
            dst: c1,
            shift: 0,
        },
    ];
    Homeo::block_perm(space, BlockMap::new(BTreeMap::new(), rules, space.degree())?)
}

fn assemble(
    space: &SpaceSpec,
    rng: &mut ChaCha8Rng,
    profile: Profile,
) -> Result<Homeo, EngineError> {
    type Comp = fn(&SpaceSpec, &mut ChaCha8Rng) -> Result<Homeo, EngineError>;
    let mut tame: Vec<Comp> = vec![comp_finite_perm, comp_block_swap];
    if !space.alpha().is_zero() {
        tame.push(comp_fiber);
    }
    let mut wild: Vec<Comp> = vec![comp_residue_shift, comp_patch_swap, |s, r| {
        block_z_cycle(s, 1 + r.gen_range(0..s.degree()))
    }];
    if space.degree() >= 2 && matches!(profile, Profile::Any) {
        wild.push(comp_transfer);
    }
    let menu: Vec<Comp> = match profile {
        Profile::Finitary => tame,
        _ => tame.into_iter().chain(wild.iter().copied()).collect(),
    };
    let n = 1 + rng.gen_range(0..3);
    let mut parts = Vec::with_capacity(n);
    for i in 0..n {
        let comp = if profile == Profile::NonFinitary && i == 0 {
            wild[rng.gen_range(0..wild.len())]
        } else {
            menu[rng.gen_range(0..menu.len())]
        };
        parts.push(comp(space, rng)?);
    }
    if parts.len() == 1 {
        Ok(parts.pop().expect("nonempty"))
    } else {
        Homeo::compose(parts)
    }
}

fn seeded_with(
    space: &SpaceSpec,
    seed: u64,
    profile: Profile,
) -> Result<Homeo, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let h = assemble(space, &mut rng, profile)?;
        let ok = match profile {
            Profile::Any => true,
            Profile::Pure => h.is_pure(),
            Profile::Finitary => h.is_finitary()?,
            Profile::NonFinitary => !h.is_finitary()?,
        };
        if ok {
            return Ok(h);
        }
    }
    Err(EngineError::invalid(
        "seeded search failed to satisfy the requested profile",
    ))
}

/// A seeded structured map: a short composition of finite permutations,
/// block swaps, residue-class shifts, fiber maps, patch swaps, and (at
/// degree >= 2) channel transfers.  Deterministic in the seed, and its
/// images of block sets stay exactly representable.
pub fn seeded_homeo(space: &SpaceSpec, seed: u64) -> Result<Homeo, EngineError> {
    seeded_with(space, seed, Profile::Any)
}

/// A seeded map fixing every maximal point.
pub fn seeded_pure_homeo(space: &SpaceSpec, seed: u64) -> Result<Homeo, EngineError> {
    seeded_with(space, seed, Profile::Pure)
}

/// A seeded map moving only finitely many rank-`a` points.
pub fn seeded_finitary(space: &SpaceSpec, seed: u64) -> Result<Homeo, EngineError> {
    seeded_with(space, seed, Profile::Finitary)
}

/// A seeded map moving infinitely many rank-`a` points.
pub fn seeded_nonfinitary(space: &SpaceSpec, seed: u64) -> Result<Homeo, EngineError> {
    seeded_with(space, seed, Profile::NonFinitary)
}

/// A seeded crisp moiety: a union of residue classes avoiding class 0, with
/// a few whole-block toggles.
pub fn seeded_moiety(space: &SpaceSpec, seed: u64) -> Result<BlockSet, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = [3u64, 4, 6][rng.gen_range(0..3)];
    let k = 1 + rng.gen_range(0..m - 2).min(2);
    let mut classes: Vec<u64> = (1..m).collect();
    for i in (1..classes.len()).rev() {
        classes.swap(i, rng.gen_range(0..i + 1));
    }
    let mut out = BlockSet::empty(space);
    for &r in classes.iter().take(k as usize) {
        out = out.union(&BlockSet::residue(space, 1, r, m)?);
    }
    let top = space.fiber_top();
    for _ in 0..rng.gen_range(0..3) {
        let b = 1 + rng.gen_range(0..12u64);
        let fs = if out.member(&space.block_top_point(1, b))? {
            FiberSet::empty()
        } else {
            FiberSet::full(&top)
        };
        out = out.with_block(1, b, fs);
    }
    debug_assert!(out.is_moiety()?);
    Ok(out)
}

/// A seeded pair of disjoint crisp moieties whose union is again a moiety.
pub fn seeded_moiety_pair(
    space: &SpaceSpec,
    seed: u64,
) -> Result<(BlockSet, BlockSet), EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 6u64;
    let mut classes: Vec<u64> = (1..m).collect();
    for i in (1..classes.len()).rev() {
        classes.swap(i, rng.gen_range(0..i + 1));
    }
    let ka = 1 + rng.gen_range(0..2usize);
    let kb = 1 + rng.gen_range(0..2usize);
    let mut a = BlockSet::empty(space);
    for &r in &classes[..ka] {
        a = a.union(&BlockSet::residue(space, 1, r, m)?);
    }
    let mut b = BlockSet::empty(space);
    for &r in &classes[ka..ka + kb] {
        b = b.union(&BlockSet::residue(space, 1, r, m)?);
    }
    Ok((a, b))
}
