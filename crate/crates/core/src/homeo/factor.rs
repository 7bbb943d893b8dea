//! Factorization and generation algorithms on the non-compactified lines.
//!
//! Every operation returns witnesses (factor lists, conjugating words,
//! commutator pairs) together with a pointwise self-check against a sampled
//! test set, so a forged support certificate in the input surfaces as a
//! [`EngineError::CertificateViolation`] rather than a wrong answer.  All
//! constructions run on `SpaceSpec::omega_power` spaces (degree 1, no
//! maximal point), where block sets are clopen and moieties make sense.

use crate::ordinal::Ordinal;
use crate::space::{lcm, BlockSet, FiberSet, SpaceSpec};

use super::image::{leveled_blocks, with_point};
use super::node::{Homeo, Node};
use super::testing::{block_z_cycle, sample_points, verify_equal_on, verify_factorization};
use super::util::TopMap;
use super::EngineError;

/// Sample budget for the pointwise self-check run by every factorization.
const SELF_CHECK_POINTS: usize = 1000;
/// Leaner budget for distortion words, whose letters are costly to apply.
const DISTORTION_CHECK_POINTS: usize = 240;

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// Which alternation a fragmentation landed in: factors fixing `A, B, A`
/// pointwise, or `B, A, B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GalvinCase {
    Aba,
    Bab,
}

/// A fragmentation `h = f1 ∘ f2 ∘ f3` with supports alternating between the
/// complements of two moieties.
#[derive(Debug, Clone)]
pub struct GalvinFactors {
    pub case_of: GalvinCase,
    pub f1: Homeo,
    pub f2: Homeo,
    pub f3: Homeo,
}

impl GalvinFactors {
    /// The product `f1 ∘ f2 ∘ f3` the factors multiply back to.
    pub fn product(&self) -> Result<Homeo, EngineError> {
        Homeo::compose(vec![self.f1.clone(), self.f2.clone(), self.f3.clone()])
    }
}

/// One letter `g h^{±1} g^{-1}` of a word of conjugates of a fixed map `h`.
#[derive(Debug, Clone)]
pub struct ConjugateFactor {
    pub conjugator: Homeo,
    pub inverted: bool,
}

impl ConjugateFactor {
    /// The letter as a map: `conjugator ∘ h^{±1} ∘ conjugator^{-1}`.
    pub fn realize(&self, h: &Homeo) -> Result<Homeo, EngineError> {
        let core = if self.inverted {
            h.inverse()
        } else {
            h.clone()
        };
        Homeo::compose(vec![self.conjugator.clone(), core, self.conjugator.inverse()])
    }
}

/// A commutator `[a, b] = a ∘ b ∘ a^{-1} ∘ b^{-1}`.
#[derive(Debug, Clone)]
pub struct CommutatorPair {
    pub a: Homeo,
    pub b: Homeo,
}

impl CommutatorPair {
    pub fn realize(&self) -> Result<Homeo, EngineError> {
        Homeo::compose(vec![
            self.a.clone(),
            self.b.clone(),
            self.a.inverse(),
            self.b.inverse(),
        ])
    }
}

/// Four generators and, for each listed map, a word over them (letters are
/// `(generator index, inverted)`) of length `4n + 4` multiplying back to it.
#[derive(Debug, Clone)]
pub struct DistortionWords {
    pub generators: [Homeo; 4],
    pub words: Vec<Vec<(u8, bool)>>,
}

impl DistortionWords {
    /// The `idx`-th word as a map, letters composed left to right.
    pub fn realize_word(&self, idx: usize) -> Result<Homeo, EngineError> {
        let word = &self.words[idx];
        let parts: Vec<Homeo> = word
            .iter()
            .map(|&(g, inv)| {
                let gen = &self.generators[g as usize];
                if inv {
                    gen.inverse()
                } else {
                    gen.clone()
                }
            })
            .collect();
        Homeo::compose(parts)
    }
}

// ---------------------------------------------------------------------------
// Set-level helpers
// ---------------------------------------------------------------------------

fn engine_space(space: &SpaceSpec) -> Result<(), EngineError> {
    if space.is_compactified() {
        return Err(EngineError::invalid(
            "factorizations live on the non-compactified line, which has no maximal point",
        ));
    }
    Ok(())
}

fn check_space(expected: &SpaceSpec, found: &SpaceSpec) -> Result<(), EngineError> {
    if expected == found {
        Ok(())
    } else {
        Err(EngineError::SpaceMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }
}

/// The crisp hull: every partially filled block becomes full.  Only finitely
/// many blocks of a set are partial, so this changes a finite region.
fn blockify(s: &BlockSet) -> BlockSet {
    let space = s.space().clone();
    let top = space.fiber_top();
    let mut out = s.clone();
    for c in 1..=space.degree() {
        let partial: Vec<u64> = s
            .channel(c)
            .except()
            .iter()
            .filter(|(_, fs)| !fs.is_empty() && !fs.is_full(&top))
            .map(|(&b, _)| b)
            .collect();
        for b in partial {
            out = out.with_block(c, b, FiberSet::full(&top));
        }
    }
    out
}

fn is_crisp(s: &BlockSet) -> bool {
    blockify(s) == *s
}

/// The level-0 dyadic class, blocks `2 mod 4` of channel 1.
fn level_zero(space: &SpaceSpec) -> Result<BlockSet, EngineError> {
    Ok(BlockSet::residue(space, 1, 2, 4)?)
}

/// Blocks `≡ r (mod m)` of one channel, from block `from` on (whole blocks).
fn block_class_from(
    space: &SpaceSpec,
    channel: u64,
    r: u64,
    m: u64,
    from: u64,
) -> Result<BlockSet, EngineError> {
    let mut out = BlockSet::residue(space, channel, r % m, m)?;
    let mut b = r % m;
    while b < from {
        out = out.with_block(channel, b, FiberSet::empty());
        b += m;
    }
    Ok(out)
}

/// A crisp moiety containing the given set, when one exists: the crisp hull,
/// possibly padded with one parity class to make both sides infinite.
fn containing_moiety(cert: &BlockSet) -> Result<BlockSet, EngineError> {
    let space = cert.space().clone();
    let hull = blockify(cert);
    let evens = BlockSet::residue(&space, 1, 0, 2)?;
    let odds = BlockSet::residue(&space, 1, 1, 2)?;
    for cand in [hull.clone(), hull.union(&evens), hull.union(&odds)] {
        if cand.is_moiety()? {
            return Ok(cand);
        }
    }
    Err(EngineError::NotMoietySupported)
}

/// A point of `s` other than `avoid`.  At exponent zero every point except 0
/// is the top of its block, so the first available top (or 0 itself) works.
fn point_of(s: &BlockSet, avoid: &Ordinal) -> Result<Ordinal, EngineError> {
    let space = s.space().clone();
    let tops = s.top_positions(1);
    for k in 0..4 {
        if let Some(b) = tops.nth(k) {
            let p = space.block_top_point(1, b);
            if p != *avoid {
                return Ok(p);
            }
        }
    }
    let zero = Ordinal::zero();
    if !avoid.is_zero() && s.member(&zero)? {
        return Ok(zero);
    }
    Err(EngineError::invalid(
        "piece has no spare point for the zero-block transposition",
    ))
}

/// The first `k` top-carrying blocks of `of`, as full blocks.
fn first_top_blocks(of: &BlockSet, k: u64) -> Result<BlockSet, EngineError> {
    let space = of.space().clone();
    let top = space.fiber_top();
    let tops = of.top_positions(1);
    let mut out = BlockSet::empty(&space);
    for i in 0..k {
        let b = tops.nth(i).ok_or_else(|| {
            EngineError::invalid("designated submoiety has too few blocks")
        })?;
        out = out.with_block(1, b, FiberSet::full(&top));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Coordinate changes
// ---------------------------------------------------------------------------

/// A patchwork carrying each source onto its target.  At exponent zero, when
/// the sources and targets disagree about the point 0 (which shares a block
/// with the point 1 and so cannot be transported across pieces), the
/// mismatch is reconciled by first transposing 0 with a spare point of the
/// piece whose target holds 0.
fn fixing_coords(
    space: &SpaceSpec,
    pieces: Vec<(BlockSet, BlockSet)>,
) -> Result<Homeo, EngineError> {
    if !space.alpha().is_zero() {
        return Homeo::patchwork(space, pieces);
    }
    let zero = Ordinal::zero();
    let mut src_i = None;
    let mut dst_j = None;
    for (idx, (s, t)) in pieces.iter().enumerate() {
        if s.member(&zero)? {
            src_i = Some(idx);
        }
        if t.member(&zero)? {
            dst_j = Some(idx);
        }
    }
    match (src_i, dst_j) {
        (Some(i), Some(j)) if i != j => {
            let y = point_of(&pieces[j].0, &zero)?;
            let t = Homeo::finite_perm(space, vec![(zero.clone(), y.clone()), (y.clone(), zero.clone())])?;
            let mut adjusted = pieces;
            adjusted[i].0 = with_point(&with_point(&adjusted[i].0, &zero, false)?, &y, true)?;
            adjusted[j].0 = with_point(&with_point(&adjusted[j].0, &y, false)?, &zero, true)?;
            let p = Homeo::patchwork(space, adjusted)?;
            Homeo::compose(vec![p, t])
        }
        _ => Homeo::patchwork(space, pieces),
    }
}

/// The canonical coordinate change carrying the level-0 class onto `a`.
fn coords_to(a: &BlockSet) -> Result<Homeo, EngineError> {
    let space = a.space().clone();
    let base = level_zero(&space)?;
    if *a == base {
        return Ok(Homeo::identity(&space));
    }
    fixing_coords(
        &space,
        vec![(base.clone(), a.clone()), (base.complement(), a.complement())],
    )
}

/// The one-step dyadic translation conjugated by `c`, certified on the image
/// of the union of levels (or on the full line when that image is not
/// representable).
fn translation_via(c: &Homeo) -> Result<Homeo, EngineError> {
    let space = c.space().clone();
    let t0 = Homeo::translation(&space, 1, 1)?;
    let tau = Homeo::compose(vec![c.clone(), t0, c.inverse()])?;
    let cert = c
        .image(&leveled_blocks(&space, 1))
        .unwrap_or_else(|_| BlockSet::full(&space));
    tau.with_cert(cert)
}

// ---------------------------------------------------------------------------
// Pointwise self-checks
// ---------------------------------------------------------------------------

fn refutation(what: &str, report: &super::testing::EquationReport) -> EngineError {
    let at = report
        .counterexample
        .as_ref()
        .map(|c| c.point.to_string())
        .unwrap_or_else(|| "the end behavior".into());
    EngineError::CertificateViolation {
        reason: format!("{what} was refuted at {at}"),
    }
}

fn check_product(
    target: &Homeo,
    parts: &[Homeo],
    budget: usize,
    what: &str,
) -> Result<(), EngineError> {
    let points = sample_points(target.space(), budget);
    let report = verify_factorization(target, parts, &points)?;
    if !report.verified() {
        return Err(refutation(what, &report));
    }
    Ok(())
}

fn check_equal(lhs: &Homeo, rhs: &Homeo, budget: usize, what: &str) -> Result<(), EngineError> {
    let points = sample_points(lhs.space(), budget);
    let report = verify_equal_on(lhs, rhs, &points)?;
    if !report.verified() {
        return Err(refutation(what, &report));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Displacement
// ---------------------------------------------------------------------------

/// A moiety `A` with `h(A) ∩ A = ∅` and `A ∪ h(A)` a moiety, certified by
/// exact images.  The candidate is a residue class of block indices read off
/// an infinite tail rule of the action on maximal-rank points; translations
/// displace their own level-0 class.
pub fn displacement_moiety(h: &Homeo) -> Result<BlockSet, EngineError> {
    let space = h.space().clone();
    engine_space(&space)?;
    if h.is_finitary()? {
        return Err(EngineError::FinitaryInput);
    }
    if let Node::Translation { channel, steps } = h.node() {
        if *steps != 0 {
            let a = BlockSet::residue(&space, *channel, 2, 4)?;
            return certify_displacement(h, a);
        }
    }
    let map = match h.top_action()? {
        TopMap::Exact(m) => m,
        TopMap::Unknown { .. } => {
            return Err(EngineError::DisplacementFailed {
                reason: "no exact action on the maximal-rank points is available".into(),
            })
        }
    };
    let rule = *map.infinite_witness().ok_or_else(|| EngineError::DisplacementFailed {
        reason: "the action certifies no infinite tail rule".into(),
    })?;
    if rule.src != rule.dst {
        return Err(EngineError::DisplacementFailed {
            reason: "cross-channel witness on a one-channel line".into(),
        });
    }
    let shift = rule.shift.unsigned_abs().max(1);
    let m_mod = lcm(lcm(rule.period, 2 * shift), 4);
    if m_mod > 1 << 16 {
        return Err(EngineError::DisplacementFailed {
            reason: "witness period is beyond the certified window".into(),
        });
    }
    let base = map.window().max(rule.from) + m_mod;
    for round in 1..=3u64 {
        let lo = base * round;
        for lift in 0..(m_mod / rule.period) {
            let r = (rule.residue + lift * rule.period) % m_mod;
            let from_idx = lo + ((r + m_mod - lo % m_mod) % m_mod);
            let a = idx_class_to_blocks(&space, rule.src, r, m_mod, from_idx)?;
            if let Ok(out) = certify_displacement(h, a) {
                return Ok(out);
            }
        }
    }
    Err(EngineError::DisplacementFailed {
        reason: "no residue class of blocks is certified displaced".into(),
    })
}

/// Blocks whose maximal-rank index is `≡ r (mod m)` and `≥ from_idx`.  At
/// exponent zero on channel 1 the index of block `b ≥ 1` is `b + 1`.
fn idx_class_to_blocks(
    space: &SpaceSpec,
    channel: u64,
    r: u64,
    m: u64,
    from_idx: u64,
) -> Result<BlockSet, EngineError> {
    if space.alpha().is_zero() && channel == 1 {
        debug_assert!(from_idx >= 1);
        block_class_from(space, channel, (r + m - 1) % m, m, from_idx - 1)
    } else {
        block_class_from(space, channel, r % m, m, from_idx)
    }
}

fn certify_displacement(h: &Homeo, a: BlockSet) -> Result<BlockSet, EngineError> {
    let space = h.space().clone();
    let ha = h.image(&a)?;
    // At exponent zero keep 0 out of h(A): the gluings built on A later
    // match pieces pointwise and the 0-block cannot straddle them.
    if space.alpha().is_zero() && ha.member(&Ordinal::zero())? {
        return Err(EngineError::DisplacementFailed {
            reason: "image of the candidate touches the zero block".into(),
        });
    }
    if ha.intersect(&a).is_empty() && a.is_moiety()? && a.union(&ha).is_moiety()? {
        Ok(a)
    } else {
        Err(EngineError::DisplacementFailed {
            reason: "candidate class is not displaced onto a disjoint moiety".into(),
        })
    }
}

// ---------------------------------------------------------------------------
// Translations and coordinate changes for moieties
// ---------------------------------------------------------------------------

/// A map translating `a` disjointly along the dyadic levels: the conjugate
/// of the one-step translation under the coordinate change sending the
/// level-0 class to `a`.  Iterates `τ^n(a)` for `|n| ≤ 20` are certified
/// pairwise disjoint, by exact images when representable and pointwise on
/// samples of `a` otherwise.
pub fn translation_for(a: &BlockSet) -> Result<Homeo, EngineError> {
    let space = a.space().clone();
    engine_space(&space)?;
    if !a.is_moiety()? {
        return Err(EngineError::NotMoietySupported);
    }
    let tau = translation_via(&coords_to(a)?)?;
    match iterate_images(&tau, a, 20) {
        Ok(sets) => {
            for i in 0..sets.len() {
                for j in i + 1..sets.len() {
                    if !sets[i].intersect(&sets[j]).is_empty() {
                        return Err(EngineError::CertificateViolation {
                            reason: "translation iterates of the moiety collide".into(),
                        });
                    }
                }
            }
        }
        Err(_) => pointwise_disjointness(&tau, a, 20)?,
    }
    Ok(tau)
}

fn iterate_images(tau: &Homeo, a: &BlockSet, n: usize) -> Result<Vec<BlockSet>, EngineError> {
    let inv = tau.inverse();
    let mut sets = vec![a.clone()];
    let mut fwd = a.clone();
    let mut bwd = a.clone();
    for _ in 0..n {
        fwd = tau.image(&fwd)?;
        bwd = inv.image(&bwd)?;
        sets.push(fwd.clone());
        sets.push(bwd.clone());
    }
    Ok(sets)
}

fn pointwise_disjointness(tau: &Homeo, a: &BlockSet, n: usize) -> Result<(), EngineError> {
    let points = sample_points(a.space(), 600);
    for p in points {
        if !a.member(&p)? {
            continue;
        }
        for dir in [false, true] {
            let mut q = p.clone();
            for _ in 0..n {
                q = if dir { tau.apply_inverse(&q)? } else { tau.apply(&q)? };
                if a.member(&q)? {
                    return Err(EngineError::CertificateViolation {
                        reason: "translation iterate re-enters the moiety".into(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// A coordinate change `σ` with `σ(a) = b`, certified by an exact image.
/// Disjoint moieties are swapped by an involution; overlapping ones go
/// through the two-piece patchwork `(a → b, ∁a → ∁b)`.
pub fn change_of_coords(a: &BlockSet, b: &BlockSet) -> Result<Homeo, EngineError> {
    let space = a.space().clone();
    engine_space(&space)?;
    check_space(&space, b.space())?;
    if !a.is_moiety()? || !b.is_moiety()? {
        return Err(EngineError::NotMoietySupported);
    }
    if a == b {
        return Ok(Homeo::identity(&space));
    }
    let sigma = if a.intersect(b).is_empty() {
        disjoint_involution(&space, a, b)?
    } else {
        fixing_coords(
            &space,
            vec![(a.clone(), b.clone()), (a.complement(), b.complement())],
        )?
    };
    if sigma.image(a)? != *b {
        return Err(EngineError::CertificateViolation {
            reason: "coordinate change failed its image certificate".into(),
        });
    }
    Ok(sigma)
}

fn disjoint_involution(
    space: &SpaceSpec,
    a: &BlockSet,
    b: &BlockSet,
) -> Result<Homeo, EngineError> {
    let zero = Ordinal::zero();
    if space.alpha().is_zero() && a.member(&zero)? != b.member(&zero)? {
        // The 0-block straddles the swap: peel 0 and a partner point off,
        // swap the remainders, and transpose the pair.  Both composition
        // orders agree, so the result is still an involution.
        let (carrier, other) = if a.member(&zero)? { (a, b) } else { (b, a) };
        let y = point_of(other, &zero)?;
        let c1 = with_point(carrier, &zero, false)?;
        let o1 = with_point(other, &y, false)?;
        let t = Homeo::finite_perm(space, vec![(zero.clone(), y.clone()), (y, zero)])?;
        let j = Homeo::patchwork(space, vec![(c1.clone(), o1.clone()), (o1, c1)])?;
        Homeo::compose(vec![j, t])
    } else {
        Homeo::swap(a, b)
    }
}

// ---------------------------------------------------------------------------
// Commutator trick
// ---------------------------------------------------------------------------

/// Writes a map certified inside a moiety as a single commutator
/// `h = [σ, τ]`: `τ` translates the moiety disjointly along the levels and
/// `σ` is the infinite product of the translates of `h`, so the telescope
/// cancels everywhere but on the original copy.
pub fn commutator_factor(h: &Homeo) -> Result<CommutatorPair, EngineError> {
    let space = h.space().clone();
    engine_space(&space)?;
    let a = containing_moiety(&h.support_cert())?;
    let c = coords_to(&a)?;
    let tau = translation_via(&c)?;
    let inner = Homeo::compose(vec![c.inverse(), h.clone(), c.clone()])?
        .with_cert(level_zero(&space)?)?;
    let sigma = Homeo::inf_prod(c, inner, 1)?;
    let pair = CommutatorPair { a: sigma, b: tau };
    check_equal(&pair.realize()?, h, SELF_CHECK_POINTS, "commutator")?;
    Ok(pair)
}

// ---------------------------------------------------------------------------
// Fragmentation
// ---------------------------------------------------------------------------

/// Fragments `h = f1 ∘ f2 ∘ f3` with `f1, f3` fixing one of the moieties
/// pointwise and `f2` the other, given disjoint crisp moieties whose union
/// is again a moiety.  The returned case records which alternation worked;
/// one of the two always does.
pub fn galvin_factor(
    h: &Homeo,
    a: &BlockSet,
    b: &BlockSet,
) -> Result<GalvinFactors, EngineError> {
    let space = h.space().clone();
    engine_space(&space)?;
    check_space(&space, a.space())?;
    check_space(&space, b.space())?;
    if !a.is_moiety()? || !b.is_moiety()? {
        return Err(EngineError::invalid("fragmentation needs two moieties"));
    }
    if !a.intersect(b).is_empty() {
        return Err(EngineError::invalid("fragmentation needs disjoint moieties"));
    }
    if !a.union(b).is_moiety()? {
        return Err(EngineError::invalid(
            "fragmentation needs the union of the moieties to be a moiety",
        ));
    }
    if !is_crisp(a) || !is_crisp(b) {
        return Err(EngineError::invalid(
            "fragmentation needs moieties made of whole blocks",
        ));
    }
    if matches!(h.node(), Node::Identity) {
        let id = Homeo::identity(&space);
        return Ok(GalvinFactors {
            case_of: GalvinCase::Aba,
            f1: id.clone(),
            f2: id.clone(),
            f3: id,
        });
    }
    let c_set = a.union(b).complement();
    let ha = h.image(a)?;
    let da = blockify(&ha.intersect(&c_set));
    if c_set.minus(&da).is_moiety()? {
        let (f1, f2, f3) = galvin_core(h, a, b, &c_set, &ha, &da)?;
        let out = GalvinFactors {
            case_of: GalvinCase::Aba,
            f1,
            f2,
            f3,
        };
        check_product(
            h,
            &[out.f1.clone(), out.f2.clone(), out.f3.clone()],
            SELF_CHECK_POINTS,
            "fragmentation",
        )?;
        return Ok(out);
    }
    let hb = h.image(b)?;
    let db = blockify(&hb.intersect(&c_set));
    if c_set.minus(&db).is_moiety()? {
        let (f1, f2, f3) = galvin_core(h, b, a, &c_set, &hb, &db)?;
        let out = GalvinFactors {
            case_of: GalvinCase::Bab,
            f1,
            f2,
            f3,
        };
        check_product(
            h,
            &[out.f1.clone(), out.f2.clone(), out.f3.clone()],
            SELF_CHECK_POINTS,
            "fragmentation",
        )?;
        return Ok(out);
    }
    Err(EngineError::invalid(
        "no moiety remains beside the image of either set",
    ))
}

/// The working half of the fragmentation.  `fix` is the moiety the outer
/// factors fix pointwise, `other` the one the middle factor fixes; `c_set`
/// is the complement of their union, `h_fix = h(fix)` and `d_hull` the
/// crisp hull of `h_fix ∩ c_set`, with `c_set ∖ d_hull` a moiety.
fn galvin_core(
    h: &Homeo,
    fix: &BlockSet,
    other: &BlockSet,
    c_set: &BlockSet,
    h_fix: &BlockSet,
    d_hull: &BlockSet,
) -> Result<(Homeo, Homeo, Homeo), EngineError> {
    let space = h.space().clone();
    let rest = c_set.minus(d_hull);
    // Odd-indexed top pieces of the leftover: disjoint from h(fix), so f1
    // can park `other` there while pushing everything else into c_set.
    let (_, m2) = rest.moiety_pair_split()?;
    let m1 = c_set.minus(&m2);
    let f1 = fixing_coords(
        &space,
        vec![
            (other.union(&m1), c_set.clone()),
            (m2.clone(), other.clone()),
        ],
    )?;
    let f1h = f1.image(h_fix)?;
    let rest2 = fix.union(c_set).minus(&f1h);
    let f2 = fixing_coords(
        &space,
        vec![(f1h.clone(), fix.clone()), (rest2, c_set.clone())],
    )?;
    let g = Homeo::compose(vec![f2.clone(), f1.clone(), h.clone()])?;
    // g maps fix onto itself, so it splits into its restriction to fix and
    // to the complement; h = f1^{-1} ∘ f2^{-1} ∘ (g on fix) ∘ (g off fix).
    let on_fix = Homeo::piecewise(&space, vec![(fix.clone(), g.clone())])?;
    let off_fix = Homeo::piecewise(&space, vec![(fix.complement(), g)])?;
    let r1 = f1.inverse().with_cert(fix.complement())?;
    let r2 = Homeo::compose(vec![f2.inverse(), on_fix])?.with_cert(other.complement())?;
    let r3 = off_fix.with_cert(fix.complement())?;
    Ok((r1, r2, r3))
}

// ---------------------------------------------------------------------------
// Conjugate words
// ---------------------------------------------------------------------------

/// Writes a moiety-supported `f` as exactly four conjugates of `h` and
/// `h^{-1}`, given any `h` displacing a moiety: conjugate `f` into the
/// even half `B` of the displaced moiety, build the infinite product `σ` of
/// its translates inside the moiety, and let `ψ` interleave `h` with the
/// translation; then `f = (σhσ^{-1}) h^{-1} (ψσhσ^{-1}ψ^{-1}) (ψh^{-1}ψ^{-1})`
/// up to the outer conjugation.
pub fn anderson_factor(f: &Homeo, h: &Homeo) -> Result<Vec<ConjugateFactor>, EngineError> {
    let space = h.space().clone();
    engine_space(&space)?;
    check_space(&space, f.space())?;
    let a_h = displacement_moiety(h)?;
    let ha = h.image(&a_h)?;
    let (b_even, _) = a_h.moiety_pair_split()?;
    let cert = f.support_cert();
    containing_moiety(&cert)?;
    let bc = blockify(&cert);
    let zero = Ordinal::zero();
    let (delta, bt) = if bc.is_empty() {
        (Homeo::identity(&space), BlockSet::empty(&space))
    } else {
        let tops = bc.top_positions(1);
        let bt = if tops.is_infinite() {
            b_even.moiety_pair_split()?.0
        } else {
            // At exponent zero the point 0 is extra material of its block;
            // cardinality, not top count, is the transport invariant.
            let mut k = tops.total().unwrap_or(0);
            if space.alpha().is_zero() && bc.member(&zero)? {
                k += 1;
            }
            first_top_blocks(&b_even, k)?
        };
        let delta = fixing_coords(
            &space,
            vec![(bc.clone(), bt.clone()), (bc.complement(), bt.complement())],
        )?;
        (delta, bt)
    };
    let f_in = Homeo::compose(vec![delta.clone(), f.clone(), delta.inverse()])?
        .with_cert(bt.clone())?;
    // Translation machine inside a_h: levels map onto copies of b_hat.
    let b_hat = bt.union(&b_even.moiety_pair_split()?.0);
    let a0 = level_zero(&space)?;
    let leveled = leveled_blocks(&space, 1);
    let (d1, d2) = a_h.minus(&b_hat).moiety_pair_split()?;
    let c_and = fixing_coords(
        &space,
        vec![
            (a0.clone(), b_hat),
            (leveled.minus(&a0), d1),
            (leveled.complement(), d2.union(&a_h.complement())),
        ],
    )?;
    let tau = translation_via(&c_and)?;
    let inner = Homeo::compose(vec![c_and.inverse(), f_in, c_and.clone()])?.with_cert(a0)?;
    let sigma = Homeo::inf_prod(c_and, inner, 1)?;
    let psi = Homeo::piecewise(
        &space,
        vec![
            (a_h.clone(), h.clone()),
            (ha, Homeo::compose(vec![tau, h.inverse()])?),
        ],
    )?;
    let di = delta.inverse();
    let word = vec![
        ConjugateFactor {
            conjugator: Homeo::compose(vec![di.clone(), sigma.clone()])?,
            inverted: false,
        },
        ConjugateFactor {
            conjugator: di.clone(),
            inverted: true,
        },
        ConjugateFactor {
            conjugator: Homeo::compose(vec![di.clone(), psi.clone(), sigma])?,
            inverted: false,
        },
        ConjugateFactor {
            conjugator: Homeo::compose(vec![di, psi])?,
            inverted: true,
        },
    ];
    let realized: Vec<Homeo> = word
        .iter()
        .map(|c| c.realize(h))
        .collect::<Result<_, _>>()?;
    check_product(f, &realized, SELF_CHECK_POINTS, "conjugate word")?;
    Ok(word)
}

/// Writes any `f` as at most twelve conjugates of a non-finitary `h`:
/// fragment `f` along the canonical mod-3 moieties, then expand each of the
/// three moiety-supported factors into four conjugates.
pub fn normal_word_12(f: &Homeo, h: &Homeo) -> Result<Vec<ConjugateFactor>, EngineError> {
    let space = h.space().clone();
    engine_space(&space)?;
    check_space(&space, f.space())?;
    if h.is_finitary()? {
        return Err(EngineError::FinitaryInput);
    }
    if matches!(f.node(), Node::Identity) {
        return Ok(Vec::new());
    }
    let a = BlockSet::residue(&space, 1, 1, 3)?;
    let b = BlockSet::residue(&space, 1, 2, 3)?;
    let parts = galvin_factor(f, &a, &b)?;
    let mut word = Vec::with_capacity(12);
    for piece in [parts.f1, parts.f2, parts.f3] {
        word.extend(anderson_factor(&piece, h)?);
    }
    let realized: Vec<Homeo> = word
        .iter()
        .map(|c| c.realize(h))
        .collect::<Result<_, _>>()?;
    check_product(f, &realized, SELF_CHECK_POINTS, "normal generation word")?;
    Ok(word)
}

// ---------------------------------------------------------------------------
// Perfectness
// ---------------------------------------------------------------------------

/// Writes any `f` as a product of exactly three commutators: fragment along
/// the canonical mod-3 moieties, then write each moiety-supported factor as
/// a single commutator.
pub fn perfect_3(f: &Homeo) -> Result<Vec<CommutatorPair>, EngineError> {
    let space = f.space().clone();
    engine_space(&space)?;
    let a = BlockSet::residue(&space, 1, 1, 3)?;
    let b = BlockSet::residue(&space, 1, 2, 3)?;
    let parts = galvin_factor(f, &a, &b)?;
    let mut pairs = Vec::with_capacity(3);
    for piece in [parts.f1, parts.f2, parts.f3] {
        pairs.push(commutator_factor(&piece)?);
    }
    let realized: Vec<Homeo> = pairs
        .iter()
        .map(|p| p.realize())
        .collect::<Result<_, _>>()?;
    check_product(f, &realized, SELF_CHECK_POINTS, "commutator product")?;
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Strong distortion
// ---------------------------------------------------------------------------

/// Encodes a listed prefix `h_1, ..., h_K` of maps certified inside a common
/// moiety as words over four fixed generators: `σ` translates the moiety's
/// levels, `τ` translates disjoint copies of their union `B`, and
/// `φ = ∏_{n,m} h_n^{τ^n σ^m}` interleaves every listed map, so that
/// `h_n = [φ^{τ^{-n}}, σ]` — a word of length `4n + 4` over `{σ, τ, φ, θ}`.
pub fn distortion_words(h_seq: &[Homeo]) -> Result<DistortionWords, EngineError> {
    let first = h_seq
        .first()
        .ok_or_else(|| EngineError::invalid("distortion needs a nonempty prefix"))?;
    let space = first.space().clone();
    engine_space(&space)?;
    if h_seq.len() > 64 {
        return Err(EngineError::invalid(
            "prefix is longer than the certified level range",
        ));
    }
    let mut cert = BlockSet::empty(&space);
    for h in h_seq {
        check_space(&space, h.space())?;
        cert = cert.union(&h.support_cert());
    }
    let a = containing_moiety(&cert)?;
    let c_a = coords_to(&a)?;
    let sigma = translation_via(&c_a)?;
    let leveled = leveled_blocks(&space, 1);
    let b_set = c_a.image(&leveled)?;
    if !b_set.is_moiety()? {
        return Err(EngineError::invalid("union of levels is not carried to a moiety"));
    }
    let c_b = coords_to(&b_set)?;
    let tau = translation_via(&c_b)?;
    let a0 = level_zero(&space)?;
    let mut parts = Vec::with_capacity(h_seq.len());
    for (i, h) in h_seq.iter().enumerate() {
        let inner = Homeo::compose(vec![c_a.inverse(), h.clone(), c_a.clone()])?
            .with_cert(a0.clone())?;
        let tau_n = Homeo::compose(vec![
            c_b.clone(),
            Homeo::translation(&space, 1, (i + 1) as i64)?,
            c_b.inverse(),
        ])?;
        let conj = Homeo::compose(vec![tau_n, c_a.clone()])?;
        parts.push(Homeo::inf_prod(conj, inner, 1)?);
    }
    let phi = if parts.len() == 1 {
        parts.pop().expect("nonempty")
    } else {
        Homeo::compose(parts)?
    };
    let theta = block_z_cycle(&space, 1)?;
    let mut words = Vec::with_capacity(h_seq.len());
    for i in 0..h_seq.len() {
        let n = i + 1;
        let mut w: Vec<(u8, bool)> = Vec::with_capacity(4 * n + 4);
        w.extend(std::iter::repeat((1u8, true)).take(n));
        w.push((2, false));
        w.extend(std::iter::repeat((1u8, false)).take(n));
        w.push((0, false));
        w.extend(std::iter::repeat((1u8, true)).take(n));
        w.push((2, true));
        w.extend(std::iter::repeat((1u8, false)).take(n));
        w.push((0, true));
        words.push(w);
    }
    let out = DistortionWords {
        generators: [sigma, tau, phi, theta],
        words,
    };
    for (i, h) in h_seq.iter().enumerate() {
        check_equal(
            &out.realize_word(i)?,
            h,
            DISTORTION_CHECK_POINTS,
            "distortion word",
        )?;
    }
    Ok(out)
}
