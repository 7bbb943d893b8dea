//! Index-level machinery under the homeomorphism engine: eventually periodic
//! permutations of block indices, cross-channel block maps, and the dyadic
//! level decomposition that drives convergent translations.
//!
//! Every constructor validates a *finite window certificate*.  The window is
//! sized so that a minimal injectivity collision and a minimal coverage gap
//! are forced to appear inside it (shifts and exceptions can displace an
//! index by at most `S`, tails are periodic with period `M`, so scanning
//! `max(from, E) + 3(M+S) + 4` indices decides bijectivity exactly).

use std::collections::{BTreeMap, BTreeSet};

use super::EngineError;
use crate::space::{gcd, lcm, TopPositions};

/// Hard cap on certification windows; every construction in the library
/// stays far below it.
pub(crate) const MAX_WINDOW: u64 = 1 << 22;

fn add_signed(n: u64, s: i64) -> u64 {
    u64::try_from(n as i128 + s as i128).expect("validated shift keeps indices in range")
}

/// Smallest `n >= from` with `n % m == r`.
fn first_in_class(from: u64, r: u64, m: u64) -> u64 {
    from + (r + m - from % m) % m
}

// ---------------------------------------------------------------------------
// Eventually periodic permutations of the naturals
// ---------------------------------------------------------------------------

/// A permutation of the naturals that is eventually periodic-affine: finitely
/// many exceptional values, and past `from` each residue class mod `period`
/// is translated by a constant shift.
///
/// `apply(n)`: exceptional entry if present, else `n + shifts[n % period]`
/// when `n >= from`, else `n`.  Constructed values are certified bijections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvPerm {
    except: BTreeMap<u64, u64>,
    from: u64,
    period: u64,
    shifts: Vec<i64>,
}

impl EvPerm {
    pub fn new(
        except: BTreeMap<u64, u64>,
        from: u64,
        period: u64,
        shifts: Vec<i64>,
    ) -> Result<EvPerm, EngineError> {
        if period == 0 || shifts.len() != period as usize {
            return Err(EngineError::invalid("shift table must match the period"));
        }
        let mut p = EvPerm {
            except,
            from,
            period,
            shifts,
        };
        p.normalize();
        p.check()?;
        Ok(p)
    }

    pub fn identity() -> EvPerm {
        EvPerm {
            except: BTreeMap::new(),
            from: 0,
            period: 1,
            shifts: vec![0],
        }
    }

    pub fn apply(&self, n: u64) -> u64 {
        if let Some(&t) = self.except.get(&n) {
            t
        } else if n >= self.from {
            add_signed(n, self.shifts[(n % self.period) as usize])
        } else {
            n
        }
    }

    pub fn is_identity(&self) -> bool {
        self.except.is_empty() && self.shifts.iter().all(|&s| s == 0)
    }

    /// Whether infinitely many indices move (some tail class has a shift).
    pub fn moves_infinitely_many(&self) -> bool {
        self.shifts.iter().any(|&s| s != 0)
    }

    /// A witness tail class that moves: `(residue, period, from, shift)`.
    pub fn moved_class_witness(&self) -> Option<(u64, u64, u64, i64)> {
        self.shifts
            .iter()
            .position(|&s| s != 0)
            .map(|r| (r as u64, self.period, self.from, self.shifts[r]))
    }

    pub fn tail_from(&self) -> u64 {
        self.from
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn shifts(&self) -> &[i64] {
        &self.shifts
    }

    pub fn except(&self) -> &BTreeMap<u64, u64> {
        &self.except
    }

    fn max_shift(&self) -> u64 {
        self.shifts.iter().map(|s| s.unsigned_abs()).max().unwrap_or(0)
    }

    fn except_bound(&self) -> u64 {
        self.except
            .iter()
            .map(|(k, v)| k.max(v) + 1)
            .max()
            .unwrap_or(0)
    }

    /// Indices `< window()` decide bijectivity (see module doc).
    pub(crate) fn window(&self) -> u64 {
        self.from.max(self.except_bound()) + 3 * (self.period + self.max_shift()) + 4
    }

    /// Canonical form: minimal period, every exceptional entry strictly
    /// below `from`, and `from` minimal such that the tail rule alone is
    /// exact from there on.
    fn normalize(&mut self) {
        let len = self.shifts.len();
        let q = (1..=len)
            .find(|q| len % q == 0 && (0..len).all(|i| self.shifts[i] == self.shifts[i % q]))
            .expect("len itself always qualifies");
        self.shifts.truncate(q);
        self.period = q as u64;
        let old = self.clone();
        let mut f = self
            .from
            .max(old.except.keys().next_back().map_or(0, |k| k + 1));
        while f > 0 {
            let n = f - 1;
            let tail = n as i128 + self.shifts[(n % self.period) as usize] as i128;
            if old.apply(n) as i128 != tail {
                break;
            }
            f -= 1;
        }
        self.except = (0..f)
            .filter_map(|n| {
                let v = old.apply(n);
                (v != n).then_some((n, v))
            })
            .collect();
        self.from = f;
    }

    fn check(&self) -> Result<(), EngineError> {
        for (r, &s) in self.shifts.iter().enumerate() {
            let n_min = first_in_class(self.from, r as u64, self.period);
            if (n_min as i128) + (s as i128) < 0 {
                return Err(EngineError::invalid("tail shift drives an index negative"));
            }
        }
        let w = self.window();
        if w > MAX_WINDOW {
            return Err(EngineError::invalid("certification window too large"));
        }
        let mut seen = BTreeSet::new();
        for n in 0..w {
            if !seen.insert(self.apply(n)) {
                return Err(EngineError::invalid("index map is not injective"));
            }
        }
        for m in 0..w.saturating_sub(self.max_shift()) {
            if !seen.contains(&m) {
                return Err(EngineError::invalid("index map is not surjective"));
            }
        }
        Ok(())
    }

    /// `self . other` (apply `other` first).
    pub fn compose(&self, other: &EvPerm) -> EvPerm {
        let e = self.except_bound().max(other.except_bound());
        let s_total = self.max_shift() + other.max_shift();
        let from = self.from.max(other.from).max(e) + s_total + 2;
        let m = lcm(self.period, other.period);
        let mut shifts = Vec::with_capacity(m as usize);
        for r in 0..m {
            let n0 = first_in_class(from, r, m);
            let t0 = self.apply(other.apply(n0));
            debug_assert_eq!(self.apply(other.apply(n0 + m)), t0 + m);
            shifts.push(t0 as i64 - n0 as i64);
        }
        let except = (0..from)
            .filter_map(|n| {
                let t = self.apply(other.apply(n));
                (t != n).then_some((n, t))
            })
            .collect();
        EvPerm::new(except, from, m, shifts).expect("composite of valid permutations")
    }

    pub fn inverse(&self) -> EvPerm {
        let m = self.period;
        // Tails permute the residue classes; invert that permutation.
        let mut source = vec![None; m as usize];
        for r in 0..m {
            let t = ((r as i64 + self.shifts[r as usize]).rem_euclid(m as i64)) as usize;
            source[t] = Some(r as usize);
        }
        let shifts: Vec<i64> = source
            .iter()
            .map(|r| -self.shifts[r.expect("valid tails permute the residue classes")])
            .collect();
        let from = self.from.max(self.except_bound()) + self.max_shift() + 1;
        let mut except = BTreeMap::new();
        for n in 0..self.window() {
            let t = self.apply(n);
            let pred = if t >= from {
                add_signed(t, shifts[(t % m) as usize])
            } else {
                t
            };
            if pred != n {
                except.insert(t, n);
            }
        }
        EvPerm::new(except, from, m, shifts).expect("inverse of a valid permutation")
    }
}

// ---------------------------------------------------------------------------
// Cross-channel block maps
// ---------------------------------------------------------------------------

/// One tail clause of a [`BlockMap`]: blocks `n >= from` of channel `src`
/// with `n % period == residue` go to block `n + shift` of channel `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TailRule {
    pub src: u64,
    pub residue: u64,
    pub period: u64,
    pub from: u64,
    pub dst: u64,
    pub shift: i64,
}

impl TailRule {
    pub fn matches(&self, channel: u64, n: u64) -> bool {
        self.src == channel && n >= self.from && n % self.period == self.residue
    }

    fn is_identity(&self) -> bool {
        self.dst == self.src && self.shift == 0
    }

    fn first_match(&self) -> u64 {
        first_in_class(self.from, self.residue, self.period)
    }
}

/// An eventually periodic permutation of the block coordinates
/// `(channel, index)` of a degree-`d` space: finitely many exceptional
/// entries plus disjoint tail rules.  Uncovered coordinates are fixed.
///
/// Validation certifies, over a finite window: disjointness of the rules,
/// bijectivity, and *tail coherence* — all but finitely many blocks of one
/// source channel land in a single destination channel, so the induced map
/// extends continuously to the channel limits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMap {
    except: BTreeMap<(u64, u64), (u64, u64)>,
    rules: Vec<TailRule>,
}

impl BlockMap {
    pub fn new(
        except: BTreeMap<(u64, u64), (u64, u64)>,
        rules: Vec<TailRule>,
        degree: u64,
    ) -> Result<BlockMap, EngineError> {
        if degree == 0 {
            return Err(EngineError::invalid("degree must be positive"));
        }
        for r in &rules {
            if r.period == 0 || r.residue >= r.period {
                return Err(EngineError::invalid("rule residue must lie below its period"));
            }
            if !(1..=degree).contains(&r.src) || !(1..=degree).contains(&r.dst) {
                return Err(EngineError::invalid("rule channel out of range"));
            }
            if (r.first_match() as i128) + (r.shift as i128) < 0 {
                return Err(EngineError::invalid("rule shift drives an index negative"));
            }
        }
        for (k, v) in &except {
            if !(1..=degree).contains(&k.0) || !(1..=degree).contains(&v.0) {
                return Err(EngineError::invalid("exceptional channel out of range"));
            }
        }
        let mut rules: Vec<TailRule> = rules.into_iter().filter(|r| !r.is_identity()).collect();
        rules.sort();
        // Tail classes of a common source channel must be disjoint: two
        // classes intersect (then infinitely often) iff the residues agree
        // modulo the gcd of the periods.
        for (i, a) in rules.iter().enumerate() {
            for b in &rules[i + 1..] {
                if a.src != b.src {
                    continue;
                }
                let g = gcd(a.period, b.period);
                if a.residue % g == b.residue % g {
                    return Err(EngineError::invalid("tail rules overlap"));
                }
            }
        }
        // Coherence: per source channel, the explicit destinations plus the
        // implicit identity on uncovered classes must agree.
        for c in 1..=degree {
            let of_c: Vec<&TailRule> = rules.iter().filter(|r| r.src == c).collect();
            if of_c.is_empty() {
                continue;
            }
            let mut dsts: BTreeSet<u64> = of_c.iter().map(|r| r.dst).collect();
            let l = of_c.iter().fold(1, |acc, r| lcm(acc, r.period));
            if (0..l).any(|r| !of_c.iter().any(|rule| r % rule.period == rule.residue)) {
                dsts.insert(c);
            }
            if dsts.len() > 1 {
                return Err(EngineError::invalid(
                    "channel tail splits between destinations",
                ));
            }
        }
        let mut map = BlockMap { except, rules };
        // Drop exceptional entries that restate the default.
        let defaults = map.clone();
        map.except
            .retain(|&k, &mut v| v != defaults.default_of(k.0, k.1));
        map.check(degree)?;
        Ok(map)
    }

    pub fn identity() -> BlockMap {
        BlockMap {
            except: BTreeMap::new(),
            rules: Vec::new(),
        }
    }

    fn default_of(&self, c: u64, n: u64) -> (u64, u64) {
        match self.rules.iter().find(|r| r.matches(c, n)) {
            Some(r) => (r.dst, add_signed(n, r.shift)),
            None => (c, n),
        }
    }

    pub fn apply(&self, p: (u64, u64)) -> (u64, u64) {
        if let Some(&t) = self.except.get(&p) {
            t
        } else {
            self.default_of(p.0, p.1)
        }
    }

    pub fn is_identity(&self) -> bool {
        self.except.is_empty() && self.rules.is_empty()
    }

    /// Whether infinitely many blocks move.  Exact: every retained rule
    /// moves its full class.
    pub fn moves_infinitely_many(&self) -> bool {
        !self.rules.is_empty()
    }

    /// A tail rule witnessing infinite movement.
    pub fn infinite_witness(&self) -> Option<&TailRule> {
        self.rules.first()
    }

    pub fn rules(&self) -> &[TailRule] {
        &self.rules
    }

    pub fn except(&self) -> &BTreeMap<(u64, u64), (u64, u64)> {
        &self.except
    }

    /// Destination channel of the tail of channel `c` (where the channel
    /// limit must go for the extension to stay continuous).
    pub fn mu_destination(&self, c: u64) -> u64 {
        self.rules.iter().find(|r| r.src == c).map_or(c, |r| r.dst)
    }

    fn max_shift(&self) -> u64 {
        self.rules.iter().map(|r| r.shift.unsigned_abs()).max().unwrap_or(0)
    }

    fn except_bound(&self) -> u64 {
        self.except
            .iter()
            .map(|(k, v)| k.1.max(v.1) + 1)
            .max()
            .unwrap_or(0)
    }

    fn global_period(&self) -> u64 {
        self.rules.iter().fold(1, |acc, r| lcm(acc, r.period))
    }

    pub(crate) fn window(&self) -> u64 {
        let f = self.rules.iter().map(|r| r.from).max().unwrap_or(0);
        f.max(self.except_bound()) + 3 * (self.global_period() + self.max_shift()) + 4
    }

    fn check(&self, degree: u64) -> Result<(), EngineError> {
        let w = self.window();
        if w.saturating_mul(degree) > MAX_WINDOW {
            return Err(EngineError::invalid("certification window too large"));
        }
        let mut seen = BTreeSet::new();
        for c in 1..=degree {
            for n in 0..w {
                if !seen.insert(self.apply((c, n))) {
                    return Err(EngineError::invalid("block map is not injective"));
                }
            }
        }
        let s = self.max_shift();
        for c in 1..=degree {
            for m in 0..w.saturating_sub(s) {
                if !seen.contains(&(c, m)) {
                    return Err(EngineError::invalid("block map is not surjective"));
                }
            }
        }
        Ok(())
    }

    /// `self . other` (apply `other` first).
    pub fn compose(&self, other: &BlockMap, degree: u64) -> BlockMap {
        let e = self.except_bound().max(other.except_bound());
        let froms = self
            .rules
            .iter()
            .chain(&other.rules)
            .map(|r| r.from)
            .max()
            .unwrap_or(0);
        let s_total = self.max_shift() + other.max_shift();
        let from = froms.max(e) + s_total + 2;
        let m = lcm(self.global_period(), other.global_period());
        let mut rules = Vec::new();
        for c in 1..=degree {
            for r in 0..m {
                let n0 = first_in_class(from, r, m);
                let t0 = self.apply(other.apply((c, n0)));
                debug_assert_eq!(self.apply(other.apply((c, n0 + m))), (t0.0, t0.1 + m));
                rules.push(TailRule {
                    src: c,
                    residue: r,
                    period: m,
                    from,
                    dst: t0.0,
                    shift: t0.1 as i64 - n0 as i64,
                });
            }
        }
        let mut except = BTreeMap::new();
        for c in 1..=degree {
            for n in 0..from {
                let t = self.apply(other.apply((c, n)));
                if t != (c, n) {
                    except.insert((c, n), t);
                }
            }
        }
        BlockMap::new(except, rules, degree).expect("composite of valid block maps")
    }

    pub fn inverse(&self, degree: u64) -> BlockMap {
        // The image of a tail class is again a tail class; its rule is the
        // exact inverse clause.  Class members below `from + shift` cannot
        // occur as images, so clamping the start to zero adds no matches.
        let rules: Vec<TailRule> = self
            .rules
            .iter()
            .map(|r| TailRule {
                src: r.dst,
                residue: ((r.residue as i64 + r.shift).rem_euclid(r.period as i64)) as u64,
                period: r.period,
                from: u64::try_from(r.from as i128 + r.shift as i128).unwrap_or(0),
                dst: r.src,
                shift: -r.shift,
            })
            .collect();
        let tail_only = BlockMap {
            except: BTreeMap::new(),
            rules: rules.clone(),
        };
        let mut except = BTreeMap::new();
        for c in 1..=degree {
            for n in 0..self.window() {
                let t = self.apply((c, n));
                if tail_only.apply(t) != (c, n) {
                    except.insert(t, (c, n));
                }
            }
        }
        BlockMap::new(except, rules, degree).expect("inverse of a valid block map")
    }

    /// The restriction to channel `c` as a permutation of its block indices,
    /// when the map keeps channel `c` invariant in both directions.
    pub fn per_channel(&self, c: u64) -> Option<EvPerm> {
        for r in &self.rules {
            if (r.src == c) != (r.dst == c) {
                return None;
            }
        }
        for (k, v) in &self.except {
            if (k.0 == c) != (v.0 == c) {
                return None;
            }
        }
        let of_c: Vec<&TailRule> = self.rules.iter().filter(|r| r.src == c).collect();
        let m = of_c.iter().fold(1, |acc, r| lcm(acc, r.period));
        let e = self
            .except
            .iter()
            .filter(|(k, _)| k.0 == c)
            .map(|(k, v)| k.1.max(v.1) + 1)
            .max()
            .unwrap_or(0);
        let from = of_c.iter().map(|r| r.from).max().unwrap_or(0).max(e);
        let shifts: Vec<i64> = (0..m)
            .map(|r| {
                of_c.iter()
                    .find(|rule| r % rule.period == rule.residue)
                    .map_or(0, |rule| rule.shift)
            })
            .collect();
        let except = (0..from)
            .filter_map(|n| {
                let t = self.apply((c, n)).1;
                (t != n).then_some((n, t))
            })
            .collect();
        Some(
            EvPerm::new(except, from, m, shifts)
                .expect("restriction of a valid block map to an invariant channel"),
        )
    }
}

// ---------------------------------------------------------------------------
// Action on the maximal-rank points
// ---------------------------------------------------------------------------

/// The induced permutation of the maximal-rank point indices `(channel, i)`,
/// either exactly represented or summarized by the cardinality of its moved
/// set (`None` when even that is not certified).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopMap {
    Exact(BlockMap),
    Unknown { moves_infinitely: Option<bool> },
}

impl TopMap {
    pub fn identity() -> TopMap {
        TopMap::Exact(BlockMap::identity())
    }

    pub fn moves_infinitely(&self) -> Option<bool> {
        match self {
            TopMap::Exact(m) => Some(m.moves_infinitely_many()),
            TopMap::Unknown { moves_infinitely } => *moves_infinitely,
        }
    }

    /// `self . other` (apply `other` first).  A map moving infinitely many
    /// points composed with one moving finitely many still moves infinitely
    /// many; two infinite movers are inconclusive.
    pub fn compose(&self, other: &TopMap, degree: u64) -> TopMap {
        match (self, other) {
            (TopMap::Exact(a), TopMap::Exact(b)) => TopMap::Exact(a.compose(b, degree)),
            _ => {
                let mi = match (self.moves_infinitely(), other.moves_infinitely()) {
                    (Some(false), Some(false)) => Some(false),
                    (Some(true), Some(false)) | (Some(false), Some(true)) => Some(true),
                    _ => None,
                };
                TopMap::Unknown {
                    moves_infinitely: mi,
                }
            }
        }
    }

    pub fn inverse(&self, degree: u64) -> TopMap {
        match self {
            TopMap::Exact(m) => TopMap::Exact(m.inverse(degree)),
            TopMap::Unknown { moves_infinitely } => TopMap::Unknown {
                moves_infinitely: *moves_infinitely,
            },
        }
    }
}

/// The order transport between two top-position sets of one channel, as tail
/// rules plus exceptional pairs in *block* coordinates: the `j`-th top block
/// of `src` goes to the `j`-th top block of `dst`.
///
/// Returns `None` when the transport is not eventually periodic-affine:
/// mismatched tail densities (then it provably moves all but finitely many
/// tops), or mismatched cardinalities (rejected earlier by piece profiles).
#[allow(clippy::type_complexity)]
pub(crate) fn top_transport(
    channel: u64,
    src: &TopPositions,
    dst: &TopPositions,
) -> Option<(Vec<TailRule>, BTreeMap<(u64, u64), (u64, u64)>)> {
    match (src.is_infinite(), dst.is_infinite()) {
        (false, false) => {
            if src.total() != dst.total() {
                return None;
            }
            let except = (0..src.total().unwrap_or(0))
                .filter_map(|j| {
                    let s = src.nth(j)?;
                    let d = dst.nth(j)?;
                    (s != d).then_some(((channel, s), (channel, d)))
                })
                .collect();
            Some((Vec::new(), except))
        }
        (true, true) => {
            let (k1, p1) = (src.offsets.len() as u64, src.period);
            let (k2, p2) = (dst.offsets.len() as u64, dst.period);
            // Equal tail densities make the index correspondence affine with
            // slope one; over a span of lcm(p1, p2) blocks both sides advance
            // by exactly that span.
            if (k1 as u128) * (p2 as u128) != (k2 as u128) * (p1 as u128) {
                return None;
            }
            let l = lcm(p1, p2);
            let steps = k1 * (l / p1);
            let j0 = src.head.len().max(dst.head.len()) as u64;
            let from = src.nth(j0).expect("infinite positions");
            let mut rules = Vec::new();
            for t in 0..steps {
                let b = src.nth(j0 + t).expect("infinite positions");
                let d = dst.nth(j0 + t).expect("infinite positions");
                debug_assert_eq!(src.nth(j0 + t + steps), Some(b + l));
                debug_assert_eq!(dst.nth(j0 + t + steps), Some(d + l));
                rules.push(TailRule {
                    src: channel,
                    residue: b % l,
                    period: l,
                    from,
                    dst: channel,
                    shift: d as i64 - b as i64,
                });
            }
            let except = (0..j0)
                .filter_map(|j| {
                    let s = src.nth(j).expect("infinite positions");
                    let d = dst.nth(j).expect("infinite positions");
                    (s != d).then_some(((channel, s), (channel, d)))
                })
                .collect();
            Some((rules, except))
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Dyadic levels
// ---------------------------------------------------------------------------
//
// The even blocks >= 2 partition into *levels* indexed by the integers:
// block 2^(x+1) * (2y+1) has level zig_inv(x), member index y.  Each level is
// a full residue class (2^(x+1) mod 2^(x+2)), and the standard translation
// moves level l to level l+1, preserving member indices.

pub(crate) fn zig(level: i64) -> u32 {
    assert!(
        level.abs() <= 30,
        "translation level outside the representable dyadic range"
    );
    if level >= 0 {
        (2 * level) as u32
    } else {
        (-2 * level - 1) as u32
    }
}

pub(crate) fn zig_inv(x: u32) -> i64 {
    if x % 2 == 0 {
        (x / 2) as i64
    } else {
        -(((x + 1) / 2) as i64)
    }
}

/// Level of a block; `None` for odd blocks and block 0 (which translations
/// fix).
pub(crate) fn block_level(b: u64) -> Option<i64> {
    if b == 0 || b % 2 == 1 {
        return None;
    }
    Some(zig_inv(b.trailing_zeros() - 1))
}

/// Member index within the level: `y` for block `2^(x+1) * (2y+1)`.
pub(crate) fn block_member_index(b: u64) -> u64 {
    debug_assert!(b != 0 && b % 2 == 0);
    (b >> b.trailing_zeros()) >> 1
}

/// Block of the given level and member index, when representable.
pub(crate) fn checked_block_at_level(level: i64, y: u64) -> Option<u64> {
    if level.abs() > 30 {
        return None;
    }
    let base = 1u64.checked_shl(zig(level) + 1)?;
    base.checked_mul(y.checked_mul(2)?.checked_add(1)?)
}

/// The residue class `(residue, modulus)` occupied by one level.
#[cfg(test)]
pub(crate) fn level_class(level: i64) -> (u64, u64) {
    let x = zig(level);
    (1u64 << (x + 1), 1u64 << (x + 2))
}

/// Translation by `steps` levels; fixes odd blocks and block 0.  `None` when
/// the image leaves the representable range.
pub(crate) fn checked_translate_block(b: u64, steps: i64) -> Option<u64> {
    match block_level(b) {
        Some(l) => checked_block_at_level(l + steps, block_member_index(b)),
        None => Some(b),
    }
}
