//! Brute-force order-type oracle for ordinals below ω³, independent of the
//! CNF arithmetic rules.
//!
//! An ordinal `ω²·A + ω·B + C` is realized as the set of triples
//! `{t ∈ ℕ³ : t <lex (A,B,C)}` in lexicographic order. Sums are tagged
//! disjoint unions; the product `x·y` is the set `y × x` ordered
//! lexicographically (y-component major). Each construction enumerates its
//! elements inside a coordinate box and exposes two definitional predicates:
//! the true successor of an element, and the next limit element above a
//! given one. The order type is recovered by run analysis alone:
//!
//! * level 1: maximal chains of true successors; a run whose continuation
//!   leaves the box is an ω-run (fibers are unbounded exactly when the box
//!   clips them, provided operand coefficients stay ≤ BOX−2), a run that
//!   genuinely ends is finite. `C` = length of a final finite run.
//! * level 2: the starts of the ω-runs are the limit elements; the same
//!   analysis applied to them through `next_limit` yields `A` (chains that
//!   leave the box = ω² chunks) and `B` (a final finite chain of ω-runs).
//!
//! Interior finite runs merge into the following infinite run at both
//! levels, so CNF absorption is emergent, not assumed. The analysis asserts
//! that the enumeration is gap-free and panics on any inconsistency.

pub type Abc = (u64, u64, u64);

/// Coordinate box for sum operands (coefficients ≤ 8 required, see module doc).
const SUM_BOX: u64 = 12;
/// Coordinate box for product operands (pairs below ω², coefficients ≤ 8).
const PROD_BOX: u64 = 10;

pub enum Step<E> {
    /// True successor / next limit, inside the box.
    InBox(E),
    /// It exists but the box excludes it: the current chain is infinite.
    OutOfBox,
    /// No such element exists in the full infinite order.
    Ends,
}

pub trait Construction {
    type Elem: Copy + Ord + std::fmt::Debug;
    /// All members inside the box, in increasing order.
    fn elements(&self) -> Vec<Self::Elem>;
    /// The true successor of `e` in the untruncated order.
    fn true_successor(&self, e: Self::Elem) -> Step<Self::Elem>;
    /// The least limit element strictly above `e` in the untruncated order.
    fn next_limit(&self, e: Self::Elem) -> Step<Self::Elem>;
}

/// `{t : t <lex target}` — downward closed, so membership is one comparison.
#[derive(Clone, Copy)]
struct TripleSet {
    target: Abc,
}

impl TripleSet {
    fn contains(&self, t: Abc) -> bool {
        t < self.target
    }

    fn max(&self) -> Option<Abc> {
        let (a, b, c) = self.target;
        (c > 0).then(|| (a, b, c - 1))
    }

    fn is_empty(&self) -> bool {
        self.target == (0, 0, 0)
    }

    /// Least limit element: limits are the members `(a,b,0) ≠ (0,0,0)`.
    fn least_limit(&self) -> Option<Abc> {
        [(0, 1, 0), (1, 0, 0)]
            .into_iter()
            .find(|&t| self.contains(t))
    }
}

/// Tagged disjoint union realizing `x + y`.
pub struct SumSet {
    x: TripleSet,
    y: TripleSet,
}

impl SumSet {
    pub fn new(x: Abc, y: Abc) -> Self {
        for t in [x, y] {
            assert!(
                t.0 <= SUM_BOX - 4 && t.1 <= SUM_BOX - 4 && t.2 <= SUM_BOX - 4,
                "operand {t:?} too large for the box"
            );
        }
        SumSet {
            x: TripleSet { target: x },
            y: TripleSet { target: y },
        }
    }

    fn side(&self, s: u8) -> &TripleSet {
        if s == 0 {
            &self.x
        } else {
            &self.y
        }
    }
}

impl Construction for SumSet {
    type Elem = (u8, Abc);

    fn elements(&self) -> Vec<Self::Elem> {
        let mut out = Vec::new();
        for side in 0..2u8 {
            let set = self.side(side);
            for a in 0..SUM_BOX {
                for b in 0..SUM_BOX {
                    for c in 0..SUM_BOX {
                        if set.contains((a, b, c)) {
                            out.push((side, (a, b, c)));
                        }
                    }
                }
            }
        }
        out
    }

    fn true_successor(&self, (side, t): Self::Elem) -> Step<Self::Elem> {
        let set = self.side(side);
        let succ = (t.0, t.1, t.2 + 1);
        if set.contains(succ) {
            return if succ.2 < SUM_BOX {
                Step::InBox((side, succ))
            } else {
                Step::OutOfBox
            };
        }
        // A fiber of a <lex-downward-closed set can only end at the set's max.
        assert_eq!(Some(t), set.max(), "fiber ended before the set's maximum");
        if side == 0 && !self.y.is_empty() {
            // min(y) directly follows max(x) in the sum.
            Step::InBox((1, (0, 0, 0)))
        } else {
            Step::Ends
        }
    }

    fn next_limit(&self, (side, t): Self::Elem) -> Step<Self::Elem> {
        let set = self.side(side);
        let cand = (t.0, t.1 + 1, 0);
        if set.contains(cand) {
            return if cand.1 < SUM_BOX {
                Step::InBox((side, cand))
            } else {
                Step::OutOfBox
            };
        }
        if side == 1 {
            return Step::Ends;
        }
        // x is out of limits; the next limit of the sum sits in y:
        // min(y) when x has no maximum, else the least limit of y itself.
        if self.x.max().is_none() {
            if self.y.is_empty() {
                Step::Ends
            } else {
                Step::InBox((1, (0, 0, 0)))
            }
        } else {
            match self.y.least_limit() {
                Some(l) => Step::InBox((1, l)),
                None => Step::Ends,
            }
        }
    }
}

/// `{p : p <lex target}` below ω², as pairs (value ω·b + c ↔ (b,c)).
#[derive(Clone, Copy)]
struct PairSet {
    target: (u64, u64),
}

impl PairSet {
    fn contains(&self, p: (u64, u64)) -> bool {
        p < self.target
    }

    fn max(&self) -> Option<(u64, u64)> {
        let (b, c) = self.target;
        (c > 0).then(|| (b, c - 1))
    }

    fn is_empty(&self) -> bool {
        self.target == (0, 0)
    }

    /// Limits of the pair order are the members `(b,0)` with `b ≥ 1`.
    fn has_limits(&self) -> bool {
        self.contains((1, 0))
    }
}

/// `y × x` in lexicographic order (y major), realizing `x·y`.
pub struct ProdSet {
    x: PairSet,
    y: PairSet,
}

impl ProdSet {
    pub fn new(x: (u64, u64), y: (u64, u64)) -> Self {
        for p in [x, y] {
            assert!(
                p.0 <= PROD_BOX - 2 && p.1 <= PROD_BOX - 2,
                "operand {p:?} too large for the box"
            );
        }
        ProdSet {
            x: PairSet { target: x },
            y: PairSet { target: y },
        }
    }
}

impl Construction for ProdSet {
    type Elem = ((u64, u64), (u64, u64));

    fn elements(&self) -> Vec<Self::Elem> {
        let mut out = Vec::new();
        for bv in 0..PROD_BOX {
            for cv in 0..PROD_BOX {
                if !self.y.contains((bv, cv)) {
                    continue;
                }
                for bu in 0..PROD_BOX {
                    for cu in 0..PROD_BOX {
                        if self.x.contains((bu, cu)) {
                            out.push(((bv, cv), (bu, cu)));
                        }
                    }
                }
            }
        }
        out
    }

    fn true_successor(&self, (v, u): Self::Elem) -> Step<Self::Elem> {
        let succ_u = (u.0, u.1 + 1);
        if self.x.contains(succ_u) {
            return if succ_u.1 < PROD_BOX {
                Step::InBox((v, succ_u))
            } else {
                Step::OutOfBox
            };
        }
        assert_eq!(Some(u), self.x.max(), "fiber ended before x's maximum");
        // The copy after max(x) starts at (next element of y, min(x)).
        let succ_v = (v.0, v.1 + 1);
        if self.y.contains(succ_v) {
            if succ_v.1 < PROD_BOX {
                Step::InBox((succ_v, (0, 0)))
            } else {
                Step::OutOfBox
            }
        } else {
            assert_eq!(Some(v), self.y.max(), "y fiber ended before y's maximum");
            Step::Ends
        }
    }

    fn next_limit(&self, (v, u): Self::Elem) -> Step<Self::Elem> {
        // Next limit of x above u, within the same copy.
        let cand_u = (u.0 + 1, 0);
        if self.x.contains(cand_u) {
            return if cand_u.0 < PROD_BOX {
                Step::InBox((v, cand_u))
            } else {
                Step::OutOfBox
            };
        }
        if !self.x.has_limits() {
            if self.x.max().is_some() {
                // x finite: the product's limits form the grid ((b,0), min(x)).
                assert_eq!(v.1, 0, "finite-x limit off the (b,0) grid");
                let cand_v = (v.0 + 1, 0);
                if self.y.contains(cand_v) {
                    if cand_v.0 < PROD_BOX {
                        Step::InBox((cand_v, (0, 0)))
                    } else {
                        Step::OutOfBox
                    }
                } else {
                    Step::Ends
                }
            } else {
                // x is an ω-chain: every copy boundary is a limit.
                let cand_v = (v.0, v.1 + 1);
                if self.y.contains(cand_v) {
                    if cand_v.1 < PROD_BOX {
                        Step::InBox((cand_v, (0, 0)))
                    } else {
                        Step::OutOfBox
                    }
                } else {
                    Step::Ends
                }
            }
        } else {
            // Roll into the next copy: its least limit is min(x) when x has
            // no maximum (copy boundary is a limit), else x's least limit.
            let cand_v = (v.0, v.1 + 1);
            if !self.y.contains(cand_v) {
                return Step::Ends;
            }
            let u0 = if self.x.max().is_none() { (0, 0) } else { (1, 0) };
            if cand_v.1 < PROD_BOX {
                Step::InBox((cand_v, u0))
            } else {
                Step::OutOfBox
            }
        }
    }
}

/// Run analysis: recover `(A, B, C)` with order type `ω²·A + ω·B + C`.
pub fn order_type<C: Construction>(c: &C) -> Abc {
    let es = c.elements();
    if es.is_empty() {
        return (0, 0, 0);
    }

    struct Run<E> {
        start: E,
        len: u64,
        infinite: bool,
    }
    let mut runs: Vec<Run<C::Elem>> = Vec::new();
    let mut start = es[0];
    let mut len = 1u64;
    let mut i = 0usize;
    loop {
        match c.true_successor(es[i]) {
            Step::InBox(n) => {
                i += 1;
                assert!(i < es.len(), "successor {n:?} missing from enumeration");
                assert_eq!(es[i], n, "enumeration gap before {n:?}");
                len += 1;
            }
            Step::OutOfBox => {
                runs.push(Run { start, len, infinite: true });
                i += 1;
                if i == es.len() {
                    break;
                }
                start = es[i];
                len = 1;
            }
            Step::Ends => {
                runs.push(Run { start, len, infinite: false });
                assert_eq!(i + 1, es.len(), "order continues past a declared end");
                break;
            }
        }
    }

    let final_run = runs.last().unwrap();
    let c_part = if final_run.infinite { 0 } else { final_run.len };

    // Level 2: the ω-run starts are exactly the limit elements in the box.
    let starts: Vec<C::Elem> = runs
        .iter()
        .filter(|r| r.infinite)
        .map(|r| r.start)
        .collect();
    let mut a_part = 0u64;
    let mut b_part = 0u64;
    let mut chain = 0u64;
    for (j, &s) in starts.iter().enumerate() {
        chain += 1;
        match c.next_limit(s) {
            Step::InBox(n) => {
                if starts.get(j + 1) == Some(&n) {
                    continue; // adjacent ω-runs: the ω²-candidate chain grows
                }
                // The only limit that is not an ω-run start is the start of
                // a final finite run; the chain of starts must end here.
                assert_eq!(j + 1, starts.len(), "limit {n:?} interrupts the chain");
                assert!(
                    !final_run.infinite && final_run.start == n,
                    "next limit {n:?} is neither a run start nor the final run"
                );
                b_part = chain;
            }
            Step::OutOfBox => {
                a_part += 1;
                chain = 0;
            }
            Step::Ends => {
                assert_eq!(j + 1, starts.len(), "starts continue past declared end");
                b_part = chain;
            }
        }
    }
    (a_part, b_part, c_part)
}

pub fn sum_type(x: Abc, y: Abc) -> Abc {
    order_type(&SumSet::new(x, y))
}

pub fn prod_type(x: (u64, u64), y: (u64, u64)) -> Abc {
    order_type(&ProdSet::new(x, y))
}

/// Hand-verified order types, derived by direct order reasoning (not CNF
/// rules): these pin the oracle itself before it judges the arithmetic.
#[test]
fn oracle_matches_hand_computed_order_types() {
    // 1 + ω = ω: prepending one point to an ω-chain leaves an ω-chain.
    assert_eq!(sum_type((0, 0, 1), (0, 1, 0)), (0, 1, 0));
    // ω + 1: an ω-chain followed by one point.
    assert_eq!(sum_type((0, 1, 0), (0, 0, 1)), (0, 1, 1));
    // (ω·5+3) + ω²: everything below ω² is swallowed by the ω² grid.
    assert_eq!(sum_type((0, 5, 3), (1, 0, 0)), (1, 0, 0));
    // (ω²+ω·2+3) + (ω²+ω): the left tail ω·2+3 feeds into the right ω².
    assert_eq!(sum_type((1, 2, 3), (1, 1, 0)), (2, 1, 0));
    // 2·ω: pairs of points chained ω times stay a single ω-chain.
    assert_eq!(prod_type((0, 2), (1, 0)), (0, 1, 0));
    // ω·2: two copies of ω.
    assert_eq!(prod_type((1, 0), (0, 2)), (0, 2, 0));
    // (ω+1)·ω: copies of ω+1 glue end-to-start into an ω² grid.
    assert_eq!(prod_type((1, 1), (1, 0)), (1, 0, 0));
    // (ω·5+3)·(ω·2+4): ω·2 copies collapse to ω²·2; four more copies glue
    // to ω·20+3 (each 3+ω·5 chain merges into the following copy).
    assert_eq!(prod_type((5, 3), (2, 4)), (2, 20, 3));
    // Degenerate operands.
    assert_eq!(sum_type((0, 0, 0), (0, 0, 0)), (0, 0, 0));
    assert_eq!(sum_type((0, 0, 3), (0, 0, 4)), (0, 0, 7));
    assert_eq!(prod_type((0, 0), (3, 5)), (0, 0, 0));
    assert_eq!(prod_type((2, 1), (0, 1)), (0, 2, 1));
    assert_eq!(prod_type((0, 1), (2, 1)), (0, 2, 1));
}
