//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (visible with `--nocapture`; the test verdict itself
//! carries the same information).

mod oracle;

use ordinal_homeo::Ordinal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x0D15EA5E;

fn criterion(n: u32, desc: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    match std::panic::catch_unwind(body) {
        Ok(()) => println!("ACCEPTANCE {n}: PASS — {desc}"),
        Err(e) => {
            println!("ACCEPTANCE {n}: FAIL — {desc}");
            std::panic::resume_unwind(e);
        }
    }
}

fn ord(s: &str) -> Ordinal {
    s.parse().unwrap()
}

/// CNF below ω³ → (A, B, C).
fn to_abc(x: &Ordinal) -> (u64, u64, u64) {
    let w3 = ord("w^3");
    assert!(*x < w3, "{x} is not below w^3");
    (
        x.coefficient_of(&Ordinal::nat(2)),
        x.coefficient_of(&Ordinal::nat(1)),
        x.coefficient_of(&Ordinal::zero()),
    )
}

fn from_abc((a, b, c): (u64, u64, u64)) -> Ordinal {
    Ordinal::single(Ordinal::nat(2), a)
        .add(&Ordinal::single(Ordinal::nat(1), b))
        .add(&Ordinal::nat(c))
}

fn from_pair((b, c): (u64, u64)) -> Ordinal {
    Ordinal::single(Ordinal::nat(1), b).add(&Ordinal::nat(c))
}

#[test]
fn criterion_01_ordinal_arithmetic_oracle_equivalence() {
    criterion(1, "CNF add/mul agree with brute-force order types below w^3", || {
        // Exhaustive small corner plus seeded random samples.
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut sums: Vec<((u64, u64, u64), (u64, u64, u64))> = Vec::new();
        for xa in 0..3 {
            for xb in 0..3 {
                for xc in 0..3 {
                    for ya in 0..3 {
                        for yb in 0..3 {
                            for yc in 0..3 {
                                sums.push(((xa, xb, xc), (ya, yb, yc)));
                            }
                        }
                    }
                }
            }
        }
        for _ in 0..400 {
            let t = |r: &mut ChaCha8Rng| (r.gen_range(0..9), r.gen_range(0..9), r.gen_range(0..9));
            let x = t(&mut rng);
            let y = t(&mut rng);
            sums.push((x, y));
        }
        for (x, y) in sums {
            let via_cnf = to_abc(&from_abc(x).add(&from_abc(y)));
            let via_oracle = oracle::sum_type(x, y);
            assert_eq!(via_cnf, via_oracle, "add({x:?}, {y:?})");
        }

        let mut prods: Vec<((u64, u64), (u64, u64))> = Vec::new();
        for xb in 0..4 {
            for xc in 0..4 {
                for yb in 0..4 {
                    for yc in 0..4 {
                        prods.push(((xb, xc), (yb, yc)));
                    }
                }
            }
        }
        for _ in 0..400 {
            let p = |r: &mut ChaCha8Rng| (r.gen_range(0..9), r.gen_range(0..9));
            prods.push((p(&mut rng), p(&mut rng)));
        }
        for (x, y) in prods {
            let via_cnf = to_abc(&from_pair(x).mul(&from_pair(y)));
            let via_oracle = oracle::prod_type(x, y);
            assert_eq!(via_cnf, via_oracle, "mul({x:?}, {y:?})");
        }

        // Exact identities.
        assert_eq!(Ordinal::one().add(&Ordinal::omega()), Ordinal::omega());
        assert_eq!(Ordinal::nat(2).mul(&Ordinal::omega()), Ordinal::omega());
        for a in ["0", "1", "4", "w", "w*2 + 1", "w^2", "w^w + w"] {
            let a = ord(a);
            assert_eq!(
                Ordinal::omega().pow(&a.successor()).unwrap(),
                Ordinal::omega().pow(&a).unwrap().mul(&Ordinal::omega()),
                "w^(a+1) = w^a * w at a = {a}"
            );
        }
    });
}

#[test]
fn criterion_02_classification_matches_criterion() {
    criterion(2, "is_homeomorphic matches the limit-capacity/coefficient rule", || {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
        // Random successor ordinals below w^w: strictly decreasing finite
        // exponents ending at 0.
        let mut random_successor = |rng: &mut ChaCha8Rng| -> Ordinal {
            let mut x = Ordinal::zero();
            let mut e = rng.gen_range(1..7u64);
            loop {
                x = x.add(&Ordinal::single(Ordinal::nat(e), rng.gen_range(1..9)));
                if e == 0 {
                    break;
                }
                e = if e == 1 || rng.gen_bool(0.4) { 0 } else { rng.gen_range(1..e) };
            }
            x
        };
        for _ in 0..1000 {
            let x = random_successor(&mut rng);
            let y = random_successor(&mut rng);
            // Independent statement of the rule, straight off the term lists.
            let rule = {
                let (ex, cx) = x.terms().first().unwrap();
                let (ey, cy) = y.terms().first().unwrap();
                ex == ey && cx == cy
            };
            assert_eq!(x.is_homeomorphic(&y).unwrap(), rule, "x = {x}, y = {y}");

            // Structured witnesses: tail perturbations below the leading term
            // never change the class; leading perturbations always do.
            let (ex, _) = x.terms().first().unwrap().clone();
            if !ex.is_zero() {
                let tail_bumped = x.add(&Ordinal::one());
                assert_eq!(x.is_homeomorphic(&tail_bumped).unwrap(), true);
                let junk = Ordinal::single(ex.clone(), 3);
                let absorbed = junk.add(&x);
                // j + x with lc(j) ≤ lc(x) bumps or keeps the coefficient…
                let expect = absorbed.terms().first().unwrap().1 == x.terms().first().unwrap().1;
                assert_eq!(x.is_homeomorphic(&absorbed).unwrap(), expect);
            }
            let capacity_bumped = Ordinal::omega_pow(ex.successor()).add(&x);
            assert_eq!(x.is_homeomorphic(&capacity_bumped).unwrap(), false);
        }
    });
}
