//! Classical shadows of string sets and the ratio/distance conditions.
//!
//! For a code built from string sets `A_0 .. A_{l-1}`, the deletion and
//! insertion correctability conditions are statements about intersections
//! of the sets `Delta^-_{p,b}(A_i)` (strings with symbol `b` removed at
//! position `p`) and `Delta^+_{p,b}(A_i)` (strings with `b` inserted before
//! position `p`). Everything here is exact integer and string arithmetic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::kraus::ErrorKind;

/// A classical string over `{0, .., l-1}`.
pub type Word = Vec<u8>;

pub fn parse_word(s: &str, l: usize) -> Result<Word> {
    s.chars()
        .map(|ch| match ch.to_digit(10) {
            Some(d) if (d as usize) < l => Ok(d as u8),
            _ => Err(Error::InvalidCode(format!(
                "symbol {ch:?} in {s:?} is not a digit below {l}"
            ))),
        })
        .collect()
}

pub fn format_word(w: &[u8]) -> String {
    w.iter().map(|d| char::from(b'0' + d)).collect()
}

/// `(l, n, A_0 .. A_{l-1})`. Classes keep their given order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CodeSpec {
    l: usize,
    n: usize,
    classes: Vec<Vec<Word>>,
}

impl CodeSpec {
    pub fn new(l: usize, n: usize, classes: Vec<Vec<Word>>) -> Result<Self> {
        if !(2..=10).contains(&l) {
            return Err(Error::InvalidCode(format!("l = {l} must be in 2..=10")));
        }
        if n == 0 {
            return Err(Error::InvalidCode("n must be positive".into()));
        }
        if classes.len() != l {
            return Err(Error::InvalidCode(format!(
                "{} classes for l = {l}",
                classes.len()
            )));
        }
        for (i, class) in classes.iter().enumerate() {
            if class.is_empty() {
                return Err(Error::InvalidCode(format!("class {i} is empty")));
            }
            let mut seen = BTreeSet::new();
            for w in class {
                if w.len() != n {
                    return Err(Error::InvalidCode(format!(
                        "string {} in class {i} has length {}, expected {n}",
                        format_word(w),
                        w.len()
                    )));
                }
                if let Some(&d) = w.iter().find(|&&d| d as usize >= l) {
                    return Err(Error::InvalidCode(format!(
                        "symbol {d} in class {i} exceeds l - 1"
                    )));
                }
                if !seen.insert(w) {
                    return Err(Error::InvalidCode(format!(
                        "string {} repeated in class {i}",
                        format_word(w)
                    )));
                }
            }
        }
        Ok(Self { l, n, classes })
    }

    pub fn from_strings<S: AsRef<str>>(l: usize, n: usize, classes: &[Vec<S>]) -> Result<Self> {
        let parsed = classes
            .iter()
            .map(|c| c.iter().map(|s| parse_word(s.as_ref(), l)).collect())
            .collect::<Result<_>>()?;
        Self::new(l, n, parsed)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> &[Vec<Word>] {
        &self.classes
    }

    pub fn class(&self, i: usize) -> &[Word] {
        &self.classes[i]
    }
}

impl fmt::Display for CodeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l={} n={}", self.l, self.n)?;
        for (i, c) in self.classes.iter().enumerate() {
            let words: Vec<String> = c.iter().map(|w| format_word(w)).collect();
            write!(f, " A{i}={{{}}}", words.join(","))?;
        }
        Ok(())
    }
}

/// `{ a without position p : a in A, a_p = b }`, `p` 1-based.
pub fn delta_minus(a: &[Word], p: usize, b: u8) -> BTreeSet<Word> {
    let Some(idx) = p.checked_sub(1) else {
        return BTreeSet::new();
    };
    a.iter()
        .filter(|w| w.get(idx) == Some(&b))
        .map(|w| {
            let mut out = w.clone();
            out.remove(idx);
            out
        })
        .collect()
}

/// `{ a with b inserted before position p : a in A }`, `p` in `1..=n+1`.
pub fn delta_plus(a: &[Word], p: usize, b: u8) -> BTreeSet<Word> {
    let Some(idx) = p.checked_sub(1) else {
        return BTreeSet::new();
    };
    a.iter()
        .filter(|w| idx <= w.len())
        .map(|w| {
            let mut out = w.clone();
            out.insert(idx, b);
            out
        })
        .collect()
}

/// Exact `num / den`, compared by cross-multiplication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn same_value(&self, other: &Ratio) -> bool {
        self.num as u128 * other.den as u128 == other.num as u128 * self.den as u128
    }

    pub fn reduced(&self) -> (u64, u64) {
        fn gcd(a: u64, b: u64) -> u64 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let g = gcd(self.num, self.den).max(1);
        (self.num / g, self.den / g)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.reduced() {
            (0, _) => f.write_str("0"),
            (n, 1) => write!(f, "{n}"),
            (n, d) => write!(f, "{n}/{d}"),
        }
    }
}

/// Index `(p1, b1, p2, b2)` of one shadow intersection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ShadowPair {
    pub p1: usize,
    pub b1: u8,
    pub p2: usize,
    pub b2: u8,
}

impl fmt::Display for ShadowPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(p1={},b1={},p2={},b2={})", self.p1, self.b1, self.p2, self.b2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Ratio condition: the intersection ratio differs between two classes.
    Ratio {
        pair: ShadowPair,
        class_a: usize,
        ratio_a: Ratio,
        class_b: usize,
        ratio_b: Ratio,
    },
    /// Distance condition: shadows of two classes share `witness`.
    Distance {
        pair: ShadowPair,
        class_a: usize,
        class_b: usize,
        witness: Word,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Ratio {
                pair,
                class_a,
                ratio_a,
                class_b,
                ratio_b,
            } => write!(
                f,
                "C1 {pair}: A{class_a} gives {}/{} but A{class_b} gives {}/{}",
                ratio_a.num, ratio_a.den, ratio_b.num, ratio_b.den
            ),
            Violation::Distance {
                pair,
                class_a,
                class_b,
                witness,
            } => write!(
                f,
                "C2 {pair}: A{class_a} and A{class_b} share {}",
                format_word(witness)
            ),
        }
    }
}

/// Reported violations are capped at this many; `violation_count` is exact.
pub const MAX_REPORTED_VIOLATIONS: usize = 100;

#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub kind: ErrorKind,
    pub satisfied: bool,
    /// Ratio of every shadow pair, taken from class 0.
    pub ratio_table: BTreeMap<ShadowPair, Ratio>,
    pub violations: Vec<Violation>,
    pub violation_count: usize,
    pub ratio_violation_count: usize,
    pub distance_violation_count: usize,
}

impl ConditionReport {
    /// C1 alone.
    pub fn ratio_condition_holds(&self) -> bool {
        self.ratio_violation_count == 0
    }

    /// C2 alone.
    pub fn distance_condition_holds(&self) -> bool {
        self.distance_violation_count == 0
    }

    pub fn ratio_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| matches!(v, Violation::Ratio { .. }))
    }

    pub fn distance_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| matches!(v, Violation::Distance { .. }))
    }
}

fn shadow(kind: ErrorKind, a: &[Word], p: usize, b: u8) -> BTreeSet<Word> {
    match kind {
        ErrorKind::Deletion => delta_minus(a, p, b),
        ErrorKind::Insertion => delta_plus(a, p, b),
    }
}

/// Checks the ratio (C1) and distance (C2) conditions for `kind`.
pub fn check_conditions(code: &CodeSpec, kind: ErrorKind) -> ConditionReport {
    let l = code.l();
    let positions = match kind {
        ErrorKind::Deletion => code.n(),
        ErrorKind::Insertion => code.n() + 1,
    };
    let keys: Vec<(usize, u8)> = (1..=positions)
        .flat_map(|p| (0..l as u8).map(move |b| (p, b)))
        .collect();
    // shadows[i][key index]
    let shadows: Vec<Vec<BTreeSet<Word>>> = code
        .classes()
        .iter()
        .map(|a| keys.iter().map(|&(p, b)| shadow(kind, a, p, b)).collect())
        .collect();

    let mut ratio_table = BTreeMap::new();
    let mut violations = Vec::new();
    let (mut ratio_count, mut distance_count) = (0usize, 0usize);
    let mut report = |v: Violation| {
        match v {
            Violation::Ratio { .. } => ratio_count += 1,
            Violation::Distance { .. } => distance_count += 1,
        }
        if violations.len() < MAX_REPORTED_VIOLATIONS {
            violations.push(v);
        }
    };

    for (k1, &(p1, b1)) in keys.iter().enumerate() {
        for (k2, &(p2, b2)) in keys.iter().enumerate() {
            let pair = ShadowPair { p1, b1, p2, b2 };
            let ratios: Vec<Ratio> = shadows
                .iter()
                .zip(code.classes())
                .map(|(s, a)| Ratio {
                    num: s[k1].intersection(&s[k2]).count() as u64,
                    den: a.len() as u64,
                })
                .collect();
            ratio_table.insert(pair, ratios[0]);
            for (i, r) in ratios.iter().enumerate().skip(1) {
                if !r.same_value(&ratios[0]) {
                    report(Violation::Ratio {
                        pair,
                        class_a: 0,
                        ratio_a: ratios[0],
                        class_b: i,
                        ratio_b: *r,
                    });
                }
            }
            for i in 0..l {
                for j in i + 1..l {
                    if let Some(w) = shadows[i][k1].intersection(&shadows[j][k2]).next() {
                        report(Violation::Distance {
                            pair,
                            class_a: i,
                            class_b: j,
                            witness: w.clone(),
                        });
                    }
                }
            }
        }
    }
    ConditionReport {
        kind,
        satisfied: ratio_count + distance_count == 0,
        ratio_table,
        violations,
        violation_count: ratio_count + distance_count,
        ratio_violation_count: ratio_count,
        distance_violation_count: distance_count,
    }
}

pub fn check_del_conditions(code: &CodeSpec) -> ConditionReport {
    check_conditions(code, ErrorKind::Deletion)
}

pub fn check_ins_conditions(code: &CodeSpec) -> ConditionReport {
    check_conditions(code, ErrorKind::Insertion)
}

/// Checks the counting identities behind the classical equivalence of the
/// deletion and insertion conditions for one set `a` and `p1 <= p2`:
///
/// * `|D-_{p1,b1} & D-_{p2,b2}| == |D+_{p1,b1} & D+_{p2+1,b2}|`
/// * `|D+_{p1,b1} & D+_{p1,b2}| == |A|` if `b1 == b2`, else `0`.
pub fn bijection_witness(a: &[Word], p1: usize, b1: u8, p2: usize, b2: u8) -> Result<bool> {
    if p1 > p2 {
        return Err(Error::InvalidArgument(format!("p1 = {p1} > p2 = {p2}")));
    }
    if p1 == 0 {
        return Err(Error::InvalidArgument("positions are 1-based".into()));
    }
    let del = delta_minus(a, p1, b1)
        .intersection(&delta_minus(a, p2, b2))
        .count();
    let ins = delta_plus(a, p1, b1)
        .intersection(&delta_plus(a, p2 + 1, b2))
        .count();
    let same_slot = delta_plus(a, p1, b1)
        .intersection(&delta_plus(a, p1, b2))
        .count();
    let expected_same = if b1 == b2 { a.len() } else { 0 };
    Ok(del == ins && same_slot == expected_same)
}
