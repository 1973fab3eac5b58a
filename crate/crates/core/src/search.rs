//! Enumeration of deletion-correcting codes of the uniform-superposition form.
//!
//! Candidate classes come from a policy; classes are grouped by their ratio
//! profile (the intersection counts of every shadow pair), and within a
//! group we look for `l` classes whose single-deletion shadows are pairwise
//! disjoint. Every emitted code is re-checked with the full condition
//! checker and deduplicated by canonical form.

use std::collections::{BTreeMap, HashSet};

use itertools::Itertools;

use crate::conditions::{check_del_conditions, delta_minus, CodeSpec, Word};
use crate::error::{Error, Result};
use crate::linalg::QuditDims;

/// Upper bound on the number of candidate classes a policy may produce.
pub const MAX_CANDIDATE_CLASSES: u128 = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchPolicy {
    /// Every set of `class_size` strings; all feasible sizes when `None`.
    Exhaustive { class_size: Option<usize> },
    /// Unions of orbits of the global symbol shift `x -> x + 1 mod l`.
    /// `class_size` must be a multiple of `l`.
    CyclicOrbits { class_size: usize },
}

#[derive(Clone, Debug, Default)]
pub struct SearchOutcome {
    pub codes: Vec<CodeSpec>,
    /// True when `limit` stopped the enumeration early.
    pub truncated: bool,
    pub candidate_classes: usize,
}

/// Minimal representative under symbol relabeling, string reversal and
/// reordering of the classes.
pub fn canonical_form(code: &CodeSpec) -> CodeSpec {
    let l = code.l();
    let mut best: Option<Vec<Vec<Word>>> = None;
    for perm in (0..l as u8).permutations(l) {
        for reverse in [false, true] {
            let mut classes: Vec<Vec<Word>> = code
                .classes()
                .iter()
                .map(|class| {
                    let mut c: Vec<Word> = class
                        .iter()
                        .map(|w| {
                            let mut x: Word = w.iter().map(|&d| perm[d as usize]).collect();
                            if reverse {
                                x.reverse();
                            }
                            x
                        })
                        .collect();
                    c.sort();
                    c
                })
                .collect();
            classes.sort();
            if best.as_ref().is_none_or(|b| classes < *b) {
                best = Some(classes);
            }
        }
    }
    CodeSpec::new(l, code.n(), best.expect("at least one permutation"))
        .expect("relabeling preserves well-formedness")
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn all_words(dims: QuditDims) -> Vec<Word> {
    (0..dims.size()).map(|i| dims.digits_of(i)).collect()
}

fn candidate_classes(l: usize, n: usize, policy: SearchPolicy) -> Result<Vec<Vec<Word>>> {
    let dims = QuditDims::new(l, n)?;
    let words = all_words(dims);
    let total = words.len() as u128;
    match policy {
        SearchPolicy::Exhaustive { class_size } => {
            let sizes: Vec<usize> = match class_size {
                Some(0) => {
                    return Err(Error::InfeasibleSearch("class size must be positive".into()))
                }
                Some(k) => vec![k],
                None => (1..=words.len() / l).collect(),
            };
            let count: u128 = sizes.iter().map(|&k| binomial(total, k as u128)).sum();
            if count > MAX_CANDIDATE_CLASSES {
                return Err(Error::InfeasibleSearch(format!(
                    "{count} candidate classes exceed the limit of {MAX_CANDIDATE_CLASSES}"
                )));
            }
            Ok(sizes
                .into_iter()
                .flat_map(|k| words.iter().cloned().combinations(k))
                .collect())
        }
        SearchPolicy::CyclicOrbits { class_size } => {
            if class_size == 0 || class_size % l != 0 {
                return Err(Error::InfeasibleSearch(format!(
                    "class size {class_size} is not a positive multiple of l = {l}"
                )));
            }
            let mut seen = vec![false; words.len()];
            let mut orbits: Vec<Vec<Word>> = Vec::new();
            for (idx, w) in words.iter().enumerate() {
                if seen[idx] {
                    continue;
                }
                let orbit: Vec<Word> = (0..l)
                    .map(|t| w.iter().map(|&d| ((d as usize + t) % l) as u8).collect())
                    .collect();
                for o in &orbit {
                    seen[dims.index_of(o)?] = true;
                }
                orbits.push(orbit);
            }
            let per_class = class_size / l;
            let count = binomial(orbits.len() as u128, per_class as u128);
            if count > MAX_CANDIDATE_CLASSES {
                return Err(Error::InfeasibleSearch(format!(
                    "{count} candidate classes exceed the limit of {MAX_CANDIDATE_CLASSES}"
                )));
            }
            Ok(orbits
                .iter()
                .combinations(per_class)
                .map(|group| group.into_iter().flatten().cloned().collect())
                .collect())
        }
    }
}

struct Candidate {
    words: Vec<Word>,
    shadow: Vec<u64>,
}

fn profile(class: &[Word], n: usize, l: usize) -> Vec<u16> {
    let keys: Vec<(usize, u8)> = (1..=n).flat_map(|p| (0..l as u8).map(move |b| (p, b))).collect();
    let shadows: Vec<_> = keys.iter().map(|&(p, b)| delta_minus(class, p, b)).collect();
    let mut out = Vec::with_capacity(keys.len() * keys.len() + 1);
    out.push(class.len() as u16);
    for a in &shadows {
        for b in &shadows {
            out.push(a.intersection(b).count() as u16);
        }
    }
    out
}

fn shadow_bits(class: &[Word], short: QuditDims) -> Vec<u64> {
    let mut bits = vec![0u64; short.size().div_ceil(64)];
    for w in class {
        for idx in 0..w.len() {
            let mut x = w.clone();
            x.remove(idx);
            let i = short.index_of(&x).expect("shortened word is valid");
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    bits
}

fn disjoint(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & y == 0)
}

/// Streams codes satisfying the deletion conditions to `on_code`, in a
/// deterministic order, stopping after `limit` codes.
pub fn search_codes_with(
    l: usize,
    n: usize,
    policy: SearchPolicy,
    limit: usize,
    mut on_code: impl FnMut(&CodeSpec),
) -> Result<SearchOutcome> {
    if n == 0 {
        return Err(Error::InfeasibleSearch("n must be positive".into()));
    }
    let classes = candidate_classes(l, n, policy)?;
    let mut outcome = SearchOutcome {
        candidate_classes: classes.len(),
        ..Default::default()
    };
    if limit == 0 {
        outcome.truncated = !classes.is_empty();
        return Ok(outcome);
    }
    let short = QuditDims::new(l, n - 1)?;
    let mut groups: BTreeMap<Vec<u16>, Vec<Candidate>> = BTreeMap::new();
    for words in classes {
        let key = profile(&words, n, l);
        let shadow = shadow_bits(&words, short);
        groups.entry(key).or_default().push(Candidate { words, shadow });
    }

    let mut seen: HashSet<CodeSpec> = HashSet::new();
    let mut stack: Vec<usize> = Vec::with_capacity(l);
    for members in groups.values() {
        if members.len() < l {
            continue;
        }
        let done = extend(members, l, 0, &mut stack, &mut |chosen| {
            let code = CodeSpec::new(l, n, chosen.iter().map(|&i| members[i].words.clone()).collect())
                .expect("candidates are well-formed");
            if !check_del_conditions(&code).satisfied {
                return false;
            }
            let canon = canonical_form(&code);
            if seen.insert(canon.clone()) {
                on_code(&canon);
                outcome.codes.push(canon);
                if outcome.codes.len() >= limit {
                    return true;
                }
            }
            false
        });
        if done {
            outcome.truncated = true;
            break;
        }
    }
    Ok(outcome)
}

// Chooses increasing indices with pairwise disjoint shadows; returns true to stop.
fn extend(
    members: &[Candidate],
    l: usize,
    from: usize,
    stack: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]) -> bool,
) -> bool {
    if stack.len() == l {
        return visit(stack);
    }
    for i in from..members.len() {
        if stack
            .iter()
            .all(|&j| disjoint(&members[i].shadow, &members[j].shadow))
        {
            stack.push(i);
            let stop = extend(members, l, i + 1, stack, visit);
            stack.pop();
            if stop {
                return true;
            }
        }
    }
    false
}

pub fn search_codes(l: usize, n: usize, policy: SearchPolicy, limit: usize) -> Result<SearchOutcome> {
    search_codes_with(l, n, policy, limit, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::check_ins_conditions;

    fn example() -> CodeSpec {
        CodeSpec::from_strings(
            3,
            6,
            &[
                vec!["001122", "112200", "220011"],
                vec!["002211", "110022", "221100"],
                vec!["001100", "112211", "220022"],
            ],
        )
        .unwrap()
    }

    #[test]
    fn cyclic_search_finds_the_example() {
        let out = search_codes(3, 6, SearchPolicy::CyclicOrbits { class_size: 3 }, usize::MAX).unwrap();
        assert!(!out.truncated);
        assert!(out.codes.contains(&canonical_form(&example())));
        for code in &out.codes {
            assert!(check_del_conditions(code).satisfied);
            assert!(check_ins_conditions(code).satisfied);
        }
    }

    #[test]
    fn no_code_for_one_binary_qudit() {
        let out = search_codes(2, 1, SearchPolicy::Exhaustive { class_size: None }, usize::MAX).unwrap();
        assert!(out.codes.is_empty());
    }

    #[test]
    fn limit_zero_is_empty() {
        let out = search_codes(3, 6, SearchPolicy::CyclicOrbits { class_size: 3 }, 0).unwrap();
        assert!(out.codes.is_empty());
    }

    #[test]
    fn infeasible_parameters() {
        assert!(search_codes(3, 6, SearchPolicy::CyclicOrbits { class_size: 4 }, 1).is_err());
        assert!(search_codes(3, 6, SearchPolicy::Exhaustive { class_size: Some(3) }, 1).is_err());
        assert!(search_codes(2, 2, SearchPolicy::Exhaustive { class_size: Some(0) }, 1).is_err());
    }

    #[test]
    fn canonical_form_is_invariant() {
        let code = example();
        let reversed = CodeSpec::new(
            3,
            6,
            code.classes()
                .iter()
                .rev()
                .map(|c| c.iter().map(|w| w.iter().rev().copied().collect()).collect())
                .collect(),
        )
        .unwrap();
        assert_eq!(canonical_form(&reversed), canonical_form(&code));
        let swapped = CodeSpec::new(
            3,
            6,
            code.classes()
                .iter()
                .map(|c| c.iter().map(|w| w.iter().map(|&d| [1u8, 0, 2][d as usize]).collect()).collect())
                .collect(),
        )
        .unwrap();
        assert_eq!(canonical_form(&swapped), canonical_form(&code));
    }

    #[test]
    fn search_is_deterministic() {
        let a = search_codes(2, 4, SearchPolicy::Exhaustive { class_size: Some(2) }, usize::MAX).unwrap();
        let b = search_codes(2, 4, SearchPolicy::Exhaustive { class_size: Some(2) }, usize::MAX).unwrap();
        assert_eq!(a.codes, b.codes);
    }
}
