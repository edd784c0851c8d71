//! Reference implementations used as test oracles. They work on tag *names*
//! and compare every gold span with every predicted span, sharing no code
//! with the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

pub const FOUR_TYPE_NAMES: [&str; 9] = [
    "O", "B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC", "I-LOC", "B-DATE", "I-DATE",
];
pub const FOUR_TYPES: [&str; 4] = ["PER", "ORG", "LOC", "DATE"];

pub type Span = (String, usize, usize);

/// Lenient BIO reading: an `I-X` continues only a span of type `X` that is
/// still open, otherwise it starts a new one.
pub fn oracle_spans(names: &[&str]) -> Vec<Span> {
    let mut spans: Vec<Span> = Vec::new();
    let mut open = false;
    for (i, name) in names.iter().enumerate() {
        if *name == "O" {
            open = false;
            continue;
        }
        let (prefix, ty) = name.split_once('-').expect("tag name has a prefix");
        let continues = prefix == "I" && open && spans.last().is_some_and(|s| s.0 == ty);
        if continues {
            spans.last_mut().unwrap().2 = i;
        } else {
            spans.push((ty.to_string(), i, i));
        }
        open = true;
    }
    spans
}

pub fn names_of(tags: &[u32]) -> Vec<&'static str> {
    tags.iter().map(|&t| FOUR_TYPE_NAMES[t as usize]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

fn prf(matched: usize, gold: usize, pred: usize) -> Prf {
    if gold == 0 && pred == 0 {
        return Prf {
            p: 1.0,
            r: 1.0,
            f: 1.0,
        };
    }
    let p = if pred == 0 {
        0.0
    } else {
        matched as f64 / pred as f64
    };
    let r = if gold == 0 {
        0.0
    } else {
        matched as f64 / gold as f64
    };
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    Prf { p, r, f }
}

/// Micro and per-type scores by exhaustive pairwise comparison.
pub fn oracle_scores(gold: &[Vec<u32>], pred: &[Vec<u32>]) -> (Prf, BTreeMap<String, Prf>) {
    let mut per: BTreeMap<String, [usize; 3]> =
        FOUR_TYPES.iter().map(|t| (t.to_string(), [0; 3])).collect();
    for (g, p) in gold.iter().zip(pred) {
        let gs = oracle_spans(&names_of(g));
        let ps = oracle_spans(&names_of(p));
        for s in &gs {
            per.get_mut(&s.0).unwrap()[1] += 1;
        }
        for s in &ps {
            per.get_mut(&s.0).unwrap()[2] += 1;
            if gs.iter().any(|x| x == s) {
                per.get_mut(&s.0).unwrap()[0] += 1;
            }
        }
    }
    let total = per.values().fold([0; 3], |acc, c| {
        [acc[0] + c[0], acc[1] + c[1], acc[2] + c[2]]
    });
    let by_type = per
        .into_iter()
        .map(|(t, c)| (t, prf(c[0], c[1], c[2])))
        .collect();
    (prf(total[0], total[1], total[2]), by_type)
}

/// Random four-type tag sequence; about a third of positions are entity
/// tags, including orphan and mismatched `I-` tags.
pub fn random_tags<R: Rng>(rng: &mut R, len: usize) -> Vec<u32> {
    (0..len)
        .map(|_| {
            if rng.random_bool(0.65) {
                0
            } else {
                rng.random_range(1..9)
            }
        })
        .collect()
}

/// A prediction that agrees with `gold` at each position with probability
/// `keep`, so scores spread across the whole range.
pub fn perturb<R: Rng>(rng: &mut R, gold: &[u32], keep: f64) -> Vec<u32> {
    gold.iter()
        .map(|&t| {
            if rng.random_bool(keep) {
                t
            } else {
                random_tags(rng, 1)[0]
            }
        })
        .collect()
}
