//! Brute-force reference implementations used as test oracles. Nothing here
//! goes through `BlockingIndex`: agreement is computed straight from the
//! record values with `BlockingPredicate::agrees`.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use skyblock::blocking::BlockingPredicate;
use skyblock::datamodel::{Dataset, GroundTruth, PairKey};
use skyblock::scheme::Scheme;

/// Every dedup pair with its per-predicate agreement bits and truth.
pub struct PairTable {
    pub width: u32,
    pub rows: Vec<(PairKey, u64, bool)>,
}

impl PairTable {
    pub fn new(dataset: &Dataset, preds: &[BlockingPredicate], truth: &GroundTruth) -> Self {
        let n = dataset.len() as u32;
        let schema = dataset.schema();
        let recs = dataset.source(0);
        let mut rows = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let mut bits = 0u64;
                for (p, pred) in preds.iter().enumerate() {
                    if pred.agrees(schema, &recs[i as usize], &recs[j as usize]).unwrap() {
                        bits |= 1 << p;
                    }
                }
                let key = PairKey::dedup(i, j);
                rows.push((key, bits, truth.contains(&key)));
            }
        }
        Self {
            width: preds.len() as u32,
            rows,
        }
    }

    /// (tp, fp, fn) of a scheme.
    pub fn counts(&self, scheme: &Scheme) -> (u64, u64, u64) {
        let masks = masks(scheme);
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for &(_, bits, m) in &self.rows {
            let c = masks.iter().any(|&k| bits & k == k);
            match (c, m) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        (tp, fp, fn_)
    }

    pub fn pc_pq(&self, scheme: &Scheme) -> (f64, f64) {
        let (tp, fp, fn_) = self.counts(scheme);
        let pc = tp as f64 / (tp + fn_) as f64;
        let pq = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        (pc, pq)
    }
}

pub fn masks(scheme: &Scheme) -> Vec<u64> {
    scheme
        .conjuncts()
        .iter()
        .map(|c| c.preds().iter().fold(0u64, |m, &p| m | (1 << p)))
        .collect()
}

/// All canonical schemes over `width` predicates using at most `max_ary`
/// distinct predicates: every family of non-empty conjuncts drawn from every
/// predicate subset of that size, canonicalized and de-duplicated.
pub fn all_schemes(width: u32, max_ary: usize) -> BTreeSet<Scheme> {
    let mut out = BTreeSet::new();
    for subset in 1u32..(1 << width) {
        if subset.count_ones() as usize > max_ary {
            continue;
        }
        let members: Vec<u32> = (0..width).filter(|p| subset & (1 << p) != 0).collect();
        let conjuncts: Vec<Vec<u32>> = (1u32..(1 << members.len()))
            .map(|m| {
                members
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| m & (1 << i) != 0)
                    .map(|(_, &p)| p)
                    .collect()
            })
            .collect();
        for family in 1u64..(1 << conjuncts.len()) {
            let chosen: Vec<Vec<u32>> = conjuncts
                .iter()
                .enumerate()
                .filter(|(i, _)| family & (1 << i) != 0)
                .map(|(_, c)| c.clone())
                .collect();
            out.insert(Scheme::from_conjuncts(chosen, width).unwrap());
        }
    }
    out
}

/// Non-dominated subset by pairwise comparison. Among points with equal
/// coordinates only the smallest scheme is kept.
pub fn naive_skyline(points: &[(Scheme, f64, f64)]) -> BTreeSet<Scheme> {
    let dom = |a: &(Scheme, f64, f64), b: &(Scheme, f64, f64)| {
        a.1 >= b.1 && a.2 >= b.2 && (a.1 > b.1 || a.2 > b.2)
    };
    let mut out = BTreeSet::new();
    for p in points {
        if points.iter().any(|q| dom(q, p)) {
            continue;
        }
        let smallest = points
            .iter()
            .filter(|q| q.1 == p.1 && q.2 == p.2)
            .map(|q| &q.0)
            .min()
            .unwrap();
        if *smallest == p.0 {
            out.insert(p.0.clone());
        }
    }
    out
}

/// A random scheme with 1..=3 conjuncts of 1..=3 predicates.
pub fn random_scheme<R: Rng>(rng: &mut R, width: u32) -> Scheme {
    let n = rng.gen_range(1..=3);
    let conjuncts = (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=3.min(width as usize));
            (0..len).map(|_| rng.gen_range(0..width)).collect()
        })
        .collect();
    Scheme::from_conjuncts(conjuncts, width).unwrap()
}
