//! Pair-level blocking quality: confusion counts, PC, PQ, RR, FM, empirical
//! estimates over a training set, and disjoint block materialization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{GroundTruth, Mode, RecordPair, RecordRef};
use crate::index::BlockingIndex;
use crate::oracle::Label;
use crate::sampling::TrainingSet;
use crate::scheme::{Provenance, Scheme, SchemePoint};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("pair ({0}, {1}) does not resolve to records in the dataset")]
    UnresolvedPair(String, String),
    #[error("pair completeness is undefined: there are no ground-truth matches")]
    UndefinedPc,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("scheme not evaluable yet: training set has no match labels")]
    NoMatchLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn coblocked(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Whether the pair shares a block under pair-level semantics.
pub fn coblocked(
    index: &BlockingIndex,
    scheme: &Scheme,
    pair: &RecordPair,
) -> Result<bool, MetricsError> {
    let key = index
        .dataset()
        .resolve_pair(pair)
        .ok_or_else(|| MetricsError::UnresolvedPair(pair.left.clone(), pair.right.clone()))?;
    Ok(index.covers(scheme, key))
}

pub fn confusion(index: &BlockingIndex, scheme: &Scheme, truth: &GroundTruth) -> ConfusionCounts {
    let tp = truth.iter().filter(|p| index.covers(scheme, **p)).count() as u64;
    let covered = index.covered_count(scheme);
    let total = index.dataset().total_pairs();
    let fp = covered - tp;
    let fn_ = truth.len() as u64 - tp;
    ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: total - covered - fn_,
    }
}

pub fn pc(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    if c.tp + c.fn_ == 0 {
        return Err(MetricsError::UndefinedPc);
    }
    Ok(c.tp as f64 / (c.tp + c.fn_) as f64)
}

pub fn pq(c: &ConfusionCounts) -> f64 {
    if c.tp + c.fp == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    }
}

pub fn rr(index: &BlockingIndex, scheme: &Scheme) -> f64 {
    let total = index.dataset().total_pairs();
    if total == 0 {
        return 1.0;
    }
    1.0 - index.covered_count(scheme) as f64 / total as f64
}

/// Same as [`rr`] from already computed counts.
pub fn rr_from(c: &ConfusionCounts) -> f64 {
    if c.total() == 0 {
        1.0
    } else {
        1.0 - c.coblocked() as f64 / c.total() as f64
    }
}

pub fn fm(pc: f64, pq: f64) -> f64 {
    if pc + pq == 0.0 {
        0.0
    } else {
        2.0 * pc * pq / (pc + pq)
    }
}

/// Exact quality of one scheme against full ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMetrics {
    pub counts: ConfusionCounts,
    pub pc: f64,
    pub pq: f64,
    pub rr: f64,
    pub fm: f64,
}

pub fn exact_metrics(
    index: &BlockingIndex,
    scheme: &Scheme,
    truth: &GroundTruth,
) -> Result<ExactMetrics, MetricsError> {
    let counts = confusion(index, scheme, truth);
    let pc = pc(&counts)?;
    let pq = pq(&counts);
    Ok(ExactMetrics {
        counts,
        pc,
        pq,
        rr: rr_from(&counts),
        fm: fm(pc, pq),
    })
}

pub fn exact_point(
    index: &BlockingIndex,
    scheme: &Scheme,
    truth: &GroundTruth,
) -> Result<SchemePoint, MetricsError> {
    let m = exact_metrics(index, scheme, truth)?;
    Ok(SchemePoint::new(scheme.clone(), m.pc, m.pq, Provenance::Exact))
}

/// Covered-and-matching, matching, and covered counts over a training set.
fn empirical_counts(scheme: &Scheme, t: &TrainingSet) -> (usize, usize, usize) {
    let mut hit = 0;
    let mut matches = 0;
    let mut covered = 0;
    for (fv, label) in t.iter() {
        let c = scheme.covers_unchecked(&fv.bits);
        let m = *label == Label::Match;
        covered += c as usize;
        matches += m as usize;
        hit += (c && m) as usize;
    }
    (hit, matches, covered)
}

pub fn empirical_pc(scheme: &Scheme, t: &TrainingSet) -> Result<f64, MetricsError> {
    if t.is_empty() {
        return Err(MetricsError::EmptyTrainingSet);
    }
    let (hit, matches, _) = empirical_counts(scheme, t);
    if matches == 0 {
        return Err(MetricsError::NoMatchLabels);
    }
    Ok(hit as f64 / matches as f64)
}

pub fn empirical_pq(scheme: &Scheme, t: &TrainingSet) -> Result<f64, MetricsError> {
    if t.is_empty() {
        return Err(MetricsError::EmptyTrainingSet);
    }
    let (hit, _, covered) = empirical_counts(scheme, t);
    Ok(if covered == 0 {
        0.0
    } else {
        hit as f64 / covered as f64
    })
}

pub fn empirical_point(scheme: &Scheme, t: &TrainingSet) -> Result<SchemePoint, MetricsError> {
    if t.is_empty() {
        return Err(MetricsError::EmptyTrainingSet);
    }
    let (hit, matches, covered) = empirical_counts(scheme, t);
    if matches == 0 {
        return Err(MetricsError::NoMatchLabels);
    }
    let pq = if covered == 0 {
        0.0
    } else {
        hit as f64 / covered as f64
    };
    Ok(SchemePoint::new(
        scheme.clone(),
        hit as f64 / matches as f64,
        pq,
        Provenance::Empirical,
    ))
}

/// Disjoint blocks covering every record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub blocks: Vec<Vec<RecordRef>>,
}

impl BlockPartition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Blocks as record ids.
    pub fn ids(&self, index: &BlockingIndex) -> Vec<Vec<String>> {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|r| index.dataset().record(*r).id.clone()).collect())
            .collect()
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Connected components of the co-blocked relation. For a pure conjunction
/// these are exactly the composite-key groups.
pub fn materialize_blocks(index: &BlockingIndex, scheme: &Scheme) -> BlockPartition {
    let n0 = index.source_len(0);
    let n_sources = index.dataset().sources().len();
    let total = n0 + if n_sources > 1 { index.source_len(1) } else { 0 };
    let node = |s: usize, r: u32| if s == 0 { r as usize } else { n0 + r as usize };
    let mut uf = UnionFind((0..total).collect());
    let mode = index.mode();
    for c in scheme.conjuncts() {
        let ix = index.conjunct_index(c);
        for &bi in &ix.eligible {
            let b = &ix.buckets[bi];
            let mut members = (0..n_sources).flat_map(|s| b.members[s].iter().map(move |&r| node(s, r)));
            let first = members.next().expect("eligible bucket has members");
            for m in members {
                uf.union(first, m);
            }
        }
        debug_assert!(mode == Mode::Dedup || n_sources == 2);
    }
    let mut groups: Vec<Vec<RecordRef>> = Vec::new();
    let mut slot = vec![usize::MAX; total];
    for x in 0..total {
        let root = uf.find(x);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        let r = if x < n0 {
            RecordRef { source: 0, index: x as u32 }
        } else {
            RecordRef {
                source: 1,
                index: (x - n0) as u32,
            }
        };
        groups[slot[root]].push(r);
    }
    BlockPartition { blocks: groups }
}
