//! Balance rates and balanced active sampling over the inverted indexes,
//! plus the uniform random baseline.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{Mode, PairKey, RecordPair};
use crate::index::BlockingIndex;
use crate::oracle::Label;
use crate::scheme::{FeatureBits, Scheme};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("balance rate needs a non-empty sample set")]
    EmptySet,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    pub pair: PairKey,
    pub bits: FeatureBits,
}

impl FeatureVector {
    pub fn new(index: &BlockingIndex, pair: PairKey) -> Self {
        Self {
            pair,
            bits: index.features(pair),
        }
    }

    pub fn ids(&self, index: &BlockingIndex) -> RecordPair {
        index.dataset().pair_ids(self.pair)
    }
}

/// Labeled feature vectors, at most one per pair, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    entries: Vec<(FeatureVector, Label)>,
    seen: HashSet<PairKey>,
}

impl TrainingSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false (and keeps the first label) if the pair is present.
    pub fn insert(&mut self, fv: FeatureVector, label: Label) -> bool {
        if !self.seen.insert(fv.pair) {
            return false;
        }
        self.entries.push((fv, label));
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, pair: &PairKey) -> bool {
        self.seen.contains(pair)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(FeatureVector, Label)> {
        self.entries.iter()
    }

    pub fn bits(&self) -> impl Iterator<Item = &FeatureBits> + Clone {
        self.entries.iter().map(|(fv, _)| &fv.bits)
    }

    pub fn match_count(&self) -> usize {
        self.entries.iter().filter(|(_, l)| *l == Label::Match).count()
    }

    pub fn extend_from(&mut self, other: &TrainingSet) {
        for (fv, l) in other.iter() {
            self.insert(fv.clone(), *l);
        }
    }

    /// Labeled pairs as `left,right,label,bits`.
    pub fn write_csv<W: Write>(&self, index: &BlockingIndex, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["left", "right", "label", "bits"])?;
        for (fv, l) in &self.entries {
            let ids = fv.ids(index);
            w.write_record([ids.left, ids.right, l.to_string(), fv.bits.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SamplerStats {
    /// Candidate pairs drawn from index buckets or the pair universe.
    pub draws: u64,
    /// Draws thrown away (already sampled or wrong class).
    pub rejected: u64,
    /// Times a sampler fell back to enumerating its whole population.
    pub full_scans: u64,
}

/// Seeded RNG and the set of pairs already drawn in this run.
#[derive(Debug, Clone)]
pub struct SamplerState {
    rng: ChaCha8Rng,
    sampled: HashSet<PairKey>,
    pub stats: SamplerStats,
}

impl SamplerState {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            sampled: HashSet::new(),
            stats: SamplerStats::default(),
        }
    }

    pub fn is_sampled(&self, pair: &PairKey) -> bool {
        self.sampled.contains(pair)
    }

    pub fn sampled_count(&self) -> usize {
        self.sampled.len()
    }

    pub fn mark(&mut self, pair: PairKey) -> bool {
        self.sampled.insert(pair)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

fn attempt_limit(k: usize) -> usize {
    32 * k + 64
}

/// (covered − uncovered) / |X|.
pub fn balance_rate<'a>(
    scheme: &Scheme,
    xs: impl IntoIterator<Item = &'a FeatureBits>,
) -> Result<f64, SamplingError> {
    let mut n = 0i64;
    let mut diff = 0i64;
    for x in xs {
        n += 1;
        diff += if scheme.covers_unchecked(x) { 1 } else { -1 };
    }
    if n == 0 {
        return Err(SamplingError::EmptySet);
    }
    Ok(diff as f64 / n as f64)
}

/// Sum of squared balance rates.
pub fn sampling_objective<'a, I>(schemes: &[Scheme], xs: I) -> Result<f64, SamplingError>
where
    I: IntoIterator<Item = &'a FeatureBits> + Clone,
{
    schemes
        .iter()
        .map(|s| balance_rate(s, xs.clone()).map(|g| g * g))
        .sum()
}

fn random_pair_in_bucket(
    rng: &mut ChaCha8Rng,
    mode: Mode,
    members: &[Vec<u32>; 2],
) -> PairKey {
    match mode {
        Mode::Dedup => {
            let m = &members[0];
            let i = rng.gen_range(0..m.len());
            let mut j = rng.gen_range(0..m.len() - 1);
            if j >= i {
                j += 1;
            }
            PairKey::dedup(m[i], m[j])
        }
        Mode::Linkage => PairKey::linkage(
            members[0][rng.gen_range(0..members[0].len())],
            members[1][rng.gen_range(0..members[1].len())],
        ),
    }
}

/// Picks up to `need` of `candidates` and marks them sampled.
fn take_from_scan(
    index: &BlockingIndex,
    mut candidates: Vec<PairKey>,
    need: usize,
    state: &mut SamplerState,
    out: &mut Vec<FeatureVector>,
) {
    state.stats.full_scans += 1;
    let (chosen, _) = candidates.partial_shuffle(&mut state.rng, need);
    for &p in chosen.iter() {
        state.mark(p);
        out.push(FeatureVector::new(index, p));
    }
}

/// Up to `k` new pairs covered by `scheme`. Draws a conjunct uniformly, a
/// bucket with probability proportional to its pair count, then a pair in it.
pub fn similar_sample(
    index: &BlockingIndex,
    scheme: &Scheme,
    k: usize,
    state: &mut SamplerState,
) -> Vec<FeatureVector> {
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    let conjuncts: Vec<_> = scheme
        .conjuncts()
        .iter()
        .map(|c| index.conjunct_index(c))
        .filter(|ix| ix.pair_weight > 0)
        .collect();
    if conjuncts.is_empty() {
        return out;
    }
    let mode = index.mode();
    let mut attempts = 0;
    while out.len() < k && attempts < attempt_limit(k) {
        attempts += 1;
        state.stats.draws += 1;
        let ix = &conjuncts[state.rng.gen_range(0..conjuncts.len())];
        let r = state.rng.gen_range(0..ix.pair_weight);
        let slot = ix.cumulative.partition_point(|&c| c <= r);
        let bucket = &ix.buckets[ix.eligible[slot]];
        let pair = random_pair_in_bucket(&mut state.rng, mode, &bucket.members);
        if state.mark(pair) {
            out.push(FeatureVector::new(index, pair));
        } else {
            state.stats.rejected += 1;
        }
    }
    if out.len() < k {
        let mut candidates = Vec::new();
        index.for_each_covered_pair(scheme, |p| {
            if !state.is_sampled(&p) {
                candidates.push(p);
            }
        });
        candidates.sort_unstable();
        let need = k - out.len();
        take_from_scan(index, candidates, need, state, &mut out);
    }
    out
}

/// Up to `k` new pairs not covered by `scheme`, drawn uniformly from the
/// uncovered part of the pair universe.
pub fn dissimilar_sample(
    index: &BlockingIndex,
    scheme: &Scheme,
    k: usize,
    state: &mut SamplerState,
) -> Vec<FeatureVector> {
    let mut out = Vec::new();
    let total = index.dataset().total_pairs();
    if k == 0 || total == 0 {
        return out;
    }
    if scheme
        .conjuncts()
        .iter()
        .any(|c| index.conjunct_index(c).covers_everything)
    {
        return out;
    }
    let mut attempts = 0;
    while out.len() < k && attempts < attempt_limit(k) {
        attempts += 1;
        state.stats.draws += 1;
        let pair = index.pair_at(state.rng.gen_range(0..total));
        if !state.is_sampled(&pair) && !index.covers(scheme, pair) {
            state.mark(pair);
            out.push(FeatureVector::new(index, pair));
        } else {
            state.stats.rejected += 1;
        }
    }
    if out.len() < k {
        let mut candidates = Vec::new();
        index.for_each_pair(|p| {
            if !state.is_sampled(&p) && !index.covers(scheme, p) {
                candidates.push(p);
            }
        });
        let need = k - out.len();
        take_from_scan(index, candidates, need, state, &mut out);
    }
    out
}

/// Up to `k` new pairs drawn uniformly without replacement.
pub fn random_sample(index: &BlockingIndex, k: usize, state: &mut SamplerState) -> Vec<FeatureVector> {
    let mut out = Vec::new();
    let total = index.dataset().total_pairs();
    if k == 0 || total == 0 {
        return out;
    }
    let available = total.saturating_sub(state.sampled_count() as u64);
    let want = (k as u64).min(available) as usize;
    let mut attempts = 0;
    while out.len() < want && attempts < attempt_limit(k) {
        attempts += 1;
        state.stats.draws += 1;
        let pair = index.pair_at(state.rng.gen_range(0..total));
        if state.mark(pair) {
            out.push(FeatureVector::new(index, pair));
        } else {
            state.stats.rejected += 1;
        }
    }
    if out.len() < want {
        let mut candidates = Vec::new();
        index.for_each_pair(|p| {
            if !state.is_sampled(&p) {
                candidates.push(p);
            }
        });
        let need = want - out.len();
        take_from_scan(index, candidates, need, state, &mut out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Similar,
    Dissimilar,
}

/// What one scheme asked for in a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDecision {
    pub scheme: usize,
    pub gamma: f64,
    pub direction: Direction,
    pub drawn: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RoundSample {
    pub vectors: Vec<FeatureVector>,
    pub decisions: Vec<SampleDecision>,
}

/// One pass of the greedy balancing rule: for each scheme, draw similar pairs
/// when γ ≤ 0 (or X is empty) and dissimilar pairs otherwise. γ is taken over
/// `existing` plus everything drawn earlier in the same pass. At most `limit`
/// vectors are returned in total.
pub fn active_round<'a>(
    index: &BlockingIndex,
    schemes: &[Scheme],
    k: usize,
    limit: usize,
    existing: impl IntoIterator<Item = &'a FeatureBits> + Clone,
    state: &mut SamplerState,
) -> RoundSample {
    let mut round = RoundSample::default();
    for (i, s) in schemes.iter().enumerate() {
        let take = k.min(limit - round.vectors.len());
        if take == 0 {
            break;
        }
        let mut n = 0i64;
        let mut diff = 0i64;
        let mut tally = |x: &FeatureBits| {
            n += 1;
            diff += if s.covers_unchecked(x) { 1 } else { -1 };
        };
        existing.clone().into_iter().for_each(&mut tally);
        round.vectors.iter().for_each(|v| tally(&v.bits));
        let gamma = if n == 0 { 0.0 } else { diff as f64 / n as f64 };
        let (direction, drawn) = if gamma <= 0.0 {
            (Direction::Similar, similar_sample(index, s, take, state))
        } else {
            (Direction::Dissimilar, dissimilar_sample(index, s, take, state))
        };
        round.decisions.push(SampleDecision {
            scheme: i,
            gamma,
            direction,
            drawn: drawn.len(),
        });
        round.vectors.extend(drawn);
    }
    round
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocking::{BlockingFunction, BlockingPredicate};
    use crate::datamodel::{Dataset, Record};
    use std::sync::Arc;

    fn index(vals: &[&str], f: BlockingFunction) -> BlockingIndex {
        let recs = vals
            .iter()
            .enumerate()
            .map(|(i, v)| Record::new(format!("r{i}"), vec![v.to_string()]))
            .collect();
        let ds = Dataset::dedup(vec!["v".into()], recs).unwrap();
        BlockingIndex::new(Arc::new(ds), vec![BlockingPredicate::new("v", f)]).unwrap()
    }

    fn bits(v: &[bool]) -> FeatureBits {
        FeatureBits::from_bools(v)
    }

    #[test]
    fn balance_rates() {
        let s = Scheme::predicate(0, 1);
        let all = vec![bits(&[true]); 3];
        assert_eq!(balance_rate(&s, &all).unwrap(), 1.0);
        let none = vec![bits(&[false]); 3];
        assert_eq!(balance_rate(&s, &none).unwrap(), -1.0);
        let half: Vec<_> = all.iter().chain(&none).cloned().collect();
        assert_eq!(balance_rate(&s, &half).unwrap(), 0.0);
        assert_eq!(balance_rate(&s, &[]), Err(SamplingError::EmptySet));
    }

    #[test]
    fn objective_sums_squares() {
        let a = Scheme::predicate(0, 2);
        let b = Scheme::predicate(1, 2);
        // a covers 3 of 4 (γ=0.5), b covers 1 of 4 (γ=−0.5)
        let xs = vec![
            bits(&[true, false]),
            bits(&[true, false]),
            bits(&[true, true]),
            bits(&[false, false]),
        ];
        assert!((sampling_objective(&[a, b], &xs).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn similar_only_within_buckets() {
        // soundex buckets: {Smith, Smyth, Smithe} and {Lee, Ley}
        let ix = index(&["Smith", "Lee", "Smyth", "Ley", "Smithe"], BlockingFunction::Soundex);
        let s = Scheme::predicate(0, 1);
        let mut st = SamplerState::new(3);
        let got = similar_sample(&ix, &s, 10, &mut st);
        let mut pairs: Vec<_> = got.iter().map(|f| f.pair).collect();
        pairs.sort();
        let mut brute = Vec::new();
        ix.for_each_pair(|p| {
            if ix.covers(&s, p) {
                brute.push(p)
            }
        });
        assert_eq!(pairs, brute);
        assert_eq!(pairs.len(), 4);
        assert!(similar_sample(&ix, &s, 3, &mut st).is_empty());
    }

    #[test]
    fn dissimilar_empty_when_everything_shares_a_code() {
        let ix = index(&["Durham", "Durham", "Durham"], BlockingFunction::ExactMatch);
        let mut st = SamplerState::new(0);
        assert!(dissimilar_sample(&ix, &Scheme::predicate(0, 1), 5, &mut st).is_empty());
    }

    #[test]
    fn zero_k_is_empty() {
        let ix = index(&["a", "b"], BlockingFunction::ExactMatch);
        let mut st = SamplerState::new(0);
        let s = Scheme::predicate(0, 1);
        assert!(similar_sample(&ix, &s, 0, &mut st).is_empty());
        assert!(dissimilar_sample(&ix, &s, 0, &mut st).is_empty());
        assert!(random_sample(&ix, 0, &mut st).is_empty());
    }

    #[test]
    fn random_single_pair_and_exhaustion() {
        let ix = index(&["a", "b"], BlockingFunction::ExactMatch);
        let mut st = SamplerState::new(9);
        let got = random_sample(&ix, 1, &mut st);
        assert_eq!(got[0].pair, PairKey::dedup(0, 1));
        assert!(random_sample(&ix, 1, &mut st).is_empty());
    }

    #[test]
    fn seeded_sampling_repeats() {
        let vals: Vec<String> = (0..40).map(|i| format!("v{}", i % 7)).collect();
        let refs: Vec<&str> = vals.iter().map(|s| s.as_str()).collect();
        let ix = index(&refs, BlockingFunction::ExactMatch);
        let run = || {
            let mut st = SamplerState::new(42);
            let mut v = random_sample(&ix, 20, &mut st);
            v.extend(similar_sample(&ix, &Scheme::predicate(0, 1), 20, &mut st));
            v.extend(dissimilar_sample(&ix, &Scheme::predicate(0, 1), 20, &mut st));
            v
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn round_direction_follows_gamma() {
        let vals: Vec<String> = (0..30).map(|i| format!("v{}", i % 3)).collect();
        let refs: Vec<&str> = vals.iter().map(|s| s.as_str()).collect();
        let ix = index(&refs, BlockingFunction::ExactMatch);
        let s = vec![Scheme::predicate(0, 1)];
        let mut st = SamplerState::new(1);
        let negative = vec![bits(&[false]), bits(&[false]), bits(&[true])];
        let r = active_round(&ix, &s, 2, 10, &negative, &mut st);
        assert_eq!(r.decisions[0].direction, Direction::Similar);
        assert!(r.vectors.iter().all(|v| v.bits.get(0)));
        let positive = vec![bits(&[true]), bits(&[true]), bits(&[false])];
        let r = active_round(&ix, &s, 2, 10, &positive, &mut st);
        assert_eq!(r.decisions[0].direction, Direction::Dissimilar);
        assert!(r.vectors.iter().all(|v| !v.bits.get(0)));
        let r = active_round(&ix, &s, 5, 3, std::iter::empty(), &mut st);
        assert_eq!(r.decisions[0].direction, Direction::Similar);
        assert_eq!(r.vectors.len(), 3);
    }
}
