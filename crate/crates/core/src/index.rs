//! Per-predicate inverted indexes (code → records) and per-conjunct composite
//! indexes built on top of them.
//!
//! Codes are interned per predicate. A record has one code per predicate, or
//! two for Double Metaphone. Two records agree on a predicate when they share
//! a code. For a conjunct, a record's composite keys are the cartesian product
//! of its per-predicate codes; two records satisfy the conjunct iff they share
//! a composite key.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use crate::blocking::{encode, BlockingPredicate, Code, ConfigError};
use crate::datamodel::{Dataset, Mode, PairKey};
use crate::scheme::{Conjunct, FeatureBits, Scheme};

struct PredicateCodes {
    /// Per source, per record: (code, alternate code). Equal for single-code
    /// functions.
    codes: Vec<Vec<[u32; 2]>>,
    double: bool,
}

/// Records sharing one composite key.
#[derive(Debug, Clone, Default)]
pub struct Bucket {
    pub key: Vec<u32>,
    /// Members per source (only `[0]` is used in dedup mode).
    pub members: [Vec<u32>; 2],
}

impl Bucket {
    pub fn pair_count(&self, mode: Mode) -> u64 {
        match mode {
            Mode::Dedup => {
                let n = self.members[0].len() as u64;
                n * n.saturating_sub(1) / 2
            }
            Mode::Linkage => self.members[0].len() as u64 * self.members[1].len() as u64,
        }
    }
}

/// Composite-key buckets for one conjunct.
#[derive(Debug)]
pub struct ConjunctIndex {
    pub preds: Vec<u32>,
    pub buckets: Vec<Bucket>,
    /// Indices of buckets holding at least one pair.
    pub eligible: Vec<usize>,
    /// Prefix sums of pair counts over `eligible`.
    pub cumulative: Vec<u64>,
    /// Bucket-pair total; over-counts pairs sharing several keys.
    pub pair_weight: u64,
    /// Uses a two-code predicate, so pairs can share more than one key.
    pub multi_key: bool,
    /// One bucket contains every record.
    pub covers_everything: bool,
}

/// Encoded codes and inverted indexes for a dataset under a predicate
/// universe. Read-only after construction apart from the conjunct cache.
pub struct BlockingIndex {
    dataset: Arc<Dataset>,
    predicates: Vec<BlockingPredicate>,
    codes: Vec<PredicateCodes>,
    cache: RwLock<HashMap<Conjunct, Arc<ConjunctIndex>>>,
}

impl std::fmt::Debug for BlockingIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockingIndex")
            .field("records", &self.dataset.len())
            .field("predicates", &self.predicates.len())
            .finish()
    }
}

impl BlockingIndex {
    pub fn new(
        dataset: Arc<Dataset>,
        predicates: Vec<BlockingPredicate>,
    ) -> Result<Self, ConfigError> {
        if predicates.is_empty() {
            return Err(ConfigError::EmptyUniverse);
        }
        let attrs: Vec<usize> = predicates
            .iter()
            .map(|p| {
                dataset
                    .attribute_index(&p.attribute)
                    .ok_or_else(|| ConfigError::UnknownAttribute(p.attribute.clone()))
            })
            .collect::<Result<_, _>>()?;
        let codes = predicates
            .par_iter()
            .zip(attrs.par_iter())
            .map(|(p, &attr)| {
                let mut intern: HashMap<String, u32> = HashMap::new();
                let mut id = |s: String| {
                    let n = intern.len() as u32;
                    *intern.entry(s).or_insert(n)
                };
                let mut double = false;
                let codes = dataset
                    .sources()
                    .iter()
                    .map(|records| {
                        records
                            .iter()
                            .map(|r| match encode(p.function, &r.values[attr]) {
                                Code::Single(c) => {
                                    let c = id(c);
                                    [c, c]
                                }
                                Code::Double(a, b) => {
                                    double = true;
                                    let a = id(a);
                                    let b = id(b);
                                    [a, b]
                                }
                            })
                            .collect()
                    })
                    .collect();
                PredicateCodes { codes, double }
            })
            .collect();
        Ok(Self {
            dataset,
            predicates,
            codes,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn dataset_arc(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn predicates(&self) -> &[BlockingPredicate] {
        &self.predicates
    }

    pub fn width(&self) -> u32 {
        self.predicates.len() as u32
    }

    pub fn mode(&self) -> Mode {
        self.dataset.mode()
    }

    pub fn source_len(&self, s: usize) -> usize {
        self.dataset.source(s).len()
    }

    fn right_source(&self) -> usize {
        match self.mode() {
            Mode::Dedup => 0,
            Mode::Linkage => 1,
        }
    }

    #[inline]
    fn codes_of(&self, p: u32, pair: PairKey) -> ([u32; 2], [u32; 2]) {
        let pc = &self.codes[p as usize];
        (
            pc.codes[0][pair.left as usize],
            pc.codes[self.right_source()][pair.right as usize],
        )
    }

    /// Predicate `p` agrees on the pair.
    #[inline]
    pub fn agrees(&self, p: u32, pair: PairKey) -> bool {
        let (a, b) = self.codes_of(p, pair);
        a[0] == b[0] || (self.codes[p as usize].double && (a[0] == b[1] || a[1] == b[0] || a[1] == b[1]))
    }

    pub fn features(&self, pair: PairKey) -> FeatureBits {
        let mut fb = FeatureBits::zeros(self.width());
        for p in 0..self.width() {
            if self.agrees(p, pair) {
                fb.set(p);
            }
        }
        fb
    }

    #[inline]
    pub fn conjunct_agrees(&self, c: &Conjunct, pair: PairKey) -> bool {
        c.preds().iter().all(|&p| self.agrees(p, pair))
    }

    /// Pair-level co-blocking: some conjunct agrees on the pair.
    #[inline]
    pub fn covers(&self, scheme: &Scheme, pair: PairKey) -> bool {
        scheme.conjuncts().iter().any(|c| self.conjunct_agrees(c, pair))
    }

    /// Composite index for a conjunct, built on first use and cached.
    pub fn conjunct_index(&self, c: &Conjunct) -> Arc<ConjunctIndex> {
        if let Some(ix) = self.cache.read().expect("cache lock").get(c) {
            return Arc::clone(ix);
        }
        let built = Arc::new(self.build_conjunct_index(c));
        let mut cache = self.cache.write().expect("cache lock");
        Arc::clone(cache.entry(c.clone()).or_insert(built))
    }

    fn build_conjunct_index(&self, c: &Conjunct) -> ConjunctIndex {
        let preds = c.preds().to_vec();
        let multi_key = preds.iter().any(|&p| self.codes[p as usize].double);
        let mut slots: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut buckets: Vec<Bucket> = Vec::new();
        let n_sources = self.dataset.sources().len();
        for s in 0..n_sources {
            for r in 0..self.dataset.source(s).len() {
                for key in self.composite_keys(&preds, s, r) {
                    let slot = *slots.entry(key.clone()).or_insert_with(|| {
                        buckets.push(Bucket {
                            key,
                            members: Default::default(),
                        });
                        buckets.len() - 1
                    });
                    buckets[slot].members[s].push(r as u32);
                }
            }
        }
        let mode = self.mode();
        let mut eligible = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0u64;
        for (i, b) in buckets.iter().enumerate() {
            let w = b.pair_count(mode);
            if w > 0 {
                total += w;
                eligible.push(i);
                cumulative.push(total);
            }
        }
        let covers_everything = buckets.iter().any(|b| {
            (0..n_sources).all(|s| b.members[s].len() == self.dataset.source(s).len())
        }) && self.dataset.total_pairs() > 0;
        ConjunctIndex {
            preds,
            buckets,
            eligible,
            cumulative,
            pair_weight: total,
            multi_key,
            covers_everything,
        }
    }

    fn composite_keys(&self, preds: &[u32], source: usize, record: usize) -> Vec<Vec<u32>> {
        let mut keys: Vec<Vec<u32>> = vec![Vec::with_capacity(preds.len())];
        for &p in preds {
            let [a, b] = self.codes[p as usize].codes[source][record];
            if a == b {
                keys.iter_mut().for_each(|k| k.push(a));
            } else {
                let mut next = Vec::with_capacity(keys.len() * 2);
                for k in keys {
                    let mut k2 = k.clone();
                    k2.push(b);
                    let mut k1 = k;
                    k1.push(a);
                    next.push(k1);
                    next.push(k2);
                }
                keys = next;
            }
        }
        keys
    }

    /// Smallest code shared by the pair on predicate `p`, if any.
    fn min_shared_code(&self, p: u32, pair: PairKey) -> Option<u32> {
        let (a, b) = self.codes_of(p, pair);
        let mut best: Option<u32> = None;
        for x in [a[0], a[1]] {
            if x == b[0] || x == b[1] {
                best = Some(best.map_or(x, |m: u32| m.min(x)));
            }
        }
        best
    }

    /// The pair is emitted from this bucket only if the bucket's key is the
    /// pair's smallest shared composite key, so multi-key pairs count once.
    fn is_canonical_bucket(&self, ix: &ConjunctIndex, bucket: &Bucket, pair: PairKey) -> bool {
        !ix.multi_key
            || ix
                .preds
                .iter()
                .zip(&bucket.key)
                .all(|(&p, &k)| self.min_shared_code(p, pair) == Some(k))
    }

    /// Visits every pair inside one bucket.
    pub(crate) fn bucket_pairs(&self, bucket: &Bucket, mut f: impl FnMut(PairKey)) {
        match self.mode() {
            Mode::Dedup => {
                let m = &bucket.members[0];
                for i in 0..m.len() {
                    for j in (i + 1)..m.len() {
                        f(PairKey::dedup(m[i], m[j]));
                    }
                }
            }
            Mode::Linkage => {
                for &a in &bucket.members[0] {
                    for &b in &bucket.members[1] {
                        f(PairKey::linkage(a, b));
                    }
                }
            }
        }
    }

    /// Visits each pair covered by `scheme` exactly once.
    pub fn for_each_covered_pair(&self, scheme: &Scheme, mut f: impl FnMut(PairKey)) {
        let conjuncts = scheme.conjuncts();
        for (j, c) in conjuncts.iter().enumerate() {
            let ix = self.conjunct_index(c);
            let earlier = &conjuncts[..j];
            for &bi in &ix.eligible {
                let bucket = &ix.buckets[bi];
                self.bucket_pairs(bucket, |pair| {
                    if self.is_canonical_bucket(&ix, bucket, pair)
                        && !earlier.iter().any(|e| self.conjunct_agrees(e, pair))
                    {
                        f(pair);
                    }
                });
            }
        }
    }

    /// Number of distinct pairs covered by `scheme`.
    ///
    /// Without two-code predicates this is computed by inclusion–exclusion
    /// over conjunct unions, each term a sum of bucket pair counts. Otherwise
    /// the covered pairs are enumerated.
    pub fn covered_count(&self, scheme: &Scheme) -> u64 {
        let conjuncts = scheme.conjuncts();
        let single_code = scheme
            .predicates()
            .iter()
            .all(|&p| !self.codes[p as usize].double);
        if single_code && conjuncts.len() <= 12 {
            let m = conjuncts.len();
            let mut total: i128 = 0;
            for mask in 1u32..(1 << m) {
                let mut preds = Vec::new();
                for (i, c) in conjuncts.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        preds.extend_from_slice(c.preds());
                    }
                }
                let union = Conjunct::new(preds).expect("non-empty");
                let w = self.conjunct_index(&union).pair_weight as i128;
                if mask.count_ones() % 2 == 1 {
                    total += w;
                } else {
                    total -= w;
                }
            }
            return total as u64;
        }
        let mut n = 0u64;
        self.for_each_covered_pair(scheme, |_| n += 1);
        n
    }

    /// Uniform index over the comparable-pair universe.
    pub fn pair_at(&self, i: u64) -> PairKey {
        match self.mode() {
            Mode::Dedup => {
                // row a holds pairs (a, b) for b > a; rows shrink by one
                let n = self.source_len(0) as u64;
                let mut lo = 0u64;
                let mut hi = n - 1;
                let start = |a: u64| a * (2 * n - a - 1) / 2;
                while lo < hi {
                    let mid = (lo + hi + 1) / 2;
                    if start(mid) <= i {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                let a = lo;
                let b = a + 1 + (i - start(a));
                PairKey::dedup(a as u32, b as u32)
            }
            Mode::Linkage => {
                let n2 = self.source_len(1) as u64;
                PairKey::linkage((i / n2) as u32, (i % n2) as u32)
            }
        }
    }

    /// Visits the whole pair universe in a fixed order.
    pub fn for_each_pair(&self, mut f: impl FnMut(PairKey)) {
        match self.mode() {
            Mode::Dedup => {
                let n = self.source_len(0) as u32;
                for a in 0..n {
                    for b in (a + 1)..n {
                        f(PairKey::dedup(a, b));
                    }
                }
            }
            Mode::Linkage => {
                for a in 0..self.source_len(0) as u32 {
                    for b in 0..self.source_len(1) as u32 {
                        f(PairKey::linkage(a, b));
                    }
                }
            }
        }
    }
}
