//! Monotone DNF blocking schemes over a bound predicate universe.
//!
//! A [`Scheme`] is always held in canonical form: each conjunct is a sorted,
//! deduplicated list of predicate indices; no conjunct is a superset of
//! another (absorption); conjuncts are sorted. Two schemes that differ only by
//! absorption, commutativity or idempotence compare equal.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocking::BlockingPredicate;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SchemeError {
    #[error("scheme needs at least one non-empty conjunct")]
    Empty,
    #[error("predicate index {index} outside universe of {width}")]
    OutOfRange { index: u32, width: u32 },
    #[error("feature vector has {found} entries, universe has {expected}")]
    DimensionMismatch { expected: u32, found: u32 },
    #[error("schemes bound to different universes ({0} vs {1} predicates)")]
    UniverseMismatch(u32, u32),
    #[error("cannot parse scheme: {0}")]
    Parse(String),
}

/// Fixed-width bit vector of predicate outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureBits {
    words: Vec<u64>,
    len: u32,
}

impl FeatureBits {
    pub fn zeros(len: u32) -> Self {
        Self {
            words: vec![0; (len as usize).div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut fb = Self::zeros(bits.len() as u32);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                fb.set(i as u32);
            }
        }
        fb
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: u32) -> bool {
        (self.words[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: u32) {
        self.words[(i / 64) as usize] |= 1 << (i % 64);
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

impl fmt::Display for FeatureBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Sorted, deduplicated, non-empty predicate index set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Conjunct(Vec<u32>);

impl Conjunct {
    pub fn new(mut preds: Vec<u32>) -> Option<Self> {
        if preds.is_empty() {
            return None;
        }
        preds.sort_unstable();
        preds.dedup();
        Some(Self(preds))
    }

    pub fn preds(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn satisfied_by(&self, fv: &FeatureBits) -> bool {
        self.0.iter().all(|&p| fv.get(p))
    }

    /// True if every predicate of `self` is in `other`.
    pub fn is_subset_of(&self, other: &Conjunct) -> bool {
        let mut it = other.0.iter();
        self.0.iter().all(|p| it.any(|q| q == p))
    }

    fn union(&self, other: &Conjunct) -> Conjunct {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Conjunct::new(v).expect("non-empty")
    }
}

/// A canonical monotone DNF over `width` predicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scheme {
    width: u32,
    conjuncts: Vec<Conjunct>,
}

impl Scheme {
    /// Single-predicate scheme.
    pub fn predicate(index: u32, width: u32) -> Self {
        assert!(index < width, "predicate {index} outside universe {width}");
        Self {
            width,
            conjuncts: vec![Conjunct(vec![index])],
        }
    }

    /// All single-predicate schemes of a universe.
    pub fn singletons(width: u32) -> Vec<Scheme> {
        (0..width).map(|i| Scheme::predicate(i, width)).collect()
    }

    pub fn from_conjuncts(conjuncts: Vec<Vec<u32>>, width: u32) -> Result<Self, SchemeError> {
        let mut cs = Vec::with_capacity(conjuncts.len());
        for c in conjuncts {
            if let Some(&bad) = c.iter().find(|&&p| p >= width) {
                return Err(SchemeError::OutOfRange { index: bad, width });
            }
            cs.push(Conjunct::new(c).ok_or(SchemeError::Empty)?);
        }
        if cs.is_empty() {
            return Err(SchemeError::Empty);
        }
        Ok(Self::canonical(cs, width))
    }

    fn canonical(mut cs: Vec<Conjunct>, width: u32) -> Self {
        // shorter conjuncts first so absorbers are kept before the sets they absorb
        cs.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        cs.dedup();
        let mut kept: Vec<Conjunct> = Vec::with_capacity(cs.len());
        for c in cs {
            if !kept.iter().any(|k| k.is_subset_of(&c)) {
                kept.push(c);
            }
        }
        kept.sort();
        Self {
            width,
            conjuncts: kept,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn conjuncts(&self) -> &[Conjunct] {
        &self.conjuncts
    }

    /// Number of distinct predicates used.
    pub fn ary(&self) -> usize {
        self.predicates().len()
    }

    /// Distinct predicate indices, ascending.
    pub fn predicates(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.conjuncts.iter().flat_map(|c| c.0.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn contains_predicate(&self, p: u32) -> bool {
        self.conjuncts.iter().any(|c| c.0.contains(&p))
    }

    pub fn is_conjunction(&self) -> bool {
        self.conjuncts.len() == 1
    }

    pub fn covers(&self, fv: &FeatureBits) -> Result<bool, SchemeError> {
        if fv.len() != self.width {
            return Err(SchemeError::DimensionMismatch {
                expected: self.width,
                found: fv.len(),
            });
        }
        Ok(self.covers_unchecked(fv))
    }

    /// `covers` without the dimension check.
    #[inline]
    pub fn covers_unchecked(&self, fv: &FeatureBits) -> bool {
        self.conjuncts.iter().any(|c| c.satisfied_by(fv))
    }

    /// Canonical DNF of `self ∧ other`.
    pub fn conjoin(&self, other: &Scheme) -> Result<Scheme, SchemeError> {
        self.check_universe(other)?;
        let mut cs = Vec::with_capacity(self.conjuncts.len() * other.conjuncts.len());
        for a in &self.conjuncts {
            for b in &other.conjuncts {
                cs.push(a.union(b));
            }
        }
        Ok(Self::canonical(cs, self.width))
    }

    /// Canonical DNF of `self ∨ other`.
    pub fn disjoin(&self, other: &Scheme) -> Result<Scheme, SchemeError> {
        self.check_universe(other)?;
        let mut cs = self.conjuncts.clone();
        cs.extend(other.conjuncts.iter().cloned());
        Ok(Self::canonical(cs, self.width))
    }

    fn check_universe(&self, other: &Scheme) -> Result<(), SchemeError> {
        if self.width != other.width {
            return Err(SchemeError::UniverseMismatch(self.width, other.width));
        }
        Ok(())
    }

    /// Renders as `(a.soundex ∧ b.exact) ∨ (c.exact)`.
    pub fn render(&self, preds: &[BlockingPredicate]) -> String {
        self.conjuncts
            .iter()
            .map(|c| {
                let inner: Vec<String> = c
                    .0
                    .iter()
                    .map(|&p| {
                        preds
                            .get(p as usize)
                            .map(ToString::to_string)
                            .unwrap_or_else(|| format!("p{p}"))
                    })
                    .collect();
                format!("({})", inner.join(" ∧ "))
            })
            .collect::<Vec<_>>()
            .join(" ∨ ")
    }

    /// Parses the rendered form. `&`/`|` and `AND`/`OR` are accepted as well.
    pub fn parse(text: &str, preds: &[BlockingPredicate]) -> Result<Scheme, SchemeError> {
        let width = preds.len() as u32;
        let norm = text
            .replace('∨', "|")
            .replace('∧', "&")
            .replace(" OR ", "|")
            .replace(" AND ", "&");
        let mut conjuncts = Vec::new();
        for part in norm.split('|') {
            let part = part.trim();
            let inner = part
                .strip_prefix('(')
                .and_then(|p| p.strip_suffix(')'))
                .unwrap_or(part);
            let mut c = Vec::new();
            for lit in inner.split('&') {
                let lit = lit.trim();
                if lit.is_empty() {
                    return Err(SchemeError::Parse(format!("empty literal in `{text}`")));
                }
                let idx = preds
                    .iter()
                    .position(|p| p.to_string() == lit)
                    .or_else(|| {
                        lit.strip_prefix('p')
                            .and_then(|n| n.parse::<usize>().ok())
                            .filter(|&n| n < preds.len())
                    })
                    .ok_or_else(|| SchemeError::Parse(format!("unknown predicate `{lit}`")))?;
                c.push(idx as u32);
            }
            conjuncts.push(c);
        }
        Scheme::from_conjuncts(conjuncts, width)
    }
}

/// Order used for deterministic tie-breaking: fewer predicates first, then
/// fewer conjuncts, then lexicographic conjuncts.
impl Ord for Scheme {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ary()
            .cmp(&other.ary())
            .then_with(|| self.conjuncts.len().cmp(&other.conjuncts.len()))
            .then_with(|| self.conjuncts.cmp(&other.conjuncts))
            .then_with(|| self.width.cmp(&other.width))
    }
}

impl PartialOrd for Scheme {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[]))
    }
}

/// Whether a point's coordinates come from the full ground truth or from the
/// labeled training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Empirical,
}

/// A scheme placed in PC×PQ space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemePoint {
    pub scheme: Scheme,
    pub pc: f64,
    pub pq: f64,
    pub provenance: Provenance,
}

impl SchemePoint {
    pub fn new(scheme: Scheme, pc: f64, pq: f64, provenance: Provenance) -> Self {
        debug_assert!((0.0..=1.0).contains(&pc) && (0.0..=1.0).contains(&pq));
        Self {
            scheme,
            pc,
            pq,
            provenance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocking::BlockingFunction;

    fn s(cs: &[&[u32]], w: u32) -> Scheme {
        Scheme::from_conjuncts(cs.iter().map(|c| c.to_vec()).collect(), w).unwrap()
    }

    fn fv(bits: &[u8]) -> FeatureBits {
        FeatureBits::from_bools(&bits.iter().map(|&b| b == 1).collect::<Vec<_>>())
    }

    #[test]
    fn covers_examples() {
        assert!(s(&[&[0, 1]], 3).covers(&fv(&[1, 1, 0])).unwrap());
        assert!(s(&[&[0, 1], &[0, 2]], 3).covers(&fv(&[1, 0, 1])).unwrap());
        assert!(!s(&[&[0, 1], &[0, 2], &[1]], 3).covers(&fv(&[0, 0, 0])).unwrap());
        assert_eq!(
            s(&[&[0]], 3).covers(&fv(&[1, 0])),
            Err(SchemeError::DimensionMismatch {
                expected: 3,
                found: 2
            })
        );
    }

    #[test]
    fn ary_examples() {
        assert_eq!(s(&[&[0, 1], &[0, 2]], 3).ary(), 3);
        assert_eq!(s(&[&[2]], 3).ary(), 1);
        let dup = s(&[&[0, 1], &[1, 0]], 3);
        assert_eq!(dup.conjuncts().len(), 1);
        assert_eq!(dup.ary(), 2);
    }

    #[test]
    fn absorption() {
        // p0 ∨ (p0 ∧ p1) = p0
        assert_eq!(s(&[&[0], &[0, 1]], 2), s(&[&[0]], 2));
        assert_eq!(s(&[&[0, 1, 1, 0]], 2).conjuncts()[0].preds(), &[0, 1]);
    }

    #[test]
    fn extension_examples() {
        let p = |i| Scheme::predicate(i, 3);
        assert_eq!(p(0).disjoin(&p(1)).unwrap(), s(&[&[0], &[1]], 3));
        let left = p(0).disjoin(&p(1)).unwrap();
        assert_eq!(left.conjoin(&p(2)).unwrap(), s(&[&[0, 2], &[1, 2]], 3));
        assert_eq!(left.disjoin(&left).unwrap(), left);
        assert_eq!(
            p(0).conjoin(&Scheme::predicate(0, 4)),
            Err(SchemeError::UniverseMismatch(3, 4))
        );
    }

    #[test]
    fn ordering_prefers_smaller_schemes() {
        let a = s(&[&[5]], 6);
        let b = s(&[&[0, 1]], 6);
        let c = s(&[&[0], &[1]], 6);
        assert!(a < b);
        assert!(b < c);
    }

    #[test]
    fn render_and_parse() {
        let preds = vec![
            BlockingPredicate::new("author", BlockingFunction::Soundex),
            BlockingPredicate::new("title", BlockingFunction::ExactMatch),
            BlockingPredicate::new("venue", BlockingFunction::ExactMatch),
        ];
        let sch = s(&[&[0, 1], &[2]], 3);
        let text = sch.render(&preds);
        assert_eq!(text, "(author.soundex ∧ title.exact) ∨ (venue.exact)");
        assert_eq!(Scheme::parse(&text, &preds).unwrap(), sch);
        assert_eq!(
            Scheme::parse("venue.exact | author.soundex & title.exact", &preds).unwrap(),
            sch
        );
        assert!(Scheme::parse("(nope.exact)", &preds).is_err());
        assert!(Scheme::parse("()", &preds).is_err());
    }

    #[test]
    fn feature_bits_wide() {
        let mut b = FeatureBits::zeros(72);
        b.set(0);
        b.set(71);
        assert!(b.get(71) && b.get(0) && !b.get(64));
        assert_eq!(b.count_ones(), 2);
        assert_eq!(FeatureBits::from_bools(&b.to_bools()), b);
    }
}
