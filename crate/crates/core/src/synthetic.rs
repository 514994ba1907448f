//! Seeded synthetic dedup datasets with planted duplicate clusters.
//!
//! Every entity draws one value per attribute from that attribute's
//! vocabulary. Entities in a cluster emit several records; each record copy
//! is corrupted per attribute with the attribute's corruption probability.
//! Ground truth is every pair inside a cluster.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocking::{BlockingFunction, BlockingPredicate};
use crate::datamodel::{Dataset, GroundTruth, PairKey, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    /// Opaque codes; a corrupted copy takes another vocabulary value.
    Token,
    /// Pronounceable words; a corrupted copy gets a small typo, which
    /// phonetic encodings often survive.
    Name,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub domain: usize,
    pub corruption: f64,
    pub kind: ValueKind,
}

impl AttributeSpec {
    pub fn new(name: &str, domain: usize, corruption: f64, kind: ValueKind) -> Self {
        Self {
            name: name.to_string(),
            domain,
            corruption,
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub records: usize,
    /// Entities that emit `cluster_size` records; the rest emit one.
    pub clusters: usize,
    pub cluster_size: usize,
    pub attributes: Vec<AttributeSpec>,
    pub seed: u64,
}

const ONSETS: &[&str] = &[
    "b", "br", "c", "ch", "d", "f", "g", "gr", "h", "j", "k", "l", "m", "n", "p", "r", "s", "sh",
    "st", "t", "th", "v", "w", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ee", "ou"];
const CODAS: &[&str] = &["", "n", "r", "l", "s", "m", "ck", "tt", "nd", "rk"];

fn make_name(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push_str(ONSETS.choose(rng).expect("non-empty"));
        s.push_str(VOWELS.choose(rng).expect("non-empty"));
    }
    s.push_str(CODAS.choose(rng).expect("non-empty"));
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => s,
    }
}

fn vocabulary(attr: &AttributeSpec, rng: &mut ChaCha8Rng) -> Vec<String> {
    match attr.kind {
        ValueKind::Token => (0..attr.domain)
            .map(|i| format!("{}-{i:04}", attr.name))
            .collect(),
        ValueKind::Name => {
            let mut seen = BTreeSet::new();
            let mut out = Vec::with_capacity(attr.domain);
            while out.len() < attr.domain {
                let n = make_name(rng);
                if seen.insert(n.clone()) {
                    out.push(n);
                }
            }
            out
        }
    }
}

/// Either swaps an interior vowel (phonetic codes usually survive) or
/// replaces an interior consonant (they usually do not), with equal odds.
fn typo(value: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = value.chars().collect();
    let is_vowel = |c: char| "aeiouy".contains(c);
    let vowels: Vec<usize> = (1..chars.len()).filter(|&i| is_vowel(chars[i])).collect();
    let consonants: Vec<usize> = (1..chars.len()).filter(|&i| !is_vowel(chars[i])).collect();
    let mut out = chars.clone();
    let use_vowel = !vowels.is_empty() && (consonants.is_empty() || rng.gen_bool(0.5));
    let (slots, pool) = if use_vowel {
        (&vowels, "aeiouy")
    } else {
        (&consonants, "bcdfgjklmnprstvz")
    };
    match slots.choose(rng) {
        Some(&i) => {
            let choices: Vec<char> = pool.chars().filter(|&c| c != chars[i]).collect();
            out[i] = *choices.choose(rng).expect("non-empty");
        }
        None => out.push('x'),
    }
    out.into_iter().collect()
}

fn corrupt(attr: &AttributeSpec, vocab: &[String], base: usize, rng: &mut ChaCha8Rng) -> String {
    match attr.kind {
        ValueKind::Token => {
            if vocab.len() < 2 {
                return vocab[base].clone();
            }
            let mut other = rng.gen_range(0..vocab.len() - 1);
            if other >= base {
                other += 1;
            }
            vocab[other].clone()
        }
        ValueKind::Name => typo(&vocab[base], rng),
    }
}

/// A generated dataset and its planted matches.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

pub fn generate(spec: &SyntheticSpec) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocabs: Vec<Vec<String>> = spec
        .attributes
        .iter()
        .map(|a| vocabulary(a, &mut rng))
        .collect();
    let clustered = spec.clusters * spec.cluster_size;
    assert!(clustered <= spec.records, "clusters do not fit in the record count");
    let entities = spec.clusters + (spec.records - clustered);

    // (entity, values) per record, then shuffled so clusters are not adjacent
    let mut rows: Vec<(usize, Vec<String>)> = Vec::with_capacity(spec.records);
    for e in 0..entities {
        let base: Vec<usize> = vocabs.iter().map(|v| rng.gen_range(0..v.len())).collect();
        let copies = if e < spec.clusters { spec.cluster_size } else { 1 };
        for _ in 0..copies {
            let values = spec
                .attributes
                .iter()
                .zip(&vocabs)
                .zip(&base)
                .map(|((attr, vocab), &b)| {
                    if copies > 1 && rng.gen_bool(attr.corruption) {
                        corrupt(attr, vocab, b, &mut rng)
                    } else {
                        vocab[b].clone()
                    }
                })
                .collect();
            rows.push((e, values));
        }
    }
    rows.shuffle(&mut rng);

    let schema: Vec<String> = spec.attributes.iter().map(|a| a.name.clone()).collect();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); entities];
    let records: Vec<Record> = rows
        .into_iter()
        .enumerate()
        .map(|(i, (e, values))| {
            members[e].push(i as u32);
            Record::new(format!("r{i:05}"), values)
        })
        .collect();
    let mut pairs = Vec::new();
    for m in &members {
        for i in 0..m.len() {
            for j in (i + 1)..m.len() {
                pairs.push(PairKey::dedup(m[i], m[j]));
            }
        }
    }
    Synthetic {
        dataset: Dataset::dedup(schema, records).expect("generated records are well-formed"),
        truth: GroundTruth::from_pairs(pairs),
    }
}

/// 200 records over six token attributes of decreasing selectivity, one
/// exact-match predicate each; 60 duplicate pairs.
pub fn skyline_fixture(seed: u64) -> (SyntheticSpec, Vec<BlockingPredicate>) {
    let attrs = vec![
        AttributeSpec::new("a", 30, 0.05, ValueKind::Token),
        AttributeSpec::new("b", 40, 0.10, ValueKind::Token),
        AttributeSpec::new("c", 50, 0.15, ValueKind::Token),
        AttributeSpec::new("d", 80, 0.25, ValueKind::Token),
        AttributeSpec::new("e", 100, 0.35, ValueKind::Token),
        AttributeSpec::new("f", 150, 0.45, ValueKind::Token),
    ];
    let preds = attrs
        .iter()
        .map(|a| BlockingPredicate::new(a.name.clone(), BlockingFunction::ExactMatch))
        .collect();
    (
        SyntheticSpec {
            records: 200,
            clusters: 60,
            cluster_size: 2,
            attributes: attrs,
            seed,
        },
        preds,
    )
}

/// 2,000 records in clusters of 21, so about one pair in 101 is a match.
/// Three name attributes, each under exact match and Soundex.
pub fn imbalance_fixture(seed: u64) -> (SyntheticSpec, Vec<BlockingPredicate>) {
    let attrs = vec![
        AttributeSpec::new("given", 300, 0.3, ValueKind::Name),
        AttributeSpec::new("surname", 400, 0.3, ValueKind::Name),
        AttributeSpec::new("city", 40, 0.1, ValueKind::Name),
    ];
    let preds = crate::blocking::predicate_universe(
        &attrs.iter().map(|a| a.name.clone()).collect::<Vec<_>>(),
        &[BlockingFunction::ExactMatch, BlockingFunction::Soundex],
    );
    (
        SyntheticSpec {
            records: 2000,
            clusters: 95,
            cluster_size: 21,
            attributes: attrs,
            seed,
        },
        preds,
    )
}
