//! Dominance, skylines, and the scheme learners: ASL (and its random-sampling
//! variant), grid-based Naive-Sky and Active-Sky, and progressive Pro-Sky.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::BlockingIndex;
use crate::metrics::{empirical_point, MetricsError};
use crate::oracle::{OracleError, OracleSession};
use crate::sampling::{active_round, random_sample, FeatureVector, SamplerState, TrainingSet};
use crate::scheme::{Scheme, SchemePoint};

/// Slack for comparing a PC estimate against a threshold.
const PC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("cannot compare an exact point with an empirical one")]
    ProvenanceMismatch,
    #[error("no scheme could be learned: the training set never contained a match")]
    NoScheme,
    #[error("no result: {0}")]
    NoResult(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("labeling aborted")]
    Aborted,
    #[error(transparent)]
    Oracle(OracleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl From<OracleError> for LearnError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Aborted => LearnError::Aborted,
            other => LearnError::Oracle(other),
        }
    }
}

/// `a` is at least as good in both dimensions and strictly better in one.
pub fn dominates(a: &SchemePoint, b: &SchemePoint) -> Result<bool, LearnError> {
    if a.provenance != b.provenance {
        return Err(LearnError::ProvenanceMismatch);
    }
    Ok(a.pc >= b.pc && a.pq >= b.pq && (a.pc > b.pc || a.pq > b.pq))
}

/// Non-dominated subset, ordered by ascending PC. Points with identical
/// coordinates collapse to the smallest scheme.
pub fn skyline_of(points: impl IntoIterator<Item = SchemePoint>) -> Vec<SchemePoint> {
    let mut pts: Vec<SchemePoint> = points.into_iter().collect();
    pts.sort_by(|a, b| {
        b.pc.total_cmp(&a.pc)
            .then(b.pq.total_cmp(&a.pq))
            .then_with(|| a.scheme.cmp(&b.scheme))
    });
    let mut best_pq = f64::NEG_INFINITY;
    let mut out = Vec::new();
    for p in pts {
        if p.pq > best_pq {
            best_pq = p.pq;
            out.push(p);
        }
    }
    out.reverse();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    DominatedSpace,
    SkylineSpace,
    DominatingSpace,
    Equal,
}

pub fn classify_region(candidate: &SchemePoint, anchor: &SchemePoint) -> Result<Region, LearnError> {
    if candidate.provenance != anchor.provenance {
        return Err(LearnError::ProvenanceMismatch);
    }
    Ok(if candidate.pc == anchor.pc && candidate.pq == anchor.pq {
        Region::Equal
    } else if dominates(candidate, anchor)? {
        Region::DominatingSpace
    } else if dominates(anchor, candidate)? {
        Region::DominatedSpace
    } else {
        Region::SkylineSpace
    })
}

/// Empirical points of `schemes` over `t`.
pub fn evaluate(schemes: &[Scheme], t: &TrainingSet) -> Result<Vec<SchemePoint>, MetricsError> {
    schemes.iter().map(|s| empirical_point(s, t)).collect()
}

/// Highest empirical PQ among schemes with empirical PC ≥ ε; ties go to
/// higher PC, then the smaller scheme.
pub fn find_optimal_scheme(
    schemes: &[Scheme],
    t: &TrainingSet,
    epsilon: f64,
) -> Result<Option<SchemePoint>, MetricsError> {
    let pts = evaluate(schemes, t)?;
    Ok(pts
        .into_iter()
        .filter(|p| p.pc + PC_TOLERANCE >= epsilon)
        .min_by(|a, b| {
            b.pq.total_cmp(&a.pq)
                .then(b.pc.total_cmp(&a.pc))
                .then_with(|| a.scheme.cmp(&b.scheme))
        }))
}

/// Highest empirical PC; ties go to higher PQ, then the smaller scheme.
pub fn find_approximate_scheme(
    schemes: &[Scheme],
    t: &TrainingSet,
) -> Result<Option<SchemePoint>, MetricsError> {
    let pts = evaluate(schemes, t)?;
    Ok(pts.into_iter().min_by(|a, b| {
        b.pc.total_cmp(&a.pc)
            .then(b.pq.total_cmp(&a.pq))
            .then_with(|| a.scheme.cmp(&b.scheme))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingStrategy {
    Active,
    Random,
}

/// Learner selection and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Algorithm {
    Asl {
        epsilon: f64,
        k: usize,
    },
    /// ASL with uniform random sampling in place of active sampling.
    Rsl {
        epsilon: f64,
        k: usize,
    },
    NaiveSky {
        delta: f64,
        /// Per-round sample size; derived from the budget when absent.
        k: Option<usize>,
        /// Expected extension depth used to derive `k`.
        depth: usize,
    },
    ActiveSky {
        delta: f64,
        k: Option<usize>,
        depth: usize,
    },
    ProSky {
        max_ary: usize,
    },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Asl { .. } => "asl",
            Algorithm::Rsl { .. } => "rsl",
            Algorithm::NaiveSky { .. } => "naive_sky",
            Algorithm::ActiveSky { .. } => "active_sky",
            Algorithm::ProSky { .. } => "pro_sky",
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: String| Err(LearnError::InvalidParameter(m));
        match *self {
            Algorithm::Asl { epsilon, k } | Algorithm::Rsl { epsilon, k } => {
                if !(epsilon > 0.0 && epsilon <= 1.0) {
                    return bad(format!("epsilon must be in (0, 1], got {epsilon}"));
                }
                if k == 0 {
                    return bad("k must be at least 1".into());
                }
            }
            Algorithm::NaiveSky { delta, k, depth } | Algorithm::ActiveSky { delta, k, depth } => {
                if !(delta > 0.0 && delta <= 1.0) {
                    return bad(format!("delta must be in (0, 1], got {delta}"));
                }
                if k == Some(0) {
                    return bad("k must be at least 1".into());
                }
                if depth == 0 {
                    return bad("depth must be at least 1".into());
                }
            }
            Algorithm::ProSky { max_ary } => {
                if max_ary == 0 {
                    return bad("max ary must be at least 1".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Training set has no match yet; candidates kept as they are.
    NotEvaluable,
    /// A feasible scheme was found; candidates extended by conjunction.
    Optimal,
    /// Nothing feasible; the best-PC scheme was extended by disjunction.
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    AslRound {
        run: usize,
        round: usize,
        candidates: usize,
        new_labels: usize,
        labels: usize,
        branch: Branch,
        scheme: Option<Scheme>,
    },
    AslRun {
        run: usize,
        epsilon: f64,
        budget: usize,
        scheme: Option<Scheme>,
        pc: Option<f64>,
        labels: usize,
    },
    ProRound {
        round: usize,
        sampled_schemes: usize,
        new_labels: usize,
        labels: usize,
        pool: usize,
        skyline: usize,
        added: usize,
        replaced: usize,
        discarded: usize,
    },
}

/// Outcome of one learner run.
#[derive(Debug, Clone)]
pub struct SkylineResult {
    pub algorithm: &'static str,
    /// Non-dominated points with empirical coordinates, ascending PC.
    pub points: Vec<SchemePoint>,
    pub candidates_evaluated: usize,
    pub labels_used: usize,
    pub asl_invocations: usize,
    pub rounds: usize,
    pub aborted: bool,
    pub trace: Vec<TraceEvent>,
    /// Union of all labeled data the run collected.
    pub training: TrainingSet,
}

/// Snapshot handed to an observer after every completed round.
#[derive(Debug, Clone)]
pub struct Progress {
    pub algorithm: &'static str,
    pub labels_used: usize,
    pub round: usize,
    pub points: Vec<SchemePoint>,
}

pub type Observer<'a> = &'a mut dyn FnMut(&Progress);

/// Mixes a run seed with a slot number.
pub fn derive_seed(seed: u64, slot: u64) -> u64 {
    let mut z = seed ^ slot.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn canonical_set(schemes: impl IntoIterator<Item = Scheme>) -> Vec<Scheme> {
    schemes.into_iter().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Labels fresh vectors into `t`. Stops early (returning the error) on
/// abort or oracle failure; vectors labeled before that are kept.
fn label_into(
    index: &BlockingIndex,
    session: &mut OracleSession,
    vectors: Vec<FeatureVector>,
    t: &mut TrainingSet,
) -> Result<usize, LearnError> {
    let mut n = 0;
    for fv in vectors {
        let label = session.label(index.dataset(), fv.pair)?;
        if t.insert(fv, label) {
            n += 1;
        }
    }
    Ok(n)
}

/// Result of a single ASL invocation.
#[derive(Debug, Clone)]
pub struct AslOutcome {
    pub point: Option<SchemePoint>,
    pub training: TrainingSet,
    pub labels_used: usize,
    pub rounds: usize,
    pub aborted: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct AslParams {
    pub epsilon: f64,
    pub k: usize,
    /// Labels this invocation may spend (further capped by the session).
    pub budget: usize,
    pub seed: u64,
    pub strategy: SamplingStrategy,
}

/// Active scheme learning: seed sample, then rounds of balanced sampling,
/// labeling, and branching (conjunction after a feasible optimum,
/// disjunction from the best-PC scheme otherwise). Returns the last selected
/// scheme. Aborts are reported through `aborted` with whatever was learned.
pub fn asl(
    index: &BlockingIndex,
    session: &mut OracleSession,
    params: &AslParams,
    run: usize,
    trace: &mut Vec<TraceEvent>,
) -> Result<AslOutcome, LearnError> {
    let width = index.width();
    let budget = params.budget.min(session.remaining());
    let start_used = session.used();
    let mut state = SamplerState::new(params.seed);
    let mut t = TrainingSet::new();
    let mut candidates = Scheme::singletons(width);
    let mut current: Option<SchemePoint> = None;
    let mut rounds = 0;
    let mut aborted = false;

    let spent = |s: &OracleSession| s.used() - start_used;
    let finish = |t: TrainingSet, current: Option<SchemePoint>, used, rounds, aborted| {
        Ok(AslOutcome {
            point: current,
            training: t,
            labels_used: used,
            rounds,
            aborted,
        })
    };

    let seed = random_sample(index, params.k.min(budget), &mut state);
    match label_into(index, session, seed, &mut t) {
        Ok(_) => {}
        Err(LearnError::Aborted) => aborted = true,
        Err(e) => return Err(e),
    }
    while !aborted && spent(session) < budget {
        let limit = budget - spent(session);
        let vectors = match params.strategy {
            SamplingStrategy::Active => {
                active_round(index, &candidates, params.k, limit, t.bits(), &mut state).vectors
            }
            SamplingStrategy::Random => {
                random_sample(index, (params.k * candidates.len()).min(limit), &mut state)
            }
        };
        rounds += 1;
        let before = candidates.clone();
        let new_labels = match label_into(index, session, vectors, &mut t) {
            Ok(n) => n,
            Err(LearnError::Aborted) => {
                aborted = true;
                0
            }
            Err(e) => return Err(e),
        };
        let branch = if t.match_count() == 0 {
            Branch::NotEvaluable
        } else if let Some(p) = find_optimal_scheme(&candidates, &t, params.epsilon)? {
            candidates = canonical_set(candidates.iter().map(|c| p.scheme.conjoin(c).expect("same universe")));
            current = Some(p);
            Branch::Optimal
        } else {
            let p = find_approximate_scheme(&candidates, &t)?.expect("candidates non-empty");
            candidates = canonical_set(candidates.iter().map(|c| p.scheme.disjoin(c).expect("same universe")));
            current = Some(p);
            Branch::Approximate
        };
        trace.push(TraceEvent::AslRound {
            run,
            round: rounds,
            candidates: candidates.len(),
            new_labels,
            labels: spent(session),
            branch,
            scheme: current.as_ref().map(|p| p.scheme.clone()),
        });
        // sampling exhausted and branching no longer changes anything
        if new_labels == 0 && candidates == before {
            break;
        }
    }
    // the returned point carries coordinates on the final training set
    if let Some(p) = current.take() {
        current = Some(empirical_point(&p.scheme, &t)?);
    }
    trace.push(TraceEvent::AslRun {
        run,
        epsilon: params.epsilon,
        budget,
        scheme: current.as_ref().map(|p| p.scheme.clone()),
        pc: current.as_ref().map(|p| p.pc),
        labels: spent(session),
    });
    finish(t, current, spent(session), rounds, aborted)
}

fn round_grid(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Per-round sample size for the grid learners.
pub fn grid_sample_size(budget: usize, delta: f64, depth: usize, predicates: usize) -> usize {
    ((budget as f64 * delta) / (depth * predicates) as f64).floor().max(1.0) as usize
}

fn slice_budget(budget: usize, delta: f64) -> usize {
    (budget as f64 * delta + 1e-9).floor() as usize
}

/// Runs one learner against `session`.
pub fn learn(
    index: &BlockingIndex,
    session: &mut OracleSession,
    algorithm: &Algorithm,
    seed: u64,
    observer: Option<Observer<'_>>,
) -> Result<SkylineResult, LearnError> {
    algorithm.validate()?;
    let mut noop = |_: &Progress| {};
    let observer: Observer<'_> = match observer {
        Some(o) => o,
        None => &mut noop,
    };
    match *algorithm {
        Algorithm::Asl { epsilon, k } => single_asl(index, session, epsilon, k, seed, SamplingStrategy::Active, "asl", observer),
        Algorithm::Rsl { epsilon, k } => single_asl(index, session, epsilon, k, seed, SamplingStrategy::Random, "rsl", observer),
        Algorithm::NaiveSky { delta, k, depth } => grid_sky(index, session, delta, k, depth, seed, false, observer),
        Algorithm::ActiveSky { delta, k, depth } => grid_sky(index, session, delta, k, depth, seed, true, observer),
        Algorithm::ProSky { max_ary } => pro_sky(index, session, max_ary, seed, observer),
    }
}

#[allow(clippy::too_many_arguments)]
fn single_asl(
    index: &BlockingIndex,
    session: &mut OracleSession,
    epsilon: f64,
    k: usize,
    seed: u64,
    strategy: SamplingStrategy,
    name: &'static str,
    observer: Observer<'_>,
) -> Result<SkylineResult, LearnError> {
    let mut trace = Vec::new();
    let params = AslParams {
        epsilon,
        k,
        budget: session.remaining(),
        seed,
        strategy,
    };
    let out = asl(index, session, &params, 0, &mut trace)?;
    let points: Vec<SchemePoint> = out.point.into_iter().collect();
    if points.is_empty() && !out.aborted {
        return Err(LearnError::NoScheme);
    }
    observer(&Progress {
        algorithm: name,
        labels_used: out.labels_used,
        round: out.rounds,
        points: points.clone(),
    });
    Ok(SkylineResult {
        algorithm: name,
        points,
        candidates_evaluated: count_candidates(&trace),
        labels_used: out.labels_used,
        asl_invocations: 1,
        rounds: out.rounds,
        aborted: out.aborted,
        trace,
        training: out.training,
    })
}

fn count_candidates(trace: &[TraceEvent]) -> usize {
    trace
        .iter()
        .map(|e| match e {
            TraceEvent::AslRound { candidates, .. } => *candidates,
            _ => 0,
        })
        .sum()
}

/// Naive-Sky (`adaptive = false`) runs ASL at ε = Δ, 2Δ, … ≤ 1. Active-Sky
/// (`adaptive = true`) jumps to the learned scheme's PC + Δ instead, never
/// moving backwards. Each ASL call gets a budget slice of budget·Δ. Slices
/// run one after another so the label log order is reproducible.
#[allow(clippy::too_many_arguments)]
fn grid_sky(
    index: &BlockingIndex,
    session: &mut OracleSession,
    delta: f64,
    k: Option<usize>,
    depth: usize,
    seed: u64,
    adaptive: bool,
    observer: Observer<'_>,
) -> Result<SkylineResult, LearnError> {
    let name = if adaptive { "active_sky" } else { "naive_sky" };
    let budget = session.remaining();
    let slice = slice_budget(budget, delta);
    let k = k.unwrap_or_else(|| grid_sample_size(budget, delta, depth, index.width() as usize));
    let start_used = session.used();
    let mut trace = Vec::new();
    let mut learned: Vec<Scheme> = Vec::new();
    let mut union = TrainingSet::new();
    let mut rounds = 0;
    let mut invocations = 0;
    let mut aborted = false;
    let mut grid_step = 1u64;
    let mut epsilon = round_grid(delta);
    while epsilon <= 1.0 + 1e-9 && !aborted {
        let params = AslParams {
            epsilon,
            k,
            budget: slice,
            // keyed by grid position so both variants share a slice's draws
            seed: derive_seed(seed, ((epsilon / delta) + 1e-9).round() as u64),
            strategy: SamplingStrategy::Active,
        };
        let out = asl(index, session, &params, invocations, &mut trace)?;
        invocations += 1;
        rounds += out.rounds;
        aborted = out.aborted;
        union.extend_from(&out.training);
        let next_grid = round_grid((grid_step + 1) as f64 * delta);
        match out.point {
            Some(p) => {
                if !learned.contains(&p.scheme) {
                    learned.push(p.scheme.clone());
                }
                epsilon = if adaptive {
                    round_grid(p.pc + delta).max(next_grid)
                } else {
                    next_grid
                };
            }
            None => epsilon = next_grid,
        }
        // keep the grid position in step with ε for the no-regress guard
        grid_step = ((epsilon / delta) + 1e-9).floor() as u64;
        let points = merged_skyline(&learned, &union)?;
        observer(&Progress {
            algorithm: name,
            labels_used: session.used() - start_used,
            round: invocations,
            points,
        });
        if session.remaining() == 0 {
            break;
        }
    }
    let points = merged_skyline(&learned, &union)?;
    if points.is_empty() && !aborted {
        return Err(LearnError::NoScheme);
    }
    Ok(SkylineResult {
        algorithm: name,
        points,
        candidates_evaluated: count_candidates(&trace),
        labels_used: session.used() - start_used,
        asl_invocations: invocations,
        rounds,
        aborted,
        trace,
        training: union,
    })
}

fn merged_skyline(schemes: &[Scheme], t: &TrainingSet) -> Result<Vec<SchemePoint>, LearnError> {
    if schemes.is_empty() || t.match_count() == 0 {
        return Ok(Vec::new());
    }
    Ok(skyline_of(evaluate(schemes, t)?))
}

/// Progressive learning. Starts from the single predicates; every round
/// samples the current candidates, re-estimates the whole cumulative pool on
/// the full training set, takes its skyline, and extends each skyline scheme
/// with every unused predicate by ∧ and ∨ (up to `max_ary` predicates).
/// Extensions that dominate their parent replace it, incomparable ones are
/// added, the rest are dropped. When a round yields no new candidates the
/// skyline itself is resampled; the run ends when the budget is spent or a
/// round adds neither labels nor candidates.
pub fn pro_sky(
    index: &BlockingIndex,
    session: &mut OracleSession,
    max_ary: usize,
    seed: u64,
    observer: Observer<'_>,
) -> Result<SkylineResult, LearnError> {
    let width = index.width();
    let budget = session.remaining();
    let k = budget / (2 * max_ary * width as usize);
    if k == 0 {
        return Err(LearnError::NoResult(format!(
            "budget {budget} is below one round of 2·{max_ary}·{width} labels"
        )));
    }
    let start_used = session.used();
    let spent = |s: &OracleSession| s.used() - start_used;
    let mut state = SamplerState::new(seed);
    let mut t = TrainingSet::new();
    let mut pool: BTreeSet<Scheme> = Scheme::singletons(width).into_iter().collect();
    let mut evaluated: BTreeSet<Scheme> = pool.clone();
    let mut to_sample: Vec<Scheme> = pool.iter().cloned().collect();
    let mut skyline: Vec<SchemePoint> = Vec::new();
    let mut trace = Vec::new();
    let mut rounds = 0;
    let mut aborted = false;

    let seed_sample = random_sample(index, k.min(budget), &mut state);
    match label_into(index, session, seed_sample, &mut t) {
        Ok(_) => {}
        Err(LearnError::Aborted) => aborted = true,
        Err(e) => return Err(e),
    }
    while !aborted && spent(session) < budget {
        let limit = budget - spent(session);
        let round = active_round(index, &to_sample, k, limit, t.bits(), &mut state);
        rounds += 1;
        let sampled_schemes = to_sample.len();
        let new_labels = match label_into(index, session, round.vectors, &mut t) {
            Ok(n) => n,
            Err(LearnError::Aborted) => {
                aborted = true;
                0
            }
            Err(e) => return Err(e),
        };
        if t.match_count() == 0 {
            if new_labels == 0 {
                break;
            }
            continue;
        }
        let pool_vec: Vec<Scheme> = pool.iter().cloned().collect();
        skyline = skyline_of(evaluate(&pool_vec, &t)?);
        // what this round's samples support; extensions are reported once sampled
        let round_skyline = skyline.clone();

        let (mut added, mut replaced, mut discarded) = (0, 0, 0);
        let mut next: BTreeMap<Scheme, ()> = BTreeMap::new();
        if !aborted {
            for anchor in &skyline {
                for p in 0..width {
                    if anchor.scheme.contains_predicate(p) {
                        continue;
                    }
                    let single = Scheme::predicate(p, width);
                    for cand in [
                        anchor.scheme.conjoin(&single).expect("same universe"),
                        anchor.scheme.disjoin(&single).expect("same universe"),
                    ] {
                        if cand.ary() > max_ary || pool.contains(&cand) {
                            continue;
                        }
                        evaluated.insert(cand.clone());
                        let point = empirical_point(&cand, &t)?;
                        match classify_region(&point, anchor)? {
                            Region::DominatingSpace => {
                                if pool.remove(&anchor.scheme) {
                                    replaced += 1;
                                }
                                pool.insert(cand.clone());
                                next.insert(cand, ());
                            }
                            Region::SkylineSpace => {
                                added += 1;
                                pool.insert(cand.clone());
                                next.insert(cand, ());
                            }
                            Region::DominatedSpace | Region::Equal => discarded += 1,
                        }
                    }
                }
            }
        }
        let pool_vec: Vec<Scheme> = pool.iter().cloned().collect();
        skyline = skyline_of(evaluate(&pool_vec, &t)?);
        // sampling exhausted and nothing left to extend: fixpoint
        let stalled = new_labels == 0 && next.is_empty();
        to_sample = if next.is_empty() {
            skyline.iter().map(|p| p.scheme.clone()).collect()
        } else {
            next.into_keys().collect()
        };
        trace.push(TraceEvent::ProRound {
            round: rounds,
            sampled_schemes,
            new_labels,
            labels: spent(session),
            pool: pool.len(),
            skyline: round_skyline.len(),
            added,
            replaced,
            discarded,
        });
        observer(&Progress {
            algorithm: "pro_sky",
            labels_used: spent(session),
            round: rounds,
            points: round_skyline,
        });
        if stalled {
            break;
        }
    }
    if t.match_count() > 0 {
        let pool_vec: Vec<Scheme> = pool.iter().cloned().collect();
        skyline = skyline_of(evaluate(&pool_vec, &t)?);
    }
    if skyline.is_empty() && !aborted {
        return Err(LearnError::NoScheme);
    }
    Ok(SkylineResult {
        algorithm: "pro_sky",
        points: skyline,
        candidates_evaluated: evaluated.len(),
        labels_used: spent(session),
        asl_invocations: 0,
        rounds,
        aborted,
        trace,
        training: t,
    })
}

/// Orders points by (pc, pq) then scheme; used for stable output.
pub fn point_order(a: &SchemePoint, b: &SchemePoint) -> Ordering {
    a.pc.total_cmp(&b.pc)
        .then(a.pq.total_cmp(&b.pq))
        .then_with(|| a.scheme.cmp(&b.scheme))
}

/// Exact-coordinate skyline of `schemes`.
pub fn exact_skyline(
    index: &BlockingIndex,
    schemes: &[Scheme],
    truth: &crate::datamodel::GroundTruth,
) -> Result<Vec<SchemePoint>, MetricsError> {
    let pts = schemes
        .iter()
        .map(|s| crate::metrics::exact_point(index, s, truth))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(skyline_of(pts))
}
