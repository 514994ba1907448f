//! Experiment orchestration: constraint-satisfaction (CS) estimation over
//! repeated seeded runs, label-cost sweeps, and comparison of learned
//! skylines against fixed baseline schemes.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::GroundTruth;
use crate::index::BlockingIndex;
use crate::learner::{dominates, learn, Algorithm, LearnError, SkylineResult};
use crate::metrics::{exact_metrics, exact_point, ExactMetrics, MetricsError};
use crate::oracle::OracleSession;
use crate::scheme::Scheme;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("budget step must be at least 1")]
    ZeroStep,
    #[error("target CS must be in (0, 1], got {0}")]
    BadTarget(f64),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// One algorithm configuration run `repetitions` times with seeds
/// `base_seed..base_seed + repetitions`, each against a fresh ground-truth
/// oracle with `budget` labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub algorithm: Algorithm,
    pub budget: usize,
    pub repetitions: usize,
    pub base_seed: u64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.repetitions == 0 {
            return Err(PlanError::NoRepetitions);
        }
        self.algorithm.validate()?;
        Ok(())
    }
}

/// What one run produced, by canonical identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Sorted, de-duplicated schemes of the learned skyline (one for ASL).
    Schemes(Vec<Scheme>),
    /// The run errored or learned nothing.
    NoScheme,
}

impl Outcome {
    pub fn of(result: &Result<SkylineResult, LearnError>) -> Self {
        match result {
            Ok(r) if !r.points.is_empty() => {
                let mut s: Vec<Scheme> = r.points.iter().map(|p| p.scheme.clone()).collect();
                s.sort();
                s.dedup();
                Outcome::Schemes(s)
            }
            _ => Outcome::NoScheme,
        }
    }

    pub fn render(&self, index: &BlockingIndex) -> String {
        match self {
            Outcome::Schemes(s) => s
                .iter()
                .map(|x| x.render(index.predicates()))
                .collect::<Vec<_>>()
                .join(" | "),
            Outcome::NoScheme => "no-scheme".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsGroup {
    pub outcome: Outcome,
    pub count: usize,
    pub cs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsReport {
    pub runs: usize,
    /// Largest count first; ties by outcome order.
    pub groups: Vec<CsGroup>,
    /// Labels used per run, in seed order.
    pub labels_used: Vec<usize>,
}

impl CsReport {
    pub fn from_outcomes(outcomes: Vec<Outcome>, labels_used: Vec<usize>) -> Self {
        let runs = outcomes.len();
        let mut counts: BTreeMap<Outcome, usize> = BTreeMap::new();
        for o in outcomes {
            *counts.entry(o).or_default() += 1;
        }
        let mut groups: Vec<CsGroup> = counts
            .into_iter()
            .map(|(outcome, count)| CsGroup {
                outcome,
                count,
                cs: count as f64 / runs as f64,
            })
            .collect();
        groups.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.outcome.cmp(&b.outcome)));
        Self {
            runs,
            groups,
            labels_used,
        }
    }

    pub fn max_group(&self) -> Option<&CsGroup> {
        self.groups.first()
    }

    /// Highest CS among groups that learned something.
    pub fn max_cs(&self) -> f64 {
        self.groups
            .iter()
            .filter(|g| g.outcome != Outcome::NoScheme)
            .map(|g| g.cs)
            .fold(0.0, f64::max)
    }

    pub fn is_stable(&self, target: f64) -> bool {
        self.max_cs() + 1e-12 >= target
    }
}

/// Everything a ground-truth-backed experiment needs.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub index: Arc<BlockingIndex>,
    pub truth: Arc<GroundTruth>,
}

fn run_once(fx: &Fixture, algorithm: &Algorithm, budget: usize, seed: u64) -> Result<SkylineResult, LearnError> {
    let mut session = OracleSession::ground_truth(fx.truth.clone(), budget);
    learn(&fx.index, &mut session, algorithm, seed, None)
}

/// Runs the plan's repetitions in parallel and groups their outputs.
pub fn run_cs(fx: &Fixture, plan: &ExperimentPlan) -> Result<CsReport, PlanError> {
    plan.validate()?;
    let runs: Vec<(Outcome, usize)> = (0..plan.repetitions as u64)
        .into_par_iter()
        .map(|i| {
            let r = run_once(fx, &plan.algorithm, plan.budget, plan.base_seed + i);
            let used = r.as_ref().map(|r| r.labels_used).unwrap_or(0);
            (Outcome::of(&r), used)
        })
        .collect();
    let (outcomes, used) = runs.into_iter().unzip();
    Ok(CsReport::from_outcomes(outcomes, used))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub algorithm: Algorithm,
    pub start: usize,
    pub step: usize,
    pub cap: usize,
    pub repetitions: usize,
    pub base_seed: u64,
}

impl SweepPlan {
    pub fn new(algorithm: Algorithm, repetitions: usize, base_seed: u64) -> Self {
        Self {
            algorithm,
            start: 50,
            step: 50,
            cap: 10_000,
            repetitions,
            base_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepStep {
    pub budget: usize,
    pub max_cs: f64,
    pub max_labels_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelCost {
    /// First budget whose CS reached the target, and the most labels any
    /// run actually consumed at that budget.
    Reached { budget: usize, labels: usize },
    /// The cap was hit without reaching the target.
    Capped { cap: usize },
}

impl LabelCost {
    pub fn labels(&self) -> Option<usize> {
        match *self {
            LabelCost::Reached { labels, .. } => Some(labels),
            LabelCost::Capped { .. } => None,
        }
    }
}

impl fmt::Display for LabelCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelCost::Reached { budget, .. } => write!(f, "{budget}"),
            LabelCost::Capped { cap } => write!(f, "{cap}+"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub target_cs: f64,
    pub cost: LabelCost,
    /// CS curve up to and including the qualifying budget.
    pub steps: Vec<SweepStep>,
}

/// Raises the budget by `step` from `start` until the max CS reaches
/// `target_cs`, or reports the cap.
pub fn sweep_label_cost(fx: &Fixture, plan: &SweepPlan, target_cs: f64) -> Result<SweepReport, PlanError> {
    sweep_budgets(plan.start, plan.step, plan.cap, target_cs, |budget| {
        run_cs(
            fx,
            &ExperimentPlan {
                algorithm: plan.algorithm.clone(),
                budget,
                repetitions: plan.repetitions,
                base_seed: plan.base_seed,
            },
        )
    })
}

/// The sweep loop over any CS evaluation.
pub fn sweep_budgets(
    start: usize,
    step: usize,
    cap: usize,
    target_cs: f64,
    mut eval: impl FnMut(usize) -> Result<CsReport, PlanError>,
) -> Result<SweepReport, PlanError> {
    if !(target_cs > 0.0 && target_cs <= 1.0) {
        return Err(PlanError::BadTarget(target_cs));
    }
    if step == 0 {
        return Err(PlanError::ZeroStep);
    }
    let mut steps = Vec::new();
    let mut budget = start.max(1);
    while budget <= cap {
        let report = eval(budget)?;
        let max_labels_used = report.labels_used.iter().copied().max().unwrap_or(0);
        steps.push(SweepStep {
            budget,
            max_cs: report.max_cs(),
            max_labels_used,
        });
        if report.is_stable(target_cs) {
            return Ok(SweepReport {
                target_cs,
                cost: LabelCost::Reached {
                    budget,
                    labels: max_labels_used,
                },
                steps,
            });
        }
        budget += step;
    }
    Ok(SweepReport {
        target_cs,
        cost: LabelCost::Capped { cap },
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineFlag {
    /// Some skyline member is strictly better.
    Dominated,
    /// A skyline member has the same scheme or the same coordinates.
    Contained,
    /// The preset beats some skyline member.
    Dominating,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// `preset`, `skyline_max_fm`, or `asl`.
    pub kind: String,
    pub preset: String,
    pub scheme: String,
    pub metrics: Option<ExactMetrics>,
    pub flag: Option<BaselineFlag>,
}

/// Settings for the per-preset ASL run at ε = preset PC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineAsl {
    pub budget: usize,
    pub k: usize,
    pub seed: u64,
}

/// Rows comparing each named preset with the skyline: the preset itself
/// (flagged against the skyline's exact points), the skyline member with the
/// highest exact FM, and what ASL learns at the preset's PC as threshold.
pub fn compare_baselines(
    fx: &Fixture,
    skyline: &SkylineResult,
    presets: &[(String, Scheme)],
    asl: Option<BaselineAsl>,
) -> Result<Vec<ComparisonRow>, MetricsError> {
    let index = &fx.index;
    let preds = index.predicates();
    let sky: Vec<_> = skyline
        .points
        .iter()
        .map(|p| exact_point(index, &p.scheme, &fx.truth))
        .collect::<Result<_, _>>()?;
    let best = skyline
        .points
        .iter()
        .map(|p| Ok((p.scheme.clone(), exact_metrics(index, &p.scheme, &fx.truth)?)))
        .collect::<Result<Vec<_>, MetricsError>>()?
        .into_iter()
        .max_by(|a, b| a.1.fm.total_cmp(&b.1.fm).then_with(|| b.0.cmp(&a.0)));

    let mut rows = Vec::new();
    for (name, scheme) in presets {
        let m = exact_metrics(index, scheme, &fx.truth)?;
        let p = exact_point(index, scheme, &fx.truth)?;
        let flag = if sky.iter().any(|s| s.scheme == *scheme || (s.pc == p.pc && s.pq == p.pq)) {
            BaselineFlag::Contained
        } else if sky.iter().any(|s| dominates(s, &p) == Ok(true)) {
            BaselineFlag::Dominated
        } else if sky.iter().any(|s| dominates(&p, s) == Ok(true)) {
            BaselineFlag::Dominating
        } else {
            BaselineFlag::Incomparable
        };
        rows.push(ComparisonRow {
            kind: "preset".into(),
            preset: name.clone(),
            scheme: scheme.render(preds),
            metrics: Some(m),
            flag: Some(flag),
        });
        if let Some((s, bm)) = &best {
            rows.push(ComparisonRow {
                kind: "skyline_max_fm".into(),
                preset: name.clone(),
                scheme: s.render(preds),
                metrics: Some(*bm),
                flag: None,
            });
        }
        if let Some(cfg) = asl {
            let algorithm = Algorithm::Asl {
                epsilon: m.pc.max(f64::MIN_POSITIVE),
                k: cfg.k,
            };
            let learned = run_once(fx, &algorithm, cfg.budget, cfg.seed)
                .ok()
                .and_then(|r| r.points.first().map(|p| p.scheme.clone()));
            let (scheme, metrics) = match learned {
                Some(s) => (s.render(preds), Some(exact_metrics(index, &s, &fx.truth)?)),
                None => ("no-scheme".to_string(), None),
            };
            rows.push(ComparisonRow {
                kind: "asl".into(),
                preset: name.clone(),
                scheme,
                metrics,
                flag: None,
            });
        }
    }
    Ok(rows)
}

/// Writes comparison rows as delimited text: kind, preset, scheme, pc, pq,
/// rr, fm, flag.
pub fn write_comparison_csv<W: std::io::Write>(rows: &[ComparisonRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "preset", "scheme", "pc", "pq", "rr", "fm", "flag"])?;
    for r in rows {
        let m = |f: fn(&ExactMetrics) -> f64| r.metrics.as_ref().map(|m| f(m).to_string()).unwrap_or_default();
        let flag = r
            .flag
            .map(|f| serde_json::to_value(f).expect("flag serializes").as_str().unwrap_or_default().to_string())
            .unwrap_or_default();
        w.write_record([
            r.kind.clone(),
            r.preset.clone(),
            r.scheme.clone(),
            m(|m| m.pc),
            m(|m| m.pq),
            m(|m| m.rr),
            m(|m| m.fm),
            flag,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(i: u32) -> Scheme {
        Scheme::predicate(i, 4)
    }

    #[test]
    fn cs_split_two_three_five() {
        let mut outcomes = vec![Outcome::Schemes(vec![s(0)]); 2];
        outcomes.extend(vec![Outcome::Schemes(vec![s(1)]); 3]);
        outcomes.extend(vec![Outcome::Schemes(vec![s(2)]); 5]);
        let r = CsReport::from_outcomes(outcomes, vec![0; 10]);
        let cs: Vec<f64> = r.groups.iter().map(|g| g.cs).collect();
        assert_eq!(cs, vec![0.5, 0.3, 0.2]);
        assert_eq!(r.max_cs(), 0.5);
        assert_eq!(r.groups.iter().map(|g| g.count).sum::<usize>(), 10);
    }

    #[test]
    fn no_scheme_never_qualifies() {
        let r = CsReport::from_outcomes(vec![Outcome::NoScheme; 4], vec![0; 4]);
        assert_eq!(r.groups.len(), 1);
        assert_eq!(r.groups[0].cs, 1.0);
        assert_eq!(r.max_cs(), 0.0);
        assert!(!r.is_stable(0.9));
    }

    #[test]
    fn label_cost_display() {
        assert_eq!(LabelCost::Capped { cap: 5000 }.to_string(), "5000+");
        assert_eq!(LabelCost::Reached { budget: 150, labels: 140 }.to_string(), "150");
    }
}
