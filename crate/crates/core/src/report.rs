//! Structured run reports. Output is deterministic for a given result:
//! fixed field order, points in skyline order, no timestamps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::blocking::BlockingPredicate;
use crate::datamodel::GroundTruth;
use crate::index::BlockingIndex;
use crate::learner::{SkylineResult, TraceEvent};
use crate::metrics::{exact_metrics, ExactMetrics, MetricsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub scheme: String,
    pub ary: usize,
    pub empirical_pc: f64,
    pub empirical_pq: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<ExactMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub seed: u64,
    pub budget: usize,
    pub labels_used: usize,
    pub rounds: usize,
    pub asl_invocations: usize,
    pub candidates_evaluated: usize,
    pub aborted: bool,
    pub predicates: Vec<String>,
    pub points: Vec<PointReport>,
    pub trace: Vec<TraceEvent>,
}

impl RunReport {
    /// Builds a report; exact metrics are filled in when `truth` is given.
    pub fn new(
        index: &BlockingIndex,
        result: &SkylineResult,
        seed: u64,
        budget: usize,
        truth: Option<&GroundTruth>,
    ) -> Result<Self, MetricsError> {
        let preds = index.predicates();
        let points = result
            .points
            .iter()
            .map(|p| {
                Ok(PointReport {
                    scheme: p.scheme.render(preds),
                    ary: p.scheme.ary(),
                    empirical_pc: p.pc,
                    empirical_pq: p.pq,
                    exact: truth.map(|t| exact_metrics(index, &p.scheme, t)).transpose()?,
                })
            })
            .collect::<Result<Vec<_>, MetricsError>>()?;
        Ok(Self {
            algorithm: result.algorithm.to_string(),
            seed,
            budget,
            labels_used: result.labels_used,
            rounds: result.rounds,
            asl_invocations: result.asl_invocations,
            candidates_evaluated: result.candidates_evaluated,
            aborted: result.aborted,
            predicates: preds.iter().map(BlockingPredicate::to_string).collect(),
            points,
            trace: result.trace.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_json().as_bytes())?;
        out.write_all(b"\n")
    }

    /// One row per point: scheme, empirical and exact coordinates.
    pub fn write_points_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scheme",
            "empirical_pc",
            "empirical_pq",
            "pc",
            "pq",
            "rr",
            "fm",
        ])?;
        for p in &self.points {
            let exact = |f: fn(&ExactMetrics) -> f64| p.exact.as_ref().map(|m| f(m).to_string()).unwrap_or_default();
            w.write_record([
                p.scheme.clone(),
                p.empirical_pc.to_string(),
                p.empirical_pq.to_string(),
                exact(|m| m.pc),
                exact(|m| m.pq),
                exact(|m| m.rr),
                exact(|m| m.fm),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
