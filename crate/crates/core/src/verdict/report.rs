//! Structured and human-readable report documents.
//!
//! The structured report is a single JSON document with the top-level keys
//! `config, events, exclusions, annex, summary, per_threshold`. Output is
//! byte-deterministic for identical inputs; re-reading a structured report
//! and re-aggregating its events reproduces the summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::OracleConfig;
use crate::filters::ExclusionTag;
use crate::matching::MatchEvent;

use super::{MetricsSummary, VerdictLedger};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub summary: MetricsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Arithmetic mean over thresholds with a defined value.
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: OracleConfig,
    pub events: Vec<MatchEvent>,
    pub exclusions: Vec<ExclusionTag>,
    pub annex: Vec<MatchEvent>,
    pub summary: MetricsSummary,
    pub per_threshold: Option<SweepReport>,
}

impl Report {
    pub fn new(ledger: VerdictLedger, summary: MetricsSummary, sweep: Option<SweepReport>) -> Self {
        Report {
            config: ledger.config_echo,
            events: ledger.events,
            exclusions: ledger.exclusions,
            annex: ledger.annex,
            summary,
            per_threshold: sweep,
        }
    }

    /// Reconstructs the ledger view of this report, for re-aggregation.
    pub fn to_ledger(&self) -> VerdictLedger {
        VerdictLedger {
            events: self.events.clone(),
            exclusions: self.exclusions.clone(),
            annex: self.annex.clone(),
            config_echo: self.config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fixed-width table rendering; deterministic byte-for-byte.
    pub fn to_human(&self) -> String {
        let mut out = String::new();
        let s = &self.summary;
        let opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "undefined".to_string(),
        };
        out.push_str("verdict summary\n");
        let _ = writeln!(out, "  tp             {:>10}", s.tp);
        let _ = writeln!(out, "  fp             {:>10}", s.fp);
        let _ = writeln!(out, "  fn             {:>10}", s.fn_);
        let _ = writeln!(out, "  id_switches    {:>10}", s.id_switches);
        let _ = writeln!(out, "  gap_forgiven   {:>10}", s.gap_forgiven);
        let _ = writeln!(out, "  excluded       {:>10}", s.excluded);
        let _ = writeln!(out, "  annexed        {:>10}", s.annexed);
        let _ = writeln!(out, "  precision      {:>10}", opt(s.precision));
        let _ = writeln!(out, "  recall         {:>10}", opt(s.recall));
        let _ = writeln!(out, "  tid_s          {:>10}", opt(s.tid_s));
        let _ = writeln!(out, "  lgd_s          {:>10}", opt(s.lgd_s));
        let _ = writeln!(out, "  mean_tp_delay_s{:>10}", opt(s.mean_tp_delay_s));
        if !s.per_class.is_empty() {
            out.push_str("\nper class\n");
            let _ = writeln!(out, "  {:<16} {:>6} {:>6} {:>6}", "class", "tp", "fp", "fn");
            for (cls, counts) in &s.per_class {
                let _ = writeln!(
                    out,
                    "  {:<16} {:>6} {:>6} {:>6}",
                    cls, counts.tp, counts.fp, counts.fn_
                );
            }
        }
        if !self.exclusions.is_empty() {
            out.push_str("\nexclusions by reason\n");
            let mut by_reason: BTreeMap<String, u64> = BTreeMap::new();
            for tag in &self.exclusions {
                let key = format!(
                    "{} @ {}",
                    serde_json::to_value(tag.reason)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    tag.stage
                );
                *by_reason.entry(key).or_insert(0) += 1;
            }
            for (key, count) in by_reason {
                let _ = writeln!(out, "  {key:<40} {count:>6}");
            }
        }
        if let Some(sweep) = &self.per_threshold {
            out.push_str("\nthreshold sweep\n");
            let _ = writeln!(
                out,
                "  {:<10} {:>8} {:>8} {:>8} {:>12} {:>12}",
                "tau", "tp", "fp", "fn", "precision", "recall"
            );
            for p in &sweep.points {
                let _ = writeln!(
                    out,
                    "  {:<10.6} {:>8} {:>8} {:>8} {:>12} {:>12}",
                    p.tau,
                    p.summary.tp,
                    p.summary.fp,
                    p.summary.fn_,
                    opt(p.summary.precision),
                    opt(p.summary.recall)
                );
            }
            let _ = writeln!(out, "  mean precision {}", opt(sweep.mean_precision));
            let _ = writeln!(out, "  mean recall    {}", opt(sweep.mean_recall));
        }
        out
    }
}

pub fn sweep_report(points: Vec<SweepPoint>) -> SweepReport {
    let mean_of = |pick: fn(&MetricsSummary) -> Option<f64>| {
        let defined: Vec<f64> = points.iter().filter_map(|p| pick(&p.summary)).collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    };
    SweepReport {
        mean_precision: mean_of(|s| s.precision),
        mean_recall: mean_of(|s| s.recall),
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verdict::aggregate;

    #[test]
    fn empty_report_round_trips_and_reaggregates() {
        let ledger = VerdictLedger {
            events: Vec::new(),
            exclusions: Vec::new(),
            annex: Vec::new(),
            config_echo: OracleConfig::default(),
        };
        let summary = aggregate(&ledger);
        let report = Report::new(ledger, summary.clone(), None);
        let json = report.to_json();
        let parsed = Report::from_json(&json).unwrap();
        assert_eq!(parsed, report);
        assert_eq!(aggregate(&parsed.to_ledger()), summary);
        for key in ["\"config\"", "\"events\"", "\"exclusions\"", "\"annex\"", "\"summary\"", "\"per_threshold\""] {
            assert!(json.contains(key), "missing {key}");
        }
    }

    #[test]
    fn human_rendering_is_deterministic_and_mentions_undefined() {
        let ledger = VerdictLedger {
            events: Vec::new(),
            exclusions: Vec::new(),
            annex: Vec::new(),
            config_echo: OracleConfig::default(),
        };
        let summary = aggregate(&ledger);
        let report = Report::new(ledger, summary, None);
        let a = report.to_human();
        let b = report.to_human();
        assert_eq!(a, b);
        assert!(a.contains("undefined"));
    }
}
