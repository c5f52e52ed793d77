//! Aggregates the match-event ledger into counts, derived metrics, and the
//! final report.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::config::{FilterStage, MisclassPolicy, OracleConfig};
use crate::filters::ExclusionTag;
use crate::matching::{EventFlag, EventKind, MatchEvent};
use crate::model::{canonical_time_bits, Role};

pub mod report;

/// The complete, auditable record of one oracle run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLedger {
    pub events: Vec<MatchEvent>,
    pub exclusions: Vec<ExclusionTag>,
    /// Would-be FPs/FNs from unreliable detection-probability regions; never
    /// part of the headline counts.
    pub annex: Vec<MatchEvent>,
    pub config_echo: OracleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Aggregated counts and derived metrics. Ratios over an empty denominator
/// are reported as undefined (`null`), never coerced to 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub id_switches: u64,
    pub gap_forgiven: u64,
    pub excluded: u64,
    pub annexed: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Mean track-initialization duration over matched reference tracks,
    /// seconds.
    pub tid_s: Option<f64>,
    /// Mean longest-gap duration over matched reference tracks, seconds.
    pub lgd_s: Option<f64>,
    /// Mean latency over TPs; defined only under the availability basis.
    pub mean_tp_delay_s: Option<f64>,
    pub per_class: BTreeMap<String, ClassCounts>,
}

fn ratio(num: u64, denom: u64) -> Option<f64> {
    if denom == 0 {
        None
    } else {
        Some(num as f64 / denom as f64)
    }
}

/// True when the event is dropped from headline counts because one of its
/// members carries a post-matching exclusion tag.
fn post_tagged(ev: &MatchEvent, post_tags: &HashSet<(Role, &str, u64)>) -> bool {
    let t = canonical_time_bits(ev.timestamp);
    if let Some(id) = &ev.sut_id {
        if post_tags.contains(&(Role::Sut, id.as_str(), t)) {
            return true;
        }
    }
    if let Some(id) = &ev.res_id {
        if post_tags.contains(&(Role::Res, id.as_str(), t)) {
            return true;
        }
    }
    false
}

/// Latency that produced a shifted timestamp, recovered from the config so
/// that a report alone suffices to re-derive the delay metric. For a step
/// series the candidate latency must be consistent with its own acquisition
/// time.
fn latency_for_shifted(cfg: &OracleConfig, t_shifted: f64) -> f64 {
    if cfg.temporal.basis != crate::config::TimestampBasis::Availability {
        return 0.0;
    }
    if cfg.temporal.sut_latency_series.is_empty() {
        return cfg.temporal.sut_latency_s.get().unwrap_or(0.0);
    }
    for entry in &cfg.temporal.sut_latency_series {
        let candidate = entry[1];
        if cfg.latency_at(t_shifted - candidate) == candidate {
            return candidate;
        }
    }
    cfg.latency_at(t_shifted)
}

/// Pure aggregation of a ledger into a summary.
///
/// Track-level metrics are derived from the ledger itself: a reference
/// track's start is the earliest timestamp at which it appears in events or
/// exclusions, and gap durations use the track's own observed frame spacing.
/// The mean TP delay comes from the echoed temporal configuration, so
/// re-aggregating a re-read report reproduces the summary exactly.
pub fn aggregate(ledger: &VerdictLedger) -> MetricsSummary {
    let post_tags: HashSet<(Role, &str, u64)> = ledger
        .exclusions
        .iter()
        .filter(|tag| tag.stage == FilterStage::PostMatching)
        .map(|tag| (tag.role, tag.track_id.as_str(), canonical_time_bits(tag.timestamp)))
        .collect();

    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut id_switches = 0u64;
    let mut gap_forgiven = 0u64;
    let mut per_class: BTreeMap<String, ClassCounts> = BTreeMap::new();
    let mut delays: Vec<f64> = Vec::new();

    for ev in &ledger.events {
        if post_tagged(ev, &post_tags) {
            continue;
        }
        match ev.kind {
            EventKind::Tp => {
                tp += 1;
                if let Some(cls) = &ev.res_class {
                    per_class.entry(cls.clone()).or_default().tp += 1;
                }
                if ledger.config_echo.temporal.basis == crate::config::TimestampBasis::Availability
                {
                    delays.push(latency_for_shifted(&ledger.config_echo, ev.timestamp));
                }
            }
            EventKind::Fp => {
                fp += 1;
                if let Some(cls) = &ev.sut_class {
                    per_class.entry(cls.clone()).or_default().fp += 1;
                }
            }
            EventKind::Fn => {
                if ev.has_flag(EventFlag::GapForgiven) {
                    gap_forgiven += 1;
                } else {
                    fn_ += 1;
                    if let Some(cls) = &ev.res_class {
                        per_class.entry(cls.clone()).or_default().fn_ += 1;
                    }
                }
            }
            EventKind::IdSwitch => id_switches += 1,
        }
    }

    let (tid_s, lgd_s) = track_time_metrics(&ledger.events, &ledger.exclusions);
    let mean_tp_delay_s = if delays.is_empty() {
        None
    } else {
        Some(delays.iter().sum::<f64>() / delays.len() as f64)
    };

    MetricsSummary {
        tp,
        fp,
        fn_,
        id_switches,
        gap_forgiven,
        excluded: ledger.exclusions.len() as u64,
        annexed: ledger.annex.len() as u64,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        tid_s,
        lgd_s,
        mean_tp_delay_s,
        per_class,
    }
}

/// Mean track-initialization duration and mean longest-gap duration over
/// matched reference tracks (tracks with at least one TP).
fn track_time_metrics(
    events: &[MatchEvent],
    exclusions: &[ExclusionTag],
) -> (Option<f64>, Option<f64>) {
    #[derive(Default)]
    struct PerTrack {
        start: Option<f64>,
        first_tp: Option<f64>,
        grid: Vec<(usize, f64, EventKind, bool)>, // frame, t, kind, forgiven-irrelevant
    }
    let mut tracks: BTreeMap<&str, PerTrack> = BTreeMap::new();

    for ev in events {
        let Some(res_id) = &ev.res_id else { continue };
        let entry = tracks.entry(res_id).or_default();
        entry.start = Some(entry.start.map_or(ev.timestamp, |s: f64| s.min(ev.timestamp)));
        match ev.kind {
            EventKind::Tp => {
                entry.first_tp =
                    Some(entry.first_tp.map_or(ev.timestamp, |s: f64| s.min(ev.timestamp)));
                if let Some(frame) = ev.frame {
                    entry.grid.push((frame, ev.timestamp, EventKind::Tp, false));
                }
            }
            EventKind::Fn => {
                if let Some(frame) = ev.frame {
                    entry.grid.push((frame, ev.timestamp, EventKind::Fn, false));
                }
            }
            _ => {}
        }
    }
    for tag in exclusions {
        if tag.role == Role::Res {
            if let Some(entry) = tracks.get_mut(tag.track_id.as_str()) {
                entry.start = Some(entry.start.map_or(tag.timestamp, |s| s.min(tag.timestamp)));
            }
        }
    }

    let mut tids: Vec<f64> = Vec::new();
    let mut lgds: Vec<f64> = Vec::new();
    for entry in tracks.values_mut() {
        let Some(first_tp) = entry.first_tp else { continue };
        let start = entry.start.unwrap_or(first_tp);
        tids.push((first_tp - start).max(0.0));

        entry.grid.sort_by(|a, b| a.0.cmp(&b.0));
        // nominal frame spacing from this track's own grid events
        let mut dt = f64::INFINITY;
        for w in entry.grid.windows(2) {
            let span = w[1].1 - w[0].1;
            if span > 0.0 {
                dt = dt.min(span);
            }
        }
        if !dt.is_finite() {
            dt = 0.0;
        }
        let mut longest = 0.0f64;
        let mut run_start: Option<f64> = None;
        let mut run_end = 0.0f64;
        for &(_, t, kind, _) in entry.grid.iter() {
            if kind == EventKind::Fn {
                run_start.get_or_insert(t);
                run_end = t;
            } else {
                if let Some(s) = run_start.take() {
                    longest = longest.max(run_end - s + dt);
                }
            }
        }
        if let Some(s) = run_start {
            longest = longest.max(run_end - s + dt);
        }
        lgds.push(longest);
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    (mean(&tids), mean(&lgds))
}

/// Applies the misclassification policy to matched pairs with unequal class
/// labels (reachable only when the class gate is off): either flag the TP as
/// `wrong_class` or replace it with one FP and one FN.
pub fn classify_mismatch(events: Vec<MatchEvent>, policy: MisclassPolicy) -> Vec<MatchEvent> {
    let mut out = Vec::with_capacity(events.len());
    for mut ev in events {
        let mismatched = ev.kind == EventKind::Tp
            && matches!((&ev.sut_class, &ev.res_class), (Some(s), Some(r)) if s != r);
        if !mismatched {
            out.push(ev);
            continue;
        }
        match policy {
            MisclassPolicy::TpWrongClass => {
                ev.flags.insert(EventFlag::WrongClass);
                out.push(ev);
            }
            MisclassPolicy::FpPlusFn => {
                let mut fp = ev.clone();
                fp.kind = EventKind::Fp;
                fp.res_id = None;
                fp.res_class = None;
                fp.cost = None;
                fp.flags.insert(EventFlag::WrongClass);
                let mut fn_ = ev;
                fn_.kind = EventKind::Fn;
                fn_.sut_id = None;
                fn_.sut_class = None;
                fn_.cost = None;
                fn_.flags.insert(EventFlag::WrongClass);
                out.push(fp);
                out.push(fn_);
            }
        }
    }
    out
}

/// Count-conservation identities checked after aggregation. Only meaningful
/// for 1:1 cardinality; callers skip it otherwise.
pub fn assert_conservation(ledger: &VerdictLedger, kept_sut: u64, kept_res: u64) {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_all = 0u64;
    for ev in &ledger.events {
        match ev.kind {
            EventKind::Tp => tp += 1,
            EventKind::Fp => fp += 1,
            EventKind::Fn if ev.frame.is_some() && !ev.has_flag(EventFlag::Overhang) => {
                fn_all += 1
            }
            _ => {}
        }
    }
    assert_eq!(
        tp + fp,
        kept_sut,
        "conservation violated: tp {tp} + fp {fp} != kept SUT observations {kept_sut}"
    );
    assert_eq!(
        tp + fn_all,
        kept_res,
        "conservation violated: tp {tp} + fn {fn_all} != kept reference observations {kept_res}"
    );
}

/// Events keyed for deterministic comparison in tests.
pub fn count_kinds(events: &[MatchEvent]) -> BTreeMap<EventKind, u64> {
    let mut map = BTreeMap::new();
    for ev in events {
        *map.entry(ev.kind).or_insert(0) += 1;
    }
    map
}

/// Set of event flags present anywhere in the ledger, for quick audits.
pub fn flags_present(events: &[MatchEvent]) -> BTreeSet<EventFlag> {
    events.iter().flat_map(|e| e.flags.iter().copied()).collect()
}
