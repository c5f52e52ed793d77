//! Turns per-frame cost matrices into matches under the configured
//! assignment algorithm, cardinality, and lifetime mode; emits ID switches,
//! border rescues, and gap decisions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, AssignmentConfig, Cardinality, CornerCaseConfig, Lifetime};
use crate::filters::resolve_border_case;
use crate::geometry::CostBreakdown;
use crate::model::Role;

mod hungarian;

pub use hungarian::min_cost_assignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Tp,
    Fp,
    Fn,
    IdSwitch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFlag {
    /// The reference state at this frame was interpolated between samples.
    Interpolated,
    /// The pair was formed across a tested-area border by the fuzzy-rescue
    /// corner-case policy.
    BorderRescued,
    /// Missed frame forgiven by the gap allowance; kept in the ledger but
    /// out of the FN count.
    GapForgiven,
    /// The frame lies temporally outside the partner's span.
    Overhang,
    /// Matched pair with unequal class labels.
    WrongClass,
}

/// One verdict ledger entry. TPs carry both ids, FPs only the SUT id, FNs
/// only the reference id; ID switches carry the reference id with the old
/// and new SUT partners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEvent {
    pub timestamp: f64,
    /// Index into the evaluation clock; None for events outside the clock
    /// (overhang verdicts).
    pub frame: Option<usize>,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sut_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub res_id: Option<String>,
    /// Previous partner, on `id_switch` events.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prev_sut_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sut_class: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub res_class: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cost: Option<CostBreakdown>,
    #[serde(skip_serializing_if = "BTreeSet::is_empty", default)]
    pub flags: BTreeSet<EventFlag>,
}

impl MatchEvent {
    pub fn has_flag(&self, flag: EventFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// One matchable observation as seen by the assignment stage. `world` is an
/// opaque index the cost callback understands.
#[derive(Debug, Clone)]
pub struct ObsView {
    pub world: usize,
    pub id: String,
    pub class: String,
    pub interpolated: bool,
    /// Distance to the violated area boundary for observations that were
    /// excluded but may be reinstated by the border corner-case policy.
    pub rescue_boundary_m: Option<f64>,
}

/// Kept and rescuable observations of one evaluation frame.
#[derive(Debug, Clone, Default)]
pub struct MatchFrame {
    pub frame: usize,
    pub t: f64,
    pub sut: Vec<ObsView>,
    pub res: Vec<ObsView>,
    pub sut_rescuable: Vec<ObsView>,
    pub res_rescuable: Vec<ObsView>,
}

/// Dense cost matrix for one frame; `cells` is row-major SUT x ReS.
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<CostBreakdown>,
}

impl CostMatrix {
    pub fn build(
        sut: &[ObsView],
        res: &[ObsView],
        cost: &mut dyn FnMut(usize, usize) -> CostBreakdown,
    ) -> Self {
        let mut cells = Vec::with_capacity(sut.len() * res.len());
        for s in sut {
            for r in res {
                cells.push(cost(s.world, r.world));
            }
        }
        CostMatrix {
            rows: sut.len(),
            cols: res.len(),
            cells,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> &CostBreakdown {
        &self.cells[row * self.cols + col]
    }
}

/// Result of one frame assignment over kept observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Assigns one frame's cost matrix under the configured algorithm and
/// cardinality. Gated cells never match. Greedy ties break on lower cost,
/// then lexicographically smaller (SUT id, ReS id), making results
/// deterministic for identical inputs.
pub fn assign_frame(
    costs: &CostMatrix,
    row_ids: &[&str],
    col_ids: &[&str],
    cfg: &AssignmentConfig,
) -> Assignment {
    assign_masked(costs, row_ids, col_ids, cfg, &[], &[])
}

/// `assign_frame` with some rows/columns already consumed (sticky locks).
fn assign_masked(
    costs: &CostMatrix,
    row_ids: &[&str],
    col_ids: &[&str],
    cfg: &AssignmentConfig,
    masked_rows: &[usize],
    masked_cols: &[usize],
) -> Assignment {
    let active_rows: Vec<usize> = (0..costs.rows).filter(|r| !masked_rows.contains(r)).collect();
    let active_cols: Vec<usize> = (0..costs.cols).filter(|c| !masked_cols.contains(c)).collect();

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    match cfg.cardinality {
        Cardinality::NN => {
            for &r in &active_rows {
                for &c in &active_cols {
                    if !costs.get(r, c).gated {
                        pairs.push((r, c));
                    }
                }
            }
        }
        Cardinality::OneOne => {
            pairs = match cfg.algorithm {
                Algorithm::Hungarian => hungarian_one_one(costs, &active_rows, &active_cols),
                Algorithm::Greedy => greedy_assign(
                    costs,
                    row_ids,
                    col_ids,
                    &active_rows,
                    &active_cols,
                    true,
                    true,
                ),
            };
        }
        Cardinality::NOne => {
            // several SUT rows may share one reference column
            pairs = match cfg.algorithm {
                Algorithm::Hungarian => {
                    let mut base = hungarian_one_one(costs, &active_rows, &active_cols);
                    attach_remaining_rows(costs, col_ids, &active_rows, &active_cols, &mut base);
                    base
                }
                Algorithm::Greedy => greedy_assign(
                    costs,
                    row_ids,
                    col_ids,
                    &active_rows,
                    &active_cols,
                    true,
                    false,
                ),
            };
        }
        Cardinality::OneN => {
            // one SUT row may cover several reference columns
            pairs = match cfg.algorithm {
                Algorithm::Hungarian => {
                    let mut base = hungarian_one_one(costs, &active_rows, &active_cols);
                    attach_remaining_cols(costs, row_ids, &active_rows, &active_cols, &mut base);
                    base
                }
                Algorithm::Greedy => greedy_assign(
                    costs,
                    row_ids,
                    col_ids,
                    &active_rows,
                    &active_cols,
                    false,
                    true,
                ),
            };
        }
    }

    pairs.sort();
    let matched_rows: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
    let matched_cols: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
    Assignment {
        unmatched_rows: active_rows
            .iter()
            .copied()
            .filter(|r| !matched_rows.contains(r))
            .collect(),
        unmatched_cols: active_cols
            .iter()
            .copied()
            .filter(|c| !matched_cols.contains(c))
            .collect(),
        pairs,
    }
}

/// Optimal 1:1 assignment, decomposed into connected components of the
/// non-gated bipartite graph so that sparse frames stay cheap.
fn hungarian_one_one(
    costs: &CostMatrix,
    active_rows: &[usize],
    active_cols: &[usize],
) -> Vec<(usize, usize)> {
    // union-find over active rows then active cols
    let n = active_rows.len() + active_cols.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let col_offset = active_rows.len();
    for (ri, &r) in active_rows.iter().enumerate() {
        for (ci, &c) in active_cols.iter().enumerate() {
            if !costs.get(r, c).gated {
                let a = find(&mut parent, ri);
                let b = find(&mut parent, col_offset + ci);
                parent[a] = b;
            }
        }
    }
    let mut components: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (ri, &r) in active_rows.iter().enumerate() {
        let root = find(&mut parent, ri);
        components.entry(root).or_default().0.push(r);
    }
    for (ci, &c) in active_cols.iter().enumerate() {
        let root = find(&mut parent, col_offset + ci);
        components.entry(root).or_default().1.push(c);
    }
    let mut pairs = Vec::new();
    for (rows, cols) in components.values() {
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let sub: Vec<Vec<f64>> = rows
            .iter()
            .map(|&r| cols.iter().map(|&c| costs.get(r, c).total).collect())
            .collect();
        for (i, assigned) in min_cost_assignment(&sub).into_iter().enumerate() {
            if let Some(j) = assigned {
                pairs.push((rows[i], cols[j]));
            }
        }
    }
    pairs
}

fn attach_remaining_rows(
    costs: &CostMatrix,
    col_ids: &[&str],
    active_rows: &[usize],
    active_cols: &[usize],
    pairs: &mut Vec<(usize, usize)>,
) {
    let matched_rows: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
    for &r in active_rows {
        if matched_rows.contains(&r) {
            continue;
        }
        let best = active_cols
            .iter()
            .filter(|&&c| !costs.get(r, c).gated)
            .min_by(|&&a, &&b| {
                costs
                    .get(r, a)
                    .total
                    .total_cmp(&costs.get(r, b).total)
                    .then_with(|| col_ids[a].cmp(col_ids[b]))
            });
        if let Some(&c) = best {
            pairs.push((r, c));
        }
    }
}

fn attach_remaining_cols(
    costs: &CostMatrix,
    row_ids: &[&str],
    active_rows: &[usize],
    active_cols: &[usize],
    pairs: &mut Vec<(usize, usize)>,
) {
    let matched_cols: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
    for &c in active_cols {
        if matched_cols.contains(&c) {
            continue;
        }
        let best = active_rows
            .iter()
            .filter(|&&r| !costs.get(r, c).gated)
            .min_by(|&&a, &&b| {
                costs
                    .get(a, c)
                    .total
                    .total_cmp(&costs.get(b, c).total)
                    .then_with(|| row_ids[a].cmp(row_ids[b]))
            });
        if let Some(&r) = best {
            pairs.push((r, c));
        }
    }
}

/// Repeatedly takes the globally cheapest non-gated cell. `consume_row` /
/// `consume_col` encode the cardinality: a consumed index cannot match again.
fn greedy_assign(
    costs: &CostMatrix,
    row_ids: &[&str],
    col_ids: &[&str],
    active_rows: &[usize],
    active_cols: &[usize],
    consume_row: bool,
    consume_col: bool,
) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for &r in active_rows {
        for &c in active_cols {
            if !costs.get(r, c).gated {
                candidates.push((r, c));
            }
        }
    }
    candidates.sort_by(|&(r1, c1), &(r2, c2)| {
        costs
            .get(r1, c1)
            .total
            .total_cmp(&costs.get(r2, c2).total)
            .then_with(|| row_ids[r1].cmp(row_ids[r2]))
            .then_with(|| col_ids[c1].cmp(col_ids[c2]))
    });
    let mut used_rows: BTreeSet<usize> = BTreeSet::new();
    let mut used_cols: BTreeSet<usize> = BTreeSet::new();
    let mut pairs = Vec::new();
    for (r, c) in candidates {
        if used_rows.contains(&r) || used_cols.contains(&c) {
            continue;
        }
        pairs.push((r, c));
        if consume_row {
            used_rows.insert(r);
        }
        if consume_col {
            used_cols.insert(c);
        }
    }
    pairs
}

/// Identity of an excluded observation reinstated by a border rescue; the
/// caller drops its exclusion tag.
#[derive(Debug, Clone, PartialEq)]
pub struct RescuedObs {
    pub role: Role,
    pub id: String,
    pub timestamp: f64,
}

fn tp_event(frame: &MatchFrame, s: &ObsView, r: &ObsView, cost: CostBreakdown) -> MatchEvent {
    let mut flags = BTreeSet::new();
    if s.interpolated || r.interpolated {
        flags.insert(EventFlag::Interpolated);
    }
    MatchEvent {
        timestamp: frame.t,
        frame: Some(frame.frame),
        kind: EventKind::Tp,
        sut_id: Some(s.id.clone()),
        res_id: Some(r.id.clone()),
        prev_sut_id: None,
        sut_class: Some(s.class.clone()),
        res_class: Some(r.class.clone()),
        cost: Some(cost),
        flags,
    }
}

fn fp_event(t: f64, frame: Option<usize>, s: &ObsView) -> MatchEvent {
    MatchEvent {
        timestamp: t,
        frame,
        kind: EventKind::Fp,
        sut_id: Some(s.id.clone()),
        res_id: None,
        prev_sut_id: None,
        sut_class: Some(s.class.clone()),
        res_class: None,
        cost: None,
        flags: BTreeSet::new(),
    }
}

fn fn_event(t: f64, frame: Option<usize>, r: &ObsView) -> MatchEvent {
    let mut flags = BTreeSet::new();
    if r.interpolated {
        flags.insert(EventFlag::Interpolated);
    }
    MatchEvent {
        timestamp: t,
        frame,
        kind: EventKind::Fn,
        sut_id: None,
        res_id: Some(r.id.clone()),
        prev_sut_id: None,
        sut_class: None,
        res_class: Some(r.class.clone()),
        cost: None,
        flags,
    }
}

/// Matches time-ordered frames under the frame or subsequence lifetime.
///
/// Subsequence mode keeps per-reference partner memory: a partner change is
/// emitted as an `id_switch` event, and with `sticky` an existing pair is
/// retained while its cost stays non-gated even if a cheaper candidate
/// appears. Border rescues are attempted for unmatched kept observations
/// against area-excluded candidates near the boundary.
pub fn match_frames(
    frames: &[MatchFrame],
    cost: &mut dyn FnMut(usize, usize) -> CostBreakdown,
    acfg: &AssignmentConfig,
    corner: &CornerCaseConfig,
) -> (Vec<MatchEvent>, Vec<RescuedObs>) {
    let mut events = Vec::new();
    let mut rescued = Vec::new();
    let mut last_partner: BTreeMap<String, String> = BTreeMap::new();
    let subsequence = acfg.lifetime == Lifetime::Subsequence;

    for frame in frames {
        let costs = CostMatrix::build(&frame.sut, &frame.res, cost);
        let row_ids: Vec<&str> = frame.sut.iter().map(|v| v.id.as_str()).collect();
        let col_ids: Vec<&str> = frame.res.iter().map(|v| v.id.as_str()).collect();

        // sticky retention of surviving pairs
        let mut locked: Vec<(usize, usize)> = Vec::new();
        if subsequence && acfg.sticky && acfg.cardinality != Cardinality::NN {
            let mut locked_rows: BTreeSet<usize> = BTreeSet::new();
            let mut locked_cols: BTreeSet<usize> = BTreeSet::new();
            for (ci, rv) in frame.res.iter().enumerate() {
                let Some(partner) = last_partner.get(&rv.id) else {
                    continue;
                };
                let Some(ri) = frame.sut.iter().position(|s| &s.id == partner) else {
                    continue;
                };
                if costs.get(ri, ci).gated || locked_rows.contains(&ri) || locked_cols.contains(&ci)
                {
                    continue;
                }
                locked.push((ri, ci));
                if matches!(acfg.cardinality, Cardinality::OneOne | Cardinality::NOne) {
                    locked_rows.insert(ri);
                }
                if matches!(acfg.cardinality, Cardinality::OneOne | Cardinality::OneN) {
                    locked_cols.insert(ci);
                }
            }
            // masked per cardinality: a locked row/col stays available when
            // the cardinality re-uses it
            let masked_rows: Vec<usize> = match acfg.cardinality {
                Cardinality::OneOne | Cardinality::OneN => locked.iter().map(|p| p.0).collect(),
                _ => locked.iter().map(|p| p.0).collect(),
            };
            let masked_cols: Vec<usize> = match acfg.cardinality {
                Cardinality::OneOne | Cardinality::NOne => locked.iter().map(|p| p.1).collect(),
                Cardinality::OneN => Vec::new(),
                Cardinality::NN => Vec::new(),
            };
            let assignment =
                assign_masked(&costs, &row_ids, &col_ids, acfg, &masked_rows, &masked_cols);
            emit_frame_events(
                frame,
                &costs,
                locked.iter().chain(assignment.pairs.iter()),
                &assignment.unmatched_rows,
                &assignment.unmatched_cols,
                cost,
                corner,
                subsequence,
                &mut last_partner,
                &mut events,
                &mut rescued,
            );
        } else {
            let assignment = assign_frame(&costs, &row_ids, &col_ids, acfg);
            emit_frame_events(
                frame,
                &costs,
                assignment.pairs.iter(),
                &assignment.unmatched_rows,
                &assignment.unmatched_cols,
                cost,
                corner,
                subsequence,
                &mut last_partner,
                &mut events,
                &mut rescued,
            );
        }
    }
    (events, rescued)
}

#[allow(clippy::too_many_arguments)]
fn emit_frame_events<'a>(
    frame: &MatchFrame,
    costs: &CostMatrix,
    pairs: impl Iterator<Item = &'a (usize, usize)>,
    unmatched_rows: &[usize],
    unmatched_cols: &[usize],
    cost: &mut dyn FnMut(usize, usize) -> CostBreakdown,
    corner: &CornerCaseConfig,
    subsequence: bool,
    last_partner: &mut BTreeMap<String, String>,
    events: &mut Vec<MatchEvent>,
    rescued: &mut Vec<RescuedObs>,
) {
    let mut frame_events: Vec<MatchEvent> = Vec::new();
    for &(ri, ci) in pairs {
        let s = &frame.sut[ri];
        let r = &frame.res[ci];
        frame_events.push(tp_event(frame, s, r, costs.get(ri, ci).clone()));
    }

    // border rescue: unmatched kept observations may pair with an excluded
    // candidate close to the area boundary
    let mut leftover_rows: Vec<usize> = unmatched_rows.to_vec();
    let mut leftover_cols: Vec<usize> = unmatched_cols.to_vec();
    let mut used_rescue_sut: BTreeSet<usize> = BTreeSet::new();
    let mut used_rescue_res: BTreeSet<usize> = BTreeSet::new();
    leftover_cols.retain(|&ci| {
        let r = &frame.res[ci];
        let mut best: Option<(usize, CostBreakdown)> = None;
        for (si, s) in frame.sut_rescuable.iter().enumerate() {
            if used_rescue_sut.contains(&si) || !resolve_border_case(s.rescue_boundary_m, corner) {
                continue;
            }
            let breakdown = cost(s.world, r.world);
            if breakdown.gated {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bi, b)) => {
                    breakdown.total < b.total
                        || (breakdown.total == b.total
                            && frame.sut_rescuable[si].id < frame.sut_rescuable[*bi].id)
                }
            };
            if better {
                best = Some((si, breakdown));
            }
        }
        if let Some((si, breakdown)) = best {
            used_rescue_sut.insert(si);
            let s = &frame.sut_rescuable[si];
            let mut ev = tp_event(frame, s, r, breakdown);
            ev.flags.insert(EventFlag::BorderRescued);
            frame_events.push(ev);
            rescued.push(RescuedObs {
                role: Role::Sut,
                id: s.id.clone(),
                timestamp: frame.t,
            });
            false
        } else {
            true
        }
    });
    leftover_rows.retain(|&ri| {
        let s = &frame.sut[ri];
        let mut best: Option<(usize, CostBreakdown)> = None;
        for (rj, r) in frame.res_rescuable.iter().enumerate() {
            if used_rescue_res.contains(&rj) || !resolve_border_case(r.rescue_boundary_m, corner) {
                continue;
            }
            let breakdown = cost(s.world, r.world);
            if breakdown.gated {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bi, b)) => {
                    breakdown.total < b.total
                        || (breakdown.total == b.total
                            && frame.res_rescuable[rj].id < frame.res_rescuable[*bi].id)
                }
            };
            if better {
                best = Some((rj, breakdown));
            }
        }
        if let Some((rj, breakdown)) = best {
            used_rescue_res.insert(rj);
            let r = &frame.res_rescuable[rj];
            let mut ev = tp_event(frame, s, r, breakdown);
            ev.flags.insert(EventFlag::BorderRescued);
            frame_events.push(ev);
            rescued.push(RescuedObs {
                role: Role::Res,
                id: r.id.clone(),
                timestamp: frame.t,
            });
            false
        } else {
            true
        }
    });

    for &ri in &leftover_rows {
        frame_events.push(fp_event(frame.t, Some(frame.frame), &frame.sut[ri]));
    }
    for &ci in &leftover_cols {
        frame_events.push(fn_event(frame.t, Some(frame.frame), &frame.res[ci]));
    }

    if subsequence {
        let mut switches = Vec::new();
        for ev in &frame_events {
            if ev.kind != EventKind::Tp {
                continue;
            }
            let (res_id, sut_id) = (ev.res_id.clone().unwrap(), ev.sut_id.clone().unwrap());
            match last_partner.get(&res_id) {
                Some(old) if old != &sut_id => {
                    switches.push(MatchEvent {
                        timestamp: frame.t,
                        frame: Some(frame.frame),
                        kind: EventKind::IdSwitch,
                        sut_id: Some(sut_id.clone()),
                        res_id: Some(res_id.clone()),
                        prev_sut_id: Some(old.clone()),
                        sut_class: ev.sut_class.clone(),
                        res_class: ev.res_class.clone(),
                        cost: None,
                        flags: BTreeSet::new(),
                    });
                }
                _ => {}
            }
            last_partner.insert(res_id, sut_id);
        }
        frame_events.extend(switches);
    }
    events.extend(frame_events);
}

/// One observation of a track on the evaluation clock, for whole-track
/// matching.
#[derive(Debug, Clone)]
pub struct TrackFrameObs {
    pub frame: usize,
    pub t: f64,
    pub world: usize,
    pub interpolated: bool,
}

#[derive(Debug, Clone)]
pub struct TrackFrames {
    pub id: String,
    pub class: String,
    pub frames: Vec<TrackFrameObs>,
}

/// A frame of a matched track outside its pair's common lifetime; resolved
/// by the temporal overhang policy.
#[derive(Debug, Clone)]
pub struct TrackOverhang {
    pub role: Role,
    pub id: String,
    pub class: String,
    pub frame: usize,
    pub t: f64,
    pub gap_s: f64,
    pub interpolated: bool,
}

#[derive(Debug, Default)]
pub struct TrackMatchOutcome {
    pub events: Vec<MatchEvent>,
    pub overhangs: Vec<TrackOverhang>,
}

/// Matches entire tracks wholesale: candidate pairs are gated on the mean of
/// the (distance-ungated) per-frame cost over their common lifetime, and the
/// configured algorithm/cardinality assigns track pairs. Matched pairs yield
/// TPs on common frames regardless of the per-frame distance gate; missed
/// frames inside the matched span become FNs; frames outside it are returned
/// as overhangs for the temporal policy to resolve.
///
/// `cost` must gate only on class (pass an unbounded distance threshold):
/// a class-gated frame never supports a candidate pair.
pub fn match_tracks(
    sut_tracks: &[TrackFrames],
    res_tracks: &[TrackFrames],
    cost: &mut dyn FnMut(usize, usize) -> CostBreakdown,
    track_threshold_mean: f64,
    acfg: &AssignmentConfig,
) -> TrackMatchOutcome {
    struct PairData {
        mean: f64,
        tp_frames: Vec<(usize, usize)>, // (sut frame list idx, res frame list idx)
    }
    let mut pair_data: BTreeMap<(usize, usize), PairData> = BTreeMap::new();

    // mean ungated cost over the common lifetime of each candidate pair
    for (si, s_track) in sut_tracks.iter().enumerate() {
        for (ri, r_track) in res_tracks.iter().enumerate() {
            let mut total = 0.0;
            let mut count = 0usize;
            let mut tp_frames = Vec::new();
            let (mut i, mut j) = (0usize, 0usize);
            while i < s_track.frames.len() && j < r_track.frames.len() {
                let (sf, rf) = (&s_track.frames[i], &r_track.frames[j]);
                match sf.frame.cmp(&rf.frame) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        let breakdown = cost(sf.world, rf.world);
                        if !breakdown.gated {
                            total += breakdown.total;
                            count += 1;
                            tp_frames.push((i, j));
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
            if count > 0 {
                pair_data.insert(
                    (si, ri),
                    PairData {
                        mean: total / count as f64,
                        tp_frames,
                    },
                );
            }
        }
    }

    // track-level assignment over mean costs
    let cells: Vec<CostBreakdown> = (0..sut_tracks.len())
        .flat_map(|si| {
            (0..res_tracks.len()).map(move |ri| (si, ri))
        })
        .map(|key| match pair_data.get(&key) {
            Some(p) if p.mean <= track_threshold_mean => CostBreakdown {
                geometric: p.mean,
                penalties: BTreeMap::new(),
                gated: false,
                total: p.mean,
            },
            _ => CostBreakdown::gated(),
        })
        .collect();
    let matrix = CostMatrix {
        rows: sut_tracks.len(),
        cols: res_tracks.len(),
        cells,
    };
    let row_ids: Vec<&str> = sut_tracks.iter().map(|t| t.id.as_str()).collect();
    let col_ids: Vec<&str> = res_tracks.iter().map(|t| t.id.as_str()).collect();
    let assignment = assign_frame(&matrix, &row_ids, &col_ids, acfg);

    let mut outcome = TrackMatchOutcome::default();
    let mut res_covered: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new(); // res idx -> covered frames
    let mut sut_covered: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut res_span: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let mut sut_span: BTreeMap<usize, (f64, f64)> = BTreeMap::new();

    let widen = |map: &mut BTreeMap<usize, (f64, f64)>, key: usize, lo: f64, hi: f64| {
        map.entry(key)
            .and_modify(|span| {
                span.0 = span.0.min(lo);
                span.1 = span.1.max(hi);
            })
            .or_insert((lo, hi));
    };

    for &(si, ri) in &assignment.pairs {
        let data = &pair_data[&(si, ri)];
        let s_track = &sut_tracks[si];
        let r_track = &res_tracks[ri];
        // common lifetime in time
        let lo = s_track.frames.first().unwrap().t.max(r_track.frames.first().unwrap().t);
        let hi = s_track.frames.last().unwrap().t.min(r_track.frames.last().unwrap().t);
        widen(&mut res_span, ri, lo, hi);
        widen(&mut sut_span, si, lo, hi);
        for &(fi, fj) in &data.tp_frames {
            let sf = &s_track.frames[fi];
            let rf = &r_track.frames[fj];
            let breakdown = cost(sf.world, rf.world);
            let mut flags = BTreeSet::new();
            if sf.interpolated || rf.interpolated {
                flags.insert(EventFlag::Interpolated);
            }
            outcome.events.push(MatchEvent {
                timestamp: rf.t,
                frame: Some(rf.frame),
                kind: EventKind::Tp,
                sut_id: Some(s_track.id.clone()),
                res_id: Some(r_track.id.clone()),
                prev_sut_id: None,
                sut_class: Some(s_track.class.clone()),
                res_class: Some(r_track.class.clone()),
                cost: Some(breakdown),
                flags,
            });
            res_covered.entry(ri).or_default().insert(rf.frame);
            sut_covered.entry(si).or_default().insert(sf.frame);
        }
    }

    // reference side: FN inside matched span, overhang outside, plain FN for
    // unmatched tracks
    for (ri, r_track) in res_tracks.iter().enumerate() {
        let covered = res_covered.get(&ri);
        let span = res_span.get(&ri);
        for f in &r_track.frames {
            if covered.is_some_and(|c| c.contains(&f.frame)) {
                continue;
            }
            let view = ObsView {
                world: f.world,
                id: r_track.id.clone(),
                class: r_track.class.clone(),
                interpolated: f.interpolated,
                rescue_boundary_m: None,
            };
            match span {
                Some(&(lo, hi)) if f.t < lo || f.t > hi => {
                    outcome.overhangs.push(TrackOverhang {
                        role: Role::Res,
                        id: r_track.id.clone(),
                        class: r_track.class.clone(),
                        frame: f.frame,
                        t: f.t,
                        gap_s: if f.t < lo { lo - f.t } else { f.t - hi },
                        interpolated: f.interpolated,
                    });
                }
                _ => outcome.events.push(fn_event(f.t, Some(f.frame), &view)),
            }
        }
    }
    // SUT side: FP inside matched span, overhang outside, plain FP for
    // unmatched tracks
    for (si, s_track) in sut_tracks.iter().enumerate() {
        let covered = sut_covered.get(&si);
        let span = sut_span.get(&si);
        for f in &s_track.frames {
            if covered.is_some_and(|c| c.contains(&f.frame)) {
                continue;
            }
            let view = ObsView {
                world: f.world,
                id: s_track.id.clone(),
                class: s_track.class.clone(),
                interpolated: f.interpolated,
                rescue_boundary_m: None,
            };
            match span {
                Some(&(lo, hi)) if f.t < lo || f.t > hi => {
                    outcome.overhangs.push(TrackOverhang {
                        role: Role::Sut,
                        id: s_track.id.clone(),
                        class: s_track.class.clone(),
                        frame: f.frame,
                        t: f.t,
                        gap_s: if f.t < lo { lo - f.t } else { f.t - hi },
                        interpolated: f.interpolated,
                    });
                }
                _ => outcome.events.push(fp_event(f.t, Some(f.frame), &view)),
            }
        }
    }
    outcome
}

/// Re-tags FN runs of length `max_gap_frames` or less that sit strictly
/// between TPs of the same (SUT, reference) pair as `gap_forgiven`. Forgiven
/// events stay in the ledger; only the counts change.
pub fn apply_gap_policy(events: &mut [MatchEvent], max_gap_frames: u32) {
    if max_gap_frames == 0 {
        return;
    }
    let mut per_res: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (idx, ev) in events.iter().enumerate() {
        if ev.frame.is_none() || ev.has_flag(EventFlag::Overhang) {
            continue;
        }
        if let Some(res_id) = &ev.res_id {
            if matches!(ev.kind, EventKind::Tp | EventKind::Fn) {
                per_res.entry(res_id.clone()).or_default().push(idx);
            }
        }
    }
    for indices in per_res.values_mut() {
        indices.sort_by_key(|&i| events[i].frame.unwrap());
        let mut prev_partner: Option<String> = None;
        let mut pending: Vec<usize> = Vec::new();
        for &idx in indices.iter() {
            match events[idx].kind {
                EventKind::Tp => {
                    let partner = events[idx].sut_id.clone();
                    if prev_partner.is_some()
                        && prev_partner == partner
                        && !pending.is_empty()
                        && pending.len() <= max_gap_frames as usize
                    {
                        for &p in &pending {
                            events[p].flags.insert(EventFlag::GapForgiven);
                        }
                    }
                    pending.clear();
                    prev_partner = partner;
                }
                EventKind::Fn => {
                    if prev_partner.is_some() {
                        pending.push(idx);
                    }
                }
                _ => {}
            }
        }
    }
}

/// Deterministic ledger order: frame/time, kind, then ids.
pub fn sort_events(events: &mut [MatchEvent]) {
    events.sort_by(|a, b| {
        a.timestamp
            .total_cmp(&b.timestamp)
            .then_with(|| a.frame.cmp(&b.frame))
            .then_with(|| a.kind.cmp(&b.kind))
            .then_with(|| a.sut_id.cmp(&b.sut_id))
            .then_with(|| a.res_id.cmp(&b.res_id))
    });
}
