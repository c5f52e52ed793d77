//! End-to-end evaluation pipeline: timestamp basis, coordinate alignment,
//! synchronization, filtering, matching, overhang resolution, gap allowance,
//! and aggregation.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::config::{
    Cardinality, FilterStage, Lifetime, OcclusionPolicy, OracleConfig,
};
use crate::filters::{
    aov_exclusion, area_exclusion, area_stage_filters, in_unreliable_region, occluded_res_indices,
    selected_class, ExclusionReason, ExclusionTag,
};
use crate::geometry::{center_distance, composite_cost, CostBreakdown, GeometryError};
use crate::matching::{
    self, EventFlag, EventKind, MatchEvent, MatchFrame, ObsView, TrackFrameObs, TrackFrames,
};
use crate::model::{canonical_time_bits, ObjectObservation, Recording, Role};
use crate::temporal::{
    apply_timestamp_basis, overhang_outcome, synchronize, OverhangOutcome, SyncedTrack,
};
use crate::verdict::report::{sweep_report, SweepPoint, SweepReport};
use crate::verdict::{aggregate, classify_mismatch, MetricsSummary, VerdictLedger};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    RecordingIo(#[from] crate::model::io::RecordingIoError),
    #[error("threshold sweep requires existence confidences on the observations under test; use single-threshold mode instead")]
    SweepWithoutConfidence,
}

/// Result of one full oracle run.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ledger: VerdictLedger,
    pub summary: MetricsSummary,
    pub sweep: Option<SweepReport>,
}

struct WorldObs {
    obs: ObjectObservation,
    role: Role,
    frame: usize,
    interpolated: bool,
    exclusion: Option<(ExclusionReason, FilterStage)>,
    boundary_m: Option<f64>,
}

impl WorldObs {
    fn kept(&self) -> bool {
        match self.exclusion {
            None => true,
            Some((_, stage)) => stage == FilterStage::PostMatching,
        }
    }
}

/// Evaluates a pair of recordings under a configuration.
///
/// Callers are expected to have validated the recordings; see
/// `model::validate_recording`. When `probabilistic.sweep_thresholds` is set
/// and the observations under test carry existence confidences, the full
/// pipeline is additionally swept over K evenly spaced thresholds.
pub fn evaluate(
    sut: &Recording,
    res: &Recording,
    cfg: &OracleConfig,
) -> Result<Evaluation, OracleError> {
    let ledger = evaluate_once(sut, res, cfg, None)?;
    let summary = aggregate(&ledger);
    let k = cfg.probabilistic.sweep_thresholds;
    let sweep = if k >= 1 && has_existence_conf(sut) {
        Some(threshold_sweep(sut, res, cfg, k)?)
    } else {
        None
    };
    Ok(Evaluation {
        ledger,
        summary,
        sweep,
    })
}

fn has_existence_conf(rec: &Recording) -> bool {
    rec.iter_observations().any(|o| o.existence_conf.is_some())
}

/// Runs the full pipeline at K existence thresholds `k / (K + 1)` and
/// reports each summary plus the across-threshold precision/recall means.
pub fn threshold_sweep(
    sut: &Recording,
    res: &Recording,
    cfg: &OracleConfig,
    k: u32,
) -> Result<SweepReport, OracleError> {
    if !has_existence_conf(sut) {
        return Err(OracleError::SweepWithoutConfidence);
    }
    let mut points = Vec::with_capacity(k as usize);
    for step in 1..=k {
        let tau = step as f64 / (k as f64 + 1.0);
        let ledger = evaluate_once(sut, res, cfg, Some(tau))?;
        points.push(SweepPoint {
            tau,
            summary: aggregate(&ledger),
        });
    }
    Ok(sweep_report(points))
}

fn evaluate_once(
    sut: &Recording,
    res: &Recording,
    cfg: &OracleConfig,
    tau_override: Option<f64>,
) -> Result<VerdictLedger, OracleError> {
    let tau_exist = tau_override.unwrap_or(cfg.probabilistic.tau_exist);

    // timestamp basis, then alignment of the reference into the SUT frame
    let (sut_shifted, _latencies) = apply_timestamp_basis(sut, cfg);
    let transform = &cfg.alignment.transform;

    // evaluation clock: explicit frame times plus all SUT timestamps
    let clock = build_clock(&sut_shifted);
    let frame_of: HashMap<u64, usize> = clock
        .iter()
        .enumerate()
        .map(|(i, &t)| (canonical_time_bits(t), i))
        .collect();

    // world: SUT observations on the clock, reference observations resampled
    let mut world: Vec<WorldObs> = Vec::new();
    let mut sync_overhangs: Vec<(String, ObjectObservation, f64)> = Vec::new();
    for track in &sut_shifted.tracks {
        for obs in &track.observations {
            let mut obs = obs.clone();
            obs.class_label = selected_class(&obs, cfg.probabilistic.class_policy);
            let frame = frame_of[&canonical_time_bits(obs.timestamp)];
            world.push(WorldObs {
                obs,
                role: Role::Sut,
                frame,
                interpolated: false,
                exclusion: None,
                boundary_m: None,
            });
        }
    }
    for track in &res.tracks {
        let mapped = crate::model::Track {
            track_id: track.track_id.clone(),
            observations: track
                .observations
                .iter()
                .map(|o| transform.apply_obs(o))
                .collect(),
        };
        let SyncedTrack {
            resampled,
            overhangs,
            ..
        } = synchronize(&mapped, &clock);
        for r in resampled {
            world.push(WorldObs {
                obs: r.obs,
                role: Role::Res,
                frame: r.frame,
                interpolated: r.interpolated,
                exclusion: None,
                boundary_m: None,
            });
        }
        for o in overhangs {
            sync_overhangs.push((track.track_id.clone(), o.obs, o.gap_s));
        }
    }

    // ----- filters, fixed order -----
    let mut annex: Vec<MatchEvent> = Vec::new();

    // 1. area of vision
    if cfg.aov.enforce_overlap
        && !(cfg.aov.res.is_none() && cfg.aov.sut.is_none())
    {
        for w in world.iter_mut() {
            if w.exclusion.is_none() {
                if let Some(reason) = aov_exclusion(&w.obs, &cfg.aov) {
                    w.exclusion = Some((reason, FilterStage::PreMatching));
                }
            }
        }
    }
    // 2. unreliable detection-probability regions, annexed
    if cfg.aov.p_min > 0.0 {
        for w in world.iter_mut() {
            if w.exclusion.is_none() && in_unreliable_region(&w.obs, &cfg.aov) {
                w.exclusion = Some((ExclusionReason::BelowPMin, FilterStage::PreMatching));
                annex.push(annex_event(w));
            }
        }
    }
    // 3. occlusion (viewed from the SUT sensor, blocked by other reference
    //    footprints; SUT detections in matching range of an occluded
    //    reference object are excluded with it)
    if cfg.occlusion.policy == OcclusionPolicy::Exclude {
        apply_occlusion(&mut world, cfg);
    }
    // 4. tested-area policy
    for w in world.iter_mut() {
        if w.exclusion.is_some() {
            continue;
        }
        if let Some(hit) = area_exclusion(&w.obs, &cfg.areas) {
            let stage = cfg.areas.stage;
            if area_stage_filters(stage, w.role) {
                w.exclusion = Some((hit.reason, stage));
                w.boundary_m = hit.boundary_distance_m;
            } else if stage == FilterStage::PostMatching {
                w.exclusion = Some((hit.reason, FilterStage::PostMatching));
            }
        }
    }
    // 5. existence-confidence gate (SUT only)
    for w in world.iter_mut() {
        if w.role == Role::Sut
            && w.exclusion.is_none()
            && !crate::filters::passes_confidence(&w.obs, tau_exist)
        {
            w.exclusion = Some((ExclusionReason::BelowConf, FilterStage::PreMatching));
        }
    }

    // ----- matching -----
    let inflation_base = if cfg.alignment.inflate_threshold {
        cfg.alignment.reported_error_m
    } else {
        0.0
    };
    let sync_uncertainty = if cfg.temporal.inflate_threshold {
        cfg.temporal.sync_uncertainty_s
    } else {
        0.0
    };
    let cost_error: RefCell<Option<GeometryError>> = RefCell::new(None);
    let cost_error_ref = &cost_error;
    let world_ref = &world;
    let distance_cfg = &cfg.distance;
    let pair_cost = |gate_distance: bool| {
        move |s: usize, r: usize| -> CostBreakdown {
            let sut_obs = &world_ref[s].obs;
            let res_obs = &world_ref[r].obs;
            let inflation = inflation_base
                + sync_uncertainty * (res_obs.vx.powi(2) + res_obs.vy.powi(2)).sqrt();
            let mut dcfg = distance_cfg.clone();
            if !gate_distance {
                dcfg.threshold = f64::INFINITY;
            }
            // cheap radius prefilter before the full breakdown
            if gate_distance {
                let max_extent = 0.5
                    * ((sut_obs.length.hypot(sut_obs.width))
                        + (res_obs.length.hypot(res_obs.width)));
                let radius = crate::geometry::gating_radius(&dcfg, inflation, max_extent);
                if radius.is_finite() && center_distance(sut_obs, res_obs) > radius {
                    return CostBreakdown::gated();
                }
            }
            match composite_cost(sut_obs, res_obs, &dcfg, inflation) {
                Ok(breakdown) => breakdown,
                Err(e) => {
                    cost_error_ref.borrow_mut().get_or_insert(e);
                    CostBreakdown::gated()
                }
            }
        }
    };

    let mut events: Vec<MatchEvent>;
    let mut rescued_refs: Vec<matching::RescuedObs> = Vec::new();
    let mut track_overhangs: Vec<matching::TrackOverhang> = Vec::new();
    if cfg.assignment.lifetime == Lifetime::Track {
        let (sut_tracks, res_tracks) = collect_track_frames(&world);
        let mut cost = pair_cost(false);
        let outcome = matching::match_tracks(
            &sut_tracks,
            &res_tracks,
            &mut cost,
            cfg.assignment
                .track_threshold_mean_m
                .get()
                .expect("validated: track mode carries a threshold"),
            &cfg.assignment,
        );
        events = outcome.events;
        track_overhangs = outcome.overhangs;
    } else {
        let frames = collect_match_frames(&world, &clock);
        let mut cost = pair_cost(true);
        let (evs, rescued) =
            matching::match_frames(&frames, &mut cost, &cfg.assignment, &cfg.corner_cases);
        events = evs;
        rescued_refs = rescued;
    }
    if let Some(e) = cost_error.into_inner() {
        return Err(e.into());
    }

    // reinstate border-rescued observations
    for rescue in &rescued_refs {
        let key = canonical_time_bits(rescue.timestamp);
        for w in world.iter_mut() {
            if w.role == rescue.role
                && w.obs.track_id == rescue.id
                && canonical_time_bits(w.obs.timestamp) == key
            {
                w.exclusion = None;
                w.boundary_m = None;
            }
        }
    }

    // misclassification policy on matched pairs with unequal labels
    events = classify_mismatch(events, cfg.probabilistic.misclass);

    // ----- overhang resolution -----
    let mut exclusions: Vec<ExclusionTag> = Vec::new();
    for (track_id, obs, gap_s) in &sync_overhangs {
        match overhang_outcome(*gap_s, &cfg.temporal) {
            OverhangOutcome::Discard => exclusions.push(ExclusionTag {
                role: Role::Res,
                track_id: track_id.clone(),
                timestamp: obs.timestamp,
                reason: ExclusionReason::OverhangDiscarded,
                stage: FilterStage::PostMatching,
            }),
            OverhangOutcome::Count => {
                let mut ev = MatchEvent {
                    timestamp: obs.timestamp,
                    frame: None,
                    kind: EventKind::Fn,
                    sut_id: None,
                    res_id: Some(track_id.clone()),
                    prev_sut_id: None,
                    sut_class: None,
                    res_class: Some(obs.class_label.clone()),
                    cost: None,
                    flags: BTreeSet::new(),
                };
                ev.flags.insert(EventFlag::Overhang);
                events.push(ev);
            }
        }
    }
    for oh in &track_overhangs {
        match overhang_outcome(oh.gap_s, &cfg.temporal) {
            OverhangOutcome::Discard => exclusions.push(ExclusionTag {
                role: oh.role,
                track_id: oh.id.clone(),
                timestamp: oh.t,
                reason: ExclusionReason::OverhangDiscarded,
                stage: FilterStage::PostMatching,
            }),
            OverhangOutcome::Count => {
                let kind = if oh.role == Role::Res { EventKind::Fn } else { EventKind::Fp };
                let mut ev = MatchEvent {
                    timestamp: oh.t,
                    frame: Some(oh.frame),
                    kind,
                    sut_id: (oh.role == Role::Sut).then(|| oh.id.clone()),
                    res_id: (oh.role == Role::Res).then(|| oh.id.clone()),
                    prev_sut_id: None,
                    sut_class: (oh.role == Role::Sut).then(|| oh.class.clone()),
                    res_class: (oh.role == Role::Res).then(|| oh.class.clone()),
                    cost: None,
                    flags: BTreeSet::new(),
                };
                ev.flags.insert(EventFlag::Overhang);
                if oh.interpolated {
                    ev.flags.insert(EventFlag::Interpolated);
                }
                events.push(ev);
            }
        }
    }

    // ----- gap allowance and final ordering -----
    matching::apply_gap_policy(&mut events, cfg.assignment.max_gap_frames);
    matching::sort_events(&mut events);

    for w in &world {
        if let Some((reason, stage)) = w.exclusion {
            exclusions.push(ExclusionTag {
                role: w.role,
                track_id: w.obs.track_id.clone(),
                timestamp: w.obs.timestamp,
                reason,
                stage,
            });
        }
    }
    exclusions.sort_by(|a, b| {
        a.timestamp
            .total_cmp(&b.timestamp)
            .then_with(|| a.role.cmp(&b.role))
            .then_with(|| a.track_id.cmp(&b.track_id))
    });
    matching::sort_events(&mut annex);

    let ledger = VerdictLedger {
        events,
        exclusions,
        annex,
        config_echo: {
            let mut echo = cfg.clone();
            echo.probabilistic.tau_exist = tau_exist;
            echo
        },
    };

    // conservation identities: every kept observation yields exactly one
    // verdict under 1:1 frame-wise matching
    if cfg.assignment.cardinality == Cardinality::OneOne
        && cfg.assignment.lifetime != Lifetime::Track
    {
        let kept_sut = world
            .iter()
            .filter(|w| w.role == Role::Sut && w.kept())
            .count() as u64;
        let kept_res = world
            .iter()
            .filter(|w| w.role == Role::Res && w.kept())
            .count() as u64;
        crate::verdict::assert_conservation(&ledger, kept_sut, kept_res);
    }
    Ok(ledger)
}

fn annex_event(w: &WorldObs) -> MatchEvent {
    MatchEvent {
        timestamp: w.obs.timestamp,
        frame: Some(w.frame),
        kind: if w.role == Role::Sut { EventKind::Fp } else { EventKind::Fn },
        sut_id: (w.role == Role::Sut).then(|| w.obs.track_id.clone()),
        res_id: (w.role == Role::Res).then(|| w.obs.track_id.clone()),
        prev_sut_id: None,
        sut_class: (w.role == Role::Sut).then(|| w.obs.class_label.clone()),
        res_class: (w.role == Role::Res).then(|| w.obs.class_label.clone()),
        cost: None,
        flags: BTreeSet::new(),
    }
}

fn build_clock(sut: &Recording) -> Vec<f64> {
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut clock: Vec<f64> = Vec::new();
    let mut push = |t: f64| {
        if seen.insert(canonical_time_bits(t)) {
            clock.push(t);
        }
    };
    if let Some(times) = &sut.frame_times {
        for &t in times {
            push(t);
        }
    }
    for obs in sut.iter_observations() {
        push(obs.timestamp);
    }
    clock.sort_by(f64::total_cmp);
    clock
}

fn apply_occlusion(world: &mut [WorldObs], cfg: &OracleConfig) {
    // group reference observations by frame; blockers are all other
    // reference footprints in the frame, excluded or not
    let mut frames: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, w) in world.iter().enumerate() {
        if w.role == Role::Res {
            frames.entry(w.frame).or_default().push(i);
        }
    }
    let mut occluded: Vec<usize> = Vec::new();
    for indices in frames.values() {
        let frame_res: Vec<&ObjectObservation> = indices.iter().map(|&i| &world[i].obs).collect();
        for local in occluded_res_indices(&frame_res, &cfg.occlusion) {
            occluded.push(indices[local]);
        }
    }
    // matching-range SUT observations of an occluded object leave with it
    let gate = cfg.distance.threshold;
    let mut sut_out: Vec<usize> = Vec::new();
    for &ri in &occluded {
        let (frame, center_obs) = (world[ri].frame, world[ri].obs.clone());
        for (i, w) in world.iter().enumerate() {
            if w.role == Role::Sut
                && w.frame == frame
                && w.exclusion.is_none()
                && center_distance(&w.obs, &center_obs) <= gate
            {
                sut_out.push(i);
            }
        }
    }
    for i in occluded.into_iter().chain(sut_out) {
        if world[i].exclusion.is_none() {
            world[i].exclusion = Some((ExclusionReason::Occluded, FilterStage::PreMatching));
        }
    }
}

fn collect_match_frames(world: &[WorldObs], clock: &[f64]) -> Vec<MatchFrame> {
    let mut frames: Vec<MatchFrame> = clock
        .iter()
        .enumerate()
        .map(|(i, &t)| MatchFrame {
            frame: i,
            t,
            ..MatchFrame::default()
        })
        .collect();
    for (i, w) in world.iter().enumerate() {
        let view = ObsView {
            world: i,
            id: w.obs.track_id.clone(),
            class: w.obs.class_label.clone(),
            interpolated: w.interpolated,
            rescue_boundary_m: w.boundary_m,
        };
        let frame = &mut frames[w.frame];
        match (w.role, w.kept()) {
            (Role::Sut, true) => frame.sut.push(view),
            (Role::Res, true) => frame.res.push(view),
            (Role::Sut, false) => {
                if w.boundary_m.is_some() {
                    frame.sut_rescuable.push(view);
                }
            }
            (Role::Res, false) => {
                if w.boundary_m.is_some() {
                    frame.res_rescuable.push(view);
                }
            }
        }
    }
    // deterministic in-frame order
    for frame in &mut frames {
        frame.sut.sort_by(|a, b| a.id.cmp(&b.id));
        frame.res.sort_by(|a, b| a.id.cmp(&b.id));
        frame.sut_rescuable.sort_by(|a, b| a.id.cmp(&b.id));
        frame.res_rescuable.sort_by(|a, b| a.id.cmp(&b.id));
    }
    frames
}

fn collect_track_frames(world: &[WorldObs]) -> (Vec<TrackFrames>, Vec<TrackFrames>) {
    let mut sut: BTreeMap<String, TrackFrames> = BTreeMap::new();
    let mut res: BTreeMap<String, TrackFrames> = BTreeMap::new();
    for (i, w) in world.iter().enumerate() {
        if !w.kept() {
            continue;
        }
        let map = if w.role == Role::Sut { &mut sut } else { &mut res };
        let entry = map.entry(w.obs.track_id.clone()).or_insert_with(|| TrackFrames {
            id: w.obs.track_id.clone(),
            class: w.obs.class_label.clone(),
            frames: Vec::new(),
        });
        entry.frames.push(TrackFrameObs {
            frame: w.frame,
            t: w.obs.timestamp,
            world: i,
            interpolated: w.interpolated,
        });
    }
    let finish = |map: BTreeMap<String, TrackFrames>| -> Vec<TrackFrames> {
        map.into_values()
            .map(|mut t| {
                t.frames.sort_by_key(|f| f.frame);
                t
            })
            .collect()
    };
    (finish(sut), finish(res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObjectObservation, Recording};

    fn grid_recording(role: Role, tracks: usize, frames: usize, spacing: f64) -> Recording {
        let mut observations = Vec::new();
        for k in 0..tracks {
            for f in 0..frames {
                let t = f as f64 * 0.1;
                observations.push(ObjectObservation::basic(
                    t,
                    &format!("{role}-{k}"),
                    "car",
                    t * 5.0,
                    k as f64 * spacing,
                    4.0,
                    2.0,
                    0.0,
                ));
            }
        }
        Recording::from_observations(role, observations)
    }

    #[test]
    fn identity_scene_is_all_tp() {
        let res = grid_recording(Role::Res, 5, 20, 10.0);
        let mut sut = res.clone();
        sut.role = Role::Sut;
        for track in &mut sut.tracks {
            track.track_id = track.track_id.replace("res", "sut");
            for obs in &mut track.observations {
                obs.track_id = obs.track_id.replace("res", "sut");
            }
        }
        let cfg = OracleConfig::default();
        let evaluation = evaluate(&sut, &res, &cfg).unwrap();
        assert_eq!(evaluation.summary.tp, 100);
        assert_eq!(evaluation.summary.fp, 0);
        assert_eq!(evaluation.summary.fn_, 0);
        assert_eq!(evaluation.summary.precision, Some(1.0));
    }

    #[test]
    fn lone_sut_object_is_fp_and_lone_res_object_is_fn() {
        let res = Recording::from_observations(
            Role::Res,
            vec![ObjectObservation::basic(0.0, "r", "car", 0.0, 0.0, 4.0, 2.0, 0.0)],
        );
        let sut = Recording::from_observations(
            Role::Sut,
            vec![ObjectObservation::basic(0.0, "s", "car", 50.0, 0.0, 4.0, 2.0, 0.0)],
        );
        let cfg = OracleConfig::default();
        let evaluation = evaluate(&sut, &res, &cfg).unwrap();
        assert_eq!(evaluation.summary.tp, 0);
        assert_eq!(evaluation.summary.fp, 1);
        assert_eq!(evaluation.summary.fn_, 1);
    }

    #[test]
    fn determinism_byte_identical_ledgers() {
        let res = grid_recording(Role::Res, 3, 10, 8.0);
        let mut sut = grid_recording(Role::Sut, 3, 10, 8.0);
        sut.role = Role::Sut;
        let cfg = OracleConfig::default();
        let a = evaluate(&sut, &res, &cfg).unwrap();
        let b = evaluate(&sut, &res, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a.ledger.events).unwrap(),
            serde_json::to_string(&b.ledger.events).unwrap()
        );
    }
}
