//! Stage-aware inclusion and exclusion of observations: areas of vision,
//! occlusion, tested areas, unreliable regions, and confidence gates.
//!
//! The engine applies filters in a fixed, documented order so that every
//! excluded observation carries exactly one primary reason:
//!
//! 1. area of vision (reference first, then system under test)
//! 2. unreliable detection-probability regions (annexed, not counted)
//! 3. occlusion
//! 4. tested-area policy (polygons, class allow-list, class max range)
//! 5. existence-confidence gate
//!
//! Class relabeling under `probabilistic.class_policy = "argmax"` happens
//! before any of these so that class-based filters see the selected label.

use serde::{Deserialize, Serialize};

use crate::config::{
    AovConfig, AreasConfig, BorderPolicy, ClassSelectionPolicy, CornerCaseConfig, FilterStage,
    OcclusionConfig, OcclusionPolicy, PolygonRef,
};
use crate::geometry::{occlusion_fraction, GeometryError};
use crate::model::{ObjectObservation, Role};

/// Why an observation was taken out of the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    OutsideResAov,
    OutsideSutAov,
    BelowPMin,
    Occluded,
    NoTestArea,
    ClassExcluded,
    BelowConf,
    OverhangDiscarded,
}

impl ExclusionReason {
    /// Configuration section that owns the decision, for audit output.
    pub fn config_section(&self) -> &'static str {
        match self {
            ExclusionReason::OutsideResAov | ExclusionReason::OutsideSutAov => "aov",
            ExclusionReason::BelowPMin => "aov (p_min)",
            ExclusionReason::Occluded => "occlusion",
            ExclusionReason::NoTestArea | ExclusionReason::ClassExcluded => "areas",
            ExclusionReason::BelowConf => "probabilistic",
            ExclusionReason::OverhangDiscarded => "temporal",
        }
    }
}

/// One excluded observation with its primary reason and the stage at which
/// the exclusion applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionTag {
    pub role: Role,
    pub track_id: String,
    pub timestamp: f64,
    pub reason: ExclusionReason,
    pub stage: FilterStage,
}

/// Membership of an observation relative to the two areas of vision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AovClass {
    Both,
    ResOnly,
    SutOnly,
    Neither,
}

/// Classifies a position against both configured areas of vision. An
/// unconfigured area counts as covering everything.
pub fn classify_aov(obs: &ObjectObservation, cfg: &AovConfig) -> AovClass {
    let p = obs.center();
    match (cfg.res.contains(p), cfg.sut.contains(p)) {
        (true, true) => AovClass::Both,
        (true, false) => AovClass::ResOnly,
        (false, true) => AovClass::SutOnly,
        (false, false) => AovClass::Neither,
    }
}

/// Primary AOV exclusion reason, if any, under `enforce_overlap`. Being
/// outside the reference area is checked first.
pub fn aov_exclusion(obs: &ObjectObservation, cfg: &AovConfig) -> Option<ExclusionReason> {
    if !cfg.enforce_overlap {
        return None;
    }
    match classify_aov(obs, cfg) {
        AovClass::Both => None,
        AovClass::SutOnly | AovClass::Neither => Some(ExclusionReason::OutsideResAov),
        AovClass::ResOnly => Some(ExclusionReason::OutsideSutAov),
    }
}

/// Piecewise-linear detection probability over range. An empty map means
/// fully reliable (1.0); outside the breakpoint span the nearest value holds.
pub fn p_detect(map: &[[f64; 2]], range: f64) -> f64 {
    let Some(first) = map.first() else {
        return 1.0;
    };
    if range <= first[0] {
        return first[1];
    }
    for window in map.windows(2) {
        let (a, b) = (window[0], window[1]);
        if range <= b[0] {
            let t = (range - a[0]) / (b[0] - a[0]);
            return a[1] + t * (b[1] - a[1]);
        }
    }
    map.last().unwrap()[1]
}

/// Whether a position sits in a region where either system's detection
/// probability falls below `p_min`.
pub fn in_unreliable_region(obs: &ObjectObservation, cfg: &AovConfig) -> bool {
    if cfg.p_min <= 0.0 {
        return false;
    }
    let range_from = |origin: [f64; 2]| {
        ((obs.x - origin[0]).powi(2) + (obs.y - origin[1]).powi(2)).sqrt()
    };
    let p_res = p_detect(&cfg.res_p_detect, range_from(cfg.res.origin()));
    let p_sut = p_detect(&cfg.sut_p_detect, range_from(cfg.sut.origin()));
    p_res.min(p_sut) < cfg.p_min
}

/// Indices of reference observations in one frame that count as occluded
/// from `cfg.viewer`, using the other reference footprints as blockers.
///
/// A viewer sitting inside a target footprint makes that target trivially
/// visible, never occluded.
pub fn occluded_res_indices(
    frame_res: &[&ObjectObservation],
    cfg: &OcclusionConfig,
) -> Vec<usize> {
    if cfg.policy != OcclusionPolicy::Exclude {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, target) in frame_res.iter().enumerate() {
        let blockers: Vec<&ObjectObservation> = frame_res
            .iter()
            .enumerate()
            .filter(|(j, other)| *j != i && other.track_id != target.track_id)
            .map(|(_, o)| *o)
            .collect();
        match occlusion_fraction(cfg.viewer, target, &blockers) {
            Ok(fraction) if fraction >= cfg.threshold => out.push(i),
            Ok(_) => {}
            Err(GeometryError::ViewerInsideTarget { .. }) => {}
            Err(_) => {}
        }
    }
    out
}

/// Outcome of the tested-area policy for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaExclusion {
    pub reason: ExclusionReason,
    /// Distance to the violated area boundary, when the concept applies;
    /// consumed by the border corner-case policy.
    pub boundary_distance_m: Option<f64>,
}

fn nearest_boundary(polys: &[PolygonRef], p: [f64; 2]) -> Option<f64> {
    polys
        .iter()
        .map(|r| r.polygon().boundary_distance(p))
        .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.min(d))))
}

/// Applies the area policy to one observation. Checks run in documented
/// order: exclusion polygons (exclusion wins over inclusion), inclusion
/// polygons, class allow-list, class-specific maximum range.
pub fn area_exclusion(obs: &ObjectObservation, cfg: &AreasConfig) -> Option<AreaExclusion> {
    let p = obs.center();
    for poly in &cfg.exclude {
        if poly.polygon().contains(p) {
            return Some(AreaExclusion {
                reason: ExclusionReason::NoTestArea,
                boundary_distance_m: Some(poly.polygon().boundary_distance(p)),
            });
        }
    }
    if !cfg.include.is_empty() && !cfg.include.iter().any(|poly| poly.polygon().contains(p)) {
        return Some(AreaExclusion {
            reason: ExclusionReason::NoTestArea,
            boundary_distance_m: nearest_boundary(&cfg.include, p),
        });
    }
    if !cfg.class_allow.is_empty() && !cfg.class_allow.contains(&obs.class_label) {
        return Some(AreaExclusion {
            reason: ExclusionReason::ClassExcluded,
            boundary_distance_m: None,
        });
    }
    if let Some(max_range) = cfg.max_range_by_class.get(&obs.class_label) {
        let range = ((obs.x - cfg.range_origin[0]).powi(2) + (obs.y - cfg.range_origin[1]).powi(2))
            .sqrt();
        if range > *max_range {
            return Some(AreaExclusion {
                reason: ExclusionReason::NoTestArea,
                boundary_distance_m: Some(range - max_range),
            });
        }
    }
    None
}

/// Whether the area stage filters a recording with the given role before
/// matching.
pub fn area_stage_filters(stage: FilterStage, role: Role) -> bool {
    match stage {
        FilterStage::PreReference => role == Role::Res,
        FilterStage::PreMatching => true,
        FilterStage::PostMatching => false,
    }
}

/// Argmax class selection; returns the label to use.
pub fn selected_class(obs: &ObjectObservation, policy: ClassSelectionPolicy) -> String {
    if policy == ClassSelectionPolicy::Argmax {
        if let Some(confs) = &obs.class_confs {
            if let Some((label, _)) = confs
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
            {
                return label.clone();
            }
        }
    }
    obs.class_label.clone()
}

/// Existence-confidence gate; observations without a confidence channel
/// count as fully confident.
pub fn passes_confidence(obs: &ObjectObservation, tau_exist: f64) -> bool {
    obs.existence_conf.unwrap_or(1.0) >= tau_exist
}

/// Batch form of the confidence gate: relabels under `argmax` and splits
/// observations into kept and excluded.
pub fn confidence_gate(
    observations: &[ObjectObservation],
    tau_exist: f64,
    policy: ClassSelectionPolicy,
) -> (Vec<ObjectObservation>, Vec<ExclusionTag>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for obs in observations {
        let mut obs = obs.clone();
        obs.class_label = selected_class(&obs, policy);
        if passes_confidence(&obs, tau_exist) {
            kept.push(obs);
        } else {
            excluded.push(ExclusionTag {
                role: Role::Sut,
                track_id: obs.track_id.clone(),
                timestamp: obs.timestamp,
                reason: ExclusionReason::BelowConf,
                stage: FilterStage::PreMatching,
            });
        }
    }
    (kept, excluded)
}

/// Corner-case decision for a below-threshold pair in which exactly one
/// member was excluded by an area filter: may the excluded member be
/// reinstated for this match?
pub fn resolve_border_case(
    boundary_distance_m: Option<f64>,
    policy: &CornerCaseConfig,
) -> bool {
    match policy.policy {
        BorderPolicy::HardCut => false,
        BorderPolicy::FuzzyRescue => {
            boundary_distance_m.is_some_and(|d| d <= policy.margin_m)
        }
    }
}

/// Reporting-time visibility bin for a continuous occlusion fraction
/// (edges 0.4 / 0.6 / 0.8). Presentation only, never policy.
pub fn visibility_bin(occlusion: f64) -> &'static str {
    let visibility = 1.0 - occlusion;
    if visibility < 0.4 {
        "v0-40"
    } else if visibility < 0.6 {
        "v40-60"
    } else if visibility < 0.8 {
        "v60-80"
    } else {
        "v80-100"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AovShape, OracleConfig};
    use crate::geometry::Polygon2D;
    use std::collections::BTreeMap;

    fn obs_at(x: f64, y: f64) -> ObjectObservation {
        ObjectObservation::basic(0.0, "a", "car", x, y, 4.0, 2.0, 0.0)
    }

    fn overlap_aov() -> AovConfig {
        AovConfig {
            res: AovShape::Polygon {
                vertices: Polygon2D::rectangle(-5.0, -40.0, 70.0, 40.0),
            },
            sut: AovShape::Sector {
                origin: [0.0, 0.0],
                range_m: 50.0,
                fov_rad: 2.53,
            },
            ..AovConfig::default()
        }
    }

    #[test]
    fn aov_overlap_classification() {
        let cfg = overlap_aov();
        assert_eq!(classify_aov(&obs_at(20.0, 0.0), &cfg), AovClass::Both);
        // within the reference rectangle, beyond the sector range
        assert_eq!(classify_aov(&obs_at(55.0, 20.0), &cfg), AovClass::ResOnly);
        assert_eq!(classify_aov(&obs_at(-50.0, 0.0), &cfg), AovClass::Neither);
        assert_eq!(
            aov_exclusion(&obs_at(55.0, 20.0), &cfg),
            Some(ExclusionReason::OutsideSutAov)
        );
        assert_eq!(aov_exclusion(&obs_at(20.0, 0.0), &cfg), None);
    }

    #[test]
    fn unconfigured_aov_excludes_nothing() {
        let cfg = AovConfig::default();
        assert_eq!(classify_aov(&obs_at(1e6, 1e6), &cfg), AovClass::Both);
        assert_eq!(aov_exclusion(&obs_at(1e6, 1e6), &cfg), None);
    }

    #[test]
    fn p_detect_interpolates_and_clamps() {
        let map = [[10.0, 1.0], [30.0, 0.5], [50.0, 0.0]];
        assert_eq!(p_detect(&map, 0.0), 1.0);
        assert_eq!(p_detect(&map, 20.0), 0.75);
        assert_eq!(p_detect(&map, 50.0), 0.0);
        assert_eq!(p_detect(&map, 80.0), 0.0);
        assert_eq!(p_detect(&[], 123.0), 1.0);
    }

    #[test]
    fn unreliable_region_uses_the_worse_system() {
        let mut cfg = AovConfig::default();
        cfg.sut_p_detect = vec![[0.0, 1.0], [40.0, 0.2]];
        cfg.p_min = 0.5;
        assert!(!in_unreliable_region(&obs_at(0.0, 0.0), &cfg));
        assert!(in_unreliable_region(&obs_at(40.0, 0.0), &cfg));
    }

    #[test]
    fn occlusion_policy_ignore_excludes_nothing() {
        let cfg = OcclusionConfig::default();
        let target = obs_at(30.0, 0.0);
        let wall = ObjectObservation::basic(0.0, "wall", "truck", 15.0, 0.0, 1.0, 40.0, 0.0);
        let frame = [&target, &wall];
        assert!(occluded_res_indices(&frame, &cfg).is_empty());
    }

    #[test]
    fn fully_hidden_object_is_excluded_at_threshold_one() {
        let cfg = OcclusionConfig {
            policy: OcclusionPolicy::Exclude,
            threshold: 1.0,
            viewer: [0.0, 0.0],
        };
        let mut target = obs_at(30.0, 0.0);
        target.track_id = "g".into();
        let wall = ObjectObservation::basic(0.0, "wall", "truck", 15.0, 0.0, 1.0, 40.0, 0.0);
        let frame = [&target, &wall];
        assert_eq!(occluded_res_indices(&frame, &cfg), vec![0]);
    }

    #[test]
    fn partial_occlusion_below_threshold_is_kept() {
        // the collinear diagonal construction blocks 3 of 5 sight lines
        let cfg = OcclusionConfig {
            policy: OcclusionPolicy::Exclude,
            threshold: 0.8,
            viewer: [0.0, 0.0],
        };
        let mut target = ObjectObservation::basic(0.0, "t", "car", 10.0, 10.0, 2.0, 2.0, 0.0);
        target.track_id = "t".into();
        let blocker = ObjectObservation::basic(0.0, "b", "car", 5.0, 5.0, 0.5, 0.5, 0.0);
        let frame = [&target, &blocker];
        assert!(occluded_res_indices(&frame, &cfg).is_empty());
        let lower = OcclusionConfig {
            threshold: 0.6,
            ..cfg
        };
        assert_eq!(occluded_res_indices(&frame, &lower), vec![0]);
    }

    #[test]
    fn empty_area_policy_excludes_nothing() {
        assert_eq!(area_exclusion(&obs_at(123.0, -55.0), &AreasConfig::default()), None);
    }

    #[test]
    fn exclude_polygon_wins_and_reports_boundary_distance() {
        let mut cfg = AreasConfig::default();
        cfg.include = vec![PolygonRef::Inline(Polygon2D::rectangle(-100.0, -100.0, 100.0, 100.0))];
        cfg.exclude = vec![PolygonRef::Inline(Polygon2D::rectangle(0.0, 0.0, 10.0, 10.0))];
        let hit = area_exclusion(&obs_at(1.0, 5.0), &cfg).unwrap();
        assert_eq!(hit.reason, ExclusionReason::NoTestArea);
        assert!((hit.boundary_distance_m.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(area_exclusion(&obs_at(50.0, 50.0), &cfg), None);
    }

    #[test]
    fn class_and_range_filters() {
        let mut cfg = AreasConfig::default();
        cfg.class_allow = vec!["car".to_string()];
        let mut ped = obs_at(1.0, 1.0);
        ped.class_label = "pedestrian".into();
        assert_eq!(
            area_exclusion(&ped, &cfg).unwrap().reason,
            ExclusionReason::ClassExcluded
        );

        let mut cfg = AreasConfig::default();
        cfg.max_range_by_class = BTreeMap::from([("car".to_string(), 40.0)]);
        let hit = area_exclusion(&obs_at(45.0, 0.0), &cfg).unwrap();
        assert_eq!(hit.reason, ExclusionReason::NoTestArea);
        assert!((hit.boundary_distance_m.unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(area_exclusion(&obs_at(39.0, 0.0), &cfg), None);
    }

    #[test]
    fn confidence_gate_keeps_missing_conf() {
        let mut low = obs_at(0.0, 0.0);
        low.existence_conf = Some(0.9);
        let bare = obs_at(1.0, 0.0);
        let (kept, excluded) =
            confidence_gate(&[low.clone(), bare.clone()], 1.0, ClassSelectionPolicy::None);
        assert_eq!(kept.len(), 1);
        assert_eq!(excluded.len(), 1);
        assert_eq!(excluded[0].reason, ExclusionReason::BelowConf);
        let (kept, excluded) = confidence_gate(&[low, bare], 0.0, ClassSelectionPolicy::None);
        assert_eq!(kept.len(), 2);
        assert!(excluded.is_empty());
    }

    #[test]
    fn argmax_relabels() {
        let mut obs = obs_at(0.0, 0.0);
        obs.class_label = "unknown".into();
        obs.class_confs = Some(BTreeMap::from([
            ("car".to_string(), 0.7),
            ("truck".to_string(), 0.3),
        ]));
        assert_eq!(selected_class(&obs, ClassSelectionPolicy::Argmax), "car");
        assert_eq!(selected_class(&obs, ClassSelectionPolicy::None), "unknown");
    }

    #[test]
    fn border_rescue_needs_fuzzy_policy_and_margin() {
        let hard = CornerCaseConfig::default();
        assert!(!resolve_border_case(Some(0.1), &hard));
        let fuzzy = CornerCaseConfig {
            policy: BorderPolicy::FuzzyRescue,
            margin_m: 1.0,
        };
        assert!(resolve_border_case(Some(0.4), &fuzzy));
        assert!(!resolve_border_case(Some(1.4), &fuzzy));
        assert!(!resolve_border_case(None, &fuzzy));
    }

    #[test]
    fn monotone_tau_never_shrinks_exclusions() {
        // raising tau_exist keeps every previously excluded observation
        // excluded
        let mut observations = Vec::new();
        for i in 0..20 {
            let mut o = obs_at(i as f64, 0.0);
            o.track_id = format!("o{i}");
            o.existence_conf = Some(i as f64 / 19.0);
            observations.push(o);
        }
        let mut previous: Vec<String> = Vec::new();
        for step in 0..=10 {
            let tau = step as f64 / 10.0;
            let (_, excluded) = confidence_gate(&observations, tau, ClassSelectionPolicy::None);
            let ids: Vec<String> = excluded.into_iter().map(|t| t.track_id).collect();
            for id in &previous {
                assert!(ids.contains(id), "tau {tau} re-admitted {id}");
            }
            previous = ids;
        }
    }

    #[test]
    fn filters_are_idempotent() {
        let cfg = OracleConfig::default();
        let observations: Vec<ObjectObservation> =
            (0..5).map(|i| obs_at(i as f64 * 10.0, 0.0)).collect();
        let (kept1, _) = confidence_gate(&observations, 0.5, cfg.probabilistic.class_policy);
        let (kept2, excl2) = confidence_gate(&kept1, 0.5, cfg.probabilistic.class_policy);
        assert_eq!(kept1, kept2);
        assert!(excl2.is_empty());
    }

    #[test]
    fn visibility_bins_have_documented_edges() {
        assert_eq!(visibility_bin(0.0), "v80-100");
        assert_eq!(visibility_bin(0.2), "v80-100");
        assert_eq!(visibility_bin(0.3), "v60-80");
        assert_eq!(visibility_bin(0.5), "v40-60");
        assert_eq!(visibility_bin(0.9), "v0-40");
    }
}
