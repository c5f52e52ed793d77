//! Synthetic paired recordings with a constructively known expected ledger.
//!
//! The generator injects controlled failure modes (noise, dropouts, clutter,
//! duplicates, misclassifications, latency, fragmentation) into a perfect
//! ground-truth scene and books the expected TP/FP/FN verdict for every
//! injection as it happens. The bookkeeping never runs any matching, so it
//! is an independent oracle for the engine.
//!
//! Exactness is guaranteed by construction: ground-truth objects stay at
//! least three matching thresholds apart, perturbation magnitudes are
//! validated to keep every true pair inside the gate and every clutter
//! object outside it, and latency is restricted to whole frames.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{
    AovShape, Cardinality, Lifetime, MisclassPolicy, OracleConfig, OverhangPolicy, TimestampBasis,
};
use crate::filters::{ExclusionReason, ExclusionTag};
use crate::matching::{EventFlag, EventKind, MatchEvent};
use crate::model::{ObjectObservation, Recording, Role};
use crate::verdict::VerdictLedger;

mod figures;

pub use figures::{figure2_scene, figure3_scene, ExpectedVerdict, Figure2Scene, Figure3Scene};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("scene spec invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}

/// Motion model of one ground-truth object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    ConstantVelocity { x0: f64, y0: f64, vx: f64, vy: f64 },
    /// Piecewise-linear waypoints as `[t, x, y]`, strictly increasing in t.
    Waypoints { points: Vec<[f64; 3]> },
}

impl Motion {
    pub fn position(&self, t: f64) -> [f64; 2] {
        match self {
            Motion::ConstantVelocity { x0, y0, vx, vy } => [x0 + vx * t, y0 + vy * t],
            Motion::Waypoints { points } => {
                if points.is_empty() {
                    return [0.0, 0.0];
                }
                if t <= points[0][0] {
                    return [points[0][1], points[0][2]];
                }
                for w in points.windows(2) {
                    if t <= w[1][0] {
                        let f = (t - w[0][0]) / (w[1][0] - w[0][0]);
                        return [
                            w[0][1] + f * (w[1][1] - w[0][1]),
                            w[0][2] + f * (w[1][2] - w[0][2]),
                        ];
                    }
                }
                let last = points.last().unwrap();
                [last[1], last[2]]
            }
        }
    }

    pub fn velocity(&self, t: f64) -> [f64; 2] {
        match self {
            Motion::ConstantVelocity { vx, vy, .. } => [*vx, *vy],
            Motion::Waypoints { points } => {
                for w in points.windows(2) {
                    if t <= w[1][0] {
                        let dt = w[1][0] - w[0][0];
                        return [(w[1][1] - w[0][1]) / dt, (w[1][2] - w[0][2]) / dt];
                    }
                }
                [0.0, 0.0]
            }
        }
    }

    fn max_speed(&self) -> f64 {
        match self {
            Motion::ConstantVelocity { vx, vy, .. } => vx.hypot(*vy),
            Motion::Waypoints { points } => points
                .windows(2)
                .map(|w| {
                    let dt = w[1][0] - w[0][0];
                    ((w[1][1] - w[0][1]) / dt).hypot((w[1][2] - w[0][2]) / dt)
                })
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtTrack {
    pub id: String,
    pub class: String,
    pub start_s: f64,
    pub end_s: f64,
    pub motion: Motion,
    #[serde(default = "default_length")]
    pub length_m: f64,
    #[serde(default = "default_width")]
    pub width_m: f64,
}

fn default_length() -> f64 {
    4.0
}

fn default_width() -> f64 {
    2.0
}

/// Failure modes injected into the recording under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationModel {
    pub pos_sigma_m: f64,
    pub dropout_per_frame_prob: f64,
    /// Expected spurious detections per frame (spatial Poisson over the SUT
    /// area of vision, kept clear of ground truth).
    pub clutter_rate_per_frame: f64,
    /// Constant computation latency; must be a whole number of frames.
    pub latency_s: f64,
    /// Per-frame probability that the SUT track id changes from then on.
    pub fragmentation_prob: f64,
    /// Per-frame probability of a second detection of the same object.
    pub duplicate_prob: f64,
    /// Per-frame probability of a wrong class label on the primary detection.
    pub misclass_prob: f64,
    pub existence_conf_real: f64,
    pub existence_conf_clutter: f64,
}

impl Default for PerturbationModel {
    fn default() -> Self {
        PerturbationModel {
            pos_sigma_m: 0.0,
            dropout_per_frame_prob: 0.0,
            clutter_rate_per_frame: 0.0,
            latency_s: 0.0,
            fragmentation_prob: 0.0,
            duplicate_prob: 0.0,
            misclass_prob: 0.0,
            existence_conf_real: 0.9,
            existence_conf_clutter: 0.3,
        }
    }
}

/// A complete synthetic scenario: ground truth, perturbations, and the
/// oracle configuration the expected ledger is booked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub gt_tracks: Vec<GtTrack>,
    pub res_noise_sigma_m: f64,
    pub sut_model: PerturbationModel,
    pub oracle: OracleConfig,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            duration_s: 10.0,
            rate_hz: 10.0,
            gt_tracks: Vec::new(),
            res_noise_sigma_m: 0.0,
            sut_model: PerturbationModel::default(),
            oracle: OracleConfig::default(),
        }
    }
}

pub struct SyntheticScene {
    pub res: Recording,
    pub sut: Recording,
    pub expected: VerdictLedger,
}

/// Offset of duplicate detections, as a fraction of the matching threshold.
const DUPLICATE_OFFSET_FRACTION: f64 = 0.25;
/// Perturbation draws are clamped to this many sigmas.
const NOISE_CLAMP_SIGMA: f64 = 2.5;
/// Required clear radius around ground truth, in matching thresholds.
const GT_SPACING_FACTOR: f64 = 3.0;

fn wrong_class(class: &str) -> String {
    let pool = ["car", "truck", "pedestrian", "cyclist"];
    pool.iter()
        .find(|c| **c != class)
        .unwrap_or(&"unknown")
        .to_string()
}

impl SceneSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let spec: SceneSpec =
            toml::from_str(text).map_err(|e| SynthError::Invalid(e.to_string()))?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scene spec serializes")
    }

    fn frame_count(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }

    fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    fn latency_frames(&self) -> usize {
        (self.sut_model.latency_s * self.rate_hz).round() as usize
    }

    fn effective_latency(&self) -> f64 {
        if self.oracle.temporal.basis == TimestampBasis::Availability {
            self.sut_model.latency_s
        } else {
            0.0
        }
    }

    /// Frame-index window of a track on the scene grid.
    fn track_window(&self, track: &GtTrack, frames: usize) -> (usize, usize) {
        let first = (track.start_s * self.rate_hz - 1e-9).ceil().max(0.0) as usize;
        let last = ((track.end_s * self.rate_hz + 1e-9).floor() as usize).min(frames.saturating_sub(1));
        (first, last)
    }

    fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Invalid(m));
        if !(self.rate_hz > 0.0) {
            return fail(format!("rate_hz must be > 0, got {}", self.rate_hz));
        }
        if self.frame_count() == 0 {
            return fail("duration_s and rate_hz give zero frames".to_string());
        }
        if self.res_noise_sigma_m < 0.0 {
            return fail("res_noise_sigma_m must be >= 0".to_string());
        }
        let m = &self.sut_model;
        for (name, p) in [
            ("dropout_per_frame_prob", m.dropout_per_frame_prob),
            ("fragmentation_prob", m.fragmentation_prob),
            ("duplicate_prob", m.duplicate_prob),
            ("misclass_prob", m.misclass_prob),
            ("existence_conf_real", m.existence_conf_real),
            ("existence_conf_clutter", m.existence_conf_clutter),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("sut_model.{name} = {p} outside [0, 1]"));
            }
        }
        if m.pos_sigma_m < 0.0 || m.clutter_rate_per_frame < 0.0 || m.latency_s < 0.0 {
            return fail("sut_model magnitudes must be >= 0".to_string());
        }
        self.oracle.validate()?;

        // bookkeeping is defined for frame-wise matching without geometric
        // exclusions; other policies are exercised by the figure scenes
        if self.oracle.assignment.lifetime != Lifetime::Frame {
            return fail("expected-ledger bookkeeping requires assignment.lifetime = \"frame\"".into());
        }
        if !matches!(
            self.oracle.assignment.cardinality,
            Cardinality::OneOne | Cardinality::NOne
        ) {
            return fail("bookkeeping requires cardinality one_one or n_one".into());
        }
        if !self.oracle.areas.include.is_empty()
            || !self.oracle.areas.exclude.is_empty()
            || !self.oracle.areas.class_allow.is_empty()
            || !self.oracle.areas.max_range_by_class.is_empty()
        {
            return fail("bookkeeping requires an empty areas policy".into());
        }
        if self.oracle.aov.p_min > 0.0 {
            return fail("bookkeeping requires aov.p_min = 0".into());
        }
        if self.oracle.occlusion.policy == crate::config::OcclusionPolicy::Exclude {
            return fail("bookkeeping requires occlusion policy ignore or test_anyway".into());
        }
        if self.oracle.alignment.transform != crate::geometry::Transform::Identity {
            return fail("bookkeeping requires an identity alignment transform".into());
        }
        if !self.oracle.distance.class_gate
            && m.misclass_prob > 0.0
            && (m.duplicate_prob > 0.0
                || self.oracle.probabilistic.misclass == MisclassPolicy::TpWrongClass)
        {
            // with the gate off, duplicates compete with misclassified
            // primaries in ways bookkeeping cannot predict; tp_wrong_class
            // is fine, fp_plus_fn with duplicates is not
            if m.duplicate_prob > 0.0 {
                return fail(
                    "bookkeeping cannot combine misclass_prob with duplicates while the class gate is off"
                        .into(),
                );
            }
        }

        // latency must be whole frames and declared consistently
        let lf = self.sut_model.latency_s * self.rate_hz;
        if (lf - lf.round()).abs() > 1e-6 {
            return fail(format!(
                "latency_s = {} is not a whole number of frames at {} Hz",
                self.sut_model.latency_s, self.rate_hz
            ));
        }
        if self.oracle.temporal.basis == TimestampBasis::Availability {
            match self.oracle.temporal.sut_latency_s.get() {
                Some(l) if (l - self.sut_model.latency_s).abs() < 1e-9 => {}
                other => {
                    return fail(format!(
                        "availability basis requires oracle.temporal.sut_latency_s = {} (found {:?})",
                        self.sut_model.latency_s, other
                    ))
                }
            }
            if !self.oracle.temporal.sut_latency_series.is_empty() {
                return fail("bookkeeping supports constant latency only".into());
            }
        }

        // perturbations must keep true pairs inside the gate
        let threshold = self.oracle.distance.threshold;
        let max_speed = self
            .gt_tracks
            .iter()
            .map(|t| t.motion.max_speed())
            .fold(0.0, f64::max);
        let dup_offset = if m.duplicate_prob > 0.0 {
            DUPLICATE_OFFSET_FRACTION * threshold
        } else {
            0.0
        };
        let worst = NOISE_CLAMP_SIGMA * (self.res_noise_sigma_m + m.pos_sigma_m)
            + max_speed * self.effective_latency()
            + dup_offset;
        if worst > 0.9 * threshold {
            return fail(format!(
                "perturbations can push true pairs to {worst:.3} m, above 90% of the {threshold} m gate"
            ));
        }
        if self.oracle.distance.metric != crate::config::Metric::Center2d {
            return fail("bookkeeping is defined for the center2d metric".into());
        }

        // ground-truth spacing and area-of-vision containment
        let frames = self.frame_count();
        for i in 0..self.gt_tracks.len() {
            let (fi, li) = self.track_window(&self.gt_tracks[i], frames);
            if fi > li {
                return fail(format!("gt track {} never appears on the grid", self.gt_tracks[i].id));
            }
            for j in i + 1..self.gt_tracks.len() {
                let (fj, lj) = self.track_window(&self.gt_tracks[j], frames);
                for f in fi.max(fj)..=li.min(lj) {
                    let t = f as f64 * self.dt();
                    let a = self.gt_tracks[i].motion.position(t);
                    let b = self.gt_tracks[j].motion.position(t);
                    let d = (a[0] - b[0]).hypot(a[1] - b[1]);
                    if d < GT_SPACING_FACTOR * threshold {
                        return fail(format!(
                            "gt tracks {} and {} are {d:.2} m apart at t={t:.2}, below {} thresholds",
                            self.gt_tracks[i].id, self.gt_tracks[j].id, GT_SPACING_FACTOR
                        ));
                    }
                }
            }
            if self.oracle.aov.enforce_overlap {
                for f in fi..=li {
                    let t = f as f64 * self.dt();
                    let p = self.gt_tracks[i].motion.position(t);
                    if !self.oracle.aov.res.contains(p) || !self.oracle.aov.sut.contains(p) {
                        return fail(format!(
                            "gt track {} leaves the configured area of vision at t={t:.2}",
                            self.gt_tracks[i].id
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Bounding region for clutter placement.
fn clutter_region(spec: &SceneSpec) -> (f64, f64, f64, f64) {
    if let AovShape::Sector {
        origin, range_m, ..
    } = &spec.oracle.aov.sut
    {
        return (
            origin[0] - range_m,
            origin[1] - range_m,
            origin[0] + range_m,
            origin[1] + range_m,
        );
    }
    let mut lo_x = f64::INFINITY;
    let mut lo_y = f64::INFINITY;
    let mut hi_x = f64::NEG_INFINITY;
    let mut hi_y = f64::NEG_INFINITY;
    let frames = spec.frame_count();
    for track in &spec.gt_tracks {
        let (fi, li) = spec.track_window(track, frames);
        for f in fi..=li {
            let p = track.motion.position(f as f64 * spec.dt());
            lo_x = lo_x.min(p[0]);
            lo_y = lo_y.min(p[1]);
            hi_x = hi_x.max(p[0]);
            hi_y = hi_y.max(p[1]);
        }
    }
    if !lo_x.is_finite() {
        return (-50.0, -50.0, 50.0, 50.0);
    }
    let margin = 10.0 * spec.oracle.distance.threshold;
    (lo_x - margin, lo_y - margin, hi_x + margin, hi_y + margin)
}

fn clamp_noise(rng: &mut ChaCha8Rng, sigma: f64) -> [f64; 2] {
    if sigma <= 0.0 {
        return [0.0, 0.0];
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut dx = normal.sample(rng);
    let mut dy = normal.sample(rng);
    let r = dx.hypot(dy);
    let limit = NOISE_CLAMP_SIGMA * sigma;
    if r > limit {
        dx *= limit / r;
        dy *= limit / r;
    }
    [dx, dy]
}

/// Generates the paired recordings and the expected verdict ledger.
///
/// Deterministic: the same spec (seed included) produces byte-identical
/// recordings and ledger.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let frames = spec.frame_count();
    let dt = spec.dt();
    let latency = spec.effective_latency();
    let latency_frames = if latency > 0.0 { spec.latency_frames() } else { 0 };
    let threshold = spec.oracle.distance.threshold;
    let class_gate = spec.oracle.distance.class_gate;
    let n_one = spec.oracle.assignment.cardinality == Cardinality::NOne;

    struct FrameRecord {
        emitted: bool,
        misclassed: bool,
        duplicated: bool,
        sut_id: String,
    }
    // per track: frame index -> record
    let mut history: Vec<Vec<Option<FrameRecord>>> =
        spec.gt_tracks.iter().map(|_| vec![None; frames]).collect();

    let mut res_obs: Vec<ObjectObservation> = Vec::new();
    let mut sut_obs: Vec<ObjectObservation> = Vec::new();
    let mut clutter_fp: Vec<(String, String, f64)> = Vec::new(); // id, class, stamped t
    let mut frag_counter: Vec<usize> = vec![0; spec.gt_tracks.len()];

    let region = clutter_region(spec);
    let windows: Vec<(usize, usize)> = spec
        .gt_tracks
        .iter()
        .map(|t| spec.track_window(t, frames))
        .collect();

    for frame in 0..frames {
        let t = frame as f64 * dt;
        for (ti, track) in spec.gt_tracks.iter().enumerate() {
            let (first, last) = windows[ti];
            if frame < first || frame > last {
                continue;
            }
            if frame > first && rng.gen::<f64>() < spec.sut_model.fragmentation_prob {
                frag_counter[ti] += 1;
            }
            let gt = track.motion.position(t);
            let v = track.motion.velocity(t);
            let drop = rng.gen::<f64>() < spec.sut_model.dropout_per_frame_prob;
            let rn = clamp_noise(&mut rng, spec.res_noise_sigma_m);

            let mut res = ObjectObservation::basic(
                t,
                &format!("res-{}", track.id),
                &track.class,
                gt[0] + rn[0],
                gt[1] + rn[1],
                track.length_m,
                track.width_m,
                v[1].atan2(v[0]),
            );
            res.vx = v[0];
            res.vy = v[1];
            res_obs.push(res);

            let mut record = FrameRecord {
                emitted: false,
                misclassed: false,
                duplicated: false,
                sut_id: format!("sut-{}-{}", track.id, frag_counter[ti]),
            };
            if !drop {
                record.emitted = true;
                let sn = clamp_noise(&mut rng, spec.sut_model.pos_sigma_m);
                let duplicated = rng.gen::<f64>() < spec.sut_model.duplicate_prob;
                let misclassed = rng.gen::<f64>() < spec.sut_model.misclass_prob && !duplicated;
                let conf: f64 = (spec.sut_model.existence_conf_real
                    + 0.15 * (rng.gen::<f64>() - 0.5))
                    .clamp(0.0, 1.0);
                record.misclassed = misclassed;
                record.duplicated = duplicated;
                let class = if misclassed {
                    wrong_class(&track.class)
                } else {
                    track.class.clone()
                };
                let mut primary = ObjectObservation::basic(
                    t + latency,
                    &record.sut_id,
                    &class,
                    gt[0] + sn[0],
                    gt[1] + sn[1],
                    track.length_m,
                    track.width_m,
                    v[1].atan2(v[0]),
                );
                primary.vx = v[0];
                primary.vy = v[1];
                primary.existence_conf = Some(conf);
                sut_obs.push(primary);
                if duplicated {
                    let angle = rng.gen::<f64>() * std::f64::consts::TAU;
                    let off = DUPLICATE_OFFSET_FRACTION * threshold;
                    let mut dup = ObjectObservation::basic(
                        t + latency,
                        &format!("sut-{}-dup", track.id),
                        &track.class,
                        gt[0] + sn[0] + off * angle.cos(),
                        gt[1] + sn[1] + off * angle.sin(),
                        track.length_m,
                        track.width_m,
                        v[1].atan2(v[0]),
                    );
                    dup.vx = v[0];
                    dup.vy = v[1];
                    dup.existence_conf = Some(conf);
                    sut_obs.push(dup);
                }
            }
            history[ti][frame] = Some(record);
        }

        // clutter: spurious detections away from all ground truth
        if spec.sut_model.clutter_rate_per_frame > 0.0 {
            let poisson =
                Poisson::new(spec.sut_model.clutter_rate_per_frame).expect("valid rate");
            let count = poisson.sample(&mut rng) as usize;
            for j in 0..count {
                let mut placed = None;
                for _ in 0..1000 {
                    let x = region.0 + rng.gen::<f64>() * (region.2 - region.0);
                    let y = region.1 + rng.gen::<f64>() * (region.3 - region.1);
                    if spec.oracle.aov.enforce_overlap
                        && (!spec.oracle.aov.res.contains([x, y])
                            || !spec.oracle.aov.sut.contains([x, y]))
                    {
                        continue;
                    }
                    let clear = spec.gt_tracks.iter().enumerate().all(|(ti, track)| {
                        let (first, last) = windows[ti];
                        if frame < first || frame > last {
                            return true;
                        }
                        let p = track.motion.position(t);
                        (p[0] - x).hypot(p[1] - y) >= GT_SPACING_FACTOR * threshold
                    });
                    if clear {
                        placed = Some([x, y]);
                        break;
                    }
                }
                let Some(p) = placed else {
                    return Err(SynthError::Invalid(
                        "could not place clutter clear of ground truth".to_string(),
                    ));
                };
                let conf: f64 = (spec.sut_model.existence_conf_clutter
                    + 0.15 * (rng.gen::<f64>() - 0.5))
                    .clamp(0.0, 1.0);
                let id = format!("clutter-{frame}-{j}");
                let mut obs =
                    ObjectObservation::basic(t + latency, &id, "car", p[0], p[1], 4.0, 2.0, 0.0);
                obs.existence_conf = Some(conf);
                sut_obs.push(obs);
                clutter_fp.push((id, "car".to_string(), t + latency));
            }
        }
    }

    // ----- expected ledger from injection bookkeeping -----
    let clock_start = latency; // SUT grid begins after the first latency shift
    let mut events: Vec<MatchEvent> = Vec::new();
    let mut exclusions: Vec<ExclusionTag> = Vec::new();
    let misclass_policy = spec.oracle.probabilistic.misclass;

    let push = |events: &mut Vec<MatchEvent>,
                kind: EventKind,
                t: f64,
                sut: Option<(&str, &str)>,
                res: Option<(&str, &str)>,
                overhang: bool| {
        let mut flags = BTreeSet::new();
        if overhang {
            flags.insert(EventFlag::Overhang);
        }
        events.push(MatchEvent {
            timestamp: t,
            frame: None,
            kind,
            sut_id: sut.map(|(id, _)| id.to_string()),
            res_id: res.map(|(id, _)| id.to_string()),
            prev_sut_id: None,
            sut_class: sut.map(|(_, c)| c.to_string()),
            res_class: res.map(|(_, c)| c.to_string()),
            cost: None,
            flags,
        });
    };

    for (ti, track) in spec.gt_tracks.iter().enumerate() {
        let res_id = format!("res-{}", track.id);
        let (first, last) = windows[ti];
        for frame in first..=last {
            let t = frame as f64 * dt;
            let res_ref = (res_id.as_str(), track.class.as_str());
            if t + 1e-12 < clock_start {
                // reference observation before the shifted clock begins
                match spec.oracle.temporal.overhang {
                    OverhangPolicy::Discard => exclusions.push(ExclusionTag {
                        role: Role::Res,
                        track_id: res_id.clone(),
                        timestamp: t,
                        reason: ExclusionReason::OverhangDiscarded,
                        stage: crate::config::FilterStage::PostMatching,
                    }),
                    OverhangPolicy::FnFp => {
                        push(&mut events, EventKind::Fn, t, None, Some(res_ref), true)
                    }
                    OverhangPolicy::Threshold => {
                        let gap = clock_start - t;
                        if gap < spec.oracle.temporal.overhang_dt_max_s {
                            exclusions.push(ExclusionTag {
                                role: Role::Res,
                                track_id: res_id.clone(),
                                timestamp: t,
                                reason: ExclusionReason::OverhangDiscarded,
                                stage: crate::config::FilterStage::PostMatching,
                            });
                        } else {
                            push(&mut events, EventKind::Fn, t, None, Some(res_ref), true);
                        }
                    }
                }
                continue;
            }
            // the SUT observation landing on this clock time was acquired
            // `latency_frames` earlier
            let covering = frame
                .checked_sub(latency_frames)
                .filter(|f| *f >= first)
                .and_then(|f| history[ti][f].as_ref())
                .filter(|r| r.emitted);
            match covering {
                None => push(&mut events, EventKind::Fn, t, None, Some(res_ref), false),
                Some(record) => {
                    let sut_ref = (record.sut_id.as_str(), track.class.as_str());
                    let wrong = wrong_class(&track.class);
                    let dup_id = format!("sut-{}-dup", track.id);
                    let dup_ref = (dup_id.as_str(), track.class.as_str());
                    if record.misclassed {
                        let mis_ref = (record.sut_id.as_str(), wrong.as_str());
                        if class_gate {
                            push(&mut events, EventKind::Fp, t, Some(mis_ref), None, false);
                            push(&mut events, EventKind::Fn, t, None, Some(res_ref), false);
                        } else {
                            match misclass_policy {
                                MisclassPolicy::TpWrongClass => {
                                    push(&mut events, EventKind::Tp, t, Some(mis_ref), Some(res_ref), false)
                                }
                                MisclassPolicy::FpPlusFn => {
                                    push(&mut events, EventKind::Fp, t, Some(mis_ref), None, false);
                                    push(&mut events, EventKind::Fn, t, None, Some(res_ref), false);
                                }
                            }
                        }
                    } else {
                        push(&mut events, EventKind::Tp, t, Some(sut_ref), Some(res_ref), false);
                        if record.duplicated {
                            if n_one {
                                push(&mut events, EventKind::Tp, t, Some(dup_ref), Some(res_ref), false);
                            } else {
                                push(&mut events, EventKind::Fp, t, Some(dup_ref), None, false);
                            }
                        }
                    }
                }
            }
        }
        // SUT detections stamped past the reference track's end
        let tail_lo = last.saturating_sub(latency_frames.saturating_sub(1));
        if latency_frames > 0 {
            for frame in tail_lo..=last {
                if let Some(record) = history[ti][frame].as_ref().filter(|r| r.emitted) {
                    let stamped = frame as f64 * dt + latency;
                    let sut_ref = (
                        record.sut_id.as_str(),
                        if record.misclassed { "" } else { track.class.as_str() },
                    );
                    let class = if record.misclassed {
                        wrong_class(&track.class)
                    } else {
                        track.class.clone()
                    };
                    push(
                        &mut events,
                        EventKind::Fp,
                        stamped,
                        Some((sut_ref.0, class.as_str())),
                        None,
                        false,
                    );
                    if record.duplicated {
                        let dup_id = format!("sut-{}-dup", track.id);
                        push(
                            &mut events,
                            EventKind::Fp,
                            stamped,
                            Some((dup_id.as_str(), track.class.as_str())),
                            None,
                            false,
                        );
                    }
                }
            }
        }
    }
    for (id, class, t) in &clutter_fp {
        push(&mut events, EventKind::Fp, *t, Some((id, class)), None, false);
    }

    crate::matching::sort_events(&mut events);
    let mut res_rec = Recording::from_observations(Role::Res, res_obs);
    res_rec
        .sensor_meta
        .insert("generator".to_string(), "synthetic scene".to_string());
    res_rec
        .sensor_meta
        .insert("epoch".to_string(), "scene-local seconds".to_string());
    let mut sut_rec = Recording::from_observations(Role::Sut, sut_obs);
    sut_rec
        .sensor_meta
        .insert("generator".to_string(), "synthetic scene".to_string());
    sut_rec
        .sensor_meta
        .insert("epoch".to_string(), "scene-local seconds".to_string());
    // full stamped grid, so frames with zero detections still exist
    sut_rec.frame_times = Some((0..frames).map(|f| f as f64 * dt + latency).collect());

    Ok(SyntheticScene {
        res: res_rec,
        sut: sut_rec,
        expected: VerdictLedger {
            events,
            exclusions,
            annex: Vec::new(),
            config_echo: spec.oracle.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::evaluate;
    use crate::model::io::recording_to_string;
    use crate::verdict::{aggregate, count_kinds};

    fn lane_spec(seed: u64) -> SceneSpec {
        let mut spec = SceneSpec {
            seed,
            duration_s: 5.0,
            rate_hz: 10.0,
            res_noise_sigma_m: 0.05,
            ..SceneSpec::default()
        };
        for lane in 0..3 {
            spec.gt_tracks.push(GtTrack {
                id: format!("t{lane}"),
                class: "car".to_string(),
                start_s: 0.0,
                end_s: 5.0,
                motion: Motion::ConstantVelocity {
                    x0: 0.0,
                    y0: lane as f64 * 8.0,
                    vx: 5.0,
                    vy: 0.0,
                },
                length_m: 4.0,
                width_m: 2.0,
            });
        }
        spec
    }

    #[test]
    fn zero_perturbation_scene_is_all_tp() {
        let mut spec = lane_spec(7);
        spec.res_noise_sigma_m = 0.0;
        let scene = generate(&spec).unwrap();
        let counts = count_kinds(&scene.expected.events);
        assert_eq!(counts.get(&EventKind::Tp), Some(&150));
        assert_eq!(counts.get(&EventKind::Fp), None);
        assert_eq!(counts.get(&EventKind::Fn), None);
    }

    #[test]
    fn seeded_generation_is_byte_identical() {
        let spec = {
            let mut s = lane_spec(42);
            s.sut_model.dropout_per_frame_prob = 0.1;
            s.sut_model.clutter_rate_per_frame = 0.3;
            s
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(recording_to_string(&a.res), recording_to_string(&b.res));
        assert_eq!(recording_to_string(&a.sut), recording_to_string(&b.sut));
        assert_eq!(
            serde_json::to_string(&a.expected).unwrap(),
            serde_json::to_string(&b.expected).unwrap()
        );
    }

    #[test]
    fn dropout_bookkeeping_matches_engine_exactly() {
        let mut spec = lane_spec(11);
        spec.sut_model.dropout_per_frame_prob = 0.15;
        let scene = generate(&spec).unwrap();
        let evaluation = evaluate(&scene.sut, &scene.res, &spec.oracle).unwrap();
        let expected = aggregate(&scene.expected);
        assert_eq!(evaluation.summary.tp, expected.tp);
        assert_eq!(evaluation.summary.fp, expected.fp);
        assert_eq!(evaluation.summary.fn_, expected.fn_);
        assert!(expected.fn_ > 0, "seed should produce some dropouts");
    }

    #[test]
    fn clutter_becomes_fp_one_for_one() {
        let mut spec = lane_spec(13);
        spec.sut_model.clutter_rate_per_frame = 0.5;
        let scene = generate(&spec).unwrap();
        let clutter_count = scene
            .sut
            .iter_observations()
            .filter(|o| o.track_id.starts_with("clutter-"))
            .count() as u64;
        let expected = aggregate(&scene.expected);
        assert_eq!(expected.fp, clutter_count);
        assert!(clutter_count > 0);
        let evaluation = evaluate(&scene.sut, &scene.res, &spec.oracle).unwrap();
        assert_eq!(evaluation.summary.fp, clutter_count);
    }

    #[test]
    fn latency_head_frames_become_fn() {
        let mut spec = lane_spec(17);
        spec.sut_model.latency_s = 0.3;
        spec.oracle.temporal.basis = TimestampBasis::Availability;
        spec.oracle.temporal.sut_latency_s = 0.3.into();
        let scene = generate(&spec).unwrap();
        let expected = aggregate(&scene.expected);
        // 3 head FNs and 3 stamped-past-the-end FPs per track
        assert_eq!(expected.fn_, 9);
        assert_eq!(expected.fp, 9);
        let evaluation = evaluate(&scene.sut, &scene.res, &spec.oracle).unwrap();
        assert_eq!(evaluation.summary.tp, expected.tp);
        assert_eq!(evaluation.summary.fp, expected.fp);
        assert_eq!(evaluation.summary.fn_, expected.fn_);
    }

    #[test]
    fn duplicates_follow_cardinality() {
        let mut spec = lane_spec(19);
        spec.sut_model.duplicate_prob = 0.2;
        let scene = generate(&spec).unwrap();
        let expected = aggregate(&scene.expected);
        assert!(expected.fp > 0);
        let evaluation = evaluate(&scene.sut, &scene.res, &spec.oracle).unwrap();
        assert_eq!(evaluation.summary.fp, expected.fp);
        assert_eq!(evaluation.summary.tp, expected.tp);

        let mut n_one = spec.clone();
        n_one.oracle.assignment.cardinality = Cardinality::NOne;
        let scene = generate(&n_one).unwrap();
        let expected = aggregate(&scene.expected);
        assert_eq!(expected.fp, 0, "n:1 absorbs duplicates");
        let evaluation = evaluate(&scene.sut, &scene.res, &n_one.oracle).unwrap();
        assert_eq!(evaluation.summary.tp, expected.tp);
        assert_eq!(evaluation.summary.fp, 0);
    }

    #[test]
    fn spacing_violations_are_rejected() {
        let mut spec = lane_spec(1);
        spec.gt_tracks[1].motion = Motion::ConstantVelocity {
            x0: 0.0,
            y0: 3.0, // only 1.5 thresholds from lane 0
            vx: 5.0,
            vy: 0.0,
        };
        assert!(matches!(generate(&spec), Err(SynthError::Invalid(_))));
    }

    #[test]
    fn oversized_noise_is_rejected() {
        let mut spec = lane_spec(1);
        spec.res_noise_sigma_m = 1.0;
        assert!(matches!(generate(&spec), Err(SynthError::Invalid(_))));
    }
}
