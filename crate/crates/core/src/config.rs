//! Oracle configuration: every degree of freedom of the verdict pipeline as
//! an explicit field with a documented default.
//!
//! The file format is TOML with one section per concern: `aov`, `occlusion`,
//! `labeling_meta`, `areas`, `alignment`, `distance`, `assignment`,
//! `corner_cases`, `temporal`, `probabilistic`. Loading applies defaults and
//! echoes the complete configuration back into every report, so a report is
//! never ambiguous about what it was produced with. Unknown keys and
//! out-of-range values are fatal.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{Polygon2D, Transform};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config schema error: {0}")]
    Schema(String),
}

/// Explicitly optional scalar. Serialized as the literal string `"unset"`
/// or the value itself, so the echoed configuration never omits a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Maybe<T> {
    Value(T),
    Unset(UnsetMarker),
}

impl<T: Copy> Maybe<T> {
    pub fn get(&self) -> Option<T> {
        match self {
            Maybe::Value(v) => Some(*v),
            Maybe::Unset(_) => None,
        }
    }
}

impl<T> Maybe<T> {
    pub fn unset() -> Self {
        Maybe::Unset(UnsetMarker)
    }
}

impl<T> From<T> for Maybe<T> {
    fn from(v: T) -> Self {
        Maybe::Value(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnsetMarker;

impl Serialize for UnsetMarker {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("unset")
    }
}

impl<'de> Deserialize<'de> for UnsetMarker {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        if raw == "unset" {
            Ok(UnsetMarker)
        } else {
            Err(serde::de::Error::custom(format!(
                "expected a value or the string \"unset\", got {raw:?}"
            )))
        }
    }
}

/// Area-of-vision geometry of one system. A sector points along +x from its
/// origin; membership is `range <= range_m` and `|azimuth| <= fov_rad / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AovShape {
    None,
    Polygon { vertices: Polygon2D },
    Sector {
        origin: [f64; 2],
        range_m: f64,
        fov_rad: f64,
    },
}

impl Default for AovShape {
    fn default() -> Self {
        AovShape::None
    }
}

impl AovShape {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            AovShape::None => true,
            AovShape::Polygon { vertices } => vertices.contains(p),
            AovShape::Sector {
                origin,
                range_m,
                fov_rad,
            } => {
                let dx = p[0] - origin[0];
                let dy = p[1] - origin[1];
                let range = (dx * dx + dy * dy).sqrt();
                let azimuth = dy.atan2(dx);
                range <= *range_m && azimuth.abs() <= fov_rad / 2.0
            }
        }
    }

    pub fn origin(&self) -> [f64; 2] {
        match self {
            AovShape::Sector { origin, .. } => *origin,
            _ => [0.0, 0.0],
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, AovShape::None)
    }
}

/// Polygon given inline or by reference to a JSON file holding an array of
/// `[x, y]` pairs. File references are resolved at load time, so a loaded
/// configuration always carries inline geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolygonRef {
    Inline(Polygon2D),
    File { file: String },
}

impl PolygonRef {
    pub fn polygon(&self) -> &Polygon2D {
        match self {
            PolygonRef::Inline(p) => p,
            PolygonRef::File { file } => {
                panic!("unresolved polygon file reference {file:?}; load via load_config")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AovConfig {
    pub res: AovShape,
    pub sut: AovShape,
    /// When true, observations outside either configured area of vision are
    /// excluded before matching; when false, the geometry is documentation
    /// only.
    pub enforce_overlap: bool,
    /// Piecewise-linear detection probability over range from the system
    /// origin, as `[range_m, p]` breakpoints with non-increasing p.
    pub res_p_detect: Vec<[f64; 2]>,
    pub sut_p_detect: Vec<[f64; 2]>,
    /// Observations in regions where either detection probability falls
    /// below this value are moved to the unreliable-region annex.
    pub p_min: f64,
}

impl Default for AovConfig {
    fn default() -> Self {
        AovConfig {
            res: AovShape::None,
            sut: AovShape::None,
            enforce_overlap: true,
            res_p_detect: Vec::new(),
            sut_p_detect: Vec::new(),
            p_min: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionPolicy {
    /// Occlusion is not evaluated at all.
    Ignore,
    /// Reference objects whose occlusion fraction reaches `threshold` are
    /// excluded, together with system observations within matching range of
    /// them.
    Exclude,
    /// Occlusion fractions are computed for reporting, but nothing is
    /// excluded: the system is expected to see behind occlusions.
    TestAnyway,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcclusionConfig {
    pub policy: OcclusionPolicy,
    /// Fraction of blocked sight lines (out of 5) at which an object counts
    /// as occluded.
    pub threshold: f64,
    /// Sensor origin of the system under test, used as the viewpoint.
    pub viewer: [f64; 2],
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        OcclusionConfig {
            policy: OcclusionPolicy::Ignore,
            threshold: 1.0,
            viewer: [0.0, 0.0],
        }
    }
}

/// Pure documentation: how the reference object list was produced. Echoed
/// into reports, never interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingMeta {
    pub source: String,
    pub policy: String,
    pub known_issues: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStage {
    /// Only the reference recording is filtered.
    PreReference,
    /// Both recordings are filtered before matching.
    PreMatching,
    /// Nothing is removed before matching; tagged events are dropped from the
    /// headline counts at aggregation time.
    PostMatching,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreasConfig {
    /// Tested areas; empty means everywhere.
    pub include: Vec<PolygonRef>,
    /// No-test areas; exclusion wins over inclusion.
    pub exclude: Vec<PolygonRef>,
    /// When non-empty, only these class labels are evaluated.
    pub class_allow: Vec<String>,
    /// Class-specific maximum evaluation range, measured from `range_origin`.
    pub max_range_by_class: BTreeMap<String, f64>,
    pub range_origin: [f64; 2],
    pub stage: FilterStage,
}

impl Default for AreasConfig {
    fn default() -> Self {
        AreasConfig {
            include: Vec::new(),
            exclude: Vec::new(),
            class_allow: Vec::new(),
            max_range_by_class: BTreeMap::new(),
            range_origin: [0.0, 0.0],
            stage: FilterStage::PreMatching,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    /// Map from reference coordinates into the frame under test.
    pub transform: Transform,
    /// Documented residual error of the transform, meters.
    pub reported_error_m: f64,
    /// When true, `reported_error_m` is added to the matching threshold.
    pub inflate_threshold: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            transform: Transform::Identity,
            reported_error_m: 0.0,
            inflate_threshold: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Center2d,
    OneMinusIou,
    Mahalanobis,
    Wasserstein2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YawMod {
    /// A 180-degree flipped box is not penalized.
    Pi,
    TwoPi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassPenalty {
    None,
    Brier,
    Nll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    pub metric: Metric,
    /// Gate on the geometric term, meters (or unitless for `one_minus_iou`).
    pub threshold: f64,
    /// Forbid matches across different class labels.
    pub class_gate: bool,
    /// Weight of the velocity-mismatch penalty `w * |dv|`.
    pub w_velocity: f64,
    /// Weight of the heading-mismatch penalty `w * |dyaw mod yaw_mod|`.
    pub w_yaw: f64,
    pub yaw_mod: YawMod,
    /// Classification penalty on the candidate's class confidences against
    /// the reference label.
    pub class_penalty: ClassPenalty,
    pub w_class: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            metric: Metric::Center2d,
            threshold: 2.0,
            class_gate: true,
            w_velocity: 0.0,
            w_yaw: 0.0,
            yaw_mod: YawMod::Pi,
            class_penalty: ClassPenalty::None,
            w_class: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Greedy,
    Hungarian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cardinality {
    /// At most one partner on each side.
    OneOne,
    /// One SUT observation may cover several reference observations.
    OneN,
    /// Several SUT observations may share one reference observation.
    NOne,
    /// Every non-gated pair below the threshold matches.
    #[serde(rename = "n_n")]
    NN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifetime {
    /// Frames are matched independently.
    Frame,
    /// Entire tracks are matched by mean cost over their common lifetime.
    Track,
    /// Frame matching with partner memory: switches are marked per reference
    /// track, and `sticky` retains a below-threshold match.
    Subsequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignmentConfig {
    pub algorithm: Algorithm,
    pub cardinality: Cardinality,
    pub lifetime: Lifetime,
    /// Keep an existing pair while its cost stays below the gate, even when
    /// a cheaper candidate appears. Requires `lifetime = "subsequence"`.
    pub sticky: bool,
    /// Missed-frame runs up to this length between matched frames of the
    /// same pair are forgiven (kept in the ledger, dropped from FN counts).
    pub max_gap_frames: u32,
    /// Mean-cost gate for whole-track matching. Required with
    /// `lifetime = "track"`, must stay unset otherwise.
    pub track_threshold_mean_m: Maybe<f64>,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        AssignmentConfig {
            algorithm: Algorithm::Hungarian,
            cardinality: Cardinality::OneOne,
            lifetime: Lifetime::Frame,
            sticky: false,
            max_gap_frames: 0,
            track_threshold_mean_m: Maybe::unset(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderPolicy {
    /// An area-excluded candidate stays excluded; the kept partner becomes
    /// FN or FP.
    HardCut,
    /// An area-excluded candidate within `margin_m` of the area boundary is
    /// reinstated for the match, yielding a TP tagged `border_rescued`.
    FuzzyRescue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CornerCaseConfig {
    pub policy: BorderPolicy,
    pub margin_m: f64,
}

impl Default for CornerCaseConfig {
    fn default() -> Self {
        CornerCaseConfig {
            policy: BorderPolicy::HardCut,
            margin_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampBasis {
    /// Both systems stamped at raw-data acquisition: no shift.
    Acquisition,
    /// SUT objects stamped when available downstream: acquisition stamps are
    /// shifted by the configured latency, so computation time surfaces as
    /// head-end FNs and as the mean TP delay.
    Availability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverhangPolicy {
    /// Overhanging frames are excluded with a tag.
    Discard,
    /// Reference overhangs become FNs, SUT overhangs become FPs.
    FnFp,
    /// Overhangs shorter than `overhang_dt_max_s` are discarded, longer ones
    /// become FNs/FPs.
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    pub basis: TimestampBasis,
    /// Constant SUT latency in seconds; required for the availability basis
    /// unless a series is given.
    pub sut_latency_s: Maybe<f64>,
    /// Piecewise-constant latency as `[acquisition_time, latency_s]` steps;
    /// overrides the constant when non-empty.
    pub sut_latency_series: Vec<[f64; 2]>,
    pub interp: Interpolation,
    pub overhang: OverhangPolicy,
    pub overhang_dt_max_s: f64,
    /// Documented synchronization uncertainty between the recordings.
    pub sync_uncertainty_s: f64,
    /// When true, the matching threshold is inflated per pair by
    /// `sync_uncertainty_s * |v_res|`.
    pub inflate_threshold: bool,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            basis: TimestampBasis::Acquisition,
            sut_latency_s: Maybe::unset(),
            sut_latency_series: Vec::new(),
            interp: Interpolation::Linear,
            overhang: OverhangPolicy::FnFp,
            overhang_dt_max_s: 0.0,
            sync_uncertainty_s: 0.0,
            inflate_threshold: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSelectionPolicy {
    /// Class labels are taken as recorded.
    None,
    /// The label is replaced by the argmax of the class confidences before
    /// any class-based filtering or gating.
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisclassPolicy {
    /// A matched pair with unequal labels stays a TP flagged `wrong_class`.
    TpWrongClass,
    /// It is replaced by one FP (SUT class) and one FN (reference class).
    FpPlusFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbabilisticConfig {
    /// Existence-confidence gate; observations without a confidence count
    /// as 1.0.
    pub tau_exist: f64,
    pub class_policy: ClassSelectionPolicy,
    /// What a matched pair with unequal labels becomes. Only reachable when
    /// the class gate is off.
    pub misclass: MisclassPolicy,
    /// Number K of evenly spaced existence thresholds `k / (K + 1)` to sweep;
    /// 0 disables the sweep.
    pub sweep_thresholds: u32,
}

impl Default for ProbabilisticConfig {
    fn default() -> Self {
        ProbabilisticConfig {
            tau_exist: 0.0,
            class_policy: ClassSelectionPolicy::None,
            misclass: MisclassPolicy::TpWrongClass,
            sweep_thresholds: 0,
        }
    }
}

/// The complete oracle definition. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub aov: AovConfig,
    pub occlusion: OcclusionConfig,
    pub labeling_meta: LabelingMeta,
    pub areas: AreasConfig,
    pub alignment: AlignmentConfig,
    pub distance: DistanceConfig,
    pub assignment: AssignmentConfig,
    pub corner_cases: CornerCaseConfig,
    pub temporal: TemporalConfig,
    pub probabilistic: ProbabilisticConfig,
}

impl OracleConfig {
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg: OracleConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.resolve_polygon_files(base_dir)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_polygon_files(&mut self, base_dir: Option<&Path>) -> Result<(), ConfigError> {
        let all = self
            .areas
            .include
            .iter_mut()
            .chain(self.areas.exclude.iter_mut());
        for poly_ref in all {
            if let PolygonRef::File { file } = poly_ref {
                let path = match base_dir {
                    Some(dir) => dir.join(&*file),
                    None => Path::new(file).to_path_buf(),
                };
                let text = fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let vertices: Vec<[f64; 2]> = serde_json::from_str(&text).map_err(|e| {
                    ConfigError::Schema(format!("polygon file {}: {e}", path.display()))
                })?;
                let polygon = Polygon2D::new(vertices).map_err(|e| {
                    ConfigError::Schema(format!("polygon file {}: {e}", path.display()))
                })?;
                *poly_ref = PolygonRef::Inline(polygon);
            }
        }
        Ok(())
    }

    /// Renders the fully defaulted configuration; reloading the output loads
    /// an identical configuration.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON form; any default change changes the
    /// hash.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Schema(msg));

        for (name, shape) in [("aov.res", &self.aov.res), ("aov.sut", &self.aov.sut)] {
            if let AovShape::Sector {
                range_m, fov_rad, ..
            } = shape
            {
                if !(*range_m > 0.0) {
                    return fail(format!("{name}: range_m must be > 0, got {range_m}"));
                }
                if !(*fov_rad > 0.0 && *fov_rad <= std::f64::consts::TAU) {
                    return fail(format!("{name}: fov_rad must be in (0, 2*pi], got {fov_rad}"));
                }
            }
        }
        for (name, map) in [
            ("aov.res_p_detect", &self.aov.res_p_detect),
            ("aov.sut_p_detect", &self.aov.sut_p_detect),
        ] {
            let mut prev: Option<[f64; 2]> = None;
            for entry in map {
                if !(0.0..=1.0).contains(&entry[1]) {
                    return fail(format!("{name}: probability {} outside [0, 1]", entry[1]));
                }
                if entry[0] < 0.0 {
                    return fail(format!("{name}: negative range {}", entry[0]));
                }
                if let Some(p) = prev {
                    if entry[0] <= p[0] {
                        return fail(format!("{name}: ranges must be strictly increasing"));
                    }
                    if entry[1] > p[1] {
                        return fail(format!("{name}: p_detect must be non-increasing in range"));
                    }
                }
                prev = Some(*entry);
            }
        }
        if !(0.0..=1.0).contains(&self.aov.p_min) {
            return fail(format!("aov.p_min {} outside [0, 1]", self.aov.p_min));
        }
        if !(0.0..=1.0).contains(&self.occlusion.threshold) {
            return fail(format!(
                "occlusion.threshold {} outside [0, 1]",
                self.occlusion.threshold
            ));
        }
        for (cls, range) in &self.areas.max_range_by_class {
            if !(*range > 0.0) {
                return fail(format!("areas.max_range_by_class[{cls:?}] must be > 0"));
            }
        }
        if self.alignment.reported_error_m < 0.0 {
            return fail("alignment.reported_error_m must be >= 0".to_string());
        }
        if !(self.distance.threshold > 0.0) || !self.distance.threshold.is_finite() {
            return fail(format!(
                "distance.threshold must be a positive finite number, got {}",
                self.distance.threshold
            ));
        }
        for (name, w) in [
            ("distance.w_velocity", self.distance.w_velocity),
            ("distance.w_yaw", self.distance.w_yaw),
            ("distance.w_class", self.distance.w_class),
        ] {
            if w < 0.0 {
                return fail(format!("{name} must be >= 0, got {w}"));
            }
        }
        if self.assignment.sticky && self.assignment.lifetime != Lifetime::Subsequence {
            return fail(
                "assignment.sticky requires assignment.lifetime = \"subsequence\"".to_string(),
            );
        }
        match (
            self.assignment.lifetime,
            self.assignment.track_threshold_mean_m.get(),
        ) {
            (Lifetime::Track, None) => {
                return fail(
                    "assignment.lifetime = \"track\" requires track_threshold_mean_m".to_string(),
                )
            }
            (Lifetime::Track, Some(v)) if !(v > 0.0) => {
                return fail(format!(
                    "assignment.track_threshold_mean_m must be > 0, got {v}"
                ))
            }
            (Lifetime::Frame | Lifetime::Subsequence, Some(_)) => {
                return fail(
                    "assignment.track_threshold_mean_m is only meaningful with lifetime = \"track\""
                        .to_string(),
                )
            }
            _ => {}
        }
        if self.corner_cases.policy == BorderPolicy::FuzzyRescue
            && !(self.corner_cases.margin_m > 0.0)
        {
            return fail("corner_cases.margin_m must be > 0 for fuzzy_rescue".to_string());
        }
        if self.corner_cases.margin_m < 0.0 {
            return fail("corner_cases.margin_m must be >= 0".to_string());
        }
        if let Some(latency) = self.temporal.sut_latency_s.get() {
            if latency < 0.0 || !latency.is_finite() {
                return fail(format!("temporal.sut_latency_s must be >= 0, got {latency}"));
            }
        }
        let mut prev_t: Option<f64> = None;
        for entry in &self.temporal.sut_latency_series {
            if entry[1] < 0.0 {
                return fail(format!("temporal.sut_latency_series: negative latency {}", entry[1]));
            }
            if let Some(p) = prev_t {
                if entry[0] <= p {
                    return fail("temporal.sut_latency_series: times must be strictly increasing"
                        .to_string());
                }
            }
            prev_t = Some(entry[0]);
        }
        if self.temporal.basis == TimestampBasis::Availability
            && self.temporal.sut_latency_s.get().is_none()
            && self.temporal.sut_latency_series.is_empty()
        {
            return fail(
                "temporal.basis = \"availability\" requires sut_latency_s or sut_latency_series"
                    .to_string(),
            );
        }
        if self.temporal.overhang == OverhangPolicy::Threshold
            && !(self.temporal.overhang_dt_max_s > 0.0)
        {
            return fail(
                "temporal.overhang_dt_max_s must be > 0 with overhang = \"threshold\"".to_string(),
            );
        }
        if self.temporal.sync_uncertainty_s < 0.0 {
            return fail("temporal.sync_uncertainty_s must be >= 0".to_string());
        }
        if !(0.0..=1.0).contains(&self.probabilistic.tau_exist) {
            return fail(format!(
                "probabilistic.tau_exist {} outside [0, 1]",
                self.probabilistic.tau_exist
            ));
        }
        Ok(())
    }

    /// Latency applied to an observation acquired at `t`; 0 under the
    /// acquisition basis.
    pub fn latency_at(&self, t: f64) -> f64 {
        if self.temporal.basis == TimestampBasis::Acquisition {
            return 0.0;
        }
        if !self.temporal.sut_latency_series.is_empty() {
            let mut latency = self.temporal.sut_latency_series[0][1];
            for entry in &self.temporal.sut_latency_series {
                if entry[0] <= t {
                    latency = entry[1];
                } else {
                    break;
                }
            }
            return latency;
        }
        self.temporal.sut_latency_s.get().unwrap_or(0.0)
    }
}

/// Loads, defaults, resolves, and validates a configuration file. An empty
/// file yields the documented defaults.
pub fn load_config(path: &Path) -> Result<OracleConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    OracleConfig::from_toml_str(&text, path.parent())
}

impl fmt::Display for FilterStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterStage::PreReference => write!(f, "pre_reference"),
            FilterStage::PreMatching => write!(f, "pre_matching"),
            FilterStage::PostMatching => write!(f, "post_matching"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_equals_defaults() {
        let cfg = OracleConfig::from_toml_str("", None).unwrap();
        assert_eq!(cfg, OracleConfig::default());
        assert_eq!(cfg.distance.threshold, 2.0);
        assert_eq!(cfg.assignment.algorithm, Algorithm::Hungarian);
        assert_eq!(cfg.assignment.cardinality, Cardinality::OneOne);
    }

    #[test]
    fn unknown_keys_are_fatal() {
        let err = OracleConfig::from_toml_str("[distance]\nthresold = 2.0\n", None).unwrap_err();
        assert!(err.to_string().contains("thresold"), "{err}");
        let err = OracleConfig::from_toml_str("[bogus_section]\n", None).unwrap_err();
        assert!(err.to_string().contains("bogus_section"), "{err}");
    }

    #[test]
    fn out_of_range_values_are_fatal() {
        let err =
            OracleConfig::from_toml_str("[probabilistic]\ntau_exist = 1.5\n", None).unwrap_err();
        assert!(err.to_string().contains("tau_exist"));
        let err = OracleConfig::from_toml_str("[distance]\nthreshold = -1.0\n", None).unwrap_err();
        assert!(err.to_string().contains("threshold"));
    }

    #[test]
    fn cross_field_invariants_are_enforced() {
        let err = OracleConfig::from_toml_str("[assignment]\nsticky = true\n", None).unwrap_err();
        assert!(err.to_string().contains("sticky"));
        let err =
            OracleConfig::from_toml_str("[assignment]\nlifetime = \"track\"\n", None).unwrap_err();
        assert!(err.to_string().contains("track_threshold_mean_m"));
        let err = OracleConfig::from_toml_str("[temporal]\nbasis = \"availability\"\n", None)
            .unwrap_err();
        assert!(err.to_string().contains("latency"));
    }

    #[test]
    fn round_trip_is_lossless() {
        let text = r#"
[aov]
res = { kind = "polygon", vertices = [[-5.0, -40.0], [70.0, -40.0], [70.0, 40.0], [-5.0, 40.0]] }
sut = { kind = "sector", origin = [0.0, 0.0], range_m = 50.0, fov_rad = 2.53 }

[occlusion]
policy = "exclude"
threshold = 0.2

[distance]
metric = "one_minus_iou"
threshold = 0.5

[assignment]
algorithm = "greedy"
cardinality = "n_one"
lifetime = "track"
track_threshold_mean_m = 1.5

[temporal]
basis = "availability"
sut_latency_s = 0.2
overhang = "discard"

[probabilistic]
sweep_thresholds = 40
"#;
        let cfg = OracleConfig::from_toml_str(text, None).unwrap();
        let echoed = cfg.to_toml_string();
        let reloaded = OracleConfig::from_toml_str(&echoed, None).unwrap();
        assert_eq!(cfg, reloaded);
    }

    #[test]
    fn echo_of_defaults_mentions_every_section() {
        let echoed = OracleConfig::default().to_toml_string();
        for section in [
            "[aov]",
            "[occlusion]",
            "[labeling_meta]",
            "[areas]",
            "[alignment]",
            "[distance]",
            "[assignment]",
            "[corner_cases]",
            "[temporal]",
            "[probabilistic]",
        ] {
            assert!(echoed.contains(section), "missing {section} in:\n{echoed}");
        }
        // explicitly-unset optionals are spelled out, not omitted
        assert!(echoed.contains("track_threshold_mean_m = \"unset\""));
        assert!(echoed.contains("sut_latency_s = \"unset\""));
    }

    #[test]
    fn content_hash_changes_with_any_field() {
        let base = OracleConfig::default();
        let mut tweaked = base.clone();
        tweaked.distance.threshold = 2.5;
        assert_ne!(base.content_hash(), tweaked.content_hash());
        assert_eq!(base.content_hash(), OracleConfig::default().content_hash());
    }

    #[test]
    fn latency_series_is_piecewise_constant() {
        let mut cfg = OracleConfig::default();
        cfg.temporal.basis = TimestampBasis::Availability;
        cfg.temporal.sut_latency_series = vec![[0.0, 0.1], [5.0, 0.3]];
        assert_eq!(cfg.latency_at(0.0), 0.1);
        assert_eq!(cfg.latency_at(4.9), 0.1);
        assert_eq!(cfg.latency_at(5.0), 0.3);
        assert_eq!(cfg.latency_at(100.0), 0.3);
    }
}
