//! Domain types shared by the whole oracle: observations, tracks, recordings,
//! and their validation.
//!
//! All types are immutable after construction and carry no interior state, so
//! they can be shared freely across evaluation workers.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub mod io;

/// Row-major 2x2 position covariance as stored in recording files.
///
/// The raw four entries are kept so that validation can flag asymmetric
/// input instead of silently symmetrizing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariance2(pub [f64; 4]);

impl Covariance2 {
    pub fn xx(&self) -> f64 {
        self.0[0]
    }

    /// Off-diagonal entry; averages the two stored values.
    pub fn xy(&self) -> f64 {
        0.5 * (self.0[1] + self.0[2])
    }

    pub fn yy(&self) -> f64 {
        self.0[3]
    }

    pub fn asymmetry(&self) -> f64 {
        (self.0[1] - self.0[2]).abs()
    }

    pub fn from_sym(xx: f64, xy: f64, yy: f64) -> Self {
        Covariance2([xx, xy, xy, yy])
    }
}

/// One object in one frame: pose, extent, kinematics, and confidences.
///
/// Positions are meters in the recording's local frame, yaw is radians,
/// timestamps are absolute seconds in the epoch declared by the recording's
/// `sensor_meta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectObservation {
    pub timestamp: f64,
    pub track_id: String,
    pub class_label: String,
    pub x: f64,
    pub y: f64,
    pub length: f64,
    pub width: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub pos_cov: Option<Covariance2>,
    pub existence_conf: Option<f64>,
    pub class_confs: Option<BTreeMap<String, f64>>,
}

impl ObjectObservation {
    /// Minimal observation with only the required channels set.
    pub fn basic(
        timestamp: f64,
        track_id: &str,
        class_label: &str,
        x: f64,
        y: f64,
        length: f64,
        width: f64,
        yaw: f64,
    ) -> Self {
        ObjectObservation {
            timestamp,
            track_id: track_id.to_string(),
            class_label: class_label.to_string(),
            x,
            y,
            length,
            width,
            yaw,
            vx: 0.0,
            vy: 0.0,
            pos_cov: None,
            existence_conf: None,
            class_confs: None,
        }
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Which side of the comparison a recording belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Sut,
    Res,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Sut => write!(f, "sut"),
            Role::Res => write!(f, "res"),
        }
    }
}

/// ID-carrying time series of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: String,
    pub observations: Vec<ObjectObservation>,
}

impl Track {
    pub fn start_time(&self) -> Option<f64> {
        self.observations.first().map(|o| o.timestamp)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.observations.last().map(|o| o.timestamp)
    }
}

/// A full SUT or ReS output: tracks plus sensor metadata.
///
/// `frame_times` lists the sample clock explicitly; when absent the set of
/// observation timestamps is used. `sensor_meta` is free-form documentation
/// (hardware description, epoch declaration) and is echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub role: Role,
    pub tracks: Vec<Track>,
    pub sensor_meta: BTreeMap<String, String>,
    pub frame_times: Option<Vec<f64>>,
}

impl Recording {
    pub fn new(role: Role) -> Self {
        Recording {
            role,
            tracks: Vec::new(),
            sensor_meta: BTreeMap::new(),
            frame_times: None,
        }
    }

    /// Groups observations into tracks by id, sorting each track by time.
    /// Duplicate (id, timestamp) pairs are preserved for validation to flag.
    pub fn from_observations(role: Role, mut observations: Vec<ObjectObservation>) -> Self {
        observations.sort_by(|a, b| {
            a.track_id
                .cmp(&b.track_id)
                .then(a.timestamp.total_cmp(&b.timestamp))
        });
        let mut tracks: Vec<Track> = Vec::new();
        for obs in observations {
            match tracks.last_mut() {
                Some(t) if t.track_id == obs.track_id => t.observations.push(obs),
                _ => tracks.push(Track {
                    track_id: obs.track_id.clone(),
                    observations: vec![obs],
                }),
            }
        }
        Recording {
            role,
            tracks,
            sensor_meta: BTreeMap::new(),
            frame_times: None,
        }
    }

    pub fn observation_count(&self) -> usize {
        self.tracks.iter().map(|t| t.observations.len()).sum()
    }

    pub fn iter_observations(&self) -> impl Iterator<Item = &ObjectObservation> {
        self.tracks.iter().flat_map(|t| t.observations.iter())
    }

    pub fn time_span(&self) -> Option<(f64, f64)> {
        let mut span: Option<(f64, f64)> = None;
        for t in &self.tracks {
            if let (Some(s), Some(e)) = (t.start_time(), t.end_time()) {
                span = Some(match span {
                    None => (s, e),
                    Some((lo, hi)) => (lo.min(s), hi.max(e)),
                });
            }
        }
        span
    }
}

/// A single invariant violation found in a recording. Violations are data,
/// not failures: callers decide whether to abort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub track_id: Option<String>,
    pub timestamp: Option<f64>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.track_id, self.timestamp) {
            (Some(id), Some(t)) => write!(f, "track {id} at t={t}: {}", self.message),
            (Some(id), None) => write!(f, "track {id}: {}", self.message),
            (None, Some(t)) => write!(f, "at t={t}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

fn violation(track_id: &str, timestamp: f64, message: String) -> Violation {
    Violation {
        track_id: Some(track_id.to_string()),
        timestamp: Some(timestamp),
        message,
    }
}

/// Checks every recording invariant and returns all violations found.
///
/// Pure: the same input always yields the same list, in deterministic order.
pub fn validate_recording(rec: &Recording) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: HashSet<(String, u64)> = HashSet::new();
    for track in &rec.tracks {
        let mut prev_t: Option<f64> = None;
        for obs in &track.observations {
            let id = &obs.track_id;
            let t = obs.timestamp;
            if id != &track.track_id {
                out.push(violation(
                    &track.track_id,
                    t,
                    format!("observation carries foreign track id {id:?}"),
                ));
            }
            if !t.is_finite() {
                out.push(violation(id, t, "non-finite timestamp".to_string()));
            }
            if !(obs.length > 0.0) || !obs.length.is_finite() {
                out.push(violation(id, t, format!("length must be > 0, got {}", obs.length)));
            }
            if !(obs.width > 0.0) || !obs.width.is_finite() {
                out.push(violation(id, t, format!("width must be > 0, got {}", obs.width)));
            }
            for (name, v) in [("x", obs.x), ("y", obs.y), ("yaw", obs.yaw), ("vx", obs.vx), ("vy", obs.vy)] {
                if !v.is_finite() {
                    out.push(violation(id, t, format!("non-finite {name}")));
                }
            }
            if let Some(cov) = &obs.pos_cov {
                let scale = 1.0 + cov.0.iter().map(|v| v.abs()).fold(0.0, f64::max);
                if cov.asymmetry() > 1e-9 * scale {
                    out.push(violation(id, t, "pos_cov is not symmetric".to_string()));
                }
                let sym = crate::geometry::Sym2::new(cov.xx(), cov.xy(), cov.yy());
                if !sym.is_psd(1e-9 * scale) {
                    out.push(violation(
                        id,
                        t,
                        format!("pos_cov is not positive semi-definite (eigenvalues {:?})", sym.eigenvalues()),
                    ));
                }
            }
            if let Some(p) = obs.existence_conf {
                if !(0.0..=1.0).contains(&p) {
                    out.push(violation(id, t, format!("existence_conf {p} outside [0, 1]")));
                }
            }
            if let Some(confs) = &obs.class_confs {
                for (cls, p) in confs {
                    if !(0.0..=1.0).contains(p) {
                        out.push(violation(id, t, format!("class_confs[{cls:?}] = {p} outside [0, 1]")));
                    }
                }
            }
            if t.is_finite() {
                if !seen.insert((id.clone(), canonical_time_bits(t))) {
                    out.push(violation(id, t, "duplicate (track_id, timestamp)".to_string()));
                }
                if let Some(p) = prev_t {
                    if t <= p {
                        out.push(violation(
                            id,
                            t,
                            format!("timestamps not strictly increasing ({p} then {t})"),
                        ));
                    }
                }
            }
            prev_t = Some(t);
        }
    }
    out
}

/// Bit pattern used to key timestamps exactly; -0.0 folds onto 0.0.
pub fn canonical_time_bits(t: f64) -> u64 {
    if t == 0.0 {
        0.0f64.to_bits()
    } else {
        t.to_bits()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(t: f64, id: &str) -> ObjectObservation {
        ObjectObservation::basic(t, id, "car", 0.0, 0.0, 4.0, 2.0, 0.0)
    }

    #[test]
    fn well_formed_minimal_recording_has_no_violations() {
        let rec = Recording::from_observations(Role::Res, vec![obs(0.0, "a"), obs(0.1, "a")]);
        assert!(validate_recording(&rec).is_empty());
    }

    #[test]
    fn duplicated_timestamp_is_flagged_with_locator() {
        let rec = Recording::from_observations(Role::Res, vec![obs(0.5, "a"), obs(0.5, "a")]);
        let violations = validate_recording(&rec);
        // one duplicate plus one "not strictly increasing"
        assert!(violations.iter().any(|v| v.message.contains("duplicate")));
        let dup = violations.iter().find(|v| v.message.contains("duplicate")).unwrap();
        assert_eq!(dup.track_id.as_deref(), Some("a"));
        assert_eq!(dup.timestamp, Some(0.5));
    }

    #[test]
    fn indefinite_covariance_is_flagged_as_non_psd() {
        // [[1, 2], [2, 1]] has eigenvalues 3 and -1 (characteristic polynomial
        // (1 - l)^2 - 4 = 0), so it must be rejected.
        let mut o = obs(0.0, "a");
        o.pos_cov = Some(Covariance2([1.0, 2.0, 2.0, 1.0]));
        let rec = Recording::from_observations(Role::Sut, vec![o]);
        let violations = validate_recording(&rec);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("positive semi-definite"));
    }

    #[test]
    fn validation_is_pure() {
        let mut o = obs(0.0, "a");
        o.length = -1.0;
        let rec = Recording::from_observations(Role::Sut, vec![o, obs(1.0, "b")]);
        assert_eq!(validate_recording(&rec), validate_recording(&rec));
    }

    #[test]
    fn negative_extent_and_bad_conf_are_flagged() {
        let mut o = obs(0.0, "a");
        o.width = 0.0;
        o.existence_conf = Some(1.5);
        let rec = Recording::from_observations(Role::Sut, vec![o]);
        let violations = validate_recording(&rec);
        assert_eq!(violations.len(), 2);
    }
}
