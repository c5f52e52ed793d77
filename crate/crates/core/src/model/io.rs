//! Newline-delimited recording format.
//!
//! One JSON object per line. The first line may be a header object
//! (recognized by its `role` key) carrying sensor metadata and the explicit
//! frame clock; every other line is one observation:
//!
//! ```text
//! {"role":"res","sensor_meta":{"epoch":"unix"},"frame_times":[0.0,0.1]}
//! {"t":0.0,"id":"a","cls":"car","x":1.0,"y":2.0,"l":4.5,"w":2.0,"yaw":0.0}
//! ```
//!
//! Required observation keys: `t, id, cls, x, y, l, w, yaw`. Optional:
//! `vx, vy, cov` (4 floats, row-major), `p_exist`, `p_cls` (class map).
//! Unknown keys are fatal errors so that an oracle definition can never be
//! silently wider than the data it was written against.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Covariance2, ObjectObservation, Recording, Role};

#[derive(Debug, thiserror::Error)]
pub enum RecordingIoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: header declares role {found} but {expected} was expected")]
    RoleMismatch {
        path: String,
        expected: Role,
        found: Role,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    role: Role,
    #[serde(default)]
    sensor_meta: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_times: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObsRecord {
    t: f64,
    id: String,
    cls: String,
    x: f64,
    y: f64,
    l: f64,
    w: f64,
    yaw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cov: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_exist: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_cls: Option<BTreeMap<String, f64>>,
}

impl From<ObsRecord> for ObjectObservation {
    fn from(r: ObsRecord) -> Self {
        ObjectObservation {
            timestamp: r.t,
            track_id: r.id,
            class_label: r.cls,
            x: r.x,
            y: r.y,
            length: r.l,
            width: r.w,
            yaw: r.yaw,
            vx: r.vx.unwrap_or(0.0),
            vy: r.vy.unwrap_or(0.0),
            pos_cov: r.cov.map(Covariance2),
            existence_conf: r.p_exist,
            class_confs: r.p_cls,
        }
    }
}

impl From<&ObjectObservation> for ObsRecord {
    fn from(o: &ObjectObservation) -> Self {
        ObsRecord {
            t: o.timestamp,
            id: o.track_id.clone(),
            cls: o.class_label.clone(),
            x: o.x,
            y: o.y,
            l: o.length,
            w: o.width,
            yaw: o.yaw,
            vx: Some(o.vx),
            vy: Some(o.vy),
            cov: o.pos_cov.map(|c| c.0),
            p_exist: o.existence_conf,
            p_cls: o.class_confs.clone(),
        }
    }
}

/// Loads a recording, checking the header role against `expected_role` when
/// both are present. A file without a header takes `expected_role`.
pub fn load_recording(path: &Path, expected_role: Role) -> Result<Recording, RecordingIoError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| RecordingIoError::Io {
        path: display.clone(),
        source,
    })?;
    parse_recording(&text, &display, expected_role)
}

pub fn parse_recording(
    text: &str,
    origin: &str,
    expected_role: Role,
) -> Result<Recording, RecordingIoError> {
    let mut observations = Vec::new();
    let mut header: Option<HeaderRecord> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| RecordingIoError::Schema {
                path: origin.to_string(),
                line: line_no,
                message: format!("invalid JSON: {e}"),
            })?;
        let is_header = value.get("role").is_some();
        if is_header {
            if line_no != 1 || header.is_some() {
                return Err(RecordingIoError::Schema {
                    path: origin.to_string(),
                    line: line_no,
                    message: "header record allowed only on the first line".to_string(),
                });
            }
            let h: HeaderRecord =
                serde_json::from_value(value).map_err(|e| RecordingIoError::Schema {
                    path: origin.to_string(),
                    line: line_no,
                    message: e.to_string(),
                })?;
            header = Some(h);
        } else {
            let rec: ObsRecord =
                serde_json::from_value(value).map_err(|e| RecordingIoError::Schema {
                    path: origin.to_string(),
                    line: line_no,
                    message: e.to_string(),
                })?;
            observations.push(ObjectObservation::from(rec));
        }
    }
    let mut recording = Recording::from_observations(expected_role, observations);
    if let Some(h) = header {
        if h.role != expected_role {
            return Err(RecordingIoError::RoleMismatch {
                path: origin.to_string(),
                expected: expected_role,
                found: h.role,
            });
        }
        recording.sensor_meta = h.sensor_meta;
        recording.frame_times = h.frame_times;
    }
    Ok(recording)
}

/// Serializes a recording to the line format; output is deterministic
/// (header first, then observations sorted by track id and time).
pub fn recording_to_string(rec: &Recording) -> String {
    let header = HeaderRecord {
        role: rec.role,
        sensor_meta: rec.sensor_meta.clone(),
        frame_times: rec.frame_times.clone(),
    };
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for track in &rec.tracks {
        for obs in &track.observations {
            let record = ObsRecord::from(obs);
            out.push_str(&serde_json::to_string(&record).expect("observation serializes"));
            out.push('\n');
        }
    }
    out
}

pub fn save_recording(path: &Path, rec: &Recording) -> Result<(), RecordingIoError> {
    let display = path.display().to_string();
    let mut file = fs::File::create(path).map_err(|source| RecordingIoError::Io {
        path: display.clone(),
        source,
    })?;
    file.write_all(recording_to_string(rec).as_bytes())
        .map_err(|source| RecordingIoError::Io {
            path: display,
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_observations() {
        let text = concat!(
            "{\"role\":\"res\",\"sensor_meta\":{\"epoch\":\"unix\"},\"frame_times\":[0.0,0.1]}\n",
            "{\"t\":0.0,\"id\":\"a\",\"cls\":\"car\",\"x\":1.0,\"y\":2.0,\"l\":4.5,\"w\":2.0,\"yaw\":0.0}\n",
            "{\"t\":0.1,\"id\":\"a\",\"cls\":\"car\",\"x\":1.5,\"y\":2.0,\"l\":4.5,\"w\":2.0,\"yaw\":0.0,\"vx\":5.0,\"vy\":0.0}\n",
        );
        let rec = parse_recording(text, "mem", Role::Res).unwrap();
        assert_eq!(rec.tracks.len(), 1);
        assert_eq!(rec.observation_count(), 2);
        assert_eq!(rec.sensor_meta.get("epoch").map(String::as_str), Some("unix"));
        assert_eq!(rec.frame_times.as_deref(), Some(&[0.0, 0.1][..]));
        assert_eq!(rec.tracks[0].observations[1].vx, 5.0);
    }

    #[test]
    fn unknown_keys_are_fatal() {
        let text = "{\"t\":0.0,\"id\":\"a\",\"cls\":\"car\",\"x\":1.0,\"y\":2.0,\"l\":4.5,\"w\":2.0,\"yaw\":0.0,\"bogus\":1}\n";
        let err = parse_recording(text, "mem", Role::Sut).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn role_mismatch_is_fatal() {
        let text = "{\"role\":\"res\"}\n";
        let err = parse_recording(text, "mem", Role::Sut).unwrap_err();
        assert!(matches!(err, RecordingIoError::RoleMismatch { .. }));
    }

    #[test]
    fn header_after_first_line_is_fatal() {
        let text = concat!(
            "{\"t\":0.0,\"id\":\"a\",\"cls\":\"car\",\"x\":1.0,\"y\":2.0,\"l\":4.5,\"w\":2.0,\"yaw\":0.0}\n",
            "{\"role\":\"sut\"}\n",
        );
        let err = parse_recording(text, "mem", Role::Sut).unwrap_err();
        assert!(err.to_string().contains("first line"));
    }

    #[test]
    fn round_trip_preserves_content() {
        let mut obs = ObjectObservation::basic(0.25, "a", "pedestrian", -3.0, 7.5, 0.6, 0.5, 1.2);
        obs.pos_cov = Some(Covariance2([0.2, 0.01, 0.01, 0.3]));
        obs.existence_conf = Some(0.75);
        let mut rec = Recording::from_observations(Role::Sut, vec![obs]);
        rec.sensor_meta.insert("epoch".into(), "unix".into());
        let text = recording_to_string(&rec);
        let reloaded = parse_recording(&text, "mem", Role::Sut).unwrap();
        assert_eq!(rec, reloaded);
    }
}
