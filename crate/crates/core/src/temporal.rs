//! Temporal alignment: timestamp-basis shifts, resampling of reference
//! tracks onto the evaluation clock, and overhang classification.
//!
//! Extrapolation is never performed. Reference observations outside the
//! clock span become lead/tail overhangs and are resolved by the configured
//! overhang policy; clock times outside a track's span are simply omitted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{OracleConfig, OverhangPolicy, TemporalConfig};
use crate::model::{canonical_time_bits, Covariance2, ObjectObservation, Recording, Track};

/// One reference observation resampled onto a clock tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledObs {
    pub obs: ObjectObservation,
    /// False when the tick coincided with an original sample.
    pub interpolated: bool,
    /// Index into the evaluation clock.
    pub frame: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverhangSide {
    Lead,
    Tail,
}

/// An original observation outside the evaluation clock span.
#[derive(Debug, Clone, PartialEq)]
pub struct OverhangObs {
    pub obs: ObjectObservation,
    pub side: OverhangSide,
    /// Temporal distance to the nearest clock end, seconds.
    pub gap_s: f64,
}

/// A reference track aligned to the evaluation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedTrack {
    pub track_id: String,
    pub resampled: Vec<ResampledObs>,
    pub overhangs: Vec<OverhangObs>,
}

/// Shortest-arc interpolation between two angles.
pub fn shortest_arc_lerp(a: f64, b: f64, frac: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut diff = (b - a).rem_euclid(tau);
    if diff > std::f64::consts::PI {
        diff -= tau;
    }
    let angle = a + diff * frac;
    // normalize into (-pi, pi]
    let wrapped = angle.rem_euclid(tau);
    if wrapped > std::f64::consts::PI {
        wrapped - tau
    } else {
        wrapped
    }
}

/// Linear state interpolation between two observations of the same track at
/// `t` (with `a.timestamp <= t <= b.timestamp`).
///
/// Positions, velocities, covariances, and existence confidence interpolate
/// linearly; yaw takes the shortest arc; extent, class, and class
/// confidences come from the nearest sample (a label cannot be averaged).
pub fn interpolate_between(
    a: &ObjectObservation,
    b: &ObjectObservation,
    t: f64,
) -> ObjectObservation {
    let span = b.timestamp - a.timestamp;
    let frac = if span <= 0.0 { 0.0 } else { (t - a.timestamp) / span };
    let nearest = if (t - a.timestamp) <= (b.timestamp - t) { a } else { b };
    let lerp = |x: f64, y: f64| x + (y - x) * frac;
    let pos_cov = match (a.pos_cov, b.pos_cov) {
        (Some(ca), Some(cb)) => Some(Covariance2([
            lerp(ca.0[0], cb.0[0]),
            lerp(ca.0[1], cb.0[1]),
            lerp(ca.0[2], cb.0[2]),
            lerp(ca.0[3], cb.0[3]),
        ])),
        _ => nearest.pos_cov,
    };
    let existence_conf = match (a.existence_conf, b.existence_conf) {
        (Some(pa), Some(pb)) => Some(lerp(pa, pb)),
        _ => nearest.existence_conf,
    };
    ObjectObservation {
        timestamp: t,
        track_id: a.track_id.clone(),
        class_label: nearest.class_label.clone(),
        x: lerp(a.x, b.x),
        y: lerp(a.y, b.y),
        length: nearest.length,
        width: nearest.width,
        yaw: shortest_arc_lerp(a.yaw, b.yaw, frac),
        vx: lerp(a.vx, b.vx),
        vy: lerp(a.vy, b.vy),
        pos_cov,
        existence_conf,
        class_confs: nearest.class_confs.clone(),
    }
}

/// Resamples one reference track onto the evaluation clock.
///
/// For every clock tick inside the track span the state is interpolated (or
/// copied when the tick hits a sample exactly); observations outside the
/// clock span are collected as lead/tail overhangs.
pub fn synchronize(track: &Track, clock: &[f64]) -> SyncedTrack {
    let mut resampled = Vec::new();
    let mut overhangs = Vec::new();
    let observations = &track.observations;
    if observations.is_empty() || clock.is_empty() {
        return SyncedTrack {
            track_id: track.track_id.clone(),
            resampled,
            overhangs: observations
                .iter()
                .map(|o| OverhangObs {
                    obs: o.clone(),
                    side: OverhangSide::Lead,
                    gap_s: f64::INFINITY,
                })
                .collect(),
        };
    }
    let clock_start = clock[0];
    let clock_end = clock[clock.len() - 1];
    for obs in observations {
        if obs.timestamp < clock_start {
            overhangs.push(OverhangObs {
                obs: obs.clone(),
                side: OverhangSide::Lead,
                gap_s: clock_start - obs.timestamp,
            });
        } else if obs.timestamp > clock_end {
            overhangs.push(OverhangObs {
                obs: obs.clone(),
                side: OverhangSide::Tail,
                gap_s: obs.timestamp - clock_end,
            });
        }
    }
    let track_start = observations[0].timestamp;
    let track_end = observations[observations.len() - 1].timestamp;
    let mut cursor = 0usize;
    for (frame, &t) in clock.iter().enumerate() {
        if t < track_start || t > track_end {
            continue;
        }
        while cursor + 1 < observations.len() && observations[cursor + 1].timestamp <= t {
            cursor += 1;
        }
        let a = &observations[cursor];
        if a.timestamp == t {
            resampled.push(ResampledObs {
                obs: ObjectObservation {
                    timestamp: t,
                    ..a.clone()
                },
                interpolated: false,
                frame,
            });
            continue;
        }
        let b = &observations[cursor + 1];
        resampled.push(ResampledObs {
            obs: interpolate_between(a, b, t),
            interpolated: true,
            frame,
        });
    }
    SyncedTrack {
        track_id: track.track_id.clone(),
        resampled,
        overhangs,
    }
}

/// Applies the timestamp basis. Under `availability` every SUT timestamp is
/// shifted by the configured latency at its acquisition time; the returned
/// map records the latency per shifted timestamp for the delay metric.
pub fn apply_timestamp_basis(
    sut: &Recording,
    cfg: &OracleConfig,
) -> (Recording, BTreeMap<u64, f64>) {
    let mut latencies = BTreeMap::new();
    let mut shifted = sut.clone();
    for track in &mut shifted.tracks {
        for obs in &mut track.observations {
            let latency = cfg.latency_at(obs.timestamp);
            obs.timestamp += latency;
            latencies.insert(canonical_time_bits(obs.timestamp), latency);
        }
        track
            .observations
            .sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    }
    if let Some(times) = &mut shifted.frame_times {
        for t in times.iter_mut() {
            let latency = cfg.latency_at(*t);
            *t += latency;
            latencies.insert(canonical_time_bits(*t), latency);
        }
        times.sort_by(f64::total_cmp);
    }
    (shifted, latencies)
}

/// What the overhang policy does with an overhang of the given temporal gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverhangOutcome {
    /// Excluded with a tag.
    Discard,
    /// Counted as FN (reference side) or FP (SUT side).
    Count,
}

pub fn overhang_outcome(gap_s: f64, cfg: &TemporalConfig) -> OverhangOutcome {
    match cfg.overhang {
        OverhangPolicy::Discard => OverhangOutcome::Discard,
        OverhangPolicy::FnFp => OverhangOutcome::Count,
        OverhangPolicy::Threshold => {
            if gap_s < cfg.overhang_dt_max_s {
                OverhangOutcome::Discard
            } else {
                OverhangOutcome::Count
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TimestampBasis;
    use approx::assert_relative_eq;

    fn track(samples: &[(f64, f64)]) -> Track {
        // (t, x) pairs, constant y
        let observations = samples
            .iter()
            .map(|&(t, x)| ObjectObservation::basic(t, "a", "car", x, 0.0, 4.0, 2.0, 0.0))
            .collect();
        Track {
            track_id: "a".to_string(),
            observations,
        }
    }

    #[test]
    fn identical_clock_copies_without_interpolation() {
        let tr = track(&[(0.0, 0.0), (0.1, 1.0), (0.2, 2.0)]);
        let synced = synchronize(&tr, &[0.0, 0.1, 0.2]);
        assert_eq!(synced.resampled.len(), 3);
        assert!(synced.resampled.iter().all(|r| !r.interpolated));
        assert!(synced.overhangs.is_empty());
        assert_eq!(synced.resampled[1].obs.x, 1.0);
    }

    #[test]
    fn midpoint_interpolates_position() {
        let tr = track(&[(0.0, 0.0), (1.0, 2.0)]);
        let synced = synchronize(&tr, &[0.5]);
        assert_eq!(synced.resampled.len(), 1);
        assert!(synced.resampled[0].interpolated);
        assert_relative_eq!(synced.resampled[0].obs.x, 1.0);
    }

    #[test]
    fn yaw_interpolates_on_the_shortest_arc() {
        // 3.1 to -3.1 rad crosses the pi boundary; the midpoint is +-pi,
        // never 0
        let mut tr = track(&[(0.0, 0.0), (1.0, 0.0)]);
        tr.observations[0].yaw = 3.1;
        tr.observations[1].yaw = -3.1;
        let synced = synchronize(&tr, &[0.5]);
        let yaw = synced.resampled[0].obs.yaw;
        // unit-vector averaging oracle
        let expect = {
            let sy = (3.1f64.sin() + (-3.1f64).sin()) / 2.0;
            let cy = (3.1f64.cos() + (-3.1f64).cos()) / 2.0;
            sy.atan2(cy)
        };
        assert_relative_eq!(yaw.cos(), expect.cos(), epsilon = 1e-9);
        assert_relative_eq!(yaw.sin(), expect.sin(), epsilon = 1e-9);
        assert!(yaw.abs() > 3.0, "midpoint should be near pi, got {yaw}");
    }

    #[test]
    fn constant_velocity_resampling_is_exact() {
        // positions of a constant-velocity track interpolate exactly
        let samples: Vec<(f64, f64)> = (0..11).map(|i| (i as f64 * 0.1, i as f64 * 0.73)).collect();
        let tr = track(&samples);
        let clock: Vec<f64> = (0..21).map(|i| i as f64 * 0.05).collect();
        let synced = synchronize(&tr, &clock);
        for r in &synced.resampled {
            let analytic = r.obs.timestamp * 7.3;
            assert_relative_eq!(r.obs.x, analytic, epsilon = 1e-9);
        }
    }

    #[test]
    fn out_of_span_observations_become_overhangs() {
        let tr = track(&[(-0.05, 0.0), (0.05, 1.0), (0.95, 2.0), (1.05, 3.0)]);
        let clock: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let synced = synchronize(&tr, &clock);
        assert_eq!(synced.overhangs.len(), 2);
        assert_eq!(synced.overhangs[0].side, OverhangSide::Lead);
        assert_relative_eq!(synced.overhangs[0].gap_s, 0.05, epsilon = 1e-12);
        assert_eq!(synced.overhangs[1].side, OverhangSide::Tail);
        assert_relative_eq!(synced.overhangs[1].gap_s, 0.05, epsilon = 1e-12);
        // every original observation is covered or an overhang
        let covered = tr
            .observations
            .iter()
            .filter(|o| o.timestamp >= 0.0 && o.timestamp <= 1.0)
            .count();
        assert_eq!(covered + synced.overhangs.len(), tr.observations.len());
    }

    #[test]
    fn acquisition_basis_is_identity() {
        let rec = Recording::from_observations(
            crate::model::Role::Sut,
            track(&[(1.0, 0.0), (1.1, 1.0)]).observations,
        );
        let cfg = OracleConfig::default();
        let (shifted, latencies) = apply_timestamp_basis(&rec, &cfg);
        assert_eq!(shifted, rec);
        assert!(latencies.values().all(|&l| l == 0.0));
    }

    #[test]
    fn availability_basis_shifts_by_latency() {
        let rec = Recording::from_observations(
            crate::model::Role::Sut,
            track(&[(1.0, 0.0)]).observations,
        );
        let mut cfg = OracleConfig::default();
        cfg.temporal.basis = TimestampBasis::Availability;
        cfg.temporal.sut_latency_s = 0.2.into();
        let (shifted, _) = apply_timestamp_basis(&rec, &cfg);
        assert_relative_eq!(shifted.tracks[0].observations[0].timestamp, 1.2);
    }

    #[test]
    fn overhang_policies_branch_on_gap() {
        let mut cfg = TemporalConfig::default();
        cfg.overhang = OverhangPolicy::Discard;
        assert_eq!(overhang_outcome(10.0, &cfg), OverhangOutcome::Discard);
        cfg.overhang = OverhangPolicy::FnFp;
        assert_eq!(overhang_outcome(0.001, &cfg), OverhangOutcome::Count);
        cfg.overhang = OverhangPolicy::Threshold;
        cfg.overhang_dt_max_s = 0.05;
        assert_eq!(overhang_outcome(0.04, &cfg), OverhangOutcome::Discard);
        cfg.overhang_dt_max_s = 0.03;
        assert_eq!(overhang_outcome(0.04, &cfg), OverhangOutcome::Count);
    }
}
