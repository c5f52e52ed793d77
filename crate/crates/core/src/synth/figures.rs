//! Hard-coded demonstration scenes covering the classic verdict corner
//! cases in space (an urban intersection snapshot) and in time (asynchronous
//! and fragmented tracks).

use crate::config::{AovConfig, AovShape, AreasConfig, PolygonRef};
use crate::geometry::Polygon2D;
use crate::model::{ObjectObservation, Recording, Role};

/// One row of the documented expected-verdict table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedVerdict {
    /// Object or track the row refers to (e.g. "a", "m", "b").
    pub object: &'static str,
    /// Policy combination the row holds under.
    pub policy: &'static str,
    /// Expected outcome, e.g. "tp", "fp+fn", "excluded:occluded".
    pub outcome: &'static str,
}

fn row(object: &'static str, policy: &'static str, outcome: &'static str) -> ExpectedVerdict {
    ExpectedVerdict {
        object,
        policy,
        outcome,
    }
}

/// Single-frame intersection snapshot with one object per corner case.
///
/// The viewer (system under test) sits at the origin looking along +x with a
/// 145-degree sector of 50 m; the reference is an overhead rectangle. Object
/// roster, all at t = 0:
///
/// * `a` — truck seen by both, 0.3 m apart: the obvious TP
/// * `b` — spurious detection: FP
/// * `c` — missed reference object: FN
/// * `d` — pedestrian inside a no-test polygon (both sides excluded)
/// * `e` — pedestrian inside the reference area but beyond the sector range
/// * `f` — one detection between two reference cyclists (ambiguity)
/// * `g` — cyclist fully hidden behind truck `a`
/// * `h` — truck detected only by its rear end: centers 4 m apart
/// * `j`, `l` — detections outside the reference area of vision
/// * `m` — pedestrian detected twice
/// * `n` — matchable pair straddling a no-test border (detection 0.4 m
///   inside the excluded zone)
///
/// Objects `k` (occluded AND outside the reference area) and the rest of the
/// narrative exist only as absences: neither system recorded them.
pub struct Figure2Scene {
    pub res: Recording,
    pub sut: Recording,
    /// Scene geometry to overlay onto the oracle configuration.
    pub aov: AovConfig,
    pub areas: AreasConfig,
    pub expected: Vec<ExpectedVerdict>,
}

pub fn figure2_scene() -> Figure2Scene {
    let t = 0.0;
    let obs = |id: &str, cls: &str, x: f64, y: f64, l: f64, w: f64| {
        ObjectObservation::basic(t, id, cls, x, y, l, w, 0.0)
    };

    let res = Recording::from_observations(
        Role::Res,
        vec![
            obs("res-a", "truck", 20.0, 0.0, 8.0, 3.0),
            obs("res-c", "car", 10.0, 10.0, 4.0, 2.0),
            obs("res-d", "pedestrian", 15.0, 20.0, 0.6, 0.5),
            obs("res-e", "pedestrian", 55.0, 20.0, 0.6, 0.5),
            obs("res-f1", "cyclist", 30.0, -4.2, 1.8, 0.8),
            obs("res-f2", "cyclist", 30.0, -5.6, 1.8, 0.8),
            obs("res-g", "cyclist", 35.0, 0.0, 1.8, 0.8),
            obs("res-h", "truck", 40.0, -15.0, 10.0, 3.0),
            obs("res-m", "pedestrian", 8.0, -20.0, 0.6, 0.5),
            obs("res-n", "pedestrian", 24.6, 22.0, 0.6, 0.5),
        ],
    );
    let sut = Recording::from_observations(
        Role::Sut,
        vec![
            obs("sut-a", "truck", 20.3, 0.0, 8.0, 3.0),
            obs("sut-b", "car", 10.0, -10.0, 4.0, 2.0),
            obs("sut-d", "pedestrian", 15.3, 20.0, 0.6, 0.5),
            obs("sut-f", "cyclist", 30.0, -5.0, 1.8, 0.8),
            obs("sut-h", "truck", 36.0, -15.0, 2.0, 3.0),
            obs("sut-j", "pedestrian", 20.0, 41.0, 0.6, 0.5),
            obs("sut-l", "car", 18.0, 44.0, 4.0, 2.0),
            obs("sut-m1", "pedestrian", 8.2, -20.0, 0.6, 0.5),
            obs("sut-m2", "pedestrian", 7.8, -20.3, 0.6, 0.5),
            obs("sut-n", "pedestrian", 25.4, 22.0, 0.6, 0.5),
        ],
    );

    let aov = AovConfig {
        res: AovShape::Polygon {
            vertices: Polygon2D::rectangle(-5.0, -40.0, 70.0, 40.0),
        },
        sut: AovShape::Sector {
            origin: [0.0, 0.0],
            range_m: 50.0,
            fov_rad: 145.0f64.to_radians(),
        },
        ..AovConfig::default()
    };
    let areas = AreasConfig {
        exclude: vec![
            PolygonRef::Inline(Polygon2D::rectangle(12.0, 17.0, 18.0, 23.0)),
            PolygonRef::Inline(Polygon2D::rectangle(25.0, 18.0, 35.0, 30.0)),
        ],
        ..AreasConfig::default()
    };

    // "default" = 2 m center-distance gate, equal classes, hungarian 1:1,
    // occlusion exclusion at full cover, hard border cut
    let expected = vec![
        row("a", "default", "tp"),
        row("b", "default", "fp"),
        row("c", "default", "fn"),
        row("d", "default", "excluded:no_test_area"),
        row("e", "default", "excluded:outside_sut_aov"),
        row("f", "default", "tp+fn"),
        row("f", "n_n", "2tp"),
        row("g", "default", "excluded:occluded"),
        row("h", "default", "fp+fn"),
        row("j", "default", "excluded:outside_res_aov"),
        row("l", "default", "excluded:outside_res_aov"),
        row("m", "default", "tp+fp"),
        row("m", "n_one", "2tp"),
        row("n", "default", "fn"),
        row("n", "fuzzy_rescue", "tp:border_rescued"),
    ];

    Figure2Scene {
        res,
        sut,
        aov,
        areas,
        expected,
    }
}

/// Two temporal scenes on a 10 Hz grid.
///
/// Scene `a`: one object tracked by both systems, reference sampled 50 ms
/// off the grid and extending one sample beyond each end of the clock
/// (lead/tail overhangs of 0.05 s).
///
/// Scene `b`: one object, two reference track segments (re-identified at
/// t = 0.75) and two differently fragmented segments under test. Frame-wise
/// matching yields exactly one FN (t = 0.5, the missed frame) and one FP
/// (t = 1.5, past the reference end); subsequence matching marks exactly one
/// ID switch on the first reference track; whole-track matching pairs the
/// overlapping segments and leaves the rest as overhangs.
pub struct Figure3Scene {
    pub res_a: Recording,
    pub sut_a: Recording,
    pub res_b: Recording,
    pub sut_b: Recording,
    pub expected: Vec<ExpectedVerdict>,
}

pub fn figure3_scene() -> Figure3Scene {
    let moving = |id: &str, t: f64, dx: f64| {
        let mut o = ObjectObservation::basic(t, id, "car", 5.0 * t + dx, 0.0, 4.0, 2.0, 0.0);
        o.vx = 5.0;
        o
    };

    // scene a: 11 SUT frames at 0.0..1.0, 12 reference samples at -0.05..1.05
    let sut_a = Recording::from_observations(
        Role::Sut,
        (0..11).map(|i| moving("sut-a3", i as f64 * 0.1, 0.0)).collect(),
    );
    let res_a = Recording::from_observations(
        Role::Res,
        (0..12)
            .map(|i| moving("res-a3", -0.05 + i as f64 * 0.1, 0.0))
            .collect(),
    );

    // scene b
    let mut res_b_obs: Vec<ObjectObservation> = Vec::new();
    for i in 0..=7 {
        res_b_obs.push(moving("res-b1", i as f64 * 0.1, 0.0));
    }
    for i in 8..=14 {
        res_b_obs.push(moving("res-b2", i as f64 * 0.1, 0.0));
    }
    let mut sut_b_obs: Vec<ObjectObservation> = Vec::new();
    for i in 0..=4 {
        sut_b_obs.push(moving("sut-b1", i as f64 * 0.1, 0.1));
    }
    for i in 6..=15 {
        sut_b_obs.push(moving("sut-b2", i as f64 * 0.1, 0.1));
    }
    let res_b = Recording::from_observations(Role::Res, res_b_obs);
    let sut_b = Recording::from_observations(Role::Sut, sut_b_obs);

    let expected = vec![
        row("a", "overhang=discard", "0fn+0fp"),
        row("a", "overhang=fn_fp", "2fn"),
        row("a", "overhang=threshold(0.06)", "0fn"),
        row("a", "overhang=threshold(0.03)", "2fn"),
        row("b", "frame", "1fn+1fp"),
        row("b", "subsequence", "1 id_switch on res-b1"),
        row("b", "track", "sut-b1<->res-b1, sut-b2<->res-b2, 6 overhang frames"),
    ];

    Figure3Scene {
        res_a,
        sut_a,
        res_b,
        sut_b,
        expected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_recording;

    #[test]
    fn figure_recordings_are_well_formed() {
        let f2 = figure2_scene();
        assert!(validate_recording(&f2.res).is_empty());
        assert!(validate_recording(&f2.sut).is_empty());
        let f3 = figure3_scene();
        for rec in [&f3.res_a, &f3.sut_a, &f3.res_b, &f3.sut_b] {
            assert!(validate_recording(rec).is_empty());
        }
    }

    #[test]
    fn figure2_objects_sit_in_documented_regions() {
        let f2 = figure2_scene();
        // e is inside the reference rectangle but outside the sector range
        let e = &f2.res.tracks.iter().find(|t| t.track_id == "res-e").unwrap().observations[0];
        assert!(f2.aov.res.contains(e.center()));
        assert!(!f2.aov.sut.contains(e.center()));
        // j and l are inside the sector but above the reference rectangle
        for id in ["sut-j", "sut-l"] {
            let o = &f2.sut.tracks.iter().find(|t| t.track_id == id).unwrap().observations[0];
            assert!(f2.aov.sut.contains(o.center()), "{id} must be in the sector");
            assert!(!f2.aov.res.contains(o.center()), "{id} must be outside the rectangle");
        }
        // d sits in the first no-test polygon, n's detection in the second
        let d = &f2.res.tracks.iter().find(|t| t.track_id == "res-d").unwrap().observations[0];
        assert!(f2.areas.exclude[0].polygon().contains(d.center()));
        let n = &f2.sut.tracks.iter().find(|t| t.track_id == "sut-n").unwrap().observations[0];
        assert!(f2.areas.exclude[1].polygon().contains(n.center()));
        let n_res = &f2.res.tracks.iter().find(|t| t.track_id == "res-n").unwrap().observations[0];
        assert!(!f2.areas.exclude[1].polygon().contains(n_res.center()));
        // boundary distance that fuzzy_rescue(1.0) relies on
        let d_boundary = f2.areas.exclude[1].polygon().boundary_distance(n.center());
        assert!((d_boundary - 0.4).abs() < 1e-9);
    }
}
