//! Line-of-sight occlusion between a viewer point and object footprints.

use crate::model::ObjectObservation;

use super::footprint::Footprint;
use super::polygon::Point;
use super::GeometryError;

/// Fraction of sight lines from `viewer` to `target` blocked by other
/// footprints.
///
/// Five segments are cast: viewer to each footprint corner and to the
/// center. The returned fraction is the share of segments touching any
/// blocker footprint, so values are multiples of 0.2.
pub fn occlusion_fraction(
    viewer: Point,
    target: &ObjectObservation,
    blockers: &[&ObjectObservation],
) -> Result<f64, GeometryError> {
    let footprint = Footprint::of(target);
    if footprint.contains(viewer) {
        return Err(GeometryError::ViewerInsideTarget {
            track_id: target.track_id.clone(),
            timestamp: target.timestamp,
        });
    }
    let blocker_prints: Vec<Footprint> = blockers.iter().map(|b| Footprint::of(b)).collect();
    let mut endpoints: Vec<Point> = footprint.corners.to_vec();
    endpoints.push(target.center());
    let blocked = endpoints
        .iter()
        .filter(|end| {
            blocker_prints
                .iter()
                .any(|b| b.intersects_segment(viewer, **end))
        })
        .count();
    Ok(blocked as f64 / endpoints.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObjectObservation;
    use approx::assert_relative_eq;

    fn obs(x: f64, y: f64, l: f64, w: f64, yaw: f64) -> ObjectObservation {
        ObjectObservation::basic(0.0, "t", "car", x, y, l, w, yaw)
    }

    #[test]
    fn no_blockers_means_fully_visible() {
        let target = obs(10.0, 0.0, 4.0, 2.0, 0.0);
        assert_eq!(occlusion_fraction([0.0, 0.0], &target, &[]).unwrap(), 0.0);
    }

    #[test]
    fn blocker_covering_all_rays_gives_one() {
        let target = obs(30.0, 0.0, 2.0, 2.0, 0.0);
        // wide wall directly in front of the target
        let wall = obs(15.0, 0.0, 1.0, 40.0, 0.0);
        assert_relative_eq!(
            occlusion_fraction([0.0, 0.0], &target, &[&wall]).unwrap(),
            1.0
        );
    }

    #[test]
    fn collinear_diagonal_geometry_blocks_three_of_five_rays() {
        // Viewer at origin, target centered on (10, 10) with axis-aligned
        // 2x2 footprint: rays to the corners (9,9) and (11,11) and to the
        // center (10,10) are all collinear on y = x. A small blocker sitting
        // on that line hits exactly those three segments.
        let target = obs(10.0, 10.0, 2.0, 2.0, 0.0);
        let blocker = obs(5.0, 5.0, 0.5, 0.5, 0.0);
        let frac = occlusion_fraction([0.0, 0.0], &target, &[&blocker]).unwrap();

        // brute-force check: count blocked segments explicitly
        let tf = Footprint::of(&target);
        let bf = Footprint::of(&blocker);
        let mut ends: Vec<Point> = tf.corners.to_vec();
        ends.push([10.0, 10.0]);
        let brute = ends
            .iter()
            .filter(|e| bf.intersects_segment([0.0, 0.0], **e))
            .count();
        assert_eq!(brute, 3);
        assert_relative_eq!(frac, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn viewer_inside_target_is_an_error() {
        let target = obs(0.0, 0.0, 4.0, 2.0, 0.0);
        let err = occlusion_fraction([0.0, 0.0], &target, &[]).unwrap_err();
        assert!(err.to_string().contains("t"));
    }
}
