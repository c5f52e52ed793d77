//! Geometric primitives behind filtering and matching: polygons, oriented
//! footprints, coordinate transforms, line-of-sight tests, and the distance
//! metrics. Everything here is a pure function over immutable data.

mod distance;
mod footprint;
mod los;
mod mat2;
mod polygon;
mod transform;

pub use distance::{
    center_distance, composite_cost, gating_radius, mahalanobis, one_minus_iou, wasserstein2,
    CostBreakdown, COVARIANCE_CONDITION_LIMIT,
};
pub use footprint::Footprint;
pub use los::occlusion_fraction;
pub use mat2::Sym2;
pub use polygon::{
    clip_convex, point_on_segment, point_segment_distance, segments_intersect, shoelace_area,
    Point, Polygon2D,
};
pub use transform::Transform;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("degenerate (zero-area) bounding box on track {track_id}")]
    DegenerateBox { track_id: String },
    #[error("combined position covariance of tracks {a} and {b} is singular")]
    SingularCovariance { a: String, b: String },
    #[error("position covariance of track {track_id} is not positive semi-definite")]
    NotPsd { track_id: String },
    #[error("viewer lies inside the footprint of track {track_id} at t={timestamp}")]
    ViewerInsideTarget { track_id: String, timestamp: f64 },
}
