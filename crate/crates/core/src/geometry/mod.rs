//! Exact planar geometry for BEV boxes and regions.

mod boxes;
mod grid;
mod polygon;
mod sdf;

pub use boxes::{box_corners, giou, AxisBox, OrientedBox};
pub use grid::{point_in_mask, rasterize, GridSpec, RegionMask};
pub use polygon::{
    convex_intersection_area, intersection_area_and_translation_grad, signed_area, ConvexPolygon,
    Point,
};
pub use sdf::SignedDistanceField;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has zero area")]
    Degenerate,
    #[error("polygon is not convex")]
    NotConvex,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("box extents must be positive (length {length}, width {width})")]
    NonPositiveExtent { length: f64, width: f64 },
    #[error("box has zero area")]
    ZeroArea,
    #[error("grid needs positive resolution and extents")]
    InvalidGrid,
}
