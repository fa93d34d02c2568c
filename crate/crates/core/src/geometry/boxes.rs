use serde::{Deserialize, Serialize};

use super::{ConvexPolygon, GeometryError, Point};

/// Rectangle in the BEV plane; `length` runs along `heading`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center_x: f64,
    pub center_y: f64,
    pub length: f64,
    pub width: f64,
    pub heading: f64,
}

impl OrientedBox {
    pub fn new(
        center_x: f64,
        center_y: f64,
        length: f64,
        width: f64,
        heading: f64,
    ) -> Result<Self, GeometryError> {
        let b = Self {
            center_x,
            center_y,
            length,
            width,
            heading,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let vals = [self.center_x, self.center_y, self.length, self.width, self.heading];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if self.length <= 0.0 || self.width <= 0.0 {
            return Err(GeometryError::NonPositiveExtent {
                length: self.length,
                width: self.width,
            });
        }
        Ok(())
    }

    pub fn center(&self) -> Point {
        Point::new(self.center_x, self.center_y)
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// Corners in counterclockwise order starting at front-left.
    pub fn corners(&self) -> [Point; 4] {
        let (hl, hw) = (0.5 * self.length, 0.5 * self.width);
        let c = self.center();
        [
            Point::new(hl, hw),
            Point::new(-hl, hw),
            Point::new(-hl, -hw),
            Point::new(hl, -hw),
        ]
        .map(|p| p.rotate(self.heading) + c)
    }

    pub fn polygon(&self) -> ConvexPolygon {
        ConvexPolygon::new(self.corners().to_vec()).expect("validated box is convex")
    }

    /// Smallest axis-aligned box containing this one.
    pub fn axis_hull(&self) -> AxisBox {
        let cs = self.corners();
        let xs = cs.map(|p| p.x);
        let ys = cs.map(|p| p.y);
        AxisBox {
            min_x: xs.iter().copied().fold(f64::INFINITY, f64::min),
            min_y: ys.iter().copied().fold(f64::INFINITY, f64::min),
            max_x: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            max_y: ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Corner polygon of an oriented box.
pub fn box_corners(b: &OrientedBox) -> ConvexPolygon {
    b.polygon()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl AxisBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, GeometryError> {
        let b = Self {
            min_x,
            min_y,
            max_x,
            max_y,
        };
        if b.area() <= 0.0 || !b.area().is_finite() {
            return Err(GeometryError::ZeroArea);
        }
        Ok(b)
    }

    /// From center and size.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y))
    }

    pub fn iou(&self, o: &AxisBox) -> f64 {
        let inter = self.intersection_area(o);
        inter / (self.area() + o.area() - inter)
    }

    fn intersection_area(&self, o: &AxisBox) -> f64 {
        let w = self.max_x.min(o.max_x) - self.min_x.max(o.min_x);
        let h = self.max_y.min(o.max_y) - self.min_y.max(o.min_y);
        w.max(0.0) * h.max(0.0)
    }
}

/// Generalized IoU: `IoU − |hull \ (a ∪ b)| / |hull|`.
pub fn giou(a: &AxisBox, b: &AxisBox) -> Result<f64, GeometryError> {
    if a.area() <= 0.0 || b.area() <= 0.0 {
        return Err(GeometryError::ZeroArea);
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = (a.max_x.max(b.max_x) - a.min_x.min(b.min_x))
        * (a.max_y.max(b.max_y) - a.min_y.min(b.min_y));
    Ok(inter / union - (hull - union) / hull)
}
