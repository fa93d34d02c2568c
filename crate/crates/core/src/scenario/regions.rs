use super::{Scene, HORIZON};
use crate::geometry::{rasterize, ConvexPolygon, GridSpec, OrientedBox, Point, RegionMask, SignedDistanceField};

/// Distance reported when a step has no obstacles at all.
const FAR: f64 = 1e3;

/// Rasterized drivable/undrivable regions and per-step obstacle regions of a
/// scene on the region grid.
///
/// Obstacle masks are not stored: a point is inside step `t`'s obstacle
/// region when the center of its cell lies in one of that step's boxes,
/// which is exactly what the rasterized mask would report.
#[derive(Clone, Debug)]
pub struct SceneRegions {
    grid: GridSpec,
    drivable: RegionMask,
    undrivable: RegionMask,
    undrivable_sdf: SignedDistanceField,
    obstacles: Vec<Vec<OrientedBox>>,
    obstacle_polys: Vec<Vec<ConvexPolygon>>,
}

impl SceneRegions {
    pub fn new(scene: &Scene, grid: &GridSpec) -> Self {
        let drivable = rasterize(&scene.drivable, grid);
        let undrivable = drivable.complement();
        let undrivable_sdf = SignedDistanceField::from_mask(&undrivable);
        let obstacle_polys = scene
            .obstacles
            .iter()
            .map(|step| step.iter().map(|b| b.polygon()).collect())
            .collect();
        Self {
            grid: *grid,
            drivable,
            undrivable,
            undrivable_sdf,
            obstacles: scene.obstacles.clone(),
            obstacle_polys,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn drivable(&self) -> &RegionMask {
        &self.drivable
    }

    pub fn undrivable(&self) -> &RegionMask {
        &self.undrivable
    }

    /// Off the grid counts as off-road.
    pub fn is_offroad(&self, p: Point) -> bool {
        self.undrivable.contains(p)
    }

    /// Point test against the obstacle region of step `step` (0-based).
    pub fn in_obstacle(&self, step: usize, p: Point) -> bool {
        match self.grid.cell_of(p) {
            Some((r, c)) => {
                let center = self.grid.center_of(r, c);
                self.obstacle_polys[step].iter().any(|poly| poly.contains(center))
            }
            None => false,
        }
    }

    /// Materialized obstacle mask of step `step` (0-based).
    pub fn obstacle_mask(&self, step: usize) -> RegionMask {
        rasterize(&self.obstacle_polys[step], &self.grid)
    }

    /// Signed distance to the undrivable region (negative inside) and its
    /// spatial gradient.
    pub fn undrivable_distance(&self, p: Point) -> (f64, Point) {
        self.undrivable_sdf.eval(p)
    }

    /// Signed distance to the union of step `step`'s boxes (negative inside)
    /// and its spatial gradient.
    pub fn obstacle_distance(&self, step: usize, p: Point) -> (f64, Point) {
        self.obstacles[step]
            .iter()
            .map(|b| box_signed_distance(b, p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((FAR, Point::default()))
    }

    pub fn steps(&self) -> usize {
        HORIZON
    }
}

/// Exact signed distance from `p` to an oriented box and its gradient.
pub(crate) fn box_signed_distance(b: &OrientedBox, p: Point) -> (f64, Point) {
    let q = (p - b.center()).rotate(-b.heading);
    let (hx, hy) = (0.5 * b.length, 0.5 * b.width);
    let dx = q.x.abs() - hx;
    let dy = q.y.abs() - hy;
    let (sx, sy) = (sign(q.x), sign(q.y));
    let (d, g_local) = if dx > 0.0 || dy > 0.0 {
        let ox = dx.max(0.0);
        let oy = dy.max(0.0);
        let n = ox.hypot(oy);
        (n, Point::new(sx * ox / n, sy * oy / n))
    } else if dx > dy {
        (dx, Point::new(sx, 0.0))
    } else {
        (dy, Point::new(0.0, sy))
    };
    (d, g_local.rotate(b.heading))
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_distance_values() {
        let b = OrientedBox::new(1.0, 1.0, 4.0, 2.0, 0.0).unwrap();
        let (d, g) = box_signed_distance(&b, Point::new(5.0, 1.0));
        assert!((d - 2.0).abs() < 1e-12);
        assert!((g.x - 1.0).abs() < 1e-12 && g.y.abs() < 1e-12);
        let (d, _) = box_signed_distance(&b, Point::new(1.0, 1.0));
        assert!((d + 1.0).abs() < 1e-12);
        let (d, _) = box_signed_distance(&b, Point::new(6.0, 5.0));
        assert!((d - 18f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn box_distance_gradient_matches_differences() {
        let b = OrientedBox::new(0.3, -0.2, 4.0, 1.8, 0.7).unwrap();
        for p in [Point::new(3.0, 2.0), Point::new(0.5, 0.1), Point::new(-2.0, 1.5)] {
            let (_, g) = box_signed_distance(&b, p);
            let h = 1e-6;
            let fx = (box_signed_distance(&b, p + Point::new(h, 0.0)).0
                - box_signed_distance(&b, p - Point::new(h, 0.0)).0)
                / (2.0 * h);
            let fy = (box_signed_distance(&b, p + Point::new(0.0, h)).0
                - box_signed_distance(&b, p - Point::new(0.0, h)).0)
                / (2.0 * h);
            assert!((g.x - fx).abs() < 1e-6 && (g.y - fy).abs() < 1e-6);
        }
    }
}
