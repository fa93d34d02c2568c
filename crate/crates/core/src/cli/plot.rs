use std::fmt::Write as _;

use crate::geometry::Point;
use crate::scenario::Scene;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    /// Meters of free space around the drawn trajectories.
    pub margin: f64,
}

impl Default for Canvas {
    fn default() -> Self {
        Self {
            width: 640,
            height: 640,
            margin: 12.0,
        }
    }
}

/// Maps ego-frame meters (x forward, y left) to pixels with forward up.
struct View {
    cx: f64,
    cy: f64,
    scale: f64,
    w: f64,
    h: f64,
}

impl View {
    fn px(&self, p: Point) -> (f64, f64) {
        (
            self.w / 2.0 - (p.y - self.cy) * self.scale,
            self.h / 2.0 - (p.x - self.cx) * self.scale,
        )
    }
}

fn polygon_path(view: &View, pts: &[Point]) -> String {
    pts.iter()
        .map(|&p| {
            let (x, y) = view.px(p);
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// SVG of the predicted and ground-truth trajectories over the drivable
/// area and the first-step obstacles. Same inputs give the same bytes.
pub fn render_svg(scene: &Scene, pred: &[Point], canvas: &Canvas) -> String {
    let pts: Vec<Point> = scene
        .gt_trajectory
        .iter()
        .chain(pred)
        .copied()
        .chain([Point::new(0.0, 0.0)])
        .collect();
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in &pts {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let (w, h) = (canvas.width as f64, canvas.height as f64);
    let span_x = hi.x - lo.x + 2.0 * canvas.margin;
    let span_y = hi.y - lo.y + 2.0 * canvas.margin;
    let view = View {
        cx: 0.5 * (lo.x + hi.x),
        cy: 0.5 * (lo.y + hi.y),
        scale: (h / span_x).min(w / span_y),
        w,
        h,
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        canvas.width, canvas.height, canvas.width, canvas.height
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#f4f1ea"/>"##);
    for poly in &scene.drivable {
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="#c9c9c9" stroke="none"/>"##,
            polygon_path(&view, poly.vertices())
        );
    }
    for b in scene.obstacles.first().into_iter().flatten() {
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="#e0a030" stroke="#805010" stroke-width="1"/>"##,
            polygon_path(&view, &b.corners())
        );
    }
    let ego = Point::new(0.0, 0.0);
    for (color, traj, id) in [("#2a7a2a", &scene.gt_trajectory[..], "gt"), ("#c02020", pred, "pred")] {
        let line: Vec<Point> = std::iter::once(ego).chain(traj.iter().copied()).collect();
        let _ = writeln!(
            s,
            r#"<polyline id="{id}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            polygon_path(&view, &line)
        );
        for &p in traj {
            let (x, y) = view.px(p);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
        }
    }
    s.push_str("</svg>\n");
    s
}
