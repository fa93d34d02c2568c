//! Exact overlap of two oriented boxes, checked against a sampling estimate,
//! plus GIoU of axis-aligned boxes.

use map_planner::geometry::{convex_intersection_area, giou, AxisBox, OrientedBox, Point};
use map_planner::numerics::SeededRng;

fn sampled_overlap(a: &OrientedBox, b: &OrientedBox, n: usize, rng: &mut SeededRng) -> f64 {
    let (pa, pb) = (a.polygon(), b.polygon());
    let (lo, hi) = pa.bounds();
    let hits = (0..n)
        .filter(|_| {
            let p = Point::new(rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y));
            pa.contains(p) && pb.contains(p)
        })
        .count();
    hits as f64 / n as f64 * (hi.x - lo.x) * (hi.y - lo.y)
}

fn main() {
    let ego = OrientedBox::new(0.0, 0.0, 4.0, 1.8, 0.0).unwrap();
    let mut rng = SeededRng::new(3);
    for (dx, dy, yaw) in [(1.0, 0.5, 0.3), (2.5, -1.0, 1.2), (0.0, 0.0, std::f64::consts::FRAC_PI_2), (6.0, 0.0, 0.0)] {
        let other = OrientedBox::new(dx, dy, 4.5, 2.0, yaw).unwrap();
        let exact = convex_intersection_area(&ego.polygon(), &other.polygon());
        let mc = sampled_overlap(&ego, &other, 400_000, &mut rng);
        println!("offset ({dx:4.1}, {dy:4.1}) yaw {yaw:4.2}: exact {exact:.4} m², sampled {mc:.4} m²");
    }

    let unit = AxisBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    for far in [AxisBox::new(0.5, 0.0, 1.5, 1.0).unwrap(), AxisBox::new(2.0, 2.0, 3.0, 3.0).unwrap()] {
        println!("giou {unit:?} vs {far:?} = {:.4}", giou(&unit, &far).unwrap());
    }
}
