//! Leaderboard score from average L2, collision rate and off-road rate.
//!
//! cargo run --example score_formula -- 2.56 0.96 0.39

use map_planner::eval::leaderboard_score;

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numbers: L2_m collision_% offroad_%"))
        .collect();
    let rows: Vec<(f64, f64, f64)> = match args[..] {
        [l2, col, off] => vec![(l2, col, off)],
        [] => vec![(3.07, 0.71, 0.89), (2.56, 0.96, 0.39), (2.67, 0.67, 0.46), (0.0, 0.0, 0.0)],
        _ => panic!("expected three numbers or none"),
    };
    println!("{:>8} {:>8} {:>8} {:>8}", "L2 m", "col %", "off %", "score");
    for (l2, col, off) in rows {
        println!("{l2:>8.2} {col:>8.2} {off:>8.2} {:>8.3}", leaderboard_score(l2, col, off));
    }
}
