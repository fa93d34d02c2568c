//! Velocity and acceleration from a pose log, with the nominal frame gap
//! and with the logged timestamps.

use map_planner::scenario::{derive_ego_status, Command, IntervalMode, PoseRecord};

fn main() {
    let log = |ts: [f64; 3]| -> Vec<PoseRecord> {
        ts.iter()
            .zip([0.0, 1.0, 3.0])
            .map(|(&t, x)| PoseRecord { t, x, y: 0.0, heading: 0.0 })
            .collect()
    };
    let cmds = [Command::Straight; 3];
    for (name, ts) in [("regular 0.5 s log", [0.0, 0.5, 1.0]), ("jittered log", [0.0, 0.4, 0.8])] {
        let poses = log(ts);
        println!("{name}: t = {ts:?}, x = [0, 1, 3]");
        for mode in [IntervalMode::FixedDt, IntervalMode::ActualDt] {
            let s = derive_ego_status(&poses, &cmds, 2, mode).unwrap();
            println!("  {mode:?}: vx {:.3} m/s, ax {:.3} m/s²", s.vx, s.ax);
        }
    }
}
