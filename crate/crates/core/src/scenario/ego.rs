use serde::{Deserialize, Serialize};

use super::{ScenarioError, FRAME_DT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Command {
    Left,
    Straight,
    Right,
}

impl Command {
    pub const ALL: [Command; 3] = [Command::Left, Command::Straight, Command::Right];

    pub fn index(self) -> usize {
        match self {
            Command::Left => 0,
            Command::Straight => 1,
            Command::Right => 2,
        }
    }
}

/// One CAN-bus sample in the global frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Current-frame kinematics plus the driving command.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EgoStatus {
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub heading: f64,
    pub command: Command,
}

/// How frame gaps are measured when differencing positions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntervalMode {
    /// True timestamp differences.
    #[default]
    ActualDt,
    /// Every gap taken as 0.5 s regardless of timestamps.
    FixedDt,
}

impl std::str::FromStr for IntervalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "ACTUAL_DT" | "ACTUAL" => Ok(IntervalMode::ActualDt),
            "FIXED_DT" | "FIXED" => Ok(IntervalMode::FixedDt),
            other => Err(format!("unknown interval mode `{other}` (ACTUAL_DT or FIXED_DT)")),
        }
    }
}

/// Velocity and acceleration at frame `i` by backward differences.
///
/// Velocity is the position change from frame `i − 1` to `i` divided by the
/// gap; acceleration is the change between the two most recent velocities
/// divided by the same gap. Heading and command are read at frame `i`.
pub fn derive_ego_status(
    poses: &[PoseRecord],
    commands: &[Command],
    i: usize,
    mode: IntervalMode,
) -> Result<EgoStatus, ScenarioError> {
    if i < 2 || i >= poses.len() {
        return Err(ScenarioError::FrameIndex {
            index: i,
            len: poses.len(),
        });
    }
    let command = *commands.get(i).ok_or(ScenarioError::MissingCommand(i))?;
    let gap = |k: usize| -> Result<f64, ScenarioError> {
        let dt = poses[k].t - poses[k - 1].t;
        if !(dt > 0.0) {
            return Err(ScenarioError::NonPositiveInterval { frame: k, dt });
        }
        Ok(match mode {
            IntervalMode::ActualDt => dt,
            IntervalMode::FixedDt => FRAME_DT,
        })
    };
    let dt_now = gap(i)?;
    let dt_prev = gap(i - 1)?;
    let (p0, p1, p2) = (poses[i - 2], poses[i - 1], poses[i]);
    let v_prev = ((p1.x - p0.x) / dt_prev, (p1.y - p0.y) / dt_prev);
    let v_now = ((p2.x - p1.x) / dt_now, (p2.y - p1.y) / dt_now);
    Ok(EgoStatus {
        vx: v_now.0,
        vy: v_now.1,
        ax: (v_now.0 - v_prev.0) / dt_now,
        ay: (v_now.1 - v_prev.1) / dt_now,
        heading: p2.heading,
        command,
    })
}
