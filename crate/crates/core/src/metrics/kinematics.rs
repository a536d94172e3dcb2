//! Path length and walking speed on the 0.4 m lattice.

use super::trajectory::{segments, TrajectoryRecord};
use crate::{Error, Result};

/// Length of a straight step between cell centres (m).
pub const STRAIGHT_STEP: f64 = 0.4;
/// Length credited to a diagonal step (m).
pub const DIAGONAL_STEP: f64 = 0.56;
/// Half-cell correction applied at each end in observation mode (m).
pub const HALF_CELL: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathMode {
    /// Centre-to-centre steps only.
    #[default]
    Simulation,
    /// Adds half a cell at the start and at the end, as when coding video by hand.
    Observation,
}

/// Step length between two consecutive positions; `None` for a jump.
fn step_length(a: &TrajectoryRecord, b: &TrajectoryRecord, rows: Option<usize>) -> Option<f64> {
    let mut dr = a.row.abs_diff(b.row);
    if let Some(rows) = rows {
        dr = dr.min(rows - dr);
    }
    let dc = a.col.abs_diff(b.col);
    match (dr, dc) {
        (0, 0) => Some(0.0),
        (0, 1) | (1, 0) => Some(STRAIGHT_STEP),
        (1, 1) => Some(DIAGONAL_STEP),
        _ => None,
    }
}

/// Path walked over a continuous, step-ordered trajectory.
pub fn path_length(traj: &[TrajectoryRecord], mode: PathMode) -> Result<f64> {
    path_length_wrapped(traj, mode, None)
}

/// As [`path_length`], with row wrap on a torus of `rows` rows.
pub fn path_length_wrapped(traj: &[TrajectoryRecord], mode: PathMode, wrap_rows: Option<usize>) -> Result<f64> {
    let mut total = 0.0;
    for w in traj.windows(2) {
        if w[1].step <= w[0].step {
            return Err(Error::Data { step: w[1].step, message: "records not in step order".into() });
        }
        total += step_length(&w[0], &w[1], wrap_rows).ok_or_else(|| Error::Data {
            step: w[1].step,
            message: format!(
                "agent {} jumps from ({}, {}) to ({}, {})",
                w[1].agent_id, w[0].row, w[0].col, w[1].row, w[1].col
            ),
        })?;
    }
    if mode == PathMode::Observation && traj.len() >= 2 {
        total += 2.0 * HALF_CELL;
    }
    Ok(total)
}

/// Path length over elapsed time; `frame_interval` is the duration of one step (s).
pub fn walking_speed(traj: &[TrajectoryRecord], frame_interval: f64) -> Result<f64> {
    walking_speed_with(traj, frame_interval, PathMode::Simulation)
}

pub fn walking_speed_with(traj: &[TrajectoryRecord], frame_interval: f64, mode: PathMode) -> Result<f64> {
    let (Some(first), Some(last)) = (traj.first(), traj.last()) else {
        return Err(Error::Domain("walking speed of an empty trajectory".into()));
    };
    let elapsed = last.step.saturating_sub(first.step) as f64 * frame_interval;
    if !(elapsed > 0.0) {
        return Err(Error::Domain(format!("agent {} has zero elapsed time", first.agent_id)));
    }
    Ok(path_length(traj, mode)? / elapsed)
}

/// Speed over all passes of one agent: total path over total elapsed time.
/// `None` when no pass spans more than one step.
pub fn agent_speed(records: &[TrajectoryRecord], frame_interval: f64, wrap_rows: Option<usize>) -> Result<Option<f64>> {
    let mut path = 0.0;
    let mut steps = 0u64;
    for seg in segments(records) {
        if seg.len() < 2 {
            continue;
        }
        path += path_length_wrapped(seg, PathMode::Simulation, wrap_rows)?;
        steps += seg[seg.len() - 1].step - seg[0].step;
    }
    Ok((steps > 0).then(|| path / (steps as f64 * frame_interval)))
}

/// Net progress along the corridor axis (rows) over elapsed time, summed
/// over passes. Sideways and back-and-forth moves cancel, so this tracks
/// throughput rather than effort. `None` when no pass spans more than one step.
pub fn agent_progress_speed(
    records: &[TrajectoryRecord],
    frame_interval: f64,
    wrap_rows: Option<usize>,
) -> Result<Option<f64>> {
    let mut cells = 0i64;
    let mut steps = 0u64;
    for seg in segments(records) {
        if seg.len() < 2 {
            continue;
        }
        let mut net = 0i64;
        for w in seg.windows(2) {
            let mut dr = w[1].row as i64 - w[0].row as i64;
            if let Some(rows) = wrap_rows {
                let rows = rows as i64;
                if dr > rows / 2 {
                    dr -= rows;
                } else if dr < -rows / 2 {
                    dr += rows;
                }
            }
            if dr.abs() > 1 || w[1].col.abs_diff(w[0].col) > 1 {
                return Err(Error::Data { step: w[1].step, message: format!("agent {} jumps", w[1].agent_id) });
            }
            net += dr;
        }
        cells += net.abs();
        steps += seg[seg.len() - 1].step - seg[0].step;
    }
    Ok((steps > 0).then(|| cells as f64 * STRAIGHT_STEP / (steps as f64 * frame_interval)))
}
