//! Counting, density, fundamental diagrams and level of service.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::kinematics::{DIAGONAL_STEP, STRAIGHT_STEP};
use super::trajectory::{segments, TrajectoryLog, TrajectoryRecord};
use crate::environment::Rect;
use crate::population::AgentId;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalDiagramPoint {
    pub window_start: u64,
    /// ped/m²
    pub density: f64,
    /// m/s
    pub velocity: f64,
    /// ped/(m·s), always `density * velocity`
    pub flow: f64,
    /// Crossings of the section per metre of width per second, when a section was given.
    pub section_flow: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Horizontal line at the north edge of row `index`; forward = southward.
    Row,
    /// Vertical line at the west edge of column `index`; forward = eastward.
    Col,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub axis: Axis,
    pub index: usize,
}

impl Section {
    pub fn row(index: usize) -> Self {
        Section { axis: Axis::Row, index }
    }

    pub fn col(index: usize) -> Self {
        Section { axis: Axis::Col, index }
    }

    /// Width of the section line in metres.
    pub fn width_m(&self, log: &TrajectoryLog) -> f64 {
        let cells = match self.axis {
            Axis::Row => log.header.cols,
            Axis::Col => log.header.rows,
        };
        cells as f64 * log.header.cell_size
    }

    /// `Some(true)` forward, `Some(false)` backward, `None` no crossing.
    fn crossing(&self, a: &TrajectoryRecord, b: &TrajectoryRecord, wrap_rows: Option<usize>) -> Option<bool> {
        let (from, to, lateral) = match self.axis {
            Axis::Row => (a.row, b.row, a.col.abs_diff(b.col)),
            Axis::Col => (a.col, b.col, a.row.abs_diff(b.row)),
        };
        if lateral > 1 {
            return None;
        }
        if from.abs_diff(to) > 1 {
            // the only legal long jump is across the wrap seam, which is section row 0
            let rows = wrap_rows?;
            if self.axis != Axis::Row || self.index != 0 {
                return None;
            }
            return match (from, to) {
                (f, 0) if f == rows - 1 => Some(true),
                (0, t) if t == rows - 1 => Some(false),
                _ => None,
            };
        }
        let s = self.index;
        if from < s && to >= s {
            Some(true)
        } else if from >= s && to < s {
            Some(false)
        } else {
            None
        }
    }
}

fn wrap_rows(log: &TrajectoryLog) -> Option<usize> {
    log.header.wrap.then_some(log.header.rows)
}

fn step_len(a: &TrajectoryRecord, b: &TrajectoryRecord, wrap: Option<usize>) -> Option<f64> {
    let mut dr = a.row.abs_diff(b.row);
    if let Some(rows) = wrap {
        dr = dr.min(rows - dr);
    }
    match (dr, a.col.abs_diff(b.col)) {
        (0, 0) => Some(0.0),
        (0, 1) | (1, 0) => Some(STRAIGHT_STEP),
        (1, 1) => Some(DIAGONAL_STEP),
        _ => None,
    }
}

/// Per-window crossing counts of one section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowCount {
    pub window_start: u64,
    /// North-to-south for row sections, west-to-east for column sections.
    pub forward: usize,
    pub backward: usize,
}

/// Agents whose consecutive positions straddle `section`, bucketed by
/// `window` steps (a crossing belongs to the window of its later record).
pub fn count_flows(log: &TrajectoryLog, section: Section, window: u64) -> Result<Vec<FlowCount>> {
    if window == 0 {
        return Err(Error::Domain("window must be at least one step".into()));
    }
    let Some((first, last)) = log.step_range() else { return Ok(Vec::new()) };
    let n_windows = ((last - first) / window + 1) as usize;
    let mut out: Vec<FlowCount> = (0..n_windows)
        .map(|k| FlowCount { window_start: first + k as u64 * window, forward: 0, backward: 0 })
        .collect();
    let wrap = wrap_rows(log);
    for recs in log.by_agent().values() {
        for seg in segments(recs) {
            for w in seg.windows(2) {
                if let Some(forward) = section.crossing(&w[0], &w[1], wrap) {
                    let slot = &mut out[((w[1].step - first) / window) as usize];
                    if forward {
                        slot.forward += 1;
                    } else {
                        slot.backward += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySnapshot {
    pub step: u64,
    pub density: f64,
}

/// Pedestrians in `region` per m², every `interval` steps from the first logged step.
pub fn density_snapshots(log: &TrajectoryLog, region: Rect, interval: u64) -> Result<Vec<DensitySnapshot>> {
    if interval == 0 {
        return Err(Error::Domain("sample interval must be at least one step".into()));
    }
    let Some((first, last)) = log.step_range() else { return Ok(Vec::new()) };
    let area = region.cell_count() as f64 * log.header.cell_size * log.header.cell_size;
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for r in &log.records {
        if (r.step - first) % interval == 0 && region.contains(r.cell()) {
            *counts.entry(r.step).or_default() += 1;
        }
    }
    Ok((first..=last)
        .step_by(interval as usize)
        .map(|step| DensitySnapshot { step, density: counts.get(&step).copied().unwrap_or(0) as f64 / area })
        .collect())
}

/// Density, mean walking speed and flow per window of `window` steps over `region`.
///
/// Movement between two consecutive records of a pass is credited to the
/// window (and region) of the later record. Windows without any measurable
/// movement sample are omitted.
pub fn fundamental_diagram(
    log: &TrajectoryLog,
    region: Rect,
    section: Option<Section>,
    window: u64,
) -> Result<Vec<FundamentalDiagramPoint>> {
    if window == 0 {
        return Err(Error::Domain("window must be at least one step".into()));
    }
    if region.row1 >= log.header.rows || region.col1 >= log.header.cols {
        return Err(Error::Domain("region outside the grid".into()));
    }
    let Some((first, last)) = log.step_range() else { return Ok(Vec::new()) };
    let n_windows = ((last - first) / window + 1) as usize;
    let dt = log.header.frame_interval;
    let area = region.cell_count() as f64 * log.header.cell_size * log.header.cell_size;
    let wrap = wrap_rows(log);

    let mut occupancy = vec![0usize; n_windows];
    for r in &log.records {
        if region.contains(r.cell()) {
            occupancy[((r.step - first) / window) as usize] += 1;
        }
    }

    // per window: agent -> (path, seconds)
    let mut motion: Vec<BTreeMap<AgentId, (f64, f64)>> = vec![BTreeMap::new(); n_windows];
    for (agent, recs) in log.by_agent() {
        for seg in segments(&recs) {
            for w in seg.windows(2) {
                if !region.contains(w[1].cell()) {
                    continue;
                }
                let len = step_len(&w[0], &w[1], wrap).ok_or_else(|| Error::Data {
                    step: w[1].step,
                    message: format!("agent {agent} jumps between non-adjacent cells"),
                })?;
                let k = ((w[1].step - first) / window) as usize;
                let e = motion[k].entry(agent).or_insert((0.0, 0.0));
                e.0 += len;
                e.1 += (w[1].step - w[0].step) as f64 * dt;
            }
        }
    }

    let crossings = match section {
        Some(s) => Some(count_flows(log, s, window)?),
        None => None,
    };

    let mut points = Vec::new();
    for k in 0..n_windows {
        let speeds: Vec<f64> = motion[k].values().filter(|(_, t)| *t > 0.0).map(|(p, t)| p / t).collect();
        if occupancy[k] == 0 || speeds.is_empty() {
            continue;
        }
        let start = first + k as u64 * window;
        let steps_in_window = (last.min(start + window - 1) - start + 1) as f64;
        let density = occupancy[k] as f64 / steps_in_window / area;
        let velocity = speeds.iter().sum::<f64>() / speeds.len() as f64;
        let section_flow = match (&crossings, section) {
            (Some(c), Some(s)) => {
                let n = c[k].forward + c[k].backward;
                Some(n as f64 / (s.width_m(log) * steps_in_window * dt))
            }
            _ => None,
        };
        points.push(FundamentalDiagramPoint {
            window_start: start,
            density,
            velocity,
            flow: density * velocity,
            section_flow,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LosGrade {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl fmt::Display for LosGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Level-of-service bands by flow rate (ped/min/m). The last grade is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosTable {
    pub bands: Vec<(LosGrade, f64)>,
    pub last: LosGrade,
}

impl Default for LosTable {
    /// Platoon-adjusted walkway bands of 0.5 / 3 / 6 / 11 / 18 ped/min/ft
    /// converted to ped/min/m. Placeholders; replace with the reference table
    /// when it is at hand.
    fn default() -> Self {
        const PER_FOOT_TO_PER_METRE: f64 = 1.0 / 0.3048;
        LosTable {
            bands: [
                (LosGrade::A, 0.5),
                (LosGrade::B, 3.0),
                (LosGrade::C, 6.0),
                (LosGrade::D, 11.0),
                (LosGrade::E, 18.0),
            ]
            .into_iter()
            .map(|(g, ft)| (g, ft * PER_FOOT_TO_PER_METRE))
            .collect(),
            last: LosGrade::F,
        }
    }
}

impl LosTable {
    pub fn new(bands: Vec<(LosGrade, f64)>, last: LosGrade) -> Result<Self> {
        if bands.windows(2).any(|w| !(w[0].1 < w[1].1)) {
            return Err(Error::Config("LOS bounds must be strictly increasing".into()));
        }
        Ok(LosTable { bands, last })
    }
}

/// First grade whose upper bound exceeds `flow` (ped/min/m).
pub fn level_of_service(flow: f64, table: &LosTable) -> LosGrade {
    table.bands.iter().find(|(_, upper)| flow < *upper).map_or(table.last, |(g, _)| *g)
}

/// Converts ped/(m·s) to ped/(min·m).
pub fn per_minute(flow_per_second: f64) -> f64 {
    flow_per_second * 60.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::trajectory::{LogHeader, RecordAction};
    use approx::assert_abs_diff_eq;

    fn rec(step: u64, agent: AgentId, row: usize, col: usize) -> TrajectoryRecord {
        TrajectoryRecord { step, agent_id: agent, group_id: None, row, col, action: RecordAction::Unknown }
    }

    fn log(rows: usize, cols: usize, records: Vec<TrajectoryRecord>) -> TrajectoryLog {
        let mut l = TrajectoryLog { header: LogHeader::new(rows, cols), records };
        l.normalize().unwrap();
        l
    }

    #[test]
    fn counting() {
        let empty = log(10, 3, vec![rec(0, 0, 1, 1), rec(1, 0, 2, 1)]);
        let c = count_flows(&empty, Section::row(5), 60).unwrap();
        assert_eq!((c[0].forward, c[0].backward), (0, 0));

        let one = log(10, 3, (0..10).map(|s| rec(s, 0, s as usize, 1)).collect());
        let c = count_flows(&one, Section::row(5), 60).unwrap();
        assert_eq!((c[0].forward, c[0].backward), (1, 0));

        // 10 agents walk south and 10 walk north across row 5
        let mut recs = Vec::new();
        for a in 0..10u32 {
            for s in 0..10u64 {
                recs.push(rec(s, a, s as usize, (a % 3) as usize));
                recs.push(rec(s, 100 + a, 9 - s as usize, (a % 3) as usize));
            }
        }
        let c = count_flows(&log(10, 3, recs), Section::row(5), 60).unwrap();
        assert_eq!((c[0].forward, c[0].backward), (10, 10));
    }

    #[test]
    fn snapshots() {
        let region = Rect::new(0, 0, 31, 31);
        let l = log(32, 32, (0..36).map(|a| rec(0, a, a as usize % 32, a as usize / 32)).collect());
        let d = density_snapshots(&l, region, 180).unwrap();
        assert_abs_diff_eq!(d[0].density, 36.0 / 163.84, epsilon = 1e-12);
        assert_abs_diff_eq!(d[0].density, 0.22, epsilon = 0.005);
        let away = density_snapshots(&l, Rect::new(20, 20, 21, 21), 1).unwrap();
        assert_eq!(away[0].density, 0.0);
        let constant = log(5, 5, (0..20).map(|s| rec(s, 1, 2, 2)).collect());
        let snaps = density_snapshots(&constant, Rect::new(0, 0, 4, 4), 3).unwrap();
        assert!(snaps.windows(2).all(|w| w[0].density == w[1].density));
    }

    #[test]
    fn diagram_single_walker() {
        let l = log(50, 6, (0..30).map(|s| rec(s, 0, 40 - s as usize, 2)).collect());
        let pts = fundamental_diagram(&l, Rect::new(0, 0, 49, 5), Some(Section::row(25)), 10).unwrap();
        assert_eq!(pts.len(), 3);
        for p in &pts {
            assert_abs_diff_eq!(p.density, 1.0 / 48.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.velocity, 0.4 / 0.33, epsilon = 1e-12);
            assert_eq!(p.flow, p.density * p.velocity);
        }
        let crossed: f64 = pts.iter().map(|p| p.section_flow.unwrap()).sum();
        assert!(crossed > 0.0);
    }

    #[test]
    fn diagram_omits_empty_windows() {
        let l = log(10, 3, vec![rec(0, 0, 1, 1), rec(1, 0, 2, 1), rec(25, 0, 5, 1), rec(26, 0, 5, 1)]);
        let pts = fundamental_diagram(&l, Rect::new(0, 0, 9, 2), None, 10).unwrap();
        assert_eq!(pts.iter().map(|p| p.window_start).collect::<Vec<_>>(), vec![0, 20]);
    }

    #[test]
    fn los_grades() {
        let t = LosTable::default();
        assert_eq!(level_of_service(7.78, &t), LosGrade::B);
        assert_eq!(level_of_service(0.0, &t), LosGrade::A);
        assert_eq!(level_of_service(1e6, &t), LosGrade::F);
        assert!(LosTable::new(vec![(LosGrade::A, 2.0), (LosGrade::B, 1.0)], LosGrade::C).is_err());
    }
}
