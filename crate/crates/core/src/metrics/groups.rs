//! Group-level measures over trajectory logs: dispersion series, spatial
//! arrangement, relative positions and per-cohort speeds.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::kinematics::{agent_progress_speed, agent_speed};
use super::trajectory::{TrajectoryLog, TrajectoryRecord};
use crate::environment::{CellIndex, Point};
use crate::population::{dispersion_area, dispersion_centroid, group_centroid, AgentId, GroupId};
use crate::{Error, Result};

/// Direct members of every group found in the log.
pub fn group_members(log: &TrajectoryLog) -> BTreeMap<GroupId, Vec<AgentId>> {
    let mut out: BTreeMap<GroupId, Vec<AgentId>> = BTreeMap::new();
    for (agent, group) in log.agent_groups() {
        if let Some(g) = group {
            out.entry(g).or_default().push(agent);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionSample {
    pub step: u64,
    pub centroid_m: f64,
    pub area_cells: f64,
    pub area_m2: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DispersionSeries {
    pub samples: Vec<DispersionSample>,
    /// Sampled steps where some member was missing.
    pub skipped: Vec<u64>,
}

fn positions_at(index: &BTreeMap<(u64, AgentId), CellIndex>, step: u64, members: &[AgentId]) -> Option<Vec<CellIndex>> {
    members.iter().map(|a| index.get(&(step, *a)).copied()).collect()
}

fn position_index(log: &TrajectoryLog, members: &[AgentId]) -> BTreeMap<(u64, AgentId), CellIndex> {
    log.records.iter().filter(|r| members.contains(&r.agent_id)).map(|r| ((r.step, r.agent_id), r.cell())).collect()
}

/// Both dispersion measures of `members` every `sample_interval` steps,
/// starting at the first step any member appears.
pub fn dispersion_series(log: &TrajectoryLog, members: &[AgentId], sample_interval: u64) -> Result<DispersionSeries> {
    if sample_interval == 0 {
        return Err(Error::Domain("sample interval must be at least one step".into()));
    }
    if members.is_empty() {
        return Err(Error::Domain("dispersion of an empty group".into()));
    }
    let index = position_index(log, members);
    let mut series = DispersionSeries::default();
    let (Some(first), Some(last)) = (index.keys().map(|k| k.0).min(), index.keys().map(|k| k.0).max()) else {
        return Ok(series);
    };
    let cell_area = log.header.cell_size * log.header.cell_size;
    for step in (first..=last).step_by(sample_interval as usize) {
        match positions_at(&index, step, members) {
            Some(cells) => {
                let points: Vec<Point> = cells.iter().map(|c| scaled_center(*c, log.header.cell_size)).collect();
                let area = dispersion_area(&cells)?;
                series.samples.push(DispersionSample {
                    step,
                    centroid_m: dispersion_centroid(&points)?,
                    area_cells: area,
                    area_m2: area * cell_area,
                });
            }
            None => series.skipped.push(step),
        }
    }
    Ok(series)
}

fn scaled_center(c: CellIndex, cell_size: f64) -> Point {
    Point::new((c.col as f64 + 0.5) * cell_size, (c.row as f64 + 0.5) * cell_size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrangementPattern {
    LineAbreast,
    RiverLike,
    VLike,
    Rhombus,
    SplitDyads,
    Dispersed,
}

impl ArrangementPattern {
    pub const ALL: [ArrangementPattern; 6] = [
        ArrangementPattern::LineAbreast,
        ArrangementPattern::RiverLike,
        ArrangementPattern::VLike,
        ArrangementPattern::Rhombus,
        ArrangementPattern::SplitDyads,
        ArrangementPattern::Dispersed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArrangementPattern::LineAbreast => "line_abreast",
            ArrangementPattern::RiverLike => "river_like",
            ArrangementPattern::VLike => "v_like",
            ArrangementPattern::Rhombus => "rhombus",
            ArrangementPattern::SplitDyads => "split_dyads",
            ArrangementPattern::Dispersed => "dispersed",
        }
    }
}

impl fmt::Display for ArrangementPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrangementThresholds {
    /// Alignment tolerance (m).
    pub tolerance: f64,
}

impl Default for ArrangementThresholds {
    fn default() -> Self {
        ArrangementThresholds { tolerance: 0.25 }
    }
}

/// Offsets of `positions` from their centroid, as (longitudinal, lateral)
/// along the unit `heading` and its left normal.
pub fn project(positions: &[Point], heading: Point) -> Result<Vec<(f64, f64)>> {
    let n = heading.norm();
    if !(n > 0.0) {
        return Err(Error::Domain("zero heading".into()));
    }
    let h = Point::new(heading.x / n, heading.y / n);
    let c = group_centroid(positions)?;
    Ok(positions
        .iter()
        .map(|p| {
            let d = *p - c;
            (d.dot(h), h.x * d.y - h.y * d.x)
        })
        .collect())
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}

fn is_v(offsets: &[(f64, f64)], tol: f64) -> bool {
    let mut by_lat = offsets.to_vec();
    by_lat.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (left, right) = (by_lat[0], by_lat[by_lat.len() - 1]);
    if (left.0 - right.0).abs() > tol {
        return false;
    }
    let flank = (left.0 + right.0) / 2.0;
    let middle = &by_lat[1..by_lat.len() - 1];
    middle.iter().all(|m| m.0 - flank > tol) || middle.iter().all(|m| flank - m.0 > tol)
}

fn is_rhombus(offsets: &[(f64, f64)], tol: f64) -> bool {
    let mut by_long = offsets.to_vec();
    by_long.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (trailer, m1, m2, leader) = (by_long[0], by_long[1], by_long[2], by_long[3]);
    (m1.0 - m2.0).abs() <= tol
        && (m1.1 - m2.1).abs() > tol
        && leader.0 - m1.0.max(m2.0) > tol
        && m1.0.min(m2.0) - trailer.0 > tol
}

fn is_split_dyads(points: &[Point]) -> bool {
    const PAIRINGS: [[(usize, usize); 2]; 3] = [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]];
    PAIRINGS.iter().any(|pairing| {
        let mids: Vec<Point> = pairing
            .iter()
            .map(|&(a, b)| Point::new((points[a].x + points[b].x) / 2.0, (points[a].y + points[b].y) / 2.0))
            .collect();
        let inter = mids[0].distance(mids[1]);
        pairing.iter().zip(&mids).all(|(&(a, _), m)| points[a].distance(*m) < inter / 2.0)
    })
}

/// Formation of 2–5 members walking along `heading`; anything not matched is dispersed.
pub fn classify_arrangement(
    positions: &[Point],
    heading: Point,
    thresholds: &ArrangementThresholds,
) -> ArrangementPattern {
    let n = positions.len();
    if !(2..=5).contains(&n) {
        return ArrangementPattern::Dispersed;
    }
    let Ok(offsets) = project(positions, heading) else { return ArrangementPattern::Dispersed };
    let tol = thresholds.tolerance;
    let long = spread(offsets.iter().map(|o| o.0));
    let lat = spread(offsets.iter().map(|o| o.1));
    if long <= tol && lat > tol {
        return ArrangementPattern::LineAbreast;
    }
    if lat <= tol && long > tol {
        return ArrangementPattern::RiverLike;
    }
    if (3..=4).contains(&n) && is_v(&offsets, tol) {
        return ArrangementPattern::VLike;
    }
    if n == 4 && is_rhombus(&offsets, tol) {
        return ArrangementPattern::Rhombus;
    }
    if n == 4 && is_split_dyads(positions) {
        return ArrangementPattern::SplitDyads;
    }
    ArrangementPattern::Dispersed
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePosition {
    pub group: GroupId,
    pub agent: AgentId,
    pub step: u64,
    pub longitudinal: f64,
    pub lateral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrangementSample {
    pub group: GroupId,
    pub step: u64,
    pub pattern: ArrangementPattern,
}

/// Walks each group's samples in pairs: positions at sample `k`, heading
/// from the centroid displacement between `k` and `k + 1`.
fn for_each_headed_sample<F>(
    log: &TrajectoryLog,
    groups: &BTreeMap<GroupId, Vec<AgentId>>,
    sample_interval: u64,
    mut f: F,
) -> Result<()>
where
    F: FnMut(GroupId, u64, &[AgentId], &[Point], Point),
{
    if sample_interval == 0 {
        return Err(Error::Domain("sample interval must be at least one step".into()));
    }
    let size = log.header.cell_size;
    for (&group, members) in groups {
        let index = position_index(log, members);
        let (Some(first), Some(last)) = (index.keys().map(|k| k.0).min(), index.keys().map(|k| k.0).max()) else {
            continue;
        };
        let mut step = first;
        while step + sample_interval <= last {
            let next = step + sample_interval;
            if let (Some(now), Some(later)) = (positions_at(&index, step, members), positions_at(&index, next, members))
            {
                let now: Vec<Point> = now.iter().map(|c| scaled_center(*c, size)).collect();
                let later: Vec<Point> = later.iter().map(|c| scaled_center(*c, size)).collect();
                let heading = group_centroid(&later)? - group_centroid(&now)?;
                // a jump longer than the sample can cover is a seam crossing or a re-entry
                let plausible = heading.norm() <= 2.0 * size * sample_interval as f64;
                if heading.norm() > 1e-12 && plausible {
                    f(group, step, members, &now, heading);
                }
            }
            step = next;
        }
    }
    Ok(())
}

/// Member offsets from the group centroid in the group's frame of motion.
pub fn relative_position_map(
    log: &TrajectoryLog,
    groups: &BTreeMap<GroupId, Vec<AgentId>>,
    sample_interval: u64,
) -> Result<Vec<RelativePosition>> {
    let mut out = Vec::new();
    for_each_headed_sample(log, groups, sample_interval, |group, step, members, points, heading| {
        if let Ok(offsets) = project(points, heading) {
            for (agent, (longitudinal, lateral)) in members.iter().zip(offsets) {
                out.push(RelativePosition { group, agent: *agent, step, longitudinal, lateral });
            }
        }
    })?;
    Ok(out)
}

/// Arrangement of every group of 2–5 members at each headed sample.
pub fn arrangement_series(
    log: &TrajectoryLog,
    groups: &BTreeMap<GroupId, Vec<AgentId>>,
    sample_interval: u64,
    thresholds: &ArrangementThresholds,
) -> Result<Vec<ArrangementSample>> {
    let mut out = Vec::new();
    for_each_headed_sample(log, groups, sample_interval, |group, step, _, points, heading| {
        if (2..=5).contains(&points.len()) {
            out.push(ArrangementSample { group, step, pattern: classify_arrangement(points, heading, thresholds) });
        }
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortKey {
    /// "1" for individuals, otherwise the size of the agent's direct group.
    #[default]
    GroupSize,
    /// "individual" or "group".
    Membership,
    /// The group id, individuals under "individual".
    Group,
}

impl std::str::FromStr for CohortKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group-size" | "group_size" | "size" => Ok(CohortKey::GroupSize),
            "membership" => Ok(CohortKey::Membership),
            "group" => Ok(CohortKey::Group),
            other => Err(Error::Config(format!("unknown cohort key `{other}` (group-size, membership, group)"))),
        }
    }
}

/// Cohort label of an agent.
pub fn cohort_label(key: CohortKey, group: Option<GroupId>, sizes: &BTreeMap<GroupId, usize>) -> String {
    match (key, group) {
        (CohortKey::GroupSize, None) => "1".into(),
        (CohortKey::GroupSize, Some(g)) => sizes.get(&g).copied().unwrap_or(1).to_string(),
        (CohortKey::Membership, None) | (CohortKey::Group, None) => "individual".into(),
        (CohortKey::Membership, Some(_)) => "group".into(),
        (CohortKey::Group, Some(g)) => g.to_string(),
    }
}

/// Per-agent walking speeds collected into cohorts. Agents that never span
/// two consecutive records are left out.
pub fn cohort_speeds(log: &TrajectoryLog, key: CohortKey) -> Result<BTreeMap<String, Vec<f64>>> {
    let sizes = log.group_sizes();
    let groups = log.agent_groups();
    let wrap = log.header.wrap.then_some(log.header.rows);
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (agent, recs) in log.by_agent() {
        if let Some(v) = agent_speed(&recs, log.header.frame_interval, wrap)? {
            out.entry(cohort_label(key, groups[&agent], &sizes)).or_default().push(v);
        }
    }
    Ok(out)
}

/// Per-agent progress speeds (see [`agent_progress_speed`]) collected into cohorts.
pub fn cohort_progress(log: &TrajectoryLog, key: CohortKey) -> Result<BTreeMap<String, Vec<f64>>> {
    let sizes = log.group_sizes();
    let groups = log.agent_groups();
    let wrap = log.header.wrap.then_some(log.header.rows);
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (agent, recs) in log.by_agent() {
        if let Some(v) = agent_progress_speed(&recs, log.header.frame_interval, wrap)? {
            out.entry(cohort_label(key, groups[&agent], &sizes)).or_default().push(v);
        }
    }
    Ok(out)
}

/// Convenience for callers holding one agent's records.
pub fn speed_of(records: &[TrajectoryRecord], log: &TrajectoryLog) -> Result<Option<f64>> {
    agent_speed(records, log.header.frame_interval, log.header.wrap.then_some(log.header.rows))
}
