//! Pedestrians, groups, spawning and group geometry.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{CellIndex, Grid, Point};
use crate::{Error, Result, CELL_AREA};

pub type AgentId = u32;
pub type GroupId = u32;
pub type DestinationId = u32;

/// Moves to the eight Moore neighbours plus standing still.
///
/// The declaration order is the fixed sampling order used by
/// [`crate::behavior::choose_action`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
    X,
}

impl Action {
    pub const ALL: [Action; 9] =
        [Action::N, Action::NE, Action::E, Action::SE, Action::S, Action::SW, Action::W, Action::NW, Action::X];

    /// `(row, col)` displacement.
    pub const fn offset(self) -> (i32, i32) {
        match self {
            Action::N => (-1, 0),
            Action::NE => (-1, 1),
            Action::E => (0, 1),
            Action::SE => (1, 1),
            Action::S => (1, 0),
            Action::SW => (1, -1),
            Action::W => (0, -1),
            Action::NW => (-1, -1),
            Action::X => (0, 0),
        }
    }

    pub const fn is_diagonal(self) -> bool {
        matches!(self, Action::NE | Action::SE | Action::SW | Action::NW)
    }

    pub const fn index(self) -> usize {
        self as usize
    }

    /// Angle between two moves in multiples of 45° (0..=4); `None` if either is `X`.
    pub fn turn_between(self, other: Action) -> Option<u8> {
        if self == Action::X || other == Action::X {
            return None;
        }
        let d = (self.index() as i32 - other.index() as i32).rem_euclid(8);
        Some(d.min(8 - d) as u8)
    }

    /// The move that displaces by `(dr, dc)`, each in `-1..=1`.
    pub fn from_offset(dr: i32, dc: i32) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.offset() == (dr, dc))
    }

    pub const fn symbol(self) -> &'static str {
        match self {
            Action::N => "N",
            Action::NE => "NE",
            Action::E => "E",
            Action::SE => "SE",
            Action::S => "S",
            Action::SW => "SW",
            Action::W => "W",
            Action::NW => "NW",
            Action::X => "X",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.symbol() == s)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pedestrian {
    pub id: AgentId,
    /// Group directly containing the pedestrian; `None` for individuals.
    pub group_id: Option<GroupId>,
    pub position: CellIndex,
    pub prev_direction: Option<Action>,
    pub destination: DestinationId,
    /// Start marker the pedestrian came from (re-entry point on a torus).
    pub origin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Simple,
    Structured,
}

/// One node of the group forest.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Group {
    pub id: GroupId,
    pub parent: Option<GroupId>,
    pub subgroups: Vec<GroupId>,
    pub members: Vec<AgentId>,
}

impl Group {
    pub fn kind(&self) -> GroupKind {
        if self.subgroups.is_empty() {
            GroupKind::Simple
        } else {
            GroupKind::Structured
        }
    }
}

/// Groups keyed by id; containment is a forest and every pedestrian is a
/// direct member of at most one group.
#[derive(Debug, Clone, Default)]
pub struct GroupForest {
    groups: BTreeMap<GroupId, Group>,
    member_of: HashMap<AgentId, GroupId>,
}

impl GroupForest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a forest from flat nodes, checking parents, cycles and membership.
    pub fn from_groups<I: IntoIterator<Item = Group>>(groups: I) -> Result<Self> {
        let mut forest = GroupForest::new();
        let mut pending: Vec<Group> = groups.into_iter().collect();
        for g in &mut pending {
            g.subgroups.clear();
        }
        // insert parents before children
        let mut progressed = true;
        while !pending.is_empty() && progressed {
            progressed = false;
            let mut rest = Vec::new();
            for g in pending {
                match g.parent {
                    Some(p) if !forest.groups.contains_key(&p) => rest.push(g),
                    _ => {
                        forest.insert(g)?;
                        progressed = true;
                    }
                }
            }
            pending = rest;
        }
        if let Some(g) = pending.first() {
            return Err(Error::Structure(format!("group {} has a missing or cyclic parent {:?}", g.id, g.parent)));
        }
        Ok(forest)
    }

    /// Adds a group under its (existing) parent.
    pub fn insert(&mut self, group: Group) -> Result<()> {
        if self.groups.contains_key(&group.id) {
            return Err(Error::Structure(format!("duplicate group id {}", group.id)));
        }
        if let Some(p) = group.parent {
            if !self.groups.contains_key(&p) {
                return Err(Error::Structure(format!("group {} references unknown parent {p}", group.id)));
            }
        }
        if !group.subgroups.is_empty() {
            return Err(Error::Structure("subgroups are attached through their own parent field".into()));
        }
        for &m in &group.members {
            if let Some(other) = self.member_of.get(&m) {
                return Err(Error::Structure(format!("pedestrian {m} listed in groups {other} and {}", group.id)));
            }
        }
        for &m in &group.members {
            self.member_of.insert(m, group.id);
        }
        if let Some(p) = group.parent {
            self.groups.get_mut(&p).expect("checked above").subgroups.push(group.id);
        }
        self.groups.insert(group.id, group);
        Ok(())
    }

    /// Adds `agent` as a direct member of `group`.
    pub fn add_member(&mut self, group: GroupId, agent: AgentId) -> Result<()> {
        if let Some(other) = self.member_of.get(&agent) {
            return Err(Error::Structure(format!("pedestrian {agent} already in group {other}")));
        }
        let g = self.groups.get_mut(&group).ok_or_else(|| Error::Structure(format!("unknown group {group}")))?;
        g.members.push(agent);
        self.member_of.insert(agent, group);
        Ok(())
    }

    pub fn get(&self, id: GroupId) -> Option<&Group> {
        self.groups.get(&id)
    }

    pub fn groups(&self) -> impl Iterator<Item = &Group> {
        self.groups.values()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn next_id(&self) -> GroupId {
        self.groups.keys().next_back().map_or(0, |&k| k + 1)
    }

    pub fn group_of(&self, agent: AgentId) -> Option<GroupId> {
        self.member_of.get(&agent).copied()
    }

    /// Root of the containment chain starting at `group`.
    pub fn root(&self, mut group: GroupId) -> GroupId {
        while let Some(p) = self.groups.get(&group).and_then(|g| g.parent) {
            group = p;
        }
        group
    }

    /// Every pedestrian in `group` and its subgroups, depth first.
    pub fn all_members(&self, group: GroupId) -> Vec<AgentId> {
        let mut out = Vec::new();
        let mut stack = vec![group];
        while let Some(g) = stack.pop() {
            if let Some(node) = self.groups.get(&g) {
                out.extend_from_slice(&node.members);
                stack.extend(node.subgroups.iter().rev());
            }
        }
        out
    }
}

/// `(direct, largest)` group of `agent`: the group listing it as a member and
/// the root above that group. Both `None` for individuals.
pub fn resolve_groups(agent: AgentId, forest: &GroupForest) -> Result<(Option<GroupId>, Option<GroupId>)> {
    let mut listed = forest.groups().filter(|g| g.members.contains(&agent)).map(|g| g.id);
    let direct = listed.next();
    if let Some(second) = listed.next() {
        return Err(Error::Structure(format!(
            "pedestrian {agent} listed in groups {} and {second}",
            direct.unwrap_or_default()
        )));
    }
    Ok((direct, direct.map(|g| forest.root(g))))
}

fn non_empty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        Err(Error::Domain(format!("{what} of an empty group")))
    } else {
        Ok(())
    }
}

/// Arithmetic mean of member positions.
pub fn group_centroid(positions: &[Point]) -> Result<Point> {
    non_empty(positions, "centroid")?;
    let n = positions.len() as f64;
    let (sx, sy) = positions.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
    Ok(Point::new(sx / n, sy / n))
}

/// Centroid method: mean Euclidean distance of the members from their centroid (m).
pub fn dispersion_centroid(positions: &[Point]) -> Result<f64> {
    let c = group_centroid(positions)?;
    Ok(positions.iter().map(|p| p.distance(c)).sum::<f64>() / positions.len() as f64)
}

/// Area method: lattice cells covered by the convex hull of member cells,
/// divided by the member count (cells per member).
pub fn dispersion_area(positions: &[CellIndex]) -> Result<f64> {
    non_empty(positions, "area dispersion")?;
    Ok(hull_cell_count(positions) as f64 / positions.len() as f64)
}

/// [`dispersion_area`] converted to m² per member.
pub fn dispersion_area_m2(positions: &[CellIndex]) -> Result<f64> {
    Ok(dispersion_area(positions)? * CELL_AREA)
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull vertices (counter-clockwise, collinear points dropped).
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Number of cell centres inside or on the convex hull of the given cells.
///
/// Uses Pick's theorem on the integer hull: `interior + boundary = A + B/2 + 1`.
/// Degenerate hulls count the lattice points on the point or segment.
pub fn hull_cell_count(cells: &[CellIndex]) -> usize {
    let pts: Vec<(i64, i64)> = cells.iter().map(|c| (c.col as i64, c.row as i64)).collect();
    let hull = convex_hull(&pts);
    match hull.len() {
        0 => 0,
        1 => 1,
        2 => (gcd(hull[1].0 - hull[0].0, hull[1].1 - hull[0].1) + 1) as usize,
        n => {
            let mut twice_area = 0i64;
            let mut boundary = 0i64;
            for i in 0..n {
                let a = hull[i];
                let b = hull[(i + 1) % n];
                twice_area += a.0 * b.1 - b.0 * a.1;
                boundary += gcd(b.0 - a.0, b.1 - a.1);
            }
            // I + B = (2A + B + 2) / 2
            ((twice_area.abs() + boundary + 2) / 2) as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    #[default]
    Simple,
    Structured,
}

/// One row of a group composition: `count` groups of `size` direct members.
///
/// Size-1 simple rows are individuals. Structured rows need a `label` so
/// other rows can name them as `parent`; their `size` is the number of direct
/// members (possibly zero).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRow {
    #[serde(default)]
    pub size: usize,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default)]
    pub kind: RowKind,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub parent: Option<String>,
}

fn one() -> usize {
    1
}

impl GroupRow {
    pub fn simple(size: usize, count: usize) -> Self {
        GroupRow { size, count, kind: RowKind::Simple, label: None, parent: None }
    }
}

/// Share of pedestrians belonging to simple groups of each size; the remainder walk alone.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupMix {
    pub shares: BTreeMap<usize, f64>,
}

impl GroupMix {
    pub fn new<I: IntoIterator<Item = (usize, f64)>>(shares: I) -> Result<Self> {
        let mix = GroupMix { shares: shares.into_iter().collect() };
        mix.validate()?;
        Ok(mix)
    }

    /// 28% couples, 24% triples, 12% groups of six.
    pub fn benchmark() -> Self {
        GroupMix { shares: BTreeMap::from([(2, 0.28), (3, 0.24), (6, 0.12)]) }
    }

    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for (&size, &share) in &self.shares {
            if size < 2 {
                return Err(Error::Range(format!("group_mix size {size} must be at least 2")));
            }
            if !(0.0..=1.0).contains(&share) {
                return Err(Error::Range(format!("group_mix share {share} for size {size} not in [0, 1]")));
            }
            total += share;
        }
        if total > 1.0 + 1e-9 {
            return Err(Error::Range(format!("group_mix shares sum to {total} > 1")));
        }
        Ok(())
    }

    fn individual_share(&self) -> f64 {
        (1.0 - self.shares.values().sum::<f64>()).max(0.0)
    }

    /// Deterministic composition of `pedestrians` members: groups per size are
    /// rounded from the target share; whatever is left walks alone.
    pub fn compose(&self, pedestrians: usize) -> Vec<GroupRow> {
        let mut counts: BTreeMap<usize, usize> = self
            .shares
            .iter()
            .map(|(&s, &share)| (s, (pedestrians as f64 * share / s as f64).round() as usize))
            .collect();
        let members = |c: &BTreeMap<usize, usize>| c.iter().map(|(s, n)| s * n).sum::<usize>();
        while members(&counts) > pedestrians {
            let largest = counts.iter().rev().find(|(_, &n)| n > 0).map(|(&s, _)| s).expect("non-empty");
            *counts.get_mut(&largest).unwrap() -= 1;
        }
        let singles = pedestrians - members(&counts);
        let mut rows: Vec<GroupRow> =
            counts.into_iter().filter(|&(_, n)| n > 0).map(|(s, n)| GroupRow::simple(s, n)).collect();
        if singles > 0 {
            rows.push(GroupRow::simple(1, singles));
        }
        rows
    }
}

/// Running member tally used to draw group sizes in frequency mode so that
/// realised shares track the mix closely.
#[derive(Debug, Clone, Default)]
pub struct MixQuota {
    spawned: BTreeMap<usize, usize>,
    total: usize,
}

impl MixQuota {
    /// Picks the size whose addition minimises the squared deviation of
    /// realised member counts from their targets.
    pub fn next_size(&mut self, mix: &GroupMix) -> usize {
        let mut targets: Vec<(usize, f64)> = vec![(1, mix.individual_share())];
        targets.extend(mix.shares.iter().filter(|(_, &sh)| sh > 0.0).map(|(&s, &sh)| (s, sh)));
        let mut best = (f64::INFINITY, 1);
        for &(candidate, _) in &targets {
            let total = (self.total + candidate) as f64;
            let err: f64 = targets
                .iter()
                .map(|&(s, share)| {
                    let have = self.spawned.get(&s).copied().unwrap_or(0) + if s == candidate { s } else { 0 };
                    (have as f64 - share * total).powi(2)
                })
                .sum();
            if err < best.0 - 1e-12 {
                best = (err, candidate);
            }
        }
        let size = best.1;
        *self.spawned.entry(size).or_default() += size;
        self.total += size;
        size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GenerationMode {
    /// One arrival attempt per step with probability `rate`.
    FrequencyBased { rate: f64 },
    /// The whole batch at step 0.
    EnBloc { batch: Vec<GroupRow> },
}

/// How a start area produces pedestrians.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSpec {
    pub mode: GenerationMode,
    pub group_mix: GroupMix,
    pub destination: DestinationId,
    /// Cells where the initial en-bloc batch may be placed; the start area itself when empty.
    pub placement: Vec<CellIndex>,
}

impl GenerationSpec {
    pub fn validate(&self) -> Result<()> {
        self.group_mix.validate()?;
        match &self.mode {
            GenerationMode::FrequencyBased { rate } if !(0.0..=1.0).contains(rate) => {
                Err(Error::Range(format!("generation rate {rate} not in [0, 1]")))
            }
            GenerationMode::EnBloc { batch } => {
                let labels: Vec<&str> = batch.iter().filter_map(|r| r.label.as_deref()).collect();
                for row in batch {
                    if row.kind == RowKind::Structured && (row.label.is_none() || row.count != 1) {
                        return Err(Error::Config("structured rows need a label and count = 1".into()));
                    }
                    if row.kind == RowKind::Simple && row.size == 0 {
                        return Err(Error::Config("simple rows need size >= 1".into()));
                    }
                    if let Some(p) = &row.parent {
                        if !labels.contains(&p.as_str()) {
                            return Err(Error::Config(format!("unknown parent group label `{p}`")));
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Pedestrians that enter together: the direct members of one group, or one individual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cohort {
    pub group: Option<GroupId>,
    pub size: usize,
}

/// Registers the groups of an en-bloc batch in `forest` and returns the cohorts to place.
pub fn expand_batch(batch: &[GroupRow], forest: &mut GroupForest) -> Result<Vec<Cohort>> {
    let mut labels: HashMap<&str, GroupId> = HashMap::new();
    let mut cohorts = Vec::new();
    // structured containers first, in declaration order; their parents must precede them
    for row in batch.iter().filter(|r| r.kind == RowKind::Structured) {
        let parent = match &row.parent {
            Some(p) => Some(
                *labels
                    .get(p.as_str())
                    .ok_or_else(|| Error::Config(format!("parent `{p}` must be declared before its children")))?,
            ),
            None => None,
        };
        let id = forest.next_id();
        forest.insert(Group { id, parent, ..Group::default() })?;
        labels.insert(row.label.as_deref().unwrap_or_default(), id);
        if row.size > 0 {
            cohorts.push(Cohort { group: Some(id), size: row.size });
        }
    }
    for row in batch.iter().filter(|r| r.kind == RowKind::Simple) {
        let parent = match &row.parent {
            Some(p) => Some(*labels.get(p.as_str()).ok_or_else(|| Error::Config(format!("unknown parent `{p}`")))?),
            None => None,
        };
        for _ in 0..row.count {
            if row.size == 1 && parent.is_none() {
                cohorts.push(Cohort { group: None, size: 1 });
                continue;
            }
            let id = forest.next_id();
            forest.insert(Group { id, parent, ..Group::default() })?;
            cohorts.push(Cohort { group: Some(id), size: row.size });
        }
    }
    Ok(cohorts)
}

/// Creates the cohort for one frequency-mode arrival.
pub fn arrival_cohort(mix: &GroupMix, quota: &mut MixQuota, forest: &mut GroupForest) -> Result<Cohort> {
    let size = quota.next_size(mix);
    if size == 1 {
        return Ok(Cohort { group: None, size });
    }
    let id = forest.next_id();
    forest.insert(Group { id, ..Group::default() })?;
    Ok(Cohort { group: Some(id), size })
}

/// Picks `size` free cells from `area` for a cohort entering together.
///
/// Groups up to nine land inside one 3×3 window (pairwise Chebyshev distance
/// ≤ 2); larger groups take the free cells nearest a random anchor. Returns
/// `None` when the area cannot hold the cohort right now.
pub fn place_cluster<R: Rng + ?Sized>(
    grid: &Grid,
    area: &[CellIndex],
    size: usize,
    rng: &mut R,
) -> Option<Vec<CellIndex>> {
    let free: Vec<CellIndex> =
        area.iter().copied().filter(|&c| grid.is_walkable(c) && grid.occupants(c).is_empty()).collect();
    if free.len() < size || size == 0 {
        return if size == 0 { Some(Vec::new()) } else { None };
    }
    if size == 1 {
        return free.choose(rng).map(|&c| vec![c]);
    }
    if size <= 9 {
        // candidate windows anchored at each free cell's top-left reach
        let mut windows: Vec<Vec<CellIndex>> = Vec::new();
        let mut anchors: Vec<(usize, usize)> = free
            .iter()
            .flat_map(|c| {
                let r0 = c.row.saturating_sub(2)..=c.row;
                let c0 = c.col.saturating_sub(2)..=c.col;
                r0.flat_map(move |r| c0.clone().map(move |cc| (r, cc)))
            })
            .collect();
        anchors.sort_unstable();
        anchors.dedup();
        for (r, c) in anchors {
            let inside: Vec<CellIndex> =
                free.iter().copied().filter(|f| (r..r + 3).contains(&f.row) && (c..c + 3).contains(&f.col)).collect();
            if inside.len() >= size {
                windows.push(inside);
            }
        }
        let mut chosen = windows.choose(rng)?.clone();
        chosen.shuffle(rng);
        chosen.truncate(size);
        chosen.sort_unstable();
        return Some(chosen);
    }
    let anchor = *free.choose(rng)?;
    let mut by_distance = free;
    by_distance.sort_by_key(|c| (c.chebyshev(anchor), *c));
    by_distance.truncate(size);
    Some(by_distance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::build_grid;
    use crate::rng::{RunRng, StreamAlgorithm};
    use approx::assert_abs_diff_eq;

    fn c(row: usize, col: usize) -> CellIndex {
        CellIndex::new(row, col)
    }

    fn forest_chain() -> GroupForest {
        GroupForest::from_groups([
            Group { id: 3, parent: Some(2), members: vec![10, 11], ..Group::default() },
            Group { id: 2, parent: Some(1), ..Group::default() },
            Group { id: 1, parent: None, ..Group::default() },
            Group { id: 4, parent: None, members: vec![20, 21], ..Group::default() },
        ])
        .unwrap()
    }

    #[test]
    fn action_geometry() {
        assert_eq!(Action::ALL.len(), 9);
        assert!(Action::NE.is_diagonal() && !Action::N.is_diagonal() && !Action::X.is_diagonal());
        assert_eq!(Action::N.turn_between(Action::N), Some(0));
        assert_eq!(Action::N.turn_between(Action::NW), Some(1));
        assert_eq!(Action::N.turn_between(Action::S), Some(4));
        assert_eq!(Action::X.turn_between(Action::S), None);
        for a in Action::ALL {
            let (dr, dc) = a.offset();
            assert_eq!(Action::from_offset(dr, dc), Some(a));
            assert_eq!(Action::from_symbol(a.symbol()), Some(a));
        }
    }

    #[test]
    fn resolve_simple_nested_and_individual() {
        let f = forest_chain();
        assert_eq!(resolve_groups(20, &f).unwrap(), (Some(4), Some(4)));
        assert_eq!(resolve_groups(10, &f).unwrap(), (Some(3), Some(1)));
        assert_eq!(resolve_groups(99, &f).unwrap(), (None, None));
        assert_eq!(f.get(1).unwrap().kind(), GroupKind::Structured);
        assert_eq!(f.get(3).unwrap().kind(), GroupKind::Simple);
        assert_eq!(f.all_members(1), vec![10, 11]);
    }

    #[test]
    fn duplicate_membership_is_structural_error() {
        let err = GroupForest::from_groups([
            Group { id: 0, members: vec![1], ..Group::default() },
            Group { id: 1, members: vec![1], ..Group::default() },
        ]);
        assert!(matches!(err, Err(Error::Structure(_))));
        let cyclic = GroupForest::from_groups([
            Group { id: 0, parent: Some(1), ..Group::default() },
            Group { id: 1, parent: Some(0), ..Group::default() },
        ]);
        assert!(matches!(cyclic, Err(Error::Structure(_))));
    }

    #[test]
    fn centroid_examples() {
        let p = group_centroid(&[Point::new(0.2, 0.2)]).unwrap();
        assert_eq!(p, Point::new(0.2, 0.2));
        let mid = group_centroid(&[Point::new(0.2, 0.2), Point::new(0.2, 1.0)]).unwrap();
        assert_abs_diff_eq!(mid.y, 0.6, epsilon = 1e-12);
        let square: Vec<Point> = [c(0, 0), c(0, 1), c(1, 0), c(1, 1)].iter().map(|x| x.center()).collect();
        let center = group_centroid(&square).unwrap();
        assert_abs_diff_eq!(center.x, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(center.y, 0.4, epsilon = 1e-12);
        assert!(matches!(group_centroid(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn centroid_dispersion_examples() {
        assert_eq!(dispersion_centroid(&[Point::new(1.0, 1.0)]).unwrap(), 0.0);
        let pair = [Point::new(0.2, 0.2), Point::new(1.0, 0.2)];
        assert_abs_diff_eq!(dispersion_centroid(&pair).unwrap(), 0.4, epsilon = 1e-12);
        let line = [Point::new(0.0, 0.0), Point::new(0.4, 0.0), Point::new(0.8, 0.0)];
        assert_abs_diff_eq!(dispersion_centroid(&line).unwrap(), 0.8 / 3.0, epsilon = 1e-12);
        assert!(dispersion_centroid(&[]).is_err());
    }

    #[test]
    fn area_dispersion_examples() {
        assert_eq!(dispersion_area(&[c(3, 3)]).unwrap(), 1.0);
        assert_eq!(dispersion_area(&[c(3, 3), c(3, 4)]).unwrap(), 1.0);
        assert_eq!(dispersion_area(&[c(0, 0), c(0, 4), c(4, 0)]).unwrap(), 5.0);
        assert_eq!(dispersion_area(&[c(0, 0), c(0, 2)]).unwrap(), 1.5);
        // two members sharing one cell
        assert_eq!(dispersion_area(&[c(1, 1), c(1, 1)]).unwrap(), 0.5);
        assert_abs_diff_eq!(dispersion_area_m2(&[c(0, 0), c(0, 1)]).unwrap(), 0.16, epsilon = 1e-12);
        assert!(dispersion_area(&[]).is_err());
    }

    #[test]
    fn compose_benchmark_mix() {
        let rows = GroupMix::benchmark().compose(100);
        let members = |s: usize| rows.iter().filter(|r| r.size == s).map(|r| r.size * r.count).sum::<usize>();
        assert_eq!(members(2), 28);
        assert_eq!(members(3), 24);
        assert_eq!(members(6), 12);
        assert_eq!(members(1), 36);
        let small = GroupMix::benchmark().compose(5);
        assert_eq!(small.iter().map(|r| r.size * r.count).sum::<usize>(), 5);
    }

    #[test]
    fn mix_validation() {
        assert!(GroupMix::new([(2, 0.7), (3, 0.5)]).is_err());
        assert!(GroupMix::new([(1, 0.2)]).is_err());
        assert!(GroupMix::new([(2, 0.5)]).is_ok());
    }

    #[test]
    fn quota_tracks_shares() {
        let mix = GroupMix::benchmark();
        let mut quota = MixQuota::default();
        let mut members: BTreeMap<usize, usize> = BTreeMap::new();
        let mut total = 0;
        while total < 100 {
            let s = quota.next_size(&mix);
            *members.entry(s).or_default() += s;
            total += s;
        }
        for (size, share) in [(2, 28.0), (3, 24.0), (6, 12.0)] {
            let got = 100.0 * members[&size] as f64 / total as f64;
            assert!((got - share).abs() <= 5.0, "size {size}: {got}% vs {share}%");
        }
    }

    #[test]
    fn place_cluster_is_cohesive() {
        let grid = build_grid(2.4, 2.4, vec![], false).unwrap();
        let area = grid.bounds().cells().collect::<Vec<_>>();
        let mut rng = RunRng::new(StreamAlgorithm::ChaCha8, 3);
        for _ in 0..50 {
            let cells = place_cluster(&grid, &area, 6, &mut rng).unwrap();
            assert_eq!(cells.len(), 6);
            for a in &cells {
                for b in &cells {
                    assert!(a.chebyshev(*b) <= 2);
                }
            }
        }
        assert!(place_cluster(&grid, &area[..3], 4, &mut rng).is_none());
    }

    #[test]
    fn expand_structured_batch() {
        let batch = vec![
            GroupRow { size: 0, count: 1, kind: RowKind::Structured, label: Some("tour".into()), parent: None },
            GroupRow { size: 3, count: 2, kind: RowKind::Simple, label: None, parent: Some("tour".into()) },
            GroupRow::simple(1, 2),
        ];
        let mut forest = GroupForest::new();
        let cohorts = expand_batch(&batch, &mut forest).unwrap();
        assert_eq!(forest.len(), 3);
        assert_eq!(cohorts.len(), 4);
        assert_eq!(forest.get(0).unwrap().subgroups, vec![1, 2]);
        assert_eq!(cohorts.iter().filter(|c| c.group.is_none()).count(), 2);
    }
}
