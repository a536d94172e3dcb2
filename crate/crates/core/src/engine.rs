//! The simulation clock: shuffled sequential update, arrivals, spawning and
//! torus re-entry.
//!
//! One call to [`Simulation::step`] draws from the run stream in this order:
//! the permutation of live agents, one uniform per agent (in permutation
//! order), one uniform per frequency-based start area (in marker order), then
//! whatever placement of entering cohorts needs.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::behavior::{decide, effective_weights, sample_with, AgentView, Perception, UtilityWeights, DEFAULT_DELTA};
use crate::environment::{
    compute_obstacle_field, compute_path_field, CellIndex, DensityField, FieldLayer, Grid, Point,
};
use crate::metrics::trajectory::{LogHeader, RecordAction, TrajectoryLog, TrajectoryRecord};
use crate::population::{
    arrival_cohort, expand_batch, group_centroid, place_cluster, Action, AgentId, Cohort, DestinationId,
    GenerationMode, GroupForest, GroupId, MixQuota, Pedestrian,
};
use crate::rng::{RunRng, StreamAlgorithm};
use crate::{Error, Result, STEP_SECONDS};

/// Everything the engine needs besides the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub weights: UtilityWeights,
    pub delta: f64,
    pub obstacle_radius: usize,
    pub obstacle_max: f64,
    pub density_radius: usize,
    pub density_smoothing: f64,
    /// Arriving pedestrians re-enter at their start area instead of leaving.
    pub torus: bool,
    pub algorithm: StreamAlgorithm,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            weights: UtilityWeights::default(),
            delta: DEFAULT_DELTA,
            obstacle_radius: 2,
            obstacle_max: 1.0,
            density_radius: 3,
            density_smoothing: 0.0,
            torus: false,
            algorithm: StreamAlgorithm::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.delta > 0.0) {
            return Err(Error::Range(format!("delta {} must be positive", self.delta)));
        }
        if !(self.obstacle_max > 0.0) {
            return Err(Error::Range(format!("obstacle max {} must be positive", self.obstacle_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub agent: AgentId,
    pub action: Action,
    pub from: CellIndex,
    pub to: CellIndex,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepTrace {
    pub step: u64,
    /// One entry per agent live at the start of the step, in update order.
    pub moves: Vec<Move>,
    /// Agents that left the grid at the end of the step.
    pub arrivals: Vec<AgentId>,
    /// Agents placed on the grid at the end of the step (new or re-entering).
    pub entries: Vec<(AgentId, CellIndex)>,
}

impl StepTrace {
    /// Log records of this step ordered by agent id.
    pub fn records(&self, group_of: impl Fn(AgentId) -> Option<GroupId>) -> Vec<TrajectoryRecord> {
        let mut out: Vec<TrajectoryRecord> = self
            .moves
            .iter()
            .map(|m| (m.agent, m.to, RecordAction::Moved(m.action)))
            .chain(self.entries.iter().map(|&(a, c)| (a, c, RecordAction::Entered)))
            .map(|(agent, cell, action)| TrajectoryRecord {
                step: self.step,
                agent_id: agent,
                group_id: group_of(agent),
                row: cell.row,
                col: cell.col,
                action,
            })
            .collect();
        out.sort_by_key(|r| r.agent_id);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Headcount {
    pub live: usize,
    pub staged: usize,
    pub removed: usize,
    pub spawned: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Live,
    Staged,
    Removed,
}

#[derive(Debug, Clone)]
enum Pending {
    Fresh(Cohort),
    Reenter(Vec<AgentId>),
}

#[derive(Debug, Clone)]
struct StartArea {
    marker: usize,
    cells: Vec<CellIndex>,
    destination: DestinationId,
    rate: Option<f64>,
    quota: MixQuota,
    queue: VecDeque<Pending>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    grid: Grid,
    config: EngineConfig,
    paths: BTreeMap<DestinationId, FieldLayer>,
    obstacle: FieldLayer,
    density: DensityField,
    /// Destination id of each cell, if any.
    goal_of_cell: Vec<Option<DestinationId>>,
    agents: Vec<Pedestrian>,
    status: Vec<Status>,
    forest: GroupForest,
    starts: Vec<StartArea>,
    /// Members of each group waiting for the rest of their group.
    waiting: BTreeMap<Option<GroupId>, Vec<AgentId>>,
    step: u64,
    rng: RunRng,
    initial: StepTrace,
    headcount: Headcount,
}

impl Simulation {
    /// Builds the fields, then places every en-bloc batch (step 0).
    pub fn new(grid: Grid, config: EngineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut paths = BTreeMap::new();
        let mut goal_of_cell = vec![None; grid.len()];
        for marker in grid.destination_markers() {
            let id = marker.destination_id().expect("destination marker");
            if paths.insert(id, compute_path_field(&grid, marker)?).is_some() {
                return Err(Error::Config(format!("destination id {id} declared twice")));
            }
            for &c in &marker.cells {
                goal_of_cell[grid.index(c)] = Some(id);
            }
        }
        let obstacle = compute_obstacle_field(&grid, config.obstacle_radius, config.obstacle_max)?;
        let density = DensityField::new(&grid, config.density_radius, config.density_smoothing)?;

        let mut starts = Vec::new();
        for (i, marker) in grid.markers().iter().enumerate() {
            if let Some(spec) = marker.generation() {
                spec.validate()?;
                if !paths.contains_key(&spec.destination) {
                    return Err(Error::Config(format!(
                        "start area #{i} names unknown destination {}",
                        spec.destination
                    )));
                }
                let rate = match spec.mode {
                    GenerationMode::FrequencyBased { rate } => Some(rate),
                    GenerationMode::EnBloc { .. } => None,
                };
                starts.push(StartArea {
                    marker: i,
                    cells: marker.cells.clone(),
                    destination: spec.destination,
                    rate,
                    quota: MixQuota::default(),
                    queue: VecDeque::new(),
                });
            }
        }

        let mut sim = Simulation {
            goal_of_cell,
            paths,
            obstacle,
            density,
            agents: Vec::new(),
            status: Vec::new(),
            forest: GroupForest::new(),
            starts,
            waiting: BTreeMap::new(),
            step: 0,
            rng: RunRng::new(config.algorithm, seed),
            initial: StepTrace::default(),
            headcount: Headcount::default(),
            config,
            grid,
        };
        sim.place_initial()?;
        Ok(sim)
    }

    fn place_initial(&mut self) -> Result<()> {
        for s in 0..self.starts.len() {
            let marker = &self.grid.markers()[self.starts[s].marker];
            let spec = marker.generation().expect("start marker").clone();
            let GenerationMode::EnBloc { batch } = &spec.mode else { continue };
            let area = if spec.placement.is_empty() { marker.cells.clone() } else { spec.placement.clone() };
            for cohort in expand_batch(batch, &mut self.forest)? {
                let cells = place_cluster(&self.grid, &area, cohort.size, &mut self.rng).ok_or_else(|| {
                    Error::Config(format!(
                        "start area #{} has no room for a cohort of {} at step 0",
                        self.starts[s].marker, cohort.size
                    ))
                })?;
                let entries = self.spawn(&cohort, &cells, s)?;
                self.initial.entries.extend(entries);
            }
        }
        Ok(())
    }

    /// Puts a new pedestrian on `cell` outside of any start-area logic.
    /// Used to script situations; the entry is not part of any trace.
    pub fn add_pedestrian(
        &mut self,
        cell: CellIndex,
        group: Option<GroupId>,
        destination: DestinationId,
    ) -> Result<AgentId> {
        if !self.paths.contains_key(&destination) {
            return Err(Error::Config(format!("unknown destination {destination}")));
        }
        if !self.grid.is_walkable(cell) {
            return Err(Error::Config(format!("cell ({}, {}) is not walkable", cell.row, cell.col)));
        }
        if let Some(g) = group {
            if self.forest.get(g).is_none() {
                self.forest.insert(crate::population::Group { id: g, ..Default::default() })?;
            }
        }
        let id = self.agents.len() as AgentId;
        self.grid.add_occupant(cell, id)?;
        if let Some(g) = group {
            self.forest.add_member(g, id)?;
        }
        self.agents.push(Pedestrian {
            id,
            group_id: group,
            position: cell,
            prev_direction: None,
            destination,
            origin: 0,
        });
        self.status.push(Status::Live);
        self.headcount.live += 1;
        self.headcount.spawned += 1;
        Ok(id)
    }

    fn spawn(&mut self, cohort: &Cohort, cells: &[CellIndex], start: usize) -> Result<Vec<(AgentId, CellIndex)>> {
        let destination = self.starts[start].destination;
        let mut out = Vec::with_capacity(cells.len());
        for &cell in cells {
            let id = self.agents.len() as AgentId;
            self.grid.add_occupant(cell, id)?;
            if let Some(g) = cohort.group {
                self.forest.add_member(g, id)?;
            }
            self.agents.push(Pedestrian {
                id,
                group_id: cohort.group,
                position: cell,
                prev_direction: None,
                destination,
                origin: start,
            });
            self.status.push(Status::Live);
            out.push((id, cell));
        }
        self.headcount.live += cells.len();
        self.headcount.spawned += cells.len();
        Ok(out)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn forest(&self) -> &GroupForest {
        &self.forest
    }

    pub fn path_field(&self, destination: DestinationId) -> Option<&FieldLayer> {
        self.paths.get(&destination)
    }

    pub fn density(&self) -> &FieldLayer {
        self.density.layer()
    }

    /// Steps completed so far.
    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn elapsed_seconds(&self) -> f64 {
        self.step as f64 * STEP_SECONDS
    }

    pub fn headcount(&self) -> Headcount {
        self.headcount
    }

    /// Entries made while building the simulation (step 0).
    pub fn initial_trace(&self) -> &StepTrace {
        &self.initial
    }

    pub fn agent(&self, id: AgentId) -> Option<&Pedestrian> {
        self.agents.get(id as usize)
    }

    pub fn live_agents(&self) -> impl Iterator<Item = &Pedestrian> + '_ {
        self.agents.iter().zip(&self.status).filter(|(_, s)| **s == Status::Live).map(|(a, _)| a)
    }

    pub fn group_of(&self, agent: AgentId) -> Option<GroupId> {
        self.agents.get(agent as usize).and_then(|a| a.group_id)
    }

    pub fn log_header(&self) -> LogHeader {
        let mut header = LogHeader::new(self.grid.rows(), self.grid.cols());
        header.wrap = self.grid.wraps();
        header.groups = self.forest.groups().map(|g| (g.id, g.parent)).collect();
        header
    }

    fn live_positions(&self, members: &[AgentId]) -> Vec<CellIndex> {
        members
            .iter()
            .filter(|&&m| self.status[m as usize] == Status::Live)
            .map(|&m| self.agents[m as usize].position)
            .collect()
    }

    fn centroid_of(cells: &[CellIndex]) -> Option<Point> {
        if cells.len() < 2 {
            return None;
        }
        let points: Vec<Point> = cells.iter().map(|c| c.center()).collect();
        group_centroid(&points).ok()
    }

    fn view_and_weights(&self, id: AgentId) -> (AgentView, UtilityWeights) {
        let ped = &self.agents[id as usize];
        let mut view = AgentView {
            id,
            position: ped.position,
            prev_direction: ped.prev_direction,
            direct_group: ped.group_id,
            direct_centroid: None,
            outer_centroid: None,
        };
        let Some(g) = ped.group_id else { return (view, self.config.weights) };
        let direct = self.live_positions(&self.forest.get(g).map(|g| g.members.clone()).unwrap_or_default());
        view.direct_centroid = Self::centroid_of(&direct);
        let root = self.forest.root(g);
        if root != g {
            view.outer_centroid = Self::centroid_of(&self.live_positions(&self.forest.all_members(root)));
        }
        let cells = (direct.len() >= 2).then_some(direct.as_slice());
        (view, effective_weights(&self.config.weights, cells, self.config.delta))
    }

    /// Advances one step and reports what happened.
    pub fn step(&mut self) -> Result<StepTrace> {
        let t = self.step + 1;
        let mut trace = StepTrace { step: t, ..StepTrace::default() };

        // (1) one density snapshot for everybody
        let positions: Vec<CellIndex> = self.live_agents().map(|a| a.position).collect();
        self.density.update(&self.grid, positions);

        // (2) update order
        let mut order: Vec<AgentId> = self.live_agents().map(|a| a.id).collect();
        order.shuffle(&mut self.rng);

        // (3) sequential moves, each visible to later movers
        for &id in &order {
            let (view, weights) = self.view_and_weights(id);
            let destination = self.agents[id as usize].destination;
            let perception = Perception {
                grid: &self.grid,
                path: &self.paths[&destination],
                obstacle: &self.obstacle,
                obstacle_max: self.config.obstacle_max,
            };
            let agents = &self.agents;
            let (cells, dist) = decide(&perception, &view, &weights, |o| agents[o as usize].group_id);
            let u: f64 = self.rng.random();
            let action = sample_with(&dist, u);
            let from = view.position;
            let to = cells[action.index()].ok_or_else(|| {
                Error::Consistency(format!("agent {id} sampled inadmissible action {action} at step {t}"))
            })?;
            if to != from {
                self.grid.remove_occupant(from, id)?;
                self.grid.add_occupant(to, id)?;
                let ped = &mut self.agents[id as usize];
                ped.position = to;
                ped.prev_direction = Some(action);
            }
            trace.moves.push(Move { agent: id, action, from, to });
        }

        // (4) arrivals, then entries
        let mut arrived = Vec::new();
        for &id in &order {
            let ped = &self.agents[id as usize];
            if self.goal_of_cell[self.grid.index(ped.position)] == Some(ped.destination) {
                arrived.push(id);
            }
        }
        arrived.sort_unstable();
        for &id in &arrived {
            self.handle_arrival(id)?;
        }
        trace.arrivals = arrived;

        for s in 0..self.starts.len() {
            if let Some(rate) = self.starts[s].rate {
                let u: f64 = self.rng.random();
                if u < rate {
                    let marker = &self.grid.markers()[self.starts[s].marker];
                    let mix = marker.generation().expect("start marker").group_mix.clone();
                    let cohort = arrival_cohort(&mix, &mut self.starts[s].quota, &mut self.forest)?;
                    self.starts[s].queue.push_back(Pending::Fresh(cohort));
                }
            }
        }
        for s in 0..self.starts.len() {
            trace.entries.extend(self.drain_queue(s)?);
        }
        self.flush_staged();

        // (5)
        self.step = t;
        self.check_consistency()?;
        Ok(trace)
    }

    /// Takes an agent that reached its destination off the grid. On a torus
    /// it is staged for re-entry; otherwise it is gone for good.
    fn handle_arrival(&mut self, id: AgentId) -> Result<()> {
        let pos = self.agents[id as usize].position;
        self.grid.remove_occupant(pos, id)?;
        self.headcount.live -= 1;
        if !self.config.torus {
            self.status[id as usize] = Status::Removed;
            self.headcount.removed += 1;
            return Ok(());
        }
        self.status[id as usize] = Status::Staged;
        self.headcount.staged += 1;
        let group = self.agents[id as usize].group_id;
        self.waiting.entry(group).or_default().push(id);
        Ok(())
    }

    /// Queues complete cohorts for re-entry from the next step on.
    fn flush_staged(&mut self) {
        let mut ready = Vec::new();
        let mut complete = Vec::new();
        for (&g, staged) in &self.waiting {
            match g {
                None => ready.extend(staged.iter().map(|&a| vec![a])),
                Some(g) if staged.len() == self.forest.get(g).map_or(1, |grp| grp.members.len()) => {
                    let mut members = staged.clone();
                    members.sort_unstable();
                    ready.push(members);
                    complete.push(Some(g));
                }
                Some(_) => {}
            }
        }
        self.waiting.remove(&None);
        for g in complete {
            self.waiting.remove(&g);
        }
        for members in ready {
            let origin = self.agents[members[0] as usize].origin;
            self.starts[origin].queue.push_back(Pending::Reenter(members));
        }
    }

    /// Places queued cohorts in order until one does not fit.
    fn drain_queue(&mut self, s: usize) -> Result<Vec<(AgentId, CellIndex)>> {
        let mut out = Vec::new();
        while let Some(next) = self.starts[s].queue.front() {
            let size = match next {
                Pending::Fresh(c) => c.size,
                Pending::Reenter(m) => m.len(),
            };
            let Some(cells) = place_cluster(&self.grid, &self.starts[s].cells, size, &mut self.rng) else { break };
            match self.starts[s].queue.pop_front().expect("front exists") {
                Pending::Fresh(cohort) => out.extend(self.spawn(&cohort, &cells, s)?),
                Pending::Reenter(members) => {
                    for (&id, &cell) in members.iter().zip(&cells) {
                        self.grid.add_occupant(cell, id)?;
                        let ped = &mut self.agents[id as usize];
                        ped.position = cell;
                        ped.prev_direction = None;
                        self.status[id as usize] = Status::Live;
                        out.push((id, cell));
                    }
                    self.headcount.staged -= members.len();
                    self.headcount.live += members.len();
                }
            }
        }
        Ok(out)
    }

    /// Occupancy, positions and headcount agree; nobody stands on an obstacle.
    pub fn check_consistency(&self) -> Result<()> {
        let mut live = 0;
        for (a, s) in self.agents.iter().zip(&self.status) {
            if *s != Status::Live {
                continue;
            }
            live += 1;
            if !self.grid.is_walkable(a.position) {
                return Err(Error::Consistency(format!("agent {} on unwalkable cell {:?}", a.id, a.position)));
            }
            if !self.grid.occupants(a.position).contains(a.id) {
                return Err(Error::Consistency(format!("agent {} missing from cell {:?}", a.id, a.position)));
            }
        }
        let occupied: usize = self.grid.bounds().cells().map(|c| self.grid.occupants(c).len()).sum();
        if occupied != live || live != self.headcount.live {
            return Err(Error::Consistency(format!(
                "{live} live agents but {occupied} occupancy slots (headcount {})",
                self.headcount.live
            )));
        }
        let h = self.headcount;
        if h.live + h.staged + h.removed != h.spawned {
            return Err(Error::Consistency(format!("headcount does not add up: {h:?}")));
        }
        Ok(())
    }
}

/// Key-value summary of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub steps: u64,
    pub simulated_time: f64,
    pub spawned: usize,
    pub removed: usize,
    pub live_at_end: usize,
    pub staged_at_end: usize,
    pub mean_density: f64,
    pub mean_velocity: f64,
    pub mean_flow: f64,
    /// Group size to mean area dispersion (cells/member).
    pub dispersion: BTreeMap<usize, f64>,
}

impl RunSummary {
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("scenario", self.name.clone());
        kv("seed", self.seed.to_string());
        kv("steps", self.steps.to_string());
        kv("simulated_time", format!("{:.2}", self.simulated_time));
        kv("spawned", self.spawned.to_string());
        kv("removed", self.removed.to_string());
        kv("live_at_end", self.live_at_end.to_string());
        kv("staged_at_end", self.staged_at_end.to_string());
        kv("mean_density", format!("{:.6}", self.mean_density));
        kv("mean_velocity", format!("{:.6}", self.mean_velocity));
        kv("mean_flow", format!("{:.6}", self.mean_flow));
        for (size, d) in &self.dispersion {
            kv(&format!("dispersion_area_size_{size}"), format!("{d:.6}"));
        }
        out
    }
}

/// Runs `steps` steps and returns the full log, step 0 included.
pub fn simulate(sim: &mut Simulation, steps: u64) -> Result<TrajectoryLog> {
    let mut records = {
        let s = &*sim;
        sim.initial_trace().records(|a| s.group_of(a))
    };
    for _ in 0..steps {
        let trace = sim.step()?;
        let s = &*sim;
        records.extend(trace.records(|a| s.group_of(a)));
    }
    let mut log = TrajectoryLog::new(sim.log_header());
    log.records = records;
    Ok(log)
}
