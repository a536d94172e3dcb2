//! Utility-based action choice with dispersion-driven weight balancing.
//!
//! Each candidate cell (the eight Moore neighbours and the agent's own cell)
//! gets seven components in `[-1, 1]`:
//!
//! | component | meaning |
//! |-----------|---------|
//! | goal | `(PFmax - PF(c)) / (PFmax - PFmin)` over the admissible neighbourhood |
//! | obstacle | `-ObsF(c) / max` |
//! | separation | `-(strangers around c) / 8` |
//! | direction | 1 straight on, 0.5 at 45°, else 0 |
//! | overlap | -1 when `c` already holds someone else |
//! | cohesion | one-step approach towards the direct group's centroid |
//! | inter-cohesion | same towards the outermost group's centroid |
//!
//! The weighted sum is divided by √2 for diagonal moves and turned into
//! probabilities with a softmax over admissible actions.

use std::f64::consts::SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{CellIndex, FieldLayer, Grid, Point};
use crate::population::{dispersion_area, Action, AgentId, GroupId};
use crate::{Error, Result, CELL_SIZE};

/// Default threshold of the dispersion balance.
pub const DEFAULT_DELTA: f64 = 2.5;

/// Distance covered by one diagonal step; normalises the cohesion components.
const ONE_STEP: f64 = SQRT_2 * CELL_SIZE;

/// The seven κ coefficients, each in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityWeights {
    pub goal: f64,
    pub obstacle: f64,
    pub separation: f64,
    pub direction: f64,
    pub overlap: f64,
    pub cohesion: f64,
    pub inter_cohesion: f64,
}

impl Default for UtilityWeights {
    fn default() -> Self {
        UtilityWeights {
            goal: 60.0,
            obstacle: 30.0,
            separation: 35.0,
            direction: 10.0,
            overlap: 55.0,
            cohesion: 30.0,
            inter_cohesion: 10.0,
        }
    }
}

impl UtilityWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, k) in self.named() {
            if !(0.0..=100.0).contains(&k) {
                return Err(Error::Range(format!("weight {name} = {k} outside [0, 100]")));
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("goal", self.goal),
            ("obstacle", self.obstacle),
            ("separation", self.separation),
            ("direction", self.direction),
            ("overlap", self.overlap),
            ("cohesion", self.cohesion),
            ("inter_cohesion", self.inter_cohesion),
        ]
    }

    pub fn zero() -> Self {
        UtilityWeights {
            goal: 0.0,
            obstacle: 0.0,
            separation: 0.0,
            direction: 0.0,
            overlap: 0.0,
            cohesion: 0.0,
            inter_cohesion: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComponentValues {
    pub goal: f64,
    pub obstacle: f64,
    pub separation: f64,
    pub direction: f64,
    pub overlap: f64,
    pub cohesion: f64,
    pub inter_cohesion: f64,
}

impl ComponentValues {
    pub fn as_array(&self) -> [f64; 7] {
        [self.goal, self.obstacle, self.separation, self.direction, self.overlap, self.cohesion, self.inter_cohesion]
    }
}

/// Weighted sum of components, divided by √2 for diagonal moves.
pub fn compute_utility(c: &ComponentValues, w: &UtilityWeights, diagonal: bool) -> f64 {
    let sum = w.goal * c.goal
        + w.obstacle * c.obstacle
        + w.separation * c.separation
        + w.direction * c.direction
        + w.overlap * c.overlap
        + w.cohesion * c.cohesion
        + w.inter_cohesion * c.inter_cohesion;
    if diagonal {
        sum / SQRT_2
    } else {
        sum
    }
}

/// `tanh(dispersion / delta)`.
pub fn disp_balance(dispersion: f64, delta: f64) -> f64 {
    (dispersion / delta).tanh()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceKind {
    Cohesion,
    Goal,
    Structured,
    Other,
}

/// Trades goal attraction against cohesion: cohesion grows from `k/3` to `k`
/// with the balance value, goal and inter-group cohesion shrink from `k` to `k/3`.
pub fn balance(k: f64, kind: BalanceKind, db: f64) -> f64 {
    match kind {
        BalanceKind::Cohesion => k / 3.0 + (2.0 * k / 3.0) * db,
        BalanceKind::Goal | BalanceKind::Structured => k / 3.0 + (2.0 * k / 3.0) * (1.0 - db),
        BalanceKind::Other => k,
    }
}

/// Weights after balancing against the area dispersion of the direct group.
///
/// `group_cells` holds the positions of the agent's direct group members;
/// individuals pass `None` and keep `base`.
pub fn effective_weights(base: &UtilityWeights, group_cells: Option<&[CellIndex]>, delta: f64) -> UtilityWeights {
    let Some(cells) = group_cells.filter(|c| !c.is_empty()) else {
        return *base;
    };
    let dispersion = dispersion_area(cells).expect("non-empty");
    let db = disp_balance(dispersion, delta);
    UtilityWeights {
        goal: balance(base.goal, BalanceKind::Goal, db),
        cohesion: balance(base.cohesion, BalanceKind::Cohesion, db),
        inter_cohesion: balance(base.inter_cohesion, BalanceKind::Structured, db),
        ..*base
    }
}

/// Fields an agent perceives.
#[derive(Debug, Clone, Copy)]
pub struct Perception<'a> {
    pub grid: &'a Grid,
    pub path: &'a FieldLayer,
    pub obstacle: &'a FieldLayer,
    pub obstacle_max: f64,
}

/// What the deciding agent knows about itself and its groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentView {
    pub id: AgentId,
    pub position: CellIndex,
    pub prev_direction: Option<Action>,
    pub direct_group: Option<GroupId>,
    pub direct_centroid: Option<Point>,
    /// Centroid of the outermost group; `None` when it is the direct group.
    pub outer_centroid: Option<Point>,
}

/// Target cell of `action` if the agent may take it: inside the grid,
/// walkable, connected to the destination and holding fewer than two people.
/// Standing still is always admissible.
pub fn admissible_target(p: &Perception<'_>, view: &AgentView, action: Action) -> Option<CellIndex> {
    if action == Action::X {
        return Some(view.position);
    }
    let (dr, dc) = action.offset();
    let cell = p.grid.offset(view.position, dr, dc)?;
    let ok = p.grid.is_walkable(cell) && p.path.is_reachable(cell) && !p.grid.occupants(cell).is_full();
    ok.then_some(cell)
}

fn approach(from: CellIndex, to: CellIndex, centroid: Option<Point>) -> f64 {
    match centroid {
        Some(c) => ((from.center().distance(c) - to.center().distance(c)) / ONE_STEP).clamp(-1.0, 1.0),
        None => 0.0,
    }
}

/// Components for moving to `cell` by `action`. `path_range` is the
/// `(min, max)` path-field value over the admissible neighbourhood.
pub fn evaluate_components<F>(
    p: &Perception<'_>,
    view: &AgentView,
    action: Action,
    cell: CellIndex,
    path_range: (f64, f64),
    group_of: F,
) -> ComponentValues
where
    F: Fn(AgentId) -> Option<GroupId>,
{
    let (pf_min, pf_max) = path_range;
    let goal = if pf_max > pf_min { (pf_max - p.path.get(cell)) / (pf_max - pf_min) } else { 0.0 };

    let obstacle = -(p.obstacle.get(cell) / p.obstacle_max).clamp(0.0, 1.0);

    let mut strangers = 0usize;
    for a in &Action::ALL[..8] {
        let (dr, dc) = a.offset();
        if let Some(n) = p.grid.offset(cell, dr, dc) {
            strangers += p
                .grid
                .occupants(n)
                .as_slice()
                .iter()
                .filter(|&&o| o != view.id && (view.direct_group.is_none() || group_of(o) != view.direct_group))
                .count();
        }
    }
    let separation = -(strangers as f64 / 8.0).min(1.0);

    let direction = match (action, view.prev_direction) {
        (Action::X, _) | (_, None) => 0.0,
        (a, Some(prev)) => match a.turn_between(prev) {
            Some(0) => 1.0,
            Some(1) => 0.5,
            _ => 0.0,
        },
    };

    let others = p.grid.occupants(cell).as_slice().iter().filter(|&&o| o != view.id).count();
    let overlap = if others >= 1 { -1.0 } else { 0.0 };

    ComponentValues {
        goal,
        obstacle,
        separation,
        direction,
        overlap,
        cohesion: approach(view.position, cell, view.direct_centroid),
        inter_cohesion: approach(view.position, cell, view.outer_centroid),
    }
}

/// Components of every admissible action, indexed like [`Action::ALL`].
pub fn evaluate_neighborhood<F>(
    p: &Perception<'_>,
    view: &AgentView,
    group_of: F,
) -> [Option<(CellIndex, ComponentValues)>; 9]
where
    F: Fn(AgentId) -> Option<GroupId>,
{
    let targets: [Option<CellIndex>; 9] = Action::ALL.map(|a| admissible_target(p, view, a));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for cell in targets.iter().flatten() {
        let v = p.path.get(*cell);
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let mut out = [None; 9];
    for (i, a) in Action::ALL.into_iter().enumerate() {
        if let Some(cell) = targets[i] {
            out[i] = Some((cell, evaluate_components(p, view, a, cell, (lo, hi), &group_of)));
        }
    }
    out
}

/// Probability per action in [`Action::ALL`] order; inadmissible actions hold exactly 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution {
    pub probabilities: [f64; 9],
}

impl ActionDistribution {
    pub fn of(&self, action: Action) -> f64 {
        self.probabilities[action.index()]
    }

    pub fn point(action: Action) -> Self {
        let mut probabilities = [0.0; 9];
        probabilities[action.index()] = 1.0;
        ActionDistribution { probabilities }
    }
}

/// Softmax over the admissible utilities (`None` = inadmissible).
///
/// Standing still is always admissible in the engine; an all-`None` input
/// yields a point mass on `X`.
pub fn action_probabilities(utilities: &[Option<f64>; 9]) -> ActionDistribution {
    let max = utilities.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return ActionDistribution::point(Action::X);
    }
    let mut probabilities = [0.0; 9];
    let mut z = 0.0;
    for (p, u) in probabilities.iter_mut().zip(utilities) {
        if let Some(u) = u {
            *p = (u - max).exp();
            z += *p;
        }
    }
    for p in &mut probabilities {
        *p /= z;
    }
    ActionDistribution { probabilities }
}

/// Inverse-CDF draw over the fixed action order with one uniform from `rng`.
pub fn choose_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> Action {
    let u: f64 = rng.random();
    sample_with(dist, u)
}

/// The action selected by the uniform `u ∈ [0, 1)`.
pub fn sample_with(dist: &ActionDistribution, u: f64) -> Action {
    let mut acc = 0.0;
    let mut last = Action::X;
    for a in Action::ALL {
        let p = dist.of(a);
        if p > 0.0 {
            acc += p;
            last = a;
            if u < acc {
                return a;
            }
        }
    }
    last
}

/// Full decision for one agent: components, utilities and the distribution.
pub fn decide<F>(
    p: &Perception<'_>,
    view: &AgentView,
    weights: &UtilityWeights,
    group_of: F,
) -> ([Option<CellIndex>; 9], ActionDistribution)
where
    F: Fn(AgentId) -> Option<GroupId>,
{
    let evaluated = evaluate_neighborhood(p, view, group_of);
    let mut utilities = [None; 9];
    let mut cells = [None; 9];
    for (i, a) in Action::ALL.into_iter().enumerate() {
        if let Some((cell, comps)) = evaluated[i] {
            utilities[i] = Some(compute_utility(&comps, weights, a.is_diagonal()));
            cells[i] = Some(cell);
        }
    }
    (cells, action_probabilities(&utilities))
}
