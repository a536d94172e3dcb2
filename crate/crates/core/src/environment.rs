//! The discrete walkable space and its floor fields.
//!
//! The lattice is indexed by `(row, col)`. Rows run north to south and columns
//! west to east; a cell centre sits at `((col + 0.5)·0.4, (row + 0.5)·0.4)` in
//! metres. When the grid wraps, it wraps along the row axis (the movement axis
//! of the bundled corridors).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::population::{AgentId, DestinationId, GenerationSpec};
use crate::{Error, Result, CELL_AREA, CELL_SIZE};

/// Moore neighbourhood offsets with their step cost.
const MOORE: [(i32, i32, f64); 8] = [
    (-1, 0, 1.0),
    (-1, 1, SQRT_2),
    (0, 1, 1.0),
    (1, 1, SQRT_2),
    (1, 0, 1.0),
    (1, -1, SQRT_2),
    (0, -1, 1.0),
    (-1, -1, SQRT_2),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        CellIndex { row, col }
    }

    /// Centre of the cell in metres.
    pub fn center(self) -> Point {
        Point { x: (self.col as f64 + 0.5) * CELL_SIZE, y: (self.row as f64 + 0.5) * CELL_SIZE }
    }

    pub fn chebyshev(self, other: CellIndex) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

/// A continuous position in metres (`x` east, `y` south).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;

    fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }
}

/// Inclusive cell rectangle `(row0, col0)..=(row1, col1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl Rect {
    pub const fn new(row0: usize, col0: usize, row1: usize, col1: usize) -> Self {
        Rect { row0, col0, row1, col1 }
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        (self.row0..=self.row1).contains(&cell.row) && (self.col0..=self.col1).contains(&cell.col)
    }

    pub fn cell_count(&self) -> usize {
        (self.row1 + 1 - self.row0) * (self.col1 + 1 - self.col0)
    }

    pub fn area_m2(&self) -> f64 {
        self.cell_count() as f64 * CELL_AREA
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (self.row0..=self.row1).flat_map(move |r| (self.col0..=self.col1).map(move |c| CellIndex::new(r, c)))
    }

    pub fn is_ordered(&self) -> bool {
        self.row0 <= self.row1 && self.col0 <= self.col1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MarkerKind {
    /// Where pedestrians enter; carries how they are generated.
    StartArea(Box<GenerationSpec>),
    /// A goal; its id selects the path field.
    DestinationArea(DestinationId),
    Obstacle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub kind: MarkerKind,
    pub cells: Vec<CellIndex>,
}

impl Marker {
    pub fn start(cells: Vec<CellIndex>, generation: GenerationSpec) -> Self {
        Marker { kind: MarkerKind::StartArea(Box::new(generation)), cells }
    }

    pub fn destination(id: DestinationId, cells: Vec<CellIndex>) -> Self {
        Marker { kind: MarkerKind::DestinationArea(id), cells }
    }

    pub fn obstacle(cells: Vec<CellIndex>) -> Self {
        Marker { kind: MarkerKind::Obstacle, cells }
    }

    pub fn destination_id(&self) -> Option<DestinationId> {
        match self.kind {
            MarkerKind::DestinationArea(id) => Some(id),
            _ => None,
        }
    }

    pub fn generation(&self) -> Option<&GenerationSpec> {
        match &self.kind {
            MarkerKind::StartArea(spec) => Some(spec),
            _ => None,
        }
    }

    pub fn is_obstacle(&self) -> bool {
        matches!(self.kind, MarkerKind::Obstacle)
    }
}

/// At most two pedestrians can share a cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Occupants {
    ids: [AgentId; 2],
    len: u8,
}

impl Occupants {
    pub const CAP: usize = 2;

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len() == Self::CAP
    }

    pub fn as_slice(&self) -> &[AgentId] {
        &self.ids[..self.len()]
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.as_slice().contains(&id)
    }

    fn push(&mut self, id: AgentId) -> bool {
        if self.is_full() {
            return false;
        }
        self.ids[self.len()] = id;
        self.len += 1;
        true
    }

    fn remove(&mut self, id: AgentId) -> bool {
        match self.as_slice().iter().position(|&x| x == id) {
            Some(0) => {
                self.ids[0] = self.ids[1];
                self.len -= 1;
                true
            }
            Some(_) => {
                self.len -= 1;
                true
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cell {
    pub walkable: bool,
    /// Index into [`Grid::markers`].
    pub marker: Option<usize>,
    pub occupants: Occupants,
}

#[derive(Debug, Clone)]
pub struct Grid {
    rows: usize,
    cols: usize,
    wrap: bool,
    cells: Vec<Cell>,
    markers: Vec<Marker>,
}

/// Converts a length in metres to a whole number of cells.
fn cells_for(length: f64, what: &str) -> Result<usize> {
    let n = length / CELL_SIZE;
    let rounded = n.round();
    if !(length > 0.0) || rounded < 1.0 || (n - rounded).abs() * CELL_SIZE > 1e-9 {
        return Err(Error::Dimension(format!("{what} {length} m is not a positive multiple of {CELL_SIZE} m")));
    }
    Ok(rounded as usize)
}

/// Builds a grid of `width × height` metres: `cols = width / 0.4`, `rows = height / 0.4`.
pub fn build_grid(width: f64, height: f64, markers: Vec<Marker>, wrap: bool) -> Result<Grid> {
    let cols = cells_for(width, "width")?;
    let rows = cells_for(height, "height")?;
    let mut cells = vec![Cell { walkable: true, ..Cell::default() }; rows * cols];
    for (m, marker) in markers.iter().enumerate() {
        if marker.cells.is_empty() {
            return Err(Error::Config(format!("marker #{m} has no cells")));
        }
        for &cell in &marker.cells {
            if cell.row >= rows || cell.col >= cols {
                return Err(Error::Config(format!(
                    "marker #{m} cell ({}, {}) outside {rows}x{cols} grid",
                    cell.row, cell.col
                )));
            }
            let slot = &mut cells[cell.row * cols + cell.col];
            if let Some(other) = slot.marker {
                return Err(Error::Config(format!(
                    "markers #{other} and #{m} overlap at ({}, {})",
                    cell.row, cell.col
                )));
            }
            slot.marker = Some(m);
            if marker.is_obstacle() {
                slot.walkable = false;
            }
        }
    }
    Ok(Grid { rows, cols, wrap, cells, markers })
}

impl Grid {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn wraps(&self) -> bool {
        self.wrap
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Physical `(width, height)` in metres.
    pub fn dimensions_m(&self) -> (f64, f64) {
        (self.cols as f64 * CELL_SIZE, self.rows as f64 * CELL_SIZE)
    }

    pub fn area_m2(&self) -> f64 {
        self.len() as f64 * CELL_AREA
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.rows - 1, self.cols - 1)
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    #[inline]
    pub fn index(&self, cell: CellIndex) -> usize {
        cell.row * self.cols + cell.col
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> CellIndex {
        CellIndex::new(index / self.cols, index % self.cols)
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    pub fn cell(&self, cell: CellIndex) -> &Cell {
        &self.cells[self.index(cell)]
    }

    pub fn is_walkable(&self, cell: CellIndex) -> bool {
        self.cell(cell).walkable
    }

    pub fn occupants(&self, cell: CellIndex) -> &Occupants {
        &self.cells[self.index(cell)].occupants
    }

    pub fn marker_at(&self, cell: CellIndex) -> Option<&Marker> {
        self.cell(cell).marker.map(|m| &self.markers[m])
    }

    /// Cell reached from `cell` by `(dr, dc)`, honouring row wrap; `None` off-grid.
    #[inline]
    pub fn offset(&self, cell: CellIndex, dr: i32, dc: i32) -> Option<CellIndex> {
        let col = cell.col as i64 + dc as i64;
        if col < 0 || col >= self.cols as i64 {
            return None;
        }
        let mut row = cell.row as i64 + dr as i64;
        if self.wrap {
            row = row.rem_euclid(self.rows as i64);
        } else if row < 0 || row >= self.rows as i64 {
            return None;
        }
        Some(CellIndex::new(row as usize, col as usize))
    }

    /// Walkable Moore neighbours with their step cost.
    pub fn moore_neighbors(&self, cell: CellIndex) -> impl Iterator<Item = (CellIndex, f64)> + '_ {
        MOORE.iter().filter_map(move |&(dr, dc, cost)| {
            self.offset(cell, dr, dc).filter(|&n| self.is_walkable(n)).map(|n| (n, cost))
        })
    }

    /// Places `agent` in `cell`; fails on obstacles and full cells.
    pub fn add_occupant(&mut self, cell: CellIndex, agent: AgentId) -> Result<()> {
        let i = self.index(cell);
        let slot = &mut self.cells[i];
        if !slot.walkable {
            return Err(Error::Consistency(format!("agent {agent} placed on obstacle {cell:?}")));
        }
        if !slot.occupants.push(agent) {
            return Err(Error::Consistency(format!("cell {cell:?} already holds two pedestrians")));
        }
        Ok(())
    }

    pub fn remove_occupant(&mut self, cell: CellIndex, agent: AgentId) -> Result<()> {
        let i = self.index(cell);
        if self.cells[i].occupants.remove(agent) {
            Ok(())
        } else {
            Err(Error::Consistency(format!("agent {agent} not found in {cell:?}")))
        }
    }

    pub fn clear_occupants(&mut self) {
        for c in &mut self.cells {
            c.occupants = Occupants::default();
        }
    }

    pub fn destination_markers(&self) -> impl Iterator<Item = &Marker> {
        self.markers.iter().filter(|m| m.destination_id().is_some())
    }

    pub fn destination(&self, id: DestinationId) -> Option<&Marker> {
        self.markers.iter().find(|m| m.destination_id() == Some(id))
    }

    pub fn obstacle_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (0..self.len()).filter(|&i| !self.cells[i].walkable).map(|i| self.cell_at(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Path,
    Obstacle,
    Density,
}

/// One scalar layer over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldLayer {
    pub kind: FieldKind,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub destination_id: Option<DestinationId>,
}

impl FieldLayer {
    /// Path-field sentinel for cells with no route to the destination.
    pub const UNREACHABLE: f64 = f64::INFINITY;

    fn filled(kind: FieldKind, grid: &Grid, value: f64) -> Self {
        FieldLayer { kind, rows: grid.rows(), cols: grid.cols(), values: vec![value; grid.len()], destination_id: None }
    }

    #[inline]
    pub fn get(&self, cell: CellIndex) -> f64 {
        self.values[cell.row * self.cols + cell.col]
    }

    pub fn is_reachable(&self, cell: CellIndex) -> bool {
        self.get(cell).is_finite()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    index: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by index for a stable pop order
        other.dist.total_cmp(&self.dist).then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Weighted-Moore shortest distance (1 orthogonal, √2 diagonal) from every
/// walkable cell to the destination marker.
pub fn compute_path_field(grid: &Grid, destination: &Marker) -> Result<FieldLayer> {
    let id = destination
        .destination_id()
        .ok_or_else(|| Error::Config("path field requested for a marker that is not a destination".into()))?;
    if destination.cells.is_empty() {
        return Err(Error::Config(format!("destination {id} has no cells")));
    }
    let mut layer = FieldLayer::filled(FieldKind::Path, grid, FieldLayer::UNREACHABLE);
    layer.destination_id = Some(id);
    let mut heap = BinaryHeap::new();
    for &cell in &destination.cells {
        if !grid.contains(cell) {
            return Err(Error::Config(format!("destination {id} cell {cell:?} outside the grid")));
        }
        if grid.is_walkable(cell) {
            let i = grid.index(cell);
            layer.values[i] = 0.0;
            heap.push(Frontier { dist: 0.0, index: i });
        }
    }
    while let Some(Frontier { dist, index }) = heap.pop() {
        if dist > layer.values[index] {
            continue;
        }
        for (n, cost) in grid.moore_neighbors(grid.cell_at(index)) {
            let j = grid.index(n);
            let candidate = dist + cost;
            if candidate < layer.values[j] {
                layer.values[j] = candidate;
                heap.push(Frontier { dist: candidate, index: j });
            }
        }
    }
    Ok(layer)
}

/// Chebyshev distance from every cell to the nearest obstacle cell, measured
/// through the lattice geometry regardless of walkability. `None` without obstacles.
fn obstacle_distances(grid: &Grid) -> Vec<Option<usize>> {
    let mut dist = vec![None; grid.len()];
    let mut queue = std::collections::VecDeque::new();
    for cell in grid.obstacle_cells() {
        let i = grid.index(cell);
        dist[i] = Some(0);
        queue.push_back(cell);
    }
    while let Some(cell) = queue.pop_front() {
        let d = dist[grid.index(cell)].unwrap_or(0);
        for &(dr, dc, _) in &MOORE {
            if let Some(n) = grid.offset(cell, dr, dc) {
                let j = grid.index(n);
                if dist[j].is_none() {
                    dist[j] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
    }
    dist
}

/// Linear repulsion: `max_value` next to an obstacle, zero beyond `radius` cells.
pub fn compute_obstacle_field(grid: &Grid, radius: usize, max_value: f64) -> Result<FieldLayer> {
    if radius < 1 {
        return Err(Error::Range("obstacle field radius must be at least 1 cell".into()));
    }
    if !(max_value > 0.0) {
        return Err(Error::Range("obstacle field maximum must be positive".into()));
    }
    let mut layer = FieldLayer::filled(FieldKind::Obstacle, grid, 0.0);
    let r = radius as f64;
    for (i, d) in obstacle_distances(grid).into_iter().enumerate() {
        layer.values[i] = match d {
            None => 0.0,
            Some(0) => max_value,
            Some(d) => max_value * ((r - d as f64 + 1.0) / r).max(0.0),
        };
    }
    Ok(layer)
}

/// Instantaneous windowed density, optionally smoothed by an exponential moving average.
#[derive(Debug, Clone)]
pub struct DensityField {
    radius: usize,
    smoothing: f64,
    layer: FieldLayer,
    counts: Vec<u32>,
}

impl DensityField {
    /// `smoothing` is the weight of the previous value; 0 gives the raw windowed density.
    pub fn new(grid: &Grid, radius: usize, smoothing: f64) -> Result<Self> {
        if radius < 1 {
            return Err(Error::Range("density radius must be at least 1 cell".into()));
        }
        if !(0.0..1.0).contains(&smoothing) {
            return Err(Error::Range(format!("density smoothing {smoothing} not in [0, 1)")));
        }
        Ok(DensityField {
            radius,
            smoothing,
            layer: FieldLayer::filled(FieldKind::Density, grid, 0.0),
            counts: vec![0; grid.len()],
        })
    }

    pub fn layer(&self) -> &FieldLayer {
        &self.layer
    }

    pub fn update<I>(&mut self, grid: &Grid, positions: I)
    where
        I: IntoIterator<Item = CellIndex>,
    {
        let fresh = update_density_field(grid, positions, self.radius, &mut self.counts);
        let a = self.smoothing;
        for (v, f) in self.layer.values.iter_mut().zip(fresh) {
            *v = a * *v + (1.0 - a) * f;
        }
    }
}

/// Row offsets of a window of half-width `radius` around `row`, honouring wrap.
fn window_rows(grid: &Grid, row: usize, radius: usize) -> Vec<usize> {
    let r = radius as i64;
    let rows = grid.rows() as i64;
    if grid.wraps() {
        if 2 * r + 1 >= rows {
            return (0..grid.rows()).collect();
        }
        (-r..=r).map(|d| (row as i64 + d).rem_euclid(rows) as usize).collect()
    } else {
        let lo = (row as i64 - r).max(0) as usize;
        let hi = (row as i64 + r).min(rows - 1) as usize;
        (lo..=hi).collect()
    }
}

/// Pedestrians within Chebyshev `radius` of each cell divided by the window
/// area (m²) clipped to the grid. `scratch` is a reusable count buffer.
pub fn update_density_field<I>(grid: &Grid, positions: I, radius: usize, scratch: &mut Vec<u32>) -> Vec<f64>
where
    I: IntoIterator<Item = CellIndex>,
{
    scratch.clear();
    scratch.resize(grid.len(), 0);
    let mut any = false;
    for p in positions {
        scratch[grid.index(p)] += 1;
        any = true;
    }
    let mut out = vec![0.0; grid.len()];
    if !any {
        return out;
    }
    let cols = grid.cols();
    // column prefix sums per row make each window an O(rows-in-window) query
    let mut prefix = vec![0u32; grid.rows() * (cols + 1)];
    for r in 0..grid.rows() {
        for c in 0..cols {
            prefix[r * (cols + 1) + c + 1] = prefix[r * (cols + 1) + c] + scratch[r * cols + c];
        }
    }
    for r in 0..grid.rows() {
        let rows = window_rows(grid, r, radius);
        for c in 0..cols {
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(cols - 1);
            let mut count = 0u32;
            for &wr in &rows {
                count += prefix[wr * (cols + 1) + hi + 1] - prefix[wr * (cols + 1) + lo];
            }
            let area = (rows.len() * (hi - lo + 1)) as f64 * CELL_AREA;
            out[r * cols + c] = count as f64 / area;
        }
    }
    out
}
