//! Run descriptions: TOML scenario files and the bundled corridor presets.
//!
//! ```toml
//! name = "corridor"
//! steps = 1800
//! seed = 7
//! torus = true
//!
//! [grid]
//! width = 2.4
//! height = 20.0
//!
//! [weights]
//! goal = 60
//!
//! [[markers]]
//! kind = "destination"
//! id = 0
//! rect = [49, 1, 49, 4]
//!
//! [[markers]]
//! kind = "start"
//! rect = [1, 1, 1, 4]
//! destination = 0
//! mode = "en_bloc"
//! batch = [{ size = 2, count = 3 }, { size = 1, count = 10 }]
//! ```
//!
//! A file may instead start from a preset (`preset = "corridor_A"`,
//! optionally with `density = 1.5`) and override scalars and weights.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::behavior::UtilityWeights;
use crate::engine::{simulate, EngineConfig, RunSummary, Simulation};
use crate::environment::{build_grid, CellIndex, Marker, MarkerKind, Rect};
use crate::metrics::groups::{dispersion_series, group_members};
use crate::metrics::{fundamental_diagram, TrajectoryLog, DEFAULT_WINDOW};
use crate::population::{GenerationMode, GenerationSpec, GroupMix, GroupRow, RowKind};
use crate::rng::StreamAlgorithm;
use crate::{Error, Result, CELL_SIZE, STEP_SECONDS};

pub const PRESETS: [&str; 3] = ["corridor_A", "corridor_B", "corridor_C"];

/// Density used by a preset unless told otherwise (ped/m²).
pub const PRESET_DENSITY: f64 = 0.5;

/// Rows of each corridor start area; deep enough for a 3×3 group window.
pub const START_DEPTH: usize = 3;

/// Steps between dispersion samples in run summaries and sweeps.
pub const DISPERSION_INTERVAL: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub width: f64,
    pub height: f64,
    pub wrap: bool,
    pub markers: Vec<Marker>,
    pub engine: EngineConfig,
    pub steps: u64,
    pub seed: u64,
}

impl Scenario {
    pub fn area_m2(&self) -> f64 {
        self.width * self.height
    }

    pub fn rows(&self) -> usize {
        (self.height / CELL_SIZE).round() as usize
    }

    pub fn cols(&self) -> usize {
        (self.width / CELL_SIZE).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Range("steps must be at least 1".into()));
        }
        self.engine.validate()?;
        build_grid(self.width, self.height, self.markers.clone(), self.wrap)?;
        for m in &self.markers {
            if let Some(spec) = m.generation() {
                spec.validate()?;
                if !self.markers.iter().any(|d| d.destination_id() == Some(spec.destination)) {
                    return Err(Error::Config(format!("start area names unknown destination {}", spec.destination)));
                }
            }
        }
        Ok(())
    }

    /// A ready-to-step simulation; step 0 placement already done.
    pub fn build(&self, seed: u64) -> Result<Simulation> {
        self.validate()?;
        let grid = build_grid(self.width, self.height, self.markers.clone(), self.wrap)?;
        Simulation::new(grid, self.engine.clone(), seed)
    }

    /// Total pedestrians in all en-bloc batches.
    pub fn population(&self) -> usize {
        self.markers
            .iter()
            .filter_map(|m| m.generation())
            .filter_map(|g| match &g.mode {
                GenerationMode::EnBloc { batch } => {
                    Some(batch.iter().filter(|r| r.kind == RowKind::Simple).map(|r| r.size * r.count).sum::<usize>())
                }
                _ => None,
            })
            .sum()
    }

    /// Same scenario with `round(density × area)` pedestrians spread over the
    /// en-bloc start areas, composed by the first area's group mix.
    pub fn with_density(&self, density: f64) -> Result<Scenario> {
        if !(density >= 0.0) || !density.is_finite() {
            return Err(Error::Range(format!("density {density} must be non-negative")));
        }
        self.with_population((density * self.area_m2()).round() as usize)
    }

    /// Same scenario with every start area drawing from `mix`, repopulated
    /// at the current head count.
    pub fn with_group_mix(&self, mix: GroupMix) -> Result<Scenario> {
        mix.validate()?;
        let mut out = self.clone();
        for m in &mut out.markers {
            if let MarkerKind::StartArea(spec) = &mut m.kind {
                spec.group_mix = mix.clone();
            }
        }
        out.with_population(self.population())
    }

    pub fn with_population(&self, pedestrians: usize) -> Result<Scenario> {
        let starts: Vec<usize> = self
            .markers
            .iter()
            .enumerate()
            .filter(|(_, m)| matches!(m.generation().map(|g| &g.mode), Some(GenerationMode::EnBloc { .. })))
            .map(|(i, _)| i)
            .collect();
        let Some(&first) = starts.first() else {
            return Err(Error::Config("scenario has no en-bloc start area to populate".into()));
        };
        let mix = self.markers[first].generation().expect("start").group_mix.clone();
        // biggest groups first, each to the emptiest start area
        let mut sizes: Vec<usize> =
            mix.compose(pedestrians).iter().flat_map(|row| std::iter::repeat_n(row.size, row.count)).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let mut loads = vec![0usize; starts.len()];
        let mut per_start: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); starts.len()];
        for size in sizes {
            let k = (0..starts.len()).min_by_key(|&k| (loads[k], k)).expect("non-empty");
            loads[k] += size;
            *per_start[k].entry(size).or_default() += 1;
        }
        let mut out = self.clone();
        for (k, &i) in starts.iter().enumerate() {
            let batch: Vec<GroupRow> = per_start[k].iter().rev().map(|(&s, &n)| GroupRow::simple(s, n)).collect();
            if let MarkerKind::StartArea(spec) = &mut out.markers[i].kind {
                spec.mode = GenerationMode::EnBloc { batch };
            }
        }
        Ok(out)
    }

    /// Runs with the scenario's own seed and step count.
    pub fn run(&self) -> Result<(TrajectoryLog, RunSummary)> {
        self.run_with(self.seed, self.steps)
    }

    pub fn run_with(&self, seed: u64, steps: u64) -> Result<(TrajectoryLog, RunSummary)> {
        let mut sim = self.build(seed)?;
        let log = simulate(&mut sim, steps)?;
        let h = sim.headcount();
        let mut summary = summarize(&log)?;
        summary.name = self.name.clone();
        summary.seed = seed;
        summary.steps = steps;
        summary.simulated_time = steps as f64 * STEP_SECONDS;
        summary.spawned = h.spawned;
        summary.removed = h.removed;
        summary.live_at_end = h.live;
        summary.staged_at_end = h.staged;
        Ok((log, summary))
    }
}

/// Measured density, velocity and flow over the whole grid, and mean area
/// dispersion per group size.
pub fn summarize(log: &TrajectoryLog) -> Result<RunSummary> {
    let region = Rect::new(0, 0, log.header.rows - 1, log.header.cols - 1);
    let points = fundamental_diagram(log, region, None, DEFAULT_WINDOW)?;
    let mean = |f: &dyn Fn(&crate::metrics::FundamentalDiagramPoint) -> f64| {
        if points.is_empty() {
            0.0
        } else {
            points.iter().map(f).sum::<f64>() / points.len() as f64
        }
    };
    let mut by_size: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for members in group_members(log).values() {
        let series = dispersion_series(log, members, DISPERSION_INTERVAL)?;
        let e = by_size.entry(members.len()).or_default();
        for s in &series.samples {
            e.0 += s.area_cells;
            e.1 += 1;
        }
    }
    Ok(RunSummary {
        name: String::new(),
        seed: 0,
        steps: log.step_range().map_or(0, |(a, b)| b - a),
        simulated_time: 0.0,
        spawned: 0,
        removed: 0,
        live_at_end: 0,
        staged_at_end: 0,
        mean_density: mean(&|p| p.density),
        mean_velocity: mean(&|p| p.velocity),
        mean_flow: mean(&|p| p.flow),
        dispersion: by_size.into_iter().filter(|(_, (_, n))| *n > 0).map(|(s, (sum, n))| (s, sum / n as f64)).collect(),
    })
}

/// Bidirectional corridor of `width × height` metres on a torus.
///
/// Columns 0 and `cols - 1` are walls. Row 0 is the goal of the northbound
/// flow and row `rows - 1` the goal of the southbound one; each flow
/// re-enters on the [`START_DEPTH`] rows inside its own end. The initial
/// batch is scattered over the rows in between.
pub fn corridor(name: &str, width: f64, height: f64, density: f64) -> Result<Scenario> {
    let cols = (width / CELL_SIZE).round() as usize;
    let rows = (height / CELL_SIZE).round() as usize;
    if cols < 3 || rows < 2 * START_DEPTH + 3 {
        return Err(Error::Dimension(format!("corridor {width} x {height} m is too small")));
    }
    let (c0, c1) = (1, cols - 2);
    let band = |r0: usize, r1: usize| Rect::new(r0, c0, r1, c1).cells().collect::<Vec<CellIndex>>();
    let placement = band(START_DEPTH + 1, rows - START_DEPTH - 2);
    let flow = |destination| GenerationSpec {
        mode: GenerationMode::EnBloc { batch: Vec::new() },
        group_mix: GroupMix::benchmark(),
        destination,
        placement: placement.clone(),
    };
    let walls: Vec<CellIndex> = (0..rows).flat_map(|r| [CellIndex::new(r, 0), CellIndex::new(r, cols - 1)]).collect();
    let scenario = Scenario {
        name: name.to_string(),
        width,
        height,
        wrap: false,
        markers: vec![
            Marker::obstacle(walls),
            Marker::destination(0, band(rows - 1, rows - 1)),
            Marker::destination(1, band(0, 0)),
            Marker::start(band(1, START_DEPTH), flow(0)),
            Marker::start(band(rows - 1 - START_DEPTH, rows - 2), flow(1)),
        ],
        engine: EngineConfig { torus: true, ..EngineConfig::default() },
        steps: 1800,
        seed: 1,
    };
    scenario.with_density(density)
}

pub fn preset(name: &str) -> Option<Scenario> {
    preset_at(name, PRESET_DENSITY).ok()
}

pub fn preset_at(name: &str, density: f64) -> Result<Scenario> {
    let (w, h) = match name {
        "corridor_A" => (2.4, 20.0),
        "corridor_B" => (3.6, 13.2),
        "corridor_C" => (4.8, 10.0),
        other => return Err(Error::Config(format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")))),
    };
    corridor(name, w, h, density)
}

// ---------------------------------------------------------------- file format

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    preset: Option<Spanned<String>>,
    density: Option<Spanned<f64>>,
    steps: Option<Spanned<u64>>,
    seed: Option<u64>,
    rng: Option<Spanned<String>>,
    delta: Option<Spanned<f64>>,
    torus: Option<bool>,
    grid: Option<Spanned<RawGrid>>,
    weights: Option<Spanned<RawWeights>>,
    fields: Option<Spanned<RawFields>>,
    markers: Option<Vec<Spanned<RawMarker>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    width: f64,
    height: f64,
    #[serde(default)]
    wrap: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    goal: Option<f64>,
    obstacle: Option<f64>,
    separation: Option<f64>,
    direction: Option<f64>,
    overlap: Option<f64>,
    cohesion: Option<f64>,
    inter_cohesion: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFields {
    obstacle_radius: Option<usize>,
    obstacle_max: Option<f64>,
    density_radius: Option<usize>,
    density_smoothing: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarker {
    kind: String,
    rect: Option<[usize; 4]>,
    cells: Option<Vec<[usize; 2]>>,
    id: Option<u32>,
    destination: Option<u32>,
    mode: Option<String>,
    rate: Option<f64>,
    batch: Option<Vec<GroupRow>>,
    group_mix: Option<BTreeMap<String, f64>>,
    placement: Option<[usize; 4]>,
}

struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].bytes().filter(|&b| b == b'\n').count() + 1
    }

    /// Re-tags a validation error with the line where `span` starts.
    fn at<T>(&self, span: std::ops::Range<usize>, r: Result<T>) -> Result<T> {
        r.map_err(|e| {
            let line = self.line_of(span.start);
            match e {
                Error::Range(m) => Error::Range(format!("line {line}: {m}")),
                Error::Config(m) => Error::Config(format!("line {line}: {m}")),
                Error::Dimension(m) => Error::Dimension(format!("line {line}: {m}")),
                Error::Structure(m) => Error::Structure(format!("line {line}: {m}")),
                other => other,
            }
        })
    }
}

fn rect_cells(r: [usize; 4]) -> Result<Vec<CellIndex>> {
    let rect = Rect::new(r[0], r[1], r[2], r[3]);
    if !rect.is_ordered() {
        return Err(Error::Config(format!(
            "rect {r:?} must be [row0, col0, row1, col1] with row0 <= row1, col0 <= col1"
        )));
    }
    Ok(rect.cells().collect())
}

fn marker_from_raw(raw: &RawMarker) -> Result<Marker> {
    let mut cells = match &raw.rect {
        Some(r) => rect_cells(*r)?,
        None => Vec::new(),
    };
    if let Some(list) = &raw.cells {
        cells.extend(list.iter().map(|&[r, c]| CellIndex::new(r, c)));
    }
    match raw.kind.as_str() {
        "obstacle" => Ok(Marker::obstacle(cells)),
        "destination" => {
            let id = raw.id.ok_or_else(|| Error::Config("destination marker needs an `id`".into()))?;
            Ok(Marker::destination(id, cells))
        }
        "start" => {
            let destination =
                raw.destination.ok_or_else(|| Error::Config("start marker needs a `destination`".into()))?;
            let group_mix = match &raw.group_mix {
                Some(m) => GroupMix::new(
                    m.iter()
                        .map(|(k, v)| {
                            k.parse::<usize>()
                                .map(|s| (s, *v))
                                .map_err(|_| Error::Config(format!("group_mix key `{k}` is not a group size")))
                        })
                        .collect::<Result<Vec<_>>>()?,
                )?,
                None => GroupMix::default(),
            };
            let mode = match raw.mode.as_deref().unwrap_or("en_bloc") {
                "en_bloc" => GenerationMode::EnBloc { batch: raw.batch.clone().unwrap_or_default() },
                "frequency" | "frequency_based" => GenerationMode::FrequencyBased {
                    rate: raw.rate.ok_or_else(|| Error::Config("frequency mode needs a `rate`".into()))?,
                },
                other => return Err(Error::Config(format!("unknown generation mode `{other}`"))),
            };
            let placement = match raw.placement {
                Some(r) => rect_cells(r)?,
                None => Vec::new(),
            };
            let spec = GenerationSpec { mode, group_mix, destination, placement };
            spec.validate()?;
            Ok(Marker::start(cells, spec))
        }
        other => Err(Error::Config(format!("unknown marker kind `{other}` (start, destination, obstacle)"))),
    }
}

fn parse_error(text: &str, e: toml::de::Error) -> Error {
    let src = Source { text };
    Error::Parse { line: e.span().map(|s| src.line_of(s.start)), message: e.message().to_string() }
}

/// Parses and validates a scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    let src = Source { text };

    let mut scenario = match &raw.preset {
        Some(p) => {
            let density = raw.density.as_ref().map_or(PRESET_DENSITY, |d| *d.get_ref());
            let span = raw.density.as_ref().map_or(p.span(), |d| d.span());
            src.at(span, preset_at(p.get_ref(), density))?
        }
        None => {
            let grid =
                raw.grid.as_ref().ok_or_else(|| Error::Config("scenario needs a [grid] table or a `preset`".into()))?;
            let mut markers = Vec::new();
            for m in raw.markers.iter().flatten() {
                markers.push(src.at(m.span(), marker_from_raw(m.get_ref()))?);
            }
            let g = grid.get_ref();
            let s = Scenario {
                name: String::new(),
                width: g.width,
                height: g.height,
                wrap: g.wrap,
                markers,
                engine: EngineConfig::default(),
                steps: 1800,
                seed: 0,
            };
            src.at(grid.span(), build_grid(s.width, s.height, s.markers.clone(), s.wrap).map(|_| ()))?;
            match &raw.density {
                Some(d) => src.at(d.span(), s.with_density(*d.get_ref()))?,
                None => s,
            }
        }
    };
    if raw.preset.is_some() && raw.grid.is_some() {
        return Err(Error::Config("`preset` and [grid] cannot be combined".into()));
    }

    if let Some(name) = raw.name {
        scenario.name = name;
    } else if scenario.name.is_empty() {
        scenario.name = "scenario".into();
    }
    if let Some(steps) = &raw.steps {
        scenario.steps = *steps.get_ref();
        src.at(
            steps.span(),
            if scenario.steps < 1 { Err(Error::Range("steps must be at least 1".into())) } else { Ok(()) },
        )?;
    }
    if let Some(seed) = raw.seed {
        scenario.seed = seed;
    }
    if let Some(torus) = raw.torus {
        scenario.engine.torus = torus;
    }
    if let Some(rng) = &raw.rng {
        scenario.engine.algorithm = src.at(rng.span(), rng.get_ref().parse::<StreamAlgorithm>())?;
    }
    if let Some(delta) = &raw.delta {
        scenario.engine.delta = *delta.get_ref();
        src.at(
            delta.span(),
            if scenario.engine.delta > 0.0 { Ok(()) } else { Err(Error::Range("delta must be positive".into())) },
        )?;
    }
    if let Some(w) = &raw.weights {
        let r = w.get_ref();
        let base = scenario.engine.weights;
        let weights = UtilityWeights {
            goal: r.goal.unwrap_or(base.goal),
            obstacle: r.obstacle.unwrap_or(base.obstacle),
            separation: r.separation.unwrap_or(base.separation),
            direction: r.direction.unwrap_or(base.direction),
            overlap: r.overlap.unwrap_or(base.overlap),
            cohesion: r.cohesion.unwrap_or(base.cohesion),
            inter_cohesion: r.inter_cohesion.unwrap_or(base.inter_cohesion),
        };
        src.at(w.span(), weights.validate())?;
        scenario.engine.weights = weights;
    }
    if let Some(f) = &raw.fields {
        let r = f.get_ref();
        let e = &mut scenario.engine;
        e.obstacle_radius = r.obstacle_radius.unwrap_or(e.obstacle_radius);
        e.obstacle_max = r.obstacle_max.unwrap_or(e.obstacle_max);
        e.density_radius = r.density_radius.unwrap_or(e.density_radius);
        e.density_smoothing = r.density_smoothing.unwrap_or(e.density_smoothing);
        let check = if e.density_radius < 1 {
            Err(Error::Range("density_radius must be at least 1".into()))
        } else if !(0.0..1.0).contains(&e.density_smoothing) {
            Err(Error::Range("density_smoothing must be in [0, 1)".into()))
        } else if !(e.obstacle_max > 0.0) {
            Err(Error::Range("obstacle_max must be positive".into()))
        } else {
            Ok(())
        };
        src.at(f.span(), check)?;
    }
    scenario.validate()?;
    Ok(scenario)
}

/// Loads a scenario file, or a preset when `path` names one.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    if let Some(name) = path.to_str().filter(|p| PRESETS.contains(p)) {
        return preset_at(name, PRESET_DENSITY);
    }
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_scenario(&text)
}
