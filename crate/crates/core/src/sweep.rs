//! Density campaigns: one run per (density, repetition), analysed and
//! folded into fundamental-diagram, cohort and dispersion tables.
//!
//! Runs are independent and seeded `seed_base + run_id`, where
//! `run_id = level_index * max_repetitions + repetition`, so the tables do
//! not depend on how many runs execute at once.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::environment::Rect;
use crate::metrics::groups::{cohort_progress, cohort_speeds, dispersion_series, group_members, CohortKey};
use crate::metrics::stats::{mean, variance};
use crate::metrics::{fundamental_diagram, Section, TrajectoryLog, DEFAULT_WINDOW};
use crate::par;
use crate::scenario::{load_scenario, preset_at, Scenario, DISPERSION_INTERVAL, PRESETS, PRESET_DENSITY};
use crate::{Error, Result};

/// Group sizes reported separately; size 1 is individuals.
pub const COHORTS: [usize; 4] = [1, 2, 3, 6];

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Repetitions {
    Fixed(usize),
    /// At least `min` runs, adding one at a time while the coefficient of
    /// variation of run flow exceeds `cv`, up to `max`.
    Adaptive {
        min: usize,
        max: usize,
        cv: f64,
    },
}

impl Repetitions {
    pub fn bounds(&self) -> (usize, usize) {
        match *self {
            Repetitions::Fixed(n) => (n, n),
            Repetitions::Adaptive { min, max, .. } => (min, max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub template: Scenario,
    pub densities: Vec<f64>,
    pub repetitions: Repetitions,
    pub seed_base: u64,
    pub steps: u64,
    /// Leading steps left out of every measurement.
    pub warmup: u64,
}

impl SweepSpec {
    pub fn new(template: Scenario, densities: Vec<f64>, repetitions: Repetitions, seed_base: u64) -> Self {
        let steps = template.steps;
        SweepSpec { template, densities, repetitions, seed_base, steps, warmup: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.densities.is_empty() {
            return Err(Error::Config("sweep needs at least one density".into()));
        }
        if self.densities.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Range("densities must be positive".into()));
        }
        if self.densities.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Range("densities must be strictly increasing".into()));
        }
        let (min, max) = self.repetitions.bounds();
        if min < 1 || max < min {
            return Err(Error::Range(format!("repetitions {min}..{max} invalid")));
        }
        if let Repetitions::Adaptive { cv, .. } = self.repetitions {
            if !(cv > 0.0) {
                return Err(Error::Range("cv target must be positive".into()));
            }
        }
        if self.steps < 1 {
            return Err(Error::Range("steps must be at least 1".into()));
        }
        if self.warmup >= self.steps {
            return Err(Error::Range("warmup must be shorter than the run".into()));
        }
        Ok(())
    }

    fn run_id(&self, level: usize, rep: usize) -> usize {
        level * self.repetitions.bounds().1 + rep
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    scenario: String,
    densities: Vec<f64>,
    repetitions: Repetitions,
    #[serde(default)]
    seed_base: u64,
    steps: Option<u64>,
    #[serde(default)]
    warmup: u64,
}

/// Parses a sweep file. `scenario` is a preset name or a path relative to `base`.
pub fn parse_sweep(text: &str, base: &Path) -> Result<SweepSpec> {
    let raw: RawSweep = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    let template = if PRESETS.contains(&raw.scenario.as_str()) {
        preset_at(&raw.scenario, PRESET_DENSITY)?
    } else {
        load_scenario(&base.join(&raw.scenario))?
    };
    let mut spec = SweepSpec::new(template, raw.densities, raw.repetitions, raw.seed_base);
    if let Some(s) = raw.steps {
        spec.steps = s;
    }
    spec.warmup = raw.warmup;
    spec.validate()?;
    Ok(spec)
}

pub fn load_sweep(path: &Path) -> Result<SweepSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_sweep(&text, path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub parallel: bool,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    /// Where to write one trajectory log per run.
    pub log_dir: Option<PathBuf>,
}

/// What one run contributes to the aggregate tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub run_id: usize,
    pub level: usize,
    pub density: f64,
    pub repetition: usize,
    pub seed: u64,
    pub pedestrians: usize,
    pub measured_density: f64,
    pub velocity: f64,
    pub flow: f64,
    /// Crossings of the mid-corridor row per metre of width per second.
    pub section_flow: f64,
    /// Mean net progress speed along the corridor.
    pub progress: f64,
    /// Measured density times progress speed.
    pub throughput: f64,
    /// Mean walking speed per cohort (1 = individuals).
    pub cohort_velocity: BTreeMap<usize, f64>,
    /// Mean progress speed per cohort.
    pub cohort_progress: BTreeMap<usize, f64>,
    /// Mean progress speed over all group members, whatever the size.
    pub group_progress: Option<f64>,
    /// Area dispersion samples (cells/member) per group size.
    pub dispersion: BTreeMap<usize, Vec<f64>>,
    /// Centroid dispersion samples (m) per group size.
    pub centroid: BTreeMap<usize, Vec<f64>>,
}

/// Measures one log, skipping the first `warmup` steps.
pub fn analyze_run(log: &TrajectoryLog, warmup: u64) -> Result<RunMetrics> {
    let trimmed;
    let log = if warmup > 0 {
        let mut t = TrajectoryLog::new(log.header.clone());
        t.records = log.records.iter().filter(|r| r.step >= warmup).copied().collect();
        trimmed = t;
        &trimmed
    } else {
        log
    };
    let region = Rect::new(0, 0, log.header.rows - 1, log.header.cols - 1);
    let section = Section::row(log.header.rows / 2);
    let points = fundamental_diagram(log, region, Some(section), DEFAULT_WINDOW)?;
    let avg = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { mean(&xs) };
    let measured_density = avg(points.iter().map(|p| p.density).collect());
    let velocity = avg(points.iter().map(|p| p.velocity).collect());
    let flow = avg(points.iter().map(|p| p.flow).collect());
    let section_flow = avg(points.iter().filter_map(|p| p.section_flow).collect());

    let by_size = |m: BTreeMap<String, Vec<f64>>| -> BTreeMap<usize, f64> {
        m.into_iter().filter_map(|(label, v)| Some((label.parse::<usize>().ok()?, mean(&v)))).collect()
    };
    let cohort_velocity = by_size(cohort_speeds(log, CohortKey::GroupSize)?);
    let membership = cohort_progress(log, CohortKey::Membership)?;
    let group_progress = membership.get("group").map(|v| mean(v));
    let progress = avg(membership.into_values().flatten().collect());
    let cohort_progress = by_size(cohort_progress(log, CohortKey::GroupSize)?);

    let mut dispersion: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut centroid: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for members in group_members(log).values() {
        let series = dispersion_series(log, members, DISPERSION_INTERVAL)?;
        dispersion.entry(members.len()).or_default().extend(series.samples.iter().map(|s| s.area_cells));
        centroid.entry(members.len()).or_default().extend(series.samples.iter().map(|s| s.centroid_m));
    }
    Ok(RunMetrics {
        run_id: 0,
        level: 0,
        density: 0.0,
        repetition: 0,
        seed: 0,
        pedestrians: log.agent_groups().len(),
        measured_density,
        velocity,
        flow,
        section_flow,
        progress,
        throughput: measured_density * progress,
        cohort_velocity,
        cohort_progress,
        group_progress,
        dispersion,
        centroid,
    })
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Successful runs ordered by run id.
    pub runs: Vec<RunMetrics>,
    pub failures: Vec<(usize, String)>,
    pub densities: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    run_id: usize,
    level: usize,
    repetition: usize,
    density: f64,
    seed: u64,
}

fn execute(spec: &SweepSpec, job: Job, log_dir: Option<&Path>) -> Result<RunMetrics> {
    let scenario = spec.template.with_density(job.density)?;
    let (log, _) = scenario.run_with(job.seed, spec.steps)?;
    if let Some(dir) = log_dir {
        let path = dir.join(format!("run_{:04}_d{:.2}_r{}.csv", job.run_id, job.density, job.repetition));
        log.write_to(std::io::BufWriter::new(fs::File::create(path)?))?;
    }
    let mut m = analyze_run(&log, spec.warmup)?;
    m.run_id = job.run_id;
    m.level = job.level;
    m.density = job.density;
    m.repetition = job.repetition;
    m.seed = job.seed;
    m.pedestrians = scenario.population();
    Ok(m)
}

fn coefficient_of_variation(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::INFINITY;
    }
    let m = mean(xs);
    if m == 0.0 {
        return 0.0;
    }
    variance(xs).sqrt() / m.abs()
}

pub fn run_sweep(spec: &SweepSpec, options: &SweepOptions) -> Result<SweepResult> {
    spec.validate()?;
    if let Some(dir) = &options.log_dir {
        fs::create_dir_all(dir)?;
    }
    let (min, max) = spec.repetitions.bounds();
    let job = |level: usize, rep: usize| {
        let run_id = spec.run_id(level, rep);
        Job { run_id, level, repetition: rep, density: spec.densities[level], seed: spec.seed_base + run_id as u64 }
    };
    let mut pending: Vec<Job> =
        (0..spec.densities.len()).flat_map(|l| (0..min).map(move |r| (l, r))).map(|(l, r)| job(l, r)).collect();
    let mut runs: Vec<RunMetrics> = Vec::new();
    let mut failures = Vec::new();
    let mut attempted = vec![min; spec.densities.len()];

    par::with_threads(options.threads, || {
        while !pending.is_empty() {
            let results =
                par::map_collect(&pending, options.parallel, |j| execute(spec, *j, options.log_dir.as_deref()));
            for (j, r) in pending.iter().zip(results) {
                match r {
                    Ok(m) => runs.push(m),
                    Err(e) => {
                        log::warn!("run {} (density {}, seed {}) failed: {e}", j.run_id, j.density, j.seed);
                        failures.push((j.run_id, e.to_string()));
                    }
                }
            }
            pending.clear();
            if let Repetitions::Adaptive { cv, .. } = spec.repetitions {
                for (level, done) in attempted.iter_mut().enumerate() {
                    let flows: Vec<f64> = runs.iter().filter(|m| m.level == level).map(|m| m.flow).collect();
                    if *done < max && coefficient_of_variation(&flows) > cv {
                        pending.push(job(level, *done));
                        *done += 1;
                    }
                }
            }
        }
    });
    runs.sort_by_key(|m| m.run_id);
    failures.sort();
    Ok(SweepResult { runs, failures, densities: spec.densities.clone() })
}

/// Aggregate of all runs at one density level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub density: f64,
    pub runs: usize,
    pub measured_density: f64,
    pub velocity: f64,
    pub flow: f64,
    pub flow_sd: f64,
    pub section_flow: f64,
    pub progress: f64,
    /// Measured density times progress speed; the critical density is its argmax.
    pub throughput: f64,
    /// Mean cohort walking speed per size across runs.
    pub cohort_velocity: BTreeMap<usize, f64>,
    /// Cohort flow: measured density times the cohort's progress speed.
    pub cohort_flow: BTreeMap<usize, f64>,
    /// Measured density times the progress speed of all group members.
    pub group_flow: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionSummary {
    pub density: f64,
    pub size: usize,
    pub samples: usize,
    pub mean_area: f64,
    pub mean_area_m2: f64,
    pub mean_centroid: f64,
    pub fraction_below_6: f64,
}

impl SweepResult {
    pub fn levels(&self) -> Vec<LevelSummary> {
        self.densities
            .iter()
            .enumerate()
            .filter_map(|(level, &density)| {
                let runs: Vec<&RunMetrics> = self.runs.iter().filter(|m| m.level == level).collect();
                if runs.is_empty() {
                    return None;
                }
                let flows: Vec<f64> = runs.iter().map(|m| m.flow).collect();
                let measured_density = mean(&runs.iter().map(|m| m.measured_density).collect::<Vec<_>>());
                let mut cohort_velocity = BTreeMap::new();
                let mut cohort_flow = BTreeMap::new();
                for size in COHORTS {
                    let v: Vec<f64> = runs.iter().filter_map(|m| m.cohort_velocity.get(&size).copied()).collect();
                    if !v.is_empty() {
                        cohort_velocity.insert(size, mean(&v));
                    }
                    let p: Vec<f64> = runs.iter().filter_map(|m| m.cohort_progress.get(&size).copied()).collect();
                    if !p.is_empty() {
                        cohort_flow.insert(size, mean(&p) * measured_density);
                    }
                }
                let g: Vec<f64> = runs.iter().filter_map(|m| m.group_progress).collect();
                let group_flow = (!g.is_empty()).then(|| mean(&g) * measured_density);
                Some(LevelSummary {
                    density,
                    runs: runs.len(),
                    measured_density,
                    velocity: mean(&runs.iter().map(|m| m.velocity).collect::<Vec<_>>()),
                    flow: mean(&flows),
                    flow_sd: if flows.len() > 1 { variance(&flows).sqrt() } else { 0.0 },
                    section_flow: mean(&runs.iter().map(|m| m.section_flow).collect::<Vec<_>>()),
                    progress: mean(&runs.iter().map(|m| m.progress).collect::<Vec<_>>()),
                    throughput: mean(&runs.iter().map(|m| m.throughput).collect::<Vec<_>>()),
                    cohort_velocity,
                    cohort_flow,
                    group_flow,
                })
            })
            .collect()
    }

    /// Density level with the highest mean throughput.
    pub fn critical_density(&self) -> Option<f64> {
        self.levels().into_iter().max_by(|a, b| a.throughput.total_cmp(&b.throughput)).map(|l| l.density)
    }

    /// All area-dispersion samples of `size`-member groups at `density`.
    pub fn dispersion_samples(&self, density: f64, size: usize) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|m| m.density == density)
            .flat_map(|m| m.dispersion.get(&size).cloned().unwrap_or_default())
            .collect()
    }

    pub fn dispersion(&self) -> Vec<DispersionSummary> {
        let mut out = Vec::new();
        for &density in &self.densities {
            let sizes: std::collections::BTreeSet<usize> =
                self.runs.iter().filter(|m| m.density == density).flat_map(|m| m.dispersion.keys().copied()).collect();
            for size in sizes {
                let area = self.dispersion_samples(density, size);
                if area.is_empty() {
                    continue;
                }
                let centroid: Vec<f64> = self
                    .runs
                    .iter()
                    .filter(|m| m.density == density)
                    .flat_map(|m| m.centroid.get(&size).cloned().unwrap_or_default())
                    .collect();
                let mean_area = mean(&area);
                out.push(DispersionSummary {
                    density,
                    size,
                    samples: area.len(),
                    mean_area,
                    mean_area_m2: mean_area * crate::CELL_AREA,
                    mean_centroid: mean(&centroid),
                    fraction_below_6: area.iter().filter(|&&a| a < 6.0).count() as f64 / area.len() as f64,
                });
            }
        }
        out
    }

    pub fn fd_table(&self) -> String {
        let mut out =
            String::from("density,runs,measured_density,velocity,flow,flow_sd,section_flow,progress,throughput");
        for s in COHORTS {
            let label = if s == 1 { "individuals".to_string() } else { format!("size{s}") };
            write!(out, ",velocity_{label},flow_{label}").unwrap();
        }
        out.push('\n');
        for l in self.levels() {
            write!(
                out,
                "{:.4},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                l.density,
                l.runs,
                l.measured_density,
                l.velocity,
                l.flow,
                l.flow_sd,
                l.section_flow,
                l.progress,
                l.throughput
            )
            .unwrap();
            for s in COHORTS {
                match (l.cohort_velocity.get(&s), l.cohort_flow.get(&s)) {
                    (Some(v), Some(f)) => write!(out, ",{v:.6},{f:.6}").unwrap(),
                    _ => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn dispersion_table(&self) -> String {
        let mut out =
            String::from("density,size,samples,mean_area_cells,mean_area_m2,mean_centroid_m,fraction_below_6\n");
        for d in self.dispersion() {
            writeln!(
                out,
                "{:.4},{},{},{:.6},{:.6},{:.6},{:.6}",
                d.density, d.size, d.samples, d.mean_area, d.mean_area_m2, d.mean_centroid, d.fraction_below_6
            )
            .unwrap();
        }
        out
    }

    pub fn runs_table(&self) -> String {
        let mut out = String::from("run_id,density,repetition,seed,pedestrians,measured_density,velocity,flow\n");
        for m in &self.runs {
            writeln!(
                out,
                "{},{:.4},{},{},{},{:.6},{:.6},{:.6}",
                m.run_id, m.density, m.repetition, m.seed, m.pedestrians, m.measured_density, m.velocity, m.flow
            )
            .unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SweepSpec {
        let mut t = preset_at("corridor_C", 0.5).unwrap();
        t.steps = 40;
        SweepSpec::new(t, vec![0.5, 1.0], Repetitions::Fixed(2), 11)
    }

    #[test]
    fn bookkeeping() {
        let spec = tiny();
        let r = run_sweep(&spec, &SweepOptions::default()).unwrap();
        assert_eq!(r.runs.len(), 4);
        assert_eq!(r.runs.iter().map(|m| m.seed).collect::<Vec<_>>(), vec![11, 12, 13, 14]);
        assert_eq!(r.levels().len(), 2);
    }

    #[test]
    fn parallelism_does_not_change_tables() {
        let spec = tiny();
        let a = run_sweep(&spec, &SweepOptions { parallel: false, ..Default::default() }).unwrap();
        let b = run_sweep(&spec, &SweepOptions { parallel: true, threads: 2, ..Default::default() }).unwrap();
        assert_eq!(a.fd_table(), b.fd_table());
        assert_eq!(a.dispersion_table(), b.dispersion_table());
    }

    #[test]
    fn invalid_specs() {
        let mut s = tiny();
        s.densities = vec![1.0, 0.5];
        assert!(s.validate().is_err());
        let mut s = tiny();
        s.repetitions = Repetitions::Fixed(0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn parse_file() {
        let spec = parse_sweep(
            "scenario = \"corridor_A\"\ndensities = [0.5, 1.0]\nrepetitions = { min = 3, max = 8, cv = 0.1 }\nseed_base = 5\nsteps = 20\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(spec.repetitions.bounds(), (3, 8));
        assert_eq!(spec.steps, 20);
    }
}
