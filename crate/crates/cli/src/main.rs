//! `floorfield`: run scenarios, sweep densities, analyse trajectory logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use floorfield::environment::Rect;
use floorfield::metrics::groups::{arrangement_series, relative_position_map};
use floorfield::metrics::stats::{mean, variance};
use floorfield::metrics::{
    check_metric, cohort_speeds, compare_means, count_flows, dispersion_series, fundamental_diagram, group_members,
    level_of_service, per_minute, ArrangementPattern, ArrangementThresholds, CohortKey, LosTable, Section,
    TrajectoryLog, DEFAULT_WINDOW,
};
use floorfield::scenario::{load_scenario, preset_at, PRESETS, PRESET_DENSITY};
use floorfield::sweep::{load_sweep, run_sweep, Repetitions, SweepOptions, SweepSpec};
use floorfield::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "floorfield", version, about = "Floor-field crowd simulation and trajectory analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "FLOORFIELD_OUT", default_value = "floorfield-out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario and write its trajectory log and summary.
    Run {
        /// Scenario file or preset name.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        /// Repopulate at this density (ped/m²).
        #[arg(long)]
        density: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a density campaign and write fundamental-diagram and dispersion tables.
    Sweep {
        /// Sweep file, or a preset name combined with --densities.
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated densities when sweeping a preset.
        #[arg(long, value_delimiter = ',')]
        densities: Vec<f64>,
        /// Fixed repetitions per level when sweeping a preset (default: adaptive 3 to 8).
        #[arg(long)]
        reps: Option<usize>,
        /// Seed base when sweeping a preset.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        steps: Option<u64>,
        /// Run independent simulations concurrently.
        #[arg(long)]
        parallel: bool,
        /// Worker threads with --parallel; 0 picks one per core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Skip writing one trajectory log per run.
        #[arg(long)]
        no_logs: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compute metric tables from a trajectory log.
    Analyze {
        /// Trajectory log (simulated or observed).
        log: PathBuf,
        /// Comma-separated metrics: diagram, los, flows, speeds, compare, dispersion, arrangements, positions.
        #[arg(long, value_delimiter = ',', default_value = "diagram,speeds")]
        metrics: Vec<String>,
        /// Cohort grouping for speeds and comparisons: group-size, membership, group.
        #[arg(long, default_value = "group-size")]
        cohort_by: CohortKey,
        /// Window for diagram, flows and LOS, in steps.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: u64,
        /// Sampling interval for group metrics, in steps.
        #[arg(long, default_value_t = 1)]
        interval: u64,
        /// Row used as counting section (default: middle row).
        #[arg(long)]
        section_row: Option<usize>,
        /// Write tables into this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled scenarios.
    Presets,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match &e {
            Error::Io(io) if io.kind() == io::ErrorKind::NotFound => Failure::Validation(e.to_string()),
            _ if e.is_validation() => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { scenario, seed, steps, density, out } => cmd_run(&scenario, seed, steps, density, &out.out),
        Command::Sweep { scenario, densities, reps, seed, steps, parallel, threads, no_logs, out } => {
            cmd_sweep(&scenario, densities, reps, seed, steps, parallel, threads, no_logs, &out.out)
        }
        Command::Analyze { log, metrics, cohort_by, window, interval, section_row, out } => {
            cmd_analyze(&log, &metrics, cohort_by, window, interval, section_row, out.as_deref())
        }
        Command::Presets => cmd_presets(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn cmd_run(path: &Path, seed: Option<u64>, steps: Option<u64>, density: Option<f64>, out: &Path) -> CmdResult {
    let mut scenario = load_scenario(path)?;
    if let Some(d) = density {
        scenario = scenario.with_density(d)?;
    }
    let seed = seed.unwrap_or(scenario.seed);
    let steps = steps.unwrap_or(scenario.steps);
    if steps < 1 {
        return Err(Failure::Validation("steps must be at least 1".into()));
    }
    let (log, summary) = scenario.run_with(seed, steps)?;
    create_dir(out)?;
    let stem = format!("{}_seed{seed}", scenario.name);
    let log_path = out.join(format!("{stem}.csv"));
    let file = fs::File::create(&log_path).map_err(|e| Failure::Runtime(format!("{}: {e}", log_path.display())))?;
    log.write_to(file)?;
    let summary_path = out.join(format!("{stem}_summary.txt"));
    let text = summary.to_key_values();
    write_file(&summary_path, &text)?;
    print!("{text}");
    eprintln!("wrote {} and {}", log_path.display(), summary_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    path: &Path,
    densities: Vec<f64>,
    reps: Option<usize>,
    seed: u64,
    steps: Option<u64>,
    parallel: bool,
    threads: usize,
    no_logs: bool,
    out: &Path,
) -> CmdResult {
    let mut spec = match path.to_str().filter(|p| PRESETS.contains(p)) {
        Some(name) => {
            let densities = if densities.is_empty() {
                vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5]
            } else {
                densities
            };
            let repetitions = match reps {
                Some(n) => Repetitions::Fixed(n),
                None => Repetitions::Adaptive { min: 3, max: 8, cv: 0.05 },
            };
            SweepSpec::new(preset_at(name, PRESET_DENSITY)?, densities, repetitions, seed)
        }
        None => {
            if !densities.is_empty() || reps.is_some() {
                return Err(Failure::Validation("--densities and --reps only apply to presets".into()));
            }
            load_sweep(path)?
        }
    };
    if let Some(s) = steps {
        spec.steps = s;
    }
    spec.validate()?;
    create_dir(out)?;
    let options = SweepOptions { parallel, threads, log_dir: (!no_logs).then(|| out.join("logs")) };
    let result = run_sweep(&spec, &options)?;
    for (id, message) in &result.failures {
        eprintln!("warning: run {id} failed: {message}");
    }
    if result.runs.is_empty() {
        return Err(Failure::Runtime("every run failed".into()));
    }
    let fd = result.fd_table();
    write_file(&out.join("fundamental_diagram.csv"), &fd)?;
    write_file(&out.join("dispersion.csv"), &result.dispersion_table())?;
    write_file(&out.join("runs.csv"), &result.runs_table())?;
    print!("{fd}");
    if let Some(c) = result.critical_density() {
        eprintln!("critical density estimate: {c} ped/m2");
    }
    eprintln!("{} runs, {} failed, tables in {}", result.runs.len(), result.failures.len(), out.display());
    Ok(())
}

fn read_log(path: &Path) -> Result<TrajectoryLog, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let mut log = TrajectoryLog::read_from(BufReader::new(file))?;
    log.normalize()?;
    Ok(log)
}

fn cmd_analyze(
    path: &Path,
    metrics: &[String],
    cohort_by: CohortKey,
    window: u64,
    interval: u64,
    section_row: Option<usize>,
    out: Option<&Path>,
) -> CmdResult {
    let selected = metrics.iter().map(|m| check_metric(m.trim())).collect::<Result<Vec<_>, _>>()?;
    if window == 0 || interval == 0 {
        return Err(Failure::Validation("window and interval must be positive".into()));
    }
    let log = read_log(path)?;
    let h = &log.header;
    let row = section_row.unwrap_or(h.rows / 2);
    if row >= h.rows {
        return Err(Failure::Validation(format!("section row {row} outside {} rows", h.rows)));
    }
    if log.is_empty() {
        eprintln!("warning: {} holds no records; tables are empty", path.display());
    }
    let tables = Tables { log: &log, cohort_by, window, interval, section: Section::row(row) };
    if let Some(dir) = out {
        create_dir(dir)?;
    }
    for metric in selected {
        let table = if log.is_empty() { tables.header(metric).to_string() } else { tables.build(metric)? };
        match out {
            Some(dir) => write_file(&dir.join(format!("{metric}.csv")), &table)?,
            None => {
                let mut stdout = io::stdout().lock();
                writeln!(stdout, "# {metric}")?;
                stdout.write_all(table.as_bytes())?;
            }
        }
    }
    Ok(())
}

struct Tables<'a> {
    log: &'a TrajectoryLog,
    cohort_by: CohortKey,
    window: u64,
    interval: u64,
    section: Section,
}

impl Tables<'_> {
    fn header(&self, metric: &str) -> &'static str {
        match metric {
            "diagram" => "window_start,density,velocity,flow,section_flow\n",
            "los" => "window_start,flow_ped_min_m,grade\n",
            "flows" => "window_start,forward,backward\n",
            "speeds" => "cohort,agents,mean_speed,sd_speed\n",
            "compare" => "cohort_a,cohort_b,mean_a,mean_b,t,df,p\n",
            "dispersion" => "group,size,samples,mean_area_cells,mean_area_m2,mean_centroid_m\n",
            "arrangements" => "size,pattern,samples,fraction\n",
            "positions" => "group,agent,step,longitudinal,lateral\n",
            other => unreachable!("unchecked metric {other}"),
        }
    }

    fn build(&self, metric: &str) -> Result<String, Failure> {
        let log = self.log;
        let mut out = String::from(self.header(metric));
        match metric {
            "diagram" => {
                let region = Rect::new(0, 0, log.header.rows - 1, log.header.cols - 1);
                for p in fundamental_diagram(log, region, Some(self.section), self.window)? {
                    let sf = p.section_flow.map(|f| format!("{f:.6}")).unwrap_or_default();
                    writeln!(out, "{},{:.6},{:.6},{:.6},{sf}", p.window_start, p.density, p.velocity, p.flow).unwrap();
                }
            }
            "los" => {
                let table = LosTable::default();
                let width = self.section.width_m(log);
                let span = self.window as f64 * log.header.frame_interval;
                for c in count_flows(log, self.section, self.window)? {
                    let f = per_minute((c.forward + c.backward) as f64 / (width * span));
                    writeln!(out, "{},{f:.4},{}", c.window_start, level_of_service(f, &table)).unwrap();
                }
            }
            "flows" => {
                for c in count_flows(log, self.section, self.window)? {
                    writeln!(out, "{},{},{}", c.window_start, c.forward, c.backward).unwrap();
                }
            }
            "speeds" => {
                for (cohort, v) in cohort_speeds(log, self.cohort_by)? {
                    let sd = if v.len() > 1 { variance(&v).sqrt() } else { 0.0 };
                    writeln!(out, "{cohort},{},{:.6},{sd:.6}", v.len(), mean(&v)).unwrap();
                }
            }
            "compare" => {
                let speeds: Vec<(String, Vec<f64>)> = cohort_speeds(log, self.cohort_by)?.into_iter().collect();
                for (i, (a, va)) in speeds.iter().enumerate() {
                    for (b, vb) in &speeds[i + 1..] {
                        match compare_means(va, vb) {
                            Ok(t) => writeln!(
                                out,
                                "{a},{b},{:.6},{:.6},{:.6},{:.3},{:.6}",
                                mean(va),
                                mean(vb),
                                t.t,
                                t.df,
                                t.p
                            )
                            .unwrap(),
                            Err(e) => eprintln!("warning: {a} vs {b} skipped: {e}"),
                        }
                    }
                }
            }
            "dispersion" => {
                for (group, members) in group_members(log) {
                    let s = dispersion_series(log, &members, self.interval)?;
                    if s.samples.is_empty() {
                        continue;
                    }
                    let col = |f: fn(&floorfield::metrics::groups::DispersionSample) -> f64| {
                        mean(&s.samples.iter().map(f).collect::<Vec<_>>())
                    };
                    writeln!(
                        out,
                        "{group},{},{},{:.6},{:.6},{:.6}",
                        members.len(),
                        s.samples.len(),
                        col(|x| x.area_cells),
                        col(|x| x.area_m2),
                        col(|x| x.centroid_m)
                    )
                    .unwrap();
                }
            }
            "arrangements" => {
                let groups = group_members(log);
                let samples = arrangement_series(log, &groups, self.interval, &ArrangementThresholds::default())?;
                let mut counts: BTreeMap<usize, BTreeMap<ArrangementPattern, usize>> = BTreeMap::new();
                for s in &samples {
                    *counts.entry(groups[&s.group].len()).or_default().entry(s.pattern).or_default() += 1;
                }
                for (size, by_pattern) in counts {
                    let total: usize = by_pattern.values().sum();
                    for pattern in ArrangementPattern::ALL {
                        let n = by_pattern.get(&pattern).copied().unwrap_or(0);
                        writeln!(out, "{size},{pattern},{n},{:.4}", n as f64 / total as f64).unwrap();
                    }
                }
            }
            "positions" => {
                let groups = group_members(log);
                for p in relative_position_map(log, &groups, self.interval)? {
                    writeln!(out, "{},{},{},{:.4},{:.4}", p.group, p.agent, p.step, p.longitudinal, p.lateral).unwrap();
                }
            }
            other => unreachable!("unchecked metric {other}"),
        }
        Ok(out)
    }
}

fn cmd_presets() -> CmdResult {
    println!("name,width_m,height_m,cols,rows,area_m2,pedestrians");
    for name in PRESETS {
        let s = preset_at(name, PRESET_DENSITY)?;
        println!(
            "{name},{:.1},{:.1},{},{},{:.2},{}",
            s.width,
            s.height,
            s.cols(),
            s.rows(),
            s.area_m2(),
            s.population()
        );
    }
    Ok(())
}
