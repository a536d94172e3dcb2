//! Trajectory logs: the shared format of simulated and observed data.
//!
//! ```text
//! # rows=50
//! # cols=6
//! # cell_size=0.4
//! # frame_interval=0.33
//! # wrap=false
//! # group=3 parent=-
//! step,agent_id,group_id,row,col,action
//! 0,0,,12,3,+
//! 1,0,,11,3,N
//! ```
//!
//! `group_id` is empty for individuals. `action` is a move symbol, `+` when
//! the agent entered the grid at that step, or `-` when unknown (observations).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::environment::CellIndex;
use crate::population::{Action, AgentId, GroupId};
use crate::{Error, Result, CELL_SIZE, STEP_SECONDS};

pub const COLUMNS: [&str; 6] = ["step", "agent_id", "group_id", "row", "col", "action"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordAction {
    Entered,
    Moved(Action),
    Unknown,
}

impl RecordAction {
    pub fn symbol(self) -> &'static str {
        match self {
            RecordAction::Entered => "+",
            RecordAction::Moved(a) => a.symbol(),
            RecordAction::Unknown => "-",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "+" => Some(RecordAction::Entered),
            "-" | "" => Some(RecordAction::Unknown),
            other => Action::from_symbol(other).map(RecordAction::Moved),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub agent_id: AgentId,
    pub group_id: Option<GroupId>,
    pub row: usize,
    pub col: usize,
    pub action: RecordAction,
}

impl TrajectoryRecord {
    pub fn cell(&self) -> CellIndex {
        CellIndex::new(self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogHeader {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    /// Seconds between consecutive `step` values.
    pub frame_interval: f64,
    pub wrap: bool,
    /// Group containment: group id to parent id.
    pub groups: BTreeMap<GroupId, Option<GroupId>>,
}

impl LogHeader {
    pub fn new(rows: usize, cols: usize) -> Self {
        LogHeader {
            rows,
            cols,
            cell_size: CELL_SIZE,
            frame_interval: STEP_SECONDS,
            wrap: false,
            groups: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub header: LogHeader,
    pub records: Vec<TrajectoryRecord>,
}

fn header_value<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line: Some(line), message: format!("bad value `{value}` for header key `{key}`") })
}

fn optional_id(s: &str) -> Option<Option<u32>> {
    match s.trim() {
        "" | "-" => Some(None),
        v => v.parse().ok().map(Some),
    }
}

impl TrajectoryLog {
    pub fn new(header: LogHeader) -> Self {
        TrajectoryLog { header, records: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        let h = &self.header;
        writeln!(out, "# rows={}", h.rows)?;
        writeln!(out, "# cols={}", h.cols)?;
        writeln!(out, "# cell_size={}", h.cell_size)?;
        writeln!(out, "# frame_interval={}", h.frame_interval)?;
        writeln!(out, "# wrap={}", h.wrap)?;
        for (g, parent) in &h.groups {
            match parent {
                Some(p) => writeln!(out, "# group={g} parent={p}")?,
                None => writeln!(out, "# group={g} parent=-")?,
            }
        }
        writeln!(out, "{}", COLUMNS.join(","))?;
        for r in &self.records {
            let group = r.group_id.map(|g| g.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{},{}", r.step, r.agent_id, group, r.row, r.col, r.action.symbol())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parses a log, checking the header schema, grid bounds and `(step, agent)` uniqueness.
    /// Records come back sorted by `(step, agent_id)`.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut header = LogHeader::new(0, 0);
        let (mut have_rows, mut have_cols) = (false, false);
        let mut records = Vec::new();
        let mut saw_columns = false;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(meta) = trimmed.strip_prefix('#') {
                if saw_columns {
                    continue;
                }
                let meta = meta.trim();
                if let Some(rest) = meta.strip_prefix("group=") {
                    let mut parts = rest.split_whitespace();
                    let g: GroupId = header_value(parts.next().unwrap_or(""), "group", lineno)?;
                    let parent =
                        parts.next().and_then(|p| p.strip_prefix("parent=")).and_then(optional_id).unwrap_or(None);
                    header.groups.insert(g, parent);
                    continue;
                }
                let Some((key, value)) = meta.split_once('=') else { continue };
                match key.trim() {
                    "rows" => {
                        header.rows = header_value(value, key, lineno)?;
                        have_rows = true;
                    }
                    "cols" => {
                        header.cols = header_value(value, key, lineno)?;
                        have_cols = true;
                    }
                    "cell_size" => header.cell_size = header_value(value, key, lineno)?,
                    "frame_interval" => header.frame_interval = header_value(value, key, lineno)?,
                    "wrap" => header.wrap = header_value(value, key, lineno)?,
                    _ => {}
                }
                continue;
            }
            if !saw_columns {
                let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
                if cols != COLUMNS {
                    return Err(Error::Parse {
                        line: Some(lineno),
                        message: format!("expected column header `{}`", COLUMNS.join(",")),
                    });
                }
                if !(have_rows && have_cols) {
                    return Err(Error::Parse {
                        line: Some(lineno),
                        message: "header must declare rows and cols".into(),
                    });
                }
                if !(header.frame_interval > 0.0) || !(header.cell_size > 0.0) {
                    return Err(Error::Parse {
                        line: Some(lineno),
                        message: "cell_size and frame_interval must be positive".into(),
                    });
                }
                saw_columns = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            let bad = |msg: &str| Error::Parse { line: Some(lineno), message: msg.to_string() };
            if fields.len() != COLUMNS.len() {
                return Err(bad("wrong number of fields"));
            }
            let record = TrajectoryRecord {
                step: fields[0].trim().parse().map_err(|_| bad("bad step"))?,
                agent_id: fields[1].trim().parse().map_err(|_| bad("bad agent_id"))?,
                group_id: optional_id(fields[2]).ok_or_else(|| bad("bad group_id"))?,
                row: fields[3].trim().parse().map_err(|_| bad("bad row"))?,
                col: fields[4].trim().parse().map_err(|_| bad("bad col"))?,
                action: RecordAction::parse(fields[5].trim()).ok_or_else(|| bad("bad action"))?,
            };
            if record.row >= header.rows || record.col >= header.cols {
                return Err(bad("cell outside the declared grid"));
            }
            records.push(record);
        }
        if !saw_columns {
            return Err(Error::Parse { line: None, message: "missing column header".into() });
        }
        let mut log = TrajectoryLog { header, records };
        log.normalize()?;
        Ok(log)
    }

    /// Sorts by `(step, agent_id)` and rejects duplicates.
    pub fn normalize(&mut self) -> Result<()> {
        self.records.sort_by_key(|r| (r.step, r.agent_id));
        for w in self.records.windows(2) {
            if w[0].step == w[1].step && w[0].agent_id == w[1].agent_id {
                return Err(Error::Data {
                    step: w[0].step,
                    message: format!("agent {} recorded twice", w[0].agent_id),
                });
            }
        }
        Ok(())
    }

    /// Records of each agent in step order.
    pub fn by_agent(&self) -> BTreeMap<AgentId, Vec<TrajectoryRecord>> {
        let mut out: BTreeMap<AgentId, Vec<TrajectoryRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.agent_id).or_default().push(*r);
        }
        for v in out.values_mut() {
            v.sort_by_key(|r| r.step);
        }
        out
    }

    /// Direct group of each agent (last one seen).
    pub fn agent_groups(&self) -> BTreeMap<AgentId, Option<GroupId>> {
        self.records.iter().map(|r| (r.agent_id, r.group_id)).collect()
    }

    /// Number of distinct agents directly in each group.
    pub fn group_sizes(&self) -> BTreeMap<GroupId, usize> {
        let mut members: BTreeMap<GroupId, std::collections::BTreeSet<AgentId>> = BTreeMap::new();
        for r in &self.records {
            if let Some(g) = r.group_id {
                members.entry(g).or_default().insert(r.agent_id);
            }
        }
        members.into_iter().map(|(g, m)| (g, m.len())).collect()
    }

    /// `(first, last)` step, `None` when empty.
    pub fn step_range(&self) -> Option<(u64, u64)> {
        let first = self.records.iter().map(|r| r.step).min()?;
        let last = self.records.iter().map(|r| r.step).max()?;
        Some((first, last))
    }

    /// Records grouped per step, in step order.
    pub fn by_step(&self) -> BTreeMap<u64, Vec<TrajectoryRecord>> {
        let mut out: BTreeMap<u64, Vec<TrajectoryRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.step).or_default().push(*r);
        }
        out
    }
}

/// Splits one agent's step-ordered records into continuous passes: a new
/// pass starts at an entry record or after a gap in steps.
pub fn segments(records: &[TrajectoryRecord]) -> Vec<&[TrajectoryRecord]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..records.len() {
        let gap = records[i].step != records[i - 1].step + 1;
        if gap || records[i].action == RecordAction::Entered {
            out.push(&records[start..i]);
            start = i;
        }
    }
    if !records.is_empty() {
        out.push(&records[start..]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, agent: AgentId, row: usize, action: RecordAction) -> TrajectoryRecord {
        TrajectoryRecord { step, agent_id: agent, group_id: Some(4), row, col: 1, action }
    }

    #[test]
    fn write_then_read() {
        let mut header = LogHeader::new(10, 3);
        header.groups.insert(4, None);
        let mut log = TrajectoryLog::new(header);
        log.records.push(rec(0, 0, 5, RecordAction::Entered));
        log.records.push(rec(1, 0, 4, RecordAction::Moved(Action::N)));
        log.records.push(TrajectoryRecord { group_id: None, ..rec(1, 1, 2, RecordAction::Unknown) });
        let mut buf = Vec::new();
        log.write_to(&mut buf).unwrap();
        let back = TrajectoryLog::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn rejects_bad_logs() {
        let no_dims = "step,agent_id,group_id,row,col,action\n";
        assert!(matches!(TrajectoryLog::read_from(no_dims.as_bytes()), Err(Error::Parse { .. })));
        let out_of_grid = "# rows=2\n# cols=2\nstep,agent_id,group_id,row,col,action\n0,1,,5,0,X\n";
        match TrajectoryLog::read_from(out_of_grid.as_bytes()) {
            Err(Error::Parse { line: Some(4), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let dup = "# rows=2\n# cols=2\nstep,agent_id,group_id,row,col,action\n0,1,,0,0,X\n0,1,,1,0,X\n";
        assert!(matches!(TrajectoryLog::read_from(dup.as_bytes()), Err(Error::Data { .. })));
    }

    #[test]
    fn segments_split_on_entry_and_gaps() {
        let recs = vec![
            rec(0, 0, 5, RecordAction::Entered),
            rec(1, 0, 4, RecordAction::Moved(Action::N)),
            rec(2, 0, 9, RecordAction::Entered),
            rec(3, 0, 8, RecordAction::Moved(Action::N)),
            rec(7, 0, 8, RecordAction::Unknown),
        ];
        let segs = segments(&recs);
        assert_eq!(segs.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![2, 2, 1]);
    }
}
