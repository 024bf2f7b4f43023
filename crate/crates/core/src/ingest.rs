//! Log ingestion: parse raw text logs, map each line onto a template by
//! masking variable tokens, and aggregate templates into per-second count
//! vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Marker substituted for variable tokens inside a template pattern.
pub const WILDCARD: &str = "<*>";

/// A single parsed log record. The timestamp prefix has already been
/// stripped from `message`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogEvent {
    pub timestamp: f64,
    pub message: String,
    pub source: Option<String>,
}

impl LogEvent {
    pub fn new(timestamp: f64, message: impl Into<String>, source: Option<String>) -> Result<Self> {
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(Error::RejectedInput(format!(
                "timestamp {timestamp} is not a finite non-negative number"
            )));
        }
        let message = message.into();
        if message.trim().is_empty() {
            return Err(Error::RejectedInput("empty log message".into()));
        }
        Ok(LogEvent {
            timestamp,
            message,
            source,
        })
    }
}

/// Ordered template store. Ids are dense and assigned in first-seen order;
/// looking the same masked line up twice always yields the same id.
#[derive(Clone, Debug, Default)]
pub struct TemplateCatalog {
    patterns: Vec<String>,
    index: HashMap<String, usize>,
}

impl TemplateCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn pattern(&self, id: usize) -> Option<&str> {
        self.patterns.get(id).map(|s| s.as_str())
    }

    /// Mask variable tokens in `line` and return the id of the resulting
    /// pattern, registering a new template on first sight.
    pub fn templatize(&mut self, line: &str) -> Result<usize> {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            return Err(Error::RejectedInput("cannot templatize an empty line".into()));
        }
        let pattern = mask_line(trimmed);
        if let Some(&id) = self.index.get(&pattern) {
            return Ok(id);
        }
        let id = self.patterns.len();
        self.index.insert(pattern.clone(), id);
        self.patterns.push(pattern);
        Ok(id)
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, pattern) in self.patterns.iter().enumerate() {
            writeln!(w, "{id}\t{pattern}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut catalog = TemplateCatalog::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<catalog>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (id_str, pattern) = line.split_once('\t').ok_or_else(|| {
                Error::FormatMismatch(format!("catalog line {} lacks a tab", n + 1))
            })?;
            let id: usize = id_str.parse().map_err(|_| {
                Error::FormatMismatch(format!("catalog line {} has a bad id", n + 1))
            })?;
            if id != catalog.patterns.len() {
                return Err(Error::FormatMismatch(format!(
                    "catalog ids must be dense and ascending; saw {id} at position {}",
                    catalog.patterns.len()
                )));
            }
            if catalog.index.contains_key(pattern) {
                return Err(Error::FormatMismatch(format!(
                    "duplicate catalog pattern: {pattern}"
                )));
            }
            catalog.index.insert(pattern.to_string(), id);
            catalog.patterns.push(pattern.to_string());
        }
        Ok(catalog)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.write_tsv(&mut f)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_tsv(BufReader::new(f))
    }
}

fn mask_line(line: &str) -> String {
    line.split_whitespace()
        .map(|tok| if is_variable_token(tok) { WILDCARD } else { tok })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Variable-token rules: decimal numbers, hex strings of at least 4 chars,
/// IPv4 addresses (with optional :port), UUIDs, `blk_`-prefixed block ids
/// and path-like tokens containing `/`.
fn is_variable_token(tok: &str) -> bool {
    if tok == WILDCARD {
        return false;
    }
    tok.contains('/')
        || tok.starts_with("blk_")
        || is_decimal(tok)
        || is_ipv4(tok)
        || is_uuid(tok)
        || is_hexish(tok)
}

fn is_decimal(tok: &str) -> bool {
    let body = tok.strip_prefix(['+', '-']).unwrap_or(tok);
    if body.is_empty() {
        return false;
    }
    let mut digits = 0;
    let mut dots = 0;
    for c in body.chars() {
        match c {
            '0'..='9' => digits += 1,
            '.' => dots += 1,
            _ => return false,
        }
    }
    digits > 0 && dots <= 1
}

fn is_ipv4(tok: &str) -> bool {
    let (addr, port) = match tok.split_once(':') {
        Some((a, p)) => (a, Some(p)),
        None => (tok, None),
    };
    if let Some(p) = port {
        if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
    }
    let octets: Vec<&str> = addr.split('.').collect();
    octets.len() == 4
        && octets.iter().all(|o| {
            !o.is_empty()
                && o.len() <= 3
                && o.bytes().all(|b| b.is_ascii_digit())
                && o.parse::<u16>().map(|v| v <= 255).unwrap_or(false)
        })
}

fn is_uuid(tok: &str) -> bool {
    let groups: Vec<&str> = tok.split('-').collect();
    groups.len() == 5
        && [8, 4, 4, 4, 12]
            .iter()
            .zip(&groups)
            .all(|(&len, g)| g.len() == len && g.bytes().all(|b| b.is_ascii_hexdigit()))
}

fn is_hexish(tok: &str) -> bool {
    if tok.len() < 4 {
        return false;
    }
    let body = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X"));
    match body {
        Some(b) => !b.is_empty() && b.bytes().all(|c| c.is_ascii_hexdigit()),
        None => tok.bytes().all(|c| c.is_ascii_hexdigit()),
    }
}

/// Supported timestamp prefixes, selected by config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimestampFormat {
    /// Leading epoch seconds as a float: `1700000000.250 message`
    EpochFloat,
    /// `YYYY-MM-DD HH:MM:SS[.fff] message`
    DateTime,
    /// HDFS-style `DDMMYY HHMMSS message`
    Hdfs,
}

impl TimestampFormat {
    pub fn parse_name(name: &str) -> Result<Self> {
        match name {
            "epoch" => Ok(TimestampFormat::EpochFloat),
            "datetime" => Ok(TimestampFormat::DateTime),
            "hdfs" => Ok(TimestampFormat::Hdfs),
            other => Err(Error::InvalidParameter(format!(
                "unknown timestamp format {other:?} (expected epoch, datetime or hdfs)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TimestampFormat::EpochFloat => "epoch",
            TimestampFormat::DateTime => "datetime",
            TimestampFormat::Hdfs => "hdfs",
        }
    }

    /// Split one raw line into (timestamp seconds, message). None when the
    /// line does not carry a parseable prefix.
    fn extract<'a>(&self, line: &'a str) -> Option<(f64, &'a str)> {
        match self {
            TimestampFormat::EpochFloat => {
                let mut parts = line.splitn(2, char::is_whitespace);
                let ts: f64 = parts.next()?.parse().ok()?;
                if !ts.is_finite() || ts < 0.0 {
                    return None;
                }
                Some((ts, parts.next().unwrap_or("")))
            }
            TimestampFormat::DateTime => {
                let mut parts = line.splitn(3, char::is_whitespace);
                let date = parts.next()?;
                let time = parts.next()?;
                let rest = parts.next().unwrap_or("");
                let ts = parse_date_time(date, time)?;
                Some((ts, rest))
            }
            TimestampFormat::Hdfs => {
                let mut parts = line.splitn(3, char::is_whitespace);
                let date = parts.next()?;
                let time = parts.next()?;
                let rest = parts.next().unwrap_or("");
                let ts = parse_hdfs_stamp(date, time)?;
                Some((ts, rest))
            }
        }
    }
}

fn parse_date_time(date: &str, time: &str) -> Option<f64> {
    let date_parts: Vec<&str> = date.split('-').collect();
    if date_parts.len() != 3 {
        return None;
    }
    let year: i64 = date_parts[0].parse().ok()?;
    let month: u32 = date_parts[1].parse().ok()?;
    let day: u32 = date_parts[2].parse().ok()?;

    let (hms, frac) = match time.split_once('.') {
        Some((h, f)) => (h, Some(f)),
        None => (time, None),
    };
    let time_parts: Vec<&str> = hms.split(':').collect();
    if time_parts.len() != 3 {
        return None;
    }
    let hour: u32 = time_parts[0].parse().ok()?;
    let minute: u32 = time_parts[1].parse().ok()?;
    let second: u32 = time_parts[2].parse().ok()?;
    let frac = match frac {
        Some(f) if !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()) => {
            format!("0.{f}").parse::<f64>().ok()?
        }
        Some(_) => return None,
        None => 0.0,
    };
    civil_to_epoch(year, month, day, hour, minute, second).map(|e| e as f64 + frac)
}

fn parse_hdfs_stamp(date: &str, time: &str) -> Option<f64> {
    if date.len() != 6 || time.len() != 6 {
        return None;
    }
    if !date.bytes().all(|b| b.is_ascii_digit()) || !time.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // DDMMYY, two-digit year mapped to 2000-2099.
    let day: u32 = date[0..2].parse().ok()?;
    let month: u32 = date[2..4].parse().ok()?;
    let year: i64 = 2000 + date[4..6].parse::<i64>().ok()?;
    let hour: u32 = time[0..2].parse().ok()?;
    let minute: u32 = time[2..4].parse().ok()?;
    let second: u32 = time[4..6].parse().ok()?;
    civil_to_epoch(year, month, day, hour, minute, second).map(|e| e as f64)
}

/// Days-from-civil epoch conversion (proleptic Gregorian, no leap seconds).
fn civil_to_epoch(year: i64, month: u32, day: u32, hour: u32, minute: u32, second: u32) -> Option<i64> {
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return None;
    }
    if hour > 23 || minute > 59 || second > 59 {
        return None;
    }
    let y = if month <= 2 { year - 1 } else { year };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = ((month + 9) % 12) as i64;
    let doy = (153 * mp + 2) / 5 + day as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    let days = era * 146097 + doe - 719468;
    Some(days * 86400 + hour as i64 * 3600 + minute as i64 * 60 + second as i64)
}

/// Outcome counters for one parsed file.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct ParseReport {
    pub total_lines: usize,
    pub parsed: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct ParsedLog {
    pub events: Vec<LogEvent>,
    pub report: ParseReport,
}

/// Parse every line of a reader. Unparseable lines are counted and skipped;
/// blank lines are ignored entirely (continuation noise in real corpora).
/// More than 50% unparseable lines is treated as a format mismatch.
pub fn parse_lines<R: BufRead>(reader: R, format: TimestampFormat) -> Result<ParsedLog> {
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<log input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.total_lines += 1;
        match format.extract(&line) {
            Some((ts, message)) if !message.trim().is_empty() => {
                events.push(LogEvent {
                    timestamp: ts,
                    message: message.to_string(),
                    source: None,
                });
                report.parsed += 1;
            }
            _ => report.skipped += 1,
        }
    }
    if report.skipped * 2 > report.total_lines {
        return Err(Error::FormatMismatch(format!(
            "{} of {} lines unparseable as {:?}",
            report.skipped, report.total_lines, format
        )));
    }
    Ok(ParsedLog { events, report })
}

pub fn parse_log_file(path: &Path, format: TimestampFormat) -> Result<ParsedLog> {
    let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_lines(BufReader::new(f), format)
}

/// Per-second template-count matrix. Rows cover a contiguous range of epoch
/// seconds starting at `start_epoch`; seconds without events are explicit
/// all-zero rows. Column j counts template id j.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowMatrix {
    pub start_epoch: i64,
    num_templates: usize,
    counts: Vec<u32>,
}

/// Fixed windowing granularity used throughout the pipeline.
pub const WINDOW_SECONDS: u64 = 1;

impl WindowMatrix {
    pub fn rows(&self) -> usize {
        self.counts.len().checked_div(self.num_templates).unwrap_or(0)
    }

    pub fn num_templates(&self) -> usize {
        self.num_templates
    }

    pub fn count(&self, row: usize, template: usize) -> u32 {
        self.counts[row * self.num_templates + template]
    }

    pub fn row(&self, row: usize) -> &[u32] {
        &self.counts[row * self.num_templates..(row + 1) * self.num_templates]
    }

    pub fn row_f64(&self, row: usize) -> Vec<f64> {
        self.row(row).iter().map(|&c| c as f64).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Epoch second of a row.
    pub fn epoch_of(&self, row: usize) -> i64 {
        self.start_epoch + row as i64
    }

    /// Select a contiguous row slice as a new matrix (used for the
    /// fit/hold-out split during training).
    pub fn slice_rows(&self, from: usize, to: usize) -> WindowMatrix {
        WindowMatrix {
            start_epoch: self.start_epoch + from as i64,
            num_templates: self.num_templates,
            counts: self.counts[from * self.num_templates..to * self.num_templates].to_vec(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.num_templates).map(|id| id.to_string()).collect();
        writeln!(w, "window_start_epoch,{}", header.join(","))?;
        for r in 0..self.rows() {
            let cells: Vec<String> = self.row(r).iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{}", self.epoch_of(r), cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::EmptyInput("window matrix csv is empty".into()))?
            .map_err(|e| Error::io("<window csv>", e))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"window_start_epoch") {
            return Err(Error::FormatMismatch(
                "window matrix header missing window_start_epoch".into(),
            ));
        }
        let num_templates = cols.len() - 1;
        for (i, c) in cols[1..].iter().enumerate() {
            if c.parse::<usize>() != Ok(i) {
                return Err(Error::FormatMismatch(format!(
                    "window matrix template columns must be dense ids; saw {c:?}"
                )));
            }
        }
        let mut start_epoch = None;
        let mut expected_epoch = 0i64;
        let mut counts = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<window csv>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let epoch: i64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::FormatMismatch(format!("bad epoch on row {}", n + 1)))?;
            match start_epoch {
                None => {
                    start_epoch = Some(epoch);
                    expected_epoch = epoch;
                }
                Some(_) if epoch != expected_epoch => {
                    return Err(Error::FormatMismatch(format!(
                        "window rows not contiguous at epoch {epoch}"
                    )));
                }
                _ => {}
            }
            expected_epoch += 1;
            let mut row_count = 0;
            for f in fields {
                let c: u32 = f.parse().map_err(|_| {
                    Error::FormatMismatch(format!("bad count {f:?} on row {}", n + 1))
                })?;
                counts.push(c);
                row_count += 1;
            }
            if row_count != num_templates {
                return Err(Error::Shape(format!(
                    "row {} has {row_count} counts, expected {num_templates}",
                    n + 1
                )));
            }
        }
        let start_epoch =
            start_epoch.ok_or_else(|| Error::EmptyInput("window matrix has no rows".into()))?;
        Ok(WindowMatrix {
            start_epoch,
            num_templates,
            counts,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.write_csv(&mut f)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read_csv(BufReader::new(f))
    }
}

/// Aggregate events into the per-second count matrix. The catalog is grown
/// by any template not yet seen; column order is the catalog id order after
/// templatization.
pub fn window_counts(events: &[LogEvent], catalog: &mut TemplateCatalog) -> Result<WindowMatrix> {
    if events.is_empty() {
        return Err(Error::EmptyInput("no events to window".into()));
    }
    let mut stamped: Vec<(i64, usize)> = Vec::with_capacity(events.len());
    for ev in events {
        let id = catalog.templatize(&ev.message)?;
        stamped.push((ev.timestamp.floor() as i64, id));
    }
    let start = stamped.iter().map(|&(s, _)| s).min().unwrap();
    let end = stamped.iter().map(|&(s, _)| s).max().unwrap();
    let rows = (end - start + 1) as usize;
    let num_templates = catalog.len();
    let mut counts = vec![0u32; rows * num_templates];
    for (second, id) in stamped {
        counts[(second - start) as usize * num_templates + id] += 1;
    }
    Ok(WindowMatrix {
        start_epoch: start,
        num_templates,
        counts,
    })
}
