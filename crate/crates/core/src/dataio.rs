//! Long-format choice datasets.
//!
//! Events file, one row per offered alternative:
//!
//! ```text
//! event_id,alt_index,available,chosen,x_1,...,x_{d_x}
//! ```
//!
//! Optional customers file, one row per event:
//!
//! ```text
//! event_id,z_1,...,z_{d_z}
//! ```
//!
//! Rows of one event are contiguous, `alt_index` counts from 0, and exactly
//! one row per event has `chosen = 1` (and `available = 1`). Empty feature
//! cells load as `-1`, the missing-value marker. Files are UTF-8, comma
//! separated, LF-terminated, with floats written in their shortest
//! round-trip form.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{DataIssue, Error, Result};
use crate::models::ChoiceEvent;

/// Value substituted for empty numeric cells.
pub const MISSING_VALUE: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d_x: usize,
    d_z: usize,
    events: Vec<ChoiceEvent>,
}

/// Summary of a dataset's dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetSchema {
    pub d_x: usize,
    pub d_z: usize,
    pub kappa_max: usize,
    pub n_events: usize,
}

impl Dataset {
    pub fn new(d_x: usize, d_z: usize, events: Vec<ChoiceEvent>) -> Result<Self> {
        for e in &events {
            e.validate()?;
            if e.d_x() != d_x {
                return Err(Error::dim("product features", d_x, e.d_x()));
            }
            if e.d_z() != d_z {
                return Err(Error::dim("customer features", d_z, e.d_z()));
            }
        }
        Ok(Dataset { d_x, d_z, events })
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn events(&self) -> &[ChoiceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            d_x: self.d_x,
            d_z: self.d_z,
            kappa_max: self
                .events
                .iter()
                .map(ChoiceEvent::num_alternatives)
                .max()
                .unwrap_or(0),
            n_events: self.events.len(),
        }
    }

    /// Events at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            d_x: self.d_x,
            d_z: self.d_z,
            events: indices.iter().map(|&i| self.events[i].clone()).collect(),
        }
    }
}

fn data_err(path: &Path, line: u64, issue: DataIssue) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        line,
        issue,
    }
}

fn parse_feature(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(MISSING_VALUE);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(data_err(
            path,
            line,
            DataIssue::BadValue {
                column: column.to_string(),
                value: cell.to_string(),
            },
        )),
    }
}

fn parse_flag(path: &Path, line: u64, column: &str, cell: &str) -> Result<bool> {
    match cell.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(data_err(
            path,
            line,
            DataIssue::BadValue {
                column: column.to_string(),
                value: other.to_string(),
            },
        )),
    }
}

fn check_header(path: &Path, header: &csv::StringRecord, fixed: &[&str], prefix: &str) -> Result<usize> {
    let bad = |msg: String| data_err(path, 1, DataIssue::BadHeader(msg));
    if header.len() < fixed.len() {
        return Err(bad(format!("expected leading columns {}", fixed.join(","))));
    }
    for (i, name) in fixed.iter().enumerate() {
        if header[i].trim() != *name {
            return Err(bad(format!("column {} is `{}`, expected `{}`", i + 1, &header[i], name)));
        }
    }
    for (j, col) in header.iter().skip(fixed.len()).enumerate() {
        let expected = format!("{prefix}{}", j + 1);
        if col.trim() != expected {
            return Err(bad(format!("feature column `{col}`, expected `{expected}`")));
        }
    }
    Ok(header.len() - fixed.len())
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

struct PendingEvent {
    id: String,
    first_line: u64,
    products: Vec<Vec<f64>>,
    available: Vec<bool>,
    chosen: Option<usize>,
}

impl PendingEvent {
    fn finish(self, path: &Path) -> Result<(String, ChoiceEvent)> {
        let chosen = self
            .chosen
            .ok_or_else(|| data_err(path, self.first_line, DataIssue::NoChosen { event_id: self.id.clone() }))?;
        let event = ChoiceEvent {
            customer: Vec::new(),
            products: self.products,
            available: self.available,
            chosen,
        };
        Ok((self.id, event))
    }
}

/// Loads and validates a long-format dataset. Without a customers file the
/// events carry no customer features (`d_z = 0`).
pub fn load_long_csv(events_path: &Path, customers_path: Option<&Path>) -> Result<Dataset> {
    let mut rdr = reader(events_path)?;
    let header = rdr.headers()?.clone();
    let d_x = check_header(events_path, &header, &["event_id", "alt_index", "available", "chosen"], "x_")?;
    let width = header.len();

    let mut ids: Vec<String> = Vec::new();
    let mut events: Vec<ChoiceEvent> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut current: Option<PendingEvent> = None;

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(data_err(
                events_path,
                line,
                DataIssue::RaggedRow {
                    expected: width,
                    actual: record.len(),
                },
            ));
        }
        let id = record[0].trim().to_string();
        if current.as_ref().is_none_or(|c| c.id != id) {
            if let Some(done) = current.take() {
                let (done_id, event) = done.finish(events_path)?;
                seen.insert(done_id.clone(), ids.len());
                ids.push(done_id);
                events.push(event);
            }
            if seen.contains_key(&id) {
                return Err(data_err(events_path, line, DataIssue::SplitEvent { event_id: id }));
            }
            current = Some(PendingEvent {
                id: id.clone(),
                first_line: line,
                products: Vec::new(),
                available: Vec::new(),
                chosen: None,
            });
        }
        let ev = current.as_mut().expect("current event");
        let alt: usize = record[1].trim().parse().map_err(|_| {
            data_err(
                events_path,
                line,
                DataIssue::BadValue {
                    column: "alt_index".into(),
                    value: record[1].to_string(),
                },
            )
        })?;
        if alt != ev.products.len() {
            return Err(data_err(
                events_path,
                line,
                DataIssue::NonContiguousAlternative {
                    event_id: id,
                    expected: ev.products.len(),
                    found: alt,
                },
            ));
        }
        let available = parse_flag(events_path, line, "available", &record[2])?;
        let chosen = parse_flag(events_path, line, "chosen", &record[3])?;
        if chosen {
            if ev.chosen.is_some() {
                return Err(data_err(events_path, line, DataIssue::DuplicateChosen { event_id: id }));
            }
            if !available {
                return Err(data_err(events_path, line, DataIssue::ChosenUnavailable { event_id: id }));
            }
            ev.chosen = Some(alt);
        }
        let features = (0..d_x)
            .map(|j| parse_feature(events_path, line, &header[4 + j], &record[4 + j]))
            .collect::<Result<Vec<_>>>()?;
        ev.products.push(features);
        ev.available.push(available);
    }
    if let Some(done) = current.take() {
        let (done_id, event) = done.finish(events_path)?;
        seen.insert(done_id.clone(), ids.len());
        ids.push(done_id);
        events.push(event);
    }
    if events.is_empty() {
        return Err(data_err(events_path, 1, DataIssue::Empty));
    }

    let d_z = match customers_path {
        None => 0,
        Some(cpath) => {
            let mut rdr = reader(cpath)?;
            let header = rdr.headers()?.clone();
            let d_z = check_header(cpath, &header, &["event_id"], "z_")?;
            let mut filled = vec![false; events.len()];
            for record in rdr.records() {
                let record = record?;
                let line = record.position().map_or(0, |p| p.line());
                if record.len() != header.len() {
                    return Err(data_err(
                        cpath,
                        line,
                        DataIssue::RaggedRow {
                            expected: header.len(),
                            actual: record.len(),
                        },
                    ));
                }
                let id = record[0].trim().to_string();
                let idx = *seen
                    .get(&id)
                    .ok_or_else(|| data_err(cpath, line, DataIssue::UnknownCustomer { event_id: id.clone() }))?;
                if filled[idx] {
                    return Err(data_err(cpath, line, DataIssue::DuplicateCustomer { event_id: id }));
                }
                filled[idx] = true;
                events[idx].customer = (0..d_z)
                    .map(|j| parse_feature(cpath, line, &header[1 + j], &record[1 + j]))
                    .collect::<Result<Vec<_>>>()?;
            }
            if let Some(missing) = filled.iter().position(|&f| !f) {
                return Err(data_err(
                    cpath,
                    0,
                    DataIssue::MissingCustomer {
                        event_id: ids[missing].clone(),
                    },
                ));
            }
            d_z
        }
    };
    Dataset::new(d_x, d_z, events)
}

/// Writes `dataset` in long format with `event_id` = position in the
/// dataset. The customers file is only written when `d_z > 0`; returns the
/// paths actually written.
pub fn save_long_csv(dataset: &Dataset, events_path: &Path, customers_path: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut out = String::new();
    out.push_str("event_id,alt_index,available,chosen");
    for j in 1..=dataset.d_x {
        write!(out, ",x_{j}").unwrap();
    }
    out.push('\n');
    for (t, e) in dataset.events.iter().enumerate() {
        for (i, x) in e.products.iter().enumerate() {
            write!(
                out,
                "{t},{i},{},{}",
                u8::from(e.available[i]),
                u8::from(i == e.chosen)
            )
            .unwrap();
            for v in x {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
    }
    fs::write(events_path, out).map_err(|e| Error::io(events_path, e))?;
    let mut written = vec![events_path.to_path_buf()];

    if dataset.d_z > 0 {
        let cpath = customers_path.ok_or_else(|| {
            Error::InvalidArgument("dataset has customer features but no customers path was given".into())
        })?;
        let mut out = String::new();
        out.push_str("event_id");
        for j in 1..=dataset.d_z {
            write!(out, ",z_{j}").unwrap();
        }
        out.push('\n');
        for (t, e) in dataset.events.iter().enumerate() {
            write!(out, "{t}").unwrap();
            for v in &e.customer {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
        fs::write(cpath, out).map_err(|e| Error::io(cpath, e))?;
        written.push(cpath.to_path_buf());
    }
    Ok(written)
}

/// Name of the column collecting infrequent categories.
pub const RARE_COLUMN: &str = "RARE";

/// One-hot encoding of a categorical column.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHot {
    pub columns: Vec<String>,
    /// One row per input label, one entry per column.
    pub rows: Vec<Vec<f64>>,
}

/// One column per label seen at least `min_count` times (sorted by label),
/// plus a single `RARE` column shared by all less frequent labels when any
/// exist.
pub fn one_hot<S: AsRef<str>>(labels: &[S], min_count: usize) -> OneHot {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    let kept: Vec<&str> = counts
        .iter()
        .filter(|(_, &c)| c >= min_count)
        .map(|(&l, _)| l)
        .collect();
    let has_rare = kept.len() < counts.len();
    let mut columns: Vec<String> = kept.iter().map(|s| s.to_string()).collect();
    if has_rare {
        columns.push(RARE_COLUMN.to_string());
    }
    let index: HashMap<&str, usize> = kept.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let rows = labels
        .iter()
        .map(|l| {
            let mut row = vec![0.0; columns.len()];
            let col = index.get(l.as_ref()).copied().unwrap_or(kept.len());
            row[col] = 1.0;
            row
        })
        .collect();
    OneHot { columns, rows }
}
