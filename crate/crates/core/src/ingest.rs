//! CSV datasets: a header `t,link_0,...,link_{L-1}` and one row per bin with
//! the bin start time in seconds. Empty cells mark missing measurements.
//! Gzip-compressed files are detected by their magic bytes.

use std::io::Read;
use std::path::Path;

use flate2::read::MultiGzDecoder;

use crate::{Error, Result, Topology, TrafficDataset};

const DEFAULT_BIN_DURATION_S: f64 = 300.0;

/// Parsed CSV before cleaning: times plus possibly-missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTraffic {
    pub topology: Topology,
    pub times: Vec<f64>,
    /// Row-major `rows × L`.
    pub cells: Vec<Option<u32>>,
}

impl RawTraffic {
    pub fn from_dataset(dataset: &TrafficDataset) -> Self {
        Self {
            topology: dataset.topology().clone(),
            times: (0..dataset.num_bins())
                .map(|t| t as f64 * dataset.bin_duration_s())
                .collect(),
            cells: dataset.values().iter().map(|&v| Some(v)).collect(),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.times.len()
    }

    /// Smallest positive spacing between consecutive rows.
    pub fn bin_step(&self) -> Option<f64> {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .min_by(f64::total_cmp)
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut text = String::new();
    if bytes.starts_with(&[0x1f, 0x8b]) {
        MultiGzDecoder::new(&bytes[..]).read_to_string(&mut text)?;
    } else {
        text = String::from_utf8(bytes).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "file is not UTF-8".into(),
        })?;
    }
    Ok(text)
}

pub fn parse_csv(text: &str, topology: Topology, origin: &Path) -> Result<RawTraffic> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let links = topology.num_links();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| err(1, e.to_string()))?
        .clone();
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((0..links).map(|l| format!("link_{l}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(err(
            1,
            format!("header must be t,link_0,...,link_{} for {links} links", links.saturating_sub(1)),
        ));
    }
    let mut times = Vec::new();
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != links + 1 {
            return Err(err(line, format!("expected {} columns, found {}", links + 1, record.len())));
        }
        let t: f64 = record[0]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| err(line, format!("bad time {:?}", &record[0])))?;
        if times.last().is_some_and(|&prev| t <= prev) {
            return Err(err(line, format!("time {t} does not increase")));
        }
        times.push(t);
        for (col, cell) in record.iter().enumerate().skip(1) {
            if cell.is_empty() {
                cells.push(None);
                continue;
            }
            if cell.starts_with('-') {
                return Err(err(line, format!("negative value {cell} in column link_{}", col - 1)));
            }
            let v: u32 = cell
                .parse()
                .map_err(|_| err(line, format!("bad value {cell:?} in column link_{}", col - 1)))?;
            cells.push(Some(v));
        }
    }
    if times.is_empty() {
        return Err(err(2, "no data rows".into()));
    }
    Ok(RawTraffic {
        topology,
        times,
        cells,
    })
}

pub fn load_raw_csv(path: &Path, topology: Topology) -> Result<RawTraffic> {
    parse_csv(&read_text(path)?, topology, path)
}

/// Loads a complete dataset; files with missing cells or missing bins must
/// go through [`load_raw_csv`] and [`clean`].
pub fn load_csv(path: &Path, topology_path: &Path) -> Result<TrafficDataset> {
    let topology = Topology::load(topology_path)?;
    let raw = load_raw_csv(path, topology)?;
    let (dataset, report) = clean(&raw, CleanPolicy::DropBinsWithGaps)?;
    if !report.is_empty() {
        return Err(Error::Dataset(format!(
            "{} has gaps ({} incomplete rows, {} missing bins); clean it first",
            path.display(),
            report.removed_rows.len(),
            report.missing_bins.len()
        )));
    }
    Ok(dataset)
}

pub fn to_csv(dataset: &TrafficDataset) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("t".to_string()).chain((0..dataset.num_links()).map(|l| format!("link_{l}")));
    writer.write_record(header).expect("in-memory write");
    for (t, row) in dataset.rows().enumerate() {
        let time = t as f64 * dataset.bin_duration_s();
        let record = std::iter::once(format!("{time}")).chain(row.iter().map(u32::to_string));
        writer.write_record(record).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn save_csv(dataset: &TrafficDataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(dataset))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CleanPolicy {
    #[default]
    DropBinsWithGaps,
    FillPrevious,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CleanReport {
    /// Input rows dropped for missing cells.
    pub removed_rows: Vec<usize>,
    /// Input rows whose missing cells were copied from the previous bin.
    pub filled_rows: Vec<usize>,
    /// Times absent from the regular grid (inserted when filling).
    pub missing_bins: Vec<f64>,
}

impl CleanReport {
    pub fn is_empty(&self) -> bool {
        self.removed_rows.is_empty() && self.filled_rows.is_empty() && self.missing_bins.is_empty()
    }
}

/// Removes or repairs incomplete rows and bins missing from the time grid.
/// Filling needs a previous complete bin; leading gaps are dropped.
pub fn clean(raw: &RawTraffic, policy: CleanPolicy) -> Result<(TrafficDataset, CleanReport)> {
    let links = raw.topology.num_links();
    let step = raw.bin_step();
    let mut report = CleanReport::default();
    let mut values: Vec<u32> = Vec::with_capacity(raw.cells.len());
    let mut prev: Option<Vec<u32>> = None;
    for (r, cells) in raw.cells.chunks_exact(links).enumerate() {
        if let (Some(step), Some(&before)) = (step, r.checked_sub(1).map(|i| &raw.times[i])) {
            let missing = ((raw.times[r] - before) / step).round() as usize;
            for k in 1..missing {
                let t = before + k as f64 * step;
                report.missing_bins.push(t);
                if let (CleanPolicy::FillPrevious, Some(p)) = (policy, &prev) {
                    values.extend_from_slice(p);
                }
            }
        }
        let complete = cells.iter().all(Option::is_some);
        let row: Option<Vec<u32>> = match (complete, policy, &prev) {
            (true, _, _) => Some(cells.iter().map(|c| c.unwrap()).collect()),
            (false, CleanPolicy::FillPrevious, Some(p)) => {
                report.filled_rows.push(r);
                Some(cells.iter().zip(p).map(|(c, &q)| c.unwrap_or(q)).collect())
            }
            _ => {
                report.removed_rows.push(r);
                None
            }
        };
        if let Some(row) = row {
            values.extend_from_slice(&row);
            prev = Some(row);
        }
    }
    if values.is_empty() {
        return Err(Error::Dataset("no complete bins after cleaning".into()));
    }
    let duration = step.unwrap_or(DEFAULT_BIN_DURATION_S);
    let dataset = TrafficDataset::new(raw.topology.clone(), values, duration)?;
    Ok((dataset, report))
}

/// Window counts `(train, eval)` for a chronological split.
pub fn split_counts(num_windows: usize, fraction: f64) -> Result<(usize, usize)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} outside (0, 1)")));
    }
    if num_windows < 2 {
        return Err(Error::Dataset(format!("{num_windows} windows cannot be split")));
    }
    let train = ((num_windows as f64 * fraction).round() as usize).clamp(1, num_windows - 1);
    Ok((train, num_windows - train))
}

/// Splits into a prefix holding the first windows and a suffix holding the
/// rest. The suffix starts `w_past` bins before its first label bin so its
/// windows keep their context; every window lands in exactly one part.
pub fn chronological_split(
    dataset: &TrafficDataset,
    w_past: usize,
    fraction: f64,
) -> Result<(TrafficDataset, TrafficDataset)> {
    let (train, _) = split_counts(dataset.num_windows(w_past), fraction)?;
    let head = dataset.slice_bins(0..w_past + train)?;
    let tail = dataset.slice_bins(train..dataset.num_bins())?;
    Ok((head, tail))
}
