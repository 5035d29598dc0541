//! Side-by-side compression benchmark against an external DEFLATE tool.

use std::io::Write;
use std::process::{Command, Stdio};
use std::time::Instant;

use crate::metrics::compression_ratio;
use crate::neural::PredictorModel;
use crate::pipeline::{compress_timed, decompress, CodecSpec, Method, Mode, DEFAULT_ADAPTIVE_WINDOW};
use crate::{Error, Result, TrafficDataset};

/// Environment variable naming the DEFLATE tool (default `gzip`).
pub const DEFLATE_TOOL_ENV: &str = "NTC_DEFLATE_TOOL";

pub const CSV_HEADER: &str = "method,bytes,cr,improvement_vs_deflate_pct,mean_bin_latency_s,total_s";

/// Smallest of 1, 2, 4 bytes holding `v_max`.
pub fn value_width(v_max: u32) -> usize {
    match v_max {
        0..=0xff => 1,
        0x100..=0xffff => 2,
        _ => 4,
    }
}

/// The value matrix as packed little-endian integers of [`value_width`] bytes;
/// its length is the uncompressed size used for every ratio.
pub fn raw_matrix_bytes(dataset: &TrafficDataset) -> Vec<u8> {
    raw_values(dataset.values(), value_width(dataset.v_max()))
}

fn raw_values(values: &[u32], width: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * width);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes()[..width]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeflateTool {
    pub program: String,
    pub version: String,
}

impl DeflateTool {
    /// Resolves the tool from [`DEFLATE_TOOL_ENV`] or `gzip` and checks that
    /// it runs.
    pub fn detect() -> Result<Self> {
        let program = std::env::var(DEFLATE_TOOL_ENV).unwrap_or_else(|_| "gzip".to_string());
        let out = Command::new(&program)
            .arg("--version")
            .output()
            .map_err(|e| Error::Tool(format!("{program}: {e}")))?;
        if !out.status.success() {
            return Err(Error::Tool(format!("{program} --version failed")));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let version = text.lines().next().unwrap_or("").trim().to_string();
        Ok(Self { program, version })
    }

    /// Compressed size of `data` at the tool's default level.
    pub fn compressed_len(&self, data: &[u8]) -> Result<usize> {
        let mut child = Command::new(&self.program)
            .arg("-c")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Tool(format!("{}: {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let payload = data.to_vec();
        let writer = std::thread::spawn(move || stdin.write_all(&payload));
        let out = child.wait_with_output()?;
        writer
            .join()
            .map_err(|_| Error::Tool("writer thread panicked".into()))??;
        if !out.status.success() {
            return Err(Error::Tool(format!("{} exited with {}", self.program, out.status)));
        }
        Ok(out.stdout.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    /// `None` when the method could not run.
    pub bytes: Option<u64>,
    pub cr: Option<f64>,
    pub improvement_vs_deflate_pct: Option<f64>,
    pub mean_bin_latency_s: Option<f64>,
    pub total_s: f64,
}

impl BenchRow {
    fn unavailable(method: &str) -> Self {
        Self {
            method: method.to_string(),
            bytes: None,
            cr: None,
            improvement_vs_deflate_pct: None,
            mean_bin_latency_s: None,
            total_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub uncompressed_bytes: u64,
    pub deflate_tool: Option<DeflateTool>,
    pub rows: Vec<BenchRow>,
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(String::new, |x| format!("{x:.digits$}"))
}

impl BenchReport {
    pub fn row(&self, method: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn cr(&self, method: &str) -> Option<f64> {
        self.row(method).and_then(|r| r.cr)
    }

    /// CSV with the header [`CSV_HEADER`]; unavailable cells are empty. The
    /// latency and `total_s` columns are wall-clock and vary between runs.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                r.method,
                r.bytes.map_or_else(String::new, |b| b.to_string()),
                fmt_opt(r.cr, 6),
                fmt_opt(r.improvement_vs_deflate_pct, 3),
                fmt_opt(r.mean_bin_latency_s, 9),
                r.total_s
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("uncompressed bytes: {}\n", self.uncompressed_bytes);
        match &self.deflate_tool {
            Some(t) => out.push_str(&format!("deflate tool: {} ({})\n", t.program, t.version)),
            None => out.push_str("deflate tool: unavailable\n"),
        }
        let header = ["method", "bytes", "cr", "vs_deflate_%", "bin_latency_s", "total_s"];
        let rows: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    r.bytes.map_or_else(|| "n/a".to_string(), |b| b.to_string()),
                    fmt_opt(r.cr, 3),
                    fmt_opt(r.improvement_vs_deflate_pct, 1),
                    fmt_opt(r.mean_bin_latency_s, 6),
                    format!("{:.3}", r.total_s),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for r in &rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ") + "\n"
        };
        out.push_str(&line(&header.map(String::from)));
        for r in &rows {
            out.push_str(&line(r));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    Codec(Method),
    Deflate,
    DeflatePerBin,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Codec(m) => m.name(),
            Self::Deflate => "deflate",
            Self::DeflatePerBin => "deflate_per_bin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "deflate" => Some(Self::Deflate),
            "deflate_per_bin" => Some(Self::DeflatePerBin),
            _ => Method::parse(s).map(Self::Codec),
        }
    }

    pub fn all() -> Vec<Self> {
        let mut v: Vec<Self> = Method::ALL.into_iter().map(Self::Codec).collect();
        v.push(Self::Deflate);
        v.push(Self::DeflatePerBin);
        v
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig<'a> {
    pub methods: Vec<BenchMethod>,
    /// Histogram pooling for the static and adaptive baselines.
    pub baseline_mode: Mode,
    pub adaptive_window: usize,
    pub rnn: Option<&'a PredictorModel>,
    pub stgnn: Option<&'a PredictorModel>,
    /// Decompress every container and compare with the input.
    pub verify: bool,
}

impl Default for BenchConfig<'_> {
    fn default() -> Self {
        Self {
            methods: BenchMethod::all(),
            baseline_mode: Mode::SingleLink,
            adaptive_window: DEFAULT_ADAPTIVE_WINDOW,
            rnn: None,
            stgnn: None,
            verify: true,
        }
    }
}

/// Whole-dataset DEFLATE of the raw matrix.
pub fn deflate_baseline(dataset: &TrafficDataset, tool: &DeflateTool) -> Result<BenchRow> {
    let raw = raw_matrix_bytes(dataset);
    let start = Instant::now();
    let bytes = tool.compressed_len(&raw)? as u64;
    Ok(BenchRow {
        method: "deflate".into(),
        bytes: Some(bytes),
        cr: Some(compression_ratio(raw.len() as u64, bytes)?),
        improvement_vs_deflate_pct: Some(0.0),
        mean_bin_latency_s: None,
        total_s: start.elapsed().as_secs_f64(),
    })
}

/// Each bin's `L` values compressed on their own, sizes summed.
pub fn per_bin_deflate_baseline(dataset: &TrafficDataset, tool: &DeflateTool) -> Result<BenchRow> {
    let width = value_width(dataset.v_max());
    let start = Instant::now();
    let mut bytes = 0u64;
    for row in dataset.rows() {
        bytes += tool.compressed_len(&raw_values(row, width))? as u64;
    }
    let total_s = start.elapsed().as_secs_f64();
    let uncompressed = (dataset.values().len() * width) as u64;
    Ok(BenchRow {
        method: "deflate_per_bin".into(),
        bytes: Some(bytes),
        cr: Some(compression_ratio(uncompressed, bytes)?),
        improvement_vs_deflate_pct: None,
        mean_bin_latency_s: Some(total_s / dataset.num_bins() as f64),
        total_s,
    })
}

fn codec_row(dataset: &TrafficDataset, spec: &CodecSpec<'_>, uncompressed: u64, verify: bool) -> Result<BenchRow> {
    let start = Instant::now();
    let (container, latencies) = compress_timed(dataset, spec)?;
    let bytes = container.to_bytes()?.len() as u64;
    let total_s = start.elapsed().as_secs_f64();
    if verify && decompress(&container, spec.model)? != *dataset {
        return Err(Error::Decode(format!("{} round trip differs from the input", spec.method)));
    }
    let mean = latencies.iter().map(|d| d.as_secs_f64()).sum::<f64>() / latencies.len().max(1) as f64;
    Ok(BenchRow {
        method: spec.method.name().into(),
        bytes: Some(bytes),
        cr: Some(compression_ratio(uncompressed, bytes)?),
        improvement_vs_deflate_pct: None,
        mean_bin_latency_s: Some(mean),
        total_s,
    })
}

/// Runs every requested method. A missing DEFLATE tool or model marks that
/// row unavailable; codec failures are errors.
pub fn bench_run(dataset: &TrafficDataset, config: &BenchConfig<'_>) -> Result<BenchReport> {
    let uncompressed = raw_matrix_bytes(dataset).len() as u64;
    let wants_deflate = config
        .methods
        .iter()
        .any(|m| matches!(m, BenchMethod::Deflate | BenchMethod::DeflatePerBin));
    let tool = if wants_deflate { DeflateTool::detect().ok() } else { None };
    let mut rows = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let row = match method {
            BenchMethod::Deflate | BenchMethod::DeflatePerBin => match &tool {
                Some(t) if method == BenchMethod::Deflate => deflate_baseline(dataset, t)?,
                Some(t) => per_bin_deflate_baseline(dataset, t)?,
                None => BenchRow::unavailable(method.name()),
            },
            BenchMethod::Codec(m) => {
                let spec = match m {
                    Method::Uniform => Some(CodecSpec::uniform()),
                    Method::StaticAc => Some(CodecSpec::static_ac(config.baseline_mode)),
                    Method::AdaptiveAc => Some(CodecSpec::adaptive_ac(config.baseline_mode, config.adaptive_window)),
                    Method::Rnn => config.rnn.map(CodecSpec::neural),
                    Method::Stgnn => config.stgnn.map(CodecSpec::neural),
                };
                match spec {
                    Some(spec) if spec.method == m => codec_row(dataset, &spec, uncompressed, config.verify)?,
                    Some(_) => {
                        return Err(Error::ModelMismatch(format!("model supplied for {m} has the wrong kind")))
                    }
                    None => BenchRow::unavailable(m.name()),
                }
            }
        };
        rows.push(row);
    }
    let deflate_cr = rows.iter().find(|r| r.method == "deflate").and_then(|r| r.cr);
    if let Some(base) = deflate_cr {
        for r in &mut rows {
            if let Some(cr) = r.cr {
                r.improvement_vs_deflate_pct = Some((cr / base - 1.0) * 100.0);
            }
        }
    }
    Ok(BenchReport {
        uncompressed_bytes: uncompressed,
        deflate_tool: tool,
        rows,
    })
}
