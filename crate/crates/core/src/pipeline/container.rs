//! Container layout (little-endian):
//!
//! ```text
//! "NTCC" u16:version u8:method u8:mode
//! u32:nodes u32:L (u32 tail, u32 head)×L
//! u32:T u32:v_max u32:w_past f64:bin_duration_s
//! u8:has_model [32]:model_hash?
//! u32:tables (leb128 table)×tables
//! (u64:symbol_count u32:len bytes)×L
//! u32:crc32 of everything above
//! ```
//!
//! A table is `leb128 n` followed by `n` pairs of leb128 value deltas and
//! counts.

use std::io::Read;
use std::path::Path;

use crate::coder::CodedStream;
use crate::neural::ModelHash;
use crate::{Error, Result, Topology};

use super::{Method, Mode};

pub const CONTAINER_MAGIC: &[u8; 4] = b"NTCC";
pub const CONTAINER_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedContainer {
    pub method: Method,
    pub mode: Mode,
    pub topology: Topology,
    pub num_bins: usize,
    pub v_max: u32,
    /// Context bins: the predictor window for neural methods, the histogram
    /// window for adaptive AC, 0 otherwise.
    pub w_past: usize,
    pub bin_duration_s: f64,
    pub model_hash: Option<ModelHash>,
    /// Static AC histograms as sorted `(value, count)` entries: one per link
    /// in single-link mode, one shared table in network-wide mode.
    pub histograms: Vec<Vec<(u32, u64)>>,
    pub streams: Vec<CodedStream>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Corrupt(msg.into())
}

fn read_array<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| corrupt("container truncated"))?;
    Ok(buf)
}

fn read_u8(r: &mut &[u8]) -> Result<u8> {
    Ok(read_array::<1>(r)?[0])
}

fn read_u16(r: &mut &[u8]) -> Result<u16> {
    Ok(u16::from_le_bytes(read_array(r)?))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_leb(r: &mut &[u8]) -> Result<u64> {
    leb128::read::unsigned(r).map_err(|_| corrupt("bad varint"))
}

fn write_leb(out: &mut Vec<u8>, v: u64) {
    leb128::write::unsigned(out, v).expect("writing to a Vec cannot fail");
}

fn usize_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds u32")))
}

impl CompressedContainer {
    pub fn num_links(&self) -> usize {
        self.topology.num_links()
    }

    /// Total coded stream bytes, excluding header and tables.
    pub fn payload_bytes(&self) -> usize {
        self.streams.iter().map(|s| s.bytes.len()).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.push(self.method.tag());
        out.push(self.mode.tag());
        out.extend_from_slice(&usize_u32(self.topology.num_nodes(), "node count")?.to_le_bytes());
        out.extend_from_slice(&usize_u32(self.num_links(), "link count")?.to_le_bytes());
        for &(a, b) in self.topology.links() {
            out.extend_from_slice(&(a as u32).to_le_bytes());
            out.extend_from_slice(&(b as u32).to_le_bytes());
        }
        out.extend_from_slice(&usize_u32(self.num_bins, "bin count")?.to_le_bytes());
        out.extend_from_slice(&self.v_max.to_le_bytes());
        out.extend_from_slice(&usize_u32(self.w_past, "window")?.to_le_bytes());
        out.extend_from_slice(&self.bin_duration_s.to_le_bytes());
        match &self.model_hash {
            Some(h) => {
                out.push(1);
                out.extend_from_slice(h);
            }
            None => out.push(0),
        }
        out.extend_from_slice(&usize_u32(self.histograms.len(), "table count")?.to_le_bytes());
        for table in &self.histograms {
            write_leb(&mut out, table.len() as u64);
            let mut prev = 0u64;
            for &(v, c) in table {
                write_leb(&mut out, u64::from(v) - prev);
                write_leb(&mut out, c);
                prev = u64::from(v);
            }
        }
        for s in &self.streams {
            out.extend_from_slice(&s.symbol_count.to_le_bytes());
            out.extend_from_slice(&usize_u32(s.bytes.len(), "stream length")?.to_le_bytes());
            out.extend_from_slice(&s.bytes);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != CONTAINER_MAGIC {
            return Err(corrupt("not a container"));
        }
        let (content, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(content).to_le_bytes() != crc {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = &content[4..];
        let version = read_u16(&mut r)?;
        if version != CONTAINER_VERSION {
            return Err(corrupt(format!("unsupported container version {version}")));
        }
        let method = Method::from_tag(read_u8(&mut r)?).ok_or_else(|| corrupt("unknown method"))?;
        let mode = Mode::from_tag(read_u8(&mut r)?).ok_or_else(|| corrupt("unknown mode"))?;
        let nodes = read_u32(&mut r)? as usize;
        let links = read_u32(&mut r)? as usize;
        if links.saturating_mul(8) > r.len() {
            return Err(corrupt("link table truncated"));
        }
        let mut pairs = Vec::with_capacity(links);
        for _ in 0..links {
            pairs.push((read_u32(&mut r)? as usize, read_u32(&mut r)? as usize));
        }
        let topology = Topology::new(nodes, pairs).map_err(|e| corrupt(e.to_string()))?;
        let num_bins = read_u32(&mut r)? as usize;
        let v_max = read_u32(&mut r)?;
        let w_past = read_u32(&mut r)? as usize;
        let bin_duration_s = f64::from_le_bytes(read_array(&mut r)?);
        let model_hash = match read_u8(&mut r)? {
            0 => None,
            1 => Some(read_array::<32>(&mut r)?),
            _ => return Err(corrupt("bad model flag")),
        };
        let tables = read_u32(&mut r)? as usize;
        if tables > links.max(1) {
            return Err(corrupt("too many histogram tables"));
        }
        let mut histograms = Vec::with_capacity(tables);
        for _ in 0..tables {
            let n = read_leb(&mut r)? as usize;
            if n > r.len() {
                return Err(corrupt("histogram truncated"));
            }
            let mut table = Vec::with_capacity(n);
            let mut prev = 0u64;
            for i in 0..n {
                let delta = read_leb(&mut r)?;
                if i > 0 && delta == 0 {
                    return Err(corrupt("histogram values not increasing"));
                }
                let v = prev
                    .checked_add(delta)
                    .filter(|&v| v <= u64::from(v_max))
                    .ok_or_else(|| corrupt("histogram value out of range"))?;
                table.push((v as u32, read_leb(&mut r)?));
                prev = v;
            }
            histograms.push(table);
        }
        let mut streams = Vec::with_capacity(links);
        for _ in 0..links {
            let symbol_count = read_u64(&mut r)?;
            let len = read_u32(&mut r)? as usize;
            if len > r.len() {
                return Err(corrupt("stream truncated"));
            }
            let (data, rest) = r.split_at(len);
            streams.push(CodedStream {
                bytes: data.to_vec(),
                symbol_count,
            });
            r = rest;
        }
        if !r.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self {
            method,
            mode,
            topology,
            num_bins,
            v_max,
            w_past,
            bin_duration_s,
            model_hash,
            histograms,
            streams,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
