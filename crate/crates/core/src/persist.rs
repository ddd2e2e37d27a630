//! On-disk artifacts of a run.
//!
//! The transition-current table is stored in a little-endian binary file:
//!
//! ```text
//! magic "HHGQJTAB" | version u32 | reserved u32 | channels u64 | times u64
//! | config hash [32] | times f64 × T | (re, im) f64 pairs × T·M²
//! ```
//!
//! It is written to `<path>.partial` and renamed on completion, so a file at
//! the final path is always whole. Per-mode results are JSON lines; reduced
//! data goes to CSV.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{CurrentSource, TransitionCurrentTable};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::observables::PhotonMoments;

pub const TABLE_MAGIC: &[u8; 8] = b"HHGQJTAB";
pub const TABLE_VERSION: u32 = 1;
const HEADER_LEN: u64 = 8 + 4 + 4 + 8 + 8 + 32;

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn decode_hash(hex_hash: &str) -> Result<[u8; 32]> {
    let bytes = hex::decode(hex_hash).map_err(|e| Error::param(format!("bad config hash: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| Error::param("config hash must be 32 bytes"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableHeader {
    pub version: u32,
    pub channels: usize,
    pub times: Vec<f64>,
    /// Hex SHA-256 of the configuration that produced the table.
    pub config_hash: String,
}

impl TableHeader {
    fn data_offset(&self) -> u64 {
        HEADER_LEN + 8 * self.times.len() as u64
    }

    fn slice_bytes(&self) -> u64 {
        16 * (self.channels * self.channels) as u64
    }

    fn expected_len(&self) -> u64 {
        self.data_offset() + self.slice_bytes() * self.times.len() as u64
    }
}

/// Streaming writer; slices must arrive in time order.
pub struct TableWriter {
    out: BufWriter<File>,
    path: PathBuf,
    partial: PathBuf,
    channels: usize,
    expected: usize,
    written: usize,
}

impl TableWriter {
    pub fn create(path: &Path, channels: usize, times: &[f64], config_hash: &str) -> Result<Self> {
        let hash = decode_hash(config_hash)?;
        let partial = partial_path(path);
        let mut out = BufWriter::with_capacity(1 << 20, File::create(&partial)?);
        out.write_all(TABLE_MAGIC)?;
        out.write_all(&TABLE_VERSION.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&(channels as u64).to_le_bytes())?;
        out.write_all(&(times.len() as u64).to_le_bytes())?;
        out.write_all(&hash)?;
        for t in times {
            out.write_all(&t.to_le_bytes())?;
        }
        Ok(TableWriter {
            out,
            path: path.to_path_buf(),
            partial,
            channels,
            expected: times.len(),
            written: 0,
        })
    }

    pub fn push(&mut self, slice: &[C64]) -> Result<()> {
        if slice.len() != self.channels * self.channels {
            return Err(Error::param("slice size differs from channels²"));
        }
        if self.written == self.expected {
            return Err(Error::param("table already holds every time slice"));
        }
        for z in slice {
            self.out.write_all(&z.re.to_le_bytes())?;
            self.out.write_all(&z.im.to_le_bytes())?;
        }
        self.written += 1;
        Ok(())
    }

    /// Flush and move the file to its final path.
    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::param(format!(
                "table has {} of {} time slices",
                self.written, self.expected
            )));
        }
        self.out.flush()?;
        self.out.get_ref().sync_all()?;
        fs::rename(&self.partial, &self.path)?;
        Ok(())
    }
}

pub fn write_table(path: &Path, table: &TransitionCurrentTable, config_hash: &str) -> Result<()> {
    let mut w = TableWriter::create(path, table.channels(), table.times(), config_hash)?;
    for k in 0..table.len() {
        w.push(table.slice(k))?;
    }
    w.finish()
}

/// Random-access reader over a finished table file.
pub struct TableReader {
    file: BufReader<File>,
    path: PathBuf,
    header: TableHeader,
}

fn read_array<const N: usize>(r: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

impl TableReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        let mut file = BufReader::with_capacity(1 << 20, file);
        let bad = |msg: &str| format_err(path, msg);
        let magic: [u8; 8] = read_array(&mut file).map_err(|_| bad("file too short for a header"))?;
        if &magic != TABLE_MAGIC {
            return Err(bad("not a transition-current table"));
        }
        let version = u32::from_le_bytes(read_array(&mut file)?);
        if version != TABLE_VERSION {
            return Err(format_err(path, format!("unsupported table version {version}")));
        }
        let _reserved: [u8; 4] = read_array(&mut file)?;
        let channels = u64::from_le_bytes(read_array(&mut file)?) as usize;
        let n = u64::from_le_bytes(read_array(&mut file)?) as usize;
        let hash: [u8; 32] = read_array(&mut file)?;
        if channels == 0 || (n as u64).saturating_mul(8) > len {
            return Err(bad("implausible table dimensions"));
        }
        let mut times = Vec::with_capacity(n);
        for _ in 0..n {
            times.push(f64::from_le_bytes(
                read_array(&mut file).map_err(|_| bad("truncated time grid"))?,
            ));
        }
        let header = TableHeader {
            version,
            channels,
            times,
            config_hash: hex::encode(hash),
        };
        if len != header.expected_len() {
            return Err(format_err(
                path,
                format!(
                    "size {len} bytes, expected {} for {n} slices of {channels}²",
                    header.expected_len()
                ),
            ));
        }
        Ok(TableReader {
            file,
            path: path.to_path_buf(),
            header,
        })
    }

    pub fn header(&self) -> &TableHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read_all(&mut self) -> Result<TransitionCurrentTable> {
        let n = self.header.times.len();
        let mut data = Vec::with_capacity(n * self.header.channels * self.header.channels);
        self.read_slices(0, n, &mut data)?;
        TransitionCurrentTable::new(self.header.times.clone(), self.header.channels, data)
    }

    /// `j_{m,n}(t)` over the whole grid.
    pub fn series(&mut self, m: usize, n: usize) -> Result<Vec<C64>> {
        let ch = self.header.channels;
        if m >= ch || n >= ch {
            return Err(Error::param(format!("element ({m}, {n}) outside {ch} channels")));
        }
        let offset = 16 * (m * ch + n) as u64;
        let mut out = Vec::with_capacity(self.header.times.len());
        for k in 0..self.header.times.len() as u64 {
            let pos = self.header.data_offset() + k * self.header.slice_bytes() + offset;
            self.file.seek(SeekFrom::Start(pos))?;
            let re = f64::from_le_bytes(read_array(&mut self.file)?);
            let im = f64::from_le_bytes(read_array(&mut self.file)?);
            out.push(C64::new(re, im));
        }
        Ok(out)
    }

    pub fn diagonal(&mut self, m: usize) -> Result<Vec<f64>> {
        Ok(self.series(m, m)?.into_iter().map(|z| z.re).collect())
    }
}

impl CurrentSource for TableReader {
    fn channels(&self) -> usize {
        self.header.channels
    }

    fn times(&self) -> &[f64] {
        &self.header.times
    }

    fn read_slices(&mut self, start: usize, count: usize, out: &mut Vec<C64>) -> Result<()> {
        if start + count > self.header.times.len() {
            return Err(Error::param("slice range beyond the end of the table"));
        }
        let pos = self.header.data_offset() + start as u64 * self.header.slice_bytes();
        self.file.seek(SeekFrom::Start(pos))?;
        let values = count * self.header.channels * self.header.channels;
        out.reserve(values);
        let mut buf = [0u8; 16];
        for _ in 0..values {
            self.file.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
            out.push(C64::new(re, im));
        }
        Ok(())
    }
}

/// Result of one mode, as persisted between the EOM and the reductions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    /// `ω / ω_L`
    pub ratio: f64,
    pub moments: PhotonMoments,
    pub levels: usize,
    /// Population above Fock level 15.
    pub tail_population: f64,
}

pub fn append_mode_records(path: &Path, records: &[ModeRecord]) -> Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    out.get_ref().sync_all()?;
    Ok(())
}

/// Read the records of a mode file. An unterminated last line is the trace
/// of an interrupted append and is dropped.
pub fn read_mode_records(path: &Path) -> Result<Vec<ModeRecord>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut out = Vec::new();
    for (i, line) in complete.lines().enumerate() {
        let rec = serde_json::from_str(line).map_err(|e| format_err(path, format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Rewrite a mode file keeping only its first `keep` records.
pub fn truncate_mode_records(path: &Path, keep: usize) -> Result<()> {
    let records = read_mode_records(path)?;
    let tmp = partial_path(path);
    let _ = fs::remove_file(&tmp);
    append_mode_records(&tmp, &records[..keep.min(records.len())])?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Column-oriented numeric table; `None` cells are written empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

/// Significant digits of every CSV value.
pub const CSV_DIGITS: usize = 12;

fn format_value(v: Option<f64>) -> String {
    match v {
        Some(0.0) => "0".to_string(),
        Some(x) => format!("{:.*e}", CSV_DIGITS - 1, x),
        None => String::new(),
    }
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::param(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = partial_path(path);
        {
            let mut w = csv::Writer::from_path(&tmp).map_err(|e| format_err(path, e.to_string()))?;
            w.write_record(&self.header)
                .map_err(|e| format_err(path, e.to_string()))?;
            for row in &self.rows {
                w.write_record(row.iter().map(|v| format_value(*v)))
                    .map_err(|e| format_err(path, e.to_string()))?;
            }
            w.flush()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
        let header = r
            .headers()
            .map_err(|e| format_err(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| format_err(path, e.to_string()))?;
            let row = rec
                .iter()
                .map(|cell| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>()
                            .map(Some)
                            .map_err(|_| format_err(path, format!("row {}: `{cell}` is not a number", i + 1)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(CsvTable { header, rows })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut r = BufReader::new(File::open(path)?);
    loop {
        let buf = r.fill_buf()?;
        if buf.is_empty() {
            break;
        }
        hasher.update(buf);
        let n = buf.len();
        r.consume(n);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Write `bytes` through a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = partial_path(path);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}
