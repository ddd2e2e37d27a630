use crate::error::{Error, Result};
use crate::linalg::C64;

/// `j_{m,n}(t)` for every stored time, row-major `M × M` per time.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionCurrentTable {
    times: Vec<f64>,
    channels: usize,
    data: Vec<C64>,
}

impl TransitionCurrentTable {
    pub fn new(times: Vec<f64>, channels: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != times.len() * channels * channels {
            return Err(Error::param(format!(
                "table payload has {} entries, expected {} times x {channels}^2",
                data.len(),
                times.len()
            )));
        }
        Ok(TransitionCurrentTable { times, channels, data })
    }

    pub fn with_capacity(times: Vec<f64>, channels: usize) -> Self {
        let cap = times.len() * channels * channels;
        TransitionCurrentTable {
            times,
            channels,
            data: Vec::with_capacity(cap),
        }
    }

    pub(crate) fn push_slice(&mut self, slice: &[C64]) {
        debug_assert_eq!(slice.len(), self.channels * self.channels);
        self.data.extend_from_slice(slice);
    }

    /// Diagonal-only table carrying one current series per channel.
    pub fn from_diagonal(times: Vec<f64>, series: &[Vec<f64>]) -> Result<Self> {
        let m = series.len();
        let mut data = vec![C64::new(0.0, 0.0); times.len() * m * m];
        for (c, s) in series.iter().enumerate() {
            if s.len() != times.len() {
                return Err(Error::param("current series length differs from the grid"));
            }
            for (k, &v) in s.iter().enumerate() {
                data[k * m * m + c * m + c] = C64::new(v, 0.0);
            }
        }
        Self::new(times, m, data)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.data.len() == self.times.len() * self.channels * self.channels
    }

    pub fn slice(&self, k: usize) -> &[C64] {
        let mm = self.channels * self.channels;
        &self.data[k * mm..(k + 1) * mm]
    }

    pub fn element(&self, k: usize, m: usize, n: usize) -> C64 {
        self.slice(k)[m * self.channels + n]
    }

    /// Real current `j_{m,m}(t)` of one channel on the grid.
    pub fn diagonal(&self, m: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.element(k, m, m).re).collect()
    }

    pub fn series(&self, m: usize, n: usize) -> Vec<C64> {
        (0..self.len()).map(|k| self.element(k, m, n)).collect()
    }

    /// `max |j_{mn} - j_{nm}*|` over the table.
    pub fn hermiticity_error(&self) -> f64 {
        let m = self.channels;
        let mut worst: f64 = 0.0;
        for k in 0..self.len() {
            let s = self.slice(k);
            for a in 0..m {
                for b in a..m {
                    worst = worst.max((s[a * m + b] - s[b * m + a].conj()).norm());
                }
            }
        }
        worst
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let m = self.channels;
        let mut worst: f64 = 0.0;
        for k in 0..self.len() {
            let s = self.slice(k);
            for a in 0..m {
                for b in 0..m {
                    if a != b {
                        worst = worst.max(s[a * m + b].norm());
                    }
                }
            }
        }
        worst
    }

    pub fn raw(&self) -> &[C64] {
        &self.data
    }
}

/// Sequential access to transition-current slices, in memory or on disk.
pub trait CurrentSource {
    fn channels(&self) -> usize;
    fn times(&self) -> &[f64];
    /// Append slices `start .. start + count` (row-major `M × M` each) to
    /// `out`.
    fn read_slices(&mut self, start: usize, count: usize, out: &mut Vec<C64>) -> Result<()>;
}

impl CurrentSource for TransitionCurrentTable {
    fn channels(&self) -> usize {
        self.channels
    }

    fn times(&self) -> &[f64] {
        &self.times
    }

    fn read_slices(&mut self, start: usize, count: usize, out: &mut Vec<C64>) -> Result<()> {
        let mm = self.channels * self.channels;
        if start + count > self.times.len() {
            return Err(Error::param("slice range beyond the end of the table"));
        }
        out.extend_from_slice(&self.data[start * mm..(start + count) * mm]);
        Ok(())
    }
}

/// Borrowed view, so one in-memory table can feed several integrations.
pub struct TableView<'a>(pub &'a TransitionCurrentTable);

impl CurrentSource for TableView<'_> {
    fn channels(&self) -> usize {
        self.0.channels
    }

    fn times(&self) -> &[f64] {
        &self.0.times
    }

    fn read_slices(&mut self, start: usize, count: usize, out: &mut Vec<C64>) -> Result<()> {
        let mm = self.0.channels * self.0.channels;
        if start + count > self.0.times.len() {
            return Err(Error::param("slice range beyond the end of the table"));
        }
        out.extend_from_slice(&self.0.data[start * mm..(start + count) * mm]);
        Ok(())
    }
}
