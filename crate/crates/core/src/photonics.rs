//! Photonic state of single emitted modes, driven by the transition
//! currents.
//!
//! For one mode of frequency ω the interaction-picture amplitudes obey
//!
//! `i d/dt χ_m = (g0/√ω) (a e^{-iωt} + a† e^{iωt}) Σ_n j_{m,n}(t) χ_n`
//!
//! and start in the vacuum of the initial electronic channel. The equation is
//! integrated with classical RK4 on the grid of the current table. At the
//! half steps the whole coupling `J(t) e^{∓iωt}` is interpolated linearly
//! between the neighbouring grid points; to first order in `g0` the scheme
//! then reduces to the trapezoidal rule for `∫ j e^{iωt} dt`, the same
//! quadrature used by the coherent and semiclassical paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CurrentSource, TableView, TransitionCurrentTable};
use crate::error::{Error, Result};
use crate::linalg::{self, C64, ZERO};
use crate::observables::{fourier_transform_real, trapezoid_weights, PhotonMoments};

pub const DEFAULT_G0: f64 = 4e-8;
pub const DEFAULT_FOCK_CUTOFF: usize = 100;
/// Fock levels are only integrated once some amplitude reaches this size.
pub const DEFAULT_AMPLITUDE_FLOOR: f64 = 1e-30;
/// Abort threshold on `|Σ_m ⟨χ_m|χ_m⟩ - 1|`.
pub const PHOTON_NORM_LIMIT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    /// Angular frequency in a.u.
    pub omega: f64,
    pub g0: f64,
    pub fock_cutoff: usize,
}

impl ModeConfig {
    pub fn new(omega: f64, g0: f64, fock_cutoff: usize) -> Result<Self> {
        let m = ModeConfig { omega, g0, fock_cutoff };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::param(format!(
                "mode frequency must be positive, got {}",
                self.omega
            )));
        }
        if !(self.g0 >= 0.0 && self.g0.is_finite()) {
            return Err(Error::param(format!("g0 must be non-negative, got {}", self.g0)));
        }
        if self.fock_cutoff < 1 {
            return Err(Error::param("Fock cutoff must be at least 1"));
        }
        Ok(())
    }

    /// `g0 / √ω`
    pub fn coupling(&self) -> f64 {
        self.g0 / self.omega.sqrt()
    }
}

/// Mode frequencies `k·step·ω_L` for `k` from `min/step` to `max/step`
/// (rounded), in a.u. Ratios are formed from integers so the grid does not
/// accumulate rounding drift.
pub fn mode_grid(omega_l: f64, min_ratio: f64, max_ratio: f64, step_ratio: f64) -> Result<Vec<f64>> {
    if !(step_ratio > 0.0) || !(min_ratio > 0.0) || max_ratio < min_ratio {
        return Err(Error::param(format!(
            "invalid mode grid: min {min_ratio}, max {max_ratio}, step {step_ratio}"
        )));
    }
    let lo = (min_ratio / step_ratio).round() as u64;
    let hi = (max_ratio / step_ratio).round() as u64;
    Ok((lo.max(1)..=hi).map(|k| k as f64 * step_ratio * omega_l).collect())
}

/// Amplitudes `c_n^{(m)}` of one mode, row-major by channel. Only the active
/// Fock levels `0 .. levels` are stored; higher levels are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeStateSet {
    pub mode: ModeConfig,
    /// Time at which the interaction-picture state is given.
    pub time: f64,
    channels: usize,
    levels: usize,
    amplitudes: Vec<C64>,
}

impl ModeStateSet {
    pub fn new(mode: ModeConfig, channels: usize, levels: usize, time: f64, amplitudes: Vec<C64>) -> Result<Self> {
        mode.validate()?;
        if levels == 0 || levels > mode.fock_cutoff + 1 {
            return Err(Error::param(format!(
                "{levels} Fock levels do not fit a cutoff of {}",
                mode.fock_cutoff
            )));
        }
        if amplitudes.len() != channels * levels {
            return Err(Error::param("amplitude count differs from channels x levels"));
        }
        Ok(ModeStateSet {
            mode,
            time,
            channels,
            levels,
            amplitudes,
        })
    }

    /// Vacuum on channel `initial`.
    pub fn vacuum(mode: ModeConfig, channels: usize, initial: usize, time: f64) -> Result<Self> {
        if initial >= channels {
            return Err(Error::param(format!("initial channel {initial} out of {channels}")));
        }
        let levels = 2.min(mode.fock_cutoff + 1);
        let mut amplitudes = vec![ZERO; channels * levels];
        amplitudes[initial * levels] = C64::new(1.0, 0.0);
        Self::new(mode, channels, levels, time, amplitudes)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn channel(&self, m: usize) -> &[C64] {
        &self.amplitudes[m * self.levels..(m + 1) * self.levels]
    }

    pub fn amplitude(&self, m: usize, n: usize) -> C64 {
        if n >= self.levels {
            ZERO
        } else {
            self.amplitudes[m * self.levels + n]
        }
    }

    pub fn total_norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn channel_population(&self, m: usize) -> f64 {
        self.channel(m).iter().map(|z| z.norm_sqr()).sum()
    }

    /// Population in Fock levels strictly above `n`.
    pub fn tail_population(&self, n: usize) -> f64 {
        (0..self.channels)
            .map(|m| self.channel(m).iter().skip(n + 1).map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn moments(&self) -> PhotonMoments {
        PhotonMoments::from_state(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorOptions {
    pub initial_channel: usize,
    pub amplitude_floor: f64,
    /// Memory budget for the table slices held per chunk.
    pub chunk_bytes: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            initial_channel: 0,
            amplitude_floor: DEFAULT_AMPLITUDE_FLOOR,
            chunk_bytes: 64 << 20,
        }
    }
}

/// Ladder image of every channel: `z = d·a x + u·a† x` with
/// `d = e^{-iωt}`, `u = e^{iωt}`.
fn ladder(omega: f64, t: f64, channels: usize, levels: usize, sqrt: &[f64], x: &[C64], z: &mut [C64]) {
    let d = C64::from_polar(1.0, -omega * t);
    let u = d.conj();
    for n in 0..channels {
        let xs = &x[n * levels..(n + 1) * levels];
        for l in 0..levels {
            let lower = if l + 1 < levels {
                d * (xs[l + 1] * sqrt[l + 1])
            } else {
                ZERO
            };
            let raise = if l >= 1 { u * (xs[l - 1] * sqrt[l]) } else { ZERO };
            z[n * levels + l] = lower + raise;
        }
    }
}

/// `out_m += c Σ_n J_{mn} z_n`.
fn mix_into(c: C64, j: &[C64], channels: usize, levels: usize, z: &[C64], out: &mut [C64]) {
    for m in 0..channels {
        let row = &j[m * channels..(m + 1) * channels];
        let o = &mut out[m * levels..(m + 1) * levels];
        for (n, &jmn) in row.iter().enumerate() {
            if jmn == ZERO {
                continue;
            }
            let w = c * jmn;
            let zs = &z[n * levels..(n + 1) * levels];
            for (ov, zv) in o.iter_mut().zip(zs) {
                *ov += w * zv;
            }
        }
    }
}

/// Midpoint RK4 stage with the generator averaged over the two grid points.
struct Midpoint<'a> {
    omega: f64,
    t0: f64,
    t1: f64,
    j0: &'a [C64],
    j1: &'a [C64],
    c: C64,
    channels: usize,
    levels: usize,
    sqrt: &'a [f64],
}

impl Midpoint<'_> {
    /// `out = G_mid (x + frac·prev)`.
    fn stage(&self, x: &[C64], prev: &[C64], frac: f64, tmp: &mut [C64], z: &mut [C64], out: &mut [C64]) {
        for ((t, a), b) in tmp.iter_mut().zip(x).zip(prev) {
            *t = a + b * frac;
        }
        out.iter_mut().for_each(|v| *v = ZERO);
        let (ch, lv) = (self.channels, self.levels);
        ladder(self.omega, self.t0, ch, lv, self.sqrt, tmp, z);
        mix_into(self.c, self.j0, ch, lv, z, out);
        ladder(self.omega, self.t1, ch, lv, self.sqrt, tmp, z);
        mix_into(self.c, self.j1, ch, lv, z, out);
    }
}

/// RK4 state of one mode.
struct ModeIntegrator {
    state: ModeStateSet,
    floor: f64,
    sqrt: Vec<f64>,
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
    z: Vec<C64>,
    /// Rounding error of the accumulated amplitudes.
    carry: Vec<C64>,
}

impl ModeIntegrator {
    fn new(mode: ModeConfig, channels: usize, initial: usize, time: f64, floor: f64) -> Result<Self> {
        let state = ModeStateSet::vacuum(mode, channels, initial, time)?;
        let sqrt = (0..=mode.fock_cutoff + 1).map(|l| (l as f64).sqrt()).collect();
        let mut it = ModeIntegrator {
            state,
            floor,
            sqrt,
            k: Default::default(),
            tmp: Vec::new(),
            z: Vec::new(),
            carry: Vec::new(),
        };
        it.resize_buffers();
        Ok(it)
    }

    fn resize_buffers(&mut self) {
        let len = self.state.amplitudes.len();
        for k in &mut self.k {
            k.resize(len, ZERO);
        }
        self.tmp.resize(len, ZERO);
        self.z.resize(len, ZERO);
        self.carry.resize(len, ZERO);
    }

    fn grow(&mut self) {
        let (ch, lv) = (self.state.channels, self.state.levels);
        let widen = |v: &[C64]| {
            let mut next = vec![ZERO; ch * (lv + 1)];
            for m in 0..ch {
                next[m * (lv + 1)..m * (lv + 1) + lv].copy_from_slice(&v[m * lv..(m + 1) * lv]);
            }
            next
        };
        self.state.amplitudes = widen(&self.state.amplitudes);
        self.carry = widen(&self.carry);
        self.state.levels = lv + 1;
        self.resize_buffers();
    }

    /// Add Fock levels until one step cannot lift more than `floor` of
    /// amplitude past the top active level. `reach` bounds the one-step
    /// ladder gain `g h ‖J‖`.
    fn ensure_levels(&mut self, reach: f64) {
        while self.state.levels < self.state.mode.fock_cutoff + 1 {
            let (ch, lv) = (self.state.channels, self.state.levels);
            let mut est = 0.0;
            for l in 0..lv {
                let e = (0..ch)
                    .map(|m| self.state.amplitudes[m * lv + l].norm())
                    .fold(0.0, f64::max);
                est = e + reach * self.sqrt[l] * est;
            }
            if reach * self.sqrt[lv] * est <= self.floor {
                break;
            }
            self.grow();
        }
    }

    fn finish(mut self) -> ModeStateSet {
        for (a, c) in self.state.amplitudes.iter_mut().zip(&self.carry) {
            *a += c;
        }
        self.state
    }

    /// One RK4 step from `t0` to `t1` between grid slices `j0` and `j1`.
    ///
    /// The interaction-picture generator `J(t)(e^{-iωt} a + e^{iωt} a†)` is
    /// interpolated linearly in time, so the midpoint stages use the mean of
    /// the two grid generators. To first order in the coupling this makes a
    /// step reproduce the trapezoidal rule exactly, with the same phases.
    fn step(&mut self, t0: f64, t1: f64, j0: &[C64], j1: &[C64], j_norm: f64) {
        let h = t1 - t0;
        self.ensure_levels(self.state.mode.coupling() * h * j_norm);
        let w = self.state.mode.omega;
        let pre = C64::new(0.0, -self.state.mode.coupling());
        let half = pre * 0.5;
        let (ch, lv) = (self.state.channels, self.state.levels);
        let x = &self.state.amplitudes;
        let [k1, k2, k3, k4] = &mut self.k;
        let (tmp, z, sq) = (&mut self.tmp, &mut self.z, &self.sqrt);

        ladder(w, t0, ch, lv, sq, x, z);
        k1.iter_mut().for_each(|v| *v = ZERO);
        mix_into(pre, j0, ch, lv, z, k1);

        let mid = Midpoint {
            omega: w,
            t0,
            t1,
            j0,
            j1,
            c: half,
            channels: ch,
            levels: lv,
            sqrt: sq,
        };
        mid.stage(x, k1, 0.5 * h, tmp, z, k2);
        mid.stage(x, k2, 0.5 * h, tmp, z, k3);

        for ((t, a), b) in tmp.iter_mut().zip(x).zip(k3.iter()) {
            *t = a + b * h;
        }
        ladder(w, t1, ch, lv, sq, tmp, z);
        k4.iter_mut().for_each(|v| *v = ZERO);
        mix_into(pre, j1, ch, lv, z, k4);

        let h6 = h / 6.0;
        for (i, a) in self.state.amplitudes.iter_mut().enumerate() {
            let inc = (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * h6;
            linalg::compensated_add(a, &mut self.carry[i], inc);
        }
        self.state.time = t1;
    }
}

fn chunk_len(chunk_bytes: usize, channels: usize, steps: usize) -> usize {
    let per_step = channels * channels * std::mem::size_of::<C64>();
    (chunk_bytes / per_step.max(1)).clamp(1, steps.max(1))
}

/// Table slices `s ..= e`.
struct ChunkSlices {
    start: usize,
    mm: usize,
    slices: Vec<C64>,
    /// `max(‖J_k‖, ‖J_{k+1}‖)` per step, with the max-row-sum norm.
    norms: Vec<f64>,
}

impl ChunkSlices {
    fn load<S: CurrentSource + ?Sized>(source: &mut S, s: usize, e: usize) -> Result<Self> {
        let mm = source.channels() * source.channels();
        let mut slices = Vec::with_capacity((e - s + 1) * mm);
        source.read_slices(s, e - s + 1, &mut slices)?;
        let ch = source.channels();
        let row_norm = |k: usize| {
            let sl = &slices[k * mm..(k + 1) * mm];
            (0..ch)
                .map(|m| sl[m * ch..(m + 1) * ch].iter().map(|z| z.norm()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let point: Vec<f64> = (0..=e - s).map(row_norm).collect();
        let norms = point.windows(2).map(|w| w[0].max(w[1])).collect();
        Ok(ChunkSlices {
            start: s,
            mm,
            slices,
            norms,
        })
    }

    fn norm(&self, k: usize) -> f64 {
        self.norms[k - self.start]
    }

    fn slice(&self, k: usize) -> &[C64] {
        let i = k - self.start;
        &self.slices[i * self.mm..(i + 1) * self.mm]
    }
}

/// Integrate every mode in `modes` through the whole table.
///
/// The table is read once, chunk by chunk; modes advance in parallel within
/// each chunk.
pub fn integrate_modes<S: CurrentSource + ?Sized>(
    source: &mut S,
    modes: &[ModeConfig],
    options: &IntegratorOptions,
) -> Result<Vec<ModeStateSet>> {
    for m in modes {
        m.validate()?;
    }
    let times = source.times().to_vec();
    let n = times.len();
    if n < 2 {
        return Err(Error::param("current table needs at least two time points"));
    }
    let channels = source.channels();
    let mut ints = modes
        .iter()
        .map(|&md| ModeIntegrator::new(md, channels, options.initial_channel, times[0], options.amplitude_floor))
        .collect::<Result<Vec<_>>>()?;

    let steps = n - 1;
    let chunk = chunk_len(options.chunk_bytes, channels, steps);
    let mut s = 0;
    while s < steps {
        let e = (s + chunk).min(steps);
        let data = ChunkSlices::load(source, s, e)?;
        ints.par_iter_mut().try_for_each(|it| {
            for k in s..e {
                it.step(times[k], times[k + 1], data.slice(k), data.slice(k + 1), data.norm(k));
            }
            let drift = (it.state.total_norm() - 1.0).abs();
            if !(drift <= PHOTON_NORM_LIMIT) {
                return Err(Error::numerical(format!(
                    "photonic norm drift {drift:.3e} for mode ω = {} at t = {:.4}; reduce dt",
                    it.state.mode.omega, times[e]
                )));
            }
            Ok(())
        })?;
        s = e;
    }
    Ok(ints.into_iter().map(ModeIntegrator::finish).collect())
}

pub fn integrate_mode(
    table: &TransitionCurrentTable,
    mode: ModeConfig,
    options: &IntegratorOptions,
) -> Result<ModeStateSet> {
    let mut out = integrate_modes(&mut TableView(table), &[mode], options)?;
    Ok(out.remove(0))
}

/// Displacement of the coherent state produced by a purely diagonal current.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherentAmplitude {
    pub omega: f64,
    pub time: f64,
    pub beta: C64,
}

impl CoherentAmplitude {
    pub fn n_mean(&self) -> f64 {
        self.beta.norm_sqr()
    }

    pub fn moments(&self) -> PhotonMoments {
        PhotonMoments::coherent(self.omega, self.time, self.beta)
    }
}

/// `∫₀ᵗ j(t′) e^{iωt′} dt′` by the trapezoidal rule, `t` clamped to the grid;
/// the final partial interval uses a linearly interpolated current.
pub fn running_transform(times: &[f64], j: &[f64], omega: f64, t: f64) -> C64 {
    let (mut acc, mut carry) = (ZERO, ZERO);
    if times.is_empty() {
        return acc;
    }
    let t = t.clamp(times[0], *times.last().unwrap());
    for k in 1..times.len() {
        let (a, b) = (times[k - 1], times[k]);
        if a >= t {
            break;
        }
        let f0 = C64::from_polar(j[k - 1], omega * a);
        if b <= t {
            let f1 = C64::from_polar(j[k], omega * b);
            linalg::compensated_add(&mut acc, &mut carry, (f0 + f1) * (0.5 * (b - a)));
        } else {
            let s = (t - a) / (b - a);
            let jt = j[k - 1] + s * (j[k] - j[k - 1]);
            let f1 = C64::from_polar(jt, omega * t);
            linalg::compensated_add(&mut acc, &mut carry, (f0 + f1) * (0.5 * (t - a)));
        }
    }
    acc + carry
}

/// `β(t) = -i (g0/√ω) ∫₀ᵗ e^{iωt′} j(t′) dt′`.
///
/// At the end of the grid this is the same quadrature, summed in the same
/// order, as [`fourier_transform_real`], so the analytic and semiclassical
/// spectra agree even where the transform cancels to rounding level.
pub fn coherent_amplitude(times: &[f64], j_diag: &[f64], mode: &ModeConfig, t: f64) -> CoherentAmplitude {
    let integral = match times.last() {
        Some(&end) if t >= end => fourier_transform_real(times, j_diag, mode.omega),
        _ => running_transform(times, j_diag, mode.omega, t),
    };
    CoherentAmplitude {
        omega: mode.omega,
        time: t.clamp(
            times.first().copied().unwrap_or(0.0),
            times.last().copied().unwrap_or(0.0),
        ),
        beta: C64::new(0.0, -mode.coupling()) * integral,
    }
}

/// First-order amplitudes `b_m = -i (g0/√ω) ∫ e^{iωt} j_{m,i}(t) dt` for every
/// mode (outer index) and channel (inner index).
pub fn perturbative_amplitudes<S: CurrentSource + ?Sized>(
    source: &mut S,
    modes: &[ModeConfig],
    initial: usize,
    chunk_bytes: usize,
) -> Result<Vec<Vec<C64>>> {
    for m in modes {
        m.validate()?;
    }
    let times = source.times().to_vec();
    let channels = source.channels();
    if initial >= channels {
        return Err(Error::param(format!("initial channel {initial} out of {channels}")));
    }
    let mm = channels * channels;
    let weights = trapezoid_weights(&times);
    let mut acc = vec![(vec![ZERO; channels], vec![ZERO; channels]); modes.len()];
    let chunk = chunk_len(chunk_bytes, channels, times.len());
    let mut buf = Vec::new();
    let mut s = 0;
    while s < times.len() {
        let e = (s + chunk).min(times.len());
        buf.clear();
        source.read_slices(s, e - s, &mut buf)?;
        acc.par_iter_mut().zip(modes.par_iter()).for_each(|((a, carry), md)| {
            for k in s..e {
                let (sin, cos) = (md.omega * times[k]).sin_cos();
                let ph = C64::new(weights[k] * cos, weights[k] * sin);
                let slice = &buf[(k - s) * mm..(k - s + 1) * mm];
                for (m, (am, cm)) in a.iter_mut().zip(carry.iter_mut()).enumerate() {
                    let z = slice[m * channels + initial];
                    // The diagonal is real; rounding it exactly like the
                    // coherent amplitude keeps the two paths identical.
                    let term = if m == initial {
                        let r = weights[k] * z.re;
                        C64::new(r * cos, r * sin)
                    } else {
                        z * ph
                    };
                    linalg::compensated_add(am, cm, term);
                }
            }
        });
        s = e;
    }
    Ok(acc
        .into_iter()
        .zip(modes)
        .map(|((a, carry), md)| {
            let pre = C64::new(0.0, -md.coupling());
            a.iter().zip(&carry).map(|(z, c)| (z + c) * pre).collect()
        })
        .collect())
}

/// Unnormalised first-order state: vacuum plus `b_i |1⟩` on the initial
/// channel and `b_m |1⟩` on every other channel.
pub fn perturbative_state<S: CurrentSource + ?Sized>(
    source: &mut S,
    modes: &[ModeConfig],
    initial: usize,
    chunk_bytes: usize,
) -> Result<Vec<ModeStateSet>> {
    let t_end = *source
        .times()
        .last()
        .ok_or_else(|| Error::param("empty current table"))?;
    let amps = perturbative_amplitudes(source, modes, initial, chunk_bytes)?;
    modes
        .iter()
        .zip(amps)
        .map(|(md, b)| {
            let channels = b.len();
            let mut data = vec![ZERO; channels * 2];
            data[initial * 2] = C64::new(1.0, 0.0);
            for (m, bm) in b.into_iter().enumerate() {
                data[m * 2 + 1] = bm;
            }
            ModeStateSet::new(*md, channels, 2, t_end, data)
        })
        .collect()
}

/// Reference integration of up to three modes coupled through the shared
/// electronic channels, in the joint truncated Fock space.
///
/// This keeps the inter-mode correlations that the per-mode integrator
/// drops; it is only practical for a handful of channels and a small cutoff.
pub fn integrate_coupled_modes(
    table: &TransitionCurrentTable,
    modes: &[ModeConfig],
    cutoff: usize,
    initial: usize,
) -> Result<Vec<PhotonMoments>> {
    if modes.is_empty() || modes.len() > 3 {
        return Err(Error::param("the coupled reference takes one to three modes"));
    }
    if cutoff == 0 || cutoff > 8 {
        return Err(Error::param("coupled reference cutoff must be in 1..=8"));
    }
    for m in modes {
        m.validate()?;
    }
    let channels = table.channels();
    if initial >= channels {
        return Err(Error::param(format!("initial channel {initial} out of {channels}")));
    }
    let times = table.times();
    let n = times.len();
    if n < 2 {
        return Err(Error::param("current table needs at least two time points"));
    }
    let levels = cutoff + 1;
    let k_modes = modes.len();
    let block = levels.pow(k_modes as u32);
    let stride: Vec<usize> = (0..k_modes).map(|k| levels.pow(k as u32)).collect();
    let occ = |p: usize, k: usize| (p / stride[k]) % levels;
    let sq: Vec<f64> = (0..=levels).map(|l| (l as f64).sqrt()).collect();

    let len = channels * block;
    let mut x = vec![ZERO; len];
    x[initial * block] = C64::new(1.0, 0.0);
    // `z = Σ_k c_k (d_k a_k + u_k a_k†) x` at time `t`.
    let ladders = |t: f64, x: &[C64], z: &mut [C64]| {
        z.iter_mut().for_each(|v| *v = ZERO);
        for (k, md) in modes.iter().enumerate() {
            let c = C64::new(0.0, -md.coupling());
            let d = C64::from_polar(1.0, -md.omega * t);
            let u = d.conj();
            for ch in 0..channels {
                let xs = &x[ch * block..(ch + 1) * block];
                for p in 0..block {
                    let l = occ(p, k);
                    let lower = if l + 1 < levels {
                        d * xs[p + stride[k]] * sq[l + 1]
                    } else {
                        ZERO
                    };
                    let raise = if l >= 1 { u * xs[p - stride[k]] * sq[l] } else { ZERO };
                    z[ch * block + p] += c * (lower + raise);
                }
            }
        }
    };

    let one = C64::new(1.0, 0.0);
    let half = C64::new(0.5, 0.0);
    let mut z = vec![ZERO; len];
    let mut ks = [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]];
    let mut tmp = vec![ZERO; len];
    for k in 0..n - 1 {
        let (t0, t1) = (times[k], times[k + 1]);
        let (j0, j1) = (table.slice(k), table.slice(k + 1));
        let h = t1 - t0;
        for stage in 0..4 {
            let (prev, rest) = ks.split_at_mut(stage);
            let out = &mut rest[0];
            let src: &[C64] = match stage {
                0 => &x,
                _ => {
                    let frac = if stage == 3 { h } else { 0.5 * h };
                    tmp.iter_mut()
                        .zip(&x)
                        .zip(&prev[stage - 1])
                        .for_each(|((t, a), b)| *t = a + b * frac);
                    &tmp
                }
            };
            out.iter_mut().for_each(|v| *v = ZERO);
            if stage != 3 {
                ladders(t0, src, &mut z);
                mix_into(if stage == 0 { one } else { half }, j0, channels, block, &z, out);
            }
            if stage != 0 {
                ladders(t1, src, &mut z);
                mix_into(if stage == 3 { one } else { half }, j1, channels, block, &z, out);
            }
        }
        let [k1, k2, k3, k4] = &ks;
        for i in 0..len {
            x[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }

    let t_end = times[n - 1];
    let mut out = Vec::with_capacity(k_modes);
    for (k, md) in modes.iter().enumerate() {
        let mut mom = PhotonMoments {
            omega: md.omega,
            time: t_end,
            norm: 0.0,
            n: 0.0,
            n2: 0.0,
            factorial2: 0.0,
            a: ZERO,
            a2: ZERO,
        };
        for ch in 0..channels {
            let xs = &x[ch * block..(ch + 1) * block];
            for p in 0..block {
                let l = occ(p, k);
                let lf = l as f64;
                let pr = xs[p].norm_sqr();
                mom.norm += pr;
                mom.n += lf * pr;
                mom.n2 += lf * lf * pr;
                mom.factorial2 += lf * (lf - 1.0) * pr;
                if l >= 1 {
                    mom.a += xs[p - stride[k]].conj() * xs[p] * sq[l];
                }
                if l >= 2 {
                    mom.a2 += xs[p - 2 * stride[k]].conj() * xs[p] * (lf * (lf - 1.0)).sqrt();
                }
            }
        }
        out.push(mom);
    }
    Ok(out)
}
