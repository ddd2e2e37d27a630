//! Reductions of photonic states and currents to the reported quantities:
//! photon-number moments, spectra, Mandel Q, quadrature squeezing and
//! frequency-window averages.

use std::f64::consts::{LN_10, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64, ZERO};
use crate::photonics::ModeStateSet;
use crate::SPEED_OF_LIGHT;

/// Below this mean photon number Q is reported as undefined.
pub const MIN_PHOTON_NUMBER: f64 = 1e-300;
/// Default half-width of the averaging window, in units of ω_L.
pub const DEFAULT_WINDOW_HALFWIDTH: f64 = 0.2;

/// Raw (unnormalised) single-mode moments summed over electronic channels.
///
/// `a` and `a2` are interaction-picture values; the lab-frame values carry
/// the free-field phases `e^{-iωt}` and `e^{-2iωt}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonMoments {
    pub omega: f64,
    pub time: f64,
    /// `Σ_m ⟨χ_m|χ_m⟩`
    pub norm: f64,
    pub n: f64,
    pub n2: f64,
    /// `⟨n(n-1)⟩ = ⟨a†² a²⟩`, kept separately to avoid cancellation.
    pub factorial2: f64,
    pub a: C64,
    pub a2: C64,
}

impl PhotonMoments {
    pub fn from_state(state: &ModeStateSet) -> Self {
        let levels = state.levels();
        let mut norm = 0.0;
        let mut n = 0.0;
        let mut n2 = 0.0;
        let mut f2 = 0.0;
        let mut a = ZERO;
        let mut a2 = ZERO;
        for m in 0..state.channels() {
            let c = state.channel(m);
            for (l, z) in c.iter().enumerate() {
                let p = z.norm_sqr();
                let lf = l as f64;
                norm += p;
                n += lf * p;
                n2 += lf * lf * p;
                f2 += lf * (lf - 1.0) * p;
                if l >= 1 {
                    a += c[l - 1].conj() * z * lf.sqrt();
                }
                if l >= 2 {
                    a2 += c[l - 2].conj() * z * (lf * (lf - 1.0)).sqrt();
                }
            }
        }
        debug_assert_eq!(levels, state.levels());
        PhotonMoments {
            omega: state.mode.omega,
            time: state.time,
            norm,
            n,
            n2,
            factorial2: f2,
            a,
            a2,
        }
    }

    /// Moments of the coherent state `|β⟩`.
    pub fn coherent(omega: f64, time: f64, beta: C64) -> Self {
        let p = beta.norm_sqr();
        PhotonMoments {
            omega,
            time,
            norm: 1.0,
            n: p,
            n2: p * p + p,
            factorial2: p * p,
            a: beta,
            a2: beta * beta,
        }
    }

    pub fn a_lab(&self) -> C64 {
        self.a * C64::from_polar(1.0, -self.omega * self.time)
    }

    pub fn a2_lab(&self) -> C64 {
        self.a2 * C64::from_polar(1.0, -2.0 * self.omega * self.time)
    }
}

/// `Σ_m Σ_n |c_n^{(m)}|² n^l`.
pub fn number_moment(state: &ModeStateSet, l: u32) -> f64 {
    let mut acc = 0.0;
    for m in 0..state.channels() {
        for (n, z) in state.channel(m).iter().enumerate() {
            acc += (n as f64).powi(l as i32) * z.norm_sqr();
        }
    }
    acc
}

/// `⟨X(θ)²⟩ - ⟨X(θ)⟩²` with `X(θ) = (a e^{-iθ} + a† e^{iθ})/2`.
pub fn quadrature_variance(m: &PhotonMoments, theta: f64) -> f64 {
    let rot = C64::from_polar(1.0, -theta);
    let second = (m.norm + 2.0 * m.n + 2.0 * (m.a2_lab() * rot * rot).re) / 4.0;
    let first = (m.a_lab() * rot).re;
    second - first * first
}

/// Smallest quadrature variance over θ, from the closed form
/// `(⟨1⟩ + 2⟨n⟩ - 2|⟨a⟩|² - 2|⟨a²⟩ - ⟨a⟩²|) / 4`.
pub fn min_quadrature_variance(m: &PhotonMoments) -> f64 {
    (m.norm + 2.0 * excess(m)) / 4.0
}

fn excess(m: &PhotonMoments) -> f64 {
    (m.n - m.a.norm_sqr()) - (m.a2 - m.a * m.a).norm()
}

/// Minimum variance by sampling θ on `[0, π)`; used to cross-check the
/// closed form.
pub fn min_quadrature_variance_sampled(m: &PhotonMoments, samples: usize) -> f64 {
    (0..samples.max(1))
        .map(|k| quadrature_variance(m, PI * k as f64 / samples.max(1) as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Mandel `Q = (⟨n²⟩ - ⟨n⟩²)/⟨n⟩ - 1`, or `None` for an (almost) empty mode.
pub fn mandel_q(m: &PhotonMoments) -> Option<f64> {
    if m.n < MIN_PHOTON_NUMBER {
        return None;
    }
    // Algebraically identical to the definition, without subtracting
    // ⟨n²⟩ and ⟨n⟩ of nearly equal size.
    Some(m.factorial2 / m.n - m.n)
}

/// Squeezing `η = -10 log10(4 min_θ Var X(θ))` in dB.
pub fn squeezing_db(m: &PhotonMoments) -> f64 {
    let deviation = (m.norm - 1.0) + 2.0 * excess(m);
    -10.0 / LN_10 * deviation.ln_1p()
}

/// Squeezing from a θ grid instead of the closed form.
pub fn squeezing_db_sampled(m: &PhotonMoments, samples: usize) -> f64 {
    -10.0 * (4.0 * min_quadrature_variance_sampled(m, samples)).log10()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Quantum,
    Semiclassical,
    AnalyticU0,
    Perturbative,
}

/// Spectrum on a mode grid. `omegas` are in units of ω_L.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    pub omegas: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
}

impl SpectrumSeries {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Value at the grid point closest to `omega` (units of ω_L).
    pub fn at(&self, omega: f64) -> Option<f64> {
        let idx = self
            .omegas
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - omega).abs().total_cmp(&(b.1 - omega).abs()))?
            .0;
        Some(self.values[idx])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticsSeries {
    pub omegas: Vec<f64>,
    pub q_values: Vec<Option<f64>>,
    pub eta_values: Vec<f64>,
}

impl StatisticsSeries {
    pub fn from_moments(moments: &[PhotonMoments], omega_l: f64) -> Self {
        StatisticsSeries {
            omegas: moments.iter().map(|m| m.omega / omega_l).collect(),
            q_values: moments.iter().map(mandel_q).collect(),
            eta_values: moments.iter().map(squeezing_db).collect(),
        }
    }
}

/// `(2π)² c³`, the solid-angle and field normalisation of the spectrum.
pub fn spectrum_normalisation() -> f64 {
    4.0 * PI * PI * SPEED_OF_LIGHT.powi(3)
}

/// `S(ω) = ω³ ⟨n⟩ / (g0² (2π)² c³)`; `omegas` in a.u.
pub fn quantum_spectrum(
    omegas: &[f64],
    n_means: &[f64],
    g0: f64,
    omega_l: f64,
    kind: SpectrumKind,
) -> Result<SpectrumSeries> {
    if omegas.len() != n_means.len() {
        return Err(Error::param("mode grid and photon numbers differ in length"));
    }
    if g0 <= 0.0 {
        return Err(Error::param("the spectrum needs g0 > 0"));
    }
    let norm = spectrum_normalisation();
    let values = omegas
        .iter()
        .zip(n_means)
        .map(|(&w, &n)| (w.powi(3) * n / (g0 * g0 * norm)).max(0.0))
        .collect();
    Ok(SpectrumSeries {
        omegas: omegas.iter().map(|w| w / omega_l).collect(),
        values,
        kind,
    })
}

/// Trapezoidal weights of a (possibly non-uniform) grid.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = times[k + 1] - times[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

/// `∫ j(t) e^{iωt} dt` over the whole grid by the trapezoidal rule.
pub fn fourier_transform(times: &[f64], values: &[C64], omega: f64) -> C64 {
    let w = trapezoid_weights(times);
    linalg::compensated_sum(
        times
            .iter()
            .zip(values)
            .zip(&w)
            .map(|((&t, &v), &wk)| v * C64::from_polar(wk, omega * t)),
    )
}

pub fn fourier_transform_real(times: &[f64], values: &[f64], omega: f64) -> C64 {
    let w = trapezoid_weights(times);
    linalg::compensated_sum(
        times
            .iter()
            .zip(values)
            .zip(&w)
            .map(|((&t, &v), &wk)| C64::from_polar(wk * v, omega * t)),
    )
}

/// `S_cl(ω) = ω² |j̃(ω)|²` on a grid of `omegas` (a.u.).
pub fn semiclassical_spectrum(times: &[f64], j_diag: &[f64], omegas: &[f64], omega_l: f64) -> SpectrumSeries {
    use rayon::prelude::*;
    let values = omegas
        .par_iter()
        .map(|&w| w * w * fourier_transform_real(times, j_diag, w).norm_sqr())
        .collect();
    SpectrumSeries {
        omegas: omegas.iter().map(|w| w / omega_l).collect(),
        values,
        kind: SpectrumKind::Semiclassical,
    }
}

/// The semiclassical spectrum scaled by `1/((2π)² c³)` so that it lies on
/// the quantum spectrum.
pub fn overlay_scaled(series: &SpectrumSeries) -> SpectrumSeries {
    let norm = spectrum_normalisation();
    SpectrumSeries {
        omegas: series.omegas.clone(),
        values: series.values.iter().map(|v| v / norm).collect(),
        kind: series.kind,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// `[ω′ - h, ω′ + h]`
    #[default]
    Absolute,
    /// `[ω′ (1 - h), ω′ (1 + h)]`
    Relative,
}

/// Arithmetic mean of the samples inside the window around `center`.
/// `omegas`, `center` and `halfwidth` share one unit.
pub fn window_average(omegas: &[f64], values: &[f64], center: f64, halfwidth: f64, mode: WindowMode) -> Result<f64> {
    if omegas.len() != values.len() {
        return Err(Error::param("grid and values differ in length"));
    }
    let h = match mode {
        WindowMode::Absolute => halfwidth,
        WindowMode::Relative => halfwidth * center.abs(),
    };
    let slack = 1e-9 * h.abs().max(center.abs()).max(1e-300);
    let (lo, hi) = (center - h - slack, center + h + slack);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&w, &v) in omegas.iter().zip(values) {
        if w >= lo && w <= hi {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::param(format!("no samples in the window {center} ± {h}")));
    }
    Ok(sum / count as f64)
}

/// Window average over the defined entries of an optional series.
pub fn window_average_defined(
    omegas: &[f64],
    values: &[Option<f64>],
    center: f64,
    halfwidth: f64,
    mode: WindowMode,
) -> Result<f64> {
    let (w, v): (Vec<f64>, Vec<f64>) = omegas
        .iter()
        .zip(values)
        .filter_map(|(&w, v)| v.map(|v| (w, v)))
        .unzip();
    window_average(&w, &v, center, halfwidth, mode)
}

/// Running `ω² |∫₀ᵗ j(t′) e^{iωt′} dt′|²` on every grid point.
pub fn time_resolved_occupation(times: &[f64], j_diag: &[f64], omega: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = ZERO;
    out.push(0.0);
    for k in 1..times.len() {
        let h = times[k] - times[k - 1];
        let f0 = C64::from_polar(j_diag[k - 1], omega * times[k - 1]);
        let f1 = C64::from_polar(j_diag[k], omega * times[k]);
        acc += (f0 + f1) * (0.5 * h);
        out.push(omega * omega * acc.norm_sqr());
    }
    out.truncate(times.len());
    out
}

/// Single-time version of [`time_resolved_occupation`]; `t` is clamped to
/// the grid and the last partial interval is integrated with a linearly
/// interpolated current.
pub fn occupation_at(times: &[f64], j_diag: &[f64], omega: f64, t: f64) -> f64 {
    let beta = crate::photonics::running_transform(times, j_diag, omega, t);
    omega * omega * beta.norm_sqr()
}
