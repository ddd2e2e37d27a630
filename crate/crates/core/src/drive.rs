//! Classical driving pulse and the simulation time grid.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_A0: f64 = 0.194;
pub const DEFAULT_OMEGA_L: f64 = 0.005;
pub const DEFAULT_CYCLES: u32 = 10;

/// `A(t) = A0 sin(ωL t + Nc π) sin²(ωL t / 2Nc)` on `[0, 2π Nc / ωL]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub a0: f64,
    pub omega_l: f64,
    pub cycles: u32,
}

impl Default for PulseParams {
    fn default() -> Self {
        PulseParams {
            a0: DEFAULT_A0,
            omega_l: DEFAULT_OMEGA_L,
            cycles: DEFAULT_CYCLES,
        }
    }
}

impl PulseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a0 >= 0.0) {
            return Err(Error::param(format!("A0 must be non-negative, got {}", self.a0)));
        }
        if !(self.omega_l > 0.0) {
            return Err(Error::param(format!("omega_L must be positive, got {}", self.omega_l)));
        }
        if self.cycles < 1 {
            return Err(Error::param("pulse needs at least one cycle"));
        }
        Ok(())
    }

    pub fn t_start(&self) -> f64 {
        0.0
    }

    pub fn t_end(&self) -> f64 {
        TAU * self.cycles as f64 / self.omega_l
    }

    /// Peak field `F0 = A0 ωL`.
    pub fn peak_field(&self) -> f64 {
        self.a0 * self.omega_l
    }
}

pub fn vector_potential(t: f64, p: &PulseParams) -> f64 {
    if !(0.0..=p.t_end()).contains(&t) {
        return 0.0;
    }
    let nc = p.cycles as f64;
    let envelope = (p.omega_l * t / (2.0 * nc)).sin();
    p.a0 * (p.omega_l * t + nc * PI).sin() * envelope * envelope
}

/// Uniform grid `0, dt, 2dt, …` with `floor(t_end/dt) + 1` points; the last
/// point is moved onto `t_end`.
pub fn time_grid(p: &PulseParams, dt: f64) -> Result<Vec<f64>> {
    grid_to(p.t_end(), dt)
}

pub fn grid_to(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::param(format!("time step must be positive, got {dt}")));
    }
    if dt >= t_end {
        return Err(Error::param(format!(
            "time step {dt} is not smaller than the duration {t_end}"
        )));
    }
    let steps = (t_end / dt).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    *grid.last_mut().unwrap() = t_end;
    Ok(grid)
}
