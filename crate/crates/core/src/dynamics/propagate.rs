use rayon::prelude::*;

use super::eigen::EigenSet;
use super::krylov::KrylovWorkspace;
use super::table::TransitionCurrentTable;
use crate::drive::{time_grid, vector_potential, PulseParams};
use crate::error::{Error, Result};
use crate::lattice::SectorBasis;
use crate::linalg::{self, C64, ZERO};
use crate::operators::{HoppingTemplate, ModelParams, SparseOperator};

/// Krylov dimension used for every step. Four vectors leave an error of a
/// few 1e-5 over a pulse at dt = 0.5 and U = 10 t0; six bring it near 1e-11.
pub const DEFAULT_KRYLOV_DIM: usize = 6;
/// Abort threshold on `|‖ψ‖ - 1|`.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationOptions {
    pub dt: f64,
    pub krylov_dim: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            dt: 0.5,
            krylov_dim: DEFAULT_KRYLOV_DIM,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PropagationReport {
    pub steps: usize,
    pub max_norm_drift: f64,
}

/// Lock-step propagation of a set of states through the pulse.
///
/// Each step uses the Hamiltonian frozen at the interval midpoint.
pub struct ElectronPropagator<'a> {
    template: &'a HoppingTemplate,
    params: ModelParams,
    pulse: PulseParams,
    grid: Vec<f64>,
    step: usize,
    states: Vec<Vec<C64>>,
    workspaces: Vec<KrylovWorkspace>,
    hamiltonian: SparseOperator,
    current: SparseOperator,
    scratch: Vec<Vec<C64>>,
    max_drift: f64,
}

impl<'a> ElectronPropagator<'a> {
    pub fn new(
        template: &'a HoppingTemplate,
        initial: Vec<Vec<C64>>,
        params: &ModelParams,
        pulse: &PulseParams,
        grid: Vec<f64>,
        krylov_dim: usize,
    ) -> Result<Self> {
        let dim = template.dimension();
        if initial.iter().any(|v| v.len() != dim) {
            return Err(Error::param("initial state dimension differs from the basis"));
        }
        if grid.len() < 2 {
            return Err(Error::param("time grid needs at least two points"));
        }
        let workspaces = (0..initial.len())
            .map(|_| KrylovWorkspace::new(dim, krylov_dim))
            .collect::<Result<Vec<_>>>()?;
        let scratch = vec![vec![ZERO; dim]; initial.len()];
        Ok(ElectronPropagator {
            template,
            params: *params,
            pulse: *pulse,
            hamiltonian: template.hamiltonian(params, 0.0),
            current: template.current(params, vector_potential(grid[0], pulse)),
            grid,
            step: 0,
            states: initial,
            workspaces,
            scratch,
            max_drift: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.grid[self.step]
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn is_finished(&self) -> bool {
        self.step + 1 >= self.grid.len()
    }

    pub fn states(&self) -> &[Vec<C64>] {
        &self.states
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn advance(&mut self) -> Result<()> {
        if self.is_finished() {
            return Err(Error::param("propagation already reached the end of the grid"));
        }
        let (t0, t1) = (self.grid[self.step], self.grid[self.step + 1]);
        let dt = t1 - t0;
        let a_mid = vector_potential(0.5 * (t0 + t1), &self.pulse);
        self.template
            .refill_hamiltonian(&mut self.hamiltonian, &self.params, a_mid);
        let h = &self.hamiltonian;
        self.states
            .par_iter_mut()
            .zip(self.workspaces.par_iter_mut())
            .for_each(|(psi, ws)| ws.step(psi, h, dt));
        self.step += 1;

        let drift = self
            .states
            .iter()
            .map(|v| (linalg::norm(v) - 1.0).abs())
            // NaN must survive the reduction so the check below sees it.
            .fold(0.0, |acc: f64, d| {
                if acc.is_nan() || d.is_nan() {
                    f64::NAN
                } else {
                    acc.max(d)
                }
            });
        self.max_drift = self.max_drift.max(drift);
        if !(drift <= NORM_DRIFT_LIMIT) {
            return Err(Error::numerical(format!(
                "norm drift {drift:.3e} at t = {:.4} exceeds {NORM_DRIFT_LIMIT:.0e}; reduce dt",
                self.grid[self.step]
            )));
        }
        Ok(())
    }

    /// Fill `out` (row-major `M × M`) with `⟨ψ_m(t)| j(t) |ψ_n(t)⟩` at the
    /// current grid time.
    pub fn currents(&mut self, out: &mut [C64]) {
        let m = self.states.len();
        debug_assert_eq!(out.len(), m * m);
        let a_now = vector_potential(self.time(), &self.pulse);
        self.template.refill_current(&mut self.current, &self.params, a_now);
        let j = &self.current;
        self.scratch
            .par_iter_mut()
            .zip(self.states.par_iter())
            .for_each(|(w, psi)| j.apply(psi, w));
        let states = &self.states;
        let scratch = &self.scratch;
        out.par_chunks_mut(m).enumerate().for_each(|(row, chunk)| {
            for (col, z) in chunk.iter_mut().enumerate() {
                *z = linalg::dot(&states[row], &scratch[col]);
            }
        });
    }
}

/// Stored snapshots of every propagated eigenstate.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `states[k][m]`: state `m` at `times[k]`.
    pub states: Vec<Vec<Vec<C64>>>,
    template: HoppingTemplate,
    pub report: PropagationReport,
}

impl Trajectory {
    pub fn template(&self) -> &HoppingTemplate {
        &self.template
    }
}

/// Propagate every eigenstate of `eigs` through the pulse and keep all
/// intermediate states. Intended for small sectors; production runs stream
/// through [`stream_transition_currents`].
pub fn propagate_all(
    eigs: &EigenSet,
    basis: &SectorBasis,
    params: &ModelParams,
    pulse: &PulseParams,
    options: &PropagationOptions,
) -> Result<Trajectory> {
    let template = HoppingTemplate::new(basis);
    let grid = time_grid(pulse, options.dt)?;
    let mut prop = ElectronPropagator::new(
        &template,
        eigs.vectors.clone(),
        params,
        pulse,
        grid.clone(),
        options.krylov_dim,
    )?;
    let mut states = Vec::with_capacity(grid.len());
    states.push(prop.states().to_vec());
    while !prop.is_finished() {
        prop.advance()?;
        states.push(prop.states().to_vec());
    }
    let report = PropagationReport {
        steps: grid.len() - 1,
        max_norm_drift: prop.max_norm_drift(),
    };
    Ok(Trajectory {
        times: grid,
        states,
        template,
        report,
    })
}

/// Transition-current table from a stored trajectory.
pub fn transition_currents(traj: &Trajectory, params: &ModelParams, pulse: &PulseParams) -> TransitionCurrentTable {
    let m = traj.states.first().map_or(0, Vec::len);
    let mut table = TransitionCurrentTable::with_capacity(traj.times.clone(), m);
    let mut slice = vec![ZERO; m * m];
    let mut j = traj.template.current(params, 0.0);
    for (k, &t) in traj.times.iter().enumerate() {
        traj.template.refill_current(&mut j, params, vector_potential(t, pulse));
        let states = &traj.states[k];
        let applied: Vec<Vec<C64>> = states.par_iter().map(|psi| j.mul_vec(psi)).collect();
        for (row, u) in states.iter().enumerate() {
            for (col, w) in applied.iter().enumerate() {
                slice[row * m + col] = linalg::dot(u, w);
            }
        }
        table.push_slice(&slice);
    }
    table
}

/// Propagate the given channels and hand each time slice of the table to
/// `sink` as soon as it is available. Only the current states are held in
/// memory.
pub fn stream_transition_currents<F>(
    initial: Vec<Vec<C64>>,
    basis: &SectorBasis,
    params: &ModelParams,
    pulse: &PulseParams,
    options: &PropagationOptions,
    mut sink: F,
) -> Result<PropagationReport>
where
    F: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    let template = HoppingTemplate::new(basis);
    let grid = time_grid(pulse, options.dt)?;
    let m = initial.len();
    let mut prop = ElectronPropagator::new(&template, initial, params, pulse, grid, options.krylov_dim)?;
    let mut slice = vec![ZERO; m * m];
    loop {
        prop.currents(&mut slice);
        sink(prop.step_index(), prop.time(), &slice)?;
        if prop.is_finished() {
            break;
        }
        prop.advance()?;
    }
    Ok(PropagationReport {
        steps: prop.step_index(),
        max_norm_drift: prop.max_norm_drift(),
    })
}

/// In-memory table for the lowest `channels` eigenstates (all when `None`).
pub fn compute_transition_currents(
    eigs: &EigenSet,
    basis: &SectorBasis,
    params: &ModelParams,
    pulse: &PulseParams,
    options: &PropagationOptions,
    channels: Option<usize>,
) -> Result<(TransitionCurrentTable, PropagationReport)> {
    let m = channels.unwrap_or(eigs.count()).min(eigs.count());
    let grid = time_grid(pulse, options.dt)?;
    let mut table = TransitionCurrentTable::with_capacity(grid, m);
    let report = stream_transition_currents(eigs.vectors[..m].to_vec(), basis, params, pulse, options, |_, _, s| {
        table.push_slice(s);
        Ok(())
    })?;
    Ok((table, report))
}
