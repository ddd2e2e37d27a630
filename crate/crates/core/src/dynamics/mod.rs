//! Field-free eigenstates, their propagation through the pulse and the
//! transition currents between them.

mod eigen;
mod krylov;
mod propagate;
mod table;

pub use eigen::{diagonalize_field_free, eigenvector_matrix, EigenSet};
pub use krylov::{krylov_step, KrylovWorkspace};
pub use propagate::{
    compute_transition_currents, propagate_all, stream_transition_currents, transition_currents, ElectronPropagator,
    PropagationOptions, PropagationReport, Trajectory, DEFAULT_KRYLOV_DIM, NORM_DRIFT_LIMIT,
};
pub use table::{CurrentSource, TableView, TransitionCurrentTable};
