use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::SectorBasis;
use crate::linalg::{self, C64, ZERO};
use crate::operators::{HoppingTemplate, ModelParams, SparseOperator};

/// Field-free eigenpairs of one sector, ascending in energy.
#[derive(Clone, Debug)]
pub struct EigenSet {
    pub energies: Vec<f64>,
    /// `vectors[m]` is eigenstate `m` in the sector basis.
    pub vectors: Vec<Vec<C64>>,
}

impl EigenSet {
    pub fn count(&self) -> usize {
        self.energies.len()
    }

    pub fn dimension(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Keep the lowest `m` states.
    pub fn truncated(&self, m: usize) -> EigenSet {
        let m = m.min(self.count());
        EigenSet {
            energies: self.energies[..m].to_vec(),
            vectors: self.vectors[..m].to_vec(),
        }
    }

    pub fn max_residual(&self, h: &SparseOperator) -> f64 {
        self.energies
            .iter()
            .zip(&self.vectors)
            .map(|(&e, v)| {
                let hv = h.mul_vec(v);
                hv.iter()
                    .zip(v)
                    .map(|(a, b)| (a - b * e).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_overlap_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, u) in self.vectors.iter().enumerate() {
            for (j, v) in self.vectors.iter().enumerate().skip(i) {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((linalg::dot(u, v) - expect).norm());
            }
        }
        worst
    }
}

const RESIDUAL_TOL: f64 = 1e-10;

/// Dense diagonalisation of the field-free Hamiltonian on `basis`.
///
/// Inside each degenerate energy level the eigenvectors are rotated to
/// diagonalise the field-free current. Without interaction this makes every
/// state a simultaneous eigenstate of `H_hop(A)` and `j(A)` for all `A`, which
/// is what keeps the transition currents diagonal.
pub fn diagonalize_field_free(basis: &SectorBasis, params: &ModelParams) -> Result<EigenSet> {
    params.validate()?;
    let dim = basis.dimension();
    if dim == 0 {
        return Err(Error::param("cannot diagonalise an empty sector"));
    }
    if dim > 6000 {
        return Err(Error::param(format!(
            "sector dimension {dim} too large for a dense solve"
        )));
    }
    let template = HoppingTemplate::new(basis);
    let h = template.hamiltonian(params, 0.0);
    let j = template.current(params, 0.0).to_dense();
    let (energies, mut vecs) = linalg::eigh(h.to_dense())?;

    let scale = energies.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(params.t0);
    let tol = 1e-10 * scale;
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && energies[end] - energies[end - 1] < tol {
            end += 1;
        }
        if end - start > 1 {
            let block = vecs.columns(start, end - start).into_owned();
            let projected = block.adjoint() * &j * &block;
            let (_, rot) = linalg::eigh(projected)?;
            let rotated = block * rot;
            vecs.columns_mut(start, end - start).copy_from(&rotated);
        }
        start = end;
    }

    let vectors: Vec<Vec<C64>> = (0..dim)
        .map(|c| {
            let mut v: Vec<C64> = vecs.column(c).iter().copied().collect();
            linalg::fix_phase(&mut v);
            v
        })
        .collect();
    let set = EigenSet { energies, vectors };
    let residual = set.max_residual(&h);
    if residual > RESIDUAL_TOL {
        return Err(Error::numerical(format!(
            "eigenvector residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}"
        )));
    }
    Ok(set)
}

/// Dense copy of the eigenvectors as matrix columns.
pub fn eigenvector_matrix(set: &EigenSet) -> DMatrix<C64> {
    let d = set.dimension();
    let mut m = DMatrix::from_element(d, set.count(), ZERO);
    for (c, v) in set.vectors.iter().enumerate() {
        for (r, z) in v.iter().enumerate() {
            m[(r, c)] = *z;
        }
    }
    m
}
