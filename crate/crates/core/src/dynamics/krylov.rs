//! Short-iterative Lanczos propagator.
//!
//! `exp(-iH dt) ψ ≈ ‖ψ‖ V_m exp(-i T_m dt) e_1` where `V_m` spans
//! `{ψ, Hψ, …, H^{m-1}ψ}` and `T_m` is the Lanczos tridiagonal matrix. The
//! small exponential is evaluated through the eigen-decomposition of `T_m`, so
//! the step is unitary up to rounding.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, C64, ZERO};
use crate::operators::SparseOperator;

/// Reusable Lanczos buffers for one state dimension.
#[derive(Clone, Debug)]
pub struct KrylovWorkspace {
    m_dim: usize,
    basis: Vec<Vec<C64>>,
    w: Vec<C64>,
}

impl KrylovWorkspace {
    pub fn new(dim: usize, m_dim: usize) -> Result<Self> {
        if m_dim < 2 {
            return Err(Error::param(format!(
                "Krylov dimension must be at least 2, got {m_dim}"
            )));
        }
        Ok(KrylovWorkspace {
            m_dim,
            basis: vec![vec![ZERO; dim]; m_dim],
            w: vec![ZERO; dim],
        })
    }

    pub fn m_dim(&self) -> usize {
        self.m_dim
    }

    /// Advance `psi` in place by `exp(-i h dt)`.
    pub fn step(&mut self, psi: &mut [C64], h: &SparseOperator, dt: f64) {
        let norm0 = linalg::norm(psi);
        if norm0 == 0.0 {
            return;
        }
        for (b, p) in self.basis[0].iter_mut().zip(psi.iter()) {
            *b = p / norm0;
        }
        let mut alpha = Vec::with_capacity(self.m_dim);
        let mut beta: Vec<f64> = Vec::with_capacity(self.m_dim);
        let mut scale: f64 = 0.0;
        let mut size = self.m_dim;
        for j in 0..self.m_dim {
            h.apply(&self.basis[j], &mut self.w);
            let a = linalg::dot(&self.basis[j], &self.w).re;
            alpha.push(a);
            // Full re-orthogonalisation; cheap at the dimensions used here.
            for i in 0..=j {
                let c = linalg::dot(&self.basis[i], &self.w);
                linalg::axpy(-c, &self.basis[i], &mut self.w);
            }
            let b = linalg::norm(&self.w);
            scale = scale.max(a.abs()).max(b);
            if j + 1 == self.m_dim {
                break;
            }
            if b <= 1e-14 * scale || b == 0.0 {
                // Invariant subspace reached: the result is exact in j+1 dims.
                size = j + 1;
                break;
            }
            beta.push(b);
            for (dst, src) in self.basis[j + 1].iter_mut().zip(self.w.iter()) {
                *dst = src / b;
            }
        }

        let mut t = DMatrix::<f64>::zeros(size, size);
        for i in 0..size {
            t[(i, i)] = alpha[i];
            if i + 1 < size {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let (vals, vecs) = linalg::eigh_real(t);
        let mut coeffs = vec![ZERO; size];
        for (l, &lam) in vals.iter().enumerate() {
            let weight = C64::from_polar(vecs[(0, l)], -lam * dt);
            for (r, c) in coeffs.iter_mut().enumerate() {
                *c += weight * vecs[(r, l)];
            }
        }
        for p in psi.iter_mut() {
            *p = ZERO;
        }
        for (c, v) in coeffs.iter().zip(&self.basis) {
            linalg::axpy(c * norm0, v, psi);
        }
    }
}

/// One propagation step `ψ(t+dt) ≈ exp(-i H dt) ψ(t)`.
pub fn krylov_step(psi: &[C64], h: &SparseOperator, dt: f64, m_dim: usize) -> Result<Vec<C64>> {
    let norm = linalg::norm(psi);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::param(format!("state must be normalised, norm = {norm}")));
    }
    let mut ws = KrylovWorkspace::new(psi.len(), m_dim)?;
    let mut out = psi.to_vec();
    ws.step(&mut out, h, dt);
    Ok(out)
}
