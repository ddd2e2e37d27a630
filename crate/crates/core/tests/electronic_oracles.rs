//! Checks of the lattice, operator and propagation code against an
//! independent dense second-quantised construction.
//!
//! Fermionic modes are ordered up-spin sites first, then down-spin sites; a
//! basis state is `c†_{m1} c†_{m2} … |0⟩` with ascending modes, and every sign
//! below comes from anticommuting operators into that order.

use std::collections::HashMap;
use std::f64::consts::TAU;

use hhg_core::drive::{time_grid, vector_potential, PulseParams};
use hhg_core::dynamics::{
    compute_transition_currents, diagonalize_field_free, propagate_all, EigenSet, PropagationOptions, TableView,
    TransitionCurrentTable,
};
use hhg_core::lattice::{all_sectors, build_full_basis, OccupationState, Sector, SectorBasis, SpinParity};
use hhg_core::linalg::C64;
use hhg_core::operators::{
    build_current, build_hamiltonian, ground_state_sector, mott_gap, HoppingTemplate, ModelParams,
};
use hhg_core::photonics::{integrate_modes, perturbative_state, IntegratorOptions, ModeConfig};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Full fixed-filling Fock space with its own enumeration order.
struct Fock {
    sites: usize,
    states: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl Fock {
    fn new(sites: usize, n_up: usize, n_down: usize) -> Self {
        let mut states = Vec::new();
        for bits in 0u64..(1 << (2 * sites)) {
            let up = bits & ((1 << sites) - 1);
            let down = bits >> sites;
            if up.count_ones() as usize == n_up && down.count_ones() as usize == n_down {
                states.push(bits);
            }
        }
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Fock { sites, states, index }
    }

    fn dim(&self) -> usize {
        self.states.len()
    }

    fn mode(&self, site: usize, down: bool) -> usize {
        site % self.sites + if down { self.sites } else { 0 }
    }

    fn occupation(&self, bits: u64) -> OccupationState {
        let mask = (1u64 << self.sites) - 1;
        OccupationState::new((bits & mask) as u32, (bits >> self.sites) as u32)
    }

    /// `c†_p c_q |s⟩` as (image, sign).
    fn hop(&self, s: u64, p: usize, q: usize) -> Option<(u64, f64)> {
        if s & (1 << q) == 0 {
            return None;
        }
        let below = |x: u64, m: usize| (x & ((1u64 << m) - 1)).count_ones();
        let s1 = s & !(1 << q);
        if s1 & (1 << p) != 0 {
            return None;
        }
        let flips = below(s, q) + below(s1, p);
        let sign = if flips % 2 == 0 { 1.0 } else { -1.0 };
        Some((s1 | (1 << p), sign))
    }

    /// Dense `Σ_{bonds, σ} w c†_j c_{j+1} + h.c.` with `w` the forward weight.
    fn bond_operator(&self, bonds: &[usize], w: C64) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.dim(), self.dim(), ZERO);
        for (col, &s) in self.states.iter().enumerate() {
            for &j in bonds {
                for down in [false, true] {
                    let (p, q) = (self.mode(j, down), self.mode(j + 1, down));
                    if let Some((img, sg)) = self.hop(s, p, q) {
                        m[(self.index[&img], col)] += w * sg;
                    }
                    if let Some((img, sg)) = self.hop(s, q, p) {
                        m[(self.index[&img], col)] += w.conj() * sg;
                    }
                }
            }
        }
        m
    }

    fn hamiltonian(&self, params: &ModelParams, a_value: f64) -> DMatrix<C64> {
        let bonds: Vec<usize> = (0..self.sites).collect();
        let phase = C64::from_polar(1.0, params.a * a_value);
        let mut h = self.bond_operator(&bonds, -params.t0 * phase);
        for (i, &s) in self.states.iter().enumerate() {
            let doublons = ((s & ((1 << self.sites) - 1)) & (s >> self.sites)).count_ones();
            h[(i, i)] += C64::new(params.u * doublons as f64, 0.0);
        }
        h
    }

    fn current(&self, params: &ModelParams, a_value: f64, bonds: &[usize]) -> DMatrix<C64> {
        let phase = C64::from_polar(1.0, params.a * a_value);
        self.bond_operator(bonds, C64::new(0.0, -params.a * params.t0) * phase)
    }

    /// `R = Σ_j a j n_j` on the ring sites `0..L`.
    fn position(&self, a: f64) -> DMatrix<C64> {
        let mut r = DMatrix::from_element(self.dim(), self.dim(), ZERO);
        for (i, &s) in self.states.iter().enumerate() {
            let x: f64 = (0..2 * self.sites)
                .filter(|m| s & (1 << m) != 0)
                .map(|m| (m % self.sites) as f64)
                .sum();
            r[(i, i)] = C64::new(a * x, 0.0);
        }
        r
    }

    /// Image of `s` under the mode permutation `map`, reordered.
    fn permuted(&self, s: u64, map: impl Fn(usize) -> usize) -> (u64, f64) {
        let images: Vec<usize> = (0..2 * self.sites).filter(|m| s & (1 << m) != 0).map(map).collect();
        let mut inversions = 0;
        for i in 0..images.len() {
            for j in i + 1..images.len() {
                if images[i] > images[j] {
                    inversions += 1;
                }
            }
        }
        let bits = images.iter().fold(0u64, |b, &m| b | (1 << m));
        (bits, if inversions % 2 == 0 { 1.0 } else { -1.0 })
    }

    /// Translation by one site composed `shift` times, optionally after a spin flip.
    fn group_image(&self, s: u64, shift: usize, flip: bool) -> (u64, f64) {
        let l = self.sites;
        let (mut cur, mut sign) = if flip {
            self.permuted(s, |m| if m < l { m + l } else { m - l })
        } else {
            (s, 1.0)
        };
        for _ in 0..shift {
            let (next, sg) = self.permuted(cur, |m| if m < l { (m + 1) % l } else { l + (m - l + 1) % l });
            cur = next;
            sign *= sg;
        }
        (cur, sign)
    }

    /// Weight of each group element in the sector projector; states of
    /// momentum index `k` satisfy `T|ψ⟩ = e^{2πik/L}|ψ⟩`.
    fn weights(&self, sector: Sector) -> Vec<(usize, bool, C64)> {
        let shifts = if sector.momentum.is_some() { self.sites } else { 1 };
        let flips: &[bool] = if sector.parity.is_some() {
            &[false, true]
        } else {
            &[false]
        };
        let order = (shifts * flips.len()) as f64;
        let mut out = Vec::new();
        for &flip in flips {
            for shift in 0..shifts {
                let k = sector.momentum.unwrap_or(0) as f64;
                let mut w = C64::from_polar(1.0 / order, -TAU * k * shift as f64 / self.sites as f64);
                if flip {
                    w *= sector.parity.map_or(1.0, SpinParity::sign);
                }
                out.push((shift, flip, w));
            }
        }
        out
    }

    fn projector(&self, sector: Sector) -> DMatrix<C64> {
        let mut p = DMatrix::from_element(self.dim(), self.dim(), ZERO);
        for (shift, flip, w) in self.weights(sector) {
            for (col, &s) in self.states.iter().enumerate() {
                let (img, sg) = self.group_image(s, shift, flip);
                p[(self.index[&img], col)] += w * sg;
            }
        }
        p
    }

    /// `tr P` from the fixed points of each group element; equals the rank
    /// because `P` is a projector. Needs no dense matrix.
    fn projector_trace(&self, sector: Sector) -> f64 {
        let mut tr = ZERO;
        for (shift, flip, w) in self.weights(sector) {
            for &s in &self.states {
                let (img, sg) = self.group_image(s, shift, flip);
                if img == s {
                    tr += w * sg;
                }
            }
        }
        assert!(tr.im.abs() < 1e-9, "trace {tr}");
        tr.re
    }

    /// Sector basis vectors as columns in this Fock ordering.
    fn embed(&self, basis: &SectorBasis) -> DMatrix<C64> {
        let full = build_full_basis(basis.sites(), basis.n_up(), basis.n_down()).unwrap();
        let mut q = DMatrix::from_element(self.dim(), basis.dimension(), ZERO);
        for c in 0..basis.dimension() {
            let mut e = vec![ZERO; basis.dimension()];
            e[c] = C64::new(1.0, 0.0);
            let v = basis.embed(&full, &e).unwrap();
            for (i, &s) in self.states.iter().enumerate() {
                let (j, factor) = full.locate(self.occupation(s)).unwrap();
                q[(i, c)] = v[j] * factor.conj();
            }
        }
        q
    }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn rank(p: &DMatrix<C64>) -> usize {
    let eig = SymmetricEigen::new(p.clone());
    eig.eigenvalues.iter().filter(|&&v| v > 0.5).count()
}

fn ascending(m: &DMatrix<C64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn sector(k: usize, p: SpinParity) -> Sector {
    Sector {
        momentum: Some(k),
        parity: Some(p),
    }
}

/// `k=0, p=+1` sector dimension of the half-filled eight-site ring.
const D8_K0_EVEN: usize = 318;

#[test]
fn library_full_basis_matrices_match_second_quantisation() {
    let p = ModelParams::new(4, 10.0);
    for (n_up, n_down) in [(2, 2), (2, 1), (3, 1)] {
        let fock = Fock::new(4, n_up, n_down);
        let full = build_full_basis(4, n_up, n_down).unwrap();
        let q = fock.embed(&full);
        for a in [0.0, 0.07, -0.19] {
            let h = q.adjoint() * fock.hamiltonian(&p, a) * &q;
            let j = q.adjoint() * fock.current(&p, a, &[0, 1, 2, 3]) * &q;
            assert!(max_abs(&(h - build_hamiltonian(&full, &p, a).to_dense())) < 1e-15);
            assert!(max_abs(&(j - build_current(&full, &p, a).to_dense())) < 1e-15);
        }
    }
}

#[test]
fn two_site_sector_dimensions_from_projector_rank() {
    let fock = Fock::new(2, 1, 1);
    let mut dims = HashMap::new();
    for s in all_sectors(2, 1, 1) {
        let p = fock.projector(s);
        assert!(max_abs(&(&p * &p - &p)) < 1e-14);
        let basis = SectorBasis::build(2, 1, 1, s).unwrap();
        assert_eq!(rank(&p), basis.dimension(), "{s}");
        dims.insert(s, basis.dimension());
    }
    // The doublon orbit is odd under the signed spin flip, so the zero-momentum
    // space (two orbits, one vector each) is two-dimensional in total.
    assert_eq!(dims[&sector(0, SpinParity::Even)], 0);
    assert_eq!(dims[&sector(0, SpinParity::Odd)], 2);
    assert_eq!(dims[&sector(1, SpinParity::Even)], 1);
    assert_eq!(dims[&sector(1, SpinParity::Odd)], 1);
}

#[test]
fn sector_spans_are_the_projector_ranges() {
    for (sites, n_up, n_down) in [(4, 2, 2), (4, 2, 1), (4, 1, 1), (3, 2, 1), (6, 3, 3)] {
        let fock = Fock::new(sites, n_up, n_down);
        for s in all_sectors(sites, n_up, n_down) {
            let basis = SectorBasis::build(sites, n_up, n_down, s).unwrap();
            let trace = fock.projector_trace(s);
            assert!(
                (trace - basis.dimension() as f64).abs() < 1e-9,
                "L={sites} {s}: tr P = {trace}"
            );
            if fock.dim() > 100 {
                continue;
            }
            let p = fock.projector(s);
            assert_eq!(rank(&p), basis.dimension(), "L={sites} {s}");
            let q = fock.embed(&basis);
            assert!(max_abs(&(&p * &q - &q)) < 1e-13, "L={sites} {s}");
        }
    }
}

#[test]
fn eight_site_zero_momentum_even_dimension() {
    let s = sector(0, SpinParity::Even);
    let dim = SectorBasis::build(8, 4, 4, s).unwrap().dimension();
    let trace = Fock::new(8, 4, 4).projector_trace(s);
    assert!((trace - dim as f64).abs() < 1e-9, "tr P = {trace}, basis {dim}");
    assert_eq!(dim, D8_K0_EVEN);
}

fn check_block_structure(a_value: f64) {
    let p = ModelParams::new(4, 10.0);
    let fock = Fock::new(4, 2, 2);
    let h = fock.hamiltonian(&p, a_value);
    let sectors = all_sectors(4, 2, 2);
    let spans: Vec<DMatrix<C64>> = sectors
        .iter()
        .map(|&s| fock.embed(&SectorBasis::build(4, 2, 2, s).unwrap()))
        .collect();
    for (i, qi) in spans.iter().enumerate() {
        for (k, qk) in spans.iter().enumerate() {
            let block = qi.adjoint() * &h * qk;
            if i == k {
                let basis = SectorBasis::build(4, 2, 2, sectors[i]).unwrap();
                let lib = build_hamiltonian(&basis, &p, a_value).to_dense();
                assert!(max_abs(&(block - lib)) < 1e-12, "{}", sectors[i]);
            } else {
                assert!(max_abs(&block) < 1e-12, "{} / {}", sectors[i], sectors[k]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn hamiltonian_is_block_diagonal_in_sectors(a_value in -0.4f64..0.4) {
        check_block_structure(a_value);
    }

    #[test]
    fn translation_and_flip_are_group_actions(up in 0u32..256, down in 0u32..256) {
        let s = OccupationState::new(up, down);
        let mut t = s;
        for _ in 0..8 {
            t = hhg_core::lattice::translate(t, 8);
        }
        prop_assert_eq!(t, s);
        prop_assert_eq!(hhg_core::lattice::spin_flip(hhg_core::lattice::spin_flip(s)), s);
        prop_assert_eq!(hhg_core::lattice::translate(s, 8).doublons(), s.doublons());
    }
}

#[test]
fn full_spectrum_is_the_union_of_sector_spectra() {
    let p = ModelParams::new(4, 10.0);
    let fock = Fock::new(4, 2, 2);
    let reference = ascending(&fock.hamiltonian(&p, 0.0));
    let mut union = Vec::new();
    for s in all_sectors(4, 2, 2) {
        let basis = SectorBasis::build(4, 2, 2, s).unwrap();
        if basis.dimension() > 0 {
            union.extend(diagonalize_field_free(&basis, &p).unwrap().energies);
        }
    }
    union.sort_by(f64::total_cmp);
    assert_eq!(union.len(), reference.len());
    for (x, y) in union.iter().zip(&reference) {
        assert!((x - y).abs() < 1e-10, "{x} vs {y}");
    }
}

#[test]
fn eigensets_are_orthonormal_with_small_residuals() {
    let p = ModelParams::new(6, 10.0);
    let (s, _) = ground_state_sector(&p).unwrap();
    let basis = SectorBasis::build(6, 3, 3, s).unwrap();
    let eigs = diagonalize_field_free(&basis, &p).unwrap();
    assert!(eigs.max_residual(&build_hamiltonian(&basis, &p, 0.0)) < 1e-10);
    assert!(eigs.max_overlap_error() < 1e-12);
}

#[test]
fn current_is_the_time_derivative_of_position_on_the_open_chain() {
    let p = ModelParams::new(4, 10.0);
    let fock = Fock::new(4, 2, 2);
    let full = build_full_basis(4, 2, 2).unwrap();
    let q = fock.embed(&full);
    let r = fock.position(p.a);
    let i = C64::new(0.0, 1.0);
    for a in [0.0, 0.11, -0.23] {
        let open = HoppingTemplate::with_bonds(&full, &[0, 1, 2]);
        let h_open = q.clone() * open.hamiltonian(&p, a).to_dense() * q.adjoint();
        let j_open = q.clone() * open.current(&p, a).to_dense() * q.adjoint();
        let comm = (&h_open * &r - &r * &h_open) * i;
        assert!(max_abs(&(comm - j_open)) < 1e-12);

        // On the ring the wrapping bond moves the charge by -(L-1)a instead of +a.
        let h_ring = fock.hamiltonian(&p, a);
        let j_ring = fock.current(&p, a, &[0, 1, 2, 3]);
        let j_wrap = fock.current(&p, a, &[3]);
        let comm = (&h_ring * &r - &r * &h_ring) * i;
        assert!(max_abs(&(comm - (j_ring - j_wrap * C64::new(4.0, 0.0)))) < 1e-12);
    }
}

/// Ground energy of `n` free electrons filling the ring's Bloch levels.
fn bloch_ground_energy(p: &ModelParams, n: usize) -> f64 {
    let l = p.sites;
    let mut levels: Vec<f64> = (0..l)
        .flat_map(|q| {
            let e = -2.0 * p.t0 * (TAU * q as f64 / l as f64).cos();
            [e, e]
        })
        .collect();
    levels.sort_by(f64::total_cmp);
    levels[..n].iter().sum()
}

#[test]
fn free_mott_gap_is_the_bloch_filling_gap() {
    for sites in [4, 6, 8] {
        let p = ModelParams::new(sites, 0.0);
        let oracle = bloch_ground_energy(&p, sites + 1) + bloch_ground_energy(&p, sites - 1)
            - 2.0 * bloch_ground_energy(&p, sites);
        let gap = mott_gap(&p).unwrap();
        assert!((gap - oracle).abs() < 1e-12, "L={sites}: {gap} vs {oracle}");
    }
    // At L=8 the free gap is far below the interacting one.
    let wl = PulseParams::default().omega_l;
    assert!(mott_gap(&ModelParams::new(8, 0.0)).unwrap() / wl < 5.0);
}

#[test]
fn field_free_ground_state_carries_no_current() {
    for (sites, u) in [(4, 10.0), (6, 10.0), (6, 0.0)] {
        let p = ModelParams::new(sites, u);
        let (s, _) = ground_state_sector(&p).unwrap();
        let basis = SectorBasis::build(sites, sites / 2, sites / 2, s).unwrap();
        let gs = &diagonalize_field_free(&basis, &p).unwrap().vectors[0];
        let jv = build_current(&basis, &p, 0.0).mul_vec(gs);
        let expect: C64 = gs.iter().zip(&jv).map(|(a, b)| a.conj() * b).sum();
        assert!(expect.norm() < 1e-14, "L={sites} U={u}: {expect}");
    }
}

/// `exp(-i H dt) ψ` by a Taylor series; with `‖H dt‖ ≲ 0.3` thirty terms are
/// exact to rounding.
fn dense_step(h: &DMatrix<C64>, dt: f64, psi: &DMatrix<C64>) -> DMatrix<C64> {
    let mut term = psi.clone();
    let mut out = psi.clone();
    for n in 1..=30 {
        term = h * term * C64::new(0.0, -dt / n as f64);
        out += &term;
    }
    out
}

#[test]
fn krylov_propagation_matches_dense_exponentials() {
    let p = ModelParams::new(4, 10.0);
    let pulse = PulseParams::default();
    let options = PropagationOptions::default();
    let (s, _) = ground_state_sector(&p).unwrap();
    let basis = SectorBasis::build(4, 2, 2, s).unwrap();
    let eigs = diagonalize_field_free(&basis, &p).unwrap().truncated(1);
    let traj = propagate_all(&eigs, &basis, &p, &pulse, &options).unwrap();
    assert!(traj.report.max_norm_drift < 1e-8);

    let fock = Fock::new(4, 2, 2);
    let q = fock.embed(&basis);
    let grid = time_grid(&pulse, options.dt).unwrap();
    let outside = DMatrix::identity(fock.dim(), fock.dim()) - &q * q.adjoint();
    let mut psi = &q * DMatrix::from_column_slice(basis.dimension(), 1, &eigs.vectors[0]);
    let mut step_leak: f64 = 0.0;
    for w in grid.windows(2) {
        let h = fock.hamiltonian(&p, vector_potential(0.5 * (w[0] + w[1]), &pulse));
        let dt = w[1] - w[0];
        // Leakage of one exact step applied to an in-sector state.
        let inside = &q * (q.adjoint() * &psi);
        step_leak = step_leak.max((&outside * dense_step(&h, dt, &inside)).norm());
        psi = dense_step(&h, dt, &psi);
    }
    assert!(step_leak < 1e-12, "per-step leakage {step_leak:e}");
    let krylov = &q * DMatrix::from_column_slice(basis.dimension(), 1, traj.states.last().unwrap()[0].as_slice());
    let overlap = (krylov.adjoint() * &psi)[(0, 0)].norm();
    assert!(overlap > 1.0 - 1e-7, "overlap {overlap}");
    let leak = (&outside * &psi).norm();
    assert!(leak < 1e-10, "accumulated leakage {leak:e}");
}

#[test]
fn undriven_eigenstates_are_stationary() {
    let p = ModelParams::new(4, 10.0);
    let pulse = PulseParams {
        a0: 0.0,
        cycles: 2,
        ..PulseParams::default()
    };
    let (s, _) = ground_state_sector(&p).unwrap();
    let basis = SectorBasis::build(4, 2, 2, s).unwrap();
    let eigs = diagonalize_field_free(&basis, &p).unwrap();
    let traj = propagate_all(&eigs, &basis, &p, &pulse, &PropagationOptions::default()).unwrap();
    let last = traj.states.last().unwrap();
    for (m, v) in eigs.vectors.iter().enumerate() {
        let overlap: C64 = v.iter().zip(&last[m]).map(|(a, b)| a.conj() * b).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-10, "state {m}: {overlap}");
    }
}

fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let m = DMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    m.qr().q()
}

#[test]
fn observables_do_not_depend_on_the_basis_of_degenerate_levels() {
    let p = ModelParams::new(4, 10.0);
    let pulse = PulseParams {
        cycles: 2,
        ..PulseParams::default()
    };
    // First half-filled sector with a degenerate excited level.
    let (basis, eigs, start, len) = all_sectors(4, 2, 2)
        .into_iter()
        .find_map(|s| {
            let basis = SectorBasis::build(4, 2, 2, s).unwrap();
            let eigs = diagonalize_field_free(&basis, &p).unwrap();
            let e = &eigs.energies;
            let start = (1..e.len().saturating_sub(1)).find(|&i| (e[i + 1] - e[i]).abs() < 1e-10 * p.t0)?;
            let len = e[start..]
                .iter()
                .take_while(|&&x| (x - e[start]).abs() < 1e-10 * p.t0)
                .count();
            Some((basis, eigs, start, len))
        })
        .expect("a degenerate level in some sector");
    assert!(
        (eigs.energies[1] - eigs.energies[0]).abs() > 1e-6,
        "ground state must be non-degenerate"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v = random_unitary(len, &mut rng);
    let mut rotated = eigs.vectors.clone();
    for c in 0..len {
        let mut col = vec![ZERO; eigs.dimension()];
        for r in 0..len {
            for (x, y) in col.iter_mut().zip(&eigs.vectors[start + r]) {
                *x += v[(r, c)] * y;
            }
        }
        rotated[start + c] = col;
    }
    let rotated = EigenSet {
        energies: eigs.energies.clone(),
        vectors: rotated,
    };

    let options = PropagationOptions::default();
    let (t1, _) = compute_transition_currents(&eigs, &basis, &p, &pulse, &options, None).unwrap();
    let modes: Vec<ModeConfig> = [3.0, 9.0, 21.0]
        .iter()
        .map(|w| ModeConfig::new(w * pulse.omega_l, 4e-6, 12).unwrap())
        .collect();

    // Rotating the channels of a finished table is exact.
    let m = t1.channels();
    let mut w = DMatrix::identity(m, m);
    w.view_mut((start, start), (len, len)).copy_from(&v);
    let mut data = Vec::with_capacity(t1.raw().len());
    for k in 0..t1.len() {
        let j = DMatrix::from_row_slice(m, m, t1.slice(k));
        let r = w.adjoint() * j * &w;
        data.extend(r.transpose().iter().copied());
    }
    let exact = TransitionCurrentTable::new(t1.times().to_vec(), m, data).unwrap();
    assert_same_photons(&t1, &exact, &modes, 1e-10);

    // Propagating the rotated states instead differs only by the Krylov
    // truncation, which does not commute with superposition.
    let (t2, _) = compute_transition_currents(&rotated, &basis, &p, &pulse, &options, None).unwrap();
    let scale = t1.raw().iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let diff = t2
        .raw()
        .iter()
        .zip(exact.raw())
        .fold(0.0f64, |a, (x, y)| a.max((x - y).norm()));
    assert!(diff < 1e-7 * scale, "table difference {:e}", diff / scale);
    assert_same_photons(&t1, &t2, &modes, 1e-6);
}

fn assert_same_photons(a: &TransitionCurrentTable, b: &TransitionCurrentTable, modes: &[ModeConfig], tol: f64) {
    let x = integrate_modes(&mut TableView(a), modes, &IntegratorOptions::default()).unwrap();
    let y = integrate_modes(&mut TableView(b), modes, &IntegratorOptions::default()).unwrap();
    for (x, y) in x.iter().zip(&y) {
        let (mx, my) = (x.moments(), y.moments());
        assert!((mx.n - my.n).abs() <= tol * mx.n, "{} vs {}", mx.n, my.n);
        assert!((mx.n2 - my.n2).abs() <= tol * mx.n2, "{} vs {}", mx.n2, my.n2);
    }
    let x = perturbative_state(&mut TableView(a), modes, 0, 1 << 20).unwrap();
    let y = perturbative_state(&mut TableView(b), modes, 0, 1 << 20).unwrap();
    for (x, y) in x.iter().zip(&y) {
        let (nx, ny) = (x.moments().n, y.moments().n);
        assert!((nx - ny).abs() <= tol * nx, "{nx} vs {ny}");
    }
}
