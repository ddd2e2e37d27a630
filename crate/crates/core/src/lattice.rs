//! Occupation-number basis of the periodic chain and its symmetry-adapted
//! sectors.
//!
//! A many-body basis state is the ordered product
//! `c†_{j1↑} c†_{j2↑} … c†_{k1↓} c†_{k2↓} … |0⟩` with sites ascending inside
//! each spin species and the whole up block to the left of the down block.
//! Every sign produced by translation, spin flip or hopping is measured against
//! this ordering.
//!
//! Sectors are stored as orbit representatives. The symmetry-adapted vector of
//! a representative `r` is `P|r⟩ / ‖P|r⟩‖` with the projector
//! `P = (1/|G|) Σ_g χ(g)* g`, `χ(T^d F^f) = e^{2πiκd/L} p^f`, so that
//! `T` has eigenvalue `e^{2πiκ/L}` and the spin flip `F` has eigenvalue `p`.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported chain length; masks are stored in `u32` and packed
/// into a `u64` key.
pub const MAX_SITES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationState {
    pub up: u32,
    pub down: u32,
}

impl OccupationState {
    pub fn new(up: u32, down: u32) -> Self {
        OccupationState { up, down }
    }

    /// Ordering key: up mask in the high bits, down mask in the low bits.
    pub fn packed(&self, sites: usize) -> u64 {
        ((self.up as u64) << sites) | self.down as u64
    }

    pub fn doublons(&self) -> u32 {
        (self.up & self.down).count_ones()
    }

    pub fn electrons(&self) -> u32 {
        self.up.count_ones() + self.down.count_ones()
    }

    /// Shift every electron from site `j` to site `j + 1` (mod `sites`).
    pub fn translated(&self, sites: usize) -> Self {
        self.translated_signed(sites).0
    }

    /// Exchange the up and down occupations.
    pub fn spin_flipped(&self) -> Self {
        OccupationState {
            up: self.down,
            down: self.up,
        }
    }

    /// Translation together with the fermionic sign it picks up: the operator
    /// created on site `L-1` wraps to site 0 and has to be moved past the
    /// remaining operators of its species.
    pub(crate) fn translated_signed(&self, sites: usize) -> (Self, f64) {
        let (up, su) = rotate_mask(self.up, sites);
        let (down, sd) = rotate_mask(self.down, sites);
        (OccupationState { up, down }, su * sd)
    }

    /// Spin flip with its sign, `(-1)^{n↑ n↓}` from exchanging the blocks.
    pub(crate) fn spin_flipped_signed(&self) -> (Self, f64) {
        let crossings = self.up.count_ones() * self.down.count_ones();
        let sign = if crossings.is_multiple_of(2) { 1.0 } else { -1.0 };
        (self.spin_flipped(), sign)
    }

    pub fn display(&self, sites: usize) -> String {
        format!("up={:0w$b} down={:0w$b}", self.up, self.down, w = sites)
    }
}

fn rotate_mask(mask: u32, sites: usize) -> (u32, f64) {
    let full = if sites == 32 { u32::MAX } else { (1u32 << sites) - 1 };
    let top = (mask >> (sites - 1)) & 1;
    let rotated = ((mask << 1) & full) | top;
    let sign = if top == 1 && (mask.count_ones() - 1) % 2 == 1 {
        -1.0
    } else {
        1.0
    };
    (rotated, sign)
}

/// Free function form of [`OccupationState::translated`].
pub fn translate(state: OccupationState, sites: usize) -> OccupationState {
    state.translated(sites)
}

/// Free function form of [`OccupationState::spin_flipped`].
pub fn spin_flip(state: OccupationState) -> OccupationState {
    state.spin_flipped()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinParity {
    Even,
    Odd,
}

impl SpinParity {
    pub fn sign(self) -> f64 {
        match self {
            SpinParity::Even => 1.0,
            SpinParity::Odd => -1.0,
        }
    }

    pub fn from_sign(sign: i64) -> Result<Self> {
        match sign {
            1 => Ok(SpinParity::Even),
            -1 => Ok(SpinParity::Odd),
            other => Err(Error::param(format!("spin-flip parity must be +1 or -1, got {other}"))),
        }
    }

    pub fn as_sign(self) -> i64 {
        match self {
            SpinParity::Even => 1,
            SpinParity::Odd => -1,
        }
    }
}

/// Quantum numbers selecting a sector. `None` leaves the symmetry unused.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sector {
    pub momentum: Option<usize>,
    pub parity: Option<SpinParity>,
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.momentum {
            Some(k) => write!(f, "k={k}")?,
            None => write!(f, "k=*")?,
        }
        match self.parity {
            Some(p) => write!(f, ",p={:+}", p.as_sign()),
            None => write!(f, ",p=*"),
        }
    }
}

/// Element `T^shift F^flip` of the symmetry group.
#[derive(Clone, Copy, Debug)]
struct GroupElement {
    shift: usize,
    flip: bool,
}

impl GroupElement {
    fn apply(&self, state: OccupationState, sites: usize) -> (OccupationState, f64) {
        let (mut s, mut sign) = if self.flip {
            state.spin_flipped_signed()
        } else {
            (state, 1.0)
        };
        for _ in 0..self.shift {
            let (next, sg) = s.translated_signed(sites);
            s = next;
            sign *= sg;
        }
        (s, sign)
    }
}

/// Basis of one symmetry sector (or of the whole fixed-filling space when no
/// symmetry is selected).
#[derive(Clone, Debug)]
pub struct SectorBasis {
    sites: usize,
    n_up: usize,
    n_down: usize,
    sector: Sector,
    states: Vec<OccupationState>,
    norms: Vec<f64>,
    orbit_sizes: Vec<usize>,
    /// Every occupation state belonging to a retained orbit, mapped to its
    /// representative index and the factor `σ_g(r) χ(g)` with `g r = s`.
    lookup: HashMap<u64, (usize, Complex64)>,
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

fn masks_with_count(sites: usize, count: usize) -> Vec<u32> {
    (0u32..(1u32 << sites))
        .filter(|m| m.count_ones() as usize == count)
        .collect()
}

fn validate_filling(sites: usize, n_up: usize, n_down: usize) -> Result<()> {
    if !(2..=MAX_SITES).contains(&sites) {
        return Err(Error::param(format!(
            "chain length must be in 2..={MAX_SITES}, got {sites}"
        )));
    }
    if n_up > sites || n_down > sites {
        return Err(Error::param(format!(
            "electron counts ({n_up}, {n_down}) exceed {sites} sites"
        )));
    }
    Ok(())
}

/// All occupation states of the chain at fixed `(n↑, n↓)`, ordered by packed
/// key.
pub fn build_full_basis(sites: usize, n_up: usize, n_down: usize) -> Result<SectorBasis> {
    SectorBasis::build(sites, n_up, n_down, Sector::default())
}

/// Symmetry-adapted basis with total crystal momentum `2π κ / (L a)` and the
/// given spin-flip parity.
pub fn build_sector_basis(
    sites: usize,
    n_up: usize,
    n_down: usize,
    momentum_index: usize,
    parity: SpinParity,
) -> Result<SectorBasis> {
    SectorBasis::build(
        sites,
        n_up,
        n_down,
        Sector {
            momentum: Some(momentum_index),
            parity: Some(parity),
        },
    )
}

impl SectorBasis {
    pub fn build(sites: usize, n_up: usize, n_down: usize, sector: Sector) -> Result<Self> {
        validate_filling(sites, n_up, n_down)?;
        if let Some(k) = sector.momentum {
            if k >= sites {
                return Err(Error::param(format!("momentum index {k} out of range 0..{sites}")));
            }
        }
        if sector.parity.is_some() && n_up != n_down {
            return Err(Error::param(format!(
                "spin-flip parity requires n_up = n_down, got ({n_up}, {n_down})"
            )));
        }

        let group = group_elements(sites, sector);
        let characters: Vec<Complex64> = group.iter().map(|g| character(g, sites, sector)).collect();

        let mut all: Vec<OccupationState> = Vec::with_capacity(binomial(sites, n_up) * binomial(sites, n_down));
        for &up in &masks_with_count(sites, n_up) {
            for &down in &masks_with_count(sites, n_down) {
                all.push(OccupationState { up, down });
            }
        }
        all.sort_by_key(|s| s.packed(sites));

        let mut visited: HashMap<u64, ()> = HashMap::with_capacity(all.len());
        let mut lookup = HashMap::new();
        let mut states = Vec::new();
        let mut norms = Vec::new();
        let mut orbit_sizes = Vec::new();

        for &rep in &all {
            if visited.contains_key(&rep.packed(sites)) {
                continue;
            }
            let mut images: Vec<(OccupationState, Complex64)> = Vec::with_capacity(group.len());
            let mut stabilizer_sum = Complex64::new(0.0, 0.0);
            for (g, chi) in group.iter().zip(&characters) {
                let (image, sign) = g.apply(rep, sites);
                let factor = chi * sign;
                if image == rep {
                    stabilizer_sum += factor.conj();
                }
                images.push((image, factor));
            }
            for (image, _) in &images {
                visited.insert(image.packed(sites), ());
            }
            // ⟨r|P|r⟩ vanishes when the stabilizer characters cancel: the orbit
            // carries no vector of this sector.
            if stabilizer_sum.norm() < 1e-9 {
                continue;
            }
            let norm_sq = stabilizer_sum.re / group.len() as f64;
            let index = states.len();
            let mut orbit = 0;
            for (image, factor) in images {
                lookup.entry(image.packed(sites)).or_insert_with(|| {
                    orbit += 1;
                    (index, factor)
                });
            }
            states.push(rep);
            norms.push(norm_sq.sqrt());
            orbit_sizes.push(orbit);
        }

        Ok(SectorBasis {
            sites,
            n_up,
            n_down,
            sector,
            states,
            norms,
            orbit_sizes,
            lookup,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n_up(&self) -> usize {
        self.n_up
    }

    pub fn n_down(&self) -> usize {
        self.n_down
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn is_projected(&self) -> bool {
        self.sector.momentum.is_some() || self.sector.parity.is_some()
    }

    pub fn dimension(&self) -> usize {
        self.states.len()
    }

    /// Orbit representatives in ascending packed order.
    pub fn states(&self) -> &[OccupationState] {
        &self.states
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Representative index and symmetry factor of an arbitrary occupation
    /// state, or `None` if its orbit does not contribute to this sector.
    pub fn locate(&self, state: OccupationState) -> Option<(usize, Complex64)> {
        self.lookup.get(&state.packed(self.sites)).copied()
    }

    /// Coefficients of basis vector `index` on the plain occupation states.
    pub fn expansion(&self, index: usize) -> Vec<(OccupationState, Complex64)> {
        let rep = self.states[index];
        let weight = 1.0 / (self.orbit_sizes[index] as f64).sqrt();
        let group = group_elements(self.sites, self.sector);
        let mut out: Vec<(OccupationState, Complex64)> = Vec::with_capacity(self.orbit_sizes[index]);
        for g in &group {
            let (image, _) = g.apply(rep, self.sites);
            if out.iter().any(|(s, _)| *s == image) {
                continue;
            }
            let (_, factor) = self.lookup[&image.packed(self.sites)];
            out.push((image, factor.conj() * weight));
        }
        out
    }

    /// Map a sector vector into the unprojected basis `full` of the same
    /// filling.
    pub fn embed(&self, full: &SectorBasis, vector: &[Complex64]) -> Result<Vec<Complex64>> {
        if full.is_projected() || full.sites != self.sites || full.n_up != self.n_up || full.n_down != self.n_down {
            return Err(Error::param(
                "embedding target must be the full basis of the same filling",
            ));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); full.dimension()];
        for (i, &amp) in vector.iter().enumerate() {
            for (state, coeff) in self.expansion(i) {
                let (j, _) = full.locate(state).expect("full basis covers every state");
                out[j] += coeff * amp;
            }
        }
        Ok(out)
    }
}

fn group_elements(sites: usize, sector: Sector) -> Vec<GroupElement> {
    let shifts = if sector.momentum.is_some() { sites } else { 1 };
    let flips: &[bool] = if sector.parity.is_some() {
        &[false, true]
    } else {
        &[false]
    };
    let mut out = Vec::with_capacity(shifts * flips.len());
    for &flip in flips {
        for shift in 0..shifts {
            out.push(GroupElement { shift, flip });
        }
    }
    out
}

fn character(g: &GroupElement, sites: usize, sector: Sector) -> Complex64 {
    let phase = match sector.momentum {
        Some(k) => Complex64::from_polar(1.0, TAU * (k * g.shift) as f64 / sites as f64),
        None => Complex64::new(1.0, 0.0),
    };
    let parity = match (sector.parity, g.flip) {
        (Some(p), true) => p.sign(),
        _ => 1.0,
    };
    phase * parity
}

/// Every `(momentum, parity)` sector of a filling; parity is only enumerated
/// when `n↑ = n↓`.
pub fn all_sectors(sites: usize, n_up: usize, n_down: usize) -> Vec<Sector> {
    let parities: Vec<Option<SpinParity>> = if n_up == n_down {
        vec![Some(SpinParity::Even), Some(SpinParity::Odd)]
    } else {
        vec![None]
    };
    let mut out = Vec::new();
    for k in 0..sites {
        for p in &parities {
            out.push(Sector {
                momentum: Some(k),
                parity: *p,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(up: u32, down: u32) -> OccupationState {
        OccupationState::new(up, down)
    }

    #[test]
    fn full_basis_dimensions() {
        assert_eq!(build_full_basis(2, 1, 1).unwrap().dimension(), 4);
        assert_eq!(build_full_basis(4, 2, 2).unwrap().dimension(), 36);
        assert_eq!(build_full_basis(8, 4, 4).unwrap().dimension(), 4900);
    }

    #[test]
    fn full_basis_is_sorted_by_packed_key() {
        let b = build_full_basis(4, 2, 1).unwrap();
        let keys: Vec<u64> = b.states().iter().map(|s| s.packed(4)).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn invalid_fillings_rejected() {
        assert!(build_full_basis(4, 5, 0).is_err());
        assert!(build_full_basis(1, 0, 0).is_err());
        assert!(build_sector_basis(4, 2, 2, 4, SpinParity::Even).is_err());
        assert!(SectorBasis::build(
            4,
            2,
            1,
            Sector {
                momentum: Some(0),
                parity: Some(SpinParity::Even)
            }
        )
        .is_err());
    }

    #[test]
    fn translation_examples() {
        assert_eq!(translate(state(0b0001, 0b0010), 4), state(0b0010, 0b0100));
        assert_eq!(translate(state(0b1111, 0b0000), 4), state(0b1111, 0b0000));
        let s = state(0b1011, 0b0110);
        let mut t = s;
        for _ in 0..4 {
            t = translate(t, 4);
        }
        assert_eq!(t, s);
    }

    #[test]
    fn translation_sign_is_an_l_cycle() {
        // T^L must be the identity operator including its sign.
        for up in 0u32..16 {
            for down in 0u32..16 {
                let s = state(up, down);
                let (mut t, mut sign) = (s, 1.0);
                for _ in 0..4 {
                    let (n, sg) = t.translated_signed(4);
                    t = n;
                    sign *= sg;
                }
                assert_eq!(t, s);
                assert_eq!(sign, 1.0, "{}", s.display(4));
            }
        }
    }

    #[test]
    fn spin_flip_examples() {
        assert_eq!(spin_flip(state(0b0101, 0b0011)), state(0b0011, 0b0101));
        let s = state(0b0110, 0b1001);
        assert_eq!(spin_flip(spin_flip(s)), s);
        assert_eq!(spin_flip(state(0b0101, 0b0101)), state(0b0101, 0b0101));
    }

    #[test]
    fn sector_norms_positive_and_representatives_minimal() {
        let b = build_sector_basis(6, 3, 3, 0, SpinParity::Even).unwrap();
        assert!(b.norms().iter().all(|&n| n > 0.0));
        let group = group_elements(6, b.sector());
        for rep in b.states() {
            for g in &group {
                let (img, _) = g.apply(*rep, 6);
                assert!(rep.packed(6) <= img.packed(6));
            }
        }
    }

    #[test]
    fn sector_completeness_small_chains() {
        for sites in 2..=6 {
            for n_up in 0..=sites {
                for n_down in 0..=sites {
                    let total: usize = all_sectors(sites, n_up, n_down)
                        .into_iter()
                        .map(|s| SectorBasis::build(sites, n_up, n_down, s).unwrap().dimension())
                        .sum();
                    assert_eq!(
                        total,
                        binomial(sites, n_up) * binomial(sites, n_down),
                        "L={sites} n=({n_up},{n_down})"
                    );
                }
            }
        }
    }

    #[test]
    fn every_orbit_has_one_representative() {
        let full = build_full_basis(4, 2, 2).unwrap();
        let mut owners: HashMap<u64, usize> = HashMap::new();
        for k in 0..4 {
            let b = SectorBasis::build(
                4,
                2,
                2,
                Sector {
                    momentum: Some(k),
                    parity: None,
                },
            )
            .unwrap();
            for s in full.states() {
                if let Some((idx, _)) = b.locate(*s) {
                    let rep = b.states()[idx];
                    let prev = owners.insert(s.packed(4), rep.packed(4) as usize);
                    if let Some(p) = prev {
                        assert_eq!(p, rep.packed(4) as usize);
                    }
                }
            }
        }
    }

    #[test]
    fn expansion_vectors_are_orthonormal() {
        let full = build_full_basis(4, 2, 2).unwrap();
        for sector in all_sectors(4, 2, 2) {
            let b = SectorBasis::build(4, 2, 2, sector).unwrap();
            let vecs: Vec<Vec<Complex64>> = (0..b.dimension())
                .map(|i| {
                    let mut e = vec![Complex64::new(0.0, 0.0); b.dimension()];
                    e[i] = Complex64::new(1.0, 0.0);
                    b.embed(&full, &e).unwrap()
                })
                .collect();
            for (i, u) in vecs.iter().enumerate() {
                for (j, v) in vecs.iter().enumerate() {
                    let dot: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).norm() < 1e-12, "{sector} ({i},{j}) {dot}");
                }
            }
        }
    }
}
