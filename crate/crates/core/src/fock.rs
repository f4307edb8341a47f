//! Occupation-number basis combinatorics and sparse state vectors.
//!
//! A [`FockState`] is the occupation vector (photons per optical mode); a
//! [`StateVector`] is a sparse map from occupation vectors to complex
//! amplitudes. States are immutable after construction and safe to share
//! across threads.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Amplitudes at or below this magnitude are dropped when canonicalizing.
/// Below the accumulation noise of 8-photon permanent sums.
pub const AMPLITUDE_PRUNE_THRESHOLD: f64 = 1e-14;

/// Photon occupation numbers over a fixed set of optical modes.
///
/// Ordering is the basis order used everywhere in this crate: states with
/// photons packed into earlier modes come first, e.g. for two modes and two
/// photons `(2,0) < (1,1) < (0,2)`. This keeps every report and serialized
/// state byte-stable across runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FockState {
    occupations: Vec<u32>,
}

impl FockState {
    pub fn new(occupations: Vec<u32>) -> Self {
        Self { occupations }
    }

    /// Vacuum in `mode_count` modes.
    pub fn vacuum(mode_count: usize) -> Self {
        Self { occupations: vec![0; mode_count] }
    }

    pub fn occupations(&self) -> &[u32] {
        &self.occupations
    }

    pub fn mode_count(&self) -> usize {
        self.occupations.len()
    }

    /// Total photon number; conserved under any interferometer action.
    pub fn photon_count(&self) -> u32 {
        self.occupations.iter().sum()
    }

    pub fn occupation(&self, mode: usize) -> u32 {
        self.occupations[mode]
    }
}

impl Ord for FockState {
    fn cmp(&self, other: &Self) -> Ordering {
        // Descending lexicographic: (1,0) precedes (0,1).
        other.occupations.cmp(&self.occupations)
    }
}

impl PartialOrd for FockState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, n) in self.occupations.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ">")
    }
}

impl From<Vec<u32>> for FockState {
    fn from(occupations: Vec<u32>) -> Self {
        Self::new(occupations)
    }
}

/// All occupation vectors of `mode_count` modes summing to `photon_count`,
/// in basis order. The count is `C(photon_count + mode_count - 1, photon_count)`.
pub fn enumerate_basis(mode_count: usize, photon_count: u32) -> Vec<FockState> {
    assert!(mode_count >= 1, "enumerate_basis requires at least one mode");
    let mut out = Vec::with_capacity(basis_dimension(mode_count, photon_count));
    let mut prefix = Vec::with_capacity(mode_count);
    fill_basis(mode_count, photon_count, &mut prefix, &mut out);
    out
}

fn fill_basis(modes_left: usize, photons_left: u32, prefix: &mut Vec<u32>, out: &mut Vec<FockState>) {
    if modes_left == 1 {
        prefix.push(photons_left);
        out.push(FockState::new(prefix.clone()));
        prefix.pop();
        return;
    }
    for k in (0..=photons_left).rev() {
        prefix.push(k);
        fill_basis(modes_left - 1, photons_left - k, prefix, out);
        prefix.pop();
    }
}

/// Closed-form dimension of the bosonic sector: C(n + m - 1, n).
pub fn basis_dimension(mode_count: usize, photon_count: u32) -> usize {
    let n = photon_count as u128;
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for k in 0..n {
        num *= mode_count as u128 + k;
        den *= k + 1;
    }
    (num / den) as usize
}

/// Sparse state vector: occupation vector -> complex amplitude.
///
/// Canonical form: no stored amplitude has magnitude at or below
/// [`AMPLITUDE_PRUNE_THRESHOLD`], and iteration follows basis order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    mode_count: usize,
    terms: BTreeMap<FockState, Complex64>,
}

impl StateVector {
    /// State with no terms (the zero vector, not vacuum).
    pub fn zero(mode_count: usize) -> Self {
        Self { mode_count, terms: BTreeMap::new() }
    }

    /// Single basis term with the given amplitude.
    pub fn single(state: FockState, amplitude: Complex64) -> Self {
        let mode_count = state.mode_count();
        let mut terms = BTreeMap::new();
        if amplitude.norm() > AMPLITUDE_PRUNE_THRESHOLD {
            terms.insert(state, amplitude);
        }
        Self { mode_count, terms }
    }

    /// Build from explicit terms. Amplitudes on the same occupation vector
    /// accumulate; near-zero results are pruned.
    pub fn from_terms<I>(mode_count: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (FockState, Complex64)>,
    {
        let mut map = BTreeMap::new();
        for (state, amp) in terms {
            if state.mode_count() != mode_count {
                return Err(Error::ModeCountMismatch { left: mode_count, right: state.mode_count() });
            }
            *map.entry(state).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        Ok(Self::from_map(mode_count, map))
    }

    /// Canonicalize an accumulated map: drop near-zero amplitudes.
    pub(crate) fn from_map(mode_count: usize, mut map: BTreeMap<FockState, Complex64>) -> Self {
        map.retain(|_, amp| amp.norm() > AMPLITUDE_PRUNE_THRESHOLD);
        Self { mode_count, terms: map }
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    /// Number of stored (nonzero) terms.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in basis order.
    pub fn terms(&self) -> impl Iterator<Item = (&FockState, &Complex64)> {
        self.terms.iter()
    }

    /// Amplitude on a basis state; zero if absent.
    pub fn amplitude(&self, state: &FockState) -> Complex64 {
        self.terms.get(state).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner_product(&self, other: &StateVector) -> Result<Complex64> {
        if self.mode_count != other.mode_count {
            return Err(Error::ModeCountMismatch { left: self.mode_count, right: other.mode_count });
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (state, amp) in &self.terms {
            if let Some(b) = other.terms.get(state) {
                acc += amp.conj() * b;
            }
        }
        Ok(acc)
    }

    /// Squared norm `<self|self>`.
    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|amp| amp.norm_sqr()).sum()
    }

    /// Componentwise `self + factor * source`, re-canonicalized.
    pub fn scale_add(&self, source: &StateVector, factor: Complex64) -> Result<StateVector> {
        if self.mode_count != source.mode_count {
            return Err(Error::ModeCountMismatch { left: self.mode_count, right: source.mode_count });
        }
        let mut map = self.terms.clone();
        for (state, amp) in &source.terms {
            *map.entry(state.clone()).or_insert(Complex64::new(0.0, 0.0)) += factor * amp;
        }
        Ok(Self::from_map(self.mode_count, map))
    }

    /// Rescale every amplitude by `factor`.
    pub fn scaled(&self, factor: Complex64) -> StateVector {
        let map = self.terms.iter().map(|(s, a)| (s.clone(), factor * a)).collect();
        Self::from_map(self.mode_count, map)
    }
}

#[derive(Serialize, Deserialize)]
struct TermDto {
    occ: Vec<u32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct StateVectorDto {
    modes: usize,
    terms: Vec<TermDto>,
}

impl Serialize for StateVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let dto = StateVectorDto {
            modes: self.mode_count,
            terms: self
                .terms
                .iter()
                .map(|(state, amp)| TermDto { occ: state.occupations().to_vec(), re: amp.re, im: amp.im })
                .collect(),
        };
        dto.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let dto = StateVectorDto::deserialize(deserializer)?;
        let mut map = BTreeMap::new();
        for term in dto.terms {
            if term.occ.len() != dto.modes {
                return Err(D::Error::custom(format!(
                    "term has {} modes, state has {}",
                    term.occ.len(),
                    dto.modes
                )));
            }
            let state = FockState::new(term.occ);
            if map.insert(state, Complex64::new(term.re, term.im)).is_some() {
                return Err(D::Error::custom("duplicate occupation vector in serialized state"));
            }
        }
        Ok(StateVector::from_map(dto.modes, map))
    }
}
