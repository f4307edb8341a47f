//! The multi-photon action of a device matrix and the coincidence projector.
//!
//! A device `U` acts on photon creation operators mode-by-mode; on a Fock
//! state the induced transition amplitude `<out| . |in>` is the permanent of
//! the matrix built from `U` by repeating row `i` `in_i` times and column `j`
//! `out_j` times, normalized by the square roots of the occupation
//! factorials. Coincidence detection keeps exactly the outcomes where every
//! dual-rail pair holds one photon and every vacuum mode none.
//!
//! Two evaluation routes exist for the projected output:
//!
//! - [`projected_output`] sums per-term permanent amplitudes; this is the
//!   reference route, equal to [`project_coincidence`] after [`apply_full`].
//! - [`CompiledInput`] + [`coincidence_amplitudes`] folds the input's product
//!   structure (independent qubits or Bell pairs) into a single Ryser-style
//!   subset sweep per outcome, which is what the optimizer calls in its inner
//!   loop. Agreement of the two routes is enforced by tests.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{enumerate_basis, FockState, StateVector};
use crate::interferometer::OpticalMatrix;
use crate::permanent::{permanent_ryser, ComplexMatrix};

/// Assignment of device modes to dual-rail qubit pairs and vacuum ports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualRailLayout {
    qubit_pairs: Vec<(usize, usize)>,
    vacuum_modes: Vec<usize>,
}

impl DualRailLayout {
    /// Validates that the pair and vacuum indices are distinct and cover
    /// exactly `0..N`.
    pub fn new(qubit_pairs: Vec<(usize, usize)>, vacuum_modes: Vec<usize>) -> Result<Self> {
        let n = 2 * qubit_pairs.len() + vacuum_modes.len();
        let mut seen = vec![false; n];
        let mut mark = |idx: usize| -> Result<()> {
            if idx >= n {
                return Err(Error::Layout(format!("mode index {idx} outside 0..{n}")));
            }
            if seen[idx] {
                return Err(Error::Layout(format!("mode index {idx} used twice")));
            }
            seen[idx] = true;
            Ok(())
        };
        for &(h, v) in &qubit_pairs {
            mark(h)?;
            mark(v)?;
        }
        for &m in &vacuum_modes {
            mark(m)?;
        }
        Ok(Self { qubit_pairs, vacuum_modes })
    }

    /// Default layout: pair `k` on modes `(2k, 2k+1)`, vacuum modes after.
    pub fn contiguous(qubit_count: usize, vacuum_count: usize) -> Self {
        let qubit_pairs = (0..qubit_count).map(|k| (2 * k, 2 * k + 1)).collect();
        let vacuum_modes = (2 * qubit_count..2 * qubit_count + vacuum_count).collect();
        Self { qubit_pairs, vacuum_modes }
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_pairs.len()
    }

    pub fn total_modes(&self) -> usize {
        2 * self.qubit_pairs.len() + self.vacuum_modes.len()
    }

    pub fn qubit_pairs(&self) -> &[(usize, usize)] {
        &self.qubit_pairs
    }

    pub fn vacuum_modes(&self) -> &[usize] {
        &self.vacuum_modes
    }

    /// Bit `k` of `bits` (qubit 0 is the leftmost/most significant bit).
    #[inline]
    pub fn bit(bits: usize, k: usize, qubit_count: usize) -> usize {
        (bits >> (qubit_count - 1 - k)) & 1
    }

    /// The computational-basis Fock state for a bitstring: one photon in the
    /// first pair mode for 0, in the second for 1.
    pub fn fock_for_bits(&self, bits: usize) -> FockState {
        let n = self.qubit_count();
        let mut occ = vec![0u32; self.total_modes()];
        for (k, &(h, v)) in self.qubit_pairs.iter().enumerate() {
            if Self::bit(bits, k, n) == 0 {
                occ[h] = 1;
            } else {
                occ[v] = 1;
            }
        }
        FockState::new(occ)
    }

    /// True when every pair holds exactly one photon and every vacuum mode none.
    pub fn in_coincidence(&self, state: &FockState) -> bool {
        self.qubit_pairs
            .iter()
            .all(|&(h, v)| state.occupation(h) + state.occupation(v) == 1)
            && self.vacuum_modes.iter().all(|&m| state.occupation(m) == 0)
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Transition amplitude `<output| . |input>` of the induced multi-photon map.
///
/// Exactly zero when the photon numbers differ (conservation); an error when
/// the mode counts do not match the device dimension.
pub fn amplitude(u: &OpticalMatrix, input: &FockState, output: &FockState) -> Result<Complex64> {
    let n = u.dimension();
    if input.mode_count() != n || output.mode_count() != n {
        return Err(Error::Dimension(format!(
            "state mode counts {}/{} do not match device dimension {n}",
            input.mode_count(),
            output.mode_count()
        )));
    }
    let photons = input.photon_count();
    if photons != output.photon_count() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let p = photons as usize;
    // Expanded matrix: row i repeated input_i times, column j repeated output_j times.
    let mut rows = Vec::with_capacity(p);
    for (i, &occ) in input.occupations().iter().enumerate() {
        for _ in 0..occ {
            rows.push(i);
        }
    }
    let mut cols = Vec::with_capacity(p);
    for (j, &occ) in output.occupations().iter().enumerate() {
        for _ in 0..occ {
            cols.push(j);
        }
    }
    let mut entries = Vec::with_capacity(p * p);
    for &r in &rows {
        for &c in &cols {
            entries.push(u.get(r, c));
        }
    }
    let expanded = ComplexMatrix::new(p, p, entries)?;
    let perm = permanent_ryser(&expanded)?;
    let norm: f64 = input
        .occupations()
        .iter()
        .chain(output.occupations().iter())
        .map(|&occ| factorial(occ))
        .product();
    Ok(perm / norm.sqrt())
}

/// Full output state over the complete photon-number sector.
///
/// Cost grows with the sector dimension `C(N + p - 1, p)`; intended for
/// verification at small sizes, not for the optimizer loop.
pub fn apply_full(u: &OpticalMatrix, state: &StateVector) -> Result<StateVector> {
    let n = u.dimension();
    if state.mode_count() != n {
        return Err(Error::ModeCountMismatch { left: state.mode_count(), right: n });
    }
    let mut acc: BTreeMap<FockState, Complex64> = BTreeMap::new();
    let mut sectors: Vec<u32> = state.terms().map(|(s, _)| s.photon_count()).collect();
    sectors.sort_unstable();
    sectors.dedup();
    for photons in sectors {
        for out_state in enumerate_basis(n, photons) {
            let mut total = Complex64::new(0.0, 0.0);
            for (in_state, coeff) in state.terms() {
                if in_state.photon_count() != photons {
                    continue;
                }
                total += coeff * amplitude(u, in_state, &out_state)?;
            }
            if total.norm() > 0.0 {
                *acc.entry(out_state).or_insert(Complex64::new(0.0, 0.0)) += total;
            }
        }
    }
    Ok(StateVector::from_map(n, acc))
}

/// Keep exactly the coincidence terms; no renormalization (the projection is
/// a contraction).
pub fn project_coincidence(state: &StateVector, layout: &DualRailLayout) -> StateVector {
    assert_eq!(
        state.mode_count(),
        layout.total_modes(),
        "state mode count must match layout"
    );
    let map = state
        .terms()
        .filter(|(s, _)| layout.in_coincidence(s))
        .map(|(s, a)| (s.clone(), *a))
        .collect();
    StateVector::from_map(state.mode_count(), map)
}

/// Coincidence-projected output, computed by evaluating only the `2^n`
/// computational-basis amplitudes (never the full output sector).
///
/// Equal to [`project_coincidence`] composed with [`apply_full`]; the
/// optimizer's context uses the compiled sweep below instead.
pub fn projected_output(
    u: &OpticalMatrix,
    input: &StateVector,
    layout: &DualRailLayout,
) -> Result<StateVector> {
    let n_modes = u.dimension();
    if input.mode_count() != n_modes {
        return Err(Error::ModeCountMismatch { left: input.mode_count(), right: n_modes });
    }
    if layout.total_modes() != n_modes {
        return Err(Error::Layout(format!(
            "layout covers {} modes, device has {n_modes}",
            layout.total_modes()
        )));
    }
    let n = layout.qubit_count();
    let mut acc: BTreeMap<FockState, Complex64> = BTreeMap::new();
    for bits in 0..(1usize << n) {
        let out_state = layout.fock_for_bits(bits);
        let mut total = Complex64::new(0.0, 0.0);
        for (in_state, coeff) in input.terms() {
            total += coeff * amplitude(u, in_state, &out_state)?;
        }
        if total.norm() > 0.0 {
            acc.insert(out_state, total);
        }
    }
    Ok(StateVector::from_map(n_modes, acc))
}

/// One independent photon-placement factor of a product-form input: a
/// superposition of options, each putting single photons on a fixed set of
/// device input modes.
#[derive(Debug, Clone)]
struct PhotonGroup {
    /// (coefficient, row slots) per option; slots index `CompiledInput::rows`.
    options: Vec<(Complex64, Vec<usize>)>,
}

/// Input state in factored form for the fast coincidence sweep.
///
/// The projected amplitude for outcome bits `k` is a Ryser-style
/// inclusion-exclusion over subsets `S` of the selected output columns:
/// `sum_S (-1)^(n-|S|) prod_g (sum_opt coeff * prod_r rowsum_r(S))`.
/// With one group per input term this reduces to the per-term permanent sum
/// of [`projected_output`]; product structure makes it exponentially cheaper.
#[derive(Debug, Clone)]
pub struct CompiledInput {
    /// Device rows (input modes) referenced by the groups.
    rows: Vec<usize>,
    groups: Vec<PhotonGroup>,
    photon_count: usize,
}

impl CompiledInput {
    /// One group per dual-rail qubit: option 0 puts the photon on the pair's
    /// first mode with `amp0`, option 1 on the second with `amp1`.
    pub fn qubit_product(layout: &DualRailLayout, qubit_amps: &[(Complex64, Complex64)]) -> Result<Self> {
        if qubit_amps.len() != layout.qubit_count() {
            return Err(Error::Layout(format!(
                "{} per-qubit amplitudes for {} pairs",
                qubit_amps.len(),
                layout.qubit_count()
            )));
        }
        let mut rows = Vec::new();
        let mut groups = Vec::new();
        for (&(h, v), &(a0, a1)) in layout.qubit_pairs().iter().zip(qubit_amps) {
            let slot_h = push_row(&mut rows, h);
            let slot_v = push_row(&mut rows, v);
            groups.push(PhotonGroup {
                options: vec![(a0, vec![slot_h]), (a1, vec![slot_v])],
            });
        }
        Ok(Self { rows, groups, photon_count: layout.qubit_count() })
    }

    /// One group per Bell pair linking qubits `(2p, 2p+1)`: both photons
    /// horizontal or both vertical, amplitude `1/sqrt(2)` each.
    pub fn bell_pairs(layout: &DualRailLayout) -> Result<Self> {
        let n = layout.qubit_count();
        if n % 2 != 0 || n == 0 {
            return Err(Error::Layout(format!("Bell-pair input needs an even qubit count, got {n}")));
        }
        let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut rows = Vec::new();
        let mut groups = Vec::new();
        for p in 0..n / 2 {
            let (h0, v0) = layout.qubit_pairs()[2 * p];
            let (h1, v1) = layout.qubit_pairs()[2 * p + 1];
            let sh0 = push_row(&mut rows, h0);
            let sh1 = push_row(&mut rows, h1);
            let sv0 = push_row(&mut rows, v0);
            let sv1 = push_row(&mut rows, v1);
            groups.push(PhotonGroup {
                options: vec![(amp, vec![sh0, sh1]), (amp, vec![sv0, sv1])],
            });
        }
        Ok(Self { rows, groups, photon_count: n })
    }

    /// General fallback: a single group with one option per stored term.
    /// Requires 0/1 occupations (single photons). Reduces the sweep to the
    /// plain per-term permanent sum.
    pub fn from_state(state: &StateVector) -> Result<Self> {
        let mut rows = Vec::new();
        let mut options = Vec::new();
        let mut photons: Option<usize> = None;
        for (fock, amp) in state.terms() {
            let mut slots = Vec::new();
            for (mode, &occ) in fock.occupations().iter().enumerate() {
                match occ {
                    0 => {}
                    1 => slots.push(push_row(&mut rows, mode)),
                    _ => {
                        return Err(Error::Recipe(format!(
                            "compiled inputs need single-photon occupations, found {occ} in mode {mode}"
                        )))
                    }
                }
            }
            match photons {
                None => photons = Some(slots.len()),
                Some(p) if p == slots.len() => {}
                Some(p) => {
                    return Err(Error::Recipe(format!(
                        "mixed photon numbers {p} and {} in compiled input",
                        slots.len()
                    )))
                }
            }
            options.push((*amp, slots));
        }
        let photon_count = photons.unwrap_or(0);
        Ok(Self { rows, groups: vec![PhotonGroup { options }], photon_count })
    }

    pub fn photon_count(&self) -> usize {
        self.photon_count
    }
}

fn push_row(rows: &mut Vec<usize>, mode: usize) -> usize {
    match rows.iter().position(|&r| r == mode) {
        Some(slot) => slot,
        None => {
            rows.push(mode);
            rows.len() - 1
        }
    }
}

/// Workspace for the subset sweeps; reused across evaluations to keep the
/// optimizer loop allocation-free.
#[derive(Debug, Default)]
pub struct SweepScratch {
    row_sums: Vec<Complex64>,
    group_values: Vec<Complex64>,
    prefix: Vec<Complex64>,
    suffix: Vec<Complex64>,
    slot_partials: Vec<Complex64>,
    columns: Vec<usize>,
}

/// All `2^n` coincidence amplitudes of the compiled input under `u`, indexed
/// by outcome bitstring (qubit 0 = leftmost bit).
pub fn coincidence_amplitudes(
    u: &OpticalMatrix,
    input: &CompiledInput,
    layout: &DualRailLayout,
    scratch: &mut SweepScratch,
) -> Result<Vec<Complex64>> {
    let n = layout.qubit_count();
    if input.photon_count != n {
        return Err(Error::Layout(format!(
            "input carries {} photons, layout expects {n}",
            input.photon_count
        )));
    }
    if layout.total_modes() != u.dimension() {
        return Err(Error::Layout(format!(
            "layout covers {} modes, device has {}",
            layout.total_modes(),
            u.dimension()
        )));
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![zero; 1 << n];
    for (bits, slot) in out.iter_mut().enumerate() {
        *slot = sweep_single(u, input, layout, bits, scratch, None, &mut []);
    }
    Ok(out)
}

/// Accumulate `sum_k weights[k] * d amplitude_k / d u[r][c]` into an
/// `N x N` row-major gradient buffer. Same sweep as
/// [`coincidence_amplitudes`] with leave-one-out products per group.
pub fn coincidence_gradient(
    u: &OpticalMatrix,
    input: &CompiledInput,
    layout: &DualRailLayout,
    weights: &[Complex64],
    scratch: &mut SweepScratch,
) -> Result<Vec<Complex64>> {
    let n = layout.qubit_count();
    assert_eq!(weights.len(), 1 << n, "one weight per outcome bitstring");
    let n_modes = u.dimension();
    let mut grad = vec![Complex64::new(0.0, 0.0); n_modes * n_modes];
    for (bits, w) in weights.iter().enumerate() {
        if w.norm_sqr() == 0.0 {
            continue;
        }
        sweep_single(u, input, layout, bits, scratch, Some(*w), &mut grad);
    }
    Ok(grad)
}

/// One Ryser-style sweep over the column set selected by `bits`. Returns the
/// amplitude; when `weight` is set, also accumulates the weighted partials
/// with respect to the device entries into `grad`.
fn sweep_single(
    u: &OpticalMatrix,
    input: &CompiledInput,
    layout: &DualRailLayout,
    bits: usize,
    scratch: &mut SweepScratch,
    weight: Option<Complex64>,
    grad: &mut [Complex64],
) -> Complex64 {
    let n = layout.qubit_count();
    let n_modes = u.dimension();
    let r = input.rows.len();
    let g = input.groups.len();
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);

    scratch.columns.clear();
    for (k, &(h, v)) in layout.qubit_pairs().iter().enumerate() {
        scratch.columns.push(if DualRailLayout::bit(bits, k, n) == 0 { h } else { v });
    }
    scratch.row_sums.clear();
    scratch.row_sums.resize(r, zero);
    scratch.group_values.resize(g, zero);
    scratch.prefix.resize(g + 1, one);
    scratch.suffix.resize(g + 1, one);
    scratch.slot_partials.resize(r, zero);

    let mut acc = zero;
    let mut sign_negative = n % 2 == 0; // (-1)^(n - |S|) at |S| = 1
    for step in 1u64..(1u64 << n) {
        let flipped = step.trailing_zeros() as usize;
        let gray = step ^ (step >> 1);
        let col = scratch.columns[flipped];
        if gray >> flipped & 1 == 1 {
            for (slot, &row) in input.rows.iter().enumerate() {
                scratch.row_sums[slot] += u.get(row, col);
            }
        } else {
            for (slot, &row) in input.rows.iter().enumerate() {
                scratch.row_sums[slot] -= u.get(row, col);
            }
        }

        let mut product = one;
        for (gi, group) in input.groups.iter().enumerate() {
            let mut value = zero;
            for (coeff, slots) in &group.options {
                let mut term = *coeff;
                for &s in slots {
                    term *= scratch.row_sums[s];
                }
                value += term;
            }
            scratch.group_values[gi] = value;
            product *= value;
        }
        let signed_product = if sign_negative { -product } else { product };
        acc += signed_product;

        if let Some(w) = weight {
            // prefix/suffix products over groups for leave-one-out values
            scratch.prefix[0] = one;
            for gi in 0..g {
                scratch.prefix[gi + 1] = scratch.prefix[gi] * scratch.group_values[gi];
            }
            scratch.suffix[g] = one;
            for gi in (0..g).rev() {
                scratch.suffix[gi] = scratch.suffix[gi + 1] * scratch.group_values[gi];
            }
            // d(product)/d rowsum_slot for every slot
            for p in scratch.slot_partials.iter_mut() {
                *p = zero;
            }
            for (gi, group) in input.groups.iter().enumerate() {
                let outer = scratch.prefix[gi] * scratch.suffix[gi + 1];
                for (coeff, slots) in &group.options {
                    match slots.len() {
                        1 => scratch.slot_partials[slots[0]] += outer * coeff,
                        2 => {
                            scratch.slot_partials[slots[0]] += outer * coeff * scratch.row_sums[slots[1]];
                            scratch.slot_partials[slots[1]] += outer * coeff * scratch.row_sums[slots[0]];
                        }
                        _ => {
                            for (drop, &sd) in slots.iter().enumerate() {
                                let mut term = *coeff;
                                for (j, &s) in slots.iter().enumerate() {
                                    if j != drop {
                                        term *= scratch.row_sums[s];
                                    }
                                }
                                scratch.slot_partials[sd] += outer * term;
                            }
                        }
                    }
                }
            }
            let signed_w = if sign_negative { -w } else { w };
            // rowsum_slot(S) depends on u[row][col] exactly for cols in S
            let mut members = gray;
            while members != 0 {
                let q = members.trailing_zeros() as usize;
                members &= members - 1;
                let col = scratch.columns[q];
                for (slot, &row) in input.rows.iter().enumerate() {
                    grad[row * n_modes + col] += signed_w * scratch.slot_partials[slot];
                }
            }
        }
        sign_negative = !sign_negative;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::random_haar;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn beamsplitter() -> OpticalMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        OpticalMatrix::unitary(2, vec![c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]).unwrap()
    }

    fn identity(n: usize) -> OpticalMatrix {
        let mut entries = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            entries[i * n + i] = c(1.0, 0.0);
        }
        OpticalMatrix::unitary(n, entries).unwrap()
    }

    #[test]
    fn identity_device_has_unit_diagonal_amplitudes() {
        let u = identity(3);
        for occ in [vec![1, 0, 1], vec![2, 0, 0], vec![1, 1, 1]] {
            let s = FockState::new(occ);
            let a = amplitude(&u, &s, &s).unwrap();
            assert!((a - c(1.0, 0.0)).norm() < 1e-12, "{s}");
        }
    }

    #[test]
    fn hong_ou_mandel_cancellation() {
        let u = beamsplitter();
        let inp = FockState::new(vec![1, 1]);
        let a = amplitude(&u, &inp, &FockState::new(vec![1, 1])).unwrap();
        assert!(a.norm() < 1e-14, "coincidence amplitude should vanish, got {a}");
        let b = amplitude(&u, &inp, &FockState::new(vec![2, 0])).unwrap();
        assert!((b - c(std::f64::consts::FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn photon_number_mismatch_is_exactly_zero() {
        let u = beamsplitter();
        let a = amplitude(&u, &FockState::new(vec![1, 0]), &FockState::new(vec![1, 1])).unwrap();
        assert_eq!(a, c(0.0, 0.0));
    }

    #[test]
    fn amplitude_rejects_wrong_mode_count() {
        let u = beamsplitter();
        let r = amplitude(&u, &FockState::new(vec![1, 0, 0]), &FockState::new(vec![1, 0]));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn identity_device_preserves_states() {
        let u = identity(2);
        let s = StateVector::from_terms(
            2,
            vec![(FockState::new(vec![2, 0]), c(0.6, 0.0)), (FockState::new(vec![0, 2]), c(0.0, 0.8))],
        )
        .unwrap();
        let out = apply_full(&u, &s).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn unitary_action_preserves_norm() {
        let u = random_haar(3, 42);
        let s = StateVector::from_terms(
            3,
            vec![
                (FockState::new(vec![1, 1, 0]), c(0.5, 0.1)),
                (FockState::new(vec![0, 1, 1]), c(-0.3, 0.7)),
                (FockState::new(vec![2, 0, 0]), c(0.2, -0.2)),
            ],
        )
        .unwrap();
        let out = apply_full(&u, &s).unwrap();
        assert!((out.norm_sqr() - s.norm_sqr()).abs() < 1e-10);
    }

    #[test]
    fn sequential_devices_compose_like_the_matrix_product() {
        let u1 = random_haar(3, 7);
        let u2 = random_haar(3, 8);
        let s = StateVector::from_terms(
            3,
            vec![
                (FockState::new(vec![1, 1, 0]), c(0.8, 0.0)),
                (FockState::new(vec![0, 2, 0]), c(0.0, 0.6)),
            ],
        )
        .unwrap();
        let staged = apply_full(&u2, &apply_full(&u1, &s).unwrap()).unwrap();
        let product = apply_full(&u1.compose(&u2).unwrap(), &s).unwrap();
        let diff = staged.scale_add(&product, c(-1.0, 0.0)).unwrap();
        assert!(diff.norm_sqr().sqrt() < 1e-10);
    }

    #[test]
    fn projection_keeps_computational_terms_only() {
        let layout = DualRailLayout::contiguous(2, 0);
        let s = StateVector::from_terms(
            4,
            vec![
                (FockState::new(vec![1, 0, 0, 1]), c(0.5, 0.0)),
                (FockState::new(vec![2, 0, 0, 0]), c(0.5, 0.0)),
                (FockState::new(vec![0, 1, 1, 0]), c(0.0, 0.5)),
            ],
        )
        .unwrap();
        let projected = project_coincidence(&s, &layout);
        assert_eq!(projected.term_count(), 2);
        assert_eq!(projected.amplitude(&FockState::new(vec![1, 0, 0, 1])), c(0.5, 0.0));
        assert_eq!(projected.amplitude(&FockState::new(vec![2, 0, 0, 0])), c(0.0, 0.0));
    }

    #[test]
    fn projected_norm_matches_term_filter_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = DualRailLayout::contiguous(2, 0);
        let u = random_haar(4, 17);
        let input = StateVector::single(layout.fock_for_bits(0b01), c(1.0, 0.0));
        let full = apply_full(&u, &input).unwrap();
        let projected = project_coincidence(&full, &layout);
        let oracle: f64 = full
            .terms()
            .filter(|(s, _)| layout.in_coincidence(s))
            .map(|(_, a)| a.norm_sqr())
            .sum();
        assert!((projected.norm_sqr() - oracle).abs() < 1e-12);
        let _ = rng.gen::<f64>();
    }

    #[test]
    fn projected_output_equals_full_expansion_then_projection() {
        let layout = DualRailLayout::contiguous(2, 0);
        for seed in 0..10 {
            let u = random_haar(4, 100 + seed);
            let input = StateVector::from_terms(
                4,
                vec![
                    (layout.fock_for_bits(0b00), c(0.5, 0.0)),
                    (layout.fock_for_bits(0b11), c(0.5, 0.0)),
                    (layout.fock_for_bits(0b10), c(0.0, std::f64::consts::FRAC_1_SQRT_2)),
                ],
            )
            .unwrap();
            let fast = projected_output(&u, &input, &layout).unwrap();
            let slow = project_coincidence(&apply_full(&u, &input).unwrap(), &layout);
            let diff = fast.scale_add(&slow, c(-1.0, 0.0)).unwrap();
            assert!(diff.norm_sqr().sqrt() < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn identity_device_fixes_computational_input() {
        let layout = DualRailLayout::contiguous(2, 0);
        let input = StateVector::single(layout.fock_for_bits(0b10), c(1.0, 0.0));
        let out = projected_output(&identity(4), &input, &layout).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn projection_is_a_contraction() {
        let layout = DualRailLayout::contiguous(2, 0);
        for seed in 0..20 {
            let u = random_haar(4, 500 + seed);
            let input = StateVector::single(layout.fock_for_bits(0b01), c(1.0, 0.0));
            let out = projected_output(&u, &input, &layout).unwrap();
            assert!(out.norm_sqr() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn vacuum_modes_in_layout_force_empty_outputs() {
        let layout = DualRailLayout::contiguous(1, 2);
        let u = random_haar(4, 913);
        let input = StateVector::single(layout.fock_for_bits(0), c(1.0, 0.0));
        let out = projected_output(&u, &input, &layout).unwrap();
        for (s, _) in out.terms() {
            assert_eq!(s.occupation(2), 0);
            assert_eq!(s.occupation(3), 0);
        }
    }

    #[test]
    fn layout_validation_rejects_overlap_and_gaps() {
        assert!(DualRailLayout::new(vec![(0, 1), (1, 2)], vec![]).is_err());
        assert!(DualRailLayout::new(vec![(0, 1)], vec![3]).is_err());
        assert!(DualRailLayout::new(vec![(0, 1), (2, 3)], vec![4]).is_ok());
    }

    fn compiled_matches_reference(
        u: &OpticalMatrix,
        compiled: &CompiledInput,
        reference: &StateVector,
        layout: &DualRailLayout,
    ) {
        let mut scratch = SweepScratch::default();
        let amps = coincidence_amplitudes(u, compiled, layout, &mut scratch).unwrap();
        let slow = projected_output(u, reference, layout).unwrap();
        for (bits, amp) in amps.iter().enumerate() {
            let expect = slow.amplitude(&layout.fock_for_bits(bits));
            assert!((amp - expect).norm() < 1e-12, "bits {bits:b}: {amp} vs {expect}");
        }
    }

    #[test]
    fn compiled_qubit_product_matches_reference_route() {
        let layout = DualRailLayout::contiguous(3, 0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let amps = vec![(c(s, 0.0), c(s, 0.0)); 3];
        let compiled = CompiledInput::qubit_product(&layout, &amps).unwrap();
        let mut terms = Vec::new();
        for bits in 0..8usize {
            terms.push((layout.fock_for_bits(bits), c(8f64.powf(-0.5), 0.0)));
        }
        let reference = StateVector::from_terms(6, terms).unwrap();
        for seed in 0..5 {
            let u = random_haar(6, 700 + seed);
            compiled_matches_reference(&u, &compiled, &reference, &layout);
        }
    }

    #[test]
    fn compiled_bell_pairs_match_reference_route() {
        let layout = DualRailLayout::contiguous(4, 0);
        let compiled = CompiledInput::bell_pairs(&layout).unwrap();
        let mut terms = Vec::new();
        for bits in [0b0000usize, 0b0011, 0b1100, 0b1111] {
            terms.push((layout.fock_for_bits(bits), c(0.5, 0.0)));
        }
        let reference = StateVector::from_terms(8, terms).unwrap();
        for seed in 0..3 {
            let u = random_haar(8, 800 + seed);
            compiled_matches_reference(&u, &compiled, &reference, &layout);
        }
    }

    #[test]
    fn compiled_fallback_state_matches_reference_route() {
        let layout = DualRailLayout::contiguous(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut terms = Vec::new();
        for bits in 0..4usize {
            terms.push((layout.fock_for_bits(bits), c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)));
        }
        let reference = StateVector::from_terms(5, terms).unwrap();
        let compiled = CompiledInput::from_state(&reference).unwrap();
        for seed in 0..5 {
            let u = random_haar(5, 900 + seed);
            compiled_matches_reference(&u, &compiled, &reference, &layout);
        }
    }

    #[test]
    fn compiled_gradient_matches_finite_differences() {
        let layout = DualRailLayout::contiguous(2, 0);
        let compiled = CompiledInput::bell_pairs(&layout).unwrap();
        let u = random_haar(4, 321);
        let mut scratch = SweepScratch::default();
        let weights: Vec<Complex64> =
            (0..4).map(|k| c(0.3 + 0.1 * k as f64, 0.2 - 0.05 * k as f64)).collect();
        let grad = coincidence_gradient(&u, &compiled, &layout, &weights, &mut scratch).unwrap();

        let objective = |m: &OpticalMatrix| -> Complex64 {
            let mut sc = SweepScratch::default();
            let amps = coincidence_amplitudes(m, &compiled, &layout, &mut sc).unwrap();
            amps.iter().zip(&weights).map(|(a, w)| a * w).sum()
        };
        let h = 1e-6;
        for r in 0..4 {
            for col in 0..4 {
                let mut entries_plus = u.entries().to_vec();
                entries_plus[r * 4 + col] += c(h, 0.0);
                let plus = OpticalMatrix::contraction(4, entries_plus).unwrap_or_else(|_| {
                    // slight excursions beyond the unit ball are fine for the probe
                    let mut e = u.entries().to_vec();
                    e[r * 4 + col] += c(h, 0.0);
                    OpticalMatrix::from_dmatrix(
                        &nalgebra::DMatrix::from_fn(4, 4, |a, b| e[a * 4 + b]),
                        crate::interferometer::MatrixKind::Contraction,
                    )
                });
                let mut entries_minus = u.entries().to_vec();
                entries_minus[r * 4 + col] -= c(h, 0.0);
                let minus = OpticalMatrix::from_dmatrix(
                    &nalgebra::DMatrix::from_fn(4, 4, |a, b| entries_minus[a * 4 + b]),
                    crate::interferometer::MatrixKind::Contraction,
                );
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let got = grad[r * 4 + col];
                assert!((fd - got).norm() < 1e-6, "entry ({r},{col}): fd {fd} vs {got}");
            }
        }
    }
}
