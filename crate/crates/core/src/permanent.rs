//! Matrix permanent kernels.
//!
//! Every multi-photon transition amplitude in this crate is the permanent of
//! a submatrix of the device matrix, so these kernels sit on the hot path of
//! every objective evaluation.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[row * self.cols + col] = value;
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    fn require_square(&self, op: &str) -> Result<usize> {
        if !self.is_square() {
            return Err(Error::Dimension(format!("{op} requires a square matrix, got {}x{}", self.rows, self.cols)));
        }
        Ok(self.rows)
    }
}

/// Permanent by direct permutation enumeration, `O(n! n)`.
///
/// The reference oracle for [`permanent_ryser`]; intended for n <= 9.
pub fn permanent_naive(m: &ComplexMatrix) -> Result<Complex64> {
    let n = m.require_square("permanent")?;
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mut total = Complex64::new(0.0, 0.0);
    let mut used = vec![false; n];
    fn descend(
        m: &ComplexMatrix,
        row: usize,
        n: usize,
        used: &mut [bool],
        partial: Complex64,
        total: &mut Complex64,
    ) {
        if row == n {
            *total += partial;
            return;
        }
        for col in 0..n {
            if !used[col] {
                used[col] = true;
                descend(m, row + 1, n, used, partial * m.get(row, col), total);
                used[col] = false;
            }
        }
    }
    descend(m, 0, n, &mut used, Complex64::new(1.0, 0.0), &mut total);
    Ok(total)
}

/// Permanent via Ryser's formula with Gray-code subset iteration, `O(n 2^n)`.
///
/// One row-sum update per subset step; the objective evaluates on the order
/// of `2^n` of these per call, so the constant matters.
pub fn permanent_ryser(m: &ComplexMatrix) -> Result<Complex64> {
    let n = m.require_square("permanent")?;
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    assert!(n < 64, "permanent_ryser subset iteration limited to n < 64");
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut acc = Complex64::new(0.0, 0.0);
    let mut sign_negative = n % 2 == 0; // sign of (-1)^(n - |S|) with |S| = 1
    for k in 1u64..(1u64 << n) {
        let flipped = k.trailing_zeros() as usize;
        let gray = k ^ (k >> 1);
        if gray >> flipped & 1 == 1 {
            for (i, rs) in row_sums.iter_mut().enumerate() {
                *rs += m.get(i, flipped);
            }
        } else {
            for (i, rs) in row_sums.iter_mut().enumerate() {
                *rs -= m.get(i, flipped);
            }
        }
        let mut product = Complex64::new(1.0, 0.0);
        for rs in &row_sums {
            product *= rs;
        }
        if sign_negative {
            acc -= product;
        } else {
            acc += product;
        }
        sign_negative = !sign_negative;
    }
    Ok(acc)
}

/// Permanent together with all first-order partials `d perm / d m[a][b]`
/// (the permanent cofactors), in a single `O(n^2 2^n)` Gray-code sweep.
///
/// Feeds the analytic objective gradient; validated against both
/// [`permanent_naive`] minors and finite differences in tests.
pub fn permanent_with_cofactors(m: &ComplexMatrix) -> Result<(Complex64, ComplexMatrix)> {
    let n = m.require_square("permanent")?;
    if n == 0 {
        return Ok((Complex64::new(1.0, 0.0), ComplexMatrix::zeros(0, 0)));
    }
    assert!(n < 64, "cofactor sweep limited to n < 64");
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let mut row_sums = vec![zero; n];
    let mut prefix = vec![one; n + 1];
    let mut suffix = vec![one; n + 1];
    let mut perm = zero;
    let mut cof = ComplexMatrix::zeros(n, n);
    let mut sign_negative = n % 2 == 0;
    for k in 1u64..(1u64 << n) {
        let flipped = k.trailing_zeros() as usize;
        let gray = k ^ (k >> 1);
        if gray >> flipped & 1 == 1 {
            for (i, rs) in row_sums.iter_mut().enumerate() {
                *rs += m.get(i, flipped);
            }
        } else {
            for (i, rs) in row_sums.iter_mut().enumerate() {
                *rs -= m.get(i, flipped);
            }
        }
        for i in 0..n {
            prefix[i + 1] = prefix[i] * row_sums[i];
        }
        suffix[n] = one;
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * row_sums[i];
        }
        let signed = |v: Complex64| if sign_negative { -v } else { v };
        perm += signed(prefix[n]);
        // d/d m[a][b] of prod_i rowsum_i(S) is [b in S] * prod_{i != a} rowsum_i(S).
        let mut cols = gray;
        while cols != 0 {
            let b = cols.trailing_zeros() as usize;
            cols &= cols - 1;
            for a in 0..n {
                let v = cof.get(a, b) + signed(prefix[a] * suffix[a + 1]);
                cof.set(a, b, v);
            }
        }
        sign_negative = !sign_negative;
    }
    Ok((perm, cof))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        let entries = (0..n * n)
            .map(|_| {
                // entries in the unit disk
                let r = rng.gen::<f64>().sqrt();
                let phi = rng.gen::<f64>() * std::f64::consts::TAU;
                Complex64::from_polar(r, phi)
            })
            .collect();
        ComplexMatrix::new(n, n, entries).unwrap()
    }

    #[test]
    fn one_by_one_is_its_entry() {
        let m = ComplexMatrix::new(1, 1, vec![c(1.0, 0.0)]).unwrap();
        assert_eq!(permanent_naive(&m).unwrap(), c(1.0, 0.0));
        assert_eq!(permanent_ryser(&m).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn two_by_two_definition() {
        let (a, b, cc, d) = (c(1.0, 2.0), c(-0.5, 0.3), c(0.7, -0.1), c(0.2, 0.9));
        let m = ComplexMatrix::new(2, 2, vec![a, b, cc, d]).unwrap();
        let expect = a * d + b * cc;
        assert!((permanent_naive(&m).unwrap() - expect).norm() < 1e-15);
        assert!((permanent_ryser(&m).unwrap() - expect).norm() < 1e-15);
    }

    #[test]
    fn identity_has_unit_permanent() {
        let m = ComplexMatrix::identity(4);
        assert!((permanent_naive(&m).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!((permanent_ryser(&m).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn all_ones_counts_permutations() {
        let m = ComplexMatrix::new(3, 3, vec![c(1.0, 0.0); 9]).unwrap();
        assert!((permanent_ryser(&m).unwrap() - c(6.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ryser_matches_naive_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=7 {
            for _ in 0..5 {
                let m = random_matrix(n, &mut rng);
                let naive = permanent_naive(&m).unwrap();
                let ryser = permanent_ryser(&m).unwrap();
                let tol = 1e-10 * naive.norm().max(1.0);
                assert!((naive - ryser).norm() <= tol, "n={n}: {naive} vs {ryser}");
            }
        }
    }

    #[test]
    fn invariant_under_row_permutation_and_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_matrix(5, &mut rng);
        let base = permanent_ryser(&m).unwrap();

        let mut swapped = m.clone();
        for col in 0..5 {
            let a = m.get(1, col);
            let b = m.get(3, col);
            swapped.set(1, col, b);
            swapped.set(3, col, a);
        }
        assert!((permanent_ryser(&swapped).unwrap() - base).norm() < 1e-12);

        let mut transposed = ComplexMatrix::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                transposed.set(j, i, m.get(i, j));
            }
        }
        assert!((permanent_ryser(&transposed).unwrap() - base).norm() < 1e-12);
    }

    #[test]
    fn zero_row_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut m = random_matrix(4, &mut rng);
        for col in 0..4 {
            m.set(2, col, c(0.0, 0.0));
        }
        assert!(permanent_ryser(&m).unwrap().norm() < 1e-14);
        assert!(permanent_naive(&m).unwrap().norm() < 1e-14);
    }

    #[test]
    fn non_square_is_rejected() {
        let m = ComplexMatrix::zeros(2, 3);
        assert!(matches!(permanent_naive(&m), Err(Error::Dimension(_))));
        assert!(matches!(permanent_ryser(&m), Err(Error::Dimension(_))));
        assert!(matches!(permanent_with_cofactors(&m), Err(Error::Dimension(_))));
    }

    #[test]
    fn empty_matrix_has_permanent_one() {
        let m = ComplexMatrix::zeros(0, 0);
        assert_eq!(permanent_ryser(&m).unwrap(), c(1.0, 0.0));
    }

    fn minor(m: &ComplexMatrix, drop_row: usize, drop_col: usize) -> ComplexMatrix {
        let n = m.rows();
        let mut entries = Vec::with_capacity((n - 1) * (n - 1));
        for i in 0..n {
            if i == drop_row {
                continue;
            }
            for j in 0..n {
                if j == drop_col {
                    continue;
                }
                entries.push(m.get(i, j));
            }
        }
        ComplexMatrix::new(n - 1, n - 1, entries).unwrap()
    }

    #[test]
    fn cofactors_match_naive_minors() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for n in 2..=6 {
            let m = random_matrix(n, &mut rng);
            let (perm, cof) = permanent_with_cofactors(&m).unwrap();
            assert!((perm - permanent_naive(&m).unwrap()).norm() < 1e-11);
            for a in 0..n {
                for b in 0..n {
                    let expect = permanent_naive(&minor(&m, a, b)).unwrap();
                    assert!(
                        (cof.get(a, b) - expect).norm() < 1e-11,
                        "n={n} cofactor ({a},{b})"
                    );
                }
            }
        }
    }

    #[test]
    fn cofactors_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let m = random_matrix(5, &mut rng);
        let (_, cof) = permanent_with_cofactors(&m).unwrap();
        let h = 1e-6;
        for a in 0..5 {
            for b in 0..5 {
                let mut plus = m.clone();
                plus.set(a, b, m.get(a, b) + c(h, 0.0));
                let mut minus = m.clone();
                minus.set(a, b, m.get(a, b) - c(h, 0.0));
                let fd = (permanent_ryser(&plus).unwrap() - permanent_ryser(&minus).unwrap()) / (2.0 * h);
                assert!((cof.get(a, b) - fd).norm() < 1e-7, "({a},{b})");
            }
        }
    }

    #[test]
    fn row_expansion_reconstructs_permanent_from_cofactors() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let m = random_matrix(6, &mut rng);
        let (perm, cof) = permanent_with_cofactors(&m).unwrap();
        for row in 0..6 {
            let expand: Complex64 = (0..6).map(|col| m.get(row, col) * cof.get(row, col)).sum();
            assert!((expand - perm).norm() < 1e-11);
        }
    }
}
