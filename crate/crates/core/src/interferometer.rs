//! The device matrix: parameterization, random sampling, validation and
//! unitary dilation.
//!
//! A search point is an unconstrained real vector. In unitary mode it is the
//! `N^2` coordinates of a Hermitian generator `H` (diagonal reals, then
//! real/imaginary pairs for the upper triangle in row-major order) and the
//! device is `U = exp(iH)`. In contraction mode it is `2 N^2` reals giving an
//! arbitrary complex matrix directly.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Max-entry deviation allowed in `U^t U - I` for a matrix flagged unitary.
pub const UNITARY_TOLERANCE: f64 = 1e-10;

/// Slack allowed on the largest singular value of a contraction.
pub const CONTRACTION_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Unitary,
    Contraction,
}

/// N x N complex matrix representing the linear optical device.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalMatrix {
    n: usize,
    entries: Vec<Complex64>, // row-major
    kind: MatrixKind,
}

impl OpticalMatrix {
    /// Build a matrix flagged unitary; fails if `U^t U` deviates from the
    /// identity by more than [`UNITARY_TOLERANCE`] in any entry.
    pub fn unitary(n: usize, entries: Vec<Complex64>) -> Result<Self> {
        check_entry_count(n, &entries)?;
        let m = Self { n, entries, kind: MatrixKind::Unitary };
        let dev = m.unitary_deviation();
        if dev > UNITARY_TOLERANCE {
            return Err(Error::NotUnitary { deviation: dev });
        }
        Ok(m)
    }

    /// Build a matrix flagged contraction; fails if the largest singular
    /// value exceeds `1 + `[`CONTRACTION_TOLERANCE`].
    pub fn contraction(n: usize, entries: Vec<Complex64>) -> Result<Self> {
        check_entry_count(n, &entries)?;
        let m = Self { n, entries, kind: MatrixKind::Contraction };
        let sigma_max = m.singular_values().into_iter().fold(0.0f64, f64::max);
        if sigma_max > 1.0 + CONTRACTION_TOLERANCE {
            return Err(Error::NotAContraction { sigma_max });
        }
        Ok(m)
    }

    pub(crate) fn from_dmatrix(m: &DMatrix<Complex64>, kind: MatrixKind) -> Self {
        let n = m.nrows();
        debug_assert_eq!(n, m.ncols());
        let mut entries = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                entries.push(m[(r, c)]);
            }
        }
        Self { n, entries, kind }
    }

    pub(crate) fn to_dmatrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |r, c| self.get(r, c))
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.n + col]
    }

    /// One device row as a contiguous slice.
    #[inline]
    pub fn row(&self, row: usize) -> &[Complex64] {
        &self.entries[row * self.n..(row + 1) * self.n]
    }

    /// Max-entry deviation of `U^t U` from the identity.
    pub fn unitary_deviation(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.get(k, i).conj() * self.get(k, j);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - Complex64::new(expect, 0.0)).norm());
            }
        }
        worst
    }

    pub fn adjoint(&self) -> OpticalMatrix {
        let mut entries = Vec::with_capacity(self.n * self.n);
        for r in 0..self.n {
            for c in 0..self.n {
                entries.push(self.get(c, r).conj());
            }
        }
        Self { n: self.n, entries, kind: self.kind }
    }

    /// `self * other` (matrix product), keeping the weaker of the two flags.
    pub fn compose(&self, other: &OpticalMatrix) -> Result<OpticalMatrix> {
        if self.n != other.n {
            return Err(Error::Dimension(format!("cannot compose {}x{} with {}x{}", self.n, self.n, other.n, other.n)));
        }
        let n = self.n;
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for k in 0..n {
                let v = self.get(r, k);
                for c in 0..n {
                    entries[r * n + c] += v * other.get(k, c);
                }
            }
        }
        let kind = if self.kind == MatrixKind::Unitary && other.kind == MatrixKind::Unitary {
            MatrixKind::Unitary
        } else {
            MatrixKind::Contraction
        };
        Ok(Self { n, entries, kind })
    }

    /// Rescale all entries; result is flagged contraction.
    pub fn scaled(&self, factor: f64) -> OpticalMatrix {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|z| z * factor).collect(),
            kind: MatrixKind::Contraction,
        }
    }

    fn singular_values(&self) -> Vec<f64> {
        let svd = self.to_dmatrix().svd(false, false);
        svd.singular_values.iter().copied().collect()
    }
}

fn check_entry_count(n: usize, entries: &[Complex64]) -> Result<()> {
    if entries.len() != n * n {
        return Err(Error::Dimension(format!("{n}x{n} matrix needs {} entries, got {}", n * n, entries.len())));
    }
    Ok(())
}

/// Number of real parameters for a device of dimension `n`.
pub fn unitary_param_len(n: usize) -> usize {
    n * n
}

pub fn contraction_param_len(n: usize) -> usize {
    2 * n * n
}

/// Hermitian generator from its `n^2` real coordinates.
pub(crate) fn hermitian_from_params(p: &[f64], n: usize) -> Result<DMatrix<Complex64>> {
    if p.len() != unitary_param_len(n) {
        return Err(Error::ParamLength { expected: unitary_param_len(n), got: p.len() });
    }
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        h[(k, k)] = Complex64::new(p[k], 0.0);
    }
    let mut idx = n;
    for k in 0..n {
        for l in (k + 1)..n {
            let z = Complex64::new(p[idx], p[idx + 1]);
            idx += 2;
            h[(k, l)] = z;
            h[(l, k)] = z.conj();
        }
    }
    Ok(h)
}

/// Real coordinates of a Hermitian matrix (inverse of [`hermitian_from_params`]).
pub(crate) fn params_from_hermitian(h: &DMatrix<Complex64>) -> Vec<f64> {
    let n = h.nrows();
    let mut p = Vec::with_capacity(unitary_param_len(n));
    for k in 0..n {
        p.push(h[(k, k)].re);
    }
    for k in 0..n {
        for l in (k + 1)..n {
            p.push(h[(k, l)].re);
            p.push(h[(k, l)].im);
        }
    }
    p
}

/// Eigendecomposition of the generator, kept for derivative pullbacks.
pub(crate) struct GeneratorEigen {
    /// Eigenvalues of H (real).
    pub values: Vec<f64>,
    /// Unitary eigenvector matrix V with H = V diag(values) V^t.
    pub vectors: DMatrix<Complex64>,
}

impl GeneratorEigen {
    pub fn of(h: &DMatrix<Complex64>) -> Self {
        let eig = h.clone().symmetric_eigen();
        Self { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors }
    }

    pub fn exponential(&self) -> DMatrix<Complex64> {
        let n = self.values.len();
        let phases = DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                Complex64::from_polar(1.0, self.values[r])
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        &self.vectors * phases * self.vectors.adjoint()
    }

    /// Divided-difference table for the derivative of `exp(iH)`:
    /// `phi[a][b] = (e^{i la} - e^{i lb}) / (i (la - lb))`, continuously
    /// extended on the diagonal.
    pub fn phi(&self) -> DMatrix<Complex64> {
        let n = self.values.len();
        DMatrix::from_fn(n, n, |a, b| {
            let la = self.values[a];
            let lb = self.values[b];
            let half = 0.5 * (la - lb);
            let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
            Complex64::from_polar(sinc, 0.5 * (la + lb))
        })
    }
}

/// `U = exp(iH(p))`, computed through the eigendecomposition of the
/// Hermitian generator. Smooth and surjective onto U(N).
pub fn exp_map(p: &[f64], n: usize) -> Result<OpticalMatrix> {
    Ok(exp_map_with_eigen(p, n)?.0)
}

pub(crate) fn exp_map_with_eigen(p: &[f64], n: usize) -> Result<(OpticalMatrix, GeneratorEigen)> {
    let h = hermitian_from_params(p, n)?;
    let eigen = GeneratorEigen::of(&h);
    let u = eigen.exponential();
    let m = OpticalMatrix::from_dmatrix(&u, MatrixKind::Unitary);
    let dev = m.unitary_deviation();
    if dev > UNITARY_TOLERANCE {
        return Err(Error::NotUnitary { deviation: dev });
    }
    Ok((m, eigen))
}

/// Parameters of a Hermitian generator whose exponential reproduces `u`
/// (a principal matrix logarithm divided by i).
///
/// Splits `u` into commuting Hermitian parts `A = (U + U^t)/2`,
/// `B = (U - U^t)/(2i)` and diagonalizes a fixed generic combination so both
/// are diagonal in the same frame; the phase of each joint eigenvalue is the
/// generator eigenvalue. Exact up to numerics for spectra without collisions
/// in the combination, which is almost-sure for Haar samples.
pub fn params_from_unitary(u: &OpticalMatrix) -> Result<Vec<f64>> {
    let n = u.dimension();
    let m = u.to_dmatrix();
    let a = (&m + m.adjoint()).map(|z| z * 0.5);
    let b = (&m - m.adjoint()).map(|z| z * Complex64::new(0.0, -0.5));
    // Fixed irrational mixing weight; keeps the combined spectrum simple.
    let t = 0.618_033_988_749_894_9;
    let combined = &a + b.map(|z| z * t);
    let eig = combined.symmetric_eigen();
    let v = &eig.eigenvectors;
    let da = v.adjoint() * &a * v;
    let db = v.adjoint() * &b * v;
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        let theta = db[(j, j)].re.atan2(da[(j, j)].re);
        h[(j, j)] = Complex64::new(theta, 0.0);
    }
    let h = v * h * v.adjoint();
    // Symmetrize away roundoff before reading coordinates.
    let h = (&h + h.adjoint()).map(|z| z * 0.5);
    Ok(params_from_hermitian(&h))
}

/// Haar-distributed random unitary: QR of a complex Gaussian matrix with the
/// R diagonal phases folded into Q. Deterministic for a given seed.
pub fn random_haar(n: usize, seed: u64) -> OpticalMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let phases = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                Complex64::new(1.0, 0.0)
            }
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let u = q * phases;
    OpticalMatrix::from_dmatrix(&u, MatrixKind::Unitary)
}

/// Complex Gaussian matrix rescaled so the largest singular value is at
/// most one; the start distribution for contraction-mode searches.
pub fn random_contraction(n: usize, seed: u64) -> OpticalMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let sigma_max = g.clone().svd(false, false).singular_values.iter().copied().fold(0.0f64, f64::max);
    let scaled = if sigma_max > 1.0 { g.map(|z| z / sigma_max) } else { g };
    OpticalMatrix::from_dmatrix(&scaled, MatrixKind::Contraction)
}

/// Arbitrary complex matrix from `2 n^2` reals (row-major re/im pairs),
/// clamped back into the contraction ball when the largest singular value
/// exceeds one. Returns the matrix and the applied scale (1 when unclamped).
pub fn contraction_from_params(p: &[f64], n: usize) -> Result<(OpticalMatrix, f64)> {
    if p.len() != contraction_param_len(n) {
        return Err(Error::ParamLength { expected: contraction_param_len(n), got: p.len() });
    }
    let entries: Vec<Complex64> =
        (0..n * n).map(|k| Complex64::new(p[2 * k], p[2 * k + 1])).collect();
    let raw = OpticalMatrix { n, entries, kind: MatrixKind::Contraction };
    let sigma_max = raw.singular_values().into_iter().fold(0.0f64, f64::max);
    if sigma_max > 1.0 {
        Ok((raw.scaled(1.0 / sigma_max), sigma_max))
    } else {
        Ok((raw, 1.0))
    }
}

/// Re/im pairs for a complex matrix (inverse of [`contraction_from_params`]
/// before clamping).
pub fn params_from_matrix(m: &OpticalMatrix) -> Vec<f64> {
    let mut p = Vec::with_capacity(2 * m.entries.len());
    for z in &m.entries {
        p.push(z.re);
        p.push(z.im);
    }
    p
}

/// Smallest over largest singular value, in `[0, 1]`; equals 1 exactly when
/// the matrix is a scalar multiple of a unitary.
pub fn singular_value_ratio(m: &OpticalMatrix) -> Result<f64> {
    let sv = m.singular_values();
    let sigma_max = sv.iter().copied().fold(0.0f64, f64::max);
    let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(sigma_max > f64::MIN_POSITIVE) {
        return Err(Error::ZeroMatrix);
    }
    Ok(sigma_min / sigma_max)
}

/// Unitary dilation: a `2N x 2N` unitary whose top-left block is `m`.
///
/// Cosine-sine construction from the SVD `m = P S Q^t`: the defect blocks are
/// `P C P^t` and `Q C Q^t` with `C = sqrt(I - S^2)`, assembled as a product of
/// three exactly-unitary factors.
pub fn dilate(m: &OpticalMatrix) -> Result<OpticalMatrix> {
    let n = m.dimension();
    let svd = m.to_dmatrix().svd(true, true);
    let p = svd.u.as_ref().expect("svd with u requested");
    let qt = svd.v_t.as_ref().expect("svd with v_t requested");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let sigma_max = sigma.iter().copied().fold(0.0f64, f64::max);
    if sigma_max > 1.0 + CONTRACTION_TOLERANCE {
        return Err(Error::NotAContraction { sigma_max });
    }
    let defect: Vec<f64> = sigma.iter().map(|s| (1.0 - s * s).max(0.0).sqrt()).collect();

    let zero = Complex64::new(0.0, 0.0);
    let mut w = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    // Left factor diag(P, Q), middle [[S, C], [C, -S]], right factor diag(Q^t, P^t).
    let q = qt.adjoint();
    let mut left = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    let mut middle = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    let mut right = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            left[(r, c)] = p[(r, c)];
            left[(n + r, n + c)] = q[(r, c)];
            right[(r, c)] = qt[(r, c)];
            right[(n + r, n + c)] = p.adjoint()[(r, c)];
        }
        middle[(r, r)] = Complex64::new(sigma[r], 0.0);
        middle[(n + r, n + r)] = Complex64::new(-sigma[r], 0.0);
        middle[(r, n + r)] = Complex64::new(defect[r], 0.0);
        middle[(n + r, r)] = Complex64::new(defect[r], 0.0);
    }
    let product = &left * &middle * &right;
    for r in 0..2 * n {
        for c in 0..2 * n {
            w[(r, c)] = product[(r, c)];
        }
    }
    let _ = zero;
    let out = OpticalMatrix::from_dmatrix(&w, MatrixKind::Unitary);
    let dev = out.unitary_deviation();
    if dev > UNITARY_TOLERANCE {
        return Err(Error::NotUnitary { deviation: dev });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct MatrixDto {
    n: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for OpticalMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.n;
        let dto = MatrixDto {
            n,
            re: (0..n).map(|r| (0..n).map(|c| self.get(r, c).re).collect()).collect(),
            im: (0..n).map(|r| (0..n).map(|c| self.get(r, c).im).collect()).collect(),
        };
        dto.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OpticalMatrix {
    /// Classifies the stored matrix: flagged unitary when it passes the
    /// unitarity check, otherwise contraction (or an error beyond that).
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let dto = MatrixDto::deserialize(deserializer)?;
        let n = dto.n;
        if dto.re.len() != n || dto.im.len() != n || dto.re.iter().any(|r| r.len() != n) || dto.im.iter().any(|r| r.len() != n) {
            return Err(D::Error::custom(format!("matrix rows do not match declared dimension {n}")));
        }
        let mut entries = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                entries.push(Complex64::new(dto.re[r][c], dto.im[r][c]));
            }
        }
        let probe = OpticalMatrix { n, entries: entries.clone(), kind: MatrixKind::Contraction };
        if probe.unitary_deviation() <= UNITARY_TOLERANCE {
            return Ok(OpticalMatrix { n, entries, kind: MatrixKind::Unitary });
        }
        OpticalMatrix::contraction(n, entries).map_err(D::Error::custom)
    }
}
