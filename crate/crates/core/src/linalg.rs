//! Dense complex linear algebra on top of nalgebra.
//!
//! Adds what the rest of the crate relies on: a Hermitian eigendecomposition
//! with a reproducible ordering and phase convention, Schatten norms, Kronecker
//! products with a dimension cap, partial traces, SWAP operators and the
//! second Haar moment.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{bail, KnitError, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
/// Row/column dense complex matrix.
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Hermiticity gate, relative to the largest entry when that exceeds one.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default cap on any matrix dimension, overridable through `KNITSIM_MAX_DIM`.
pub const DEFAULT_MAX_DIM: usize = 1 << 14;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// The active dimension cap.
pub fn max_dim() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("KNITSIM_MAX_DIM")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&v: &usize| v > 0)
            .unwrap_or(DEFAULT_MAX_DIM)
    })
}

pub fn check_dim(d: usize) -> Result<()> {
    if d > max_dim() {
        bail!(Resource, "dimension {d} exceeds the cap {}", max_dim());
    }
    Ok(())
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn ensure_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(KnitError::Numeric("matrix has non-finite entries".into()))
    }
}

pub fn ensure_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        bail!(Dimension, "expected a non-empty square matrix, got {}x{}", m.nrows(), m.ncols());
    }
    Ok(m.nrows())
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// `|v><v|`.
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

pub fn basis_vector(d: usize, j: usize) -> CVector {
    let mut v = CVector::zeros(d);
    v[j] = ONE;
    v
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().sum()
}

/// `Re tr[A B]` without forming the product.
pub fn trace_product_re(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a.nrows();
    let mut s = 0.0;
    for i in 0..d {
        for k in 0..d {
            s += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    s
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_entry(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

/// Max entrywise distance between two matrices of equal shape.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
}

/// `(m + m†)/2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn is_unitary(m: &CMatrix, tol: f64) -> bool {
    m.nrows() == m.ncols() && max_abs_diff(&(m.adjoint() * m), &identity(m.nrows())) <= tol
}

/// Spectral data of a Hermitian matrix: eigenvalues in descending order and
/// the matching orthonormal eigenvectors as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigen {
    pub fn reconstruct(&self) -> CMatrix {
        let v = &self.vectors;
        let mut scaled = v.clone();
        for (j, &l) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l);
        }
        scaled * v.adjoint()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Hermitian eigendecomposition with a deterministic convention.
///
/// Eigenvalues come out in descending order. Near-degenerate runs are ordered
/// by the quantised magnitudes of their eigenvector components. Each
/// eigenvector is rotated so that its first non-negligible component is real
/// and positive.
pub fn herm_eig(m: &CMatrix) -> Result<Eigen> {
    let d = ensure_square(m)?;
    ensure_finite(m)?;
    let scale = max_abs_entry(m).max(1.0);
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL * scale {
        bail!(InvalidInput, "matrix is not Hermitian (defect {defect:.3e})");
    }
    let eig = nalgebra::SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let tie = 1e-10 * scale;
    let key = |j: usize| -> Vec<i64> {
        eig.eigenvectors
            .column(j)
            .iter()
            .map(|z| -((z.norm() * 1e9).round() as i64))
            .collect()
    };
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d
            && eig.eigenvalues[order[end - 1]] - eig.eigenvalues[order[end]] <= tie
        {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by_key(|&j| key(j));
        }
        start = end;
    }

    let mut vectors = CMatrix::zeros(d, d);
    let mut values = Vec::with_capacity(d);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let pivot = col.iter().find(|z| z.norm() > 1e-10).copied().unwrap_or(ONE);
        let phase = pivot.conj() / pivot.norm();
        for i in 0..d {
            vectors[(i, dst)] = col[i] * phase;
        }
    }
    Ok(Eigen { values, vectors })
}

/// A Hermitian matrix together with a lazily computed, cached [`Eigen`].
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    matrix: CMatrix,
    eig: OnceLock<Arc<Eigen>>,
}

impl PartialEq for HermitianOperator {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl HermitianOperator {
    /// Validates Hermiticity (tolerance `1e-12`, relative for large entries) and
    /// stores the symmetrised matrix.
    pub fn new(m: CMatrix) -> Result<Self> {
        ensure_square(&m)?;
        ensure_finite(&m)?;
        check_dim(m.nrows())?;
        let defect = hermitian_defect(&m);
        if defect > HERMITIAN_TOL * max_abs_entry(&m).max(1.0) {
            bail!(InvalidInput, "observable is not Hermitian (defect {defect:.3e})");
        }
        Ok(Self::from_matrix_unchecked(m))
    }

    /// For matrices that are Hermitian by construction up to round-off.
    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        HermitianOperator { matrix: hermitize(&m), eig: OnceLock::new() }
    }

    /// `V diag(values) V†`.
    pub fn from_spectrum(vectors: &CMatrix, values: &[f64]) -> Result<Self> {
        if vectors.ncols() != values.len() {
            bail!(Dimension, "{} eigenvalues for {} vectors", values.len(), vectors.ncols());
        }
        let e = Eigen { values: values.to_vec(), vectors: vectors.clone() };
        Self::new(e.reconstruct())
    }

    pub fn identity(d: usize) -> Self {
        Self::from_matrix_unchecked(identity(d))
    }

    /// Tensor product of Pauli factors, e.g. `"ZX"`.
    pub fn pauli(label: &str) -> Result<Self> {
        Ok(Self::from_matrix_unchecked(pauli_string(label)?))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn eig(&self) -> &Eigen {
        self.eig.get_or_init(|| {
            // Already symmetrised and checked, so this cannot fail.
            Arc::new(herm_eig(&self.matrix).expect("validated Hermitian matrix"))
        })
    }

    pub fn op_norm(&self) -> f64 {
        self.eig().max_abs()
    }

    pub fn expectation(&self, rho: &CMatrix) -> f64 {
        trace_product_re(&self.matrix, rho)
    }

    pub fn tensor(&self, other: &HermitianOperator) -> Result<Self> {
        Ok(Self::from_matrix_unchecked(kron(&self.matrix, &other.matrix)?))
    }

    pub fn tensor_all(ops: &[&HermitianOperator]) -> Result<Self> {
        let mats: Vec<&CMatrix> = ops.iter().map(|o| o.matrix()).collect();
        Ok(Self::from_matrix_unchecked(kron_all(&mats)?))
    }

    /// Projects the spectrum onto `[-cap, cap]`.
    pub fn clipped(&self, cap: f64) -> Self {
        let e = self.eig();
        let values: Vec<f64> = e.values.iter().map(|v| v.clamp(-cap, cap)).collect();
        let clipped = Eigen { values, vectors: e.vectors.clone() };
        Self::from_matrix_unchecked(clipped.reconstruct())
    }
}

/// Schatten-infinity norm (largest singular value).
pub fn op_norm(m: &CMatrix) -> f64 {
    singular_values(m).iter().fold(0.0f64, |a, &s| a.max(s))
}

/// Schatten-1 norm (sum of singular values).
pub fn trace_norm(m: &CMatrix) -> f64 {
    singular_values(m).iter().sum()
}

fn singular_values(m: &CMatrix) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    check_dim(a.nrows() * b.nrows())?;
    check_dim(a.ncols() * b.ncols())?;
    Ok(a.kronecker(b))
}

pub fn kron_all(ms: &[&CMatrix]) -> Result<CMatrix> {
    let mut acc = CMatrix::from_element(1, 1, ONE);
    for m in ms {
        acc = kron(&acc, m)?;
    }
    Ok(acc)
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    a.kronecker(b)
}

/// Splits a flat index into digits for the given subsystem dims, first
/// subsystem most significant.
fn digits(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for (k, &d) in dims.iter().enumerate().rev() {
        out[k] = idx % d;
        idx /= d;
    }
}

fn undigits(ds: &[usize], dims: &[usize]) -> usize {
    ds.iter().zip(dims).fold(0, |acc, (&x, &d)| acc * d + x)
}

/// Traces out every subsystem not listed in `keep`. Kept subsystems stay in
/// their original order.
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let d = ensure_square(m)?;
    if dims.is_empty() || dims.contains(&0) || dims.iter().product::<usize>() != d {
        bail!(Dimension, "subsystem dims {dims:?} do not multiply to {d}");
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&k| k >= dims.len()) {
        bail!(Dimension, "keep index out of range for {} subsystems", dims.len());
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let kdims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
    let tdims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let dk: usize = kdims.iter().product();
    let dt: usize = tdims.iter().product();

    let mut out = CMatrix::zeros(dk, dk);
    let mut full = vec![0usize; dims.len()];
    let (mut kd, mut td) = (vec![0usize; kept.len()], vec![0usize; traced.len()]);
    let mut embed = |kidx: usize, tidx: usize| -> usize {
        digits(kidx, &kdims, &mut kd);
        digits(tidx, &tdims, &mut td);
        for (i, &k) in kept.iter().enumerate() {
            full[k] = kd[i];
        }
        for (i, &t) in traced.iter().enumerate() {
            full[t] = td[i];
        }
        undigits(&full, dims)
    };
    for r in 0..dk {
        for col in 0..dk {
            let mut s = ZERO;
            for t in 0..dt {
                s += m[(embed(r, t), embed(col, t))];
            }
            out[(r, col)] = s;
        }
    }
    Ok(out)
}

/// Operator that exchanges two `d`-dimensional tensor factors.
pub fn swap_dim(d: usize) -> CMatrix {
    let mut s = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            s[(j * d + i, i * d + j)] = ONE;
        }
    }
    s
}

/// SWAP on two copies of an `n`-qubit register.
pub fn swap_operator(n: usize) -> Result<CMatrix> {
    if n == 0 {
        bail!(InvalidInput, "swap_operator needs n >= 1");
    }
    let d = 1usize << n;
    check_dim(d * d)?;
    Ok(swap_dim(d))
}

/// `(I + SWAP)/(d(d+1))`, the second moment of Haar-random pure states.
pub fn haar_moment_2(d: usize) -> Result<CMatrix> {
    if !d.is_power_of_two() {
        bail!(InvalidInput, "haar_moment_2 expects a power-of-two dimension, got {d}");
    }
    check_dim(d * d)?;
    let s = swap_dim(d) + identity(d * d);
    Ok(s.unscale((d * (d + 1)) as f64))
}

/// Single-qubit Pauli by index: 0 = I, 1 = X, 2 = Y, 3 = Z.
pub fn pauli(k: u8) -> CMatrix {
    let z = ZERO;
    let o = ONE;
    match k & 3 {
        0 => CMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        1 => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMatrix::from_row_slice(2, 2, &[z, -I, I, z]),
        _ => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

pub fn pauli_from_indices(idx: &[u8]) -> Result<CMatrix> {
    let ps: Vec<CMatrix> = idx.iter().map(|&k| pauli(k)).collect();
    let refs: Vec<&CMatrix> = ps.iter().collect();
    kron_all(&refs)
}

/// Parses a label over `{I, X, Y, Z}`.
pub fn parse_pauli_label(label: &str) -> Result<Vec<u8>> {
    if label.is_empty() {
        bail!(Parse, "empty Pauli label");
    }
    label
        .chars()
        .map(|ch| match ch.to_ascii_uppercase() {
            'I' => Ok(0),
            'X' => Ok(1),
            'Y' => Ok(2),
            'Z' => Ok(3),
            other => Err(KnitError::Parse(format!("bad Pauli letter {other:?} in {label:?}"))),
        })
        .collect()
}

pub fn pauli_string(label: &str) -> Result<CMatrix> {
    pauli_from_indices(&parse_pauli_label(label)?)
}

/// Enumerates all `4^n` Pauli index strings, first qubit most significant.
pub fn all_pauli_indices(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..1usize << (2 * n)).map(move |mut x| {
        let mut v = vec![0u8; n];
        for k in (0..n).rev() {
            v[k] = (x & 3) as u8;
            x >>= 2;
        }
        v
    })
}

pub fn log2_exact(d: usize) -> Result<usize> {
    if d == 0 || !d.is_power_of_two() {
        bail!(InvalidInput, "dimension {d} is not a power of two");
    }
    Ok(d.trailing_zeros() as usize)
}

fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Haar-random unitary: QR of a complex Ginibre matrix with the phases of
/// `R`'s diagonal folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let qr = ginibre(d, d, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        let rjj = r[(j, j)];
        let ph = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}

pub fn random_state_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVector {
    let v = ginibre(d, 1, rng).column(0).into_owned();
    let n = v.norm();
    v.unscale(n)
}

/// Random density matrix of the given rank (induced measure).
pub fn random_density_matrix<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(d, rank.max(1), rng);
    let m = &g * g.adjoint();
    let t = trace(&m).re;
    hermitize(&m.unscale(t))
}

/// Random Hermitian matrix with GUE-like entries.
pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(d, d, rng);
    hermitize(&g)
}

/// Compensated accumulator for sums of complex matrices.
#[derive(Clone, Debug)]
pub struct KahanMatrix {
    sum: CMatrix,
    comp: CMatrix,
}

impl KahanMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        KahanMatrix { sum: CMatrix::zeros(rows, cols), comp: CMatrix::zeros(rows, cols) }
    }

    /// Adds `w * m`.
    pub fn add_scaled(&mut self, m: &CMatrix, w: f64) {
        for ((s, cmp), x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(m.iter()) {
            let y_re = x.re * w - cmp.re;
            let t_re = s.re + y_re;
            cmp.re = (t_re - s.re) - y_re;
            s.re = t_re;
            let y_im = x.im * w - cmp.im;
            let t_im = s.im + y_im;
            cmp.im = (t_im - s.im) - y_im;
            s.im = t_im;
        }
    }

    pub fn add(&mut self, m: &CMatrix) {
        self.add_scaled(m, 1.0);
    }

    /// Folds another partial sum in.
    pub fn merge(&mut self, other: &KahanMatrix) {
        let corrected = &other.sum - &other.comp;
        self.add(&corrected);
    }

    pub fn total(&self) -> CMatrix {
        &self.sum - &self.comp
    }
}
