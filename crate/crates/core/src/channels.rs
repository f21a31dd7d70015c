//! States, CPTP maps in Kraus form, measure-and-prepare channels and
//! projective measurement sampling.

use rand::Rng;

use crate::error::{bail, Result};
use crate::linalg::{
    self, check_dim, dagger, ensure_finite, ensure_square, hermitian_defect, hermitize, identity,
    kron, max_abs_diff, max_abs_entry, outer, trace, CMatrix, CVector, HermitianOperator, C64,
    HERMITIAN_TOL,
};
use crate::rng::Categorical;

/// Trace-preservation tolerance for Kraus sets.
pub const TP_TOL: f64 = 1e-10;

/// A validated density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    /// Checks Hermiticity, unit trace (`1e-10`) and positivity (`-1e-10`).
    pub fn new(m: CMatrix) -> Result<Self> {
        ensure_square(&m)?;
        ensure_finite(&m)?;
        check_dim(m.nrows())?;
        let defect = hermitian_defect(&m);
        if defect > HERMITIAN_TOL * max_abs_entry(&m).max(1.0) {
            bail!(InvalidInput, "state is not Hermitian (defect {defect:.3e})");
        }
        let tr = trace(&m);
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            bail!(InvalidInput, "state trace is {tr}, expected 1");
        }
        let m = hermitize(&m);
        let min = linalg::herm_eig(&m)?.values.last().copied().unwrap_or(0.0);
        if min < -1e-10 {
            bail!(InvalidInput, "state has negative eigenvalue {min:.3e}");
        }
        Ok(DensityOperator { matrix: m })
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        DensityOperator { matrix: hermitize(&m) }
    }

    /// `|v><v|` for a unit vector.
    pub fn pure(v: &CVector) -> Result<Self> {
        if (v.norm() - 1.0).abs() > 1e-10 {
            bail!(InvalidInput, "state vector has norm {}", v.norm());
        }
        check_dim(v.len())?;
        Ok(DensityOperator { matrix: outer(v) })
    }

    pub fn basis_state(d: usize, j: usize) -> Result<Self> {
        if j >= d {
            bail!(InvalidInput, "basis index {j} out of range for dimension {d}");
        }
        Self::pure(&linalg::basis_vector(d, j))
    }

    pub fn maximally_mixed(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(DensityOperator { matrix: identity(d).unscale(d as f64) })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn expectation(&self, o: &HermitianOperator) -> Result<f64> {
        if o.dim() != self.dim() {
            bail!(Dimension, "observable dim {} vs state dim {}", o.dim(), self.dim());
        }
        Ok(o.expectation(&self.matrix))
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<Self> {
        Ok(DensityOperator { matrix: kron(&self.matrix, &other.matrix)? })
    }
}

/// A CPTP map `X -> sum_k K_k X K_k†`.
#[derive(Clone, Debug)]
pub struct QuantumChannel {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<CMatrix>,
}

impl QuantumChannel {
    /// Validates shapes and `sum K†K = I` within `1e-10`.
    pub fn from_kraus(kraus: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = kraus.first() else {
            bail!(InvalidInput, "a channel needs at least one Kraus operator");
        };
        let (out_dim, in_dim) = first.shape();
        if out_dim == 0 || in_dim == 0 {
            bail!(Dimension, "empty Kraus operator");
        }
        check_dim(out_dim.max(in_dim))?;
        let mut s = CMatrix::zeros(in_dim, in_dim);
        for k in &kraus {
            if k.shape() != (out_dim, in_dim) {
                bail!(Dimension, "Kraus operators have mixed shapes");
            }
            ensure_finite(k)?;
            s += k.adjoint() * k;
        }
        let dev = max_abs_diff(&s, &identity(in_dim));
        if dev > TP_TOL {
            bail!(InvalidInput, "Kraus set is not trace preserving (deviation {dev:.3e})");
        }
        Ok(QuantumChannel { in_dim, out_dim, kraus })
    }

    pub fn identity(d: usize) -> Self {
        QuantumChannel { in_dim: d, out_dim: d, kraus: vec![identity(d)] }
    }

    pub fn unitary(u: CMatrix) -> Result<Self> {
        ensure_square(&u)?;
        if !linalg::is_unitary(&u, TP_TOL) {
            bail!(InvalidInput, "matrix is not unitary");
        }
        Self::from_kraus(vec![u])
    }

    /// `X -> tr_env[U (X ⊗ |0><0|_anc) U†]` with `in_dim * anc_dim = out_dim * env_dim`.
    /// The environment is the trailing tensor factor of the output.
    pub fn from_stinespring(u: &CMatrix, in_dim: usize, anc_dim: usize, out_dim: usize) -> Result<Self> {
        let total = in_dim * anc_dim;
        if u.shape() != (total, total) || out_dim == 0 || total % out_dim != 0 {
            bail!(Dimension, "unitary of shape {:?} cannot map {in_dim}x{anc_dim} to {out_dim}", u.shape());
        }
        if !linalg::is_unitary(u, TP_TOL) {
            bail!(InvalidInput, "Stinespring dilation is not unitary");
        }
        let env = total / out_dim;
        let kraus = (0..env)
            .map(|a| {
                CMatrix::from_fn(out_dim, in_dim, |o, i| u[(o * env + a, i * anc_dim)])
            })
            .collect();
        Self::from_kraus(kraus)
    }

    /// `X -> U (X ⊗ |0^m><0^m|) U†`, an isometric embedding into a larger output.
    pub fn from_isometry(u: &CMatrix, in_dim: usize, anc_dim: usize) -> Result<Self> {
        Self::from_stinespring(u, in_dim, anc_dim, in_dim * anc_dim)
    }

    /// Qubit depolarizing channel `(1-p) X + p tr(X) I/d`, as a Pauli twirl.
    pub fn depolarizing(d: usize, p: f64) -> Result<Self> {
        let n = linalg::log2_exact(d)?;
        if !(0.0..=1.0).contains(&p) {
            bail!(InvalidInput, "depolarizing strength {p} outside [0,1]");
        }
        let d2 = (d * d) as f64;
        let kraus = linalg::all_pauli_indices(n)
            .enumerate()
            .map(|(k, idx)| {
                let w = if k == 0 { 1.0 - p + p / d2 } else { p / d2 };
                linalg::pauli_from_indices(&idx).map(|m| m.scale(w.sqrt()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_kraus(kraus)
    }

    /// Random channel from a Haar unitary on system plus `anc_qubits` ancilla
    /// qubits, keeping an `out_dim`-dimensional output.
    pub fn random<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, anc_qubits: usize, rng: &mut R) -> Result<Self> {
        let anc = 1usize << anc_qubits;
        let total = in_dim * anc;
        if total % out_dim != 0 {
            bail!(Dimension, "cannot fit output {out_dim} into {in_dim} x 2^{anc_qubits}");
        }
        check_dim(total)?;
        let u = linalg::haar_unitary(total, rng);
        Self::from_stinespring(&u, in_dim, anc, out_dim)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        Ok(DensityOperator::from_matrix_unchecked(self.apply_matrix(rho.matrix())?))
    }

    /// Schrödinger action on an arbitrary operator.
    pub fn apply_matrix(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.shape() != (self.in_dim, self.in_dim) {
            bail!(Dimension, "channel input is {0}x{0}, got {1:?}", self.in_dim, x.shape());
        }
        let mut out = CMatrix::zeros(self.out_dim, self.out_dim);
        for k in &self.kraus {
            out += k * x * k.adjoint();
        }
        Ok(out)
    }

    /// Heisenberg action `O -> sum K† O K`.
    pub fn adjoint_apply(&self, o: &HermitianOperator) -> Result<HermitianOperator> {
        Ok(HermitianOperator::from_matrix_unchecked(self.adjoint_apply_matrix(o.matrix())?))
    }

    pub fn adjoint_apply_matrix(&self, o: &CMatrix) -> Result<CMatrix> {
        if o.shape() != (self.out_dim, self.out_dim) {
            bail!(Dimension, "channel output is {0}x{0}, got {1:?}", self.out_dim, o.shape());
        }
        let mut out = CMatrix::zeros(self.in_dim, self.in_dim);
        for k in &self.kraus {
            out += k.adjoint() * o * k;
        }
        Ok(out)
    }

    /// Tensor product channel; Kraus sets multiply out.
    pub fn tensor(channels: &[&QuantumChannel]) -> Result<QuantumChannel> {
        let mut kraus = vec![CMatrix::from_element(1, 1, linalg::ONE)];
        for ch in channels {
            let mut next = Vec::with_capacity(kraus.len() * ch.kraus.len());
            for a in &kraus {
                for b in &ch.kraus {
                    next.push(kron(a, b)?);
                }
            }
            kraus = next;
        }
        let (out_dim, in_dim) = kraus[0].shape();
        Ok(QuantumChannel { in_dim, out_dim, kraus })
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &QuantumChannel) -> Result<QuantumChannel> {
        if next.in_dim != self.out_dim {
            bail!(Dimension, "cannot compose {} -> {} with {} -> {}", self.in_dim, self.out_dim, next.in_dim, next.out_dim);
        }
        let kraus = next
            .kraus
            .iter()
            .flat_map(|b| self.kraus.iter().map(move |a| b * a))
            .collect();
        Ok(QuantumChannel { in_dim: self.in_dim, out_dim: next.out_dim, kraus })
    }

    /// Choi matrix `sum_ij |i><j| ⊗ Φ(|i><j|)`.
    pub fn choi(&self) -> CMatrix {
        let (di, d_o) = (self.in_dim, self.out_dim);
        let mut j = CMatrix::zeros(di * d_o, di * d_o);
        for a in 0..di {
            for b in 0..di {
                let mut e = CMatrix::zeros(di, di);
                e[(a, b)] = linalg::ONE;
                let img = self.apply_matrix(&e).expect("shape matches");
                j.view_mut((a * d_o, b * d_o), (d_o, d_o)).copy_from(&img);
            }
        }
        j
    }
}

/// Measure in the orthonormal basis given by the columns of `V`, then either
/// re-prepare the observed basis state (channel mode) or output a number from
/// the weight table (classical mode).
#[derive(Clone, Debug, PartialEq)]
pub struct MPChannel {
    basis: CMatrix,
    weights: Option<Vec<f64>>,
}

impl MPChannel {
    pub fn new(basis: CMatrix) -> Result<Self> {
        ensure_square(&basis)?;
        if !linalg::is_unitary(&basis, TP_TOL) {
            bail!(InvalidInput, "measure-and-prepare basis is not unitary");
        }
        Ok(MPChannel { basis, weights: None })
    }

    pub fn with_weights(basis: CMatrix, weights: Vec<f64>) -> Result<Self> {
        let mut mp = Self::new(basis)?;
        if weights.len() != mp.dim() || weights.iter().any(|w| !w.is_finite()) {
            bail!(InvalidInput, "need {} finite weights, got {}", mp.dim(), weights.len());
        }
        mp.weights = Some(weights);
        Ok(mp)
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_classical(&self) -> bool {
        self.weights.is_some()
    }

    /// `<v_j|X|v_j>` for every basis vector.
    pub fn diagonal(&self, x: &CMatrix) -> Vec<C64> {
        let rotated = self.basis.adjoint() * x * &self.basis;
        rotated.diagonal().iter().copied().collect()
    }

    pub fn probabilities(&self, rho: &DensityOperator) -> Vec<f64> {
        self.diagonal(rho.matrix()).iter().map(|z| z.re).collect()
    }

    /// The pinching `X -> sum_j <v_j|X|v_j> |v_j><v_j|`, for any operator.
    pub fn pinch(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.shape() != self.basis.shape() {
            bail!(Dimension, "pinching a {:?} operator in dimension {}", x.shape(), self.dim());
        }
        let diag = self.diagonal(x);
        let mut scaled = self.basis.clone();
        for (j, z) in diag.iter().enumerate() {
            for i in 0..self.dim() {
                scaled[(i, j)] *= z;
            }
        }
        Ok(scaled * self.basis.adjoint())
    }

    /// Channel-mode application; classical tables must use [`Self::mp_classical`].
    pub fn mp_apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if self.weights.is_some() {
            bail!(Misuse, "mp_apply called on a classical-mode cut; use mp_classical");
        }
        Ok(DensityOperator::from_matrix_unchecked(self.pinch(rho.matrix())?))
    }

    /// `sum_j p_j w_j` with `p_j = <v_j|rho|v_j>`.
    pub fn mp_classical(&self, rho: &DensityOperator) -> Result<f64> {
        let Some(w) = &self.weights else {
            bail!(Misuse, "mp_classical needs a weight table");
        };
        if rho.dim() != self.dim() {
            bail!(Dimension, "state dim {} vs cut dim {}", rho.dim(), self.dim());
        }
        Ok(self.probabilities(rho).iter().zip(w).map(|(p, w)| p * w).sum())
    }

    /// `V diag(w) V†`, the observable a classical table stands for.
    pub fn weighted_observable(&self) -> Result<HermitianOperator> {
        let Some(w) = &self.weights else {
            bail!(Misuse, "no weight table");
        };
        HermitianOperator::from_spectrum(&self.basis, w)
    }

    /// The pinching as a Kraus channel `{ |v_j><v_j| }`.
    pub fn to_channel(&self) -> QuantumChannel {
        let kraus = (0..self.dim())
            .map(|j| outer(&self.basis.column(j).into_owned()))
            .collect();
        QuantumChannel { in_dim: self.dim(), out_dim: self.dim(), kraus }
    }
}

/// Projective measurement of an observable in its eigenbasis.
#[derive(Clone, Debug)]
pub struct MeasurementSpec {
    observable: HermitianOperator,
}

impl MeasurementSpec {
    pub fn new(observable: HermitianOperator) -> Self {
        observable.eig();
        MeasurementSpec { observable }
    }

    pub fn observable(&self) -> &HermitianOperator {
        &self.observable
    }

    pub fn dim(&self) -> usize {
        self.observable.dim()
    }

    pub fn basis(&self) -> &CMatrix {
        &self.observable.eig().vectors
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.observable.eig().values
    }

    /// `<w_j|rho|w_j>` as a validated sampler.
    pub fn outcome_distribution(&self, rho: &CMatrix) -> Result<Categorical> {
        if rho.shape() != (self.dim(), self.dim()) {
            bail!(Dimension, "measuring a {:?} state with a {}-outcome observable", rho.shape(), self.dim());
        }
        let w = self.basis();
        let probs: Vec<f64> = (0..self.dim())
            .map(|j| {
                let col = w.column(j);
                (col.adjoint() * rho * col)[(0, 0)].re
            })
            .collect();
        Categorical::new(&probs)
    }
}

/// Measures `spec` on `rho`, returning the outcome index and its eigenvalue.
pub fn sample_outcome<R: Rng + ?Sized>(spec: &MeasurementSpec, rho: &DensityOperator, rng: &mut R) -> Result<(usize, f64)> {
    let dist = spec.outcome_distribution(rho.matrix())?;
    let j = dist.sample(rng);
    Ok((j, spec.eigenvalues()[j]))
}

/// Conjugation by `U`: convenience for unitary nodes.
pub fn conjugate(u: &CMatrix, x: &CMatrix) -> CMatrix {
    u * x * dagger(u)
}
