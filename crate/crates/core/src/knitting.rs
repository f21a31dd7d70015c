//! Wire cuts: the rescaling-free cut built from an effective observable, and
//! the Pauli quasiprobability cut used as the baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{MPChannel, QuantumChannel};
use crate::error::{bail, Result};
use crate::linalg::{self, kron, outer, partial_trace, CMatrix, CVector, HermitianOperator};
use crate::tomography::LearnedObservable;

/// How the cut's measurement record is used downstream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutMode {
    /// Re-prepare the measured basis state and keep running the circuit.
    Channel,
    /// Stop and output the eigenvalue attached to the outcome.
    Classical,
}

/// Pinching in the eigenbasis of `Φ†(O)`. Leaves `tr[O Φ(ρ)]` unchanged.
pub fn exact_cut(channel: &QuantumChannel, observable: &HermitianOperator) -> Result<MPChannel> {
    let eff = channel.adjoint_apply(observable)?;
    MPChannel::new(eff.eig().vectors.clone())
}

#[derive(Clone, Debug)]
pub struct RescalingFreeCut {
    pub mp: MPChannel,
    pub mode: CutMode,
    /// Operator-norm error the source estimate is assumed to carry.
    pub source_error_bound: f64,
}

impl RescalingFreeCut {
    /// Builds a cut from an estimate of the effective observable.
    pub fn from_estimate(estimate: &HermitianOperator, mode: CutMode, eps: f64) -> Result<Self> {
        let eig = estimate.eig();
        let mp = match mode {
            CutMode::Channel => MPChannel::new(eig.vectors.clone())?,
            CutMode::Classical => MPChannel::with_weights(eig.vectors.clone(), eig.values.clone())?,
        };
        Ok(RescalingFreeCut { mp, mode, source_error_bound: eps })
    }

    /// Worst-case bias on an input of trace norm `x_trace_norm`.
    pub fn bias_bound(&self, x_trace_norm: f64) -> f64 {
        match self.mode {
            CutMode::Channel => 2.0 * self.source_error_bound * x_trace_norm,
            CutMode::Classical => self.source_error_bound * x_trace_norm,
        }
    }

    /// Largest absolute classical weight, if any.
    pub fn max_weight(&self) -> Option<f64> {
        self.mp.weights().map(|w| w.iter().fold(0.0f64, |a, v| a.max(v.abs())))
    }
}

/// Cut from a learned observable. `eps` is the accuracy it was learned to.
pub fn approx_cut(learned: &LearnedObservable, mode: CutMode, eps: f64) -> Result<RescalingFreeCut> {
    RescalingFreeCut::from_estimate(&learned.estimate, mode, eps)
}

/// Sampling overhead of the best LOCC wire cut on a `d`-dimensional wire.
pub fn optimal_gamma(d: usize) -> f64 {
    2.0 * d as f64 - 1.0
}

/// Hoeffding shot count for a product of `cuts` QPD cuts with overhead
/// `gamma` each: outcomes lie in `[-gamma^K, gamma^K]`.
pub fn qpd_hoeffding_shots(gamma: f64, cuts: u32, eps: f64, delta: f64) -> f64 {
    2.0 * gamma.powi(2 * cuts as i32) * (2.0 / delta).ln() / (eps * eps)
}

/// One sampled term of the Pauli wire cut.
#[derive(Clone, Debug)]
pub struct QpdShot {
    pub pauli: usize,
    pub measured: usize,
    pub prepared: usize,
    pub weight: f64,
    pub state: CVector,
}

/// The wire cut `id = sum_P E_P`, with `E_P(ρ) = tr[Pρ] P / 2^n`, run as
/// measure in the eigenbasis of a random Pauli, then prepare a random
/// eigenstate and reweight by `4^n c_e c_e'`.
#[derive(Clone, Debug)]
pub struct QpdWireCut {
    n: usize,
    bases: Vec<CMatrix>,
    signs: Vec<Vec<f64>>,
}

impl QpdWireCut {
    pub fn pauli(n: usize) -> Result<Self> {
        if n == 0 || n > 6 {
            bail!(Resource, "Pauli wire cut supports 1..=6 qubits, got {n}");
        }
        let mut bases = Vec::new();
        let mut signs = Vec::new();
        for idx in linalg::all_pauli_indices(n) {
            let (b, s) = pauli_eigenbasis(&idx);
            bases.push(b);
            signs.push(s);
        }
        Ok(QpdWireCut { n, bases, signs })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn num_terms(&self) -> usize {
        self.bases.len()
    }

    pub fn gamma(&self) -> f64 {
        self.num_terms() as f64
    }

    /// Eigenvectors of Pauli term `i` as columns.
    pub fn eigenbasis(&self, i: usize) -> &CMatrix {
        &self.bases[i]
    }

    pub fn sign(&self, i: usize, e: usize) -> f64 {
        self.signs[i][e]
    }

    /// `E_{P_i}(X)`.
    pub fn apply_term(&self, i: usize, x: &CMatrix) -> Result<CMatrix> {
        let idx = linalg::all_pauli_indices(self.n).nth(i).expect("term index");
        let p = linalg::pauli_from_indices(&idx)?;
        let t = linalg::trace(&(&p * x));
        Ok(p.map(|z| z * t).unscale(self.dim() as f64))
    }

    /// Samples one term against the input state `rho`.
    pub fn sample<R: Rng + ?Sized>(&self, rho: &CMatrix, rng: &mut R) -> Result<QpdShot> {
        let pauli = rng.gen_range(0..self.num_terms());
        let basis = &self.bases[pauli];
        let probs: Vec<f64> = (0..self.dim())
            .map(|e| (basis.column(e).adjoint() * rho * basis.column(e))[(0, 0)].re)
            .collect();
        let measured = crate::rng::Categorical::new(&probs)?.sample(rng);
        let prepared = rng.gen_range(0..self.dim());
        let weight = self.gamma() * self.sign(pauli, measured) * self.sign(pauli, prepared);
        Ok(QpdShot { pauli, measured, prepared, weight, state: basis.column(prepared).into_owned() })
    }
}

/// Product eigenbasis of a Pauli string and the eigenvalue of each column.
/// Identity factors use the computational basis with eigenvalue +1.
pub fn pauli_eigenbasis(idx: &[u8]) -> (CMatrix, Vec<f64>) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let single = |p: u8| -> (CMatrix, [f64; 2]) {
        let m = match p {
            1 => CMatrix::from_row_slice(2, 2, &[linalg::c(h, 0.0), linalg::c(h, 0.0), linalg::c(h, 0.0), linalg::c(-h, 0.0)]),
            2 => CMatrix::from_row_slice(2, 2, &[linalg::c(h, 0.0), linalg::c(h, 0.0), linalg::c(0.0, h), linalg::c(0.0, -h)]),
            _ => linalg::identity(2),
        };
        (m, if p == 0 { [1.0, 1.0] } else { [1.0, -1.0] })
    };
    let mut basis = CMatrix::from_element(1, 1, linalg::ONE);
    let mut signs = vec![1.0];
    for &p in idx {
        let (m, s) = single(p);
        basis = basis.kronecker(&m);
        signs = signs.iter().flat_map(|&a| s.iter().map(move |&b| a * b)).collect();
    }
    (basis, signs)
}

/// Outcome of the two-block check: both cut placements against the uncut value.
#[derive(Clone, Copy, Debug)]
pub struct TwoBlockReport {
    pub exact: f64,
    pub cut_in: f64,
    pub cut_out: f64,
    pub dev_in: f64,
    pub dev_out: f64,
}

/// Two blocks sharing register B: `u1` acts on A⊗B, `u2` on B⊗C, all
/// registers start in `|0>`, and `o1 ⊗ o2` is measured with `o1` on A and
/// `o2` on B⊗C. The B wire is cut either in the eigenbasis of
/// `Q1 = tr_A[(O1⊗I) U1(|0><0|)]` or in that of `Q2 = <0_C| U2†(O2) |0_C>`.
pub fn two_block_check(
    u1: &QuantumChannel,
    u2: &QuantumChannel,
    o1: &HermitianOperator,
    o2: &HermitianOperator,
) -> Result<TwoBlockReport> {
    let da = o1.dim();
    if u1.in_dim() != u1.out_dim() || u2.in_dim() != u2.out_dim() {
        bail!(Dimension, "two-block circuit needs dimension-preserving blocks");
    }
    if u1.in_dim() % da != 0 {
        bail!(Dimension, "block 1 dim {} not divisible by |A| = {da}", u1.in_dim());
    }
    let db = u1.in_dim() / da;
    if u2.in_dim() % db != 0 || o2.dim() != u2.in_dim() {
        bail!(Dimension, "block 2 / observable 2 dims inconsistent with |B| = {db}");
    }
    let dc = u2.in_dim() / db;

    let zero_ab = outer(&linalg::basis_vector(da * db, 0));
    let sigma_ab = u1.apply_matrix(&zero_ab)?;
    let o1_b = kron(o1.matrix(), &linalg::identity(db))?;
    let q1 = partial_trace(&(&o1_b * &sigma_ab), &[da, db], &[1])?;
    let heis2 = u2.adjoint_apply_matrix(o2.matrix())?;
    let zero_c = linalg::basis_vector(dc, 0);
    let q2 = CMatrix::from_fn(db, db, |i, j| {
        let mut s = linalg::ZERO;
        for a in 0..dc {
            for b in 0..dc {
                s += zero_c[a].conj() * heis2[(i * dc + a, j * dc + b)] * zero_c[b];
            }
        }
        s
    });
    let m_in = MPChannel::new(linalg::herm_eig(&linalg::hermitize(&q1))?.vectors)?;
    let m_out = MPChannel::new(linalg::herm_eig(&linalg::hermitize(&q2))?.vectors)?;

    // Full dense evaluation on A⊗B⊗C.
    let evaluate = |cut: Option<&MPChannel>| -> Result<f64> {
        let mut state = kron(&sigma_ab, &outer(&zero_c))?;
        if let Some(mp) = cut {
            let pinch = QuantumChannel::tensor(&[
                &QuantumChannel::identity(da),
                &mp.to_channel(),
                &QuantumChannel::identity(dc),
            ])?;
            state = pinch.apply_matrix(&state)?;
        }
        let block2 = QuantumChannel::tensor(&[&QuantumChannel::identity(da), u2])?;
        state = block2.apply_matrix(&state)?;
        let obs = kron(o1.matrix(), o2.matrix())?;
        Ok(linalg::trace_product_re(&obs, &state))
    };
    let exact = evaluate(None)?;
    let cut_in = evaluate(Some(&m_in))?;
    let cut_out = evaluate(Some(&m_out))?;
    Ok(TwoBlockReport {
        exact,
        cut_in,
        cut_out,
        dev_in: (cut_in - exact).abs(),
        dev_out: (cut_out - exact).abs(),
    })
}

/// Compares the sum of `E_{U† P U}` over Z-type Paulis `P` with the pinching
/// in the basis `U†|j>`. Both sides act as superoperators on matrix units.
/// Returns the largest entrywise gap.
pub fn rotated_pinching_deviation(u: &CMatrix) -> Result<f64> {
    let d = linalg::ensure_square(u)?;
    let n = linalg::log2_exact(d)?;
    let ud = u.adjoint();
    let rotated: Vec<CMatrix> = (0..1usize << n)
        .map(|mask| {
            let idx: Vec<u8> = (0..n).map(|k| if mask >> (n - 1 - k) & 1 == 1 { 3 } else { 0 }).collect();
            let p = linalg::pauli_from_indices(&idx).expect("small register");
            &ud * p * u
        })
        .collect();
    let pinch = MPChannel::new(ud.clone())?;
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            let mut x = CMatrix::zeros(d, d);
            x[(a, b)] = linalg::ONE;
            let mut lhs = CMatrix::zeros(d, d);
            for q in &rotated {
                let t = linalg::trace(&(q * &x));
                lhs += q.map(|z| z * t).unscale(d as f64);
            }
            worst = worst.max(linalg::max_abs_diff(&lhs, &pinch.pinch(&x)?));
        }
    }
    Ok(worst)
}
