//! Probe-state ensembles and their single-shot estimators.
//!
//! Three ensembles are supported. The 2-design is the full set of mutually
//! unbiased bases in dimension `2^n`. The stabilizer ensemble is a product of
//! single-qubit stabilizer states. The Pauli ensemble pairs a Pauli string
//! with one of its eigenstates. Each has a finite element list indexed by a
//! `u64`, so drawing a probe is one uniform integer draw.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, KnitError, Result};
use crate::linalg::{
    self, c, haar_moment_2, identity, kron, kron_vec, max_abs_diff, outer, CMatrix, CVector,
    HermitianOperator, ONE, ZERO,
};

/// Largest register for which MUB tables are built.
pub const MAX_TWO_DESIGN_QUBITS: usize = 3;
/// Largest register for the product ensembles.
pub const MAX_PRODUCT_QUBITS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    #[serde(alias = "2design", alias = "mub")]
    TwoDesign,
    #[serde(alias = "stabilizer")]
    StabilizerProduct,
    #[serde(alias = "pauli")]
    PauliEigenstates,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 3] =
        [EnsembleKind::TwoDesign, EnsembleKind::StabilizerProduct, EnsembleKind::PauliEigenstates];

    pub fn tag(self) -> &'static str {
        match self {
            EnsembleKind::TwoDesign => "two_design",
            EnsembleKind::StabilizerProduct => "stabilizer_product",
            EnsembleKind::PauliEigenstates => "pauli_eigenstates",
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EnsembleKind {
    type Err = KnitError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "two_design" | "2design" | "2dgn" | "mub" => Ok(EnsembleKind::TwoDesign),
            "stabilizer_product" | "stabilizer" | "stab" => Ok(EnsembleKind::StabilizerProduct),
            "pauli_eigenstates" | "pauli" => Ok(EnsembleKind::PauliEigenstates),
            _ => Err(KnitError::Parse(format!("unknown ensemble kind {s:?}"))),
        }
    }
}

/// What identifies a probe inside its ensemble.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProbeLabel {
    /// Element `element` of mutually unbiased basis `basis`.
    Mub { basis: usize, element: usize },
    /// Per-qubit stabilizer state, in the order 0, 1, +, -, +i, -i.
    Stabilizer(Vec<u8>),
    /// Pauli string (0..4 per qubit), eigenstate bits, and eigenvalue sign.
    Pauli { paulis: Vec<u8>, eigen: Vec<u8>, sign: i8 },
}

#[derive(Clone, Debug)]
pub struct ProbeSample {
    pub kind: EnsembleKind,
    pub n: usize,
    pub index: u64,
    pub state: CVector,
    pub label: ProbeLabel,
}

fn single_stabilizer(s: u8) -> CVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b) = match s {
        0 => (ONE, ZERO),
        1 => (ZERO, ONE),
        2 => (c(h, 0.0), c(h, 0.0)),
        3 => (c(h, 0.0), c(-h, 0.0)),
        4 => (c(h, 0.0), c(0.0, h)),
        _ => (c(h, 0.0), c(0.0, -h)),
    };
    CVector::from_vec(vec![a, b])
}

/// Stabilizer-state index of the `e`-th eigenstate of single-qubit Pauli `p`.
fn pauli_eigenstate(p: u8, e: u8) -> u8 {
    match p {
        1 => 2 + e,
        2 => 4 + e,
        _ => e,
    }
}

fn pauli_sign(p: u8, e: u8) -> i8 {
    if p == 0 || e == 0 {
        1
    } else {
        -1
    }
}

fn product_state(labels: &[u8]) -> CVector {
    labels
        .iter()
        .fold(CVector::from_element(1, ONE), |acc, &s| kron_vec(&acc, &single_stabilizer(s)))
}

/// A finite probe ensemble on `n` qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ensemble {
    kind: EnsembleKind,
    n: usize,
}

impl Ensemble {
    pub fn new(kind: EnsembleKind, n: usize) -> Result<Self> {
        let max = match kind {
            EnsembleKind::TwoDesign => MAX_TWO_DESIGN_QUBITS,
            _ => MAX_PRODUCT_QUBITS,
        };
        if n == 0 || n > max {
            bail!(Resource, "{kind} ensemble supports 1..={max} qubits, got {n}");
        }
        if kind == EnsembleKind::TwoDesign {
            mub_table(n)?;
        }
        Ok(Ensemble { kind, n })
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn size(&self) -> u64 {
        let d = self.dim() as u64;
        match self.kind {
            EnsembleKind::TwoDesign => (d + 1) * d,
            EnsembleKind::StabilizerProduct => 6u64.pow(self.n as u32),
            EnsembleKind::PauliEigenstates => 8u64.pow(self.n as u32),
        }
    }

    /// One uniform draw over the element list.
    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(0..self.size())
    }

    pub fn probe(&self, index: u64) -> ProbeSample {
        assert!(index < self.size(), "probe index out of range");
        let (state, label) = match self.kind {
            EnsembleKind::TwoDesign => {
                let d = self.dim() as u64;
                let table = mub_table(self.n).expect("validated at construction");
                let (basis, element) = ((index / d) as usize, (index % d) as usize);
                (table.bases[basis].column(element).into_owned(), ProbeLabel::Mub { basis, element })
            }
            EnsembleKind::StabilizerProduct => {
                let labels = base_digits(index, 6, self.n);
                (product_state(&labels), ProbeLabel::Stabilizer(labels))
            }
            EnsembleKind::PauliEigenstates => {
                let digits = base_digits(index, 8, self.n);
                let paulis: Vec<u8> = digits.iter().map(|x| x / 2).collect();
                let eigen: Vec<u8> = digits.iter().map(|x| x % 2).collect();
                let sign = paulis.iter().zip(&eigen).map(|(&p, &e)| pauli_sign(p, e)).product();
                let states: Vec<u8> =
                    paulis.iter().zip(&eigen).map(|(&p, &e)| pauli_eigenstate(p, e)).collect();
                (product_state(&states), ProbeLabel::Pauli { paulis, eigen, sign })
            }
        };
        ProbeSample { kind: self.kind, n: self.n, index, state, label }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ProbeSample {
        self.probe(self.sample_index(rng))
    }

    /// `(1/|S|) sum_i (|psi_i><psi_i|)^{⊗2}`.
    pub fn moment_2(&self) -> CMatrix {
        let d = self.dim();
        let mut acc = CMatrix::zeros(d * d, d * d);
        for i in 0..self.size() {
            let p = outer(&self.probe(i).state);
            acc += p.kronecker(&p);
        }
        acc.unscale(self.size() as f64)
    }
}

fn base_digits(mut x: u64, base: u64, n: usize) -> Vec<u8> {
    let mut out = vec![0u8; n];
    for k in (0..n).rev() {
        out[k] = (x % base) as u8;
        x /= base;
    }
    out
}

/// The single-shot estimator at unit eigenvalue; the full estimator is
/// linear in the measured eigenvalue.
pub fn unit_estimator(sample: &ProbeSample) -> CMatrix {
    let d = 1usize << sample.n;
    let m = match &sample.label {
        ProbeLabel::Mub { .. } => {
            let df = d as f64;
            outer(&sample.state).scale(df * (df + 1.0)) - identity(d).scale(df)
        }
        ProbeLabel::Stabilizer(labels) => {
            let mut acc = CMatrix::from_element(1, 1, ONE);
            for &s in labels {
                let f = outer(&single_stabilizer(s)).scale(6.0) - identity(2).scale(2.0);
                acc = acc.kronecker(&f);
            }
            acc
        }
        ProbeLabel::Pauli { paulis, sign, .. } => {
            let p = linalg::pauli_from_indices(paulis).expect("small register");
            p.scale(f64::from(*sign) * (d * d) as f64)
        }
    };
    #[cfg(debug_assertions)]
    {
        let bound = (d * d) as f64;
        let norm = linalg::op_norm(&m);
        debug_assert!(norm <= bound * (1.0 + 1e-12), "single-shot estimator norm {norm} > {bound}");
    }
    m
}

/// `omega(psi, nu)` for the sample's ensemble.
pub fn single_shot_estimator(sample: &ProbeSample, nu: f64) -> HermitianOperator {
    HermitianOperator::from_matrix_unchecked(unit_estimator(sample).scale(nu))
}

pub fn draw<R: Rng + ?Sized>(kind: EnsembleKind, n: usize, rng: &mut R) -> Result<ProbeSample> {
    Ok(Ensemble::new(kind, n)?.draw(rng))
}

/// Averages the estimator over the whole ensemble when the "unknown" effective
/// observable is `a`. Each probe contributes `tr[a |psi><psi|] omega(psi, 1)`,
/// which is the outcome-averaged estimator. Returns the operator-norm distance
/// to `a`.
pub fn reconstruction_identity_check(kind: EnsembleKind, n: usize, a: &HermitianOperator) -> Result<f64> {
    if n > 2 {
        bail!(Resource, "enumeration check limited to n <= 2, got {n}");
    }
    let ens = Ensemble::new(kind, n)?;
    if a.dim() != ens.dim() {
        bail!(Dimension, "observable dim {} vs register dim {}", a.dim(), ens.dim());
    }
    let mut acc = CMatrix::zeros(ens.dim(), ens.dim());
    for i in 0..ens.size() {
        let probe = ens.probe(i);
        let weight = a.expectation(&outer(&probe.state));
        acc += unit_estimator(&probe).scale(weight);
    }
    acc.unscale_mut(ens.size() as f64);
    Ok(linalg::op_norm(&(acc - a.matrix())))
}

/// A complete set of `d + 1` mutually unbiased bases, columns as vectors.
#[derive(Debug)]
pub struct MubTable {
    pub bases: Vec<CMatrix>,
}

/// Builds (once) and returns the validated MUB table for `n` qubits.
pub fn mub_table(n: usize) -> Result<&'static MubTable> {
    static TABLES: [OnceLock<std::result::Result<MubTable, KnitError>>; MAX_TWO_DESIGN_QUBITS] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    if n == 0 || n > MAX_TWO_DESIGN_QUBITS {
        bail!(Resource, "MUB tables exist for 1..={MAX_TWO_DESIGN_QUBITS} qubits, got {n}");
    }
    TABLES[n - 1].get_or_init(|| build_mubs(n)).as_ref().map_err(Clone::clone)
}

/// Symmetric binary matrices as row bitmasks.
fn symmetric_matrices(n: usize) -> Vec<Vec<u32>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    (0u32..1 << pairs.len())
        .map(|mask| {
            let mut rows = vec![0u32; n];
            for (b, &(i, j)) in pairs.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    rows[i] |= 1 << j;
                    rows[j] |= 1 << i;
                }
            }
            rows
        })
        .collect()
}

fn gf2_invertible(rows: &[u32]) -> bool {
    let mut m = rows.to_vec();
    let n = m.len();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| m[r] >> col & 1 == 1) else {
            return false;
        };
        m.swap(col, p);
        for r in 0..n {
            if r != col && m[r] >> col & 1 == 1 {
                m[r] ^= m[col];
            }
        }
    }
    true
}

/// Picks `d` symmetric matrices whose pairwise differences are invertible.
/// Each one yields a maximal commuting set of Pauli operators `(a, S a)`;
/// together with the Z-type set they partition the non-identity Paulis.
fn mub_generating_set(n: usize) -> Option<Vec<Vec<u32>>> {
    fn extend(cands: &[Vec<u32>], chosen: &mut Vec<usize>, target: usize) -> bool {
        if chosen.len() == target {
            return true;
        }
        let start = chosen.last().map_or(0, |&x| x + 1);
        for i in start..cands.len() {
            let ok = chosen.iter().all(|&j| {
                let diff: Vec<u32> = cands[i].iter().zip(&cands[j]).map(|(a, b)| a ^ b).collect();
                gf2_invertible(&diff)
            });
            if ok {
                chosen.push(i);
                if extend(cands, chosen, target) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    let cands = symmetric_matrices(n);
    let mut chosen = Vec::new();
    extend(&cands, &mut chosen, 1 << n).then(|| chosen.iter().map(|&i| cands[i].clone()).collect())
}

/// Hermitian Pauli with X-part `a` and Z-part `b` (bit `k` is qubit `k`).
fn symplectic_pauli(a: u32, b: u32, n: usize) -> CMatrix {
    let idx: Vec<u8> = (0..n)
        .map(|k| match (a >> k & 1, b >> k & 1) {
            (0, 0) => 0,
            (1, 0) => 1,
            (1, 1) => 2,
            _ => 3,
        })
        .collect();
    linalg::pauli_from_indices(&idx).expect("small register")
}

/// Joint eigenbasis of `n` commuting Pauli generators. Column `e` has sign
/// `(-1)^{bit}` on generator `k`, where generator 0 reads the most
/// significant bit of `e`.
fn joint_eigenbasis(gens: &[CMatrix]) -> Result<CMatrix> {
    let n = gens.len();
    let d = 1usize << n;
    let mut basis = CMatrix::zeros(d, d);
    for e in 0..d {
        let mut proj = identity(d);
        for (k, g) in gens.iter().enumerate() {
            let sign = if e >> (n - 1 - k) & 1 == 1 { -1.0 } else { 1.0 };
            proj *= (identity(d) + g.scale(sign)).scale(0.5);
        }
        let best = (0..d)
            .max_by(|&x, &y| proj.column(x).norm().total_cmp(&proj.column(y).norm()))
            .unwrap();
        let col = proj.column(best);
        let norm = col.norm();
        // max_j |v_j| >= 1/sqrt(d) for a unit vector.
        if norm < 0.5 / (d as f64).sqrt() {
            bail!(Numeric, "stabilizer projector {e} is empty");
        }
        let mut v = col.unscale(norm);
        let pivot = v.iter().find(|z| z.norm() > 1e-10).copied().unwrap_or(ONE);
        v *= pivot.conj() / pivot.norm();
        basis.set_column(e, &v);
    }
    Ok(basis)
}

fn build_mubs(n: usize) -> Result<MubTable> {
    let d = 1usize << n;
    let Some(sets) = mub_generating_set(n) else {
        bail!(Numeric, "no MUB generating set found for n = {n}");
    };
    let mut bases = Vec::with_capacity(d + 1);
    let z_gens: Vec<CMatrix> = (0..n).map(|k| symplectic_pauli(0, 1 << k, n)).collect();
    bases.push(joint_eigenbasis(&z_gens)?);
    for s in &sets {
        let gens: Vec<CMatrix> = (0..n).map(|k| symplectic_pauli(1 << k, s[k], n)).collect();
        bases.push(joint_eigenbasis(&gens)?);
    }
    // Gate the construction on exact unbiasedness and the second moment.
    for (x, bx) in bases.iter().enumerate() {
        if !linalg::is_unitary(bx, 1e-12) {
            bail!(Numeric, "MUB basis {x} is not orthonormal");
        }
        for by in &bases[x + 1..] {
            let overlaps = bx.adjoint() * by;
            if overlaps.iter().any(|z| (z.norm_sqr() - 1.0 / d as f64).abs() > 1e-12) {
                bail!(Numeric, "MUB bases are not mutually unbiased");
            }
        }
    }
    let table = MubTable { bases };
    let mut acc = CMatrix::zeros(d * d, d * d);
    for b in &table.bases {
        for j in 0..d {
            let p = outer(&b.column(j).into_owned());
            acc += kron(&p, &p)?;
        }
    }
    acc.unscale_mut(((d + 1) * d) as f64);
    let dev = max_abs_diff(&acc, &haar_moment_2(d)?);
    if dev > 1e-12 {
        bail!(Numeric, "MUB second moment deviates from Haar by {dev:.3e}");
    }
    Ok(table)
}
