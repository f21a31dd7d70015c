//! JSON tree descriptions.
//!
//! ```json
//! {
//!   "L": 1, "R": 2, "d": 2,
//!   "root_state": {"preset": "zero"},
//!   "nodes": {"0": {"kind": "unitary", "seed": 7}, "1": {"kind": "identity"}},
//!   "leaves": {"0": "Z", "1": "X"}
//! }
//! ```
//!
//! Paths are 0-based and dot separated. Matrices are written as
//! `{"re": [[..]], "im": [[..]]}` with `im` optional.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NodePath, TreeCircuit};
use crate::channels::{DensityOperator, QuantumChannel};
use crate::error::{bail, KnitError, Result};
use crate::linalg::{self, CMatrix, HermitianOperator};
use crate::rng::StreamKey;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let rows = self.re.len();
        let cols = self.re.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || self.re.iter().any(|r| r.len() != cols) {
            bail!(Parse, "matrix rows must be non-empty and equally long");
        }
        if let Some(im) = &self.im {
            if im.len() != rows || im.iter().any(|r| r.len() != cols) {
                bail!(Parse, "imaginary part has a different shape");
            }
        }
        Ok(CMatrix::from_fn(rows, cols, |i, j| {
            linalg::c(self.re[i][j], self.im.as_ref().map_or(0.0, |m| m[i][j]))
        }))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum StateSpec {
    Preset { preset: String },
    Random { random_seed: u64, #[serde(default = "default_rank")] rank: usize },
    Matrix(MatrixSpec),
}

fn default_rank() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    /// Identity on the node's input (dimension from `d` unless given).
    Identity { #[serde(default)] dim: Option<usize> },
    /// Explicit unitary, or Haar-random from `seed`.
    Unitary { #[serde(default)] matrix: Option<MatrixSpec>, #[serde(default)] seed: Option<u64>, #[serde(default)] dim: Option<usize> },
    Kraus { ops: Vec<MatrixSpec> },
    /// Haar-random Stinespring dilation with `env_qubits` extra qubits.
    Random { seed: u64, #[serde(default)] in_dim: Option<usize>, #[serde(default)] out_dim: Option<usize>, #[serde(default = "default_env")] env_qubits: usize },
    Depolarizing { p: f64, #[serde(default)] dim: Option<usize> },
}

fn default_env() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ObservableSpec {
    Pauli(String),
    Matrix(MatrixSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TreeFile {
    #[serde(rename = "L", default)]
    pub depth: Option<usize>,
    #[serde(rename = "R", default)]
    pub branching: Option<usize>,
    #[serde(rename = "d", default)]
    pub bond_dim: Option<usize>,
    pub root_state: StateSpec,
    pub nodes: BTreeMap<NodePath, ChannelSpec>,
    pub leaves: BTreeMap<NodePath, ObservableSpec>,
}

impl TreeFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| KnitError::Parse(format!("tree description: {e}")))
    }

    /// Materialises the circuit. Default node dims: `d` in, and the product
    /// of the children's inputs (or `d` for leaves) out.
    pub fn build(&self) -> Result<TreeCircuit> {
        let d = self.bond_dim.unwrap_or(2);
        let depth = self.nodes.keys().map(NodePath::depth).max().unwrap_or(0);
        let in_dim_of = |p: &NodePath| -> usize {
            match self.nodes.get(p) {
                Some(ChannelSpec::Identity { dim: Some(x) })
                | Some(ChannelSpec::Unitary { dim: Some(x), .. })
                | Some(ChannelSpec::Depolarizing { dim: Some(x), .. })
                | Some(ChannelSpec::Random { in_dim: Some(x), .. }) => *x,
                Some(ChannelSpec::Unitary { matrix: Some(m), .. }) => m.re.len(),
                Some(ChannelSpec::Kraus { ops }) => ops.first().map_or(d, |m| m.re.first().map_or(d, Vec::len)),
                _ => d,
            }
        };
        let default_out = |p: &NodePath| -> usize {
            if p.depth() == depth {
                return in_dim_of(p);
            }
            (0..).map(|k| p.child(k)).take_while(|c| self.nodes.contains_key(c)).map(|c| in_dim_of(&c)).product()
        };
        let mut nodes = BTreeMap::new();
        for (p, spec) in &self.nodes {
            let (din, dout) = (in_dim_of(p), default_out(p));
            let ch = match spec {
                ChannelSpec::Identity { .. } => {
                    if din != dout {
                        bail!(Dimension, "identity node {p} would map {din} to {dout}");
                    }
                    QuantumChannel::identity(din)
                }
                ChannelSpec::Unitary { matrix: Some(m), .. } => QuantumChannel::unitary(m.to_matrix()?)?,
                ChannelSpec::Unitary { seed, .. } => {
                    let mut rng = StreamKey::new("tree-file-unitary").rng(seed.unwrap_or(0), 0);
                    QuantumChannel::unitary(linalg::haar_unitary(din, &mut rng))?
                }
                ChannelSpec::Kraus { ops } => {
                    QuantumChannel::from_kraus(ops.iter().map(MatrixSpec::to_matrix).collect::<Result<_>>()?)?
                }
                ChannelSpec::Random { seed, out_dim, env_qubits, .. } => {
                    let out = out_dim.unwrap_or(dout);
                    let anc = linalg::log2_exact(out.max(din))? - linalg::log2_exact(din)? + env_qubits;
                    let mut rng = StreamKey::new("tree-file-random").rng(*seed, 0);
                    QuantumChannel::random(din, out, anc, &mut rng)?
                }
                ChannelSpec::Depolarizing { p: strength, .. } => QuantumChannel::depolarizing(din, *strength)?,
            };
            nodes.insert(p.clone(), ch);
        }
        let mut leaves = BTreeMap::new();
        for (p, spec) in &self.leaves {
            let o = match spec {
                ObservableSpec::Pauli(label) => HermitianOperator::pauli(label)?,
                ObservableSpec::Matrix(m) => HermitianOperator::new(m.to_matrix()?)?,
            };
            leaves.insert(p.clone(), o);
        }
        let root_dim: usize = (0..)
            .map(|k| NodePath::new(&[k]))
            .take_while(|p| self.nodes.contains_key(p))
            .map(|p| in_dim_of(&p))
            .product();
        let rho = match &self.root_state {
            StateSpec::Preset { preset } => match preset.as_str() {
                "zero" => DensityOperator::basis_state(root_dim, 0)?,
                "maximally_mixed" | "mixed" => DensityOperator::maximally_mixed(root_dim)?,
                other => bail!(Parse, "unknown root state preset {other:?}"),
            },
            StateSpec::Random { random_seed, rank } => {
                let mut rng = StreamKey::new("tree-file-state").rng(*random_seed, 0);
                DensityOperator::new(linalg::random_density_matrix(root_dim, *rank, &mut rng))?
            }
            StateSpec::Matrix(m) => DensityOperator::new(m.to_matrix()?)?,
        };
        let tree = TreeCircuit::new(rho, nodes, leaves)?;
        for (name, declared, actual) in [
            ("L", self.depth, tree.depth()),
            ("R", self.branching, tree.max_branching()),
            ("d", self.bond_dim, tree.bond_dim()),
        ] {
            if let Some(v) = declared {
                if v != actual {
                    bail!(InvalidInput, "declared {name} = {v} but the tree has {name} = {actual}");
                }
            }
        }
        Ok(tree)
    }
}
