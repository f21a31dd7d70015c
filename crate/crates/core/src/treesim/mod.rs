//! Tree-structured circuits and their estimators.
//!
//! A tree circuit starts from a root state on the tensor product of the
//! depth-1 wires. Every node is a channel whose output splits into the input
//! wires of its children. Every depth-`L` node ends in a local observable.
//! The quantity of interest is the expectation of the tensor product of leaf
//! observables. Nodes are addressed by 0-based paths such as `0.1`.

mod estimate;
mod file;
pub mod oracle;
mod plan;
mod scaling;
mod separation;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{DensityOperator, QuantumChannel};
use crate::error::{bail, KnitError, Result};
use crate::linalg::{self, HermitianOperator};

pub use estimate::{
    estimate_pauli_qpd, estimate_tree, estimate_two_layer, pauli_qpd_mean_exact, EstimateOptions,
    EstimateReport, NodeReport,
};
pub use file::{TreeFile, ChannelSpec, ObservableSpec, StateSpec};
pub use oracle::{effective_observables, exact_expectation, schrodinger_expectation};
pub use plan::{
    allocate, allocate_shape, allocate_shape_with, allocate_two_layer, power_lemma_holds, telescoping_bound, PlanScheme,
    Protocol, ShotPlan,
};
pub use scaling::{scaling_table, ScalingRow};
pub use separation::{
    learning_discriminates, make_separation_instance, qpd_discriminates, run_separation,
    SeparationConfig, SeparationInstance, SeparationMethod, SeparationRow,
};

/// Leaf observables may exceed unit norm by this much.
pub const LEAF_NORM_TOL: f64 = 1e-12;

/// Child-index path from the root; `[]` is the root itself.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn new(ix: &[usize]) -> Self {
        NodePath(ix.to_vec())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v.push(k);
        NodePath(v)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("."))
    }
}

impl FromStr for NodePath {
    type Err = KnitError;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().is_empty() {
            bail!(Parse, "empty node path");
        }
        s.split('.')
            .map(|p| p.trim().parse::<usize>().map_err(|_| KnitError::Parse(format!("bad node path {s:?}"))))
            .collect::<Result<Vec<_>>>()
            .map(NodePath)
    }
}

impl Serialize for NodePath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodePath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dimensions only, enough for shot planning.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeShape {
    pub depth: usize,
    pub branching: usize,
    pub bond_dim: usize,
    /// Input dimension of every node.
    pub in_dims: BTreeMap<NodePath, usize>,
}

impl TreeShape {
    /// The complete `(L, R, d)` tree.
    pub fn uniform(depth: usize, branching: usize, bond_dim: usize) -> Result<Self> {
        if depth == 0 || branching == 0 {
            bail!(InvalidInput, "tree needs depth and branching >= 1");
        }
        linalg::log2_exact(bond_dim)?;
        let total = (1..=depth.min(64) as u32).fold(0u128, |acc, l| acc.saturating_add((branching as u128).saturating_pow(l)));
        if total > 1 << 20 {
            bail!(Resource, "tree with {total} nodes is too large");
        }
        let mut in_dims = BTreeMap::new();
        let mut frontier = vec![NodePath::default()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for p in &frontier {
                for k in 0..branching {
                    let c = p.child(k);
                    in_dims.insert(c.clone(), bond_dim);
                    next.push(c);
                }
            }
            frontier = next;
        }
        Ok(TreeShape { depth, branching, bond_dim, in_dims })
    }

    pub fn nodes_at_depth(&self, l: usize) -> impl Iterator<Item = &NodePath> {
        self.in_dims.keys().filter(move |p| p.depth() == l)
    }

    pub fn num_nodes(&self) -> usize {
        self.in_dims.len()
    }
}

/// Channels on a rooted tree, a root state and leaf observables.
#[derive(Clone, Debug)]
pub struct TreeCircuit {
    root_state: DensityOperator,
    nodes: BTreeMap<NodePath, QuantumChannel>,
    leaves: BTreeMap<NodePath, HermitianOperator>,
    depth: usize,
    branching: usize,
    bond_dim: usize,
}

impl TreeCircuit {
    pub fn new(
        root_state: DensityOperator,
        nodes: BTreeMap<NodePath, QuantumChannel>,
        leaves: BTreeMap<NodePath, HermitianOperator>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            bail!(InvalidInput, "tree has no nodes");
        }
        if nodes.keys().any(|p| p.depth() == 0) {
            bail!(InvalidInput, "the root path is reserved for the root state");
        }
        let depth = nodes.keys().map(NodePath::depth).max().unwrap_or(0);
        let count_children = |p: &NodePath| (0..).take_while(|&k| nodes.contains_key(&p.child(k))).count();

        for p in nodes.keys() {
            let parent = NodePath(p.0[..p.depth() - 1].to_vec());
            if p.depth() > 1 && !nodes.contains_key(&parent) {
                bail!(InvalidInput, "node {p} has no parent");
            }
            if p.0.last().copied().unwrap_or(0) >= count_children(&parent) {
                bail!(InvalidInput, "children of {parent} are not numbered contiguously from 0");
            }
        }
        let top = count_children(&NodePath::default());
        let mut branching = top;
        let mut bond_dim = 1;
        for (p, ch) in &nodes {
            linalg::log2_exact(ch.in_dim())
                .map_err(|_| KnitError::Dimension(format!("node {p} input dim {} is not a qubit register", ch.in_dim())))?;
            bond_dim = bond_dim.max(ch.in_dim());
            let kids = count_children(p);
            branching = branching.max(kids);
            if p.depth() < depth {
                if kids == 0 {
                    bail!(InvalidInput, "node {p} is a leaf above the maximal depth {depth}");
                }
                let want: usize = (0..kids).map(|k| nodes[&p.child(k)].in_dim()).product();
                if want != ch.out_dim() {
                    bail!(Dimension, "node {p} outputs dim {} but its children take {want}", ch.out_dim());
                }
                if leaves.contains_key(p) {
                    bail!(InvalidInput, "observable attached to inner node {p}");
                }
            } else {
                let Some(o) = leaves.get(p) else {
                    bail!(InvalidInput, "leaf {p} has no observable");
                };
                if o.dim() != ch.out_dim() {
                    bail!(Dimension, "leaf {p} outputs dim {} but its observable has dim {}", ch.out_dim(), o.dim());
                }
                if o.op_norm() > 1.0 + LEAF_NORM_TOL {
                    bail!(InvalidInput, "leaf observable at {p} has norm {} > 1", o.op_norm());
                }
            }
        }
        if let Some(p) = leaves.keys().find(|p| !nodes.contains_key(p)) {
            bail!(InvalidInput, "observable for unknown node {p}");
        }
        let root_dim: usize = (0..top).map(|k| nodes[&NodePath::new(&[k])].in_dim()).product();
        if root_state.dim() != root_dim {
            bail!(Dimension, "root state has dim {} but the first layer takes {root_dim}", root_state.dim());
        }
        Ok(TreeCircuit { root_state, nodes, leaves, depth, branching, bond_dim })
    }

    /// Complete `(L, R, 2^n)` tree with Haar-random channels (one environment
    /// qubit each), a random rank-2 root state and random non-identity Pauli
    /// leaf observables.
    pub fn random<R: Rng + ?Sized>(depth: usize, branching: usize, qubits: usize, rng: &mut R) -> Result<Self> {
        let d = 1usize << qubits;
        let shape = TreeShape::uniform(depth, branching, d)?;
        let out_dim = d.checked_pow(branching as u32).ok_or_else(|| KnitError::Resource("bond dimension overflow".into()))?;
        let mut nodes = BTreeMap::new();
        let mut leaves = BTreeMap::new();
        for p in shape.in_dims.keys() {
            if p.depth() < depth {
                let anc = linalg::log2_exact(out_dim)? - qubits + 1;
                nodes.insert(p.clone(), QuantumChannel::random(d, out_dim, anc, rng)?);
            } else {
                nodes.insert(p.clone(), QuantumChannel::random(d, d, 1, rng)?);
                leaves.insert(p.clone(), random_pauli_observable(qubits, rng)?);
            }
        }
        let root_dim = out_dim;
        let rho = DensityOperator::new(linalg::random_density_matrix(root_dim, 2, rng))?;
        Self::new(rho, nodes, leaves)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn max_branching(&self) -> usize {
        self.branching
    }

    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    pub fn root_state(&self) -> &DensityOperator {
        &self.root_state
    }

    pub fn nodes(&self) -> &BTreeMap<NodePath, QuantumChannel> {
        &self.nodes
    }

    pub fn channel(&self, p: &NodePath) -> Option<&QuantumChannel> {
        self.nodes.get(p)
    }

    pub fn leaf_observable(&self, p: &NodePath) -> Option<&HermitianOperator> {
        self.leaves.get(p)
    }

    pub fn leaves(&self) -> &BTreeMap<NodePath, HermitianOperator> {
        &self.leaves
    }

    pub fn children(&self, p: &NodePath) -> Vec<NodePath> {
        (0..).map(|k| p.child(k)).take_while(|c| self.nodes.contains_key(c)).collect()
    }

    pub fn top_nodes(&self) -> Vec<NodePath> {
        self.children(&NodePath::default())
    }

    pub fn nodes_at_depth(&self, l: usize) -> Vec<NodePath> {
        self.nodes.keys().filter(|p| p.depth() == l).cloned().collect()
    }

    /// Every node input is a cut wire.
    pub fn num_cuts(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_chain(&self) -> bool {
        self.branching == 1
    }

    pub fn shape(&self) -> TreeShape {
        TreeShape {
            depth: self.depth,
            branching: self.branching,
            bond_dim: self.bond_dim,
            in_dims: self.nodes.iter().map(|(p, c)| (p.clone(), c.in_dim())).collect(),
        }
    }
}

/// A uniformly random non-identity Pauli string on `qubits` qubits.
pub fn random_pauli_observable<R: Rng + ?Sized>(qubits: usize, rng: &mut R) -> Result<HermitianOperator> {
    let idx = rng.gen_range(1..1usize << (2 * qubits));
    let label: Vec<u8> = (0..qubits).map(|k| (idx >> (2 * (qubits - 1 - k)) & 3) as u8).collect();
    Ok(HermitianOperator::from_matrix_unchecked(linalg::pauli_from_indices(&label)?))
}
