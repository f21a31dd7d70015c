//! Accuracy, failure-budget and shot allocation for tree estimators.
//!
//! Three schemes. A single layer of cuts (`L = 1`) uses the two-layer
//! protocol constants. Deeper trees with branching `R >= 2` split the
//! accuracy geometrically in depth and the failure budget uniformly over
//! nodes. Chains (`R = 1`) split the accuracy evenly over the `L` layers.

use std::collections::BTreeMap;
use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use super::{NodePath, TreeCircuit, TreeShape};
use crate::ensembles::EnsembleKind;
use crate::error::{bail, Result};
use crate::linalg::{self, CMatrix};
use crate::tomography::{check_accuracy, plan_shots, shots_from_f64};

/// Two-layer protocol variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Replace each cut wire by the measure-and-prepare channel and run the
    /// downstream channels.
    #[serde(alias = "channel", alias = "A")]
    A,
    /// Measure the root state in the product eigenbasis and reweight classically.
    #[serde(alias = "classical", alias = "B")]
    B,
}

impl std::str::FromStr for Protocol {
    type Err = crate::KnitError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "channel" => Ok(Protocol::A),
            "b" | "classical" => Ok(Protocol::B),
            _ => Err(crate::KnitError::Parse(format!("unknown protocol {s:?} (expected a or b)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanScheme {
    TwoLayer(Protocol),
    MultiLayer,
    Chain,
}

/// Per-node sample counts with the accuracy and failure budgets behind them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotPlan {
    pub scheme: PlanScheme,
    pub ensemble: EnsembleKind,
    pub eps: f64,
    pub delta: f64,
    pub depth: usize,
    pub branching: usize,
    /// `eps_l` for depths `1..=L`.
    pub per_depth_accuracy: Vec<f64>,
    /// `delta_l` for depths `1..=L`, per node.
    pub per_depth_budget: Vec<f64>,
    /// Bound on the learning input observable's norm at each depth.
    pub per_depth_norm: Vec<f64>,
    pub per_node_shots: BTreeMap<NodePath, u64>,
    pub root_shots: u64,
    pub root_budget: f64,
    /// `c` in `2 exp(-N0 eps^2 / c) <= root_budget`.
    pub hoeffding_constant: f64,
}

impl ShotPlan {
    pub fn node_shots_total(&self) -> u64 {
        self.per_node_shots.values().sum()
    }

    pub fn total_shots(&self) -> u64 {
        self.node_shots_total() + self.root_shots
    }

    pub fn shots_at_depth(&self, l: usize) -> u64 {
        self.per_node_shots.iter().filter(|(p, _)| p.depth() == l).map(|(_, n)| n).sum()
    }

    pub fn accuracy(&self, l: usize) -> f64 {
        self.per_depth_accuracy[l - 1]
    }

    /// Sum of every failure probability the plan hands out.
    pub fn union_budget(&self) -> f64 {
        let nodes: f64 = self.per_node_shots.keys().map(|p| self.per_depth_budget[p.depth() - 1]).sum();
        nodes + self.root_budget
    }

    /// Same proportions, rescaled so the total is about `budget` (each count
    /// at least one).
    pub fn scaled_to(&self, budget: u64) -> ShotPlan {
        let f = budget as f64 / self.total_shots() as f64;
        let scale = |n: u64| ((n as f64 * f).floor() as u64).max(1);
        let mut out = self.clone();
        out.per_node_shots.values_mut().for_each(|n| *n = scale(*n));
        out.root_shots = scale(self.root_shots);
        out
    }
}

/// Default allocation: the two-layer protocol (b) constants when `L = 1`,
/// the chain allocation when `R = 1`, the geometric allocation otherwise.
pub fn allocate(tree: &TreeCircuit, eps: f64, delta: f64, kind: EnsembleKind) -> Result<ShotPlan> {
    allocate_shape(&tree.shape(), eps, delta, kind)
}

pub fn allocate_two_layer(tree: &TreeCircuit, eps: f64, delta: f64, kind: EnsembleKind, protocol: Protocol) -> Result<ShotPlan> {
    let shape = tree.shape();
    if shape.depth != 1 {
        bail!(InvalidInput, "two-layer allocation needs depth 1, tree has depth {}", shape.depth);
    }
    two_layer(&shape, eps, delta, kind, protocol)
}

pub fn allocate_shape(shape: &TreeShape, eps: f64, delta: f64, kind: EnsembleKind) -> Result<ShotPlan> {
    check_accuracy(eps, delta)?;
    if shape.depth == 1 {
        two_layer(shape, eps, delta, kind, Protocol::B)
    } else if shape.branching == 1 {
        chain(shape, eps, delta, kind)
    } else {
        multi_layer(shape, eps, delta, kind)
    }
}

/// Like [`allocate_shape`] but with an explicit two-layer protocol.
/// Protocol (a) is only defined for `L = 1`.
pub fn allocate_shape_with(shape: &TreeShape, eps: f64, delta: f64, kind: EnsembleKind, protocol: Protocol) -> Result<ShotPlan> {
    check_accuracy(eps, delta)?;
    match (shape.depth, protocol) {
        (1, p) => two_layer(shape, eps, delta, kind, p),
        (_, Protocol::A) => bail!(InvalidInput, "protocol (a) needs depth 1, shape has depth {}", shape.depth),
        _ => allocate_shape(shape, eps, delta, kind),
    }
}

fn per_node(shape: &TreeShape, kind: EnsembleKind, acc: &[f64], budget: &[f64], norm: &[f64]) -> Result<BTreeMap<NodePath, u64>> {
    shape
        .in_dims
        .iter()
        .map(|(p, &d)| {
            let l = p.depth() - 1;
            plan_shots(kind, d, norm[l], acc[l], budget[l]).map(|n| (p.clone(), n))
        })
        .collect()
}

fn hoeffding(constant: f64, eps: f64, budget: f64) -> Result<u64> {
    shots_from_f64(constant * (2.0 / budget).ln() / (eps * eps))
}

fn two_layer(shape: &TreeShape, eps: f64, delta: f64, kind: EnsembleKind, protocol: Protocol) -> Result<ShotPlan> {
    check_accuracy(eps, delta)?;
    let r = shape.branching as f64;
    let (acc, constant) = match protocol {
        Protocol::A => (eps / (4.0 * r), 8.0),
        Protocol::B => (eps / (2.0 * r * (E - 1.0)), 18.0),
    };
    let budget = delta / (r + 1.0);
    let per_node_shots = per_node(shape, kind, &[acc], &[budget], &[1.0])?;
    Ok(ShotPlan {
        scheme: PlanScheme::TwoLayer(protocol),
        ensemble: kind,
        eps,
        delta,
        depth: 1,
        branching: shape.branching,
        per_depth_accuracy: vec![acc],
        per_depth_budget: vec![budget],
        per_depth_norm: vec![1.0],
        per_node_shots,
        root_shots: hoeffding(constant, eps, budget)?,
        root_budget: budget,
        hoeffding_constant: constant,
    })
}

fn multi_layer(shape: &TreeShape, eps: f64, delta: f64, kind: EnsembleKind) -> Result<ShotPlan> {
    let (l_max, r) = (shape.depth, shape.branching as f64);
    let acc: Vec<f64> = (1..=l_max)
        .map(|l| eps / ((2.0 * r).powi(l as i32) * (E - 1.0) * l_max as f64))
        .collect();
    let nodes: f64 = (1..=l_max).map(|t| r.powi(t as i32)).sum();
    let budget = vec![delta / (2.0 * nodes); l_max];
    let norm: Vec<f64> = (1..=l_max).map(|l| if l < l_max { 2.0 } else { 1.0 }).collect();
    let per_node_shots = per_node(shape, kind, &acc, &budget, &norm)?;
    Ok(ShotPlan {
        scheme: PlanScheme::MultiLayer,
        ensemble: kind,
        eps,
        delta,
        depth: l_max,
        branching: shape.branching,
        per_depth_accuracy: acc,
        per_depth_budget: budget,
        per_depth_norm: norm,
        per_node_shots,
        root_shots: hoeffding(32.0, eps, delta / 2.0)?,
        root_budget: delta / 2.0,
        hoeffding_constant: 32.0,
    })
}

fn chain(shape: &TreeShape, eps: f64, delta: f64, kind: EnsembleKind) -> Result<ShotPlan> {
    let l_max = shape.depth;
    let lf = l_max as f64;
    let acc = vec![eps / (2.0 * lf); l_max];
    let budget = vec![delta / (2.0 * (lf + 1.0)); l_max];
    let norm: Vec<f64> = (1..=l_max).map(|l| if l < l_max { 1.5 } else { 1.0 }).collect();
    let per_node_shots = per_node(shape, kind, &acc, &budget, &norm)?;
    Ok(ShotPlan {
        scheme: PlanScheme::Chain,
        ensemble: kind,
        eps,
        delta,
        depth: l_max,
        branching: 1,
        per_depth_accuracy: acc,
        per_depth_budget: budget,
        per_depth_norm: norm,
        per_node_shots,
        root_shots: hoeffding(18.0, eps, delta / 2.0)?,
        root_budget: delta / 2.0,
        hoeffding_constant: 18.0,
    })
}

/// `(1 + x)^r <= 1 + (e - 1) r x` for `0 <= x <= 1/r`.
pub fn power_lemma_holds(x: f64, r: u32) -> bool {
    (1.0 + x).powi(r as i32) <= 1.0 + (E - 1.0) * r as f64 * x + 1e-12
}

/// Returns `(||⊗A - ⊗B||, sum_i ||A_i - B_i|| prod_{j != i} max(||A_j||, ||B_j||))`.
pub fn telescoping_bound(a: &[CMatrix], b: &[CMatrix]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.is_empty() {
        bail!(InvalidInput, "need two equally long non-empty operator lists");
    }
    let ra: Vec<&CMatrix> = a.iter().collect();
    let rb: Vec<&CMatrix> = b.iter().collect();
    let lhs = linalg::op_norm(&(linalg::kron_all(&ra)? - linalg::kron_all(&rb)?));
    let maxes: Vec<f64> = a.iter().zip(b).map(|(x, y)| linalg::op_norm(x).max(linalg::op_norm(y))).collect();
    let rhs = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| {
            let others: f64 = maxes.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, m)| m).product();
            linalg::op_norm(&(x - y)) * others
        })
        .sum();
    Ok((lhs, rhs))
}
