//! Exact evaluation of tree circuits. Reads the channels directly, so it is
//! only used for reference values and diagnostics, never inside an estimator.

use std::collections::BTreeMap;

use super::{NodePath, TreeCircuit};
use crate::channels::QuantumChannel;
use crate::error::{bail, Result};
use crate::linalg::{self, kron_all, CMatrix};

/// `M_p` for every node: the observable that node `p`'s input wire "sees".
pub fn effective_observables(tree: &TreeCircuit) -> Result<BTreeMap<NodePath, CMatrix>> {
    let mut m: BTreeMap<NodePath, CMatrix> = BTreeMap::new();
    for l in (1..=tree.depth()).rev() {
        for p in tree.nodes_at_depth(l) {
            let input = node_input(tree, &p, &m)?;
            let eff = tree.channel(&p).expect("node exists").adjoint_apply_matrix(&input)?;
            m.insert(p, linalg::hermitize(&eff));
        }
    }
    Ok(m)
}

/// The observable measured on node `p`'s output, given children's observables.
pub(crate) fn node_input(tree: &TreeCircuit, p: &NodePath, m: &BTreeMap<NodePath, CMatrix>) -> Result<CMatrix> {
    if p.depth() == tree.depth() {
        return Ok(tree.leaf_observable(p).expect("validated leaf").matrix().clone());
    }
    let kids: Vec<&CMatrix> = tree.children(p).iter().map(|c| &m[c]).collect();
    kron_all(&kids)
}

/// `tr[O ρ_tree]` by the Heisenberg recursion.
pub fn exact_expectation(tree: &TreeCircuit) -> Result<f64> {
    let m = effective_observables(tree)?;
    let tops: Vec<&CMatrix> = tree.top_nodes().iter().map(|p| &m[p]).collect();
    let o = kron_all(&tops)?;
    Ok(linalg::trace_product_re(&o, tree.root_state().matrix()))
}

/// `tr[O ρ_tree]` by pushing the root state forward layer by layer.
pub fn schrodinger_expectation(tree: &TreeCircuit) -> Result<f64> {
    let mut state = tree.root_state().matrix().clone();
    let mut slots = tree.top_nodes();
    for l in 1..=tree.depth() {
        let mut dims: Vec<usize> = slots.iter().map(|p| tree.channel(p).unwrap().in_dim()).collect();
        for (i, p) in slots.iter().enumerate() {
            let ch = tree.channel(p).unwrap();
            state = apply_on_slot(&state, &dims, i, ch)?;
            dims[i] = ch.out_dim();
        }
        if l < tree.depth() {
            slots = slots.iter().flat_map(|p| tree.children(p)).collect();
        }
    }
    let obs: Vec<&CMatrix> = slots.iter().map(|p| tree.leaf_observable(p).unwrap().matrix()).collect();
    let o = kron_all(&obs)?;
    Ok(linalg::trace_product_re(&o, &state))
}

/// Applies `ch` to tensor factor `slot` of a state with factor dims `dims`.
fn apply_on_slot(state: &CMatrix, dims: &[usize], slot: usize, ch: &QuantumChannel) -> Result<CMatrix> {
    if dims[slot] != ch.in_dim() {
        bail!(Dimension, "slot {slot} has dim {} but the channel takes {}", dims[slot], ch.in_dim());
    }
    let left: usize = dims[..slot].iter().product();
    let right: usize = dims[slot + 1..].iter().product();
    linalg::check_dim(left * ch.out_dim() * right)?;
    let (il, ir) = (linalg::identity(left), linalg::identity(right));
    let embedded = ch
        .kraus()
        .iter()
        .map(|k| kron_all(&[&il, k, &ir]))
        .collect::<Result<Vec<_>>>()?;
    let mut out = CMatrix::zeros(left * ch.out_dim() * right, left * ch.out_dim() * right);
    for k in &embedded {
        out += k * state * k.adjoint();
    }
    Ok(out)
}
