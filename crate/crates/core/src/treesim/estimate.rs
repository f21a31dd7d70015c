//! Learning-based estimators for tree circuits and the Pauli QPD baseline.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use super::oracle::{self, node_input};
use super::plan::{PlanScheme, Protocol, ShotPlan};
use super::{NodePath, TreeCircuit};
use crate::channels::MeasurementSpec;
use crate::error::{bail, Result};
use crate::exec::{map_chunks, ExecMode};
use crate::knitting::{pauli_eigenbasis, CutMode, RescalingFreeCut};
use crate::linalg::{self, kron_all, CMatrix, HermitianOperator};
use crate::rng::{Categorical, StreamKey};
use crate::tomography::{learn, LearningTask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[derive(Default)]
pub struct EstimateOptions {
    pub exec: ExecMode,
    /// Compare every learned observable with the exact one. Reads the
    /// channels directly, so it only affects the report.
    pub diagnostics: bool,
}


#[derive(Clone, Debug, Serialize)]
pub struct NodeReport {
    pub path: NodePath,
    pub depth: usize,
    pub shots: u64,
    pub learned_norm: f64,
    /// `||M~_p - M_p||` against the exact effective observable.
    pub deviation: Option<f64>,
    /// `||M~_p - Φ_p†(input actually used)||`, this node's own learning error.
    pub learn_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub root_shots: u64,
    pub node_shots: u64,
    pub total_shots: u64,
    /// `prod_k ||M~_k||` over the first layer.
    pub gamma: f64,
    /// Largest `|outcome|` among the final-stage shots.
    pub max_abs_weight: f64,
    pub nodes: Vec<NodeReport>,
    pub exact: Option<f64>,
    /// Mean of the final-stage outcome given the learned observables.
    pub protocol_mean: Option<f64>,
    /// `x_l`, largest deviation at each depth.
    pub depth_deviation: Vec<f64>,
    /// Whether every node met its accuracy target.
    pub good_event: Option<bool>,
}

fn check_plan(tree: &TreeCircuit, plan: &ShotPlan) -> Result<()> {
    if plan.depth != tree.depth() {
        bail!(InvalidInput, "plan is for depth {}, tree has depth {}", plan.depth, tree.depth());
    }
    if plan.per_node_shots.len() != tree.nodes().len()
        || tree.nodes().keys().any(|p| !plan.per_node_shots.contains_key(p))
    {
        bail!(InvalidInput, "plan nodes do not match the tree");
    }
    if plan.root_shots == 0 || plan.per_node_shots.values().any(|&n| n == 0) {
        bail!(InvalidInput, "plan contains zero shot counts");
    }
    Ok(())
}

/// Learns `M~_p` for every node, deepest layer first.
fn learn_tree(tree: &TreeCircuit, plan: &ShotPlan, seed: u64, exec: ExecMode) -> Result<BTreeMap<NodePath, HermitianOperator>> {
    let mut learned: BTreeMap<NodePath, HermitianOperator> = BTreeMap::new();
    for l in (1..=tree.depth()).rev() {
        for p in tree.nodes_at_depth(l) {
            let input = if l == tree.depth() {
                tree.leaf_observable(&p).expect("leaf").clone()
            } else {
                let kids: Vec<&HermitianOperator> = tree.children(&p).iter().map(|c| &learned[c]).collect();
                HermitianOperator::tensor_all(&kids)?
            };
            let channel = tree.channel(&p).expect("node");
            let task = LearningTask::new(channel, &input, plan.ensemble, plan.per_node_shots[&p], seed)
                .with_stream(StreamKey::new("tree-node").with_path(p.as_slice()))
                .with_exec(exec);
            learned.insert(p, learn(&task)?.estimate);
        }
    }
    Ok(learned)
}

/// Joint distribution of the root state measured in `⊗ V_k`.
fn product_basis_distribution(tree: &TreeCircuit, bases: &[&CMatrix]) -> Result<Categorical> {
    let v = kron_all(bases)?;
    let rotated = v.adjoint() * tree.root_state().matrix() * &v;
    let probs: Vec<f64> = rotated.diagonal().iter().map(|z| z.re).collect();
    Categorical::new(&probs)
}

/// Mixed-radix digits of a joint outcome, first factor most significant.
fn split(mut j: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = j % dims[k];
        j /= dims[k];
    }
}

/// Counts `N` draws from `dist` in parallel chunks.
fn sample_counts(dist: &Categorical, shots: u64, seed: u64, stream: StreamKey, exec: ExecMode) -> Vec<u64> {
    let parts = map_chunks(shots, exec, |chunk, len| {
        let mut rng = stream.rng(seed, chunk);
        let mut counts = vec![0u64; dist.len()];
        for _ in 0..len {
            counts[dist.sample(&mut rng)] += 1;
        }
        counts
    });
    let mut counts = vec![0u64; dist.len()];
    for part in parts {
        counts.iter_mut().zip(part).for_each(|(c, p)| *c += p);
    }
    counts
}

/// Classical final stage: measure the root state in the eigenbases of the
/// first-layer estimates and reweight by the product of their eigenvalues.
fn classical_final(tree: &TreeCircuit, tops: &[&HermitianOperator], shots: u64, seed: u64, exec: ExecMode) -> Result<(f64, f64)> {
    let cuts = tops
        .iter()
        .map(|m| RescalingFreeCut::from_estimate(m, CutMode::Classical, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let bases: Vec<&CMatrix> = cuts.iter().map(|c| c.mp.basis()).collect();
    let dims: Vec<usize> = bases.iter().map(|b| b.nrows()).collect();
    let dist = product_basis_distribution(tree, &bases)?;
    let mut digits = vec![0; dims.len()];
    let weights: Vec<f64> = (0..dist.len())
        .map(|j| {
            split(j, &dims, &mut digits);
            cuts.iter().zip(&digits).map(|(c, &e)| c.mp.weights().unwrap()[e]).product()
        })
        .collect();
    let counts = sample_counts(&dist, shots, seed, StreamKey::new("tree-root"), exec);
    let mut sum = 0.0;
    let mut max_w = 0.0f64;
    for (c, w) in counts.iter().zip(&weights) {
        if *c > 0 {
            sum += *c as f64 * w;
            max_w = max_w.max(w.abs());
        }
    }
    Ok((sum / shots as f64, max_w))
}

/// Channel-mode final stage for a single cut layer: measure each wire in its
/// cut basis, re-prepare, run the leaf channel and measure its observable.
fn channel_final(tree: &TreeCircuit, tops: &[NodePath], learned: &[&HermitianOperator], shots: u64, seed: u64, exec: ExecMode) -> Result<(f64, f64)> {
    let cuts = learned
        .iter()
        .map(|m| RescalingFreeCut::from_estimate(m, CutMode::Channel, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let bases: Vec<&CMatrix> = cuts.iter().map(|c| c.mp.basis()).collect();
    let dims: Vec<usize> = bases.iter().map(|b| b.nrows()).collect();
    let dist = product_basis_distribution(tree, &bases)?;
    // downstream[k][e]: outcome sampler for the leaf after re-preparing basis state e.
    let mut downstream = Vec::new();
    let mut eigenvalues = Vec::new();
    for (k, p) in tops.iter().enumerate() {
        let spec = MeasurementSpec::new(tree.leaf_observable(p).expect("leaf").clone());
        let ch = tree.channel(p).expect("node");
        let per_e = (0..dims[k])
            .map(|e| {
                let prep = linalg::outer(&bases[k].column(e).into_owned());
                spec.outcome_distribution(&ch.apply_matrix(&prep)?)
            })
            .collect::<Result<Vec<_>>>()?;
        downstream.push(per_e);
        eigenvalues.push(spec.eigenvalues().to_vec());
    }
    let stream = StreamKey::new("tree-root-a");
    let parts = map_chunks(shots, exec, |chunk, len| {
        let mut rng = stream.rng(seed, chunk);
        let mut digits = vec![0; dims.len()];
        let (mut sum, mut max_w) = (0.0, 0.0f64);
        for _ in 0..len {
            split(dist.sample(&mut rng), &dims, &mut digits);
            let mut v = 1.0;
            for k in 0..dims.len() {
                v *= eigenvalues[k][downstream[k][digits[k]].sample(&mut rng)];
            }
            sum += v;
            max_w = max_w.max(v.abs());
        }
        (sum, max_w)
    });
    let (sum, max_w) = parts.iter().fold((0.0, 0.0f64), |(s, m), &(a, b)| (s + a, m.max(b)));
    Ok((sum / shots as f64, max_w))
}

struct Diagnostics {
    nodes: Vec<NodeReport>,
    exact: f64,
    depth_deviation: Vec<f64>,
}

fn diagnose(tree: &TreeCircuit, plan: &ShotPlan, learned: &BTreeMap<NodePath, HermitianOperator>) -> Result<Diagnostics> {
    let exact_m = oracle::effective_observables(tree)?;
    let learned_m: BTreeMap<NodePath, CMatrix> = learned.iter().map(|(p, m)| (p.clone(), m.matrix().clone())).collect();
    let mut nodes = Vec::new();
    let mut depth_deviation = vec![0.0f64; tree.depth()];
    for (p, m) in learned {
        let deviation = linalg::op_norm(&(m.matrix() - &exact_m[p]));
        let target = tree.channel(p).unwrap().adjoint_apply_matrix(&node_input(tree, p, &learned_m)?)?;
        let learn_error = linalg::op_norm(&(m.matrix() - target));
        depth_deviation[p.depth() - 1] = depth_deviation[p.depth() - 1].max(deviation);
        nodes.push(NodeReport {
            path: p.clone(),
            depth: p.depth(),
            shots: plan.per_node_shots[p],
            learned_norm: m.op_norm(),
            deviation: Some(deviation),
            learn_error: Some(learn_error),
        });
    }
    Ok(Diagnostics { nodes, exact: oracle::exact_expectation(tree)?, depth_deviation })
}

fn plain_nodes(plan: &ShotPlan, learned: &BTreeMap<NodePath, HermitianOperator>) -> Vec<NodeReport> {
    learned
        .iter()
        .map(|(p, m)| NodeReport {
            path: p.clone(),
            depth: p.depth(),
            shots: plan.per_node_shots[p],
            learned_norm: m.op_norm(),
            deviation: None,
            learn_error: None,
        })
        .collect()
}

/// Single layer of cuts: learn each `M~_k`, then run protocol (a) or (b).
pub fn estimate_two_layer(tree: &TreeCircuit, plan: &ShotPlan, protocol: Protocol, seed: u64, opts: EstimateOptions) -> Result<EstimateReport> {
    if tree.depth() != 1 {
        bail!(InvalidInput, "two-layer estimation needs depth 1, tree has depth {}", tree.depth());
    }
    check_plan(tree, plan)?;
    let learned = learn_tree(tree, plan, seed, opts.exec)?;
    let tops = tree.top_nodes();
    let top_ops: Vec<&HermitianOperator> = tops.iter().map(|p| &learned[p]).collect();
    let (estimate, max_abs_weight) = match protocol {
        Protocol::B => classical_final(tree, &top_ops, plan.root_shots, seed, opts.exec)?,
        Protocol::A => channel_final(tree, &tops, &top_ops, plan.root_shots, seed, opts.exec)?,
    };
    let mut report = base_report(plan, &learned, &tops, estimate, max_abs_weight);
    if opts.diagnostics {
        let diag = diagnose(tree, plan, &learned)?;
        let acc = plan.accuracy(1);
        report.good_event = Some(diag.nodes.iter().all(|n| n.deviation.unwrap() <= acc));
        report.protocol_mean = Some(match protocol {
            Protocol::B => classical_mean(tree, &top_ops)?,
            Protocol::A => {
                let exact_m = oracle::effective_observables(tree)?;
                let pinched = tops
                    .iter()
                    .zip(&top_ops)
                    .map(|(p, m)| RescalingFreeCut::from_estimate(m, CutMode::Channel, 0.0)?.mp.pinch(&exact_m[p]))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&CMatrix> = pinched.iter().collect();
                linalg::trace_product_re(&kron_all(&refs)?, tree.root_state().matrix())
            }
        });
        report.exact = Some(diag.exact);
        report.nodes = diag.nodes;
        report.depth_deviation = diag.depth_deviation;
    }
    Ok(report)
}

/// Leaf-to-root learning followed by the classical product-basis measurement.
/// Chains (`R = 1`) run the same loop with the chain allocation.
pub fn estimate_tree(tree: &TreeCircuit, plan: &ShotPlan, seed: u64, opts: EstimateOptions) -> Result<EstimateReport> {
    check_plan(tree, plan)?;
    if plan.scheme == PlanScheme::TwoLayer(Protocol::A) {
        bail!(InvalidInput, "a protocol (a) plan needs estimate_two_layer");
    }
    let learned = learn_tree(tree, plan, seed, opts.exec)?;
    let tops = tree.top_nodes();
    let top_ops: Vec<&HermitianOperator> = tops.iter().map(|p| &learned[p]).collect();
    let (estimate, max_abs_weight) = classical_final(tree, &top_ops, plan.root_shots, seed, opts.exec)?;
    let mut report = base_report(plan, &learned, &tops, estimate, max_abs_weight);
    if opts.diagnostics {
        let diag = diagnose(tree, plan, &learned)?;
        report.good_event = Some(
            diag.nodes.iter().all(|n| n.learn_error.unwrap() <= plan.accuracy(n.depth)),
        );
        report.protocol_mean = Some(classical_mean(tree, &top_ops)?);
        report.exact = Some(diag.exact);
        report.nodes = diag.nodes;
        report.depth_deviation = diag.depth_deviation;
    }
    Ok(report)
}

fn classical_mean(tree: &TreeCircuit, tops: &[&HermitianOperator]) -> Result<f64> {
    let o = HermitianOperator::tensor_all(tops)?;
    Ok(o.expectation(tree.root_state().matrix()))
}

fn base_report(plan: &ShotPlan, learned: &BTreeMap<NodePath, HermitianOperator>, tops: &[NodePath], estimate: f64, max_abs_weight: f64) -> EstimateReport {
    EstimateReport {
        estimate,
        root_shots: plan.root_shots,
        node_shots: plan.node_shots_total(),
        total_shots: plan.total_shots(),
        gamma: tops.iter().map(|p| learned[p].op_norm()).product(),
        max_abs_weight,
        nodes: plain_nodes(plan, learned),
        exact: None,
        protocol_mean: None,
        depth_deviation: Vec::new(),
        good_event: None,
    }
}

/// Sampling tables for the Pauli cut on every first-layer wire of a
/// single-layer tree.
struct QpdTables {
    wire_dims: Vec<usize>,
    terms_per_wire: Vec<usize>,
    /// Joint measurement distribution of the root state for each term tuple.
    joint: Vec<Categorical>,
    /// signs[k][i][e]: eigenvalue of term `i` on wire `k` for eigenvector `e`.
    signs: Vec<Vec<Vec<f64>>>,
    /// leaf[k][i][e]: leaf outcome sampler after preparing eigenvector `e` of term `i`.
    leaf: Vec<Vec<Vec<Categorical>>>,
    leaf_values: Vec<Vec<f64>>,
    gamma: f64,
}

fn qpd_tables(tree: &TreeCircuit) -> Result<QpdTables> {
    if tree.depth() != 1 {
        bail!(InvalidInput, "the Pauli cut baseline is implemented for depth-1 trees");
    }
    let tops = tree.top_nodes();
    let mut wire_dims = Vec::new();
    let mut terms_per_wire = Vec::new();
    let mut wire_bases = Vec::new();
    let mut signs = Vec::new();
    let mut leaf = Vec::new();
    let mut leaf_values = Vec::new();
    for p in &tops {
        let ch = tree.channel(p).unwrap();
        let n = linalg::log2_exact(ch.in_dim())?;
        let spec = MeasurementSpec::new(tree.leaf_observable(p).unwrap().clone());
        let mut bases = Vec::new();
        let mut wire_signs = Vec::new();
        let mut wire_leaf = Vec::new();
        for idx in linalg::all_pauli_indices(n) {
            let (basis, s) = pauli_eigenbasis(&idx);
            let per_e = (0..ch.in_dim())
                .map(|e| spec.outcome_distribution(&ch.apply_matrix(&linalg::outer(&basis.column(e).into_owned()))?))
                .collect::<Result<Vec<_>>>()?;
            bases.push(basis);
            wire_signs.push(s);
            wire_leaf.push(per_e);
        }
        wire_dims.push(ch.in_dim());
        terms_per_wire.push(bases.len());
        wire_bases.push(bases);
        signs.push(wire_signs);
        leaf.push(wire_leaf);
        leaf_values.push(spec.eigenvalues().to_vec());
    }
    let total_terms: usize = terms_per_wire.iter().product();
    if total_terms > 1 << 16 {
        bail!(Resource, "{total_terms} joint Pauli terms is too many to tabulate");
    }
    let mut digits = vec![0; tops.len()];
    let joint = (0..total_terms)
        .map(|t| {
            split(t, &terms_per_wire, &mut digits);
            let bs: Vec<&CMatrix> = digits.iter().enumerate().map(|(k, &i)| &wire_bases[k][i]).collect();
            product_basis_distribution(tree, &bs)
        })
        .collect::<Result<Vec<_>>>()?;
    let gamma = total_terms as f64;
    Ok(QpdTables { wire_dims, terms_per_wire, joint, signs, leaf, leaf_values, gamma })
}

/// Conventional estimate: every first-layer wire is cut with the Pauli
/// quasiprobability decomposition, `shots` times.
pub fn estimate_pauli_qpd(tree: &TreeCircuit, shots: u64, seed: u64, exec: ExecMode) -> Result<f64> {
    if shots == 0 {
        bail!(InvalidInput, "need at least one shot");
    }
    let t = qpd_tables(tree)?;
    let stream = StreamKey::new("pauli-qpd");
    let total_terms = t.joint.len();
    let prep_outcomes: usize = t.wire_dims.iter().product();
    let parts = map_chunks(shots, exec, |chunk, len| {
        let mut rng = stream.rng(seed, chunk);
        let wires = t.wire_dims.len();
        let (mut ti, mut em, mut ep) = (vec![0; wires], vec![0; wires], vec![0; wires]);
        let mut sum = 0.0;
        for _ in 0..len {
            let term = rng.gen_range(0..total_terms);
            let measured = t.joint[term].sample(&mut rng);
            let prepared = rng.gen_range(0..prep_outcomes);
            split(term, &t.terms_per_wire, &mut ti);
            split(measured, &t.wire_dims, &mut em);
            split(prepared, &t.wire_dims, &mut ep);
            let mut v = t.gamma;
            for k in 0..wires {
                let s = &t.signs[k][ti[k]];
                let z = t.leaf[k][ti[k]][ep[k]].sample(&mut rng);
                v *= s[em[k]] * s[ep[k]] * t.leaf_values[k][z];
            }
            sum += v;
        }
        sum
    });
    Ok(parts.iter().sum::<f64>() / shots as f64)
}

/// Exact mean of one baseline shot, by enumerating terms and outcomes.
pub fn pauli_qpd_mean_exact(tree: &TreeCircuit) -> Result<f64> {
    let t = qpd_tables(tree)?;
    let wires = t.wire_dims.len();
    let prep_outcomes: usize = t.wire_dims.iter().product();
    let (mut ti, mut em, mut ep) = (vec![0; wires], vec![0; wires], vec![0; wires]);
    let mut mean = 0.0;
    for (term, dist) in t.joint.iter().enumerate() {
        split(term, &t.terms_per_wire, &mut ti);
        for measured in 0..dist.len() {
            split(measured, &t.wire_dims, &mut em);
            for prepared in 0..prep_outcomes {
                split(prepared, &t.wire_dims, &mut ep);
                let mut v = t.gamma * dist.prob(measured) / prep_outcomes as f64;
                for k in 0..wires {
                    let s = &t.signs[k][ti[k]];
                    let leaf = &t.leaf[k][ti[k]][ep[k]];
                    let local: f64 = (0..leaf.len()).map(|z| leaf.prob(z) * t.leaf_values[k][z]).sum();
                    v *= s[em[k]] * s[ep[k]] * local;
                }
                mean += v;
            }
        }
    }
    Ok(mean / total_terms_of(&t) as f64)
}

fn total_terms_of(t: &QpdTables) -> usize {
    t.joint.len()
}
