//! Hard instances for distinguishing two tree states, and the experiment
//! comparing the learning estimator with Pauli wire cutting on them.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::estimate::{estimate_pauli_qpd, estimate_two_layer, EstimateOptions};
use super::plan::{allocate_two_layer, Protocol, ShotPlan};
use super::{NodePath, TreeCircuit};
use crate::channels::{DensityOperator, QuantumChannel};
use crate::ensembles::EnsembleKind;
use crate::error::{bail, Result};
use crate::exec::{map_indices, ExecMode};
use crate::linalg::{self, CMatrix, HermitianOperator};
use crate::rng::{mix64, StreamKey};

/// `ρ_x = U τ_x U†` with `τ_x = (I + (-1)^x ε Z̄)/d^R` and `U = ⊗_r U_r`.
#[derive(Clone, Debug)]
pub struct SeparationInstance {
    pub r: usize,
    pub n: usize,
    pub x: u8,
    pub eps: f64,
    pub unitaries: Vec<CMatrix>,
    pub state: DensityOperator,
}

pub fn make_separation_instance(r: usize, n: usize, x: u8, eps: f64, seed: u64) -> Result<SeparationInstance> {
    if r == 0 || n == 0 {
        bail!(InvalidInput, "separation instance needs R >= 1 and n >= 1");
    }
    if !(eps > 0.0 && eps <= 1.0) {
        bail!(InvalidInput, "separation gap eps must lie in (0,1], got {eps}");
    }
    if x > 1 {
        bail!(InvalidInput, "hidden bit must be 0 or 1");
    }
    let d = 1usize << n;
    let total = d.checked_pow(r as u32).filter(|&t| t <= linalg::max_dim());
    let Some(total) = total else {
        bail!(Resource, "instance dimension 2^({n}*{r}) exceeds the cap");
    };
    let mut rng = StreamKey::new("separation-instance").rng(seed, 0);
    let unitaries: Vec<CMatrix> = (0..r).map(|_| linalg::haar_unitary(d, &mut rng)).collect();
    let zbar = linalg::pauli_from_indices(&vec![3u8; n * r])?;
    let sign = if x == 0 { eps } else { -eps };
    let tau = (linalg::identity(total) + zbar.scale(sign)).unscale(total as f64);
    let refs: Vec<&CMatrix> = unitaries.iter().collect();
    let u = linalg::kron_all(&refs)?;
    let state = DensityOperator::new(&u * tau * u.adjoint())?;
    Ok(SeparationInstance { r, n, x, eps, unitaries, state })
}

impl SeparationInstance {
    /// Wire `r` undoes `U_r` and measures `Z^{⊗n}`.
    pub fn tree(&self) -> Result<TreeCircuit> {
        let zbar = HermitianOperator::new(linalg::pauli_from_indices(&vec![3u8; self.n])?)?;
        let mut nodes = BTreeMap::new();
        let mut leaves = BTreeMap::new();
        for (k, u) in self.unitaries.iter().enumerate() {
            nodes.insert(NodePath::new(&[k]), QuantumChannel::unitary(u.adjoint())?);
            leaves.insert(NodePath::new(&[k]), zbar.clone());
        }
        TreeCircuit::new(self.state.clone(), nodes, leaves)
    }

    pub fn target(&self) -> f64 {
        if self.x == 0 {
            self.eps
        } else {
            -self.eps
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationMethod {
    Learning,
    PauliQpd,
}

impl SeparationMethod {
    pub fn tag(self) -> &'static str {
        match self {
            SeparationMethod::Learning => "learning",
            SeparationMethod::PauliQpd => "pauli_qpd",
        }
    }
}

fn guess(estimate: f64, coin: bool) -> u8 {
    if estimate > 0.0 {
        0
    } else if estimate < 0.0 {
        1
    } else {
        u8::from(coin)
    }
}

fn tie_coin(seed: u64) -> bool {
    StreamKey::new("separation-tie").rng(seed, 0).gen()
}

/// Learning-based guess of `x` with `plan` (rescaled to `budget` if given).
pub fn learning_discriminates(inst: &SeparationInstance, plan: &ShotPlan, budget: Option<u64>, seed: u64, exec: ExecMode) -> Result<bool> {
    let tree = inst.tree()?;
    let plan = budget.map_or_else(|| plan.clone(), |b| plan.scaled_to(b));
    let opts = EstimateOptions { exec, diagnostics: false };
    let est = estimate_two_layer(&tree, &plan, Protocol::B, seed, opts)?.estimate;
    Ok(guess(est, tie_coin(seed)) == inst.x)
}

/// Pauli-cut guess of `x` from `shots` circuit executions.
pub fn qpd_discriminates(inst: &SeparationInstance, shots: u64, seed: u64, exec: ExecMode) -> Result<bool> {
    let est = estimate_pauli_qpd(&inst.tree()?, shots, seed, exec)?;
    Ok(guess(est, tie_coin(seed)) == inst.x)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub r_values: Vec<usize>,
    pub n: usize,
    pub eps: f64,
    pub delta: f64,
    pub kind: EnsembleKind,
    /// Shot budgets; empty means "the learning plan's total" only.
    pub shot_grid: Vec<u64>,
    pub instances: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SeparationRow {
    pub r: usize,
    pub n: usize,
    pub method: SeparationMethod,
    pub shots: u64,
    pub plan_total: u64,
    pub instances: usize,
    pub successes: usize,
    pub success_rate: f64,
}

/// For every `R` and budget, the fraction of fresh instances on which each
/// method recovers the hidden bit. Instance `i` hides `x = i mod 2`.
pub fn run_separation(cfg: &SeparationConfig, seed: u64, exec: ExecMode) -> Result<Vec<SeparationRow>> {
    if cfg.instances == 0 {
        bail!(InvalidInput, "need at least one instance");
    }
    let mut rows = Vec::new();
    let mut rs = cfg.r_values.clone();
    rs.sort_unstable();
    rs.dedup();
    for &r in &rs {
        let probe = make_separation_instance(r, cfg.n, 0, cfg.eps, seed)?;
        let plan = allocate_two_layer(&probe.tree()?, cfg.eps, cfg.delta, cfg.kind, Protocol::B)?;
        let plan_total = plan.total_shots();
        let grid = if cfg.shot_grid.is_empty() { vec![plan_total] } else { cfg.shot_grid.clone() };
        for &budget in &grid {
            if budget == 0 {
                bail!(InvalidInput, "shot budgets must be positive");
            }
            for method in [SeparationMethod::Learning, SeparationMethod::PauliQpd] {
                let outcomes = map_indices(cfg.instances, exec, |i| -> Result<bool> {
                    let inst_seed = mix64(mix64(seed, r as u64), i as u64);
                    let inst = make_separation_instance(r, cfg.n, (i % 2) as u8, cfg.eps, inst_seed)?;
                    let run_seed = mix64(inst_seed, budget);
                    match method {
                        SeparationMethod::Learning => learning_discriminates(&inst, &plan, Some(budget), run_seed, ExecMode::Sequential),
                        SeparationMethod::PauliQpd => qpd_discriminates(&inst, budget, run_seed, ExecMode::Sequential),
                    }
                });
                let successes = outcomes.into_iter().collect::<Result<Vec<_>>>()?.iter().filter(|&&s| s).count();
                rows.push(SeparationRow {
                    r,
                    n: cfg.n,
                    method,
                    shots: budget,
                    plan_total,
                    instances: cfg.instances,
                    successes,
                    success_rate: successes as f64 / cfg.instances as f64,
                });
            }
        }
    }
    Ok(rows)
}
