//! Planned shot totals of the learning method against the Hoeffding counts
//! of conventional wire cutting, as a function of tree size. Formula only.

use serde::{Deserialize, Serialize};

use super::{allocate_shape, TreeShape};
use crate::ensembles::EnsembleKind;
use crate::error::{bail, Result};
use crate::knitting::{optimal_gamma, qpd_hoeffding_shots};
use crate::tomography::check_accuracy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub r: usize,
    pub l: usize,
    pub cuts: usize,
    pub learning_shots: u64,
    /// Pauli cut, `gamma = d^2` per wire.
    pub pauli_qpd_shots: f64,
    /// Best LOCC cut, `gamma = 2d - 1` per wire.
    pub optimal_qpd_shots: f64,
}

/// One row per `(R, L)`, sorted by `R` then `L`.
pub fn scaling_table(d: usize, r_values: &[usize], depths: &[usize], eps: f64, delta: f64, kind: EnsembleKind) -> Result<Vec<ScalingRow>> {
    check_accuracy(eps, delta)?;
    if r_values.is_empty() || depths.is_empty() {
        bail!(InvalidInput, "scaling sweep needs at least one R and one L");
    }
    let mut rs = r_values.to_vec();
    rs.sort_unstable();
    rs.dedup();
    let mut ls = depths.to_vec();
    ls.sort_unstable();
    ls.dedup();
    let mut rows = Vec::new();
    for &r in &rs {
        for &l in &ls {
            let shape = TreeShape::uniform(l, r, d)?;
            let plan = allocate_shape(&shape, eps, delta, kind)?;
            let cuts = shape.num_nodes();
            let k = u32::try_from(cuts).unwrap_or(u32::MAX);
            rows.push(ScalingRow {
                r,
                l,
                cuts,
                learning_shots: plan.total_shots(),
                pauli_qpd_shots: qpd_hoeffding_shots((d * d) as f64, k, eps, delta),
                optimal_qpd_shots: qpd_hoeffding_shots(optimal_gamma(d), k, eps, delta),
            });
        }
    }
    Ok(rows)
}
