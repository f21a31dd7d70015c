//! Estimate a random two-layer tree circuit with the learning-based cut and
//! compare against the exact value.

use knitsim_core::ensembles::EnsembleKind;
use knitsim_core::rng::StreamKey;
use knitsim_core::treesim::{allocate, estimate_two_layer, EstimateOptions, Protocol, TreeCircuit};

fn main() -> knitsim_core::Result<()> {
    let mut rng = StreamKey::new("example").rng(42, 0);
    let tree = TreeCircuit::random(1, 3, 1, &mut rng)?;
    let plan = allocate(&tree, 0.1, 0.1, EnsembleKind::TwoDesign)?;
    let opts = EstimateOptions { diagnostics: true, ..Default::default() };
    let report = estimate_two_layer(&tree, &plan, Protocol::B, 7, opts)?;
    println!("estimate {:.4}", report.estimate);
    println!("exact    {:.4}", report.exact.unwrap_or(f64::NAN));
    println!("shots    {} tomography + {} final", report.node_shots, report.root_shots);
    Ok(())
}
