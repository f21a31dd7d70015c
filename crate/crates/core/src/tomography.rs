//! Learning the Heisenberg-evolved observable of a black-box channel.
//!
//! One shot prepares a random probe, sends it through the channel and measures
//! the observable in its eigenbasis. The single-shot estimator is then built
//! from the probe label and the observed eigenvalue. The estimate is the mean
//! over shots.
//!
//! The default path tabulates the outcome distribution of every probe once.
//! Each probe then needs one channel application, however many shots draw it.
//! It also counts shots per (probe, outcome) cell instead of summing matrices.
//! The mean of the single-shot estimators is linear in those counts, so the
//! result is the same statistic, and counting makes merging exact and
//! independent of order. [`learn_direct`] runs the literal per-shot loop
//! with the same random draws, as a cross-check.

use rand::Rng;

use crate::channels::{MeasurementSpec, QuantumChannel};
use crate::ensembles::{single_shot_estimator, unit_estimator, Ensemble, EnsembleKind};
use crate::error::{bail, Result};
use crate::exec::{map_chunks, ExecMode};
use crate::linalg::{self, outer, CMatrix, HermitianOperator, KahanMatrix};
use crate::rng::{Categorical, KnitRng, StreamKey};

/// Largest `|ensemble| * outcomes` table the counting path will allocate.
const MAX_TABLE_CELLS: u64 = 1 << 20;
/// Hard ceiling on planned shot counts.
pub const MAX_PLANNED_SHOTS: u64 = 1 << 50;

/// Everything needed to learn one effective observable.
#[derive(Clone, Debug)]
pub struct LearningTask<'a> {
    pub channel: &'a QuantumChannel,
    pub observable: &'a HermitianOperator,
    pub kind: EnsembleKind,
    pub shots: u64,
    pub seed: u64,
    pub stream: StreamKey,
    pub exec: ExecMode,
}

impl<'a> LearningTask<'a> {
    pub fn new(channel: &'a QuantumChannel, observable: &'a HermitianOperator, kind: EnsembleKind, shots: u64, seed: u64) -> Self {
        LearningTask {
            channel,
            observable,
            kind,
            shots,
            seed,
            stream: StreamKey::new("tomography"),
            exec: ExecMode::default(),
        }
    }

    #[must_use]
    pub fn with_stream(mut self, stream: StreamKey) -> Self {
        self.stream = stream;
        self
    }

    #[must_use]
    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    fn validate(&self) -> Result<Ensemble> {
        if self.shots == 0 {
            bail!(InvalidInput, "a learning task needs at least one shot");
        }
        if self.observable.dim() != self.channel.out_dim() {
            bail!(Dimension, "observable dim {} vs channel output {}", self.observable.dim(), self.channel.out_dim());
        }
        let n = linalg::log2_exact(self.channel.in_dim())?;
        Ensemble::new(self.kind, n)
    }
}

#[derive(Clone, Debug)]
pub struct LearnedObservable {
    pub estimate: HermitianOperator,
    pub shots_used: u64,
    pub kind: EnsembleKind,
    pub norm_bound_cap: Option<f64>,
}

impl LearnedObservable {
    /// Truncates the spectrum to `[-cap, cap]`. Off unless asked for.
    #[must_use]
    pub fn clipped(mut self, cap: f64) -> Self {
        self.estimate = self.estimate.clipped(cap);
        self.norm_bound_cap = Some(cap);
        self
    }
}

/// Outcome sampler for one probe: channel output measured in the observable's eigenbasis.
fn probe_distribution(channel: &QuantumChannel, spec: &MeasurementSpec, probe_state: &linalg::CVector) -> Result<Categorical> {
    let out = channel.apply_matrix(&outer(probe_state))?;
    spec.outcome_distribution(&out)
}

/// Draws one probe index and one outcome. Both learning paths go through
/// this pattern, so they consume identical random numbers.
#[inline]
fn shot<R: Rng + ?Sized>(ens: &Ensemble, table: &[Categorical], rng: &mut R) -> (usize, usize) {
    let i = ens.sample_index(rng) as usize;
    (i, table[i].sample(rng))
}

/// Learns the effective observable of `task.channel` for `task.observable`.
pub fn learn(task: &LearningTask<'_>) -> Result<LearnedObservable> {
    let ens = task.validate()?;
    let spec = MeasurementSpec::new(task.observable.clone());
    let outcomes = spec.dim();
    let size = ens.size();
    if size.saturating_mul(outcomes as u64) > MAX_TABLE_CELLS {
        return learn_direct(task);
    }
    let probes: Vec<_> = (0..size).map(|i| ens.probe(i)).collect();
    let table = probes
        .iter()
        .map(|p| probe_distribution(task.channel, &spec, &p.state))
        .collect::<Result<Vec<_>>>()?;

    let cells = size as usize * outcomes;
    let partial = map_chunks(task.shots, task.exec, |chunk, len| {
        let mut rng = task.stream.rng(task.seed, chunk);
        let mut counts = vec![0u32; cells];
        for _ in 0..len {
            let (i, j) = shot(&ens, &table, &mut rng);
            counts[i * outcomes + j] += 1;
        }
        counts
    });
    let mut counts = vec![0u64; cells];
    for part in &partial {
        for (c, &p) in counts.iter_mut().zip(part) {
            *c += u64::from(p);
        }
    }

    let nu = spec.eigenvalues();
    let d = ens.dim();
    let mut acc = KahanMatrix::zeros(d, d);
    for (i, probe) in probes.iter().enumerate() {
        let row = &counts[i * outcomes..(i + 1) * outcomes];
        if row.iter().all(|&c| c == 0) {
            continue;
        }
        let weight: f64 = row.iter().zip(nu).map(|(&c, &v)| c as f64 * v).sum();
        acc.add_scaled(&unit_estimator(probe), weight);
    }
    finish(acc.total(), task)
}

/// The literal loop: draw, apply, measure, post-process, accumulate.
pub fn learn_direct(task: &LearningTask<'_>) -> Result<LearnedObservable> {
    let ens = task.validate()?;
    let spec = MeasurementSpec::new(task.observable.clone());
    let d = ens.dim();
    let partial = map_chunks(task.shots, task.exec, |chunk, len| -> Result<KahanMatrix> {
        let mut rng: KnitRng = task.stream.rng(task.seed, chunk);
        let mut acc = KahanMatrix::zeros(d, d);
        for _ in 0..len {
            let probe = ens.draw(&mut rng);
            let dist = probe_distribution(task.channel, &spec, &probe.state)?;
            let j = dist.sample(&mut rng);
            let omega = single_shot_estimator(&probe, spec.eigenvalues()[j]);
            acc.add(omega.matrix());
        }
        Ok(acc)
    });
    let mut acc = KahanMatrix::zeros(d, d);
    for part in partial {
        acc.merge(&part?);
    }
    finish(acc.total(), task)
}

fn finish(sum: CMatrix, task: &LearningTask<'_>) -> Result<LearnedObservable> {
    let mean = sum.unscale(task.shots as f64);
    linalg::ensure_finite(&mean)?;
    Ok(LearnedObservable {
        estimate: HermitianOperator::from_matrix_unchecked(mean),
        shots_used: task.shots,
        kind: task.kind,
        norm_bound_cap: None,
    })
}

/// Per-shot Bernstein constants `(alpha * N, sigma^2 * N)` for an ensemble in
/// dimension `d` with observable norm `norm`.
pub fn bernstein_constants(kind: EnsembleKind, d: usize, norm: f64) -> (f64, f64) {
    let df = d as f64;
    let alpha = norm * (df * df + 1.0);
    let sigma2 = norm
        * norm
        * match kind {
            EnsembleKind::TwoDesign => (df * df + 1.0) * (df + 1.0),
            EnsembleKind::StabilizerProduct => 10f64.powf(df.log2()) + 1.0,
            EnsembleKind::PauliEigenstates => df.powi(4) + 1.0,
        };
    (alpha, sigma2)
}

/// Matrix Bernstein tail `d exp(-(eps^2/2) / (sigma^2 + alpha eps / 3))` for a
/// mean of `shots` terms, where `alpha1` and `sigma1_sq` are the per-shot
/// constants (they are divided by `shots` here).
pub fn bernstein_tail(shots: u64, alpha1: f64, sigma1_sq: f64, d: usize, eps: f64) -> f64 {
    let n = shots.max(1) as f64;
    let denom = sigma1_sq / n + alpha1 / n * eps / 3.0;
    if eps == 0.0 {
        return d as f64;
    }
    d as f64 * (-(eps * eps / 2.0) / denom).exp()
}

/// Shots sufficient for `||O_hat - O_Phi|| <= eps` with probability `1 - delta`.
pub fn plan_shots(kind: EnsembleKind, d_in: usize, op_norm: f64, eps: f64, delta: f64) -> Result<u64> {
    check_accuracy(eps, delta)?;
    if !(op_norm.is_finite() && op_norm >= 0.0) {
        bail!(InvalidInput, "observable norm must be finite and non-negative, got {op_norm}");
    }
    linalg::log2_exact(d_in)?;
    let df = d_in as f64;
    let body = match kind {
        EnsembleKind::TwoDesign => (df * df + 1.0) * (df + 1.0 + eps / 3.0),
        EnsembleKind::StabilizerProduct => {
            10f64.powf(df.log2()) + 1.0 + eps / 3.0 * (df * df + 1.0)
        }
        EnsembleKind::PauliEigenstates => df.powi(4) + 1.0 + eps / 3.0 * (df * df + 1.0),
    };
    let n = 2.0 * op_norm.powi(2).max(1.0) * body / (eps * eps) * (df / delta).ln();
    shots_from_f64(n)
}

pub(crate) fn shots_from_f64(n: f64) -> Result<u64> {
    let n = n.ceil();
    if !n.is_finite() || n > MAX_PLANNED_SHOTS as f64 {
        bail!(Resource, "planned shot count {n:e} exceeds {MAX_PLANNED_SHOTS}");
    }
    Ok((n as u64).max(1))
}

pub(crate) fn check_accuracy(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        bail!(InvalidInput, "accuracy eps must lie in (0,1], got {eps}");
    }
    if !(delta > 0.0 && delta <= 1.0) {
        bail!(InvalidInput, "failure probability delta must lie in (0,1], got {delta}");
    }
    Ok(())
}
