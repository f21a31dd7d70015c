//! One function per subcommand. Each resolves its parameters, validates them,
//! runs its trials (fanned out across threads, written in trial order) and
//! returns a result table with JSON diagnostics.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use knitsim_core::channels::QuantumChannel;
use knitsim_core::ensembles::EnsembleKind;
use knitsim_core::exec::{map_indices, ExecMode};
use knitsim_core::linalg;
use knitsim_core::rng::{mix64, StreamKey};
use knitsim_core::tomography::{learn, plan_shots, LearningTask};
use knitsim_core::treesim::{
    allocate, allocate_shape_with, allocate_two_layer, estimate_tree, estimate_two_layer, random_pauli_observable,
    run_separation, scaling_table, EstimateOptions, EstimateReport, Protocol, SeparationConfig, ShotPlan, TreeCircuit,
    TreeFile, TreeShape,
};

use crate::config::{canonical_json, check_positive, check_qubit_dim, check_register, check_unit_interval, sha256_hex, ConfigFile};
use crate::output::ResultTable;
use crate::{CliError, Common, PlanArgs, ScalingArgs, SeparationArgs, TomographyArgs, TreeArgs};

/// What a command produced.
pub struct Produced {
    pub table: ResultTable,
    pub json: Option<Value>,
    pub summary: String,
    /// Non-zero when the run completed but missed its success threshold.
    pub status: u8,
}

const DEFAULT_TRIALS: usize = 20;

fn trial_seed(seed: u64, trial: usize) -> u64 {
    mix64(seed, trial as u64)
}

fn num(x: f64) -> String {
    x.to_string()
}

fn diagnostics_json(command: &str, table: &ResultTable, config: &impl Serialize, body: Value) -> Value {
    let mut v = json!({
        "schema": "knitsim-json/1",
        "command": command,
        "config_hash": table.config_hash(),
        "config": serde_json::to_value(config).expect("config serialises"),
    });
    if let (Value::Object(m), Value::Object(b)) = (&mut v, body) {
        m.extend(b);
    }
    v
}

fn run_err(e: knitsim_core::KnitError) -> CliError {
    CliError::Run(e.to_string())
}

// ---------------------------------------------------------------- tomography

#[derive(Serialize)]
struct TomographyConfig {
    command: &'static str,
    seed: u64,
    trials: usize,
    kind: EnsembleKind,
    d: usize,
    eps: f64,
    delta: f64,
    threshold: f64,
}

pub fn tomography(common: &Common, args: &TomographyArgs, cfg: &ConfigFile) -> Result<Produced, CliError> {
    let c = TomographyConfig {
        command: "tomography",
        seed: cfg.or("seed", common.seed, 0)?,
        trials: cfg.or("trials", common.trials, DEFAULT_TRIALS)?,
        kind: cfg.or("kind", args.kind, EnsembleKind::TwoDesign)?,
        d: cfg.or("d", args.d, 2)?,
        eps: cfg.require("eps", args.eps)?,
        delta: cfg.require("delta", args.delta)?,
        threshold: cfg.or("threshold", args.threshold, 0.85)?,
    };
    cfg.finish()?;
    check_unit_interval("eps", c.eps)?;
    check_unit_interval("delta", c.delta)?;
    check_positive("trials", c.trials)?;
    if !(0.0..=1.0).contains(&c.threshold) {
        return Err(CliError::Usage(format!("--threshold must lie in [0, 1], got {}", c.threshold)));
    }
    let n = check_qubit_dim(c.d)?;
    check_register(c.d, 1)?;
    knitsim_core::ensembles::Ensemble::new(c.kind, n).map_err(|e| CliError::Usage(e.to_string()))?;
    let planned = plan_shots(c.kind, c.d, 1.0, c.eps, c.delta).map_err(|e| CliError::Usage(e.to_string()))?;

    let errors = map_indices(c.trials, ExecMode::Parallel, |t| -> Result<f64, CliError> {
        let seed = trial_seed(c.seed, t);
        let mut rng = StreamKey::new("cli-tomography").rng(seed, 0);
        let ch = QuantumChannel::random(c.d, c.d, 1, &mut rng).map_err(run_err)?;
        let o = random_pauli_observable(n, &mut rng).map_err(run_err)?;
        let exact = ch.adjoint_apply(&o).map_err(run_err)?;
        let task = LearningTask::new(&ch, &o, c.kind, planned, seed).with_exec(ExecMode::Sequential);
        let est = learn(&task).map_err(run_err)?;
        Ok(linalg::op_norm(&(est.estimate.matrix() - exact.matrix())))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut table = ResultTable::new(
        "tomography",
        canonical_json(&c),
        &["trial", "seed", "kind", "d", "planned_shots", "error_opnorm", "within_eps"],
    );
    let mut ok = 0;
    for (t, err) in errors.iter().enumerate() {
        let within = *err <= c.eps;
        ok += usize::from(within);
        table.push(vec![
            t.to_string(),
            trial_seed(c.seed, t).to_string(),
            c.kind.tag().into(),
            c.d.to_string(),
            planned.to_string(),
            num(*err),
            within.to_string(),
        ]);
    }
    let fraction = ok as f64 / c.trials as f64;
    let json = diagnostics_json(
        "tomography",
        &table,
        &c,
        json!({"planned_shots": planned, "success_fraction": fraction, "errors": errors}),
    );
    Ok(Produced {
        summary: format!("planned N = {planned}; {ok}/{} trials within eps (threshold {})", c.trials, c.threshold),
        status: if fraction >= c.threshold { 0 } else { 3 },
        table,
        json: Some(json),
    })
}

// ---------------------------------------------------------- trees (shared)

/// Either a fixed tree from a file or a fresh random tree per trial.
enum TreeSource {
    File(Box<TreeCircuit>),
    Random { depth: usize, branching: usize, qubits: usize },
}

impl TreeSource {
    fn tree(&self, seed: u64) -> Result<TreeCircuit, CliError> {
        match self {
            TreeSource::File(t) => Ok((**t).clone()),
            TreeSource::Random { depth, branching, qubits } => {
                let mut rng = StreamKey::new("cli-tree").rng(seed, 0);
                TreeCircuit::random(*depth, *branching, *qubits, &mut rng).map_err(run_err)
            }
        }
    }
}

#[derive(Serialize)]
struct TreeConfig {
    command: &'static str,
    seed: u64,
    trials: usize,
    #[serde(rename = "l")]
    depth: usize,
    #[serde(rename = "r")]
    branching: usize,
    d: usize,
    eps: f64,
    delta: f64,
    kind: EnsembleKind,
    protocol: Protocol,
    /// SHA-256 of the tree description, when one was given.
    tree_sha256: Option<String>,
}

fn load_tree(path: &PathBuf) -> Result<(TreeCircuit, String), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read tree {}: {e}", path.display())))?;
    let tree = TreeFile::from_json(&text)
        .and_then(|f| f.build())
        .map_err(|e| CliError::Usage(format!("tree {}: {e}", path.display())))?;
    Ok((tree, sha256_hex(text.as_bytes())))
}

/// Resolves tree parameters. With a tree file, `L`, `R` and `d` come from the
/// file and any explicit value must agree with it.
fn resolve_tree(command: &'static str, common: &Common, args: &TreeArgs, cfg: &ConfigFile, fixed_depth: Option<usize>) -> Result<(TreeConfig, TreeSource), CliError> {
    let tree_path: Option<PathBuf> = cfg.pick("tree", args.tree.clone())?;
    let depth_flag: Option<usize> = cfg.pick("l", args.l)?;
    let r_flag: Option<usize> = cfg.pick("r", args.r)?;
    let d_flag: Option<usize> = cfg.pick("d", args.d)?;
    let eps = cfg.require("eps", args.eps)?;
    let delta = cfg.require("delta", args.delta)?;
    let kind = cfg.or("kind", args.kind, EnsembleKind::TwoDesign)?;
    let protocol = cfg.or("protocol", args.protocol, Protocol::B)?;
    let seed = cfg.or("seed", common.seed, 0)?;
    let trials = cfg.or("trials", common.trials, DEFAULT_TRIALS)?;
    cfg.finish()?;
    check_unit_interval("eps", eps)?;
    check_unit_interval("delta", delta)?;
    check_positive("trials", trials)?;

    let (source, depth, branching, d, sha) = match tree_path {
        Some(p) => {
            let (tree, sha) = load_tree(&p)?;
            let (l, r, d) = (tree.depth(), tree.max_branching(), tree.bond_dim());
            for (name, given, actual) in [("l", depth_flag, l), ("r", r_flag, r), ("d", d_flag, d)] {
                if given.is_some_and(|g| g != actual) {
                    return Err(CliError::Usage(format!("--{name} = {} disagrees with the tree file ({actual})", given.unwrap_or_default())));
                }
            }
            (TreeSource::File(Box::new(tree)), l, r, d, Some(sha))
        }
        None => {
            let l = depth_flag.or(fixed_depth).ok_or_else(|| CliError::Usage("missing required parameter --l".into()))?;
            let r = r_flag.ok_or_else(|| CliError::Usage("missing required parameter --r".into()))?;
            let d = d_flag.unwrap_or(2);
            check_positive("l", l)?;
            check_positive("r", r)?;
            let qubits = check_qubit_dim(d)?;
            check_register(d, r)?;
            // Every node's learning table and the tree itself must stay small.
            TreeShape::uniform(l, r, d).map_err(|e| CliError::Usage(e.to_string()))?;
            (TreeSource::Random { depth: l, branching: r, qubits }, l, r, d, None)
        }
    };
    if let Some(fd) = fixed_depth {
        if depth != fd {
            return Err(CliError::Usage(format!("{command} needs a depth-{fd} tree, got L = {depth}")));
        }
    }
    if depth > 1 && protocol == Protocol::A {
        return Err(CliError::Usage("protocol a is only defined for L = 1".into()));
    }
    let c = TreeConfig { command, seed, trials, depth, branching, d, eps, delta, kind, protocol, tree_sha256: sha };
    Ok((c, source))
}

struct TrialResult {
    seed: u64,
    plan: ShotPlan,
    report: EstimateReport,
}

fn run_tree_trials(c: &TreeConfig, source: &TreeSource) -> Result<Vec<TrialResult>, CliError> {
    map_indices(c.trials, ExecMode::Parallel, |t| -> Result<TrialResult, CliError> {
        let seed = trial_seed(c.seed, t);
        let tree = source.tree(seed)?;
        let opts = EstimateOptions { exec: ExecMode::Sequential, diagnostics: true };
        let (plan, report) = if tree.depth() == 1 {
            let plan = allocate_two_layer(&tree, c.eps, c.delta, c.kind, c.protocol).map_err(run_err)?;
            let rep = estimate_two_layer(&tree, &plan, c.protocol, seed, opts).map_err(run_err)?;
            (plan, rep)
        } else {
            let plan = allocate(&tree, c.eps, c.delta, c.kind).map_err(run_err)?;
            let rep = estimate_tree(&tree, &plan, seed, opts).map_err(run_err)?;
            (plan, rep)
        };
        Ok(TrialResult { seed, plan, report })
    })
    .into_iter()
    .collect()
}

fn tree_json(table: &ResultTable, c: &TreeConfig, results: &[TrialResult], within: usize) -> Value {
    let trials: Vec<Value> = results
        .iter()
        .enumerate()
        .map(|(t, r)| json!({"trial": t, "seed": r.seed, "report": r.report}))
        .collect();
    diagnostics_json(
        c.command,
        table,
        c,
        json!({
            "success_fraction": within as f64 / c.trials as f64,
            "plan": results.first().map(|r| &r.plan),
            "trials": trials,
        }),
    )
}

fn estimate_cells(c: &TreeConfig, r: &TrialResult, t: usize) -> (Vec<String>, bool) {
    let exact = r.report.exact.unwrap_or(f64::NAN);
    let err = (r.report.estimate - exact).abs();
    let within = err <= c.eps;
    let good = r.report.good_event.map_or_else(String::new, |g| g.to_string());
    (
        vec![t.to_string(), r.seed.to_string(), num(r.report.estimate), num(exact), num(err), within.to_string(), good],
        within,
    )
}

pub fn twolayer(common: &Common, args: &TreeArgs, cfg: &ConfigFile) -> Result<Produced, CliError> {
    let (c, source) = resolve_tree("twolayer", common, args, cfg, Some(1))?;
    let results = run_tree_trials(&c, &source)?;
    // One shot column per first-layer node, in path order.
    let node_cols: Vec<String> = results[0].plan.per_node_shots.keys().map(|p| format!("shots_{p}")).collect();
    let mut header: Vec<&str> = vec!["trial", "seed", "estimate", "exact", "abs_error", "within_eps", "good_event", "max_abs_weight", "total_shots", "shots_root"];
    header.extend(node_cols.iter().map(String::as_str));
    let mut table = ResultTable::new("twolayer", canonical_json(&c), &header);
    let mut ok = 0;
    for (t, r) in results.iter().enumerate() {
        let (mut row, within) = estimate_cells(&c, r, t);
        ok += usize::from(within);
        row.push(num(r.report.max_abs_weight));
        row.push(r.report.total_shots.to_string());
        row.push(r.plan.root_shots.to_string());
        row.extend(r.plan.per_node_shots.values().map(u64::to_string));
        table.push(row);
    }
    let json = tree_json(&table, &c, &results, ok);
    Ok(Produced { summary: format!("{ok}/{} trials within eps", c.trials), status: 0, table, json: Some(json) })
}

pub fn tree(common: &Common, args: &TreeArgs, cfg: &ConfigFile) -> Result<Produced, CliError> {
    let (c, source) = resolve_tree("tree", common, args, cfg, None)?;
    let results = run_tree_trials(&c, &source)?;
    let depth_cols: Vec<String> = (1..=c.depth)
        .map(|l| format!("shots_depth_{l}"))
        .chain((1..=c.depth).map(|l| format!("deviation_depth_{l}")))
        .collect();
    let mut header: Vec<&str> = vec!["trial", "seed", "estimate", "exact", "abs_error", "within_eps", "good_event", "total_shots", "shots_root"];
    header.extend(depth_cols.iter().map(String::as_str));
    let mut table = ResultTable::new("tree", canonical_json(&c), &header);
    let mut ok = 0;
    for (t, r) in results.iter().enumerate() {
        let (mut row, within) = estimate_cells(&c, r, t);
        ok += usize::from(within);
        row.push(r.report.total_shots.to_string());
        row.push(r.plan.root_shots.to_string());
        row.extend((1..=c.depth).map(|l| r.plan.shots_at_depth(l).to_string()));
        row.extend(r.report.depth_deviation.iter().map(|&x| num(x)));
        table.push(row);
    }
    let json = tree_json(&table, &c, &results, ok);
    Ok(Produced { summary: format!("{ok}/{} trials within eps", c.trials), status: 0, table, json: Some(json) })
}

// ------------------------------------------------------------------ scaling

#[derive(Serialize)]
struct ScalingConfig {
    command: &'static str,
    d: usize,
    #[serde(rename = "r")]
    r_values: Vec<usize>,
    #[serde(rename = "l")]
    depths: Vec<usize>,
    eps: f64,
    delta: f64,
    kind: EnsembleKind,
}

pub fn scaling(_common: &Common, args: &ScalingArgs, cfg: &ConfigFile) -> Result<Produced, CliError> {
    let c = ScalingConfig {
        command: "scaling",
        d: cfg.or("d", args.d, 2)?,
        r_values: cfg.or("r", args.r.clone(), (1..=6).collect())?,
        depths: cfg.or("l", args.l.clone(), vec![1])?,
        eps: cfg.require("eps", args.eps)?,
        delta: cfg.require("delta", args.delta)?,
        kind: cfg.or("kind", args.kind, EnsembleKind::TwoDesign)?,
    };
    cfg.finish()?;
    check_unit_interval("eps", c.eps)?;
    check_unit_interval("delta", c.delta)?;
    check_qubit_dim(c.d)?;
    if c.r_values.is_empty() || c.depths.is_empty() || c.r_values.contains(&0) || c.depths.contains(&0) {
        return Err(CliError::Usage("--r and --l need positive values".into()));
    }
    let rows = scaling_table(c.d, &c.r_values, &c.depths, c.eps, c.delta, c.kind).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut table = ResultTable::new(
        "scaling",
        canonical_json(&c),
        &["R", "L", "cuts", "learning_shots", "pauli_qpd_shots", "optimal_qpd_shots", "optimal_over_learning"],
    );
    for r in &rows {
        table.push(vec![
            r.r.to_string(),
            r.l.to_string(),
            r.cuts.to_string(),
            r.learning_shots.to_string(),
            num(r.pauli_qpd_shots),
            num(r.optimal_qpd_shots),
            num(r.optimal_qpd_shots / r.learning_shots as f64),
        ]);
    }
    let json = diagnostics_json("scaling", &table, &c, json!({ "rows": rows }));
    Ok(Produced { summary: format!("{} rows", rows.len()), status: 0, table, json: Some(json) })
}

// --------------------------------------------------------------- separation

#[derive(Serialize)]
struct SeparationCliConfig {
    command: &'static str,
    seed: u64,
    instances: usize,
    #[serde(rename = "r")]
    r_values: Vec<usize>,
    n: usize,
    eps: f64,
    delta: f64,
    kind: EnsembleKind,
    shots: Vec<u64>,
}

pub fn separation(common: &Common, args: &SeparationArgs, cfg: &ConfigFile) -> Result<Produced, CliError> {
    let c = SeparationCliConfig {
        command: "separation",
        seed: cfg.or("seed", common.seed, 0)?,
        instances: cfg.or("trials", common.trials, DEFAULT_TRIALS)?,
        r_values: cfg.or("r", args.r.clone(), vec![1, 2, 3])?,
        n: cfg.or("n", args.n, 1)?,
        eps: cfg.require("eps", args.eps)?,
        delta: cfg.require("delta", args.delta)?,
        kind: cfg.or("kind", args.kind, EnsembleKind::TwoDesign)?,
        shots: cfg.or("shots", args.shots.clone(), Vec::new())?,
    };
    cfg.finish()?;
    check_unit_interval("eps", c.eps)?;
    check_unit_interval("delta", c.delta)?;
    check_positive("trials", c.instances)?;
    check_positive("n", c.n)?;
    if c.r_values.is_empty() || c.r_values.contains(&0) || c.shots.contains(&0) {
        return Err(CliError::Usage("--r and --shots need positive values".into()));
    }
    let max_r = c.r_values.iter().copied().max().unwrap_or(1);
    check_register(1 << c.n, max_r)?;
    if c.n * max_r > 8 {
        return Err(CliError::Usage(format!("the Pauli baseline tabulates 4^(nR) terms; n*R = {} exceeds 8", c.n * max_r)));
    }
    let sc = SeparationConfig {
        r_values: c.r_values.clone(),
        n: c.n,
        eps: c.eps,
        delta: c.delta,
        kind: c.kind,
        shot_grid: c.shots.clone(),
        instances: c.instances,
    };
    let rows = run_separation(&sc, c.seed, ExecMode::Parallel).map_err(run_err)?;
    let mut table = ResultTable::new(
        "separation",
        canonical_json(&c),
        &["R", "n", "method", "shots", "plan_total", "instances", "successes", "success_rate"],
    );
    for r in &rows {
        table.push(vec![
            r.r.to_string(),
            r.n.to_string(),
            r.method.tag().into(),
            r.shots.to_string(),
            r.plan_total.to_string(),
            r.instances.to_string(),
            r.successes.to_string(),
            num(r.success_rate),
        ]);
    }
    let json = diagnostics_json("separation", &table, &c, json!({ "rows": rows }));
    Ok(Produced { summary: format!("{} curve points", rows.len()), status: 0, table, json: Some(json) })
}

// --------------------------------------------------------------------- plan

#[derive(Serialize)]
struct PlanConfig {
    command: &'static str,
    #[serde(rename = "l")]
    depth: usize,
    #[serde(rename = "r")]
    branching: usize,
    d: usize,
    eps: f64,
    delta: f64,
    kind: EnsembleKind,
    protocol: Protocol,
    tree_sha256: Option<String>,
}

pub fn plan(_common: &Common, args: &PlanArgs, cfg: &ConfigFile) -> Result<Produced, CliError> {
    let tree_path: Option<PathBuf> = cfg.pick("tree", args.tree.clone())?;
    let eps = cfg.require("eps", args.eps)?;
    let delta = cfg.require("delta", args.delta)?;
    let kind = cfg.or("kind", args.kind, EnsembleKind::TwoDesign)?;
    let protocol = cfg.or("protocol", args.protocol, Protocol::B)?;
    let l_flag: Option<usize> = cfg.pick("l", args.l)?;
    let r_flag: Option<usize> = cfg.pick("r", args.r)?;
    let d_flag: Option<usize> = cfg.pick("d", args.d)?;
    cfg.finish()?;
    check_unit_interval("eps", eps)?;
    check_unit_interval("delta", delta)?;

    let (shape, sha) = match tree_path {
        Some(p) => {
            let (t, sha) = load_tree(&p)?;
            (t.shape(), Some(sha))
        }
        None => {
            let l = l_flag.ok_or_else(|| CliError::Usage("missing required parameter --l".into()))?;
            let r = r_flag.ok_or_else(|| CliError::Usage("missing required parameter --r".into()))?;
            let d = d_flag.unwrap_or(2);
            check_qubit_dim(d)?;
            (TreeShape::uniform(l, r, d).map_err(|e| CliError::Usage(e.to_string()))?, None)
        }
    };
    if shape.depth > 1 && protocol == Protocol::A {
        return Err(CliError::Usage("protocol a is only defined for L = 1".into()));
    }
    let c = PlanConfig {
        command: "plan",
        depth: shape.depth,
        branching: shape.branching,
        d: shape.bond_dim,
        eps,
        delta,
        kind,
        protocol,
        tree_sha256: sha,
    };
    let plan = allocate_shape_with(&shape, eps, delta, kind, protocol).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut table = ResultTable::new("plan", canonical_json(&c), &["path", "depth", "accuracy", "failure_budget", "norm_bound", "shots"]);
    for (p, n) in &plan.per_node_shots {
        let l = p.depth();
        table.push(vec![
            p.to_string(),
            l.to_string(),
            num(plan.per_depth_accuracy[l - 1]),
            num(plan.per_depth_budget[l - 1]),
            num(plan.per_depth_norm[l - 1]),
            n.to_string(),
        ]);
    }
    table.push(vec!["root".into(), "0".into(), num(plan.eps), num(plan.root_budget), String::new(), plan.root_shots.to_string()]);
    let json = diagnostics_json("plan", &table, &c, json!({ "plan": plan, "total_shots": plan.total_shots(), "union_budget": plan.union_budget() }));
    Ok(Produced { summary: format!("total {} shots", plan.total_shots()), status: 0, table, json: Some(json) })
}
