//! Command line front end.
//!
//! Subcommands mirror the analysis pipeline: `validate` a model file,
//! `modules` to grow the self-contained module of each partition
//! block, `order` to decide which modules may feed which, `cut` to
//! emit the cut-distribution factorization, `sample` to draw from it,
//! and `experiment` for the longitudinal bias study.
//!
//! Exit codes: 0 on success, 1 for usage problems, 2 for model
//! problems (unreadable, unparsable, or structurally invalid input),
//! 3 for numeric failures at run time. When `--seed` is absent the
//! `CUTGRAPH_SEED` environment variable is consulted, then a fixed
//! default; a given seed always reproduces the same bytes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde_json::json;

use crate::cut::{apply_within_cut, cut_general, CutFactorization, FactorKind};
use crate::dag::{Dag, NodeId, NodeSet};
use crate::experiment::{run_appendix_c, ExperimentConfig, ExperimentError};
use crate::inference::discrete::{enumerate_posterior, Assignment, DiscreteModel};
use crate::inference::nested::{nested_cut_sample, NestedConfig, NestedModel};
use crate::inference::samples::SampleSet;
use crate::model_io::{load_model, FlattenedModel, ModelIoError};
use crate::modules::{construct_module, is_self_contained, ModuleSet};
use crate::ordering::{order_two, sequential_split, OrderRelation, ReliabilityOrder, TieBreak};
use crate::seed::child_seed;

/// Default seed when neither `--seed` nor `CUTGRAPH_SEED` is given.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "cutgraph",
    version,
    about = "Modularized inference on DAG models: modules, orderings, cut factorizations, samplers"
)]
struct Cli {
    /// Emit machine-readable JSON instead of text
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and flatten a model file, reporting its shape
    Validate {
        /// Path to a model file
        model: PathBuf,
    },
    /// Grow the self-contained module of each partition block
    Modules {
        model: PathBuf,
        /// Override the file's partition: LABEL=node,node,...
        #[arg(long = "blocks", value_name = "LABEL=NODES", num_args = 1..)]
        blocks: Vec<String>,
    },
    /// Decide the analysis order between the partition blocks
    Order {
        model: PathBuf,
        #[arg(long = "blocks", alias = "three-blocks", value_name = "LABEL=NODES", num_args = 1..)]
        blocks: Vec<String>,
        /// Override the reliability ranking, most reliable first
        #[arg(long, value_delimiter = ',', value_name = "LABELS")]
        reliability: Vec<String>,
        /// Write the module ordering graph in DOT format
        #[arg(long, value_name = "FILE")]
        dot: Option<PathBuf>,
    },
    /// Emit the cut-distribution factorization
    Cut {
        model: PathBuf,
        #[arg(long = "blocks", value_name = "LABEL=NODES", num_args = 1..)]
        blocks: Vec<String>,
        #[arg(long, value_delimiter = ',', value_name = "LABELS")]
        reliability: Vec<String>,
        /// Extra within-module cut: MODULE=param,param,...
        #[arg(long, value_name = "MODULE=PARAMS")]
        within: Vec<String>,
        /// Write the factor list as JSON
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Draw from the cut or standard posterior of a discrete model
    Sample {
        model: PathBuf,
        /// Which distribution to draw from
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Number of retained draws
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        /// Root seed; falls back to CUTGRAPH_SEED, then a default
        #[arg(long)]
        seed: Option<u64>,
        /// Write samples as CSV (default: stdout)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Reproduce a packaged study
    Experiment {
        #[command(subcommand)]
        which: ExperimentCommand,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Two-stage cut distribution
    Cut,
    /// Ordinary full posterior
    Standard,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Longitudinal chain of regressions: cut vs standard bias
    AppendixC {
        /// Number of timepoints
        #[arg(long, default_value_t = 100)]
        t_len: usize,
        /// Outcomes per timepoint
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Independent data redraws
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// Coordinate sweeps for the standard-inference sampler
        #[arg(long, default_value_t = 3000)]
        mh_sweeps: usize,
        /// Directory for report.csv, summary.csv, and SVG plots
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// Everything a finished invocation produced.
pub struct CliRun {
    pub stdout: String,
    pub stderr: String,
    pub code: u8,
}

enum Failure {
    Usage(String),
    Model(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Model(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Model(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<ModelIoError> for Failure {
    fn from(e: ModelIoError) -> Failure {
        Failure::Model(e.to_string())
    }
}

impl From<crate::inference::InferenceError> for Failure {
    fn from(e: crate::inference::InferenceError) -> Failure {
        Failure::Numeric(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Failure {
        match e {
            ExperimentError::Config(m) => Failure::Usage(format!("experiment config: {m}")),
            ExperimentError::Numeric(inner) => Failure::Numeric(inner.to_string()),
            ExperimentError::Io(inner) => Failure::Model(format!("i/o error: {inner}")),
        }
    }
}

impl From<crate::modules::ModulesError> for Failure {
    fn from(e: crate::modules::ModulesError) -> Failure {
        Failure::Model(e.to_string())
    }
}

impl From<crate::ordering::OrderingError> for Failure {
    fn from(e: crate::ordering::OrderingError) -> Failure {
        Failure::Model(e.to_string())
    }
}

impl From<crate::cut::CutError> for Failure {
    fn from(e: crate::cut::CutError) -> Failure {
        Failure::Model(e.to_string())
    }
}

/// Entry point for `main`: real arguments, real environment.
pub fn run() -> u8 {
    let env_seed = std::env::var("CUTGRAPH_SEED").ok();
    let run = execute(std::env::args_os(), env_seed.as_deref());
    print!("{}", run.stdout);
    eprint!("{}", run.stderr);
    run.code
}

/// Runs one invocation in-process. `env_seed` stands in for the
/// `CUTGRAPH_SEED` environment variable so callers stay hermetic.
pub fn execute<I, S>(args: I, env_seed: Option<&str>) -> CliRun
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let rendered = err.render().to_string();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliRun {
                    stdout: rendered,
                    stderr: String::new(),
                    code: 0,
                },
                _ => CliRun {
                    stdout: String::new(),
                    stderr: rendered,
                    code: 1,
                },
            };
        }
    };
    match dispatch(&cli, env_seed) {
        Ok(stdout) => CliRun {
            stdout,
            stderr: String::new(),
            code: 0,
        },
        Err(failure) => CliRun {
            stdout: String::new(),
            stderr: format!("error: {}\n", failure.message()),
            code: failure.code(),
        },
    }
}

fn dispatch(cli: &Cli, env_seed: Option<&str>) -> Result<String, Failure> {
    match &cli.command {
        Command::Validate { model } => cmd_validate(model, cli.json),
        Command::Modules { model, blocks } => cmd_modules(model, blocks, cli.json),
        Command::Order {
            model,
            blocks,
            reliability,
            dot,
        } => cmd_order(model, blocks, reliability, dot.as_deref(), cli.json),
        Command::Cut {
            model,
            blocks,
            reliability,
            within,
            out,
        } => cmd_cut(model, blocks, reliability, within, out.as_deref(), cli.json),
        Command::Sample {
            model,
            method,
            draws,
            seed,
            out,
        } => {
            let seed = resolve_seed(*seed, env_seed)?;
            cmd_sample(model, *method, *draws, seed, out.as_deref(), cli.json)
        }
        Command::Experiment {
            which:
                ExperimentCommand::AppendixC {
                    t_len,
                    n,
                    seed,
                    replicates,
                    mh_sweeps,
                    out,
                },
        } => {
            let seed = resolve_seed(*seed, env_seed)?;
            let mut config = ExperimentConfig::new(seed);
            config.t_len = *t_len;
            config.n = *n;
            config.replicates = *replicates;
            config.mh_sweeps = *mh_sweeps;
            cmd_experiment(&config, out.as_deref(), cli.json)
        }
    }
}

fn resolve_seed(flag: Option<u64>, env_seed: Option<&str>) -> Result<u64, Failure> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match env_seed {
        None => Ok(DEFAULT_SEED),
        Some(text) => text.trim().parse().map_err(|_| {
            Failure::Usage(format!(
                "CUTGRAPH_SEED value `{text}` is not an unsigned integer"
            ))
        }),
    }
}

fn load(path: &Path) -> Result<FlattenedModel, Failure> {
    let (_, flat) = load_model(path).map_err(|e| match e {
        ModelIoError::Io(inner) => {
            Failure::Model(format!("cannot read `{}`: {inner}", path.display()))
        }
        other => Failure::Model(format!("{}: {other}", path.display())),
    })?;
    Ok(flat)
}

/// Parses one `LABEL=name,name,...` argument.
fn parse_labeled_list(arg: &str, what: &str) -> Result<(String, Vec<String>), Failure> {
    let (label, rest) = arg.split_once('=').ok_or_else(|| {
        Failure::Usage(format!("{what} `{arg}` must look like LABEL=name,name,..."))
    })?;
    let names: Vec<String> = rest
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if label.trim().is_empty() || names.is_empty() {
        return Err(Failure::Usage(format!(
            "{what} `{arg}` must name a label and at least one node"
        )));
    }
    Ok((label.trim().to_string(), names))
}

/// The partition and ranking an invocation should analyze: the file's,
/// unless overridden on the command line.
fn effective_blocks(
    flat: &FlattenedModel,
    block_args: &[String],
    reliability_arg: &[String],
) -> Result<(Vec<(String, NodeSet)>, ReliabilityOrder), Failure> {
    let blocks: Vec<(String, NodeSet)> = if block_args.is_empty() {
        flat.blocks_in_reliability_order()
    } else {
        let mut out = Vec::new();
        let mut covered = NodeSet::new();
        for arg in block_args {
            let (label, names) = parse_labeled_list(arg, "block")?;
            if out.iter().any(|(l, _)| *l == label) {
                return Err(Failure::Usage(format!("block `{label}` given twice")));
            }
            let mut set = NodeSet::new();
            for name in names {
                let id = NodeId::from(name.as_str());
                if !flat.dag.contains(&id) {
                    return Err(Failure::Model(format!(
                        "block `{label}` names `{name}`, which is not a node"
                    )));
                }
                covered.insert(id.clone());
                set.insert(id);
            }
            out.push((label, set));
        }
        let missing: Vec<String> = flat
            .dag
            .observables()
            .difference(&covered)
            .map(|id| id.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Failure::Model(format!(
                "blocks must cover every observable; missing: {}",
                missing.join(", ")
            )));
        }
        out
    };

    let reliability = if reliability_arg.is_empty() {
        if block_args.is_empty() {
            flat.reliability.clone()
        } else {
            // Command-line blocks rank themselves in the order given.
            ReliabilityOrder::new(blocks.iter().map(|(l, _)| l.clone()))
                .map_err(|e| Failure::Usage(e.to_string()))?
        }
    } else {
        ReliabilityOrder::new(reliability_arg.iter().cloned())
            .map_err(|e| Failure::Usage(e.to_string()))?
    };

    // Most reliable first, matching the ranking.
    let mut ordered = Vec::with_capacity(blocks.len());
    for label in reliability.labels() {
        if let Some(entry) = blocks.iter().find(|(l, _)| l == label) {
            ordered.push(entry.clone());
        }
    }
    if ordered.len() != blocks.len() {
        let unranked: Vec<&str> = blocks
            .iter()
            .map(|(l, _)| l.as_str())
            .filter(|l| reliability.rank(l).is_none())
            .collect();
        return Err(Failure::Usage(format!(
            "reliability ranking must cover every block; missing: {}",
            unranked.join(", ")
        )));
    }
    Ok((ordered, reliability))
}

fn set_to_vec(set: &NodeSet) -> Vec<String> {
    set.iter().map(|id| id.to_string()).collect()
}

fn list(set: &NodeSet) -> String {
    set_to_vec(set).join(", ")
}

fn kind_name(kind: FactorKind) -> &'static str {
    match kind {
        FactorKind::ModulePosterior => "module posterior",
        FactorKind::ConditionalPosterior => "conditional posterior",
        FactorKind::PriorOnly => "prior only",
        FactorKind::ComplementConditional => "complement",
    }
}

fn cmd_validate(path: &Path, as_json: bool) -> Result<String, Failure> {
    let flat = load(path)?;
    let parameters = flat.dag.parameters().len();
    let observables = flat.dag.observables().len();
    if as_json {
        let blocks: BTreeMap<&String, Vec<String>> = flat
            .partition
            .iter()
            .map(|(label, set)| (label, set_to_vec(set)))
            .collect();
        let value = json!({
            "name": flat.name,
            "nodes": flat.dag.node_count(),
            "parameters": parameters,
            "observables": observables,
            "edges": flat.dag.edge_count(),
            "blocks": blocks,
            "reliability": flat.reliability.labels(),
            "within_cuts": flat.within_cuts.len(),
            "data_entries": flat.data.len(),
            "executable": flat.discrete.is_some(),
            "execution_note": flat.execution_note,
        });
        return Ok(format!("{}\n", serde_json::to_string_pretty(&value).unwrap()));
    }
    let mut out = format!(
        "model `{}`: {} nodes ({} parameters, {} observables), {} edges\n",
        flat.name,
        flat.dag.node_count(),
        parameters,
        observables,
        flat.dag.edge_count()
    );
    for (label, set) in &flat.partition {
        out.push_str(&format!("block `{label}`: {} observables\n", set.len()));
    }
    out.push_str(&format!(
        "reliability: {}\n",
        flat.reliability.labels().join(" > ")
    ));
    if !flat.within_cuts.is_empty() {
        out.push_str(&format!("within-module cuts declared: {}\n", flat.within_cuts.len()));
    }
    if !flat.data.is_empty() {
        out.push_str(&format!("data entries: {}\n", flat.data.len()));
    }
    match &flat.execution_note {
        None => out.push_str("execution: exact discrete tables available\n"),
        Some(note) => out.push_str(&format!("execution: symbolic only ({note})\n")),
    }
    Ok(out)
}

fn build_modules(
    dag: &Dag,
    blocks: &[(String, NodeSet)],
) -> Result<Vec<ModuleSet>, Failure> {
    let mut out = Vec::with_capacity(blocks.len());
    for (label, xstar) in blocks {
        out.push(construct_module(dag, label.clone(), xstar)?);
    }
    Ok(out)
}

fn cmd_modules(path: &Path, block_args: &[String], as_json: bool) -> Result<String, Failure> {
    let flat = load(path)?;
    let (blocks, _) = effective_blocks(&flat, block_args, &[])?;
    let modules = build_modules(&flat.dag, &blocks)?;
    if as_json {
        let items: Vec<serde_json::Value> = modules
            .iter()
            .enumerate()
            .map(|(rank, m)| {
                json!({
                    "label": m.label,
                    "rank": rank + 1,
                    "focal_observables": set_to_vec(&m.xstar),
                    "observables": set_to_vec(&m.x),
                    "parameters": set_to_vec(&m.theta),
                    "self_contained": is_self_contained(&flat.dag, m),
                })
            })
            .collect();
        return Ok(format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({ "modules": items })).unwrap()
        ));
    }
    let mut out = String::new();
    for (rank, m) in modules.iter().enumerate() {
        out.push_str(&format!("module `{}` (rank {})\n", m.label, rank + 1));
        out.push_str(&format!("  focal observables: {}\n", list(&m.xstar)));
        out.push_str(&format!("  all observables:   {}\n", list(&m.x)));
        out.push_str(&format!(
            "  parameters:        {}\n",
            if m.theta.is_empty() {
                "(none)".to_string()
            } else {
                list(&m.theta)
            }
        ));
        out.push_str(&format!(
            "  self-contained:    {}\n",
            if is_self_contained(&flat.dag, m) {
                "yes"
            } else {
                "no"
            }
        ));
    }
    Ok(out)
}

fn relation_text(relation: OrderRelation, a: &str, b: &str) -> String {
    match relation {
        OrderRelation::AtoB => format!("`{a}` must feed `{b}`"),
        OrderRelation::BtoA => format!("`{b}` must feed `{a}`"),
        OrderRelation::Both => format!(
            "either of `{a}` and `{b}` could feed the other; reliability decides"
        ),
        OrderRelation::Unordered => format!("`{a}` and `{b}` share nothing; no order needed"),
    }
}

fn cmd_order(
    path: &Path,
    block_args: &[String],
    reliability_arg: &[String],
    dot: Option<&Path>,
    as_json: bool,
) -> Result<String, Failure> {
    let flat = load(path)?;
    let (blocks, reliability) = effective_blocks(&flat, block_args, reliability_arg)?;
    if blocks.len() < 2 {
        return Err(Failure::Model(
            "ordering needs at least two partition blocks".into(),
        ));
    }
    let (modules, graph) = sequential_split(
        &flat.dag,
        &blocks,
        &reliability,
        TieBreak::LessReliableChild,
    )?;
    let pairwise = if modules.len() == 2 {
        Some(order_two(&flat.dag, &modules[0], &modules[1])?)
    } else {
        None
    };
    let edges: Vec<(String, String)> = graph
        .edges()
        .map(|(p, c)| (p.to_string(), c.to_string()))
        .collect();

    if let Some(dot_path) = dot {
        std::fs::write(dot_path, graph.to_dot())
            .map_err(|e| Failure::Model(format!("cannot write `{}`: {e}", dot_path.display())))?;
    }

    if as_json {
        let value = json!({
            "modules": modules.iter().map(|m| m.label.clone()).collect::<Vec<_>>(),
            "edges": edges,
            "pairwise": pairwise.map(|r| format!("{r:?}")),
            "dot": graph.to_dot(),
        });
        return Ok(format!("{}\n", serde_json::to_string_pretty(&value).unwrap()));
    }
    let mut out = String::new();
    out.push_str(&format!(
        "modules (most reliable first): {}\n",
        modules
            .iter()
            .map(|m| m.label.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    if let Some(relation) = pairwise {
        out.push_str(&format!(
            "pairwise: {}\n",
            relation_text(relation, &modules[0].label, &modules[1].label)
        ));
    }
    if edges.is_empty() {
        out.push_str("analysis order: no edges; the modules are independent\n");
    } else {
        out.push_str("analysis order:\n");
        for (p, c) in &edges {
            out.push_str(&format!("  {p} -> {c}\n"));
        }
    }
    if let Some(dot_path) = dot {
        out.push_str(&format!("wrote {}\n", dot_path.display()));
    }
    Ok(out)
}

/// Builds the factorization the file and flags describe: sequential
/// split in reliability order, then any within-module cuts.
fn build_cut(
    flat: &FlattenedModel,
    block_args: &[String],
    reliability_arg: &[String],
    within_args: &[String],
) -> Result<CutFactorization, Failure> {
    let (blocks, reliability) = effective_blocks(flat, block_args, reliability_arg)?;
    let (modules, graph) = sequential_split(
        &flat.dag,
        &blocks,
        &reliability,
        TieBreak::LessReliableChild,
    )?;
    let mut cf = cut_general(&flat.dag, &modules, &graph)?;

    // File-declared within cuts apply only to the file's own blocks.
    if block_args.is_empty() {
        for spec in &flat.within_cuts {
            cf = apply_within_cut(&cf, spec, &flat.dag)?;
        }
    }
    for arg in within_args {
        let (module, names) = parse_labeled_list(arg, "within-cut")?;
        let mut prior_only_params = NodeSet::new();
        for name in names {
            let id = NodeId::from(name.as_str());
            if !flat.dag.contains(&id) {
                return Err(Failure::Model(format!(
                    "within-cut for `{module}` names `{name}`, which is not a node"
                )));
            }
            prior_only_params.insert(id);
        }
        let spec = crate::cut::WithinModuleCutSpec {
            module,
            prior_only_params,
        };
        cf = apply_within_cut(&cf, &spec, &flat.dag)?;
    }
    Ok(cf)
}

fn cmd_cut(
    path: &Path,
    block_args: &[String],
    reliability_arg: &[String],
    within_args: &[String],
    out_file: Option<&Path>,
    as_json: bool,
) -> Result<String, Failure> {
    let flat = load(path)?;
    let cf = build_cut(&flat, block_args, reliability_arg, within_args)?;
    let rendered_json = format!("{}\n", serde_json::to_string_pretty(&cf).unwrap());
    if let Some(out_path) = out_file {
        std::fs::write(out_path, &rendered_json)
            .map_err(|e| Failure::Model(format!("cannot write `{}`: {e}", out_path.display())))?;
    }
    if as_json {
        return Ok(rendered_json);
    }
    let mut out = format!("cut factorization ({} factors):\n", cf.factors.len());
    for (i, factor) in cf.factors.iter().enumerate() {
        out.push_str(&format!(
            "  {}. {}  [{}, module {}]\n",
            i + 1,
            factor,
            kind_name(factor.kind),
            factor.source_module
        ));
    }
    if let Some(out_path) = out_file {
        out.push_str(&format!("wrote {}\n", out_path.display()));
    }
    Ok(out)
}

/// Draws independent rows from the ordinary full posterior of a
/// discrete model by exact enumeration and inversion.
fn sample_standard_posterior(
    model: &DiscreteModel,
    data: &Assignment,
    draws: usize,
    seed: u64,
) -> Result<SampleSet, Failure> {
    let targets = model.dag().parameters();
    let table = enumerate_posterior(model, &targets, data)?;
    let entries: Vec<(Assignment, f64)> = table.entries().collect();
    let names: Vec<String> = entries
        .first()
        .map(|(a, _)| a.keys().map(|id| id.to_string()).collect())
        .unwrap_or_default();
    let mut set = SampleSet::new(names, seed);
    let mut rng = ChaCha12Rng::seed_from_u64(child_seed(seed, "standard-sample"));
    let mut row = Vec::new();
    for _ in 0..draws {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = &entries[entries.len() - 1].0;
        for (assignment, p) in &entries {
            acc += p;
            if u < acc {
                chosen = assignment;
                break;
            }
        }
        row.clear();
        row.extend(chosen.values().map(|s| *s as f64));
        set.push_row(&row)?;
    }
    Ok(set)
}

fn cmd_sample(
    path: &Path,
    method: MethodArg,
    draws: usize,
    seed: u64,
    out_file: Option<&Path>,
    as_json: bool,
) -> Result<String, Failure> {
    if draws == 0 {
        return Err(Failure::Usage("--draws must be positive".into()));
    }
    let flat = load(path)?;
    let model = flat.require_discrete()?;
    let missing: Vec<String> = flat
        .dag
        .observables()
        .iter()
        .filter(|id| !flat.data.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Failure::Model(format!(
            "sampling needs data for every observable; missing: {}",
            missing.join(", ")
        )));
    }

    let samples = match method {
        MethodArg::Standard => sample_standard_posterior(model, &flat.data, draws, seed)?,
        MethodArg::Cut => {
            let cf = build_cut(&flat, &[], &[], &[])?;
            nested_cut_sample(
                NestedModel::Discrete(model, &flat.data),
                &cf,
                &NestedConfig::new(draws),
                seed,
            )?
        }
    };
    let csv = samples.to_csv_string();
    if let Some(out_path) = out_file {
        std::fs::write(out_path, &csv)
            .map_err(|e| Failure::Model(format!("cannot write `{}`: {e}", out_path.display())))?;
        let summary = format!(
            "wrote {} draws of {} columns to {}\n",
            samples.len(),
            samples.dim(),
            out_path.display()
        );
        if as_json {
            return Ok(format!(
                "{}\n",
                serde_json::to_string_pretty(&json!({
                    "draws": samples.len(),
                    "columns": samples.names(),
                    "path": out_path.display().to_string(),
                }))
                .unwrap()
            ));
        }
        return Ok(summary);
    }
    if as_json {
        // Rows stay in the CSV field so the JSON remains modest.
        return Ok(format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({
                "draws": samples.len(),
                "columns": samples.names(),
                "csv": csv,
            }))
            .unwrap()
        ));
    }
    Ok(csv)
}

fn cmd_experiment(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
    as_json: bool,
) -> Result<String, Failure> {
    let report = run_appendix_c(config)?;
    let written: Vec<PathBuf> = match out_dir {
        Some(dir) => report.write_artifacts(dir).map_err(Failure::from)?,
        None => Vec::new(),
    };
    if as_json {
        let value = json!({
            "config": config,
            "summaries": report.summaries,
            "written": written
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>(),
        });
        return Ok(format!("{}\n", serde_json::to_string_pretty(&value).unwrap()));
    }
    let mut out = format!(
        "longitudinal bias study: {} timepoints, {} outcomes each, seed {}\n",
        config.t_len, config.n, config.seed
    );
    for s in &report.summaries {
        out.push_str(&format!(
            "{}/{}: mean bias {:+.4}, sd {:.4}, mean normalized bias {:+.4}, overestimates {:.0}%\n",
            s.scenario,
            s.method,
            s.mean_bias,
            s.std_bias,
            s.mean_normalized_bias,
            100.0 * s.overestimate_fraction
        ));
    }
    for path in &written {
        out.push_str(&format!("wrote {}\n", path.display()));
    }
    Ok(out)
}
