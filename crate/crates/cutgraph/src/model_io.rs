//! Model files: a JSON format for plated DAG models.
//!
//! A model file declares index ranges (plates), node templates, edge
//! templates, a partition of the observables into labelled blocks, a
//! reliability ranking of those blocks, and optional within-module cut
//! requests and observed data. [`parse_model`] turns text into a
//! [`ModelSpec`] with path-anchored diagnostics; [`flatten`] expands
//! the templates into a concrete [`Dag`] plus everything needed to run
//! the module and cut machinery on it.
//!
//! Template names may embed plate indices in braces: `W_{unit}` with a
//! plate `unit: 1..6` expands to `W_1` through `W_6`. An index may
//! carry a constant offset, as in `theta_{carry-1}`, which is how chain
//! models wire a node to its predecessor. Edges expand over the union
//! of the plates named by their endpoints.
//!
//! Distribution annotations are carried per node template. Categorical
//! tables are fully executable; the other recognized families
//! (`normal-linear`, `poisson-log-linear-product`,
//! `multinomial-dirichlet`, `gamma`, `exponential`) parse and have
//! their parameter references checked against the node's parents, but
//! only all-categorical models build a [`DiscreteModel`]. Unrecognized
//! families parse too; the flattened model then reports why it cannot
//! be executed numerically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cut::WithinModuleCutSpec;
use crate::dag::{build_dag, Dag, DagError, NodeId, NodeKind, NodeSet};
use crate::inference::discrete::{Assignment, DiscreteModel};
use crate::inference::InferenceError;
use crate::ordering::{OrderingError, ReliabilityOrder};

/// The one schema version this build understands.
pub const SCHEMA_VERSION: u32 = 1;

/// Families the parser recognizes. Only `categorical` executes.
pub const KNOWN_FAMILIES: [&str; 6] = [
    "categorical",
    "normal-linear",
    "poisson-log-linear-product",
    "multinomial-dirichlet",
    "gamma",
    "exponential",
];

/// Failures while reading, validating, or flattening a model file.
#[derive(Debug, Error)]
pub enum ModelIoError {
    /// The text is not well-formed JSON.
    #[error("syntax error: {0}")]
    SyntaxError(String),
    /// The JSON is well-formed but violates the schema or its
    /// consistency rules.
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    /// A name in the file does not resolve to a declared entity.
    #[error("unresolved reference: {0}")]
    UnresolvedReference(String),
    /// A pattern names a plate that was never declared.
    #[error("plate bound error: {0}")]
    PlateBoundError(String),
    /// The file could not be read.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// The expanded edges do not form a DAG, or name checks failed.
    #[error(transparent)]
    Graph(#[from] DagError),
    /// The reliability ranking is malformed.
    #[error(transparent)]
    Ordering(#[from] OrderingError),
    /// A categorical table failed numeric validation.
    #[error(transparent)]
    Numeric(#[from] InferenceError),
}

/// An inclusive index range, `from..=to`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateRange {
    pub from: i64,
    pub to: i64,
}

/// Node role, mirroring [`NodeKind`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindSpec {
    Parameter,
    Observable,
}

impl From<KindSpec> for NodeKind {
    fn from(k: KindSpec) -> NodeKind {
        match k {
            KindSpec::Parameter => NodeKind::Parameter,
            KindSpec::Observable => NodeKind::Observable,
        }
    }
}

/// Distribution annotation on a node template.
///
/// `params` is free-form JSON. For `categorical` it must hold `states`
/// and a flat `table` (parents ordered by name, first parent slowest).
/// For other families, any string value that resolves to a node name
/// must name a parent of the node; strings that resolve to nothing are
/// treated as literals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
}

/// One node template; expands to one node per combination of the plate
/// indices appearing in `name`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTemplate {
    pub name: String,
    pub kind: KindSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistSpec>,
}

/// One edge template; expands over the union of the plates named by
/// its endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeTemplate {
    pub from: String,
    pub to: String,
}

/// Request to draw some of a module's parameters from their prior.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WithinCutTemplate {
    pub module: String,
    pub prior_only: Vec<String>,
}

/// A parsed model file. Field order here fixes the canonical
/// serialization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub schema: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub plates: BTreeMap<String, PlateRange>,
    pub nodes: Vec<NodeTemplate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeTemplate>,
    pub partition: BTreeMap<String, Vec<String>>,
    pub reliability: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub within_cuts: Vec<WithinCutTemplate>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub data: BTreeMap<String, usize>,
}

/// A model spec with all templates expanded.
#[derive(Clone, Debug)]
pub struct FlattenedModel {
    pub name: String,
    pub dag: Dag,
    /// Block label to the observables it owns. Together the blocks
    /// cover every observable exactly once.
    pub partition: BTreeMap<String, NodeSet>,
    pub reliability: ReliabilityOrder,
    pub within_cuts: Vec<WithinModuleCutSpec>,
    /// Observed states from the file's `data` entry, if any.
    pub data: Assignment,
    /// Present when every node carries a categorical table.
    pub discrete: Option<DiscreteModel>,
    /// Why `discrete` is absent, when it is.
    pub execution_note: Option<String>,
}

impl FlattenedModel {
    /// Blocks sorted most reliable first.
    pub fn blocks_in_reliability_order(&self) -> Vec<(String, NodeSet)> {
        let mut labels: Vec<&String> = self.partition.keys().collect();
        labels.sort_by(|a, b| {
            if self.reliability.more_reliable(a, b) {
                std::cmp::Ordering::Less
            } else if self.reliability.more_reliable(b, a) {
                std::cmp::Ordering::Greater
            } else {
                a.cmp(b)
            }
        });
        labels
            .into_iter()
            .map(|l| (l.clone(), self.partition[l].clone()))
            .collect()
    }

    /// The executable discrete model, or a clear refusal.
    pub fn require_discrete(&self) -> Result<&DiscreteModel, ModelIoError> {
        match &self.discrete {
            Some(m) => Ok(m),
            None => Err(ModelIoError::SchemaViolation(format!(
                "model `{}` cannot be executed numerically: {}",
                self.name,
                self.execution_note.as_deref().unwrap_or("no reason recorded")
            ))),
        }
    }
}

/// Parses a model file, reporting syntax errors with line and column
/// and schema errors with the JSON path of the offending value.
pub fn parse_model(text: &str) -> Result<ModelSpec, ModelIoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ModelSpec = serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        match inner.classify() {
            serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
                ModelIoError::SyntaxError(format!(
                    "line {}, column {}: {}",
                    inner.line(),
                    inner.column(),
                    inner
                ))
            }
            _ => ModelIoError::SchemaViolation(format!("at `{path}`: {inner}")),
        }
    })?;
    validate_spec(&spec)?;
    Ok(spec)
}

/// Canonical serialization: field order as declared, maps sorted by
/// key. Parsing the output reproduces the spec exactly.
pub fn to_json_string(spec: &ModelSpec) -> String {
    let mut text = serde_json::to_string_pretty(spec).expect("spec serializes");
    text.push('\n');
    text
}

/// Reads, parses, and flattens a model file.
pub fn load_model(path: &Path) -> Result<(ModelSpec, FlattenedModel), ModelIoError> {
    let text = std::fs::read_to_string(path)?;
    let spec = parse_model(&text)?;
    let flat = flatten(&spec)?;
    Ok((spec, flat))
}

fn validate_spec(spec: &ModelSpec) -> Result<(), ModelIoError> {
    if spec.schema != SCHEMA_VERSION {
        return Err(ModelIoError::SchemaViolation(format!(
            "schema version {} is not supported; this build reads version {}",
            spec.schema, SCHEMA_VERSION
        )));
    }
    if spec.name.is_empty() {
        return Err(ModelIoError::SchemaViolation("model name is empty".into()));
    }
    for (plate, range) in &spec.plates {
        if plate.is_empty() || !plate.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ModelIoError::SchemaViolation(format!(
                "plate name `{plate}` must be a plain identifier"
            )));
        }
        if range.from > range.to {
            return Err(ModelIoError::SchemaViolation(format!(
                "plate `{plate}` has empty range {}..={}",
                range.from, range.to
            )));
        }
    }
    if spec.nodes.is_empty() {
        return Err(ModelIoError::SchemaViolation(
            "model declares no nodes".into(),
        ));
    }
    let block_labels: BTreeSet<&String> = spec.partition.keys().collect();
    let mut seen = BTreeSet::new();
    for label in &spec.reliability {
        if !block_labels.contains(label) {
            return Err(ModelIoError::SchemaViolation(format!(
                "reliability ranking names `{label}`, which is not a partition block"
            )));
        }
        if !seen.insert(label) {
            return Err(ModelIoError::SchemaViolation(format!(
                "reliability ranking lists `{label}` twice"
            )));
        }
    }
    for label in block_labels {
        if !seen.contains(label) {
            return Err(ModelIoError::SchemaViolation(format!(
                "partition block `{label}` is missing from the reliability ranking"
            )));
        }
    }
    Ok(())
}

/// One piece of a name pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Index { plate: String, offset: i64 },
}

/// Parses a pattern like `r_{food}_{type}` or `theta_{carry-1}`.
fn parse_pattern(pattern: &str) -> Result<Vec<Segment>, ModelIoError> {
    let bad = |msg: String| ModelIoError::SchemaViolation(format!("pattern `{pattern}`: {msg}"));
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut chars = pattern.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                let mut inner = String::new();
                let mut closed = false;
                for c in chars.by_ref() {
                    match c {
                        '}' => {
                            closed = true;
                            break;
                        }
                        '{' => return Err(bad("nested `{` inside index".into())),
                        _ => inner.push(c),
                    }
                }
                if !closed {
                    return Err(bad("unterminated `{`".into()));
                }
                segments.push(parse_index(&inner).map_err(|m| bad(m))?);
            }
            '}' => return Err(bad("`}` without matching `{`".into())),
            _ => literal.push(c),
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    if segments.is_empty() {
        return Err(bad("empty pattern".into()));
    }
    Ok(segments)
}

/// Parses the inside of a brace: `plate`, `plate+k`, or `plate-k`.
fn parse_index(inner: &str) -> Result<Segment, String> {
    let split_at = inner.find(['+', '-']);
    let (name, offset) = match split_at {
        None => (inner, 0i64),
        Some(pos) => {
            let (name, rest) = inner.split_at(pos);
            let sign = if rest.starts_with('-') { -1 } else { 1 };
            let magnitude: i64 = rest[1..]
                .parse()
                .map_err(|_| format!("index offset `{rest}` is not an integer"))?;
            (name, sign * magnitude)
        }
    };
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("index name `{name}` must be a plain identifier"));
    }
    Ok(Segment::Index {
        plate: name.to_string(),
        offset,
    })
}

/// Distinct plate names in order of first appearance.
fn pattern_plates(segments: &[Segment]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for seg in segments {
        if let Segment::Index { plate, .. } = seg {
            if !out.contains(plate) {
                out.push(plate.clone());
            }
        }
    }
    out
}

/// Renders a pattern under a full index assignment.
fn render(segments: &[Segment], ctx: &BTreeMap<String, i64>) -> String {
    let mut out = String::new();
    for seg in segments {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Index { plate, offset } => {
                let value = ctx[plate] + offset;
                out.push_str(&value.to_string());
            }
        }
    }
    out
}

/// All index assignments for the given plates, last plate fastest.
fn contexts(
    plates: &[String],
    ranges: &BTreeMap<String, PlateRange>,
) -> Result<Vec<BTreeMap<String, i64>>, ModelIoError> {
    let mut spans = Vec::new();
    for plate in plates {
        let range = ranges.get(plate).ok_or_else(|| {
            ModelIoError::PlateBoundError(format!("plate `{plate}` is not declared"))
        })?;
        spans.push((plate.clone(), range.from, range.to));
    }
    let mut out = vec![BTreeMap::new()];
    for (plate, from, to) in spans {
        let mut next = Vec::new();
        for ctx in &out {
            for value in from..=to {
                let mut ctx = ctx.clone();
                ctx.insert(plate.clone(), value);
                next.push(ctx);
            }
        }
        out = next;
    }
    Ok(out)
}

/// Expands one pattern into names, together with the index assignment
/// that produced each name.
fn expand_pattern(
    pattern: &str,
    ranges: &BTreeMap<String, PlateRange>,
) -> Result<Vec<(String, BTreeMap<String, i64>)>, ModelIoError> {
    let segments = parse_pattern(pattern)?;
    let plates = pattern_plates(&segments);
    let mut out = Vec::new();
    for ctx in contexts(&plates, ranges)? {
        out.push((render(&segments, &ctx), ctx));
    }
    Ok(out)
}

/// Expands every template in the spec into a concrete model.
pub fn flatten(spec: &ModelSpec) -> Result<FlattenedModel, ModelIoError> {
    validate_spec(spec)?;

    // Nodes, remembering which template and index assignment made each.
    let mut kinds: BTreeMap<NodeId, NodeKind> = BTreeMap::new();
    let mut origin: BTreeMap<NodeId, (usize, BTreeMap<String, i64>)> = BTreeMap::new();
    for (idx, tpl) in spec.nodes.iter().enumerate() {
        for (name, ctx) in expand_pattern(&tpl.name, &spec.plates)? {
            let id = NodeId::from(name.as_str());
            if kinds.insert(id.clone(), tpl.kind.into()).is_some() {
                return Err(ModelIoError::SchemaViolation(format!(
                    "node `{name}` is declared more than once"
                )));
            }
            origin.insert(id, (idx, ctx));
        }
    }

    // Edges expand over the union of the plates of their endpoints.
    let mut edges: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    for edge in &spec.edges {
        let from_segs = parse_pattern(&edge.from)?;
        let to_segs = parse_pattern(&edge.to)?;
        let mut plates = pattern_plates(&from_segs);
        for plate in pattern_plates(&to_segs) {
            if !plates.contains(&plate) {
                plates.push(plate);
            }
        }
        for ctx in contexts(&plates, &spec.plates)? {
            let from = render(&from_segs, &ctx);
            let to = render(&to_segs, &ctx);
            for name in [&from, &to] {
                if !kinds.contains_key(&NodeId::from(name.as_str())) {
                    return Err(ModelIoError::UnresolvedReference(format!(
                        "edge `{}` -> `{}` produces `{name}`, which is not a node",
                        edge.from, edge.to
                    )));
                }
            }
            edges.insert((NodeId::from(from.as_str()), NodeId::from(to.as_str())));
        }
    }
    let dag = build_dag(
        kinds.iter().map(|(id, kind)| (id.clone(), *kind)),
        edges.iter().cloned(),
    )?;

    // Partition blocks; each observable must land in exactly one.
    let mut partition: BTreeMap<String, NodeSet> = BTreeMap::new();
    let mut owner: BTreeMap<NodeId, String> = BTreeMap::new();
    for (label, patterns) in &spec.partition {
        let mut block = NodeSet::new();
        for pattern in patterns {
            for (name, _) in expand_pattern(pattern, &spec.plates)? {
                let id = NodeId::from(name.as_str());
                match kinds.get(&id) {
                    None => {
                        return Err(ModelIoError::UnresolvedReference(format!(
                            "partition block `{label}` names `{name}`, which is not a node"
                        )))
                    }
                    Some(NodeKind::Parameter) => {
                        return Err(ModelIoError::SchemaViolation(format!(
                            "partition block `{label}` lists parameter `{name}`; blocks split observables only"
                        )))
                    }
                    Some(NodeKind::Observable) => {}
                }
                if let Some(previous) = owner.get(&id) {
                    if previous != label {
                        return Err(ModelIoError::SchemaViolation(format!(
                            "observable `{name}` appears in blocks `{previous}` and `{label}`"
                        )));
                    }
                } else {
                    owner.insert(id.clone(), label.clone());
                }
                block.insert(id);
            }
        }
        if block.is_empty() {
            return Err(ModelIoError::SchemaViolation(format!(
                "partition block `{label}` matches no observables"
            )));
        }
        partition.insert(label.clone(), block);
    }
    for obs in dag.observables() {
        if !owner.contains_key(&obs) {
            return Err(ModelIoError::SchemaViolation(format!(
                "observable `{obs}` is not assigned to any partition block"
            )));
        }
    }

    let reliability = ReliabilityOrder::new(spec.reliability.iter().cloned())?;

    // Within-module cut requests.
    let mut within_cuts = Vec::new();
    for wc in &spec.within_cuts {
        if !partition.contains_key(&wc.module) {
            return Err(ModelIoError::UnresolvedReference(format!(
                "within-cut names module `{}`, which is not a partition block",
                wc.module
            )));
        }
        let mut prior_only_params = NodeSet::new();
        for pattern in &wc.prior_only {
            for (name, _) in expand_pattern(pattern, &spec.plates)? {
                let id = NodeId::from(name.as_str());
                match kinds.get(&id) {
                    None => {
                        return Err(ModelIoError::UnresolvedReference(format!(
                            "within-cut for `{}` names `{name}`, which is not a node",
                            wc.module
                        )))
                    }
                    Some(NodeKind::Observable) => {
                        return Err(ModelIoError::SchemaViolation(format!(
                            "within-cut for `{}` names observable `{name}`; only parameters can be prior-only",
                            wc.module
                        )))
                    }
                    Some(NodeKind::Parameter) => {
                        prior_only_params.insert(id);
                    }
                }
            }
        }
        within_cuts.push(WithinModuleCutSpec {
            module: wc.module.clone(),
            prior_only_params,
        });
    }

    // Distribution annotations: collect categorical tables, check
    // parameter references for the rest.
    let mut tables: Vec<(NodeId, usize, Vec<f64>)> = Vec::new();
    let mut blocker: Option<String> = None;
    for (id, (idx, ctx)) in &origin {
        let tpl = &spec.nodes[*idx];
        match &tpl.dist {
            None => {
                if blocker.is_none() {
                    blocker = Some(format!("node `{id}` has no distribution annotation"));
                }
            }
            Some(dist) if dist.family == "categorical" => {
                let (states, table) = categorical_params(&dist.params).map_err(|msg| {
                    ModelIoError::SchemaViolation(format!(
                        "categorical annotation on `{id}`: {msg}"
                    ))
                })?;
                tables.push((id.clone(), states, table));
            }
            Some(dist) => {
                if blocker.is_none() {
                    blocker = if KNOWN_FAMILIES.contains(&dist.family.as_str()) {
                        Some(format!(
                            "node `{id}` uses family `{}`, which has no exact engine here",
                            dist.family
                        ))
                    } else {
                        Some(format!(
                            "node `{id}` uses unrecognized family `{}`",
                            dist.family
                        ))
                    };
                }
                check_param_refs(
                    &dist.params,
                    ctx,
                    &spec.plates,
                    &kinds,
                    dag.parents_of(id)?,
                    id,
                )?;
            }
        }
    }
    let (discrete, execution_note) = if blocker.is_none() {
        (Some(DiscreteModel::new(dag.clone(), tables)?), None)
    } else {
        let note = format!(
            "{}; numeric execution needs a categorical table on every node",
            blocker.unwrap()
        );
        (None, Some(note))
    };

    // Observed data.
    let mut data = Assignment::new();
    for (name, state) in &spec.data {
        let id = NodeId::from(name.as_str());
        match kinds.get(&id) {
            None => {
                return Err(ModelIoError::UnresolvedReference(format!(
                    "data assigns `{name}`, which is not a node"
                )))
            }
            Some(NodeKind::Parameter) => {
                return Err(ModelIoError::SchemaViolation(format!(
                    "data assigns parameter `{name}`; only observables take data"
                )))
            }
            Some(NodeKind::Observable) => {}
        }
        if let Some(model) = &discrete {
            let card = model.cardinality(&id)?;
            if *state >= card {
                return Err(ModelIoError::SchemaViolation(format!(
                    "data state {state} for `{name}` is out of range; the node has {card} states"
                )));
            }
        }
        data.insert(id, *state);
    }

    Ok(FlattenedModel {
        name: spec.name.clone(),
        dag,
        partition,
        reliability,
        within_cuts,
        data,
        discrete,
        execution_note,
    })
}

/// Pulls `states` and `table` out of a categorical annotation.
fn categorical_params(params: &serde_json::Value) -> Result<(usize, Vec<f64>), String> {
    let obj = params
        .as_object()
        .ok_or("params must be an object with `states` and `table`")?;
    for key in obj.keys() {
        if key != "states" && key != "table" {
            return Err(format!("unexpected key `{key}`; only `states` and `table` apply"));
        }
    }
    let states = obj
        .get("states")
        .and_then(|v| v.as_u64())
        .ok_or("`states` must be a positive integer")? as usize;
    if states < 2 {
        return Err("`states` must be at least 2".into());
    }
    let table = obj
        .get("table")
        .and_then(|v| v.as_array())
        .ok_or("`table` must be an array of probabilities")?;
    let mut out = Vec::with_capacity(table.len());
    for v in table {
        let p = v.as_f64().ok_or("`table` entries must be numbers")?;
        if !p.is_finite() || p < 0.0 {
            return Err(format!("`table` entry {p} is not a probability"));
        }
        out.push(p);
    }
    Ok((states, out))
}

/// Walks a params value and checks every string that resolves to a
/// node name against the node's parents. Strings with braces must
/// resolve; brace-free strings that match no node are literals.
fn check_param_refs(
    params: &serde_json::Value,
    ctx: &BTreeMap<String, i64>,
    ranges: &BTreeMap<String, PlateRange>,
    kinds: &BTreeMap<NodeId, NodeKind>,
    parents: &NodeSet,
    node: &NodeId,
) -> Result<(), ModelIoError> {
    match params {
        serde_json::Value::String(s) => {
            if s.contains('{') || s.contains('}') {
                let segments = parse_pattern(s)?;
                // Free plates (not bound by the node's own indices)
                // range over their full span.
                let free: Vec<String> = pattern_plates(&segments)
                    .into_iter()
                    .filter(|p| !ctx.contains_key(p))
                    .collect();
                for free_ctx in contexts(&free, ranges)? {
                    let mut full = ctx.clone();
                    full.extend(free_ctx);
                    let name = render(&segments, &full);
                    let id = NodeId::from(name.as_str());
                    if !kinds.contains_key(&id) {
                        return Err(ModelIoError::UnresolvedReference(format!(
                            "dist parameter `{s}` of `{node}` produces `{name}`, which is not a node"
                        )));
                    }
                    if !parents.contains(&id) {
                        return Err(ModelIoError::UnresolvedReference(format!(
                            "dist parameter `{s}` of `{node}` names `{name}`, which is not one of its parents"
                        )));
                    }
                }
            } else {
                let id = NodeId::from(s.as_str());
                if kinds.contains_key(&id) && !parents.contains(&id) {
                    return Err(ModelIoError::UnresolvedReference(format!(
                        "dist parameter of `{node}` names `{s}`, which is not one of its parents"
                    )));
                }
            }
        }
        serde_json::Value::Array(items) => {
            for item in items {
                check_param_refs(item, ctx, ranges, kinds, parents, node)?;
            }
        }
        serde_json::Value::Object(map) => {
            for item in map.values() {
                check_param_refs(item, ctx, ranges, kinds, parents, node)?;
            }
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{figure1_dag, surrogate_model};

    fn bundled(name: &str) -> String {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models");
        std::fs::read_to_string(format!("{path}/{name}")).expect("bundled model file")
    }

    #[test]
    fn appendix_b_flattens_to_the_surrogate_model() {
        let spec = parse_model(&bundled("appendix_b.json")).unwrap();
        let flat = flatten(&spec).unwrap();
        assert_eq!(flat.dag.node_count(), 4);
        assert_eq!(flat.dag.edge_count(), 3);
        let model = flat.require_discrete().unwrap();

        let reference = surrogate_model();
        for (assignment, p) in reference.joint_enumeration() {
            let q = model.joint_probability(&assignment).unwrap();
            assert!((p - q).abs() < 1e-15, "joint mismatch at {assignment:?}");
        }
        assert_eq!(flat.data.len(), 2);
        assert_eq!(flat.data[&NodeId::from("Z")], 0);
        assert_eq!(flat.reliability.labels(), ["A", "B"]);
    }

    #[test]
    fn figure1_flattens_to_the_reference_dag() {
        let spec = parse_model(&bundled("figure1.json")).unwrap();
        let flat = flatten(&spec).unwrap();
        let reference = figure1_dag(4, 6);
        assert_eq!(flat.dag.node_count(), reference.node_count());
        assert_eq!(flat.dag.edge_count(), reference.edge_count());
        for (id, kind) in reference.nodes() {
            assert_eq!(flat.dag.kind(id).unwrap(), kind);
            assert_eq!(
                flat.dag.parents_of(id).unwrap(),
                reference.parents_of(id).unwrap(),
                "parents of {id}"
            );
        }
        assert_eq!(flat.partition["main"].len(), 12);
        assert_eq!(flat.partition["validation"].len(), 6);
        assert_eq!(flat.within_cuts.len(), 1);
        assert_eq!(flat.within_cuts[0].prior_only_params.len(), 4);
        assert!(flat.discrete.is_some());
        assert_eq!(flat.data.len(), 18);
    }

    #[test]
    fn salmonella_counts_and_parent_structure() {
        let spec = parse_model(&bundled("salmonella.json")).unwrap();
        let flat = flatten(&spec).unwrap();
        assert_eq!(flat.dag.node_count(), 39);
        assert_eq!(flat.dag.edge_count(), 54);
        let c = NodeId::from("C_2_1");
        let parents = flat.dag.parents_of(&c).unwrap();
        let expected: NodeSet = ["r_1_2_1", "r_2_2_1", "L_1_1", "L_2_1", "a_1", "a_2", "q_2"]
            .into_iter()
            .map(NodeId::from)
            .collect();
        assert_eq!(parents, &expected);
        assert!(flat.discrete.is_none());
        let note = flat.execution_note.as_deref().unwrap();
        assert!(note.contains("family"), "note: {note}");
        assert_eq!(flat.within_cuts[0].module, "surveillance");
        assert_eq!(flat.within_cuts[0].prior_only_params.len(), 4);
    }

    #[test]
    fn longitudinal_chain_wiring_and_blocks() {
        let spec = parse_model(&bundled("longitudinal.json")).unwrap();
        let flat = flatten(&spec).unwrap();
        assert_eq!(flat.dag.node_count(), 18);
        let x3 = NodeId::from("X_3");
        let expected: NodeSet = ["a_3", "theta_3", "theta_2"]
            .into_iter()
            .map(NodeId::from)
            .collect();
        assert_eq!(flat.dag.parents_of(&x3).unwrap(), &expected);
        let x1 = NodeId::from("X_1");
        assert_eq!(flat.dag.parents_of(&x1).unwrap().len(), 2);
        assert_eq!(flat.partition.len(), 6);
        assert_eq!(flat.reliability.labels().len(), 6);
    }

    #[test]
    fn bundled_files_round_trip_and_flatten_deterministically() {
        for name in [
            "appendix_b.json",
            "figure1.json",
            "salmonella.json",
            "longitudinal.json",
        ] {
            let text = bundled(name);
            let spec = parse_model(&text).unwrap();
            let rendered = to_json_string(&spec);
            let reparsed = parse_model(&rendered).unwrap();
            assert_eq!(spec, reparsed, "round trip of {name}");

            let a = flatten(&spec).unwrap();
            let b = flatten(&reparsed).unwrap();
            assert_eq!(a.dag.to_dot(), b.dag.to_dot(), "flatten determinism of {name}");
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_model("{ \"schema\": 1,").unwrap_err();
        match err {
            ModelIoError::SyntaxError(msg) => assert!(msg.contains("line 1"), "{msg}"),
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn schema_errors_carry_path() {
        let text = r#"{
            "schema": 1,
            "name": "bad",
            "nodes": [{ "name": "x", "kind": "widget" }],
            "partition": {},
            "reliability": []
        }"#;
        let err = parse_model(text).unwrap_err();
        match err {
            ModelIoError::SchemaViolation(msg) => {
                assert!(msg.contains("nodes[0].kind"), "{msg}")
            }
            other => panic!("expected schema violation, got {other}"),
        }
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let text = r#"{
            "schema": 7,
            "name": "future",
            "nodes": [{ "name": "x", "kind": "observable" }],
            "partition": { "A": ["x"] },
            "reliability": ["A"]
        }"#;
        let err = parse_model(text).unwrap_err();
        assert!(matches!(err, ModelIoError::SchemaViolation(_)), "{err}");
    }

    fn base_spec(extra_edit: impl FnOnce(&mut ModelSpec)) -> ModelSpec {
        let text = r#"{
            "schema": 1,
            "name": "tiny",
            "plates": { "i": { "from": 1, "to": 2 } },
            "nodes": [
                { "name": "mu", "kind": "parameter" },
                { "name": "x_{i}", "kind": "observable" }
            ],
            "edges": [{ "from": "mu", "to": "x_{i}" }],
            "partition": { "A": ["x_{i}"] },
            "reliability": ["A"]
        }"#;
        let mut spec = parse_model(text).unwrap();
        extra_edit(&mut spec);
        spec
    }

    #[test]
    fn plate_expansion_produces_indexed_names() {
        let flat = flatten(&base_spec(|_| {})).unwrap();
        assert!(flat.dag.contains(&NodeId::from("x_1")));
        assert!(flat.dag.contains(&NodeId::from("x_2")));
        assert_eq!(flat.dag.parents_of(&NodeId::from("x_2")).unwrap().len(), 1);
        assert!(flat.discrete.is_none());
        assert!(flat
            .execution_note
            .as_deref()
            .unwrap()
            .contains("no distribution annotation"));
    }

    #[test]
    fn undeclared_plate_is_a_plate_bound_error() {
        let spec = base_spec(|s| s.nodes[1].name = "x_{j}".into());
        let err = flatten(&spec).unwrap_err();
        assert!(matches!(err, ModelIoError::PlateBoundError(_)), "{err}");
    }

    #[test]
    fn edge_to_missing_node_is_unresolved() {
        let spec = base_spec(|s| s.edges[0].to = "y_{i}".into());
        let err = flatten(&spec).unwrap_err();
        assert!(matches!(err, ModelIoError::UnresolvedReference(_)), "{err}");
    }

    #[test]
    fn partition_must_cover_all_observables() {
        let spec = base_spec(|s| {
            s.partition.insert("A".into(), vec!["x_1".into()]);
        });
        let err = flatten(&spec).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x_2"), "{msg}");
    }

    #[test]
    fn partition_blocks_must_not_overlap() {
        let spec = base_spec(|s| {
            s.partition.insert("A".into(), vec!["x_1".into()]);
            s.partition.insert("B".into(), vec!["x_{i}".into()]);
            s.reliability = vec!["A".into(), "B".into()];
        });
        let err = flatten(&spec).unwrap_err();
        assert!(err.to_string().contains("appears in blocks"), "{err}");
    }

    #[test]
    fn partition_rejects_parameters() {
        let spec = base_spec(|s| {
            s.partition.insert("A".into(), vec!["x_{i}".into(), "mu".into()]);
        });
        let err = flatten(&spec).unwrap_err();
        assert!(err.to_string().contains("parameter `mu`"), "{err}");
    }

    #[test]
    fn reliability_must_rank_every_block() {
        let text = r#"{
            "schema": 1,
            "name": "tiny",
            "nodes": [{ "name": "x", "kind": "observable" }],
            "partition": { "A": ["x"] },
            "reliability": []
        }"#;
        let err = parse_model(text).unwrap_err();
        assert!(err.to_string().contains("missing from the reliability"), "{err}");
    }

    #[test]
    fn within_cut_rejects_observables() {
        let spec = base_spec(|s| {
            s.within_cuts.push(WithinCutTemplate {
                module: "A".into(),
                prior_only: vec!["x_1".into()],
            });
        });
        let err = flatten(&spec).unwrap_err();
        assert!(err.to_string().contains("only parameters"), "{err}");
    }

    #[test]
    fn data_state_out_of_range_is_rejected() {
        let text = r#"{
            "schema": 1,
            "name": "tiny",
            "nodes": [
                { "name": "x", "kind": "observable",
                  "dist": { "family": "categorical", "params": { "states": 2, "table": [0.5, 0.5] } } }
            ],
            "partition": { "A": ["x"] },
            "reliability": ["A"],
            "data": { "x": 5 }
        }"#;
        let spec = parse_model(text).unwrap();
        let err = flatten(&spec).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn dist_reference_must_name_a_parent() {
        let text = r#"{
            "schema": 1,
            "name": "tiny",
            "nodes": [
                { "name": "mu", "kind": "parameter" },
                { "name": "nu", "kind": "parameter" },
                { "name": "x", "kind": "observable",
                  "dist": { "family": "normal-linear", "params": { "mean": "nu" } } }
            ],
            "edges": [{ "from": "mu", "to": "x" }],
            "partition": { "A": ["x"] },
            "reliability": ["A"]
        }"#;
        let spec = parse_model(text).unwrap();
        let err = flatten(&spec).unwrap_err();
        assert!(err.to_string().contains("not one of its parents"), "{err}");

        let ok = text.replace("\"mean\": \"nu\"", "\"mean\": \"mu\"");
        let spec = parse_model(&ok).unwrap();
        flatten(&spec).unwrap();
    }

    #[test]
    fn unknown_families_parse_but_refuse_execution() {
        let text = r#"{
            "schema": 1,
            "name": "tiny",
            "nodes": [
                { "name": "x", "kind": "observable",
                  "dist": { "family": "zeta-process", "params": { "order": 3 } } }
            ],
            "partition": { "A": ["x"] },
            "reliability": ["A"]
        }"#;
        let spec = parse_model(text).unwrap();
        let flat = flatten(&spec).unwrap();
        assert!(flat.discrete.is_none());
        let err = flat.require_discrete().unwrap_err();
        assert!(err.to_string().contains("unrecognized family"), "{err}");
    }

    #[test]
    fn offset_pattern_reaching_outside_range_is_unresolved() {
        let text = r#"{
            "schema": 1,
            "name": "chain",
            "plates": { "t": { "from": 1, "to": 3 } },
            "nodes": [
                { "name": "s_{t}", "kind": "parameter" },
                { "name": "x_{t}", "kind": "observable" }
            ],
            "edges": [
                { "from": "s_{t}", "to": "x_{t}" },
                { "from": "s_{t-1}", "to": "x_{t}" }
            ],
            "partition": { "A": ["x_{t}"] },
            "reliability": ["A"]
        }"#;
        let spec = parse_model(text).unwrap();
        let err = flatten(&spec).unwrap_err();
        assert!(err.to_string().contains("s_0"), "{err}");
    }
}
