//! Skill composition and DAG compilation.
//!
//! Sequential composition feeds each child's output into the next child.
//! Parallel composition runs every child on the same input snapshot and
//! merges the outputs left to right, later children winning on key
//! conflicts. [`compile_graph`] turns an acyclic graph of skills into a
//! single skill by partitioning it into topological levels: members of a
//! level compose in parallel, levels compose in sequence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::skill::{execute_skill, KeySet, Skill, SkillError, SkillRef};
use crate::value::Context;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ComposeError {
    #[error("incompatible interface: {detail} ({})", keys.join(", "))]
    IncompatibleInterface { keys: Vec<String>, detail: String },
    #[error("a composite needs at least 2 children, got {0}")]
    TooFewChildren(usize),
    #[error("cycle detected: {}", nodes.join(" -> "))]
    Cycle { nodes: Vec<String> },
    #[error("edge {from} -> {to} references unknown node `{missing}`")]
    DanglingEdge {
        from: String,
        to: String,
        missing: String,
    },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("node `{node}`: {message}")]
    Node { node: String, message: String },
    #[error("invalid graph document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    Seq,
    Par,
}

impl Operator {
    fn separator(self) -> &'static str {
        match self {
            Operator::Seq => ">",
            Operator::Par => "|",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Operator::Seq => "seq",
            Operator::Par => "par",
        }
    }
}

/// Result of `seq` or `par`.
pub struct CompositeSkill {
    operator: Operator,
    children: Vec<SkillRef>,
    name: String,
    description: String,
    requires_llm: bool,
    input_keys: KeySet,
    output_keys: KeySet,
}

impl fmt::Debug for CompositeSkill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expression())
    }
}

impl CompositeSkill {
    pub fn operator(&self) -> Operator {
        self.operator
    }

    pub fn children(&self) -> &[SkillRef] {
        &self.children
    }

    pub fn into_ref(self) -> SkillRef {
        Arc::new(self)
    }

    fn assemble(
        operator: Operator,
        children: Vec<SkillRef>,
        input_keys: KeySet,
        output_keys: KeySet,
    ) -> Self {
        let names: Vec<&str> = children.iter().map(|c| c.name()).collect();
        let name = names.join(operator.separator());
        let description = match operator {
            Operator::Seq => format!("Runs {} in sequence", names.join(", ")),
            Operator::Par => format!("Runs {} on the same input and merges", names.join(", ")),
        };
        Self {
            requires_llm: children.iter().any(|c| c.requires_llm()),
            operator,
            children,
            name,
            description,
            input_keys,
            output_keys,
        }
    }
}

impl Skill for CompositeSkill {
    fn name(&self) -> &str {
        &self.name
    }

    fn description(&self) -> &str {
        &self.description
    }

    fn requires_llm(&self) -> bool {
        self.requires_llm
    }

    fn input_keys(&self) -> &KeySet {
        &self.input_keys
    }

    fn output_keys(&self) -> &KeySet {
        &self.output_keys
    }

    fn execute(
        &self,
        context: &Context,
        llm: Option<&dyn Backend>,
    ) -> Result<Context, SkillError> {
        match self.operator {
            Operator::Seq => {
                let mut current = execute_skill(self.children[0].as_ref(), context, llm)?;
                for child in &self.children[1..] {
                    current = execute_skill(child.as_ref(), &current, llm)?;
                }
                Ok(current)
            }
            Operator::Par => {
                let mut merged = Context::new();
                for child in &self.children {
                    let out = execute_skill(child.as_ref(), context, llm)?;
                    merged = merged.merged(&out);
                }
                Ok(merged)
            }
        }
    }

    fn expression(&self) -> String {
        let parts: Vec<String> = self.children.iter().map(|c| c.expression()).collect();
        format!("{}({})", self.operator.label(), parts.join(", "))
    }
}

/// Sequential composition of two skills.
pub fn seq(a: SkillRef, b: SkillRef) -> Result<CompositeSkill, ComposeError> {
    seq_all(vec![a, b])
}

/// Sequential composition of two or more skills.
///
/// Each child's required keys must be covered by the first child's inputs
/// or by outputs of earlier children.
pub fn seq_all(children: Vec<SkillRef>) -> Result<CompositeSkill, ComposeError> {
    if children.len() < 2 {
        return Err(ComposeError::TooFewChildren(children.len()));
    }
    let input_keys = children[0].input_keys().clone();
    let mut guaranteed: KeySet = input_keys.clone();
    let mut output_keys = KeySet::new();
    for (i, child) in children.iter().enumerate() {
        let unsatisfied: Vec<String> = child
            .input_keys()
            .difference(&guaranteed)
            .cloned()
            .collect();
        if !unsatisfied.is_empty() {
            return Err(ComposeError::IncompatibleInterface {
                keys: unsatisfied,
                detail: format!(
                    "`{}` requires keys not provided upstream{}",
                    child.name(),
                    if i > 0 { "" } else { " (first child)" }
                ),
            });
        }
        guaranteed.extend(child.output_keys().iter().cloned());
        output_keys.extend(child.output_keys().iter().cloned());
    }
    Ok(CompositeSkill::assemble(
        Operator::Seq,
        children,
        input_keys,
        output_keys,
    ))
}

/// Parallel composition of two skills. On key conflicts `b` wins.
pub fn par(a: SkillRef, b: SkillRef) -> Result<CompositeSkill, ComposeError> {
    par_all(vec![a, b])
}

/// Parallel composition; all children must declare identical input keys.
pub fn par_all(children: Vec<SkillRef>) -> Result<CompositeSkill, ComposeError> {
    if children.len() < 2 {
        return Err(ComposeError::TooFewChildren(children.len()));
    }
    let input_keys = children[0].input_keys().clone();
    for child in &children[1..] {
        if child.input_keys() != &input_keys {
            let keys: Vec<String> = child
                .input_keys()
                .symmetric_difference(&input_keys)
                .cloned()
                .collect();
            return Err(ComposeError::IncompatibleInterface {
                keys,
                detail: format!(
                    "`{}` and `{}` declare different input keys",
                    children[0].name(),
                    child.name()
                ),
            });
        }
    }
    let output_keys = children
        .iter()
        .flat_map(|c| c.output_keys().iter().cloned())
        .collect();
    Ok(CompositeSkill::assemble(
        Operator::Par,
        children,
        input_keys,
        output_keys,
    ))
}

/// Topological levels of a graph. Within a level node ids are ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelPlan {
    pub levels: Vec<Vec<String>>,
}

impl LevelPlan {
    pub fn level_of(&self, id: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.iter().any(|n| n == id))
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }
}

/// Levels an abstract topology with Kahn's algorithm.
pub fn level_topology(
    nodes: &BTreeSet<String>,
    edges: &BTreeSet<(String, String)>,
) -> Result<LevelPlan, ComposeError> {
    for (from, to) in edges {
        for end in [from, to] {
            if !nodes.contains(end) {
                return Err(ComposeError::DanglingEdge {
                    from: from.clone(),
                    to: to.clone(),
                    missing: end.clone(),
                });
            }
        }
    }
    let mut in_degree: BTreeMap<&str, usize> = nodes.iter().map(|n| (n.as_str(), 0)).collect();
    let mut successors: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (from, to) in edges {
        *in_degree.get_mut(to.as_str()).expect("checked above") += 1;
        successors.entry(from).or_default().push(to);
    }

    let mut levels = Vec::new();
    let mut frontier: Vec<&str> = in_degree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| *n)
        .collect();
    let mut placed = 0;
    while !frontier.is_empty() {
        frontier.sort_unstable();
        let mut next = Vec::new();
        for node in &frontier {
            for succ in successors.get(node).map(Vec::as_slice).unwrap_or_default() {
                let d = in_degree.get_mut(succ).expect("known node");
                *d -= 1;
                if *d == 0 {
                    next.push(*succ);
                }
            }
        }
        placed += frontier.len();
        levels.push(frontier.iter().map(|s| s.to_string()).collect());
        frontier = next;
    }

    if placed < nodes.len() {
        let remaining: BTreeSet<&str> = in_degree
            .iter()
            .filter(|(_, d)| **d > 0)
            .map(|(n, _)| *n)
            .collect();
        return Err(ComposeError::Cycle {
            nodes: find_cycle(&remaining, edges),
        });
    }
    Ok(LevelPlan { levels })
}

/// Every node left after Kahn's algorithm has a predecessor that is also
/// left, so walking predecessors must revisit a node.
fn find_cycle(remaining: &BTreeSet<&str>, edges: &BTreeSet<(String, String)>) -> Vec<String> {
    let pred = |node: &str| -> &str {
        edges
            .iter()
            .find(|(f, t)| t == node && remaining.contains(f.as_str()))
            .map(|(f, _)| f.as_str())
            .expect("remaining nodes keep a remaining predecessor")
    };
    let start = *remaining.iter().next().expect("cycle is nonempty");
    let mut walk = vec![start];
    let mut seen = BTreeMap::from([(start, 0usize)]);
    loop {
        let p = pred(walk.last().expect("nonempty"));
        if let Some(&idx) = seen.get(p) {
            // The walk runs backwards along edges; reverse it into edge order.
            let mut cycle: Vec<String> = walk[idx..].iter().rev().map(|s| s.to_string()).collect();
            let min = (0..cycle.len()).min_by_key(|&i| &cycle[i]).expect("nonempty");
            cycle.rotate_left(min);
            cycle.push(cycle[0].clone());
            return cycle;
        }
        seen.insert(p, walk.len());
        walk.push(p);
    }
}

/// A directed graph of skills keyed by node id.
#[derive(Default, Clone)]
pub struct PipelineGraph {
    nodes: BTreeMap<String, SkillRef>,
    edges: BTreeSet<(String, String)>,
}

impl fmt::Debug for PipelineGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PipelineGraph")
            .field("nodes", &self.nodes.keys().collect::<Vec<_>>())
            .field("edges", &self.edges)
            .finish()
    }
}

impl PipelineGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: impl Into<String>, skill: SkillRef) -> &mut Self {
        self.nodes.insert(id.into(), skill);
        self
    }

    pub fn add_edge(&mut self, from: impl Into<String>, to: impl Into<String>) -> &mut Self {
        self.edges.insert((from.into(), to.into()));
        self
    }

    pub fn nodes(&self) -> &BTreeMap<String, SkillRef> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(String, String)> {
        &self.edges
    }

    pub fn node_ids(&self) -> BTreeSet<String> {
        self.nodes.keys().cloned().collect()
    }
}

/// Checks the graph is a DAG and returns its level decomposition.
pub fn validate_graph(graph: &PipelineGraph) -> Result<LevelPlan, ComposeError> {
    level_topology(&graph.node_ids(), &graph.edges)
}

/// Compiles a DAG into one skill: each level becomes the parallel
/// composition of its members (in level order), and the levels are composed
/// sequentially. Single-member levels contribute the bare skill.
pub fn compile_graph(graph: &PipelineGraph) -> Result<SkillRef, ComposeError> {
    let plan = validate_graph(graph)?;
    let mut stages: Vec<SkillRef> = Vec::with_capacity(plan.levels.len());
    for level in &plan.levels {
        let members: Vec<SkillRef> = level.iter().map(|id| graph.nodes[id].clone()).collect();
        stages.push(if members.len() == 1 {
            members.into_iter().next().expect("one member")
        } else {
            par_all(members)?.into_ref()
        });
    }
    match stages.len() {
        0 => Err(ComposeError::EmptyGraph),
        1 => Ok(stages.pop().expect("one stage")),
        _ => Ok(seq_all(stages)?.into_ref()),
    }
}

/// JSON interchange form: `{"nodes": {id: skill-name}, "edges": [[from, to], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub nodes: BTreeMap<String, String>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

impl GraphDocument {
    pub fn parse(text: &str) -> Result<Self, ComposeError> {
        serde_json::from_str(text).map_err(|e| ComposeError::Document(e.to_string()))
    }

    pub fn level_plan(&self) -> Result<LevelPlan, ComposeError> {
        let nodes = self.nodes.keys().cloned().collect();
        let edges = self.edges.iter().cloned().collect();
        level_topology(&nodes, &edges)
    }

    /// Builds a graph, resolving each node's skill name with `resolve`.
    pub fn to_graph<F, E>(&self, mut resolve: F) -> Result<PipelineGraph, ComposeError>
    where
        F: FnMut(&str) -> Result<SkillRef, E>,
        E: fmt::Display,
    {
        let mut graph = PipelineGraph::new();
        for (id, skill_name) in &self.nodes {
            let skill = resolve(skill_name).map_err(|e| ComposeError::Node {
                node: id.clone(),
                message: e.to_string(),
            })?;
            graph.add_node(id.clone(), skill);
        }
        for (from, to) in &self.edges {
            graph.add_edge(from.clone(), to.clone());
        }
        Ok(graph)
    }
}
