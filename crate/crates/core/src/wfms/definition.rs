use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::guard::Guard;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Manual,
    Automatic,
    DecisionSupport,
    Prescription,
}

impl TaskKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "manual" => Some(TaskKind::Manual),
            "automatic" => Some(TaskKind::Automatic),
            "decision-support" => Some(TaskKind::DecisionSupport),
            "prescription" => Some(TaskKind::Prescription),
            _ => None,
        }
    }

    /// Kinds that are served by the mediation infrastructure.
    pub fn needs_connector(self) -> bool {
        matches!(self, TaskKind::DecisionSupport | TaskKind::Prescription)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarType {
    String,
    Number,
    Boolean,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableDecl {
    pub name: String,
    #[serde(rename = "type")]
    pub var_type: VarType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDef {
    pub task_id: String,
    pub name: String,
    pub performer_role: String,
    pub kind: TaskKind,
    /// Interface 3 binding name, automatic tasks only.
    pub application: Option<String>,
    /// Variable holding the prescription lines, for connector-backed tasks.
    pub input: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from_task: String,
    pub to_task: String,
    pub guard: Option<Guard>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDefinition {
    pub def_id: String,
    pub version: u32,
    pub name: String,
    pub variables: Vec<VariableDecl>,
    pub tasks: Vec<TaskDef>,
    pub transitions: Vec<Transition>,
    pub start_task: String,
    pub end_tasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DefinitionError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("graph error: {0}")]
    Graph(String),
}

impl DefinitionError {
    pub fn code(&self) -> &'static str {
        match self {
            DefinitionError::Schema(_) => "SchemaError",
            DefinitionError::Graph(_) => "GraphError",
        }
    }
}

fn schema(msg: impl Into<String>) -> DefinitionError {
    DefinitionError::Schema(msg.into())
}

fn graph(msg: impl Into<String>) -> DefinitionError {
    DefinitionError::Graph(msg.into())
}

fn attrs(node: roxmltree::Node<'_, '_>, allowed: &[&str]) -> Result<BTreeMap<String, String>, DefinitionError> {
    let mut out = BTreeMap::new();
    for a in node.attributes() {
        if !allowed.contains(&a.name()) {
            return Err(schema(format!("unknown attribute `{}` on <{}>", a.name(), node.tag_name().name())));
        }
        out.insert(a.name().to_string(), a.value().to_string());
    }
    Ok(out)
}

fn required(map: &BTreeMap<String, String>, key: &str, element: &str) -> Result<String, DefinitionError> {
    map.get(key)
        .filter(|v| !v.trim().is_empty())
        .cloned()
        .ok_or_else(|| schema(format!("<{element}> needs `{key}`")))
}

fn element_children<'a, 'i>(node: roxmltree::Node<'a, 'i>) -> Result<Vec<roxmltree::Node<'a, 'i>>, DefinitionError> {
    let mut out = Vec::new();
    for child in node.children() {
        if child.is_element() {
            out.push(child);
        } else if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
            return Err(schema(format!("unexpected text inside <{}>", node.tag_name().name())));
        }
    }
    Ok(out)
}

impl ProcessDefinition {
    pub fn from_xml(document: &str) -> Result<Self, DefinitionError> {
        let doc = roxmltree::Document::parse(document).map_err(|e| schema(format!("malformed XML: {e}")))?;
        let root = doc.root_element();
        if root.tag_name().name() != "process" {
            return Err(schema(format!("root element must be <process>, found <{}>", root.tag_name().name())));
        }
        let a = attrs(root, &["id", "version", "name", "start"])?;
        let def_id = required(&a, "id", "process")?;
        let version = required(&a, "version", "process")?
            .parse::<u32>()
            .map_err(|_| schema("version must be a non-negative integer"))?;
        let start_task = required(&a, "start", "process")?;
        let name = a.get("name").cloned().unwrap_or_else(|| def_id.clone());

        let mut def = ProcessDefinition {
            def_id,
            version,
            name,
            variables: Vec::new(),
            tasks: Vec::new(),
            transitions: Vec::new(),
            start_task,
            end_tasks: Vec::new(),
        };
        for child in element_children(root)? {
            match child.tag_name().name() {
                "variable" => {
                    let a = attrs(child, &["name", "type"])?;
                    let var_type = match a.get("type").map(String::as_str).unwrap_or("string") {
                        "string" => VarType::String,
                        "number" => VarType::Number,
                        "boolean" => VarType::Boolean,
                        "json" => VarType::Json,
                        other => return Err(schema(format!("unknown variable type `{other}`"))),
                    };
                    def.variables.push(VariableDecl {
                        name: required(&a, "name", "variable")?,
                        var_type,
                    });
                    if !element_children(child)?.is_empty() {
                        return Err(schema("<variable> takes no children"));
                    }
                }
                "task" => {
                    let a = attrs(child, &["id", "name", "performer", "kind", "application", "input", "end"])?;
                    let task_id = required(&a, "id", "task")?;
                    let kind_text = required(&a, "kind", "task")?;
                    let kind = TaskKind::parse(&kind_text).ok_or_else(|| schema(format!("unknown task kind `{kind_text}`")))?;
                    let application = a.get("application").cloned();
                    if kind == TaskKind::Automatic && application.is_none() {
                        return Err(schema(format!("automatic task {task_id} needs an application")));
                    }
                    match a.get("end").map(String::as_str) {
                        None | Some("false") => {}
                        Some("true") => def.end_tasks.push(task_id.clone()),
                        Some(other) => return Err(schema(format!("end must be true or false, found `{other}`"))),
                    }
                    if !element_children(child)?.is_empty() {
                        return Err(schema("<task> takes no children"));
                    }
                    def.tasks.push(TaskDef {
                        name: a.get("name").cloned().unwrap_or_else(|| task_id.clone()),
                        performer_role: required(&a, "performer", "task")?,
                        task_id,
                        kind,
                        application,
                        input: a.get("input").cloned(),
                    });
                }
                "transition" => {
                    let a = attrs(child, &["from", "to"])?;
                    let mut guard = None;
                    for g in element_children(child)? {
                        if g.tag_name().name() != "guard" || guard.is_some() {
                            return Err(schema("<transition> takes at most one <guard>"));
                        }
                        attrs(g, &[])?;
                        let text = g.text().unwrap_or("");
                        guard = Some(Guard::parse(text).map_err(|e| schema(e.to_string()))?);
                    }
                    def.transitions.push(Transition {
                        from_task: required(&a, "from", "transition")?,
                        to_task: required(&a, "to", "transition")?,
                        guard,
                    });
                }
                other => return Err(schema(format!("unknown element <{other}>"))),
            }
        }
        def.validate()?;
        Ok(def)
    }

    /// Checks the structural invariants. Called by [`Self::from_xml`].
    pub fn validate(&self) -> Result<(), DefinitionError> {
        let mut ids = BTreeSet::new();
        for t in &self.tasks {
            if !ids.insert(t.task_id.as_str()) {
                return Err(schema(format!("duplicate task_id {}", t.task_id)));
            }
        }
        if self.tasks.is_empty() {
            return Err(schema("process declares no tasks"));
        }
        let mut vars = BTreeSet::new();
        for v in &self.variables {
            if !vars.insert(v.name.as_str()) {
                return Err(schema(format!("duplicate variable {}", v.name)));
            }
        }
        if !ids.contains(self.start_task.as_str()) {
            return Err(graph(format!("start task {} is not declared", self.start_task)));
        }
        if self.end_tasks.is_empty() {
            return Err(graph("no end task"));
        }
        let mut out_edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for tr in &self.transitions {
            for end in [&tr.from_task, &tr.to_task] {
                if !ids.contains(end.as_str()) {
                    return Err(graph(format!("transition {} -> {} names undeclared task {end}", tr.from_task, tr.to_task)));
                }
            }
            if let Some(g) = &tr.guard {
                if let Some(v) = g.variables().into_iter().find(|v| !vars.contains(v.as_str())) {
                    return Err(schema(format!("guard `{g}` reads undeclared variable {v}")));
                }
            }
            out_edges.entry(tr.from_task.as_str()).or_default().push(tr.to_task.as_str());
        }
        for t in &self.tasks {
            let is_end = self.end_tasks.contains(&t.task_id);
            let has_out = out_edges.contains_key(t.task_id.as_str());
            if is_end && has_out {
                return Err(graph(format!("end task {} has an outgoing transition", t.task_id)));
            }
            if !is_end && !has_out {
                return Err(graph(format!("task {} is a dead end but not an end task", t.task_id)));
            }
        }
        let mut seen = BTreeSet::from([self.start_task.as_str()]);
        let mut queue = VecDeque::from([self.start_task.as_str()]);
        while let Some(t) = queue.pop_front() {
            for next in out_edges.get(t).into_iter().flatten() {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        if let Some(t) = self.tasks.iter().find(|t| !seen.contains(t.task_id.as_str())) {
            return Err(graph(format!("task {} is unreachable from {}", t.task_id, self.start_task)));
        }
        if let Some(t) = find_cycle(&ids, &out_edges) {
            return Err(graph(format!("cycle through task {t}")));
        }
        Ok(())
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskDef> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn outgoing<'d>(&'d self, task_id: &'d str) -> impl Iterator<Item = &'d Transition> + 'd {
        self.transitions.iter().filter(move |t| t.from_task == task_id)
    }

    pub fn is_end(&self, task_id: &str) -> bool {
        self.end_tasks.iter().any(|t| t == task_id)
    }

    pub fn connector_task_count(&self) -> usize {
        self.tasks.iter().filter(|t| t.kind.needs_connector()).count()
    }
}

fn find_cycle<'a>(ids: &BTreeSet<&'a str>, edges: &BTreeMap<&'a str, Vec<&'a str>>) -> Option<&'a str> {
    // Kahn's algorithm; whatever is left over sits on or behind a cycle.
    let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|i| (*i, 0)).collect();
    for targets in edges.values() {
        for t in targets {
            *indegree.get_mut(t).expect("validated") += 1;
        }
    }
    let mut queue: VecDeque<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut removed = 0;
    while let Some(n) = queue.pop_front() {
        removed += 1;
        for t in edges.get(n).into_iter().flatten() {
            let d = indegree.get_mut(t).expect("validated");
            *d -= 1;
            if *d == 0 {
                queue.push_back(t);
            }
        }
    }
    if removed == ids.len() {
        None
    } else {
        indegree.into_iter().find(|(_, d)| *d > 0).map(|(k, _)| k)
    }
}
