use serde::Serialize;
use serde_json::{json, Map, Value};

use super::session::{json_type, ToolCall};
use crate::code::{self, MethodKind};
use crate::protocol::{WireFunctionDef, WireTool};
use crate::repo::{RepoError, RepoSnapshot};

pub const FILE_PATH_FINDER: &str = "file_path_finder";
pub const GET_CONTENT_FROM_FILE: &str = "get_content_from_file";
pub const GET_METHODS: &str = "get_methods";
pub const LOAD_INVENTORY: &str = "load_battleship_json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Boolean,
}

impl ParamType {
    fn matches(self, v: &Value) -> bool {
        match self {
            ParamType::String => v.is_string(),
            ParamType::Integer => v.is_i64() || v.is_u64(),
            ParamType::Boolean => v.is_boolean(),
        }
    }

    fn json_name(self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Boolean => "boolean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamType,
    pub description: String,
    pub required: bool,
}

impl ParamSpec {
    pub fn required(name: &str, kind: ParamType, description: &str) -> Self {
        Self {
            name: name.into(),
            kind,
            description: description.into(),
            required: true,
        }
    }

    pub fn optional(name: &str, kind: ParamType, description: &str) -> Self {
        Self {
            required: false,
            ..Self::required(name, kind, description)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
}

impl ToolSpec {
    /// JSON Schema object for the parameters, as sent on the wire.
    pub fn parameter_schema(&self) -> Value {
        let mut properties = Map::new();
        for p in &self.parameters {
            properties.insert(
                p.name.clone(),
                json!({"type": p.kind.json_name(), "description": p.description}),
            );
        }
        let required: Vec<&str> = self
            .parameters
            .iter()
            .filter(|p| p.required)
            .map(|p| p.name.as_str())
            .collect();
        json!({
            "type": "object",
            "properties": properties,
            "required": required,
            "additionalProperties": false,
        })
    }

    pub fn validate(&self, args: &Map<String, Value>) -> Result<(), String> {
        for p in &self.parameters {
            match args.get(&p.name) {
                None | Some(Value::Null) if p.required => {
                    return Err(format!("missing required argument `{}`", p.name));
                }
                None | Some(Value::Null) => {}
                Some(v) if !p.kind.matches(v) => {
                    return Err(format!(
                        "argument `{}` must be {}, got {}",
                        p.name,
                        p.kind.json_name(),
                        json_type(v)
                    ));
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = args.keys().find(|k| !self.parameters.iter().any(|p| &p.name == *k)) {
            return Err(format!("unknown argument `{extra}`"));
        }
        Ok(())
    }

    fn wire(&self) -> WireTool {
        WireTool {
            kind: "function".into(),
            function: WireFunctionDef {
                name: self.name.clone(),
                description: self.description.clone(),
                parameters: self.parameter_schema(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("tool `{0}` is registered twice")]
pub struct DuplicateTool(pub String);

/// Ordered set of tools offered to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolRegistry {
    specs: Vec<ToolSpec>,
}

impl ToolRegistry {
    pub fn new(specs: Vec<ToolSpec>) -> Result<Self, DuplicateTool> {
        for (i, s) in specs.iter().enumerate() {
            if specs[..i].iter().any(|t| t.name == s.name) {
                return Err(DuplicateTool(s.name.clone()));
            }
        }
        Ok(Self { specs })
    }

    /// The three repository tools plus the inventory loader.
    pub fn repository_tools() -> Self {
        let specs = vec![
            ToolSpec {
                name: FILE_PATH_FINDER.into(),
                description: "Searches the repository tree for a Java class. Given a class name, returns the repository path of that class (all paths if the name is ambiguous).".into(),
                parameters: vec![ParamSpec::required(
                    "class_name",
                    ParamType::String,
                    "Simple class name without package or extension, e.g. Menu",
                )],
            },
            ToolSpec {
                name: GET_CONTENT_FROM_FILE.into(),
                description: "Retrieves and decodes the content of a repository file with any leading license header removed. If method_name is given, returns only the source of that method's declarations.".into(),
                parameters: vec![
                    ParamSpec::required("path", ParamType::String, "Repository path as returned by file_path_finder"),
                    ParamSpec::optional("method_name", ParamType::String, "Restrict the result to declarations of this method"),
                ],
            },
            ToolSpec {
                name: GET_METHODS.into(),
                description: "Lists the methods and constructors declared in a Java file, including nested and anonymous classes, with signatures and line ranges.".into(),
                parameters: vec![ParamSpec::required("path", ParamType::String, "Repository path of a .java file")],
            },
            ToolSpec {
                name: LOAD_INVENTORY.into(),
                description: "Loads the repository's class inventory (class name to paths). Call once at the start of the session; subsequent calls are disabled.".into(),
                parameters: vec![],
            },
        ];
        Self::new(specs).expect("built-in tool names are unique")
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn specs(&self) -> &[ToolSpec] {
        &self.specs
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn wire_tools(&self) -> Vec<WireTool> {
        self.specs.iter().map(ToolSpec::wire).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    NotFound(String),
    #[error("invalid arguments for `{tool}`: {reason}")]
    Validation { tool: String, reason: String },
    #[error("inventory already loaded")]
    InventoryAlreadyLoaded,
    #[error("{tool} failed: {source}")]
    Repository { tool: String, source: RepoError },
    #[error("{tool} failed: {message}")]
    Execution { tool: String, message: String },
}

impl ToolError {
    pub fn kind(&self) -> &'static str {
        match self {
            ToolError::NotFound(_) => "tool_not_found",
            ToolError::Validation { .. } => "validation",
            ToolError::InventoryAlreadyLoaded => "disabled",
            ToolError::Repository { .. } | ToolError::Execution { .. } => "execution",
        }
    }

    /// Failures of the repository provider itself, as opposed to bad requests.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            ToolError::Repository {
                source: RepoError::ProviderUnavailable(_)
                    | RepoError::RefNotFound(_)
                    | RepoError::FileNotFound(_)
                    | RepoError::DecodeError { .. },
                ..
            }
        )
    }
}

pub fn ok_envelope(result: &Value) -> String {
    json!({"ok": true, "result": result}).to_string()
}

pub fn error_envelope(error: &ToolError) -> String {
    json!({"ok": false, "error": {"kind": error.kind(), "message": error.to_string()}}).to_string()
}

/// Validates and runs one call. `inventory_loaded` is flipped by the first
/// successful inventory load.
pub fn execute(
    registry: &ToolRegistry,
    repo: &RepoSnapshot,
    inventory_loaded: &mut bool,
    call: &ToolCall,
) -> Result<Value, ToolError> {
    let spec = registry
        .get(&call.tool_name)
        .ok_or_else(|| ToolError::NotFound(call.tool_name.clone()))?;
    let invalid = |reason: String| ToolError::Validation {
        tool: call.tool_name.clone(),
        reason,
    };
    let args = call.parsed_arguments().map_err(invalid)?;
    spec.validate(&args).map_err(invalid)?;
    let repo_err = |source: RepoError| ToolError::Repository {
        tool: call.tool_name.clone(),
        source,
    };
    let text_arg = |name: &str| args.get(name).and_then(Value::as_str).map(str::to_string);

    match call.tool_name.as_str() {
        FILE_PATH_FINDER => {
            let class_name = text_arg("class_name").unwrap_or_default();
            let paths = repo.find_class_path(&class_name).map_err(repo_err)?;
            Ok(json!({"class_name": class_name, "paths": paths}))
        }
        GET_CONTENT_FROM_FILE => {
            let path = text_arg("path").unwrap_or_default();
            let file = repo.fetch_file(&path).map_err(repo_err)?;
            let is_java = file.path.ends_with(".java");
            match text_arg("method_name") {
                None => {
                    let content = if is_java {
                        code::strip_header(&file.text)
                    } else {
                        &file.text
                    };
                    Ok(json!({"path": file.path, "sha256": file.sha256, "content": content}))
                }
                Some(method) => {
                    let snippets =
                        code::extract_method(&file.path, &file.text, &method).map_err(|e| ToolError::Execution {
                            tool: call.tool_name.clone(),
                            message: format!("{}: {e}", file.path),
                        })?;
                    let snippets: Vec<Value> = snippets
                        .iter()
                        .map(|s| {
                            json!({
                                "signature": s.method.signature,
                                "start_line": s.method.start_line,
                                "end_line": s.method.end_line,
                                "text": s.text,
                            })
                        })
                        .collect();
                    Ok(json!({"path": file.path, "method_name": method, "snippets": snippets}))
                }
            }
        }
        GET_METHODS => {
            let path = text_arg("path").unwrap_or_default();
            let file = repo.fetch_file(&path).map_err(repo_err)?;
            let methods = code::enumerate_methods(&file.text).map_err(|e| ToolError::Execution {
                tool: call.tool_name.clone(),
                message: format!("{}: {e}", file.path),
            })?;
            let methods: Vec<Value> = methods
                .iter()
                .map(|m| {
                    json!({
                        "name": m.name,
                        "kind": match m.kind { MethodKind::Method => "method", MethodKind::Constructor => "constructor" },
                        "signature": m.signature,
                        "start_line": m.start_line,
                        "end_line": m.end_line,
                    })
                })
                .collect();
            Ok(json!({"path": file.path, "methods": methods}))
        }
        LOAD_INVENTORY => {
            if *inventory_loaded {
                return Err(ToolError::InventoryAlreadyLoaded);
            }
            let inventory = repo.load_class_inventory().map_err(repo_err)?;
            *inventory_loaded = true;
            Ok(json!({
                "ref": inventory.snapshot_ref,
                "class_count": inventory.class_count(),
                "classes": inventory.entries,
            }))
        }
        other => Err(ToolError::Execution {
            tool: other.to_string(),
            message: "no handler is bound to this tool".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_repo() -> RepoSnapshot {
        RepoSnapshot::local(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/repo"), "main")
    }

    fn call(tool: &str, args: Value) -> ToolCall {
        ToolCall::new("c1", tool, &args)
    }

    #[test]
    fn schema_lists_required_parameters() {
        let registry = ToolRegistry::repository_tools();
        let schema = registry.get(GET_CONTENT_FROM_FILE).unwrap().parameter_schema();
        assert_eq!(schema["required"], json!(["path"]));
        assert_eq!(schema["properties"]["method_name"]["type"], "string");
        assert_eq!(
            registry.names(),
            vec![FILE_PATH_FINDER, GET_CONTENT_FROM_FILE, GET_METHODS, LOAD_INVENTORY]
        );
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let spec = ToolRegistry::repository_tools().specs()[0].clone();
        assert!(ToolRegistry::new(vec![spec.clone(), spec]).is_err());
    }

    #[test]
    fn validation_errors() {
        let registry = ToolRegistry::repository_tools();
        let repo = fixture_repo();
        let mut loaded = false;
        let err = execute(&registry, &repo, &mut loaded, &call(FILE_PATH_FINDER, json!({}))).unwrap_err();
        assert!(matches!(err, ToolError::Validation { .. }), "{err}");
        let err = execute(
            &registry,
            &repo,
            &mut loaded,
            &call(FILE_PATH_FINDER, json!({"class_name": 3})),
        )
        .unwrap_err();
        assert!(err.to_string().contains("must be string"));
        let err = execute(
            &registry,
            &repo,
            &mut loaded,
            &call(FILE_PATH_FINDER, json!({"class_name": "Menu", "x": 1})),
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown argument"));
        let err = execute(&registry, &repo, &mut loaded, &call("rm_rf", json!({}))).unwrap_err();
        assert!(matches!(err, ToolError::NotFound(name) if name == "rm_rf"));
    }

    #[test]
    fn inventory_loads_once() {
        let registry = ToolRegistry::repository_tools();
        let repo = fixture_repo();
        let mut loaded = false;
        let first = execute(&registry, &repo, &mut loaded, &call(LOAD_INVENTORY, json!({}))).unwrap();
        assert!(loaded);
        assert_eq!(first["classes"]["Menu"], json!(["src/pp/battleship/Menu.java"]));
        let second = execute(&registry, &repo, &mut loaded, &call(LOAD_INVENTORY, json!({}))).unwrap_err();
        assert_eq!(second.to_string(), "inventory already loaded");
        assert!(error_envelope(&second).contains("inventory already loaded"));
    }

    #[test]
    fn content_is_header_stripped_and_methods_confirmed() {
        let registry = ToolRegistry::repository_tools();
        let repo = fixture_repo();
        let mut loaded = false;
        let out = execute(
            &registry,
            &repo,
            &mut loaded,
            &call(
                GET_CONTENT_FROM_FILE,
                json!({"path": "src/pp/battleship/AudioSettings.java"}),
            ),
        )
        .unwrap();
        assert!(out["content"].as_str().unwrap().starts_with("package "));

        let out = execute(
            &registry,
            &repo,
            &mut loaded,
            &call(
                GET_CONTENT_FROM_FILE,
                json!({"path": "src/pp/battleship/Menu.java", "method_name": "toggleSound"}),
            ),
        )
        .unwrap();
        assert_eq!(out["snippets"].as_array().unwrap().len(), 1);

        let out = execute(
            &registry,
            &repo,
            &mut loaded,
            &call(GET_METHODS, json!({"path": "src/pp/battleship/Menu.java"})),
        )
        .unwrap();
        assert_eq!(out["methods"].as_array().unwrap().len(), 6);
        assert_eq!(out["methods"][0]["kind"], "constructor");

        let err = execute(
            &registry,
            &repo,
            &mut loaded,
            &call(GET_METHODS, json!({"path": "src/pp/Missing.java"})),
        )
        .unwrap_err();
        assert!(err.is_backend_failure());
    }
}
