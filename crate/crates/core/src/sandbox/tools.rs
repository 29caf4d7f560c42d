use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use serde_json::{json, Map, Value};

use super::{SandboxError, SandboxHandle, ToolResult, MAX_READ_LINES};
use crate::llm::ToolSchema;

pub const GET_FILE: &str = "get_file";
pub const WRITE_FILE: &str = "write_to_file";
pub const LS_COMMAND: &str = "execute_ls_command";
pub const LINUX_COMMAND: &str = "execute_linux_command";
pub const SET_ENV: &str = "set_environment_variable";

pub trait Tool: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    fn schema(&self) -> ToolSchema;
    fn run(&self, sandbox: &SandboxHandle, args: &Map<String, Value>) -> Result<ToolResult, SandboxError>;

    /// Runs the tool and folds errors into a failed result for the agent.
    fn invoke(&self, sandbox: &SandboxHandle, args: &Map<String, Value>) -> ToolResult {
        self.run(sandbox, args).unwrap_or_else(|e| e.into_result(self.name()))
    }
}

fn str_arg<'a>(args: &'a Map<String, Value>, key: &str) -> Result<&'a str, SandboxError> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| SandboxError::Backend(format!("missing string argument `{key}`")))
}

fn usize_arg(args: &Map<String, Value>, key: &str, default: usize) -> Result<usize, SandboxError> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(Value::Number(n)) => n
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| SandboxError::Backend(format!("`{key}` must be a non-negative integer"))),
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map_err(|_| SandboxError::Backend(format!("`{key}` must be a non-negative integer"))),
        Some(_) => Err(SandboxError::Backend(format!("`{key}` must be a non-negative integer"))),
    }
}

fn bool_arg(args: &Map<String, Value>, key: &str) -> bool {
    match args.get(key) {
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) => s.eq_ignore_ascii_case("true"),
        _ => false,
    }
}

#[derive(Debug, Default)]
pub struct GetFile;

impl Tool for GetFile {
    fn name(&self) -> &'static str {
        GET_FILE
    }

    fn schema(&self) -> ToolSchema {
        ToolSchema {
            name: GET_FILE.into(),
            description: format!(
                "Read a text file. Returns at most {MAX_READ_LINES} lines starting at `offset` \
                 (0-based) with a header giving the total line count; call again with a larger \
                 offset to scroll."
            ),
            parameters: json!({
                "type": "object",
                "properties": {
                    "path": {"type": "string", "description": "File path relative to the project root"},
                    "offset": {"type": "integer", "minimum": 0, "default": 0},
                    "count": {"type": "integer", "minimum": 1, "default": MAX_READ_LINES}
                },
                "required": ["path"]
            }),
        }
    }

    fn run(&self, sb: &SandboxHandle, args: &Map<String, Value>) -> Result<ToolResult, SandboxError> {
        sb.get_file(
            str_arg(args, "path")?,
            usize_arg(args, "offset", 0)?,
            usize_arg(args, "count", MAX_READ_LINES)?,
        )
    }
}

#[derive(Debug, Default)]
pub struct WriteToFile;

impl Tool for WriteToFile {
    fn name(&self) -> &'static str {
        WRITE_FILE
    }

    fn schema(&self) -> ToolSchema {
        ToolSchema {
            name: WRITE_FILE.into(),
            description: "Create or overwrite a file with the given content. Parent directories are created.".into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "path": {"type": "string"},
                    "content": {"type": "string"}
                },
                "required": ["path", "content"]
            }),
        }
    }

    fn run(&self, sb: &SandboxHandle, args: &Map<String, Value>) -> Result<ToolResult, SandboxError> {
        sb.write_to_file(str_arg(args, "path")?, str_arg(args, "content")?)
    }
}

#[derive(Debug, Default)]
pub struct ExecuteLs;

impl Tool for ExecuteLs {
    fn name(&self) -> &'static str {
        LS_COMMAND
    }

    fn schema(&self) -> ToolSchema {
        ToolSchema {
            name: LS_COMMAND.into(),
            description: "List a directory. Directories are shown with a trailing slash.".into(),
            parameters: json!({
                "type": "object",
                "properties": {"dir": {"type": "string", "default": "."}},
            }),
        }
    }

    fn run(&self, sb: &SandboxHandle, args: &Map<String, Value>) -> Result<ToolResult, SandboxError> {
        let dir = args.get("dir").and_then(Value::as_str).unwrap_or(".");
        sb.execute_ls(dir)
    }
}

#[derive(Debug, Default)]
pub struct ExecuteLinuxCommand;

impl Tool for ExecuteLinuxCommand {
    fn name(&self) -> &'static str {
        LINUX_COMMAND
    }

    fn schema(&self) -> ToolSchema {
        ToolSchema {
            name: LINUX_COMMAND.into(),
            description: "Run a shell command from the project root in a fresh shell. Foreground \
                          commands time out after 300 seconds. Output goes to separate stdout and \
                          stderr log files; the last 100 lines are returned with the log paths. \
                          Set background=true for servers: the call returns after a few seconds \
                          with the output so far and whether the process is still running."
                .into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "command": {"type": "string"},
                    "background": {"type": "boolean", "default": false}
                },
                "required": ["command"]
            }),
        }
    }

    fn run(&self, sb: &SandboxHandle, args: &Map<String, Value>) -> Result<ToolResult, SandboxError> {
        sb.execute(str_arg(args, "command")?, bool_arg(args, "background"))
    }
}

#[derive(Debug, Default)]
pub struct SetEnvironmentVariable;

impl Tool for SetEnvironmentVariable {
    fn name(&self) -> &'static str {
        SET_ENV
    }

    fn schema(&self) -> ToolSchema {
        ToolSchema {
            name: SET_ENV.into(),
            description: "Set an environment variable for all later commands (each command runs \
                          in its own shell, so `export` does not persist). Pass clear=true to \
                          remove every variable set so far."
                .into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "value": {"type": "string"},
                    "clear": {"type": "boolean", "default": false}
                }
            }),
        }
    }

    fn run(&self, sb: &SandboxHandle, args: &Map<String, Value>) -> Result<ToolResult, SandboxError> {
        if bool_arg(args, "clear") {
            return Ok(sb.clear_env());
        }
        sb.set_env(str_arg(args, "name")?, str_arg(args, "value")?)
    }
}

/// Tools addressable by name; agents receive a subset.
#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Arc<dyn Tool>>,
}

impl ToolRegistry {
    pub fn standard() -> Self {
        let mut r = Self::default();
        r.register(Arc::new(GetFile));
        r.register(Arc::new(WriteToFile));
        r.register(Arc::new(ExecuteLs));
        r.register(Arc::new(ExecuteLinuxCommand));
        r.register(Arc::new(SetEnvironmentVariable));
        r
    }

    pub fn register(&mut self, tool: Arc<dyn Tool>) {
        self.tools.insert(tool.name().to_string(), tool);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Tool>> {
        self.tools.get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.tools.keys().cloned().collect()
    }

    pub fn schemas(&self, names: &[&str]) -> Vec<ToolSchema> {
        names.iter().filter_map(|n| self.get(n)).map(|t| t.schema()).collect()
    }
}
