use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SandboxError;

pub fn is_valid_var_name(name: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_]*$").unwrap())
        .is_match(name)
}

/// Agent-set variables injected into every later command.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvVarStore {
    vars: BTreeMap<String, String>,
}

impl EnvVarStore {
    pub fn set(&mut self, name: &str, value: &str) -> Result<(), SandboxError> {
        if !is_valid_var_name(name) {
            return Err(SandboxError::InvalidName(name.to_string()));
        }
        if value.contains('\0') {
            return Err(SandboxError::InvalidName(format!("{name} (value contains NUL)")));
        }
        self.vars.insert(name.to_string(), value.to_string());
        Ok(())
    }

    pub fn clear(&mut self) {
        self.vars.clear();
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.vars.get(name).map(String::as_str)
    }

    pub fn vars(&self) -> &BTreeMap<String, String> {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}
