//! Structured final answers: schema description, lenient JSON extraction and validation.

use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Text,
    Bool,
    Number,
    TextList,
    Choice(&'static [&'static str]),
    ObjectList(Vec<FieldSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: &'static str,
    pub kind: FieldKind,
    pub required: bool,
    pub description: &'static str,
}

impl FieldSpec {
    pub fn required(name: &'static str, kind: FieldKind, description: &'static str) -> Self {
        Self {
            name,
            kind,
            required: true,
            description,
        }
    }

    pub fn optional(name: &'static str, kind: FieldKind, description: &'static str) -> Self {
        Self {
            name,
            kind,
            required: false,
            description,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSchema {
    pub name: &'static str,
    pub fields: Vec<FieldSpec>,
    /// Boolean field whose `false` value means the agent reports failure.
    pub decision_field: Option<&'static str>,
}

impl OutputSchema {
    pub fn new(name: &'static str, fields: Vec<FieldSpec>) -> Self {
        Self {
            name,
            fields,
            decision_field: None,
        }
    }

    pub fn with_decision(mut self, field: &'static str) -> Self {
        self.decision_field = Some(field);
        self
    }

    /// Human-readable description embedded in prompts.
    pub fn describe(&self) -> String {
        let mut out = format!(
            "Respond with a single JSON object (`{}`) with these fields:\n",
            self.name
        );
        describe_fields(&self.fields, 0, &mut out);
        out
    }

    /// Extracts a JSON object from `raw` and validates it, returning the
    /// normalized value.
    pub fn parse(&self, raw: &str) -> Result<Value, String> {
        let value = extract_json(raw).ok_or_else(|| "no JSON object found in output".to_string())?;
        validate_fields(&self.fields, value, "")
    }
}

fn describe_fields(fields: &[FieldSpec], indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    for f in fields {
        let kind = match &f.kind {
            FieldKind::Text => "string".to_string(),
            FieldKind::Bool => "boolean".to_string(),
            FieldKind::Number => "number".to_string(),
            FieldKind::TextList => "array of strings".to_string(),
            FieldKind::Choice(opts) => format!("one of {}", opts.join(" | ")),
            FieldKind::ObjectList(_) => "array of objects".to_string(),
        };
        let req = if f.required { "required" } else { "optional" };
        out.push_str(&format!("{pad}- {} ({kind}, {req}): {}\n", f.name, f.description));
        if let FieldKind::ObjectList(inner) = &f.kind {
            describe_fields(inner, indent + 1, out);
        }
    }
}

/// Whole text, then the last fenced ```json block, then the outermost braces.
pub fn extract_json(raw: &str) -> Option<Value> {
    let trimmed = raw.trim();
    if let Ok(v @ Value::Object(_)) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    let mut fenced = None;
    let mut rest = trimmed;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        let Some(end) = after[body_start..].find("```") else {
            break;
        };
        let body = &after[body_start..body_start + end];
        if let Ok(v @ Value::Object(_)) = serde_json::from_str(body.trim()) {
            fenced = Some(v);
        }
        rest = &after[body_start + end + 3..];
    }
    if fenced.is_some() {
        return fenced;
    }
    let (start, end) = (trimmed.find('{')?, trimmed.rfind('}')?);
    if end <= start {
        return None;
    }
    match serde_json::from_str(&trimmed[start..=end]) {
        Ok(v @ Value::Object(_)) => Some(v),
        _ => None,
    }
}

fn validate_fields(fields: &[FieldSpec], value: Value, path: &str) -> Result<Value, String> {
    let Value::Object(mut map) = value else {
        return Err(format!("{}expected an object", prefix(path)));
    };
    let mut out = Map::new();
    for f in fields {
        let here = if path.is_empty() {
            f.name.to_string()
        } else {
            format!("{path}.{}", f.name)
        };
        match map.remove(f.name) {
            None | Some(Value::Null) => {
                if f.required {
                    return Err(format!("missing required field `{here}`"));
                }
            }
            Some(v) => {
                out.insert(f.name.to_string(), validate_kind(&f.kind, v, &here)?);
            }
        }
    }
    Ok(Value::Object(out))
}

fn prefix(path: &str) -> String {
    if path.is_empty() {
        String::new()
    } else {
        format!("`{path}`: ")
    }
}

fn validate_kind(kind: &FieldKind, v: Value, path: &str) -> Result<Value, String> {
    let bad = |what: &str| Err(format!("`{path}` must be {what}"));
    match kind {
        FieldKind::Text => match v {
            Value::String(_) => Ok(v),
            Value::Number(n) => Ok(Value::String(n.to_string())),
            _ => bad("a string"),
        },
        FieldKind::Bool => match v {
            Value::Bool(_) => Ok(v),
            Value::String(s) if s.eq_ignore_ascii_case("true") => Ok(Value::Bool(true)),
            Value::String(s) if s.eq_ignore_ascii_case("false") => Ok(Value::Bool(false)),
            _ => bad("a boolean"),
        },
        FieldKind::Number => match v {
            Value::Number(_) => Ok(v),
            _ => bad("a number"),
        },
        FieldKind::TextList => match v {
            Value::Array(items) => items
                .into_iter()
                .map(|i| match i {
                    Value::String(_) => Ok(i),
                    _ => Err(format!("`{path}` must contain only strings")),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array),
            Value::String(s) => Ok(Value::Array(vec![Value::String(s)])),
            _ => bad("an array of strings"),
        },
        FieldKind::Choice(opts) => match &v {
            Value::String(s) if opts.contains(&s.to_ascii_lowercase().as_str()) => {
                Ok(Value::String(s.to_ascii_lowercase()))
            }
            _ => bad(&format!("one of {}", opts.join(", "))),
        },
        FieldKind::ObjectList(inner) => match v {
            Value::Array(items) => items
                .into_iter()
                .enumerate()
                .map(|(i, item)| validate_fields(inner, item, &format!("{path}[{i}]")))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array),
            _ => bad("an array of objects"),
        },
    }
}
