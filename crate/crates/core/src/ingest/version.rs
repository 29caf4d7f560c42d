//! Tag ordering and affected-range classification.
//!
//! Tags that parse as semantic versions are compared by semver precedence; other
//! tags fall back to their dotted numeric segments. Anything else is unknown and
//! never selected.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct TagVersion {
    release: Vec<u64>,
    pre: Option<semver::Prerelease>,
}

impl TagVersion {
    pub fn parse(tag: &str) -> Option<Self> {
        let trimmed = tag.trim();
        let body = trimmed
            .strip_prefix('v')
            .or_else(|| trimmed.strip_prefix('V'))
            .unwrap_or(trimmed);
        if let Ok(v) = semver::Version::parse(body) {
            let pre = (!v.pre.is_empty()).then_some(v.pre);
            return Some(Self {
                release: vec![v.major, v.minor, v.patch],
                pre,
            });
        }
        let segments: Option<Vec<u64>> = body
            .split('.')
            .map(|s| {
                if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                    None
                } else {
                    s.parse().ok()
                }
            })
            .collect();
        segments.map(|release| Self { release, pre: None })
    }

    fn segment(&self, i: usize) -> u64 {
        self.release.get(i).copied().unwrap_or(0)
    }
}

impl Ord for TagVersion {
    fn cmp(&self, other: &Self) -> Ordering {
        let width = self.release.len().max(other.release.len());
        for i in 0..width {
            match self.segment(i).cmp(&other.segment(i)) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        match (&self.pre, &other.pre) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Greater,
            (Some(_), None) => Ordering::Less,
            (Some(a), Some(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for TagVersion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for TagVersion {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for TagVersion {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Affected,
    NotAffected,
    Unknown,
}

/// Predicate over version strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VersionRange {
    Exact { version: String },
    Bounded {
        /// Inclusive lower bound; `None` means unbounded.
        lower: Option<String>,
        upper: Option<String>,
        upper_inclusive: bool,
    },
}

impl VersionRange {
    pub fn less_than(v: impl Into<String>) -> Self {
        VersionRange::Bounded {
            lower: None,
            upper: Some(v.into()),
            upper_inclusive: false,
        }
    }

    pub fn less_than_or_equal(v: impl Into<String>) -> Self {
        VersionRange::Bounded {
            lower: None,
            upper: Some(v.into()),
            upper_inclusive: true,
        }
    }

    pub fn exact(v: impl Into<String>) -> Self {
        VersionRange::Exact { version: v.into() }
    }

    /// Parses `"< 0.5.0"`, `"<= 1.2"`, `"= 1.0.0"`, `">= 1.0, < 2.0"` and bare versions.
    pub fn parse(text: &str) -> Option<Self> {
        let mut lower = None;
        let mut upper = None;
        let mut upper_inclusive = false;
        let mut exact = None;
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (op, v) = split_op(part);
            let v = v.trim().to_string();
            if v.is_empty() {
                return None;
            }
            match op {
                "<" => upper = Some(v),
                "<=" => {
                    upper = Some(v);
                    upper_inclusive = true;
                }
                ">=" => lower = Some(v),
                "=" | "==" => exact = Some(v),
                "" if v.starts_with(|c: char| c.is_ascii_alphanumeric()) => exact = Some(v),
                _ => return None,
            }
        }
        match (exact, lower.is_some() || upper.is_some()) {
            (Some(v), false) => Some(VersionRange::Exact { version: v }),
            (None, true) => Some(VersionRange::Bounded {
                lower,
                upper,
                upper_inclusive,
            }),
            _ => None,
        }
    }

    pub fn classify(&self, candidate: &str) -> Classification {
        let Some(c) = TagVersion::parse(candidate) else {
            return Classification::Unknown;
        };
        let verdict = |hit: bool| {
            if hit {
                Classification::Affected
            } else {
                Classification::NotAffected
            }
        };
        match self {
            VersionRange::Exact { version } => match TagVersion::parse(version) {
                Some(v) => verdict(c == v),
                None => Classification::Unknown,
            },
            VersionRange::Bounded {
                lower,
                upper,
                upper_inclusive,
            } => {
                let lo = match lower.as_deref().map(TagVersion::parse) {
                    Some(None) => return Classification::Unknown,
                    Some(Some(l)) => Some(l),
                    None => None,
                };
                let hi = match upper.as_deref().map(TagVersion::parse) {
                    Some(None) => return Classification::Unknown,
                    Some(Some(h)) => Some(h),
                    None => None,
                };
                let above = lo.is_none_or(|l| c >= l);
                let below = hi.is_none_or(|h| if *upper_inclusive { c <= h } else { c < h });
                verdict(above && below)
            }
        }
    }
}

fn split_op(part: &str) -> (&str, &str) {
    for op in ["<=", ">=", "==", "<", "="] {
        if let Some(rest) = part.strip_prefix(op) {
            return (op, rest);
        }
    }
    ("", part)
}

impl fmt::Display for VersionRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VersionRange::Exact { version } => write!(f, "= {version}"),
            VersionRange::Bounded {
                lower,
                upper,
                upper_inclusive,
            } => {
                let mut parts = Vec::new();
                if let Some(l) = lower {
                    parts.push(format!(">= {l}"));
                }
                if let Some(u) = upper {
                    let op = if *upper_inclusive { "<=" } else { "<" };
                    parts.push(format!("{op} {u}"));
                }
                if parts.is_empty() {
                    f.write_str("*")
                } else {
                    f.write_str(&parts.join(", "))
                }
            }
        }
    }
}
