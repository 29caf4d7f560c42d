//! Advisory selection by URL keyword and markup stripping.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::LazyLock;

use regex::Regex;

use super::record::{AdvisoryDoc, CveRecord};
use crate::net::HttpClient;

/// The five selection keywords, most specific first: a URL matching several
/// reports the earliest entry.
pub const ADVISORY_KEYWORDS: [&str; 5] = ["advisories", "advisory", "bounties", "bounty", "security"];

pub const MAX_ADVISORY_BYTES: usize = 100_000;

pub fn match_keyword(url: &str) -> Option<&'static str> {
    let lower = url.to_lowercase();
    ADVISORY_KEYWORDS.into_iter().find(|k| lower.contains(k))
}

pub trait WebFetcher: Send + Sync {
    fn name(&self) -> &'static str;
    fn fetch(&self, url: &str) -> Result<String, String>;
}

#[derive(Debug, Clone, Default)]
pub struct HttpFetcher {
    client: HttpClient,
}

impl HttpFetcher {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl WebFetcher for HttpFetcher {
    fn name(&self) -> &'static str {
        "http"
    }

    fn fetch(&self, url: &str) -> Result<String, String> {
        self.client.get_text(url, &[]).map_err(|e| e.to_string())
    }
}

/// Offline pages: `<dir>/index.json` maps URL to a file path relative to `<dir>`.
#[derive(Debug, Clone)]
pub struct FixtureFetcher {
    dir: PathBuf,
    index: HashMap<String, String>,
}

impl FixtureFetcher {
    pub fn load(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        let index = match std::fs::read_to_string(dir.join("index.json")) {
            Ok(text) => serde_json::from_str(&text).map_err(std::io::Error::other)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => HashMap::new(),
            Err(e) => return Err(e),
        };
        Ok(Self { dir, index })
    }
}

impl WebFetcher for FixtureFetcher {
    fn name(&self) -> &'static str {
        "fixture"
    }

    fn fetch(&self, url: &str) -> Result<String, String> {
        let rel = self
            .index
            .get(url)
            .ok_or_else(|| format!("no fixture page for {url}"))?;
        std::fs::read_to_string(self.dir.join(rel)).map_err(|e| e.to_string())
    }
}

static SCRIPT_STYLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<(script|style|noscript)\b.*?</(script|style|noscript)\s*>").unwrap());
static COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?-->").unwrap());
static BLOCK_BREAK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)<\s*(br|/p|/div|/li|/tr|/h[1-6]|/pre|/table|p|li|tr|h[1-6])\b[^>]*>").unwrap()
});
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static ENTITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"&(#x[0-9a-fA-F]+|#[0-9]+|[a-zA-Z]+);").unwrap());
static SPACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[ \t\x0B\f\r]+").unwrap());
static BLANKS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n\s*\n+").unwrap());

fn looks_like_markup(text: &str) -> bool {
    let head: String = text.chars().take(4096).collect::<String>().to_ascii_lowercase();
    head.contains("<html") || head.contains("<!doctype") || head.contains("<body") || head.contains("<div")
        || head.contains("<p>")
}

/// Strips HTML to plain text and caps the result at [`MAX_ADVISORY_BYTES`].
pub fn to_plain_text(raw: &str) -> String {
    let text = if looks_like_markup(raw) {
        let t = SCRIPT_STYLE.replace_all(raw, "");
        let t = COMMENT.replace_all(&t, "");
        let t = BLOCK_BREAK.replace_all(&t, "\n");
        let t = TAG.replace_all(&t, "");
        let t = ENTITY.replace_all(&t, |caps: &regex::Captures| decode_entity(&caps[1]));
        let t = SPACES.replace_all(&t, " ");
        let t = BLANKS.replace_all(&t, "\n\n");
        t.lines().map(str::trim).collect::<Vec<_>>().join("\n").trim().to_string()
    } else {
        raw.trim().to_string()
    };
    truncate_bytes(text, MAX_ADVISORY_BYTES)
}

fn decode_entity(name: &str) -> String {
    if let Some(hex) = name.strip_prefix("#x") {
        return u32::from_str_radix(hex, 16)
            .ok()
            .and_then(char::from_u32)
            .map(String::from)
            .unwrap_or_default();
    }
    if let Some(dec) = name.strip_prefix('#') {
        return dec.parse().ok().and_then(char::from_u32).map(String::from).unwrap_or_default();
    }
    match name {
        "amp" => "&",
        "lt" => "<",
        "gt" => ">",
        "quot" => "\"",
        "apos" => "'",
        "nbsp" => " ",
        _ => return format!("&{name};"),
    }
    .to_string()
}

pub fn truncate_bytes(mut text: String, max: usize) -> String {
    if text.len() > max {
        let mut cut = max;
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        text.truncate(cut);
    }
    text
}

/// Keeps reference URLs matching a keyword and scrapes each one. Fetch
/// failures are recorded on the doc and never abort collection.
pub fn collect_advisories(record: &CveRecord, fetcher: &dyn WebFetcher) -> Vec<AdvisoryDoc> {
    record
        .reference_urls
        .iter()
        .filter_map(|url| match_keyword(url).map(|k| (url, k)))
        .map(|(url, keyword)| match fetcher.fetch(url) {
            Ok(raw) => AdvisoryDoc {
                url: url.clone(),
                text: to_plain_text(&raw),
                matched_keyword: keyword.to_string(),
                fetch_failed: false,
            },
            Err(err) => {
                tracing::warn!(url = %url, error = %err, "advisory fetch failed");
                AdvisoryDoc {
                    url: url.clone(),
                    text: String::new(),
                    matched_keyword: keyword.to_string(),
                    fetch_failed: true,
                }
            }
        })
        .collect()
}
