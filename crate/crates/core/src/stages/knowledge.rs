use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{prompts, FailureKind, StageFailure, StageOutput};
use crate::agent::{run_agent, AgentEnv, AgentOutcome, AgentSpec, ContextBlocks};
use crate::digest::{estimate_tokens, sha256_hex};
use crate::ingest::RawCveBundle;
use crate::llm::{FieldKind, FieldSpec, OutputSchema, RoleName};

pub const DEFAULT_KB_TOKENS: u64 = 8_000;
pub const UNAVAILABLE: &str = "unavailable";
/// Per-document character cap when advisories and patches go into the prompt.
const PROMPT_DOC_CHARS: usize = 24_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Extracted,
    Hypothesized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub cve_id: String,
    pub summary: String,
    pub cwe_list: Vec<String>,
    pub affected_summary: String,
    pub root_cause: String,
    pub root_cause_inferred: bool,
    pub poc_details: String,
    pub poc_provenance: Provenance,
    pub patch_digest: String,
    pub advisory_digest: String,
}

impl KnowledgeBase {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("knowledge base serializes")
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_json())
    }

    pub fn tokens(&self) -> u64 {
        estimate_tokens(&self.to_json())
    }

    /// Halves the longest text field until the serialized form fits.
    pub fn fit_to_budget(&mut self, max_tokens: u64) {
        const MARK: &str = " [truncated]";
        while self.tokens() > max_tokens {
            let fields = [
                &mut self.summary,
                &mut self.affected_summary,
                &mut self.root_cause,
                &mut self.poc_details,
                &mut self.patch_digest,
                &mut self.advisory_digest,
            ];
            let Some(longest) = fields.into_iter().max_by_key(|f| f.len()) else {
                return;
            };
            if longest.len() <= 64 {
                // Only list entries are left to shrink.
                if self.cwe_list.pop().is_none() {
                    return;
                }
                continue;
            }
            let body = longest.strip_suffix(MARK).unwrap_or(longest);
            let mut cut = body.len() / 2;
            while !body.is_char_boundary(cut) {
                cut -= 1;
            }
            *longest = format!("{}{MARK}", &body[..cut]);
        }
    }
}

pub fn kb_schema() -> OutputSchema {
    OutputSchema::new(
        "knowledge_base",
        vec![
            FieldSpec::required("summary", FieldKind::Text, "distilled description"),
            FieldSpec::required("cwe_list", FieldKind::TextList, "CWE identifiers"),
            FieldSpec::required("affected_summary", FieldKind::Text, "affected versions and platforms"),
            FieldSpec::required("root_cause", FieldKind::Text, "the defect, localized"),
            FieldSpec::optional("root_cause_inferred", FieldKind::Bool, "true if inferred"),
            FieldSpec::required("poc_details", FieldKind::Text, "PoC steps/code or an exploit outline"),
            FieldSpec::required(
                "poc_provenance",
                FieldKind::Choice(&["extracted", "hypothesized"]),
                "extracted from a source, or hypothesized",
            ),
            FieldSpec::required("patch_digest", FieldKind::Text, "what the fix reveals"),
            FieldSpec::required("advisory_digest", FieldKind::Text, "essential advisory content"),
        ],
    )
}

fn clip(text: &str, max: usize) -> String {
    if text.len() <= max {
        return text.to_string();
    }
    let mut cut = max;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}\n[... {} more bytes not shown]", &text[..cut], text.len() - cut)
}

/// Renders the bundle as stage inputs for the knowledge builder.
pub fn bundle_context(bundle: &RawCveBundle) -> ContextBlocks {
    let r = bundle.record();
    let mut record = format!("CVE: {}\nDescription: {}\n", r.cve_id, r.description);
    record.push_str(&format!(
        "CWE: {}\n",
        if r.cwe_ids.is_empty() { UNAVAILABLE.to_string() } else { r.cwe_ids.join(", ") }
    ));
    for a in &r.affected {
        record.push_str(&format!("Affected: {}", a.version_range));
        if let Some(p) = &a.platform_notes {
            record.push_str(&format!(" ({p})"));
        }
        record.push('\n');
    }
    if let Some(repo) = &r.repository {
        record.push_str(&format!("Repository: {}\n", repo.web_url()));
    }
    record.push_str(&format!("Vulnerable version: {}\n", bundle.source().version_tag));

    let mut ctx = ContextBlocks::default().input("CVE record", record);
    let usable: Vec<_> = bundle.advisories().iter().filter(|a| !a.fetch_failed && !a.text.trim().is_empty()).collect();
    if usable.is_empty() {
        ctx = ctx.input("Advisories", UNAVAILABLE);
    }
    for (i, a) in usable.iter().enumerate() {
        ctx = ctx.input(format!("Advisory {} ({})", i + 1, a.url), clip(&a.text, PROMPT_DOC_CHARS));
    }
    let patches: Vec<_> = bundle.patches().iter().filter(|p| !p.unavailable).collect();
    if patches.is_empty() {
        ctx = ctx.input("Patch commits", UNAVAILABLE);
    }
    for p in patches {
        ctx = ctx.input(
            format!("Patch commit {}", p.commit_id),
            format!("{}\n\n{}", p.message.trim(), clip(&p.diff_text, PROMPT_DOC_CHARS)),
        );
    }
    ctx.input("Source tree", clip(&bundle.source().directory_tree, PROMPT_DOC_CHARS))
}

fn text_field(v: &Value, key: &str) -> String {
    match v.get(key).and_then(Value::as_str).map(str::trim) {
        Some(s) if !s.is_empty() => s.to_string(),
        _ => UNAVAILABLE.to_string(),
    }
}

/// One knowledge-builder completion, no tools.
pub fn build_knowledge_base(env: AgentEnv<'_>, bundle: &RawCveBundle, max_tokens: u64) -> StageOutput<KnowledgeBase> {
    let spec = AgentSpec::single_turn(RoleName::KnowledgeBuilder, prompts::KNOWLEDGE_BUILDER, kb_schema());
    let run = run_agent(env, &spec, &bundle_context(bundle));
    let transcripts = vec![run.transcript.clone()];
    let answer = match (run.outcome, run.answer) {
        (AgentOutcome::FinalAnswer, Some(a)) => a,
        (outcome, _) => {
            return StageOutput {
                result: Err(StageFailure::from_outcome(outcome, FailureKind::FormatError, run.transcript.error())),
                transcripts,
            }
        }
    };
    let has_advisory = bundle.advisories().iter().any(|a| !a.fetch_failed && !a.text.trim().is_empty());
    let claimed = answer.get("poc_provenance").and_then(Value::as_str) == Some("extracted");
    let mut kb = KnowledgeBase {
        cve_id: bundle.record().cve_id.to_string(),
        summary: text_field(&answer, "summary"),
        cwe_list: answer
            .get("cwe_list")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(String::from).collect())
            .filter(|v: &Vec<String>| !v.is_empty())
            .unwrap_or_else(|| bundle.record().cwe_ids.clone()),
        affected_summary: text_field(&answer, "affected_summary"),
        root_cause: text_field(&answer, "root_cause"),
        root_cause_inferred: answer.get("root_cause_inferred").and_then(Value::as_bool).unwrap_or(false),
        poc_details: text_field(&answer, "poc_details"),
        // Nothing can be extracted from advisories that are not there.
        poc_provenance: if claimed && has_advisory { Provenance::Extracted } else { Provenance::Hypothesized },
        patch_digest: text_field(&answer, "patch_digest"),
        advisory_digest: text_field(&answer, "advisory_digest"),
    };
    if !has_advisory {
        kb.advisory_digest = UNAVAILABLE.into();
    }
    if bundle.patches().iter().all(|p| p.unavailable) {
        kb.patch_digest = UNAVAILABLE.into();
    }
    kb.fit_to_budget(max_tokens);
    StageOutput {
        result: Ok(kb),
        transcripts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kb() -> KnowledgeBase {
        KnowledgeBase {
            cve_id: "CVE-2024-4340".into(),
            summary: "s".into(),
            cwe_list: vec!["CWE-674".into()],
            affected_summary: "a".into(),
            root_cause: "r".into(),
            root_cause_inferred: false,
            poc_details: "p".into(),
            poc_provenance: Provenance::Extracted,
            patch_digest: "d".into(),
            advisory_digest: "x".repeat(200_000),
        }
    }

    #[test]
    fn fits_budget() {
        let mut k = kb();
        assert!(k.tokens() > DEFAULT_KB_TOKENS);
        k.fit_to_budget(DEFAULT_KB_TOKENS);
        assert!(k.tokens() <= DEFAULT_KB_TOKENS);
        assert!(k.advisory_digest.ends_with("[truncated]"));
        assert_eq!(k.summary, "s");
        let mut small = kb();
        small.fit_to_budget(10);
        assert!(small.tokens() <= 10 || small.cwe_list.is_empty());
    }

    #[test]
    fn clip_marks_cut() {
        assert_eq!(clip("abc", 5), "abc");
        assert!(clip(&"é".repeat(10), 5).contains("more bytes"));
    }
}
