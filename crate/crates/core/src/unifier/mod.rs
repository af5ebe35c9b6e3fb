//! Raw-to-canonical harmonization: schema preview, mapping induction through
//! an LLM gateway, mapping application and dataset merging.

mod apply;
mod llm;
mod merge;
mod preview;
mod spec;

use thiserror::Error;

use crate::dsl::DslError;
use crate::model::ValidationReport;

pub use apply::{apply_mapping, UNKNOWN};
pub use llm::{ChatMessage, LlmClient, Transport, ENV_ENDPOINT, ENV_KEY};
pub use merge::{merge_datasets, merge_named, MergeReport, SOURCE_COLUMN};
pub use preview::{preview_schema, ObsColumnPreview, SchemaPreview, XStats, RAW_COUNT_THRESHOLD};
pub use spec::{Entry, IndexType, MappingSpec, NumericalSpec, ObsmSpec, VarSpec};

/// Prompt template version shipped with this build.
pub const PROMPT_VERSION: &str = "v1";
const SYSTEM_TEMPLATE: &str = include_str!("../../templates/mapping_system.v1.txt");
const PROMPT_TEMPLATE: &str = include_str!("../../templates/mapping_prompt.v1.txt");
const TARGET_SCHEMA: &str = include_str!("../../templates/target_schema.v1.txt");
const FEW_SHOT: &str = include_str!("../../templates/few_shot.v1.txt");

#[derive(Debug, Error)]
pub enum UnifierError {
    #[error("mapping schema violations: {}", violations.join("; "))]
    Schema { violations: Vec<String> },
    #[error("{key}: {source}")]
    Dsl { key: String, source: DslError },
    #[error("{key}: missing column '{column}'; available: [{}]", available.join(", "))]
    MissingColumn { key: String, column: String, available: Vec<String> },
    #[error("{key}: evaluation failed: {source}")]
    Eval { key: String, source: DslError },
    #[error("{key}: {message}")]
    Type { key: String, message: String },
    #[error("numerical block: {0}")]
    Numerical(String),
    #[error("canonical validation failed:\n{0}")]
    Validation(ValidationReport),
    #[error("merge: {0}")]
    Merge(String),
    #[error("LLM transport: {0}")]
    Transport(String),
    #[error("no fenced JSON block in the response")]
    NoJsonBlock,
    /// Wraps a failure to turn an LLM reply into a spec.
    #[error("{cause}")]
    Induce { raw_response: String, cause: Box<UnifierError> },
}

impl UnifierError {
    pub fn raw_response(&self) -> Option<&str> {
        match self {
            UnifierError::Induce { raw_response, .. } => Some(raw_response),
            _ => None,
        }
    }

    /// The underlying error of an [`UnifierError::Induce`] wrapper.
    pub fn root(&self) -> &UnifierError {
        match self {
            UnifierError::Induce { cause, .. } => cause.root(),
            e => e,
        }
    }
}

/// Fills the induction prompt. `task` is free text from the operator.
pub fn render_prompt(preview: &SchemaPreview, task: &str) -> Vec<ChatMessage> {
    let user = PROMPT_TEMPLATE
        .replace("{target_schema}", TARGET_SCHEMA.trim_end())
        .replace("{few_shot_examples}", FEW_SHOT.trim_end())
        .replace("{task}", if task.trim().is_empty() { "(none)" } else { task.trim() })
        .replace("{preview}", preview.to_prompt_text().trim_end());
    vec![ChatMessage::system(SYSTEM_TEMPLATE.trim_end()), ChatMessage::user(user)]
}

/// Body of the first ```json fence; falls back to the first unlabeled fence.
pub fn extract_json_block(response: &str) -> Option<&str> {
    let mut fallback = None;
    let mut rest = response;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let line_end = after.find('\n')?;
        let lang = after[..line_end].trim();
        let body = &after[line_end + 1..];
        let end = body.find("```")?;
        if lang.eq_ignore_ascii_case("json") {
            return Some(&body[..end]);
        }
        if lang.is_empty() && fallback.is_none() {
            fallback = Some(&body[..end]);
        }
        rest = &body[end + 3..];
    }
    fallback
}

/// Asks the model for a mapping and validates the reply.
pub fn induce_mapping(preview: &SchemaPreview, client: &mut LlmClient, task: &str) -> Result<MappingSpec, UnifierError> {
    let response = client.complete(&render_prompt(preview, task))?;
    let wrap = |cause: UnifierError| UnifierError::Induce { raw_response: response.clone(), cause: Box::new(cause) };
    let block = extract_json_block(&response).ok_or_else(|| wrap(UnifierError::NoJsonBlock))?;
    MappingSpec::from_json_str(block).map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{BinOp, Expr};

    fn fenced(body: &str) -> String {
        format!("Here is the mapping.\n```json\n{body}\n```\nDone.")
    }

    #[test]
    fn prompt_fills_every_slot() {
        let table = apply::tests::raw_fixture();
        let msgs = render_prompt(&preview_schema(&table, 5), "drug screen");
        assert_eq!(msgs.len(), 2);
        let user = &msgs[1].content;
        for slot in ["{target_schema}", "{few_shot_examples}", "{task}", "{preview}"] {
            assert!(!user.contains(slot), "{slot} left unfilled");
        }
        assert!(user.contains("drug_id") && user.contains("drug screen"));
    }

    #[test]
    fn fence_extraction() {
        assert_eq!(extract_json_block("```python\nx\n```\n```json\n{}\n```"), Some("{}\n"));
        assert_eq!(extract_json_block("```\n{\"a\": 1}\n```"), Some("{\"a\": 1}\n"));
        assert_eq!(extract_json_block("no fences"), None);
        assert_eq!(extract_json_block("```json\n{ unterminated"), None);
    }

    #[test]
    fn induce_from_mock() {
        let table = apply::tests::raw_fixture();
        let preview = preview_schema(&table, 5);
        let mut c = LlmClient::mock(fenced(spec::tests::LISTING));
        let s = induce_mapping(&preview, &mut c, "").unwrap();
        let Entry::Logic { expression, .. } = &s.obsm.pert_dose_source else { panic!() };
        assert_eq!(expression, "df['conc_um'].astype(float) * 1000");
        let nested = r#"{"uscp_mapping": {"obs": {"is_control_logic": "adata.obs['drug_id'] == 'DMSO'"},
                        "obsm": {"pert_mask_source": "drug_id"}}}"#;
        let s = induce_mapping(&preview, &mut LlmClient::mock(fenced(nested)), "").unwrap();
        let Entry::Logic { expr, .. } = s.entry("is_control") else { panic!() };
        assert_eq!(expr, &Expr::binop(BinOp::Eq, Expr::column("drug_id"), Expr::str("DMSO")));
    }

    #[test]
    fn induce_errors_keep_raw_response() {
        let preview = preview_schema(&apply::tests::raw_fixture(), 5);
        let err = induce_mapping(&preview, &mut LlmClient::mock("sorry"), "").unwrap_err();
        assert!(matches!(err.root(), UnifierError::NoJsonBlock));
        assert_eq!(err.raw_response(), Some("sorry"));
        let err = induce_mapping(&preview, &mut LlmClient::mock(fenced(r#"{"uscp_mapping": {"obsm": {}}}"#)), "")
            .unwrap_err();
        assert!(err.to_string().contains("obs"));
        assert!(err.raw_response().unwrap().contains("uscp_mapping"));
    }
}
