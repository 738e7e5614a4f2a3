//! Few-shot prompt construction for graded relevance judging.
//!
//! Rendering is deterministic: the same template, query, and document
//! always produce identical bytes, so prompts can be golden-file tested
//! and hashed for record/replay.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collection::RelevanceGrade;

/// Documents longer than this many tokens are truncated before rendering.
pub const DEFAULT_DOC_TOKEN_BUDGET: usize = 3000;

const ELLIPSIS_MARKER: &str = " …";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("example field {0} must be non-empty")]
    EmptyExampleField(&'static str),
    #[error("query must be non-empty")]
    EmptyQuery,
    #[error("document must be non-empty")]
    EmptyDocument,
    #[error("template file {path}: {msg}")]
    TemplateParse { path: String, msg: String },
    #[error("failed to {action} template {path}: {source}")]
    Io {
        action: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A worked exemplar: query, document, the reasoning, and the grade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub query: String,
    pub document: String,
    pub reason: String,
    pub score: RelevanceGrade,
}

impl FewShotExample {
    pub fn new(
        query: impl Into<String>,
        document: impl Into<String>,
        reason: impl Into<String>,
        score: RelevanceGrade,
    ) -> Result<Self, PromptError> {
        let example = FewShotExample {
            query: query.into(),
            document: document.into(),
            reason: reason.into(),
            score,
        };
        if example.query.is_empty() {
            return Err(PromptError::EmptyExampleField("query"));
        }
        if example.document.is_empty() {
            return Err(PromptError::EmptyExampleField("document"));
        }
        if example.reason.is_empty() {
            return Err(PromptError::EmptyExampleField("reason"));
        }
        Ok(example)
    }
}

/// The pieces of the judging prompt: instruction header, ordered few-shot
/// examples, and the response-format instruction that always closes the
/// prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instruction_header: String,
    pub examples: Vec<FewShotExample>,
    pub response_instruction: String,
}

/// The exact text sent to a model for one query-document pair.
///
/// `query` and `document` are the strings substituted into the evaluation
/// section (the document possibly truncated); each appears there verbatim
/// exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub query: String,
    pub document: String,
    eval_offset: usize,
}

impl RenderedPrompt {
    /// Split for backends that send separate system and user messages:
    /// instruction plus examples as system, the evaluation pair and
    /// response instruction as user.
    pub fn split_roles(&self) -> (&str, &str) {
        let (system, user) = self.text.split_at(self.eval_offset);
        (system.trim_end_matches('\n'), user)
    }
}

/// The built-in template: expert-assessor instruction, one worked example
/// per grade in ascending score order, and the JSON response instruction.
pub fn default_template() -> PromptTemplate {
    let examples = vec![
        FewShotExample {
            query: "Programa mestradu no pós-graduasaun UNTL".into(),
            document: "Estudantes Pós-Graduasaun IOB Kuda Ai-Oan iha aldeia Payol no Bedois"
                .into(),
            reason: "The query is about postgraduate and master's courses at UNTL, whereas the \
                     document discusses the activities of postgraduate students from IOB. \
                     Although both query and document contain the term 'postgraduate', the query \
                     specifically is targeted courses at UNTL. Therefore, they are irrelevant."
                .into(),
            score: RelevanceGrade::Irrelevant,
        },
        FewShotExample {
            query: "Kursu mestradu no pós-graduasaun UNTL".into(),
            document: "Kursu Desportu UNTL sei realiza graduasaun dahuluk tinan ne’e".into(),
            reason: "The query is about postgraduate and master's courses at UNTL, whereas the \
                     document focuses on a sports course. Despite both courses in the query and \
                     document being offered at UNTL, the sports course in the document is not \
                     specifically designed for postgraduate or master's levels. Thus, the \
                     document is only marginally relevant."
                .into(),
            score: RelevanceGrade::MarginallyRelevant,
        },
        FewShotExample {
            query: "Kursu mestradu no pós-graduasaun UNTL".into(),
            document: "UNTL Nia Vise Reitór Asuntu Pós-Graduasaun No Peskiza Hakotu-iis".into(),
            reason: "The document is relevant as it details the vice-director of the \
                     postgraduate program at UNTL. However, its relevance is somewhat diminished \
                     as it primarily discusses the unfortunate passing of the vice-director \
                     rather than the progress or implementation of the program. Hence, they are \
                     relevant."
                .into(),
            score: RelevanceGrade::Relevant,
        },
        FewShotExample {
            query: "Kursu mestradu no pós-graduasaun UNTL".into(),
            document: "UNTL Lansa Kursu Pós-Graduasaun No Mestradu Iha Área Lima".into(),
            reason: "Both the query and document address postgraduate and master's courses at \
                     UNTL. The document strongly correlates with the query, containing the \
                     launching of postgraduate and master's courses at UNTL. Thefore they are \
                     highly relevant."
                .into(),
            score: RelevanceGrade::HighlyRelevant,
        },
    ];

    PromptTemplate {
        instruction_header: "You are an expert assessor and you are tasked with assessing the \
                             relevance between the input query and its corresponding document, \
                             assigning a score from 0 to 3. A score of 0 indicates irrelevant; 1, \
                             marginally relevant; 2, relevant; and 3, highly relevant."
            .into(),
        examples,
        response_instruction: "Your response must be in JSON format with the first field is \
                               \"reason\", explaining your reasoning, and the second field is \
                               \"score\"."
            .into(),
    }
}

/// Truncate `text` at the end of its `budget`-th token and append an
/// ellipsis marker. Text within budget is returned unchanged.
fn truncate_to_token_budget(text: &str, budget: usize) -> String {
    let mut seen = 0usize;
    let mut end = 0usize;
    let mut in_token = false;
    for (idx, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if !in_token {
                in_token = true;
                seen += 1;
                if seen > budget {
                    return format!("{}{}", text[..end].trim_end(), ELLIPSIS_MARKER);
                }
            }
            end = idx + c.len_utf8();
        } else {
            in_token = false;
        }
    }
    text.to_string()
}

/// Render the prompt for one query-document pair, truncating the document
/// to `max_doc_tokens` first.
pub fn render_prompt_budgeted(
    template: &PromptTemplate,
    query: &str,
    document: &str,
    max_doc_tokens: usize,
) -> Result<RenderedPrompt, PromptError> {
    if query.is_empty() {
        return Err(PromptError::EmptyQuery);
    }
    if document.is_empty() {
        return Err(PromptError::EmptyDocument);
    }
    let document = truncate_to_token_budget(document, max_doc_tokens);

    let mut text = String::new();
    text.push_str(&template.instruction_header);
    text.push_str("\n\n");
    for (i, example) in template.examples.iter().enumerate() {
        text.push_str(&format!("Example {}:\n", i + 1));
        text.push_str(&format!("query: \"{}\"\n", example.query));
        text.push_str(&format!("document: \"{}\"\n", example.document));
        text.push_str(&format!("reason: \"{}\"\n", example.reason));
        text.push_str(&format!("score: {}\n", example.score.value()));
        text.push('\n');
    }
    let eval_offset = text.len();
    text.push_str("The query and document to be evaluated are the following:\n");
    text.push_str(&format!("query: {query}\n"));
    text.push_str(&format!("document: {document}\n"));
    text.push('\n');
    text.push_str(&template.response_instruction);
    text.push('\n');

    Ok(RenderedPrompt {
        text,
        query: query.to_string(),
        document,
        eval_offset,
    })
}

/// Render with the default document token budget.
pub fn render_prompt(
    template: &PromptTemplate,
    query: &str,
    document: &str,
) -> Result<RenderedPrompt, PromptError> {
    render_prompt_budgeted(template, query, document, DEFAULT_DOC_TOKEN_BUDGET)
}

/// Load a template from a JSON file.
pub fn load_template(path: &Path) -> Result<PromptTemplate, PromptError> {
    let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
        action: "read",
        path: path.display().to_string(),
        source,
    })?;
    let template: PromptTemplate =
        serde_json::from_str(&text).map_err(|e| PromptError::TemplateParse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
    for example in &template.examples {
        FewShotExample::new(
            example.query.clone(),
            example.document.clone(),
            example.reason.clone(),
            example.score,
        )
        .map_err(|e| PromptError::TemplateParse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
    }
    Ok(template)
}

/// Save a template as pretty-printed JSON.
pub fn save_template(template: &PromptTemplate, path: &Path) -> Result<(), PromptError> {
    let json = serde_json::to_string_pretty(template).expect("template serializes");
    std::fs::write(path, json + "\n").map_err(|source| PromptError::Io {
        action: "write",
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collection::tokenize;

    #[test]
    fn default_template_has_one_example_per_grade() {
        let template = default_template();
        assert_eq!(template.examples.len(), 4);
        let scores: Vec<u8> = template.examples.iter().map(|e| e.score.value()).collect();
        assert_eq!(scores, vec![0, 1, 2, 3]);
    }

    #[test]
    fn default_template_score_one_example_query() {
        let template = default_template();
        assert_eq!(
            template.examples[1].query,
            "Kursu mestradu no pós-graduasaun UNTL"
        );
    }

    #[test]
    fn default_header_names_the_scale() {
        let header = &default_template().instruction_header;
        for phrase in [
            "0 indicates irrelevant",
            "marginally relevant",
            "2, relevant",
            "highly relevant",
        ] {
            assert!(header.contains(phrase), "missing {phrase:?}");
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let template = default_template();
        let a = render_prompt(&template, "q", "d").unwrap();
        let b = render_prompt(&template, "q", "d").unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn zero_example_template_renders_header_pair_instruction() {
        let template = PromptTemplate {
            instruction_header: "HEADER".into(),
            examples: vec![],
            response_instruction: "INSTRUCTION".into(),
        };
        let rendered = render_prompt(&template, "the query", "the document").unwrap();
        assert_eq!(
            rendered.text,
            "HEADER\n\nThe query and document to be evaluated are the following:\n\
             query: the query\ndocument: the document\n\nINSTRUCTION\n"
        );
    }

    #[test]
    fn evaluation_section_contains_pair_exactly_once() {
        let template = default_template();
        // Reuse an example's own pair: it then appears twice in the full
        // text but exactly once in the evaluation section.
        let example = template.examples[1].clone();
        let rendered = render_prompt(&template, &example.query, &example.document).unwrap();
        let eval = &rendered.text[rendered.eval_offset..];
        assert_eq!(eval.matches(&example.query).count(), 1);
        assert_eq!(eval.matches(&example.document).count(), 1);
    }

    #[test]
    fn prompt_ends_with_response_instruction() {
        let template = default_template();
        let rendered = render_prompt(&template, "q", "d").unwrap();
        assert!(rendered
            .text
            .ends_with(&format!("{}\n", template.response_instruction)));
    }

    #[test]
    fn empty_inputs_rejected() {
        let template = default_template();
        assert!(matches!(
            render_prompt(&template, "", "d"),
            Err(PromptError::EmptyQuery)
        ));
        assert!(matches!(
            render_prompt(&template, "q", ""),
            Err(PromptError::EmptyDocument)
        ));
    }

    #[test]
    fn long_document_truncated_with_marker() {
        let template = default_template();
        let doc: String = (0..50).map(|i| format!("word{i} ")).collect();
        let rendered = render_prompt_budgeted(&template, "q", &doc, 10).unwrap();
        assert!(rendered.document.ends_with(ELLIPSIS_MARKER));
        assert_eq!(tokenize(&rendered.document).len(), 10);
        assert!(rendered.document.starts_with("word0 word1"));
    }

    #[test]
    fn document_within_budget_unchanged() {
        let template = default_template();
        let rendered = render_prompt_budgeted(&template, "q", "short doc!", 10).unwrap();
        assert_eq!(rendered.document, "short doc!");
    }

    #[test]
    fn split_roles_partitions_text() {
        let template = default_template();
        let rendered = render_prompt(&template, "q", "d").unwrap();
        let (system, user) = rendered.split_roles();
        assert!(system.starts_with("You are an expert assessor"));
        assert!(system.ends_with("score: 3"));
        assert!(user.starts_with("The query and document to be evaluated"));
        assert!(user.ends_with(&format!("{}\n", template.response_instruction)));
    }

    #[test]
    fn template_round_trips_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("template.json");
        let template = default_template();
        save_template(&template, &path).unwrap();
        assert_eq!(load_template(&path).unwrap(), template);
    }

    #[test]
    fn template_missing_examples_field_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"instruction_header":"h","response_instruction":"r"}"#).unwrap();
        assert!(matches!(
            load_template(&path),
            Err(PromptError::TemplateParse { .. })
        ));
    }

    #[test]
    fn template_with_empty_example_field_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"instruction_header":"h","examples":[{"query":"","document":"d","reason":"r","score":1}],"response_instruction":"r"}"#,
        )
        .unwrap();
        assert!(load_template(&path).is_err());
    }

    #[test]
    fn every_example_score_appears_as_bare_digit() {
        let rendered = render_prompt(&default_template(), "q", "d").unwrap();
        for digit in 0..4 {
            assert_eq!(
                rendered.text.matches(&format!("score: {digit}\n")).count(),
                1,
                "score {digit}"
            );
        }
    }

    proptest::proptest! {
        /// Same inputs always render to identical bytes, and the prompt
        /// always closes with the response-format instruction.
        #[test]
        fn rendering_is_pure_over_random_inputs(
            query in "[^\\s][a-zA-Z0-9 áéó'-]{0,40}",
            document in "[^\\s][a-zA-Z0-9 áéó'\n.,-]{0,200}",
        ) {
            let template = default_template();
            let a = render_prompt(&template, &query, &document).unwrap();
            let b = render_prompt(&template, &query, &document).unwrap();
            proptest::prop_assert_eq!(&a.text, &b.text);
            let closing = format!("{}\n", template.response_instruction);
            proptest::prop_assert!(a.text.ends_with(&closing));
        }
    }
}
