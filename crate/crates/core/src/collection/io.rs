//! File readers for the corpus, topics, and qrels formats.

use std::collections::HashSet;
use std::path::Path;

use super::{parse_qrels, CollectionError, Document, Qrel, Topic};

fn read_file(path: &Path) -> Result<String, CollectionError> {
    std::fs::read_to_string(path).map_err(|source| CollectionError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parse a line-delimited JSON corpus: one object per line with
/// `doc_id`, optional `title`, and `text`. Duplicate doc_ids are rejected.
pub fn parse_corpus(text: &str) -> Result<Vec<Document>, CollectionError> {
    let mut docs = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| CollectionError::CorpusParse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let doc = Document::new(doc.doc_id, doc.title, doc.text).map_err(|e| {
            CollectionError::CorpusParse {
                line: lineno,
                msg: e.to_string(),
            }
        })?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(CollectionError::DuplicateDocId(doc.doc_id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Parse topics text: one `<query_id><TAB><query text>` line per topic.
pub fn parse_topics(text: &str) -> Result<Vec<Topic>, CollectionError> {
    let mut topics = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (query_id, query_text) = line.split_once('\t').ok_or(CollectionError::TopicsParse {
            line: lineno,
            msg: "missing tab separator".into(),
        })?;
        let topic =
            Topic::new(query_id, query_text.trim()).map_err(|e| CollectionError::TopicsParse {
                line: lineno,
                msg: e.to_string(),
            })?;
        topics.push(topic);
    }
    Ok(topics)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>, CollectionError> {
    parse_corpus(&read_file(path)?)
}

pub fn read_topics(path: &Path) -> Result<Vec<Topic>, CollectionError> {
    parse_topics(&read_file(path)?)
}

pub fn read_qrels(path: &Path, annotator_id: &str) -> Result<Vec<Qrel>, CollectionError> {
    parse_qrels(&read_file(path)?, annotator_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_round_trip() {
        let text = r#"{"doc_id":"d1","title":"T","text":"body"}
{"doc_id":"d2","text":"no title"}
"#;
        let docs = parse_corpus(text).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].title.as_deref(), Some("T"));
        assert_eq!(docs[1].title, None);
    }

    #[test]
    fn corpus_duplicate_doc_id_rejected() {
        let text = "{\"doc_id\":\"d1\",\"text\":\"a\"}\n{\"doc_id\":\"d1\",\"text\":\"b\"}\n";
        assert!(matches!(
            parse_corpus(text),
            Err(CollectionError::DuplicateDocId(id)) if id == "d1"
        ));
    }

    #[test]
    fn corpus_bad_json_carries_line() {
        let text = "{\"doc_id\":\"d1\",\"text\":\"a\"}\nnot json\n";
        assert!(matches!(
            parse_corpus(text),
            Err(CollectionError::CorpusParse { line: 2, .. })
        ));
    }

    #[test]
    fn topics_parse_tab_separated() {
        let topics = parse_topics("q1\tPrevensaun moras HIV/SIDA\n").unwrap();
        assert_eq!(topics[0].query_id, "q1");
        assert_eq!(topics[0].text, "Prevensaun moras HIV/SIDA");
    }

    #[test]
    fn topics_missing_tab_is_error() {
        assert!(matches!(
            parse_topics("q1 no tab here"),
            Err(CollectionError::TopicsParse { line: 1, .. })
        ));
    }

    #[test]
    fn topics_empty_text_is_error() {
        assert!(parse_topics("q1\t\n").is_err());
    }
}
