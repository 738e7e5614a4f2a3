//! TREC 4-column qrels parsing and serialization.
//!
//! Line format: `<query_id> <iteration> <doc_id> <grade>`. The iteration
//! column is ignored on parse and written as `0`.

use super::{CollectionError, Qrel, RelevanceGrade};

/// Parse qrels text, assigning every line to `annotator_id`.
///
/// Line order is preserved. Blank lines are skipped; any other malformed
/// line is an error carrying its 1-based line number.
pub fn parse_qrels(text: &str, annotator_id: &str) -> Result<Vec<Qrel>, CollectionError> {
    let mut qrels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(CollectionError::QrelsParse {
                line: lineno,
                msg: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let grade_raw: i64 = fields[3].parse().map_err(|_| CollectionError::QrelsParse {
            line: lineno,
            msg: format!("grade {:?} is not an integer", fields[3]),
        })?;
        let grade = RelevanceGrade::from_value(grade_raw).map_err(|_| CollectionError::QrelsParse {
            line: lineno,
            msg: format!("grade {grade_raw} out of range 0-3"),
        })?;
        qrels.push(Qrel {
            query_id: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            annotator_id: annotator_id.to_string(),
            grade,
        });
    }
    Ok(qrels)
}

/// Serialize qrels in normalized form: lines sorted by (query_id, doc_id),
/// iteration written as 0, one newline-terminated line per qrel.
///
/// The annotator_id is not part of the 4-column format and is dropped;
/// `parse_qrels(serialize_qrels(x), a)` reproduces x up to that parameter
/// and the sort order.
pub fn serialize_qrels(qrels: &[Qrel]) -> String {
    let mut sorted: Vec<&Qrel> = qrels.iter().collect();
    sorted.sort_by(|a, b| {
        (a.query_id.as_str(), a.doc_id.as_str()).cmp(&(b.query_id.as_str(), b.doc_id.as_str()))
    });
    let mut out = String::new();
    for q in sorted {
        out.push_str(&q.query_id);
        out.push_str(" 0 ");
        out.push_str(&q.doc_id);
        out.push(' ');
        out.push_str(&q.grade.value().to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_line() {
        let qrels = parse_qrels("q1 0 d7 3", "alice").unwrap();
        assert_eq!(
            qrels,
            vec![Qrel {
                query_id: "q1".into(),
                doc_id: "d7".into(),
                annotator_id: "alice".into(),
                grade: RelevanceGrade::HighlyRelevant,
            }]
        );
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(parse_qrels("", "a").unwrap().is_empty());
    }

    #[test]
    fn grade_out_of_range_reports_line() {
        let err = parse_qrels("q1 0 d7 5", "a").unwrap_err();
        match err {
            CollectionError::QrelsParse { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("out of range"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn wrong_field_count_reports_line() {
        let err = parse_qrels("q1 0 d7 3\nq2 0 d8", "a").unwrap_err();
        match err {
            CollectionError::QrelsParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_integer_grade_is_error() {
        assert!(parse_qrels("q1 0 d7 x", "a").is_err());
    }

    #[test]
    fn blank_lines_skipped_and_order_preserved() {
        let qrels = parse_qrels("q2 0 d1 1\n\nq1 0 d2 0\n", "a").unwrap();
        assert_eq!(qrels[0].query_id, "q2");
        assert_eq!(qrels[1].query_id, "q1");
    }

    #[test]
    fn serialize_empty_is_empty_string() {
        assert_eq!(serialize_qrels(&[]), "");
    }

    #[test]
    fn serialize_one_qrel_ends_with_newline() {
        let qrels = parse_qrels("q1 0 d7 3", "a").unwrap();
        assert_eq!(serialize_qrels(&qrels), "q1 0 d7 3\n");
    }

    #[test]
    fn serialize_sorts_by_query_then_doc() {
        let qrels = parse_qrels("q2 0 d1 1\nq1 0 d9 0\nq1 0 d2 2", "a").unwrap();
        assert_eq!(serialize_qrels(&qrels), "q1 0 d2 2\nq1 0 d9 0\nq2 0 d1 1\n");
    }
}
