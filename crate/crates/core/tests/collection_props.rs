//! Property tests for qrels round-tripping, tokenization, and statistics.

use proptest::prelude::*;

use reljudge_core::collection::{
    collection_stats, grade_distribution, parse_qrels, query_stats, serialize_qrels, tokenize,
    Document, Qrel, RelevanceGrade, Topic,
};

fn arb_id() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_.-]{1,10}"
}

fn arb_grade() -> impl Strategy<Value = RelevanceGrade> {
    (0i64..=3).prop_map(|v| RelevanceGrade::from_value(v).unwrap())
}

/// Unique (query_id, doc_id) pairs with random grades, one annotator.
fn arb_qrels(max: usize) -> impl Strategy<Value = Vec<Qrel>> {
    prop::collection::btree_map((arb_id(), arb_id()), arb_grade(), 0..=max).prop_map(|m| {
        m.into_iter()
            .map(|((query_id, doc_id), grade)| Qrel {
                query_id,
                doc_id,
                annotator_id: "anno".into(),
                grade,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Serialize -> parse recovers every qrel (modulo the annotator_id
    /// parameter), and a second serialize is byte-identical.
    #[test]
    fn qrels_round_trip(qrels in arb_qrels(100)) {
        let serialized = serialize_qrels(&qrels);
        let parsed = parse_qrels(&serialized, "anno").unwrap();

        let mut expected = qrels.clone();
        expected.sort_by(|a, b| {
            (a.query_id.as_str(), a.doc_id.as_str()).cmp(&(b.query_id.as_str(), b.doc_id.as_str()))
        });
        prop_assert_eq!(&parsed, &expected);

        let reserialized = serialize_qrels(&parsed);
        prop_assert_eq!(serialized, reserialized);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    /// No token ever contains a character outside the letter/digit classes.
    #[test]
    fn tokens_are_always_alphanumeric(text in "\\PC*") {
        for token in tokenize(&text) {
            prop_assert!(!token.is_empty());
            prop_assert!(token.chars().all(char::is_alphanumeric), "token {token:?}");
        }
    }

    /// tokenize agrees with an independent character-class oracle.
    #[test]
    fn tokenize_matches_regex_oracle(text in "\\PC*") {
        let oracle = regex::Regex::new(r"[\p{Alphabetic}\p{Nd}\p{Nl}\p{No}]+").unwrap();
        let expected: Vec<&str> = oracle.find_iter(&text).map(|m| m.as_str()).collect();
        prop_assert_eq!(tokenize(&text), expected);
    }
}

proptest! {
    /// Proportions always sum to 1 within 1e-9 on non-empty input.
    #[test]
    fn distribution_proportions_sum_to_one(grades in prop::collection::vec(arb_grade(), 1..500)) {
        let qrels: Vec<Qrel> = grades
            .iter()
            .map(|&grade| Qrel {
                query_id: "q".into(),
                doc_id: "d".into(),
                annotator_id: "a".into(),
                grade,
            })
            .collect();
        let dist = grade_distribution(&qrels).unwrap();
        let sum: f64 = dist.proportions.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert_eq!(dist.counts.iter().sum::<u64>(), dist.total);
    }

    /// Document order never changes collection statistics.
    #[test]
    fn stats_are_permutation_invariant(
        mut texts in prop::collection::vec("[ a-z0-9.!-]{0,30}", 1..20),
        seed in any::<u64>(),
    ) {
        let docs: Vec<Document> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i}"), None, t.clone()).unwrap())
            .collect();
        let base = collection_stats(&docs);

        // Deterministic shuffle of the same documents.
        let mut state = seed | 1;
        let mut shuffled = docs;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        prop_assert_eq!(collection_stats(&shuffled), base);
        texts.clear();
    }
}

#[test]
fn grade_distribution_matches_hand_tally_on_500_random_grades() {
    let mut state = 0xfeed_beefu64;
    let mut grades = Vec::new();
    for _ in 0..500 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        grades.push(RelevanceGrade::from_value(((state >> 33) % 4) as i64).unwrap());
    }
    let qrels: Vec<Qrel> = grades
        .iter()
        .enumerate()
        .map(|(i, &grade)| Qrel {
            query_id: format!("q{i}"),
            doc_id: format!("d{i}"),
            annotator_id: "a".into(),
            grade,
        })
        .collect();
    let dist = grade_distribution(&qrels).unwrap();

    let mut tally = [0u64; 4];
    for g in &grades {
        tally[g.value() as usize] += 1;
    }
    assert_eq!(dist.counts, tally);
    for grade in RelevanceGrade::ALL {
        assert_eq!(
            dist.proportion(grade),
            tally[grade.value() as usize] as f64 / 500.0
        );
    }
}

/// Brute-force recount over 1,000 synthetic documents: counts every token
/// of every field through an independent path.
#[test]
fn collection_stats_matches_brute_force_recount() {
    let words = ["uma", "kain", "Dili", "2024", "foun", "ne'e", "ba", "sira-nia"];
    let mut docs = Vec::new();
    let mut state = 7u64;
    for i in 0..1000 {
        let mut text = String::new();
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
        let len = (state >> 33) % 12;
        for k in 0..len {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            if k > 0 {
                text.push(' ');
            }
            text.push_str(words[((state >> 33) % words.len() as u64) as usize]);
        }
        let title = if i % 3 == 0 { Some(format!("Titulu {i}")) } else { None };
        docs.push(Document::new(format!("doc{i}"), title, text).unwrap());
    }

    let stats = collection_stats(&docs);

    // Oracle: flatten all text, re-split with an explicit scanner, count.
    let mut total = 0u64;
    let mut bytes = 0u64;
    let mut distinct = std::collections::BTreeSet::new();
    for doc in &docs {
        for field in [Some(doc.text.as_str()), doc.title.as_deref()].into_iter().flatten() {
            bytes += field.len() as u64;
            let mut current = String::new();
            for c in field.chars().chain(std::iter::once(' ')) {
                if c.is_alphanumeric() {
                    current.push(c);
                } else if !current.is_empty() {
                    total += 1;
                    distinct.insert(std::mem::take(&mut current));
                }
            }
        }
    }
    assert_eq!(stats.num_documents, 1000);
    assert_eq!(stats.total_tokens, total);
    assert_eq!(stats.distinct_tokens, distinct.len() as u64);
    assert_eq!(stats.size_bytes, bytes);
}

/// 61 single-digit word counts cannot average exactly 3.42 (3.42 * 61 is
/// not an integer); the closest achievable mean is 209/61. The generator
/// targets that and the computed average must match it exactly.
#[test]
fn query_stats_on_61_queries_near_published_mean() {
    // 61 counts in [3, 5] summing to 209: forty-five 3s, six 4s, ten 5s.
    let mut counts = vec![3usize; 45];
    counts.extend(vec![4usize; 6]);
    counts.extend(vec![5usize; 10]);
    assert_eq!(counts.len(), 61);
    assert_eq!(counts.iter().sum::<usize>(), 209);

    let topics: Vec<Topic> = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let text = (0..n).map(|k| format!("w{k}")).collect::<Vec<_>>().join(" ");
            Topic::new(format!("q{i}"), text).unwrap()
        })
        .collect();
    let stats = query_stats(&topics).unwrap();
    assert_eq!(stats.num_queries, 61);
    assert_eq!(stats.min_words, 3);
    assert_eq!(stats.max_words, 5);
    assert_eq!(stats.avg_words, 209.0 / 61.0);
    assert!((stats.avg_words - 3.42).abs() < 0.01);
    assert_eq!(format!("{:.2}", stats.avg_words), "3.43");
}
