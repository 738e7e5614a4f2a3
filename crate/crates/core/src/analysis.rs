//! Joining model runs with human qrels into agreement reports and tables.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::collection::{grade_distribution, GradeDistribution, Qrel, RelevanceGrade, GOLD_ANNOTATOR};
use crate::metrics::{cohen_kappa, confusion_matrix, ConfusionMatrix, KappaResult, MetricsError};
use crate::runner::RunRecord;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Collection(#[from] crate::collection::CollectionError),
    #[error("run records mix ({0}, {1}) with ({2}, {3}); analyze one (model, temperature) group at a time")]
    MixedRecords(String, f64, String, f64),
    #[error("no run records")]
    EmptyRun,
    #[error("duplicate run record for ({0}, {1})")]
    DuplicateRunRecord(String, String),
    #[error("duplicate qrel for ({query_id}, {doc_id}) by annotator {annotator_id}")]
    DuplicateQrel {
        query_id: String,
        doc_id: String,
        annotator_id: String,
    },
    #[error("qrels contain no {GOLD_ANNOTATOR:?} labels for gold-mode agreement")]
    NoGoldLabels,
    #[error("qrels contain no per-annotator labels for average-mode agreement")]
    NoAnnotators,
    #[error("run and qrels share no resolvable pair")]
    NoOverlap,
    #[error("all annotator kappas are degenerate")]
    AllDegenerate,
    #[error("reports were computed against different qrels or modes and cannot be compared")]
    ProvenanceMismatch,
    #[error("kappa is degenerate, comparison undefined")]
    DegenerateKappa,
}

/// Which human reference the model is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgreementMode {
    /// Compare against the consolidated labels (annotator_id "gold").
    Gold,
    /// Mean pairwise kappa of the model against each human annotator.
    PerAnnotatorAverage,
}

impl std::fmt::Display for AgreementMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AgreementMode::Gold => write!(f, "gold"),
            AgreementMode::PerAnnotatorAverage => write!(f, "average"),
        }
    }
}

/// Agreement between one model run and human judgments.
///
/// In gold mode `confusion`/`kappa` are model vs. gold over the aligned
/// pairs. In average mode items are (pair, annotator) judgments pooled
/// into `confusion`, and `kappa_mean_pairwise` carries the headline
/// statistic: the mean of the model's kappa against each annotator.
#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub model_name: String,
    pub temperature: f64,
    pub mode: AgreementMode,
    pub qrels_fingerprint: String,
    pub pairs_compared: u64,
    pub pairs_excluded: u64,
    pub confusion: ConfusionMatrix,
    pub kappa: KappaResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_mean_pairwise: Option<f64>,
    pub grade_distribution_model: GradeDistribution,
    pub grade_distribution_human: GradeDistribution,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_annotator_kappa: Option<BTreeMap<String, KappaResult>>,
}

impl AgreementReport {
    /// The statistic a summary table reports for this mode; None when
    /// degenerate.
    pub fn headline_kappa(&self) -> Option<f64> {
        match self.mode {
            AgreementMode::Gold => self.kappa.kappa,
            AgreementMode::PerAnnotatorAverage => self.kappa_mean_pairwise,
        }
    }
}

/// Kappa delta between two runs scored against the same qrels.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunComparison {
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub delta: f64,
}

impl RunComparison {
    pub fn between(kappa_a: f64, kappa_b: f64) -> Self {
        RunComparison {
            kappa_a,
            kappa_b,
            delta: kappa_b - kappa_a,
        }
    }

    /// Presentation form, 4 decimals with explicit sign: "-0.0040".
    pub fn delta_display(&self) -> String {
        format!("{:+.4}", self.delta)
    }
}

/// Content fingerprint of a qrels set, independent of record order.
pub fn qrels_fingerprint(qrels: &[Qrel]) -> String {
    let mut lines: Vec<String> = qrels
        .iter()
        .map(|q| {
            format!(
                "{}\u{0}{}\u{0}{}\u{0}{}",
                q.query_id,
                q.doc_id,
                q.annotator_id,
                q.grade.value()
            )
        })
        .collect();
    lines.sort();
    let mut hasher = Sha256::new();
    for line in lines {
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Model scores keyed by pair; None marks a failed pair.
fn model_scores(
    records: &[RunRecord],
) -> Result<BTreeMap<(String, String), Option<RelevanceGrade>>, AnalysisError> {
    let first = records.first().ok_or(AnalysisError::EmptyRun)?;
    let mut scores = BTreeMap::new();
    for r in records {
        if r.model_name != first.model_name || r.temperature != first.temperature {
            return Err(AnalysisError::MixedRecords(
                first.model_name.clone(),
                first.temperature,
                r.model_name.clone(),
                r.temperature,
            ));
        }
        if scores
            .insert((r.query_id.clone(), r.doc_id.clone()), r.score)
            .is_some()
        {
            return Err(AnalysisError::DuplicateRunRecord(
                r.query_id.clone(),
                r.doc_id.clone(),
            ));
        }
    }
    Ok(scores)
}

/// Human labels per annotator, keyed by pair, uniqueness enforced.
fn annotator_labels(
    qrels: &[Qrel],
) -> Result<BTreeMap<String, BTreeMap<(String, String), RelevanceGrade>>, AnalysisError> {
    let mut by_annotator: BTreeMap<String, BTreeMap<(String, String), RelevanceGrade>> =
        BTreeMap::new();
    for q in qrels {
        let labels = by_annotator.entry(q.annotator_id.clone()).or_default();
        if labels
            .insert((q.query_id.clone(), q.doc_id.clone()), q.grade)
            .is_some()
        {
            return Err(AnalysisError::DuplicateQrel {
                query_id: q.query_id.clone(),
                doc_id: q.doc_id.clone(),
                annotator_id: q.annotator_id.clone(),
            });
        }
    }
    Ok(by_annotator)
}

/// Align one annotator's labels with the model's: returns aligned
/// (model, human) grades and how many of the annotator's pairs were
/// excluded because the model failed or never judged them.
fn align(
    human: &BTreeMap<(String, String), RelevanceGrade>,
    model: &BTreeMap<(String, String), Option<RelevanceGrade>>,
) -> (Vec<RelevanceGrade>, Vec<RelevanceGrade>, u64) {
    let mut model_grades = Vec::new();
    let mut human_grades = Vec::new();
    let mut excluded = 0u64;
    for (pair, &grade) in human {
        match model.get(pair) {
            Some(Some(score)) => {
                model_grades.push(*score);
                human_grades.push(grade);
            }
            _ => excluded += 1,
        }
    }
    (model_grades, human_grades, excluded)
}

fn pooled_distribution(grades: &[RelevanceGrade]) -> Result<GradeDistribution, AnalysisError> {
    let qrels: Vec<Qrel> = grades
        .iter()
        .map(|&g| Qrel {
            query_id: String::new(),
            doc_id: String::new(),
            annotator_id: String::new(),
            grade: g,
        })
        .collect();
    Ok(grade_distribution(&qrels)?)
}

/// Compare a model run against human qrels.
///
/// Pairs are aligned on (query_id, doc_id). Human pairs the model failed
/// or never judged are excluded and counted; model records for pairs
/// absent from the qrels are ignored. All records must share one
/// (model_name, temperature).
pub fn agreement(
    records: &[RunRecord],
    qrels: &[Qrel],
    mode: AgreementMode,
) -> Result<AgreementReport, AnalysisError> {
    let model = model_scores(records)?;
    let by_annotator = annotator_labels(qrels)?;
    let first = &records[0];
    let fingerprint = qrels_fingerprint(qrels);

    match mode {
        AgreementMode::Gold => {
            let gold = by_annotator.get(GOLD_ANNOTATOR).ok_or(AnalysisError::NoGoldLabels)?;
            let (model_grades, human_grades, excluded) = align(gold, &model);
            if model_grades.is_empty() {
                return Err(AnalysisError::NoOverlap);
            }
            let confusion = confusion_matrix(&model_grades, &human_grades)?;
            let kappa = cohen_kappa(&confusion)?;
            Ok(AgreementReport {
                model_name: first.model_name.clone(),
                temperature: first.temperature,
                mode,
                qrels_fingerprint: fingerprint,
                pairs_compared: confusion.n(),
                pairs_excluded: excluded,
                confusion,
                kappa,
                kappa_mean_pairwise: None,
                grade_distribution_model: pooled_distribution(&model_grades)?,
                grade_distribution_human: pooled_distribution(&human_grades)?,
                per_annotator_kappa: None,
            })
        }
        AgreementMode::PerAnnotatorAverage => {
            let annotators: Vec<(&String, &BTreeMap<(String, String), RelevanceGrade>)> =
                by_annotator.iter().filter(|(id, _)| id.as_str() != GOLD_ANNOTATOR).collect();
            if annotators.is_empty() {
                return Err(AnalysisError::NoAnnotators);
            }

            let mut pooled_model: Vec<RelevanceGrade> = Vec::new();
            let mut pooled_human: Vec<RelevanceGrade> = Vec::new();
            let mut excluded = 0u64;
            let mut per_annotator = BTreeMap::new();
            let mut compared_pairs: BTreeSet<(String, String)> = BTreeSet::new();

            for (id, labels) in annotators {
                let (model_grades, human_grades, ex) = align(labels, &model);
                excluded += ex;
                if model_grades.is_empty() {
                    continue;
                }
                for pair in labels.keys() {
                    if matches!(model.get(pair), Some(Some(_))) {
                        compared_pairs.insert(pair.clone());
                    }
                }
                let m = confusion_matrix(&model_grades, &human_grades)?;
                per_annotator.insert(id.clone(), cohen_kappa(&m)?);
                pooled_model.extend(model_grades);
                pooled_human.extend(human_grades);
            }
            if pooled_model.is_empty() {
                return Err(AnalysisError::NoOverlap);
            }

            let kappas: Vec<f64> =
                per_annotator.values().filter_map(|k: &KappaResult| k.kappa).collect();
            if kappas.is_empty() {
                return Err(AnalysisError::AllDegenerate);
            }
            let mean = kappas.iter().sum::<f64>() / kappas.len() as f64;

            // The distinct pairs that were compared, one model grade each.
            let model_pair_grades: Vec<RelevanceGrade> = compared_pairs
                .iter()
                .filter_map(|pair| model.get(pair).copied().flatten())
                .collect();

            let confusion = confusion_matrix(&pooled_model, &pooled_human)?;
            let kappa = cohen_kappa(&confusion)?;
            Ok(AgreementReport {
                model_name: first.model_name.clone(),
                temperature: first.temperature,
                mode,
                qrels_fingerprint: fingerprint,
                pairs_compared: confusion.n(),
                pairs_excluded: excluded,
                confusion,
                kappa,
                kappa_mean_pairwise: Some(mean),
                grade_distribution_model: pooled_distribution(&model_pair_grades)?,
                grade_distribution_human: pooled_distribution(&pooled_human)?,
                per_annotator_kappa: Some(per_annotator),
            })
        }
    }
}

/// Split run records into per-(model, temperature) groups, sorted.
pub fn group_records(records: &[RunRecord]) -> Vec<Vec<RunRecord>> {
    let mut groups: BTreeMap<(String, u64), Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.model_name.clone(), r.temperature.to_bits()))
            .or_default()
            .push(r.clone());
    }
    groups.into_values().collect()
}

/// Delta between two reports computed against the same qrels and mode.
pub fn compare_runs(a: &AgreementReport, b: &AgreementReport) -> Result<RunComparison, AnalysisError> {
    if a.qrels_fingerprint != b.qrels_fingerprint || a.mode != b.mode {
        return Err(AnalysisError::ProvenanceMismatch);
    }
    let (Some(kappa_a), Some(kappa_b)) = (a.headline_kappa(), b.headline_kappa()) else {
        return Err(AnalysisError::DegenerateKappa);
    };
    Ok(RunComparison::between(kappa_a, kappa_b))
}

fn kappa_cell(report: &AgreementReport) -> String {
    match report.headline_kappa() {
        Some(k) => format!("{k:.4}"),
        None => "degenerate".to_string(),
    }
}

fn column_label(report: &AgreementReport) -> String {
    format!("{}@{}", report.model_name, report.temperature)
}

/// Aligned plain-text table: one column per report, columns ordered by
/// (model_name, temperature).
pub fn summary_table(reports: &[AgreementReport]) -> String {
    let mut sorted: Vec<&AgreementReport> = reports.iter().collect();
    sorted.sort_by(|a, b| {
        a.model_name
            .cmp(&b.model_name)
            .then(a.temperature.total_cmp(&b.temperature))
    });

    let rows: Vec<(&str, Vec<String>)> = vec![
        ("model", sorted.iter().map(|r| column_label(r)).collect()),
        ("kappa", sorted.iter().map(|r| kappa_cell(r)).collect()),
        ("compared", sorted.iter().map(|r| r.pairs_compared.to_string()).collect()),
        ("excluded", sorted.iter().map(|r| r.pairs_excluded.to_string()).collect()),
        ("mode", sorted.iter().map(|r| r.mode.to_string()).collect()),
    ];

    let label_width = rows.iter().map(|(label, _)| label.len()).max().unwrap_or(0);
    let mut col_widths = vec![0usize; sorted.len()];
    for (_, cells) in &rows {
        for (i, cell) in cells.iter().enumerate() {
            col_widths[i] = col_widths[i].max(cell.len());
        }
    }

    let mut out = String::new();
    for (label, cells) in &rows {
        out.push_str(&format!("{label:<label_width$}"));
        for (i, cell) in cells.iter().enumerate() {
            out.push_str(&format!("  {cell:>width$}", width = col_widths[i]));
        }
        out.push('\n');
    }
    out
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// CSV rendering: one row per report, ordered like [`summary_table`].
pub fn summary_csv(reports: &[AgreementReport]) -> String {
    let mut sorted: Vec<&AgreementReport> = reports.iter().collect();
    sorted.sort_by(|a, b| {
        a.model_name
            .cmp(&b.model_name)
            .then(a.temperature.total_cmp(&b.temperature))
    });
    let mut out = String::from("model,temperature,mode,kappa,pairs_compared,pairs_excluded\n");
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_escape(&r.model_name),
            r.temperature,
            r.mode,
            kappa_cell(r),
            r.pairs_compared,
            r.pairs_excluded
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collection::parse_qrels;

    fn record(qid: &str, did: &str, score: Option<u8>) -> RunRecord {
        RunRecord {
            query_id: qid.into(),
            doc_id: did.into(),
            model_name: "m1".into(),
            temperature: 0.0,
            score: score.map(|s| RelevanceGrade::from_value(s as i64).unwrap()),
            reason: "r".into(),
            input_tokens: 10,
            output_tokens: 5,
            attempts: 1,
            latency_ms: 0,
            timestamp_ms: 0,
            usage_estimated: false,
        }
    }

    fn gold_qrels(lines: &str) -> Vec<Qrel> {
        parse_qrels(lines, GOLD_ANNOTATOR).unwrap()
    }

    #[test]
    fn run_identical_to_gold_has_kappa_one() {
        let qrels = gold_qrels("q1 0 d1 0\nq1 0 d2 2\nq2 0 d1 3\nq2 0 d2 1");
        let records: Vec<RunRecord> = qrels
            .iter()
            .map(|q| record(&q.query_id, &q.doc_id, Some(q.grade.value())))
            .collect();
        let report = agreement(&records, &qrels, AgreementMode::Gold).unwrap();
        assert_eq!(report.kappa.kappa, Some(1.0));
        assert_eq!(report.pairs_excluded, 0);
        assert_eq!(report.pairs_compared, 4);
    }

    #[test]
    fn missing_and_failed_pairs_are_excluded_and_counted() {
        let qrels = gold_qrels("q1 0 d1 0\nq1 0 d2 2\nq2 0 d1 3\nq2 0 d2 1");
        let records = vec![
            record("q1", "d1", Some(0)),
            record("q1", "d2", Some(2)),
            record("q2", "d1", None), // failed
                                      // q2/d2 missing entirely
        ];
        let report = agreement(&records, &qrels, AgreementMode::Gold).unwrap();
        assert_eq!(report.pairs_compared, 2);
        assert_eq!(report.pairs_excluded, 2);
        assert_eq!(report.pairs_compared + report.pairs_excluded, 4);
    }

    #[test]
    fn agreement_ignores_record_order() {
        let qrels = gold_qrels("q1 0 d1 0\nq1 0 d2 2\nq2 0 d1 3");
        let mut records = vec![
            record("q1", "d1", Some(1)),
            record("q1", "d2", Some(2)),
            record("q2", "d1", Some(0)),
        ];
        let a = agreement(&records, &qrels, AgreementMode::Gold).unwrap();
        records.reverse();
        let b = agreement(&records, &qrels, AgreementMode::Gold).unwrap();
        assert_eq!(a.kappa, b.kappa);
        assert_eq!(a.confusion, b.confusion);
    }

    #[test]
    fn zero_overlap_is_error() {
        let qrels = gold_qrels("q1 0 d1 0");
        let records = vec![record("q9", "d9", Some(1))];
        assert!(matches!(
            agreement(&records, &qrels, AgreementMode::Gold),
            Err(AnalysisError::NoOverlap)
        ));
    }

    #[test]
    fn mixed_model_groups_rejected() {
        let qrels = gold_qrels("q1 0 d1 0");
        let mut second = record("q1", "d1", Some(1));
        second.model_name = "m2".into();
        let records = vec![record("q1", "d1", Some(1)), second];
        assert!(matches!(
            agreement(&records, &qrels, AgreementMode::Gold),
            Err(AnalysisError::MixedRecords(..))
        ));
    }

    #[test]
    fn average_mode_means_per_annotator_kappas() {
        // Two annotators over the same three pairs.
        let mut qrels = parse_qrels("q1 0 d1 0\nq1 0 d2 2\nq2 0 d1 3", "ana").unwrap();
        qrels.extend(parse_qrels("q1 0 d1 0\nq1 0 d2 1\nq2 0 d1 3", "rui").unwrap());
        let records = vec![
            record("q1", "d1", Some(0)),
            record("q1", "d2", Some(2)),
            record("q2", "d1", Some(3)),
        ];
        let report = agreement(&records, &qrels, AgreementMode::PerAnnotatorAverage).unwrap();
        assert_eq!(report.pairs_compared, 6);
        let per = report.per_annotator_kappa.as_ref().unwrap();
        assert_eq!(per.len(), 2);
        let expected =
            (per["ana"].kappa.unwrap() + per["rui"].kappa.unwrap()) / 2.0;
        assert_eq!(report.kappa_mean_pairwise, Some(expected));
        assert_eq!(per["ana"].kappa, Some(1.0));
    }

    #[test]
    fn average_mode_without_annotators_errors() {
        let qrels = gold_qrels("q1 0 d1 0");
        let records = vec![record("q1", "d1", Some(0))];
        assert!(matches!(
            agreement(&records, &qrels, AgreementMode::PerAnnotatorAverage),
            Err(AnalysisError::NoAnnotators)
        ));
    }

    #[test]
    fn gold_mode_without_gold_errors() {
        let qrels = parse_qrels("q1 0 d1 0", "ana").unwrap();
        let records = vec![record("q1", "d1", Some(0))];
        assert!(matches!(
            agreement(&records, &qrels, AgreementMode::Gold),
            Err(AnalysisError::NoGoldLabels)
        ));
    }

    #[test]
    fn compare_requires_same_provenance() {
        let qrels = gold_qrels("q1 0 d1 0\nq1 0 d2 2");
        let other = gold_qrels("q1 0 d1 1\nq1 0 d2 2");
        let records = vec![record("q1", "d1", Some(0)), record("q1", "d2", Some(2))];
        let a = agreement(&records, &qrels, AgreementMode::Gold).unwrap();
        let b = agreement(&records, &other, AgreementMode::Gold).unwrap();
        assert!(matches!(
            compare_runs(&a, &b),
            Err(AnalysisError::ProvenanceMismatch)
        ));
        let same = agreement(&records, &qrels, AgreementMode::Gold).unwrap();
        let cmp = compare_runs(&a, &same).unwrap();
        assert_eq!(cmp.delta, 0.0);
    }

    #[test]
    fn comparison_delta_is_signed_subtraction() {
        let cmp = RunComparison::between(0.2634, 0.2594);
        assert!((cmp.delta - (-0.004)).abs() < 1e-12);
        assert_eq!(cmp.delta_display(), "-0.0040");
        let up = RunComparison::between(0.2450, 0.2462);
        assert_eq!(up.delta_display(), "+0.0012");
    }

    #[test]
    fn summary_table_sorts_columns_by_model_name() {
        let qrels = gold_qrels("q1 0 d1 0\nq1 0 d2 2\nq2 0 d1 3");
        let make = |name: &str| {
            let records: Vec<RunRecord> = qrels
                .iter()
                .map(|q| {
                    let mut r = record(&q.query_id, &q.doc_id, Some(q.grade.value()));
                    r.model_name = name.into();
                    r
                })
                .collect();
            agreement(&records, &qrels, AgreementMode::Gold).unwrap()
        };
        let reports = vec![make("zeta"), make("alpha")];
        let table = summary_table(&reports);
        let alpha = table.find("alpha@0").unwrap();
        let zeta = table.find("zeta@0").unwrap();
        assert!(alpha < zeta);
        assert!(table.contains("1.0000"));

        let csv = summary_csv(&reports);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "model,temperature,mode,kappa,pairs_compared,pairs_excluded"
        );
        assert!(lines.next().unwrap().starts_with("alpha,0,gold,1.0000,3,0"));
    }
}
