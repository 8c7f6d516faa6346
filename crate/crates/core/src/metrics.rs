//! Scoring: verification confusion matrices and their derived rates,
//! per-subset (answer-bias) accuracy, inquiry set overlap, per-herb
//! frequency statistics and the failure-pattern detectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MatchMode};
use crate::dataset::{EvalDataset, EvalItem, Expected};
use crate::error::{Error, Result};
use crate::protocols::{parse_ingredients, Protocol, RunLog, RunRecord, Verdict};

/// Binary confusion counts; the positive class is "Yes" (name and list
/// match).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn add(&mut self, expected: Expected, predicted_yes: bool) {
        match (expected, predicted_yes) {
            (Expected::Yes, true) => self.tp += 1,
            (Expected::Yes, false) => self.fn_ += 1,
            (Expected::No, true) => self.fp += 1,
            (Expected::No, false) => self.tn += 1,
        }
    }
}

/// What an unparseable verification answer counts as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// Scored as the wrong answer for its item.
    #[default]
    Incorrect,
    /// Scored as "No".
    AsNo,
    /// Left out of every count and reported separately.
    Exclude,
}

impl InvalidPolicy {
    /// Predicted "Yes"? `None` drops the item.
    fn predicted_yes(self, verdict: Verdict, expected: Expected) -> Option<bool> {
        match verdict {
            Verdict::Yes => Some(true),
            Verdict::No => Some(false),
            Verdict::Invalid => match self {
                InvalidPolicy::Incorrect => Some(expected == Expected::No),
                InvalidPolicy::AsNo => Some(false),
                InvalidPolicy::Exclude => None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub cm: ConfusionMatrix,
    pub invalid_count: usize,
    pub policy: InvalidPolicy,
}

fn require(run: &RunLog, protocol: Protocol) -> Result<()> {
    if run.meta.protocol != protocol {
        return Err(Error::ProtocolMismatch {
            expected: protocol.to_string(),
            found: run.meta.protocol.to_string(),
        });
    }
    Ok(())
}

fn items_by_id(dataset: &EvalDataset) -> HashMap<usize, &EvalItem> {
    dataset.items.iter().map(|i| (i.item_id, i)).collect()
}

fn lookup<'a>(items: &HashMap<usize, &'a EvalItem>, record: &RunRecord) -> Result<&'a EvalItem> {
    items
        .get(&record.item_id)
        .copied()
        .ok_or_else(|| Error::Usage(format!("run has a record for item {} which is not in the dataset", record.item_id)))
}

pub fn confusion(run: &RunLog, dataset: &EvalDataset, policy: InvalidPolicy) -> Result<ConfusionReport> {
    require(run, Protocol::Verify)?;
    let items = items_by_id(dataset);
    let mut cm = ConfusionMatrix::default();
    let mut invalid_count = 0;
    for record in &run.records {
        let item = lookup(&items, record)?;
        let verdict = record.verdict();
        if verdict == Verdict::Invalid {
            invalid_count += 1;
        }
        if let Some(yes) = policy.predicted_yes(verdict, item.expected) {
            cm.add(item.expected, yes);
        }
    }
    Ok(ConfusionReport {
        cm,
        invalid_count,
        policy,
    })
}

/// `num / den` as a percentage rounded half-up to two decimals, computed on
/// integers so ties such as 66.665 are not at the mercy of binary floats.
pub fn percent_half_up(num: u64, den: u64) -> f64 {
    assert!(den > 0, "percentage of an empty denominator");
    let num = num as u128;
    let den = den as u128;
    let hundredths = (20_000 * num + den) / (2 * den);
    hundredths as f64 / 100.0
}

fn percent(num: u64, den: u64) -> f64 {
    100.0 * num as f64 / den as f64
}

/// Accuracy, precision, recall and F1 as percentages at full precision.
/// An undefined precision or recall (empty denominator) is reported as 0
/// with its flag set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub invalid_count: usize,
    pub cm: ConfusionMatrix,
}

impl MetricsRow {
    /// (accuracy, precision, recall, f1) rounded half-up to two decimals.
    pub fn rounded(&self) -> [f64; 4] {
        let cm = &self.cm;
        let or_zero = |num: u64, den: u64| if den == 0 { 0.0 } else { percent_half_up(num, den) };
        [
            or_zero(cm.tp + cm.tn, cm.total()),
            or_zero(cm.tp, cm.tp + cm.fp),
            or_zero(cm.tp, cm.tp + cm.fn_),
            or_zero(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
        ]
    }
}

pub fn prf1(cm: ConfusionMatrix) -> Result<MetricsRow> {
    prf1_with_invalid(cm, 0)
}

pub fn prf1_with_invalid(cm: ConfusionMatrix, invalid_count: usize) -> Result<MetricsRow> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    let predicted_pos = cm.tp + cm.fp;
    let actual_pos = cm.tp + cm.fn_;
    let precision = if predicted_pos == 0 { 0.0 } else { percent(cm.tp, predicted_pos) };
    let recall = if actual_pos == 0 { 0.0 } else { percent(cm.tp, actual_pos) };
    // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn), and is 0 whenever tp is 0
    let f1 = if cm.tp == 0 {
        0.0
    } else {
        percent(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_)
    };
    Ok(MetricsRow {
        accuracy: percent(cm.tp + cm.tn, total),
        precision,
        recall,
        f1,
        precision_undefined: predicted_pos == 0,
        recall_undefined: actual_pos == 0,
        invalid_count,
        cm,
    })
}

/// Accuracy on expected-No and expected-Yes questions separately, as
/// percentages. `None` when a subset has no scored items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub acc_on_expected_no: Option<f64>,
    pub acc_on_expected_yes: Option<f64>,
    /// |yes - no| when both are defined.
    pub bias: Option<f64>,
    pub expected_no_scored: usize,
    pub expected_yes_scored: usize,
}

pub fn bias_accuracy(run: &RunLog, dataset: &EvalDataset, policy: InvalidPolicy) -> Result<BiasReport> {
    let report = confusion(run, dataset, policy)?;
    let cm = report.cm;
    let no_total = cm.fp + cm.tn;
    let yes_total = cm.tp + cm.fn_;
    let acc_no = (no_total > 0).then(|| percent(cm.tn, no_total));
    let acc_yes = (yes_total > 0).then(|| percent(cm.tp, yes_total));
    Ok(BiasReport {
        acc_on_expected_no: acc_no,
        acc_on_expected_yes: acc_yes,
        bias: acc_no.zip(acc_yes).map(|(n, y)| (y - n).abs()),
        expected_no_scored: no_total as usize,
        expected_yes_scored: yes_total as usize,
    })
}

// ---------------------------------------------------------------------------
// inquiry

/// Predicted ingredient keys of an inquiry record, duplicates kept.
pub fn predicted_keys(record: &RunRecord, mode: MatchMode) -> Vec<String> {
    match mode {
        MatchMode::Canonical => record.ingredients().to_vec(),
        MatchMode::WithMarkers => parse_ingredients(&record.raw_response)
            .iter()
            .map(|i| i.key(mode))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetScores {
    /// `None` when nothing was predicted.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: f64,
}

impl SetScores {
    fn from_counts(tp: usize, predicted: usize, oracle: usize) -> Self {
        let precision = (predicted > 0).then(|| tp as f64 / predicted as f64);
        let recall = (oracle > 0).then(|| tp as f64 / oracle as f64);
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (predicted + oracle) as f64
        };
        SetScores { precision, recall, f1 }
    }
}

/// Set overlap between a predicted list (deduplicated) and an oracle set.
pub fn set_scores(predicted: &[String], oracle: &BTreeSet<String>) -> (usize, SetScores) {
    let predicted: BTreeSet<&String> = predicted.iter().collect();
    let tp = predicted.iter().filter(|h| oracle.contains(**h)).count();
    (tp, SetScores::from_counts(tp, predicted.len(), oracle.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub max_run_length: usize,
    pub duplicate_count: usize,
    pub flagged: bool,
}

pub const DEFAULT_REPETITION_THRESHOLD: usize = 3;

/// Longest run of one name in consecutive positions, plus how many entries
/// repeat an earlier one.
pub fn detect_repetition(predicted: &[String], threshold: usize) -> RepetitionReport {
    let mut max_run = 0;
    let mut run = 0;
    for (i, name) in predicted.iter().enumerate() {
        run = if i > 0 && predicted[i - 1] == *name { run + 1 } else { 1 };
        max_run = max_run.max(run);
    }
    let distinct: BTreeSet<&String> = predicted.iter().collect();
    RepetitionReport {
        max_run_length: max_run,
        duplicate_count: predicted.len() - distinct.len(),
        flagged: max_run >= threshold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiteralReport {
    pub flagged: bool,
    pub literal_hits: Vec<String>,
}

/// Predicted names that appear inside the drug name but not in its oracle
/// list.
pub fn detect_literal(drug_name: &str, predicted: &[String], oracle: &BTreeSet<String>) -> LiteralReport {
    let mut hits: Vec<String> = Vec::new();
    for name in predicted {
        if drug_name.contains(name.as_str()) && !oracle.contains(name) && !hits.contains(name) {
            hits.push(name.clone());
        }
    }
    LiteralReport {
        flagged: !hits.is_empty(),
        literal_hits: hits,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub item_id: usize,
    pub drug_name: String,
    pub predicted_count: usize,
    pub oracle_count: usize,
    pub true_positives: usize,
    pub scores: SetScores,
    pub repetition: RepetitionReport,
    pub literal: LiteralReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InquiryReport {
    pub items: Vec<ItemScore>,
    /// Pooled over all (item, herb) pairs.
    pub micro: SetScores,
    /// Means of the per-item values; items with undefined precision are left
    /// out of the precision mean.
    pub macro_avg: SetScores,
    pub repetition_flagged: usize,
    pub literal_flagged: usize,
    pub empty_responses: usize,
}

pub fn inquiry_scores(
    run: &RunLog,
    dataset: &EvalDataset,
    corpus: &Corpus,
    mode: MatchMode,
) -> Result<InquiryReport> {
    require(run, Protocol::Inquiry)?;
    let items = items_by_id(dataset);
    let mut scored = Vec::with_capacity(run.records.len());
    let (mut tp_sum, mut pred_sum, mut oracle_sum) = (0, 0, 0);
    for record in &run.records {
        let item = lookup(&items, record)?;
        let drug = corpus
            .get(&item.drug_name)
            .ok_or_else(|| Error::Usage(format!("drug {} is not in the corpus", item.drug_name)))?;
        let oracle = drug.key_set(mode);
        let predicted = predicted_keys(record, mode);
        let (tp, scores) = set_scores(&predicted, &oracle);
        let distinct = predicted.iter().collect::<BTreeSet<_>>().len();
        tp_sum += tp;
        pred_sum += distinct;
        oracle_sum += oracle.len();
        scored.push(ItemScore {
            item_id: item.item_id,
            drug_name: item.drug_name.clone(),
            predicted_count: distinct,
            oracle_count: oracle.len(),
            true_positives: tp,
            scores,
            repetition: detect_repetition(&predicted, DEFAULT_REPETITION_THRESHOLD),
            literal: detect_literal(&item.drug_name, &predicted, &oracle),
        });
    }
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let macro_avg = SetScores {
        precision: mean(scored.iter().filter_map(|s| s.scores.precision).collect()),
        recall: mean(scored.iter().filter_map(|s| s.scores.recall).collect()),
        f1: mean(scored.iter().map(|s| s.scores.f1).collect()).unwrap_or(0.0),
    };
    Ok(InquiryReport {
        micro: SetScores::from_counts(tp_sum, pred_sum, oracle_sum),
        macro_avg,
        repetition_flagged: scored.iter().filter(|s| s.repetition.flagged).count(),
        literal_flagged: scored.iter().filter(|s| s.literal.flagged).count(),
        empty_responses: scored.iter().filter(|s| s.predicted_count == 0).count(),
        items: scored,
    })
}

/// Per-ingredient counts over (drug, herb) membership pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerbStats {
    pub herb: String,
    /// Drugs whose oracle list contains the herb.
    pub oracle_freq: usize,
    /// Responses naming the herb at least once.
    pub response_freq: usize,
    /// Mentions across all responses, repeats included.
    pub total_mentions: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Herb statistics sorted by oracle frequency (descending) then name.
pub fn herb_frequency(
    run: &RunLog,
    corpus: &Corpus,
    dataset: &EvalDataset,
    mode: MatchMode,
) -> Result<Vec<HerbStats>> {
    require(run, Protocol::Inquiry)?;
    let items = items_by_id(dataset);
    #[derive(Default)]
    struct Counts {
        oracle: usize,
        response: usize,
        mentions: usize,
        tp: usize,
        fp: usize,
        fn_: usize,
    }
    let mut table: BTreeMap<String, Counts> = BTreeMap::new();
    for record in &run.records {
        let item = lookup(&items, record)?;
        let oracle = corpus
            .get(&item.drug_name)
            .ok_or_else(|| Error::Usage(format!("drug {} is not in the corpus", item.drug_name)))?
            .key_set(mode);
        let predicted_list = predicted_keys(record, mode);
        let predicted: BTreeSet<&String> = predicted_list.iter().collect();
        for herb in &predicted_list {
            table.entry(herb.clone()).or_default().mentions += 1;
        }
        for herb in &predicted {
            let c = table.entry((*herb).clone()).or_default();
            c.response += 1;
            if oracle.contains(*herb) {
                c.tp += 1;
            } else {
                c.fp += 1;
            }
        }
        for herb in &oracle {
            let c = table.entry(herb.clone()).or_default();
            c.oracle += 1;
            if !predicted.contains(herb) {
                c.fn_ += 1;
            }
        }
    }
    let mut stats: Vec<HerbStats> = table
        .into_iter()
        .map(|(herb, c)| HerbStats {
            herb,
            oracle_freq: c.oracle,
            response_freq: c.response,
            total_mentions: c.mentions,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision: (c.response > 0).then(|| c.tp as f64 / c.response as f64),
            recall: (c.oracle > 0).then(|| c.tp as f64 / c.oracle as f64),
        })
        .collect();
    stats.sort_by(|a, b| b.oracle_freq.cmp(&a.oracle_freq).then_with(|| a.herb.cmp(&b.herb)));
    Ok(stats)
}

/// The `n` herbs with the highest and the `n` with the lowest oracle
/// frequency, ties broken by name. Herbs that never occur in an oracle list
/// are left out of both.
pub fn top_bottom_herb_report(stats: &[HerbStats], n: usize) -> (Vec<HerbStats>, Vec<HerbStats>) {
    let mut oracle: Vec<&HerbStats> = stats.iter().filter(|s| s.oracle_freq > 0).collect();
    oracle.sort_by(|a, b| b.oracle_freq.cmp(&a.oracle_freq).then_with(|| a.herb.cmp(&b.herb)));
    let top = oracle.iter().take(n).map(|s| (*s).clone()).collect();
    oracle.sort_by(|a, b| a.oracle_freq.cmp(&b.oracle_freq).then_with(|| a.herb.cmp(&b.herb)));
    let bottom = oracle.iter().take(n).map(|s| (*s).clone()).collect();
    (top, bottom)
}
