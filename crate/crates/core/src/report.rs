//! Score artifacts (metrics JSON, CSV tables, manifest) and the markdown
//! comparison report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MatchMode};
use crate::dataset::EvalDataset;
use crate::digest::file_fingerprint;
use crate::error::{Error, Result};
use crate::metrics::{
    bias_accuracy, confusion, herb_frequency, inquiry_scores, prf1_with_invalid, top_bottom_herb_report,
    BiasReport, HerbStats, InquiryReport, InvalidPolicy, ItemScore, MetricsRow, SetScores,
};
use crate::protocols::{Protocol, RunLog};
use crate::providers::{BiasMode, ProviderConfig, ProviderKind};

pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// First line (or first field) of every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub tool_version: String,
    pub artifact: String,
    /// Input name to content fingerprint.
    pub inputs: BTreeMap<String, String>,
}

impl ArtifactMeta {
    pub fn new(artifact: &str, inputs: BTreeMap<String, String>) -> Self {
        ArtifactMeta {
            tool_version: crate::TOOL_VERSION.to_string(),
            artifact: artifact.to_string(),
            inputs,
        }
    }

    fn for_artifact(&self, artifact: &str) -> Self {
        ArtifactMeta {
            artifact: artifact.to_string(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundedRow {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyScores {
    pub policy: InvalidPolicy,
    pub row: MetricsRow,
    pub rounded: RoundedRow,
    pub bias: BiasReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InquirySummary {
    pub micro: SetScores,
    pub macro_avg: SetScores,
    pub repetition_flagged: usize,
    pub literal_flagged: usize,
    pub empty_responses: usize,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub meta: ArtifactMeta,
    pub label: String,
    pub protocol: Protocol,
    pub provider_kind: ProviderKind,
    pub match_mode: MatchMode,
    pub item_count: usize,
    pub error_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inquiry: Option<InquirySummary>,
}

/// Everything `score` computes for one run.
#[derive(Debug, Clone)]
pub struct Scored {
    pub summary: ScoreSummary,
    pub items: Vec<ItemScore>,
    pub herbs: Vec<HerbStats>,
}

/// Display name for a provider configuration: the model name when there is
/// one, otherwise the provider kind; RAG wraps its inner label.
pub fn default_label(config: &ProviderConfig) -> String {
    let base = match (&config.model_name, config.kind, config.bias) {
        (Some(model), _, _) => model.clone(),
        (None, ProviderKind::Biased, Some(mode)) => match mode {
            BiasMode::AlwaysYes => "always_yes".to_string(),
            BiasMode::AlwaysNo => "always_no".to_string(),
            BiasMode::Bernoulli { p, seed } => format!("bernoulli(p={p}, seed={seed})"),
        },
        (None, kind, _) => serde_json::to_value(kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
    };
    match (config.kind, &config.inner) {
        (ProviderKind::Rag, Some(inner)) => format!("rag({})", default_label(inner)),
        _ => base,
    }
}

/// Checks that the run was produced from `dataset` and the dataset from
/// `corpus`.
pub fn check_fingerprints(run: &RunLog, dataset: &EvalDataset, corpus: &Corpus) -> Result<()> {
    let dataset_fp = dataset.fingerprint();
    if run.meta.dataset_fingerprint != dataset_fp {
        return Err(Error::FingerprintMismatch {
            what: "dataset",
            expected: dataset_fp,
            found: run.meta.dataset_fingerprint.clone(),
        });
    }
    if dataset.meta.corpus_fingerprint != corpus.fingerprint() {
        return Err(Error::FingerprintMismatch {
            what: "corpus",
            expected: corpus.fingerprint().to_string(),
            found: dataset.meta.corpus_fingerprint.clone(),
        });
    }
    Ok(())
}

pub fn score_run(
    run: &RunLog,
    dataset: &EvalDataset,
    corpus: &Corpus,
    mode: MatchMode,
    policy: InvalidPolicy,
    label: &str,
) -> Result<Scored> {
    check_fingerprints(run, dataset, corpus)?;
    let inputs = BTreeMap::from([
        ("corpus".to_string(), corpus.fingerprint().to_string()),
        ("dataset".to_string(), dataset.fingerprint()),
        ("run".to_string(), run_fingerprint(run)),
    ]);
    let mut summary = ScoreSummary {
        meta: ArtifactMeta::new(METRICS_FILE, inputs),
        label: label.to_string(),
        protocol: run.meta.protocol,
        provider_kind: run.meta.provider.kind,
        match_mode: mode,
        item_count: run.records.len(),
        error_count: run.error_count(),
        verify: None,
        inquiry: None,
    };
    let mut items = Vec::new();
    let mut herbs = Vec::new();
    match run.meta.protocol {
        Protocol::Verify => {
            let report = confusion(run, dataset, policy)?;
            let row = prf1_with_invalid(report.cm, report.invalid_count)?;
            let [accuracy, precision, recall, f1] = row.rounded();
            summary.verify = Some(VerifyScores {
                policy,
                row,
                rounded: RoundedRow {
                    accuracy,
                    precision,
                    recall,
                    f1,
                },
                bias: bias_accuracy(run, dataset, policy)?,
            });
        }
        Protocol::Inquiry => {
            let InquiryReport {
                items: scored,
                micro,
                macro_avg,
                repetition_flagged,
                literal_flagged,
                empty_responses,
            } = inquiry_scores(run, dataset, corpus, mode)?;
            summary.inquiry = Some(InquirySummary {
                micro,
                macro_avg,
                repetition_flagged,
                literal_flagged,
                empty_responses,
            });
            items = scored;
            herbs = herb_frequency(run, corpus, dataset, mode)?;
        }
    }
    Ok(Scored { summary, items, herbs })
}

/// Fingerprint of a run's records, independent of timestamps in the header.
pub fn run_fingerprint(run: &RunLog) -> String {
    let mut h = crate::digest::Sha256Hex::new();
    for r in &run.records {
        h.update(r.item_id.to_string().as_bytes());
        h.update(b"\t");
        h.update(r.raw_response.as_bytes());
        h.update(b"\n");
    }
    h.finish()
}

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    x.map(|v| format!("{v:.digits$}")).unwrap_or_default()
}

fn csv_bytes(meta: &ArtifactMeta, header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"# ");
    out.extend_from_slice(serde_json::to_string(meta).expect("meta serializes").as_bytes());
    out.push(b'\n');
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn herb_rows(herbs: &[HerbStats]) -> Vec<Vec<String>> {
    herbs
        .iter()
        .map(|h| {
            vec![
                h.herb.clone(),
                h.oracle_freq.to_string(),
                h.response_freq.to_string(),
                h.total_mentions.to_string(),
                h.tp.to_string(),
                h.fp.to_string(),
                h.fn_.to_string(),
                fmt_opt(h.precision, 6),
                fmt_opt(h.recall, 6),
            ]
        })
        .collect()
}

const HERB_HEADER: [&str; 9] = [
    "herb",
    "oracle_freq",
    "response_freq",
    "total_mentions",
    "tp",
    "fp",
    "fn",
    "precision",
    "recall",
];

/// Renders every artifact for a scored run as (file name, bytes), in a fixed
/// order.
pub fn render_artifacts(scored: &Scored, top_n: usize) -> Vec<(String, Vec<u8>)> {
    let s = &scored.summary;
    let mut files = Vec::new();
    let mut json = serde_json::to_vec_pretty(s).expect("summary serializes");
    json.push(b'\n');
    files.push((METRICS_FILE.to_string(), json));

    if let Some(v) = &s.verify {
        let cm = v.row.cm;
        files.push((
            "metrics_table.csv".into(),
            csv_bytes(
                &s.meta.for_artifact("metrics_table.csv"),
                &[
                    "label",
                    "accuracy",
                    "precision",
                    "recall",
                    "f1",
                    "tp",
                    "fp",
                    "fn",
                    "tn",
                    "invalid_count",
                    "precision_undefined",
                    "recall_undefined",
                ],
                vec![vec![
                    s.label.clone(),
                    fmt2(v.rounded.accuracy),
                    fmt2(v.rounded.precision),
                    fmt2(v.rounded.recall),
                    fmt2(v.rounded.f1),
                    cm.tp.to_string(),
                    cm.fp.to_string(),
                    cm.fn_.to_string(),
                    cm.tn.to_string(),
                    v.row.invalid_count.to_string(),
                    v.row.precision_undefined.to_string(),
                    v.row.recall_undefined.to_string(),
                ]],
            ),
        ));
        files.push((
            "bias.csv".into(),
            csv_bytes(
                &s.meta.for_artifact("bias.csv"),
                &["label", "acc_on_expected_no", "acc_on_expected_yes", "bias"],
                vec![vec![
                    s.label.clone(),
                    fmt_opt(v.bias.acc_on_expected_no, 2),
                    fmt_opt(v.bias.acc_on_expected_yes, 2),
                    fmt_opt(v.bias.bias, 2),
                ]],
            ),
        ));
    }

    if s.inquiry.is_some() {
        let item_rows = scored
            .items
            .iter()
            .map(|i| {
                vec![
                    i.item_id.to_string(),
                    i.drug_name.clone(),
                    i.predicted_count.to_string(),
                    i.oracle_count.to_string(),
                    i.true_positives.to_string(),
                    fmt_opt(i.scores.precision, 6),
                    fmt_opt(i.scores.recall, 6),
                    format!("{:.6}", i.scores.f1),
                    i.repetition.max_run_length.to_string(),
                    i.repetition.duplicate_count.to_string(),
                    i.repetition.flagged.to_string(),
                    i.literal.literal_hits.join("、"),
                ]
            })
            .collect();
        files.push((
            "inquiry_items.csv".into(),
            csv_bytes(
                &s.meta.for_artifact("inquiry_items.csv"),
                &[
                    "item_id",
                    "drug_name",
                    "predicted_count",
                    "oracle_count",
                    "true_positives",
                    "precision",
                    "recall",
                    "f1",
                    "max_run_length",
                    "duplicate_count",
                    "repetition_flagged",
                    "literal_hits",
                ],
                item_rows,
            ),
        ));
        files.push((
            "herb_frequency.csv".into(),
            csv_bytes(
                &s.meta.for_artifact("herb_frequency.csv"),
                &HERB_HEADER,
                herb_rows(&scored.herbs),
            ),
        ));
        let (top, bottom) = top_bottom_herb_report(&scored.herbs, top_n);
        files.push((
            "herb_prf_top.csv".into(),
            csv_bytes(&s.meta.for_artifact("herb_prf_top.csv"), &HERB_HEADER, herb_rows(&top)),
        ));
        files.push((
            "herb_prf_bottom.csv".into(),
            csv_bytes(
                &s.meta.for_artifact("herb_prf_bottom.csv"),
                &HERB_HEADER,
                herb_rows(&bottom),
            ),
        ));
    }
    files
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

impl FileRef {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileRef {
            path: path.display().to_string(),
            sha256: file_fingerprint(path)?,
        })
    }
}

/// Inputs, configuration and outputs of one `score` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub corpus: FileRef,
    pub dataset: FileRef,
    pub run_logs: Vec<FileRef>,
    pub provider: ProviderConfig,
    pub dataset_seed: u64,
    pub match_mode: MatchMode,
    pub invalid_policy: InvalidPolicy,
    pub outputs: Vec<FileRef>,
}

/// Writes the artifacts of `scored` plus a manifest into `out_dir`.
#[allow(clippy::too_many_arguments)]
pub fn write_score_dir(
    out_dir: &Path,
    scored: &Scored,
    top_n: usize,
    corpus_path: &Path,
    dataset_path: &Path,
    run_path: &Path,
    run: &RunLog,
    policy: InvalidPolicy,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut outputs = Vec::new();
    for (name, bytes) in render_artifacts(scored, top_n) {
        let path = out_dir.join(&name);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        outputs.push(FileRef {
            path: name,
            sha256: crate::digest::sha256_hex(&bytes),
        });
        written.push(path);
    }
    let manifest = RunManifest {
        tool_version: crate::TOOL_VERSION.to_string(),
        corpus: FileRef::of(corpus_path)?,
        dataset: FileRef::of(dataset_path)?,
        run_logs: vec![FileRef {
            path: run_path.display().to_string(),
            sha256: run_fingerprint(run),
        }],
        provider: run.meta.provider.clone(),
        dataset_seed: run.meta.dataset_seed,
        match_mode: scored.summary.match_mode,
        invalid_policy: policy,
        outputs,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Every `metrics.json` below `dir`, in path order.
pub fn find_metrics(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == METRICS_FILE) {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn load_summaries(dir: &Path) -> Result<Vec<(PathBuf, ScoreSummary)>> {
    find_metrics(dir)?
        .into_iter()
        .map(|path| {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let summary: ScoreSummary = serde_json::from_str(&text)
                .map_err(|e| Error::Usage(format!("{}: not a metrics file: {e}", path.display())))?;
            Ok((path, summary))
        })
        .collect()
}

fn pct(x: Option<f64>) -> String {
    x.map(fmt2).unwrap_or_else(|| "n/a".into())
}

/// Markdown comparison of scored runs. Verification runs are sorted by
/// accuracy, inquiry runs by micro F1; ties by label, then path.
pub fn render_report(summaries: &[(PathBuf, ScoreSummary)], base: &Path) -> String {
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
    let inputs: BTreeMap<String, String> = summaries
        .iter()
        .map(|(p, _)| {
            let fp = std::fs::read(p).map(|b| crate::digest::sha256_hex(&b)).unwrap_or_default();
            (rel(p), fp)
        })
        .collect();
    let meta = ArtifactMeta::new("report.md", inputs);
    let mut out = String::new();
    writeln!(out, "<!-- {} -->", serde_json::to_string(&meta).expect("meta serializes")).unwrap();
    writeln!(out, "# Evaluation report\n").unwrap();

    let mut verify: Vec<&(PathBuf, ScoreSummary)> = summaries.iter().filter(|(_, s)| s.verify.is_some()).collect();
    verify.sort_by(|(pa, a), (pb, b)| {
        let acc = |s: &ScoreSummary| s.verify.as_ref().map(|v| v.row.accuracy).unwrap_or(0.0);
        acc(b)
            .total_cmp(&acc(a))
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| pa.cmp(pb))
    });
    if !verify.is_empty() {
        writeln!(out, "## Ingredient list verification\n").unwrap();
        writeln!(
            out,
            "| Model | Accuracy (%) | Precision (%) | Recall (%) | F1 (%) | Acc. on No (%) | Acc. on Yes (%) | Invalid | Source |"
        )
        .unwrap();
        writeln!(out, "|---|---:|---:|---:|---:|---:|---:|---:|---|").unwrap();
        for (path, s) in &verify {
            let v = s.verify.as_ref().expect("filtered");
            let precision = if v.row.precision_undefined {
                "n/a".to_string()
            } else {
                fmt2(v.rounded.precision)
            };
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                s.label,
                fmt2(v.rounded.accuracy),
                precision,
                fmt2(v.rounded.recall),
                fmt2(v.rounded.f1),
                pct(v.bias.acc_on_expected_no),
                pct(v.bias.acc_on_expected_yes),
                v.row.invalid_count,
                rel(path)
            )
            .unwrap();
        }
        writeln!(out).unwrap();
    }

    let mut inquiry: Vec<&(PathBuf, ScoreSummary)> = summaries.iter().filter(|(_, s)| s.inquiry.is_some()).collect();
    inquiry.sort_by(|(pa, a), (pb, b)| {
        let f1 = |s: &ScoreSummary| s.inquiry.as_ref().map(|i| i.micro.f1).unwrap_or(0.0);
        f1(b)
            .total_cmp(&f1(a))
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| pa.cmp(pb))
    });
    if !inquiry.is_empty() {
        writeln!(out, "## Direct ingredient inquiry\n").unwrap();
        writeln!(
            out,
            "| Model | Micro P (%) | Micro R (%) | Micro F1 (%) | Macro F1 (%) | Repetition | Literal | Empty | Source |"
        )
        .unwrap();
        writeln!(out, "|---|---:|---:|---:|---:|---:|---:|---:|---|").unwrap();
        for (path, s) in &inquiry {
            let i = s.inquiry.as_ref().expect("filtered");
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                s.label,
                pct(i.micro.precision.map(|x| x * 100.0)),
                pct(i.micro.recall.map(|x| x * 100.0)),
                fmt2(i.micro.f1 * 100.0),
                fmt2(i.macro_avg.f1 * 100.0),
                i.repetition_flagged,
                i.literal_flagged,
                i.empty_responses,
                rel(path)
            )
            .unwrap();
        }
        writeln!(out).unwrap();
    }
    out
}
