//! Prompt construction, response parsing and the run loop for the two
//! probing protocols: direct ingredient inquiry and ingredient-list
//! verification.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::corpus::{parse_ingredient, Ingredient};
use crate::dataset::{EvalDataset, EvalItem};
use crate::error::{Error, Result};
use crate::providers::{Provider, ProviderConfig, ProviderError, Query};
use crate::retrieval::RetrievedEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Inquiry,
    Verify,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Inquiry => "inquiry",
            Protocol::Verify => "verify",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lang {
    #[default]
    Zh,
    En,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
    Invalid,
}

pub fn build_inquiry_prompt(drug_name: &str, lang: Lang) -> String {
    match lang {
        Lang::Zh => format!(
            "你是一名资深中医专家。请给出药物：{drug_name}的组成成分。只回答各成分的名称即可，无需给出用量或制备流程。"
        ),
        Lang::En => format!(
            "What are the ingredients of the drug {drug_name}? Only give a list of the names of the ingredients please. No need to give dosages or the production workflow."
        ),
    }
}

/// Renders a list as `['a', 'b']`.
pub fn render_list<S: AsRef<str>>(items: &[S]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("'{}'", s.as_ref())).collect();
    format!("[{}]", quoted.join(", "))
}

pub fn build_verify_prompt<S: AsRef<str>>(drug_name: &str, ingredients: &[S], lang: Lang) -> String {
    let list = render_list(ingredients);
    match lang {
        Lang::Zh => format!(
            "作为一个资深中医药专家，请回答如下问题。请问，药物：{drug_name}的组成成分是否为：{list}？只需回答“是”或“否”。"
        ),
        Lang::En => format!(
            "Whether the drug {drug_name} consists of {list}? Only respond with \"Yes\" or \"No\", please."
        ),
    }
}

const RAG_TEMPLATE_ZH: &str = "已知信息：{context}

“你是一个资深的中医与中医药学专家，你具备管理大量药物处方和药材识别的能力；请注意我向你提供了很多《中华人民共和国药典》PDF文件中的内容，但每个PDF文件中包括药方、制备方法、药材特性等内容，请仔细识别各个信息。

现在需要你帮我分析每个中药或中成药的组成成分，只需要为我提供药典中此药品的各个组成成分药材名称即可，无需给出制备方法或用量等详细信息。然后帮我完成以下两个功能：

1.当我给出一个中药名称和一组组成配方表时，给出其正确与否的答案。当基于我提供的药典信息，你认为问题中给出的配方不正确或者不匹配所提供药名时，只需回答“否”，反之，只需回答“是”即可。

2.当我只给出一个中药名称时，请给出你认为此药物正确的配方表，只需要包含成分的药材名称即可，无需具体含量和制备过程。

请务必注意：

有些药物的名称中可能含有类似中医药材但实际上不是药材的名称，切记不要望文生义；

有些药材经常用于制备药物，切记要根据所提供的内容谨慎地判断这些常见药材是否在当前给出的药物中也存在；

请仔细识别药物成分，不要重复给出药材名称。”

请回答以下问题：{question}";

const RAG_TEMPLATE_EN: &str = "Given the information: {context}

\"You are a senior expert in traditional Chinese medicine and pharmacology, with the ability to manage a large number of drug prescriptions and identify medicinal materials. Please note that I have provided you with extensive content from PDF files of the Pharmacopoeia of the People's Republic of China, each containing information such as prescriptions, preparation methods, and characteristics of medicinal materials. Please carefully identify each piece of information.

Now, I need you to help me analyze the composition of each traditional Chinese drug or Chinese proprietary medicine. Simply provide me with the names of the constituent medicinal materials listed in the Pharmacopoeia for each drug, without including details such as preparation methods or dosages. Then, assist me in completing the following two tasks:

1. When I provide the name of a traditional Chinese drug and a set of constituent ingredients, give a correct or incorrect answer. Based on the Pharmacopoeia information I have provided, if you determine that the given ingredients in the question are incorrect or do not match the provided drug name, simply respond with \"No\". Otherwise, reply \"Yes\".

2. When I only provide the name of a traditional Chinese drug, please give what you believe to be the correct list of ingredients for this medicine. Only include the names of the constituent medicinal materials, without specific quantities or preparation processes.

Please pay close attention to the following:

Some drug names may contain terms that resemble traditional Chinese medicinal materials but are not actual medicinal materials. Do not interpret them literally.

Some medicinal materials are commonly used in drug preparation. Be cautious in determining whether these common materials are present in the currently given medicine based on the provided content.

Carefully identify the drug components and avoid repeating the names of medicinal materials.\"

Please answer the following question: {question}";

/// Fills the retrieval-augmented prompt template.
pub fn render_rag_prompt(lang: Lang, context: &str, question: &str) -> String {
    let template = match lang {
        Lang::Zh => RAG_TEMPLATE_ZH,
        Lang::En => RAG_TEMPLATE_EN,
    };
    let (head, rest) = template.split_once("{context}").expect("context slot");
    let (mid, tail) = rest.split_once("{question}").expect("question slot");
    let mut out = String::with_capacity(template.len() + context.len() + question.len());
    out.push_str(head);
    out.push_str(context);
    out.push_str(mid);
    out.push_str(question);
    out.push_str(tail);
    out
}

/// Removes a `<think>…</think>` reasoning block. A closing tag without an
/// opening one (some servers drop the opening tag) keeps only the text after
/// it.
pub fn strip_think(raw: &str) -> String {
    const OPEN: &str = "<think>";
    const CLOSE: &str = "</think>";
    if let Some(start) = raw.find(OPEN) {
        if let Some(rel_end) = raw[start..].rfind(CLOSE) {
            let end = start + rel_end + CLOSE.len();
            return format!("{}{}", &raw[..start], &raw[end..]);
        }
        return raw.to_string();
    }
    match raw.rfind(CLOSE) {
        Some(end) => raw[end + CLOSE.len()..].to_string(),
        None => raw.to_string(),
    }
}

/// Characters that, placed before 是, make it part of a conjunction or
/// adverb rather than an answer (但是, 还是, 于是, ...).
const NON_ANSWER_PREFIXES: &[char] = &['但', '可', '还', '于', '只', '或', '要', '若', '凡', '总', '倒'];

/// Reads a yes/no decision from a free-text response.
///
/// The reasoning block is dropped, then the last decision token wins:
/// 是 / 否 / yes / no (ASCII case-insensitive, whole words). 不是 counts as
/// No; 是否 ("whether"), 否则 and conjunctions such as 但是 are skipped.
pub fn parse_yes_no(raw: &str) -> Verdict {
    let text = strip_think(raw);
    let chars: Vec<char> = text.chars().collect();
    let mut verdict = Verdict::Invalid;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev = if i > 0 { Some(chars[i - 1]) } else { None };
        let next = chars.get(i + 1).copied();
        match c {
            '是' => {
                if prev == Some('不') {
                    verdict = Verdict::No;
                } else if next == Some('否') {
                    i += 2;
                    continue;
                } else if !prev.is_some_and(|p| NON_ANSWER_PREFIXES.contains(&p)) {
                    verdict = Verdict::Yes;
                }
            }
            '否' => {
                if next != Some('则') {
                    verdict = Verdict::No;
                }
            }
            c if c.is_ascii_alphanumeric() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect::<String>().to_ascii_lowercase();
                match word.as_str() {
                    "yes" => verdict = Verdict::Yes,
                    "no" => verdict = Verdict::No,
                    _ => {}
                }
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    verdict
}

const LIST_SEPARATORS: &[char] = &[
    '、', '，', ',', ';', '；', '。', '\n', '\r', '\t', '[', ']', '【', '】', '：', ':', '/', '|',
];
const QUOTES: &[char] = &['\'', '"', '‘', '’', '“', '”', '「', '」', '『', '』', '`', '《', '》'];
const LEAD_INS: &[&str] = &["包括", "成分为", "成分是", "组成为", "组成是", "如下", "：", ":"];
const MAX_NAME_CHARS: usize = 16;

/// Cuts away prose before the list: the part of a bracketed list, or the
/// text after a lead-in phrase ("…的成分包括：") that precedes the first
/// separator.
fn list_region(text: &str) -> &str {
    if let Some(open) = text.find('[') {
        let body = &text[open + 1..];
        return match body.rfind(']') {
            Some(close) => &body[..close],
            None => body,
        };
    }
    let first_sep = text
        .char_indices()
        .find(|(_, c)| matches!(c, '、' | '，' | ',' | '\n'))
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let lead = LEAD_INS
        .iter()
        .filter_map(|l| text[..first_sep].find(l).map(|pos| pos + l.len()))
        .min();
    match lead {
        Some(start) => &text[start..],
        None => text,
    }
}

fn clean_token(token: &str) -> &str {
    let t = token.trim().trim_matches(|c| QUOTES.contains(&c) || c.is_whitespace());
    // numbered or bulleted list items: "1. 当归", "2）川芎", "- 红花"
    let t = t.trim_start_matches(|c: char| c.is_ascii_digit());
    let t = t.trim_start_matches(['.', '．', '、', ')', '）', '-', '*', '•', '·']);
    let t = t.trim_matches(|c| QUOTES.contains(&c) || c.is_whitespace());
    let t = t.trim_end_matches(['.', '!', '?', '！', '？']);
    t.strip_suffix('等').filter(|s| !s.is_empty()).unwrap_or(t)
}

/// Extracts ingredients from a free-text answer, keeping order and
/// duplicates.
pub fn parse_ingredients(raw: &str) -> Vec<Ingredient> {
    let text = strip_think(raw);
    list_region(&text)
        .split(LIST_SEPARATORS)
        .filter_map(|tok| {
            let tok: String = clean_token(tok).chars().filter(|c| !QUOTES.contains(c)).collect();
            let ingredient = parse_ingredient(&tok).ok()?;
            let name = &ingredient.canonical;
            if !name.chars().any(char::is_alphanumeric) || name.chars().count() > MAX_NAME_CHARS {
                return None;
            }
            Some(ingredient)
        })
        .collect()
}

/// Canonical names from [`parse_ingredients`].
pub fn parse_ingredient_list(raw: &str) -> Vec<String> {
    parse_ingredients(raw).into_iter().map(|i| i.canonical).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Parsed {
    Verdict(Verdict),
    Ingredients(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub item_id: usize,
    pub protocol: Protocol,
    pub prompt: String,
    pub raw_response: String,
    pub parsed: Parsed,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_context: Option<Vec<RetrievedEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ProviderError>,
}

impl RunRecord {
    pub fn verdict(&self) -> Verdict {
        match &self.parsed {
            Parsed::Verdict(v) => *v,
            Parsed::Ingredients(_) => Verdict::Invalid,
        }
    }

    pub fn ingredients(&self) -> &[String] {
        match &self.parsed {
            Parsed::Ingredients(list) => list,
            Parsed::Verdict(_) => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub protocol: Protocol,
    pub lang: Lang,
    pub provider: ProviderConfig,
    pub dataset_fingerprint: String,
    pub corpus_fingerprint: String,
    pub dataset_seed: u64,
    pub item_count: usize,
    pub started: String,
    #[serde(default)]
    pub finished: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct MetaLine<M> {
    meta: M,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub records: Vec<RunRecord>,
}

impl RunLog {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &MetaLine { meta: &self.meta })?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Writes the log through a temporary file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = tmp_path(path);
        let write = || -> std::io::Result<()> {
            let mut f = std::io::BufWriter::new(File::create(&tmp)?);
            self.write_jsonl(&mut f)?;
            f.flush()?;
            std::fs::rename(&tmp, path)
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (meta, records, _) = read_log(path, false)?;
        Ok(RunLog { meta, records })
    }

    pub fn invalid_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.protocol == Protocol::Verify && r.verdict() == Verdict::Invalid)
            .count()
    }

    pub fn error_count(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Reads a log. With `tolerate_tail`, a malformed final line (an interrupted
/// write) is dropped instead of failing; the returned flag reports it.
fn read_log(path: &Path, tolerate_tail: bool) -> Result<(RunMeta, Vec<RunRecord>, bool)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let mut iter = lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = iter.next().ok_or(Error::MalformedLine {
        line: 1,
        message: "missing meta header".into(),
    })?;
    let meta: MetaLine<RunMeta> = serde_json::from_str(header).map_err(|e| Error::MalformedLine {
        line: 1,
        message: format!("bad meta header: {e}"),
    })?;
    let body: Vec<(usize, &String)> = iter.collect();
    let mut records = Vec::with_capacity(body.len());
    let mut dropped_tail = false;
    for (pos, (idx, line)) in body.iter().enumerate() {
        match serde_json::from_str::<RunRecord>(line) {
            Ok(r) => records.push(r),
            Err(e) if tolerate_tail && pos + 1 == body.len() => {
                log::warn!("dropping truncated final log line {}: {e}", idx + 1);
                dropped_tail = true;
            }
            Err(e) => {
                return Err(Error::MalformedLine {
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((meta.meta, records, dropped_tail))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub protocol: Protocol,
    pub lang: Lang,
    pub concurrency: usize,
    /// Snapshot stored in the log header.
    pub provider_config: ProviderConfig,
    /// Incremental log destination. Without it the run is kept in memory.
    pub log_path: Option<PathBuf>,
    /// Reuse records already present at `log_path`.
    pub resume: bool,
}

pub fn build_prompt(item: &EvalItem, protocol: Protocol, lang: Lang) -> String {
    match protocol {
        Protocol::Inquiry => build_inquiry_prompt(&item.drug_name, lang),
        Protocol::Verify => build_verify_prompt(&item.drug_name, &item.presented_ingredients, lang),
    }
}

fn execute(item: &EvalItem, provider: &dyn Provider, protocol: Protocol, lang: Lang) -> RunRecord {
    let prompt = build_prompt(item, protocol, lang);
    let query = Query {
        item_id: item.item_id,
        protocol,
        drug_name: item.drug_name.clone(),
        ingredients: item.presented_ingredients.clone(),
        prompt: prompt.clone(),
    };
    let response = provider.complete(&query);
    let latency_ms = response.latency.as_secs_f64() * 1000.0;
    let (raw_response, parsed, error) = match response.outcome {
        Ok(text) => {
            let parsed = match protocol {
                Protocol::Inquiry => Parsed::Ingredients(parse_ingredient_list(&text)),
                Protocol::Verify => Parsed::Verdict(parse_yes_no(&text)),
            };
            (text, parsed, None)
        }
        Err(err) => {
            log::warn!("item {}: {}", item.item_id, err);
            let parsed = match protocol {
                Protocol::Inquiry => Parsed::Ingredients(Vec::new()),
                Protocol::Verify => Parsed::Verdict(Verdict::Invalid),
            };
            (String::new(), parsed, Some(err))
        }
    };
    RunRecord {
        item_id: item.item_id,
        protocol,
        prompt,
        raw_response,
        parsed,
        latency_ms,
        retrieval_context: response.retrieval_context,
        error,
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs one protocol over every dataset item.
///
/// Up to `concurrency` provider calls are in flight at once. Each finished
/// record is appended to the log as it completes; at the end the log is
/// rewritten in presentation order with the `finished` timestamp set. With
/// `resume`, items already recorded in an existing log are not re-executed.
pub fn run_protocol(dataset: &EvalDataset, provider: &dyn Provider, opts: &RunOptions) -> Result<RunLog> {
    let fingerprint = dataset.fingerprint();
    let mut done: HashMap<usize, RunRecord> = HashMap::new();
    let mut meta = RunMeta {
        tool_version: crate::TOOL_VERSION.to_string(),
        protocol: opts.protocol,
        lang: opts.lang,
        provider: opts.provider_config.clone(),
        dataset_fingerprint: fingerprint.clone(),
        corpus_fingerprint: dataset.meta.corpus_fingerprint.clone(),
        dataset_seed: dataset.meta.seed,
        item_count: dataset.len(),
        started: now(),
        finished: None,
    };

    let mut writer = match &opts.log_path {
        Some(path) => {
            if opts.resume && path.exists() {
                let (old_meta, records, _) = read_log(path, true)?;
                if old_meta.dataset_fingerprint != fingerprint {
                    return Err(Error::FingerprintMismatch {
                        what: "dataset",
                        expected: fingerprint,
                        found: old_meta.dataset_fingerprint,
                    });
                }
                if old_meta.protocol != opts.protocol {
                    return Err(Error::ProtocolMismatch {
                        expected: opts.protocol.to_string(),
                        found: old_meta.protocol.to_string(),
                    });
                }
                meta.started = old_meta.started;
                let known: std::collections::HashSet<usize> =
                    dataset.items.iter().map(|i| i.item_id).collect();
                for r in records {
                    if known.contains(&r.item_id) {
                        done.insert(r.item_id, r);
                    }
                }
            }
            // rewrite header plus the surviving records, then append
            let partial = RunLog {
                meta: meta.clone(),
                records: dataset
                    .items
                    .iter()
                    .filter_map(|i| done.get(&i.item_id).cloned())
                    .collect(),
            };
            partial.save(path)?;
            let file = OpenOptions::new()
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            Some((path.clone(), file))
        }
        None => None,
    };

    let pending: Vec<&EvalItem> = dataset
        .items
        .iter()
        .filter(|i| !done.contains_key(&i.item_id))
        .collect();
    log::info!(
        "{} run: {} items pending, {} already logged",
        opts.protocol,
        pending.len(),
        done.len()
    );

    let workers = opts.concurrency.max(1).min(pending.len().max(1));
    let next = AtomicUsize::new(0);
    let mut write_error = None;
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<RunRecord>();
        for _ in 0..workers {
            let tx = tx.clone();
            let pending = &pending;
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = pending.get(i) else { break };
                let record = execute(item, provider, opts.protocol, opts.lang);
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for record in rx {
            if let Some((path, file)) = writer.as_mut() {
                let line = serde_json::to_string(&record).expect("record serializes");
                let res = writeln!(file, "{line}").and_then(|_| file.flush());
                if let Err(e) = res {
                    write_error = Some(Error::io(path.clone(), e));
                    break;
                }
            }
            done.insert(record.item_id, record);
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    meta.finished = Some(now());
    let records = dataset
        .items
        .iter()
        .map(|i| done.remove(&i.item_id).expect("every item has a record"))
        .collect();
    let log = RunLog { meta, records };
    if let Some((path, file)) = writer.take() {
        drop(file);
        log.save(path)?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inquiry_prompt_templates() {
        let zh = build_inquiry_prompt("痛经宝颗粒", Lang::Zh);
        assert!(zh.contains("痛经宝颗粒"));
        assert!(zh.contains("无需给出用量"));
        let en = build_inquiry_prompt("X", Lang::En);
        assert_eq!(
            en,
            "What are the ingredients of the drug X? Only give a list of the names of the ingredients please. No need to give dosages or the production workflow."
        );
        let a = build_inquiry_prompt("四物颗粒", Lang::Zh);
        let b = build_inquiry_prompt("心脑健片", Lang::Zh);
        assert_eq!(a.replace("四物颗粒", "{}"), b.replace("心脑健片", "{}"));
    }

    #[test]
    fn verify_prompt_matches_reference_question() {
        let p = build_verify_prompt("护肝宁胶囊", &["垂盆草", "丹参", "川贝母", "麦冬"], Lang::Zh);
        assert_eq!(
            p,
            "作为一个资深中医药专家，请回答如下问题。请问，药物：护肝宁胶囊的组成成分是否为：['垂盆草', '丹参', '川贝母', '麦冬']？只需回答“是”或“否”。"
        );
        assert!(build_verify_prompt("心脑健片", &["茶叶"], Lang::Zh).contains("['茶叶']"));
        assert_eq!(
            build_verify_prompt("D", &["a", "b"], Lang::En),
            "Whether the drug D consists of ['a', 'b']? Only respond with \"Yes\" or \"No\", please."
        );
    }

    #[test]
    fn rag_template_slots() {
        let p = render_rag_prompt(Lang::Zh, "CTX", "Q?");
        assert!(p.starts_with("已知信息：CTX\n"));
        assert!(p.ends_with("请回答以下问题：Q?"));
        let empty = render_rag_prompt(Lang::En, "", "Q");
        assert!(empty.starts_with("Given the information: \n"));
        let tricky = render_rag_prompt(Lang::Zh, "{question}", "{context}");
        assert!(tricky.starts_with("已知信息：{question}"));
        assert!(tricky.ends_with("请回答以下问题：{context}"));
    }

    #[test]
    fn think_block_is_removed() {
        assert_eq!(strip_think("<think>\n好的，是。\n</think>\n否"), "\n否");
        assert_eq!(strip_think("reasoning</think>是"), "是");
        assert_eq!(strip_think("<think>unterminated"), "<think>unterminated");
    }

    #[test]
    fn yes_no_tokens() {
        assert_eq!(parse_yes_no("是"), Verdict::Yes);
        assert_eq!(parse_yes_no("否"), Verdict::No);
        assert_eq!(parse_yes_no("Yes"), Verdict::Yes);
        assert_eq!(parse_yes_no("no."), Verdict::No);
        assert_eq!(parse_yes_no("YES!"), Verdict::Yes);
        assert_eq!(parse_yes_no("Nothing known"), Verdict::Invalid);
        assert_eq!(parse_yes_no(""), Verdict::Invalid);
        assert_eq!(parse_yes_no("I cannot tell."), Verdict::Invalid);
    }

    #[test]
    fn yes_no_last_token_wins() {
        assert_eq!(parse_yes_no("正确的回答是“否”。"), Verdict::No);
        assert_eq!(parse_yes_no("No wait, yes"), Verdict::Yes);
        assert_eq!(parse_yes_no("组成成分是否为这些？是"), Verdict::Yes);
        assert_eq!(parse_yes_no("但是我认为否则不对"), Verdict::Invalid);
    }

    #[test]
    fn negated_yes_reads_as_no() {
        assert_eq!(
            parse_yes_no("不是的，心脑健片的成分包括黄芪、葛根、丹参、桂枝、三七、淫羊藿、川芎、何首乌、珍珠、冰片，并不包括茶叶。"),
            Verdict::No
        );
        assert_eq!(parse_yes_no("不是"), Verdict::No);
    }

    #[test]
    fn ingredient_lists() {
        assert_eq!(parse_ingredient_list("['鹿茸', '羚羊角', '黄芪']"), ["鹿茸", "羚羊角", "黄芪"]);
        assert_eq!(
            parse_ingredient_list("当归、川芎、川芎、红花"),
            ["当归", "川芎", "川芎", "红花"]
        );
        assert!(parse_ingredient_list("").is_empty());
    }

    #[test]
    fn ingredient_lists_in_prose() {
        assert_eq!(
            parse_ingredient_list(
                "作为一名资深的中医药专家，我可以告诉您，根据健脑安神片的配方组成成分，是['鹿茸',    '羚羊角',    '黄芪’]。"
            ),
            ["鹿茸", "羚羊角", "黄芪"]
        );
        assert_eq!(parse_ingredient_list("羚羊角胶囊的组成成分包括羚羊角。"), ["羚羊角"]);
        assert_eq!(
            parse_ingredient_list("心脑健片的成分包括：黄芪、葛根、丹参。"),
            ["黄芪", "葛根", "丹参"]
        );
        let sanqi = parse_ingredients("三七伤药胶囊的组成成分包括三七、制草乌、乳香（制）、没药（制）。");
        let names: Vec<&str> = sanqi.iter().map(|i| i.canonical.as_str()).collect();
        assert_eq!(names, ["三七", "制草乌", "乳香", "没药"]);
        assert_eq!(sanqi[2].processing_marker.as_deref(), Some("制"));
    }

    #[test]
    fn ingredient_lists_bullets_and_think() {
        assert_eq!(
            parse_ingredient_list("<think>想一想，当归？</think>\n1. 丹参\n2. 三七\n3) 冰片"),
            ["丹参", "三七", "冰片"]
        );
        assert_eq!(parse_ingredient_list("- 茯苓\n- 白术"), ["茯苓", "白术"]);
        assert_eq!(parse_ingredient_list("丹参、当归、白芍等"), ["丹参", "当归", "白芍"]);
    }
}
