//! Lexical retrieval over corpus entries: a mixed unigram/bigram CJK
//! tokenizer feeding an Okapi BM25 inverted index.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DrugRecord, Ingredient};
use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 10;

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x30000..=0x3134F)
}

fn flush_cjk(run: &mut Vec<char>, out: &mut Vec<String>) {
    out.extend(run.iter().map(|c| c.to_string()));
    out.extend(run.windows(2).map(|w| w.iter().collect::<String>()));
    run.clear();
}

fn flush_word(word: &mut String, out: &mut Vec<String>) {
    if !word.is_empty() {
        out.push(std::mem::take(word));
    }
}

/// Splits text into index terms.
///
/// Each run of CJK ideographs yields its single characters followed by its
/// overlapping character bigrams; other alphanumeric runs yield lowercase
/// words. Everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            flush_word(&mut word, &mut out);
            run.push(c);
        } else if c.is_alphanumeric() {
            flush_cjk(&mut run, &mut out);
            word.extend(c.to_lowercase());
        } else {
            flush_cjk(&mut run, &mut out);
            flush_word(&mut word, &mut out);
        }
    }
    flush_cjk(&mut run, &mut out);
    flush_word(&mut word, &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    /// Inverse document frequency, `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    /// Always positive, so every matching document scores above zero.
    pub fn idf(&self, doc_count: usize, df: usize) -> f64 {
        let n = doc_count as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Saturated term-frequency component.
    pub fn tf(&self, tf: u32, doc_len: u32, avg_doc_len: f64) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - self.b + self.b * doc_len as f64 / avg_doc_len;
        tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_id: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedDoc {
    pub drug_name: String,
    pub ingredients: Vec<Ingredient>,
    pub rendered_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedEntry {
    pub doc_id: usize,
    pub drug_name: String,
    pub score: f64,
    pub rendered_text: String,
}

/// Text inserted into a prompt for one corpus entry.
pub fn render_entry(record: &DrugRecord) -> String {
    let listing: Vec<&str> = record.ingredients.iter().map(|i| i.raw.trim()).collect();
    let mut out = format!("【{}】\n处方：{}", record.name, listing.join("、"));
    if let Some(text) = &record.source_text {
        out.push('\n');
        out.push_str(text);
    }
    out
}

/// Text that is tokenized for one corpus entry: name, ingredient names and
/// the optional entry body.
pub fn document_text(record: &DrugRecord) -> String {
    let mut parts = vec![record.name.clone()];
    parts.extend(record.ingredients.iter().map(|i| i.to_string()));
    if let Some(text) = &record.source_text {
        parts.push(text.clone());
    }
    parts.join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub params: Bm25Params,
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_lengths: Vec<u32>,
    pub avg_doc_length: f64,
    pub doc_count: usize,
    pub docs: Vec<IndexedDoc>,
    pub corpus_fingerprint: String,
}

pub fn build_index(corpus: &Corpus) -> Index {
    build_index_with(corpus, Bm25Params::default())
}

pub fn build_index_with(corpus: &Corpus, params: Bm25Params) -> Index {
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    let mut docs = Vec::with_capacity(corpus.len());
    for (doc_id, record) in corpus.records().iter().enumerate() {
        let tokens = tokenize(&document_text(record));
        doc_lengths.push(tokens.len() as u32);
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
        // doc ids ascend, so every postings list stays sorted
        for (token, tf) in counts {
            postings.entry(token).or_default().push(Posting { doc_id, tf });
        }
        docs.push(IndexedDoc {
            drug_name: record.name.clone(),
            ingredients: record.ingredients.clone(),
            rendered_text: render_entry(record),
        });
    }
    let doc_count = docs.len();
    let avg_doc_length = if doc_count == 0 {
        0.0
    } else {
        doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_count as f64
    };
    Index {
        params,
        postings,
        doc_lengths,
        avg_doc_length,
        doc_count,
        docs,
        corpus_fingerprint: corpus.fingerprint().to_string(),
    }
}

/// Distinct query terms in first-occurrence order.
pub fn query_terms(query: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    tokenize(query)
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

impl Index {
    /// Top `k` documents by BM25 score. Only documents with a positive score
    /// are returned; ties go to the lower doc id.
    pub fn search(&self, query: &str, k: usize) -> Vec<RetrievedEntry> {
        if k == 0 || self.doc_count == 0 {
            return Vec::new();
        }
        let mut scores = vec![0.0f64; self.doc_count];
        for term in query_terms(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.params.idf(self.doc_count, list.len());
            for p in list {
                scores[p.doc_id] +=
                    idf * self.params.tf(p.tf, self.doc_lengths[p.doc_id], self.avg_doc_length);
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s > 0.0)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
            .into_iter()
            .map(|(doc_id, score)| RetrievedEntry {
                doc_id,
                drug_name: self.docs[doc_id].drug_name.clone(),
                score,
                rendered_text: self.docs[doc_id].rendered_text.clone(),
            })
            .collect()
    }

    pub fn doc(&self, doc_id: usize) -> Option<&IndexedDoc> {
        self.docs.get(doc_id)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = serde_json::to_vec(self).expect("index serializes");
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads a cached index when it was built from the same corpus with the
    /// same parameters, otherwise rebuilds it and rewrites the cache.
    pub fn load_or_build(path: impl AsRef<Path>, corpus: &Corpus, params: Bm25Params) -> Result<Index> {
        let path = path.as_ref();
        if let Ok(bytes) = std::fs::read(path) {
            match serde_json::from_slice::<Index>(&bytes) {
                Ok(index) if index.corpus_fingerprint == corpus.fingerprint() && index.params == params => {
                    return Ok(index);
                }
                Ok(_) => log::info!("index cache {} is stale, rebuilding", path.display()),
                Err(e) => log::warn!("ignoring unreadable index cache {}: {e}", path.display()),
            }
        }
        let index = build_index_with(corpus, params);
        index.save(path)?;
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_cjk_pairs() {
        assert_eq!(tokenize("甘草"), ["甘", "草", "甘草"]);
        assert_eq!(tokenize("护肝宁胶囊").len(), 9);
        assert_eq!(tokenize("丹"), ["丹"]);
    }

    #[test]
    fn tokenize_words() {
        assert_eq!(tokenize("RAG test"), ["rag", "test"]);
        assert_eq!(tokenize("BM25-index v2"), ["bm25", "index", "v2"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" ，。! ").is_empty());
    }

    #[test]
    fn tokenize_mixed_runs() {
        assert_eq!(
            tokenize("Vitamin甘草，丹参"),
            ["vitamin", "甘", "草", "甘草", "丹", "参", "丹参"]
        );
    }

    #[test]
    fn idf_is_positive() {
        let p = Bm25Params::default();
        for df in 1..=10 {
            assert!(p.idf(10, df) > 0.0);
        }
    }

    fn corpus() -> Corpus {
        Corpus::new(vec![
            DrugRecord::new("四物颗粒", &["当归", "川芎", "白芍", "熟地黄"], Some("养血调经。")).unwrap(),
            DrugRecord::new("心脑健片", &["茶叶"], None).unwrap(),
            DrugRecord::new("复方丹参片", &["丹参", "三七", "冰片"], None).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn index_statistics() {
        let idx = build_index(&corpus());
        assert_eq!(idx.doc_count, 3);
        let mean = idx.doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / 3.0;
        assert!((idx.avg_doc_length - mean).abs() < 1e-12);
        for list in idx.postings.values() {
            assert!(list.windows(2).all(|w| w[0].doc_id < w[1].doc_id));
        }
        // 心脑健片 has no text: name (4+3) + 茶叶 (2+1)
        assert_eq!(idx.doc_lengths[1], 10);
        assert_eq!(build_index(&corpus()), idx);
    }

    #[test]
    fn search_finds_exact_name_first() {
        let idx = build_index(&corpus());
        let hits = idx.search("复方丹参片", 10);
        assert_eq!(hits[0].drug_name, "复方丹参片");
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn search_edge_cases() {
        let idx = build_index(&corpus());
        assert!(idx.search("zzz", 10).is_empty());
        assert!(idx.search("", 10).is_empty());
        assert!(idx.search("，", 10).is_empty());
        assert!(idx.search("片", 0).is_empty());
        // "片" occurs in two documents only
        assert_eq!(idx.search("片", 100).len(), 2);
    }

    #[test]
    fn rendered_entry_lists_raw_ingredients() {
        let r = DrugRecord::new("三七伤药胶囊", &["三七", "草乌（蒸）"], None).unwrap();
        assert_eq!(render_entry(&r), "【三七伤药胶囊】\n处方：三七、草乌（蒸）");
    }

    #[test]
    fn cache_reuses_matching_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        let c = corpus();
        let built = Index::load_or_build(&path, &c, Bm25Params::default()).unwrap();
        assert!(path.exists());
        let loaded = Index::load_or_build(&path, &c, Bm25Params::default()).unwrap();
        assert_eq!(built, loaded);

        let other = Corpus::new(vec![DrugRecord::new("甲", &["乙"], None).unwrap()]).unwrap();
        let rebuilt = Index::load_or_build(&path, &other, Bm25Params::default()).unwrap();
        assert_eq!(rebuilt.doc_count, 1);
    }
}
