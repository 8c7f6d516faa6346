//! Evaluation dataset construction.
//!
//! One ChaCha8 generator seeded from `seed` drives, in this order: the split
//! into true (T) and corrupted (F) halves, the choice of replaced positions
//! and replacement herbs for each F record (records visited in corpus
//! order), and the final shuffle of the presentation order.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MatchMode};
use crate::digest::Sha256Hex;
use crate::error::{Error, Result};

pub const REPLACEMENT_RULE: &str = "max(1, ceil(n/2))";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subset {
    T,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expected {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub item_id: usize,
    pub drug_name: String,
    pub presented_ingredients: Vec<String>,
    pub subset: Subset,
    pub expected: Expected,
    pub replaced_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub corpus_fingerprint: String,
    pub tool_version: String,
    pub replacement_rule: String,
    pub match_mode: MatchMode,
    /// "mixed", "T" or "F".
    pub view: String,
}

#[derive(Serialize, Deserialize)]
struct MetaLine<M> {
    meta: M,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalDataset {
    pub meta: DatasetMeta,
    pub items: Vec<EvalItem>,
}

/// Number of positions replaced in a list of `n` ingredients.
pub fn replacement_count(n: usize) -> usize {
    n.div_ceil(2).max(1)
}

/// Splits `ids` into (T, F) halves. T receives the extra element when the
/// length is odd. Both halves keep the input's relative order.
pub fn split_halves<T: Clone, R: Rng + ?Sized>(ids: &[T], rng: &mut R) -> Result<(Vec<T>, Vec<T>)> {
    if ids.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(rng);
    let t_len = ids.len().div_ceil(2);
    let mut t_pos = order[..t_len].to_vec();
    let mut f_pos = order[t_len..].to_vec();
    t_pos.sort_unstable();
    f_pos.sort_unstable();
    Ok((
        t_pos.into_iter().map(|i| ids[i].clone()).collect(),
        f_pos.into_iter().map(|i| ids[i].clone()).collect(),
    ))
}

/// Replaces `replacement_count(truth.len())` distinct positions of `truth`
/// with herbs drawn without repetition from `pool \ truth`.
///
/// Returns the presented list and the replaced positions in ascending order.
pub fn perturb_ingredients<R: Rng + ?Sized>(
    drug: &str,
    truth: &[String],
    pool: &BTreeSet<String>,
    rng: &mut R,
) -> Result<(Vec<String>, Vec<usize>)> {
    let n = truth.len();
    let needed = replacement_count(n);
    let truth_set: HashSet<&String> = truth.iter().collect();
    let mut candidates: Vec<&String> = pool.iter().filter(|h| !truth_set.contains(h)).collect();
    if n == 0 || candidates.len() < needed {
        return Err(Error::PoolTooSmall {
            drug: drug.to_string(),
            needed,
            available: candidates.len(),
        });
    }
    let mut positions = rand::seq::index::sample(rng, n, needed).into_vec();
    positions.sort_unstable();
    let mut presented = truth.to_vec();
    for &pos in &positions {
        let pick = rng.random_range(0..candidates.len());
        presented[pos] = candidates.remove(pick).clone();
    }
    Ok((presented, positions))
}

/// Builds the mixed evaluation dataset from `corpus`.
pub fn build_dataset(corpus: &Corpus, seed: u64, mode: MatchMode) -> Result<EvalDataset> {
    if corpus.len() < 2 {
        return Err(Error::TooFewRecords(corpus.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<usize> = (0..corpus.len()).collect();
    let (_, f_ids) = split_halves(&ids, &mut rng)?;
    let f_ids: HashSet<usize> = f_ids.into_iter().collect();
    let pool = corpus.pool(mode);

    let mut items = Vec::with_capacity(corpus.len());
    for (item_id, record) in corpus.records().iter().enumerate() {
        let truth = record.keys(mode);
        let item = if f_ids.contains(&item_id) {
            let (presented, replaced) = perturb_ingredients(&record.name, &truth, &pool, &mut rng)?;
            EvalItem {
                item_id,
                drug_name: record.name.clone(),
                presented_ingredients: presented,
                subset: Subset::F,
                expected: Expected::No,
                replaced_positions: replaced,
            }
        } else {
            EvalItem {
                item_id,
                drug_name: record.name.clone(),
                presented_ingredients: truth,
                subset: Subset::T,
                expected: Expected::Yes,
                replaced_positions: Vec::new(),
            }
        };
        items.push(item);
    }
    items.shuffle(&mut rng);

    Ok(EvalDataset {
        meta: DatasetMeta {
            seed,
            corpus_fingerprint: corpus.fingerprint().to_string(),
            tool_version: crate::TOOL_VERSION.to_string(),
            replacement_rule: REPLACEMENT_RULE.to_string(),
            match_mode: mode,
            view: "mixed".to_string(),
        },
        items,
    })
}

impl EvalDataset {
    /// Items of one subset, in presentation order.
    pub fn view(&self, subset: Subset) -> EvalDataset {
        let mut meta = self.meta.clone();
        meta.view = match subset {
            Subset::T => "T",
            Subset::F => "F",
        }
        .to_string();
        EvalDataset {
            meta,
            items: self
                .items
                .iter()
                .filter(|i| i.subset == subset)
                .cloned()
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// (T count, F count)
    pub fn counts(&self) -> (usize, usize) {
        let t = self.items.iter().filter(|i| i.subset == Subset::T).count();
        (t, self.items.len() - t)
    }

    pub fn item(&self, item_id: usize) -> Option<&EvalItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// SHA-256 over the item lines, independent of the meta header.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256Hex::new();
        for item in &self.items {
            h.update(serde_json::to_string(item).expect("item serializes").as_bytes());
            h.update(b"\n");
        }
        h.finish()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &MetaLine { meta: &self.meta })?;
        out.write_all(b"\n")?;
        for item in &self.items {
            serde_json::to_writer(&mut out, item)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let malformed = |line: usize, message: String| Error::MalformedLine { line, message };
        let meta = loop {
            match lines.next() {
                None => return Err(malformed(1, "missing meta header".into())),
                Some((idx, line)) => {
                    let line = line.map_err(|e| malformed(idx + 1, e.to_string()))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let header: MetaLine<DatasetMeta> = serde_json::from_str(&line)
                        .map_err(|e| malformed(idx + 1, format!("bad meta header: {e}")))?;
                    break header.meta;
                }
            }
        };
        let mut items = Vec::new();
        for (idx, line) in lines {
            let line = line.map_err(|e| malformed(idx + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let item: EvalItem =
                serde_json::from_str(&line).map_err(|e| malformed(idx + 1, e.to_string()))?;
            let consistent = match item.subset {
                Subset::T => item.expected == Expected::Yes && item.replaced_positions.is_empty(),
                Subset::F => item.expected == Expected::No && !item.replaced_positions.is_empty(),
            };
            if !consistent {
                return Err(malformed(
                    idx + 1,
                    format!("item {} has inconsistent subset/expected fields", item.item_id),
                ));
            }
            items.push(item);
        }
        Ok(EvalDataset { meta, items })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        EvalDataset::from_reader(file)
    }
}
