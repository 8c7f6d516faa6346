//! Pharmacopoeia data model: drug records, ingredient names and the JSONL
//! corpus reader.
//!
//! Every string comparison downstream goes through [`normalize_name`] and
//! [`parse_ingredient`], so two spellings that differ only in whitespace,
//! full-width letters or the parenthesis style of a processing marker compare
//! equal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::digest::Sha256Hex;
use crate::error::{Error, Result};

/// How ingredient names are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Compare canonical names only; "草乌（蒸）" equals "草乌".
    #[default]
    Canonical,
    /// Processing markers must match as well.
    WithMarkers,
}

impl MatchMode {
    pub fn from_flag(match_markers: bool) -> Self {
        if match_markers {
            MatchMode::WithMarkers
        } else {
            MatchMode::Canonical
        }
    }
}

fn fold_width(c: char) -> char {
    match c {
        '\u{3000}' => ' ',
        // Full-width parentheses are kept: they delimit processing markers
        // and parse_ingredient accepts both styles.
        '\u{FF08}' | '\u{FF09}' => c,
        '\u{FF01}'..='\u{FF5E}' => char::from_u32(c as u32 - 0xFEE0).unwrap_or(c),
        _ => c,
    }
}

/// NFC-normalizes `raw`, folds full-width ASCII variants to half-width and
/// removes all whitespace.
pub fn normalize_name(raw: &str) -> Result<String> {
    let out: String = raw
        .nfc()
        .map(fold_width)
        .filter(|c| !c.is_whitespace())
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyName(raw.to_string()));
    }
    Ok(out)
}

fn is_open(c: char) -> bool {
    c == '(' || c == '（'
}

fn is_close(c: char) -> bool {
    c == ')' || c == '）'
}

/// Splits a trailing parenthesized group off `s`, returning the text before
/// it and the group's inner text.
fn split_trailing_group(s: &str) -> Option<(&str, &str)> {
    let last = s.chars().next_back()?;
    if !is_close(last) {
        return None;
    }
    let mut depth = 0usize;
    for (idx, c) in s.char_indices().rev() {
        if is_close(c) {
            depth += 1;
        } else if is_open(c) {
            depth -= 1;
            if depth == 0 {
                let inner_start = idx + c.len_utf8();
                let inner_end = s.len() - last.len_utf8();
                return Some((&s[..idx], &s[inner_start..inner_end]));
            }
        }
    }
    None
}

/// One ingredient of a formulation, e.g. "草乌（蒸）".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ingredient {
    pub canonical: String,
    pub processing_marker: Option<String>,
    pub raw: String,
}

impl Ingredient {
    /// Comparison key under `mode`.
    pub fn key(&self, mode: MatchMode) -> String {
        match (mode, &self.processing_marker) {
            (MatchMode::WithMarkers, Some(marker)) => format!("{}（{}）", self.canonical, marker),
            _ => self.canonical.clone(),
        }
    }
}

impl fmt::Display for Ingredient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.processing_marker {
            Some(marker) => write!(f, "{}（{}）", self.canonical, marker),
            None => f.write_str(&self.canonical),
        }
    }
}

/// Parses an ingredient name, splitting off a trailing processing marker in
/// either parenthesis style. Stacked markers ("没药（制）（炒）") are all
/// removed and joined with "、" so the canonical name never ends in a group.
pub fn parse_ingredient(raw: &str) -> Result<Ingredient> {
    let name = normalize_name(raw)?;
    let mut rest = name.as_str();
    let mut markers = Vec::new();
    while let Some((head, inner)) = split_trailing_group(rest) {
        if !inner.is_empty() {
            markers.push(inner);
        }
        rest = head;
    }
    if rest.is_empty() {
        return Err(Error::EmptyCanonical(raw.to_string()));
    }
    markers.reverse();
    Ok(Ingredient {
        canonical: rest.to_string(),
        processing_marker: if markers.is_empty() {
            None
        } else {
            Some(markers.join("、"))
        },
        raw: raw.to_string(),
    })
}

/// One pharmacopoeia entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugRecord {
    pub name: String,
    pub ingredients: Vec<Ingredient>,
    pub source_text: Option<String>,
}

impl DrugRecord {
    pub fn new(name: &str, ingredients: &[&str], source_text: Option<&str>) -> Result<Self> {
        let line = CorpusLine {
            name: name.to_string(),
            ingredients: ingredients.iter().map(|s| s.to_string()).collect(),
            text: source_text.map(str::to_string),
        };
        DrugRecord::from_line(&line)
    }

    pub fn from_line(line: &CorpusLine) -> Result<Self> {
        let name = normalize_name(&line.name)?;
        if line.ingredients.is_empty() {
            return Err(Error::EmptyIngredients(name));
        }
        let mut seen = BTreeSet::new();
        let mut ingredients = Vec::with_capacity(line.ingredients.len());
        for raw in &line.ingredients {
            let ingredient = parse_ingredient(raw)?;
            if !seen.insert(ingredient.canonical.clone()) {
                return Err(Error::DuplicateIngredient {
                    drug: name,
                    ingredient: ingredient.canonical,
                });
            }
            ingredients.push(ingredient);
        }
        let source_text = line
            .text
            .as_ref()
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty());
        Ok(DrugRecord {
            name,
            ingredients,
            source_text,
        })
    }

    /// Ingredient keys in formulation order.
    pub fn keys(&self, mode: MatchMode) -> Vec<String> {
        self.ingredients.iter().map(|i| i.key(mode)).collect()
    }

    pub fn key_set(&self, mode: MatchMode) -> BTreeSet<String> {
        self.ingredients.iter().map(|i| i.key(mode)).collect()
    }

    fn to_line(&self) -> CorpusLine {
        CorpusLine {
            name: self.name.clone(),
            ingredients: self.ingredients.iter().map(|i| i.raw.clone()).collect(),
            text: self.source_text.clone(),
        }
    }
}

/// Wire shape of one corpus JSONL line. Unknown fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLine {
    pub name: String,
    pub ingredients: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// An immutable, validated collection of drug records.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<DrugRecord>,
    ingredient_pool: BTreeSet<String>,
    by_name: HashMap<String, usize>,
    fingerprint: String,
}

impl Corpus {
    pub fn new(records: Vec<DrugRecord>) -> Result<Self> {
        let mut by_name = HashMap::with_capacity(records.len());
        for (idx, record) in records.iter().enumerate() {
            if by_name.insert(record.name.clone(), idx).is_some() {
                return Err(Error::DuplicateDrug(record.name.clone()));
            }
        }
        let ingredient_pool = pool_of(&records, MatchMode::Canonical);
        let mut hasher = Sha256Hex::new();
        for record in &records {
            let line = serde_json::to_string(&record.to_line()).expect("corpus line serializes");
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        Ok(Corpus {
            records,
            ingredient_pool,
            by_name,
            fingerprint: hasher.finish(),
        })
    }

    /// Reads a JSONL corpus. Blank lines are skipped; line numbers in errors
    /// are 1-based.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashMap::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::MalformedLine {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CorpusLine =
                serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                    line: lineno,
                    message: e.to_string(),
                })?;
            let record = DrugRecord::from_line(&parsed).map_err(|e| match e {
                Error::EmptyName(_) | Error::EmptyCanonical(_) => Error::MalformedLine {
                    line: lineno,
                    message: e.to_string(),
                },
                other => other,
            })?;
            if seen.insert(record.name.clone(), lineno).is_some() {
                return Err(Error::DuplicateDrug(record.name));
            }
            records.push(record);
        }
        Corpus::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Corpus::from_reader(file)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut out, &record.to_line())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[DrugRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&DrugRecord> {
        self.by_name.get(name).map(|&idx| &self.records[idx])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    /// Union of all canonical ingredient names.
    pub fn ingredient_pool(&self) -> &BTreeSet<String> {
        &self.ingredient_pool
    }

    /// Union of all ingredient keys under `mode`.
    pub fn pool(&self, mode: MatchMode) -> BTreeSet<String> {
        match mode {
            MatchMode::Canonical => self.ingredient_pool.clone(),
            MatchMode::WithMarkers => pool_of(&self.records, mode),
        }
    }

    /// SHA-256 over the records' canonical JSONL serialization.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Number of records containing each ingredient key.
    pub fn herb_frequencies(&self, mode: MatchMode) -> BTreeMap<String, usize> {
        let mut freq = BTreeMap::new();
        for record in &self.records {
            for key in record.key_set(mode) {
                *freq.entry(key).or_insert(0) += 1;
            }
        }
        freq
    }

    /// The `m` most frequent ingredient keys, ties broken lexicographically.
    pub fn most_frequent(&self, m: usize, mode: MatchMode) -> Vec<String> {
        let mut ranked: Vec<(String, usize)> = self.herb_frequencies(mode).into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.into_iter().take(m).map(|(herb, _)| herb).collect()
    }
}

fn pool_of(records: &[DrugRecord], mode: MatchMode) -> BTreeSet<String> {
    records
        .iter()
        .flat_map(|r| r.ingredients.iter().map(move |i| i.key(mode)))
        .collect()
}

/// Converts a CSV file with `name`, `ingredients` and optional `text` columns
/// into corpus lines. Ingredients within a cell are separated by "、", "；",
/// ";", "，" or "|".
pub fn import_csv<R: Read>(reader: R) -> Result<Vec<CorpusLine>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedLine {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let name_col = column("name").ok_or_else(|| Error::MalformedLine {
        line: 1,
        message: "missing `name` column".into(),
    })?;
    let ingredients_col = column("ingredients").ok_or_else(|| Error::MalformedLine {
        line: 1,
        message: "missing `ingredients` column".into(),
    })?;
    let text_col = column("text");

    let mut lines = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let lineno = idx + 2;
        let row = row.map_err(|e| Error::MalformedLine {
            line: lineno,
            message: e.to_string(),
        })?;
        let name = row.get(name_col).unwrap_or_default().trim().to_string();
        let ingredients: Vec<String> = row
            .get(ingredients_col)
            .unwrap_or_default()
            .split(['、', '；', ';', '，', '|'])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let text = text_col
            .and_then(|c| row.get(c))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string);
        let line = CorpusLine {
            name,
            ingredients,
            text,
        };
        DrugRecord::from_line(&line).map_err(|e| Error::MalformedLine {
            line: lineno,
            message: e.to_string(),
        })?;
        lines.push(line);
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_trims_and_keeps_markers() {
        assert_eq!(normalize_name(" 甘草 ").unwrap(), "甘草");
        assert_eq!(normalize_name("甘草").unwrap(), "甘草");
        assert_eq!(normalize_name("乳香（制）").unwrap(), "乳香（制）");
        assert_eq!(normalize_name("薄荷 素油").unwrap(), "薄荷素油");
    }

    #[test]
    fn normalize_folds_full_width_ascii() {
        assert_eq!(normalize_name("ＡＢＣ１２").unwrap(), "ABC12");
        assert_eq!(normalize_name("\u{3000}甘草\u{3000}").unwrap(), "甘草");
    }

    #[test]
    fn normalize_rejects_blank() {
        assert!(matches!(normalize_name("  \t "), Err(Error::EmptyName(_))));
        assert!(matches!(normalize_name(""), Err(Error::EmptyName(_))));
    }

    #[test]
    fn normalize_composes_to_nfc() {
        // "e" + combining acute
        assert_eq!(normalize_name("e\u{0301}").unwrap(), "\u{00e9}");
    }

    #[test]
    fn parse_splits_markers() {
        let i = parse_ingredient("草乌（蒸）").unwrap();
        assert_eq!(i.canonical, "草乌");
        assert_eq!(i.processing_marker.as_deref(), Some("蒸"));
        assert_eq!(i.raw, "草乌（蒸）");

        let i = parse_ingredient("甘草").unwrap();
        assert_eq!(i.canonical, "甘草");
        assert_eq!(i.processing_marker, None);

        let i = parse_ingredient("乳香(制)").unwrap();
        assert_eq!(i.canonical, "乳香");
        assert_eq!(i.processing_marker.as_deref(), Some("制"));
    }

    #[test]
    fn parse_accepts_every_parenthesis_pairing() {
        for open in ['(', '（'] {
            for close in [')', '）'] {
                let raw = format!("没药{open}制{close}");
                let i = parse_ingredient(&raw).unwrap();
                assert_eq!(i.canonical, "没药", "{raw}");
                assert_eq!(i.processing_marker.as_deref(), Some("制"), "{raw}");
            }
        }
    }

    #[test]
    fn parse_rejects_marker_only() {
        assert!(matches!(
            parse_ingredient("（制）"),
            Err(Error::EmptyCanonical(_))
        ));
    }

    #[test]
    fn parse_handles_stacked_and_empty_markers() {
        let i = parse_ingredient("没药（制）（炒）").unwrap();
        assert_eq!(i.canonical, "没药");
        assert_eq!(i.processing_marker.as_deref(), Some("制、炒"));

        let i = parse_ingredient("甘草()").unwrap();
        assert_eq!(i.canonical, "甘草");
        assert_eq!(i.processing_marker, None);
    }

    #[test]
    fn parse_leaves_inner_parentheses() {
        let i = parse_ingredient("黄芪（蜜炙）粉").unwrap();
        assert_eq!(i.canonical, "黄芪（蜜炙）粉");
        assert_eq!(i.processing_marker, None);
    }

    #[test]
    fn keys_respect_match_mode() {
        let i = parse_ingredient("草乌(蒸)").unwrap();
        assert_eq!(i.key(MatchMode::Canonical), "草乌");
        assert_eq!(i.key(MatchMode::WithMarkers), "草乌（蒸）");
        assert_eq!(i.to_string(), "草乌（蒸）");
    }

    #[test]
    fn loads_appendix_records() {
        let jsonl = concat!(
            r#"{"name":"心脑健片","ingredients":["茶叶"]}"#,
            "\n",
            r#"{"name":"羚羊角胶囊","ingredients":["羚羊角","牛蒡子","淡豆豉","金银花","荆芥","连翘","淡竹叶","桔梗","薄荷素油","甘草"],"extra":1}"#,
            "\n\n"
        );
        let corpus = Corpus::from_reader(jsonl.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.get("心脑健片").unwrap().ingredients.len(), 1);
        assert_eq!(corpus.get("羚羊角胶囊").unwrap().ingredients.len(), 10);
        assert_eq!(corpus.ingredient_pool().len(), 11);
        assert_eq!(corpus.get("羚羊角胶囊").unwrap().source_text, None);
    }

    #[test]
    fn rejects_duplicate_names() {
        let jsonl = concat!(
            r#"{"name":"四物颗粒","ingredients":["当归"]}"#,
            "\n",
            r#"{"name":" 四物颗粒","ingredients":["川芎"]}"#,
            "\n"
        );
        match Corpus::from_reader(jsonl.as_bytes()) {
            Err(Error::DuplicateDrug(name)) => assert_eq!(name, "四物颗粒"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let jsonl = concat!(
            r#"{"name":"甲","ingredients":["当归"]}"#,
            "\n",
            r#"{"name":"乙","ingredients":"#,
            "\n"
        );
        match Corpus::from_reader(jsonl.as_bytes()) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed line, got {other:?}"),
        }
        let missing = r#"{"ingredients":["当归"]}"#;
        assert!(matches!(
            Corpus::from_reader(missing.as_bytes()),
            Err(Error::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_empty_ingredient_list() {
        let jsonl = r#"{"name":"甲","ingredients":[]}"#;
        assert!(matches!(
            Corpus::from_reader(jsonl.as_bytes()),
            Err(Error::EmptyIngredients(_))
        ));
    }

    #[test]
    fn rejects_repeated_ingredient() {
        let jsonl = r#"{"name":"甲","ingredients":["乳香","乳香（制）"]}"#;
        assert!(matches!(
            Corpus::from_reader(jsonl.as_bytes()),
            Err(Error::DuplicateIngredient { .. })
        ));
    }

    #[test]
    fn most_frequent_breaks_ties_lexicographically() {
        let corpus = Corpus::new(vec![
            DrugRecord::new("甲", &["甘草", "当归", "川芎"], None).unwrap(),
            DrugRecord::new("乙", &["甘草", "川芎"], None).unwrap(),
            DrugRecord::new("丙", &["甘草", "当归"], None).unwrap(),
        ])
        .unwrap();
        let mut expected_tie = ["川芎".to_string(), "当归".to_string()];
        expected_tie.sort();
        let top = corpus.most_frequent(3, MatchMode::Canonical);
        assert_eq!(top[0], "甘草");
        assert_eq!(&top[1..], &expected_tie[..]);
        assert_eq!(corpus.most_frequent(10, MatchMode::Canonical).len(), 3);
    }

    #[test]
    fn csv_import_splits_ingredients() {
        let csv = "name,ingredients,text\n四物颗粒,当归、川芎；白芍|熟地黄,补血\n";
        let lines = import_csv(csv.as_bytes()).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].ingredients, ["当归", "川芎", "白芍", "熟地黄"]);
        assert_eq!(lines[0].text.as_deref(), Some("补血"));
        assert!(import_csv("name,text\n甲,乙\n".as_bytes()).is_err());
    }
}
