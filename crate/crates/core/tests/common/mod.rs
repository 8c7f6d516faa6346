#![allow(dead_code)]

use std::path::PathBuf;

use herbprobe::corpus::Corpus;
use herbprobe::dataset::EvalDataset;
use herbprobe::protocols::{run_protocol, Lang, Protocol, RunLog, RunOptions};
use herbprobe::providers::{Provider, ProviderConfig, ProviderKind};

pub fn sample_corpus_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample_corpus.jsonl")
}

pub fn sample_corpus() -> Corpus {
    Corpus::load(sample_corpus_path()).expect("sample corpus loads")
}

pub fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    std::fs::read_to_string(path).expect("fixture exists")
}

pub fn run_in_memory(dataset: &EvalDataset, provider: &dyn Provider, protocol: Protocol, kind: ProviderKind) -> RunLog {
    let opts = RunOptions {
        protocol,
        lang: Lang::Zh,
        concurrency: 4,
        provider_config: ProviderConfig::new(kind),
        log_path: None,
        resume: false,
    };
    run_protocol(dataset, provider, &opts).expect("in-memory run")
}
