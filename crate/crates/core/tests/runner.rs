mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use herbprobe::corpus::MatchMode;
use herbprobe::dataset::{build_dataset, EvalDataset};
use herbprobe::protocols::{run_protocol, Lang, Protocol, RunLog, RunOptions, RunRecord, Verdict};
use herbprobe::providers::{
    OracleProvider, Provider, ProviderConfig, ProviderError, ProviderErrorKind, ProviderKind, ProviderResponse,
    Query,
};
use herbprobe::Error;

use common::sample_corpus;

fn dataset() -> EvalDataset {
    build_dataset(&sample_corpus(), 42, MatchMode::Canonical).unwrap()
}

fn opts(concurrency: usize, log_path: Option<std::path::PathBuf>, resume: bool) -> RunOptions {
    RunOptions {
        protocol: Protocol::Verify,
        lang: Lang::Zh,
        concurrency,
        provider_config: ProviderConfig::new(ProviderKind::Oracle),
        log_path,
        resume,
    }
}

/// Records without the timing field.
fn stable(records: &[RunRecord]) -> Vec<RunRecord> {
    records
        .iter()
        .cloned()
        .map(|mut r| {
            r.latency_ms = 0.0;
            r
        })
        .collect()
}

/// Oracle answers with a jittered delay, failing on one item.
struct Flaky {
    inner: OracleProvider,
    fail_on: Option<usize>,
    calls: AtomicUsize,
}

impl Provider for Flaky {
    fn complete(&self, query: &Query) -> ProviderResponse {
        self.calls.fetch_add(1, Ordering::SeqCst);
        std::thread::sleep(Duration::from_micros(((query.item_id * 7919) % 13) as u64 * 200));
        if Some(query.item_id) == self.fail_on {
            return ProviderResponse::error(
                ProviderError::new(ProviderErrorKind::Status, "HTTP 503: unavailable"),
                Duration::ZERO,
            );
        }
        self.inner.complete(query)
    }
}

fn flaky(fail_on: Option<usize>) -> Flaky {
    Flaky {
        inner: OracleProvider::new(Arc::new(sample_corpus()), MatchMode::Canonical),
        fail_on,
        calls: AtomicUsize::new(0),
    }
}

#[test]
fn concurrency_does_not_change_results() {
    let ds = dataset();
    let one = run_protocol(&ds, &flaky(None), &opts(1, None, false)).unwrap();
    let eight = run_protocol(&ds, &flaky(None), &opts(8, None, false)).unwrap();
    assert_eq!(stable(&one.records), stable(&eight.records));
    let order: Vec<usize> = one.records.iter().map(|r| r.item_id).collect();
    let expected: Vec<usize> = ds.items.iter().map(|i| i.item_id).collect();
    assert_eq!(order, expected);
    assert_eq!(one.invalid_count(), 0);
}

#[test]
fn failing_item_is_isolated() {
    let ds = dataset();
    let victim = ds.items[5].item_id;
    let log = run_protocol(&ds, &flaky(Some(victim)), &opts(4, None, false)).unwrap();
    assert_eq!(log.records.len(), ds.len());
    for r in &log.records {
        if r.item_id == victim {
            assert_eq!(r.verdict(), Verdict::Invalid);
            assert_eq!(r.error.as_ref().unwrap().kind, ProviderErrorKind::Status);
            assert!(r.raw_response.is_empty());
        } else {
            assert!(r.error.is_none());
            assert_ne!(r.verdict(), Verdict::Invalid);
        }
    }
    assert_eq!(log.error_count(), 1);
}

#[test]
fn log_is_written_in_presentation_order_and_finished() {
    let ds = dataset();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    let log = run_protocol(&ds, &flaky(None), &opts(8, Some(path.clone()), false)).unwrap();
    let loaded = RunLog::load(&path).unwrap();
    assert_eq!(stable(&loaded.records), stable(&log.records));
    assert!(loaded.meta.finished.is_some());
    assert_eq!(loaded.meta.dataset_fingerprint, ds.fingerprint());
    assert!(!dir.path().join("run.jsonl.tmp").exists());
}

#[test]
fn resume_runs_only_missing_items() {
    let ds = dataset();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    let full = run_protocol(&ds, &flaky(None), &opts(2, Some(path.clone()), false)).unwrap();

    // keep the header and 10 records, then a torn write
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().take(11).collect();
    let torn = &text.lines().nth(11).unwrap()[..20];
    lines.push(torn);
    std::fs::write(&path, lines.join("\n")).unwrap();

    let provider = flaky(None);
    let resumed = run_protocol(&ds, &provider, &opts(3, Some(path.clone()), true)).unwrap();
    assert_eq!(provider.calls.load(Ordering::SeqCst), ds.len() - 10);
    assert_eq!(stable(&resumed.records), stable(&full.records));
    assert_eq!(resumed.meta.started, full.meta.started);
    assert_eq!(stable(&RunLog::load(&path).unwrap().records), stable(&full.records));

    let again = flaky(None);
    run_protocol(&ds, &again, &opts(3, Some(path.clone()), true)).unwrap();
    assert_eq!(again.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn resume_rejects_a_different_dataset() {
    let ds = dataset();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    run_protocol(&ds, &flaky(None), &opts(2, Some(path.clone()), false)).unwrap();
    let other = build_dataset(&sample_corpus(), 43, MatchMode::Canonical).unwrap();
    let err = run_protocol(&other, &flaky(None), &opts(2, Some(path.clone()), true)).unwrap_err();
    assert!(matches!(err, Error::FingerprintMismatch { what: "dataset", .. }), "{err}");

    let mut inquiry = opts(2, Some(path), true);
    inquiry.protocol = Protocol::Inquiry;
    let err = run_protocol(&ds, &flaky(None), &inquiry).unwrap_err();
    assert!(matches!(err, Error::ProtocolMismatch { .. }), "{err}");
}

#[test]
fn without_resume_an_existing_log_is_replaced() {
    let ds = dataset();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    run_protocol(&ds, &flaky(None), &opts(2, Some(path.clone()), false)).unwrap();
    let provider = flaky(None);
    run_protocol(&ds, &provider, &opts(2, Some(path.clone()), false)).unwrap();
    assert_eq!(provider.calls.load(Ordering::SeqCst), ds.len());
    assert_eq!(RunLog::load(&path).unwrap().records.len(), ds.len());
}
