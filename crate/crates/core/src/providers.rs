//! Answer providers: a remote chat-completions client, the retrieval
//! wrapper, and deterministic simulated models that reproduce specific
//! answer behaviours offline.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MatchMode};
use crate::dataset::{EvalDataset, Subset};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::protocols::{render_rag_prompt, Lang, Protocol};
use crate::retrieval::{Index, RetrievedEntry, DEFAULT_TOP_K};

pub const YES: &str = "是";
pub const NO: &str = "否";
pub const DEFAULT_API_KEY_ENV: &str = "PROVIDER_API_KEY";

/// One question as seen by a provider: the rendered prompt plus the item it
/// was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub item_id: usize,
    pub protocol: Protocol,
    pub drug_name: String,
    pub ingredients: Vec<String>,
    pub prompt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderErrorKind {
    Transport,
    Status,
    MalformedBody,
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    pub attempts: u32,
}

impl ProviderError {
    pub fn new(kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        ProviderError {
            kind,
            message: message.into(),
            status: None,
            attempts: 1,
        }
    }

    fn unsupported(message: impl Into<String>) -> Self {
        ProviderError::new(ProviderErrorKind::Unsupported, message)
    }
}

impl fmt::Display for ProviderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} error after {} attempt(s): {}", self.kind, self.attempts, self.message)
    }
}

impl std::error::Error for ProviderError {}

#[derive(Debug, Clone)]
pub struct ProviderResponse {
    /// Response text, or the error that prevented one.
    pub outcome: std::result::Result<String, ProviderError>,
    pub latency: Duration,
    pub retrieval_context: Option<Vec<RetrievedEntry>>,
}

impl ProviderResponse {
    pub fn text(text: impl Into<String>, latency: Duration) -> Self {
        ProviderResponse {
            outcome: Ok(text.into()),
            latency,
            retrieval_context: None,
        }
    }

    pub fn error(error: ProviderError, latency: Duration) -> Self {
        ProviderResponse {
            outcome: Err(error),
            latency,
            retrieval_context: None,
        }
    }

    pub fn raw_text(&self) -> Option<&str> {
        self.outcome.as_ref().ok().map(String::as_str)
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, query: &Query) -> ProviderResponse;
}

fn timed(f: impl FnOnce() -> std::result::Result<String, ProviderError>) -> ProviderResponse {
    let start = Instant::now();
    let outcome = f();
    ProviderResponse {
        outcome,
        latency: start.elapsed(),
        retrieval_context: None,
    }
}

fn yes_no(answer: bool) -> String {
    if answer { YES } else { NO }.to_string()
}

fn join_herbs(herbs: &[String]) -> String {
    herbs.join("、")
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Rag,
    Oracle,
    Grounded,
    Literal,
    CommonHerb,
    Biased,
    FixedConfusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BiasMode {
    AlwaysYes,
    AlwaysNo,
    Bernoulli { p: f64, seed: u64 },
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}
fn default_concurrency() -> usize {
    4
}
fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}

/// Provider configuration, read from TOML or JSON.
///
/// ```toml
/// kind = "rag"
/// top_k = 10
///
/// [inner]
/// kind = "remote"
/// endpoint_url = "http://localhost:8000/v1"
/// model_name = "llama3-chinese-8b-instruct"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<ProviderConfig>>,
    /// Retrieved entries per question (rag).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    /// Number of herbs answered (common_herb).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Frequent herbs appended to literal answers (literal).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<BiasMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind) -> Self {
        ProviderConfig {
            kind,
            endpoint_url: None,
            model_name: None,
            temperature: 0.0,
            api_key_env: default_api_key_env(),
            concurrency_limit: default_concurrency(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            backoff_ms: default_backoff(),
            inner: None,
            top_k: None,
            m: None,
            pad: None,
            bias: None,
            confusion: None,
            seed: None,
        }
    }

    pub fn remote(endpoint_url: &str, model_name: &str) -> Self {
        ProviderConfig {
            endpoint_url: Some(endpoint_url.to_string()),
            model_name: Some(model_name.to_string()),
            ..ProviderConfig::new(ProviderKind::Remote)
        }
    }

    pub fn rag(inner: ProviderConfig) -> Self {
        ProviderConfig {
            inner: Some(Box::new(inner)),
            ..ProviderConfig::new(ProviderKind::Rag)
        }
    }

    pub fn biased(mode: BiasMode) -> Self {
        ProviderConfig {
            bias: Some(mode),
            ..ProviderConfig::new(ProviderKind::Biased)
        }
    }

    pub fn fixed_confusion(cm: ConfusionMatrix, seed: u64) -> Self {
        ProviderConfig {
            confusion: Some(cm),
            seed: Some(seed),
            ..ProviderConfig::new(ProviderKind::FixedConfusion)
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let config: ProviderConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ProviderConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("{:?} provider: {msg}", self.kind)));
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return fail("temperature must be a finite value >= 0");
        }
        if self.concurrency_limit == 0 {
            return fail("concurrency_limit must be positive");
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return fail("timeout_secs must be positive");
        }
        match self.kind {
            ProviderKind::Remote => {
                if self.endpoint_url.as_deref().is_none_or(str::is_empty) {
                    return fail("endpoint_url is required");
                }
                if self.model_name.as_deref().is_none_or(str::is_empty) {
                    return fail("model_name is required");
                }
            }
            ProviderKind::Rag => {
                let Some(inner) = &self.inner else {
                    return fail("inner provider is required");
                };
                if self.top_k == Some(0) {
                    return fail("top_k must be at least 1");
                }
                inner.validate()?;
            }
            ProviderKind::CommonHerb if self.m == Some(0) => return fail("m must be at least 1"),
            ProviderKind::Biased => match self.bias {
                None => return fail("bias mode is required"),
                Some(BiasMode::Bernoulli { p, .. }) if !(0.0..=1.0).contains(&p) => {
                    return fail("bernoulli p must lie in [0, 1]")
                }
                _ => {}
            },
            ProviderKind::FixedConfusion if self.confusion.is_none() => {
                return fail("confusion matrix is required")
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether building this provider needs the corpus.
    pub fn needs_corpus(&self) -> bool {
        match self.kind {
            ProviderKind::Rag | ProviderKind::Oracle | ProviderKind::Grounded => true,
            ProviderKind::Literal | ProviderKind::CommonHerb => true,
            ProviderKind::Remote | ProviderKind::Biased | ProviderKind::FixedConfusion => false,
        }
    }
}

/// Shared inputs for building providers.
#[derive(Clone, Default)]
pub struct ProviderContext<'a> {
    pub corpus: Option<Arc<Corpus>>,
    pub index: Option<Arc<Index>>,
    pub dataset: Option<&'a EvalDataset>,
    pub mode: MatchMode,
    pub lang: Lang,
}

impl ProviderContext<'_> {
    fn corpus(&self, kind: ProviderKind) -> Result<Arc<Corpus>> {
        self.corpus
            .clone()
            .ok_or_else(|| Error::Config(format!("{kind:?} provider needs a corpus")))
    }

    fn index(&self, kind: ProviderKind) -> Result<Arc<Index>> {
        if let Some(index) = &self.index {
            return Ok(index.clone());
        }
        let corpus = self.corpus(kind)?;
        Ok(Arc::new(crate::retrieval::build_index(&corpus)))
    }
}

pub fn build_provider(config: &ProviderConfig, ctx: &ProviderContext<'_>) -> Result<Box<dyn Provider>> {
    config.validate()?;
    Ok(match config.kind {
        ProviderKind::Remote => Box::new(RemoteProvider::new(config)?),
        ProviderKind::Rag => {
            let inner = build_provider(config.inner.as_deref().expect("validated"), ctx)?;
            Box::new(rag_wrap(
                inner,
                ctx.index(config.kind)?,
                config.top_k.unwrap_or(DEFAULT_TOP_K),
                ctx.lang,
            ))
        }
        ProviderKind::Oracle => Box::new(OracleProvider::new(ctx.corpus(config.kind)?, ctx.mode)),
        ProviderKind::Grounded => Box::new(grounded_verifier(ctx.index(config.kind)?, ctx.mode)),
        ProviderKind::Literal => Box::new(LiteralProvider::new(
            &*ctx.corpus(config.kind)?,
            config.pad.unwrap_or(3),
            ctx.mode,
        )),
        ProviderKind::CommonHerb => Box::new(common_herb_provider(
            &*ctx.corpus(config.kind)?,
            config.m.unwrap_or(10),
            ctx.mode,
        )),
        ProviderKind::Biased => Box::new(biased_verifier(config.bias.expect("validated"))),
        ProviderKind::FixedConfusion => {
            let dataset = ctx
                .dataset
                .ok_or_else(|| Error::Config("fixed_confusion provider needs the dataset".into()))?;
            Box::new(fixed_confusion_provider(
                config.confusion.expect("validated"),
                config.seed.unwrap_or(0),
                dataset,
            )?)
        }
    })
}

// ---------------------------------------------------------------------------
// oracle

/// Answers from the corpus itself: perfect inquiry lists and perfect
/// verification.
pub struct OracleProvider {
    corpus: Arc<Corpus>,
    mode: MatchMode,
}

impl OracleProvider {
    pub fn new(corpus: Arc<Corpus>, mode: MatchMode) -> Self {
        OracleProvider { corpus, mode }
    }
}

impl Provider for OracleProvider {
    fn complete(&self, query: &Query) -> ProviderResponse {
        timed(|| {
            let record = self
                .corpus
                .get(&query.drug_name)
                .ok_or_else(|| ProviderError::unsupported(format!("{} is not in the corpus", query.drug_name)))?;
            Ok(match query.protocol {
                Protocol::Inquiry => join_herbs(&record.keys(self.mode)),
                Protocol::Verify => {
                    let presented: BTreeSet<&String> = query.ingredients.iter().collect();
                    let oracle = record.key_set(self.mode);
                    yes_no(presented.len() == oracle.len() && oracle.iter().all(|h| presented.contains(h)))
                }
            })
        })
    }
}

// ---------------------------------------------------------------------------
// grounded verifier

/// Looks the drug up in the index and compares against the retrieved entry.
pub struct GroundedVerifier {
    index: Arc<Index>,
    mode: MatchMode,
}

pub fn grounded_verifier(index: Arc<Index>, mode: MatchMode) -> GroundedVerifier {
    GroundedVerifier { index, mode }
}

impl Provider for GroundedVerifier {
    fn complete(&self, query: &Query) -> ProviderResponse {
        let start = Instant::now();
        let hits = self.index.search(&query.drug_name, 1);
        let entry = hits
            .first()
            .filter(|h| h.drug_name == query.drug_name)
            .and_then(|h| self.index.doc(h.doc_id));
        if entry.is_none() {
            log::warn!("grounded verifier: no entry retrieved for {}", query.drug_name);
        }
        let text = match (query.protocol, entry) {
            (Protocol::Verify, Some(doc)) => {
                let retrieved: BTreeSet<String> = doc.ingredients.iter().map(|i| i.key(self.mode)).collect();
                let presented: BTreeSet<String> = query.ingredients.iter().cloned().collect();
                yes_no(retrieved == presented)
            }
            (Protocol::Verify, None) => NO.to_string(),
            (Protocol::Inquiry, Some(doc)) => {
                let keys: Vec<String> = doc.ingredients.iter().map(|i| i.key(self.mode)).collect();
                join_herbs(&keys)
            }
            (Protocol::Inquiry, None) => String::new(),
        };
        let mut response = ProviderResponse::text(text, start.elapsed());
        response.retrieval_context = Some(hits);
        response
    }
}

// ---------------------------------------------------------------------------
// literal interpretation

/// Reads herbs out of the drug name. Inquiry answers list every known herb
/// that occurs in the name (by position), followed by the `pad` most
/// frequent herbs. Verification answers 是 when every herb found in the name
/// is among the presented ingredients.
pub struct LiteralProvider {
    pool: Vec<String>,
    pad: Vec<String>,
}

impl LiteralProvider {
    pub fn new(corpus: &Corpus, pad: usize, mode: MatchMode) -> Self {
        LiteralProvider {
            pool: corpus.pool(mode).into_iter().collect(),
            pad: corpus.most_frequent(pad, mode),
        }
    }

    /// Known herbs occurring in `name`, ordered by first position then name.
    pub fn herbs_in_name(&self, name: &str) -> Vec<String> {
        let mut found: Vec<(usize, &String)> = self
            .pool
            .iter()
            .filter_map(|h| name.find(h.as_str()).map(|pos| (pos, h)))
            .collect();
        found.sort();
        found.into_iter().map(|(_, h)| h.clone()).collect()
    }
}

pub fn literal_provider(corpus: &Corpus) -> LiteralProvider {
    LiteralProvider::new(corpus, 3, MatchMode::Canonical)
}

impl Provider for LiteralProvider {
    fn complete(&self, query: &Query) -> ProviderResponse {
        timed(|| {
            let from_name = self.herbs_in_name(&query.drug_name);
            Ok(match query.protocol {
                Protocol::Inquiry => {
                    let mut answer = from_name;
                    for herb in &self.pad {
                        if !answer.contains(herb) {
                            answer.push(herb.clone());
                        }
                    }
                    join_herbs(&answer)
                }
                Protocol::Verify => yes_no(from_name.iter().all(|h| query.ingredients.contains(h))),
            })
        })
    }
}

// ---------------------------------------------------------------------------
// common-herb overuse

/// Always answers with the `m` most frequent herbs and always confirms.
pub struct CommonHerbProvider {
    herbs: Vec<String>,
}

pub fn common_herb_provider(corpus: &Corpus, m: usize, mode: MatchMode) -> CommonHerbProvider {
    CommonHerbProvider {
        herbs: corpus.most_frequent(m, mode),
    }
}

impl CommonHerbProvider {
    pub fn herbs(&self) -> &[String] {
        &self.herbs
    }
}

impl Provider for CommonHerbProvider {
    fn complete(&self, query: &Query) -> ProviderResponse {
        timed(|| {
            Ok(match query.protocol {
                Protocol::Inquiry => join_herbs(&self.herbs),
                Protocol::Verify => YES.to_string(),
            })
        })
    }
}

// ---------------------------------------------------------------------------
// biased verifier

pub struct BiasedVerifier {
    mode: BiasMode,
}

pub fn biased_verifier(mode: BiasMode) -> BiasedVerifier {
    BiasedVerifier { mode }
}

impl Provider for BiasedVerifier {
    fn complete(&self, query: &Query) -> ProviderResponse {
        timed(|| {
            if query.protocol != Protocol::Verify {
                return Err(ProviderError::unsupported("biased verifier only answers verification questions"));
            }
            Ok(yes_no(match self.mode {
                BiasMode::AlwaysYes => true,
                BiasMode::AlwaysNo => false,
                BiasMode::Bernoulli { p, seed } => {
                    // one ChaCha stream per item keeps answers independent of call order
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(query.item_id as u64);
                    rng.random_bool(p)
                }
            }))
        })
    }
}

// ---------------------------------------------------------------------------
// fixed confusion

/// Answers so that scoring the run reproduces a given confusion matrix.
/// Which T items get the `tp` confirmations and which F items get the `fp`
/// confirmations is a seeded shuffle.
pub struct FixedConfusionProvider {
    answers: HashMap<usize, bool>,
}

pub fn fixed_confusion_provider(
    cm: ConfusionMatrix,
    seed: u64,
    dataset: &EvalDataset,
) -> Result<FixedConfusionProvider> {
    let (t, f) = dataset.counts();
    if cm.tp + cm.fn_ != t as u64 || cm.fp + cm.tn != f as u64 {
        return Err(Error::Config(format!(
            "confusion matrix rows ({}+{}, {}+{}) do not match dataset counts ({t} T, {f} F)",
            cm.tp, cm.fn_, cm.fp, cm.tn
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut answers = HashMap::with_capacity(dataset.len());
    for (subset, yes_count) in [(Subset::T, cm.tp), (Subset::F, cm.fp)] {
        let mut ids: Vec<usize> = dataset
            .items
            .iter()
            .filter(|i| i.subset == subset)
            .map(|i| i.item_id)
            .collect();
        ids.shuffle(&mut rng);
        for (rank, id) in ids.into_iter().enumerate() {
            answers.insert(id, (rank as u64) < yes_count);
        }
    }
    Ok(FixedConfusionProvider { answers })
}

impl Provider for FixedConfusionProvider {
    fn complete(&self, query: &Query) -> ProviderResponse {
        timed(|| {
            if query.protocol != Protocol::Verify {
                return Err(ProviderError::unsupported(
                    "fixed-confusion provider only answers verification questions",
                ));
            }
            self.answers
                .get(&query.item_id)
                .map(|&yes| yes_no(yes))
                .ok_or_else(|| ProviderError::unsupported(format!("item {} is not in the dataset", query.item_id)))
        })
    }
}

// ---------------------------------------------------------------------------
// retrieval-augmented wrapper

/// Prepends the top-k retrieved corpus entries to each prompt before
/// delegating to the wrapped provider.
pub struct RagProvider {
    inner: Box<dyn Provider>,
    index: Arc<Index>,
    k: usize,
    lang: Lang,
}

pub fn rag_wrap(inner: Box<dyn Provider>, index: Arc<Index>, k: usize, lang: Lang) -> RagProvider {
    RagProvider { inner, index, k, lang }
}

impl RagProvider {
    /// Retrieval query: the drug name, plus the candidate list when verifying.
    pub fn retrieval_query(query: &Query) -> String {
        match query.protocol {
            Protocol::Inquiry => query.drug_name.clone(),
            Protocol::Verify => {
                let mut q = query.drug_name.clone();
                for herb in &query.ingredients {
                    q.push(' ');
                    q.push_str(herb);
                }
                q
            }
        }
    }
}

impl Provider for RagProvider {
    fn complete(&self, query: &Query) -> ProviderResponse {
        let start = Instant::now();
        let entries = self.index.search(&RagProvider::retrieval_query(query), self.k);
        if entries.is_empty() {
            log::warn!("no entries retrieved for item {}", query.item_id);
        }
        let context = entries
            .iter()
            .map(|e| e.rendered_text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        let wrapped = Query {
            prompt: render_rag_prompt(self.lang, &context, &query.prompt),
            ..query.clone()
        };
        let mut response = self.inner.complete(&wrapped);
        response.retrieval_context = Some(entries);
        response.latency = start.elapsed();
        response
    }
}

// ---------------------------------------------------------------------------
// remote chat completions

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

/// Single-turn chat-completions client. Transport failures, 429 and 5xx
/// responses are retried with exponential backoff; other statuses fail at
/// once.
pub struct RemoteProvider {
    agent: ureq::Agent,
    url: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
    retries: u32,
    backoff: Duration,
    in_flight: Semaphore,
}

/// `{base}/chat/completions`, unless the base already names the route.
pub fn chat_completions_url(base: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else {
        format!("{base}/chat/completions")
    }
}

impl RemoteProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self> {
        let endpoint = config
            .endpoint_url
            .as_deref()
            .ok_or_else(|| Error::Config("remote provider: endpoint_url is required".into()))?;
        let model = config
            .model_name
            .clone()
            .ok_or_else(|| Error::Config("remote provider: model_name is required".into()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending requests without a bearer token", config.api_key_env);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteProvider {
            agent,
            url: chat_completions_url(endpoint),
            model,
            temperature: config.temperature,
            api_key,
            retries: config.retries,
            backoff: Duration::from_millis(config.backoff_ms),
            in_flight: Semaphore::new(config.concurrency_limit.max(1)),
        })
    }

    fn attempt(&self, prompt: &str) -> std::result::Result<String, (ProviderError, bool)> {
        let body = ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.temperature,
        };
        let mut request = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = match request.send_json(&body) {
            Ok(r) => r,
            Err(e) => return Err((ProviderError::new(ProviderErrorKind::Transport, e.to_string()), true)),
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string();
        if !(200..300).contains(&status) {
            let retryable = status == 429 || status >= 500;
            let mut err = ProviderError::new(
                ProviderErrorKind::Status,
                format!("HTTP {status}: {}", text.unwrap_or_default().chars().take(200).collect::<String>()),
            );
            err.status = Some(status);
            return Err((err, retryable));
        }
        let text = text.map_err(|e| (ProviderError::new(ProviderErrorKind::Transport, e.to_string()), true))?;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| (ProviderError::new(ProviderErrorKind::MalformedBody, e.to_string()), false))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                (
                    ProviderError::new(ProviderErrorKind::MalformedBody, "response has no choices[0].message.content"),
                    false,
                )
            })
    }
}

impl Provider for RemoteProvider {
    fn complete(&self, query: &Query) -> ProviderResponse {
        let _permit = self.in_flight.acquire();
        let start = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&query.prompt) {
                Ok(text) => return ProviderResponse::text(text, start.elapsed()),
                Err((mut err, retryable)) => {
                    if !retryable || attempts > self.retries {
                        err.attempts = attempts;
                        return ProviderResponse::error(err, start.elapsed());
                    }
                    let delay = self.backoff.saturating_mul(1 << (attempts - 1).min(16));
                    log::debug!("item {}: attempt {attempts} failed ({}), retrying in {delay:?}", query.item_id, err.message);
                    std::thread::sleep(delay);
                }
            }
        }
    }
}
