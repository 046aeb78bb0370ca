//! Dialect translation of standard-dialect text and assembly of the
//! multi-dialect text corpus used for MD-PL-BERT pre-training.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{g2p_lookup, word_spans, DialectId, Lexicon};
use crate::error::{Error, Result};
use crate::mdplbert::TextLine;

pub const DEFAULT_TEMPLATE: &str = "Rewrite the following sentences as if they were in [target dialect]: [sentence]";
const DIALECT_SLOT: &str = "[target dialect]";
const SENTENCE_SLOT: &str = "[sentence]";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    template: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            template: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(template: &str) -> Result<Self> {
        for slot in [DIALECT_SLOT, SENTENCE_SLOT] {
            let n = template.matches(slot).count();
            if n != 1 {
                return Err(Error::Config(format!("prompt template must contain {slot} exactly once, found {n}")));
            }
        }
        Ok(PromptTemplate {
            template: template.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }

    /// Splices both values into the template. Substituted text is never rescanned.
    pub fn build(&self, sentence: &str, target_dialect: &str) -> Result<String> {
        if sentence.trim().is_empty() {
            return Err(Error::Input("cannot build a prompt for an empty sentence".into()));
        }
        let t = &self.template;
        let d = t.find(DIALECT_SLOT).expect("validated template");
        let s = t.find(SENTENCE_SLOT).expect("validated template");
        let mut slots = [(d, DIALECT_SLOT, target_dialect), (s, SENTENCE_SLOT, sentence)];
        slots.sort_by_key(|x| x.0);
        let mut out = String::with_capacity(t.len() + sentence.len() + target_dialect.len());
        let mut cursor = 0;
        for (pos, slot, value) in slots {
            out.push_str(&t[cursor..pos]);
            out.push_str(value);
            cursor = pos + slot.len();
        }
        out.push_str(&t[cursor..]);
        Ok(out)
    }
}

pub fn build_prompt(sentence: &str, target_dialect: &str) -> Result<String> {
    PromptTemplate::default().build(sentence, target_dialect)
}

/// One prompt/response exchange.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub attempt: usize,
    pub prompt: String,
    pub response: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Translation {
    pub text: Option<String>,
    pub exchanges: Vec<Exchange>,
}

pub trait TranslatorBackend: Send + Sync {
    fn name(&self) -> &str;
    /// Never aborts: failures are reported in the returned exchanges.
    fn translate(&self, sentence: &str, target_dialect: &str) -> Translation;
}

/// Word-by-word substitution per target dialect.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleBased {
    pub tables: BTreeMap<String, BTreeMap<String, String>>,
}

impl RuleBased {
    pub fn new(tables: BTreeMap<String, BTreeMap<String, String>>) -> Self {
        RuleBased { tables }
    }

    pub fn apply(&self, sentence: &str, target_dialect: &str) -> String {
        let table = self.tables.get(target_dialect);
        sentence
            .split_whitespace()
            .map(|w| table.and_then(|t| t.get(w)).map(String::as_str).unwrap_or(w))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl TranslatorBackend for RuleBased {
    fn name(&self) -> &str {
        "rule-based"
    }

    fn translate(&self, sentence: &str, target_dialect: &str) -> Translation {
        let (prompt, text, error) = match build_prompt(sentence, target_dialect) {
            Ok(p) => (p, Some(self.apply(sentence, target_dialect)), None),
            Err(e) => (String::new(), None, Some(e.to_string())),
        };
        Translation {
            text: text.clone(),
            exchanges: vec![Exchange {
                attempt: 1,
                prompt,
                response: text,
                error,
            }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteLlmConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: f64,
    pub max_attempts: usize,
    /// Delay before the second attempt; doubles for each later one.
    pub backoff_base_secs: f64,
    pub max_tokens: usize,
    /// Environment variable holding a bearer token, if any.
    pub api_key_env: Option<String>,
}

impl Default for RemoteLlmConfig {
    fn default() -> Self {
        RemoteLlmConfig {
            endpoint: "http://127.0.0.1:8080/v1/completions".into(),
            model: "dialect-translator".into(),
            timeout_secs: 30.0,
            max_attempts: 3,
            backoff_base_secs: 1.0,
            max_tokens: 256,
            api_key_env: None,
        }
    }
}

/// JSON-over-HTTP completion client: POST `{model, prompt, max_tokens}`, read `{text}`.
pub struct RemoteLlm {
    pub config: RemoteLlmConfig,
    pub template: PromptTemplate,
    agent: ureq::Agent,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

impl RemoteLlm {
    pub fn new(config: RemoteLlmConfig) -> Result<Self> {
        if config.max_attempts == 0 {
            return Err(Error::Config("remote translator needs at least one attempt".into()));
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout_secs.max(0.001)))
            .build();
        let api_key = config.api_key_env.as_ref().and_then(|v| std::env::var(v).ok());
        Ok(RemoteLlm {
            config,
            template: PromptTemplate::default(),
            agent,
            api_key,
        })
    }

    fn request(&self, prompt: &str) -> std::result::Result<String, String> {
        let body = CompletionRequest {
            model: &self.config.model,
            prompt,
            max_tokens: self.config.max_tokens,
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(k) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {k}"));
        }
        let resp = req.send_json(&body).map_err(|e| e.to_string())?;
        let parsed: CompletionResponse = resp.into_json().map_err(|e| format!("malformed response: {e}"))?;
        let text = parsed.text.trim().to_string();
        if text.is_empty() {
            return Err("malformed response: empty text".into());
        }
        Ok(text)
    }
}

impl TranslatorBackend for RemoteLlm {
    fn name(&self) -> &str {
        "remote-llm"
    }

    fn translate(&self, sentence: &str, target_dialect: &str) -> Translation {
        let prompt = match self.template.build(sentence, target_dialect) {
            Ok(p) => p,
            Err(e) => {
                return Translation {
                    text: None,
                    exchanges: vec![Exchange {
                        attempt: 1,
                        prompt: String::new(),
                        response: None,
                        error: Some(e.to_string()),
                    }],
                }
            }
        };
        let mut exchanges = Vec::new();
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                let delay = self.config.backoff_base_secs * 2f64.powi(attempt as i32 - 2);
                std::thread::sleep(Duration::from_secs_f64(delay.max(0.0)));
            }
            match self.request(&prompt) {
                Ok(text) => {
                    exchanges.push(Exchange {
                        attempt,
                        prompt: prompt.clone(),
                        response: Some(text.clone()),
                        error: None,
                    });
                    return Translation {
                        text: Some(text),
                        exchanges,
                    };
                }
                Err(e) => {
                    log::warn!("translation attempt {attempt} failed: {e}");
                    exchanges.push(Exchange {
                        attempt,
                        prompt: prompt.clone(),
                        response: None,
                        error: Some(e),
                    });
                }
            }
        }
        Translation { text: None, exchanges }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub index: usize,
    pub original: String,
    pub target_dialect: String,
    pub translated: Option<String>,
    pub error: Option<String>,
    pub attempts: usize,
    pub exchanges: Vec<Exchange>,
}

/// Translates every sentence, keeping input order. At most `concurrency`
/// requests are in flight; failures become error records.
pub fn translate_corpus(
    sentences: &[String],
    target_dialect: &str,
    backend: &dyn TranslatorBackend,
    concurrency: usize,
) -> Vec<TranslationRecord> {
    let slots: Vec<Mutex<Option<TranslationRecord>>> = sentences.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = concurrency.clamp(1, sentences.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= sentences.len() {
                    break;
                }
                let t = backend.translate(&sentences[i], target_dialect);
                let error = match &t.text {
                    Some(_) => None,
                    None => Some(
                        t.exchanges
                            .last()
                            .and_then(|e| e.error.clone())
                            .unwrap_or_else(|| "translation failed".into()),
                    ),
                };
                *slots[i].lock().expect("slot lock") = Some(TranslationRecord {
                    index: i,
                    original: sentences[i].clone(),
                    target_dialect: target_dialect.to_string(),
                    translated: t.text,
                    error,
                    attempts: t.exchanges.len(),
                    exchanges: t.exchanges,
                });
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every index processed"))
        .collect()
}

/// One JSON object per exchange, in input order.
pub fn write_audit_log(records: &[TranslationRecord], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in records {
        for x in &r.exchanges {
            let line = serde_json::json!({
                "index": r.index,
                "target_dialect": r.target_dialect,
                "attempt": x.attempt,
                "prompt": x.prompt,
                "response": x.response,
                "error": x.error,
            });
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssembledCorpus {
    pub lines: Vec<TextLine>,
    pub skipped_oov: usize,
    pub skipped_failed: usize,
}

fn text_line(words: &[String], dialect: &DialectId, lexicon: &Lexicon) -> Result<TextLine> {
    let phonemes = g2p_lookup(words, lexicon)?;
    let spans = word_spans(words, lexicon)?;
    Ok(TextLine {
        dialect: dialect.clone(),
        graphemes: words.to_vec(),
        words: spans.iter().map(|&(s, e)| phonemes[s..e].to_vec()).collect(),
    })
}

/// Originals tagged with `source`, translations with their target dialect.
/// Lines with out-of-vocabulary words are skipped and counted.
pub fn assemble_multidialect_corpus(
    originals: &[String],
    source: &DialectId,
    translations: &[TranslationRecord],
    lexicon: &Lexicon,
) -> Result<AssembledCorpus> {
    let mut lines = Vec::new();
    let mut skipped_oov = 0;
    let mut skipped_failed = 0;
    let mut push = |text: &str, d: &DialectId, lines: &mut Vec<TextLine>| -> Result<()> {
        let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        if words.is_empty() {
            skipped_oov += 1;
            return Ok(());
        }
        match text_line(&words, d, lexicon) {
            Ok(l) => lines.push(l),
            Err(Error::OutOfVocabulary(w)) => {
                log::warn!("skipping `{text}`: out-of-vocabulary word `{w}`");
                skipped_oov += 1;
            }
            Err(e) => return Err(e),
        }
        Ok(())
    };
    for o in originals {
        push(o, source, &mut lines)?;
    }
    for t in translations {
        match &t.translated {
            Some(text) => {
                let d = DialectId::new(t.target_dialect.clone())?;
                push(text, &d, &mut lines)?;
            }
            None => skipped_failed += 1,
        }
    }
    Ok(AssembledCorpus {
        lines,
        skipped_oov,
        skipped_failed,
    })
}
