//! Annotation recommenders.
//!
//! A recommender maps one user query to a suggested [`LabelValue`] for one
//! label. Built-in recommenders are configured in the label schema
//! (`constant`, `keyword`, `external`); library users can register any
//! [`Recommender`] implementation with a [`RecommenderRegistry`].
//!
//! External recommenders speak a small HTTP protocol:
//! `POST <url>` with `{"label": str, "query": str}`, answered by
//! `{"value": <label value>}`.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{
    validate_value, Cardinality, LabelDef, LabelKind, LabelSchema, LabelValue, SchemaError,
};

pub const DEFAULT_TIMEOUT_MS: u64 = 2000;

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

/// How a label's suggestions are produced, as written in the schema config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RecommenderBinding {
    /// Always suggests the same value.
    Constant { value: LabelValue },
    /// Case-insensitive substring rules, scanned in order.
    Keyword { rules: Vec<KeywordRule> },
    /// A model behind the HTTP protocol.
    External {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordRule {
    pub pattern: String,
    #[serde(flatten)]
    pub output: RuleOutput,
}

impl KeywordRule {
    pub fn class(pattern: impl Into<String>, class: impl Into<String>) -> Self {
        KeywordRule {
            pattern: pattern.into(),
            output: RuleOutput::Class {
                class: class.into(),
            },
        }
    }

    pub fn slot(
        pattern: impl Into<String>,
        slot: impl Into<String>,
        value: impl Into<String>,
    ) -> Self {
        KeywordRule {
            pattern: pattern.into(),
            output: RuleOutput::Slot {
                slot: slot.into(),
                value: value.into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleOutput {
    Class { class: String },
    Slot { slot: String, value: String },
}

const BINDING_TYPES: [&str; 3] = ["constant", "keyword", "external"];

impl RecommenderBinding {
    pub(crate) fn from_config(label: &str, raw: Value) -> Result<Self, SchemaError> {
        let kind = raw
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| SchemaError::InvalidRecommender {
                label: label.to_string(),
                reason: "missing `type`".into(),
            })?;
        if !BINDING_TYPES.contains(&kind) {
            return Err(SchemaError::UnknownRecommenderType {
                label: label.to_string(),
                kind: kind.to_string(),
            });
        }
        serde_json::from_value(raw).map_err(|e| SchemaError::InvalidRecommender {
            label: label.to_string(),
            reason: e.to_string(),
        })
    }

    /// Checks that every value this binding can produce is legal for `def`.
    pub(crate) fn check_against(&self, def: &LabelDef) -> Result<(), String> {
        match self {
            RecommenderBinding::Constant { value } => {
                validate_value(def, value).map_err(|e| e.to_string())
            }
            RecommenderBinding::Keyword { rules } => {
                for rule in rules {
                    if rule.pattern.is_empty() {
                        return Err("keyword rule with empty pattern".into());
                    }
                    match (&rule.output, def.kind) {
                        (RuleOutput::Class { class }, LabelKind::Classification) => {
                            if def.position(class).is_none() {
                                return Err(format!("rule produces unknown class `{class}`"));
                            }
                        }
                        (RuleOutput::Slot { slot, value }, LabelKind::SlotValue) => {
                            if def.position(slot).is_none() {
                                return Err(format!("rule produces unknown slot `{slot}`"));
                            }
                            if value.is_empty() {
                                return Err(format!("rule for slot `{slot}` has an empty value"));
                            }
                        }
                        (_, kind) => {
                            return Err(format!(
                                "rule for pattern `{}` does not produce a {kind} value",
                                rule.pattern
                            ))
                        }
                    }
                }
                Ok(())
            }
            RecommenderBinding::External { url, timeout_ms } => {
                check_http_url(url)?;
                if *timeout_ms == 0 {
                    return Err("timeout_ms must be positive".into());
                }
                Ok(())
            }
        }
    }

    /// Instantiates the recommender described by this binding.
    pub fn build(&self, def: &LabelDef) -> Arc<dyn Recommender> {
        match self {
            RecommenderBinding::Constant { value } => Arc::new(ConstantRecommender {
                value: value.clone(),
            }),
            RecommenderBinding::Keyword { rules } => Arc::new(KeywordRecommender::new(
                def.kind,
                def.effective_cardinality(),
                rules.clone(),
            )),
            RecommenderBinding::External { url, timeout_ms } => Arc::new(ExternalRecommender::new(
                &def.name,
                url,
                Duration::from_millis(*timeout_ms),
            )),
        }
    }
}

fn check_http_url(url: &str) -> Result<(), String> {
    // Only plain HTTP is compiled in; models are expected on a trusted network.
    if !url.starts_with("http://") || url.len() <= "http://".len() {
        return Err(format!("`{url}` is not an http:// URL"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecommendError {
    #[error("empty query")]
    EmptyQuery,
    #[error("external recommender at {url} timed out after {timeout_ms} ms")]
    ExternalTimeout { url: String, timeout_ms: u64 },
    #[error("external recommender at {url} is unreachable: {reason}")]
    ExternalUnavailable { url: String, reason: String },
    #[error("external recommender returned an unusable response: {body}")]
    ExternalProtocolError { body: String },
    #[error("prediction {value} rejected: {reason}")]
    InvalidPrediction { value: String, reason: String },
}

/// Anything that turns a user query into a suggested label value.
///
/// Implementations do not need to validate their output; the registry
/// checks every prediction against the label definition before it is used.
pub trait Recommender: Send + Sync {
    fn transform(&self, query: &str) -> Result<LabelValue, RecommendError>;

    /// Remote recommenders are queried in parallel by [`RecommenderRegistry::suggest_all`].
    fn is_remote(&self) -> bool {
        false
    }
}

pub struct ConstantRecommender {
    value: LabelValue,
}

impl ConstantRecommender {
    pub fn new(value: LabelValue) -> Self {
        ConstantRecommender { value }
    }
}

impl Recommender for ConstantRecommender {
    fn transform(&self, _query: &str) -> Result<LabelValue, RecommendError> {
        Ok(self.value.clone())
    }
}

pub struct KeywordRecommender {
    kind: LabelKind,
    cardinality: Cardinality,
    rules: Vec<(String, RuleOutput)>,
}

impl KeywordRecommender {
    pub fn new(kind: LabelKind, cardinality: Cardinality, rules: Vec<KeywordRule>) -> Self {
        KeywordRecommender {
            kind,
            cardinality,
            rules: rules
                .into_iter()
                .map(|r| (r.pattern.to_lowercase(), r.output))
                .collect(),
        }
    }
}

impl Recommender for KeywordRecommender {
    fn transform(&self, query: &str) -> Result<LabelValue, RecommendError> {
        let query = query.to_lowercase();
        let matches = self
            .rules
            .iter()
            .filter(|(pattern, _)| query.contains(pattern.as_str()))
            .map(|(_, out)| out);
        match self.kind {
            LabelKind::Classification => {
                let classes = matches.filter_map(|out| match out {
                    RuleOutput::Class { class } => Some(class.clone()),
                    RuleOutput::Slot { .. } => None,
                });
                Ok(match self.cardinality {
                    Cardinality::Multi => LabelValue::classes(classes),
                    Cardinality::Single => LabelValue::classes(classes.take(1)),
                })
            }
            LabelKind::SlotValue => {
                let mut pairs = BTreeMap::new();
                for out in matches {
                    if let RuleOutput::Slot { slot, value } = out {
                        // Earlier rules win for a slot.
                        pairs.entry(slot.clone()).or_insert_with(|| value.clone());
                    }
                }
                Ok(LabelValue::SlotValue { pairs })
            }
        }
    }
}

pub struct ExternalRecommender {
    label: String,
    url: String,
    timeout: Duration,
}

impl ExternalRecommender {
    pub fn new(label: &str, url: &str, timeout: Duration) -> Self {
        ExternalRecommender {
            label: label.to_string(),
            url: url.to_string(),
            timeout,
        }
    }
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    label: &'a str,
    query: &'a str,
}

#[derive(Deserialize)]
struct PredictResponse {
    value: LabelValue,
}

impl Recommender for ExternalRecommender {
    fn transform(&self, query: &str) -> Result<LabelValue, RecommendError> {
        let body = post_json(
            &self.url,
            self.timeout,
            &PredictRequest {
                label: &self.label,
                query,
            },
        )?;
        let parsed: PredictResponse = serde_json::from_str(&body)
            .map_err(|_| RecommendError::ExternalProtocolError { body })?;
        Ok(parsed.value)
    }

    fn is_remote(&self) -> bool {
        true
    }
}

/// Optional model that writes the system side of a turn.
/// Request `{"query": str}`, response `{"sys": str}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseGenerator {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    query: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    sys: String,
}

impl ResponseGenerator {
    pub fn generate(&self, query: &str) -> Result<String, RecommendError> {
        check_http_url(&self.url)
            .map_err(|reason| RecommendError::ExternalUnavailable {
                url: self.url.clone(),
                reason,
            })?;
        let body = post_json(
            &self.url,
            Duration::from_millis(self.timeout_ms),
            &GenerateRequest { query },
        )?;
        let parsed: GenerateResponse = serde_json::from_str(&body)
            .map_err(|_| RecommendError::ExternalProtocolError { body })?;
        Ok(parsed.sys)
    }
}

fn post_json<T: Serialize>(url: &str, timeout: Duration, body: &T) -> Result<String, RecommendError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let timed_out = || RecommendError::ExternalTimeout {
        url: url.to_string(),
        timeout_ms: timeout.as_millis() as u64,
    };
    let classify = |e: ureq::Error| match e {
        ureq::Error::Timeout(_) => timed_out(),
        ureq::Error::Io(io) if is_timeout(&io) => timed_out(),
        other => RecommendError::ExternalUnavailable {
            url: url.to_string(),
            reason: other.to_string(),
        },
    };
    let mut response = agent.post(url).send_json(body).map_err(classify)?;
    let status = response.status();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(classify)?;
    if !status.is_success() {
        return Err(RecommendError::ExternalProtocolError {
            body: format!("HTTP {}: {text}", status.as_u16()),
        });
    }
    Ok(text)
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock)
}

/// Applies a binding to one query and checks the result against `def`.
pub fn transform(
    binding: &RecommenderBinding,
    def: &LabelDef,
    query: &str,
) -> Result<LabelValue, RecommendError> {
    run_checked(binding.build(def).as_ref(), def, query)
}

fn run_checked(
    rec: &dyn Recommender,
    def: &LabelDef,
    query: &str,
) -> Result<LabelValue, RecommendError> {
    if query.trim().is_empty() {
        return Err(RecommendError::EmptyQuery);
    }
    let value = rec.transform(query)?;
    validate_value(def, &value).map_err(|e| RecommendError::InvalidPrediction {
        value: value.to_json(),
        reason: e.to_string(),
    })?;
    Ok(value)
}

/// A recommender that failed for one label; the label is left blank.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecommenderFailure {
    pub label: String,
    #[serde(serialize_with = "serialize_display")]
    pub error: RecommendError,
}

fn serialize_display<S: serde::Serializer, T: fmt::Display>(
    v: &T,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Suggestions {
    pub values: BTreeMap<String, LabelValue>,
    pub failures: Vec<RecommenderFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("label `{0}` is not in the schema")]
pub struct UnknownLabelError(pub String);

struct Bound {
    def: LabelDef,
    recommender: Arc<dyn Recommender>,
}

/// Recommenders keyed by the label they fill. Immutable once built.
#[derive(Clone, Default)]
pub struct RecommenderRegistry {
    bindings: BTreeMap<String, Arc<Bound>>,
    schema_order: Vec<String>,
}

impl fmt::Debug for RecommenderRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RecommenderRegistry")
            .field("labels", &self.bindings.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl RecommenderRegistry {
    /// Instantiates every binding declared in the schema.
    pub fn from_schema(schema: &LabelSchema) -> Self {
        let mut registry = RecommenderRegistry {
            bindings: BTreeMap::new(),
            schema_order: schema.labels.iter().map(|l| l.name.clone()).collect(),
        };
        for def in &schema.labels {
            if let Some(binding) = &def.recommender {
                registry.bindings.insert(
                    def.name.clone(),
                    Arc::new(Bound {
                        def: def.clone(),
                        recommender: binding.build(def),
                    }),
                );
            }
        }
        registry
    }

    /// Binds (or rebinds) a custom recommender to a schema label.
    pub fn with_recommender(
        mut self,
        schema: &LabelSchema,
        label: &str,
        recommender: Arc<dyn Recommender>,
    ) -> Result<Self, UnknownLabelError> {
        let def = schema
            .get(label)
            .ok_or_else(|| UnknownLabelError(label.to_string()))?;
        if !self.schema_order.iter().any(|l| l == label) {
            self.schema_order = schema.labels.iter().map(|l| l.name.clone()).collect();
        }
        self.bindings.insert(
            label.to_string(),
            Arc::new(Bound {
                def: def.clone(),
                recommender,
            }),
        );
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn bound_labels(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }

    /// Runs every bound recommender on `query`. Unbound labels are absent from
    /// the result; a failing recommender only loses its own suggestion.
    /// Remote recommenders run concurrently.
    pub fn suggest_all(&self, query: &str) -> Suggestions {
        let ordered: Vec<&Arc<Bound>> = self
            .schema_order
            .iter()
            .filter_map(|l| self.bindings.get(l))
            .collect();
        let (remote, local): (Vec<&Arc<Bound>>, Vec<&Arc<Bound>>) =
            ordered.into_iter().partition(|b| b.recommender.is_remote());
        let mut results: Vec<(String, Result<LabelValue, RecommendError>)> = local
            .iter()
            .map(|b| {
                (
                    b.def.name.clone(),
                    run_checked(b.recommender.as_ref(), &b.def, query),
                )
            })
            .collect();
        if remote.len() == 1 {
            let b = remote[0];
            results.push((
                b.def.name.clone(),
                run_checked(b.recommender.as_ref(), &b.def, query),
            ));
        } else if !remote.is_empty() {
            std::thread::scope(|scope| {
                let handles: Vec<_> = remote
                    .iter()
                    .map(|b| {
                        let name = b.def.name.clone();
                        (
                            name,
                            scope.spawn(move || run_checked(b.recommender.as_ref(), &b.def, query)),
                        )
                    })
                    .collect();
                for (name, h) in handles {
                    let outcome = h.join().unwrap_or_else(|_| {
                        Err(RecommendError::ExternalProtocolError {
                            body: "recommender panicked".into(),
                        })
                    });
                    results.push((name, outcome));
                }
            });
        }
        let mut out = Suggestions::default();
        for name in &self.schema_order {
            let Some(pos) = results.iter().position(|(n, _)| n == name) else {
                continue;
            };
            let (name, outcome) = results.swap_remove(pos);
            match outcome {
                Ok(v) => {
                    out.values.insert(name, v);
                }
                Err(error) => {
                    tracing::debug!(label = %name, %error, "recommender failed");
                    out.failures.push(RecommenderFailure { label: name, error })
                }
            }
        }
        out
    }
}
