//! Generator wire contract.
//!
//! One JSON-over-HTTP endpoint serves every model-backed task in the pipeline
//! (structured verbalization, instruction evolution and answering, document
//! name extraction, sentence perplexity). Requests carry a `"task"` tag:
//!
//! ```text
//! {"task":"generate","fields":{...},"temperature":0.73,"seed":12}   -> {"text": "..."}
//! {"task":"evolve","instruction":"...","operator":"deepen","prompt":"...","seed":3} -> {"text": "..."}
//! {"task":"answer","instruction":"...","seed":3}                     -> {"text": "..."}
//! {"task":"extract_name","text":"..."}                               -> {"names":[{"raw":..,"title":..,"confidence":..}]}
//! {"task":"perplexity","text":"..."}                                 -> {"ppl": 12.5}
//! ```
//!
//! Non-2xx statuses, transport errors and bodies that are not the expected
//! JSON shape are retried with exponential backoff, then surfaced as
//! [`GeneratorError::Exhausted`].

use std::sync::Arc;
use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{DocumentName, NameExtractor, PatternExtractor};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum WireRequest {
    Generate {
        fields: IndexMap<String, String>,
        temperature: f64,
        seed: u64,
    },
    Evolve {
        instruction: String,
        operator: String,
        prompt: String,
        seed: u64,
    },
    Answer {
        instruction: String,
        seed: u64,
    },
    ExtractName {
        text: String,
    },
    Perplexity {
        text: String,
    },
}

impl WireRequest {
    pub fn task(&self) -> &'static str {
        match self {
            WireRequest::Generate { .. } => "generate",
            WireRequest::Evolve { .. } => "evolve",
            WireRequest::Answer { .. } => "answer",
            WireRequest::ExtractName { .. } => "extract_name",
            WireRequest::Perplexity { .. } => "perplexity",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<DocumentName>>,
    /// Set by generators that cannot produce real content (the offline
    /// fallback's answers).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub placeholder: bool,
}

impl WireResponse {
    fn text(text: String) -> Self {
        WireResponse {
            text: Some(text),
            ..Default::default()
        }
    }

    /// Whether the response carries the field `request` expects.
    pub fn satisfies(&self, request: &WireRequest) -> bool {
        match request {
            WireRequest::Generate { .. } | WireRequest::Evolve { .. } | WireRequest::Answer { .. } => {
                self.text.as_deref().is_some_and(|t| !t.trim().is_empty())
            }
            WireRequest::ExtractName { .. } => self.names.is_some(),
            WireRequest::Perplexity { .. } => self.ppl.is_some_and(|p| p.is_finite() && p > 0.0),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeneratorError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("task {0:?} is not supported by this generator")]
    Unsupported(&'static str),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<GeneratorError> },
}

/// Anything that can answer wire requests.
pub trait GeneratorClient: Send + Sync {
    fn call(&self, request: &WireRequest) -> Result<WireResponse, GeneratorError>;

    /// True for clients that never reach a real model.
    fn is_offline(&self) -> bool {
        false
    }

    fn generate(
        &self,
        fields: &IndexMap<String, String>,
        temperature: f64,
        seed: u64,
    ) -> Result<String, GeneratorError> {
        let request = WireRequest::Generate {
            fields: fields.clone(),
            temperature,
            seed,
        };
        expect_text(self.call(&request)?, &request)
    }

    fn evolve(
        &self,
        instruction: &str,
        operator: &str,
        prompt: &str,
        seed: u64,
    ) -> Result<String, GeneratorError> {
        let request = WireRequest::Evolve {
            instruction: instruction.to_string(),
            operator: operator.to_string(),
            prompt: prompt.to_string(),
            seed,
        };
        expect_text(self.call(&request)?, &request)
    }

    /// Returns the answer and whether it is a placeholder.
    fn answer(&self, instruction: &str, seed: u64) -> Result<(String, bool), GeneratorError> {
        let request = WireRequest::Answer {
            instruction: instruction.to_string(),
            seed,
        };
        let response = self.call(&request)?;
        let placeholder = response.placeholder;
        Ok((expect_text(response, &request)?, placeholder))
    }

    fn extract_names(&self, text: &str) -> Result<Vec<DocumentName>, GeneratorError> {
        let request = WireRequest::ExtractName {
            text: text.to_string(),
        };
        self.call(&request)?
            .names
            .ok_or_else(|| GeneratorError::Malformed("missing \"names\"".into()))
    }

    fn perplexity(&self, text: &str) -> Result<f64, GeneratorError> {
        let request = WireRequest::Perplexity {
            text: text.to_string(),
        };
        let response = self.call(&request)?;
        match response.ppl {
            Some(p) if p.is_finite() && p > 0.0 => Ok(p),
            _ => Err(GeneratorError::Malformed("missing or invalid \"ppl\"".into())),
        }
    }
}

impl<T: GeneratorClient + ?Sized> GeneratorClient for Arc<T> {
    fn call(&self, request: &WireRequest) -> Result<WireResponse, GeneratorError> {
        (**self).call(request)
    }

    fn is_offline(&self) -> bool {
        (**self).is_offline()
    }
}

fn expect_text(response: WireResponse, request: &WireRequest) -> Result<String, GeneratorError> {
    if !response.satisfies(request) {
        return Err(GeneratorError::Malformed("missing \"text\"".into()));
    }
    Ok(response.text.unwrap_or_default())
}

/// HTTP client for an external generator endpoint.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    endpoint: String,
    retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build();
        HttpGenerator {
            endpoint: endpoint.into(),
            retries: 3,
            backoff: Duration::from_millis(200),
            agent: config.into(),
        }
    }

    /// Retries after the first attempt.
    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    /// Base delay; attempt `i` waits `backoff * 2^i` before retrying.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        self.agent = config.into();
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, request: &WireRequest) -> Result<WireResponse, GeneratorError> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| GeneratorError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(GeneratorError::Status(status));
        }
        let body: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| GeneratorError::Malformed(e.to_string()))?;
        if !body.satisfies(request) {
            return Err(GeneratorError::Malformed(format!(
                "response lacks the field required by task {:?}",
                request.task()
            )));
        }
        Ok(body)
    }
}

impl GeneratorClient for HttpGenerator {
    fn call(&self, request: &WireRequest) -> Result<WireResponse, GeneratorError> {
        let attempts = self.retries + 1;
        let mut last = None;
        for i in 0..attempts {
            match self.attempt(request) {
                Ok(response) => return Ok(response),
                Err(err) => {
                    log::debug!("generator attempt {} failed: {err}", i + 1);
                    last = Some(err);
                }
            }
            if i + 1 < attempts && !self.backoff.is_zero() {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(i));
            }
        }
        Err(GeneratorError::Exhausted {
            attempts,
            last: Box::new(last.expect("at least one attempt")),
        })
    }
}

/// Deterministic offline generator.
///
/// `generate` realizes one of several sentence templates containing every
/// field value verbatim; the template is picked by hashing the seed with a
/// temperature bucket. `evolve` applies a fixed textual transform per
/// operator. `answer` returns a placeholder flagged as such.
#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackGenerator;

const GENERATE_TEMPLATES: [(&str, &str, &str); 4] = [
    ("", "{name}为{value}", "。"),
    ("根据检测记录，", "{name}为{value}", "。"),
    ("该条检测数据显示：", "{name}是{value}", "。"),
    ("在本次检测中，", "{name}：{value}", "。"),
];

/// Evolution prefixes. No prefix starts with another, so different operator
/// sequences always produce different strings.
pub(crate) fn fallback_evolution(operator: &str, instruction: &str) -> Option<String> {
    let prefix = match operator {
        "add_constraints" => "在符合现行食品安全国家标准的前提下，",
        "deepen" => "请深入说明原理：",
        "concretize" => "以具体食品类别为例，",
        "increase_reasoning" => "分步骤推理并给出依据：",
        "in_breadth" => "围绕相关检测主题，",
        _ => return None,
    };
    Some(format!("{prefix}{instruction}"))
}

pub(crate) fn temperature_bucket(temperature: f64) -> u64 {
    (((temperature - 0.5) / 0.1).floor().clamp(0.0, 5.0)) as u64
}

impl FallbackGenerator {
    pub fn realize(fields: &IndexMap<String, String>, temperature: f64, seed: u64) -> String {
        let bucket = temperature_bucket(temperature).to_string();
        let pick = derive_seed(seed, &["fallback-template", &bucket]) as usize % GENERATE_TEMPLATES.len();
        let (lead, clause, tail) = GENERATE_TEMPLATES[pick];
        let clauses: Vec<String> = fields
            .iter()
            .map(|(name, value)| crate::template::fill(clause, &[("name", name), ("value", value)]))
            .collect();
        format!("{lead}{}{tail}", clauses.join("，"))
    }
}

impl GeneratorClient for FallbackGenerator {
    fn call(&self, request: &WireRequest) -> Result<WireResponse, GeneratorError> {
        match request {
            WireRequest::Generate {
                fields,
                temperature,
                seed,
            } => Ok(WireResponse::text(Self::realize(fields, *temperature, *seed))),
            WireRequest::Evolve {
                instruction, operator, ..
            } => fallback_evolution(operator, instruction)
                .map(WireResponse::text)
                .ok_or_else(|| GeneratorError::Malformed(format!("unknown operator {operator:?}"))),
            WireRequest::Answer { instruction, .. } => Ok(WireResponse {
                text: Some(format!("【待专家补充】{instruction}")),
                placeholder: true,
                ..Default::default()
            }),
            WireRequest::ExtractName { text } => Ok(WireResponse {
                names: Some(PatternExtractor::default().extract(text)?),
                ..Default::default()
            }),
            WireRequest::Perplexity { .. } => Err(GeneratorError::Unsupported("perplexity")),
        }
    }

    fn is_offline(&self) -> bool {
        true
    }
}
