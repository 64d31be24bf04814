use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{logsumexp, LmBackend, LmError, TokenId, REMOTE_NORMALIZATION_TOLERANCE};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetaResponse {
    pub vocab: Vec<String>,
    pub bos: TokenId,
    pub eos: TokenId,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LogprobsRequest {
    pub prefix: Vec<TokenId>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LogprobsResponse {
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TokenizeRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TokenizeResponse {
    pub ids: Vec<TokenId>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DetokenizeRequest {
    pub ids: Vec<TokenId>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DetokenizeResponse {
    pub text: String,
}

/// Client for a remote backend speaking the JSON wire protocol:
///
/// * `GET  /v1/meta`       -> `{"vocab":[..],"bos":id,"eos":id}`
/// * `POST /v1/logprobs`   `{"prefix":[ids]}` -> `{"logprobs":[..]}`
/// * `POST /v1/tokenize`   `{"text":".."}` -> `{"ids":[..]}`
/// * `POST /v1/detokenize` `{"ids":[..]}` -> `{"text":".."}`
///
/// Metadata is fetched once in [`HttpLm::connect`].
#[derive(Debug, Clone)]
pub struct HttpLm {
    base_url: String,
    agent: ureq::Agent,
    meta: MetaResponse,
    retries: usize,
}

fn transport(err: ureq::Error) -> LmError {
    let retryable = matches!(
        err,
        ureq::Error::Timeout(_)
            | ureq::Error::Io(_)
            | ureq::Error::ConnectionFailed
            | ureq::Error::HostNotFound
            | ureq::Error::BodyStalled
    );
    LmError::Transport { message: err.to_string(), retryable }
}

impl HttpLm {
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self, LmError> {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        let base_url = base_url.trim_end_matches('/').to_owned();
        let mut lm = HttpLm { base_url, agent, meta: MetaResponse { vocab: Vec::new(), bos: 0, eos: 0 }, retries: 0 };
        let meta: MetaResponse = lm.request("meta", None::<&()>)?;
        if meta.vocab.is_empty() {
            return Err(LmError::Malformed { endpoint: "meta", reason: "empty vocabulary".into() });
        }
        if meta.eos as usize >= meta.vocab.len() {
            return Err(LmError::Malformed {
                endpoint: "meta",
                reason: format!("eos id {} outside vocabulary of {}", meta.eos, meta.vocab.len()),
            });
        }
        lm.meta = meta;
        Ok(lm)
    }

    /// Retries retryable failures up to `retries` extra times.
    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn meta(&self) -> &MetaResponse {
        &self.meta
    }

    fn request<B: Serialize, T: DeserializeOwned>(
        &self,
        endpoint: &'static str,
        body: Option<&B>,
    ) -> Result<T, LmError> {
        let mut attempt = 0;
        loop {
            match self.request_once(endpoint, body) {
                Err(e) if e.is_retryable() && attempt < self.retries => {
                    attempt += 1;
                    log::debug!("retrying /v1/{endpoint} after {e} (attempt {attempt})");
                }
                other => return other,
            }
        }
    }

    fn request_once<B: Serialize, T: DeserializeOwned>(
        &self,
        endpoint: &'static str,
        body: Option<&B>,
    ) -> Result<T, LmError> {
        let url = format!("{}/v1/{endpoint}", self.base_url);
        let response = match body {
            None => self.agent.get(&url).call(),
            Some(b) => self.agent.post(&url).send_json(b),
        };
        let mut response = response.map_err(transport)?;
        let code = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(transport)?;
        if code != 200 {
            return Err(LmError::Status { code, body: text });
        }
        serde_json::from_str(&text).map_err(|e| LmError::Malformed { endpoint, reason: e.to_string() })
    }

    fn check_ids(&self, endpoint: &'static str, ids: &[TokenId]) -> Result<(), LmError> {
        let v = self.meta.vocab.len();
        match ids.iter().find(|&&t| t as usize >= v && t != self.meta.bos) {
            Some(bad) => Err(LmError::Malformed { endpoint, reason: format!("token id {bad} out of range") }),
            None => Ok(()),
        }
    }
}

impl LmBackend for HttpLm {
    fn vocab(&self) -> &[String] {
        &self.meta.vocab
    }

    fn bos(&self) -> TokenId {
        self.meta.bos
    }

    fn eos(&self) -> TokenId {
        self.meta.eos
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        let resp: LogprobsResponse = self.request("logprobs", Some(&LogprobsRequest { prefix: prefix.to_vec() }))?;
        let row = resp.logprobs;
        let malformed = |reason: String| LmError::Malformed { endpoint: "logprobs", reason };
        if row.len() != self.meta.vocab.len() {
            return Err(malformed(format!("expected {} logprobs, got {}", self.meta.vocab.len(), row.len())));
        }
        if row.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(malformed("row contains NaN or +inf".into()));
        }
        let norm = logsumexp(&row);
        if !(norm.abs() <= REMOTE_NORMALIZATION_TOLERANCE) {
            return Err(malformed(format!("row is not normalized (logsumexp = {norm})")));
        }
        Ok(row)
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        let resp: TokenizeResponse = self.request("tokenize", Some(&TokenizeRequest { text: text.to_owned() }))?;
        self.check_ids("tokenize", &resp.ids)?;
        Ok(resp.ids)
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String, LmError> {
        let resp: DetokenizeResponse = self.request("detokenize", Some(&DetokenizeRequest { ids: ids.to_vec() }))?;
        Ok(resp.text)
    }
}
