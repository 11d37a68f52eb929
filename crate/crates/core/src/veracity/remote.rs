use std::io::ErrorKind;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Classifier, VeracityError, VeracityVerdict};
use crate::corpus::Veracity;
use crate::textprep::CleanDoc;

/// What to answer when the remote classifier cannot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Treat the post as real (score 0) so a dead model never blanks the map.
    #[default]
    PassThrough,
    /// Keep the post but label it unchecked.
    MarkUnchecked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteClassifierSpec {
    pub endpoint: String,
    pub timeout_ms: u64,
    #[serde(default)]
    pub fallback: Fallback,
}

#[derive(Serialize)]
struct Request<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct Response {
    score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RemoteStats {
    pub ok: u64,
    pub timeouts: u64,
    pub bad_responses: u64,
    pub unreachable: u64,
}

/// Client for an external classifier speaking the JSON wire format:
/// POST `{"id", "text"}`, answer `{"score"}` with the probability of fake.
pub struct RemoteClassifier {
    spec: RemoteClassifierSpec,
    agent: ureq::Agent,
    ok: AtomicU64,
    timeouts: AtomicU64,
    bad: AtomicU64,
    unreachable: AtomicU64,
}

impl RemoteClassifier {
    pub fn new(spec: RemoteClassifierSpec) -> Result<Self, VeracityError> {
        if spec.timeout_ms == 0 {
            return Err(VeracityError::Dataset("remote classifier timeout must be > 0".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(spec.timeout_ms)))
            .build()
            .into();
        Ok(Self {
            spec,
            agent,
            ok: AtomicU64::new(0),
            timeouts: AtomicU64::new(0),
            bad: AtomicU64::new(0),
            unreachable: AtomicU64::new(0),
        })
    }

    pub fn spec(&self) -> &RemoteClassifierSpec {
        &self.spec
    }

    pub fn stats(&self) -> RemoteStats {
        RemoteStats {
            ok: self.ok.load(Ordering::Relaxed),
            timeouts: self.timeouts.load(Ordering::Relaxed),
            bad_responses: self.bad.load(Ordering::Relaxed),
            unreachable: self.unreachable.load(Ordering::Relaxed),
        }
    }

    /// One round trip, without the fallback.
    pub fn call(&self, doc_id: &str, text: &str) -> Result<VeracityVerdict, VeracityError> {
        let resp = self
            .agent
            .post(&self.spec.endpoint)
            .send_json(Request { id: doc_id, text });
        let mut resp = resp.map_err(map_err)?;
        let body: Response = resp
            .body_mut()
            .read_json()
            .map_err(|e| match map_err(e) {
                VeracityError::Unreachable(m) => VeracityError::BadResponse(m),
                other => other,
            })?;
        if !(0.0..=1.0).contains(&body.score) {
            return Err(VeracityError::BadResponse(format!("score {} outside [0, 1]", body.score)));
        }
        Ok(VeracityVerdict::from_score(doc_id, body.score))
    }

    /// Calls the endpoint; failures are counted, logged and answered by
    /// the configured fallback.
    pub fn classify(&self, doc_id: &str, text: &str) -> VeracityVerdict {
        match self.call(doc_id, text) {
            Ok(v) => {
                self.ok.fetch_add(1, Ordering::Relaxed);
                v
            }
            Err(e) => {
                let counter = match e {
                    VeracityError::Timeout => &self.timeouts,
                    VeracityError::BadResponse(_) => &self.bad,
                    _ => &self.unreachable,
                };
                counter.fetch_add(1, Ordering::Relaxed);
                tracing::warn!(endpoint = %self.spec.endpoint, doc_id, error = %e, "remote classifier failed; using fallback");
                let label = match self.spec.fallback {
                    Fallback::PassThrough => Veracity::Real,
                    Fallback::MarkUnchecked => Veracity::Unchecked,
                };
                VeracityVerdict {
                    doc_id: doc_id.to_string(),
                    label,
                    score: 0.0,
                }
            }
        }
    }
}

fn map_err(e: ureq::Error) -> VeracityError {
    match e {
        ureq::Error::Timeout(_) => VeracityError::Timeout,
        ureq::Error::Io(io) if matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) => {
            VeracityError::Timeout
        }
        ureq::Error::StatusCode(code) => VeracityError::BadResponse(format!("HTTP {code}")),
        ureq::Error::Json(j) => VeracityError::BadResponse(j.to_string()),
        ureq::Error::Protocol(p) => VeracityError::BadResponse(p.to_string()),
        other => VeracityError::Unreachable(other.to_string()),
    }
}

impl Classifier for RemoteClassifier {
    fn judge(&self, doc_id: &str, _: &CleanDoc, raw_text: &str) -> Result<VeracityVerdict, VeracityError> {
        Ok(self.classify(doc_id, raw_text))
    }
}

/// One-shot remote classification with fallback.
pub fn classify_remote(
    doc_id: &str,
    text: &str,
    spec: &RemoteClassifierSpec,
) -> Result<VeracityVerdict, VeracityError> {
    Ok(RemoteClassifier::new(spec.clone())?.classify(doc_id, text))
}
