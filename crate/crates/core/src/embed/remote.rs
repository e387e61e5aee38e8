//! Client for a transformer-embedding service speaking
//! `POST {endpoint}/v1/embed` with `{model_id, texts}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cohort::StayId;
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model_id: String,
    pub batch_size: usize,
    pub max_concurrency: usize,
    /// Attempts per batch, including the first.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:8080".into(),
            model_id: String::new(),
            batch_size: 128,
            max_concurrency: 4,
            max_attempts: 5,
            initial_backoff_ms: 200,
            max_backoff_ms: 5_000,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    model_id: &'a str,
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    #[allow(dead_code)]
    model_id: String,
    dimension: usize,
    vectors: Vec<Vec<f32>>,
    #[serde(default)]
    truncated: Vec<bool>,
}

struct Batch {
    dimension: usize,
    vectors: Vec<Vec<f32>>,
    truncated: Vec<bool>,
}

enum Failure {
    Retryable(String),
    Fatal(Error),
}

fn backoff(config: &RemoteConfig, attempt: u32) -> Duration {
    let ms = config
        .initial_backoff_ms
        .saturating_mul(1u64 << attempt.min(20))
        .min(config.max_backoff_ms);
    Duration::from_millis(ms)
}

fn post_once(
    client: &reqwest::blocking::Client,
    url: &str,
    model_id: &str,
    texts: &[String],
) -> Result<Batch, Failure> {
    let resp = client
        .post(url)
        .json(&EmbedRequest { model_id, texts })
        .send()
        .map_err(|e| Failure::Retryable(e.to_string()))?;
    let status = resp.status();
    if status.is_server_error() {
        return Err(Failure::Retryable(format!("server returned {status}")));
    }
    if !status.is_success() {
        let body = resp.text().unwrap_or_default();
        return Err(Failure::Fatal(Error::Protocol(format!(
            "{status}: {}",
            body.trim()
        ))));
    }
    let body: EmbedResponse = resp
        .json()
        .map_err(|e| Failure::Retryable(format!("unreadable response: {e}")))?;
    if body.vectors.len() != texts.len() {
        return Err(Failure::Fatal(Error::Protocol(format!(
            "sent {} texts, received {} vectors",
            texts.len(),
            body.vectors.len()
        ))));
    }
    if body.dimension == 0 || body.vectors.iter().any(|v| v.len() != body.dimension) {
        return Err(Failure::Fatal(Error::Protocol(format!(
            "vector length disagrees with advertised dimension {}",
            body.dimension
        ))));
    }
    let truncated = if body.truncated.is_empty() {
        vec![false; texts.len()]
    } else if body.truncated.len() == texts.len() {
        body.truncated
    } else {
        return Err(Failure::Fatal(Error::Protocol(
            "truncation flags misaligned with texts".into(),
        )));
    };
    Ok(Batch {
        dimension: body.dimension,
        vectors: body.vectors,
        truncated,
    })
}

fn post_with_retry(
    client: &reqwest::blocking::Client,
    config: &RemoteConfig,
    texts: &[String],
) -> Result<Batch> {
    let url = format!("{}/v1/embed", config.endpoint.trim_end_matches('/'));
    let attempts = config.max_attempts.max(1);
    let mut last = String::new();
    for attempt in 0..attempts {
        match post_once(client, &url, &config.model_id, texts) {
            Ok(b) => return Ok(b),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Retryable(msg)) => {
                tracing::warn!(attempt = attempt + 1, error = %msg, "embedding request failed");
                last = msg;
                if attempt + 1 < attempts {
                    std::thread::sleep(backoff(config, attempt));
                }
            }
        }
    }
    Err(Error::Network {
        attempts,
        message: last,
    })
}

/// Embeds `texts` in order through the remote service. Batches run on at
/// most `max_concurrency` threads and are reassembled by index.
pub fn embed_remote(
    stay_ids: Vec<StayId>,
    texts: &[String],
    config: &RemoteConfig,
) -> Result<EmbeddingMatrix<f32>> {
    if stay_ids.len() != texts.len() {
        return Err(Error::Dimension {
            expected: texts.len(),
            actual: stay_ids.len(),
        });
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let backend_id = format!("remote:{}", config.model_id);
    if texts.is_empty() {
        let mut m = EmbeddingMatrix::new(backend_id, stay_ids, Array2::zeros((0, 0)))?;
        m.truncated = Some(Vec::new());
        return Ok(m);
    }
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .build()
        .map_err(|e| Error::Network {
            attempts: 0,
            message: e.to_string(),
        })?;

    let chunks: Vec<&[String]> = texts.chunks(config.batch_size).collect();
    let results: Vec<Mutex<Option<Result<Batch>>>> =
        chunks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = std::sync::atomic::AtomicBool::new(false);
    let workers = config.max_concurrency.clamp(1, chunks.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= chunks.len() {
                    break;
                }
                let r = post_with_retry(&client, config, chunks[i]);
                if r.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let mut dimension = None;
    let mut data = Vec::with_capacity(texts.len());
    let mut truncated = Vec::with_capacity(texts.len());
    for slot in results {
        let batch = match slot.into_inner().unwrap() {
            Some(r) => r?,
            // skipped after another batch failed; that error is reported first
            None => continue,
        };
        match dimension {
            None => dimension = Some(batch.dimension),
            Some(d) if d != batch.dimension => {
                return Err(Error::Protocol(format!(
                    "dimension changed across batches: {d} then {}",
                    batch.dimension
                )))
            }
            _ => {}
        }
        for v in batch.vectors {
            data.extend(v);
        }
        truncated.extend(batch.truncated);
    }
    let dim = dimension.expect("non-empty input yields at least one batch");
    let data = Array2::from_shape_vec((texts.len(), dim), data)
        .map_err(|e| Error::Protocol(e.to_string()))?;
    let mut m = EmbeddingMatrix::new(backend_id, stay_ids, data)?;
    m.truncated = Some(truncated);
    Ok(m)
}
