use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

pub type EmbeddingVector = Vec<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("embedding provider `{provider}` failed on batch {batch}: {message}")]
pub struct EmbedError {
    pub provider: String,
    pub batch: usize,
    pub message: String,
}

/// Turns texts into fixed-dimension vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Must return exactly one vector per input text.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, String>;
}

const HASH_BUCKETS: u64 = 1 << 20;

/// Offline provider: character trigram counts, feature-hashed and then
/// projected onto `dimension` axes by a seeded random ±1 matrix, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedding {
    dimension: usize,
    seed: u64,
}

impl HashEmbedding {
    pub fn new(dimension: usize, seed: u64) -> Self {
        HashEmbedding { dimension, seed }
    }

    fn bucket(&self, gram: &[char]) -> u64 {
        // FNV-1a over the seed and the trigram's UTF-8 bytes.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        self.seed.to_le_bytes().iter().for_each(|&b| feed(b));
        let mut buf = [0u8; 4];
        for c in gram {
            c.encode_utf8(&mut buf).bytes().for_each(&mut feed);
        }
        h % HASH_BUCKETS
    }

    fn embed_one(&self, text: &str) -> EmbeddingVector {
        let cleaned = crate::textprep::tokenize(text).join(" ");
        let chars: Vec<char> = format!(" {cleaned} ").chars().collect();
        let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
        for w in chars.windows(3) {
            *counts.entry(self.bucket(w)).or_insert(0.0) += 1.0;
        }
        let mut v = vec![0.0; self.dimension];
        for (bucket, count) in counts {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ bucket.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let mut bits = 0u64;
            for (d, slot) in v.iter_mut().enumerate() {
                if d % 64 == 0 {
                    bits = rng.next_u64();
                }
                let sign = if bits >> (d % 64) & 1 == 1 { 1.0 } else { -1.0 };
                *slot += sign * count;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashEmbedding {
    fn name(&self) -> &str {
        "hash"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, String> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Remote provider speaking `{"texts": [...]}` → `{"vectors": [[...]]}`.
pub struct HttpEmbedding {
    name: String,
    url: String,
    dimension: usize,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpEmbedding {
    pub const API_KEY_VAR: &'static str = "EMBED_API_KEY";

    pub fn new(name: impl Into<String>, url: impl Into<String>, dimension: usize) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(HttpEmbedding {
            name: name.into(),
            url: url.into(),
            dimension,
            api_key: std::env::var(Self::API_KEY_VAR).ok(),
            client,
        })
    }
}

impl EmbeddingProvider for HttpEmbedding {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, String> {
        let mut req = self.client.post(&self.url).json(&EmbedRequest { texts });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let body: EmbedResponse = resp.json().map_err(|e| e.to_string())?;
        Ok(body.vectors)
    }
}

/// Embeds texts in batches of `batch_size`, fetching up to `parallelism`
/// batches at once. The result is in input order. On failure the error of
/// the lowest failing batch index is returned.
pub fn embed_texts(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
    parallelism: usize,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let fail = |batch: usize, message: String| EmbedError {
        provider: provider.name().to_string(),
        batch,
        message,
    };
    let dim = provider.dimension();
    if dim == 0 {
        return Err(fail(0, "provider dimension must be positive".into()));
    }
    let batches: Vec<&[String]> = texts.chunks(batch_size.max(1)).collect();
    let results: Mutex<Vec<Option<Result<Vec<EmbeddingVector>, String>>>> =
        Mutex::new(vec![None; batches.len()]);
    let next = AtomicUsize::new(0);
    let workers = parallelism.clamp(1, batches.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= batches.len() {
                    break;
                }
                let out = provider.embed(batches[i]).and_then(|vs| {
                    if vs.len() != batches[i].len() {
                        return Err(format!("expected {} vectors, got {}", batches[i].len(), vs.len()));
                    }
                    for v in &vs {
                        if v.len() != dim {
                            return Err(format!("expected dimension {dim}, got {}", v.len()));
                        }
                        if v.iter().any(|x| !x.is_finite()) {
                            return Err("non-finite value in vector".into());
                        }
                    }
                    Ok(vs)
                });
                results.lock().expect("results lock")[i] = Some(out);
            });
        }
    });
    let mut out = Vec::with_capacity(texts.len());
    for (i, r) in results.into_inner().expect("results lock").into_iter().enumerate() {
        match r {
            Some(Ok(vs)) => out.extend(vs),
            Some(Err(e)) => return Err(fail(i, e)),
            None => return Err(fail(i, "batch was never processed".into())),
        }
    }
    Ok(out)
}

/// One vector per post, corpus order.
pub fn embed_corpus(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
    parallelism: usize,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let texts: Vec<String> = corpus.iter().map(|p| p.text.clone()).collect();
    embed_texts(&texts, provider, batch_size, parallelism)
}
