use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::AlignError;
use crate::http::JsonClient;
use crate::rng::fnv1a;

pub const TRIGRAM_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub embedder_id: String,
    /// Set when the text had nothing to embed and the vector is all zeros.
    #[serde(default)]
    pub empty: bool,
}

impl Embedding {
    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    fn embed(&self, text: &str) -> Result<Embedding, AlignError>;
}

/// Hashed character-trigram term frequencies, L2-normalized. Texts shorter
/// than three characters count as a single gram.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEmbedder;

impl Embedder for TrigramEmbedder {
    fn id(&self) -> String {
        format!("trigram-{TRIGRAM_DIM}/1")
    }

    fn embed(&self, text: &str) -> Result<Embedding, AlignError> {
        let mut v = vec![0.0f64; TRIGRAM_DIM];
        let chars: Vec<char> = text.chars().collect();
        let mut bump = |gram: &[char]| {
            let s: String = gram.iter().collect();
            v[(fnv1a(s.as_bytes()) % TRIGRAM_DIM as u64) as usize] += 1.0;
        };
        match chars.len() {
            0 => {}
            1 | 2 => bump(&chars),
            _ => chars.windows(3).for_each(&mut bump),
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Embedding {
            vector: v,
            embedder_id: self.id(),
            empty: chars.is_empty(),
        })
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

/// Client for an external embedding service: `POST {endpoint}/embed`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    endpoint: String,
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, timeout: Duration, retries: u32) -> Self {
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            client: JsonClient::new(timeout, retries),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn embed(&self, text: &str) -> Result<Embedding, AlignError> {
        let url = format!("{}/embed", self.endpoint);
        let resp: EmbedResponse = self.client.post(&url, &EmbedRequest { text })?;
        if resp.vector.is_empty() || resp.vector.iter().any(|x| !x.is_finite()) {
            return Err(AlignError::BadEmbedding(
                "vector must be non-empty and finite".into(),
            ));
        }
        let empty = resp.vector.iter().all(|&x| x == 0.0);
        Ok(Embedding {
            vector: resp.vector,
            embedder_id: self.id(),
            empty,
        })
    }
}
