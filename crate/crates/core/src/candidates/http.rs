use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    candidate_id, Candidate, CandidateError, CandidateRecord, GenerationRequest, GenerationTarget,
    Generator,
};
use crate::http::{HttpError, JsonClient};

/// `gen/1` request body for `POST /v1/generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequestBody {
    pub prompt: String,
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed: u64,
}

/// `gen/1` response body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenResponseBody {
    pub completions: Vec<String>,
}

/// Client for an external text-generation service.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    endpoint: String,
    client: JsonClient,
}

impl HttpGenerator {
    pub fn new(endpoint: &str, timeout: Duration, retries: u32) -> Self {
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            client: JsonClient::new(timeout, retries),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Generator for HttpGenerator {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn generate(
        &self,
        target: &GenerationTarget,
        req: &GenerationRequest,
    ) -> Result<Vec<Candidate>, CandidateError> {
        req.validate()?;
        let body = GenRequestBody {
            prompt: target.prompt.clone(),
            n: req.n,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            seed: req.seed,
        };
        let url = format!("{}/v1/generate", self.endpoint);
        let resp: GenResponseBody = self.client.post(&url, &body)?;
        if resp.completions.len() < req.n {
            return Err(CandidateError::Truncated {
                expected: req.n,
                got: resp.completions.len(),
            });
        }
        if resp.completions.len() > req.n {
            return Err(HttpError::Schema(format!(
                "{} completions returned for n={}",
                resp.completions.len(),
                req.n
            ))
            .into());
        }
        let generator_id = self.id();
        Ok(resp
            .completions
            .into_iter()
            .enumerate()
            .map(|(i, completion)| {
                let record = CandidateRecord {
                    task_id: target.task_id.clone(),
                    candidate_id: candidate_id(&target.task_id, i),
                    index: i,
                    completion,
                    generator_id: generator_id.clone(),
                    seed: req.seed,
                    mutations: Vec::new(),
                };
                Candidate::from_record(record, target.dialect)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::format_completion;
    use crate::loopback::{LoopbackServer, Reply};
    use crate::qlang::Dialect;
    use crate::synth::{builtin_families, instantiate};

    fn req(n: usize) -> GenerationRequest {
        GenerationRequest {
            prompt: String::new(),
            n,
            temperature: 1.0,
            max_tokens: 256,
            seed: 1,
        }
    }

    fn target() -> GenerationTarget {
        let task = instantiate(&builtin_families()[0], 3).unwrap();
        GenerationTarget::from(&task)
    }

    #[test]
    fn echo_server_round_trip() {
        let t = target();
        let source = t.reference.as_ref().unwrap().source.clone();
        let server = LoopbackServer::spawn(move |path, body| {
            assert_eq!(path, "/v1/generate");
            let req: GenRequestBody = serde_json::from_str(body).unwrap();
            let completions = vec![format_completion("ok", &source, Dialect::Qlang); req.n];
            Reply::json(200, &GenResponseBody { completions })
        });
        let g = HttpGenerator::new(&server.url(), Duration::from_secs(5), 0);
        let cands = g.generate(&t, &req(3)).unwrap();
        assert_eq!(cands.len(), 3);
        assert!(cands.iter().all(|c| !c.unparseable()));
        assert_eq!(cands[2].record.candidate_id, format!("{}/c002", t.task_id));
    }

    #[test]
    fn server_error_surfaces() {
        let server = LoopbackServer::spawn(|_, _| Reply::text(500, "boom"));
        let g = HttpGenerator::new(&server.url(), Duration::from_secs(5), 1);
        let e = g.generate(&target(), &req(2)).unwrap_err();
        assert_eq!(e, CandidateError::Http(HttpError::Status(500)));
        assert_eq!(server.hits(), 2);
    }

    #[test]
    fn missing_completions_is_schema_violation() {
        let server = LoopbackServer::spawn(|_, _| Reply::text(200, r#"{"text": "hi"}"#));
        let g = HttpGenerator::new(&server.url(), Duration::from_secs(5), 0);
        assert!(matches!(
            g.generate(&target(), &req(2)),
            Err(CandidateError::Http(HttpError::Schema(_)))
        ));
    }

    #[test]
    fn short_reply_is_truncation() {
        let server = LoopbackServer::spawn(|_, _| Reply::text(200, r#"{"completions": ["a"]}"#));
        let g = HttpGenerator::new(&server.url(), Duration::from_secs(5), 0);
        assert_eq!(
            g.generate(&target(), &req(2)).unwrap_err(),
            CandidateError::Truncated {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let g = HttpGenerator::new("http://127.0.0.1:9", Duration::from_millis(500), 0);
        assert!(matches!(
            g.generate(&target(), &req(1)),
            Err(CandidateError::Http(HttpError::Transport(_)))
        ));
    }
}
