use serde::{Deserialize, Serialize};

use super::{cosine, AlignError, Embedder, Embedding};
use crate::rng::{derive_seed, fnv1a, Prng};
use crate::sandbox::{Bucket, VerifiedSample};

pub const DPO_SCHEMA: &str = "dpo/1";
pub const DEFAULT_N_PER_PROMPT: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt_id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub similarity: f64,
    pub embedder_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningStats {
    pub prompts: usize,
    pub pairs: usize,
    pub discarded_no_accepted: usize,
    pub discarded_no_rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningOutcome {
    pub pairs: Vec<PreferencePair>,
    pub stats: MiningStats,
}

/// Group samples by prompt, in order of first appearance, each group sorted
/// by candidate index.
pub fn group_by_prompt(samples: &[VerifiedSample]) -> Vec<Vec<&VerifiedSample>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: std::collections::HashMap<&str, Vec<&VerifiedSample>> = Default::default();
    for s in samples {
        groups
            .entry(s.prompt_id.as_str())
            .or_insert_with(|| {
                order.push(s.prompt_id.as_str());
                Vec::new()
            })
            .push(s);
    }
    order
        .into_iter()
        .map(|p| {
            let mut g = groups.remove(p).expect("grouped");
            g.sort_by_key(|s| s.candidate_index);
            g
        })
        .collect()
}

/// Per prompt (first `n_per_prompt` candidates): a seeded uniform pick from
/// the accepted set is the chosen response; the rejected response is the
/// rejected candidate closest to it in embedding space, lowest candidate
/// index on ties. Prompts lacking either side are discarded and counted.
pub fn mine_pairs(
    samples: &[VerifiedSample],
    embedder: &dyn Embedder,
    n_per_prompt: usize,
    seed: u64,
) -> Result<MiningOutcome, AlignError> {
    if n_per_prompt == 0 {
        return Err(AlignError::InvalidConfig(
            "n_per_prompt must be at least 1".into(),
        ));
    }
    let mut stats = MiningStats::default();
    let mut pairs = Vec::new();
    for group in group_by_prompt(samples) {
        stats.prompts += 1;
        let group = &group[..group.len().min(n_per_prompt)];
        let accepted: Vec<&VerifiedSample> = group
            .iter()
            .copied()
            .filter(|s| s.bucket == Bucket::A)
            .collect();
        let rejected: Vec<&VerifiedSample> = group
            .iter()
            .copied()
            .filter(|s| s.bucket == Bucket::B)
            .collect();
        if accepted.is_empty() {
            stats.discarded_no_accepted += 1;
            continue;
        }
        if rejected.is_empty() {
            stats.discarded_no_rejected += 1;
            continue;
        }
        let prompt_id = &group[0].prompt_id;
        let mut rng = Prng::new(derive_seed(seed, &[fnv1a(prompt_id.as_bytes())]));
        let chosen = *rng.choose(&accepted);
        let anchor = embedder.embed(&chosen.completion)?;
        let embeds: Vec<Embedding> = rejected
            .iter()
            .map(|r| embedder.embed(&r.completion))
            .collect::<Result<_, _>>()?;
        let (best, similarity) = embeds.iter().map(|e| cosine(&anchor, e)).enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, s)| if s > acc.1 { (i, s) } else { acc },
        );
        pairs.push(PreferencePair {
            prompt_id: prompt_id.clone(),
            prompt: chosen.prompt.clone(),
            chosen: chosen.completion.clone(),
            rejected: rejected[best].completion.clone(),
            similarity,
            embedder_id: embedder.id(),
        });
    }
    stats.pairs = pairs.len();
    Ok(MiningOutcome { pairs, stats })
}
