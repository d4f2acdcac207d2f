//! Report verification by three independent model calls and majority vote.

use std::sync::OnceLock;

use log::warn;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::bounded_map;
use super::client::{send_with_retry, GenerationParams, LlmClient, RetryPolicy};
use super::prompt::{build_verify_prompt, VERIFY_REASK};
use crate::stats::{gwet_ac1, Ac1};
use crate::{Error, Result};

/// `[GBS, focal]` as 0/1.
pub type Vote = [u8; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierVote {
    pub model: String,
    /// `None` when the verifier abstained.
    pub vote: Option<Vote>,
    /// Raw responses, including the re-ask if one was needed.
    pub responses: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub votes: Vec<VerifierVote>,
    /// `None` for an indicator without a 2-vote majority.
    pub majority: [Option<u8>; 2],
    pub unresolved: bool,
}

/// First `[a, b]` with 0/1 entries in the text.
pub fn parse_vote(text: &str) -> Option<Vote> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\[\s*([01])\s*,\s*([01])\s*\]").unwrap());
    let c = re.captures(text)?;
    Some([c[1].parse().ok()?, c[2].parse().ok()?])
}

/// Per indicator, the value held by at least two verifiers.
pub fn majority(votes: &[Option<Vote>]) -> ([Option<u8>; 2], bool) {
    let mut out = [None, None];
    for (k, slot) in out.iter_mut().enumerate() {
        let ones = votes.iter().flatten().filter(|v| v[k] == 1).count();
        let zeros = votes.iter().flatten().filter(|v| v[k] == 0).count();
        *slot = if ones >= 2 && ones > zeros {
            Some(1)
        } else if zeros >= 2 && zeros > ones {
            Some(0)
        } else {
            None
        };
    }
    let unresolved = out.iter().any(Option::is_none);
    (out, unresolved)
}

fn ask(client: &dyn LlmClient, prompt: &str, params: &GenerationParams, policy: &RetryPolicy) -> VerifierVote {
    let model = client.model_id();
    let mut responses = Vec::new();
    for p in [prompt.to_string(), format!("{prompt}{VERIFY_REASK}")] {
        match send_with_retry(client, &p, params, policy) {
            Ok(text) => {
                let vote = parse_vote(&text);
                responses.push(text);
                if vote.is_some() {
                    return VerifierVote { model, vote, responses, error: None };
                }
            }
            Err(e) => {
                warn!("verifier {model} abstains: {e}");
                return VerifierVote { model, vote: None, responses, error: Some(e.to_string()) };
            }
        }
    }
    warn!("verifier {model} abstains: no parseable answer after re-ask");
    VerifierVote { model, vote: None, responses, error: Some("unparseable answer".into()) }
}

/// Sends the classification prompt to each verifier (at most `max_in_flight`
/// at once). A verifier that fails or answers unparseably twice abstains.
pub fn verify_report(
    report_text: &str,
    verifiers: &[&dyn LlmClient],
    params: &GenerationParams,
    policy: &RetryPolicy,
    max_in_flight: usize,
) -> Result<VerificationResult> {
    if verifiers.len() != 3 {
        return Err(Error::Config(format!("verification needs 3 verifiers, got {}", verifiers.len())));
    }
    let ids: std::collections::BTreeSet<String> = verifiers.iter().map(|v| v.model_id()).collect();
    if ids.len() != verifiers.len() {
        return Err(Error::Config("verifiers must be distinct models".into()));
    }
    let prompt = build_verify_prompt(report_text);
    let votes = bounded_map(verifiers, max_in_flight, |v| ask(*v, &prompt, params, policy));
    let (majority, unresolved) = majority(&votes.iter().map(|v| v.vote).collect::<Vec<_>>());
    if unresolved {
        warn!("verification unresolved: {:?}", votes.iter().map(|v| v.vote).collect::<Vec<_>>());
    }
    Ok(VerificationResult { votes, majority, unresolved })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub gbs: Option<Ac1>,
    pub focal: Option<Ac1>,
    pub items: usize,
}

/// AC1 across verifiers per indicator, over reports with at least two votes.
pub fn batch_agreement(results: &[VerificationResult]) -> Agreement {
    let per = |k: usize| -> Option<Ac1> {
        let rows: Vec<Vec<bool>> = results
            .iter()
            .map(|r| r.votes.iter().filter_map(|v| v.vote).map(|v| v[k] == 1).collect::<Vec<_>>())
            .filter(|r| r.len() >= 2)
            .collect();
        gwet_ac1(&rows).ok()
    };
    let items = results.iter().filter(|r| r.votes.iter().filter(|v| v.vote.is_some()).count() >= 2).count();
    Agreement { gbs: per(0), focal: per(1), items }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::client::MockClient;

    #[test]
    fn vote_parsing() {
        assert_eq!(parse_vote("[1, 0]"), Some([1, 0]));
        assert_eq!(parse_vote("Answer: [0,1] because"), Some([0, 1]));
        assert_eq!(parse_vote("yes and no"), None);
        assert_eq!(parse_vote("[2, 0]"), None);
    }

    #[test]
    fn majority_cases() {
        let (m, u) = majority(&[Some([1, 0]), Some([1, 0]), Some([1, 0])]);
        assert_eq!((m, u), ([Some(1), Some(0)], false));
        let (m, u) = majority(&[Some([1, 0]), Some([0, 0]), Some([1, 0])]);
        assert_eq!((m, u), ([Some(1), Some(0)], false));
        let (m, u) = majority(&[None, Some([1, 0]), Some([0, 0])]);
        assert_eq!(m, [None, Some(0)]);
        assert!(u);
    }

    #[test]
    fn majority_is_order_invariant() {
        let v = [Some([1, 1]), Some([0, 1]), Some([1, 0])];
        let base = majority(&v);
        for p in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            assert_eq!(majority(&[v[p[0]], v[p[1]], v[p[2]]]), base);
        }
    }

    #[test]
    fn reask_then_abstain() {
        let a = MockClient::new("a").with_default("[1, 0]");
        let b = MockClient::new("b").with_script(vec![Ok("not sure".into())]).with_default("[1, 1]");
        let c = MockClient::new("c").with_default("no idea");
        let r = verify_report("report", &[&a, &b, &c], &GenerationParams::default(), &RetryPolicy::no_wait(), 4)
            .unwrap();
        assert_eq!(r.votes[1].vote, Some([1, 1]));
        assert_eq!(r.votes[1].responses.len(), 2);
        assert_eq!(r.votes[2].vote, None);
        assert_eq!(c.calls().len(), 2);
        assert_eq!(r.majority, [Some(1), None]);
        assert!(r.unresolved);
    }

    #[test]
    fn needs_three_distinct_verifiers() {
        let a = MockClient::new("a").with_default("[0, 0]");
        let p = GenerationParams::default();
        let pol = RetryPolicy::no_wait();
        assert!(verify_report("r", &[&a, &a, &a], &p, &pol, 4).is_err());
        assert!(verify_report("r", &[&a], &p, &pol, 4).is_err());
    }
}
