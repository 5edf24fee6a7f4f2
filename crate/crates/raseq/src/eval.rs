//! Corpus-level tokenized BLEU with the semantics of the standard
//! multi-bleu script: clipped n-gram counts pooled over the corpus for
//! n = 1..4, geometric mean, brevity penalty, no smoothing (any zero
//! precision zeroes the score), case-sensitive, single reference.

use crate::{Error, Result};
use std::collections::HashMap;

const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// Percentage in `[0, 100]`.
    pub bleu: f64,
    /// Clipped n-gram precisions, `p[0]` = unigram.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuReport {
    /// The one-line layout multi-bleu prints.
    pub fn to_line(&self) -> String {
        format!(
            "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            self.bleu,
            100.0 * self.precisions[0],
            100.0 * self.precisions[1],
            100.0 * self.precisions[2],
            100.0 * self.precisions[3],
            self.brevity_penalty,
            self.hyp_len as f64 / self.ref_len as f64,
            self.hyp_len,
            self.ref_len
        )
    }
}

fn ngram_counts(tokens: &[&str], order: usize) -> HashMap<Vec<String>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= order {
        for window in tokens.windows(order) {
            let key: Vec<String> = window.iter().map(|t| t.to_string()).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU over whitespace-tokenized lines, one reference per
/// hypothesis.
pub fn bleu(hypotheses: &[String], references: &[String]) -> Result<BleuReport> {
    if hypotheses.len() != references.len() {
        return Err(Error::Contract(format!(
            "{} hypotheses against {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::Contract("cannot score an empty corpus".into()));
    }

    let mut matched = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;

    for (hyp, reference) in hypotheses.iter().zip(references) {
        let hyp_tokens: Vec<&str> = hyp.split_whitespace().collect();
        let ref_tokens: Vec<&str> = reference.split_whitespace().collect();
        hyp_len += hyp_tokens.len();
        ref_len += ref_tokens.len();
        for order in 1..=MAX_ORDER {
            let hyp_counts = ngram_counts(&hyp_tokens, order);
            let ref_counts = ngram_counts(&ref_tokens, order);
            for (gram, count) in &hyp_counts {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matched[order - 1] += count.min(&clip);
            }
            total[order - 1] += hyp_tokens.len().saturating_sub(order - 1);
        }
    }

    let mut precisions = [0.0f64; MAX_ORDER];
    for order in 0..MAX_ORDER {
        if total[order] > 0 {
            precisions[order] = matched[order] as f64 / total[order] as f64;
        }
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = if precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log: f64 = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

/// Sentence exact-match rate in percent (both sides whitespace-split).
pub fn exact_match_rate(hypotheses: &[String], references: &[String]) -> Result<f64> {
    if hypotheses.len() != references.len() || hypotheses.is_empty() {
        return Err(Error::Contract(format!(
            "{} hypotheses against {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let matches = hypotheses
        .iter()
        .zip(references)
        .filter(|(h, r)| {
            h.split_whitespace().collect::<Vec<_>>() == r.split_whitespace().collect::<Vec<_>>()
        })
        .count();
    Ok(100.0 * matches as f64 / hypotheses.len() as f64)
}
