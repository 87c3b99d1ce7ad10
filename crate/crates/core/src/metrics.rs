//! Token-level evaluation, POS-class breakdowns and the paired
//! approximate-randomization test.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{word_spans, Span};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenEval {
    /// `−ln p(gold)` in nats.
    pub nll: f64,
    pub entropy: f64,
    pub correct: bool,
    /// Probability of the top-1 prediction.
    pub confidence: f64,
    pub reciprocal_rank: f64,
}

/// Scores one posterior against its gold token. Ties for the top-1 prediction
/// go to the lowest token id; the gold rank is 1 + the number of strictly more
/// probable tokens.
pub fn token_eval(dist: &[f64], gold: u32) -> Result<TokenEval> {
    let g = gold as usize;
    if g >= dist.len() {
        return Err(Error::Input(format!(
            "gold token {gold} outside a distribution over {}",
            dist.len()
        )));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || dist.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Input(format!("distribution is not normalized (sum {sum})")));
    }
    let top = dist
        .iter()
        .enumerate()
        .fold(0, |b, (i, &p)| if p > dist[b] { i } else { b });
    let above = dist.iter().filter(|&&p| p > dist[g]).count();
    let entropy = -dist.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
    Ok(TokenEval {
        nll: -dist[g].ln(),
        entropy,
        correct: top == g,
        confidence: dist[top],
        reciprocal_rank: 1.0 / (above + 1) as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tokens: usize,
    pub ppl: f64,
    pub entropy: f64,
    /// Fraction of tokens whose top-1 prediction is the gold token.
    pub accuracy: f64,
    pub confidence: f64,
    pub mrr: f64,
}

impl EvalReport {
    /// Micro-averages; perplexity exponentiates the mean negative log-likelihood.
    pub fn from_evals<'a>(evals: impl IntoIterator<Item = &'a TokenEval>) -> Self {
        let (mut n, mut nll, mut h, mut acc, mut conf, mut rr) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0);
        for e in evals {
            n += 1;
            nll += e.nll;
            h += e.entropy;
            acc += f64::from(u8::from(e.correct));
            conf += e.confidence;
            rr += e.reciprocal_rank;
        }
        let d = n.max(1) as f64;
        EvalReport {
            tokens: n,
            ppl: if n == 0 { f64::NAN } else { (nll / d).exp() },
            entropy: h / d,
            accuracy: acc / d,
            confidence: conf / d,
            mrr: rr / d,
        }
    }

    /// Confidence relative to accuracy (1 means calibrated on average).
    pub fn conf_acc_ratio(&self) -> f64 {
        self.confidence / self.accuracy
    }
}

pub fn evaluate(posteriors: &[Vec<f64>], golds: &[u32]) -> Result<EvalReport> {
    if posteriors.len() != golds.len() {
        return Err(Error::Input(format!(
            "{} posteriors for {} gold tokens",
            posteriors.len(),
            golds.len()
        )));
    }
    let evals = posteriors
        .iter()
        .zip(golds)
        .map(|(d, &g)| token_eval(d, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_evals(&evals))
}

/// Coarse class of a universal POS tag; unknown tags map to `misc` and
/// report `false`.
pub fn merge_pos(tag: &str) -> (String, bool) {
    const KNOWN: [&str; 17] = [
        "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN", "PUNCT", "SCONJ",
        "SYM", "VERB", "X",
    ];
    let class = match tag {
        "NOUN" | "PROPN" => "noun".to_string(),
        "ADJ" | "ADV" => "mod".to_string(),
        "INTJ" | "SYM" | "X" => "misc".to_string(),
        t if KNOWN.contains(&t) => t.to_lowercase(),
        _ => return ("misc".to_string(), false),
    };
    (class, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosBreakdown {
    pub classes: BTreeMap<String, EvalReport>,
    /// Tokens whose tag was not a universal POS tag.
    pub unknown_tags: usize,
}

/// Per-class reports; `tags` holds one tag per token.
pub fn pos_breakdown(evals: &[TokenEval], tags: &[String]) -> Result<PosBreakdown> {
    if evals.len() != tags.len() {
        return Err(Error::Input(format!(
            "{} token tags for {} tokens",
            tags.len(),
            evals.len()
        )));
    }
    let mut groups: BTreeMap<String, Vec<&TokenEval>> = BTreeMap::new();
    let mut unknown_tags = 0;
    for (e, t) in evals.iter().zip(tags) {
        let (class, known) = merge_pos(t);
        unknown_tags += usize::from(!known);
        groups.entry(class).or_default().push(e);
    }
    Ok(PosBreakdown {
        classes: groups
            .into_iter()
            .map(|(c, es)| (c, EvalReport::from_evals(es)))
            .collect(),
        unknown_tags,
    })
}

/// Spreads word-level tags over tokens: each token takes the tag of the
/// whitespace-delimited word containing its first non-space byte, so
/// continuation pieces inherit their word's tag.
pub fn token_tags(text: &str, token_spans: &[Span], word_tags: &[String]) -> Result<Vec<String>> {
    let words = word_spans(text);
    if words.len() != word_tags.len() {
        return Err(Error::Input(format!(
            "{} tags for {} words",
            word_tags.len(),
            words.len()
        )));
    }
    let bytes = text.as_bytes();
    token_spans
        .iter()
        .map(|t| {
            let start = (t.from..t.to)
                .find(|&b| !bytes[b].is_ascii_whitespace())
                .unwrap_or(t.from);
            words
                .iter()
                .position(|w| w.from <= start && start < w.to)
                .or_else(|| words.iter().position(|w| w.from >= start))
                .map(|k| word_tags[k].clone())
                .ok_or_else(|| Error::Input(format!("token at byte {start} lies after the last word")))
        })
        .collect()
}

/// Sum of sign-flipped differences for one randomization round.
fn flipped_gap(diffs: &[f64], seed: u64, round: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round);
    let sum: f64 = diffs.iter().map(|&d| if rng.gen::<bool>() { -d } else { d }).sum();
    (sum / diffs.len() as f64).abs()
}

/// Paired approximate-randomization test on per-token scores.
///
/// Each round swaps every pair with probability 1/2; the p-value is
/// `(#rounds with statistic ≥ observed + 1) / (R + 1)`. Round `r` draws from
/// ChaCha stream `r + 1` of `seed`, so the result does not depend on the
/// thread schedule.
pub fn approx_randomization_test(a: &[f64], b: &[f64], rounds: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "paired scores differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if rounds == 0 {
        return Err(Error::Config("randomization test needs R >= 1".into()));
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let observed = (diffs.iter().sum::<f64>() / diffs.len() as f64).abs();
    let hits = (0..rounds as u64)
        .into_par_iter()
        .filter(|&r| flipped_gap(&diffs, seed, r + 1) >= observed)
        .count();
    Ok((hits + 1) as f64 / (rounds + 1) as f64)
}

/// A difference is significant only if every seed's p-value is below `alpha`.
pub fn significant_for_all_seeds(p_values: &[f64], alpha: f64) -> bool {
    !p_values.is_empty() && p_values.iter().all(|&p| p < alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_posteriors() {
        let v = 8;
        let dist = vec![1.0 / v as f64; v];
        let golds: Vec<u32> = (0..v as u32).collect();
        let r = evaluate(&vec![dist; v], &golds).unwrap();
        assert!((r.ppl - v as f64).abs() < 1e-9);
        assert!((r.entropy - (v as f64).ln()).abs() < 1e-9);
        // only gold 0 wins the lowest-id tie-break
        assert_eq!(r.accuracy, 1.0 / v as f64);
        assert_eq!(r.mrr, 1.0);
    }

    #[test]
    fn two_token_perplexity() {
        let r = evaluate(&[vec![0.5, 0.5], vec![0.25, 0.75]], &[0, 0]).unwrap();
        assert!((r.ppl - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.mrr, 0.75);
    }

    #[test]
    fn unnormalized_distributions_are_rejected() {
        assert!(matches!(evaluate(&[vec![0.5, 0.6]], &[0]), Err(Error::Input(_))));
        assert!(evaluate(&[vec![1.0]], &[1]).is_err());
        assert!(evaluate(&[vec![1.0]], &[]).is_err());
    }

    #[test]
    fn pos_merges() {
        assert_eq!(merge_pos("PROPN"), ("noun".into(), true));
        assert_eq!(merge_pos("ADV"), ("mod".into(), true));
        assert_eq!(merge_pos("SYM"), ("misc".into(), true));
        assert_eq!(merge_pos("VERB"), ("verb".into(), true));
        assert_eq!(merge_pos("FOO"), ("misc".into(), false));
    }

    #[test]
    fn breakdown_groups_merged_classes() {
        let e = token_eval(&[0.5, 0.5], 0).unwrap();
        let b = pos_breakdown(&[e.clone(), e], &["NOUN".into(), "PROPN".into()]).unwrap();
        assert_eq!(b.classes.len(), 1);
        assert_eq!(b.classes["noun"].tokens, 2);
        let empty = pos_breakdown(&[], &[]).unwrap();
        assert!(empty.classes.is_empty());
        let e = token_eval(&[1.0], 0).unwrap();
        assert_eq!(pos_breakdown(&[e], &["??".into()]).unwrap().unknown_tags, 1);
    }

    #[test]
    fn continuation_tokens_inherit_word_tags() {
        let text = "Numerous injuries were";
        let spans = [Span::new(0, 1), Span::new(1, 8), Span::new(8, 17), Span::new(17, 22)];
        let tags: Vec<String> = ["ADJ", "NOUN", "AUX"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            token_tags(text, &spans, &tags).unwrap(),
            vec!["ADJ", "ADJ", "NOUN", "AUX"]
        );
        assert!(token_tags(text, &spans, &tags[..2]).is_err());
    }

    #[test]
    fn randomization_extremes() {
        let a: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        assert_eq!(approx_randomization_test(&a, &a, 500, 3).unwrap(), 1.0);
        let b: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
        assert_eq!(approx_randomization_test(&b, &a, 500, 3).unwrap(), 1.0 / 501.0);
        assert!(approx_randomization_test(&a, &a[1..], 5, 0).is_err());
    }

    #[test]
    fn randomization_is_deterministic_and_bounded() {
        let a: Vec<f64> = (0..200).map(|k| ((k * 37) % 11) as f64).collect();
        let b: Vec<f64> = (0..200).map(|k| ((k * 53) % 13) as f64).collect();
        let p1 = approx_randomization_test(&a, &b, 999, 42).unwrap();
        let p2 = approx_randomization_test(&a, &b, 999, 42).unwrap();
        assert_eq!(p1, p2);
        assert!((1.0 / 1000.0..=1.0).contains(&p1));
    }

    #[test]
    fn all_seed_rule() {
        assert!(significant_for_all_seeds(&[0.01, 0.02, 0.001], 0.05));
        assert!(!significant_for_all_seeds(&[0.01, 0.2, 0.001], 0.05));
        assert!(!significant_for_all_seeds(&[], 0.05));
    }
}
