//! ROUGE-1/2/L/Lsum.
//!
//! Tokenization: lowercase, every character outside `[a-z0-9]` becomes a
//! separator, empty tokens dropped. Stemming (Snowball English, tokens longer
//! than three characters) is off unless requested. Lsum splits on newlines
//! and on `.`, `!`, `?` followed by whitespace.

use std::collections::HashMap;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    const ZERO: Self = Self {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    fn from_hits(hits: usize, candidate_len: usize, reference_len: usize) -> Self {
        if hits == 0 || candidate_len == 0 || reference_len == 0 {
            return Self::ZERO;
        }
        let precision = hits as f64 / candidate_len as f64;
        let recall = hits as f64 / reference_len as f64;
        Self {
            precision,
            recall,
            f1: 2.0 * precision * recall / (precision + recall),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tokenizer {
    pub stem: bool,
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let lowered = text.to_lowercase();
        let tokens = lowered
            .split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit()))
            .filter(|t| !t.is_empty());
        if self.stem {
            let stemmer = Stemmer::create(Algorithm::English);
            tokens
                .map(|t| {
                    if t.len() > 3 {
                        stemmer.stem(t).into_owned()
                    } else {
                        t.to_string()
                    }
                })
                .collect()
        } else {
            tokens.map(str::to_string).collect()
        }
    }
}

/// Splits on newlines and on sentence-final punctuation followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        for (k, &(i, c)) in chars.iter().enumerate() {
            let at_boundary = matches!(c, '.' | '!' | '?')
                && chars.get(k + 1).is_some_and(|(_, n)| n.is_whitespace());
            if at_boundary {
                out.push(line[start..=i].trim().to_string());
                start = i + 1;
            }
        }
        out.push(line[start..].trim().to_string());
    }
    out.retain(|s| !s.is_empty());
    out
}

fn non_empty_reference(reference: &[String]) -> Result<()> {
    if reference.is_empty() {
        Err(Error::Invalid("reference text has no tokens".into()))
    } else {
        Ok(())
    }
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub fn rouge_n(
    candidate: &str,
    reference: &str,
    n: usize,
    tokenizer: Tokenizer,
) -> Result<RougeScore> {
    if !(1..=2).contains(&n) {
        return Err(Error::Invalid(format!("rouge n must be 1 or 2, got {n}")));
    }
    let cand = tokenizer.tokenize(candidate);
    let refs = tokenizer.tokenize(reference);
    non_empty_reference(&refs)?;
    let c = ngrams(&cand, n);
    let r = ngrams(&refs, n);
    let hits: usize = r
        .iter()
        .map(|(g, count)| (*count).min(c.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(RougeScore::from_hits(
        hits,
        c.values().sum(),
        r.values().sum(),
    ))
}

fn lcs_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t
}

/// Indices into `reference` of one LCS with `candidate`. The tie-breaking
/// order matters for the union in Lsum.
fn lcs_indices(reference: &[String], candidate: &[String]) -> Vec<usize> {
    let t = lcs_table(reference, candidate);
    let (mut i, mut j) = (reference.len(), candidate.len());
    let mut out = Vec::new();
    while i > 0 && j > 0 {
        if reference[i - 1] == candidate[j - 1] {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if t[i][j - 1] > t[i - 1][j] {
            j -= 1;
        } else {
            i -= 1;
        }
    }
    out.reverse();
    out
}

pub fn rouge_l(candidate: &str, reference: &str, tokenizer: Tokenizer) -> Result<RougeScore> {
    let cand = tokenizer.tokenize(candidate);
    let refs = tokenizer.tokenize(reference);
    non_empty_reference(&refs)?;
    let lcs = lcs_table(&refs, &cand)[refs.len()][cand.len()];
    Ok(RougeScore::from_hits(lcs, cand.len(), refs.len()))
}

/// Summary-level LCS: for each reference sentence, the union of its LCS with
/// every candidate sentence; each token is credited at most as many times as
/// it occurs on either side.
pub fn rouge_lsum(candidate: &str, reference: &str, tokenizer: Tokenizer) -> Result<RougeScore> {
    let cand: Vec<Vec<String>> = split_sentences(candidate)
        .iter()
        .map(|s| tokenizer.tokenize(s))
        .collect();
    let refs: Vec<Vec<String>> = split_sentences(reference)
        .iter()
        .map(|s| tokenizer.tokenize(s))
        .collect();
    let m: usize = refs.iter().map(Vec::len).sum();
    let n: usize = cand.iter().map(Vec::len).sum();
    if m == 0 {
        return Err(Error::Invalid("reference text has no tokens".into()));
    }
    if n == 0 {
        return Ok(RougeScore::ZERO);
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    let mut cand_counts: HashMap<&str, usize> = HashMap::new();
    for t in refs.iter().flatten() {
        *ref_counts.entry(t).or_insert(0) += 1;
    }
    for t in cand.iter().flatten() {
        *cand_counts.entry(t).or_insert(0) += 1;
    }
    let mut hits = 0;
    for r in &refs {
        let mut union: Vec<usize> = cand.iter().flat_map(|c| lcs_indices(r, c)).collect();
        union.sort_unstable();
        union.dedup();
        for idx in union {
            let token = r[idx].as_str();
            let (Some(rc), Some(cc)) = (ref_counts.get_mut(token), cand_counts.get_mut(token))
            else {
                continue;
            };
            if *rc > 0 && *cc > 0 {
                hits += 1;
                *rc -= 1;
                *cc -= 1;
            }
        }
    }
    Ok(RougeScore::from_hits(hits, n, m))
}

/// F1 of rouge1, rouge2, rougeL and rougeLsum, in that order.
pub fn rouge_f1_all(
    candidate: &str,
    reference: &str,
    tokenizer: Tokenizer,
) -> Result<[(&'static str, f64); 4]> {
    Ok([
        ("rouge1", rouge_n(candidate, reference, 1, tokenizer)?.f1),
        ("rouge2", rouge_n(candidate, reference, 2, tokenizer)?.f1),
        ("rougeL", rouge_l(candidate, reference, tokenizer)?.f1),
        ("rougeLsum", rouge_lsum(candidate, reference, tokenizer)?.f1),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T: Tokenizer = Tokenizer { stem: false };

    #[test]
    fn tokenization() {
        assert_eq!(
            T.tokenize("Hello, World! 3x-ray café"),
            ["hello", "world", "3x", "ray", "caf"]
        );
        assert!(T.tokenize(" ,; ").is_empty());
        let stemmed = Tokenizer { stem: true }.tokenize("running dogs ran");
        assert_eq!(stemmed, ["run", "dog", "ran"]);
    }

    #[test]
    fn sentences() {
        assert_eq!(
            split_sentences("A b. C d!\nE f?  G\n\nH."),
            ["A b.", "C d!", "E f?", "G", "H."]
        );
        assert_eq!(split_sentences("3.5 mg daily"), ["3.5 mg daily"]);
    }

    #[test]
    fn unigram_example() {
        let s = rouge_n("the cat sat", "the cat ran", 1, T).unwrap();
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_and_disjoint() {
        for f in [
            rouge_n("a b c", "a b c", 1, T).unwrap(),
            rouge_n("a b c", "a b c", 2, T).unwrap(),
            rouge_l("a b c", "a b c", T).unwrap(),
            rouge_lsum("a b c", "a b c", T).unwrap(),
        ] {
            assert_eq!(f.f1, 1.0);
        }
        assert_eq!(rouge_n("x y", "a b", 1, T).unwrap().f1, 0.0);
    }

    #[test]
    fn reversed_order_lcs() {
        let s = rouge_l("c b a", "a b c", T).unwrap();
        assert!((s.recall - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lsum_two_sentence_reference() {
        let s = rouge_lsum("the cat sat", "the cat sat.\nzebras graze quietly here", T).unwrap();
        assert!((s.recall - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(s.precision, 1.0);
    }

    #[test]
    fn errors() {
        assert!(rouge_n("a", "", 1, T).is_err());
        assert!(rouge_n("a", "a", 3, T).is_err());
        assert!(rouge_l("a", "!!", T).is_err());
        assert!(rouge_lsum("a", "\n", T).is_err());
        assert_eq!(rouge_l("", "a", T).unwrap().f1, 0.0);
    }

    fn text() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop::sample::select(vec!["a", "b", "c", "d", "e", ".", "\n"]),
            1..25,
        )
        .prop_map(|w| w.join(" "))
        .prop_filter("needs a token", |s| {
            s.chars().any(|c| c.is_ascii_alphabetic())
        })
    }

    proptest! {
        #[test]
        fn bounded_and_swap_symmetric(a in text(), b in text()) {
            let fns: [fn(&str, &str) -> RougeScore; 4] = [
                |x, y| rouge_n(x, y, 1, T).unwrap(),
                |x, y| rouge_n(x, y, 2, T).unwrap(),
                |x, y| rouge_l(x, y, T).unwrap(),
                |x, y| rouge_lsum(x, y, T).unwrap(),
            ];
            for (k, f) in fns.iter().enumerate() {
                let ab = f(&a, &b);
                let ba = f(&b, &a);
                for v in [ab.precision, ab.recall, ab.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                if k < 3 {
                    prop_assert!((ab.precision - ba.recall).abs() < 1e-12);
                    prop_assert!((ab.recall - ba.precision).abs() < 1e-12);
                }
            }
        }
    }
}
