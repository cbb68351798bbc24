//! Captioning and QA text metrics.
//!
//! All metrics share one tokenizer: lowercase, drop `.,!?;:'"()`, split on
//! whitespace. Scores therefore ignore case and surrounding whitespace.

use std::collections::HashMap;

/// Characters removed before splitting.
pub const STRIPPED_CHARS: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')'];
/// Recall weight of ROUGE-L.
pub const ROUGE_BETA: f64 = 1.2;
/// Numerator floor of the sentence-level BLEU helper.
pub const SENTENCE_BLEU_EPS: f64 = 1e-9;
/// CIDEr is reported on a x10 scale.
pub const CIDER_SCALE: f64 = 10.0;
pub const CIDER_MAX_N: usize = 4;

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| !STRIPPED_CHARS.contains(c))
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and totals for one candidate, orders `1..=max_n`,
/// plus candidate length and closest reference length (shorter on ties).
struct BleuStats {
    matches: Vec<usize>,
    totals: Vec<usize>,
    cand_len: usize,
    ref_len: usize,
}

fn bleu_stats(candidate: &str, references: &[String], max_n: usize) -> BleuStats {
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    let mut matches = vec![0; max_n];
    let mut totals = vec![0; max_n];
    for n in 1..=max_n {
        let cand_counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let slot = max_ref.entry(g).or_insert(0);
                *slot = (*slot).max(c);
            }
        }
        matches[n - 1] = cand_counts
            .iter()
            .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        totals[n - 1] = cand.len().saturating_sub(n - 1);
    }
    let ref_len = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(cand.len()), l))
        .unwrap_or(0);
    BleuStats {
        matches,
        totals,
        cand_len: cand.len(),
        ref_len,
    }
}

fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 {
        0.0
    } else if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}

/// Corpus BLEU with uniform weights over orders `1..=max_n`, no smoothing.
pub fn bleu(candidates: &[String], references: &[Vec<String>], max_n: usize) -> f64 {
    assert!(max_n >= 1, "BLEU order must be at least 1");
    assert_eq!(candidates.len(), references.len(), "one reference set per candidate");
    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut cand_len, mut ref_len) = (0, 0);
    for (c, refs) in candidates.iter().zip(references) {
        let s = bleu_stats(c, refs, max_n);
        for k in 0..max_n {
            matches[k] += s.matches[k];
            totals[k] += s.totals[k];
        }
        cand_len += s.cand_len;
        ref_len += s.ref_len;
    }
    if (0..max_n).any(|k| matches[k] == 0 || totals[k] == 0) {
        return 0.0;
    }
    let log_mean = (0..max_n)
        .map(|k| (matches[k] as f64 / totals[k] as f64).ln())
        .sum::<f64>()
        / max_n as f64;
    brevity_penalty(cand_len, ref_len) * log_mean.exp()
}

/// Per-sentence BLEU with zero match counts replaced by [`SENTENCE_BLEU_EPS`].
pub fn sentence_bleu(candidate: &str, references: &[String], max_n: usize) -> f64 {
    let s = bleu_stats(candidate, references, max_n);
    if s.cand_len == 0 {
        return 0.0;
    }
    let log_mean = (0..max_n)
        .map(|k| {
            let num = if s.matches[k] == 0 { SENTENCE_BLEU_EPS } else { s.matches[k] as f64 };
            let den = s.totals[k].max(1) as f64;
            (num / den).ln()
        })
        .sum::<f64>()
        / max_n as f64;
    brevity_penalty(s.cand_len, s.ref_len) * log_mean.exp()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure against the best-matching reference.
pub fn rouge_l(candidate: &str, references: &[String]) -> f64 {
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return 0.0;
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    references
        .iter()
        .map(|r| {
            let r = tokenize(r);
            let lcs = lcs_len(&cand, &r);
            if lcs == 0 {
                return 0.0;
            }
            let p = lcs as f64 / cand.len() as f64;
            let rec = lcs as f64 / r.len() as f64;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max)
}

pub fn rouge_l_corpus(candidates: &[String], references: &[Vec<String>]) -> f64 {
    mean(candidates.iter().zip(references).map(|(c, r)| rouge_l(c, r)))
}

/// Crude suffix stripper used for METEOR's stem stage.
pub fn stem(word: &str) -> String {
    const RULES: &[(&str, &str)] = &[
        ("ational", "ate"),
        ("ingly", ""),
        ("edly", ""),
        ("ness", ""),
        ("ment", ""),
        ("ies", "y"),
        ("ied", "y"),
        ("ing", ""),
        ("es", ""),
        ("ed", ""),
        ("ly", ""),
        ("s", ""),
    ];
    for (suffix, repl) in RULES {
        if let Some(root) = word.strip_suffix(suffix) {
            if root.chars().count() >= 3 && !word.ends_with("ss") {
                return format!("{root}{repl}");
            }
        }
    }
    word.to_string()
}

fn meteor_single(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut ref_used = vec![false; reference.len()];
    let mut cand_match: Vec<Option<usize>> = vec![None; cand.len()];
    for (i, c) in cand.iter().enumerate() {
        if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && reference[j] == *c) {
            ref_used[j] = true;
            cand_match[i] = Some(j);
        }
    }
    let ref_stems: Vec<String> = reference.iter().map(|w| stem(w)).collect();
    for (i, c) in cand.iter().enumerate() {
        if cand_match[i].is_some() {
            continue;
        }
        let s = stem(c);
        if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && ref_stems[j] == s) {
            ref_used[j] = true;
            cand_match[i] = Some(j);
        }
    }
    let aligned: Vec<(usize, usize)> = cand_match
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| (i, j)))
        .collect();
    let m = aligned.len();
    if m == 0 {
        return 0.0;
    }
    let chunks = 1 + aligned
        .windows(2)
        .filter(|w| w[1].0 != w[0].0 + 1 || w[1].1 != w[0].1 + 1)
        .count();
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}

/// METEOR without synonym matching: exact then stem alignment,
/// `Fmean = 10PR/(R+9P)`, fragmentation penalty `0.5 (chunks/matches)^3`.
pub fn meteor_lite(candidate: &str, references: &[String]) -> f64 {
    let cand = tokenize(candidate);
    references
        .iter()
        .map(|r| meteor_single(&cand, &tokenize(r)))
        .fold(0.0, f64::max)
}

pub fn meteor_corpus(candidates: &[String], references: &[Vec<String>]) -> f64 {
    mean(candidates.iter().zip(references).map(|(c, r)| meteor_lite(c, r)))
}

type NgramVec = HashMap<Vec<String>, f64>;

/// Document frequencies over reference sets, for CIDEr.
pub struct CiderIdf {
    doc_freq: HashMap<Vec<String>, usize>,
    log_docs: f64,
}

impl CiderIdf {
    pub fn new(reference_sets: &[Vec<String>]) -> Self {
        let mut doc_freq: HashMap<Vec<String>, usize> = HashMap::new();
        for refs in reference_sets {
            let mut present: Vec<Vec<String>> = Vec::new();
            for r in refs {
                let toks = tokenize(r);
                for n in 1..=CIDER_MAX_N {
                    for g in ngram_counts(&toks, n).into_keys() {
                        present.push(g.to_vec());
                    }
                }
            }
            present.sort();
            present.dedup();
            for g in present {
                *doc_freq.entry(g).or_insert(0) += 1;
            }
        }
        Self {
            doc_freq,
            log_docs: (reference_sets.len().max(1) as f64).ln(),
        }
    }

    fn idf(&self, gram: &[String]) -> f64 {
        let df = self.doc_freq.get(gram).copied().unwrap_or(0).max(1);
        self.log_docs - (df as f64).ln()
    }

    fn vectors(&self, text: &str) -> Vec<NgramVec> {
        let toks = tokenize(text);
        (1..=CIDER_MAX_N)
            .map(|n| {
                ngram_counts(&toks, n)
                    .into_iter()
                    .map(|(g, c)| (g.to_vec(), c as f64 * self.idf(g)))
                    .collect()
            })
            .collect()
    }

    /// Score of one candidate against its references, in `[0, 10]`.
    pub fn score(&self, candidate: &str, references: &[String]) -> f64 {
        if references.is_empty() {
            return 0.0;
        }
        let cand = self.vectors(candidate);
        let refs: Vec<Vec<NgramVec>> = references.iter().map(|r| self.vectors(r)).collect();
        let mut total = 0.0;
        for n in 0..CIDER_MAX_N {
            let sims: f64 = refs.iter().map(|r| cosine(&cand[n], &r[n])).sum();
            total += sims / refs.len() as f64;
        }
        CIDER_SCALE * total / CIDER_MAX_N as f64
    }
}

fn cosine(a: &NgramVec, b: &NgramVec) -> f64 {
    let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().map(|(g, v)| v * b.get(g).copied().unwrap_or(0.0)).sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Per-item CIDEr with document frequencies from all reference sets.
pub fn cider_scores(candidates: &[String], reference_sets: &[Vec<String>]) -> Vec<f64> {
    assert_eq!(candidates.len(), reference_sets.len(), "one reference set per candidate");
    let idf = CiderIdf::new(reference_sets);
    candidates
        .iter()
        .zip(reference_sets)
        .map(|(c, r)| idf.score(c, r))
        .collect()
}

/// Corpus CIDEr: mean of [`cider_scores`].
pub fn cider(candidates: &[String], reference_sets: &[Vec<String>]) -> f64 {
    mean(cider_scores(candidates, reference_sets).into_iter())
}

/// Lowercase, drop ASCII punctuation, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, gt_answers: &[String]) -> bool {
    let p = normalize_answer(pred);
    gt_answers.iter().any(|g| normalize_answer(g) == p)
}

fn contains_tokens(haystack: &[&str], needle: &[&str]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Exact match, or one normalized answer appears as a contiguous token run in the other.
pub fn em_refined(pred: &str, gt_answers: &[String]) -> bool {
    if exact_match(pred, gt_answers) {
        return true;
    }
    let p = normalize_answer(pred);
    let pt: Vec<&str> = p.split(' ').filter(|t| !t.is_empty()).collect();
    gt_answers.iter().any(|g| {
        let g = normalize_answer(g);
        let gtok: Vec<&str> = g.split(' ').filter(|t| !t.is_empty()).collect();
        contains_tokens(&pt, &gtok) || contains_tokens(&gtok, &pt)
    })
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("  The Cat's (big) hat!  "), s(&["the", "cats", "big", "hat"]));
    }

    #[test]
    fn bleu_perfect_and_disjoint() {
        let c = s(&["the chair is next to the desk"]);
        assert_eq!(bleu(&c, std::slice::from_ref(&c), 4), 1.0);
        assert_eq!(bleu(&s(&["red apple"]), &[s(&["blue sky"])], 1), 0.0);
        assert_eq!(bleu(&s(&[""]), &[s(&["blue sky"])], 1), 0.0);
    }

    #[test]
    fn bleu1_brevity_case() {
        let b = bleu(&s(&["the cat sat"]), &[s(&["the cat sat down"])], 1);
        assert!((b - (-1.0f64 / 3.0).exp()).abs() < 1e-12);
        assert!((b - 0.7165).abs() < 1e-4);
    }

    #[test]
    fn bleu_clips_repeated_ngrams() {
        // "the the the" vs "the cat": clipped unigram matches 1 of 3
        let b = bleu(&s(&["the the the"]), &[s(&["the cat"])], 1);
        assert!((b - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sentence_bleu_matches_corpus_on_one_item() {
        let c = "the brown chair is near a window";
        let r = s(&["the brown chair is near the window"]);
        let corpus = bleu(&[c.to_string()], std::slice::from_ref(&r), 4);
        assert!(corpus > 0.0);
        assert!((sentence_bleu(c, &r, 4) - corpus).abs() < 1e-12);
        assert!(sentence_bleu("zebra", &r, 4) < 1e-6);
    }

    #[test]
    fn rouge_l_hand_case() {
        // LCS("a b c d", "a c d e") = 3 ("a c d"): P = R = 3/4
        let f = rouge_l("a b c d", &s(&["a c d e"]));
        assert!((f - 0.75).abs() < 1e-12);
        assert_eq!(rouge_l("x y", &s(&["a b"])), 0.0);
        assert!((rouge_l("a b", &s(&["zzz", "a b"])) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn meteor_cases() {
        let perfect = meteor_lite("the cat sat", &s(&["the cat sat"]));
        // one chunk of three: penalty 0.5 / 27
        assert!((perfect - (1.0 - 0.5 / 27.0)).abs() < 1e-12);
        let stemmed = meteor_lite("chairs standing", &s(&["chair stands"]));
        assert!(stemmed > 0.0);
        assert_eq!(meteor_lite("dog", &s(&["cat"])), 0.0);
        // swapped order: two chunks
        let swapped = meteor_lite("b a", &s(&["a b"]));
        assert!((swapped - (1.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn stemmer() {
        assert_eq!(stem("chairs"), "chair");
        assert_eq!(stem("standing"), "stand");
        assert_eq!(stem("glass"), "glass");
        assert_eq!(stem("is"), "is");
    }

    #[test]
    fn cider_identical_item_scores_ten() {
        let cands = s(&["a wooden chair near the desk", "a lamp on the table"]);
        let refs = vec![s(&["a wooden chair near the desk"]), s(&["the small lamp is on a table"])];
        let scores = cider_scores(&cands, &refs);
        assert!((scores[0] - 10.0).abs() < 1e-9, "{scores:?}");
        assert!(scores[1] > 0.0 && scores[1] < 10.0);
        assert_eq!(cider(&s(&["zebra"]), &[s(&["a chair"])]), 0.0);
    }

    #[test]
    fn em_truth_table() {
        let gt = |x: &str| vec![x.to_string()];
        assert!(exact_match("brown", &gt("brown")) && em_refined("brown", &gt("brown")));
        assert!(!exact_match("the brown chair", &gt("brown chair")));
        assert!(em_refined("the brown chair", &gt("brown chair")));
        assert!(!exact_match("red", &gt("blue")) && !em_refined("red", &gt("blue")));
        assert!(exact_match(" Brown. ", &gt("brown")));
        assert!(!em_refined("", &gt("brown")));
        assert!(!em_refined("bored", &gt("red")));
    }
}
