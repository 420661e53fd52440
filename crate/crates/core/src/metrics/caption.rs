use std::collections::{BTreeMap, BTreeSet};

use super::CaptionScorer;

/// Lowercases, turns punctuation into spaces, and splits on whitespace.
pub fn tokenize(s: &str) -> Vec<String> {
    s.chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

const MAX_N: usize = 4;

type NGram = Vec<String>;

// ordered maps keep float sums independent of hash seeds
fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<NGram, f64> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// Document frequencies of n-grams over a corpus of reference sets.
#[derive(Debug, Clone)]
pub struct CiderCorpus {
    docs: usize,
    df: BTreeMap<NGram, usize>,
}

impl CiderCorpus {
    /// Each entry is the reference set of one item (image, event, ...).
    pub fn new<S: AsRef<str>>(ref_sets: &[Vec<S>]) -> Self {
        let mut df: BTreeMap<NGram, usize> = BTreeMap::new();
        for refs in ref_sets {
            let mut seen: BTreeSet<NGram> = BTreeSet::new();
            for r in refs {
                let toks = tokenize(r.as_ref());
                for n in 1..=MAX_N {
                    seen.extend(ngram_counts(&toks, n).into_keys());
                }
            }
            for g in seen {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        CiderCorpus {
            docs: ref_sets.len(),
            df,
        }
    }

    pub fn len(&self) -> usize {
        self.docs
    }

    pub fn is_empty(&self) -> bool {
        self.docs == 0
    }

    pub fn idf(&self, gram: &[String]) -> f64 {
        let df = self.df.get(gram).copied().unwrap_or(0).max(1);
        (self.docs.max(1) as f64 / df as f64).ln()
    }

    fn tfidf(&self, tokens: &[String], n: usize) -> BTreeMap<NGram, f64> {
        let counts = ngram_counts(tokens, n);
        let total: f64 = counts.values().sum();
        counts
            .into_iter()
            .map(|(g, c)| {
                let w = c / total * self.idf(&g);
                (g, w)
            })
            .collect()
    }

    /// CIDEr of `candidate` against `refs` (0–10 scale).
    pub fn cider<S: AsRef<str>>(&self, candidate: &str, refs: &[S]) -> f64 {
        let cand = tokenize(candidate);
        if cand.is_empty() || refs.is_empty() {
            return 0.0;
        }
        let ref_toks: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r.as_ref())).collect();
        let mut total = 0.0;
        for n in 1..=MAX_N {
            let cv = self.tfidf(&cand, n);
            let mut per_n = 0.0;
            for rt in &ref_toks {
                per_n += cosine(&cv, &self.tfidf(rt, n));
            }
            total += per_n / ref_toks.len() as f64;
        }
        10.0 * total / MAX_N as f64
    }
}

fn cosine(a: &BTreeMap<NGram, f64>, b: &BTreeMap<NGram, f64>) -> f64 {
    let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a
        .iter()
        .filter_map(|(g, va)| b.get(g).map(|vb| va * vb))
        .sum();
    dot / (na * nb)
}

/// CIDEr as a single-reference [`CaptionScorer`] over a fixed corpus.
#[derive(Debug, Clone)]
pub struct Cider {
    pub corpus: CiderCorpus,
}

impl CaptionScorer for Cider {
    fn score(&self, candidate: &str, reference: &str) -> f64 {
        self.corpus.cider(candidate, &[reference])
    }

    fn unit_score(&self, candidate: &str, reference: &str) -> f64 {
        self.score(candidate, reference) / 10.0
    }
}

/// METEOR restricted to exact unigram matches (no stemming or synonyms).
#[derive(Debug, Clone, Copy, Default)]
pub struct MeteorLite;

impl MeteorLite {
    /// Returns `(matches, chunks)` of a greedy longest-run alignment.
    pub fn align(cand: &[String], reference: &[String]) -> (usize, usize) {
        let mut cand_used = vec![false; cand.len()];
        let mut ref_used = vec![false; reference.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        loop {
            // longest common run of unused tokens; earliest candidate, then
            // earliest reference position wins ties
            let mut best: Option<(usize, usize, usize)> = None;
            for i in 0..cand.len() {
                for j in 0..reference.len() {
                    let mut len = 0;
                    while i + len < cand.len()
                        && j + len < reference.len()
                        && !cand_used[i + len]
                        && !ref_used[j + len]
                        && cand[i + len] == reference[j + len]
                    {
                        len += 1;
                    }
                    if len > 0 && best.is_none_or(|(_, _, l)| len > l) {
                        best = Some((i, j, len));
                    }
                }
            }
            let Some((i, j, len)) = best else { break };
            for o in 0..len {
                cand_used[i + o] = true;
                ref_used[j + o] = true;
                pairs.push((i + o, j + o));
            }
        }
        pairs.sort_unstable();
        let chunks = pairs
            .iter()
            .enumerate()
            .filter(|&(idx, &(ci, ri))| {
                idx == 0 || {
                    let (pc, pr) = pairs[idx - 1];
                    !(ci == pc + 1 && ri == pr + 1)
                }
            })
            .count();
        (pairs.len(), chunks)
    }

    pub fn meteor(candidate: &str, reference: &str) -> f64 {
        let c = tokenize(candidate);
        let r = tokenize(reference);
        let (m, chunks) = Self::align(&c, &r);
        if m == 0 {
            return 0.0;
        }
        let p = m as f64 / c.len() as f64;
        let rec = m as f64 / r.len() as f64;
        let f_mean = 10.0 * p * rec / (rec + 9.0 * p);
        let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
        f_mean * (1.0 - penalty)
    }
}

impl CaptionScorer for MeteorLite {
    fn score(&self, candidate: &str, reference: &str) -> f64 {
        MeteorLite::meteor(candidate, reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer() {
        assert_eq!(toks("A dog, RUNS!  fast."), ["a", "dog", "runs", "fast"]);
        assert!(toks(" ,.; ").is_empty());
    }

    #[test]
    fn meteor_identical() {
        let s = MeteorLite::meteor("a man rides a horse", "a man rides a horse");
        assert!((s - (1.0 - 0.5 / 125.0)).abs() < 1e-12);
    }

    #[test]
    fn meteor_disjoint() {
        assert_eq!(MeteorLite::meteor("red car", "blue boat"), 0.0);
        assert_eq!(MeteorLite::meteor("", "blue boat"), 0.0);
    }

    #[test]
    fn meteor_cat_sat() {
        // m = 2, P = R = 2/3, F = 2/3, one chunk: penalty 0.5 / 8
        let s = MeteorLite::meteor("the cat sat", "the cat ran");
        assert!((s - 0.625).abs() < 1e-12);
    }

    #[test]
    fn meteor_reordering_adds_chunks() {
        let c = toks("on the mat the cat sat");
        let r = toks("the cat sat on the mat");
        assert_eq!(MeteorLite::align(&c, &r), (6, 2));
        // F = 1, penalty = 0.5 * (2/6)^3
        let s = MeteorLite::meteor("on the mat the cat sat", "the cat sat on the mat");
        assert!((s - (1.0 - 0.5 / 27.0)).abs() < 1e-12);
    }

    #[test]
    fn meteor_duplicate_words_match_by_count() {
        let (m, _) = MeteorLite::align(&toks("a a a b"), &toks("a b a"));
        assert_eq!(m, 3);
    }

    #[test]
    fn cider_self_is_ten() {
        let refs = vec![
            vec!["a man is riding a horse"],
            vec!["two dogs play in snow"],
        ];
        let corpus = CiderCorpus::new(&refs);
        let s = corpus.cider("a man is riding a horse", &["a man is riding a horse"]);
        assert!((s - 10.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn cider_no_overlap_is_zero() {
        let refs = vec![vec!["a man is riding a horse"], vec!["two dogs play"]];
        let corpus = CiderCorpus::new(&refs);
        assert_eq!(corpus.cider("green tea cup", &["a man is riding a horse"]), 0.0);
        assert_eq!(corpus.cider("", &["a man is riding a horse"]), 0.0);
    }

    #[test]
    fn cider_hand_computed() {
        // corpus docs: {"a b c"}, {"a d"}; idf(a) = 0, idf(b) = idf(c) = ln 2.
        // candidate "a b" vs ref "a b c":
        //   n=1: cand {a:0, b:ln2/2}, ref {a:0, b:ln2/3, c:ln2/3}; cos = 1/sqrt(2)
        //   n=2: cand {ab: ln2}, ref {ab: ln2/2, bc: ln2/2}; cos = 1/sqrt(2)
        //   n=3,4: cand has no n-grams -> 0
        // CIDEr = 10 * (2 / sqrt(2)) / 4
        let refs = vec![vec!["a b c"], vec!["a d"]];
        let corpus = CiderCorpus::new(&refs);
        let s = corpus.cider("a b", &["a b c"]);
        let expected = 10.0 * (2.0 / 2f64.sqrt()) / 4.0;
        assert!((s - expected).abs() < 1e-12, "{s} vs {expected}");
    }

    #[test]
    fn scorers_are_case_insensitive() {
        let corpus = CiderCorpus::new(&[vec!["The Cat sat on the mat"], vec!["x y"]]);
        let a = corpus.cider("the cat sat", &["the cat sat on the mat"]);
        let b = corpus.cider("THE CAT SAT", &["The Cat Sat On The Mat"]);
        assert_eq!(a, b);
        assert_eq!(
            MeteorLite::meteor("The Cat", "the cat ran"),
            MeteorLite::meteor("the cat", "THE CAT RAN")
        );
    }
}
