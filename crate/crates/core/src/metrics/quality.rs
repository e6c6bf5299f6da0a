use std::collections::HashMap;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::document::words;
use crate::editability::harmonic;

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance over characters divided by the longer length.
pub fn edit_distance_ratio(pred: &str, reference: &str) -> f64 {
    let longest = pred.chars().count().max(reference.chars().count());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(pred, reference) as f64 / longest as f64
}

fn ngram_counts<'a>(toks: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    for w in toks.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU-4 over whitespace words: uniform weights, brevity penalty,
/// add-one smoothing for 2- to 4-gram precisions whose match count is zero.
pub fn bleu(pred: &str, reference: &str) -> f64 {
    let p = words(pred);
    let r = words(reference);
    if p.is_empty() || r.is_empty() {
        return if p.is_empty() && r.is_empty() { 1.0 } else { 0.0 };
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let total = p.len().saturating_sub(n - 1);
        let pc = ngram_counts(&p, n);
        let rc = ngram_counts(&r, n);
        let matched: usize = pc
            .iter()
            .map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0)))
            .sum();
        let precision = if n == 1 {
            matched as f64 / total as f64
        } else if matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        if precision == 0.0 {
            return 0.0;
        }
        log_sum += precision.ln() / 4.0;
    }
    let bp = if p.len() >= r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / p.len() as f64).exp()
    };
    bp * log_sum.exp()
}

/// Matching stages of [`meteor_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeteorStages {
    pub exact: bool,
    pub stem: bool,
}

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

/// METEOR-style unigram alignment score with exact and Porter-stem matching
/// and no synonym stage. Recall-weighted F-mean with a cubic fragmentation
/// penalty `0.5 * ((chunks - 1) / (matches - 1))^3`, so a single unbroken
/// alignment carries no penalty.
pub fn meteor_like(pred: &str, reference: &str) -> f64 {
    meteor_with(pred, reference, MeteorStages { exact: true, stem: true })
}

pub fn meteor_with(pred: &str, reference: &str, stages: MeteorStages) -> f64 {
    let p: Vec<String> = words(pred).into_iter().map(str::to_lowercase).collect();
    let r: Vec<String> = words(reference).into_iter().map(str::to_lowercase).collect();
    if p.is_empty() || r.is_empty() {
        return if p.is_empty() && r.is_empty() { 1.0 } else { 0.0 };
    }
    let mut ref_used = vec![false; r.len()];
    let mut align: Vec<Option<usize>> = vec![None; p.len()];
    let mut stage = |key: &dyn Fn(&str) -> String| {
        let rk: Vec<String> = r.iter().map(|w| key(w)).collect();
        for (i, w) in p.iter().enumerate() {
            if align[i].is_some() {
                continue;
            }
            let k = key(w);
            if let Some(j) = (0..r.len()).find(|&j| !ref_used[j] && rk[j] == k) {
                ref_used[j] = true;
                align[i] = Some(j);
            }
        }
    };
    if stages.exact {
        stage(&|w| w.to_owned());
    }
    if stages.stem {
        stage(&|w| stemmer().stem(w).into_owned());
    }

    let pairs: Vec<(usize, usize)> = align.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect();
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let chunks = 1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let precision = m as f64 / p.len() as f64;
    let recall = m as f64 / r.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = if m > 1 {
        0.5 * ((chunks - 1) as f64 / (m - 1) as f64).powi(3)
    } else {
        0.0
    };
    fmean * (1.0 - penalty)
}

/// Multiset word overlap: precision, recall and F1. Two empty texts score 1.
pub fn token_prf(pred: &str, reference: &str) -> (f64, f64, f64) {
    let p = words(pred);
    let r = words(reference);
    if p.is_empty() && r.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in &r {
        *counts.entry(w).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for w in &p {
        if let Some(c) = counts.get_mut(w) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    let precision = if p.is_empty() { 0.0 } else { common as f64 / p.len() as f64 };
    let recall = if r.is_empty() { 0.0 } else { common as f64 / r.len() as f64 };
    (precision, recall, harmonic(precision, recall))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QualityReport {
    pub edit_dist_ratio: f64,
    pub bleu: f64,
    pub meteor: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl QualityReport {
    /// Scores one page. Both sides are whitespace-normalized first.
    pub fn score(pred: &str, reference: &str) -> Self {
        let pred = crate::document::normalize_whitespace(pred);
        let reference = crate::document::normalize_whitespace(reference);
        let (precision, recall, f1) = token_prf(&pred, &reference);
        Self {
            edit_dist_ratio: edit_distance_ratio(&pred, &reference),
            bleu: bleu(&pred, &reference),
            meteor: meteor_like(&pred, &reference),
            precision,
            recall,
            f1,
        }
    }

    /// Field-wise mean; zero for an empty slice.
    pub fn mean(reports: &[QualityReport]) -> Self {
        if reports.is_empty() {
            return Self::default();
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&QualityReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Self {
            edit_dist_ratio: sum(|r| r.edit_dist_ratio),
            bleu: sum(|r| r.bleu),
            meteor: sum(|r| r.meteor),
            precision: sum(|r| r.precision),
            recall: sum(|r| r.recall),
            f1: sum(|r| r.f1),
        }
    }
}
