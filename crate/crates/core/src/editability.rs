//! Span editability: token-level classifiers plus span-level voting.
//!
//! A classifier labels every whitespace token of every span. Voting then
//! collapses those token labels into one label per span, since editability is
//! treated as homogeneous within a span.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::document::{EditLabel, Page};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPrediction {
    pub span_id: String,
    pub token_index: usize,
    pub label: EditLabel,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Oracle,
    Heuristic,
    Remote,
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(ClassifierKind::Oracle),
            "heuristic" => Ok(ClassifierKind::Heuristic),
            "remote" => Ok(ClassifierKind::Remote),
            other => Err(format!("unknown classifier kind `{other}`")),
        }
    }
}

/// Rule table for [`Classifier::Heuristic`].
///
/// Rules are applied in order: DELETE for header/footer zones and page
/// numbers, INSERT_LEFT for math markers or off-modal font sizes, otherwise
/// KEEP. No global position feature is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicRules {
    /// Fraction of page height at the top treated as running header.
    pub header_frac: f64,
    /// Fraction of page height at the bottom treated as footer.
    pub footer_frac: f64,
    pub math_markers: Vec<char>,
    /// Points of deviation from the modal font size that mark a heading.
    pub font_delta: f64,
    pub page_number_pattern: String,
}

impl Default for HeuristicRules {
    fn default() -> Self {
        Self {
            header_frac: 0.05,
            footer_frac: 0.05,
            math_markers: vec!['$', '\\', '^', '_', '∑', '∫', '±', '×', '≤', '≥'],
            font_delta: 2.0,
            page_number_pattern: r"(?i)^(page\s+)?(\d{1,4}(\s*(/|of)\s*\d{1,4})?|m{0,3}(cm|cd|d?c{0,3})(xc|xl|l?x{0,3})(ix|iv|v?i{0,3}))$".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeuristicClassifier {
    rules: HeuristicRules,
    page_number: Regex,
}

impl HeuristicClassifier {
    pub fn new(rules: HeuristicRules) -> Result<Self> {
        if !(0.0..=1.0).contains(&rules.header_frac) || !(0.0..=1.0).contains(&rules.footer_frac) {
            return Err(Error::Config("header_frac and footer_frac must lie in [0, 1]".into()));
        }
        if !(rules.font_delta.is_finite() && rules.font_delta >= 0.0) {
            return Err(Error::Config("font_delta must be finite and >= 0".into()));
        }
        let page_number = Regex::new(&rules.page_number_pattern)
            .map_err(|e| Error::Config(format!("page_number_pattern: {e}")))?;
        Ok(Self { rules, page_number })
    }

    pub fn rules(&self) -> &HeuristicRules {
        &self.rules
    }

    fn label_span(&self, page: &Page, span: &crate::document::Span, modal: Option<f64>) -> (EditLabel, f64) {
        let cy = span.bbox.center_y();
        if cy < self.rules.header_frac * page.height || cy > (1.0 - self.rules.footer_frac) * page.height {
            return (EditLabel::Delete, 0.9);
        }
        if self.page_number.is_match(span.text.trim()) {
            return (EditLabel::Delete, 0.95);
        }
        if span.text.chars().any(|c| self.rules.math_markers.contains(&c)) {
            return (EditLabel::InsertLeft, 0.8);
        }
        if let (Some(fs), Some(modal)) = (span.font_size, modal) {
            if (fs - modal).abs() > self.rules.font_delta {
                return (EditLabel::InsertLeft, 0.7);
            }
        }
        (EditLabel::Keep, 0.6)
    }
}

/// Most frequent font size on the page, at 0.1pt resolution; ties go to the smaller size.
pub fn modal_font_size(page: &Page) -> Option<f64> {
    let mut counts: HashMap<i64, usize> = HashMap::new();
    for fs in page.spans.iter().filter_map(|s| s.font_size) {
        *counts.entry((fs * 10.0).round() as i64).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(q, _)| q as f64 / 10.0)
}

/// Client for a classifier served over HTTP.
#[derive(Debug, Clone)]
pub struct RemoteClassifier {
    pub endpoint: String,
    pub timeout: Duration,
    pub retries: u32,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    page: &'a Page,
}

#[derive(Deserialize)]
struct RemoteResponse {
    predictions: Vec<TokenPrediction>,
}

impl RemoteClassifier {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
            retries,
        }
    }

    fn classify(&self, page: &Page) -> Result<Vec<TokenPrediction>> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut last_err = String::new();
        for _ in 0..=self.retries {
            match agent.post(&self.endpoint).send_json(RemoteRequest { page }) {
                Ok(resp) => {
                    let body: RemoteResponse = resp
                        .into_json()
                        .map_err(|e| Error::Remote(format!("bad response body: {e}")))?;
                    check_predictions(page, &body.predictions)?;
                    return Ok(body.predictions);
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(Error::Remote(format!(
            "{} after {} attempt(s): {last_err}",
            self.endpoint,
            self.retries + 1
        )))
    }
}

#[derive(Debug, Clone)]
pub enum Classifier {
    /// Replays the annotated span labels.
    Oracle,
    Heuristic(HeuristicClassifier),
    Remote(RemoteClassifier),
}

impl Classifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::Oracle => ClassifierKind::Oracle,
            Classifier::Heuristic(_) => ClassifierKind::Heuristic,
            Classifier::Remote(_) => ClassifierKind::Remote,
        }
    }

    pub fn heuristic(rules: HeuristicRules) -> Result<Self> {
        HeuristicClassifier::new(rules).map(Classifier::Heuristic)
    }

    /// One prediction per token of every span.
    pub fn classify_page(&self, page: &Page) -> Result<Vec<TokenPrediction>> {
        match self {
            Classifier::Oracle => {
                let mut out = Vec::new();
                for span in &page.spans {
                    let label = span.label.ok_or_else(|| Error::MissingLabel {
                        page_id: page.page_id.clone(),
                        span_id: span.span_id.clone(),
                    })?;
                    out.extend(span_predictions(&span.span_id, span.token_count(), label, 1.0));
                }
                Ok(out)
            }
            Classifier::Heuristic(h) => {
                let modal = modal_font_size(page);
                Ok(page
                    .spans
                    .iter()
                    .flat_map(|span| {
                        let (label, conf) = h.label_span(page, span, modal);
                        span_predictions(&span.span_id, span.token_count(), label, conf)
                    })
                    .collect())
            }
            Classifier::Remote(r) => r.classify(page),
        }
    }
}

pub fn classify_page(page: &Page, classifier: &Classifier) -> Result<Vec<TokenPrediction>> {
    classifier.classify_page(page)
}

fn span_predictions(span_id: &str, tokens: usize, label: EditLabel, confidence: f64) -> impl Iterator<Item = TokenPrediction> + '_ {
    (0..tokens).map(move |token_index| TokenPrediction {
        span_id: span_id.to_owned(),
        token_index,
        label,
        confidence,
    })
}

fn check_predictions(page: &Page, predictions: &[TokenPrediction]) -> Result<()> {
    let counts: HashMap<&str, usize> = page
        .spans
        .iter()
        .map(|s| (s.span_id.as_str(), s.token_count()))
        .collect();
    for p in predictions {
        let Some(&n) = counts.get(p.span_id.as_str()) else {
            return Err(Error::BadPrediction(format!("unknown span `{}`", p.span_id)));
        };
        if p.token_index >= n {
            return Err(Error::BadPrediction(format!(
                "token {} of span `{}`, which has {n} token(s)",
                p.token_index, p.span_id
            )));
        }
        if !(0.0..=1.0).contains(&p.confidence) {
            return Err(Error::BadPrediction(format!(
                "confidence {} outside [0, 1] for span `{}`",
                p.confidence, p.span_id
            )));
        }
    }
    Ok(())
}

/// Tie-break priority: a wrong INSERT_LEFT only costs steps, a wrong KEEP
/// copies wrong text.
fn priority(label: EditLabel) -> u8 {
    match label {
        EditLabel::InsertLeft => 2,
        EditLabel::Delete => 1,
        EditLabel::Keep => 0,
    }
}

/// Majority label per span; ties resolve INSERT_LEFT > DELETE > KEEP.
/// Confidence is ignored.
pub fn vote_span_labels(predictions: &[TokenPrediction], page: &Page) -> Result<BTreeMap<String, EditLabel>> {
    check_predictions(page, predictions)?;
    let mut tallies: HashMap<&str, [usize; 3]> = HashMap::new();
    for p in predictions {
        tallies.entry(p.span_id.as_str()).or_default()[priority(p.label) as usize] += 1;
    }
    let mut out = BTreeMap::new();
    for span in &page.spans {
        let counts = tallies
            .get(span.span_id.as_str())
            .ok_or_else(|| Error::NoPredictions(span.span_id.clone()))?;
        let winner = EditLabel::ALL
            .into_iter()
            .max_by_key(|&l| (counts[priority(l) as usize], priority(l)))
            .expect("three labels");
        out.insert(span.span_id.clone(), winner);
    }
    Ok(out)
}

/// Convenience: classify then vote.
pub fn label_page(page: &Page, classifier: &Classifier) -> Result<BTreeMap<String, EditLabel>> {
    let preds = classifier.classify_page(page)?;
    vote_span_labels(&preds, page)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold tokens of this class.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierReport {
    pub micro_f1: f64,
    pub tokens: usize,
    pub per_class: BTreeMap<EditLabel, ClassScores>,
}

/// Token-weighted confusion counts, `counts[gold][predicted]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Confusion {
    counts: [[usize; 3]; 3],
}

fn idx(label: EditLabel) -> usize {
    match label {
        EditLabel::Keep => 0,
        EditLabel::Delete => 1,
        EditLabel::InsertLeft => 2,
    }
}

impl Confusion {
    pub fn merge(&mut self, other: &Confusion) {
        for g in 0..3 {
            for p in 0..3 {
                self.counts[g][p] += other.counts[g][p];
            }
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn report(&self) -> ClassifierReport {
        let total = self.total();
        let correct: usize = (0..3).map(|i| self.counts[i][i]).sum();
        // Single-label multiclass: micro P = micro R = micro F1 = accuracy.
        let micro_f1 = if total == 0 { 1.0 } else { correct as f64 / total as f64 };
        let per_class = EditLabel::ALL
            .into_iter()
            .map(|label| {
                let i = idx(label);
                let tp = self.counts[i][i] as f64;
                let predicted: usize = (0..3).map(|g| self.counts[g][i]).sum();
                let gold: usize = self.counts[i].iter().sum();
                let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let recall = if gold == 0 { 0.0 } else { tp / gold as f64 };
                let f1 = harmonic(precision, recall);
                (label, ClassScores { precision, recall, f1, support: gold })
            })
            .collect();
        ClassifierReport {
            micro_f1,
            tokens: total,
            per_class,
        }
    }
}

pub(crate) fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Token-level confusion of predicted vs gold span labels on one page.
pub fn eval_classifier(
    predicted: &BTreeMap<String, EditLabel>,
    gold: &BTreeMap<String, EditLabel>,
    page: &Page,
) -> Result<Confusion> {
    let pk: BTreeSet<&String> = predicted.keys().collect();
    let gk: BTreeSet<&String> = gold.keys().collect();
    if pk != gk {
        return Err(Error::KeyMismatch {
            only_predicted: pk.difference(&gk).map(|s| s.to_string()).collect(),
            only_gold: gk.difference(&pk).map(|s| s.to_string()).collect(),
        });
    }
    let mut confusion = Confusion::default();
    for (span_id, g) in gold {
        let span = page
            .span(span_id)
            .ok_or_else(|| Error::BadPrediction(format!("span `{span_id}` not on page `{}`", page.page_id)))?;
        confusion.counts[idx(*g)][idx(predicted[span_id])] += span.token_count();
    }
    Ok(confusion)
}

/// Gold labels carried on the spans, if every span has one.
pub fn gold_labels(page: &Page) -> Result<BTreeMap<String, EditLabel>> {
    page.spans
        .iter()
        .map(|s| {
            s.label.map(|l| (s.span_id.clone(), l)).ok_or_else(|| Error::MissingLabel {
                page_id: page.page_id.clone(),
                span_id: s.span_id.clone(),
            })
        })
        .collect()
}
