//! Seeded synthetic corpus with a controlled copyable fraction.
//!
//! Each page mixes copyable prose (long KEEP line spans) with content a
//! backbone has to produce itself: display formulas split into short
//! INSERT_LEFT fragments and tables of short KEEP cells, both below the
//! copy threshold. Running headers and page numbers sit in the margin
//! zones and are labelled DELETE. Some pages carry a caption that is
//! labelled DELETE but looks like prose, so a layout heuristic keeps it.
//!
//! `copy_fraction` is the share of reference words that belong to copyable
//! spans. Prose is grouped into long paragraphs so the per-trigger stop-sign
//! cost stays small.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::document::{BBox, EditLabel, Page, Span};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub pages: usize,
    pub copy_fraction: f64,
    pub seed: u64,
    /// Reference words per page, margins excluded.
    pub words_per_page: usize,
    /// Target words per paragraph.
    pub paragraph_words: usize,
    /// Probability that a page is laid out in two columns.
    pub two_column_prob: f64,
    pub caption_prob: f64,
    pub page_id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            pages: 20,
            copy_fraction: 0.35,
            seed: 7,
            words_per_page: 360,
            paragraph_words: 80,
            two_column_prob: 0.5,
            caption_prob: 0.3,
            page_id_prefix: "synth".into(),
        }
    }
}

const PAGE_W: f64 = 600.0;
const PAGE_H: f64 = 800.0;
const BODY_TOP: f64 = 60.0;
const BODY_BOTTOM: f64 = 740.0;
const BODY_FONT: f64 = 10.0;

const VOCAB: &[&str] = &[
    "model", "data", "we", "the", "of", "results", "show", "that", "method", "learning", "layout", "document",
    "text", "page", "tokens", "training", "approach", "performance", "baseline", "markdown", "conversion",
    "quality", "accuracy", "error", "sequence", "input", "output", "span", "copy", "generation", "decoding",
    "latency", "steps", "fraction", "improves", "reduces", "across", "datasets", "experiments", "proposed",
    "framework", "evaluate", "benchmark", "significant", "compared", "with", "in", "for", "on", "and", "is",
    "are", "this", "our", "each", "section", "figure", "table", "formula", "heading", "paragraph", "structure",
    "reading", "order", "columns", "content", "recognition", "extraction", "academic", "papers", "arxiv",
    "source", "labels", "editable", "queue", "trigger", "stop", "sign", "window", "overlap", "speed", "cost",
];

const HEADINGS: &[&str] = &[
    "Introduction", "Related Work", "Method", "Experiments", "Results", "Analysis", "Discussion",
    "Conclusion", "Ablation Study", "Evaluation Setup",
];

const FRAGMENTS: &[&str] = &[
    "x^2", "a_i", "y_t", "\\pi", "≤", "≥", "±", "∑", "∫", "×", "z^n", "w_k", "$n$", "\\mu", "h_t", "e^x",
];

const CELLS: &[&str] = &["0.93", "0.87", "1.25", "4.10", "2.71", "0.55", "ours", "base", "gpt", "acc", "f1", "bleu"];

const HEADERS: &[&str] = &["Preprint under review", "Workshop track paper", "Technical report draft"];

enum Row {
    Line(String),
    Heading(String),
    Caption(String),
    /// Short spans side by side, with their label.
    Cells(Vec<String>, EditLabel),
}

struct Layout {
    two_column: bool,
    pitch: f64,
    /// Rows placed in the left column before moving right.
    split_after: usize,
    placed: usize,
    col: usize,
    y: f64,
}

impl Layout {
    fn next_row(&mut self) -> (f64, f64, f64) {
        if self.two_column && self.col == 0 && self.placed == self.split_after {
            self.col = 1;
            self.y = BODY_TOP;
        }
        self.placed += 1;
        let (x0, x1) = match (self.two_column, self.col) {
            (false, _) => (60.0, 540.0),
            (true, 0) => (50.0, 290.0),
            (true, _) => (310.0, 550.0),
        };
        let y = self.y;
        self.y += self.pitch;
        (x0, x1, y)
    }
}

fn prose(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect()
}

/// Splits `words` into lines of about `per_line`, none shorter than three words.
fn lines(words: &[String], per_line: usize) -> Vec<String> {
    let mut out: Vec<Vec<String>> = words.chunks(per_line).map(<[String]>::to_vec).collect();
    if out.len() > 1 && out.last().unwrap().len() < 3 {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().extend(tail);
    }
    out.into_iter().map(|l| l.join(" ")).collect()
}

fn split_even(total: usize, parts: usize) -> Vec<usize> {
    if parts == 0 {
        return Vec::new();
    }
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

/// Fills about `budget` reference words with formulas and tables.
fn non_copy_block(rng: &mut ChaCha8Rng, budget: usize, rows: &mut Vec<Row>, md: &mut Vec<String>) {
    let mut left = budget;
    while left >= 3 {
        if left >= 14 && rng.gen_bool(0.5) {
            let k = rng.gen_range(2..=3);
            // Leave at least a minimal formula's worth for the remainder.
            let r = ((left - 3) / (2 * k + 1)).min(rng.gen_range(2..=5));
            let mut lines_md = Vec::new();
            for _ in 0..r {
                let cells: Vec<String> = (0..k).map(|_| CELLS.choose(rng).unwrap().to_string()).collect();
                lines_md.push(format!("| {} |", cells.join(" | ")));
                rows.push(Row::Cells(cells, EditLabel::Keep));
            }
            md.push(lines_md.join("\n"));
            left -= r * (2 * k + 1);
            continue;
        }
        let mut f = (left - 2).min(rng.gen_range(3..=10));
        if left - (f + 2) < 3 {
            f = left - 2;
        }
        let frags: Vec<String> = (0..f).map(|_| FRAGMENTS.choose(rng).unwrap().to_string()).collect();
        for chunk in frags.chunks(5) {
            rows.push(Row::Cells(chunk.to_vec(), EditLabel::InsertLeft));
        }
        md.push(format!("$$ {} $$", frags.join(" ")));
        left -= f + 2;
    }
}

fn build_page(rng: &mut ChaCha8Rng, cfg: &SynthConfig, index: usize) -> Page {
    let page_id = format!("{}-{:03}", cfg.page_id_prefix, index);
    let two_column = rng.gen_bool(cfg.two_column_prob);
    let per_line = if two_column { 6 } else { 12 };

    let total = cfg.words_per_page;
    let copy_target = (cfg.copy_fraction * total as f64).round() as usize;
    let paragraphs = if copy_target == 0 {
        0
    } else {
        ((copy_target as f64 / cfg.paragraph_words as f64).round() as usize).max(1)
    };
    let para_sizes = split_even(copy_target, paragraphs);
    let gap_sizes = split_even(total - copy_target, paragraphs + 1);

    let mut rows = Vec::new();
    let mut md: Vec<String> = Vec::new();
    let caption_at = rng.gen_bool(cfg.caption_prob).then(|| rng.gen_range(0..=paragraphs));
    for (slot, gap) in gap_sizes.iter().enumerate() {
        if caption_at == Some(slot) {
            let mut words = vec![format!("Table {}:", slot + 1)];
            words.extend(prose(rng, 5));
            rows.push(Row::Caption(words.join(" ")));
        }
        let mut gap = *gap;
        let heading = (slot < paragraphs && rng.gen_bool(0.5)).then(|| *HEADINGS.choose(rng).unwrap());
        if heading.is_some() {
            gap = gap.saturating_sub(1);
        }
        non_copy_block(rng, gap, &mut rows, &mut md);
        if slot == paragraphs {
            break;
        }
        let mut size = para_sizes[slot];
        if let Some(h) = heading {
            size = size.saturating_sub(h.split_whitespace().count()).max(3);
            rows.push(Row::Heading(h.to_owned()));
            md.push(format!("## {h}"));
        }
        let words = prose(rng, size);
        for line in lines(&words, per_line) {
            rows.push(Row::Line(line));
        }
        md.push(words.join(" "));
    }

    let per_column_rows = if two_column { rows.len().div_ceil(2) } else { rows.len() };
    let pitch = ((BODY_BOTTOM - BODY_TOP) / per_column_rows.max(1) as f64).min(14.0);
    let height = pitch * 0.75;
    let mut layout = Layout {
        two_column,
        pitch,
        split_after: per_column_rows,
        placed: 0,
        col: 0,
        y: BODY_TOP,
    };

    let mut spans = Vec::new();
    let mut push = |text: String, bbox: BBox, label: EditLabel, font: f64| {
        let order = spans.len() as i64;
        spans.push(Span {
            span_id: format!("{page_id}-s{order:03}"),
            text,
            bbox,
            order,
            label: Some(label),
            font_size: Some(font),
        });
    };
    let header = HEADERS.choose(rng).unwrap().to_string();
    push(header, BBox::new(60.0, 12.0, 540.0, 22.0), EditLabel::Delete, 8.0);
    for row in rows {
        let (x0, x1, y) = layout.next_row();
        let bbox = BBox::new(x0, y, x1, y + height);
        match row {
            Row::Line(t) => push(t, bbox, EditLabel::Keep, BODY_FONT),
            Row::Heading(t) => push(t, bbox, EditLabel::InsertLeft, 14.0),
            Row::Caption(t) => push(t, bbox, EditLabel::Delete, 9.0),
            Row::Cells(cells, label) => {
                // Cells stay inside the left half on single-column pages.
                let right = if two_column { x1 } else { 290.0 };
                let w = (right - x0) / cells.len() as f64;
                for (i, c) in cells.into_iter().enumerate() {
                    let cx = x0 + w * i as f64;
                    push(c, BBox::new(cx, y, cx + w * 0.8, y + height), label, BODY_FONT);
                }
            }
        }
    }
    push((index + 1).to_string(), BBox::new(290.0, 770.0, 310.0, 780.0), EditLabel::Delete, 8.0);

    Page {
        page_id,
        width: PAGE_W,
        height: PAGE_H,
        image_ref: None,
        reference_markdown: Some(md.join("\n\n")),
        spans,
    }
}

/// Generates `cfg.pages` labelled pages with reference Markdown.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<Page>> {
    if !(0.0..=1.0).contains(&cfg.copy_fraction) {
        return Err(Error::Config("copy_fraction must be in [0, 1]".into()));
    }
    if !(0.0..=1.0).contains(&cfg.two_column_prob) || !(0.0..=1.0).contains(&cfg.caption_prob) {
        return Err(Error::Config("probabilities must be in [0, 1]".into()));
    }
    if cfg.words_per_page < 10 || cfg.paragraph_words < 10 {
        return Err(Error::Config("words_per_page and paragraph_words must be >= 10".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.pages)
        .map(|i| build_page(&mut rng, cfg, i).validate())
        .collect()
}
