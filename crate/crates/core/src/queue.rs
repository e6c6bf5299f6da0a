//! Edit queue construction.
//!
//! A queue alternates generation triggers with runs of verbatim copies:
//! `Trigger, Copy.., Trigger, Copy.., Trigger`. Each trigger carries the
//! stop sign of the copy that follows it (the first `n` words of its text),
//! the final trigger has an empty stop sign and runs to end-of-sequence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::document::{normalize_whitespace, words, EditLabel, Page, Span};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueConfig {
    /// Spans shorter than this (in characters) are left to the backbone.
    pub min_copy_chars: usize,
    /// `n`: words of the next copy used as stop sign.
    pub stop_sign_words: usize,
    /// `n'`: generated words that must coincide with the next copy to skip it.
    pub skip_window_words: usize,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            min_copy_chars: 5,
            stop_sign_words: 3,
            skip_window_words: 5,
        }
    }
}

impl QueueConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stop_sign_words < 1 {
            return Err(Error::Config("stop_sign_words must be >= 1".into()));
        }
        if self.skip_window_words <= self.stop_sign_words {
            return Err(Error::Config("skip_window_words must be greater than stop_sign_words".into()));
        }
        if self.min_copy_chars < 1 {
            return Err(Error::Config("min_copy_chars must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EditAction {
    /// Let the backbone generate until `stop` is matched (or EOS when empty).
    Trigger {
        #[serde(rename = "stop")]
        stop_sign: Vec<String>,
    },
    /// Append span text verbatim.
    Copy {
        span_id: String,
        text: String,
        #[serde(rename = "stop")]
        stop_sign: Vec<String>,
    },
}

impl EditAction {
    pub fn is_trigger(&self) -> bool {
        matches!(self, EditAction::Trigger { .. })
    }

    pub fn stop_sign(&self) -> &[String] {
        match self {
            EditAction::Trigger { stop_sign } | EditAction::Copy { stop_sign, .. } => stop_sign,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditQueue {
    pub page_id: String,
    pub actions: Vec<EditAction>,
}

/// A span paired with the label it was assigned.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSpan<'a> {
    pub span: &'a Span,
    pub label: EditLabel,
}

/// Pairs page spans (already in reading order) with their labels.
pub fn label_spans<'a>(page: &'a Page, labels: &BTreeMap<String, EditLabel>) -> Result<Vec<LabeledSpan<'a>>> {
    page.spans
        .iter()
        .map(|span| {
            let label = *labels.get(&span.span_id).ok_or_else(|| Error::MissingLabel {
                page_id: page.page_id.clone(),
                span_id: span.span_id.clone(),
            })?;
            Ok(LabeledSpan { span, label })
        })
        .collect()
}

fn ensure_trigger(actions: &mut Vec<EditAction>) {
    if !actions.last().is_some_and(EditAction::is_trigger) {
        actions.push(EditAction::Trigger { stop_sign: Vec::new() });
    }
}

/// Builds the edit queue for one page.
///
/// KEEP spans long enough are copied, DELETE spans vanish, INSERT_LEFT spans
/// open a trigger and are then treated like KEEP. A span too short to copy is
/// left to the backbone, so a trigger is kept pending in front of whatever
/// follows it.
pub fn build_edit_queue(page_id: &str, spans: &[LabeledSpan<'_>], cfg: &QueueConfig) -> EditQueue {
    let mut actions = vec![EditAction::Trigger { stop_sign: Vec::new() }];
    for ls in spans {
        match ls.label {
            EditLabel::Delete => continue,
            EditLabel::InsertLeft => ensure_trigger(&mut actions),
            EditLabel::Keep => {}
        }
        let text = normalize_whitespace(&ls.span.text);
        if text.chars().count() < cfg.min_copy_chars {
            ensure_trigger(&mut actions);
            continue;
        }
        let stop_sign = words(&text)
            .into_iter()
            .take(cfg.stop_sign_words)
            .map(str::to_owned)
            .collect();
        actions.push(EditAction::Copy {
            span_id: ls.span.span_id.clone(),
            text,
            stop_sign,
        });
    }
    ensure_trigger(&mut actions);

    // Link each trigger to the copy right after it.
    for i in 0..actions.len() {
        if actions[i].is_trigger() {
            let next = match actions.get(i + 1) {
                Some(EditAction::Copy { stop_sign, .. }) => stop_sign.clone(),
                _ => Vec::new(),
            };
            actions[i] = EditAction::Trigger { stop_sign: next };
        }
    }
    EditQueue {
        page_id: page_id.to_owned(),
        actions,
    }
}

/// Builds a queue from a page and a span → label map.
pub fn build_page_queue(page: &Page, labels: &BTreeMap<String, EditLabel>, cfg: &QueueConfig) -> Result<EditQueue> {
    Ok(build_edit_queue(&page.page_id, &label_spans(page, labels)?, cfg))
}

/// The queue with no edits: one trigger that generates the whole page.
pub fn degenerate_queue(page_id: &str) -> EditQueue {
    EditQueue {
        page_id: page_id.to_owned(),
        actions: vec![EditAction::Trigger { stop_sign: Vec::new() }],
    }
}

impl EditQueue {
    pub fn copies(&self) -> impl Iterator<Item = (&str, &str)> {
        self.actions.iter().filter_map(|a| match a {
            EditAction::Copy { span_id, text, .. } => Some((span_id.as_str(), text.as_str())),
            EditAction::Trigger { .. } => None,
        })
    }

    /// Checks the structural invariants; returns the first violation.
    pub fn check_invariants(&self, cfg: &QueueConfig) -> std::result::Result<(), String> {
        let a = &self.actions;
        if !a.first().is_some_and(EditAction::is_trigger) {
            return Err("queue must start with a trigger".into());
        }
        if !a.last().is_some_and(EditAction::is_trigger) {
            return Err("queue must end with a trigger".into());
        }
        for (i, action) in a.iter().enumerate() {
            match action {
                EditAction::Trigger { stop_sign } => {
                    let expected: &[String] = match a.get(i + 1) {
                        Some(EditAction::Trigger { .. }) => return Err(format!("adjacent triggers at {i}")),
                        Some(EditAction::Copy { stop_sign, .. }) => stop_sign,
                        None => &[],
                    };
                    if stop_sign.as_slice() != expected {
                        return Err(format!("trigger {i} stop sign not linked to the next copy"));
                    }
                }
                EditAction::Copy { text, stop_sign, .. } => {
                    if text.chars().count() < cfg.min_copy_chars {
                        return Err(format!("copy {i} shorter than min_copy_chars"));
                    }
                    let prefix: Vec<&str> = words(text).into_iter().take(cfg.stop_sign_words).collect();
                    if stop_sign.iter().map(String::as_str).ne(prefix.iter().copied()) {
                        return Err(format!("copy {i} stop sign is not its first words"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueStats {
    pub copy_chars: usize,
    /// Copied characters over characters of all non-DELETE spans.
    pub copy_fraction: f64,
    pub trigger_count: usize,
    pub copy_count: usize,
    /// Whitespace tokens that will be copied rather than generated.
    pub copy_tokens: usize,
}

pub fn queue_stats(queue: &EditQueue, spans: &[LabeledSpan<'_>]) -> QueueStats {
    let mut copy_chars = 0;
    let mut copy_tokens = 0;
    let mut copy_count = 0;
    for (_, text) in queue.copies() {
        copy_chars += text.chars().count();
        copy_tokens += text.split_whitespace().count();
        copy_count += 1;
    }
    let total: usize = spans
        .iter()
        .filter(|s| s.label != EditLabel::Delete)
        .map(|s| normalize_whitespace(&s.span.text).chars().count())
        .sum();
    let copy_fraction = if total == 0 {
        0.0
    } else {
        (copy_chars as f64 / total as f64).min(1.0)
    };
    QueueStats {
        copy_chars,
        copy_fraction,
        trigger_count: queue.actions.iter().filter(|a| a.is_trigger()).count(),
        copy_count,
        copy_tokens,
    }
}
