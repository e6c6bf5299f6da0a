//! Edit-queue execution against a token-generating backbone.
//!
//! The executor walks the queue: copies are appended verbatim, triggers hand
//! the current transcript to the backbone which fills in the middle until the
//! stop sign of the next copy shows up. Matched stop-sign words are trimmed
//! because the copy that follows re-supplies them from the PDF text; the
//! backbone still paid a step for each of them.
//!
//! While a trigger is active the backbone also watches a wider window of
//! `n'` words. When its recent output coincides with the pending copy, the
//! copy is redundant: it is discarded and generation continues toward the
//! following stop sign.

mod batch;
mod remote;
mod scripted;

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::document::{words, Page};
use crate::error::{BackboneError, Error, Result};
use crate::queue::{EditAction, EditQueue, QueueConfig};

pub use batch::{batch_execute, batch_execute_timed};
pub use remote::RemoteBackbone;
pub use scripted::{align_prefix, Deviation, ScriptFile, ScriptedBackbone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finish {
    StopMatched,
    Eos,
    Length,
    /// The skip window fired; the pending copy is redundant.
    Skip,
}

/// Words of the pending copy the backbone watches for a skip.
#[derive(Debug, Clone, Copy)]
pub struct SkipWatch<'a> {
    pub target: &'a [String],
    pub window: usize,
    /// Words already generated under the current trigger, before this call.
    pub history: &'a [String],
}

#[derive(Debug, Clone)]
pub struct GenerateRequest<'a> {
    pub session_id: &'a str,
    /// Current sequence; in batched calls it is left-padded with `pad_token`.
    pub prefix: &'a [String],
    pub image_ref: Option<&'a str>,
    pub stop_sign: &'a [String],
    pub skip: Option<SkipWatch<'a>>,
    pub max_new_tokens: usize,
    pub pad_token: &'a str,
}

impl GenerateRequest<'_> {
    /// The prefix with left padding removed.
    pub fn unpadded_prefix(&self) -> &[String] {
        let start = self.prefix.iter().take_while(|t| *t == self.pad_token).count();
        &self.prefix[start..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: Vec<String>,
    pub finish: Finish,
    /// Decoding steps spent in this call.
    pub steps: usize,
}

/// A token generator that fills in Markdown between copied spans.
pub trait Backbone: Send + Sync {
    fn generate(&self, req: &GenerateRequest<'_>) -> Result<Generation, BackboneError>;

    /// Lock-step generation for a batch of sequences.
    fn generate_batch(&self, reqs: &[GenerateRequest<'_>]) -> Vec<Result<Generation, BackboneError>> {
        reqs.iter().map(|r| self.generate(r)).collect()
    }
}

impl<B: Backbone + ?Sized> Backbone for &B {
    fn generate(&self, req: &GenerateRequest<'_>) -> Result<Generation, BackboneError> {
        (**self).generate(req)
    }

    fn generate_batch(&self, reqs: &[GenerateRequest<'_>]) -> Vec<Result<Generation, BackboneError>> {
        (**self).generate_batch(reqs)
    }
}

/// True iff `tail` ends with exactly `stop_sign`. An empty stop sign never matches.
pub fn stop_match<S: AsRef<str>>(tail: &[S], stop_sign: &[String]) -> bool {
    !stop_sign.is_empty()
        && tail.len() >= stop_sign.len()
        && tail[tail.len() - stop_sign.len()..]
            .iter()
            .zip(stop_sign)
            .all(|(a, b)| a.as_ref() == b)
}

/// True iff the last `window` words of `tail` occur contiguously in `target`.
pub fn skip_window_hit<S: AsRef<str>>(tail: &[S], target: &[String], window: usize) -> bool {
    if window == 0 || tail.len() < window || target.len() < window {
        return false;
    }
    let recent = &tail[tail.len() - window..];
    target
        .windows(window)
        .any(|w| w.iter().zip(recent).all(|(a, b)| a == b.as_ref()))
}

fn skip_hit_with_history(history: &[String], out: &[String], target: &[String], window: usize) -> bool {
    if out.len() >= window {
        return skip_window_hit(out, target, window);
    }
    let need = window - out.len();
    if history.len() < need {
        return false;
    }
    let joined: Vec<&str> = history[history.len() - need..]
        .iter()
        .chain(out)
        .map(String::as_str)
        .collect();
    skip_window_hit(&joined, target, window)
}

/// Outcome of the skip watch: drop the pending copy and keep generating.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipDecision {
    pub skipped_span_id: String,
    /// Number of leading queue actions to discard (the copy, plus a trigger
    /// that directly follows it).
    pub discard: usize,
    /// Stop sign the active trigger retargets to; empty means run to EOS.
    pub new_stop_sign: Vec<String>,
}

/// Checks whether the generated tail already covers the next copy in `pending`.
pub fn watch_skip<S: AsRef<str>>(tail: &[S], pending: &[EditAction], cfg: &ExecConfig) -> Option<SkipDecision> {
    let Some(EditAction::Copy { span_id, text, .. }) = pending.first() else {
        return None;
    };
    let target: Vec<String> = words(text).into_iter().map(str::to_owned).collect();
    if !skip_window_hit(tail, &target, cfg.skip_window_words) {
        return None;
    }
    let (discard, next) = match pending.get(1) {
        Some(EditAction::Trigger { .. }) => (2, pending.get(2)),
        other => (1, other),
    };
    let new_stop_sign = match next {
        Some(EditAction::Copy { stop_sign, .. }) => stop_sign.clone(),
        _ => Vec::new(),
    };
    Some(SkipDecision {
        skipped_span_id: span_id.clone(),
        discard,
        new_stop_sign,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    /// Generation budget per page, summed over all triggers.
    pub max_new_tokens: usize,
    /// Reserved word used for batch left padding.
    pub pad_token: String,
    pub stop_sign_words: usize,
    pub skip_window_words: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        let q = QueueConfig::default();
        Self {
            max_new_tokens: 1024,
            pad_token: "<pad>".into(),
            stop_sign_words: q.stop_sign_words,
            skip_window_words: q.skip_window_words,
        }
    }
}

impl ExecConfig {
    pub fn with_queue_config(mut self, q: &QueueConfig) -> Self {
        self.stop_sign_words = q.stop_sign_words;
        self.skip_window_words = q.skip_window_words;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens < 1 {
            return Err(Error::Config("max_new_tokens must be >= 1".into()));
        }
        if self.pad_token.is_empty() || self.pad_token.split_whitespace().count() != 1 {
            return Err(Error::Config("pad_token must be a single non-empty word".into()));
        }
        if self.skip_window_words <= self.stop_sign_words || self.stop_sign_words < 1 {
            return Err(Error::Config("need skip_window_words > stop_sign_words >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Copied,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptToken {
    pub word: String,
    pub provenance: Provenance,
}

/// Output sequence of one page, with provenance and step accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub page_id: String,
    pub tokens: Vec<TranscriptToken>,
    /// Steps the backbone spent, including stop-sign words later trimmed.
    pub generated_steps: usize,
    pub copied_tokens: usize,
    pub trimmed_tokens: usize,
    pub truncated: bool,
    pub skip_events: usize,
}

impl Transcript {
    pub fn new(page_id: &str) -> Self {
        Self {
            page_id: page_id.to_owned(),
            tokens: Vec::new(),
            generated_steps: 0,
            copied_tokens: 0,
            trimmed_tokens: 0,
            truncated: false,
            skip_events: 0,
        }
    }

    pub fn words(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.word.clone()).collect()
    }

    pub fn generated_tokens(&self) -> usize {
        self.tokens.iter().filter(|t| t.provenance == Provenance::Generated).count()
    }

    /// Detokenized Markdown.
    pub fn markdown(&self) -> String {
        let words: Vec<&str> = self.tokens.iter().map(|t| t.word.as_str()).collect();
        words.join(" ")
    }
}

/// Wall-clock time spent in each execution phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub generation: Duration,
    pub copy: Duration,
    pub generate_calls: usize,
}

struct Active {
    stop_sign: Vec<String>,
    generated: Vec<String>,
}

/// Per-page execution state, shared by the sequential and batched drivers.
pub(crate) struct PageRun<'a> {
    page: &'a Page,
    cfg: &'a ExecConfig,
    pending: VecDeque<EditAction>,
    pending_target: Vec<String>,
    active: Option<Active>,
    done: bool,
    pub(crate) transcript: Transcript,
    pub(crate) timings: PhaseTimings,
}

pub(crate) enum Next {
    Generate,
    Done,
}

impl<'a> PageRun<'a> {
    pub(crate) fn new(queue: &EditQueue, page: &'a Page, cfg: &'a ExecConfig) -> Result<Self> {
        if queue.page_id != page.page_id {
            return Err(Error::Config(format!(
                "queue for page `{}` executed against page `{}`",
                queue.page_id, page.page_id
            )));
        }
        for span in &page.spans {
            if span.text.split_whitespace().any(|w| w == cfg.pad_token) {
                return Err(Error::ReservedToken {
                    token: cfg.pad_token.clone(),
                    span_id: span.span_id.clone(),
                });
            }
        }
        for (span_id, text) in queue.copies() {
            if text.split_whitespace().any(|w| w == cfg.pad_token) {
                return Err(Error::ReservedToken {
                    token: cfg.pad_token.clone(),
                    span_id: span_id.to_owned(),
                });
            }
        }
        Ok(Self {
            page,
            cfg,
            pending: queue.actions.iter().cloned().collect(),
            pending_target: Vec::new(),
            active: None,
            done: false,
            transcript: Transcript::new(&page.page_id),
            timings: PhaseTimings::default(),
        })
    }

    fn copy(&mut self, text: &str) {
        let start = Instant::now();
        for w in text.split_whitespace() {
            self.transcript.tokens.push(TranscriptToken {
                word: w.to_owned(),
                provenance: Provenance::Copied,
            });
            self.transcript.copied_tokens += 1;
        }
        self.timings.copy += start.elapsed();
    }

    /// Applies copies until a trigger needs the backbone or the queue is exhausted.
    pub(crate) fn advance(&mut self) -> Next {
        loop {
            if self.done {
                return Next::Done;
            }
            if self.active.is_some() {
                self.refresh_target();
                return Next::Generate;
            }
            match self.pending.pop_front() {
                None => {
                    self.done = true;
                    return Next::Done;
                }
                Some(EditAction::Copy { text, .. }) => self.copy(&text),
                Some(EditAction::Trigger { stop_sign }) => {
                    self.active = Some(Active {
                        stop_sign,
                        generated: Vec::new(),
                    });
                }
            }
        }
    }

    fn refresh_target(&mut self) {
        self.pending_target = match self.pending.front() {
            Some(EditAction::Copy { text, .. }) => words(text).into_iter().map(str::to_owned).collect(),
            _ => Vec::new(),
        };
    }

    /// Request for the active trigger. `prefix` is the (possibly padded) sequence.
    pub(crate) fn request<'r>(&'r self, prefix: &'r [String]) -> GenerateRequest<'r> {
        let active = self.active.as_ref().expect("request without active trigger");
        let skip = (!self.pending_target.is_empty()).then_some(SkipWatch {
            target: &self.pending_target,
            window: self.cfg.skip_window_words,
            history: &active.generated,
        });
        GenerateRequest {
            session_id: &self.page.page_id,
            prefix,
            image_ref: self.page.image_ref.as_deref(),
            stop_sign: &active.stop_sign,
            skip,
            max_new_tokens: self.cfg.max_new_tokens.saturating_sub(self.transcript.generated_steps),
            pad_token: &self.cfg.pad_token,
        }
    }

    fn fail(&self, source: BackboneError) -> Error {
        Error::Backbone {
            page_id: self.page.page_id.clone(),
            source,
            partial: Box::new(self.transcript.clone()),
        }
    }

    pub(crate) fn apply(&mut self, result: Result<Generation, BackboneError>, elapsed: Duration) -> Result<()> {
        self.timings.generation += elapsed;
        self.timings.generate_calls += 1;
        let gen = result.map_err(|e| self.fail(e))?;
        if gen.tokens.iter().any(|t| *t == self.cfg.pad_token) {
            return Err(self.fail(BackboneError::Protocol("backbone emitted the pad token".into())));
        }
        let active = self.active.as_mut().expect("apply without active trigger");
        self.transcript.generated_steps += gen.steps;
        for w in &gen.tokens {
            self.transcript.tokens.push(TranscriptToken {
                word: w.clone(),
                provenance: Provenance::Generated,
            });
        }
        active.generated.extend(gen.tokens);

        match gen.finish {
            Finish::StopMatched => {
                if !stop_match(&active.generated, &active.stop_sign) {
                    return Err(self.fail(BackboneError::Protocol(
                        "finish=stop but output does not end with the stop sign".into(),
                    )));
                }
                let k = active.stop_sign.len();
                let keep = self.transcript.tokens.len() - k;
                self.transcript.tokens.truncate(keep);
                self.transcript.trimmed_tokens += k;
                self.active = None;
            }
            Finish::Skip => {
                let pending: Vec<EditAction> = self.pending.iter().take(3).cloned().collect();
                let Some(decision) = watch_skip(&active.generated, &pending, self.cfg) else {
                    return Err(self.fail(BackboneError::Protocol(
                        "finish=skip but the skip window does not match the pending copy".into(),
                    )));
                };
                self.pending.drain(..decision.discard);
                active.stop_sign = decision.new_stop_sign;
                self.transcript.skip_events += 1;
            }
            Finish::Eos => {
                self.active = None;
                while let Some(action) = self.pending.pop_front() {
                    if let EditAction::Copy { text, .. } = action {
                        self.copy(&text);
                    }
                }
                self.done = true;
            }
            Finish::Length => {
                self.active = None;
                self.transcript.truncated = true;
                self.done = true;
            }
        }
        Ok(())
    }

    pub(crate) fn finish(self) -> (Transcript, PhaseTimings) {
        (self.transcript, self.timings)
    }
}

/// Runs one queue to completion and returns the transcript.
pub fn execute(queue: &EditQueue, page: &Page, backbone: &dyn Backbone, cfg: &ExecConfig) -> Result<Transcript> {
    execute_timed(queue, page, backbone, cfg).map(|(t, _)| t)
}

/// Like [`execute`], also returning per-phase wall-clock timings.
pub fn execute_timed(
    queue: &EditQueue,
    page: &Page,
    backbone: &dyn Backbone,
    cfg: &ExecConfig,
) -> Result<(Transcript, PhaseTimings)> {
    let mut run = PageRun::new(queue, page, cfg)?;
    while let Next::Generate = run.advance() {
        let prefix = run.transcript.words();
        let start = Instant::now();
        let result = backbone.generate(&run.request(&prefix));
        run.apply(result, start.elapsed())?;
    }
    Ok(run.finish())
}
