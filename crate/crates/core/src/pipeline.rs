//! Corpus driver: classify, vote, build queues, execute.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::document::{check_reading_order, EditLabel, OrderAnomaly, Page};
use crate::editability::{label_page, Classifier};
use crate::error::Result;
use crate::executor::{batch_execute_timed, execute_timed, Backbone, ExecConfig, PhaseTimings, Transcript};
use crate::metrics::RunRecord;
use crate::par::{self, Parallelism};
use crate::queue::{build_page_queue, degenerate_queue, EditQueue, QueueConfig};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub classifier: Classifier,
    pub queue: QueueConfig,
    pub exec: ExecConfig,
    /// Pages per lock-step batch; 1 runs each page on its own.
    pub batch_size: usize,
    pub parallelism: Parallelism,
    /// When false every page gets the degenerate single-trigger queue.
    pub edit: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            classifier: Classifier::Oracle,
            queue: QueueConfig::default(),
            exec: ExecConfig::default(),
            batch_size: 1,
            parallelism: Parallelism::default(),
            edit: true,
        }
    }
}

/// Seconds spent per phase on one page.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PageTimings {
    pub classify_s: f64,
    pub queue_s: f64,
    pub generation_s: f64,
    pub copy_s: f64,
    pub generate_calls: usize,
}

impl PageTimings {
    pub fn total_s(&self) -> f64 {
        self.classify_s + self.queue_s + self.generation_s + self.copy_s
    }
}

#[derive(Debug, Clone)]
pub struct PageOutcome {
    pub labels: BTreeMap<String, EditLabel>,
    pub queue: EditQueue,
    pub transcript: Transcript,
    pub timings: PageTimings,
    pub anomalies: Vec<OrderAnomaly>,
}

impl PageOutcome {
    pub fn record(&self) -> RunRecord {
        RunRecord::from_transcript(&self.transcript, self.timings.total_s())
    }
}

struct Prepared {
    labels: BTreeMap<String, EditLabel>,
    queue: EditQueue,
    classify: Duration,
    build: Duration,
}

fn prepare(page: &Page, cfg: &PipelineConfig) -> Result<Prepared> {
    if !cfg.edit {
        return Ok(Prepared {
            labels: BTreeMap::new(),
            queue: degenerate_queue(&page.page_id),
            classify: Duration::ZERO,
            build: Duration::ZERO,
        });
    }
    let start = Instant::now();
    let labels = label_page(page, &cfg.classifier)?;
    let classify = start.elapsed();
    let start = Instant::now();
    let queue = build_page_queue(page, &labels, &cfg.queue)?;
    Ok(Prepared {
        labels,
        queue,
        classify,
        build: start.elapsed(),
    })
}

fn outcome(page: &Page, prep: Prepared, transcript: Transcript, phases: PhaseTimings) -> PageOutcome {
    PageOutcome {
        labels: prep.labels,
        queue: prep.queue,
        transcript,
        timings: PageTimings {
            classify_s: prep.classify.as_secs_f64(),
            queue_s: prep.build.as_secs_f64(),
            generation_s: phases.generation.as_secs_f64(),
            copy_s: phases.copy.as_secs_f64(),
            generate_calls: phases.generate_calls,
        },
        anomalies: check_reading_order(page),
    }
}

fn run_page(page: &Page, backbone: &dyn Backbone, cfg: &PipelineConfig) -> Result<PageOutcome> {
    let prep = prepare(page, cfg)?;
    let (transcript, phases) = execute_timed(&prep.queue, page, backbone, &cfg.exec)?;
    Ok(outcome(page, prep, transcript, phases))
}

fn run_batch(pages: &[Page], backbone: &dyn Backbone, cfg: &PipelineConfig) -> Vec<Result<PageOutcome>> {
    let prepared: Vec<Result<Prepared>> = pages.iter().map(|p| prepare(p, cfg)).collect();
    if prepared.iter().any(|p| p.is_err()) {
        return pages.iter().map(|p| run_page(p, backbone, cfg)).collect();
    }
    let prepared: Vec<Prepared> = prepared.into_iter().map(|p| p.unwrap()).collect();
    let queues: Vec<EditQueue> = prepared.iter().map(|p| p.queue.clone()).collect();
    match batch_execute_timed(&queues, pages, backbone, &cfg.exec) {
        Ok(done) => pages
            .iter()
            .zip(prepared)
            .zip(done)
            .map(|((page, prep), (t, phases))| Ok(outcome(page, prep, t, phases)))
            .collect(),
        // Rerun one by one so each failure is attributed to its own page.
        Err(_) => pages.iter().map(|p| run_page(p, backbone, cfg)).collect(),
    }
}

/// Runs every page; results are in input order with one status per page.
pub fn run_corpus(pages: &[Page], backbone: &dyn Backbone, cfg: &PipelineConfig) -> Vec<Result<PageOutcome>> {
    if cfg.batch_size <= 1 {
        par::map(pages, cfg.parallelism, |p| run_page(p, backbone, cfg))
    } else {
        par::map_chunks(pages, cfg.batch_size, cfg.parallelism, |chunk| run_batch(chunk, backbone, cfg))
            .into_iter()
            .flatten()
            .collect()
    }
}

/// Runs the corpus and fails on the first page error.
pub fn run_corpus_strict(pages: &[Page], backbone: &dyn Backbone, cfg: &PipelineConfig) -> Result<Vec<PageOutcome>> {
    run_corpus(pages, backbone, cfg).into_iter().collect()
}
