use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use layedit::document::check_reading_order;
use layedit::editability::{eval_classifier, gold_labels, label_page, Confusion};
use layedit::executor::ScriptFile;
use layedit::metrics::{efficiency_report, efficiency_table, quality_table, QualityReport};
use layedit::queue::{label_spans, queue_stats};
use layedit::synth::{synth_corpus, SynthConfig};
use layedit::{
    build_page_queue, ingest_spans, par, run_corpus, serialize_pages, Backbone, EditLabel, Page, PageOutcome,
    RemoteBackbone, ScriptedBackbone, Transcript,
};

use crate::config::{BackboneKind, RunConfig};
use crate::{Invalid, PageFailures};

/// Reads a span file and orders its pages by `page_id`.
pub fn load_pages(path: &Path) -> anyhow::Result<Vec<Page>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pages = ingest_spans(&bytes).with_context(|| format!("in {}", path.display()))?;
    pages.sort_by(|a, b| a.page_id.cmp(&b.page_id));
    Ok(pages)
}

/// Scripted backbones replay the script file, falling back to each page's
/// reference Markdown. Every page must end up with a script.
pub fn backbone(cfg: &RunConfig, pages: &[Page]) -> anyhow::Result<Box<dyn Backbone>> {
    match cfg.backbone {
        BackboneKind::Remote => {
            let url = cfg.endpoint.clone().ok_or_else(|| Invalid("missing backbone endpoint".into()))?;
            Ok(Box::new(RemoteBackbone::new(url, cfg.timeout(), cfg.retries)))
        }
        BackboneKind::Scripted => {
            let mut file = match &cfg.script {
                Some(path) => {
                    let bytes = fs::read(path).with_context(|| format!("reading script {}", path.display()))?;
                    serde_json::from_slice::<ScriptFile>(&bytes)
                        .map_err(|e| Invalid(format!("script {}: {e}", path.display())))?
                }
                None => ScriptFile::default(),
            };
            for p in pages {
                if let Some(md) = &p.reference_markdown {
                    file.pages.entry(p.page_id.clone()).or_insert_with(|| md.clone());
                }
            }
            let missing: Vec<&str> = pages
                .iter()
                .map(|p| p.page_id.as_str())
                .filter(|id| !file.pages.contains_key(*id))
                .collect();
            if !missing.is_empty() {
                bail!(Invalid(format!(
                    "no script or reference_markdown for page(s): {}",
                    missing.join(", ")
                )));
            }
            Ok(Box::new(ScriptedBackbone::from_scripts(file.pages, file.deviations)))
        }
    }
}

fn run(cfg: &RunConfig, pages: &[Page], backbone: &dyn Backbone, edit: bool) -> anyhow::Result<Vec<layedit::Result<PageOutcome>>> {
    let pipeline = cfg.pipeline(edit)?;
    Ok(par::with_threads(cfg.threads, || run_corpus(pages, backbone, &pipeline)))
}

/// File stem for a page id; anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn file_stem(page_id: &str) -> String {
    let stem: String = page_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    if stem.is_empty() || stem.chars().all(|c| c == '.') {
        format!("_{stem}")
    } else {
        stem
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    page_id: &'a str,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    transcript: Option<&'a Transcript>,
}

#[derive(Serialize)]
struct StatusLine {
    page_id: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn transform(cfg: &RunConfig, spans: &Path, out: Option<PathBuf>, no_edit: bool) -> anyhow::Result<()> {
    cfg.validate()?;
    let pages = load_pages(spans)?;
    let stems: BTreeMap<String, &str> = pages.iter().map(|p| (file_stem(&p.page_id), p.page_id.as_str())).collect();
    if stems.len() != pages.len() {
        bail!(Invalid("page ids collide after mapping to file names".into()));
    }
    let backbone = backbone(cfg, &pages)?;
    let results = run(cfg, &pages, backbone.as_ref(), !no_edit)?;

    let out = out.unwrap_or_else(|| cfg.out_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut summary = Vec::with_capacity(pages.len());
    let mut failed = 0;
    for (page, result) in pages.iter().zip(&results) {
        let stem = file_stem(&page.page_id);
        let (sidecar, line) = match result {
            Ok(o) => {
                fs::write(out.join(format!("{stem}.md")), o.transcript.markdown())?;
                let sidecar = Sidecar {
                    page_id: &page.page_id,
                    status: "ok",
                    error: None,
                    transcript: Some(&o.transcript),
                };
                (sidecar, StatusLine { page_id: page.page_id.clone(), status: "ok", error: None })
            }
            Err(e) => {
                failed += 1;
                let sidecar = Sidecar {
                    page_id: &page.page_id,
                    status: "error",
                    error: Some(e.to_string()),
                    transcript: e.partial_transcript(),
                };
                let line = StatusLine {
                    page_id: page.page_id.clone(),
                    status: "error",
                    error: Some(e.to_string()),
                };
                (sidecar, line)
            }
        };
        fs::write(out.join(format!("{stem}.transcript.json")), serde_json::to_vec_pretty(&sidecar)?)?;
        summary.push(line);
    }
    fs::write(out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;

    let mut stdout = std::io::stdout().lock();
    for line in &summary {
        match &line.error {
            None => writeln!(stdout, "ok     {}", line.page_id)?,
            Some(e) => writeln!(stdout, "error  {}: {e}", line.page_id)?,
        }
    }
    writeln!(stdout, "{} page(s), {} failed, output in {}", pages.len(), failed, out.display())?;
    if failed > 0 {
        let first = results.into_iter().find_map(Result::err).expect("a failed page");
        return Err(anyhow::Error::new(first).context(PageFailures(failed)));
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    efficiency: layedit::metrics::EfficiencyReport,
    quality: BTreeMap<String, QualityReport>,
}

pub fn bench(cfg: &RunConfig, spans: &Path, out: Option<PathBuf>) -> anyhow::Result<()> {
    cfg.validate()?;
    let pages = load_pages(spans)?;
    let backbone = backbone(cfg, &pages)?;
    let mut runs = Vec::new();
    for edit in [false, true] {
        let outcomes: Vec<PageOutcome> = run(cfg, &pages, backbone.as_ref(), edit)?
            .into_iter()
            .collect::<layedit::Result<_>>()?;
        runs.push(outcomes);
    }
    let records = |o: &[PageOutcome]| o.iter().map(PageOutcome::record).collect::<Vec<_>>();
    let efficiency = efficiency_report(&records(&runs[0]), &records(&runs[1]))?;

    let mut quality = BTreeMap::new();
    if pages.iter().all(|p| p.reference_markdown.is_some()) {
        for (name, outcomes) in [("baseline", &runs[0]), ("edit_queue", &runs[1])] {
            let scores: Vec<QualityReport> = pages
                .iter()
                .zip(outcomes)
                .map(|(p, o)| QualityReport::score(&o.transcript.markdown(), p.reference_markdown.as_deref().unwrap_or("")))
                .collect();
            quality.insert(name.to_string(), QualityReport::mean(&scores));
        }
    }

    print!("{}", efficiency_table("edit_queue", &efficiency));
    if !quality.is_empty() {
        println!();
        let rows: Vec<(String, QualityReport)> = quality.iter().map(|(k, v)| (k.clone(), *v)).collect();
        print!("{}", quality_table(&rows));
    }
    if let Some(path) = out {
        let report = BenchReport { efficiency, quality };
        fs::write(&path, serde_json::to_vec_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    page_id: String,
    #[serde(flatten)]
    scores: QualityReport,
}

#[derive(Serialize)]
struct EvalReport {
    pages: Vec<EvalRow>,
    mean: QualityReport,
}

fn markdown_files(dir: &Path) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "md") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_owned(), path);
            }
        }
    }
    Ok(out)
}

pub fn eval(pred: &Path, reference: &Path, out: Option<PathBuf>) -> anyhow::Result<()> {
    let preds = markdown_files(pred)?;
    let refs = markdown_files(reference)?;
    let only_pred: Vec<&String> = preds.keys().filter(|k| !refs.contains_key(*k)).collect();
    let only_ref: Vec<&String> = refs.keys().filter(|k| !preds.contains_key(*k)).collect();
    if !only_pred.is_empty() || !only_ref.is_empty() {
        bail!(Invalid(format!(
            "page sets differ; only in pred: {only_pred:?}, only in ref: {only_ref:?}"
        )));
    }
    let pairs: Vec<(&String, &PathBuf, &PathBuf)> = refs.iter().map(|(k, r)| (k, &preds[k], r)).collect();
    let scored: Vec<anyhow::Result<EvalRow>> = par::map(&pairs, layedit::Parallelism::Parallel, |(id, p, r)| {
        let p = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r = fs::read_to_string(r).with_context(|| format!("reading {}", r.display()))?;
        Ok(EvalRow {
            page_id: (*id).clone(),
            scores: QualityReport::score(&p, &r),
        })
    });
    let rows: Vec<EvalRow> = scored.into_iter().collect::<anyhow::Result<_>>()?;
    let mean = QualityReport::mean(&rows.iter().map(|r| r.scores).collect::<Vec<_>>());
    let mut table: Vec<(String, QualityReport)> = rows.iter().map(|r| (r.page_id.clone(), r.scores)).collect();
    table.push(("mean".into(), mean));
    print!("{}", quality_table(&table));
    if let Some(path) = out {
        let report = EvalReport { pages: rows, mean };
        fs::write(&path, serde_json::to_vec_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Span labels per page, as written by `classify` and read by `queue build`.
#[derive(Debug, Serialize, Deserialize)]
pub struct LabelFile {
    pub pages: Vec<PageLabels>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PageLabels {
    pub page_id: String,
    pub labels: BTreeMap<String, EditLabel>,
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().lock().write_all(bytes)?),
    }
}

pub fn classify(cfg: &RunConfig, spans: &Path, out: Option<PathBuf>) -> anyhow::Result<()> {
    cfg.validate()?;
    let pages = load_pages(spans)?;
    let classifier = cfg.classifier()?;
    let labelled: Vec<layedit::Result<BTreeMap<String, EditLabel>>> =
        par::with_threads(cfg.threads, || par::map(&pages, layedit::Parallelism::Parallel, |p| label_page(p, &classifier)));
    let mut file = LabelFile { pages: Vec::new() };
    let mut confusion = Confusion::default();
    let mut scored = true;
    for (page, labels) in pages.iter().zip(labelled) {
        let labels = labels?;
        match gold_labels(page) {
            Ok(gold) => confusion.merge(&eval_classifier(&labels, &gold, page)?),
            Err(_) => scored = false,
        }
        file.pages.push(PageLabels {
            page_id: page.page_id.clone(),
            labels,
        });
    }
    let mut bytes = serde_json::to_vec_pretty(&file)?;
    bytes.push(b'\n');
    write_output(out.as_deref(), &bytes)?;
    if scored && !pages.is_empty() {
        let r = confusion.report();
        eprintln!("micro-F1 against gold labels: {:.4} over {} tokens", r.micro_f1, r.tokens);
    }
    Ok(())
}

pub fn queue_build(cfg: &RunConfig, spans: &Path, labels: Option<PathBuf>, dump: bool, out: Option<PathBuf>) -> anyhow::Result<()> {
    cfg.validate()?;
    let pages = load_pages(spans)?;
    let given: Option<BTreeMap<String, BTreeMap<String, EditLabel>>> = match labels {
        Some(path) => {
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let file: LabelFile =
                serde_json::from_slice(&bytes).map_err(|e| Invalid(format!("labels {}: {e}", path.display())))?;
            Some(file.pages.into_iter().map(|p| (p.page_id, p.labels)).collect())
        }
        None => None,
    };
    let classifier = cfg.classifier()?;
    let qcfg = cfg.queue();
    let mut text = Vec::new();
    for page in &pages {
        let labels = match &given {
            Some(map) => map
                .get(&page.page_id)
                .cloned()
                .ok_or_else(|| Invalid(format!("labels file has no entry for page `{}`", page.page_id)))?,
            None => label_page(page, &classifier)?,
        };
        let queue = build_page_queue(page, &labels, &qcfg)?;
        if dump {
            serde_json::to_writer(&mut text, &queue)?;
            text.push(b'\n');
        } else {
            let s = queue_stats(&queue, &label_spans(page, &labels)?);
            writeln!(
                text,
                "{:<24} triggers {:>3}  copies {:>3}  copy_tokens {:>5}  copy_fraction {:.3}",
                page.page_id, s.trigger_count, s.copy_count, s.copy_tokens, s.copy_fraction
            )?;
        }
    }
    write_output(out.as_deref(), &text)
}

pub fn validate(cfg: &RunConfig, spans: &Path) -> anyhow::Result<()> {
    cfg.validate()?;
    let pages = load_pages(spans)?;
    let mut spans_total = 0;
    let mut labelled = 0;
    for page in &pages {
        spans_total += page.spans.len();
        if gold_labels(page).is_ok() {
            labelled += 1;
        }
        for a in check_reading_order(page) {
            eprintln!(
                "warning: page `{}`: {:?} between `{}` and `{}`",
                page.page_id, a.kind, a.prev_span_id, a.span_id
            );
        }
    }
    println!(
        "ok: {} page(s), {} span(s), {} page(s) fully labelled",
        pages.len(),
        spans_total,
        labelled
    );
    Ok(())
}

pub fn synth(cfg: &RunConfig, mut synth: SynthConfig, out: Option<PathBuf>) -> anyhow::Result<()> {
    synth.seed = cfg.seed;
    let pages = synth_corpus(&synth)?;
    write_output(out.as_deref(), &serialize_pages(&pages)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_safe_file_names() {
        assert_eq!(file_stem("corpus/2401.1-p3"), "corpus_2401.1-p3");
        assert_eq!(file_stem(".."), "_..");
        assert_eq!(file_stem(""), "_");
        assert_eq!(file_stem("a b"), "a_b");
    }
}
