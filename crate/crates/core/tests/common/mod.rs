#![allow(dead_code)]

use layedit::document::{normalize_whitespace, BBox, EditLabel, Page, Span};
use layedit::synth::{synth_corpus, SynthConfig};

pub fn handbuilt() -> Vec<Page> {
    let raw = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/handbuilt.json")).unwrap();
    layedit::ingest_spans(&raw).unwrap()
}

pub fn synthetic(copy_fraction: f64, pages: usize, seed: u64) -> Vec<Page> {
    synth_corpus(&SynthConfig {
        pages,
        copy_fraction,
        seed,
        page_id_prefix: format!("synth-c{}-s{seed}", (copy_fraction * 100.0).round()),
        ..Default::default()
    })
    .unwrap()
}

/// Hand-built plus synthetic pages.
pub fn fixture_corpus() -> Vec<Page> {
    let mut pages = handbuilt();
    pages.extend(synthetic(0.35, 12, 101));
    pages.extend(synthetic(0.75, 6, 102));
    pages
}

pub fn reference(page: &Page) -> String {
    normalize_whitespace(page.reference_markdown.as_deref().unwrap())
}

/// Page from `(text, label)` pairs laid out one per line.
pub fn simple_page(page_id: &str, spans: &[(&str, EditLabel)], reference: &str) -> Page {
    let spans = spans
        .iter()
        .enumerate()
        .map(|(i, (text, label))| {
            let y = 60.0 + 12.0 * i as f64;
            Span {
                span_id: format!("{page_id}-{i:02}"),
                text: text.to_string(),
                bbox: BBox::new(60.0, y, 540.0, y + 10.0),
                order: i as i64,
                label: Some(*label),
                font_size: Some(10.0),
            }
        })
        .collect();
    Page {
        page_id: page_id.into(),
        width: 600.0,
        height: 800.0,
        image_ref: None,
        reference_markdown: Some(reference.into()),
        spans,
    }
    .validate()
    .unwrap()
}
