//! Pages, spans and the span interchange file.
//!
//! Span extraction from raw PDF bytes happens upstream. This module consumes
//! the JSON interchange file an extractor produces, enforces the geometric and
//! ordering invariants, and hands out immutable [`Page`]s.
//!
//! Coordinates are PDF points with the origin at the top-left corner of the
//! page, so `y` grows downward.

mod order;
mod tokenize;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::de::Deserializer;
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use order::{check_reading_order, AnomalyKind, ColumnBand, OrderAnomaly};
pub use tokenize::{detokenize, normalize_whitespace, tokenize, words, TokenizerMode, TokenizerSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center_x(&self) -> f64 {
        (self.x0 + self.x1) / 2.0
    }

    pub fn center_y(&self) -> f64 {
        (self.y0 + self.y1) / 2.0
    }

    /// Returns the first violated rule, if any.
    fn violation(&self) -> Option<&'static str> {
        let coords = [self.x0, self.y0, self.x1, self.y1];
        if coords.iter().any(|c| !c.is_finite()) {
            return Some("bbox coordinates must be finite");
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Some("bbox coordinates must be >= 0");
        }
        if self.x0 > self.x1 {
            return Some("bbox x0 > x1");
        }
        if self.y0 > self.y1 {
            return Some("bbox y0 > y1");
        }
        None
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = serializer.serialize_tuple(4)?;
        t.serialize_element(&self.x0)?;
        t.serialize_element(&self.y0)?;
        t.serialize_element(&self.x1)?;
        t.serialize_element(&self.y1)?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [x0, y0, x1, y1] = <[f64; 4]>::deserialize(deserializer)?;
        Ok(BBox { x0, y0, x1, y1 })
    }
}

/// Span-level edit label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EditLabel {
    /// Copy the span verbatim.
    Keep,
    /// Drop the span.
    Delete,
    /// Let the backbone generate before this span, then copy it.
    InsertLeft,
}

impl EditLabel {
    pub const ALL: [EditLabel; 3] = [EditLabel::Keep, EditLabel::Delete, EditLabel::InsertLeft];

    pub fn as_str(&self) -> &'static str {
        match self {
            EditLabel::Keep => "KEEP",
            EditLabel::Delete => "DELETE",
            EditLabel::InsertLeft => "INSERT_LEFT",
        }
    }
}

impl fmt::Display for EditLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EditLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "KEEP" => Ok(EditLabel::Keep),
            "DELETE" => Ok(EditLabel::Delete),
            "INSERT_LEFT" => Ok(EditLabel::InsertLeft),
            other => Err(format!("unknown edit label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub span_id: String,
    pub text: String,
    pub bbox: BBox,
    pub order: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<EditLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub font_size: Option<f64>,
}

impl Span {
    /// Whitespace tokens of the span text.
    pub fn tokens(&self) -> Vec<&str> {
        words(&self.text)
    }

    pub fn token_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub page_id: String,
    pub width: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_markdown: Option<String>,
    pub spans: Vec<Span>,
}

impl Page {
    pub fn span(&self, span_id: &str) -> Option<&Span> {
        self.spans.iter().find(|s| s.span_id == span_id)
    }

    /// Enforces page invariants and sorts spans by reading order.
    pub fn validate(mut self) -> Result<Page> {
        let pid = self.page_id.clone();
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::validation(&pid, None, "page width must be finite and > 0"));
        }
        if !(self.height.is_finite() && self.height > 0.0) {
            return Err(Error::validation(&pid, None, "page height must be finite and > 0"));
        }
        let mut ids = HashSet::new();
        let mut orders = HashSet::new();
        for span in &self.spans {
            let sid = Some(span.span_id.as_str());
            if !ids.insert(span.span_id.as_str()) {
                return Err(Error::validation(&pid, sid, "duplicate span_id"));
            }
            if span.text.trim().is_empty() {
                return Err(Error::validation(&pid, sid, "span text has no non-whitespace character"));
            }
            if let Some(rule) = span.bbox.violation() {
                return Err(Error::validation(&pid, sid, rule));
            }
            if span.bbox.x1 > self.width || span.bbox.y1 > self.height {
                return Err(Error::validation(&pid, sid, "bbox lies outside the page"));
            }
            if let Some(fs) = span.font_size {
                if !(fs.is_finite() && fs > 0.0) {
                    return Err(Error::validation(&pid, sid, "font_size must be finite and > 0"));
                }
            }
            if !orders.insert(span.order) {
                return Err(Error::validation(
                    &pid,
                    sid,
                    format!("duplicate reading order {}", span.order),
                ));
            }
        }
        self.spans.sort_by_key(|s| s.order);
        Ok(self)
    }
}

/// Top-level interchange document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanFile {
    pub pages: Vec<Page>,
}

/// Parses and validates a span interchange file.
pub fn ingest_spans(bytes: &[u8]) -> Result<Vec<Page>> {
    let file: SpanFile = serde_json::from_slice(bytes).map_err(|e| parse_error(bytes, &e))?;
    let mut seen = HashSet::new();
    let mut pages = Vec::with_capacity(file.pages.len());
    for page in file.pages {
        if !seen.insert(page.page_id.clone()) {
            return Err(Error::validation(&page.page_id, None, "duplicate page_id"));
        }
        pages.push(page.validate()?);
    }
    Ok(pages)
}

/// Serializes pages back into the interchange format.
pub fn serialize_pages(pages: &[Page]) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Out<'a> {
        pages: &'a [Page],
    }
    Ok(serde_json::to_vec_pretty(&Out { pages })?)
}

fn parse_error(bytes: &[u8], err: &serde_json::Error) -> Error {
    let (line, column) = (err.line(), err.column());
    let line_start: usize = bytes
        .split(|&b| b == b'\n')
        .take(line.saturating_sub(1))
        .map(|l| l.len() + 1)
        .sum();
    let offset = (line_start + column.saturating_sub(1)).min(bytes.len());
    Error::Parse {
        offset,
        line,
        column,
        message: err.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span_json(id: &str, order: i64, bbox: [f64; 4]) -> String {
        format!(
            r#"{{"span_id":"{id}","text":"text {id}","bbox":[{},{},{},{}],"order":{order}}}"#,
            bbox[0], bbox[1], bbox[2], bbox[3]
        )
    }

    fn file(spans: &[String]) -> String {
        format!(
            r#"{{"pages":[{{"page_id":"p1","width":600,"height":800,"spans":[{}]}}]}}"#,
            spans.join(",")
        )
    }

    #[test]
    fn spans_are_sorted_by_order() {
        let f = file(&[
            span_json("b", 1, [10.0, 40.0, 100.0, 50.0]),
            span_json("a", 0, [10.0, 10.0, 100.0, 20.0]),
        ]);
        let pages = ingest_spans(f.as_bytes()).unwrap();
        let ids: Vec<_> = pages[0].spans.iter().map(|s| s.span_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn inverted_bbox_names_the_span() {
        let f = file(&[span_json("bad", 0, [50.0, 10.0, 20.0, 20.0])]);
        let err = ingest_spans(f.as_bytes()).unwrap_err();
        match &err {
            Error::Validation { page_id, span_id, rule } => {
                assert_eq!(page_id, "p1");
                assert_eq!(span_id.as_deref(), Some("bad"));
                assert!(rule.contains("x0 > x1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_order_is_rejected() {
        let f = file(&[
            span_json("a", 3, [10.0, 10.0, 100.0, 20.0]),
            span_json("b", 3, [10.0, 40.0, 100.0, 50.0]),
        ]);
        let err = ingest_spans(f.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("duplicate reading order 3"), "{err}");
    }

    #[test]
    fn bbox_outside_page_is_rejected() {
        let f = file(&[span_json("a", 0, [10.0, 10.0, 700.0, 20.0])]);
        assert!(matches!(ingest_spans(f.as_bytes()), Err(Error::Validation { .. })));
    }

    #[test]
    fn whitespace_only_text_is_rejected() {
        let f = r#"{"pages":[{"page_id":"p","width":10,"height":10,"spans":[
            {"span_id":"s","text":"  \n ","bbox":[0,0,1,1],"order":0}]}]}"#;
        let err = ingest_spans(f.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("non-whitespace"), "{err}");
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let f = b"{\"pages\": [\n  {\"page_id\": }\n]}";
        match ingest_spans(f).unwrap_err() {
            Error::Parse { offset, line, .. } => {
                assert_eq!(line, 2);
                assert_eq!(f[offset - 1], b' ');
                assert_eq!(f[offset], b'}');
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_and_optional_fields() {
        let f = r#"{"version":2,"pages":[{"page_id":"p","width":10,"height":10,"dpi":72,
            "spans":[{"span_id":"s","text":"x","bbox":[0,0,1,1],"order":0,"flags":7,
            "label":"INSERT_LEFT","font_size":9.5}]}]}"#;
        let pages = ingest_spans(f.as_bytes()).unwrap();
        let s = &pages[0].spans[0];
        assert_eq!(s.label, Some(EditLabel::InsertLeft));
        assert_eq!(s.font_size, Some(9.5));
        assert!(pages[0].image_ref.is_none());
    }

    #[test]
    fn unknown_label_is_a_parse_error() {
        let f = r#"{"pages":[{"page_id":"p","width":10,"height":10,
            "spans":[{"span_id":"s","text":"x","bbox":[0,0,1,1],"order":0,"label":"MOVE"}]}]}"#;
        assert!(matches!(ingest_spans(f.as_bytes()), Err(Error::Parse { .. })));
    }
}
