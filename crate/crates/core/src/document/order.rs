//! Reading-order diagnostics.
//!
//! Upstream extractors sometimes read two-column pages row by row, which
//! leaves the edit queue useless for that page. The checks here only report
//! what looks wrong; the order is still consumed as given.

use serde::Serialize;

use super::{BBox, Page};

/// Horizontal band a span occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnBand {
    Left,
    Right,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// The next span in the same band starts above the previous one.
    BackwardJump,
    /// Reading switches between columns more than once inside one block.
    ColumnInterleave,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderAnomaly {
    pub kind: AnomalyKind,
    pub prev_span_id: String,
    pub span_id: String,
}

const MAX_COLUMN_FRAC: f64 = 0.55;
const GUTTER_FRAC: f64 = 0.02;
/// Vertical gap, in median span heights, that starts a new column block.
const BLOCK_GAP: f64 = 1.5;

pub(crate) fn band(bbox: &BBox, page_width: f64) -> ColumnBand {
    let mid = page_width / 2.0;
    let margin = GUTTER_FRAC * page_width;
    if bbox.width() > MAX_COLUMN_FRAC * page_width {
        ColumnBand::Full
    } else if bbox.x1 <= mid + margin {
        ColumnBand::Left
    } else if bbox.x0 >= mid - margin {
        ColumnBand::Right
    } else {
        ColumnBand::Full
    }
}

fn overlaps_vertically(a: &BBox, b: &BBox) -> bool {
    a.y0 < b.y1 && b.y0 < a.y1
}

fn median_height(page: &Page) -> f64 {
    let mut h: Vec<f64> = page.spans.iter().map(|s| s.bbox.height()).collect();
    if h.is_empty() {
        return 0.0;
    }
    h.sort_by(f64::total_cmp);
    h[h.len() / 2]
}

/// Flags backward vertical jumps within a band and row-wise interleaving of
/// columns. An empty result means the order is plausible.
pub fn check_reading_order(page: &Page) -> Vec<OrderAnomaly> {
    let spans = &page.spans;
    let mut anomalies = Vec::new();
    if spans.len() < 2 {
        return anomalies;
    }
    let bands: Vec<ColumnBand> = spans.iter().map(|s| band(&s.bbox, page.width)).collect();

    for (i, pair) in spans.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let tol = (0.5 * a.bbox.height()).max(1.0);
        if bands[i] == bands[i + 1] && b.bbox.y0 < a.bbox.y0 - tol {
            anomalies.push(OrderAnomaly {
                kind: AnomalyKind::BackwardJump,
                prev_span_id: a.span_id.clone(),
                span_id: b.span_id.clone(),
            });
        }
    }

    let multi_column = spans.iter().zip(&bands).any(|(l, lb)| {
        *lb == ColumnBand::Left
            && spans
                .iter()
                .zip(&bands)
                .any(|(r, rb)| *rb == ColumnBand::Right && overlaps_vertically(&l.bbox, &r.bbox))
    });
    if !multi_column {
        return anomalies;
    }

    let gap = BLOCK_GAP * median_height(page);
    let mut last: Option<(usize, ColumnBand)> = None;
    let mut switches = 0usize;
    let mut block_bottom = f64::NEG_INFINITY;
    for (i, span) in spans.iter().enumerate() {
        let b = bands[i];
        if b == ColumnBand::Full {
            last = None;
            switches = 0;
            block_bottom = f64::NEG_INFINITY;
            continue;
        }
        if let Some((prev, prev_band)) = last {
            if b != prev_band {
                let new_block = b == ColumnBand::Left && span.bbox.y0 - block_bottom > gap;
                if new_block {
                    switches = 0;
                    block_bottom = f64::NEG_INFINITY;
                } else {
                    switches += 1;
                    if switches >= 2 {
                        anomalies.push(OrderAnomaly {
                            kind: AnomalyKind::ColumnInterleave,
                            prev_span_id: spans[prev].span_id.clone(),
                            span_id: span.span_id.clone(),
                        });
                    }
                }
            }
        }
        block_bottom = block_bottom.max(span.bbox.y1);
        last = Some((i, b));
    }
    anomalies
}
