//! Transformation quality and decoding efficiency.

mod efficiency;
mod quality;

use std::fmt::Write as _;

pub use efficiency::{efficiency_report, saving_pct, EfficiencyReport, RunRecord};
pub use quality::{bleu, edit_distance_ratio, levenshtein, meteor_like, meteor_with, token_prf, MeteorStages, QualityReport};

/// Aligned-column text rendering of an efficiency report.
pub fn efficiency_table(label: &str, r: &EfficiencyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>6} {:>12} {:>12} {:>10} {:>12} {:>12} {:>10} {:>8}",
        "run", "pages", "steps_base", "steps_et", "saving%", "lat_base_s", "lat_et_s", "lat_red%", "trunc"
    );
    let _ = writeln!(
        out,
        "{:<16} {:>6} {:>12.2} {:>12.2} {:>10.2} {:>12.4} {:>12.4} {:>10.2} {:>8.3}",
        label,
        r.pages,
        r.generation_steps_baseline,
        r.generation_steps_et,
        r.saving_steps_pct,
        r.latency_baseline_s,
        r.latency_et_s,
        r.reduced_latency_pct,
        r.truncation_rate
    );
    out
}

/// Aligned-column text rendering of quality reports, one row per label.
pub fn quality_table(rows: &[(String, QualityReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>9} {:>7} {:>7} {:>9} {:>7} {:>7}",
        "run", "edit_dist", "bleu", "meteor", "precision", "recall", "f1"
    );
    for (label, q) in rows {
        let _ = writeln!(
            out,
            "{:<16} {:>9.4} {:>7.4} {:>7.4} {:>9.4} {:>7.4} {:>7.4}",
            label, q.edit_dist_ratio, q.bleu, q.meteor, q.precision, q.recall, q.f1
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_have_header_and_rows() {
        let q = QualityReport::score("a b", "a b");
        let t = quality_table(&[("x".into(), q)]);
        assert_eq!(t.lines().count(), 2);
        assert!(t.contains("1.0000"));
        let e = efficiency_report(&[], &[]).unwrap();
        assert!(efficiency_table("empty", &e).starts_with("run"));
    }
}
