use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::Transcript;

/// Accounting for one page of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub page_id: String,
    pub generated_steps: usize,
    pub latency_s: f64,
    pub truncated: bool,
}

impl RunRecord {
    pub fn from_transcript(t: &Transcript, latency_s: f64) -> Self {
        Self {
            page_id: t.page_id.clone(),
            generated_steps: t.generated_steps,
            latency_s,
            truncated: t.truncated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub pages: usize,
    /// Mean generation steps per page, plain decoding.
    pub generation_steps_baseline: f64,
    /// Mean generation steps per page, edit-queue decoding.
    pub generation_steps_et: f64,
    pub saving_steps_pct: f64,
    pub latency_baseline_s: f64,
    pub latency_et_s: f64,
    pub reduced_latency_pct: f64,
    /// Fraction of baseline pages that hit the token limit.
    pub truncation_rate: f64,
    pub truncation_rate_et: f64,
}

/// Percentage reduction from `baseline` to `edited`; zero when the baseline is zero.
pub fn saving_pct(baseline: f64, edited: f64) -> f64 {
    if baseline > 0.0 {
        100.0 * (1.0 - edited / baseline)
    } else {
        0.0
    }
}

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        xs.sum::<f64>() / n as f64
    }
}

/// Compares a plain-decoding run with an edit-queue run over the same pages.
pub fn efficiency_report(baseline: &[RunRecord], edited: &[RunRecord]) -> Result<EfficiencyReport> {
    let a: BTreeSet<&str> = baseline.iter().map(|r| r.page_id.as_str()).collect();
    let b: BTreeSet<&str> = edited.iter().map(|r| r.page_id.as_str()).collect();
    let diff: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
    if !diff.is_empty() || a.len() != baseline.len() || b.len() != edited.len() {
        let mut diff = diff;
        if diff.is_empty() {
            diff.push("duplicate page ids".into());
        }
        return Err(Error::PageMismatch(diff));
    }
    let n = baseline.len();
    let steps_b = mean(baseline.iter().map(|r| r.generated_steps as f64), n);
    let steps_e = mean(edited.iter().map(|r| r.generated_steps as f64), n);
    let lat_b = mean(baseline.iter().map(|r| r.latency_s), n);
    let lat_e = mean(edited.iter().map(|r| r.latency_s), n);
    Ok(EfficiencyReport {
        pages: n,
        generation_steps_baseline: steps_b,
        generation_steps_et: steps_e,
        saving_steps_pct: saving_pct(steps_b, steps_e),
        latency_baseline_s: lat_b,
        latency_et_s: lat_e,
        reduced_latency_pct: saving_pct(lat_b, lat_e),
        truncation_rate: mean(baseline.iter().map(|r| f64::from(u8::from(r.truncated))), n),
        truncation_rate_et: mean(edited.iter().map(|r| f64::from(u8::from(r.truncated))), n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, steps: usize, truncated: bool) -> RunRecord {
        RunRecord {
            page_id: id.into(),
            generated_steps: steps,
            latency_s: steps as f64 / 100.0,
            truncated,
        }
    }

    #[test]
    fn published_rows() {
        assert!((saving_pct(926.82, 656.28) - 29.2).abs() < 0.05);
        assert!((saving_pct(879.28, 555.88) - 36.8).abs() < 0.05);
    }

    #[test]
    fn identical_runs_save_nothing() {
        let runs = vec![rec("a", 10, false), rec("b", 30, true)];
        let r = efficiency_report(&runs, &runs).unwrap();
        assert_eq!(r.saving_steps_pct, 0.0);
        assert_eq!(r.generation_steps_baseline, 20.0);
        assert_eq!(r.truncation_rate, 0.5);
    }

    #[test]
    fn order_does_not_matter() {
        let base = vec![rec("a", 10, false), rec("b", 30, false)];
        let et = vec![rec("b", 15, false), rec("a", 5, false)];
        let r = efficiency_report(&base, &et).unwrap();
        assert!((r.saving_steps_pct - 50.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_pages_are_rejected() {
        let err = efficiency_report(&[rec("a", 1, false)], &[rec("b", 1, false)]).unwrap_err();
        match err {
            Error::PageMismatch(d) => assert_eq!(d, ["a", "b"]),
            other => panic!("{other}"),
        }
        assert!(efficiency_report(&[rec("a", 1, false), rec("a", 1, false)], &[rec("a", 1, false)]).is_err());
    }

    #[test]
    fn empty_runs() {
        let r = efficiency_report(&[], &[]).unwrap();
        assert_eq!((r.pages, r.saving_steps_pct), (0, 0.0));
    }
}
