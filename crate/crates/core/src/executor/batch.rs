use std::time::Instant;

use super::{Backbone, ExecConfig, Next, PageRun, PhaseTimings, Transcript};
use crate::document::Page;
use crate::error::{Error, Result};
use crate::queue::EditQueue;

/// Executes several queues in lock step.
///
/// Each round collects one generation request per page still waiting on the
/// backbone, left-pads their sequences with `pad_token` to a common length
/// and issues them as a single batch. Pages advance independently, so the
/// transcripts equal those of sequential execution.
pub fn batch_execute(
    queues: &[EditQueue],
    pages: &[Page],
    backbone: &dyn Backbone,
    cfg: &ExecConfig,
) -> Result<Vec<Transcript>> {
    Ok(batch_execute_timed(queues, pages, backbone, cfg)?
        .into_iter()
        .map(|(t, _)| t)
        .collect())
}

/// Like [`batch_execute`]; a page's generation time is the wall time of the
/// batched calls it took part in.
pub fn batch_execute_timed(
    queues: &[EditQueue],
    pages: &[Page],
    backbone: &dyn Backbone,
    cfg: &ExecConfig,
) -> Result<Vec<(Transcript, PhaseTimings)>> {
    if queues.len() != pages.len() {
        return Err(Error::Config(format!(
            "{} queues for {} pages",
            queues.len(),
            pages.len()
        )));
    }
    let mut runs = queues
        .iter()
        .zip(pages)
        .map(|(q, p)| PageRun::new(q, p, cfg))
        .collect::<Result<Vec<_>>>()?;

    loop {
        let waiting: Vec<usize> = (0..runs.len())
            .filter(|&i| matches!(runs[i].advance(), Next::Generate))
            .collect();
        if waiting.is_empty() {
            break;
        }
        let width = waiting.iter().map(|&i| runs[i].transcript.tokens.len()).max().unwrap_or(0);
        let padded: Vec<Vec<String>> = waiting
            .iter()
            .map(|&i| {
                let words = runs[i].transcript.words();
                let mut seq = vec![cfg.pad_token.clone(); width - words.len()];
                seq.extend(words);
                seq
            })
            .collect();
        let start = Instant::now();
        let results = {
            let reqs: Vec<_> = waiting.iter().zip(&padded).map(|(&i, seq)| runs[i].request(seq)).collect();
            backbone.generate_batch(&reqs)
        };
        let elapsed = start.elapsed();
        if results.len() != waiting.len() {
            return Err(Error::Config(format!(
                "backbone returned {} results for a batch of {}",
                results.len(),
                waiting.len()
            )));
        }
        for (&i, result) in waiting.iter().zip(results) {
            runs[i].apply(result, elapsed)?;
        }
    }
    Ok(runs.into_iter().map(PageRun::finish).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{execute, ScriptedBackbone};
    use crate::queue::{degenerate_queue, EditAction};

    fn page(id: &str) -> Page {
        Page {
            page_id: id.into(),
            width: 600.0,
            height: 800.0,
            image_ref: None,
            reference_markdown: None,
            spans: vec![],
        }
    }

    #[test]
    fn batch_matches_sequential() {
        let pages = vec![page("a"), page("b")];
        let script = ScriptedBackbone::from_scripts(
            [
                ("a".to_string(), "# Head one two three four five six".to_string()),
                ("b".to_string(), "short".to_string()),
            ],
            vec![],
        );
        let queues = vec![
            EditQueue {
                page_id: "a".into(),
                actions: vec![
                    EditAction::Trigger {
                        stop_sign: vec!["one".into(), "two".into(), "three".into()],
                    },
                    EditAction::Copy {
                        span_id: "s".into(),
                        text: "one two three four".into(),
                        stop_sign: vec!["one".into(), "two".into(), "three".into()],
                    },
                    EditAction::Trigger { stop_sign: vec![] },
                ],
            },
            degenerate_queue("b"),
        ];
        let cfg = ExecConfig::default();
        let batched = batch_execute(&queues, &pages, &script, &cfg).unwrap();
        for ((q, p), t) in queues.iter().zip(&pages).zip(&batched) {
            assert_eq!(*t, execute(q, p, &script, &cfg).unwrap());
        }
        assert_eq!(batched[0].markdown(), "# Head one two three four five six");
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let script = ScriptedBackbone::default();
        assert!(batch_execute(&[], &[page("a")], &script, &ExecConfig::default()).is_err());
    }
}
