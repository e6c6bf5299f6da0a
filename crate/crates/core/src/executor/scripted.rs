//! Deterministic backbone replaying a fixed word stream per page.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{skip_hit_with_history, stop_match, Backbone, Finish, GenerateRequest, Generation};
use crate::document::Page;
use crate::error::{BackboneError, Error, Result};

/// Words spliced into a page's stream before word index `at_word`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deviation {
    pub page_id: String,
    pub at_word: usize,
    pub insert: Vec<String>,
}

/// On-disk script: page ids mapped to Markdown, plus an optional
/// `deviations` list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deviations: Vec<Deviation>,
    #[serde(flatten)]
    pub pages: BTreeMap<String, String>,
}

/// Replays a script word by word. The script is the Markdown a faithful
/// model would produce; deviations make it emit extra words.
///
/// The backbone keeps no per-session state: each call aligns the prefix
/// against the stream to find where to resume, so it can be shared across
/// threads and batches.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackbone {
    streams: HashMap<String, Vec<String>>,
}

/// Position in `stream` that follows `prefix`.
///
/// Exact prefix first; otherwise the latest occurrence of the longest
/// matching tail (up to 8 words) nearest the prefix length; otherwise the
/// prefix length clamped to the stream.
pub fn align_prefix(stream: &[String], prefix: &[String]) -> usize {
    let n = prefix.len();
    if n <= stream.len() && stream[..n] == *prefix {
        return n;
    }
    for k in (1..=n.min(8)).rev() {
        let tail = &prefix[n - k..];
        let best = stream
            .windows(k)
            .enumerate()
            .filter(|(_, w)| *w == tail)
            .map(|(i, _)| i + k)
            .min_by_key(|end| (end.abs_diff(n), usize::MAX - end));
        if let Some(end) = best {
            return end;
        }
    }
    n.min(stream.len())
}

impl ScriptedBackbone {
    pub fn from_scripts<I>(scripts: I, deviations: Vec<Deviation>) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut streams: HashMap<String, Vec<String>> = scripts
            .into_iter()
            .map(|(id, md)| (id, md.split_whitespace().map(str::to_owned).collect()))
            .collect();
        let mut deviations = deviations;
        // Descending positions keep every index relative to the original script.
        deviations.sort_by(|a, b| b.at_word.cmp(&a.at_word));
        for d in deviations {
            if let Some(stream) = streams.get_mut(&d.page_id) {
                let at = d.at_word.min(stream.len());
                stream.splice(at..at, d.insert.iter().flat_map(|w| w.split_whitespace().map(str::to_owned)));
            }
        }
        Self { streams }
    }

    /// Uses each page's reference Markdown as its script.
    pub fn from_pages(pages: &[Page]) -> Result<Self> {
        let mut scripts = Vec::with_capacity(pages.len());
        for p in pages {
            let md = p.reference_markdown.as_ref().ok_or_else(|| {
                Error::Config(format!("page `{}` has no reference_markdown to script from", p.page_id))
            })?;
            scripts.push((p.page_id.clone(), md.clone()));
        }
        Ok(Self::from_scripts(scripts, Vec::new()))
    }

    pub fn from_script_file(bytes: &[u8]) -> Result<Self> {
        let file: ScriptFile = serde_json::from_slice(bytes)?;
        Ok(Self::from_scripts(file.pages, file.deviations))
    }

    pub fn with_deviations(self, deviations: Vec<Deviation>) -> Self {
        let scripts = self.streams.into_iter().map(|(id, s)| (id, s.join(" ")));
        Self::from_scripts(scripts, deviations)
    }

    pub fn stream(&self, page_id: &str) -> Option<&[String]> {
        self.streams.get(page_id).map(Vec::as_slice)
    }
}

impl Backbone for ScriptedBackbone {
    fn generate(&self, req: &GenerateRequest<'_>) -> std::result::Result<Generation, BackboneError> {
        let stream = self
            .streams
            .get(req.session_id)
            .ok_or_else(|| BackboneError::NoScript(req.session_id.to_owned()))?;
        let mut cursor = align_prefix(stream, req.unpadded_prefix());
        let mut out: Vec<String> = Vec::new();
        loop {
            if cursor >= stream.len() {
                return Ok(done(out, Finish::Eos));
            }
            if out.len() >= req.max_new_tokens {
                return Ok(done(out, Finish::Length));
            }
            out.push(stream[cursor].clone());
            cursor += 1;
            if stop_match(&out, req.stop_sign) {
                return Ok(done(out, Finish::StopMatched));
            }
            if let Some(w) = req.skip {
                if skip_hit_with_history(w.history, &out, w.target, w.window) {
                    return Ok(done(out, Finish::Skip));
                }
            }
        }
    }
}

fn done(tokens: Vec<String>, finish: Finish) -> Generation {
    Generation {
        steps: tokens.len(),
        tokens,
        finish,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn align_exact_prefix() {
        assert_eq!(align_prefix(&s("a b c d"), &s("a b")), 2);
        assert_eq!(align_prefix(&s("a b c d"), &[]), 0);
    }

    #[test]
    fn align_on_tail_after_divergence() {
        // The transcript skipped "x" but shares the tail "c".
        assert_eq!(align_prefix(&s("a x b c d"), &s("a b c")), 4);
    }

    #[test]
    fn align_prefers_occurrence_near_prefix_length() {
        let stream = s("q w the end z q w the end");
        assert_eq!(align_prefix(&stream, &s("zz zz zz zz zz zz zz zz the end")), 9);
        assert_eq!(align_prefix(&stream, &s("zz the end")), 4);
    }

    #[test]
    fn align_without_overlap_clamps() {
        assert_eq!(align_prefix(&s("a b"), &s("x y z")), 2);
    }

    #[test]
    fn deviations_use_original_positions() {
        let b = ScriptedBackbone::from_scripts(
            [("p".to_string(), "a b c".to_string())],
            vec![
                Deviation {
                    page_id: "p".into(),
                    at_word: 1,
                    insert: vec!["X".into()],
                },
                Deviation {
                    page_id: "p".into(),
                    at_word: 2,
                    insert: vec!["Y Z".into()],
                },
                Deviation {
                    page_id: "p".into(),
                    at_word: 99,
                    insert: vec!["end".into()],
                },
            ],
        );
        assert_eq!(b.stream("p").unwrap(), s("a X b Y Z c end").as_slice());
    }

    #[test]
    fn script_file_round_trip() {
        let raw = br##"{"p1": "# A\nbody", "p2": "x", "deviations": [{"page_id": "p1", "at_word": 0, "insert": ["hi"]}]}"##;
        let b = ScriptedBackbone::from_script_file(raw).unwrap();
        assert_eq!(b.stream("p1").unwrap(), s("hi # A body").as_slice());
        assert_eq!(b.stream("p2").unwrap(), s("x").as_slice());
    }

    #[test]
    fn unknown_session_is_an_error() {
        let b = ScriptedBackbone::default();
        let req = GenerateRequest {
            session_id: "nope",
            prefix: &[],
            image_ref: None,
            stop_sign: &[],
            skip: None,
            max_new_tokens: 4,
            pad_token: "<pad>",
        };
        assert!(matches!(b.generate(&req), Err(BackboneError::NoScript(_))));
    }

    #[test]
    fn padding_is_ignored() {
        let b = ScriptedBackbone::from_scripts([("p".to_string(), "a b c".to_string())], vec![]);
        let prefix = s("<pad> <pad> a");
        let req = GenerateRequest {
            session_id: "p",
            prefix: &prefix,
            image_ref: None,
            stop_sign: &[],
            skip: None,
            max_new_tokens: 10,
            pad_token: "<pad>",
        };
        let g = b.generate(&req).unwrap();
        assert_eq!(g.tokens, s("b c"));
        assert_eq!(g.finish, Finish::Eos);
    }
}
