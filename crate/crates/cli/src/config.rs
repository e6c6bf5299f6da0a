//! Flat run configuration. Values come from an optional TOML or JSON file;
//! command-line flags override them.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use layedit::editability::RemoteClassifier;
use layedit::{Classifier, ClassifierKind, ExecConfig, HeuristicRules, Parallelism, PipelineConfig, QueueConfig};

use crate::Invalid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub classifier: ClassifierKind,
    pub classifier_endpoint: Option<String>,
    pub header_frac: Option<f64>,
    pub footer_frac: Option<f64>,
    pub font_delta: Option<f64>,
    pub page_number_pattern: Option<String>,
    pub n: usize,
    pub n_prime: usize,
    pub min_copy_chars: usize,
    pub max_new_tokens: usize,
    pub pad_token: String,
    pub backbone: BackboneKind,
    pub endpoint: Option<String>,
    pub script: Option<PathBuf>,
    pub timeout_s: f64,
    pub retries: u32,
    pub batch_size: usize,
    /// Worker threads; the global pool when unset.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let q = QueueConfig::default();
        let e = ExecConfig::default();
        Self {
            classifier: ClassifierKind::Oracle,
            classifier_endpoint: None,
            header_frac: None,
            footer_frac: None,
            font_delta: None,
            page_number_pattern: None,
            n: q.stop_sign_words,
            n_prime: q.skip_window_words,
            min_copy_chars: q.min_copy_chars,
            max_new_tokens: e.max_new_tokens,
            pad_token: e.pad_token,
            backbone: BackboneKind::Scripted,
            endpoint: None,
            script: None,
            timeout_s: 30.0,
            retries: 2,
            batch_size: 1,
            threads: None,
            out_dir: PathBuf::from("out"),
            seed: 7,
        }
    }
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Config file (.toml or .json).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// oracle, heuristic or remote.
    #[arg(long, global = true)]
    pub classifier: Option<ClassifierKind>,
    #[arg(long, global = true)]
    pub classifier_endpoint: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub backbone: Option<BackboneKind>,
    /// Backbone URL; also read from LAYEDIT_BACKBONE_URL.
    #[arg(long, global = true, env = "LAYEDIT_BACKBONE_URL")]
    pub endpoint: Option<String>,
    /// Script file for the scripted backbone.
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub n_prime: Option<usize>,
    #[arg(long, global = true)]
    pub min_copy_chars: Option<usize>,
    #[arg(long, global = true)]
    pub max_new_tokens: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

fn read_file(path: &Path) -> anyhow::Result<RunConfig> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(&raw).map_err(|e| e.to_string())
    } else {
        toml::from_str(&raw).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Invalid(format!("config {}: {e}", path.display())).into())
}

impl RunConfig {
    pub fn load(o: &Overrides) -> anyhow::Result<Self> {
        let mut c = match &o.config {
            Some(path) => read_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &o.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(classifier, backbone, n, n_prime, min_copy_chars, max_new_tokens, batch_size, seed);
        if o.classifier_endpoint.is_some() {
            c.classifier_endpoint = o.classifier_endpoint.clone();
        }
        if o.endpoint.is_some() {
            c.endpoint = o.endpoint.clone();
        }
        if o.script.is_some() {
            c.script = o.script.clone();
        }
        if o.threads.is_some() {
            c.threads = o.threads;
        }
        Ok(c)
    }

    pub fn queue(&self) -> QueueConfig {
        QueueConfig {
            min_copy_chars: self.min_copy_chars,
            stop_sign_words: self.n,
            skip_window_words: self.n_prime,
        }
    }

    pub fn exec(&self) -> ExecConfig {
        ExecConfig {
            max_new_tokens: self.max_new_tokens,
            pad_token: self.pad_token.clone(),
            ..Default::default()
        }
        .with_queue_config(&self.queue())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }

    pub fn classifier(&self) -> anyhow::Result<Classifier> {
        Ok(match self.classifier {
            ClassifierKind::Oracle => Classifier::Oracle,
            ClassifierKind::Heuristic => {
                let d = HeuristicRules::default();
                let rules = HeuristicRules {
                    header_frac: self.header_frac.unwrap_or(d.header_frac),
                    footer_frac: self.footer_frac.unwrap_or(d.footer_frac),
                    font_delta: self.font_delta.unwrap_or(d.font_delta),
                    page_number_pattern: self.page_number_pattern.clone().unwrap_or(d.page_number_pattern),
                    math_markers: d.math_markers,
                };
                Classifier::heuristic(rules)?
            }
            ClassifierKind::Remote => {
                let url = self
                    .classifier_endpoint
                    .clone()
                    .ok_or_else(|| Invalid("classifier = remote needs classifier_endpoint".into()))?;
                Classifier::Remote(RemoteClassifier::new(url, self.timeout(), self.retries))
            }
        })
    }

    /// Checks everything that can be checked before touching any input.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.queue().validate()?;
        self.exec().validate()?;
        if self.batch_size < 1 {
            return Err(Invalid("batch_size must be >= 1".into()).into());
        }
        if self.threads == Some(0) {
            return Err(Invalid("threads must be >= 1".into()).into());
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(Invalid("timeout_s must be positive".into()).into());
        }
        if self.backbone == BackboneKind::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(Invalid("backbone = remote needs an endpoint (--endpoint or LAYEDIT_BACKBONE_URL)".into()).into());
        }
        self.classifier()?;
        Ok(())
    }

    pub fn pipeline(&self, edit: bool) -> anyhow::Result<PipelineConfig> {
        Ok(PipelineConfig {
            classifier: self.classifier()?,
            queue: self.queue(),
            exec: self.exec(),
            batch_size: self.batch_size,
            parallelism: Parallelism::Parallel,
            edit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = std::env::temp_dir().join(format!("layedit-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(&path, "n = 4\nn_prime = 9\nbatch_size = 3\nclassifier = \"heuristic\"\n").unwrap();
        let o = Overrides {
            config: Some(path),
            n_prime: Some(6),
            ..Default::default()
        };
        let c = RunConfig::load(&o).unwrap();
        assert_eq!((c.n, c.n_prime, c.batch_size), (4, 6, 3));
        assert_eq!(c.classifier, ClassifierKind::Heuristic);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let c: Result<RunConfig, _> = toml::from_str("stop_words = 3");
        assert!(c.is_err());
    }

    #[test]
    fn remote_backbone_needs_endpoint() {
        let c = RunConfig {
            backbone: BackboneKind::Remote,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn n_prime_must_exceed_n() {
        let c = RunConfig {
            n: 5,
            n_prime: 5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
