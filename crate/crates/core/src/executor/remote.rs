//! HTTP backbone client.
//!
//! Wire format, one POST per trigger activation:
//! request `{"session_id", "prefix_text", "image_ref", "stop_sign", "max_new_tokens"}`,
//! response `{"text", "steps", "finish": "stop" | "eos" | "length"}`.
//! The server does not know about skips; the client scans the returned words
//! and cuts the output at the first skip-window hit.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{skip_hit_with_history, stop_match, Backbone, Finish, GenerateRequest, Generation};
use crate::error::BackboneError;

#[derive(Debug, Clone)]
pub struct RemoteBackbone {
    pub endpoint: String,
    pub timeout: Duration,
    pub retries: u32,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    session_id: &'a str,
    prefix_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_ref: Option<&'a str>,
    stop_sign: &'a [String],
    max_new_tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum WireFinish {
    Stop,
    Eos,
    Length,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
    steps: usize,
    finish: WireFinish,
}

impl RemoteBackbone {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
            retries,
        }
    }

    fn call(&self, body: &WireRequest<'_>) -> Result<WireResponse, BackboneError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut last = String::new();
        for _ in 0..=self.retries {
            match agent.post(&self.endpoint).send_json(body) {
                Ok(resp) => {
                    return resp
                        .into_json()
                        .map_err(|e| BackboneError::Protocol(format!("bad response body: {e}")));
                }
                Err(ureq::Error::Status(code, resp)) if code < 500 => {
                    let text = resp.into_string().unwrap_or_default();
                    return Err(BackboneError::Protocol(format!("HTTP {code}: {text}")));
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(BackboneError::Transport(format!(
            "{} after {} attempt(s): {last}",
            self.endpoint,
            self.retries + 1
        )))
    }
}

impl Backbone for RemoteBackbone {
    fn generate(&self, req: &GenerateRequest<'_>) -> Result<Generation, BackboneError> {
        let body = WireRequest {
            session_id: req.session_id,
            prefix_text: req.unpadded_prefix().join(" "),
            image_ref: req.image_ref,
            stop_sign: req.stop_sign,
            max_new_tokens: req.max_new_tokens,
        };
        let resp = self.call(&body)?;
        let tokens: Vec<String> = resp.text.split_whitespace().map(str::to_owned).collect();
        if tokens.len() > req.max_new_tokens {
            return Err(BackboneError::Protocol(format!(
                "{} words returned for a budget of {}",
                tokens.len(),
                req.max_new_tokens
            )));
        }
        interpret(tokens, resp.steps, resp.finish, req)
    }
}

/// Applies stop and skip detection to a finished response.
fn interpret(
    tokens: Vec<String>,
    steps: usize,
    finish: WireFinish,
    req: &GenerateRequest<'_>,
) -> Result<Generation, BackboneError> {
    for i in 0..tokens.len() {
        let seen = &tokens[..=i];
        let early = if stop_match(seen, req.stop_sign) {
            Some(Finish::StopMatched)
        } else {
            req.skip
                .filter(|w| skip_hit_with_history(w.history, seen, w.target, w.window))
                .map(|_| Finish::Skip)
        };
        if let Some(finish) = early {
            // Words past the cut are discarded and not billed.
            let steps = if i + 1 == tokens.len() { steps } else { i + 1 };
            let mut tokens = tokens;
            tokens.truncate(i + 1);
            return Ok(Generation { tokens, finish, steps });
        }
    }
    let finish = match finish {
        WireFinish::Stop => {
            return Err(BackboneError::Protocol(
                "finish=stop but the text does not end with the stop sign".into(),
            ))
        }
        WireFinish::Eos => Finish::Eos,
        WireFinish::Length => Finish::Length,
    };
    Ok(Generation {
        steps: tokens.len(),
        tokens,
        finish,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_owned).collect()
    }

    fn req<'a>(stop: &'a [String]) -> GenerateRequest<'a> {
        GenerateRequest {
            session_id: "p",
            prefix: &[],
            image_ref: None,
            stop_sign: stop,
            skip: None,
            max_new_tokens: 100,
            pad_token: "<pad>",
        }
    }

    #[test]
    fn stop_response_is_accepted() {
        let stop = s("a b c");
        let g = interpret(s("x a b c"), 4, WireFinish::Stop, &req(&stop)).unwrap();
        assert_eq!(g.finish, Finish::StopMatched);
        assert_eq!(g.steps, 4);
    }

    #[test]
    fn overshoot_past_stop_is_cut() {
        let stop = s("a b c");
        let g = interpret(s("x a b c y z"), 6, WireFinish::Eos, &req(&stop)).unwrap();
        assert_eq!(g.tokens, s("x a b c"));
        assert_eq!(g.finish, Finish::StopMatched);
    }

    #[test]
    fn lying_stop_is_a_protocol_error() {
        let stop = s("a b c");
        assert!(interpret(s("x y"), 2, WireFinish::Stop, &req(&stop)).is_err());
    }

    #[test]
    fn client_side_skip() {
        let stop = s("p q r");
        let target = s("one two three four five six");
        let mut r = req(&stop);
        r.skip = Some(super::super::SkipWatch {
            target: &target,
            window: 5,
            history: &[],
        });
        let g = interpret(s("one two three four five six p q r"), 9, WireFinish::Stop, &r).unwrap();
        assert_eq!(g.finish, Finish::Skip);
        assert_eq!(g.tokens.len(), 5);
    }
}
