use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// One token per whitespace-delimited word.
    #[default]
    Whitespace,
    /// Sub-word tokenization owned by the backbone; adapted at the wire boundary.
    BackboneDelegated,
}

/// Tokenizer settings. Whitespace mode collapses every run of whitespace,
/// newlines included, so the token stream carries no layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub mode: TokenizerMode,
}

pub fn tokenize(text: &str, spec: &TokenizerSpec) -> Result<Vec<String>> {
    match spec.mode {
        TokenizerMode::Whitespace => Ok(text.split_whitespace().map(str::to_owned).collect()),
        TokenizerMode::BackboneDelegated => Err(Error::Unsupported("backbone_delegated")),
    }
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S], spec: &TokenizerSpec) -> Result<String> {
    match spec.mode {
        TokenizerMode::Whitespace => Ok(join(tokens)),
        TokenizerMode::BackboneDelegated => Err(Error::Unsupported("backbone_delegated")),
    }
}

/// Borrowed whitespace split.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Collapses all whitespace runs to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    join(&words(text))
}

fn join<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_ref());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const WS: TokenizerSpec = TokenizerSpec {
        mode: TokenizerMode::Whitespace,
    };

    #[test]
    fn collapses_spaces_and_newlines() {
        let toks = tokenize("a  b\nc", &WS).unwrap();
        assert_eq!(toks, ["a", "b", "c"]);
        assert_eq!(detokenize(&toks, &WS).unwrap(), "a b c");
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("", &WS).unwrap().is_empty());
        assert_eq!(detokenize::<String>(&[], &WS).unwrap(), "");
    }

    #[test]
    fn latex_commands_split_on_whitespace() {
        assert_eq!(tokenize(r"\alpha + \beta", &WS).unwrap(), [r"\alpha", "+", r"\beta"]);
    }

    #[test]
    fn delegated_mode_is_unsupported() {
        let spec = TokenizerSpec {
            mode: TokenizerMode::BackboneDelegated,
        };
        assert!(matches!(tokenize("x", &spec), Err(Error::Unsupported(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_whitespace_normalization(s in "[a-z \\t\\n\\\\$^_]{0,40}") {
            let toks = tokenize(&s, &WS).unwrap();
            prop_assert_eq!(detokenize(&toks, &WS).unwrap(), normalize_whitespace(&s));
        }
    }
}
