//! Static bearer tokens.
//!
//! The token file has one `<token> <actor-id>` pair per line; blank lines
//! and `#` comments are ignored.

use std::collections::HashMap;
use std::path::Path;

use mentorloop_core::ids::ActorId;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("token file line {line}: expected `<token> <actor-id>`")]
    Malformed { line: usize },
    #[error("token file line {line}: duplicate token")]
    Duplicate { line: usize },
    #[error("token for `{0}` is shorter than 16 characters")]
    TooShort(ActorId),
}

const MIN_TOKEN_LEN: usize = 16;

#[derive(Debug, Clone, Default)]
pub struct TokenStore {
    tokens: HashMap<String, ActorId>,
}

impl TokenStore {
    pub fn parse(text: &str) -> Result<Self, TokenError> {
        let mut tokens = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(token), Some(actor), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(TokenError::Malformed { line: i + 1 });
            };
            let actor = ActorId::new(actor);
            if token.len() < MIN_TOKEN_LEN {
                return Err(TokenError::TooShort(actor));
            }
            if tokens.insert(token.to_owned(), actor).is_some() {
                return Err(TokenError::Duplicate { line: i + 1 });
            }
        }
        Ok(Self { tokens })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn insert(&mut self, token: impl Into<String>, actor: ActorId) {
        self.tokens.insert(token.into(), actor);
    }

    /// Resolves an `Authorization` header value.
    pub fn resolve(&self, header: Option<&str>) -> Option<&ActorId> {
        let token = header?.strip_prefix("Bearer ")?.trim();
        self.tokens.get(token)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let s = TokenStore::parse("# desk tokens\n\nalice-token-0123456 alice\nsup-token-012345678 sup\n").unwrap();
        assert_eq!(s.resolve(Some("Bearer alice-token-0123456")), Some(&ActorId::new("alice")));
        assert_eq!(s.resolve(Some("alice-token-0123456")), None);
        assert_eq!(s.resolve(Some("Bearer nope")), None);
        assert_eq!(s.resolve(None), None);
    }

    #[test]
    fn rejects_bad_files() {
        assert_eq!(TokenStore::parse("onlyone").unwrap_err(), TokenError::Malformed { line: 1 });
        assert!(matches!(TokenStore::parse("short a"), Err(TokenError::TooShort(_))));
        assert_eq!(
            TokenStore::parse("aaaaaaaaaaaaaaaaaaaa a\naaaaaaaaaaaaaaaaaaaa b").unwrap_err(),
            TokenError::Duplicate { line: 2 }
        );
    }
}
