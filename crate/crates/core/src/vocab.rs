//! Closed token vocabulary shared by questions, column names and text cells.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const UNK_TOKEN: &str = "<unk>";

/// Fixed vocabulary with a reserved unknown token. Token ids are stable
/// across save/load because the token list itself is persisted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Build from a token list; duplicates collapse, `<unk>` is appended.
    pub fn closed(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in tokens {
            v.push(t);
        }
        v.push(UNK_TOKEN.to_string());
        v
    }

    fn push(&mut self, t: String) {
        if !self.index.contains_key(&t) {
            self.index.insert(t.clone(), self.tokens.len());
            self.tokens.push(t);
        }
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    /// Id of a token, falling back to the unknown token.
    pub fn id(&self, token: &str) -> usize {
        self.index
            .get(token)
            .copied()
            .unwrap_or_else(|| self.index[UNK_TOKEN])
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_tokens_map_to_unk() {
        let v = Vocab::closed(["sum".to_string(), "count".to_string()]);
        assert_eq!(v.id("sum"), 0);
        assert_eq!(v.id("never-seen"), v.id(UNK_TOKEN));
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn duplicates_collapse() {
        let v = Vocab::closed(["a".to_string(), "a".to_string(), "b".to_string()]);
        assert_eq!(v.len(), 3); // a, b, <unk>
    }
}
