use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::encoders::{CLS_ID, UNK_ID};
use crate::error::{Error, Result};
use crate::graph::RelationInstance;

pub const UNK_TOKEN: &str = "[UNK]";
pub const CLS_TOKEN: &str = "[CLS]";

/// Word-level vocabulary. Ids 0 and 1 are reserved for `[UNK]` and `[CLS]`;
/// the rest are sorted so the mapping does not depend on data order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.get(UNK_ID).map(String::as_str) != Some(UNK_TOKEN)
            || words.get(CLS_ID).map(String::as_str) != Some(CLS_TOKEN)
        {
            return Err(Error::Config("vocabulary must start with [UNK], [CLS]".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn build<'a>(instances: impl IntoIterator<Item = &'a RelationInstance>) -> Self {
        let mut set = BTreeSet::new();
        for inst in instances {
            set.extend(inst.tokens.iter().cloned());
        }
        set.remove(UNK_TOKEN);
        set.remove(CLS_TOKEN);
        let words = [UNK_TOKEN.to_string(), CLS_TOKEN.to_string()]
            .into_iter()
            .chain(set)
            .collect();
        Self::from_words(words).expect("reserved tokens are unique")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    /// `[CLS]` followed by the token ids.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        std::iter::once(CLS_ID)
            .chain(tokens.iter().map(|t| self.id(t)))
            .collect()
    }
}

impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.words.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let words = Vec::<String>::deserialize(d)?;
        Vocab::from_words(words).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DepArc, Task};

    fn inst(tokens: &[&str]) -> RelationInstance {
        RelationInstance {
            id: "v".into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            dep_head: (0..tokens.len()).map(|_| DepArc { head: 0, label: "x".into() }).collect(),
            entities: vec![],
            label: "yes".into(),
            task: Task::Nary2,
            group: None,
        }
    }

    #[test]
    fn build_is_order_independent() {
        let a = inst(&["b", "a", "c"]);
        let b = inst(&["c", "a"]);
        let v1 = Vocab::build([&a, &b]);
        let v2 = Vocab::build([&b, &a]);
        assert_eq!(v1, v2);
        assert_eq!(v1.words(), &["[UNK]", "[CLS]", "a", "b", "c"]);
        assert_eq!(v1.encode(&a.tokens), vec![CLS_ID, 3, 2, 4]);
        assert_eq!(v1.id("zzz"), UNK_ID);
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let v = Vocab::build([&inst(&["x", "y"])]);
        let text = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&text).unwrap(), v);
        assert!(serde_json::from_str::<Vocab>(r#"["a","b"]"#).is_err());
        assert!(serde_json::from_str::<Vocab>(r#"["[UNK]","[CLS]","a","a"]"#).is_err());
    }
}
