use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five-way label set of the drug–gene–mutation corpora.
pub const NARY_LABELS: [&str; 5] = [
    "resistance or nonresponse",
    "sensitivity",
    "response",
    "resistance",
    "none",
];

pub const BINARY_LABELS: [&str; 2] = ["yes", "no"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Five-class n-ary relation labels.
    Nary5,
    /// Two-class n-ary labels ("none" collapsed to "no", the rest to "yes").
    Nary2,
    /// Binary abstract-level relation (e.g. chemical–disease).
    BinaryAbs,
}

impl Task {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Task::Nary5 => &NARY_LABELS,
            Task::Nary2 | Task::BinaryAbs => &BINARY_LABELS,
        }
    }

    /// Label treated as positive by precision/recall, for binary tasks.
    pub fn positive_label(self) -> Option<&'static str> {
        match self {
            Task::Nary5 => None,
            Task::Nary2 | Task::BinaryAbs => Some("yes"),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::Config(format!("unknown task {name:?} (nary5, nary2, binary_abs)")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Nary5 => "nary5",
            Task::Nary2 => "nary2",
            Task::BinaryAbs => "binary_abs",
        }
    }
}

/// Maps a five-class label to "yes"/"no". Labels that are already binary are
/// rejected so a double collapse cannot pass silently.
pub fn collapse_to_binary(label: &str) -> Result<&'static str> {
    match label {
        "none" => Ok("no"),
        l if NARY_LABELS.contains(&l) => Ok("yes"),
        other => Err(Error::Label(other.to_string())),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepArc {
    /// Index of the head token; a root points at itself.
    pub head: usize,
    pub label: String,
}

/// Half-open token interval `[start, end)`.
pub type Span = [usize; 2];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    /// Entity slot, e.g. `DRUG`, `GENE`, `MUTATION`.
    pub eid: String,
    #[serde(default)]
    pub kb_ids: Vec<String>,
    pub mentions: Vec<Span>,
    /// Optional per-mention normalization IDs, parallel to `mentions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mention_kb_ids: Option<Vec<Vec<String>>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub dep_head: Vec<DepArc>,
    pub entities: Vec<Entity>,
    pub label: String,
    pub task: Task,
    /// Id of the instance this one was expanded from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl RelationInstance {
    pub fn heads(&self) -> Vec<usize> {
        self.dep_head.iter().map(|d| d.head).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id used to aggregate expanded instances.
    pub fn group_id(&self) -> &str {
        self.group.as_deref().unwrap_or(&self.id)
    }

    pub fn entity(&self, eid: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.eid == eid)
    }

    /// Whether every entity mention lies in one sentence.
    pub fn single_sentence(&self) -> Result<bool> {
        let graph = super::DepGraph::from_heads(&self.heads())?;
        let mut sentences = self
            .entities
            .iter()
            .flat_map(|e| &e.mentions)
            .flat_map(|&[s, e]| s..e)
            .map(|t| graph.sentence_of(t));
        let first = sentences.next();
        Ok(sentences.all(|s| Some(s) == first))
    }

    /// Checks structural invariants; failures carry a field path.
    pub(crate) fn check(&self) -> std::result::Result<(), (String, String)> {
        let n = self.tokens.len();
        if self.dep_head.len() != n {
            return Err((
                "dep_head".into(),
                format!("{} arcs for {n} tokens", self.dep_head.len()),
            ));
        }
        for (i, arc) in self.dep_head.iter().enumerate() {
            if arc.head >= n {
                return Err((format!("dep_head[{i}].head"), format!("head {} out of range", arc.head)));
            }
        }
        if n > 0 && !self.dep_head.iter().enumerate().any(|(i, a)| a.head == i) {
            return Err(("dep_head".into(), "no root token (head == self)".into()));
        }
        let mut taken = vec![None::<usize>; n];
        for (e, entity) in self.entities.iter().enumerate() {
            if entity.mentions.is_empty() {
                return Err((format!("entities[{e}].mentions"), "entity has no mention".into()));
            }
            let mut prev_end = 0;
            for (m, &[start, end]) in entity.mentions.iter().enumerate() {
                let path = format!("entities[{e}].mentions[{m}]");
                if start >= end || end > n {
                    return Err((path, format!("invalid span [{start}, {end}) for {n} tokens")));
                }
                if m > 0 && start < prev_end {
                    return Err((path, "mentions must be sorted and disjoint".into()));
                }
                prev_end = end;
                for slot in &mut taken[start..end] {
                    if let Some(other) = *slot {
                        if other != e {
                            return Err((path, format!("overlaps a mention of entity {other}")));
                        }
                    }
                    *slot = Some(e);
                }
            }
            if let Some(ids) = &entity.mention_kb_ids {
                if ids.len() != entity.mentions.len() {
                    return Err((
                        format!("entities[{e}].mention_kb_ids"),
                        "must have one entry per mention".into(),
                    ));
                }
            }
            if self.entities[..e].iter().any(|o| o.eid == entity.eid) {
                return Err((format!("entities[{e}].eid"), format!("duplicate slot {}", entity.eid)));
            }
        }
        if !self.task.labels().contains(&self.label.as_str()) {
            return Err((
                "label".into(),
                format!("{:?} is not a {} label", self.label, self.task.name()),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|(path, message)| Error::Instance {
            id: self.id.clone(),
            message: format!("{path}: {message}"),
        })
    }

    /// Re-labels the instance for `target`; only identity and the
    /// five-to-two-class collapse are defined.
    pub fn relabel(&self, target: Task) -> Result<RelationInstance> {
        if self.task == target {
            return Ok(self.clone());
        }
        match (self.task, target) {
            (Task::Nary5, Task::Nary2) => Ok(RelationInstance {
                label: collapse_to_binary(&self.label)?.to_string(),
                task: Task::Nary2,
                ..self.clone()
            }),
            (from, to) => Err(Error::Config(format!(
                "cannot convert {} labels to {}",
                from.name(),
                to.name()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::chain_instance;

    #[test]
    fn collapse_follows_two_class_rule() {
        assert_eq!(collapse_to_binary("none").unwrap(), "no");
        assert_eq!(collapse_to_binary("sensitivity").unwrap(), "yes");
        assert_eq!(collapse_to_binary("resistance or nonresponse").unwrap(), "yes");
        assert_eq!(collapse_to_binary("response").unwrap(), "yes");
        assert_eq!(collapse_to_binary("resistance").unwrap(), "yes");
        assert!(matches!(collapse_to_binary("yes"), Err(Error::Label(_))));
        assert!(matches!(collapse_to_binary("no"), Err(Error::Label(_))));
        assert!(matches!(collapse_to_binary("Sensitivity"), Err(Error::Label(_))));
    }

    #[test]
    fn task_names_round_trip() {
        for t in [Task::Nary5, Task::Nary2, Task::BinaryAbs] {
            assert_eq!(Task::parse(t.name()).unwrap(), t);
        }
        assert!(Task::parse("ternary").is_err());
    }

    #[test]
    fn validation_catches_broken_instances() {
        let ok = chain_instance();
        ok.validate().unwrap();

        let mut bad = ok.clone();
        bad.dep_head[0].head = 9;
        assert!(bad.check().unwrap_err().0 == "dep_head[0].head");

        let mut bad = ok.clone();
        bad.entities[1].mentions = vec![[0, 2]];
        assert!(bad.check().unwrap_err().1.contains("overlaps"));

        let mut bad = ok.clone();
        bad.entities[0].mentions = vec![[2, 3], [0, 1]];
        assert!(bad.check().unwrap_err().1.contains("sorted"));

        let mut bad = ok.clone();
        bad.label = "yes".into();
        assert_eq!(bad.check().unwrap_err().0, "label");

        let mut bad = ok.clone();
        bad.dep_head = (0..4).map(|i| DepArc { head: (i + 1) % 4, label: "x".into() }).collect();
        assert!(bad.check().unwrap_err().1.contains("no root"));
    }

    #[test]
    fn relabel_collapses_only_five_class() {
        let inst = chain_instance();
        let two = inst.relabel(Task::Nary2).unwrap();
        assert_eq!(two.label, "yes");
        assert_eq!(two.task, Task::Nary2);
        assert!(two.relabel(Task::Nary5).is_err());
        assert_eq!(two.relabel(Task::Nary2).unwrap(), two);
    }
}
