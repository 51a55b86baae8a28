//! A small YAML document tree built from parser events.
//!
//! Mappings keep insertion order. Duplicate keys resolve to the last
//! occurrence and are reported back to the caller. Anchors, aliases and
//! `<<` merge keys are resolved while the tree is built.

use std::collections::HashMap;

use serde_json::Value;
use yaml_rust2::parser::{Event, MarkedEventReceiver, Parser};
use yaml_rust2::scanner::{Marker, TScalarStyle};
use yaml_rust2::ScanError;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Seq(Vec<Node>),
    Map(Mapping),
}

/// Ordered string-keyed mapping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mapping {
    entries: Vec<(String, Node)>,
}

impl Mapping {
    pub fn get(&self, key: &str) -> Option<&Node> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Node)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts or replaces in place. Returns the previous value.
    pub fn insert(&mut self, key: String, value: Node) -> Option<Node> {
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some((_, slot)) => Some(std::mem::replace(slot, value)),
            None => {
                self.entries.push((key, value));
                None
            }
        }
    }
}

impl Node {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Node::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&Mapping> {
        match self {
            Node::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_seq(&self) -> Option<&[Node]> {
        match self {
            Node::Seq(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Node::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Node::Null)
    }

    pub fn get(&self, key: &str) -> Option<&Node> {
        self.as_map().and_then(|m| m.get(key))
    }

    /// Text of a scalar node; `None` for null and collections.
    pub fn scalar_text(&self) -> Option<String> {
        match self {
            Node::Str(s) => Some(s.clone()),
            Node::Bool(b) => Some(b.to_string()),
            Node::Int(i) => Some(i.to_string()),
            Node::Float(f) => Some(f.to_string()),
            Node::Null | Node::Seq(_) | Node::Map(_) => None,
        }
    }

    /// Scalar texts of a scalar or a sequence of scalars.
    pub fn string_list(&self) -> Vec<String> {
        match self {
            Node::Seq(items) => items.iter().filter_map(Node::scalar_text).collect(),
            other => other.scalar_text().into_iter().collect(),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Node::Null => Value::Null,
            Node::Bool(b) => Value::Bool(*b),
            Node::Int(i) => Value::from(*i),
            Node::Float(f) => serde_json::Number::from_f64(*f)
                .map(Value::Number)
                .unwrap_or_else(|| Value::String(f.to_string())),
            Node::Str(s) => Value::String(s.clone()),
            Node::Seq(items) => Value::Array(items.iter().map(Node::to_json).collect()),
            Node::Map(m) => Value::Object(
                m.iter()
                    .map(|(k, v)| (k.to_string(), v.to_json()))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateKey {
    pub key: String,
    /// 1-based line of the later occurrence.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedYaml {
    /// Root of the first document; `None` for an empty stream.
    pub root: Option<Node>,
    pub duplicates: Vec<DuplicateKey>,
}

/// Parses the first YAML document in `text`.
pub fn load(text: &str) -> Result<LoadedYaml, ScanError> {
    let mut builder = TreeBuilder::default();
    Parser::new_from_str(text).load(&mut builder, false)?;
    Ok(LoadedYaml {
        root: builder.root,
        duplicates: builder.duplicates,
    })
}

const MERGE_KEY: &str = "<<";

enum Frame {
    Seq {
        anchor: usize,
        items: Vec<Node>,
    },
    Map {
        anchor: usize,
        mapping: Mapping,
        pending_key: Option<String>,
        merges: Vec<Node>,
    },
}

#[derive(Default)]
struct TreeBuilder {
    stack: Vec<Frame>,
    anchors: HashMap<usize, Node>,
    root: Option<Node>,
    done: bool,
    duplicates: Vec<DuplicateKey>,
}

impl TreeBuilder {
    fn finish_node(&mut self, anchor: usize, node: Node, mark: Marker) {
        if anchor > 0 {
            self.anchors.insert(anchor, node.clone());
        }
        match self.stack.last_mut() {
            None => {
                if !self.done {
                    self.root = Some(node);
                    self.done = true;
                }
            }
            Some(Frame::Seq { items, .. }) => items.push(node),
            Some(Frame::Map {
                mapping,
                pending_key,
                merges,
                ..
            }) => match pending_key.take() {
                None => {
                    *pending_key = Some(match node.scalar_text() {
                        Some(text) => text,
                        None => node.to_json().to_string(),
                    });
                }
                Some(key) if key == MERGE_KEY => merges.push(node),
                Some(key) => {
                    if mapping.insert(key.clone(), node).is_some() {
                        self.duplicates.push(DuplicateKey {
                            key,
                            line: mark.line(),
                        });
                    }
                }
            },
        }
    }
}

fn apply_merges(mapping: &mut Mapping, merges: Vec<Node>) {
    for source in merges {
        let sources = match source {
            Node::Seq(items) => items,
            other => vec![other],
        };
        for src in sources {
            if let Node::Map(m) = src {
                for (k, v) in m.entries {
                    if !mapping.contains_key(&k) {
                        mapping.entries.push((k, v));
                    }
                }
            }
        }
    }
}

fn resolve_plain(text: &str) -> Node {
    match text {
        "" | "~" | "null" | "Null" | "NULL" => return Node::Null,
        "true" | "True" | "TRUE" => return Node::Bool(true),
        "false" | "False" | "FALSE" => return Node::Bool(false),
        _ => {}
    }
    if let Ok(i) = text.parse::<i64>() {
        return Node::Int(i);
    }
    let looks_numeric = text
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
        && text.chars().any(|c| c.is_ascii_digit());
    if looks_numeric {
        if let Ok(f) = text.parse::<f64>() {
            return Node::Float(f);
        }
    }
    Node::Str(text.to_string())
}

impl MarkedEventReceiver for TreeBuilder {
    fn on_event(&mut self, ev: Event, mark: Marker) {
        match ev {
            Event::Scalar(value, style, anchor, tag) => {
                // A mapping key keeps its literal text.
                if let Some(Frame::Map {
                    pending_key: pending @ None,
                    ..
                }) = self.stack.last_mut()
                {
                    *pending = Some(value);
                    return;
                }
                let explicit_str = tag.as_ref().is_some_and(|t| t.suffix == "str");
                let node = if style == TScalarStyle::Plain && !explicit_str {
                    resolve_plain(&value)
                } else {
                    Node::Str(value)
                };
                self.finish_node(anchor, node, mark);
            }
            Event::Alias(id) => {
                let node = self.anchors.get(&id).cloned().unwrap_or(Node::Null);
                self.finish_node(0, node, mark);
            }
            Event::SequenceStart(anchor, _) => self.stack.push(Frame::Seq {
                anchor,
                items: Vec::new(),
            }),
            Event::MappingStart(anchor, _) => self.stack.push(Frame::Map {
                anchor,
                mapping: Mapping::default(),
                pending_key: None,
                merges: Vec::new(),
            }),
            Event::SequenceEnd => {
                if let Some(Frame::Seq { anchor, items }) = self.stack.pop() {
                    self.finish_node(anchor, Node::Seq(items), mark);
                }
            }
            Event::MappingEnd => {
                if let Some(Frame::Map {
                    anchor,
                    mut mapping,
                    merges,
                    ..
                }) = self.stack.pop()
                {
                    apply_merges(&mut mapping, merges);
                    self.finish_node(anchor, Node::Map(mapping), mark);
                }
            }
            Event::Nothing
            | Event::StreamStart
            | Event::StreamEnd
            | Event::DocumentStart
            | Event::DocumentEnd => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars_resolve_by_style() {
        let doc = load("a: 1\nb: '1'\nc: true\nd: ~\ne: 3.11\nf: on\n").unwrap();
        let root = doc.root.unwrap();
        assert_eq!(root.get("a"), Some(&Node::Int(1)));
        assert_eq!(root.get("b"), Some(&Node::Str("1".into())));
        assert_eq!(root.get("c"), Some(&Node::Bool(true)));
        assert_eq!(root.get("d"), Some(&Node::Null));
        assert_eq!(root.get("e"), Some(&Node::Float(3.11)));
        assert_eq!(root.get("f"), Some(&Node::Str("on".into())));
    }

    #[test]
    fn duplicate_keys_last_wins() {
        let doc = load("script: a\nlanguage: c\nscript: b\n").unwrap();
        let root = doc.root.unwrap();
        assert_eq!(root.get("script"), Some(&Node::Str("b".into())));
        assert_eq!(root.as_map().unwrap().keys().collect::<Vec<_>>(), ["script", "language"]);
        assert_eq!(
            doc.duplicates,
            vec![DuplicateKey {
                key: "script".into(),
                line: 3
            }]
        );
    }

    #[test]
    fn anchors_and_merge_keys() {
        let text = "\
base: &base
  install: pip install x
  script: pytest
jobs:
  include:
    - <<: *base
      script: flake8
    - *base
";
        let root = load(text).unwrap().root.unwrap();
        let include = root.get("jobs").unwrap().get("include").unwrap().as_seq().unwrap();
        assert_eq!(include[0].get("script"), Some(&Node::Str("flake8".into())));
        assert_eq!(
            include[0].get("install"),
            Some(&Node::Str("pip install x".into()))
        );
        assert_eq!(include[1].get("script"), Some(&Node::Str("pytest".into())));
    }

    #[test]
    fn empty_stream_has_no_root() {
        assert_eq!(load("").unwrap().root, None);
        assert_eq!(load("# only a comment\n").unwrap().root, None);
    }

    #[test]
    fn malformed_is_error() {
        assert!(load("a: [1, 2\nb: c").is_err());
    }
}
