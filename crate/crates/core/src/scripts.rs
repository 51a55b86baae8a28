//! Discovery and loading of shell scripts referenced by pipeline commands.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{CommandLine, PipelineConfig};
use crate::shell;
use crate::Warning;

/// Read access to a repository snapshot keyed by repo-relative paths.
pub trait FileTree: Send + Sync {
    fn read(&self, path: &str) -> Option<String>;
}

/// A repository checked out on the local filesystem.
#[derive(Debug, Clone)]
pub struct DirTree {
    root: PathBuf,
}

impl DirTree {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl FileTree for DirTree {
    fn read(&self, path: &str) -> Option<String> {
        if normalize(path) != Ok(path.to_string()) {
            return None;
        }
        let full = self.root.join(path);
        if !full.is_file() {
            return None;
        }
        std::fs::read(full)
            .ok()
            .map(|bytes| String::from_utf8_lossy(&bytes).into_owned())
    }
}

/// An in-memory snapshot, e.g. files fetched over HTTP.
#[derive(Debug, Clone, Default)]
pub struct MapTree {
    files: BTreeMap<String, String>,
}

impl MapTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, content: impl Into<String>) {
        self.files.insert(path.into(), content.into());
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for MapTree {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self {
            files: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

impl FileTree for MapTree {
    fn read(&self, path: &str) -> Option<String> {
        self.files.get(path).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScriptRef {
    pub raw_token: String,
    pub normalized_path: String,
    pub referencing_command: CommandLine,
    /// Token depends on a variable or glob and cannot be looked up.
    pub unresolvable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScriptDocument {
    pub path: String,
    #[serde(skip_serializing)]
    pub content: Option<String>,
    pub resolved: bool,
    /// Every command that runs this script.
    #[serde(skip_serializing)]
    pub references: Vec<CommandLine>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Rejection {
    Url,
    Absolute,
    EscapesRoot,
    Empty,
}

const ROOT_VARIABLES: &[&str] = &["$TRAVIS_BUILD_DIR/", "${TRAVIS_BUILD_DIR}/"];

/// Collapses `./` and duplicate separators; rejects paths that leave the
/// repository.
fn normalize(token: &str) -> Result<String, Rejection> {
    if token.contains("://") {
        return Err(Rejection::Url);
    }
    let mut token = token;
    for prefix in ROOT_VARIABLES {
        if let Some(rest) = token.strip_prefix(prefix) {
            token = rest;
        }
    }
    if token.starts_with('/') || token.starts_with('~') {
        return Err(Rejection::Absolute);
    }
    let mut parts = Vec::new();
    for part in token.split(['/', '\\']) {
        match part {
            "" | "." => {}
            ".." => return Err(Rejection::EscapesRoot),
            other => parts.push(other),
        }
    }
    if parts.is_empty() {
        return Err(Rejection::Empty);
    }
    Ok(parts.join("/"))
}

const INTERPRETERS: &[&str] = &["sh", "bash", "source", "."];

fn has_script_suffix(token: &str) -> bool {
    token.ends_with(".sh") || token.ends_with(".bash")
}

/// Candidate script tokens of one simple command, in order of appearance.
fn candidate_tokens(segment: &str) -> Vec<String> {
    let all = shell::words(shell::strip_control_keywords(segment));
    let words = shell::strip_prefixes(&all);
    let mut out: Vec<String> = Vec::new();
    let Some(first) = words.first() else { return out };

    if INTERPRETERS.contains(&first.as_str()) {
        for arg in &words[1..] {
            if arg == "-c" {
                break;
            }
            if arg.starts_with('-') || arg.starts_with('+') {
                continue;
            }
            out.push(arg.clone());
            break;
        }
    } else if first.starts_with("./") {
        let name = first.rsplit('/').next().unwrap_or_default();
        if !name.contains('.') || has_script_suffix(name) {
            out.push(first.clone());
        }
    }
    for word in words {
        if has_script_suffix(word) && !out.contains(word) {
            out.push(word.clone());
        }
    }
    out
}

/// Script references in `cmd`, with warnings for tokens that had to be
/// dropped or cannot be resolved.
pub fn extract_script_refs_with_warnings(cmd: &CommandLine) -> (Vec<ScriptRef>, Vec<Warning>) {
    let mut refs: Vec<ScriptRef> = Vec::new();
    let mut warnings = Vec::new();
    for segment in shell::split_commands(&cmd.text) {
        if shell::is_comment(segment) {
            continue;
        }
        for token in candidate_tokens(segment) {
            let dynamic = token.contains('$') && !ROOT_VARIABLES.iter().any(|v| token.starts_with(v))
                || token.contains('`')
                || token.contains(['*', '?', '[']);
            let normalized = match normalize(&token) {
                Ok(p) => p,
                Err(Rejection::Url | Rejection::Empty) => continue,
                Err(Rejection::Absolute) => {
                    warnings.push(Warning::new(
                        "script_outside_repo",
                        format!("`{token}` is an absolute path; ignored"),
                    ));
                    continue;
                }
                Err(Rejection::EscapesRoot) => {
                    warnings.push(Warning::new(
                        "script_outside_repo",
                        format!("`{token}` escapes the repository root; ignored"),
                    ));
                    continue;
                }
            };
            if dynamic {
                warnings.push(Warning::new(
                    "unresolvable_script",
                    format!("`{token}` depends on a variable or glob"),
                ));
            }
            if refs.iter().any(|r| r.normalized_path == normalized) {
                continue;
            }
            refs.push(ScriptRef {
                raw_token: token,
                normalized_path: normalized,
                referencing_command: cmd.clone(),
                unresolvable: dynamic,
            });
        }
    }
    (refs, warnings)
}

pub fn extract_script_refs(cmd: &CommandLine) -> Vec<ScriptRef> {
    extract_script_refs_with_warnings(cmd).0
}

/// One document per distinct path, in order of first reference.
pub fn resolve_scripts(refs: &[ScriptRef], tree: &dyn FileTree) -> Vec<ScriptDocument> {
    let mut docs: Vec<ScriptDocument> = Vec::new();
    let mut by_path: HashMap<&str, usize> = HashMap::new();
    for r in refs {
        match by_path.get(r.normalized_path.as_str()) {
            Some(&i) => {
                if !docs[i].references.contains(&r.referencing_command) {
                    docs[i].references.push(r.referencing_command.clone());
                }
            }
            None => {
                let content = if r.unresolvable {
                    None
                } else {
                    tree.read(&r.normalized_path)
                };
                by_path.insert(&r.normalized_path, docs.len());
                docs.push(ScriptDocument {
                    path: r.normalized_path.clone(),
                    resolved: content.is_some(),
                    content,
                    references: vec![r.referencing_command.clone()],
                });
            }
        }
    }
    docs
}

#[derive(Debug, Clone, Default)]
pub struct ScriptResolution {
    pub refs: Vec<ScriptRef>,
    pub scripts: Vec<ScriptDocument>,
    pub warnings: Vec<Warning>,
}

/// Nesting limit when following scripts called from scripts.
const MAX_SCRIPT_DEPTH: usize = 8;

/// Resolves every script referenced by the pipeline's commands. With
/// `recursive`, scripts called from resolved scripts are followed as well and
/// attributed to the pipeline command that started the chain.
pub fn resolve_pipeline_scripts(
    cfg: &PipelineConfig,
    tree: &dyn FileTree,
    recursive: bool,
) -> ScriptResolution {
    let mut refs = Vec::new();
    let mut warnings = Vec::new();
    for cmd in cfg.jobs.iter().flat_map(|j| j.commands()) {
        let (r, w) = extract_script_refs_with_warnings(cmd);
        refs.extend(r);
        warnings.extend(w);
    }
    let mut scripts = resolve_scripts(&refs, tree);

    if recursive {
        let mut frontier: Vec<usize> = (0..scripts.len()).collect();
        for _ in 0..MAX_SCRIPT_DEPTH {
            let mut nested = Vec::new();
            for &i in &frontier {
                let Some(content) = scripts[i].content.clone() else { continue };
                for origin in scripts[i].references.clone() {
                    let cmd = CommandLine {
                        text: content.clone(),
                        ..origin
                    };
                    let (r, w) = extract_script_refs_with_warnings(&cmd);
                    warnings.extend(w);
                    nested.extend(r.into_iter().map(|r| ScriptRef {
                        referencing_command: CommandLine {
                            text: scripts[i].path.clone(),
                            ..r.referencing_command.clone()
                        },
                        ..r
                    }));
                }
            }
            let before = scripts.len();
            if nested.is_empty() {
                break;
            }
            refs.extend(nested.iter().cloned());
            let merged = merge_nested(std::mem::take(&mut scripts), &nested, tree);
            scripts = merged;
            frontier = (before..scripts.len()).collect();
            if frontier.is_empty() {
                break;
            }
        }
    }

    ScriptResolution {
        refs,
        scripts,
        warnings,
    }
}

fn merge_nested(mut scripts: Vec<ScriptDocument>, nested: &[ScriptRef], tree: &dyn FileTree) -> Vec<ScriptDocument> {
    for r in nested {
        if let Some(doc) = scripts.iter_mut().find(|d| d.path == r.normalized_path) {
            if !doc.references.contains(&r.referencing_command) {
                doc.references.push(r.referencing_command.clone());
            }
            continue;
        }
        let content = if r.unresolvable {
            None
        } else {
            tree.read(&r.normalized_path)
        };
        scripts.push(ScriptDocument {
            path: r.normalized_path.clone(),
            resolved: content.is_some(),
            content,
            references: vec![r.referencing_command.clone()],
        });
    }
    scripts
}
