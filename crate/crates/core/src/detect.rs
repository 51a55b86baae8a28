//! Token-anchored detection of registered tools in command text.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::config::{PhaseKind, PipelineConfig};
use crate::registry::Registry;
use crate::scripts::ScriptDocument;
use crate::shell;

pub const SONARQUBE: &str = "sonarqube";
pub const SONARCLOUD: &str = "sonarcloud";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectionSource {
    Config,
    Script { path: String },
}

impl DetectionSource {
    pub fn is_script(&self) -> bool {
        matches!(self, DetectionSource::Script { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub tool_id: String,
    pub source: DetectionSource,
    pub phase: PhaseKind,
    pub job_index: usize,
    /// Ordinal of the config command that ran this line (directly or via a
    /// script).
    pub command_ordinal: usize,
    /// Line within the command text or script file, 0-based.
    pub line_ordinal: usize,
    /// Simple command within the line, 0-based.
    pub segment_ordinal: usize,
    pub matched_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectOptions {
    /// Ignore package-manager install commands.
    pub install_exclusion: bool,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            install_exclusion: true,
        }
    }
}

/// Where a piece of text came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectContext {
    pub source: DetectionSource,
    pub phase: PhaseKind,
    pub job_index: usize,
    pub command_ordinal: usize,
    /// Pipeline-level SonarCloud evidence; sonar-scanner maps to sonarcloud.
    pub sonarcloud: bool,
}

impl DetectContext {
    pub fn config(phase: PhaseKind, job_index: usize, command_ordinal: usize) -> Self {
        Self {
            source: DetectionSource::Config,
            phase,
            job_index,
            command_ordinal,
            sonarcloud: false,
        }
    }
}

/// Non-comment simple commands of `text` as (line, segment, text).
pub fn text_segments(text: &str) -> impl Iterator<Item = (usize, usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !shell::is_comment(line))
        .flat_map(|(li, line)| {
            shell::split_commands(line)
                .into_iter()
                .enumerate()
                .map(move |(si, seg)| (li, si, seg))
        })
}

fn is_boundary_punct(c: char) -> bool {
    matches!(
        c,
        ';' | '&' | '|' | '(' | ')' | '`' | '\'' | '"' | '<' | '>' | '{' | '}' | '!'
    )
}

fn is_left_edge(c: char) -> bool {
    c.is_whitespace() || is_boundary_punct(c)
}

fn is_domain_like(segment: &str) -> bool {
    match segment.rsplit_once('.') {
        Some((host, tld)) => {
            !host.is_empty()
                && !host.starts_with('.')
                && tld.len() >= 2
                && tld.chars().all(|c| c.is_ascii_alphabetic())
        }
        None => false,
    }
}

/// A `/`-terminated token prefix that names a directory on disk, as opposed
/// to a URL or a `host:path` / `user@host` reference.
fn is_filesystem_prefix(prefix: &str) -> bool {
    if prefix.contains("://") || prefix.contains(':') || prefix.contains('@') {
        return false;
    }
    !is_domain_like(prefix.split('/').next().unwrap_or_default())
}

fn left_ok(text: &str, start: usize) -> bool {
    let before = &text[..start];
    let Some(prev) = before.chars().next_back() else {
        return true;
    };
    if is_left_edge(prev) {
        return true;
    }
    if prev != '/' {
        return false;
    }
    let token_start = before
        .char_indices()
        .rev()
        .find(|(_, c)| is_left_edge(*c))
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    is_filesystem_prefix(&before[token_start..])
}

fn right_ok(text: &str, end: usize) -> bool {
    match text[end..].chars().next() {
        None => true,
        Some(c) => c.is_whitespace() || is_boundary_punct(c),
    }
}

/// First boundary-respecting match of `re` in `text`.
pub fn find_token<'t>(re: &regex::Regex, text: &'t str) -> Option<regex::Match<'t>> {
    let mut pos = 0;
    while pos <= text.len() {
        let m = re.find_at(text, pos)?;
        if left_ok(text, m.start()) && right_ok(text, m.end()) {
            return Some(m);
        }
        // Retry from the next character so shorter alternatives and later
        // occurrences are considered.
        pos = m.start() + text[m.start()..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

fn mentions_sonarcloud(text: &str) -> bool {
    text.to_ascii_lowercase().contains(SONARCLOUD)
}

/// Detects registered tools in `text`, at most once per (tool, line).
pub fn detect_in_text(
    text: &str,
    registry: &Registry,
    ctx: &DetectContext,
    opts: &DetectOptions,
) -> Vec<Detection> {
    let mut out: Vec<Detection> = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut line_start = 0;
    let mut current_line = usize::MAX;
    let mut line_text = "";
    let lines: Vec<&str> = text.lines().collect();

    for (li, si, seg) in text_segments(text) {
        if li != current_line {
            resolve_sonar(&mut out, line_start, ctx, line_text);
            current_line = li;
            line_start = out.len();
            line_text = lines[li];
        }
        if opts.install_exclusion && shell::is_installer(seg) {
            continue;
        }
        for (ti, tool) in registry.tools.iter().enumerate() {
            if seen.contains(&(ti, li)) {
                continue;
            }
            if let Some(m) = tool.compiled().iter().find_map(|re| find_token(re, seg)) {
                seen.insert((ti, li));
                out.push(Detection {
                    tool_id: tool.id.clone(),
                    source: ctx.source.clone(),
                    phase: ctx.phase,
                    job_index: ctx.job_index,
                    command_ordinal: ctx.command_ordinal,
                    line_ordinal: li,
                    segment_ordinal: si,
                    matched_text: m.as_str().to_string(),
                });
            }
        }
    }
    resolve_sonar(&mut out, line_start, ctx, line_text);
    out
}

/// SonarQube and SonarCloud share the scanner command; keep only the flavor
/// the pipeline points at.
fn resolve_sonar(out: &mut Vec<Detection>, line_start: usize, ctx: &DetectContext, line: &str) {
    let has = |id: &str| out[line_start..].iter().any(|d| d.tool_id == id);
    if !(has(SONARQUBE) && has(SONARCLOUD)) {
        return;
    }
    let drop = if ctx.sonarcloud || mentions_sonarcloud(line) {
        SONARQUBE
    } else {
        SONARCLOUD
    };
    let kept: Vec<Detection> = out.drain(line_start..).filter(|d| d.tool_id != drop).collect();
    out.extend(kept);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invocation {
    Direct,
    Script,
    Both,
}

impl Invocation {
    pub fn has_direct(self) -> bool {
        matches!(self, Invocation::Direct | Invocation::Both)
    }

    pub fn has_script(self) -> bool {
        matches!(self, Invocation::Script | Invocation::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolUsage {
    pub invocation: Invocation,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PipelineToolProfile {
    pub tools: BTreeMap<String, ToolUsage>,
}

impl PipelineToolProfile {
    pub fn from_detections(detections: Vec<Detection>) -> Self {
        let mut grouped: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
        for d in detections {
            grouped.entry(d.tool_id.clone()).or_default().push(d);
        }
        let tools = grouped
            .into_iter()
            .map(|(id, detections)| {
                let direct = detections.iter().any(|d| !d.source.is_script());
                let script = detections.iter().any(|d| d.source.is_script());
                let invocation = match (direct, script) {
                    (true, true) => Invocation::Both,
                    (false, true) => Invocation::Script,
                    _ => Invocation::Direct,
                };
                (id, ToolUsage { invocation, detections })
            })
            .collect();
        Self { tools }
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn tool_ids(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    pub fn invocation(&self, id: &str) -> Option<Invocation> {
        self.tools.get(id).map(|u| u.invocation)
    }

    pub fn detections(&self) -> impl Iterator<Item = &Detection> {
        self.tools.values().flat_map(|u| u.detections.iter())
    }

    pub fn job_detections(&self, job_index: usize) -> impl Iterator<Item = &Detection> {
        self.detections().filter(move |d| d.job_index == job_index)
    }
}

/// Detections from the pipeline's own commands and from every resolved script
/// they reference.
pub fn profile_pipeline(
    cfg: &PipelineConfig,
    scripts: &[ScriptDocument],
    registry: &Registry,
    opts: &DetectOptions,
) -> PipelineToolProfile {
    let mut detections = Vec::new();
    for job in &cfg.jobs {
        for cmd in job.commands() {
            let ctx = DetectContext {
                sonarcloud: cfg.mentions_sonarcloud,
                ..DetectContext::config(cmd.phase, job.index, cmd.ordinal)
            };
            detections.extend(detect_in_text(&cmd.text, registry, &ctx, opts));
        }
    }
    for doc in scripts {
        let Some(content) = &doc.content else { continue };
        let sonarcloud = cfg.mentions_sonarcloud || mentions_sonarcloud(content);
        for origin in &doc.references {
            let ctx = DetectContext {
                source: DetectionSource::Script {
                    path: doc.path.clone(),
                },
                phase: origin.phase,
                job_index: origin.job_index,
                command_ordinal: origin.ordinal,
                sonarcloud,
            };
            detections.extend(detect_in_text(content, registry, &ctx, opts));
        }
    }
    PipelineToolProfile::from_detections(detections)
}
