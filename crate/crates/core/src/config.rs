//! Normalized model of a Travis CI configuration.
//!
//! A pipeline is an ordered list of stages, each stage holds one or more jobs
//! running in parallel, and every job runs an ordered sequence of lifecycle
//! phases. `jobs.include` / `matrix.include` entries become explicit jobs;
//! otherwise the top-level phases form a single implicit job.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::yaml::{self, Mapping, Node};
use crate::Warning;

/// File name Travis reads from the repository root.
pub const CONFIG_FILE_NAME: &str = ".travis.yml";

/// Label reported for jobs that do not declare a stage.
pub const IMPLICIT_STAGE: &str = "implicit";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("not a pipeline: {0}")]
    NotAPipeline(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub repo_slug: String,
    pub path: String,
    pub content: String,
    /// Set when the source bytes were not valid UTF-8 and had to be replaced.
    #[serde(default)]
    pub replaced_invalid_utf8: bool,
}

impl RawDocument {
    pub fn new(
        repo_slug: impl Into<String>,
        path: impl Into<String>,
        content: impl Into<String>,
    ) -> Self {
        Self {
            repo_slug: repo_slug.into(),
            path: path.into(),
            content: content.into(),
            replaced_invalid_utf8: false,
        }
    }

    pub fn from_bytes(repo_slug: impl Into<String>, path: impl Into<String>, bytes: &[u8]) -> Self {
        let content = String::from_utf8_lossy(bytes);
        let replaced = matches!(content, std::borrow::Cow::Owned(_));
        Self {
            repo_slug: repo_slug.into(),
            path: path.into(),
            content: content.into_owned(),
            replaced_invalid_utf8: replaced,
        }
    }
}

/// Job lifecycle phases in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    BeforeInstall,
    Install,
    BeforeScript,
    Script,
    AfterSuccess,
    AfterFailure,
    BeforeDeploy,
    Deploy,
    AfterDeploy,
    AfterScript,
}

impl PhaseKind {
    pub const ALL: [PhaseKind; 10] = [
        PhaseKind::BeforeInstall,
        PhaseKind::Install,
        PhaseKind::BeforeScript,
        PhaseKind::Script,
        PhaseKind::AfterSuccess,
        PhaseKind::AfterFailure,
        PhaseKind::BeforeDeploy,
        PhaseKind::Deploy,
        PhaseKind::AfterDeploy,
        PhaseKind::AfterScript,
    ];

    pub fn key(self) -> &'static str {
        match self {
            PhaseKind::BeforeInstall => "before_install",
            PhaseKind::Install => "install",
            PhaseKind::BeforeScript => "before_script",
            PhaseKind::Script => "script",
            PhaseKind::AfterSuccess => "after_success",
            PhaseKind::AfterFailure => "after_failure",
            PhaseKind::BeforeDeploy => "before_deploy",
            PhaseKind::Deploy => "deploy",
            PhaseKind::AfterDeploy => "after_deploy",
            PhaseKind::AfterScript => "after_script",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.key() == key)
    }

    pub fn is_deploy_family(self) -> bool {
        matches!(
            self,
            PhaseKind::BeforeDeploy | PhaseKind::Deploy | PhaseKind::AfterDeploy
        )
    }

    /// Environment preparation phases that precede the main work.
    pub fn is_setup(self) -> bool {
        matches!(
            self,
            PhaseKind::BeforeInstall | PhaseKind::Install | PhaseKind::BeforeScript
        )
    }
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommandLine {
    pub text: String,
    pub phase: PhaseKind,
    pub job_index: usize,
    /// Position within the phase.
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Job {
    pub index: usize,
    /// Stage name as written.
    pub stage_name: Option<String>,
    pub display_name: Option<String>,
    pub phases: BTreeMap<PhaseKind, Vec<CommandLine>>,
    /// Raw `if:` expression.
    pub condition: Option<String>,
    /// Job-level `branches: only`.
    pub branch_only: Option<Vec<String>>,
    pub deploy_providers: Vec<String>,
    /// Path of the job inside the document, e.g. `jobs.include[2]`.
    pub config_path: String,
}

impl Job {
    pub fn has_deploy(&self) -> bool {
        self.phases.keys().any(|p| p.is_deploy_family())
    }

    pub fn commands(&self) -> impl Iterator<Item = &CommandLine> {
        self.phases.values().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Email,
    Slack,
    Webhooks,
    Irc,
    Campfire,
    Flowdock,
    Hipchat,
    Pushover,
    Other,
}

impl ChannelKind {
    fn from_key(key: &str) -> Self {
        match key {
            "email" => ChannelKind::Email,
            "slack" => ChannelKind::Slack,
            "webhooks" => ChannelKind::Webhooks,
            "irc" => ChannelKind::Irc,
            "campfire" => ChannelKind::Campfire,
            "flowdock" => ChannelKind::Flowdock,
            "hipchat" => ChannelKind::Hipchat,
            "pushover" => ChannelKind::Pushover,
            _ => ChannelKind::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NotificationConfig {
    /// Channels that can deliver a notification.
    pub channels: BTreeSet<ChannelKind>,
    /// Channels declared but switched off.
    pub disabled: BTreeSet<ChannelKind>,
    pub email_explicitly_disabled: bool,
    /// Keys of channels that fell into `Other`.
    pub other_names: Vec<String>,
    pub raw: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageDecl {
    pub name: String,
    pub condition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub repo_slug: String,
    pub path: String,
    pub declared_stages: Vec<StageDecl>,
    pub jobs: Vec<Job>,
    /// True when jobs came from an include list rather than the implicit job.
    pub explicit_jobs: bool,
    pub global_phases: BTreeMap<PhaseKind, Vec<CommandLine>>,
    pub notifications: Option<NotificationConfig>,
    pub allow_failures_present: bool,
    /// Document path of the `allow_failures` key when present.
    pub allow_failures_path: Option<String>,
    pub global_branch_only: Option<Vec<String>>,
    /// Top-level `if:` build condition.
    pub global_condition: Option<String>,
    /// Addon names declared at top level or on any job.
    pub addons: BTreeSet<String>,
    /// The document names SonarCloud anywhere (addon, host URL, token variable).
    pub mentions_sonarcloud: bool,
    pub has_deploy: bool,
    pub warnings: Vec<Warning>,
}

impl PipelineConfig {
    pub fn declared_stage_order(&self) -> Vec<&str> {
        self.declared_stages.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn job(&self, index: usize) -> Option<&Job> {
        self.jobs.get(index)
    }

    pub fn command_count(&self) -> usize {
        self.jobs.iter().map(|j| j.commands().count()).sum()
    }
}

/// Keys whose presence marks a document as a Travis pipeline.
fn is_lifecycle_key(key: &str) -> bool {
    PhaseKind::from_key(key).is_some() || matches!(key, "jobs" | "matrix" | "language")
}

/// Cheap validity gate used to drop non-Travis YAML before analysis.
pub fn is_travis_pipeline(doc: &RawDocument) -> bool {
    match yaml::load(&doc.content) {
        Ok(loaded) => loaded
            .root
            .as_ref()
            .and_then(Node::as_map)
            .is_some_and(|m| m.keys().any(is_lifecycle_key)),
        Err(_) => false,
    }
}

pub fn resolve_stage_name(job: &Job) -> String {
    job.stage_name
        .clone()
        .unwrap_or_else(|| IMPLICIT_STAGE.to_string())
}

pub fn parse_config(doc: &RawDocument) -> Result<PipelineConfig, ConfigError> {
    let loaded =
        yaml::load(&doc.content).map_err(|e| ConfigError::MalformedDocument(e.to_string()))?;
    let root = match loaded.root {
        Some(Node::Map(m)) => m,
        Some(_) => {
            return Err(ConfigError::NotAPipeline(
                "top-level value is not a mapping".into(),
            ))
        }
        None => return Err(ConfigError::NotAPipeline("document is empty".into())),
    };
    if !root.keys().any(is_lifecycle_key) {
        return Err(ConfigError::NotAPipeline(
            "no lifecycle, jobs, matrix or language key".into(),
        ));
    }

    let mut warnings = Vec::new();
    if doc.replaced_invalid_utf8 {
        warnings.push(Warning::new(
            "invalid_utf8",
            "invalid UTF-8 sequences were replaced",
        ));
    }
    for dup in &loaded.duplicates {
        warnings.push(Warning::new(
            "duplicate_key",
            format!(
                "key `{}` repeated at line {}; last occurrence wins",
                dup.key, dup.line
            ),
        ));
    }

    let mut parser = JobParser {
        warnings: &mut warnings,
    };

    // Global phases carry job_index 0 until merged into a job.
    let global = parser.phases(&root, 0, "");
    let mut addons: BTreeSet<String> = addon_names(&root);

    let declared_stages = parse_stages(root.get("stages"));
    let global_branch_only = root.get("branches").and_then(branch_only);
    let global_condition = root.get("if").and_then(Node::scalar_text);

    let mut includes: Vec<(String, &Node)> = Vec::new();
    let mut allow_failures_path = None;
    for key in ["jobs", "matrix"] {
        let Some(node) = root.get(key) else { continue };
        match node {
            Node::Map(m) => {
                if m.contains_key("allow_failures") && allow_failures_path.is_none() {
                    allow_failures_path = Some(format!("{key}.allow_failures"));
                }
                match m.get("include") {
                    Some(Node::Seq(items)) => includes.extend(
                        items
                            .iter()
                            .enumerate()
                            .map(|(i, n)| (format!("{key}.include[{i}]"), n)),
                    ),
                    Some(n @ Node::Map(_)) => includes.push((format!("{key}.include"), n)),
                    _ => {}
                }
            }
            // Legacy form: the key holds the include list directly.
            Node::Seq(items) => includes.extend(
                items
                    .iter()
                    .enumerate()
                    .map(|(i, n)| (format!("{key}[{i}]"), n)),
            ),
            _ => {}
        }
    }

    let mut jobs = Vec::new();
    for (path, node) in includes {
        let Some(entry) = node.as_map() else {
            parser.warnings.push(Warning::new(
                "ignored_job",
                format!("{path} is not a mapping"),
            ));
            continue;
        };
        let index = jobs.len();
        let (own, providers) = parser.phases(entry, index, &path);
        let mut phases = own;
        for (phase, cmds) in &global.0 {
            phases.entry(*phase).or_insert_with(|| reindex(cmds, index));
        }
        let mut deploy_providers = providers;
        if !entry.contains_key("deploy") {
            deploy_providers.extend(global.1.iter().cloned());
        }
        addons.extend(addon_names(entry));
        jobs.push(Job {
            index,
            stage_name: entry.get("stage").and_then(non_empty_text),
            display_name: entry.get("name").and_then(non_empty_text),
            phases,
            condition: entry.get("if").and_then(Node::scalar_text),
            branch_only: entry.get("branches").and_then(branch_only),
            deploy_providers,
            config_path: path,
        });
    }

    let explicit_jobs = !jobs.is_empty();
    if !explicit_jobs {
        jobs.push(Job {
            index: 0,
            stage_name: None,
            display_name: None,
            phases: global.0.clone(),
            condition: None,
            branch_only: None,
            deploy_providers: global.1.clone(),
            config_path: String::new(),
        });
    }

    let has_deploy = jobs.iter().any(Job::has_deploy)
        || global.0.keys().any(|p| p.is_deploy_family());

    Ok(PipelineConfig {
        repo_slug: doc.repo_slug.clone(),
        path: doc.path.clone(),
        declared_stages,
        jobs,
        explicit_jobs,
        global_phases: global.0,
        notifications: root.get("notifications").map(parse_notifications),
        allow_failures_present: allow_failures_path.is_some(),
        allow_failures_path,
        global_branch_only,
        global_condition,
        addons,
        mentions_sonarcloud: doc.content.to_ascii_lowercase().contains("sonarcloud"),
        has_deploy,
        warnings,
    })
}

fn reindex(cmds: &[CommandLine], job_index: usize) -> Vec<CommandLine> {
    cmds.iter()
        .map(|c| CommandLine {
            job_index,
            ..c.clone()
        })
        .collect()
}

fn non_empty_text(node: &Node) -> Option<String> {
    node.scalar_text()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
}

fn addon_names(map: &Mapping) -> BTreeSet<String> {
    map.get("addons")
        .and_then(Node::as_map)
        .map(|m| m.keys().map(str::to_string).collect())
        .unwrap_or_default()
}

fn branch_only(node: &Node) -> Option<Vec<String>> {
    match node {
        Node::Map(m) => m.get("only").map(Node::string_list),
        Node::Seq(_) => Some(node.string_list()),
        _ => None,
    }
}

fn parse_stages(node: Option<&Node>) -> Vec<StageDecl> {
    let Some(node) = node else { return Vec::new() };
    let items: Vec<&Node> = match node {
        Node::Seq(items) => items.iter().collect(),
        other => vec![other],
    };
    items
        .into_iter()
        .filter_map(|item| match item {
            Node::Map(m) => m.get("name").and_then(non_empty_text).map(|name| StageDecl {
                name,
                condition: m.get("if").and_then(Node::scalar_text),
            }),
            other => non_empty_text(other).map(|name| StageDecl {
                name,
                condition: None,
            }),
        })
        .collect()
}

type Phases = BTreeMap<PhaseKind, Vec<CommandLine>>;

struct JobParser<'w> {
    warnings: &'w mut Vec<Warning>,
}

impl JobParser<'_> {
    /// Phases of one job plus the deploy providers it names.
    fn phases(
        &mut self,
        map: &Mapping,
        job_index: usize,
        path: &str,
    ) -> (Phases, Vec<String>) {
        let mut phases = Phases::new();
        let mut providers = Vec::new();
        for phase in PhaseKind::ALL {
            let Some(node) = map.get(phase.key()) else { continue };
            let at = if path.is_empty() {
                phase.key().to_string()
            } else {
                format!("{path}.{}", phase.key())
            };
            let texts = if phase == PhaseKind::Deploy {
                self.deploy_commands(node, &at, &mut providers)
            } else {
                self.command_texts(node, &at)
            };
            let cmds = texts
                .into_iter()
                .enumerate()
                .map(|(ordinal, text)| CommandLine {
                    text,
                    phase,
                    job_index,
                    ordinal,
                })
                .collect();
            phases.insert(phase, cmds);
        }
        (phases, providers)
    }

    fn command_texts(&mut self, node: &Node, at: &str) -> Vec<String> {
        match node {
            Node::Null => Vec::new(),
            Node::Seq(items) => items
                .iter()
                .enumerate()
                .filter_map(|(i, item)| {
                    let text = item.scalar_text();
                    if text.is_none() && !item.is_null() {
                        self.warnings.push(Warning::new(
                            "ignored_command",
                            format!("{at}[{i}] is not a scalar command"),
                        ));
                    }
                    text
                })
                .collect(),
            Node::Map(_) => {
                self.warnings.push(Warning::new(
                    "ignored_command",
                    format!("{at} is a mapping, expected commands"),
                ));
                Vec::new()
            }
            scalar => scalar.scalar_text().into_iter().collect(),
        }
    }

    /// Deploy entries are provider mappings; only the `script` provider
    /// carries shell commands.
    fn deploy_commands(&mut self, node: &Node, at: &str, providers: &mut Vec<String>) -> Vec<String> {
        let entries: Vec<&Node> = match node {
            Node::Seq(items) => items.iter().collect(),
            other => vec![other],
        };
        let mut out = Vec::new();
        for (i, entry) in entries.into_iter().enumerate() {
            match entry {
                Node::Map(m) => {
                    let provider = m
                        .get("provider")
                        .and_then(Node::scalar_text)
                        .unwrap_or_else(|| "unknown".to_string());
                    if provider == "script" {
                        if let Some(script) = m.get("script") {
                            out.extend(self.command_texts(script, &format!("{at}[{i}].script")));
                        }
                    }
                    providers.push(provider);
                }
                Node::Null => {}
                scalar => out.extend(scalar.scalar_text()),
            }
        }
        out
    }
}

const NON_CHANNEL_KEYS: &[&str] = &["template", "if"];

fn channel_enabled(value: &Node) -> Option<bool> {
    match value {
        // No token or address given.
        Node::Null => None,
        Node::Bool(b) => Some(*b),
        Node::Str(s) if s.trim().is_empty() => None,
        Node::Seq(items) if items.is_empty() => None,
        Node::Map(m) => match m.get("enabled").and_then(Node::as_bool) {
            Some(flag) => Some(flag),
            None => Some(true),
        },
        _ => Some(true),
    }
}

pub fn parse_notifications(node: &Node) -> NotificationConfig {
    let mut channels = BTreeSet::new();
    let mut disabled = BTreeSet::new();
    let mut other_names = Vec::new();
    let mut email_explicitly_disabled = false;

    let mut record = |key: &str, value: &Node| {
        if key.starts_with("on_") || NON_CHANNEL_KEYS.contains(&key) {
            return;
        }
        let kind = ChannelKind::from_key(key);
        // An email key with no value still selects the default recipients.
        let state = match (kind, value) {
            (ChannelKind::Email, Node::Null) => Some(true),
            _ => channel_enabled(value),
        };
        match state {
            Some(true) => {
                channels.insert(kind);
            }
            Some(false) => {
                disabled.insert(kind);
                if kind == ChannelKind::Email {
                    email_explicitly_disabled = true;
                }
            }
            None => {}
        }
        if kind == ChannelKind::Other {
            other_names.push(key.to_string());
        }
    };

    match node {
        Node::Map(m) => m.iter().for_each(|(k, v)| record(k, v)),
        Node::Str(s) => record(s, &Node::Bool(true)),
        Node::Seq(items) => {
            for item in items {
                if let Some(name) = item.as_str() {
                    record(name, &Node::Bool(true));
                }
            }
        }
        _ => {}
    }

    // An enabled channel that was also declared disabled elsewhere stays enabled.
    disabled.retain(|k| !channels.contains(k));
    if channels.contains(&ChannelKind::Email) {
        email_explicitly_disabled = false;
    }

    NotificationConfig {
        channels,
        disabled,
        email_explicitly_disabled,
        other_names,
        raw: node.to_json(),
    }
}
