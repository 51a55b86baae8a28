//! Configuration anti-patterns: Late Merging, Skip-on-Failure, Absent
//! Feedback and Email-only Notifications.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::{ChannelKind, Job, PipelineConfig};
use crate::detect::PipelineToolProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    LateMerging,
    SkipOnFailure,
    AbsentFeedback,
    EmailOnly,
}

impl Finding {
    pub const ALL: [Finding; 4] = [
        Finding::LateMerging,
        Finding::SkipOnFailure,
        Finding::AbsentFeedback,
        Finding::EmailOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Finding::LateMerging => "late_merging",
            Finding::SkipOnFailure => "skip_on_failure",
            Finding::AbsentFeedback => "absent_feedback",
            Finding::EmailOnly => "email_only",
        }
    }
}

/// Whether Late Merging needs every tool-running job restricted or just one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateMergingMode {
    #[default]
    Pipeline,
    Job,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Evidence {
    /// Dotted path into the configuration document.
    pub path: String,
    pub excerpt: String,
}

impl Evidence {
    fn new(path: impl Into<String>, excerpt: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            excerpt: excerpt.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct FindingSet {
    pub late_merging: bool,
    pub skip_on_failure: bool,
    pub absent_feedback: bool,
    pub email_only: bool,
    /// Late Merging under the per-job reading, reported whatever the mode.
    pub late_merging_any_job: bool,
    pub evidence: BTreeMap<Finding, Vec<Evidence>>,
}

impl FindingSet {
    pub fn get(&self, finding: Finding) -> bool {
        match finding {
            Finding::LateMerging => self.late_merging,
            Finding::SkipOnFailure => self.skip_on_failure,
            Finding::AbsentFeedback => self.absent_feedback,
            Finding::EmailOnly => self.email_only,
        }
    }

    pub fn present(&self) -> impl Iterator<Item = Finding> + '_ {
        Finding::ALL.into_iter().filter(|f| self.get(*f))
    }
}

fn push_condition() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)\btype\s*(?:==?\s*['"]?push\b|in\s*\([^)]*\bpush\b)"#).unwrap()
    })
}

fn main_branch_condition() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"(?i)\bbranch\s*(?:==?\s*['"]?(?:main|master)\b|in\s*\([^)]*\b(?:main|master)\b)"#,
        )
        .unwrap()
    })
}

/// An `if:` expression limiting builds to pushes on main or master.
pub fn condition_is_main_push(expr: &str) -> bool {
    push_condition().is_match(expr) && main_branch_condition().is_match(expr)
}

/// A `branches: only` list naming nothing but main and/or master.
pub fn branches_are_main_only(branches: &[String]) -> bool {
    !branches.is_empty() && branches.iter().all(|b| b == "main" || b == "master")
}

/// Why `job` only runs for pushes to the main branch, if it does.
fn job_restriction(cfg: &PipelineConfig, job: &Job) -> Option<Evidence> {
    if let Some(cond) = job.condition.as_deref().filter(|c| condition_is_main_push(c)) {
        return Some(Evidence::new(format!("{}.if", job.config_path), cond));
    }
    if let Some(stage) = &job.stage_name {
        let decl = cfg
            .declared_stages
            .iter()
            .enumerate()
            .find(|(_, s)| s.name.eq_ignore_ascii_case(stage));
        if let Some((i, decl)) = decl {
            if let Some(cond) = decl.condition.as_deref().filter(|c| condition_is_main_push(c)) {
                return Some(Evidence::new(format!("stages[{i}].if"), cond));
            }
        }
    }
    if let Some(cond) = cfg.global_condition.as_deref().filter(|c| condition_is_main_push(c)) {
        return Some(Evidence::new("if", cond));
    }
    if let Some(branches) = job.branch_only.as_deref().filter(|b| branches_are_main_only(b)) {
        return Some(Evidence::new(
            format!("{}.branches.only", job.config_path),
            branches.join(", "),
        ));
    }
    if let Some(branches) = cfg
        .global_branch_only
        .as_deref()
        .filter(|b| branches_are_main_only(b))
    {
        return Some(Evidence::new("branches.only", branches.join(", ")));
    }
    None
}

/// Returns (all tool jobs restricted, any tool job restricted, evidence).
fn late_merging(cfg: &PipelineConfig, profile: &PipelineToolProfile) -> (bool, bool, Vec<Evidence>) {
    let tool_jobs: BTreeSet<usize> = profile.detections().map(|d| d.job_index).collect();
    if tool_jobs.is_empty() {
        return (false, false, Vec::new());
    }
    let mut evidence = Vec::new();
    let mut restricted = 0;
    for job in cfg.jobs.iter().filter(|j| tool_jobs.contains(&j.index)) {
        if let Some(e) = job_restriction(cfg, job) {
            restricted += 1;
            if !evidence.contains(&e) {
                evidence.push(e);
            }
        }
    }
    (restricted == tool_jobs.len(), restricted > 0, evidence)
}

pub fn detect_late_merging(
    cfg: &PipelineConfig,
    profile: &PipelineToolProfile,
    mode: LateMergingMode,
) -> (bool, Vec<Evidence>) {
    let (all, any, evidence) = late_merging(cfg, profile);
    let flagged = match mode {
        LateMergingMode::Pipeline => all,
        LateMergingMode::Job => any,
    };
    (flagged, if flagged { evidence } else { Vec::new() })
}

pub fn detect_skip_on_failure(cfg: &PipelineConfig) -> (bool, Vec<Evidence>) {
    match (&cfg.allow_failures_path, cfg.allow_failures_present) {
        (Some(path), true) => (true, vec![Evidence::new(path.clone(), "allow_failures")]),
        (None, true) => (true, vec![Evidence::new("jobs.allow_failures", "allow_failures")]),
        _ => (false, Vec::new()),
    }
}

pub fn detect_absent_feedback(cfg: &PipelineConfig) -> (bool, Vec<Evidence>) {
    match &cfg.notifications {
        None => (
            true,
            vec![Evidence::new("notifications", "no notifications section")],
        ),
        Some(n) if n.channels.is_empty() => (
            true,
            vec![Evidence::new("notifications", n.raw.to_string())],
        ),
        Some(_) => (false, Vec::new()),
    }
}

pub fn detect_email_only(cfg: &PipelineConfig) -> (bool, Vec<Evidence>) {
    match &cfg.notifications {
        Some(n) if n.channels.len() == 1 && n.channels.contains(&ChannelKind::Email) => {
            let excerpt = n
                .raw
                .get("email")
                .map(|v| v.to_string())
                .unwrap_or_else(|| n.raw.to_string());
            (true, vec![Evidence::new("notifications.email", excerpt)])
        }
        _ => (false, Vec::new()),
    }
}

pub fn detect_findings(
    cfg: &PipelineConfig,
    profile: &PipelineToolProfile,
    mode: LateMergingMode,
) -> FindingSet {
    let (all, any, lm_evidence) = late_merging(cfg, profile);
    let late = match mode {
        LateMergingMode::Pipeline => all,
        LateMergingMode::Job => any,
    };
    let (skip, skip_ev) = detect_skip_on_failure(cfg);
    let (absent, absent_ev) = detect_absent_feedback(cfg);
    let (email, email_ev) = detect_email_only(cfg);

    let mut evidence = BTreeMap::new();
    for (flag, finding, ev) in [
        (late, Finding::LateMerging, lm_evidence),
        (skip, Finding::SkipOnFailure, skip_ev),
        (absent, Finding::AbsentFeedback, absent_ev),
        (email, Finding::EmailOnly, email_ev),
    ] {
        if flag {
            evidence.insert(finding, ev);
        }
    }
    FindingSet {
        late_merging: late,
        skip_on_failure: skip,
        absent_feedback: absent,
        email_only: email,
        late_merging_any_job: any,
        evidence,
    }
}
