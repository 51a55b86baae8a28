//! Where (dedicated stage, dedicated job, mixed job) and when (before or
//! after deployment) each detected tool runs.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::config::{resolve_stage_name, CommandLine, Job, PhaseKind, PipelineConfig};
use crate::detect::{text_segments, Detection, DetectionSource, PipelineToolProfile};
use crate::scripts::{extract_script_refs, ScriptDocument};
use crate::shell;

/// Stage Travis assigns to jobs that do not name one.
const DEFAULT_TRAVIS_STAGE: &str = "test";

/// Guard against scripts that call each other.
const MAX_SCRIPT_NESTING: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKind {
    DedicatedStage,
    DedicatedJob,
    MixedJob,
}

impl PlacementKind {
    pub const ALL: [PlacementKind; 3] = [
        PlacementKind::DedicatedStage,
        PlacementKind::DedicatedJob,
        PlacementKind::MixedJob,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlacementKind::DedicatedStage => "dedicated_stage",
            PlacementKind::DedicatedJob => "dedicated_job",
            PlacementKind::MixedJob => "mixed_job",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingKind {
    PreDeployment,
    PostDeployment,
}

impl TimingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TimingKind::PreDeployment => "pre_deployment",
            TimingKind::PostDeployment => "post_deployment",
        }
    }
}

/// How a detection reached the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionSource {
    Direct,
    Script,
}

impl ExecutionSource {
    pub const ALL: [ExecutionSource; 2] = [ExecutionSource::Direct, ExecutionSource::Script];

    pub fn of(source: &DetectionSource) -> Self {
        if source.is_script() {
            ExecutionSource::Script
        } else {
            ExecutionSource::Direct
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExecutionSource::Direct => "direct",
            ExecutionSource::Script => "script",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlacementError {
    #[error("job {0} has no tool detection")]
    NoDetectionInJob(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DetectionTiming {
    pub tool_id: String,
    pub source: DetectionSource,
    pub phase: PhaseKind,
    pub line_ordinal: usize,
    pub timing: TimingKind,
}

/// One row per execution source present in the job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceRow {
    pub source: ExecutionSource,
    pub tools: BTreeSet<String>,
    /// Pre-deployment when any detection from this source runs before
    /// deployment.
    pub timing: TimingKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlacementResult {
    pub job_index: usize,
    pub stage_label: String,
    pub placement: PlacementKind,
    /// The job runs more than one distinct tool.
    pub multi_tool: bool,
    pub tools: BTreeSet<String>,
    pub rows: Vec<SourceRow>,
    pub detections: Vec<DetectionTiming>,
}

fn stage_key(job: &Job) -> String {
    job.stage_name
        .as_deref()
        .unwrap_or(DEFAULT_TRAVIS_STAGE)
        .to_lowercase()
}

/// Stage positions of a pipeline: declared stages first, then stages that
/// jobs use without declaring, in order of first use.
#[derive(Debug, Clone)]
pub struct Timeline {
    order: Vec<String>,
    job_stage: Vec<usize>,
    first_deploy_stage: Option<usize>,
    deploying_jobs: Vec<bool>,
}

impl Timeline {
    pub fn new(cfg: &PipelineConfig) -> Self {
        let mut order: Vec<String> = Vec::new();
        for s in &cfg.declared_stages {
            let key = s.name.to_lowercase();
            if !order.contains(&key) {
                order.push(key);
            }
        }
        let mut job_stage = Vec::with_capacity(cfg.jobs.len());
        for job in &cfg.jobs {
            let key = stage_key(job);
            let idx = match order.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    order.push(key);
                    order.len() - 1
                }
            };
            job_stage.push(idx);
        }
        let deploying_jobs: Vec<bool> = cfg.jobs.iter().map(Job::has_deploy).collect();
        let first_deploy_stage = job_stage
            .iter()
            .zip(&deploying_jobs)
            .filter(|(_, d)| **d)
            .map(|(s, _)| *s)
            .min();
        Self {
            order,
            job_stage,
            first_deploy_stage,
            deploying_jobs,
        }
    }

    pub fn stage_index(&self, job_index: usize) -> Option<usize> {
        self.job_stage.get(job_index).copied()
    }

    pub fn stage_order(&self) -> &[String] {
        &self.order
    }

    pub fn timing(&self, job_index: usize, phase: PhaseKind) -> TimingKind {
        let deploys = self.deploying_jobs.get(job_index).copied().unwrap_or(false);
        let after_own_deploy = phase == PhaseKind::AfterDeploy
            || (deploys && matches!(phase, PhaseKind::AfterScript | PhaseKind::AfterSuccess));
        let later_stage = match (self.stage_index(job_index), self.first_deploy_stage) {
            (Some(s), Some(d)) => s > d,
            _ => false,
        };
        if after_own_deploy || later_stage {
            TimingKind::PostDeployment
        } else {
            TimingKind::PreDeployment
        }
    }
}

pub fn classify_timing(cfg: &PipelineConfig, det: &Detection) -> TimingKind {
    Timeline::new(cfg).timing(det.job_index, det.phase)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SegmentClass {
    Tdm,
    Ignored,
    Substance,
}

struct OnlyTdm<'a> {
    profile: &'a PipelineToolProfile,
    scripts: &'a [ScriptDocument],
}

impl OnlyTdm<'_> {
    fn detected(&self, source: &DetectionSource, matches: impl Fn(&Detection) -> bool) -> bool {
        self.profile
            .detections()
            .any(|d| d.source == *source && matches(d))
    }

    fn classify(&self, segment: &str, detected: bool, depth: usize) -> SegmentClass {
        if detected {
            return SegmentClass::Tdm;
        }
        if shell::is_installer(segment) || shell::is_ceremony(segment) {
            return SegmentClass::Ignored;
        }
        let probe = CommandLine {
            text: segment.to_string(),
            phase: PhaseKind::Script,
            job_index: 0,
            ordinal: 0,
        };
        let refs = extract_script_refs(&probe);
        if !refs.is_empty()
            && refs
                .iter()
                .all(|r| !r.unresolvable && self.script_is_tdm_only(&r.normalized_path, depth + 1))
        {
            return SegmentClass::Tdm;
        }
        SegmentClass::Substance
    }

    /// Every substantive line of the script runs a tool, and at least one does.
    fn script_is_tdm_only(&self, path: &str, depth: usize) -> bool {
        if depth > MAX_SCRIPT_NESTING {
            return false;
        }
        let Some(content) = self
            .scripts
            .iter()
            .find(|s| s.path == path && s.resolved)
            .and_then(|s| s.content.as_deref())
        else {
            return false;
        };
        let source = DetectionSource::Script {
            path: path.to_string(),
        };
        let mut any = false;
        for (li, si, seg) in text_segments(content) {
            let detected =
                self.detected(&source, |d| d.line_ordinal == li && d.segment_ordinal == si);
            match self.classify(seg, detected, depth) {
                SegmentClass::Tdm => any = true,
                SegmentClass::Ignored => {}
                SegmentClass::Substance => return false,
            }
        }
        any
    }

    /// Non-setup commands of the job do nothing but run tools.
    fn job(&self, job: &Job) -> bool {
        let mut any = false;
        for (phase, commands) in &job.phases {
            if phase.is_setup() {
                continue;
            }
            for cmd in commands {
                for (li, si, seg) in text_segments(&cmd.text) {
                    let detected = self.detected(&DetectionSource::Config, |d| {
                        d.job_index == job.index
                            && d.phase == *phase
                            && d.command_ordinal == cmd.ordinal
                            && d.line_ordinal == li
                            && d.segment_ordinal == si
                    });
                    match self.classify(seg, detected, 0) {
                        SegmentClass::Tdm => any = true,
                        SegmentClass::Ignored => {}
                        SegmentClass::Substance => return false,
                    }
                }
            }
        }
        any
    }
}

pub fn classify_placement(
    cfg: &PipelineConfig,
    job: &Job,
    profile: &PipelineToolProfile,
    scripts: &[ScriptDocument],
) -> Result<PlacementKind, PlacementError> {
    if profile.job_detections(job.index).next().is_none() {
        return Err(PlacementError::NoDetectionInJob(job.index));
    }
    if job.has_deploy() {
        return Ok(PlacementKind::MixedJob);
    }
    let only_tdm = OnlyTdm { profile, scripts };
    if !only_tdm.job(job) {
        return Ok(PlacementKind::MixedJob);
    }
    let alone_in_stage = job.stage_name.is_some() && {
        let key = stage_key(job);
        cfg.jobs.iter().filter(|j| stage_key(j) == key).count() == 1
    };
    Ok(if alone_in_stage {
        PlacementKind::DedicatedStage
    } else {
        PlacementKind::DedicatedJob
    })
}

fn classify_job_with(
    cfg: &PipelineConfig,
    timeline: &Timeline,
    job: &Job,
    profile: &PipelineToolProfile,
    scripts: &[ScriptDocument],
) -> Result<PlacementResult, PlacementError> {
    let placement = classify_placement(cfg, job, profile, scripts)?;
    let mut detections = Vec::new();
    let mut rows: Vec<SourceRow> = Vec::new();
    let mut tools = BTreeSet::new();
    for d in profile.job_detections(job.index) {
        let timing = timeline.timing(job.index, d.phase);
        tools.insert(d.tool_id.clone());
        let source = ExecutionSource::of(&d.source);
        match rows.iter_mut().find(|r| r.source == source) {
            Some(row) => {
                row.tools.insert(d.tool_id.clone());
                if timing == TimingKind::PreDeployment {
                    row.timing = TimingKind::PreDeployment;
                }
            }
            None => rows.push(SourceRow {
                source,
                tools: BTreeSet::from([d.tool_id.clone()]),
                timing,
            }),
        }
        detections.push(DetectionTiming {
            tool_id: d.tool_id.clone(),
            source: d.source.clone(),
            phase: d.phase,
            line_ordinal: d.line_ordinal,
            timing,
        });
    }
    rows.sort_by_key(|r| r.source);
    Ok(PlacementResult {
        job_index: job.index,
        stage_label: resolve_stage_name(job),
        placement,
        multi_tool: tools.len() > 1,
        tools,
        rows,
        detections,
    })
}

pub fn classify_job(
    cfg: &PipelineConfig,
    job: &Job,
    profile: &PipelineToolProfile,
    scripts: &[ScriptDocument],
) -> Result<PlacementResult, PlacementError> {
    classify_job_with(cfg, &Timeline::new(cfg), job, profile, scripts)
}

/// Placement of every job that runs at least one tool, in job order.
pub fn classify_pipeline(
    cfg: &PipelineConfig,
    profile: &PipelineToolProfile,
    scripts: &[ScriptDocument],
) -> Vec<PlacementResult> {
    let timeline = Timeline::new(cfg);
    cfg.jobs
        .iter()
        .filter_map(|job| classify_job_with(cfg, &timeline, job, profile, scripts).ok())
        .collect()
}
