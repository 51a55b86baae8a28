//! Per-pipeline analysis: parse, resolve scripts, detect, classify, flag.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::analytics::PipelineRecord;
use crate::antipattern::{detect_findings, FindingSet, LateMergingMode};
use crate::config::{parse_config, resolve_stage_name, ConfigError, RawDocument};
use crate::detect::{profile_pipeline, DetectOptions, Invocation, PipelineToolProfile};
use crate::placement::{classify_pipeline, PlacementResult};
use crate::registry::Registry;
use crate::scripts::{resolve_pipeline_scripts, FileTree, MapTree, ScriptDocument};
use crate::Warning;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl AnalysisError {
    pub fn is_not_a_pipeline(&self) -> bool {
        matches!(self, AnalysisError::Config(ConfigError::NotAPipeline(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AnalysisOptions {
    pub install_exclusion: bool,
    pub recursive_scripts: bool,
    pub late_merging_mode: LateMergingMode,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            install_exclusion: true,
            recursive_scripts: false,
            late_merging_mode: LateMergingMode::Pipeline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineAnalysis {
    pub repo_slug: String,
    pub path: String,
    pub job_count: usize,
    pub tools: BTreeMap<String, Invocation>,
    pub profile: PipelineToolProfile,
    pub scripts: Vec<ScriptDocument>,
    pub placements: Vec<PlacementResult>,
    /// Stage label of every job in order.
    pub stage_labels: Vec<String>,
    pub findings: FindingSet,
    pub warnings: Vec<Warning>,
}

impl PipelineAnalysis {
    pub fn record(&self) -> PipelineRecord {
        PipelineRecord::new(
            self.repo_slug.clone(),
            &self.profile,
            self.placements.clone(),
            self.findings.clone(),
            self.stage_labels.clone(),
        )
    }
}

/// Immutable and shareable across worker threads.
#[derive(Debug, Clone)]
pub struct Analyzer {
    registry: Registry,
    options: AnalysisOptions,
}

impl Analyzer {
    pub fn new(registry: Registry, options: AnalysisOptions) -> Self {
        Self { registry, options }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn options(&self) -> &AnalysisOptions {
        &self.options
    }

    /// Analyzes a configuration with no repository files available.
    pub fn analyze_text(&self, doc: &RawDocument) -> Result<PipelineAnalysis, AnalysisError> {
        self.analyze(doc, &MapTree::new())
    }

    pub fn analyze(
        &self,
        doc: &RawDocument,
        tree: &dyn FileTree,
    ) -> Result<PipelineAnalysis, AnalysisError> {
        let cfg = parse_config(doc)?;
        let mut warnings = cfg.warnings.clone();

        let resolution = resolve_pipeline_scripts(&cfg, tree, self.options.recursive_scripts);
        warnings.extend(resolution.warnings);
        for s in resolution.scripts.iter().filter(|s| !s.resolved) {
            warnings.push(Warning::new(
                "script_not_found",
                format!("`{}` is not in the repository snapshot", s.path),
            ));
        }
        let scripts = resolution.scripts;

        let detect_opts = DetectOptions {
            install_exclusion: self.options.install_exclusion,
        };
        let profile = profile_pipeline(&cfg, &scripts, &self.registry, &detect_opts);
        let placements = classify_pipeline(&cfg, &profile, &scripts);
        let findings = detect_findings(&cfg, &profile, self.options.late_merging_mode);
        let stage_labels = cfg.jobs.iter().map(resolve_stage_name).collect();

        Ok(PipelineAnalysis {
            repo_slug: doc.repo_slug.clone(),
            path: doc.path.clone(),
            job_count: cfg.jobs.len(),
            tools: profile
                .tools
                .iter()
                .map(|(id, u)| (id.clone(), u.invocation))
                .collect(),
            profile,
            scripts,
            placements,
            stage_labels,
            findings,
            warnings,
        })
    }
}
