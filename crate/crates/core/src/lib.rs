//! Static analysis of Travis CI pipelines for technical-debt-management (TDM)
//! tooling.
//!
//! The crate parses `.travis.yml` documents into a lifecycle model, follows
//! referenced shell scripts, detects the registered TDM tools, classifies
//! where and when each tool runs, flags configuration anti-patterns and
//! aggregates corpus-level tables.

use serde::{Deserialize, Serialize};

pub mod analysis;
pub mod analytics;
pub mod antipattern;
pub mod config;
pub mod detect;
pub mod ingest;
pub mod placement;
pub mod registry;
pub mod scripts;
pub mod shell;
pub mod yaml;

pub use analysis::{AnalysisError, AnalysisOptions, Analyzer, PipelineAnalysis};
pub use analytics::{percent, Aggregator, CorpusReport, ExportFormat, Percent, PipelineRecord};
pub use antipattern::{FindingSet, LateMergingMode};
pub use config::{parse_config, ConfigError, PhaseKind, PipelineConfig, RawDocument};
pub use detect::{Detection, DetectionSource, Invocation, PipelineToolProfile};
pub use placement::{PlacementKind, PlacementResult, TimingKind};
pub use registry::{Registry, RegistryError, ToolSpec};
pub use scripts::{DirTree, FileTree, MapTree, ScriptDocument, ScriptRef};

/// A non-fatal diagnostic attached to a result.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Warning {
    pub code: String,
    pub message: String,
}

impl Warning {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}
