//! Corpus-level tables: tool prevalence, co-occurrence, anti-pattern rates,
//! stage names, placement and timing distributions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::antipattern::{Finding, FindingSet};
use crate::detect::{Invocation, PipelineToolProfile};
use crate::placement::{ExecutionSource, PlacementKind, PlacementResult, TimingKind};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Report row label for the per-job reading of Late Merging.
pub const LATE_MERGING_ANY_JOB: &str = "late_merging_any_job";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unsupported export format `{0}`")]
    UnsupportedFormat(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

/// A percentage with one decimal, stored as tenths of a percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent {
    pub tenths: i64,
}

impl Percent {
    pub fn as_f64(self) -> f64 {
        self.tenths as f64 / 10.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.tenths < 0 { "-" } else { "" };
        let abs = self.tenths.unsigned_abs();
        write!(f, "{sign}{}.{}", abs / 10, abs % 10)
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(d)?;
        Ok(Percent {
            tenths: (value * 10.0).round() as i64,
        })
    }
}

/// `numerator / denominator` as a percentage rounded half away from zero to
/// one decimal. Integer arithmetic only.
pub fn percent(numerator: i64, denominator: i64) -> Result<Percent, AnalyticsError> {
    if denominator == 0 {
        return Err(AnalyticsError::DivisionByZero);
    }
    let negative = (numerator < 0) != (denominator < 0);
    let n = i128::from(numerator).unsigned_abs();
    let d = i128::from(denominator).unsigned_abs();
    let tenths = (2 * 1000 * n + d) / (2 * d);
    let tenths = i64::try_from(tenths).expect("percent fits in i64");
    Ok(Percent {
        tenths: if negative { -tenths } else { tenths },
    })
}

fn ratio(numerator: u64, denominator: u64) -> Option<Percent> {
    percent(numerator as i64, denominator as i64).ok()
}

/// What the aggregator needs from one analyzed pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineRecord {
    pub repo_slug: String,
    pub tools: BTreeMap<String, Invocation>,
    pub placements: Vec<PlacementResult>,
    pub findings: FindingSet,
    /// Stage label of every job, tool-running or not.
    pub stage_labels: Vec<String>,
    pub job_count: usize,
}

impl PipelineRecord {
    pub fn new(
        repo_slug: impl Into<String>,
        profile: &PipelineToolProfile,
        placements: Vec<PlacementResult>,
        findings: FindingSet,
        stage_labels: Vec<String>,
    ) -> Self {
        Self {
            repo_slug: repo_slug.into(),
            tools: profile
                .tools
                .iter()
                .map(|(id, usage)| (id.clone(), usage.invocation))
                .collect(),
            placements,
            findings,
            job_count: stage_labels.len().max(1),
            stage_labels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ToolCounts {
    pub pipelines: u64,
    /// Pipelines with at least one direct call.
    pub direct: u64,
    /// Pipelines with at least one script call.
    pub script: u64,
    pub both: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StageCounts {
    pub direct_jobs: u64,
    pub script_jobs: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TimingCounts {
    pub pre_deployment: u64,
    pub post_deployment: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineFindingsRow {
    pub repo_slug: String,
    pub tools: BTreeMap<String, Invocation>,
    pub late_merging: bool,
    pub late_merging_any_job: bool,
    pub skip_on_failure: bool,
    pub absent_feedback: bool,
    pub email_only: bool,
}

/// Mergeable running totals. `merge` is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Aggregator {
    pipelines: u64,
    pipelines_with_tools: u64,
    direct_only: u64,
    script_only: u64,
    mixed_invocation: u64,
    tools: BTreeMap<String, ToolCounts>,
    histogram: BTreeMap<usize, u64>,
    cooccurrence: BTreeMap<(String, String), u64>,
    findings: BTreeMap<Finding, u64>,
    late_merging_any_job: u64,
    matrix: BTreeMap<(Finding, Finding), u64>,
    per_tool_findings: BTreeMap<(String, Finding), u64>,
    stages: BTreeMap<String, StageCounts>,
    placement: BTreeMap<(ExecutionSource, PlacementKind), u64>,
    timing: BTreeMap<ExecutionSource, TimingCounts>,
    tool_jobs: u64,
    rows: Vec<PipelineFindingsRow>,
}

fn add_map<K: Ord + Clone>(into: &mut BTreeMap<K, u64>, from: &BTreeMap<K, u64>) {
    for (k, v) in from {
        *into.entry(k.clone()).or_default() += v;
    }
}

impl Aggregator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, record: &PipelineRecord) {
        self.pipelines += 1;
        *self.histogram.entry(record.tools.len()).or_default() += 1;
        self.rows.push(PipelineFindingsRow {
            repo_slug: record.repo_slug.clone(),
            tools: record.tools.clone(),
            late_merging: record.findings.late_merging,
            late_merging_any_job: record.findings.late_merging_any_job,
            skip_on_failure: record.findings.skip_on_failure,
            absent_feedback: record.findings.absent_feedback,
            email_only: record.findings.email_only,
        });
        if record.tools.is_empty() {
            return;
        }
        self.pipelines_with_tools += 1;

        let any_direct = record.tools.values().any(|i| i.has_direct());
        let any_script = record.tools.values().any(|i| i.has_script());
        match (any_direct, any_script) {
            (true, true) => self.mixed_invocation += 1,
            (true, false) => self.direct_only += 1,
            _ => self.script_only += 1,
        }

        for (id, inv) in &record.tools {
            let c = self.tools.entry(id.clone()).or_default();
            c.pipelines += 1;
            c.direct += u64::from(inv.has_direct());
            c.script += u64::from(inv.has_script());
            c.both += u64::from(*inv == Invocation::Both);
        }
        let ids: Vec<&String> = record.tools.keys().collect();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                *self
                    .cooccurrence
                    .entry(((*a).clone(), (*b).clone()))
                    .or_default() += 1;
            }
        }

        let present: Vec<Finding> = record.findings.present().collect();
        for f in &present {
            *self.findings.entry(*f).or_default() += 1;
            for id in record.tools.keys() {
                *self.per_tool_findings.entry((id.clone(), *f)).or_default() += 1;
            }
        }
        self.late_merging_any_job += u64::from(record.findings.late_merging_any_job);
        for (i, a) in present.iter().enumerate() {
            for b in &present[i + 1..] {
                *self.matrix.entry((*a, *b)).or_default() += 1;
            }
        }

        for p in &record.placements {
            self.tool_jobs += 1;
            let stage = self.stages.entry(p.stage_label.clone()).or_default();
            stage.total += 1;
            for row in &p.rows {
                match row.source {
                    ExecutionSource::Direct => stage.direct_jobs += 1,
                    ExecutionSource::Script => stage.script_jobs += 1,
                }
                *self.placement.entry((row.source, p.placement)).or_default() += 1;
                let t = self.timing.entry(row.source).or_default();
                match row.timing {
                    TimingKind::PreDeployment => t.pre_deployment += 1,
                    TimingKind::PostDeployment => t.post_deployment += 1,
                }
            }
        }
    }

    pub fn merge(&mut self, other: Aggregator) {
        self.pipelines += other.pipelines;
        self.pipelines_with_tools += other.pipelines_with_tools;
        self.direct_only += other.direct_only;
        self.script_only += other.script_only;
        self.mixed_invocation += other.mixed_invocation;
        for (id, c) in other.tools {
            let t = self.tools.entry(id).or_default();
            t.pipelines += c.pipelines;
            t.direct += c.direct;
            t.script += c.script;
            t.both += c.both;
        }
        add_map(&mut self.histogram, &other.histogram);
        add_map(&mut self.cooccurrence, &other.cooccurrence);
        add_map(&mut self.findings, &other.findings);
        self.late_merging_any_job += other.late_merging_any_job;
        add_map(&mut self.matrix, &other.matrix);
        add_map(&mut self.per_tool_findings, &other.per_tool_findings);
        for (label, c) in other.stages {
            let s = self.stages.entry(label).or_default();
            s.direct_jobs += c.direct_jobs;
            s.script_jobs += c.script_jobs;
            s.total += c.total;
        }
        add_map(&mut self.placement, &other.placement);
        for (src, c) in other.timing {
            let t = self.timing.entry(src).or_default();
            t.pre_deployment += c.pre_deployment;
            t.post_deployment += c.post_deployment;
        }
        self.tool_jobs += other.tool_jobs;
        self.rows.extend(other.rows);
    }

    pub fn finish(&self) -> CorpusReport {
        let with_tools = self.pipelines_with_tools;
        let nonempty = self.pipelines > 0;

        let mut tool_table: Vec<ToolRow> = self
            .tools
            .iter()
            .map(|(id, c)| ToolRow {
                tool: id.clone(),
                pipelines: c.pipelines,
                direct: c.direct,
                script: c.script,
                both: c.both,
            })
            .collect();
        tool_table.sort_by(|a, b| b.pipelines.cmp(&a.pipelines).then_with(|| a.tool.cmp(&b.tool)));

        let mut cooccurrence: Vec<PairRow> = self
            .cooccurrence
            .iter()
            .map(|((a, b), n)| PairRow {
                tool_a: a.clone(),
                tool_b: b.clone(),
                pipelines: *n,
            })
            .collect();
        cooccurrence.sort_by(|x, y| {
            y.pipelines
                .cmp(&x.pipelines)
                .then_with(|| (&x.tool_a, &x.tool_b).cmp(&(&y.tool_a, &y.tool_b)))
        });

        let invocation = if with_tools > 0 {
            vec![
                count_row("direct_only", self.direct_only, with_tools),
                count_row("script_only", self.script_only, with_tools),
                count_row("both", self.mixed_invocation, with_tools),
            ]
        } else {
            Vec::new()
        };

        let mut antipatterns = Vec::new();
        let mut matrix = Vec::new();
        if nonempty {
            for f in Finding::ALL {
                let n = self.findings.get(&f).copied().unwrap_or(0);
                antipatterns.push(count_row(f.as_str(), n, with_tools));
            }
            antipatterns.push(count_row(LATE_MERGING_ANY_JOB, self.late_merging_any_job, with_tools));
            for (i, a) in Finding::ALL.iter().enumerate() {
                for b in &Finding::ALL[i + 1..] {
                    matrix.push(MatrixRow {
                        finding_a: a.as_str().to_string(),
                        finding_b: b.as_str().to_string(),
                        pipelines: self.matrix.get(&(*a, *b)).copied().unwrap_or(0),
                    });
                }
            }
        }

        let mut per_tool = Vec::new();
        for (id, c) in &self.tools {
            for f in Finding::ALL {
                let n = self
                    .per_tool_findings
                    .get(&(id.clone(), f))
                    .copied()
                    .unwrap_or(0);
                per_tool.push(PerToolRow {
                    tool: id.clone(),
                    finding: f.as_str().to_string(),
                    pipelines_with_tool: c.pipelines,
                    with_finding: n,
                    percent: ratio(n, c.pipelines),
                });
            }
        }

        let mut stage_names: Vec<StageRow> = self
            .stages
            .iter()
            .map(|(label, c)| StageRow {
                stage: label.clone(),
                direct_jobs: c.direct_jobs,
                script_jobs: c.script_jobs,
                total: c.total,
            })
            .collect();
        stage_names.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.stage.cmp(&b.stage)));

        let mut placement = Vec::new();
        let mut timing = Vec::new();
        if nonempty {
            for src in ExecutionSource::ALL {
                let jobs_of_source: u64 = PlacementKind::ALL
                    .iter()
                    .map(|k| self.placement.get(&(src, *k)).copied().unwrap_or(0))
                    .sum();
                for kind in PlacementKind::ALL {
                    let n = self.placement.get(&(src, kind)).copied().unwrap_or(0);
                    placement.push(PlacementRow {
                        source: src.as_str().to_string(),
                        placement: kind.as_str().to_string(),
                        jobs: n,
                        percent: ratio(n, jobs_of_source),
                    });
                }
                let t = self.timing.get(&src).copied().unwrap_or_default();
                let total = t.pre_deployment + t.post_deployment;
                timing.push(TimingRow {
                    source: src.as_str().to_string(),
                    pre_deployment: t.pre_deployment,
                    post_deployment: t.post_deployment,
                    pre_percent: ratio(t.pre_deployment, total),
                    post_percent: ratio(t.post_deployment, total),
                });
            }
        }

        let histogram = self
            .histogram
            .iter()
            .map(|(k, v)| HistogramRow {
                tools: *k as u64,
                pipelines: *v,
            })
            .collect();

        let mut pipelines = self.rows.clone();
        pipelines.sort_by(|a, b| {
            a.repo_slug
                .cmp(&b.repo_slug)
                .then_with(|| a.tools.cmp(&b.tools))
                .then_with(|| {
                    let key = |r: &PipelineFindingsRow| {
                        (r.late_merging, r.late_merging_any_job, r.skip_on_failure, r.absent_feedback, r.email_only)
                    };
                    key(a).cmp(&key(b))
                })
        });

        CorpusReport {
            schema_version: REPORT_SCHEMA_VERSION,
            pipelines_analyzed: self.pipelines,
            pipelines_with_tools: with_tools,
            tool_jobs: self.tool_jobs,
            invocation,
            tool_table,
            tools_per_pipeline_histogram: histogram,
            cooccurrence,
            antipattern_prevalence: antipatterns,
            antipattern_matrix: matrix,
            per_tool_antipattern: per_tool,
            stage_names,
            placement_distribution: placement,
            timing_distribution: timing,
            pipelines,
        }
    }
}

fn count_row(label: &str, count: u64, denominator: u64) -> CountRow {
    CountRow {
        label: label.to_string(),
        pipelines: count,
        percent: ratio(count, denominator),
    }
}

pub fn aggregate<'a>(records: impl IntoIterator<Item = &'a PipelineRecord>) -> CorpusReport {
    let mut agg = Aggregator::new();
    for r in records {
        agg.add(r);
    }
    agg.finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRow {
    pub tool: String,
    pub pipelines: u64,
    pub direct: u64,
    pub script: u64,
    pub both: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub tools: u64,
    pub pipelines: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRow {
    pub tool_a: String,
    pub tool_b: String,
    pub pipelines: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub label: String,
    pub pipelines: u64,
    pub percent: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub finding_a: String,
    pub finding_b: String,
    pub pipelines: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerToolRow {
    pub tool: String,
    pub finding: String,
    pub pipelines_with_tool: u64,
    pub with_finding: u64,
    pub percent: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub direct_jobs: u64,
    pub script_jobs: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRow {
    pub source: String,
    pub placement: String,
    pub jobs: u64,
    pub percent: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingRow {
    pub source: String,
    pub pre_deployment: u64,
    pub post_deployment: u64,
    pub pre_percent: Option<Percent>,
    pub post_percent: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub schema_version: u32,
    pub pipelines_analyzed: u64,
    pub pipelines_with_tools: u64,
    /// Jobs with at least one detection.
    pub tool_jobs: u64,
    /// Pipeline-level invocation style over pipelines with tools.
    pub invocation: Vec<CountRow>,
    pub tool_table: Vec<ToolRow>,
    pub tools_per_pipeline_histogram: Vec<HistogramRow>,
    pub cooccurrence: Vec<PairRow>,
    /// Over pipelines with at least one tool.
    pub antipattern_prevalence: Vec<CountRow>,
    pub antipattern_matrix: Vec<MatrixRow>,
    pub per_tool_antipattern: Vec<PerToolRow>,
    pub stage_names: Vec<StageRow>,
    pub placement_distribution: Vec<PlacementRow>,
    pub timing_distribution: Vec<TimingRow>,
    pub pipelines: Vec<PipelineFindingsRow>,
}

impl CorpusReport {
    pub fn tool(&self, id: &str) -> Option<&ToolRow> {
        self.tool_table.iter().find(|r| r.tool == id)
    }

    pub fn cooccurrence_of(&self, a: &str, b: &str) -> u64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.cooccurrence
            .iter()
            .find(|r| r.tool_a == a && r.tool_b == b)
            .map_or(0, |r| r.pipelines)
    }

    pub fn histogram_count(&self, tools: u64) -> u64 {
        self.tools_per_pipeline_histogram
            .iter()
            .find(|r| r.tools == tools)
            .map_or(0, |r| r.pipelines)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    CsvBundle,
}

impl FromStr for ExportFormat {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" | "csv-bundle" => Ok(ExportFormat::CsvBundle),
            other => Err(AnalyticsError::UnsupportedFormat(other.to_string())),
        }
    }
}

pub const JSON_REPORT_FILE: &str = "report.json";

pub const CSV_FILES: [&str; 8] = [
    "tools.csv",
    "cooccurrence.csv",
    "antipatterns.csv",
    "antipattern_matrix.csv",
    "per_tool_antipattern.csv",
    "stage_names.csv",
    "placement.csv",
    "timing.csv",
];

/// Serialized report files keyed by file name.
pub type Artifact = BTreeMap<String, Vec<u8>>;

/// JSON with lexicographically sorted keys and a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    // serde_json's default map is ordered by key.
    let value = serde_json::to_value(value).expect("report serializes");
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

fn pct(p: Option<Percent>) -> String {
    p.map(|p| p.to_string()).unwrap_or_default()
}

fn csv_file(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, AnalyticsError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| AnalyticsError::Csv(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| AnalyticsError::Csv(e.to_string()))
}

fn csv_bundle(r: &CorpusReport) -> Result<Artifact, AnalyticsError> {
    let n = |v: u64| v.to_string();
    let mut out = Artifact::new();
    out.insert(
        "tools.csv".into(),
        csv_file(
            &["tool", "pipelines", "direct", "script", "both"],
            r.tool_table
                .iter()
                .map(|t| vec![t.tool.clone(), n(t.pipelines), n(t.direct), n(t.script), n(t.both)])
                .collect(),
        )?,
    );
    out.insert(
        "cooccurrence.csv".into(),
        csv_file(
            &["tool_a", "tool_b", "pipelines"],
            r.cooccurrence
                .iter()
                .map(|p| vec![p.tool_a.clone(), p.tool_b.clone(), n(p.pipelines)])
                .collect(),
        )?,
    );
    out.insert(
        "antipatterns.csv".into(),
        csv_file(
            &["antipattern", "pipelines", "percent"],
            r.antipattern_prevalence
                .iter()
                .map(|c| vec![c.label.clone(), n(c.pipelines), pct(c.percent)])
                .collect(),
        )?,
    );
    out.insert(
        "antipattern_matrix.csv".into(),
        csv_file(
            &["antipattern_a", "antipattern_b", "pipelines"],
            r.antipattern_matrix
                .iter()
                .map(|m| vec![m.finding_a.clone(), m.finding_b.clone(), n(m.pipelines)])
                .collect(),
        )?,
    );
    out.insert(
        "per_tool_antipattern.csv".into(),
        csv_file(
            &["tool", "antipattern", "pipelines_with_tool", "with_antipattern", "percent"],
            r.per_tool_antipattern
                .iter()
                .map(|p| {
                    vec![
                        p.tool.clone(),
                        p.finding.clone(),
                        n(p.pipelines_with_tool),
                        n(p.with_finding),
                        pct(p.percent),
                    ]
                })
                .collect(),
        )?,
    );
    out.insert(
        "stage_names.csv".into(),
        csv_file(
            &["stage", "direct_jobs", "script_jobs", "total"],
            r.stage_names
                .iter()
                .map(|s| vec![s.stage.clone(), n(s.direct_jobs), n(s.script_jobs), n(s.total)])
                .collect(),
        )?,
    );
    out.insert(
        "placement.csv".into(),
        csv_file(
            &["source", "placement", "jobs", "percent"],
            r.placement_distribution
                .iter()
                .map(|p| vec![p.source.clone(), p.placement.clone(), n(p.jobs), pct(p.percent)])
                .collect(),
        )?,
    );
    out.insert(
        "timing.csv".into(),
        csv_file(
            &["source", "pre_deployment", "post_deployment", "pre_percent", "post_percent"],
            r.timing_distribution
                .iter()
                .map(|t| {
                    vec![
                        t.source.clone(),
                        n(t.pre_deployment),
                        n(t.post_deployment),
                        pct(t.pre_percent),
                        pct(t.post_percent),
                    ]
                })
                .collect(),
        )?,
    );
    Ok(out)
}

pub fn export_report(report: &CorpusReport, format: ExportFormat) -> Result<Artifact, AnalyticsError> {
    match format {
        ExportFormat::Json => Ok(Artifact::from([(
            JSON_REPORT_FILE.to_string(),
            to_sorted_json(report).into_bytes(),
        )])),
        ExportFormat::CsvBundle => csv_bundle(report),
    }
}

/// Writes every file of `artifact` into `dir`, creating it if needed.
pub fn write_artifact(artifact: &Artifact, dir: &Path) -> Result<(), AnalyticsError> {
    let io = |path: &Path, e: std::io::Error| AnalyticsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    for (name, bytes) in artifact {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

/// Distinct tool ids of a record set, for callers that need the registry
/// subset actually seen.
pub fn tools_seen<'a>(records: impl IntoIterator<Item = &'a PipelineRecord>) -> BTreeSet<String> {
    records
        .into_iter()
        .flat_map(|r| r.tools.keys().cloned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounding() {
        assert_eq!(percent(2466, 3684).unwrap().to_string(), "66.9");
        assert_eq!(percent(0, 3684).unwrap().to_string(), "0.0");
        assert_eq!(percent(56, 59).unwrap().to_string(), "94.9");
        assert_eq!(percent(1, 8).unwrap().to_string(), "12.5");
        assert_eq!(percent(1, 16).unwrap().to_string(), "6.3");
        assert_eq!(percent(-1, 16).unwrap().to_string(), "-6.3");
        assert_eq!(percent(3, 0), Err(AnalyticsError::DivisionByZero));
    }

    #[test]
    fn unsupported_format() {
        assert_eq!(
            "xml".parse::<ExportFormat>(),
            Err(AnalyticsError::UnsupportedFormat("xml".into()))
        );
    }

    #[test]
    fn empty_corpus_headers_only() {
        let report = Aggregator::new().finish();
        let bundle = export_report(&report, ExportFormat::CsvBundle).unwrap();
        assert_eq!(bundle.len(), CSV_FILES.len());
        for name in CSV_FILES {
            let text = String::from_utf8(bundle[name].clone()).unwrap();
            assert_eq!(text.lines().count(), 1, "{name}");
            assert!(text.ends_with('\n'));
        }
    }
}
