//! Corpus inputs: a JSON manifest or a directory of repositories, with an
//! optional rate-limited HTTPS fetch path for remote entries.

pub mod fetch;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{RawDocument, CONFIG_FILE_NAME};
use crate::scripts::{DirTree, FileTree, MapTree};
use crate::Warning;

pub use fetch::{
    Clock, FakeClock, FetchPolicy, FetchResponse, Fetcher, HttpFetcher, RateLimiter, Secret,
    SystemClock, TransportError, TOKEN_ENV_VAR,
};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("manifest: {0}")]
    ManifestParse(String),
    #[error("duplicate repo_slug `{0}` in manifest")]
    DuplicateSlug(String),
    #[error("{slug}: {message}")]
    InvalidEntry { slug: String, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("rate limited fetching {0}; retry budget exhausted")]
    RateLimited(String),
    #[error("HTTP {status} fetching {url}")]
    Http { url: String, status: u16 },
    #[error("transport error fetching {url}: {message}")]
    Transport { url: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySource {
    /// Repository checkout; relative paths are resolved against the manifest.
    Local(PathBuf),
    /// HTTPS base URL, optionally a template with a `{path}` placeholder.
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub repo_slug: String,
    pub config_path: String,
    pub script_paths: Vec<String>,
    pub source: EntrySource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub created_at: String,
    pub notes: String,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default = "default_schema")]
    schema_version: u32,
    #[serde(default)]
    created_at: String,
    #[serde(default)]
    notes: String,
    entries: Vec<RawEntry>,
}

fn default_schema() -> u32 {
    MANIFEST_SCHEMA_VERSION
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    repo_slug: String,
    #[serde(default)]
    config_path: Option<String>,
    #[serde(default)]
    script_paths: Vec<String>,
    #[serde(default)]
    local_root: Option<PathBuf>,
    #[serde(default)]
    remote_base_url: Option<String>,
}

/// True for `a/b/c`-style paths that stay inside the repository.
pub fn is_repo_relative(path: &str) -> bool {
    !path.is_empty()
        && !path.starts_with('/')
        && !path.contains('\\')
        && path
            .split('/')
            .all(|p| !p.is_empty() && p != "." && p != "..")
}

impl CorpusManifest {
    /// Parses a manifest. Relative `local_root`s are resolved against
    /// `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, IngestError> {
        let raw: RawManifest =
            serde_json::from_str(text).map_err(|e| IngestError::ManifestParse(e.to_string()))?;
        if raw.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(IngestError::ManifestParse(format!(
                "unsupported schema_version {}",
                raw.schema_version
            )));
        }
        let mut seen = BTreeSet::new();
        let mut entries = Vec::with_capacity(raw.entries.len());
        for e in raw.entries {
            let invalid = |message: String| IngestError::InvalidEntry {
                slug: e.repo_slug.clone(),
                message,
            };
            if e.repo_slug.trim().is_empty() {
                return Err(IngestError::ManifestParse("empty repo_slug".into()));
            }
            if !seen.insert(e.repo_slug.clone()) {
                return Err(IngestError::DuplicateSlug(e.repo_slug));
            }
            let config_path = e
                .config_path
                .clone()
                .unwrap_or_else(|| CONFIG_FILE_NAME.to_string());
            for p in std::iter::once(&config_path).chain(&e.script_paths) {
                if !is_repo_relative(p) {
                    return Err(invalid(format!("path `{p}` is not repository-relative")));
                }
            }
            let source = match (&e.local_root, &e.remote_base_url) {
                (Some(root), None) => EntrySource::Local(if root.is_absolute() {
                    root.clone()
                } else {
                    base_dir.join(root)
                }),
                (None, Some(url)) => {
                    if !url.starts_with("https://") {
                        return Err(invalid(format!("remote_base_url `{url}` is not HTTPS")));
                    }
                    EntrySource::Remote(url.clone())
                }
                _ => {
                    return Err(invalid(
                        "exactly one of local_root and remote_base_url is required".into(),
                    ))
                }
            };
            entries.push(ManifestEntry {
                repo_slug: e.repo_slug,
                config_path,
                script_paths: e.script_paths,
                source,
            });
        }
        Ok(Self {
            schema_version: raw.schema_version,
            created_at: raw.created_at,
            notes: raw.notes,
            entries,
        })
    }
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    CorpusManifest::from_json(&text, path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub path: String,
    /// Local file path or fetched URL.
    pub location: String,
    /// Hex SHA-256 of the file bytes.
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// File access for one materialized entry.
#[derive(Debug, Clone)]
pub enum EntryTree {
    Dir(DirTree),
    Map(MapTree),
}

impl FileTree for EntryTree {
    fn read(&self, path: &str) -> Option<String> {
        match self {
            EntryTree::Dir(t) => t.read(path),
            EntryTree::Map(t) => t.read(path),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Materialized {
    pub document: RawDocument,
    pub tree: EntryTree,
    pub provenance: Vec<Provenance>,
    pub warnings: Vec<Warning>,
}

/// Shared fetch machinery for remote entries.
pub struct RemoteContext<'a> {
    pub fetcher: &'a dyn Fetcher,
    pub limiter: &'a RateLimiter,
    pub policy: &'a FetchPolicy,
}

/// URL of `path` under `base`: `{path}` is substituted when present,
/// otherwise the path is appended.
pub fn remote_url(base: &str, path: &str) -> String {
    if base.contains("{path}") {
        base.replace("{path}", path)
    } else {
        format!("{}/{}", base.trim_end_matches('/'), path)
    }
}

/// GET with rate limiting and bounded retries on 429, 5xx and transport
/// errors. `Ok(None)` means 404.
pub fn fetch_with_retry(url: &str, remote: &RemoteContext<'_>) -> Result<Option<Vec<u8>>, IngestError> {
    let policy = remote.policy;
    let mut attempt = 0u32;
    loop {
        remote.limiter.acquire();
        let outcome = remote
            .fetcher
            .get(url, policy.auth_token.as_ref(), policy.timeout);
        let err = match outcome {
            Ok(r) if (200..300).contains(&r.status) => return Ok(Some(r.body)),
            Ok(r) if r.status == 404 || r.status == 410 => return Ok(None),
            Ok(r) if r.status == 429 => IngestError::RateLimited(url.to_string()),
            Ok(r) if r.status >= 500 => IngestError::Http {
                url: url.to_string(),
                status: r.status,
            },
            Ok(r) => {
                return Err(IngestError::Http {
                    url: url.to_string(),
                    status: r.status,
                })
            }
            Err(e) => IngestError::Transport {
                url: url.to_string(),
                message: e.0,
            },
        };
        if attempt >= policy.retry_budget {
            return Err(err);
        }
        let backoff = policy
            .backoff_base
            .checked_mul(1u32 << attempt.min(16))
            .unwrap_or(Duration::MAX);
        remote.limiter.clock().sleep(backoff);
        attempt += 1;
    }
}

fn materialize_local(entry: &ManifestEntry, root: &Path) -> Result<Materialized, IngestError> {
    let config_file = root.join(&entry.config_path);
    let bytes = std::fs::read(&config_file).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::NotFound(config_file.display().to_string()),
        _ => IngestError::Io {
            path: config_file.display().to_string(),
            message: e.to_string(),
        },
    })?;
    let mut provenance = vec![Provenance {
        path: entry.config_path.clone(),
        location: config_file.display().to_string(),
        sha256: sha256_hex(&bytes),
    }];
    let mut warnings = Vec::new();
    for p in &entry.script_paths {
        let file = root.join(p);
        match std::fs::read(&file) {
            Ok(b) => provenance.push(Provenance {
                path: p.clone(),
                location: file.display().to_string(),
                sha256: sha256_hex(&b),
            }),
            Err(_) => warnings.push(Warning::new(
                "script_not_found",
                format!("{}: declared script `{p}` is missing", entry.repo_slug),
            )),
        }
    }
    Ok(Materialized {
        document: RawDocument::from_bytes(&entry.repo_slug, &entry.config_path, &bytes),
        tree: EntryTree::Dir(DirTree::new(root)),
        provenance,
        warnings,
    })
}

fn materialize_remote(
    entry: &ManifestEntry,
    base: &str,
    remote: &RemoteContext<'_>,
) -> Result<Materialized, IngestError> {
    let config_url = remote_url(base, &entry.config_path);
    let bytes = fetch_with_retry(&config_url, remote)?
        .ok_or_else(|| IngestError::NotFound(config_url.clone()))?;
    let mut provenance = vec![Provenance {
        path: entry.config_path.clone(),
        location: config_url,
        sha256: sha256_hex(&bytes),
    }];
    let mut tree = MapTree::new();
    let mut warnings = Vec::new();
    for p in &entry.script_paths {
        let url = remote_url(base, p);
        match fetch_with_retry(&url, remote) {
            Ok(Some(b)) => {
                provenance.push(Provenance {
                    path: p.clone(),
                    location: url,
                    sha256: sha256_hex(&b),
                });
                tree.insert(p.clone(), String::from_utf8_lossy(&b).into_owned());
            }
            Ok(None) => warnings.push(Warning::new(
                "script_not_found",
                format!("{}: `{url}` returned 404", entry.repo_slug),
            )),
            Err(e) => warnings.push(Warning::new(
                "script_fetch_failed",
                format!("{}: {e}", entry.repo_slug),
            )),
        }
    }
    Ok(Materialized {
        document: RawDocument::from_bytes(&entry.repo_slug, &entry.config_path, &bytes),
        tree: EntryTree::Map(tree),
        provenance,
        warnings,
    })
}

/// Loads the configuration and a file tree for one entry. Local entries never
/// touch `remote`; remote entries fail when no fetch context is supplied.
pub fn materialize(
    entry: &ManifestEntry,
    remote: Option<&RemoteContext<'_>>,
) -> Result<Materialized, IngestError> {
    match &entry.source {
        EntrySource::Local(root) => materialize_local(entry, root),
        EntrySource::Remote(base) => match remote {
            Some(ctx) => materialize_remote(entry, base, ctx),
            None => Err(IngestError::InvalidEntry {
                slug: entry.repo_slug.clone(),
                message: "remote entry but fetching is disabled".into(),
            }),
        },
    }
}

/// Entries for a directory corpus: every directory below `root` holding a
/// `.travis.yml` is one repository, its slug the relative path. Nested
/// repositories inside a found one are not separate entries.
pub fn discover_local_corpus(root: &Path) -> Result<Vec<ManifestEntry>, IngestError> {
    let mut found: Vec<PathBuf> = Vec::new();
    let walker = walkdir::WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.') || e.file_name() == CONFIG_FILE_NAME);
    for entry in walker {
        let entry = entry.map_err(|e| IngestError::Io {
            path: root.display().to_string(),
            message: e.to_string(),
        })?;
        if entry.file_type().is_file() && entry.file_name() == CONFIG_FILE_NAME {
            if let Some(dir) = entry.path().parent() {
                if dir != root {
                    found.push(dir.to_path_buf());
                }
            }
        }
    }
    found.sort();
    let mut kept: Vec<PathBuf> = Vec::new();
    for dir in found {
        if !kept.iter().any(|k| dir.starts_with(k)) {
            kept.push(dir);
        }
    }
    Ok(kept
        .into_iter()
        .map(|dir| {
            let slug = dir
                .strip_prefix(root)
                .unwrap_or(&dir)
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            ManifestEntry {
                repo_slug: slug,
                config_path: CONFIG_FILE_NAME.to_string(),
                script_paths: Vec::new(),
                source: EntrySource::Local(dir),
            }
        })
        .collect())
}
