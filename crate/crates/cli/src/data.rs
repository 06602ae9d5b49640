//! Design discovery, cached graph extraction, and output-path guards.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use tguard_core::dfg::{extract, graph_stats, CircuitGraph, GraphStats, Vocabulary};
use tguard_core::gnn::{GraphInput, LabeledGraph};
use tguard_core::inject::{DatasetManifest, ManifestEntry};
use tguard_core::verilog::SourceUnit;

use crate::error::{CliError, CliResult};

pub const CACHE_ENV: &str = "TG_CACHE_DIR";

/// One design to extract: a name, its sources, and an optional label.
#[derive(Debug, Clone)]
pub struct DesignJob {
    pub name: String,
    pub source: SourceUnit,
    pub label: Option<u8>,
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::internal(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

/// Fails when any of `paths` exists and `force` is off.
pub fn guard_outputs<'a>(paths: impl IntoIterator<Item = &'a Path>, force: bool) -> CliResult<()> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(CliError::user(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    Ok(())
}

/// `*.v` files named directly or found in the given directories, in order;
/// directory contents are sorted.
pub fn verilog_files(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::user(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "v"))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(CliError::user(format!("{}: no such file or directory", p.display())));
        }
    }
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

pub fn load_manifest(path: &Path) -> CliResult<(DatasetManifest, PathBuf)> {
    let manifest = DatasetManifest::from_json(&read_text(path)?)
        .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, root))
}

pub fn manifest_jobs(manifest: &DatasetManifest, root: &Path) -> CliResult<Vec<DesignJob>> {
    manifest
        .entries
        .iter()
        .map(|e: &ManifestEntry| {
            let source = manifest
                .source(e, root)
                .map_err(|err| CliError::user(format!("{}: {err}", root.join(&e.path).display())))?;
            Ok(DesignJob {
                name: e.design.clone(),
                source,
                label: Some(e.label),
            })
        })
        .collect()
}

fn cache_key(src: &SourceUnit) -> String {
    let mut h = DefaultHasher::new();
    env!("CARGO_PKG_VERSION").hash(&mut h);
    src.top_module.hash(&mut h);
    for (_, text) in &src.files {
        text.hash(&mut h);
    }
    format!("{:016x}.graph.json", h.finish())
}

/// Extracts one design, consulting `$TG_CACHE_DIR` when it is set. The
/// graph carries the job's name and label.
pub fn extract_job(job: &DesignJob) -> CliResult<(CircuitGraph, GraphStats)> {
    let start = Instant::now();
    let cache = std::env::var_os(CACHE_ENV).map(|d| PathBuf::from(d).join(cache_key(&job.source)));
    let cached = cache
        .as_ref()
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|text| CircuitGraph::from_json(&text).ok());
    let mut g = match cached {
        Some(g) => g,
        None => {
            let (g, _) = extract(&job.source)?;
            if let Some(p) = &cache {
                // A cache that cannot be written only costs a re-extraction.
                let _ = write_file(p, g.to_json());
            }
            g
        }
    };
    g.design = job.name.clone();
    g.label = job.label;
    let stats = graph_stats(&g, start.elapsed().as_secs_f64());
    Ok((g, stats))
}

/// Extracts every job in parallel on the current rayon pool; results keep
/// the job order.
pub fn extract_all(jobs: &[DesignJob]) -> Vec<CliResult<(CircuitGraph, GraphStats)>> {
    jobs.par_iter().map(extract_job).collect()
}

/// Labeled model inputs for every manifest entry; the first extraction
/// failure aborts.
pub fn labeled_graphs(manifest_path: &Path, vocab: &Vocabulary) -> CliResult<Vec<LabeledGraph>> {
    let (manifest, root) = load_manifest(manifest_path)?;
    let jobs = manifest_jobs(&manifest, &root)?;
    extract_all(&jobs)
        .into_iter()
        .zip(&jobs)
        .map(|(r, job)| {
            let (g, _) = r.map_err(|e| CliError {
                code: e.code,
                message: format!("{}: {}", job.name, e.message),
            })?;
            Ok(LabeledGraph {
                input: GraphInput::from_graph(&g, vocab),
                label: job.label.unwrap_or(0),
            })
        })
        .collect()
}
