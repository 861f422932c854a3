//! End-to-end benchmark: materialize baseline layouts, check that every
//! strategy returns the same patches, then time `runs` passes.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::{
    bench_chunked, bench_patch_files, bench_whole_array, export_patch_files, export_whole_blob,
    list_patch_files, make_cold, summarize, BenchOutcome, BenchRecord, BenchSummary,
    CacheProtocol, Method, DEFAULT_MEMORY_BUDGET,
};
use crate::error::{Error, Result};
use crate::partition::enumerate_patches;
use crate::reader::{ContainerReader, ReaderOptions};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub runs: usize,
    /// Workers for the patch-file and chunked strategies; the whole-array
    /// strategy is single-threaded.
    pub workers: usize,
    pub patch_w: u32,
    pub patch_h: u32,
    pub cache_chunks: usize,
    pub cold_cache: bool,
    pub memory_budget: u64,
    pub overwrite_exports: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: Method::ALL.to_vec(),
            runs: 5,
            workers: 8,
            patch_w: 512,
            patch_h: 512,
            cache_chunks: crate::reader::DEFAULT_CACHE_CHUNKS,
            cold_cache: true,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            overwrite_exports: false,
        }
    }
}

/// Time spent materializing a baseline layout; never part of read timings.
#[derive(Debug, Clone, Serialize)]
pub struct ConversionRecord {
    pub wsi_id: String,
    pub layout: &'static str,
    pub seconds: f64,
    pub bytes: u64,
    /// False when an existing export was reused.
    pub created: bool,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub records: Vec<BenchRecord>,
    pub summary: BenchSummary,
    pub conversions: Vec<ConversionRecord>,
    /// Protocols used across timed runs.
    pub protocols: Vec<CacheProtocol>,
    /// Human-readable settings for the report.
    pub notes: Vec<String>,
}

struct ImageInputs {
    wsi_id: String,
    container: PathBuf,
    blob: PathBuf,
    patch_dir: PathBuf,
}

fn materialize(container: &Path, work_dir: &Path, config: &BenchConfig) -> Result<(ImageInputs, Vec<ConversionRecord>)> {
    let reader = ContainerReader::open_with(container, ReaderOptions { cache_chunks: 0 })?;
    let wsi_id = reader.meta().image_id.clone();
    let slug: String = wsi_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let inputs = ImageInputs {
        blob: work_dir.join(format!("{slug}.wstb")),
        patch_dir: work_dir.join(format!("{slug}_p{}x{}_patches", config.patch_w, config.patch_h)),
        container: container.to_path_buf(),
        wsi_id,
    };
    let mut conversions = Vec::new();

    if config.methods.contains(&Method::WholeArray) {
        let start = Instant::now();
        let exists = inputs.blob.exists() && !config.overwrite_exports;
        let bytes = if exists {
            fs::metadata(&inputs.blob)?.len()
        } else {
            export_whole_blob(container, &inputs.blob, config.overwrite_exports)?
        };
        conversions.push(ConversionRecord {
            wsi_id: inputs.wsi_id.clone(),
            layout: "blob",
            seconds: start.elapsed().as_secs_f64(),
            bytes,
            created: !exists,
        });
    }
    if config.methods.contains(&Method::PatchPerFile) {
        let start = Instant::now();
        let expected = enumerate_patches(reader.meta(), config.patch_w, config.patch_h)?.len();
        let existing = if inputs.patch_dir.is_dir() {
            list_patch_files(&inputs.patch_dir)?
        } else {
            Vec::new()
        };
        let reuse = existing.len() == expected && !config.overwrite_exports;
        let files = if reuse {
            existing
        } else {
            export_patch_files(
                container,
                &inputs.patch_dir,
                config.patch_w,
                config.patch_h,
                config.overwrite_exports,
            )?
        };
        let mut bytes = 0;
        for f in &files {
            bytes += fs::metadata(f)?.len();
        }
        conversions.push(ConversionRecord {
            wsi_id: inputs.wsi_id.clone(),
            layout: "patch_files",
            seconds: start.elapsed().as_secs_f64(),
            bytes,
            created: !reuse,
        });
    }
    Ok((inputs, conversions))
}

fn run_method(method: Method, inputs: &ImageInputs, config: &BenchConfig, digest: bool) -> Result<BenchOutcome> {
    match method {
        Method::WholeArray => bench_whole_array(
            &inputs.blob,
            config.patch_w,
            config.patch_h,
            config.memory_budget,
            digest,
        ),
        Method::PatchPerFile => bench_patch_files(&inputs.patch_dir, config.workers, digest),
        Method::ChunkedStore => bench_chunked(
            &inputs.container,
            config.patch_w,
            config.patch_h,
            config.workers,
            config.cache_chunks,
            digest,
        ),
    }
}

fn method_files(method: Method, inputs: &ImageInputs) -> Result<Vec<PathBuf>> {
    Ok(match method {
        Method::WholeArray => vec![inputs.blob.clone()],
        Method::PatchPerFile => list_patch_files(&inputs.patch_dir)?,
        Method::ChunkedStore => vec![inputs.container.clone()],
    })
}

/// crc32 of every patch read straight from the container, row-major.
fn reference_digests(inputs: &ImageInputs, config: &BenchConfig) -> Result<Vec<u32>> {
    let reader = ContainerReader::open_with(&inputs.container, ReaderOptions { cache_chunks: 4 })?;
    enumerate_patches(reader.meta(), config.patch_w, config.patch_h)?
        .into_iter()
        .map(|w| Ok(crc32fast::hash(&reader.read_patch(w)?.data)))
        .collect()
}

fn check_equivalence(method: Method, inputs: &ImageInputs, reference: &[u32], got: &[u32]) -> Result<()> {
    if got.len() != reference.len() {
        return Err(Error::Equivalence(format!(
            "{method} returned {} patches for {}, expected {}",
            got.len(),
            inputs.wsi_id,
            reference.len()
        )));
    }
    if let Some(i) = (0..got.len()).find(|&i| got[i] != reference[i]) {
        let location = match method {
            Method::PatchPerFile => list_patch_files(&inputs.patch_dir)?
                .get(i)
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            Method::WholeArray => inputs.blob.display().to_string(),
            Method::ChunkedStore => inputs.container.display().to_string(),
        };
        return Err(Error::Equivalence(format!(
            "{method} patch {i} of {} differs from the container ({location})",
            inputs.wsi_id
        )));
    }
    Ok(())
}

/// Runs the full benchmark over `containers`, keeping exports and decoy
/// files in `work_dir`.
pub fn run_suite(containers: &[PathBuf], work_dir: impl AsRef<Path>, config: &BenchConfig) -> Result<SuiteResult> {
    let work_dir = work_dir.as_ref();
    if containers.is_empty() || config.methods.is_empty() || config.runs == 0 || config.workers == 0 {
        return Err(Error::InvalidArgument(
            "bench needs containers, methods, runs ≥ 1 and workers ≥ 1".into(),
        ));
    }
    fs::create_dir_all(work_dir)?;
    let methods: Vec<Method> = config.methods.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();

    let mut images = Vec::new();
    let mut conversions = Vec::new();
    for container in containers {
        let (inputs, conv) = materialize(container, work_dir, config)?;
        images.push(inputs);
        conversions.extend(conv);
    }

    for inputs in &images {
        let reference = reference_digests(inputs, config)?;
        for &method in &methods {
            let outcome = run_method(method, inputs, config, true)?;
            check_equivalence(method, inputs, &reference, outcome.digests.as_deref().unwrap_or(&[]))?;
        }
    }

    let decoy = work_dir.join("cache-decoy.bin");
    let mut records = Vec::new();
    let mut protocols = BTreeSet::new();
    for run_id in 0..config.runs {
        for inputs in &images {
            for &method in &methods {
                if config.cold_cache {
                    let files = method_files(method, inputs)?;
                    protocols.insert(make_cold(&files, &decoy, config.memory_budget)?);
                } else {
                    protocols.insert(CacheProtocol::Warm);
                }
                let mut record = run_method(method, inputs, config, false)?.record;
                record.run_id = run_id;
                record.wsi_id = inputs.wsi_id.clone();
                records.push(record);
            }
        }
    }
    let protocols: Vec<CacheProtocol> = protocols.into_iter().collect();

    let summary = summarize(&records, config.runs)?;
    let notes = vec![
        format!(
            "cache protocol: {}",
            protocols.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        ),
        format!(
            "workers: {} (whole_array: 1), patch: {}x{}, cache-chunks: {}",
            config.workers, config.patch_w, config.patch_h, config.cache_chunks
        ),
        format!("runs: {}, images per run: {}", config.runs, images.len()),
    ];
    Ok(SuiteResult {
        records,
        summary,
        conversions,
        protocols,
        notes,
    })
}
