//! Read-strategy benchmark: whole-image blob, one file per patch, and the
//! chunked container with deferred batches.
//!
//! Every strategy produces the same row-major sequence of patches. The
//! timed functions can optionally digest each patch (crc32) so the suite can
//! check the strategies against each other before timing them.

mod cold_cache;
mod layouts;
mod stats;
mod suite;

use std::fmt;
use std::hint::black_box;
use std::path::Path;
use std::str::FromStr;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use cold_cache::{make_cold, CacheProtocol};
pub use layouts::{
    decode_patch_file, encode_patch_file, export_patch_files, export_whole_blob,
    list_patch_files, load_blob, parse_patch_file_name, patch_file_name, read_patch_file,
    BlobHeader, LoadedBlob, BLOB_HEADER_LEN, BLOB_MAGIC, PATCH_HEADER_LEN, PATCH_MAGIC,
};
pub use stats::{
    emit_report, format_table, parse_records_csv, series_stats, summarize, BenchSummary,
    MethodSummary, SeriesStats, RECORDS_CSV_HEADER,
};
pub use suite::{run_suite, BenchConfig, ConversionRecord, SuiteResult};

use crate::error::{Error, Result};
use crate::partition::{assign_regions, enumerate_patches};
use crate::reader::{ContainerReader, ReaderOptions, ResolutionReport};

/// Default whole-array memory budget (4 GiB).
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    WholeArray,
    PatchPerFile,
    ChunkedStore,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::WholeArray, Method::PatchPerFile, Method::ChunkedStore];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::WholeArray => "whole_array",
            Method::PatchPerFile => "patch_per_file",
            Method::ChunkedStore => "chunked_store",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "whole_array" | "whole" | "blob" => Method::WholeArray,
            "patch_per_file" | "patch" | "patches" => Method::PatchPerFile,
            "chunked_store" | "chunked" => Method::ChunkedStore,
            _ => return Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        })
    }
}

/// One timed pass of one strategy over one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    pub wsi_id: String,
    pub run_id: usize,
    pub n_workers: usize,
    pub patches_read: usize,
    pub wall_seconds: f64,
    pub bytes_read: u64,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub record: BenchRecord,
    /// crc32 of every patch, row-major; present when digesting was requested.
    pub digests: Option<Vec<u32>>,
    /// Chunked strategy only: resolution totals over all workers.
    pub resolution: Option<ResolutionReport>,
}

fn consume(data: &[u8], digests: &mut Option<Vec<u32>>) {
    match digests {
        Some(d) => d.push(crc32fast::hash(data)),
        None => {
            black_box(data);
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads the blob in one piece, then slices patches sequentially on one
/// thread. Time covers load and slicing.
pub fn bench_whole_array(
    blob: impl AsRef<Path>,
    patch_w: u32,
    patch_h: u32,
    memory_budget: u64,
    digest: bool,
) -> Result<BenchOutcome> {
    let blob = blob.as_ref();
    let mut digests = digest.then(Vec::new);
    let start = Instant::now();
    let loaded = load_blob(blob, memory_budget)?;
    let h = loaded.header;
    let meta = crate::container::ImageMeta::new(
        stem(blob),
        h.width as u64,
        h.height as u64,
        h.channels,
        h.bytes_per_sample,
    );
    let windows = enumerate_patches(&meta, patch_w, patch_h)?;
    for window in &windows {
        let patch = loaded.slice_window(*window);
        consume(&patch, &mut digests);
    }
    let wall_seconds = start.elapsed().as_secs_f64();
    Ok(BenchOutcome {
        record: BenchRecord {
            method: Method::WholeArray,
            wsi_id: meta.image_id,
            run_id: 0,
            n_workers: 1,
            patches_read: windows.len(),
            wall_seconds,
            bytes_read: loaded.file_len() as u64,
        },
        digests,
        resolution: None,
    })
}

/// Loads the patch files of `dir` with `n_workers` threads, each taking a
/// contiguous region of the row-major file list.
pub fn bench_patch_files(dir: impl AsRef<Path>, n_workers: usize, digest: bool) -> Result<BenchOutcome> {
    let dir = dir.as_ref();
    let files = list_patch_files(dir)?;
    let regions = assign_regions(files.len(), n_workers)?;

    let start = Instant::now();
    let results: Vec<Result<(u64, Option<Vec<u32>>)>> = thread::scope(|scope| {
        let handles: Vec<_> = regions
            .iter()
            .map(|region| {
                let files = &files[region.range()];
                scope.spawn(move || {
                    let mut digests = digest.then(Vec::new);
                    let mut bytes = 0u64;
                    for path in files {
                        let block = read_patch_file(path)?;
                        bytes += (PATCH_HEADER_LEN + block.data.len()) as u64;
                        consume(&block.data, &mut digests);
                    }
                    Ok((bytes, digests))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("patch-file worker panicked"))
            .collect()
    });
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut bytes_read = 0;
    let mut digests = digest.then(Vec::new);
    for result in results {
        let (bytes, part) = result?;
        bytes_read += bytes;
        if let (Some(all), Some(part)) = (digests.as_mut(), part) {
            all.extend(part);
        }
    }
    let wsi_id = stem(dir).trim_end_matches("_patches").to_string();
    Ok(BenchOutcome {
        record: BenchRecord {
            method: Method::PatchPerFile,
            wsi_id,
            run_id: 0,
            n_workers,
            patches_read: files.len(),
            wall_seconds,
            bytes_read,
        },
        digests,
        resolution: None,
    })
}

/// Opens the container and reads every patch with `n_workers` threads, one
/// deferred batch per worker region.
pub fn bench_chunked(
    container: impl AsRef<Path>,
    patch_w: u32,
    patch_h: u32,
    n_workers: usize,
    cache_chunks: usize,
    digest: bool,
) -> Result<BenchOutcome> {
    let start = Instant::now();
    let reader = ContainerReader::open_with(container, ReaderOptions { cache_chunks })?;
    let meta = reader.meta().clone();
    let windows = enumerate_patches(&meta, patch_w, patch_h)?;
    let regions = assign_regions(windows.len(), n_workers)?;
    let px = meta.pixel_bytes();

    let results: Vec<Result<(ResolutionReport, Option<Vec<u32>>)>> = thread::scope(|scope| {
        let handles: Vec<_> = regions
            .iter()
            .map(|region| {
                let (reader, windows) = (&reader, &windows[region.range()]);
                scope.spawn(move || {
                    let mut buffers: Vec<Vec<u8>> =
                        windows.iter().map(|w| vec![0u8; w.byte_len(px)]).collect();
                    let report = {
                        let mut batch = reader.batch();
                        for (w, buf) in windows.iter().zip(buffers.iter_mut()) {
                            batch.defer_read(*w, buf)?;
                        }
                        batch.perform_reads()?
                    };
                    let mut digests = digest.then(Vec::new);
                    for buf in &buffers {
                        consume(buf, &mut digests);
                    }
                    Ok((report, digests))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chunked worker panicked"))
            .collect()
    });
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut total = ResolutionReport::default();
    let mut digests = digest.then(Vec::new);
    for result in results {
        let (report, part) = result?;
        total.windows_served += report.windows_served;
        total.chunks_touched += report.chunks_touched;
        total.chunks_loaded += report.chunks_loaded;
        total.bytes_read += report.bytes_read;
        if let (Some(all), Some(part)) = (digests.as_mut(), part) {
            all.extend(part);
        }
    }
    total.wall_seconds = wall_seconds;
    Ok(BenchOutcome {
        record: BenchRecord {
            method: Method::ChunkedStore,
            wsi_id: meta.image_id,
            run_id: 0,
            n_workers,
            patches_read: windows.len(),
            wall_seconds,
            bytes_read: total.bytes_read,
        },
        digests,
        resolution: Some(total),
    })
}
