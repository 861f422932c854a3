//! Multi-worker patch processing over a container.
//!
//! The patch enumeration is split into contiguous regions, one per worker.
//! Each worker resolves its region with a single deferred batch, pads edge
//! patches, runs the processor, crops the result back to the patch's logical
//! shape and hands it to the shared output writer. Output chunk `(r, c)` is
//! the result for patch `(r, c)`, so the output grid is the patch grid.

use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::Serialize;

use crate::container::ImageMeta;
use crate::error::{Error, Result};
use crate::partition::{apply_padding, assign_regions, crop, enumerate_patches, pad_spec_for, RegionAssignment};
use crate::reader::{ContainerReader, PixelBlock, ReaderOptions};
use crate::writer::ContainerWriter;

/// Turns a padded patch into a single-channel, 8-bit result block of the
/// same width and height.
pub trait PatchProcessor: Send + Sync {
    fn name(&self) -> &str;

    fn deterministic(&self) -> bool {
        true
    }

    fn apply(&self, patch: &PixelBlock, meta: &ImageMeta) -> std::result::Result<PixelBlock, String>;
}

/// Per-pixel channel mean, scaled to 8 bits.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityGray;

impl PatchProcessor for IdentityGray {
    fn name(&self) -> &str {
        "identity"
    }

    fn apply(&self, patch: &PixelBlock, _meta: &ImageMeta) -> std::result::Result<PixelBlock, String> {
        let shift = if patch.bytes_per_sample == 2 { 8 } else { 0 };
        let data = pixel_sums(patch)
            .map(|sum| ((sum / patch.channels as u32) >> shift) as u8)
            .collect();
        PixelBlock::new(patch.width, patch.height, 1, 1, data).map_err(|e| e.to_string())
    }
}

/// 255 where the channel mean is at least `threshold`, else 0.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdMask {
    pub threshold: u16,
}

impl PatchProcessor for ThresholdMask {
    fn name(&self) -> &str {
        "threshold"
    }

    fn apply(&self, patch: &PixelBlock, _meta: &ImageMeta) -> std::result::Result<PixelBlock, String> {
        Ok(threshold_mask(patch, self.threshold))
    }
}

fn pixel_sums(patch: &PixelBlock) -> impl Iterator<Item = u32> + '_ {
    let bps = patch.bytes_per_sample as usize;
    patch.data.chunks_exact(patch.pixel_bytes()).map(move |px| {
        px.chunks_exact(bps)
            .map(|s| if bps == 1 { s[0] as u32 } else { u16::from_le_bytes([s[0], s[1]]) as u32 })
            .sum()
    })
}

/// Mean over channels compared against `t` as `sum >= t * channels`, which
/// avoids rounding the mean.
pub fn threshold_mask(patch: &PixelBlock, t: u16) -> PixelBlock {
    let limit = t as u32 * patch.channels as u32;
    let data = pixel_sums(patch)
        .map(|sum| if sum >= limit { 255 } else { 0 })
        .collect();
    PixelBlock {
        width: patch.width,
        height: patch.height,
        channels: 1,
        bytes_per_sample: 1,
        data,
    }
}

/// Parses `identity` or `threshold:<t>`.
pub fn parse_processor(spec: &str) -> Result<Box<dyn PatchProcessor>> {
    match spec.split_once(':') {
        None if spec == "identity" => Ok(Box::new(IdentityGray)),
        Some(("threshold", t)) => {
            let threshold = t
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad threshold {t:?}")))?;
            Ok(Box::new(ThresholdMask { threshold }))
        }
        _ => Err(Error::InvalidArgument(format!("unknown processor {spec:?}"))),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    pub patch_w: u32,
    pub patch_h: u32,
    pub n_workers: usize,
    pub fill: u16,
    pub cache_chunks: usize,
    pub overwrite: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            patch_w: 4096,
            patch_h: 4096,
            n_workers: 3,
            fill: 0,
            cache_chunks: crate::reader::DEFAULT_CACHE_CHUNKS,
            overwrite: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub wsi_id: String,
    pub n_workers: usize,
    pub patches_processed: usize,
    pub wall_seconds: f64,
    pub per_worker_seconds: Vec<f64>,
    pub assignments: Vec<RegionAssignment>,
    /// `(worker_id, patch_index)` in completion order.
    pub processed: Vec<(usize, usize)>,
}

impl PipelineReport {
    pub const CSV_HEADER: &'static str =
        "wsi_id,n_workers,patches_processed,wall_seconds,per_worker_seconds";

    /// One CSV row; per-worker times are `;`-separated.
    pub fn to_csv_row(&self) -> String {
        let per_worker = self
            .per_worker_seconds
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(";");
        format!(
            "{},{},{},{},{}",
            self.wsi_id, self.n_workers, self.patches_processed, self.wall_seconds, per_worker
        )
    }
}

pub fn run_pipeline(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    options: PipelineOptions,
    processor: &dyn PatchProcessor,
) -> Result<PipelineReport> {
    let reader = ContainerReader::open_with(
        input,
        ReaderOptions {
            cache_chunks: options.cache_chunks,
        },
    )?;
    let meta = reader.meta().clone();
    let patches = enumerate_patches(&meta, options.patch_w, options.patch_h)?;
    let assignments = assign_regions(patches.len(), options.n_workers)?;
    let patch_grid = crate::partition::patch_grid(&meta, options.patch_w, options.patch_h)?;
    // Validate the fill against the input sample range before any output exists.
    pad_spec_for(patches[0], &meta, options.patch_w, options.patch_h, options.fill)?;

    let out_meta = ImageMeta {
        channels: 1,
        bytes_per_sample: 1,
        ..meta.clone()
    };
    let writer = Mutex::new(ContainerWriter::create(
        output,
        out_meta,
        options.patch_w,
        options.patch_h,
        options.overwrite,
    )?);
    let log = Mutex::new(Vec::with_capacity(patches.len()));

    let start = Instant::now();
    let outcomes: Vec<Result<f64>> = thread::scope(|scope| {
        let handles: Vec<_> = assignments
            .iter()
            .map(|region| {
                let (reader, meta, patches, writer, log) = (&reader, &meta, &patches, &writer, &log);
                scope.spawn(move || {
                    let began = Instant::now();
                    process_region(reader, meta, patches, *region, options, processor, writer, log, patch_grid.cols)?;
                    Ok(began.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("pipeline worker panicked"))
            .collect()
    });
    let wall_seconds = start.elapsed().as_secs_f64();
    let per_worker_seconds = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    writer.into_inner().unwrap().finalize()?;
    let processed = log.into_inner().unwrap();
    Ok(PipelineReport {
        wsi_id: meta.image_id,
        n_workers: options.n_workers,
        patches_processed: processed.len(),
        wall_seconds,
        per_worker_seconds,
        assignments,
        processed,
    })
}

#[allow(clippy::too_many_arguments)]
fn process_region(
    reader: &ContainerReader,
    meta: &ImageMeta,
    patches: &[crate::reader::PatchWindow],
    region: RegionAssignment,
    options: PipelineOptions,
    processor: &dyn PatchProcessor,
    writer: &Mutex<ContainerWriter>,
    log: &Mutex<Vec<(usize, usize)>>,
    grid_cols: u32,
) -> Result<()> {
    let windows = &patches[region.range()];
    let px = meta.pixel_bytes();
    let mut buffers: Vec<Vec<u8>> = windows.iter().map(|w| vec![0u8; w.byte_len(px)]).collect();
    {
        let mut batch = reader.batch();
        for (window, buf) in windows.iter().zip(buffers.iter_mut()) {
            batch.defer_read(*window, buf)?;
        }
        batch.perform_reads()?;
    }

    for ((offset, window), data) in windows.iter().enumerate().zip(buffers) {
        let patch_index = region.start + offset;
        let block = PixelBlock::new(window.w, window.h, meta.channels, meta.bytes_per_sample, data)?;
        let spec = pad_spec_for(*window, meta, options.patch_w, options.patch_h, options.fill)?;
        let padded = apply_padding(&block, &spec)?;
        let processor_error = |message: String| Error::Processor {
            processor: processor.name().to_string(),
            patch: patch_index,
            message,
        };
        let result = processor.apply(&padded, meta).map_err(processor_error)?;
        if (result.width, result.height, result.channels, result.bytes_per_sample)
            != (options.patch_w, options.patch_h, 1, 1)
            || result.data.len() != result.expected_len()
        {
            return Err(processor_error(format!(
                "returned a {}x{}x{} block of {}-byte samples",
                result.width, result.height, result.channels, result.bytes_per_sample
            )));
        }
        let cropped = crop(&result, 0, 0, window.w, window.h)?;
        let row = (patch_index / grid_cols as usize) as u32;
        let col = (patch_index % grid_cols as usize) as u32;
        writer.lock().unwrap().put_chunk(row, col, &cropped.data)?;
        log.lock().unwrap().push((region.worker_id, patch_index));
    }
    Ok(())
}
