//! Patch enumeration, worker assignment and edge padding.

use std::ops::Range;

use serde::Serialize;

use crate::container::{compute_chunk_grid, ChunkGrid, ImageMeta};
use crate::error::{Error, Result};
use crate::reader::{PatchWindow, PixelBlock};

/// Grid of non-overlapping patches anchored at the origin.
pub fn patch_grid(meta: &ImageMeta, patch_w: u32, patch_h: u32) -> Result<ChunkGrid> {
    if patch_w < 1 || patch_h < 1 {
        return Err(Error::InvalidArgument(format!(
            "patch dimensions must be positive, got {patch_w}x{patch_h}"
        )));
    }
    compute_chunk_grid(meta, patch_w, patch_h)
}

/// Row-major patch windows with stride equal to the patch size. Windows on
/// the right and bottom edges are clipped to the image.
pub fn enumerate_patches(meta: &ImageMeta, patch_w: u32, patch_h: u32) -> Result<Vec<PatchWindow>> {
    let grid = patch_grid(meta, patch_w, patch_h)?;
    let mut out = Vec::with_capacity(grid.len());
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let r = grid.chunk_rect(row, col, meta.width_px, meta.height_px);
            out.push(PatchWindow::new(r.x, r.y, r.w, r.h));
        }
    }
    Ok(out)
}

/// A worker's contiguous share of the patch enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegionAssignment {
    pub worker_id: usize,
    pub start: usize,
    pub end: usize,
}

impl RegionAssignment {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn to_csv_row(&self) -> String {
        format!("{},{},{}", self.worker_id, self.start, self.end)
    }
}

/// Splits `n_patches` among `n_workers`: every worker gets
/// `n_patches / n_workers`, and the remainder goes to the last one.
pub fn assign_regions(n_patches: usize, n_workers: usize) -> Result<Vec<RegionAssignment>> {
    if n_workers < 1 {
        return Err(Error::InvalidArgument("need at least one worker".into()));
    }
    let share = n_patches / n_workers;
    Ok((0..n_workers)
        .map(|worker_id| {
            let start = worker_id * share;
            let end = if worker_id + 1 == n_workers {
                n_patches
            } else {
                start + share
            };
            RegionAssignment {
                worker_id,
                start,
                end,
            }
        })
        .collect())
}

pub const ASSIGNMENT_CSV_HEADER: &str = "worker_id,start,end";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadSpec {
    pub pad_top: u32,
    pub pad_left: u32,
    pub pad_bottom: u32,
    pub pad_right: u32,
    pub fill_value: u16,
}

impl PadSpec {
    pub fn is_zero(&self) -> bool {
        self.pad_top == 0 && self.pad_left == 0 && self.pad_bottom == 0 && self.pad_right == 0
    }
}

/// Padding that extends `window` to the full patch size. Pads only ever go
/// on the right and bottom, where clipped edge windows lie.
pub fn pad_spec_for(
    window: PatchWindow,
    meta: &ImageMeta,
    patch_w: u32,
    patch_h: u32,
    fill: u16,
) -> Result<PadSpec> {
    window.check_within(meta)?;
    if window.w > patch_w || window.h > patch_h {
        return Err(Error::InvalidArgument(format!(
            "window {}x{} larger than patch {patch_w}x{patch_h}",
            window.w, window.h
        )));
    }
    if fill > meta.max_sample() {
        return Err(Error::InvalidArgument(format!(
            "fill value {fill} exceeds sample range"
        )));
    }
    Ok(PadSpec {
        pad_top: 0,
        pad_left: 0,
        pad_bottom: patch_h - window.h,
        pad_right: patch_w - window.w,
        fill_value: fill,
    })
}

/// Places `pixels` inside a block grown by `spec`, filling the margin with
/// `spec.fill_value`.
pub fn apply_padding(pixels: &PixelBlock, spec: &PadSpec) -> Result<PixelBlock> {
    let expected = pixels.expected_len();
    if pixels.data.len() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            actual: pixels.data.len(),
        });
    }
    if spec.is_zero() {
        return Ok(pixels.clone());
    }
    let bps = pixels.bytes_per_sample as usize;
    let px = pixels.pixel_bytes();
    let out_w = (spec.pad_left + pixels.width + spec.pad_right) as usize;
    let out_h = (spec.pad_top + pixels.height + spec.pad_bottom) as usize;

    let fill = spec.fill_value.to_le_bytes();
    let mut data = vec![0u8; out_w * out_h * px];
    if spec.fill_value != 0 {
        for sample in data.chunks_exact_mut(bps) {
            sample.copy_from_slice(&fill[..bps]);
        }
    }
    let row_bytes = pixels.width as usize * px;
    for (y, line) in pixels.data.chunks_exact(row_bytes).enumerate() {
        let at = ((y + spec.pad_top as usize) * out_w + spec.pad_left as usize) * px;
        data[at..at + row_bytes].copy_from_slice(line);
    }
    PixelBlock::new(
        out_w as u32,
        out_h as u32,
        pixels.channels,
        pixels.bytes_per_sample,
        data,
    )
}

/// Sub-block at `(x, y)` of size `w`×`h`.
pub fn crop(block: &PixelBlock, x: u32, y: u32, w: u32, h: u32) -> Result<PixelBlock> {
    if x + w > block.width || y + h > block.height {
        return Err(Error::WindowOutOfBounds {
            x: x as u64,
            y: y as u64,
            w: w as u64,
            h: h as u64,
            width: block.width as u64,
            height: block.height as u64,
        });
    }
    let px = block.pixel_bytes();
    let mut data = Vec::with_capacity(w as usize * h as usize * px);
    for row in y..y + h {
        let at = (row as usize * block.width as usize + x as usize) * px;
        data.extend_from_slice(&block.data[at..at + w as usize * px]);
    }
    PixelBlock::new(w, h, block.channels, block.bytes_per_sample, data)
}
