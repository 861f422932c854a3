//! Windowed patch reads over a finished container.
//!
//! A [`ContainerReader`] is shareable across threads. Chunk payloads are
//! loaded with positional reads, checked against their stored crc32 when
//! they come off disk, and kept in a bounded LRU cache shared by every
//! caller of the handle.
//!
//! [`DeferredBatch`] queues windows and resolves them together: the plan is
//! built per chunk, each distinct chunk is loaded once, and its bytes are
//! scattered into every queued window it intersects.

use std::collections::BTreeMap;
use std::fs::File;
use std::num::NonZeroUsize;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use lru::LruCache;
use serde::Serialize;

use crate::container::{
    self, ChunkGrid, ContainerIndex, ImageMeta, TileVariable, Trailer, HEADER_LEN, TRAILER_LEN,
};
use crate::error::{Error, Result};

pub const DEFAULT_CACHE_CHUNKS: usize = 64;

/// A rectangular pixel window, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PatchWindow {
    pub x: u64,
    pub y: u64,
    pub w: u32,
    pub h: u32,
}

impl PatchWindow {
    pub fn new(x: u64, y: u64, w: u32, h: u32) -> Self {
        PatchWindow { x, y, w, h }
    }

    /// Errors unless the window is non-empty and lies inside the image.
    pub fn check_within(&self, meta: &ImageMeta) -> Result<()> {
        let inside = self.w >= 1
            && self.h >= 1
            && self.x + self.w as u64 <= meta.width_px
            && self.y + self.h as u64 <= meta.height_px;
        if inside {
            Ok(())
        } else {
            Err(Error::WindowOutOfBounds {
                x: self.x,
                y: self.y,
                w: self.w as u64,
                h: self.h as u64,
                width: meta.width_px,
                height: meta.height_px,
            })
        }
    }

    pub fn byte_len(&self, pixel_bytes: usize) -> usize {
        self.w as usize * self.h as usize * pixel_bytes
    }
}

/// Row-major, channel-interleaved samples of a rectangular block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBlock {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub bytes_per_sample: u8,
    pub data: Vec<u8>,
}

impl PixelBlock {
    pub fn new(
        width: u32,
        height: u32,
        channels: u8,
        bytes_per_sample: u8,
        data: Vec<u8>,
    ) -> Result<Self> {
        let block = PixelBlock {
            width,
            height,
            channels,
            bytes_per_sample,
            data,
        };
        let expected = block.expected_len();
        if block.data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: block.data.len(),
            });
        }
        Ok(block)
    }

    pub fn pixel_bytes(&self) -> usize {
        self.channels as usize * self.bytes_per_sample as usize
    }

    pub fn expected_len(&self) -> usize {
        self.width as usize * self.height as usize * self.pixel_bytes()
    }

    /// Sample value at `(x, y, ch)`, little-endian for 16-bit samples.
    pub fn sample(&self, x: u32, y: u32, ch: u8) -> u16 {
        let bps = self.bytes_per_sample as usize;
        let at = ((y as usize * self.width as usize + x as usize) * self.channels as usize
            + ch as usize)
            * bps;
        if bps == 1 {
            self.data[at] as u16
        } else {
            u16::from_le_bytes([self.data[at], self.data[at + 1]])
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReaderOptions {
    /// Maximum number of chunk payloads kept in memory; 0 disables caching.
    pub cache_chunks: usize,
}

impl Default for ReaderOptions {
    fn default() -> Self {
        ReaderOptions {
            cache_chunks: DEFAULT_CACHE_CHUNKS,
        }
    }
}

pub struct ContainerReader {
    path: PathBuf,
    file: File,
    index: ContainerIndex,
    cache: Option<Mutex<LruCache<usize, Arc<Vec<u8>>>>>,
}

impl std::fmt::Debug for ContainerReader {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContainerReader")
            .field("path", &self.path)
            .field("grid", &self.index.grid)
            .finish_non_exhaustive()
    }
}

/// Opens a container with the default chunk cache.
pub fn open_container(path: impl AsRef<Path>) -> Result<ContainerReader> {
    ContainerReader::open(path)
}

impl ContainerReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(path, ReaderOptions::default())
    }

    pub fn open_with(path: impl AsRef<Path>, options: ReaderOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let len = file.metadata()?.len();
        if len < HEADER_LEN + TRAILER_LEN {
            return Err(Error::NotAContainer(format!(
                "{} is {len} bytes",
                path.display()
            )));
        }
        let mut header = [0u8; HEADER_LEN as usize];
        file.read_exact_at(&mut header, 0)?;
        if header[..4] != container::MAGIC {
            return Err(Error::NotAContainer(format!(
                "{} has no WSTC header",
                path.display()
            )));
        }
        let mut tail = [0u8; TRAILER_LEN as usize];
        file.read_exact_at(&mut tail, len - TRAILER_LEN)?;
        let trailer = Trailer::decode(&tail)?;
        container::decode_header(&header)?;
        trailer.check_bounds(len)?;

        let mut section = vec![0u8; trailer.index_length as usize];
        file.read_exact_at(&mut section, trailer.index_offset)?;
        container::verify_index_crc(&section, trailer.index_crc32)?;
        let index = container::decode_index_section(&section)?;
        if index.data_end() > trailer.index_offset {
            return Err(Error::InvalidIndex(
                "variable extents run into the index section".into(),
            ));
        }

        let cache = NonZeroUsize::new(options.cache_chunks).map(|n| Mutex::new(LruCache::new(n)));
        Ok(ContainerReader {
            path,
            file,
            index,
            cache,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn meta(&self) -> &ImageMeta {
        &self.index.meta
    }

    pub fn grid(&self) -> ChunkGrid {
        self.index.grid
    }

    pub fn index(&self) -> &ContainerIndex {
        &self.index
    }

    /// All tile variables, row-major.
    pub fn list_variables(&self) -> &[TileVariable] {
        &self.index.variables
    }

    /// Payload of variable `k` (row-major position), checksum-verified.
    pub fn read_variable(&self, k: usize) -> Result<Arc<Vec<u8>>> {
        if k >= self.index.variables.len() {
            return Err(Error::InvalidArgument(format!("no variable at index {k}")));
        }
        Ok(self.load_chunk(k)?.0)
    }

    /// Returns the payload and whether it came from disk.
    fn load_chunk(&self, k: usize) -> Result<(Arc<Vec<u8>>, bool)> {
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lock().unwrap().get(&k) {
                return Ok((Arc::clone(hit), false));
            }
        }
        let var = &self.index.variables[k];
        let mut payload = vec![0u8; var.byte_length as usize];
        self.file.read_exact_at(&mut payload, var.byte_offset)?;
        let computed = crc32fast::hash(&payload);
        if computed != var.crc32 {
            return Err(Error::CorruptChunk {
                name: var.name.clone(),
                stored: var.crc32,
                computed,
            });
        }
        let payload = Arc::new(payload);
        if let Some(cache) = &self.cache {
            cache.lock().unwrap().put(k, Arc::clone(&payload));
        }
        Ok((payload, true))
    }

    pub fn read_patch(&self, window: PatchWindow) -> Result<PixelBlock> {
        let meta = self.meta();
        let mut data = vec![0u8; window.byte_len(meta.pixel_bytes())];
        self.read_patch_into(window, &mut data)?;
        PixelBlock::new(
            window.w,
            window.h,
            meta.channels,
            meta.bytes_per_sample,
            data,
        )
    }

    pub fn read_patch_into(&self, window: PatchWindow, dst: &mut [u8]) -> Result<()> {
        self.check_request(window, dst.len())?;
        let grid = self.index.grid;
        let (rows, cols) = grid.intersecting(window.x, window.y, window.w as u64, window.h as u64);
        for row in rows {
            for col in cols.clone() {
                let k = grid.index_of(row, col);
                let (payload, _) = self.load_chunk(k)?;
                self.scatter(k, &payload, window, dst);
            }
        }
        Ok(())
    }

    fn check_request(&self, window: PatchWindow, dst_len: usize) -> Result<()> {
        window.check_within(self.meta())?;
        let expected = window.byte_len(self.meta().pixel_bytes());
        if dst_len != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: dst_len,
            });
        }
        Ok(())
    }

    /// Copies the part of chunk `k` that overlaps `window` into `dst`.
    fn scatter(&self, k: usize, payload: &[u8], window: PatchWindow, dst: &mut [u8]) {
        let var = &self.index.variables[k];
        let px = self.meta().pixel_bytes();
        let cx = var.col as u64 * self.index.grid.chunk_w as u64;
        let cy = var.row as u64 * self.index.grid.chunk_h as u64;
        let x0 = window.x.max(cx);
        let x1 = (window.x + window.w as u64).min(cx + var.logical_w as u64);
        let y0 = window.y.max(cy);
        let y1 = (window.y + window.h as u64).min(cy + var.logical_h as u64);
        if x0 >= x1 || y0 >= y1 {
            return;
        }
        let span = (x1 - x0) as usize * px;
        for y in y0..y1 {
            let src = (((y - cy) * var.logical_w as u64 + (x0 - cx)) as usize) * px;
            let dst_at = (((y - window.y) * window.w as u64 + (x0 - window.x)) as usize) * px;
            dst[dst_at..dst_at + span].copy_from_slice(&payload[src..src + span]);
        }
    }

    pub fn batch<'a>(&'a self) -> DeferredBatch<'a> {
        DeferredBatch {
            reader: self,
            requests: Vec::new(),
            state: BatchState::Open,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchState {
    Open,
    Resolved,
}

/// Handle to a queued request: its position in the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReadToken(pub usize);

/// Outcome of resolving a [`DeferredBatch`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ResolutionReport {
    pub windows_served: usize,
    /// Distinct chunks consulted, from cache or disk.
    pub chunks_touched: usize,
    /// Chunks that had to be read from the file.
    pub chunks_loaded: usize,
    /// Payload bytes read from the file.
    pub bytes_read: u64,
    pub wall_seconds: f64,
}

impl ResolutionReport {
    pub const CSV_HEADER: &'static str = "windows_served,chunks_touched,bytes_read,wall_seconds";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.windows_served, self.chunks_touched, self.bytes_read, self.wall_seconds
        )
    }
}

/// Windows queued for one resolution.
///
/// Destinations are borrowed until the batch is dropped and are written only
/// by [`DeferredBatch::perform_reads`].
pub struct DeferredBatch<'a> {
    reader: &'a ContainerReader,
    requests: Vec<(PatchWindow, &'a mut [u8])>,
    state: BatchState,
}

impl<'a> DeferredBatch<'a> {
    pub fn state(&self) -> BatchState {
        self.state
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn defer_read(&mut self, window: PatchWindow, destination: &'a mut [u8]) -> Result<ReadToken> {
        if self.state == BatchState::Resolved {
            return Err(Error::InvalidState("batch already resolved".into()));
        }
        self.reader.check_request(window, destination.len())?;
        self.requests.push((window, destination));
        Ok(ReadToken(self.requests.len() - 1))
    }

    pub fn perform_reads(&mut self) -> Result<ResolutionReport> {
        if self.state == BatchState::Resolved {
            return Err(Error::InvalidState("batch already resolved".into()));
        }
        self.state = BatchState::Resolved;
        let start = Instant::now();
        let reader = self.reader;
        let grid = reader.index.grid;

        let mut plan: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut outstanding = vec![0usize; self.requests.len()];
        for (i, (w, _)) in self.requests.iter().enumerate() {
            let (rows, cols) = grid.intersecting(w.x, w.y, w.w as u64, w.h as u64);
            for row in rows {
                for col in cols.clone() {
                    plan.entry(grid.index_of(row, col)).or_default().push(i);
                    outstanding[i] += 1;
                }
            }
        }

        let mut report = ResolutionReport::default();
        for (&k, members) in &plan {
            let (payload, from_disk) = match reader.load_chunk(k) {
                Ok(loaded) => loaded,
                Err(err) => {
                    let unserved = outstanding
                        .iter()
                        .enumerate()
                        .filter(|(_, &n)| n > 0)
                        .map(|(i, _)| i)
                        .collect();
                    return Err(Error::PartialFailure {
                        unserved,
                        source: Box::new(err),
                    });
                }
            };
            report.chunks_touched += 1;
            if from_disk {
                report.chunks_loaded += 1;
                report.bytes_read += payload.len() as u64;
            }
            for &i in members {
                let (window, dst) = &mut self.requests[i];
                reader.scatter(k, &payload, *window, dst);
                outstanding[i] -= 1;
            }
        }
        report.windows_served = self.requests.len();
        report.wall_seconds = start.elapsed().as_secs_f64();
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::writer::{ingest_raster, SyntheticPattern, SyntheticSource};

    fn gradient_container(dir: &Path, w: u64, h: u64, chunk: u32) -> PathBuf {
        let path = dir.join("g.wstc");
        let source = SyntheticSource::new(ImageMeta::new("g", w, h, 1, 1), SyntheticPattern::Gradient)
            .unwrap();
        ingest_raster(&source, &path, chunk, chunk, false).unwrap();
        path
    }

    #[test]
    fn window_bounds() {
        let meta = ImageMeta::new("m", 100, 50, 1, 1);
        assert!(PatchWindow::new(0, 0, 100, 50).check_within(&meta).is_ok());
        assert!(PatchWindow::new(1, 0, 100, 50).check_within(&meta).is_err());
        assert!(PatchWindow::new(0, 0, 0, 5).check_within(&meta).is_err());
    }

    #[test]
    fn gradient_closed_form_window() {
        let dir = tempfile::tempdir().unwrap();
        let path = gradient_container(dir.path(), 3000, 2500, 1024);
        let reader = ContainerReader::open(&path).unwrap();
        let block = reader.read_patch(PatchWindow::new(1000, 2000, 2, 1)).unwrap();
        assert_eq!(block.data, vec![184, 185]);
    }

    #[test]
    fn full_chunk_window_equals_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = gradient_container(dir.path(), 300, 200, 128);
        let reader = ContainerReader::open(&path).unwrap();
        let k = reader.grid().index_of(1, 1);
        let block = reader.read_patch(PatchWindow::new(128, 128, 128, 72)).unwrap();
        assert_eq!(block.data, *reader.read_variable(k).unwrap());
    }

    #[test]
    fn out_of_bounds_and_shape_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = gradient_container(dir.path(), 64, 64, 32);
        let reader = ContainerReader::open(&path).unwrap();
        assert!(matches!(
            reader.read_patch(PatchWindow::new(60, 0, 8, 8)),
            Err(Error::WindowOutOfBounds { .. })
        ));
        let mut small = vec![0u8; 3];
        assert!(matches!(
            reader.read_patch_into(PatchWindow::new(0, 0, 2, 2), &mut small),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn batch_lifecycle_and_coalescing() {
        let dir = tempfile::tempdir().unwrap();
        let path = gradient_container(dir.path(), 256, 256, 128);
        let reader = ContainerReader::open(&path).unwrap();
        let mut a = vec![0u8; 16];
        let mut b = vec![0u8; 16];
        let mut extra = vec![0u8; 16];
        let mut batch = reader.batch();
        batch.defer_read(PatchWindow::new(0, 0, 4, 4), &mut a).unwrap();
        batch.defer_read(PatchWindow::new(10, 10, 4, 4), &mut b).unwrap();
        let report = batch.perform_reads().unwrap();
        assert_eq!(report.windows_served, 2);
        assert_eq!(report.chunks_touched, 1);
        assert!(matches!(
            batch.defer_read(PatchWindow::new(0, 0, 4, 4), &mut extra),
            Err(Error::InvalidState(_))
        ));
        assert!(matches!(batch.perform_reads(), Err(Error::InvalidState(_))));
        drop(batch);
        assert_eq!(a, reader.read_patch(PatchWindow::new(0, 0, 4, 4)).unwrap().data);
        assert_eq!(b, reader.read_patch(PatchWindow::new(10, 10, 4, 4)).unwrap().data);
    }

    #[test]
    fn empty_batch_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let path = gradient_container(dir.path(), 16, 16, 8);
        let reader = ContainerReader::open(&path).unwrap();
        let mut batch = reader.batch();
        let report = batch.perform_reads().unwrap();
        assert_eq!(report.windows_served, 0);
        assert_eq!(report.chunks_touched, 0);
        assert_eq!(batch.state(), BatchState::Resolved);
    }

    #[test]
    fn report_csv_row() {
        let report = ResolutionReport {
            windows_served: 3,
            chunks_touched: 2,
            chunks_loaded: 2,
            bytes_read: 100,
            wall_seconds: 0.5,
        };
        assert_eq!(report.to_csv_row(), "3,2,100,0.5");
    }
}
