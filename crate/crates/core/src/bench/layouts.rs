//! The two baseline layouts the chunked container is compared against: one
//! whole-image blob, and one small file per patch.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::container::ImageMeta;
use crate::error::{Error, Result};
use crate::partition::{enumerate_patches, patch_grid};
use crate::reader::{ContainerReader, PatchWindow, PixelBlock, ReaderOptions};

pub const BLOB_MAGIC: [u8; 4] = *b"WSTB";
pub const BLOB_HEADER_LEN: usize = 16;
pub const PATCH_MAGIC: [u8; 4] = *b"WSTP";
pub const PATCH_HEADER_LEN: usize = 20;
pub const PATCH_FILE_EXT: &str = "wsp";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlobHeader {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub bytes_per_sample: u8,
}

impl BlobHeader {
    fn from_meta(meta: &ImageMeta) -> Result<Self> {
        let dim = |v: u64| {
            u32::try_from(v)
                .map_err(|_| Error::InvalidArgument(format!("dimension {v} too large for a blob")))
        };
        Ok(BlobHeader {
            width: dim(meta.width_px)?,
            height: dim(meta.height_px)?,
            channels: meta.channels,
            bytes_per_sample: meta.bytes_per_sample,
        })
    }

    pub fn encode(&self) -> [u8; BLOB_HEADER_LEN] {
        let mut out = [0u8; BLOB_HEADER_LEN];
        out[0..4].copy_from_slice(&BLOB_MAGIC);
        out[4..8].copy_from_slice(&self.width.to_le_bytes());
        out[8..12].copy_from_slice(&self.height.to_le_bytes());
        out[12] = self.channels;
        out[13] = self.bytes_per_sample;
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < BLOB_HEADER_LEN || bytes[0..4] != BLOB_MAGIC {
            return Err(Error::CorruptBlob("missing WSTB header".into()));
        }
        Ok(BlobHeader {
            width: u32::from_le_bytes(bytes[4..8].try_into().unwrap()),
            height: u32::from_le_bytes(bytes[8..12].try_into().unwrap()),
            channels: bytes[12],
            bytes_per_sample: bytes[13],
        })
    }

    pub fn pixel_bytes(&self) -> usize {
        self.channels as usize * self.bytes_per_sample as usize
    }

    pub fn payload_len(&self) -> u64 {
        self.width as u64 * self.height as u64 * self.pixel_bytes() as u64
    }
}

fn create_file(path: &Path, overwrite: bool) -> Result<File> {
    let mut options = OpenOptions::new();
    options.write(true);
    if overwrite {
        options.create(true).truncate(true);
    } else {
        options.create_new(true);
    }
    Ok(options.open(path)?)
}

/// Writes the full image as one row-major blob behind a 16-byte header.
/// Returns the blob size in bytes.
pub fn export_whole_blob(
    container: impl AsRef<Path>,
    out: impl AsRef<Path>,
    overwrite: bool,
) -> Result<u64> {
    let reader = ContainerReader::open_with(container, ReaderOptions { cache_chunks: 0 })?;
    let meta = reader.meta().clone();
    let header = BlobHeader::from_meta(&meta)?;
    let mut sink = BufWriter::with_capacity(1 << 20, create_file(out.as_ref(), overwrite)?);
    sink.write_all(&header.encode())?;

    // One band of chunk rows at a time keeps memory at width × chunk_h pixels.
    let grid = reader.grid();
    let mut band = Vec::new();
    for row in 0..grid.rows {
        let rect = grid.chunk_rect(row, 0, meta.width_px, meta.height_px);
        let window = PatchWindow::new(0, rect.y, meta.width_px as u32, rect.h);
        band.resize(window.byte_len(meta.pixel_bytes()), 0);
        reader.read_patch_into(window, &mut band)?;
        sink.write_all(&band)?;
    }
    sink.flush()?;
    Ok(BLOB_HEADER_LEN as u64 + header.payload_len())
}

/// A blob held entirely in memory.
#[derive(Debug)]
pub struct LoadedBlob {
    pub header: BlobHeader,
    bytes: Vec<u8>,
}

impl LoadedBlob {
    pub fn pixels(&self) -> &[u8] {
        &self.bytes[BLOB_HEADER_LEN..]
    }

    pub fn file_len(&self) -> usize {
        self.bytes.len()
    }

    /// Copies a window out of the in-memory image.
    pub fn slice_window(&self, window: PatchWindow) -> Vec<u8> {
        let px = self.header.pixel_bytes();
        let row_bytes = window.w as usize * px;
        let stride = self.header.width as usize * px;
        let pixels = self.pixels();
        let mut out = Vec::with_capacity(row_bytes * window.h as usize);
        for y in window.y as usize..window.y as usize + window.h as usize {
            let at = y * stride + window.x as usize * px;
            out.extend_from_slice(&pixels[at..at + row_bytes]);
        }
        out
    }
}

/// Reads a whole blob into memory, refusing files larger than `budget` bytes.
pub fn load_blob(path: impl AsRef<Path>, budget: u64) -> Result<LoadedBlob> {
    let path = path.as_ref();
    let len = fs::metadata(path)?.len();
    if len > budget {
        return Err(Error::MemoryBudgetExceeded {
            needed: len,
            budget,
        });
    }
    let bytes = fs::read(path)?;
    let header = BlobHeader::decode(&bytes)?;
    let expected = BLOB_HEADER_LEN as u64 + header.payload_len();
    if bytes.len() as u64 != expected {
        return Err(Error::CorruptBlob(format!(
            "{}: {} bytes, header implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(LoadedBlob { header, bytes })
}

pub fn patch_file_name(row: u32, col: u32) -> String {
    format!("patch_{row}_{col}.{PATCH_FILE_EXT}")
}

/// `(row, col)` of a file named by [`patch_file_name`].
pub fn parse_patch_file_name(name: &str) -> Option<(u32, u32)> {
    let stem = name.strip_prefix("patch_")?.strip_suffix(".wsp")?;
    let (row, col) = stem.split_once('_')?;
    Some((row.parse().ok()?, col.parse().ok()?))
}

pub fn encode_patch_file(block: &PixelBlock) -> Vec<u8> {
    let mut out = Vec::with_capacity(PATCH_HEADER_LEN + block.data.len());
    out.extend_from_slice(&PATCH_MAGIC);
    out.extend_from_slice(&block.height.to_le_bytes());
    out.extend_from_slice(&block.width.to_le_bytes());
    out.extend_from_slice(&(block.channels as u32).to_le_bytes());
    out.push(block.bytes_per_sample);
    out.extend_from_slice(&[0u8; 3]);
    out.extend_from_slice(&block.data);
    out
}

pub fn decode_patch_file(path: &Path, bytes: Vec<u8>) -> Result<PixelBlock> {
    let corrupt = |reason: String| Error::CorruptPatchFile {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < PATCH_HEADER_LEN || bytes[0..4] != PATCH_MAGIC {
        return Err(corrupt("missing WSTP header".into()));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let c = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let bps = bytes[16];
    let channels = u8::try_from(c).map_err(|_| corrupt(format!("{c} channels")))?;
    let expected = w as usize * h as usize * c as usize * bps as usize;
    let mut data = bytes;
    if data.len() - PATCH_HEADER_LEN != expected {
        return Err(corrupt(format!(
            "{} pixel bytes, header implies {expected}",
            data.len() - PATCH_HEADER_LEN
        )));
    }
    data.drain(..PATCH_HEADER_LEN);
    PixelBlock::new(w, h, channels, bps, data)
}

pub fn read_patch_file(path: impl AsRef<Path>) -> Result<PixelBlock> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::CorruptPatchFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    decode_patch_file(path, bytes)
}

/// Writes one file per enumerated patch (unpadded) into `dir`, creating it
/// if needed. Existing patch files are replaced only with `overwrite`.
pub fn export_patch_files(
    container: impl AsRef<Path>,
    dir: impl AsRef<Path>,
    patch_w: u32,
    patch_h: u32,
    overwrite: bool,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let reader = ContainerReader::open(container)?;
    let meta = reader.meta().clone();
    let grid = patch_grid(&meta, patch_w, patch_h)?;
    let windows = enumerate_patches(&meta, patch_w, patch_h)?;
    fs::create_dir_all(dir)?;

    let mut paths = Vec::with_capacity(windows.len());
    for (k, window) in windows.into_iter().enumerate() {
        let (row, col) = grid.cell_of(k);
        let path = dir.join(patch_file_name(row, col));
        let block = reader.read_patch(window)?;
        let mut file = create_file(&path, overwrite)?;
        file.write_all(&encode_patch_file(&block))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Patch files in `dir`, sorted row-major by their `(row, col)` names.
pub fn list_patch_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(cell) = parse_patch_file_name(&name.to_string_lossy()) {
            found.push((cell, entry.path()));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}
