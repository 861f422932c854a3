//! The on-disk container format.
//!
//! A container is a single file laid out as
//!
//! ```text
//! +-----------------+  offset 0
//! | header (16 B)   |  "WSTC", version u16, flags u16, 8 reserved zero bytes
//! +-----------------+  offset 16
//! | chunk payloads  |  each 8-byte aligned, zero-filled gaps
//! +-----------------+  index_offset (8-byte aligned)
//! | index           |  meta block, then one record per tile variable
//! +-----------------+
//! | trailer (24 B)  |  index_offset u64, index_length u64, index_crc32 u32, "WSTE"
//! +-----------------+
//! ```
//!
//! All integers are little-endian. A chunk payload holds the raw samples of
//! its logical (possibly truncated) shape, row-major and channel-interleaved.
//! Everything in this module is a pure value or a pure function.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"WSTC";
pub const END_MAGIC: [u8; 4] = *b"WSTE";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 16;
pub const TRAILER_LEN: u64 = 24;
pub const ALIGNMENT: u64 = 8;

/// Default chunk edge in pixels.
pub const DEFAULT_CHUNK_EDGE: u32 = 4096;

/// Rounds `offset` up to the next multiple of [`ALIGNMENT`].
pub fn align_up(offset: u64) -> u64 {
    offset.div_ceil(ALIGNMENT) * ALIGNMENT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stain {
    HE,
    PAS,
    SIL,
    TOL,
    TRI,
    OTHER,
}

impl Stain {
    pub fn code(self) -> u8 {
        match self {
            Stain::HE => 0,
            Stain::PAS => 1,
            Stain::SIL => 2,
            Stain::TOL => 3,
            Stain::TRI => 4,
            Stain::OTHER => 255,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Stain::HE,
            1 => Stain::PAS,
            2 => Stain::SIL,
            3 => Stain::TOL,
            4 => Stain::TRI,
            255 => Stain::OTHER,
            _ => return None,
        })
    }
}

impl fmt::Display for Stain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for Stain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "HE" | "H&E" => Stain::HE,
            "PAS" => Stain::PAS,
            "SIL" => Stain::SIL,
            "TOL" => Stain::TOL,
            "TRI" => Stain::TRI,
            "OTHER" => Stain::OTHER,
            _ => return Err(Error::InvalidArgument(format!("unknown stain {s:?}"))),
        })
    }
}

/// Dimensions and acquisition metadata of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub image_id: String,
    pub width_px: u64,
    pub height_px: u64,
    pub channels: u8,
    pub bytes_per_sample: u8,
    /// Physical pixel size in µm/px.
    pub microns_per_pixel: f64,
    pub magnification: f64,
    pub stain: Stain,
}

impl ImageMeta {
    /// A meta with 0.25 µm/px, 40x magnification and an `OTHER` stain.
    pub fn new(
        image_id: impl Into<String>,
        width_px: u64,
        height_px: u64,
        channels: u8,
        bytes_per_sample: u8,
    ) -> Self {
        ImageMeta {
            image_id: image_id.into(),
            width_px,
            height_px,
            channels,
            bytes_per_sample,
            microns_per_pixel: 0.25,
            magnification: 40.0,
            stain: Stain::OTHER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.width_px < 1 || self.height_px < 1 {
            return bad(format!(
                "image must be at least 1x1, got {}x{}",
                self.width_px, self.height_px
            ));
        }
        if !matches!(self.channels, 1 | 3 | 4) {
            return bad(format!("channels must be 1, 3 or 4, got {}", self.channels));
        }
        if !matches!(self.bytes_per_sample, 1 | 2) {
            return bad(format!(
                "bytes_per_sample must be 1 or 2, got {}",
                self.bytes_per_sample
            ));
        }
        if !(self.microns_per_pixel.is_finite() && self.microns_per_pixel > 0.0) {
            return bad(format!(
                "microns_per_pixel must be positive, got {}",
                self.microns_per_pixel
            ));
        }
        if !(self.magnification.is_finite() && self.magnification > 0.0) {
            return bad(format!(
                "magnification must be positive, got {}",
                self.magnification
            ));
        }
        if self.image_id.len() > u16::MAX as usize {
            return bad("image_id longer than 65535 bytes".into());
        }
        Ok(())
    }

    /// Bytes per pixel (all channels).
    pub fn pixel_bytes(&self) -> usize {
        self.channels as usize * self.bytes_per_sample as usize
    }

    pub fn max_sample(&self) -> u16 {
        if self.bytes_per_sample == 1 {
            u8::MAX as u16
        } else {
            u16::MAX
        }
    }

    /// Size in bytes of the full raster.
    pub fn image_bytes(&self) -> u64 {
        self.width_px * self.height_px * self.pixel_bytes() as u64
    }
}

/// Fixed grid of chunks covering an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkGrid {
    pub chunk_w: u32,
    pub chunk_h: u32,
    pub cols: u32,
    pub rows: u32,
}

/// Pixel rectangle of one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkRect {
    pub x: u64,
    pub y: u64,
    pub w: u32,
    pub h: u32,
}

pub fn compute_chunk_grid(meta: &ImageMeta, chunk_w: u32, chunk_h: u32) -> Result<ChunkGrid> {
    if chunk_w < 1 || chunk_h < 1 {
        return Err(Error::InvalidArgument(format!(
            "chunk dimensions must be positive, got {chunk_w}x{chunk_h}"
        )));
    }
    let cols = meta.width_px.div_ceil(chunk_w as u64);
    let rows = meta.height_px.div_ceil(chunk_h as u64);
    if cols > u32::MAX as u64 || rows > u32::MAX as u64 {
        return Err(Error::InvalidArgument("chunk grid too large".into()));
    }
    Ok(ChunkGrid {
        chunk_w,
        chunk_h,
        cols: cols as u32,
        rows: rows as u32,
    })
}

impl ChunkGrid {
    pub fn len(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, row: u32, col: u32) -> usize {
        row as usize * self.cols as usize + col as usize
    }

    pub fn cell_of(&self, index: usize) -> (u32, u32) {
        (
            (index / self.cols as usize) as u32,
            (index % self.cols as usize) as u32,
        )
    }

    pub fn contains(&self, row: u32, col: u32) -> bool {
        row < self.rows && col < self.cols
    }

    /// Rectangle of chunk `(row, col)`, truncated at the image boundary.
    pub fn chunk_rect(&self, row: u32, col: u32, width_px: u64, height_px: u64) -> ChunkRect {
        let x = col as u64 * self.chunk_w as u64;
        let y = row as u64 * self.chunk_h as u64;
        ChunkRect {
            x,
            y,
            w: (width_px - x).min(self.chunk_w as u64) as u32,
            h: (height_px - y).min(self.chunk_h as u64) as u32,
        }
    }

    /// Half-open row and column ranges of chunks intersecting a pixel rectangle.
    pub fn intersecting(
        &self,
        x: u64,
        y: u64,
        w: u64,
        h: u64,
    ) -> (std::ops::Range<u32>, std::ops::Range<u32>) {
        let r0 = (y / self.chunk_h as u64) as u32;
        let r1 = ((y + h - 1) / self.chunk_h as u64) as u32 + 1;
        let c0 = (x / self.chunk_w as u64) as u32;
        let c1 = ((x + w - 1) / self.chunk_w as u64) as u32 + 1;
        (r0..r1.min(self.rows), c0..c1.min(self.cols))
    }
}

pub fn tile_name(row: u32, col: u32) -> String {
    format!("tile/{row}/{col}")
}

/// One named chunk stored in the container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileVariable {
    pub name: String,
    pub row: u32,
    pub col: u32,
    pub logical_h: u32,
    pub logical_w: u32,
    pub channels: u8,
    pub byte_offset: u64,
    pub byte_length: u64,
    pub crc32: u32,
}

impl TileVariable {
    pub fn extent(&self) -> std::ops::Range<u64> {
        self.byte_offset..self.byte_offset + self.byte_length
    }
}

/// Footer directory of a finished container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerIndex {
    pub format_version: u16,
    pub meta: ImageMeta,
    pub grid: ChunkGrid,
    /// Row-major by `(row, col)`.
    pub variables: Vec<TileVariable>,
}

impl ContainerIndex {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidIndex(msg));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("format_version {}", self.format_version));
        }
        self.meta
            .validate()
            .map_err(|e| Error::InvalidIndex(e.to_string()))?;
        let expected = compute_chunk_grid(&self.meta, self.grid.chunk_w, self.grid.chunk_h)
            .map_err(|e| Error::InvalidIndex(e.to_string()))?;
        if expected != self.grid {
            return bad(format!(
                "grid {}x{} does not match image extent (expected {}x{})",
                self.grid.cols, self.grid.rows, expected.cols, expected.rows
            ));
        }
        if self.variables.len() != self.grid.len() {
            return bad(format!(
                "incomplete container: {} variables for a {}-cell grid",
                self.variables.len(),
                self.grid.len()
            ));
        }
        let sample_bytes = self.meta.pixel_bytes() as u64;
        for (k, var) in self.variables.iter().enumerate() {
            let (row, col) = self.grid.cell_of(k);
            if (var.row, var.col) != (row, col) {
                return bad(format!(
                    "variable {k} is ({}, {}), expected row-major ({row}, {col})",
                    var.row, var.col
                ));
            }
            if var.name != tile_name(row, col) {
                return bad(format!("variable {k} misnamed {:?}", var.name));
            }
            let rect = self
                .grid
                .chunk_rect(row, col, self.meta.width_px, self.meta.height_px);
            if (var.logical_w, var.logical_h) != (rect.w, rect.h) {
                return bad(format!(
                    "{} has logical shape {}x{}, expected {}x{}",
                    var.name, var.logical_w, var.logical_h, rect.w, rect.h
                ));
            }
            if var.channels != self.meta.channels {
                return bad(format!("{} has {} channels", var.name, var.channels));
            }
            let len = var.logical_w as u64 * var.logical_h as u64 * sample_bytes;
            if var.byte_length != len {
                return bad(format!(
                    "{} byte_length {} != {len}",
                    var.name, var.byte_length
                ));
            }
            if var.byte_offset < HEADER_LEN || var.byte_offset % ALIGNMENT != 0 {
                return bad(format!(
                    "{} has misplaced byte_offset {}",
                    var.name, var.byte_offset
                ));
            }
        }
        let mut extents: Vec<_> = self.variables.iter().map(TileVariable::extent).collect();
        extents.sort_by_key(|e| e.start);
        if extents.windows(2).any(|pair| pair[0].end > pair[1].start) {
            return bad("overlapping variable extents".into());
        }
        Ok(())
    }

    /// End of the last payload, i.e. where the data section stops.
    pub fn data_end(&self) -> u64 {
        self.variables
            .iter()
            .map(|v| v.byte_offset + v.byte_length)
            .max()
            .unwrap_or(HEADER_LEN)
    }
}

pub fn encode_header() -> [u8; HEADER_LEN as usize] {
    let mut header = [0u8; HEADER_LEN as usize];
    header[..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    header
}

/// Checks magic and version of a 16-byte header.
pub fn decode_header(bytes: &[u8]) -> Result<u16> {
    if bytes.len() < HEADER_LEN as usize || bytes[..4] != MAGIC {
        return Err(Error::NotAContainer("missing WSTC header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    Ok(version)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trailer {
    pub index_offset: u64,
    pub index_length: u64,
    pub index_crc32: u32,
}

impl Trailer {
    pub fn encode(&self) -> [u8; TRAILER_LEN as usize] {
        let mut out = [0u8; TRAILER_LEN as usize];
        out[0..8].copy_from_slice(&self.index_offset.to_le_bytes());
        out[8..16].copy_from_slice(&self.index_length.to_le_bytes());
        out[16..20].copy_from_slice(&self.index_crc32.to_le_bytes());
        out[20..24].copy_from_slice(&END_MAGIC);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != TRAILER_LEN as usize || bytes[20..24] != END_MAGIC {
            return Err(Error::NotAContainer("missing WSTE trailer".into()));
        }
        Ok(Trailer {
            index_offset: u64::from_le_bytes(bytes[0..8].try_into().unwrap()),
            index_length: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            index_crc32: u32::from_le_bytes(bytes[16..20].try_into().unwrap()),
        })
    }

    /// Checks that the index region sits between header and trailer of a
    /// file of `file_len` bytes.
    pub fn check_bounds(&self, file_len: u64) -> Result<()> {
        let end = self.index_offset.checked_add(self.index_length);
        match end {
            Some(end) if self.index_offset >= HEADER_LEN && end + TRAILER_LEN == file_len => Ok(()),
            _ => Err(Error::NotAContainer(format!(
                "trailer points at index [{}, +{}) outside a {file_len}-byte file",
                self.index_offset, self.index_length
            ))),
        }
    }
}

/// Serializes the index section (meta block followed by variable records).
pub fn encode_index_section(index: &ContainerIndex) -> Result<Vec<u8>> {
    index.validate()?;
    let meta = &index.meta;
    let mut out = Vec::with_capacity(64 + index.variables.len() * 48);
    put_str(&mut out, &meta.image_id)?;
    out.extend_from_slice(&meta.width_px.to_le_bytes());
    out.extend_from_slice(&meta.height_px.to_le_bytes());
    out.push(meta.channels);
    out.push(meta.bytes_per_sample);
    out.extend_from_slice(&meta.microns_per_pixel.to_le_bytes());
    out.extend_from_slice(&meta.magnification.to_le_bytes());
    out.push(meta.stain.code());
    out.extend_from_slice(&index.grid.chunk_w.to_le_bytes());
    out.extend_from_slice(&index.grid.chunk_h.to_le_bytes());
    out.extend_from_slice(&index.grid.cols.to_le_bytes());
    out.extend_from_slice(&index.grid.rows.to_le_bytes());
    out.extend_from_slice(&(index.variables.len() as u32).to_le_bytes());
    for var in &index.variables {
        put_str(&mut out, &var.name)?;
        out.extend_from_slice(&var.row.to_le_bytes());
        out.extend_from_slice(&var.col.to_le_bytes());
        out.extend_from_slice(&var.logical_h.to_le_bytes());
        out.extend_from_slice(&var.logical_w.to_le_bytes());
        out.push(var.channels);
        out.extend_from_slice(&var.byte_offset.to_le_bytes());
        out.extend_from_slice(&var.byte_length.to_le_bytes());
        out.extend_from_slice(&var.crc32.to_le_bytes());
    }
    Ok(out)
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::InvalidIndex(format!("string of {} bytes too long", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Parses an index section whose checksum has already been verified.
pub fn decode_index_section(bytes: &[u8]) -> Result<ContainerIndex> {
    let mut cur = Cursor { bytes, pos: 0 };
    let image_id = cur.string()?;
    let width_px = cur.u64()?;
    let height_px = cur.u64()?;
    let channels = cur.u8()?;
    let bytes_per_sample = cur.u8()?;
    let microns_per_pixel = cur.f64()?;
    let magnification = cur.f64()?;
    let stain_code = cur.u8()?;
    let stain = Stain::from_code(stain_code)
        .ok_or_else(|| Error::InvalidIndex(format!("unknown stain code {stain_code}")))?;
    let grid = ChunkGrid {
        chunk_w: cur.u32()?,
        chunk_h: cur.u32()?,
        cols: cur.u32()?,
        rows: cur.u32()?,
    };
    let count = cur.u32()? as usize;
    // Each record is at least 39 bytes; reject absurd counts before allocating.
    if count > bytes.len() / 39 + 1 {
        return Err(Error::InvalidIndex(format!(
            "variable_count {count} exceeds index size"
        )));
    }
    let mut variables = Vec::with_capacity(count);
    for _ in 0..count {
        variables.push(TileVariable {
            name: cur.string()?,
            row: cur.u32()?,
            col: cur.u32()?,
            logical_h: cur.u32()?,
            logical_w: cur.u32()?,
            channels: cur.u8()?,
            byte_offset: cur.u64()?,
            byte_length: cur.u64()?,
            crc32: cur.u32()?,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::InvalidIndex(format!(
            "{} trailing bytes after variable records",
            bytes.len() - cur.pos
        )));
    }
    let index = ContainerIndex {
        format_version: FORMAT_VERSION,
        meta: ImageMeta {
            image_id,
            width_px,
            height_px,
            channels,
            bytes_per_sample,
            microns_per_pixel,
            magnification,
            stain,
        },
        grid,
        variables,
    };
    index.validate()?;
    Ok(index)
}

/// Encodes `index` as a self-contained byte image: header, index section,
/// trailer. Variable offsets are carried as-is and are not backed by data.
pub fn encode_index(index: &ContainerIndex) -> Result<Vec<u8>> {
    let section = encode_index_section(index)?;
    let trailer = Trailer {
        index_offset: HEADER_LEN,
        index_length: section.len() as u64,
        index_crc32: crc32fast::hash(&section),
    };
    let mut out = Vec::with_capacity(section.len() + (HEADER_LEN + TRAILER_LEN) as usize);
    out.extend_from_slice(&encode_header());
    out.extend_from_slice(&section);
    out.extend_from_slice(&trailer.encode());
    Ok(out)
}

/// Decodes the index from a complete byte image (either the output of
/// [`encode_index`] or a whole container file).
pub fn decode_index(bytes: &[u8]) -> Result<ContainerIndex> {
    let len = bytes.len() as u64;
    if len < HEADER_LEN + TRAILER_LEN {
        return Err(Error::NotAContainer(format!("{len} bytes is too short")));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::NotAContainer("missing WSTC header".into()));
    }
    let trailer = Trailer::decode(&bytes[(len - TRAILER_LEN) as usize..])?;
    decode_header(&bytes[..HEADER_LEN as usize])?;
    trailer.check_bounds(len)?;
    let start = trailer.index_offset as usize;
    let section = &bytes[start..start + trailer.index_length as usize];
    verify_index_crc(section, trailer.index_crc32)?;
    decode_index_section(section)
}

pub fn verify_index_crc(section: &[u8], stored: u32) -> Result<()> {
    let computed = crc32fast::hash(section);
    if computed != stored {
        return Err(Error::CorruptIndex { stored, computed });
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&end| end <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::InvalidIndex(format!(
                "truncated index at byte {}",
                self.pos
            ))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::InvalidIndex("string is not valid UTF-8".into()))
    }
}

/// Builds the index a writer would produce for `meta`, laying payloads out
/// row-major from the end of the header. Checksums are left at zero.
pub fn planned_index(meta: &ImageMeta, grid: ChunkGrid) -> ContainerIndex {
    let mut offset = HEADER_LEN;
    let pixel_bytes = meta.pixel_bytes() as u64;
    let mut variables = Vec::with_capacity(grid.len());
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let rect = grid.chunk_rect(row, col, meta.width_px, meta.height_px);
            let byte_length = rect.w as u64 * rect.h as u64 * pixel_bytes;
            offset = align_up(offset);
            variables.push(TileVariable {
                name: tile_name(row, col),
                row,
                col,
                logical_h: rect.h,
                logical_w: rect.w,
                channels: meta.channels,
                byte_offset: offset,
                byte_length,
                crc32: 0,
            });
            offset += byte_length;
        }
    }
    ContainerIndex {
        format_version: FORMAT_VERSION,
        meta: meta.clone(),
        grid,
        variables,
    }
}
