//! Container creation: the single-writer lifecycle, raster sources and
//! synthetic test patterns.
//!
//! Payload offsets are planned row-major when the container is created, so
//! chunks may be written in any order and the resulting file is the same
//! byte for byte.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::container::{
    self, align_up, compute_chunk_grid, ContainerIndex, ImageMeta, Stain, TileVariable, Trailer,
};
use crate::error::{Error, Result};
use crate::reader::PatchWindow;

/// Anything that can hand out rectangular windows of an image.
pub trait RasterSource: Send + Sync {
    fn meta(&self) -> &ImageMeta;

    /// Fills `out` with the window's samples, row-major and channel-interleaved.
    fn read_window_into(&self, window: PatchWindow, out: &mut [u8]) -> Result<()>;

    fn read_window(&self, window: PatchWindow) -> Result<Vec<u8>> {
        let mut out = vec![0u8; window.byte_len(self.meta().pixel_bytes())];
        self.read_window_into(window, &mut out)?;
        Ok(out)
    }
}

fn check_window(meta: &ImageMeta, window: PatchWindow, out_len: usize) -> Result<()> {
    window.check_within(meta)?;
    let expected = window.byte_len(meta.pixel_bytes());
    if out_len != expected {
        return Err(Error::ShapeMismatch {
            expected,
            actual: out_len,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticPattern {
    /// `(x + y + ch) mod 2^(8 * bytes_per_sample)`
    Gradient,
    /// Maximum sample where `(x / cell + y / cell)` is even, zero elsewhere.
    Checker { cell: u32 },
    /// Stateless per-coordinate hash, see [`prng_sample`].
    Prng { seed: u64 },
}

impl FromStr for SyntheticPattern {
    type Err = Error;

    /// Parses `gradient`, `checker:<cell>` or `prng` (seed 0; set it with
    /// [`SyntheticPattern::with_seed`]).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown pattern {s:?}"));
        match s.split_once(':') {
            None if s == "gradient" => Ok(SyntheticPattern::Gradient),
            None if s == "prng" => Ok(SyntheticPattern::Prng { seed: 0 }),
            Some(("checker", cell)) => {
                let cell: u32 = cell.parse().map_err(|_| bad())?;
                if cell == 0 {
                    return Err(Error::InvalidArgument("checker cell must be ≥ 1".into()));
                }
                Ok(SyntheticPattern::Checker { cell })
            }
            Some(("prng", seed)) => Ok(SyntheticPattern::Prng {
                seed: seed.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl SyntheticPattern {
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            SyntheticPattern::Prng { .. } => SyntheticPattern::Prng { seed },
            other => other,
        }
    }
}

/// splitmix64-finalized mix of `(seed, x, y, ch)`.
pub fn prng_sample(seed: u64, x: u64, y: u64, ch: u64) -> u64 {
    let mut z = seed
        ^ x.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ y.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ ch.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Closed-form synthetic image.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    meta: ImageMeta,
    pattern: SyntheticPattern,
}

/// Builds a [`RasterSource`] evaluating `pattern` over `meta`'s extent.
pub fn generate_synthetic(meta: ImageMeta, pattern: SyntheticPattern) -> Result<SyntheticSource> {
    SyntheticSource::new(meta, pattern)
}

impl SyntheticSource {
    pub fn new(meta: ImageMeta, pattern: SyntheticPattern) -> Result<Self> {
        meta.validate()?;
        if let SyntheticPattern::Checker { cell: 0 } = pattern {
            return Err(Error::InvalidArgument("checker cell must be ≥ 1".into()));
        }
        Ok(SyntheticSource { meta, pattern })
    }

    pub fn pattern(&self) -> SyntheticPattern {
        self.pattern
    }

    pub fn sample(&self, x: u64, y: u64, ch: u8) -> u16 {
        let mask = self.meta.max_sample() as u64;
        match self.pattern {
            SyntheticPattern::Gradient => ((x + y + ch as u64) & mask) as u16,
            SyntheticPattern::Checker { cell } => {
                let cell = cell as u64;
                if (x / cell + y / cell).is_multiple_of(2) {
                    mask as u16
                } else {
                    0
                }
            }
            SyntheticPattern::Prng { seed } => (prng_sample(seed, x, y, ch as u64) & mask) as u16,
        }
    }
}

impl RasterSource for SyntheticSource {
    fn meta(&self) -> &ImageMeta {
        &self.meta
    }

    fn read_window_into(&self, window: PatchWindow, out: &mut [u8]) -> Result<()> {
        check_window(&self.meta, window, out.len())?;
        let channels = self.meta.channels;
        let bps = self.meta.bytes_per_sample as usize;
        let mut at = 0;
        for y in window.y..window.y + window.h as u64 {
            for x in window.x..window.x + window.w as u64 {
                for ch in 0..channels {
                    let v = self.sample(x, y, ch);
                    if bps == 1 {
                        out[at] = v as u8;
                    } else {
                        out[at..at + 2].copy_from_slice(&v.to_le_bytes());
                    }
                    at += bps;
                }
            }
        }
        Ok(())
    }
}

/// Interleaved raw samples on disk, described by a `key=value` sidecar.
#[derive(Debug)]
pub struct RawRasterSource {
    meta: ImageMeta,
    file: File,
}

impl RawRasterSource {
    /// Opens `raw` using the sidecar at `sidecar`.
    pub fn open(raw: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<Self> {
        let raw = raw.as_ref();
        let text = std::fs::read_to_string(sidecar.as_ref())?;
        let default_id = raw
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let meta = parse_sidecar(&text, &default_id)?;
        let file = File::open(raw)?;
        let len = file.metadata()?.len();
        if len != meta.image_bytes() {
            return Err(Error::ShapeMismatch {
                expected: meta.image_bytes() as usize,
                actual: len as usize,
            });
        }
        Ok(RawRasterSource { meta, file })
    }

    /// Opens `raw` with its sidecar at `<raw>.meta`.
    pub fn open_default(raw: impl AsRef<Path>) -> Result<Self> {
        let raw = raw.as_ref();
        Self::open(raw, sidecar_path(raw))
    }
}

pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut name = raw.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

impl RasterSource for RawRasterSource {
    fn meta(&self) -> &ImageMeta {
        &self.meta
    }

    fn read_window_into(&self, window: PatchWindow, out: &mut [u8]) -> Result<()> {
        check_window(&self.meta, window, out.len())?;
        let px = self.meta.pixel_bytes() as u64;
        let row_bytes = window.w as usize * px as usize;
        for (i, line) in out.chunks_exact_mut(row_bytes).enumerate() {
            let y = window.y + i as u64;
            let offset = (y * self.meta.width_px + window.x) * px;
            self.file.read_exact_at(line, offset)?;
        }
        Ok(())
    }
}

/// Parses sidecar metadata. `width`, `height`, `channels` and
/// `bytes_per_sample` are required; `microns_per_pixel` (0.25),
/// `magnification` (40), `stain` (OTHER) and `image_id` are optional.
pub fn parse_sidecar(text: &str, default_id: &str) -> Result<ImageMeta> {
    let mut fields = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("sidecar line {}: expected key=value", n + 1))
        })?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    fn get<T: FromStr>(fields: &HashMap<String, String>, key: &str) -> Result<Option<T>> {
        fields
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::InvalidArgument(format!("sidecar {key}={v:?} is invalid")))
            })
            .transpose()
    }
    let required = |key: &str| -> Result<u64> {
        get(&fields, key)?.ok_or_else(|| Error::InvalidArgument(format!("sidecar missing {key}")))
    };
    let meta = ImageMeta {
        image_id: fields
            .get("image_id")
            .cloned()
            .unwrap_or_else(|| default_id.to_string()),
        width_px: required("width")?,
        height_px: required("height")?,
        channels: u8::try_from(required("channels")?)
            .map_err(|_| Error::InvalidArgument("sidecar channels out of range".into()))?,
        bytes_per_sample: u8::try_from(required("bytes_per_sample")?)
            .map_err(|_| Error::InvalidArgument("sidecar bytes_per_sample out of range".into()))?,
        microns_per_pixel: get(&fields, "microns_per_pixel")?.unwrap_or(0.25),
        magnification: get(&fields, "magnification")?.unwrap_or(40.0),
        stain: match fields.get("stain") {
            Some(s) => s.parse()?,
            None => Stain::OTHER,
        },
    };
    meta.validate()?;
    Ok(meta)
}

pub fn format_sidecar(meta: &ImageMeta) -> String {
    format!(
        "image_id={}\nwidth={}\nheight={}\nchannels={}\nbytes_per_sample={}\nmicrons_per_pixel={}\nmagnification={}\nstain={}\n",
        meta.image_id,
        meta.width_px,
        meta.height_px,
        meta.channels,
        meta.bytes_per_sample,
        meta.microns_per_pixel,
        meta.magnification,
        meta.stain
    )
}

/// Writes a finished container: create, `put_chunk` every grid cell once in
/// any order, then `finalize`.
#[derive(Debug)]
pub struct ContainerWriter {
    path: PathBuf,
    file: File,
    plan: ContainerIndex,
    written: Vec<bool>,
    finalized: bool,
}

impl ContainerWriter {
    /// Creates the file and writes its header. An existing file is replaced
    /// only when `overwrite` is set.
    pub fn create(
        path: impl AsRef<Path>,
        meta: ImageMeta,
        chunk_w: u32,
        chunk_h: u32,
        overwrite: bool,
    ) -> Result<Self> {
        meta.validate()?;
        let grid = compute_chunk_grid(&meta, chunk_w, chunk_h)?;
        let path = path.as_ref().to_path_buf();
        let mut options = OpenOptions::new();
        options.write(true).read(true);
        if overwrite {
            options.create(true).truncate(true);
        } else {
            options.create_new(true);
        }
        let file = options.open(&path)?;
        file.write_all_at(&container::encode_header(), 0)?;
        let plan = container::planned_index(&meta, grid);
        Ok(ContainerWriter {
            path,
            file,
            written: vec![false; plan.variables.len()],
            plan,
            finalized: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn meta(&self) -> &ImageMeta {
        &self.plan.meta
    }

    pub fn grid(&self) -> container::ChunkGrid {
        self.plan.grid
    }

    /// Number of grid cells not yet written.
    pub fn pending(&self) -> usize {
        self.written.iter().filter(|w| !**w).count()
    }

    /// Planned variable for `(row, col)`; its crc32 is filled in by `put_chunk`.
    pub fn variable(&self, row: u32, col: u32) -> Option<&TileVariable> {
        self.plan
            .grid
            .contains(row, col)
            .then(|| &self.plan.variables[self.plan.grid.index_of(row, col)])
    }

    pub fn put_chunk(&mut self, row: u32, col: u32, pixels: &[u8]) -> Result<&TileVariable> {
        if self.finalized {
            return Err(Error::InvalidState("writer already finalized".into()));
        }
        let grid = self.plan.grid;
        if !grid.contains(row, col) {
            return Err(Error::InvalidArgument(format!(
                "tile/{row}/{col} outside a {}x{} grid",
                grid.rows, grid.cols
            )));
        }
        let k = grid.index_of(row, col);
        if self.written[k] {
            return Err(Error::DuplicateVariable { row, col });
        }
        let var = &mut self.plan.variables[k];
        if pixels.len() as u64 != var.byte_length {
            return Err(Error::ShapeMismatch {
                expected: var.byte_length as usize,
                actual: pixels.len(),
            });
        }
        self.file.write_all_at(pixels, var.byte_offset)?;
        var.crc32 = crc32fast::hash(pixels);
        self.written[k] = true;
        Ok(var)
    }

    /// Writes the index and trailer. Fails with `IncompleteContainer` while
    /// cells are missing; the writer stays usable in that case.
    pub fn finalize(&mut self) -> Result<ContainerIndex> {
        if self.finalized {
            return Err(Error::InvalidState("writer already finalized".into()));
        }
        let missing: Vec<_> = self
            .written
            .iter()
            .enumerate()
            .filter(|(_, w)| !**w)
            .map(|(k, _)| self.plan.grid.cell_of(k))
            .collect();
        if !missing.is_empty() {
            return Err(Error::IncompleteContainer { missing });
        }
        let section = container::encode_index_section(&self.plan)?;
        let index_offset = align_up(self.plan.data_end());
        let trailer = Trailer {
            index_offset,
            index_length: section.len() as u64,
            index_crc32: crc32fast::hash(&section),
        };
        self.file.set_len(index_offset)?;
        self.file.write_all_at(&section, index_offset)?;
        self.file
            .write_all_at(&trailer.encode(), index_offset + section.len() as u64)?;
        self.finalized = true;
        Ok(self.plan.clone())
    }
}

/// Begins a container at `path`; see [`ContainerWriter::create`].
pub fn create_container(
    path: impl AsRef<Path>,
    meta: ImageMeta,
    chunk_w: u32,
    chunk_h: u32,
    overwrite: bool,
) -> Result<ContainerWriter> {
    ContainerWriter::create(path, meta, chunk_w, chunk_h, overwrite)
}

/// Copies every chunk of `source` into a new container.
pub fn ingest_raster(
    source: &dyn RasterSource,
    path: impl AsRef<Path>,
    chunk_w: u32,
    chunk_h: u32,
    overwrite: bool,
) -> Result<ContainerIndex> {
    let meta = source.meta().clone();
    let mut writer = ContainerWriter::create(path, meta.clone(), chunk_w, chunk_h, overwrite)?;
    let grid = writer.grid();
    let mut buf = Vec::new();
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let rect = grid.chunk_rect(row, col, meta.width_px, meta.height_px);
            let window = PatchWindow::new(rect.x, rect.y, rect.w, rect.h);
            buf.resize(window.byte_len(meta.pixel_bytes()), 0);
            source.read_window_into(window, &mut buf)?;
            writer.put_chunk(row, col, &buf)?;
        }
    }
    writer.finalize()
}
