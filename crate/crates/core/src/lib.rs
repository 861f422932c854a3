//! Chunked tile containers for gigapixel images.
//!
//! A container holds one image as a grid of named, checksummed chunks with a
//! footer index, so patches can be read by window from any number of threads.
//! Around that storage layer sit:
//!
//! - [`writer`]: streaming creation from raw rasters or synthetic patterns,
//! - [`reader`]: windowed reads, a shared chunk cache and deferred batches
//!   that load each chunk once per resolution,
//! - [`partition`]: patch enumeration, worker regions and edge padding,
//! - [`pipeline`]: a multi-worker read → pad → process → write harness,
//! - [`bench`]: a comparison of the container against a whole-image blob
//!   and a file-per-patch layout.
//!
//! ```no_run
//! use tilestore::{ingest_raster, ContainerReader, ImageMeta, PatchWindow, SyntheticPattern, SyntheticSource};
//!
//! let source = SyntheticSource::new(ImageMeta::new("demo", 10_000, 8_000, 3, 1), SyntheticPattern::Gradient)?;
//! ingest_raster(&source, "demo.wstc", 4096, 4096, false)?;
//! let reader = ContainerReader::open("demo.wstc")?;
//! let patch = reader.read_patch(PatchWindow::new(4000, 4000, 512, 512))?;
//! assert_eq!(patch.data.len(), 512 * 512 * 3);
//! # Ok::<(), tilestore::Error>(())
//! ```

pub mod bench;
pub mod cli;
pub mod container;
pub mod error;
pub mod partition;
pub mod pipeline;
pub mod reader;
pub mod writer;

pub use container::{
    compute_chunk_grid, decode_index, encode_index, ChunkGrid, ContainerIndex, ImageMeta, Stain,
    TileVariable,
};
pub use error::{Error, Result};
pub use partition::{
    apply_padding, assign_regions, enumerate_patches, pad_spec_for, PadSpec, RegionAssignment,
};
pub use pipeline::{run_pipeline, threshold_mask, PatchProcessor, PipelineOptions, PipelineReport};
pub use reader::{
    open_container, ContainerReader, DeferredBatch, PatchWindow, PixelBlock, ReaderOptions,
    ResolutionReport,
};
pub use writer::{
    create_container, generate_synthetic, ingest_raster, ContainerWriter, RasterSource,
    RawRasterSource, SyntheticPattern, SyntheticSource,
};
