//! The `wstc` command line.
//!
//! Exit codes: 0 success, 1 I/O or runtime failure, 2 usage error,
//! 3 content mismatch found by `bench`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bench::{self, BenchConfig, Method};
use crate::container::{ContainerIndex, ImageMeta, Stain};
use crate::error::Error;
use crate::partition::ASSIGNMENT_CSV_HEADER;
use crate::pipeline::{self, PipelineOptions, PipelineReport};
use crate::reader::{ContainerReader, ReaderOptions};
use crate::writer::{ingest_raster, RawRasterSource, SyntheticPattern, SyntheticSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "wstc", version, about = "Chunked tile containers for gigapixel images")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Default worker count
    #[arg(long, global = true, default_value_t = 8, env = "WSTC_THREADS")]
    pub threads: usize,

    /// Chunk edge in pixels for new containers
    #[arg(long, global = true, default_value_t = 4096)]
    pub chunk: u32,

    /// Patch edge in pixels (bench/export: 512, pipeline: 4096)
    #[arg(long, global = true)]
    pub patch: Option<u32>,

    /// Seed for the prng pattern
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Replace existing output files
    #[arg(long, global = true)]
    pub overwrite: bool,

    /// Chunk cache size per reader handle
    #[arg(long, global = true, default_value_t = 64)]
    pub cache_chunks: usize,

    /// Padding fill value for edge patches
    #[arg(long, global = true, default_value_t = 0)]
    pub fill: u16,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic container
    Gen(GenArgs),
    /// Convert a raw raster with a key=value sidecar into a container
    Convert(ConvertArgs),
    /// Print container metadata
    Inspect(InspectArgs),
    /// Export baseline layouts (whole blob, patch files)
    Export(ExportArgs),
    /// Benchmark the three read strategies
    Bench(BenchArgs),
    /// Run the multi-worker patch pipeline
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub width: u64,
    #[arg(long)]
    pub height: u64,
    #[arg(long, default_value_t = 3)]
    pub channels: u8,
    #[arg(long, default_value_t = 1)]
    pub bytes_per_sample: u8,
    /// gradient | checker:<cell> | prng
    #[arg(long, default_value = "gradient")]
    pub pattern: String,
    /// Image id stored in the container (defaults to the file stem)
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, default_value = "OTHER")]
    pub stain: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub raw: PathBuf,
    /// Sidecar metadata file (defaults to <raw>.meta)
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub container: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub container: PathBuf,
    #[arg(long)]
    pub blob: Option<PathBuf>,
    #[arg(long)]
    pub patches: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(required = true)]
    pub containers: Vec<PathBuf>,
    /// all, or a comma list of whole_array, patch_per_file, chunked
    #[arg(long, default_value = "all")]
    pub methods: String,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Workers for patch_per_file and chunked (defaults to --threads)
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub cold_cache: bool,
    #[arg(long, default_value = "bench-report")]
    pub report: PathBuf,
    /// Where exported baseline layouts live (defaults to <report>/work)
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
    /// Largest blob the whole-array strategy may load, in bytes
    #[arg(long, default_value_t = bench::DEFAULT_MEMORY_BUDGET)]
    pub memory_budget: u64,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    pub container: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub workers: usize,
    /// identity | threshold:<t>
    #[arg(long, default_value = "identity")]
    pub processor: String,
    /// Report CSV (defaults to <out>.report.csv)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Machine-readable form of `inspect --json`.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct InspectReport {
    pub path: PathBuf,
    pub file_bytes: u64,
    pub payload_bytes: u64,
    pub variable_count: usize,
    pub index: ContainerIndex,
}

enum Failure {
    Usage(String),
    Runtime(Error),
    Mismatch(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}\n\nRun `wstc --help` for usage.");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
        Err(Failure::Mismatch(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_MISMATCH
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult {
    let g = &cli.global;
    if g.threads == 0 {
        return Err(usage("--threads must be ≥ 1"));
    }
    if g.chunk == 0 {
        return Err(usage("--chunk must be ≥ 1"));
    }
    if g.patch == Some(0) {
        return Err(usage("--patch must be ≥ 1"));
    }
    match &cli.command {
        Command::Gen(args) => cmd_gen(g, args, out),
        Command::Convert(args) => cmd_convert(g, args, out),
        Command::Inspect(args) => cmd_inspect(args, out),
        Command::Export(args) => cmd_export(g, args, out),
        Command::Bench(args) => cmd_bench(g, args, out),
        Command::Pipeline(args) => cmd_pipeline(g, args, out),
    }
}

fn print_grid(out: &mut dyn Write, path: &Path, index: &ContainerIndex) -> std::io::Result<()> {
    let m = &index.meta;
    writeln!(
        out,
        "wrote {}: {}x{} px, {} ch, {} B/sample, grid {}x{} ({} chunks of {}x{})",
        path.display(),
        m.width_px,
        m.height_px,
        m.channels,
        m.bytes_per_sample,
        index.grid.cols,
        index.grid.rows,
        index.variables.len(),
        index.grid.chunk_w,
        index.grid.chunk_h
    )
}

fn cmd_gen(g: &GlobalArgs, args: &GenArgs, out: &mut dyn Write) -> CliResult {
    let pattern: SyntheticPattern = args
        .pattern
        .parse::<SyntheticPattern>()
        .map_err(|e| usage(e.to_string()))?
        .with_seed(g.seed);
    let stain: Stain = args.stain.parse().map_err(|e: Error| usage(e.to_string()))?;
    let id = args.id.clone().unwrap_or_else(|| {
        args.out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "synthetic".into())
    });
    let meta = ImageMeta {
        stain,
        ..ImageMeta::new(id, args.width, args.height, args.channels, args.bytes_per_sample)
    };
    meta.validate().map_err(|e| usage(e.to_string()))?;
    let source = SyntheticSource::new(meta, pattern).map_err(|e| usage(e.to_string()))?;
    let index = ingest_raster(&source, &args.out, g.chunk, g.chunk, g.overwrite)?;
    print_grid(out, &args.out, &index)?;
    Ok(())
}

fn cmd_convert(g: &GlobalArgs, args: &ConvertArgs, out: &mut dyn Write) -> CliResult {
    let source = match &args.sidecar {
        Some(sidecar) => RawRasterSource::open(&args.raw, sidecar)?,
        None => RawRasterSource::open_default(&args.raw)?,
    };
    let index = ingest_raster(&source, &args.out, g.chunk, g.chunk, g.overwrite)?;
    print_grid(out, &args.out, &index)?;
    Ok(())
}

fn cmd_inspect(args: &InspectArgs, out: &mut dyn Write) -> CliResult {
    let reader = ContainerReader::open_with(&args.container, ReaderOptions { cache_chunks: 0 })?;
    let index = reader.index().clone();
    let report = InspectReport {
        path: args.container.clone(),
        file_bytes: fs::metadata(&args.container)?.len(),
        payload_bytes: index.variables.iter().map(|v| v.byte_length).sum(),
        variable_count: index.variables.len(),
        index,
    };
    if args.json {
        let text = serde_json::to_string_pretty(&report)
            .map_err(|e| Failure::Runtime(Error::InvalidArgument(e.to_string())))?;
        writeln!(out, "{text}")?;
        return Ok(());
    }
    let m = &report.index.meta;
    let grid = report.index.grid;
    let rows = [
        ("path", report.path.display().to_string()),
        ("image_id", m.image_id.clone()),
        ("size", format!("{} x {} px", m.width_px, m.height_px)),
        ("channels", m.channels.to_string()),
        ("bytes_per_sample", m.bytes_per_sample.to_string()),
        ("microns_per_pixel", m.microns_per_pixel.to_string()),
        ("magnification", m.magnification.to_string()),
        ("stain", m.stain.to_string()),
        ("chunk", format!("{} x {} px", grid.chunk_w, grid.chunk_h)),
        ("grid", format!("{} cols x {} rows", grid.cols, grid.rows)),
        ("variables", report.variable_count.to_string()),
        ("payload_bytes", report.payload_bytes.to_string()),
        ("file_bytes", report.file_bytes.to_string()),
    ];
    for (key, value) in rows {
        writeln!(out, "{key:<18} {value}")?;
    }
    Ok(())
}

fn cmd_export(g: &GlobalArgs, args: &ExportArgs, out: &mut dyn Write) -> CliResult {
    if args.blob.is_none() && args.patches.is_none() {
        return Err(usage("export needs --blob and/or --patches"));
    }
    if let Some(blob) = &args.blob {
        let bytes = bench::export_whole_blob(&args.container, blob, g.overwrite)?;
        writeln!(out, "wrote {} ({bytes} bytes)", blob.display())?;
    }
    if let Some(dir) = &args.patches {
        let patch = g.patch.unwrap_or(512);
        let files = bench::export_patch_files(&args.container, dir, patch, patch, g.overwrite)?;
        writeln!(out, "wrote {} patch files to {}", files.len(), dir.display())?;
    }
    Ok(())
}

fn parse_methods(spec: &str) -> Result<Vec<Method>, Failure> {
    if spec == "all" {
        return Ok(Method::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<Method>().map_err(|e| usage(e.to_string())))
        .collect()
}

fn cmd_bench(g: &GlobalArgs, args: &BenchArgs, out: &mut dyn Write) -> CliResult {
    let methods = parse_methods(&args.methods)?;
    let workers = args.workers.unwrap_or(g.threads);
    if workers == 0 || args.runs == 0 {
        return Err(usage("--workers and --runs must be ≥ 1"));
    }
    let patch = g.patch.unwrap_or(512);
    let config = BenchConfig {
        methods,
        runs: args.runs,
        workers,
        patch_w: patch,
        patch_h: patch,
        cache_chunks: g.cache_chunks,
        cold_cache: args.cold_cache,
        memory_budget: args.memory_budget,
        overwrite_exports: g.overwrite,
    };
    let work_dir = args
        .work_dir
        .clone()
        .unwrap_or_else(|| args.report.join("work"));
    let result = bench::run_suite(&args.containers, &work_dir, &config).map_err(|e| {
        if e.is_correctness_failure() {
            Failure::Mismatch(e)
        } else {
            Failure::Runtime(e)
        }
    })?;

    let (csv_path, table_path) =
        bench::emit_report(&result.summary, &result.records, &args.report, &result.notes)?;
    let mut conv = String::from("wsi_id,layout,seconds,bytes,created\n");
    for c in &result.conversions {
        conv.push_str(&format!(
            "{},{},{},{},{}\n",
            c.wsi_id, c.layout, c.seconds, c.bytes, c.created
        ));
    }
    fs::write(args.report.join("conversions.csv"), conv)?;

    write!(out, "{}", fs::read_to_string(&table_path)?)?;
    writeln!(out, "records: {}", csv_path.display())?;
    Ok(())
}

fn cmd_pipeline(g: &GlobalArgs, args: &PipelineArgs, out: &mut dyn Write) -> CliResult {
    if args.workers == 0 {
        return Err(usage("--workers must be ≥ 1"));
    }
    let processor = pipeline::parse_processor(&args.processor).map_err(|e| usage(e.to_string()))?;
    let patch = g.patch.unwrap_or(4096);
    let options = PipelineOptions {
        patch_w: patch,
        patch_h: patch,
        n_workers: args.workers,
        fill: g.fill,
        cache_chunks: g.cache_chunks,
        overwrite: g.overwrite,
    };
    let report = pipeline::run_pipeline(&args.container, &args.out, options, processor.as_ref())?;
    let report_path = args.report.clone().unwrap_or_else(|| {
        let mut name = args.out.as_os_str().to_owned();
        name.push(".report.csv");
        PathBuf::from(name)
    });
    write_pipeline_report(&report, &report_path)?;
    let sizes: Vec<usize> = report.assignments.iter().map(|a| a.len()).collect();
    writeln!(
        out,
        "{}: {} patches, {} workers, assignments {:?}, {:.3} s",
        report.wsi_id, report.patches_processed, report.n_workers, sizes, report.wall_seconds
    )?;
    writeln!(out, "wrote {} and {}", args.out.display(), report_path.display())?;
    Ok(())
}

fn write_pipeline_report(report: &PipelineReport, path: &Path) -> std::io::Result<()> {
    let mut text = format!("{}\n{}\n\n{}\n", PipelineReport::CSV_HEADER, report.to_csv_row(), ASSIGNMENT_CSV_HEADER);
    for a in &report.assignments {
        text.push_str(&a.to_csv_row());
        text.push('\n');
    }
    fs::write(path, text)
}
