// Plug a user-defined processor into the pipeline.
//
//     cargo run --example custom_processor

use tilestore::{
    ingest_raster, run_pipeline, ContainerReader, ImageMeta, PatchProcessor, PatchWindow, PipelineOptions, PixelBlock,
    SyntheticPattern, SyntheticSource,
};

/// Marks pixels whose first channel is the brightest.
struct RedDominant;

impl PatchProcessor for RedDominant {
    fn name(&self) -> &str {
        "red-dominant"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn apply(&self, patch: &PixelBlock, _meta: &ImageMeta) -> Result<PixelBlock, String> {
        if patch.channels != 3 {
            return Err(format!("needs RGB, got {} channels", patch.channels));
        }
        let data = patch
            .data
            .chunks(3)
            .map(|px| if px[0] > px[1] && px[0] > px[2] { 255 } else { 0 })
            .collect();
        PixelBlock::new(patch.width, patch.height, 1, 1, data).map_err(|e| e.to_string())
    }
}

pub fn run_example() -> tilestore::Result<()> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("rgb.wstc");
    let source = SyntheticSource::new(ImageMeta::new("rgb", 1200, 900, 3, 1), SyntheticPattern::Prng { seed: 3 })?;
    ingest_raster(&source, &input, 512, 512, false)?;

    let output = dir.path().join("red.wstc");
    let options = PipelineOptions {
        patch_w: 256,
        patch_h: 256,
        n_workers: 4,
        ..Default::default()
    };
    let report = run_pipeline(&input, &output, options, &RedDominant)?;
    println!("{} patches processed by {} workers", report.patches_processed, report.n_workers);

    let mask = ContainerReader::open(&output)?.read_patch(PatchWindow::new(0, 0, 1200, 900))?;
    let marked = mask.data.iter().filter(|&&v| v == 255).count();
    println!("{:.1}% of pixels are red-dominant", 100.0 * marked as f64 / mask.data.len() as f64);
    Ok(())
}

#[allow(dead_code)]
fn main() -> tilestore::Result<()> {
    run_example()
}
