// Run the multi-worker pipeline: patches are split into contiguous regions,
// padded at the image edge, thresholded and written to a new container.
//
//     cargo run --example region_pipeline

use tilestore::pipeline::ThresholdMask;
use tilestore::{ingest_raster, run_pipeline, ContainerReader, ImageMeta, PipelineOptions, SyntheticPattern, SyntheticSource};

pub fn run_example() -> tilestore::Result<()> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("in.wstc");
    let source = SyntheticSource::new(ImageMeta::new("tissue", 5000, 4000, 3, 1), SyntheticPattern::Checker { cell: 300 })?;
    ingest_raster(&source, &input, 2048, 2048, false)?;

    let mut outputs = Vec::new();
    for n_workers in [1, 3] {
        let output = dir.path().join(format!("mask-{n_workers}.wstc"));
        let options = PipelineOptions {
            patch_w: 2048,
            patch_h: 2048,
            n_workers,
            ..Default::default()
        };
        let report = run_pipeline(&input, &output, options, &ThresholdMask { threshold: 128 })?;
        let sizes: Vec<usize> = report.assignments.iter().map(|a| a.len()).collect();
        println!("{} workers: regions {:?}, {} patches in {:.3} s", n_workers, sizes, report.patches_processed, report.wall_seconds);
        println!("  {}", report.to_csv_row());
        outputs.push(std::fs::read(&output)?);
    }
    assert_eq!(outputs[0], outputs[1], "worker count must not change the output");

    let mask = ContainerReader::open(dir.path().join("mask-3.wstc"))?;
    println!("mask: {} chunks, {} channel", mask.list_variables().len(), mask.meta().channels);
    Ok(())
}

#[allow(dead_code)]
fn main() -> tilestore::Result<()> {
    run_example()
}
