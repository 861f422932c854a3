// A small run of the read benchmark: whole-image blob vs. file per patch vs.
// chunked container. Sizes here are tiny; use `wstc bench` for real runs.
//
//     cargo run --release --example cpu_bench

use tilestore::bench::{format_table, run_suite, BenchConfig};
use tilestore::{ingest_raster, ImageMeta, SyntheticPattern, SyntheticSource};

pub fn run_example() -> tilestore::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut containers = Vec::new();
    for k in 0..2 {
        let path = dir.path().join(format!("wsi{k}.wstc"));
        let source = SyntheticSource::new(ImageMeta::new(format!("wsi{k}"), 3072, 2048, 3, 1), SyntheticPattern::Prng { seed: k })?;
        ingest_raster(&source, &path, 1024, 1024, false)?;
        containers.push(path);
    }

    let config = BenchConfig {
        runs: 3,
        workers: 4,
        cold_cache: false,
        ..Default::default()
    };
    let result = run_suite(&containers, dir.path().join("work"), &config)?;
    print!("{}", format_table(&result.summary));
    for note in &result.notes {
        println!("{note}");
    }
    for c in &result.conversions {
        println!("export {} {}: {} bytes in {:.3} s", c.wsi_id, c.layout, c.bytes, c.seconds);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> tilestore::Result<()> {
    run_example()
}
