// Build a container from a synthetic pattern, look at its index and read a
// patch that straddles four chunks.
//
//     cargo run --example synthetic_container

use tilestore::{ingest_raster, ContainerReader, ImageMeta, PatchWindow, Stain, SyntheticPattern, SyntheticSource};

pub fn run_example() -> tilestore::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("slide.wstc");

    let meta = ImageMeta {
        stain: Stain::HE,
        ..ImageMeta::new("slide", 10_000, 8_000, 3, 1)
    };
    let source = SyntheticSource::new(meta, SyntheticPattern::Prng { seed: 7 })?;
    let index = ingest_raster(&source, &path, 4096, 4096, false)?;
    println!(
        "{}: {}x{} px in a {}x{} chunk grid",
        index.meta.image_id, index.meta.width_px, index.meta.height_px, index.grid.cols, index.grid.rows
    );

    let reader = ContainerReader::open(&path)?;
    for v in reader.list_variables() {
        println!("  {:<9} {:>4}x{:<4} @ {:>10} ({} bytes, crc32 {:08x})", v.name, v.logical_w, v.logical_h, v.byte_offset, v.byte_length, v.crc32);
    }

    // 4000..4512 crosses the 4096 seam on both axes.
    let patch = reader.read_patch(PatchWindow::new(4000, 4000, 512, 512))?;
    for (x, y) in [(0u32, 0u32), (95, 95), (96, 96), (511, 511)] {
        let expected = source.sample(4000 + x as u64, 4000 + y as u64, 0);
        assert_eq!(patch.sample(x, y, 0), expected);
    }
    println!("read a 512x512 patch across 4 chunks; samples match the source");
    Ok(())
}

#[allow(dead_code)]
fn main() -> tilestore::Result<()> {
    run_example()
}
