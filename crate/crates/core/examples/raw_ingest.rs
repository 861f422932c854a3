// Convert an interleaved raw raster plus a key=value sidecar into a
// container, then read it back.
//
//     cargo run --example raw_ingest

use std::fs;

use tilestore::writer::{format_sidecar, sidecar_path, RawRasterSource};
use tilestore::{ingest_raster, ContainerReader, ImageMeta, PatchWindow, Stain};

pub fn run_example() -> tilestore::Result<()> {
    let dir = tempfile::tempdir()?;
    let raw = dir.path().join("scan.raw");

    // One 16-bit channel, little-endian samples.
    let meta = ImageMeta {
        microns_per_pixel: 0.5,
        magnification: 20.0,
        stain: Stain::PAS,
        ..ImageMeta::new("scan-0042", 1500, 1100, 1, 2)
    };
    let mut bytes = Vec::with_capacity(meta.image_bytes() as usize);
    for y in 0..meta.height_px {
        for x in 0..meta.width_px {
            bytes.extend_from_slice(&((x * 40 + y * 3) as u16).to_le_bytes());
        }
    }
    fs::write(&raw, &bytes)?;
    fs::write(sidecar_path(&raw), format_sidecar(&meta))?;
    println!("sidecar:\n{}", fs::read_to_string(sidecar_path(&raw))?);

    let source = RawRasterSource::open_default(&raw)?;
    let out = dir.path().join("scan.wstc");
    let index = ingest_raster(&source, &out, 512, 512, false)?;
    println!("{} chunks written", index.variables.len());

    let reader = ContainerReader::open(&out)?;
    assert_eq!(reader.meta(), &meta);
    let all = reader.read_patch(PatchWindow::new(0, 0, 1500, 1100))?;
    assert_eq!(all.data, bytes);
    let p = reader.read_patch(PatchWindow::new(1000, 1000, 4, 4))?;
    println!("sample (1000, 1000) = {}", p.sample(0, 0, 0));
    Ok(())
}

#[allow(dead_code)]
fn main() -> tilestore::Result<()> {
    run_example()
}
