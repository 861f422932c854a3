// Export the two comparison layouts: one whole-image blob and one file per
// patch. Both must reproduce the container's patches exactly.
//
//     cargo run --example baseline_exports

use tilestore::bench::{export_patch_files, export_whole_blob, load_blob, read_patch_file, DEFAULT_MEMORY_BUDGET};
use tilestore::{enumerate_patches, ingest_raster, ContainerReader, ImageMeta, SyntheticPattern, SyntheticSource};

pub fn run_example() -> tilestore::Result<()> {
    let dir = tempfile::tempdir()?;
    let container = dir.path().join("img.wstc");
    let source = SyntheticSource::new(ImageMeta::new("img", 2000, 1500, 3, 1), SyntheticPattern::Prng { seed: 1 })?;
    ingest_raster(&source, &container, 1024, 1024, false)?;

    let blob = dir.path().join("img.wstb");
    let bytes = export_whole_blob(&container, &blob, false)?;
    println!("blob: {bytes} bytes");

    let patch_dir = dir.path().join("patches");
    let files = export_patch_files(&container, &patch_dir, 512, 512, false)?;
    println!("patch files: {} (first {})", files.len(), files[0].file_name().unwrap().to_string_lossy());

    let reader = ContainerReader::open(&container)?;
    let loaded = load_blob(&blob, DEFAULT_MEMORY_BUDGET)?;
    let windows = enumerate_patches(reader.meta(), 512, 512)?;
    for (window, file) in windows.iter().zip(&files) {
        let direct = reader.read_patch(*window)?.data;
        assert_eq!(loaded.slice_window(*window), direct);
        assert_eq!(read_patch_file(file)?.data, direct);
    }
    println!("all {} patches agree across the three layouts", windows.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> tilestore::Result<()> {
    run_example()
}
