// Queue many patch reads, resolve them at once and see how many chunks the
// batch actually had to load.
//
//     cargo run --example deferred_batch

use tilestore::{enumerate_patches, ingest_raster, ContainerReader, ImageMeta, SyntheticPattern, SyntheticSource};

pub fn run_example() -> tilestore::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("deferred.wstc");
    let source = SyntheticSource::new(ImageMeta::new("deferred", 6000, 4000, 3, 1), SyntheticPattern::Gradient)?;
    ingest_raster(&source, &path, 1024, 1024, false)?;

    let reader = ContainerReader::open(&path)?;
    let meta = reader.meta().clone();
    let windows = enumerate_patches(&meta, 512, 512)?;
    let mut buffers: Vec<Vec<u8>> = windows.iter().map(|w| vec![0; w.byte_len(meta.pixel_bytes())]).collect();

    let mut batch = reader.batch();
    // Enqueue in reverse; resolution order is the batch's business.
    for (w, buf) in windows.iter().zip(buffers.iter_mut()).rev() {
        batch.defer_read(*w, buf)?;
    }
    println!("{} reads queued, state {:?}", batch.len(), batch.state());
    let report = batch.perform_reads()?;
    println!(
        "served {} windows from {} chunks ({} loaded, {} bytes) in {:.3} s",
        report.windows_served, report.chunks_touched, report.chunks_loaded, report.bytes_read, report.wall_seconds
    );
    assert_eq!(report.chunks_loaded, reader.grid().len());

    for (w, buf) in windows.iter().zip(&buffers).step_by(7) {
        assert_eq!(buf, &reader.read_patch(*w)?.data);
    }
    println!("{}", tilestore::reader::ResolutionReport::CSV_HEADER);
    println!("{}", report.to_csv_row());
    Ok(())
}

#[allow(dead_code)]
fn main() -> tilestore::Result<()> {
    run_example()
}
