mod common;

use std::collections::HashSet;
use std::fs;
use std::sync::Arc;
use std::thread;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use tilestore::container::Trailer;
use tilestore::{
    ContainerReader, Error, ImageMeta, PatchWindow, ReaderOptions, SyntheticPattern,
};

fn random_window(rng: &mut StdRng, meta: &ImageMeta, max_edge: u64) -> PatchWindow {
    let w = rng.random_range(1..=max_edge.min(meta.width_px));
    let h = rng.random_range(1..=max_edge.min(meta.height_px));
    let x = rng.random_range(0..=meta.width_px - w);
    let y = rng.random_range(0..=meta.height_px - h);
    PatchWindow::new(x, y, w as u32, h as u32)
}

#[test]
fn seam_spanning_window_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let meta = ImageMeta::new("seam", 10000, 8000, 1, 1);
    let pattern = SyntheticPattern::Prng { seed: 11 };
    let path = common::make_container(dir.path(), "seam", meta.clone(), pattern, 4096);
    let reader = ContainerReader::open(&path).unwrap();

    let window = PatchWindow::new(4000, 4000, 512, 512);
    let (rows, cols) = reader.grid().intersecting(4000, 4000, 512, 512);
    assert_eq!(rows.len() * cols.len(), 4);
    assert_eq!(
        reader.read_patch(window).unwrap().data,
        common::oracle_window(&meta, pattern, 4000, 4000, 512, 512)
    );

    let edge = PatchWindow::new(9000, 7000, 1000, 1000);
    assert_eq!(
        reader.read_patch(edge).unwrap().data,
        common::oracle_window(&meta, pattern, 9000, 7000, 1000, 1000)
    );
}

#[test]
fn ingest_fidelity_for_every_chunk() {
    let dir = tempfile::tempdir().unwrap();
    let meta = ImageMeta::new("fid", 700, 530, 3, 2);
    let pattern = SyntheticPattern::Prng { seed: 5 };
    let path = common::make_container(dir.path(), "fid", meta.clone(), pattern, 256);
    let reader = ContainerReader::open(&path).unwrap();
    let grid = reader.grid();
    for (k, var) in reader.list_variables().iter().enumerate() {
        let rect = grid.chunk_rect(var.row, var.col, meta.width_px, meta.height_px);
        assert_eq!(
            *reader.read_variable(k).unwrap(),
            common::oracle_window(&meta, pattern, rect.x, rect.y, rect.w as u64, rect.h as u64),
            "{}",
            var.name
        );
    }
}

#[test]
fn deferred_equals_sync_in_any_order() {
    let dir = tempfile::tempdir().unwrap();
    let meta = ImageMeta::new("defer", 3000, 2000, 3, 1);
    let pattern = SyntheticPattern::Prng { seed: 3 };
    let path = common::make_container(dir.path(), "defer", meta.clone(), pattern, 512);
    let reader = ContainerReader::open_with(&path, ReaderOptions { cache_chunks: 0 }).unwrap();
    let mut rng = StdRng::seed_from_u64(99);

    let mut windows: Vec<PatchWindow> = (0..1000).map(|_| random_window(&mut rng, &meta, 300)).collect();
    windows.shuffle(&mut rng);
    let mut buffers: Vec<Vec<u8>> = windows.iter().map(|w| vec![0xEE; w.byte_len(3)]).collect();
    let report = {
        let mut batch = reader.batch();
        for (w, buf) in windows.iter().zip(buffers.iter_mut()) {
            batch.defer_read(*w, buf).unwrap();
        }
        batch.perform_reads().unwrap()
    };
    assert_eq!(report.windows_served, 1000);

    let grid = reader.grid();
    let mut distinct = HashSet::new();
    for w in &windows {
        let (rows, cols) = grid.intersecting(w.x, w.y, w.w as u64, w.h as u64);
        for r in rows {
            for c in cols.clone() {
                distinct.insert((r, c));
            }
        }
    }
    assert_eq!(report.chunks_touched, distinct.len());
    assert_eq!(report.chunks_loaded, distinct.len());

    for (w, buf) in windows.iter().zip(&buffers) {
        assert_eq!(buf, &reader.read_patch(*w).unwrap().data);
    }
}

#[test]
fn concurrent_readers_get_correct_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let meta = ImageMeta::new("stress", 2048, 1536, 1, 1);
    let pattern = SyntheticPattern::Prng { seed: 21 };
    let path = common::make_container(dir.path(), "stress", meta.clone(), pattern, 256);
    for n_workers in [2usize, 8] {
        // Small cache forces evictions while workers overlap.
        let reader = Arc::new(ContainerReader::open_with(&path, ReaderOptions { cache_chunks: 3 }).unwrap());
        thread::scope(|scope| {
            for worker in 0..n_workers {
                let reader = Arc::clone(&reader);
                let meta = meta.clone();
                scope.spawn(move || {
                    let mut rng = StdRng::seed_from_u64(worker as u64);
                    for _ in 0..60 {
                        let w = random_window(&mut rng, &meta, 400);
                        let got = reader.read_patch(w).unwrap();
                        let want = common::oracle_window(&meta, pattern, w.x, w.y, w.w as u64, w.h as u64);
                        assert_eq!(got.data, want);
                    }
                });
            }
        });
    }
}

#[test]
fn corrupt_chunk_is_named_and_batch_reports_unserved() {
    let dir = tempfile::tempdir().unwrap();
    let meta = ImageMeta::new("bad", 512, 256, 1, 1);
    let path = common::make_container(dir.path(), "bad", meta, SyntheticPattern::Gradient, 256);
    let mut bytes = fs::read(&path).unwrap();
    let trailer = Trailer::decode(&bytes[bytes.len() - 24..]).unwrap();
    let var1 = ContainerReader::open(&path).unwrap().list_variables()[1].clone();
    bytes[var1.byte_offset as usize + 10] ^= 0xFF;
    assert!(var1.byte_offset + 10 < trailer.index_offset);
    fs::write(&path, &bytes).unwrap();

    // Opening stays cheap: chunks are not checked yet.
    let reader = ContainerReader::open(&path).unwrap();
    assert!(reader.read_patch(PatchWindow::new(0, 0, 256, 256)).is_ok());
    match reader.read_patch(PatchWindow::new(300, 0, 10, 10)) {
        Err(Error::CorruptChunk { name, .. }) => assert_eq!(name, "tile/0/1"),
        other => panic!("expected corrupt-chunk, got {other:?}"),
    }

    let mut a = vec![0u8; 100];
    let mut b = vec![0u8; 100];
    let mut c = vec![0u8; 100];
    let mut batch = reader.batch();
    batch.defer_read(PatchWindow::new(0, 0, 10, 10), &mut a).unwrap();
    batch.defer_read(PatchWindow::new(250, 0, 10, 10), &mut b).unwrap();
    batch.defer_read(PatchWindow::new(400, 100, 10, 10), &mut c).unwrap();
    match batch.perform_reads() {
        Err(Error::PartialFailure { unserved, source }) => {
            assert_eq!(unserved, vec![1, 2]);
            assert!(matches!(*source, Error::CorruptChunk { .. }));
        }
        other => panic!("expected partial-failure, got {other:?}"),
    }
}

#[test]
fn window_errors() {
    let dir = tempfile::tempdir().unwrap();
    let meta = ImageMeta::new("w", 100, 100, 1, 1);
    let path = common::make_container(dir.path(), "w", meta, SyntheticPattern::Gradient, 64);
    let reader = ContainerReader::open(&path).unwrap();
    let mut buf = vec![0u8; 4];
    let mut batch = reader.batch();
    assert!(matches!(
        batch.defer_read(PatchWindow::new(99, 99, 2, 2), &mut buf),
        Err(Error::WindowOutOfBounds { .. })
    ));
}
