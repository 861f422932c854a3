//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary so every criterion runs even when an earlier one fails.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use tilestore::bench::{run_suite, summarize, BenchConfig, BenchRecord, Method};
use tilestore::container::{planned_index, HEADER_LEN, TRAILER_LEN};
use tilestore::pipeline::ThresholdMask;
use tilestore::{
    assign_regions, compute_chunk_grid, decode_index, encode_index, enumerate_patches,
    pad_spec_for, run_pipeline, ContainerIndex, ContainerReader, Error, ImageMeta, PatchWindow,
    PipelineOptions, ReaderOptions, Stain, SyntheticPattern,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit_secs: u64, detail: String) -> Outcome {
    let secs = elapsed.as_secs_f64();
    if secs < limit_secs as f64 {
        Ok(format!("{detail}; {secs:.1} s < {limit_secs} s"))
    } else {
        Err(format!("{detail}; {secs:.1} s exceeds {limit_secs} s"))
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

// ---------------------------------------------------------------- 1

fn random_index(rng: &mut StdRng) -> ContainerIndex {
    let stains = [Stain::HE, Stain::PAS, Stain::SIL, Stain::TOL, Stain::TRI, Stain::OTHER];
    let id_len = rng.random_range(0..32);
    let meta = ImageMeta {
        image_id: (0..id_len).map(|_| rng.random_range('a'..='z')).collect(),
        width_px: rng.random_range(1..30_000),
        height_px: rng.random_range(1..30_000),
        channels: *[1u8, 3, 4].choose(rng).unwrap(),
        bytes_per_sample: rng.random_range(1..=2),
        microns_per_pixel: rng.random_range(0.05..5.0),
        magnification: rng.random_range(1.0..80.0),
        stain: *stains.choose(rng).unwrap(),
    };
    let grid = compute_chunk_grid(&meta, rng.random_range(256..8192), rng.random_range(256..8192)).unwrap();
    let mut index = planned_index(&meta, grid);
    for v in &mut index.variables {
        v.crc32 = rng.random();
    }
    index
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0xC1);
    for i in 0..200 {
        let index = random_index(&mut rng);
        let bytes = encode_index(&index).map_err(|e| format!("encode #{i}: {e}"))?;
        let back = decode_index(&bytes).map_err(|e| format!("decode #{i}: {e}"))?;
        ensure!(back == index, "round trip #{i} differs");
    }
    for i in 0..50 {
        let index = random_index(&mut rng);
        let mut bytes = encode_index(&index).unwrap();
        let lo = HEADER_LEN as usize;
        let hi = bytes.len() - TRAILER_LEN as usize;
        let at = rng.random_range(lo..hi);
        bytes[at] ^= 1 << rng.random_range(0..8);
        ensure!(
            matches!(decode_index(&bytes), Err(Error::CorruptIndex { .. })),
            "bit flip #{i} at byte {at} not detected"
        );
    }
    within(start.elapsed(), 10, "200 round trips, 50/50 bit flips detected".into())
}

// ---------------------------------------------------------------- 2 and 3

struct ReadCriteria {
    oracle: Outcome,
    deferred: Outcome,
}

/// A strict window; about a quarter of them are placed across a chunk seam.
fn oracle_window_pick(rng: &mut StdRng, meta: &ImageMeta, chunk: u64, max_edge: u64) -> PatchWindow {
    let w = rng.random_range(1..=max_edge.min(meta.width_px));
    let h = rng.random_range(1..=max_edge.min(meta.height_px));
    let mut x = rng.random_range(0..=meta.width_px - w);
    let mut y = rng.random_range(0..=meta.height_px - h);
    if rng.random_bool(0.25) {
        let seams_x = (meta.width_px - 1) / chunk;
        let seams_y = (meta.height_px - 1) / chunk;
        if seams_x > 0 && w > 1 {
            let seam = rng.random_range(1..=seams_x) * chunk;
            x = (seam - rng.random_range(1..w)).min(meta.width_px - w);
        }
        if seams_y > 0 && h > 1 {
            let seam = rng.random_range(1..=seams_y) * chunk;
            y = (seam - rng.random_range(1..h)).min(meta.height_px - h);
        }
    }
    PatchWindow::new(x, y, w as u32, h as u32)
}

/// Chunks a window intersects, by plain division.
fn intersected(w: &PatchWindow, chunk: u64) -> impl Iterator<Item = (u64, u64)> {
    let (c0, c1) = (w.x / chunk, (w.x + w.w as u64 - 1) / chunk);
    let (r0, r1) = (w.y / chunk, (w.y + w.h as u64 - 1) / chunk);
    (r0..=r1).flat_map(move |r| (c0..=c1).map(move |c| (r, c)))
}

fn criteria_2_and_3(dir: &Path) -> ReadCriteria {
    let mut rng = StdRng::seed_from_u64(0xC2);
    let mut oracle_time = Duration::ZERO;
    let mut deferred_time = Duration::ZERO;
    let mut oracle_err = None;
    let mut deferred_err = None;
    let mut megapixels = Vec::new();

    for k in 0..20u32 {
        let t = Instant::now();
        // Sizes spread geometrically over 1..=64 megapixels.
        let mp = 64f64.powf(k as f64 / 19.0);
        let aspect = rng.random_range(0.5..2.0);
        let width = (mp * 1e6 * aspect).sqrt().round() as u64;
        let height = (mp * 1e6 / width as f64).round() as u64;
        let channels = if k % 2 == 0 { 1 } else { 3 };
        let chunk = if k % 4 < 2 { 1024 } else { 4096 };
        let meta = ImageMeta::new(format!("img{k}"), width, height, channels, 1);
        megapixels.push(width * height);
        let pattern = SyntheticPattern::Prng { seed: 1000 + k as u64 };
        let path = common::make_container(dir, &format!("img{k}"), meta.clone(), pattern, chunk as u32);

        let reader = ContainerReader::open(&path).unwrap();
        for i in 0..1000 {
            let w = oracle_window_pick(&mut rng, &meta, chunk, 512);
            let got = reader.read_patch(w).unwrap();
            let want = common::oracle_window(&meta, pattern, w.x, w.y, w.w as u64, w.h as u64);
            if got.data != want && oracle_err.is_none() {
                oracle_err = Some(format!("image {k} window #{i} {w:?} differs from the oracle"));
            }
        }
        drop(reader);
        oracle_time += t.elapsed();

        let t = Instant::now();
        let reader = ContainerReader::open(&path).unwrap();
        let mut windows: Vec<PatchWindow> =
            (0..100).map(|_| oracle_window_pick(&mut rng, &meta, chunk, 1024)).collect();
        windows.shuffle(&mut rng);
        let px = meta.pixel_bytes();
        let mut buffers: Vec<Vec<u8>> = windows.iter().map(|w| vec![0u8; w.byte_len(px)]).collect();
        let report = {
            let mut batch = reader.batch();
            for (w, buf) in windows.iter().zip(buffers.iter_mut()) {
                batch.defer_read(*w, buf).unwrap();
            }
            batch.perform_reads().unwrap()
        };
        let distinct: HashSet<(u64, u64)> = windows.iter().flat_map(|w| intersected(w, chunk)).collect();
        if deferred_err.is_none() {
            if report.chunks_touched != distinct.len() || report.chunks_loaded != distinct.len() {
                deferred_err = Some(format!(
                    "image {k}: chunks_touched {} / loaded {}, distinct intersected {}",
                    report.chunks_touched,
                    report.chunks_loaded,
                    distinct.len()
                ));
            }
            let sync = ContainerReader::open_with(&path, ReaderOptions { cache_chunks: 0 }).unwrap();
            if let Some(i) = (0..windows.len()).find(|&i| buffers[i] != sync.read_patch(windows[i]).unwrap().data) {
                deferred_err = Some(format!("image {k}: deferred window #{i} differs from sync read"));
            }
        }
        deferred_time += t.elapsed();
        std::fs::remove_file(&path).unwrap();
    }

    let (lo, hi) = (megapixels.iter().min().unwrap(), megapixels.iter().max().unwrap());
    let oracle = match oracle_err {
        Some(e) => Err(e),
        None => within(
            oracle_time,
            120,
            format!("20 images ({:.1}-{:.1} MP), 20000 windows match the oracle", *lo as f64 / 1e6, *hi as f64 / 1e6),
        ),
    };
    let deferred = match deferred_err {
        Some(e) => Err(e),
        None => within(
            deferred_time,
            60,
            "2000 shuffled deferred windows equal sync reads; chunks_touched = distinct intersected".into(),
        ),
    };
    ReadCriteria { oracle, deferred }
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xC4);
    for pair in 0..50 {
        let (w, h) = (rng.random_range(1..4000u64), rng.random_range(1..4000u64));
        let (pw, ph) = (rng.random_range(1..1500u32), rng.random_range(1..1500u32));
        let meta = ImageMeta::new("p", w, h, 1, 1);
        let patches = enumerate_patches(&meta, pw, ph).unwrap();
        let mut counts = vec![0u8; (w * h) as usize];
        for p in &patches {
            for y in p.y..p.y + p.h as u64 {
                let row = &mut counts[(y * w + p.x) as usize..(y * w + p.x + p.w as u64) as usize];
                for c in row {
                    *c = c.saturating_add(1);
                }
            }
            let pad = pad_spec_for(*p, &meta, pw, ph, 0).unwrap();
            ensure!(
                (pad.pad_top, pad.pad_left, pad.pad_right, pad.pad_bottom) == (0, 0, pw - p.w, ph - p.h),
                "pair {pair}: pad spec {pad:?} for {p:?}"
            );
        }
        ensure!(counts.iter().all(|&c| c == 1), "pair {pair} ({w}x{h}, patch {pw}x{ph}): pixel counted != once");
    }

    let meta = ImageMeta::new("edge", 10_000, 8_000, 3, 1);
    let patches = enumerate_patches(&meta, 4096, 4096).unwrap();
    let col2 = patches[2];
    ensure!((col2.x, col2.w) == (8192, 1808), "col 2 window {col2:?}");
    let pad = pad_spec_for(col2, &meta, 4096, 4096, 0).unwrap();
    ensure!(pad.pad_right == 2288, "pad_right {} != 2288", pad.pad_right);
    let corner = pad_spec_for(patches[5], &meta, 4096, 4096, 0).unwrap();
    ensure!((corner.pad_right, corner.pad_bottom) == (2288, 192), "corner pad {corner:?}");

    let sizes: Vec<usize> = assign_regions(10, 3).unwrap().iter().map(|r| r.len()).collect();
    ensure!(sizes == [3, 3, 4], "assign_regions(10, 3) = {sizes:?}");
    Ok("50 pairs tile exactly; pad_right 2288; assign_regions(10, 3) = [3, 3, 4]".into())
}

// ---------------------------------------------------------------- 5

fn variable_map(path: &Path) -> BTreeMap<String, Vec<u8>> {
    let reader = ContainerReader::open(path).unwrap();
    reader
        .list_variables()
        .iter()
        .enumerate()
        .map(|(k, v)| (v.name.clone(), reader.read_variable(k).unwrap().to_vec()))
        .collect()
}

fn criterion_5(dir: &Path) -> Outcome {
    let start = Instant::now();
    let meta = ImageMeta::new("pipe", 10_000, 8_000, 3, 1);
    let input = common::make_container(dir, "pipe", meta, SyntheticPattern::Prng { seed: 5 }, 4096);
    let processor = ThresholdMask { threshold: 128 };
    let mut reference: Option<BTreeMap<String, Vec<u8>>> = None;
    for n in [1usize, 2, 3, 8] {
        let out = dir.join(format!("pipe-out-{n}.wstc"));
        let options = PipelineOptions { n_workers: n, ..Default::default() };
        let report = run_pipeline(&input, &out, options, &processor).map_err(|e| e.to_string())?;
        ensure!(report.patches_processed == 6, "{n} workers processed {}", report.patches_processed);
        let map = variable_map(&out);
        match &reference {
            None => reference = Some(map),
            Some(r) => ensure!(&map == r, "output with {n} workers differs from 1 worker"),
        }
    }
    within(start.elapsed(), 120, "outputs identical for 1, 2, 3, 8 workers".into())
}

// ---------------------------------------------------------------- 6

fn two_pass(values: &[f64]) -> (f64, f64, f64) {
    let total: f64 = values.iter().sum();
    let mean = total / values.len() as f64;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    };
    (total, mean, sd)
}

fn records(method: Method, per_run: &[f64]) -> Vec<BenchRecord> {
    per_run
        .iter()
        .enumerate()
        .map(|(run_id, &wall_seconds)| BenchRecord {
            method,
            wsi_id: "wsi".into(),
            run_id,
            n_workers: 3,
            patches_read: 1,
            wall_seconds,
            bytes_read: 0,
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let table_row = [51.2, 60.1, 53.9, 59.3, 57.5];
    let s = summarize(&records(Method::ChunkedStore, &table_row), 5).map_err(|e| e.to_string())?;
    let m = s.get(Method::ChunkedStore).unwrap();
    ensure!(rel_close(m.total_seconds, 282.0, 1e-9), "total {} != 282.0", m.total_seconds);
    ensure!(rel_close(m.mean_seconds_per_run, 56.4, 1e-9), "mean {} != 56.4", m.mean_seconds_per_run);

    let mut rng = StdRng::seed_from_u64(0xC6);
    for i in 0..1000 {
        let n = rng.random_range(1..30);
        let scale = 10f64.powi(rng.random_range(-3..4));
        let series: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0) * scale).collect();
        let s = summarize(&records(Method::PatchPerFile, &series), n).map_err(|e| e.to_string())?;
        let m = s.get(Method::PatchPerFile).unwrap();
        let (total, mean, sd) = two_pass(&series);
        ensure!(
            rel_close(m.total_seconds, total, 1e-9)
                && rel_close(m.mean_seconds_per_run, mean, 1e-9)
                && rel_close(m.stddev_seconds, sd, 1e-9),
            "series #{i}: ({}, {}, {}) vs oracle ({total}, {mean}, {sd})",
            m.total_seconds,
            m.mean_seconds_per_run,
            m.stddev_seconds
        );
    }
    Ok("282.0 over 5 runs -> mean 56.4; 1000 series within 1e-9 relative".into())
}

// ---------------------------------------------------------------- 7

fn criterion_7(dir: &Path) -> Outcome {
    // Two 32768 x 32768 single-channel images: 2 x 1 GiB ≥ 2 GB.
    let mut containers = Vec::new();
    for k in 0..2 {
        let meta = ImageMeta::new(format!("perf{k}"), 32_768, 32_768, 1, 1);
        containers.push(common::make_container(dir, &format!("perf{k}"), meta, SyntheticPattern::Prng { seed: 70 + k }, 4096));
    }
    let config = BenchConfig { cold_cache: true, workers: 8, patch_w: 512, patch_h: 512, ..Default::default() };
    let result = run_suite(&containers, dir.join("work"), &config).map_err(|e| e.to_string())?;
    let report_dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-bench");
    tilestore::bench::emit_report(&result.summary, &result.records, &report_dir, &result.notes)
        .map_err(|e| e.to_string())?;

    let s = &result.summary;
    let chunked = s.get(Method::ChunkedStore).unwrap().total_seconds;
    let ppf = s.get(Method::PatchPerFile).unwrap().total_seconds;
    let whole = s.get(Method::WholeArray).unwrap().total_seconds;
    let detail = format!(
        "chunked/patch_per_file = {:.3}, chunked/whole_array = {:.3} (gate ≤ 0.75); totals {chunked:.2}/{ppf:.2}/{whole:.2} s; {}; {}; report {}",
        chunked / ppf,
        chunked / whole,
        result.notes[0],
        result.notes[1],
        report_dir.display()
    );
    if chunked <= 0.75 * ppf && chunked <= 0.75 * whole {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ----------------------------------------------------------------

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(outcome) => outcome,
        Err(payload) => Err(payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn report(n: u32, name: &str, outcome: &Outcome) -> bool {
    match outcome {
        Ok(detail) => println!("criterion {n} [{name}]: PASS — {detail}"),
        Err(detail) => println!("criterion {n} [{name}]: FAIL — {detail}"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored.
    let dir = tempfile::tempdir().expect("temp dir");
    let mut ok = true;
    ok &= report(1, "format round-trip", &guarded(criterion_1));
    let reads = guarded(|| Ok(criteria_2_and_3(dir.path())))
        .unwrap_or_else(|e| ReadCriteria { oracle: Err(e.clone()), deferred: Err(e) });
    ok &= report(2, "ingest/read oracle equivalence", &reads.oracle);
    ok &= report(3, "deferred equivalence and coalescing", &reads.deferred);
    ok &= report(4, "partition and padding exactness", &guarded(criterion_4));
    ok &= report(5, "pipeline worker invariance", &guarded(|| criterion_5(dir.path())));
    ok &= report(6, "statistics", &guarded(criterion_6));
    ok &= report(7, "performance", &guarded(|| criterion_7(dir.path())));
    println!("criterion 8 [GPU-scenario parity]: N/A — not reproducible (no GPU or model in scope); data flow covered by criterion 5");
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
