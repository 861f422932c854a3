//! Test-only oracles, written independently of the library's code paths.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use tilestore::{ingest_raster, ImageMeta, SyntheticPattern, SyntheticSource};

/// Pointwise evaluation of the documented synthetic patterns.
pub fn pattern_sample(pattern: SyntheticPattern, bytes_per_sample: u8, x: u64, y: u64, ch: u64) -> u16 {
    let modulus: u64 = 1 << (8 * bytes_per_sample as u32);
    match pattern {
        SyntheticPattern::Gradient => ((x + y + ch) % modulus) as u16,
        SyntheticPattern::Checker { cell } => {
            let cell = cell as u64;
            if ((x / cell) + (y / cell)).is_multiple_of(2) {
                (modulus - 1) as u16
            } else {
                0
            }
        }
        SyntheticPattern::Prng { seed } => (splitmix_mix(seed, x, y, ch) % modulus) as u16,
    }
}

fn splitmix_mix(seed: u64, x: u64, y: u64, ch: u64) -> u64 {
    const GOLDEN: u64 = 0x9E3779B97F4A7C15;
    const PRIME_Y: u64 = 0xC2B2AE3D27D4EB4F;
    const PRIME_C: u64 = 0x165667B19E3779F9;
    let z = seed ^ x.wrapping_mul(GOLDEN) ^ y.wrapping_mul(PRIME_Y) ^ ch.wrapping_mul(PRIME_C);
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Bytes of a window, evaluated pixel by pixel.
pub fn oracle_window(meta: &ImageMeta, pattern: SyntheticPattern, x: u64, y: u64, w: u64, h: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity((w * h) as usize * meta.pixel_bytes());
    for yy in y..y + h {
        for xx in x..x + w {
            for ch in 0..meta.channels as u64 {
                let v = pattern_sample(pattern, meta.bytes_per_sample, xx, yy, ch);
                if meta.bytes_per_sample == 1 {
                    out.push(v as u8);
                } else {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn make_container(dir: &Path, name: &str, meta: ImageMeta, pattern: SyntheticPattern, chunk: u32) -> PathBuf {
    let path = dir.join(format!("{name}.wstc"));
    let source = SyntheticSource::new(meta, pattern).unwrap();
    ingest_raster(&source, &path, chunk, chunk, true).unwrap();
    path
}
