#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLASSES: [&str; 7] = ["akiec", "bcc", "bkl", "df", "mel", "nv", "vasc"];
/// Lesions per class; nv dominates as in the real data.
pub const LESIONS: [usize; 7] = [5, 6, 7, 4, 8, 24, 4];
pub const SIDE: usize = 16;

pub fn write_ppm(path: &Path, side: usize, rgb: &[u8]) {
    let mut bytes = format!("P6\n{side} {side}\n255\n").into_bytes();
    bytes.extend_from_slice(rgb);
    std::fs::write(path, bytes).unwrap();
}

/// Class `c` lights a horizontal band whose row depends on `c`.
fn class_image(c: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let band = c * SIDE / CLASSES.len();
    let mut px = Vec::with_capacity(SIDE * SIDE * 3);
    for y in 0..SIDE {
        for _ in 0..SIDE {
            let base: f64 = if y.abs_diff(band) <= 1 { 220.0 } else { 40.0 };
            for ch in 0..3 {
                let tint = if ch == c % 3 { 20.0 } else { 0.0 };
                let v = base + tint + rng.random_range(-15.0..15.0);
                px.push(v.clamp(0.0, 255.0) as u8);
            }
        }
    }
    px
}

/// Metadata CSV plus PPM images under `root/images`. Some lesions have two
/// images, and a few rows have unknown sex so cleansing has work to do.
pub fn synthetic_dataset(root: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let images = root.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("lesion_id,image_id,dx,dx_type,age,sex,localization\n");
    let mut n = 0;
    for (c, &lesions) in LESIONS.iter().enumerate() {
        for l in 0..lesions {
            let lesion = format!("L{c}{l:03}");
            let copies = if l % 3 == 0 { 2 } else { 1 };
            for _ in 0..copies {
                let id = format!("I{n:05}");
                n += 1;
                let sex = match n % 11 {
                    0 => "unknown",
                    k if k % 2 == 0 => "male",
                    _ => "female",
                };
                let age = 20 + (n * 7) % 60;
                let _ = writeln!(csv, "{lesion},{id},{},histo,{age}.0,{sex},back", CLASSES[c]);
                write_ppm(
                    &images.join(format!("{id}.ppm")),
                    SIDE,
                    &class_image(c, &mut rng),
                );
            }
        }
    }
    let meta = root.join("metadata.csv");
    std::fs::write(&meta, csv).unwrap();
    (meta, images)
}

pub fn vitderm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vitderm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = vitderm(args);
    assert!(
        out.status.success(),
        "vitderm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub const TINY_RUN: &[&str] = &[
    "--preset",
    "tiny",
    "--epochs",
    "3",
    "--batch-size",
    "8",
    "--set",
    "dropout=0",
    "--set",
    "learning_rate=0.05",
    "--set",
    "lr_policy=none",
];

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
