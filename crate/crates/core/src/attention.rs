//! Attention maps from captured attention weights, and heatmap overlays.
//!
//! The colormap is a five-stop piecewise-linear gradient, interpolated in
//! 8-bit RGB:
//!
//! | value | RGB |
//! |-------|-----|
//! | 0.00  | (68, 1, 84) |
//! | 0.25  | (59, 82, 139) |
//! | 0.50  | (33, 145, 140) |
//! | 0.75  | (94, 201, 98) |
//! | 1.00  | (253, 231, 37) |

use std::path::{Path, PathBuf};

use crate::data::image::{save_pgm, save_ppm, tensor_to_gray, tensor_to_rgb};
use crate::error::{Error, Result};
use crate::model::AttentionRecord;
use crate::tensor::Tensor;

pub const COLORMAP: [[u8; 3]; 5] = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
];

/// Saliency over the patch grid, min-max normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub grid: usize,
    pub values: Vec<f64>,
}

impl AttentionMap {
    /// Min-max normalizes raw patch scores; a constant input gives zeros.
    pub fn from_scores(grid: usize, scores: &[f64]) -> Result<Self> {
        if scores.len() != grid * grid {
            return Err(Error::dim(format!(
                "{} scores for a {grid}x{grid} grid",
                scores.len()
            )));
        }
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let values = if hi > lo {
            scores.iter().map(|v| (v - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; scores.len()]
        };
        Ok(AttentionMap { grid, values })
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionMode {
    Rollout,
    /// Class-token attention of one layer, averaged over heads unless one
    /// head is selected.
    Layer {
        layer: usize,
        head: Option<usize>,
    },
}

fn grid_of(record: &AttentionRecord) -> Result<usize> {
    let t = record.seq_len;
    let n = t
        .checked_sub(1)
        .ok_or_else(|| Error::dim("empty attention record"))?;
    let g = (n as f64).sqrt().round() as usize;
    if g * g != n || n == 0 {
        return Err(Error::dim(format!(
            "sequence length {t} is not 1 + a square patch count"
        )));
    }
    if record.num_heads == 0 || record.layers.is_empty() {
        return Err(Error::dim("attention record has no layers or heads"));
    }
    for (l, layer) in record.layers.iter().enumerate() {
        if layer.len() != record.num_heads * t * t {
            return Err(Error::dim(format!(
                "layer {l} holds {} values, expected {} heads x {t} x {t}",
                layer.len(),
                record.num_heads
            )));
        }
    }
    Ok(g)
}

/// Mean over heads of one layer, `[T, T]` row-major.
pub fn head_average(record: &AttentionRecord, layer: usize) -> Vec<f64> {
    let t2 = record.seq_len * record.seq_len;
    let mut avg = vec![0.0; t2];
    for h in 0..record.num_heads {
        for (a, v) in avg.iter_mut().zip(record.head(layer, h)) {
            *a += v;
        }
    }
    avg.iter_mut().for_each(|a| *a /= record.num_heads as f64);
    avg
}

fn matmul_square(a: &[f64], b: &[f64], t: usize) -> Vec<f64> {
    let mut out = vec![0.0; t * t];
    for i in 0..t {
        for k in 0..t {
            let aik = a[i * t + k];
            for j in 0..t {
                out[i * t + j] += aik * b[k * t + j];
            }
        }
    }
    out
}

/// Rolled products after each layer: `R_1 = Â_1`, `R_l = Â_l · R_{l-1}`,
/// where `Â` is the head-averaged attention plus identity with rows
/// renormalized.
pub fn rollout_matrices(record: &AttentionRecord) -> Result<Vec<Vec<f64>>> {
    grid_of(record)?;
    let t = record.seq_len;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(record.depth());
    for l in 0..record.depth() {
        let mut a = head_average(record, l);
        for i in 0..t {
            a[i * t + i] += 1.0;
            let s: f64 = a[i * t..(i + 1) * t].iter().sum();
            a[i * t..(i + 1) * t].iter_mut().for_each(|v| *v /= s);
        }
        let rolled = match out.last() {
            Some(prev) => matmul_square(&a, prev, t),
            None => a,
        };
        out.push(rolled);
    }
    Ok(out)
}

pub fn attention_rollout(record: &AttentionRecord) -> Result<AttentionMap> {
    let g = grid_of(record)?;
    let r = rollout_matrices(record)?.pop().expect("at least one layer");
    AttentionMap::from_scores(g, &r[1..record.seq_len])
}

pub fn layer_attention(
    record: &AttentionRecord,
    layer: usize,
    head: Option<usize>,
) -> Result<AttentionMap> {
    let g = grid_of(record)?;
    if layer >= record.depth() {
        return Err(Error::dim(format!(
            "layer {layer} out of range for depth {}",
            record.depth()
        )));
    }
    let m = match head {
        Some(h) if h >= record.num_heads => {
            return Err(Error::dim(format!(
                "head {h} out of range for {} heads",
                record.num_heads
            )))
        }
        Some(h) => record.head(layer, h).to_vec(),
        None => head_average(record, layer),
    };
    AttentionMap::from_scores(g, &m[1..record.seq_len])
}

pub fn attention_map(record: &AttentionRecord, mode: AttentionMode) -> Result<AttentionMap> {
    match mode {
        AttentionMode::Rollout => attention_rollout(record),
        AttentionMode::Layer { layer, head } => layer_attention(record, layer, head),
    }
}

/// Colormap value in `[0, 1]` per channel.
pub fn colormap(v: f64) -> [f64; 3] {
    let x = v.clamp(0.0, 1.0) * 4.0;
    let i = (x.floor() as usize).min(3);
    let f = x - i as f64;
    let (a, b) = (COLORMAP[i], COLORMAP[i + 1]);
    [0, 1, 2].map(|c| (f64::from(a[c]) + f * (f64::from(b[c]) - f64::from(a[c]))) / 255.0)
}

/// Bilinear upsampling of the grid to `h × w` with cell-centered sampling.
pub fn upsample(map: &AttentionMap, h: usize, w: usize) -> Vec<f64> {
    let g = map.grid;
    let coord = |i: usize, n: usize| {
        ((i as f64 + 0.5) * g as f64 / n as f64 - 0.5).clamp(0.0, (g - 1) as f64)
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let sy = coord(y, h);
        let (y0, fy) = (sy.floor() as usize, sy - sy.floor());
        let y1 = (y0 + 1).min(g - 1);
        for x in 0..w {
            let sx = coord(x, w);
            let (x0, fx) = (sx.floor() as usize, sx - sx.floor());
            let x1 = (x0 + 1).min(g - 1);
            let v = |yy: usize, xx: usize| map.values[yy * g + xx];
            let top = v(y0, x0) + fx * (v(y0, x1) - v(y0, x0));
            let bot = v(y1, x0) + fx * (v(y1, x1) - v(y1, x0));
            out.push(top + fy * (bot - top));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// `[H, W, 3]` blend of image and colormapped saliency.
    pub overlay: Tensor,
    /// `[H, W]` upsampled saliency.
    pub raw: Tensor,
}

pub fn render_heatmap(map: &AttentionMap, image: &Tensor, alpha: f64) -> Result<Heatmap> {
    let s = image.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::dim(format!("expected [H, W, 3] image, got {s:?}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let (h, w) = (s[0], s[1]);
    if map.grid == 0 || h % map.grid != 0 || w % map.grid != 0 {
        return Err(Error::dim(format!(
            "{0}x{0} map does not divide a {h}x{w} image",
            map.grid
        )));
    }
    let up = upsample(map, h, w);
    let mut overlay = Vec::with_capacity(h * w * 3);
    for (px, &v) in image.data().chunks(3).zip(&up) {
        let c = colormap(v);
        for k in 0..3 {
            overlay.push((1.0 - alpha) * px[k] + alpha * c[k]);
        }
    }
    Ok(Heatmap {
        overlay: Tensor::new(s.to_vec(), overlay)?,
        raw: Tensor::new(vec![h, w], up)?,
    })
}

/// Writes `<image_id>.attn.ppm` (overlay) and `<image_id>.attn.pgm` (raw
/// map) into `dir`.
pub fn write_heatmap(
    dir: impl AsRef<Path>,
    image_id: &str,
    heatmap: &Heatmap,
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    let ppm = dir.join(format!("{image_id}.attn.ppm"));
    let pgm = dir.join(format!("{image_id}.attn.pgm"));
    save_ppm(&ppm, &tensor_to_rgb(&heatmap.overlay)?)?;
    save_pgm(&pgm, &tensor_to_gray(&heatmap.raw)?)?;
    Ok((ppm, pgm))
}
