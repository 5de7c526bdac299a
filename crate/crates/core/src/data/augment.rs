use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metadata::{Diagnosis, LesionRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One sampled augmentation. Out-of-bounds samples always take the nearest
/// in-bounds pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    /// Fraction of the image width; positive moves content right.
    pub shift_x: f64,
    /// Fraction of the image height; positive moves content down.
    pub shift_y: f64,
    pub shear_deg: f64,
    pub brightness: f64,
    /// Values above 1 magnify.
    pub zoom: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        rotation_deg: 0.0,
        shift_x: 0.0,
        shift_y: 0.0,
        shear_deg: 0.0,
        brightness: 1.0,
        zoom: 1.0,
    };

    /// Checks that the parameters describe a usable transform. This is
    /// looser than [`AugmentRanges`], which only governs sampling.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rotation_deg,
            self.shift_x,
            self.shift_y,
            self.shear_deg,
            self.brightness,
            self.zoom,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite augmentation parameter in {self}"
            )));
        }
        if self.rotation_deg.abs() > 180.0
            || self.shift_x.abs() > 1.0
            || self.shift_y.abs() > 1.0
            || self.shear_deg.abs() >= 90.0
            || self.brightness < 0.0
            || self.zoom <= 0.0
        {
            return Err(Error::Config(format!(
                "augmentation parameters out of range: {self}"
            )));
        }
        Ok(())
    }
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams::IDENTITY
    }
}

impl fmt::Display for AugmentParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rot={};sx={};sy={};shear={};bright={};zoom={}",
            self.rotation_deg,
            self.shift_x,
            self.shift_y,
            self.shear_deg,
            self.brightness,
            self.zoom
        )
    }
}

impl FromStr for AugmentParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = AugmentParams::IDENTITY;
        for kv in s.split(';') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("malformed augmentation field '{kv}'")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::Data(format!("bad number in augmentation field '{kv}'")))?;
            match k {
                "rot" => p.rotation_deg = v,
                "sx" => p.shift_x = v,
                "sy" => p.shift_y = v,
                "shear" => p.shear_deg = v,
                "bright" => p.brightness = v,
                "zoom" => p.zoom = v,
                _ => return Err(Error::Data(format!("unknown augmentation field '{k}'"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// Sampling ranges; each parameter is drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentRanges {
    pub rotation_deg: f64,
    pub shift: f64,
    pub shear_deg: f64,
    pub brightness: (f64, f64),
    pub zoom: (f64, f64),
}

impl Default for AugmentRanges {
    fn default() -> Self {
        AugmentRanges {
            rotation_deg: 180.0,
            shift: 0.1,
            shear_deg: 10.0,
            brightness: (0.8, 1.2),
            zoom: (0.9, 1.1),
        }
    }
}

impl AugmentRanges {
    pub fn validate(&self) -> Result<()> {
        let probe_lo = AugmentParams {
            rotation_deg: self.rotation_deg,
            shift_x: self.shift,
            shift_y: self.shift,
            shear_deg: self.shear_deg,
            brightness: self.brightness.0,
            zoom: self.zoom.0,
        };
        let probe_hi = AugmentParams {
            brightness: self.brightness.1,
            zoom: self.zoom.1,
            ..probe_lo
        };
        probe_lo.validate()?;
        probe_hi.validate()?;
        if self.rotation_deg < 0.0 || self.shift < 0.0 || self.shear_deg < 0.0 {
            return Err(Error::Config(
                "augmentation range magnitudes must be nonnegative".into(),
            ));
        }
        if self.brightness.0 > self.brightness.1 || self.zoom.0 > self.zoom.1 {
            return Err(Error::Config(
                "augmentation range bounds are reversed".into(),
            ));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> AugmentParams {
        let sym = |rng: &mut R, m: f64| {
            if m == 0.0 {
                0.0
            } else {
                rng.random_range(-m..=m)
            }
        };
        let span = |rng: &mut R, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        };
        AugmentParams {
            rotation_deg: sym(rng, self.rotation_deg),
            shift_x: sym(rng, self.shift),
            shift_y: sym(rng, self.shift),
            shear_deg: sym(rng, self.shear_deg),
            brightness: span(rng, self.brightness),
            zoom: span(rng, self.zoom),
        }
    }
}

/// Applies one affine map (shift ∘ rotation ∘ shear ∘ zoom about the image
/// center) by inverse mapping with bilinear sampling. Source coordinates
/// are clamped to the image, which gives nearest fill at the border.
pub fn transform_image(image: &Tensor, params: &AugmentParams) -> Result<Tensor> {
    params.validate()?;
    let s = image.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::dim(format!(
            "transform_image expects [H, W, 3], got {s:?}"
        )));
    }
    let (h, w) = (s[0], s[1]);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (tx, ty) = (params.shift_x * w as f64, params.shift_y * h as f64);

    // inverse of R·Sh·Z: Z⁻¹·Sh⁻¹·R⁻¹
    let (sin, cos) = params.rotation_deg.to_radians().sin_cos();
    let rinv = [[cos, sin], [-sin, cos]];
    let k = params.shear_deg.to_radians().tan();
    let shinv = [[1.0, -k], [0.0, 1.0]];
    let z = 1.0 / params.zoom;
    let mul = |a: [[f64; 2]; 2], b: [[f64; 2]; 2]| {
        [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ]
    };
    let m = mul([[z, 0.0], [0.0, z]], mul(shinv, rinv));

    let src = image.data();
    let mut out = vec![0.0; src.len()];
    let (xmax, ymax) = (w as f64 - 1.0, h as f64 - 1.0);
    for y in 0..h {
        for x in 0..w {
            let u = x as f64 - cx - tx;
            let v = y as f64 - cy - ty;
            let sx = (m[0][0] * u + m[0][1] * v + cx).clamp(0.0, xmax);
            let sy = (m[1][0] * u + m[1][1] * v + cy).clamp(0.0, ymax);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let o = (y * w + x) * 3;
            for c in 0..3 {
                let p = |yy: usize, xx: usize| src[(yy * w + xx) * 3 + c];
                let top = p(y0, x0) + fx * (p(y0, x1) - p(y0, x0));
                let bot = p(y1, x0) + fx * (p(y1, x1) - p(y1, x0));
                let val = top + fy * (bot - top);
                out[o + c] = (val * params.brightness).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(s.to_vec(), out)
}

/// A synthetic training sample: an augmentation of an original image.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub image_id: String,
    pub source_image_id: String,
    pub dx: Diagnosis,
    pub params: AugmentParams,
}

/// Upsamples every class except `nv` to `target` samples (default: the
/// `nv` count) with freshly sampled augmentations of uniformly chosen
/// originals. Classes already at or above the target get nothing.
///
/// Sample `k` draws from its own ChaCha stream `k` of `seed`, so the result
/// depends only on the inputs and not on evaluation order.
pub fn augment_class_balance(
    train: &[LesionRecord],
    target: Option<usize>,
    ranges: &AugmentRanges,
    seed: u64,
) -> Result<Vec<SyntheticSample>> {
    ranges.validate()?;
    let mut by_class: Vec<Vec<&LesionRecord>> = vec![Vec::new(); Diagnosis::ALL.len()];
    for r in train {
        by_class[r.dx.index()].push(r);
    }
    let target = match target {
        Some(t) => t,
        None => {
            let nv = by_class[Diagnosis::Nv.index()].len();
            if nv == 0 {
                return Err(Error::Data(
                    "cannot default the balance target: no nv samples".into(),
                ));
            }
            nv
        }
    };
    let mut out = Vec::new();
    for dx in Diagnosis::ALL {
        if dx == Diagnosis::Nv {
            continue;
        }
        let originals = &by_class[dx.index()];
        if originals.is_empty() {
            return Err(Error::Data(format!(
                "class {dx} has no training samples to augment"
            )));
        }
        for i in 0..target.saturating_sub(originals.len()) {
            let k = out.len() as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let src = originals[rng.random_range(0..originals.len())];
            out.push(SyntheticSample {
                image_id: format!("{}_aug{i}", src.image_id),
                source_image_id: src.image_id.clone(),
                dx,
                params: ranges.sample(&mut rng),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::metadata::Sex;

    fn gradient_image(h: usize, w: usize) -> Tensor {
        let mut d = Vec::new();
        for y in 0..h {
            for x in 0..w {
                d.extend([
                    x as f64 / w as f64,
                    y as f64 / h as f64,
                    ((x * 7 + y * 3) % 11) as f64 / 11.0,
                ]);
            }
        }
        Tensor::new(vec![h, w, 3], d).unwrap()
    }

    #[test]
    fn identity_is_noop() {
        let img = gradient_image(9, 7);
        let out = transform_image(&img, &AugmentParams::IDENTITY).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rotation_180_is_double_flip() {
        let img = gradient_image(8, 8);
        let p = AugmentParams {
            rotation_deg: 180.0,
            ..AugmentParams::IDENTITY
        };
        let out = transform_image(&img, &p).unwrap();
        for y in 1..7 {
            for x in 1..7 {
                for c in 0..3 {
                    assert!((out.at(&[y, x, c]) - img.at(&[7 - y, 7 - x, c])).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn half_shift_replicates_left_column() {
        // left half dark, right half bright, with a distinct first column
        let (h, w) = (4, 8);
        let mut d = Vec::new();
        for _ in 0..h {
            for x in 0..w {
                let v = if x == 0 {
                    0.1
                } else if x < 4 {
                    0.2
                } else {
                    0.9
                };
                d.extend([v, v, v]);
            }
        }
        let img = Tensor::new(vec![h, w, 3], d).unwrap();
        let p = AugmentParams {
            shift_x: 0.5,
            ..AugmentParams::IDENTITY
        };
        let out = transform_image(&img, &p).unwrap();
        for y in 0..h {
            for x in 0..4 {
                assert_eq!(out.at(&[y, x, 0]), 0.1);
            }
            assert_eq!(out.at(&[y, 4, 0]), 0.1);
            assert_eq!(out.at(&[y, 5, 0]), 0.2);
        }
    }

    #[test]
    fn brightness_clamps() {
        let img = Tensor::full(&[2, 2, 3], 0.7);
        let p = AugmentParams {
            brightness: 1.5,
            ..AugmentParams::IDENTITY
        };
        assert!(transform_image(&img, &p)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
    }

    #[test]
    fn params_round_trip_text() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = AugmentRanges::default().sample(&mut rng);
        assert_eq!(p.to_string().parse::<AugmentParams>().unwrap(), p);
    }

    fn rec(i: usize, dx: Diagnosis) -> LesionRecord {
        LesionRecord {
            lesion_id: format!("L{i}"),
            image_id: format!("I{i}"),
            dx,
            dx_type: "histo".into(),
            age: Some(30.0),
            sex: Sex::Female,
            localization: Some("back".into()),
        }
    }

    #[test]
    fn balance_to_nv_count() {
        let mut train = Vec::new();
        for (j, dx) in Diagnosis::ALL.iter().enumerate() {
            let n = if *dx == Diagnosis::Nv { 20 } else { 1 + j };
            for i in 0..n {
                train.push(rec(j * 100 + i, *dx));
            }
        }
        let synth = augment_class_balance(&train, None, &AugmentRanges::default(), 9).unwrap();
        for dx in Diagnosis::ALL {
            let orig = train.iter().filter(|r| r.dx == dx).count();
            let extra = synth.iter().filter(|s| s.dx == dx).count();
            if dx == Diagnosis::Nv {
                assert_eq!(extra, 0);
            } else {
                assert_eq!(orig + extra, 20);
            }
        }
        for s in &synth {
            assert_eq!(
                train
                    .iter()
                    .find(|r| r.image_id == s.source_image_id)
                    .unwrap()
                    .dx,
                s.dx
            );
        }
        assert_eq!(
            synth,
            augment_class_balance(&train, None, &AugmentRanges::default(), 9).unwrap()
        );
    }

    #[test]
    fn empty_class_is_error() {
        let train = vec![rec(0, Diagnosis::Nv), rec(1, Diagnosis::Mel)];
        assert!(augment_class_balance(&train, None, &AugmentRanges::default(), 0).is_err());
    }
}
