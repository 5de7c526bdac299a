use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Splits `[H, W, 3]` images into flattened square patches.
///
/// Patches are ordered row-major from the top-left; each patch is flattened
/// row-major over its pixels with the three channels innermost. Weight
/// import depends on this order.
pub fn patchify(image: &Tensor, patch_size: usize) -> Result<Tensor> {
    let s = image.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::dim(format!("patchify expects [H, W, 3], got {s:?}")));
    }
    let batch = Tensor::new(vec![1, s[0], s[1], 3], image.data().to_vec())?;
    let out = patchify_batch(&batch, patch_size)?;
    let (n, p) = (out.shape()[1], out.shape()[2]);
    out.reshape(vec![n, p])
}

/// Batched form: `[B, H, W, 3] → [B, N, patch²·3]`.
pub fn patchify_batch(images: &Tensor, patch_size: usize) -> Result<Tensor> {
    let s = images.shape();
    if s.len() != 4 || s[3] != 3 {
        return Err(Error::dim(format!(
            "expected [B, H, W, 3] images, got {s:?}"
        )));
    }
    let (b, h, w) = (s[0], s[1], s[2]);
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return Err(Error::dim(format!(
            "image {h}x{w} is not divisible into {patch_size}x{patch_size} patches"
        )));
    }
    let (gh, gw) = (h / patch_size, w / patch_size);
    let pdim = patch_size * patch_size * 3;
    let src = images.data();
    let mut out = Vec::with_capacity(src.len());
    for bi in 0..b {
        let base = bi * h * w * 3;
        for py in 0..gh {
            for px in 0..gw {
                for r in 0..patch_size {
                    let y = py * patch_size + r;
                    let start = base + (y * w + px * patch_size) * 3;
                    out.extend_from_slice(&src[start..start + patch_size * 3]);
                }
            }
        }
    }
    Tensor::new(vec![b, gh * gw, pdim], out)
}
