use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use super::augment::transform_image;
use super::image::{find_image, load_image};
use super::manifest::ManifestEntry;
use super::split::SplitName;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Square RGB images with class labels, stored compactly in 32 bits.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    size: usize,
    pixels: Vec<f32>,
    labels: Vec<usize>,
    ids: Vec<String>,
}

impl ImageSet {
    pub fn new(size: usize) -> Self {
        ImageSet {
            size,
            pixels: Vec::new(),
            labels: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn push(&mut self, id: impl Into<String>, image: &Tensor, label: usize) -> Result<()> {
        if image.shape() != [self.size, self.size, 3] {
            return Err(Error::dim(format!(
                "image set holds [{0}, {0}, 3] images, got {1:?}",
                self.size,
                image.shape()
            )));
        }
        self.pixels.extend(image.data().iter().map(|&v| v as f32));
        self.labels.push(label);
        self.ids.push(id.into());
        Ok(())
    }

    pub fn image(&self, i: usize) -> Tensor {
        self.batch(&[i])
            .0
            .reshape(vec![self.size, self.size, 3])
            .expect("single image")
    }

    /// Stacks the selected samples into `[B, S, S, 3]`.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let n = self.size * self.size * 3;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend(
                self.pixels[i * n..(i + 1) * n]
                    .iter()
                    .map(|&v| f64::from(v)),
            );
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let t = Tensor::new(vec![indices.len(), self.size, self.size, 3], data)
            .expect("non-empty batch");
        (t, labels)
    }
}

/// Loads every manifest entry of one split, rendering synthetic samples
/// from their source image. Decoding runs in parallel; order follows the
/// manifest.
pub fn load_split(
    entries: &[ManifestEntry],
    split: SplitName,
    images_dir: &Path,
    size: usize,
) -> Result<ImageSet> {
    let chosen: Vec<&ManifestEntry> = entries.iter().filter(|e| e.split == split).collect();
    if chosen.is_empty() {
        return Err(Error::Data(format!("manifest has no {split} samples")));
    }
    let mut sources: Vec<&str> = chosen.iter().map(|e| e.source_image_id.as_str()).collect();
    sources.sort_unstable();
    sources.dedup();
    let decoded: Vec<Tensor> = sources
        .par_iter()
        .map(|id| load_image(find_image(images_dir, id)?, Some(size)))
        .collect::<Result<_>>()?;
    let by_id: HashMap<&str, &Tensor> = sources.iter().copied().zip(&decoded).collect();

    let rendered: Vec<Tensor> = chosen
        .par_iter()
        .map(|e| {
            let src = by_id[e.source_image_id.as_str()];
            match &e.params {
                Some(p) => transform_image(src, p),
                None => Ok(src.clone()),
            }
        })
        .collect::<Result<_>>()?;
    let mut set = ImageSet::new(size);
    for (e, img) in chosen.iter().zip(&rendered) {
        set.push(e.image_id.clone(), img, e.dx.index())?;
    }
    log::info!(
        "loaded {} {split} samples from {}",
        set.len(),
        images_dir.display()
    );
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_stacks_in_order() {
        let mut s = ImageSet::new(2);
        s.push("a", &Tensor::full(&[2, 2, 3], 0.25), 1).unwrap();
        s.push("b", &Tensor::full(&[2, 2, 3], 0.5), 4).unwrap();
        let (t, y) = s.batch(&[1, 0]);
        assert_eq!(t.shape(), &[2, 2, 2, 3]);
        assert_eq!(t.data()[0], 0.5);
        assert_eq!(t.data()[12], 0.25);
        assert_eq!(y, vec![4, 1]);
        assert!(s.push("c", &Tensor::zeros(&[3, 3, 3]), 0).is_err());
    }
}
