use std::fmt::Write as _;
use std::path::Path;

use super::augment::{AugmentParams, SyntheticSample};
use super::metadata::{Diagnosis, LesionRecord};
use super::split::{SplitDataset, SplitName};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "# split\timage_id\tdx\tsynthetic\tsource_image_id\taugment";

/// One line of a split manifest. Originals have no params and are their
/// own source.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub split: SplitName,
    pub image_id: String,
    pub dx: Diagnosis,
    pub source_image_id: String,
    pub params: Option<AugmentParams>,
}

impl ManifestEntry {
    pub fn original(split: SplitName, r: &LesionRecord) -> Self {
        ManifestEntry {
            split,
            image_id: r.image_id.clone(),
            dx: r.dx,
            source_image_id: r.image_id.clone(),
            params: None,
        }
    }

    pub fn synthetic(s: &SyntheticSample) -> Self {
        ManifestEntry {
            split: SplitName::Train,
            image_id: s.image_id.clone(),
            dx: s.dx,
            source_image_id: s.source_image_id.clone(),
            params: Some(s.params),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.params.is_some()
    }
}

/// Train originals, then synthetic train samples, then val and test.
pub fn build_manifest(ds: &SplitDataset, synthetic: &[SyntheticSample]) -> Vec<ManifestEntry> {
    let mut out: Vec<ManifestEntry> = ds
        .train
        .iter()
        .map(|r| ManifestEntry::original(SplitName::Train, r))
        .collect();
    out.extend(synthetic.iter().map(ManifestEntry::synthetic));
    out.extend(
        ds.val
            .iter()
            .map(|r| ManifestEntry::original(SplitName::Val, r)),
    );
    out.extend(
        ds.test
            .iter()
            .map(|r| ManifestEntry::original(SplitName::Test, r)),
    );
    out
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = format!("{MANIFEST_HEADER}\n");
    for e in entries {
        let params = e.params.map_or("-".to_string(), |p| p.to_string());
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.split,
            e.image_id,
            e.dx,
            u8::from(e.is_synthetic()),
            e.source_image_id,
            params
        );
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| Error::Data(format!("manifest line {}: {m}", i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(err(format!(
                "expected 6 tab-separated fields, got {}",
                f.len()
            )));
        }
        let split = f[0].parse().map_err(|e: Error| err(e.to_string()))?;
        let dx = f[2].parse().map_err(|e: Error| err(e.to_string()))?;
        let params = match (f[3], f[5]) {
            ("0", "-") => None,
            ("1", p) => Some(p.parse().map_err(|e: Error| err(e.to_string()))?),
            _ => return Err(err("synthetic flag and augmentation field disagree".into())),
        };
        out.push(ManifestEntry {
            split,
            image_id: f[1].to_string(),
            dx,
            source_image_id: f[4].to_string(),
            params,
        });
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_manifest(entries)).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}
