use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metadata::LesionRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!(
                "unknown split '{other}' (train|val|test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !r.is_finite() || *r < 0.0)
            || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split ratios must be nonnegative and sum to 1, got {}/{}/{}",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<LesionRecord>,
    pub val: Vec<LesionRecord>,
    pub test: Vec<LesionRecord>,
    pub seed: u64,
}

impl SplitDataset {
    pub fn get(&self, which: SplitName) -> &[LesionRecord] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

/// Partitions records by lesion group so that no lesion appears in two
/// splits.
///
/// Groups are shuffled with the seeded generator and assigned whole, first
/// to test until it reaches its target size, then to val, then the rest to
/// train.
pub fn split(records: &[LesionRecord], ratios: SplitRatios, seed: u64) -> Result<SplitDataset> {
    ratios.validate()?;
    let mut groups: IndexMap<&str, Vec<&LesionRecord>> = IndexMap::new();
    for r in records {
        groups.entry(r.lesion_id.as_str()).or_default().push(r);
    }
    if groups.len() < 3 {
        return Err(Error::Data(format!(
            "need at least 3 lesion groups to split, found {}",
            groups.len()
        )));
    }
    let mut order: Vec<Vec<&LesionRecord>> = groups.into_values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = records.len() as f64;
    let test_target = (ratios.test * total).round() as usize;
    let val_target = (ratios.val * total).round() as usize;
    let mut out = SplitDataset {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for group in order {
        let dest = if out.test.len() < test_target {
            &mut out.test
        } else if out.val.len() < val_target {
            &mut out.val
        } else {
            &mut out.train
        };
        dest.extend(group.into_iter().cloned());
    }
    log::info!(
        "split (seed {seed}): train {} / val {} / test {}",
        out.train.len(),
        out.val.len(),
        out.test.len()
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::metadata::{Diagnosis, Sex};

    fn rec(lesion: &str, image: &str) -> LesionRecord {
        LesionRecord {
            lesion_id: lesion.into(),
            image_id: image.into(),
            dx: Diagnosis::Nv,
            dx_type: "histo".into(),
            age: Some(50.0),
            sex: Sex::Male,
            localization: Some("back".into()),
        }
    }

    #[test]
    fn ten_distinct_lesions() {
        let recs: Vec<_> = (0..10)
            .map(|i| rec(&format!("L{i}"), &format!("I{i}")))
            .collect();
        for seed in 0..5 {
            let s = split(&recs, SplitRatios::default(), seed).unwrap();
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        }
    }

    #[test]
    fn shared_lesion_stays_together() {
        let mut recs: Vec<_> = (0..10)
            .map(|i| rec(&format!("L{i}"), &format!("I{i}")))
            .collect();
        recs.push(rec("L3", "I3b"));
        for seed in 0..50 {
            let s = split(&recs, SplitRatios::default(), seed).unwrap();
            let which: Vec<usize> = [&s.train, &s.val, &s.test]
                .iter()
                .enumerate()
                .filter(|(_, v)| v.iter().any(|r| r.lesion_id == "L3"))
                .map(|(i, _)| i)
                .collect();
            assert_eq!(which.len(), 1);
            assert_eq!(
                s.get(SplitName::Train).len() + s.val.len() + s.test.len(),
                11
            );
        }
    }

    #[test]
    fn too_few_groups_and_bad_ratios() {
        let recs = vec![rec("A", "1"), rec("A", "2"), rec("B", "3")];
        assert!(split(&recs, SplitRatios::default(), 0).is_err());
        let bad = SplitRatios {
            train: 0.5,
            val: 0.1,
            test: 0.1,
        };
        assert!(bad.validate().is_err());
    }
}
