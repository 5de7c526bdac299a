use std::collections::BTreeMap;
use std::fmt::Write;

use super::metadata::{LesionRecord, Sex, CLASS_NAMES};

pub const AGE_BIN_WIDTH: f64 = 5.0;

/// A labelled count table.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub title: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl CountTable {
    fn build(
        title: &str,
        cols: Vec<String>,
        cells: impl Iterator<Item = (String, String)>,
    ) -> Self {
        let mut map: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for (r, c) in cells {
            *map.entry(r).or_default().entry(c).or_default() += 1;
        }
        let rows: Vec<String> = map.keys().cloned().collect();
        let counts = rows
            .iter()
            .map(|r| {
                cols.iter()
                    .map(|c| map[r].get(c).copied().unwrap_or(0))
                    .collect()
            })
            .collect();
        CountTable {
            title: title.into(),
            rows,
            cols,
            counts,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn to_text(&self) -> String {
        let w0 = self
            .rows
            .iter()
            .map(String::len)
            .chain([self.title.len().min(24), 5])
            .max()
            .unwrap_or(5);
        let widths: Vec<usize> = self
            .cols
            .iter()
            .enumerate()
            .map(|(j, c)| {
                self.counts
                    .iter()
                    .map(|r| r[j].to_string().len())
                    .chain([c.len()])
                    .max()
                    .unwrap_or(1)
            })
            .collect();
        let mut s = format!("{}\n{:<w0$}", self.title, "");
        for (c, w) in self.cols.iter().zip(&widths) {
            let _ = write!(s, "  {c:>w$}");
        }
        s.push('\n');
        for (r, row) in self.rows.iter().zip(&self.counts) {
            let _ = write!(s, "{r:<w0$}");
            for (v, w) in row.iter().zip(&widths) {
                let _ = write!(s, "  {v:>w$}");
            }
            s.push('\n');
        }
        s
    }
}

/// Summary statistics plus one table per exploratory view.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub total: usize,
    pub male: usize,
    pub female: usize,
    pub unknown_sex: usize,
    pub mean_age: Option<f64>,
    pub tables: Vec<CountTable>,
}

impl StatsReport {
    pub fn share(&self, n: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            n as f64 / self.total as f64
        }
    }

    pub fn table(&self, title: &str) -> Option<&CountTable> {
        self.tables.iter().find(|t| t.title == title)
    }

    /// Aligned tables followed by `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tables {
            s.push_str(&t.to_text());
            s.push('\n');
        }
        for (k, v) in self.key_values() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("total".to_string(), self.total.to_string()),
            ("male_share".into(), format!("{:.4}", self.share(self.male))),
            (
                "female_share".into(),
                format!("{:.4}", self.share(self.female)),
            ),
            (
                "unknown_sex_share".into(),
                format!("{:.4}", self.share(self.unknown_sex)),
            ),
            (
                "mean_age".into(),
                self.mean_age.map_or("n/a".into(), |a| format!("{a:.2}")),
            ),
        ];
        if let Some(t) = self.table("dx") {
            for (i, c) in t.cols.iter().enumerate() {
                kv.push((format!("dx.{c}"), t.counts[0][i].to_string()));
            }
        }
        if let Some(t) = self.table("localization") {
            if let Some((i, _)) = t.counts[0]
                .iter()
                .enumerate()
                .max_by_key(|&(i, n)| (*n, std::cmp::Reverse(i)))
            {
                kv.push(("top_localization".into(), t.cols[i].clone()));
            }
        }
        kv
    }
}

pub fn age_bin(age: f64) -> String {
    let lo = (age / AGE_BIN_WIDTH).floor() * AGE_BIN_WIDTH;
    format!("{:03}-{:03}", lo as u32, (lo + AGE_BIN_WIDTH) as u32 - 1)
}

pub fn stats_report(records: &[LesionRecord]) -> StatsReport {
    let count = |s: Sex| records.iter().filter(|r| r.sex == s).count();
    let ages: Vec<f64> = records.iter().filter_map(|r| r.age).collect();
    let mean_age = (!ages.is_empty()).then(|| ages.iter().sum::<f64>() / ages.len() as f64);

    let dx_cols: Vec<String> = CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    let loc = |r: &LesionRecord| r.localization.clone().unwrap_or_else(|| "unknown".into());
    let mut loc_cols: Vec<String> = records.iter().map(loc).collect();
    loc_cols.sort();
    loc_cols.dedup();
    let sex_cols: Vec<String> = ["female", "male", "unknown"]
        .iter()
        .filter(|s| records.iter().any(|r| r.sex.name() == **s))
        .map(|s| s.to_string())
        .collect();
    let aged = || {
        records
            .iter()
            .filter_map(|r| r.age.map(|a| (age_bin(a), r)))
    };
    let all = || "all".to_string();

    let tables = vec![
        CountTable::build(
            "sex",
            sex_cols,
            records.iter().map(|r| (all(), r.sex.name().to_string())),
        ),
        CountTable::build(
            "age",
            vec!["count".into()],
            aged().map(|(b, _)| (b, "count".into())),
        ),
        CountTable::build(
            "dx",
            dx_cols.clone(),
            records.iter().map(|r| (all(), r.dx.name().to_string())),
        ),
        CountTable::build(
            "dx by sex",
            dx_cols.clone(),
            records
                .iter()
                .map(|r| (r.sex.name().to_string(), r.dx.name().to_string())),
        ),
        CountTable::build(
            "dx by age",
            dx_cols,
            aged().map(|(b, r)| (b, r.dx.name().to_string())),
        ),
        CountTable::build(
            "localization",
            loc_cols.clone(),
            records.iter().map(|r| (all(), loc(r))),
        ),
        CountTable::build(
            "localization by sex",
            loc_cols.clone(),
            records.iter().map(|r| (r.sex.name().to_string(), loc(r))),
        ),
        CountTable::build(
            "localization by age",
            loc_cols,
            aged().map(|(b, r)| (b, loc(r))),
        ),
    ];
    StatsReport {
        total: records.len(),
        male: count(Sex::Male),
        female: count(Sex::Female),
        unknown_sex: count(Sex::Unknown),
        mean_age,
        tables,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::metadata::Diagnosis;

    fn rec(i: usize, dx: Diagnosis, age: f64, sex: Sex, loc: &str) -> LesionRecord {
        LesionRecord {
            lesion_id: format!("L{i}"),
            image_id: format!("I{i}"),
            dx,
            dx_type: "histo".into(),
            age: Some(age),
            sex,
            localization: Some(loc.into()),
        }
    }

    #[test]
    fn single_record_is_degenerate() {
        let r = stats_report(&[rec(0, Diagnosis::Mel, 42.0, Sex::Male, "back")]);
        assert_eq!(r.share(r.male), 1.0);
        assert_eq!(r.mean_age, Some(42.0));
        let age = r.table("age").unwrap();
        assert_eq!(age.rows, vec!["040-044"]);
        assert_eq!(r.table("localization").unwrap().cols, vec!["back"]);
        assert!(r.to_text().contains("male_share=1.0000"));
    }

    #[test]
    fn tables_sum_to_total() {
        let recs = vec![
            rec(0, Diagnosis::Nv, 45.0, Sex::Male, "back"),
            rec(1, Diagnosis::Nv, 50.0, Sex::Female, "face"),
            rec(2, Diagnosis::Bkl, 65.0, Sex::Male, "back"),
        ];
        let r = stats_report(&recs);
        for t in &r.tables {
            assert_eq!(t.total(), 3, "{}", t.title);
        }
        assert!((r.mean_age.unwrap() - 160.0 / 3.0).abs() < 1e-12);
        assert!(r.to_text().contains("top_localization=back"));
        assert_eq!(age_bin(49.9), "045-049");
    }
}
