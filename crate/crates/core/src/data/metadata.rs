use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The seven diagnostic categories, in the fixed alphabetical class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Diagnosis {
    Akiec,
    Bcc,
    Bkl,
    Df,
    Mel,
    Nv,
    Vasc,
}

pub const CLASS_NAMES: [&str; 7] = ["akiec", "bcc", "bkl", "df", "mel", "nv", "vasc"];

impl Diagnosis {
    pub const ALL: [Diagnosis; 7] = [
        Diagnosis::Akiec,
        Diagnosis::Bcc,
        Diagnosis::Bkl,
        Diagnosis::Df,
        Diagnosis::Mel,
        Diagnosis::Nv,
        Diagnosis::Vasc,
    ];

    /// Class id used for labels and confusion-matrix rows.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Diagnosis> {
        Diagnosis::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.index()]
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Diagnosis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CLASS_NAMES
            .iter()
            .position(|&n| n == s)
            .map(|i| Diagnosis::ALL[i])
            .ok_or_else(|| Error::Data(format!("unknown diagnosis label '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

impl Sex {
    pub fn name(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
            Sex::Unknown => "unknown",
        }
    }
}

/// One metadata row. Missing age and an "unknown" or blank localization are
/// kept as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionRecord {
    pub lesion_id: String,
    pub image_id: String,
    pub dx: Diagnosis,
    pub dx_type: String,
    pub age: Option<f64>,
    pub sex: Sex,
    pub localization: Option<String>,
}

pub const COLUMNS: [&str; 7] = [
    "lesion_id",
    "image_id",
    "dx",
    "dx_type",
    "age",
    "sex",
    "localization",
];

pub fn load_metadata(path: impl AsRef<Path>) -> Result<Vec<LesionRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_metadata(file).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("unknown") || s.eq_ignore_ascii_case("nan")
}

/// Parses metadata CSV. Header columns may come in any order; extra
/// columns are ignored.
pub fn read_metadata<R: Read>(reader: R) -> Result<Vec<LesionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .clone();
    let mut col = [0usize; 7];
    for (slot, name) in col.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column '{name}'")))?;
    }

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Data(format!("line {line}: {e}"))
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(col[i]).unwrap_or("");
        let err = |msg: String| Error::Data(format!("line {line}: {msg}"));

        let dx = field(2)
            .parse::<Diagnosis>()
            .map_err(|_| err(format!("unknown diagnosis label '{}'", field(2))))?;
        let age = match field(4) {
            a if is_missing(a) => None,
            a => {
                let v: f64 = a
                    .parse()
                    .map_err(|_| err(format!("unparseable age '{a}'")))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(err(format!("age must be a nonnegative number, got '{a}'")));
                }
                Some(v)
            }
        };
        let sex = match field(5).to_ascii_lowercase().as_str() {
            "male" => Sex::Male,
            "female" => Sex::Female,
            "" | "unknown" => Sex::Unknown,
            other => return Err(err(format!("unknown sex '{other}'"))),
        };
        let localization = Some(field(6))
            .filter(|s| !is_missing(s))
            .map(str::to_string);
        let image_id = field(1).to_string();
        if image_id.is_empty() {
            return Err(err("empty image_id".into()));
        }
        if !seen.insert(image_id.clone()) {
            return Err(err(format!("duplicate image_id '{image_id}'")));
        }
        out.push(LesionRecord {
            lesion_id: field(0).to_string(),
            image_id,
            dx,
            dx_type: field(3).to_string(),
            age,
            sex,
            localization,
        });
    }
    Ok(out)
}

/// Which missing fields cause a record to be dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CleanseRule {
    pub unknown_sex: bool,
    pub missing_age: bool,
    pub unknown_localization: bool,
}

impl Default for CleanseRule {
    fn default() -> Self {
        CleanseRule {
            unknown_sex: true,
            missing_age: true,
            unknown_localization: true,
        }
    }
}

/// Per-field counts of missing values seen by [`cleanse_with`]. A record
/// with several missing fields is counted once per field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CleanseReport {
    pub input: usize,
    pub kept: usize,
    pub unknown_sex: usize,
    pub missing_age: usize,
    pub unknown_localization: usize,
}

impl CleanseReport {
    pub fn dropped(&self) -> usize {
        self.input - self.kept
    }
}

pub fn cleanse(records: &[LesionRecord]) -> Vec<LesionRecord> {
    cleanse_with(records, CleanseRule::default()).0
}

pub fn cleanse_with(
    records: &[LesionRecord],
    rule: CleanseRule,
) -> (Vec<LesionRecord>, CleanseReport) {
    let mut report = CleanseReport {
        input: records.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        let no_sex = r.sex == Sex::Unknown;
        let no_age = r.age.is_none();
        let no_loc = r.localization.is_none();
        report.unknown_sex += no_sex as usize;
        report.missing_age += no_age as usize;
        report.unknown_localization += no_loc as usize;
        let drop = (rule.unknown_sex && no_sex)
            || (rule.missing_age && no_age)
            || (rule.unknown_localization && no_loc);
        if !drop {
            kept.push(r.clone());
        }
    }
    report.kept = kept.len();
    log::info!(
        "cleanse: kept {} of {} (unknown sex {}, missing age {}, unknown localization {})",
        report.kept,
        report.input,
        report.unknown_sex,
        report.missing_age,
        report.unknown_localization
    );
    (kept, report)
}
