//! Triple record system tables.
//!
//! Cells are always ordered `(111, 110, 101, 011, 100, 010, 001)`, with the
//! unobserved `000` cell last wherever all eight cells appear.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MseError, Result};

/// Names of the seven observable cells in canonical order.
pub const CELL_NAMES: [&str; 7] = ["x111", "x110", "x101", "x011", "x100", "x010", "x001"];

/// Capture patterns `(i, j, k)` of the seven observable cells in canonical order.
pub const CELL_PATTERNS: [[u8; 3]; 7] = [
    [1, 1, 1],
    [1, 1, 0],
    [1, 0, 1],
    [0, 1, 1],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
];

/// Index of each observable cell in the canonical order.
pub mod cell {
    pub const X111: usize = 0;
    pub const X110: usize = 1;
    pub const X101: usize = 2;
    pub const X011: usize = 3;
    pub const X100: usize = 4;
    pub const X010: usize = 5;
    pub const X001: usize = 6;
}

/// Observed counts of a triple record system.
/// Serializes as named cells `{x111, ..., x001[, label]}`, the same shape
/// the parser reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrsTable {
    counts: [u64; 7],
    label: Option<String>,
}

impl Serialize for TrsTable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("TrsTable", 8)?;
        for (name, c) in CELL_NAMES.iter().zip(&self.counts) {
            st.serialize_field(name, c)?;
        }
        match &self.label {
            Some(l) => st.serialize_field("label", l)?,
            None => st.skip_field("label")?,
        }
        st.end()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    x111: i64,
    x110: i64,
    x101: i64,
    x011: i64,
    x100: i64,
    x010: i64,
    x001: i64,
    #[serde(default)]
    label: Option<String>,
}

impl TrsTable {
    /// Validates seven raw counts in canonical order.
    pub fn validate(raw: [i64; 7]) -> Result<Self> {
        let mut counts = [0u64; 7];
        for (i, &v) in raw.iter().enumerate() {
            if v < 0 {
                return Err(MseError::NegativeCount { cell: CELL_NAMES[i], value: v });
            }
            counts[i] = v as u64;
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: [u64; 7]) -> Result<Self> {
        if counts.iter().all(|&c| c == 0) {
            return Err(MseError::EmptyTable);
        }
        Ok(Self { counts, label: None })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn counts(&self) -> [u64; 7] {
        self.counts
    }

    /// Counts as floats, convenient for the log-linear and coverage formulas.
    pub fn counts_f64(&self) -> [f64; 7] {
        self.counts.map(|c| c as f64)
    }

    pub fn get(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    pub fn x111(&self) -> u64 {
        self.counts[cell::X111]
    }
    pub fn x110(&self) -> u64 {
        self.counts[cell::X110]
    }
    pub fn x101(&self) -> u64 {
        self.counts[cell::X101]
    }
    pub fn x011(&self) -> u64 {
        self.counts[cell::X011]
    }
    pub fn x100(&self) -> u64 {
        self.counts[cell::X100]
    }
    pub fn x010(&self) -> u64 {
        self.counts[cell::X010]
    }
    pub fn x001(&self) -> u64 {
        self.counts[cell::X001]
    }

    /// Number of distinct individuals observed.
    pub fn x0(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn n1(&self) -> u64 {
        self.x111() + self.x110() + self.x101() + self.x100()
    }

    pub fn n2(&self) -> u64 {
        self.x111() + self.x110() + self.x011() + self.x010()
    }

    pub fn n3(&self) -> u64 {
        self.x111() + self.x101() + self.x011() + self.x001()
    }

    pub fn margins(&self) -> [u64; 3] {
        [self.n1(), self.n2(), self.n3()]
    }

    /// Every cell multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Result<Self> {
        let mut t = Self::from_counts(self.counts.map(|c| c * factor))?;
        t.label = self.label.clone();
        Ok(t)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawTable = serde_json::from_str(s)?;
        let t = Self::validate([
            raw.x111, raw.x110, raw.x101, raw.x011, raw.x100, raw.x010, raw.x001,
        ])?;
        Ok(match raw.label {
            Some(l) => t.with_label(l),
            None => t,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialization is infallible")
    }

    /// Parses every data row of a CSV document.
    pub fn tables_from_csv_str(s: &str) -> Result<Vec<Self>> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(s.as_bytes());
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let has_label = match names.as_slice() {
            h if h == CELL_NAMES => false,
            h if h.len() == 8 && h[..7] == CELL_NAMES && h[7] == "label" => true,
            _ => {
                return Err(MseError::Parse(format!(
                    "CSV header must be '{}' with optional trailing 'label', got '{}'",
                    CELL_NAMES.join(","),
                    names.join(",")
                )))
            }
        };
        let mut out = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut raw = [0i64; 7];
            for (i, name) in CELL_NAMES.iter().enumerate() {
                let field = rec.get(i).ok_or_else(|| {
                    MseError::Parse(format!("row {}: missing field {name}", row + 1))
                })?;
                raw[i] = field.parse().map_err(|_| {
                    MseError::Parse(format!("row {}: field {name}: '{field}' is not an integer", row + 1))
                })?;
            }
            let mut t = Self::validate(raw)?;
            if has_label {
                if let Some(l) = rec.get(7).filter(|l| !l.is_empty()) {
                    t = t.with_label(l);
                }
            }
            out.push(t);
        }
        Ok(out)
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut tables = Self::tables_from_csv_str(s)?;
        match tables.len() {
            1 => Ok(tables.remove(0)),
            n => Err(MseError::Parse(format!("expected exactly one data row, found {n}"))),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = CELL_NAMES.join(",");
        if self.label.is_some() {
            s.push_str(",label");
        }
        s.push('\n');
        let cells: Vec<String> = self.counts.iter().map(|c| c.to_string()).collect();
        s.push_str(&cells.join(","));
        if let Some(l) = &self.label {
            s.push(',');
            if l.contains([',', '"', '\n']) {
                s.push('"');
                s.push_str(&l.replace('"', "\"\""));
                s.push('"');
            } else {
                s.push_str(l);
            }
        }
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path, format: TableFormat) -> Result<()> {
        let body = match format {
            TableFormat::Json => self.to_json_string() + "\n",
            TableFormat::Csv => self.to_csv_string(),
        };
        fs::write(path, body)?;
        Ok(())
    }
}

impl fmt::Display for TrsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")?;
        if let Some(l) = &self.label {
            write!(f, " [{l}]")?;
        }
        Ok(())
    }
}

/// On-disk table formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Json,
    Csv,
}

impl TableFormat {
    /// Guesses the format from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => TableFormat::Csv,
            _ => TableFormat::Json,
        }
    }
}

/// Reads and validates a single table.
pub fn load_table(path: &Path, format: TableFormat) -> Result<TrsTable> {
    let body = fs::read_to_string(path)
        .map_err(|e| MseError::Parse(format!("{}: {e}", path.display())))?;
    match format {
        TableFormat::Json => TrsTable::from_json_str(&body),
        TableFormat::Csv => TrsTable::from_csv_str(&body),
    }
}

/// Names accepted by [`builtin_dataset`].
pub const BUILTIN_DATASETS: [&str; 4] = ["als_all", "als_deployed", "als_nondeployed", "wtc"];

/// Published case-study tables: ALS among 1991 Gulf War veterans (all,
/// deployed, non-deployed) and the WTC Twin Towers occupant registry.
pub fn builtin_dataset(name: &str) -> Result<TrsTable> {
    let (counts, label) = match name {
        "als_all" => ([24, 23, 19, 9, 10, 10, 12], "ALS all"),
        "als_deployed" => ([10, 2, 12, 4, 5, 2, 5], "ALS deployed"),
        "als_nondeployed" => ([14, 21, 7, 5, 5, 8, 7], "ALS non-deployed"),
        "wtc" => ([174, 88, 1658, 750, 1702, 270, 4323], "WTC"),
        other => return Err(MseError::UnknownDataset(other.to_string())),
    };
    Ok(TrsTable::from_counts(counts)?.with_label(label))
}

/// Probabilities of the eight cells, canonical order with `000` last.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellProbabilities {
    pub p: [f64; 8],
}

impl CellProbabilities {
    pub fn new(p: [f64; 8]) -> Result<Self> {
        if let Some(&bad) = p.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
            return Err(MseError::InvalidProbability(bad));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(MseError::InvalidProbability(s));
        }
        Ok(Self { p })
    }

    /// The seven observable cells.
    pub fn observed(&self) -> [f64; 7] {
        let mut o = [0.0; 7];
        o.copy_from_slice(&self.p[..7]);
        o
    }

    pub fn p000(&self) -> f64 {
        self.p[7]
    }

    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn als_all_margins() {
        let t = TrsTable::validate([24, 23, 19, 9, 10, 10, 12]).unwrap();
        assert_eq!(t.x0(), 107);
        assert_eq!(t.margins(), [76, 66, 64]);
    }

    #[test]
    fn symmetric_table() {
        let t = TrsTable::validate([1; 7]).unwrap();
        assert_eq!(t.x0(), 7);
        assert_eq!(t.margins(), [4, 4, 4]);
    }

    #[test]
    fn rejects_empty_and_negative() {
        assert!(matches!(TrsTable::validate([0; 7]), Err(MseError::EmptyTable)));
        assert!(matches!(
            TrsTable::validate([1, 2, -3, 0, 0, 0, 0]),
            Err(MseError::NegativeCount { cell: "x101", value: -3 })
        ));
    }

    #[test]
    fn builtin_tables() {
        let d = builtin_dataset("als_deployed").unwrap();
        assert_eq!(d.counts(), [10, 2, 12, 4, 5, 2, 5]);
        assert_eq!(d.x0(), 40);
        let n = builtin_dataset("als_nondeployed").unwrap();
        assert_eq!(n.counts(), [14, 21, 7, 5, 5, 8, 7]);
        assert_eq!(n.x0(), 67);
        assert_eq!(builtin_dataset("wtc").unwrap().x0(), 8965);
        assert_eq!(builtin_dataset("als_all").unwrap().x0(), 107);
        assert!(matches!(builtin_dataset("nope"), Err(MseError::UnknownDataset(_))));
    }

    #[test]
    fn json_schema() {
        let t = TrsTable::from_json_str(
            r#"{"x111":174,"x110":88,"x101":1658,"x011":750,"x100":1702,"x010":270,"x001":4323}"#,
        )
        .unwrap();
        assert_eq!(t.x0(), 8965);
        let err = TrsTable::from_json_str(
            r#"{"x111":1,"x110":1,"x101":1,"x011":1,"x100":1,"x010":1,"x112":1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("x112"), "{err}");
        // non-integer counts are schema violations too
        assert!(TrsTable::from_json_str(
            r#"{"x111":1.5,"x110":1,"x101":1,"x011":1,"x100":1,"x010":1,"x001":1}"#
        )
        .is_err());
        let labelled = t.clone().with_label("wtc");
        assert_eq!(TrsTable::from_json_str(&labelled.to_json_string()).unwrap(), labelled);
        assert_eq!(TrsTable::from_json_str(&t.to_json_string()).unwrap(), t);
    }

    #[test]
    fn csv_schema() {
        let t = TrsTable::from_csv_str("x111,x110,x101,x011,x100,x010,x001\n1,1,1,1,1,1,1\n").unwrap();
        assert_eq!(t.counts(), [1; 7]);
        let t = TrsTable::from_csv_str("x111,x110,x101,x011,x100,x010,x001,label\n1,2,3,4,5,6,7,deployed\n")
            .unwrap();
        assert_eq!(t.label(), Some("deployed"));
        assert!(TrsTable::from_csv_str("x111,x110,x101,x011,x100,x010,x112\n1,1,1,1,1,1,1\n").is_err());
        assert!(TrsTable::from_csv_str("x111,x110,x101,x011,x100,x010,x001\n1,1,1,1,1,1,z\n").is_err());
    }

    #[test]
    fn cell_probabilities_validation() {
        assert!(CellProbabilities::new([0.125; 8]).is_ok());
        assert!(CellProbabilities::new([0.2; 8]).is_err());
        assert!(CellProbabilities::new([1.5, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }
}
