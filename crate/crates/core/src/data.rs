//! Longitudinal datasets: CSV ingestion and the embedded dental data.
//!
//! A CSV file has one row per subject. One column (by default `group`)
//! holds the group label; every other header is a numeric timepoint, and
//! the timepoint headers must be strictly increasing. Rows are regrouped so
//! that each group is contiguous, in order of first appearance (or in the
//! declared order), keeping the within-group order of the file.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::ModelSpec;

const DENTAL_CSV: &str = include_str!("../assets/dental.csv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub group_column: String,
    /// Expected group labels in layout order. When absent, groups appear in
    /// order of first occurrence.
    pub groups: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { group_column: "group".into(), groups: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalDataset {
    /// `n × p`, groups contiguous.
    #[serde(with = "crate::serde_matrix")]
    pub y: Matrix,
    pub timepoints: Vec<f64>,
    /// `(label, size)` in layout order.
    pub groups: Vec<(String, usize)>,
    /// `permutation[i]` is the input row placed at row `i` of `y`.
    pub permutation: Vec<usize>,
}

impl LongitudinalDataset {
    /// Builds a dataset from rows in input order.
    pub fn from_rows(
        timepoints: Vec<f64>,
        rows: Vec<(String, Vec<f64>)>,
        declared: Option<&[String]>,
    ) -> Result<Self> {
        if timepoints.is_empty() {
            return Err(Error::InvalidArgument("no timepoint columns".into()));
        }
        if timepoints.windows(2).any(|w| !(w[1] > w[0])) || timepoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::UnsortedTimepoints);
        }
        let p = timepoints.len();
        let mut order: Vec<String> = declared.map(<[String]>::to_vec).unwrap_or_default();
        for (label, values) in &rows {
            if values.len() != p {
                return Err(Error::Shape(format!("row has {} values, expected {p}", values.len())));
            }
            if !order.contains(label) {
                if declared.is_some() {
                    return Err(Error::InvalidArgument(format!("undeclared group {label:?}")));
                }
                order.push(label.clone());
            }
        }
        if order.is_empty() {
            return Err(Error::EmptyGroup("(no data rows)".into()));
        }
        let mut permutation = Vec::with_capacity(rows.len());
        let mut groups = Vec::with_capacity(order.len());
        for label in order {
            let members: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].0 == label).collect();
            if members.is_empty() {
                return Err(Error::EmptyGroup(label));
            }
            groups.push((label, members.len()));
            permutation.extend(members);
        }
        let y = Matrix::from_fn(rows.len(), p, |i, j| rows[permutation[i]].1[j]);
        Ok(Self { y, timepoints, groups, permutation })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.1).collect()
    }

    pub fn group_labels(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.0.as_str()).collect()
    }

    /// Rows of group `g`.
    pub fn group_rows(&self, g: usize) -> Matrix {
        let start: usize = self.groups[..g].iter().map(|x| x.1).sum();
        self.y.rows(start, self.groups[g].1).into_owned()
    }

    /// Additive model with one polynomial profile per group.
    pub fn spec(&self, degrees: &[usize]) -> Result<ModelSpec> {
        if degrees.len() != self.groups.len() {
            return Err(Error::InvalidArgument(format!(
                "{} degrees given for {} groups",
                degrees.len(),
                self.groups.len()
            )));
        }
        ModelSpec::grouped(&self.group_sizes(), &self.timepoints, degrees)
    }

    pub fn to_csv_string(&self, group_column: &str) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![group_column.to_string()];
        header.extend(self.timepoints.iter().map(|t| format_number(*t)));
        w.write_record(&header)?;
        let mut row = 0;
        for (label, size) in &self.groups {
            for _ in 0..*size {
                let mut rec = vec![label.clone()];
                rec.extend(self.y.row(row).iter().map(|v| format_number(*v)));
                w.write_record(&rec)?;
                row += 1;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(x: f64) -> String {
    format!("{x}")
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LongitudinalDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema).map_err(|e| match e {
        Error::Csv(c) if c.is_io_error() => match c.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked io error"),
        },
        other => other,
    })
}

/// Parses CSV text. Reported rows and columns are 1-based positions in the
/// file, the header being row 1.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<LongitudinalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let group_col = headers
        .iter()
        .position(|h| h == schema.group_column)
        .ok_or_else(|| Error::InvalidArgument(format!("no {:?} column in header", schema.group_column)))?;
    let mut timepoints = Vec::with_capacity(headers.len().saturating_sub(1));
    let mut value_cols = Vec::with_capacity(timepoints.capacity());
    for (j, h) in headers.iter().enumerate() {
        if j == group_col {
            continue;
        }
        let t = h.parse::<f64>().map_err(|_| Error::NonNumeric { row: 1, col: j + 1, value: h.to_string() })?;
        timepoints.push(t);
        value_cols.push(j);
    }
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx + 2;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        let label = cell(group_col);
        if label.is_empty() {
            return Err(Error::MissingValue { row, col: group_col + 1 });
        }
        let mut values = Vec::with_capacity(value_cols.len());
        for &j in &value_cols {
            let s = cell(j);
            if s.is_empty() {
                return Err(Error::MissingValue { row, col: j + 1 });
            }
            let v = s.parse::<f64>().ok().filter(|v| v.is_finite());
            values.push(v.ok_or_else(|| Error::NonNumeric { row, col: j + 1, value: s.to_string() })?);
        }
        rows.push((label.to_string(), values));
    }
    LongitudinalDataset::from_rows(timepoints, rows, schema.groups.as_deref())
}

/// The embedded dental measurements: 11 girls and 16 boys at ages 8, 10,
/// 12 and 14.
pub fn dental_dataset() -> LongitudinalDataset {
    read_csv(DENTAL_CSV.as_bytes(), &CsvSchema::default()).expect("embedded dental data is valid")
}

pub fn dental_csv() -> &'static str {
    DENTAL_CSV
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::column_means;

    fn parse(text: &str) -> Result<LongitudinalDataset> {
        read_csv(text.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn dental_shape_and_anchors() {
        let d = dental_dataset();
        assert_eq!((d.n(), d.p()), (27, 4));
        assert_eq!(d.timepoints, vec![8.0, 10.0, 12.0, 14.0]);
        assert_eq!(d.groups, vec![("girls".to_string(), 11), ("boys".to_string(), 16)]);
        assert_eq!(d.y.row(0).iter().copied().collect::<Vec<_>>(), vec![21.0, 20.0, 21.5, 23.0]);
        assert_eq!(d.y.row(11 + 12).iter().copied().collect::<Vec<_>>(), vec![17.0, 24.5, 26.0, 29.5]);
        assert_eq!(d.permutation, (0..27).collect::<Vec<_>>());
    }

    #[test]
    fn dental_asset_checksum() {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(dental_csv().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, "6809126db33bb98ad982f4c8341c278d02a149a18bbf75b0a004eca03ac52a90");
    }

    #[test]
    fn dental_group_means() {
        let d = dental_dataset();
        let girls = [21.18, 22.23, 23.09, 24.09];
        let boys = [22.87, 23.81, 25.72, 27.47];
        for (g, expect) in [(0, girls), (1, boys)] {
            for (m, e) in column_means(&d.group_rows(g)).iter().zip(expect) {
                // Printed means are rounded to 2 decimals; 22.875 appears as 22.87.
                assert!((m - e).abs() <= 0.005 + 1e-12, "group {g}: {m} vs {e}");
            }
        }
    }

    #[test]
    fn groups_made_contiguous() {
        let d = parse("group,1,2\na,1,2\nb,3,4\na,5,6\nb,7,8\n").unwrap();
        assert_eq!(d.permutation, vec![0, 2, 1, 3]);
        assert_eq!(d.y.column(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 5.0, 3.0, 7.0]);
        assert_eq!(d.group_sizes(), vec![2, 2]);
    }

    #[test]
    fn group_column_anywhere() {
        let d = parse("0.5,group,1.5\n1,g,2\n").unwrap();
        assert_eq!(d.timepoints, vec![0.5, 1.5]);
        assert_eq!(d.groups[0].0, "g");
    }

    #[test]
    fn blank_cell_reports_coordinates() {
        let e = parse("group,1,2,3\na,1,2,3\na,4,,6\n").unwrap_err();
        assert!(matches!(e, Error::MissingValue { row: 3, col: 3 }), "{e:?}");
    }

    #[test]
    fn non_numeric_cell() {
        let e = parse("group,1,2\na,1,x\n").unwrap_err();
        assert!(matches!(e, Error::NonNumeric { row: 2, col: 3, .. }), "{e:?}");
        let e = parse("group,1,two\na,1,2\n").unwrap_err();
        assert!(matches!(e, Error::NonNumeric { row: 1, col: 3, .. }), "{e:?}");
    }

    #[test]
    fn unsorted_timepoints() {
        assert!(matches!(parse("group,2,1\na,1,2\n"), Err(Error::UnsortedTimepoints)));
        assert!(matches!(parse("group,1,1\na,1,2\n"), Err(Error::UnsortedTimepoints)));
    }

    #[test]
    fn empty_groups() {
        let schema = CsvSchema { groups: Some(vec!["a".into(), "b".into()]), ..CsvSchema::default() };
        let e = read_csv("group,1,2\na,1,2\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(e, Error::EmptyGroup(ref g) if g == "b"));
        assert!(matches!(parse("group,1,2\n"), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn single_row_fails_downstream() {
        let d = parse("group,1,2,3,4\na,1,2,3,4\n").unwrap();
        assert!(d.spec(&[1]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = dental_dataset();
        let back = parse(&d.to_csv_string("group").unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn missing_file_is_io() {
        let e = load_csv("/nonexistent/dir/x.csv", &CsvSchema::default()).unwrap_err();
        assert_eq!(e.kind(), crate::error::ErrorKind::Io);
    }
}
