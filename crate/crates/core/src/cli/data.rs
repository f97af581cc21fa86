//! CSV ingestion and affine rescaling of coordinates to the unit interval.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Affine map of one coordinate onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub min: f64,
    pub max: f64,
}

impl Rescaling {
    pub fn fit(values: &[f64]) -> Result<Self> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::Data(format!(
                "coordinate needs at least 2 distinct values, got range [{min}, {max}]"
            )));
        }
        Ok(Rescaling { min, max })
    }

    pub fn identity() -> Self {
        Rescaling { min: 0.0, max: 1.0 }
    }

    pub fn forward(&self, x: f64) -> f64 {
        ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    /// `forward` without clamping; values outside the recorded range map
    /// outside `[0, 1]`.
    pub fn forward_unclamped(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

/// Coordinates on the unit cube (row-major `n × p`), response, and the
/// rescaling of every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub response: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rescaling: Vec<Rescaling>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    /// Builds a dataset from raw columns, rescaling each coordinate.
    pub fn from_columns(names: Vec<String>, response: String, cols: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        if cols.len() != names.len() || names.is_empty() {
            return Err(Error::Config("need at least one coordinate column".into()));
        }
        if y.is_empty() {
            return Err(Error::EmptyData("no data rows".into()));
        }
        let rescaling = cols.iter().map(|c| Rescaling::fit(c)).collect::<Result<Vec<_>>>()?;
        let n = y.len();
        let p = cols.len();
        let mut x = vec![0.0; n * p];
        for (j, (c, r)) in cols.iter().zip(&rescaling).enumerate() {
            for (i, v) in c.iter().enumerate() {
                x[i * p + j] = r.forward(*v);
            }
        }
        Ok(Dataset {
            names,
            response,
            x,
            y,
            rescaling,
        })
    }
}

/// Reads the named coordinate and response columns of a headed CSV file.
///
/// Rows with an empty cell in any requested column are rejected and reported
/// by 1-based data-row index.
pub fn ingest_csv(path: &Path, coordinates: &[String], response: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' not found in {}", path.display())))
    };
    let coord_idx = coordinates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let resp_idx = find(response)?;

    let mut cols = vec![Vec::new(); coordinates.len()];
    let mut y = Vec::new();
    let mut missing = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |idx: usize, name: &str| -> Result<Option<f64>> {
            let cell = rec.get(idx).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Ok(None);
            }
            cell.parse::<f64>()
                .map(Some)
                .map_err(|_| Error::Data(format!("non-numeric value '{cell}' in column '{name}' at row {}", row + 1)))
        };
        let coords = coord_idx
            .iter()
            .zip(coordinates)
            .map(|(&i, name)| parse(i, name))
            .collect::<Result<Vec<_>>>()?;
        let resp = parse(resp_idx, response)?;
        match (coords.iter().all(Option::is_some), resp) {
            (true, Some(v)) => {
                for (c, v) in cols.iter_mut().zip(coords) {
                    c.push(v.unwrap());
                }
                y.push(v);
            }
            _ => missing.push(row + 1),
        }
    }
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(20).map(usize::to_string).collect();
        return Err(Error::Data(format!(
            "{} rows with missing values (rows {}{})",
            missing.len(),
            shown.join(", "),
            if missing.len() > 20 { ", ..." } else { "" }
        )));
    }
    if let Some(bad) = y.iter().chain(cols.iter().flatten()).find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value {bad} in input")));
    }
    Dataset::from_columns(coordinates.to_vec(), response.to_string(), &cols, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn unit_column_keeps_identity_record() {
        let r = Rescaling::fit(&[0.0, 0.25, 1.0]).unwrap();
        assert_eq!(r, Rescaling::identity());
    }

    #[test]
    fn longitude_like_column() {
        let vals = [-95.0, -80.0, -70.0, -92.5];
        let r = Rescaling::fit(&vals).unwrap();
        assert_eq!((r.min, r.max), (-95.0, -70.0));
        assert_eq!(r.forward(-95.0), 0.0);
        assert_eq!(r.forward(-70.0), 1.0);
        for v in vals {
            assert!((r.inverse(r.forward(v)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_rejected() {
        assert!(matches!(Rescaling::fit(&[3.0, 3.0]), Err(Error::Data(_))));
    }

    #[test]
    fn reads_and_rescales() {
        let f = write_csv("lon,lat,temp\n-95,30,1.5\n-70,40,2.5\n-80,35,0.5\n");
        let d = ingest_csv(f.path(), &["lon".into(), "lat".into()], "temp").unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.y, vec![1.5, 2.5, 0.5]);
        assert_eq!(&d.x[..2], &[0.0, 0.0]);
        assert_eq!(&d.x[2..4], &[1.0, 1.0]);
        assert!((d.x[4] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn missing_rows_reported() {
        let f = write_csv("a,y\n0,1\n,2\n1,\n0.5,3\n");
        let err = ingest_csv(f.path(), &["a".into()], "y").unwrap_err();
        assert!(err.to_string().contains("rows 2, 3"), "{err}");
    }

    #[test]
    fn missing_column_and_bad_cell() {
        let f = write_csv("a,y\n0,1\nx,2\n");
        assert!(ingest_csv(f.path(), &["b".into()], "y").unwrap_err().to_string().contains("'b'"));
        assert!(ingest_csv(f.path(), &["a".into()], "y").unwrap_err().to_string().contains("non-numeric"));
    }
}
