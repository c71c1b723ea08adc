use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{DeerError, Result};

pub const CSV_HEADER: [&str; 4] = ["sweep_value", "signal_mean", "signal_sem", "n_realizations"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    TsNs,
    FrequencyMhz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub signal_mean: f64,
    pub signal_sem: f64,
    pub n: usize,
}

/// A DEER sweep: strictly increasing x, at least one realization per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeerCurve {
    pub axis_kind: AxisKind,
    points: Vec<CurvePoint>,
}

impl DeerCurve {
    pub fn new(axis_kind: AxisKind, points: Vec<CurvePoint>) -> Result<Self> {
        for w in points.windows(2) {
            if !(w[1].x > w[0].x) {
                return Err(DeerError::Parameter(format!("curve x must be strictly increasing ({} then {})", w[0].x, w[1].x)));
            }
        }
        if let Some(p) = points.iter().find(|p| p.n == 0) {
            return Err(DeerError::Parameter(format!("point at x = {} has n = 0", p.x)));
        }
        if let Some(p) = points.iter().find(|p| !p.x.is_finite() || !p.signal_mean.is_finite() || !(p.signal_sem >= 0.0)) {
            return Err(DeerError::Parameter(format!("point at x = {} is not finite or has negative sem", p.x)));
        }
        Ok(Self { axis_kind, points })
    }

    /// Points sorted by x; duplicate abscissae are rejected.
    pub fn from_unsorted(axis_kind: AxisKind, mut points: Vec<CurvePoint>) -> Result<Self> {
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        Self::new(axis_kind, points)
    }

    /// Noise-free curve with one realization per point.
    pub fn from_xy(axis_kind: AxisKind, x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(DeerError::Parameter(format!("{} x values but {} signal values", x.len(), y.len())));
        }
        let points = x.iter().zip(y).map(|(&x, &s)| CurvePoint { x, signal_mean: s, signal_sem: 0.0, n: 1 }).collect();
        Self::from_unsorted(axis_kind, points)
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn signals(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.signal_mean).collect()
    }

    pub fn sems(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.signal_sem).collect()
    }

    /// Read the runner's CSV schema.
    pub fn read_csv<R: Read>(axis_kind: AxisKind, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| DeerError::Parse(e.to_string()))?.clone();
        let index = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DeerError::Parse(format!("missing column '{name}'")))
        };
        let (ix, im, is, in_) = (index(CSV_HEADER[0])?, index(CSV_HEADER[1])?, index(CSV_HEADER[2])?, index(CSV_HEADER[3])?);
        let mut points = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| DeerError::Parse(e.to_string()))?;
            let field = |i: usize| -> Result<&str> {
                record.get(i).ok_or_else(|| DeerError::Parse(format!("row {}: missing field", row + 1)))
            };
            let num = |i: usize| -> Result<f64> {
                let s = field(i)?;
                s.parse::<f64>().map_err(|_| DeerError::Parse(format!("row {}: '{s}' is not a number", row + 1)))
            };
            let n_str = field(in_)?;
            let n = n_str
                .parse::<usize>()
                .map_err(|_| DeerError::Parse(format!("row {}: '{n_str}' is not a count", row + 1)))?;
            points.push(CurvePoint { x: num(ix)?, signal_mean: num(im)?, signal_sem: num(is)?, n });
        }
        Self::new(axis_kind, points)
    }

    pub fn read_csv_path(axis_kind: AxisKind, path: &std::path::Path) -> Result<Self> {
        Self::read_csv(axis_kind, std::fs::File::open(path)?)
    }

    /// Write the runner's CSV schema, floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", CSV_HEADER.join(","))?;
        for p in &self.points {
            writeln!(w, "{},{},{},{}", fmt_f64(p.x), fmt_f64(p.signal_mean), fmt_f64(p.signal_sem), p.n)?;
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let c = DeerCurve::new(
            AxisKind::TsNs,
            vec![
                CurvePoint { x: 20.0, signal_mean: 0.1 + 0.2, signal_sem: 1e-17, n: 3 },
                CurvePoint { x: 40.0, signal_mean: -1.0 / 3.0, signal_sem: 0.0, n: 1 },
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = DeerCurve::read_csv(AxisKind::TsNs, buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(DeerCurve::from_xy(AxisKind::TsNs, &[1.0, 1.0], &[0.0, 0.0]).is_err());
        let p = CurvePoint { x: 1.0, signal_mean: 0.0, signal_sem: 0.0, n: 0 };
        assert!(DeerCurve::new(AxisKind::TsNs, vec![p]).is_err());
        assert!(DeerCurve::read_csv(AxisKind::TsNs, "a,b\n1,2\n".as_bytes()).is_err());
    }
}
