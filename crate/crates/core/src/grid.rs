//! Sampled sources read from CSV rows `y, f_1, …, f_d`.
//!
//! Only norms and traces are offered. Between samples the function is taken
//! piecewise linear and it is zero past the last sample; the trace `f(0)` is
//! whatever the data says, since no weighted norm controls it.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exppoly::ExpPolyVec;
use crate::quadrature::gauss_legendre;

/// Gauss nodes per sample interval.
const NODES_PER_INTERVAL: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct SampledVec {
    y: Vec<f64>,
    /// One row per sample.
    values: DMatrix<f64>,
}

impl SampledVec {
    pub fn new(y: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if y.len() != values.nrows() || y.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "{} abscissae for {} sample rows (need at least 2)",
                y.len(),
                values.nrows()
            )));
        }
        if y[0] < 0.0 || y.windows(2).any(|w| w[1] <= w[0]) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "sample abscissae must be finite, >= 0 and increasing".into(),
            ));
        }
        Ok(Self { y, values })
    }

    /// Sample an exp-poly function, mostly for cross-checks.
    pub fn from_exppoly(f: &ExpPolyVec, y: &[f64]) -> Result<Self> {
        let values = DMatrix::from_fn(y.len(), f.dim(), |i, j| f.eval(y[i])[j]);
        Self::new(y.to_vec(), values)
    }

    /// Parse rows `y, f_1, …, f_d`; a non-numeric first row is taken as a header.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(r) => rows.push(r),
                Err(_) if i == 0 => continue,
                Err(e) => return Err(Error::InvalidParameter(format!("row {}: {e}", i + 1))),
            }
        }
        let width = rows.first().map_or(0, Vec::len);
        if width < 2 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::ShapeMismatch(
                "CSV rows need a common width of at least two columns".into(),
            ));
        }
        let y = rows.iter().map(|r| r[0]).collect();
        let values = DMatrix::from_fn(rows.len(), width - 1, |i, j| rows[i][j + 1]);
        Self::new(y, values)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend((0..self.dim()).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for (i, y) in self.y.iter().enumerate() {
            let mut rec = vec![y.to_string()];
            rec.extend(self.values.row(i).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.y
    }

    /// Value at the first sample; an error unless it sits at `y = 0`.
    pub fn trace(&self) -> Result<DVector<f64>> {
        if self.y[0] != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "first sample is at y = {}, not 0",
                self.y[0]
            )));
        }
        Ok(self.values.row(0).transpose())
    }

    fn interp(&self, i: usize, t: f64) -> DVector<f64> {
        (self.values.row(i) * (1.0 - t) + self.values.row(i + 1) * t).transpose()
    }

    /// `‖f‖_a` of the piecewise-linear interpolant by composite Gauss quadrature.
    pub fn weighted_norm(&self, a: f64) -> f64 {
        let (nodes, weights) = gauss_legendre(NODES_PER_INTERVAL);
        let mut total = 0.0;
        for i in 0..self.y.len() - 1 {
            let (y0, y1) = (self.y[i], self.y[i + 1]);
            let half = 0.5 * (y1 - y0);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = 0.5 * (x + 1.0);
                let y = y0 + t * (y1 - y0);
                total += w * half * (2.0 * a * y).exp() * self.interp(i, t).norm_squared();
            }
        }
        total.sqrt()
    }

    /// `r(y_i) = -∫_{y_i}^∞ f` at every sample (exact for the interpolant).
    pub fn integrate_tail(&self) -> DMatrix<f64> {
        let n = self.y.len();
        let mut out = DMatrix::zeros(n, self.dim());
        for i in (0..n - 1).rev() {
            let seg =
                (self.values.row(i) + self.values.row(i + 1)) * (0.5 * (self.y[i + 1] - self.y[i]));
            let next = out.row(i + 1) - seg;
            out.set_row(i, &next);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_converges_to_closed_form() {
        let f = ExpPolyVec::scalar(1.0, &[1.0, 0.5]).unwrap();
        let exact = f.weighted_norm(0.25).unwrap();
        let y: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.01).collect();
        let s = SampledVec::from_exppoly(&f, &y).unwrap();
        assert!((s.weighted_norm(0.25) - exact).abs() < 1e-4 * exact);
        let tail = s.integrate_tail();
        let r0 = f.integrate_tail().unwrap().eval(0.0)[0];
        assert!((tail[(0, 0)] - r0).abs() < 1e-4);
    }

    #[test]
    fn csv_roundtrip_with_header() {
        let text = "y,h0,h1\n0,1,2\n0.5,0.5,1\n1,0,0\n";
        let s = SampledVec::from_csv(text.as_bytes()).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.trace().unwrap(), DVector::from_vec(vec![1.0, 2.0]));
        let mut buf = Vec::new();
        s.to_csv(&mut buf).unwrap();
        assert_eq!(SampledVec::from_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_abscissae() {
        assert!(SampledVec::from_csv("0,1\n0,2\n".as_bytes()).is_err());
        assert!(SampledVec::from_csv("0,1\nx,2\n".as_bytes()).is_err());
        let s = SampledVec::from_csv("0.1,1\n0.2,2\n".as_bytes()).unwrap();
        assert!(s.trace().is_err());
    }
}
