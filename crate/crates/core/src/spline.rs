//! Natural cubic spline interpolation.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NaturalSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalSpline {
    /// Knots must be strictly increasing; at least two are required.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() {
            return Err(Error::Dimension(format!("{n} knots but {} values", ys.len())));
        }
        if n < 2 {
            return Err(Error::InsufficientExtrema { found: n, needed: 2 });
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("spline knots must be strictly increasing".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives (Thomas algorithm).
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for i in 1..k {
                let lower = xs[i + 1] - xs[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(Self { xs, ys, m })
    }

    /// Evaluates the spline; outside the knot range it continues linearly.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.slope(0, 0.0) * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.slope(n - 2, 1.0) * (x - self.xs[n - 1]);
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// First derivative on segment `i` at relative position `t ∈ {0, 1}`.
    fn slope(&self, i: usize, t: f64) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        let secant = (self.ys[i + 1] - self.ys[i]) / h;
        if t == 0.0 {
            secant - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0
        } else {
            secant + h * (self.m[i] + 2.0 * self.m[i + 1]) / 6.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots() {
        let xs = vec![-3.0, 0.0, 1.0, 4.0, 9.0];
        let ys = vec![1.0, -2.0, 0.5, 3.0, 3.0];
        let s = NaturalSpline::new(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((s.eval(*x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_lines() {
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 1.5).collect();
        let ys = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let s = NaturalSpline::new(xs, ys).unwrap();
        for x in [-2.0, 0.3, 4.4, 7.5, 10.0] {
            assert!((s.eval(x) - (2.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn natural_end_conditions() {
        let s = NaturalSpline::new(vec![0.0, 1.0, 2.5, 4.0], vec![0.0, 2.0, -1.0, 0.5]).unwrap();
        // Second derivative by finite differences vanishes at both ends.
        let h = 1e-4;
        for x0 in [0.0 + 2.0 * h, 4.0 - 2.0 * h] {
            let d2 = (s.eval(x0 + h) - 2.0 * s.eval(x0) + s.eval(x0 - h)) / (h * h);
            assert!(d2.abs() < 1e-2, "d2 = {d2}");
        }
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(NaturalSpline::new(vec![0.0], vec![1.0]).is_err());
        assert!(NaturalSpline::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }
}
