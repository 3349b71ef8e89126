//! Monotone piecewise-cubic (Fritsch–Carlson) interpolation.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Pchip {
    /// Builds the interpolant through strictly increasing `x`.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::invalid("interpolation needs at least two points"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("interpolation abscissae must be strictly increasing"));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut m = vec![0.0; n];
        if n == 2 {
            m[0] = delta[0];
            m[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] <= 0.0 {
                    m[i] = 0.0;
                } else {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            m[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            m[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Pchip { x, y, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn segment(&self, t: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return Err(Error::invalid(format!("{t} outside interpolation range [{lo}, {hi}]")));
        }
        let i = self.x.partition_point(|&v| v <= t);
        Ok(i.clamp(1, self.x.len() - 1) - 1)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let i = self.segment(t)?;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(h00 * self.y[i] + h10 * h * self.m[i] + h01 * self.y[i + 1] + h11 * h * self.m[i + 1])
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        let i = self.segment(t)?;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        Ok(d00 * self.y[i] + d10 * self.m[i] + d01 * self.y[i + 1] + d11 * self.m[i + 1])
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Interpolant of `log y` against `log x`.
#[derive(Debug, Clone)]
pub struct LogLog {
    inner: Pchip,
}

impl LogLog {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.iter().chain(y).any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("log-log interpolation needs positive data"));
        }
        Ok(LogLog { inner: Pchip::new(x.iter().map(|v| v.ln()).collect(), y.iter().map(|v| v.ln()).collect())? })
    }

    /// Range of `x` covered (no extrapolation).
    pub fn range(&self) -> (f64, f64) {
        let (a, b) = self.inner.domain();
        (a.exp(), b.exp())
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.inner.eval(x.ln())?.exp())
    }

    /// `log y` at `log x = t`.
    pub fn log_eval(&self, t: f64) -> Result<f64> {
        self.inner.eval(t)
    }

    /// `d log y / d log x` at `log x = t`.
    pub fn log_slope(&self, t: f64) -> Result<f64> {
        self.inner.derivative(t)
    }

    pub fn log_domain(&self) -> (f64, f64) {
        self.inner.domain()
    }
}
