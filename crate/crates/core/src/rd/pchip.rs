//! Shape-preserving piecewise cubic Hermite interpolation.

use super::RdError;

/// A fitted PCHIP interpolant with Fritsch–Carlson slope limiting.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

fn three_point_end(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

impl Pchip {
    /// Fits knots `(x, y)`; `x` must be strictly increasing.
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self, RdError> {
        if x.len() != y.len() {
            return Err(RdError::Invalid(format!(
                "{} abscissae but {} ordinates",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(RdError::TooFewPoints(x.len()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(RdError::Invalid("non-finite knot".into()));
        }
        if let Some(w) = x.windows(2).find(|w| w[1] <= w[0]) {
            return Err(RdError::NotIncreasing {
                previous: w[0],
                next: w[1],
            });
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = m[0];
            d[1] = m[0];
        } else {
            for k in 1..n - 1 {
                let (m0, m1) = (m[k - 1], m[k]);
                if m0 * m1 <= 0.0 {
                    d[k] = 0.0;
                } else {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / m0 + w2 / m1);
                }
            }
            d[0] = three_point_end(h[0], h[1], m[0], m[1]);
            d[n - 1] = three_point_end(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        }
        Ok(Pchip {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Evaluates at `t`. Outside the knot range the end cubic is extended.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let dy = self.y[i + 1] - self.y[i];
        let (d0, d1) = (h * self.d[i], h * self.d[i + 1]);
        let s = (t - self.x[i]) / h;
        // Power basis around the left knot; flat segments evaluate exactly.
        let c2 = 3.0 * dy - 2.0 * d0 - d1;
        let c3 = d0 + d1 - 2.0 * dy;
        let v = self.y[i] + s * (d0 + s * (c2 + s * c3));
        if (0.0..=1.0).contains(&s) {
            let (lo, hi) = if dy >= 0.0 {
                (self.y[i], self.y[i + 1])
            } else {
                (self.y[i + 1], self.y[i])
            };
            v.clamp(lo, hi)
        } else {
            v
        }
    }
}
