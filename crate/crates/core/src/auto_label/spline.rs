//! Cubic smoothing spline (Reinsch form).
//!
//! Minimizes `Σ (y_i − g(t_i))² + λ ∫ g''(t)² dt` over natural cubic splines
//! with knots at the sample times. The second derivatives `γ` at the interior
//! knots solve the pentadiagonal system `(R + λ QᵀQ) γ = Qᵀ y`, and the fitted
//! values are `g = y − λ Q γ`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub knots: Vec<f64>,
    /// Fitted values at the knots.
    pub values: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    pub second: Vec<f64>,
}

impl SplineFit {
    /// First derivative at knot `i`.
    pub fn slope(&self, i: usize) -> f64 {
        let n = self.knots.len();
        if n < 2 {
            return 0.0;
        }
        let (g, c, t) = (&self.values, &self.second, &self.knots);
        if i + 1 < n {
            let h = t[i + 1] - t[i];
            (g[i + 1] - g[i]) / h - h * (2.0 * c[i] + c[i + 1]) / 6.0
        } else {
            let h = t[i] - t[i - 1];
            (g[i] - g[i - 1]) / h + h * (c[i - 1] + 2.0 * c[i]) / 6.0
        }
    }
}

/// Symmetric band matrix with two off-diagonals, stored by row as
/// `[a(i,i), a(i,i−1), a(i,i−2)]`.
struct Band5(Vec<[f64; 3]>);

impl Band5 {
    fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        match hi - lo {
            d @ 0..=2 => self.0[hi][d],
            _ => 0.0,
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        self.0[hi][hi - lo] += v;
    }

    /// Solves `A x = b` by banded Cholesky.
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let m = self.0.len();
        let mut l = Band5(vec![[0.0; 3]; m]);
        for i in 0..m {
            for j in i.saturating_sub(2)..=i {
                let mut sum = self.get(i, j);
                for k in i.saturating_sub(2)..j {
                    sum -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::Invariant("smoothing spline system is not positive definite".into()));
                    }
                    l.0[i][0] = sum.sqrt();
                } else {
                    l.0[i][i - j] = sum / l.0[j][0];
                }
            }
        }
        let mut y = vec![0.0; m];
        for i in 0..m {
            let mut s = b[i];
            for k in i.saturating_sub(2)..i {
                s -= l.0[i][i - k] * y[k];
            }
            y[i] = s / l.0[i][0];
        }
        let mut x = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = y[i];
            for k in i + 1..(i + 3).min(m) {
                s -= l.0[k][k - i] * x[k];
            }
            x[i] = s / l.0[i][0];
        }
        Ok(x)
    }
}

/// Fits a smoothing spline through `(t, y)`. `t` must strictly increase.
/// Fewer than three samples are returned unchanged.
pub fn smoothing_spline(t: &[f64], y: &[f64], lambda: f64) -> Result<SplineFit> {
    if t.len() != y.len() {
        return Err(Error::Dimension(format!("{} knots, {} values", t.len(), y.len())));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invariant("spline knots must strictly increase".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("smoothing factor must be non-negative, got {lambda}")));
    }
    let n = t.len();
    if n < 3 {
        return Ok(SplineFit {
            knots: t.to_vec(),
            values: y.to_vec(),
            second: vec![0.0; n],
        });
    }
    let m = n - 2;
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    // Column j of Q (interior knot j + 1) touches rows j, j + 1, j + 2.
    let q: Vec<[f64; 3]> = (0..m)
        .map(|j| [1.0 / h[j], -1.0 / h[j] - 1.0 / h[j + 1], 1.0 / h[j + 1]])
        .collect();
    let mut a = Band5(vec![[0.0; 3]; m]);
    for j in 0..m {
        a.add(j, j, (h[j] + h[j + 1]) / 3.0);
        if j + 1 < m {
            a.add(j + 1, j, h[j + 1] / 6.0);
        }
        for k in j..(j + 3).min(m) {
            // Rows shared by columns j and k: r ∈ [k, j + 2].
            let dot: f64 = (k..=j + 2).map(|r| q[j][r - j] * q[k][r - k]).sum();
            a.add(k, j, lambda * dot);
        }
    }
    let rhs: Vec<f64> = (0..m)
        .map(|j| q[j][0] * y[j] + q[j][1] * y[j + 1] + q[j][2] * y[j + 2])
        .collect();
    let gamma = a.solve(&rhs)?;
    let mut values = y.to_vec();
    for (j, g) in gamma.iter().enumerate() {
        for (r, qv) in q[j].iter().enumerate() {
            values[j + r] -= lambda * qv * g;
        }
    }
    let mut second = vec![0.0; n];
    second[1..n - 1].copy_from_slice(&gamma);
    Ok(SplineFit {
        knots: t.to_vec(),
        values,
        second,
    })
}
