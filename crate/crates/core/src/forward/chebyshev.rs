//! Chebyshev approximation of scalar functions on an interval, and their
//! application to a symmetric operator with spectrum inside that interval.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

/// Coefficients are dropped once they fall below this fraction of the largest.
pub const DEFAULT_TOLERANCE: f64 = 1e-15;
const MAX_DEGREE: usize = 1 << 14;

#[derive(Debug, Clone)]
pub struct ChebyshevSeries {
    coeffs: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl ChebyshevSeries {
    /// Interpolates `f` on `[lo, hi]` at Chebyshev points, doubling the
    /// degree until the tail is negligible, then trims trailing coefficients.
    pub fn fit(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Self {
        assert!(hi > lo, "empty interval [{lo}, {hi}]");
        let mut n = 32;
        loop {
            let coeffs = Self::coefficients(&f, lo, hi, n);
            let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            let tail = coeffs[3 * n / 4..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
            // Rounding in the coefficient sums grows like √n.
            let threshold = scale * tol.max(4.0 * f64::EPSILON * (n as f64).sqrt());
            if tail <= threshold || n >= MAX_DEGREE {
                if tail > threshold {
                    log::warn!("Chebyshev fit on [{lo}, {hi}] stopped at degree {n} (tail {tail:e})");
                }
                let keep = coeffs.iter().rposition(|c| c.abs() > threshold).map_or(1, |i| i + 1);
                return Self { coeffs: coeffs[..keep].to_vec(), lo, hi };
            }
            n *= 2;
        }
    }

    /// DCT-II of the samples at the `n` Chebyshev points, through a length-`2n`
    /// FFT of the mirrored samples.
    fn coefficients(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let mid = 0.5 * (hi + lo);
        let half = 0.5 * (hi - lo);
        let samples: Vec<f64> =
            (0..n).map(|j| f(mid + half * (PI * (j as f64 + 0.5) / n as f64).cos())).collect();
        let mut buf: Vec<Complex<f64>> =
            samples.iter().chain(samples.iter().rev()).map(|&x| Complex::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(2 * n).process(&mut buf);
        (0..n)
            .map(|k| {
                let shift = Complex::from_polar(1.0, -PI * k as f64 / (2 * n) as f64);
                let c = (shift * buf[k]).re / n as f64;
                if k == 0 {
                    0.5 * c
                } else {
                    c
                }
            })
            .collect()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Scalar evaluation by Clenshaw's recurrence.
    pub fn eval(&self, x: f64) -> f64 {
        let t = (2.0 * x - self.hi - self.lo) / (self.hi - self.lo);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    /// `p(A) v` where `apply(u, y)` computes `y = A u`.
    pub fn apply(&self, apply: impl Fn(&[f64], &mut [f64]), v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let alpha = 2.0 / (self.hi - self.lo);
        let beta = -(self.hi + self.lo) / (self.hi - self.lo);
        let mut out: Vec<f64> = v.iter().map(|x| self.coeffs[0] * x).collect();
        if self.coeffs.len() == 1 {
            return out;
        }
        let mut prev = v.to_vec();
        let mut cur = vec![0.0; n];
        apply(&prev, &mut cur);
        for i in 0..n {
            cur[i] = alpha * cur[i] + beta * prev[i];
            out[i] += self.coeffs[1] * cur[i];
        }
        let mut next = vec![0.0; n];
        for &c in &self.coeffs[2..] {
            apply(&cur, &mut next);
            for i in 0..n {
                let t = 2.0 * (alpha * next[i] + beta * cur[i]) - prev[i];
                prev[i] = t;
                out[i] += c * t;
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        out
    }
}
