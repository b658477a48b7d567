use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Band-limited probing pulse `f(t) = cos(ω₀ t) exp(-(2πB)² t² / 2)`.
///
/// Its Fourier transform, with the convention `f̂(ω) = ∫ f(t) e^{-iωt} dt`, is
/// the non-negative pair of Gaussians
/// `f̂(ω) = √(2π)/(2σ) [e^{-(ω-ω₀)²/(2σ²)} + e^{-(ω+ω₀)²/(2σ²)}]`, `σ = 2πB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    /// Central angular frequency (rad/s).
    pub omega0: f64,
    /// Bandwidth `B` (Hz).
    pub bandwidth: f64,
    /// Support half-width: `|f(t)|` stays below `1e-8` of its peak for `|t| > tf`.
    pub tf: f64,
}

const SUPPORT_THRESHOLD: f64 = 1e-8;

impl Pulse {
    pub fn new(omega0: f64, bandwidth: f64) -> Self {
        let sigma = 2.0 * PI * bandwidth;
        let tf = (2.0 * (1.0 / SUPPORT_THRESHOLD).ln()).sqrt() / sigma;
        Self { omega0, bandwidth, tf }
    }

    /// Central frequency and bandwidth in Hz.
    pub fn from_hz(f0: f64, bandwidth: f64) -> Self {
        Self::new(2.0 * PI * f0, bandwidth)
    }

    /// 6 Hz central frequency, 4 Hz bandwidth.
    pub fn standard() -> Self {
        Self::from_hz(6.0, 4.0)
    }

    fn sigma(&self) -> f64 {
        2.0 * PI * self.bandwidth
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = self.sigma();
        (self.omega0 * t).cos() * (-0.5 * s * s * t * t).exp()
    }

    /// `f'(t)`, `f''(t)`, `f'''(t)` from `Re[p^k-polynomials · e^{iω₀t - σ²t²/2}]`.
    fn derivatives(&self, t: f64) -> [f64; 3] {
        let s2 = self.sigma().powi(2);
        let env = (-0.5 * s2 * t * t).exp();
        let (sin, cos) = (self.omega0 * t).sin_cos();
        // p = iω₀ - σ² t
        let p = (-s2 * t, self.omega0);
        let mul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
        let p2 = mul(p, p);
        let p3 = mul(p2, p);
        let d1 = p;
        let d2 = (p2.0 - s2, p2.1);
        let d3 = (p3.0 - 3.0 * s2 * p.0, p3.1 - 3.0 * s2 * p.1);
        // Re[(a + ib)(cos + i sin)] = a cos - b sin
        let re = |d: (f64, f64)| env * (d.0 * cos - d.1 * sin);
        [re(d1), re(d2), re(d3)]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.derivatives(t)[0]
    }

    pub fn third_derivative(&self, t: f64) -> f64 {
        self.derivatives(t)[2]
    }

    pub fn spectrum(&self, omega: f64) -> f64 {
        let s = self.sigma();
        let g = |w: f64| (-(w * w) / (2.0 * s * s)).exp();
        (2.0 * PI).sqrt() / (2.0 * s) * (g(omega - self.omega0) + g(omega + self.omega0))
    }

    /// Essential angular frequency `ω₀ + 2πB`.
    pub fn essential_frequency(&self) -> f64 {
        self.omega0 + self.sigma()
    }

    /// Nyquist sampling interval `π / ω_ess`.
    pub fn nyquist_tau(&self) -> f64 {
        PI / self.essential_frequency()
    }

    /// Default sampling interval, 0.9 of the Nyquist interval.
    pub fn default_tau(&self) -> f64 {
        0.9 * self.nyquist_tau()
    }
}

/// Spectral weight applied to the sensor function to form the initial states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceFilter {
    /// `f̂ ≡ 1`.
    Flat,
    Pulse(Pulse),
}

impl SourceFilter {
    /// `f̂^{1/2}(√λ)` for an eigenvalue `λ ≥ 0` of the operator.
    pub fn sqrt_spectrum_at_eigenvalue(&self, lambda: f64) -> f64 {
        match self {
            SourceFilter::Flat => 1.0,
            SourceFilter::Pulse(p) => p.spectrum(lambda.max(0.0).sqrt()).sqrt(),
        }
    }

    pub fn pulse(&self) -> Option<&Pulse> {
        match self {
            SourceFilter::Pulse(p) => Some(p),
            SourceFilter::Flat => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    #[test]
    fn even_and_nonnegative_spectrum() {
        let p = Pulse::standard();
        for i in 0..200 {
            let t = i as f64 * 0.003;
            assert_eq!(p.value(t), p.value(-t));
            assert!(p.spectrum(i as f64 * 1.7) >= 0.0);
        }
        assert!((p.essential_frequency() / (2.0 * PI) - 10.0).abs() < 1e-12);
        assert!((p.value(p.tf) / p.value(0.0)).abs() <= 1.0001e-8);
    }

    #[test]
    fn closed_form_spectrum_matches_fft() {
        let p = Pulse::standard();
        let dt = 1e-3;
        let n = 8192;
        // Samples on t = (k - n/2) dt, shifted so t = 0 is index 0.
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|k| {
                let t = if k < n / 2 { k as f64 * dt } else { (k as f64 - n as f64) * dt };
                Complex::new(p.value(t), 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let peak = p.spectrum(p.omega0);
        for (k, z) in buf.iter().enumerate().take(400) {
            let omega = 2.0 * PI * k as f64 / (n as f64 * dt);
            let approx = z.re * dt;
            assert!((approx - p.spectrum(omega)).abs() < 1e-6 * peak, "k = {k}");
            assert!(z.im.abs() * dt < 1e-9);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = Pulse::standard();
        let h = 1e-5;
        for i in -20..=20 {
            let t = i as f64 * 0.01;
            let fd1 = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
            assert!((fd1 - p.derivative(t)).abs() < 1e-5 * 100.0);
            let d2 = |t: f64| p.derivatives(t)[1];
            let fd3 = (d2(t + h) - d2(t - h)) / (2.0 * h);
            assert!((fd3 - p.third_derivative(t)).abs() < 1e-6 * p.omega0.powi(3));
            let fd2 = (p.derivative(t + h) - p.derivative(t - h)) / (2.0 * h);
            assert!((fd2 - d2(t)).abs() < 1e-6 * p.omega0.powi(2));
        }
    }
}
