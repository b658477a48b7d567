//! Time-stepped measurements and their conversion to sampled even-time data.

use std::path::Path;

use faer::Mat;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::dataset::DataSet;
use super::operator::DiscreteOperator;
use super::propagate::sensor_sources;
use super::pulse::Pulse;
use super::sensors::SensorArray;
use crate::exec::{self, Parallelism};
use crate::linalg;
use crate::model::VelocityModel;
use crate::{Error, Result};

/// Explicit time integrator for `w_tt + A w = C⁻¹ θ_s f'(t)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeScheme {
    /// Second-order central differences.
    Leapfrog,
    /// Central differences with the fourth-order modified-equation
    /// correction `dt⁴/12 · w_tttt`.
    #[default]
    Leapfrog4,
}

impl TimeScheme {
    /// Largest stable `dt·√λ_max`.
    fn stability_limit(self) -> f64 {
        match self {
            TimeScheme::Leapfrog => 2.0,
            TimeScheme::Leapfrog4 => 12f64.sqrt(),
        }
    }
}

/// Receiver traces `𝓜^{(r,s)}(t_k)`, `t_k = t0 + k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Traces {
    pub t0: f64,
    pub dt: f64,
    pub m: usize,
    pub samples: usize,
    data: Vec<f64>,
}

impl Traces {
    pub fn trace(&self, r: usize, s: usize) -> &[f64] {
        let start = (r * self.m + s) * self.samples;
        &self.data[start..start + self.samples]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.samples - 1)
    }

    /// Index of the sample at `t`, if `t` falls on the time grid.
    fn index_of(&self, t: f64) -> Option<usize> {
        let f = (t - self.t0) / self.dt;
        let k = f.round();
        ((f - k).abs() < 1e-6 && k >= 0.0 && (k as usize) < self.samples).then_some(k as usize)
    }

    /// CSV with columns `t, r, s, value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "r", "s", "value"])?;
        for r in 0..self.m {
            for s in 0..self.m {
                for (k, v) in self.trace(r, s).iter().enumerate() {
                    w.write_record(&[
                        format!("{:.9}", self.time(k)),
                        r.to_string(),
                        s.to_string(),
                        format!("{v:e}"),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Time steps `w_{k+1} = 2w_k - w_{k-1} + dt²(s_k - A w_k) [+ dt⁴/12 (A(A w_k - s_k) + s''_k)]`
/// from rest at `t0 = -⌈t_f/dt⌉·dt`, with `p = C w` recorded as
/// `𝓜^{(r,s)}(t) = ∫ θ(x - x_r) p^{(s)}(t, x) dx` until `t_end`.
pub fn synthesize_measurements(
    v: &VelocityModel,
    sensors: &SensorArray,
    pulse: &Pulse,
    t_end: f64,
    dt: f64,
    scheme: TimeScheme,
    par: Parallelism,
) -> Result<Traces> {
    let op = DiscreteOperator::new(v.clone());
    let limit = scheme.stability_limit() / op.spectral_bound().sqrt();
    if !(dt > 0.0) || dt > limit {
        return Err(Error::CflViolation { dt, limit });
    }
    let g = *v.grid();
    let m = sensors.len();
    let b = sensor_sources(&op, sensors)?;
    // Receiver weights w_area · θ_r ⊙ c.
    let c = v.values();
    let receivers: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let th = sensors.theta(&g, r)?;
            Ok(th.iter().zip(c).map(|(t, ck)| g.cell_area() * t * ck).collect())
        })
        .collect::<Result<_>>()?;
    let k0 = (pulse.tf / dt).ceil() as usize;
    let t0 = -(k0 as f64) * dt;
    let samples = k0 + (t_end / dt).ceil() as usize + 1;
    let n = g.len();
    let dt2 = dt * dt;
    let per_source: Vec<Vec<Vec<f64>>> = exec::map_indexed(m, par, |s| {
        let bs = b.col_as_slice(s);
        let mut prev = vec![0.0; n];
        let mut cur = vec![0.0; n];
        let mut aw = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut a2 = vec![0.0; n];
        let mut out = vec![Vec::with_capacity(samples); m];
        for k in 0..samples {
            for r in 0..m {
                out[r].push(receivers[r].iter().zip(&cur).map(|(a, b)| a * b).sum::<f64>());
            }
            if k + 1 == samples {
                break;
            }
            let t = t0 + k as f64 * dt;
            let f1 = pulse.derivative(t);
            op.apply(&cur, &mut aw);
            match scheme {
                TimeScheme::Leapfrog => {
                    for i in 0..n {
                        prev[i] = 2.0 * cur[i] - prev[i] + dt2 * (f1 * bs[i] - aw[i]);
                    }
                }
                TimeScheme::Leapfrog4 => {
                    let f3 = pulse.third_derivative(t);
                    for i in 0..n {
                        tmp[i] = aw[i] - f1 * bs[i];
                    }
                    op.apply(&tmp, &mut a2);
                    let c4 = dt2 * dt2 / 12.0;
                    for i in 0..n {
                        prev[i] = 2.0 * cur[i] - prev[i] - dt2 * tmp[i] + c4 * (a2[i] + f3 * bs[i]);
                    }
                }
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        out
    });
    let mut data = Vec::with_capacity(m * m * samples);
    for r in 0..m {
        for src in per_source.iter() {
            data.extend_from_slice(&src[r]);
        }
    }
    Ok(Traces { t0, dt, m, samples, data })
}

/// Second time derivative of samples `x(k·dt)`, `k = 0..N`, of an even
/// function, by FFT of the even extension. The last `taper` fraction of the
/// record is first rolled off with a raised cosine.
pub fn fourier_second_derivative(x: &[f64], dt: f64, taper: f64) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 2);
    let mut y = x.to_vec();
    let t_end = (n - 1) as f64 * dt;
    let t_a = (1.0 - taper) * t_end;
    if taper > 0.0 {
        for (k, v) in y.iter_mut().enumerate() {
            let t = k as f64 * dt;
            if t > t_a {
                *v *= 0.5 * (1.0 + (std::f64::consts::PI * (t - t_a) / (t_end - t_a)).cos());
            }
        }
    }
    let p = 2 * (n - 1);
    let mut buf: Vec<Complex<f64>> = (0..p).map(|k| Complex::new(if k < n { y[k] } else { y[p - k] }, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(p).process(&mut buf);
    let period = p as f64 * dt;
    for (k, z) in buf.iter_mut().enumerate() {
        let kk = if k <= p / 2 { k as f64 } else { k as f64 - p as f64 };
        let omega = 2.0 * std::f64::consts::PI * kk / period;
        *z *= -omega * omega;
    }
    planner.plan_fft_inverse(p).process(&mut buf);
    buf[..n].iter().map(|z| z.re / p as f64).collect()
}

/// Default fraction of the record rolled off before Fourier differentiation.
pub const DEFAULT_TAPER: f64 = 0.1;

/// `D^{(r,s)}(t) = [𝓜^{(r,s)}(t) + 𝓜^{(r,s)}(-t)] / (c(x_r) c(x_s))`, its
/// second derivative by Fourier differentiation, both sampled at `jτ`.
pub fn symmetrize_and_sample(
    traces: &Traces,
    sensors: &SensorArray,
    v: &VelocityModel,
    tau: f64,
    n: usize,
    taper: f64,
) -> Result<DataSet> {
    let m = traces.m;
    if sensors.len() != m {
        return Err(Error::InvalidParameter(format!("{} sensors for {m}×{m} traces", sensors.len())));
    }
    let zero = traces
        .index_of(0.0)
        .ok_or_else(|| Error::InvalidParameter("t = 0 is not on the trace time grid".into()))?;
    let ratio = (tau / traces.dt).round();
    if ratio < 1.0 || (ratio * traces.dt - tau).abs() > 1e-9 * tau {
        return Err(Error::InvalidParameter(format!("tau = {tau} is not a multiple of dt = {}", traces.dt)));
    }
    let stride = ratio as usize;
    let last = (2 * n - 2) * stride;
    let available = traces.end_time();
    let needed = (2 * n - 2) as f64 * tau / (1.0 - taper);
    if available + 1e-12 < needed {
        return Err(Error::InsufficientRecordLength { needed, available });
    }
    let len = traces.samples - zero;
    debug_assert!(last < len);
    let cs = sensors.velocities(v);
    let count = 2 * n - 1;
    let mut d = vec![Mat::zeros(m, m); count];
    let mut ddot = vec![Mat::zeros(m, m); count];
    for r in 0..m {
        for s in 0..m {
            let tr = traces.trace(r, s);
            let even: Vec<f64> = (0..len)
                .map(|k| {
                    let neg = if k <= zero { tr[zero - k] } else { 0.0 };
                    (tr[zero + k] + neg) / (cs[r] * cs[s])
                })
                .collect();
            let second = fourier_second_derivative(&even, traces.dt, taper);
            for j in 0..count {
                d[j][(r, s)] = even[j * stride];
                ddot[j][(r, s)] = second[j * stride];
            }
        }
    }
    DataSet::new(
        d.iter().map(linalg::symmetrize).collect(),
        ddot.iter().map(linalg::symmetrize).collect(),
        tau,
        n,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundaryConditions, Grid2D};
    use std::f64::consts::PI;

    #[test]
    fn second_derivative_of_periodic_cosine() {
        let n = 1025;
        let dt = 1e-3;
        let period = 2.0 * (n - 1) as f64 * dt;
        let w = 2.0 * PI * 7.0 / period;
        let x: Vec<f64> = (0..n).map(|k| (w * k as f64 * dt).cos()).collect();
        let d2 = fourier_second_derivative(&x, dt, 0.0);
        for k in 0..n {
            assert!((d2[k] + w * w * x[k]).abs() < 1e-8 * w * w);
        }
    }

    #[test]
    fn even_trace_symmetrizes_to_scaled_copy() {
        let dt = 0.001;
        let tf = 0.05;
        let k0 = 50;
        let samples = 400;
        let shape = |t: f64| (-(t * t) / 0.01).exp();
        let data: Vec<f64> = (0..samples).map(|k| shape((k as f64 - k0 as f64) * dt)).collect();
        let traces = Traces { t0: -tf, dt, m: 1, samples, data };
        let g = Grid2D::covering(1000.0, 1000.0, 50.0).unwrap();
        let v = VelocityModel::constant(g, BoundaryConditions::dirichlet(), 2.0).unwrap();
        let sensors = SensorArray::new(vec![[500.0, 500.0]], 50.0).unwrap();
        let ds = symmetrize_and_sample(&traces, &sensors, &v, 0.01, 4, 0.0).unwrap();
        for j in 0..7 {
            let t = j as f64 * 0.01;
            let expected = if t <= tf { 2.0 * shape(t) } else { shape(t) } / 4.0;
            // Inside (0, t_f] the negative-time half is also read from the record.
            let expected = if t <= tf { expected } else { shape(t) / 4.0 };
            assert!((ds.d[j][(0, 0)] - expected).abs() < 1e-12, "j = {j}");
        }
        assert!(matches!(
            symmetrize_and_sample(&traces, &sensors, &v, 0.01, 40, 0.1),
            Err(Error::InsufficientRecordLength { .. })
        ));
    }

    #[test]
    fn unstable_time_step_is_rejected() {
        let g = Grid2D::covering(1000.0, 1000.0, 50.0).unwrap();
        let v = VelocityModel::constant(g, BoundaryConditions::dirichlet(), 3000.0).unwrap();
        let sensors = SensorArray::line(&g, 2, 200.0, 50.0).unwrap();
        let r = synthesize_measurements(&v, &sensors, &Pulse::standard(), 0.1, 0.05, TimeScheme::Leapfrog, Parallelism::Sequential);
        assert!(matches!(r, Err(Error::CflViolation { .. })));
    }

    #[test]
    fn reciprocity_and_causality() {
        let g = Grid2D::covering(2000.0, 1500.0, 50.0).unwrap();
        let v = VelocityModel::from_fn(g, BoundaryConditions::dirichlet(), |_, z| if z > 700.0 { 3000.0 } else { 2000.0 })
            .unwrap();
        let sensors = SensorArray::new(vec![[300.0, 200.0], [1700.0, 200.0]], 50.0).unwrap();
        let pulse = Pulse::standard();
        let tr = synthesize_measurements(&v, &sensors, &pulse, 1.2, 1e-3, TimeScheme::Leapfrog4, Parallelism::Parallel)
            .unwrap();
        let a = tr.trace(0, 1);
        let b = tr.trace(1, 0);
        let peak = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-6 * peak);
        }
        // Direct arrival over 1400 m needs at least 1400 / 3000 s minus the pulse half-width.
        let first = 1400.0 / v.max() - pulse.tf;
        for (k, x) in a.iter().enumerate() {
            if tr.time(k) < first {
                assert!(x.abs() < 1e-6 * peak, "t = {}", tr.time(k));
            }
        }
    }
}
