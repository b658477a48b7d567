use std::borrow::Cow;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::chebyshev::{ChebyshevSeries, DEFAULT_TOLERANCE};
use super::operator::{DiscreteOperator, Eigen, SPECTRAL_DIM_CAP};
use super::pulse::SourceFilter;
use super::sensors::SensorArray;
use crate::exec::{self, Parallelism};
use crate::linalg;
use crate::{Error, Result};

/// How functions of the operator (`f̂^{1/2}(√A)`, `cos(τ√A)`) are applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationMethod {
    /// Dense eigendecomposition; exact up to round-off. Capped at
    /// [`SPECTRAL_DIM_CAP`] unknowns.
    Spectral,
    /// Chebyshev series in the operator plus the three-term cosine
    /// recurrence `u_{j+1} = 2 cos(τ√A) u_j - u_{j-1}`.
    #[default]
    Chebyshev,
}

/// Wavefield snapshots `u_j = cos(jτ√A) u_0`; block `j` is `n_dof × m`.
#[derive(Debug, Clone)]
pub struct Snapshots {
    pub blocks: Vec<Mat<f64>>,
}

impl Snapshots {
    pub fn count(&self) -> usize {
        self.blocks.len()
    }

    /// First `n` blocks side by side: the `n_dof × nm` matrix `U`.
    pub fn stacked(&self, n: usize) -> Mat<f64> {
        let rows = self.blocks[0].nrows();
        let m = self.blocks[0].ncols();
        Mat::from_fn(rows, n * m, |i, c| self.blocks[c / m][(i, c % m)])
    }
}

pub(crate) fn eigen_of(op: &DiscreteOperator) -> Result<Cow<'_, Eigen>> {
    match op.eigen() {
        Some(e) => Ok(Cow::Borrowed(e)),
        None if op.dim() > SPECTRAL_DIM_CAP => Err(Error::EigUnavailable { dim: op.dim(), cap: SPECTRAL_DIM_CAP }),
        None => {
            let (values, vectors) = linalg::sym_eigen(op.to_dense().as_ref())?;
            Ok(Cow::Owned(Eigen { values, vectors }))
        }
    }
}

/// `θ(x - x_s) / c(x_s)` for every sensor, as columns.
pub(crate) fn sensor_sources(op: &DiscreteOperator, arr: &SensorArray) -> Result<Mat<f64>> {
    let g = op.grid();
    arr.check_inside(g)?;
    let cs = arr.velocities(op.velocity());
    let mut b = Mat::zeros(g.len(), arr.len());
    for s in 0..arr.len() {
        let th = arr.theta(g, s)?;
        for (k, t) in th.iter().enumerate() {
            b[(k, s)] = t / cs[s];
        }
    }
    Ok(b)
}

pub(crate) fn apply_columns(
    series: &ChebyshevSeries,
    op: &DiscreteOperator,
    x: &Mat<f64>,
    par: Parallelism,
) -> Mat<f64> {
    let cols = exec::map_indexed(x.ncols(), par, |s| series.apply(|u, y| op.apply(u, y), x.col_as_slice(s)));
    Mat::from_fn(x.nrows(), x.ncols(), |i, s| cols[s][i])
}

pub(crate) fn filter_series(op: &DiscreteOperator, filter: &SourceFilter) -> ChebyshevSeries {
    let f = *filter;
    ChebyshevSeries::fit(move |l| f.sqrt_spectrum_at_eigenvalue(l), 0.0, op.spectral_bound(), DEFAULT_TOLERANCE)
}

pub(crate) fn cosine_series(op: &DiscreteOperator, tau: f64) -> ChebyshevSeries {
    ChebyshevSeries::fit(move |l| (tau * l.max(0.0).sqrt()).cos(), 0.0, op.spectral_bound(), DEFAULT_TOLERANCE)
}

/// Initial states `u_0^{(s)} = f̂^{1/2}(√A) θ(x - x_s) / c(x_s)`, one column
/// per sensor.
pub fn initial_states(
    op: &DiscreteOperator,
    arr: &SensorArray,
    filter: &SourceFilter,
    method: PropagationMethod,
    par: Parallelism,
) -> Result<Mat<f64>> {
    let b = sensor_sources(op, arr)?;
    if *filter == SourceFilter::Flat {
        return Ok(b);
    }
    match method {
        PropagationMethod::Spectral => {
            let eig = eigen_of(op)?;
            let q = &eig.vectors;
            let mut a = q.transpose() * &b;
            for (i, &l) in eig.values.iter().enumerate() {
                let w = filter.sqrt_spectrum_at_eigenvalue(l);
                for s in 0..a.ncols() {
                    a[(i, s)] *= w;
                }
            }
            Ok(q * &a)
        }
        PropagationMethod::Chebyshev => Ok(apply_columns(&filter_series(op, filter), op, &b, par)),
    }
}

/// Snapshots `u_j = cos(jτ√A) u_0` for `j = 0..count`.
pub fn propagate_snapshots(
    op: &DiscreteOperator,
    u0: &Mat<f64>,
    tau: f64,
    count: usize,
    method: PropagationMethod,
    par: Parallelism,
) -> Result<Snapshots> {
    if !(tau > 0.0) || count == 0 {
        return Err(Error::InvalidParameter(format!("need tau > 0 and count ≥ 1 (tau = {tau}, count = {count})")));
    }
    match method {
        PropagationMethod::Spectral => {
            let eig = eigen_of(op)?;
            let q = &eig.vectors;
            let a = q.transpose() * u0;
            let blocks = exec::map_indexed(count, par, |j| {
                let mut aj = a.clone();
                for (i, &l) in eig.values.iter().enumerate() {
                    let c = (j as f64 * tau * l.max(0.0).sqrt()).cos();
                    for s in 0..aj.ncols() {
                        aj[(i, s)] *= c;
                    }
                }
                q * &aj
            });
            Ok(Snapshots { blocks })
        }
        PropagationMethod::Chebyshev => {
            let cos = cosine_series(op, tau);
            let per_source = exec::map_indexed(u0.ncols(), par, |s| {
                let mut out = Vec::with_capacity(count);
                out.push(u0.col_as_slice(s).to_vec());
                cosine_recurrence_from(&cos, op, u0.col_as_slice(s), count, |_, u| out.push(u.to_vec()));
                out
            });
            let blocks = (0..count)
                .map(|j| Mat::from_fn(u0.nrows(), u0.ncols(), |i, s| per_source[s][j][i]))
                .collect();
            Ok(Snapshots { blocks })
        }
    }
}

/// Runs `u_1 = C u_0`, `u_{j+1} = 2 C u_j - u_{j-1}` for `j < count`,
/// calling `visit(j, u_j)` for every `j ≥ 1`.
pub(crate) fn cosine_recurrence_from(
    cos: &ChebyshevSeries,
    op: &DiscreteOperator,
    u0: &[f64],
    count: usize,
    mut visit: impl FnMut(usize, &[f64]),
) {
    if count < 2 {
        return;
    }
    let mut prev = u0.to_vec();
    let mut cur = cos.apply(|u, y| op.apply(u, y), &prev);
    visit(1, &cur);
    for j in 2..count {
        let cu = cos.apply(|u, y| op.apply(u, y), &cur);
        for i in 0..prev.len() {
            prev[i] = 2.0 * cu[i] - prev[i];
        }
        std::mem::swap(&mut prev, &mut cur);
        visit(j, &cur);
    }
}
