use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::operator::DiscreteOperator;
use super::propagate::{
    cosine_recurrence_from, cosine_series, eigen_of, initial_states, sensor_sources, PropagationMethod,
};
use super::pulse::SourceFilter;
use super::sensors::SensorArray;
use crate::exec::{self, Parallelism};
use crate::io;
use crate::linalg;
use crate::model::{file_name, VelocityModel};
use crate::{Error, Result};

/// Sampled even-time data `D_j`, `D̈_j`, `j = 0..=2n-2`, each `m × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub d: Vec<Mat<f64>>,
    pub ddot: Vec<Mat<f64>>,
    pub tau: f64,
    pub m: usize,
    pub n: usize,
}

const DATASET_FORMAT: &str = "romvel-dataset-v1";

#[derive(Serialize, Deserialize)]
struct DataSetHeader {
    format: String,
    m: usize,
    n: usize,
    tau: f64,
    data: String,
}

impl DataSet {
    pub fn new(d: Vec<Mat<f64>>, ddot: Vec<Mat<f64>>, tau: f64, n: usize) -> Result<Self> {
        if n == 0 || d.len() != 2 * n - 1 || ddot.len() != 2 * n - 1 {
            return Err(Error::InvalidParameter(format!(
                "need 2n-1 = {} samples of D and D̈, got {} and {}",
                (2 * n).saturating_sub(1),
                d.len(),
                ddot.len()
            )));
        }
        let m = d[0].nrows();
        if d.iter().chain(&ddot).any(|x| x.nrows() != m || x.ncols() != m) {
            return Err(Error::InvalidParameter("data samples must all be m × m".into()));
        }
        Ok(Self { d, ddot, tau, m, n })
    }

    /// The first `2k - 1` samples, i.e. the data a `k`-block ROM depends on.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.n {
            return Err(Error::IndexOutOfRange { k, n: self.n });
        }
        Self::new(self.d[..2 * k - 1].to_vec(), self.ddot[..2 * k - 1].to_vec(), self.tau, k)
    }

    /// Relabels sensors: new sensor `i` is old sensor `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = |x: &Mat<f64>| Mat::from_fn(self.m, self.m, |i, j| x[(perm[i], perm[j])]);
        Self { d: self.d.iter().map(p).collect(), ddot: self.ddot.iter().map(p).collect(), ..*self }
    }

    pub fn write(&self, header: &Path) -> Result<()> {
        let payload = io::payload_path(header);
        io::write_json(
            header,
            &DataSetHeader {
                format: DATASET_FORMAT.into(),
                m: self.m,
                n: self.n,
                tau: self.tau,
                data: file_name(&payload),
            },
        )?;
        let mut flat = Vec::with_capacity(2 * (2 * self.n - 1) * self.m * self.m);
        for x in self.d.iter().chain(&self.ddot) {
            flat.extend(linalg::to_row_major(x.as_ref()));
        }
        io::write_f64_le(&payload, &flat)
    }

    pub fn read(header: &Path) -> Result<Self> {
        let h: DataSetHeader = io::read_json(header)?;
        io::expect_format(header, &h.format, DATASET_FORMAT)?;
        if h.n == 0 || h.m == 0 {
            return Err(Error::Format { path: header.display().to_string(), reason: "m and n must be positive".into() });
        }
        let count = 2 * h.n - 1;
        let block = h.m * h.m;
        let payload = header.parent().unwrap_or(Path::new(".")).join(&h.data);
        let flat = io::read_f64_le(&payload, 2 * count * block)?;
        let mats: Vec<Mat<f64>> =
            flat.chunks_exact(block).map(|c| linalg::from_row_major(h.m, h.m, c)).collect();
        let (d, ddot) = mats.split_at(count);
        Self::new(d.to_vec(), ddot.to_vec(), h.tau, h.n)
    }
}

/// What to do when `τ` exceeds the Nyquist interval of the pulse.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NyquistPolicy {
    #[default]
    Warn,
    Error,
}

/// Everything besides the velocity that determines a data set: sensors,
/// source, sampling, and how the operator functions are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub sensors: SensorArray,
    pub filter: SourceFilter,
    pub tau: f64,
    pub n: usize,
    #[serde(default)]
    pub method: PropagationMethod,
    #[serde(default)]
    pub nyquist: NyquistPolicy,
    #[serde(default)]
    pub parallelism: Parallelism,
}

impl Acquisition {
    pub fn check_sampling(&self) -> Result<()> {
        if !(self.tau > 0.0) || self.n == 0 {
            return Err(Error::InvalidParameter(format!("need tau > 0 and n ≥ 1 (tau = {}, n = {})", self.tau, self.n)));
        }
        if let Some(p) = self.filter.pulse() {
            let limit = p.nyquist_tau();
            if self.tau > limit {
                match self.nyquist {
                    NyquistPolicy::Error => return Err(Error::NyquistViolation { tau: self.tau, limit }),
                    NyquistPolicy::Warn => {
                        log::warn!("tau = {} s exceeds the Nyquist interval {} s", self.tau, limit)
                    }
                }
            }
        }
        Ok(())
    }

    /// Full data set (`2n - 1` samples) for velocity `v`.
    pub fn dataset(&self, v: &VelocityModel) -> Result<DataSet> {
        self.dataset_blocks(v, self.n)
    }

    /// Data for a `k`-block ROM (`2k - 1` samples); identical to the first
    /// samples of [`Acquisition::dataset`].
    pub fn dataset_blocks(&self, v: &VelocityModel, k: usize) -> Result<DataSet> {
        self.check_sampling()?;
        let op = DiscreteOperator::new(v.clone());
        let (d, ddot) = raw_samples(&op, self, 2 * k - 1)?;
        DataSet::new(
            d.iter().map(linalg::symmetrize).collect(),
            ddot.iter().map(linalg::symmetrize).collect(),
            self.tau,
            k,
        )
    }

    /// Like [`Acquisition::dataset`] for a prepared operator (for example one
    /// carrying its eigendecomposition).
    pub fn dataset_for_operator(&self, op: &DiscreteOperator) -> Result<DataSet> {
        self.check_sampling()?;
        let (d, ddot) = raw_samples(op, self, 2 * self.n - 1)?;
        DataSet::new(
            d.iter().map(linalg::symmetrize).collect(),
            ddot.iter().map(linalg::symmetrize).collect(),
            self.tau,
            self.n,
        )
    }
}

/// `D_j = ⟨u_0, u_j⟩`, `D̈_j = -⟨u_0, A u_j⟩` with quadrature weight
/// `hx·hz`, before symmetrization.
pub(crate) fn raw_samples(
    op: &DiscreteOperator,
    acq: &Acquisition,
    count: usize,
) -> Result<(Vec<Mat<f64>>, Vec<Mat<f64>>)> {
    let w = op.grid().cell_area();
    let par = acq.parallelism;
    match acq.method {
        PropagationMethod::Spectral => {
            let eig = eigen_of(op)?;
            // Coordinates of the initial states in the eigenbasis.
            let mut a = eig.vectors.transpose() * sensor_sources(op, &acq.sensors)?;
            if acq.filter != SourceFilter::Flat {
                for (i, &l) in eig.values.iter().enumerate() {
                    let g = acq.filter.sqrt_spectrum_at_eigenvalue(l);
                    for s in 0..a.ncols() {
                        a[(i, s)] *= g;
                    }
                }
            }
            let m = a.ncols();
            let lam = &eig.values;
            let sample = |j: usize, with_lambda: bool| {
                let mut out = Mat::zeros(m, m);
                for (i, &l) in lam.iter().enumerate() {
                    let l = l.max(0.0);
                    let mut c = (j as f64 * acq.tau * l.sqrt()).cos();
                    if with_lambda {
                        c *= -l;
                    }
                    for s in 0..m {
                        let as_ = c * a[(i, s)];
                        for r in 0..m {
                            out[(r, s)] += a[(i, r)] * as_;
                        }
                    }
                }
                for x in out.col_iter_mut() {
                    for v in x.iter_mut() {
                        *v *= w;
                    }
                }
                out
            };
            let d = exec::map_indexed(count, par, |j| sample(j, false));
            let ddot = exec::map_indexed(count, par, |j| sample(j, true));
            Ok((d, ddot))
        }
        PropagationMethod::Chebyshev => {
            let u0 = initial_states(op, &acq.sensors, &acq.filter, acq.method, par)?;
            let m = u0.ncols();
            let au0: Vec<Vec<f64>> = exec::map_indexed(m, par, |s| op.apply_vec(u0.col_as_slice(s)));
            let cos = cosine_series(op, acq.tau);
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            // Column s of every sample, computed per source.
            let columns = exec::map_indexed(m, par, |s| {
                let mut d = vec![vec![0.0; m]; count];
                let mut dd = vec![vec![0.0; m]; count];
                let mut record = |j: usize, u: &[f64]| {
                    for r in 0..m {
                        d[j][r] = w * dot(u0.col_as_slice(r), u);
                        dd[j][r] = -w * dot(&au0[r], u);
                    }
                };
                record(0, u0.col_as_slice(s));
                cosine_recurrence_from(&cos, op, u0.col_as_slice(s), count, &mut record);
                (d, dd)
            });
            let d = (0..count).map(|j| Mat::from_fn(m, m, |r, s| columns[s].0[j][r])).collect();
            let ddot = (0..count).map(|j| Mat::from_fn(m, m, |r, s| columns[s].1[j][r])).collect();
            Ok((d, ddot))
        }
    }
}

/// Data set for velocity `v` with the given acquisition parameters.
pub fn synthesize_dataset(
    v: &VelocityModel,
    sensors: &SensorArray,
    filter: &SourceFilter,
    tau: f64,
    n: usize,
    method: PropagationMethod,
) -> Result<DataSet> {
    Acquisition {
        sensors: sensors.clone(),
        filter: *filter,
        tau,
        n,
        method,
        nyquist: NyquistPolicy::Warn,
        parallelism: Parallelism::Parallel,
    }
    .dataset(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{propagate_snapshots, Pulse};
    use crate::model::{BoundaryConditions, Camembert, Grid2D};

    fn small_setup(method: PropagationMethod) -> (DiscreteOperator, Acquisition) {
        let g = Grid2D::covering(2000.0, 2500.0, 100.0).unwrap();
        let v = Camembert::default().build(g, BoundaryConditions::dirichlet()).unwrap();
        let sensors = SensorArray::line(&g, 3, 200.0, 100.0).unwrap();
        let pulse = Pulse::standard();
        let acq = Acquisition {
            sensors,
            filter: SourceFilter::Pulse(pulse),
            tau: pulse.default_tau(),
            n: 4,
            method,
            nyquist: NyquistPolicy::Error,
            parallelism: Parallelism::Parallel,
        };
        (DiscreteOperator::new(v).with_eigen().unwrap(), acq)
    }

    #[test]
    fn spectral_samples_are_symmetric_before_symmetrization() {
        let (op, acq) = small_setup(PropagationMethod::Spectral);
        let (d, dd) = raw_samples(&op, &acq, 7).unwrap();
        for x in d.iter().chain(&dd) {
            assert!(linalg::asymmetry(x.as_ref()) < 1e-10);
        }
        let ev = linalg::sym_eigenvalues(d[0].as_ref()).unwrap();
        assert!(ev[0] > -1e-12 * ev[ev.len() - 1]);
        assert!((0..3).all(|i| d[0][(i, i)] > 0.0));
    }

    #[test]
    fn chebyshev_and_spectral_paths_agree() {
        let (op, acq) = small_setup(PropagationMethod::Spectral);
        let a = acq.dataset_for_operator(&op).unwrap();
        let cheb = Acquisition { method: PropagationMethod::Chebyshev, ..acq };
        let b = cheb.dataset_for_operator(&op).unwrap();
        for j in 0..7 {
            assert!(linalg::rel_diff(b.d[j].as_ref(), a.d[j].as_ref()) < 1e-10, "D_{j}");
            assert!(linalg::rel_diff(b.ddot[j].as_ref(), a.ddot[j].as_ref()) < 1e-10, "D̈_{j}");
        }
    }

    #[test]
    fn samples_match_snapshot_inner_products() {
        let (op, acq) = small_setup(PropagationMethod::Spectral);
        let ds = acq.dataset_for_operator(&op).unwrap();
        let u0 = initial_states(&op, &acq.sensors, &acq.filter, acq.method, acq.parallelism).unwrap();
        let snaps = propagate_snapshots(&op, &u0, acq.tau, 7, acq.method, acq.parallelism).unwrap();
        let w = op.grid().cell_area();
        for j in 0..7 {
            let direct = linalg::scaled(&(u0.transpose() * &snaps.blocks[j]), w);
            assert!(linalg::rel_diff(direct.as_ref(), ds.d[j].as_ref()) < 1e-10);
        }
        // Cauchy–Schwarz bound from D_0.
        let lmax = *linalg::sym_eigenvalues(ds.d[0].as_ref()).unwrap().last().unwrap();
        for x in &ds.d {
            for j in 0..3 {
                for i in 0..3 {
                    assert!(x[(i, j)].abs() <= lmax * (1.0 + 1e-10));
                }
            }
        }
    }

    #[test]
    fn truncation_and_round_trip() {
        let (op, acq) = small_setup(PropagationMethod::Spectral);
        let ds = acq.dataset_for_operator(&op).unwrap();
        let t = ds.truncated(2).unwrap();
        assert_eq!(t.d.len(), 3);
        assert_eq!(t.d[2], ds.d[2]);
        assert!(matches!(ds.truncated(5), Err(Error::IndexOutOfRange { .. })));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        ds.write(&path).unwrap();
        assert_eq!(DataSet::read(&path).unwrap(), ds);
    }

    #[test]
    fn nyquist_policy() {
        let (_, acq) = small_setup(PropagationMethod::Chebyshev);
        let bad = Acquisition { tau: 0.06, ..acq.clone() };
        assert!(matches!(bad.check_sampling(), Err(Error::NyquistViolation { .. })));
        let warn = Acquisition { nyquist: NyquistPolicy::Warn, ..bad };
        assert!(warn.check_sampling().is_ok());
    }
}
