//! ROM misfit and conventional data misfit, with their residual vectors.

use serde::{Deserialize, Serialize};

use crate::forward::{Acquisition, DataSet};
use crate::model::VelocityModel;
use crate::rom::{self, OperatorRom, RomOptions};
use crate::{Error, Result};

/// Residual vector and its squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub residual: Vec<f64>,
}

impl Evaluation {
    pub fn from_residual(residual: Vec<f64>) -> Self {
        Self { objective: residual.iter().map(|r| r * r).sum(), residual }
    }
}

/// Band depth `d`, restriction size `k` and the measured ROM.
#[derive(Debug, Clone)]
pub struct RomResidualSpec {
    pub d: usize,
    pub k: usize,
    pub reference: OperatorRom,
}

impl RomResidualSpec {
    pub fn new(d: usize, k: usize, reference: OperatorRom) -> Result<Self> {
        if k == 0 || k > reference.n {
            return Err(Error::IndexOutOfRange { k, n: reference.n });
        }
        if d == 0 || d > k {
            return Err(Error::BandExceedsMatrix { d, k });
        }
        Ok(Self { d, k, reference })
    }

    pub fn residual_len(&self) -> usize {
        rom::rest_len(self.reference.m, self.k, self.d)
    }
}

/// `Rest_{d,k}([A_rom(v)]_k - [A_rom]_k)` for a candidate ROM built from the
/// first `2k - 1` samples (or more).
pub fn rom_residual(candidate: &OperatorRom, spec: &RomResidualSpec) -> Result<Vec<f64>> {
    if candidate.m != spec.reference.m {
        return Err(Error::InvalidParameter(format!("ROM block sizes {} and {}", candidate.m, spec.reference.m)));
    }
    let a = candidate.restrict(spec.k)?;
    let b = spec.reference.restrict(spec.k)?;
    let diff = faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)]);
    rom::rest_dk(diff.as_ref(), spec.reference.m, spec.d)
}

/// `‖Rest_{d,k}([A_rom(v) - A_rom]_k)‖²`. Only the samples `j ≤ 2k - 2` of `v`
/// are synthesized since the leading block depends on nothing else.
pub fn rom_objective(v: &VelocityModel, spec: &RomResidualSpec, acq: &Acquisition) -> Result<Evaluation> {
    rom_objective_with(v, spec, acq, &RomOptions::default())
}

pub fn rom_objective_with(
    v: &VelocityModel,
    spec: &RomResidualSpec,
    acq: &Acquisition,
    opts: &RomOptions,
) -> Result<Evaluation> {
    let ds = acq.dataset_blocks(v, spec.k)?;
    let candidate = rom::build_rom_with(&ds, opts)?;
    Ok(Evaluation::from_residual(rom_residual(&candidate, spec)?))
}

/// Concatenated `Triu(D_j(v) - D_j)` over the first `count` samples.
pub fn fwi_residual(candidate: &DataSet, reference: &DataSet, count: usize) -> Result<Vec<f64>> {
    if candidate.m != reference.m {
        return Err(Error::InvalidParameter(format!("{} and {} sensors", candidate.m, reference.m)));
    }
    if count > candidate.d.len() || count > reference.d.len() {
        return Err(Error::IndexOutOfRange { k: count, n: candidate.d.len().min(reference.d.len()) });
    }
    let mut out = Vec::with_capacity(count * reference.m * (reference.m + 1) / 2);
    for j in 0..count {
        let (a, b) = (&candidate.d[j], &reference.d[j]);
        let diff = faer::Mat::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] - b[(r, c)]);
        out.extend(rom::triu_vec(diff.as_ref()));
    }
    Ok(out)
}

/// `Σ_{j=0}^{2n-2} ‖Triu(D_j(v) - D_j)‖²`.
pub fn fwi_objective(v: &VelocityModel, reference: &DataSet, acq: &Acquisition) -> Result<Evaluation> {
    let candidate = acq.dataset(v)?;
    Ok(Evaluation::from_residual(fwi_residual(&candidate, reference, 2 * reference.n - 1)?))
}

/// Which data samples enter the FWI misfit during layer stripping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FwiSamples {
    /// Every sample `j = 0..2n-2`, regardless of the layer.
    #[default]
    All,
    /// Samples `j ≤ 2k_l - 2` in layer `l`.
    Truncated,
}

/// A residual `G(v; k)` parametrized by the restriction size of the current layer.
pub trait Misfit: Sync {
    fn residual(&self, v: &VelocityModel, k: usize) -> Result<Vec<f64>>;
    fn residual_len(&self, k: usize) -> usize;
    /// Largest admissible `k`.
    fn n(&self) -> usize;
}

/// ROM misfit with band depth `min(d, k)`.
#[derive(Debug, Clone)]
pub struct RomMisfit {
    pub reference: OperatorRom,
    pub acquisition: Acquisition,
    pub d: usize,
    pub options: RomOptions,
}

impl RomMisfit {
    pub fn new(reference: OperatorRom, acquisition: Acquisition, d: usize) -> Result<Self> {
        if reference.n != acquisition.n || reference.m != acquisition.sensors.len() {
            return Err(Error::InvalidParameter(format!(
                "reference ROM (m = {}, n = {}) does not match the acquisition (m = {}, n = {})",
                reference.m,
                reference.n,
                acquisition.sensors.len(),
                acquisition.n
            )));
        }
        if d == 0 {
            return Err(Error::BandExceedsMatrix { d, k: reference.n });
        }
        Ok(Self { reference, acquisition, d, options: RomOptions::default() })
    }

    fn spec(&self, k: usize) -> Result<RomResidualSpec> {
        RomResidualSpec::new(self.d.min(k), k, self.reference.clone())
    }
}

impl Misfit for RomMisfit {
    fn residual(&self, v: &VelocityModel, k: usize) -> Result<Vec<f64>> {
        let spec = self.spec(k)?;
        let ds = self.acquisition.dataset_blocks(v, k)?;
        let candidate = rom::build_rom_with(&ds, &self.options)?;
        rom_residual(&candidate, &spec)
    }

    fn residual_len(&self, k: usize) -> usize {
        rom::rest_len(self.reference.m, k, self.d.min(k))
    }

    fn n(&self) -> usize {
        self.reference.n
    }
}

/// Conventional data misfit.
#[derive(Debug, Clone)]
pub struct FwiMisfit {
    pub reference: DataSet,
    pub acquisition: Acquisition,
    pub samples: FwiSamples,
}

impl FwiMisfit {
    pub fn new(reference: DataSet, acquisition: Acquisition, samples: FwiSamples) -> Result<Self> {
        if reference.n != acquisition.n || reference.m != acquisition.sensors.len() {
            return Err(Error::InvalidParameter("reference data does not match the acquisition".into()));
        }
        Ok(Self { reference, acquisition, samples })
    }

    fn count(&self, k: usize) -> usize {
        match self.samples {
            FwiSamples::All => 2 * self.reference.n - 1,
            FwiSamples::Truncated => 2 * k - 1,
        }
    }
}

impl Misfit for FwiMisfit {
    fn residual(&self, v: &VelocityModel, k: usize) -> Result<Vec<f64>> {
        if k == 0 || k > self.reference.n {
            return Err(Error::IndexOutOfRange { k, n: self.reference.n });
        }
        let candidate = match self.samples {
            FwiSamples::All => self.acquisition.dataset(v)?,
            FwiSamples::Truncated => self.acquisition.dataset_blocks(v, k)?,
        };
        fwi_residual(&candidate, &self.reference, self.count(k))
    }

    fn residual_len(&self, k: usize) -> usize {
        let m = self.reference.m;
        self.count(k) * m * (m + 1) / 2
    }

    fn n(&self) -> usize {
        self.reference.n
    }
}

/// Squared norm, with an infeasible candidate (non-SPD mass matrix) mapped to `+∞`.
pub fn objective_or_infinity(r: Result<Vec<f64>>) -> Result<f64> {
    match r {
        Ok(res) => Ok(res.iter().map(|x| x * x).sum()),
        Err(Error::MassNotSpd { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// `‖Triu(x)‖²` summed over data samples: the FWI normalization reference.
pub fn data_energy(ds: &DataSet) -> f64 {
    ds.d.iter().map(|x| rom::triu_vec(x.as_ref()).iter().map(|e| e * e).sum::<f64>()).sum()
}

/// `‖Triu(A_rom)‖²`.
pub fn rom_energy(rom: &OperatorRom) -> f64 {
    rom::triu_vec(rom.a_rom.as_ref()).iter().map(|e| e * e).sum()
}
