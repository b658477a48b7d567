use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::exec::Parallelism;
use crate::forward::{
    timedomain::DEFAULT_TAPER, Acquisition, NyquistPolicy, PropagationMethod, Pulse, SensorArray, SourceFilter,
    TimeScheme,
};
use crate::inversion::{GnConfig, LayerSchedule};
use crate::model::{
    BoundaryConditions, Camembert, FaultedLayers, GaussianBump, Grid2D, Parametrization, TwoLayer, VelocityModel,
    DEFAULT_BUMP_WIDTH_FACTOR, DEFAULT_VELOCITY_FLOOR,
};
use crate::objective::FwiSamples;
use crate::rom::RomOptions;
use crate::{io, Error, Result};

pub const CONFIG_SCHEMA: &str = "romvel-experiment-v1";

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default)]
    pub name: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub boundary: BoundaryConditions,
    /// True medium.
    pub model: ModelSpec,
    pub sensors: SensorSpec,
    #[serde(default)]
    pub pulse: PulseSpec,
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub method: PropagationMethod,
    #[serde(default)]
    pub nyquist: NyquistPolicy,
    #[serde(default)]
    pub rom: RomOptions,
    /// Synthesize the measured data on a grid with this spacing instead of the
    /// modelling grid. Off by default (matched discretization).
    #[serde(default)]
    pub reference_h: Option<f64>,
    #[serde(default)]
    pub timedomain: Option<TimeDomainSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub inversion: Option<InversionSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub parallelism: Parallelism,
    /// Directory that relative paths in the config refer to.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// `[0, width] × [0, depth]` covered by interior nodes at spacing `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: f64,
    pub depth: f64,
    pub h: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid2D> {
        self.with_h(self.h)
    }

    pub fn with_h(&self, h: f64) -> Result<Grid2D> {
        Grid2D::covering(self.width, self.depth, h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Constant {
        velocity: f64,
    },
    TwoLayer(TwoLayer),
    Camembert(Camembert),
    FaultedLayers(FaultedLayers),
    /// Velocity file in the crate's binary format. Must match the grid.
    File {
        path: PathBuf,
    },
    /// `background + Σ η_l φ_l` on a bump lattice.
    Bumps {
        background: Box<ModelSpec>,
        lattice: BumpLattice,
        eta: Vec<f64>,
    },
}

/// `nx × nz` Gaussian bumps at the cell centres of a uniform lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpLattice {
    pub nx: usize,
    pub nz: usize,
    #[serde(default = "default_width_factor")]
    pub width_factor: f64,
}

fn default_width_factor() -> f64 {
    DEFAULT_BUMP_WIDTH_FACTOR
}

impl BumpLattice {
    pub fn basis(&self, grid: &Grid2D) -> Vec<GaussianBump> {
        GaussianBump::lattice(&grid.domain(), self.nx, self.nz, self.width_factor)
    }
}

impl ModelSpec {
    pub fn build(&self, grid: Grid2D, bc: BoundaryConditions, base_dir: &Path) -> Result<VelocityModel> {
        match self {
            ModelSpec::Constant { velocity } => VelocityModel::constant(grid, bc, *velocity),
            ModelSpec::TwoLayer(t) => t.build(grid, bc),
            ModelSpec::Camembert(c) => c.build(grid, bc),
            ModelSpec::FaultedLayers(f) => f.build(grid, bc),
            ModelSpec::File { path } => {
                let v = VelocityModel::read(&base_dir.join(path))?;
                if *v.grid() != grid {
                    return Err(Error::GridMismatch(format!("{} does not match the configured grid", path.display())));
                }
                Ok(v)
            }
            ModelSpec::Bumps { background, lattice, eta } => {
                let bg = background.build(grid, bc, base_dir)?;
                let p = Parametrization::new(bg, lattice.basis(&grid))?.with_floor(None);
                p.evaluate(eta)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensorSpec {
    /// `m` sensors evenly spaced across the width at a fixed depth.
    Line {
        m: usize,
        depth: f64,
        #[serde(default)]
        width: Option<f64>,
    },
    Points {
        positions: Vec<[f64; 2]>,
        #[serde(default)]
        width: Option<f64>,
    },
}

impl SensorSpec {
    /// Sensor width defaults to the grid spacing.
    pub fn build(&self, grid: &Grid2D) -> Result<SensorArray> {
        let h = grid.hx.max(grid.hz);
        match self {
            SensorSpec::Line { m, depth, width } => SensorArray::line(grid, *m, *depth, width.unwrap_or(h)),
            SensorSpec::Points { positions, width } => SensorArray::new(positions.clone(), width.unwrap_or(h)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SensorSpec::Line { m, .. } => *m,
            SensorSpec::Points { positions, .. } => positions.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub f0_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self { f0_hz: 6.0, bandwidth_hz: 4.0 }
    }
}

impl PulseSpec {
    pub fn pulse(&self) -> Pulse {
        Pulse::from_hz(self.f0_hz, self.bandwidth_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    /// Sampling interval (s); defaults to 0.9 of the Nyquist interval of the
    /// pulse's essential frequency.
    #[serde(default)]
    pub tau: Option<f64>,
    pub n: usize,
}

/// Settings for the time-stepped measurement path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeDomainSpec {
    /// Time step; `τ` must be a whole multiple of it.
    pub dt: f64,
    #[serde(default)]
    pub scheme: TimeScheme,
    #[serde(default = "default_taper")]
    pub taper: f64,
    /// Record length (s); by default just long enough for the taper.
    #[serde(default)]
    pub t_end: Option<f64>,
}

fn default_taper() -> f64 {
    DEFAULT_TAPER
}

/// Which two-layer parameter a sweep axis varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    DepthLeft,
    Contrast,
    SlopeDrop,
    CTop,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::DepthLeft => "depth_left",
            SweepParameter::Contrast => "contrast",
            SweepParameter::SlopeDrop => "slope_drop",
            SweepParameter::CTop => "c_top",
        }
    }

    pub fn set(&self, t: &mut TwoLayer, value: f64) {
        match self {
            SweepParameter::DepthLeft => t.depth_left = value,
            SweepParameter::Contrast => t.contrast = value,
            SweepParameter::SlopeDrop => t.slope_drop = value,
            SweepParameter::CTop => t.c_top = value,
        }
    }
}

/// `count` evenly spaced values from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        (0..self.count).map(|i| self.start + (self.stop - self.start) * i as f64 / (self.count - 1) as f64).collect()
    }
}

/// Objective landscape over two parameters of the two-layer model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    /// ROM band depth and restriction size; both default to `n`.
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpaceSpec {
    /// Initial guess `c_o`.
    pub background: ModelSpec,
    pub lattice: BumpLattice,
    #[serde(default = "default_floor")]
    pub floor: Option<f64>,
}

fn default_floor() -> Option<f64> {
    Some(DEFAULT_VELOCITY_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSpec {
    pub search: SearchSpaceSpec,
    pub schedule: LayerSchedule,
    #[serde(default)]
    pub gn: GnConfig,
    #[serde(default)]
    pub fwi_samples: FwiSamples,
}

impl ExperimentConfig {
    /// Reads a config, or the config embedded in a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let value = match value.get("config") {
            Some(inner) if value.get("schema").and_then(|s| s.as_str()) == Some(super::MANIFEST_SCHEMA) => {
                inner.clone()
            }
            _ => value,
        };
        let mut cfg: Self =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!("schema {:?}, expected {CONFIG_SCHEMA:?}", self.schema)));
        }
        if self.sampling.n == 0 {
            return Err(Error::Config("sampling.n must be positive".into()));
        }
        if self.sensors.is_empty() {
            return Err(Error::Config("at least one sensor is required".into()));
        }
        if let Some(s) = &self.sweep {
            if s.axes.len() != 2 {
                return Err(Error::Config(format!("a sweep needs exactly two axes, got {}", s.axes.len())));
            }
            if s.axes.iter().any(|a| a.count == 0) || s.axes[0].parameter == s.axes[1].parameter {
                return Err(Error::Config("sweep axes must be distinct and non-empty".into()));
            }
            if !matches!(self.model, ModelSpec::TwoLayer(_)) {
                return Err(Error::Config("sweeps vary the two-layer model; set model.kind = \"two_layer\"".into()));
            }
        }
        if let Some(inv) = &self.inversion {
            inv.schedule.validate(self.sampling.n)?;
            inv.gn.validate()?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid2D> {
        self.grid.build()
    }

    pub fn pulse(&self) -> Pulse {
        self.pulse.pulse()
    }

    pub fn tau(&self) -> f64 {
        self.sampling.tau.unwrap_or_else(|| self.pulse().default_tau())
    }

    pub fn true_model(&self) -> Result<VelocityModel> {
        self.model.build(self.grid()?, self.boundary, &self.base_dir)
    }

    /// Acquisition on `grid` (the sensors are placed by physical position).
    pub fn acquisition_on(&self, grid: &Grid2D) -> Result<Acquisition> {
        Ok(Acquisition {
            sensors: self.sensors.build(grid)?,
            filter: SourceFilter::Pulse(self.pulse()),
            tau: self.tau(),
            n: self.sampling.n,
            method: self.method,
            nyquist: self.nyquist,
            parallelism: self.parallelism,
        })
    }

    pub fn acquisition(&self) -> Result<Acquisition> {
        self.acquisition_on(&self.grid()?)
    }

    /// True model on the grid used for the measured data.
    pub fn reference_model(&self) -> Result<VelocityModel> {
        match self.reference_h {
            None => self.true_model(),
            Some(h) => self.model.build(self.grid.with_h(h)?, self.boundary, &self.base_dir),
        }
    }

    pub fn search_space(&self) -> Result<Parametrization> {
        let inv = self.inversion.as_ref().ok_or_else(|| Error::Config("config has no inversion section".into()))?;
        let grid = self.grid()?;
        let bg = inv.search.background.build(grid, self.boundary, &self.base_dir)?;
        Ok(Parametrization::new(bg, inv.search.lattice.basis(&grid))?.with_floor(inv.search.floor))
    }
}
