//! Config-driven experiment runners: data synthesis, ROM construction,
//! objective sweeps, inversion and run comparison. Every runner writes its
//! artifacts plus a `manifest.json` into an output directory.

mod census;
mod config;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use census::{census, Census, LocalMinimum};
pub use config::*;

use crate::exec;
use crate::forward::{symmetrize_and_sample, synthesize_measurements, DataSet, Traces};
use crate::inversion::{run_inversion_observed, InversionResult, InversionState, IterationRecord};
use crate::model::{TwoLayer, VelocityModel};
use crate::objective::{self, FwiMisfit, Misfit, RomMisfit, RomResidualSpec};
use crate::rom::{self, ConditionReport};
use crate::{io, Error, Result};

pub const MANIFEST_SCHEMA: &str = "romvel-run-v1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Synthesize,
    Rom,
    Sweep,
    Invert,
    Compare,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Rom,
    Fwi,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Rom => "rom",
            Mode::Fwi => "fwi",
        }
    }
}

/// Wall-clock facts, kept apart so the rest of the manifest is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix: f64,
    pub wall_seconds: f64,
    pub threads: usize,
}

/// Input files a command read besides the config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub version: String,
    pub config: ExperimentConfig,
    #[serde(default)]
    pub inputs: Inputs,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    pub timing: Timing,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let m: Self = io::read_json(&path)?;
        io::expect_format(&path, &m.schema, MANIFEST_SCHEMA)?;
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join(MANIFEST_FILE), self)
    }
}

struct Run {
    start: Instant,
    started_unix: f64,
    out: PathBuf,
    outputs: Vec<String>,
}

impl Run {
    fn begin(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Ok(Self { start: Instant::now(), started_unix, out: out.to_path_buf(), outputs: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    /// Header written at `name` plus its `.bin` payload.
    fn binary(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.outputs.push(io::payload_path(Path::new(name)).display().to_string());
        p
    }

    fn finish(
        self,
        cfg: &ExperimentConfig,
        command: Command,
        mode: Option<Mode>,
        inputs: Inputs,
        summary: serde_json::Value,
    ) -> Result<RunManifest> {
        let manifest = RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            command,
            mode,
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.portable(),
            inputs,
            outputs: self.outputs,
            summary,
            timing: Timing {
                started_unix: self.started_unix,
                wall_seconds: self.start.elapsed().as_secs_f64(),
                threads: exec::current_threads(),
            },
        };
        manifest.write(&self.out)?;
        Ok(manifest)
    }
}

impl ExperimentConfig {
    /// Copy with file references made absolute, so it can be re-run from anywhere.
    pub fn portable(&self) -> Self {
        let mut c = self.clone();
        let base = std::path::absolute(&self.base_dir).unwrap_or_else(|_| self.base_dir.clone());
        c.model.absolutize(&base);
        if let Some(inv) = &mut c.inversion {
            inv.search.background.absolutize(&base);
        }
        c
    }
}

impl ModelSpec {
    fn absolutize(&mut self, base: &Path) {
        match self {
            ModelSpec::File { path } if path.is_relative() => *path = base.join(&*path),
            ModelSpec::Bumps { background, .. } => background.absolutize(base),
            _ => {}
        }
    }
}

/// Measured data and the medium it came from.
pub struct Measurements {
    pub truth: VelocityModel,
    pub data: DataSet,
    pub traces: Option<Traces>,
}

/// Synthesizes the measured data: on the reference grid, by time stepping when
/// configured and by the spectral-space path otherwise.
pub fn measure(cfg: &ExperimentConfig) -> Result<Measurements> {
    let truth = cfg.reference_model()?;
    let acq = cfg.acquisition_on(truth.grid())?;
    match &cfg.timedomain {
        None => Ok(Measurements { data: acq.dataset(&truth)?, truth, traces: None }),
        Some(td) => {
            acq.check_sampling()?;
            let needed = (2 * acq.n - 2) as f64 * acq.tau / (1.0 - td.taper);
            let t_end = td.t_end.unwrap_or(needed + 2.0 * td.dt);
            let traces = synthesize_measurements(&truth, &acq.sensors, &cfg.pulse(), t_end, td.dt, td.scheme, acq.parallelism)?;
            let data = symmetrize_and_sample(&traces, &acq.sensors, &truth, acq.tau, acq.n, td.taper)?;
            Ok(Measurements { truth, data, traces: Some(traces) })
        }
    }
}

/// Writes `data.json`, `truth.json` and, for the time-stepped path, `traces.csv`.
pub fn synthesize(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let mut run = Run::begin(out)?;
    let meas = measure(cfg)?;
    meas.data.write(&run.binary("data.json"))?;
    meas.truth.write(&run.binary("truth.json"))?;
    if let Some(tr) = &meas.traces {
        tr.write_csv(&run.path("traces.csv"))?;
    }
    let summary = serde_json::json!({
        "m": meas.data.m,
        "n": meas.data.n,
        "tau": meas.data.tau,
        "data_energy": objective::data_energy(&meas.data),
        "time_stepped": meas.traces.is_some(),
    });
    run.finish(cfg, Command::Synthesize, None, Inputs::default(), summary)
}

/// ROM from a data file, or from data synthesized per the config.
pub fn build_rom(cfg: &ExperimentConfig, data: Option<&Path>, out: &Path) -> Result<RunManifest> {
    let mut run = Run::begin(out)?;
    let (ds, inputs) = match data {
        Some(p) => {
            let abs = std::path::absolute(p)?;
            (DataSet::read(p)?, Inputs { data: Some(abs), ..Inputs::default() })
        }
        None => (measure(cfg)?.data, Inputs::default()),
    };
    let r = rom::build_rom_with(&ds, &cfg.rom)?;
    let report: ConditionReport = rom::condition_report(&ds, &r)?;
    r.write(&run.binary("rom.json"))?;
    io::write_json(&run.path("condition.json"), &report)?;
    let summary = serde_json::to_value(&report)?;
    run.finish(cfg, Command::Rom, None, inputs, summary)
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub p1: f64,
    pub p2: f64,
    pub obj_rom: f64,
    pub obj_fwi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCensus {
    pub axes: [String; 2],
    pub rom: Census,
    pub fwi: Census,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    /// Row-major over `(p1, p2)`.
    pub points: Vec<SweepPoint>,
    pub census: SweepCensus,
}

/// Both objectives over the two-parameter grid, from one forward synthesis
/// per point. A non-SPD candidate mass matrix makes the ROM objective `+∞`.
pub fn sweep_landscape(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| Error::Config("config has no sweep section".into()))?;
    let ModelSpec::TwoLayer(base) = &cfg.model else {
        return Err(Error::Config("sweeps vary the two-layer model".into()));
    };
    let n = cfg.sampling.n;
    let (k, d) = (spec.k.unwrap_or(n), spec.d.unwrap_or(n));
    let meas = measure(cfg)?;
    let reference = rom::build_rom_with(&meas.data, &cfg.rom)?;
    let rspec = RomResidualSpec::new(d, k, reference)?;
    let grid = cfg.grid()?;
    let acq = cfg.acquisition()?;
    let (a1, a2) = (spec.axes[0], spec.axes[1]);
    let (p1, p2) = (a1.values(), a2.values());
    let inner = exec::Parallelism::Sequential;
    let point_acq = crate::forward::Acquisition { parallelism: inner, ..acq };
    let points = exec::try_map_indexed(p1.len() * p2.len(), cfg.parallelism, |idx| {
        let (x, y) = (p1[idx / p2.len()], p2[idx % p2.len()]);
        let mut t: TwoLayer = *base;
        a1.parameter.set(&mut t, x);
        a2.parameter.set(&mut t, y);
        let v = t.build(grid, cfg.boundary)?;
        let ds = point_acq.dataset(&v)?;
        let obj_fwi = objective::objective_or_infinity(objective::fwi_residual(&ds, &meas.data, 2 * n - 1))?;
        let obj_rom = objective::objective_or_infinity(
            rom::build_rom_with(&ds.truncated(k)?, &cfg.rom).and_then(|c| objective::rom_residual(&c, &rspec)),
        )?;
        Ok::<_, Error>(SweepPoint { p1: x, p2: y, obj_rom, obj_fwi })
    })?;
    let rom_vals: Vec<f64> = points.iter().map(|p| p.obj_rom).collect();
    let fwi_vals: Vec<f64> = points.iter().map(|p| p.obj_fwi).collect();
    let census = SweepCensus {
        axes: [a1.parameter.name().into(), a2.parameter.name().into()],
        rom: census(&rom_vals, &p1, &p2),
        fwi: census(&fwi_vals, &p1, &p2),
    };
    Ok(SweepResult { p1, p2, points, census })
}

/// Writes `sweep.csv` (`p1, p2, obj_rom, obj_fwi`) and `census.json`.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let mut run = Run::begin(out)?;
    let res = sweep_landscape(cfg)?;
    let mut w = csv::Writer::from_path(run.path("sweep.csv"))?;
    for p in &res.points {
        w.serialize(p)?;
    }
    w.flush()?;
    io::write_json(&run.path("census.json"), &res.census)?;
    let summary = serde_json::json!({
        "rom_minima": res.census.rom.count,
        "rom_interior_minima": res.census.rom.interior_count,
        "fwi_minima": res.census.fwi.count,
        "fwi_interior_minima": res.census.fwi.interior_count,
    });
    run.finish(cfg, Command::Sweep, None, Inputs::default(), summary)
}

/// Relative L2 errors of an inversion against the true model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionSummary {
    pub initial_error: f64,
    pub final_error: f64,
    pub error_ratio: f64,
    pub final_objective: f64,
    pub iterations: usize,
}

/// Runs the configured inversion in `mode` against the measured data.
pub fn invert_with(cfg: &ExperimentConfig, mode: Mode) -> Result<(InversionResult, InversionSummary)> {
    invert_observed(cfg, mode, &mut |_, _| {})
}

/// [`invert_with`], passing every iteration record and its Jacobian to `observe`.
pub fn invert_observed(
    cfg: &ExperimentConfig,
    mode: Mode,
    observe: &mut dyn FnMut(&IterationRecord, &faer::Mat<f64>),
) -> Result<(InversionResult, InversionSummary)> {
    let inv = cfg.inversion.as_ref().ok_or_else(|| Error::Config("config has no inversion section".into()))?;
    let meas = measure(cfg)?;
    let param = cfg.search_space()?;
    let acq = cfg.acquisition()?;
    let misfit: Box<dyn Misfit> = match mode {
        Mode::Rom => {
            let reference = rom::build_rom_with(&meas.data, &cfg.rom)?;
            let mut m = RomMisfit::new(reference, acq, inv.schedule.d)?;
            m.options = cfg.rom;
            Box::new(m)
        }
        Mode::Fwi => Box::new(FwiMisfit::new(meas.data, acq, inv.fwi_samples)?),
    };
    let res = run_inversion_observed(misfit.as_ref(), &param, &inv.schedule, &inv.gn, observe)?;
    let truth = cfg.true_model()?;
    let initial_error = param.background().relative_l2_error(&truth)?;
    let final_error = res.estimate.relative_l2_error(&truth)?;
    let summary = InversionSummary {
        initial_error,
        final_error,
        error_ratio: final_error / initial_error,
        final_objective: res.state.records.last().map_or(f64::NAN, |r| r.objective),
        iterations: res.state.iteration,
    };
    Ok((res, summary))
}

/// Writes `estimate.json`, `trace.csv` and `state.json`.
pub fn invert(cfg: &ExperimentConfig, mode: Mode, out: &Path) -> Result<RunManifest> {
    let mut run = Run::begin(out)?;
    let (res, summary) = invert_with(cfg, mode)?;
    res.estimate.write(&run.binary("estimate.json"))?;
    res.state.write_trace_csv(&run.path("trace.csv"))?;
    io::write_json(&run.path("state.json"), &res.state)?;
    run.finish(cfg, Command::Invert, Some(mode), Inputs::default(), serde_json::to_value(summary)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub label: String,
    pub relative_error: f64,
    /// Objective after each iteration; empty for runs without an estimate.
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: [RunComparison; 2],
    /// `error(a) - error(b)`.
    pub error_difference: f64,
    /// Label of the run with the smaller error; `None` on a tie.
    pub winner: Option<String>,
}

fn run_error(manifest: &RunManifest, dir: &Path, truth: &VelocityModel) -> Result<RunComparison> {
    let (estimate, objectives) = if manifest.command == Command::Invert {
        let est = VelocityModel::read(&dir.join("estimate.json"))?;
        let state: InversionState = io::read_json(&dir.join("state.json"))?;
        (est, state.objectives())
    } else {
        // No estimate: the initial guess is the baseline.
        (manifest.config.search_space()?.background().clone(), Vec::new())
    };
    if estimate.grid() != truth.grid() {
        return Err(Error::GridMismatch("run estimate and true model live on different grids".into()));
    }
    let label = match manifest.mode {
        Some(m) => m.name().to_string(),
        None => format!("{:?}", manifest.command).to_lowercase(),
    };
    Ok(RunComparison { label, relative_error: estimate.relative_l2_error(truth)?, objectives })
}

/// Compares two runs over the same true model.
pub fn compare_runs(a: &Path, b: &Path) -> Result<ComparisonReport> {
    let dir = |p: &Path| if p.is_dir() { p.to_path_buf() } else { p.parent().map(Path::to_path_buf).unwrap_or_default() };
    let (ma, mb) = (RunManifest::read(a)?, RunManifest::read(b)?);
    let (ta, tb) = (ma.config.true_model()?, mb.config.true_model()?);
    if ta.grid() != tb.grid() {
        return Err(Error::GridMismatch("the runs use different grids".into()));
    }
    if ta != tb {
        return Err(Error::Config("the runs have different true models".into()));
    }
    let ra = run_error(&ma, &dir(a), &ta)?;
    let rb = run_error(&mb, &dir(b), &ta)?;
    let diff = ra.relative_error - rb.relative_error;
    let winner = if diff < 0.0 {
        Some(ra.label.clone())
    } else if diff > 0.0 {
        Some(rb.label.clone())
    } else {
        None
    };
    Ok(ComparisonReport { runs: [ra, rb], error_difference: diff, winner })
}

/// Writes `compare.json`. The recorded config is run `a`'s.
pub fn compare(a: &Path, b: &Path, out: &Path) -> Result<RunManifest> {
    let mut run = Run::begin(out)?;
    let report = compare_runs(a, b)?;
    io::write_json(&run.path("compare.json"), &report)?;
    let cfg = RunManifest::read(a)?.config;
    let inputs = Inputs { data: None, runs: vec![std::path::absolute(a)?, std::path::absolute(b)?] };
    let summary = serde_json::json!({
        "errors": [report.runs[0].relative_error, report.runs[1].relative_error],
        "winner": report.winner,
    });
    run.finish(&cfg, Command::Compare, None, inputs, summary)
}

/// Re-runs the command recorded in a manifest into `out`.
pub fn rerun(manifest: &RunManifest, out: &Path) -> Result<RunManifest> {
    let cfg = &manifest.config;
    cfg.validate()?;
    match manifest.command {
        Command::Synthesize => synthesize(cfg, out),
        Command::Rom => build_rom(cfg, manifest.inputs.data.as_deref(), out),
        Command::Sweep => sweep(cfg, out),
        Command::Invert => invert(cfg, manifest.mode.unwrap_or_default(), out),
        Command::Compare => match manifest.inputs.runs.as_slice() {
            [a, b] => compare(a, b, out),
            _ => Err(Error::Config("compare manifest must list two runs".into())),
        },
    }
}
