//! Layer-stripping regularized Gauss–Newton over a Gaussian-bump search space.

use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::exec::{self, Parallelism};
use crate::linalg;
use crate::model::{Parametrization, VelocityModel};
use crate::objective::Misfit;
use crate::{Error, Result};

/// Restriction sizes `k_1 ≤ … ≤ k_L = n`, `q` iterations per layer, band depth `d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub k: Vec<usize>,
    pub q: usize,
    pub d: usize,
}

impl LayerSchedule {
    pub fn new(k: Vec<usize>, q: usize, d: usize) -> Self {
        Self { k, q, d }
    }

    /// One layer using the whole ROM.
    pub fn single(n: usize, q: usize) -> Self {
        Self { k: vec![n], q, d: n }
    }

    pub fn layers(&self) -> usize {
        self.k.len()
    }

    pub fn iterations(&self) -> usize {
        self.k.len() * self.q
    }

    /// Band depth used in layer `l`.
    pub fn band(&self, l: usize) -> usize {
        self.d.min(self.k[l])
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k.is_empty() || self.q == 0 || self.d == 0 {
            return Err(Error::Config("schedule needs L ≥ 1, q ≥ 1 and d ≥ 1".into()));
        }
        if self.k[0] == 0 || self.k.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config(format!("restriction sizes {:?} must be positive and non-decreasing", self.k)));
        }
        if *self.k.last().unwrap() != n {
            return Err(Error::Config(format!("last restriction size {} must equal n = {n}", self.k.last().unwrap())));
        }
        if self.d > n {
            return Err(Error::BandExceedsMatrix { d: self.d, k: n });
        }
        Ok(())
    }
}

/// Tikhonov term of the functional `F_i` minimized by the line search. The
/// direction is always `-(JᵀJ + μI)⁻¹ Jᵀ r` (plus `μ η` for [`Origin`]).
///
/// [`Origin`]: PenaltyAnchor::Origin
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyAnchor {
    /// No penalty in the step length: `F_i = O`. The damping only shapes the
    /// direction and `α` up to `α_max` makes up for its length.
    #[default]
    None,
    /// `μ‖η - η^{(i-1)}‖²`: a damped Gauss–Newton (Levenberg–Marquardt) step.
    Previous,
    /// `μ‖η‖²`.
    Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnConfig {
    /// Quantile of the singular values setting `μ`.
    pub gamma: f64,
    pub alpha_max: f64,
    /// Jacobian step per unit coefficient, `δ_l = fd_step · max(1, |η_l|)`.
    pub fd_step: f64,
    /// Line-search grid `α_max ρ^j`, `j = 0..=grid_steps`.
    pub ratio: f64,
    pub grid_steps: usize,
    /// Golden-section iterations around the best grid point.
    pub golden_iterations: usize,
    pub anchor: PenaltyAnchor,
    pub parallelism: Parallelism,
}

impl Default for GnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.3,
            alpha_max: 3.0,
            fd_step: 1e-2,
            ratio: 0.7,
            grid_steps: 12,
            golden_iterations: 12,
            anchor: PenaltyAnchor::None,
            parallelism: Parallelism::Parallel,
        }
    }
}

impl GnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.2 && self.gamma < 0.4) {
            return Err(Error::Config(format!("gamma = {} must lie in (0.2, 0.4)", self.gamma)));
        }
        if !(self.alpha_max > 0.0) {
            return Err(Error::Config("alpha_max must be positive".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::Config("fd_step must be positive".into()));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Config("line-search ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Residual `G(η)` evaluated through a search space and a misfit at fixed `k`.
pub fn residual_at(misfit: &dyn Misfit, param: &Parametrization, eta: &[f64], k: usize) -> Result<Vec<f64>> {
    misfit.residual(&param.evaluate(eta)?, k)
}

/// Forward-difference Jacobian; columns are evaluated in parallel.
pub fn fd_jacobian<F>(g: F, eta: &[f64], r0: &[f64], fd_step: f64, par: Parallelism) -> Result<Mat<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
{
    let n = eta.len();
    if r0.len() < n {
        return Err(Error::ResidualShorterThanN { rows: r0.len(), cols: n });
    }
    let cols = exec::try_map_indexed(n, par, |l| {
        let delta = fd_step * eta[l].abs().max(1.0);
        let mut e = eta.to_vec();
        e[l] += delta;
        let r = g(&e)?;
        if r.len() != r0.len() {
            return Err(Error::InvalidParameter("residual length changed between evaluations".into()));
        }
        Ok(r.iter().zip(r0).map(|(a, b)| (a - b) / delta).collect::<Vec<f64>>())
    })?;
    let jac = Mat::from_fn(r0.len(), n, |i, l| cols[l][i]);
    Ok(jac)
}

/// Smallest `σ_N / σ_1` below which the Jacobian is reported as rank deficient.
pub const RANK_WARNING_RATIO: f64 = 1e-14;

/// `σ_{⌊γN⌋}²` with 1-based singular value index; index 0 maps to `σ_1`.
pub fn tikhonov_mu(singular_values: &[f64], gamma: f64) -> f64 {
    let n = singular_values.len();
    let idx = ((gamma * n as f64).floor() as usize).clamp(1, n);
    singular_values[idx - 1].powi(2)
}

/// `-(JᵀJ + μI)⁻¹ (Jᵀr + μ o)` from the SVD of `J` (`o` is the offset of the
/// current point from the penalty anchor, zero for the plain step).
pub fn gn_direction_svd(s: &[f64], u: &Mat<f64>, v: &Mat<f64>, r: &[f64], mu: f64, offset: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = v.nrows();
    if s.len() != n {
        return Err(Error::ResidualShorterThanN { rows: u.nrows(), cols: n });
    }
    let mut coef = vec![0.0; n];
    for c in 0..n {
        let den = s[c] * s[c] + mu;
        if !(den > 0.0) {
            return Err(Error::SingularSystem);
        }
        let mut num = s[c] * (0..u.nrows()).map(|i| u[(i, c)] * r[i]).sum::<f64>();
        if let Some(o) = offset {
            num += mu * (0..n).map(|i| v[(i, c)] * o[i]).sum::<f64>();
        }
        coef[c] = -num / den;
    }
    Ok((0..n).map(|i| (0..n).map(|c| v[(i, c)] * coef[c]).sum()).collect())
}

/// `d = -(JᵀJ + μI)⁻¹ Jᵀ r`, computed from the SVD of `J`.
pub fn gn_step(jac: &Mat<f64>, r: &[f64], mu: f64) -> Result<Vec<f64>> {
    if jac.nrows() < jac.ncols() {
        return Err(Error::ResidualShorterThanN { rows: jac.nrows(), cols: jac.ncols() });
    }
    let (s, u, v) = linalg::thin_svd(jac.as_ref())?;
    gn_direction_svd(&s, &u, &v, r, mu, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub value: f64,
}

/// Minimizes `f(α)` over `(0, α_max]`: geometric grid, then golden section
/// between the neighbours of the best grid point. `α = 0` with `f0` when no
/// trial improves on `f0`. Non-finite trial values count as infeasible.
pub fn line_search<F>(f: F, f0: f64, cfg: &GnConfig) -> Result<LineSearchResult>
where
    F: Fn(f64) -> Result<f64> + Sync + Send,
{
    let alphas: Vec<f64> = (0..=cfg.grid_steps).map(|j| cfg.alpha_max * cfg.ratio.powi(j as i32)).collect();
    let vals = exec::try_map_indexed(alphas.len(), cfg.parallelism, |j| f(alphas[j]))?;
    let finite = |x: f64| if x.is_finite() { x } else { f64::INFINITY };
    let mut best = None;
    for (j, &val) in vals.iter().enumerate() {
        let val = finite(val);
        if val < f0 && best.is_none_or(|(_, b)| val < b) {
            best = Some((j, val));
        }
    }
    let Some((j, fbest)) = best else {
        return Ok(LineSearchResult { alpha: 0.0, value: f0 });
    };
    let mut out = LineSearchResult { alpha: alphas[j], value: fbest };
    // Bracket between the grid neighbours (α decreases with j).
    let hi = if j == 0 { alphas[0] } else { alphas[j - 1] };
    let lo = if j + 1 < alphas.len() { alphas[j + 1] } else { 0.0 };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = finite(f(x1)?);
    let mut f2 = finite(f(x2)?);
    for _ in 0..cfg.golden_iterations {
        for (x, fx) in [(x1, f1), (x2, f2)] {
            if fx < out.value {
                out = LineSearchResult { alpha: x, value: fx };
            }
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = finite(f(x1)?);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = finite(f(x2)?);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx < out.value && x > 0.0 {
            out = LineSearchResult { alpha: x, value: fx };
        }
    }
    Ok(out)
}

/// One Gauss–Newton iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based global iteration index `i`.
    pub iteration: usize,
    pub layer: usize,
    pub k: usize,
    pub d: usize,
    /// Misfit `O_{d,k}` at `η^{(i-1)}` and `η^{(i)}`.
    pub objective_before: f64,
    pub objective: f64,
    /// `F_i` at `η^{(i-1)}` and `η^{(i)}`.
    pub functional_before: f64,
    pub functional: f64,
    pub mu: f64,
    pub alpha: f64,
    pub accepted: bool,
    pub step_norm: f64,
    /// `σ_N / σ_1` of the Jacobian (`0` when it was not recomputed).
    pub jacobian_conditioning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionState {
    pub eta: Vec<f64>,
    pub iteration: usize,
    pub records: Vec<IterationRecord>,
}

impl InversionState {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn mus(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mu).collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.alpha).collect()
    }

    /// CSV with columns `iteration, k_l, objective, mu, alpha`.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "k_l", "objective", "mu", "alpha"])?;
        for r in &self.records {
            w.write_record(&[
                r.iteration.to_string(),
                r.k.to_string(),
                format!("{:e}", r.objective),
                format!("{:e}", r.mu),
                format!("{}", r.alpha),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    pub estimate: VelocityModel,
    pub state: InversionState,
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|e| e * e).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `‖G(η)‖²`, with infeasible velocities and non-SPD mass matrices mapped to `+∞`.
pub fn trial_objective(misfit: &dyn Misfit, param: &Parametrization, eta: &[f64], k: usize) -> Result<f64> {
    match residual_at(misfit, param, eta, k) {
        Ok(r) => Ok(sq_norm(&r)),
        Err(Error::MassNotSpd { .. } | Error::NonPositiveVelocity { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Runs `L·q` regularized Gauss–Newton updates from `param.eta`.
///
/// A rejected step leaves `η` unchanged. Since the next iteration of the same
/// layer would then repeat the same computation, the remaining iterations of
/// that layer are recorded as rejected without re-evaluation.
pub fn run_inversion(
    misfit: &dyn Misfit,
    param: &Parametrization,
    schedule: &LayerSchedule,
    cfg: &GnConfig,
) -> Result<InversionResult> {
    run_inversion_observed(misfit, param, schedule, cfg, &mut |_, _| {})
}

/// [`run_inversion`], calling `observe(record, jacobian)` after every
/// iteration that computed a Jacobian.
pub fn run_inversion_observed(
    misfit: &dyn Misfit,
    param: &Parametrization,
    schedule: &LayerSchedule,
    cfg: &GnConfig,
    observe: &mut dyn FnMut(&IterationRecord, &Mat<f64>),
) -> Result<InversionResult> {
    schedule.validate(misfit.n())?;
    cfg.validate()?;
    let nparam = param.len();
    let mut eta = param.eta.clone();
    let mut records = Vec::with_capacity(schedule.iterations());
    let mut i = 0;
    for l in 0..schedule.layers() {
        let k = schedule.k[l];
        if misfit.residual_len(k) < nparam {
            return Err(Error::ResidualShorterThanN { rows: misfit.residual_len(k), cols: nparam });
        }
        let mut stalled: Option<IterationRecord> = None;
        for _ in 0..schedule.q {
            i += 1;
            if let Some(prev) = &stalled {
                records.push(IterationRecord { iteration: i, ..prev.clone() });
                continue;
            }
            let g = |e: &[f64]| residual_at(misfit, param, e, k);
            let r0 = g(&eta)?;
            let jac = fd_jacobian(g, &eta, &r0, cfg.fd_step, cfg.parallelism)?;
            let (s, u, v) = linalg::thin_svd(jac.as_ref())?;
            let conditioning = if s[0] > 0.0 { s[nparam - 1] / s[0] } else { 0.0 };
            if conditioning < RANK_WARNING_RATIO {
                log::warn!("iteration {i}: Jacobian nearly rank deficient (σ_N/σ_1 = {conditioning:e})");
            }
            let mu = tikhonov_mu(&s, cfg.gamma);
            let anchor: Vec<f64> = match cfg.anchor {
                PenaltyAnchor::Previous | PenaltyAnchor::None => eta.clone(),
                PenaltyAnchor::Origin => vec![0.0; nparam],
            };
            let weight = if cfg.anchor == PenaltyAnchor::None { 0.0 } else { mu };
            let offset: Vec<f64> = eta.iter().zip(&anchor).map(|(a, b)| a - b).collect();
            let dir = gn_direction_svd(&s, &u, &v, &r0, mu, Some(&offset))?;
            let obj0 = sq_norm(&r0);
            let f0 = obj0 + weight * sq_norm(&offset);
            let trial = |alpha: f64| -> Result<f64> {
                let e: Vec<f64> = eta.iter().zip(&dir).map(|(x, d)| x + alpha * d).collect();
                let o = trial_objective(misfit, param, &e, k)?;
                Ok(o + weight * sq_dist(&e, &anchor))
            };
            let ls = line_search(trial, f0, cfg)?;
            let accepted = ls.alpha > 0.0;
            let mut rec = IterationRecord {
                iteration: i,
                layer: l + 1,
                k,
                d: schedule.band(l),
                objective_before: obj0,
                objective: obj0,
                functional_before: f0,
                functional: f0,
                mu,
                alpha: ls.alpha,
                accepted,
                step_norm: 0.0,
                jacobian_conditioning: conditioning,
            };
            if accepted {
                let new: Vec<f64> = eta.iter().zip(&dir).map(|(x, d)| x + ls.alpha * d).collect();
                rec.step_norm = sq_dist(&new, &eta).sqrt();
                rec.objective = trial_objective(misfit, param, &new, k)?;
                rec.functional = ls.value;
                eta = new;
            } else {
                stalled = Some(IterationRecord { jacobian_conditioning: 0.0, ..rec.clone() });
            }
            log::info!(
                "iteration {i} (layer {}, k = {k}): objective {:.6e} -> {:.6e}, mu = {:.3e}, alpha = {:.4}",
                l + 1,
                rec.objective_before,
                rec.objective,
                mu,
                ls.alpha
            );
            observe(&rec, &jac);
            records.push(rec);
        }
    }
    let estimate = param.evaluate(&eta)?;
    Ok(InversionResult { estimate, state: InversionState { eta, iteration: i, records } })
}

#[cfg(test)]
mod tests;
