//! Grids, velocity fields, Gaussian-bump search spaces and the built-in
//! experiment models.
//!
//! Coordinates are `(x, z)` in metres with `z` pointing down. Node `(ix, iz)`
//! sits at `(x0 + ix·hx, z0 + iz·hz)` and is stored at linear index
//! `ix·nz + iz` (z fastest).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub nz: usize,
    pub hx: f64,
    pub hz: f64,
    pub x0: f64,
    pub z0: f64,
}

/// Axis-aligned rectangle `[xmin, xmax] × [zmin, zmax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub xmin: f64,
    pub xmax: f64,
    pub zmin: f64,
    pub zmax: f64,
}

impl Domain {
    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn depth(&self) -> f64 {
        self.zmax - self.zmin
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.xmin && x <= self.xmax && z >= self.zmin && z <= self.zmax
    }
}

impl Grid2D {
    pub fn new(nx: usize, nz: usize, hx: f64, hz: f64, x0: f64, z0: f64) -> Result<Self> {
        if nx < 3 || nz < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3×3 nodes, got {nx}×{nz}")));
        }
        if !(hx > 0.0 && hz > 0.0 && hx.is_finite() && hz.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacings must be positive, got ({hx}, {hz})")));
        }
        if !(x0.is_finite() && z0.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self { nx, nz, hx, hz, x0, z0 })
    }

    /// Nodes strictly inside `[0, width] × [0, depth]` with spacing close to
    /// `h`, so that the rectangle edges are the ghost-node lines.
    pub fn covering(width: f64, depth: f64, h: f64) -> Result<Self> {
        if !(width > 0.0 && depth > 0.0 && h > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "covering({width}, {depth}, {h}): all arguments must be positive"
            )));
        }
        let nx = ((width / h).round() as usize).saturating_sub(1);
        let nz = ((depth / h).round() as usize).saturating_sub(1);
        let hx = width / (nx + 1) as f64;
        let hz = depth / (nz + 1) as f64;
        Self::new(nx, nz, hx, hz, hx, hz)
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iz: usize) -> usize {
        ix * self.nz + iz
    }

    #[inline]
    pub fn node(&self, k: usize) -> (usize, usize) {
        (k / self.nz, k % self.nz)
    }

    #[inline]
    pub fn x(&self, ix: usize) -> f64 {
        self.x0 + ix as f64 * self.hx
    }

    #[inline]
    pub fn z(&self, iz: usize) -> f64 {
        self.z0 + iz as f64 * self.hz
    }

    pub fn point(&self, k: usize) -> (f64, f64) {
        let (ix, iz) = self.node(k);
        (self.x(ix), self.z(iz))
    }

    /// Quadrature weight of a node.
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hz
    }

    /// Rectangle bounded by the ghost-node lines one spacing outside the nodes.
    pub fn domain(&self) -> Domain {
        Domain {
            xmin: self.x0 - self.hx,
            xmax: self.x0 + self.nx as f64 * self.hx,
            zmin: self.z0 - self.hz,
            zmax: self.z0 + self.nz as f64 * self.hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Zero ghost value one spacing outside the last node.
    Dirichlet,
    /// Ghost value mirrors the last node (zero flux half a spacing outside).
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub top: Boundary,
    pub bottom: Boundary,
    pub left: Boundary,
    pub right: Boundary,
}

impl BoundaryConditions {
    pub fn dirichlet() -> Self {
        Self::uniform(Boundary::Dirichlet)
    }

    pub fn uniform(b: Boundary) -> Self {
        Self { top: b, bottom: b, left: b, right: b }
    }
}

impl Default for BoundaryConditions {
    fn default() -> Self {
        Self::dirichlet()
    }
}

/// Nodal velocity field (m/s) with its boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    grid: Grid2D,
    bc: BoundaryConditions,
    values: Vec<f64>,
}

const VELOCITY_FORMAT: &str = "romvel-velocity-v1";

#[derive(Serialize, Deserialize)]
struct VelocityHeader {
    format: String,
    nx: usize,
    nz: usize,
    hx: f64,
    hz: f64,
    x0: f64,
    z0: f64,
    bc: BoundaryConditions,
    data: String,
}

impl VelocityModel {
    pub fn new(grid: Grid2D, bc: BoundaryConditions, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}×{} grid",
                values.len(),
                grid.nx,
                grid.nz
            )));
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveVelocity { node, value });
        }
        Ok(Self { grid, bc, values })
    }

    pub fn constant(grid: Grid2D, bc: BoundaryConditions, c: f64) -> Result<Self> {
        Self::new(grid, bc, vec![c; grid.len()])
    }

    pub fn from_fn(grid: Grid2D, bc: BoundaryConditions, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|k| {
                let (x, z) = grid.point(k);
                f(x, z)
            })
            .collect();
        Self::new(grid, bc, values)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn bc(&self) -> BoundaryConditions {
        self.bc
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, ix: usize, iz: usize) -> f64 {
        self.values[self.grid.index(ix, iz)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation, clamped to the node rectangle.
    pub fn sample(&self, x: f64, z: f64) -> f64 {
        let g = &self.grid;
        let fx = ((x - g.x0) / g.hx).clamp(0.0, (g.nx - 1) as f64);
        let fz = ((z - g.z0) / g.hz).clamp(0.0, (g.nz - 1) as f64);
        let ix = (fx.floor() as usize).min(g.nx - 2);
        let iz = (fz.floor() as usize).min(g.nz - 2);
        let (tx, tz) = (fx - ix as f64, fz - iz as f64);
        let v00 = self.at(ix, iz);
        let v10 = self.at(ix + 1, iz);
        let v01 = self.at(ix, iz + 1);
        let v11 = self.at(ix + 1, iz + 1);
        (1.0 - tx) * ((1.0 - tz) * v00 + tz * v01) + tx * ((1.0 - tz) * v10 + tz * v11)
    }

    /// `‖self - truth‖₂ / ‖truth‖₂` over the nodes.
    pub fn relative_l2_error(&self, truth: &VelocityModel) -> Result<f64> {
        if self.grid != truth.grid {
            return Err(Error::GridMismatch("velocity models live on different grids".into()));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in self.values.iter().zip(&truth.values) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        Ok((num / den).sqrt())
    }

    /// Writes `header` (JSON) and its `.bin` payload.
    pub fn write(&self, header: &Path) -> Result<()> {
        let payload = io::payload_path(header);
        let g = &self.grid;
        io::write_json(
            header,
            &VelocityHeader {
                format: VELOCITY_FORMAT.into(),
                nx: g.nx,
                nz: g.nz,
                hx: g.hx,
                hz: g.hz,
                x0: g.x0,
                z0: g.z0,
                bc: self.bc,
                data: file_name(&payload),
            },
        )?;
        io::write_f64_le(&payload, &self.values)
    }

    pub fn read(header: &Path) -> Result<Self> {
        let h: VelocityHeader = io::read_json(header)?;
        io::expect_format(header, &h.format, VELOCITY_FORMAT)?;
        let grid = Grid2D::new(h.nx, h.nz, h.hx, h.hz, h.x0, h.z0)?;
        let payload = header.parent().unwrap_or(Path::new(".")).join(&h.data);
        let values = io::read_f64_le(&payload, grid.len())?;
        Self::new(grid, h.bc, values)
    }
}

pub(crate) fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Isotropic Gaussian `amplitude · exp(-|x - center|² / (2 width²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

/// Bumps are cut off beyond this many widths (relative value below 1.3e-14).
const BUMP_CUTOFF_WIDTHS: f64 = 8.0;

impl GaussianBump {
    pub fn value(&self, x: f64, z: f64) -> f64 {
        let dx = x - self.center[0];
        let dz = z - self.center[1];
        let r2 = dx * dx + dz * dz;
        if r2 > (BUMP_CUTOFF_WIDTHS * self.width).powi(2) {
            0.0
        } else {
            self.amplitude * (-r2 / (2.0 * self.width * self.width)).exp()
        }
    }

    /// `nbx × nbz` bumps at the cell centres of a uniform lattice over
    /// `domain`, width `width_factor` times the (geometric mean) lattice
    /// spacing, unit amplitude. Ordered x-major like the grid nodes.
    pub fn lattice(domain: &Domain, nbx: usize, nbz: usize, width_factor: f64) -> Vec<GaussianBump> {
        let sx = domain.width() / nbx as f64;
        let sz = domain.depth() / nbz as f64;
        let width = width_factor * (sx * sz).sqrt();
        let mut out = Vec::with_capacity(nbx * nbz);
        for i in 0..nbx {
            for j in 0..nbz {
                out.push(GaussianBump {
                    center: [domain.xmin + (i as f64 + 0.5) * sx, domain.zmin + (j as f64 + 0.5) * sz],
                    width,
                    amplitude: 1.0,
                });
            }
        }
        out
    }
}

/// Default bump width relative to the lattice spacing.
pub const DEFAULT_BUMP_WIDTH_FACTOR: f64 = 1.5;
/// Default lower clamp for evaluated velocities (m/s).
pub const DEFAULT_VELOCITY_FLOOR: f64 = 300.0;

/// Search space `v(x; η) = c_o(x) + Σ_l η_l φ_l(x)`.
#[derive(Debug, Clone)]
pub struct Parametrization {
    background: VelocityModel,
    basis: Vec<GaussianBump>,
    /// Current coefficients.
    pub eta: Vec<f64>,
    /// Lower clamp for evaluated velocities; `None` turns clamping off.
    pub floor: Option<f64>,
    footprints: Vec<Vec<(usize, f64)>>,
}

const PARAM_FORMAT: &str = "romvel-parametrization-v1";

#[derive(Serialize, Deserialize)]
struct ParametrizationFile {
    format: String,
    grid: Grid2D,
    bc: BoundaryConditions,
    background: Vec<f64>,
    basis: Vec<GaussianBump>,
    eta: Vec<f64>,
    floor: Option<f64>,
}

impl Parametrization {
    pub fn new(background: VelocityModel, basis: Vec<GaussianBump>) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::InvalidParameter("search space needs at least one basis function".into()));
        }
        let grid = *background.grid();
        let domain = grid.domain();
        for (l, b) in basis.iter().enumerate() {
            if !domain.contains(b.center[0], b.center[1]) {
                return Err(Error::InvalidParameter(format!("basis center {l} lies outside the domain")));
            }
            if !(b.width > 0.0 && b.amplitude.is_finite()) {
                return Err(Error::InvalidParameter(format!("basis function {l} has invalid width/amplitude")));
            }
        }
        let footprints = basis
            .iter()
            .map(|b| {
                (0..grid.len())
                    .filter_map(|k| {
                        let (x, z) = grid.point(k);
                        let v = b.value(x, z);
                        (v != 0.0).then_some((k, v))
                    })
                    .collect()
            })
            .collect();
        let n = basis.len();
        Ok(Self { background, basis, eta: vec![0.0; n], floor: Some(DEFAULT_VELOCITY_FLOOR), footprints })
    }

    pub fn with_floor(mut self, floor: Option<f64>) -> Self {
        self.floor = floor;
        self
    }

    pub fn background(&self) -> &VelocityModel {
        &self.background
    }

    pub fn basis(&self) -> &[GaussianBump] {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Velocity for coefficients `eta`.
    pub fn evaluate(&self, eta: &[f64]) -> Result<VelocityModel> {
        if eta.len() != self.basis.len() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients for {} basis functions",
                eta.len(),
                self.basis.len()
            )));
        }
        let mut values = self.background.values().to_vec();
        for (coef, fp) in eta.iter().zip(&self.footprints) {
            if *coef == 0.0 {
                continue;
            }
            for &(k, phi) in fp {
                values[k] += coef * phi;
            }
        }
        if let Some(floor) = self.floor {
            for v in &mut values {
                if *v < floor {
                    *v = floor;
                }
            }
        }
        VelocityModel::new(*self.background.grid(), self.background.bc(), values)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_json(
            path,
            &ParametrizationFile {
                format: PARAM_FORMAT.into(),
                grid: *self.background.grid(),
                bc: self.background.bc(),
                background: self.background.values().to_vec(),
                basis: self.basis.clone(),
                eta: self.eta.clone(),
                floor: self.floor,
            },
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f: ParametrizationFile = io::read_json(path)?;
        io::expect_format(path, &f.format, PARAM_FORMAT)?;
        let bg = VelocityModel::new(f.grid, f.bc, f.background)?;
        let mut p = Self::new(bg, f.basis)?.with_floor(f.floor);
        if f.eta.len() != p.len() {
            return Err(Error::Format { path: path.display().to_string(), reason: "eta length mismatch".into() });
        }
        p.eta = f.eta;
        Ok(p)
    }
}

/// `v(x; p.eta)`.
pub fn evaluate_velocity(p: &Parametrization) -> Result<VelocityModel> {
    p.evaluate(&p.eta)
}

/// Two half-spaces separated by a straight interface dipping to the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLayer {
    /// Interface depth at the left edge of the domain (m).
    pub depth_left: f64,
    /// `c_bottom / c_top`.
    pub contrast: f64,
    /// Interface drop across the domain width (m).
    #[serde(default = "TwoLayer::default_slope_drop")]
    pub slope_drop: f64,
    #[serde(default = "TwoLayer::default_c_top")]
    pub c_top: f64,
    /// Blend the two velocities by the fraction of each node's vertical cell
    /// below the interface, so the model moves continuously with the depth.
    /// Off: plain nodal membership.
    #[serde(default = "TwoLayer::default_cell_average")]
    pub cell_average: bool,
}

impl TwoLayer {
    pub const DEFAULT_SLOPE_DROP: f64 = 400.0;
    pub const DEFAULT_C_TOP: f64 = 1500.0;

    fn default_slope_drop() -> f64 {
        Self::DEFAULT_SLOPE_DROP
    }

    fn default_c_top() -> f64 {
        Self::DEFAULT_C_TOP
    }

    fn default_cell_average() -> bool {
        true
    }

    pub fn new(depth_left: f64, contrast: f64) -> Self {
        Self {
            depth_left,
            contrast,
            slope_drop: Self::DEFAULT_SLOPE_DROP,
            c_top: Self::DEFAULT_C_TOP,
            cell_average: true,
        }
    }

    /// Interface depth at horizontal position `x` within `domain`.
    pub fn interface_depth(&self, domain: &Domain, x: f64) -> f64 {
        domain.zmin + self.depth_left + self.slope_drop * (x - domain.xmin) / domain.width()
    }

    pub fn build(&self, grid: Grid2D, bc: BoundaryConditions) -> Result<VelocityModel> {
        let domain = grid.domain();
        if !(self.depth_left > 0.0 && self.depth_left < domain.depth()) {
            return Err(Error::InvalidParameter(format!(
                "interface depth {} m outside (0, {}) m",
                self.depth_left,
                domain.depth()
            )));
        }
        if !(self.contrast > 0.0 && self.c_top > 0.0) {
            return Err(Error::InvalidParameter("contrast and top velocity must be positive".into()));
        }
        let c_bottom = self.contrast * self.c_top;
        let hz = grid.hz;
        VelocityModel::from_fn(grid, bc, |x, z| {
            let zi = self.interface_depth(&domain, x);
            if self.cell_average {
                let below = ((z + 0.5 * hz - zi) / hz).clamp(0.0, 1.0);
                self.c_top + below * (c_bottom - self.c_top)
            } else if z > zi {
                c_bottom
            } else {
                self.c_top
            }
        })
    }
}

/// Two-layer model with the default slope and top velocity, Dirichlet walls.
pub fn make_two_layer_model(depth_left: f64, contrast: f64, grid: Grid2D) -> Result<VelocityModel> {
    TwoLayer::new(depth_left, contrast).build(grid, BoundaryConditions::dirichlet())
}

/// Disk inclusion in a constant background. Points on the circle count as
/// inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camembert {
    pub center: [f64; 2],
    pub radius: f64,
    pub c_inside: f64,
    pub c_outside: f64,
}

impl Default for Camembert {
    fn default() -> Self {
        Self { center: [1000.0, 1000.0], radius: 600.0, c_inside: 4000.0, c_outside: 3000.0 }
    }
}

impl Camembert {
    pub fn contains(&self, x: f64, z: f64) -> bool {
        let dx = x - self.center[0];
        let dz = z - self.center[1];
        dx * dx + dz * dz <= self.radius * self.radius
    }

    pub fn build(&self, grid: Grid2D, bc: BoundaryConditions) -> Result<VelocityModel> {
        let d = grid.domain();
        let [cx, cz] = self.center;
        let r = self.radius;
        if cx - r < d.xmin || cx + r > d.xmax || cz - r < d.zmin || cz + r > d.zmax {
            return Err(Error::DomainTooSmall(format!(
                "inclusion of radius {r} m at ({cx}, {cz}) does not fit in [{}, {}]×[{}, {}]",
                d.xmin, d.xmax, d.zmin, d.zmax
            )));
        }
        VelocityModel::from_fn(grid, bc, |x, z| if self.contains(x, z) { self.c_inside } else { self.c_outside })
    }
}

/// Camembert model with the standard geometry, Dirichlet walls.
pub fn make_camembert_model(grid: Grid2D) -> Result<VelocityModel> {
    Camembert::default().build(grid, BoundaryConditions::dirichlet())
}

/// Synthetic stand-in for a small sediment section: dipping layers with
/// velocity increasing in depth, offset by a normal fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultedLayers {
    /// Layer velocities from top to bottom (m/s).
    pub velocities: Vec<f64>,
    /// Dip of the layer interfaces (m of depth per m of x).
    pub dip: f64,
    /// Fault trace x position at the surface (m) and its throw (m).
    pub fault_x: f64,
    pub fault_throw: f64,
}

impl Default for FaultedLayers {
    fn default() -> Self {
        Self { velocities: vec![1700.0, 2000.0, 2400.0, 2900.0, 3500.0], dip: 0.08, fault_x: 550.0, fault_throw: 60.0 }
    }
}

impl FaultedLayers {
    pub fn build(&self, grid: Grid2D, bc: BoundaryConditions) -> Result<VelocityModel> {
        if self.velocities.is_empty() {
            return Err(Error::InvalidParameter("need at least one layer".into()));
        }
        let d = grid.domain();
        let thickness = d.depth() / self.velocities.len() as f64;
        VelocityModel::from_fn(grid, bc, |x, z| {
            // Fault plane dips at 60 degrees to the right.
            let hanging = x > self.fault_x + (z - d.zmin) / 3f64.sqrt();
            let shifted = z - d.zmin - self.dip * (x - d.xmin) - if hanging { self.fault_throw } else { 0.0 };
            let layer = (shifted / thickness).floor().clamp(0.0, (self.velocities.len() - 1) as f64);
            self.velocities[layer as usize]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid2D {
        Grid2D::covering(2000.0, 2500.0, 50.0).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate_sizes() {
        assert!(Grid2D::new(2, 10, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(Grid2D::new(10, 10, 0.0, 1.0, 0.0, 0.0).is_err());
        let g = grid();
        assert_eq!((g.nx, g.nz), (39, 49));
        let d = g.domain();
        assert!((d.xmax - 2000.0).abs() < 1e-9 && d.xmin.abs() < 1e-9);
        assert!((d.zmax - 2500.0).abs() < 1e-9);
    }

    #[test]
    fn zero_coefficients_return_background() {
        let bg = VelocityModel::from_fn(grid(), BoundaryConditions::dirichlet(), |x, z| 2000.0 + 0.1 * x + 0.2 * z)
            .unwrap();
        let basis = GaussianBump::lattice(&grid().domain(), 4, 5, DEFAULT_BUMP_WIDTH_FACTOR);
        let p = Parametrization::new(bg.clone(), basis).unwrap();
        assert_eq!(evaluate_velocity(&p).unwrap(), bg);
    }

    #[test]
    fn single_bump_at_its_center() {
        let g = grid();
        let bg = VelocityModel::constant(g, BoundaryConditions::dirichlet(), 3000.0).unwrap();
        let (x, z) = g.point(g.index(10, 20));
        let bump = GaussianBump { center: [x, z], width: 150.0, amplitude: 2.0 };
        let mut p = Parametrization::new(bg, vec![bump]).unwrap();
        p.eta = vec![100.0];
        let v = evaluate_velocity(&p).unwrap();
        assert_eq!(v.at(10, 20), 3000.0 + 100.0 * bump.value(x, z));
        assert_eq!(v.at(10, 20), 3200.0);
    }

    #[test]
    fn camembert_search_space_has_400_functions() {
        let g = grid();
        let basis = GaussianBump::lattice(&g.domain(), 20, 20, DEFAULT_BUMP_WIDTH_FACTOR);
        assert_eq!(basis.len(), 400);
        let bg = VelocityModel::constant(g, BoundaryConditions::dirichlet(), 3000.0).unwrap();
        assert_eq!(Parametrization::new(bg, basis).unwrap().len(), 400);
    }

    #[test]
    fn clamping_and_its_absence() {
        let g = grid();
        let bg = VelocityModel::constant(g, BoundaryConditions::dirichlet(), 1000.0).unwrap();
        let bump = GaussianBump { center: [1000.0, 1000.0], width: 200.0, amplitude: 1.0 };
        let p = Parametrization::new(bg, vec![bump]).unwrap();
        let v = p.evaluate(&[-5000.0]).unwrap();
        assert_eq!(v.min(), DEFAULT_VELOCITY_FLOOR);
        let p = p.with_floor(None);
        assert!(matches!(p.evaluate(&[-5000.0]), Err(Error::NonPositiveVelocity { .. })));
    }

    #[test]
    fn bump_decays_within_six_widths() {
        let b = GaussianBump { center: [0.0, 0.0], width: 100.0, amplitude: 1.0 };
        assert!(b.value(600.0, 0.0) < 1e-6);
        assert!(b.value(0.0, 599.0) > 1e-8);
        // Quadrature on a fine lattice approximates 2π w².
        let h = 10.0;
        let mut s = 0.0;
        for i in -100..=100 {
            for j in -100..=100 {
                s += b.value(i as f64 * h, j as f64 * h) * h * h;
            }
        }
        let exact = 2.0 * std::f64::consts::PI * 100.0 * 100.0;
        assert!((s - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn two_layer_reference_velocities() {
        let g = Grid2D::covering(3000.0, 2400.0, 40.0).unwrap();
        let v = make_two_layer_model(1200.0, 2.0, g).unwrap();
        assert_eq!(v.min(), 1500.0);
        assert_eq!(v.max(), 3000.0);
        let flat = make_two_layer_model(1200.0, 1.0, g).unwrap();
        assert!(flat.values().iter().all(|&c| c == 1500.0));
    }

    #[test]
    fn two_layer_matches_half_space_membership() {
        let g = Grid2D::covering(3000.0, 2400.0, 40.0).unwrap();
        let nodal = TwoLayer { cell_average: false, ..TwoLayer::new(1000.0, 1.5) };
        let v = nodal.build(g, BoundaryConditions::dirichlet()).unwrap();
        let smooth = make_two_layer_model(1000.0, 1.5, g).unwrap();
        // Interface passes through (0, 1000) and (3000, 1400).
        for k in 0..g.len() {
            let (x, z) = g.point(k);
            let zi = 1000.0 + 400.0 * x / 3000.0;
            let expected = if z > zi { 2250.0 } else { 1500.0 };
            assert_eq!(v.values()[k], expected, "node {k} at ({x}, {z})");
            if (z - zi).abs() >= 20.0 {
                assert_eq!(smooth.values()[k], expected);
            } else {
                let frac = (z + 20.0 - zi) / 40.0;
                assert!((smooth.values()[k] - 1500.0 - 750.0 * frac).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cell_averaged_interface_moves_continuously() {
        let g = Grid2D::covering(3000.0, 2400.0, 50.0).unwrap();
        let a = make_two_layer_model(1200.0, 2.0, g).unwrap();
        let b = make_two_layer_model(1201.0, 2.0, g).unwrap();
        let diff = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff > 0.0 && diff <= 1500.0 / 50.0 + 1e-9, "{diff}");
    }

    #[test]
    fn camembert_values() {
        let g = grid();
        let v = make_camembert_model(g).unwrap();
        // (1 km, 1 km) is a node: ix = 19, iz = 19.
        assert_eq!(g.point(g.index(19, 19)), (1000.0, 1000.0));
        assert_eq!(v.at(19, 19), 4000.0);
        assert_eq!(v.sample(0.0, 0.0), 3000.0);
        // (1 km, 1.6 km) is on the circle and a node.
        assert_eq!(g.point(g.index(19, 31)), (1000.0, 1600.0));
        assert_eq!(v.at(19, 31), 4000.0);
        let c = Camembert::default();
        assert!(c.contains(1000.0, 1600.0) && !c.contains(1000.0, 1600.0 + 1e-9));
        let small = Grid2D::covering(1500.0, 2500.0, 50.0).unwrap();
        assert!(matches!(make_camembert_model(small), Err(Error::DomainTooSmall(_))));
    }

    #[test]
    fn velocity_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        let v = make_camembert_model(grid()).unwrap();
        v.write(&path).unwrap();
        assert_eq!(VelocityModel::read(&path).unwrap(), v);
        let bytes = std::fs::read(dir.path().join("v.bin")).unwrap();
        assert_eq!(bytes.len(), 8 * v.grid().len());
        assert_eq!(f64::from_le_bytes(bytes[..8].try_into().unwrap()), v.values()[0]);
    }

    #[test]
    fn parametrization_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let bg = VelocityModel::constant(grid(), BoundaryConditions::dirichlet(), 3000.0).unwrap();
        let mut p = Parametrization::new(bg, GaussianBump::lattice(&grid().domain(), 3, 3, 1.5)).unwrap();
        p.eta = (0..9).map(|i| i as f64 * 3.5).collect();
        p.write(&path).unwrap();
        let q = Parametrization::read(&path).unwrap();
        assert_eq!(q.eta, p.eta);
        assert_eq!(evaluate_velocity(&q).unwrap(), evaluate_velocity(&p).unwrap());
    }

    #[test]
    fn factories_are_reproducible() {
        let g = grid();
        assert_eq!(make_camembert_model(g).unwrap(), make_camembert_model(g).unwrap());
        let f = FaultedLayers::default();
        let a = f.build(Grid2D::covering(1000.0, 600.0, 20.0).unwrap(), BoundaryConditions::dirichlet()).unwrap();
        let b = f.build(Grid2D::covering(1000.0, 600.0, 20.0).unwrap(), BoundaryConditions::dirichlet()).unwrap();
        assert_eq!(a, b);
        assert!(a.max() > a.min());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn linear_in_eta_without_clamping(
                e1 in proptest::collection::vec(-50.0f64..50.0, 6),
                e2 in proptest::collection::vec(-50.0f64..50.0, 6),
                a in -2.0f64..2.0,
                b in -2.0f64..2.0,
            ) {
                let g = Grid2D::covering(1000.0, 800.0, 50.0).unwrap();
                let bg = VelocityModel::constant(g, BoundaryConditions::dirichlet(), 2000.0).unwrap();
                let p = Parametrization::new(bg, GaussianBump::lattice(&g.domain(), 3, 2, 1.5)).unwrap();
                let mix: Vec<f64> = e1.iter().zip(&e2).map(|(x, y)| a * x + b * y).collect();
                let v1 = p.evaluate(&e1).unwrap();
                let v2 = p.evaluate(&e2).unwrap();
                let vm = p.evaluate(&mix).unwrap();
                for k in 0..g.len() {
                    let lhs = vm.values()[k] - 2000.0;
                    let rhs = a * (v1.values()[k] - 2000.0) + b * (v2.values()[k] - 2000.0);
                    prop_assert!((lhs - rhs).abs() < 1e-9);
                }
            }
        }
    }
}
