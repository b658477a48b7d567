use faer::Mat;

use crate::linalg;
use crate::model::{Boundary, Grid2D, VelocityModel};
use crate::Result;

/// Largest operator dimension for which a dense eigendecomposition is attempted.
pub const SPECTRAL_DIM_CAP: usize = 20_000;

/// Eigenpairs of the discrete operator, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

/// `A_h = -C L C` with `C = diag(c)` and `L` the five-point Laplacian.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    velocity: VelocityModel,
    inv_hx2: f64,
    inv_hz2: f64,
    eigen: Option<Eigen>,
}

pub fn build_operator(v: &VelocityModel) -> DiscreteOperator {
    DiscreteOperator::new(v.clone())
}

impl DiscreteOperator {
    pub fn new(velocity: VelocityModel) -> Self {
        let g = *velocity.grid();
        Self { velocity, inv_hx2: 1.0 / (g.hx * g.hx), inv_hz2: 1.0 / (g.hz * g.hz), eigen: None }
    }

    pub fn dim(&self) -> usize {
        self.velocity.grid().len()
    }

    pub fn velocity(&self) -> &VelocityModel {
        &self.velocity
    }

    pub fn grid(&self) -> &Grid2D {
        self.velocity.grid()
    }

    pub fn eigen(&self) -> Option<&Eigen> {
        self.eigen.as_ref()
    }

    /// `y = A_h u`.
    pub fn apply(&self, u: &[f64], y: &mut [f64]) {
        let g = self.velocity.grid();
        let (nx, nz) = (g.nx, g.nz);
        let c = self.velocity.values();
        let bc = self.velocity.bc();
        let (ax, az) = (self.inv_hx2, self.inv_hz2);
        // Ghost handling: Dirichlet contributes a zero neighbour, Neumann
        // mirrors the node so the difference across the wall vanishes.
        let top_self = if bc.top == Boundary::Neumann { 1.0 } else { 0.0 };
        let bot_self = if bc.bottom == Boundary::Neumann { 1.0 } else { 0.0 };
        let left_self = if bc.left == Boundary::Neumann { 1.0 } else { 0.0 };
        let right_self = if bc.right == Boundary::Neumann { 1.0 } else { 0.0 };
        for ix in 0..nx {
            let base = ix * nz;
            for iz in 0..nz {
                let k = base + iz;
                let wk = c[k] * u[k];
                let west = if ix > 0 { c[k - nz] * u[k - nz] } else { left_self * wk };
                let east = if ix + 1 < nx { c[k + nz] * u[k + nz] } else { right_self * wk };
                let north = if iz > 0 { c[k - 1] * u[k - 1] } else { top_self * wk };
                let south = if iz + 1 < nz { c[k + 1] * u[k + 1] } else { bot_self * wk };
                let lap = ax * (west + east - 2.0 * wk) + az * (north + south - 2.0 * wk);
                y[k] = -c[k] * lap;
            }
        }
    }

    pub fn apply_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; u.len()];
        self.apply(u, &mut y);
        y
    }

    /// Diagonal entry and the off-diagonal entries of row `k` as `(col, value)`.
    fn row(&self, k: usize) -> (f64, [(usize, f64); 4], usize) {
        let g = self.velocity.grid();
        let c = self.velocity.values();
        let bc = self.velocity.bc();
        let (ix, iz) = g.node(k);
        let (ax, az) = (self.inv_hx2, self.inv_hz2);
        let mut diag = 2.0 * ax + 2.0 * az;
        let mut off = [(0usize, 0.0f64); 4];
        let mut n = 0;
        let mut neighbour = |cond: bool, j: usize, a: f64, wall: Boundary, diag: &mut f64| {
            if cond {
                off[n] = (j, -c[k] * c[j] * a);
                n += 1;
            } else if wall == Boundary::Neumann {
                *diag -= a;
            }
        };
        neighbour(ix > 0, k.wrapping_sub(g.nz), ax, bc.left, &mut diag);
        neighbour(ix + 1 < g.nx, k + g.nz, ax, bc.right, &mut diag);
        neighbour(iz > 0, k.wrapping_sub(1), az, bc.top, &mut diag);
        neighbour(iz + 1 < g.nz, k + 1, az, bc.bottom, &mut diag);
        (c[k] * c[k] * diag, off, n)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.dim();
        let mut a = Mat::zeros(n, n);
        for k in 0..n {
            let (d, off, cnt) = self.row(k);
            a[(k, k)] = d;
            for &(j, v) in &off[..cnt] {
                a[(k, j)] = v;
            }
        }
        a
    }

    /// Gershgorin upper bound on the spectrum (the operator is positive
    /// semidefinite, so `[0, bound]` encloses it).
    pub fn spectral_bound(&self) -> f64 {
        (0..self.dim())
            .map(|k| {
                let (d, off, cnt) = self.row(k);
                d + off[..cnt].iter().map(|(_, v)| v.abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Computes and stores the full eigendecomposition.
    pub fn with_eigen(mut self) -> Result<Self> {
        self.compute_eigen()?;
        Ok(self)
    }

    pub fn compute_eigen(&mut self) -> Result<&Eigen> {
        if self.eigen.is_none() {
            let (values, vectors) = linalg::sym_eigen(self.to_dense().as_ref())?;
            self.eigen = Some(Eigen { values, vectors });
        }
        Ok(self.eigen.as_ref().expect("just computed"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundaryConditions;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn uniform(rng: &mut StdRng) -> f64 {
        rng.random::<f64>() - 0.5
    }

    fn random_model(bc: BoundaryConditions) -> VelocityModel {
        let g = Grid2D::new(9, 7, 30.0, 25.0, 30.0, 25.0).unwrap();
        let mut s = StdRng::seed_from_u64(7);
        let values = (0..g.len()).map(|_| 2000.0 + 800.0 * uniform(&mut s)).collect();
        VelocityModel::new(g, bc, values).unwrap()
    }

    #[test]
    fn symmetric_on_random_pairs() {
        for bc in [
            BoundaryConditions::dirichlet(),
            BoundaryConditions { top: Boundary::Neumann, ..BoundaryConditions::dirichlet() },
            BoundaryConditions::uniform(Boundary::Neumann),
        ] {
            let op = build_operator(&random_model(bc));
            let mut s = StdRng::seed_from_u64(11);
            for _ in 0..10 {
                let u: Vec<f64> = (0..op.dim()).map(|_| uniform(&mut s)).collect();
                let w: Vec<f64> = (0..op.dim()).map(|_| uniform(&mut s)).collect();
                let au = op.apply_vec(&u);
                let aw = op.apply_vec(&w);
                let lhs: f64 = au.iter().zip(&w).map(|(a, b)| a * b).sum();
                let rhs: f64 = u.iter().zip(&aw).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));
            }
        }
    }

    #[test]
    fn dense_matches_matrix_free() {
        let bc = BoundaryConditions { left: Boundary::Neumann, ..BoundaryConditions::dirichlet() };
        let op = build_operator(&random_model(bc));
        let a = op.to_dense();
        let mut s = StdRng::seed_from_u64(5);
        let u: Vec<f64> = (0..op.dim()).map(|_| uniform(&mut s)).collect();
        let y = op.apply_vec(&u);
        for i in 0..op.dim() {
            let yi: f64 = (0..op.dim()).map(|j| a[(i, j)] * u[j]).sum();
            assert!((yi - y[i]).abs() <= 1e-10 * y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        assert!(linalg::asymmetry(a.as_ref()) == 0.0);
    }

    #[test]
    fn constant_velocity_lowest_mode() {
        let g = Grid2D::covering(2000.0, 2000.0, 100.0).unwrap();
        assert_eq!((g.nx, g.nz), (19, 19));
        let c = 1500.0;
        let op = build_operator(&VelocityModel::constant(g, BoundaryConditions::dirichlet(), c).unwrap());
        // Lowest discrete sine mode.
        let mode: Vec<f64> = (0..g.len())
            .map(|k| {
                let (ix, iz) = g.node(k);
                (PI * (ix + 1) as f64 / 20.0).sin() * (PI * (iz + 1) as f64 / 20.0).sin()
            })
            .collect();
        let lam1 = 2.0 * (4.0 / (100.0f64 * 100.0)) * (PI / 40.0).sin().powi(2);
        let y = op.apply_vec(&mode);
        for (a, b) in y.iter().zip(&mode) {
            assert!((a - c * c * lam1 * b).abs() < 1e-9 * c * c * lam1);
        }
        let op = op.with_eigen().unwrap();
        let lmin = op.eigen().unwrap().values[0];
        assert!((lmin - c * c * lam1).abs() < 1e-10 * lmin);
        // Continuum limit c²π²(1/Lx² + 1/Lz²) is approached from below.
        let continuum = c * c * PI * PI * (2.0 / (2000.0f64 * 2000.0));
        assert!(lmin < continuum && lmin > 0.99 * continuum);
        assert!(op.spectral_bound() >= *op.eigen().unwrap().values.last().unwrap());
    }

    #[test]
    fn neumann_everywhere_has_a_null_direction() {
        let g = Grid2D::new(6, 5, 10.0, 10.0, 0.0, 0.0).unwrap();
        let v = VelocityModel::constant(g, BoundaryConditions::uniform(Boundary::Neumann), 2.0).unwrap();
        let op = build_operator(&v).with_eigen().unwrap();
        assert!(op.eigen().unwrap().values[0].abs() < 1e-10);
        let d = build_operator(&VelocityModel::constant(g, BoundaryConditions::dirichlet(), 2.0).unwrap())
            .with_eigen()
            .unwrap();
        assert!(d.eigen().unwrap().values[0] > 0.0);
    }
}
