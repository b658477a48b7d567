//! Mass and stiffness matrices from data, block Cholesky, and the projected
//! operator `A_rom = R^{-T} S R^{-1}`.

use std::path::Path;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::forward::DataSet;
use crate::{io, linalg, Error, Result};

/// Gram matrices of the snapshots, `M = ⟨U, U⟩` and `S = ⟨U, A U⟩`.
#[derive(Debug, Clone)]
pub struct MassStiffness {
    pub mass: Mat<f64>,
    pub stiffness: Mat<f64>,
    pub m: usize,
    pub n: usize,
}

fn assemble_blocks(samples: &[Mat<f64>], m: usize, n: usize, sign: f64) -> Mat<f64> {
    let mut out = Mat::zeros(n * m, n * m);
    for bi in 0..n {
        for bj in 0..n {
            let a = &samples[bi + bj];
            let b = &samples[bi.abs_diff(bj)];
            for i in 0..m {
                for j in 0..m {
                    out[(bi * m + i, bj * m + j)] = sign * 0.5 * (a[(i, j)] + b[(i, j)]);
                }
            }
        }
    }
    out
}

/// Block `(i, j)` is `½(D_{i+j} + D_{|i-j|})`.
pub fn assemble_mass(ds: &DataSet) -> Mat<f64> {
    assemble_blocks(&ds.d, ds.m, ds.n, 1.0)
}

/// Block `(i, j)` is `-½(D̈_{i+j} + D̈_{|i-j|})`.
pub fn assemble_stiffness(ds: &DataSet) -> Mat<f64> {
    assemble_blocks(&ds.ddot, ds.m, ds.n, -1.0)
}

pub fn assemble(ds: &DataSet) -> MassStiffness {
    MassStiffness { mass: assemble_mass(ds), stiffness: assemble_stiffness(ds), m: ds.m, n: ds.n }
}

/// Block upper-triangular `R` with `RᵀR = M`, block size `m`.
///
/// Right-looking over `m×m` panels. Each diagonal block is the upper
/// triangular Cholesky factor (positive diagonal) of its Schur complement.
pub fn block_cholesky(mass: MatRef<'_, f64>, m: usize) -> Result<Mat<f64>> {
    let dim = mass.nrows();
    if mass.ncols() != dim || m == 0 || dim % m != 0 {
        return Err(Error::InvalidParameter(format!("{}×{} matrix with block size {m}", dim, mass.ncols())));
    }
    let nb = dim / m;
    // Work on the upper triangle only; the lower part of `a` is never read.
    let mut a = mass.to_owned();
    let mut r = Mat::<f64>::zeros(dim, dim);
    for b in 0..nb {
        let o = b * m;
        // Diagonal block: scalar Cholesky of the Schur complement.
        for i in 0..m {
            let mut p = a[(o + i, o + i)];
            for k in 0..i {
                p -= r[(o + k, o + i)] * r[(o + k, o + i)];
            }
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::MassNotSpd { block: b });
            }
            let p = p.sqrt();
            r[(o + i, o + i)] = p;
            for j in i + 1..m {
                let mut s = a[(o + i, o + j)];
                for k in 0..i {
                    s -= r[(o + k, o + i)] * r[(o + k, o + j)];
                }
                r[(o + i, o + j)] = s / p;
            }
        }
        if o + m == dim {
            break;
        }
        // Panel: R_bb^T R_{b,rest} = A_{b,rest}.
        let rest = dim - o - m;
        let mut panel = a.as_ref().submatrix(o, o + m, m, rest).to_owned();
        linalg::solve_upper_transpose_in_place(r.as_ref().submatrix(o, o, m, m), &mut panel);
        for i in 0..m {
            for j in 0..rest {
                r[(o + i, o + m + j)] = panel[(i, j)];
            }
        }
        // Trailing update A_rest -= panelᵀ panel (upper triangle).
        for j in 0..rest {
            for i in 0..=j {
                let mut s = 0.0;
                for k in 0..m {
                    s += panel[(k, i)] * panel[(k, j)];
                }
                a[(o + m + i, o + m + j)] -= s;
            }
        }
    }
    Ok(r)
}

/// [`block_cholesky`] with one retry on `M + εI`, `ε = rel·‖M‖_F`, after failure.
pub fn block_cholesky_with_jitter(mass: MatRef<'_, f64>, m: usize, rel: f64) -> Result<Mat<f64>> {
    match block_cholesky(mass, m) {
        Err(Error::MassNotSpd { .. }) if rel > 0.0 => {
            let eps = rel * linalg::frobenius(mass);
            let shifted = Mat::from_fn(mass.nrows(), mass.ncols(), |i, j| mass[(i, j)] + if i == j { eps } else { 0.0 });
            block_cholesky(shifted.as_ref(), m)
        }
        other => other,
    }
}

/// Default relative jitter when enabled.
pub const DEFAULT_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RomOptions {
    /// Relative diagonal shift for a single retry after a failed factorization.
    #[serde(default)]
    pub jitter: Option<f64>,
}

/// The projected operator together with the Cholesky factor of the mass matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRom {
    pub a_rom: Mat<f64>,
    pub r: Mat<f64>,
    pub m: usize,
    pub n: usize,
}

/// `R^{-T} S R^{-1}` by two forward substitutions, then symmetrized.
pub fn project(r: MatRef<'_, f64>, stiffness: MatRef<'_, f64>) -> Mat<f64> {
    let mut y = stiffness.to_owned();
    linalg::solve_upper_transpose_in_place(r, &mut y);
    // S is symmetric, so (R^{-T} S)ᵀ = S R^{-1}.
    let mut x = y.transpose().to_owned();
    linalg::solve_upper_transpose_in_place(r, &mut x);
    linalg::symmetrize(&x)
}

pub fn build_rom(ds: &DataSet) -> Result<OperatorRom> {
    build_rom_with(ds, &RomOptions::default())
}

pub fn build_rom_with(ds: &DataSet, opts: &RomOptions) -> Result<OperatorRom> {
    let ms = assemble(ds);
    let r = match opts.jitter {
        Some(rel) => block_cholesky_with_jitter(ms.mass.as_ref(), ds.m, rel)?,
        None => block_cholesky(ms.mass.as_ref(), ds.m)?,
    };
    let a_rom = project(r.as_ref(), ms.stiffness.as_ref());
    Ok(OperatorRom { a_rom, r, m: ds.m, n: ds.n })
}

const ROM_FORMAT: &str = "romvel-rom-v1";

#[derive(Serialize, Deserialize)]
struct RomHeader {
    format: String,
    m: usize,
    n: usize,
    /// Payload: `A_rom` then `R`, each row-major.
    data: String,
}

impl OperatorRom {
    pub fn dim(&self) -> usize {
        self.m * self.n
    }

    /// Upper-left `km × km` block.
    pub fn restrict(&self, k: usize) -> Result<Mat<f64>> {
        if k == 0 || k > self.n {
            return Err(Error::IndexOutOfRange { k, n: self.n });
        }
        let s = k * self.m;
        Ok(self.a_rom.as_ref().submatrix(0, 0, s, s).to_owned())
    }

    /// Coordinates of the initial states in the orthonormal ROM basis: the
    /// first block column of `R` (nonzero only in its leading block).
    pub fn initial_block(&self) -> Mat<f64> {
        self.r.as_ref().submatrix(0, 0, self.dim(), self.m).to_owned()
    }

    pub fn write(&self, header: &Path) -> Result<()> {
        let payload = io::payload_path(header);
        io::write_json(
            header,
            &RomHeader { format: ROM_FORMAT.into(), m: self.m, n: self.n, data: crate::model::file_name(&payload) },
        )?;
        let mut flat = linalg::to_row_major(self.a_rom.as_ref());
        flat.extend(linalg::to_row_major(self.r.as_ref()));
        io::write_f64_le(&payload, &flat)
    }

    pub fn read(header: &Path) -> Result<Self> {
        let h: RomHeader = io::read_json(header)?;
        io::expect_format(header, &h.format, ROM_FORMAT)?;
        let dim = h.m * h.n;
        if dim == 0 {
            return Err(Error::Format { path: header.display().to_string(), reason: "m and n must be positive".into() });
        }
        let payload = header.parent().unwrap_or(Path::new(".")).join(&h.data);
        let flat = io::read_f64_le(&payload, 2 * dim * dim)?;
        let (a, r) = flat.split_at(dim * dim);
        Ok(Self {
            a_rom: linalg::from_row_major(dim, dim, a),
            r: linalg::from_row_major(dim, dim, r),
            m: h.m,
            n: h.n,
        })
    }
}

/// Entries of the first `dm` diagonals of a `km × km` matrix, row-major over
/// the kept band: row `r`, columns `r..min(r + dm, km)`.
pub fn rest_dk(x: MatRef<'_, f64>, m: usize, d: usize) -> Result<Vec<f64>> {
    let size = x.nrows();
    if x.ncols() != size || m == 0 || size % m != 0 {
        return Err(Error::InvalidParameter(format!("{}×{} matrix with block size {m}", size, x.ncols())));
    }
    let k = size / m;
    if d == 0 || d > k {
        return Err(Error::BandExceedsMatrix { d, k });
    }
    let band = d * m;
    let mut out = Vec::with_capacity(rest_len(m, k, d));
    for r in 0..size {
        for c in r..(r + band).min(size) {
            out.push(x[(r, c)]);
        }
    }
    Ok(out)
}

/// `dm·km − dm(dm−1)/2`.
pub fn rest_len(m: usize, k: usize, d: usize) -> usize {
    let (dm, km) = (d * m, k * m);
    dm * km - dm * (dm - 1) / 2
}

/// Upper triangle including the diagonal, row-major.
pub fn triu_vec(x: MatRef<'_, f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for r in 0..n {
        for c in r..n {
            out.push(x[(r, c)]);
        }
    }
    out
}

/// Spectral conditioning summary of a ROM and its mass matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub m: usize,
    pub n: usize,
    pub mass_eig_min: f64,
    pub mass_eig_max: f64,
    pub mass_condition: f64,
    pub rom_eig_min: f64,
    pub rom_eig_max: f64,
    pub rom_condition: f64,
    pub r_diag_min: f64,
    pub r_diag_max: f64,
}

pub fn condition_report(ds: &DataSet, rom: &OperatorRom) -> Result<ConditionReport> {
    let mass = linalg::sym_eigenvalues(assemble_mass(ds).as_ref())?;
    let a = linalg::sym_eigenvalues(rom.a_rom.as_ref())?;
    let diag: Vec<f64> = (0..rom.dim()).map(|i| rom.r[(i, i)]).collect();
    let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cond = |v: &[f64]| hi(v) / lo(v);
    Ok(ConditionReport {
        m: rom.m,
        n: rom.n,
        mass_eig_min: lo(&mass),
        mass_eig_max: hi(&mass),
        mass_condition: cond(&mass),
        rom_eig_min: lo(&a),
        rom_eig_max: hi(&a),
        rom_condition: cond(&a),
        r_diag_min: lo(&diag),
        r_diag_max: hi(&diag),
    })
}
