//! Density estimation: cloud-in-cell deposition onto a uniform grid and
//! `L^p` norms of the deposited field.

use crate::ensemble::PhaseEnsemble;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

pub const DEFAULT_CELL_CAP: usize = 1 << 24;

/// Density samples on a uniform grid with cell size `h`; `values` holds
/// density-per-unit-volume, row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub dim: usize,
    pub origin: Vec<f64>,
    pub h: f64,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn cell_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Deposited mass: `h^dim * sum(values)`.
    pub fn mass(&self) -> f64 {
        let cell_vol = self.h.powi(self.dim as i32);
        cell_vol * pairwise_sum(self.values.len(), &|i| self.values[i])
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn occupied_cells(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }

    /// Center coordinate of the cell with flat index `idx`.
    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        let mut rest = idx;
        let mut coords = vec![0usize; self.dim];
        for a in (0..self.dim).rev() {
            coords[a] = rest % self.shape[a];
            rest /= self.shape[a];
        }
        coords
            .iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + (i as f64 + 0.5) * self.h)
            .collect()
    }
}

fn grid_frame(
    lo: &[f64],
    hi: &[f64],
    h: f64,
    cap: usize,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let dim = lo.len();
    let mut origin = vec![0.0; dim];
    let mut shape = vec![0usize; dim];
    let mut cells: usize = 1;
    for a in 0..dim {
        // halo cells on both sides keep every CIC stencil in range, and the
        // 1.5h offset puts the bounding-box corner on a cell center
        origin[a] = lo[a] - 1.5 * h;
        let span = (hi[a] - lo[a]).max(0.0);
        shape[a] = (span / h).ceil() as usize + 3;
        cells = cells.saturating_mul(shape[a]);
    }
    if cells > cap {
        return Err(Error::GridTooLarge {
            requested: cells,
            cap,
        });
    }
    Ok((origin, shape))
}

fn deposit_weighted(
    ensemble: &PhaseEnsemble,
    h: f64,
    cap: usize,
    marker_value: impl Fn(usize) -> f64,
) -> Result<GridDensity> {
    if !(h > 0.0) {
        return Err(Error::Config("grid cell size must be > 0".into()));
    }
    let dim = ensemble.dim();
    let (lo, hi) = ensemble.position_bbox();
    let (origin, shape) = grid_frame(&lo, &hi, h, cap)?;
    let cells: usize = shape.iter().product();
    let mut masses = vec![0.0f64; cells];

    let mut strides = vec![1usize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }

    for i in 0..ensemble.len() {
        let x = ensemble.position(i);
        let value = marker_value(i);
        if value == 0.0 {
            continue;
        }
        // multilinear (cloud-in-cell) weights over the 2^dim neighbours
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..dim {
            let u = (x[a] - origin[a]) / h - 0.5;
            let b = u.floor();
            base[a] = b as usize;
            frac[a] = u - b;
            debug_assert!(b >= 0.0 && base[a] + 1 < shape[a], "CIC stencil out of range");
        }
        let corners = 1usize << dim;
        for corner in 0..corners {
            let mut idx = 0usize;
            let mut w = value;
            for a in 0..dim {
                let up = (corner >> a) & 1;
                idx += (base[a] + up) * strides[a];
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            masses[idx] += w;
        }
    }

    let cell_vol = h.powi(dim as i32);
    for m in &mut masses {
        *m /= cell_vol;
    }
    Ok(GridDensity {
        dim,
        origin,
        h,
        shape,
        values: masses,
    })
}

/// Cloud-in-cell deposition of marker weights onto a grid covering the
/// ensemble bounding box plus one halo cell; exact mass conservation.
pub fn deposit_density(ensemble: &PhaseEnsemble, h: f64) -> Result<GridDensity> {
    deposit_density_capped(ensemble, h, DEFAULT_CELL_CAP)
}

pub fn deposit_density_capped(
    ensemble: &PhaseEnsemble,
    h: f64,
    cap: usize,
) -> Result<GridDensity> {
    deposit_weighted(ensemble, h, cap, |i| ensemble.weight(i))
}

/// Deposition of the velocity partial moment: each marker carries
/// `w_i |V_i|^n`.
pub fn partial_moment_density(ensemble: &PhaseEnsemble, n: f64, h: f64) -> Result<GridDensity> {
    deposit_weighted(ensemble, h, DEFAULT_CELL_CAP, |i| {
        let v = ensemble.velocity(i);
        let speed = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        ensemble.weight(i) * if n == 0.0 { 1.0 } else { speed.powf(n) }
    })
}

/// `L^p` norm of the gridded density: `(h^dim sum v^p)^{1/p}`, max for
/// `p = infinity`.
pub fn lp_norm_density(grid: &GridDensity, p: f64) -> f64 {
    if p.is_infinite() {
        return grid.max_value();
    }
    assert!(p >= 1.0, "lp_norm_density needs p >= 1");
    let cell_vol = grid.h.powi(grid.dim as i32);
    let sum = pairwise_sum(grid.values.len(), &|i| grid.values[i].powf(p));
    (cell_vol * sum).powf(1.0 / p)
}
