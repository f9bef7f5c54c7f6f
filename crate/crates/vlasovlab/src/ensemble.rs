//! Phase-space marker ensembles and their construction from analytic
//! initial data.
//!
//! A solution is represented by weighted markers moving along
//! characteristics. The transported value of the distribution function is
//! stored per marker and never mutated, so every `L^p` norm of `f` is exact
//! at all times and only density-dependent quantities need estimation.

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};

/// Weighted phase-space markers: positions, velocities, quadrature weights
/// and the transported values of the initial distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEnsemble {
    dim: usize,
    time: f64,
    /// Marker-major layout, `n * dim` entries.
    positions: Vec<f64>,
    velocities: Vec<f64>,
    weights: Vec<f64>,
    fvalues: Vec<f64>,
}

impl PhaseEnsemble {
    pub fn new(
        dim: usize,
        time: f64,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        weights: Vec<f64>,
        fvalues: Vec<f64>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDim(dim));
        }
        let n = weights.len();
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if positions.len() != n * dim || velocities.len() != n * dim || fvalues.len() != n {
            return Err(Error::Invalid(format!(
                "ensemble column lengths disagree: {} positions, {} velocities, {} weights, {} fvalues (dim {})",
                positions.len(),
                velocities.len(),
                n,
                fvalues.len(),
                dim
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid("weights must be finite and >= 0".into()));
        }
        if fvalues.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Invalid("fvalues must be finite and >= 0".into()));
        }
        Ok(Self {
            dim,
            time,
            positions,
            velocities,
            weights,
            fvalues,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    #[inline]
    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    #[inline]
    pub fn fvalue(&self, i: usize) -> f64 {
        self.fvalues[i]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn fvalues(&self) -> &[f64] {
        &self.fvalues
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub(crate) fn velocities_mut(&mut self) -> &mut [f64] {
        &mut self.velocities
    }

    /// Total mass, by deterministic pairwise summation.
    pub fn mass(&self) -> f64 {
        pairwise_sum(self.len(), &|i| self.weights[i])
    }

    /// Sup norm of the distribution function: exact at all times because
    /// fvalues are transported unchanged along characteristics.
    pub fn sup_norm_f(&self) -> f64 {
        self.fvalues.iter().copied().fold(0.0, f64::max)
    }

    /// `L^r` norm of `f` for finite `r >= 1`, computed as the transported
    /// quadrature `(sum_i w_i f_i^{r-1})^{1/r}`, which is exact under the
    /// marker representation.
    pub fn lr_norm_f(&self, r: f64) -> f64 {
        assert!(r >= 1.0, "lr_norm_f needs r >= 1");
        if r.is_infinite() {
            return self.sup_norm_f();
        }
        pairwise_sum(self.len(), &|i| {
            self.weights[i] * self.fvalues[i].powf(r - 1.0)
        })
        .powf(1.0 / r)
    }

    /// Axis-aligned bounding box of the marker positions: `(min, max)` per axis.
    pub fn position_bbox(&self) -> (Vec<f64>, Vec<f64>) {
        bbox(self.dim, &self.positions)
    }

    pub fn velocity_bbox(&self) -> (Vec<f64>, Vec<f64>) {
        bbox(self.dim, &self.velocities)
    }

    /// Mean inter-marker spacing in position space,
    /// `(bbox volume / N)^(1/dim)`; used for default softening and grid sizing.
    pub fn mean_spacing_x(&self) -> f64 {
        let (lo, hi) = self.position_bbox();
        let mut vol = 1.0;
        for a in 0..self.dim {
            vol *= (hi[a] - lo[a]).max(1e-12);
        }
        (vol / self.len() as f64).powf(1.0 / self.dim as f64)
    }

    /// Returns true when any kinematic entry is non-finite.
    pub fn has_non_finite(&self) -> bool {
        self.positions.iter().any(|x| !x.is_finite())
            || self.velocities.iter().any(|x| !x.is_finite())
    }

    /// Shift every marker by `dx` in position and `dv` in velocity.
    pub fn shifted(&self, dx: &[f64], dv: &[f64]) -> Result<Self> {
        if dx.len() != self.dim || dv.len() != self.dim {
            return Err(Error::Invalid(
                "shift vectors must match the ensemble dimension".into(),
            ));
        }
        let mut out = self.clone();
        for i in 0..out.len() {
            for a in 0..out.dim {
                out.positions[i * out.dim + a] += dx[a];
                out.velocities[i * out.dim + a] += dv[a];
            }
        }
        Ok(out)
    }
}

fn bbox(dim: usize, flat: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for chunk in flat.chunks_exact(dim) {
        for a in 0..dim {
            lo[a] = lo[a].min(chunk[a]);
            hi[a] = hi[a].max(chunk[a]);
        }
    }
    (lo, hi)
}

/// Analytic initial-data families.
///
/// All densities are non-negative and either rapidly decaying or compactly
/// supported, so a tensor grid over a finite box captures the analytic mass
/// to the documented tolerance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum InitialData {
    /// `A exp(-|x|^2 / 2 sx^2 - |v|^2 / 2 sv^2)`
    Gaussian {
        amplitude: f64,
        sigma_x: f64,
        sigma_v: f64,
    },
    /// Gaussian with mean position and velocity offsets.
    ShiftedGaussian {
        amplitude: f64,
        sigma_x: f64,
        sigma_v: f64,
        #[serde(default)]
        x_shift: Vec<f64>,
        #[serde(default)]
        v_shift: Vec<f64>,
    },
    /// Two counter-streaming Gaussian beams along velocity axis 0.
    TwoStream {
        amplitude: f64,
        sigma_x: f64,
        sigma_v: f64,
        stream_speed: f64,
    },
    /// Compactly supported bump `A (1-|x|^2/Rx^2)_+^2 (1-|v|^2/Rv^2)_+^2`.
    Bump {
        amplitude: f64,
        radius_x: f64,
        radius_v: f64,
    },
    /// `A` on `[0, extent_x]^d x [0, extent_v]^d`, for quadrature tests.
    UniformBox {
        amplitude: f64,
        extent_x: f64,
        extent_v: f64,
    },
}

impl InitialData {
    /// Evaluate `f^in` at phase point `(x, v)`.
    pub fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        match self {
            InitialData::Gaussian {
                amplitude,
                sigma_x,
                sigma_v,
            } => {
                let qx: f64 = x.iter().map(|c| c * c).sum();
                let qv: f64 = v.iter().map(|c| c * c).sum();
                amplitude
                    * (-0.5 * qx / (sigma_x * sigma_x) - 0.5 * qv / (sigma_v * sigma_v)).exp()
            }
            InitialData::ShiftedGaussian {
                amplitude,
                sigma_x,
                sigma_v,
                x_shift,
                v_shift,
            } => {
                let qx: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(a, c)| {
                        let d = c - x_shift.get(a).copied().unwrap_or(0.0);
                        d * d
                    })
                    .sum();
                let qv: f64 = v
                    .iter()
                    .enumerate()
                    .map(|(a, c)| {
                        let d = c - v_shift.get(a).copied().unwrap_or(0.0);
                        d * d
                    })
                    .sum();
                amplitude
                    * (-0.5 * qx / (sigma_x * sigma_x) - 0.5 * qv / (sigma_v * sigma_v)).exp()
            }
            InitialData::TwoStream {
                amplitude,
                sigma_x,
                sigma_v,
                stream_speed,
            } => {
                let qx: f64 = x.iter().map(|c| c * c).sum();
                let sv2 = sigma_v * sigma_v;
                let qperp: f64 = v.iter().skip(1).map(|c| c * c).sum();
                let dplus = v[0] - stream_speed;
                let dminus = v[0] + stream_speed;
                0.5 * amplitude
                    * (-0.5 * qx / (sigma_x * sigma_x)).exp()
                    * ((-0.5 * (dplus * dplus + qperp) / sv2).exp()
                        + (-0.5 * (dminus * dminus + qperp) / sv2).exp())
            }
            InitialData::Bump {
                amplitude,
                radius_x,
                radius_v,
            } => {
                let qx: f64 = x.iter().map(|c| c * c).sum::<f64>() / (radius_x * radius_x);
                let qv: f64 = v.iter().map(|c| c * c).sum::<f64>() / (radius_v * radius_v);
                let px = (1.0 - qx).max(0.0);
                let pv = (1.0 - qv).max(0.0);
                amplitude * px * px * pv * pv
            }
            InitialData::UniformBox {
                amplitude,
                extent_x,
                extent_v,
            } => {
                let inside_x = x.iter().all(|c| (0.0..=*extent_x).contains(c));
                let inside_v = v.iter().all(|c| (0.0..=*extent_v).contains(c));
                if inside_x && inside_v {
                    *amplitude
                } else {
                    0.0
                }
            }
        }
    }

    /// Exact analytic mass of `f^in` in dimension `d`.
    pub fn analytic_mass(&self, d: usize) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        match self {
            InitialData::Gaussian {
                amplitude,
                sigma_x,
                sigma_v,
            }
            | InitialData::ShiftedGaussian {
                amplitude,
                sigma_x,
                sigma_v,
                ..
            }
            | InitialData::TwoStream {
                amplitude,
                sigma_x,
                sigma_v,
                ..
            } => {
                amplitude
                    * (tau * sigma_x * sigma_x).powf(d as f64 / 2.0)
                    * (tau * sigma_v * sigma_v).powf(d as f64 / 2.0)
            }
            InitialData::Bump {
                amplitude,
                radius_x,
                radius_v,
            } => {
                // int_{|u|<=1} (1-|u|^2)^2 du = pi/3 (d=2), 32 pi/105 (d=3)
                let c = match d {
                    2 => std::f64::consts::PI / 3.0,
                    3 => 32.0 * std::f64::consts::PI / 105.0,
                    _ => unreachable!(),
                };
                amplitude * c * radius_x.powi(d as i32) * c * radius_v.powi(d as i32)
            }
            InitialData::UniformBox {
                amplitude,
                extent_x,
                extent_v,
            } => amplitude * extent_x.powi(d as i32) * extent_v.powi(d as i32),
        }
    }

    /// Per-axis sampling box `(lo, hi)` for the position and velocity axes,
    /// given a truncation radius measured in standard deviations (Gaussian
    /// families) or absolute units (compact families ignore it).
    fn boxes(&self, radius: f64) -> ((f64, f64), (f64, f64)) {
        match self {
            InitialData::Gaussian {
                sigma_x, sigma_v, ..
            } => (
                (-radius * sigma_x, radius * sigma_x),
                (-radius * sigma_v, radius * sigma_v),
            ),
            InitialData::ShiftedGaussian {
                sigma_x,
                sigma_v,
                x_shift,
                v_shift,
                ..
            } => {
                let sx = x_shift.iter().fold(0.0f64, |m, s| m.max(s.abs()));
                let sv = v_shift.iter().fold(0.0f64, |m, s| m.max(s.abs()));
                (
                    (-sx - radius * sigma_x, sx + radius * sigma_x),
                    (-sv - radius * sigma_v, sv + radius * sigma_v),
                )
            }
            InitialData::TwoStream {
                sigma_x,
                sigma_v,
                stream_speed,
                ..
            } => (
                (-radius * sigma_x, radius * sigma_x),
                (
                    -stream_speed - radius * sigma_v,
                    stream_speed + radius * sigma_v,
                ),
            ),
            InitialData::Bump {
                radius_x, radius_v, ..
            } => ((-radius_x, *radius_x), (-radius_v, *radius_v)),
            InitialData::UniformBox {
                extent_x, extent_v, ..
            } => ((0.0, *extent_x), (0.0, *extent_v)),
        }
    }

    /// Smallest per-axis captured fraction of the 1D marginal mass over
    /// the sampling box. Per-axis (rather than joint) coverage is the
    /// truncation criterion, so the requirement does not tighten with the
    /// phase-space dimension.
    fn min_axis_capture(&self, d: usize, radius: f64) -> f64 {
        fn axis_capture(lo: f64, hi: f64, mean: f64, sigma: f64) -> f64 {
            0.5 * (erf((hi - mean) / (sigma * std::f64::consts::SQRT_2))
                - erf((lo - mean) / (sigma * std::f64::consts::SQRT_2)))
        }
        let ((xlo, xhi), (vlo, vhi)) = self.boxes(radius);
        match self {
            InitialData::Gaussian {
                sigma_x, sigma_v, ..
            } => axis_capture(xlo, xhi, 0.0, *sigma_x).min(axis_capture(vlo, vhi, 0.0, *sigma_v)),
            InitialData::ShiftedGaussian {
                sigma_x,
                sigma_v,
                x_shift,
                v_shift,
                ..
            } => {
                let mut c = 1.0f64;
                for a in 0..d {
                    c = c.min(axis_capture(
                        xlo,
                        xhi,
                        x_shift.get(a).copied().unwrap_or(0.0),
                        *sigma_x,
                    ));
                    c = c.min(axis_capture(
                        vlo,
                        vhi,
                        v_shift.get(a).copied().unwrap_or(0.0),
                        *sigma_v,
                    ));
                }
                c
            }
            InitialData::TwoStream {
                sigma_x,
                sigma_v,
                stream_speed,
                ..
            } => {
                let cx = axis_capture(xlo, xhi, 0.0, *sigma_x);
                let cv_stream = 0.5
                    * (axis_capture(vlo, vhi, *stream_speed, *sigma_v)
                        + axis_capture(vlo, vhi, -stream_speed, *sigma_v));
                let cv_perp = axis_capture(vlo, vhi, 0.0, *sigma_v);
                cx.min(cv_stream).min(cv_perp)
            }
            InitialData::Bump { .. } | InitialData::UniformBox { .. } => 1.0,
        }
    }
}

/// Discretization parameters for [`init_from_grid`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridInit {
    #[serde(flatten)]
    pub data: InitialData,
    /// Tensor-grid cells per phase-space axis.
    pub cells_per_axis: usize,
    /// Truncation radius in sigmas for Gaussian families.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Markers with weight below `weight_floor_rel * max_weight` are dropped.
    #[serde(default = "default_floor")]
    pub weight_floor_rel: f64,
}

fn default_radius() -> f64 {
    5.3
}

fn default_floor() -> f64 {
    1e-14
}

impl GridInit {
    /// Spacing of the position lattice of the tensor grid.
    pub fn x_lattice_spacing(&self) -> f64 {
        let ((xlo, xhi), _) = self.data.boxes(self.radius);
        (xhi - xlo) / self.cells_per_axis as f64
    }
}

const REQUIRED_CAPTURE: f64 = 1.0 - 1e-6;

/// Discretize `f^in` on a tensor phase-space grid: one marker per cell
/// center with weight `f^in(z) h_x^d h_v^d`. Deterministic for a given spec.
pub fn init_from_grid(spec: &GridInit, dim: usize) -> Result<PhaseEnsemble> {
    if dim != 2 && dim != 3 {
        return Err(Error::UnsupportedDim(dim));
    }
    if spec.cells_per_axis == 0 {
        return Err(Error::Config("cells_per_axis must be >= 1".into()));
    }
    let captured = spec.data.min_axis_capture(dim, spec.radius);
    if captured < REQUIRED_CAPTURE {
        return Err(Error::TruncationRadius {
            captured,
            required: REQUIRED_CAPTURE,
        });
    }

    let ((xlo, xhi), (vlo, vhi)) = spec.data.boxes(spec.radius);
    let n = spec.cells_per_axis;
    let hx = (xhi - xlo) / n as f64;
    let hv = (vhi - vlo) / n as f64;
    let cell_volume = hx.powi(dim as i32) * hv.powi(dim as i32);

    let total_cells = n.pow(2 * dim as u32);
    let mut positions = Vec::new();
    let mut velocities = Vec::new();
    let mut fvals = Vec::new();

    let mut x = vec![0.0f64; dim];
    let mut v = vec![0.0f64; dim];
    let mut max_f = 0.0f64;
    for flat in 0..total_cells {
        let mut rest = flat;
        for a in 0..dim {
            let idx = rest % n;
            rest /= n;
            x[a] = xlo + (idx as f64 + 0.5) * hx;
        }
        for a in 0..dim {
            let idx = rest % n;
            rest /= n;
            v[a] = vlo + (idx as f64 + 0.5) * hv;
        }
        let f = spec.data.eval(&x, &v);
        if f > 0.0 {
            positions.extend_from_slice(&x);
            velocities.extend_from_slice(&v);
            fvals.push(f);
            max_f = max_f.max(f);
        }
    }
    if fvals.is_empty() {
        return Err(Error::EmptyEnsemble);
    }

    // Apply the weight floor (relative to the max weight, i.e. max fvalue
    // since all cells share one volume).
    let floor = spec.weight_floor_rel * max_f;
    let mut kept_positions = Vec::with_capacity(positions.len());
    let mut kept_velocities = Vec::with_capacity(velocities.len());
    let mut kept_f = Vec::with_capacity(fvals.len());
    for (i, &f) in fvals.iter().enumerate() {
        if f > floor || (spec.weight_floor_rel == 0.0 && f > 0.0) {
            kept_positions.extend_from_slice(&positions[i * dim..(i + 1) * dim]);
            kept_velocities.extend_from_slice(&velocities[i * dim..(i + 1) * dim]);
            kept_f.push(f);
        }
    }
    if kept_f.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let weights: Vec<f64> = kept_f.iter().map(|f| f * cell_volume).collect();
    PhaseEnsemble::new(dim, 0.0, kept_positions, kept_velocities, weights, kept_f)
}

/// Error function: Maclaurin series below 2, incomplete-gamma continued
/// fraction above. Absolute error below 1e-14.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x >= 2.0 {
        return 1.0 - erfc_large(x);
    }
    let two_over_sqrt_pi = std::f64::consts::FRAC_2_SQRT_PI;
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for k in 1..200 {
        term *= -x2 / k as f64;
        let add = term / (2 * k + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    two_over_sqrt_pi * sum
}

/// erfc(x) = Q(1/2, x^2) via the Lentz continued fraction for the upper
/// incomplete gamma function; accurate for x >= 2.
fn erfc_large(x: f64) -> f64 {
    if x > 27.0 {
        return 0.0;
    }
    let y = x * x;
    let a = 0.5;
    let mut b = y + 1.0 - a;
    let mut c = 1e300_f64;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..300 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < 1e-300 {
            d = 1e-300;
        }
        c = b + an / c;
        if c.abs() < 1e-300 {
            c = 1e-300;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    // ln Gamma(1/2) = ln sqrt(pi)
    let ln_gamma_half = 0.572_364_942_924_700_1;
    (-y + a * y.ln() - ln_gamma_half).exp() * h
}

// ---------------------------------------------------------------------------
// Serialization: columnar binary and CSV.
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 8] = b"VLENSMB1";

impl PhaseEnsemble {
    /// Write the documented columnar binary layout: header, then
    /// column-major f64 arrays (positions per axis, velocities per axis,
    /// weights, fvalues), all little-endian.
    pub fn write_binary<W: Write>(&self, w: &mut W, config_hash: &str) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        let mut hash = [0u8; 64];
        let bytes = config_hash.as_bytes();
        let take = bytes.len().min(64);
        hash[..take].copy_from_slice(&bytes[..take]);
        w.write_all(&hash)?;
        for a in 0..self.dim {
            for i in 0..self.len() {
                w.write_all(&self.positions[i * self.dim + a].to_le_bytes())?;
            }
        }
        for a in 0..self.dim {
            for i in 0..self.len() {
                w.write_all(&self.velocities[i * self.dim + a].to_le_bytes())?;
            }
        }
        for x in &self.weights {
            w.write_all(&x.to_le_bytes())?;
        }
        for x in &self.fvalues {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<(Self, String)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Invalid("bad ensemble magic".into()));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b)?;
        let dim = u32::from_le_bytes(u32b) as usize;
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b)?;
        let n = u64::from_le_bytes(u64b) as usize;
        let mut f64b = [0u8; 8];
        r.read_exact(&mut f64b)?;
        let time = f64::from_le_bytes(f64b);
        let mut hash = [0u8; 64];
        r.read_exact(&mut hash)?;
        let hash_str = String::from_utf8_lossy(&hash)
            .trim_end_matches('\0')
            .to_string();
        let mut read_col = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                out.push(f64::from_le_bytes(b));
            }
            Ok(out)
        };
        let mut pos_cols = Vec::with_capacity(dim);
        for _ in 0..dim {
            pos_cols.push(read_col(n)?);
        }
        let mut vel_cols = Vec::with_capacity(dim);
        for _ in 0..dim {
            vel_cols.push(read_col(n)?);
        }
        let weights = read_col(n)?;
        let fvalues = read_col(n)?;
        let mut positions = vec![0.0; n * dim];
        let mut velocities = vec![0.0; n * dim];
        for a in 0..dim {
            for i in 0..n {
                positions[i * dim + a] = pos_cols[a][i];
                velocities[i * dim + a] = vel_cols[a][i];
            }
        }
        Ok((
            Self::new(dim, time, positions, velocities, weights, fvalues)?,
            hash_str,
        ))
    }

    /// CSV form for small ensembles: one marker per row.
    pub fn write_csv<W: Write>(&self, w: &mut W, config_hash: &str) -> Result<()> {
        writeln!(
            w,
            "# vlasovlab-ensemble v1 dim={} n={} time={} config={}",
            self.dim,
            self.len(),
            self.time,
            config_hash
        )?;
        let mut header = Vec::new();
        for a in 0..self.dim {
            header.push(format!("x{a}"));
        }
        for a in 0..self.dim {
            header.push(format!("v{a}"));
        }
        header.push("weight".into());
        header.push("fvalue".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = Vec::new();
            for a in 0..self.dim {
                row.push(format!("{}", self.positions[i * self.dim + a]));
            }
            for a in 0..self.dim {
                row.push(format!("{}", self.velocities[i * self.dim + a]));
            }
            row.push(format!("{}", self.weights[i]));
            row.push(format!("{}", self.fvalues[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut dim = 0usize;
        let mut time = 0.0f64;
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        let mut weights = Vec::new();
        let mut fvalues = Vec::new();
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') {
                for tok in line.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("dim=") {
                        dim = v.parse().map_err(|_| {
                            Error::Invalid(format!("bad dim in ensemble CSV header: {v}"))
                        })?;
                    }
                    if let Some(v) = tok.strip_prefix("time=") {
                        time = v.parse().map_err(|_| {
                            Error::Invalid(format!("bad time in ensemble CSV header: {v}"))
                        })?;
                    }
                }
                continue;
            }
            if line.starts_with('x') || line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad CSV number on line {ln}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != 2 * dim + 2 {
                return Err(Error::Invalid(format!(
                    "CSV row {ln}: expected {} columns, got {}",
                    2 * dim + 2,
                    vals.len()
                )));
            }
            positions.extend_from_slice(&vals[..dim]);
            velocities.extend_from_slice(&vals[dim..2 * dim]);
            weights.push(vals[2 * dim]);
            fvalues.push(vals[2 * dim + 1]);
        }
        Self::new(dim, time, positions, velocities, weights, fvalues)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_spec() -> GridInit {
        GridInit {
            data: InitialData::UniformBox {
                amplitude: 1.0,
                extent_x: 1.0,
                extent_v: 1.0,
            },
            cells_per_axis: 2,
            radius: 5.3,
            weight_floor_rel: 0.0,
        }
    }

    #[test]
    fn uniform_box_quadrature_is_exact() {
        let e = init_from_grid(&uniform_spec(), 2).unwrap();
        assert_eq!(e.len(), 16);
        for i in 0..e.len() {
            assert!((e.weight(i) - 1.0 / 16.0).abs() < 1e-15);
        }
        assert!((e.mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_data_is_empty_ensemble() {
        let spec = GridInit {
            data: InitialData::Bump {
                amplitude: 0.0,
                radius_x: 1.0,
                radius_v: 1.0,
            },
            ..uniform_spec()
        };
        match init_from_grid(&spec, 2) {
            Err(Error::EmptyEnsemble) => {}
            other => panic!("expected EmptyEnsemble, got {other:?}"),
        }
    }

    #[test]
    fn gaussian_3d_mass_matches_analytic_integral() {
        // Oracle: the analytic Gaussian mass integral. 16 cells/axis over
        // +-5 sigma resolves the midpoint quadrature far below 1e-4; the
        // raised floor drops far-tail markers carrying ~4e-5 of the mass.
        let spec = GridInit {
            data: InitialData::Gaussian {
                amplitude: 1.0,
                sigma_x: 1.0,
                sigma_v: 1.0,
            },
            cells_per_axis: 16,
            radius: 5.0,
            weight_floor_rel: 3e-7,
        };
        let e = init_from_grid(&spec, 3).unwrap();
        let analytic = spec.data.analytic_mass(3);
        let ratio = e.mass() / analytic;
        assert!(
            (0.9999..=1.0001).contains(&ratio),
            "mass ratio {ratio} out of tolerance"
        );
    }

    #[test]
    fn truncation_radius_too_small_reports_capture() {
        let spec = GridInit {
            data: InitialData::Gaussian {
                amplitude: 1.0,
                sigma_x: 1.0,
                sigma_v: 1.0,
            },
            cells_per_axis: 8,
            radius: 3.0,
            weight_floor_rel: 0.0,
        };
        match init_from_grid(&spec, 2) {
            Err(Error::TruncationRadius { captured, .. }) => {
                assert!(captured < 1.0 - 1e-6);
            }
            other => panic!("expected TruncationRadius, got {other:?}"),
        }
    }

    #[test]
    fn sup_norm_is_max_fvalue() {
        let e = PhaseEnsemble::new(
            2,
            0.0,
            vec![0.0; 6],
            vec![0.0; 6],
            vec![1.0, 1.0, 1.0],
            vec![0.2, 0.7, 0.5],
        )
        .unwrap();
        assert_eq!(e.sup_norm_f(), 0.7);
    }

    #[test]
    fn gaussian_sup_norm_close_to_amplitude() {
        let amp = 2.5;
        let spec = GridInit {
            data: InitialData::Gaussian {
                amplitude: amp,
                sigma_x: 1.0,
                sigma_v: 1.0,
            },
            cells_per_axis: 12,
            radius: 5.3,
            weight_floor_rel: 1e-14,
        };
        let e = init_from_grid(&spec, 2).unwrap();
        let h: f64 = 2.0 * 5.3 / 12.0;
        // Nearest grid point to the peak is at most h/2 away per axis.
        let tol = amp * (1.0 - (-4.0 * h * h / 8.0f64).exp());
        assert!((e.sup_norm_f() - amp).abs() <= tol);
    }

    #[test]
    fn init_is_deterministic() {
        let spec = GridInit {
            data: InitialData::Gaussian {
                amplitude: 1.0,
                sigma_x: 1.0,
                sigma_v: 0.5,
            },
            cells_per_axis: 6,
            radius: 5.3,
            weight_floor_rel: 1e-14,
        };
        let a = init_from_grid(&spec, 2).unwrap();
        let b = init_from_grid(&spec, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn binary_roundtrip_is_bitwise() {
        let e = init_from_grid(&uniform_spec(), 2).unwrap();
        let mut buf = Vec::new();
        e.write_binary(&mut buf, "deadbeef").unwrap();
        let (back, hash) = PhaseEnsemble::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(e, back);
        assert_eq!(hash, "deadbeef");
    }

    #[test]
    fn csv_roundtrip() {
        let e = init_from_grid(&uniform_spec(), 2).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf, "cafe").unwrap();
        let back = PhaseEnsemble::read_csv(buf.as_slice()).unwrap();
        assert_eq!(e.len(), back.len());
        for i in 0..e.len() {
            assert_eq!(e.position(i), back.position(i));
            assert_eq!(e.weight(i), back.weight(i));
        }
    }

    #[test]
    fn two_stream_and_bump_masses() {
        let two_stream = GridInit {
            data: InitialData::TwoStream {
                amplitude: 0.5,
                sigma_x: 1.0,
                sigma_v: 0.5,
                stream_speed: 1.5,
            },
            cells_per_axis: 24,
            radius: 5.3,
            weight_floor_rel: 1e-14,
        };
        let e = init_from_grid(&two_stream, 2).unwrap();
        let analytic = two_stream.data.analytic_mass(2);
        assert!(
            ((e.mass() - analytic) / analytic).abs() < 1e-4,
            "two-stream mass {} vs {analytic}",
            e.mass()
        );

        let bump = GridInit {
            data: InitialData::Bump {
                amplitude: 2.0,
                radius_x: 1.0,
                radius_v: 0.8,
            },
            cells_per_axis: 48,
            radius: 5.3,
            weight_floor_rel: 0.0,
        };
        let e = init_from_grid(&bump, 2).unwrap();
        let analytic = bump.data.analytic_mass(2);
        // the compact edge limits midpoint quadrature to ~h^2 accuracy
        assert!(
            ((e.mass() - analytic) / analytic).abs() < 5e-3,
            "bump mass {} vs {analytic}",
            e.mass()
        );
    }

    #[test]
    fn erf_reference_values() {
        assert!((erf(0.5) - 0.5204998778130465).abs() < 1e-12);
        assert!((erf(1.0) - 0.8427007929497149).abs() < 1e-12);
        assert!((erf(2.0) - 0.9953222650189527).abs() < 1e-12);
    }

    #[test]
    fn lr_norm_matches_analytic_gaussian() {
        // ||f||_2^2 = int A^2 e^{-|z|^2} dz = A^2 pi^d over 2d phase space.
        let spec = GridInit {
            data: InitialData::Gaussian {
                amplitude: 1.0,
                sigma_x: 1.0,
                sigma_v: 1.0,
            },
            cells_per_axis: 24,
            radius: 5.3,
            weight_floor_rel: 1e-14,
        };
        let e = init_from_grid(&spec, 2).unwrap();
        let expected = (std::f64::consts::PI * std::f64::consts::PI).sqrt();
        assert!((e.lr_norm_f(2.0) - expected).abs() / expected < 1e-3);
    }
}
