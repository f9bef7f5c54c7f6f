//! Moment and norm diagnostics: velocity moments `M_n`, position moments
//! `N_n`, Eulerian moments `L_n`, density norms, and the per-run time
//! series with its CSV schema.

use crate::ensemble::PhaseEnsemble;
use crate::error::{Error, Result};
use crate::grid::{deposit_density, lp_norm_density};
use crate::numeric::pairwise_sum;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};

/// `M_n = sum_i w_i |V_i|^n`. Accepts fractional orders.
pub fn moment_v(ensemble: &PhaseEnsemble, n: f64) -> f64 {
    assert!(n >= 0.0);
    pairwise_sum(ensemble.len(), &|i| {
        let v = ensemble.velocity(i);
        let s2: f64 = v.iter().map(|c| c * c).sum();
        ensemble.weight(i) * pow_half(s2, n)
    })
}

/// `N_n = sum_i w_i |X_i|^n`.
pub fn moment_x(ensemble: &PhaseEnsemble, n: f64) -> f64 {
    assert!(n >= 0.0);
    pairwise_sum(ensemble.len(), &|i| {
        let x = ensemble.position(i);
        let s2: f64 = x.iter().map(|c| c * c).sum();
        ensemble.weight(i) * pow_half(s2, n)
    })
}

/// `L_n = sum_i w_i |X_i - t V_i|^n` with `t` the ensemble time.
pub fn moment_eulerian(ensemble: &PhaseEnsemble, n: f64) -> f64 {
    assert!(n >= 0.0);
    let t = ensemble.time();
    pairwise_sum(ensemble.len(), &|i| {
        let x = ensemble.position(i);
        let v = ensemble.velocity(i);
        let s2: f64 = x
            .iter()
            .zip(v)
            .map(|(xa, va)| {
                let d = xa - t * va;
                d * d
            })
            .sum();
        ensemble.weight(i) * pow_half(s2, n)
    })
}

/// `(s^2)^{n/2}` with exact integer fast paths.
#[inline]
fn pow_half(s2: f64, n: f64) -> f64 {
    if n == 0.0 {
        1.0
    } else if n == 2.0 {
        s2
    } else if n == 4.0 {
        s2 * s2
    } else if n == n.trunc() && (0.0..=16.0).contains(&n) {
        let k = n as i32;
        if k % 2 == 0 {
            s2.powi(k / 2)
        } else {
            s2.sqrt().powi(k)
        }
    } else {
        s2.powf(0.5 * n)
    }
}

/// Per-run time series of moments and density norms. `density_ps` lists the
/// finite density-norm orders; the sup norm is always recorded.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagnosticsSeries {
    pub moment_orders: Vec<u32>,
    pub density_ps: Vec<f64>,
    pub grid_h: f64,
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub sup_f: Vec<f64>,
    /// `moments_v[k][frame]` for order `moment_orders[k]`; same layout for
    /// the position and Eulerian moments.
    pub moments_v: Vec<Vec<f64>>,
    pub moments_x: Vec<Vec<f64>>,
    pub moments_e: Vec<Vec<f64>>,
    pub rho_norms: Vec<Vec<f64>>,
    pub rho_sup: Vec<f64>,
}

impl DiagnosticsSeries {
    pub fn new(moment_orders: Vec<u32>, density_ps: Vec<f64>, grid_h: f64) -> Self {
        let k = moment_orders.len();
        let p = density_ps.len();
        Self {
            moment_orders,
            density_ps,
            grid_h,
            times: Vec::new(),
            mass: Vec::new(),
            sup_f: Vec::new(),
            moments_v: vec![Vec::new(); k],
            moments_x: vec![Vec::new(); k],
            moments_e: vec![Vec::new(); k],
            rho_norms: vec![Vec::new(); p],
            rho_sup: Vec::new(),
        }
    }

    /// Measure one frame from the ensemble and append it.
    pub fn record(&mut self, ensemble: &PhaseEnsemble) -> Result<()> {
        let grid = deposit_density(ensemble, self.grid_h)?;
        self.times.push(ensemble.time());
        self.mass.push(ensemble.mass());
        self.sup_f.push(ensemble.sup_norm_f());
        for (k, &n) in self.moment_orders.iter().enumerate() {
            self.moments_v[k].push(moment_v(ensemble, n as f64));
            self.moments_x[k].push(moment_x(ensemble, n as f64));
            self.moments_e[k].push(moment_eulerian(ensemble, n as f64));
        }
        for (k, &p) in self.density_ps.iter().enumerate() {
            self.rho_norms[k].push(lp_norm_density(&grid, p));
        }
        self.rho_sup.push(lp_norm_density(&grid, f64::INFINITY));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn order_index(&self, n: u32) -> Option<usize> {
        self.moment_orders.iter().position(|&m| m == n)
    }

    /// Linear interpolation of a recorded column at time `t`.
    pub fn interpolate(&self, column: &[f64], t: f64) -> f64 {
        if self.times.is_empty() {
            return f64::NAN;
        }
        if t <= self.times[0] {
            return column[0];
        }
        if t >= *self.times.last().unwrap() {
            return *column.last().unwrap();
        }
        let k = self.times.partition_point(|&u| u < t).max(1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        column[k - 1] * (1.0 - w) + column[k] * w
    }

    /// Mass drift and the triangle bound
    /// `M_n <= 2^{n-1} (L_n + N_n) / t^n` checked on every frame.
    pub fn validate(&self) -> Result<()> {
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("series times must strictly increase".into()));
        }
        let m0 = self.mass.first().copied().unwrap_or(0.0);
        for (f, m) in self.mass.iter().enumerate() {
            if (m - m0).abs() > 1e-12 * m0.max(1e-300) {
                return Err(Error::Invalid(format!(
                    "mass drifted at frame {f}: {m} vs {m0}"
                )));
            }
        }
        for (k, &n) in self.moment_orders.iter().enumerate() {
            if n == 0 {
                continue;
            }
            for f in 0..self.len() {
                let t = self.times[f];
                if t <= 0.0 {
                    continue;
                }
                let mv = self.moments_v[k][f];
                let bound = 2f64.powi(n as i32 - 1)
                    * (self.moments_e[k][f] + self.moments_x[k][f])
                    / t.powi(n as i32);
                if mv > bound * (1.0 + 1e-9) {
                    return Err(Error::Invalid(format!(
                        "triangle moment bound violated at frame {f} for order {n}: {mv} > {bound}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Documented CSV schema, versioned in the header comment.
    pub fn write_csv<W: Write>(&self, w: &mut W, config_hash: &str) -> Result<()> {
        writeln!(
            w,
            "# vlasovlab-series v1 config={} grid_h={}",
            config_hash, self.grid_h
        )?;
        let mut cols = vec!["time".to_string(), "mass".into(), "sup_f".into()];
        for &n in &self.moment_orders {
            cols.push(format!("M{n}"));
            cols.push(format!("N{n}"));
            cols.push(format!("L{n}"));
        }
        for &p in &self.density_ps {
            cols.push(format!("rho_p{p}"));
        }
        cols.push("rho_inf".into());
        writeln!(w, "{}", cols.join(","))?;
        for f in 0..self.len() {
            let mut row = vec![
                format!("{}", self.times[f]),
                format!("{}", self.mass[f]),
                format!("{}", self.sup_f[f]),
            ];
            for k in 0..self.moment_orders.len() {
                row.push(format!("{}", self.moments_v[k][f]));
                row.push(format!("{}", self.moments_x[k][f]));
                row.push(format!("{}", self.moments_e[k][f]));
            }
            for k in 0..self.density_ps.len() {
                row.push(format!("{}", self.rho_norms[k][f]));
            }
            row.push(format!("{}", self.rho_sup[f]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Invalid("empty series file".into()))??;
        if !header.starts_with("# vlasovlab-series v1") {
            return Err(Error::Invalid("unrecognized series header".into()));
        }
        let mut grid_h = 0.0;
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("grid_h=") {
                grid_h = v
                    .parse()
                    .map_err(|_| Error::Invalid("bad grid_h in header".into()))?;
            }
        }
        let columns = lines
            .next()
            .ok_or_else(|| Error::Invalid("missing column row".into()))??;
        let names: Vec<&str> = columns.split(',').collect();
        let mut moment_orders = Vec::new();
        let mut density_ps = Vec::new();
        for name in &names {
            if let Some(n) = name.strip_prefix('M') {
                if let Ok(v) = n.parse::<u32>() {
                    moment_orders.push(v);
                }
            }
            if let Some(p) = name.strip_prefix("rho_p") {
                density_ps.push(
                    p.parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad density column {name}")))?,
                );
            }
        }
        let mut series = DiagnosticsSeries::new(moment_orders, density_ps, grid_h);
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad number in series row: {s}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != names.len() {
                return Err(Error::Invalid("series row length mismatch".into()));
            }
            let mut it = vals.into_iter();
            series.times.push(it.next().unwrap());
            series.mass.push(it.next().unwrap());
            series.sup_f.push(it.next().unwrap());
            for k in 0..series.moment_orders.len() {
                series.moments_v[k].push(it.next().unwrap());
                series.moments_x[k].push(it.next().unwrap());
                series.moments_e[k].push(it.next().unwrap());
            }
            for k in 0..series.density_ps.len() {
                series.rho_norms[k].push(it.next().unwrap());
            }
            series.rho_sup.push(it.next().unwrap());
        }
        Ok(series)
    }
}
