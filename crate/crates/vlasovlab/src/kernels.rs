//! Interaction kernels: 2D Coulomb (logarithmic) and 3D screened Coulomb
//! (Yukawa), their gradients, and the integral norms that feed the moment
//! and stability estimates.

use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, unit_ball_volume};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Interaction definition. `sign = +1` is attractive under the force
/// convention `E = -grad K * rho` (the gradient points away from mass,
/// the force toward it); `sign = -1` is repulsive.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct KernelSpec {
    pub dim: usize,
    pub sign: f64,
    /// Screening wavenumber; meaningful in 3D only.
    #[serde(default)]
    pub kappa: f64,
    /// Plummer softening radius; 0 means the exact singular kernel.
    #[serde(default)]
    pub softening: f64,
    /// Overall coupling strength; 0 switches the interaction off.
    #[serde(default = "one")]
    pub coupling: f64,
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn coulomb_2d(sign: f64, coupling: f64) -> Self {
        Self {
            dim: 2,
            sign,
            kappa: 0.0,
            softening: 0.0,
            coupling,
        }
    }

    pub fn yukawa_3d(sign: f64, kappa: f64, coupling: f64) -> Self {
        Self {
            dim: 3,
            sign,
            kappa,
            softening: 0.0,
            coupling,
        }
    }

    pub fn with_softening(mut self, delta: f64) -> Self {
        self.softening = delta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::UnsupportedDim(self.dim));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::Config("kernel sign must be +1 or -1".into()));
        }
        if self.kappa < 0.0 || self.softening < 0.0 || self.coupling < 0.0 {
            return Err(Error::Config(
                "kappa, softening and coupling must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Scalar radial factor `s(r^2)` such that `grad K(x) = s(|x|^2) x`.
    /// The softened form replaces `|x|` by `sqrt(|x|^2 + delta^2)`.
    #[inline]
    pub fn grad_factor(&self, r2: f64) -> f64 {
        let rd2 = r2 + self.softening * self.softening;
        match self.dim {
            2 => self.coupling * self.sign / (2.0 * PI * rd2),
            3 => {
                let rd = rd2.sqrt();
                let kr = self.kappa * rd;
                -self.coupling * self.sign * (-kr).exp() * (1.0 + kr) / (4.0 * PI * rd2 * rd)
            }
            _ => unreachable!(),
        }
    }

    /// Radial magnitude profile `|grad K|(r)` of the (possibly softened)
    /// kernel gradient, with `r = |x|`.
    pub fn grad_magnitude(&self, r: f64) -> f64 {
        (self.grad_factor(r * r) * r).abs()
    }
}

/// Analytic gradient of the interaction kernel at `x`.
pub fn grad_k(spec: &KernelSpec, x: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(x.len(), spec.dim);
    if spec.coupling == 0.0 {
        return Ok(vec![0.0; spec.dim]);
    }
    let r2: f64 = x.iter().map(|c| c * c).sum();
    if r2 == 0.0 && spec.softening == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    let s = spec.grad_factor(r2);
    Ok(x.iter().map(|c| s * c).collect())
}

/// The weak-norm exponent of the kernel gradient: 2 in 2D, 3/2 in 3D.
pub fn kernel_b(dim: usize) -> Result<Ratio<i64>> {
    match dim {
        2 => Ok(Ratio::new(2, 1)),
        3 => Ok(Ratio::new(3, 2)),
        other => Err(Error::UnsupportedDim(other)),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

/// Weak `L^{q,infinity}` norm `sup_t t |{|grad K| > t}|^{1/q}`.
///
/// Closed forms where available (the unsoftened canonical exponents),
/// otherwise a numeric sup over the radial level-set measure. Divergent
/// norms are reported as `+inf`.
pub fn weak_norm_gradk(spec: &KernelSpec, q: f64) -> Result<f64> {
    if q <= 1.0 {
        return Err(Error::Invalid(format!("weak norm needs q > 1, got {q}")));
    }
    spec.validate()?;
    if spec.coupling == 0.0 {
        return Ok(0.0);
    }
    let c = spec.coupling;
    match spec.dim {
        2 => {
            if close(q, 2.0) {
                // |grad K| = c/(2 pi r): level set area c^2/(4 pi t^2),
                // t * area^{1/2} = c/(2 sqrt(pi)) for every t. Softening
                // only lowers the profile, with the same supremum.
                Ok(c / (2.0 * PI.sqrt()))
            } else if spec.softening > 0.0 && q > 2.0 {
                Ok(weak_norm_numeric(spec, q))
            } else {
                Ok(f64::INFINITY)
            }
        }
        3 => {
            if spec.softening == 0.0 {
                if close(q, 1.5) {
                    // t |ball|^{2/3} = (c/4 pi) (4 pi/3)^{2/3} e^{-kr}(1+kr),
                    // maximal at r -> 0 for every screening.
                    Ok((4.0 * PI / 3.0).powf(2.0 / 3.0) * c / (4.0 * PI))
                } else if q > 1.5 {
                    Ok(f64::INFINITY)
                } else if spec.kappa > 0.0 {
                    Ok(weak_norm_numeric(spec, q))
                } else {
                    Ok(f64::INFINITY)
                }
            } else if spec.kappa > 0.0 || q >= 1.5 - 1e-9 {
                Ok(weak_norm_numeric(spec, q))
            } else {
                Ok(f64::INFINITY)
            }
        }
        _ => unreachable!(),
    }
}

/// Numeric evaluation of the weak norm from the radial profile: the
/// superlevel set of a monotone profile is a ball, of a softened
/// (unimodal) profile an annulus, measured by bisection.
pub fn weak_norm_numeric(spec: &KernelSpec, q: f64) -> f64 {
    let d = spec.dim;
    let omega = unit_ball_volume(d);
    let scale = spec
        .softening
        .max(if spec.kappa > 0.0 { 1.0 / spec.kappa } else { 1.0 })
        .max(1e-6);

    if spec.softening == 0.0 {
        // Monotone decreasing profile: parametrize thresholds by radius.
        let h = |r: f64| spec.grad_magnitude(r) * (omega * r.powi(d as i32)).powf(1.0 / q);
        return log_grid_sup(&h, 1e-9 * scale, 1e6 * scale);
    }

    // Unimodal profile: find the peak, then scan thresholds.
    let peak_r = golden_max(&|r| spec.grad_magnitude(r), 1e-12, 1e3 * scale);
    let g_max = spec.grad_magnitude(peak_r);
    if g_max == 0.0 {
        return 0.0;
    }
    let mut best = 0.0f64;
    let levels = 600;
    for k in 0..levels {
        // thresholds log-spaced over 14 decades below the peak
        let t = g_max * 10f64.powf(-14.0 * (k as f64 + 0.5) / levels as f64);
        let r_lo = bisect_level(spec, t, 0.0, peak_r, true);
        let mut hi = peak_r.max(scale);
        while spec.grad_magnitude(hi) > t && hi < 1e12 * scale {
            hi *= 2.0;
        }
        let r_hi = bisect_level(spec, t, peak_r, hi, false);
        let measure = omega * (r_hi.powi(d as i32) - r_lo.powi(d as i32)).max(0.0);
        best = best.max(t * measure.powf(1.0 / q));
    }
    best
}

fn bisect_level(spec: &KernelSpec, t: f64, mut lo: f64, mut hi: f64, rising: bool) -> f64 {
    // Find r with |grad K|(r) = t on a monotone branch.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let above = spec.grad_magnitude(mid) > t;
        if above == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn log_grid_sup<F: Fn(f64) -> f64>(h: &F, lo: f64, hi: f64) -> f64 {
    let n = 4000;
    let llo = lo.ln();
    let lhi = hi.ln();
    let mut best = 0.0f64;
    let mut best_r = lo;
    for k in 0..=n {
        let r = (llo + (lhi - llo) * k as f64 / n as f64).exp();
        let v = h(r);
        if v > best {
            best = v;
            best_r = r;
        }
    }
    let refined_r = golden_max(h, best_r * 0.5, best_r * 2.0);
    best.max(h(refined_r))
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    for _ in 0..200 {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    0.5 * (a + b)
}

/// Strong `L^c` norm of the 3D screened kernel gradient for `c in [1, 3/2)`,
/// by adaptive quadrature with the origin power-law removed by substitution.
/// `c >= 3/2` diverges near the origin and is reported as `+inf`.
pub fn strong_norm_gradk(spec: &KernelSpec, c: f64) -> Result<f64> {
    spec.validate()?;
    if spec.dim != 3 {
        return Err(Error::Invalid(
            "strong kernel norm is defined for the 3D screened kernel".into(),
        ));
    }
    if spec.coupling == 0.0 {
        return Ok(0.0);
    }
    if c < 1.0 {
        return Err(Error::Invalid(format!("strong norm needs c >= 1, got {c}")));
    }
    if c >= 1.5 {
        return Ok(f64::INFINITY);
    }
    if spec.kappa <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let kappa = spec.kappa;
    // int |grad K|^c dx = coupling^c (4 pi)^{1-c}
    //   int_0^inf r^{2-2c} e^{-c kappa r} (1 + kappa r)^c dr,
    // with r = u^m, m = 2/(3-2c), flattening the origin to an O(u) integrand.
    let m = 2.0 / (3.0 - 2.0 * c);
    let r_max = 80.0 / (c * kappa);
    let u_max = r_max.powf(1.0 / m);
    let integrand = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let r = u.powf(m);
        m * u * (-c * kappa * r).exp() * (1.0 + kappa * r).powf(c)
    };
    let radial = adaptive_simpson(&integrand, 0.0, u_max, 1e-10);
    let total = (4.0 * PI).powf(1.0 - c) * radial;
    Ok(spec.coupling * total.powf(1.0 / c))
}
