//! External magnetic field families and the decay-hypothesis validator.
//!
//! In 2D the field is a scalar out-of-plane component and `v ^ B` means
//! `(v_2 B, -v_1 B)`; in 3D it is a genuine vector field. The decaying
//! families are built so that both `|B(t,.)|` and `|x ^ B(t,.)|` stay below
//! `B0 t^{-a}` for every `t > 0`.

use serde::{Deserialize, Serialize};

/// Smooth compactly supported radial envelope `(1 - s^2)^2` on `s < 1`.
fn bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        let p = 1.0 - s * s;
        p * p
    }
}

/// max_s |d/ds (1-s^2)^2| = 8 / (3 sqrt(3))
const BUMP_SLOPE_MAX: f64 = 1.539_600_717_839_002;
/// max_s s (1-s^2)^2 = (16/25) / sqrt(5)
const BUMP_MOMENT_MAX: f64 = 0.286_216_701_438_565_4;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum MagneticFieldSpec {
    Zero,
    /// Constant in space and time: scalar in 2D, vector in 3D.
    Uniform { amplitude: Vec<f64> },
    /// `B0 (t0 + t)^{-a} (1 - |x|^2/R^2)_+^2` along the out-of-plane axis.
    /// Satisfies the decay hypothesis with constants `(B0, a)` whenever the
    /// spatial moment bound `0.2863 R <= 1` holds.
    DecayingBump {
        b0: f64,
        a: f64,
        radius: f64,
        #[serde(default = "default_t0")]
        t0: f64,
    },
    /// Documented analytic variant: the decaying bump re-centered at
    /// `center` with an arbitrary (3D) field direction.
    Custom {
        b0: f64,
        a: f64,
        radius: f64,
        #[serde(default = "default_t0")]
        t0: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default)]
        direction: Vec<f64>,
    },
}

fn default_t0() -> f64 {
    1.0
}

impl MagneticFieldSpec {
    /// Scalar out-of-plane component at `(t, x)`, 2D only.
    pub fn eval_2d(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            MagneticFieldSpec::Zero => 0.0,
            MagneticFieldSpec::Uniform { amplitude } => amplitude.first().copied().unwrap_or(0.0),
            MagneticFieldSpec::DecayingBump { b0, a, radius, t0 } => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                b0 * (t0 + t).powf(-a) * bump(r / radius)
            }
            MagneticFieldSpec::Custom {
                b0,
                a,
                radius,
                t0,
                center,
                ..
            } => {
                let cx = center.first().copied().unwrap_or(0.0);
                let cy = center.get(1).copied().unwrap_or(0.0);
                let r = ((x[0] - cx).powi(2) + (x[1] - cy).powi(2)).sqrt();
                b0 * (t0 + t).powf(-a) * bump(r / radius)
            }
        }
    }

    /// Field vector at `(t, x)`, 3D only.
    pub fn eval_3d(&self, t: f64, x: &[f64]) -> [f64; 3] {
        match self {
            MagneticFieldSpec::Zero => [0.0; 3],
            MagneticFieldSpec::Uniform { amplitude } => [
                amplitude.first().copied().unwrap_or(0.0),
                amplitude.get(1).copied().unwrap_or(0.0),
                amplitude.get(2).copied().unwrap_or(0.0),
            ],
            MagneticFieldSpec::DecayingBump { b0, a, radius, t0 } => {
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                let m = b0 * (t0 + t).powf(-a) * bump(r / radius);
                [0.0, 0.0, m]
            }
            MagneticFieldSpec::Custom {
                b0,
                a,
                radius,
                t0,
                center,
                direction,
            } => {
                let mut r2 = 0.0;
                for axis in 0..3 {
                    let d = x[axis] - center.get(axis).copied().unwrap_or(0.0);
                    r2 += d * d;
                }
                let m = b0 * (t0 + t).powf(-a) * bump(r2.sqrt() / radius);
                let dir = normalized_direction(direction);
                [m * dir[0], m * dir[1], m * dir[2]]
            }
        }
    }

    /// `x ^ B(t, x)` with the dimension-appropriate product.
    pub fn b_vector(&self, t: f64, x: &[f64]) -> Vec<f64> {
        match x.len() {
            2 => {
                let b = self.eval_2d(t, x);
                vec![x[1] * b, -x[0] * b]
            }
            3 => {
                let b = self.eval_3d(t, x);
                vec![
                    x[1] * b[2] - x[2] * b[1],
                    x[2] * b[0] - x[0] * b[2],
                    x[0] * b[1] - x[1] * b[0],
                ]
            }
            _ => unreachable!(),
        }
    }

    /// Sup over space of `|B(t, .)|`.
    pub fn sup_b(&self, t: f64) -> f64 {
        match self {
            MagneticFieldSpec::Zero => 0.0,
            MagneticFieldSpec::Uniform { amplitude } => {
                amplitude.iter().map(|c| c * c).sum::<f64>().sqrt()
            }
            MagneticFieldSpec::DecayingBump { b0, a, t0, .. }
            | MagneticFieldSpec::Custom { b0, a, t0, .. } => b0 * (t0 + t).powf(-a),
        }
    }

    /// Sup over space of the spatial gradient norm of `B(t, .)`.
    pub fn grad_sup(&self, t: f64) -> f64 {
        match self {
            MagneticFieldSpec::Zero | MagneticFieldSpec::Uniform { .. } => 0.0,
            MagneticFieldSpec::DecayingBump { b0, a, radius, t0 }
            | MagneticFieldSpec::Custom {
                b0, a, radius, t0, ..
            } => b0 * (t0 + t).powf(-a) * BUMP_SLOPE_MAX / radius,
        }
    }

    /// Decay constants `(B0, a)` claimed by construction, when the family
    /// has them.
    pub fn decay_claim(&self) -> Option<(f64, f64)> {
        match self {
            MagneticFieldSpec::DecayingBump { b0, a, radius, .. } => {
                // |x ^ B| <= sup_s (s R) B0 (t0+t)^{-a} (1-s^2)^2; the claim
                // holds outright when the moment factor is below one.
                let factor = (BUMP_MOMENT_MAX * radius).max(1.0);
                Some((b0 * factor, *a))
            }
            MagneticFieldSpec::Custom {
                b0,
                a,
                radius,
                center,
                ..
            } => {
                let offset = center.iter().map(|c| c * c).sum::<f64>().sqrt();
                let factor = (offset + radius).max(1.0);
                Some((b0 * factor, *a))
            }
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MagneticFieldSpec::Zero => true,
            MagneticFieldSpec::Uniform { amplitude } => amplitude.iter().all(|c| *c == 0.0),
            MagneticFieldSpec::DecayingBump { b0, .. } | MagneticFieldSpec::Custom { b0, .. } => {
                *b0 == 0.0
            }
        }
    }
}

fn normalized_direction(direction: &[f64]) -> [f64; 3] {
    let mut d = [
        direction.first().copied().unwrap_or(0.0),
        direction.get(1).copied().unwrap_or(0.0),
        direction.get(2).copied().unwrap_or(1.0),
    ];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if n == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    for c in &mut d {
        *c /= n;
    }
    d
}

/// Result of sampling the decay hypothesis `|B|, |x ^ B| <= B0 t^{-a}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisBReport {
    pub b0: f64,
    pub a: f64,
    pub times: Vec<f64>,
    pub sup_b: Vec<f64>,
    pub sup_xb: Vec<f64>,
    pub bound: Vec<f64>,
    /// min over t of (bound - sup) / bound; +inf for a zero field.
    pub worst_margin_rel: f64,
    pub pass: bool,
    pub warning: Option<String>,
}

/// Sample `sup_x |B(t,x)|` and `sup_x |x ^ B(t,x)|` over `x_samples` on a
/// positive time grid and compare against the decay bound `B0 t^{-a}`.
pub fn validate_hypothesis_b(
    field: &MagneticFieldSpec,
    b0: f64,
    a: f64,
    t_grid: &[f64],
    x_samples: &[Vec<f64>],
) -> HypothesisBReport {
    let warning = if a <= 1.0 {
        Some(format!(
            "decay exponent a = {a} must exceed 1 for the long-time envelope integral to converge"
        ))
    } else {
        None
    };
    let mut sup_b = Vec::with_capacity(t_grid.len());
    let mut sup_xb = Vec::with_capacity(t_grid.len());
    let mut bound = Vec::with_capacity(t_grid.len());
    let mut worst = f64::INFINITY;
    let mut pass = true;
    for &t in t_grid {
        let mut sb = 0.0f64;
        let mut sxb = 0.0f64;
        for x in x_samples {
            let bmag = match x.len() {
                2 => field.eval_2d(t, x).abs(),
                _ => {
                    let b = field.eval_3d(t, x);
                    (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()
                }
            };
            let xb = field.b_vector(t, x);
            let xbmag = xb.iter().map(|c| c * c).sum::<f64>().sqrt();
            sb = sb.max(bmag);
            sxb = sxb.max(xbmag);
        }
        let bd = b0 * t.powf(-a);
        let sup = sb.max(sxb);
        let margin = if sup == 0.0 {
            f64::INFINITY
        } else {
            (bd - sup) / bd
        };
        worst = worst.min(margin);
        if sup > bd {
            pass = false;
        }
        sup_b.push(sb);
        sup_xb.push(sxb);
        bound.push(bd);
    }
    HypothesisBReport {
        b0,
        a,
        times: t_grid.to_vec(),
        sup_b,
        sup_xb,
        bound,
        worst_margin_rel: worst,
        pass,
        warning,
    }
}
