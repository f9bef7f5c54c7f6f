//! 2D moment envelopes: the base-order exponential bound and the
//! recursive order-n majorants, integrated as certified upper solutions.

use super::{EnvelopeReport, ABS_FLOOR};
use crate::diagnostics::DiagnosticsSeries;
use crate::error::{Error, Result};
use crate::exponents::{exponents, rat_f64};
use serde_json::json;

/// Norms of the initial data entering the 2D envelopes.
#[derive(Debug, Clone, Copy)]
pub struct Norms2d {
    pub sup_f: f64,
    pub l1_f: f64,
    /// weak norm of the kernel gradient at exponent 2
    pub weak_norm: f64,
}

/// Exponential growth rate of the base-order envelope:
/// `(3/2)^{3/2} |grad K|_{2,inf} |f|_inf^{2/3} |f|_1^{1/2}`.
pub fn base_rate_2d(norms: &Norms2d) -> f64 {
    1.5f64.powf(1.5) * norms.weak_norm * norms.sup_f.powf(2.0 / 3.0) * norms.l1_f.sqrt()
}

/// Build the order-n envelope values on the given time grid, recursively
/// from the lower orders. `phi[j][i]` is the order-(j+1) envelope at
/// `grid[i]`. The scalar ODEs are integrated by backward Euler, which
/// over-shoots a right-hand side that is increasing in both arguments, so
/// each envelope is an upper solution.
fn build_envelopes(
    n_max: u32,
    grid: &[f64],
    m0: &[f64],
    norms: &Norms2d,
) -> Result<Vec<Vec<f64>>> {
    let mut phi: Vec<Vec<f64>> = Vec::new();
    for n in 1..=n_max {
        let mut values = Vec::with_capacity(grid.len());
        if n == 1 {
            let rate = base_rate_2d(norms);
            for &t in grid {
                values.push(m0[0] * (rate * t).exp());
            }
        } else {
            let table = exponents(n as i64, 2)?;
            let coeff = rat_f64(table.envelope_coeff)
                * 1.5f64.powf(rat_f64(table.envelope_exp32))
                * norms.weak_norm
                * norms.sup_f.powf(rat_f64(table.exp_sup_f))
                * norms.l1_f.powf(rat_f64(table.exp_l1_f));
            let e_prev = rat_f64(table.exp_m_prev);
            let e_n = rat_f64(table.exp_m_n);
            let lower = &phi[(n - 2) as usize];
            let mut y = m0[(n - 1) as usize];
            values.push(y);
            for i in 1..grid.len() {
                let h = grid[i] - grid[i - 1];
                let g = |yy: f64| coeff * lower[i].powf(e_prev) * yy.powf(e_n);
                // backward Euler via fixed-point iteration from the
                // explicit predictor; converges since h g'(y) < 1 on the
                // envelope scale
                let mut z = y + h * g(y);
                for _ in 0..64 {
                    let next = y + h * g(z);
                    if (next - z).abs() <= 1e-14 * z.abs() {
                        z = next;
                        break;
                    }
                    z = next;
                }
                y = z * (1.0 + 1e-12);
                values.push(y);
            }
        }
        phi.push(values);
    }
    Ok(phi)
}

/// Check `M_n(t) <= Phi_n(t)` for one order against the recorded series.
pub fn envelope_2d(
    series: &DiagnosticsSeries,
    n: u32,
    norms: &Norms2d,
    slack: f64,
) -> Result<EnvelopeReport> {
    if n < 1 {
        return Err(Error::Invalid("envelope order must be >= 1".into()));
    }
    if series.is_empty() {
        return Err(Error::SeriesTooShort("empty series".into()));
    }
    for m in 1..=n {
        if series.order_index(m).is_none() {
            return Err(Error::Invalid(format!(
                "series lacks moment order {m} needed for the recursive envelope"
            )));
        }
    }
    // refined integration grid: 10 subintervals per output frame
    let mut grid = Vec::new();
    for w in series.times.windows(2) {
        for k in 0..10 {
            grid.push(w[0] + (w[1] - w[0]) * k as f64 / 10.0);
        }
    }
    grid.push(*series.times.last().unwrap());
    if grid.len() == 1 {
        grid = series.times.clone();
    }

    let m0: Vec<f64> = (1..=n)
        .map(|m| series.moments_v[series.order_index(m).unwrap()][0])
        .collect();
    let phi = build_envelopes(n, &grid, &m0, norms)?;

    let kidx = series.order_index(n).unwrap();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for (f, &t) in series.times.iter().enumerate() {
        lhs.push(series.moments_v[kidx][f]);
        // envelope value at the frame time (grid contains frame times)
        let gi = grid
            .iter()
            .position(|&g| (g - t).abs() <= 1e-12 * t.abs().max(1.0))
            .unwrap_or(grid.len() - 1);
        rhs.push(phi[(n - 1) as usize][gi]);
    }
    Ok(EnvelopeReport::from_series(
        "envelope-2d",
        json!({"n": n, "sup_f": norms.sup_f, "l1_f": norms.l1_f,
               "weak_norm": norms.weak_norm, "base_rate": base_rate_2d(norms)}),
        series.times.clone(),
        lhs,
        rhs,
        slack,
        ABS_FLOOR,
    ))
}

/// Convenience: run the envelope check for all orders `1..=n_max`.
pub fn envelope_2d_suite(
    series: &DiagnosticsSeries,
    n_max: u32,
    norms: &Norms2d,
    slack: f64,
) -> Result<Vec<EnvelopeReport>> {
    (1..=n_max)
        .map(|n| envelope_2d(series, n, norms, slack))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_series(orders: Vec<u32>, times: Vec<f64>, values: &[f64]) -> DiagnosticsSeries {
        let mut s = DiagnosticsSeries::new(orders.clone(), vec![], 0.5);
        let frames = times.len();
        s.times = times;
        s.mass = vec![1.0; frames];
        s.sup_f = vec![1.0; frames];
        for (k, _) in orders.iter().enumerate() {
            s.moments_v[k] = vec![values[k]; frames];
            s.moments_x[k] = vec![values[k]; frames];
            s.moments_e[k] = vec![values[k]; frames];
        }
        s.rho_sup = vec![1.0; frames];
        s
    }

    #[test]
    fn base_envelope_value_at_t1() {
        // Phi_1(1) = M_1(0) exp((3/2)^{3/2} (1/(2 sqrt pi)) F^{2/3} L^{1/2})
        let norms = Norms2d {
            sup_f: 1.0,
            l1_f: 1.0,
            weak_norm: 1.0 / (2.0 * std::f64::consts::PI.sqrt()),
        };
        let s = flat_series(vec![1], vec![0.0, 0.5, 1.0], &[1.0]);
        let rep = envelope_2d(&s, 1, &norms, 0.05).unwrap();
        let expected = (1.5f64.powf(1.5) / (2.0 * std::f64::consts::PI.sqrt())).exp();
        let phi_at_1 = rep.rhs.last().unwrap();
        assert!(
            (phi_at_1 - expected).abs() < 1e-12 * expected,
            "{phi_at_1} vs {expected}"
        );
        assert!(rep.pass);
    }

    #[test]
    fn envelope_equals_initial_moment_at_t0() {
        let norms = Norms2d {
            sup_f: 2.0,
            l1_f: 3.0,
            weak_norm: 0.3,
        };
        let s = flat_series(vec![1, 2], vec![0.0, 0.1], &[1.5, 4.0]);
        for n in [1u32, 2] {
            let rep = envelope_2d(&s, n, &norms, 0.05).unwrap();
            assert!((rep.rhs[0] - rep.lhs[0]).abs() < 1e-9 * rep.lhs[0]);
        }
    }

    #[test]
    fn constant_moments_stay_below_growing_envelope() {
        let norms = Norms2d {
            sup_f: 1.0,
            l1_f: 1.0,
            weak_norm: 0.5,
        };
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let s = flat_series(vec![1, 2, 3], times, &[1.0, 2.0, 6.0]);
        for n in [1u32, 2, 3] {
            let rep = envelope_2d(&s, n, &norms, 0.05).unwrap();
            assert!(rep.pass, "order {n}: {}", rep.summary_line());
        }
    }

    #[test]
    fn envelope_monotone_in_inputs() {
        // raising any input norm never lowers the envelope
        let times: Vec<f64> = (0..=5).map(|k| k as f64 * 0.2).collect();
        let s = flat_series(vec![1, 2], times, &[1.0, 2.0]);
        let base = Norms2d {
            sup_f: 1.0,
            l1_f: 1.0,
            weak_norm: 0.4,
        };
        let rep0 = envelope_2d(&s, 2, &base, 0.05).unwrap();
        for bigger in [
            Norms2d {
                sup_f: 2.0,
                ..base
            },
            Norms2d { l1_f: 2.0, ..base },
            Norms2d {
                weak_norm: 0.8,
                ..base
            },
        ] {
            let rep1 = envelope_2d(&s, 2, &bigger, 0.05).unwrap();
            for (a, b) in rep0.rhs.iter().zip(&rep1.rhs) {
                assert!(b >= a, "envelope decreased under larger input norms");
            }
        }
    }
}
