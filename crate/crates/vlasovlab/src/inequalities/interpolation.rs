//! Kinetic interpolation, weak convolution and moment-derivative checks on
//! ensemble snapshots.

use super::{EnvelopeReport, ABS_FLOOR};
use crate::diagnostics::{moment_v, DiagnosticsSeries};
use crate::ensemble::PhaseEnsemble;
use crate::error::{Error, Result};
use crate::exponents::{exponents, interpolation_constant, rat_f64};
use crate::grid::{deposit_density, lp_norm_density, partial_moment_density};
use crate::kernels::{weak_norm_gradk, KernelSpec};
use crate::numeric::unit_ball_volume;
use serde_json::json;

/// Exponents and constant for the interpolation bound
/// `||rho_k||_p <= C M_n^{1-theta} ||f||_r^theta`.
///
/// For `r = inf` the constant is the pointwise-optimization value
/// `(d+k+1)/(d+k)`; for finite `r` it comes from the ball/tail splitting
/// with `alpha = k + d/r'`, `beta = n - k`:
/// `C = [(alpha/beta)^{beta/(alpha+beta)} + (beta/alpha)^{alpha/(alpha+beta)}]
///      * (d omega_d / (k r' + d))^{theta / r'}`.
pub fn interpolation_exponents(n: f64, k: f64, d: usize, r: f64) -> (f64, f64, f64) {
    if r.is_infinite() {
        let p = (n + d as f64) / (k + d as f64);
        let theta = (n - k) / (n + d as f64);
        let c = rat_f64(interpolation_constant(d as i64, k as i64));
        (p, theta, c)
    } else {
        let rc = r / (r - 1.0); // r'
        let p = (n * rc + d as f64) / (n * (rc - 1.0) + k * rc + d as f64);
        let theta = (n - k) * rc / (n * rc + d as f64);
        let alpha = k + d as f64 / rc;
        let beta = n - k;
        let split = (alpha / beta).powf(beta / (alpha + beta))
            + (beta / alpha).powf(alpha / (alpha + beta));
        let ball = d as f64 * unit_ball_volume(d) / (k * rc + d as f64);
        let c = split * ball.powf(theta / rc);
        (p, theta, c)
    }
}

/// Check `||rho_k||_{p} <= C M_n^{1-theta} ||f||_r^theta` on one snapshot.
/// `r = inf` gives the sup-norm form, finite `r >= 1` the `L^r` variant
/// (density only, `k = 0`, is the standard use).
pub fn check_kinetic_interpolation(
    ensemble: &PhaseEnsemble,
    grid_h: f64,
    n: f64,
    k: f64,
    r: f64,
    slack: f64,
) -> Result<EnvelopeReport> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if !(k >= 0.0 && k <= n) {
        return Err(Error::Invalid(format!(
            "interpolation needs 0 <= k <= n, got k={k}, n={n}"
        )));
    }
    let d = ensemble.dim();
    let (p, theta, c) = interpolation_exponents(n, k, d, r);
    let grid = partial_moment_density(ensemble, k, grid_h)?;
    let lhs = lp_norm_density(&grid, p);
    let mn = moment_v(ensemble, n);
    let f_norm = if r.is_infinite() {
        ensemble.sup_norm_f()
    } else {
        ensemble.lr_norm_f(r)
    };
    let rhs = c * mn.powf(1.0 - theta) * f_norm.powf(theta);
    let mut report = EnvelopeReport::from_series(
        "kinetic-interpolation",
        json!({"n": n, "k": k, "d": d, "r": if r.is_infinite() { -1.0 } else { r },
               "p": p, "theta": theta, "constant": c, "grid_h": grid_h}),
        vec![ensemble.time()],
        vec![lhs],
        vec![rhs],
        slack,
        ABS_FLOOR,
    );
    if grid.occupied_cells() < 4 {
        report = report.with_note("estimator-dominated: fewer than 4 occupied cells");
    }
    Ok(report)
}

/// Check the weak convolution bound
/// `||grad K * rho||_p <= ||grad K||_{q,inf} ||rho||_r` with
/// `1 + 1/p = 1/q + 1/r` (the stated constant is below one, so unit slack
/// is sound). The field is evaluated at cell centers by direct summation
/// over the occupied cells of the deposited density.
pub fn check_weak_young(
    ensemble: &PhaseEnsemble,
    kernel: &KernelSpec,
    grid_h: f64,
    p: f64,
    q: f64,
    r: f64,
    slack: f64,
) -> Result<EnvelopeReport> {
    if (1.0 + 1.0 / p - 1.0 / q - 1.0 / r).abs() > 1e-9 {
        return Err(Error::ExponentRelation(format!(
            "1 + 1/p = 1/q + 1/r fails for (p, q, r) = ({p}, {q}, {r})"
        )));
    }
    let grid = deposit_density(ensemble, grid_h)?;
    let d = grid.dim;
    let cell_vol = grid_h.powi(d as i32);

    // occupied cells as point masses
    let sources: Vec<(Vec<f64>, f64)> = grid
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(idx, v)| (grid.cell_center(idx), v * cell_vol))
        .collect();

    let mut lp_sum = 0.0f64;
    for idx in 0..grid.values.len() {
        let target = grid.cell_center(idx);
        let mut field = vec![0.0f64; d];
        for (src, mass) in &sources {
            let mut r2 = 0.0;
            let mut diff = [0.0f64; 3];
            for a in 0..d {
                diff[a] = target[a] - src[a];
                r2 += diff[a] * diff[a];
            }
            if r2 == 0.0 {
                continue;
            }
            let s = mass * kernel.grad_factor(r2);
            for a in 0..d {
                field[a] += s * diff[a];
            }
        }
        let mag = field.iter().map(|c| c * c).sum::<f64>().sqrt();
        lp_sum += mag.powf(p);
    }
    let lhs = (cell_vol * lp_sum).powf(1.0 / p);
    let weak = weak_norm_gradk(kernel, q)?;
    let rhs = weak * lp_norm_density(&grid, r);
    Ok(EnvelopeReport::from_series(
        "weak-young",
        json!({"p": p, "q": q, "r": r, "grid_h": grid_h, "weak_norm": weak}),
        vec![ensemble.time()],
        vec![lhs],
        vec![rhs],
        slack,
        ABS_FLOOR,
    ))
}

/// Check the moment differential inequality
/// `dM_n/dt <= n ||grad K||_{b,inf} ||rho_{n-1}||_alpha ||rho||_beta`
/// by central finite differences of `M_n` against the per-frame right-hand
/// side evaluated from the snapshots (unit constant: the stated one is
/// below one).
pub fn check_moment_ode(
    series: &DiagnosticsSeries,
    snapshots: &[PhaseEnsemble],
    n: u32,
    kernel: &KernelSpec,
    slack: f64,
) -> Result<EnvelopeReport> {
    if series.len() < 3 {
        return Err(Error::SeriesTooShort(
            "moment derivative check needs at least 3 frames".into(),
        ));
    }
    if snapshots.len() != series.len() {
        return Err(Error::Invalid(format!(
            "snapshot count {} does not match series length {}",
            snapshots.len(),
            series.len()
        )));
    }
    let d = snapshots[0].dim();
    let table = exponents(n as i64, d as i64)?;
    let alpha = rat_f64(table.alpha);
    let beta = rat_f64(table.beta);
    let b = rat_f64(table.b);
    let weak = weak_norm_gradk(kernel, b)?;
    let kidx = series
        .order_index(n)
        .ok_or_else(|| Error::Invalid(format!("series does not record order {n}")))?;
    let mv = &series.moments_v[kidx];

    let mut times = Vec::new();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for i in 1..series.len() - 1 {
        let dmdt = (mv[i + 1] - mv[i - 1]) / (series.times[i + 1] - series.times[i - 1]);
        let rho_prev = partial_moment_density(&snapshots[i], n as f64 - 1.0, series.grid_h)?;
        let rho = deposit_density(&snapshots[i], series.grid_h)?;
        let bound =
            n as f64 * weak * lp_norm_density(&rho_prev, alpha) * lp_norm_density(&rho, beta);
        times.push(series.times[i]);
        lhs.push(dmdt);
        rhs.push(bound);
    }
    // an absolute floor on top of the relative slack absorbs the O(dt^2)
    // differencing error when the derivative is near zero
    let scale = mv[0].abs().max(1.0);
    let dt = series.times[1] - series.times[0];
    let abs_tol = ABS_FLOOR * scale + scale * dt * dt;
    Ok(EnvelopeReport::from_series(
        "moment-ode",
        json!({"n": n, "alpha": alpha, "beta": beta, "b": b, "weak_norm": weak}),
        times,
        lhs,
        rhs,
        slack,
        abs_tol,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::DEFAULT_SLACK;
    use crate::ensemble::{init_from_grid, GridInit, InitialData};

    fn gaussian_2d(cells: usize) -> PhaseEnsemble {
        init_from_grid(
            &GridInit {
                data: InitialData::Gaussian {
                    amplitude: 1.0,
                    sigma_x: 1.0,
                    sigma_v: 1.0,
                },
                cells_per_axis: cells,
                radius: 5.3,
                weight_floor_rel: 1e-14,
            },
            2,
        )
        .unwrap()
    }

    fn gaussian_3d(cells: usize) -> PhaseEnsemble {
        init_from_grid(
            &GridInit {
                data: InitialData::Gaussian {
                    amplitude: 1.0,
                    sigma_x: 1.0,
                    sigma_v: 1.0,
                },
                cells_per_axis: cells,
                radius: 5.3,
                weight_floor_rel: 1e-5,
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn interpolation_holds_on_gaussian_2d() {
        let e = gaussian_2d(16);
        for (n, k) in [(1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (3.0, 2.0)] {
            let rep =
                check_kinetic_interpolation(&e, 0.7, n, k, f64::INFINITY, DEFAULT_SLACK).unwrap();
            assert!(rep.pass, "(n,k)=({n},{k}): {}", rep.summary_line());
        }
    }

    #[test]
    fn interpolation_holds_on_gaussian_3d() {
        let e = gaussian_3d(8);
        for (n, k) in [(1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (3.0, 2.0)] {
            let rep =
                check_kinetic_interpolation(&e, 1.4, n, k, f64::INFINITY, DEFAULT_SLACK).unwrap();
            assert!(rep.pass, "(n,k)=({n},{k}): {}", rep.summary_line());
        }
    }

    #[test]
    fn lr_variant_holds_on_gaussian() {
        let e = gaussian_2d(16);
        for r in [2.0, 4.0] {
            for n in [2.0, 3.0] {
                let rep = check_kinetic_interpolation(&e, 0.7, n, 0.0, r, DEFAULT_SLACK).unwrap();
                assert!(rep.pass, "r={r}, n={n}: {}", rep.summary_line());
            }
        }
    }

    #[test]
    fn interpolation_diagonal_case() {
        // k = n: p = 1, theta = 0, lhs = M_n, rhs = C M_n
        let e = gaussian_2d(12);
        let rep =
            check_kinetic_interpolation(&e, 0.7, 2.0, 2.0, f64::INFINITY, DEFAULT_SLACK).unwrap();
        let m2 = moment_v(&e, 2.0);
        assert!((rep.lhs[0] - m2).abs() < 1e-9 * m2);
        assert!((rep.rhs[0] - 1.25 * m2).abs() < 1e-9 * m2);
        assert!(rep.pass);
    }

    #[test]
    fn single_marker_flags_estimator() {
        let e = PhaseEnsemble::new(
            2,
            0.0,
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0],
            vec![1.0],
        )
        .unwrap();
        let rep =
            check_kinetic_interpolation(&e, 0.5, 2.0, 0.0, f64::INFINITY, DEFAULT_SLACK).unwrap();
        assert!(rep
            .notes
            .iter()
            .any(|n| n.contains("estimator-dominated")));
    }

    #[test]
    fn weak_young_holds_on_gaussian() {
        let e = gaussian_2d(12);
        let kernel = KernelSpec::coulomb_2d(1.0, 1.0);
        let rep = check_weak_young(&e, &kernel, 0.7, 6.0, 2.0, 1.5, DEFAULT_SLACK).unwrap();
        assert!(rep.pass, "{}", rep.summary_line());
    }

    #[test]
    fn weak_young_zero_coupling() {
        let e = gaussian_2d(8);
        let kernel = KernelSpec {
            coupling: 0.0,
            ..KernelSpec::coulomb_2d(1.0, 1.0)
        };
        let rep = check_weak_young(&e, &kernel, 0.9, 6.0, 2.0, 1.5, DEFAULT_SLACK).unwrap();
        assert_eq!(rep.lhs[0], 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn moment_ode_trivial_under_zero_coupling() {
        use crate::diagnostics::DiagnosticsSeries;
        use crate::dynamics::step_boris_in_place;
        use crate::field::MagneticFieldSpec;
        let mut e = gaussian_2d(8);
        let kernel = KernelSpec {
            coupling: 0.0,
            ..KernelSpec::coulomb_2d(1.0, 1.0)
        };
        let field = MagneticFieldSpec::Uniform {
            amplitude: vec![0.7],
        };
        let mut series = DiagnosticsSeries::new(vec![2], vec![], 0.9);
        let mut snaps = Vec::new();
        series.record(&e).unwrap();
        snaps.push(e.clone());
        for _ in 0..4 {
            for _ in 0..5 {
                step_boris_in_place(&mut e, &kernel, &field, 0.01);
            }
            series.record(&e).unwrap();
            snaps.push(e.clone());
        }
        let rep = check_moment_ode(&series, &snaps, 2, &kernel, DEFAULT_SLACK).unwrap();
        assert!(rep.pass, "{}", rep.summary_line());
        // the derivative vanishes under a pure rotation
        for l in &rep.lhs {
            assert!(l.abs() < 1e-10, "dM/dt = {l}");
        }
    }

    #[test]
    fn weak_young_rejects_bad_exponents() {
        let e = gaussian_2d(8);
        let kernel = KernelSpec::coulomb_2d(1.0, 1.0);
        match check_weak_young(&e, &kernel, 0.9, 6.0, 2.0, 1.4, DEFAULT_SLACK) {
            Err(Error::ExponentRelation(_)) => {}
            other => panic!("expected ExponentRelation, got {other:?}"),
        }
    }
}
