//! 3D screened-kernel envelopes: the short-time moment bounds, the
//! long-time Eulerian-moment bound under the field decay hypothesis, the
//! smallness sufficient conditions and the high-order induction step.

use super::{EnvelopeReport, ABS_FLOOR};
use crate::diagnostics::{moment_v, DiagnosticsSeries};
use crate::ensemble::PhaseEnsemble;
use crate::error::{Error, Result};
use crate::exponents::{decay_exponent, exponents, rat_f64};
use serde_json::json;

/// Short-time horizon
/// `T* = min{ 5 / (16 F^{2/3} M3(0)^{1/3}),
///            9 / (8 F^{21/23} M4(0)^{1/7} M3(0)^{1/3}) }`
/// with `F = |f^in|_inf`.
pub fn t_star(sup_f: f64, m3_0: f64, m4_0: f64) -> Result<f64> {
    if sup_f <= 0.0 || m3_0 <= 0.0 || m4_0 <= 0.0 {
        return Err(Error::Invalid(
            "short-time horizon needs positive sup norm and moments".into(),
        ));
    }
    let t3 = 5.0 / (16.0 * sup_f.powf(2.0 / 3.0) * m3_0.powf(1.0 / 3.0));
    let t4 = 9.0
        / (8.0 * sup_f.powf(21.0 / 23.0) * m4_0.powf(1.0 / 7.0) * m3_0.powf(1.0 / 3.0));
    Ok(t3.min(t4))
}

/// Short-time envelope verdicts on `[0, T*]`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ShortTimeReport {
    pub t_star: f64,
    /// measured `sup M_n^{1/n}` over the window, n = 3, 4
    pub m_bar: [f64; 2],
    pub m3: EnvelopeReport,
    pub m4: EnvelopeReport,
    pub n3: EnvelopeReport,
    pub n4: EnvelopeReport,
    pub pass: bool,
}

/// Check `M3(t) <= 8 M3(0)`, `M4(t) <= 128 M4(0)` and the position-moment
/// bound `N_n(t) <= (N_n(0)^{1/n} + Mbar_n t)^n` on `[0, T*]`, with
/// `Mbar_n` the measured sup of `M_n^{1/n}` over the window.
pub fn envelope_3d_short(
    series: &DiagnosticsSeries,
    slack: f64,
) -> Result<ShortTimeReport> {
    let i3 = series
        .order_index(3)
        .ok_or_else(|| Error::Invalid("series lacks order 3".into()))?;
    let i4 = series
        .order_index(4)
        .ok_or_else(|| Error::Invalid("series lacks order 4".into()))?;
    let sup_f = series.sup_f[0];
    let m3_0 = series.moments_v[i3][0];
    let m4_0 = series.moments_v[i4][0];
    let ts = t_star(sup_f, m3_0, m4_0)?;
    let t_end = *series.times.last().unwrap();
    if t_end < ts * (1.0 - 1e-9) {
        return Err(Error::SeriesTooShort(format!(
            "series ends at {t_end}, before T* = {ts}"
        )));
    }
    let window: Vec<usize> = (0..series.len())
        .filter(|&f| series.times[f] <= ts * (1.0 + 1e-12))
        .collect();

    let mut m_bar = [0.0f64; 2];
    for &f in &window {
        m_bar[0] = m_bar[0].max(series.moments_v[i3][f].powf(1.0 / 3.0));
        m_bar[1] = m_bar[1].max(series.moments_v[i4][f].powf(0.25));
    }

    let times: Vec<f64> = window.iter().map(|&f| series.times[f]).collect();
    let mk_velocity = |idx: usize, factor: f64, label: &str, stmt_note: &str| {
        let lhs: Vec<f64> = window.iter().map(|&f| series.moments_v[idx][f]).collect();
        let rhs: Vec<f64> = vec![factor * series.moments_v[idx][0]; window.len()];
        EnvelopeReport::from_series(
            label,
            json!({"factor": factor, "t_star": ts}),
            times.clone(),
            lhs,
            rhs,
            slack,
            ABS_FLOOR,
        )
        .with_note(stmt_note)
    };
    // the derivation yields 2^3 for order 3 (the statement advertises the
    // smaller 2^{3/2}); both recorded, the derived one checked
    let m3 = mk_velocity(
        i3,
        8.0,
        "short-time-m3",
        "derived factor 2^3; advertised alternative 2^{3/2}",
    );
    let m4 = mk_velocity(i4, 128.0, "short-time-m4", "factor 2^7");

    let mk_position = |idx: usize, n: f64, mbar: f64, lit: f64, label: &str| {
        let lhs: Vec<f64> = window.iter().map(|&f| series.moments_x[idx][f]).collect();
        let n0 = series.moments_x[idx][0];
        let rhs: Vec<f64> = times
            .iter()
            .map(|&t| (n0.powf(1.0 / n) + mbar * t).powf(n))
            .collect();
        EnvelopeReport::from_series(
            label,
            json!({"n": n, "m_bar_measured": mbar, "m_bar_literal": lit, "t_star": ts}),
            times.clone(),
            lhs,
            rhs,
            slack,
            ABS_FLOOR,
        )
        .with_note("rate constant is the measured sup of M_n^{1/n} over the window")
    };
    let n3 = mk_position(i3, 3.0, m_bar[0], 2f64.powf(1.5) * m3_0, "short-time-n3");
    let n4 = mk_position(i4, 4.0, m_bar[1], 128.0 * m4_0, "short-time-n4");

    let pass = m3.pass && m4.pass && n3.pass && n4.pass;
    Ok(ShortTimeReport {
        t_star: ts,
        m_bar,
        m3,
        m4,
        n3,
        n4,
        pass,
    })
}

/// Inputs of the long-time Eulerian-moment bound.
#[derive(Debug, Clone, Copy)]
pub struct EulerianParams {
    /// integrability exponent of the kernel gradient, in (7/5, 3/2)
    pub c: f64,
    /// `||grad K||_c`
    pub kernel_norm_c: f64,
    /// field decay amplitude
    pub b0: f64,
    pub sup_f: f64,
    pub l1_f: f64,
    pub m3_0: f64,
    pub m4_0: f64,
}

/// The drift constant
/// `CC = C ||grad K||_c |f|_inf^{1/c} |f|_1^{1 - p4'/q'}` with
/// `C = (d+n+1)/(d+n) = 8/7` and `1/q' = 1/c - 1/7`.
pub fn eulerian_drift_constant(p: &EulerianParams) -> f64 {
    let c_lemma = 8.0 / 7.0;
    let inv_q_conj = 1.0 / p.c - 1.0 / 7.0;
    let exp_l1 = 1.0 - 1.75 * inv_q_conj;
    c_lemma * p.kernel_norm_c * p.sup_f.powf(1.0 / p.c) * p.l1_f.powf(exp_l1)
}

/// `CC' = (a/4)(4 B0 (1 + |f|_1) + CC)`.
pub fn eulerian_cprime(p: &EulerianParams) -> f64 {
    let a = decay_exponent(p.c);
    (a / 4.0) * (4.0 * p.b0 * (1.0 + p.l1_f) + eulerian_drift_constant(p))
}

/// Long-time check: for `t >= T*`,
/// `l4(t)^{-a/4} >= l4(T*)^{-a/4} - CC' (T*^{1-a} - t^{1-a}) / (a-1)`
/// with `l4 = 1 + L4`. The bound extends to an envelope only when the
/// gate `T*^{a+1} > (CC'/(a-1)) l4(T*)^{a/4}` holds; otherwise the check
/// reports that the smallness assumption is violated and claims nothing.
pub fn envelope_eulerian(
    series: &DiagnosticsSeries,
    params: &EulerianParams,
    slack: f64,
) -> Result<EnvelopeReport> {
    let a = decay_exponent(params.c);
    if a <= 1.0 {
        return Err(Error::Invalid(format!(
            "decay exponent a = {a} must exceed 1 (c in (7/5, 3/2))"
        )));
    }
    let i4 = series
        .order_index(4)
        .ok_or_else(|| Error::Invalid("series lacks order 4".into()))?;
    let ts = t_star(params.sup_f, params.m3_0, params.m4_0)?;
    if *series.times.last().unwrap() < ts {
        return Err(Error::SeriesTooShort(format!(
            "series ends before T* = {ts}"
        )));
    }
    let cprime = eulerian_cprime(params);
    let ell_ts = 1.0 + series.interpolate(&series.moments_e[i4], ts);

    let gate_lhs = ts.powf(a + 1.0);
    let gate_rhs = cprime / (a - 1.0) * ell_ts.powf(a / 4.0);
    let info = json!({
        "a": a, "c": params.c, "t_star": ts, "cprime": cprime,
        "drift_constant": eulerian_drift_constant(params),
        "ell4_at_t_star": ell_ts,
        "gate": {"lhs_t_pow_a_plus_1": gate_lhs, "rhs": gate_rhs,
                  "derivation_form_lhs_t_pow_a_minus_1": ts.powf(a - 1.0)},
    });
    if gate_lhs <= gate_rhs {
        return Ok(EnvelopeReport::failed(
            "eulerian-envelope",
            info,
            "smallness assumption violated: positivity gate fails, no envelope claimed",
        ));
    }

    let mut times = Vec::new();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for f in 0..series.len() {
        let t = series.times[f];
        if t < ts {
            continue;
        }
        let bound = ell_ts.powf(-a / 4.0)
            - cprime * (ts.powf(1.0 - a) - t.powf(1.0 - a)) / (a - 1.0);
        let measured = (1.0 + series.moments_e[i4][f]).powf(-a / 4.0);
        times.push(t);
        lhs.push(bound);
        rhs.push(measured);
    }
    Ok(EnvelopeReport::from_series(
        "eulerian-envelope",
        info,
        times,
        lhs,
        rhs,
        slack,
        ABS_FLOOR,
    )
    .with_note("lower bound on (1+L4)^{-a/4}; lhs is the bound, rhs the measured value"))
}

/// Inputs of the smallness sufficient conditions.
#[derive(Debug, Clone, Copy)]
pub struct SmallnessParams {
    pub eulerian: EulerianParams,
    pub n4_0: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SmallnessReport {
    pub t_star: f64,
    pub a: f64,
    pub cprime: f64,
    /// (lhs, rhs, pass) triplets for the three sufficient inequalities
    pub ineq1: (f64, f64, bool),
    pub ineq2: (f64, f64, bool),
    pub ineq3: (f64, f64, bool),
    pub pass: bool,
    /// which condition has the smallest lhs/rhs ratio
    pub binding: &'static str,
}

const T_STAR_CAP: f64 = 1e12;

/// Evaluate the three sufficient inequalities that operationalize the
/// smallness assumption for the long-time Eulerian bound (n = 4):
/// 1. `T* >= 2^{21a/4} (3 CC'/(a-1)) M4(0)^{a/4}`
/// 2. `T*^{a+1} >= 2^{3a/4} (3 CC'/(a-1)) (N4(0)^{1/4} + 2^7 M4(0) T*)^a`
/// 3. `T* >= (2^{3a/4} 3 CC'/(a-1))^{1/(a+1)}`
pub fn validate_smallness(params: &SmallnessParams) -> Result<SmallnessReport> {
    let p = &params.eulerian;
    let a = decay_exponent(p.c);
    if a <= 1.0 {
        return Err(Error::Invalid(format!(
            "decay exponent a = {a} must exceed 1"
        )));
    }
    let ts = if p.sup_f > 0.0 && p.m3_0 > 0.0 && p.m4_0 > 0.0 {
        t_star(p.sup_f, p.m3_0, p.m4_0)?.min(T_STAR_CAP)
    } else {
        T_STAR_CAP
    };
    let cprime = eulerian_cprime(p);
    let base = 3.0 * cprime / (a - 1.0);
    let f34 = 2f64.powf(0.75 * a); // 2^{a(n-1)/n}, n = 4

    let r1 = 2f64.powf(21.0 * a / 4.0) * base * p.m4_0.powf(a / 4.0);
    let i1 = (ts, r1, ts >= r1);
    let l2 = ts.powf(a + 1.0);
    let r2 = f34 * base * (params.n4_0.powf(0.25) + 128.0 * p.m4_0 * ts).powf(a);
    let i2 = (l2, r2, l2 >= r2);
    let r3 = (f34 * base).powf(1.0 / (a + 1.0));
    let i3 = (ts, r3, ts >= r3);

    let ratios = [
        (i1.0 / i1.1.max(1e-300), "ineq1"),
        (i2.0 / i2.1.max(1e-300), "ineq2"),
        (i3.0 / i3.1.max(1e-300), "ineq3"),
    ];
    let binding = ratios
        .iter()
        .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
        .unwrap()
        .1;
    Ok(SmallnessReport {
        t_star: ts,
        a,
        cprime,
        ineq1: i1,
        ineq2: i2,
        ineq3: i3,
        pass: i1.2 && i2.2 && i3.2,
        binding,
    })
}

/// High-order induction check (`n >= 5`): the moment derivative obeys
/// `dM_n/dt <= Phi(t) M_n^{(n+2)/(n+3)}` with
/// `Phi = n ((n+3)/(n+2)) (4/3) |grad K|_{3/2,inf}
///        |f|_inf^{1/(n+3) + theta_k} M_k^{1 - theta_k}`
/// and `k = (6n+9)/(n+6) < n - 1`. The measured lower-order moment feeds
/// an upper Riemann sum, giving the explicit envelope
/// `(M_n(0)^{1/(n+3)} + (1/(n+3)) int Phi)^{n+3}`.
pub fn envelope_3d_high_order(
    series: &DiagnosticsSeries,
    snapshots: &[PhaseEnsemble],
    n: u32,
    weak_norm_b: f64,
    slack: f64,
) -> Result<EnvelopeReport> {
    if n < 5 {
        return Err(Error::Invalid("high-order check needs n >= 5".into()));
    }
    if snapshots.len() != series.len() || snapshots.is_empty() {
        return Err(Error::SeriesTooShort(
            "high-order check needs one snapshot per frame".into(),
        ));
    }
    if snapshots[0].dim() != 3 {
        return Err(Error::DimensionMismatch {
            check: "envelope-3d-high-order".into(),
            needs: 3,
            has: snapshots[0].dim(),
        });
    }
    let table = exponents(n as i64, 3)?;
    let k = rat_f64(table.induction_k.unwrap());
    let theta_k = k / (k + 3.0);
    let sup_f = series.sup_f[0];
    let nf = n as f64;
    let pref = nf * ((nf + 3.0) / (nf + 2.0))
        * (4.0 / 3.0)
        * weak_norm_b
        * sup_f.powf(1.0 / (nf + 3.0) + theta_k);

    let phi: Vec<f64> = snapshots
        .iter()
        .map(|e| pref * moment_v(e, k).powf(1.0 - theta_k))
        .collect();
    let mn: Vec<f64> = snapshots.iter().map(|e| moment_v(e, nf)).collect();

    let mut envelope = Vec::with_capacity(series.len());
    let mut root = mn[0].powf(1.0 / (nf + 3.0));
    envelope.push(mn[0]);
    for f in 1..series.len() {
        let dt = series.times[f] - series.times[f - 1];
        // upper Riemann increment of the sublinear comparison solution
        root += dt * phi[f - 1].max(phi[f]) / (nf + 3.0);
        envelope.push(root.powf(nf + 3.0) * (1.0 + 1e-12));
    }
    Ok(EnvelopeReport::from_series(
        "envelope-3d-high-order",
        json!({"n": n, "k": k, "theta_k": theta_k, "prefactor": pref}),
        series.times.clone(),
        mn,
        envelope,
        slack,
        ABS_FLOOR,
    ))
}
