//! Consolidated verification reports: the check registry driven by
//! `verify`, the twin-run driver, and the constants table.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::exponents::{decay_exponent, exponents, rat_f64};
use crate::field::validate_hypothesis_b;
use crate::inequalities::{
    check_kinetic_interpolation, check_moment_ode, check_weak_young, envelope_2d_suite,
    envelope_3d_high_order, envelope_3d_short, envelope_eulerian, validate_smallness,
    EnvelopeReport, EulerianParams, Norms2d, SmallnessParams,
};
use crate::kernels::{kernel_b, strong_norm_gradk, weak_norm_gradk};
use crate::runner::RunOutput;
use crate::stability::{
    check_nowork, stability_envelope, twin_run, EnvelopeMode, Perturbation,
    StabilityEnvelopeReport, TwinConfig, TwinOutput,
};
use serde::Serialize;
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// The verification checks the driver knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckId {
    Interpolation,
    WeakYoung,
    MomentOde,
    Envelope2d,
    Envelope3dShort,
    Eulerian,
    Smallness,
    HighOrder,
    HypothesisB,
    NoWork,
}

impl CheckId {
    pub const ALL: [CheckId; 10] = [
        CheckId::Interpolation,
        CheckId::WeakYoung,
        CheckId::MomentOde,
        CheckId::Envelope2d,
        CheckId::Envelope3dShort,
        CheckId::Eulerian,
        CheckId::Smallness,
        CheckId::HighOrder,
        CheckId::HypothesisB,
        CheckId::NoWork,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CheckId::Interpolation => "interpolation",
            CheckId::WeakYoung => "weak-young",
            CheckId::MomentOde => "moment-ode",
            CheckId::Envelope2d => "envelope-2d",
            CheckId::Envelope3dShort => "envelope-3d-short",
            CheckId::Eulerian => "eulerian",
            CheckId::Smallness => "smallness",
            CheckId::HighOrder => "high-order",
            CheckId::HypothesisB => "hypothesis-b",
            CheckId::NoWork => "no-work",
        }
    }

    pub fn parse(name: &str) -> Result<CheckId> {
        CheckId::ALL
            .iter()
            .find(|c| c.name() == name)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("unknown check `{name}`")))
    }

    /// Dimension the check requires, if restricted.
    pub fn needs_dim(&self) -> Option<usize> {
        match self {
            CheckId::Envelope2d => Some(2),
            CheckId::Envelope3dShort
            | CheckId::Eulerian
            | CheckId::Smallness
            | CheckId::HighOrder => Some(3),
            _ => None,
        }
    }

    /// Default battery for a dimension.
    pub fn defaults_for(dim: usize) -> Vec<CheckId> {
        CheckId::ALL
            .iter()
            .copied()
            .filter(|c| c.needs_dim().is_none_or(|d| d == dim))
            .collect()
    }

    /// Statement of the inequality or property the check verifies.
    pub fn statement(&self) -> &'static str {
        match self {
            CheckId::Interpolation => {
                "||rho_k||_{p_{n,k}} <= C M_n^{1-theta} ||f||_r^theta (kinetic interpolation)"
            }
            CheckId::WeakYoung => {
                "||grad K * rho||_p <= ||grad K||_{q,inf} ||rho||_r, 1 + 1/p = 1/q + 1/r"
            }
            CheckId::MomentOde => {
                "dM_n/dt <= n ||grad K||_{b,inf} ||rho_{n-1}||_alpha ||rho||_beta"
            }
            CheckId::Envelope2d => "M_n(t) <= Phi_n(t), exponential/recursive 2D majorant",
            CheckId::Envelope3dShort => {
                "M3 <= 2^3 M3(0), M4 <= 2^7 M4(0) and N_n <= (N_n(0)^{1/n} + Mbar_n t)^n on [0, T*]"
            }
            CheckId::Eulerian => {
                "(1+L4)^{-a/4}(t) >= (1+L4)^{-a/4}(T*) - C'(T*^{1-a} - t^{1-a})/(a-1)"
            }
            CheckId::Smallness => "three sufficient inequalities gating the long-time 3D bound",
            CheckId::HighOrder => "dM_n/dt <= Phi(t) M_n^{(n+2)/(n+3)} for n >= 5",
            CheckId::HypothesisB => "|B(t,.)|, |x ^ B(t,.)| <= B0 t^{-a} field decay",
            CheckId::NoWork => "|V(t)| <= |V(0)| + int |grad K * rho(X)| dt per marker",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: String,
    pub statement: String,
    pub pass: bool,
    pub summary: String,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub config_hash: String,
    pub dim: usize,
    pub outcomes: Vec<CheckOutcome>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "verification report for config {}", self.config_hash);
        for o in &self.outcomes {
            let _ = writeln!(
                out,
                "[{}] {:<18} {} | {}",
                if o.pass { "PASS" } else { "FAIL" },
                o.id,
                o.summary,
                o.statement
            );
        }
        let _ = writeln!(
            out,
            "overall: {}",
            if self.pass { "PASS" } else { "FAIL" }
        );
        out
    }
}

fn outcome_from_reports(id: CheckId, reports: Vec<EnvelopeReport>) -> CheckOutcome {
    let pass = reports.iter().all(|r| r.pass);
    let worst = reports
        .iter()
        .map(|r| r.worst_margin_rel)
        .fold(f64::INFINITY, f64::min);
    CheckOutcome {
        id: id.name().into(),
        statement: id.statement().into(),
        pass,
        summary: format!(
            "{}/{} instances pass, worst rel margin {worst:+.3e}",
            reports.iter().filter(|r| r.pass).count(),
            reports.len()
        ),
        detail: serde_json::to_value(&reports).unwrap_or_default(),
    }
}

/// Interpolation pairs exercised by the default battery.
const INTERP_PAIRS: [(f64, f64); 4] = [(1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (3.0, 2.0)];
const LR_ORDERS: [f64; 2] = [2.0, 4.0];

/// Run the selected checks against a finished run.
pub fn run_checks(out: &RunOutput, checks: &[CheckId]) -> Result<VerifyReport> {
    let dim = out.config.dim;
    for c in checks {
        if let Some(d) = c.needs_dim() {
            if d != dim {
                return Err(Error::DimensionMismatch {
                    check: c.name().into(),
                    needs: d,
                    has: dim,
                });
            }
        }
    }
    let slack = out.config.verify.slack;
    let series = &out.series;
    let snapshots = &out.snapshots;
    let probe_frames: Vec<usize> = {
        let last = snapshots.len() - 1;
        let mut v = vec![0, last / 2, last];
        v.dedup();
        v
    };

    let mut outcomes = Vec::new();
    for check in checks {
        let outcome = match check {
            CheckId::Interpolation => {
                let mut reports = Vec::new();
                for &f in &probe_frames {
                    for (n, k) in INTERP_PAIRS {
                        reports.push(check_kinetic_interpolation(
                            &snapshots[f],
                            out.grid_h,
                            n,
                            k,
                            f64::INFINITY,
                            slack,
                        )?);
                    }
                    for r in LR_ORDERS {
                        for n in [2.0, 3.0] {
                            reports.push(check_kinetic_interpolation(
                                &snapshots[f],
                                out.grid_h,
                                n,
                                0.0,
                                r,
                                slack,
                            )?);
                        }
                    }
                }
                outcome_from_reports(*check, reports)
            }
            CheckId::WeakYoung => {
                let (p, q, r) = if dim == 2 {
                    (6.0, 2.0, 1.5)
                } else {
                    (3.0, 1.5, 1.5)
                };
                let mut reports = Vec::new();
                for &f in &probe_frames {
                    reports.push(check_weak_young(
                        &snapshots[f],
                        &out.kernel,
                        out.grid_h,
                        p,
                        q,
                        r,
                        slack,
                    )?);
                }
                outcome_from_reports(*check, reports)
            }
            CheckId::MomentOde => {
                let mut reports = Vec::new();
                for &n in &out.config.moment_orders {
                    if (1..=4).contains(&n) {
                        reports.push(check_moment_ode(series, snapshots, n, &out.kernel, slack)?);
                    }
                }
                outcome_from_reports(*check, reports)
            }
            CheckId::Envelope2d => {
                let norms = Norms2d {
                    sup_f: series.sup_f[0],
                    l1_f: series.mass[0],
                    weak_norm: weak_norm_gradk(&out.kernel, 2.0)?,
                };
                let n_max = out
                    .config
                    .moment_orders
                    .iter()
                    .copied()
                    .filter(|&n| n >= 1)
                    .max()
                    .unwrap_or(1)
                    .min(3);
                let reports = envelope_2d_suite(series, n_max, &norms, slack)?;
                outcome_from_reports(*check, reports)
            }
            CheckId::Envelope3dShort => {
                let st = envelope_3d_short(series, slack)?;
                let pass = st.pass;
                CheckOutcome {
                    id: check.name().into(),
                    statement: check.statement().into(),
                    pass,
                    summary: format!("T* = {:.4}, Mbar = [{:.4}, {:.4}]", st.t_star, st.m_bar[0], st.m_bar[1]),
                    detail: serde_json::to_value(&st).unwrap_or_default(),
                }
            }
            CheckId::Eulerian => {
                let params = eulerian_params(out)?;
                let rep = envelope_eulerian(series, &params, slack)?;
                outcome_from_reports(*check, vec![rep])
            }
            CheckId::Smallness => {
                let i4 = series
                    .order_index(4)
                    .ok_or_else(|| Error::Invalid("smallness needs moment order 4".into()))?;
                let params = SmallnessParams {
                    eulerian: eulerian_params(out)?,
                    n4_0: series.moments_x[i4][0],
                };
                let rep = validate_smallness(&params)?;
                CheckOutcome {
                    id: check.name().into(),
                    statement: check.statement().into(),
                    pass: rep.pass,
                    summary: format!(
                        "T* = {:.4}, C' = {:.3e}, binding: {}",
                        rep.t_star, rep.cprime, rep.binding
                    ),
                    detail: serde_json::to_value(&rep).unwrap_or_default(),
                }
            }
            CheckId::HighOrder => {
                let b = rat_f64(kernel_b(dim)?);
                let weak = weak_norm_gradk(&out.kernel, b)?;
                let rep = envelope_3d_high_order(series, snapshots, 5, weak, slack)?;
                outcome_from_reports(*check, vec![rep])
            }
            CheckId::HypothesisB => {
                let claim = out.config.field.decay_claim();
                match claim {
                    None => CheckOutcome {
                        id: check.name().into(),
                        statement: check.statement().into(),
                        pass: true,
                        summary: "field family carries no decay claim; skipped".into(),
                        detail: json!({"skipped": true}),
                    },
                    Some((b0, a)) => {
                        let t_grid: Vec<f64> = series
                            .times
                            .iter()
                            .copied()
                            .filter(|t| *t > 0.0)
                            .collect();
                        let t_grid = if t_grid.is_empty() {
                            vec![1.0, 2.0, 5.0, 10.0]
                        } else {
                            t_grid
                        };
                        let samples: Vec<Vec<f64>> = (0..snapshots[0].len())
                            .step_by((snapshots[0].len() / 64).max(1))
                            .map(|i| snapshots[0].position(i).to_vec())
                            .collect();
                        let rep =
                            validate_hypothesis_b(&out.config.field, b0, a, &t_grid, &samples);
                        CheckOutcome {
                            id: check.name().into(),
                            statement: check.statement().into(),
                            pass: rep.pass,
                            summary: format!(
                                "worst rel margin {:+.3e}{}",
                                rep.worst_margin_rel,
                                rep.warning
                                    .as_deref()
                                    .map(|w| format!("; warning: {w}"))
                                    .unwrap_or_default()
                            ),
                            detail: serde_json::to_value(&rep).unwrap_or_default(),
                        }
                    }
                }
            }
            CheckId::NoWork => {
                let rep = check_nowork(&out.nowork, snapshots.last().unwrap(), 0.0);
                outcome_from_reports(*check, vec![rep])
            }
        };
        outcomes.push(outcome);
    }
    let pass = outcomes.iter().all(|o| o.pass);
    Ok(VerifyReport {
        config_hash: out.config_hash.clone(),
        dim,
        outcomes,
        pass,
    })
}

fn eulerian_params(out: &RunOutput) -> Result<EulerianParams> {
    let series = &out.series;
    let i3 = series
        .order_index(3)
        .ok_or_else(|| Error::Invalid("long-time checks need moment order 3".into()))?;
    let i4 = series
        .order_index(4)
        .ok_or_else(|| Error::Invalid("long-time checks need moment order 4".into()))?;
    let c = out.config.verify.c;
    let b0 = out.config.field.decay_claim().map_or(0.0, |(b0, _)| b0);
    Ok(EulerianParams {
        c,
        kernel_norm_c: strong_norm_gradk(&out.kernel, c)?,
        b0,
        sup_f: series.sup_f[0],
        l1_f: series.mass[0],
        m3_0: series.moments_v[i3][0],
        m4_0: series.moments_v[i4][0],
    })
}

pub fn write_verify_artifacts(report: &VerifyReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let json_path = dir.join("verify_report.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(report)?)?;
    let txt_path = dir.join("verify_report.txt");
    std::fs::write(&txt_path, report.render_text())?;
    Ok((json_path, txt_path))
}

// ---------------------------------------------------------------------------
// Twin-run driver.
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct TwinSummary {
    pub config_hash: String,
    pub output: TwinOutput,
    pub envelope: StabilityEnvelopeReport,
    pub nowork: EnvelopeReport,
    /// `W_p^p <= D_p` verified on every recorded frame
    pub coupling_dominated: bool,
}

/// Run a twin simulation from a config plus a perturbation and evaluate
/// the stability battery (fitted-constant envelope mode).
pub fn run_twin(config: &RunConfig, perturbation: &Perturbation) -> Result<TwinSummary> {
    config.validate()?;
    let kernel = config.resolved_kernel();
    let base = crate::ensemble::init_from_grid(&config.initial, config.dim)?;
    let n = base.len();
    let twin_cfg = TwinConfig {
        p: config.verify.p,
        dt: config.dt,
        steps: (config.horizon / config.dt).round() as usize,
        output_every: config.output_every,
        grid_h: config.resolved_grid_h(),
        exact_ot_every: if n <= 320 { Some(1) } else { None },
        ot_pair_cap: 1 << 22,
    };
    let output = twin_run(&base, perturbation, &kernel, &config.field, &twin_cfg)?;
    let envelope = stability_envelope(&output.trace, EnvelopeMode::Fitted, config.verify.slack)?;
    let nowork = check_nowork(&output.nowork_1, &output.final_1, 0.0);
    let coupling_dominated = (0..output.trace.len()).all(|f| {
        let w = output.trace.wpp_exact[f].unwrap_or(output.trace.wpp_coupling[f]);
        output.trace.degenerate || w <= output.trace.d_p[f] * (1.0 + 1e-12) + 1e-300
    });
    Ok(TwinSummary {
        config_hash: config.hash(),
        output,
        envelope,
        nowork,
        coupling_dominated,
    })
}

pub fn write_twin_artifacts(summary: &TwinSummary, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let trace_path = dir.join("trace.csv");
    {
        let mut f = std::fs::File::create(&trace_path)?;
        summary
            .output
            .trace
            .write_csv(&mut f, &summary.config_hash)?;
    }
    let report_path = dir.join("stability_report.json");
    let doc = json!({
        "config_hash": summary.config_hash,
        "envelope": summary.envelope,
        "no_work": summary.nowork,
        "coupling_dominated": summary.coupling_dominated,
        "regime_exit_time": summary.output.trace.regime_exit_time,
        "degenerate": summary.output.trace.degenerate,
    });
    std::fs::write(&report_path, serde_json::to_string_pretty(&doc)?)?;
    Ok((trace_path, report_path))
}

// ---------------------------------------------------------------------------
// Constants table.
// ---------------------------------------------------------------------------

/// Text table of the exponent calculus and kernel norms.
pub fn constants_table(
    dim: usize,
    n_lo: i64,
    n_hi: i64,
    kappa: f64,
    coupling: f64,
) -> Result<String> {
    let mut out = String::new();
    let b = kernel_b(dim)?;
    if dim == 2 && kappa != 0.0 {
        let _ = writeln!(out, "warning: screening applies to the 3D kernel only");
    }
    let kernel = if dim == 2 {
        crate::kernels::KernelSpec::coulomb_2d(1.0, coupling)
    } else {
        crate::kernels::KernelSpec::yukawa_3d(1.0, kappa, coupling)
    };
    let weak = weak_norm_gradk(&kernel, rat_f64(b))?;
    let _ = writeln!(out, "dim = {dim}, b = {b}, |grad K|_{{b,inf}} = {weak:.12}");
    if dim == 3 && kappa > 0.0 {
        for c in [1.41, 1.45, 1.49] {
            let s = strong_norm_gradk(&kernel, c)?;
            let _ = writeln!(
                out,
                "|grad K|_{c} = {s:.12} (decay exponent a = {:.12})",
                decay_exponent(c)
            );
        }
    }
    let _ = writeln!(
        out,
        "{:>3} {:>10} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "n", "alpha", "alpha'", "beta", "beta'", "theta_nn1", "p_n", "theta_n", "eps", "Theta"
    );
    for n in n_lo..=n_hi {
        let t = exponents(n, dim as i64)?;
        let _ = writeln!(
            out,
            "{:>3} {:>10} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            n,
            t.alpha.to_string(),
            t.alpha_conj.to_string(),
            t.beta.to_string(),
            t.beta_conj.to_string(),
            t.theta_n_nm1.to_string(),
            t.p_n.to_string(),
            t.theta_n.to_string(),
            t.epsilon.map(|e| e.to_string()).unwrap_or_else(|| "-".into()),
            t.big_theta
                .map(|e| e.to_string())
                .unwrap_or_else(|| "-".into()),
        );
    }
    Ok(out)
}
