//! Twin-run stability verification: the kinetic transport functional with
//! its self-referential position weight, the no-work inequality, field
//! regularity estimates, and the log-scale stability envelope.

use crate::diagnostics::moment_v;
use crate::dynamics::{force_at, step_boris_in_place, StepStats};
use crate::ensemble::PhaseEnsemble;
use crate::error::{Error, Result};
use crate::field::MagneticFieldSpec;
use crate::grid::{deposit_density, lp_norm_density};
use crate::inequalities::{EnvelopeReport, ABS_FLOOR};
use crate::kernels::KernelSpec;
use crate::numeric::pairwise_sum;
use crate::transport::{wasserstein_p, CouplingPlan, OtSolution, TransportCost};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::io::Write;

// ---------------------------------------------------------------------------
// The transport functional D_p and its fixed point.
// ---------------------------------------------------------------------------

/// Outcome of the fixed-point solve
/// `D = S_X |log D|^{p/2} + S_V` on `(0, 1/e]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DpOutcome {
    /// both displacement sums vanish; the log weight is undefined
    Degenerate,
    /// no root at or below 1/e: the regime is left
    RegimeExit { total: f64 },
    Fixed { d_p: f64, lambda: f64 },
}

pub const REGIME_BOUND: f64 = 0.36787944117144233; // 1/e

/// Solve the scalar fixed point. The right-hand side is strictly
/// decreasing in `D` on `(0, 1)` while the left side increases, so the
/// root is unique; bisection runs in log space and a Newton polish brings
/// the residual below `1e-10 D`.
pub fn solve_dp_scalar(s_x: f64, s_v: f64, p: f64) -> DpOutcome {
    assert!(s_x >= 0.0 && s_v >= 0.0 && p >= 1.0);
    if s_x == 0.0 && s_v == 0.0 {
        return DpOutcome::Degenerate;
    }
    let g = |d: f64| s_x * (-d.ln()).powf(0.5 * p) + s_v;
    // at D = 1/e the weight equals one, so the fixed point exists iff
    // S_X + S_V <= 1/e
    if s_x + s_v > REGIME_BOUND {
        return DpOutcome::RegimeExit { total: s_x + s_v };
    }
    if s_x == 0.0 {
        let d = s_v;
        return DpOutcome::Fixed {
            d_p: d,
            lambda: (-d.ln()).powf(0.5 * p),
        };
    }
    // log-space bisection on u = ln D
    let mut lo = -690.0f64;
    let mut hi = -1.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.exp() - g(mid.exp()) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut d = (0.5 * (lo + hi)).exp();
    for _ in 0..8 {
        let f = d - g(d);
        let df = 1.0 + s_x * 0.5 * p * (-d.ln()).powf(0.5 * p - 1.0) / d;
        let step = f / df;
        if (d - step) > 0.0 {
            d -= step;
        }
    }
    DpOutcome::Fixed {
        d_p: d,
        lambda: (-d.ln()).powf(0.5 * p),
    }
}

/// Displacement sums of a coupling between two ensembles:
/// `S_X = sum pi |X1 - X2|^p`, `S_V = sum pi |V1 - V2|^p`.
pub fn displacement_sums(
    plan: &CouplingPlan,
    e1: &PhaseEnsemble,
    e2: &PhaseEnsemble,
    p: f64,
) -> (f64, f64) {
    let sx = pairwise_sum(plan.pairs.len(), &|k| {
        let (i, j, w) = plan.pairs[k];
        let d2: f64 = e1
            .position(i)
            .iter()
            .zip(e2.position(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        w * d2.powf(0.5 * p)
    });
    let sv = pairwise_sum(plan.pairs.len(), &|k| {
        let (i, j, w) = plan.pairs[k];
        let d2: f64 = e1
            .velocity(i)
            .iter()
            .zip(e2.velocity(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        w * d2.powf(0.5 * p)
    });
    (sx, sv)
}

/// Solve the transport functional for a coupling between two states.
pub fn solve_dp(
    plan: &CouplingPlan,
    e1: &PhaseEnsemble,
    e2: &PhaseEnsemble,
    p: f64,
) -> (DpOutcome, f64, f64) {
    let (sx, sv) = displacement_sums(plan, e1, e2, p);
    (solve_dp_scalar(sx, sv, p), sx, sv)
}

// ---------------------------------------------------------------------------
// Twin runs.
// ---------------------------------------------------------------------------

/// Marker-wise perturbations of the initial data. Both are maps applied
/// per marker, so the identity-index coupling realizes the initial plan
/// (exactly optimal for constant shifts under the split convex cost).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub enum Perturbation {
    Shift { dx: Vec<f64>, dv: Vec<f64> },
    VelocityScale { factor: f64 },
}

impl Perturbation {
    pub fn apply(&self, e: &PhaseEnsemble) -> Result<PhaseEnsemble> {
        match self {
            Perturbation::Shift { dx, dv } => {
                let mut dxf = dx.clone();
                let mut dvf = dv.clone();
                dxf.resize(e.dim(), 0.0);
                dvf.resize(e.dim(), 0.0);
                e.shifted(&dxf, &dvf)
            }
            Perturbation::VelocityScale { factor } => {
                let mut out = e.clone();
                for v in out.velocities_mut() {
                    *v *= factor;
                }
                Ok(out)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Perturbation::Shift { dx, dv } => {
                dx.iter().all(|c| *c == 0.0) && dv.iter().all(|c| *c == 0.0)
            }
            Perturbation::VelocityScale { factor } => *factor == 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwinConfig {
    pub p: f64,
    pub dt: f64,
    pub steps: usize,
    pub output_every: usize,
    /// deposition cell size for the density sup norms
    pub grid_h: f64,
    /// solve the exact transport problem every k-th frame (None: never)
    pub exact_ot_every: Option<usize>,
    pub ot_pair_cap: usize,
}

/// Coupled twin-run record.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityTrace {
    pub p: f64,
    pub times: Vec<f64>,
    pub d_p: Vec<f64>,
    /// position weight; NaN on degenerate frames
    pub lambda: Vec<f64>,
    pub s_x: Vec<f64>,
    pub s_v: Vec<f64>,
    /// transport cost of the evolved coupling at unit weight: an upper
    /// bound for `W_p^p`, itself below `D_p` in regime
    pub wpp_coupling: Vec<f64>,
    pub wpp_exact: Vec<Option<f64>>,
    pub rho1_sup: Vec<f64>,
    pub rho2_sup: Vec<f64>,
    pub a_tilde: Vec<f64>,
    /// cumulative trapezoid of `a_tilde`
    pub a_integral: Vec<f64>,
    /// `A = a_tilde + a_integral`
    pub a_t: Vec<f64>,
    pub degenerate: bool,
    pub regime_exit_time: Option<f64>,
}

impl StabilityTrace {
    fn new(p: f64) -> Self {
        StabilityTrace {
            p,
            times: Vec::new(),
            d_p: Vec::new(),
            lambda: Vec::new(),
            s_x: Vec::new(),
            s_v: Vec::new(),
            wpp_coupling: Vec::new(),
            wpp_exact: Vec::new(),
            rho1_sup: Vec::new(),
            rho2_sup: Vec::new(),
            a_tilde: Vec::new(),
            a_integral: Vec::new(),
            a_t: Vec::new(),
            degenerate: false,
            regime_exit_time: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// cumulative trapezoid of `A(t)`
    pub fn a_big_integral(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for f in 0..self.len() {
            if f > 0 {
                let dt = self.times[f] - self.times[f - 1];
                acc += 0.5 * dt * (self.a_t[f] + self.a_t[f - 1]);
            }
            out.push(acc);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, config_hash: &str) -> Result<()> {
        writeln!(w, "# vlasovlab-trace v1 p={} config={}", self.p, config_hash)?;
        writeln!(
            w,
            "time,d_p,lambda,s_x,s_v,wpp_coupling,wpp_exact,rho1_sup,rho2_sup,a_tilde,a_integral,a_t"
        )?;
        for f in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.times[f],
                self.d_p[f],
                self.lambda[f],
                self.s_x[f],
                self.s_v[f],
                self.wpp_coupling[f],
                self.wpp_exact[f]
                    .map(|v| format!("{v}"))
                    .unwrap_or_default(),
                self.rho1_sup[f],
                self.rho2_sup[f],
                self.a_tilde[f],
                self.a_integral[f],
                self.a_t[f]
            )?;
        }
        Ok(())
    }
}

/// Running certificate for the no-work inequality: initial speeds and the
/// accumulated electric-field path integral per marker.
#[derive(Debug, Clone)]
pub struct NoWorkLedger {
    pub initial_speeds: Vec<f64>,
    pub e_integral: Vec<f64>,
    pub steps: usize,
    pub dt_max: f64,
}

impl NoWorkLedger {
    pub fn new(e: &PhaseEnsemble) -> Self {
        let speeds = (0..e.len())
            .map(|i| e.velocity(i).iter().map(|c| c * c).sum::<f64>().sqrt())
            .collect();
        NoWorkLedger {
            initial_speeds: speeds,
            e_integral: vec![0.0; e.len()],
            steps: 0,
            dt_max: 0.0,
        }
    }

    pub fn absorb(&mut self, stats: &StepStats, dt: f64) {
        for (acc, e) in self.e_integral.iter_mut().zip(&stats.e_magnitudes) {
            *acc += dt.abs() * e;
        }
        self.steps += 1;
        self.dt_max = self.dt_max.max(dt.abs());
    }
}

/// Verify `|V_i(t)| - |V_i(0)| <= int |E(X_i)| dt + tol` for every marker.
/// The discrete pusher satisfies the bound exactly (the rotation is an
/// isometry and each kick adds at most `dt |E| / 2`), so the tolerance
/// only covers round-off.
pub fn check_nowork(ledger: &NoWorkLedger, e: &PhaseEnsemble, slack: f64) -> EnvelopeReport {
    let n = e.len();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_idx = 0usize;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..n {
        let speed = e.velocity(i).iter().map(|c| c * c).sum::<f64>().sqrt();
        let gain = speed - ledger.initial_speeds[i];
        let bound = ledger.e_integral[i];
        if gain - bound > worst {
            worst = gain - bound;
            worst_idx = i;
            lhs = gain;
            rhs = bound;
        }
    }
    let tol = 1e-11
        * (1.0 + ledger.initial_speeds[worst_idx] + ledger.e_integral[worst_idx])
        * (1.0 + ledger.steps as f64 / 1000.0);
    EnvelopeReport::from_series(
        "no-work",
        json!({"markers": n, "steps": ledger.steps, "worst_marker": worst_idx, "tol": tol}),
        vec![e.time()],
        vec![lhs],
        vec![rhs],
        slack,
        tol,
    )
}

/// Full twin-run output.
#[derive(Debug, Clone)]
pub struct TwinOutput {
    pub trace: StabilityTrace,
    pub plan: CouplingPlan,
    pub final_1: PhaseEnsemble,
    pub final_2: PhaseEnsemble,
    pub nowork_1: NoWorkLedger,
}

/// Evolve two coupled solutions in lockstep: the reference ensemble and
/// its marker-wise perturbation, sharing the index coupling transported
/// along both flows. Weights are normalized to unit mass inside the
/// transport functional; the dynamics use the raw weights.
pub fn twin_run(
    base: &PhaseEnsemble,
    perturbation: &Perturbation,
    kernel: &KernelSpec,
    field: &MagneticFieldSpec,
    cfg: &TwinConfig,
) -> Result<TwinOutput> {
    let mut e1 = base.clone();
    let mut e2 = perturbation.apply(base)?;
    let mass = e1.mass();
    let normalized: Vec<f64> = e1.weights().iter().map(|w| w / mass).collect();
    let plan = CouplingPlan::identity(&normalized);

    let degenerate = perturbation.is_zero();
    let mut trace = StabilityTrace::new(cfg.p);
    trace.degenerate = degenerate;

    // initial regime check
    if !degenerate {
        let (outcome, _, _) = solve_dp(&plan, &e1, &e2, cfg.p);
        if let DpOutcome::RegimeExit { total } = outcome {
            return Err(Error::RegimeViolatedAtStart(total));
        }
    }

    let mut nowork = NoWorkLedger::new(&e1);
    let mut frame = 0usize;
    let record =
        |trace: &mut StabilityTrace, e1: &PhaseEnsemble, e2: &PhaseEnsemble, frame: usize| -> Result<bool> {
            let (outcome, sx, sv) = solve_dp(&plan, e1, e2, cfg.p);
            let (d_p, lambda) = match outcome {
                DpOutcome::Degenerate => (0.0, f64::NAN),
                DpOutcome::RegimeExit { .. } => {
                    trace.regime_exit_time = Some(e1.time());
                    return Ok(false);
                }
                DpOutcome::Fixed { d_p, lambda } => (d_p, lambda),
            };
            let wpp = sx + sv;
            let exact = match cfg.exact_ot_every {
                Some(k) if k > 0 && frame.is_multiple_of(k) => Some(
                    wasserstein_p(e1, e2, cfg.p, TransportCost::PhaseSplit, cfg.ot_pair_cap)
                        .map(|s: OtSolution| s.wpp / mass)?,
                ),
                _ => None,
            };
            let r1 = lp_norm_density(&deposit_density(e1, cfg.grid_h)?, f64::INFINITY) / mass;
            let r2 = lp_norm_density(&deposit_density(e2, cfg.grid_h)?, f64::INFINITY) / mass;
            let pc = cfg.p / (cfg.p - 1.0).max(1e-12);
            let a_tilde =
                (r2 + r1.powf(1.0 / cfg.p) * r1.max(r2).powf(1.0 / pc)).max(1.0);
            let (a_int, a_t) = {
                let prev_int = trace.a_integral.last().copied().unwrap_or(0.0);
                let a_int = if let (Some(&t_prev), Some(&at_prev)) =
                    (trace.times.last(), trace.a_tilde.last())
                {
                    prev_int + 0.5 * (e1.time() - t_prev) * (a_tilde + at_prev)
                } else {
                    0.0
                };
                (a_int, a_tilde + a_int)
            };
            trace.times.push(e1.time());
            trace.d_p.push(d_p);
            trace.lambda.push(lambda);
            trace.s_x.push(sx);
            trace.s_v.push(sv);
            trace.wpp_coupling.push(wpp);
            trace.wpp_exact.push(exact);
            trace.rho1_sup.push(r1);
            trace.rho2_sup.push(r2);
            trace.a_tilde.push(a_tilde);
            trace.a_integral.push(a_int);
            trace.a_t.push(a_t);
            Ok(true)
        };

    record(&mut trace, &e1, &e2, frame)?;
    let mut in_regime = true;
    for step in 1..=cfg.steps {
        let stats1 = step_boris_in_place(&mut e1, kernel, field, cfg.dt);
        let _stats2 = step_boris_in_place(&mut e2, kernel, field, cfg.dt);
        nowork.absorb(&stats1, cfg.dt);
        if e1.has_non_finite() || e2.has_non_finite() {
            return Err(Error::NumericalBlowup {
                frame: step,
                what: "twin run state".into(),
            });
        }
        if step % cfg.output_every == 0 && in_regime {
            frame += 1;
            in_regime = record(&mut trace, &e1, &e2, frame)?;
        }
    }
    Ok(TwinOutput {
        trace,
        plan,
        final_1: e1,
        final_2: e2,
        nowork_1: nowork,
    })
}

// ---------------------------------------------------------------------------
// Field regularity checks.
// ---------------------------------------------------------------------------

/// Sample the log-Lipschitz modulus of the self-consistent field: the sup
/// over pairs of `|E(x) - E(y)| / ((1 + |rho|_inf) s log(4 sqrt(3)/s))`
/// with `s = |x - y|` swept over `[1e-6, 1e-1]`. Passes when the sup is
/// finite and the small-separation bins do not exceed the rest.
pub fn check_loglip_field(
    ensemble: &PhaseEnsemble,
    kernel: &KernelSpec,
    grid_h: f64,
    seed: u64,
    slack: f64,
) -> Result<EnvelopeReport> {
    let d = ensemble.dim();
    let rho_sup = lp_norm_density(&deposit_density(ensemble, grid_h)?, f64::INFINITY);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_base = 24usize.min(ensemble.len());
    let seps: Vec<f64> = (0..12)
        .map(|k| 1e-6 * (1e-1f64 / 1e-6).powf(k as f64 / 11.0))
        .collect();

    let mut sup_per_sep = vec![0.0f64; seps.len()];
    for _ in 0..n_base {
        let i = rng.gen_range(0..ensemble.len());
        let x0: Vec<f64> = ensemble.position(i).to_vec();
        let e0 = force_at(ensemble, kernel, &x0);
        for (si, &s) in seps.iter().enumerate() {
            let mut dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nrm: f64 = dir.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-12);
            dir.iter_mut().for_each(|c| *c /= nrm);
            let y: Vec<f64> = x0.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
            let ey = force_at(ensemble, kernel, &y);
            let de: f64 = e0
                .iter()
                .zip(&ey)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let denom = (1.0 + rho_sup) * s * (4.0 * 3f64.sqrt() / s).ln();
            sup_per_sep[si] = sup_per_sep[si].max(de / denom);
        }
    }
    let third = seps.len() / 3;
    let small_max = sup_per_sep[..third].iter().copied().fold(0.0, f64::max);
    let rest_max = sup_per_sep[third..].iter().copied().fold(0.0, f64::max);
    let all_finite = sup_per_sep.iter().all(|v| v.is_finite());
    let mut report = EnvelopeReport::from_series(
        "loglip-field",
        json!({"rho_sup": rho_sup, "separations": seps, "sup_per_separation": sup_per_sep,
               "growth_factor_allowed": 1.5}),
        vec![ensemble.time()],
        vec![small_max],
        vec![1.5 * rest_max],
        slack,
        ABS_FLOOR,
    );
    if !all_finite {
        report.pass = false;
        report = report.with_note("non-finite ratio encountered");
    }
    Ok(report.with_note(
        "lhs: sup ratio over the smallest separations; rhs: 1.5x the sup over the rest",
    ))
}

/// Empirical constant of the field-difference bound
/// `||E1 - E2||_p <= C max{|rho1|_inf, |rho2|_inf}^{1/p'} W_p(rho1, rho2)`.
#[derive(Debug, Clone, Serialize)]
pub struct FieldDifferenceReport {
    pub p: f64,
    pub lhs: f64,
    pub wp_spatial: f64,
    pub rho_sup_max: f64,
    /// `lhs / (rho^{1/p'} W_p)`: a lower estimate of the constant
    pub ratio: f64,
}

/// Measure the ratio on one pair of states. `wp_known` supplies the exact
/// spatial distance when available (pure translations); otherwise the
/// transport solver runs on the spatial marginals.
pub fn check_lp_field_difference(
    e1: &PhaseEnsemble,
    e2: &PhaseEnsemble,
    kernel: &KernelSpec,
    grid_h: f64,
    p: f64,
    wp_known: Option<f64>,
    ot_pair_cap: usize,
) -> Result<FieldDifferenceReport> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Invalid(
            "the field-difference estimate needs 1 < p < infinity".into(),
        ));
    }
    let d = e1.dim();
    if e2.dim() != d {
        return Err(Error::Invalid("dimension mismatch".into()));
    }
    // common grid over both clouds
    let (lo1, hi1) = e1.position_bbox();
    let (lo2, hi2) = e2.position_bbox();
    let lo: Vec<f64> = lo1.iter().zip(&lo2).map(|(a, b)| a.min(*b)).collect();
    let hi: Vec<f64> = hi1.iter().zip(&hi2).map(|(a, b)| a.max(*b)).collect();
    let mut shape = vec![0usize; d];
    let mut origin = vec![0.0; d];
    for a in 0..d {
        origin[a] = lo[a] - 1.5 * grid_h;
        shape[a] = ((hi[a] - lo[a]) / grid_h).ceil() as usize + 3;
    }
    let cells: usize = shape.iter().product();
    if cells > crate::grid::DEFAULT_CELL_CAP {
        return Err(Error::GridTooLarge {
            requested: cells,
            cap: crate::grid::DEFAULT_CELL_CAP,
        });
    }

    let mut lp_sum = 0.0f64;
    let mut idx = vec![0usize; d];
    for _ in 0..cells {
        let center: Vec<f64> = (0..d)
            .map(|a| origin[a] + (idx[a] as f64 + 0.5) * grid_h)
            .collect();
        let f1 = force_at(e1, kernel, &center);
        let f2 = force_at(e2, kernel, &center);
        let diff: f64 = f1
            .iter()
            .zip(&f2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        lp_sum += diff.powf(p);
        // advance the multi-index
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    let lhs = (grid_h.powi(d as i32) * lp_sum).powf(1.0 / p);

    let r1 = lp_norm_density(&deposit_density(e1, grid_h)?, f64::INFINITY);
    let r2 = lp_norm_density(&deposit_density(e2, grid_h)?, f64::INFINITY);
    let rho_sup_max = r1.max(r2);
    let wp = match wp_known {
        Some(w) => w,
        None => wasserstein_p(e1, e2, p, TransportCost::Spatial, ot_pair_cap)?
            .wpp
            .powf(1.0 / p),
    };
    let pc = p / (p - 1.0);
    let denom = rho_sup_max.powf(1.0 / pc) * wp;
    Ok(FieldDifferenceReport {
        p,
        lhs,
        wp_spatial: wp,
        rho_sup_max,
        ratio: if denom > 0.0 { lhs / denom } else { f64::NAN },
    })
}

/// Sweep the field-difference ratio over shrinking spatial shifts and
/// check that the empirical constant is stable (largest/smallest below 2).
pub fn lp_field_ratio_sweep(
    base: &PhaseEnsemble,
    kernel: &KernelSpec,
    grid_h: f64,
    p: f64,
    deltas: &[f64],
    slack: f64,
) -> Result<EnvelopeReport> {
    let mass = base.mass();
    let mut ratios = Vec::new();
    for &delta in deltas {
        let mut dx = vec![0.0; base.dim()];
        dx[0] = delta;
        let shifted = base.shifted(&dx, &vec![0.0; base.dim()])?;
        // translation: W_p of the spatial marginals is exactly
        // mass^{1/p} * delta
        let wp = mass.powf(1.0 / p) * delta;
        let rep =
            check_lp_field_difference(base, &shifted, kernel, grid_h, p, Some(wp), usize::MAX)?;
        ratios.push(rep.ratio);
    }
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EnvelopeReport::from_series(
        "lp-field-difference",
        json!({"p": p, "deltas": deltas, "ratios": ratios, "stability_factor": 2.0}),
        vec![base.time()],
        vec![max],
        vec![2.0 * min],
        slack,
        ABS_FLOOR,
    )
    .with_note("lhs: largest ratio over the sweep; rhs: 2x the smallest"))
}

// ---------------------------------------------------------------------------
// The stability envelope.
// ---------------------------------------------------------------------------

/// Largest admissible initial `W_p^p`: the biggest `w <= 1/e` with
/// `w |log w|^{p/2} <= 1/e`, so the induced transport functional starts
/// inside the regime.
pub fn c0_small(p: f64) -> f64 {
    let phi = |w: f64| w * (-w.ln()).powf(0.5 * p);
    if phi(REGIME_BOUND) <= REGIME_BOUND * (1.0 + 1e-12) && phi((-0.5 * p).exp()) <= REGIME_BOUND {
        return REGIME_BOUND;
    }
    // the modulus peaks at w = e^{-p/2}; find the first crossing below it
    let mut lo = 1e-300f64;
    let mut hi = (-0.5 * p).exp();
    for _ in 0..200 {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        if phi(mid) <= REGIME_BOUND {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Yudovich-type moment growth constant: `max_k M_k(0)^{1/k} / k` over
/// `1 <= k <= k_max` (linear growth function).
pub fn moment_growth_c0(e: &PhaseEnsemble, k_max: u32) -> f64 {
    let mass = e.mass().max(1e-300);
    (1..=k_max)
        .map(|k| (moment_v(e, k as f64) / mass).powf(1.0 / k as f64) / k as f64)
        .fold(0.0, f64::max)
}

/// Sub-constants of the assembled envelope constant
/// `C_{p,B} = (p/2)(1 + C_p + C~_{p,B})`.
#[derive(Debug, Clone, Serialize)]
pub struct AssembledConstants {
    /// field-difference ratio estimate (measured or supplied)
    pub c_p: f64,
    /// `p (2 + log(p/2))`
    pub c_bar_p: f64,
    /// moment growth constant of the initial data
    pub c0_growth: f64,
    /// Hoelder constant of the field: `|grad B|_inf + 2 |B|_inf`
    pub c_bar_b: f64,
    pub c_b1: f64,
    pub c_b2: f64,
    pub c_tilde_pb: f64,
    pub c_pb: f64,
}

pub fn assemble_c_pb(
    p: f64,
    c_p: f64,
    c0_growth: f64,
    sup_b: f64,
    grad_b: f64,
    force_const: f64,
) -> AssembledConstants {
    let c_bar_p = p * (2.0 + (p / 2.0).ln());
    let c_bar_b = grad_b + 2.0 * sup_b;
    let c_b1 = (-1.0f64).exp() * c_bar_b;
    let c_b2 = 2.0 * force_const * grad_b;
    let c_tilde_pb = c_bar_p * c0_growth * c_b1 + c_b2;
    let c_pb = 0.5 * p * (1.0 + c_p + c_tilde_pb);
    AssembledConstants {
        c_p,
        c_bar_p,
        c0_growth,
        c_bar_b,
        c_b1,
        c_b2,
        c_tilde_pb,
        c_pb,
    }
}

#[derive(Debug, Clone)]
pub enum EnvelopeMode {
    /// find the smallest constant making the envelope hold
    Fitted,
    /// use an assembled constant
    Assembled(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityEnvelopeReport {
    pub mode: String,
    pub c_pb: f64,
    pub c0_small: f64,
    pub w0: f64,
    pub sqrt_l0: f64,
    /// admissible window length in time (capped by the trace horizon)
    pub window: f64,
    pub report: EnvelopeReport,
}

/// Evaluate the log-scale stability envelope on a twin-run trace:
/// `W_p^p(t) <= exp{ -( sqrt(L0) - C int_0^t A )^2 }` on the window where
/// `sqrt(L0) >= C int_0^t A + 1`, with
/// `L0 = |log(W0 sqrt(|log W0|)^p)|` and `W0` the initial distance.
pub fn stability_envelope(
    trace: &StabilityTrace,
    mode: EnvelopeMode,
    slack: f64,
) -> Result<StabilityEnvelopeReport> {
    if trace.is_empty() {
        return Err(Error::SeriesTooShort("empty stability trace".into()));
    }
    let p = trace.p;
    let c0 = c0_small(p);
    if trace.degenerate {
        return Ok(StabilityEnvelopeReport {
            mode: "degenerate".into(),
            c_pb: 0.0,
            c0_small: c0,
            w0: 0.0,
            sqrt_l0: f64::INFINITY,
            window: *trace.times.last().unwrap(),
            report: EnvelopeReport::failed(
                "stability-envelope",
                json!({"p": p}),
                "zero perturbation: the distance is identically zero, nothing to bound",
            ),
        });
    }
    let w0 = trace.wpp_exact[0].unwrap_or(trace.wpp_coupling[0]);
    if !(w0 > 0.0) {
        return Err(Error::Invalid("initial distance is zero".into()));
    }
    if w0 > c0 {
        return Ok(StabilityEnvelopeReport {
            mode: "no-claim".into(),
            c_pb: f64::NAN,
            c0_small: c0,
            w0,
            sqrt_l0: f64::NAN,
            window: 0.0,
            report: EnvelopeReport::failed(
                "stability-envelope",
                json!({"p": p, "w0": w0, "c0": c0}),
                "initial distance above the admissible threshold: no claim",
            ),
        });
    }
    let l0 = (w0 * (-w0.ln()).powf(0.5 * p)).ln().abs();
    let sqrt_l0 = l0.sqrt();
    let a_int = trace.a_big_integral();
    let w_meas: Vec<f64> = (0..trace.len())
        .map(|f| trace.wpp_exact[f].unwrap_or(trace.wpp_coupling[f]))
        .collect();

    let holds = |c: f64| -> bool {
        for f in 0..trace.len() {
            if sqrt_l0 < c * a_int[f] + 1.0 {
                break; // window over
            }
            let rhs = (-(sqrt_l0 - c * a_int[f]).powi(2)).exp();
            if w_meas[f] > rhs * (1.0 + slack) + ABS_FLOOR * rhs.max(1e-300) {
                return false;
            }
        }
        true
    };

    let (mode_name, c_pb) = match mode {
        EnvelopeMode::Assembled(c) => ("assembled".to_string(), c),
        EnvelopeMode::Fitted => {
            let mut lo = 0.0f64;
            let mut hi = 1.0f64;
            if holds(0.0) {
                ("fitted".to_string(), 0.0)
            } else {
                while !holds(hi) && hi < 1e6 {
                    hi *= 2.0;
                }
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if holds(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                ("fitted".to_string(), hi)
            }
        }
    };

    // window and the envelope series under the chosen constant
    let mut times = Vec::new();
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let mut window = 0.0f64;
    for f in 0..trace.len() {
        if sqrt_l0 < c_pb * a_int[f] + 1.0 {
            break;
        }
        window = trace.times[f];
        times.push(trace.times[f]);
        lhs.push(w_meas[f]);
        rhs.push((-(sqrt_l0 - c_pb * a_int[f]).powi(2)).exp());
    }
    let report = EnvelopeReport::from_series(
        "stability-envelope",
        json!({"p": p, "mode": mode_name, "c_pb": c_pb, "w0": w0, "sqrt_l0": sqrt_l0,
               "c0_small": c0, "window": window}),
        times,
        lhs,
        rhs,
        slack,
        ABS_FLOOR,
    )
    .with_note("lhs: measured transport cost (upper bound for W_p^p); rhs: log-scale envelope");
    Ok(StabilityEnvelopeReport {
        mode: mode_name,
        c_pb,
        c0_small: c0,
        w0,
        sqrt_l0,
        window,
        report,
    })
}
