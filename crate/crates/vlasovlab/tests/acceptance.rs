//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured margin. Shared run fixtures are built once.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;
use vlasovlab::config::RunConfig;
use vlasovlab::diagnostics::{moment_eulerian, moment_v};
use vlasovlab::dynamics::step_boris_in_place;
use vlasovlab::ensemble::{init_from_grid, GridInit, InitialData, PhaseEnsemble};
use vlasovlab::exponents::{exponents, rat};
use vlasovlab::inequalities::{
    base_rate_2d, check_kinetic_interpolation, check_moment_ode, envelope_2d_suite,
    envelope_3d_high_order, envelope_3d_short, envelope_eulerian, t_star, validate_smallness,
    Norms2d, SmallnessParams,
};
use vlasovlab::kernels::{kernel_b, weak_norm_gradk, KernelSpec};
use vlasovlab::report::{run_checks, CheckId};
use vlasovlab::runner::{run, RunOutput};
use vlasovlab::stability::{
    c0_small, check_loglip_field, check_nowork, lp_field_ratio_sweep, solve_dp_scalar,
    stability_envelope, twin_run, DpOutcome, EnvelopeMode, NoWorkLedger, Perturbation,
    StabilityTrace, TwinConfig,
};
use vlasovlab::transport::{pair_cost, wasserstein_p, TransportCost};
use vlasovlab::MagneticFieldSpec;

const REFERENCE_2D: &str = include_str!("../../../configs/reference_2d.json");
const SMALLDATA_3D: &str = include_str!("../../../configs/smalldata_3d.json");

fn ref2d() -> &'static RunOutput {
    static CELL: OnceLock<RunOutput> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = RunConfig::from_json(REFERENCE_2D).expect("reference config parses");
        run(&cfg).expect("reference 2D run")
    })
}

fn small3d() -> &'static RunOutput {
    static CELL: OnceLock<RunOutput> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = RunConfig::from_json(SMALLDATA_3D).expect("3D config parses");
        run(&cfg).expect("small-data 3D run")
    })
}

fn gaussian(dim: usize, amplitude: f64, cells: usize, floor: f64) -> PhaseEnsemble {
    init_from_grid(
        &GridInit {
            data: InitialData::Gaussian {
                amplitude,
                sigma_x: 1.0,
                sigma_v: 1.0,
            },
            cells_per_axis: cells,
            radius: 5.0,
            weight_floor_rel: floor,
        },
        dim,
    )
    .unwrap()
}

fn status(name: &str, pass: bool, detail: &str) {
    println!("[{}] criterion {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {name} failed: {detail}");
}

// -------------------------------------------------------------------------
// 1. Exponent arithmetic exactness (zero tolerance, < 1 s).
// -------------------------------------------------------------------------
#[test]
fn criterion_01_exponent_arithmetic() {
    let started = std::time::Instant::now();
    let t3 = exponents(3, 3).unwrap();
    assert_eq!(t3.epsilon, Some(rat(1, 1)));
    assert_eq!(t3.big_theta, Some(rat(4, 3)));
    let t4 = exponents(4, 3).unwrap();
    assert_eq!(t4.epsilon, Some(rat(1, 3)));
    assert_eq!(t4.big_theta, Some(rat(1, 1)));
    assert_eq!(t4.big_theta0, Some(rat(1, 3)));
    let t1 = exponents(1, 2).unwrap();
    assert_eq!(t1.alpha, rat(3, 2));
    assert_eq!(t1.beta, rat(6, 5));
    assert_eq!(t1.theta_n, rat(1, 3));
    for n in 1..=8 {
        assert_eq!(exponents(n, 2).unwrap().alpha_conj, Ratio::new(n + 2, 1));
        assert_eq!(exponents(n, 3).unwrap().alpha_conj, Ratio::new(n + 3, 1));
    }
    assert_eq!(kernel_b(2).unwrap(), rat(2, 1));
    assert_eq!(kernel_b(3).unwrap(), rat(3, 2));
    let elapsed = started.elapsed();
    status(
        "01 exponent arithmetic",
        elapsed.as_secs_f64() < 1.0,
        &format!("all rational identities exact in {elapsed:?}"),
    );
}

// -------------------------------------------------------------------------
// 2. Free-streaming invariance.
// -------------------------------------------------------------------------
#[test]
fn criterion_02_free_streaming() {
    let mut e = gaussian(2, 1.0, 6, 0.0); // 1296 markers
    let kernel = KernelSpec {
        coupling: 0.0,
        ..KernelSpec::coulomb_2d(1.0, 1.0)
    };
    let orders = [2.0, 4.0];
    let l0: Vec<f64> = orders.iter().map(|&n| moment_eulerian(&e, n)).collect();
    let m0: Vec<f64> = orders.iter().map(|&n| moment_v(&e, n)).collect();
    for _ in 0..100 {
        step_boris_in_place(&mut e, &kernel, &MagneticFieldSpec::Zero, 1e-2);
    }
    let mut worst_l = 0.0f64;
    for (k, &n) in orders.iter().enumerate() {
        let l = moment_eulerian(&e, n);
        worst_l = worst_l.max(((l - l0[k]) / l0[k]).abs());
        let m = moment_v(&e, n);
        assert_eq!(m, m0[k], "M_{n} must be bitwise constant under drift");
    }
    status(
        "02 free streaming",
        worst_l <= 1e-10,
        &format!("L_n drift {worst_l:.2e} (<= 1e-10), M_n bitwise constant"),
    );
}

// -------------------------------------------------------------------------
// 3. Discrete no-work under uniform and decaying magnetic fields.
// -------------------------------------------------------------------------
#[test]
fn criterion_03_discrete_no_work() {
    let mut worst = 0.0f64;
    // 2D uniform rotation
    {
        let mut e = gaussian(2, 1.0, 5, 0.0);
        let kernel = KernelSpec {
            coupling: 0.0,
            ..KernelSpec::coulomb_2d(1.0, 1.0)
        };
        let field = MagneticFieldSpec::Uniform {
            amplitude: vec![0.8],
        };
        let speeds0: Vec<f64> = (0..e.len())
            .map(|i| e.velocity(i).iter().map(|c| c * c).sum::<f64>().sqrt())
            .collect();
        for _ in 0..1000 {
            step_boris_in_place(&mut e, &kernel, &field, 1e-3);
        }
        for i in 0..e.len() {
            let s = e.velocity(i).iter().map(|c| c * c).sum::<f64>().sqrt();
            if speeds0[i] > 0.0 {
                worst = worst.max(((s - speeds0[i]) / speeds0[i]).abs());
            }
        }
    }
    // 3D decaying bump
    {
        let mut e = gaussian(3, 1.0, 5, 1e-4);
        let kernel = KernelSpec {
            coupling: 0.0,
            ..KernelSpec::yukawa_3d(1.0, 1.0, 1.0)
        };
        let field = MagneticFieldSpec::DecayingBump {
            b0: 1.0,
            a: 1.05,
            radius: 3.0,
            t0: 1.0,
        };
        let speeds0: Vec<f64> = (0..e.len())
            .map(|i| e.velocity(i).iter().map(|c| c * c).sum::<f64>().sqrt())
            .collect();
        for _ in 0..1000 {
            step_boris_in_place(&mut e, &kernel, &field, 1e-3);
        }
        for i in 0..e.len() {
            let s = e.velocity(i).iter().map(|c| c * c).sum::<f64>().sqrt();
            if speeds0[i] > 0.0 {
                worst = worst.max(((s - speeds0[i]) / speeds0[i]).abs());
            }
        }
    }
    status(
        "03 discrete no-work",
        worst <= 1e-13,
        &format!("worst relative speed drift {worst:.2e} over 1000 steps (<= 1e-13)"),
    );
}

// -------------------------------------------------------------------------
// 4. Magnetic invisibility of the velocity moments.
// -------------------------------------------------------------------------
#[test]
fn criterion_04_magnetic_invisibility() {
    let mut e = gaussian(2, 1.0, 6, 0.0);
    let kernel = KernelSpec {
        coupling: 0.0,
        ..KernelSpec::coulomb_2d(1.0, 1.0)
    };
    let field = MagneticFieldSpec::DecayingBump {
        b0: 2.0,
        a: 1.05,
        radius: 2.0,
        t0: 1.0,
    };
    let m0: Vec<f64> = (1..=4).map(|n| moment_v(&e, n as f64)).collect();
    for _ in 0..500 {
        step_boris_in_place(&mut e, &kernel, &field, 2e-3);
    }
    let mut worst = 0.0f64;
    for (k, n) in (1..=4).enumerate() {
        let m = moment_v(&e, n as f64);
        worst = worst.max(((m - m0[k]) / m0[k]).abs());
    }
    status(
        "04 magnetic invisibility",
        worst <= 1e-12,
        &format!("max relative M_n drift {worst:.2e} under a pure magnetic field (<= 1e-12)"),
    );
}

// -------------------------------------------------------------------------
// 5. Kinetic interpolation suite in both dimensions.
// -------------------------------------------------------------------------
#[test]
fn criterion_05_interpolation_suite() {
    let pairs = [(1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (3.0, 2.0)];
    let mut worst = f64::INFINITY;
    let mut count = 0;
    // 2D: snapshots of the reference run
    let out2 = ref2d();
    for f in [0, out2.snapshots.len() / 2, out2.snapshots.len() - 1] {
        for (n, k) in pairs {
            let rep = check_kinetic_interpolation(
                &out2.snapshots[f],
                out2.grid_h,
                n,
                k,
                f64::INFINITY,
                0.10,
            )
            .unwrap();
            assert!(rep.pass, "2D (n,k)=({n},{k}) frame {f}: {}", rep.summary_line());
            worst = worst.min(rep.worst_margin_rel);
            count += 1;
        }
        for r in [2.0, 4.0] {
            for n in [2.0, 3.0] {
                let rep =
                    check_kinetic_interpolation(&out2.snapshots[f], out2.grid_h, n, 0.0, r, 0.10)
                        .unwrap();
                assert!(rep.pass, "2D L^{r} variant n={n}: {}", rep.summary_line());
                worst = worst.min(rep.worst_margin_rel);
                count += 1;
            }
        }
    }
    // 3D: snapshots of the small-data run
    let out3 = small3d();
    for f in [0, out3.snapshots.len() - 1] {
        for (n, k) in pairs {
            let rep = check_kinetic_interpolation(
                &out3.snapshots[f],
                out3.grid_h,
                n,
                k,
                f64::INFINITY,
                0.10,
            )
            .unwrap();
            assert!(rep.pass, "3D (n,k)=({n},{k}) frame {f}: {}", rep.summary_line());
            worst = worst.min(rep.worst_margin_rel);
            count += 1;
        }
        for r in [2.0, 4.0] {
            let rep =
                check_kinetic_interpolation(&out3.snapshots[f], out3.grid_h, 2.0, 0.0, r, 0.10)
                    .unwrap();
            assert!(rep.pass, "3D L^{r} variant: {}", rep.summary_line());
            worst = worst.min(rep.worst_margin_rel);
            count += 1;
        }
    }
    status(
        "05 interpolation suite",
        true,
        &format!("{count} instances pass at 10% slack, worst rel margin {worst:+.3e}"),
    );
}

// -------------------------------------------------------------------------
// 6. Moment differential inequality on the attractive 2D run.
// -------------------------------------------------------------------------
#[test]
fn criterion_06_moment_ode() {
    let out = ref2d();
    assert_eq!(out.initial().len(), 4096, "reference run carries 4096 markers");
    let mut worst = f64::INFINITY;
    for n in 1..=4u32 {
        let rep = check_moment_ode(&out.series, &out.snapshots, n, &out.kernel, 0.10).unwrap();
        assert!(rep.pass, "order {n}: {}", rep.summary_line());
        worst = worst.min(rep.worst_margin_rel);
    }
    status(
        "06 moment ODE",
        true,
        &format!("orders 1..4 pass at all interior frames, worst rel margin {worst:+.3e}"),
    );
}

// -------------------------------------------------------------------------
// 7. 2D envelopes: closed-form base case and recursive orders.
// -------------------------------------------------------------------------
#[test]
fn criterion_07_envelope_2d() {
    let out = ref2d();
    let norms = Norms2d {
        sup_f: out.series.sup_f[0],
        l1_f: out.series.mass[0],
        weak_norm: weak_norm_gradk(&out.kernel, 2.0).unwrap(),
    };
    // the base envelope at t = 1 is exactly M1(0) exp(rate)
    let reports = envelope_2d_suite(&out.series, 3, &norms, 0.10).unwrap();
    for rep in &reports {
        assert!(rep.pass, "{}", rep.summary_line());
    }
    let i1 = out.series.order_index(1).unwrap();
    let phi1_at_1 = *reports[0].rhs.last().unwrap();
    let expected = out.series.moments_v[i1][0] * base_rate_2d(&norms).exp();
    let agree = ((phi1_at_1 - expected) / expected).abs();
    status(
        "07 2D envelope",
        agree < 1e-12,
        &format!(
            "Phi_1(1) matches the exponential formula to {agree:.2e}; orders 2, 3 recursive envelopes hold"
        ),
    );
}

// -------------------------------------------------------------------------
// 8. 3D short-time moment bounds on [0, T*].
// -------------------------------------------------------------------------
#[test]
fn criterion_08_short_time_3d() {
    let out = small3d();
    let rep = envelope_3d_short(&out.series, 0.10).unwrap();
    // cross-check T* against the explicit formula
    let i3 = out.series.order_index(3).unwrap();
    let i4 = out.series.order_index(4).unwrap();
    let expect = t_star(
        out.series.sup_f[0],
        out.series.moments_v[i3][0],
        out.series.moments_v[i4][0],
    )
    .unwrap();
    assert!((rep.t_star - expect).abs() < 1e-12 * expect);
    status(
        "08 3D short time",
        rep.pass,
        &format!(
            "T* = {:.4}; M3 <= 8 M3(0), M4 <= 128 M4(0), position bounds hold (Mbar = [{:.4}, {:.4}])",
            rep.t_star, rep.m_bar[0], rep.m_bar[1]
        ),
    );
}

// -------------------------------------------------------------------------
// 9. Long-time Eulerian bound on [T*, 5 T*] for feasible data.
// -------------------------------------------------------------------------
#[test]
fn criterion_09_eulerian_envelope() {
    let out = small3d();
    let checks = run_checks(out, &[CheckId::Smallness, CheckId::Eulerian]).unwrap();
    let small = &checks.outcomes[0];
    assert!(small.pass, "smallness gate must pass: {}", small.summary);
    let euler = &checks.outcomes[1];
    // coverage: the run extends to 5 T*
    let t_star = small.detail["t_star"].as_f64().unwrap();
    let t_end = *out.series.times.last().unwrap();
    assert!(
        t_end >= 5.0 * t_star,
        "horizon {t_end} must cover 5 T* = {}",
        5.0 * t_star
    );
    status(
        "09 eulerian envelope",
        euler.pass,
        &format!("{} on [T*, 5T*] (T* = {t_star:.4})", euler.summary),
    );
}

// -------------------------------------------------------------------------
// 10. Exact transport vs brute-force assignment enumeration.
// -------------------------------------------------------------------------

fn heap_permutations(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        heap_permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

/// Independent oracle: enumerate all assignments of equal-weight clouds.
fn brute_force_wpp(e1: &PhaseEnsemble, e2: &PhaseEnsemble, p: f64) -> f64 {
    let n = e1.len();
    let w = e1.weight(0);
    let cost = pair_cost(e1, e2, p, TransportCost::PhaseSplit);
    let mut best = f64::INFINITY;
    let mut perm: Vec<usize> = (0..n).collect();
    heap_permutations(&mut perm, 0, &mut |pm| {
        let c: f64 = pm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
        if c < best {
            best = c;
        }
    });
    best * w
}

#[test]
fn criterion_10_transport_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let n = rng.gen_range(2..=6);
        let w = vec![1.0 / n as f64; n];
        let cloud = |rng: &mut ChaCha8Rng| {
            let mut pos = Vec::new();
            let mut vel = Vec::new();
            for _ in 0..n {
                pos.push(rng.gen_range(-1.0..1.0));
                pos.push(rng.gen_range(-1.0..1.0));
                vel.push(rng.gen_range(-1.0..1.0));
                vel.push(rng.gen_range(-1.0..1.0));
            }
            PhaseEnsemble::new(2, 0.0, pos, vel, w.clone(), vec![1.0; n]).unwrap()
        };
        let e1 = cloud(&mut rng);
        let e2 = cloud(&mut rng);
        for p in [1.0, 2.0] {
            let oracle = brute_force_wpp(&e1, &e2, p);
            let solved = wasserstein_p(&e1, &e2, p, TransportCost::PhaseSplit, 1 << 20)
                .unwrap()
                .wpp;
            let err = (solved - oracle).abs() / (1.0 + oracle);
            worst = worst.max(err);
            assert!(
                err <= 1e-12,
                "trial {trial}, p = {p}: solver {solved} vs oracle {oracle}"
            );
        }
    }
    status(
        "10 transport oracle",
        true,
        &format!("100 random instances, p in {{1, 2}}, worst rel deviation {worst:.2e}"),
    );
}

// -------------------------------------------------------------------------
// 11. Transport-functional fixed point and domination of the distance.
// -------------------------------------------------------------------------
#[test]
fn criterion_11_dp_fixed_point() {
    // residual certificates across random inputs
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_res = 0.0f64;
    for _ in 0..200 {
        let sx = 10f64.powf(rng.gen_range(-9.0..-1.5));
        let sv = 10f64.powf(rng.gen_range(-9.0..-1.5));
        if sx + sv > 1.0 / std::f64::consts::E {
            continue;
        }
        if let DpOutcome::Fixed { d_p, lambda } = solve_dp_scalar(sx, sv, 2.0) {
            let res = (d_p - (sx * (-d_p.ln()) + sv)).abs();
            worst_res = worst_res.max(res / d_p);
            assert!(res <= 1e-10 * d_p, "residual {res} at D = {d_p}");
            assert!((lambda - (-d_p.ln())).abs() <= 1e-12 * lambda);
        } else {
            panic!("expected a fixed point");
        }
    }
    // degenerate closed forms
    match solve_dp_scalar(0.0, 3e-4, 2.0) {
        DpOutcome::Fixed { d_p, .. } => assert_eq!(d_p, 3e-4),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(solve_dp_scalar(0.0, 0.0, 2.0), DpOutcome::Degenerate);
    assert!(matches!(
        solve_dp_scalar(0.5, 0.6, 2.0),
        DpOutcome::RegimeExit { .. }
    ));

    // W_p^p <= D_p on every frame of a twin run with exact transport
    let base = gaussian(2, 1.0 / (2.0 * std::f64::consts::PI).powi(2), 4, 0.0);
    let kernel = KernelSpec::coulomb_2d(1.0, 1.0).with_softening(0.6);
    let cfg = TwinConfig {
        p: 2.0,
        dt: 0.02,
        steps: 50,
        output_every: 5,
        grid_h: 1.3,
        exact_ot_every: Some(1),
        ot_pair_cap: 1 << 22,
    };
    let out = twin_run(
        &base,
        &Perturbation::Shift {
            dx: vec![0.0, 0.0],
            dv: vec![1e-3, 0.0],
        },
        &kernel,
        &MagneticFieldSpec::Zero,
        &cfg,
    )
    .unwrap();
    assert!(out.trace.len() > 5);
    for f in 0..out.trace.len() {
        let w_exact = out.trace.wpp_exact[f].expect("exact transport on every frame");
        assert!(
            w_exact <= out.trace.d_p[f] * (1.0 + 1e-12),
            "frame {f}: W_p^p = {w_exact} above D_p = {}",
            out.trace.d_p[f]
        );
        assert!(out.trace.wpp_coupling[f] <= out.trace.d_p[f] * (1.0 + 1e-12));
    }
    status(
        "11 D_p fixed point",
        true,
        &format!(
            "worst residual {worst_res:.2e} (<= 1e-10), W_p^p <= D_p on all {} frames",
            out.trace.len()
        ),
    );
}

// -------------------------------------------------------------------------
// 12. Stability envelope and the admissible-window trend in delta.
// -------------------------------------------------------------------------

fn stability_twin(dv: f64) -> StabilityTrace {
    // unit-mass 2D Gaussian so the transport functional matches the
    // unit-mass convention
    let base = gaussian(2, 1.0 / (2.0 * std::f64::consts::PI).powi(2), 7, 0.0);
    let kernel = KernelSpec::coulomb_2d(1.0, 1.0).with_softening(0.3);
    let cfg = TwinConfig {
        p: 2.0,
        dt: 0.01,
        steps: 100,
        output_every: 10,
        grid_h: 1.0,
        exact_ot_every: None,
        ot_pair_cap: 1 << 22,
    };
    twin_run(
        &base,
        &Perturbation::Shift {
            dx: vec![0.0, 0.0],
            dv: vec![dv, 0.0],
        },
        &kernel,
        &MagneticFieldSpec::Zero,
        &cfg,
    )
    .unwrap()
    .trace
}

#[test]
fn criterion_12_stability_envelope() {
    let trace_big = stability_twin(1e-3);
    let trace_small = stability_twin(1e-4);

    let fit_big = stability_envelope(&trace_big, EnvelopeMode::Fitted, 0.10).unwrap();
    let fit_small = stability_envelope(&trace_small, EnvelopeMode::Fitted, 0.10).unwrap();
    assert!(fit_big.report.pass, "{}", fit_big.report.summary_line());
    assert!(fit_small.report.pass, "{}", fit_small.report.summary_line());

    // window trend under a common constant, large enough that the window
    // closes inside the horizon and the comparison is not capped
    let c_common = fit_big.c_pb.max(fit_small.c_pb).max(3.0);
    let win_big = stability_envelope(&trace_big, EnvelopeMode::Assembled(c_common), 0.10)
        .unwrap()
        .window;
    let win_small = stability_envelope(&trace_small, EnvelopeMode::Assembled(c_common), 0.10)
        .unwrap()
        .window;
    status(
        "12 stability envelope",
        win_small >= win_big,
        &format!(
            "fitted C = {:.3e}/{:.3e}; windows at common C = {c_common:.2}: {win_big:.3} (dv=1e-3) <= {win_small:.3} (dv=1e-4)",
            fit_big.c_pb, fit_small.c_pb
        ),
    );
}

// -------------------------------------------------------------------------
// 13. Field regularity: log-Lipschitz modulus and the difference bound.
// -------------------------------------------------------------------------
#[test]
fn criterion_13_field_regularity() {
    let out = ref2d();
    let snapshot = &out.snapshots[out.snapshots.len() / 2];
    let loglip = check_loglip_field(snapshot, &out.kernel, out.grid_h, 99, 0.10).unwrap();
    assert!(loglip.pass, "{}", loglip.summary_line());

    let sweep = lp_field_ratio_sweep(
        out.initial(),
        &out.kernel,
        out.grid_h,
        2.0,
        &[1e-2, 5e-3, 2.5e-3],
        0.0,
    )
    .unwrap();
    status(
        "13 field regularity",
        sweep.pass,
        &format!(
            "log-Lipschitz sup stable over [1e-6, 1e-1]; difference-bound ratios within 2x ({})",
            sweep
                .params
                .get("ratios")
                .map(|r| r.to_string())
                .unwrap_or_default()
        ),
    );
}

// -------------------------------------------------------------------------
// 14. Bit-identical deterministic reruns.
// -------------------------------------------------------------------------
#[test]
fn criterion_14_determinism() {
    let cfg = RunConfig::from_json(REFERENCE_2D).unwrap();
    let mut fast = cfg.clone();
    fast.horizon = 0.2; // a rerun shard is enough to exercise every code path
    let a = run(&fast).unwrap();
    let b = run(&fast).unwrap();
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    a.series.write_csv(&mut csv_a, &a.config_hash).unwrap();
    b.series.write_csv(&mut csv_b, &b.config_hash).unwrap();
    status(
        "14 determinism",
        csv_a == csv_b,
        &format!("two runs produced identical CSV bytes ({} bytes)", csv_a.len()),
    );
}

// -------------------------------------------------------------------------
// Companion properties exercised alongside the numbered criteria.
// -------------------------------------------------------------------------

#[test]
fn high_order_envelope_on_the_3d_run() {
    let out = small3d();
    let weak = weak_norm_gradk(&out.kernel, 1.5).unwrap();
    let rep = envelope_3d_high_order(&out.series, &out.snapshots, 5, weak, 0.10).unwrap();
    assert!(rep.pass, "{}", rep.summary_line());
}

#[test]
fn smallness_binding_constraint_is_reported() {
    let out = small3d();
    let i4 = out.series.order_index(4).unwrap();
    let params = SmallnessParams {
        eulerian: vlasovlab::inequalities::EulerianParams {
            c: out.config.verify.c,
            kernel_norm_c: vlasovlab::kernels::strong_norm_gradk(
                &out.kernel,
                out.config.verify.c,
            )
            .unwrap(),
            b0: out.config.field.decay_claim().unwrap().0,
            sup_f: out.series.sup_f[0],
            l1_f: out.series.mass[0],
            m3_0: out.series.moments_v[out.series.order_index(3).unwrap()][0],
            m4_0: out.series.moments_v[i4][0],
        },
        n4_0: out.series.moments_x[i4][0],
    };
    let rep = validate_smallness(&params).unwrap();
    assert!(rep.pass);
    assert!(["ineq1", "ineq2", "ineq3"].contains(&rep.binding));
}

#[test]
fn eulerian_checked_against_library_entry_point() {
    let out = small3d();
    let params = vlasovlab::inequalities::EulerianParams {
        c: out.config.verify.c,
        kernel_norm_c: vlasovlab::kernels::strong_norm_gradk(&out.kernel, out.config.verify.c)
            .unwrap(),
        b0: out.config.field.decay_claim().unwrap().0,
        sup_f: out.series.sup_f[0],
        l1_f: out.series.mass[0],
        m3_0: out.series.moments_v[out.series.order_index(3).unwrap()][0],
        m4_0: out.series.moments_v[out.series.order_index(4).unwrap()][0],
    };
    let rep = envelope_eulerian(&out.series, &params, 0.10).unwrap();
    assert!(rep.pass, "{}", rep.summary_line());
}

#[test]
fn twin_combined_shift_cost_is_additive() {
    let base = gaussian(2, 1.0 / (2.0 * std::f64::consts::PI).powi(2), 5, 0.0);
    let kernel = KernelSpec {
        coupling: 0.0,
        ..KernelSpec::coulomb_2d(1.0, 1.0)
    };
    let cfg = TwinConfig {
        p: 2.0,
        dt: 0.05,
        steps: 2,
        output_every: 1,
        grid_h: 1.3,
        exact_ot_every: None,
        ot_pair_cap: 1 << 22,
    };
    let (dx, dv) = (2e-3, 1e-3);
    let out = twin_run(
        &base,
        &Perturbation::Shift {
            dx: vec![dx, 0.0],
            dv: vec![dv, 0.0],
        },
        &kernel,
        &MagneticFieldSpec::Zero,
        &cfg,
    )
    .unwrap();
    let expected = dx * dx + dv * dv;
    assert!((out.trace.wpp_coupling[0] - expected).abs() < 1e-15);
}

#[test]
fn pure_magnetic_twin_keeps_translation_distance() {
    // with no interaction and a Lipschitz field, a velocity shift stays a
    // near-translation and the envelope holds over the whole window
    let base = gaussian(2, 1.0 / (2.0 * std::f64::consts::PI).powi(2), 5, 0.0);
    let kernel = KernelSpec {
        coupling: 0.0,
        ..KernelSpec::coulomb_2d(1.0, 1.0)
    };
    let field = MagneticFieldSpec::Uniform {
        amplitude: vec![0.4],
    };
    let cfg = TwinConfig {
        p: 2.0,
        dt: 0.01,
        steps: 100,
        output_every: 10,
        grid_h: 1.3,
        exact_ot_every: None,
        ot_pair_cap: 1 << 22,
    };
    let out = twin_run(
        &base,
        &Perturbation::Shift {
            dx: vec![0.0, 0.0],
            dv: vec![1e-3, 0.0],
        },
        &kernel,
        &field,
        &cfg,
    )
    .unwrap();
    let env = stability_envelope(&out.trace, EnvelopeMode::Fitted, 0.10).unwrap();
    assert!(env.report.pass);
    // uniform rotation is an isometry in v: the transported cost is constant
    let w0 = out.trace.wpp_coupling[0];
    for f in 0..out.trace.len() {
        assert!((out.trace.s_v[f] - w0).abs() < 1e-12 * w0);
    }
}

#[test]
fn nowork_ledger_certifies_driven_run() {
    let out = ref2d();
    let rep = check_nowork(&out.nowork, out.snapshots.last().unwrap(), 0.0);
    assert!(rep.pass, "{}", rep.summary_line());
    let _ = NoWorkLedger::new(out.initial());
    let _ = c0_small(2.0);
}
