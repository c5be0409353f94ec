//! End-to-end acceptance suite. Each test exercises one headline guarantee
//! at its full documented budget and prints a single PASS/FAIL line.

use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use delay_hjb::calculus::{
    horizontal_fd_richardson, ito_residual, vertical_grad_fd_richardson,
    vertical_hess_fd_richardson, FunctionalWithDerivatives,
};
use delay_hjb::fixtures::{
    lq_value, lq_value_functional, riccati_a, BrownianMotion, ExpMemoryLinear, NoDelayLq,
    OrnsteinUhlenbeck,
};
use delay_hjb::gauge::{
    counterexample_pair, doubling_slack, gauge_property_slack, sandwich_slack, upsilon_bar,
    AnchoredGauge, GaugeSpec,
};
use delay_hjb::hjb::{residual_sweep, stability_experiment};
use delay_hjb::path::{norm1_distance, HistoryPath, HistoryView, TimedPath};
use delay_hjb::sampling::{sample_paths, sample_timed_paths};
use delay_hjb::sde::{
    coupled_sup_distance_sq, euler_simulate, mean_se, moment_estimates, Dynamics, SimConfig,
};
use delay_hjb::value::{
    dpp_residual, feedback_family, lipschitz_check_v, open_loop_family, shift_modulus_check,
    value_v, ControlLaw, ControlProblem, InnerValue,
};
use delay_hjb::variational::{borwein_preiss, geometric_deltas, verify_conclusions, SearchDomain};

fn conclude(n: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {} ({}): {}",
        n,
        name,
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "ACCEPTANCE {} ({}) failed: {}", n, name, detail);
}

fn flat_start(z: f64) -> HistoryPath {
    HistoryPath::continuous(vec![-1.0, -0.5, 0.0], vec![vec![0.0], vec![z], vec![z]]).unwrap()
}

fn action_grid(n: usize, half_width: f64) -> Vec<f64> {
    (0..n)
        .map(|k| -half_width + 2.0 * half_width * k as f64 / (n - 1) as f64)
        .collect()
}

fn lq_problem(actions: usize) -> ControlProblem {
    ControlProblem::new(
        Arc::new(NoDelayLq { sigma0: 1.0 }),
        3.0,
        action_grid(actions, 1.0),
        vec![],
    )
    .unwrap()
}

fn lq_gain_family() -> Vec<ControlLaw> {
    let gains: Vec<f64> = (0..9).map(|k| 0.1 + 0.05 * k as f64).collect();
    feedback_family(&gains, 5.0)
}

// -------------------------------------------------------------------------

#[test]
fn criterion_1_gauge_inequalities() {
    let start = Instant::now();
    let samples = 10_000usize;
    let xs = sample_paths(7, samples, 1);
    let ys = sample_paths(7 ^ 0xABCD, samples, 1);
    let mut violations = 0usize;
    for m in [1u32, 2, 3] {
        for big_m in [3.0, 5.0] {
            let spec = GaugeSpec::new(m, big_m).unwrap();
            for i in 0..samples {
                let (lo, hi) = sandwich_slack(&spec, &xs[i]);
                let dbl = doubling_slack(&spec, &xs[i], &ys[i]);
                if lo < -1e-12 || hi < -1e-12 || dbl < -1e-12 {
                    violations += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = violations == 0 && elapsed < 10.0;
    conclude(
        1,
        "gauge inequalities",
        pass,
        &format!("{} violations, {:.2}s", violations, elapsed),
    );
}

#[test]
fn criterion_2_derivative_formulas() {
    let probes = sample_timed_paths(7, 1000, 2, 1.0);
    let kink_margin = 0.03;
    let mut unfiltered = 0usize;
    let mut unfiltered_fail = 0usize;
    let mut filtered = 0usize;
    for m in [1u32, 2, 3] {
        let g = AnchoredGauge::at_zero(GaugeSpec::new(m, 3.0).unwrap(), 2, true);
        let f = g.functional();
        for p in &probes {
            if g.kink_distance(p.time, &p.path) < kink_margin {
                filtered += 1;
                continue;
            }
            let mut check = |analytic: f64, fd: f64| {
                unfiltered += 1;
                let abs = (analytic - fd).abs();
                let rel = abs / analytic.abs().max(1e-30);
                if abs > 1e-7 && rel > 1e-5 {
                    unfiltered_fail += 1;
                }
            };
            check(g.dt(p.time, &p.path), horizontal_fd_richardson(&f.eval, p, 1e-3));
            let grad = g.grad(p.time, &p.path);
            let grad_fd = vertical_grad_fd_richardson(&f.eval, p, 1e-3);
            for i in 0..2 {
                check(grad[i], grad_fd[i]);
            }
            let hess = g.hess(p.time, &p.path);
            let hess_fd = vertical_hess_fd_richardson(&f.eval, p, 5e-3);
            for i in 0..2 {
                for j in i..2 {
                    check(hess[i][j], hess_fd[i][j]);
                }
            }
        }
    }
    let frac = 1.0 - unfiltered_fail as f64 / unfiltered.max(1) as f64;
    let pass = frac >= 0.99 && unfiltered_fail == 0;
    conclude(
        2,
        "derivative formulas",
        pass,
        &format!(
            "{} unfiltered ({} failures), {} kink-filtered, pass fraction {:.4}",
            unfiltered, unfiltered_fail, filtered, frac
        ),
    );
}

#[test]
fn criterion_3_counterexample_and_gauge_property() {
    let spec = GaugeSpec::sextic();
    let mut ce_viol = 0usize;
    for n in 1..=1000u32 {
        let (p, q) = counterexample_pair(n);
        let ub = upsilon_bar(&spec, &p, &q);
        let n1 = norm1_distance(&p, &q);
        if !(ub <= 1.0 / n as f64 + 1e-12 && n1 >= 1.0 - 1e-12) {
            ce_viol += 1;
        }
    }
    let ps = sample_timed_paths(11, 10_000, 1, 1.0);
    let qs = sample_timed_paths(13, 10_000, 1, 1.0);
    let mut gp_viol = 0usize;
    for (a, b) in ps.iter().zip(&qs) {
        let (p, q) = if a.time <= b.time { (a, b) } else { (b, a) };
        let delta = upsilon_bar(&spec, p, q).max(1e-300);
        if let Some(s) = gauge_property_slack(&spec, p, q, delta) {
            if s < -1e-12 {
                gp_viol += 1;
            }
        }
    }
    let pass = ce_viol == 0 && gp_viol == 0;
    conclude(
        3,
        "counterexample and gauge property",
        pass,
        &format!("{} counterexample, {} gauge-property violations", ce_viol, gp_viol),
    );
}

fn endpoint_sq_functional() -> FunctionalWithDerivatives {
    FunctionalWithDerivatives {
        eval: Box::new(|_t, x: &dyn HistoryView| x.endpoint().iter().map(|a| a * a).sum()),
        dt: Some(Box::new(|_t, _x| 0.0)),
        dx: Some(Box::new(|_t, x| {
            x.endpoint().iter().map(|a| 2.0 * a).collect()
        })),
        dxx: Some(Box::new(|_t, _x| vec![vec![2.0]])),
    }
}

#[test]
fn criterion_4_ito_residuals() {
    let dynamics: Vec<(&str, Arc<dyn Dynamics>)> = vec![
        ("bm", Arc::new(BrownianMotion)),
        ("ou", Arc::new(OrnsteinUhlenbeck)),
    ];
    let functionals: Vec<(&str, FunctionalWithDerivatives)> = vec![
        ("endpoint_sq", endpoint_sq_functional()),
        (
            "upsilon13_zero",
            AnchoredGauge::at_zero(GaugeSpec::new(1, 3.0).unwrap(), 1, false).functional(),
        ),
    ];
    let xi = flat_start(0.5);
    let mut all_pass = true;
    let mut detail = String::new();
    for (dname, dyn_) in &dynamics {
        for (fname, f) in &functionals {
            let mut mean_abs_levels = Vec::new();
            let mut centered = true;
            for dt in [1e-3, 1e-3 / 4.0] {
                let cfg = SimConfig::new(0.5, dt, 10_000, 7);
                let residuals: Vec<f64> = (0..cfg.paths as u64)
                    .into_par_iter()
                    .map(|pid| {
                        let control = |_t: f64, _v: &dyn HistoryView| 0.0;
                        let traj =
                            euler_simulate(dyn_.as_ref(), &xi, &control, &cfg, pid, true).unwrap();
                        ito_residual(f, &traj).unwrap()
                    })
                    .collect();
                let (mean, se) = mean_se(&residuals);
                centered &= mean.abs() <= 3.0 * se;
                let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
                mean_abs_levels.push(mean_se(&abs).0);
            }
            let ratio = mean_abs_levels[0] / mean_abs_levels[1].max(1e-300);
            let ok = centered && ratio >= 1.6;
            all_pass &= ok;
            detail.push_str(&format!(
                "{}x{}: centered={} decay={:.2}; ",
                dname, fname, centered, ratio
            ));
        }
    }
    conclude(4, "functional Ito residuals", all_pass, &detail);
}

#[test]
fn criterion_5_moment_estimate_stability() {
    let xi = flat_start(1.0);
    let control = |_t: f64, _v: &dyn HistoryView| 0.0;
    let mut c_hats = Vec::new();
    let mut c0_hats = Vec::new();
    let mut couplings = Vec::new();
    let eta = flat_start(-0.5);
    let dist = delay_hjb::path::diff_norms(&xi, &eta).c;
    for dt in [1e-2, 1e-3] {
        let cfg = SimConfig::new(2.0, dt, 3000, 7);
        let rep = moment_estimates(&OrnsteinUhlenbeck, &xi, &control, -4.0, &cfg, 16).unwrap();
        c_hats.push(rep.c_hat);
        c0_hats.push(rep.c0_hat);
        let (mean_sq, _) =
            coupled_sup_distance_sq(&OrnsteinUhlenbeck, &xi, &eta, &control, &cfg).unwrap();
        couplings.push(mean_sq / (dist * dist));
    }
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    let dc = rel(c_hats[0], c_hats[1]);
    let dc0 = rel(c0_hats[0], c0_hats[1]);
    let dcp = rel(couplings[0], couplings[1]);
    let finite = c_hats.iter().chain(&c0_hats).chain(&couplings).all(|v| v.is_finite());
    let pass = finite && dc < 0.25 && dc0 < 0.25 && dcp < 0.25;
    conclude(
        5,
        "moment estimate stability",
        pass,
        &format!(
            "c_hat {:?} ({:.1}%), c0_hat {:?} ({:.1}%), coupling {:?} ({:.1}%)",
            c_hats,
            100.0 * dc,
            c0_hats,
            100.0 * dc0,
            couplings,
            100.0 * dcp
        ),
    );
}

#[test]
fn criterion_6_lq_oracle() {
    // closed form at lambda = 3, sigma = 1, z = 1
    let a = riccati_a(3.0);
    let oracle = lq_value(1.0, 3.0, 1.0);
    assert!((a - 0.302775637731995).abs() < 1e-12);
    assert!((oracle - 0.403700850309327).abs() < 1e-12);

    let problem = lq_problem(9);
    let x = flat_start(1.0);
    let cfg = SimConfig::new(3.0, 1e-3, 100_000, 7);
    let family = lq_gain_family();
    let (est, _) = value_v(&x, &problem, &cfg, &family, true).unwrap();
    let gap = est.value - oracle;
    let upper = (3.0 * est.std_error).max(0.02 * oracle);
    let mc_ok = gap >= -3.0 * est.std_error - est.tail_bound && gap <= upper + est.tail_bound;

    // classical residual of the embedded closed form at 100 probes; the
    // floor is the action-grid spacing effect ((delta_u / 2)^2 = 6.25e-4)
    let fine = lq_problem(41);
    let phi = lq_value_functional(3.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let probes: Vec<TimedPath> = (0..100)
        .map(|_| {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let t: f64 = rng.gen_range(0.0..1.0);
            TimedPath::new(t, flat_start(z))
        })
        .collect();
    let rows = residual_sweep(&phi, &probes, &fine).unwrap();
    let max_res = rows.iter().map(|r| r.residual.abs()).fold(0.0f64, f64::max);
    let res_ok = max_res <= 1e-3;

    conclude(
        6,
        "LQ oracle",
        mc_ok && res_ok,
        &format!(
            "estimate {:.6} vs oracle {:.6} (gap {:+.5}, 3se {:.5}, tail {:.1e}); max residual {:.2e}",
            est.value, oracle, gap, 3.0 * est.std_error, est.tail_bound, max_res
        ),
    );
}

#[test]
fn criterion_7_dpp() {
    // exact inner value on the memoryless quadratic fixture
    let problem = lq_problem(9);
    let lambda = problem.lambda;
    let x = flat_start(1.0);
    let v_exact = lq_value(1.0, lambda, 1.0);
    let mut outer = lq_gain_family();
    outer.push(ControlLaw::Feedback {
        gain: riccati_a(lambda),
        clamp: 5.0,
    });
    let inner = InnerValue::Exact(&move |h: &HistoryPath| lq_value(h.endpoint()[0], lambda, 1.0));
    let cfg = SimConfig::new(3.0, 1e-3, 4000, 7);
    let mut lq_ok = true;
    let mut detail = String::new();
    for t in [0.1, 0.5] {
        let rep = dpp_residual(&x, t, &problem, &cfg, &outer, (v_exact, 0.0), &inner).unwrap();
        let ok = rep.residual.abs() <= 3.0 * rep.std_error;
        lq_ok &= ok;
        detail.push_str(&format!(
            "lq t={}: res {:+.5} (3se {:.5}); ",
            t,
            rep.residual,
            3.0 * rep.std_error
        ));
    }

    // estimated inner values on the delayed fixture: brute force over the
    // 2-switch, 3-action open-loop grid (27 laws). Documented budget:
    // 3 propagated std errors plus 0.05 for Euler and inner-family bias.
    let switch_times = vec![0.5, 1.0];
    let em = ControlProblem::new(
        Arc::new(ExpMemoryLinear {
            sigma0: 1.0,
            kappa: 0.5,
        }),
        3.0,
        vec![-1.0, 0.0, 1.0],
        switch_times.clone(),
    )
    .unwrap();
    let family = open_loop_family(&em.control_set, &switch_times);
    assert_eq!(family.len(), 27);
    let xm = flat_start(0.5);
    let cfg_em = SimConfig::new(2.0, 0.02, 96, 7);
    let (vx, _) = value_v(&xm, &em, &cfg_em, &family, false).unwrap();
    let outer_em: Vec<ControlLaw> = em.control_set.iter().map(|&u| ControlLaw::Constant(u)).collect();
    let inner_em = InnerValue::Estimated {
        family: &family,
        cfg: SimConfig::new(2.0, 0.02, 32, 7 ^ 0x99),
    };
    let rep = dpp_residual(
        &xm,
        0.5,
        &em,
        &cfg_em,
        &outer_em,
        (vx.value, vx.std_error),
        &inner_em,
    )
    .unwrap();
    let budget = 3.0 * rep.std_error + 0.05;
    let em_ok = rep.residual.abs() <= budget;
    detail.push_str(&format!(
        "exp-memory t=0.5: res {:+.5} (budget {:.5})",
        rep.residual, budget
    ));
    conclude(7, "dynamic programming principle", lq_ok && em_ok, &detail);
}

#[test]
fn criterion_8_value_regularity_shapes() {
    let fixtures: Vec<(&str, ControlProblem, Vec<ControlLaw>)> = vec![
        ("lq", lq_problem(5), lq_gain_family()[..5].to_vec()),
        (
            "exp-memory",
            ControlProblem::new(
                Arc::new(ExpMemoryLinear {
                    sigma0: 1.0,
                    kappa: 0.5,
                }),
                3.0,
                vec![-1.0, 0.0, 1.0],
                vec![],
            )
            .unwrap(),
            vec![
                ControlLaw::Constant(-1.0),
                ControlLaw::Constant(0.0),
                ControlLaw::Constant(1.0),
            ],
        ),
    ];
    let mut pass = true;
    let mut detail = String::new();
    for (name, problem, family) in &fixtures {
        // Lipschitz ratio across refinement
        let xs = sample_paths(21, 4, 1);
        let ys = sample_paths(22, 4, 1);
        let pairs: Vec<(HistoryPath, HistoryPath)> = xs.into_iter().zip(ys).collect();
        let coarse = SimConfig::new(2.0, 0.02, 300, 7);
        let fine = SimConfig::new(2.0, 0.01, 600, 7);
        let (_, r_coarse) = lipschitz_check_v(problem, &coarse, family, &pairs).unwrap();
        let (_, r_fine) = lipschitz_check_v(problem, &fine, family, &pairs).unwrap();
        let lip_ok = r_coarse > 0.0 && r_fine > 0.0 && r_coarse / r_fine <= 2.0
            && r_fine / r_coarse <= 2.0;
        pass &= lip_ok;
        detail.push_str(&format!("{} lip {:.3}/{:.3}; ", name, r_coarse, r_fine));

        // shift-modulus constant across refinement, per delta
        let x = flat_start(1.0);
        let deltas = [0.01, 0.1, 0.5];
        let rows_c = shift_modulus_check(problem, &coarse, family, &x, &deltas).unwrap();
        let rows_f = shift_modulus_check(problem, &fine, family, &x, &deltas).unwrap();
        for (rc, rf) in rows_c.iter().zip(&rows_f) {
            let (a, b) = (rc.c_prime, rf.c_prime);
            // memoryless dynamics are shift-invariant: both constants sit at
            // zero, which counts as stable
            let ok = (a < 1e-9 && b < 1e-9) || (a / b <= 2.0 && b / a <= 2.0);
            pass &= ok;
            detail.push_str(&format!("{} d={} C' {:.2e}/{:.2e}; ", name, rc.delta, a, b));
        }
    }
    conclude(8, "value regularity shapes", pass, &detail);
}

#[test]
fn criterion_9_borwein_preiss_exhaustive() {
    let spec = GaugeSpec::sextic();
    let zero = TimedPath::new(0.0, HistoryPath::zero(1, 4.0));
    let mut failures = Vec::new();
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let size = 50 + (rng.gen_range(0..6) as usize) * 150 + rng.gen_range(0..50) as usize;
        assert!(size <= 10_000);
        let domain =
            SearchDomain::new(sample_timed_paths(2000 + trial, size, 1, 1.0)).unwrap();
        let f = |p: &TimedPath| -upsilon_bar(&spec, &zero, p);
        let rho = |a: &TimedPath, b: &TimedPath| {
            let (p, q) = if a.time <= b.time { (a, b) } else { (b, a) };
            upsilon_bar(&spec, p, q)
        };
        let epsilon: f64 = rng.gen_range(0.05..0.5);
        let delta0: f64 = rng.gen_range(0.5..2.0);
        // start at the exact maximizer or, half the time, at any point that
        // is still epsilon-maximal
        let values: Vec<f64> = domain.candidates.iter().map(|p| f(p)).collect();
        let sup = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let argmax = values
            .iter()
            .position(|&v| v == sup)
            .unwrap();
        let start = if trial % 2 == 0 {
            argmax
        } else {
            values
                .iter()
                .position(|&v| v >= sup - epsilon)
                .unwrap_or(argmax)
        };
        let deltas = geometric_deltas(delta0, 24);
        let result = borwein_preiss(&f, &rho, &deltas, epsilon, start, &domain, 24).unwrap();
        if let Err(e) = verify_conclusions(&f, &rho, epsilon, &result, &domain) {
            failures.push(format!("trial {}: {}", trial, e));
        }
    }
    conclude(
        9,
        "perturbed maximization conclusions",
        failures.is_empty(),
        &failures.join("; "),
    );
}

#[test]
fn criterion_10_stability_ladder() {
    let problem = lq_problem(5);
    let family = lq_gain_family();
    let x = flat_start(1.0);
    let cfg = SimConfig::new(3.0, 0.005, 600, 7);
    let probes = sample_paths(31, 8, 1);
    let eps = [0.2, 0.1, 0.05];

    let q_rep =
        stability_experiment(&problem, &x, &cfg, &family, &eps, false, true, &probes).unwrap();
    let mut q_ok = true;
    let mut detail = String::new();
    for row in &q_rep.rows {
        let want = row.eps / problem.lambda;
        let tol = 3.0 * (row.value_se + q_rep.base_se)
            + row.eps * (-problem.lambda * 3.0f64).exp() / problem.lambda
            + 0.02 * want;
        let ok = (row.value_gap - want).abs() <= tol;
        q_ok &= ok;
        detail.push_str(&format!(
            "q eps={}: gap {:.5} vs {:.5}; ",
            row.eps, row.value_gap, want
        ));
    }

    let b_rep =
        stability_experiment(&problem, &x, &cfg, &family, &eps, true, false, &probes).unwrap();
    let gaps: Vec<f64> = b_rep.rows.iter().map(|r| r.value_gap).collect();
    let b_ok = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    detail.push_str(&format!("b gaps {:?}", gaps));
    conclude(10, "stability ladder", q_ok && b_ok, &detail);
}

// -------------------------------------------------------------------------
// CLI determinism
// -------------------------------------------------------------------------

fn run_cli(args: &[&str], threads: &str, out: &PathBuf) -> (i32, Vec<(String, Vec<u8>)>) {
    std::fs::create_dir_all(out).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_delay-hjb"))
        .args(args)
        .args(["--threads", threads, "--out", out.to_str().unwrap()])
        .output()
        .expect("binary runs");
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    (status.status.code().unwrap_or(-1), files)
}

#[test]
fn criterion_11_cli_determinism() {
    let cases: Vec<(&str, Vec<&str>)> = vec![
        ("gauge-verify", vec!["gauge-verify", "--samples", "200", "--counterexample-n", "50"]),
        ("deriv-check", vec!["deriv-check", "--probes", "40"]),
        ("ito-check", vec!["ito-check", "--paths", "80", "--dt", "0.01", "--horizon", "0.25"]),
        ("bp-search", vec!["bp-search", "--candidates", "80"]),
        ("simulate", vec!["simulate", "--fixture", "exp-memory", "--law", "feedback:0.3:1", "--horizon", "0.5"]),
        ("sde-estimates", vec!["sde-estimates", "--paths", "80", "--horizon", "1"]),
        ("value-lq", vec!["value-lq", "--paths", "600", "--dt", "0.01", "--horizon", "1.5"]),
        ("dpp-check", vec!["dpp-check", "--paths", "200", "--dt", "0.01", "--horizon", "1.5"]),
        ("lipschitz-v", vec!["lipschitz-v", "--paths", "150", "--pairs", "3", "--horizon", "1"]),
        ("shift-modulus", vec!["shift-modulus", "--fixture", "exp-memory", "--paths", "150", "--horizon", "1"]),
        ("hjb-residual", vec!["hjb-residual", "--probes", "40"]),
        ("stability", vec!["stability", "--paths", "200", "--dt", "0.01", "--horizon", "2"]),
        ("reduce-check", vec!["reduce-check", "--fixture", "exp-memory"]),
    ];
    let base = std::env::temp_dir().join(format!("delay-hjb-acceptance-{}", std::process::id()));
    let mut mismatches = Vec::new();
    for (name, args) in &cases {
        let out1 = base.join("t1").join(name);
        let out8 = base.join("t8").join(name);
        let (code1, files1) = run_cli(args, "1", &out1);
        let (code8, files8) = run_cli(args, "8", &out8);
        if code1 != code8 {
            mismatches.push(format!("{}: exit {} vs {}", name, code1, code8));
        }
        if code1 != 0 {
            mismatches.push(format!("{}: exit code {}", name, code1));
        }
        if files1.is_empty() || files1 != files8 {
            mismatches.push(format!(
                "{}: report bytes differ across thread counts ({} files)",
                name,
                files1.len()
            ));
        }
    }
    let _ = std::fs::remove_dir_all(&base);
    conclude(
        11,
        "CLI determinism",
        mismatches.is_empty(),
        &mismatches.join("; "),
    );
}
