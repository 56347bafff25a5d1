//! Acceptance criteria 1-9, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the lines always print.
//! Set `ACCEPTANCE_ONLY=3,7` to run a subset.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use settle_sense::ground::{self, GroundPoint, TunnelGeometry};
use settle_sense::prob::{normal, stream};
use settle_sense::scenario::Scenario;
use settle_sense::soi::{r_up, SoiEngine};
use settle_sense::subset::{run_subset_simulation, SubsetSimParams};
use settle_sense::surrogate::{optimize_location, EngineObjective, InputScaling, KrigingModel, ObservationRegion, OptimizerParams, Trend};
use settle_sense::updating::{update_reliability, update_via_joint, GaussianLikelihood, ObservationModel, UpdateParams};
use settle_sense::Error;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let cases = [
        ("l1", 8.26e-3, 1.29e-2, 0.070),
        ("l2", 8.40e-3, 8.47e-2, 0.425),
        ("l3", 8.31e-3, 2.23e-2, 0.161),
        ("l4", 8.36e-3, 9.84e-3, 0.026),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, pf, pfz, target) in cases {
        let r = r_up(pf, pfz).map_err(|e| e.to_string())?;
        ok &= (r - target).abs() <= 0.002;
        detail.push(format!("{name} {r:.4} (target {target})"));
    }
    check(ok, detail.join(", "))
}

fn criterion_2() -> Outcome {
    let exact = normal::cdf(-3.0);
    let run = |seed| {
        let p = SubsetSimParams {
            n_per_level: 10_000,
            p0: 0.1,
            seed,
            ..Default::default()
        };
        run_subset_simulation(|u| 3.0 - u[0], 2, &p).map_err(|e| e.to_string())
    };
    let first = run(1)?;
    let within = (first.p_f - exact).abs() <= 3.0 * first.cov * exact;
    let runs: Vec<_> = (100..300).map(run).collect::<Result<_, _>>()?;
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.p_f).sum::<f64>() / n;
    let sd = (runs.iter().map(|r| (r.p_f - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let empirical = sd / mean;
    let predicted = runs.iter().map(|r| r.cov).sum::<f64>() / n;
    let ratio = predicted / empirical;
    check(
        within && (0.5..=2.0).contains(&ratio),
        format!(
            "P_F {:.5e} (COV {:.4}) vs {exact:.5e}; 200-seed mean {mean:.5e}; predicted COV {predicted:.4} vs empirical {empirical:.4} over 200 seeds",
            first.p_f, first.cov
        ),
    )
}

/// Prior N(0, 1), failure X > 2, measurement of X.
struct Conjugate;

impl ObservationModel for Conjugate {
    fn dim(&self) -> usize {
        1
    }
    fn limit_state(&self, u: &[f64]) -> f64 {
        2.0 - u[0]
    }
    fn predicted(&self, u: &[f64]) -> f64 {
        u[0]
    }
}

fn criterion_3() -> Outcome {
    let pf_exact = 0.02275;
    let pfz_exact = 0.01695;
    let lik = GaussianLikelihood::new(1.0, 1.0).map_err(|e| e.to_string())?;
    let ss = SubsetSimParams {
        seed: 3,
        ..Default::default()
    };
    let d = update_reliability(&Conjugate, &lik, &UpdateParams::default(), &ss).map_err(|e| e.to_string())?;
    let j = update_via_joint(&Conjugate, &lik, &ss).map_err(|e| e.to_string())?;
    let pf_ok = (d.p_f - pf_exact).abs() <= 3.0 * d.cov_pf * d.p_f;
    let dec_ok = (d.p_f_given_z - pfz_exact).abs() <= 3.0 * d.cov_pfz * d.p_f_given_z;
    let joint_ok = (j.p_f_given_z - pfz_exact).abs() <= 3.0 * j.cov * j.p_f_given_z;
    let combined = ((d.cov_pfz * d.p_f_given_z).powi(2) + (j.cov * j.p_f_given_z).powi(2)).sqrt();
    let agree = (d.p_f_given_z - j.p_f_given_z).abs() <= 3.0 * combined;
    check(
        pf_ok && dec_ok && joint_ok && agree,
        format!(
            "P(F) {:.5} (COV {:.3}); P(F|Z) decomposition {:.5} (COV {:.3}), joint {:.5} (COV {:.3})",
            d.p_f, d.cov_pf, d.p_f_given_z, d.cov_pfz, j.p_f_given_z, j.cov
        ),
    )
}

fn criterion_4() -> Outcome {
    let g = TunnelGeometry::reference();
    let (v_l, k) = (0.005, 0.5);
    let oracle = 1000.0 * v_l * std::f64::consts::PI * 144.0 / ((2.0 * std::f64::consts::PI).sqrt() * k * 23.0 * 4.0);
    let far = -ground::settlement(&g, GroundPoint::surface(0.0, 1e4), v_l, k).map_err(|e| e.to_string())?;
    let face = -ground::settlement(&g, GroundPoint::surface(0.0, g.face_y), v_l, k).map_err(|e| e.to_string())?;
    let smax_ok = (far / oracle - 1.0).abs() <= 1e-9 && (far - 19.617).abs() < 5e-4;
    let face_ok = (face / (0.3 * oracle) - 1.0).abs() <= 1e-9 && (face - 5.885).abs() < 5e-4;

    let mut rng = stream(4, "acceptance-fd", 0);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g = TunnelGeometry::new(12.0, 23.0, rng.random_range(-10.0..10.0), f64::INFINITY, 0.3).map_err(|e| e.to_string())?;
        let v_l = rng.random_range(0.002..0.01);
        let k = rng.random_range(0.2..0.6);
        let p = GroundPoint::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..40.0), 0.0);
        let at = |dx: f64, dy: f64| ground::displacements(&g, GroundPoint::new(p.x + dx, p.y + dy, p.z), v_l, k).unwrap();
        let (uxp, uyp) = at(h, 0.0);
        let (uxm, uym) = at(-h, 0.0);
        let (vxp, vyp) = at(0.0, h);
        let (vxm, vym) = at(0.0, -h);
        let fd = [
            (uxp - uxm) / (2.0 * h) / 1000.0,
            (vyp - vym) / (2.0 * h) / 1000.0,
            0.5 * ((vxp - vxm) + (uyp - uym)) / (2.0 * h) / 1000.0,
        ];
        let e = ground::ground_strains(&g, p, v_l, k).map_err(|e| e.to_string())?;
        let scale = e.xx.abs().max(e.yy.abs()).max(e.xy.abs()).max(1e-12);
        for (a, b) in [e.xx, e.yy, e.xy].into_iter().zip(fd) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    check(
        smax_ok && face_ok && worst <= 1e-5,
        format!("S_max {far:.6} mm, S(0, y_s) {face:.6} mm, worst strain FD error {worst:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let s = Scenario::case_study();
    let engine = SoiEngine::new(&s);
    let locations: Vec<GroundPoint> = [10.0, 15.0, 20.0, 25.0].iter().map(|&c| GroundPoint::surface(c, c)).collect();
    let mut rup = Vec::new();
    let mut soi = Vec::new();
    let mut p_f = f64::NAN;
    for &loc in &locations {
        let u = match engine.update_at(loc, 10.0) {
            Ok(u) => u,
            Err(Error::NotConverged { best, .. }) => *best,
            Err(e) => return Err(e.to_string()),
        };
        p_f = u.p_f;
        // delta method on |β(P(F|Z)) / β(P(F)) − 1|
        let beta = normal::quantile(u.p_f);
        let beta_z = normal::quantile(u.p_f_given_z);
        let sd_beta = u.cov_pf * u.p_f / normal::pdf(beta);
        let sd_beta_z = u.cov_pfz * u.p_f_given_z / normal::pdf(beta_z);
        let sd = ((sd_beta_z / beta).powi(2) + (beta_z * sd_beta / (beta * beta)).powi(2)).sqrt();
        rup.push((u.r_up, sd));
        let e = engine.soi_at(loc).map_err(|e| e.to_string())?;
        soi.push((e.soi, e.noise_var.sqrt()));
    }
    let above = |a: (f64, f64), b: (f64, f64)| a.0 - b.0 > 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt();
    let rup_ok = above(rup[1], rup[2]) && above(rup[2], rup[0]) && above(rup[0], rup[3]);
    let soi_ok = above(soi[1], soi[0]) && above(soi[0], soi[2]) && above(soi[2], soi[3]);
    let pf_ok = (1e-3..=1e-1).contains(&p_f);
    let fmt = |v: &[(f64, f64)]| v.iter().map(|(m, s)| format!("{m:.3}±{s:.3}")).collect::<Vec<_>>().join(" ");
    check(
        rup_ok && soi_ok && pf_ok,
        format!("P_F {p_f:.3e}; r_up l1..l4 {}; SOI l1..l4 {}", fmt(&rup), fmt(&soi)),
    )
}

fn dense_oracle(x: &[f64], y: &[f64], theta: f64, q: f64) -> (f64, f64) {
    let n = x.len();
    let r = DMatrix::from_fn(n, n, |i, j| (-theta * (x[i] - x[j]).powi(2)).exp());
    let rinv = r.try_inverse().expect("invertible");
    let f = DVector::from_element(n, 1.0);
    let yv = DVector::from_column_slice(y);
    let ftrf = f.dot(&(&rinv * &f));
    let beta = f.dot(&(&rinv * &yv)) / ftrf;
    let resid = &yv - &f * beta;
    let s2 = resid.dot(&(&rinv * &resid)) / n as f64;
    let rq = DVector::from_fn(n, |i, _| (-theta * (x[i] - q).powi(2)).exp());
    let mean = beta + rq.dot(&(&rinv * &resid));
    let u = f.dot(&(&rinv * &rq)) - 1.0;
    (mean, s2 * (1.0 - rq.dot(&(&rinv * &rq)) + u * u / ftrf))
}

fn criterion_6() -> Outcome {
    let x: Vec<f64> = (0..20).map(|i| i as f64 + 0.3 * (i as f64).sin()).collect();
    let y: Vec<f64> = x.iter().map(|v| (0.4 * v).sin() + 0.05 * v).collect();
    let pts: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
    let scaling = InputScaling::from_bounds(&[0.0], &[1.0]).map_err(|e| e.to_string())?;
    let m = KrigingModel::fit_fixed(&pts, &y, Trend::Ordinary, &[1.0], 1.0, Some(scaling)).map_err(|e| e.to_string())?;
    let mut worst_pred: f64 = 0.0;
    for q in [0.05, 0.77, 1.5, 2.111, 7.9, 12.34, 18.2, 25.0] {
        let (mu, var) = m.predict_one(&[q]);
        let (mo, vo) = dense_oracle(&x, &y, 1.0, q);
        worst_pred = worst_pred.max((mu - mo).abs()).max((var - vo.max(0.0)).abs());
    }
    let mut worst_interp: f64 = 0.0;
    for (p, v) in pts.iter().zip(&y) {
        worst_interp = worst_interp.max((m.predict_one(p).0 - v).abs());
    }
    check(
        worst_pred <= 1e-8 && worst_interp <= 1e-8,
        format!("max |Δ| vs dense oracle {worst_pred:.2e}, interpolation error {worst_interp:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let region = ObservationRegion::new([10.0, 30.0], [10.0, 30.0], 101, 101).map_err(|e| e.to_string())?;
    let stub = |p: [f64; 2]| Ok((-((p[0] - 14.7).powi(2) + (p[1] - 24.2).powi(2)), 0.0));
    let params = OptimizerParams::default();
    let t = optimize_location(&region, &stub, &params, 7).map_err(|e| e.to_string())?;
    let [dx, dy] = region.spacing();
    let near = (t.l_star[0] - 14.7).abs() <= dx + 1e-9 && (t.l_star[1] - 24.2).abs() <= dy + 1e-9;
    let monotone = t.steps.windows(2).all(|w| w[1].best_observed >= w[0].best_observed);
    check(
        t.initial.len() == 81 && near && monotone && t.iterations() <= 100,
        format!(
            "l* ({:.2}, {:.2}) after {} iterations ({}), best observed non-decreasing: {monotone}",
            t.l_star[0],
            t.l_star[1],
            t.iterations(),
            t.termination.as_str()
        ),
    )
}

fn criterion_8() -> Outcome {
    let base = Scenario::case_study();
    let mut out = Vec::new();
    for face in [0.0, -3.0] {
        let s = base.with_face(face);
        let obj = EngineObjective(SoiEngine::new(&s));
        let t = optimize_location(&s.region, &obj, &s.optimizer, 8).map_err(|e| e.to_string())?;
        out.push(t);
    }
    let diff = out[1].soi_star - out[0].soi_star;
    let noise = (out[0].noise_var + out[1].noise_var).sqrt();
    check(
        diff > 3.0 * noise,
        format!(
            "y_s 0: SOI* {:.4} at ({:.1}, {:.1}); y_s -3: SOI* {:.4} at ({:.1}, {:.1}); difference {diff:.4}, combined noise SD {noise:.4}",
            out[0].soi_star, out[0].l_star[0], out[0].l_star[1], out[1].soi_star, out[1].l_star[0], out[1].l_star[1]
        ),
    )
}

const SMALL_SCENARIO: &str = r#"
seed = 99

[region]
nx = 21
ny = 21

[settlement_grid]
nx = 21
ny = 21

[subset]
n_per_level = 2000

[update]
cov_thr = 0.3
n_ss_initial = 2000
delta_n_ss = 2000
max_outer_iterations = 2
reciprocal_sim_n = 20000
quadrature_nodes = 129

[soi]
n_dis = 6

[optimizer]
initial_grid = 4
max_iter = 4
restarts = 3
refit_restarts = 2
max_failure_fraction = 0.9
"#;

fn run_cli(bin: &Path, command: &str, scenario: &Path, out: &Path, threads: Option<&str>, env_threads: Option<&str>) -> Result<(), String> {
    let mut c = Command::new(bin);
    c.args([command, "--scenario"]).arg(scenario).arg("--out").arg(out);
    c.env_remove("SETTLE_SENSE_THREADS");
    if let Some(t) = threads {
        c.args(["--threads", t]);
    }
    if let Some(t) = env_threads {
        c.env("SETTLE_SENSE_THREADS", t);
    }
    let o = c.output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{command} failed: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn csv_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        if p.extension().is_some_and(|x| x == "csv") {
            files.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).map_err(|e| e.to_string())?));
        }
    }
    files.sort();
    Ok(files)
}

fn criterion_9() -> Outcome {
    let bin = Path::new(env!("CARGO_BIN_EXE_settle-sense"));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = dir.path().join("scenario.toml");
    std::fs::write(&scenario, SMALL_SCENARIO).map_err(|e| e.to_string())?;
    let commands = ["settlement-grid", "reliability", "update", "soi", "soi-map", "optimize"];
    let mut mismatched = Vec::new();
    let mut n_files = 0;
    for cmd in commands {
        let a = dir.path().join(format!("{cmd}-1a"));
        let b = dir.path().join(format!("{cmd}-1b"));
        let c = dir.path().join(format!("{cmd}-8"));
        run_cli(bin, cmd, &scenario, &a, Some("1"), None)?;
        run_cli(bin, cmd, &scenario, &b, Some("1"), None)?;
        run_cli(bin, cmd, &scenario, &c, None, Some("8"))?;
        let (fa, fb, fc) = (csv_files(&a)?, csv_files(&b)?, csv_files(&c)?);
        n_files += fa.len();
        if fa.is_empty() || fa != fb || fa != fc {
            mismatched.push(cmd);
        }
    }
    check(
        mismatched.is_empty(),
        format!("{n_files} CSV files from 6 commands; repeat and 1 vs 8 workers identical; mismatches: {mismatched:?}"),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "r_up closed form", criterion_1),
        (2, "subset simulation on a linear limit state", criterion_2),
        (3, "conjugate Gaussian updating", criterion_3),
        (4, "ground model", criterion_4),
        (5, "case-study orderings", criterion_5),
        (6, "Kriging vs dense oracle", criterion_6),
        (7, "optimizer on a quadratic stub", criterion_7),
        (8, "face-advance direction", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {id} ({name}): {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}): {d} [{secs:.1} s]");
            }
        }
    }
    println!("{failed} criteria failed");
    // Failures are reported, not fatal, unless ACCEPTANCE_STRICT is set.
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
