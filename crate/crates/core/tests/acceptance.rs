//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line; run with
//! `--test-threads 1` to see them in order.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use eco_dkf::certify::{brute_force_rank1, certify};
use eco_dkf::fusion::{solve_lj, FusionInput};
use eco_dkf::harness::oracle::{random_instance, random_spd2, simplex_grid_min};
use eco_dkf::harness::trial::EstimatorTrace;
use eco_dkf::harness::{run_experiment, Estimator, ExperimentConfig, TrialRecord};
use eco_dkf::harness::metrics::MetricSeries;
use eco_dkf::netsim::pjc_check;

const FINAL_WINDOW: usize = 20;
const NOB_WINDOW: usize = 50;

/// Written straight to the stderr handle so the line shows even when the test
/// harness captures output.
fn report(criterion: &str, passed: bool, detail: String) {
    let line = format!("{} {criterion}: {detail}\n", if passed { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "{criterion}: {detail}");
}

struct Run {
    records: Vec<TrialRecord>,
    series: MetricSeries,
}

fn default_run(rule: &str, certify: bool) -> Run {
    let mut cfg = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml"))
        .expect("default config");
    cfg.trigger.rule = rule.into();
    cfg.certify = certify;
    let run = run_experiment(&cfg, None).expect("experiment runs");
    Run {
        records: run.records,
        series: run.series,
    }
}

// Certificates are only needed on the time-triggered run; they do not alter
// the estimates, and all runs share trial seeds.
fn tt() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| default_run("O", true))
}

fn rule_run(rule: &'static str) -> &'static Run {
    static C: OnceLock<Run> = OnceLock::new();
    static D: OnceLock<Run> = OnceLock::new();
    static S: OnceLock<Run> = OnceLock::new();
    let cell = match rule {
        "C" => &C,
        "D" => &D,
        "S" => &S,
        other => panic!("no cached run for {other}"),
    };
    cell.get_or_init(|| default_run(rule, false))
}

fn eco(r: &TrialRecord) -> &EstimatorTrace {
    r.trace(Estimator::EcoDkf).expect("ECO-DKF trace")
}

fn ckf(r: &TrialRecord) -> &EstimatorTrace {
    r.trace(Estimator::Ckf).expect("CKF trace")
}

#[test]
fn criterion_01_fusion_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF05E);
    let (mut above, mut below, mut worst) = (0, 0, 0.0f64);
    for _ in 0..200 {
        let infos = random_instance(&mut rng);
        let out = solve_lj(&FusionInput::from_matrices(infos.clone()).unwrap()).unwrap();
        let grid = simplex_grid_min(&infos, 1e-3).unwrap();
        above += usize::from(out.objective > grid + 1e-8);
        below += usize::from(out.objective < grid - 1e-3);
        worst = worst.max(out.objective - grid);
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "1 fusion oracle",
        above == 0 && below == 0 && secs < 30.0,
        format!("200 instances, {above} above grid+1e-8, {below} below grid-1e-3, max(obj-grid) {worst:.2e}, {secs:.1}s"),
    );
}

#[test]
fn criterion_02_lemma3_and_row_stochastic() {
    let run = tt();
    let (mut events, mut bad, mut worst_res, mut worst_sum) = (0, 0, 0.0f64, 0.0f64);
    for r in &run.records {
        for d in eco(r).fusions.iter().flatten() {
            events += 1;
            worst_res = worst_res.max(d.lemma3_residual);
            worst_sum = worst_sum.max(d.lambda_sum_error);
            bad += usize::from(d.lemma3_residual > 1e-9 || d.lambda_sum_error > 1e-9);
        }
    }
    report(
        "2 Lemma-3 equality and row-stochasticity",
        bad == 0 && events == 20 * 200 * 20,
        format!("{events} fusions, {bad} violations, max residual {worst_res:.2e}, max |sum-1| {worst_sum:.2e}"),
    );
}

#[test]
fn criterion_03_certificate_soundness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xCE27);
    let (mut certified, mut unsound, mut rho_bad, mut worst) = (0, 0, 0, 0.0f64);
    for _ in 0..500 {
        let j = rand::Rng::gen_range(&mut rng, 2..=4);
        let infos: Vec<_> = (0..j).map(|_| random_spd2(&mut rng, 0.1, 10.0)).collect();
        let out = solve_lj(&FusionInput::from_matrices(infos.clone()).unwrap()).unwrap();
        let cert = certify(&infos, &out.s_star).unwrap();
        rho_bad += usize::from(!(-1e-6..=1.0 + 1e-6).contains(&cert.rho));
        if cert.certified {
            certified += 1;
            let err = (cert.trace_x - brute_force_rank1(&infos, 10_000).unwrap()).abs();
            worst = worst.max(err);
            unsound += usize::from(err > 1e-3);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "3 certificate soundness",
        unsound == 0 && rho_bad == 0 && secs < 60.0,
        format!("500 instances, {certified} certified, {unsound} off brute force, max err {worst:.2e}, {rho_bad} rho out of range, {secs:.1}s"),
    );
}

#[test]
fn criterion_04_certification_rate() {
    let s = tt().series.get(Estimator::EcoDkf).unwrap();
    let rate = s.cert_rate(0).unwrap();
    let rho_min = s.rho_min_from(5).unwrap();
    report(
        "4 certification rate (TT)",
        rate >= 0.90 && rho_min >= 0.5,
        format!(
            "cert_rate {rate:.4} over {} non-trivial fusions (need >= 0.90), rho_min after step 5 {rho_min:.4} (need >= 0.5)",
            s.certificate_events(0)
        ),
    );
}

fn stability(rule: &str, run: &Run) -> (bool, String) {
    let s = run.series.get(Estimator::EcoDkf).unwrap();
    let (first, last) = (s.mse[0], s.final_mse(FINAL_WINDOW));
    let diverged = run
        .records
        .iter()
        .filter(|r| {
            let t = eco(r);
            (0..r.steps()).any(|k| !(t.mse_at(k) <= 1e3 * t.mse_at(0)))
        })
        .count();
    let ckf_wins = run
        .records
        .iter()
        .filter(|r| ckf(r).final_mse(FINAL_WINDOW) <= eco(r).final_mse(FINAL_WINDOW))
        .count();
    let share = ckf_wins as f64 / run.records.len() as f64;
    let ok = last <= 0.1 * first && diverged == 0 && share >= 0.8;
    (
        ok,
        format!(
            "{rule}: final/initial MSE {:.3e}, {diverged} diverged trials, CKF <= ECO-DKF on {:.0}% of trials",
            last / first,
            100.0 * share
        ),
    )
}

#[test]
fn criterion_05_stability() {
    let (a, da) = stability("#O", tt());
    let (b, db) = stability("#C", rule_run("C"));
    report("5 stability", a && b, format!("{da}; {db}"));
}

#[test]
fn criterion_06_nees_consistency() {
    let run = tt();
    let s = run.series.get(Estimator::EcoDkf).unwrap();
    // steady state: second half of the horizon
    let nees = s.mean_nees(run.series.steps / 2);
    let n = run.records[0].truth[0].len() as f64;
    report(
        "6 NEES consistency",
        nees <= 1.3 * n,
        format!("steady-state mean NEES {nees:.3} (bound {:.2})", 1.3 * n),
    );
}

/// Least-squares slope of `ys` against the step index.
fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        sxy += (k as f64 - mx) * (y - my);
        sxx += (k as f64 - mx).powi(2);
    }
    sxy / sxx
}

#[test]
fn criterion_07_bandwidth() {
    let nodes = tt().series.nodes as f64;
    let c = rule_run("C").series.get(Estimator::EcoDkf).unwrap();
    let c_nob = c.mean_nob(NOB_WINDOW).unwrap();
    let tt_mse = tt().series.get(Estimator::EcoDkf).unwrap().final_mse(FINAL_WINDOW);
    let c_mse = c.final_mse(FINAL_WINDOW);
    let o_exact = tt()
        .records
        .iter()
        .all(|r| eco(r).rounds.iter().all(|round| round.nob == r.nodes));
    let d = rule_run("D").series.get(Estimator::EcoDkf).unwrap();
    let d_nob = d.nob.as_ref().unwrap();
    let d_slope = slope(d_nob);
    let d_final = d.mean_nob(NOB_WINDOW).unwrap();
    report(
        "7 event-triggered bandwidth",
        c_nob <= 0.75 * nodes && c_mse <= 2.0 * tt_mse && o_exact && d_slope <= 0.0 && d_final <= 0.2 * nodes,
        format!(
            "#C NoB {c_nob:.2} (<= {:.1}), #C/#O final MSE {:.3}; #O NoB == N every step: {o_exact}; #D NoB slope {d_slope:.3e}, final {d_final:.2} (<= {:.1})",
            0.75 * nodes,
            c_mse / tt_mse,
            0.2 * nodes
        ),
    );
}

#[test]
fn criterion_08_disconnection_degrades() {
    let (c, d) = (rule_run("C"), rule_run("D"));
    let worse = c
        .records
        .iter()
        .zip(&d.records)
        .filter(|(rc, rd)| {
            assert_eq!(rc.seed, rd.seed);
            eco(rd).final_mse(FINAL_WINDOW) >= eco(rc).final_mse(FINAL_WINDOW)
        })
        .count();
    let share = worse as f64 / c.records.len() as f64;
    report(
        "8 degradation under #D",
        share >= 0.7,
        format!("#D final MSE >= #C final MSE on {worse}/{} trials", c.records.len()),
    );
}

#[test]
fn criterion_09_beta_binomial_forcing() {
    let run = rule_run("S");
    let mut longest = 0;
    for r in &run.records {
        let rounds = &eco(r).rounds;
        for i in 0..r.nodes {
            let mut streak = 0;
            for k in 1..rounds.len() {
                let isolated = rounds[k - 1].inboxes[i].is_empty();
                if isolated && !rounds[k].broadcasters[i] {
                    streak += 1;
                    longest = longest.max(streak);
                } else {
                    streak = 0;
                }
            }
        }
    }
    report(
        "9 beta-binomial forcing",
        longest <= 10,
        format!("longest run of silent isolated steps {longest} (limit 10) across {} trials", run.records.len()),
    );
}

fn cli_run(threads: usize, out: &Path) -> f64 {
    let start = Instant::now();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let status = Command::new(env!("CARGO_BIN_EXE_eco-dkf"))
        .args(["--threads", &threads.to_string(), "run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("launch CLI");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    start.elapsed().as_secs_f64()
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ta = cli_run(1, &a);
    let tb = cli_run(4, &b);
    let mut differing = Vec::new();
    for f in ["mse.csv", "nob.csv", "cert.csv", "trials.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        if x != y || x.is_empty() {
            differing.push(f);
        }
    }
    report(
        "10 determinism",
        differing.is_empty(),
        format!("--threads 1 vs 4: differing files {differing:?}; run times {ta:.1}s and {tb:.1}s"),
    );
}

#[test]
fn pjc_under_connected_rule() {
    let run = rule_run("C");
    let mut worst = 0;
    let mut failures = 0;
    for r in &run.records {
        match pjc_check(&eco(r).rounds).unwrap().t_min {
            Some(t) => worst = worst.max(t),
            None => failures += 1,
        }
    }
    report(
        "netsim PJC under #C",
        failures == 0,
        format!("{failures} trials whose full-horizon union is not strongly connected, largest t_min {worst}"),
    );
}
