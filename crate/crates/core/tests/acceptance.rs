//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Runs the real binary end to end for
//! the pipeline criteria and the library directly for the oracles.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skidsafe::io::config::ExperimentConfig;
use skidsafe::io::{summary, trace};
use skidsafe::lm::{compute_jacobian, lm_step, TrainHistory, TrainReport};
use skidsafe::nn::{Batch, Network};
use skidsafe::plant::{self, DisturbanceProfile, PlantParams, PlantState};
use skidsafe::rac::{
    adaptive_update, log_bound_holds, ppc_bound, AdaptiveState, PpcParams, RacGains,
};
use skidsafe::scenario::TraceRecord;
use skidsafe::supervisor::{supervise_step, Policy, SupervisorState};

const DT: f64 = 1e-3;

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let line = format!("{tag} {id}: {detail}");
        println!("{line}");
        self.lines.push((pass, line));
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skidsafe"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Runs the CLI and returns its exit code and stdout.
fn cli(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("binary runs");
    let code = out.status.code().unwrap_or(-1);
    if code == 1 {
        eprintln!(
            "skidsafe {args:?} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    (code, String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

// ---------------------------------------------------------------- pipeline

struct Trained {
    dir: PathBuf,
    left: PathBuf,
    right: PathBuf,
    /// Every training history produced, for the LM mechanics checks.
    histories: Vec<(String, TrainHistory)>,
    /// (seed, normalised train MSE, epochs, goal met, wall time)
    seeds: Vec<(u64, f64, usize, bool, Duration)>,
    deterministic: Vec<(String, bool)>,
}

fn train_side(
    dir: &Path,
    seed: u64,
    data: &Path,
    side: &str,
    tag: &str,
) -> (PathBuf, TrainReport, Duration) {
    let model = dir.join(format!("{tag}-{side}.json"));
    let hist = dir.join(format!("{tag}-{side}-history.json"));
    let seed_s = seed.to_string();
    let start = Instant::now();
    let (code, _) = cli(&[
        "train",
        "--preset",
        "exp3",
        "--seed",
        &seed_s,
        "--dataset",
        p(data),
        "--side",
        side,
        "--out",
        p(&model),
        "--history",
        p(&hist),
    ]);
    let took = start.elapsed();
    assert_eq!(code, 0, "training seed {seed} {side} failed");
    let report: TrainReport = serde_json::from_slice(&read(&hist)).expect("history parses");
    (model, report, took)
}

fn train_all(dir: &Path) -> Trained {
    let mut histories = Vec::new();
    let mut seeds = Vec::new();
    let mut deterministic = Vec::new();
    let mut models = (PathBuf::new(), PathBuf::new());

    for seed in 1..=3u64 {
        let data = dir.join(format!("data-{seed}.csv"));
        let seed_s = seed.to_string();
        let start = Instant::now();
        let (code, _) = cli(&[
            "collect",
            "--preset",
            "exp3",
            "--seed",
            &seed_s,
            "--out",
            p(&data),
        ]);
        assert_eq!(code, 0);
        let collect_time = start.elapsed();

        let (left, rep, took) = train_side(dir, seed, &data, "left", &format!("s{seed}"));
        let goal = rep.history.epochs.len() <= 200 && rep.norm_train_mse <= 1e-3;
        seeds.push((
            seed,
            rep.norm_train_mse,
            rep.history.epochs.len(),
            goal,
            collect_time + took,
        ));
        histories.push((format!("seed {seed} left"), rep.history));

        if seed == 1 {
            let (right, rep, _) = train_side(dir, seed, &data, "right", "s1");
            histories.push(("seed 1 right".into(), rep.history));
            models = (left.clone(), right.clone());

            // Rerun the whole seed-1 pipeline for the determinism check.
            let data2 = dir.join("data-1-rerun.csv");
            cli(&[
                "collect",
                "--preset",
                "exp3",
                "--seed",
                "1",
                "--out",
                p(&data2),
            ]);
            deterministic.push(("collect".into(), read(&data) == read(&data2)));
            let (l2, rep_l, _) = train_side(dir, 1, &data2, "left", "rerun");
            let (r2, rep_r, _) = train_side(dir, 1, &data2, "right", "rerun");
            histories.push(("seed 1 left rerun".into(), rep_l.history));
            histories.push(("seed 1 right rerun".into(), rep_r.history));
            deterministic.push((
                "train".into(),
                read(&left) == read(&l2) && read(&right) == read(&r2),
            ));
        }
    }
    Trained {
        dir: dir.to_path_buf(),
        left: models.0,
        right: models.1,
        histories,
        seeds,
        deterministic,
    }
}

struct Sim {
    code: i32,
    trace: Vec<TraceRecord>,
    summary: skidsafe::metrics::RunSummary,
    trace_bytes: Vec<u8>,
    summary_bytes: Vec<u8>,
}

fn simulate(t: &Trained, name: &str, cfg: &ExperimentConfig) -> Sim {
    let cfg_path = t.dir.join(format!("{name}.toml"));
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let tr = t.dir.join(format!("{name}-trace.csv"));
    let su = t.dir.join(format!("{name}-summary.json"));
    let (code, _) = cli(&[
        "simulate",
        "--config",
        p(&cfg_path),
        "--left-model",
        p(&t.left),
        "--right-model",
        p(&t.right),
        "--trace",
        p(&tr),
        "--summary",
        p(&su),
    ]);
    Sim {
        code,
        trace: trace::load(&tr).unwrap_or_default(),
        summary: summary::load(&su).expect("summary written"),
        trace_bytes: read(&tr),
        summary_bytes: read(&su),
    }
}

/// Independent envelope `(shoot - bound) e^{-rate t} + bound`.
fn env(shoot: f64, bound: f64, rate: f64) -> impl Fn(f64) -> f64 {
    move |t| (shoot - bound) * (-rate * t).exp() + bound
}

// ---------------------------------------------------------------- criteria

fn fd_jacobian(net: &Network, batch: &Batch) -> DMatrix<f64> {
    let w0 = net.flatten();
    let mut work = net.clone();
    let mut fd = DMatrix::zeros(batch.len(), w0.len());
    let mut w = w0.clone();
    for j in 0..w0.len() {
        let h = 1e-6 * (1.0 + w0[j].abs());
        w[j] = w0[j] + h;
        work.set_params(&w);
        let plus = work.forward_batch(&batch.inputs).unwrap();
        w[j] = w0[j] - h;
        work.set_params(&w);
        let minus = work.forward_batch(&batch.inputs).unwrap();
        w[j] = w0[j];
        for p in 0..batch.len() {
            fd[(p, j)] = (plus[p] - minus[p]) / (2.0 * h);
        }
    }
    fd
}

fn c1_jacobian(r: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut max_params = 0;
    for i in 0..20 {
        let sizes: Vec<usize> = if i == 0 {
            vec![1, 30, 25, 15, 10, 5, 1]
        } else {
            let depth = rng.random_range(1..=5);
            let mut s = vec![1];
            s.extend((0..depth).map(|_| rng.random_range(1..=20)));
            s.push(1);
            s
        };
        let net = Network::init(&sizes, rng.random()).unwrap();
        max_params = max_params.max(net.param_count());
        let p = rng.random_range(1..=16);
        let xs: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = Batch::new(xs.clone(), xs).unwrap();
        let j = compute_jacobian(&net, &batch).unwrap();
        let fd = fd_jacobian(&net, &batch);
        worst = worst.max((&j - &fd).amax() / fd.amax());
    }
    let took = start.elapsed();
    r.record(
        "C1 jacobian",
        worst < 1e-5 && took < Duration::from_secs(30) && max_params <= 1446,
        format!(
            "20 nets (largest {max_params} params), max rel err {worst:.2e} (< 1e-5), {:.2} s (< 30 s)",
            took.as_secs_f64()
        ),
    );
}

fn c2_lm(r: &mut Report, t: &Trained) {
    let mut rng = ChaCha8Rng::seed_from_u64(202);

    // (a) large damping reduces to a scaled gradient step.
    let j = DMatrix::from_fn(12, 5, |_, _| rng.random_range(-1.0..1.0));
    let xi = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
    let mu = 1e8;
    let dw = lm_step(&j, &xi, mu).unwrap();
    let gd = -(j.transpose() * &xi) / mu;
    let rel_a = (&dw - &gd).norm() / dw.norm();
    let a = rel_a < 1e-3;

    // (b) orthonormal columns, no damping: Gauss-Newton closed form.
    let m = DMatrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
    let q = m.qr().q();
    let xi = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
    let dw = lm_step(&q, &xi, 0.0).unwrap();
    let err_b = (&dw + q.transpose() * &xi).amax();
    let b = err_b < 1e-12;

    // (c) and (d) over every training run of the suite.
    let mut c = true;
    let mut d = true;
    let mut worst_ratio: f64 = 0.0;
    let beta = ExperimentConfig::preset("exp3").unwrap().train.lm.beta;
    for (_, h) in &t.histories {
        let mut prev = h.initial_train_mse;
        for e in h.epochs.iter().filter(|e| e.accepted) {
            c &= e.train_mse < prev;
            prev = e.train_mse;
        }
        for w in h.mu_trajectory().windows(2) {
            let ratio = w[1] / w[0];
            let off = ((ratio - beta) / beta)
                .abs()
                .min(((ratio - 1.0 / beta) * beta).abs());
            worst_ratio = worst_ratio.max(off);
            d &= off < 1e-12;
        }
    }
    r.record(
        "C2 lm mechanics",
        a && b && c && d,
        format!(
            "(a) gd limit rel {rel_a:.1e} (< 1e-3) {}; (b) gauss-newton err {err_b:.1e} {}; \
             (c) accepted MSE strictly decreasing over {} runs {}; (d) mu ratio in {{beta, 1/beta}} \
             (worst rel dev {worst_ratio:.1e}) {}",
            ok(a),
            ok(b),
            t.histories.len(),
            ok(c),
            ok(d)
        ),
    );
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn c3_training(r: &mut Report, t: &Trained) {
    let met = t.seeds.iter().filter(|s| s.3).count();
    let slow = t.seeds.iter().any(|s| s.4 > Duration::from_secs(300));
    let detail: Vec<String> = t
        .seeds
        .iter()
        .map(|(seed, mse, epochs, _, took)| {
            format!(
                "seed {seed}: {mse:.2e} in {epochs} epochs, {:.1} s",
                took.as_secs_f64()
            )
        })
        .collect();
    r.record(
        "C3 training goal",
        met >= 2 && !slow,
        format!(
            "{met}/3 seeds reach normalised MSE <= 1e-3 [{}]",
            detail.join("; ")
        ),
    );
}

fn c4_exp1(r: &mut Report, t: &Trained) {
    let cfg = ExperimentConfig::preset("exp1").unwrap();
    let sim = simulate(t, "exp1", &cfg);
    let zeta = env(0.04, 0.02, 0.35);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for row in &sim.trace {
        for s in row.sides() {
            let z = zeta(row.t);
            worst = worst.max(s.e.abs() / z);
            if z * z - s.e * s.e <= 0.0 {
                violations += 1;
            }
        }
    }
    let full = sim.trace.len() == cfg.scenario.steps();
    r.record(
        "C4 experiment 1",
        sim.code == 0 && violations == 0 && full,
        format!(
            "exit {}, {} steps, {violations} low-layer violations, peak |e|/zeta {worst:.3}",
            sim.code,
            sim.trace.len()
        ),
    );
}

fn c5_exp2(r: &mut Report, t: &Trained) {
    let cfg = ExperimentConfig::preset("exp2").unwrap();
    let sim = simulate(t, "exp2", &cfg);
    let o = env(0.10, 0.04, 0.1);
    let mut inside = true;
    let mut worst: f64 = 0.0;
    for row in &sim.trace {
        for s in row.sides() {
            inside &= s.e.abs() < o(row.t);
            worst = worst.max(s.e.abs() / o(row.t));
        }
    }
    let full = sim.trace.len() == cfg.scenario.steps();
    r.record(
        "C5 experiment 2",
        sim.code == 0 && inside && full && sim.summary.shutdown_at_s.is_none(),
        format!(
            "exit {}, {} steps, |e| < o(t) throughout: {inside}, peak |e|/o {worst:.3}",
            sim.code,
            sim.trace.len()
        ),
    );
}

fn c6_exp3(r: &mut Report, t: &Trained) -> Sim {
    let cfg = ExperimentConfig::preset("exp3").unwrap();
    let sim = simulate(t, "exp3", &cfg);
    let zeta = env(0.04, 0.02, 0.35);
    let o = env(0.10, 0.04, 0.03);
    let mut pass = sim.code == 0 && sim.trace.len() == cfg.scenario.steps();
    let mut notes = Vec::new();
    for (name, pick) in [
        ("left", (|r: &TraceRecord| r.left) as fn(&TraceRecord) -> _),
        ("right", |r: &TraceRecord| r.right),
    ] {
        let rows: Vec<_> = sim.trace.iter().map(|r| (r.t, pick(r))).collect();
        let transitions = rows
            .windows(2)
            .filter(|w| w[0].1.status == Policy::Dnn && w[1].1.status == Policy::Rac)
            .count()
            + usize::from(rows[0].1.status == Policy::Rac);
        let first_violation = rows
            .iter()
            .find(|(t, s)| zeta(*t).powi(2) - s.e * s.e <= 0.0);
        let switch = rows.iter().find(|(_, s)| s.status == Policy::Rac);
        let (latency, switch_t) = match (first_violation, switch) {
            (Some(v), Some(s)) => (s.0 - v.0, s.0),
            _ => (f64::INFINITY, f64::NAN),
        };
        let post_ok = rows
            .iter()
            .filter(|(t, _)| *t >= switch_t)
            .all(|(t, s)| s.e.abs() < o(*t));
        let peak = rows
            .iter()
            .filter(|(t, _)| *t >= switch_t)
            .map(|(t, s)| s.e.abs() / o(*t))
            .fold(0.0, f64::max);
        let side_ok = transitions == 1 && (0.0..=DT + 1e-12).contains(&latency) && post_ok;
        pass &= side_ok;
        notes.push(format!(
            "{name}: switch at {switch_t:.3} s, latency {:.0} ms, {transitions} transition(s), \
             post-switch peak |e|/o {peak:.3}",
            latency * 1e3
        ));
    }
    r.record(
        "C6 experiment 3",
        pass,
        format!("exit {}; {}", sim.code, notes.join("; ")),
    );
    sim
}

fn c7_shutdown(r: &mut Report, t: &Trained) {
    let mut cfg = ExperimentConfig::preset("exp3").unwrap();
    for side in [&mut cfg.scenario.left, &mut cfg.scenario.right] {
        side.disturbance = DisturbanceProfile::ControlScale {
            t_start: 30.0,
            magnitude: 2.0,
        };
    }
    let sim = simulate(t, "severe", &cfg);
    let last = sim.trace.last();
    let violated = last.is_some_and(|row| {
        row.sides()
            .iter()
            .any(|s| s.denom_high.is_some_and(|d| d <= 0.0))
    });
    let halted = last.is_some_and(|row| row.sides().iter().all(|s| s.status == Policy::Halted));
    let truncated =
        sim.trace.len() < cfg.scenario.steps() && sim.summary.shutdown_at_s == last.map(|r| r.t);
    let peak = sim
        .trace
        .iter()
        .flat_map(|row| row.sides().map(|s| (row.t, *s)))
        .filter(|(_, s)| s.alpha2 == 1)
        .map(|(t, s)| s.e.abs() / env(0.10, 0.04, 0.03)(t))
        .fold(0.0, f64::max);
    r.record(
        "C7 shutdown authority",
        sim.code == 2 && violated && halted && truncated,
        format!(
            "control scale 2.0: exit {} (want 2), {} of {} steps, high-layer violation {violated}, \
             halted {halted}, peak post-switch |e|/o {peak:.3}",
            sim.code,
            sim.trace.len(),
            cfg.scenario.steps()
        ),
    );
}

fn c8_properties(r: &mut Report, traces: &[&[TraceRecord]]) {
    const N: usize = 100_000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut notes = Vec::new();

    // Barrier bound: log(o²/(o²-e²)) < e²/(o²-e²) on 0 < |e| < o.
    let mut log_ok = 0;
    for _ in 0..N {
        let o = 10f64.powf(rng.random_range(-4.0..1.0));
        let e = o * rng.random_range(1e-6..0.999_999) * if rng.random() { 1.0 } else { -1.0 };
        log_ok += usize::from(log_bound_holds(e, o));
    }
    notes.push(format!("log bound {log_ok}/{N}"));

    // Envelope: o(0) = shoot, strictly decreasing, inside (bound, shoot].
    let mut env_ok = 0;
    for _ in 0..N {
        let bound = rng.random_range(1e-3..1.0);
        let shoot = bound + rng.random_range(1e-3..1.0);
        let rate = rng.random_range(1e-3..5.0);
        let pp = PpcParams::new(shoot, bound, rate).unwrap();
        let t1 = rng.random_range(0.0..20.0 / rate);
        let t2 = t1 + rng.random_range(1e-3..1.0) / rate;
        let (a, b) = (ppc_bound(t1, &pp), ppc_bound(t2, &pp));
        env_ok += usize::from(ppc_bound(0.0, &pp) == shoot && b < a && a <= shoot && b > bound);
    }
    notes.push(format!("envelope {env_ok}/{N}"));

    // Latch: alpha1 non-increasing, alpha2 non-decreasing, sum 1,
    // transitions only dnn->rac->halted.
    let mut latch_ok = 0;
    for _ in 0..N {
        let o_bound = rng.random_range(0.02..0.1);
        let o = PpcParams::new(
            o_bound + rng.random_range(0.01..0.1),
            o_bound,
            rng.random_range(0.01..1.0),
        )
        .unwrap();
        let z_bound = o_bound * rng.random_range(0.2..0.9);
        let z = PpcParams::new(
            z_bound + rng.random_range(1e-3..o.shoot - z_bound),
            z_bound,
            rng.random_range(0.01..1.0),
        )
        .unwrap();
        let mut st = SupervisorState::new(z, o);
        let mut rac = AdaptiveState::new(RacGains::default()).unwrap();
        let mut prev = st;
        let mut good = true;
        for k in 0..20 {
            if st.halted() {
                break;
            }
            let tk = k as f64 * DT;
            let e = rng.random_range(-1.2..1.2) * o.at(tk);
            if supervise_step(&mut st, e, tk, 100.0, &mut rac, DT).is_err() {
                good = false;
                break;
            }
            // A step may latch and then halt; the latch must have fired
            // first, at the same instant.
            let allowed = match (prev.policy(), st.policy()) {
                (a, b) if a == b => true,
                (Policy::Dnn, Policy::Rac) | (Policy::Rac, Policy::Halted) => true,
                (Policy::Dnn, Policy::Halted) => {
                    st.alpha2 == 1 && st.switched_at.is_some() && st.switched_at == st.shutdown_at
                }
                _ => false,
            };
            good &= st.alpha1 + st.alpha2 == 1
                && st.alpha1 <= prev.alpha1
                && st.alpha2 >= prev.alpha2
                && allowed;
            prev = st;
        }
        latch_ok += usize::from(good);
    }
    notes.push(format!("latch {latch_ok}/{N}"));

    // Non-negative adaptive parameter under dt·δ < 1.
    let mut theta_ok = 0;
    for _ in 0..N {
        let delta = rng.random_range(1e-3..100.0);
        let dt = rng.random_range(1e-6..1.0) / delta;
        let gains = RacGains {
            k: 1.0,
            gamma: rng.random_range(1e-3..10.0),
            delta,
            theta_hat0: rng.random_range(1e-6..10.0),
        };
        let mut s = AdaptiveState::new(gains).unwrap();
        s.theta_hat = rng.random_range(0.0..10.0);
        let o = rng.random_range(1e-3..1.0);
        let e = o * rng.random_range(-0.999..0.999);
        theta_ok += usize::from(adaptive_update(&s, e, o, dt).is_ok_and(|n| n.theta_hat >= 0.0));
    }
    notes.push(format!("theta>=0 {theta_ok}/{N}"));

    // Trace identities on closed-loop rows.
    let mut rows = 0;
    let mut id_ok = 0;
    for tr in traces {
        for row in tr.iter() {
            for s in row.sides() {
                rows += 1;
                let e_ok = s.e == s.v - s.v_ref;
                let composite = match s.status {
                    Policy::Halted => s.u_c.is_none(),
                    _ => {
                        let a1 = f64::from(s.alpha1);
                        let a2 = f64::from(s.alpha2);
                        let want = a1 * s.u_dnn.unwrap_or(0.0) + a2 * s.u_s.unwrap_or(0.0);
                        s.u_c == Some(want)
                    }
                };
                id_ok += usize::from(e_ok && composite);
            }
        }
    }
    notes.push(format!("trace identities {id_ok}/{rows}"));

    let took = start.elapsed();
    let pass = log_ok == N
        && env_ok == N
        && latch_ok == N
        && theta_ok == N
        && id_ok == rows
        && rows >= N
        && took < Duration::from_secs(60);
    r.record(
        "C8 property suites",
        pass,
        format!("{}; {:.1} s (< 60 s)", notes.join(", "), took.as_secs_f64()),
    );
}

fn c9_oracles(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(909);

    // Plant vs closed form under constant command, F = 0.
    let mut plant_err: f64 = 0.0;
    for _ in 0..200 {
        let tau = rng.random_range(0.2..2.0);
        let params = PlantParams::new(rng.random_range(1e-4..1e-3), tau, 1500.0).unwrap();
        let n = rng.random_range(-1500.0..1500.0);
        let v0 = rng.random_range(-0.5..0.5);
        let dt = 1e-3 * tau;
        let mut s = PlantState { v: v0, t: 0.0 };
        for k in 1..=5000 {
            s = plant::step(s, &params, n, &DisturbanceProfile::None, dt).unwrap();
            let t = k as f64 * dt;
            let exact = params.k_v * n * (1.0 - (-t / tau).exp()) + v0 * (-t / tau).exp();
            plant_err = plant_err.max((s.v - exact).abs());
        }
    }
    let plant_ok = plant_err < 1e-8;

    // Adaptive law at dt vs the same law at dt/100 over 1 s, with the
    // error signal e = a·o(t)·sin(ωt + φ).
    let mut adapt_err: f64 = 0.0;
    let mut within = 0;
    let cases = 200;
    for _ in 0..cases {
        let gains = RacGains {
            k: 2000.0,
            gamma: rng.random_range(0.5..2.0),
            delta: rng.random_range(0.5..2.0),
            theta_hat0: rng.random_range(0.0..0.1),
        };
        let bound = rng.random_range(0.02..0.06);
        let o = PpcParams::new(
            bound + rng.random_range(0.01..0.08),
            bound,
            rng.random_range(0.01..0.5),
        )
        .unwrap();
        let (a, w, phi) = (
            rng.random_range(0.05..0.5),
            rng.random_range(0.5..5.0),
            rng.random_range(0.0..6.3),
        );
        let e_at = |t: f64| a * o.at(t) * (w * t + phi).sin();
        let run = |dt: f64, steps: usize| {
            let mut s = AdaptiveState::new(gains).unwrap();
            for k in 0..steps {
                let t = k as f64 * dt;
                s = adaptive_update(&s, e_at(t), o.at(t), dt).unwrap();
            }
            s.theta_hat
        };
        let d = (run(DT, 1000) - run(DT / 100.0, 100_000)).abs();
        adapt_err = adapt_err.max(d);
        within += usize::from(d <= 1e-5);
    }
    let adapt_ok = within == cases;
    r.record(
        "C9 numerical oracles",
        plant_ok && adapt_ok,
        format!(
            "plant RK4 vs closed form max err {plant_err:.1e} (< 1e-8) {}; adaptive Euler vs dt/100 \
             after 1 s: {within}/{cases} within 1e-5, max err {adapt_err:.1e} {}",
            ok(plant_ok),
            ok(adapt_ok)
        ),
    );
}

fn c10_determinism(r: &mut Report, t: &Trained, exp3: &Sim) {
    let cfg = ExperimentConfig::preset("exp3").unwrap();
    let again = simulate(t, "exp3-rerun", &cfg);
    let sim_ok = again.trace_bytes == exp3.trace_bytes
        && again.summary_bytes == exp3.summary_bytes
        && !exp3.trace_bytes.is_empty();
    let mut parts: Vec<String> = t
        .deterministic
        .iter()
        .map(|(n, b)| format!("{n} {}", ok(*b)))
        .collect();
    parts.push(format!("simulate {}", ok(sim_ok)));
    let pass = sim_ok && t.deterministic.iter().all(|d| d.1) && t.deterministic.len() == 2;
    r.record(
        "C10 determinism",
        pass,
        format!("byte-identical reruns: {}", parts.join(", ")),
    );
}

fn main() {
    // Tolerate libtest-style flags such as `--nocapture` or a filter.
    let mut r = Report { lines: Vec::new() };
    let dir = tempfile::tempdir().unwrap();

    c1_jacobian(&mut r);
    let trained = train_all(dir.path());
    c2_lm(&mut r, &trained);
    c3_training(&mut r, &trained);
    c4_exp1(&mut r, &trained);
    let exp2_trace = {
        c5_exp2(&mut r, &trained);
        trace::load(&dir.path().join("exp2-trace.csv")).unwrap_or_default()
    };
    let exp3 = c6_exp3(&mut r, &trained);
    c7_shutdown(&mut r, &trained);
    c8_properties(&mut r, &[&exp2_trace, &exp3.trace]);
    c9_oracles(&mut r);
    c10_determinism(&mut r, &trained, &exp3);

    let failed = r.lines.iter().filter(|l| !l.0).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        r.lines.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
