//! Acceptance checks, one line per criterion.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use illusion_cli::config::Parameters;
use illusion_cli::{execute, load, run_scenario, sweep, Mode, Options};
use illusion_core::caravan::*;
use illusion_core::disks::{
    disks_system, hungarian_solve, random_walk_policies, ring_poses, DiskParams, Point, Workspace,
};
use illusion_core::illusion::*;
use illusion_core::rng::stream_at;
use illusion_core::squeeze::*;
use illusion_core::system::*;
use rand::Rng;
use serde_json::Value;

/// Allowed relative size of the single tolerated trend inversion.
const TREND_SLACK: f64 = 0.02;
const CARAVAN_TOL: f64 = 1e-9;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

struct Harness {
    failures: usize,
}

impl Harness {
    fn check(&mut self, id: &str, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(v) => {
                let in_time = budget.is_none_or(|b| took < b);
                let mut detail = v.detail;
                if !in_time {
                    detail.push_str(&format!("; over budget {:.0?}", budget.unwrap()));
                }
                (v.pass && in_time, detail)
            }
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} {id:<3} {name} [{:.2}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
}

fn identity_case<S: TransitionSystem>(system: &S, policies: &[BoxedPolicy<S>], horizon: usize) -> (bool, f64, usize) {
    let trace = rollout(system, policies, horizon).unwrap();
    let witness = identity_witness(system, policies, horizon);
    let n = system.robot_count();
    let r = verify_illusion(system, &trace.states, system, &trace.states, n, &witness, 0.0).unwrap();
    let worst = r.per_step_residual.iter().copied().fold(0.0, f64::max);
    (r.pass, worst, r.measured_slowdown)
}

fn identity() -> Verdict {
    let horizon = 100;
    let caravan = CaravanParams::new(0.0, 1.0, spread_positions(4, 5.0));
    let disks = DiskParams {
        n: 3,
        workspace: Workspace {
            x_min: -1.6,
            x_max: 1.6,
            y_min: -1.0,
            y_max: 1.0,
        },
        v_wheel_max: 0.2,
        r: 0.6,
        wheelbase: 0.1,
        dt: 0.1,
        robot_radius: 0.05,
        x0: ring_poses(3, Point::new(0.0, 0.0), 0.4),
    };
    let mut notes = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let cases = [
            (
                "caravan",
                identity_case(
                    &caravan_system(caravan.clone()).unwrap(),
                    &uniform_policies(&caravan, seed),
                    horizon,
                ),
            ),
            (
                "disks",
                identity_case(
                    &disks_system(disks.clone()).unwrap(),
                    &random_walk_policies(&disks, seed),
                    horizon,
                ),
            ),
            (
                "thirds",
                identity_case(&thirds_system(), &[constant_thirds_policy(rational(1, 3))], horizon),
            ),
        ];
        for (name, (pass, worst, slowdown)) in cases {
            let good = pass && worst == 0.0 && slowdown == 1;
            ok &= good;
            if seed == 0 || !good {
                notes.push(format!("{name}: residual {worst}, slowdown {slowdown}"));
            }
        }
    }
    verdict(ok, format!("horizon {horizon}, seeds 0..3; {}", notes.join("; ")))
}

fn caravan_bound() -> Verdict {
    let sets = [
        ((0.0, 1.0), (0.0, 1.0)),
        ((0.0, 1.0), (0.0, 4.0)),
        ((0.0, 2.0), (0.0, 1.0)),
        ((-1.0, 1.0), (0.5, 1.5)),
        ((0.2, 0.7), (1.0, 1.1)),
        ((0.0, 3.0), (-1.0, 1.0)),
    ];
    let horizon = 50;
    let mut ok = true;
    let mut notes = Vec::new();
    for ((lo, hi), (plo, phi)) in sets {
        let s = CaravanParams::new(lo, hi, spread_positions(4, horizon as f64 * (hi - lo) + 10.0));
        let p = CaravanParams::new(plo, phi, vec![0.0, 1.0, 2.0]);
        let bound = caravan_slowdown_bound(&s, &p) as usize;
        let mut worst = 0;
        for seed in 0..10 {
            let run = caravan_illusion(&s, &p, &uniform_policies(&s, seed), horizon, CARAVAN_TOL).unwrap();
            ok &= run.report.pass && run.report.measured_slowdown <= bound;
            worst = worst.max(run.report.measured_slowdown);
        }
        notes.push(format!("[{lo},{hi}]/[{plo},{phi}] {worst}<={bound}"));
    }
    verdict(ok, format!("{} sets x 10 seeds: {}", sets.len(), notes.join(", ")))
}

fn composition() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for seed in 0..5 {
        let s = CaravanParams::new(0.0, 1.0, spread_positions(4, 40.0));
        let p = CaravanParams::new(0.0, 1.0, vec![0.0, 1.0, 2.0]);
        let inner = caravan_illusion(&s, &p, &uniform_policies(&s, seed), 30, CARAVAN_TOL).unwrap();
        let middle = inner.primary.params().clone();
        let outer = caravan_dilation(&middle, &inner.primary_trace, 0.25, 0.75, CARAVAN_TOL).unwrap();
        let composed = compose_witness(&outer.witness, &inner.witness).unwrap();
        let r = verify_illusion(
            &inner.secondary,
            &inner.secondary_trace.states,
            &outer.primary,
            &outer.primary_trace.states,
            1,
            &composed,
            CARAVAN_TOL,
        )
        .unwrap();
        let (tau, tau_hat) = (inner.report.measured_slowdown, outer.report.measured_slowdown);
        ok &= inner.report.pass && outer.report.pass && r.pass && r.measured_slowdown <= tau * tau_hat;
        notes.push(format!("{}<={tau}*{tau_hat}", r.measured_slowdown));
    }
    verdict(ok, format!("seeds 0..5: {}", notes.join(", ")))
}

fn round_gap(g: Gap) -> Gap {
    match g {
        Gap::Finite(d) => Gap::Finite(d.round()),
        Gap::Infinite => Gap::Infinite,
    }
}

fn coarsening() -> Verdict {
    let mut checked = 0;
    let mut ok = true;
    for seed in 0..20u64 {
        let s = CaravanParams::new(0.0, 1.0, spread_positions(4, 80.0));
        let p = CaravanParams::new(0.0, 2.0, vec![0.0, 1.0, 2.0]);
        let run = caravan_illusion(&s, &p, &uniform_policies(&s, seed), 25, CARAVAN_TOL).unwrap();
        if !run.report.pass {
            continue;
        }
        let (ss, ps, w) = (&run.secondary_trace.states, &run.primary_trace.states, &run.witness);
        let id = |y: &CaravanObservation| *y;
        let round = |y: &CaravanObservation| CaravanObservation {
            behind: round_gap(y.behind),
            ahead: round_gap(y.ahead),
        };
        let unit = |_: &CaravanObservation| ();
        let results = [
            verify_illusion(
                &coarsen_system(&run.secondary, id),
                ss,
                &coarsen_system(&run.primary, id),
                ps,
                1,
                w,
                CARAVAN_TOL,
            ),
            verify_illusion(
                &coarsen_system(&run.secondary, round),
                ss,
                &coarsen_system(&run.primary, round),
                ps,
                1,
                w,
                CARAVAN_TOL,
            ),
            verify_illusion(
                &coarsen_system(&run.secondary, unit),
                ss,
                &coarsen_system(&run.primary, unit),
                ps,
                1,
                w,
                0.0,
            ),
        ];
        for r in results {
            ok &= r.unwrap().pass;
            checked += 1;
        }
    }
    verdict(
        ok && checked == 60,
        format!("{checked} coarsened checks (20 seeds x identity/round/constant)"),
    )
}

fn squeeze_plateaus() -> Verdict {
    let run = squeeze_illusion(38, DEFAULT_P_MAX).unwrap();
    let records: Vec<_> = run
        .plateau_records()
        .into_iter()
        .filter(|r| (1..=12).contains(&r.h))
        .collect();
    let bound_ok = records.len() == 12 && records.iter().all(|r| r.plateau_len as u64 >= r.lower_bound);
    let mut max = 0;
    let mut increasing = true;
    for r in &records {
        increasing &= r.plateau_len > max;
        max = max.max(r.plateau_len);
    }
    let lens: Vec<_> = records.iter().map(|r| r.plateau_len).collect();
    verdict(
        run.report.pass && bound_ok && increasing,
        format!("plateaus h=1..12 {lens:?} vs floor(3h/2); running max strictly increasing: {increasing}"),
    )
}

fn n_t_values() -> Vec<(u64, u64)> {
    [1, 5, 10, 20]
        .iter()
        .map(|&t| (t, find_n_t(t, DEFAULT_P_MAX).unwrap() as u64))
        .collect()
}

fn n_t_closed() -> Verdict {
    let vals = n_t_values();
    let ok = vals.iter().all(|&(t, n)| n <= n_t_closed_form(t));
    let notes: Vec<_> = vals
        .iter()
        .map(|&(t, n)| format!("T={t}: N={n} vs {}", n_t_closed_form(t)))
        .collect();
    verdict(ok, format!("ceil(2T/3)+3: {}", notes.join(", ")))
}

fn n_t_corrected() -> Verdict {
    let vals = n_t_values();
    let ok = vals.iter().all(|&(t, n)| n <= n_t_from_plateau_bound(t));
    let notes: Vec<_> = vals
        .iter()
        .map(|&(t, n)| format!("T={t}: N={n} vs {}", n_t_from_plateau_bound(t)))
        .collect();
    verdict(ok, format!("3h_T+1: {}", notes.join(", ")))
}

fn brute_force(cost: &[Vec<f64>]) -> f64 {
    fn walk(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                walk(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(cost, 0, &mut vec![false; cost[0].len()], 0.0, &mut best);
    best
}

fn hungarian() -> Verdict {
    let mut worst = 0.0f64;
    let mut ok = true;
    for i in 0..200u64 {
        let mut rng = stream_at(0xACCE, i, 0);
        let n = 2 + (i as usize % 6);
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let got = hungarian_solve(&cost).unwrap();
        let want = brute_force(&cost);
        let err = (got.cost - want).abs();
        worst = worst.max(err);
        let mut cols = got.columns.clone();
        cols.sort_unstable();
        ok &= err <= 1e-9 * want.abs().max(1.0) && cols == (0..n).collect::<Vec<_>>();
    }
    verdict(
        ok,
        format!("200 matrices, sizes 2..=7, worst |cost - brute| = {worst:e}"),
    )
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Mean total primary steps by strategy, one entry per robot count.
fn disks_report() -> Value {
    let cfg = load(&shipped("disks.json"), None).unwrap();
    let Parameters::Disks(exp) = &cfg.parameters else {
        panic!("disks config expected")
    };
    assert_eq!((exp.trials, exp.horizon), (10, 200));
    let outcome = execute(&cfg, Mode::Sweep, 0).unwrap();
    assert!(outcome.pass, "a disks cell failed verification");
    outcome.report
}

fn series(report: &Value, strategy: &str) -> Vec<(u64, f64)> {
    report["means"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|m| m["strategy"] == strategy)
        .map(|m| {
            (
                m["n_primary"].as_u64().unwrap(),
                m["mean_primary_steps"].as_f64().unwrap(),
            )
        })
        .collect()
}

fn show(s: &[(u64, f64)]) -> String {
    s.iter().map(|(n, v)| format!("{n}:{v}")).collect::<Vec<_>>().join(" ")
}

/// Monotone up to one step against the trend of relative size at most the slack.
fn monotone(values: &[f64], increasing: bool) -> (bool, Vec<f64>) {
    let inversions: Vec<f64> = values
        .windows(2)
        .filter_map(|w| {
            let against = if increasing { w[0] - w[1] } else { w[1] - w[0] };
            (against > 0.0).then(|| against / w[0])
        })
        .collect();
    let ok = inversions.is_empty() || (inversions.len() == 1 && inversions[0] <= TREND_SLACK);
    (ok, inversions)
}

fn trend_order(report: &Value) -> Verdict {
    let (naive, hung, heur) = (
        series(report, "naive"),
        series(report, "hungarian"),
        series(report, "heuristic"),
    );
    let ok = naive.len() == 5
        && naive
            .iter()
            .zip(&hung)
            .zip(&heur)
            .all(|((a, b), c)| a.0 == b.0 && b.0 == c.0 && a.1 >= b.1 && b.1 >= c.1);
    verdict(
        ok,
        format!(
            "naive {} | hungarian {} | heuristic {}",
            show(&naive),
            show(&hung),
            show(&heur)
        ),
    )
}

fn trend_heuristic(report: &Value) -> Verdict {
    let s = series(report, "heuristic");
    let (ok, inv) = monotone(&s.iter().map(|p| p.1).collect::<Vec<_>>(), false);
    verdict(ok, format!("heuristic {}; inversions {inv:?}", show(&s)))
}

fn trend_hungarian(report: &Value) -> Verdict {
    let s = series(report, "hungarian");
    let (ok, inv) = monotone(&s.iter().map(|p| p.1).collect::<Vec<_>>(), true);
    verdict(ok, format!("hungarian {}; inversions {inv:?}", show(&s)))
}

fn heuristic_slowdown(report: &Value) -> Verdict {
    let h = &report["heuristic_slowdown"];
    let finite = h["finite"] == true && h["mean"].as_f64().is_some_and(f64::is_finite) && h["max"].as_u64().is_some();
    verdict(
        finite,
        format!("heuristic slowdown max {} mean {}", h["max"], h["mean"]),
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let tmp = std::env::temp_dir().join(format!("illusion-acceptance-{}", std::process::id()));
    let mut configs: Vec<PathBuf> = fs::read_dir(shipped(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    configs.sort();
    let mut ok = !configs.is_empty();
    let mut mismatched = Vec::new();
    for cfg in &configs {
        let name = cfg.file_stem().unwrap().to_string_lossy().into_owned();
        for (mode, runner) in [("run", run_scenario as fn(&Path, &Options) -> _), ("sweep", sweep)] {
            let mut outputs = Vec::new();
            for (rep, jobs) in [(0, 1), (1, 4), (2, 4)] {
                let out = tmp.join(format!("{name}-{mode}-{rep}"));
                let opts = Options {
                    out: Some(out.clone()),
                    jobs,
                    seed: None,
                };
                runner(cfg, &opts).unwrap();
                outputs.push(read_dir_bytes(&out));
            }
            if outputs.iter().any(|o| o != &outputs[0]) {
                ok = false;
                mismatched.push(format!("{name}/{mode}"));
            }
        }
    }
    let _ = fs::remove_dir_all(&tmp);
    verdict(
        ok,
        format!(
            "{} configs x run/sweep x (jobs 1, 4, 4) byte-identical; mismatches {mismatched:?}",
            configs.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut h = Harness { failures: 0 };
    let secs = Duration::from_secs;
    h.check("1", "identity witness on caravan/disks/thirds", Some(secs(1)), identity);
    h.check(
        "2",
        "caravan slowdown within ceil(2 span/span_hat)",
        Some(secs(5)),
        caravan_bound,
    );
    h.check(
        "3",
        "composed witness slowdown <= tau*tau_hat",
        Some(secs(10)),
        composition,
    );
    h.check("4", "witnesses survive coarsening", None, coarsening);
    // one budget for the whole of 5
    let start = Instant::now();
    h.check(
        "5a",
        "squeeze plateaus >= floor(3h/2), max increasing",
        Some(secs(30)),
        squeeze_plateaus,
    );
    h.check(
        "5b",
        "find_N_T(T) <= ceil(2T/3)+3",
        Some(secs(30).saturating_sub(start.elapsed())),
        n_t_closed,
    );
    h.check("5c", "find_N_T(T) <= 3h_T+1 (corrected bound)", None, n_t_corrected);
    h.check("6", "hungarian matches brute force", Some(secs(5)), hungarian);

    let start = Instant::now();
    let report = catch_unwind(disks_report);
    let disk_time = start.elapsed();
    let budget = secs(120);
    match report {
        Ok(report) => {
            let within = |v: Verdict| {
                let over = disk_time >= budget;
                verdict(
                    v.pass && !over,
                    format!("{}; experiment took {:.2}s", v.detail, disk_time.as_secs_f64()),
                )
            };
            h.check("7a", "mean steps naive >= hungarian >= heuristic", None, || {
                within(trend_order(&report))
            });
            h.check("7b", "heuristic mean non-increasing in team size", None, || {
                within(trend_heuristic(&report))
            });
            h.check("7c", "hungarian mean non-decreasing in team size", None, || {
                within(trend_hungarian(&report))
            });
            h.check("8", "heuristic slowdown finite and reported", None, || {
                heuristic_slowdown(&report)
            });
        }
        Err(_) => {
            for (id, name) in [
                ("7a", "trend order"),
                ("7b", "heuristic trend"),
                ("7c", "hungarian trend"),
                ("8", "heuristic slowdown"),
            ] {
                h.check(id, name, None, || verdict(false, "disks experiment did not complete"));
            }
        }
    }
    h.check(
        "9",
        "artifacts byte-identical across runs and --jobs",
        None,
        determinism,
    );

    println!("{} failing", h.failures);
    if h.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
