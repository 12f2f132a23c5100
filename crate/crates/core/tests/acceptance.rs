//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rmline_core::bench::{
    generate, greedy_online, mean_ratio, run_experiment, to_csv_string, Arithmetic, ExperimentConfig, GeneratorKind,
};
use rmline_core::engine::{min_tnet_cost_path, PathClass, RmEngine, RunTrace};
use rmline_core::offline::{exact_min_cost_matching, interval_decomposition_cost, optimal_line_matching};
use rmline_core::verify::{brute_force_min_path, check_all_lemmas, check_invariants};
use rmline_core::{matching_cost, run_online, EngineOptions, Instance, Scalar};

struct Outcome {
    pass: bool,
    note: String,
}

fn outcome(pass: bool, note: impl Into<String>) -> Outcome {
    Outcome { pass, note: note.into() }
}

fn within(elapsed: Duration, budget: Duration) -> bool {
    elapsed < budget
}

/// 6 w(M_H) >= w(M) with t = 3, recomputed from the trace.
fn short_split_holds(tr: &RunTrace<Scalar>) -> bool {
    let short: Scalar = tr
        .phases
        .iter()
        .filter(|p| p.class == PathClass::Short)
        .map(|p| tr.instance.distance(p.server, p.request).unwrap())
        .sum();
    Scalar::from(6) * short >= tr.online_cost
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (mut phases, mut bad) = (0usize, Vec::new());
    for kind in [GeneratorKind::Uniform, GeneratorKind::PerturbedPermutation] {
        for seed in 0..250u64 {
            let n = 1 + (seed as usize % 7);
            let inst = generate(kind, n, seed).unwrap();
            let t = inst.t().clone();
            let mut eng = RmEngine::<Scalar>::new(&inst, EngineOptions { detailed: false });
            while let Some(r) = eng.next_request() {
                let oracle = brute_force_min_path(&inst, eng.state(), r, &t).unwrap();
                let mut probe = eng.state().clone();
                let found = min_tnet_cost_path(&mut probe, eng.costs(), r, &t).unwrap();
                phases += 1;
                if found.path.t_net_cost != oracle.t_net_cost || found.path.edge_count() != oracle.edge_count() {
                    bad.push(format!("{kind} n{n} s{seed} r{r}"));
                }
                eng.process_request(r).unwrap();
            }
        }
    }
    let el = start.elapsed();
    outcome(
        bad.is_empty() && within(el, Duration::from_secs(60)),
        format!("500 instances, {phases} phases, {} mismatches {:?}, {:.1?}", bad.len(), bad.first(), el),
    )
}

fn criterion_2(split_failures: &mut Vec<String>) -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    for i in 0..1000u64 {
        let kind = GeneratorKind::ALL[i as usize % 3];
        let n = 2 + (i as usize * 37) % 63;
        let tr = run_online(&generate(kind, n, i).unwrap()).unwrap();
        let rep = check_invariants(&tr);
        if !rep.passed {
            bad.push(format!("{kind} n{n} s{i}: {:?}", rep.failed().iter().map(|c| c.name).collect::<Vec<_>>()));
        }
        if !short_split_holds(&tr) {
            split_failures.push(format!("{kind} n{n} s{i}"));
        }
    }
    let el = start.elapsed();
    outcome(
        bad.is_empty() && within(el, Duration::from_secs(300)),
        format!("1000 instances n in 2..=64, {} failing {:?}, {:.1?}", bad.len(), bad.first(), el),
    )
}

fn criterion_3(split_failures: &mut Vec<String>) -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    for i in 0..200u64 {
        let kind = GeneratorKind::ALL[i as usize % 3];
        let n = 4 + (i as usize * 29) % 61;
        let tr = run_online(&generate(kind, n, 10_000 + i).unwrap()).unwrap();
        let rep = check_all_lemmas(&tr);
        if !rep.passed {
            bad.push(format!("{kind} n{n}: {:?}", rep.failed().iter().map(|c| c.name).collect::<Vec<_>>()));
        }
        if !short_split_holds(&tr) {
            split_failures.push(format!("{kind} n{n} s{}", 10_000 + i));
        }
    }
    outcome(bad.is_empty(), format!("200 instances n in 4..=64, {} failing {:?}, {:.1?}", bad.len(), bad.first(), start.elapsed()))
}

fn criterion_4(split_failures: &[String]) -> Outcome {
    outcome(
        split_failures.is_empty(),
        format!("1200 runs from criteria 2 and 3, {} violations {:?}", split_failures.len(), split_failures.first()),
    )
}

/// Minimum over all n! assignments, by direct enumeration.
fn permutation_minimum(d: &[Vec<Scalar>]) -> Scalar {
    fn go(d: &[Vec<Scalar>], r: usize, used: &mut [bool], acc: Scalar, best: &mut Option<Scalar>) {
        if r == d.len() {
            if best.as_ref().is_none_or(|b| acc < *b) {
                *best = Some(acc);
            }
            return;
        }
        for s in 0..d.len() {
            if !used[s] {
                used[s] = true;
                go(d, r + 1, used, &acc + &d[s][r], best);
                used[s] = false;
            }
        }
    }
    let mut best = None;
    go(d, 0, &mut vec![false; d.len()], Scalar::zero(), &mut best);
    best.unwrap()
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (mut bad, mut enumerated) = (Vec::new(), 0);
    for i in 0..500u64 {
        let kind = GeneratorKind::ALL[i as usize % 3];
        let n = 1 + (i as usize * 13) % 64;
        let inst = generate(kind, n, 20_000 + i).unwrap();
        let sorted = matching_cost(&inst, &optimal_line_matching(&inst).unwrap()).unwrap();
        let (decomp, _) = interval_decomposition_cost(&inst).unwrap();
        let hungarian = matching_cost(&inst, &exact_min_cost_matching(&inst)).unwrap();
        let mut ok = sorted == decomp && decomp == hungarian;
        if n <= 7 {
            enumerated += 1;
            ok &= permutation_minimum(&inst.cost_matrix()) == sorted;
        }
        if !ok {
            bad.push(format!("{kind} n{n}"));
        }
    }
    outcome(
        bad.is_empty(),
        format!("500 instances ({enumerated} also enumerated), {} disagreements {:?}, {:.1?}", bad.len(), bad.first(), start.elapsed()),
    )
}

fn criterion_6() -> Outcome {
    let sc = |v: &str| v.parse::<Scalar>().unwrap();
    let w1 = Instance::line_from_strs(&["0", "10"], &["1", "2"], "3").unwrap();
    let w2 = Instance::line_from_strs(&["0", "100"], &["1", "1/2"], "3").unwrap();
    let t1 = run_online(&w1).unwrap();
    let t2 = run_online(&w2).unwrap();
    let opt1 = matching_cost(&w1, &exact_min_cost_matching(&w1)).unwrap();
    let p2 = &t2.phases[1].path;
    let pass = t1.online_cost == sc("9") && opt1 == sc("9") && t2.online_cost == sc("201/2") && p2.t_net_cost == sc("595/2")
        && p2.edge_count() == 3;
    outcome(
        pass,
        format!(
            "W1 w(M)={} w_opt={}; W2 w(M)={} phase-2 phi={} over {} edges",
            t1.online_cost, opt1, t2.online_cost, p2.t_net_cost, p2.edge_count()
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let exact = ExperimentConfig {
        kinds: vec![GeneratorKind::Uniform],
        n_values: vec![16, 32, 64, 128, 256],
        seeds: 50,
        t: Scalar::from(3),
        arithmetic: Arithmetic::Exact,
        verify: false,
        output: None,
    };
    let float = ExperimentConfig { n_values: vec![512, 1024], arithmetic: Arithmetic::Float, ..exact.clone() };
    let mut rows = run_experiment(&exact).unwrap();
    rows.extend(run_experiment(&float).unwrap());
    let ns = [16usize, 32, 64, 128, 256, 512, 1024];
    let means: Vec<f64> = ns.iter().map(|&n| mean_ratio(&rows, n).unwrap()).collect();
    let mut growth = Vec::new();
    let mut pass = true;
    for k in 0..ns.len() - 1 {
        let g = means[k + 1] / means[k];
        growth.push(format!("{}->{}: {g:.3}", ns[k], ns[k + 1]));
        if ns[k] >= 128 && g > 1.5 {
            pass = false;
        }
    }
    let el = start.elapsed();
    let table: Vec<String> = ns.iter().zip(&means).map(|(n, m)| format!("{n}:{m:.3}")).collect();
    outcome(
        pass && within(el, Duration::from_secs(1800)),
        format!("mean ratios [{}]; growth [{}]; {:.1?}", table.join(" "), growth.join(", "), el),
    )
}

fn criterion_8() -> Outcome {
    let (mut greedy, mut rm) = (0.0, 0.0);
    for seed in 0..20u64 {
        let inst = generate(GeneratorKind::ClusterGap, 64, seed).unwrap();
        let opt = matching_cost(&inst, &optimal_line_matching(&inst).unwrap()).unwrap().to_f64();
        greedy += matching_cost(&inst, &greedy_online(&inst).unwrap()).unwrap().to_f64() / opt;
        rm += run_online(&inst).unwrap().online_cost.to_f64() / opt;
    }
    let (greedy, rm) = (greedy / 20.0, rm / 20.0);
    outcome(greedy >= 2.0 * rm, format!("cluster-gap n=64, 20 seeds: greedy {greedy:.2} vs engine {rm:.2} (x{:.1})", greedy / rm))
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_rmline");
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    std::fs::write(
        p("cfg.json"),
        r#"{"kinds":["uniform","perturbed-permutation","cluster-gap"],"n_values":[8,24],"seeds":4,"verify":true}"#,
    )
    .unwrap();
    let run = |args: &[&std::ffi::OsStr]| {
        let out = Command::new(bin).args(args).output().unwrap();
        (out.status.code(), out.stdout)
    };
    let os = |s: &str| std::ffi::OsString::from(s);
    let mut same = true;
    let mut notes = Vec::new();

    for tag in ["a", "b"] {
        let out = p(&format!("{tag}.csv"));
        run(&[&os("experiment"), &os("--config"), p("cfg.json").as_os_str(), &os("--out"), out.as_os_str()]);
        let inst = p(&format!("{tag}.json"));
        run(&[&os("gen"), &os("--kind"), &os("uniform"), &os("--n"), &os("12"), &os("--seed"), &os("5"), &os("--out"), inst.as_os_str()]);
    }
    let csv_a = std::fs::read(p("a.csv")).unwrap();
    same &= csv_a == std::fs::read(p("b.csv")).unwrap() && !csv_a.is_empty();
    same &= std::fs::read(p("a.json")).unwrap() == std::fs::read(p("b.json")).unwrap();
    notes.push(format!("csv {} bytes", csv_a.len()));

    let (c1, v1) = run(&[&os("verify"), &os("--instance"), p("a.json").as_os_str()]);
    let (c2, v2) = run(&[&os("verify"), &os("--instance"), p("a.json").as_os_str()]);
    same &= v1 == v2 && c1 == Some(0) && c2 == Some(0);
    notes.push(format!("verify report {} bytes", v1.len()));

    for tag in ["a", "b"] {
        let tr = p(&format!("trace-{tag}.json"));
        run(&[&os("run"), &os("--instance"), p("a.json").as_os_str(), &os("--emit-trace"), tr.as_os_str()]);
    }
    same &= std::fs::read(p("trace-a.json")).unwrap() == std::fs::read(p("trace-b.json")).unwrap();

    let lib_csv = to_csv_string(&run_experiment(&ExperimentConfig::from_json(&std::fs::read_to_string(p("cfg.json")).unwrap()).unwrap()).unwrap()).unwrap();
    same &= lib_csv.as_bytes() == csv_a.as_slice();
    outcome(same, notes.join(", "))
}

fn main() -> ExitCode {
    let mut split_failures = Vec::new();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 oracle equivalence", criterion_1()),
        ("2 invariant suite", criterion_2(&mut split_failures)),
        ("3 lemma suite", criterion_3(&mut split_failures)),
        ("4 t=3 cost split", criterion_4(&split_failures)),
        ("5 offline oracle agreement", criterion_5()),
        ("6 worked traces", criterion_6()),
        ("7 logarithmic growth", criterion_7()),
        ("8 greedy contrast", criterion_8()),
        ("9 determinism", criterion_9()),
    ];
    let mut all = true;
    for (name, o) in &results {
        all &= o.pass;
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.note);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
