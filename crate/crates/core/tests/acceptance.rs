//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use nlconsensus::bifurcation::bifurcation_sweep;
use nlconsensus::dynamics::{check_hypercube_invariance, check_order_preservation, integrate, rhs, IntegrationSettings};
use nlconsensus::equilibrium::{find_equilibria, nfse_conditions, nfse_feasibility, EquilibriumReport, SeedPlan};
use nlconsensus::experiment::{karate_fig5, KarateRun};
use nlconsensus::signal::find_fixed_points;
use nlconsensus::spectral::normalized_spectrum;
use nlconsensus::{Graph, SignalFunction, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------- independent oracles ----------

fn dense_adjacency(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    DMatrix::from_fn(n, n, |i, j| if g.has_edge(i, j) { 1.0 } else { 0.0 })
}

/// Ascending eigenvalues and eigenvectors of D^-1/2 A D^-1/2 from nalgebra.
fn oracle_eigen(g: &Graph) -> (Vec<f64>, DMatrix<f64>) {
    let n = g.n();
    let a = dense_adjacency(g);
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])] / d[r].sqrt());
    (values, vectors)
}

/// `||x - xbar 1||_D` with the degree-weighted mean.
fn oracle_disagreement(g: &Graph, x: &[f64]) -> f64 {
    let d: Vec<f64> = (0..g.n()).map(|i| g.degree(i) as f64).collect();
    let total: f64 = d.iter().sum();
    let mean = x.iter().zip(&d).map(|(xi, di)| xi * di).sum::<f64>() / total;
    x.iter()
        .zip(&d)
        .map(|(xi, di)| di * (xi - mean).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn random_graph(rng: &mut ChaCha8Rng, accept: impl Fn(&[f64]) -> bool) -> Graph {
    loop {
        let n = rng.gen_range(4..=8);
        let p = rng.gen_range(0.1..0.6);
        let g = Graph::random_connected(n, p, rng).expect("random graph");
        if accept(&oracle_eigen(&g).0) {
            return g;
        }
    }
}

// ---------- criteria ----------

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let g = Topology::Line(5).build().unwrap();
    let spec = normalized_spectrum(&g).unwrap();
    // path on N vertices: cos(pi k / (N - 1))
    let mut closed: Vec<f64> = (0..5).map(|k| (std::f64::consts::PI * k as f64 / 4.0).cos()).collect();
    closed.sort_by(f64::total_cmp);
    let (dense, _) = oracle_eigen(&g);
    let err_closed = spec.eigenvalues.iter().zip(&closed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let err_dense = spec.eigenvalues.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let t = start.elapsed();
    verdict(
        err_closed < 1e-9 && err_dense < 1e-9 && t < Duration::from_secs(1),
        format!("max error vs closed form {err_closed:.2e}, vs dense solver {err_dense:.2e}, {:.3}s", secs(t)),
    )
}

fn criteria_2_3() -> (Verdict, Verdict) {
    let start = Instant::now();
    let g = Topology::Line(5).build().unwrap();
    let s = SignalFunction::tanh_gain(1.0).unwrap();
    let sweep = bifurcation_sweep(&g, &s, 0.5, 3.5, 0.01);
    let t = start.elapsed();
    let fast = t < Duration::from_secs(30);
    match sweep {
        Ok(d) => {
            let bif = d.detected_k_bif;
            let stab = d.detected_k_stab;
            (
                verdict(
                    fast && bif.map_or(false, |k| (1.404..=1.424).contains(&k)),
                    format!("detected_k_bif = {bif:?}, sweep {:.2}s", secs(t)),
                ),
                verdict(
                    fast && stab.map_or(false, |k| (2.453..=2.473).contains(&k)),
                    format!("detected_k_stab = {stab:?}, sweep {:.2}s", secs(t)),
                ),
            )
        }
        Err(e) => (
            verdict(false, format!("sweep failed: {e}")),
            verdict(false, format!("sweep failed: {e}")),
        ),
    }
}

fn criterion_4(fse: &mut Vec<EquilibriumReport>) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut nfse_found = 0;
    let mut worst_residual = 0.0_f64;
    let mut errors = Vec::new();
    for i in 0..50 {
        let g = random_graph(&mut rng, |ev| ev[ev.len() - 2] > 1e-9);
        let (values, vectors) = oracle_eigen(&g);
        let n = g.n();
        let lambda = values[n - 2];

        let below = SignalFunction::clip_linear(0.95 / lambda).unwrap();
        match find_equilibria(&g, &below, &SeedPlan::with_random(1024, 1000 + i)) {
            Ok(search) => {
                nfse_found += search.nfse().count();
                fse.extend(search.equilibria.into_iter().filter(|e| e.is_fse()));
            }
            Err(e) => errors.push(format!("graph {i}: {e}")),
        }

        let k = 1.0 / lambda;
        let at = SignalFunction::clip_linear(k).unwrap();
        let v: Vec<f64> = (0..n).map(|r| vectors[(r, n - 2)]).collect();
        let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let eps = 0.5 / k;
        let x: Vec<f64> = v.iter().map(|vi| eps * vi / scale).collect();
        let r = rhs(&g, &at, &x).unwrap().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        worst_residual = worst_residual.max(r);
    }
    let t = start.elapsed();
    verdict(
        nfse_found == 0 && errors.is_empty() && worst_residual < 1e-12 && t < Duration::from_secs(300),
        format!(
            "NFSE below threshold: {nfse_found}; max residual of eps v at threshold {worst_residual:.2e}; errors {errors:?}; {:.1}s",
            secs(t)
        ),
    )
}

fn criterion_5(fse: &mut Vec<EquilibriumReport>) -> Verdict {
    let start = Instant::now();
    let mut graphs: Vec<Topology> = (4..=8).map(Topology::Complete).collect();
    for p in 2..=4 {
        for q in 2..=4 {
            graphs.push(Topology::CompleteBipartite(p, q));
        }
    }
    let mut nfse = Vec::new();
    let mut errors = Vec::new();
    for (i, top) in graphs.iter().enumerate() {
        let g = top.build().unwrap();
        for k in [2.0, 5.0, 10.0] {
            let s = SignalFunction::clip_linear(k).unwrap();
            match find_equilibria(&g, &s, &SeedPlan::with_random(256, 500 + i as u64)) {
                Ok(search) => {
                    if search.nfse().count() > 0 {
                        nfse.push(format!("{top} K={k}"));
                    }
                    fse.extend(search.equilibria.into_iter().filter(|e| e.is_fse()));
                }
                Err(e) => errors.push(format!("{top} K={k}: {e}")),
            }
        }
    }
    let t = start.elapsed();
    verdict(
        nfse.is_empty() && errors.is_empty() && t < Duration::from_secs(120),
        format!("graphs with NFSE: {nfse:?}; errors {errors:?}; {:.1}s", secs(t)),
    )
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = Vec::new();
    let mut worst = 0.0_f64;
    for run in 0..20 {
        let g = random_graph(&mut rng, |ev| {
            let m = ev[..ev.len() - 1].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            m < 0.99
        });
        let (values, _) = oracle_eigen(&g);
        let max_abs = values[..g.n() - 1].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let k = 0.9 / max_abs;
        let s = if run % 2 == 0 {
            SignalFunction::tanh_gain(k).unwrap()
        } else {
            SignalFunction::clip_linear(k).unwrap()
        };
        let rate = 1.0 - k * max_abs;
        let x0: Vec<f64> = (0..g.n()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let traj = integrate(&g, &s, &x0, &IntegrationSettings::default()).unwrap();
        let e0 = oracle_disagreement(&g, &traj.states[0]);
        for (t, x) in traj.times.iter().zip(&traj.states) {
            let e = oracle_disagreement(&g, x);
            let bound = e0 * (-rate * t).exp();
            if bound > 0.0 {
                worst = worst.max(e / bound);
            }
            if e > bound * (1.0 + 1e-6) {
                violations.push(format!("run {run} t={t}"));
                break;
            }
        }
    }
    let t = start.elapsed();
    verdict(
        violations.is_empty(),
        format!("violations {violations:?}; max ratio to envelope {worst:.4}; {:.1}s", secs(t)),
    )
}

fn criteria_7_8() -> (Verdict, Verdict) {
    let mut runs: Vec<KarateRun> = Vec::new();
    let mut slowest = Duration::ZERO;
    let mut errors = Vec::new();
    for seed in 0..10 {
        let start = Instant::now();
        match karate_fig5(seed, &IntegrationSettings::default()) {
            Ok(o) => runs.push(o.run),
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
        slowest = slowest.max(start.elapsed());
    }
    let ok7 = |r: &KarateRun| {
        !r.equilibrium.is_fse() && r.sign_agreement >= 33 && r.intra_spread < 0.2 && r.inter_gap > 0.5
    };
    let good7 = runs.iter().filter(|r| ok7(r)).count();
    let fse = runs.iter().filter(|r| r.equilibrium.is_fse()).count();
    let worst_agreement = runs.iter().map(|r| r.sign_agreement).min();
    let c7 = verdict(
        errors.is_empty() && good7 == 10 && slowest < Duration::from_secs(30),
        format!(
            "{good7}/10 seeds reach a faction-matching NFSE ({fse} end synchronized); min sign agreement {worst_agreement:?}/34; slowest {:.2}s; errors {errors:?}",
            secs(slowest)
        ),
    );
    let ok8 = |r: &KarateRun| {
        r.clusters.len() == 2
            && r.clusters
                .iter()
                .all(|c| c.holds_at_all_samples == Some(true) && c.tail_within_ultimate_bound == Some(true))
    };
    let good8 = runs.iter().filter(|r| ok8(r)).count();
    let c8 = verdict(
        errors.is_empty() && good8 == 10,
        format!("ISS inequality and tail bound hold for both factions in {good8}/10 runs"),
    );
    (c7, c8)
}

fn example_pwl() -> SignalFunction {
    // three stable and two unstable fixed points
    SignalFunction::piecewise_linear(vec![
        (-1.0, -1.0),
        (-0.7, -0.9),
        (-0.4, 0.0),
        (0.4, 0.0),
        (0.7, 0.9),
        (1.0, 1.0),
    ])
    .unwrap()
}

fn random_monotone_pwl(rng: &mut ChaCha8Rng) -> SignalFunction {
    loop {
        let m = rng.gen_range(1..8);
        let mut xs: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.999..0.999)).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let mut px = vec![-1.0];
        px.extend(xs);
        px.push(1.0);
        let mut ys: Vec<f64> = (0..px.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        ys.sort_by(f64::total_cmp);
        if let Ok(s) = SignalFunction::piecewise_linear(px.into_iter().zip(ys).collect()) {
            return s;
        }
    }
}

fn builtin_families() -> Vec<SignalFunction> {
    vec![
        SignalFunction::tanh_gain(0.7).unwrap(),
        SignalFunction::tanh_gain(2.5).unwrap(),
        SignalFunction::clip_linear(1.0).unwrap(),
        SignalFunction::clip_linear(1.2).unwrap(),
        SignalFunction::sine_staircase(),
        example_pwl(),
    ]
}

fn criterion_9(fse: &[EquilibriumReport]) -> Verdict {
    let start = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let graphs: Vec<Graph> = ["line:5", "ring:6", "star:5", "karate", "complete_bipartite:2,3"]
        .iter()
        .map(|t| t.parse::<Topology>().unwrap().build().unwrap())
        .collect();
    let families = builtin_families();
    let short = IntegrationSettings {
        dt: 0.01,
        t_end: 20.0,
        record_every: 10,
    };

    // cooperativity
    let mut disordered = 0;
    for pair in 0..200 {
        let g = &graphs[pair % graphs.len()];
        let s = &families[pair % families.len()];
        let low: Vec<f64> = (0..g.n()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let high: Vec<f64> = low.iter().map(|v| (v + rng.gen_range(0.0..0.5)).min(1.0)).collect();
        if !check_order_preservation(g, s, &low, &high, &short).unwrap().ordered {
            disordered += 1;
        }
    }
    if disordered > 0 {
        failures.push(format!("{disordered}/200 pairs lost their order"));
    }

    // hypercube invariance between successive fixed points
    let mut boxes = 0;
    for s in &families {
        let mut ends: Vec<f64> = Vec::new();
        for rec in find_fixed_points(s).unwrap() {
            ends.push(rec.lo());
            ends.push(rec.hi());
        }
        ends.dedup();
        for w in ends.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 1e-12 {
                continue;
            }
            for g in &graphs {
                boxes += 1;
                let x0: Vec<f64> = (0..g.n()).map(|_| rng.gen_range(a..=b)).collect();
                let traj = integrate(g, s, &x0, &short).unwrap();
                match check_hypercube_invariance(&traj, s, a, b) {
                    Ok(true) => {}
                    other => failures.push(format!("box [{a}, {b}] for {}: {other:?}", s.spec())),
                }
            }
        }
    }

    // every admissible signal has a stable fixed point
    let mut generated = families.clone();
    for _ in 0..300 {
        generated.push(random_monotone_pwl(&mut rng));
    }
    for _ in 0..50 {
        generated.push(SignalFunction::tanh_gain(rng.gen_range(0.1..8.0)).unwrap());
        generated.push(SignalFunction::clip_linear(rng.gen_range(0.1..8.0)).unwrap());
    }
    let without_stable = generated
        .iter()
        .filter(|s| !find_fixed_points(s).unwrap().iter().any(|r| r.is_stable()))
        .count();
    if without_stable > 0 {
        failures.push(format!("{without_stable} signals without a stable fixed point"));
    }

    // synchronized equilibria: scalar class agrees with the Jacobian
    let disagreeing = fse.iter().filter(|e| e.consistent_with_scalar == Some(false)).count();
    let unchecked = fse.iter().filter(|e| e.consistent_with_scalar.is_none()).count();
    if disagreeing > 0 {
        failures.push(format!("{disagreeing} synchronized equilibria disagree with the scalar class"));
    }

    // at most three agents: only synchronized equilibria
    let small: Vec<Graph> = ["line:2", "line:3", "ring:3"]
        .iter()
        .map(|t| t.parse::<Topology>().unwrap().build().unwrap())
        .collect();
    let mut small_signals = families.clone();
    for k in [0.5, 3.0, 10.0] {
        small_signals.push(SignalFunction::tanh_gain(k).unwrap());
        small_signals.push(SignalFunction::clip_linear(k).unwrap());
    }
    for g in &small {
        for (i, s) in small_signals.iter().enumerate() {
            let search = find_equilibria(g, s, &SeedPlan::with_random(256, 90 + i as u64)).unwrap();
            if search.nfse().count() > 0 {
                failures.push(format!("NFSE on {} agents with {}", g.n(), s.spec()));
            }
        }
    }

    // necessary conditions hold at every NFSE found; impossible for the staircase
    let mut checked_nfse = 0;
    let cases = [
        ("line:5", SignalFunction::tanh_gain(3.0).unwrap()),
        ("line:8", SignalFunction::clip_linear(2.0).unwrap()),
        ("ring:8", SignalFunction::tanh_gain(4.0).unwrap()),
        ("karate", SignalFunction::clip_linear(2.0).unwrap()),
        ("line:5", example_pwl()),
    ];
    for (i, (top, s)) in cases.iter().enumerate() {
        let g = top.parse::<Topology>().unwrap().build().unwrap();
        let search = find_equilibria(&g, s, &SeedPlan::with_random(128, 70 + i as u64)).unwrap();
        for e in search.nfse() {
            checked_nfse += 1;
            match nfse_conditions(&g, s, &e.state) {
                Ok(r) if r.overall_pass => {}
                other => failures.push(format!("conditions fail at an NFSE on {top}: {other:?}")),
            }
        }
    }
    if checked_nfse == 0 {
        failures.push("no NFSE found to check".into());
    }
    let stair = SignalFunction::sine_staircase();
    if nfse_feasibility(&stair).unwrap().possible {
        failures.push("staircase reported as able to sustain NFSE".into());
    }
    for g in &graphs {
        let search = find_equilibria(g, &stair, &SeedPlan::with_random(128, 7)).unwrap();
        if search.nfse().count() > 0 {
            failures.push(format!("staircase NFSE on {} agents", g.n()));
        }
    }

    let t = start.elapsed();
    verdict(
        failures.is_empty() && t < Duration::from_secs(600),
        format!(
            "{boxes} boxes, {} signals, {} FSE checked ({unchecked} without a scalar verdict), {checked_nfse} NFSE checked; failures {failures:?}; {:.1}s",
            generated.len(),
            fse.len(),
            secs(t)
        ),
    )
}

fn main() {
    let mut fse = Vec::new();
    let mut results: Vec<(usize, Verdict)> = Vec::new();
    results.push((1, criterion_1()));
    let (c2, c3) = criteria_2_3();
    results.push((2, c2));
    results.push((3, c3));
    results.push((4, criterion_4(&mut fse)));
    results.push((5, criterion_5(&mut fse)));
    results.push((6, criterion_6()));
    let (c7, c8) = criteria_7_8();
    results.push((7, c7));
    results.push((8, c8));
    results.push((9, criterion_9(&fse)));

    let mut failed = 0;
    for (n, v) in &results {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n}: {}", v.detail);
        if !v.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
}
