//! The `pograph verify` invariant suites: fast, deterministic library
//! self-checks run outside the test harness.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pograph_core::algorithms::{amb_sgd, sequential_sgd, StepSchedule};
use pograph_core::executor::{
    cheating::PeekingProgram, check_compliance, execute, measure_progress,
};
use pograph_core::frame::Frame;
use pograph_core::graphs;
use pograph_core::instances::{
    chain_instance, coinflip_instance, moreau_instance, Instance, LipschitzSmoothClass,
};
use pograph_core::prox::prox_max_affine;
use pograph_core::Error;

type Check = (&'static str, fn() -> Result<(), String>);

fn class(l: f64, h: f64) -> LipschitzSmoothClass {
    LipschitzSmoothClass::new(l, h, 1.0).unwrap()
}

fn graph_closed_forms() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..5 {
        let t = rng.random_range(1..12usize);
        let k = rng.random_range(1..6usize);
        let m = rng.random_range(1..6usize);
        let g = graphs::build_intermittent(t, k, m).map_err(|e| e.to_string())?;
        if g.depth() != t * k || g.size() != t * k * m {
            return Err(format!(
                "intermittent({t},{k},{m}) depth/size = {}/{}",
                g.depth(),
                g.size()
            ));
        }
    }
    let path = graphs::build_path(9).map_err(|e| e.to_string())?;
    let delay = graphs::build_delay_const(9, 1).map_err(|e| e.to_string())?;
    for v in 0..9 {
        if path.ancestors(v).unwrap() != delay.ancestors(v).unwrap() {
            return Err(format!("delay tau=1 differs from path at node {v}"));
        }
    }
    let layer = graphs::build_layer(4, 3).map_err(|e| e.to_string())?;
    let inter = graphs::build_intermittent(4, 1, 3).map_err(|e| e.to_string())?;
    for v in 0..12 {
        if layer.ancestors(v).unwrap() != inter.ancestors(v).unwrap() {
            return Err(format!("intermittent K=1 differs from layer at node {v}"));
        }
    }
    // Ancestor sets stay transitively closed on a custom graph.
    let mut edges = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for b in 1..60usize {
        for _ in 0..2 {
            edges.push((rng.random_range(0..b), b));
        }
    }
    let g = graphs::build_custom(60, &edges).map_err(|e| e.to_string())?;
    for v in 0..60 {
        let anc = g.ancestors(v).unwrap();
        for a in anc.ones() {
            for aa in g.ancestors(a).unwrap().ones() {
                if !anc.contains(aa) {
                    return Err(format!("closure broken at {v}: {aa} -> {a} -> {v}"));
                }
            }
        }
    }
    Ok(())
}

fn frame_orthonormality() -> Result<(), String> {
    let f = Frame::sample(60, 8, 5).map_err(|e| e.to_string())?;
    for i in 0..8 {
        for j in 0..8 {
            let dot = f.row(i).dot(&f.row(j));
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot - target).abs() > 1e-12 {
                return Err(format!("gram[{i},{j}] = {dot}"));
            }
        }
    }
    Ok(())
}

fn prox_invariants() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = 6;
    let m = 24;
    let frame = Frame::sample(m, k, 1).map_err(|e| e.to_string())?;
    let offsets: Vec<f64> = (0..k).map(|r| 0.02 * r as f64).collect();
    for trial in 0..10 {
        let x = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
        let beta = rng.random_range(0.5..40.0);
        let res = prox_max_affine(&frame.rows(), &offsets, 1.0, &x.view(), beta)
            .map_err(|e| e.to_string())?;
        if res.residual > 1e-10 {
            return Err(format!(
                "trial {trial}: stationarity residual {}",
                res.residual
            ));
        }
        // Perturbations never improve the prox objective.
        let objective = |y: &Array1<f64>| {
            let fy = (0..k)
                .map(|r| frame.row(r).dot(&y.view()) - offsets[r])
                .fold(f64::NEG_INFINITY, f64::max);
            let d = y - &x;
            fy + 0.5 * beta * d.dot(&d)
        };
        let base = objective(&res.point);
        for _ in 0..20 {
            let mut delta: Array1<f64> = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
            let norm = delta.dot(&delta).sqrt();
            delta.mapv_inplace(|v| v * 1e-4 / norm);
            if objective(&(&res.point + &delta)) < base - 1e-12 {
                return Err(format!(
                    "trial {trial}: perturbation improved the objective"
                ));
            }
        }
        // Nonexpansiveness.
        let y = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
        let py = prox_max_affine(&frame.rows(), &offsets, 1.0, &y.view(), beta)
            .map_err(|e| e.to_string())?
            .point;
        let din = (&x - &y).dot(&(&x - &y)).sqrt();
        let dout = (&res.point - &py).dot(&(&res.point - &py)).sqrt();
        if dout > din + 1e-10 {
            return Err(format!("trial {trial}: prox expanded {din} -> {dout}"));
        }
    }
    Ok(())
}

fn moreau_regularity() -> Result<(), String> {
    let inst = moreau_instance(class(1.0, f64::INFINITY), 4, 30, 2).map_err(|e| e.to_string())?;
    let p = inst.params().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let x = Array1::from_shape_fn(30, |_| rng.random_range(-0.18..0.18));
        let (f, grad) = inst.envelope_at(&x.view());
        let g = inst.pointwise_max(&x.view());
        if !(f <= g + 1e-12 && g <= f + p.ell * p.ell / (2.0 * p.eta) + 1e-12) {
            return Err(format!("sandwich broken: f = {f}, g = {g}"));
        }
        let n = grad.dot(&grad).sqrt();
        if n > p.ell * (1.0 + 1e-9) {
            return Err(format!("gradient norm {n} above ell = {}", p.ell));
        }
    }
    Ok(())
}

fn chain_reference() -> Result<(), String> {
    let inst = chain_instance(class(1.0, 4.0), 3, 24, 4).map_err(|e| e.to_string())?;
    let x_star = inst.reference().unwrap().x_star.clone().unwrap();
    let g = inst.mean_gradient(&x_star.view());
    let n = g.dot(&g).sqrt();
    if n > 1e-9 {
        return Err(format!("|grad F(x*)| = {n}"));
    }
    Ok(())
}

fn executor_determinism() -> Result<(), String> {
    let graph = graphs::build_path(12).map_err(|e| e.to_string())?;
    let inst = coinflip_instance(1.0, 1.0, 12, 6).map_err(|e| e.to_string())?;
    let prog = sequential_sgd(inst.class().clone(), &graph, 12, StepSchedule::default())
        .map_err(|e| e.to_string())?;
    let a = execute(&graph, &prog, &inst, 5).map_err(|e| e.to_string())?;
    let b = execute(&graph, &prog, &inst, 5).map_err(|e| e.to_string())?;
    if a.digest() != b.digest() {
        return Err("repeated run digests differ".to_string());
    }
    Ok(())
}

fn compliance_suite() -> Result<(), String> {
    let graph = graphs::build_path(10).map_err(|e| e.to_string())?;
    let inst = coinflip_instance(1.0, 1.0, 10, 0).map_err(|e| e.to_string())?;
    let prog = sequential_sgd(inst.class().clone(), &graph, 10, StepSchedule::default())
        .map_err(|e| e.to_string())?;
    let report = check_compliance(&graph, &prog, &inst, 1, 10).map_err(|e| e.to_string())?;
    if !report.clean() {
        return Err(format!(
            "sequential SGD has {} findings",
            report.findings.len()
        ));
    }
    let graph = graphs::build_layer(5, 2).map_err(|e| e.to_string())?;
    let inst = chain_instance(class(1.0, 4.0), 2, 20, 1).map_err(|e| e.to_string())?;
    let prog = amb_sgd(inst.class().clone(), &graph, None, None).map_err(|e| e.to_string())?;
    let report = check_compliance(&graph, &prog, &inst, 1, 10).map_err(|e| e.to_string())?;
    if !report.clean() {
        return Err(format!("A-MB-SGD has {} findings", report.findings.len()));
    }
    match execute(&graph, &PeekingProgram, &inst, 0) {
        Err(Error::VisibilityViolation { .. }) => Ok(()),
        other => Err(format!("peeking program was not rejected: {other:?}")),
    }
}

fn span_progress() -> Result<(), String> {
    let inst = moreau_instance(class(1.0, f64::INFINITY), 4, 30, 8).map_err(|e| e.to_string())?;
    let graph = graphs::build_path(8).map_err(|e| e.to_string())?;
    let prog = sequential_sgd(inst.class().clone(), &graph, 8, StepSchedule::default())
        .map_err(|e| e.to_string())?;
    let trace = execute(&graph, &prog, &inst, 0).map_err(|e| e.to_string())?;
    let progress = measure_progress(
        &trace,
        &inst.frame().unwrap().rows(),
        inst.progress_threshold().unwrap(),
    )
    .map_err(|e| e.to_string())?;
    if progress.violation_count() != 0 {
        return Err(format!("{} progress flags", progress.violation_count()));
    }
    Ok(())
}

/// Runs every suite, printing one line each; returns the failure count.
pub fn run_verify() -> usize {
    let checks: &[Check] = &[
        ("graph closed forms and closure", graph_closed_forms),
        ("frame orthonormality", frame_orthonormality),
        ("max-affine prox invariants", prox_invariants),
        ("moreau envelope regularity", moreau_regularity),
        ("chain reference stationarity", chain_reference),
        ("executor determinism", executor_determinism),
        ("compliance probes", compliance_suite),
        ("span confinement progress", span_progress),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("verify: {name}: ok"),
            Err(msg) => {
                failures += 1;
                println!("verify: {name}: FAILED ({msg})");
            }
        }
    }
    failures
}
