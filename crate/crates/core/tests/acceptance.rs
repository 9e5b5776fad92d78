//! Acceptance checks for the whole engine. Each criterion prints one
//! `criterion N: PASS` or `criterion N: FAIL` line followed by details; the
//! process exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use clap::Parser;
use impact::abstraction::{build_abstraction, optimize_over_cell, DenseMatrix, Imdp, OptimizerOptions};
use impact::cli::{run, Cli};
use impact::config::Config;
use impact::feasible::{solve_bruteforce, solve_sorted, FeasibleProblem};
use impact::grid::{label_states, Cell, LabeledStates, Space};
use impact::io::write_controller;
use impact::kernel::{box_probability, interval_mass, mc_box_probability, normal_cdf, NoiseModel};
use impact::simulate::{simulate, ClosedLoop, SimulationOptions};
use impact::synthesis::{
    avoid_reach, synthesize, verify, Controller, Horizon, IntervalIteration, Mode, Objective, SpecKind,
    SynthesisOptions, BRACKET_TOL,
};
use impact::{with_workers, Direction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Config {
    Config::load(&configs().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, grid_cardinalities),
        (2, feasible_solver_matches_bruteforce),
        (3, kernel_oracles),
        (4, abstraction_oracles),
        (5, synthesis_matches_value_iteration),
        (6, self_loop_chain),
        (7, safety_is_complement_of_avoid_reach),
        (8, deterministic_across_workers),
        (9, robot_end_to_end),
        (10, plan_predicts_sizes),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS  [{secs:.2} s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL  [{secs:.2} s] {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn grid_cardinalities() -> Outcome {
    let start = Instant::now();
    let expected: [(&str, usize, usize, usize); 8] = [
        ("robot2d_reach_dist.cfg", 441, 121, 11),
        ("robot2d_reachavoid.cfg", 1681, 441, 0),
        ("vehicle3d.cfg", 7938, 30, 0),
        ("room3d.cfg", 9261, 36, 0),
        ("room5d.cfg", 7776, 36, 0),
        ("bas4d.cfg", 1225, 4, 0),
        ("bas7d_verify.cfg", 107163, 0, 0),
        ("dim14_verify.cfg", 16384, 0, 0),
    ];
    let mut wrong = Vec::new();
    for (name, n_s, n_u, n_w) in expected {
        let cfg = load(name);
        let got = (
            cfg.state.total(),
            cfg.input.as_ref().map_or(0, Space::total),
            cfg.disturb.as_ref().map_or(0, Space::total),
        );
        if got != (n_s, n_u, n_w) {
            wrong.push(format!("{name}: {got:?}, expected {:?}", (n_s, n_u, n_w)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if !wrong.is_empty() {
        return Err(wrong.join("; "));
    }
    check(secs < 1.0, format!("8 problem grids in {secs:.3} s"))
}

fn random_problem(rng: &mut ChaCha8Rng) -> FeasibleProblem {
    let n = rng.random_range(1..=8);
    let mut p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    let lower: Vec<f64> = p
        .iter()
        .map(|&v| if rng.random_bool(0.2) { v } else { v * rng.random::<f64>() })
        .collect();
    let upper: Vec<f64> = p
        .iter()
        .map(|&v| if rng.random_bool(0.2) { v } else { (v + 0.4 * rng.random::<f64>()).min(1.0) })
        .collect();
    // coarse weights produce ties
    let coarse = rng.random_bool(0.3);
    let weights = (0..n)
        .map(|_| {
            let w: f64 = rng.random();
            if coarse {
                (w * 4.0).round() / 4.0
            } else {
                w
            }
        })
        .collect();
    let direction = if rng.random_bool(0.5) { Direction::Min } else { Direction::Max };
    FeasibleProblem::new(lower, upper, weights, direction).expect("feasible by construction")
}

fn feasible_solver_matches_bruteforce() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let p = random_problem(&mut rng);
        let fast = solve_sorted(&p).map_err(|e| format!("case {case}: {e}"))?;
        let slow = solve_bruteforce(&p).map_err(|e| format!("case {case}: {e}"))?;
        worst = worst.max((fast.value - slow.value).abs());
        let mass: f64 = fast.dist.iter().sum();
        let inside = fast
            .dist
            .iter()
            .enumerate()
            .all(|(i, &v)| v >= p.lower[i] - 1e-12 && v <= p.upper[i] + 1e-12);
        if (mass - 1.0).abs() > 1e-9 || !inside {
            return Err(format!("case {case}: infeasible distribution {:?}", fast.dist));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-9 && secs < 10.0,
        format!("1000 instances, max |sorted - brute force| = {worst:.2e}"),
    )
}

/// Standard normal CDF, computed with 40-digit arithmetic and rounded.
const CDF_TABLE: [(f64, f64); 20] = [
    (-8.0, 6.220960574271784e-16),
    (-6.0, 9.86587645037698e-10),
    (-5.0, 2.866515718791939e-07),
    (-3.5, 0.00023262907903552504),
    (-2.0, 0.02275013194817921),
    (-1.2815515655446004, 0.10000000000000002),
    (-1.0, 0.15865525393145705),
    (-0.5, 0.3085375387259869),
    (-0.001, 0.49960105778608893),
    (0.0, 0.5),
    (0.001, 0.500398942213911),
    (0.25, 0.5987063256829237),
    (0.5, 0.6914624612740131),
    (1.0, 0.8413447460685429),
    (1.5, 0.9331927987311419),
    (2.0, 0.9772498680518208),
    (3.0, 0.9986501019683699),
    (4.5, 0.9999966023268753),
    (6.0, 0.9999999990134123),
    (8.0, 0.9999999999999993),
];

fn kernel_oracles() -> Outcome {
    let mut worst: f64 = 0.0;
    for (z, want) in CDF_TABLE {
        worst = worst.max((normal_cdf(z) - want).abs());
    }
    let table = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/normal_mass.txt"))
        .map_err(|e| e.to_string())?;
    let mut rows = 0;
    for line in table.lines().filter(|l| !l.starts_with('#')) {
        let v: Vec<f64> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
        worst = worst.max((interval_mass(v[0], v[1], v[2], v[3]) - v[4]).abs());
        rows += 1;
    }
    if worst > 1e-12 {
        return Err(format!("erf error {worst:.2e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut max_z: f64 = 0.0;
    for case in 0..100u64 {
        let n = rng.random_range(1..=3);
        let mut identity = vec![0.0; n * n];
        (0..n).for_each(|d| identity[d * n + d] = 1.0);
        let noise = NoiseModel::full_normal(identity, 1.0, 20_000).map_err(|e| e.to_string())?;
        let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|&l| l + rng.random_range(0.2..2.0)).collect();
        let cell = Cell::new(lo, hi);
        let mc = mc_box_probability(&noise, &mean, &cell, case).map_err(|e| e.to_string())?;
        let exact = box_probability(&vec![1.0; n], &mean, &cell);
        let z = (mc.estimate - exact).abs() / mc.stderr.max(1e-300);
        if z > 4.0 {
            return Err(format!("cell {case}: MC {} vs {exact} ({z:.1} stderr)", mc.estimate));
        }
        max_z = max_z.max(z);
    }
    Ok(format!("erf error {worst:.2e} on {} reference values; MC within {max_z:.2} stderr on 100 cells", CDF_TABLE.len() + rows))
}

fn abstraction_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = OptimizerOptions::for_dims(1);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let a = rng.random_range(-2.0..2.0);
        let b = rng.random_range(-1.0..1.0);
        let sigma = rng.random_range(0.2..1.0);
        let x0 = rng.random_range(-2.0..2.0);
        let c = rng.random_range(-3.0..3.0);
        let source = Cell::new(vec![x0 - 0.5], vec![x0 + 0.5]);
        let mass = |x: f64| interval_mass(c - 0.5, c + 0.5, a * x + b, sigma);
        let scan: Vec<f64> = (0..=1000).map(|k| mass(x0 - 0.5 + k as f64 / 1000.0)).collect();
        for (direction, want) in [
            (Direction::Min, scan.iter().cloned().fold(f64::INFINITY, f64::min)),
            (Direction::Max, scan.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        ] {
            let got = optimize_over_cell(|x| Ok(mass(x[0])), &source, direction, &opts)
                .map_err(|e| format!("case {case}: {e}"))?;
            worst = worst.max((got - want).abs());
        }
    }
    if worst > 1e-6 {
        return Err(format!("optimizer vs scan differs by {worst:.2e}"));
    }
    let robot = robot()?;
    robot.invariants.clone()?;
    Ok(format!(
        "optimizer vs scan within {worst:.2e}; {} rows of robot2d_reach satisfy the row invariants",
        robot.rows
    ))
}

/// A random IMDP over `n` safe states. Every row leaves the safe set with
/// probability at least 0.02, so the iteration contracts.
fn random_imdp(rng: &mut ChaCha8Rng, with_target: bool, degenerate: bool) -> Imdp {
    let n = rng.random_range(1..=20);
    let n_target = if with_target { rng.random_range(1..=2) } else { 0 };
    let n_avoid = rng.random_range(0..=2);
    let total = n + n_target + n_avoid;
    let line = |k: usize| Space::new(vec![0.0], vec![(k - 1) as f64], vec![1.0]).unwrap();
    let labels = LabeledStates::new(
        total,
        (0..n).collect(),
        (n..n + n_target).collect(),
        (n + n_target..total).collect(),
    )
    .unwrap();
    let n_u = rng.random_range(1..=4);
    let n_w = rng.random_range(1..=3);
    let rows = n * n_u * n_w;
    let (mut t_min, mut t_max) = (Vec::new(), Vec::new());
    let (mut r_min, mut r_max, mut a_min, mut a_max) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..rows {
        let mut w: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random() })
            .collect();
        if w.iter().all(|&v| v == 0.0) {
            w[rng.random_range(0..n)] = 1.0;
        }
        let exit = rng.random_range(0.02..0.5);
        let to_target = if with_target && rng.random_bool(0.7) { exit * rng.random::<f64>() } else { 0.0 };
        let sum: f64 = w.iter().sum();
        let t: Vec<f64> = w.iter().map(|v| v / sum * (1.0 - exit)).collect();
        let (r, a) = (to_target, exit - to_target);
        if degenerate {
            t_min.push(t.clone());
            t_max.push(t);
            r_min.push(r);
            r_max.push(r);
            a_min.push(a);
            a_max.push(a);
        } else {
            let mut spread = |v: f64| {
                let lo = v * rng.random_range(0.5..1.0);
                let hi = (v + 0.1 * rng.random::<f64>() * v.max(0.05)).min(1.0);
                (lo, hi)
            };
            let bounds: Vec<(f64, f64)> = t.iter().map(|&v| if v == 0.0 { (0.0, 0.0) } else { spread(v) }).collect();
            t_min.push(bounds.iter().map(|b| b.0).collect());
            t_max.push(bounds.iter().map(|b| b.1).collect());
            let (lo, hi) = spread(r);
            r_min.push(lo);
            r_max.push(hi);
            let (lo, hi) = spread(a);
            a_min.push(lo);
            a_max.push(hi);
        }
    }
    Imdp::new(
        line(total),
        (n_u > 1).then(|| line(n_u)),
        (n_w > 1).then(|| line(n_w)),
        labels,
        DenseMatrix::from_rows(&t_min),
        DenseMatrix::from_rows(&t_max),
        r_min,
        r_max,
        a_min,
        a_max,
    )
    .expect("valid by construction")
}

/// Plain value iteration on a point-valued IMDP: the controller picks the
/// input, the disturbance answers.
fn value_iteration(m: &Imdp, objective: Objective) -> Vec<f64> {
    let n = m.n_states();
    let ri = m.row_index();
    let (goal, u_max) = match objective {
        Objective::Reach => (&m.r_min, true),
        Objective::AvoidReach => (&m.a_min, false),
    };
    let mut v = vec![0.0; n];
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..n)
            .map(|k| {
                let per_input = (0..ri.n_u).map(|j| {
                    let per_w = (0..ri.n_w).map(|i| {
                        let row = ri.row(k, j, i);
                        goal[row] + m.t_min.row(row).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
                    });
                    if u_max {
                        per_w.fold(f64::INFINITY, f64::min)
                    } else {
                        per_w.fold(f64::NEG_INFINITY, f64::max)
                    }
                });
                if u_max {
                    per_input.fold(f64::NEG_INFINITY, f64::max)
                } else {
                    per_input.fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < 1e-15 {
            break;
        }
    }
    v
}

fn synthesis_matches_value_iteration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut steps = 0usize;
    for case in 0..200 {
        let reach = case % 2 == 0;
        let m = random_imdp(&mut rng, reach, true);
        let objective = if reach { Objective::Reach } else { Objective::AvoidReach };
        let spec = if reach { SpecKind::Reach } else { SpecKind::Safety };
        let oracle = value_iteration(&m, objective);
        let want: Vec<f64> = if reach { oracle } else { oracle.iter().map(|v| 1.0 - v).collect() };
        for mode in [Mode::Pessimistic, Mode::Optimistic] {
            let opts = SynthesisOptions {
                mode,
                eps: 1e-12,
                ..Default::default()
            };
            let c = synthesize(&m, spec, &opts).map_err(|e| format!("case {case}: {e}"))?;
            for k in 0..m.n_states() {
                worst = worst.max((c.p_min[k] - want[k]).abs()).max((c.p_max[k] - want[k]).abs());
            }
        }
        for lp in [Direction::Min, Direction::Max] {
            let mut it = IntervalIteration::new(&m, objective, lp, None).map_err(|e| e.to_string())?;
            while it.gap() > 1e-12 && it.iteration() < 100_000 {
                it.step().map_err(|e| format!("case {case}: {e}"))?;
                steps += 1;
                if let Some(k) = (0..m.n_states()).find(|&k| it.v0()[k] > it.v1()[k] + BRACKET_TOL) {
                    return Err(format!("case {case}, iteration {}: V0 > V1 at state {k}", it.iteration()));
                }
            }
        }
    }
    check(
        worst <= 1e-9,
        format!("200 IMDPs, max deviation {worst:.2e}; V0 <= V1 over {steps} iterations"),
    )
}

fn self_loop(with_target: bool) -> Imdp {
    let total = if with_target { 2 } else { 1 };
    let space = Space::new(vec![0.0], vec![(total - 1) as f64], vec![1.0]).unwrap();
    let labels = LabeledStates::new(total, vec![0], (1..total).collect(), vec![]).unwrap();
    let (r, a) = if with_target { (0.2, 0.0) } else { (0.0, 0.2) };
    let t = DenseMatrix::from_rows(&[vec![0.8]]);
    Imdp::new(space, None, None, labels, t.clone(), t, vec![r], vec![r], vec![a], vec![a]).unwrap()
}

fn self_loop_chain() -> Outcome {
    let cases = [
        (false, Horizon::Infinite, 0.0),
        (false, Horizon::Finite(2), 0.64),
        (true, Horizon::Infinite, 1.0),
        (true, Horizon::Finite(2), 0.36),
    ];
    let mut got = Vec::new();
    for (reach, horizon, want) in cases {
        let spec = if reach { SpecKind::Reach } else { SpecKind::Safety };
        let opts = SynthesisOptions {
            eps: 1e-12,
            horizon,
            ..Default::default()
        };
        let c = verify(&self_loop(reach), spec, &opts).map_err(|e| e.to_string())?;
        if (c.p_min[0] - want).abs() > 1e-9 || (c.p_max[0] - want).abs() > 1e-9 {
            return Err(format!("{spec} {horizon:?}: [{}, {}], expected {want}", c.p_min[0], c.p_max[0]));
        }
        got.push(format!("{spec} {horizon:?} = {:.12}", c.p_min[0]));
    }
    Ok(got.join(", "))
}

fn safety_is_complement_of_avoid_reach() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let m = random_imdp(&mut rng, false, case % 4 == 0);
        for mode in [Mode::Pessimistic, Mode::Optimistic] {
            for horizon in [Horizon::Infinite, Horizon::Finite(rng.random_range(1..=6))] {
                let opts = SynthesisOptions {
                    mode,
                    eps: 1e-10,
                    horizon,
                    ..Default::default()
                };
                let c = synthesize(&m, SpecKind::Safety, &opts).map_err(|e| e.to_string())?;
                let b = avoid_reach(&m, &opts).map_err(|e| e.to_string())?;
                for k in 0..m.n_states() {
                    if c.p_min[k] != 1.0 - b.high[k] || c.p_max[k] != 1.0 - b.low[k] {
                        return Err(format!("case {case} state {k}: safety is not the exact complement"));
                    }
                }
                if c.policy.as_deref() != Some(b.policy.as_slice()) {
                    return Err(format!("case {case}: safety and avoid-reach policies differ"));
                }
            }
        }
    }
    Ok("100 IMDPs, both modes, infinite and finite horizons".into())
}

struct Robot {
    rows: usize,
    invariants: Result<(), String>,
    /// Abstraction and controller digests for each worker count.
    digests: Vec<(usize, String, String)>,
    controller: Controller,
    labels: LabeledStates,
    cfg: Config,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn imdp_digest(m: &Imdp) -> String {
    let mut h = Sha256::new();
    for part in [&m.t_min.data, &m.t_max.data, &m.r_min, &m.r_max, &m.a_min, &m.a_max] {
        for v in part.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex(&h.finalize())
}

fn build_robot() -> Result<Robot, String> {
    let cfg = load("robot2d_reach.cfg");
    let spec = cfg.spec.clone().ok_or("no [spec]")?;
    let labels = label_states(&cfg.state, spec.target.as_ref(), spec.avoid.as_ref()).map_err(|e| e.to_string())?;
    let dynamics = cfg.dynamics.as_ref().ok_or("no [dynamics]")?;
    let noise = cfg.noise.as_ref().ok_or("no [noise]")?;
    let mut digests = Vec::new();
    let mut first = None;
    for workers in [1, 4, 8] {
        let (imdp, controller) = with_workers(Some(workers), || {
            let imdp = build_abstraction(
                dynamics,
                noise,
                &cfg.state,
                cfg.input.as_ref(),
                None,
                &labels,
                &cfg.run.abstraction,
            )
            .map_err(|e| e.to_string())?;
            let controller = synthesize(&imdp, spec.kind, &cfg.run.synthesis).map_err(|e| e.to_string())?;
            Ok::<_, String>((imdp, controller))
        })
        .map_err(|e| e.to_string())??;
        let mut text = Vec::new();
        write_controller(&mut text, &controller).map_err(|e| e.to_string())?;
        digests.push((workers, imdp_digest(&imdp), hex(&Sha256::digest(&text))));
        if first.is_none() {
            let invariants = imdp.check_invariants().map_err(|e| e.to_string());
            first = Some((imdp.rows(), invariants, controller));
        }
    }
    let (rows, invariants, controller) = first.expect("at least one worker count");
    Ok(Robot {
        rows,
        invariants,
        digests,
        controller,
        labels,
        cfg,
    })
}

fn robot() -> Result<&'static Robot, String> {
    static ROBOT: OnceLock<Result<Robot, String>> = OnceLock::new();
    ROBOT.get_or_init(build_robot).as_ref().map_err(Clone::clone)
}

fn deterministic_across_workers() -> Outcome {
    let robot = robot()?;
    let (_, abs, ctl) = &robot.digests[0];
    let same = robot.digests.iter().all(|(_, a, c)| a == abs && c == ctl);
    check(
        same,
        robot
            .digests
            .iter()
            .map(|(w, a, c)| format!("workers {w}: abstraction {}.. controller {}..", &a[..12], &c[..12]))
            .collect::<Vec<_>>()
            .join("; "),
    )
}

fn robot_end_to_end() -> Outcome {
    let robot = robot()?;
    let c = &robot.controller;
    if let Some(k) = (0..c.states.len()).find(|&k| c.p_min[k] > c.p_max[k]) {
        return Err(format!("p_min > p_max at state {}", c.states[k]));
    }
    let cfg = &robot.cfg;
    let system = ClosedLoop {
        dynamics: cfg.dynamics.as_ref().unwrap(),
        noise: cfg.noise.as_ref().unwrap(),
        disturb_space: None,
        labels: &robot.labels,
        controller: c,
    };
    let opts = SimulationOptions {
        rollouts: 500,
        steps: 100,
        seed: 9,
        start: None,
        min_p: 0.8,
    };
    let (_, s) = simulate(&system, &opts).map_err(|e| e.to_string())?;
    let bound = s.min_p_min - 3.0 * s.stderr;
    check(
        s.fraction >= bound,
        format!(
            "{} of {} rollouts succeed ({:.4}); min p_min {:.6}, stderr {:.4}",
            s.successes, s.rollouts, s.fraction, s.min_p_min, s.stderr
        ),
    )
}

fn plan_field(text: &str, label: &str) -> Option<u64> {
    let line = text.lines().find(|l| l.starts_with(label))?;
    line[label.len()..].split_whitespace().next()?.parse().ok()
}

fn plan_predicts_sizes() -> Outcome {
    let mut details = Vec::new();
    for (name, n_s) in [("bas7d_verify.cfg", 107_163u64), ("dim14_verify.cfg", 16_384)] {
        let path = configs().join(name);
        let cli = Cli::try_parse_from(["impact", "plan", "--config", path.to_str().unwrap()]).map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        run(&cli, &mut out).map_err(|e| e.to_string())?;
        let text = String::from_utf8(out).map_err(|e| e.to_string())?;
        let rows = n_s;
        let d = n_s * n_s;
        let bytes = 16 * d + 48 * rows;
        let got = (
            plan_field(&text, "states"),
            plan_field(&text, "rows"),
            plan_field(&text, "entries (d)"),
            text.lines()
                .find(|l| l.starts_with("memory"))
                .and_then(|l| l.split('(').nth(1))
                .and_then(|s| s.split_whitespace().next())
                .and_then(|s| s.parse::<u64>().ok()),
        );
        if got != (Some(n_s), Some(rows), Some(d), Some(bytes)) {
            return Err(format!("{name}: plan reported {got:?}\n{text}"));
        }
        details.push(format!("{name}: {n_s} states, d = {d}, {bytes} bytes"));
    }
    Ok(details.join("; "))
}
