//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line with the
//! measured figures; the test fails if any criterion does.
//!
//! Run alone with `cargo test -p latdd --test acceptance -- --nocapture`.

use std::time::Instant;

use latdd::comm::*;
use latdd::dd::{decompose, Preconditioner, SchwarzParams, SchwarzPreconditioner};
use latdd::fgmres::FgmresParams;
use latdd::lattice::gamma::{spin_identity, GammaBasis};
use latdd::lattice::{generate_gauge, inner, Boundary, Dir, GaugeField, GaugeKind, LatticeGeometry, Rng, SpinorField, ND};
use latdd::layout::{fuse, fuse_gauge, fused_hop, unfuse, FuseSpec};
use latdd::partition::{cost_compare, load, plan_nonuniform, plan_uniform, PartitionPlan};
use latdd::perf::*;
use latdd::solver::solve_wilson;
use latdd::wilson::*;
use latdd::Precision;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}

// ---- 1. operator ----

fn dense_worst_column(dims: [usize; ND], seed: u64) -> f64 {
    let geo = LatticeGeometry::new(dims).unwrap();
    let gauge = generate_gauge(GaugeKind::Random, &geo, &mut Rng::new(seed)).unwrap();
    let params = OperatorParams::new(0.2, 1.3).unwrap();
    let clover = build_clover::<f64>(&gauge, &params).unwrap();
    let dense = dense_matrix(&gauge, &params).unwrap();
    let n = dense.dim();
    assert_eq!(n, 12 * geo.volume());
    (0..n)
        .map(|j| {
            let mut e = SpinorField::<f64>::zeros(geo.clone());
            e.as_mut_slice()[j] = Complex64::new(1.0, 0.0);
            let col = apply_dirac(&gauge, &clover, &e).unwrap();
            let dcol: Vec<Complex64> = (0..n).map(|i| dense.matrix[(i, j)]).collect();
            rel_err(col.as_slice(), &dcol)
        })
        .fold(0.0, f64::max)
}

fn gamma5_worst(seed: u64) -> f64 {
    let geo = LatticeGeometry::hypercubic(4).unwrap();
    let mut rng = Rng::new(seed);
    let gauge = generate_gauge(GaugeKind::Random, &geo, &mut rng).unwrap();
    let clover = build_clover::<f64>(&gauge, &OperatorParams::new(0.1, 1.0).unwrap()).unwrap();
    let v = SpinorField::<f64>::random(geo.clone(), &mut rng);
    let w = SpinorField::<f64>::random(geo, &mut rng);
    let mut g5v = v.clone();
    apply_gamma5(g5v.as_mut_slice());
    let mut lhs = apply_dirac(&gauge, &clover, &g5v).unwrap();
    apply_gamma5(lhs.as_mut_slice());
    let aw = apply_dirac(&gauge, &clover, &w).unwrap();
    let d = inner(w.as_slice(), lhs.as_slice()) - inner(aw.as_slice(), v.as_slice());
    d.norm() / (v.norm_sqr() * w.norm_sqr()).sqrt()
}

/// Free field: a plane wave `e^{ipx} u` maps to `(m + Σ(1 - cos p) + i Σ γμ sin pμ) u`.
fn dispersion_worst(l: usize, mass: f64) -> f64 {
    let geo = LatticeGeometry::hypercubic(l).unwrap();
    let gauge = GaugeField::<f64>::unit(geo.clone());
    let clover = build_clover::<f64>(&gauge, &OperatorParams::new(mass, 1.0).unwrap()).unwrap();
    let basis = GammaBasis::default();
    let id = spin_identity();
    let mut worst = 0.0f64;
    for n in 0..geo.volume() {
        let p = geo.site_coords(n).map(|k| std::f64::consts::TAU * k as f64 / l as f64);
        let diag = mass + p.iter().map(|q| 1.0 - q.cos()).sum::<f64>();
        let m: [[Complex64; 4]; 4] = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                id[i][j] * diag + (0..ND).map(|mu| Complex64::new(0.0, p[mu].sin()) * basis.gamma[mu][i][j]).sum::<Complex64>()
            })
        });
        let wave = |x: usize| {
            let c = geo.site_coords(x);
            Complex64::from_polar(1.0, (0..ND).map(|mu| p[mu] * c[mu] as f64).sum())
        };
        for spin in 0..4 {
            for color in 0..3 {
                let mut psi = SpinorField::<f64>::zeros(geo.clone());
                for x in 0..geo.volume() {
                    psi.site_mut(x)[3 * spin + color] = wave(x);
                }
                let out = apply_dirac(&gauge, &clover, &psi).unwrap();
                for x in 0..geo.volume() {
                    for s in 0..4 {
                        worst = worst.max((out.site(x)[3 * s + color] - wave(x) * m[s][spin]).norm());
                    }
                }
            }
        }
    }
    worst
}

fn operator_correctness() -> Outcome {
    let d1 = dense_worst_column([2; ND], 1);
    let d2 = dense_worst_column([2, 2, 2, 4], 2);
    ensure!(d1 < 1e-12 && d2 < 1e-12, "dense deviation {d1:.2e} / {d2:.2e}");
    let mut runner = TestRunner::new(Config { cases: 16, ..Config::default() });
    let g5 = std::cell::Cell::new(0.0f64);
    runner
        .run(&any::<u64>(), |seed| {
            let d = gamma5_worst(seed);
            g5.set(g5.get().max(d));
            prop_assert!(d < 1e-10, "seed {seed}: {d:e}");
            Ok(())
        })
        .map_err(|e| format!("gamma5: {e}"))?;
    let geo = LatticeGeometry::new([2, 2, 2, 4]).unwrap();
    let gauge = generate_gauge(GaugeKind::Random, &geo, &mut Rng::new(3)).unwrap();
    let dense_g5 = dense_matrix(&gauge, &OperatorParams::new(0.1, 1.0).unwrap()).unwrap().gamma5_hermiticity_deviation();
    ensure!(dense_g5 < 1e-10, "dense gamma5 deviation {dense_g5:e}");
    let disp = dispersion_worst(4, 0.25);
    ensure!(disp < 1e-10, "dispersion deviation {disp:e}");
    Ok(format!("dense {d1:.1e}/{d2:.1e}, gamma5 {:.1e} (16 seeds) dense {dense_g5:.1e}, dispersion {disp:.1e}", g5.get()))
}

// ---- 2. load model ----

fn load_model() -> Outcome {
    let l = load(64, 60).map_err(|e| e.to_string())?;
    ensure!((l - 0.533).abs() < 1e-3, "load(64, 60) = {l}");
    let global = [64, 64, 64, 128];
    let domain = [8, 4, 4, 4];
    let grid = [4, 4, 8, 8];
    let u = plan_uniform(global, domain, grid, 60).map_err(|e| e.to_string())?;
    let n = plan_nonuniform(global, domain, grid, 60, 3).map_err(|e| e.to_string())?;
    ensure!(n.splits[3] == vec![28, 28, 28, 28, 16], "t split {:?}", n.splits[3]);
    ensure!(u.rank_count == 1024 && n.rank_count == 640, "ranks {} -> {}", u.rank_count, n.rank_count);
    ensure!((n.average_load - 0.853).abs() < 1e-3, "non-uniform load {}", n.average_load);
    let c = cost_compare(&n, &u).map_err(|e| e.to_string())?;
    ensure!((c.cost_reduction - 0.375).abs() < 1e-12, "cost reduction {}", c.cost_reduction);
    Ok(format!(
        "load(64,60) {:.1}%, split {:?}, R {} -> {}, load {:.1}%, cost -{:.1}%",
        100.0 * l,
        n.splits[3],
        u.rank_count,
        n.rank_count,
        100.0 * n.average_load,
        100.0 * c.cost_reduction
    ))
}

// ---- 3. working set ----

fn working_set_sizes() -> Outcome {
    let ws = WorkingSetSpec::new([8, 4, 4, 4]);
    ensure!(ws.spinor_equivalents == 3.5, "n_s = {}", ws.spinor_equivalents);
    let single = working_set(&ws, StorageMode::AllSingle).map_err(|e| e.to_string())?;
    let half = working_set(&ws, StorageMode::GaugeCloverHalf).map_err(|e| e.to_string())?;
    // 512 sites x (72 gauge + 72 clover reals x 4 bytes + 3.5 x 96-byte spinors)
    let oracle = |gc_bytes: f64| 512.0 * (gc_bytes + 3.5 * 96.0) / 1024.0;
    ensure!(single == oracle(576.0) && single == 456.0, "single {single} kB");
    ensure!(half == oracle(288.0) && half == 312.0, "half {half} kB");
    Ok(format!("{single} kB single, {half} kB gauge/clover half"))
}

// ---- 4. performance model ----

fn performance_model() -> Outcome {
    let chip = ChipModel::default();
    let dp = peak_flops(&chip, Precision::Double).map_err(|e| e.to_string())?;
    ensure!((dp - 61.0 * 1.238 * 16.0).abs() < 1e-9 && format!("{:.1}", dp / 1000.0) == "1.2", "DP peak {dp}");
    let fma = fma_efficiency_limit(0.64).map_err(|e| e.to_string())?;
    ensure!((fma - 0.82).abs() < 1e-15, "FMA limit {fma}");
    let sp_core = chip.peak_per_core(Precision::Single).map_err(|e| e.to_string())?;
    ensure!((sp_core - 39.6).abs() < 0.05, "SP per core {sp_core}");
    let per_core = overheaded_limit(&chip, Precision::Single, DEFAULT_FMA_FRACTION, DEFAULT_OVERHEAD).map_err(|e| e.to_string())?;
    ensure!((per_core / sp_core - 0.56).abs() < 1e-12 && format!("{per_core:.1}") == "22.2", "per core {per_core}");
    let dims = [8, 4, 4, 4];
    let ux = simd_utilization(dims, FuseSpec::xy4x4(), Dir::new(0, true)).map_err(|e| e.to_string())?;
    let uy = simd_utilization(dims, FuseSpec::xy4x4(), Dir::new(1, true)).map_err(|e| e.to_string())?;
    ensure!(ux == 0.875 && uy == 0.75, "SIMD utilization x {ux} y {uy}");
    Ok(format!("DP peak {dp:.1} Gflop/s, FMA limit {fma:.3}, {:.0}% of {sp_core:.1} = {per_core:.1} Gflop/s/core, SIMD x {ux} y {uy}", 100.0 * per_core / sp_core))
}

// ---- 5. flop count ----

/// Rows of the breakdown table in the flop documentation: (name, flops).
fn documented_breakdown() -> Vec<(String, u64)> {
    let text = include_str!("../../../docs/flops.md");
    text.lines()
        .filter_map(|l| {
            let cells: Vec<&str> = l.trim().trim_matches('|').split('|').map(str::trim).collect();
            let name = cells.first()?.trim_matches('`');
            let flops = cells.get(1)?.parse().ok()?;
            Some((name.to_string(), flops))
        })
        .collect()
}

fn flop_count() -> Outcome {
    let params = OperatorParams::new(0.1, 1.0).unwrap();
    let r = count_flops(&params, FlopConvention::Hermitian).map_err(|e| e.to_string())?;
    let dev = (r.flops_per_site as f64 - 1848.0).abs() / 1848.0;
    ensure!(dev <= 0.03, "{} flops/site", r.flops_per_site);
    ensure!(r.hopping_flops() == 1320, "hopping {}", r.hopping_flops());
    let doc = documented_breakdown();
    for c in &r.components {
        ensure!(doc.iter().any(|(n, f)| n == &c.name && *f == c.flops), "component {} ({}) not in the documented table", c.name, c.flops);
    }
    ensure!(doc.iter().any(|(n, f)| n == "total" && *f == r.flops_per_site), "documented total differs");
    Ok(format!("{} flops/site ({:+.1}%), FMA fraction {:.3}", r.flops_per_site, 100.0 * dev, r.fma_fraction))
}

// ---- 6. solver ----

fn solver_problem() -> (GaugeField<f64>, SpinorField<f64>, OperatorParams) {
    let geo = LatticeGeometry::hypercubic(8).unwrap();
    let g = generate_gauge(GaugeKind::Weak { eps: 0.1 }, &geo, &mut Rng::new(1)).unwrap();
    let b = SpinorField::<f64>::random(geo, &mut Rng::new(2));
    (g, b, OperatorParams::new(0.1, 1.0).unwrap())
}

fn solver_behavior() -> Outcome {
    let (g, b, op) = solver_problem();
    let params = FgmresParams { tol: 1e-8, ..FgmresParams::default() };
    let schwarz = SchwarzParams { n_schwarz: 16, n_mr: 5, ..SchwarzParams::default() };
    let pre = SchwarzPreconditioner::new(decompose(g.geometry(), [4; ND]).unwrap(), &g, &op, schwarz).map_err(|e| e.to_string())?;
    let (_, dd) = solve_wilson(&g, &op, &b, Some(&pre as &dyn Preconditioner), &params).map_err(|e| e.to_string())?;
    let (_, plain) = solve_wilson(&g, &op, &b, None, &params).map_err(|e| e.to_string())?;
    ensure!(dd.converged && plain.converged, "converged: dd {} plain {}", dd.converged, plain.converged);
    ensure!(dd.final_true_residual <= 1e-8 * 1.01, "true residual {:e}", dd.final_true_residual);
    ensure!(3 * dd.iterations <= plain.iterations, "{} vs {} outer iterations", dd.iterations, plain.iterations);
    let half = pre.compress().map_err(|e| e.to_string())?;
    let (_, hs) = solve_wilson(&g, &op, &b, Some(&half as &dyn Preconditioner), &params).map_err(|e| e.to_string())?;
    let delta = hs.iterations.abs_diff(dd.iterations);
    ensure!(hs.converged && delta <= 1, "half storage {} vs {} iterations", hs.iterations, dd.iterations);
    Ok(format!("DD {} vs plain {} outer iterations, half storage {}", dd.iterations, plain.iterations, hs.iterations))
}

// ---- 7. multi-rank ----

fn expected_schwarz_messages(plan: &PartitionPlan, s: &CommSchedule, n_schwarz: usize) -> usize {
    let grid = plan.rank_grid();
    (0..ND)
        .filter(|&a| grid[a] > 1)
        .map(|a| {
            let parts = [Part::Whole, Part::Lower, Part::Upper].iter().filter(|&&p| s.part_domains(a, p) > 0).count();
            // both directions, one message per color phase
            2 * parts * 2 * n_schwarz
        })
        .sum()
}

fn multi_rank() -> Outcome {
    let (g, b, op) = solver_problem();
    let mut lines = Vec::new();
    for (domain, grid) in [([4; ND], [1, 1, 1, 2]), ([4; ND], [1, 1, 2, 2]), ([4, 4, 2, 1], [1, 1, 1, 2]), ([4, 4, 2, 1], [1, 1, 2, 2])] {
        let cfg = MultiRankConfig {
            op,
            domain,
            schwarz: SchwarzParams::default(),
            fgmres: FgmresParams::default(),
            half_storage: false,
            schedule: ScheduleKind::Overlapped,
        };
        let one = run_multirank(&plan_uniform([8; ND], domain, [1; ND], 60).unwrap(), &g, &b, &cfg).map_err(|e| e.to_string())?;
        let plan = plan_uniform([8; ND], domain, grid, 60).map_err(|e| e.to_string())?;
        let multi = run_multirank(&plan, &g, &b, &cfg).map_err(|e| e.to_string())?;
        let (h1, hn) = (&one.stats.residual_history, &multi.stats.residual_history);
        ensure!(h1.len() == hn.len(), "{grid:?}: history lengths {} vs {}", h1.len(), hn.len());
        let worst = h1.iter().zip(hn).map(|(a, b)| (a - b).abs() / a.abs().max(1e-300)).fold(0.0, f64::max);
        ensure!(worst < 1e-5, "{grid:?}: history deviation {worst:e}");
        let apps = multi.stats.precond_applications;
        let split = grid.iter().filter(|&&n| n > 1).count();
        for (r, st) in multi.ranks.iter().enumerate() {
            let want = expected_schwarz_messages(&plan, &multi.schedules[r], cfg.schwarz.n_schwarz) * apps;
            ensure!(st.schwarz_sent == want && st.schwarz_received == want, "{grid:?} rank {r}: {} sent, {} received, expected {want}", st.schwarz_sent, st.schwarz_received);
            let ops = 2 * split * multi.stats.op_applications;
            ensure!(st.operator_sent == ops && st.operator_received == ops, "{grid:?} rank {r}: {} operator messages, expected {ops}", st.operator_sent);
        }
        lines.push(format!("{}x{domain:?} {} it dev {worst:.0e}", plan.rank_count, hn.len() - 1));
    }
    Ok(lines.join("; "))
}

// ---- 8. schedules ----

fn windows(s: &CommSchedule) -> Vec<(char, Vec<usize>)> {
    s.sends.iter().map(|e| (e.letter, s.overlap_groups(e))).collect()
}

fn schedules() -> Outcome {
    let t_only = build_schedule([false, false, false, true], [2, 2, 2, 8]).map_err(|e| e.to_string())?;
    let t_z = build_schedule([false, false, true, true], [2, 2, 4, 8]).map_err(|e| e.to_string())?;
    for s in [&t_only, &t_z] {
        let v = validate_schedule(s);
        ensure!(v.is_empty(), "violations {v:?}");
    }
    ensure!(windows(&t_only) == vec![('a', vec![2, 3, 4])], "t-only windows {:?}", windows(&t_only));
    // (a) still leaves after group 1 and is consumed by group 1, so with five
    // groups it spans 2-5
    let want = vec![('a', vec![2, 3, 4, 5]), ('b', vec![3, 4, 5]), ('c', vec![1, 2, 3])];
    ensure!(windows(&t_z) == want, "t+z windows {:?}", windows(&t_z));
    let c = t_z.sends.iter().find(|e| e.letter == 'c').unwrap();
    ensure!(c.trigger == 5 && c.consumer == 4, "(c) sent after {} consumed before {}", c.trigger, c.consumer);

    let naive = build_naive_schedule([false, false, true, true], [2, 2, 4, 8]).map_err(|e| e.to_string())?;
    let costs = vec![1.0; naive.groups];
    for e in naive.sends.iter().filter(|e| e.axis != 3) {
        let w = overlap_window(&naive, e, &costs);
        ensure!(w == 0.0 && naive.overlap_groups(e).is_empty(), "naive ({}) overlaps {w}", e.letter);
    }

    let mut runner = TestRunner::new(Config { cases: 100, ..Config::default() });
    let strategy = (
        any::<bool>(),
        proptest::collection::vec(1e-6f64..1e-3, 5),
        proptest::collection::vec(0.0f64..0.999, 3),
        0.0f64..1.0,
        1usize..5,
        2usize..6,
    );
    runner
        .run(&strategy, |(tz, costs, frac, lat_share, ranks, iterations)| {
            let s = if tz { &t_z } else { &t_only };
            let costs = costs[..s.groups].to_vec();
            // transit = latency + bytes / bandwidth, a fraction of each window
            let target: Vec<f64> = s.sends.iter().zip(&frac).map(|(e, f)| f * overlap_window(s, e, &costs)).collect();
            let latency = lat_share * target.iter().cloned().fold(f64::INFINITY, f64::min);
            let bytes: Vec<f64> = target.iter().map(|t| t - latency).collect();
            let cfg = TimelineConfig { ranks, iterations, group_costs: vec![costs], latency, bandwidth: 1.0, message_bytes: bytes };
            for (i, e) in s.sends.iter().enumerate() {
                prop_assert!(cfg.transit(i) < overlap_window(s, e, &cfg.group_costs[0]));
            }
            let t = simulate_timeline(s, &cfg).unwrap();
            prop_assert!(t.steady_idle.iter().all(|&i| i == 0.0), "idle {:?}", t.steady_idle);
            Ok(())
        })
        .map_err(|e| format!("timeline: {e}"))?;
    Ok("t-only a:2-4; t+z a:2-5 b:3-5 c:next 1-3; naive non-t windows 0; 100 timeline trials idle-free".into())
}

// ---- 9. layout ----

fn layout() -> Outcome {
    let geo = LatticeGeometry::new([8, 4, 4, 4]).unwrap();
    let mut rng = Rng::new(11);
    let gauge = generate_gauge(GaugeKind::Random, &geo, &mut rng).unwrap().cast::<f32>();
    let psi = SpinorField::<f32>::random(geo, &mut rng);
    let spec = FuseSpec::xy4x4();
    let fp = fuse(&psi, spec).map_err(|e| e.to_string())?;
    let back = unfuse(&fp).map_err(|e| e.to_string())?;
    let bits = |f: &SpinorField<f32>| f.as_slice().iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect::<Vec<_>>();
    ensure!(bits(&psi) == bits(&back), "fuse/unfuse is not bitwise");
    let fg = fuse_gauge(&gauge, spec).map_err(|e| e.to_string())?;
    let mut worst = 0.0f32;
    for dir in Dir::all() {
        let expect = hop_term(&gauge, &psi, dir).map_err(|e| e.to_string())?;
        let (got, _) = fused_hop(&fg, &fp, dir, Boundary::Periodic).map_err(|e| e.to_string())?;
        let got = unfuse(&got).map_err(|e| e.to_string())?;
        let d = expect.as_slice().iter().zip(got.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f32::max);
        worst = worst.max(d);
    }
    ensure!(worst < 1e-6, "fused hop deviation {worst:e}");
    Ok(format!("roundtrip bitwise, fused hop deviation {worst:.1e}"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("operator correctness", operator_correctness),
        ("load model", load_model),
        ("working set", working_set_sizes),
        ("performance model", performance_model),
        ("flop count", flop_count),
        ("solver behavior", solver_behavior),
        ("multi-rank equivalence", multi_rank),
        ("schedule validity", schedules),
        ("layout", layout),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1} s) {detail}", i + 1),
            Err(why) => {
                println!("criterion {} {name}: FAIL ({secs:.1} s) {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
