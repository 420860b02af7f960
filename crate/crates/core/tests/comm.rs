use latdd::comm::*;
use latdd::dd::{decompose, Preconditioner, SchwarzParams, SchwarzPreconditioner};
use latdd::fgmres::FgmresParams;
use latdd::lattice::{generate_gauge, norm_sqr, GaugeField, GaugeKind, LatticeGeometry, Rng, SpinorField};
use latdd::layout::Face;
use latdd::partition::{plan_uniform, PartitionPlan};
use latdd::solver::solve_wilson;
use latdd::wilson::OperatorParams;
use latdd::Error;
use num_complex::Complex;
use proptest::prelude::*;

const T_ONLY: [bool; 4] = [false, false, false, true];
const T_Z: [bool; 4] = [false, false, true, true];

fn event(s: &CommSchedule, letter: char) -> SendEvent {
    *s.sends.iter().find(|e| e.letter == letter).unwrap()
}

#[test]
fn t_only_schedule() {
    let s = build_schedule(T_ONLY, [2, 2, 2, 8]).unwrap();
    assert_eq!(s.groups, 4);
    assert_eq!(s.sends.len(), 1);
    let a = event(&s, 'a');
    assert_eq!((a.axis, a.part, a.trigger, a.consumer), (3, Part::Whole, 1, 1));
    assert_eq!(s.overlap_groups(&a), vec![2, 3, 4]);
    assert!(validate_schedule(&s).is_empty());
    assert!(s.to_string().contains("overlaps 2-4"));
}

#[test]
fn t_z_schedule() {
    let s = build_schedule(T_Z, [2, 2, 4, 8]).unwrap();
    assert_eq!(s.groups, 5);
    for g in 1..=5 {
        assert!(s.group_of.contains(&g), "group {g} empty");
    }
    let (a, b, c) = (event(&s, 'a'), event(&s, 'b'), event(&s, 'c'));
    assert_eq!((a.axis, a.trigger, a.consumer), (3, 1, 1));
    assert_eq!((b.axis, b.part, b.trigger, b.consumer), (2, Part::Lower, 2, 1));
    assert_eq!((c.axis, c.part, c.trigger, c.consumer), (2, Part::Upper, 5, 4));
    assert_eq!(s.overlap_groups(&b), vec![3, 4, 5]);
    assert_eq!(s.overlap_groups(&c), vec![1, 2, 3]);
    assert!(validate_schedule(&s).is_empty());
    let text = s.to_string();
    assert!(text.contains("overlaps 3-5"), "{text}");
    assert!(text.contains("overlaps next 1-3"), "{text}");
}

#[test]
fn all_axes_schedule_orders_letters() {
    let s = build_schedule([true; 4], [4, 4, 4, 8]).unwrap();
    assert!(validate_schedule(&s).is_empty());
    let order: Vec<(usize, usize, Part)> = s.sends.iter().map(|e| (e.trigger, e.axis, e.part)).collect();
    assert_eq!(
        order,
        vec![
            (1, 3, Part::Whole),
            (2, 0, Part::Lower),
            (2, 1, Part::Lower),
            (2, 2, Part::Lower),
            (5, 0, Part::Upper),
            (5, 1, Part::Upper),
            (5, 2, Part::Upper)
        ]
    );
    assert!(s.sends.iter().all(|e| e.part != Part::Upper || e.consumer == 4));
}

#[test]
fn broken_schedules_are_reported() {
    let s = build_schedule(T_Z, [2, 2, 4, 8]).unwrap();
    let mut late = s.clone();
    late.sends[2].consumer = 1;
    assert!(validate_schedule(&late).contains(&Violation::NoWindow { letter: 'c' }));
    let mut missing = s.clone();
    missing.sends.remove(1);
    assert!(validate_schedule(&missing).contains(&Violation::Coverage { axis: 2, part: Part::Lower, count: 0 }));
    let mut early = s.clone();
    early.sends[2].trigger = 4;
    assert!(validate_schedule(&early).contains(&Violation::DataNotReady { letter: 'c', group: 5 }));
    let mut waits = s.clone();
    waits.sends[1].consumer = 2;
    assert!(validate_schedule(&waits).contains(&Violation::ConsumerTooLate { letter: 'b', group: 1 }));
    let mut range = s;
    range.sends[0].trigger = 9;
    assert!(validate_schedule(&range).contains(&Violation::TriggerOutOfRange { letter: 'a' }));
}

#[test]
fn naive_schedule_has_no_window_for_other_faces() {
    let s = build_naive_schedule(T_Z, [2, 2, 4, 8]).unwrap();
    let z: Vec<&SendEvent> = s.sends.iter().filter(|e| e.axis != 3).collect();
    assert!(!z.is_empty());
    for e in &z {
        assert_eq!(e.trigger, s.groups);
        assert!(s.overlap_groups(e).is_empty());
    }
    let v = validate_schedule(&s);
    assert!(z.iter().all(|e| v.contains(&Violation::NoWindow { letter: e.letter })));
    assert_eq!(s.overlap_groups(&event(&s, 'a')), vec![2, 3, 4]);
}

#[test]
fn degenerate_grids_are_rejected() {
    assert!(matches!(build_schedule(T_ONLY, [2, 2, 2, 1]), Err(Error::Schedule(_))));
    assert!(matches!(build_schedule(T_ONLY, [2, 2, 2, 2]), Err(Error::Schedule(_))));
    assert!(matches!(build_schedule([false; 4], [2, 2, 2, 8]), Err(Error::Schedule(_))));
    let one = build_schedule_lenient(ScheduleKind::Overlapped, T_ONLY, [2, 2, 2, 1]).unwrap();
    assert_eq!(one.groups, 1);
}

proptest! {
    #[test]
    fn built_schedules_validate(sx: bool, sy: bool, sz: bool, st: bool, nx in 1usize..5, ny in 1usize..5, nz in 1usize..5, nt in 1usize..9) {
        let split = [sx, sy, sz, st];
        for kind in [ScheduleKind::Overlapped, ScheduleKind::Naive] {
            let s = if kind == ScheduleKind::Overlapped { build_schedule(split, [nx, ny, nz, nt]) } else { build_naive_schedule(split, [nx, ny, nz, nt]) };
            let Ok(s) = s else { continue };
            let v = validate_schedule(&s);
            prop_assert!(v.iter().all(|x| matches!(x, Violation::NoWindow { .. })), "{:?}", v);
            if kind == ScheduleKind::Overlapped && !(nt < 3 && st) {
                prop_assert!(v.is_empty(), "{:?}\n{}", v, s);
            }
        }
    }
}

#[test]
fn timeline_trivially_hidden_with_free_network() {
    let s = build_schedule(T_Z, [2, 2, 4, 8]).unwrap();
    let mut cfg = TimelineConfig::uniform(&s, 1e-3, 1e6);
    cfg.latency = 0.0;
    cfg.bandwidth = f64::INFINITY;
    let t = simulate_timeline(&s, &cfg).unwrap();
    assert!(t.idle.iter().all(|&i| i == 0.0));
    assert!(t.violations.is_empty());
    assert!((t.makespan - cfg.iterations as f64 * 5e-3).abs() < 1e-12);
    println!("{}", t.gantt(60));
}

#[test]
fn timeline_idle_matches_closed_form() {
    let s = build_schedule(T_ONLY, [2, 2, 2, 8]).unwrap();
    let costs = vec![1.0, 2.0, 3.0, 4.0];
    let total: f64 = costs.iter().sum();
    let transit = 2.0 * total;
    let iterations = 5;
    let cfg = TimelineConfig {
        ranks: 1,
        iterations,
        group_costs: vec![costs.clone()],
        latency: transit,
        bandwidth: f64::INFINITY,
        message_bytes: vec![0.0],
    };
    let t = simulate_timeline(&s, &cfg).unwrap();
    let deficit = (costs[0] + transit - total).max(0.0);
    assert!((t.steady_idle[0] - (iterations - 1) as f64 * deficit).abs() < 1e-9);
    assert!(t.steady_idle[0] > 0.0);
}

#[test]
fn bandwidth_threshold_separates_idle() {
    let s = build_schedule(T_Z, [2, 2, 4, 8]).unwrap();
    let costs = vec![2e-5, 1e-5, 3e-5, 1e-5, 1e-5];
    let bytes = vec![2.0e5, 1.0e5, 1.0e5];
    let th = threshold_bandwidth(&s, &costs, DEFAULT_LATENCY, &bytes);
    assert!(th.is_finite() && th > 0.0);
    let run = |bw: f64| {
        let cfg = TimelineConfig {
            ranks: 3,
            iterations: 4,
            group_costs: vec![costs.clone()],
            latency: DEFAULT_LATENCY,
            bandwidth: bw,
            message_bytes: bytes.clone(),
        };
        simulate_timeline(&s, &cfg).unwrap().steady_idle.iter().sum::<f64>()
    };
    assert_eq!(run(th * 1.01), 0.0);
    assert!(run(th * 0.9) > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn hidden_transit_gives_zero_idle(
        costs in proptest::collection::vec(1e-6f64..1e-3, 5),
        frac in proptest::collection::vec(0.0f64..0.999, 3),
        ranks in 1usize..5,
        iterations in 2usize..6,
    ) {
        let s = build_schedule(T_Z, [2, 2, 4, 8]).unwrap();
        // transit = latency + bytes/bandwidth with bandwidth 1 byte/s
        let latency = 0.0;
        let bytes: Vec<f64> = s.sends.iter().zip(&frac).map(|(e, f)| f * overlap_window(&s, e, &costs)).collect();
        let cfg = TimelineConfig { ranks, iterations, group_costs: vec![costs.clone()], latency, bandwidth: 1.0, message_bytes: bytes };
        let t = simulate_timeline(&s, &cfg).unwrap();
        prop_assert!(t.steady_idle.iter().all(|&i| i == 0.0), "{:?}", t.steady_idle);
    }
}

// ---- multi-rank execution ----

fn problem(domain: [usize; 4]) -> (GaugeField<f64>, SpinorField<f64>, MultiRankConfig) {
    let geo = LatticeGeometry::hypercubic(8).unwrap();
    let g = generate_gauge(GaugeKind::Weak { eps: 0.1 }, &geo, &mut Rng::new(1)).unwrap();
    let b = SpinorField::<f64>::random(geo, &mut Rng::new(2));
    let cfg = MultiRankConfig {
        op: OperatorParams::new(0.1, 1.0).unwrap(),
        domain,
        schwarz: SchwarzParams::default(),
        fgmres: FgmresParams::default(),
        half_storage: false,
        schedule: ScheduleKind::Overlapped,
    };
    (g, b, cfg)
}

fn history_close(a: &[f64], b: &[f64], tol: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "histories differ in length: {a:?} vs {b:?}");
    let worst = a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1e-300)).fold(0.0, f64::max);
    assert!(worst < tol, "worst relative difference {worst:e}");
    worst
}

#[test]
fn one_rank_is_bitwise_single_rank() {
    let (g, b, cfg) = problem([4; 4]);
    let plan = plan_uniform([8; 4], [4; 4], [1; 4], 60).unwrap();
    let multi = run_multirank(&plan, &g, &b, &cfg).unwrap();
    let decomp = decompose(g.geometry(), cfg.domain).unwrap();
    let pre = SchwarzPreconditioner::new(decomp, &g, &cfg.op, cfg.schwarz).unwrap();
    let (x, stats) = solve_wilson(&g, &cfg.op, &b, Some(&pre as &dyn Preconditioner), &cfg.fgmres).unwrap();
    assert!(stats.converged);
    assert_eq!(multi.stats.residual_history, stats.residual_history);
    let bits = |v: &SpinorField<f64>| v.as_slice().iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect::<Vec<_>>();
    assert_eq!(bits(&multi.solution), bits(&x));
    assert_eq!(multi.ranks[0].schwarz_sent + multi.ranks[0].operator_sent, 0);
}

fn expected_schwarz_messages(plan: &PartitionPlan, ens_schedule: &CommSchedule, n_schwarz: usize) -> usize {
    let grid = plan.rank_grid();
    (0..4)
        .filter(|&a| grid[a] > 1)
        .map(|a| {
            let parts = [Part::Whole, Part::Lower, Part::Upper].iter().filter(|&&p| ens_schedule.part_domains(a, p) > 0).count();
            2 * parts * 2 * n_schwarz
        })
        .sum()
}

fn face_bytes(plan: &PartitionPlan, rank: usize, n_schwarz: usize) -> usize {
    let grid = plan.rank_grid();
    let ext = plan.ranks[rank].extents;
    (0..4).filter(|&a| grid[a] > 1).map(|a| 2 * Face::new(a, true).site_count(ext) * 24 * 4 * n_schwarz).sum()
}

fn ensemble_matches_single_rank(grid: [usize; 4], domain: [usize; 4]) {
    let (g, _, cfg) = problem(domain);
    let plan = plan_uniform([8; 4], domain, grid, 60).unwrap();
    let decomp = decompose(g.geometry(), domain).unwrap();
    let pre = SchwarzPreconditioner::new(decomp, &g, &cfg.op, cfg.schwarz).unwrap();
    let ens = RankEnsemble::new(&pre, &plan, ScheduleKind::Overlapped).unwrap();
    let r = SpinorField::<f32>::random(g.geometry().clone(), &mut Rng::new(5));
    let (z1, s1) = pre.apply(&r).unwrap();
    let (z2, s2) = ens.schwarz(r.as_slice()).unwrap();
    assert_eq!(s1.domain_solves, s2.domain_solves);
    let d: f64 = z1.as_slice().iter().zip(&z2).map(|(a, b)| (a - b).norm_sqr() as f64).sum();
    let rel = (d / norm_sqr(z1.as_slice())).sqrt();
    assert!(rel < 1e-5, "relative difference {rel:e}");
    for (rank, st) in ens.stats().iter().enumerate() {
        let want = expected_schwarz_messages(&plan, ens.schedule(rank), cfg.schwarz.n_schwarz);
        assert_eq!(st.schwarz_sent, want, "rank {rank}");
        assert_eq!(st.schwarz_received, want, "rank {rank}");
        assert_eq!(st.schwarz_bytes, face_bytes(&plan, rank, cfg.schwarz.n_schwarz), "rank {rank}");
    }
    assert_eq!(ens.pending_messages(), 0);
    // operator
    let v: Vec<Complex<f64>> = SpinorField::<f64>::random(g.geometry().clone(), &mut Rng::new(6)).as_slice().to_vec();
    let cl = latdd::wilson::build_clover::<f64>(&g, &cfg.op).unwrap();
    let mut a1 = vec![Complex::new(0.0, 0.0); v.len()];
    let mut a2 = a1.clone();
    latdd::wilson::apply_dirac_slice(&g, &cl, &v, &mut a1).unwrap();
    ens.reset_stats();
    ens.apply_operator(&g, &cl, &v, &mut a2).unwrap();
    assert_eq!(a1, a2);
    let split = grid.iter().filter(|&&n| n > 1).count();
    assert!(ens.stats().iter().all(|s| s.operator_sent == 2 * split && s.operator_received == 2 * split));
}

#[test]
fn ensemble_schwarz_two_ranks_t() {
    ensemble_matches_single_rank([1, 1, 1, 2], [4; 4]);
}

#[test]
fn ensemble_schwarz_four_ranks_xt() {
    ensemble_matches_single_rank([2, 1, 1, 2], [4; 4]);
}

#[test]
fn ensemble_schwarz_overlapped_groups() {
    // 2x2x2x4 domains per rank: groups 1, 2, 4 and 5 populated
    ensemble_matches_single_rank([1, 1, 2, 2], [4, 4, 2, 1]);
}

#[test]
fn multirank_solves_match_single_rank() {
    for (domain, grid) in [([4; 4], [1, 1, 1, 2]), ([4; 4], [2, 1, 1, 2]), ([4, 4, 2, 1], [1, 1, 2, 2])] {
        let (g, b, cfg) = problem(domain);
        let one = run_multirank(&plan_uniform([8; 4], domain, [1; 4], 60).unwrap(), &g, &b, &cfg).unwrap();
        assert!(one.stats.converged);
        let plan = plan_uniform([8; 4], domain, grid, 60).unwrap();
        let multi = run_multirank(&plan, &g, &b, &cfg).unwrap();
        assert!(multi.stats.converged);
        let worst = history_close(&multi.stats.residual_history, &one.stats.residual_history, 1e-5);
        println!("{grid:?}: {} iterations, worst history deviation {worst:.2e}", multi.stats.iterations);
        // the gather order is shared, so the runs agree exactly
        assert_eq!(multi.stats.residual_history, one.stats.residual_history);
        let applications = multi.stats.precond_applications;
        for (rank, st) in multi.ranks.iter().enumerate() {
            let want = expected_schwarz_messages(&plan, &multi.schedules[rank], cfg.schwarz.n_schwarz) * applications;
            assert_eq!(st.schwarz_sent, want);
            assert_eq!(st.schwarz_received, want);
        }
    }
}

#[test]
fn missing_send_is_a_deadlock() {
    let (g, _, cfg) = problem([4, 4, 2, 1]);
    let plan = plan_uniform([8; 4], [4, 4, 2, 1], [1, 1, 2, 2], 60).unwrap();
    let decomp = decompose(g.geometry(), cfg.domain).unwrap();
    let pre = SchwarzPreconditioner::new(decomp, &g, &cfg.op, cfg.schwarz).unwrap();
    let ok = RankEnsemble::new(&pre, &plan, ScheduleKind::Overlapped).unwrap();
    let mut schedules: Vec<CommSchedule> = (0..4).map(|r| ok.schedule(r).clone()).collect();
    schedules[1].sends.retain(|e| e.axis != 2 || e.part != Part::Upper);
    let ens = RankEnsemble::with_schedules(&pre, &plan, schedules).unwrap();
    let r = SpinorField::<f32>::random(g.geometry().clone(), &mut Rng::new(5));
    assert!(matches!(ens.schwarz(r.as_slice()), Err(Error::Deadlock(_))));
}

#[test]
fn mismatched_parts_are_rejected() {
    let (g, _, cfg) = problem([4, 4, 2, 1]);
    let plan = plan_uniform([8; 4], [4, 4, 2, 1], [1, 1, 2, 2], 60).unwrap();
    let decomp = decompose(g.geometry(), cfg.domain).unwrap();
    let pre = SchwarzPreconditioner::new(decomp, &g, &cfg.op, cfg.schwarz).unwrap();
    let split = [false, false, true, true];
    let grid = [2, 2, 2, 4];
    let mut schedules = vec![build_schedule(split, grid).unwrap(); 4];
    schedules[0] = build_naive_schedule(split, grid).unwrap();
    let ens = RankEnsemble::with_schedules(&pre, &plan, schedules).unwrap();
    let r = SpinorField::<f32>::random(g.geometry().clone(), &mut Rng::new(5));
    // depending on which side runs first the mismatch shows as a wrong
    // message kind or as a halo read before the data arrived
    let got = ens.schwarz(r.as_slice());
    assert!(matches!(got, Err(Error::Message(_) | Error::Schedule(_))), "{got:?}");
}

#[test]
fn plan_must_match_lattice() {
    let (g, _, cfg) = problem([4; 4]);
    let decomp = decompose(g.geometry(), cfg.domain).unwrap();
    let pre = SchwarzPreconditioner::new(decomp, &g, &cfg.op, cfg.schwarz).unwrap();
    let plan = plan_uniform([8, 8, 8, 16], [4; 4], [1, 1, 1, 2], 60).unwrap();
    assert!(matches!(RankEnsemble::new(&pre, &plan, ScheduleKind::Overlapped), Err(Error::GeometryMismatch(_))));
}

#[test]
fn multirank_is_deterministic() {
    let (g, b, cfg) = problem([4; 4]);
    let plan = plan_uniform([8; 4], [4; 4], [2, 1, 1, 2], 60).unwrap();
    let a = run_multirank(&plan, &g, &b, &cfg).unwrap();
    let c = run_multirank(&plan, &g, &b, &cfg).unwrap();
    assert_eq!(a.stats.residual_history, c.stats.residual_history);
    assert_eq!(a.solution.as_slice(), c.solution.as_slice());
}

