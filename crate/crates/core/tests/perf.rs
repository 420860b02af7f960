use latdd::lattice::geometry::Dir;
use latdd::layout::{hop_gather, FuseSpec, FusedField};
use latdd::perf::*;
use latdd::Precision;
use proptest::prelude::*;

#[test]
fn peak_figures() {
    let chip = ChipModel::default();
    let dp = peak_flops(&chip, Precision::Double).unwrap();
    assert!((dp - 61.0 * 1.238 * 8.0 * 2.0).abs() < 1e-9);
    assert!((dp - 1208.3).abs() < 0.05);
    assert!((dp / 1000.0 - 1.2).abs() < 0.01);
    let sp_core = chip.peak_per_core(Precision::Single).unwrap();
    assert!((sp_core - 39.6).abs() < 0.02);
    assert_eq!(peak_flops(&chip, Precision::Single).unwrap(), 2.0 * dp);
    let zero = ChipModel { cores: 0, ..chip };
    assert!(peak_flops(&zero, Precision::Double).is_err());
    assert!(ChipModel { usable_cores: 62, ..chip }.validate().is_err());
}

#[test]
fn fma_limits() {
    assert!((fma_efficiency_limit(0.64).unwrap() - 0.82).abs() < 1e-12);
    assert_eq!(fma_efficiency_limit(1.0).unwrap(), 1.0);
    assert_eq!(fma_efficiency_limit(0.0).unwrap(), 0.5);
    assert!(fma_efficiency_limit(1.2).is_err());
}

#[test]
fn overheaded_figures() {
    let chip = ChipModel::default();
    let v = overheaded_limit(&chip, Precision::Single, DEFAULT_FMA_FRACTION, DEFAULT_OVERHEAD).unwrap();
    assert!((v - 22.2).abs() < 0.05, "{v}");
    assert!((v / chip.peak_per_core(Precision::Single).unwrap() - 0.56).abs() < 1e-12);
    let full = overheaded_limit(&chip, Precision::Single, 0.64, 1.0).unwrap();
    assert!((full - 32.5).abs() < 0.02, "{full}");
    assert!(overheaded_limit(&chip, Precision::Single, 0.64, 0.0).is_err());
}

#[test]
fn working_sets() {
    let ws = WorkingSetSpec::new([8, 4, 4, 4]);
    assert_eq!(working_set(&ws, StorageMode::AllSingle).unwrap(), 456.0);
    assert_eq!(working_set(&ws, StorageMode::GaugeCloverHalf).unwrap(), 312.0);
    assert_eq!(working_set(&WorkingSetSpec::new([4; 4]), StorageMode::AllSingle).unwrap(), 228.0);
    // n_s recovered from the 456 kB figure
    let ns = (456.0 * 1024.0 / 512.0 - 576.0) / 96.0;
    assert_eq!(ns, ws.spinor_equivalents);
    assert!(working_set(&WorkingSetSpec::new([0, 4, 4, 4]), StorageMode::AllSingle).is_err());
}

#[test]
fn simd_utilization_examples() {
    let dims = [8, 4, 4, 4];
    for fwd in [true, false] {
        assert_eq!(simd_utilization(dims, FuseSpec::xy4x4(), Dir::new(0, fwd)).unwrap(), 0.875);
        assert_eq!(simd_utilization(dims, FuseSpec::xy4x4(), Dir::new(1, fwd)).unwrap(), 0.75);
        assert_eq!(simd_utilization(dims, FuseSpec::xy4x4(), Dir::new(3, fwd)).unwrap(), 1.0);
    }
}

#[test]
fn report_renders() {
    let r = model_report(&ChipModel::default(), DEFAULT_FMA_FRACTION, DEFAULT_OVERHEAD, &WorkingSetSpec::new([8, 4, 4, 4])).unwrap();
    let text = r.to_string();
    assert!(text.contains("1208.3"));
    assert!(text.contains("456 kB"));
    assert!(text.contains("312 kB"));
}

proptest! {
    #[test]
    fn fma_limit_monotone_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (la, lb) = (fma_efficiency_limit(a).unwrap(), fma_efficiency_limit(b).unwrap());
        prop_assert!((0.5..=1.0).contains(&la));
        if a < b { prop_assert!(la <= lb); }
    }

    #[test]
    fn half_mode_saves_half_of_gauge_and_clover(x in 1usize..5, y in 1usize..5, z in 1usize..5, t in 1usize..5, ns in 0.5f64..8.0) {
        let mut ws = WorkingSetSpec::new([x, y, z, t]);
        ws.spinor_equivalents = ns;
        let d = working_set(&ws, StorageMode::AllSingle).unwrap() - working_set(&ws, StorageMode::GaugeCloverHalf).unwrap();
        let expect = (ws.sites() * (ws.gauge_bytes + ws.clover_bytes)) as f64 / 2.0 / 1024.0;
        prop_assert!((d - expect).abs() < 1e-9);
    }

    #[test]
    fn simd_utilization_matches_hop_gather(fx in 0usize..3, fy in 0usize..3, ox in 1usize..3, oy in 1usize..3, axis in 0usize..4, fwd: bool) {
        let factors = [1usize << fx, 1 << fy, 1, 1];
        let spec = FuseSpec::new(factors).unwrap();
        let dims = [factors[0] * ox * 2, factors[1] * oy * 2, 2, 2];
        let dir = Dir::new(axis, fwd);
        let field = FusedField::<f32>::zeros(dims, spec, 24).unwrap();
        let g = hop_gather(&field, dir).unwrap();
        prop_assert_eq!(simd_utilization(dims, spec, dir).unwrap(), g.utilization.utilization());
    }
}
