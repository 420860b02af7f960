//! Self-checks on small lattices. Each check reports the measured deviation
//! next to its tolerance.

use latdd::dd::operator::C32;
use latdd::dd::{decompose, schwarz_apply, SchwarzParams, SchwarzPreconditioner};
use latdd::lattice::gamma::{spin_identity, GammaBasis};
use latdd::lattice::{generate_gauge, inner, Boundary, Dir, GaugeField, GaugeKind, LatticeGeometry, Rng, SpinorField, ND};
use latdd::layout::{fuse, fuse_gauge, fused_hop, unfuse, FuseSpec};
use latdd::wilson::{apply_dirac, apply_gamma5, build_clover, dense_matrix, hop_term, OperatorParams};
use num_complex::Complex64;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check(suite: &'static str, name: impl Into<String>, value: f64, tolerance: f64) -> Check {
    Check { suite, name: name.into(), value, tolerance, pass: value.is_finite() && value < tolerance }
}

pub const SUITES: [&str; 5] = ["dense", "gamma5", "dispersion", "layout", "schwarz"];

fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}

/// Worst column deviation between the sparse operator and the dense matrix.
pub fn dense_equivalence(dims: [usize; ND], seed: u64) -> Result<f64, CliError> {
    let geo = LatticeGeometry::new(dims)?;
    let gauge = generate_gauge(GaugeKind::Random, &geo, &mut Rng::new(seed))?;
    let params = OperatorParams::new(0.2, 1.3)?;
    let clover = build_clover::<f64>(&gauge, &params)?;
    let dense = dense_matrix(&gauge, &params)?;
    let n = dense.dim();
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut e = SpinorField::<f64>::zeros(geo.clone());
        e.as_mut_slice()[j] = Complex64::new(1.0, 0.0);
        let col = apply_dirac(&gauge, &clover, &e)?;
        let dcol: Vec<Complex64> = (0..n).map(|i| dense.matrix[(i, j)]).collect();
        worst = worst.max(rel_err(col.as_slice(), &dcol));
    }
    Ok(worst)
}

/// `|<w, γ5 A γ5 v> - <A w, v>|` relative to `|v| |w|`, worst of `trials`.
pub fn gamma5_deviation(dims: [usize; ND], seed: u64, trials: usize) -> Result<f64, CliError> {
    let geo = LatticeGeometry::new(dims)?;
    let mut rng = Rng::new(seed);
    let gauge = generate_gauge(GaugeKind::Random, &geo, &mut rng)?;
    let clover = build_clover::<f64>(&gauge, &OperatorParams::new(0.1, 1.0)?)?;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let v = SpinorField::<f64>::random(geo.clone(), &mut rng);
        let w = SpinorField::<f64>::random(geo.clone(), &mut rng);
        let mut g5v = v.clone();
        apply_gamma5(g5v.as_mut_slice());
        let mut lhs = apply_dirac(&gauge, &clover, &g5v)?;
        apply_gamma5(lhs.as_mut_slice());
        let aw = apply_dirac(&gauge, &clover, &w)?;
        let d = inner(w.as_slice(), lhs.as_slice()) - inner(aw.as_slice(), v.as_slice());
        worst = worst.max(d.norm() / (v.norm_sqr() * w.norm_sqr()).sqrt());
    }
    Ok(worst)
}

/// Plane waves on the free field against `m + Σ(1 - cos p) + i Σ γμ sin pμ`,
/// every momentum, spin and color. Returns the worst absolute deviation.
pub fn free_dispersion(l: usize, mass: f64) -> Result<f64, CliError> {
    let geo = LatticeGeometry::hypercubic(l)?;
    let gauge = GaugeField::<f64>::unit(geo.clone());
    let clover = build_clover::<f64>(&gauge, &OperatorParams::new(mass, 1.0)?)?;
    let basis = GammaBasis::default();
    let id = spin_identity();
    let mut worst = 0.0f64;
    for n in 0..geo.volume() {
        let p = geo.site_coords(n).map(|k| std::f64::consts::TAU * k as f64 / l as f64);
        let diag = mass + p.iter().map(|q| 1.0 - q.cos()).sum::<f64>();
        let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, z) in row.iter_mut().enumerate() {
                *z = id[i][j] * diag;
                for mu in 0..ND {
                    *z += Complex64::new(0.0, p[mu].sin()) * basis.gamma[mu][i][j];
                }
            }
        }
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
                let out = apply_dirac(&gauge, &clover, &psi)?;
                for x in 0..geo.volume() {
                    let ph = wave(x);
                    for s in 0..4 {
                        worst = worst.max((out.site(x)[3 * s + color] - ph * m[s][spin]).norm());
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// Returns (roundtrip mismatches, worst fused-vs-naive hop deviation).
pub fn layout_checks(dims: [usize; ND], seed: u64) -> Result<(usize, f64), CliError> {
    let geo = LatticeGeometry::new(dims)?;
    let mut rng = Rng::new(seed);
    let gauge = generate_gauge(GaugeKind::Random, &geo, &mut rng)?.cast::<f32>();
    let psi = SpinorField::<f32>::random(geo.clone(), &mut rng);
    let spec = FuseSpec::xy4x4();
    let fp = fuse(&psi, spec)?;
    let back = unfuse(&fp)?;
    let mismatches = psi
        .as_slice()
        .iter()
        .zip(back.as_slice())
        .filter(|(a, b)| a.re.to_bits() != b.re.to_bits() || a.im.to_bits() != b.im.to_bits())
        .count();
    let fg = fuse_gauge(&gauge, spec)?;
    let mut worst = 0.0f32;
    for dir in Dir::all() {
        let expect = hop_term(&gauge, &psi, dir)?;
        let (got, _) = fused_hop(&fg, &fp, dir, Boundary::Periodic)?;
        let got = unfuse(&got)?;
        let d = expect.as_slice().iter().zip(got.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f32::max);
        worst = worst.max(d);
    }
    Ok((mismatches, worst as f64))
}

/// `|M(αa + βb) - αMa - βMb| / |αa + βb|` for the Schwarz preconditioner.
pub fn schwarz_linearity(dims: [usize; ND], seed: u64) -> Result<f64, CliError> {
    let geo = LatticeGeometry::new(dims)?;
    let mut rng = Rng::new(seed);
    let gauge = generate_gauge(GaugeKind::Weak { eps: 0.1 }, &geo, &mut rng)?;
    let pre = SchwarzPreconditioner::new(decompose(&geo, [4; ND])?, &gauge, &OperatorParams::new(0.1, 1.0)?, SchwarzParams::default())?;
    let a = SpinorField::<f32>::random(geo.clone(), &mut rng);
    let b = SpinorField::<f32>::random(geo.clone(), &mut rng);
    let (al, be) = (C32::new(0.7, -0.3), C32::new(-1.2, 0.4));
    let comb: Vec<C32> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| al * x + be * y).collect();
    let (za, _) = schwarz_apply(&pre, &a)?;
    let (zb, _) = schwarz_apply(&pre, &b)?;
    let (zc, _) = schwarz_apply(&pre, &SpinorField::from_vec(geo, comb.clone())?)?;
    let diff: f64 = zc
        .as_slice()
        .iter()
        .zip(za.as_slice().iter().zip(zb.as_slice()))
        .map(|(c, (x, y))| (c - (al * x + be * y)).norm_sqr() as f64)
        .sum();
    let norm: f64 = comb.iter().map(|z| z.norm_sqr() as f64).sum();
    Ok((diff / norm).sqrt())
}

/// Run the named suites (all when empty).
pub fn run_suites(names: &[String]) -> Result<Vec<Check>, CliError> {
    for n in names {
        if !SUITES.contains(&n.as_str()) {
            return Err(CliError::Config(format!("unknown suite `{n}`, expected one of {}", SUITES.join(", "))));
        }
    }
    let want = |s: &str| names.is_empty() || names.iter().any(|n| n == s);
    let mut out = Vec::new();
    if want("dense") {
        out.push(check("dense", "2x2x2x2 random, all basis vectors", dense_equivalence([2; ND], 1)?, 1e-12));
        out.push(check("dense", "2x2x2x4 random, all basis vectors", dense_equivalence([2, 2, 2, 4], 2)?, 1e-12));
    }
    if want("gamma5") {
        let geo = LatticeGeometry::new([2, 2, 2, 4])?;
        let gauge = generate_gauge(GaugeKind::Random, &geo, &mut Rng::new(3))?;
        let dense = dense_matrix(&gauge, &OperatorParams::new(0.1, 1.0)?)?;
        out.push(check("gamma5", "dense 2x2x2x4", dense.gamma5_hermiticity_deviation(), 1e-10));
        out.push(check("gamma5", "applied 4x4x4x4", gamma5_deviation([4; ND], 17, 3)?, 1e-10));
    }
    if want("dispersion") {
        out.push(check("dispersion", "free field 4^4, every momentum", free_dispersion(4, 0.25)?, 1e-10));
    }
    if want("layout") {
        let (mismatch, hop) = layout_checks([8, 4, 4, 4], 11)?;
        out.push(check("layout", "fuse/unfuse bitwise mismatches", mismatch as f64, 0.5));
        out.push(check("layout", "fused hop vs naive (single)", hop, 1e-6));
    }
    if want("schwarz") {
        out.push(check("schwarz", "linearity 8x8x4x4", schwarz_linearity([8, 8, 4, 4], 31)?, 1e-5));
    }
    Ok(out)
}
