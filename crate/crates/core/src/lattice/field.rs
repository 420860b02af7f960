use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};

use super::geometry::{LatticeGeometry, ND};
use super::rng::Rng;
use super::su3::{expm, random_hermitian_traceless, random_su3, reunitarize, Su3};
use crate::error::{Error, Result};
use crate::precision::{cast_complex, Precision, Real};

/// Complex components per site: 4 spins x 3 colors.
pub const SITE_COMPONENTS: usize = 12;

/// Gauge links `U_mu(x)` stored site-major, direction-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeField<T: Real> {
    geometry: LatticeGeometry,
    links: Vec<Su3<T>>,
    precision: Precision,
}

impl<T: Real> GaugeField<T> {
    pub fn unit(geometry: LatticeGeometry) -> Self {
        let n = geometry.volume() * ND;
        GaugeField { geometry, links: vec![Su3::identity(); n], precision: T::PRECISION }
    }

    pub fn from_links(geometry: LatticeGeometry, links: Vec<Su3<T>>, precision: Precision) -> Result<Self> {
        if links.len() != geometry.volume() * ND {
            return Err(Error::GeometryMismatch(format!(
                "{} links for volume {}",
                links.len(),
                geometry.volume()
            )));
        }
        if T::PRECISION == Precision::Single && precision == Precision::Double {
            return Err(Error::InvalidParameter("double tag on single-precision storage".into()));
        }
        Ok(GaugeField { geometry, links, precision })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    #[inline(always)]
    pub fn link(&self, site: usize, mu: usize) -> &Su3<T> {
        &self.links[site * ND + mu]
    }

    pub fn link_mut(&mut self, site: usize, mu: usize) -> &mut Su3<T> {
        &mut self.links[site * ND + mu]
    }

    pub fn links(&self) -> &[Su3<T>] {
        &self.links
    }

    pub fn cast<U: Real>(&self) -> GaugeField<U> {
        let precision = match (U::PRECISION, self.precision) {
            (Precision::Single, Precision::Double) => Precision::Single,
            (_, p) => p,
        };
        GaugeField {
            geometry: self.geometry.clone(),
            links: self.links.iter().map(|u| u.cast()).collect(),
            precision,
        }
    }

    /// Largest unitarity or determinant deviation over all links.
    pub fn max_su3_deviation(&self) -> f64 {
        self.links
            .iter()
            .map(|u| u.unitarity_deviation().max(u.det_deviation()))
            .fold(0.0, f64::max)
    }

    pub fn check_su3(&self) -> bool {
        self.max_su3_deviation() < self.precision.su3_tolerance()
    }

    /// Average plaquette `Re tr P / 3` over all sites and planes.
    pub fn average_plaquette(&self) -> f64 {
        let g = &self.geometry;
        let mut sum = 0.0;
        for s in 0..g.volume() {
            for mu in 0..ND {
                for nu in (mu + 1)..ND {
                    let (s_mu, _) = g.neighbor(s, super::geometry::Dir::new(mu, true));
                    let (s_nu, _) = g.neighbor(s, super::geometry::Dir::new(nu, true));
                    let p = *self.link(s, mu)
                        * *self.link(s_mu, nu)
                        * self.link(s_nu, mu).adjoint()
                        * self.link(s, nu).adjoint();
                    sum += p.trace().re.f64() / 3.0;
                }
            }
        }
        sum / (g.volume() * 6) as f64
    }
}

impl GaugeField<f64> {
    /// Round every link to `precision` and retag. Values stay exactly
    /// representable in the narrower format, so I/O roundtrips bitwise.
    pub fn to_precision(&self, precision: Precision) -> Self {
        let links = self
            .links
            .iter()
            .map(|u| {
                let r = u.to_reals().map(|v| precision.round(v));
                Su3::from_reals(&r)
            })
            .collect();
        GaugeField { geometry: self.geometry.clone(), links, precision }
    }
}

/// Which test configuration to generate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GaugeKind {
    Free,
    Random,
    Weak { eps: f64 },
}

/// Generate a gauge configuration in double precision.
///
/// `Weak { eps }` draws `exp(i eps H)` with `H` random traceless Hermitian,
/// so links stay within `O(eps)` of the identity.
pub fn generate_gauge(kind: GaugeKind, geometry: &LatticeGeometry, rng: &mut Rng) -> Result<GaugeField<f64>> {
    let n = geometry.volume() * ND;
    let links = match kind {
        GaugeKind::Free => vec![Su3::identity(); n],
        GaugeKind::Random => (0..n).map(|_| random_su3(rng)).collect::<Result<_>>()?,
        GaugeKind::Weak { eps } => {
            if !(eps >= 0.0) || !eps.is_finite() {
                return Err(Error::InvalidParameter(format!("weak-field eps must be >= 0, got {eps}")));
            }
            (0..n)
                .map(|_| {
                    let h = random_hermitian_traceless(rng);
                    let u = expm(&h.scale(Complex64::new(0.0, eps)));
                    reunitarize(&u).ok_or(Error::DegenerateDraw(1))
                })
                .collect::<Result<_>>()?
        }
    };
    GaugeField::from_links(geometry.clone(), links, Precision::Double)
}

/// Spinor field: 12 complex numbers per site, index `site*12 + spin*3 + color`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField<T: Real> {
    geometry: LatticeGeometry,
    data: Vec<Complex<T>>,
}

impl<T: Real> SpinorField<T> {
    pub fn zeros(geometry: LatticeGeometry) -> Self {
        let n = geometry.volume() * SITE_COMPONENTS;
        SpinorField { geometry, data: vec![Complex::new(T::zero(), T::zero()); n] }
    }

    pub fn from_vec(geometry: LatticeGeometry, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != geometry.volume() * SITE_COMPONENTS {
            return Err(Error::GeometryMismatch(format!(
                "{} components for volume {}",
                data.len(),
                geometry.volume()
            )));
        }
        Ok(SpinorField { geometry, data })
    }

    pub fn random(geometry: LatticeGeometry, rng: &mut Rng) -> Self {
        let n = geometry.volume() * SITE_COMPONENTS;
        let data = (0..n).map(|_| cast_complex(rng.complex_normal())).collect();
        SpinorField { geometry, data }
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    #[inline(always)]
    pub fn site(&self, s: usize) -> &[Complex<T>] {
        &self.data[s * SITE_COMPONENTS..(s + 1) * SITE_COMPONENTS]
    }

    pub fn site_mut(&mut self, s: usize) -> &mut [Complex<T>] {
        &mut self.data[s * SITE_COMPONENTS..(s + 1) * SITE_COMPONENTS]
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.data)
    }

    pub fn cast<U: Real>(&self) -> SpinorField<U> {
        SpinorField { geometry: self.geometry.clone(), data: self.data.iter().map(|&z| cast_complex(z)).collect() }
    }

    /// Interleaved `(re, im)` reals in storage order.
    pub fn to_reals(&self) -> Vec<T> {
        self.data.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    pub fn from_reals(geometry: LatticeGeometry, reals: &[T]) -> Result<Self> {
        let data = reals.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
        Self::from_vec(geometry, data)
    }
}

/// Squared 2-norm accumulated in double precision.
pub fn norm_sqr<T: Real>(v: &[Complex<T>]) -> f64 {
    v.iter().map(|z| z.re.f64() * z.re.f64() + z.im.f64() * z.im.f64()).sum()
}

/// `a^H b` accumulated in double precision.
pub fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| cast_complex::<T, f64>(x.conj()) * cast_complex::<T, f64>(*y))
        .sum()
}
