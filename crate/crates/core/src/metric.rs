//! Boundary and interior quasi-metrics, quasi-balls on grids, and
//! estimators for their structure constants.
//!
//! On `bD` the distance is `|g(w,z)|^{1/2}`; inside, it is the McNeal
//! distance `|ζ₁| + Σ_{j≥2} |ζ_j|²` read in the special frame at the first
//! point. Both are symmetrised by the arithmetic mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{binned_max, fixed_effects_slope, loglog_fit, LineFit};
use crate::geometry::{boundary_tol, DomainModel, Jet, SpecialFrame};
use crate::quadrature::Grid;
use crate::scalar::{cplx, czero, lit, pt_dist, to_f64, Pt, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MetricTag {
    BoundarySzego,
    InteriorMcNeal,
}

/// Default tube depth: McNeal coordinates are used where `−ρ < ρ₀`.
pub const DEFAULT_RHO0: f64 = 0.75;

/// A point with everything its distance queries need precomputed.
#[derive(Clone, Copy, Debug)]
pub struct Prepared<T: Real> {
    pub p: Pt<T>,
    jet: Jet<T>,
    frame: Option<SpecialFrame<T>>,
}

#[derive(Clone, Debug)]
pub struct Metric<'a, T: Real> {
    pub domain: &'a DomainModel<T>,
    pub tag: MetricTag,
    pub rho0: T,
}

impl<'a, T: Real> Metric<'a, T> {
    pub fn new(domain: &'a DomainModel<T>, tag: MetricTag) -> Self {
        Self {
            domain,
            tag,
            rho0: lit(DEFAULT_RHO0),
        }
    }

    pub fn with_rho0(mut self, rho0: f64) -> Self {
        self.rho0 = lit(rho0);
        self
    }

    fn n(&self) -> usize {
        self.domain.n()
    }

    pub fn prepare(&self, p: &Pt<T>) -> Prepared<T> {
        let jet = self.domain.jet(p);
        let frame = match self.tag {
            MetricTag::InteriorMcNeal if -jet.rho < self.rho0 => {
                Some(SpecialFrame::at(self.domain, p, &jet))
            }
            _ => None,
        };
        Prepared { p: *p, jet, frame }
    }

    pub fn prepare_all(&self, pts: &[Pt<T>]) -> Vec<Prepared<T>> {
        pts.par_iter().map(|p| self.prepare(p)).collect()
    }

    /// One-sided distance read from the first point.
    #[inline]
    pub fn one_sided(&self, a: &Prepared<T>, b: &Prepared<T>) -> T {
        match self.tag {
            MetricTag::BoundarySzego => self
                .domain
                .g_boundary_jet(&a.p, &a.jet, &b.p)
                .norm()
                .sqrt(),
            MetricTag::InteriorMcNeal => match &a.frame {
                Some(f) => f.mcneal(&b.p),
                None => pt_dist(&a.p, &b.p, self.n()),
            },
        }
    }

    /// Symmetrised distance of prepared points.
    #[inline]
    pub fn between(&self, a: &Prepared<T>, b: &Prepared<T>) -> T {
        if a.p == b.p {
            return T::zero();
        }
        match self.tag {
            MetricTag::InteriorMcNeal if a.frame.is_none() || b.frame.is_none() => {
                pt_dist(&a.p, &b.p, self.n())
            }
            _ => (self.one_sided(a, b) + self.one_sided(b, a)) * lit(0.5),
        }
    }

    fn check_carrier(&self, x: &Pt<T>) -> Result<()> {
        let r = self.domain.rho(x);
        match self.tag {
            MetricTag::BoundarySzego if r.abs() > boundary_tol() => Err(Error::CarrierMismatch(
                format!("boundary metric at a point with rho = {:e}", to_f64(r)),
            )),
            MetricTag::InteriorMcNeal if r > boundary_tol() => Err(Error::CarrierMismatch(
                format!("interior metric outside the closure, rho = {:e}", to_f64(r)),
            )),
            _ => Ok(()),
        }
    }

    /// Symmetrised distance between two points of the tag's carrier.
    pub fn dist(&self, x: &Pt<T>, y: &Pt<T>) -> Result<T> {
        self.check_carrier(x)?;
        self.check_carrier(y)?;
        Ok(self.between(&self.prepare(x), &self.prepare(y)))
    }

    /// Distance from every node of `pts` to `center`.
    pub fn dists_from(&self, center: &Prepared<T>, pts: &[Prepared<T>]) -> Vec<T> {
        pts.par_iter().map(|q| self.between(center, q)).collect()
    }
}

/// `d(z, bD)` as the minimum interior distance to the nodes of a boundary grid.
pub fn dist_to_boundary<T: Real>(domain: &DomainModel<T>, z: &Pt<T>, bgrid: &Grid<T>) -> Result<T> {
    let r = domain.rho(z);
    if r > boundary_tol() {
        return Err(Error::OutsideDomain(to_f64(r)));
    }
    let m = Metric::new(domain, MetricTag::InteriorMcNeal);
    let pz = m.prepare(z);
    Ok(bgrid
        .nodes
        .par_iter()
        .map(|w| m.between(&pz, &m.prepare(w)))
        .reduce(|| T::infinity(), |a, b| a.min(b)))
}

/// `d(·, bD)` for many points against prepared boundary nodes.
pub fn dists_to_boundary<T: Real>(m: &Metric<'_, T>, pts: &[Prepared<T>], bnodes: &[Prepared<T>]) -> Vec<T> {
    pts.par_iter()
        .map(|p| {
            bnodes
                .iter()
                .map(|w| m.between(p, w))
                .fold(T::infinity(), |a, b| a.min(b))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct QuasiBall<T: Real> {
    pub center: Pt<T>,
    pub radius: T,
    pub tag: MetricTag,
    pub members: Vec<usize>,
}

/// Nodes of `grid` at distance `< radius` from `center`.
pub fn quasi_ball<T: Real>(m: &Metric<'_, T>, grid: &Grid<T>, center: &Pt<T>, radius: T) -> Result<QuasiBall<T>> {
    if !(radius > T::zero()) {
        return Err(Error::InvalidParameter("radius must be positive".into()));
    }
    let c = m.prepare(center);
    let members = grid
        .nodes
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| (m.between(&c, &m.prepare(p)) < radius).then_some(i))
        .collect();
    Ok(QuasiBall {
        center: *center,
        radius,
        tag: m.tag,
        members,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeRow {
    pub center_id: usize,
    pub radius: f64,
    pub measure: f64,
    pub members: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct StructureConstants {
    pub quasi_triangle_a0: f64,
    pub doubling_c: f64,
    pub volume_slope: f64,
    pub volume_slope_ci: (f64, f64),
    pub rows: Vec<VolumeRow>,
}

/// Minimum node count for a ball to count as resolved.
pub const MIN_BALL_NODES: usize = 8;

/// Quasi-triangle constant, doubling constant and volume growth exponent
/// over balls centred at `centers` with the given radii.
pub fn structure_constants<T: Real>(
    m: &Metric<'_, T>,
    grid: &Grid<T>,
    centers: &[usize],
    radii: &[T],
    triples: usize,
    seed: u64,
) -> Result<StructureConstants> {
    let prep = m.prepare_all(&grid.nodes);
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    let mut doubling = 1.0f64;
    let mut radii_sorted: Vec<f64> = radii.iter().map(|r| to_f64(*r)).collect();
    radii_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &c in centers {
        let d: Vec<f64> = m.dists_from(&prep[c], &prep).into_iter().map(to_f64).collect();
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|a, b| d[*a].partial_cmp(&d[*b]).unwrap());
        let vol = |r: f64| -> (f64, usize) {
            let mut s = 0.0;
            let mut k = 0;
            for &i in &order {
                if d[i] >= r {
                    break;
                }
                s += to_f64(grid.weights[i]);
                k += 1;
            }
            (s, k)
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &r in &radii_sorted {
            let (v, k) = vol(r);
            rows.push(VolumeRow {
                center_id: c,
                radius: r,
                measure: v,
                members: k,
            });
            if k >= MIN_BALL_NODES {
                xs.push(r.ln());
                ys.push(v.ln());
                let (v2, _) = vol(2.0 * r);
                doubling = doubling.max(v2 / v);
            }
        }
        groups.push((xs, ys));
    }
    let resolved: usize = groups.iter().map(|g| g.0.len()).sum();
    if resolved < 5 {
        return Err(Error::InsufficientData(format!(
            "only {resolved} resolvable balls"
        )));
    }
    let fit = fixed_effects_slope(&groups)
        .ok_or_else(|| Error::InsufficientData("degenerate radius ladder".into()))?;
    let a0 = quasi_triangle(m, &prep, triples, seed);
    Ok(StructureConstants {
        quasi_triangle_a0: a0,
        doubling_c: doubling,
        volume_slope: fit.slope,
        volume_slope_ci: fit.ci95(),
        rows,
    })
}

/// `max d(x,z) / (d(x,y) + d(y,z))` over seeded random triples; half of
/// them are drawn from near neighbourhoods so small scales are probed.
pub fn quasi_triangle<T: Real>(m: &Metric<'_, T>, prep: &[Prepared<T>], triples: usize, seed: u64) -> f64 {
    let n = prep.len();
    if n < 3 {
        return 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<(usize, usize, usize)> = (0..triples)
        .map(|t| {
            let x = rng.gen_range(0..n);
            if t % 2 == 0 {
                (x, rng.gen_range(0..n), rng.gen_range(0..n))
            } else {
                let span = (n / 50).max(3);
                let y = (x + rng.gen_range(1..span)) % n;
                let z = (y + rng.gen_range(1..span)) % n;
                (x, y, z)
            }
        })
        .collect();
    picks
        .par_iter()
        .map(|&(x, y, z)| {
            let dxz = to_f64(m.between(&prep[x], &prep[z]));
            let den = to_f64(m.between(&prep[x], &prep[y]) + m.between(&prep[y], &prep[z]));
            if den > 0.0 {
                dxz / den
            } else {
                0.0
            }
        })
        .reduce(|| 0.0f64, f64::max)
        .max(1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    /// Log-log slope of the smallest distance per Euclidean bin.
    pub lower_fit: f64,
    /// Log-log slope of the largest distance per Euclidean bin.
    pub upper_fit: f64,
    /// Range of `dist / |x−y|^{1/2}` over the sampled pairs.
    pub half_power_ratio: (f64, f64),
    /// Range of `M(z,w) / |g(w,z)|` over boundary pairs (interior tag only).
    pub boundary_equivalence_ratio: Option<(f64, f64)>,
    pub pairs: usize,
}

/// Two-sided comparison of the quasi-metric with Euclidean distance.
pub fn comparison_exponents<T: Real>(
    m: &Metric<'_, T>,
    grid: &Grid<T>,
    pairs: usize,
    seed: u64,
    bgrid: Option<&Grid<T>>,
) -> Result<Comparison> {
    if grid.len() < 500 {
        return Err(Error::InsufficientData("comparison needs >= 500 nodes".into()));
    }
    let n = m.domain.n();
    let prep = m.prepare_all(&grid.nodes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<(usize, usize)> = (0..pairs)
        .map(|_| loop {
            let a = rng.gen_range(0..grid.len());
            let b = rng.gen_range(0..grid.len());
            if grid.nodes[a] != grid.nodes[b] {
                break (a, b);
            }
        })
        .collect();
    let (eu, dd): (Vec<f64>, Vec<f64>) = idx
        .par_iter()
        .map(|&(a, b)| {
            (
                to_f64(pt_dist(&grid.nodes[a], &grid.nodes[b], n)),
                to_f64(m.between(&prep[a], &prep[b])),
            )
        })
        .unzip();
    let lo = eu.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eu.iter().copied().fold(0.0, f64::max) * 1.000001;
    let (bx, bmax) = binned_max(&eu, &dd, lo, hi, 12);
    let inv: Vec<f64> = dd.iter().map(|x| 1.0 / x).collect();
    let (bx2, bmin_inv) = binned_max(&eu, &inv, lo, hi, 12);
    let bmin: Vec<f64> = bmin_inv.iter().map(|x| 1.0 / x).collect();
    let up = loglog_fit(&bx, &bmax).map(|f| f.slope).unwrap_or(f64::NAN);
    let low = loglog_fit(&bx2, &bmin).map(|f| f.slope).unwrap_or(f64::NAN);
    let mut hr = (f64::INFINITY, 0.0f64);
    for (e, d) in eu.iter().zip(&dd) {
        let r = d / e.sqrt();
        hr = (hr.0.min(r), hr.1.max(r));
    }
    let ber = match (m.tag, bgrid) {
        (MetricTag::InteriorMcNeal, Some(bg)) => {
            let bprep = m.prepare_all(&bg.nodes);
            let mut rr = (f64::INFINITY, 0.0f64);
            for _ in 0..pairs.min(20_000) {
                let a = rng.gen_range(0..bg.len());
                let b = rng.gen_range(0..bg.len());
                if a == b {
                    continue;
                }
                let g = to_f64(m.domain.g_boundary(&bg.nodes[b], &bg.nodes[a]).norm());
                let r = to_f64(m.between(&bprep[a], &bprep[b])) / g;
                rr = (rr.0.min(r), rr.1.max(r));
            }
            Some(rr)
        }
        _ => None,
    };
    Ok(Comparison {
        lower_fit: low,
        upper_fit: up,
        half_power_ratio: hr,
        boundary_equivalence_ratio: ber,
        pairs,
    })
}

/// `max` over sampled points `z ∈ P(q₁,δ)` of the smallest `C` with
/// `z ∈ P(q₂, Cδ)`, for `q₂ ∈ P(q₁,δ)`. Returned per `δ`.
pub fn polydisc_engulfing<T: Real>(
    domain: &DomainModel<T>,
    deltas: &[f64],
    pairs: usize,
    points: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let n = domain.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let random_in_polydisc = |rng: &mut ChaCha8Rng, f: &SpecialFrame<T>, delta: f64| {
        let mut zeta = [czero(); 2];
        for j in 0..n {
            let rad = if j == 0 { delta } else { delta.sqrt() };
            let r = rad * rng.gen::<f64>().sqrt();
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            zeta[j] = cplx(lit(r * th.cos()), lit(r * th.sin()));
        }
        f.inverse(&zeta)
    };
    for &delta in deltas {
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let w = crate::geometry::random_boundary_point(domain, &mut rng);
            // Base point just inside the boundary, at depth comparable to δ.
            let depth = 1.0 - 0.1 * delta * rng.gen::<f64>();
            let mut q1 = w;
            for v in q1.iter_mut().take(n) {
                *v = *v * lit::<T>(depth);
            }
            let f1 = SpecialFrame::at(domain, &q1, &domain.jet(&q1));
            let q2 = random_in_polydisc(&mut rng, &f1, delta);
            let f2 = SpecialFrame::at(domain, &q2, &domain.jet(&q2));
            for _ in 0..points {
                let z = random_in_polydisc(&mut rng, &f1, delta);
                let zeta = f2.forward(&z);
                let mut c = to_f64(zeta[0].norm()) / delta;
                for zj in zeta.iter().take(n).skip(1) {
                    c = c.max(to_f64(zj.norm()) / delta.sqrt());
                }
                worst = worst.max(c);
            }
        }
        out.push((delta, worst));
    }
    out
}

/// Slope of the binned-max envelope, re-exported for callers that fit
/// kernel decay against this metric.
pub fn envelope_slope(x: &[f64], y: &[f64], lo: f64, hi: f64, bins: usize) -> Option<LineFit> {
    crate::fit::envelope_fit(x, y, lo, hi, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pt;
    use crate::quadrature::build_boundary_grid;

    #[test]
    fn disk_boundary_distance_is_half_power() {
        let d = DomainModel::<f64>::unit_ball(1).unwrap();
        let m = Metric::new(&d, MetricTag::BoundarySzego);
        let v = m
            .dist(&pt((1.0, 0.0), (0.0, 0.0)), &pt((-1.0, 0.0), (0.0, 0.0)))
            .unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(0.0..6.3);
            let b: f64 = rng.gen_range(0.0..6.3);
            let x: Pt<f64> = pt((a.cos(), a.sin()), (0.0, 0.0));
            let y: Pt<f64> = pt((b.cos(), b.sin()), (0.0, 0.0));
            let e = pt_dist(&x, &y, 1).sqrt();
            assert!((m.dist(&x, &y).unwrap() - e).abs() < 1e-12);
            assert_eq!(m.dist(&x, &x).unwrap(), 0.0);
        }
        assert!(m.dist(&pt((0.5, 0.0), (0.0, 0.0)), &pt((1.0, 0.0), (0.0, 0.0))).is_err());
    }

    #[test]
    fn distance_to_boundary_examples() {
        let d = DomainModel::<f64>::unit_ball(1).unwrap();
        let bg = build_boundary_grid(&d, 256).unwrap();
        let v = dist_to_boundary(&d, &pt((0.0, 0.0), (0.0, 0.0)), &bg).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let v = dist_to_boundary(&d, &pt((0.9, 0.0), (0.0, 0.0)), &bg).unwrap();
        assert!((v / 0.1 - 1.0).abs() < 0.05, "{v}");
        let v = dist_to_boundary(&d, &bg.nodes[3], &bg).unwrap();
        assert_eq!(v, 0.0);
        assert!(dist_to_boundary(&d, &pt((1.5, 0.0), (0.0, 0.0)), &bg).is_err());
    }

    #[test]
    fn quasi_ball_matches_brute_force() {
        let d = DomainModel::<f64>::unit_ball(1).unwrap();
        let g = build_boundary_grid(&d, 512).unwrap();
        let m = Metric::new(&d, MetricTag::BoundarySzego);
        let c = pt((1.0, 0.0), (0.0, 0.0));
        let b = quasi_ball(&m, &g, &c, 0.5).unwrap();
        let brute = g
            .nodes
            .iter()
            .filter(|p| (p[0] - c[0]).norm() < 0.25)
            .count();
        assert_eq!(b.members.len(), brute);
        assert_eq!(quasi_ball(&m, &g, &c, 10.0).unwrap().members.len(), 512);
        assert!(quasi_ball(&m, &g, &c, 1e-6).unwrap().members.is_empty());
    }

    #[test]
    fn mcneal_is_symmetric_and_vanishes_on_diagonal() {
        let d = DomainModel::<f64>::ellipsoid(&[1.0, 2.0]).unwrap();
        let m = Metric::new(&d, MetricTag::InteriorMcNeal);
        let x = pt((0.7, 0.1), (0.2, -0.3));
        let y = pt((0.6, 0.2), (0.25, -0.2));
        assert!(d.rho(&x) < 0.0 && d.rho(&y) < 0.0);
        assert_eq!(m.dist(&x, &y).unwrap(), m.dist(&y, &x).unwrap());
        assert_eq!(m.dist(&x, &x).unwrap(), 0.0);
        assert!(m.dist(&x, &y).unwrap() > 0.0);
    }

    #[test]
    fn engulfing_constant_is_finite() {
        let d = DomainModel::<f64>::unit_ball(2).unwrap();
        let r = polydisc_engulfing(&d, &[0.1, 0.05, 0.025], 20, 50, 3);
        for (_, c) in &r {
            assert!(c.is_finite() && *c < 20.0);
        }
    }
}
