//! Weight families, maximal functions and Muckenhoupt / Békollè–Bonami
//! constants over sampled families of quasi-balls.
//!
//! Every estimate here is a supremum over a finite ball family, so it is a
//! lower bound for the true constant; growth under refinement is what
//! signals that a weight falls outside its class.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{smoothstep_cutoff, DomainModel};
use crate::metric::{dists_to_boundary, Metric, MetricTag};
use crate::quadrature::{Grid, GridKind};
use crate::scalar::{lit, pt_dist, to_f64, Pt, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightFamily {
    Constant(f64),
    /// `σ(w) = dist(w, ζ₀)^t` under the boundary quasi-metric.
    BoundaryPower { zeta0: [(f64, f64); 2], t: f64 },
    /// `σ(z) = dist(z, bD)^t`.
    InteriorPower { t: f64 },
    /// 1 inside a Euclidean ball, `ratio` outside, smoothed over
    /// `[radius, 1.5·radius]`.
    MollifiedJump {
        center: [(f64, f64); 2],
        radius: f64,
        ratio: f64,
    },
}

#[derive(Clone, Debug)]
pub struct Weight<T: Real> {
    pub family: WeightFamily,
    pub values: Vec<T>,
}

impl<T: Real> Weight<T> {
    pub fn constant(len: usize, c: T) -> Self {
        Self {
            family: WeightFamily::Constant(to_f64(c)),
            values: vec![c; len],
        }
    }

    /// `σ^{-1/(p-1)}`, the dual weight.
    pub fn dual(&self, p: f64) -> Vec<T> {
        let e = lit::<T>(-1.0 / (p - 1.0));
        self.values.iter().map(|s| s.powf(e)).collect()
    }
}

fn to_pt<T: Real>(a: &[(f64, f64); 2]) -> Pt<T> {
    crate::geometry::pt(a[0], a[1])
}

/// Evaluates a weight family on every node of `grid`. Interior power
/// weights need a boundary grid to measure `dist(·, bD)`.
pub fn make_weight<T: Real>(
    domain: &DomainModel<T>,
    grid: &Grid<T>,
    family: &WeightFamily,
    bgrid: Option<&Grid<T>>,
) -> Result<Weight<T>> {
    let n = domain.n();
    let values: Vec<T> = match family {
        WeightFamily::Constant(c) => vec![lit(*c); grid.len()],
        WeightFamily::BoundaryPower { zeta0, t } => {
            let z0 = to_pt::<T>(zeta0);
            let m = Metric::new(domain, MetricTag::BoundarySzego);
            let p0 = m.prepare(&z0);
            let tt = lit::<T>(*t);
            grid.nodes
                .par_iter()
                .map(|w| m.between(&p0, &m.prepare(w)).powf(tt))
                .collect()
        }
        WeightFamily::InteriorPower { t } => {
            if *t == 0.0 {
                vec![T::one(); grid.len()]
            } else {
                let bg = bgrid.ok_or_else(|| {
                    Error::InvalidParameter("interior power weight needs a boundary grid".into())
                })?;
                let m = Metric::new(domain, MetricTag::InteriorMcNeal);
                let pts = m.prepare_all(&grid.nodes);
                let bp = m.prepare_all(&bg.nodes);
                let tt = lit::<T>(*t);
                dists_to_boundary(&m, &pts, &bp)
                    .into_iter()
                    .map(|d| d.powf(tt))
                    .collect()
            }
        }
        WeightFamily::MollifiedJump {
            center,
            radius,
            ratio,
        } => {
            let c = to_pt::<T>(center);
            let r: T = lit(*radius);
            let q: T = lit(*ratio);
            grid.nodes
                .iter()
                .map(|p| {
                    let d = pt_dist(p, &c, n);
                    // χ = 1 inside, 0 beyond 1.5 r.
                    let (chi, _) = smoothstep_cutoff(d - r * lit(0.5), r);
                    chi + (T::one() - chi) * q
                })
                .collect()
        }
    };
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > T::zero()))
    {
        return Err(Error::InvalidParameter(format!(
            "weight value {} at node {i} is not finite and positive",
            to_f64(*v)
        )));
    }
    Ok(Weight {
        family: family.clone(),
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallMode {
    /// Every node is a centre, any radius.
    Boundary,
    /// Centres in the boundary tube, only radii `R > d(centre, bD)`.
    InteriorBp,
}

/// A finite family of quasi-balls `B(c, r)` on a grid: centres × a dyadic
/// radius ladder, optionally restricted by the Békollè–Bonami condition.
pub struct BallFamily<'a, T: Real> {
    pub mode: BallMode,
    grid: &'a Grid<T>,
    metric: Metric<'a, T>,
    prepared: Vec<crate::metric::Prepared<T>>,
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
    /// `d(centre, bD)` per centre (zero in boundary mode).
    pub center_bdist: Vec<f64>,
    /// Half the distance to the nearest other node, per centre; balls of
    /// this radius contain only their centre.
    singleton: Vec<f64>,
}

/// Identifier of one ball in a family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallId {
    pub center: usize,
    pub radius: f64,
}

impl<'a, T: Real> BallFamily<'a, T> {
    /// Builds the family. `max_centers` caps the centre count by a
    /// deterministic stride (interior grids are large).
    pub fn new(
        metric: Metric<'a, T>,
        grid: &'a Grid<T>,
        mode: BallMode,
        bgrid: Option<&Grid<T>>,
        max_centers: Option<usize>,
    ) -> Result<Self> {
        let prepared = metric.prepare_all(&grid.nodes);
        let mut centers: Vec<usize> = match mode {
            BallMode::Boundary => (0..grid.len()).collect(),
            BallMode::InteriorBp => (0..grid.len())
                .filter(|&i| -to_f64(metric.domain.rho(&grid.nodes[i])) < to_f64(metric.rho0))
                .collect(),
        };
        if let Some(cap) = max_centers {
            if centers.len() > cap {
                let stride = centers.len().div_ceil(cap);
                centers = centers.into_iter().step_by(stride).collect();
            }
        }
        if centers.is_empty() {
            return Err(Error::InsufficientData("empty ball family".into()));
        }
        let center_bdist = match mode {
            BallMode::Boundary => vec![0.0; centers.len()],
            BallMode::InteriorBp => {
                let bg = bgrid.ok_or_else(|| {
                    Error::InvalidParameter("B_p family needs a boundary grid".into())
                })?;
                let bp = metric.prepare_all(&bg.nodes);
                let cp: Vec<_> = centers.iter().map(|&c| prepared[c]).collect();
                dists_to_boundary(&metric, &cp, &bp)
                    .into_iter()
                    .map(to_f64)
                    .collect()
            }
        };
        let stats: Vec<(f64, f64)> = centers
            .par_iter()
            .map(|&c| {
                let mut near = f64::INFINITY;
                let mut far = 0.0f64;
                for q in &prepared {
                    let d = to_f64(metric.between(&prepared[c], q));
                    if d > 0.0 {
                        near = near.min(d);
                    }
                    far = far.max(d);
                }
                (near, far)
            })
            .collect();
        let sep = stats.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let diam = stats.iter().map(|s| s.1).fold(0.0, f64::max);
        let mut radii = Vec::new();
        let mut r = diam * 1.000001;
        while r >= 2.0 * sep {
            radii.push(r);
            r *= 0.5;
        }
        radii.reverse();
        let singleton = stats.iter().map(|s| 0.5 * s.0).collect();
        Ok(Self {
            mode,
            grid,
            metric,
            prepared,
            centers,
            radii,
            center_bdist,
            singleton,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        self.grid
    }

    /// Nodes sorted by distance from the `k`-th centre.
    fn sorted_from(&self, k: usize) -> Vec<(f64, usize)> {
        let c = &self.prepared[self.centers[k]];
        let mut v: Vec<(f64, usize)> = self
            .prepared
            .iter()
            .enumerate()
            .map(|(i, q)| (to_f64(self.metric.between(c, q)), i))
            .collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        v
    }

    /// Admissible radii for the `k`-th centre with their member counts.
    fn balls_of(&self, k: usize, sorted: &[(f64, usize)]) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        let admissible = |r: f64| match self.mode {
            BallMode::Boundary => true,
            BallMode::InteriorBp => r > self.center_bdist[k],
        };
        if self.mode == BallMode::Boundary {
            out.push((self.singleton[k], 1));
        }
        for &r in &self.radii {
            if !admissible(r) {
                continue;
            }
            let cnt = sorted.partition_point(|e| e.0 < r);
            if cnt > 0 {
                out.push((r, cnt));
            }
        }
        if self.mode == BallMode::InteriorBp {
            for (r, _) in &out {
                assert!(*r > self.center_bdist[k], "B_p admissibility violated");
            }
        }
        out
    }

    /// Number of balls in the family.
    pub fn size(&self) -> usize {
        (0..self.centers.len())
            .into_par_iter()
            .map(|k| self.balls_of(k, &self.sorted_from(k)).len())
            .sum()
    }

    /// Ball maximal function of `f ≥ 0`: for each node, the largest average
    /// of `f` over family balls containing it. Nodes in no ball get 0.
    pub fn maximal_function(&self, f: &[T]) -> Result<Vec<T>> {
        let n = self.grid.len();
        if f.len() != n {
            return Err(Error::Shape("maximal function input length".into()));
        }
        let w: Vec<f64> = self.grid.weights.iter().map(|x| to_f64(*x)).collect();
        let fv: Vec<f64> = f.iter().map(|x| to_f64(*x)).collect();
        let m = (0..self.centers.len())
            .into_par_iter()
            .fold(
                || vec![0.0f64; n],
                |mut acc, k| {
                    let sorted = self.sorted_from(k);
                    let balls = self.balls_of(k, &sorted);
                    if balls.is_empty() {
                        return acc;
                    }
                    let mut sw = 0.0;
                    let mut sf = 0.0;
                    let mut avg = Vec::with_capacity(balls.len());
                    let mut pos = 0;
                    for &(_, cnt) in &balls {
                        while pos < cnt {
                            let i = sorted[pos].1;
                            sw += w[i];
                            sf += fv[i] * w[i];
                            pos += 1;
                        }
                        avg.push((cnt, sf / sw));
                    }
                    // A node at sorted position p lies in every ball with
                    // count > p; take the suffix maximum over such balls.
                    let mut suffix = vec![f64::NEG_INFINITY; avg.len() + 1];
                    for b in (0..avg.len()).rev() {
                        suffix[b] = suffix[b + 1].max(avg[b].1);
                    }
                    let mut b = 0;
                    for (p, &(_, i)) in sorted.iter().enumerate() {
                        while b < avg.len() && avg[b].0 <= p {
                            b += 1;
                        }
                        if b == avg.len() {
                            break;
                        }
                        if suffix[b] > acc[i] {
                            acc[i] = suffix[b];
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![0.0f64; n],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        if y > *x {
                            *x = y;
                        }
                    }
                    a
                },
            );
        Ok(m.into_iter().map(lit).collect())
    }

    /// `max (avg σ)(avg σ^{-1/(p-1)})^{p-1}` over the family, and the ball
    /// attaining it.
    pub fn muckenhoupt(&self, sigma: &[T], p: f64) -> Result<(f64, BallId)> {
        if !(p > 1.0) {
            return Err(Error::InvalidParameter("p must exceed 1".into()));
        }
        self.ap_sup(sigma, p, |s| s.powf(-1.0 / (p - 1.0)))
    }

    /// The same supremum with an explicit dual weight (used for the
    /// duality identity).
    pub fn ap_sup<F: Fn(f64) -> f64 + Sync>(&self, sigma: &[T], p: f64, dual: F) -> Result<(f64, BallId)> {
        let n = self.grid.len();
        if sigma.len() != n {
            return Err(Error::Shape("weight length".into()));
        }
        let w: Vec<f64> = self.grid.weights.iter().map(|x| to_f64(*x)).collect();
        let s: Vec<f64> = sigma.iter().map(|x| to_f64(*x)).collect();
        let sd: Vec<f64> = s.iter().map(|x| dual(*x)).collect();
        let best = (0..self.centers.len())
            .into_par_iter()
            .map(|k| {
                let sorted = self.sorted_from(k);
                let mut best = (f64::NEG_INFINITY, k, 0.0);
                let (mut sw, mut s1, mut s2) = (0.0, 0.0, 0.0);
                let mut pos = 0;
                for (r, cnt) in self.balls_of(k, &sorted) {
                    while pos < cnt {
                        let i = sorted[pos].1;
                        sw += w[i];
                        s1 += s[i] * w[i];
                        s2 += sd[i] * w[i];
                        pos += 1;
                    }
                    let v = (s1 / sw) * (s2 / sw).powf(p - 1.0);
                    if v > best.0 {
                        best = (v, k, r);
                    }
                }
                best
            })
            .reduce(
                || (f64::NEG_INFINITY, usize::MAX, 0.0),
                |a, b| {
                    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                        b
                    } else {
                        a
                    }
                },
            );
        if best.1 == usize::MAX {
            return Err(Error::InsufficientData("degenerate ball family".into()));
        }
        Ok((
            best.0,
            BallId {
                center: self.centers[best.1],
                radius: best.2,
            },
        ))
    }

    /// `max_i Mσ_i / σ_i`.
    pub fn a1_ratio(&self, sigma: &[T]) -> Result<f64> {
        let m = self.maximal_function(sigma)?;
        Ok(m.iter()
            .zip(sigma)
            .map(|(a, b)| to_f64(*a) / to_f64(*b))
            .fold(0.0, f64::max))
    }
}

/// `(Σ |f_i|^p σ_i w_i)^{1/p}`.
pub fn weighted_norm<T: Real>(grid: &Grid<T>, f: &[num_complex::Complex<T>], sigma: &[T], p: f64) -> T {
    let pp = lit::<T>(p);
    let s: T = f
        .iter()
        .zip(sigma)
        .zip(&grid.weights)
        .map(|((a, b), c)| a.norm().powf(pp) * *b * *c)
        .sum();
    s.powf(T::one() / pp)
}

/// `Λ_max / Λ_min`: how far A_p constants taken against `μ` and against the
/// Leray–Levi measure can differ.
pub fn lambda_ratio<T: Real>(grid: &Grid<T>) -> Result<f64> {
    if grid.kind != GridKind::Boundary {
        return Err(Error::Unsupported("Λ ratio on an interior grid".into()));
    }
    let l = grid.lambda()?;
    let mx = l.iter().copied().fold(T::zero(), T::max);
    let mn = l.iter().copied().fold(T::infinity(), T::min);
    Ok(to_f64(mx / mn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::build_boundary_grid;
    use num_complex::Complex;

    fn disk_setup(n: usize) -> (DomainModel<f64>, Grid<f64>) {
        let d = DomainModel::unit_ball(1).unwrap();
        let g = build_boundary_grid(&d, n).unwrap();
        (d, g)
    }

    #[test]
    fn constant_weight_examples() {
        let (d, g) = disk_setup(128);
        let w = make_weight(&d, &g, &WeightFamily::Constant(1.0), None).unwrap();
        assert!(w.values.iter().all(|v| *v == 1.0));
        let fam = BallFamily::new(Metric::new(&d, MetricTag::BoundarySzego), &g, BallMode::Boundary, None, None)
            .unwrap();
        let (c, _) = fam.muckenhoupt(&w.values, 2.0).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        let m = fam.maximal_function(&w.values).unwrap();
        assert!(m.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((fam.a1_ratio(&w.values).unwrap() - 1.0).abs() < 1e-12);
        let one = vec![Complex::new(1.0, 0.0); g.len()];
        let nrm = weighted_norm(&g, &one, &w.values, 2.0);
        assert!((nrm - std::f64::consts::TAU.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn boundary_power_value_at_antipode() {
        let (d, g) = disk_setup(128);
        let fam = WeightFamily::BoundaryPower {
            zeta0: [(1.0, 0.0), (0.0, 0.0)],
            t: 1.0,
        };
        let w = make_weight(&d, &g, &fam, None).unwrap();
        // Nodes at 2π(j+½)/128: the antipode sits between nodes 63 and 64.
        let pt_w = crate::geometry::pt::<f64>((-1.0, 0.0), (0.0, 0.0));
        let m = Metric::new(&d, MetricTag::BoundarySzego);
        let direct = m.dist(&pt_w, &crate::geometry::pt((1.0, 0.0), (0.0, 0.0))).unwrap();
        assert!((direct - 2f64.sqrt()).abs() < 1e-15);
        let v = w.values[63].max(w.values[64]);
        assert!((v - 2f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn maximal_function_dominates_and_is_monotone() {
        let (d, g) = disk_setup(128);
        let fam = BallFamily::new(Metric::new(&d, MetricTag::BoundarySzego), &g, BallMode::Boundary, None, None)
            .unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| ((i * 37) % 11) as f64).collect();
        let h: Vec<f64> = f.iter().map(|x| x + 0.5).collect();
        let mf = fam.maximal_function(&f).unwrap();
        let mh = fam.maximal_function(&h).unwrap();
        for i in 0..g.len() {
            assert!(mf[i] >= f[i] - 1e-12);
            assert!(mh[i] >= mf[i]);
        }
    }
}
