//! Boundary and interior quadrature grids, the Leray–Levi density, and
//! integration against the three measures used throughout.
//!
//! Boundary grids are built on the unit sphere and pushed radially onto the
//! boundary of a star-shaped model domain; the surface Jacobian of the push
//! is `R^{2n−1} |∇ρ| / (∇ρ·u)`. Interior grids stack scaled copies of the
//! sphere grid in geometrically thinning layers toward `bD`.

use std::fmt::Write as _;

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{DomainModel, Jet};
use crate::scalar::{cplx, czero, lit, pt_dist, to_f64, Pt, Real};

/// Ratio between consecutive radial layer thicknesses.
pub const LAYER_RATIO: f64 = 1.35;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GridKind {
    Boundary,
    Interior,
}

/// How the nodes were laid out; the operator module uses this to pick
/// singular corrections that rely on structure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Layout {
    /// `m` nodes at angles `2π(j+½)/m` (n = 1).
    Circle { m: usize },
    /// Equal-area Hopf bands (n = 2).
    Hopf { n_eta: usize, n_phi: usize },
    /// Radial layers of sphere grids.
    Layered { layers: usize },
    /// Anything else (patches, files).
    Scattered,
}

#[derive(Clone, Debug)]
pub struct Grid<T: Real> {
    pub kind: GridKind,
    pub n: usize,
    pub layout: Layout,
    pub nodes: Vec<Pt<T>>,
    /// Surface measure `μ` (boundary) or volume `V` (interior) per node.
    pub weights: Vec<T>,
    /// Leray–Levi density `Λ` per node (boundary grids only).
    pub leray_levi: Option<Vec<T>>,
    pub resolution: String,
    pub domain: String,
    /// Minimum Euclidean distance between distinct nodes.
    pub separation: T,
}

#[derive(Clone, Copy, Debug)]
pub enum Measure<'a, T: Real> {
    Lebesgue,
    LerayLevi,
    Weighted(&'a [T]),
}

impl<T: Real> Grid<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_measure(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn lambda(&self) -> Result<&[T]> {
        self.leray_levi
            .as_deref()
            .ok_or_else(|| Error::Unsupported("Leray–Levi measure on an interior grid".into()))
    }

    /// Per-node measure for the requested convention.
    pub fn measure_weights(&self, m: Measure<'_, T>) -> Result<Vec<T>> {
        match m {
            Measure::Lebesgue => Ok(self.weights.clone()),
            Measure::LerayLevi => Ok(self
                .lambda()?
                .iter()
                .zip(&self.weights)
                .map(|(l, w)| *l * *w)
                .collect()),
            Measure::Weighted(s) => {
                if s.len() != self.len() {
                    return Err(Error::Shape("weight length differs from grid".into()));
                }
                Ok(s.iter().zip(&self.weights).map(|(a, w)| *a * *w).collect())
            }
        }
    }

    /// `Σ f_i · weight_i · (1 | Λ_i | σ_i)`.
    pub fn integrate(&self, f: &[Complex<T>], m: Measure<'_, T>) -> Result<Complex<T>> {
        if f.len() != self.len() {
            return Err(Error::Shape("integrand length differs from grid".into()));
        }
        let w = self.measure_weights(m)?;
        let mut s = czero();
        for (a, b) in f.iter().zip(&w) {
            s += *a * *b;
        }
        Ok(s)
    }

    pub fn integrate_real(&self, f: &[T], m: Measure<'_, T>) -> Result<T> {
        if f.len() != self.len() {
            return Err(Error::Shape("integrand length differs from grid".into()));
        }
        let w = self.measure_weights(m)?;
        Ok(f.iter().zip(&w).map(|(a, b)| *a * *b).sum())
    }

    /// Text form: `#` header lines, then one node per line with the real and
    /// imaginary parts of each coordinate, the weight, and `Λ` if present.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# kslab-grid v1");
        let _ = writeln!(s, "# domain: {}", self.domain);
        let _ = writeln!(
            s,
            "# kind: {}",
            match self.kind {
                GridKind::Boundary => "boundary",
                GridKind::Interior => "interior",
            }
        );
        let _ = writeln!(s, "# n: {}", self.n);
        let _ = writeln!(s, "# resolution: {}", self.resolution);
        let mut cols: Vec<String> = (1..=self.n)
            .flat_map(|j| [format!("re_z{j}"), format!("im_z{j}")])
            .collect();
        cols.push("weight".into());
        if self.leray_levi.is_some() {
            cols.push("lambda".into());
        }
        let _ = writeln!(s, "# columns: {}", cols.join(" "));
        for (i, p) in self.nodes.iter().enumerate() {
            let mut line: Vec<String> = Vec::with_capacity(2 * self.n + 2);
            for pj in p.iter().take(self.n) {
                line.push(format!("{:e}", to_f64(pj.re)));
                line.push(format!("{:e}", to_f64(pj.im)));
            }
            line.push(format!("{:e}", to_f64(self.weights[i])));
            if let Some(l) = &self.leray_levi {
                line.push(format!("{:e}", to_f64(l[i])));
            }
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    /// Parses [`Self::to_text`] output. Layout is recorded as `Scattered`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut n = 0usize;
        let mut kind = GridKind::Boundary;
        let mut domain = String::new();
        let mut resolution = String::new();
        let mut has_lambda = false;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut lambda = Vec::new();
        for line in text.lines() {
            if let Some(h) = line.strip_prefix('#') {
                let h = h.trim();
                if let Some(v) = h.strip_prefix("domain:") {
                    domain = v.trim().to_string();
                } else if let Some(v) = h.strip_prefix("kind:") {
                    kind = if v.trim() == "interior" {
                        GridKind::Interior
                    } else {
                        GridKind::Boundary
                    };
                } else if let Some(v) = h.strip_prefix("n:") {
                    n = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::InvalidParameter("bad n in grid header".into()))?;
                } else if let Some(v) = h.strip_prefix("resolution:") {
                    resolution = v.trim().to_string();
                } else if let Some(v) = h.strip_prefix("columns:") {
                    has_lambda = v.split_whitespace().any(|c| c == "lambda");
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidParameter(format!("grid row: {e}")))?;
            let want = 2 * n + 1 + usize::from(has_lambda);
            if n == 0 || vals.len() != want {
                return Err(Error::Shape(format!(
                    "grid row has {} columns, expected {want}",
                    vals.len()
                )));
            }
            let mut p = [czero(); 2];
            for j in 0..n {
                p[j] = cplx(lit(vals[2 * j]), lit(vals[2 * j + 1]));
            }
            nodes.push(p);
            weights.push(lit(vals[2 * n]));
            if has_lambda {
                lambda.push(lit(vals[2 * n + 1]));
            }
        }
        let separation = min_separation(&nodes, n);
        Ok(Self {
            kind,
            n,
            layout: Layout::Scattered,
            nodes,
            weights,
            leray_levi: has_lambda.then_some(lambda),
            resolution,
            domain,
            separation,
        })
    }
}

/// Minimum distance between distinct nodes (sweep over the first real
/// coordinate, pruned by the running minimum).
pub fn min_separation<T: Real>(nodes: &[Pt<T>], n: usize) -> T {
    if nodes.len() < 2 {
        return T::infinity();
    }
    let mut idx: Vec<usize> = (0..nodes.len()).collect();
    idx.sort_by(|a, b| {
        nodes[*a][0]
            .re
            .partial_cmp(&nodes[*b][0].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut best = T::infinity();
    for a in 0..idx.len() {
        let p = &nodes[idx[a]];
        for &jb in &idx[a + 1..] {
            let q = &nodes[jb];
            if q[0].re - p[0].re >= best {
                break;
            }
            let d = pt_dist(p, q, n);
            if d > T::zero() && d < best {
                best = d;
            }
        }
    }
    best
}

/// Unit sphere samples: direction, `dσ` weight.
fn sphere_grid<T: Real>(n: usize, n_per_dim: usize) -> Result<(Vec<Pt<T>>, Vec<T>, Layout)> {
    let tau = T::TAU();
    match n {
        1 => {
            let m = n_per_dim;
            let w = tau / lit(m as f64);
            let dirs = (0..m)
                .map(|j| {
                    let th = tau * lit((j as f64 + 0.5) / m as f64);
                    [cplx(th.cos(), th.sin()), czero()]
                })
                .collect();
            Ok((dirs, vec![w; m], Layout::Circle { m }))
        }
        2 => {
            let n_phi = n_per_dim;
            let n_eta = ((n_per_dim as f64) / 4.0).round().max(1.0) as usize;
            // Bands of equal area: uniform in s = sin²η, dσ = ½ ds dφ₁ dφ₂.
            let cell = lit::<T>(0.5) / lit(n_eta as f64) * (tau / lit(n_phi as f64)).powi(2);
            let mut dirs = Vec::with_capacity(n_eta * n_phi * n_phi);
            for k in 0..n_eta {
                let s: T = lit((k as f64 + 0.5) / n_eta as f64);
                let (c, sn) = ((T::one() - s).sqrt(), s.sqrt());
                for a in 0..n_phi {
                    let p1 = tau * lit((a as f64 + 0.5) / n_phi as f64);
                    for b in 0..n_phi {
                        let p2 = tau * lit((b as f64 + 0.5) / n_phi as f64);
                        dirs.push([
                            cplx(c * p1.cos(), c * p1.sin()),
                            cplx(sn * p2.cos(), sn * p2.sin()),
                        ]);
                    }
                }
            }
            let len = dirs.len();
            Ok((dirs, vec![cell; len], Layout::Hopf { n_eta, n_phi }))
        }
        _ => Err(Error::Unsupported(format!("complex dimension {n}"))),
    }
}

/// `R(u)` and the push-forward factor `R^{2n−1}|∇ρ|/(∇ρ·u)` along `u`.
fn radial_push<T: Real>(d: &DomainModel<T>, u: &Pt<T>) -> (T, T, Jet<T>) {
    let n = d.n();
    let r = d.radial(u);
    let mut p = [czero(); 2];
    for j in 0..n {
        p[j] = u[j] * r;
    }
    let jt = d.jet(&p);
    let mut dot = T::zero();
    for j in 0..n {
        dot += (jt.d[j] * u[j]).re;
    }
    // ∇ρ = 2 conj(∂ρ): |∇ρ| = 2|∂ρ|, ∇ρ·u = 2 Re Σ ρ_j u_j.
    let factor = r.powi(2 * n as i32 - 1) * jt.dnorm(n) / dot;
    (r, factor, jt)
}

/// Boundary grid with `N_per_dim` points per angular direction.
pub fn build_boundary_grid<T: Real>(d: &DomainModel<T>, n_per_dim: usize) -> Result<Grid<T>> {
    if n_per_dim < 16 {
        return Err(Error::InvalidParameter("N_per_dim must be >= 16".into()));
    }
    let n = d.n();
    let (dirs, dsig, layout) = sphere_grid::<T>(n, n_per_dim)?;
    let data: Vec<(Pt<T>, T, T)> = dirs
        .par_iter()
        .zip(dsig.par_iter())
        .map(|(u, s)| {
            let (r, f, jt) = radial_push(d, u);
            let mut p = [czero(); 2];
            for j in 0..n {
                p[j] = u[j] * r;
            }
            (p, f * *s, leray_levi_from_jet(d, &jt))
        })
        .collect();
    let nodes: Vec<Pt<T>> = data.iter().map(|x| x.0).collect();
    let separation = min_separation(&nodes, n);
    Ok(Grid {
        kind: GridKind::Boundary,
        n,
        layout,
        weights: data.iter().map(|x| x.1).collect(),
        leray_levi: Some(data.iter().map(|x| x.2).collect()),
        resolution: format!("N_per_dim={n_per_dim} nodes={}", nodes.len()),
        domain: d.describe(),
        nodes,
        separation,
    })
}

/// Layer edges in `t = 1 − s`, thinnest at the boundary.
fn layer_edges(layers: usize) -> Vec<f64> {
    let q = LAYER_RATIO;
    let first = (q - 1.0) / (q.powi(layers as i32) - 1.0);
    let mut edges = vec![0.0];
    let mut th = first;
    for _ in 0..layers {
        let last = *edges.last().unwrap();
        edges.push((last + th).min(1.0));
        th *= q;
    }
    *edges.last_mut().unwrap() = 1.0;
    edges
}

/// Angular node count per unit of `κ / (1 − s)` for the planar grid: close
/// to the boundary the kernels vary on the scale `1 − s`, so the circle
/// must be resolved at that scale.
pub const PLANAR_ANGULAR_KAPPA: f64 = 10.0;

/// Interior grid: `N_radial` geometric layers, two Gauss–Legendre radii per
/// layer. For n = 1 each circle gets at least `κ/(1−s)` nodes (rounded up to
/// a multiple of 8); for n = 2 every shell reuses the boundary sphere grid.
pub fn build_interior_grid<T: Real>(
    d: &DomainModel<T>,
    n_angular: usize,
    n_radial: usize,
) -> Result<Grid<T>> {
    if n_radial < 8 {
        return Err(Error::InvalidParameter("N_radial must be >= 8".into()));
    }
    let n = d.n();
    if !(1..=2).contains(&n) {
        return Err(Error::Unsupported(format!("complex dimension {n}")));
    }
    let edges = layer_edges(n_radial);
    let gl = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    // (s, ds weight)
    let mut radii = Vec::new();
    for k in 0..n_radial {
        let (t0, t1) = (edges[k], edges[k + 1]);
        for x in gl {
            let t = t0 + (t1 - t0) * x;
            radii.push((1.0 - t, 0.5 * (t1 - t0)));
        }
    }
    let fixed = if n == 2 {
        Some(sphere_grid::<T>(2, n_angular.max(16))?)
    } else {
        None
    };
    let shells: Vec<Vec<(Pt<T>, T)>> = radii
        .par_iter()
        .map(|&(s, ws)| {
            let (dirs, dsig) = match &fixed {
                Some((d2, w2, _)) => (d2.clone(), w2.clone()),
                None => {
                    let need = (PLANAR_ANGULAR_KAPPA / (1.0 - s)).ceil() as usize;
                    let m = n_angular.max(need.div_ceil(8) * 8);
                    let (d1, w1, _) = sphere_grid::<T>(1, m).expect("n = 1 sphere");
                    (d1, w1)
                }
            };
            let st: T = lit(s);
            dirs.iter()
                .zip(&dsig)
                .map(|(u, sg)| {
                    let r = d.radial(u);
                    let mut p = [czero(); 2];
                    for j in 0..n {
                        p[j] = u[j] * (r * st);
                    }
                    let w = lit::<T>(ws) * st.powi(2 * n as i32 - 1) * r.powi(2 * n as i32) * *sg;
                    (p, w)
                })
                .collect()
        })
        .collect();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for sh in shells {
        for (p, w) in sh {
            nodes.push(p);
            weights.push(w);
        }
    }
    let separation = min_separation(&nodes, n);
    Ok(Grid {
        kind: GridKind::Interior,
        n,
        layout: Layout::Layered { layers: n_radial },
        resolution: format!(
            "N_angular={n_angular} N_radial={n_radial} nodes={}",
            nodes.len()
        ),
        domain: d.describe(),
        nodes,
        weights,
        leray_levi: None,
        separation,
    })
}

/// Thickness of the innermost and outermost layers for `N_radial` layers.
pub fn layer_thickness_ratio(n_radial: usize) -> f64 {
    let e = layer_edges(n_radial);
    (e[n_radial] - e[n_radial - 1]) / (e[1] - e[0])
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// `Λ(w) = (n−1)!/(4πⁿ) |det ρ_T(w)| |∇ρ(w)|`, where `ρ_T` is the mixed
/// Hessian restricted to an orthonormal basis of the complex tangent space.
pub fn leray_levi_density<T: Real>(d: &DomainModel<T>, w: &Pt<T>) -> Result<T> {
    d.ensure_boundary(w)?;
    Ok(leray_levi_from_jet(d, &d.jet(w)))
}

pub fn leray_levi_from_jet<T: Real>(d: &DomainModel<T>, jw: &Jet<T>) -> T {
    let n = d.n();
    let basis = d.complex_tangent_basis(jw);
    let det = match basis.len() {
        0 => T::one(),
        1 => crate::geometry::hermitian_form(&jw.mixed, &basis[0], n),
        _ => unreachable!("n <= 2"),
    };
    let grad = jw.dnorm(n) * lit(2.0);
    lit::<T>(factorial(n - 1) / (4.0 * std::f64::consts::PI.powi(n as i32))) * det.abs() * grad
}

/// Scales of a local graded patch: the "thin" coordinates (complex normal
/// direction) are graded geometrically over `thin`, the "thick" ones
/// (complex tangential) over the square roots of that range.
#[derive(Clone, Copy, Debug)]
pub struct PatchSpec {
    pub thin: (f64, f64),
    pub ratio: f64,
    pub angles: usize,
}

/// Radial cells `(node radius, inner, outer)` of a disc graded from `lo` to
/// `hi`, preceded by the central cell of radius `lo`.
fn graded_rings(lo: f64, hi: f64, ratio: f64) -> Vec<(f64, f64, f64)> {
    let mut out = vec![(0.0, 0.0, lo)];
    let mut r = lo;
    while r < hi {
        let r2 = r * ratio;
        out.push((0.5 * (r + r2), r, r2));
        r = r2;
    }
    out
}

/// Symmetric graded 1D cells `(node, length)`.
fn graded_line(lo: f64, hi: f64, ratio: f64) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 2.0 * lo)];
    for (x, a, b) in graded_rings(lo, hi, ratio).into_iter().skip(1) {
        out.push((x, b - a));
        out.push((-x, b - a));
    }
    out
}

/// Polar graded disc cells `(x, y, area)`.
fn graded_disc(lo: f64, hi: f64, ratio: f64, angles: usize) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for (k, (r, a, b)) in graded_rings(lo, hi, ratio).into_iter().enumerate() {
        if k == 0 {
            out.push((0.0, 0.0, std::f64::consts::PI * b * b));
            continue;
        }
        let area = std::f64::consts::PI * (b * b - a * a) / angles as f64;
        let shift = if k % 2 == 0 { 0.5 } else { 0.0 };
        for j in 0..angles {
            let th = std::f64::consts::TAU * (j as f64 + shift) / angles as f64;
            out.push((r * th.cos(), r * th.sin(), area));
        }
    }
    out
}

/// Boundary patch centred at the boundary point in direction `u0`. Node 0
/// is the centre. The sphere is reached by central projection from the
/// tangent space at `u0` (`dσ = (1+|x|²)^{-n} dx`) and then pushed radially.
pub fn build_boundary_patch<T: Real>(d: &DomainModel<T>, u0: &Pt<T>, spec: PatchSpec) -> Result<Grid<T>> {
    let n = d.n();
    let (lo, hi) = spec.thin;
    let mut dirs: Vec<(Pt<T>, f64)> = Vec::new();
    match n {
        1 => {
            let th0 = u0[0].im.atan2(u0[0].re);
            for (x, len) in graded_line(lo, hi, spec.ratio) {
                let th = th0 + lit(x);
                dirs.push(([cplx(th.cos(), th.sin()), czero()], len));
            }
        }
        2 => {
            let i = cplx(T::zero(), T::one());
            let e1 = [u0[0] * i, u0[1] * i];
            let e2 = [-u0[1].conj(), u0[0].conj()];
            let e3 = [e2[0] * i, e2[1] * i];
            let line = graded_line(lo, hi, spec.ratio);
            let disc = graded_disc(lo.sqrt(), hi.sqrt(), spec.ratio, spec.angles);
            for (x1, l1) in &line {
                for (x2, x3, a2) in &disc {
                    let mut u = [czero(); 2];
                    for j in 0..2 {
                        u[j] = u0[j] + e1[j] * lit::<T>(*x1) + e2[j] * lit::<T>(*x2) + e3[j] * lit::<T>(*x3);
                    }
                    let nu = crate::scalar::pt_norm(&u, 2);
                    for v in u.iter_mut() {
                        *v = *v / nu;
                    }
                    let r2 = x1 * x1 + x2 * x2 + x3 * x3;
                    dirs.push((u, l1 * a2 / (1.0 + r2).powi(2)));
                }
            }
        }
        _ => return Err(Error::Unsupported(format!("complex dimension {n}"))),
    }
    let data: Vec<(Pt<T>, T)> = dirs
        .par_iter()
        .map(|(u, s)| {
            let (r, f, _) = radial_push(d, u);
            let mut p = [czero(); 2];
            for j in 0..n {
                p[j] = u[j] * r;
            }
            (p, f * lit(*s))
        })
        .collect();
    let nodes: Vec<Pt<T>> = data.iter().map(|x| x.0).collect();
    let lam = data
        .iter()
        .map(|x| leray_levi_from_jet(d, &d.jet(&x.0)))
        .collect();
    Ok(Grid {
        kind: GridKind::Boundary,
        n,
        layout: Layout::Scattered,
        weights: data.iter().map(|x| x.1).collect(),
        leray_levi: Some(lam),
        resolution: format!("patch thin=[{lo},{hi}] ratio={} nodes={}", spec.ratio, nodes.len()),
        domain: d.describe(),
        separation: T::zero(),
        nodes,
    })
}

/// Interior patch in the special coordinates at `center`: `ζ₁` graded over
/// `thin`, `ζ_j` (j ≥ 2) over its square root. Node 0 is the centre; nodes
/// falling outside the domain are dropped. The holomorphic change of
/// variables contributes `|∂ζ₁/∂ξ₁|^{-2}` to the volume element.
pub fn build_interior_patch<T: Real>(d: &DomainModel<T>, center: &Pt<T>, spec: PatchSpec) -> Result<Grid<T>> {
    let n = d.n();
    if d.rho(center) >= T::zero() {
        return Err(Error::OutsideDomain(to_f64(d.rho(center))));
    }
    let frame = crate::geometry::SpecialFrame::at(d, center, &d.jet(center));
    let (lo, hi) = spec.thin;
    let d1 = graded_disc(lo, hi, spec.ratio, spec.angles);
    let d2 = if n == 2 {
        graded_disc(lo.sqrt(), hi.sqrt(), spec.ratio, spec.angles)
    } else {
        vec![(0.0, 0.0, 1.0)]
    };
    let cells: Vec<(Pt<T>, f64)> = d1
        .iter()
        .flat_map(|a| {
            d2.iter().map(move |b| {
                let z: Pt<T> = [cplx(lit(a.0), lit(a.1)), cplx(lit(b.0), lit(b.1))];
                (z, a.2 * b.2)
            })
        })
        .collect();
    let data: Vec<Option<(Pt<T>, T)>> = cells
        .par_iter()
        .map(|(zeta, area)| {
            let z = frame.inverse(zeta);
            if d.rho(&z) >= T::zero() {
                return None;
            }
            let mut xi = [czero(); 2];
            for a in 0..n {
                for j in 0..n {
                    xi[a] += frame.unitary[j][a].conj() * (z[j] - center[j]);
                }
            }
            let mut dz1 = cplx(T::one(), T::zero());
            for b in 0..n {
                dz1 += frame.shear[0][b] * xi[b] / frame.dnorm;
            }
            Some((z, lit::<T>(*area) / dz1.norm_sqr()))
        })
        .collect();
    let (nodes, weights): (Vec<Pt<T>>, Vec<T>) = data.into_iter().flatten().unzip();
    Ok(Grid {
        kind: GridKind::Interior,
        n,
        layout: Layout::Scattered,
        resolution: format!("patch thin=[{lo},{hi}] ratio={} nodes={}", spec.ratio, nodes.len()),
        domain: d.describe(),
        nodes,
        weights,
        leray_levi: None,
        separation: T::zero(),
    })
}

/// One dyadic shell `2^{−(i+1)}δ ≤ dist < 2^{−i}δ` around a centre.
#[derive(Clone, Debug)]
pub struct Shell<T: Real> {
    pub index: usize,
    pub inner: T,
    pub outer: T,
    pub members: Vec<usize>,
    /// `Σ f(node, dist) · weight` over the shell.
    pub sum: T,
}

/// Splits the punctured ball `{0 < dist < δ}` into dyadic shells and sums
/// `f · weight` over each.
pub fn dyadic_annuli<T, D, F>(grid: &Grid<T>, center: &Pt<T>, delta: T, dist: D, f: F) -> Vec<Shell<T>>
where
    T: Real,
    D: Fn(&Pt<T>, &Pt<T>) -> T + Sync,
    F: Fn(usize, T) -> T + Sync,
{
    let dists: Vec<T> = grid.nodes.par_iter().map(|p| dist(center, p)).collect();
    let min_pos = dists
        .iter()
        .copied()
        .filter(|x| *x > T::zero())
        .fold(T::infinity(), |a, b| a.min(b));
    let mut shells = Vec::new();
    if !min_pos.is_finite() {
        return shells;
    }
    let two = lit::<T>(2.0);
    let mut outer = delta;
    let mut i = 0;
    loop {
        let inner = outer / two;
        let mut sh = Shell {
            index: i,
            inner,
            outer,
            members: Vec::new(),
            sum: T::zero(),
        };
        for (k, dk) in dists.iter().enumerate() {
            if *dk >= inner && *dk < outer {
                sh.members.push(k);
                sh.sum += f(k, *dk) * grid.weights[k];
            }
        }
        shells.push(sh);
        if inner <= min_pos {
            break;
        }
        outer = inner;
        i += 1;
    }
    shells
}
