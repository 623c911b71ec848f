use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{fmt_pt, scale, DomainModel};
use crate::error::{Error, Result};
use crate::scalar::{cplx, czero, lit, pt_dist, to_f64, Pt, Real};

fn random_direction<T: Real, R: Rng>(n: usize, rng: &mut R) -> Pt<T> {
    loop {
        let v: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
        let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if s > 1e-12 {
            let mut p = [czero(); 2];
            for j in 0..n {
                p[j] = cplx(lit(v[2 * j] / s), lit(v[2 * j + 1] / s));
            }
            return p;
        }
    }
}

/// Boundary point along a Gaussian-random direction.
pub fn random_boundary_point<T: Real, R: Rng>(d: &DomainModel<T>, rng: &mut R) -> Pt<T> {
    let u = random_direction(d.n(), rng);
    d.boundary_point(&u)
}

/// Interior point, uniform in the star-shaped parametrisation.
pub fn random_interior_point<T: Real, R: Rng>(d: &DomainModel<T>, rng: &mut R) -> Pt<T> {
    let u = random_direction(d.n(), rng);
    let s: f64 = rng.gen::<f64>().powf(1.0 / (2 * d.n()) as f64) * 0.999;
    scale(&u, d.radial(&u) * lit(s), d.n())
}

/// Boundary point at a log-uniform distance from `w` (in direction space).
/// With `along_normal` the offset follows `iν`, the real tangent direction
/// inside the complex normal line, where a failing Levi form shows first.
fn boundary_near<T: Real, R: Rng>(
    d: &DomainModel<T>,
    w: &Pt<T>,
    along_normal: bool,
    rng: &mut R,
) -> Pt<T> {
    let n = d.n();
    let t = 10f64.powf(rng.gen_range(-3.0..0.0));
    let mut e: Pt<T> = random_direction(n, rng);
    if along_normal {
        let nu = d.jet(w).normal(n);
        let sgn = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        for j in 0..n {
            e[j] = nu[j] * cplx(T::zero(), lit(sgn)) + e[j] * lit::<T>(0.05);
        }
    }
    let nw = crate::scalar::pt_norm(w, n);
    let mut u = [czero(); 2];
    for j in 0..n {
        u[j] = w[j] / nw + e[j] * lit::<T>(t);
    }
    let nu = crate::scalar::pt_norm(&u, n);
    for uj in u.iter_mut().take(n) {
        *uj = *uj / nu;
    }
    d.boundary_point(&u)
}

/// Pair sampler shared by the coercivity checks: far pairs, near pairs in a
/// random direction, near pairs along `iν`, and near pairs pushed inside.
/// `hot` optionally supplies base points for the normal-direction pairs.
pub(crate) fn sample_pair<T: Real, R: Rng>(
    d: &DomainModel<T>,
    i: usize,
    hot: &[Pt<T>],
    rng: &mut R,
) -> (Pt<T>, Pt<T>) {
    let w = if i % 4 == 2 && !hot.is_empty() && i % 8 == 2 {
        hot[(i / 8) % hot.len()]
    } else {
        random_boundary_point(d, rng)
    };
    let z = match i % 4 {
        0 => random_boundary_point(d, rng),
        1 => boundary_near(d, &w, false, rng),
        2 => boundary_near(d, &w, true, rng),
        _ => {
            let zb = boundary_near(d, &w, i % 8 == 3, rng);
            let s = 1.0 - 10f64.powf(rng.gen_range(-3.0..-0.3));
            scale(&zb, lit(s), d.n())
        }
    };
    (w, z)
}

fn min_levi_eigenvalue<T: Real>(m: &[[num_complex::Complex<T>; 2]; 2], n: usize) -> T {
    if n == 1 {
        return m[0][0].re;
    }
    let a = m[0][0].re;
    let c = m[1][1].re;
    let half = (a - c) * lit(0.5);
    (a + c) * lit(0.5) - (half * half + m[0][1].norm_sqr()).sqrt()
}

/// The 2% of a random boundary pool with the smallest mixed-Hessian
/// eigenvalue. Failures of coercivity concentrate there, and uniform
/// sampling alone can miss a small bad patch.
pub(crate) fn low_levi_points<T: Real, R: Rng>(d: &DomainModel<T>, pool: usize, rng: &mut R) -> Vec<Pt<T>> {
    let mut pts: Vec<(T, Pt<T>)> = (0..pool)
        .map(|_| {
            let w = random_boundary_point(d, rng);
            (min_levi_eigenvalue(&d.jet(&w).mixed, d.n()), w)
        })
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    pts.truncate((pool / 50).max(1));
    pts.into_iter().map(|(_, w)| w).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Coercivity {
    pub kappa_boundary: f64,
    pub kappa_interior: f64,
    pub worst_pair: (String, String),
    pub samples: usize,
}

/// Sampled infimum of `Re g / (−ρ(z) + |w−z|²)` over boundary `w`, and of
/// `Re g / (−ρ(w) − ρ(z) + |w−z|²)` for the interior `g`.
pub fn verify_coercivity<T: Real>(
    d: &DomainModel<T>,
    sample_count: usize,
    seed: u64,
) -> Result<Coercivity> {
    if sample_count < 100 {
        return Err(Error::InvalidParameter("sample_count must be >= 100".into()));
    }
    let n = d.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hot = low_levi_points(d, sample_count.max(1000), &mut rng);
    let mut kb = f64::INFINITY;
    let mut ki = f64::INFINITY;
    let mut worst_b = (String::new(), String::new());
    let mut worst_i = (String::new(), String::new());
    for i in 0..sample_count {
        let (w, z) = sample_pair(d, i, &hot, &mut rng);
        let dist = pt_dist(&w, &z, n);
        if dist < lit(1e-12) {
            continue;
        }
        let jw = d.jet(&w);
        let rz = d.rho(&z);
        let ratio = to_f64(d.g_boundary_jet(&w, &jw, &z).re / (-rz + dist * dist));
        if ratio < kb {
            kb = ratio;
            worst_b = (fmt_pt(&w, n), fmt_pt(&z, n));
        }

        // Interior pair: pull w inside as well.
        let sw = 1.0 - 10f64.powf(rng.gen_range(-4.0..-0.3));
        let wi = scale(&w, lit(sw), n);
        let jwi = d.jet(&wi);
        let di = pt_dist(&wi, &z, n);
        if di < lit(1e-12) {
            continue;
        }
        let den = -jwi.rho - rz + di * di;
        let ratio = to_f64(d.g_interior_jet(&wi, &jwi, &z).re / den);
        if ratio < ki {
            ki = ratio;
            worst_i = (fmt_pt(&wi, n), fmt_pt(&z, n));
        }
    }
    if !(kb > 0.0) {
        return Err(Error::FailedCoercivity {
            kappa: kb,
            w: worst_b.0,
            z: worst_b.1,
        });
    }
    if !(ki > 0.0) {
        return Err(Error::FailedCoercivity {
            kappa: ki,
            w: worst_i.0,
            z: worst_i.1,
        });
    }
    let worst_pair = if kb <= ki { worst_b } else { worst_i };
    Ok(Coercivity {
        kappa_boundary: kb,
        kappa_interior: ki,
        worst_pair,
        samples: sample_count,
    })
}

/// Picks the cutoff radius with the largest sampled coercivity constant.
pub fn choose_cutoff<T: Real>(
    n: usize,
    amplitude: f64,
    frequency: u32,
    candidates: &[f64],
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &c in candidates {
        let d = DomainModel::<T>::perturbed_ball(n, amplitude, frequency, c)?;
        if let Ok(k) = verify_coercivity(&d, samples, seed) {
            let kap = k.kappa_boundary.min(k.kappa_interior);
            if best.map_or(true, |(_, b)| kap > b) {
                best = Some((c, kap));
            }
        }
    }
    best.ok_or_else(|| Error::FailedCoercivity {
        kappa: 0.0,
        w: "-".into(),
        z: "no admissible cutoff".into(),
    })
}

/// Sampled checks of the basic domain invariants.
#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub max_interior_rho: f64,
    pub max_boundary_abs_rho: f64,
    pub min_boundary_dnorm: f64,
    pub min_levi_eigenvalue: f64,
}

impl InvariantReport {
    pub fn ok(&self) -> bool {
        self.max_interior_rho < 0.0
            && self.max_boundary_abs_rho <= 1e-10
            && self.min_boundary_dnorm > 0.0
            && self.min_levi_eigenvalue > 0.0
    }
}

pub fn check_invariants<T: Real>(d: &DomainModel<T>, samples: usize, seed: u64) -> InvariantReport {
    let n = d.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = InvariantReport {
        max_interior_rho: f64::NEG_INFINITY,
        max_boundary_abs_rho: 0.0,
        min_boundary_dnorm: f64::INFINITY,
        min_levi_eigenvalue: f64::INFINITY,
    };
    for _ in 0..samples {
        let z = random_interior_point(d, &mut rng);
        r.max_interior_rho = r.max_interior_rho.max(to_f64(d.rho(&z)));
        let w = random_boundary_point(d, &mut rng);
        let jw = d.jet(&w);
        r.max_boundary_abs_rho = r.max_boundary_abs_rho.max(to_f64(jw.rho.abs()));
        r.min_boundary_dnorm = r.min_boundary_dnorm.min(to_f64(jw.dnorm(n)));
        let eig = min_levi_eigenvalue(&jw.mixed, n);
        r.min_levi_eigenvalue = r.min_levi_eigenvalue.min(to_f64(eig));
    }
    r
}
