//! Reproducible experiments. Each runner takes a [`Plan`], measures, and
//! returns an [`Outcome`] whose checks carry the acceptance tolerances.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{pt, verify_coercivity};
use crate::kerzman_stein::{
    double_norm, improvement_check, neumann_check, reconstruct_projection, skew_part, skew_size_check,
    symmetry_defect_fit, weighted_operator_norm, Projection, ResolventMethod, SkewView,
};
use crate::metric::{dist_to_boundary, structure_constants, Metric, MetricTag};
use crate::operators::{
    build_bergman_main, build_c_sharp, build_cauchy_fantappie, monomial, relative_residual, sample, KernelMatrix, LazyCSharp, LinearOperator,
};
use crate::quadrature::{
    build_boundary_grid, build_boundary_patch, build_interior_grid, build_interior_patch, Grid, Layout, PatchSpec,
};
use crate::report::{Check, Outcome, ReconstructionReport, SweepRow};
use crate::weights::{make_weight, BallFamily, BallMode, WeightFamily};
use crate::{Domain, Point, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExperimentKind {
    DiskSzego,
    DiskBergman,
    BallMonomials,
    MetricScaling,
    SymmetryDefect,
    SkewDecay,
    WeightedSweep,
    Resolvent,
    Improvement,
    DoubleNorm,
    Reconstruct,
}

impl ExperimentKind {
    pub const ALL: [Self; 11] = [
        Self::DiskSzego,
        Self::DiskBergman,
        Self::BallMonomials,
        Self::MetricScaling,
        Self::SymmetryDefect,
        Self::SkewDecay,
        Self::WeightedSweep,
        Self::Resolvent,
        Self::Improvement,
        Self::DoubleNorm,
        Self::Reconstruct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DiskSzego => "disk-szego",
            Self::DiskBergman => "disk-bergman",
            Self::BallMonomials => "ball-monomials",
            Self::MetricScaling => "metric-scaling",
            Self::SymmetryDefect => "symmetry-defect",
            Self::SkewDecay => "skew-decay",
            Self::WeightedSweep => "weighted-sweep",
            Self::Resolvent => "resolvent",
            Self::Improvement => "improvement",
            Self::DoubleNorm => "double-norm",
            Self::Reconstruct => "reconstruct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::DiskSzego => "disk Szego oracle",
            Self::DiskBergman => "disk Bergman oracle",
            Self::BallMonomials => "ball n=2 monomial reproduction",
            Self::MetricScaling => "metric ball volume scaling",
            Self::SymmetryDefect => "cubic symmetry defect",
            Self::SkewDecay => "skew kernel decay",
            Self::WeightedSweep => "weighted norm sweep",
            Self::Resolvent => "resolvent and Neumann bound",
            Self::Improvement => "L^p improvement of the skew part",
            Self::DoubleNorm => "double-norm compactness split",
            Self::Reconstruct => "projection reconstruction",
        }
    }
}

/// Model domain as written in configs: `ball N`, `ellipsoid a1 [a2]`,
/// `perturbed N [amplitude [frequency [cutoff]]]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum DomainSpec {
    Ball { n: usize },
    Ellipsoid { a: Vec<f64> },
    Perturbed { n: usize, amplitude: f64, frequency: u32, cutoff: f64 },
}

impl DomainSpec {
    pub fn perturbed(n: usize) -> Self {
        Self::Perturbed {
            n,
            amplitude: 0.05,
            frequency: 3,
            cutoff: 0.5,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Ball { n } | Self::Perturbed { n, .. } => *n,
            Self::Ellipsoid { a } => a.len(),
        }
    }

    pub fn build(&self) -> Result<Domain> {
        match self {
            Self::Ball { n } => Domain::unit_ball(*n),
            Self::Ellipsoid { a } => Domain::ellipsoid(a),
            Self::Perturbed {
                n,
                amplitude,
                frequency,
                cutoff,
            } => Domain::perturbed_ball(*n, *amplitude, *frequency, *cutoff),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let head = it.next().unwrap_or("");
        let nums: Vec<f64> = it
            .map(|x| x.parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad number {x:?} in domain"))))
            .collect::<Result<_>>()?;
        let dim = |i: usize| -> Result<usize> {
            match nums.get(i) {
                Some(&v) if v == 1.0 || v == 2.0 => Ok(v as usize),
                _ => Err(Error::InvalidParameter(format!("domain {s:?} needs dimension 1 or 2"))),
            }
        };
        match head {
            "ball" if nums.len() == 1 => Ok(Self::Ball { n: dim(0)? }),
            "ellipsoid" if (1..=2).contains(&nums.len()) => Ok(Self::Ellipsoid { a: nums }),
            "perturbed" if (1..=4).contains(&nums.len()) => {
                let mut d = Self::perturbed(dim(0)?);
                if let Self::Perturbed {
                    amplitude,
                    frequency,
                    cutoff,
                    ..
                } = &mut d
                {
                    if let Some(v) = nums.get(1) {
                        *amplitude = *v;
                    }
                    if let Some(v) = nums.get(2) {
                        *frequency = *v as u32;
                    }
                    if let Some(v) = nums.get(3) {
                        *cutoff = *v;
                    }
                }
                Ok(d)
            }
            _ => Err(Error::InvalidParameter(format!("unknown domain {s:?}"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Ball { n } => format!("ball {n}"),
            Self::Ellipsoid { a } => {
                let parts: Vec<String> = a.iter().map(|x| x.to_string()).collect();
                format!("ellipsoid {}", parts.join(" "))
            }
            Self::Perturbed {
                n,
                amplitude,
                frequency,
                cutoff,
            } => format!("perturbed {n} {amplitude} {frequency} {cutoff}"),
        }
    }
}

/// Everything an experiment reads. Empty lists fall back to the defaults
/// of [`Plan::new`]; which list means what is documented per experiment.
#[derive(Clone, Debug, Serialize)]
pub struct Plan {
    pub kind: ExperimentKind,
    pub domains: Vec<DomainSpec>,
    /// Boundary grid sizes (`N_per_dim`).
    pub resolutions: Vec<usize>,
    /// Interior grid layer counts (`N_radial`).
    pub layers: Vec<usize>,
    /// Interior grid angular count (`N_angular`).
    pub angular: usize,
    pub tags: Vec<MetricTag>,
    /// Weight exponents `t`.
    pub exponents: Vec<f64>,
    pub p: Vec<f64>,
    pub epsilon: f64,
    pub samples: usize,
    pub seed: u64,
    #[serde(skip)]
    pub dump_dir: Option<PathBuf>,
}

impl Plan {
    /// The acceptance configuration of `kind`.
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        use ExperimentKind::*;
        let disk = DomainSpec::Ball { n: 1 };
        let ell = DomainSpec::Ellipsoid { a: vec![1.0, 2.0] };
        let mut p = Self {
            kind,
            domains: vec![disk.clone()],
            resolutions: vec![],
            layers: vec![],
            angular: 32,
            tags: vec![MetricTag::BoundarySzego],
            exponents: vec![],
            p: vec![2.0],
            epsilon: 0.5,
            samples: 2000,
            seed,
            dump_dir: None,
        };
        match kind {
            DiskSzego => p.resolutions = vec![1024],
            DiskBergman => {
                p.layers = vec![12];
                p.tags = vec![MetricTag::InteriorMcNeal];
            }
            BallMonomials => {
                p.domains = vec![DomainSpec::Ball { n: 2 }];
                p.resolutions = vec![16, 25, 40];
            }
            MetricScaling => {
                p.domains = vec![disk, DomainSpec::Ball { n: 2 }];
                p.tags = vec![MetricTag::BoundarySzego, MetricTag::InteriorMcNeal];
            }
            SymmetryDefect => p.domains = vec![ell, DomainSpec::perturbed(2)],
            SkewDecay => {
                p.domains = vec![ell, DomainSpec::perturbed(1)];
                p.resolutions = vec![20, 25];
                p.layers = vec![8, 9];
                p.tags = vec![MetricTag::BoundarySzego, MetricTag::InteriorMcNeal];
            }
            WeightedSweep => {
                p.resolutions = vec![128, 256, 512, 1024];
                p.exponents = vec![-1.5, -1.0, 0.0, 1.0, 1.5, 2.5];
            }
            Resolvent => {
                p.domains = vec![
                    disk,
                    DomainSpec::Ball { n: 2 },
                    ell,
                    DomainSpec::perturbed(1),
                    DomainSpec::perturbed(2),
                ];
                // Indexed by complex dimension.
                p.resolutions = vec![256, 16];
                p.layers = vec![8];
            }
            Improvement => {
                p.domains = vec![DomainSpec::perturbed(1)];
                p.resolutions = vec![128, 256, 512];
                p.p = vec![1.0];
                p.samples = 200;
            }
            DoubleNorm => {
                p.domains = vec![DomainSpec::perturbed(1)];
                p.resolutions = vec![128, 256, 512];
            }
            Reconstruct => {
                p.domains = vec![disk, DomainSpec::perturbed(1)];
                p.resolutions = vec![65, 129, 257];
            }
        }
        p
    }
}

/// Samples the coercivity of every configured domain; a failure comes back
/// as `Error::FailedCoercivity`.
pub fn check_domains(plan: &Plan) -> Result<Vec<Domain>> {
    plan.domains
        .iter()
        .map(|s| {
            let d = s.build()?;
            verify_coercivity(&d, 2000, plan.seed)?;
            Ok(d)
        })
        .collect()
}

pub fn run(plan: &Plan) -> Result<Outcome> {
    let domains = check_domains(plan)?;
    let start = Instant::now();
    let mut out = match plan.kind {
        ExperimentKind::DiskSzego => disk_szego(plan, &domains)?,
        ExperimentKind::DiskBergman => disk_bergman(plan, &domains)?,
        ExperimentKind::BallMonomials => ball_monomials(plan, &domains)?,
        ExperimentKind::MetricScaling => metric_scaling(plan, &domains)?,
        ExperimentKind::SymmetryDefect => symmetry_defect(plan, &domains)?,
        ExperimentKind::SkewDecay => skew_decay(plan, &domains)?,
        ExperimentKind::WeightedSweep => weighted_sweep(plan, &domains)?,
        ExperimentKind::Resolvent => resolvent(plan, &domains)?,
        ExperimentKind::Improvement => improvement(plan, &domains)?,
        ExperimentKind::DoubleNorm => double_norm_split(plan, &domains)?,
        ExperimentKind::Reconstruct => reconstruct(plan, &domains)?,
    };
    out.runtime_s = start.elapsed().as_secs_f64();
    if let Some(limit) = runtime_limit(plan.kind) {
        out.checks.push(Check::at_most("runtime [s]", out.runtime_s, limit));
    }
    Ok(out)
}

fn runtime_limit(kind: ExperimentKind) -> Option<f64> {
    use ExperimentKind::*;
    match kind {
        DiskSzego => Some(10.0),
        DiskBergman => Some(60.0),
        BallMonomials => Some(600.0),
        MetricScaling => Some(120.0),
        SymmetryDefect => Some(60.0),
        WeightedSweep => Some(300.0),
        _ => None,
    }
}

fn outcome(plan: &Plan, checks: Vec<Check>, notes: Vec<String>, data: serde_json::Value) -> Outcome {
    Outcome {
        id: plan.kind.name().to_string(),
        title: plan.kind.title().to_string(),
        checks,
        runtime_s: 0.0,
        notes,
        data,
    }
}

fn dump(plan: &Plan, label: &str, k: &KernelMatrix<f64>) -> Result<()> {
    if let Some(dir) = &plan.dump_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}-{label}.txt", plan.kind.name()));
        k.dump(BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn first_domain<'a>(domains: &'a [Domain], n: Option<usize>, what: &str) -> Result<&'a Domain> {
    let d = domains
        .first()
        .ok_or_else(|| Error::InvalidParameter(format!("{what} needs a domain")))?;
    match n {
        Some(n) if d.n() != n => Err(Error::InvalidParameter(format!("{what} needs complex dimension {n}"))),
        _ => Ok(d),
    }
}

fn require_disk(d: &Domain, what: &str) -> Result<()> {
    if d.n() != 1 || !matches!(d.kind(), crate::DomainKind::UnitBall) {
        return Err(Error::InvalidParameter(format!("{what} runs on the unit disk")));
    }
    Ok(())
}

fn l2(f: &[C64], w: &[f64]) -> f64 {
    f.iter().zip(w).map(|(a, b)| a.norm_sqr() * b).sum::<f64>().sqrt()
}

fn ratio_range(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mn = v.iter().copied().fold(f64::INFINITY, f64::min);
    mx / mn
}

fn growth(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] / w[0]).collect()
}

fn random_vector(n: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex::new(a, b)
        })
        .collect()
}

fn disk_szego(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let d = first_domain(domains, Some(1), "disk-szego")?;
    require_disk(d, "disk-szego")?;
    let n = plan.resolutions.first().copied().unwrap_or(1024);
    let g = build_boundary_grid(d, n)?;
    let k = build_c_sharp(d, &g)?;
    dump(plan, "csharp", &k)?;
    let s = skew_part(&k, MetricTag::BoundarySzego, 1)?;
    let a_max = s.a.max_abs();
    let (p, rep) = reconstruct_projection(&k, &s.a, ResolventMethod::Direct, plan.seed)?;
    let mut residuals = Vec::new();
    for kk in 0..=16 {
        let f = sample(&g, monomial([kk, 0]));
        residuals.push((format!("z^{kk}"), relative_residual(&p.apply(&f), &f, &g.weights)));
    }
    for kk in 1..=8u32 {
        let f = sample(&g, |z: &Point| z[0].conj().powu(kk));
        residuals.push((format!("conj(z)^{kk}"), l2(&p.apply(&f), &g.weights) / l2(&f, &g.weights)));
    }
    let worst = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    let report = ReconstructionReport {
        domain: d.describe(),
        grid: g.resolution.clone(),
        nodes: g.len(),
        skew_norm: rep.skew_norm,
        skew_max: a_max,
        condition_estimate: rep.condition_estimate,
        idempotence_defect: rep.idempotence_defect,
        self_adjointness_defect: rep.self_adjointness_defect,
        residuals,
    };
    let mut notes = Vec::new();
    if n % 2 == 0 {
        notes.push(format!(
            "even N: the sampled mode e^(i{}θ) is mapped to one half, so ‖P²−P‖ = 1/4 exactly",
            n / 2
        ));
    }
    Ok(outcome(
        plan,
        vec![
            Check::at_most("max |A_ij|", a_max, 1e-9),
            Check::at_most("max relative L2 error", worst, 1e-6),
        ],
        notes,
        json!({ "reconstruction": report }),
    ))
}

fn disk_bergman(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let d = first_domain(domains, Some(1), "disk-bergman")?;
    require_disk(d, "disk-bergman")?;
    let layers = plan.layers.first().copied().unwrap_or(12);
    let g = build_interior_grid(d, plan.angular, layers)?;
    let k = build_bergman_main(d, &g)?;
    dump(plan, "bergman-main", &k)?;
    let a = SkewView { k: &k };
    let a_max = a.max_abs();
    let nu_bound = a.hilbert_schmidt();
    // Enough terms that the truncation is below 1e−14 relative.
    let terms = if nu_bound == 0.0 {
        1
    } else if nu_bound < 1.0 {
        ((1e-14 * (1.0 - nu_bound)).ln() / nu_bound.ln()).ceil().clamp(1.0, 200.0) as usize
    } else {
        return Err(Error::Unsupported(format!(
            "‖A‖ bound {nu_bound:.3e} ≥ 1 on the disk; the Neumann inverse does not apply"
        )));
    };
    let b = Projection::neumann(&k, &a, terms);
    let mut reproduction = Vec::new();
    for kk in 0..=8 {
        let f = sample(&g, monomial([kk, 0]));
        reproduction.push(relative_residual(&b.apply(&f), &f, &g.weights));
    }
    let f = sample(&g, |z: &Point| z[0].conj());
    let annihilation = l2(&b.apply(&f), &g.weights) / l2(&f, &g.weights);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let vals: Vec<C64> = (0..2000)
        .map(|_| {
            let (i, j) = loop {
                let i = rng.gen_range(0..g.len());
                let j = rng.gen_range(0..g.len());
                if i != j {
                    break (i, j);
                }
            };
            let (z, w) = (g.nodes[i][0], g.nodes[j][0]);
            let one = Complex::new(1.0, 0.0);
            k.kernel(i, j) * (one - z * w.conj()).powu(2)
        })
        .collect();
    let mean = vals.iter().sum::<C64>() / vals.len() as f64;
    let spread = vals.iter().map(|v| (v - mean).norm() / mean.norm()).fold(0.0, f64::max);
    let worst = reproduction.iter().copied().fold(0.0, f64::max);
    Ok(outcome(
        plan,
        vec![
            Check::at_least("interior nodes", g.len() as f64, 8000.0),
            Check::at_most("max |A_ij|", a_max, 1e-9),
            Check::at_most("max relative error z^k, k<=8", worst, 1e-2),
            Check::at_most("relative size of B(conj z)", annihilation, 1e-2),
            Check::at_most("spread of K1·(1−z conj w)^2", spread, 1e-2),
        ],
        vec![format!("Neumann inverse with {terms} terms, ‖A‖ ≤ {nu_bound:.3e}")],
        json!({
            "grid": g.resolution,
            "nodes": g.len(),
            "skew_max": a_max,
            "skew_hilbert_schmidt": nu_bound,
            "neumann_terms": terms,
            "reproduction": reproduction,
            "annihilation": annihilation,
            "constant_mean": [mean.re, mean.im],
            "constant_spread": spread,
        }),
    ))
}

const BALL_MONOMIALS: [[u32; 2]; 10] = [
    [0, 0],
    [1, 0],
    [0, 1],
    [2, 0],
    [1, 1],
    [0, 2],
    [3, 0],
    [2, 1],
    [1, 2],
    [0, 3],
];

fn ball_monomials(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let d = first_domain(domains, Some(2), "ball-monomials")?;
    let mut rows = Vec::new();
    for &npd in &plan.resolutions {
        let t = Instant::now();
        let g = build_boundary_grid(d, npd)?;
        let c = LazyCSharp::new(d, &g)?;
        let skew = c.skew_max();
        let fs: Vec<Vec<C64>> = BALL_MONOMIALS.iter().map(|a| sample(&g, monomial(*a))).collect();
        let outs = c.apply_many(&fs);
        let res: Vec<f64> = outs.iter().zip(&fs).map(|(o, f)| relative_residual(o, f, &g.weights)).collect();
        let worst = res.iter().copied().fold(0.0, f64::max);
        rows.push(json!({
            "n_per_dim": npd,
            "nodes": g.len(),
            "residual": worst,
            "per_monomial": res,
            "skew_max": skew,
            "seconds": t.elapsed().as_secs_f64(),
        }));
    }
    let res: Vec<f64> = rows.iter().map(|r| r["residual"].as_f64().unwrap()).collect();
    let skew = rows.iter().map(|r| r["skew_max"].as_f64().unwrap()).fold(0.0, f64::max);
    let monotone = res.len() >= 2 && res.windows(2).all(|w| w[1] < w[0]);
    Ok(outcome(
        plan,
        vec![
            Check::holds("residual decreases monotonically", monotone),
            Check::at_most("max |A_ij|", skew, 1e-9),
        ],
        vec![],
        json!({ "levels": rows }),
    ))
}

/// Direction of the patch centre used by the scaling experiment.
fn patch_direction(n: usize) -> Point {
    if n == 1 {
        pt((1.0, 0.0), (0.0, 0.0))
    } else {
        pt((0.6, 0.0), (0.8, 0.0))
    }
}

fn metric_scaling(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for d in domains {
        let n = d.n();
        let u0 = patch_direction(n);
        for &tag in &plan.tags {
            let (g, radii, target) = match tag {
                MetricTag::BoundarySzego => {
                    let g = build_boundary_patch(
                        d,
                        &u0,
                        PatchSpec {
                            thin: (1e-6, 0.05),
                            ratio: 1.15,
                            angles: 24,
                        },
                    )?;
                    let radii: Vec<f64> = (0..=8).map(|k| 0.01 * 10f64.powf(k as f64 / 8.0)).collect();
                    (g, radii, 2.0 * n as f64)
                }
                MetricTag::InteriorMcNeal => {
                    let b = d.boundary_point(&u0);
                    let c = pt((0.8 * b[0].re, 0.8 * b[0].im), (0.8 * b[1].re, 0.8 * b[1].im));
                    let g = build_interior_patch(
                        d,
                        &c,
                        PatchSpec {
                            thin: (1e-5, 0.1),
                            ratio: 1.15,
                            angles: 24,
                        },
                    )?;
                    let radii: Vec<f64> = (0..=8).map(|k| 0.004 * 10f64.powf(k as f64 / 8.0)).collect();
                    (g, radii, n as f64 + 1.0)
                }
            };
            let m = Metric::new(d, tag);
            let sc = structure_constants(&m, &g, &[0], &radii, 400, plan.seed)?;
            let label = format!("{} {:?}", d.describe(), tag);
            checks.push(Check::at_most(
                format!("|slope − {target}| ({label})"),
                (sc.volume_slope - target).abs(),
                0.15,
            ));
            rows.push(json!({
                "domain": d.describe(),
                "tag": tag,
                "nodes": g.len(),
                "slope": sc.volume_slope,
                "slope_ci95": sc.volume_slope_ci,
                "target": target,
                "radii": radii,
                "doubling": sc.doubling_c,
                "quasi_triangle": sc.quasi_triangle_a0,
            }));
        }
    }
    Ok(outcome(plan, checks, vec![], json!({ "fits": rows })))
}

fn symmetry_defect(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut rows = Vec::new();
    for d in domains {
        let a = symmetry_defect_fit(d, plan.samples, plan.seed)?;
        let b = symmetry_defect_fit(d, plan.samples, plan.seed.wrapping_add(1))?;
        let label = d.describe();
        match (a.slope, b.slope) {
            (Some(sa), Some(sb)) => {
                checks.push(Check::at_least(format!("defect exponent ({label})"), sa, 2.7));
                checks.push(Check::at_most(format!("exponent change across seeds ({label})"), (sa - sb).abs(), 0.1));
            }
            _ => {
                notes.push(format!(
                    "{label}: symmetric to round-off (max defect {:.2e}), no exponent to fit",
                    a.max_defect.max(b.max_defect)
                ));
                checks.push(Check::at_most(
                    format!("max defect ({label})"),
                    a.max_defect.max(b.max_defect),
                    1e-14,
                ));
            }
        }
        rows.push(json!({ "domain": label, "fits": [a, b] }));
    }
    Ok(outcome(plan, checks, notes, json!({ "domains": rows })))
}

fn skew_decay(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut rows = Vec::new();
    for (d, &tag) in domains.iter().zip(&plan.tags) {
        let n = d.n();
        let label = format!("{} {:?}", d.describe(), tag);
        let mut sups = Vec::new();
        let mut level_rows = Vec::new();
        let mut degenerate = true;
        let mut max_abs = 0.0f64;
        let levels: Vec<usize> = match tag {
            MetricTag::BoundarySzego => plan.resolutions.clone(),
            MetricTag::InteriorMcNeal => plan.layers.clone(),
        };
        for &lv in &levels {
            let (g, delta) = match tag {
                MetricTag::BoundarySzego => (build_boundary_grid(d, lv)?, None),
                MetricTag::InteriorMcNeal => {
                    let g = build_interior_grid(d, plan.angular, lv)?;
                    let bg = build_boundary_grid(d, if n == 1 { 256 } else { 16 })?;
                    let delta: Vec<f64> = g
                        .nodes
                        .par_iter()
                        .map(|z| dist_to_boundary(d, z, &bg))
                        .collect::<Result<_>>()?;
                    (g, Some(delta))
                }
            };
            let k = match tag {
                MetricTag::BoundarySzego => build_c_sharp(d, &g)?,
                MetricTag::InteriorMcNeal => build_bergman_main(d, &g)?,
            };
            let s = skew_part(&k, tag, n)?;
            let size = skew_size_check(&s, d, &g, delta.as_deref())?;
            degenerate &= size.decay.degenerate_zero;
            max_abs = max_abs.max(size.decay.max_abs);
            if let Some(slope) = size.decay.slope {
                checks.push(Check::at_least(
                    format!("decay slope ({label}, level {lv})"),
                    slope,
                    -s.target - 0.3,
                ));
            }
            sups.push(size.decay.sup_normalized);
            level_rows.push(json!({ "level": lv, "nodes": g.len(), "size": size }));
        }
        if degenerate {
            notes.push(format!("{label}: the skew part vanishes"));
            checks.push(Check::at_most(format!("max |A| ({label})"), max_abs, 1e-9));
        } else if sups.len() >= 2 {
            checks.push(Check::at_most(format!("normalized sup range ({label})"), ratio_range(&sups), 1.5));
        }
        rows.push(json!({ "domain": label, "levels": level_rows }));
    }
    Ok(outcome(plan, checks, notes, json!({ "domains": rows })))
}

/// Classical `A_p` supremum over every arc of consecutive nodes of a
/// circle grid (no quasi-metric involved).
pub fn arc_muckenhoupt(sigma: &[f64], weights: &[f64], p: f64) -> f64 {
    let n = sigma.len();
    let dual: Vec<f64> = sigma.iter().map(|s| s.powf(-1.0 / (p - 1.0))).collect();
    (0..n)
        .into_par_iter()
        .map(|a| {
            let (mut sw, mut s1, mut s2) = (0.0, 0.0, 0.0);
            let mut best = 0.0f64;
            for k in 0..n {
                let i = (a + k) % n;
                sw += weights[i];
                s1 += sigma[i] * weights[i];
                s2 += dual[i] * weights[i];
                best = best.max((s1 / sw) * (s2 / sw).powf(p - 1.0));
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Rows `(t, p, resolution, [σ], ‖S‖_σ)` of a weight sweep. Boundary tag:
/// reconstructed Szegő projection against `BoundaryPower` weights; interior
/// tag: reconstructed Bergman projection against `InteriorPower` weights
/// and the `B_p` family.
pub fn sweep(plan: &Plan) -> Result<Vec<SweepRow>> {
    let domains = check_domains(plan)?;
    sweep_on(plan, &domains)
}

fn sweep_on(plan: &Plan, domains: &[Domain]) -> Result<Vec<SweepRow>> {
    if plan.exponents.is_empty() || plan.p.is_empty() {
        return Err(Error::InvalidParameter("weight sweep needs exponents and p".into()));
    }
    let d = first_domain(domains, None, "sweep")?;
    let n = d.n();
    let tag = plan.tags.first().copied().unwrap_or(MetricTag::BoundarySzego);
    let levels = match tag {
        MetricTag::BoundarySzego => &plan.resolutions,
        MetricTag::InteriorMcNeal => &plan.layers,
    };
    let mut rows = Vec::new();
    for &lv in levels {
        let (g, bgrid) = match tag {
            MetricTag::BoundarySzego => (build_boundary_grid(d, lv)?, None),
            MetricTag::InteriorMcNeal => (
                build_interior_grid(d, plan.angular, lv)?,
                Some(build_boundary_grid(d, if n == 1 { 256 } else { 16 })?),
            ),
        };
        let k = match tag {
            MetricTag::BoundarySzego => build_cauchy_fantappie(d, &g)?,
            MetricTag::InteriorMcNeal => build_bergman_main(d, &g)?,
        };
        dump(plan, &format!("kernel-{lv}"), &k)?;
        let a = k.skew();
        let proj = Projection::new(&k, &a, ResolventMethod::Direct)?;
        let family = match tag {
            MetricTag::BoundarySzego => BallFamily::new(Metric::new(d, tag), &g, BallMode::Boundary, None, None)?,
            MetricTag::InteriorMcNeal => {
                BallFamily::new(Metric::new(d, tag), &g, BallMode::InteriorBp, bgrid.as_ref(), Some(400))?
            }
        };
        let z0 = d.boundary_point(&pt((1.0, 0.0), (0.0, 0.0)));
        for &t in &plan.exponents {
            let wf = match tag {
                MetricTag::BoundarySzego => WeightFamily::BoundaryPower {
                    zeta0: [(z0[0].re, z0[0].im), (z0[1].re, z0[1].im)],
                    t,
                },
                MetricTag::InteriorMcNeal => WeightFamily::InteriorPower { t },
            };
            let w = make_weight(d, &g, &wf, bgrid.as_ref())?;
            for &p in &plan.p {
                let constant = if p == 1.0 {
                    family.a1_ratio(&w.values)?
                } else {
                    family.muckenhoupt(&w.values, p)?.0
                };
                let nrm = weighted_operator_norm(&proj, &k.mu, &g.nodes, &w.values, p, plan.seed)?;
                rows.push(SweepRow {
                    t,
                    p,
                    resolution: lv,
                    nodes: g.len(),
                    weight_constant: constant,
                    norm_estimate: nrm.value,
                    certified: nrm.certified,
                });
            }
        }
    }
    Ok(rows)
}

fn weighted_sweep(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let rows = sweep_on(plan, domains)?;
    let d = first_domain(domains, None, "weighted-sweep")?;
    let tag = plan.tags.first().copied().unwrap_or(MetricTag::BoundarySzego);
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut oracle = Vec::new();
    let circle = tag == MetricTag::BoundarySzego && d.n() == 1;
    if circle {
        for &lv in &plan.resolutions {
            let g = build_boundary_grid(d, lv)?;
            if !matches!(g.layout, Layout::Circle { .. }) {
                continue;
            }
            let z0 = d.boundary_point(&pt((1.0, 0.0), (0.0, 0.0)));
            for &t in &plan.exponents {
                let wf = WeightFamily::BoundaryPower {
                    zeta0: [(z0[0].re, z0[0].im), (0.0, 0.0)],
                    t,
                };
                let w = make_weight(d, &g, &wf, None)?;
                for &p in plan.p.iter().filter(|p| **p > 1.0) {
                    let arc = arc_muckenhoupt(&w.values, &g.weights, p);
                    let fam = rows
                        .iter()
                        .find(|r| r.t == t && r.p == p && r.resolution == lv)
                        .map(|r| r.weight_constant)
                        .unwrap_or(f64::NAN);
                    oracle.push(json!({ "t": t, "p": p, "resolution": lv, "family": fam, "arcs": arc }));
                    checks.push(Check::at_most(
                        format!("|family/arcs − 1| (t={t}, p={p}, N={lv})"),
                        (fam / arc - 1.0).abs(),
                        0.1,
                    ));
                }
            }
        }
    } else {
        notes.push("arc cross-check only exists on circle grids".into());
    }
    // Classical threshold |s| < 1 with s = t/2 on the boundary.
    for &t in &plan.exponents {
        for &p in &plan.p {
            let series: Vec<&SweepRow> = rows.iter().filter(|r| r.t == t && r.p == p).collect();
            if series.len() < 2 {
                continue;
            }
            let c: Vec<f64> = series.iter().map(|r| r.weight_constant).collect();
            let s: Vec<f64> = series.iter().map(|r| r.norm_estimate).collect();
            let (gc, gs) = (growth(&c), growth(&s));
            let inside = t.abs() < 2.0;
            if inside {
                let mx = |g: &[f64]| g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                checks.push(Check::at_most(format!("max growth of [σ] (t={t}, p={p})"), mx(&gc), 1.2));
                checks.push(Check::at_most(format!("max growth of ‖S‖ (t={t}, p={p})"), mx(&gs), 1.2));
            } else if t.abs() > 2.0 {
                let mn = |g: &[f64]| g.iter().copied().fold(f64::INFINITY, f64::min);
                checks.push(Check::at_least(format!("min growth of [σ] (t={t}, p={p})"), mn(&gc), 2.0));
                checks.push(Check::at_least(format!("min growth of ‖S‖ (t={t}, p={p})"), mn(&gs), 2.0));
            }
        }
    }
    Ok(outcome(plan, checks, notes, json!({ "rows": rows, "arc_oracle": oracle })))
}

fn resolvent(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut rows = Vec::new();
    let mut cases: Vec<(&Domain, MetricTag)> = domains.iter().map(|d| (d, MetricTag::BoundarySzego)).collect();
    if !plan.layers.is_empty() {
        cases.extend(domains.iter().filter(|d| d.n() == 1).map(|d| (d, MetricTag::InteriorMcNeal)));
    }
    for (d, tag) in cases {
        let n = d.n();
        let (g, k) = match tag {
            MetricTag::BoundarySzego => {
                let npd = *plan
                    .resolutions
                    .get(n - 1)
                    .or(plan.resolutions.last())
                    .ok_or_else(|| Error::InvalidParameter("resolvent needs resolutions".into()))?;
                let g = build_boundary_grid(d, npd)?;
                let k = build_c_sharp(d, &g)?;
                (g, k)
            }
            MetricTag::InteriorMcNeal => {
                let g = build_interior_grid(d, plan.angular, plan.layers[0])?;
                let k = build_bergman_main(d, &g)?;
                (g, k)
            }
        };
        let s = skew_part(&k, tag, n)?;
        let b = random_vector(g.len(), plan.seed);
        let chk = neumann_check(&s.a, &b, 30, plan.seed)?;
        let label = format!("{} {:?}", d.describe(), tag);
        checks.push(Check::at_most(format!("direct residual ({label})"), chk.direct_residual, 1e-10));
        match chk.bound_holds {
            Some(ok) => checks.push(Check::holds(format!("Neumann bound for K<=30 ({label}, ν={:.3e})", chk.nu), ok)),
            None => notes.push(format!("{label}: ν = {:.3} ≥ 1, Neumann bound not applicable", chk.nu)),
        }
        rows.push(json!({ "case": label, "nodes": g.len(), "check": chk }));
    }
    Ok(outcome(plan, checks, notes, json!({ "cases": rows })))
}

fn improvement(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let d = first_domain(domains, None, "improvement")?;
    let p = plan.p.first().copied().unwrap_or(1.0);
    let mut rows = Vec::new();
    for &lv in &plan.resolutions {
        let g = build_boundary_grid(d, lv)?;
        let k = build_c_sharp(d, &g)?;
        let s = skew_part(&k, MetricTag::BoundarySzego, d.n())?;
        let r = improvement_check(
            &s.a,
            &g.weights,
            &g.nodes,
            MetricTag::BoundarySzego,
            d.n(),
            p,
            plan.epsilon,
            plan.samples,
            plan.seed,
        )?;
        rows.push((lv, r));
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.1.max_ratio).collect();
    let mut checks = vec![Check::at_most("drift of ‖Af‖_{p+ε}/‖f‖_p", ratio_range(&ratios), 1.3)];
    checks.push(Check::holds("ratios finite and positive", ratios.iter().all(|r| r.is_finite() && *r > 0.0)));
    let data: Vec<_> = rows.iter().map(|(lv, r)| json!({ "resolution": lv, "result": r })).collect();
    Ok(outcome(plan, checks, vec![], json!({ "domain": d.describe(), "levels": data })))
}

fn double_norm_split(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let d = first_domain(domains, None, "double-norm")?;
    let p = plan.p.first().copied().unwrap_or(2.0);
    let mut skew = Vec::new();
    let mut full = Vec::new();
    let mut nodes = Vec::new();
    for &lv in &plan.resolutions {
        let g = build_boundary_grid(d, lv)?;
        let k = build_c_sharp(d, &g)?;
        let a = k.skew();
        let ones = vec![1.0; g.len()];
        skew.push(double_norm(&a, &ones, p));
        full.push(double_norm(&k, &ones, p));
        nodes.push(g.len());
    }
    let increasing = full.len() >= 2 && full.windows(2).all(|w| w[1] > w[0]);
    let checks = vec![
        Check::at_most("skew double-norm range across refinements", ratio_range(&skew), 1.5),
        Check::holds("C♯ double-norm strictly increasing", increasing),
    ];
    Ok(outcome(
        plan,
        checks,
        vec![],
        json!({ "domain": d.describe(), "p": p, "nodes": nodes, "skew": skew, "c_sharp": full }),
    ))
}

fn reconstruct(plan: &Plan, domains: &[Domain]) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut reports = Vec::new();
    for (di, d) in domains.iter().enumerate() {
        let mut defects = Vec::new();
        for &lv in &plan.resolutions {
            let g = build_boundary_grid(d, lv)?;
            // The identity needs the reproducing operator C₁; C♯ alone is
            // not a projection off the ball.
            let k = build_cauchy_fantappie(d, &g)?;
            dump(plan, &format!("d{di}-cauchy-fantappie-{lv}"), &k)?;
            let s = skew_part(&k, MetricTag::BoundarySzego, d.n())?;
            let (_, rep) = reconstruct_projection(&k, &s.a, ResolventMethod::Direct, plan.seed)?;
            defects.push(rep.idempotence_defect);
            reports.push(ReconstructionReport {
                domain: d.describe(),
                grid: g.resolution.clone(),
                nodes: g.len(),
                skew_norm: rep.skew_norm,
                skew_max: s.a.max_abs(),
                condition_estimate: rep.condition_estimate,
                idempotence_defect: rep.idempotence_defect,
                self_adjointness_defect: rep.self_adjointness_defect,
                residuals: vec![],
            });
        }
        // Defects already at round-off have nothing left to decrease.
        let decreasing = defects.windows(2).all(|w| w[1] < w[0] || w[1] < 1e-12);
        checks.push(Check::holds(format!("‖P²−P‖ decreases under refinement ({})", d.describe()), decreasing));
        let shown: Vec<String> = defects.iter().map(|v| format!("{v:.3e}")).collect();
        notes.push(format!("{}: ‖P²−P‖ = {}", d.describe(), shown.join(", ")));
    }
    Ok(outcome(plan, checks, notes, json!({ "reconstructions": reports })))
}

/// Grid helper for callers that want the same boundary grid as an
/// experiment level.
pub fn boundary_grid(spec: &DomainSpec, n_per_dim: usize) -> Result<(Domain, Grid<f64>)> {
    let d = spec.build()?;
    let g = build_boundary_grid(&d, n_per_dim)?;
    Ok((d, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_specs_round_trip() {
        for s in ["ball 1", "ball 2", "ellipsoid 1 2", "perturbed 2 0.05 3 0.5"] {
            let d = DomainSpec::parse(s).unwrap();
            assert_eq!(d.label(), s);
            assert_eq!(DomainSpec::parse(&d.label()).unwrap(), d);
        }
        assert_eq!(DomainSpec::parse("perturbed 1").unwrap(), DomainSpec::perturbed(1));
        assert!(DomainSpec::parse("ball 3").is_err());
        assert!(DomainSpec::parse("torus 1").is_err());
    }

    #[test]
    fn kinds_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::parse(k.name()), Some(k));
        }
    }

    #[test]
    fn arc_supremum_of_constant_weight_is_one() {
        let s = vec![2.0; 50];
        let w = vec![0.1; 50];
        assert!((arc_muckenhoupt(&s, &w, 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_disk_szego_run() {
        let mut plan = Plan::new(ExperimentKind::DiskSzego, 3);
        plan.resolutions = vec![129];
        let o = run(&plan).unwrap();
        assert!(o.passed(), "{}", o.line());
    }

    #[test]
    fn coercivity_failure_is_reported() {
        let mut plan = Plan::new(ExperimentKind::Reconstruct, 1);
        plan.domains = vec![DomainSpec::parse("perturbed 2 0.18 3").unwrap()];
        assert!(matches!(run(&plan), Err(Error::FailedCoercivity { .. })));
    }
}
