//! Experiment configs: TOML with a fixed set of sections. Anything left out
//! falls back to the experiment's acceptance defaults; the seed never does.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use kslab::experiments::{DomainSpec, ExperimentKind, Plan};
use kslab::metric::MetricTag;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    experiment: RawExperiment,
    #[serde(default)]
    domain: RawDomain,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    metric: RawMetric,
    #[serde(default)]
    weights: RawWeights,
    #[serde(default)]
    options: RawOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    kind: String,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    specs: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    resolutions: Option<Vec<usize>>,
    layers: Option<Vec<usize>>,
    angular: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    tags: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    exponents: Option<Vec<f64>>,
    p: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptions {
    epsilon: Option<f64>,
    samples: Option<usize>,
}

/// A parsed config together with the hash of its bytes.
pub struct Config {
    pub plan: Plan,
    pub hash: String,
}

fn parse_tag(s: &str) -> Result<MetricTag> {
    match s {
        "boundary" => Ok(MetricTag::BoundarySzego),
        "interior" => Ok(MetricTag::InteriorMcNeal),
        _ => bail!("unknown metric tag {s:?} (expected \"boundary\" or \"interior\")"),
    }
}

pub fn load(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Config> {
    let raw: Raw = toml::from_str(text).context("parsing config")?;
    let kind = ExperimentKind::parse(&raw.experiment.kind)
        .with_context(|| format!("unknown experiment kind {:?}", raw.experiment.kind))?;
    let Some(seed) = raw.experiment.seed else {
        bail!("[experiment] seed is mandatory");
    };
    let mut plan = Plan::new(kind, seed);
    if let Some(specs) = raw.domain.specs {
        plan.domains = specs
            .iter()
            .map(|s| DomainSpec::parse(s).map_err(anyhow::Error::from))
            .collect::<Result<_>>()?;
    }
    if let Some(v) = raw.grid.resolutions {
        plan.resolutions = v;
    }
    if let Some(v) = raw.grid.layers {
        plan.layers = v;
    }
    if let Some(v) = raw.grid.angular {
        plan.angular = v;
    }
    if let Some(tags) = raw.metric.tags {
        plan.tags = tags.iter().map(|t| parse_tag(t)).collect::<Result<_>>()?;
    }
    if let Some(v) = raw.weights.exponents {
        plan.exponents = v;
    }
    if let Some(v) = raw.weights.p {
        plan.p = v;
    }
    if let Some(v) = raw.options.epsilon {
        plan.epsilon = v;
    }
    if let Some(v) = raw.options.samples {
        plan.samples = v;
    }
    check(&plan)?;
    Ok(Config {
        plan,
        hash: Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// Shape rules that can be decided before any numerics run.
fn check(plan: &Plan) -> Result<()> {
    use ExperimentKind::*;
    if plan.domains.is_empty() {
        bail!("[domain] specs is empty");
    }
    if plan.tags.is_empty() {
        bail!("[metric] tags is empty");
    }
    let trend = |what: &str, v: &[usize]| -> Result<()> {
        if v.len() < 2 {
            bail!("{} needs at least two {what} for its refinement trend", plan.kind.name());
        }
        Ok(())
    };
    match plan.kind {
        BallMonomials | Improvement | DoubleNorm | Reconstruct => trend("resolutions", &plan.resolutions)?,
        WeightedSweep => {
            match plan.tags[0] {
                MetricTag::BoundarySzego => trend("resolutions", &plan.resolutions)?,
                MetricTag::InteriorMcNeal => trend("layers", &plan.layers)?,
            }
            if plan.exponents.is_empty() || plan.p.is_empty() {
                bail!("weighted-sweep needs [weights] exponents and p");
            }
        }
        SkewDecay => {
            if plan.tags.contains(&MetricTag::BoundarySzego) {
                trend("resolutions", &plan.resolutions)?;
            }
            if plan.tags.contains(&MetricTag::InteriorMcNeal) {
                trend("layers", &plan.layers)?;
            }
        }
        _ => {}
    }
    if plan.p.iter().any(|p| *p < 1.0) {
        bail!("p must be at least 1");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse("[experiment]\nkind = \"disk-szego\"\nseed = 4\n").unwrap();
        assert_eq!(c.plan.seed, 4);
        assert_eq!(c.plan.resolutions, vec![1024]);
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn seed_is_mandatory() {
        let e = parse("[experiment]\nkind = \"disk-szego\"\n").err().unwrap();
        assert!(e.to_string().contains("seed"));
    }

    #[test]
    fn trend_needs_two_levels() {
        let text = "[experiment]\nkind = \"double-norm\"\nseed = 1\n[grid]\nresolutions = [128]\n";
        assert!(parse(text).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("[experiment]\nkind = \"disk-szego\"\nseed = 1\nsede = 2\n").is_err());
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
[experiment]
kind = "weighted-sweep"
seed = 9
[domain]
specs = ["perturbed 1 0.05 3"]
[grid]
resolutions = [64, 128]
[metric]
tags = ["boundary"]
[weights]
exponents = [0.0, 1.0]
p = [2.0, 3.0]
"#;
        let c = parse(text).unwrap();
        assert_eq!(c.plan.domains, vec![DomainSpec::perturbed(1)]);
        assert_eq!(c.plan.p, vec![2.0, 3.0]);
    }
}
