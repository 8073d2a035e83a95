//! Run configuration and the resolution of `"auto"`/`"max"` placeholders.

use std::path::Path;

use serde::{Deserialize, Serialize};

use robsynth_core::model::{MaskKind, SystemSpec};
use robsynth_core::robustness::{self, RobustnessBound};
use robsynth_core::simulator::{IntegratorConfig, SimMode};
use robsynth_core::synthesis::{a0_max, Gramians, SynthesisArtifacts};
use robsynth_core::{CanonicalSystem, PerturbationSpec};

use crate::Failure;

/// A number or a keyword (`"auto"` for `c`, `"max"` for `a0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Choice {
    Value(f64),
    Keyword(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepConfig {
    /// Multiply the configured perturbation by each factor.
    Scale(Vec<f64>),
    /// Random admissible realizations at the configured bound.
    Random {
        count: usize,
        #[serde(default = "default_density")]
        density: f64,
    },
}

fn default_density() -> f64 {
    0.7
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub gamma: f64,
    #[serde(default)]
    pub c: Option<Choice>,
    #[serde(default)]
    pub a0: Option<Choice>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }
}

/// Echoed in every report.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub gamma: f64,
    pub c: f64,
    pub c_source: &'static str,
    pub a0: f64,
    pub a0_source: &'static str,
    pub a0_max: f64,
    /// Certified margin for the configured mask at `c`; `null` when unbounded.
    #[serde(rename = "Delta")]
    pub delta: Option<f64>,
    #[serde(rename = "Delta_declared")]
    pub delta_declared: f64,
    pub bound_mode: robustness::BoundMode,
    pub seed: u64,
}

pub struct Resolved {
    pub system: CanonicalSystem,
    pub perturbation: PerturbationSpec,
    pub artifacts: SynthesisArtifacts,
    pub bound: RobustnessBound,
    pub provenance: Provenance,
    pub notes: Vec<String>,
}

pub fn provenance(
    artifacts: &SynthesisArtifacts,
    perturbation: &PerturbationSpec,
    bound: &RobustnessBound,
    sources: (&'static str, &'static str),
    seed: u64,
) -> Provenance {
    Provenance {
        tool: "robsynth",
        version: env!("CARGO_PKG_VERSION"),
        gamma: artifacts.gamma(),
        c: artifacts.c(),
        c_source: sources.0,
        a0: artifacts.a0(),
        a0_source: sources.1,
        a0_max: artifacts.a0_max(),
        delta: bound.delta.is_finite().then_some(bound.delta),
        delta_declared: perturbation.bound(),
        bound_mode: bound.mode,
        seed,
    }
}

pub fn resolve(cfg: &RunConfig, seed: Option<u64>) -> Result<Resolved, Failure> {
    if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
        return Err(Failure::config(format!("gamma: must lie in (0,1), got {}", cfg.gamma)));
    }
    cfg.integrator
        .validate()
        .map_err(|e| Failure::config(format!("integrator: {e}")))?;
    let (system, perturbation) = cfg
        .system
        .build()
        .map_err(|e| Failure::config(format!("system: {e}")))?;
    let gamma = cfg.gamma;
    let gramians = Gramians::new(system.blocks()).map_err(|e| Failure::config(format!("system.blocks: {e}")))?;
    let mask = perturbation.mask();
    let declared = perturbation.bound();
    let n1 = system.blocks().largest();
    let mut notes = Vec::new();

    let (c, c_source) = match &cfg.c {
        Some(Choice::Value(v)) => {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(Failure::config(format!("c: must be a positive number, got {v}")));
            }
            (*v, "explicit")
        }
        None => (auto_c(&gramians, mask, gamma, declared, n1)?, "auto"),
        Some(Choice::Keyword(k)) if k == "auto" => (auto_c(&gramians, mask, gamma, declared, n1)?, "auto"),
        Some(Choice::Keyword(k)) => {
            return Err(Failure::config(format!("c: expected \"auto\" or a number, got \"{k}\"")))
        }
    };
    let limit = a0_max(&gramians, &system, c);
    let (a0, a0_source) = match &cfg.a0 {
        Some(Choice::Value(v)) => {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(Failure::config(format!("a0: must be a positive number, got {v}")));
            }
            if *v > limit {
                return Err(Failure::domain(format!("a0 = {v} exceeds a0_max(c = {c}) = {limit}")));
            }
            (*v, "explicit")
        }
        None => (limit, "max"),
        Some(Choice::Keyword(k)) if k == "max" => (limit, "max"),
        Some(Choice::Keyword(k)) => {
            return Err(Failure::config(format!("a0: expected \"max\" or a number, got \"{k}\"")))
        }
    };
    let artifacts = SynthesisArtifacts::with_gramians(gramians, &system, c, gamma, Some(a0))?;
    let bound = RobustnessBound::margin(artifacts.gramians(), mask, gamma, c)?;
    if mask.kind() == MaskKind::General && c < 1.0 && !mask.is_empty() {
        notes.push(format!(
            "general-mode margin is derived for level sets with c >= 1; resolved c = {c}"
        ));
    }
    if declared > bound.delta {
        notes.push(format!(
            "declared perturbation bound {declared} exceeds the certified margin {}",
            bound.delta
        ));
    }
    if mask.is_empty() {
        notes.push("perturbation mask is empty: Delta is unbounded".into());
    }
    if system.blocks().sizes() == [1] {
        notes.push("scalar case: F = 2, F1 = 4, Theta(x) = |x|/sqrt(a0)".into());
    }
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let provenance = provenance(&artifacts, &perturbation, &bound, (c_source, a0_source), seed);
    Ok(Resolved {
        system,
        perturbation,
        artifacts,
        bound,
        provenance,
        notes,
    })
}

/// General masks with a nonzero bound take the largest level set the margin
/// certifies; otherwise the unit level set.
fn auto_c(
    gramians: &Gramians,
    mask: &robsynth_core::PerturbationMask,
    gamma: f64,
    declared: f64,
    n1: usize,
) -> Result<f64, Failure> {
    if mask.kind() != MaskKind::General || declared == 0.0 || mask.is_empty() {
        return Ok(1.0);
    }
    let rho = RobustnessBound::margin(gramians, mask, gamma, 1.0)?.rho_gtilde;
    Ok(robustness::domain_radius(gamma, declared, rho, n1)?)
}
