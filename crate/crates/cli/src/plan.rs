//! Resolved run plans and the manifest that records them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use arrival_core::output::{content_hash, OutputFile};
use arrival_core::{load_config_with_base, preset, Error, ExperimentConfig, Result};

use crate::Common;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Run,
    Abr,
    Semi,
}

/// One fully resolved configuration and the tag its files carry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlannedRun {
    pub tag: String,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Plan {
    pub command: Command,
    pub runs: Vec<PlannedRun>,
    pub trajectories: usize,
}

impl Plan {
    pub fn from_args(command: Command, c: &Common, kappa: Option<&[f64]>, no_backaction: bool) -> Result<Plan> {
        let mut base = match (&c.config, &c.preset) {
            (Some(path), p) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                load_config_with_base(&text, p.as_deref())?
            }
            (None, Some(p)) => preset(p)?,
            (None, None) => ExperimentConfig::default(),
        };
        if let Some(s) = c.seed {
            base.seed = s;
        }
        if let Some(n) = c.events {
            base.n_events = n;
        }
        if let Some(s) = &c.species {
            base.species = s.clone();
        }
        if c.no_collapse {
            base.collapse_enabled = false;
        }
        if let Some(k) = kappa {
            base.abr.kappa = k.to_vec();
        }
        if no_backaction {
            base.abr.backaction = false;
        }
        let name = base.preset.clone().unwrap_or_else(|| "run".into());
        let runs = match &c.sweep {
            None => vec![PlannedRun {
                tag: name,
                config: base,
            }],
            Some(s) => sweep(&base, s)?,
        };
        for r in &runs {
            r.config.validate()?;
        }
        Ok(Plan {
            command,
            runs,
            trajectories: c.trajectories,
        })
    }
}

/// Expand `key=v1,v2,...` into one run per value.
fn sweep(base: &ExperimentConfig, spec: &str) -> Result<Vec<PlannedRun>> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::config("sweep", format!("expected key=v1,v2,..., got `{spec}`")))?;
    let key = key.trim();
    let mut runs = Vec::new();
    for raw in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let mut cfg = base.clone();
        set_value(&mut cfg, key, raw)?;
        runs.push(PlannedRun {
            tag: format!("{key}_{}", sanitize(raw)),
            config: cfg,
        });
    }
    if runs.is_empty() {
        return Err(Error::config("sweep", "no values"));
    }
    Ok(runs)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '+') { c } else { '_' })
        .collect()
}

fn set_value(cfg: &mut ExperimentConfig, key: &str, raw: &str) -> Result<()> {
    let number = || -> Result<f64> {
        raw.parse::<f64>()
            .map_err(|_| Error::config("sweep", format!("`{raw}` is not a number")))
    };
    match key {
        "species" => cfg.species = raw.to_string(),
        "eta" => cfg.eta = number()?,
        "u_x" => cfg.u_x = number()?,
        "u_y" => cfg.u_y = number()?,
        "seed" => cfg.seed = number()? as u64,
        "y_left" => cfg.y_left = length(raw)?,
        "y_right" => cfg.y_right = length(raw)?,
        "x_split" => cfg.x_split = length(raw)?,
        "sigma_x" => cfg.sigma_x = length(raw)?,
        "sigma_y" => cfg.sigma_y = length(raw)?,
        "l_x" => cfg.l_x = length(raw)?,
        "l_y" => cfg.l_y = length(raw)?,
        other => return Err(Error::config("sweep", format!("cannot sweep `{other}`"))),
    }
    Ok(())
}

/// A length in metres; `mm`, `cm`, `um`, `μm`, `nm` and `m` suffixes are
/// accepted.
pub fn length(raw: &str) -> Result<f64> {
    let units = [("mm", 1e-3), ("cm", 1e-2), ("um", 1e-6), ("μm", 1e-6), ("nm", 1e-9), ("m", 1.0)];
    let (num, scale) = units
        .iter()
        .find_map(|(suffix, f)| raw.strip_suffix(suffix).map(|n| (n, *f)))
        .unwrap_or((raw, 1.0));
    num.trim()
        .parse::<f64>()
        .map(|v| v * scale)
        .map_err(|_| Error::config("sweep", format!("`{raw}` is not a length")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub plan: Plan,
    /// content hash of the serialized plan
    pub input_hash: String,
    pub seeds: Vec<u64>,
    pub versions: Versions,
    pub wall_clock_s: f64,
    pub outputs: Vec<OutputFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Versions {
    pub arrival_core: String,
    pub arrival_cli: String,
}

impl RunManifest {
    pub fn new(plan: &Plan, wall_clock_s: f64, outputs: &[OutputFile]) -> Result<Self> {
        let bytes = serde_json::to_vec(plan)?;
        Ok(RunManifest {
            plan: plan.clone(),
            input_hash: content_hash(&bytes),
            seeds: plan.runs.iter().map(|r| r.config.seed).collect(),
            versions: Versions {
                arrival_core: arrival_core::VERSION.to_string(),
                arrival_cli: env!("CARGO_PKG_VERSION").to_string(),
            },
            wall_clock_s,
            outputs: outputs.to_vec(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        for r in &m.plan.runs {
            r.config.validate()?;
        }
        Ok(m)
    }
}
