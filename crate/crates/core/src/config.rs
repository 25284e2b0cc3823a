//! Experiment configuration, presets and the config-file grammar.
//!
//! Config files are TOML restricted to flat `key = value` pairs inside four
//! optional sections:
//!
//! ```toml
//! [experiment]
//! preset = "fig3"      # optional base preset, later keys override it
//! species = "na23"
//! sigma_x = 1e-6       # m
//! sigma_y = 1e-6       # m
//! l_x = 5e-3           # m, half horizontal slit separation
//! l_y = 1e-5           # m, half vertical slit separation
//! u_x = 20.0           # m/s
//! u_y = 0.0            # m/s
//! eta = -1.0           # entanglement parameter, default -1
//! y_left = -0.004      # m, signed height of the left screen
//! y_right = -0.08      # m, signed height of the right screen
//! x_split = 0.0        # m, boundary between left and right detectors
//!
//! [run]
//! n_events = 100000
//! seed = 2023
//! collapse = true
//! t_max = 0.5          # s, optional horizon
//!
//! [integrator]
//! rtol = 1e-9
//! atol = 1e-15         # m
//! dt_min = 1e-12       # s
//! max_knots = 2000
//!
//! [abr]
//! kappa = [0.333, 1.0, 3.0]   # in units of kappa0
//! n_grid = 4096
//! dt_factor = 2e-4            # grid step as a fraction of the fall time
//! horizon_factor = 5.0        # simulated time in fall times
//! backaction = true
//! ```
//!
//! Heights are signed and measured from the centre of the slit plane, so a
//! screen 4 mm below the slits is `y_left = -0.004`. Unknown keys are
//! rejected. The only environment override is `SEED`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{PhysicalConstants, Units};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IntegratorSettings {
    pub rtol: f64,
    /// m
    pub atol: f64,
    /// s
    pub dt_min: f64,
    pub max_knots: usize,
    pub full_resolution: bool,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            rtol: 1e-9,
            atol: 1e-15,
            dt_min: 1e-12,
            max_knots: 2000,
            full_resolution: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AbrSettings {
    /// Detector constants in units of kappa0.
    pub kappa: Vec<f64>,
    pub n_grid: usize,
    pub dt_factor: f64,
    pub horizon_factor: f64,
    /// m, far wall of the grid; derived from the packet spread when absent.
    pub y_far: Option<f64>,
    pub backaction: bool,
}

impl Default for AbrSettings {
    fn default() -> Self {
        AbrSettings {
            kappa: vec![1.0],
            n_grid: 4096,
            dt_factor: 2e-4,
            horizon_factor: 5.0,
            y_far: None,
            backaction: true,
        }
    }
}

/// One experiment, in SI units.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub species: String,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub l_x: f64,
    pub l_y: f64,
    pub u_x: f64,
    pub u_y: f64,
    pub eta: f64,
    pub y_left: f64,
    pub y_right: f64,
    pub x_split: f64,
    pub n_events: usize,
    pub seed: u64,
    pub collapse_enabled: bool,
    /// s
    pub t_max: Option<f64>,
    pub integrator: IntegratorSettings,
    pub abr: AbrSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: None,
            species: "na23".into(),
            sigma_x: 1e-6,
            sigma_y: 1e-6,
            l_x: 5e-3,
            l_y: 1e-5,
            u_x: 20.0,
            u_y: 0.0,
            eta: -1.0,
            y_left: -0.004,
            y_right: -0.08,
            x_split: 0.0,
            n_events: 10_000,
            seed: 2023,
            collapse_enabled: true,
            t_max: None,
            integrator: IntegratorSettings::default(),
            abr: AbrSettings::default(),
        }
    }
}

pub const PRESET_NAMES: &[&str] = &[
    "fig2",
    "fig3",
    "fig4",
    "fig5",
    "fig7",
    "fig7-near",
    "fig7-middle",
    "fig7-far",
];

/// Built-in setups for each figure of the study.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let base = ExperimentConfig {
        preset: Some(name.to_string()),
        n_events: 100_000,
        ..ExperimentConfig::default()
    };
    let cfg = match name {
        // eta sweep, left screen 4 mm below, right 8 cm below
        "fig2" => ExperimentConfig {
            species: "na23".into(),
            y_left: -0.004,
            ..base
        },
        // left-screen sweep at eta = -1
        "fig3" => ExperimentConfig {
            species: "na23".into(),
            eta: -1.0,
            y_left: -0.004,
            ..base
        },
        // mass sweep, screens at 1 mm and 8 cm
        "fig4" => ExperimentConfig {
            species: "cs133".into(),
            y_left: -0.001,
            ..base
        },
        // detector back-action: helium, both screens 40 um below the slit centre
        "fig5" => ExperimentConfig {
            species: "he4".into(),
            y_left: -40e-6,
            y_right: -40e-6,
            n_events: 10_000,
            abr: AbrSettings {
                kappa: vec![1.0 / 3.0, 1.0, 2.0, 3.0],
                ..AbrSettings::default()
            },
            ..base
        },
        "fig7" | "fig7-middle" => ExperimentConfig {
            species: "na23".into(),
            eta: 0.0,
            y_left: -0.004,
            ..base
        },
        "fig7-near" => ExperimentConfig {
            species: "na23".into(),
            eta: 0.0,
            y_left: -50e-6,
            ..base
        },
        "fig7-far" => ExperimentConfig {
            species: "na23".into(),
            eta: 0.0,
            y_left: -0.08,
            ..base
        },
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (known: {})", PRESET_NAMES.join(", ")),
            ))
        }
    };
    Ok(cfg)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    #[serde(default)]
    experiment: ExperimentSection,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    integrator: IntegratorSection,
    #[serde(default)]
    abr: AbrSection,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    preset: Option<String>,
    species: Option<String>,
    sigma_x: Option<f64>,
    sigma_y: Option<f64>,
    l_x: Option<f64>,
    l_y: Option<f64>,
    u_x: Option<f64>,
    u_y: Option<f64>,
    eta: Option<f64>,
    y_left: Option<f64>,
    y_right: Option<f64>,
    x_split: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunSection {
    n_events: Option<usize>,
    seed: Option<u64>,
    collapse: Option<bool>,
    t_max: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    rtol: Option<f64>,
    atol: Option<f64>,
    dt_min: Option<f64>,
    max_knots: Option<usize>,
    full_resolution: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AbrSection {
    kappa: Option<Vec<f64>>,
    n_grid: Option<usize>,
    dt_factor: Option<f64>,
    horizon_factor: Option<f64>,
    y_far: Option<f64>,
    backaction: Option<bool>,
}

macro_rules! apply {
    ($target:expr, $src:expr, $($field:ident),*) => {
        $( if let Some(v) = $src.$field { $target.$field = v; } )*
    };
}

/// Parse a config document. Defaults come from the named preset if the
/// `[experiment]` section has one, otherwise from [`ExperimentConfig::default`].
pub fn load_config(text: &str) -> Result<ExperimentConfig> {
    load_config_with_base(text, None)
}

/// As [`load_config`], falling back to the preset `base` when the document
/// names none.
pub fn load_config_with_base(text: &str, base: Option<&str>) -> Result<ExperimentConfig> {
    let doc: FileDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut cfg = match doc.experiment.preset.as_deref().or(base) {
        Some(name) => preset(name)?,
        None => ExperimentConfig::default(),
    };
    let e = doc.experiment;
    if let Some(s) = e.species {
        cfg.species = s;
    }
    apply!(cfg, e, sigma_x, sigma_y, l_x, l_y, u_x, u_y, eta, y_left, y_right, x_split);
    let r = doc.run;
    apply!(cfg, r, n_events, seed);
    if let Some(c) = r.collapse {
        cfg.collapse_enabled = c;
    }
    if r.t_max.is_some() {
        cfg.t_max = r.t_max;
    }
    let i = doc.integrator;
    apply!(cfg.integrator, i, rtol, atol, dt_min, max_knots, full_resolution);
    let a = doc.abr;
    apply!(cfg.abr, a, kappa, n_grid, dt_factor, horizon_factor, backaction);
    if a.y_far.is_some() {
        cfg.abr.y_far = a.y_far;
    }
    if let Ok(seed) = std::env::var("SEED") {
        cfg.seed = seed
            .trim()
            .parse()
            .map_err(|_| Error::config("seed", format!("SEED=`{seed}` is not an integer")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("integrator.rtol", self.integrator.rtol),
            ("integrator.atol", self.integrator.atol),
            ("integrator.dt_min", self.integrator.dt_min),
            ("abr.dt_factor", self.abr.dt_factor),
            ("abr.horizon_factor", self.abr.horizon_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive and finite, got {v}")));
            }
        }
        let finite = [
            ("l_x", self.l_x),
            ("l_y", self.l_y),
            ("u_x", self.u_x),
            ("u_y", self.u_y),
            ("y_left", self.y_left),
            ("y_right", self.y_right),
            ("x_split", self.x_split),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        if !(self.eta.abs() <= 1.0) {
            return Err(Error::config("eta", format!("|eta| must be <= 1, got {}", self.eta)));
        }
        if self.n_events < 1 {
            return Err(Error::config("n_events", "must be at least 1"));
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("t_max", format!("must be positive, got {t}")));
            }
        }
        if self.abr.n_grid < 256 {
            return Err(Error::config("abr.n_grid", "must be at least 256"));
        }
        if self.abr.kappa.is_empty() {
            return Err(Error::config("abr.kappa", "needs at least one value"));
        }
        for &k in &self.abr.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::config("abr.kappa", format!("kappa must be > 0, got {k}")));
            }
        }
        PhysicalConstants::default().mass_of(&self.species)?;
        let lowest = -self.l_y.abs();
        for (name, y) in [("y_left", self.y_left), ("y_right", self.y_right)] {
            if y >= lowest {
                log::warn!("{name} = {y} m is not below the lowest slit ({lowest} m)");
            }
        }
        Ok(())
    }

    /// Express the setup in internal units.
    pub fn to_internal_units(&self) -> Result<Setup> {
        self.to_internal_units_with(&PhysicalConstants::default())
    }

    pub fn to_internal_units_with(&self, c: &PhysicalConstants) -> Result<Setup> {
        let mass = c.mass_of(&self.species)?;
        Ok(Setup {
            hbar: Units::action_to_internal(c.hbar),
            g: Units::acceleration_to_internal(c.g),
            mass: Units::mass_to_internal(mass),
            sigma_x: Units::length_to_internal(self.sigma_x),
            sigma_y: Units::length_to_internal(self.sigma_y),
            l_x: Units::length_to_internal(self.l_x),
            l_y: Units::length_to_internal(self.l_y),
            u_x: Units::velocity_to_internal(self.u_x),
            u_y: Units::velocity_to_internal(self.u_y),
            eta: self.eta,
            y_left: Units::length_to_internal(self.y_left),
            y_right: Units::length_to_internal(self.y_right),
            x_split: Units::length_to_internal(self.x_split),
            t_max: self.t_max.map(Units::time_to_internal),
        })
    }
}

/// The experiment in internal units (μm, ms, 1e-27 kg).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Setup {
    pub hbar: f64,
    pub g: f64,
    pub mass: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub l_x: f64,
    pub l_y: f64,
    pub u_x: f64,
    pub u_y: f64,
    pub eta: f64,
    pub y_left: f64,
    pub y_right: f64,
    pub x_split: f64,
    pub t_max: Option<f64>,
}

impl Setup {
    /// Classical time for a packet starting at height `y0` with vertical
    /// velocity `vy` to fall to `y_screen`, or `None` if it never gets there.
    pub fn fall_time(&self, y0: f64, vy: f64, y_screen: f64) -> Option<f64> {
        crate::semiclassical::first_crossing_time(y0, vy, self.g, y_screen)
    }

    /// Longest classical fall over both slits and both screens.
    pub fn longest_fall(&self) -> f64 {
        let mut t: f64 = 0.0;
        for y0 in [self.l_y, -self.l_y] {
            for vy in [self.u_y, -self.u_y] {
                for ys in [self.y_left, self.y_right] {
                    if let Some(tf) = self.fall_time(y0, vy, ys) {
                        t = t.max(tf);
                    }
                }
            }
        }
        t
    }

    /// Integration horizon: explicit `t_max` or three times the longest fall.
    pub fn horizon(&self) -> f64 {
        self.t_max.unwrap_or_else(|| {
            let t = self.longest_fall();
            if t > 0.0 {
                3.0 * t
            } else {
                1e3
            }
        })
    }

    pub fn to_si_velocity(&self, v: f64) -> f64 {
        Units::velocity_to_si(v)
    }
}
